"""Zero-shot stance detection toolkit.

Pipeline stages: dataset construction (corpus, topicx), embedding storage
and pooled vectors (embed), clustered generalized topic representations
(gtr), the attention classifier head and baselines (model, baselines,
hpsearch), and evaluation/analysis (evaluate). The cli module chains them.
"""

__version__ = "0.1.0"
