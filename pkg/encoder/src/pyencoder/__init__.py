"""Frozen-encoder embedding exporter.

Reads the stance toolkit's line-delimited dataset format, runs a frozen
pretrained encoder in joint (sentence-pair) and separate modes, and writes
the toolkit's "TGAE" binary embedding store.
"""

__version__ = "0.1.0"
