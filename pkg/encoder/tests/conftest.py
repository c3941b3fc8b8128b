import json
import os

import pytest

os.environ.setdefault("HF_HUB_OFFLINE", "1")
os.environ.setdefault("TRANSFORMERS_OFFLINE", "1")
os.environ.setdefault("TRANSFORMERS_VERBOSITY", "error")

WORDS = [
    "gun", "control", "tax", "break", "school", "lunch", "climate", "policy",
    "wage", "floor", "prison", "reform", "solar", "grid", "housing", "rent",
    "the", "and", "about", "debate", "comment", "people", "city", "law",
]


@pytest.fixture(scope="session")
def tiny_encoder_dir(tmp_path_factory):
    """A small randomly initialized transformer saved locally, so the export
    path exercises the real pretrained-model loading machinery offline."""
    import torch
    from transformers import BertConfig, BertModel, BertTokenizerFast
    from transformers.utils import logging as hf_logging

    hf_logging.disable_progress_bar()
    model_dir = tmp_path_factory.mktemp("tiny-encoder")
    vocab = ["[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]"] + WORDS
    vocab_file = model_dir / "vocab.txt"
    vocab_file.write_text("\n".join(vocab) + "\n")
    tokenizer = BertTokenizerFast(vocab_file=str(vocab_file), do_lower_case=True)
    config = BertConfig(
        vocab_size=len(vocab),
        hidden_size=16,
        num_hidden_layers=2,
        num_attention_heads=2,
        intermediate_size=32,
        max_position_embeddings=256,
    )
    torch.manual_seed(0)
    model = BertModel(config)
    model.save_pretrained(str(model_dir))
    tokenizer.save_pretrained(str(model_dir))
    return str(model_dir)


@pytest.fixture(scope="session")
def corpus_path(tmp_path_factory):
    """20 examples in the primary dataset format; one document appears in
    three examples, so separate-entry uniqueness is observable."""
    rows = []
    topics = [
        ("gun", "control"), ("tax", "break"), ("school", "lunch"),
        ("climate", "policy"), ("wage", "floor"), ("prison", "reform"),
        ("solar", "grid"), ("housing", "rent"),
    ]

    def add(example_id, doc_id, document, topic, label=1, kind="Heur"):
        rows.append(
            {
                "example_id": example_id,
                "doc_id": doc_id,
                "document": document,
                "topic_raw": " ".join(topic),
                "topic_tokens": list(topic),
                "label": label,
                "kind": kind,
                "sarcasm": False,
            }
        )

    # doc0 participates in three examples
    add("ex00", "doc0", "the people debate gun control and the law", topics[0])
    add("ex01", "doc0", "the people debate gun control and the law", topics[1], label=0)
    add("ex02", "doc0", "the people debate gun control and the law", topics[2], label=2,
        kind="SynthNeutral")
    for i in range(3, 20):
        topic = topics[i % len(topics)]
        add(
            f"ex{i:02d}",
            f"doc{i}",
            f"comment about {' '.join(topic)} and the city",
            topic,
            label=i % 3,
            kind="SynthNeutral" if i % 3 == 2 else "Heur",
        )
    path = tmp_path_factory.mktemp("corpus") / "dataset.jsonl"
    with open(path, "w", encoding="utf-8") as fh:
        for row in rows:
            fh.write(json.dumps(row) + "\n")
    return str(path)
