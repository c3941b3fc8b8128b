"""Run a frozen pretrained encoder over a stance dataset and build the store.

Joint mode encodes each example's document and topic as one sentence pair
and splits the hidden states back into the two sides (special tokens
dropped). Separate mode encodes each unique document and each unique topic
once. Token strings in the store are the encoder's subword tokens.
"""

from __future__ import annotations

import inspect
import json
from dataclasses import dataclass, field

import numpy as np

from . import store as store_format


class EncoderLoadError(Exception):
    """The requested encoder could not be loaded."""


class SequenceOverflow(Warning):
    """An input exceeded a length cap and was truncated."""


MAX_DOC_TOKENS = 200
MAX_TOPIC_TOKENS = 5


@dataclass
class ExportJob:
    dataset_path: str
    encoder: str
    out_path: str
    modes: tuple[str, ...] = ("joint", "separate")
    batch_size: int = 8
    max_doc_tokens: int = MAX_DOC_TOKENS
    max_topic_tokens: int = MAX_TOPIC_TOKENS

    def __post_init__(self) -> None:
        bad = [m for m in self.modes if m not in ("joint", "separate")]
        if bad:
            raise ValueError(f"unknown modes {bad}")


@dataclass
class DatasetRow:
    example_id: str
    doc_id: str
    document: str
    topic_key: str


def read_rows(path: str) -> list[DatasetRow]:
    rows: list[DatasetRow] = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                record = json.loads(line)
                rows.append(
                    DatasetRow(
                        example_id=str(record["example_id"]),
                        doc_id=str(record["doc_id"]),
                        document=str(record["document"]),
                        topic_key=" ".join(str(t) for t in record["topic_tokens"]),
                    )
                )
            except (KeyError, ValueError, TypeError, json.JSONDecodeError) as exc:
                raise ValueError(f"{path}:{lineno}: {exc}") from exc
    return rows


class FrozenEncoder:
    """Pretrained transformer held in eval mode with gradients disabled."""

    def __init__(self, name_or_path: str):
        try:
            import torch
            from transformers import AutoModel, AutoTokenizer
        except ImportError as exc:  # pragma: no cover - environment guard
            raise EncoderLoadError(f"torch/transformers unavailable: {exc}") from exc
        try:
            from transformers.utils import logging as hf_logging

            hf_logging.disable_progress_bar()
        except Exception:
            pass
        try:
            self.tokenizer = AutoTokenizer.from_pretrained(name_or_path)
            self.model = AutoModel.from_pretrained(name_or_path)
        except Exception as exc:
            raise EncoderLoadError(f"cannot load encoder {name_or_path!r}: {exc}") from exc
        self.torch = torch
        self.model.eval()
        for param in self.model.parameters():
            param.requires_grad_(False)
        self.dim = int(self.model.config.hidden_size)
        self._accepts_token_types = (
            "token_type_ids" in inspect.signature(self.model.forward).parameters
            and getattr(self.model.config, "type_vocab_size", 0) > 1
        )
        self.cls_id = self.tokenizer.cls_token_id
        self.sep_id = self.tokenizer.sep_token_id
        self.pad_id = self.tokenizer.pad_token_id or 0
        if self.cls_id is None or self.sep_id is None:
            raise EncoderLoadError(f"encoder {name_or_path!r} lacks [CLS]/[SEP] tokens")

    def subwords(self, text: str, cap: int, warnings: list[str], what: str) -> list[str]:
        tokens = self.tokenizer.tokenize(text)
        if not tokens:
            tokens = [self.tokenizer.unk_token or "[UNK]"]
        if len(tokens) > cap:
            warnings.append(f"{what}: {len(tokens)} tokens truncated to {cap}")
            tokens = tokens[:cap]
        return tokens

    def encode_batch(
        self, batch: list[tuple[list[int], list[int]]]
    ) -> list[np.ndarray]:
        """Hidden states for [CLS] a [SEP] (+ b [SEP]) inputs, unpadded rows."""
        torch = self.torch
        sequences = []
        type_ids = []
        for first, second in batch:
            ids = [self.cls_id] + first + [self.sep_id]
            types = [0] * len(ids)
            if second:
                ids += second + [self.sep_id]
                types += [1] * (len(second) + 1)
            sequences.append(ids)
            type_ids.append(types)
        width = max(len(ids) for ids in sequences)
        input_ids = torch.full((len(sequences), width), self.pad_id, dtype=torch.long)
        attention = torch.zeros((len(sequences), width), dtype=torch.long)
        token_types = torch.zeros((len(sequences), width), dtype=torch.long)
        for i, (ids, types) in enumerate(zip(sequences, type_ids)):
            input_ids[i, : len(ids)] = torch.tensor(ids, dtype=torch.long)
            attention[i, : len(ids)] = 1
            token_types[i, : len(types)] = torch.tensor(types, dtype=torch.long)
        kwargs = {"input_ids": input_ids, "attention_mask": attention}
        if self._accepts_token_types:
            kwargs["token_type_ids"] = token_types
        with torch.no_grad():
            hidden = self.model(**kwargs).last_hidden_state
        return [
            hidden[i, : len(sequences[i])].cpu().numpy().astype(np.float32)
            for i in range(len(sequences))
        ]


def export(job: ExportJob) -> list[str]:
    """Build and write the store; returns accumulated warnings."""
    rows = read_rows(job.dataset_path)
    encoder = FrozenEncoder(job.encoder)
    warnings: list[str] = []
    out = store_format.Store(dim=encoder.dim)

    doc_tokens: dict[str, list[str]] = {}
    topic_tokens: dict[str, list[str]] = {}
    for row in rows:
        if row.doc_id not in doc_tokens:
            doc_tokens[row.doc_id] = encoder.subwords(
                row.document, job.max_doc_tokens, warnings, f"document {row.doc_id}"
            )
        if row.topic_key not in topic_tokens:
            topic_tokens[row.topic_key] = encoder.subwords(
                row.topic_key, job.max_topic_tokens, warnings, f"topic {row.topic_key!r}"
            )

    to_ids = encoder.tokenizer.convert_tokens_to_ids

    if "joint" in job.modes:
        for start in range(0, len(rows), job.batch_size):
            chunk = rows[start : start + job.batch_size]
            batch = [
                (to_ids(doc_tokens[r.doc_id]), to_ids(topic_tokens[r.topic_key]))
                for r in chunk
            ]
            hidden = encoder.encode_batch(batch)
            for r, states in zip(chunk, hidden):
                n_doc = len(doc_tokens[r.doc_id])
                n_topic = len(topic_tokens[r.topic_key])
                doc_states = states[1 : 1 + n_doc]
                topic_states = states[2 + n_doc : 2 + n_doc + n_topic]
                out.joint[r.example_id] = (
                    store_format.Sequence(list(topic_tokens[r.topic_key]), topic_states),
                    store_format.Sequence(list(doc_tokens[r.doc_id]), doc_states),
                )

    if "separate" in job.modes:
        for table, target in ((doc_tokens, out.sep_docs), (topic_tokens, out.sep_topics)):
            keys = sorted(table)
            for start in range(0, len(keys), job.batch_size):
                chunk = keys[start : start + job.batch_size]
                hidden = encoder.encode_batch([(to_ids(table[k]), []) for k in chunk])
                for key, states in zip(chunk, hidden):
                    target[key] = store_format.Sequence(
                        list(table[key]), states[1 : 1 + len(table[key])]
                    )

    store_format.write(out, job.out_path)
    return warnings
