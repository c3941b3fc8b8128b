"""Embedding store, pooled vectors, static word vectors, and the stub encoder."""

from __future__ import annotations

import struct
from collections import Counter
from dataclasses import dataclass, field
from hashlib import blake2b
from math import log
from typing import Iterable, NamedTuple, Sequence

import numpy as np

from .errors import (
    BadMagic,
    DimMismatch,
    EmptyCorpus,
    EmptySequence,
    MalformedRecord,
    NoVocabOverlap,
    TruncatedFile,
    VersionMismatch,
    ZeroVector,
)

MAX_DOC_TOKENS = 200
MAX_TOPIC_TOKENS = 5

STORE_MAGIC = b"TGAE"
STORE_VERSION = 1


@dataclass(frozen=True)
class TokenSequenceEmbedding:
    """An ordered token sequence with one embedding row per token."""

    tokens: tuple[str, ...]
    vectors: np.ndarray  # (len(tokens), E) float32

    def __post_init__(self) -> None:
        if self.vectors.ndim != 2 or self.vectors.shape[0] != len(self.tokens):
            raise DimMismatch(
                f"{len(self.tokens)} tokens vs vector matrix {self.vectors.shape}"
            )
        self.vectors.setflags(write=False)

    def __len__(self) -> int:
        return len(self.tokens)

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]


@dataclass
class EmbeddingStore:
    """Joint (conditioned) and separate token embeddings for a dataset.

    ``joint`` maps example_id -> (topic sequence, document sequence);
    ``sep_docs``/``sep_topics`` map doc_id / topic_key to one sequence each.
    Read-only after construction.
    """

    dim: int
    joint: dict[str, tuple[TokenSequenceEmbedding, TokenSequenceEmbedding]] = field(
        default_factory=dict
    )
    sep_docs: dict[str, TokenSequenceEmbedding] = field(default_factory=dict)
    sep_topics: dict[str, TokenSequenceEmbedding] = field(default_factory=dict)
    warnings: list[str] = field(default_factory=list)


@dataclass(frozen=True)
class WordVectors:
    dim: int
    table: dict[str, np.ndarray]


@dataclass(frozen=True)
class TfIdfModel:
    doc_count: int
    doc_freq: dict[str, int]

    def weight(self, token: str, tf: int) -> float:
        # smoothed idf, always >= 1 for tf >= 1
        df = self.doc_freq.get(token, 0)
        return tf * (log((1 + self.doc_count) / (1 + df)) + 1.0)


def tfidf_fit(docs: Sequence[Sequence[str]]) -> TfIdfModel:
    """Count document frequencies over unique tokens per document."""
    if not docs:
        raise EmptyCorpus("tf-idf fit needs at least one document")
    df: Counter[str] = Counter()
    for doc in docs:
        df.update(set(doc))
    return TfIdfModel(doc_count=len(docs), doc_freq=dict(df))


def doc_vector(seq: TokenSequenceEmbedding, model: TfIdfModel) -> np.ndarray:
    """tf-idf weighted average of token embeddings, weights summing to 1."""
    if len(seq) == 0:
        raise EmptySequence("document sequence is empty")
    tf = Counter(seq.tokens)
    weights = np.array([model.weight(tok, tf[tok]) for tok in seq.tokens], dtype=np.float64)
    total = weights.sum()
    if total <= 0.0:
        weights = np.full(len(seq), 1.0 / len(seq))  # degenerate input: uniform fallback
    else:
        weights = weights / total
    return weights @ seq.vectors.astype(np.float64)


def topic_vector(seq: TokenSequenceEmbedding) -> np.ndarray:
    """Unweighted mean of token embeddings."""
    if len(seq) == 0:
        raise EmptySequence("topic sequence is empty")
    return seq.vectors.astype(np.float64).mean(axis=0)


def pair_vector(v_d: np.ndarray, v_t: np.ndarray) -> np.ndarray:
    """Concatenate document and topic vectors, document half first."""
    if v_d.shape != v_t.shape:
        raise DimMismatch(f"{v_d.shape} vs {v_t.shape}")
    return np.concatenate([v_d, v_t])


# --- binary store format ----------------------------------------------------
#
# "TGAE" | u32 version | u32 dim | joint section | sep_docs | sep_topics
# section: u32 entry count, entries sorted by key
# joint entry: key | sequence block (topic) | sequence block (document)
# sep entry:   key | sequence block
# sequence block: u32 token count | length-prefixed UTF-8 tokens |
#                 token_count x dim little-endian f32, row-major
# strings: u32 byte length | UTF-8 bytes


class _Reader:
    def __init__(self, data: bytes, path: str):
        self.data = data
        self.pos = 0
        self.path = path

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise TruncatedFile(f"{self.path}: need {n} bytes at offset {self.pos}")
        chunk = self.data[self.pos : self.pos + n]
        self.pos += n
        return chunk

    def u32(self) -> int:
        return struct.unpack("<I", self.take(4))[0]

    def string(self) -> str:
        return self.take(self.u32()).decode("utf-8")


def _write_string(out: list[bytes], s: str) -> None:
    raw = s.encode("utf-8")
    out.append(struct.pack("<I", len(raw)))
    out.append(raw)


def _write_sequence(out: list[bytes], seq: TokenSequenceEmbedding) -> None:
    out.append(struct.pack("<I", len(seq.tokens)))
    for tok in seq.tokens:
        _write_string(out, tok)
    out.append(np.ascontiguousarray(seq.vectors, dtype="<f4").tobytes())


def _read_sequence(reader: _Reader, dim: int) -> TokenSequenceEmbedding:
    count = reader.u32()
    tokens = tuple(reader.string() for _ in range(count))
    raw = reader.take(count * dim * 4)
    matrix = np.frombuffer(raw, dtype="<f4").reshape(count, dim).copy()
    return TokenSequenceEmbedding(tokens=tokens, vectors=matrix)


def write_store(store: EmbeddingStore, path: str) -> None:
    def check_dim(key: str, seq: TokenSequenceEmbedding) -> TokenSequenceEmbedding:
        if seq.dim != store.dim:
            raise DimMismatch(f"entry {key!r} has dim {seq.dim}, store dim {store.dim}")
        return seq

    out: list[bytes] = [STORE_MAGIC, struct.pack("<II", STORE_VERSION, store.dim)]
    out.append(struct.pack("<I", len(store.joint)))
    for key in sorted(store.joint):
        topic_seq, doc_seq = store.joint[key]
        _write_string(out, key)
        _write_sequence(out, check_dim(key, topic_seq))
        _write_sequence(out, check_dim(key, doc_seq))
    for section in (store.sep_docs, store.sep_topics):
        out.append(struct.pack("<I", len(section)))
        for key in sorted(section):
            _write_string(out, key)
            _write_sequence(out, check_dim(key, section[key]))
    with open(path, "wb") as fh:
        fh.write(b"".join(out))


def read_store(path: str) -> EmbeddingStore:
    """Read and validate a binary store; soft issues land in store.warnings."""
    with open(path, "rb") as fh:
        reader = _Reader(fh.read(), path)
    if reader.take(4) != STORE_MAGIC:
        raise BadMagic(f"{path}: not an embedding store")
    version = reader.u32()
    if version != STORE_VERSION:
        raise VersionMismatch(f"{path}: version {version}, expected {STORE_VERSION}")
    dim = reader.u32()
    store = EmbeddingStore(dim=dim)

    def check_caps(key: str, seq: TokenSequenceEmbedding, cap: int, what: str) -> None:
        if len(seq) > cap:
            store.warnings.append(f"{what} {key!r}: {len(seq)} tokens exceeds cap {cap}")

    joint_count = reader.u32()
    for _ in range(joint_count):
        key = reader.string()
        topic_seq = _read_sequence(reader, dim)
        doc_seq = _read_sequence(reader, dim)
        check_caps(key, topic_seq, MAX_TOPIC_TOKENS, "joint topic")
        check_caps(key, doc_seq, MAX_DOC_TOKENS, "joint document")
        store.joint[key] = (topic_seq, doc_seq)
    for section, cap, what in (
        (store.sep_docs, MAX_DOC_TOKENS, "document"),
        (store.sep_topics, MAX_TOPIC_TOKENS, "topic"),
    ):
        count = reader.u32()
        for _ in range(count):
            key = reader.string()
            seq = _read_sequence(reader, dim)
            check_caps(key, seq, cap, what)
            section[key] = seq
    if reader.pos != len(reader.data):
        store.warnings.append(f"{path}: {len(reader.data) - reader.pos} trailing bytes")
    return store


# --- deterministic stub encoder ----------------------------------------------


class StubEncoding(NamedTuple):
    joint_topic: TokenSequenceEmbedding
    joint_doc: TokenSequenceEmbedding
    sep_topic: TokenSequenceEmbedding
    sep_doc: TokenSequenceEmbedding


def _hash_unit(key: str, dim: int) -> np.ndarray:
    seed = int.from_bytes(blake2b(key.encode("utf-8"), digest_size=8).digest(), "little")
    gen = np.random.Generator(np.random.PCG64(seed))
    vec = gen.standard_normal(dim)
    norm = np.linalg.norm(vec)
    if norm == 0.0:
        vec[0] = 1.0
        norm = 1.0
    return (vec / norm).astype(np.float32)


def _encode_tokens(tokens: Sequence[str], dim: int, salt: int, partner: str | None) -> np.ndarray:
    rows = []
    for tok in tokens:
        vec = _hash_unit(f"sep\x00{tok}\x00{salt}", dim)
        if partner is not None:
            ctx = _hash_unit(f"joint\x00{tok}\x00{_text_hash(partner)}\x00{salt}", dim)
            vec = (vec + np.float32(0.1) * ctx).astype(np.float32)
        rows.append(vec)
    return np.array(rows, dtype=np.float32).reshape(len(tokens), dim)


def _text_hash(text: str) -> str:
    return blake2b(text.encode("utf-8"), digest_size=8).hexdigest()


def stub_encode(
    doc_tokens: Sequence[str],
    topic_tokens: Sequence[str],
    dim: int,
    salt: int = 0,
) -> StubEncoding:
    """Deterministic stand-in for a frozen contextual encoder.

    Separate-mode vectors are unit-norm and depend only on (token, salt);
    joint-mode vectors add a 0.1-scaled component keyed on the partner
    text, so conditioning changes the output measurably.
    """
    if dim < 2:
        raise DimMismatch(f"dim {dim} < 2")
    doc_tokens = tuple(doc_tokens)[:MAX_DOC_TOKENS]
    topic_tokens = tuple(topic_tokens)[:MAX_TOPIC_TOKENS]
    doc_text = " ".join(doc_tokens)
    topic_text = " ".join(topic_tokens)
    return StubEncoding(
        joint_topic=TokenSequenceEmbedding(
            tokens=topic_tokens, vectors=_encode_tokens(topic_tokens, dim, salt, doc_text)
        ),
        joint_doc=TokenSequenceEmbedding(
            tokens=doc_tokens, vectors=_encode_tokens(doc_tokens, dim, salt, topic_text)
        ),
        sep_topic=TokenSequenceEmbedding(
            tokens=topic_tokens, vectors=_encode_tokens(topic_tokens, dim, salt, None)
        ),
        sep_doc=TokenSequenceEmbedding(
            tokens=doc_tokens, vectors=_encode_tokens(doc_tokens, dim, salt, None)
        ),
    )


def build_stub_store(examples: Iterable, dim: int, salt: int = 0) -> EmbeddingStore:
    """Populate a full store for a dataset with stub encodings.

    Documents are tokenized with the corpus tokenizer; topics use their
    normalized tokens. One separate entry per unique doc_id / topic_key.
    """
    from .corpus import tokenize_document

    store = EmbeddingStore(dim=dim)
    for ex in examples:
        doc_tokens = tokenize_document(ex.document)[:MAX_DOC_TOKENS]
        if not doc_tokens:
            doc_tokens = ["blank"]
        enc = stub_encode(doc_tokens, ex.topic_tokens, dim, salt)
        store.joint[ex.example_id] = (enc.joint_topic, enc.joint_doc)
        if ex.doc_id not in store.sep_docs:
            store.sep_docs[ex.doc_id] = enc.sep_doc
        if ex.topic_key not in store.sep_topics:
            store.sep_topics[ex.topic_key] = enc.sep_topic
    return store


# --- static word vectors ------------------------------------------------------


def load_word_vectors(path: str) -> WordVectors:
    """Read whitespace-separated "word v1 ... vE" lines."""
    table: dict[str, np.ndarray] = {}
    dim = None
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            parts = line.split()
            if not parts:
                continue
            word, values = parts[0], parts[1:]
            if dim is None:
                dim = len(values)
            if len(values) != dim or dim == 0:
                raise MalformedRecord(f"{path}:{lineno}: expected {dim} values")
            try:
                table[word] = np.array([float(v) for v in values], dtype=np.float64)
            except ValueError as exc:
                raise MalformedRecord(f"{path}:{lineno}: {exc}") from exc
    if dim is None:
        raise MalformedRecord(f"{path}: no vectors found")
    return WordVectors(dim=dim, table=table)


def static_topic_vector(topic_tokens: Sequence[str], wv: WordVectors) -> np.ndarray:
    """Mean of in-vocabulary word vectors for the topic."""
    rows = [wv.table[t] for t in topic_tokens if t in wv.table]
    if not rows:
        raise NoVocabOverlap(f"no vocabulary coverage for {list(topic_tokens)}")
    return np.mean(rows, axis=0)


def cosine_sim(a: np.ndarray, b: np.ndarray) -> float:
    if a.shape != b.shape:
        raise DimMismatch(f"{a.shape} vs {b.shape}")
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0.0 or nb == 0.0:
        raise ZeroVector("cosine similarity of a zero vector is undefined")
    return float(np.dot(a, b) / (na * nb))
