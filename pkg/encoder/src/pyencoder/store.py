"""Writer/reader for the "TGAE" binary embedding store.

This is the exporter's own implementation of the wire format so that the
consuming toolkit's reader stays an independent check on conformance.

Layout: magic "TGAE" | u32 version=1 | u32 dim | three sections
(joint, sep_docs, sep_topics). Each section: u32 entry count, entries
sorted by key. A joint entry holds the key then two sequence blocks
(topic first, then document); a separate entry holds the key and one
block. Sequence block: u32 token count, length-prefixed UTF-8 tokens,
then token_count x dim little-endian f32, row-major. Strings are
u32-length-prefixed UTF-8.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

MAGIC = b"TGAE"
VERSION = 1


@dataclass
class Sequence:
    tokens: list[str]
    vectors: np.ndarray  # (len(tokens), dim) float32


@dataclass
class Store:
    dim: int
    joint: dict[str, tuple[Sequence, Sequence]] = field(default_factory=dict)
    sep_docs: dict[str, Sequence] = field(default_factory=dict)
    sep_topics: dict[str, Sequence] = field(default_factory=dict)


def _pack_string(out: list[bytes], value: str) -> None:
    raw = value.encode("utf-8")
    out.append(struct.pack("<I", len(raw)))
    out.append(raw)


def _pack_sequence(out: list[bytes], seq: Sequence) -> None:
    out.append(struct.pack("<I", len(seq.tokens)))
    for token in seq.tokens:
        _pack_string(out, token)
    out.append(np.ascontiguousarray(seq.vectors, dtype="<f4").tobytes())


def write(store: Store, path: str) -> None:
    out: list[bytes] = [MAGIC, struct.pack("<II", VERSION, store.dim)]
    out.append(struct.pack("<I", len(store.joint)))
    for key in sorted(store.joint):
        topic_seq, doc_seq = store.joint[key]
        _pack_string(out, key)
        _pack_sequence(out, topic_seq)
        _pack_sequence(out, doc_seq)
    for section in (store.sep_docs, store.sep_topics):
        out.append(struct.pack("<I", len(section)))
        for key in sorted(section):
            _pack_string(out, key)
            _pack_sequence(out, section[key])
    with open(path, "wb") as fh:
        fh.write(b"".join(out))


def read(path: str) -> Store:
    with open(path, "rb") as fh:
        data = fh.read()
    pos = 0

    def take(n: int) -> bytes:
        nonlocal pos
        if pos + n > len(data):
            raise ValueError(f"{path}: truncated at offset {pos}")
        chunk = data[pos : pos + n]
        pos += n
        return chunk

    def u32() -> int:
        return struct.unpack("<I", take(4))[0]

    def string() -> str:
        return take(u32()).decode("utf-8")

    def sequence(dim: int) -> Sequence:
        count = u32()
        tokens = [string() for _ in range(count)]
        matrix = np.frombuffer(take(count * dim * 4), dtype="<f4").reshape(count, dim).copy()
        return Sequence(tokens=tokens, vectors=matrix)

    if take(4) != MAGIC:
        raise ValueError(f"{path}: bad magic")
    version = u32()
    if version != VERSION:
        raise ValueError(f"{path}: unsupported version {version}")
    dim = u32()
    store = Store(dim=dim)
    for _ in range(u32()):
        key = string()
        store.joint[key] = (sequence(dim), sequence(dim))
    for section in (store.sep_docs, store.sep_topics):
        for _ in range(u32()):
            key = string()
            section[key] = sequence(dim)
    return store


def diff(store_a: Store, store_b: Store, tolerance: float = 0.0) -> list[str]:
    """Structural and numeric comparison; each line locates one mismatch."""
    report: list[str] = []
    if store_a.dim != store_b.dim:
        report.append(f"dim: {store_a.dim} != {store_b.dim}")
        return report

    def compare_sequences(section: str, key: str, side: str, a: Sequence, b: Sequence) -> None:
        label = f"{section}[{key!r}]{side}"
        if a.tokens != b.tokens:
            report.append(f"{label}: token lists differ")
            return
        delta = np.abs(a.vectors.astype(np.float64) - b.vectors.astype(np.float64))
        if delta.size and delta.max() > tolerance:
            row, col = np.unravel_index(int(np.argmax(delta)), delta.shape)
            report.append(
                f"{label}: row {row} col {col} differs by {delta[row, col]:.3e}"
            )

    for section_name in ("joint", "sep_docs", "sep_topics"):
        section_a = getattr(store_a, section_name)
        section_b = getattr(store_b, section_name)
        for key in sorted(set(section_a) | set(section_b)):
            if key not in section_a:
                report.append(f"{section_name}[{key!r}]: only in second store")
                continue
            if key not in section_b:
                report.append(f"{section_name}[{key!r}]: only in first store")
                continue
            if section_name == "joint":
                for side, a, b in (
                    (".topic", section_a[key][0], section_b[key][0]),
                    (".doc", section_a[key][1], section_b[key][1]),
                ):
                    compare_sequences(section_name, key, side, a, b)
            else:
                compare_sequences(section_name, key, "", section_a[key], section_b[key])
    return report
