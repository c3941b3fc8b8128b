"""Dataset data model: annotation aggregation, neutral synthesis, splits, agreement."""

from __future__ import annotations

import json
import random
import string
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from enum import Enum, IntEnum
from importlib import resources
from typing import Callable, Iterable, Mapping, Optional, Sequence

from .errors import (
    EmptyTopic,
    InsufficientData,
    MalformedRecord,
    NoValidTopic,
    OutOfRange,
    TooFewDocuments,
)

Lemmatizer = Callable[[str], str]

_PUNCT_CHARS = set(string.punctuation) | set("“”‘’–—…")
_PUNCT_TABLE = {ord(c): " " for c in _PUNCT_CHARS}


def _load_stopwords() -> frozenset[str]:
    text = resources.files("stancekit.data").joinpath("stopwords.txt").read_text("utf-8")
    return frozenset(w.strip() for w in text.splitlines() if w.strip())


STOPWORDS = _load_stopwords()


class StanceLabel(IntEnum):
    CON = 0
    PRO = 1
    NEUTRAL = 2


class SourceKind(str, Enum):
    HEUR = "Heur"
    CORR = "Corr"
    LIST = "List"
    SYNTH_NEUTRAL = "SynthNeutral"


@dataclass(frozen=True)
class StanceExample:
    """One (document, topic, label) triple with provenance.

    ``topic_tokens`` is the normalized form used everywhere topics are
    compared; ``topic_key`` joins it into the canonical string key.
    """

    example_id: str
    doc_id: str
    document: str
    topic_raw: str
    topic_tokens: tuple[str, ...]
    label: StanceLabel
    kind: SourceKind
    sarcasm: bool = False

    def __post_init__(self) -> None:
        if not self.topic_tokens:
            raise EmptyTopic(f"example {self.example_id}: no topic tokens")
        for tok in self.topic_tokens:
            if not tok or tok != tok.lower() or tok in STOPWORDS:
                raise ValueError(f"example {self.example_id}: bad topic token {tok!r}")
        if self.kind is SourceKind.SYNTH_NEUTRAL and self.label is not StanceLabel.NEUTRAL:
            raise ValueError(f"example {self.example_id}: synthesized examples must be neutral")

    @property
    def topic_key(self) -> str:
        return " ".join(self.topic_tokens)


@dataclass(frozen=True)
class AnnotationRecord:
    """One worker's response to a (document, topic) annotation task."""

    worker_id: str
    doc_id: str
    given_topic: str
    raw_stance: int
    corrected_topic: Optional[str] = None
    listed_topics: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        if self.raw_stance not in (1, 2, 3, 4, 5):
            raise OutOfRange(f"raw_stance {self.raw_stance} not in [1, 5]")


@dataclass(frozen=True)
class DatasetSplit:
    """Train/dev/test partition with zero-shot and few-shot index subsets.

    Subsets index into ``dev`` and ``test``. Invariants (document
    disjointness, zero-shot topic disjointness, no List examples outside
    train) are checked at construction time.
    """

    train: tuple[StanceExample, ...]
    dev: tuple[StanceExample, ...]
    test: tuple[StanceExample, ...]
    zero_shot_dev: tuple[int, ...]
    few_shot_dev: tuple[int, ...]
    zero_shot_test: tuple[int, ...]
    few_shot_test: tuple[int, ...]

    def __post_init__(self) -> None:
        docs = [
            {ex.doc_id for ex in part} for part in (self.train, self.dev, self.test)
        ]
        if (docs[0] & docs[1]) or (docs[0] & docs[2]) or (docs[1] & docs[2]):
            raise ValueError("partitions share documents")
        train_topics = {ex.topic_key for ex in self.train}
        for part, zero, few in (
            (self.dev, self.zero_shot_dev, self.few_shot_dev),
            (self.test, self.zero_shot_test, self.few_shot_test),
        ):
            if any(ex.kind is SourceKind.LIST for ex in part):
                raise ValueError("List examples are not allowed in dev/test")
            if set(zero) | set(few) != set(range(len(part))) or set(zero) & set(few):
                raise ValueError("zero/few-shot subsets must partition the split")
            for i in zero:
                if part[i].topic_key in train_topics:
                    raise ValueError(f"zero-shot example {part[i].example_id} has a training topic")
            for i in few:
                if part[i].topic_key not in train_topics:
                    raise ValueError(f"few-shot example {part[i].example_id} lacks a training topic")


def normalize_topic(raw: str, lemmatizer: Optional[Lemmatizer] = None) -> list[str]:
    """Lowercase, strip punctuation, drop stopwords, lemmatize each survivor.

    Raises EmptyTopic when nothing survives.
    """
    if raw is None or not raw.strip():
        raise EmptyTopic("topic is empty")
    cleaned = raw.lower().translate(_PUNCT_TABLE)
    tokens: list[str] = []
    for tok in cleaned.split():
        if tok in STOPWORDS:
            continue
        if lemmatizer is not None:
            tok = lemmatizer(tok)
        if tok:
            tokens.append(tok)
    if not tokens:
        raise EmptyTopic(f"no tokens survive normalization of {raw!r}")
    return tokens


def tokenize_document(text: str, lemmatizer: Optional[Lemmatizer] = None) -> list[str]:
    """Document analogue of normalize_topic; an empty result is allowed."""
    cleaned = text.lower().translate(_PUNCT_TABLE)
    tokens = []
    for tok in cleaned.split():
        if tok in STOPWORDS:
            continue
        if lemmatizer is not None:
            tok = lemmatizer(tok)
        if tok:
            tokens.append(tok)
    return tokens


def map_scale(raw_stance: int, invert: bool = False) -> StanceLabel:
    """Collapse the 5-point response scale to Con/Neutral/Pro.

    By default 1-2 map to Con and 4-5 to Pro; ``invert`` flips the
    orientation for corpora collected with the opposite convention.
    """
    if raw_stance not in (1, 2, 3, 4, 5):
        raise OutOfRange(f"raw_stance {raw_stance} not in [1, 5]")
    if raw_stance == 3:
        return StanceLabel.NEUTRAL
    low = raw_stance < 3
    if invert:
        low = not low
    return StanceLabel.CON if low else StanceLabel.PRO


def topic_key(tokens: Sequence[str]) -> str:
    return " ".join(tokens)


def _majority(votes: Sequence[StanceLabel], denominator: int) -> Optional[StanceLabel]:
    """Label with a strict majority of ``denominator`` responses, else None."""
    if not votes:
        return None
    counts = Counter(votes)
    label, top = counts.most_common(1)[0]
    if top * 2 <= denominator:
        return None
    if sum(1 for c in counts.values() if c == top) > 1:
        return None
    return label


def _worker_agreement(
    records: Sequence[AnnotationRecord],
    lemmatizer: Optional[Lemmatizer],
    invert_scale: bool,
) -> dict[str, tuple[int, int]]:
    """Per-worker (agreements, comparable pairs) over shared tasks.

    Two responses in the same (doc, given-topic) group are comparable when
    both left the topic alone or both corrected it to the same normalized
    topic; only then do their stance labels rate the same thing.
    """
    tallies: dict[str, list[int]] = defaultdict(lambda: [0, 0])
    groups: dict[tuple[str, str], list[AnnotationRecord]] = defaultdict(list)
    for rec in records:
        groups[(rec.doc_id, rec.given_topic)].append(rec)
    for group in groups.values():
        keyed = []
        for rec in group:
            corr = _normalized_or_none(rec.corrected_topic, lemmatizer)
            keyed.append((rec, corr))
        for i in range(len(keyed)):
            for j in range(i + 1, len(keyed)):
                (r1, c1), (r2, c2) = keyed[i], keyed[j]
                if c1 != c2:
                    continue
                agree = map_scale(r1.raw_stance, invert_scale) == map_scale(r2.raw_stance, invert_scale)
                for w in (r1.worker_id, r2.worker_id):
                    tallies[w][0] += int(agree)
                    tallies[w][1] += 1
    return {w: (a, t) for w, (a, t) in tallies.items()}


def _normalized_or_none(raw: Optional[str], lemmatizer: Optional[Lemmatizer]) -> Optional[str]:
    if raw is None or not raw.strip():
        return None
    try:
        return topic_key(normalize_topic(raw, lemmatizer))
    except EmptyTopic:
        return None


def aggregate_annotations(
    records: Sequence[AnnotationRecord],
    documents: Mapping[str, str],
    min_agreement: float = 0.5,
    lemmatizer: Optional[Lemmatizer] = None,
    sarcasm: Optional[Mapping[str, bool]] = None,
    invert_scale: bool = False,
) -> list[StanceExample]:
    """Aggregate raw worker responses into labeled stance examples.

    Workers whose pairwise agreement rate with co-annotators falls below
    ``min_agreement`` are dropped first. Then, per (document, given-topic)
    group, a Heur example is emitted when one label holds a strict majority
    of the group's responses; Corr votes are pooled per (document,
    corrected-topic) across groups, List votes per (document, listed-topic).
    Ties yield no example. Duplicate (document, topic) candidates resolve
    with precedence Heur > Corr > List.
    """
    rates = _worker_agreement(records, lemmatizer, invert_scale)
    dropped = {
        w for w, (agree, total) in rates.items() if total > 0 and agree / total < min_agreement
    }
    kept = [r for r in records if r.worker_id not in dropped]

    groups: dict[tuple[str, str], list[AnnotationRecord]] = defaultdict(list)
    doc_order: list[str] = []
    for rec in kept:
        if rec.doc_id not in documents:
            raise MalformedRecord(f"no document text for doc_id {rec.doc_id!r}")
        if rec.doc_id not in doc_order:
            doc_order.append(rec.doc_id)
        groups[(rec.doc_id, rec.given_topic)].append(rec)

    # kind -> (doc_id, topic_key) -> (label, topic_raw); insertion order kept
    candidates: dict[SourceKind, dict[tuple[str, str], tuple[StanceLabel, str]]] = {
        SourceKind.HEUR: {},
        SourceKind.CORR: {},
        SourceKind.LIST: {},
    }
    corr_votes: dict[tuple[str, str], list[StanceLabel]] = defaultdict(list)
    corr_raw: dict[tuple[str, str], str] = {}
    list_votes: dict[tuple[str, str], list[StanceLabel]] = defaultdict(list)
    list_raw: dict[tuple[str, str], str] = {}

    for (doc_id, given_topic), group in groups.items():
        heur_votes = []
        for rec in group:
            corr_key = _normalized_or_none(rec.corrected_topic, lemmatizer)
            label = map_scale(rec.raw_stance, invert_scale)
            if corr_key is None:
                heur_votes.append(label)
            else:
                corr_votes[(doc_id, corr_key)].append(label)
                corr_raw.setdefault((doc_id, corr_key), rec.corrected_topic.strip())
            for listed in rec.listed_topics:
                listed_key = _normalized_or_none(listed, lemmatizer)
                if listed_key is None:
                    continue
                list_votes[(doc_id, listed_key)].append(label)
                list_raw.setdefault((doc_id, listed_key), listed.strip())
        winner = _majority(heur_votes, denominator=len(group))
        given_key = _normalized_or_none(given_topic, lemmatizer)
        if winner is not None and given_key is not None:
            candidates[SourceKind.HEUR].setdefault(
                (doc_id, given_key), (winner, given_topic.strip())
            )

    for key, votes in corr_votes.items():
        winner = _majority(votes, denominator=len(votes))
        if winner is not None:
            candidates[SourceKind.CORR][key] = (winner, corr_raw[key])
    for key, votes in list_votes.items():
        winner = _majority(votes, denominator=len(votes))
        if winner is not None:
            candidates[SourceKind.LIST][key] = (winner, list_raw[key])

    out: list[StanceExample] = []
    taken: set[tuple[str, str]] = set()
    sarcasm = sarcasm or {}
    for kind in (SourceKind.HEUR, SourceKind.CORR, SourceKind.LIST):
        for doc_id in doc_order:
            for (d, key), (label, raw) in candidates[kind].items():
                if d != doc_id or (d, key) in taken:
                    continue
                taken.add((d, key))
                out.append(
                    StanceExample(
                        example_id=f"{d}::{kind.value}::{key}",
                        doc_id=d,
                        document=documents[d],
                        topic_raw=raw,
                        topic_tokens=tuple(key.split(" ")),
                        label=label,
                        kind=kind,
                        sarcasm=bool(sarcasm.get(d, False)),
                    )
                )
    doc_rank = {d: i for i, d in enumerate(doc_order)}
    out.sort(key=lambda ex: (doc_rank[ex.doc_id], ex.topic_key, ex.kind.value))
    return out


def generate_neutrals(
    dataset: Sequence[StanceExample],
    p: float = 0.5,
    rng_seed: int = 0,
) -> list[StanceExample]:
    """Append synthesized neutral examples by re-pairing documents with
    lexically disjoint topics from the dataset pool.

    Each Heur/Corr example is converted with probability ``p``; the new
    topic must share no normalized token with any topic already associated
    with the document (including earlier synthesized ones). List examples
    are never converted. Originals are retained.
    """
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"p={p} outside [0, 1]")
    pool: dict[str, tuple[tuple[str, ...], str]] = {}
    for ex in dataset:
        pool.setdefault(ex.topic_key, (ex.topic_tokens, ex.topic_raw))
    if len(pool) < 2:
        raise ValueError("need at least 2 distinct topics to synthesize neutrals")

    doc_tokens: dict[str, set[str]] = defaultdict(set)
    for ex in dataset:
        doc_tokens[ex.doc_id].update(ex.topic_tokens)

    rng = random.Random(rng_seed)
    pool_keys = sorted(pool)
    out = list(dataset)
    for ex in dataset:
        if ex.kind not in (SourceKind.HEUR, SourceKind.CORR):
            continue
        if rng.random() >= p:
            continue
        order = rng.sample(pool_keys, len(pool_keys))
        chosen = None
        for key in order:
            tokens, _ = pool[key]
            if not set(tokens) & doc_tokens[ex.doc_id]:
                chosen = key
                break
        if chosen is None:
            raise NoValidTopic(
                f"document {ex.doc_id}: every pool topic overlaps its associated topics"
            )
        tokens, raw = pool[chosen]
        doc_tokens[ex.doc_id].update(tokens)
        out.append(
            StanceExample(
                example_id=f"{ex.doc_id}::SynthNeutral::{chosen}",
                doc_id=ex.doc_id,
                document=ex.document,
                topic_raw=raw,
                topic_tokens=tokens,
                label=StanceLabel.NEUTRAL,
                kind=SourceKind.SYNTH_NEUTRAL,
                sarcasm=ex.sarcasm,
            )
        )
    return out


def split_dataset(
    dataset: Sequence[StanceExample],
    ratios: tuple[float, float, float] = (0.70, 0.15, 0.15),
    rng_seed: int = 0,
) -> DatasetSplit:
    """Partition by unique document, then derive zero-/few-shot subsets.

    Train receives floor(N * train_ratio) shuffled documents; leftover
    documents beyond the proportional dev/test allocation alternate
    dev, test, dev, ... List examples are removed from dev and test.
    """
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise ValueError(f"ratios {ratios} do not sum to 1")
    doc_ids: list[str] = []
    seen = set()
    for ex in dataset:
        if ex.doc_id not in seen:
            seen.add(ex.doc_id)
            doc_ids.append(ex.doc_id)
    n = len(doc_ids)
    r_train, r_dev, r_test = ratios
    n_train = int(n * r_train)
    remainder = n - n_train
    tail = r_dev + r_test
    n_dev = int(remainder * (r_dev / tail)) if tail > 0 else 0
    n_test = int(remainder * (r_test / tail)) if tail > 0 else 0
    extra = remainder - n_dev - n_test
    for i in range(extra):
        if i % 2 == 0:
            n_dev += 1
        else:
            n_test += 1
    if min(n_train, n_dev, n_test) == 0:
        raise TooFewDocuments(f"{n} documents cannot fill partitions {ratios}")

    shuffled = list(doc_ids)
    random.Random(rng_seed).shuffle(shuffled)
    train_docs = set(shuffled[:n_train])
    dev_docs = set(shuffled[n_train : n_train + n_dev])

    train, dev, test = [], [], []
    for ex in dataset:
        if ex.doc_id in train_docs:
            train.append(ex)
        elif ex.kind is SourceKind.LIST:
            continue
        elif ex.doc_id in dev_docs:
            dev.append(ex)
        else:
            test.append(ex)

    train_topics = {ex.topic_key for ex in train}

    def subsets(part: list[StanceExample]) -> tuple[tuple[int, ...], tuple[int, ...]]:
        zero = tuple(i for i, ex in enumerate(part) if ex.topic_key not in train_topics)
        few = tuple(i for i, ex in enumerate(part) if ex.topic_key in train_topics)
        return zero, few

    zero_dev, few_dev = subsets(dev)
    zero_test, few_test = subsets(test)
    return DatasetSplit(
        train=tuple(train),
        dev=tuple(dev),
        test=tuple(test),
        zero_shot_dev=zero_dev,
        few_shot_dev=few_dev,
        zero_shot_test=zero_test,
        few_shot_test=few_test,
    )


def krippendorff_alpha(labels: Sequence[Sequence[Optional[StanceLabel]]]) -> float:
    """Nominal-data alpha, 1 - D_o / D_e, from the coincidence matrix.

    ``labels`` is workers x items with None for missing ratings. Items
    rated by fewer than two workers are skipped; fewer than two usable
    items raises InsufficientData.
    """
    if not labels:
        raise InsufficientData("no ratings")
    n_items = max(len(row) for row in labels)
    units: list[list[StanceLabel]] = []
    for j in range(n_items):
        vals = [row[j] for row in labels if j < len(row) and row[j] is not None]
        if len(vals) >= 2:
            units.append(vals)
    if len(units) < 2:
        raise InsufficientData("need at least 2 items with at least 2 ratings")

    coincidence: dict[tuple[StanceLabel, StanceLabel], float] = defaultdict(float)
    for vals in units:
        m = len(vals)
        for a in range(m):
            for b in range(m):
                if a != b:
                    coincidence[(vals[a], vals[b])] += 1.0 / (m - 1)
    n_total = sum(coincidence.values())
    marginals: dict[StanceLabel, float] = defaultdict(float)
    for (c, _), v in coincidence.items():
        marginals[c] += v
    d_obs = sum(v for (c, k), v in coincidence.items() if c != k) / n_total
    d_exp = sum(
        marginals[c] * marginals[k]
        for c in marginals
        for k in marginals
        if c != k
    ) / (n_total * (n_total - 1))
    if d_exp == 0.0:
        return 1.0
    return 1.0 - d_obs / d_exp


def percentage_agreement(labels: Sequence[Sequence[Optional[StanceLabel]]]) -> float:
    """Mean over items of the fraction of annotator pairs that agree."""
    if not labels:
        raise InsufficientData("no ratings")
    n_items = max(len(row) for row in labels)
    per_item: list[float] = []
    for j in range(n_items):
        vals = [row[j] for row in labels if j < len(row) and row[j] is not None]
        if len(vals) < 2:
            continue
        pairs = agree = 0
        for a in range(len(vals)):
            for b in range(a + 1, len(vals)):
                pairs += 1
                agree += int(vals[a] == vals[b])
        per_item.append(agree / pairs)
    if not per_item:
        raise InsufficientData("no item has at least 2 ratings")
    return sum(per_item) / len(per_item)


_DATASET_FIELDS = (
    "example_id",
    "doc_id",
    "document",
    "topic_raw",
    "topic_tokens",
    "label",
    "kind",
    "sarcasm",
)


def write_dataset(examples: Iterable[StanceExample], path: str) -> None:
    """Write line-delimited UTF-8 records; field order is fixed."""
    with open(path, "w", encoding="utf-8") as fh:
        for ex in examples:
            record = {
                "example_id": ex.example_id,
                "doc_id": ex.doc_id,
                "document": ex.document,
                "topic_raw": ex.topic_raw,
                "topic_tokens": list(ex.topic_tokens),
                "label": int(ex.label),
                "kind": ex.kind.value,
                "sarcasm": ex.sarcasm,
            }
            fh.write(json.dumps(record, ensure_ascii=False) + "\n")


def read_dataset(path: str) -> list[StanceExample]:
    """Inverse of write_dataset; raises MalformedRecord with the line number."""
    out: list[StanceExample] = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise MalformedRecord(f"{path}:{lineno}: invalid JSON ({exc})") from exc
            if not isinstance(record, dict):
                raise MalformedRecord(f"{path}:{lineno}: record is not an object")
            missing = [f for f in _DATASET_FIELDS if f not in record]
            if missing:
                raise MalformedRecord(f"{path}:{lineno}: missing field(s) {missing}")
            try:
                out.append(
                    StanceExample(
                        example_id=str(record["example_id"]),
                        doc_id=str(record["doc_id"]),
                        document=str(record["document"]),
                        topic_raw=str(record["topic_raw"]),
                        topic_tokens=tuple(str(t) for t in record["topic_tokens"]),
                        label=StanceLabel(int(record["label"])),
                        kind=SourceKind(record["kind"]),
                        sarcasm=bool(record["sarcasm"]),
                    )
                )
            except (ValueError, TypeError, EmptyTopic) as exc:
                raise MalformedRecord(f"{path}:{lineno}: {exc}") from exc
    return out


def write_annotations(records: Iterable[AnnotationRecord], path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(
                json.dumps(
                    {
                        "worker_id": rec.worker_id,
                        "doc_id": rec.doc_id,
                        "given_topic": rec.given_topic,
                        "raw_stance": rec.raw_stance,
                        "corrected_topic": rec.corrected_topic,
                        "listed_topics": list(rec.listed_topics),
                    },
                    ensure_ascii=False,
                )
                + "\n"
            )


def read_annotations(path: str) -> list[AnnotationRecord]:
    out: list[AnnotationRecord] = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                record = json.loads(line)
                out.append(
                    AnnotationRecord(
                        worker_id=str(record["worker_id"]),
                        doc_id=str(record["doc_id"]),
                        given_topic=str(record["given_topic"]),
                        raw_stance=int(record["raw_stance"]),
                        corrected_topic=(
                            None
                            if record.get("corrected_topic") in (None, "")
                            else str(record["corrected_topic"])
                        ),
                        listed_topics=tuple(str(t) for t in record.get("listed_topics", ())),
                    )
                )
            except (KeyError, ValueError, TypeError, json.JSONDecodeError, OutOfRange) as exc:
                raise MalformedRecord(f"{path}:{lineno}: {exc}") from exc
    return out


def read_documents(path: str) -> tuple[dict[str, str], dict[str, bool]]:
    """Read a doc_id -> text (and sarcasm flag) table from line-delimited records."""
    texts: dict[str, str] = {}
    sarcasm: dict[str, bool] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                record = json.loads(line)
                doc_id = str(record["doc_id"])
                texts[doc_id] = str(record["document"])
                sarcasm[doc_id] = bool(record.get("sarcasm", False))
            except (KeyError, ValueError, TypeError, json.JSONDecodeError) as exc:
                raise MalformedRecord(f"{path}:{lineno}: {exc}") from exc
    return texts, sarcasm
