"""Scoring, phenomenon tagging, lexical-similarity and sentiment analyses."""

from __future__ import annotations

import random
from collections import defaultdict
from dataclasses import dataclass
from enum import Enum
from typing import Callable, Mapping, Optional, Sequence

import numpy as np

from .corpus import (
    DatasetSplit,
    StanceExample,
    StanceLabel,
    tokenize_document,
)
from .embed import WordVectors, cosine_sim, static_topic_vector
from .errors import (
    CannotFlip,
    LengthMismatch,
    MalformedRecord,
    MissingPrediction,
    NoClusters,
    NoVocabOverlap,
)

N_LABELS = 3


@dataclass(frozen=True)
class LabelScores:
    precision: float
    recall: float
    f1: float
    support: int


@dataclass(frozen=True)
class EvalReport:
    per_label: tuple[LabelScores, LabelScores, LabelScores]
    macro_f1: float
    confusion: tuple[tuple[int, ...], ...]  # confusion[gold][pred]
    n: int


def _confusion(gold: Sequence[int], pred: Sequence[int]) -> np.ndarray:
    counts = np.zeros((N_LABELS, N_LABELS), dtype=np.int64)
    for g, p in zip(gold, pred):
        counts[int(g), int(p)] += 1
    return counts


def _report_from_confusion(counts: np.ndarray) -> EvalReport:
    per_label = []
    f1s = []
    for c in range(N_LABELS):
        tp = counts[c, c]
        fp = counts[:, c].sum() - tp
        fn = counts[c, :].sum() - tp
        precision = tp / (tp + fp) if tp + fp else 0.0
        recall = tp / (tp + fn) if tp + fn else 0.0
        f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
        per_label.append(
            LabelScores(precision=float(precision), recall=float(recall), f1=float(f1),
                        support=int(counts[c, :].sum()))
        )
        f1s.append(f1)
    return EvalReport(
        per_label=tuple(per_label),
        macro_f1=float(np.mean(f1s)),  # absent labels contribute 0
        confusion=tuple(tuple(int(v) for v in row) for row in counts),
        n=int(counts.sum()),
    )


def macro_f1(gold: Sequence[int], pred: Sequence[int]) -> EvalReport:
    """Per-label precision/recall/F1 and their unweighted mean over the
    three stance labels; 0/0 ratios count as 0."""
    if len(gold) != len(pred) or len(gold) == 0:
        raise LengthMismatch(f"{len(gold)} gold vs {len(pred)} predicted labels")
    return _report_from_confusion(_confusion(gold, pred))


def macro_f1_score(gold: Sequence[int], pred: Sequence[int]) -> float:
    return macro_f1(gold, pred).macro_f1


def subset_eval(
    split: DatasetSplit,
    preds: Mapping[str, int],
    partition: str = "test",
) -> dict[str, Optional[EvalReport]]:
    """Reports for the full partition and its zero-/few-shot subsets.

    Empty subsets map to None rather than a zero score.
    """
    if partition == "test":
        examples, zero, few = split.test, split.zero_shot_test, split.few_shot_test
    elif partition == "dev":
        examples, zero, few = split.dev, split.zero_shot_dev, split.few_shot_dev
    else:
        raise ValueError(f"unknown partition {partition!r}")
    missing = [ex.example_id for ex in examples if ex.example_id not in preds]
    if missing:
        raise MissingPrediction(f"{len(missing)} examples lack predictions, e.g. {missing[0]}")
    gold = [int(ex.label) for ex in examples]
    pred = [int(preds[ex.example_id]) for ex in examples]
    out: dict[str, Optional[EvalReport]] = {"all": macro_f1(gold, pred)}
    for name, idx in (("zero_shot", zero), ("few_shot", few)):
        if idx:
            out[name] = macro_f1([gold[i] for i in idx], [pred[i] for i in idx])
        else:
            out[name] = None
    return out


# --- challenging phenomena ---------------------------------------------------

DEFAULT_QUOTE_CHARS = '"“”'


@dataclass(frozen=True)
class PhenomenonTags:
    imp: bool
    mlt: bool
    mls: bool
    qte: bool
    sarc: bool


def _contains_subsequence(haystack: Sequence[str], needle: Sequence[str]) -> bool:
    if not needle or len(needle) > len(haystack):
        return False
    first = needle[0]
    for i in range(len(haystack) - len(needle) + 1):
        if haystack[i] == first and list(haystack[i : i + len(needle)]) == list(needle):
            return True
    return False


def tag_phenomena(
    examples: Sequence[StanceExample],
    quote_chars: str = DEFAULT_QUOTE_CHARS,
) -> dict[str, PhenomenonTags]:
    """Per-example booleans for the five challenging phenomena.

    Imp: normalized topic token sequence does not occur contiguously in the
    normalized document and the label is not neutral. mlT: the document
    appears with 2+ distinct topics. mlS: the document carries both Pro and
    Con labels. Qte: any quote character present. Sarc: the external flag.
    """
    topics_per_doc: dict[str, set[str]] = defaultdict(set)
    stances_per_doc: dict[str, set[StanceLabel]] = defaultdict(set)
    for ex in examples:
        topics_per_doc[ex.doc_id].add(ex.topic_key)
        if ex.label is not StanceLabel.NEUTRAL:
            stances_per_doc[ex.doc_id].add(ex.label)
    doc_tokens_cache: dict[str, list[str]] = {}
    tags: dict[str, PhenomenonTags] = {}
    for ex in examples:
        if ex.doc_id not in doc_tokens_cache:
            doc_tokens_cache[ex.doc_id] = tokenize_document(ex.document)
        doc_tokens = doc_tokens_cache[ex.doc_id]
        imp = ex.label is not StanceLabel.NEUTRAL and not _contains_subsequence(
            doc_tokens, ex.topic_tokens
        )
        tags[ex.example_id] = PhenomenonTags(
            imp=imp,
            mlt=len(topics_per_doc[ex.doc_id]) >= 2,
            mls=len(stances_per_doc[ex.doc_id]) >= 2,
            qte=any(ch in ex.document for ch in quote_chars),
            sarc=ex.sarcasm,
        )
    return tags


@dataclass(frozen=True)
class PhenomenonReport:
    with_tag: Optional[EvalReport]
    without_tag: Optional[EvalReport]
    n_with: int
    n_without: int


def phenomenon_eval(
    examples: Sequence[StanceExample],
    tags: Mapping[str, PhenomenonTags],
    preds: Mapping[str, int],
) -> dict[str, PhenomenonReport]:
    """Macro-F1 on each phenomenon stratum and its complement.

    Empty strata are reported as None entries, not failures.
    """
    out: dict[str, PhenomenonReport] = {}
    for name in ("imp", "mlt", "mls", "qte", "sarc"):
        gold_with, pred_with, gold_without, pred_without = [], [], [], []
        for ex in examples:
            if ex.example_id not in preds:
                raise MissingPrediction(f"example {ex.example_id} lacks a prediction")
            bucket = (
                (gold_with, pred_with)
                if getattr(tags[ex.example_id], name)
                else (gold_without, pred_without)
            )
            bucket[0].append(int(ex.label))
            bucket[1].append(int(preds[ex.example_id]))
        out[name] = PhenomenonReport(
            with_tag=macro_f1(gold_with, pred_with) if gold_with else None,
            without_tag=macro_f1(gold_without, pred_without) if gold_without else None,
            n_with=len(gold_with),
            n_without=len(gold_without),
        )
    return out


# --- lexically similar topics --------------------------------------------------


@dataclass(frozen=True)
class LexSimResult:
    flagged: bool
    covered: bool
    best_similarity: float


def lexsim_topics(
    test_topics: Sequence[Sequence[str]],
    train_topics: Sequence[Sequence[str]],
    wv: WordVectors,
    theta: float = 0.9,
) -> list[LexSimResult]:
    """Flag test topics whose static-embedding cosine similarity to some
    training topic reaches theta; topics without vocabulary coverage are
    left unflagged and marked uncovered."""
    train_vecs = []
    for topic in train_topics:
        try:
            train_vecs.append(static_topic_vector(topic, wv))
        except NoVocabOverlap:
            continue
    out: list[LexSimResult] = []
    for topic in test_topics:
        try:
            vec = static_topic_vector(topic, wv)
        except NoVocabOverlap:
            out.append(LexSimResult(flagged=False, covered=False, best_similarity=float("nan")))
            continue
        best = max((cosine_sim(vec, tv) for tv in train_vecs), default=float("-inf"))
        out.append(LexSimResult(flagged=best >= theta, covered=True, best_similarity=best))
    return out


# --- sentiment ----------------------------------------------------------------


class Polarity(str, Enum):
    POSITIVE = "positive"
    NEGATIVE = "negative"


class Majority(str, Enum):
    M_PLUS = "M+"
    M_MINUS = "M-"
    TIE = "Tie"


@dataclass(frozen=True)
class SentimentLexicon:
    polarity: dict[str, Polarity]
    synonyms: dict[str, tuple[tuple[str, Polarity], ...]]


def load_sentiment_lexicon(lexicon_path: str, synonym_path: Optional[str] = None) -> SentimentLexicon:
    """Read "word<TAB>positive|negative" plus an optional
    "word<TAB>synonym<TAB>polarity" synonym table."""
    polarity: dict[str, Polarity] = {}
    with open(lexicon_path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line.strip():
                continue
            parts = line.split("\t")
            if len(parts) != 2:
                raise MalformedRecord(f"{lexicon_path}:{lineno}: expected 2 tab-separated fields")
            word, pol = parts[0].strip(), parts[1].strip().lower()
            try:
                parsed = Polarity(pol)
            except ValueError as exc:
                raise MalformedRecord(f"{lexicon_path}:{lineno}: bad polarity {pol!r}") from exc
            if polarity.get(word, parsed) != parsed:
                raise MalformedRecord(f"{lexicon_path}:{lineno}: {word!r} maps to both polarities")
            polarity[word] = parsed
    synonyms: dict[str, list[tuple[str, Polarity]]] = defaultdict(list)
    if synonym_path is not None:
        with open(synonym_path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                line = line.rstrip("\n")
                if not line.strip():
                    continue
                parts = line.split("\t")
                if len(parts) != 3:
                    raise MalformedRecord(f"{synonym_path}:{lineno}: expected 3 tab-separated fields")
                word, syn, pol = (p.strip() for p in parts)
                try:
                    parsed = Polarity(pol.lower())
                except ValueError as exc:
                    raise MalformedRecord(f"{synonym_path}:{lineno}: bad polarity {pol!r}") from exc
                synonyms[word].append((syn, parsed))
    return SentimentLexicon(
        polarity=polarity,
        synonyms={w: tuple(pairs) for w, pairs in synonyms.items()},
    )


def sentiment_majority(tokens: Sequence[str], lexicon: SentimentLexicon) -> Majority:
    """Strict majority of positive vs negative lexicon hits; equal counts tie."""
    pos = neg = 0
    for tok in tokens:
        pol = lexicon.polarity.get(tok)
        if pol is Polarity.POSITIVE:
            pos += 1
        elif pol is Polarity.NEGATIVE:
            neg += 1
    if pos > neg:
        return Majority.M_PLUS
    if neg > pos:
        return Majority.M_MINUS
    return Majority.TIE


def sentiment_swap(
    tokens: Sequence[str],
    lexicon: SentimentLexicon,
    target: Majority,
    rng_seed: int = 0,
) -> tuple[list[str], list[tuple[int, str, str]]]:
    """Replace majority-polarity words with opposite-polarity synonyms until
    the document majority equals ``target``.

    Replacement positions and synonyms are chosen uniformly at random; each
    position is replaced at most once. Raises CannotFlip when the pool runs
    out first. Returns the perturbed tokens and a (position, old, new) log.
    """
    if target not in (Majority.M_PLUS, Majority.M_MINUS):
        raise ValueError("target must be M+ or M-")
    expected_source = Majority.M_MINUS if target is Majority.M_PLUS else Majority.M_PLUS
    current = sentiment_majority(tokens, lexicon)
    if current is not expected_source:
        raise ValueError(f"document majority is {current.value}, expected {expected_source.value}")
    source_polarity = Polarity.NEGATIVE if target is Majority.M_PLUS else Polarity.POSITIVE
    rng = random.Random(rng_seed)
    out = list(tokens)
    replaced: set[int] = set()
    log: list[tuple[int, str, str]] = []
    while sentiment_majority(out, lexicon) != target:
        candidates = [
            i
            for i, tok in enumerate(out)
            if i not in replaced
            and lexicon.polarity.get(tok) is source_polarity
            and any(pol is not source_polarity for _, pol in lexicon.synonyms.get(tok, ()))
        ]
        if not candidates:
            raise CannotFlip("no replaceable sentiment words remain")
        pos = rng.choice(candidates)
        options = [syn for syn, pol in lexicon.synonyms[out[pos]] if pol is not source_polarity]
        new = rng.choice(options)
        log.append((pos, out[pos], new))
        out[pos] = new
        replaced.add(pos)
    return out, log


@dataclass(frozen=True)
class SwapRow:
    stance: StanceLabel
    direction: str  # "+to-" or "-to+"
    n_eligible: int
    n_swapped: int
    n_cannot_flip: int
    before_f1: dict[str, float]
    after_f1: dict[str, float]


TokenPredictor = Callable[[Sequence[str], StanceExample], int]


def swap_eval(
    predictors: Mapping[str, TokenPredictor],
    examples: Sequence[StanceExample],
    lexicon: SentimentLexicon,
    rng_seed: int = 0,
) -> list[SwapRow]:
    """Before/after macro-F1 per (stance label, swap direction).

    Eligible examples for +to- have majority M+ (and symmetrically);
    examples the swap cannot flip are skipped and counted.
    """
    rows: list[SwapRow] = []
    directions = (
        ("+to-", Majority.M_PLUS, Majority.M_MINUS),
        ("-to+", Majority.M_MINUS, Majority.M_PLUS),
    )
    for stance in (StanceLabel.PRO, StanceLabel.CON):
        for name, source, target in directions:
            eligible = []
            for ex in examples:
                if ex.label is not stance:
                    continue
                tokens = tokenize_document(ex.document)
                if sentiment_majority(tokens, lexicon) is source:
                    eligible.append((ex, tokens))
            swapped: list[tuple[StanceExample, list[str], list[str]]] = []
            cannot = 0
            for i, (ex, tokens) in enumerate(eligible):
                try:
                    perturbed, _ = sentiment_swap(tokens, lexicon, target, rng_seed + i)
                except CannotFlip:
                    cannot += 1
                    continue
                swapped.append((ex, list(tokens), perturbed))
            before_f1: dict[str, float] = {}
            after_f1: dict[str, float] = {}
            if swapped:
                gold = [int(ex.label) for ex, _, _ in swapped]
                for model_name, fn in predictors.items():
                    before = [int(fn(tokens, ex)) for ex, tokens, _ in swapped]
                    after = [int(fn(perturbed, ex)) for ex, _, perturbed in swapped]
                    before_f1[model_name] = macro_f1_score(gold, before)
                    after_f1[model_name] = macro_f1_score(gold, after)
            rows.append(
                SwapRow(
                    stance=stance,
                    direction=name,
                    n_eligible=len(eligible),
                    n_swapped=len(swapped),
                    n_cannot_flip=cannot,
                    before_f1=before_f1,
                    after_f1=after_f1,
                )
            )
    return rows


# --- significance and cluster comparison ---------------------------------------


def paired_bootstrap(
    gold: Sequence[int],
    pred_a: Sequence[int],
    pred_b: Sequence[int],
    resamples: int = 10000,
    seed: int = 0,
) -> float:
    """One-sided bootstrap p-value for macro-F1(a) > macro-F1(b): the
    fraction of resamples where the advantage disappears."""
    if len(gold) != len(pred_a) or len(gold) != len(pred_b) or not gold:
        raise LengthMismatch("gold and prediction sequences must share a nonzero length")
    if resamples < 1:
        raise ValueError("resamples must be >= 1")
    gold_arr = np.asarray(gold, dtype=np.int64)
    a_arr = np.asarray(pred_a, dtype=np.int64)
    b_arr = np.asarray(pred_b, dtype=np.int64)
    gen = np.random.Generator(np.random.PCG64(seed))
    n = len(gold_arr)
    hits = 0
    for _ in range(resamples):
        idx = gen.integers(0, n, size=n)
        f1_a = _fast_macro_f1(gold_arr[idx], a_arr[idx])
        f1_b = _fast_macro_f1(gold_arr[idx], b_arr[idx])
        if f1_a - f1_b <= 0.0:
            hits += 1
    return hits / resamples


def _fast_macro_f1(gold: np.ndarray, pred: np.ndarray) -> float:
    counts = np.bincount(gold * N_LABELS + pred, minlength=N_LABELS * N_LABELS).reshape(
        N_LABELS, N_LABELS
    )
    tp = np.diag(counts).astype(np.float64)
    fp = counts.sum(axis=0) - tp
    fn = counts.sum(axis=1) - tp
    denom = 2 * tp + fp + fn
    f1 = np.divide(2 * tp, denom, out=np.zeros(N_LABELS), where=denom > 0)
    return float(f1.mean())


def cluster_comparison(
    stat_by_cluster: Mapping[int, float],
    f1_a: Mapping[int, float],
    f1_b: Mapping[int, float],
    bin_edges: Sequence[float],
) -> list[tuple[float, float, float, int]]:
    """Percent of clusters (with statistic >= each threshold) where each
    model scores strictly higher; ties split 0.5/0.5.

    Returns (threshold, pct_a, pct_b, n_clusters) rows; thresholds with no
    qualifying cluster are omitted.
    """
    if not stat_by_cluster:
        raise NoClusters("no clusters to compare")
    missing = [c for c in stat_by_cluster if c not in f1_a or c not in f1_b]
    if missing:
        raise ValueError(f"clusters {missing} lack scores for both models")
    rows = []
    for threshold in bin_edges:
        clusters = [c for c, v in stat_by_cluster.items() if v >= threshold]
        if not clusters:
            continue
        wins_a = wins_b = 0.0
        for c in clusters:
            if f1_a[c] > f1_b[c]:
                wins_a += 1.0
            elif f1_b[c] > f1_a[c]:
                wins_b += 1.0
            else:
                wins_a += 0.5
                wins_b += 0.5
        n = len(clusters)
        rows.append((float(threshold), 100.0 * wins_a / n, 100.0 * wins_b / n, n))
    return rows
