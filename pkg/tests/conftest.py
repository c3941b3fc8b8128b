import random

import pytest

from stancekit.corpus import DatasetSplit, SourceKind, StanceExample, StanceLabel
from stancekit.embed import build_stub_store, tfidf_fit
from stancekit.gtr import build_points, ward_cluster


def make_example(
    doc_id: str,
    topic_tokens,
    label=StanceLabel.PRO,
    kind=SourceKind.HEUR,
    document: str | None = None,
    sarcasm: bool = False,
    example_id: str | None = None,
) -> StanceExample:
    tokens = tuple(topic_tokens)
    key = " ".join(tokens)
    return StanceExample(
        example_id=example_id or f"{doc_id}::{kind.value}::{key}",
        doc_id=doc_id,
        document=document if document is not None else f"comment text of {doc_id}",
        topic_raw=" ".join(tokens),
        topic_tokens=tokens,
        label=label,
        kind=kind,
        sarcasm=sarcasm,
    )


WORDS = [
    "gun", "control", "tax", "break", "school", "lunch", "climate", "policy",
    "wage", "floor", "prison", "reform", "trade", "deal", "water", "quality",
    "transit", "fare", "zoning", "density", "solar", "grid", "housing", "rent",
    "ballot", "access", "parole", "board", "tuition", "cost", "traffic", "toll",
]


def random_dataset(rng: random.Random, n_docs: int = 12, topic_pool: int = 10):
    """Random dataset with 2-token topics drawn from disjoint-ish word pairs."""
    pairs = [(WORDS[2 * i], WORDS[2 * i + 1]) for i in range(len(WORDS) // 2)]
    rng.shuffle(pairs)
    pool = pairs[:topic_pool]
    examples = []
    for d in range(n_docs):
        doc_id = f"doc{d}"
        n_topics = rng.randint(1, 3)
        topics = rng.sample(pool, n_topics)
        for tokens in topics:
            kind = rng.choice([SourceKind.HEUR, SourceKind.CORR, SourceKind.LIST])
            label = StanceLabel(rng.randint(0, 2))
            if kind is SourceKind.SYNTH_NEUTRAL:
                label = StanceLabel.NEUTRAL
            examples.append(make_example(doc_id, tokens, label=label, kind=kind))
    return examples


@pytest.fixture
def rng():
    return random.Random(20240817)


def build_separable_corpus(
    n_families: int = 6,
    train_per_family: int = 100,
    dev_per_family: int = 25,
    seed: int = 0,
    content_labels: bool = False,
):
    """Synthetic corpus whose document vocabulary determines a family.

    One example per document. Training topics come from a per-family topic
    vocabulary; dev topics use fresh tokens so every dev example is
    zero-shot. With ``content_labels`` false the label is family % 3 (so
    cluster identity determines it); with true, a per-document cue token
    determines the label inside each family (60% "hopecue" -> Pro,
    40% "dreadcue" -> Con).
    """
    rng = random.Random(seed)
    # topics carry no label signal: shared vocabulary across families
    shared_topics = [f"subject{w}" for w in range(12)]
    train, dev = [], []
    for f in range(n_families):
        doc_vocab = [f"fam{f}word{w}" for w in range(5)]
        for i in range(train_per_family + dev_per_family):
            is_dev = i >= train_per_family
            words = rng.sample(doc_vocab, 4)
            if content_labels:
                pro = (i % 5) < 3
                words.append("hopecue" if pro else "dreadcue")
                label = StanceLabel.PRO if pro else StanceLabel.CON
            else:
                label = StanceLabel(f % 3)
            rng.shuffle(words)
            if is_dev:
                doc_id = f"dv{f}x{i}"
                topic = (f"zs{f}topic{i}a", f"zs{f}topic{i}b")
            else:
                doc_id = f"tr{f}x{i}"
                topic = tuple(rng.sample(shared_topics, 5))
            ex = make_example(doc_id, topic, label=label, document=" ".join(words))
            (dev if is_dev else train).append(ex)
    split = DatasetSplit(
        train=tuple(train),
        dev=tuple(dev),
        test=(),
        zero_shot_dev=tuple(range(len(dev))),
        few_shot_dev=(),
        zero_shot_test=(),
        few_shot_test=(),
    )
    return split


def build_separable_pipeline(
    n_families: int = 6,
    train_per_family: int = 100,
    dev_per_family: int = 25,
    dim: int = 16,
    seed: int = 0,
    content_labels: bool = False,
):
    """Separable corpus plus stub store, tf-idf model, and cluster model."""
    split = build_separable_corpus(
        n_families, train_per_family, dev_per_family, seed, content_labels
    )
    store = build_stub_store(list(split.train) + list(split.dev), dim=dim, salt=seed)
    train_docs = []
    seen = set()
    for ex in split.train:
        if ex.doc_id not in seen:
            seen.add(ex.doc_id)
            train_docs.append(list(store.sep_docs[ex.doc_id].tokens))
    tfidf = tfidf_fit(train_docs)
    points, ids = build_points(split.train, store, tfidf)
    cluster_model = ward_cluster(points, ids, k=n_families)
    return split, store, tfidf, cluster_model
