"""Reference predictors: cluster majority, bag-of-words logistic regression,
and two-layer heads over cluster or pooled representations."""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from math import sqrt
from typing import Optional, Sequence

import numpy as np
from scipy.optimize import minimize

from . import embed
from .corpus import DatasetSplit, StanceExample, StanceLabel, tokenize_document
from .errors import (
    EmptyTrainSet,
    MissingEmbedding,
    ModeUnavailable,
    ShapeMismatch,
    UnassignedExample,
)
from .evaluate import macro_f1_score
from .gtr import ClusterModel, assign_r, point_id
from .model import AdamState, TrainConfig, adam_step, resolve_tensors

N_LABELS = 3


# --- cluster majority ---------------------------------------------------------


@dataclass
class CmajPredictor:
    """Majority training label of the nearest cluster."""

    cluster_labels: dict[int, StanceLabel]
    global_label: StanceLabel
    model: ClusterModel

    def predict_cluster(self, cluster: int) -> StanceLabel:
        return self.cluster_labels.get(cluster, self.global_label)

    def predict_point(self, v_dt: np.ndarray) -> StanceLabel:
        cluster, _ = assign_r(v_dt, self.model)
        return self.predict_cluster(cluster)


def baseline_cmaj(cluster_model: ClusterModel, train_examples: Sequence[StanceExample]) -> CmajPredictor:
    """Per-cluster majority labels; cluster ties and empty clusters fall back
    to the most frequent training label (then the lowest index)."""
    global_counts = Counter(int(ex.label) for ex in train_examples)
    global_label = StanceLabel(
        min(
            range(N_LABELS),
            key=lambda c: (-global_counts.get(c, 0), c),
        )
    )
    per_cluster: dict[int, Counter] = {}
    for ex in train_examples:
        pid = point_id(ex.doc_id, ex.topic_key)
        if pid not in cluster_model.assignments:
            raise UnassignedExample(f"train example {ex.example_id} is not assigned")
        per_cluster.setdefault(cluster_model.assignments[pid], Counter())[int(ex.label)] += 1
    cluster_labels: dict[int, StanceLabel] = {}
    for cluster, counts in per_cluster.items():
        top = max(counts.values())
        winners = [c for c, v in counts.items() if v == top]
        cluster_labels[cluster] = StanceLabel(winners[0]) if len(winners) == 1 else global_label
    return CmajPredictor(cluster_labels=cluster_labels, global_label=global_label, model=cluster_model)


# --- bag-of-words logistic regression ------------------------------------------


@dataclass
class BowvPredictor:
    doc_vocab: dict[str, int]
    topic_vocab: dict[str, int]
    weights: np.ndarray  # (3, n_features)
    bias: np.ndarray  # (3,)

    @property
    def n_features(self) -> int:
        return len(self.doc_vocab) + len(self.topic_vocab)

    def featurize(self, ex: StanceExample) -> np.ndarray:
        x = np.zeros(self.n_features)
        for tok in tokenize_document(ex.document):
            idx = self.doc_vocab.get(tok)
            if idx is not None:
                x[idx] += 1.0
        offset = len(self.doc_vocab)
        for tok in ex.topic_tokens:
            idx = self.topic_vocab.get(tok)
            if idx is not None:
                x[offset + idx] += 1.0
        return x

    def predict_proba(self, ex: StanceExample) -> np.ndarray:
        z = self.weights @ self.featurize(ex) + self.bias
        z = z - z.max()
        e = np.exp(z)
        return e / e.sum()

    def predict(self, ex: StanceExample) -> StanceLabel:
        return StanceLabel(int(np.argmax(self.predict_proba(ex))))


def logreg_objective(
    flat: np.ndarray, features: np.ndarray, labels: np.ndarray, l2: float
) -> tuple[float, np.ndarray]:
    """Mean cross-entropy plus (l2/2)||W||^2 (bias unpenalized), with gradient."""
    n, f = features.shape
    w = flat[: N_LABELS * f].reshape(N_LABELS, f)
    b = flat[N_LABELS * f :]
    z = features @ w.T + b
    z -= z.max(axis=1, keepdims=True)
    e = np.exp(z)
    p = e / e.sum(axis=1, keepdims=True)
    nll = -np.log(np.clip(p[np.arange(n), labels], 1e-12, None)).mean()
    loss = nll + 0.5 * l2 * float((w**2).sum())
    d_z = p.copy()
    d_z[np.arange(n), labels] -= 1.0
    d_z /= n
    g_w = d_z.T @ features + l2 * w
    g_b = d_z.sum(axis=0)
    return float(loss), np.concatenate([g_w.ravel(), g_b])


def baseline_bowv(
    train: Sequence[StanceExample],
    dev: Sequence[StanceExample] = (),
    vocab_cap: int = 10000,
    l2: float = 1e-3,
) -> BowvPredictor:
    """Concatenated document/topic count vectors into a multinomial logistic
    regression with L2 penalty, optimized to gradient-norm tolerance 1e-5.

    Document vocabulary is the ``vocab_cap`` most frequent training tokens
    (ties broken alphabetically); the topic vocabulary keeps every training
    topic token. ``dev`` is accepted for interface parity and not used to fit.
    """
    if not train:
        raise EmptyTrainSet("no training examples")
    doc_counts: Counter[str] = Counter()
    for ex in train:
        doc_counts.update(tokenize_document(ex.document))
    ranked = sorted(doc_counts.items(), key=lambda kv: (-kv[1], kv[0]))[:vocab_cap]
    doc_vocab = {tok: i for i, (tok, _) in enumerate(ranked)}
    topic_tokens = sorted({tok for ex in train for tok in ex.topic_tokens})
    topic_vocab = {tok: i for i, tok in enumerate(topic_tokens)}

    predictor = BowvPredictor(
        doc_vocab=doc_vocab,
        topic_vocab=topic_vocab,
        weights=np.zeros((N_LABELS, len(doc_vocab) + len(topic_vocab))),
        bias=np.zeros(N_LABELS),
    )
    features = np.stack([predictor.featurize(ex) for ex in train])
    labels = np.array([int(ex.label) for ex in train])
    n_features = features.shape[1]
    x0 = np.zeros(N_LABELS * n_features + N_LABELS)
    result = minimize(
        logreg_objective,
        x0,
        args=(features, labels, l2),
        jac=True,
        method="L-BFGS-B",
        options={"maxiter": 5000, "gtol": 1e-7, "ftol": 1e-15},
    )
    flat = result.x
    # polish until the convex objective's gradient norm is within tolerance
    _, grad = logreg_objective(flat, features, labels, l2)
    step = 1.0
    while float(np.abs(grad).max()) > 1e-5:
        loss_before, _ = logreg_objective(flat, features, labels, l2)
        trial = flat - step * grad
        loss_after, _ = logreg_objective(trial, features, labels, l2)
        if loss_after < loss_before:
            flat = trial
            _, grad = logreg_objective(flat, features, labels, l2)
        else:
            step /= 2.0
            if step < 1e-12:
                break
    predictor.weights = flat[: N_LABELS * n_features].reshape(N_LABELS, n_features)
    predictor.bias = flat[N_LABELS * n_features :]
    return predictor


# --- shared two-layer head ------------------------------------------------------


@dataclass
class HeadParams:
    """Two-layer tanh classifier over a fixed-size input."""

    w_1: np.ndarray  # (h, in_dim)
    b_1: np.ndarray  # (h,)
    w_2: np.ndarray  # (3, h)
    b_2: np.ndarray  # (3,)

    def as_dict(self) -> dict[str, np.ndarray]:
        return {"w_1": self.w_1, "b_1": self.b_1, "w_2": self.w_2, "b_2": self.b_2}

    def copy(self) -> "HeadParams":
        return HeadParams(**{k: v.copy() for k, v in self.as_dict().items()})

    @property
    def in_dim(self) -> int:
        return self.w_1.shape[1]

    @property
    def hidden(self) -> int:
        return self.w_1.shape[0]


def init_head(in_dim: int, hidden: int, seed: int = 0) -> HeadParams:
    gen = np.random.Generator(np.random.PCG64(seed))

    def uniform(rows: int, cols: int) -> np.ndarray:
        a = sqrt(6.0 / (rows + cols))
        return gen.uniform(-a, a, size=(rows, cols))

    return HeadParams(
        w_1=uniform(hidden, in_dim),
        b_1=np.zeros(hidden),
        w_2=uniform(3, hidden),
        b_2=np.zeros(3),
    )


def head_forward(x: np.ndarray, params: HeadParams) -> tuple[np.ndarray, dict[str, np.ndarray]]:
    hidden_pre = params.w_1 @ x + params.b_1
    hidden_post = np.tanh(hidden_pre)
    logits = params.w_2 @ hidden_post + params.b_2
    shifted = logits - logits.max()
    e = np.exp(shifted)
    p = e / e.sum()
    return p, {"x": x, "hidden_post": hidden_post, "p": p}


def head_backward(cache: dict[str, np.ndarray], params: HeadParams, label: int) -> dict[str, np.ndarray]:
    d_logits = cache["p"].copy()
    d_logits[int(label)] -= 1.0
    g_w2 = np.outer(d_logits, cache["hidden_post"])
    g_b2 = d_logits
    d_hidden = params.w_2.T @ d_logits
    d_pre = d_hidden * (1.0 - cache["hidden_post"] ** 2)
    g_w1 = np.outer(d_pre, cache["x"])
    g_b1 = d_pre
    return {"w_1": g_w1, "b_1": g_b1, "w_2": g_w2, "b_2": g_b2}


def train_head(
    train_x: np.ndarray,
    train_y: np.ndarray,
    dev_x: Optional[np.ndarray],
    dev_y: Optional[np.ndarray],
    config: TrainConfig,
) -> tuple[HeadParams, list[tuple[int, float, float]]]:
    """Same loop shape as the attention-head trainer: seeded shuffling,
    batch-averaged Adam steps, dev macro-F1 early stopping."""
    if len(train_x) == 0:
        raise EmptyTrainSet("no training rows")
    if len(train_x) != len(train_y):
        raise ShapeMismatch(f"{len(train_x)} inputs vs {len(train_y)} labels")
    params = init_head(train_x.shape[1], config.hidden, seed=config.seed)
    state = AdamState.for_params(params.as_dict())
    rng = np.random.Generator(np.random.PCG64(config.seed + 1))
    has_dev = dev_x is not None and dev_y is not None and len(dev_x) > 0

    best = params.copy()
    best_f1 = -np.inf
    bad = 0
    history: list[tuple[int, float, float]] = []
    n = len(train_x)
    for epoch in range(1, config.epochs + 1):
        order = rng.permutation(n)
        losses = []
        for start in range(0, n, config.batch_size):
            batch = order[start : start + config.batch_size]
            grads: Optional[dict[str, np.ndarray]] = None
            for i in batch:
                p, cache = head_forward(train_x[i], params)
                losses.append(float(-np.log(max(float(p[int(train_y[i])]), 1e-12))))
                g = head_backward(cache, params, int(train_y[i]))
                grads = g if grads is None else {k: grads[k] + g[k] for k in grads}
            assert grads is not None
            grads = {k: v / len(batch) for k, v in grads.items()}
            params = HeadParams(**adam_step(params.as_dict(), grads, state, config.learning_rate))
        if has_dev:
            pred = [int(np.argmax(head_forward(x, params)[0])) for x in dev_x]
            dev_f1 = macro_f1_score([int(y) for y in dev_y], pred)
        else:
            dev_f1 = float("nan")
        history.append((epoch, float(np.mean(losses)), dev_f1))
        if has_dev:
            if dev_f1 > best_f1:
                best_f1, best, bad = dev_f1, params.copy(), 0
            else:
                bad += 1
                if bad > config.patience:
                    break
        else:
            best = params
    return best, history


# --- heads over cluster / pooled representations --------------------------------


@dataclass
class CffnnPredictor:
    """Two-layer head over generalized topic representations alone."""

    params: HeadParams
    history: list[tuple[int, float, float]]

    def predict_proba(self, r_dt: np.ndarray) -> np.ndarray:
        return head_forward(np.asarray(r_dt, dtype=np.float64), self.params)[0]

    def predict(self, r_dt: np.ndarray) -> StanceLabel:
        return StanceLabel(int(np.argmax(self.predict_proba(r_dt))))


def baseline_cffnn(
    train_inputs: np.ndarray,
    train_labels: Sequence[int],
    dev_inputs: Optional[np.ndarray],
    dev_labels: Optional[Sequence[int]],
    config: TrainConfig,
) -> CffnnPredictor:
    params, history = train_head(
        np.asarray(train_inputs, dtype=np.float64),
        np.asarray(train_labels, dtype=np.int64),
        None if dev_inputs is None else np.asarray(dev_inputs, dtype=np.float64),
        None if dev_labels is None else np.asarray(dev_labels, dtype=np.int64),
        config,
    )
    return CffnnPredictor(params=params, history=history)


@dataclass
class PooledPredictor:
    """Two-layer head over mean-pooled document and topic embeddings."""

    mode: str  # "joint" or "separate"
    params: HeadParams
    history: list[tuple[int, float, float]]
    store: embed.EmbeddingStore

    def features(self, ex: StanceExample) -> np.ndarray:
        return pooled_features(ex, self.store, self.mode)

    def predict_proba(self, ex: StanceExample) -> np.ndarray:
        return head_forward(self.features(ex), self.params)[0]

    def predict(self, ex: StanceExample) -> StanceLabel:
        return StanceLabel(int(np.argmax(self.predict_proba(ex))))


def pooled_features(ex: StanceExample, store: embed.EmbeddingStore, mode: str) -> np.ndarray:
    """[mean document tokens; mean topic tokens] in the requested mode."""
    if mode == "joint":
        if ex.example_id not in store.joint:
            raise MissingEmbedding(f"no joint entry for {ex.example_id}")
        topic_seq, doc_seq = store.joint[ex.example_id]
    elif mode == "separate":
        if ex.doc_id not in store.sep_docs or ex.topic_key not in store.sep_topics:
            raise MissingEmbedding(f"no separate entries for {ex.example_id}")
        topic_seq = store.sep_topics[ex.topic_key]
        doc_seq = store.sep_docs[ex.doc_id]
    else:
        raise ValueError(f"unknown mode {mode!r}")
    return np.concatenate(
        [
            doc_seq.vectors.astype(np.float64).mean(axis=0),
            topic_seq.vectors.astype(np.float64).mean(axis=0),
        ]
    )


def baseline_pooled_head(
    mode: str,
    split: DatasetSplit,
    store: embed.EmbeddingStore,
    config: TrainConfig,
) -> PooledPredictor:
    """Pooled-embedding classifier in joint or separate encoding mode."""
    if mode == "joint" and not store.joint:
        raise ModeUnavailable("store has no joint entries")
    if mode == "separate" and (not store.sep_docs or not store.sep_topics):
        raise ModeUnavailable("store has no separate entries")
    if not split.train:
        raise EmptyTrainSet("no training examples")
    train_x = np.stack([pooled_features(ex, store, mode) for ex in split.train])
    train_y = np.array([int(ex.label) for ex in split.train])
    dev_examples = [split.dev[i] for i in split.zero_shot_dev]
    if dev_examples:
        dev_x = np.stack([pooled_features(ex, store, mode) for ex in dev_examples])
        dev_y = np.array([int(ex.label) for ex in dev_examples])
    else:
        dev_x = dev_y = None
    params, history = train_head(train_x, train_y, dev_x, dev_y, config)
    return PooledPredictor(mode=mode, params=params, history=history, store=store)


def cffnn_dataset(
    examples: Sequence[StanceExample],
    store: embed.EmbeddingStore,
    cluster_model: ClusterModel,
    tfidf: embed.TfIdfModel,
) -> tuple[np.ndarray, np.ndarray]:
    """Generalized-topic-representation inputs and labels for a head."""
    xs, ys = [], []
    for ex in examples:
        tensors = resolve_tensors(ex, store, cluster_model, tfidf)
        xs.append(tensors.r_dt)
        ys.append(tensors.label)
    return np.stack(xs), np.array(ys, dtype=np.int64)
