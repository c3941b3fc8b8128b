"""Topic-grouped attention head: forward pass, manual gradients, Adam, training."""

from __future__ import annotations

import struct
from dataclasses import dataclass
from math import sqrt
from typing import Optional, Sequence

import numpy as np

from . import embed
from .corpus import DatasetSplit, StanceExample, StanceLabel
from .errors import (
    BadLabel,
    BadMagic,
    DimMismatch,
    EmptyDocument,
    EmptyTopic,
    EmptyTrainSet,
    MissingEmbedding,
    ShapeMismatch,
    StaleCache,
    TruncatedFile,
    VersionMismatch,
)
from .evaluate import macro_f1_score
from .gtr import ClusterModel, assign_r, point_id

PARAMS_MAGIC = b"TGAP"
PARAMS_VERSION = 1


@dataclass
class TgaParams:
    """Trainable head: attention projection plus a two-layer classifier."""

    w_a: np.ndarray  # (E, 2E)
    w_1: np.ndarray  # (h, 2E)
    b_1: np.ndarray  # (h,)
    w_2: np.ndarray  # (3, h)
    b_2: np.ndarray  # (3,)

    def __post_init__(self) -> None:
        e = self.w_a.shape[0]
        h = self.w_1.shape[0]
        shapes = {
            "w_a": (e, 2 * e),
            "w_1": (h, 2 * e),
            "b_1": (h,),
            "w_2": (3, h),
            "b_2": (3,),
        }
        for name, expected in shapes.items():
            arr = getattr(self, name)
            if arr.shape != expected:
                raise ShapeMismatch(f"{name} has shape {arr.shape}, expected {expected}")
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"{name} contains non-finite values")

    @property
    def e_dim(self) -> int:
        return self.w_a.shape[0]

    @property
    def hidden(self) -> int:
        return self.w_1.shape[0]

    @property
    def attention_scale(self) -> float:
        # fixed scaling, not trainable
        return 1.0 / sqrt(self.e_dim)

    def as_dict(self) -> dict[str, np.ndarray]:
        return {"w_a": self.w_a, "w_1": self.w_1, "b_1": self.b_1, "w_2": self.w_2, "b_2": self.b_2}

    def copy(self) -> "TgaParams":
        return TgaParams(**{k: v.copy() for k, v in self.as_dict().items()})


@dataclass
class ForwardCache:
    """Intermediates of one forward pass, consumed by the backward pass."""

    s: np.ndarray  # (m,) attention weights
    c_dt: np.ndarray  # (E,)
    d_tilde: np.ndarray  # (E,)
    hidden_pre: np.ndarray  # (h,)
    hidden_post: np.ndarray  # (h,)
    logits: np.ndarray  # (3,)
    p: np.ndarray  # (3,)


@dataclass
class TrainConfig:
    learning_rate: float = 0.001
    epochs: int = 20
    patience: int = 3
    batch_size: int = 64
    hidden: int = 32
    seed: int = 0
    max_doc_tokens: int = embed.MAX_DOC_TOKENS
    max_topic_tokens: int = embed.MAX_TOPIC_TOKENS

    def __post_init__(self) -> None:
        if (
            self.learning_rate <= 0
            or self.epochs <= 0
            or self.batch_size <= 0
            or self.hidden <= 0
            or self.max_doc_tokens <= 0
            or self.max_topic_tokens <= 0
            or self.patience < 0
        ):
            raise ValueError(f"invalid training config {self}")


@dataclass
class AdamState:
    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]
    t: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def for_params(cls, params: dict[str, np.ndarray]) -> "AdamState":
        return cls(
            m={k: np.zeros_like(v) for k, v in params.items()},
            v={k: np.zeros_like(v) for k, v in params.items()},
        )


def _softmax(z: np.ndarray) -> np.ndarray:
    shifted = z - z.max()
    exp = np.exp(shifted)
    return exp / exp.sum()


def init_params(e_dim: int, hidden: int, seed: int = 0) -> TgaParams:
    """Symmetric uniform init with limit sqrt(6 / (fan_in + fan_out))."""
    gen = np.random.Generator(np.random.PCG64(seed))

    def uniform(rows: int, cols: int) -> np.ndarray:
        a = sqrt(6.0 / (rows + cols))
        return gen.uniform(-a, a, size=(rows, cols))

    return TgaParams(
        w_a=uniform(e_dim, 2 * e_dim),
        w_1=uniform(hidden, 2 * e_dim),
        b_1=np.zeros(hidden),
        w_2=uniform(3, hidden),
        b_2=np.zeros(3),
    )


def tga_forward(
    t_bar: np.ndarray,
    d_bar: np.ndarray,
    r_dt: np.ndarray,
    params: TgaParams,
) -> tuple[np.ndarray, ForwardCache]:
    """Attention over topic tokens scored against a projection of r_dt,
    concatenated with the document mean and classified.

    t_bar is (m, E) topic token embeddings, d_bar is (n, E) document token
    embeddings, r_dt is the (2E,) generalized topic representation.
    """
    t_bar = np.asarray(t_bar, dtype=np.float64)
    d_bar = np.asarray(d_bar, dtype=np.float64)
    r_dt = np.asarray(r_dt, dtype=np.float64)
    e = params.e_dim
    if t_bar.ndim != 2 or t_bar.shape[0] == 0:
        raise EmptyTopic("topic sequence is empty")
    if d_bar.ndim != 2 or d_bar.shape[0] == 0:
        raise EmptyDocument("document sequence is empty")
    if t_bar.shape[1] != e or d_bar.shape[1] != e or r_dt.shape != (2 * e,):
        raise DimMismatch(
            f"topic {t_bar.shape}, document {d_bar.shape}, r_dt {r_dt.shape} vs E={e}"
        )
    q = params.w_a @ r_dt
    s = _softmax(params.attention_scale * (t_bar @ q))
    c_dt = s @ t_bar
    d_tilde = d_bar.mean(axis=0)
    x = np.concatenate([d_tilde, c_dt])
    hidden_pre = params.w_1 @ x + params.b_1
    hidden_post = np.tanh(hidden_pre)
    logits = params.w_2 @ hidden_post + params.b_2
    p = _softmax(logits)
    cache = ForwardCache(
        s=s,
        c_dt=c_dt,
        d_tilde=d_tilde,
        hidden_pre=hidden_pre,
        hidden_post=hidden_post,
        logits=logits,
        p=p,
    )
    return p, cache


def cross_entropy(p: np.ndarray, label: int) -> float:
    """Negative log probability of the gold label, floored at 1e-12."""
    if not 0 <= int(label) <= 2:
        raise BadLabel(f"label {label} outside {{0, 1, 2}}")
    return float(-np.log(max(float(p[int(label)]), 1e-12)))


def tga_backward(
    cache: ForwardCache,
    t_bar: np.ndarray,
    d_bar: np.ndarray,
    r_dt: np.ndarray,
    params: TgaParams,
    label: int,
) -> dict[str, np.ndarray]:
    """Exact gradients of cross_entropy(tga_forward(...)) for the head
    parameters; embeddings and r_dt are frozen upstream and get none.
    """
    t_bar = np.asarray(t_bar, dtype=np.float64)
    d_bar = np.asarray(d_bar, dtype=np.float64)
    r_dt = np.asarray(r_dt, dtype=np.float64)
    if not 0 <= int(label) <= 2:
        raise BadLabel(f"label {label} outside {{0, 1, 2}}")
    if cache.s.shape[0] != t_bar.shape[0] or cache.hidden_pre.shape[0] != params.hidden:
        raise StaleCache("cache does not match the inputs or parameters")

    d_logits = cache.p.copy()
    d_logits[int(label)] -= 1.0
    g_w2 = np.outer(d_logits, cache.hidden_post)
    g_b2 = d_logits
    d_hidden = params.w_2.T @ d_logits
    d_pre = d_hidden * (1.0 - cache.hidden_post**2)
    x = np.concatenate([cache.d_tilde, cache.c_dt])
    g_w1 = np.outer(d_pre, x)
    g_b1 = d_pre
    d_x = params.w_1.T @ d_pre
    d_c = d_x[params.e_dim :]
    d_s = t_bar @ d_c
    d_z = cache.s * (d_s - float(cache.s @ d_s))
    d_q = params.attention_scale * (t_bar.T @ d_z)
    g_wa = np.outer(d_q, r_dt)
    return {"w_a": g_wa, "w_1": g_w1, "b_1": g_b1, "w_2": g_w2, "b_2": g_b2}


def adam_step(
    params: dict[str, np.ndarray],
    grads: dict[str, np.ndarray],
    state: AdamState,
    lr: float,
) -> dict[str, np.ndarray]:
    """Bias-corrected Adam update; mutates state, returns fresh parameters."""
    for name, g in grads.items():
        if name not in params or params[name].shape != g.shape:
            raise ShapeMismatch(f"gradient {name} shape {g.shape} unknown or mismatched")
    state.t += 1
    out = {}
    for name, value in params.items():
        g = grads[name]
        state.m[name] = state.beta1 * state.m[name] + (1 - state.beta1) * g
        state.v[name] = state.beta2 * state.v[name] + (1 - state.beta2) * g**2
        m_hat = state.m[name] / (1 - state.beta1**state.t)
        v_hat = state.v[name] / (1 - state.beta2**state.t)
        out[name] = value - lr * m_hat / (np.sqrt(v_hat) + state.eps)
    return out


@dataclass(frozen=True)
class ExampleTensors:
    """Per-example inputs resolved from the store and cluster model."""

    t_bar: np.ndarray
    d_bar: np.ndarray
    r_dt: np.ndarray
    label: int
    cluster: int


def resolve_tensors(
    ex: StanceExample,
    store: embed.EmbeddingStore,
    cluster_model: ClusterModel,
    tfidf: embed.TfIdfModel,
    config: Optional[TrainConfig] = None,
) -> ExampleTensors:
    """Look up joint sequences and the generalized topic representation.

    r_dt comes from the stored assignment when the example's (document,
    topic) point was clustered, otherwise from nearest-centroid assignment
    of its separately-encoded pair vector.
    """
    if ex.example_id not in store.joint:
        raise MissingEmbedding(f"no joint embedding for example {ex.example_id}")
    topic_seq, doc_seq = store.joint[ex.example_id]
    max_t = config.max_topic_tokens if config else embed.MAX_TOPIC_TOKENS
    max_d = config.max_doc_tokens if config else embed.MAX_DOC_TOKENS
    pid = point_id(ex.doc_id, ex.topic_key)
    if pid in cluster_model.assignments:
        cluster = cluster_model.assignments[pid]
        r_dt = cluster_model.centroids[cluster]
    else:
        if ex.doc_id not in store.sep_docs:
            raise MissingEmbedding(f"no separate document embedding for {ex.doc_id}")
        if ex.topic_key not in store.sep_topics:
            raise MissingEmbedding(f"no separate topic embedding for {ex.topic_key!r}")
        v_d = embed.doc_vector(store.sep_docs[ex.doc_id], tfidf)
        v_t = embed.topic_vector(store.sep_topics[ex.topic_key])
        cluster, r_dt = assign_r(embed.pair_vector(v_d, v_t), cluster_model)
    return ExampleTensors(
        t_bar=topic_seq.vectors[:max_t].astype(np.float64),
        d_bar=doc_seq.vectors[:max_d].astype(np.float64),
        r_dt=np.asarray(r_dt, dtype=np.float64),
        label=int(ex.label),
        cluster=cluster,
    )


def train(
    split: DatasetSplit,
    store: embed.EmbeddingStore,
    cluster_model: ClusterModel,
    tfidf: embed.TfIdfModel,
    config: TrainConfig,
) -> tuple[TgaParams, list[tuple[int, float, float]]]:
    """Mini-batch training with per-epoch zero-shot dev scoring.

    Keeps the parameters from the best-scoring epoch and stops once
    ``patience`` consecutive epochs fail to improve. History rows are
    (epoch, mean train loss, zero-shot dev macro-F1).
    """
    if not split.train:
        raise EmptyTrainSet("no training examples")
    train_tensors = [
        resolve_tensors(ex, store, cluster_model, tfidf, config) for ex in split.train
    ]
    dev_examples = [split.dev[i] for i in split.zero_shot_dev]
    dev_tensors = [
        resolve_tensors(ex, store, cluster_model, tfidf, config) for ex in dev_examples
    ]
    params = init_params(store.dim, config.hidden, seed=config.seed)
    state = AdamState.for_params(params.as_dict())
    rng = np.random.Generator(np.random.PCG64(config.seed + 1))

    best_params = params.copy()
    best_f1 = -np.inf
    bad_epochs = 0
    history: list[tuple[int, float, float]] = []
    n = len(train_tensors)
    for epoch in range(1, config.epochs + 1):
        order = rng.permutation(n)
        losses = []
        for start in range(0, n, config.batch_size):
            batch = order[start : start + config.batch_size]
            grads: Optional[dict[str, np.ndarray]] = None
            for i in batch:
                ex_t = train_tensors[i]
                p, cache = tga_forward(ex_t.t_bar, ex_t.d_bar, ex_t.r_dt, params)
                losses.append(cross_entropy(p, ex_t.label))
                g = tga_backward(cache, ex_t.t_bar, ex_t.d_bar, ex_t.r_dt, params, ex_t.label)
                if grads is None:
                    grads = g
                else:
                    for name in grads:
                        grads[name] += g[name]
            assert grads is not None
            for name in grads:
                grads[name] /= len(batch)
            params = TgaParams(**adam_step(params.as_dict(), grads, state, config.learning_rate))
        dev_f1 = _eval_tensors(dev_tensors, params) if dev_tensors else float("nan")
        history.append((epoch, float(np.mean(losses)), dev_f1))
        if dev_tensors:
            if dev_f1 > best_f1:
                best_f1 = dev_f1
                best_params = params.copy()
                bad_epochs = 0
            else:
                bad_epochs += 1
                if bad_epochs > config.patience:
                    break
        else:
            best_params = params
    return best_params, history


def _eval_tensors(tensors: Sequence[ExampleTensors], params: TgaParams) -> float:
    gold, pred = [], []
    for ex_t in tensors:
        p, _ = tga_forward(ex_t.t_bar, ex_t.d_bar, ex_t.r_dt, params)
        gold.append(ex_t.label)
        pred.append(int(np.argmax(p)))
    return macro_f1_score(gold, pred)


def predict(
    ex: StanceExample,
    store: embed.EmbeddingStore,
    cluster_model: ClusterModel,
    tfidf: embed.TfIdfModel,
    params: TgaParams,
) -> tuple[StanceLabel, np.ndarray]:
    """Argmax stance (ties to the lowest index) plus the full distribution."""
    ex_t = resolve_tensors(ex, store, cluster_model, tfidf)
    p, _ = tga_forward(ex_t.t_bar, ex_t.d_bar, ex_t.r_dt, params)
    return StanceLabel(int(np.argmax(p))), p


# --- persistence -----------------------------------------------------------
# "TGAP" | u32 version | u32 E | u32 h | W_a W_1 b_1 W_2 b_2 as f32 row-major


def save_params(params: TgaParams, path: str) -> None:
    out = [PARAMS_MAGIC, struct.pack("<III", PARAMS_VERSION, params.e_dim, params.hidden)]
    for arr in (params.w_a, params.w_1, params.b_1, params.w_2, params.b_2):
        out.append(np.ascontiguousarray(arr, dtype="<f4").tobytes())
    with open(path, "wb") as fh:
        fh.write(b"".join(out))


def load_params(path: str) -> TgaParams:
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:4] != PARAMS_MAGIC:
        raise BadMagic(f"{path}: not a parameter file")
    version, e, h = struct.unpack("<III", data[4:16])
    if version != PARAMS_VERSION:
        raise VersionMismatch(f"{path}: version {version}")
    shapes = [("w_a", (e, 2 * e)), ("w_1", (h, 2 * e)), ("b_1", (h,)), ("w_2", (3, h)), ("b_2", (3,))]
    pos = 16
    arrays = {}
    for name, shape in shapes:
        count = int(np.prod(shape))
        end = pos + 4 * count
        if end > len(data):
            raise TruncatedFile(f"{path}: ends inside {name}")
        arrays[name] = np.frombuffer(data[pos:end], dtype="<f4").reshape(shape).astype(np.float64)
        pos = end
    return TgaParams(**arrays)
