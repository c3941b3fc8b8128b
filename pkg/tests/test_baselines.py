import math

import numpy as np
import pytest

from stancekit.baselines import (
    baseline_bowv,
    baseline_cffnn,
    baseline_cmaj,
    baseline_pooled_head,
    head_backward,
    head_forward,
    init_head,
    logreg_objective,
    pooled_features,
)
from stancekit.corpus import StanceLabel
from stancekit.errors import EmptyTrainSet, ModeUnavailable, UnassignedExample
from stancekit.evaluate import macro_f1_score
from stancekit.gtr import ClusterModel, point_id
from stancekit.model import TrainConfig

from conftest import build_separable_pipeline, make_example

CON, PRO, NEU = StanceLabel.CON, StanceLabel.PRO, StanceLabel.NEUTRAL


def cluster_model_for(assignments, k=2, dim=2):
    return ClusterModel(
        k=k, dim=dim, centroids=np.zeros((k, dim)), assignments=assignments, merge_log=()
    )


class TestCmaj:
    def examples(self):
        return [
            make_example("d1", ("gun", "control"), label=PRO),
            make_example("d2", ("gun", "control"), label=PRO),
            make_example("d3", ("gun", "control"), label=CON),
        ]

    def test_majority_label(self):
        examples = self.examples()
        assignments = {point_id(ex.doc_id, ex.topic_key): 0 for ex in examples}
        pred = baseline_cmaj(cluster_model_for(assignments), examples)
        assert pred.predict_cluster(0) is PRO

    def test_empty_cluster_falls_back_to_global(self):
        examples = self.examples()
        assignments = {point_id(ex.doc_id, ex.topic_key): 0 for ex in examples}
        pred = baseline_cmaj(cluster_model_for(assignments), examples)
        assert pred.predict_cluster(1) is PRO  # global majority

    def test_balanced_cluster_uses_global_majority(self):
        examples = [
            make_example("d1", ("gun", "control"), label=PRO),
            make_example("d2", ("tax", "break"), label=CON),
            make_example("d3", ("school", "lunch"), label=CON),
        ]
        assignments = {
            point_id("d1", "gun control"): 0,
            point_id("d2", "tax break"): 0,
            point_id("d3", "school lunch"): 1,
        }
        pred = baseline_cmaj(cluster_model_for(assignments), examples)
        # cluster 0 is tied Pro/Con; global majority is Con
        assert pred.predict_cluster(0) is CON

    def test_global_tie_lowest_index(self):
        examples = [
            make_example("d1", ("gun", "control"), label=PRO),
            make_example("d2", ("tax", "break"), label=CON),
        ]
        assignments = {
            point_id("d1", "gun control"): 0,
            point_id("d2", "tax break"): 0,
        }
        pred = baseline_cmaj(cluster_model_for(assignments), examples)
        assert pred.predict_cluster(0) is CON  # index 0 among the tied labels

    def test_unassigned_raises(self):
        with pytest.raises(UnassignedExample):
            baseline_cmaj(cluster_model_for({}), self.examples())

    def test_predict_point_routes_through_nearest_centroid(self):
        examples = [
            make_example("d1", ("gun", "control"), label=PRO),
            make_example("d2", ("tax", "break"), label=CON),
        ]
        model = ClusterModel(
            k=2,
            dim=2,
            centroids=np.array([[0.0, 0.0], [10.0, 10.0]]),
            assignments={
                point_id("d1", "gun control"): 0,
                point_id("d2", "tax break"): 1,
            },
            merge_log=(),
        )
        pred = baseline_cmaj(model, examples)
        assert pred.predict_point(np.array([0.5, -0.5])) is PRO
        assert pred.predict_point(np.array([9.0, 11.0])) is CON


def oracle_logreg_gd(features, labels, l2, max_iters=200000):
    """Long-run gradient descent on an independently coded objective."""
    n, f = features.shape
    w = [[0.0] * f for _ in range(3)]
    b = [0.0, 0.0, 0.0]

    def grad():
        gw = [[l2 * w[c][j] for j in range(f)] for c in range(3)]
        gb = [0.0, 0.0, 0.0]
        for i in range(n):
            z = [sum(w[c][j] * features[i][j] for j in range(f)) + b[c] for c in range(3)]
            zmax = max(z)
            e = [math.exp(v - zmax) for v in z]
            tot = sum(e)
            for c in range(3):
                delta = (e[c] / tot - (1.0 if labels[i] == c else 0.0)) / n
                for j in range(f):
                    gw[c][j] += delta * features[i][j]
                gb[c] += delta
        return gw, gb

    lr = 1.0
    for _ in range(max_iters):
        gw, gb = grad()
        gmax = max(
            max(abs(v) for row in gw for v in row),
            max(abs(v) for v in gb),
        )
        if gmax < 1e-9:
            break
        for c in range(3):
            for j in range(f):
                w[c][j] -= lr * gw[c][j]
            b[c] -= lr * gb[c]
    return np.array(w), np.array(b)


class TestBowv:
    def separable_train(self):
        return [
            make_example("d1", ("gun", "control"), label=PRO, document="freedom matters"),
            make_example("d2", ("gun", "control"), label=PRO, document="freedom wins"),
            make_example("d3", ("gun", "control"), label=CON, document="danger looms"),
            make_example("d4", ("gun", "control"), label=CON, document="danger grows"),
        ]

    def test_separable_train_accuracy(self):
        train = self.separable_train()
        predictor = baseline_bowv(train, l2=1e-4)
        assert all(predictor.predict(ex) is ex.label for ex in train)

    def test_huge_l2_predicts_prior(self):
        train = [
            make_example("d1", ("gun", "control"), label=PRO, document="freedom matters"),
            make_example("d2", ("tax", "break"), label=PRO, document="growth happens"),
            make_example("d3", ("school", "lunch"), label=CON, document="danger looms"),
        ]
        predictor = baseline_bowv(train, l2=1e9)
        assert np.abs(predictor.weights).max() < 1e-4
        for ex in train:
            assert predictor.predict(ex) is PRO  # prior argmax

    def test_weights_match_gd_oracle(self):
        train = [
            make_example("d1", ("gun",), label=PRO, document="alpha beta"),
            make_example("d2", ("gun",), label=CON, document="alpha gamma"),
            make_example("d3", ("gun",), label=NEU, document="beta gamma"),
            make_example("d4", ("gun",), label=PRO, document="alpha beta gamma"),
        ]
        predictor = baseline_bowv(train, l2=0.1)
        features = np.stack([predictor.featurize(ex) for ex in train])
        labels = [int(ex.label) for ex in train]
        w_star, b_star = oracle_logreg_gd(features, labels, l2=0.1)
        assert np.abs(predictor.weights - w_star).max() < 1e-3
        # bias is only identified up to a constant shift
        assert np.abs(
            (predictor.bias - predictor.bias.mean()) - (b_star - b_star.mean())
        ).max() < 1e-3

    def test_gradient_norm_at_solution(self):
        train = self.separable_train()
        predictor = baseline_bowv(train, l2=0.05)
        features = np.stack([predictor.featurize(ex) for ex in train])
        labels = np.array([int(ex.label) for ex in train])
        flat = np.concatenate([predictor.weights.ravel(), predictor.bias])
        _, grad = logreg_objective(flat, features, labels, 0.05)
        assert np.abs(grad).max() <= 1e-5

    def test_vocab_cap(self):
        train = [
            make_example("d1", ("gun",), label=PRO, document="aa bb cc dd ee ff aa bb"),
        ]
        predictor = baseline_bowv(train, vocab_cap=3)
        assert len(predictor.doc_vocab) == 3

    def test_empty_train(self):
        with pytest.raises(EmptyTrainSet):
            baseline_bowv([])


def finite_difference_head(params, x, label, step=1e-5):
    grads = {}
    for name, arr in params.as_dict().items():
        g = np.zeros_like(arr)
        flat = arr.ravel()
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + step
            up = -math.log(max(head_forward(x, params)[0][label], 1e-300))
            flat[i] = orig - step
            down = -math.log(max(head_forward(x, params)[0][label], 1e-300))
            flat[i] = orig
            g.ravel()[i] = (up - down) / (2 * step)
        grads[name] = g
    return grads


class TestHeadGradients:
    @pytest.mark.parametrize("seed", range(10))
    def test_matches_finite_differences(self, seed):
        rng = np.random.default_rng(seed)
        in_dim = int(rng.choice([8, 16]))
        h = int(rng.choice([3, 5]))
        params = init_head(in_dim, h, seed=seed)
        x = rng.normal(size=in_dim)
        label = int(rng.integers(0, 3))
        p, cache = head_forward(x, params)
        analytic = head_backward(cache, params, label)
        numeric = finite_difference_head(params, x, label)
        for name in analytic:
            a, b = analytic[name], numeric[name]
            denom = np.maximum(np.abs(a) + np.abs(b), 1e-4)
            assert float(np.max(np.abs(a - b) / denom)) <= 1e-4


class TestCffnn:
    def test_cluster_determined_labels(self):
        rng = np.random.default_rng(0)
        centroids = rng.normal(size=(6, 12))
        train_x = np.repeat(centroids, 30, axis=0)
        train_y = np.repeat(np.arange(6) % 3, 30)
        dev_x = np.repeat(centroids, 8, axis=0)
        dev_y = np.repeat(np.arange(6) % 3, 8)
        config = TrainConfig(epochs=20, patience=20, batch_size=16, hidden=16, seed=0)
        predictor = baseline_cffnn(train_x, train_y, dev_x, dev_y, config)
        pred = [int(predictor.predict(x)) for x in dev_x]
        assert macro_f1_score([int(y) for y in dev_y], pred) >= 0.9

    def test_single_class_constant_predictor(self):
        rng = np.random.default_rng(1)
        train_x = rng.normal(size=(40, 6))
        train_y = np.full(40, 2)
        config = TrainConfig(
            learning_rate=0.01, epochs=200, patience=200, batch_size=8, hidden=8, seed=0
        )
        predictor = baseline_cffnn(train_x, train_y, None, None, config)
        assert {int(predictor.predict(x)) for x in train_x} == {2}


@pytest.fixture(scope="module")
def separable():
    return build_separable_pipeline(
        n_families=6, train_per_family=60, dev_per_family=15, dim=16, seed=7
    )


class TestPooledHead:
    def test_modes_produce_different_outputs(self, separable):
        split, store, tfidf, cm = separable
        config = TrainConfig(epochs=3, patience=3, batch_size=32, hidden=16, seed=0)
        joint = baseline_pooled_head("joint", split, store, config)
        separate = baseline_pooled_head("separate", split, store, config)
        diffs = [
            not np.allclose(joint.predict_proba(ex), separate.predict_proba(ex))
            for ex in split.dev[:10]
        ]
        assert any(diffs)

    def test_separable_f1(self, separable):
        split, store, tfidf, cm = separable
        config = TrainConfig(epochs=20, patience=20, batch_size=16, hidden=32, seed=0)
        predictor = baseline_pooled_head("joint", split, store, config)
        dev = [split.dev[i] for i in split.zero_shot_dev]
        pred = [int(predictor.predict(ex)) for ex in dev]
        gold = [int(ex.label) for ex in dev]
        assert macro_f1_score(gold, pred) >= 0.9

    def test_mode_unavailable(self, separable):
        split, store, tfidf, cm = separable
        from stancekit.embed import EmbeddingStore

        empty = EmbeddingStore(dim=store.dim)
        with pytest.raises(ModeUnavailable):
            baseline_pooled_head("joint", split, empty, TrainConfig())

    def test_features_shapes(self, separable):
        split, store, tfidf, cm = separable
        ex = split.train[0]
        assert pooled_features(ex, store, "joint").shape == (2 * store.dim,)
        assert pooled_features(ex, store, "separate").shape == (2 * store.dim,)
