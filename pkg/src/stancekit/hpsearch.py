"""Uniform hyperparameter sampling and expected validation performance."""

from __future__ import annotations

import random
from typing import Callable, Mapping, Sequence

import numpy as np

from .errors import EmptyScores, EmptySpace

SearchSpace = Mapping[str, object]
Objective = Callable[[dict[str, object]], float]


def _sample_dimension(rng: random.Random, spec: object) -> object:
    # A 2-tuple of numbers is a continuous range; any other sequence is a
    # choice set sampled uniformly.
    if (
        isinstance(spec, tuple)
        and len(spec) == 2
        and all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in spec)
    ):
        lo, hi = spec
        return rng.uniform(float(lo), float(hi))
    if isinstance(spec, (list, set, frozenset)):
        return rng.choice(sorted(spec, key=repr) if isinstance(spec, (set, frozenset)) else list(spec))
    raise ValueError(f"cannot sample from dimension spec {spec!r}")


def hp_search(
    space: SearchSpace,
    trials: int,
    seed: int,
    objective: Objective,
) -> tuple[dict[str, object], list[tuple[dict[str, object], float]]]:
    """Sample each dimension independently and uniformly per trial; return
    the argmax configuration (earliest trial wins ties) and the full table."""
    if not space:
        raise EmptySpace("no search dimensions")
    if trials < 1:
        raise ValueError("trials must be >= 1")
    rng = random.Random(seed)
    table: list[tuple[dict[str, object], float]] = []
    for _ in range(trials):
        config = {name: _sample_dimension(rng, space[name]) for name in sorted(space)}
        table.append((config, float(objective(config))))
    best = max(enumerate(table), key=lambda item: (item[1][1], -item[0]))[1][0]
    return best, table


def expected_validation_performance(trial_scores: Sequence[float]) -> np.ndarray:
    """Curve of E[max of n trials] for n = 1..T from observed scores.

    With scores sorted ascending, the max of n uniform draws equals the
    i-th order statistic with probability (i/T)^n - ((i-1)/T)^n.
    """
    if len(trial_scores) == 0:
        raise EmptyScores("no trial scores")
    scores = np.sort(np.asarray(trial_scores, dtype=np.float64))
    t = len(scores)
    ranks = np.arange(1, t + 1, dtype=np.float64)
    curve = np.empty(t)
    for n in range(1, t + 1):
        weights = (ranks / t) ** n - ((ranks - 1) / t) ** n
        curve[n - 1] = float(scores @ weights)
    return curve
