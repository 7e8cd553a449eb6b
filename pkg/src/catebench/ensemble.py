"""Stacked ensembles: convex member weights from out-of-fold least squares.

Member weights solve  min_w ||Z w - y||^2  over the probability simplex,
where column j of Z holds member j's out-of-fold predictions from a shared
5-fold layout.  Members are then refit on the full sample.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .learners import FittedLearner, LearnerSpec, fit, predict
from .seeding import stable_seed

STACK_CV_FOLDS = 5


def simplex_lstsq(z: np.ndarray, y: np.ndarray, sample_weight: np.ndarray | None = None) -> np.ndarray:
    """Exact least squares over the simplex by active-support enumeration.

    Every nonempty support is solved through its equality-constrained KKT
    system (pseudo-inverse, so duplicate columns collapse to even weights);
    the feasible solution with the lowest objective wins, ties resolving to
    the larger support and then the smaller-norm weight vector.
    """
    z = np.asarray(z, dtype=float)
    y = np.asarray(y, dtype=float)
    if sample_weight is not None:
        sw = np.sqrt(np.asarray(sample_weight, dtype=float))
        z = z * sw[:, None]
        y = y * sw
    m = z.shape[1]
    if m == 1:
        return np.array([1.0])

    gram = z.T @ z
    zy = z.T @ y
    best: tuple[float, int, float, np.ndarray] | None = None
    scale = max(1.0, float(y @ y))
    for size in range(m, 0, -1):
        for support in itertools.combinations(range(m), size):
            s = list(support)
            k = len(s)
            kkt = np.zeros((k + 1, k + 1))
            kkt[:k, :k] = gram[np.ix_(s, s)]
            kkt[:k, k] = 1.0
            kkt[k, :k] = 1.0
            rhs = np.concatenate([zy[s], [1.0]])
            sol, *_ = np.linalg.lstsq(kkt, rhs, rcond=None)
            ws = sol[:k]
            if np.any(ws < -1e-9) or abs(ws.sum() - 1.0) > 1e-6:
                continue
            full = np.zeros(m)
            full[s] = np.clip(ws, 0.0, None)
            full /= full.sum()
            obj = float(full @ gram @ full - 2.0 * full @ zy)
            cand = (obj, -k, float(full @ full), full)
            if best is None or (best[0] - obj) > 1e-12 * scale or (
                abs(best[0] - obj) <= 1e-12 * scale and cand[1:3] < best[1:3]
            ):
                best = cand
    assert best is not None  # the singletons are always feasible
    return best[3]


@dataclass
class StackedModel:
    """Weighted combination of refit members plus its CV bookkeeping."""

    members: list[FittedLearner]
    weights: np.ndarray
    cv_risks: np.ndarray
    task: str
    cv_risk: float  # risk of the weighted combination on the same folds

    def predict(self, x: np.ndarray) -> np.ndarray:
        return predict_stack(self, x)


def fit_stack(
    specs: list[LearnerSpec],
    x: np.ndarray,
    y: np.ndarray,
    task: str = "regression",
    seed: int = 0,
    sample_weight: np.ndarray | None = None,
    clip: tuple[float, float] = (0.01, 0.99),
) -> StackedModel:
    """Fit the stacked ensemble.

    Member seeds derive from spec content rather than list position, so
    permuting ``specs`` permutes the weights identically.
    """
    if not specs:
        raise ValueError("need at least one learner spec")
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    n = x.shape[0]
    if n < 10:
        raise ValueError(f"stacking needs at least 10 rows, got {n}")
    w = np.ones(n) if sample_weight is None else np.asarray(sample_weight, dtype=float)

    rng = np.random.default_rng(stable_seed(seed, "stack-folds"))
    order = rng.permutation(n)
    bounds = np.linspace(0, n, STACK_CV_FOLDS + 1).astype(int)

    z = np.empty((n, len(specs)))
    for j, spec in enumerate(specs):
        for f in range(STACK_CV_FOLDS):
            hold = order[bounds[f]:bounds[f + 1]]
            mask = np.ones(n, dtype=bool)
            mask[hold] = False
            member = fit(
                spec, x[mask], y[mask], task=task, sample_weight=w[mask],
                clip=clip, seed=stable_seed(seed, "cv", spec.key(), f),
            )
            z[hold, j] = predict(member, x[hold])

    cv_risks = np.average((z - y[:, None]) ** 2, axis=0, weights=w)
    weights = simplex_lstsq(z, y, sample_weight=w)
    mixed = z @ weights
    if task == "probability":
        mixed = np.clip(mixed, clip[0], clip[1])
    cv_risk = float(np.average((mixed - y) ** 2, weights=w))

    members = [
        fit(spec, x, y, task=task, sample_weight=w, clip=clip,
            seed=stable_seed(seed, "full", spec.key()))
        for spec in specs
    ]
    return StackedModel(members=members, weights=weights, cv_risks=cv_risks,
                        task=task, cv_risk=cv_risk)


def predict_stack(model: StackedModel, x: np.ndarray) -> np.ndarray:
    """Convex combination of member predictions; probabilities re-clipped."""
    x = np.asarray(x, dtype=float)
    out = np.zeros(x.shape[0])
    for weight, member in zip(model.weights, model.members):
        if weight > 0.0:
            out += weight * predict(member, x)
    if model.task == "probability":
        clip = model.members[0].clip
        out = np.clip(out, clip[0], clip[1])
    return out
