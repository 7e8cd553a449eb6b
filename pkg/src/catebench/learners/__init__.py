"""Base regression / probability learners.

Five candidate algorithms: the sample mean, ordinary least squares, the
lasso (internal 5-fold CV over a decreasing lambda grid), a random forest
and gradient-boosted trees.  Probability-task models regress on {0, 1}
labels and clip predictions into an open interval so downstream ratios
stay finite.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Mapping

import numpy as np

from .lasso import LassoState, fit_lasso_cv, l1_coordinate_descent, predict_lasso
from .trees import (
    BoostState,
    ForestState,
    fit_boost,
    fit_forest,
    predict_boost,
    predict_forest,
)

__all__ = [
    "LEARNER_KINDS",
    "LearnerSpec",
    "LearnerConfig",
    "DESK_LEARNER_CONFIG",
    "FittedLearner",
    "fit",
    "predict",
    "candidate_specs",
    "l1_coordinate_descent",
]

LEARNER_KINDS = ("mean", "linear", "l1_linear", "random_forest", "boosted_trees")

_POSITIVE_PARAMS = {
    "n_trees", "mtry", "min_leaf", "n_rounds",
    "n_lambdas", "cv_folds", "holdout_fraction", "patience",
}


@dataclass(frozen=True)
class LearnerSpec:
    """One candidate algorithm plus its hyperparameters and seed."""

    kind: str
    params: Mapping[str, Any] = field(default_factory=dict)
    seed: int = 0

    def __post_init__(self):
        if self.kind not in LEARNER_KINDS:
            raise ValueError(f"unknown learner kind {self.kind!r}")
        for key, val in self.params.items():
            if val is None:
                continue
            if key in _POSITIVE_PARAMS and not val > 0:
                raise ValueError(f"{self.kind}: parameter {key!r} must be positive")
            if key == "max_depth" and val < 0:
                raise ValueError(f"{self.kind}: max_depth must be >= 0 (0 = unbounded)")
            if key == "learning_rate" and val < 0:
                raise ValueError(f"{self.kind}: learning_rate must be >= 0")
        grid = self.params.get("lambda_grid")
        if grid is not None and np.any(np.diff(np.asarray(grid, dtype=float)) >= 0):
            raise ValueError("lambda_grid must be strictly decreasing")

    def key(self) -> str:
        """Content-based identity used for seed derivation."""
        items = sorted((k, repr(v)) for k, v in self.params.items())
        return f"{self.kind}|{items!r}|{self.seed}"


@dataclass(frozen=True)
class LearnerConfig:
    """Hyperparameters shared by every stack a run builds.

    ``exclude_linear`` drops both the linear model and the lasso from the
    candidate set everywhere.
    """

    exclude_linear: bool = False
    forest_trees: int = 200
    forest_mtry: int | None = None
    forest_max_depth: int | None = None  # None = grow until the leaf-size floor
    forest_min_leaf: int = 5
    boost_rounds: int = 200
    boost_depth: int = 3
    boost_learning_rate: float = 0.1
    boost_early_stopping: bool = True
    lasso_n_lambdas: int = 50
    prob_clip_lo: float = 0.01
    prob_clip_hi: float = 0.99

    def __post_init__(self):
        if not 0.0 < self.prob_clip_lo < self.prob_clip_hi < 1.0:
            raise ValueError("probability clip bounds must satisfy 0 < lo < hi < 1")

    @property
    def prob_clip(self) -> tuple[float, float]:
        return (self.prob_clip_lo, self.prob_clip_hi)


#: Reduced settings for laptop-scale experiment grids and the test suite.
DESK_LEARNER_CONFIG = LearnerConfig(
    forest_trees=25,
    forest_max_depth=8,
    boost_rounds=40,
    lasso_n_lambdas=20,
)


def candidate_specs(config: LearnerConfig = LearnerConfig(), seed: int = 0) -> list[LearnerSpec]:
    """The stacking candidate set implied by ``config``."""
    specs = [LearnerSpec("mean", seed=seed)]
    if not config.exclude_linear:
        specs.append(LearnerSpec("linear", seed=seed))
        specs.append(LearnerSpec("l1_linear", {"n_lambdas": config.lasso_n_lambdas}, seed=seed))
    specs.append(
        LearnerSpec(
            "random_forest",
            {
                "n_trees": config.forest_trees,
                "mtry": config.forest_mtry,
                "max_depth": config.forest_max_depth,
                "min_leaf": config.forest_min_leaf,
            },
            seed=seed,
        )
    )
    specs.append(
        LearnerSpec(
            "boosted_trees",
            {
                "n_rounds": config.boost_rounds,
                "max_depth": config.boost_depth,
                "learning_rate": config.boost_learning_rate,
                "early_stopping": config.boost_early_stopping,
            },
            seed=seed,
        )
    )
    return specs


@dataclass
class FittedLearner:
    spec: LearnerSpec
    task: str
    state: Any
    n_features: int
    clip: tuple[float, float] = (0.01, 0.99)

    def predict(self, x: np.ndarray) -> np.ndarray:
        return predict(self, x)


def _fit_mean(x, y, w, params, seed):
    return float(np.average(y, weights=w))


def _predict_mean(state, x):
    return np.full(x.shape[0], state)


@dataclass
class LinearState:
    coef: np.ndarray
    intercept: float


def _fit_linear(x, y, w, params, seed) -> LinearState:
    # Weighted least squares; constant columns get coefficient zero.
    x_mean = np.average(x, axis=0, weights=w)
    y_mean = float(np.average(y, weights=w))
    xc = x - x_mean
    usable = np.average(xc**2, axis=0, weights=w) > 1e-12
    coef = np.zeros(x.shape[1])
    if usable.any():
        sw = np.sqrt(w)
        sol, *_ = np.linalg.lstsq(xc[:, usable] * sw[:, None], (y - y_mean) * sw, rcond=None)
        coef[usable] = sol
    return LinearState(coef=coef, intercept=y_mean - float(coef @ x_mean))


def _predict_linear(state: LinearState, x):
    return x @ state.coef + state.intercept


def _fit_l1(x, y, w, params, seed) -> LassoState:
    return fit_lasso_cv(
        x, y, sample_weight=w,
        n_lambdas=params.get("n_lambdas", 50),
        lambda_min_ratio=params.get("lambda_min_ratio", 1e-3),
        cv_folds=params.get("cv_folds", 5),
        lambda_grid=params.get("lambda_grid"),
    )


def _fit_forest(x, y, w, params, seed) -> ForestState:
    return fit_forest(
        x, y, sample_weight=w,
        n_trees=params.get("n_trees", 200),
        mtry=params.get("mtry"),
        max_depth=params.get("max_depth"),
        min_leaf=params.get("min_leaf", 5),
        bootstrap=params.get("bootstrap", True),
        seed=seed,
    )


def _fit_boost(x, y, w, params, seed) -> BoostState:
    return fit_boost(
        x, y, sample_weight=w,
        n_rounds=params.get("n_rounds", 200),
        max_depth=params.get("max_depth", 3),
        learning_rate=params.get("learning_rate", 0.1),
        min_leaf=params.get("min_leaf", 5),
        early_stopping=params.get("early_stopping", True),
        holdout_fraction=params.get("holdout_fraction", 0.2),
        patience=params.get("patience", 10),
        seed=seed,
    )


_FITTERS = {
    "mean": _fit_mean,
    "linear": _fit_linear,
    "l1_linear": _fit_l1,
    "random_forest": _fit_forest,
    "boosted_trees": _fit_boost,
}

_PREDICTORS = {
    "mean": _predict_mean,
    "linear": _predict_linear,
    "l1_linear": predict_lasso,
    "random_forest": predict_forest,
    "boosted_trees": predict_boost,
}


def fit(
    spec: LearnerSpec,
    x: np.ndarray,
    y: np.ndarray,
    task: str = "regression",
    sample_weight: np.ndarray | None = None,
    clip: tuple[float, float] = (0.01, 0.99),
    seed: int | None = None,
) -> FittedLearner:
    """Fit one learner.  Deterministic given (spec, data, seed).

    ``seed`` overrides ``spec.seed`` so callers can derive per-fit streams;
    probability-task targets must be binary.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.ndim != 2:
        raise ValueError("x must be a 2-d matrix")
    if x.shape[0] != y.shape[0]:
        raise ValueError("x and y row counts differ")
    if x.shape[0] < 1:
        raise ValueError("cannot fit on empty data")
    if task not in ("regression", "probability"):
        raise ValueError(f"unknown task {task!r}")
    if task == "probability" and not np.isin(y, (0.0, 1.0)).all():
        raise ValueError("probability task requires y in {0, 1}")
    w = np.ones(x.shape[0]) if sample_weight is None else np.asarray(sample_weight, dtype=float)
    if np.any(w <= 0):
        raise ValueError("sample weights must be positive")
    state = _FITTERS[spec.kind](x, y, w, spec.params, spec.seed if seed is None else seed)
    return FittedLearner(spec=spec, task=task, state=state, n_features=x.shape[1], clip=clip)


def predict(model: FittedLearner, x: np.ndarray) -> np.ndarray:
    """Predictions of a fitted learner; probability tasks are clipped."""
    x = np.asarray(x, dtype=float)
    if x.ndim != 2 or x.shape[1] != model.n_features:
        raise ValueError(
            f"expected {model.n_features} feature columns, got {x.shape[1] if x.ndim == 2 else 'non-matrix'}"
        )
    pred = _PREDICTORS[model.spec.kind](model.state, x)
    if model.task == "probability":
        pred = np.clip(pred, model.clip[0], model.clip[1])
    return np.asarray(pred, dtype=float)
