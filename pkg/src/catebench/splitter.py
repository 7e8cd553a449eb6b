"""Fold construction and the twelve splitting/averaging strategies.

Strategies combine four fold layouts (none, 50:50, three dedicated-role
folds, 5-fold) with cross-fitting, pseudo-outcome pooling ("combined") and
median averaging over repeated partitions:

    naive, split5050, split5050_cf, double_split, double_split_cf,
    fold5, fold5_cf, fold5_combined, median_split5050_cf,
    median_double_split_cf, median_fold5_cf, median_fold5_combined

Dedicated-role splitting uses exactly three folds: one trains the
propensity model, one the outcome means, and one computes the
pseudo-outcome and final regression; cross-fitting rotates the three roles
cyclically so each fold plays each role once.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class StrategySpec:
    name: str
    k: int
    crossfit: bool = False
    double_split: bool = False
    combined: bool = False
    median: bool = False
    inner: str | None = None  # for median strategies: the repeated estimator


def _build_strategies() -> dict[str, StrategySpec]:
    base = [
        StrategySpec("naive", k=1),
        StrategySpec("split5050", k=2),
        StrategySpec("split5050_cf", k=2, crossfit=True),
        StrategySpec("double_split", k=3, double_split=True),
        StrategySpec("double_split_cf", k=3, double_split=True, crossfit=True),
        StrategySpec("fold5", k=5),
        StrategySpec("fold5_cf", k=5, crossfit=True),
        StrategySpec("fold5_combined", k=5, combined=True),
    ]
    out = {spec.name: spec for spec in base}
    for inner in ("split5050_cf", "double_split_cf", "fold5_cf", "fold5_combined"):
        spec = out[inner]
        out[f"median_{inner}"] = StrategySpec(
            f"median_{inner}",
            k=spec.k,
            crossfit=spec.crossfit,
            double_split=spec.double_split,
            combined=spec.combined,
            median=True,
            inner=inner,
        )
    return out


STRATEGIES = _build_strategies()
STRATEGY_NAMES = tuple(STRATEGIES)


@dataclass(frozen=True)
class FoldPlan:
    """A disjoint, balanced partition of ``range(n)`` into ``k`` folds."""

    k: int
    assignment: np.ndarray

    @property
    def n(self) -> int:
        return self.assignment.shape[0]

    def fold_rows(self, fold: int) -> np.ndarray:
        return np.flatnonzero(self.assignment == fold)

    def to_csv(self, path) -> None:
        """Dump the assignment as ``row,fold`` for auditing."""
        table = np.column_stack([np.arange(self.n), self.assignment])
        np.savetxt(path, table, delimiter=",", header="row,fold", comments="", fmt="%d")


def make_folds(n: int, k: int, seed) -> FoldPlan:
    """Uniformly random balanced partition; fold sizes differ by at most 1."""
    if k < 1:
        raise ValueError(f"fold count must be >= 1, got {k}")
    if n < k:
        raise ValueError(f"cannot split {n} rows into {k} folds")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    perm = rng.permutation(n)
    assignment = np.empty(n, dtype=np.int64)
    bounds = np.linspace(0, n, k + 1).astype(int)
    for fold in range(k):
        assignment[perm[bounds[fold]:bounds[fold + 1]]] = fold
    return FoldPlan(k=k, assignment=assignment)


@dataclass(frozen=True)
class RoleAssignment:
    """Row roles for one rotation.

    ``outcome_rows`` train the outcome nuisances (and the pooled mean),
    ``propensity_rows`` train the treatment model, ``estimation_rows`` take
    the pseudo-outcome and final regression.  Without dedicated-role
    splitting, outcome and propensity rows coincide.
    """

    outcome_rows: np.ndarray
    propensity_rows: np.ndarray
    estimation_rows: np.ndarray
    estimation_fold: int


def rotations(plan: FoldPlan, strategy: StrategySpec | str) -> list[RoleAssignment]:
    """Role assignments for every rotation of a strategy on ``plan``.

    Cross-fit strategies return ``k`` rotations with each fold estimating
    exactly once; single-shot strategies return only the first rotation.
    The combined strategy uses the same ``k`` rotations as cross-fitting.
    """
    spec = STRATEGIES[strategy] if isinstance(strategy, str) else strategy
    if plan.k != spec.k:
        raise ValueError(f"strategy {spec.name!r} needs k={spec.k}, plan has k={plan.k}")

    if spec.k == 1:
        rows = np.arange(plan.n)
        return [RoleAssignment(rows, rows, rows, estimation_fold=0)]

    folds = [plan.fold_rows(f) for f in range(plan.k)]
    out = []
    for i in range(plan.k):
        if spec.double_split:
            prop = folds[i]
            outcome = folds[(i + 1) % 3]
            est_fold = (i + 2) % 3
        else:
            est_fold = (i + 1) % spec.k
            train = np.concatenate([folds[f] for f in range(spec.k) if f != est_fold])
            train = np.sort(train)
            prop = outcome = train
        out.append(
            RoleAssignment(
                outcome_rows=outcome,
                propensity_rows=prop,
                estimation_rows=folds[est_fold],
                estimation_fold=est_fold,
            )
        )
    if not (spec.crossfit or spec.combined):
        out = out[:1]
    return out
