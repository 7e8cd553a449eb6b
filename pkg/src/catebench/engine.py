"""Estimation engine: nuisance fits per fold role, final stages, averaging.

One replication of an estimator proceeds per rotation: train the
meta-learner's nuisance models on their role folds, evaluate them on the
estimation fold, build the pseudo-outcome there, and regress it on the
covariates.  Cross-fitting averages the rotations' predictions, the
combined strategy pools all out-of-fold pseudo-outcomes into one final
regression, and median strategies repeat the whole procedure over fresh
partitions and take the element-wise median.

Every fitted model records the row ids it trained on, so tests can assert
that no nuisance model ever saw its rotation's estimation rows.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .ensemble import StackedModel, fit_stack
from .errors import DegenerateFoldError
from .learners import LearnerConfig, candidate_specs
from .metalearners import (
    META_LEARNERS,
    NuisancePredictions,
    PseudoOutcome,
    T_LEARNER_STRATEGIES,
    blend_X,
    final_stage,
    pseudo_DR,
    pseudo_R,
    pseudo_T,
    pseudo_X,
)
from .seeding import stable_seed
from .splitter import STRATEGIES, FoldPlan, RoleAssignment, StrategySpec, make_folds, rotations

NUISANCE_MODELS = frozenset({"mu0", "mu1", "mu", "e"})

NuisanceFactory = Callable[[np.ndarray], NuisancePredictions]


@dataclass(frozen=True)
class FitAudit:
    """Row-id bookkeeping for one fitted model within one rotation."""

    model: str
    train_rows: np.ndarray
    estimation_rows: np.ndarray


@dataclass
class _MeanOfModels:
    """Average of several predictors (used for cross-fit propensities)."""

    models: list

    def predict(self, x: np.ndarray) -> np.ndarray:
        return np.mean([m.predict(x) for m in self.models], axis=0)


@dataclass
class _FactoryPropensity:
    """Adapter exposing an injected nuisance factory as an e(x) predictor."""

    factory: NuisanceFactory

    def predict(self, x: np.ndarray) -> np.ndarray:
        return np.asarray(self.factory(x).e, dtype=float)


@dataclass
class XPredictor:
    """Propensity-blended pair of group-specific effect regressions."""

    tau0: StackedModel
    tau1: StackedModel
    e_model: object

    def predict(self, x: np.ndarray) -> np.ndarray:
        g = np.asarray(self.e_model.predict(x), dtype=float)
        return blend_X(self.tau0.predict(x), self.tau1.predict(x), g)


@dataclass
class CateModel:
    """A fitted CATE predictor: a single fit, a cross-fit mean, or a median."""

    variant: str  # "single" | "crossfit_mean" | "median"
    predictor: object | None = None
    children: list["CateModel"] = field(default_factory=list)
    audits: list[FitAudit] = field(default_factory=list)
    diagnostics: dict = field(default_factory=dict)
    metadata: dict = field(default_factory=dict)

    def predict(self, x: np.ndarray) -> np.ndarray:
        return predict(self, x)


def predict(model: CateModel, x: np.ndarray) -> np.ndarray:
    """Evaluate a CATE model: recursively single / mean-of-k / median-of-B."""
    x = np.asarray(x, dtype=float)
    if model.variant == "single":
        return np.asarray(model.predictor.predict(x), dtype=float)
    parts = np.stack([predict(child, x) for child in model.children])
    if model.variant == "crossfit_mean":
        return parts.mean(axis=0)
    if model.variant == "median":
        return np.median(parts, axis=0)
    raise ValueError(f"unknown model variant {model.variant!r}")


def iter_audits(model: CateModel):
    yield from model.audits
    for child in model.children:
        yield from iter_audits(child)


def check_leakage(model: CateModel) -> list[str]:
    """Violations of nuisance/estimation row disjointness (naive exempt)."""
    if model.metadata.get("strategy") == "naive":
        return []
    violations = []
    for audit in iter_audits(model):
        if audit.model not in NUISANCE_MODELS:
            continue
        overlap = np.intersect1d(audit.train_rows, audit.estimation_rows)
        if overlap.size:
            violations.append(
                f"{audit.model} trained on {overlap.size} estimation-fold rows"
            )
    return violations


def _rotation_seed(seed: int, rotation: RoleAssignment) -> int:
    return stable_seed(
        seed, "rotation",
        rotation.propensity_rows.tobytes(),
        rotation.outcome_rows.tobytes(),
        rotation.estimation_rows.tobytes(),
    )


def _fit_nuisance_stack(x, y, rows, task, config, seed, est_rows, name, audits, diag):
    model = fit_stack(
        candidate_specs(config),
        x[rows],
        y[rows],
        task=task,
        seed=seed,
        clip=config.prob_clip,
    )
    audits.append(FitAudit(model=name, train_rows=rows, estimation_rows=est_rows))
    diag[name] = {
        "weights": [float(w) for w in model.weights],
        "cv_risks": [float(r) for r in model.cv_risks],
        "cv_risk": model.cv_risk,
    }
    return model


def _group_rows(d, rows, group):
    sub = rows[d[rows] == group]
    if sub.size == 0:
        label = "treated" if group == 1.0 else "control"
        raise DegenerateFoldError(f"outcome fold has no {label} rows")
    return sub


def _nuisance_predictions(
    x, d, y, rotation: RoleAssignment, meta: str, config: LearnerConfig,
    seed: int, audits: list, diag: dict, nuisance_factory: NuisanceFactory | None,
):
    """Fit the meta-learner's nuisances and evaluate them on the estimation fold."""
    est = rotation.estimation_rows
    if nuisance_factory is not None:
        diag["nuisances"] = "injected"
        nuis = nuisance_factory(x[est])
        e_model = _FactoryPropensity(nuisance_factory)
        return nuis, e_model

    mu0_hat = mu1_hat = mu_hat = e_hat = None
    e_model = None
    if meta in ("t", "dr", "x"):
        rows0 = _group_rows(d, rotation.outcome_rows, 0.0)
        rows1 = _group_rows(d, rotation.outcome_rows, 1.0)
        mu0 = _fit_nuisance_stack(x, y, rows0, "regression", config,
                                  stable_seed(seed, "mu0"), est, "mu0", audits, diag)
        mu1 = _fit_nuisance_stack(x, y, rows1, "regression", config,
                                  stable_seed(seed, "mu1"), est, "mu1", audits, diag)
        mu0_hat = mu0.predict(x[est])
        mu1_hat = mu1.predict(x[est])
    if meta == "r":
        mu = _fit_nuisance_stack(x, y, rotation.outcome_rows, "regression", config,
                                 stable_seed(seed, "mu"), est, "mu", audits, diag)
        mu_hat = mu.predict(x[est])
    if meta in ("dr", "r", "x"):
        e_model = _fit_nuisance_stack(x, d, rotation.propensity_rows, "probability",
                                      config, stable_seed(seed, "e"), est, "e",
                                      audits, diag)
        e_hat = e_model.predict(x[est])
    return NuisancePredictions(mu0=mu0_hat, mu1=mu1_hat, mu=mu_hat, e=e_hat), e_model


def _pseudo_outcome(meta: str, y_est, d_est, nuis: NuisancePredictions):
    if meta == "t":
        return pseudo_T(nuis.mu0, nuis.mu1)
    if meta == "dr":
        return pseudo_DR(y_est, d_est, nuis.mu0, nuis.mu1, nuis.e)
    if meta == "r":
        return pseudo_R(y_est, d_est, nuis.mu, nuis.e)
    raise ValueError(f"unknown meta-learner {meta!r}")


def fit_single(
    x: np.ndarray,
    d: np.ndarray,
    y: np.ndarray,
    rotation: RoleAssignment,
    meta: str,
    config: LearnerConfig = LearnerConfig(),
    seed: int = 0,
    strategy_name: str = "",
    nuisance_factory: NuisanceFactory | None = None,
) -> CateModel:
    """Fit one rotation: nuisances on role folds, final stage on the estimation fold."""
    if meta not in META_LEARNERS:
        raise ValueError(f"unknown meta-learner {meta!r}")
    est = rotation.estimation_rows
    audits: list[FitAudit] = []
    diag: dict = {"estimation_fold": rotation.estimation_fold}
    nuis, e_model = _nuisance_predictions(
        x, d, y, rotation, meta, config, seed, audits, diag, nuisance_factory
    )

    if meta == "x":
        psi1, psi0 = pseudo_X(y[est], d[est], nuis.mu0, nuis.mu1)
        rows1 = est[psi1.rows]
        rows0 = est[psi0.rows]
        tau1 = final_stage(psi1, x[rows1], config, stable_seed(seed, "tau1"))
        tau0 = final_stage(psi0, x[rows0], config, stable_seed(seed, "tau0"))
        audits.append(FitAudit("tau1", train_rows=rows1, estimation_rows=est))
        audits.append(FitAudit("tau0", train_rows=rows0, estimation_rows=est))
        diag["psi"] = {"treated": psi1.summary(), "control": psi0.summary()}
        for name, stack in (("tau1", tau1), ("tau0", tau0)):
            diag[name] = {
                "weights": [float(w) for w in stack.weights],
                "cv_risks": [float(r) for r in stack.cv_risks],
                "cv_risk": stack.cv_risk,
            }
        predictor = XPredictor(tau0=tau0, tau1=tau1, e_model=e_model)
    else:
        psi = _pseudo_outcome(meta, y[est], d[est], nuis)
        stack = final_stage(psi, x[est], config, stable_seed(seed, "final"))
        audits.append(FitAudit("final", train_rows=est, estimation_rows=est))
        diag["psi"] = psi.summary()
        diag["final"] = {
            "weights": [float(w) for w in stack.weights],
            "cv_risks": [float(r) for r in stack.cv_risks],
            "cv_risk": stack.cv_risk,
        }
        predictor = stack

    return CateModel(
        variant="single",
        predictor=predictor,
        audits=audits,
        diagnostics=diag,
        metadata={"meta": meta, "strategy": strategy_name, "seed": seed},
    )


def fit_crossfit(
    x, d, y,
    plan: FoldPlan,
    strategy: StrategySpec,
    meta: str,
    config: LearnerConfig = LearnerConfig(),
    seed: int = 0,
    nuisance_factory: NuisanceFactory | None = None,
) -> CateModel:
    """Fit every rotation and average their predictions."""
    # Seed each rotation from its row content so relabeling fold indices of
    # the same partition cannot change the fitted models.
    children = [
        fit_single(
            x, d, y, rotation, meta, config,
            seed=_rotation_seed(seed, rotation),
            strategy_name=strategy.name,
            nuisance_factory=nuisance_factory,
        )
        for rotation in rotations(plan, strategy)
    ]
    return CateModel(
        variant="crossfit_mean",
        children=children,
        metadata={"meta": meta, "strategy": strategy.name, "seed": seed},
    )


def fit_combined(
    x, d, y,
    plan: FoldPlan,
    strategy: StrategySpec,
    meta: str,
    config: LearnerConfig = LearnerConfig(),
    seed: int = 0,
    nuisance_factory: NuisanceFactory | None = None,
) -> CateModel:
    """Pool out-of-fold pseudo-outcomes and fit one final stage on all rows."""
    if meta == "t":
        raise ValueError("the T-learner has no combined variant")
    audits: list[FitAudit] = []
    diag: dict = {"rotations": []}
    psi_parts: list[np.ndarray] = []
    weight_parts: list[np.ndarray] = []
    row_parts: list[np.ndarray] = []
    x_parts_1: list[np.ndarray] = []
    x_parts_0: list[np.ndarray] = []
    psi1_parts: list[np.ndarray] = []
    psi0_parts: list[np.ndarray] = []
    rows1_parts: list[np.ndarray] = []
    rows0_parts: list[np.ndarray] = []
    e_models: list = []

    for rotation in rotations(plan, strategy):
        est = rotation.estimation_rows
        rot_seed = _rotation_seed(seed, rotation)
        rot_diag: dict = {"estimation_fold": rotation.estimation_fold}
        nuis, e_model = _nuisance_predictions(
            x, d, y, rotation, meta, config, rot_seed, audits, rot_diag, nuisance_factory
        )
        e_models.append(e_model)
        if meta == "x":
            psi1, psi0 = pseudo_X(y[est], d[est], nuis.mu0, nuis.mu1)
            x_parts_1.append(x[est[psi1.rows]])
            x_parts_0.append(x[est[psi0.rows]])
            psi1_parts.append(psi1.psi)
            psi0_parts.append(psi0.psi)
            rows1_parts.append(est[psi1.rows])
            rows0_parts.append(est[psi0.rows])
            rot_diag["psi"] = {"treated": psi1.summary(), "control": psi0.summary()}
        else:
            psi = _pseudo_outcome(meta, y[est], d[est], nuis)
            psi_parts.append(psi.psi)
            weight_parts.append(psi.weights)
            row_parts.append(est)
            rot_diag["psi"] = psi.summary()
        diag["rotations"].append(rot_diag)

    if meta == "x":
        psi1_all = PseudoOutcome(
            psi=np.concatenate(psi1_parts),
            weights=np.ones(sum(len(p) for p in psi1_parts)),
            group="treated",
        )
        psi0_all = PseudoOutcome(
            psi=np.concatenate(psi0_parts),
            weights=np.ones(sum(len(p) for p in psi0_parts)),
            group="control",
        )
        x1 = np.concatenate(x_parts_1)
        x0 = np.concatenate(x_parts_0)
        tau1 = final_stage(psi1_all, x1, config, stable_seed(seed, "tau1"))
        tau0 = final_stage(psi0_all, x0, config, stable_seed(seed, "tau0"))
        rows1 = np.concatenate(rows1_parts)
        rows0 = np.concatenate(rows0_parts)
        audits.append(FitAudit("tau1", train_rows=rows1, estimation_rows=rows1))
        audits.append(FitAudit("tau0", train_rows=rows0, estimation_rows=rows0))
        predictor = XPredictor(tau0=tau0, tau1=tau1, e_model=_MeanOfModels(e_models))
        for name, stack in (("tau1", tau1), ("tau0", tau0)):
            diag[name] = {"weights": [float(w) for w in stack.weights],
                          "cv_risk": stack.cv_risk}
    else:
        rows = np.concatenate(row_parts)
        pooled = PseudoOutcome(psi=np.concatenate(psi_parts),
                               weights=np.concatenate(weight_parts))
        stack = final_stage(pooled, x[rows], config, stable_seed(seed, "final"))
        audits.append(FitAudit("final", train_rows=rows, estimation_rows=rows))
        diag["psi"] = pooled.summary()
        diag["final"] = {"weights": [float(w) for w in stack.weights],
                         "cv_risks": [float(r) for r in stack.cv_risks],
                         "cv_risk": stack.cv_risk}
        diag["final_rows"] = int(rows.size)
        predictor = stack

    return CateModel(
        variant="single",
        predictor=predictor,
        audits=audits,
        diagnostics=diag,
        metadata={"meta": meta, "strategy": strategy.name, "seed": seed},
    )


def _fit_once(
    x, d, y,
    strategy: StrategySpec,
    meta: str,
    config: LearnerConfig,
    seed: int,
    fold_seed: int,
    nuisance_factory: NuisanceFactory | None,
) -> CateModel:
    plan = make_folds(x.shape[0], strategy.k, fold_seed)
    if strategy.combined:
        model = fit_combined(x, d, y, plan, strategy, meta, config, seed,
                             nuisance_factory)
    elif strategy.crossfit:
        model = fit_crossfit(x, d, y, plan, strategy, meta, config, seed,
                             nuisance_factory)
    else:
        rotation = rotations(plan, strategy)[0]
        model = fit_single(x, d, y, rotation, meta, config,
                           seed=_rotation_seed(seed, rotation),
                           strategy_name=strategy.name,
                           nuisance_factory=nuisance_factory)
    model.metadata["fold_seed"] = fold_seed
    return model


def fit_median(
    x, d, y,
    strategy: StrategySpec,
    meta: str,
    b_iterations: int,
    config: LearnerConfig = LearnerConfig(),
    seed: int = 0,
    nuisance_factory: NuisanceFactory | None = None,
) -> CateModel:
    """Repeat the inner estimator over fresh partitions; predict the median."""
    if b_iterations < 1:
        raise ValueError("median averaging needs at least one iteration")
    inner = STRATEGIES[strategy.inner]
    children = [
        _fit_once(
            x, d, y, inner, meta, config,
            seed=stable_seed(seed, "iteration", b),
            fold_seed=stable_seed(seed, "folds", b),
            nuisance_factory=nuisance_factory,
        )
        for b in range(b_iterations)
    ]
    return CateModel(
        variant="median",
        children=children,
        metadata={"meta": meta, "strategy": strategy.name, "seed": seed,
                  "b_iterations": b_iterations},
    )


def fit_estimator(
    x: np.ndarray,
    d: np.ndarray,
    y: np.ndarray,
    meta: str,
    strategy_name: str,
    config: LearnerConfig = LearnerConfig(),
    seed: int = 0,
    b_iterations: int = 20,
    nuisance_factory: NuisanceFactory | None = None,
) -> CateModel:
    """Fit one (meta-learner, strategy) estimator on a training sample."""
    if meta not in META_LEARNERS:
        raise ValueError(f"unknown meta-learner {meta!r}")
    if strategy_name not in STRATEGIES:
        raise ValueError(f"unknown strategy {strategy_name!r}")
    if meta == "t" and strategy_name not in T_LEARNER_STRATEGIES:
        raise ValueError(f"the T-learner does not support strategy {strategy_name!r}")
    x = np.asarray(x, dtype=float)
    d = np.asarray(d, dtype=float)
    y = np.asarray(y, dtype=float)
    strategy = STRATEGIES[strategy_name]
    if strategy.median:
        return fit_median(x, d, y, strategy, meta, b_iterations, config, seed,
                          nuisance_factory)
    return _fit_once(x, d, y, strategy, meta, config, seed,
                     fold_seed=stable_seed(seed, "folds"),
                     nuisance_factory=nuisance_factory)
