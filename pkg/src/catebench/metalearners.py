"""Pseudo-outcomes and final-stage regressions for the four meta-learners.

Each learner reduces CATE estimation to supervised fits:

* T: psi = mu1(x) - mu0(x), unit weights.
* DR: psi = (mu1 - mu0) + d (y - mu1) / e - (1 - d)(y - mu0) / (1 - e).
* R: psi = (y - mu) / (d - e) with weights (d - e)^2.
* X: treated rows psi1 = y - mu0(x); control rows psi0 = mu1(x) - y; the
  two group regressions are blended as e * tau0 + (1 - e) * tau1.

The final stage solves the weighted least-squares problem
min_tau sum_i w_i (psi_i - tau(x_i))^2 with the stacked ensemble.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .ensemble import StackedModel, fit_stack
from .errors import DegenerateGroupError
from .learners import LearnerConfig, candidate_specs

META_LEARNERS = ("t", "dr", "r", "x")

#: Strategy names the T-learner supports (no propensity nuisance, so no
#: dedicated-fold splitting; no pseudo-outcome pooling across folds).
T_LEARNER_STRATEGIES = (
    "naive",
    "split5050",
    "split5050_cf",
    "fold5",
    "fold5_cf",
    "median_split5050_cf",
    "median_fold5_cf",
)


@dataclass(frozen=True)
class NuisancePredictions:
    """Nuisance evaluations aligned to one estimation fold's rows."""

    mu0: np.ndarray | None = None
    mu1: np.ndarray | None = None
    mu: np.ndarray | None = None
    e: np.ndarray | None = None


@dataclass(frozen=True)
class PseudoOutcome:
    psi: np.ndarray
    weights: np.ndarray
    group: str | None = None  # "treated" / "control" for the X-learner
    rows: np.ndarray | None = None  # positions within the estimation fold

    def __post_init__(self):
        if self.psi.shape != self.weights.shape:
            raise ValueError("psi and weights must be aligned")
        if not np.isfinite(self.psi).all():
            raise ValueError("pseudo-outcome contains non-finite values")
        if np.any(self.weights <= 0):
            raise ValueError("pseudo-outcome weights must be positive")

    def summary(self) -> dict:
        return {
            "n": int(self.psi.size),
            "mean": float(self.psi.mean()) if self.psi.size else float("nan"),
            "sd": float(self.psi.std()) if self.psi.size else float("nan"),
            "min": float(self.psi.min()) if self.psi.size else float("nan"),
            "max": float(self.psi.max()) if self.psi.size else float("nan"),
        }


def _aligned(*arrays):
    out = [np.asarray(a, dtype=float) for a in arrays]
    n = out[0].shape[0]
    if any(a.shape[0] != n for a in out):
        raise ValueError("input vectors have mismatched lengths")
    return out


def _check_open_unit(e: np.ndarray):
    if np.any(e <= 0.0) or np.any(e >= 1.0):
        raise ValueError("propensity predictions must lie strictly inside (0, 1)")


def pseudo_T(mu0, mu1) -> PseudoOutcome:
    mu0, mu1 = _aligned(mu0, mu1)
    psi = mu1 - mu0
    return PseudoOutcome(psi=psi, weights=np.ones_like(psi))


def pseudo_DR(y, d, mu0, mu1, e) -> PseudoOutcome:
    y, d, mu0, mu1, e = _aligned(y, d, mu0, mu1, e)
    _check_open_unit(e)
    psi = (mu1 - mu0) + d * (y - mu1) / e - (1.0 - d) * (y - mu0) / (1.0 - e)
    return PseudoOutcome(psi=psi, weights=np.ones_like(psi))


def pseudo_R(y, d, mu, e) -> PseudoOutcome:
    y, d, mu, e = _aligned(y, d, mu, e)
    _check_open_unit(e)
    resid_d = d - e
    psi = (y - mu) / resid_d
    return PseudoOutcome(psi=psi, weights=resid_d**2)


def pseudo_X(y, d, mu0, mu1) -> tuple[PseudoOutcome, PseudoOutcome]:
    """Imputed group effects: (treated rows, control rows)."""
    y, d, mu0, mu1 = _aligned(y, d, mu0, mu1)
    treated = np.flatnonzero(d == 1.0)
    control = np.flatnonzero(d == 0.0)
    if treated.size == 0 or control.size == 0:
        raise DegenerateGroupError("both treated and control rows are required")
    psi1 = y[treated] - mu0[treated]
    psi0 = mu1[control] - y[control]
    return (
        PseudoOutcome(psi=psi1, weights=np.ones_like(psi1), group="treated", rows=treated),
        PseudoOutcome(psi=psi0, weights=np.ones_like(psi0), group="control", rows=control),
    )


def blend_X(tau0_pred, tau1_pred, g) -> np.ndarray:
    """Convex blend g * tau0 + (1 - g) * tau1 (g is the propensity score)."""
    tau0_pred, tau1_pred, g = _aligned(tau0_pred, tau1_pred, g)
    if np.any(g < 0.0) or np.any(g > 1.0):
        raise ValueError("blend weights must lie in [0, 1]")
    return g * tau0_pred + (1.0 - g) * tau1_pred


def final_stage(
    psi: PseudoOutcome,
    x: np.ndarray,
    learner_config: LearnerConfig = LearnerConfig(),
    seed: int = 0,
    candidates: list | None = None,
) -> StackedModel:
    """Regress a pseudo-outcome on covariates with the stacked ensemble.

    ``candidates`` overrides the configured candidate set (used by oracle
    tests that pin the final stage to a single algorithm).
    """
    x = np.asarray(x, dtype=float)
    if x.shape[0] != psi.psi.shape[0]:
        raise ValueError("covariates and pseudo-outcome are misaligned")
    if x.shape[0] == 0:
        raise ValueError("cannot fit the final stage on an empty fold")
    weights = None if np.all(psi.weights == 1.0) else psi.weights
    return fit_stack(
        candidates if candidates is not None else candidate_specs(learner_config),
        x,
        psi.psi,
        task="regression",
        seed=seed,
        sample_weight=weights,
        clip=learner_config.prob_clip,
    )
