"""Performance measures over replications of test-set CATE predictions.

Per test row i over R replications:

    MSE_i    = (1/R) sum_r (pred_ri - tau_i)^2
    |Bias|_i = |(1/R) sum_r pred_ri - tau_i|
    SD_i     = sqrt((1/R) sum_r (pred_ri - mean_r pred_ri)^2)

Aggregates average each measure over the test rows.  The SD uses divisor
R, so MSE_i = Bias_i^2 + SD_i^2 holds exactly.  "Median MSE" defaults to
the median over replications of the per-replication mean squared error,
which keeps it sensitive to outlier replications; the median over rows of
MSE_i is available as an alternative reduction.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

MEDIAN_MSE_MODES = ("replications", "rows")


@dataclass(frozen=True)
class PredictionCube:
    """Replication-by-test-row prediction matrix plus the true effects."""

    values: np.ndarray  # shape (R, N_T)
    tau_true: np.ndarray  # shape (N_T,)

    def __post_init__(self):
        if self.values.ndim != 2 or self.values.shape[0] < 1:
            raise ValueError("need a 2-d prediction matrix with >= 1 replication")
        if self.tau_true.shape != (self.values.shape[1],):
            raise ValueError("tau_true length must match the test-row count")
        if not np.isfinite(self.values).all() or not np.isfinite(self.tau_true).all():
            raise ValueError("prediction cube contains non-finite entries")

    @property
    def replications(self) -> int:
        return self.values.shape[0]


@dataclass(frozen=True)
class EvalReport:
    mean_mse: float
    mean_abs_bias: float
    mean_sd: float
    median_mse: float
    replications: int
    per_row: dict | None = None


def mse_per_row(cube: PredictionCube) -> np.ndarray:
    return ((cube.values - cube.tau_true) ** 2).mean(axis=0)


def abs_bias_per_row(cube: PredictionCube) -> np.ndarray:
    return np.abs(cube.values.mean(axis=0) - cube.tau_true)


def sd_per_row(cube: PredictionCube) -> np.ndarray:
    return cube.values.std(axis=0)  # population form, divisor R


def aggregate(
    cube: PredictionCube,
    median_mse_mode: str = "replications",
    keep_per_row: bool = False,
) -> EvalReport:
    """Average the three per-row measures and reduce the median MSE."""
    if median_mse_mode not in MEDIAN_MSE_MODES:
        raise ValueError(f"unknown median_mse_mode {median_mse_mode!r}")
    mse = mse_per_row(cube)
    bias = abs_bias_per_row(cube)
    sd = sd_per_row(cube)
    if median_mse_mode == "replications":
        median_mse = float(np.median(((cube.values - cube.tau_true) ** 2).mean(axis=1)))
    else:
        median_mse = float(np.median(mse))
    return EvalReport(
        mean_mse=float(mse.mean()),
        mean_abs_bias=float(bias.mean()),
        mean_sd=float(sd.mean()),
        median_mse=median_mse,
        replications=cube.replications,
        per_row={"mse": mse, "abs_bias": bias, "sd": sd} if keep_per_row else None,
    )


def median_mse_curve(member_predictions: np.ndarray, tau_true: np.ndarray) -> np.ndarray:
    """Test MSE of the median over the first b members, for b = 1..B.

    ``member_predictions`` holds one row per median-averaging iteration.
    """
    member_predictions = np.asarray(member_predictions, dtype=float)
    tau_true = np.asarray(tau_true, dtype=float)
    out = np.empty(member_predictions.shape[0])
    for b in range(1, member_predictions.shape[0] + 1):
        med = np.median(member_predictions[:b], axis=0)
        out[b - 1] = float(((med - tau_true) ** 2).mean())
    return out
