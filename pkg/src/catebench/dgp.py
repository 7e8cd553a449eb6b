"""Simulated data for heterogeneous-treatment-effect benchmarks.

Outcomes follow a partially linear model

    Y = tau(X) * D + g(X) + U,    U ~ N(0, 1),

with correlated Gaussian covariates X ~ N(0, Sigma), a binary treatment
D ~ Bernoulli(e(X)) and four interchangeable treatment-effect families.
Twelve named scenarios (A-L) combine two sample sizes with five
treatment-assignment and four treatment-effect variants.

Notes on the exact functional forms:

* baseline: g(X) = X1 + X5 + X4 * X5 (1-based covariate indices).
* linear assignment index: a(X) = X2 + X5 + X2 - X8, i.e. the X2 term
  appears twice and is implemented verbatim with coefficient 2.
* non-constant assignment maps a(X) through the standard normal CDF after
  standardizing by the empirical mean/sd of a over the pooled train + test
  draw of the current replication.
* linear effect: tau(X) = X1 + 1{X2 > 0} + W with W ~ N(0, var 0.5) per
  row; the alternative reading 1{X1 + X2 > 0} + W is available through
  ``linear_effect_mode="indicator_sum"``.
"""

from __future__ import annotations

import functools
from dataclasses import dataclass, replace

import numpy as np
from scipy.special import ndtr

from .errors import DegeneratePropensityError
from .seeding import stable_seed

PROPENSITY_FAMILIES = (
    "random_balanced",
    "random_imbalanced",
    "linear",
    "interaction",
    "non_linear",
)
EFFECT_FAMILIES = ("linear", "binary", "non_linear", "zero")
LINEAR_EFFECT_MODES = ("indicator_x2", "indicator_sum")

#: How the random correlation matrix is constructed (recorded in run output).
CORRELATION_METHOD = "uniform_gram_plus_p_identity"

SCENARIO_IDS = tuple("ABCDEFGHIJKL")

# (propensity family, effect family, constant c for random assignment)
_SCENARIO_ROWS = {
    "A": ("random_balanced", "linear", 0.5),
    "B": ("random_imbalanced", "linear", 0.2),
    "C": ("linear", "non_linear", 0.5),
    "D": ("interaction", "binary", 0.5),
    "E": ("non_linear", "non_linear", 0.5),
    "F": ("linear", "zero", 0.5),
}


@dataclass(frozen=True)
class CorrelationSpec:
    """Recipe for a random correlation matrix of dimension ``p``."""

    p: int
    seed: int


def generate_correlation(spec: CorrelationSpec) -> np.ndarray:
    """Draw a random correlation matrix.

    A random positive definite covariance matrix is built as the Gram matrix
    of a square Uniform(-1, 1) matrix plus ``p`` times the identity, then
    scaled to unit diagonal.  The result is symmetric, PSD, has unit
    diagonal and off-diagonal entries in [-1, 1].
    """
    if spec.p < 1:
        raise ValueError(f"dimension must be >= 1, got {spec.p}")
    rng = np.random.default_rng(spec.seed)
    a = rng.uniform(-1.0, 1.0, size=(spec.p, spec.p))
    cov = a.T @ a + spec.p * np.eye(spec.p)
    scale = np.sqrt(np.diag(cov))
    corr = cov / np.outer(scale, scale)
    return (corr + corr.T) / 2.0


def draw_covariates(n: int, corr: np.ndarray, seed) -> np.ndarray:
    """Sample ``n`` iid rows from N(0, corr) via the Cholesky factor.

    ``seed`` may be an int or a ``numpy.random.Generator``.  A non-PSD input
    surfaces as a ``ValueError``.
    """
    corr = np.asarray(corr, dtype=float)
    try:
        chol = np.linalg.cholesky(corr)
    except np.linalg.LinAlgError as exc:
        raise ValueError("correlation matrix is not positive definite") from exc
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    z = rng.standard_normal((n, corr.shape[0]))
    return z @ chol.T


def baseline_g(x: np.ndarray) -> np.ndarray | float:
    """Baseline outcome component g(X) = X1 + X5 + X4 * X5 (1-based)."""
    arr = np.asarray(x, dtype=float)
    two_d = np.atleast_2d(arr)
    if two_d.shape[1] < 5:
        raise ValueError(f"baseline needs at least 5 covariates, got {two_d.shape[1]}")
    g = two_d[:, 0] + two_d[:, 4] + two_d[:, 3] * two_d[:, 4]
    return float(g[0]) if arr.ndim == 1 else g


@dataclass(frozen=True)
class StandardizationStats:
    """Empirical mean and sd of the assignment index a(X) for one draw."""

    mean: float
    sd: float


def assignment_index(x: np.ndarray, family: str) -> np.ndarray:
    """The covariate-dependent index a(X) of a non-random assignment family."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    p = x.shape[1]
    if family == "linear":
        return 2.0 * x[:, 1] + x[:, 4] - x[:, 7]
    b = 1.0 / np.arange(1, p + 1)
    if family == "interaction":
        return x @ b + x[:, 4] + x[:, 1] + x[:, 2] * x[:, 7]
    if family == "non_linear":
        return x @ b + np.sin(x[:, 4]) + x[:, 1] + np.cos(x[:, 3] * x[:, 7])
    raise ValueError(f"family {family!r} has no assignment index")


def propensity_score(
    x: np.ndarray,
    family: str,
    stats: StandardizationStats | None = None,
    c: float | None = None,
) -> np.ndarray | float:
    """Treatment probability e(X) for one row or a matrix of rows.

    Random families return the constant ``c`` (0.5 balanced, 0.2 imbalanced
    unless overridden).  All other families return Phi((a(x) - mean) / sd)
    with the standardization taken from ``stats``.
    """
    arr = np.asarray(x, dtype=float)
    two_d = np.atleast_2d(arr)
    if family == "random_balanced":
        e = np.full(two_d.shape[0], 0.5 if c is None else c)
    elif family == "random_imbalanced":
        e = np.full(two_d.shape[0], 0.2 if c is None else c)
    elif family in PROPENSITY_FAMILIES:
        if stats is None:
            raise ValueError(f"family {family!r} requires standardization stats")
        if stats.sd <= 0:
            raise DegeneratePropensityError(
                f"assignment index has sd {stats.sd}; scores would be degenerate"
            )
        e = ndtr((assignment_index(two_d, family) - stats.mean) / stats.sd)
    else:
        raise ValueError(f"unknown propensity family {family!r}")
    return float(e[0]) if arr.ndim == 1 else e


def _effect_components(
    x: np.ndarray,
    family: str,
    rng: np.random.Generator,
    linear_effect_mode: str = "indicator_x2",
) -> tuple[np.ndarray, np.ndarray]:
    """Return (noise-free effect t(X), realized tau(X) including W)."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    n, p = x.shape
    if p < 10:
        raise ValueError(f"effect families need at least 10 covariates, got {p}")
    if family == "linear":
        if linear_effect_mode == "indicator_x2":
            t = x[:, 0] + (x[:, 1] > 0).astype(float)
        elif linear_effect_mode == "indicator_sum":
            t = (x[:, 0] + x[:, 1] > 0).astype(float)
        else:
            raise ValueError(f"unknown linear_effect_mode {linear_effect_mode!r}")
        w = rng.normal(0.0, np.sqrt(0.5), size=n)
        return t, t + w
    if family == "binary":
        t = np.where(x[:, 4] > 0, 2.0, 1.0)
    elif family == "non_linear":
        t = np.sin(x[:, 0] + 0.5 * x[:, 1] + x[:, 2] / 3.0) + np.cos(x[:, 9])
    elif family == "zero":
        t = np.zeros(n)
    else:
        raise ValueError(f"unknown effect family {family!r}")
    return t, t.copy()


def treatment_effect(
    x: np.ndarray,
    family: str,
    rng: np.random.Generator,
    linear_effect_mode: str = "indicator_x2",
) -> np.ndarray | float:
    """Realized treatment effect tau(X) for one row or a matrix of rows."""
    arr = np.asarray(x, dtype=float)
    _, tau = _effect_components(arr, family, rng, linear_effect_mode)
    return float(tau[0]) if arr.ndim == 1 else tau


@dataclass(frozen=True)
class Scenario:
    """Full parameterization of one data-generating process.

    ``corr_seed`` and ``test_seed`` default to values derived from the id so
    a scenario's correlation matrix and held-out test set are fixed across
    replications and runs.
    """

    id: str
    n: int
    propensity: str
    effect: str
    p: int = 20
    c: float = 0.5
    test_size: int = 10_000
    corr_seed: int | None = None
    test_seed: int | None = None

    def __post_init__(self):
        if self.propensity not in PROPENSITY_FAMILIES:
            raise ValueError(f"unknown propensity family {self.propensity!r}")
        if self.effect not in EFFECT_FAMILIES:
            raise ValueError(f"unknown effect family {self.effect!r}")
        if not 0.0 < self.c < 1.0:
            raise ValueError(f"random-assignment constant must be in (0, 1), got {self.c}")
        if self.id in SCENARIO_IDS:
            base = _SCENARIO_ROWS[chr((ord(self.id) - ord("A")) % 6 + ord("A"))]
            expected_n = 2000 if self.id <= "F" else 500
            if (self.propensity, self.effect) != base[:2] or self.c != base[2] or self.n != expected_n:
                raise ValueError(
                    f"scenario {self.id!r} must match its catalog definition"
                )

    @property
    def resolved_corr_seed(self) -> int:
        if self.corr_seed is not None:
            return self.corr_seed
        return stable_seed("correlation", self.id, self.p)

    @property
    def resolved_test_seed(self) -> int:
        if self.test_seed is not None:
            return self.test_seed
        return stable_seed("test-set", self.id)

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "n": self.n,
            "p": self.p,
            "propensity": self.propensity,
            "effect": self.effect,
            "c": self.c,
            "test_size": self.test_size,
            "corr_seed": self.resolved_corr_seed,
            "test_seed": self.resolved_test_seed,
        }


def scenario(scenario_id: str, test_size: int | None = None) -> Scenario:
    """Look up one of the twelve catalog scenarios by id (A-L)."""
    if scenario_id not in SCENARIO_IDS:
        raise KeyError(f"unknown scenario id {scenario_id!r}")
    propensity, effect, c = _SCENARIO_ROWS[chr((ord(scenario_id) - ord("A")) % 6 + ord("A"))]
    sc = Scenario(
        id=scenario_id,
        n=2000 if scenario_id <= "F" else 500,
        propensity=propensity,
        effect=effect,
        c=c,
    )
    if test_size is not None:
        sc = replace(sc, test_size=test_size)
    return sc


def catalog() -> list[Scenario]:
    """All twelve benchmark scenarios."""
    return [scenario(sid) for sid in SCENARIO_IDS]


@dataclass(frozen=True)
class SimulatedData:
    """One simulated sample.

    ``tau_true`` stores the realized per-row effect (including the linear
    family's W draw); ``g_true`` and ``t_true`` keep the noise-free model
    components around for oracle-based testing.
    """

    x: np.ndarray
    d: np.ndarray
    y: np.ndarray
    tau_true: np.ndarray
    e_true: np.ndarray
    g_true: np.ndarray
    t_true: np.ndarray

    def __post_init__(self):
        n = self.x.shape[0]
        for name in ("d", "y", "tau_true", "e_true", "g_true", "t_true"):
            if getattr(self, name).shape[0] != n:
                raise ValueError(f"{name} length does not match x")

    @property
    def n(self) -> int:
        return self.x.shape[0]

    @property
    def p(self) -> int:
        return self.x.shape[1]


def _realize(
    x: np.ndarray,
    sc: Scenario,
    stats: StandardizationStats | None,
    rng: np.random.Generator,
    linear_effect_mode: str,
) -> SimulatedData:
    e = propensity_score(x, sc.propensity, stats=stats, c=sc.c)
    e = np.clip(np.atleast_1d(e), 1e-12, 1.0 - 1e-12)  # keep Phi output off 0/1
    d = rng.binomial(1, e).astype(float)
    g = np.atleast_1d(baseline_g(x))
    t, tau = _effect_components(x, sc.effect, rng, linear_effect_mode)
    u = rng.standard_normal(x.shape[0])
    y = tau * d + g + u
    return SimulatedData(x=x, d=d, y=y, tau_true=tau, e_true=e, g_true=g, t_true=t)


@functools.lru_cache(maxsize=64)
def _test_set(sc: Scenario, linear_effect_mode: str) -> SimulatedData:
    corr = generate_correlation(CorrelationSpec(sc.p, sc.resolved_corr_seed))
    rng = np.random.default_rng(sc.resolved_test_seed)
    x = draw_covariates(sc.test_size, corr, rng)
    stats = None
    if sc.propensity not in ("random_balanced", "random_imbalanced"):
        a = assignment_index(x, sc.propensity)
        stats = StandardizationStats(mean=float(a.mean()), sd=float(a.std()))
    return _realize(x, sc, stats, rng, linear_effect_mode)


def simulate(
    sc: Scenario,
    seed: int,
    linear_effect_mode: str = "indicator_x2",
) -> tuple[SimulatedData, SimulatedData]:
    """Draw one training replication plus the scenario's fixed test set.

    The test set depends only on (scenario, test seed) and is cached, so
    every replication of a scenario is evaluated against identical test
    rows.  The training draw is fully determined by ``seed``.
    """
    corr = generate_correlation(CorrelationSpec(sc.p, sc.resolved_corr_seed))
    test = _test_set(sc, linear_effect_mode)
    rng = np.random.default_rng(seed)
    x = draw_covariates(sc.n, corr, rng)
    stats = None
    if sc.propensity not in ("random_balanced", "random_imbalanced"):
        # Standardize over the pooled train + test draw of this replication.
        a = np.concatenate([assignment_index(x, sc.propensity), assignment_index(test.x, sc.propensity)])
        sd = float(a.std())
        if sd <= 0:
            raise DegeneratePropensityError("pooled assignment index is constant")
        stats = StandardizationStats(mean=float(a.mean()), sd=sd)
    train = _realize(x, sc, stats, rng, linear_effect_mode)
    return train, test


def export_csv(data: SimulatedData, path) -> None:
    """Write a dataset as CSV with header ``x1..xp,d,y,tau_true,e_true``."""
    p = data.p
    header = ",".join([f"x{j + 1}" for j in range(p)] + ["d", "y", "tau_true", "e_true"])
    table = np.column_stack([data.x, data.d, data.y, data.tau_true, data.e_true])
    fmt = ["%.17g"] * p + ["%d"] + ["%.17g"] * 3
    np.savetxt(path, table, delimiter=",", header=header, comments="", fmt=fmt)
