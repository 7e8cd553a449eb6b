"""Monte Carlo driver: run grids of (scenario, learner, strategy) cells.

Each cell runs R replications against the scenario's fixed test set and
reduces the resulting prediction cube to one results row.  Cells are
independently seeded from the master seed and their key, so execution
order and worker count never change the output; completed cells are
checkpointed and skipped on rerun.
"""

from __future__ import annotations

import csv
import json
import io
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np
import yaml

from . import dgp
from .engine import check_leakage, fit_estimator, predict
from .errors import ConfigError
from .evaluate import MEDIAN_MSE_MODES, EvalReport, PredictionCube, aggregate, median_mse_curve
from .learners import LearnerConfig
from .metalearners import META_LEARNERS, T_LEARNER_STRATEGIES
from .seeding import stable_seed
from .splitter import STRATEGIES, STRATEGY_NAMES

RESULTS_COLUMNS = (
    "scenario", "learner", "estimator",
    "mean_mse", "mean_abs_bias", "mean_sd", "median_mse", "replications",
)
RUNLOG_COLUMNS = (
    "scenario", "learner", "estimator", "replication", "b", "rotation",
    "fold_seed", "model", "weights", "psi_mean", "psi_sd",
)
CURVE_COLUMNS = ("scenario", "learner", "estimator", "replication", "b", "mse")


@dataclass
class RunConfig:
    """Everything one run needs; mirrors the config-file schema."""

    scenarios: tuple[str, ...] = dgp.SCENARIO_IDS
    learners: tuple[str, ...] = META_LEARNERS
    strategies: tuple[str, ...] = STRATEGY_NAMES
    replications: int = 30
    b_iterations: int = 20
    seed: int = 0
    exclude_linear: bool = False
    output_dir: str = "catebench-run"
    workers: int = 1
    test_size: int = 2000
    median_mse_mode: str = "replications"
    linear_effect_mode: str = "indicator_x2"
    emit_median_curve: bool = False
    audit_leakage: bool = False
    learner_overrides: dict = field(default_factory=dict)

    def learner_config(self) -> LearnerConfig:
        return LearnerConfig(exclude_linear=self.exclude_linear, **self.learner_overrides)


def is_valid_pair(learner: str, strategy: str) -> bool:
    return learner != "t" or strategy in T_LEARNER_STRATEGIES


def validate(config: RunConfig | dict) -> RunConfig:
    """Normalize and check a configuration; raises ConfigError with one
    message per offending field."""
    if isinstance(config, dict):
        unknown = set(config) - {f for f in RunConfig.__dataclass_fields__}
        if unknown:
            raise ConfigError([f"unknown config fields: {sorted(unknown)}"])
        config = RunConfig(**config)
    cfg = RunConfig(**asdict(config))

    def _as_tuple(value):
        if isinstance(value, str):
            value = [part.strip() for part in value.split(",") if part.strip()]
        return tuple(value)

    cfg.scenarios = _as_tuple(cfg.scenarios)
    cfg.learners = tuple(str(l).lower() for l in _as_tuple(cfg.learners))
    cfg.strategies = _as_tuple(cfg.strategies)

    errors = []
    if not cfg.scenarios:
        errors.append("scenarios: must not be empty")
    for sid in cfg.scenarios:
        if sid not in dgp.SCENARIO_IDS:
            errors.append(f"scenarios: unknown scenario id {sid!r}")
    if not cfg.learners:
        errors.append("learners: must not be empty")
    for learner in cfg.learners:
        if learner not in META_LEARNERS:
            errors.append(f"learners: unknown meta-learner {learner!r}")
    if not cfg.strategies:
        errors.append("strategies: must not be empty")
    for strat in cfg.strategies:
        if strat not in STRATEGIES:
            errors.append(f"strategies: unknown strategy {strat!r}")
    if cfg.replications < 1:
        errors.append("replications: must be >= 1")
    if cfg.b_iterations < 1:
        errors.append("b_iterations: must be >= 1")
    if cfg.workers < 1:
        errors.append("workers: must be >= 1")
    if cfg.test_size < 1:
        errors.append("test_size: must be >= 1")
    if cfg.median_mse_mode not in MEDIAN_MSE_MODES:
        errors.append(f"median_mse_mode: must be one of {MEDIAN_MSE_MODES}")
    if cfg.linear_effect_mode not in dgp.LINEAR_EFFECT_MODES:
        errors.append(f"linear_effect_mode: must be one of {dgp.LINEAR_EFFECT_MODES}")
    if not errors:
        try:
            cfg.learner_config()
        except (TypeError, ValueError) as exc:
            errors.append(f"learner_overrides: {exc}")
        pairs = [
            (l, s) for l in cfg.learners for s in cfg.strategies if is_valid_pair(l, s)
        ]
        if not pairs:
            for l in cfg.learners:
                for s in cfg.strategies:
                    errors.append(
                        f"learners/strategies: {l!r} + {s!r} is not a valid pair "
                        "(the T-learner supports neither dedicated-fold splitting "
                        "nor the combined strategy)"
                    )
    if errors:
        raise ConfigError(errors)
    return cfg


def load_config(path) -> RunConfig:
    """Read a YAML or JSON config file and validate it."""
    text = Path(path).read_text()
    data = yaml.safe_load(text) or {}
    if not isinstance(data, dict):
        raise ConfigError(["config file must hold a mapping of fields"])
    for key in ("scenarios", "learners", "strategies"):
        if key in data and isinstance(data[key], str):
            data[key] = tuple(part.strip() for part in data[key].split(",") if part.strip())
    return validate(data)


def grid_cells(cfg: RunConfig) -> list[tuple[str, str, str]]:
    """All valid (scenario, learner, strategy) cells, in canonical order."""
    return sorted(
        (sid, learner, strat)
        for sid in cfg.scenarios
        for learner in cfg.learners
        for strat in cfg.strategies
        if is_valid_pair(learner, strat)
    )


def _cell_fingerprint(cfg: RunConfig, cell: tuple[str, str, str]) -> int:
    return stable_seed(
        "cell-fingerprint", cfg.seed, cfg.replications, cfg.b_iterations,
        cfg.exclude_linear, cfg.test_size, cfg.median_mse_mode,
        cfg.linear_effect_mode, cfg.emit_median_curve,
        sorted(cfg.learner_overrides.items()), *cell,
    )


def _stack_rows(diag: dict, base: dict, fold_seed, rows: list) -> None:
    est_fold = diag.get("estimation_fold", "")
    psi = diag.get("psi") or {}
    for name in ("mu0", "mu1", "mu", "e", "final", "tau0", "tau1"):
        entry = diag.get(name)
        if not isinstance(entry, dict) or "weights" not in entry:
            continue
        if name in ("final",):
            summary = psi if "mean" in psi else {}
        elif name == "tau1":
            summary = psi.get("treated", {})
        elif name == "tau0":
            summary = psi.get("control", {})
        else:
            summary = {}
        rows.append({
            **base,
            "rotation": est_fold,
            "fold_seed": fold_seed,
            "model": name,
            "weights": "|".join(f"{w:.6g}" for w in entry["weights"]),
            "psi_mean": f"{summary['mean']:.10g}" if "mean" in summary else "",
            "psi_sd": f"{summary['sd']:.10g}" if "sd" in summary else "",
        })
    for rot_diag in diag.get("rotations", []):
        _stack_rows(rot_diag, base, fold_seed, rows)


def _runlog_rows(model, base: dict) -> list[dict]:
    rows: list[dict] = []

    def walk(node, b, fold_seed):
        fold_seed = node.metadata.get("fold_seed", fold_seed)
        if node.variant == "median":
            for b_idx, child in enumerate(node.children):
                walk(child, b_idx, fold_seed)
        elif node.variant == "crossfit_mean":
            for child in node.children:
                walk(child, b, fold_seed)
        else:
            _stack_rows(node.diagnostics, {**base, "b": b}, fold_seed, rows)

    walk(model, 0, "")
    return rows


def _compute_cell(cfg: RunConfig, cell: tuple[str, str, str]) -> dict:
    """Run all replications of one cell; returns the checkpoint payload."""
    sid, learner, strategy = cell
    sc = dgp.scenario(sid, test_size=cfg.test_size)
    lconf = cfg.learner_config()
    preds: list[np.ndarray] = []
    failures: list[str] = []
    runlog: list[dict] = []
    curve: list[dict] = []
    violations: list[str] = []
    test = None
    for rep in range(cfg.replications):
        data_seed = stable_seed(cfg.seed, *cell, "rep", rep, "data")
        fit_seed = stable_seed(cfg.seed, *cell, "rep", rep, "fit")
        try:
            train, test = dgp.simulate(sc, data_seed, cfg.linear_effect_mode)
            model = fit_estimator(
                train.x, train.d, train.y, learner, strategy,
                config=lconf, seed=fit_seed, b_iterations=cfg.b_iterations,
            )
            if cfg.audit_leakage:
                violations.extend(
                    f"rep {rep}: {v}" for v in check_leakage(model)
                )
            if model.variant == "median":
                member_preds = np.stack([predict(c, test.x) for c in model.children])
                pred = np.median(member_preds, axis=0)
                if cfg.emit_median_curve:
                    for b_idx, mse in enumerate(median_mse_curve(member_preds, test.tau_true)):
                        curve.append({
                            "scenario": sid, "learner": learner, "estimator": strategy,
                            "replication": rep, "b": b_idx + 1, "mse": f"{mse:.17g}",
                        })
            else:
                pred = predict(model, test.x)
            if not np.isfinite(pred).all():
                raise ValueError("non-finite test predictions")
            preds.append(pred)
            runlog.extend(_runlog_rows(model, {
                "scenario": sid, "learner": learner, "estimator": strategy,
                "replication": rep,
            }))
        except Exception as exc:  # failed replications are recorded, not fatal
            failures.append(f"rep {rep}: {type(exc).__name__}: {exc}")

    if preds:
        if test is None:
            train, test = dgp.simulate(sc, stable_seed(cfg.seed, *cell, "rep", 0, "data"),
                                       cfg.linear_effect_mode)
        cube = PredictionCube(values=np.stack(preds), tau_true=test.tau_true)
        report = aggregate(cube, median_mse_mode=cfg.median_mse_mode)
    else:
        report = EvalReport(
            mean_mse=float("nan"), mean_abs_bias=float("nan"),
            mean_sd=float("nan"), median_mse=float("nan"), replications=0,
        )
    return {
        "fingerprint": _cell_fingerprint(cfg, cell),
        "scenario": sid,
        "learner": learner,
        "estimator": strategy,
        "report": {
            "mean_mse": report.mean_mse,
            "mean_abs_bias": report.mean_abs_bias,
            "mean_sd": report.mean_sd,
            "median_mse": report.median_mse,
            "replications": report.replications,
        },
        "failures": failures,
        "leakage_violations": violations,
        "runlog": runlog,
        "curve": curve,
    }


def _cell_task(args):
    cfg, cell = args
    return cell, _compute_cell(cfg, cell)


@dataclass
class RunResult:
    output_dir: str
    results_path: str
    runlog_path: str
    config_echo_path: str
    curve_path: str | None
    cells: int
    rows: list[dict]
    total_failures: int
    failed_cells: list[str]
    leakage_violations: list[str]

    @property
    def ok(self) -> bool:
        return not self.failed_cells


def _fmt(value) -> str:
    return f"{value:.17g}" if isinstance(value, float) else str(value)


def _write_csv(path: Path, columns, rows) -> None:
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow([_fmt(row.get(col, "")) for col in columns])


def run(cfg: RunConfig | dict, progress: Callable[[str], None] | None = None) -> RunResult:
    """Execute the grid described by ``cfg``.

    Completed cells (matching fingerprints) are reloaded from their
    checkpoint files, so interrupting and rerunning reproduces a single
    uninterrupted run exactly.
    """
    cfg = validate(cfg)
    out = Path(cfg.output_dir)
    checkpoints = out / "checkpoints"
    checkpoints.mkdir(parents=True, exist_ok=True)

    echo = {
        "config": {**asdict(cfg), "scenarios": list(cfg.scenarios),
                   "learners": list(cfg.learners), "strategies": list(cfg.strategies)},
        "correlation_method": dgp.CORRELATION_METHOD,
        "scenario_catalog": [dgp.scenario(sid, test_size=cfg.test_size).to_dict()
                             for sid in cfg.scenarios],
        "skipped_pairs": [
            {"learner": l, "strategy": s}
            for l in cfg.learners for s in cfg.strategies if not is_valid_pair(l, s)
        ],
    }
    config_echo_path = out / "config_echo.yaml"
    config_echo_path.write_text(yaml.safe_dump(echo, sort_keys=True))

    cells = grid_cells(cfg)
    payloads: dict[tuple[str, str, str], dict] = {}
    pending = []
    for cell in cells:
        path = checkpoints / ("_".join(cell) + ".json")
        if path.exists():
            data = json.loads(path.read_text())
            if data.get("fingerprint") == _cell_fingerprint(cfg, cell):
                payloads[cell] = data
                if progress:
                    progress(f"[{len(payloads)}/{len(cells)}] {'/'.join(cell)} (checkpoint)")
                continue
        pending.append(cell)

    def finish(cell, payload):
        payloads[cell] = payload
        path = checkpoints / ("_".join(cell) + ".json")
        path.write_text(json.dumps(payload))
        if progress:
            progress(f"[{len(payloads)}/{len(cells)}] {'/'.join(cell)}")

    if cfg.workers > 1 and len(pending) > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            for cell, payload in pool.map(_cell_task, [(cfg, c) for c in pending]):
                finish(cell, payload)
    else:
        for cell in pending:
            finish(cell, _compute_cell(cfg, cell))

    results_rows = []
    runlog_rows = []
    curve_rows = []
    failed_cells = []
    leakage = []
    total_failures = 0
    for cell in cells:
        payload = payloads[cell]
        results_rows.append({
            "scenario": payload["scenario"],
            "learner": payload["learner"],
            "estimator": payload["estimator"],
            **payload["report"],
        })
        runlog_rows.extend(payload["runlog"])
        curve_rows.extend(payload["curve"])
        total_failures += len(payload["failures"])
        leakage.extend(payload["leakage_violations"])
        if payload["report"]["replications"] == 0:
            failed_cells.append("/".join(cell))

    results_path = out / "results.csv"
    _write_csv(results_path, RESULTS_COLUMNS, results_rows)
    runlog_path = out / "runlog.csv"
    _write_csv(runlog_path, RUNLOG_COLUMNS, runlog_rows)
    curve_path = None
    if cfg.emit_median_curve:
        curve_path = out / "median_curve.csv"
        _write_csv(curve_path, CURVE_COLUMNS, curve_rows)

    return RunResult(
        output_dir=str(out),
        results_path=str(results_path),
        runlog_path=str(runlog_path),
        config_echo_path=str(config_echo_path),
        curve_path=str(curve_path) if curve_path else None,
        cells=len(cells),
        rows=results_rows,
        total_failures=total_failures,
        failed_cells=failed_cells,
        leakage_violations=leakage,
    )


def _format_metric(value: float, mark: bool) -> str:
    if isinstance(value, str):
        value = float(value)
    if np.isnan(value):
        return "nan"
    text = f"{value:.2f}"
    return f"_{text}_" if mark else text


def render_table(results_csv, layout: str = "by-learner") -> str:
    """Render a results CSV as Markdown tables.

    One section per learner (or per scenario with ``layout="by-scenario"``),
    one block per inner key; the lowest mean MSE of each block is emphasized,
    marking every estimator within 0.005 of the minimum on ties.
    """
    if layout not in ("by-learner", "by-scenario"):
        raise ValueError(f"unknown layout {layout!r}")
    with open(results_csv, newline="") as handle:
        rows = list(csv.DictReader(handle))
    if not rows:
        return "(no results)\n"

    outer_key, inner_key = ("learner", "scenario") if layout == "by-learner" else ("scenario", "learner")
    strategy_order = {name: i for i, name in enumerate(STRATEGY_NAMES)}
    buf = io.StringIO()
    for outer in sorted({r[outer_key] for r in rows}):
        buf.write(f"## {outer_key.capitalize()} {outer}\n\n")
        subset = [r for r in rows if r[outer_key] == outer]
        for inner in sorted({r[inner_key] for r in subset}):
            block = [r for r in subset if r[inner_key] == inner]
            block.sort(key=lambda r: strategy_order.get(r["estimator"], 99))
            mses = [float(r["mean_mse"]) for r in block]
            finite = [m for m in mses if not np.isnan(m)]
            best = min(finite) if finite else float("nan")
            buf.write(f"### {inner_key.capitalize()} {inner}\n\n")
            buf.write("| estimator | mean MSE | mean \\|Bias\\| | mean SD | median MSE | replications |\n")
            buf.write("|---|---|---|---|---|---|\n")
            for row, mse in zip(block, mses):
                mark = not np.isnan(mse) and finite and mse <= best + 0.005
                buf.write(
                    "| {est} | {mse} | {bias} | {sd} | {med} | {reps} |\n".format(
                        est=row["estimator"],
                        mse=_format_metric(mse, mark),
                        bias=_format_metric(float(row["mean_abs_bias"]), False),
                        sd=_format_metric(float(row["mean_sd"]), False),
                        med=_format_metric(float(row["median_mse"]), False),
                        reps=row["replications"],
                    )
                )
            buf.write("\n")
    return buf.getvalue()
