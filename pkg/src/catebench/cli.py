"""Command-line client for the benchmark service.

The CLI speaks to the FastAPI service: by default against an in-process
app (no server needed), or to a remote instance via ``--server URL``.
"""

from __future__ import annotations

import json
import sys

import click
import httpx


def _make_client(server: str | None):
    if server:
        return httpx.Client(base_url=server.rstrip("/"), timeout=None)
    from .service import InProcessClient, create_app

    return InProcessClient(create_app())


def _post(client, path: str, payload: dict) -> dict:
    response = client.post(path, json=payload)
    if response.status_code >= 400:
        detail = response.json().get("detail", response.text)
        if isinstance(detail, list):
            for item in detail:
                click.echo(f"error: {item}", err=True)
        else:
            click.echo(f"error: {detail}", err=True)
        sys.exit(2)
    return response.json()


@click.group()
@click.option("--server", default=None, metavar="URL",
              help="Remote service URL (default: run in-process).")
@click.pass_context
def main(ctx, server):
    """Benchmark CATE meta-learners under different splitting strategies."""
    ctx.obj = {"server": server}


@main.command()
@click.option("--config", "config_path", type=click.Path(exists=True), default=None,
              help="YAML/JSON config file; flags below override its fields.")
@click.option("--scenarios", default=None, help="Comma-separated scenario ids (A-L).")
@click.option("--learners", default=None, help="Comma-separated meta-learners (t,dr,r,x).")
@click.option("--strategies", default=None, help="Comma-separated strategy names.")
@click.option("--replications", type=int, default=None)
@click.option("--b-iterations", type=int, default=None)
@click.option("--seed", type=int, default=None)
@click.option("--exclude-linear", is_flag=True, default=None,
              help="Drop the linear model and lasso from every stack.")
@click.option("--out", "output_dir", default=None, metavar="DIR")
@click.option("--workers", type=int, default=None)
@click.option("--test-size", type=int, default=None)
@click.option("--emit-median-curve", is_flag=True, default=None,
              help="Write per-iteration MSE curves for median strategies.")
@click.pass_context
def run(ctx, config_path, scenarios, learners, strategies, replications,
        b_iterations, seed, exclude_linear, output_dir, workers, test_size,
        emit_median_curve):
    """Execute a Monte Carlo grid and write results.csv / runlog.csv."""
    payload = {}
    if config_path:
        import yaml

        with open(config_path) as handle:
            payload = yaml.safe_load(handle) or {}
    overrides = {
        "scenarios": scenarios, "learners": learners, "strategies": strategies,
        "replications": replications, "b_iterations": b_iterations, "seed": seed,
        "exclude_linear": exclude_linear, "output_dir": output_dir,
        "workers": workers, "test_size": test_size,
        "emit_median_curve": emit_median_curve,
    }
    for key, value in overrides.items():
        if value is None:
            continue
        if key in ("scenarios", "learners", "strategies") and isinstance(value, str):
            value = [part.strip() for part in value.split(",") if part.strip()]
        payload[key] = value
    with _make_client(ctx.obj["server"]) as client:
        body = _post(client, "/runs", payload)
    click.echo(f"results: {body['results_path']}")
    click.echo(f"runlog:  {body['runlog_path']}")
    if body.get("curve_path"):
        click.echo(f"curve:   {body['curve_path']}")
    click.echo(f"cells: {body['cells']}, failed replications: {body['total_failures']}")
    if body["failed_cells"]:
        for cell in body["failed_cells"]:
            click.echo(f"cell without any successful replication: {cell}", err=True)
        sys.exit(1)


@main.command()
@click.option("--in", "results_csv", required=True, type=click.Path(),
              help="Path to a results.csv produced by `run`.")
@click.option("--out", "out_path", required=True, type=click.Path())
@click.option("--layout", default="by-learner",
              type=click.Choice(["by-learner", "by-scenario"]))
@click.pass_context
def render(ctx, results_csv, out_path, layout):
    """Render results.csv as Markdown tables (lowest MSE per block marked)."""
    with _make_client(ctx.obj["server"]) as client:
        body = _post(client, "/render", {
            "results_csv": results_csv, "out_path": out_path, "layout": layout,
        })
    click.echo(f"wrote {body['path']}")


@main.command()
@click.option("--scenario", required=True, help="Scenario id (A-L).")
@click.option("--seed", type=int, default=0)
@click.option("--out", "out_path", required=True, type=click.Path())
@click.pass_context
def simulate(ctx, scenario, seed, out_path):
    """Export one training dataset as CSV (x1..xp,d,y,tau_true,e_true)."""
    with _make_client(ctx.obj["server"]) as client:
        body = _post(client, "/simulate", {
            "scenario": scenario, "seed": seed, "out_path": out_path,
        })
    click.echo(f"wrote {body['path']} ({body['rows']} rows)")


@main.command()
@click.pass_context
def scenarios(ctx):
    """Print the scenario catalog as JSON."""
    with _make_client(ctx.obj["server"]) as client:
        response = client.get("/scenarios")
    click.echo(json.dumps(response.json(), indent=2))


@main.command()
@click.option("--host", default="127.0.0.1")
@click.option("--port", type=int, default=8000)
def serve(host, port):
    """Start the HTTP service."""
    import uvicorn

    from .service import create_app

    uvicorn.run(create_app(), host=host, port=port)


if __name__ == "__main__":
    main()
