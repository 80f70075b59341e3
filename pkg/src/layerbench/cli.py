"""Command-line entry points: evaluate, correlate, stats, elo-simulate, serve.

Every command writes machine-readable JSON (canonical form: sorted keys,
9 significant digits) and exits nonzero with a structured error object on
any domain failure. --pretty additionally prints a human-readable table.
"""

from __future__ import annotations

import json
import sys
from pathlib import Path

import click

from . import synthetic
from .dataset import (
    instance_distribution,
    load_manifest,
    occlusion_report,
    quality_audit,
    size_ratio_histogram,
)
from .elo import DEFAULT_K_FACTOR, DEFAULT_LEASE_TTL, load_ledger, save_ledger, simulate_study
from .embedder import resolve_embedder
from .errors import LayerBenchError, ModelSetMismatch
from .evaluation import (
    build_reports,
    canonical_json,
    evaluate_models,
    write_canonical_json,
)
from .hpa import Subset, correlation_report, load_bounds, save_bounds
from .hpa import compute_bounds as compute_metric_bounds

EMBEDDER_ENV_VAR = "LAYERBENCH_EMBEDDER_URL"


def _fail(exc: Exception) -> None:
    payload = {"error": type(exc).__name__, "detail": str(exc)}
    click.echo(json.dumps(payload, sort_keys=True), err=True)
    sys.exit(1)


@click.group()
@click.version_option(version="0.1.0", prog_name="layerbench")
def main() -> None:
    """Evaluation tooling for referring layer decomposition."""


@main.command()
@click.option("--manifest", "manifest_path", required=True, type=click.Path(exists=True))
@click.option("--pred-root", required=True, type=click.Path(exists=True))
@click.option("--models", required=True, help="Comma-separated model ids.")
@click.option(
    "--embedder",
    default="reference",
    envvar=EMBEDDER_ENV_VAR,
    show_default=True,
    help='"reference" or an external embedder base URL.',
)
@click.option("--bounds", "bounds_path", type=click.Path(), default=None)
@click.option(
    "--subset",
    type=click.Choice([s.value for s in Subset]),
    default="all",
    show_default=True,
)
@click.option("--out", "out_path", required=True, type=click.Path())
@click.option("--allow-missing", is_flag=True, help="Report missing predictions instead of failing.")
@click.option(
    "--compute-bounds",
    is_flag=True,
    help="Derive bounds from this model pool (and save to --bounds if given).",
)
@click.option("--pretty", is_flag=True)
def evaluate(
    manifest_path,
    pred_root,
    models,
    embedder,
    bounds_path,
    subset,
    out_path,
    allow_missing,
    compute_bounds,
    pretty,
):
    """Score model predictions and aggregate HPA per model."""
    try:
        model_ids = [m.strip() for m in models.split(",") if m.strip()]
        manifest = load_manifest(manifest_path)
        spec = resolve_embedder(embedder)
        chosen_subset = Subset(subset)
        raw, coverages = evaluate_models(
            manifest, pred_root, model_ids, spec, chosen_subset, allow_missing
        )
        if compute_bounds:
            bounds = compute_metric_bounds({m: s.metric_dict() for m, s in raw.items()})
            if bounds_path:
                save_bounds(bounds, bounds_path)
        elif bounds_path and Path(bounds_path).is_file():
            bounds = load_bounds(bounds_path)
        else:
            raise LayerBenchError(
                "bounds required: pass --bounds with an existing file or --compute-bounds"
            )
        reports = build_reports(raw, bounds, chosen_subset)
        payload = {
            "version": 1,
            "subset": chosen_subset.value,
            "embedder": spec.name,
            "bounds": {
                name: {
                    "min": bounds.bound(name).lo,
                    "max": bounds.bound(name).hi,
                    "orientation": bounds.bound(name).orientation.value,
                }
                for name in ("s_vis", "s_gen", "s_fid")
            },
            "reports": [r.to_dict() for r in reports],
            "per_sample": {m: raw[m].per_sample for m in sorted(raw)},
            "coverage": coverages,
        }
        write_canonical_json(payload, out_path)
        if pretty:
            click.echo(f"{'model':<24}{'HPA':>8}{'S_vis':>10}{'S_gen':>10}{'S_fid':>10}")
            for r in reports:
                click.echo(
                    f"{r.model_id:<24}{r.hpa:>8.4f}{r.s_vis:>10.4f}"
                    f"{r.s_gen:>10.4f}{r.s_fid:>10.4f}"
                )
        else:
            click.echo(f"wrote {out_path}")
    except LayerBenchError as exc:
        _fail(exc)


@main.command()
@click.option("--report", "report_path", required=True, type=click.Path(exists=True))
@click.option("--ledger", "ledger_path", required=True, type=click.Path(exists=True))
@click.option("--out", "out_path", required=True, type=click.Path())
@click.option("--pretty", is_flag=True)
def correlate(report_path, ledger_path, out_path, pretty):
    """Correlate HPA scores from a report with Elo ratings from a ledger."""
    try:
        report = json.loads(Path(report_path).read_text())
        hpa_scores = {r["model_id"]: r["hpa"] for r in report["reports"]}
        ledger = load_ledger(ledger_path)
        common = sorted(set(hpa_scores) & set(ledger.ratings))
        if len(common) < 2:
            raise ModelSetMismatch(
                f"need >= 2 models present in both report and ledger, got {common}"
            )
        result = correlation_report(
            {m: hpa_scores[m] for m in common},
            {m: ledger.ratings[m] for m in common},
        )
        write_canonical_json(result, out_path)
        csv_path = Path(out_path).with_suffix(".csv")
        lines = ["model_id,hpa,elo"]
        lines += [f"{p['model_id']},{p['hpa']:.9g},{p['elo']:.9g}" for p in result["scatter"]]
        csv_path.write_text("\n".join(lines) + "\n")
        if pretty:
            click.echo(f"pearson  {result['pearson']:+.4f}")
            click.echo(f"spearman {result['spearman']:+.4f}")
        else:
            click.echo(f"wrote {out_path} and {csv_path}")
    except LayerBenchError as exc:
        _fail(exc)


@main.command()
@click.option("--manifest", "manifest_path", required=True, type=click.Path(exists=True))
@click.option("--out", "out_path", required=True, type=click.Path())
@click.option("--bins", default=10, show_default=True)
@click.option("--occlusion-threshold", default=0.01, show_default=True)
@click.option("--pretty", is_flag=True)
def stats(manifest_path, out_path, bins, occlusion_threshold, pretty):
    """Dataset statistics: instances, size ratios, occlusion rate, quality audit."""
    try:
        manifest = load_manifest(manifest_path)
        occ = occlusion_report(manifest, occlusion_threshold)
        payload = {
            "n_samples": len(manifest.samples),
            "instance_distribution": {
                str(k): v for k, v in instance_distribution(manifest).items()
            },
            "size_ratio_histogram": size_ratio_histogram(manifest, bins),
            "occlusion": occ,
            "quality": quality_audit(manifest),
        }
        write_canonical_json(payload, out_path)
        if pretty:
            click.echo(canonical_json(payload))
        else:
            click.echo(f"wrote {out_path}")
    except LayerBenchError as exc:
        _fail(exc)


@main.command(name="elo-simulate")
@click.option(
    "--skills",
    "skills_path",
    required=True,
    type=click.Path(exists=True),
    help="JSON file: {model_id: true skill}.",
)
@click.option("--rounds", default=2000, show_default=True)
@click.option("--k-factor", default=DEFAULT_K_FACTOR, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--out", "out_path", required=True, type=click.Path())
@click.option("--pretty", is_flag=True)
def elo_simulate(skills_path, rounds, k_factor, seed, out_path, pretty):
    """Run a simulated pairwise-preference study and save the ledger."""
    try:
        skills = {str(k): float(v) for k, v in json.loads(Path(skills_path).read_text()).items()}
        ledger = simulate_study(skills, rounds=rounds, k_factor=k_factor, rng_seed=seed)
        save_ledger(ledger, out_path)
        if pretty:
            for model_id, rating, n in ledger.leaderboard():
                click.echo(f"{model_id:<24}{rating:>9.1f}  ({n} matches)")
        else:
            click.echo(f"wrote {out_path}")
    except LayerBenchError as exc:
        _fail(exc)


@main.command(name="make-synthetic")
@click.option("--out", "out_root", required=True, type=click.Path())
@click.option("--samples", default=20, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--background-layers", is_flag=True)
def make_synthetic(out_root, samples, seed, background_layers):
    """Generate a seeded synthetic dataset for demos and calibration."""
    path = synthetic.generate_dataset(
        out_root, n_samples=samples, seed=seed, background_layers=background_layers
    )
    click.echo(f"wrote {path}")


@main.command()
@click.option("--manifest", "manifest_path", required=True, type=click.Path(exists=True))
@click.option("--pred-root", required=True, type=click.Path(exists=True))
@click.option("--ledger", "ledger_path", required=True, type=click.Path())
@click.option("--port", default=8000, show_default=True)
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--lease-ttl", default=DEFAULT_LEASE_TTL, show_default=True)
@click.option("--ui-dir", type=click.Path(), default=None, help="Static UI bundle to mount at /.")
def serve(manifest_path, pred_root, ledger_path, port, host, lease_ttl, ui_dir):
    """Run the live annotation service."""
    from .service import serve as run_service

    try:
        run_service(
            manifest_path,
            pred_root,
            ledger_path,
            port=port,
            lease_ttl=lease_ttl,
            host=host,
            ui_dir=ui_dir,
        )
    except LayerBenchError as exc:
        _fail(exc)


if __name__ == "__main__":
    main()
