"""Batch command-line interface.

Four subcommands: ``interpolate`` (exact-data pointwise posteriors and sample
paths), ``fit`` (full regression, writes a JSON model archive), ``predict``
(credible bands from an archive), and ``crossval`` (k-fold RMSE harness).
Everything is file-in/file-out and deterministic for a fixed --seed. Exit
codes: 0 success, 2 invalid input, 3 numerical failure, 4 I/O failure.
"""

from __future__ import annotations

import os
import sys

import click
import numpy as np

from . import __version__
from ._io import atomic_write_text
from .data import Dataset, load_csv, load_probe_csv
from .errors import IOError_, NumericalError, ValidationError
from .geometry import as_regularity
from .interpolate import pointwise_posterior, draw_sample_path, solve_interpolation
from .pipeline import crossval as run_crossval
from .pipeline import fit_dataset, load_archive, save_archive
from .sampler import SamplerConfig


def _comment_header(seed, eta) -> str:
    return f"# sipr {__version__} seed={seed} eta={eta:g}"


def _write_csv(path: str, header_cols: list[str], rows: list[list], seed, eta) -> None:
    lines = [_comment_header(seed, eta), ",".join(header_cols)]
    for row in rows:
        lines.append(",".join(repr(float(v)) for v in row))
    atomic_write_text(path, "\n".join(lines) + "\n")


def _parse_grid(spec: str) -> np.ndarray:
    parts = spec.split(":")
    if len(parts) != 3:
        raise ValidationError(f"--grid expects start:stop:count, got {spec!r}")
    try:
        start, stop, count = float(parts[0]), float(parts[1]), int(parts[2])
    except ValueError:
        raise ValidationError(f"--grid expects numbers in start:stop:count, got {spec!r}") from None
    if count < 1:
        raise ValidationError(f"--grid count must be >= 1, got {count}")
    return np.linspace(start, stop, count)[:, None]


def _load_probes(probes_path, grid, feature_names) -> np.ndarray:
    if (probes_path is None) == (grid is None):
        raise ValidationError("provide exactly one of --probes or --grid")
    if grid is not None:
        if len(feature_names) != 1:
            raise ValidationError("--grid only applies to one-dimensional data; use --probes")
        return _parse_grid(grid)
    return load_probe_csv(probes_path, feature_names)


def _jobs_value(jobs: int) -> int:
    env = os.environ.get("SIPR_JOBS")
    if env is not None:
        try:
            return max(1, int(env))
        except ValueError:
            raise ValidationError(f"SIPR_JOBS must be an integer, got {env!r}") from None
    return max(1, jobs)


def _noise_value(noise: str):
    if noise.lower() == "unknown":
        return "unknown"
    try:
        value = float(noise)
    except ValueError:
        raise ValidationError(f"--noise expects a number or 'unknown', got {noise!r}") from None
    if value < 0:
        raise ValidationError(f"--noise must be >= 0, got {value}")
    return value


@click.group()
@click.version_option(version=__version__, prog_name="sipr")
def cli():
    """Scale-invariant process regression tools."""


@cli.command("interpolate")
@click.option("--data", "data_path", required=True, type=click.Path(), help="Training CSV.")
@click.option("--target", required=True, help="Name of the target column.")
@click.option("--eta", required=True, type=float, help="Regularity exponent (positive non-integer).")
@click.option("--probes", "probes_path", type=click.Path(), help="CSV of probe points.")
@click.option("--grid", help="start:stop:count equispaced probes (1-D data).")
@click.option("--paths", type=int, default=0, show_default=True, help="Append this many sample paths.")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out", "out_path", required=True, type=click.Path(), help="Output CSV.")
def cmd_interpolate(data_path, target, eta, probes_path, grid, paths, seed, out_path):
    """Exact-data posterior (mean, t-scale, sd) at probe points."""
    reg = as_regularity(eta)
    ds = load_csv(data_path, target)
    probes = _load_probes(probes_path, grid, ds.feature_names)
    if paths < 0:
        raise ValidationError(f"--paths must be >= 0, got {paths}")

    model = solve_interpolation(ds.X, ds.y, reg)
    pps = [pointwise_posterior(None, None, reg, p, model=model) for p in probes]
    path_cols = []
    if paths:
        for s in np.random.SeedSequence(seed).spawn(paths):
            path_cols.append(draw_sample_path(ds.X, ds.y, reg, probes, seed=s))

    header = list(ds.feature_names) + ["mean", "scale", "sd"] + [f"path_{i}" for i in range(paths)]
    rows = []
    for i, (p, pp) in enumerate(zip(probes, pps)):
        rows.append(list(p) + [pp.mean, pp.scale, pp.sd] + [col[i] for col in path_cols])
    _write_csv(out_path, header, rows, seed, reg.value)
    click.echo(f"wrote {len(rows)} probes to {out_path}")


def _sampler_options(fn):
    for opt in reversed(
        [
            click.option("--chains", type=int, default=2, show_default=True),
            click.option("--samples", type=int, default=1000, show_default=True,
                         help="Iterations per chain including burn-in."),
            click.option("--burn", "burn_in", type=int, default=500, show_default=True,
                         help="Burn-in iterations discarded per chain."),
            click.option("--leapfrog", type=int, default=32, show_default=True),
            click.option("--target-accept", "target_accept", type=float, default=0.8, show_default=True),
            click.option("--jobs", type=int, default=1, show_default=True,
                         help="Worker limit (SIPR_JOBS overrides)."),
        ]
    ):
        fn = opt(fn)
    return fn


def _config(seed, chains, samples, burn_in, leapfrog, target_accept, jobs, trace=None) -> SamplerConfig:
    return SamplerConfig(
        chains=chains,
        samples_per_chain=samples,
        burn_in=burn_in,
        seed=seed,
        leapfrog_steps=leapfrog,
        target_accept=target_accept,
        jobs=_jobs_value(jobs),
        trace_path=trace,
    )


@cli.command("fit")
@click.option("--data", "data_path", required=True, type=click.Path())
@click.option("--target", required=True)
@click.option("--eta", required=True, type=float)
@click.option("--noise", default="unknown", show_default=True,
              help="Known noise sd, or 'unknown' to infer it.")
@click.option("--seed", type=int, default=0, show_default=True)
@_sampler_options
@click.option("--trace", "trace_path", type=click.Path(), help="Dump kept draws to this CSV.")
@click.option("--model-out", "out_path", required=True, type=click.Path(), help="Model archive (JSON).")
def cmd_fit(data_path, target, eta, noise, seed, chains, samples, burn_in, leapfrog,
            target_accept, jobs, trace_path, out_path):
    """Fit the regression posterior and archive the model."""
    reg = as_regularity(eta)
    ds = load_csv(data_path, target)
    cfg = _config(seed, chains, samples, burn_in, leapfrog, target_accept, jobs, trace_path)
    fit = fit_dataset(ds, reg, noise=_noise_value(noise), config=cfg)
    save_archive(fit, out_path)

    click.echo(f"regime: {fit.regime.value}")
    if fit.noise_known:
        click.echo(f"sigma_y (known): {fit.sigma_y:g}")
    else:
        click.echo(f"sigma_y (posterior median): {fit.sigma_y:.6g}")
    if fit.regime.value == "nullspace_pole":
        click.echo("polynomial coefficients: " + ", ".join(f"{v:.6g}" for v in fit.mean_c))
    if fit.diagnostics_summary:
        d = fit.diagnostics_summary
        click.echo(
            "acceptance: "
            + ", ".join(f"{a:.3f}" for a in d["accept_rates"])
            + f"; divergent: {max(d['divergence_rates']):.3f}"
            + f"; split Rhat: {d['rhat_max']:.3f}"
            + ("" if d["rhat_max"] < 1.1 else " (above 1.1: chains may not have mixed)")
        )
    click.echo(f"wrote model archive to {out_path}")


@cli.command("predict")
@click.option("--model", "model_path", required=True, type=click.Path(), help="Archive from fit.")
@click.option("--probes", "probes_path", type=click.Path())
@click.option("--grid", help="start:stop:count equispaced probes (1-D data).")
@click.option("--level", type=float, default=0.95, show_default=True)
@click.option("--out", "out_path", required=True, type=click.Path())
def cmd_predict(model_path, probes_path, grid, level, out_path):
    """Credible bands at probe points from a fitted model archive."""
    fit = load_archive(model_path)
    probes = _load_probes(probes_path, grid, fit.feature_names)
    band = fit.predict(probes, level=level)
    header = list(fit.feature_names) + [
        "mean", "sigma_s", "sigma_t", "sigma_f", "sigma_d", "lower", "upper",
    ]
    rows = []
    for i in range(probes.shape[0]):
        rows.append(
            list(probes[i])
            + [band.mean[i], band.sigma_s[i], band.sigma_t[i], band.sigma_f[i],
               band.sigma_d[i], band.lower[i], band.upper[i]]
        )
    seed = fit.config.seed if fit.config else 0
    _write_csv(out_path, header, rows, seed, fit.eta.value)
    click.echo(f"wrote {len(rows)} probes to {out_path}")


@cli.command("crossval")
@click.option("--data", "data_path", required=True, type=click.Path())
@click.option("--target", required=True)
@click.option("--eta", required=True, type=float)
@click.option("--noise", default="unknown", show_default=True)
@click.option("--folds", type=int, default=5, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@_sampler_options
@click.option("--out", "out_path", required=True, type=click.Path(), help="Per-fold RMSE CSV.")
def cmd_crossval(data_path, target, eta, noise, folds, seed, chains, samples, burn_in,
                 leapfrog, target_accept, jobs, out_path):
    """k-fold cross-validation; per-fold and pooled RMSE in original units."""
    reg = as_regularity(eta)
    ds = load_csv(data_path, target)
    cfg = _config(seed, chains, samples, burn_in, leapfrog, target_accept, jobs)
    result = run_crossval(ds, reg, noise=_noise_value(noise), k=folds, seed=seed,
                          config=cfg, jobs=cfg.jobs)

    lines = [_comment_header(seed, reg.value), "fold,n_test,rmse,regime"]
    for f in result.folds:
        lines.append(f"{f.fold},{f.n_test},{f.rmse!r},{f.regime}")
    lines.append(f"pooled,{ds.n},{result.pooled_rmse!r},-")
    atomic_write_text(out_path, "\n".join(lines) + "\n")
    for f in result.folds:
        click.echo(f"fold {f.fold}: n={f.n_test} rmse={f.rmse:.6g} regime={f.regime}")
    click.echo(f"pooled rmse: {result.pooled_rmse:.6g}")


def main(argv=None) -> int:
    """Entry point with the documented exit-code mapping."""
    try:
        cli.main(args=argv, standalone_mode=False)
        return 0
    except click.exceptions.Exit as exc:  # --help, --version
        return int(exc.exit_code)
    except click.ClickException as exc:
        exc.show()
        return 2
    except click.Abort:
        return 130
    except ValidationError as exc:
        click.echo(f"error: {exc}", err=True)
        return 2
    except NumericalError as exc:
        click.echo(f"numerical failure: {exc}", err=True)
        return 3
    except (IOError_, OSError) as exc:
        click.echo(f"i/o failure: {exc}", err=True)
        return 4


if __name__ == "__main__":
    sys.exit(main())
