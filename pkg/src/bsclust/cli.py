"""Command line front end.

Subcommands: ``gen`` (synthetic datasets), ``cluster`` (the forest
pipeline on a CSV), ``benchmark`` (grid search across methods), and
``validate`` (grid check of the level-set sandwich for a known mixture).

Option precedence is defaults < JSON config file (``--config``) < flags.
The default seed can be set through the ``BSC_SEED`` environment
variable.  Exit codes: 0 success, 1 usage or I/O error, 2 the algorithm
produced no result (e.g. no level with the requested component count).
"""

from __future__ import annotations

import json
import os
import sys

import click
import numpy as np

from . import data as data_mod
from .clustering import NoValidLevelError, cluster_forest
from .density import ForestParams, fit_forest
from .evaluation import DEFAULT_GRIDS, ari, benchmark, reports_to_csv, reports_to_json
from .partition import Box, InvalidInputError
from .setops import GridDensity, check_uncertainty_control, gaussian_mixture

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_NO_RESULT = 2

# categorical palette for the SVG scatter emitter
_PALETTE = ["#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd",
            "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"]


def _default_seed() -> int:
    return int(os.environ.get("BSC_SEED", "0"))


def _merge_config(config_path, defaults: dict, flags: dict) -> dict:
    """defaults < config file < explicitly passed flags."""
    merged = dict(defaults)
    if config_path:
        try:
            with open(config_path, "r", encoding="utf-8") as fh:
                merged.update(json.load(fh))
        except OSError as exc:
            raise click.ClickException(f"cannot read config {config_path}: {exc}")
        except json.JSONDecodeError as exc:
            raise click.ClickException(f"config {config_path} is not valid JSON: {exc}")
    merged.update({k: v for k, v in flags.items() if v is not None})
    return merged


def scatter_svg(points, labels, width: int = 640, height: int = 480) -> str:
    """Minimal deterministic scatter plot, colours keyed by label."""
    X = np.atleast_2d(np.asarray(points, dtype=float))
    labels = np.asarray(labels)
    lo = X.min(axis=0)
    hi = X.max(axis=0)
    span = np.where(hi - lo == 0, 1.0, hi - lo)
    margin = 10.0
    sx = (width - 2 * margin) / span[0]
    sy = (height - 2 * margin) / span[1]
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
    ]
    for point, lab in zip(X, labels):
        cx = margin + (point[0] - lo[0]) * sx
        cy = height - margin - (point[1] - lo[1]) * sy  # y up
        color = "#000000" if lab < 0 else _PALETTE[int(lab) % len(_PALETTE)]
        parts.append(f'<circle cx="{cx:.2f}" cy="{cy:.2f}" r="2.5" fill="{color}"/>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


@click.group()
def cli():
    """Density-based clustering with best-scored random density forests."""


@cli.command()
@click.option("--kind", required=True, help="circles | moons | varied | aniso")
@click.option("--n", type=int, default=None, help="sample size (default 1500)")
@click.option("--noise", type=float, default=None, help="Gaussian noise std (default 0.05)")
@click.option("--seed", type=int, default=None)
@click.option("--config", type=click.Path(), default=None, help="JSON config file")
@click.option("-o", "--out", required=True, type=click.Path())
def gen(kind, n, noise, seed, config, out):
    """Generate a synthetic dataset with truth labels and write it as CSV."""
    cfg = _merge_config(config, {"n": 1500, "noise": 0.05, "seed": _default_seed()},
                        {"n": n, "noise": noise, "seed": seed})
    dataset = data_mod.gen_synthetic(kind, cfg["n"], cfg["noise"], cfg["seed"])
    data_mod.write_csv(out, dataset)
    click.echo(f"wrote {dataset.n} rows to {out}")


@cli.command()
@click.option("--in", "in_path", required=True, type=click.Path())
@click.option("--m", type=int, default=None, help="trees in the forest (default 100)")
@click.option("--r-ratio", type=float, default=None, help="splits / n (default 0.3)")
@click.option("--q", type=float, default=None, help="background quantile (default 0.1)")
@click.option("--k", type=int, default=None, help="candidate partitions per tree (default 1)")
@click.option("--kn", type=int, default=None, help="k-NN for background assignment (default 5)")
@click.option("--k-c", type=int, default=None, help="target cluster count (default 2)")
@click.option("--q-eps", type=float, default=None, help="pairwise-distance quantile (default 0.05)")
@click.option("--mode", type=str, default=None, help="split mode: adaptive | pure")
@click.option("--seed", type=int, default=None)
@click.option("--config", type=click.Path(), default=None)
@click.option("--out-labels", required=True, type=click.Path())
@click.option("--out-meta", required=True, type=click.Path())
@click.option("--out-svg", type=click.Path(), default=None)
def cluster(in_path, m, r_ratio, q, k, kn, k_c, q_eps, mode, seed, config,
            out_labels, out_meta, out_svg):
    """Cluster a CSV dataset with the forest level-scan pipeline."""
    cfg = _merge_config(config,
                        {"m": 100, "r_ratio": 0.3, "q": 0.1, "k": 1, "kN": 5,
                         "k_c": 2, "q_eps": 0.05, "mode": "adaptive",
                         "seed": _default_seed()},
                        {"m": m, "r_ratio": r_ratio, "q": q, "k": k, "kN": kn,
                         "k_c": k_c, "q_eps": q_eps, "mode": mode, "seed": seed})
    dataset = _read_dataset(in_path)
    result = cluster_forest(dataset.points, m=cfg["m"], r_ratio=cfg["r_ratio"],
                            q=cfg["q"], k=cfg["k"], kN=cfg["kN"], k_c=cfg["k_c"],
                            q_eps=cfg["q_eps"], seed=cfg["seed"], mode=cfg["mode"])
    result.to_csv(out_labels)
    meta = json.loads(result.to_json())
    if dataset.truth is not None:
        meta["ari_vs_truth"] = ari(result.labels, dataset.truth)
    with open(out_meta, "w", encoding="utf-8") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")
    if out_svg:
        if dataset.d != 2:
            raise click.ClickException("--out-svg requires 2-d data")
        with open(out_svg, "w", encoding="utf-8") as fh:
            fh.write(scatter_svg(dataset.points, result.labels))
    click.echo(f"clustered {dataset.n} points at level {result.rho_out:.6g}")


@cli.command(name="benchmark")
@click.option("--suite", default="synthetic", help="synthetic | csv-list")
@click.option("--datasets", multiple=True, type=click.Path(),
              help="CSV files (for --suite csv-list)")
@click.option("--methods", multiple=True, help="subset of: ours dbscan kmeans")
@click.option("--repeats", type=int, default=None, help="runs per grid point (default 10)")
@click.option("--n", type=int, default=None, help="synthetic sample size (default 1500)")
@click.option("--seed", type=int, default=None)
@click.option("--config", type=click.Path(), default=None)
@click.option("-o", "--out", required=True, type=click.Path(),
              help="output prefix; writes <out>.json and <out>.csv")
def benchmark_cmd(suite, datasets, methods, repeats, n, seed, config, out):
    """Run the parameter-grid benchmark and write a JSON + CSV report."""
    cfg = _merge_config(config, {"repeats": 10, "n": 1500, "seed": _default_seed()},
                        {"repeats": repeats, "n": n, "seed": seed})
    methods = list(methods)
    if not methods:
        raise click.ClickException("at least one method is required (ours, dbscan, kmeans)")
    for method in methods:
        if method not in DEFAULT_GRIDS:
            raise click.ClickException(f"unknown method {method!r}; valid: ours, dbscan, kmeans")

    if suite == "synthetic":
        sets = [data_mod.gen_synthetic(kind, cfg["n"], seed=cfg["seed"])
                for kind in data_mod.SYNTHETIC_KINDS]
    elif suite == "csv-list":
        if not datasets:
            raise click.ClickException("--suite csv-list requires --datasets")
        sets = [_read_dataset(p) for p in datasets]
    else:
        raise click.ClickException(f"unknown suite {suite!r}; valid: synthetic, csv-list")

    reports = []
    for dataset in sets:
        for method in methods:
            click.echo(f"benchmarking {method} on {dataset.name} ...", err=True)
            report = benchmark(dataset, method, repeats=cfg["repeats"],
                               seed_base=cfg["seed"])
            reports.append(report)
            best = "n/a" if report.best_ari is None else f"{report.best_ari:.4f}"
            click.echo(f"  best mean ARI {best}", err=True)
    reports.sort(key=lambda r: (r.dataset, r.method))
    # wall-clock timings are excluded so re-runs are byte-identical
    with open(f"{out}.json", "w", encoding="utf-8") as fh:
        fh.write(reports_to_json(reports, include_runtime=False))
        fh.write("\n")
    reports_to_csv(f"{out}.csv", reports, include_runtime=False)
    click.echo(f"wrote {out}.json and {out}.csv")


@cli.command()
@click.option("--density", "density_spec", default=None,
              help='mixture JSON {"means": [[..]..], "stds": [..], "weights": [..]}')
@click.option("--n", type=int, default=None, help="sample size (default 5000)")
@click.option("--m", type=int, default=None, help="trees (default 20)")
@click.option("--p", type=int, default=None, help="splits per tree (default 2000)")
@click.option("--k", type=int, default=None, help="candidates per tree (default 1)")
@click.option("--resolution", type=int, default=None, help="grid cells per axis (default 256)")
@click.option("--rho-rel", multiple=True, type=float,
              help="levels as fractions of the density sup (default 0.3 0.5 0.7)")
@click.option("--eps", type=float, default=None, help="density tolerance (default 0.1 * sup)")
@click.option("--sigma", type=float, default=None,
              help="dilation radius (default 2 * median leaf diameter)")
@click.option("--seed", type=int, default=None)
@click.option("--config", type=click.Path(), default=None)
@click.option("-o", "--out", required=True, type=click.Path())
def validate(density_spec, n, m, p, k, resolution, rho_rel, eps, sigma, seed, config, out):
    """Check the erosion/dilation sandwich of the sample level sets on a grid."""
    cfg = _merge_config(config,
                        {"density": None, "n": 5000, "m": 20, "p": 2000, "k": 1,
                         "resolution": 256, "rho_rel": [0.3, 0.5, 0.7],
                         "eps": None, "sigma": None, "seed": _default_seed()},
                        {"density": density_spec, "n": n, "m": m, "p": p, "k": k,
                         "resolution": resolution,
                         "rho_rel": list(rho_rel) or None, "eps": eps, "sigma": sigma,
                         "seed": seed})
    if cfg["density"] is None:
        spec = {"means": [[-0.45, 0.0], [0.45, 0.0]], "stds": [0.18, 0.18]}
    else:
        spec = cfg["density"] if isinstance(cfg["density"], dict) else json.loads(cfg["density"])
    means = np.atleast_2d(np.asarray(spec["means"], dtype=float))
    if means.shape[1] > 2:
        raise click.ClickException("the grid oracle supports at most 2 dimensions")
    density_fn, sampler = gaussian_mixture(means, spec["stds"], spec.get("weights"))

    d = means.shape[1]
    box = Box(np.full(d, -1.0), np.full(d, 1.0))
    gd = GridDensity.from_function(box, cfg["resolution"], density_fn)
    fmax = gd.max()
    rng = np.random.default_rng(cfg["seed"])
    sample = sampler(cfg["n"], rng)

    params = ForestParams(m=cfg["m"], k=cfg["k"], p=cfg["p"], mode="adaptive",
                          seed=cfg["seed"])
    forest = fit_forest(sample, params)
    eps_val = cfg["eps"] if cfg["eps"] is not None else 0.1 * fmax
    sigma_val = cfg["sigma"] if cfg["sigma"] is not None else 2.0 * forest.median_leaf_diameter()

    reports = []
    for frac in cfg["rho_rel"]:
        rep = check_uncertainty_control(gd, sample, params, rho=frac * fmax,
                                        eps=eps_val, sigma=sigma_val, forest=forest)
        reports.append({"rho_rel": frac, **rep.as_dict()})
        click.echo(f"rho = {frac:.2f} * sup: violation fraction "
                   f"{rep.total_violation:.4%}", err=True)
    payload = {
        "density": spec, "n": cfg["n"], "m": cfg["m"], "p": cfg["p"], "k": cfg["k"],
        "resolution": cfg["resolution"], "seed": cfg["seed"],
        "density_sup": fmax, "eps": eps_val, "sigma": sigma_val,
        "median_leaf_diameter": forest.median_leaf_diameter(),
        "reports": reports,
    }
    with open(out, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
    click.echo(f"wrote {out}")


def _read_dataset(path):
    try:
        return data_mod.read_csv(path)
    except OSError as exc:
        raise click.ClickException(f"cannot read {path}: {exc}")
    except ValueError as exc:
        raise click.ClickException(f"malformed CSV {path}: {exc}")


def main(argv=None) -> int:
    """Entry point with the documented exit-code contract."""
    try:
        cli.main(args=argv, standalone_mode=False)
        return EXIT_OK
    except NoValidLevelError as exc:
        print(f"error: {exc}", file=sys.stderr)
        print(f"scan log (level, components): {exc.scan_log}", file=sys.stderr)
        return EXIT_NO_RESULT
    except click.exceptions.Abort:
        return EXIT_USAGE
    except click.ClickException as exc:
        print(f"error: {exc.format_message()}", file=sys.stderr)
        return EXIT_USAGE
    except InvalidInputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
