"""Batch command-line interface.

Subcommands: simulate, rates, fit, bootstrap, simstudy. All outputs are
CSV/JSON written to an output directory together with a manifest that
records the exact configuration and seed, so a rerun with the same
manifest reproduces the outputs byte for byte. On validation errors,
partial outputs go to a quarantine subdirectory and the exit code is
nonzero.
"""

from __future__ import annotations

import argparse
import csv
import datetime
import io
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .bootstrap import band, run_bootstrap, smooth_minmax, smooth_sample, smooth_weighted
from .errors import IngestionError, SirSplineError
from .estimator import FitResult, fit_mle, initial_theta
from .knots import feature_curve, finite_difference_ladder, forward_bic_select, moving_average_rates
from .likelihood import LikelihoodConfig, ParameterVector
from .metrics import imse, scenario
from .sir import CountState, EpidemicPath, RatePair, sample_path_at, simulate_exact, simulate_tau_leap
from .splines import SplineModel


def ingest_covid_csv(text: str, population: int) -> EpidemicPath:
    """Build an SIR path from COVID-style data.

    Expects columns date,cumulative_cases,active_cases with ISO dates.
    S = population - cumulative, I = active; times are day offsets from
    the first row.
    """
    rows = list(csv.DictReader(io.StringIO(text)))
    if not rows:
        raise IngestionError("empty data file")
    required = {"date", "cumulative_cases", "active_cases"}
    if not required.issubset(rows[0].keys()):
        raise IngestionError(f"missing columns: {sorted(required - set(rows[0].keys()))}")

    times, s, i = [], [], []
    bad_rows = []
    prev_cum = None
    day0 = None
    for row_num, row in enumerate(rows, start=2):  # 1-based incl. header
        try:
            date = datetime.date.fromisoformat(row["date"].strip())
            cum = int(row["cumulative_cases"])
            active = int(row["active_cases"])
        except (ValueError, AttributeError):
            bad_rows.append(row_num)
            continue
        if day0 is None:
            day0 = date
        if prev_cum is not None and cum < prev_cum:
            raise IngestionError(f"cumulative cases decrease at row {row_num}")
        prev_cum = cum
        if cum > population or active < 0 or active > cum:
            raise IngestionError(f"case counts out of bounds at row {row_num}")
        times.append((date - day0).days)
        s.append(population - cum)
        i.append(active)
    if bad_rows:
        raise IngestionError(f"unparseable/missing values at rows {bad_rows}")
    try:
        return EpidemicPath(times, s, i, population)
    except ValueError as e:
        raise IngestionError(str(e)) from e


class _OutputSet:
    """Staged outputs; flushed to the run directory on success or to a
    quarantine subdirectory on failure."""

    def __init__(self, outdir: Path):
        self.outdir = outdir
        self.files: dict[str, str] = {}

    def add(self, name: str, content: str):
        self.files[name] = content

    def flush(self, quarantine: bool = False):
        target = self.outdir / "quarantine" if quarantine else self.outdir
        target.mkdir(parents=True, exist_ok=True)
        for name, content in self.files.items():
            (target / name).write_text(content)


def _manifest(command: str, cfg: dict) -> str:
    return json.dumps(
        {"command": command, "version": __version__, "config": cfg},
        indent=2, sort_keys=True,
    )


def _read_config_file(path: str) -> dict:
    """Flat key = value config file; '#' starts a comment."""
    out = {}
    for line in Path(path).read_text().splitlines():
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise IngestionError(f"bad config line: {line!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        out[key.replace("-", "_")] = value
    return out


def _merge_config(args: argparse.Namespace, parser: argparse.ArgumentParser) -> dict:
    """Flags > config file > parser defaults."""
    cfg = {k: v for k, v in vars(args).items() if k not in ("func", "config")}
    if getattr(args, "config", None):
        file_cfg = _read_config_file(args.config)
        defaults = {a.dest: a.default for a in parser._actions}
        for key, raw in file_cfg.items():
            if key not in cfg:
                raise IngestionError(f"unknown config key {key!r}")
            if cfg[key] == defaults.get(key):  # not set on the command line
                default = defaults.get(key)
                if isinstance(default, bool):
                    cfg[key] = raw.lower() in ("1", "true", "yes")
                elif isinstance(default, int):
                    cfg[key] = int(raw)
                elif isinstance(default, float):
                    cfg[key] = float(raw)
                else:
                    cfg[key] = raw
    return cfg


def _load_path(cfg: dict) -> EpidemicPath:
    text = Path(cfg["data"]).read_text()
    if cfg.get("covid"):
        if not cfg.get("population"):
            raise IngestionError("--population is required with --covid")
        return ingest_covid_csv(text, cfg["population"])
    return EpidemicPath.from_csv(text)


def _likelihood_config(cfg: dict) -> LikelihoodConfig:
    return LikelihoodConfig(
        family=cfg["family"], steps_k=cfg["steps"],
        mc_paths_B=cfg["mc_paths"], seed=cfg["seed"],
    )


def _curve_csv(times, values, value_name="beta") -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["time", value_name])
    for t, v in zip(times, values):
        w.writerow([repr(float(t)), repr(float(v))])
    return buf.getvalue()


def cmd_simulate(cfg: dict, out: _OutputSet):
    truth = scenario(cfg["scenario"], t_end=float(cfg["observations"] - 1))
    rates = RatePair(lambda t: float(truth.value(t)), cfg["gamma"])
    n = cfg["population"]
    i0 = max(1, round(n * cfg["init_infected"]))
    init = CountState(n - i0, i0, n)
    grid = np.arange(cfg["observations"], dtype=float)
    if cfg["method"] == "exact":
        path = sample_path_at(simulate_exact(rates, init, float(grid[-1]), cfg["seed"]), grid)
    else:
        path = simulate_tau_leap(rates, init, grid, cfg["seed"])
    out.add("path.csv", path.to_csv())
    out.add("truth.csv", _curve_csv(grid, truth.value(grid)))
    out.add("manifest.json", _manifest("simulate", cfg))


def cmd_rates(cfg: dict, out: _OutputSet):
    path = _load_path(cfg)
    series = moving_average_rates(path, cfg["window"])
    out.add("rates.csv", series.to_csv())
    if len(series) > cfg["degree"] + 1:
        ladder = finite_difference_ladder(series, cfg["degree"] + 1)
        curve = feature_curve(ladder[-1], cfg["degree"],
                              (float(series.times[0]), float(series.times[-1])))
        out.add("feature.csv", curve.to_csv())
    out.add("manifest.json", _manifest("rates", cfg))


def _fit_pipeline(path: EpidemicPath, cfg: dict):
    lik_cfg = _likelihood_config(cfg)
    selection = forward_bic_select(
        path, cfg["degree"], lik_cfg, cfg["max_knots"], window=cfg["window"],
    )
    return selection, lik_cfg


def cmd_fit(cfg: dict, out: _OutputSet):
    path = _load_path(cfg)
    selection, _ = _fit_pipeline(path, cfg)
    result = selection.best
    out.add("model.json", result.to_json())
    out.add("beta_curve.csv",
            _curve_csv(path.times, result.theta_hat.spline.value(path.times)))
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["K", "bic", "error"])
    for entry in selection.trace:
        w.writerow([entry["K"],
                    "" if entry["bic"] is None else repr(entry["bic"]),
                    entry["error"] or ""])
    out.add("bic_trace.csv", buf.getvalue())
    out.add("manifest.json", _manifest("fit", cfg))


def cmd_bootstrap(cfg: dict, out: _OutputSet):
    path = _load_path(cfg)
    lik_cfg = _likelihood_config(cfg)
    if cfg.get("model"):
        obj = json.loads(Path(cfg["model"]).read_text())
        theta = ParameterVector(obj["gamma"], SplineModel.from_json(json.dumps(obj["spline"])))
    else:
        selection, _ = _fit_pipeline(path, cfg)
        theta = selection.best.theta_hat
    ensemble = run_bootstrap(
        theta, path, cfg["bootstrap_b"], lik_cfg,
        max_attempts_factor=cfg["max_attempts_factor"], seed=cfg["seed"],
        simulator=cfg["bootstrap_simulator"],
    )
    level = 1.0 - cfg["alpha"]
    base = band(ensemble, cfg["interval"], level, bias_corrected=cfg["bias_corrected"])
    smoothing = cfg["smoothing"]
    if smoothing == "none":
        result = base
    elif smoothing == "weighted":
        result = smooth_weighted(base)
    elif smoothing == "sample":
        result = smooth_sample(ensemble, cfg["interval"], level,
                               bias_corrected=cfg["bias_corrected"])
    elif smoothing == "minmax":
        result = smooth_minmax(base)
    else:
        raise ValueError(f"unknown smoothing {smoothing!r}")
    out.add("band.csv", result.to_csv())
    out.add("band_meta.json", result.metadata_json())
    out.add("ensemble_stats.json", json.dumps({
        "curves": ensemble.num_curves,
        "attempts": ensemble.attempts,
        "discarded": ensemble.discarded,
        "shortfall": ensemble.shortfall,
    }))
    out.add("manifest.json", _manifest("bootstrap", cfg))


def _simstudy_replicate(rep: int, cfg: dict) -> list[dict]:
    """All fits for one simulated replicate; pure function of (rep, cfg)."""
    truth = scenario(cfg["scenario"], t_end=float(cfg["observations"] - 1))
    rates = RatePair(lambda t: float(truth.value(t)), cfg["gamma"])
    n = cfg["population"]
    i0 = max(1, round(n * cfg["init_infected"]))
    init = CountState(n - i0, i0, n)
    grid = np.arange(cfg["observations"], dtype=float)
    degrees = [int(d) for d in str(cfg["degrees"]).split(",")]
    families = [f.strip() for f in str(cfg["families"]).split(",")]

    try:
        path = sample_path_at(
            simulate_exact(rates, init, float(grid[-1]), (cfg["seed"], rep)), grid
        )
    except SirSplineError as e:
        return [{"replicate": rep, "error": str(e)}]
    rows = []
    for degree in degrees:
        for family in families:
            lik_cfg = LikelihoodConfig(family=family, steps_k=cfg["steps"],
                                       mc_paths_B=cfg["mc_paths"], seed=cfg["seed"])
            try:
                selection = forward_bic_select(path, degree, lik_cfg,
                                               cfg["max_knots"], window=cfg["window"])
                est = selection.best.theta_hat.spline.value(grid)
                rows.append({
                    "replicate": rep, "degree": degree, "family": family,
                    "K": selection.num_knots,
                    "imse": imse(est, truth, grid),
                    "bic": selection.best.bic,
                })
            except Exception as e:
                rows.append({"replicate": rep, "degree": degree,
                             "family": family, "error": str(e)})
    return rows


def default_workers() -> int:
    """Worker-pool size for the simulation-study fan-out (env override)."""
    raw = os.environ.get("SIRSPLINE_WORKERS", "1")
    try:
        workers = int(raw)
    except ValueError:
        raise IngestionError(f"SIRSPLINE_WORKERS must be an integer, got {raw!r}")
    if workers < 1:
        raise IngestionError("SIRSPLINE_WORKERS must be >= 1")
    return workers


def cmd_simstudy(cfg: dict, out: _OutputSet):
    workers = cfg.get("workers") or default_workers()
    reps = range(cfg["replicates"])
    if workers > 1:
        # replicates are independent and seeded per replicate, so the
        # result is identical for any worker count; collect in rep order
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(max_workers=workers) as pool:
            per_rep = list(pool.map(_simstudy_replicate, reps, (cfg,) * len(reps)))
    else:
        per_rep = [_simstudy_replicate(rep, cfg) for rep in reps]
    rows = [row for rep_rows in per_rep for row in rep_rows]
    failures = sum(1 for r in rows if "error" in r)

    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["replicate", "degree", "family", "K", "imse", "bic", "error"])
    for r in rows:
        w.writerow([r.get("replicate"), r.get("degree", ""), r.get("family", ""),
                    r.get("K", ""),
                    repr(r["imse"]) if "imse" in r else "",
                    repr(r["bic"]) if "bic" in r else "",
                    r.get("error", "")])
    out.add("imse_table.csv", buf.getvalue())
    out.add("summary.json", json.dumps({"failures": failures, "rows": len(rows)}))
    out.add("manifest.json", _manifest("simstudy", cfg))


def _add_common(p: argparse.ArgumentParser):
    p.add_argument("--config", help="flat key = value config file")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="output directory")


def _add_data_opts(p: argparse.ArgumentParser):
    p.add_argument("--data", required=True, help="input path CSV (time,S,I,N)")
    p.add_argument("--covid", action="store_true",
                   help="input is date,cumulative_cases,active_cases")
    p.add_argument("--population", type=int, default=0,
                   help="population size (required with --covid)")


def _add_fit_opts(p: argparse.ArgumentParser):
    p.add_argument("--degree", type=int, default=0, choices=(0, 1, 2, 3))
    p.add_argument("--window", type=int, default=4)
    p.add_argument("--family", default="tau-leap", choices=("tau-leap", "diffusion"))
    p.add_argument("--steps", type=int, default=1)
    p.add_argument("--mc-paths", type=int, default=100, dest="mc_paths")
    p.add_argument("--max-knots", type=int, default=10, dest="max_knots")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sirspline",
        description="Spline-based inference of time-varying SIR infection rates",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="simulate an epidemic from a named scenario")
    p.add_argument("--scenario", default="1")
    p.add_argument("--population", type=int, default=10000)
    p.add_argument("--observations", type=int, default=71)
    p.add_argument("--gamma", type=float, default=0.1)
    p.add_argument("--init-infected", type=float, default=0.01, dest="init_infected")
    p.add_argument("--method", default="exact", choices=("exact", "tau-leap"))
    _add_common(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("rates", help="moving-average rate series and feature curve")
    _add_data_opts(p)
    p.add_argument("--window", type=int, default=4)
    p.add_argument("--degree", type=int, default=0, choices=(0, 1, 2, 3))
    _add_common(p)
    p.set_defaults(func=cmd_rates)

    p = sub.add_parser("fit", help="knot selection and MLE fit")
    _add_data_opts(p)
    _add_fit_opts(p)
    _add_common(p)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("bootstrap", help="parametric-bootstrap confidence band")
    _add_data_opts(p)
    _add_fit_opts(p)
    p.add_argument("--model", help="model.json from a previous fit (skips refitting)")
    p.add_argument("--bootstrap-b", type=int, default=200, dest="bootstrap_b")
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--interval", default="percentile", choices=("pivotal", "normal", "percentile"))
    p.add_argument("--bias-corrected", action="store_true", dest="bias_corrected")
    p.add_argument("--smoothing", default="none", choices=("none", "weighted", "sample", "minmax"))
    p.add_argument("--max-attempts-factor", type=int, default=10, dest="max_attempts_factor")
    p.add_argument("--bootstrap-simulator", default="tau-leap", choices=("tau-leap", "exact"),
                   dest="bootstrap_simulator")
    _add_common(p)
    p.set_defaults(func=cmd_bootstrap)

    p = sub.add_parser("simstudy", help="replicated simulation study")
    p.add_argument("--scenario", default="1")
    p.add_argument("--replicates", type=int, default=20)
    p.add_argument("--population", type=int, default=10000)
    p.add_argument("--observations", type=int, default=71)
    p.add_argument("--gamma", type=float, default=0.1)
    p.add_argument("--init-infected", type=float, default=0.01, dest="init_infected")
    p.add_argument("--degrees", default="0,3")
    p.add_argument("--families", default="tau-leap,diffusion")
    p.add_argument("--window", type=int, default=4)
    p.add_argument("--steps", type=int, default=1)
    p.add_argument("--mc-paths", type=int, default=100, dest="mc_paths")
    p.add_argument("--max-knots", type=int, default=10, dest="max_knots")
    p.add_argument("--workers", type=int, default=0,
                   help="replicate worker pool size (default: SIRSPLINE_WORKERS or 1)")
    _add_common(p)
    p.set_defaults(func=cmd_simstudy)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    subparser = next(
        sp for sp in parser._subparsers._group_actions[0].choices.values()
        if sp.get_default("func") is args.func
    )
    try:
        cfg = _merge_config(args, subparser)
    except SirSplineError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    out = _OutputSet(Path(cfg.pop("out")))
    try:
        args.func(cfg, out)
    except (SirSplineError, ValueError) as e:
        out.flush(quarantine=True)
        print(f"error: {e}", file=sys.stderr)
        return 2
    out.flush()
    return 0


if __name__ == "__main__":
    sys.exit(main())
