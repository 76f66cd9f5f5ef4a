"""Command line entry point.

    tfqnn run <config>            run an experiment, write artifacts
    tfqnn compare <dirA> <dirB>   side-by-side deltas of two finished runs
    tfqnn spectrum <config>       frequency spectrum of the configured model

Run directories live under ``$TFQNN_OUTPUT_ROOT`` (default ``./runs``).
Exit codes: 0 success, 2 configuration/input error, 3 numerical error.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .config import dump_config, load_config
from .errors import CapacityError, ConfigError, InputError, NumericalError
from .experiments import RunOutput, model_from_config, run_experiment
from .spectrum import model_eigenvalues, spectral_gaps

ENV_OUTPUT_ROOT = "TFQNN_OUTPUT_ROOT"
EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3

log = logging.getLogger("tfqnn")


def output_root() -> Path:
    return Path(os.environ.get(ENV_OUTPUT_ROOT, "runs"))


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, float) and not np.isfinite(obj):
        return None
    return obj


def _cell(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, np.integer):
        return str(int(v))
    return v


def write_run(run_dir: Path, cfg, out: RunOutput) -> None:
    run_dir.mkdir(parents=True, exist_ok=True)
    (run_dir / "config.yaml").write_text(dump_config(cfg))
    results = {"version": __version__, "config": cfg.model_dump(mode="json"), **out.results}
    (run_dir / "results.json").write_text(json.dumps(_jsonable(results), indent=2) + "\n")
    for name, table in out.tables.items():
        with (run_dir / f"{name}.csv").open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(table.header)
            for row in table.rows:
                w.writerow([_cell(v) for v in row])


def cmd_run(args) -> int:
    cfg = load_config(args.config)
    name = args.name or cfg.name or Path(args.config).stem
    run_dir = (Path(args.output_root) if args.output_root else output_root()) / name
    log.info("running %s -> %s", cfg.experiment, run_dir)
    out = run_experiment(cfg)
    write_run(run_dir, cfg, out)
    print(run_dir)
    return EXIT_OK


def cmd_spectrum(args) -> int:
    """Spectrum experiments run as usual; other configs report the model's generator spectrum."""
    cfg = load_config(args.config)
    if cfg.experiment == "spectrum":
        return cmd_run(args)
    n_features = 3 if cfg.experiment == "solve_nse" else 1
    seed = cfg.train.seeds[0]
    model = model_from_config(cfg.model, seed, num_features=n_features)
    report = {}
    for d in range(n_features):
        eig = model_eigenvalues(model, d)
        report[str(d)] = {"eigenvalues": eig.tolist(), "gaps": spectral_gaps(eig).tolist()}
    print(json.dumps({"experiment": cfg.experiment, "dimensions": report}, indent=2))
    return EXIT_OK


# ---------------------------------------------------------------------------
# compare


def _load_results(run_dir) -> dict:
    path = Path(run_dir) / "results.json"
    if not path.exists():
        raise InputError(f"no results file at {path}")
    try:
        return json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise InputError(f"{path}: unreadable results ({exc})") from None


def _verdict(a, b) -> str:
    if a is None or b is None:
        return "n/a"
    if a == b:
        return "tie"
    return "a" if a < b else "b"


def _pair(a, b) -> dict:
    delta = None if a is None or b is None else b - a
    return {"a": a, "b": b, "delta": delta, "lower": _verdict(a, b)}


def _common_seeds(ra, rb):
    return [s for s in ra["seeds"] if s in rb["seeds"]]


def compare_results(ra: dict, rb: dict) -> dict:
    """Deltas are ``b - a``; ``lower`` names the run with the smaller (better) value."""
    exp = ra.get("experiment")
    if exp != rb.get("experiment"):
        raise InputError(f"incompatible experiments: {exp!r} vs {rb.get('experiment')!r}")
    out = {"experiment": exp}
    if exp == "fit_cosine":
        seeds = _common_seeds(ra, rb)
        out["final_mse"] = {s: _pair(ra["seeds"][s]["final_mse"], rb["seeds"][s]["final_mse"]) for s in seeds}
        out["median_final_mse"] = _pair(ra["median_final_mse"], rb["median_final_mse"])
    elif exp == "richness_sweep":
        fms = [f for f in ra["feature_maps"] if f in rb["feature_maps"]]
        out["median_mean_mse"] = {
            f: _pair(ra["feature_maps"][f]["median_over_seeds"], rb["feature_maps"][f]["median_over_seeds"])
            for f in fms
        }
    elif exp == "spectrum":
        ga, gb = ra["gaps"], rb["gaps"]
        out["gaps_identical"] = ga == gb
        if len(ga) == len(gb):
            out["gap_deltas"] = [b - a for a, b in zip(ga, gb)]
    elif exp == "solve_nse":
        seeds = _common_seeds(ra, rb)
        out["final_total_loss"] = {
            s: _pair(ra["seeds"][s]["final_total_loss"], rb["seeds"][s]["final_total_loss"]) for s in seeds
        }
        out["median_final_total_loss"] = _pair(ra["median_final_total_loss"], rb["median_final_total_loss"])
        maerm = {}
        for s in seeds:
            pa = ra["seeds"][s]["maerm"]["per_time"]
            pb = rb["seeds"][s]["maerm"]["per_time"]
            maerm[s] = {obs: [_pair(x, y) for x, y in zip(pa[obs], pb[obs])] for obs in pa if obs in pb}
        out["maerm_per_time"] = maerm
    else:
        raise InputError(f"cannot compare experiment {exp!r}")
    return out


def cmd_compare(args) -> int:
    doc = compare_results(_load_results(args.dir_a), _load_results(args.dir_b))
    text = json.dumps(_jsonable(doc), indent=2)
    if args.output:
        Path(args.output).write_text(text + "\n")
    print(text)
    return EXIT_OK


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tfqnn", description=__doc__.split("\n\n")[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run an experiment config")
    p_run.add_argument("config")
    p_run.add_argument("--output-root", help=f"overrides ${ENV_OUTPUT_ROOT}")
    p_run.add_argument("--name", help="run directory name (default: config name or file stem)")
    p_run.set_defaults(func=cmd_run)

    p_cmp = sub.add_parser("compare", help="compare two run directories")
    p_cmp.add_argument("dir_a")
    p_cmp.add_argument("dir_b")
    p_cmp.add_argument("--output", help="also write the comparison to this file")
    p_cmp.set_defaults(func=cmd_compare)

    p_spec = sub.add_parser("spectrum", help="generator spectrum of a config's model")
    p_spec.add_argument("config")
    p_spec.add_argument("--output-root", help=f"overrides ${ENV_OUTPUT_ROOT}")
    p_spec.add_argument("--name")
    p_spec.set_defaults(func=cmd_spectrum)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (ConfigError, InputError, CapacityError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NumericalError, FloatingPointError) as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
