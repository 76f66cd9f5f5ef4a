"""Experiment drivers behind the CLI.

Each driver takes a validated config and returns a :class:`RunOutput`: a
JSON-ready results dict plus named CSV tables. Nothing here touches the
file system except reading a flow-field source.
"""

from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .circuits import build_model, forward_batch, make_feature_map
from .config import (
    FitCosineConfig,
    ModelConfig,
    RichnessSweepConfig,
    SolveNseConfig,
    SpectrumExperimentConfig,
)
from .errors import ConfigError
from .pde import (
    OBSERVABLES,
    load_flow_field,
    maerm_report,
    make_problem,
    median_baseline,
    predict_fields,
    taylor_green_field,
    train_nse,
)
from .spectrum import dft_spectrum, model_frequencies, spectral_gaps, spectrum_report
from .training import (
    TrainConfig,
    cosine_series,
    nyquist_count,
    richness_frequencies,
    sample_cosine_series,
    train_supervised,
)

log = logging.getLogger(__name__)


@dataclass
class Table:
    header: list[str]
    rows: list[list]


@dataclass
class RunOutput:
    results: dict
    tables: dict[str, Table] = field(default_factory=dict)


def model_from_config(cfg: ModelConfig, seed, num_features: int = 1, **override):
    """Build the configured model; keyword overrides replace config fields."""
    kwargs = cfg.build_kwargs()
    kwargs.update(override)
    return build_model(cfg.num_qubits, cfg.num_layers, seed=seed, num_features=num_features, **kwargs)


def _train_cfg(section, seed) -> TrainConfig:
    return TrainConfig(section.iterations, section.batch_size, section.learning_rate, seed)


# ---------------------------------------------------------------------------
# fit_cosine


def fit_cosine(cfg: FitCosineConfig) -> RunOutput:
    ds = cfg.dataset
    data = sample_cosine_series(ds.frequencies, ds.domain, ds.num_points)
    an = cfg.analysis
    grid_domain = an.domain or ds.domain
    n_grid = an.num_points or max(data.size, nyquist_count(ds.frequencies, grid_domain))
    grid = np.linspace(grid_domain[0], grid_domain[1], n_grid)
    target_dft = dft_spectrum(grid, cosine_series(grid, ds.frequencies), pad_factor=an.pad_factor)

    per_seed = {}
    preds, dfts, traces = {}, {}, {}
    for seed in cfg.train.seeds:
        log.info("fit_cosine seed %d", seed)
        model = model_from_config(cfg.model, seed)
        trained, report = train_supervised(model, data, _train_cfg(cfg.train, seed))
        preds[seed] = forward_batch(trained, data.xs)
        spec = dft_spectrum(grid, forward_batch(trained, grid), pad_factor=an.pad_factor)
        dfts[seed] = spec
        traces[seed] = report.loss_trace
        per_seed[str(seed)] = {
            "final_mse": report.final_mse,
            "theta_f": report.theta_f.tolist(),
            "model_frequencies": model_frequencies(trained).tolist(),
            "dft_peaks": spec.peaks(an.rel_height),
            "circuit_evaluations": report.circuit_evaluations,
            "gradient_evaluations": report.gradient_evaluations,
            "wall_clock": report.wall_clock,
            "final_params": {"theta_a": report.theta_a.tolist(), "theta_f": report.theta_f.tolist()},
        }
    seeds = list(cfg.train.seeds)
    mses = [per_seed[str(s)]["final_mse"] for s in seeds]
    results = {
        "experiment": "fit_cosine",
        "trainable_frequencies": cfg.model.is_trainable,
        "dataset": {"frequencies": list(ds.frequencies), "domain": list(ds.domain), "num_points": data.size},
        "analysis_grid": {"domain": list(grid_domain), "num_points": n_grid, "resolution": target_dft.resolution},
        "target_dft_peaks": target_dft.peaks(an.rel_height),
        "seeds": per_seed,
        "median_final_mse": float(np.median(mses)),
    }
    tables = {
        "prediction": Table(
            ["x", "target"] + [f"pred_seed{s}" for s in seeds],
            [[x, y] + [preds[s][i] for s in seeds] for i, (x, y) in enumerate(zip(data.xs, data.ys))],
        ),
        "spectrum": Table(
            ["omega", "target"] + [f"magnitude_seed{s}" for s in seeds],
            [
                [w, target_dft.magnitudes[i]] + [dfts[s].magnitudes[i] for s in seeds]
                for i, w in enumerate(target_dft.frequencies)
            ],
        ),
        "trace": Table(
            ["iteration"] + [f"loss_seed{s}" for s in seeds],
            [[it] + [traces[s][it] for s in seeds] for it in range(cfg.train.iterations)],
        ),
    }
    return RunOutput(results, tables)


# ---------------------------------------------------------------------------
# richness_sweep


def _sweep_job(args):
    model_cfg, train_section, fm, count, freqs, domain, seed = args
    model = model_from_config(model_cfg, seed, feature_map=fm, trainable=False)
    data = sample_cosine_series(freqs, domain)
    _, report = train_supervised(model, data, _train_cfg(train_section, seed))
    return fm, count, seed, report.final_mse, report.loss_trace, report.theta_f.tolist()


def richness_sweep(cfg: RichnessSweepConfig) -> RunOutput:
    sw = cfg.sweep
    jobs = []
    for count in sw.counts:
        freqs = richness_frequencies(count, sw.lo, sw.hi, sw.single)
        for fm in sw.feature_maps:
            for seed in cfg.train.seeds:
                jobs.append((cfg.model, cfg.train, fm, count, freqs, sw.domain, seed))
    if sw.workers > 1:
        with ProcessPoolExecutor(max_workers=sw.workers) as pool:
            outs = list(pool.map(_sweep_job, jobs))
    else:
        outs = [_sweep_job(j) for j in jobs]

    mse = {(fm, c, s): m for fm, c, s, m, _, _ in outs}
    summary = {}
    for fm in sw.feature_maps:
        per_seed = {
            str(s): float(np.mean([mse[(fm, c, s)] for c in sw.counts])) for s in cfg.train.seeds
        }
        summary[fm] = {
            "mean_mse_per_seed": per_seed,
            "median_over_seeds": float(np.median(list(per_seed.values()))),
            "median_mse_per_count": {
                str(c): float(np.median([mse[(fm, c, s)] for s in cfg.train.seeds])) for c in sw.counts
            },
        }
    results = {
        "experiment": "richness_sweep",
        "datasets": {str(c): list(richness_frequencies(c, sw.lo, sw.hi, sw.single)) for c in sw.counts},
        "feature_maps": summary,
        "learned_theta_f": {f"{fm}/{c}/{s}": th for fm, c, s, _, _, th in outs if th},
    }
    tables = {
        "mse_distribution": Table(
            ["feature_map", "num_frequencies", "seed", "final_mse"],
            [[fm, c, s, m] for fm, c, s, m, _, _ in outs],
        ),
        "trace": Table(
            ["feature_map", "num_frequencies", "seed", "iteration", "loss"],
            [[fm, c, s, it, v] for fm, c, s, _, tr, _ in outs for it, v in enumerate(tr)],
        ),
    }
    return RunOutput(results, tables)


# ---------------------------------------------------------------------------
# spectrum


def spectrum(cfg: SpectrumExperimentConfig) -> RunOutput:
    sc = cfg.spectrum
    block = make_feature_map(sc.feature_map, sc.num_qubits)
    theta = None
    if block.trainable:
        theta = np.ones(sc.num_qubits) if sc.theta_f is None else np.asarray(sc.theta_f, dtype=float)
        if theta.shape != (sc.num_qubits,):
            raise ConfigError(f"spectrum.theta_f needs {sc.num_qubits} entries")
    report = spectrum_report(block, theta, mode=sc.mode)
    gaps = spectral_gaps(report.eigenvalues, sc.dedup_tol)
    freqs = np.unique(report.eigenvalues) if sc.mode == "kernel_eigenvalues" else gaps
    results = {
        "experiment": "spectrum",
        "feature_map": sc.feature_map,
        "num_qubits": sc.num_qubits,
        "mode": sc.mode,
        "eigenvalues": report.eigenvalues.tolist(),
        "gaps": gaps.tolist(),
        "frequencies": freqs.tolist(),
    }
    tables = {
        "eigenvalues": Table(["eigenvalue"], [[v] for v in report.eigenvalues]),
        "gaps": Table(["gap"], [[v] for v in gaps]),
    }
    if sc.dft_layers > 0 and not block.trainable:
        model = build_model(sc.num_qubits, sc.dft_layers, seed=sc.dft_seed, feature_map=sc.feature_map)
        lo, hi = sc.dft_domain
        n = 4 * nyquist_count([max(gaps.max(initial=1.0), 1.0)], (lo, hi))
        xs = np.linspace(lo, hi, n)
        spec = dft_spectrum(xs, forward_batch(model, xs))
        peaks = spec.peaks()
        allowed = np.concatenate([[0.0], gaps])
        results["dft_peaks"] = [
            {"omega": w, "magnitude": m, "near_gap": bool(np.min(np.abs(allowed - w)) <= spec.resolution)}
            for w, m in peaks
        ]
        tables["dft"] = Table(["omega", "magnitude"], [[w, m] for w, m in spec.as_pairs()])
    return RunOutput(results, tables)


# ---------------------------------------------------------------------------
# solve_nse


def flow_from_config(fc):
    if fc.source == "file":
        return load_flow_field(fc.path)
    axes = [np.linspace(a.lo, a.hi, a.num) for a in (fc.x, fc.y, fc.t)]
    return taylor_green_field(*axes, fc.reynolds)


def solve_nse(cfg: SolveNseConfig) -> RunOutput:
    flow = flow_from_config(cfg.flow)
    baseline = maerm_report(median_baseline(flow), flow)
    per_seed = {}
    trace_rows = []
    maerm_rows = []
    pressure = {}
    for seed in cfg.train.seeds:
        log.info("solve_nse seed %d", seed)
        s_psi, s_p = np.random.SeedSequence(seed).spawn(2)
        psi_model = model_from_config(cfg.model, s_psi, num_features=3)
        p_model = model_from_config(cfg.p_model, s_p, num_features=3)
        problem = make_problem(flow, psi_model, p_model, stride=cfg.flow.data_stride)
        problem, report, maerm_rep = train_nse(problem, _train_cfg(cfg.train, seed), flow)
        pressure[seed] = predict_fields(problem, flow)["p"]
        ex = report.extra
        for it in range(cfg.train.iterations):
            trace_rows.append([seed, it, report.loss_trace[it], ex["pde_trace"][it], ex["data_trace"][it]])
        for name in OBSERVABLES:
            for k, t in enumerate(flow.t):
                maerm_rows.append([seed, name, t, maerm_rep.values[name][k], baseline.values[name][k]])
        per_seed[str(seed)] = {
            "final_total_loss": ex["final_total_loss"],
            "final_pde_loss": ex["final_pde_loss"],
            "final_data_loss": ex["final_data_loss"],
            "final_mse": report.final_mse,
            "maerm": maerm_rep.to_dict(),
            "output_heads": ex["heads"],
            "theta_f": {"psi": problem.psi.model.theta_f.tolist(), "p": problem.pressure.model.theta_f.tolist()},
            "circuit_evaluations": report.circuit_evaluations,
            "wall_clock": report.wall_clock,
        }
    totals = [v["final_total_loss"] for v in per_seed.values()]
    results = {
        "experiment": "solve_nse",
        "trainable_frequencies": cfg.model.is_trainable,
        "flow": {"reynolds": flow.reynolds, "shape": list(flow.shape), "source": cfg.flow.source},
        "seeds": per_seed,
        "median_final_total_loss": float(np.median(totals)),
        "median_baseline_maerm": baseline.to_dict(),
    }
    pts = flow.points()
    p_ref = flow.p.ravel()
    seeds = list(cfg.train.seeds)
    tables = {
        "trace": Table(["seed", "iteration", "total", "pde", "data"], trace_rows),
        "maerm": Table(["seed", "observable", "t", "maerm_percent", "median_baseline_percent"], maerm_rows),
        "pressure_field": Table(
            ["x", "y", "t", "p_reference"] + [f"p_seed{s}" for s in seeds],
            [list(pts[i]) + [p_ref[i]] + [pressure[s].ravel()[i] for s in seeds] for i in range(pts.shape[0])],
        ),
    }
    return RunOutput(results, tables)


DRIVERS = {
    "fit_cosine": fit_cosine,
    "richness_sweep": richness_sweep,
    "spectrum": spectrum,
    "solve_nse": solve_nse,
}


def run_experiment(cfg) -> RunOutput:
    return DRIVERS[cfg.experiment](cfg)
