"""Physics-informed Navier-Stokes training with quantum stream-function models.

Velocities come from a stream function (``u = psi_y``, ``v = -psi_x``), so
continuity holds by construction and only the two momentum residuals enter
the loss. A second model predicts the pressure. All spatial/temporal
partials are exact Taylor coefficients of the circuit output (see
:mod:`tfqnn.autodiff`).
"""

from __future__ import annotations

import csv
import json
import time
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .autodiff import _run_chunked, parameter_jacobian
from .circuits import QuantumModel
from .errors import FlowFieldError, InputError, MetricError
from .jets import JetSpace
from .training import AdamState, TrainConfig, TrainReport, adam_step, draw_batch

# stream-function partial (x, y, t) and sign for every velocity quantity
STREAM_TERMS = {
    "u": (+1, (0, 1, 0)),
    "v": (-1, (1, 0, 0)),
    "u_t": (+1, (0, 1, 1)),
    "u_x": (+1, (1, 1, 0)),
    "u_y": (+1, (0, 2, 0)),
    "u_xx": (+1, (2, 1, 0)),
    "u_yy": (+1, (0, 3, 0)),
    "v_t": (-1, (1, 0, 1)),
    "v_x": (-1, (2, 0, 0)),
    "v_y": (-1, (1, 1, 0)),
    "v_xx": (-1, (3, 0, 0)),
    "v_yy": (-1, (1, 2, 0)),
}
PRESSURE_TERMS = {"p": (0, 0, 0), "p_x": (1, 0, 0), "p_y": (0, 1, 0)}
PSI_MONOMIALS = tuple(sorted({m for _, m in STREAM_TERMS.values()}))
P_MONOMIALS = tuple(PRESSURE_TERMS.values())
OBSERVABLES = ("u", "v", "p")


def velocities_from_stream(psi_dx, psi_dy):
    """``(u, v) = (psi_y, -psi_x)``."""
    return psi_dy, -np.asarray(psi_dx)


def ns_residuals(d: dict, reynolds: float):
    """Momentum residuals of the incompressible 2D Navier-Stokes equations.

    ``d`` maps ``u, v, u_t, u_x, u_y, u_xx, u_yy`` (and the ``v`` analogues)
    plus ``p_x, p_y`` to values or arrays.
    """
    if reynolds <= 0:
        raise InputError("Reynolds number must be positive")
    nu = 1.0 / reynolds
    u, v = d["u"], d["v"]
    r_x = d["u_t"] + u * d["u_x"] + v * d["u_y"] - nu * (d["u_xx"] + d["u_yy"]) + d["p_x"]
    r_y = d["v_t"] + u * d["v_x"] + v * d["v_y"] - nu * (d["v_xx"] + d["v_yy"]) + d["p_y"]
    return r_x, r_y


def ns_residual_jacobian(d: dict, reynolds: float):
    """Partials of ``(r_x, r_y)`` with respect to each entry of ``d``."""
    nu = 1.0 / reynolds
    one = np.ones_like(np.asarray(d["u"], dtype=float))
    jx = {
        "u_t": one, "u": d["u_x"], "u_x": d["u"], "v": d["u_y"], "u_y": d["v"],
        "u_xx": -nu * one, "u_yy": -nu * one, "p_x": one,
    }
    jy = {
        "v_t": one, "u": d["v_x"], "v_x": d["u"], "v": d["v_y"], "v_y": d["v"],
        "v_xx": -nu * one, "v_yy": -nu * one, "p_y": one,
    }
    return jx, jy


# ---------------------------------------------------------------------------
# analytic oracle


def taylor_green_reference(x, y, t, reynolds: float):
    """Decaying Taylor-Green vortex ``(u, v, p)``; an exact Navier-Stokes solution."""
    if reynolds <= 0:
        raise InputError("Reynolds number must be positive")
    x, y, t = (np.asarray(a, dtype=float) for a in (x, y, t))
    with np.errstate(over="ignore", under="ignore"):
        decay = np.exp(-2.0 * t / reynolds)
    u = -np.cos(x) * np.sin(y) * decay
    v = np.sin(x) * np.cos(y) * decay
    p = -0.25 * (np.cos(2 * x) + np.cos(2 * y)) * decay**2
    return u, v, p


def _dcos(z, k, freq=1.0):
    return freq**k * np.cos(freq * z + 0.5 * np.pi * k)


@dataclass(frozen=True)
class TaylorGreenStream:
    """``psi = cos x cos y exp(-2t/Re)``; its partials give the Taylor-Green velocities."""

    reynolds: float

    def derivatives(self, points, monomials) -> np.ndarray:
        x, y, t = np.asarray(points, dtype=float).T
        rate = -2.0 / self.reynolds
        cols = [
            _dcos(x, a) * _dcos(y, b) * rate**c * np.exp(rate * t)
            for a, b, c in monomials
        ]
        return np.stack(cols, axis=1)


@dataclass(frozen=True)
class TaylorGreenPressure:
    reynolds: float

    def derivatives(self, points, monomials) -> np.ndarray:
        x, y, t = np.asarray(points, dtype=float).T
        rate = -4.0 / self.reynolds
        cols = []
        for a, b, c in monomials:
            spatial = np.zeros_like(x)
            if b == 0:
                spatial = spatial + _dcos(x, a, 2.0)
            if a == 0:
                spatial = spatial + _dcos(y, b, 2.0)
            cols.append(-0.25 * spatial * rate**c * np.exp(rate * t))
        return np.stack(cols, axis=1)


# ---------------------------------------------------------------------------
# quantum fields


@dataclass(frozen=True)
class QuantumField:
    """QNN output mapped to physical units: ``scale * <C>(normalised inputs) + shift``.

    Inputs are mapped affinely from ``bounds`` to ``[0, pi]`` per dimension
    before encoding.
    """

    model: QuantumModel
    bounds: tuple[tuple[float, float], ...]
    scale: float = 1.0
    shift: float = 0.0

    @property
    def input_scale(self) -> np.ndarray:
        return np.array([np.pi / (hi - lo) for lo, hi in self.bounds])

    def normalise(self, points) -> np.ndarray:
        lo = np.array([b[0] for b in self.bounds])
        return (np.asarray(points, dtype=float) - lo) * self.input_scale

    @property
    def params(self) -> np.ndarray:
        return np.concatenate([self.model.theta_a, self.model.theta_f, [self.scale, self.shift]])

    def with_params(self, vec) -> "QuantumField":
        vec = np.asarray(vec, dtype=float)
        na = self.model.circuit.num_theta_a
        nf = self.model.circuit.num_theta_f
        model = self.model.with_params(vec[:na], vec[na:na + nf])
        return replace(self, model=model, scale=float(vec[na + nf]), shift=float(vec[na + nf + 1]))

    def _chain(self, jets: JetSpace, monomials):
        cols = [jets.index[tuple(m)] for m in monomials]
        mono = np.array([jets.monomials[c] for c in cols])
        factor = jets.factorials[cols] * np.prod(self.input_scale[None, :] ** mono, axis=1)
        is_const = mono.sum(axis=1) == 0
        return cols, factor, is_const

    def derivatives(self, points, monomials) -> np.ndarray:
        jets = JetSpace.covering(monomials, 3)
        xs = self.model.check_inputs(self.normalise(points))
        circuit = self.model.circuit
        angles, slopes = circuit.angles(self.model.theta_a, self.model.theta_f, xs)
        coeffs = _run_chunked(circuit, angles, slopes, jets)
        cols, factor, is_const = self._chain(jets, monomials)
        return self.scale * coeffs[:, cols] * factor + self.shift * is_const

    def value_and_jacobian(self, points, monomials):
        """Physical partials ``(P, M)`` and their parameter Jacobian ``(P, M, n_params)``."""
        jets = JetSpace.covering(monomials, 3)
        jac = parameter_jacobian(self.model, self.normalise(points), jets)
        cols, factor, is_const = self._chain(jets, monomials)
        raw = jac.values[:, cols] * factor  # d^m <C> in physical units
        values = self.scale * raw + self.shift * is_const
        d_theta = np.concatenate([jac.d_theta_a[:, cols], jac.d_theta_f[:, cols]], axis=2)
        d_theta = self.scale * d_theta * factor[None, :, None]
        d_scale = raw[:, :, None]
        d_shift = np.broadcast_to(is_const.astype(float)[None, :, None], raw.shape + (1,))
        return values, np.concatenate([d_theta, d_scale, d_shift], axis=2), jac.evaluations


# ---------------------------------------------------------------------------
# flow fields


@dataclass
class FlowField:
    x: np.ndarray
    y: np.ndarray
    t: np.ndarray
    u: np.ndarray
    v: np.ndarray
    p: np.ndarray
    reynolds: float

    def __post_init__(self):
        self.x, self.y, self.t = (np.asarray(a, dtype=float).reshape(-1) for a in (self.x, self.y, self.t))
        shape = self.shape
        for name in OBSERVABLES:
            arr = np.asarray(getattr(self, name), dtype=float)
            if arr.shape != shape:
                raise FlowFieldError(f"field {name!r} has shape {arr.shape}, expected {shape}")
            setattr(self, name, arr)
        if self.reynolds <= 0:
            raise FlowFieldError("Reynolds number must be positive")

    @property
    def shape(self) -> tuple[int, int, int]:
        return (self.x.size, self.y.size, self.t.size)

    @property
    def bounds(self) -> tuple[tuple[float, float], ...]:
        out = []
        for a in (self.x, self.y, self.t):
            lo, hi = float(a.min()), float(a.max())
            out.append((lo, hi if hi > lo else lo + 1.0))
        return tuple(out)

    def points(self) -> np.ndarray:
        """All grid coordinates, shape ``(nx*ny*nt, 3)``, in ``(x, y, t)`` index order."""
        gx, gy, gt = np.meshgrid(self.x, self.y, self.t, indexing="ij")
        return np.stack([gx.ravel(), gy.ravel(), gt.ravel()], axis=1)

    def observable(self, name: str) -> np.ndarray:
        return getattr(self, name)


def taylor_green_field(x, y, t, reynolds: float) -> FlowField:
    gx, gy, gt = np.meshgrid(x, y, t, indexing="ij")
    u, v, p = taylor_green_reference(gx, gy, gt, reynolds)
    return FlowField(x, y, t, u, v, p, reynolds)


def _sidecar(path: Path) -> Path:
    return path.with_suffix(".meta.json")


def save_flow_field(flow: FlowField, path) -> Path:
    """Write ``x,y,t,u,v,p`` rows (t slowest, x fastest) plus a JSON sidecar."""
    path = Path(path)
    nx, ny, nt = flow.shape
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["x", "y", "t", "u", "v", "p"])
        for k in range(nt):
            for j in range(ny):
                for i in range(nx):
                    w.writerow([repr(float(v)) for v in (
                        flow.x[i], flow.y[j], flow.t[k], flow.u[i, j, k], flow.v[i, j, k], flow.p[i, j, k]
                    )])
    meta = {"reynolds": flow.reynolds, "nx": nx, "ny": ny, "nt": nt}
    _sidecar(path).write_text(json.dumps(meta, indent=2))
    return path


def load_flow_field(path) -> FlowField:
    path = Path(path)
    if not path.exists():
        raise FlowFieldError(f"flow-field file {path} does not exist")
    meta_path = _sidecar(path)
    if not meta_path.exists():
        raise FlowFieldError(f"missing metadata sidecar {meta_path}")
    try:
        meta = json.loads(meta_path.read_text())
        nx, ny, nt = int(meta["nx"]), int(meta["ny"]), int(meta["nt"])
        reynolds = float(meta["reynolds"])
    except (KeyError, ValueError, TypeError) as exc:
        raise FlowFieldError(f"bad metadata in {meta_path}: {exc}") from exc
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise FlowFieldError(f"{path} is empty") from None
        for col in ("x", "y", "t", "u", "v", "p"):
            if col not in header:
                raise FlowFieldError(f"{path}: missing column {col!r}")
        pos = {c: header.index(c) for c in ("x", "y", "t", "u", "v", "p")}
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            try:
                rows.append([float(row[pos[c]]) for c in ("x", "y", "t", "u", "v", "p")])
            except (ValueError, IndexError) as exc:
                raise FlowFieldError(f"{path}:{lineno}: cannot parse row ({exc})") from exc
    data = np.array(rows, dtype=float).reshape(-1, 6)
    if data.shape[0] != nx * ny * nt:
        raise FlowFieldError(
            f"{path}: {data.shape[0]} rows but metadata declares {nx}x{ny}x{nt} = {nx * ny * nt}"
        )
    grid = data.reshape(nt, ny, nx, 6)
    x, y, t = grid[0, 0, :, 0], grid[0, :, 0, 1], grid[:, 0, 0, 2]
    expect = np.stack(np.meshgrid(t, y, x, indexing="ij")[::-1], axis=-1)
    if not np.array_equal(grid[..., :3], expect):
        raise FlowFieldError(f"{path}: rows are not a regular grid in (t, y, x) order")
    fields = [np.transpose(grid[..., c], (2, 1, 0)) for c in (3, 4, 5)]
    return FlowField(x, y, t, *fields, reynolds)


# ---------------------------------------------------------------------------
# problem and loss


@dataclass(frozen=True)
class DataBatch:
    points: np.ndarray
    u: np.ndarray
    v: np.ndarray
    p: np.ndarray

    def __len__(self) -> int:
        return int(self.points.shape[0])


def data_subset(flow: FlowField, stride=(10, 10), offset=(0, 0)) -> DataBatch:
    """Regular spatial subgrid (every ``stride``-th x and y index) at every time step."""
    ix = np.arange(offset[0], flow.shape[0], stride[0])
    iy = np.arange(offset[1], flow.shape[1], stride[1])
    gi, gj, gk = np.meshgrid(ix, iy, np.arange(flow.shape[2]), indexing="ij")
    gi, gj, gk = gi.ravel(), gj.ravel(), gk.ravel()
    pts = np.stack([flow.x[gi], flow.y[gj], flow.t[gk]], axis=1)
    return DataBatch(pts, flow.u[gi, gj, gk], flow.v[gi, gj, gk], flow.p[gi, gj, gk])


@dataclass(frozen=True)
class NseProblem:
    psi: object
    pressure: object
    reynolds: float
    data: DataBatch
    collocation: np.ndarray


def _psi_terms(psi_derivs: np.ndarray) -> dict:
    col = {m: i for i, m in enumerate(PSI_MONOMIALS)}
    return {k: s * psi_derivs[:, col[m]] for k, (s, m) in STREAM_TERMS.items()}


def _p_terms(p_derivs: np.ndarray) -> dict:
    return {k: p_derivs[:, i] for i, k in enumerate(PRESSURE_TERMS)}


def dqc_loss(problem: NseProblem, collocation_batch, data_batch: DataBatch | None = None):
    """``(total, l_pde, l_data)`` with ``l_pde = mse(r_x, 0) + mse(r_y, 0)``.

    ``l_data`` sums the MSEs of ``u``, ``v`` and ``p`` on the data points.
    """
    data_batch = problem.data if data_batch is None else data_batch
    col = np.asarray(collocation_batch, dtype=float).reshape(-1, 3)
    if col.shape[0] == 0 and len(data_batch) == 0:
        raise InputError("both collocation and data batches are empty")
    pts = np.concatenate([col, data_batch.points], axis=0)
    psi_vals = problem.psi.derivatives(pts, PSI_MONOMIALS)
    p_vals = problem.pressure.derivatives(pts, P_MONOMIALS)
    return _assemble_loss(problem, psi_vals, p_vals, col.shape[0], data_batch)[:3]


def _assemble_loss(problem, psi_vals, p_vals, n_col, data: DataBatch):
    d = {**_psi_terms(psi_vals), **_p_terms(p_vals)}
    c = {k: v[:n_col] for k, v in d.items()}
    r_x, r_y = ns_residuals(c, problem.reynolds)
    l_pde = float(np.mean(r_x**2) + np.mean(r_y**2)) if n_col else 0.0
    errs = {}
    l_data = 0.0
    if len(data):
        for name in OBSERVABLES:
            errs[name] = d[name][n_col:] - getattr(data, name)
            l_data += float(np.mean(errs[name] ** 2))
    return l_pde + l_data, l_pde, l_data, c, (r_x, r_y), errs


def dqc_loss_gradient(problem: NseProblem, collocation_batch, data_batch: DataBatch | None = None):
    """Loss parts and gradients for the stream-function and pressure parameters.

    Returns ``((total, l_pde, l_data), grad_psi, grad_p, evaluations)``.
    """
    data_batch = problem.data if data_batch is None else data_batch
    col = np.asarray(collocation_batch, dtype=float).reshape(-1, 3)
    n_col = col.shape[0]
    if n_col == 0 and len(data_batch) == 0:
        raise InputError("both collocation and data batches are empty")
    pts = np.concatenate([col, data_batch.points], axis=0)
    psi_vals, psi_jac, ev1 = problem.psi.value_and_jacobian(pts, PSI_MONOMIALS)
    p_vals, p_jac, ev2 = problem.pressure.value_and_jacobian(pts, P_MONOMIALS)
    total, l_pde, l_data, c, (r_x, r_y), errs = _assemble_loss(problem, psi_vals, p_vals, n_col, data_batch)

    # dL/d(term) per point
    n_pts = pts.shape[0]
    dl = {k: np.zeros(n_pts) for k in list(STREAM_TERMS) + list(PRESSURE_TERMS)}
    if n_col:
        jx, jy = ns_residual_jacobian(c, problem.reynolds)
        gx = 2.0 * r_x / n_col
        gy = 2.0 * r_y / n_col
        for k, val in jx.items():
            dl[k][:n_col] += gx * val
        for k, val in jy.items():
            dl[k][:n_col] += gy * val
    m_data = len(data_batch)
    for name, err in errs.items():
        dl[name][n_col:] += 2.0 * err / m_data

    col_idx = {m: i for i, m in enumerate(PSI_MONOMIALS)}
    dl_psi = np.zeros((n_pts, len(PSI_MONOMIALS)))
    for k, (sign, m) in STREAM_TERMS.items():
        dl_psi[:, col_idx[m]] += sign * dl[k]
    dl_p = np.stack([dl[k] for k in PRESSURE_TERMS], axis=1)
    grad_psi = np.einsum("pm,pmj->j", dl_psi, psi_jac)
    grad_p = np.einsum("pm,pmj->j", dl_p, p_jac)
    return (total, l_pde, l_data), grad_psi, grad_p, ev1 + ev2


# ---------------------------------------------------------------------------
# metrics


def maerm(pred, ref) -> float:
    """Mean absolute error relative to the reference median, as a percentage."""
    pred = np.asarray(pred, dtype=float).ravel()
    ref = np.asarray(ref, dtype=float).ravel()
    if pred.shape != ref.shape or ref.size == 0:
        raise InputError("maerm needs equal-length, non-empty arrays")
    med = float(np.median(ref))
    scale = float(np.max(np.abs(ref))) if ref.size else 0.0
    if med == 0.0 or abs(med) <= 1e-12 * scale:
        raise MetricError(
            f"reference median {med:.3g} is zero relative to the data scale {scale:.3g}; "
            "MAERM is undefined"
        )
    return 100.0 * float(np.mean(np.abs((pred - ref) / med)))


@dataclass
class MaermReport:
    """MAERM percentages per observable and time step."""

    times: np.ndarray
    values: dict  # observable -> array over time steps (nan where undefined)

    def summary(self) -> dict:
        out = {}
        for name, vals in self.values.items():
            vals = np.asarray(vals, dtype=float)
            ok = vals[np.isfinite(vals)]
            out[name] = {
                "min": float(ok.min()) if ok.size else None,
                "max": float(ok.max()) if ok.size else None,
                "mean": float(ok.mean()) if ok.size else None,
            }
        return out

    def to_dict(self) -> dict:
        return {
            "times": self.times.tolist(),
            "per_time": {k: [None if not np.isfinite(v) else float(v) for v in vals] for k, vals in self.values.items()},
            "summary": self.summary(),
        }


def maerm_report(pred: dict, flow: FlowField) -> MaermReport:
    values = {}
    for name in OBSERVABLES:
        ref = flow.observable(name)
        row = []
        for k in range(flow.shape[2]):
            try:
                row.append(maerm(pred[name][:, :, k], ref[:, :, k]))
            except MetricError:
                row.append(np.nan)
        values[name] = np.array(row)
    return MaermReport(flow.t.copy(), values)


def predict_fields(problem: NseProblem, flow: FlowField) -> dict:
    pts = flow.points()
    psi = problem.psi.derivatives(pts, [(1, 0, 0), (0, 1, 0)])
    u, v = velocities_from_stream(psi[:, 0], psi[:, 1])
    p = problem.pressure.derivatives(pts, [(0, 0, 0)])[:, 0]
    return {name: arr.reshape(flow.shape) for name, arr in zip(OBSERVABLES, (u, v, p))}


def median_baseline(flow: FlowField) -> dict:
    """Predictor returning each observable's per-time-step reference median."""
    out = {}
    for name in OBSERVABLES:
        ref = flow.observable(name)
        med = np.median(ref.reshape(-1, ref.shape[2]), axis=0)
        out[name] = np.broadcast_to(med, ref.shape).copy()
    return out


# ---------------------------------------------------------------------------
# training


def make_problem(flow: FlowField, psi_model: QuantumModel, p_model: QuantumModel, *, stride=(10, 10)) -> NseProblem:
    bounds = flow.bounds
    return NseProblem(
        psi=QuantumField(psi_model, bounds),
        pressure=QuantumField(p_model, bounds),
        reynolds=flow.reynolds,
        data=data_subset(flow, stride),
        collocation=flow.points(),
    )


def train_nse(problem: NseProblem, config: TrainConfig, flow: FlowField | None = None, *, callback=None):
    """Joint Adam on both fields; returns ``(problem, TrainReport, MaermReport | None)``.

    Each iteration samples ``batch_size`` collocation points uniformly from
    the problem's pool and always includes the full data subset.
    """
    rng = np.random.default_rng(config.seed)
    n_psi = problem.psi.params.size
    params = np.concatenate([problem.psi.params, problem.pressure.params])
    opt = AdamState.zeros(params.size)
    trace = np.empty((config.iterations, 3))
    evals = 0
    start = time.perf_counter()
    for it in range(config.iterations):
        idx = draw_batch(rng, problem.collocation.shape[0], config.batch_size)
        (total, l_pde, l_data), g_psi, g_p, ev = dqc_loss_gradient(problem, problem.collocation[idx])
        evals += ev
        trace[it] = (total, l_pde, l_data)
        opt, params = adam_step(opt, params, np.concatenate([g_psi, g_p]), config.learning_rate)
        problem = replace(
            problem,
            psi=problem.psi.with_params(params[:n_psi]),
            pressure=problem.pressure.with_params(params[n_psi:]),
        )
        if callback is not None:
            callback(it, total, params)
    final_total, final_pde, final_data = dqc_loss(problem, problem.collocation)
    maerm_rep = None
    final_mse = float("nan")
    if flow is not None:
        pred = predict_fields(problem, flow)
        maerm_rep = maerm_report(pred, flow)
        final_mse = float(sum(np.mean((pred[k] - flow.observable(k)) ** 2) for k in OBSERVABLES))
    report = TrainReport(
        loss_trace=trace[:, 0].copy(),
        theta_a=np.concatenate([problem.psi.model.theta_a, problem.pressure.model.theta_a]),
        theta_f=np.concatenate([problem.psi.model.theta_f, problem.pressure.model.theta_f]),
        final_mse=final_mse,
        circuit_evaluations=evals,
        gradient_evaluations=evals,
        wall_clock=time.perf_counter() - start,
        extra={
            "pde_trace": trace[:, 1].tolist(),
            "data_trace": trace[:, 2].tolist(),
            "final_total_loss": final_total,
            "final_pde_loss": final_pde,
            "final_data_loss": final_data,
            "heads": {
                "psi": [problem.psi.scale, problem.psi.shift],
                "p": [problem.pressure.scale, problem.pressure.shift],
            },
        },
    )
    return problem, report, maerm_rep
