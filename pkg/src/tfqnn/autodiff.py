"""Derivatives of quantum model outputs.

Parameter derivatives use the parameter-shift rule on every rotation
occurrence: each parameterised gate is a single Pauli rotation, so
``d f / d angle = (f(angle + pi/2) - f(angle - pi/2)) / 2`` exactly. Ansatz
parameters enter angles directly; a generator parameter ``theta`` enters as
``gamma * theta * phi(x)`` and picks up that chain factor. Shifted evaluations
may carry Taylor jets in the inputs, which yields the mixed derivatives
``d/dx (d f / d theta)`` that physics-informed losses need.

Input derivatives have two backends:

* ``analytic_forward``: exact Taylor-coefficient propagation through the
  simulator (cost linear in the number of tracked coefficients);
* ``shift_rule``: nested parameter shifts over encoding gates, the route a
  hardware backend would take (cost ``(2 * #gates) ** order``).
"""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass

import numpy as np

from .circuits import QuantumModel
from .errors import ConfigError, InputError, NumericalError
from .jets import JetSpace, unit

BACKENDS = ("shift_rule", "analytic_forward")
MAX_ORDER = 3
HALF_PI = 0.5 * np.pi
# complex amplitudes held per simulator call; bounds peak memory (~32 MB)
CHUNK_AMPS = 1 << 21


def _run_chunked(circuit, angles, slopes, jets):
    rows = angles.shape[0]
    k = 1 if jets is None else jets.size
    per_row = k * (1 << circuit.num_qubits)
    step = max(1, CHUNK_AMPS // per_row)
    if rows <= step:
        return circuit.run(angles, slopes, jets)
    parts = [circuit.run(angles[i:i + step], slopes[i:i + step], jets) for i in range(0, rows, step)]
    return np.concatenate(parts, axis=0)


def _shift_pass(circuit, angles, slopes, occ_idx, jets, count_base):
    """Base jets ``(P, K)`` and shift-rule derivatives ``(P, S, K)``, chunked over points."""
    p, s = angles.shape[0], occ_idx.size
    k = 1 if jets is None else jets.size
    per_point = (1 + 2 * s) * k * (1 << circuit.num_qubits)
    step = max(1, CHUNK_AMPS // per_point)
    base = np.empty((p, k))
    deriv = np.empty((p, s, k))
    for i in range(0, p, step):
        sl = slice(i, i + step)
        b, plus, minus = circuit.run_shifted(
            angles[sl], None if slopes is None else slopes[sl], occ_idx, jets, HALF_PI, count_base=count_base
        )
        base[sl] = b
        deriv[sl] = 0.5 * (plus - minus)
    return base, deriv


def shifted_derivatives(model: QuantumModel, xs, occurrences, jets: JetSpace | None = None):
    """Per-occurrence shift-rule derivatives ``d f / d angle_o``.

    Returns an array ``(P, S, K)``: points, selected occurrences, jet
    coefficients (``K = 1`` without jets). Costs ``2 * S`` circuit runs per point.
    """
    circuit = model.circuit
    xs = model.check_inputs(xs)
    occ_idx = np.asarray(occurrences, dtype=int)
    angles, slopes = circuit.angles(model.theta_a, model.theta_f, xs)
    if occ_idx.size == 0:
        return np.zeros((angles.shape[0], 0, 1 if jets is None else jets.size))
    return _shift_pass(circuit, angles, slopes, occ_idx, jets, count_base=False)[1]


@dataclass
class ParameterJacobian:
    """Output jets and their parameter derivatives at a batch of points.

    ``values``: ``(P, K)``; ``d_theta_a``: ``(P, K, |theta_a|)``;
    ``d_theta_f``: ``(P, K, |theta_f|)``. Coefficient ``m`` of a jet is
    ``d^m f / m!`` with respect to the inputs.
    """

    values: np.ndarray | None
    d_theta_a: np.ndarray
    d_theta_f: np.ndarray
    evaluations: int


def parameter_jacobian(
    model: QuantumModel,
    xs,
    jets: JetSpace | None = None,
    *,
    include_value: bool = True,
    occurrence_mask=None,
) -> ParameterJacobian:
    """Shift-rule gradient pass over every trainable parameter.

    ``occurrence_mask`` (boolean per occurrence) restricts which gate
    occurrences contribute; used to isolate re-uploaded copies.
    """
    circuit = model.circuit
    xs = model.check_inputs(xs)
    occ = circuit.occurrences
    trainable = ~occ.is_encoding | (occ.param >= 0)
    if occurrence_mask is not None:
        trainable &= np.asarray(occurrence_mask, dtype=bool)
    sel = np.flatnonzero(trainable)
    angles, slopes = circuit.angles(model.theta_a, model.theta_f, xs)
    if sel.size:
        base, d_occ = _shift_pass(circuit, angles, slopes, sel, jets, count_base=include_value)
    else:
        base = _run_chunked(circuit, angles, slopes, jets) if include_value else None
        d_occ = np.zeros((xs.shape[0], 0, 1 if jets is None else jets.size))
    evaluations = 2 * sel.size * xs.shape[0]

    p = xs.shape[0]
    k = d_occ.shape[2]
    d_a = np.zeros((p, k, circuit.num_theta_a))
    d_f = np.zeros((p, k, circuit.num_theta_f))
    # fixed accumulation order (program order) keeps results bit-reproducible
    for col, o in enumerate(sel):
        j = int(occ.param[o])
        if not occ.is_encoding[o]:
            d_a[:, :, j] += d_occ[:, col]
            continue
        factor = occ.gamma[o] * occ.scale[o]
        d = int(occ.dim[o])
        if jets is None:
            d_f[:, :, j] += factor * xs[:, d, None] * d_occ[:, col]
        else:
            d_f[:, :, j] += factor * jets.mul_linear(d_occ[:, col], xs[:, d], d)

    values = base if include_value else None
    return ParameterJacobian(values, d_a, d_f, evaluations)


def grad_ansatz(model: QuantumModel, x, param_index: int) -> float:
    """``d f / d theta_a[i]`` summed over every gate the parameter drives."""
    if not 0 <= param_index < model.circuit.num_theta_a:
        raise IndexError(f"ansatz parameter {param_index} out of range")
    occ = model.circuit.occurrences
    sel = np.flatnonzero(~occ.is_encoding & (occ.param == param_index))
    d = shifted_derivatives(model, np.atleast_1d(np.asarray(x, float))[None, :], sel)
    return float(d[0, :, 0].sum())


def grad_generator(model: QuantumModel, x, theta_f_index: int, occurrences=None) -> float:
    """``d f / d theta_f[j]`` via the shift rule with chain factor ``gamma * phi(x)``.

    ``occurrences`` optionally restricts the sum to given occurrence indices
    (e.g. only the first upload of a shared parameter).
    """
    if not 0 <= theta_f_index < model.circuit.num_theta_f:
        raise IndexError(f"generator parameter {theta_f_index} out of range")
    occ = model.circuit.occurrences
    x = np.atleast_1d(np.asarray(x, dtype=float))
    sel = np.flatnonzero(occ.is_encoding & (occ.param == theta_f_index))
    if occurrences is not None:
        sel = np.intersect1d(sel, np.asarray(occurrences, dtype=int))
    d = shifted_derivatives(model, x[None, :], sel)[0, :, 0]
    chain = occ.gamma[sel] * occ.scale[sel] * x[occ.dim[sel]]
    return float(np.sum(chain * d))


# ---------------------------------------------------------------------------
# input derivatives


def _as_multi_index(model, dim, order):
    if not 1 <= order <= MAX_ORDER:
        raise ConfigError(f"derivative order must be in 1..{MAX_ORDER}, got {order}")
    if not 0 <= dim < model.num_features:
        raise InputError(f"input dimension {dim} out of range")
    return unit(model.num_features, dim, order)


def input_derivative(model: QuantumModel, x, dim: int, order: int, backend: str = "analytic_forward") -> float:
    m = _as_multi_index(model, dim, order)
    x = np.atleast_1d(np.asarray(x, dtype=float))
    return float(input_derivatives(model, x[None, :], [m], backend)[0, 0])


def input_derivatives(model: QuantumModel, xs, multi_indices, backend: str = "analytic_forward") -> np.ndarray:
    """Partial derivatives ``d^m f`` for each multi-index; shape ``(P, len(multi_indices))``."""
    if backend not in BACKENDS:
        raise ConfigError(f"unknown derivative backend {backend!r}")
    xs = model.check_inputs(xs)
    monos = [tuple(int(v) for v in m) for m in multi_indices]
    for m in monos:
        if len(m) != model.num_features or min(m) < 0:
            raise InputError(f"bad multi-index {m}")
        if sum(m) > MAX_ORDER:
            raise ConfigError(f"derivative order above {MAX_ORDER} requested: {m}")
    if backend == "analytic_forward":
        jets = JetSpace.covering(monos, model.num_features)
        angles, slopes = model.circuit.angles(model.theta_a, model.theta_f, xs)
        coeffs = _run_chunked(model.circuit, angles, slopes, jets)
        cols = [jets.index[m] for m in monos]
        return coeffs[:, cols] * jets.factorials[cols]
    return np.stack([_shift_rule_partial(model, xs, m) for m in monos], axis=1)


def _shift_rule_partial(model, xs, multi_index, dim_order=None) -> np.ndarray:
    """Nested shift rule over encoding occurrences; ``dim_order`` fixes the nesting."""
    circuit = model.circuit
    occ = circuit.occurrences
    if dim_order is None:
        dim_order = [d for d, v in enumerate(multi_index) for _ in range(v)]
    angles, slopes = circuit.angles(model.theta_a, model.theta_f, xs)
    # terms: integer shift pattern (multiples of pi/2 per occurrence) -> list of slope products
    terms: dict[tuple, list] = {(): [np.ones(xs.shape[0])]}
    for d in dim_order:
        gates = np.flatnonzero(occ.is_encoding & (occ.dim == d))
        nxt: dict[tuple, list] = defaultdict(list)
        for key, coefs in terms.items():
            coef = sum(coefs)
            base = dict(key)
            for o in gates:
                for sign in (1, -1):
                    shifted = dict(base)
                    shifted[int(o)] = shifted.get(int(o), 0) + sign
                    new_key = tuple(sorted((g, c) for g, c in shifted.items() if c))
                    nxt[new_key].append(0.5 * sign * slopes[:, o] * coef)
        terms = nxt
    if not terms:
        return np.zeros(xs.shape[0])
    keys = list(terms)
    shift = np.zeros((len(keys), angles.shape[1]))
    for i, key in enumerate(keys):
        for g, c in key:
            shift[i, g] = c * HALF_PI
    p = xs.shape[0]
    big = (angles[:, None, :] + shift[None]).reshape(p * len(keys), -1)
    vals = _run_chunked(circuit, big, np.repeat(slopes, len(keys), axis=0), None).reshape(p, len(keys))
    coefs = np.stack([sum(terms[key]) for key in keys], axis=1)
    return np.sum(coefs * vals, axis=1)


# ---------------------------------------------------------------------------
# generalized shift rule


@dataclass(frozen=True)
class GapSet:
    gaps: tuple[float, ...]

    def __post_init__(self):
        gaps = tuple(sorted(float(g) for g in self.gaps))
        if not gaps or gaps[0] <= 0:
            raise NumericalError("gap set must be a nonempty set of positive frequencies")
        object.__setattr__(self, "gaps", gaps)

    @classmethod
    def from_eigenvalues(cls, eigenvalues) -> "GapSet":
        from .spectrum import spectral_gaps

        return cls(tuple(spectral_gaps(eigenvalues)))


def gpsr_shifts(num_gaps: int) -> np.ndarray:
    """Equidistant shifts ``(2 mu - 1) pi / (2 R)``; ``pi/2`` for a single gap."""
    mu = np.arange(1, num_gaps + 1)
    return (2 * mu - 1) * np.pi / (2 * num_gaps)


def gpsr_gradient(f_evaluator, gap_set: GapSet, angle: float, shifts=None, cond_limit: float = 1e12) -> float:
    """Derivative of ``f(angle) = c0 + sum_k a_k cos(D_k angle) + b_k sin(D_k angle)``.

    ``f(angle + s) - f(angle - s) = sum_k 2 sin(D_k s) R_k`` with
    ``f'(angle) = sum_k D_k R_k``; the ``R`` system is solved from ``len(gaps)``
    symmetric shift pairs. A singular system raises instead of regularising.
    """
    gaps = np.asarray(gap_set.gaps)
    shifts = gpsr_shifts(gaps.size) if shifts is None else np.asarray(shifts, dtype=float)
    if shifts.size != gaps.size:
        raise NumericalError("need one shift per gap")
    system = 2.0 * np.sin(np.outer(shifts, gaps))
    cond = np.linalg.cond(system)
    if not np.isfinite(cond) or cond > cond_limit:
        raise NumericalError(
            f"singular shift system (condition number {cond:.3g}) for gaps {gaps.tolist()} "
            f"and shifts {shifts.tolist()}"
        )
    diffs = np.array([f_evaluator(angle + s) - f_evaluator(angle - s) for s in shifts])
    coeffs = np.linalg.solve(system, diffs)
    return float(gaps @ coeffs)


# ---------------------------------------------------------------------------
# loss gradients


def supervised_loss_gradient(model: QuantumModel, xs, ys):
    """MSE over the batch and its gradient over ``(theta_a, theta_f)`` concatenated."""
    xs = model.check_inputs(xs)
    ys = np.asarray(ys, dtype=float).reshape(-1)
    if ys.shape[0] != xs.shape[0]:
        raise InputError(f"{xs.shape[0]} inputs but {ys.shape[0]} targets")
    jac = parameter_jacobian(model, xs)
    f = jac.values[:, 0]
    dl_df = 2.0 * (f - ys) / ys.size
    grad = np.concatenate([dl_df @ jac.d_theta_a[:, 0], dl_df @ jac.d_theta_f[:, 0]])
    return float(np.mean((f - ys) ** 2)), grad


def loss_gradient(loss_spec: str, *args, **kwargs):
    """Dispatch on the loss kind: ``supervised_mse`` or ``dqc_pde``."""
    if loss_spec == "supervised_mse":
        return supervised_loss_gradient(*args, **kwargs)
    if loss_spec == "dqc_pde":
        from .pde import dqc_loss_gradient

        return dqc_loss_gradient(*args, **kwargs)
    raise ConfigError(f"unknown loss {loss_spec!r}")
