"""Dense statevector simulation.

Amplitude arrays use little-endian qubit ordering: qubit ``q`` is bit ``q`` of
the basis index. The array-level kernels (``rotate``, ``apply_pauli``, ...)
accept any number of leading batch axes, so a whole batch of circuits (shifted
parameters, collocation points, Taylor coefficients) is advanced in one call.
The :class:`StateVector` wrapper is the single-state, value-in/value-out API.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import CapacityError

MAX_QUBITS = 14
NORM_TOL = 1e-10

AXES = ("X", "Y", "Z")


def _check_qubits(num_qubits: int) -> None:
    if not 1 <= num_qubits <= MAX_QUBITS:
        raise CapacityError(f"num_qubits must lie in [1, {MAX_QUBITS}], got {num_qubits}")


def _check_index(num_qubits: int, *qubits: int) -> None:
    for q in qubits:
        if not 0 <= q < num_qubits:
            raise IndexError(f"qubit index {q} out of range for {num_qubits} qubits")
    if len(set(qubits)) != len(qubits):
        raise IndexError(f"qubit indices must be distinct, got {qubits}")


def _split(amps: np.ndarray, num_qubits: int, qubit: int) -> np.ndarray:
    # view (..., high bits, target bit, low bits)
    return amps.reshape(amps.shape[:-1] + (1 << (num_qubits - qubit - 1), 2, 1 << qubit))


# ---------------------------------------------------------------------------
# array kernels


def apply_pauli(amps: np.ndarray, num_qubits: int, qubit: int, axis: str) -> np.ndarray:
    """Return ``sigma^axis`` applied to ``qubit`` of every state in ``amps``."""
    s = _split(amps, num_qubits, qubit)
    out = np.empty_like(s)
    if axis == "X":
        out[..., 0, :] = s[..., 1, :]
        out[..., 1, :] = s[..., 0, :]
    elif axis == "Y":
        out[..., 0, :] = -1j * s[..., 1, :]
        out[..., 1, :] = 1j * s[..., 0, :]
    elif axis == "Z":
        out[..., 0, :] = s[..., 0, :]
        out[..., 1, :] = -s[..., 1, :]
    else:
        raise ValueError(f"unknown Pauli axis {axis!r}")
    return out.reshape(amps.shape)


def rotation_terms(
    amps: np.ndarray, num_qubits: int, qubit: int, axis: str, a: np.ndarray, b: np.ndarray
) -> np.ndarray:
    """Return ``a * amps + b * sigma^axis amps`` on ``qubit``.

    ``a`` and ``b`` broadcast against the leading (non-amplitude) axes. A plain
    rotation ``exp(-i angle sigma / 2)`` is ``a = cos(angle/2)``,
    ``b = -1j * sin(angle/2)``.
    """
    a = np.asarray(a)[..., None, None]
    b = np.asarray(b)[..., None, None]
    s = _split(amps, num_qubits, qubit)
    s0 = s[..., 0, :]
    s1 = s[..., 1, :]
    out = np.empty(np.broadcast_shapes(s.shape, a.shape[:-2] + (1, 1, 1)), dtype=np.complex128)
    if axis == "X":
        out[..., 0, :] = a * s0 + b * s1
        out[..., 1, :] = a * s1 + b * s0
    elif axis == "Y":
        out[..., 0, :] = a * s0 - 1j * b * s1
        out[..., 1, :] = a * s1 + 1j * b * s0
    elif axis == "Z":
        out[..., 0, :] = (a + b) * s0
        out[..., 1, :] = (a - b) * s1
    else:
        raise ValueError(f"unknown Pauli axis {axis!r}")
    return out.reshape(out.shape[:-3] + (amps.shape[-1],))


def rotate(amps: np.ndarray, num_qubits: int, qubit: int, axis: str, angle) -> np.ndarray:
    """Apply ``exp(-i angle sigma^axis / 2)``; ``angle`` broadcasts over batch axes."""
    half = 0.5 * np.asarray(angle, dtype=float)
    return rotation_terms(amps, num_qubits, qubit, axis, np.cos(half), -1j * np.sin(half))


@lru_cache(maxsize=None)
def cx_permutation(num_qubits: int, pairs: tuple[tuple[int, int], ...]) -> np.ndarray:
    """Gather index realising the CX gates in ``pairs`` applied in order."""
    idx = np.arange(1 << num_qubits)
    perm = idx.copy()
    for control, target in pairs:
        # new[i] = old[i ^ (bit_c(i) << t)]; compose gathers in sequence
        src = idx ^ (((idx >> control) & 1) << target)
        perm = perm[src]
    perm.setflags(write=False)
    return perm


@lru_cache(maxsize=None)
def zz_phases(num_qubits: int, pairs: tuple[tuple[int, int], ...]) -> np.ndarray:
    """Diagonal of ``prod exp(i pi n_k n_l)`` over ``pairs``."""
    idx = np.arange(1 << num_qubits)
    count = np.zeros(1 << num_qubits, dtype=int)
    for k, l in pairs:
        count += ((idx >> k) & 1) & ((idx >> l) & 1)
    diag = np.where(count % 2 == 0, 1.0, -1.0).astype(np.complex128)
    diag.setflags(write=False)
    return diag


@lru_cache(maxsize=None)
def magnetization_diag(num_qubits: int) -> np.ndarray:
    """Diagonal of the total magnetization ``sum_m Z^m``."""
    idx = np.arange(1 << num_qubits)
    bits = (idx[:, None] >> np.arange(num_qubits)) & 1
    diag = (num_qubits - 2 * bits.sum(axis=1)).astype(float)
    diag.setflags(write=False)
    return diag


def ring_pairs(num_qubits: int) -> tuple[tuple[int, int], ...]:
    """Nearest-neighbour ring ``(0,1), (1,2), ..., (N-1,0)``; one pair for N=2."""
    if num_qubits < 2:
        return ()
    if num_qubits == 2:
        return ((0, 1),)
    return tuple((q, (q + 1) % num_qubits) for q in range(num_qubits))


# ---------------------------------------------------------------------------
# single-state API


@dataclass(frozen=True)
class StateVector:
    num_qubits: int
    amplitudes: np.ndarray

    def __post_init__(self):
        _check_qubits(self.num_qubits)
        amps = np.asarray(self.amplitudes, dtype=np.complex128)
        if amps.shape != (1 << self.num_qubits,):
            raise ValueError(
                f"expected {1 << self.num_qubits} amplitudes, got shape {amps.shape}"
            )
        amps = amps.copy()
        amps.setflags(write=False)
        object.__setattr__(self, "amplitudes", amps)

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))


@dataclass(frozen=True)
class GateSpec:
    """One gate. ``kind`` is ``pauli_rotation``, ``cx`` or ``analog_zz``.

    ``pauli_rotation`` acts as ``exp(-i angle sigma^axis / 2)`` on ``qubits[0]``;
    ``cx`` uses ``qubits = (control, target)``; ``analog_zz`` is
    ``exp(i pi n_k n_l)`` on ``qubits = (k, l)``.
    """

    kind: str
    qubits: tuple[int, ...]
    axis: str = "Y"
    angle: float = 0.0

    @classmethod
    def rotation(cls, axis: str, qubit: int, angle: float) -> "GateSpec":
        return cls("pauli_rotation", (qubit,), axis=axis, angle=float(angle))

    @classmethod
    def cx(cls, control: int, target: int) -> "GateSpec":
        return cls("cx", (control, target))

    @classmethod
    def analog_zz(cls, k: int, l: int) -> "GateSpec":
        return cls("analog_zz", (k, l))


@dataclass(frozen=True)
class CostOperator:
    """Equally weighted total magnetization over ``num_qubits`` qubits."""

    num_qubits: int
    kind: str = "total_magnetization"

    def diagonal(self) -> np.ndarray:
        return magnetization_diag(self.num_qubits)


def new_zero_state(num_qubits: int) -> StateVector:
    _check_qubits(num_qubits)
    amps = np.zeros(1 << num_qubits, dtype=np.complex128)
    amps[0] = 1.0
    return StateVector(num_qubits, amps)


def apply_gate(state: StateVector, gate: GateSpec) -> StateVector:
    n = state.num_qubits
    _check_index(n, *gate.qubits)
    amps = state.amplitudes
    if gate.kind == "pauli_rotation":
        if len(gate.qubits) != 1:
            raise IndexError("pauli_rotation acts on exactly one qubit")
        if gate.axis not in AXES:
            raise ValueError(f"unknown Pauli axis {gate.axis!r}")
        out = rotate(amps, n, gate.qubits[0], gate.axis, gate.angle)
    elif gate.kind == "cx":
        if len(gate.qubits) != 2:
            raise IndexError("cx needs (control, target)")
        out = amps[cx_permutation(n, (tuple(gate.qubits),))]
    elif gate.kind == "analog_zz":
        if len(gate.qubits) != 2:
            raise IndexError("analog_zz needs two qubits")
        out = amps * zz_phases(n, (tuple(gate.qubits),))
    else:
        raise ValueError(f"unknown gate kind {gate.kind!r}")
    return StateVector(n, out)


def evolve_encoding_block(
    state: StateVector, block, feature_value: float, theta_f=None
) -> StateVector:
    """Apply ``prod_m exp(-(i/2) w_m phi(x) sigma^axis_m)`` for an encoding block.

    ``w_m = gamma_m * theta_m``; ``theta_f`` is the global generator vector and is
    ignored for fixed-frequency blocks.
    """
    n = state.num_qubits
    _check_index(n, *block.qubits)
    weights = block.weights(theta_f)
    amps = state.amplitudes
    phi = block.phi_scale * feature_value
    for q, w in zip(block.qubits, weights):
        amps = rotate(amps, n, q, block.axis, w * phi)
    return StateVector(n, amps)


def expectation(state: StateVector, cost: CostOperator | None = None) -> float:
    if cost is None:
        cost = CostOperator(state.num_qubits)
    if cost.num_qubits != state.num_qubits:
        raise ValueError("cost operator and state disagree on qubit count")
    probs = np.abs(state.amplitudes) ** 2
    return float(probs @ cost.diagonal())
