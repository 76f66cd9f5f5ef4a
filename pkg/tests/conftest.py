"""Shared oracles: a dense-matrix circuit simulator independent of the engine kernels."""

from functools import reduce

import numpy as np
import pytest
from scipy.linalg import expm

from tfqnn.circuits import AnsatzLayer, EncodingBlock

I2 = np.eye(2, dtype=complex)
PAULI = {
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "Z": np.array([[1, 0], [0, -1]], dtype=complex),
}
P1 = np.array([[0, 0], [0, 1]], dtype=complex)  # number operator |1><1|


def embed(op, qubit, n):
    """Single-qubit operator on ``qubit`` (little-endian: qubit 0 is the rightmost factor)."""
    factors = [op if q == qubit else I2 for q in reversed(range(n))]
    return reduce(np.kron, factors)


def dense_rotation(axis, qubit, angle, n):
    return expm(-0.5j * angle * embed(PAULI[axis], qubit, n))


def dense_cx(control, target, n):
    return embed(I2 - P1, control, n) + embed(P1, control, n) @ embed(PAULI["X"], target, n)


def dense_zz(k, l, n):
    return expm(1j * np.pi * embed(P1, k, n) @ embed(P1, l, n))


def dense_cost(n):
    return sum(embed(PAULI["Z"], q, n) for q in range(n))


def dense_generator(gammas, thetas, axis="Y"):
    n = len(gammas)
    return sum(g * t * embed(PAULI[axis], q, n) / 2 for q, (g, t) in enumerate(zip(gammas, thetas)))


def dense_forward(model, x):
    """Expectation of the total magnetisation, by explicit matrix products."""
    circuit = model.circuit
    n = circuit.num_qubits
    x = np.atleast_1d(np.asarray(x, dtype=float))
    psi = np.zeros(2**n, dtype=complex)
    psi[0] = 1.0
    for item in circuit.layout:
        if isinstance(item, EncodingBlock):
            w = item.weights(model.theta_f)
            for q, wm in zip(item.qubits, w):
                psi = dense_rotation(item.axis, q, wm * item.phi_scale * x[item.feature_dim], n) @ psi
        elif isinstance(item, AnsatzLayer):
            for a, axis in enumerate(item.rotation_axes):
                for q in range(n):
                    angle = model.theta_a[item.param_offset + a * n + q]
                    psi = dense_rotation(axis, q, angle, n) @ psi
            for k, l in item.pairs:
                if item.entangler == "cx_ring":
                    psi = dense_cx(k, l, n) @ psi
                elif item.entangler == "analog_zz_ring":
                    psi = dense_zz(k, l, n) @ psi
    return float(np.real(psi.conj() @ dense_cost(n) @ psi))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# ---------------------------------------------------------------------------
# acceptance summary: tests append (label, passed, detail); printed at session end

ACCEPTANCE: list[tuple[str, bool, str]] = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for label, ok, detail in ACCEPTANCE:
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  {label}: {detail}")
