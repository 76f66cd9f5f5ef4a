"""Quantum model construction and the batched forward pass.

A :class:`Circuit` is the parameter-free structure: an ordered layout of
ansatz layers and encoding blocks. It compiles into a flat program of rotation
*occurrences* (one per parameterised single-qubit gate) and fixed entangling
steps. Every occurrence has an angle that is either an ansatz parameter or
``gamma * theta_f * phi_scale * x[dim]``; shift rules perturb occurrences.

:class:`QuantumModel` pairs a circuit with its parameter vectors.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from functools import cached_property
from math import factorial

import numpy as np

from .errors import ConfigError, InputError
from .jets import JetSpace
from .qstate import (
    AXES,
    CostOperator,
    apply_pauli,
    cx_permutation,
    magnetization_diag,
    ring_pairs,
    rotate,
    rotation_terms,
    zz_phases,
)

FEATURE_MAP_KINDS = ("simple", "tower", "exponential", "trainable")
ENTANGLERS = ("cx_ring", "analog_zz_ring", "none")
LAYOUTS = ("single", "reupload", "serial")


@dataclass(frozen=True)
class EncodingBlock:
    """Product feature map ``prod_m exp(-(i/2) gamma_m theta_m phi(x) sigma^axis)``.

    ``phi_scale`` is the encoding function ``phi(x) = phi_scale * x``; a value
    of 1 is the identity encoding. ``theta_f_slice`` is empty for a fixed-
    frequency block, otherwise it holds one index into the global generator
    vector per qubit.
    """

    gamma: tuple[float, ...]
    qubits: tuple[int, ...]
    feature_dim: int = 0
    axis: str = "Y"
    theta_f_slice: tuple[int, ...] = ()
    phi_scale: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "gamma", tuple(float(g) for g in self.gamma))
        object.__setattr__(self, "qubits", tuple(int(q) for q in self.qubits))
        object.__setattr__(self, "theta_f_slice", tuple(int(j) for j in self.theta_f_slice))
        if len(self.gamma) != len(self.qubits):
            raise ConfigError("gamma must have one weight per encoded qubit")
        if self.theta_f_slice and len(self.theta_f_slice) != len(self.qubits):
            raise ConfigError("a trainable block needs one theta_f index per qubit")
        if self.axis not in AXES:
            raise ConfigError(f"unknown encoding axis {self.axis!r}")

    @property
    def trainable(self) -> bool:
        return bool(self.theta_f_slice)

    def weights(self, theta_f=None) -> np.ndarray:
        gamma = np.asarray(self.gamma)
        if not self.trainable:
            return gamma
        if theta_f is None:
            raise ConfigError("trainable block needs theta_f")
        return gamma * np.asarray(theta_f, dtype=float)[list(self.theta_f_slice)]


@dataclass(frozen=True)
class AnsatzLayer:
    """Hardware-efficient layer: one rotation per axis per qubit, then a ring entangler.

    Parameter ``param_offset + a * N + q`` drives axis ``rotation_axes[a]`` on qubit ``q``.
    """

    num_qubits: int
    rotation_axes: tuple[str, ...] = ("Y", "Z")
    entangler: str = "cx_ring"
    param_offset: int = 0

    def __post_init__(self):
        object.__setattr__(self, "rotation_axes", tuple(self.rotation_axes))
        if self.entangler not in ENTANGLERS:
            raise ConfigError(f"unknown entangler {self.entangler!r}")
        if any(a not in AXES for a in self.rotation_axes):
            raise ConfigError(f"bad rotation axes {self.rotation_axes}")

    @property
    def num_params(self) -> int:
        return len(self.rotation_axes) * self.num_qubits

    @property
    def pairs(self) -> tuple[tuple[int, int], ...]:
        return ring_pairs(self.num_qubits)


def make_feature_map(
    kind: str,
    num_qubits: int,
    feature_dim: int = 0,
    *,
    qubits=None,
    trainable: bool | None = None,
    theta_offset: int = 0,
    axis: str = "Y",
    phi_scale: float = 1.0,
) -> EncodingBlock:
    """Build a simple / tower / exponential / trainable encoding block.

    ``trainable`` adds a generator-parameter slice on top of any weight
    pattern; the ``trainable`` kind is the simple pattern with that slice.
    """
    if kind not in FEATURE_MAP_KINDS:
        raise ConfigError(f"unknown feature map kind {kind!r}; expected one of {FEATURE_MAP_KINDS}")
    if num_qubits < 1:
        raise ConfigError("feature map needs at least one qubit")
    qubits = tuple(range(num_qubits)) if qubits is None else tuple(qubits)
    n = len(qubits)
    m = np.arange(1, n + 1)
    if kind == "tower":
        gamma = m.astype(float)
    elif kind == "exponential":
        gamma = 2.0 ** (m - 1)
    else:
        gamma = np.ones(n)
    if trainable is None:
        trainable = kind == "trainable"
    slice_ = tuple(range(theta_offset, theta_offset + n)) if trainable else ()
    return EncodingBlock(tuple(gamma), qubits, feature_dim, axis, slice_, phi_scale)


class EvalCounter:
    """Counts circuit executions (one per batch row)."""

    def __init__(self):
        self.count = 0

    def add(self, n: int) -> None:
        self.count += int(n)

    def reset(self) -> None:
        self.count = 0


@dataclass(frozen=True)
class Occurrences:
    """Flat table of parameterised rotations in program order."""

    qubit: np.ndarray
    axis: tuple[str, ...]
    is_encoding: np.ndarray
    param: np.ndarray  # theta_a index, or theta_f index (-1 for fixed blocks)
    gamma: np.ndarray
    scale: np.ndarray
    dim: np.ndarray
    block: np.ndarray  # layout position

    def __len__(self) -> int:
        return len(self.qubit)


@dataclass(frozen=True)
class Circuit:
    num_qubits: int
    num_features: int
    layout: tuple
    num_theta_a: int
    num_theta_f: int
    counter: EvalCounter = field(default_factory=EvalCounter, compare=False, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "layout", tuple(self.layout))
        used_a: list[int] = []
        shared: dict[int, tuple] = {}
        for item in self.layout:
            if isinstance(item, AnsatzLayer):
                if item.num_qubits != self.num_qubits:
                    raise ConfigError("ansatz layer width differs from circuit width")
                used_a.extend(range(item.param_offset, item.param_offset + item.num_params))
            elif isinstance(item, EncodingBlock):
                if any(not 0 <= q < self.num_qubits for q in item.qubits):
                    raise ConfigError("encoding block addresses a missing qubit")
                if not 0 <= item.feature_dim < self.num_features:
                    raise ConfigError("encoding block feature_dim out of range")
                for j, g, q in zip(item.theta_f_slice, item.gamma, item.qubits):
                    if not 0 <= j < self.num_theta_f:
                        raise ConfigError("theta_f index out of range")
                    key = (q, item.feature_dim)
                    if shared.setdefault(j, key) != key:
                        raise ConfigError(
                            f"theta_f[{j}] drives different qubits/features in separate blocks"
                        )
            else:
                raise ConfigError(f"unsupported layout item {item!r}")
        if any(not 0 <= i < self.num_theta_a for i in used_a):
            raise ConfigError("theta_a index out of range")

    @cached_property
    def occurrences(self) -> Occurrences:
        rows = []
        for pos, item in enumerate(self.layout):
            if isinstance(item, AnsatzLayer):
                n = self.num_qubits
                for a, axis in enumerate(item.rotation_axes):
                    for q in range(n):
                        rows.append((q, axis, False, item.param_offset + a * n + q, 1.0, 1.0, 0, pos))
            else:
                idx = item.theta_f_slice or (-1,) * len(item.qubits)
                for q, g, j in zip(item.qubits, item.gamma, idx):
                    rows.append((q, item.axis, True, j, g, item.phi_scale, item.feature_dim, pos))
        cols = list(zip(*rows)) if rows else [()] * 8
        return Occurrences(
            qubit=np.array(cols[0], dtype=int),
            axis=tuple(cols[1]),
            is_encoding=np.array(cols[2], dtype=bool),
            param=np.array(cols[3], dtype=int),
            gamma=np.array(cols[4], dtype=float),
            scale=np.array(cols[5], dtype=float),
            dim=np.array(cols[6], dtype=int),
            block=np.array(cols[7], dtype=int),
        )

    @cached_property
    def program(self) -> tuple:
        """Flat op list: ``("rot", occ)``, ``("perm", idx)`` or ``("phase", diag)``."""
        ops = []
        occ = 0
        for item in self.layout:
            if isinstance(item, AnsatzLayer):
                for _ in range(item.num_params):
                    ops.append(("rot", occ))
                    occ += 1
                if item.entangler == "cx_ring" and item.pairs:
                    ops.append(("perm", cx_permutation(self.num_qubits, item.pairs)))
                elif item.entangler == "analog_zz_ring" and item.pairs:
                    ops.append(("phase", zz_phases(self.num_qubits, item.pairs)))
            else:
                for _ in item.qubits:
                    ops.append(("rot", occ))
                    occ += 1
        return tuple(ops)

    @property
    def encoding_blocks(self) -> list[EncodingBlock]:
        return [b for b in self.layout if isinstance(b, EncodingBlock)]

    @property
    def ansatz_layers(self) -> list[AnsatzLayer]:
        return [b for b in self.layout if isinstance(b, AnsatzLayer)]

    @property
    def trainable_encoding_count(self) -> int:
        """Number of encoding gates whose angle carries a generator parameter."""
        occ = self.occurrences
        return int(np.sum(occ.is_encoding & (occ.param >= 0)))

    @property
    def cost(self) -> CostOperator:
        return CostOperator(self.num_qubits)

    # -- evaluation -------------------------------------------------------

    def angles(self, theta_a, theta_f, xs):
        """Occurrence angles and their input slopes ``d angle / d x[dim]``.

        All arguments broadcast over a leading batch axis. Returns
        ``(angles, slopes)`` each of shape ``(B, n_occ)``.
        """
        occ = self.occurrences
        theta_a = np.atleast_2d(np.asarray(theta_a, dtype=float))
        theta_f = np.atleast_2d(np.asarray(theta_f, dtype=float))
        xs = np.atleast_2d(np.asarray(xs, dtype=float))
        batch = max(theta_a.shape[0], theta_f.shape[0], xs.shape[0])
        angles = np.zeros((batch, len(occ)))
        slopes = np.zeros((batch, len(occ)))
        ans = ~occ.is_encoding
        if ans.any():
            angles[:, ans] = theta_a[:, occ.param[ans]]
        enc = occ.is_encoding
        if enc.any():
            ones = np.ones((theta_f.shape[0], 1))
            ext = np.concatenate([theta_f, ones], axis=1)
            idx = np.where(occ.param[enc] >= 0, occ.param[enc], theta_f.shape[1])
            slope = occ.gamma[enc] * occ.scale[enc] * ext[:, idx]
            slopes[:, enc] = slope
            angles[:, enc] = slope * xs[:, occ.dim[enc]]
        return angles, slopes

    def run(self, angles: np.ndarray, slopes: np.ndarray | None = None, jets: JetSpace | None = None):
        """Execute the program for each batch row; return expectation jets ``(B, K)``.

        Without ``jets`` the result has ``K = 1`` (the plain expectation).
        With a :class:`JetSpace`, each coefficient ``m`` is ``d^m f / m!`` with
        respect to the encoded inputs, propagated exactly through every gate.
        """
        n = self.num_qubits
        occ = self.occurrences
        batch = angles.shape[0]
        k = 1 if jets is None else jets.size
        state = np.zeros((batch, k, 1 << n), dtype=np.complex128)
        state[:, 0, 0] = 1.0
        tables = {} if jets is None else self._jet_tables(jets)
        for op in self.program:
            kind = op[0]
            if kind == "rot":
                o = op[1]
                q, axis = int(occ.qubit[o]), occ.axis[o]
                d = int(occ.dim[o])
                if jets is not None and occ.is_encoding[o] and jets.max_power[d] > 0:
                    state = _jet_rotate(state, n, q, axis, angles[:, o], slopes[:, o], tables[d])
                else:
                    state = rotate(state, n, q, axis, angles[:, o][:, None])
            elif kind == "perm":
                state = state[..., op[1]]
            else:
                state = state * op[1]
        self.counter.add(batch)
        return self._readout(state, jets)

    def _readout(self, state, jets):
        diag = magnetization_diag(self.num_qubits)
        batch, k = state.shape[:2]
        if k == 1:
            return (np.abs(state) ** 2 @ diag).reshape(batch, 1)
        gram = np.einsum("bkd,bld->bkl", state.conj(), state * diag)
        return gram.real.reshape(batch, k * k) @ jets.product_matrix

    def run_shifted(self, angles, slopes, occurrences, jets=None, shift=0.5 * np.pi, *, count_base=True):
        """Unshifted run plus runs with each listed occurrence moved by ``+-shift``.

        Returns ``(base, plus, minus)`` with shapes ``(P, K)``, ``(P, S, K)``,
        ``(P, S, K)``. The results equal separate :meth:`run` calls; shifted
        rows are forked from the unshifted sweep when it reaches their gate,
        so only the suffix after the gate is simulated again. The counter
        still records one execution per logical circuit run.
        """
        n = self.num_qubits
        occ = self.occurrences
        sel = np.asarray(occurrences, dtype=int)
        p, s = angles.shape[0], sel.size
        if len(set(sel.tolist())) != s:
            raise ValueError("shifted occurrences must be distinct")
        k = 1 if jets is None else jets.size
        slot = {int(o): j for j, o in enumerate(sel)}
        # row layout: base block, then (+, -) blocks in program order of the gate
        order = sorted(slot, key=int)
        start = {o: p * (1 + 2 * r) for r, o in enumerate(order)}
        rows = p * (1 + 2 * s)
        big_angles = np.tile(angles, (1 + 2 * s, 1))
        big_slopes = None if slopes is None else np.tile(slopes, (1 + 2 * s, 1))
        for o, r0 in start.items():
            big_angles[r0:r0 + p, o] += shift
            big_angles[r0 + p:r0 + 2 * p, o] -= shift
        state = np.zeros((rows, k, 1 << n), dtype=np.complex128)
        state[:p, 0, 0] = 1.0
        tables = {} if jets is None else self._jet_tables(jets)
        active = p
        for op in self.program:
            kind = op[0]
            if kind == "rot":
                o = op[1]
                if o in start:
                    state[active:active + 2 * p] = np.tile(state[:p], (2, 1, 1))
                    active += 2 * p
                q, axis = int(occ.qubit[o]), occ.axis[o]
                d = int(occ.dim[o])
                a = big_angles[:active, o]
                if jets is not None and occ.is_encoding[o] and jets.max_power[d] > 0:
                    state[:active] = _jet_rotate(state[:active], n, q, axis, a, big_slopes[:active, o], tables[d])
                else:
                    state[:active] = rotate(state[:active], n, q, axis, a[:, None])
            elif kind == "perm":
                state[:active] = state[:active][..., op[1]]
            else:
                state[:active] *= op[1]
        self.counter.add(2 * p * s + (p if count_base else 0))
        out = self._readout(state, jets)
        base = out[:p]
        plus = np.empty((p, s, k))
        minus = np.empty((p, s, k))
        for o, r0 in start.items():
            plus[:, slot[o]] = out[r0:r0 + p]
            minus[:, slot[o]] = out[r0 + p:r0 + 2 * p]
        return base, plus, minus

    def _jet_tables(self, jets: JetSpace):
        tables = {}
        for d in range(jets.num_dims):
            tables[d] = [jets.shift_pairs(d, p) for p in range(jets.max_power[d] + 1)]
        return tables


def _jet_rotate(state, n, q, axis, angle, slope, pairs):
    # R(a0 + c t) = sum_p t^p [(c/2)^p / p!] (cos^(p)(a0/2) I - i sin^(p)(a0/2) sigma)
    half = 0.5 * angle
    flipped = apply_pauli(state, n, q, axis)
    out = np.zeros_like(state)
    for p, (dst, src) in enumerate(pairs):
        fac = (0.5 * slope) ** p / factorial(p)
        a = (fac * np.cos(half + 0.5 * np.pi * p))[:, None, None]
        b = (-1j * fac * np.sin(half + 0.5 * np.pi * p))[:, None, None]
        out[:, dst] += a * state[:, src] + b * flipped[:, src]
    return out


@dataclass(frozen=True)
class QuantumModel:
    circuit: Circuit
    theta_a: np.ndarray
    theta_f: np.ndarray

    def __post_init__(self):
        ta = np.array(self.theta_a, dtype=float).reshape(-1)
        tf = np.array(self.theta_f, dtype=float).reshape(-1)
        if ta.shape != (self.circuit.num_theta_a,):
            raise ConfigError(f"theta_a must have {self.circuit.num_theta_a} entries")
        if tf.shape != (self.circuit.num_theta_f,):
            raise ConfigError(f"theta_f must have {self.circuit.num_theta_f} entries")
        ta.setflags(write=False)
        tf.setflags(write=False)
        object.__setattr__(self, "theta_a", ta)
        object.__setattr__(self, "theta_f", tf)

    @property
    def num_qubits(self) -> int:
        return self.circuit.num_qubits

    @property
    def num_features(self) -> int:
        return self.circuit.num_features

    @property
    def trainable_frequencies(self) -> bool:
        return self.circuit.num_theta_f > 0

    def with_params(self, theta_a=None, theta_f=None) -> "QuantumModel":
        return replace(
            self,
            theta_a=self.theta_a if theta_a is None else theta_a,
            theta_f=self.theta_f if theta_f is None else theta_f,
        )

    def check_inputs(self, xs) -> np.ndarray:
        xs = np.asarray(xs, dtype=float)
        if xs.ndim == 0:
            xs = xs.reshape(1, 1)
        elif xs.ndim == 1:
            xs = xs[:, None] if self.num_features == 1 else xs[None, :]
        if xs.ndim != 2 or xs.shape[1] != self.num_features:
            raise InputError(
                f"model encodes {self.num_features} feature(s), got inputs of shape {xs.shape}"
            )
        return xs

    def __call__(self, xs) -> np.ndarray:
        return forward_batch(self, xs)


def forward(model: QuantumModel, x) -> float:
    """Cost expectation of the model at a single input point."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if x.shape != (model.num_features,):
        raise InputError(f"expected an input of dimension {model.num_features}, got {x.shape}")
    return float(forward_batch(model, x[None, :])[0])


def forward_batch(model: QuantumModel, xs) -> np.ndarray:
    xs = model.check_inputs(xs)
    angles, _ = model.circuit.angles(model.theta_a, model.theta_f, xs)
    return model.circuit.run(angles)[:, 0]


def build_circuit(
    num_qubits: int,
    num_layers: int,
    *,
    feature_map: str = "simple",
    trainable: bool = False,
    num_features: int = 1,
    rotations=("Y", "Z"),
    entangler: str = "cx_ring",
    layout: str = "single",
    registers: str = "shared",
    phi_scale: float = 1.0,
) -> Circuit:
    """Assemble one of the standard layouts.

    ``single``: feature map, then ``num_layers`` ansatz layers.
    ``reupload``: one ansatz layer, feature map, ``num_layers - 2`` ansatz
    layers, a parameter-sharing copy of the feature map, one ansatz layer.
    ``serial``: features encoded one after another with an ansatz layer
    between consecutive blocks; ``num_layers`` ansatz layers follow, bisected
    by a parameter-sharing copy of the serial feature map.

    ``registers="shared"`` encodes every feature on all qubits (blocks run
    back to back); ``"split"`` gives each feature its own contiguous qubit
    register.
    """
    if layout not in LAYOUTS:
        raise ConfigError(f"unknown layout {layout!r}; expected one of {LAYOUTS}")
    if num_layers < 0 or (layout == "reupload" and num_layers < 2):
        raise ConfigError("reupload layout needs at least 2 ansatz layers")
    if registers not in ("shared", "split"):
        raise ConfigError(f"unknown register mode {registers!r}")
    kind = "simple" if feature_map == "trainable" else feature_map
    trainable = trainable or feature_map == "trainable"
    n = num_qubits
    if registers == "split":
        if n < num_features:
            raise ConfigError("split registers need at least one qubit per feature")
        sizes = [n // num_features + (d < n % num_features) for d in range(num_features)]
        starts = np.cumsum([0] + sizes[:-1])
        regs = [tuple(range(s, s + z)) for s, z in zip(starts, sizes)]
    else:
        regs = [tuple(range(n))] * num_features

    blocks = []
    theta_off = 0
    for d in range(num_features):
        blk = make_feature_map(
            kind, len(regs[d]), d, qubits=regs[d], trainable=trainable,
            theta_offset=theta_off, phi_scale=phi_scale,
        )
        theta_off += len(blk.theta_f_slice)
        blocks.append(blk)

    layout_items: list = []
    a_off = 0

    def ansatz():
        nonlocal a_off
        layer = AnsatzLayer(n, tuple(rotations), entangler, a_off)
        a_off += layer.num_params
        layout_items.append(layer)

    if layout == "single":
        layout_items.extend(blocks)
        for _ in range(num_layers):
            ansatz()
    elif layout == "reupload":
        ansatz()
        layout_items.extend(blocks)
        for _ in range(num_layers - 2):
            ansatz()
        layout_items.extend(blocks)
        ansatz()
    else:
        def serial_fm():
            for i, blk in enumerate(blocks):
                if i:
                    ansatz()
                layout_items.append(blk)

        serial_fm()
        for _ in range(num_layers // 2):
            ansatz()
        serial_fm()
        for _ in range(num_layers - num_layers // 2):
            ansatz()

    return Circuit(n, num_features, tuple(layout_items), a_off, theta_off)


def init_params(circuit: Circuit, seed) -> tuple[np.ndarray, np.ndarray]:
    """Ansatz angles uniform on [-pi, pi); generator parameters all ones."""
    rng = np.random.default_rng(seed)
    theta_a = rng.uniform(-np.pi, np.pi, size=circuit.num_theta_a)
    return theta_a, np.ones(circuit.num_theta_f)


def build_model(num_qubits: int, num_layers: int, *, seed=0, **kwargs) -> QuantumModel:
    circuit = build_circuit(num_qubits, num_layers, **kwargs)
    theta_a, theta_f = init_params(circuit, seed)
    return QuantumModel(circuit, theta_a, theta_f)
