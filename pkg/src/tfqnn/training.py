"""Cosine-series datasets, losses, Adam and the supervised training loop."""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from math import ceil

import numpy as np

from .autodiff import supervised_loss_gradient
from .circuits import QuantumModel, forward_batch
from .errors import ConfigError, InputError


@dataclass(frozen=True)
class CosineDataset:
    frequencies: tuple[float, ...]
    domain: tuple[float, float]
    xs: np.ndarray
    ys: np.ndarray

    @property
    def size(self) -> int:
        return int(self.xs.size)


def nyquist_count(frequencies, domain) -> int:
    """``ceil(2 |D| max(freq))`` sample points."""
    freqs = np.asarray(list(frequencies), dtype=float)
    if freqs.size == 0:
        raise InputError("frequency set is empty")
    if np.any(freqs <= 0):
        raise InputError("frequencies must be positive")
    lo, hi = domain
    if hi <= lo:
        raise InputError("domain must satisfy hi > lo")
    # round off representation noise first so e.g. 48*pi is not pushed up by one ulp
    return int(ceil(round(2.0 * (hi - lo) * freqs.max(), 9)))


def cosine_series(xs, frequencies) -> np.ndarray:
    freqs = np.asarray(list(frequencies), dtype=float)
    xs = np.asarray(xs, dtype=float)
    return np.cos(np.multiply.outer(xs, freqs)).mean(axis=-1)


def sample_cosine_series(frequencies, domain=(-4 * np.pi, 4 * np.pi), num_points: int | None = None) -> CosineDataset:
    """Equally spaced samples (endpoints included) of the normalised cosine series.

    ``num_points`` overrides the Nyquist count.
    """
    n = nyquist_count(frequencies, domain) if num_points is None else int(num_points)
    if n < 1:
        raise InputError("need at least one sample")
    xs = np.linspace(domain[0], domain[1], n)
    return CosineDataset(tuple(float(f) for f in frequencies), (float(domain[0]), float(domain[1])), xs, cosine_series(xs, frequencies))


def richness_frequencies(count: int, lo: float = 1.0, hi: float = 3.0, single: float = 1.0) -> tuple[float, ...]:
    """``count`` frequencies equally spaced over [lo, hi]; ``single`` when count is 1."""
    if count < 1:
        raise InputError("need at least one frequency")
    if count == 1:
        return (float(single),)
    return tuple(float(v) for v in np.linspace(lo, hi, count))


def mse(pred, target) -> float:
    pred = np.asarray(pred, dtype=float)
    target = np.asarray(target, dtype=float)
    if pred.shape != target.shape or pred.size == 0:
        raise InputError(f"mse needs equal non-empty shapes, got {pred.shape} and {target.shape}")
    return float(np.mean((pred - target) ** 2))


# ---------------------------------------------------------------------------
# Adam


@dataclass(frozen=True)
class AdamState:
    m: np.ndarray
    v: np.ndarray
    t: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def zeros(cls, size: int, **kw) -> "AdamState":
        return cls(np.zeros(size), np.zeros(size), 0, **kw)


def adam_step(state: AdamState, params, grads, lr: float):
    """One bias-corrected Adam update; returns ``(new_state, new_params)``."""
    params = np.asarray(params, dtype=float)
    grads = np.asarray(grads, dtype=float)
    if params.shape != grads.shape or params.shape != state.m.shape:
        raise InputError("parameter, gradient and moment shapes differ")
    t = state.t + 1
    m = state.beta1 * state.m + (1.0 - state.beta1) * grads
    v = state.beta2 * state.v + (1.0 - state.beta2) * grads * grads
    m_hat = m / (1.0 - state.beta1**t)
    v_hat = v / (1.0 - state.beta2**t)
    new = params - lr * m_hat / (np.sqrt(v_hat) + state.eps)
    return AdamState(m, v, t, state.beta1, state.beta2, state.eps), new


# ---------------------------------------------------------------------------
# training


@dataclass(frozen=True)
class TrainConfig:
    iterations: int
    batch_size: int
    learning_rate: float
    seed: int

    def __post_init__(self):
        if self.iterations < 0:
            raise ConfigError("iterations must be >= 0")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        if self.learning_rate <= 0:
            raise ConfigError("learning_rate must be > 0")
        if self.seed is None:
            raise ConfigError("a seed is mandatory")


@dataclass
class TrainReport:
    loss_trace: np.ndarray
    theta_a: np.ndarray
    theta_f: np.ndarray
    final_mse: float
    circuit_evaluations: int
    gradient_evaluations: int
    wall_clock: float
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "loss_trace": self.loss_trace.tolist(),
            "theta_a": self.theta_a.tolist(),
            "theta_f": self.theta_f.tolist(),
            "final_mse": self.final_mse,
            "circuit_evaluations": self.circuit_evaluations,
            "gradient_evaluations": self.gradient_evaluations,
            "wall_clock": self.wall_clock,
            **self.extra,
        }


def draw_batch(rng: np.random.Generator, size: int, batch_size: int) -> np.ndarray:
    """Uniform sample without replacement (whole set when it is smaller)."""
    if batch_size >= size:
        return np.arange(size)
    return np.sort(rng.choice(size, size=batch_size, replace=False))


def train_supervised(model: QuantumModel, dataset: CosineDataset, config: TrainConfig, *, callback=None):
    """Fit ``model`` to the dataset with mini-batch Adam on the MSE.

    Generator parameters are trained jointly with the ansatz when the model
    has any. Returns the trained model and a :class:`TrainReport`.
    """
    if model.num_features != 1:
        raise InputError("supervised cosine fitting needs a single-feature model")
    if dataset.size == 0:
        raise InputError("dataset is empty")
    rng = np.random.default_rng(config.seed)
    circuit = model.circuit
    n_a = circuit.num_theta_a
    params = np.concatenate([model.theta_a, model.theta_f])
    opt = AdamState.zeros(params.size)
    trace = np.empty(config.iterations)
    count0 = circuit.counter.count
    grad_evals = 0
    start = time.perf_counter()
    for it in range(config.iterations):
        idx = draw_batch(rng, dataset.size, config.batch_size)
        current = model.with_params(params[:n_a], params[n_a:])
        before = circuit.counter.count
        loss, grad = supervised_loss_gradient(current, dataset.xs[idx], dataset.ys[idx])
        grad_evals += circuit.counter.count - before - idx.size
        trace[it] = loss
        opt, params = adam_step(opt, params, grad, config.learning_rate)
        if callback is not None:
            callback(it, loss, params)
    trained = model.with_params(params[:n_a], params[n_a:])
    final = mse(forward_batch(trained, dataset.xs), dataset.ys)
    report = TrainReport(
        loss_trace=trace,
        theta_a=trained.theta_a.copy(),
        theta_f=trained.theta_f.copy(),
        final_mse=final,
        circuit_evaluations=circuit.counter.count - count0,
        gradient_evaluations=grad_evals,
        wall_clock=time.perf_counter() - start,
    )
    return trained, report


def cost_factor(num_theta_f: int, num_theta_a: int) -> float:
    """Extra circuit evaluations for a TF gradient pass: ``(|F| + |A|) / |A|``."""
    if num_theta_a < 1:
        raise InputError("cost factor needs at least one ansatz parameter")
    return (num_theta_f + num_theta_a) / num_theta_a
