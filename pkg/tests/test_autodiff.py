import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tfqnn.autodiff import (
    GapSet,
    grad_ansatz,
    grad_generator,
    gpsr_gradient,
    gpsr_shifts,
    input_derivative,
    input_derivatives,
    loss_gradient,
    parameter_jacobian,
)
from tfqnn.circuits import AnsatzLayer, Circuit, EncodingBlock, QuantumModel, build_model, forward, forward_batch
from tfqnn.errors import ConfigError, InputError, NumericalError
from tfqnn.spectrum import composite_eigenvalues
from tfqnn.circuits import make_feature_map

# central-difference steps: 1e-5 for first order, 1e-4 above
H1, H2 = 1e-5, 1e-4


def ry_model(theta):
    layer = AnsatzLayer(1, ("Y",), "none")
    return QuantumModel(Circuit(1, 1, (layer,), 1, 0), [theta], [])


def cos_theta_x(theta=0.5, reupload=False):
    block = EncodingBlock((1.0,), (0,), theta_f_slice=(0,))
    layout = (block, block) if reupload else (block,)
    return QuantumModel(Circuit(1, 1, layout, 0, 1), [], [theta])


def close(value, expect, rel=1e-4, abs_floor=1e-6):
    if abs(expect) < 1e-3:
        return abs(value - expect) < abs_floor
    return abs(value - expect) <= rel * abs(expect)


def random_model(rng, max_features=2):
    n = int(rng.integers(1, 5))
    kwargs = dict(
        feature_map=str(rng.choice(["simple", "tower", "exponential", "trainable"])),
        num_features=int(rng.integers(1, max_features + 1)),
        entangler=str(rng.choice(["cx_ring", "analog_zz_ring"])),
        layout=str(rng.choice(["single", "reupload"])),
    )
    if kwargs["num_features"] > n:
        kwargs["num_features"] = 1
    model = build_model(n, int(rng.integers(2, 4)), seed=int(rng.integers(1 << 30)), **kwargs)
    if model.circuit.num_theta_f:
        model = model.with_params(theta_f=rng.uniform(0.5, 1.5, model.circuit.num_theta_f))
    return model


# ---------------------------------------------------------------------------
# spec examples


def test_grad_ansatz_examples():
    assert grad_ansatz(ry_model(0.0), 0.0, 0) == pytest.approx(0, abs=1e-12)
    assert grad_ansatz(ry_model(np.pi / 2), 0.0, 0) == pytest.approx(-1, abs=1e-12)


def test_grad_ansatz_absent_parameter():
    layer = AnsatzLayer(1, ("Y",), "none")
    model = QuantumModel(Circuit(1, 1, (layer,), 2, 0), [0.3, 0.7], [])
    assert grad_ansatz(model, 0.0, 1) == 0.0
    with pytest.raises(IndexError):
        grad_ansatz(model, 0.0, 2)


def test_grad_generator_examples():
    assert grad_generator(cos_theta_x(), 2.0, 0) == pytest.approx(-2 * np.sin(1), abs=1e-12)
    assert grad_generator(cos_theta_x(1.7), 0.0, 0) == 0.0


def test_grad_generator_reupload_finite_difference():
    model = cos_theta_x(0.5, reupload=True)
    x = 0.9
    expect = -2 * x * np.sin(2 * 0.5 * x)
    fd = (forward(model.with_params(theta_f=[0.5 + H1]), x) - forward(model.with_params(theta_f=[0.5 - H1]), x)) / (2 * H1)
    assert grad_generator(model, x, 0) == pytest.approx(expect, abs=1e-12)
    assert abs(grad_generator(model, x, 0) - fd) < 1e-6


@pytest.mark.parametrize("backend", ["analytic_forward", "shift_rule"])
def test_input_derivative_examples(backend):
    model = cos_theta_x()
    assert input_derivative(model, 2.0, 0, 1, backend) == pytest.approx(-0.5 * np.sin(1), abs=1e-12)
    assert input_derivative(model, 2.0, 0, 2, backend) == pytest.approx(-0.25 * np.cos(1), abs=1e-12)
    assert input_derivative(model, 2.0, 0, 3, backend) == pytest.approx(0.125 * np.sin(1), abs=1e-12)


@pytest.mark.parametrize("order", [1, 2, 3])
def test_constant_model_has_zero_input_derivatives(order):
    model = ry_model(0.4)
    for backend in ("analytic_forward", "shift_rule"):
        assert input_derivative(model, 1.3, 0, order, backend) == 0.0


def test_input_derivative_errors():
    model = cos_theta_x()
    with pytest.raises(ConfigError):
        input_derivative(model, 1.0, 0, 4)
    with pytest.raises(ConfigError):
        input_derivative(model, 1.0, 0, 0)
    with pytest.raises(InputError):
        input_derivative(model, 1.0, 1, 1)
    with pytest.raises(ConfigError):
        input_derivative(model, 1.0, 0, 1, backend="adjoint")


def test_gpsr_single_gap_equals_psr():
    f = lambda a: np.cos(a) + 0.3 * np.sin(a)
    psr = 0.5 * (f(0.7 + np.pi / 2) - f(0.7 - np.pi / 2))
    assert gpsr_gradient(f, GapSet((1.0,)), 0.7) == pytest.approx(psr, abs=1e-12)


def test_gpsr_tower_generator():
    block = make_feature_map("tower", 2)
    eigs = composite_eigenvalues(block)
    gaps = GapSet.from_eigenvalues(eigs)
    assert gaps.gaps == (1.0, 2.0, 3.0)
    # a composite rotation exp(-i a G) on |++> measured in X: a trig polynomial with these gaps
    model = build_model(2, 1, seed=3, feature_map="tower")
    f = lambda a: forward(model, a)
    fd = (f(0.4 + H2) - f(0.4 - H2)) / (2 * H2)
    assert abs(gpsr_gradient(f, gaps, 0.4) - fd) < 1e-6


def test_gpsr_constant_evaluator():
    assert gpsr_gradient(lambda a: 2.5, GapSet((1.0, 2.0)), 0.3) == pytest.approx(0, abs=1e-14)


def test_gpsr_singular_system():
    with pytest.raises(NumericalError, match="condition number"):
        gpsr_gradient(np.cos, GapSet((1.0, 2.0)), 0.0, shifts=[0.5, 0.5])
    with pytest.raises(NumericalError):
        GapSet(())


def test_gpsr_shift_angles():
    assert np.allclose(gpsr_shifts(1), [np.pi / 2])
    assert np.allclose(gpsr_shifts(3), [np.pi / 6, np.pi / 2, 5 * np.pi / 6])


def test_loss_gradient_examples():
    model = ry_model(np.pi / 2)
    loss, grad = loss_gradient("supervised_mse", model, [[0.0]], [0.0])
    assert loss == pytest.approx(0, abs=1e-30) and grad == pytest.approx([0.0], abs=1e-15)
    fit = build_model(2, 2, seed=4)
    xs = np.linspace(-1, 1, 5)
    loss, grad = loss_gradient("supervised_mse", fit, xs[:, None], forward_batch(fit, xs))
    assert loss == 0.0 and np.all(grad == 0.0)
    with pytest.raises(ConfigError):
        loss_gradient("hinge", model, [[0.0]], [0.0])
    with pytest.raises(InputError):
        loss_gradient("supervised_mse", model, [[0.0]], [0.0, 1.0])


def test_loss_gradient_finite_difference(rng):
    for _ in range(5):
        model = random_model(rng, max_features=1)
        xs = rng.uniform(-2, 2, (4, 1))
        ys = rng.uniform(-1, 1, 4)
        _, grad = loss_gradient("supervised_mse", model, xs, ys)
        params = np.concatenate([model.theta_a, model.theta_f])
        na = model.circuit.num_theta_a

        def loss_at(vec):
            m = model.with_params(theta_a=vec[:na], theta_f=vec[na:])
            return np.mean((forward_batch(m, xs) - ys) ** 2)

        for i in range(params.size):
            e = np.zeros_like(params)
            e[i] = H1
            fd = (loss_at(params + e) - loss_at(params - e)) / (2 * H1)
            assert close(grad[i], fd)


# ---------------------------------------------------------------------------
# properties


def fd_param(model, x, kind, i, h=H1):
    def at(delta):
        if kind == "a":
            v = model.theta_a.copy()
            v[i] += delta
            return forward(model.with_params(theta_a=v), x)
        v = model.theta_f.copy()
        v[i] += delta
        return forward(model.with_params(theta_f=v), x)

    return (at(h) - at(-h)) / (2 * h)


def fd_input(model, x, dim, order):
    def at(delta):
        y = np.array(x, dtype=float)
        y[dim] += delta
        return forward(model, y)

    h = H1 if order == 1 else H2
    if order == 1:
        return (at(h) - at(-h)) / (2 * h)
    return (at(h) - 2 * at(0.0) + at(-h)) / h**2


def test_psr_matches_finite_differences(rng):
    for _ in range(100):
        model = random_model(rng)
        x = rng.uniform(-2, 2, model.num_features)
        i = int(rng.integers(model.circuit.num_theta_a))
        assert abs(grad_ansatz(model, x, i) - fd_param(model, x, "a", i)) < 1e-6


def test_generator_gradient_matches_finite_differences(rng):
    for _ in range(40):
        model = random_model(rng)
        if not model.circuit.num_theta_f:
            continue
        x = rng.uniform(-2, 2, model.num_features)
        j = int(rng.integers(model.circuit.num_theta_f))
        assert close(grad_generator(model, x, j), fd_param(model, x, "f", j))


def test_input_derivatives_match_finite_differences(rng):
    for _ in range(40):
        model = random_model(rng)
        x = rng.uniform(-2, 2, model.num_features)
        dim = int(rng.integers(model.num_features))
        for order in (1, 2):
            value = input_derivative(model, x, dim, order)
            fd = fd_input(model, x, dim, order)
            if order == 1:
                assert close(value, fd)
            else:
                # second differences at h=1e-4 carry ~1e-8/h^2 rounding noise
                assert abs(value - fd) < 1e-5 * max(1.0, abs(fd))


def test_backend_agreement(rng):
    for _ in range(50):
        model = random_model(rng)
        xs = rng.uniform(-2, 2, (2, model.num_features))
        monos = []
        for order in (1, 2):
            for d in range(model.num_features):
                m = [0] * model.num_features
                m[d] = order
                monos.append(tuple(m))
        if model.num_features == 2:
            monos.append((1, 1))
        a = input_derivatives(model, xs, monos, "analytic_forward")
        b = input_derivatives(model, xs, monos, "shift_rule")
        assert np.max(np.abs(a - b)) < 1e-8


def test_reupload_sum_rule(rng):
    model = build_model(3, 3, seed=5, feature_map="trainable", layout="reupload")
    model = model.with_params(theta_f=rng.uniform(0.5, 1.5, 3))
    x = np.array([[0.7]])
    occ = model.circuit.occurrences
    enc = np.flatnonzero(occ.is_encoding)
    first = enc[: enc.size // 2]
    second = enc[enc.size // 2:]
    full = parameter_jacobian(model, x).d_theta_f[0, 0]
    masks = []
    for part in (first, second):
        mask = np.zeros(len(occ), dtype=bool)
        mask[part] = True
        masks.append(parameter_jacobian(model, x, occurrence_mask=mask).d_theta_f[0, 0])
    assert np.all(masks[0] != 0) and np.all(masks[1] != 0)
    assert np.allclose(masks[0] + masks[1], full, atol=1e-14)
    for j in range(3):
        assert grad_generator(model, x[0], j, occurrences=first) == pytest.approx(masks[0][j], abs=1e-14)


def test_parameter_jacobian_matches_scalar_gradients(rng):
    model = random_model(rng)
    xs = rng.uniform(-2, 2, (3, model.num_features))
    jac = parameter_jacobian(model, xs)
    assert np.allclose(jac.values[:, 0], forward_batch(model, xs), atol=1e-13)
    for p in range(3):
        for i in range(model.circuit.num_theta_a):
            assert jac.d_theta_a[p, 0, i] == pytest.approx(grad_ansatz(model, xs[p], i), abs=1e-12)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000), st.floats(0.1, 4.0))
def test_gradient_linearity_in_phi_scale(seed, s):
    # scaling the input by s scales the first input derivative by s (chain rule through phi)
    model = build_model(2, 2, seed=seed, phi_scale=s)
    plain = build_model(2, 2, seed=seed)
    x = 0.37
    assert input_derivative(model, x, 0, 1) == pytest.approx(s * input_derivative(plain, s * x, 0, 1), abs=1e-10)


def test_evaluation_count_accounting():
    ff = build_model(3, 2)
    tf = build_model(3, 2, feature_map="trainable")
    xs = np.zeros((4, 1))
    n_ff = parameter_jacobian(ff, xs).evaluations
    n_tf = parameter_jacobian(tf, xs).evaluations
    assert n_ff == 2 * 12 * 4
    assert n_tf == 2 * 15 * 4
    ff.circuit.counter.reset()
    parameter_jacobian(ff, xs, include_value=False)
    assert ff.circuit.counter.count == n_ff
