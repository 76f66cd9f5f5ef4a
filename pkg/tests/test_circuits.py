import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import dense_forward
from tfqnn.circuits import (
    AnsatzLayer,
    Circuit,
    EncodingBlock,
    QuantumModel,
    build_circuit,
    build_model,
    forward,
    forward_batch,
    init_params,
    make_feature_map,
)
from tfqnn.errors import ConfigError, InputError


def single_block_model(weight=1.0, trainable=False, theta=1.0):
    block = EncodingBlock((weight,), (0,), theta_f_slice=(0,) if trainable else ())
    circuit = Circuit(1, 1, (block,), 0, 1 if trainable else 0)
    return QuantumModel(circuit, [], [theta] if trainable else [])


@pytest.mark.parametrize(
    "kind,gamma",
    [("simple", [1, 1, 1]), ("tower", [1, 2, 3]), ("exponential", [1, 2, 4]), ("trainable", [1, 1, 1])],
)
def test_feature_map_weights(kind, gamma):
    block = make_feature_map(kind, 3)
    assert list(block.gamma) == gamma
    assert block.trainable == (kind == "trainable")
    assert len(block.theta_f_slice) == (3 if kind == "trainable" else 0)


def test_unknown_feature_map():
    with pytest.raises(ConfigError):
        make_feature_map("fancy", 3)


def test_forward_examples():
    empty = QuantumModel(Circuit(3, 1, (), 0, 0), [], [])
    assert forward(empty, 0.3) == pytest.approx(3)
    assert forward(single_block_model(), np.pi / 2) == pytest.approx(0, abs=1e-12)
    assert forward(single_block_model(trainable=True, theta=2.0), np.pi / 2) == pytest.approx(-1, abs=1e-12)


def test_forward_dimension_mismatch():
    model = build_model(2, 1, num_features=2, registers="split")
    with pytest.raises(InputError):
        forward(model, [0.1, 0.2, 0.3])
    with pytest.raises(InputError):
        forward(model, 0.1)


def test_theta_f_initialised_to_ones():
    model = build_model(3, 2, feature_map="trainable")
    assert np.array_equal(model.theta_f, np.ones(3))


def test_theta_a_init_uniform_range():
    circuit = build_circuit(4, 8)
    theta_a, _ = init_params(circuit, 7)
    assert theta_a.min() >= -np.pi and theta_a.max() < np.pi
    assert np.array_equal(theta_a, init_params(circuit, 7)[0])


def test_ring_ansatz_layer_pairs():
    assert AnsatzLayer(2).pairs == ((0, 1),)
    assert AnsatzLayer(3).pairs == ((0, 1), (1, 2), (2, 0))


def test_parameter_counts():
    assert build_circuit(4, 4).num_theta_a == 32
    assert build_circuit(4, 4, feature_map="trainable").num_theta_f == 4
    fig = build_circuit(6, 10, rotations=("X", "Y", "Z"), entangler="analog_zz_ring", layout="reupload",
                        feature_map="trainable", num_features=3, registers="split")
    assert fig.num_theta_a == 180
    assert fig.num_theta_f == 6
    assert fig.trainable_encoding_count == 12


def test_reupload_shares_theta_f():
    circuit = build_circuit(3, 3, feature_map="trainable", layout="reupload")
    blocks = circuit.encoding_blocks
    assert len(blocks) == 2 and blocks[0].theta_f_slice == blocks[1].theta_f_slice


def test_inconsistent_sharing_rejected():
    a = EncodingBlock((1.0,), (0,), theta_f_slice=(0,))
    b = EncodingBlock((1.0,), (1,), theta_f_slice=(0,))
    with pytest.raises(ConfigError):
        Circuit(2, 1, (a, b), 0, 1)


LAYOUTS = [
    dict(),
    dict(feature_map="tower"),
    dict(feature_map="exponential", entangler="analog_zz_ring"),
    dict(feature_map="trainable", layout="reupload"),
    dict(feature_map="trainable", layout="serial", num_features=2),
    dict(layout="reupload", num_features=2, registers="split"),
    dict(rotations=("X", "Y", "Z"), entangler="analog_zz_ring", phi_scale=0.7),
]


@pytest.mark.parametrize("kwargs", LAYOUTS)
def test_forward_matches_dense_oracle(kwargs, rng):
    model = build_model(3, 3, seed=int(rng.integers(1000)), **kwargs)
    if model.circuit.num_theta_f:
        model = model.with_params(theta_f=rng.uniform(0.5, 1.5, model.circuit.num_theta_f))
    for _ in range(5):
        x = rng.uniform(-3, 3, model.num_features)
        assert forward(model, x) == pytest.approx(dense_forward(model, x), abs=1e-12)


def test_forward_batch_matches_pointwise(rng):
    model = build_model(3, 2, seed=1)
    xs = rng.uniform(-5, 5, 7)
    assert np.allclose(forward_batch(model, xs), [forward(model, x) for x in xs], atol=1e-14)


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 10_000), st.floats(-10, 10))
def test_tf_reduces_to_ff_at_unit_theta(seed, x):
    ff = build_model(3, 2, seed=seed, feature_map="simple")
    tf = build_model(3, 2, seed=seed, feature_map="trainable")
    assert np.array_equal(ff.theta_a, tf.theta_a)
    assert abs(forward(tf, x) - forward(ff, x)) < 1e-12


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 10_000), st.floats(-5, 5), st.floats(0.1, 3))
def test_global_scale_equivalence(seed, x, s):
    scaled = build_model(2, 2, seed=seed, phi_scale=s)
    plain = build_model(2, 2, seed=seed)
    # the angle is computed as gamma * s * x in both cases
    assert forward(scaled, x) == forward(plain, s * x)


def test_reupload_theta_f_moves_both_occurrences():
    model = build_model(2, 3, feature_map="trainable", layout="reupload")
    xs = np.array([[0.8]])
    a0, _ = model.circuit.angles(model.theta_a, model.theta_f, xs)
    bumped = model.with_params(theta_f=model.theta_f + np.array([0.1, 0.0]))
    a1, _ = bumped.circuit.angles(bumped.theta_a, bumped.theta_f, xs)
    occ = model.circuit.occurrences
    moved = np.flatnonzero(np.abs(a1 - a0)[0] > 0)
    assert len(moved) == 2 and all(occ.is_encoding[moved]) and all(occ.param[moved] == 0)


def test_model_is_immutable():
    model = build_model(2, 1)
    with pytest.raises(ValueError):
        model.theta_a[0] = 1.0
