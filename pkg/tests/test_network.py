import json

import numpy as np
import pytest
from hypothesis import given, strategies as st

from normnet.network import (
    ArchitectureCert,
    DimensionError,
    EvalGrid,
    Layer,
    Network,
    NonFiniteError,
    ParseError,
    augment,
    check_norm_constraint,
    default_grid,
    deserialize,
    eval_augmented,
    evaluate,
    make_network,
    measure_lipschitz_empirical,
    network_from_dict,
    network_to_dict,
    op_norm_inf,
    serialize,
    sup_error,
)


def small_net():
    l0 = Layer([[0.5, -0.25], [0.1, 0.2]], [0.1, -0.2], ("relu", "silu"))
    l1 = Layer([[2.0, -1.0]], [0.5], ("identity",))
    return make_network(2, [l0, l1])


def test_op_norm_is_max_row_sum():
    assert op_norm_inf([[1, -2], [0.5, 0.5]]) == 3.0


def test_evaluate_single_and_batch():
    net = small_net()
    x = np.array([0.3, -0.7])
    single = evaluate(net, x)
    batch = evaluate(net, np.stack([x, x]))
    assert single.shape == (1,)
    assert batch.shape == (2, 1)
    np.testing.assert_array_equal(batch[0], single)


def test_dimension_mismatch():
    with pytest.raises(DimensionError):
        evaluate(small_net(), np.zeros(3))


def test_non_finite_input():
    with pytest.raises(NonFiniteError):
        evaluate(small_net(), np.array([np.nan, 0.0]))


def test_output_layer_must_be_identity():
    l0 = Layer([[1.0]], [0.0], ("relu",))
    with pytest.raises(ValueError):
        Network(1, (l0,), ArchitectureCert(W=1, L=0, K=1.0, I=frozenset({0}), output_dim=1))


def test_layers_are_read_only():
    net = small_net()
    with pytest.raises(ValueError):
        net.layers[0].weights[0, 0] = 1.0


def test_norm_constraint_report():
    net = small_net()
    rep = check_norm_constraint(net)
    assert rep.ok
    assert rep.norms[1] == pytest.approx(3.5)
    bad = Network(2, net.layers, net.cert.replace(I=frozenset()))
    rep = check_norm_constraint(bad)
    assert not rep.ok and rep.offending == [1]


@given(st.integers(1, 4), st.integers(1, 3), st.integers(0, 10**6))
def test_augment_matches_affine_form(d, depth, seed):
    g = np.random.default_rng(seed)
    layers = []
    m = d
    for _ in range(depth):
        A = g.normal(size=(3, m))
        layers.append(Layer(A, g.normal(size=3), ("relu",) * 3))
        m = 3
    layers.append(Layer(g.normal(size=(1, m)), g.normal(size=1), ("identity",)))
    net = make_network(d, layers)
    aug = augment(net)
    assert aug.is_bias_free
    x = g.uniform(-1, 1, size=(20, d))
    np.testing.assert_allclose(eval_augmented(aug, x), evaluate(net, x), rtol=1e-12, atol=1e-12)
    assert aug.cert.K >= net.cert.K - 1e-12


def test_grid_chunks_cover_points():
    g = EvalGrid((0.0, -1.0), (1.0, 1.0), 7)
    pts = np.concatenate(list(g.chunks(10)))
    np.testing.assert_array_equal(pts, g.points())


def test_default_grid_sizes():
    assert default_grid(1).size == 10**5 + 1
    assert default_grid(2).size <= 10**6
    assert default_grid(3).size <= 10**6


def test_sup_error_identity():
    l0 = Layer([[1.0]], [0.0], ("identity",))
    net = make_network(1, [l0])
    assert sup_error(lambda x: x[:, 0], net, EvalGrid((0.0,), (1.0,), 101)) == 0.0


def test_lipschitz_of_linear_map():
    l0 = Layer([[2.0, -1.0]], [0.0], ("identity",))
    net = make_network(2, [l0])
    est = measure_lipschitz_empirical(net, 2000, seed=1)
    assert est <= 3.0 + 1e-12
    assert est > 2.0


def test_serialize_round_trip_bytes():
    net = small_net()
    blob = serialize(net)
    back = deserialize(blob)
    assert back == net
    assert serialize(back) == blob


def test_parse_error_reports_path():
    doc = network_to_dict(small_net())
    del doc["layers"][1]["bias"]
    with pytest.raises(ParseError) as exc:
        network_from_dict(doc)
    assert "layers[1]" in str(exc.value)


def test_unknown_activation_in_document():
    doc = network_to_dict(small_net())
    doc["layers"][0]["activations"][0] = "mystery"
    with pytest.raises((ParseError, KeyError)):
        network_from_dict(json.loads(json.dumps(doc)))
