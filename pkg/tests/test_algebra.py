import numpy as np
import pytest
from hypothesis import given, strategies as st

from normnet.algebra import (
    affine_network,
    compose,
    compose_affine,
    concat,
    identity_network,
    lincomb,
    lincomb_many,
    pad,
)
from normnet.network import (
    DimensionError,
    Layer,
    check_norm_constraint,
    evaluate,
    make_network,
    measure_lipschitz_empirical,
)


def random_net(g, d, out, depth, width=3, tag="relu"):
    layers = []
    m = d
    for _ in range(depth):
        A = g.normal(size=(width, m))
        A /= np.sum(np.abs(A), axis=1, keepdims=True) * g.uniform(0.5, 2.0)
        layers.append(Layer(A, g.normal(size=width) * 0.1, (tag,) * width))
        m = width
    layers.append(Layer(g.normal(size=(out, m)), g.normal(size=out) * 0.1, ("identity",) * out))
    return make_network(d, layers)


nets = st.tuples(st.integers(0, 10**6), st.integers(1, 3), st.integers(1, 3))


@given(nets)
def test_pad_preserves_function(spec):
    seed, d, depth = spec
    g = np.random.default_rng(seed)
    net = random_net(g, d, 1, depth)
    p = pad(net, net.cert.W + 2, net.cert.L + 2)
    x = g.uniform(-1, 1, size=(30, d))
    np.testing.assert_allclose(evaluate(p, x), evaluate(net, x), rtol=1e-12, atol=1e-12)
    assert p.cert.K == net.cert.K
    assert p.cert.L == net.cert.L + 2


def test_pad_cannot_shrink():
    net = identity_network(1, 2)
    with pytest.raises(ValueError):
        pad(net, 1, 1)


@given(nets)
def test_compose_function_and_cert(spec):
    seed, d, depth = spec
    g = np.random.default_rng(seed)
    inner = random_net(g, d, 2, depth)
    outer = random_net(g, 2, 1, depth)
    c = compose(outer, inner)
    x = g.uniform(-1, 1, size=(30, d))
    np.testing.assert_allclose(evaluate(c, x), evaluate(outer, evaluate(inner, x)),
                               rtol=1e-12, atol=1e-12)
    assert c.cert.K == pytest.approx(inner.cert.K * outer.cert.K)
    assert c.cert.L == inner.cert.L + outer.cert.L
    assert c.depth == inner.depth + outer.depth


def test_compose_dimension_check():
    with pytest.raises(DimensionError):
        compose(identity_network(3), identity_network(2))


def test_compose_affine():
    net = identity_network(2, 1)
    A = np.array([[1.0, 2.0, 0.0], [0.0, -1.0, 1.0]])
    b = np.array([0.5, 0.0])
    c = compose_affine(net, A, b)
    x = np.array([[0.1, 0.2, 0.3]])
    np.testing.assert_allclose(evaluate(c, x), x @ A.T + b)
    assert c.cert.K == pytest.approx(3.5)


@given(nets)
def test_concat_stacks_outputs(spec):
    seed, d, depth = spec
    g = np.random.default_rng(seed)
    a = random_net(g, d, 1, depth)
    b = random_net(g, d, 2, depth + 1)
    c = concat(a, b)
    x = g.uniform(-1, 1, size=(25, d))
    np.testing.assert_allclose(evaluate(c, x), np.hstack([evaluate(a, x), evaluate(b, x)]),
                               rtol=1e-12, atol=1e-12)
    assert c.cert.W >= a.cert.W + b.cert.W
    assert c.cert.K == max(a.cert.K, b.cert.K)


@given(nets, st.floats(-2, 2), st.floats(-2, 2))
def test_lincomb(spec, c1, c2):
    seed, d, depth = spec
    g = np.random.default_rng(seed)
    a = random_net(g, d, 1, depth)
    b = random_net(g, d, 1, 1)
    n = lincomb(c1, a, c2, b)
    x = g.uniform(-1, 1, size=(25, d))
    np.testing.assert_allclose(evaluate(n, x), c1 * evaluate(a, x) + c2 * evaluate(b, x),
                               rtol=1e-10, atol=1e-10)
    want = abs(c1) * a.cert.K + abs(c2) * b.cert.K
    if n.cert.I:
        want = max(want, 1.0)
    assert n.cert.K == pytest.approx(max(want, 1e-300))


def test_lincomb_many_matches_fold():
    g = np.random.default_rng(3)
    ns = [random_net(g, 2, 1, k) for k in (1, 2, 3)]
    cs = [0.5, -1.0, 2.0]
    big = lincomb_many(cs, ns)
    x = g.uniform(-1, 1, size=(40, 2))
    want = sum(c * evaluate(n, x) for c, n in zip(cs, ns))
    np.testing.assert_allclose(evaluate(big, x), want, rtol=1e-12, atol=1e-12)


@given(st.integers(0, 10**6))
def test_lipschitz_audit_of_algebra(seed):
    # the propagated K bounds the sup-norm Lipschitz constant for 1-Lipschitz activations
    g = np.random.default_rng(seed)
    a = random_net(g, 2, 1, 2)
    b = random_net(g, 2, 1, 1)
    for net in (concat(a, b), lincomb(1.5, a, -0.5, b), compose(random_net(g, 2, 1, 1), concat(a, b))):
        # per-layer membership of I always holds; the product over I may exceed
        # max(K1, K2) after concat, which is why the audit is on the Lipschitz constant
        assert not check_norm_constraint(net).offending
        assert measure_lipschitz_empirical(net, 2000, seed=seed) <= net.cert.K + 1e-9


def test_affine_network():
    n = affine_network([[2.0, 0.0]], [1.0])
    assert evaluate(n, np.array([1.0, 5.0]))[0] == 3.0
    assert n.cert.K == 3.0
