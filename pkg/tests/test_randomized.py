import math
import warnings

import numpy as np
import pytest

from normnet import randomized as rnd
from normnet.deterministic import LiprBuildParams, PreconditionError
from normnet.experiments import lipr_default_target
from normnet.network import check_norm_constraint, evaluate, serialize


def test_eps0_formula():
    c = rnd.square_constants(100, 1.0, 1.0, 1.0)
    assert c.eps0 == pytest.approx(0.02)
    b = rnd.bilinear_constants(100, 1.0, 1.0, 1.0)
    assert b.eps0 == pytest.approx(0.16)


def test_seed_reproducibility():
    a = rnd.build_random_square(50, 1.0, "silu", rnd.RngSpec(7, 3))
    b = rnd.build_random_square(50, 1.0, "silu", rnd.RngSpec(7, 3))
    c = rnd.build_random_square(50, 1.0, "silu", rnd.RngSpec(7, 4))
    assert serialize(a.network) == serialize(b.network)
    assert serialize(a.network) != serialize(c.network)


def test_square_cert_and_range():
    net, consts = rnd.build_random_square(64, 1.0, "silu", rnd.RngSpec(1))
    assert net.cert.K == pytest.approx(2 * 64 / 0.25)
    assert check_norm_constraint(net).ok
    y = evaluate(net, np.linspace(-3, 3, 101))
    assert np.all((0 <= y) & (y <= 1))


def test_mc_square_matches_network():
    k, seed = 40, 5
    V = rnd.mc_square(k, 1.0, "silu", [0.3, 0.8], 4, seed)
    for t in range(4):
        rep = rnd.build_random_square(k, 1.0, "silu", rnd.RngSpec(seed, t))
        np.testing.assert_allclose(evaluate(rep.unclipped, np.array([0.3, 0.8]))[:, 0], V[t],
                                   rtol=1e-12)


def test_product2_zero_input():
    net, _ = rnd.build_random_product2(20, 1.0, "silu", rnd.RngSpec(0))
    assert evaluate(net, np.zeros(2))[0] == 0.0


def test_product2_below_k0():
    with pytest.raises(PreconditionError):
        rnd.build_random_product2(3, 1.0, "silu", rnd.RngSpec(0))


def test_product2_mean_within_bias():
    k = 200
    V = rnd.mc_product2(k, 1.0, "silu", [(0.5, -0.5)], 4000, 11)[:, 0]
    eps0 = rnd.bilinear_constants(k, 1.0, 0.022, 0.25).eps0
    assert abs(V.mean() + 0.25) <= eps0 + 3 * V.std(ddof=1) / math.sqrt(len(V))


def test_product_d_tree():
    rep = rnd.build_random_product_d(4, 64, 1.0, "silu", rnd.RngSpec(2, 9))
    x = np.array([0.9, 0.8, 0.7, 0.6])
    direct = rnd.mc_product_d(4, 64, 1.0, "silu", x, 10, 2)
    # stream 9 of the builder is trial 9 of the harness
    assert evaluate(rep.network, x)[0] == pytest.approx(direct[9], abs=1e-12)
    assert rep.network.cert.L == 4


def test_product_d_one_is_identity():
    pred, vac = rnd.product_d_success_bound(0.1, 1, 100, rnd.bilinear_constants(100, 1, 0.022, 0.25))
    assert pred == 1.0 and not vac


def test_product_d_vacuous_warning():
    c = rnd.bilinear_constants(100, 1.0, 0.022, 0.25)
    with pytest.warns(rnd.VacuousBoundWarning):
        rnd.product_d_success_bound(c.eps0, 4, 100, c)


def test_vacuous_transition():
    c = rnd.square_constants(1000, 1.0, 0.022, 0.25)
    low, vac_low = rnd.square_success_bound(0.5 * c.eps0, 1000, c)
    high, vac_high = rnd.square_success_bound(0.5, 1000, c)
    assert vac_low and not vac_high and high > 0.99


def test_lipr_constants_and_zero_target():
    c = rnd.lipr_random_constants(2, 100, 1.0, 0.022, 0.25)
    assert c.F == pytest.approx(math.e ** 2)
    f = lipr_default_target(1, 0).__class__(lambda x: np.zeros(len(x)), 1,
                                            derivative=lambda s, x: np.zeros(len(x)))
    rep = rnd.build_random_lipr(LiprBuildParams(1, 0, 1.0, 1.0, 16, f), rnd.RngSpec(0))
    assert np.all(rep.network(np.linspace(0, 1, 20)) == 0)


def test_theorem2_limits():
    big = rnd.uniform_success_bound(1e6, 1e9, 2, 0, 1.0, 1.0, 1e3, "silu")["value"]
    zero = rnd.uniform_success_bound(1e6, 1e9, 2, 0, 1.0, 1.0, 0.0, "silu")["value"]
    assert big == pytest.approx(1.0)
    assert zero == 0.0


def test_success_record_dominance():
    rec = rnd.SuccessRecord(1000, 0.1, 0.90, 0.91)
    assert rec.dominated
    rec = rnd.SuccessRecord(1000, 0.1, 0.80, 0.91)
    assert not rec.dominated
