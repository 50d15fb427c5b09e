"""Random-weight approximators and their concentration guarantees.

Inner weights are ``w_i = k^(-alpha/2) sqrt(U_i)`` with ``U_i`` uniform on
[0, 1).  Averaging ``k`` symmetric neuron groups gives an unbiased estimate of
the quadratic (or bilinear) term up to the Taylor remainder, and a Bernstein
inequality controls the fluctuation.

Each weight draw is keyed by an :class:`RngSpec` (seed, stream) on a Philox
counter-based generator, so individual Monte Carlo trials can be reproduced
in isolation.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .activations import ActivationEntry, AssumptionViolatedError, get_activation
from .algebra import compose, concat, identity_network
from .deterministic import (
    CertifiedApproximator,
    InfeasibleError,
    LiprBuildParams,
    PreconditionError,
    _chain,
    _tree_depth,
    build_lipr,
    k0_product,
    k0_square,
    product_tree_levels,
)
from .network import ArchitectureCert, Layer, Network, constrained_set, evaluate

__all__ = [
    "RngSpec",
    "BernsteinConstants",
    "SuccessRecord",
    "RandomBuildReport",
    "draw_weights",
    "square_constants",
    "bilinear_constants",
    "lipr_random_constants",
    "build_random_square",
    "build_random_product2",
    "build_random_product_d",
    "build_random_lipr",
    "square_success_bound",
    "product2_success_bound",
    "product_d_success_bound",
    "lipr_success_bound",
    "uniform_success_bound",
    "mc_square",
    "mc_product2",
    "mc_product_d",
    "square_neuron_terms",
    "product2_group_terms",
    "success_record",
    "VacuousBoundWarning",
]


class VacuousBoundWarning(UserWarning):
    pass


@dataclass(frozen=True)
class RngSpec:
    seed: int
    stream_id: int = 0

    def generator(self, *sub: int) -> np.random.Generator:
        key = (int(self.stream_id),) + tuple(int(s) for s in sub)
        ss = np.random.SeedSequence(int(self.seed) & (2**64 - 1), spawn_key=key)
        return np.random.Generator(np.random.Philox(ss))


def draw_weights(k: int, alpha: float, gen: np.random.Generator) -> np.ndarray:
    """k inner weights k^(-alpha/2) sqrt(U_i)."""
    return k ** (-alpha / 2.0) * np.sqrt(gen.random(int(k)))


def _taylor(activation) -> tuple[ActivationEntry, object]:
    entry = activation if isinstance(activation, ActivationEntry) else get_activation(activation)
    if entry.taylor is None:
        raise AssumptionViolatedError(f"{entry.tag!r} carries no Taylor metadata")
    return entry, entry.taylor


@dataclass(frozen=True)
class BernsteinConstants:
    """Bias threshold ``eps0`` and rate constant ``C_or_B``.

    ``var_bound`` is the per-neuron variance bound used inside the Bernstein
    step; ``F`` and ``G`` are only set for the Lip_r construction.  ``M`` and
    ``a2`` record the activation constants the values were computed from.
    """

    eps0: float
    C_or_B: float
    var_bound: float
    M: float
    a2: float
    F: Optional[float] = None
    G: Optional[float] = None


def square_constants(k: float, alpha: float, M: float, a2: float) -> BernsteinConstants:
    t = M * k ** (-alpha) / abs(a2)
    var = 1.0 / 3.0 + 4.0 * t * t
    C = 2.0 * var + (2.0 / 3.0) * (1.0 + 6.0 * t) ** 2
    return BernsteinConstants(2.0 * t, C, var, M, a2)


def bilinear_constants(k: float, alpha: float, M: float, a2: float) -> BernsteinConstants:
    t = M * k ** (-alpha) / abs(a2)
    var = 1.0 / 3.0 + 256.0 * t * t
    B = 2.0 * var + (2.0 / 3.0) * (1.0 + 48.0 * t) ** 2
    return BernsteinConstants(16.0 * t, B, var, M, a2)


def lipr_random_constants(d: int, k: float, alpha: float, M: float, a2: float) -> BernsteinConstants:
    base = bilinear_constants(k, alpha, M, a2)
    D = _tree_depth(d)
    F = (2 ** D - 1) * math.e ** d
    G = math.e ** d * (1.0 + 16.0 * M * (2 ** D - 1) / abs(a2))
    return BernsteinConstants(base.eps0, base.C_or_B, base.var_bound, M, a2, F, G)


@dataclass
class RandomBuildReport:
    """Random network with its constants; unpacks as (network, constants)."""

    network: object
    constants: BernsteinConstants
    rng: RngSpec
    unclipped: Optional[Network] = None
    weights: object = None
    info: dict = field(default_factory=dict)

    def __iter__(self):
        return iter((self.network, self.constants))

    @property
    def cert(self) -> ArchitectureCert:
        return self.network.cert


# ---------------------------------------------------------------------------
# square (symmetric pairs)


def _random_square_net(w: np.ndarray, c: float, tag: str, clip: bool) -> Network:
    k = len(w)
    W0 = np.empty((2 * k, 1))
    W0[0::2, 0] = w
    W0[1::2, 0] = -w
    l0 = Layer(W0, np.zeros(2 * k), (tag,) * (2 * k))
    l1 = Layer(np.full((1, 2 * k), c), [0.0], ("clip01" if clip else "identity",))
    l2 = Layer([[1.0]], [0.0], ("identity",))
    layers = (l0, l1, l2)
    K = 2.0 * k * abs(c)
    I = constrained_set(layers)
    return Network(1, layers, ArchitectureCert(W=2 * k, L=2, K=max(K, 1.0) if I else K,
                                               I=I, output_dim=1))


def build_random_square(k: int, alpha: float, activation, rng: RngSpec) -> RandomBuildReport:
    """x^2 on [0, 1] from 2k neurons, K = 2 k^alpha / |a2|."""
    entry, spec = _taylor(activation)
    k = int(k)
    if k < k0_square(entry, alpha) * (1 - 1e-12):
        raise PreconditionError(f"k = {k} is below k0 = {k0_square(entry, alpha):.6g}")
    w = draw_weights(k, alpha, rng.generator())
    c = 1.0 / (spec.a2 * k ** (1.0 - alpha))
    consts = square_constants(k, alpha, spec.M, spec.a2)
    return RandomBuildReport(
        _random_square_net(w, c, entry.tag, True), consts, rng,
        unclipped=_random_square_net(w, c, entry.tag, False), weights=w,
        info={"k": k, "alpha": alpha, "tag": entry.tag, "scale": c})


def square_success_bound(eps: float, k: float, consts: BernsteinConstants) -> tuple[float, bool]:
    """1 - 2 exp(-k (eps - eps0)^2 / C); flag is True when the bound is vacuous."""
    val = 1.0 - 2.0 * math.exp(-k * (eps - consts.eps0) ** 2 / consts.C_or_B)
    return val, bool(eps <= consts.eps0 or val <= 0)


def square_neuron_terms(k: int, alpha: float, activation, x: float, rng: RngSpec) -> np.ndarray:
    """Per-neuron terms (sigma(w x) + sigma(-w x)) / (a2 k^-alpha); their variance is bounded."""
    entry, spec = _taylor(activation)
    w = draw_weights(k, alpha, rng.generator())
    s = entry(w * x) + entry(-w * x)
    return s / (spec.a2 * k ** (-alpha))


def mc_square(k: int, alpha: float, activation, points: Sequence[float], trials: int,
              seed: int, clip: bool = False, chunk: int = 256) -> np.ndarray:
    """Phi(x) for trials t = 0..trials-1 (stream id t), shape (trials, len(points))."""
    entry, spec = _taylor(activation)
    pts = np.asarray(points, float)
    c = 1.0 / (spec.a2 * k ** (1.0 - alpha))
    out = np.empty((trials, len(pts)))
    for s in range(0, trials, chunk):
        n = min(chunk, trials - s)
        W = np.stack([draw_weights(k, alpha, RngSpec(seed, s + t).generator()) for t in range(n)])
        z = W[:, :, None] * pts[None, None, :]
        val = c * np.sum(entry(z) + entry(-z), axis=1)
        out[s:s + n] = np.clip(val, 0.0, 1.0) if clip else val
    return out


# ---------------------------------------------------------------------------
# bilinear blocks

_BIL_SIGNS = np.array([[1, 1], [1, -1], [-1, -1], [-1, 1]], float)
_BIL_OUT = np.array([1, -1, 1, -1], float)


def _random_bilinear_net(w: np.ndarray, c: float, tag: str, clip: bool) -> Network:
    k = len(w)
    W0 = (w[:, None, None] * _BIL_SIGNS[None, :, :]).reshape(4 * k, 2)
    l0 = Layer(W0, np.zeros(4 * k), (tag,) * (4 * k))
    l1 = Layer((c * np.tile(_BIL_OUT, k))[None, :], [0.0],
               ("clip11" if clip else "identity",))
    l2 = Layer([[1.0]], [0.0], ("identity",))
    layers = (l0, l1, l2)
    K = 4.0 * k * abs(c)
    I = constrained_set(layers)
    return Network(2, layers, ArchitectureCert(W=4 * k, L=2, K=max(K, 1.0) if I else K,
                                               I=I, output_dim=1))


def _bil_scale(spec, k: int, alpha: float) -> float:
    return 1.0 / (4.0 * spec.a2 * k ** (1.0 - alpha))


def _check_k_product(entry, k, alpha):
    if k < k0_product(entry, alpha) * (1 - 1e-12):
        raise PreconditionError(f"k = {k} is below k0 = {k0_product(entry, alpha):.6g}")


def build_random_product2(k: int, alpha: float, activation, rng: RngSpec,
                          sub: tuple = ()) -> RandomBuildReport:
    """xy on [-1, 1]^2 from k bilinear groups of 4 neurons, K = k^alpha / |a2|."""
    entry, spec = _taylor(activation)
    k = int(k)
    _check_k_product(entry, k, alpha)
    w = draw_weights(k, alpha, rng.generator(*sub))
    c = _bil_scale(spec, k, alpha)
    return RandomBuildReport(
        _random_bilinear_net(w, c, entry.tag, True), bilinear_constants(k, alpha, spec.M, spec.a2),
        rng, unclipped=_random_bilinear_net(w, c, entry.tag, False), weights=w,
        info={"k": k, "alpha": alpha, "tag": entry.tag, "scale": c})


def product2_success_bound(eps: float, k: float, consts: BernsteinConstants) -> tuple[float, bool]:
    val = 1.0 - 2.0 * math.exp(-k * (eps - consts.eps0) ** 2 / consts.C_or_B)
    return val, bool(eps <= consts.eps0 or val <= 0)


def _bil_eval(entry, W: np.ndarray, c: float, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Unclipped bilinear estimate for weights W (T, k) at per-trial inputs x, y (T,)."""
    a = W * x[:, None]
    b = W * y[:, None]
    s = entry(a + b) - entry(a - b) + entry(-a - b) - entry(-a + b)
    return c * np.sum(s, axis=1)


def product2_group_terms(k: int, alpha: float, activation, x: float, y: float,
                         rng: RngSpec) -> np.ndarray:
    """Per-group terms S_bil(w_j; x, y) / (4 a2 k^-alpha); their mean is close to xy."""
    entry, spec = _taylor(activation)
    w = draw_weights(k, alpha, rng.generator())
    a, b = w * x, w * y
    s = entry(a + b) - entry(a - b) + entry(-a - b) - entry(-a + b)
    return s / (4.0 * spec.a2 * k ** (-alpha))


def mc_product2(k: int, alpha: float, activation, points: Sequence[Sequence[float]],
                trials: int, seed: int, clip: bool = False, chunk: int = 256) -> np.ndarray:
    entry, spec = _taylor(activation)
    pts = np.asarray(points, float).reshape(-1, 2)
    c = _bil_scale(spec, k, alpha)
    out = np.empty((trials, len(pts)))
    for s in range(0, trials, chunk):
        n = min(chunk, trials - s)
        W = np.stack([draw_weights(k, alpha, RngSpec(seed, s + t).generator()) for t in range(n)])
        for p, (x, y) in enumerate(pts):
            v = _bil_eval(entry, W, c, np.full(n, x), np.full(n, y))
            out[s:s + n, p] = np.clip(v, -1.0, 1.0) if clip else v
    return out


# ---------------------------------------------------------------------------
# product trees


def build_random_product_d(d: int, k: int, alpha: float, activation,
                           rng: RngSpec) -> RandomBuildReport:
    """Binary tree of independent random bilinear blocks; block (l, j) uses substream (l, j)."""
    entry, spec = _taylor(activation)
    if d < 1:
        raise PreconditionError("d must be >= 1")
    k = int(k)
    consts = bilinear_constants(k, alpha, spec.M, spec.a2)
    D = _tree_depth(d)
    if d == 1:
        return RandomBuildReport(identity_network(1, 0), consts, rng,
                                 info={"levels": [], "depth_levels": 0, "k": k})
    _check_k_product(entry, k, alpha)
    c = _bil_scale(spec, k, alpha)
    weights = {}

    def make_block(l, j):
        w = draw_weights(k, alpha, rng.generator(l, j))
        weights[(l, j)] = w
        return _random_bilinear_net(w, c, entry.tag, True)

    levels = product_tree_levels(d, make_block)
    net = _chain(levels, d)
    K = (4.0 * k * abs(c)) ** D
    cert = net.cert.replace(W=max(4 * k * math.ceil(d / 2), net.hidden_width), L=2 * D,
                            K=max(K, 1.0) if net.cert.I else K)
    net = Network(d, net.layers, cert)
    return RandomBuildReport(net, consts, rng, weights=weights,
                             info={"levels": levels, "depth_levels": D, "k": k,
                                   "alpha": alpha, "tag": entry.tag, "scale": c})


def product_d_success_bound(eps: float, d: int, k: float,
                            consts: BernsteinConstants) -> tuple[float, bool]:
    """(1 - 2 exp(-k (eps_d - eps0)^2 / B))^D with eps_d = eps / (2^D - 1)."""
    D = _tree_depth(d)
    if D == 0:
        return 1.0, False
    eps_d = eps / (2 ** D - 1)
    vacuous = eps_d <= consts.eps0
    if vacuous:
        warnings.warn(f"eps_d = {eps_d:.3g} <= eps0 = {consts.eps0:.3g}: bound is vacuous",
                      VacuousBoundWarning, stacklevel=2)
    base = 1.0 - 2.0 * math.exp(-k * (eps_d - consts.eps0) ** 2 / consts.C_or_B)
    val = base ** D if base > 0 else base
    return val, bool(vacuous or base <= 0)


def mc_product_d(d: int, k: int, alpha: float, activation, point: Sequence[float],
                 trials: int, seed: int, chunk: int = 128) -> np.ndarray:
    """Tree output at one point for trials t (stream id t), same draws as the builder."""
    entry, spec = _taylor(activation)
    c = _bil_scale(spec, k, alpha)
    x0 = np.asarray(point, float)
    out = np.empty(trials)
    for s in range(0, trials, chunk):
        n = min(chunk, trials - s)
        vals = np.tile(x0, (n, 1))
        l = 0
        while vals.shape[1] > 1:
            m = vals.shape[1]
            nxt = []
            for j in range(m // 2):
                W = np.stack([draw_weights(k, alpha, RngSpec(seed, s + t).generator(l, j))
                              for t in range(n)])
                v = _bil_eval(entry, W, c, vals[:, 2 * j], vals[:, 2 * j + 1])
                nxt.append(np.clip(v, -1.0, 1.0))
            if m % 2:
                nxt.append(vals[:, -1])
            vals = np.stack(nxt, axis=1)
            l += 1
        out[s:s + n] = vals[:, 0]
    return out


# ---------------------------------------------------------------------------
# Lip_r


def build_random_lipr(params: LiprBuildParams, rng: RngSpec) -> RandomBuildReport:
    """Lip_r glue with one random monomial network per multi-index, shared by all cubes.

    Block (l, j) of the monomial tree for the i-th multi-index uses substream
    (i, l, j).  The declared certificate follows the random-block norms.
    """
    entry, spec = _taylor(params.activation)
    k = int(params.k)
    c = _bil_scale(spec, k, params.alpha)
    from .deterministic import multi_indices
    index = {s: i for i, s in enumerate(multi_indices(params.d, params.m))}

    def factory(s, l, j):
        w = draw_weights(k, params.alpha, rng.generator(index[s], l, j))
        return _random_bilinear_net(w, c, entry.tag, True)

    approx = build_lipr(params, block_factory=factory)
    consts = lipr_random_constants(params.d, k, params.alpha, spec.M, spec.a2)
    comp = approx.network
    D = _tree_depth(params.d)
    n_mono = math.comb(params.m + params.d, params.d)
    cube_factor = k ** (params.d * params.gamma)
    cert = ArchitectureCert(
        W=max(1, int(math.ceil(4 * k * math.ceil(params.d / 2) * n_mono * cube_factor - 1e-9))),
        L=2 * D,
        K=max(1.0, n_mono * abs(spec.a2) ** (-D) * k ** (params.alpha * D) * cube_factor),
        I=frozenset(), output_dim=1)
    comp.cert = cert
    approx.info["declared_cert"] = cert
    return RandomBuildReport(comp, consts, rng, info={"approx": approx, "k": k,
                                                      "n_monomials": n_mono, "D": D})


def lipr_success_bound(eps: float, d: int, m: int, k: float,
                       consts: BernsteinConstants) -> tuple[float, bool]:
    """(1 - 2 exp(-k eps^2 / B))^(D C(m+d, d)) for the event |f - phi| <= F eps + G k^-alpha."""
    D = _tree_depth(d)
    expo = D * math.comb(m + d, d)
    if expo == 0:
        return 1.0, False
    base = 1.0 - 2.0 * math.exp(-k * eps * eps / consts.C_or_B)
    if base <= 0:
        return base, True
    return base ** expo, False


# ---------------------------------------------------------------------------
# whole-construction calculator


def uniform_success_bound(W: float, K: float, d: int, m: int, beta: float, alpha: float,
                   eps: float, activation) -> dict:
    """Lower bound 1 - C2 exp(-C3 K eps^2) on the success probability, clamped to [0, 1].

    C2 = 2 D C(m+d, d).  C3 = 1 / (C_K F^2 B(k0)) where C_K = C(m+d, d) |a2|^-D,
    F = (2^D - 1) e^d and B(k0) is the bilinear rate constant at the smallest
    admissible k (B decreases in k).  This uses k >= K / C_K for the selected k.
    """
    entry, spec = _taylor(activation)
    r = m + beta
    D = _tree_depth(d)
    n_mono = math.comb(m + d, d)
    k0 = math.ceil(k0_product(entry, alpha) - 1e-9)
    c1 = 4 * k0 * math.ceil(d / 2) * n_mono * k0 ** (d * alpha / r)
    c2 = k0 ** (alpha * D) / (4 * math.ceil(d / 2) * abs(spec.a2) ** D)
    if W < c1 * (1 - 1e-9) or K < c2 * W * (1 - 1e-9):
        raise InfeasibleError("(W, K) below the feasibility threshold", c1, c2)
    consts = lipr_random_constants(d, k0, alpha, spec.M, spec.a2)
    C2 = 2 * D * n_mono
    C_K = n_mono * abs(spec.a2) ** (-D)
    F = consts.F
    if C2 == 0 or F == 0:
        return {"value": 1.0, "raw": 1.0, "C2": float(C2), "C3": math.inf, "c1": c1,
                "c2": c2, "vacuous": False, "B_k0": consts.C_or_B, "F": F}
    C3 = 1.0 / (C_K * F * F * consts.C_or_B)
    raw = 1.0 - C2 * math.exp(-C3 * K * eps * eps)
    return {"value": min(1.0, max(0.0, raw)), "raw": raw, "C2": float(C2), "C3": C3,
            "c1": c1, "c2": c2, "vacuous": raw <= 0, "B_k0": consts.C_or_B, "F": F}


# ---------------------------------------------------------------------------
# success bookkeeping


@dataclass(frozen=True)
class SuccessRecord:
    trials: int
    eps: float
    empirical_freq: float
    predicted_lower: float
    vacuous: bool = False
    point: tuple = ()

    @property
    def sigma(self) -> float:
        p = min(max(self.empirical_freq, 0.0), 1.0)
        return math.sqrt(max(p * (1 - p), 0.0) / self.trials)

    @property
    def margin(self) -> float:
        """freq - predicted, in units of binomial standard deviations (inf if sigma = 0)."""
        gap = self.empirical_freq - self.predicted_lower
        s = self.sigma
        if s == 0:
            return math.inf if gap >= 0 else -math.inf
        return gap / s

    @property
    def dominated(self) -> bool:
        """True when the bound holds up to three binomial standard deviations."""
        p = self.predicted_lower
        s = max(self.sigma, math.sqrt(max(p * (1 - p), 0.0) / self.trials))
        return self.empirical_freq >= p - 3.0 * s


def success_record(errors: np.ndarray, eps: float, predicted: float, vacuous: bool,
                   point=()) -> SuccessRecord:
    errors = np.asarray(errors, float)
    freq = float(np.mean(errors <= eps))
    return SuccessRecord(int(errors.size), float(eps), freq, float(predicted), vacuous,
                         tuple(np.atleast_1d(point).tolist()))
