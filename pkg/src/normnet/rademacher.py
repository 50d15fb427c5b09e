"""Rademacher complexity of finite function families and closed-form bounds.

The empirical complexity of a family F on points x_1..x_n is

    R = E_xi max_{f in F} |sum_i xi_i f(x_i)| / n

with xi uniform on {-1, 1}^n.  :func:`rademacher_exact` enumerates all sign
vectors; :func:`rademacher_mc` samples them.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from .activations import ActivationEntry, get_activation
from .network import ArchitectureCert, Layer, Network, constrained_set, evaluate

__all__ = [
    "SamplePanel",
    "FunctionFamily",
    "MCEstimate",
    "PreconditionError",
    "rademacher_exact",
    "rademacher_mc",
    "bound_upper",
    "bound_lower_relu",
    "bound_lower_general",
    "general_lower_terms",
    "build_rad_witness_relu",
    "build_rad_witness_general",
    "random_lipschitz_family",
    "minimax_lower_rate",
    "second_derivative_bound",
    "random_panel",
]

EXACT_MAX_N = 20


class PreconditionError(ValueError):
    pass


@dataclass(frozen=True)
class SamplePanel:
    points: np.ndarray
    B: float
    s_stat: float

    @staticmethod
    def from_points(points, B: float = 1.0) -> "SamplePanel":
        pts = np.array(points, dtype=float, ndmin=2)
        if B < 1:
            raise PreconditionError("B must be >= 1")
        if np.any(np.abs(pts) > B * (1 + 1e-12)):
            raise PreconditionError("panel points must lie in [-B, B]^d")
        pts.setflags(write=False)
        return SamplePanel(pts, float(B), s_statistic(pts))

    @property
    def n(self) -> int:
        return self.points.shape[0]

    @property
    def d(self) -> int:
        return self.points.shape[1]


def s_statistic(points: np.ndarray) -> float:
    """max_j (mean_i x_ij^2)^(1/2)."""
    pts = np.asarray(points, float)
    return float(np.max(np.sqrt(np.mean(pts * pts, axis=0))))


def random_panel(n: int, d: int, rng: np.random.Generator, B: float = 1.0) -> SamplePanel:
    return SamplePanel.from_points(rng.uniform(-B, B, size=(n, d)), B)


class FunctionFamily:
    """Finite list of scalar functions (networks or callables) on R^d."""

    def __init__(self, members: Sequence, input_dim: Optional[int] = None):
        members = list(members)
        if not members:
            raise PreconditionError("a function family needs at least one member")
        dims = {m.input_dim for m in members if hasattr(m, "input_dim")}
        if input_dim is not None:
            dims.add(int(input_dim))
        if len(dims) > 1:
            raise PreconditionError(f"members disagree on the input dim: {sorted(dims)}")
        self.members = members
        self.input_dim = dims.pop() if dims else None

    def __len__(self):
        return len(self.members)

    def values(self, panel: SamplePanel) -> np.ndarray:
        """(|F|, n) matrix of member values at the panel points."""
        rows = []
        for f in self.members:
            v = evaluate(f, panel.points) if isinstance(f, Network) else f(panel.points)
            rows.append(np.asarray(v, float).reshape(-1))
        return np.stack(rows)

    def scaled(self, c: float) -> "FunctionFamily":
        return FunctionFamily([(lambda x, f=f: c * _eval(f, x)) for f in self.members],
                              self.input_dim)


def _eval(f, x):
    return np.asarray(evaluate(f, x) if isinstance(f, Network) else f(x), float).reshape(-1)


def _sign_block(start: int, stop: int, n: int) -> np.ndarray:
    codes = np.arange(start, stop, dtype=np.int64)[:, None]
    bits = (codes >> np.arange(n, dtype=np.int64)[None, :]) & 1
    return 1.0 - 2.0 * bits


def _sup_abs(signs: np.ndarray, V: np.ndarray) -> np.ndarray:
    return np.max(np.abs(signs @ V.T), axis=1)


def rademacher_exact(family, panel: SamplePanel) -> float:
    """Exact expectation over all 2^n sign vectors (n <= 20)."""
    V = family.values(panel) if isinstance(family, FunctionFamily) else np.atleast_2d(family)
    n = V.shape[1]
    if n > EXACT_MAX_N:
        raise PreconditionError(f"n = {n} is too large for enumeration, use rademacher_mc")
    total = 0.0
    count = 2 ** n
    step = 1 << 14
    for s in range(0, count, step):
        total += float(np.sum(_sup_abs(_sign_block(s, min(s + step, count), n), V)))
    return total / count / n


@dataclass(frozen=True)
class MCEstimate:
    mean: float
    stderr: float
    trials: int


def rademacher_mc(family, panel: SamplePanel, trials: int, rng) -> MCEstimate:
    """Sample-mean estimate over ``trials`` random sign vectors."""
    if trials < 100:
        raise PreconditionError("use at least 100 trials")
    V = family.values(panel) if isinstance(family, FunctionFamily) else np.atleast_2d(family)
    n = V.shape[1]
    gen = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
    signs = gen.choice(np.array([-1.0, 1.0]), size=(trials, n))
    vals = _sup_abs(signs, V) / n
    se = float(np.std(vals, ddof=1) / math.sqrt(trials))
    return MCEstimate(float(np.mean(vals)), se, trials)


# ---------------------------------------------------------------------------
# closed forms


def bound_upper(B: float, K: float, n: int, L: int, d: int) -> float:
    """(B K / sqrt n) sqrt(2 (L + 1 + ln d)) for 1-Lipschitz activations."""
    return B * K / math.sqrt(n) * math.sqrt(2.0 * (L + 1 + math.log(d)))


def bound_lower_relu(K: float, alpha_leak: float, s: float, n: int) -> float:
    """(1 / (2 sqrt 2)) (1 - alpha) K s / sqrt n."""
    if not 0 <= alpha_leak < 1:
        raise PreconditionError("leak slope must lie in [0, 1)")
    return (1.0 - alpha_leak) * K * s / (2.0 * math.sqrt(2.0) * math.sqrt(n))


@dataclass(frozen=True)
class GeneralLowerTerms:
    c_star: float
    bound: float
    eps_star: float
    a1: float
    a2: float


def general_lower_terms(sigma_prime0: float, M: float, B: float, K: float, s: float,
                        n: int) -> GeneralLowerTerms:
    """Constant c* = sigma'(0) / (8 M B^2), the bound c* K s^2 / n and the optimal scale."""
    if not sigma_prime0 > 0 or not M > 0:
        raise PreconditionError("need sigma'(0) > 0 and M > 0")
    c_star = sigma_prime0 / (8.0 * M * B * B)
    a1 = s / math.sqrt(2.0 * n)
    a2 = M * B * B / sigma_prime0
    eps_star = sigma_prime0 * s / (2.0 * math.sqrt(2.0) * M * B * B * math.sqrt(n))
    return GeneralLowerTerms(c_star, c_star * K * s * s / n, eps_star, a1, a2)


def bound_lower_general(sigma_prime0: float, M: float, B: float, K: float, s: float,
                        n: int) -> float:
    return general_lower_terms(sigma_prime0, M, B, K, s, n).bound


def minimax_lower_rate(K: float, L: float, d: int, r: float) -> float:
    """(K^2 L)^(-r / (d - 2r)); defined only for d > 2r."""
    if not d > 2 * r:
        raise PreconditionError(f"the rate needs d > 2r (d = {d}, r = {r})")
    if K < 1 or L < 1:
        raise PreconditionError("need K >= 1 and L >= 1")
    return (K * K * L) ** (-r / (d - 2.0 * r))


# ---------------------------------------------------------------------------
# witnesses


def _witness(d: int, rows: np.ndarray, out: np.ndarray, tag: str, K: float,
             I=None) -> Network:
    l0 = Layer(rows, np.zeros(2), (tag, tag))
    l1 = Layer(out[None, :], [0.0], ("identity",))
    layers = (l0, l1)
    I = constrained_set(layers) if I is None else frozenset(I)
    return Network(d, layers, ArchitectureCert(W=2, L=1, K=K, I=I, output_dim=1))


def build_rad_witness_relu(K: float, d: int, activation: str = "relu") -> FunctionFamily:
    """x -> (K/2)(sigma(x_j) - sigma(-x_j)), j = 1..d; equals (K/2)(1 + a) x_j."""
    entry = get_activation(activation)
    if getattr(entry.meta, "kind", None) not in ("relu", "leaky"):
        raise PreconditionError("the linear witness needs relu or leaky relu")
    if K < 1:
        raise PreconditionError("K must be >= 1")
    nets = []
    for j in range(d):
        rows = np.zeros((2, d))
        rows[0, j], rows[1, j] = 1.0, -1.0
        nets.append(_witness(d, rows, np.array([K / 2.0, -K / 2.0]), activation, K))
    return FunctionFamily(nets)


def build_rad_witness_general(K: float, d: int, eps: float, activation,
                              delta: float = 1.0, B: float = 1.0) -> FunctionFamily:
    """x -> (K / sigma'(0)) sigma(eps x_j), j = 1..d.

    Needs eps <= sigma'(0) (weight norms multiply to eps K / sigma'(0) <= K) and
    eps <= delta / B (arguments stay in the Taylor window).  The first layer
    has norm eps < 1 and so lies outside I; the output layer carries the
    whole budget K / sigma'(0).
    """
    entry = activation if isinstance(activation, ActivationEntry) else get_activation(activation)
    sp = entry.slope_at_zero
    if sp is None:
        sp = _slope_at_zero(entry)
    if not sp > 0:
        raise PreconditionError("sigma'(0) must be positive")
    if not 0 < eps <= sp or eps > delta / B * (1 + 1e-12):
        raise PreconditionError(
            f"eps = {eps:.6g} outside (0, min(sigma'(0) = {sp:.6g}, delta/B = {delta / B:.6g})]")
    nets = []
    for j in range(d):
        rows = np.zeros((2, d))
        rows[0, j] = eps
        Kout = K / sp
        nets.append(_witness(d, rows, np.array([Kout, 0.0]), entry.tag, max(Kout, 1.0)))
    fam = FunctionFamily(nets)
    fam.slope_at_zero = sp
    fam.norm_product = eps * K / sp
    return fam


def _slope_at_zero(entry: ActivationEntry, h: float = 1e-5) -> float:
    v = entry(np.array([h, -h]))
    return float((v[0] - v[1]) / (2 * h))


def second_derivative_bound(activation, delta: float = 1.0, n: int = 20001) -> float:
    """max |sigma''| on [-delta, delta] by central differences on a fine grid."""
    entry = activation if isinstance(activation, ActivationEntry) else get_activation(activation)
    t = np.linspace(-delta, delta, n)
    h = 1e-4
    dd = (entry(t + h) - 2 * entry(t) + entry(t - h)) / (h * h)
    return float(np.max(np.abs(dd)))


def random_lipschitz_family(d: int, K: float, L: int, width: int, size: int,
                            rng: np.random.Generator, activation: str = "relu") -> FunctionFamily:
    """Random bias-free networks with every hidden layer of norm 1 and output norm K.

    With a 1-Lipschitz activation each member lies in the bias-free class with
    depth L and norm budget K.
    """
    nets = []
    for _ in range(size):
        layers = []
        m = d
        for _ in range(L):
            A = rng.normal(size=(width, m))
            A /= np.sum(np.abs(A), axis=1, keepdims=True)
            layers.append(Layer(A, np.zeros(width), (activation,) * width))
            m = width
        out = rng.normal(size=(1, m))
        out *= K / np.sum(np.abs(out))
        layers.append(Layer(out, [0.0], ("identity",)))
        I = constrained_set(layers)
        nets.append(Network(d, tuple(layers),
                            ArchitectureCert(W=width, L=L, K=max(K, 1.0), I=I, output_dim=1)))
    return FunctionFamily(nets)
