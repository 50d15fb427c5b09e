"""Deterministic approximators with certificates and error bounds.

* ``build_square`` / ``build_square_weak``: x^2 on [0, 1] from one symmetric
  pair of activation neurons followed by a clip to [0, 1].
* ``build_product2``: xy on [-1, 1]^2 by polarisation, clipped to [-1, 1].
* ``build_product_d``: x_1 ... x_d by a binary tree of pairwise products.
* ``build_lipr``: Lip_r targets on [0, 1]^d from local Taylor polynomials
  glued by a normalised hat-function partition of unity.

Every builder returns a :class:`CertifiedApproximator` whose
``predicted_bound`` is a proven bound on the sup error over the target domain.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence, Union

import numpy as np

from .activations import (
    ActivationEntry,
    AssumptionViolatedError,
    get_activation,
)
from .algebra import compose, compose_affine, concat, identity_network
from .network import (
    ArchitectureCert,
    EvalGrid,
    Layer,
    Network,
    constrained_set,
    default_grid,
    evaluate,
    sup_error,
)

__all__ = [
    "PreconditionError",
    "InfeasibleError",
    "MemoryBudgetError",
    "SquareBuildParams",
    "LiprBuildParams",
    "LiprTarget",
    "CertifiedApproximator",
    "BlockScale",
    "block_scale",
    "build_square",
    "build_square_weak",
    "build_product2",
    "build_product_d",
    "product_tree_levels",
    "build_lipr",
    "CompositeApproximator",
    "lipr_constants",
    "feasibility_thresholds",
    "choose_k",
    "scaling_sweep",
    "multi_indices",
    "k0_square",
    "k0_product",
]

# cap on the number of cube coefficients held in memory
CUBE_BUDGET = 10**7


class PreconditionError(ValueError):
    pass


class InfeasibleError(ValueError):
    def __init__(self, message: str, c1: float, c2: float):
        self.c1, self.c2 = c1, c2
        super().__init__(f"{message} (c1 = {c1:.6g}, c2 = {c2:.6g})")


class MemoryBudgetError(MemoryError):
    pass


def _entry(activation) -> ActivationEntry:
    return activation if isinstance(activation, ActivationEntry) else get_activation(activation)


def k0_square(entry: ActivationEntry, alpha: float) -> float:
    """Smallest admissible k for the square block (inner weight within radius)."""
    rho = entry.meta.rho
    return max(1.0, rho ** (-2.0 / alpha))


def k0_product(entry: ActivationEntry, alpha: float) -> float:
    """Smallest admissible k for product blocks (2w within radius)."""
    rho = entry.meta.rho
    return max(1.0, (2.0 / rho) ** (2.0 / alpha))


# ---------------------------------------------------------------------------
# symmetric block scaling


@dataclass(frozen=True)
class BlockScale:
    """Inner weight, outer scale and per-block error for one (activation, k, alpha).

    ``S(t) = d (sigma(x0 + w t) + sigma(x0 - w t) - 2 sigma(x0))`` approximates t^2.
    ``square_err`` bounds |S(t) - t^2| on |t| <= 1 and ``product_err`` bounds
    the polarised product on [-1, 1]^2.
    """

    tag: str
    path: str  # "taylor" | "weak"
    k: float
    alpha: float
    w: float
    d: float
    x0: float
    sigma_x0: float
    gamma: float
    square_err: float
    product_err: float


def block_scale(activation, k: float, alpha: float, w: Optional[float] = None,
                product: bool = False) -> BlockScale:
    entry = _entry(activation)
    if entry.taylor is not None:
        spec = entry.taylor
        kmin = k0_product(entry, alpha) if product else k0_square(entry, alpha)
        if k < kmin * (1 - 1e-12):
            raise PreconditionError(f"k = {k} is below k0 = {kmin:.6g}")
        if w is None:
            w = k ** (-alpha / 2.0)
        gamma = 2.0 * spec.a2
        d = 1.0 / (gamma * w * w)
        eps = spec.M / abs(spec.a2) * w * w
        return BlockScale(entry.tag, "taylor", k, alpha, w, d, 0.0, 0.0, gamma,
                          eps, 9.0 * eps)
    if entry.weak is not None:
        spec = entry.weak
        if w is None:
            w = spec.weight_schedule(k, alpha)
        reach = 2.0 * w if product else w
        if not 0 < w or reach > spec.rho * (1 + 1e-12):
            raise PreconditionError(
                f"inner weight {w:.6g} leaves the modulus radius {spec.rho}")
        om = lambda t: float(np.asarray(spec.omega(np.asarray([t], float)))[0])
        g = abs(spec.gamma)
        d = 1.0 / (spec.gamma * w * w)
        sq = om(w) / g
        pr = (2.0 * om(2.0 * w) + om(w)) / g if product else float("nan")
        s0 = float(entry(np.array([spec.x0]))[0])
        return BlockScale(entry.tag, "weak", k, alpha, w, d, spec.x0, s0, spec.gamma,
                          sq, pr)
    raise AssumptionViolatedError(
        f"{entry.tag!r} has neither Taylor nor even-modulus metadata")


# ---------------------------------------------------------------------------
# approximator records


@dataclass
class CertifiedApproximator:
    """A network (or composite evaluator) with certificate and error bound."""

    network: object
    predicted_bound: float
    target: str
    target_fn: Callable
    unclipped: Optional[Network] = None
    closed_form: Optional[Callable] = None
    info: dict = field(default_factory=dict)

    @property
    def cert(self) -> ArchitectureCert:
        return self.network.cert

    @property
    def input_dim(self) -> int:
        return self.network.input_dim

    def __call__(self, x):
        return self.network(x)

    def sup_error(self, grid: Optional[EvalGrid] = None, unclipped: bool = False) -> float:
        model = self.unclipped if unclipped else self.network
        if grid is None:
            grid = default_grid(self.input_dim, *self.info.get("domain", (0.0, 1.0)))
        return sup_error(self.target_fn, model, grid)


@dataclass(frozen=True)
class SquareBuildParams:
    k: float
    alpha: float
    activation: str

    def __post_init__(self):
        if not self.alpha > 0:
            raise PreconditionError("alpha must be positive")
        if not self.k >= 1:
            raise PreconditionError("k must be >= 1")


def _square_layers(bs: BlockScale, tag: str, clip: bool) -> tuple:
    w, d = bs.w, bs.d
    l0 = Layer([[w], [-w]], [bs.x0, bs.x0], (tag, tag))
    l1 = Layer([[d, d]], [-2.0 * d * bs.sigma_x0], ("clip01" if clip else "identity",))
    l2 = Layer([[1.0]], [0.0], ("identity",))
    return (l0, l1, l2)


def _square_net(bs: BlockScale, tag: str, clip: bool) -> Network:
    layers = _square_layers(bs, tag, clip)
    K = 2.0 * abs(bs.d)
    I = constrained_set(layers)
    if I:
        K = max(K, 1.0)
    return Network(1, layers, ArchitectureCert(W=2, L=2, K=K, I=I, output_dim=1))


def _closed_square(entry: ActivationEntry, bs: BlockScale):
    even = entry.weak.even_part if entry.weak is not None else None
    if even is None:
        return None

    def phi(x):
        x = np.asarray(x, float).reshape(-1)
        return bs.d * even(bs.w * x)

    return phi


def _square(x):
    x = np.asarray(x, float)
    return (x[:, 0] if x.ndim == 2 else x) ** 2


def build_square(params: SquareBuildParams) -> CertifiedApproximator:
    """x^2 on [0, 1] with K = k^alpha / |a2| and error (M/|a2|) k^-alpha.

    Activations with even-modulus metadata are routed to
    :func:`build_square_weak` with their default weight schedule.
    """
    entry = _entry(params.activation)
    if entry.taylor is None:
        if entry.weak is not None:
            return build_square_weak(params)
        raise AssumptionViolatedError(f"{entry.tag!r} carries no Taylor metadata")
    bs = block_scale(entry, params.k, params.alpha)
    return CertifiedApproximator(
        _square_net(bs, entry.tag, True), bs.square_err, "x^2 on [0,1]", _square,
        unclipped=_square_net(bs, entry.tag, False), closed_form=None,
        info={"w": bs.w, "d": bs.d, "k": params.k, "alpha": params.alpha,
              "path": "taylor", "domain": (0.0, 1.0), "block": bs})


def build_square_weak(params: SquareBuildParams, w_k: Optional[float] = None) -> CertifiedApproximator:
    """x^2 on [0, 1] for even-modulus activations: d_k = 1 / (gamma w_k^2).

    ``w_k`` defaults to the activation's weight schedule at (k, alpha).  The
    certificate is K = 2 / (|gamma| w_k^2) and the bound is omega(w_k)/|gamma|.
    """
    entry = _entry(params.activation)
    if entry.weak is None:
        raise AssumptionViolatedError(f"{entry.tag!r} carries no even-modulus metadata")
    bs = block_scale(entry, params.k, params.alpha, w=w_k)
    return CertifiedApproximator(
        _square_net(bs, entry.tag, True), bs.square_err, "x^2 on [0,1]", _square,
        unclipped=_square_net(bs, entry.tag, False),
        closed_form=_closed_square(entry, bs),
        info={"w": bs.w, "d": bs.d, "k": params.k, "alpha": params.alpha,
              "path": "weak", "domain": (0.0, 1.0), "block": bs})


# ---------------------------------------------------------------------------
# products


_POLAR_ROWS = np.array([[1, 1], [-1, -1], [1, 0], [-1, 0], [0, 1], [0, -1]], float)
_POLAR_OUT = np.array([1, 1, -1, -1, -1, -1], float) / 2.0


def _product2_net(bs: BlockScale, tag: str, clip: bool = True) -> Network:
    l0 = Layer(bs.w * _POLAR_ROWS, np.full(6, bs.x0), (tag,) * 6)
    # constant terms: 0.5 d (-2 s0 + 2 s0 + 2 s0)
    l1 = Layer([bs.d * _POLAR_OUT], [bs.d * bs.sigma_x0], ("clip11" if clip else "identity",))
    l2 = Layer([[1.0]], [0.0], ("identity",))
    layers = (l0, l1, l2)
    I = constrained_set(layers)
    K = 3.0 * abs(bs.d)
    if I:
        K = max(K, 1.0)
    return Network(2, layers, ArchitectureCert(W=6, L=2, K=K, I=I, output_dim=1))


def _prod(x):
    return np.prod(np.asarray(x, float), axis=1)


def build_product2(k: float, alpha: float, activation) -> CertifiedApproximator:
    """xy on [-1, 1]^2 with K = 3/2 k^alpha/|a2| and error 9 (M/|a2|) k^-alpha."""
    entry = _entry(activation)
    bs = block_scale(entry, k, alpha, product=True)
    return CertifiedApproximator(
        _product2_net(bs, entry.tag), bs.product_err, "xy on [-1,1]^2", _prod,
        unclipped=_product2_net(bs, entry.tag, clip=False),
        info={"w": bs.w, "d": bs.d, "k": k, "alpha": alpha, "path": bs.path,
              "domain": (-1.0, 1.0), "block": bs})


def _tree_depth(d: int) -> int:
    return 0 if d <= 1 else math.ceil(math.log2(d))


def _select(rows: Sequence[int], n: int) -> np.ndarray:
    P = np.zeros((len(rows), n))
    P[np.arange(len(rows)), rows] = 1.0
    return P


def product_tree_levels(d: int, make_block: Callable[[int, int], Network]) -> list[Network]:
    """Per-level networks of the pairwise product tree on d channels.

    Level l maps m channels to ceil(m/2): channels 2j, 2j+1 feed block
    ``make_block(l, j)`` and an odd last channel passes through two
    identity-tagged layers.
    """
    levels = []
    m = d
    lvl = 0
    while m > 1:
        parts = []
        for j in range(m // 2):
            block = make_block(lvl, j)
            P = _select([2 * j, 2 * j + 1], m)
            parts.append(block if m == 2 else compose_affine(block, P))
        if m % 2:
            parts.append(compose_affine(identity_network(1, depth=2), _select([m - 1], m)))
        net = parts[0]
        for p in parts[1:]:
            net = concat(net, p)
        levels.append(net)
        m = (m + 1) // 2
        lvl += 1
    return levels


def _chain(levels: Sequence[Network], d: int) -> Network:
    if not levels:
        return identity_network(d, 0)
    net = levels[0]
    for lv in levels[1:]:
        net = compose(lv, net)
    return net


def build_product_d(d: int, k: float, alpha: float, activation) -> CertifiedApproximator:
    """x_1 ... x_d on [-1, 1]^d; error (2^D - 1) times the pairwise block bound.

    D = ceil(log2 d) levels; certificate (6 ceil(d/2), 2D, K_pair^D).
    """
    if d < 1:
        raise PreconditionError("d must be >= 1")
    entry = _entry(activation)
    D = _tree_depth(d)
    if d == 1:
        net = identity_network(1, 0)
        return CertifiedApproximator(net, 0.0, "x_1 on [-1,1]", _prod,
                                     info={"levels": [], "depth_levels": 0,
                                           "domain": (-1.0, 1.0), "block": None})
    bs = block_scale(entry, k, alpha, product=True)
    block = _product2_net(bs, entry.tag)
    levels = product_tree_levels(d, lambda l, j: block)
    net = _chain(levels, d)
    K = (3.0 * abs(bs.d)) ** D
    W = 6 * math.ceil(d / 2)
    cert = net.cert.replace(W=max(W, net.hidden_width), L=2 * D,
                            K=max(K, 1.0) if net.cert.I else K)
    net = Network(d, net.layers, cert)
    bound = (2 ** D - 1) * bs.product_err
    return CertifiedApproximator(
        net, bound, f"prod x_i on [-1,1]^{d}", _prod,
        info={"levels": levels, "depth_levels": D, "w": bs.w, "d": bs.d, "k": k,
              "alpha": alpha, "path": bs.path, "domain": (-1.0, 1.0), "block": bs})


def tree_level_errors(approx: CertifiedApproximator, x: np.ndarray) -> list[float]:
    """Max error of each tree level against the exact partial products at ``x``."""
    levels = approx.info["levels"]
    v = np.asarray(x, float)
    p = v.copy()
    errs = []
    for lv in levels:
        v = evaluate(lv, v)
        m = p.shape[1]
        q = [p[:, 2 * j] * p[:, 2 * j + 1] for j in range(m // 2)]
        if m % 2:
            q.append(p[:, -1])
        p = np.stack(q, axis=1)
        errs.append(float(np.max(np.abs(v - p))))
    return errs


__all__.append("tree_level_errors")


# ---------------------------------------------------------------------------
# Lip_r targets and the partition-of-unity glue


def multi_indices(d: int, m: int) -> list[tuple]:
    """All s in N^d with |s| <= m, ordered by degree then lexicographically."""
    out = []
    for deg in range(m + 1):
        for combo in itertools.combinations_with_replacement(range(d), deg):
            s = [0] * d
            for c in combo:
                s[c] += 1
            out.append(tuple(s))
    return sorted(set(out), key=lambda s: (sum(s), tuple(-v for v in s)))


def _factorial(s) -> float:
    return float(np.prod([math.factorial(v) for v in s]))


@dataclass
class LiprTarget:
    """Target function with an oracle for partial derivatives.

    ``f(x)`` and ``derivative(s, x)`` act on (N, d) batches.  When no
    derivative oracle is supplied, nested central differences with step
    ``fd_step`` are used; these lose accuracy quickly with the order.
    """

    f: Callable
    d: int
    derivative: Optional[Callable] = None
    name: str = "f"
    fd_step: float = 1e-4

    def __call__(self, x):
        return np.asarray(self.f(np.asarray(x, float)), float).reshape(-1)

    def partial(self, s: tuple, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, float)
        if sum(s) == 0:
            return self(x)
        if self.derivative is not None:
            return np.asarray(self.derivative(tuple(s), x), float).reshape(-1)
        i = next(j for j, v in enumerate(s) if v > 0)
        s2 = list(s)
        s2[i] -= 1
        e = np.zeros(self.d)
        e[i] = self.fd_step
        return (self.partial(tuple(s2), x + e) - self.partial(tuple(s2), x - e)) / (2 * self.fd_step)


@dataclass(frozen=True)
class LiprBuildParams:
    d: int
    m: int
    beta: float
    alpha: float
    k: float
    f: LiprTarget
    activation: str = "silu"
    gamma_mesh: Optional[float] = None
    lip_const: float = 1.0

    def __post_init__(self):
        if self.d < 1 or self.m < 0:
            raise PreconditionError("need d >= 1 and m >= 0")
        if not 0 < self.beta <= 1:
            raise PreconditionError("beta must lie in (0, 1]")
        if not self.alpha > 0:
            raise PreconditionError("alpha must be positive")
        if self.f.d != self.d:
            raise PreconditionError("target dimension differs from d")

    @property
    def r(self) -> float:
        return self.m + self.beta

    @property
    def gamma(self) -> float:
        return self.alpha / self.r if self.gamma_mesh is None else self.gamma_mesh


def lipr_constants(d: int, m: int, beta: float) -> dict:
    """Constants of the Taylor-glue bound.

    ``C1`` is the remainder constant for points within h/2 of the centre;
    ``C1_support`` covers the full hat support (distance up to h), which is
    what the glue actually needs.
    """
    idx = multi_indices(d, m)
    top = [s for s in idx if sum(s) == m]
    inv_fact = sum(1.0 / _factorial(s) for s in top)
    n_mono = math.comb(m + d, d)
    return {
        "C1": inv_fact / 2 ** (m + beta),
        "C1_support": inv_fact,
        "n_monomials": n_mono,
        "C_W": 6 * math.ceil(d / 2) * n_mono,
        "D": _tree_depth(d),
    }


class CompositeApproximator:
    """phi(x) = sum_j rho_j(x) sum_s c_{j,s} mono_s(x - x_j) on [0, 1]^d.

    The hat bump of cube j is prod_i relu(1 - |x_i - c_i| / h).  Only the 2^d
    cubes nearest to x carry weight, so evaluation loops over those offsets.
    The monomial networks are shared by all cubes.
    """

    def __init__(self, d: int, n_axis: int, coeffs: np.ndarray, indices: list,
                 mono_nets: list, cert: ArchitectureCert, effective_cert: dict):
        self.input_dim = d
        self.d = d
        self.n_axis = n_axis
        self.h = 1.0 / n_axis
        self.coeffs = coeffs  # (n_axis^d, n_mono)
        self.indices = indices
        self.mono_nets = mono_nets  # None for degree 0, Network otherwise
        self.cert = cert
        self.effective_cert = effective_cert
        self.materialized = False

    @property
    def n_cubes(self) -> int:
        return self.n_axis ** self.d

    def centers(self) -> np.ndarray:
        g = (np.arange(self.n_axis) + 0.5) * self.h
        mesh = np.meshgrid(*([g] * self.d), indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=1)

    def _neighbours(self, x: np.ndarray):
        """Yield (flat cube index, valid mask, centre, bump) for the 2^d offsets."""
        base = np.floor(x / self.h - 0.5).astype(np.int64)
        strides = self.n_axis ** np.arange(self.d - 1, -1, -1)
        for off in itertools.product((0, 1), repeat=self.d):
            idx = base + np.asarray(off)
            valid = np.all((idx >= 0) & (idx < self.n_axis), axis=1)
            idx_c = np.clip(idx, 0, self.n_axis - 1)
            c = (idx_c + 0.5) * self.h
            bump = np.prod(np.maximum(1.0 - np.abs(x - c) / self.h, 0.0), axis=1)
            bump = np.where(valid, bump, 0.0)
            yield idx_c @ strides, valid, c, bump

    def bumps(self, x) -> np.ndarray:
        """Dense (N, n_cubes) matrix of unnormalised bumps (small meshes only)."""
        x = np.atleast_2d(np.asarray(x, float))
        c = self.centers()
        diff = np.abs(x[:, None, :] - c[None, :, :]) / self.h
        return np.prod(np.maximum(1.0 - diff, 0.0), axis=2)

    def partition(self, x) -> np.ndarray:
        """Dense (N, n_cubes) partition-of-unity weights rho_j(x)."""
        eta = self.bumps(x)
        return eta / eta.sum(axis=1, keepdims=True)

    def __call__(self, x):
        x = np.asarray(x, float)
        if x.ndim == 1:
            x = x.reshape(-1, self.d) if self.d > 1 else x.reshape(-1, 1)
        total = np.zeros(len(x))
        denom = np.zeros(len(x))
        for flat, valid, c, bump in self._neighbours(x):
            y = x - c
            local = np.zeros(len(x))
            for col, net in enumerate(self.mono_nets):
                mono = np.ones(len(x)) if net is None else evaluate(net, y)[:, 0]
                local += self.coeffs[flat, col] * mono
            total += bump * local
            denom += bump
        return total / denom


def _monomial_network(s: tuple, block: Optional[Network]) -> Optional[Network]:
    """Network for y^s on [-1, 1]^d (None for the constant monomial)."""
    d = len(s)
    factors = [i for i, v in enumerate(s) for _ in range(v)]
    p = len(factors)
    if p == 0:
        return None
    P = _select(factors, d)
    if p == 1:
        return compose_affine(identity_network(1, 0), P)
    levels = product_tree_levels(p, lambda l, j: block)
    return compose_affine(_chain(levels, p), P)


def build_lipr(params: LiprBuildParams, block_factory=None) -> CertifiedApproximator:
    """Lip_r approximant from per-cube Taylor polynomials and a partition of unity.

    The mesh has ceil(k^gamma) cubes per axis.  The returned composite carries
    the declared certificate (C_W k^{d gamma}, 2 ceil(log2 d), C_K k^{alpha D + d gamma})
    and, in ``info``, the certificate of the parts actually built.

    ``block_factory(s, l, j)`` may supply the pairwise block for monomial s at
    tree level l, position j (the randomized variant uses this hook).
    """
    p = params
    entry = _entry(p.activation)
    n_axis = int(math.ceil(p.k ** p.gamma - 1e-9))
    n_cubes = n_axis ** p.d
    idx = multi_indices(p.d, p.m)
    if n_cubes * len(idx) > CUBE_BUDGET:
        raise MemoryBudgetError(
            f"{n_cubes} cubes x {len(idx)} monomials exceeds the budget of {CUBE_BUDGET}")
    consts = lipr_constants(p.d, p.m, p.beta)
    need_block = p.m >= 2
    bs = None
    if need_block:
        bs = block_scale(entry, p.k, p.alpha, product=True)
    elif p.d > 1:
        # only the declared certificate refers to the block here
        try:
            bs = block_scale(entry, p.k, p.alpha, product=True)
        except PreconditionError:
            bs = None
    if block_factory is None and need_block:
        shared = _product2_net(bs, entry.tag)
        block_factory = lambda s, l, j: shared
    mono_nets = []
    for s in idx:
        if sum(s) >= 2:
            mono_nets.append(_monomial_network_with(s, lambda l, j, s=s: block_factory(s, l, j)))
        else:
            mono_nets.append(_monomial_network(s, None))

    comp = CompositeApproximator(p.d, n_axis, None, idx, mono_nets, None, {})
    centers = comp.centers()
    coeffs = np.empty((n_cubes, len(idx)))
    for col, s in enumerate(idx):
        coeffs[:, col] = p.f.partial(s, centers) / _factorial(s)
    comp.coeffs = coeffs

    # error bound: remainder over the hat support plus monomial errors
    h = comp.h
    rem = p.lip_const * consts["C1_support"] * h ** p.r
    mono_err = 0.0
    C3 = 0.0
    max_coef = np.max(np.abs(coeffs), axis=0)
    for col, s in enumerate(idx):
        deg = sum(s)
        if deg >= 2:
            e = (2 ** _tree_depth(deg) - 1) * bs.product_err
            mono_err += max_coef[col] * e
            C3 += (2 ** _tree_depth(deg) - 1) * (bs.product_err * p.k ** p.alpha) / _factorial(s)
    bound = rem + mono_err

    # declared certificate, generic in the block norm
    D = consts["D"]
    k_pair = 3.0 * abs(bs.d) if bs is not None else 1.0
    W_decl = int(math.ceil(consts["C_W"] * p.k ** (p.d * p.gamma) - 1e-9))
    K_decl = consts["n_monomials"] * k_pair ** D * p.k ** (p.d * p.gamma)
    cert = ArchitectureCert(W=max(W_decl, 1), L=2 * D, K=max(K_decl, 1.0),
                            I=frozenset(), output_dim=1)
    widths = [1 if n is None else n.hidden_width for n in mono_nets]
    depths = [0 if n is None else n.depth for n in mono_nets]
    Ks = [1.0 if n is None else n.cert.K for n in mono_nets]
    effective = {
        "W": int(n_cubes * sum(widths)),
        "L": int(max(depths)),
        "K": float(n_cubes * sum(m * k for m, k in zip(max_coef, Ks))),
        "materialized": False,
    }
    comp.cert = cert
    comp.effective_cert = effective

    target = p.f
    info = {
        "domain": (0.0, 1.0), "n_axis": n_axis, "h": h, "n_cubes": n_cubes,
        "gamma": p.gamma, "r": p.r, "constants": consts, "C3": C3,
        "remainder_bound": rem, "monomial_bound": mono_err,
        "reference_bound": max(consts["C1"], C3) * (p.k ** (-p.gamma * p.r) + p.k ** (-p.alpha)),
        "declared_cert": cert, "effective_cert": effective, "block": bs,
        "materialized": False,
    }
    return CertifiedApproximator(comp, bound, f"{target.name} on [0,1]^{p.d}",
                                 target, info=info)


def _monomial_network_with(s: tuple, make_block) -> Network:
    d = len(s)
    factors = [i for i, v in enumerate(s) for _ in range(v)]
    levels = product_tree_levels(len(factors), make_block)
    return compose_affine(_chain(levels, len(factors)), _select(factors, d))


# ---------------------------------------------------------------------------
# parameter selection


def _pair_norm_coeff(entry: ActivationEntry) -> float:
    """3 / (2 |a2|) for Taylor activations, 3 / |gamma| for even-modulus ones."""
    if entry.taylor is not None:
        return 1.5 / abs(entry.taylor.a2)
    return 3.0 / abs(entry.weak.gamma)


def feasibility_thresholds(d: int, r: float, alpha: float, activation) -> dict:
    """c1, c2, C_W, C_K and k0 for fitting build_lipr into (W, L, K)."""
    entry = _entry(activation)
    m = int(math.ceil(r) - 1)
    n_mono = math.comb(m + d, d)
    D = _tree_depth(d)
    k0 = math.ceil(k0_product(entry, alpha) - 1e-9)
    C_W = 6 * math.ceil(d / 2) * n_mono
    C_K = _pair_norm_coeff(entry) ** D * n_mono
    c1 = C_W * k0 ** (d * alpha / r)
    c2 = (_pair_norm_coeff(entry) * k0 ** alpha) ** D / (6 * math.ceil(d / 2))
    return {"c1": c1, "c2": c2, "C_W": C_W, "C_K": C_K, "k0": k0, "m": m,
            "beta": r - m, "D": D}


def choose_k(W: int, K: float, d: int, r: float, alpha: float, activation) -> int:
    """Largest integer k >= k0 whose declared build_lipr certificate fits (W, K).

    Raises InfeasibleError when W < c1 or K < c2 W.
    """
    t = feasibility_thresholds(d, r, alpha, activation)
    tol = 1e-9
    if W < t["c1"] * (1 - tol) or K < t["c2"] * W * (1 - tol):
        raise InfeasibleError("width or norm budget below the feasibility threshold",
                              t["c1"], t["c2"])
    D = t["D"]
    gamma = alpha / r

    def fits(k):
        W_k = t["C_W"] * k ** (d * gamma)
        K_k = t["C_K"] * k ** (alpha * D + d * gamma)
        return W_k <= W * (1 + tol) and K_k <= K * (1 + tol)

    k = t["k0"]
    if not fits(k):
        raise InfeasibleError("no admissible k fits the budget", t["c1"], t["c2"])
    # exponential search then bisection on the monotone predicate
    hi = k + 1
    while fits(hi):
        k, hi = hi, 2 * hi
    lo = k
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if fits(mid):
            lo = mid
        else:
            hi = mid
    return int(lo)


@dataclass
class SweepResult:
    slope: float
    intercept: float
    residual: float
    ks: list
    Ks: list


def scaling_sweep(activation, alpha: float, k_list: Sequence[float]) -> SweepResult:
    """Least-squares slope of log K_k against log k for square builders."""
    if len(k_list) < 2:
        raise ValueError("need at least two values of k")
    ks = [float(k) for k in k_list]
    Ks = [build_square(SquareBuildParams(k, alpha, activation)).cert.K for k in ks]
    return fit_loglog(ks, Ks)


def fit_loglog(xs, ys) -> SweepResult:
    lx, ly = np.log(np.asarray(xs, float)), np.log(np.asarray(ys, float))
    A = np.column_stack([lx, np.ones_like(lx)])
    coef, res, *_ = np.linalg.lstsq(A, ly, rcond=None)
    resid = float(np.sqrt(np.mean((A @ coef - ly) ** 2)))
    return SweepResult(float(coef[0]), float(coef[1]), resid, list(xs), list(ys))


__all__ += ["SweepResult", "fit_loglog"]


# ---------------------------------------------------------------------------
# composite document format


def composite_to_dict(comp: CompositeApproximator) -> dict:
    from .network import network_to_dict

    c = comp.cert
    return {"composite": {
        "input_dim": comp.d,
        "cubes_per_axis": comp.n_axis,
        "centers": comp.centers().tolist(),
        "multi_indices": [list(s) for s in comp.indices],
        "coefficients": comp.coeffs.tolist(),
        "components": [None if n is None else network_to_dict(n) for n in comp.mono_nets],
        "cert": {"W": c.W, "L": c.L, "K": c.K, "I": sorted(c.I), "output_dim": c.output_dim},
        "effective_cert": dict(comp.effective_cert),
        "materialized": False,
    }}


def composite_from_dict(doc: dict) -> CompositeApproximator:
    from .network import ParseError, network_from_dict

    body = doc.get("composite") if isinstance(doc, dict) else None
    if not isinstance(body, dict):
        raise ParseError("$.composite", "missing field")
    try:
        d = int(body["input_dim"])
        n_axis = int(body["cubes_per_axis"])
        idx = [tuple(int(v) for v in s) for s in body["multi_indices"]]
        coeffs = np.array(body["coefficients"], dtype=float)
        comps = [None if c is None else network_from_dict(c, f"$.composite.components[{i}]")
                 for i, c in enumerate(body["components"])]
        cd = body["cert"]
        cert = ArchitectureCert(W=cd["W"], L=cd["L"], K=cd["K"], I=cd["I"],
                                output_dim=cd["output_dim"])
    except KeyError as exc:
        raise ParseError(f"$.composite.{exc.args[0]}", "missing field") from None
    if coeffs.shape != (n_axis ** d, len(idx)) or len(comps) != len(idx):
        raise ParseError("$.composite.coefficients", "shape does not match cubes and monomials")
    return CompositeApproximator(d, n_axis, coeffs, idx, comps, cert,
                                 dict(body.get("effective_cert", {})))


__all__ += ["composite_to_dict", "composite_from_dict"]
