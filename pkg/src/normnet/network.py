"""Layered networks with per-neuron activations and norm certificates.

A :class:`Network` stores ``L + 1`` affine maps.  The first ``L`` are hidden
layers whose outputs pass through per-neuron activations; the last one is the
output map and carries identity tags.  The row-sum operator norm of the
bias-augmented block ``(A, b)`` is the quantity constrained by the
certificate.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Optional, Sequence

import numpy as np

from .activations import RegistryError, get_activation

__all__ = [
    "DimensionError",
    "NonFiniteError",
    "UnsupportedNormalizationError",
    "ParseError",
    "Layer",
    "ArchitectureCert",
    "Network",
    "EvalGrid",
    "NormReport",
    "NORM_SLACK",
    "op_norm_inf",
    "layer_norm",
    "augment",
    "eval_augmented",
    "check_norm_constraint",
    "evaluate",
    "sup_error",
    "default_grid",
    "measure_lipschitz_empirical",
    "serialize",
    "deserialize",
    "dumps_json",
    "constrained_set",
    "make_network",
]

NORM_SLACK = 1e-12
CHUNK = 65536


class DimensionError(ValueError):
    pass


class NonFiniteError(FloatingPointError):
    def __init__(self, layer: int, message: str = ""):
        self.layer = layer
        super().__init__(message or f"non-finite value after layer {layer}")


class UnsupportedNormalizationError(ValueError):
    pass


class ParseError(ValueError):
    def __init__(self, path: str, message: str):
        self.path = path
        super().__init__(f"{path}: {message}")


def op_norm_inf(A) -> float:
    """Maximum absolute row sum (the operator norm induced by the sup norm)."""
    A = np.asarray(A, dtype=float)
    if A.ndim == 1:
        A = A[None, :]
    if A.ndim != 2 or A.size == 0:
        raise DimensionError(f"op_norm_inf needs a nonempty matrix, got shape {A.shape}")
    return float(np.max(np.sum(np.abs(A), axis=1)))


@dataclass(frozen=True, eq=False)
class Layer:
    weights: np.ndarray
    bias: np.ndarray
    activations: tuple

    def __post_init__(self):
        W = np.array(self.weights, dtype=float, ndmin=2)
        b = np.array(self.bias, dtype=float).reshape(-1)
        acts = (self.activations,) * W.shape[0] if isinstance(self.activations, str) \
            else tuple(self.activations)
        if W.ndim != 2 or W.size == 0:
            raise DimensionError(f"weights must be a nonempty matrix, got shape {W.shape}")
        if b.shape[0] != W.shape[0]:
            raise DimensionError(
                f"bias length {b.shape[0]} does not match {W.shape[0]} weight rows")
        if len(acts) != W.shape[0]:
            raise DimensionError(
                f"{len(acts)} activation tags for {W.shape[0]} neurons")
        for t in acts:
            get_activation(t)  # raises RegistryError
        W.setflags(write=False)
        b.setflags(write=False)
        object.__setattr__(self, "weights", W)
        object.__setattr__(self, "bias", b)
        object.__setattr__(self, "activations", acts)

    @property
    def n_in(self) -> int:
        return self.weights.shape[1]

    @property
    def n_out(self) -> int:
        return self.weights.shape[0]

    def norm(self) -> float:
        return op_norm_inf(np.column_stack([self.weights, self.bias]))

    def apply_activation(self, z: np.ndarray) -> np.ndarray:
        """Apply the per-neuron activations to pre-activations ``z`` (..., n_out)."""
        tags = self.activations
        if all(t == tags[0] for t in tags):
            return get_activation(tags[0])(z)
        out = np.empty_like(z)
        for tag in dict.fromkeys(tags):
            idx = [i for i, t in enumerate(tags) if t == tag]
            out[..., idx] = get_activation(tag)(z[..., idx])
        return out

    def __eq__(self, other):
        if not isinstance(other, Layer):
            return NotImplemented
        return (self.activations == other.activations
                and np.array_equal(self.weights, other.weights)
                and np.array_equal(self.bias, other.bias))

    __hash__ = None


def layer_norm(layer: Layer) -> float:
    return layer.norm()


@dataclass(frozen=True)
class ArchitectureCert:
    W: int
    L: int
    K: float
    I: frozenset
    output_dim: int

    def __post_init__(self):
        object.__setattr__(self, "I", frozenset(int(i) for i in self.I))
        if int(self.W) < 1:
            raise ValueError("cert.W must be a positive integer")
        if int(self.L) < 0:
            raise ValueError("cert.L must be nonnegative")
        if not self.K > 0:
            raise ValueError("cert.K must be positive")
        if self.I and self.K < 1 - NORM_SLACK:
            raise ValueError("cert.K must be >= 1 when the constrained set is nonempty")
        if int(self.output_dim) < 1:
            raise ValueError("cert.output_dim must be positive")
        object.__setattr__(self, "W", int(self.W))
        object.__setattr__(self, "L", int(self.L))
        object.__setattr__(self, "K", float(self.K))
        object.__setattr__(self, "output_dim", int(self.output_dim))

    def replace(self, **kw) -> "ArchitectureCert":
        d = dict(W=self.W, L=self.L, K=self.K, I=self.I, output_dim=self.output_dim)
        d.update(kw)
        return ArchitectureCert(**d)


@dataclass(frozen=True, eq=False)
class Network:
    input_dim: int
    layers: tuple
    cert: ArchitectureCert

    def __post_init__(self):
        layers = tuple(self.layers)
        if int(self.input_dim) < 1:
            raise DimensionError("input_dim must be positive")
        if not layers:
            raise DimensionError("a network needs at least an output layer")
        m = int(self.input_dim)
        for i, layer in enumerate(layers):
            if layer.n_in != m:
                raise DimensionError(
                    f"layer {i} expects {layer.n_in} inputs but receives {m}")
            m = layer.n_out
        if m != self.cert.output_dim:
            raise DimensionError(
                f"network output dim {m} differs from cert.output_dim {self.cert.output_dim}")
        if any(t != "identity" for t in layers[-1].activations):
            raise DimensionError("the output layer must carry identity activations")
        if len(layers) - 1 > self.cert.L:
            raise DimensionError(
                f"{len(layers) - 1} hidden layers exceed cert.L = {self.cert.L}")
        if self.hidden_width > self.cert.W:
            raise DimensionError(
                f"hidden width {self.hidden_width} exceeds cert.W = {self.cert.W}")
        if any(i < 0 or i >= len(layers) for i in self.cert.I):
            raise DimensionError("cert.I refers to a nonexistent layer")
        object.__setattr__(self, "input_dim", int(self.input_dim))
        object.__setattr__(self, "layers", layers)

    @property
    def depth(self) -> int:
        return len(self.layers) - 1

    @property
    def hidden_width(self) -> int:
        return max((l.n_out for l in self.layers[:-1]), default=1)

    @property
    def output_dim(self) -> int:
        return self.layers[-1].n_out

    def norms(self) -> list[float]:
        return [l.norm() for l in self.layers]

    def is_bias_free(self) -> bool:
        return all(not np.any(l.bias) for l in self.layers)

    def __call__(self, x):
        return evaluate(self, x)

    def __eq__(self, other):
        if not isinstance(other, Network):
            return NotImplemented
        return (self.input_dim == other.input_dim and self.cert == other.cert
                and len(self.layers) == len(other.layers)
                and all(a == b for a, b in zip(self.layers, other.layers)))

    __hash__ = None


def constrained_set(layers: Sequence[Layer]) -> frozenset:
    """Indices of layers whose norm is at least one (the structural choice of I)."""
    return frozenset(i for i, l in enumerate(layers) if l.norm() >= 1 - NORM_SLACK)


def make_network(input_dim: int, layers: Sequence[Layer], K: Optional[float] = None,
                 W: Optional[int] = None, L: Optional[int] = None,
                 I: Optional[Iterable[int]] = None) -> Network:
    """Assemble a network, filling in a tight certificate for omitted fields.

    Defaults: I is the set of layers with norm >= 1 and K is the product of
    their norms (1 when I is empty).
    """
    layers = tuple(layers)
    if I is None:
        I = constrained_set(layers)
    I = frozenset(I)
    if K is None:
        K = float(np.prod([layers[i].norm() for i in I])) if I else 1.0
        K = max(K, 1.0) if I else K
    if W is None:
        W = max((l.n_out for l in layers[:-1]), default=1)
    if L is None:
        L = len(layers) - 1
    cert = ArchitectureCert(W=W, L=L, K=K, I=I, output_dim=layers[-1].n_out)
    return Network(input_dim, layers, cert)


# ---------------------------------------------------------------------------
# evaluation


def _as_batch(x, d: int) -> tuple[np.ndarray, bool]:
    x = np.asarray(x, dtype=float)
    single = x.ndim <= 1
    if x.ndim == 0:
        x = x.reshape(1, 1)
    elif x.ndim == 1:
        x = x.reshape(1, -1) if x.shape[0] == d or d != 1 else x.reshape(-1, 1)
        single = x.shape[0] == 1
    if x.shape[-1] != d:
        raise DimensionError(f"input has {x.shape[-1]} coordinates, network expects {d}")
    return x, single


def evaluate(net: Network, x, check_finite: bool = True) -> np.ndarray:
    """Forward pass.

    ``x`` is a single point of length ``input_dim`` or a batch of shape
    ``(N, input_dim)``; for one-dimensional inputs a flat array of N values is
    read as a batch.  Returns shape ``(output_dim,)`` or ``(N, output_dim)``.
    """
    xb, single = _as_batch(x, net.input_dim)
    if check_finite and not np.all(np.isfinite(xb)):
        raise NonFiniteError(-1, "input contains non-finite values")
    h = xb
    last = len(net.layers) - 1
    for i, layer in enumerate(net.layers):
        z = h @ layer.weights.T + layer.bias
        h = z if i == last else layer.apply_activation(z)
        if check_finite and not np.all(np.isfinite(h)):
            raise NonFiniteError(i)
    return h[0] if single else h


# alias matching the operation name
eval = evaluate  # noqa: A001


def eval_augmented(net: Network, x) -> np.ndarray:
    """Evaluate a bias-free augmented network at the original input ``x``."""
    d = net.input_dim - 1
    xb, single = _as_batch(x, d)
    out = evaluate(net, np.column_stack([xb, np.ones(len(xb))]))
    return out[0] if single else out


def augment(net: Network) -> Network:
    """Bias-free form on inputs ``(x, 1)`` with one extra constant channel.

    Hidden layer l gets the block ``[[A_l, b_l / c], [0, 1 / c]]`` where ``c``
    is the value of the constant channel after the previous layer, i.e. the
    activation of that channel evaluated at 1.  The constant channel reuses
    the layer's activation tag (the first tag for mixed layers).
    """
    new_layers = []
    c_prev = 1.0
    last = len(net.layers) - 1
    for i, layer in enumerate(net.layers):
        W = layer.weights
        b = layer.bias / c_prev
        if i == last:
            A = np.column_stack([W, b])
            new_layers.append(Layer(A, np.zeros(W.shape[0]), layer.activations))
            break
        tag = layer.activations[0]
        c = float(get_activation(tag)(np.array([1.0]))[0])
        if abs(c) < NORM_SLACK:
            raise UnsupportedNormalizationError(
                f"layer {i}: activation {tag!r} vanishes at 1, cannot carry the constant")
        top = np.column_stack([W, b])
        bottom = np.zeros((1, W.shape[1] + 1))
        bottom[0, -1] = 1.0 / c_prev
        A = np.vstack([top, bottom])
        new_layers.append(Layer(A, np.zeros(A.shape[0]), layer.activations + (tag,)))
        c_prev = c
    layers = tuple(new_layers)
    I = constrained_set(layers)
    prod = float(np.prod([layers[i].norm() for i in I])) if I else 1.0
    cert = net.cert.replace(W=net.cert.W + 1, I=I, K=max(net.cert.K, prod))
    return Network(net.input_dim + 1, layers, cert)


@dataclass
class NormReport:
    ok: bool
    norms: list
    product: float
    K: float
    offending: list
    messages: list = field(default_factory=list)

    def __bool__(self):
        return self.ok


def check_norm_constraint(net: Network, slack: float = NORM_SLACK) -> NormReport:
    norms = net.norms()
    offending, msgs = [], []
    for i, n in enumerate(norms):
        if i in net.cert.I:
            if n < 1 - slack:
                offending.append(i)
                msgs.append(f"layer {i} is in I but has norm {n:.17g} < 1")
        elif n > 1 + slack:
            offending.append(i)
            msgs.append(f"layer {i} is outside I but has norm {n:.17g} > 1")
    prod = float(np.prod([norms[i] for i in sorted(net.cert.I)])) if net.cert.I else 1.0
    ok = not offending
    if net.cert.I and prod > net.cert.K * (1 + slack):
        ok = False
        msgs.append(f"product over I = {prod:.17g} exceeds K = {net.cert.K:.17g}")
    return NormReport(ok, norms, prod, net.cert.K, offending, msgs)


# ---------------------------------------------------------------------------
# grids and measurements


@dataclass(frozen=True)
class EvalGrid:
    lower: tuple
    upper: tuple
    points_per_axis: int

    def __post_init__(self):
        lo = tuple(float(v) for v in np.atleast_1d(self.lower))
        hi = tuple(float(v) for v in np.atleast_1d(self.upper))
        if len(lo) != len(hi):
            raise DimensionError("lower and upper bounds differ in length")
        if any(not a < b for a, b in zip(lo, hi)):
            raise ValueError("each axis needs lower < upper")
        if int(self.points_per_axis) < 1:
            raise ValueError("points_per_axis must be positive")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)
        object.__setattr__(self, "points_per_axis", int(self.points_per_axis))

    @property
    def dim(self) -> int:
        return len(self.lower)

    @property
    def size(self) -> int:
        return self.points_per_axis ** self.dim

    def axes(self) -> list[np.ndarray]:
        return [np.linspace(a, b, self.points_per_axis) for a, b in zip(self.lower, self.upper)]

    def points(self) -> np.ndarray:
        mesh = np.meshgrid(*self.axes(), indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=1)

    def chunks(self, size: int = CHUNK):
        """Yield consecutive blocks of grid points without materialising the grid."""
        axes = self.axes()
        n, d = self.points_per_axis, self.dim
        total = self.size
        for start in range(0, total, size):
            idx = np.arange(start, min(start + size, total))
            cols = []
            for j in range(d):
                stride = n ** (d - 1 - j)
                cols.append(axes[j][(idx // stride) % n])
            yield np.stack(cols, axis=1)


def default_grid(dim: int, lower=0.0, upper=1.0, budget: int = 10**6) -> EvalGrid:
    """10^5 + 1 points in one dimension, otherwise at most ``budget`` points."""
    if dim == 1:
        n = 10**5 + 1
    else:
        n = max(2, int(math.floor(budget ** (1.0 / dim) + 1e-9)))
    lo = np.broadcast_to(np.asarray(lower, float), (dim,))
    hi = np.broadcast_to(np.asarray(upper, float), (dim,))
    return EvalGrid(tuple(lo), tuple(hi), n)


def _call(model, x: np.ndarray) -> np.ndarray:
    out = model(x) if not isinstance(model, Network) else evaluate(model, x)
    out = np.asarray(out, dtype=float)
    if out.ndim == 1:
        out = out[:, None]
    return out


def sup_error(f: Callable, net, grid: EvalGrid) -> float:
    """Grid estimate of max |f(x) - net(x)|; ``f`` takes an (N, d) batch."""
    d = net.input_dim
    if grid.dim != d:
        raise DimensionError(f"grid has dim {grid.dim}, network expects {d}")
    worst = 0.0
    for pts in grid.chunks():
        diff = np.abs(_call(f, pts) - _call(net, pts))
        worst = max(worst, float(np.max(diff)))
    return worst


def measure_lipschitz_empirical(net, n_pairs: int, seed: int, domain=None) -> float:
    """Largest observed ratio ||net(x) - net(y)||_inf / ||x - y||_inf.

    Half of the pairs are independent uniform draws from ``domain`` (default
    ``[-1, 1]^d``); the other half are close pairs at random scales, which
    probe local slopes.  Coincident pairs are redrawn.
    """
    if n_pairs < 1:
        raise ValueError("n_pairs must be >= 1")
    d = net.input_dim
    if domain is None:
        lo, hi = -np.ones(d), np.ones(d)
    else:
        lo = np.broadcast_to(np.asarray(domain[0], float), (d,))
        hi = np.broadcast_to(np.asarray(domain[1], float), (d,))
    rng = np.random.default_rng(seed)
    n_far = (n_pairs + 1) // 2
    n_near = n_pairs - n_far
    x = rng.uniform(lo, hi, size=(n_pairs, d))
    y = np.empty_like(x)
    y[:n_far] = rng.uniform(lo, hi, size=(n_far, d))
    if n_near:
        scale = 10.0 ** rng.uniform(-6, -1, size=(n_near, 1))
        step = rng.uniform(-1, 1, size=(n_near, d)) * scale * (hi - lo)
        y[n_far:] = np.clip(x[n_far:] + step, lo, hi)
    gap = np.max(np.abs(x - y), axis=1)
    while np.any(gap == 0):
        bad = gap == 0
        y[bad] = rng.uniform(lo, hi, size=(int(bad.sum()), d))
        gap = np.max(np.abs(x - y), axis=1)
    best = 0.0
    for s in range(0, n_pairs, CHUNK):
        fx = _call(net, x[s:s + CHUNK])
        fy = _call(net, y[s:s + CHUNK])
        ratio = np.max(np.abs(fx - fy), axis=1) / gap[s:s + CHUNK]
        best = max(best, float(np.max(ratio)))
    return best


# ---------------------------------------------------------------------------
# serialization


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        f = float(v)
        if not math.isfinite(f):
            raise ValueError("cannot serialize non-finite value")
        s = format(f, ".17g")
        if "e" not in s and "." not in s:
            s += ".0"
        return s
    if isinstance(v, str):
        return json.dumps(v)
    if v is None:
        return "null"
    if isinstance(v, dict):
        return "{" + ",".join(f"{json.dumps(str(k))}:{_fmt(x)}" for k, x in v.items()) + "}"
    if isinstance(v, np.ndarray):
        v = v.tolist()
    if isinstance(v, (list, tuple)):
        return "[" + ",".join(_fmt(x) for x in v) + "]"
    raise TypeError(f"cannot serialize {type(v).__name__}")


def dumps_json(obj) -> str:
    """JSON text with every float written to 17 significant digits."""
    return _fmt(obj)


def network_to_dict(net: Network) -> dict:
    return {
        "input_dim": net.input_dim,
        "layers": [
            {"weights": [[float(v) for v in row] for row in l.weights],
             "bias": [float(v) for v in l.bias],
             "activations": list(l.activations)}
            for l in net.layers
        ],
        "cert": {"W": net.cert.W, "L": net.cert.L, "K": float(net.cert.K),
                 "I": sorted(net.cert.I), "output_dim": net.cert.output_dim},
    }


def serialize(net: Network) -> bytes:
    return dumps_json(network_to_dict(net)).encode("utf-8")


def _need(doc: dict, key: str, path: str):
    if not isinstance(doc, dict):
        raise ParseError(path, "expected an object")
    if key not in doc:
        raise ParseError(f"{path}.{key}", "missing field")
    return doc[key]


def network_from_dict(doc, path: str = "$") -> Network:
    input_dim = _need(doc, "input_dim", path)
    layers_doc = _need(doc, "layers", path)
    cert_doc = _need(doc, "cert", path)
    if not isinstance(layers_doc, list):
        raise ParseError(f"{path}.layers", "expected a list")
    layers = []
    for i, ld in enumerate(layers_doc):
        p = f"{path}.layers[{i}]"
        try:
            w = np.array(_need(ld, "weights", p), dtype=float)
            b = np.array(_need(ld, "bias", p), dtype=float)
        except (TypeError, ValueError) as exc:
            if isinstance(exc, ParseError):
                raise
            raise ParseError(p, f"non-numeric weights or bias ({exc})") from None
        acts = _need(ld, "activations", p)
        if not isinstance(acts, list) or not all(isinstance(a, str) for a in acts):
            raise ParseError(f"{p}.activations", "expected a list of tags")
        try:
            layers.append(Layer(w, b, tuple(acts)))
        except DimensionError as exc:
            raise ParseError(p, str(exc)) from None
    cp = f"{path}.cert"
    try:
        cert = ArchitectureCert(
            W=_need(cert_doc, "W", cp), L=_need(cert_doc, "L", cp),
            K=float(_need(cert_doc, "K", cp)), I=_need(cert_doc, "I", cp),
            output_dim=_need(cert_doc, "output_dim", cp))
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ParseError):
            raise
        raise ParseError(cp, str(exc)) from None
    try:
        return Network(int(input_dim), tuple(layers), cert)
    except DimensionError as exc:
        raise ParseError(path, str(exc)) from None


def deserialize(data) -> Network:
    """Parse a network document; raises ParseError or RegistryError."""
    if isinstance(data, (bytes, bytearray)):
        data = data.decode("utf-8")
    try:
        doc = json.loads(data)
    except json.JSONDecodeError as exc:
        raise ParseError("$", f"invalid JSON ({exc.msg} at char {exc.pos})") from None
    return network_from_dict(doc)


__all__ += ["network_to_dict", "network_from_dict", "RegistryError", "eval"]
