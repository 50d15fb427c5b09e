"""Network algebra: padding, composition, concatenation, linear combination.

Certificates are propagated from the operands' declared certificates, never
re-measured.  The constrained set I of a result is recomputed structurally
(layers with norm >= 1), since the operations do not determine it.
"""

from __future__ import annotations

from functools import reduce
from typing import Sequence

import numpy as np

from .network import (
    ArchitectureCert,
    DimensionError,
    Layer,
    Network,
    constrained_set,
    op_norm_inf,
)

__all__ = [
    "identity_network",
    "affine_network",
    "pad",
    "compose",
    "compose_affine",
    "concat",
    "lincomb",
    "lincomb_many",
]


def _cert(layers, W, L, K) -> ArchitectureCert:
    I = constrained_set(layers)
    K = max(float(K), 1.0) if I else float(K)
    return ArchitectureCert(W=W, L=L, K=K, I=I, output_dim=layers[-1].n_out)


def identity_network(dim: int, depth: int = 0) -> Network:
    """x -> x through ``depth`` identity-tagged hidden layers."""
    eye = np.eye(dim)
    layers = [Layer(eye, np.zeros(dim), ("identity",) * dim) for _ in range(depth + 1)]
    return Network(dim, tuple(layers), _cert(layers, dim, depth, 1.0))


def affine_network(A, b=None) -> Network:
    """Depth-zero network x -> Ax + b with K = ||[A b]||."""
    A = np.array(A, dtype=float, ndmin=2)
    b = np.zeros(A.shape[0]) if b is None else np.asarray(b, float)
    layer = Layer(A, b, ("identity",) * A.shape[0])
    return Network(A.shape[1], (layer,),
                   _cert([layer], A.shape[0], 0, max(layer.norm(), 1e-300)))


def _deepen(net: Network, depth: int) -> Network:
    """Same function with exactly ``depth`` hidden layers.

    The old output map becomes an identity-tagged hidden layer and identity
    copies of the output channels follow it.
    """
    extra = depth - net.depth
    if extra <= 0:
        return net
    out = net.layers[-1]
    m = out.n_out
    body = list(net.layers[:-1])
    body.append(Layer(out.weights, out.bias, ("identity",) * m))
    eye = np.eye(m)
    for _ in range(extra):
        body.append(Layer(eye, np.zeros(m), ("identity",) * m))
    layers = tuple(body)
    c = net.cert
    cert = c.replace(W=max(c.W, m), L=max(c.L, depth), I=constrained_set(layers))
    return Network(net.input_dim, layers, cert)


def pad(net: Network, W2: int, L2: int) -> Network:
    """Embed ``net`` into width ``W2`` and depth ``L2`` without changing its function.

    Missing depth is filled with identity-tagged layers in front of the output
    map.  Extra width needs no new weights: zero channels change no layer norm.
    """
    c = net.cert
    if W2 < c.W or L2 < c.L:
        raise ValueError(f"cannot pad ({c.W}, {c.L}) down to ({W2}, {L2})")
    if L2 > net.depth and net.output_dim > W2:
        raise ValueError(f"output dim {net.output_dim} does not fit in width {W2}")
    deep = _deepen(net, L2)
    return Network(net.input_dim, deep.layers, deep.cert.replace(W=W2, L=L2))


def _fuse(outer_first: Layer, inner_last: Layer) -> Layer:
    A = outer_first.weights @ inner_last.weights
    b = outer_first.weights @ inner_last.bias + outer_first.bias
    return Layer(A, b, outer_first.activations)


def compose(outer: Network, inner: Network) -> Network:
    """x -> outer(inner(x)); the boundary affine maps are fused into one layer."""
    if inner.output_dim != outer.input_dim:
        raise DimensionError(
            f"inner output dim {inner.output_dim} != outer input dim {outer.input_dim}")
    fused = _fuse(outer.layers[0], inner.layers[-1])
    layers = inner.layers[:-1] + (fused,) + outer.layers[1:]
    W = max(inner.cert.W, outer.cert.W)
    L = inner.cert.L + outer.cert.L
    return Network(inner.input_dim, layers, _cert(layers, W, L, inner.cert.K * outer.cert.K))


def compose_affine(net: Network, A, b=None) -> Network:
    """x -> net(Ax + b) with K multiplied by ||[A b]||."""
    A = np.array(A, dtype=float, ndmin=2)
    b = np.zeros(A.shape[0]) if b is None else np.asarray(b, float).reshape(-1)
    if A.shape[0] != net.input_dim or b.shape[0] != A.shape[0]:
        raise DimensionError(
            f"affine map {A.shape} cannot feed a network with input dim {net.input_dim}")
    first = net.layers[0]
    fused = Layer(first.weights @ A, first.weights @ b + first.bias, first.activations)
    layers = (fused,) + net.layers[1:]
    scale = op_norm_inf(np.column_stack([A, b]))
    return Network(A.shape[1], layers,
                   _cert(layers, net.cert.W, net.cert.L, scale * net.cert.K))


def _block_diag(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    out = np.zeros((a.shape[0] + b.shape[0], a.shape[1] + b.shape[1]))
    out[: a.shape[0], : a.shape[1]] = a
    out[a.shape[0]:, a.shape[1]:] = b
    return out


def _equalize_depth(a: Network, b: Network) -> tuple[Network, Network]:
    L = max(a.depth, b.depth)
    return _deepen(a, L), _deepen(b, L)


def _parallel_layers(a: Network, b: Network) -> list[Layer]:
    """Block-diagonal stacking of two equal-depth networks on a shared input."""
    layers = []
    for i, (x, y) in enumerate(zip(a.layers, b.layers)):
        if i == 0:
            W = np.vstack([x.weights, y.weights])
        else:
            W = _block_diag(x.weights, y.weights)
        layers.append(Layer(W, np.concatenate([x.bias, y.bias]),
                            x.activations + y.activations))
    return layers


def concat(a: Network, b: Network) -> Network:
    """x -> (a(x), b(x)) with cert (W1 + W2, max L, max K)."""
    if a.input_dim != b.input_dim:
        raise DimensionError(f"input dims differ: {a.input_dim} vs {b.input_dim}")
    ca, cb = a.cert, b.cert
    a2, b2 = _equalize_depth(a, b)
    layers = _parallel_layers(a2, b2)
    W = max(ca.W + cb.W, max((l.n_out for l in layers[:-1]), default=1))
    L = max(ca.L, cb.L)
    return Network(a.input_dim, tuple(layers), _cert(layers, W, L, max(ca.K, cb.K)))


def lincomb(c1: float, a: Network, c2: float, b: Network) -> Network:
    """x -> c1 a(x) + c2 b(x) with K = |c1| K1 + |c2| K2."""
    if a.input_dim != b.input_dim or a.output_dim != b.output_dim:
        raise DimensionError("lincomb needs equal input and output dims")
    return lincomb_many([c1, c2], [a, b])


def lincomb_many(coeffs: Sequence[float], nets: Sequence[Network]) -> Network:
    """Sum_i c_i net_i(x) in one block-parallel network.

    Equivalent to folding :func:`lincomb`; the certificate is
    (sum W_i, max L_i, sum |c_i| K_i).
    """
    if not nets or len(coeffs) != len(nets):
        raise ValueError("need one coefficient per network")
    d, m = nets[0].input_dim, nets[0].output_dim
    if any(n.input_dim != d or n.output_dim != m for n in nets):
        raise DimensionError("lincomb needs equal input and output dims")
    L = max(n.depth for n in nets)
    padded = [_deepen(n, L) for n in nets]
    if L == 0:
        A = sum(c * n.layers[0].weights for c, n in zip(coeffs, padded))
        b = sum(c * n.layers[0].bias for c, n in zip(coeffs, padded))
        layers = [Layer(A, b, ("identity",) * m)]
    else:
        hidden = [list(n.layers[:-1]) for n in padded]
        layers = []
        for i in range(L):
            parts = [h[i] for h in hidden]
            if i == 0:
                W = np.vstack([p.weights for p in parts])
            else:
                W = reduce(_block_diag, [p.weights for p in parts])
            layers.append(Layer(W, np.concatenate([p.bias for p in parts]),
                                sum((p.activations for p in parts), ())))
        A = np.hstack([c * n.layers[-1].weights for c, n in zip(coeffs, padded)])
        b = sum(c * n.layers[-1].bias for c, n in zip(coeffs, padded))
        layers.append(Layer(A, b, ("identity",) * m))
    K = sum(abs(c) * n.cert.K for c, n in zip(coeffs, nets))
    W = max(sum(n.cert.W for n in nets), max((l.n_out for l in layers[:-1]), default=1))
    Lc = max(n.cert.L for n in nets)
    if K == 0:
        K = 1e-300
    return Network(d, tuple(layers), _cert(layers, W, Lc, K))
