"""Activation registry with analytic metadata.

Every activation used inside a network is referenced by a string tag.  The
registry maps tags to an evaluator plus one of three kinds of metadata:

* ``TaylorSpec``: local cubic expansion with a quartic remainder bound,
  ``sigma(t) = a1 t + a2 t^2 + a3 t^3 + r(t)`` with ``|r(t)| <= M t^4`` on
  ``|t| <= rho``.
* ``WeakSpec``: only the even second difference at ``x0`` is controlled,
  ``|sigma(x0+h) + sigma(x0-h) - 2 sigma(x0) - gamma h^2| <= omega(|h|) h^2``.
* ``PiecewiseLinear``: relu, leaky relu, identity and the two clipping maps.

The metadata can be checked numerically with :func:`verify_taylor_spec` and
:func:`verify_weak_spec`.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from typing import Callable, Optional, Union

import numpy as np

__all__ = [
    "TaylorSpec",
    "WeakSpec",
    "PiecewiseLinear",
    "ActivationEntry",
    "ActivationRegistry",
    "RegistryError",
    "AssumptionViolatedError",
    "TaylorReport",
    "WeakReport",
    "builtin_registry",
    "get_activation",
    "register_activation",
    "verify_taylor_spec",
    "verify_weak_spec",
    "fit_taylor_coefficients",
]


class RegistryError(KeyError):
    """Unknown or duplicate activation tag."""

    def __str__(self):
        return str(self.args[0]) if self.args else "registry error"


class AssumptionViolatedError(ValueError):
    """The activation does not satisfy the assumption required by a construction."""


ScalarFn = Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True)
class TaylorSpec:
    a1: float
    a2: float
    a3: float
    M: float
    rho: float

    def __post_init__(self):
        if self.a2 == 0:
            raise AssumptionViolatedError("TaylorSpec requires a2 != 0")
        if not self.M > 0:
            raise ValueError("TaylorSpec requires M > 0")
        if not 0 < self.rho <= 1:
            raise ValueError("TaylorSpec requires 0 < rho <= 1")


@dataclass(frozen=True)
class WeakSpec:
    """Even-part modulus data at an expansion point ``x0``.

    ``weight_schedule(k, alpha)`` returns the inner weight ``w_k`` matched to
    the modulus (``omega(w_k) ~ k^-alpha``).  ``even_part`` optionally gives
    ``sigma(x0+h) + sigma(x0-h) - 2 sigma(x0)`` in closed form; builders use it
    when it is present.
    """

    x0: float
    gamma: float
    omega: ScalarFn
    rho: float
    weight_schedule: Callable[[float, float], float]
    even_part: Optional[ScalarFn] = None
    omega_label: str = ""

    def __post_init__(self):
        if self.gamma == 0:
            raise AssumptionViolatedError("WeakSpec requires gamma != 0")
        if not 0 < self.rho <= 1:
            raise ValueError("WeakSpec requires 0 < rho <= 1")


@dataclass(frozen=True)
class PiecewiseLinear:
    kind: str  # relu | leaky | identity | clip01 | clip11
    slope: float = 0.0  # negative-side slope for leaky

    def __post_init__(self):
        if self.kind not in ("relu", "leaky", "identity", "clip01", "clip11"):
            raise ValueError(f"unknown piecewise-linear kind {self.kind!r}")
        if self.kind == "leaky" and not 0 <= self.slope < 1:
            raise ValueError("leaky slope must lie in [0, 1)")


Metadata = Union[TaylorSpec, WeakSpec, PiecewiseLinear]


@dataclass(frozen=True)
class ActivationEntry:
    tag: str
    fn: ScalarFn
    meta: Metadata
    description: str = ""
    # |sigma'(0)|, used by the Rademacher witness for general activations
    slope_at_zero: Optional[float] = None

    def __call__(self, t):
        return self.fn(np.asarray(t, dtype=float))

    @property
    def taylor(self) -> Optional[TaylorSpec]:
        return self.meta if isinstance(self.meta, TaylorSpec) else None

    @property
    def weak(self) -> Optional[WeakSpec]:
        return self.meta if isinstance(self.meta, WeakSpec) else None


# ---------------------------------------------------------------------------
# evaluators


def _relu(t):
    return np.maximum(t, 0.0)


def _identity(t):
    return np.array(t, dtype=float, copy=True)


def _clip01(t):
    # relu(t) - relu(t - 1), written so that it is exact in floating point
    return np.minimum(np.maximum(t, 0.0), 1.0)


def _clip11(t):
    return np.minimum(np.maximum(t, -1.0), 1.0)


def _make_leaky(slope: float) -> ScalarFn:
    def leaky(t):
        return np.where(t >= 0, t, slope * t)

    return leaky


def _silu(t):
    # t * sigmoid(t), split by sign to avoid overflow in exp
    out = np.empty_like(t, dtype=float)
    pos = t >= 0
    out[pos] = t[pos] / (1.0 + np.exp(-t[pos]))
    e = np.exp(t[~pos])
    out[~pos] = t[~pos] * e / (1.0 + e)
    return out


def _gelu(t):
    from scipy.special import ndtr

    return t * ndtr(t)


def _case_a(t):
    a = np.abs(t)
    return t * t + a * a * a


HOLDER_B = 0.7


def _case_b(t):
    return t * t + np.abs(t) ** (2.0 + HOLDER_B)


def _case_c(t):
    a = np.minimum(np.abs(t), 1.0)
    with np.errstate(divide="ignore"):
        log_term = np.where(a > 0, 1.0 - np.log(np.where(a > 0, a, 1.0)), np.inf)
    return t * t * (1.0 + 1.0 / log_term)


def _case_d(t):
    return t * t + t * np.abs(t)


def _even_a(h):
    a = np.abs(h)
    return 2.0 * h * h + 2.0 * a * a * a


def _even_b(h):
    return 2.0 * h * h + 2.0 * np.abs(h) ** (2.0 + HOLDER_B)


def _even_c(h):
    a = np.minimum(np.abs(h), 1.0)
    with np.errstate(divide="ignore"):
        log_term = np.where(a > 0, 1.0 - np.log(np.where(a > 0, a, 1.0)), np.inf)
    return 2.0 * h * h * (1.0 + 1.0 / log_term)


def _even_d(h):
    return 2.0 * h * h


def _omega_log(t):
    t = np.asarray(t, dtype=float)
    with np.errstate(divide="ignore"):
        return np.where(t > 0, 2.0 / (1.0 - np.log(np.where(t > 0, t, 1.0))), 0.0)


def _power_schedule(beta: float):
    return lambda k, alpha: float(k) ** (-alpha / beta)


def _log_schedule(k, alpha):
    return math.exp(1.0 - float(k) ** alpha)


# ---------------------------------------------------------------------------
# registry

_LEAKY_RE = re.compile(r"^leaky\(([^)]+)\)$")


class ActivationRegistry:
    """Tag -> :class:`ActivationEntry` lookup.

    ``leaky(a)`` tags are materialised on demand for any ``a`` in ``[0, 1)``.
    """

    def __init__(self, entries=()):
        self._entries: dict[str, ActivationEntry] = {}
        for e in entries:
            self.add(e)

    def add(self, entry: ActivationEntry) -> None:
        if entry.tag in self._entries or _LEAKY_RE.match(entry.tag):
            raise RegistryError(f"activation tag {entry.tag!r} already registered")
        self._entries[entry.tag] = entry

    def __contains__(self, tag) -> bool:
        try:
            self.get(tag)
        except RegistryError:
            return False
        return True

    def get(self, tag: str) -> ActivationEntry:
        entry = self._entries.get(tag)
        if entry is not None:
            return entry
        m = _LEAKY_RE.match(tag) if isinstance(tag, str) else None
        if m:
            try:
                slope = float(m.group(1))
            except ValueError:
                raise RegistryError(f"malformed leaky tag {tag!r}") from None
            if not 0 <= slope < 1:
                raise RegistryError(f"leaky slope out of [0,1) in {tag!r}")
            entry = ActivationEntry(
                tag,
                _make_leaky(slope),
                PiecewiseLinear("leaky", slope),
                f"leaky relu with negative slope {slope}",
            )
            self._entries[tag] = entry
            return entry
        raise RegistryError(f"unknown activation tag {tag!r}")

    def tags(self) -> list[str]:
        return sorted(self._entries)

    def __iter__(self):
        return iter(list(self._entries.values()))


def builtin_registry() -> ActivationRegistry:
    entries = [
        ActivationEntry("relu", _relu, PiecewiseLinear("relu"), "max(z, 0)", 1.0),
        ActivationEntry("identity", _identity, PiecewiseLinear("identity"), "z", 1.0),
        ActivationEntry(
            "clip01", _clip01, PiecewiseLinear("clip01"), "relu(z) - relu(z - 1)"
        ),
        ActivationEntry(
            "clip11", _clip11, PiecewiseLinear("clip11"), "relu(z + 1) - relu(z - 1) - 1"
        ),
        ActivationEntry(
            "silu",
            _silu,
            TaylorSpec(a1=0.5, a2=0.25, a3=0.0, M=0.022, rho=1.0),
            "t / (1 + exp(-t))",
            0.5,
        ),
        ActivationEntry(
            "gelu",
            _gelu,
            TaylorSpec(a1=0.5, a2=1.0 / math.sqrt(2.0 * math.pi), a3=0.0, M=0.07, rho=1.0),
            "t * Phi(t), Phi the standard normal cdf",
            0.5,
        ),
        ActivationEntry(
            "caseA",
            _case_a,
            WeakSpec(0.0, 2.0, lambda t: 2.0 * np.asarray(t, float), 1.0,
                     _power_schedule(1.0), _even_a, "2t"),
            "x^2 + |x|^3",
        ),
        ActivationEntry(
            "caseB",
            _case_b,
            WeakSpec(0.0, 2.0, lambda t: 2.0 * np.asarray(t, float) ** HOLDER_B, 1.0,
                     _power_schedule(HOLDER_B), _even_b, f"2t^{HOLDER_B}"),
            f"x^2 + |x|^(2+{HOLDER_B})",
        ),
        ActivationEntry(
            "caseC",
            _case_c,
            WeakSpec(0.0, 2.0, _omega_log, 1.0, _log_schedule, _even_c, "2/log(e/t)"),
            "x^2 (1 + 1/log(e/|x|)), saturated at |x| = 1",
        ),
        ActivationEntry(
            "caseD",
            _case_d,
            WeakSpec(0.0, 2.0, lambda t: np.zeros_like(np.asarray(t, float)), 1.0,
                     _power_schedule(2.0), _even_d, "0"),
            "x^2 + x|x|",
        ),
    ]
    return ActivationRegistry(entries)


_REGISTRY = builtin_registry()


def get_activation(tag: str) -> ActivationEntry:
    return _REGISTRY.get(tag)


def register_activation(entry: ActivationEntry) -> None:
    """Add a user activation to the process-wide registry (startup only)."""
    _REGISTRY.add(entry)


def default_registry() -> ActivationRegistry:
    return _REGISTRY


# ---------------------------------------------------------------------------
# verification


def fit_taylor_coefficients(fn: ScalarFn, step: float = 1e-3) -> tuple[float, float, float]:
    """Central finite-difference fit of (a1, a2, a3) at zero.

    Five-point stencils at ``step`` and ``step/2`` combined by one Richardson
    extrapolation.
    """

    def derivs(h):
        t = np.array([-2 * h, -h, 0.0, h, 2 * h])
        fm2, fm1, f0, fp1, fp2 = fn(t)
        d1 = (fm2 - 8 * fm1 + 8 * fp1 - fp2) / (12 * h)
        d2 = (-fm2 + 16 * fm1 - 30 * f0 + 16 * fp1 - fp2) / (12 * h * h)
        d3 = (fp2 - 2 * fp1 + 2 * fm1 - fm2) / (2 * h**3)
        return d1, d2, d3

    D1, D2, D3 = derivs(step)
    H1, H2, H3 = derivs(step / 2)
    d1 = (16 * H1 - D1) / 15
    d2 = (16 * H2 - D2) / 15
    d3 = (4 * H3 - D3) / 3
    return float(d1), float(d2 / 2), float(d3 / 6)


@dataclass
class TaylorReport:
    tag: str
    fitted: tuple[float, float, float]
    declared: tuple[float, float, float]
    M_hat: float
    M: float
    rho: float
    passed: bool
    notes: list[str] = field(default_factory=list)


def verify_taylor_spec(entry: ActivationEntry, grid_points: int = 20001) -> TaylorReport:
    spec = entry.taylor
    if spec is None:
        raise TypeError(f"{entry.tag!r} carries no TaylorSpec")
    a1, a2, a3 = fit_taylor_coefficients(entry.fn)
    if abs(a2) < 1e-10:
        raise AssumptionViolatedError(
            f"{entry.tag!r}: fitted a2 = {a2:.3e}, the quadratic coefficient vanishes"
        )
    t = np.linspace(-spec.rho, spec.rho, grid_points)
    t = t[np.abs(t) >= 1e-4]
    r = entry.fn(t) - (spec.a1 * t + spec.a2 * t**2 + spec.a3 * t**3)
    M_hat = float(np.max(np.abs(r) / t**4))
    notes = []
    ok = True
    for name, fit, dec in zip(("a1", "a2", "a3"), (a1, a2, a3), (spec.a1, spec.a2, spec.a3)):
        if abs(fit - dec) > 1e-6:
            ok = False
            notes.append(f"{name}: fitted {fit:.10g} vs declared {dec:.10g}")
    if M_hat > spec.M * (1 + 1e-6):
        ok = False
        notes.append(f"M_hat {M_hat:.6g} exceeds declared M {spec.M:.6g}")
    return TaylorReport(entry.tag, (a1, a2, a3), (spec.a1, spec.a2, spec.a3),
                        M_hat, spec.M, spec.rho, ok, notes)


@dataclass
class WeakReport:
    tag: str
    passed: bool
    worst_ratio: float
    worst_h: float
    n_points: int


def verify_weak_spec(entry: ActivationEntry, grid_points: int = 2000,
                     omega: Optional[ScalarFn] = None) -> WeakReport:
    """Check the even-part modulus inequality on a log grid of h in (0, rho].

    ``worst_ratio`` is max |defect| / (omega(h) h^2); the check passes when the
    defect stays within ``omega(h) h^2 (1 + 1e-9)`` plus a few ulps of the
    evaluated terms.  ``omega`` overrides the declared modulus.
    """
    spec = entry.weak
    if spec is None:
        raise TypeError(f"{entry.tag!r} carries no WeakSpec")
    om = omega if omega is not None else spec.omega
    h = np.geomspace(1e-6 * spec.rho, spec.rho, grid_points)
    hh = np.concatenate([h, -h])
    x0 = spec.x0
    fp = entry.fn(x0 + hh)
    fm = entry.fn(x0 - hh)
    f0 = float(entry.fn(np.array([x0]))[0])
    defect = np.abs(fp + fm - 2 * f0 - spec.gamma * hh**2)
    allowed = np.asarray(om(np.abs(hh)), float) * hh**2
    floor = 4 * np.finfo(float).eps * (np.abs(fp) + np.abs(fm) + 2 * abs(f0))
    ok = bool(np.all(defect <= allowed * (1 + 1e-9) + floor))
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(allowed > 0, defect / allowed, np.where(defect > floor, np.inf, 0.0))
    i = int(np.argmax(ratio))
    return WeakReport(entry.tag, ok, float(ratio[i]), float(abs(hh[i])), hh.size)
