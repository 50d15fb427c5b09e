"""Experiment drivers behind the command-line interface.

Each driver returns plain rows (dataclasses) and leaves formatting to the
writers at the bottom of this module, so the same numbers feed CSV files,
terminal tables and tests.
"""

from __future__ import annotations

import csv
import io
import math
import warnings
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np

from . import deterministic as det
from . import rademacher as rad
from . import randomized as rnd
from .activations import get_activation
from .network import EvalGrid, default_grid, evaluate, sup_error

__all__ = [
    "ExperimentRow",
    "PlotSpec",
    "SweepRow",
    "table_c",
    "table_c_csv",
    "table_c_latex",
    "table_c_text",
    "plot_case",
    "rate_sweep",
    "rand_verify",
    "rademacher_audit",
    "lipr_default_target",
    "format_float",
    "write_csv",
]

TABLE_SCHEMA = "table-c/1"
CSV_FLOAT = ".17g"


def format_float(v) -> str:
    if isinstance(v, (float, np.floating)):
        return format(float(v), CSV_FLOAT)
    return str(v)


def write_csv(rows: Sequence[dict], columns: Sequence[str], path=None, comment: str = "") -> str:
    """Render rows to CSV text (17 significant digits) and optionally write it."""
    buf = io.StringIO()
    if comment:
        buf.write(f"# {comment}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([format_float(r[c]) for c in columns])
    text = buf.getvalue()
    if path is not None:
        Path(path).write_text(text)
    return text


# ---------------------------------------------------------------------------
# weak-regularity table


@dataclass
class ExperimentRow:
    case: str
    k: int
    alpha: float
    w_k: float
    d_k: float
    err_unclipped: float
    err_clipped: float
    predicted: float
    min_phi: float
    max_phi: float

    def as_dict(self) -> dict:
        return asdict(self)


TABLE_COLUMNS = ["case", "k", "alpha", "w_k", "d_k", "err_unclipped", "err_clipped",
                 "predicted", "min_phi", "max_phi"]


def table_c(alpha: float = 1.0, k_list: Sequence[int] = (8, 16, 32, 64),
            cases: Sequence[str] = ("A", "B", "C", "D"), grid_size: int = 10**5 + 1,
            closed_form: bool = True) -> list[ExperimentRow]:
    """One row per (case, k) for the square approximant of the even-modulus cases.

    Errors are maxima over ``grid_size`` uniform points of [0, 1].  With
    ``closed_form`` the unclipped map uses the activation's analytic even
    part; otherwise the network is evaluated directly.
    """
    if grid_size < 10**3:
        warnings.warn(f"grid of {grid_size} points is coarse; errors may be underestimated")
    x = np.linspace(0.0, 1.0, int(grid_size))
    rows = []
    for case in cases:
        tag = "case" + case.upper()
        for k in k_list:
            a = det.build_square_weak(det.SquareBuildParams(k, alpha, tag))
            if closed_form and a.closed_form is not None:
                phi = a.closed_form(x)
            else:
                phi = evaluate(a.unclipped, x)[:, 0]
            clipped = np.clip(phi, 0.0, 1.0)
            rows.append(ExperimentRow(
                case.upper(), int(k), float(alpha), a.info["w"], a.info["d"],
                float(np.max(np.abs(phi - x * x))), float(np.max(np.abs(clipped - x * x))),
                float(a.predicted_bound), float(np.min(phi)), float(np.max(phi))))
    return rows


def table_c_csv(rows: Sequence[ExperimentRow], path=None) -> str:
    return write_csv([r.as_dict() for r in rows], TABLE_COLUMNS, path,
                     comment=f"schema {TABLE_SCHEMA}")


def _tex_num(v: float, digits: int = 4) -> str:
    if v == 0:
        return "0.0"
    if abs(v) >= 1e5 or abs(v) < 1e-3:
        mant, ex = f"{v:.{digits - 2}e}".split("e")
        return f"${mant} \\cdot 10^{{{int(ex)}}}$"
    return f"{v:.{digits}f}"


def table_c_latex(rows: Sequence[ExperimentRow]) -> str:
    lines = []
    for r in rows:
        cells = [r.case, str(r.k), f"{r.alpha:.1f}", _tex_num(r.w_k), _tex_num(r.d_k, 3),
                 _tex_num(r.err_unclipped), _tex_num(r.err_clipped), _tex_num(r.predicted),
                 _tex_num(r.min_phi), _tex_num(r.max_phi)]
        lines.append(" & ".join(cells) + r" \\")
    return "\n".join(lines) + "\n"


def table_c_text(rows: Sequence[ExperimentRow]) -> str:
    head = f"{'case':>4} {'k':>4} {'alpha':>5} {'w_k':>11} {'d_k':>11} {'err':>9} " \
           f"{'clipped':>9} {'pred':>9} {'min':>7} {'max':>7}"
    out = [head]
    for r in rows:
        out.append(f"{r.case:>4} {r.k:>4} {r.alpha:>5.2f} {r.w_k:>11.4g} {r.d_k:>11.5g} "
                   f"{r.err_unclipped:>9.4f} {r.err_clipped:>9.4f} {r.predicted:>9.4f} "
                   f"{r.min_phi:>7.4f} {r.max_phi:>7.4f}")
    return "\n".join(out) + "\n"


# ---------------------------------------------------------------------------
# figures


@dataclass
class PlotSpec:
    curves: list  # (label, x, y, style)
    xlabel: str
    ylabel: str
    path: str
    fmt: str = "svg"

    def __post_init__(self):
        for label, xs, ys, style in self.curves:
            if len(xs) != len(ys):
                raise ValueError(f"curve {label!r}: x and y lengths differ")
            if style not in ("solid", "dashed"):
                raise ValueError(f"curve {label!r}: unknown style {style!r}")
        if self.fmt not in ("svg", "png"):
            raise ValueError("format must be svg or png")


def render(spec: PlotSpec) -> Path:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(5.0, 3.6))
    for i, (label, xs, ys, style) in enumerate(spec.curves):
        ax.plot(xs, ys, linestyle="-" if style == "solid" else "--", color=f"C{i // 2}",
                label=label, linewidth=1.2)
    ax.set_xlabel(spec.xlabel)
    ax.set_ylabel(spec.ylabel)
    ax.legend(fontsize=7)
    fig.tight_layout()
    path = Path(spec.path)
    fig.savefig(path, format=spec.fmt)
    plt.close(fig)
    return path


def plot_case(case: str, k_list: Sequence[int], out_dir, fmt: str = "svg",
              alpha: float = 1.0, n_points: int = 2001) -> list[Path]:
    """Approximation and absolute-error panels for one even-modulus case."""
    case = case.upper()
    if case not in ("A", "B", "C"):
        raise ValueError("plots are produced for cases A, B and C")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    x = np.linspace(0.0, 1.0, n_points)
    approx, err = [], []
    for k in k_list:
        a = det.build_square_weak(det.SquareBuildParams(k, alpha, "case" + case))
        phi = a.closed_form(x) if a.closed_form is not None else evaluate(a.unclipped, x)[:, 0]
        clipped = np.clip(phi, 0.0, 1.0)
        approx += [(f"Phi k={k}", x, phi, "solid"), (f"clip k={k}", x, clipped, "dashed")]
        err += [(f"Phi k={k}", x, np.abs(phi - x * x), "solid"),
                (f"clip k={k}", x, np.abs(clipped - x * x), "dashed")]
    approx.append(("x^2", x, x * x, "solid"))
    paths = [
        render(PlotSpec(approx, "x", "value", str(out_dir / f"case{case}_approx.{fmt}"), fmt)),
        render(PlotSpec(err, "x", "absolute error", str(out_dir / f"case{case}_abserr.{fmt}"), fmt)),
    ]
    return paths


# ---------------------------------------------------------------------------
# rate sweeps


@dataclass
class SweepRow:
    k: float
    measured: float
    predicted: float
    note: str = ""


def lipr_default_target(d: int, m: int) -> det.LiprTarget:
    """A Lip_r member for any (d, m) with an exact derivative oracle.

    m = 0: mean of tent functions min(x_i, 1 - x_i) (1-Lipschitz in the sup norm).
    m >= 1: mean of cos(x_i); mixed partials vanish.
    """
    if m == 0:
        return det.LiprTarget(lambda x: np.mean(np.minimum(x, 1.0 - x), axis=1), d,
                              derivative=lambda s, x: np.mean(np.minimum(x, 1.0 - x), axis=1),
                              name="tent")

    def deriv(s, x):
        nz = [i for i, v in enumerate(s) if v > 0]
        if not nz:
            return np.mean(np.cos(x), axis=1)
        if len(nz) > 1:
            return np.zeros(len(x))
        i = nz[0]
        p = s[i]
        return np.cos(x[:, i] + p * math.pi / 2) / d

    return det.LiprTarget(lambda x: np.mean(np.cos(x), axis=1), d, derivative=deriv,
                          name="cos-mean")


def _grid_for(d: int, lo: float, hi: float) -> EvalGrid:
    return default_grid(d, lo, hi)


def _random_supplement(model, target, d, lo, hi, n=10**4, seed=0) -> float:
    x = np.random.default_rng(seed).uniform(lo, hi, size=(n, d))
    return float(np.max(np.abs(np.asarray(target(x)).reshape(-1) -
                               np.asarray(model(x)).reshape(n, -1)[:, 0])))


def measure(approx: det.CertifiedApproximator, grid: Optional[EvalGrid] = None) -> float:
    """Grid sup error, with a random supplement in three or more dimensions."""
    lo, hi = approx.info.get("domain", (0.0, 1.0))
    d = approx.input_dim
    g = grid or _grid_for(d, lo, hi)
    err = sup_error(approx.target_fn, approx.network, g)
    if d >= 3:
        err = max(err, _random_supplement(approx.network, approx.target_fn, d, lo, hi))
    return err


def build_target(target: str, activation: str, alpha: float, k: float, d: int = 2,
                 m: int = 0, beta: float = 1.0) -> det.CertifiedApproximator:
    if target == "square":
        return det.build_square(det.SquareBuildParams(k, alpha, activation))
    if target == "product2":
        return det.build_product2(k, alpha, activation)
    if target == "product_d":
        return det.build_product_d(d, k, alpha, activation)
    if target == "lipr":
        f = lipr_default_target(d, m)
        return det.build_lipr(det.LiprBuildParams(d, m, beta, alpha, k, f, activation))
    raise ValueError(f"unknown target {target!r}")


def rate_sweep(target: str, activation: str, alpha: float, k_list: Sequence[float],
               d: int = 2, m: int = 0, beta: float = 1.0,
               grid: Optional[EvalGrid] = None) -> tuple[list[SweepRow], Optional[float]]:
    """Measured and predicted errors per k plus the log-log slope of the measured ones."""
    if len(k_list) < 4:
        raise ValueError("a rate sweep needs at least four values of k")
    rows = []
    for k in k_list:
        try:
            a = build_target(target, activation, alpha, k, d, m, beta)
        except det.PreconditionError as exc:
            rows.append(SweepRow(float(k), math.nan, math.nan, f"skipped: {exc}"))
            continue
        rows.append(SweepRow(float(k), measure(a, grid), float(a.predicted_bound)))
    good = [r for r in rows if r.measured > 0 and math.isfinite(r.measured)]
    slope = det.fit_loglog([r.k for r in good], [r.measured for r in good]).slope \
        if len(good) >= 2 else None
    return rows, slope


# ---------------------------------------------------------------------------
# randomized verification


RAND_COLUMNS = ["case", "k", "alpha", "eps", "trials", "freq", "predicted", "margin"]


@dataclass
class RandRow:
    case: str
    k: int
    alpha: float
    eps: float
    trials: int
    freq: float
    predicted: float
    margin: float
    vacuous: bool
    violation: bool

    def as_dict(self):
        return asdict(self)


def _row(case, k, alpha, rec: rnd.SuccessRecord) -> RandRow:
    return RandRow(case, int(k), float(alpha), rec.eps, rec.trials, rec.empirical_freq,
                   rec.predicted_lower, rec.margin, rec.vacuous, not rec.dominated)


CONSTRUCTIONS = {"square": 6, "bilinear": 7, "tree": 8, "smooth": 9}


def rand_verify(construction, k: int, alpha: float, eps_list: Optional[Sequence[float]],
                trials: int, seed: int, points=None, activation: str = "silu",
                d: int = 4, m: int = 0, beta: float = 1.0) -> list[RandRow]:
    """Monte Carlo success frequencies against the closed-form lower bounds.

    ``eps_list`` entries are absolute tolerances; ``None`` uses 2 eps0.
    Points default to {0, .3, .7, 1} (square), (+-.5, +-.5) (bilinear), a
    fixed point in [-1, 1]^d (tree) and 10^3 grid points (smooth target).
    ``construction`` is a name from :data:`CONSTRUCTIONS` or its numeric code.
    """
    lemma = CONSTRUCTIONS.get(construction, construction)
    entry = get_activation(activation)
    spec = entry.taylor
    rows = []
    if lemma == 6:
        consts = rnd.square_constants(k, alpha, spec.M, spec.a2)
        pts = np.asarray(points if points is not None else [0.0, 0.3, 0.7, 1.0], float).reshape(-1)
        V = rnd.mc_square(k, alpha, activation, pts, trials, seed)
        for eps in eps_list or [2 * consts.eps0]:
            pred, vac = rnd.square_success_bound(eps, k, consts)
            for j, x in enumerate(pts):
                rec = rnd.success_record(np.abs(V[:, j] - x * x), eps, pred, vac, x)
                rows.append(_row(f"square x={x:g}", k, alpha, rec))
    elif lemma == 7:
        consts = rnd.bilinear_constants(k, alpha, spec.M, spec.a2)
        pts = np.asarray(points if points is not None else
                         [(0.5, 0.5), (0.5, -0.5), (-0.5, 0.5), (-0.5, -0.5)], float).reshape(-1, 2)
        V = rnd.mc_product2(k, alpha, activation, pts, trials, seed)
        for eps in eps_list or [2 * consts.eps0]:
            pred, vac = rnd.product2_success_bound(eps, k, consts)
            for j, (x, y) in enumerate(pts):
                rec = rnd.success_record(np.abs(V[:, j] - x * y), eps, pred, vac, (x, y))
                rows.append(_row(f"bilinear x={x:g} y={y:g}", k, alpha, rec))
    elif lemma == 8:
        consts = rnd.bilinear_constants(k, alpha, spec.M, spec.a2)
        D = det._tree_depth(d)
        pts = np.asarray(points if points is not None else
                         [np.linspace(0.9, 0.5, d)], float).reshape(-1, d)
        for p in pts:
            V = rnd.mc_product_d(d, k, alpha, activation, p, trials, seed)
            truth = float(np.prod(p))
            for eps in eps_list or [4 * (2 ** D - 1) * consts.eps0]:
                with warnings.catch_warnings():
                    warnings.simplefilter("ignore", rnd.VacuousBoundWarning)
                    pred, vac = rnd.product_d_success_bound(eps, d, k, consts)
                rec = rnd.success_record(np.abs(V - truth), eps, pred, vac, p)
                rows.append(_row(f"tree d={d} x={','.join(f'{v:g}' for v in p)}",
                                 k, alpha, rec))
    elif lemma == 9:
        consts = rnd.lipr_random_constants(d, k, alpha, spec.M, spec.a2)
        f = lipr_default_target(d, m)
        if points is None:
            n_side = max(2, int(round(1000 ** (1.0 / d))))
            pts = default_grid(d, 0.0, 1.0, budget=n_side ** d).points() if d > 1 \
                else np.linspace(0.0, 1.0, 1000)[:, None]
        else:
            pts = np.asarray(points, float).reshape(-1, d)
        truth = f(pts)
        params = det.LiprBuildParams(d, m, beta, alpha, k, f, activation)
        errs = np.empty((trials, len(pts)))
        for t in range(trials):
            rep = rnd.build_random_lipr(params, rnd.RngSpec(seed, t))
            errs[t] = np.abs(rep.network(pts) - truth)
        for eps in eps_list or [0.1]:
            tol = consts.F * eps + consts.G * k ** (-alpha)
            pred, vac = rnd.lipr_success_bound(eps, d, m, k, consts)
            freqs = np.mean(errs <= tol, axis=0)
            j = int(np.argmin(freqs))
            rec = rnd.success_record(errs[:, j], tol, pred, vac, pts[j])
            rec = rnd.SuccessRecord(rec.trials, float(eps), rec.empirical_freq, pred, vac, rec.point)
            rows.append(_row(f"smooth d={d} worst of {len(pts)} points", k, alpha, rec))
    else:
        raise ValueError(f"unknown construction {construction!r}; use one of {sorted(CONSTRUCTIONS)}")
    return rows


# ---------------------------------------------------------------------------
# Rademacher audits


RAD_COLUMNS = ["panel", "n", "d", "family", "estimate", "stderr", "mode", "upper",
               "lower_relu", "lower_general", "verdict"]


def parse_family(spec: str, d: int, rng: np.random.Generator):
    """Family specs: relu[:K], leaky:a[:K], general:TAG[:K], lipschitz[:K[:L[:width[:size]]]]."""
    if not spec:
        raise ValueError("empty family spec")
    parts = spec.split(":")
    kind = parts[0]
    if kind == "relu":
        K = float(parts[1]) if len(parts) > 1 else 2.0
        return "relu", rad.build_rad_witness_relu(K, d), {"K": K, "leak": 0.0}
    if kind == "leaky":
        a = float(parts[1])
        K = float(parts[2]) if len(parts) > 2 else 2.0
        return "relu", rad.build_rad_witness_relu(K, d, f"leaky({a:g})"), {"K": K, "leak": a}
    if kind == "general":
        tag = parts[1] if len(parts) > 1 else "silu"
        K = float(parts[2]) if len(parts) > 2 else 2.0
        return "general", tag, {"K": K}
    if kind == "lipschitz":
        vals = [float(v) for v in parts[1:]]
        K = vals[0] if vals else 2.0
        L = int(vals[1]) if len(vals) > 1 else 2
        width = int(vals[2]) if len(vals) > 2 else 4
        size = int(vals[3]) if len(vals) > 3 else 16
        return "lipschitz", rad.random_lipschitz_family(d, K, L, width, size, rng), \
            {"K": K, "L": L}
    raise ValueError(f"unknown family spec {spec!r}")


def parse_panel(spec: str, n: int, d: int, index: int) -> rad.SamplePanel:
    """Panel specs: random[:SEED] (uniform on [-1,1]^d) or a CSV file of points."""
    if spec.startswith("random"):
        seed = int(spec.split(":")[1]) if ":" in spec else 0
        gen = np.random.default_rng([seed, index])
        return rad.random_panel(n, d, gen)
    pts = np.loadtxt(spec, delimiter=",", ndmin=2)
    B = max(1.0, float(np.max(np.abs(pts))))
    return rad.SamplePanel.from_points(pts, B)


def rademacher_audit(panel_spec: str, family_spec: str, n: int, d: int, panels: int = 1,
                     trials: Optional[int] = None, seed: int = 0,
                     M: Optional[float] = None) -> list[dict]:
    """Exact (n <= 20) or Monte Carlo complexity with the applicable bounds and a verdict."""
    rows = []
    gen = np.random.default_rng(seed)
    for p in range(panels):
        panel = parse_panel(panel_spec, n, d, p)
        kind, fam, meta = parse_family(family_spec, d, gen)
        K = meta["K"]
        upper = rad.bound_upper(panel.B, K, panel.n, meta.get("L", 1), d)
        low_relu = rad.bound_lower_relu(K, meta["leak"], panel.s_stat, panel.n) \
            if kind == "relu" else math.nan
        low_gen = math.nan
        if kind == "general":
            tag = fam
            entry = get_activation(tag)
            Mv = M if M is not None else rad.second_derivative_bound(tag)
            sp = entry.slope_at_zero or rad._slope_at_zero(entry)
            terms = rad.general_lower_terms(sp, Mv, panel.B, K, panel.s_stat, panel.n)
            valid = terms.eps_star <= min(1.0 / panel.B, sp)
            eps = terms.eps_star if valid else min(1.0 / panel.B, sp)
            fam = rad.build_rad_witness_general(K, d, eps, tag, delta=1.0, B=panel.B)
            low_gen = terms.bound if valid else math.nan
            eq_lb = K * (terms.a1 * eps - terms.a2 * eps * eps)
        if n <= rad.EXACT_MAX_N and trials is None:
            est, se, mode = rad.rademacher_exact(fam, panel), 0.0, "exact"
        else:
            r = rad.rademacher_mc(fam, panel, trials or 2000, gen)
            est, se, mode = r.mean, r.stderr, "mc"
        slack = 3 * se + 1e-12
        if kind == "relu":
            ok = est >= low_relu - slack
        elif kind == "lipschitz":
            ok = est <= upper + slack
        else:
            ok = est >= eq_lb - slack and (math.isnan(low_gen) or est >= low_gen - slack)
        rows.append({"panel": p, "n": panel.n, "d": panel.d, "family": family_spec,
                     "estimate": est, "stderr": se, "mode": mode, "upper": upper,
                     "lower_relu": low_relu, "lower_general": low_gen,
                     "verdict": "ok" if ok else "violation"})
    return rows
