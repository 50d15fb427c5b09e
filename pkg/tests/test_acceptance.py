"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run with ``pytest -v tests/test_acceptance.py``; the summary lines are written
straight to the terminal so they show up in captured logs.
"""

import math
import time
from decimal import Decimal

import numpy as np
import pytest

from normnet import deterministic as det
from normnet import rademacher as rad
from normnet import randomized as rnd
from normnet.cli import main as cli_main
from normnet.experiments import lipr_default_target, measure, table_c
from normnet.network import (
    EvalGrid,
    check_norm_constraint,
    measure_lipschitz_empirical,
)


@pytest.fixture
def report(capsys):
    def emit(n, ok, detail):
        with capsys.disabled():
            print(f"\ncriterion {n:>2}: {'PASS' if ok else 'FAIL'}  {detail}")
    return emit


# ---------------------------------------------------------------------------
# 1. weak-regularity table

# (case, k): w_k, d_k, unclipped, clipped, predicted, min, max as printed
PUBLISHED = {
    ("A", 8): ("0.125", "32.0", "0.1250", "0.1056", "0.1250", "0.0", "1.1250"),
    ("A", 16): ("0.0625", "128.0", "0.0625", "0.0572", "0.0625", "0.0", "1.0625"),
    ("A", 32): ("0.0313", "512.0", "0.0313", "0.0298", "0.0312", "0.0", "1.0313"),
    ("A", 64): ("0.0156", "2048.0", "0.0156", "0.0152", "0.0156", "0.0", "1.0156"),
    ("B", 8): ("0.0513", "190.21", "0.1250", "0.1071", "0.1250", "0.0", "1.1250"),
    ("B", 16): ("0.0190", "1378.20", "0.0625", "0.0576", "0.0625", "0.0", "1.0625"),
    ("B", 32): ("0.0071", "9986.16", "0.0313", "0.0299", "0.0313", "0.0", "1.0313"),
    ("B", 64): ("0.0026", "72357.6", "0.0156", "0.0153", "0.0156", "0.0", "1.0156"),
    ("C", 8): ("0.0009", "601302.1", "0.1250", "0.1103", "0.1250", "0.0", "1.1250"),
    ("C", 16): ("3.059e-7", "53e13", "0.0625", "0.0587", "0.06250", "0.0", "1.0625"),
    ("C", 32): ("3.4e-14", "4.2e26", "0.0313", "0.0303", "0.0313", "0.0", "1.0313"),
    ("C", 64): ("4.3e-28", "2.6e54", "0.01563", "0.0154", "0.0156", "0.0", "1.0156"),
    ("D", 8): ("0.3536", "4.0000", "3.3e-16", "3.3e-16", "0.0", "0.0", "1.0"),
    ("D", 16): ("0.25", "8.0", "0.0", "0.0", "0.0", "0.0", "1.0"),
    ("D", 32): ("0.1768", "16", "3.3e-16", "3.3e-16", "0.0", "0.0", "1.0"),
    ("D", 64): ("0.125", "32.0", "0.0", "0.0", "0.0", "0.0", "1.0"),
}


def _sig_match(value: float, printed: str) -> bool:
    """Agreement to 4 significant figures, or to the printed precision when coarser.

    A printed number with p significant digits is matched within one unit of
    its last digit, which accepts both rounded and truncated renderings.
    """
    dec = Decimal(printed)
    digits = dec.as_tuple().digits
    p = max(1, len(str(int("".join(map(str, digits))))))
    p = min(p, 4)
    exp10 = math.floor(math.log10(abs(float(dec))))
    unit = 10.0 ** (exp10 - p + 1)
    return abs(value - float(dec)) <= unit * (1 + 1e-9)


def test_criterion_01_table(report):
    t0 = time.perf_counter()
    rows = {(r.case, r.k): r for r in table_c(1.0, [8, 16, 32, 64], ["A", "B", "C", "D"])}
    elapsed = time.perf_counter() - t0
    misses = []
    for key, (w, d, e, ec, pred, lo, hi) in PUBLISHED.items():
        r = rows[key]
        if not _sig_match(r.w_k, w):
            misses.append(f"{key} w_k {r.w_k:.6g} vs {w}")
        if not _sig_match(r.d_k, d):
            misses.append(f"{key} d_k {r.d_k:.6g} vs {d}")
        if key[0] == "D":
            if r.err_unclipped > 1e-12 or r.err_clipped > 1e-12:
                misses.append(f"{key} case D error {r.err_unclipped:.3g}")
        else:
            if abs(r.err_unclipped - float(e)) > 2e-3:
                misses.append(f"{key} unclipped {r.err_unclipped:.5f} vs {e}")
            if abs(r.err_clipped - float(ec)) > 2e-3:
                misses.append(f"{key} clipped {r.err_clipped:.5f} vs {ec}")
        if abs(r.predicted - float(pred)) > 1e-4:
            misses.append(f"{key} predicted {r.predicted:.6f} vs {pred}")
        if abs(r.min_phi - float(lo)) > 1e-4 or abs(r.max_phi - float(hi)) > 1e-4:
            misses.append(f"{key} range [{r.min_phi:.5f}, {r.max_phi:.5f}] vs [{lo}, {hi}]")
    ok = not misses and elapsed < 60
    detail = f"{len(PUBLISHED) * 7 - len(misses)}/{len(PUBLISHED) * 7} cells match, {elapsed:.1f}s"
    if misses:
        detail += "; mismatches: " + "; ".join(misses)
    report(1, ok, detail)
    # the CLI path must agree with the library path
    assert cli_main(["table-c", "--alpha", "1", "--k", "8,16,32,64", "--cases", "A,B,C,D",
                     "--grid", "1001"]) == 0
    assert ok, detail


# ---------------------------------------------------------------------------
# 2. bound soundness


def _constructors():
    for tag in ("silu", "caseA"):
        for alpha in (0.5, 1.0, 2.0):
            for k in (8, 16, 32, 64):
                yield ("square", tag, alpha, k,
                       lambda: det.build_square(det.SquareBuildParams(k, alpha, tag)))
                yield ("product2", tag, alpha, k, lambda: det.build_product2(k, alpha, tag))
                for d in (3, 4):
                    yield (f"product_d{d}", tag, alpha, k,
                           lambda d=d: det.build_product_d(d, k, alpha, tag))
                for d, m in ((1, 0), (1, 1), (1, 2), (2, 1)):
                    yield (f"lipr d={d} m={m}", tag, alpha, k,
                           lambda d=d, m=m: det.build_lipr(det.LiprBuildParams(
                               d, m, 1.0, alpha, k, lipr_default_target(d, m), tag)))


def test_criterion_02_bound_soundness(report):
    t0 = time.perf_counter()
    checked, skipped, bad = 0, 0, []
    for name, tag, alpha, k, build in _constructors():
        try:
            a = build()
        except det.PreconditionError:
            skipped += 1
            continue
        d = a.input_dim
        grid = None if d == 1 else EvalGrid((a.info["domain"][0],) * d,
                                           (a.info["domain"][1],) * d,
                                           {2: 501, 3: 61, 4: 25}[d])
        err = measure(a, grid)
        checked += 1
        if err > a.predicted_bound * (1 + 1e-6):
            bad.append(f"{name} {tag} a={alpha} k={k}: {err:.3g} > {a.predicted_bound:.3g}")
    elapsed = time.perf_counter() - t0
    ok = not bad and checked > 0 and elapsed < 300
    report(2, ok, f"{checked} constructions sound, {skipped} below k0 skipped, {elapsed:.1f}s"
           + ("; " + "; ".join(bad[:5]) if bad else ""))
    assert ok


# ---------------------------------------------------------------------------
# 3. rate exponents


def test_criterion_03_rates(report):
    ks = [8, 16, 32, 64, 128, 256]
    x = np.linspace(0, 1, 10**5 + 1)
    slopes = {}
    for tag in ("silu", "caseA", "caseB", "caseC"):
        errs = []
        for k in ks:
            a = det.build_square(det.SquareBuildParams(k, 1.0, tag))
            phi = a.closed_form(x) if a.closed_form is not None else a.unclipped(x)[:, 0]
            errs.append(float(np.max(np.abs(phi - x * x))))
        slopes[tag] = det.fit_loglog(ks, errs).slope
    # the logarithmic case: the chosen weights make omega(w_k)/|gamma| exactly k^-alpha
    pred_c = [det.build_square(det.SquareBuildParams(k, 1.0, "caseC")).predicted_bound for k in ks]
    exact_c = all(abs(p - k ** -1.0) <= 1e-12 for p, k in zip(pred_c, ks))
    ok = all(abs(slopes[t] + 1.0) <= 0.15 for t in ("silu", "caseA", "caseB")) and exact_c
    report(3, ok, ", ".join(f"{t} slope {s:.3f}" for t, s in slopes.items())
           + f"; caseC predicted = k^-1 exactly: {exact_c}")
    assert ok


# ---------------------------------------------------------------------------
# 4. certificate soundness


def _random_construction(g, i):
    kind = i % 10
    k = int(g.integers(16, 80))
    alpha = float(g.choice([0.5, 1.0, 1.5]))
    tag = str(g.choice(["silu", "gelu"]))
    weak = str(g.choice(["caseA", "caseB", "caseD"]))
    if kind == 0:
        return det.build_square(det.SquareBuildParams(k, alpha, tag)).network, None
    if kind == 1:
        return det.build_square(det.SquareBuildParams(k, 1.0, weak)).network, None
    if kind == 2:
        return det.build_product2(max(k, 16), max(alpha, 0.5), tag).network, None
    if kind == 3:
        return det.build_product_d(int(g.integers(3, 7)), k, 1.0, weak).network, None
    if kind == 4:
        return rnd.build_random_square(k, alpha, tag, rnd.RngSpec(i)).network, None
    if kind == 5:
        return rnd.build_random_product2(k, 1.0, tag, rnd.RngSpec(i)).network, None
    if kind == 6:
        return rnd.build_random_product_d(int(g.integers(2, 6)), k, 1.0, tag,
                                          rnd.RngSpec(i)).network, None
    if kind == 7:
        return rad.build_rad_witness_relu(float(g.uniform(1, 5)), 3).members[1], None
    if kind == 8 and i % 20 == 8:
        eps = float(g.uniform(0.05, 0.5))
        return rad.build_rad_witness_general(float(g.uniform(1, 5)), 2, eps, tag).members[0], None
    if kind == 8:
        f = lipr_default_target(1, 1)
        rep = rnd.build_random_lipr(det.LiprBuildParams(1, 1, 1.0, 1.0, k, f, tag), rnd.RngSpec(i))
        return rep.network, (0.0, 1.0)
    d, m = (1, int(g.integers(0, 3))) if i % 20 == 9 else (2, 1)
    approx = det.build_lipr(det.LiprBuildParams(d, m, 1.0, 1.0, k, lipr_default_target(d, m)))
    return approx.network, (0.0, 1.0)


def test_criterion_04_certificates(report):
    g = np.random.default_rng(2024)
    worst, bad, n_norm = 0.0, [], 0
    for i in range(50):
        net, domain = _random_construction(g, i)
        if domain is None:
            n_norm += 1
            rep = check_norm_constraint(net)
            if not rep.ok:
                bad.append(f"#{i}: {rep.messages}")
        lip = measure_lipschitz_empirical(net, 10**4, seed=i, domain=domain)
        worst = max(worst, lip / net.cert.K)
        if lip > net.cert.K + 1e-9:
            bad.append(f"#{i}: Lipschitz {lip:.6g} > K {net.cert.K:.6g}")
    ok = not bad
    report(4, ok, f"50 constructions ({n_norm} materialised networks norm-checked), "
           f"max Lipschitz/K = {worst:.3g}" + ("; " + "; ".join(bad) if bad else ""))
    assert ok


# ---------------------------------------------------------------------------
# 5. partition of unity


def test_criterion_05_partition(report):
    g = np.random.default_rng(5)
    worst = 0.0
    negative = False
    for d, k, gamma in ((1, 16, 1.0), (2, 8, 0.5), (3, 4, 0.5)):
        n_axis = int(math.ceil(k ** gamma - 1e-9))
        comp = det.CompositeApproximator(d, n_axis, np.zeros((n_axis ** d, 1)), [(0,) * d],
                                         [None], None, {})
        x = g.uniform(0, 1, size=(10**4, d))
        rho = comp.partition(x)
        negative |= bool(np.any(rho < 0))
        worst = max(worst, float(np.max(np.abs(rho.sum(axis=1) - 1.0))))
    ok = worst <= 1e-12 and not negative
    report(5, ok, f"max |sum rho - 1| = {worst:.2e}, nonnegative: {not negative}")
    assert ok


# ---------------------------------------------------------------------------
# 6. product tree recursion


def test_criterion_06_tree_recursion(report):
    g = np.random.default_rng(6)
    lines, ok = [], True
    for d in (3, 4, 8):
        a = det.build_product_d(d, 64, 1.0, "silu")
        eps_k = a.info["block"].product_err
        errs = det.tree_level_errors(a, g.uniform(-1, 1, size=(10**4, d)))
        prev = 0.0
        for e in errs:
            ok &= e <= 2 * prev + eps_k
            prev = e
        lines.append(f"d={d}: " + ",".join(f"{e:.2e}" for e in errs))
    report(6, ok, f"eps_k = {eps_k:.2e}; " + "; ".join(lines))
    assert ok


# ---------------------------------------------------------------------------
# 7. randomized guarantees


def _var_slack(y):
    n = len(y)
    c = y - y.mean()
    s2 = float(np.mean(c * c))
    m4 = float(np.mean(c ** 4))
    return s2, 3.0 * math.sqrt(max(m4 - s2 * s2, 0.0) / n)


def test_criterion_07_randomized(report):
    k, trials, seed = 1000, 10**4, 7
    spec = rnd.get_activation("silu").taylor
    problems, notes = [], []

    c6 = rnd.square_constants(k, 1.0, spec.M, spec.a2)
    pts6 = [0.0, 0.3, 0.7, 1.0]
    V = rnd.mc_square(k, 1.0, "silu", pts6, trials, seed)
    pred, vac = rnd.square_success_bound(2 * c6.eps0, k, c6)
    for j, x in enumerate(pts6):
        rec = rnd.success_record(np.abs(V[:, j] - x * x), 2 * c6.eps0, pred, vac, x)
        if not rec.dominated:
            problems.append(f"square x={x}: freq {rec.empirical_freq} < {pred:.4g}")
        bias = abs(V[:, j].mean() - x * x)
        se = V[:, j].std(ddof=1) / math.sqrt(trials)
        if bias > c6.eps0 + 3 * se:
            problems.append(f"square x={x}: bias {bias:.3g}")
        Y = np.concatenate([rnd.square_neuron_terms(k, 1.0, "silu", x, rnd.RngSpec(seed, t))
                            for t in range(20)])
        s2, slack = _var_slack(Y)
        if s2 > c6.var_bound + slack:
            problems.append(f"square x={x}: Var Y {s2:.4g} > {c6.var_bound:.4g}")
    notes.append(f"square bound {pred:.3g} (vacuous={vac})")

    c7 = rnd.bilinear_constants(k, 1.0, spec.M, spec.a2)
    pts7 = [(0.5, 0.5), (0.5, -0.5), (-0.5, 0.5), (-0.5, -0.5)]
    V = rnd.mc_product2(k, 1.0, "silu", pts7, trials, seed)
    pred, vac = rnd.product2_success_bound(2 * c7.eps0, k, c7)
    for j, (x, y) in enumerate(pts7):
        rec = rnd.success_record(np.abs(V[:, j] - x * y), 2 * c7.eps0, pred, vac, (x, y))
        if not rec.dominated:
            problems.append(f"product ({x},{y}): freq {rec.empirical_freq} < {pred:.4g}")
        bias = abs(V[:, j].mean() - x * y)
        se = V[:, j].std(ddof=1) / math.sqrt(trials)
        if bias > c7.eps0 + 3 * se:
            problems.append(f"product ({x},{y}): bias {bias:.3g}")
        Y = np.concatenate([rnd.product2_group_terms(k, 1.0, "silu", x, y, rnd.RngSpec(seed, t))
                            for t in range(20)])
        s2, slack = _var_slack(Y)
        if s2 > c7.var_bound + slack:
            problems.append(f"product ({x},{y}): Var Y {s2:.4g} > {c7.var_bound:.4g}")
    notes.append(f"product bound {pred:.3g} (vacuous={vac})")
    ok = not problems
    report(7, ok, "; ".join(notes + problems))
    assert ok


# ---------------------------------------------------------------------------
# 8. Rademacher sandwich


def test_criterion_08_rademacher(report):
    g = np.random.default_rng(8)
    problems = []
    for p in range(20):
        n = int(g.integers(4, 13))
        d = int(g.integers(1, 5))
        panel = rad.random_panel(n, d, g)
        K = float(g.uniform(1, 4))
        wit = rad.build_rad_witness_relu(K, d)
        exact = rad.rademacher_exact(wit, panel)
        low = rad.bound_lower_relu(K, 0.0, panel.s_stat, n)
        if exact < low:
            problems.append(f"panel {p}: relu {exact:.4g} < {low:.4g}")
        L = int(g.integers(1, 4))
        fam = rad.random_lipschitz_family(d, K, L, 4, 12, g)
        up = rad.bound_upper(1.0, K, n, L, d)
        ex_l = rad.rademacher_exact(fam, panel)
        if ex_l > up:
            problems.append(f"panel {p}: lipschitz {ex_l:.4g} > {up:.4g}")
        mc = rad.rademacher_mc(wit, panel, 2000, g)
        if abs(mc.mean - exact) > 3 * mc.stderr:
            problems.append(f"panel {p}: mc {mc.mean:.4g} vs exact {exact:.4g} ({mc.stderr:.2g})")
    ok = not problems
    report(8, ok, "20 panels" + ("; " + "; ".join(problems) if problems else ": all hold"))
    assert ok


# ---------------------------------------------------------------------------
# 9. feasibility


def test_criterion_09_feasibility(report):
    g = np.random.default_rng(9)
    t = det.feasibility_thresholds(1, 1.0, 1.0, "silu")
    f = lipr_default_target(1, 0)
    problems, ks = [], []
    for _ in range(10):
        W = int(math.ceil(t["c1"] * g.uniform(1, 50)))
        K = t["c2"] * W * g.uniform(1, 100)
        L = int(g.integers(1, 5))
        k = det.choose_k(W, K, 1, 1.0, 1.0, "silu")
        ks.append(k)
        c = det.build_lipr(det.LiprBuildParams(1, 0, 1.0, 1.0, k, f)).cert
        if not (c.W <= W and c.L <= max(L, 0) and c.K <= K * (1 + 1e-12)):
            problems.append(f"(W={W}, K={K:.4g}, L={L}) -> k={k}, cert {c}")
    ok = not problems
    report(9, ok, f"k chosen: {ks}" + ("; " + "; ".join(problems) if problems else ""))
    assert ok


# ---------------------------------------------------------------------------
# 10. scaling sweep


def test_criterion_10_scaling(report):
    res = []
    for tag in ("silu", "gelu"):
        for alpha in (0.5, 1.0, 2.0):
            res.append((tag, alpha, det.scaling_sweep(tag, alpha, [16, 32, 64, 128, 256]).slope))
    ok = all(abs(s - a) <= 0.01 for _, a, s in res)
    report(10, ok, ", ".join(f"{t} a={a}: {s:.6f}" for t, a, s in res))
    assert ok
