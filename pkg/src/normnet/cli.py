"""``normnet`` command line.

Exit codes: 0 success, 1 verification failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import deterministic as det
from . import experiments as ex
from .network import (
    ParseError,
    dumps_json,
    evaluate,
    network_from_dict,
    network_to_dict,
)

OK, VERIFY_FAIL, USAGE = 0, 1, 2


class UsageError(Exception):
    pass


def _floats(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _ints(text: str) -> list[int]:
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _emit(text: str, out) -> None:
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def _params(items) -> dict:
    """key=value pairs; values parse as int, then float, then string."""
    out = {}
    for item in items or []:
        for part in item.split(","):
            if not part:
                continue
            if "=" not in part:
                raise UsageError(f"parameter {part!r} is not key=value")
            k, v = part.split("=", 1)
            for cast in (int, float):
                try:
                    out[k] = cast(v)
                    break
                except ValueError:
                    continue
            else:
                out[k] = v
    return out


# ---------------------------------------------------------------------------
# subcommands


def cmd_table_c(a) -> int:
    cases = [c.strip().upper() for c in a.cases.split(",") if c.strip()]
    if not cases or any(c not in "ABCD" or len(c) != 1 for c in cases):
        raise UsageError("cases must be drawn from A,B,C,D")
    rows = ex.table_c(a.alpha, a.k, cases, a.grid, closed_form=not a.naive)
    sys.stdout.write(ex.table_c_latex(rows) if a.latex else ex.table_c_text(rows))
    if a.out:
        ex.table_c_csv(rows, a.out)
    bad = [r for r in rows if r.err_unclipped > r.predicted * (1 + 1e-6) + 1e-12]
    return VERIFY_FAIL if bad else OK


def cmd_plots(a) -> int:
    if a.case.upper() not in ("A", "B", "C"):
        raise UsageError("plots exist for cases A, B and C")
    try:
        paths = ex.plot_case(a.case, a.k, a.out, a.format, a.alpha)
    except OSError as exc:
        raise UsageError(f"cannot write to {a.out}: {exc}") from None
    for p in paths:
        print(p)
    return OK


def cmd_rate_sweep(a) -> int:
    rows, slope = ex.rate_sweep(a.target, a.activation, a.alpha, a.k, d=a.d, m=a.m, beta=a.beta)
    text = ex.write_csv([vars(r) for r in rows], ["k", "measured", "predicted", "note"],
                        comment=f"schema rate-sweep/1 slope {slope!r}")
    _emit(text, a.out)
    print(f"slope {slope:.4f}" if slope is not None else "slope n/a", file=sys.stderr)
    bad = [r for r in rows if r.measured == r.measured and r.measured > r.predicted * (1 + 1e-6)]
    return VERIFY_FAIL if bad else OK


def cmd_rand_verify(a) -> int:
    pts = None
    if a.points:
        pts = [[float(v) for v in p.split(",")] for p in a.points.split(";") if p]
    which = a.construction or a.lemma
    if which is None:
        raise UsageError("choose a construction")
    rows = ex.rand_verify(which, a.k, a.alpha, a.eps, a.trials, a.seed, pts,
                          activation=a.activation, d=a.d, m=a.m)
    text = ex.write_csv([r.as_dict() for r in rows], ex.RAND_COLUMNS,
                        comment="schema rand-verify/1")
    _emit(text, a.out)
    for r in rows:
        if r.vacuous:
            print(f"note: {r.case} eps={r.eps:.4g} bound is vacuous", file=sys.stderr)
    return VERIFY_FAIL if any(r.violation for r in rows) else OK


def cmd_rademacher(a) -> int:
    if not a.family:
        raise UsageError("empty family spec")
    rows = ex.rademacher_audit(a.panel, a.family, a.n, a.d, a.panels, a.trials, a.seed)
    text = ex.write_csv(rows, ex.RAD_COLUMNS, comment="schema rademacher/1")
    _emit(text, a.out)
    return VERIFY_FAIL if any(r["verdict"] != "ok" for r in rows) else OK


def cmd_build(a) -> int:
    p = _params(a.params)
    act = p.pop("activation", "silu")
    alpha = float(p.pop("alpha", 1.0))
    k = p.pop("k", 16)
    t = a.target
    if t == "square":
        approx = det.build_square(det.SquareBuildParams(k, alpha, act))
    elif t == "product2":
        approx = det.build_product2(k, alpha, act)
    elif t == "product_d":
        approx = det.build_product_d(int(p.pop("d", 3)), k, alpha, act)
    elif t == "lipr":
        d, m = int(p.pop("d", 1)), int(p.pop("m", 0))
        f = ex.lipr_default_target(d, m)
        approx = det.build_lipr(det.LiprBuildParams(d, m, float(p.pop("beta", 1.0)), alpha,
                                                    k, f, act))
    else:
        raise UsageError(f"unknown target {t!r}")
    if p:
        raise UsageError(f"unused parameters: {sorted(p)}")
    if isinstance(approx.network, det.CompositeApproximator):
        doc = det.composite_to_dict(approx.network)
    else:
        doc = network_to_dict(approx.network)
    doc["predicted_bound"] = float(approx.predicted_bound)
    _emit(dumps_json(doc) + "\n", a.out)
    return OK


def cmd_eval(a) -> int:
    raw = Path(a.net).read_text()
    doc = json.loads(raw)
    if "composite" in doc:
        model = det.composite_from_dict(doc)
        d = model.input_dim
    else:
        doc.pop("predicted_bound", None)
        model = network_from_dict(doc)
        d = model.input_dim
    x = np.loadtxt(a.x, delimiter=",", ndmin=2)
    if x.shape[1] != d:
        raise UsageError(f"input CSV has {x.shape[1]} columns, the network expects {d}")
    y = evaluate(model, x) if not isinstance(model, det.CompositeApproximator) else model(x)
    y = np.asarray(y, float).reshape(len(x), -1)
    lines = [",".join(ex.format_float(v) for v in row) for row in y]
    _emit("\n".join(lines) + "\n", a.out)
    return OK


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="normnet", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("table-c", help="weak-regularity square table")
    s.add_argument("--alpha", type=float, default=1.0)
    s.add_argument("--k", type=_ints, default=[8, 16, 32, 64])
    s.add_argument("--cases", default="A,B,C,D")
    s.add_argument("--grid", type=int, default=10**5 + 1)
    s.add_argument("--out")
    s.add_argument("--latex", action="store_true")
    s.add_argument("--naive", action="store_true", help="evaluate the network, not the closed form")
    s.set_defaults(func=cmd_table_c)

    s = sub.add_parser("plots", help="approximation and error figures")
    s.add_argument("--case", required=True)
    s.add_argument("--k", type=_ints, default=[8, 16, 32, 64])
    s.add_argument("--alpha", type=float, default=1.0)
    s.add_argument("--out", required=True)
    s.add_argument("--format", choices=["svg", "png"], default="svg")
    s.set_defaults(func=cmd_plots)

    s = sub.add_parser("rate-sweep", help="measured versus predicted error over k")
    s.add_argument("--target", choices=["square", "product2", "product_d", "lipr"], required=True)
    s.add_argument("--activation", default="silu")
    s.add_argument("--alpha", type=float, default=1.0)
    s.add_argument("--k", type=_floats, required=True)
    s.add_argument("--d", type=int, default=2)
    s.add_argument("--m", type=int, default=0)
    s.add_argument("--beta", type=float, default=1.0)
    s.add_argument("--out")
    s.set_defaults(func=cmd_rate_sweep)

    s = sub.add_parser("rand-verify", help="Monte Carlo checks of the random constructions")
    s.add_argument("--construction", choices=sorted(ex.CONSTRUCTIONS))
    s.add_argument("--lemma", type=int, choices=[6, 7, 8, 9],
                   help="numeric code: 6 square, 7 bilinear, 8 tree, 9 smooth")
    s.add_argument("--k", type=int, default=1000)
    s.add_argument("--alpha", type=float, default=1.0)
    s.add_argument("--eps", type=_floats, default=None)
    s.add_argument("--trials", type=int, default=1000)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--points", help="points separated by ';', coordinates by ','")
    s.add_argument("--activation", default="silu")
    s.add_argument("--d", type=int, default=4)
    s.add_argument("--m", type=int, default=0)
    s.add_argument("--out")
    s.set_defaults(func=cmd_rand_verify)

    s = sub.add_parser("rademacher", help="complexity estimates against closed-form bounds")
    s.add_argument("--panel", default="random")
    s.add_argument("--family", required=True)
    s.add_argument("--n", type=int, required=True)
    s.add_argument("--d", type=int, required=True)
    s.add_argument("--panels", type=int, default=1)
    s.add_argument("--trials", type=int, default=None)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out")
    s.set_defaults(func=cmd_rademacher)

    s = sub.add_parser("build", help="construct a network and write its JSON document")
    s.add_argument("--target", required=True)
    s.add_argument("--params", nargs="*", default=[], help="key=value pairs (k, alpha, activation, d, m, beta)")
    s.add_argument("--out")
    s.set_defaults(func=cmd_build)

    s = sub.add_parser("eval", help="evaluate a network document on CSV inputs")
    s.add_argument("--net", required=True)
    s.add_argument("--x", required=True)
    s.add_argument("--out")
    s.set_defaults(func=cmd_eval)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (UsageError, ParseError, ValueError, FileNotFoundError, json.JSONDecodeError) as exc:
        print(f"normnet: error: {exc}", file=sys.stderr)
        return USAGE


if __name__ == "__main__":
    sys.exit(main())
