"""Command-line front end.

    saddleflap center --spec euler.json --K 20
    saddleflap locus-fold --spec family.json --format json
    saddleflap flap --spec family.json --N 9 --alpha-grid 0.05:0.95:10

Tables go to --out (default stdout) as CSV with 17 significant digits or as
JSON lines.  Failures print one JSON error object on stderr and exit with a
code that identifies the failure class (see EXIT_CODES).
"""
from __future__ import annotations

import argparse
import io
import json
import math
import os
import sys
import warnings
from typing import Iterable, Sequence

import numpy as np

from . import center_manifold as cm
from . import flow_lab as fl
from . import locus as lc
from . import unfolding as uf
from .errors import (BracketError, DomainError, HypothesisViolation, PoleError, ResonanceError,
                     SaddleDegenerateError, SaddleFlapError, SeedQualityError, SpecParseError,
                     StiffnessError, TruncationError)
from .nonlinearity import NonlinearitySpec, family_spec, load_spec, spec_to_document

EXIT_CODES = {
    "usage": 2,
    SpecParseError.code: 3,
    HypothesisViolation.code: 4,
    ResonanceError.code: 5,
    DomainError.code: 6,
    PoleError.code: 6,
    TruncationError.code: 6,
    BracketError.code: 7,
    StiffnessError.code: 8,
    SeedQualityError.code: 8,
    SaddleDegenerateError.code: 8,
    "error": 1,
}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if v is None:
        return ""
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        v = float(v)
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return format(v, ".17g")
    return str(v)


def _json_safe(v):
    if isinstance(v, (np.floating,)):
        v = float(v)
    if isinstance(v, float) and not math.isfinite(v):
        return None
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (np.bool_,)):
        return bool(v)
    if isinstance(v, dict):
        return {k: _json_safe(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_json_safe(x) for x in v]
    return v


def emit(rows: Iterable[dict], header: Sequence[str], out, form: str) -> None:
    if form == "csv":
        out.write(",".join(header) + "\n")
        for r in rows:
            out.write(",".join(fmt(r.get(h)) for h in header) + "\n")
    else:
        for r in rows:
            out.write(json.dumps(_json_safe({h: r.get(h) for h in header}), sort_keys=False) + "\n")


def parse_grid(text: str, integer_n: bool = True) -> np.ndarray:
    """'a:b:n' -> n evenly spaced points from a to b."""
    try:
        a, b, n = text.split(":")
        a, b, n = float(a), float(b), int(n)
    except ValueError as exc:
        raise UsageError(f"grid must look like a:b:n, got {text!r}") from exc
    if n < 1 or not (math.isfinite(a) and math.isfinite(b)):
        raise UsageError(f"bad grid {text!r}")
    return np.linspace(a, b, n)


def _parse_u(text: str) -> list[float]:
    terms = {}
    try:
        for part in text.split(","):
            k, v = part.split(":")
            terms[int(k)] = float(v)
    except ValueError as exc:
        raise UsageError(f"--u must look like 'k:v,k:v', got {text!r}") from exc
    u = [0.0] * (max(terms) + 1)
    for k, v in terms.items():
        u[k] = v
    return u


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="saddleflap", description="Saddle-node center manifolds and weak-manifold flapping.")
    sub = p.add_subparsers(dest="cmd", required=True, parser_class=_Parser)

    def common(sp, need_ctx=False):
        sp.add_argument("--spec", help="problem spec (JSON)")
        sp.add_argument("--out", help="output file (default stdout)")
        sp.add_argument("--format", choices=("csv", "json"), default="csv")
        sp.add_argument("--K", type=int)
        sp.add_argument("--tol", type=float)
        sp.add_argument("--jobs", type=int, default=os.cpu_count() or 1)
        if need_ctx:
            g = sp.add_mutually_exclusive_group()
            g.add_argument("--eps", type=float)
            g.add_argument("--N", type=int)
            sp.add_argument("--alpha", type=float)
        return sp

    common(sub.add_parser("center", help="center-manifold coefficients and S_infinity"))
    s = common(sub.add_parser("sinfty-scan", help="S_infinity over an (f2, p) grid"))
    s.add_argument("--f2-grid", default="0:10:21")
    s.add_argument("--p-grid", default="0:2:11")
    s = common(sub.add_parser("locus-fold", help="fold point of the zero locus"))
    s.add_argument("--p-bracket", default="1.8:2.1")
    common(sub.add_parser("unfold", help="weights and weak-manifold coefficients"), need_ctx=True)
    s = common(sub.add_parser("vbar", help="Vbar / Ubar / T profiles"), need_ctx=True)
    s.add_argument("--x-grid", default="0.05:0.75:15")
    s = common(sub.add_parser("flap", help="flapping sweep over alpha"), need_ctx=True)
    s.add_argument("--alpha-grid", default="0.05:0.95:10")
    s.add_argument("--c", type=float, default=0.1)
    s = common(sub.add_parser("portrait", help="samples of the four invariant manifolds"), need_ctx=True)
    s.add_argument("--c", type=float, default=0.1)
    s = common(sub.add_parser("baby", help="exact toy-node weak manifold"), need_ctx=True)
    s.add_argument("--u", default="2:1,3:-1")
    s.add_argument("--x-grid", default="-0.2:0.2:9")
    return p


def _spec(args, required=True, default=None) -> NonlinearitySpec | None:
    if args.spec is None:
        if required and default is None:
            raise UsageError("--spec is required for this subcommand")
        return default
    return load_spec(args.spec)


def _ctx(args, spec) -> uf.UnfoldingContext:
    if args.eps is not None:
        if args.alpha is not None:
            raise UsageError("--eps and --alpha are exclusive")
        return uf.make_context(spec, eps=args.eps)
    if args.N is None or args.alpha is None:
        raise UsageError("give --eps or both --N and --alpha")
    if args.N < 1:
        raise UsageError("--N must be >= 1")
    return uf.make_context(spec, N=args.N, alpha=args.alpha)


def _validate_common(args):
    if args.K is not None and args.K < 2:
        raise UsageError("--K must be >= 2")
    if args.tol is not None and not args.tol > 0:
        raise UsageError("--tol must be positive")
    if args.jobs < 1:
        raise UsageError("--jobs must be >= 1")
    if getattr(args, "c", 1.0) <= 0:
        raise UsageError("--c must be positive")


def cmd_center(args, out):
    spec = _spec(args)
    K = args.K or cm.DEFAULT_K
    tol = args.tol or cm.DEFAULT_TOL
    d = cm.center_coeffs(spec, K)
    m = d.m
    rows = []
    for i, k in enumerate(d.ks):
        rows.append({"k": int(k), "m_log_abs": float(d.m_log_abs[i]), "m_sign": int(d.m_sign[i]),
                     "m": float(m[i]) if math.isfinite(m[i]) else None,
                     "S": float(d.S[i]), "increment": float(d.increments[i])})
    emit(rows, ["k", "m_log_abs", "m_sign", "m", "S", "increment"], out, args.format)
    if args.format == "json":
        out.write(json.dumps({"record": "summary", "S_infty": d.S_infty_estimate, "K": K,
                              "residual": d.residual, "converged": d.residual <= tol}) + "\n")


def cmd_scan(args, out):
    spec = _spec(args, required=False)
    if spec is not None and spec.name not in ("family", ""):
        raise UsageError("sinfty-scan scans the (f2, p) family; omit --spec or pass the family spec")
    K = args.K or lc.DEFAULT_K
    if K < 100:
        raise UsageError("sinfty-scan needs --K >= 100")
    pts = lc.sinfty_scan(family_spec, parse_grid(args.f2_grid), parse_grid(args.p_grid), K,
                         args.tol or lc.DEFAULT_FLAG_TOL, jobs=args.jobs)
    emit([_lp(p) for p in pts], ["p", "f2", "S", "residual", "flagged"], out, args.format)


def _lp(p: lc.LocusPoint) -> dict:
    return {"p": p.p, "f2": p.f2, "S": p.S, "residual": p.residual, "flagged": p.flagged}


def cmd_fold(args, out):
    _spec(args, required=False)
    try:
        lo, hi = (float(v) for v in args.p_bracket.split(":"))
    except ValueError as exc:
        raise UsageError("--p-bracket must look like lo:hi") from exc
    res = lc.fold_find(family_spec, (lo, hi), tol=args.tol or 1e-6, K=args.K or lc.DEFAULT_K)
    row = {"p": res.p, "f2": res.f2, "dS_dp": res.dS_dp, "S_peak": res.S_peak}
    emit([row], list(row), out, args.format)


def cmd_unfold(args, out):
    spec = _spec(args)
    ctx = _ctx(args, spec)
    K = args.K or ctx.N
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        e = uf.weak_manifold_coeffs(spec, ctx, K, warn=False)
    rows = []
    for k in range(2, K + 1):
        rows.append({"k": k, "wbar": float(e.wbar_sign[k] * math.exp(e.wbar_log[k])),
                     "Sbar": e.Sbar[k], "mbar": e.mbar[k], "Gbar": e.Gbar[k]})
    emit(rows, ["k", "wbar", "Sbar", "mbar", "Gbar"], out, args.format)


def cmd_vbar(args, out):
    spec = _spec(args, required=False)
    ctx = _ctx(args, spec)
    tol = args.tol or 1e-13
    rows = []
    for x in parse_grid(args.x_grid):
        x = float(x)
        row = {"xbar": x, "Vbar": uf.eval_Vbar(ctx, x, tol), "Ubar": uf.eval_Ubar(ctx, x, tol),
               "T_series": uf.T_monomial_series(ctx, x, tol)}
        row["T_quadrature"] = uf.T_monomial_quadrature(ctx, x) if x >= -ctx.eps else None
        rows.append(row)
    emit(rows, ["xbar", "Vbar", "Ubar", "T_series", "T_quadrature"], out, args.format)


def cmd_flap(args, out):
    spec = _spec(args)
    if args.N is None:
        raise UsageError("flap needs --N")
    grid = parse_grid(args.alpha_grid)
    res = fl.flap_sweep(spec, args.N, grid, args.c, jobs=args.jobs)
    rows = []
    for r in res.reports:
        meta = r["trace_meta"]
        rows.append({**{k: r[k] for k in ("eps", "N", "alpha", "side", "crossed_line", "predicted_line",
                                          "agree", "c")},
                     "n_steps": meta.get("n_steps"), "min_step": meta.get("min_step"),
                     "error": meta.get("error")})
    emit(rows, ["eps", "N", "alpha", "side", "crossed_line", "predicted_line", "agree", "c",
                "n_steps", "min_step", "error"], out, args.format)
    if args.format == "json":
        out.write(json.dumps({"record": "transitions", "intervals": res.transitions}) + "\n")


def cmd_portrait(args, out):
    spec = _spec(args)
    ctx = _ctx(args, spec)
    rows = [{"manifold": m, "branch": b, "xbar": x, "ybar": y} for m, b, x, y in fl.portrait(spec, ctx, args.c)]
    emit(rows, ["manifold", "branch", "xbar", "ybar"], out, args.format)


def cmd_baby(args, out):
    u = _parse_u(args.u)
    ctx = _ctx(args, None)
    rows = []
    for x in parse_grid(args.x_grid):
        m = fl.baby_exact(u, ctx, float(x))
        V = fl.baby_V(u, ctx, float(x))
        rows.append({"x": float(x), "m": m, "V": V, "B": m - V})
    emit(rows, ["x", "m", "V", "B"], out, args.format)


COMMANDS = {"center": cmd_center, "sinfty-scan": cmd_scan, "locus-fold": cmd_fold, "unfold": cmd_unfold,
            "vbar": cmd_vbar, "flap": cmd_flap, "portrait": cmd_portrait, "baby": cmd_baby}


def _fail(kind: str, message: str) -> int:
    code = EXIT_CODES.get(kind, 1)
    sys.stderr.write(json.dumps({"error": kind, "message": message, "exit_code": code}) + "\n")
    return code


def run(argv: Sequence[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        args = build_parser().parse_args(argv)
        _validate_common(args)
        buf = io.StringIO(newline="\n")
        COMMANDS[args.cmd](args, buf)
    except UsageError as exc:
        return _fail("usage", str(exc))
    except SaddleFlapError as exc:
        return _fail(exc.code, str(exc))
    except Exception as exc:  # noqa: BLE001 - last-resort JSON error
        return _fail("error", f"{type(exc).__name__}: {exc}")
    text = buf.getvalue()
    if args.out:
        with open(args.out, "w", newline="\n", encoding="utf-8") as fh:
            fh.write(text)
    else:
        try:
            sys.stdout.write(text)
            sys.stdout.flush()
        except BrokenPipeError:
            # reader went away (e.g. piped into head); silence the flush at exit
            os.dup2(os.open(os.devnull, os.O_WRONLY), sys.stdout.fileno())
    return 0


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
