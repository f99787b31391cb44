"""Acceptance criteria, one test each.

Every test times itself, checks its runtime limit, prints a single
``PASS``/``FAIL`` line and then asserts.  The lines are also collected in
RESULTS and repeated at the end of the pytest run by conftest.py.  Run the
file directly (``python tests/test_acceptance.py``) for the lines alone.
"""
import math
import time

import numpy as np
import pytest
from scipy.special import gammaln

from saddleflap import flow_lab as fl
from saddleflap import locus as lc
from saddleflap import unfolding as uf
from saddleflap.center_manifold import center_coeffs, estimate_S_infty, linear_case_S
from saddleflap.nonlinearity import (BivariateCoefficientProvider, CoefficientProvider, NonlinearitySpec,
                                     euler_spec, family_spec)
from saddleflap.unfolding import UnfoldingContext as Ctx

RESULTS: list[str] = []


class Criterion:
    """Context manager: times the body and reports PASS only if ok and fast enough."""

    def __init__(self, number: int, title: str, limit: float):
        self.number, self.title, self.limit = number, title, limit
        self.ok = False
        self.detail = ""

    def __enter__(self):
        self.t0 = time.perf_counter()
        return self

    def __exit__(self, exc_type, exc, tb):
        elapsed = time.perf_counter() - self.t0
        if exc_type is not None:
            self.ok = False
            self.detail = f"{exc_type.__name__}: {exc}"
        fast = elapsed < self.limit
        verdict = "PASS" if (self.ok and fast) else "FAIL"
        timing = f"{elapsed:.2f}s < {self.limit:g}s" if fast else f"{elapsed:.2f}s >= {self.limit:g}s LIMIT"
        line = f"{verdict} criterion {self.number}: {self.title} [{timing}] {self.detail}"
        RESULTS.append(line)
        print(line)
        if exc_type is None:
            assert self.ok, line
            assert fast, line
        return False


def fam():
    return family_spec(1.0, 1.0)


# 1 --------------------------------------------------------------------------
def test_criterion_01_euler_coefficients():
    with Criterion(1, "Euler coefficients m_k = (-1)^k (k-1)!, k <= 100", 1.0) as c:
        d = center_coeffs(euler_spec(), 100)
        worst = 0.0
        signs_ok = True
        for k in range(2, 101):
            mv = d.m_signed(k)
            signs_ok &= mv.sign == (-1) ** k
            worst = max(worst, abs(math.expm1(mv.log_abs - math.lgamma(k))))
        c.ok = signs_ok and worst <= 1e-12
        c.detail = f"max rel err {worst:.2e}, signs {'ok' if signs_ok else 'WRONG'}"


# 2 --------------------------------------------------------------------------
def test_criterion_02_linear_oracle():
    with Criterion(2, "linear-case oracle equivalence, K = 150", 5.0) as c:
        rng = np.random.default_rng(20240601)
        K = 150
        worst = 0.0
        for a0 in (-1.5, 0.0, 2.0):
            for _ in range(20):
                f = rng.uniform(-1, 1, K + 1) * 2.0 ** -np.arange(K + 1)
                f[:2] = 0.0
                spec = NonlinearitySpec(a0, CoefficientProvider.explicit(dict(enumerate(f[2:], start=2))),
                                        BivariateCoefficientProvider(), mu=0.0, rho=0.5, B=1.0)
                d = center_coeffs(spec, K)
                S, _ = linear_case_S(f, a0, K)
                # m_k = (-1)^k Gamma(k+a0) S_k in both, so relative error in m is relative error in S
                rel = np.abs(d.S - S) / np.maximum(np.abs(S), 1e-300)
                worst = max(worst, float(np.max(rel)))
        c.ok = worst <= 1e-12
        c.detail = f"max rel err {worst:.2e} over 60 runs"


# 3 --------------------------------------------------------------------------
def test_criterion_03_sinfty_machine_precision():
    with Criterion(3, "|S_101 - S_100| <= 1e-12 for the family at (1, 1)", 2.0) as c:
        d = center_coeffs(fam(), 101)
        gap = abs(d.S_at(101) - d.S_at(100))
        c.ok = gap <= 1e-12
        c.detail = f"S_100 = {d.S_at(100):.12f}, |S_101 - S_100| = {gap:.3e}"


# 4 --------------------------------------------------------------------------
def test_criterion_04_fold():
    with Criterion(4, "fold near (1.94, 1.09), dS/df2 > 0 on lower branch, dS/dp < 0", 60.0) as c:
        res = lc.fold_find(family_spec, (1.8, 2.1))
        near = abs(res.p - 1.94) <= 0.02 and abs(res.f2 - 1.09) <= 0.02
        slopes = []
        for p in (0.0, 0.25, 0.5, 0.75, 1.0, 1.25, 1.5, 1.75, 1.9):
            root = 0.0 if p == 0 else lc.lower_branch_root(family_spec, p)
            slopes.append(lc.dS_df2(family_spec(root, p), K=100).value)
        c.ok = near and min(slopes) > 0 and res.dS_dp < 0
        c.detail = (f"fold (p, f2) = ({res.p:.4f}, {res.f2:.4f}), dS/dp = {res.dS_dp:.3f}, "
                    f"min lower-branch dS/df2 = {min(slopes):.3f}")


# 5 --------------------------------------------------------------------------
def test_criterion_05_derivative_law():
    with Criterion(5, "dS/df2 = 1/Gamma(2 + a0) at mu = 0", 1.0) as c:
        worst = 0.0
        f = CoefficientProvider.rational([0, 0, 0, 1.0], [1, -1], extra={2: 0.7})
        h = BivariateCoefficientProvider({(1, 2): 3.0, (1, 3): 1.0})
        for a0 in (-1.0, 0.0, 1.0, 2.0):
            spec = NonlinearitySpec(a0, f, h, mu=0.0, rho=0.5, B=1.0)
            d = lc.dS_df2(spec)
            worst = max(worst, abs(d.value - math.exp(-gammaln(2 + a0))))
        c.ok = worst <= 1e-8
        c.detail = f"max abs err {worst:.2e}"


# 6 --------------------------------------------------------------------------
def test_criterion_06_weight_identities():
    with Criterion(6, "wbar recursion over 50 eps, majorant violation", 1.0) as c:
        rng = np.random.default_rng(6)
        worst_rec, worst_maj = 0.0, -math.inf
        for _ in range(50):
            N = int(rng.integers(5, 60))
            ctx = Ctx.from_eps(1.0 / (N + rng.uniform(0.01, 0.99)))
            eps, a = ctx.eps, ctx.a_eps
            la, sg = uf.wbar_table(ctx, ctx.N + 5)
            for k in range(3, ctx.N + 6):
                lhs = math.log(abs(1 - eps * k)) + la[k]
                rhs = math.log(eps * (k - 1 + a)) + la[k - 1]
                sgn_ok = np.sign(1 - eps * k) * sg[k] == sg[k - 1]
                worst_rec = max(worst_rec, abs(math.expm1(lhs - rhs)) if sgn_ok else math.inf)
            worst_maj = max(worst_maj, uf.weight_majorant_diag(ctx)[2])
        c.ok = worst_rec <= 1e-12 and worst_maj <= 1e-10
        c.detail = f"max rel recursion err {worst_rec:.2e}, max majorant violation {worst_maj:.2e}"


# 7 --------------------------------------------------------------------------
def test_criterion_07_eps_limit():
    with Criterion(7, "eps^(1-k) mbar_k -> m_k monotonically, k = 3, 4, 5", 10.0) as c:
        spec = fam()
        m0 = center_coeffs(spec, 10).m
        seqs = {k: [] for k in (3, 4, 5)}
        for n in range(10, 81):
            ctx = uf.make_context(spec, N=n, alpha=0.5)
            e = uf.weak_manifold_coeffs(spec, ctx, 6).unscaled()
            for k in seqs:
                seqs[k].append(abs(e[k] - m0[k - 2]))
        mono = {k: all(b < a for a, b in zip(v, v[1:])) for k, v in seqs.items()}
        c.ok = all(mono.values())
        c.detail = ", ".join(f"k={k}: {v[0]:.2e} -> {v[-1]:.2e}" for k, v in seqs.items())


# 8 --------------------------------------------------------------------------
def test_criterion_08_sbar_edge():
    with Criterion(8, "|Sbar_N - S_inf| decreasing over N = 20, 40, 80, final <= 1e-3", 10.0) as c:
        spec = fam()
        S = estimate_S_infty(spec, 120).value
        gaps = [abs(uf.sbar_at_resonance_edge(spec, uf.make_context(spec, N=N, alpha=0.5)) - S)
                for N in (20, 40, 80)]
        c.ok = gaps[0] > gaps[1] > gaps[2] and gaps[2] <= 1e-3
        c.detail = "gaps " + ", ".join(f"{g:.4f}" for g in gaps)


# 9 --------------------------------------------------------------------------
def test_criterion_09_vbar_properties():
    with Criterion(9, "Vbar positive, increasing, above lower bound; Vbar(0.5) > 1e3 near resonance", 5.0) as c:
        xs = np.linspace(0.0, 0.75, 52)[1:-1]
        ok = True
        worst_margin = math.inf
        ctxs = [Ctx.from_N_alpha(8, a) for a in (1e-4, 0.2, 0.5, 0.8)] + [Ctx.from_N_alpha(8, alpha_c=1e-4)]
        for ctx in ctxs:
            v = np.array([uf.eval_Vbar(ctx, x) for x in xs])
            ok &= bool(np.all(v > 0) and np.all(np.diff(v) > 0))
            lower = ctx.eps * (xs / (1 - xs)) ** (ctx.N + 1)
            worst_margin = min(worst_margin, float(np.min((v - lower) / lower)))
        big = uf.eval_Vbar(Ctx.from_N_alpha(8, 1e-4), 0.5)
        c.ok = ok and worst_margin >= 0 and big > 1e3
        c.detail = f"min relative margin {worst_margin:.3g}, Vbar(0.5) at alpha=1e-4: {big:.4g}"


# 10 -------------------------------------------------------------------------
SIGMA_SPREAD_MAX = 10.0


def test_criterion_10_T_representations():
    with Criterion(10, "T series vs quadrature within 1e-8; sigma-bound ratios stable", 10.0) as c:
        worst = 0.0
        ratios = []
        for N in (8, 12):
            for alpha in (0.2, 0.5, 0.8):
                ctx = Ctx.from_N_alpha(N, alpha)
                for x in np.linspace(-ctx.eps, 0.75, 10):
                    s, q = uf.T_monomial_series(ctx, x), uf.T_monomial_quadrature(ctx, x)
                    worst = max(worst, abs(s - q) / max(abs(q), 1e-300) if q != 0 else abs(s))
                ratios += [uf.sigma_bound_ratio(ctx, x) for x in np.linspace(ctx.eps, 0.75, 10)]
        r = np.array(ratios)
        stable = bool(np.all(np.isfinite(r)) and np.all(r > 0)) and r.max() / r.min() <= SIGMA_SPREAD_MAX
        c.ok = worst <= 1e-8 and stable
        c.detail = f"max rel gap {worst:.2e}; sigma ratios in [{r.min():.3f}, {r.max():.3f}]"


# 11 -------------------------------------------------------------------------
def test_criterion_11_asymptotic_crosscheck():
    with Criterion(11, "Vbar vs its O(eps)-scale asymptotic form within 5%", 5.0) as c:
        ctx = Ctx.from_eps(1 / 80.5)
        gaps = {}
        for x2 in (-1.0, -0.5, 0.5):
            series = uf.eval_Vbar(ctx, ctx.eps * x2)
            gaps[x2] = uf.eval_Vbar_asymptotic(ctx, x2) / series - 1
        c.ok = all(abs(g) <= 0.05 for g in gaps.values())
        c.detail = ", ".join(f"x2={k:+.1f}: {100 * v:+.2f}%" for k, v in gaps.items())


# 12 -------------------------------------------------------------------------
def test_criterion_12_flapping():
    with Criterion(12, "flapping signs for N = 8..11, c = 0.1; W^ws/W^u gap > 0", 120.0) as c:
        spec = fam()
        s = int(np.sign(estimate_S_infty(spec, 120).value))
        bad = []
        min_gap = math.inf
        n_checked = 0
        for N in (8, 9, 10, 11):
            for a in (0.25, 0.5, 0.75):
                ctx = uf.make_context(spec, N=N, alpha=a)
                rep = fl.track_wws(spec, ctx, 0.1, "right", S_sign=s, keep_dense=True)
                n_checked += 1
                if rep.agree is not True:
                    bad.append((N, a, "right", rep.crossed_line, rep.predicted_line))
                gap = fl.wws_wu_gap(rep, fl.track_wu(spec, ctx))
                min_gap = min(min_gap, gap)
            probe = Ctx.from_N_alpha(N, 0.5, a_eps=spec.a0)
            for kw in ({"alpha": probe.alpha_lower / 2}, {"alpha_c": probe.one_minus_alpha_lower / 2}):
                ctx = uf.make_context(spec, N=N, **kw)
                rep = fl.track_wws(spec, ctx, 0.1, "left", S_sign=s)
                n_checked += 1
                if rep.agree is not True:
                    bad.append((N, kw, "left", rep.crossed_line, rep.predicted_line))
        c.ok = not bad and min_gap > 0
        c.detail = f"{n_checked - len(bad)}/{n_checked} crossings agree (s = {s:+d}), min gap {min_gap:.2e}"
        if bad:
            c.detail += f"; disagreements {bad}"


# 13 -------------------------------------------------------------------------
def test_criterion_13_baby_lemmas():
    with Criterion(13, "baby-model crossing lemmas, N = 2, 3, K = 1 (direct and ODE)", 10.0) as c:
        delta = 0.2
        total, bad = 0, []
        for N in (2, 3):
            for uN, uN1 in ((1.0, -1.0), (-1.0, 1.0), (1.0, 1.0)):
                u = [0.0] * (N + 2)
                u[N], u[N + 1] = uN, uN1
                regimes = {"alpha->0": Ctx.from_N_alpha(N, 0.5 * N * delta ** N),
                           "alpha->1": Ctx.from_N_alpha(N, alpha_c=0.5 * (N + 1) * delta ** (N + 1))}
                for regime, ctx in regimes.items():
                    for side in ("left", "right"):
                        bc = fl.baby_crossing(u, ctx, K=1.0, delta=delta, side=side, regime=regime)
                        total += 1
                        if not (bc.direct_line == bc.ode_line == bc.predicted_line):
                            bad.append((N, uN, uN1, regime, side, bc.direct_line, bc.ode_line, bc.predicted_line))
        c.ok = not bad
        c.detail = f"{total - len(bad)}/{total} cases agree"
        if bad:
            c.detail += f"; disagreements {bad}"


if __name__ == "__main__":
    import sys

    failed = 0
    for name, fn in sorted(globals().items()):
        if name.startswith("test_criterion_"):
            try:
                fn()
            except AssertionError:
                failed += 1
    sys.exit(1 if failed else 0)
