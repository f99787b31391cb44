"""Parameter studies of S_infinity over (f2, p) for one-parameter families.

A *builder* is any picklable callable ``builder(f2, p) -> NonlinearitySpec``;
``nonlinearity.family_spec`` is the standard one.  S_infinity is estimated by
S_K with K = 100 by default, and every point keeps |S_K - S_{K-1}| as its
convergence residual.
"""
from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Callable, NamedTuple

import numpy as np
from scipy.optimize import minimize_scalar

from .center_manifold import estimate_S_infty
from .errors import BracketError, DomainError
from .nonlinearity import NonlinearitySpec, family_spec

DEFAULT_K = 100
# S_K - S_{K-1} decays only like K^-3 once nonlinear terms are present, so
# at K = 100 residuals of a few 1e-6 are normal; flag only worse than this.
DEFAULT_FLAG_TOL = 1e-5


@dataclass(frozen=True)
class LocusPoint:
    p: float
    f2: float
    S: float
    residual: float
    flagged: bool


def _S(builder, f2, p, K=DEFAULT_K) -> float:
    return estimate_S_infty(builder(f2, p), K).value


def _point(args) -> LocusPoint:
    builder, f2, p, K, tol = args
    est = estimate_S_infty(builder(f2, p), K)
    return LocusPoint(float(p), float(f2), est.value, est.residual, est.residual > tol)


def sinfty_scan(builder: Callable = family_spec, f2_grid=(), p_grid=(), K: int = DEFAULT_K,
                tol: float = DEFAULT_FLAG_TOL, jobs: int = 1) -> list[LocusPoint]:
    """S_infinity on the grid, ordered by p then f2."""
    if K < 100:
        raise DomainError("sinfty_scan needs K >= 100")
    f2s = np.asarray(f2_grid, dtype=float)
    ps = np.asarray(p_grid, dtype=float)
    if not (np.all(np.isfinite(f2s)) and np.all(np.isfinite(ps))):
        raise DomainError("grids must be finite")
    tasks = [(builder, f2, p, K, tol) for p in ps for f2 in f2s]
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(_point, tasks, chunksize=max(1, len(tasks) // (4 * jobs))))
    return [_point(t) for t in tasks]


def zero_bisect(builder: Callable, p: float, f2_bracket: tuple[float, float], tol: float = 1e-10,
                K: int = DEFAULT_K) -> float:
    """Root of f2 -> S_infinity(f2, p) by bisection."""
    lo, hi = map(float, f2_bracket)
    slo, shi = _S(builder, lo, p, K), _S(builder, hi, p, K)
    if slo == 0:
        return lo
    if shi == 0:
        return hi
    if slo * shi > 0:
        raise BracketError(f"S has no sign change on [{lo}, {hi}] at p={p}")
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        sm = _S(builder, mid, p, K)
        if sm == 0:
            return mid
        if (sm > 0) == (slo > 0):
            lo, slo = mid, sm
        else:
            hi = mid
    return 0.5 * (lo + hi)


def count_roots(builder: Callable, p: float, window=(0.0, 3.0), n: int = 21, K: int = DEFAULT_K) -> int:
    """Sign changes of S over a coarse f2 pre-grid."""
    xs = np.linspace(window[0], window[1], n)
    s = np.sign([_S(builder, x, p, K) for x in xs])
    return int(np.sum(s[1:] * s[:-1] < 0))


def peak(builder: Callable, p: float, window=(0.0, 3.0), n: int = 21, K: int = DEFAULT_K) -> tuple[float, float]:
    """(f2, S) at the largest value of S over the window, refined from a coarse grid."""
    xs = np.linspace(window[0], window[1], n)
    vals = np.array([_S(builder, x, p, K) for x in xs])
    i = int(np.argmax(vals))
    a, b = xs[max(i - 1, 0)], xs[min(i + 1, n - 1)]
    res = minimize_scalar(lambda x: -_S(builder, x, p, K), bounds=(a, b), method="bounded",
                          options={"xatol": 1e-9})
    if -res.fun >= vals[i]:
        return float(res.x), float(-res.fun)
    return float(xs[i]), float(vals[i])


class FoldResult(NamedTuple):
    p: float
    f2: float
    dS_dp: float
    S_peak: float
    iterations: int


def fold_find(builder: Callable = family_spec, p_bracket=(1.8, 2.1), tol: float = 1e-6,
              window=(0.0, 3.0), K: int = DEFAULT_K) -> FoldResult:
    """Fold of the zero locus: the p where the two roots in f2 merge.

    Two roots exist while the interior maximum of S over f2 is positive; we
    bisect on p for the sign of that maximum.
    """
    lo, hi = map(float, p_bracket)
    _, plo = peak(builder, lo, window, K=K)
    _, phi = peak(builder, hi, window, K=K)
    if not (plo > 0 > phi):
        raise BracketError(f"p bracket [{lo}, {hi}] does not straddle the fold "
                           f"(peak S = {plo:.3g}, {phi:.3g})")
    it = 0
    while hi - lo > tol:
        it += 1
        mid = 0.5 * (lo + hi)
        if peak(builder, mid, window, K=K)[1] > 0:
            lo = mid
        else:
            hi = mid
    p_star = 0.5 * (lo + hi)
    f2_star, s_peak = peak(builder, p_star, window, K=K)
    return FoldResult(p_star, f2_star, dS_dp(builder, f2_star, p_star, K=K), s_peak, it)


class DerivativeEstimate(NamedTuple):
    value: float
    converged: bool


def dS_df2(spec: NonlinearitySpec, h_step: float = 1e-6, K: int = 120,
           tol: float = DEFAULT_FLAG_TOL) -> DerivativeEstimate:
    """Central difference of S_infinity with respect to f2."""
    if h_step <= 0:
        raise DomainError("h_step must be positive")
    up = estimate_S_infty(spec.with_f2_shift(h_step), K, tol)
    dn = estimate_S_infty(spec.with_f2_shift(-h_step), K, tol)
    return DerivativeEstimate((up.value - dn.value) / (2 * h_step),
                              bool(up.residual <= tol and dn.residual <= tol))


def dS_dp(builder: Callable, f2: float, p: float, h_step: float = 1e-6, K: int = DEFAULT_K) -> float:
    return (_S(builder, f2, p + h_step, K) - _S(builder, f2, p - h_step, K)) / (2 * h_step)


def lower_branch_root(builder: Callable, p: float, window=(-1.0, 3.0), K: int = DEFAULT_K,
                      tol: float = 1e-10) -> float:
    """Smallest root of S(., p) in the window: bisection between the left end and the peak."""
    f2_pk, s_pk = peak(builder, p, window, n=41, K=K)
    if s_pk <= 0:
        raise BracketError(f"no positive S in window at p={p}")
    return zero_bisect(builder, p, (window[0], f2_pk), tol, K)


def perturbation_sign(builder: Callable, f2_root: float, p: float, q: float, K: int = DEFAULT_K) -> int:
    """sign S_infinity(f2_root + q, p) (expected sign(q) * sign(dS/df2))."""
    s = _S(builder, f2_root + q, p, K)
    return 0 if s == 0 else int(math.copysign(1, s))
