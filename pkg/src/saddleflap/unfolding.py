"""eps > 0: weights, weak-stable-manifold coefficients and the tracking series.

Blown-up variables x = eps*xbar, y = eps*ybar.  Writing 1/eps = N + alpha
with 0 < alpha < 1, the weights

    wbar_k = Gamma(1/eps - k) Gamma(k + a) / (eps Gamma(1/eps))

turn the weak-manifold recursion
(1 - eps k) mbar_k + eps (k - 1 + a) mbar_{k-1} = eps Gbar_k
into partial sums mbar_k = (-1)^k wbar_k Sbar_k.

Contexts are built either from eps or, preferably, from (N, alpha) with the
complement 1 - alpha carried separately; all the gaps 1/eps - k are then
formed without cancellation, which is what makes alpha ~ 1e-12 usable.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy import integrate
from scipy.special import gammaln

from .center_manifold import _Neumaier
from .errors import DomainError, ResonanceError, SmallDivisorWarning
from .gamma_kit import SignedLogValue
from .nonlinearity import NonlinearitySpec
from .series_core import CompositionEngine, TruncatedSeries

RESONANCE_GUARD = 1e-8   # for contexts built from a raw eps
EXACT_GUARD = 1e-15      # for contexts built from (N, alpha)
VBAR_RANGE = 0.75


@dataclass(frozen=True)
class UnfoldingContext:
    N: int
    alpha: float
    a_eps: float = 0.0
    alpha_c: float = float("nan")   # 1 - alpha, kept separately for accuracy

    def __post_init__(self):
        if not math.isfinite(self.alpha_c):
            object.__setattr__(self, "alpha_c", 1.0 - self.alpha)
        if self.N < 1:
            raise DomainError("N must be >= 1")
        if not (self.alpha > 0 and self.alpha_c > 0):
            raise ResonanceError(f"1/eps is an integer (N={self.N}, alpha={self.alpha})")
        if abs(self.alpha + self.alpha_c - 1.0) > 1e-12:
            raise DomainError("alpha and alpha_c must sum to 1")

    @classmethod
    def from_eps(cls, eps: float, a_eps: float = 0.0) -> "UnfoldingContext":
        if not (0 < eps < 1):
            raise DomainError(f"eps must lie in (0, 1), got {eps}")
        inv = 1.0 / eps
        N = math.floor(inv)
        alpha = inv - N
        if min(alpha, 1 - alpha) <= RESONANCE_GUARD:
            raise ResonanceError(f"eps={eps!r}: 1/eps is within {RESONANCE_GUARD} of an integer")
        return cls(N, alpha, a_eps, 1.0 - alpha)

    @classmethod
    def from_N_alpha(cls, N: int, alpha: float | None = None, a_eps: float = 0.0,
                     alpha_c: float | None = None) -> "UnfoldingContext":
        """Exact context; give alpha, or alpha_c = 1 - alpha when alpha is near 1."""
        if alpha is None and alpha_c is None:
            raise DomainError("give alpha or alpha_c")
        if alpha is None:
            alpha = 1.0 - alpha_c
        if alpha_c is None:
            alpha_c = 1.0 - alpha
        if not (0 < alpha < 1) or not (0 < alpha_c < 1):
            raise DomainError(f"alpha must lie in (0, 1), got {alpha}")
        if min(alpha, alpha_c) <= EXACT_GUARD:
            raise ResonanceError(f"alpha={alpha!r} is within {EXACT_GUARD} of resonance")
        return cls(int(N), float(alpha), a_eps, float(alpha_c))

    @property
    def eps(self) -> float:
        return 1.0 / (self.N + self.alpha)

    @property
    def inv_eps(self) -> float:
        return self.N + self.alpha

    def gap(self, k: int) -> float:
        """1/eps - k without cancellation."""
        if k <= self.N:
            return (self.N - k) + self.alpha
        return -((k - self.N - 1) + self.alpha_c)

    @property
    def log_sin_pi_alpha(self) -> float:
        return math.log(math.sin(math.pi * min(self.alpha, self.alpha_c)))

    @property
    def log_eps_gamma_inv(self) -> float:
        """log(eps * Gamma(1/eps))."""
        return float(gammaln(self.inv_eps)) - math.log(self.inv_eps)

    def log_gamma_gap(self, k: int) -> tuple[float, int]:
        """(log|Gamma(1/eps - k)|, sign)."""
        if k <= self.N:
            return float(gammaln(self.gap(k))), 1
        n = k - self.N
        # reflection with 1 - (1/eps - k) = (k - N) + alpha_c
        la = math.log(math.pi) - self.log_sin_pi_alpha - float(gammaln(n + self.alpha_c))
        return la, (-1 if n % 2 else 1)

    @property
    def log_C(self) -> float:
        """log of Gamma(alpha)Gamma(1-alpha)/(eps Gamma(1/eps))."""
        return math.log(math.pi) - self.log_sin_pi_alpha - self.log_eps_gamma_inv

    @property
    def alpha_lower(self) -> float:
        """N^(a - N): below this alpha the left-side W^ws sits on the +sc line."""
        return self.N ** (self.a_eps - self.N)

    @property
    def one_minus_alpha_lower(self) -> float:
        return self.N ** (self.a_eps - 1 - self.N)


def make_context(spec: NonlinearitySpec | None = None, eps: float | None = None,
                 N: int | None = None, alpha: float | None = None,
                 alpha_c: float | None = None) -> UnfoldingContext:
    """Context with a_eps taken from the spec (eps-dependent when a_slope != 0)."""
    if eps is not None:
        ctx = UnfoldingContext.from_eps(eps)
    else:
        if N is None:
            raise DomainError("give eps or (N, alpha)")
        ctx = UnfoldingContext.from_N_alpha(N, alpha, alpha_c=alpha_c)
    a = spec.a_eps(ctx.eps) if spec is not None else 0.0
    return UnfoldingContext(ctx.N, ctx.alpha, a, ctx.alpha_c)


def wbar(ctx: UnfoldingContext, k: int) -> SignedLogValue:
    if k < 2:
        raise DomainError("wbar needs k >= 2")
    lg, s = ctx.log_gamma_gap(k)
    return SignedLogValue(lg + float(gammaln(k + ctx.a_eps)) - ctx.log_eps_gamma_inv, s)


def wbar_table(ctx: UnfoldingContext, K: int) -> tuple[np.ndarray, np.ndarray]:
    """(log|wbar_k|, sign) arrays indexed by k = 0..K (entries 0, 1 unused)."""
    la = np.full(K + 1, -np.inf)
    sg = np.zeros(K + 1, dtype=int)
    for k in range(2, K + 1):
        w = wbar(ctx, k)
        la[k], sg[k] = w.log_abs, w.sign
    return la, sg


@dataclass(frozen=True, eq=False)
class WeakManifoldExpansion:
    """mbar_k, Sbar_k and Gbar_k for k = 2..K (array index = k, entries 0, 1 zero)."""

    ctx: UnfoldingContext
    K: int
    mbar: np.ndarray
    Sbar: np.ndarray
    Gbar: np.ndarray
    wbar_log: np.ndarray
    wbar_sign: np.ndarray

    @property
    def mbar_signed(self) -> SignedLogValue:
        with np.errstate(divide="ignore"):
            return SignedLogValue(np.log(np.abs(self.mbar)), np.sign(self.mbar).astype(int))

    def unscaled(self) -> np.ndarray:
        """m^eps_k = eps^{1-k} mbar_k."""
        ks = np.arange(self.K + 1)
        with np.errstate(over="ignore"):
            return self.mbar * np.exp((1 - ks) * math.log(self.ctx.eps))

    def series(self) -> TruncatedSeries:
        return TruncatedSeries(2, self.mbar[2:])

    def __call__(self, xbar: float) -> float:
        return self.series()(xbar)

    def recursion_residual(self) -> np.ndarray:
        """Relative residual of (1-eps k) mbar_k + eps(k-1+a) mbar_{k-1} = eps Gbar_k."""
        eps, a = self.ctx.eps, self.ctx.a_eps
        out = np.zeros(self.K + 1)
        for k in range(2, self.K + 1):
            lhs = eps * self.ctx.gap(k) * self.mbar[k] + eps * (k - 1 + a) * self.mbar[k - 1]
            rhs = eps * self.Gbar[k]
            scale = max(abs(eps * self.ctx.gap(k) * self.mbar[k]),
                        abs(eps * (k - 1 + a) * self.mbar[k - 1]), abs(rhs), 1e-300)
            out[k] = abs(lhs - rhs) / scale
        return out


def weak_manifold_coeffs(spec: NonlinearitySpec, ctx: UnfoldingContext, K: int | None = None,
                         warn: bool = True) -> WeakManifoldExpansion:
    """Scaled weak-stable-manifold coefficients mbar_2..mbar_K."""
    K = ctx.N if K is None else K
    if K < 2:
        raise DomainError("K must be >= 2")
    if K > ctx.N and warn:
        warnings.warn(f"K={K} > N={ctx.N}: small divisors 1/(1-eps k) past k=N",
                      SmallDivisorWarning, stacklevel=2)
    eps = ctx.eps
    la, sg = wbar_table(ctx, K)
    with np.errstate(over="ignore"):
        w = sg * np.exp(la)
    eng = CompositionEngine(spec.f_coeffs(K, eps), spec.h_table(K, eps), spec.mu, K, scale=eps)
    acc = _Neumaier()
    mbar = np.zeros(K + 1)
    Sbar = np.zeros(K + 1)
    G = np.zeros(K + 1)
    for k in range(2, K + 1):
        G[k] = eng.g(k)
        # eps*G/(wbar (1 - eps k)) with 1 - eps k = eps * gap(k)
        d = G[k] / (w[k] * ctx.gap(k))
        acc.add(d if k % 2 == 0 else -d)
        Sbar[k] = acc.value
        mbar[k] = (1 if k % 2 == 0 else -1) * w[k] * Sbar[k]
        eng.push(k, mbar[k])
    return WeakManifoldExpansion(ctx, K, mbar, Sbar, G, la, sg)


def sbar_at_resonance_edge(spec: NonlinearitySpec, ctx: UnfoldingContext) -> float:
    """Sbar_N."""
    exp = weak_manifold_coeffs(spec, ctx, ctx.N, warn=False)
    return float(exp.Sbar[ctx.N])


def mbar_weight_sup(expansion: WeakManifoldExpansion) -> float:
    """sup_{2 <= k <= N-1} |mbar_k| / wbar_k  (= sup |Sbar_k|)."""
    hi = min(expansion.K, expansion.ctx.N - 1)
    if hi < 2:
        return 0.0
    return float(np.max(np.abs(expansion.Sbar[2:hi + 1])))


# ----------------------------------------------------------- gamma series

def _gamma_series(ctx: UnfoldingContext, xbar: float, k0: int, log_pref: float, tol: float,
                  block: int = 256, kmax: int = 200_000) -> float:
    """sum_{k>=k0} exp(log_pref) Gamma(k+a)/Gamma(k+1-1/eps) xbar^k with a certified tail.

    Terms are summed until the geometric bound |t_k| q/(1-q), where q bounds
    all later term ratios, falls below tol * |partial sum|.
    """
    if xbar == 0.0:
        return 0.0
    a, N, ac = ctx.a_eps, ctx.N, ctx.alpha_c
    lx = math.log(abs(xbar))
    neg = xbar < 0
    parts: list[float] = []
    k = k0
    while k < kmax:
        ks = np.arange(k, k + block, dtype=float)
        logt = log_pref + gammaln(ks + a) - gammaln(ks - N + ac) + ks * lx
        t = np.exp(logt)
        if neg:
            t = np.where(ks.astype(np.int64) % 2 == 1, -t, t)
        parts.extend(t.tolist())
        k += block
        # ratio of the next term to the last one, and its limit |xbar|
        klast = k - 1
        q = abs(xbar) * (klast + a) / (klast - N + ac)
        q = max(q, abs(xbar))
        if q < 7 / 8 and klast >= N + 10:
            total = math.fsum(parts)
            tail = math.exp(logt[-1]) * q / (1 - q)
            if tail <= tol * abs(total) or tail == 0.0:
                return total
    raise DomainError("gamma series did not certify its tail")


def _check_vbar_range(xbar: float) -> None:
    if not math.isfinite(xbar) or abs(xbar) > VBAR_RANGE:
        raise DomainError(f"|xbar| must be <= {VBAR_RANGE}, got {xbar}")


def eval_Vbar(ctx: UnfoldingContext, xbar: float, tol: float = 1e-13) -> float:
    """Vbar(xbar) = C sum_{k>=N} Gamma(k+a)/Gamma(k+1-1/eps) xbar^k; tol is relative."""
    _check_vbar_range(xbar)
    return _gamma_series(ctx, xbar, ctx.N, ctx.log_C, tol)


def eval_Ubar(ctx: UnfoldingContext, xbar: float, tol: float = 1e-13) -> float:
    """Ubar = Vbar - wbar_N xbar^N (series from k = N+1)."""
    _check_vbar_range(xbar)
    return _gamma_series(ctx, xbar, ctx.N + 1, ctx.log_C, tol)


def T_monomial_series(ctx: UnfoldingContext, xbar: float, tol: float = 1e-13) -> float:
    """T[(.)^{N+1}](xbar) from its gamma series."""
    if not math.isfinite(xbar) or abs(xbar) >= 1:
        raise DomainError(f"|xbar| must be < 1, got {xbar}")
    log_pref = float(gammaln(ctx.alpha_c)) - float(gammaln(ctx.N + 1 + ctx.a_eps))
    return _gamma_series(ctx, xbar, ctx.N + 1, log_pref, tol)


def T_monomial_quadrature(ctx: UnfoldingContext, xbar: float, delta2: float = 1.0) -> float:
    """T[(.)^{N+1}](xbar) = xbar^{N+1}(1-xbar)^{-(1/eps+a)} int_0^1 (1-xbar t)^{1/eps+a-1} t^{-alpha} dt."""
    eps = ctx.eps
    if not math.isfinite(xbar) or xbar >= 1 or xbar < -delta2 * eps:
        raise DomainError(f"xbar must lie in [-delta2*eps, 1), got {xbar}")
    if xbar == 0.0:
        return 0.0
    p = ctx.inv_eps + ctx.a_eps - 1.0
    if ctx.alpha > 0.5:
        # t = s^{1/(1-alpha)} removes the t^{-alpha} endpoint singularity
        r = 1.0 / ctx.alpha_c
        val, _ = integrate.quad(lambda s: math.exp(p * math.log1p(-xbar * s ** r)), 0.0, 1.0,
                                epsabs=0.0, epsrel=1e-13, limit=400)
        val /= ctx.alpha_c
    else:
        # algebraic weight t^{-alpha} handled exactly by QUADPACK's QAWS rule
        val, _ = integrate.quad(lambda t: math.exp(p * math.log1p(-xbar * t)), 0.0, 1.0,
                                weight="alg", wvar=(-ctx.alpha, 0.0),
                                epsabs=0.0, epsrel=1e-13, limit=400)
    logpref = (ctx.N + 1) * math.log(abs(xbar)) - (p + 1.0) * math.log1p(-xbar)
    sgn = -1.0 if (xbar < 0 and (ctx.N + 1) % 2 == 1) else 1.0
    return sgn * math.exp(logpref) * val


def sigma(ctx: UnfoldingContext, xbar: float, delta2: float = 1.0) -> float:
    """sigma(xbar) = 1 near the node, (delta2 eps / xbar)^{1-alpha} beyond."""
    d = delta2 * ctx.eps
    if abs(xbar) <= d:
        return 1.0
    return (d / abs(xbar)) ** ctx.alpha_c


def sigma_bound_ratio(ctx: UnfoldingContext, xbar: float, delta2: float = 1.0) -> float:
    """(1-alpha)|T[(.)^{N+1}](xbar)| / ((xbar/(1-xbar))^{N+1} sigma(xbar))."""
    T = T_monomial_quadrature(ctx, xbar, delta2)
    ref = (ctx.N + 1) * math.log(abs(xbar) / (1 - xbar)) + math.log(sigma(ctx, xbar, delta2))
    return ctx.alpha_c * abs(T) / math.exp(ref)


def eval_Vbar_asymptotic(ctx: UnfoldingContext, xbar2: float, delta2: float = 1.0) -> float:
    """Leading-order form of Vbar(eps*xbar2) for |xbar2| <= delta2."""
    if not math.isfinite(xbar2) or abs(xbar2) > delta2:
        raise DomainError(f"|xbar2| must be <= {delta2}, got {xbar2}")
    if xbar2 == 0.0:
        return 0.0
    N, a, al, ac = ctx.N, ctx.a_eps, ctx.alpha, ctx.alpha_c
    inner, _ = integrate.quad(lambda v: math.exp((1 - v) * xbar2) * v ** ac, 0.0, 1.0,
                              epsabs=0.0, epsrel=1e-12, limit=200)
    bracket = 1.0 + xbar2 / ac * (1.0 + xbar2 * inner)
    lead = float(gammaln(al)) + (a + 1 - al) * math.log(N) + N * math.log(abs(ctx.eps * xbar2))
    sgn = -1.0 if (xbar2 < 0 and N % 2 == 1) else 1.0
    return sgn * math.exp(lead) * bracket


def weight_majorant_diag(ctx: UnfoldingContext) -> tuple[float, float, float]:
    """(Q4, P4, max_k [log wbar_k - (Q4 (k-2) + P4)]) over 2 <= k <= N-1."""
    N = ctx.N
    if N < 5:
        raise DomainError("weight_majorant_diag needs N >= 5")
    lw = np.array([wbar(ctx, k).log_abs for k in range(2, N)])
    P4 = float(lw[0])
    Q4 = float((lw[-1] - P4) / (N - 3))
    ks = np.arange(2, N)
    viol = float(np.max(lw - (Q4 * (ks - 2) + P4)))
    return Q4, P4, viol


def Q4_asymptotic(ctx: UnfoldingContext) -> float:
    N, a, al = ctx.N, ctx.a_eps, ctx.alpha
    return ((a + 1 - al) * math.log(N) + float(gammaln(1 + al) - gammaln(2 + a))) / (N - 3)
