"""Center-manifold coefficients at eps = 0.

Inserting y = sum m_k x^k into x^2 y' = -y(1 + a x) + g(x, y) gives

    m_k + (k - 1 + a) m_{k-1} = G[m]_k,

and with w_k = Gamma(k + a) the substitution m_k = (-1)^k w_k S_k turns this
into the partial-sum form S_k = S_{k-1} + (-1)^k G[m]_k / w_k.  We carry the
recursion in S (which stays O(1)) and keep the power table normalised by
Gamma weights, so K well beyond 170 is fine.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy.special import gammaln

from .errors import DomainError
from .gamma_kit import SignedLogValue
from .nonlinearity import NonlinearitySpec
from .series_core import CompositionEngine, TruncatedSeries

DEFAULT_K = 120
DEFAULT_TOL = 1e-12


class _Neumaier:
    """Compensated running sum."""

    __slots__ = ("s", "c")

    def __init__(self):
        self.s = 0.0
        self.c = 0.0

    def add(self, x: float) -> None:
        t = self.s + x
        if abs(self.s) >= abs(x):
            self.c += (self.s - t) + x
        else:
            self.c += (x - t) + self.s
        self.s = t

    @property
    def value(self) -> float:
        return self.s + self.c


@dataclass(frozen=True, eq=False)
class CenterManifoldData:
    """m_k, S_k for k = 2..K (index i holds order k = i + 2).

    ``m`` holds floats (inf once Gamma(k+a) overflows); ``m_signed`` is the
    overflow-free representation.
    """

    a0: float
    K: int
    S: np.ndarray
    increments: np.ndarray
    m_log_abs: np.ndarray
    m_sign: np.ndarray
    S_infty_estimate: float
    residual: float

    @property
    def ks(self) -> np.ndarray:
        return np.arange(2, self.K + 1)

    @property
    def m(self) -> np.ndarray:
        with np.errstate(over="ignore"):
            return self.m_sign * np.exp(self.m_log_abs)

    def m_signed(self, k: int) -> SignedLogValue:
        i = k - 2
        return SignedLogValue(float(self.m_log_abs[i]), int(self.m_sign[i]))

    def S_at(self, k: int) -> float:
        return float(self.S[k - 2])

    def series(self) -> TruncatedSeries:
        return TruncatedSeries(2, self.m)


def _gamma_weights(a0: float, K: int) -> np.ndarray:
    W = np.zeros(K + 1)
    ks = np.arange(2, K + 1)
    W[2:] = gammaln(ks + a0)
    return W


def center_coeffs(spec: NonlinearitySpec, K: int = DEFAULT_K) -> CenterManifoldData:
    """Run the eps = 0 recursion up to order K."""
    if K < 2:
        raise DomainError(f"center_coeffs needs K >= 2, got {K}")
    a0 = spec.a0
    W = _gamma_weights(a0, K)
    h = spec.h_table(K, 0.0)
    h.pop(1, None)  # h_{k,1} vanishes at eps = 0 by hypothesis
    eng = CompositionEngine(spec.f_coeffs(K, 0.0), h, spec.mu, K, logw=W)
    acc = _Neumaier()
    S = np.zeros(K - 1)
    inc = np.zeros(K - 1)
    for k in range(2, K + 1):
        g_hat = eng.g(k)  # G_k / Gamma(k + a0)
        d = g_hat if k % 2 == 0 else -g_hat
        acc.add(d)
        S[k - 2] = acc.value
        inc[k - 2] = d
        eng.push(k, S[k - 2] if k % 2 == 0 else -S[k - 2])
    sign = np.sign(S) * np.where(np.arange(2, K + 1) % 2 == 0, 1.0, -1.0)
    with np.errstate(divide="ignore"):
        log_abs = np.log(np.abs(S)) + W[2:]
    residual = abs(S[-1] - S[-2]) if K >= 3 else abs(S[-1])
    return CenterManifoldData(a0, K, S, inc, log_abs, sign.astype(int), float(S[-1]), float(residual))


class SInftyEstimate(NamedTuple):
    value: float
    k_used: int
    residual: float
    converged: bool


def estimate_S_infty(spec: NonlinearitySpec, K: int = DEFAULT_K, tol: float = DEFAULT_TOL) -> SInftyEstimate:
    """S_K as the estimate of S_infinity, with |S_K - S_{K-1}| as residual."""
    if K < 10:
        raise DomainError("estimate_S_infty needs K >= 10")
    data = center_coeffs(spec, K)
    return SInftyEstimate(data.S_infty_estimate, K, data.residual, data.residual <= tol)


def linear_case_S(f_coeffs, a0: float, K: int) -> tuple[np.ndarray, np.ndarray]:
    """Closed form for h = 0: S_k = sum_{j<=k} (-1)^j f_j / Gamma(j + a0).

    ``f_coeffs`` is indexed by order (entry k is f_k; entries 0, 1 ignored).
    Returns (S, m) for k = 2..K; m overflows to inf past k ~ 170.
    """
    if a0 <= -2:
        raise DomainError(f"linear_case_S needs a0 > -2, got {a0}")
    f = np.zeros(K + 1)
    fc = np.asarray(f_coeffs, dtype=float)
    n = min(K, fc.size - 1)
    f[2:n + 1] = fc[2:n + 1]
    ks = np.arange(2, K + 1)
    lg = gammaln(ks + a0)
    sgn = np.where(ks % 2 == 0, 1.0, -1.0)
    terms = sgn * f[2:] * np.exp(-lg)
    S = np.array([math.fsum(terms[: i + 1]) for i in range(terms.size)])
    with np.errstate(over="ignore"):
        m = sgn * np.exp(lg) * S
    return S, m


def gevrey_norm(y: TruncatedSeries, a0: float) -> float:
    """sup_k |y_k| / Gamma(k + a0)."""
    if y.first_index < 2:
        raise DomainError("gevrey_norm needs first_index >= 2")
    if y.coeffs.size == 0:
        return 0.0
    ks = np.arange(y.first_index, y.order + 1)
    with np.errstate(divide="ignore"):
        r = np.log(np.abs(y.coeffs)) - gammaln(ks + a0)
    return float(np.exp(np.max(r)))


def ode_residual(spec: NonlinearitySpec, data: CenterManifoldData, kmax: int | None = None) -> np.ndarray:
    """Coefficients of x^2 m' + m(1 + a x) - g(x, m), divided by Gamma(k + a0).

    Uses the weighted power table directly so it does not overflow.
    Entry i corresponds to order k = i + 2 for k <= kmax (default K).
    """
    K = data.K if kmax is None else kmax
    a0 = data.a0
    W = _gamma_weights(a0, K)
    h = spec.h_table(K, 0.0)
    h.pop(1, None)
    eng = CompositionEngine(spec.f_coeffs(K, 0.0), h, spec.mu, K, logw=W)
    mh = np.zeros(K + 1)  # m_k / Gamma(k+a0)
    for k in range(2, K + 1):
        mh[k] = data.S[k - 2] * (1 if k % 2 == 0 else -1)
    out = np.zeros(K - 1)
    for k in range(2, K + 1):
        g_hat = eng.g(k)
        # x^2 m' contributes (k-1) m_{k-1}; a x m contributes a m_{k-1}
        prev = (k - 1 + a0) * mh[k - 1] * math.exp(W[k - 1] - W[k]) if k > 2 else 0.0
        out[k - 2] = mh[k] + prev - g_hat
        eng.push(k, mh[k])
    return out
