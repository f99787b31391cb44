"""Truncated power series and the composition y -> G[y].

For a series y = sum_{k>=2} y_k x^k the nonlinearity g(x, y) composes to
G[y](x) = sum_k G_k x^k with

    G_k = f_k + mu * sum_l sum_{j=2l}^{k-1} h_{k-j,l} (y^l)_j .

``PowerTable`` keeps the coefficients (y^l)_j up to date one order at a time,
which makes the order-by-order recursions in ``center_manifold`` and
``unfolding`` O(K^2 * L) instead of recomputing every power at every step.
It optionally stores coefficients divided by a log-weight exp(W[j]) so that
Gevrey-1 growing sequences (y_j ~ Gamma(j + a)) never overflow.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError, TruncationError


@dataclass(frozen=True, eq=False)
class TruncatedSeries:
    """Coefficients of x^first_index .. x^order (inclusive)."""

    first_index: int
    coeffs: np.ndarray

    def __post_init__(self):
        if self.first_index < 0:
            raise DomainError("first_index must be >= 0")
        c = np.array(self.coeffs, dtype=float).ravel()
        c.setflags(write=False)
        object.__setattr__(self, "coeffs", c)

    @property
    def order(self) -> int:
        return self.first_index + self.coeffs.size - 1

    @classmethod
    def from_dense(cls, dense, first_index: int = 0, order: int | None = None) -> "TruncatedSeries":
        """Take entries first_index..order of a dense coefficient array."""
        dense = np.asarray(dense, dtype=float)
        if order is None:
            order = dense.size - 1
        out = np.zeros(max(order - first_index + 1, 0))
        hi = min(order, dense.size - 1)
        if hi >= first_index:
            out[: hi - first_index + 1] = dense[first_index: hi + 1]
        return cls(first_index, out)

    @classmethod
    def monomial(cls, k: int, order: int, v: float = 1.0) -> "TruncatedSeries":
        c = np.zeros(order - k + 1)
        c[0] = v
        return cls(k, c)

    def coeff(self, k: int) -> float:
        if k > self.order:
            raise TruncationError(f"coefficient {k} beyond truncation order {self.order}")
        if k < self.first_index:
            return 0.0
        return float(self.coeffs[k - self.first_index])

    def dense(self, n: int | None = None) -> np.ndarray:
        """Coefficients 0..n (n defaults to order)."""
        n = self.order if n is None else n
        if n > self.order:
            raise TruncationError(f"requested order {n} beyond truncation order {self.order}")
        out = np.zeros(n + 1)
        hi = n
        if hi >= self.first_index:
            out[self.first_index: hi + 1] = self.coeffs[: hi - self.first_index + 1]
        return out

    def truncate(self, n: int) -> "TruncatedSeries":
        return TruncatedSeries.from_dense(self.dense(n), self.first_index, n)

    def __call__(self, x: float) -> float:
        c = self.coeffs
        acc = 0.0
        for v in c[::-1]:
            acc = acc * x + v
        return acc * x ** self.first_index


def cauchy_product(a: TruncatedSeries, b: TruncatedSeries, n: int) -> TruncatedSeries:
    """(a*b) up to x^n; n may not exceed the order both inputs can support."""
    achievable = min(a.order + b.first_index, b.order + a.first_index)
    if n > achievable:
        raise TruncationError(f"product known only up to order {achievable}, asked for {n}")
    first = a.first_index + b.first_index
    if n < first:
        return TruncatedSeries(first, np.zeros(0))
    m = n - first + 1
    full = np.convolve(a.coeffs[:m], b.coeffs[:m])[:m]
    out = np.zeros(m)
    out[: full.size] = full
    return TruncatedSeries(first, out)


def series_power(y: TruncatedSeries, l: int, n: int) -> TruncatedSeries:
    """y^l up to x^n, for y starting at x^2 or later."""
    if l < 1:
        raise DomainError("series_power needs l >= 1")
    if y.first_index < 2:
        raise DomainError("series_power needs first_index >= 2")
    if n < 2 * l:
        raise DomainError(f"series_power needs n >= 2l (n={n}, l={l})")
    achievable = y.order + (l - 1) * y.first_index
    if n > achievable:
        raise TruncationError(f"y^{l} known only up to order {achievable}, asked for {n}")
    out = y.truncate(min(n, y.order))
    for _ in range(l - 1):
        reach = min(n, out.order + y.first_index, y.order + out.first_index)
        out = cauchy_product(out, y, reach)
    if out.order < n:
        # only possible when n sits beyond the product reach; caught above
        raise TruncationError("internal truncation mismatch")
    return out


class PowerTable:
    """Incremental table of (y^l)_j for l = 1..L, j <= current order.

    Entry P[l, j] stores (y^l)_j / exp(W[j - 2(l-1)]), where W is an optional
    log-weight vector (default zero).  Call ``push(k, value)`` with the
    *weighted* coefficient y_k / exp(W[k]) for k = 2, 3, ... in order.
    """

    def __init__(self, n: int, L: int, logw: np.ndarray | None = None):
        self.n = n
        self.L = max(L, 1)
        self.W = np.zeros(n + 1) if logw is None else np.asarray(logw, dtype=float)
        self.P = np.zeros((self.L + 1, n + 1))
        self.top = 1

    def push(self, k: int, value: float) -> None:
        if k != self.top + 1:
            raise DomainError(f"PowerTable expects order {self.top + 1}, got {k}")
        P, W = self.P, self.W
        P[1, k] = value
        for l in range(2, self.L + 1):
            if k < 2 * l:
                break
            i = np.arange(2 * (l - 1), k - 1)
            e = W[i - 2 * (l - 2)] + W[k - i] - W[k - 2 * (l - 1)]
            P[l, k] = float(np.sum(P[l - 1, i] * P[1, k - i] * np.exp(e)))
        self.top = k

    def power_coeff(self, l: int, j: int) -> float:
        """Unweighted (y^l)_j (may overflow for large weights)."""
        if j < 2 * l:
            return 0.0
        return float(self.P[l, j] * math.exp(self.W[j - 2 * (l - 1)]))


class CompositionEngine:
    """Evaluates G_k order by order from a PowerTable.

    With ``scale`` = s the composition uses the scaled coefficients
    f_k s^{k-2} and h_{k,l} s^{k+l-2}; s = 1 gives the plain composition.
    The returned value is G_k / exp(W[k]).
    """

    def __init__(self, f: np.ndarray, h: dict[int, np.ndarray], mu: float, n: int,
                 logw: np.ndarray | None = None, scale: float = 1.0):
        self.n = n
        self.f = np.asarray(f, dtype=float)
        self.mu = float(mu)
        self.h = {l: np.asarray(row, dtype=float) for l, row in h.items() if np.any(row != 0)}
        if self.mu == 0:
            self.h = {}
        L = max(self.h) if self.h else 1
        self.table = PowerTable(n, L, logw)
        self.W = self.table.W
        self.log_scale = math.log(scale) if scale != 1.0 else 0.0
        if scale <= 0:
            raise DomainError("scale must be positive")

    def g(self, k: int) -> float:
        W = self.W
        ls = self.log_scale
        val = self.f[k] * math.exp(ls * (k - 2) - W[k]) if self.f[k] != 0 else 0.0
        if not self.h:
            return val
        P = self.table.P
        acc = 0.0
        for l, row in self.h.items():
            jlo = 2 * l
            if jlo > k - 1:
                continue
            j = np.arange(jlo, k)
            coef = row[k - j]
            nz = coef != 0
            if not np.any(nz):
                continue
            j = j[nz]
            e = W[j - 2 * (l - 1)] - W[k] + ls * (k - j + l - 2)
            acc += float(np.sum(coef[nz] * P[l, j] * np.exp(e)))
        return val + self.mu * acc

    def push(self, k: int, weighted_value: float) -> None:
        self.table.push(k, weighted_value)


def compose_nonlinearity(spec, y: TruncatedSeries, n: int, eps: float = 0.0) -> TruncatedSeries:
    """G[y]_k for k = 2..n.

    eps = 0 uses the eps = 0 coefficients unscaled.  eps > 0 returns the scaled
    composition (coefficients f_k eps^{k-2}, h_{k,l} eps^{k+l-2}, including
    the y-linear h_{k,1} terms) appropriate for the blown-up variables.
    """
    if y.first_index < 2:
        raise DomainError("compose_nonlinearity needs y starting at x^2")
    if n < 2:
        return TruncatedSeries(2, np.zeros(0))
    f = spec.f_coeffs(n, eps)
    h = spec.h_table(n, eps)
    if eps == 0.0:
        h.pop(1, None)
    need = n - 2 if (1 in h and spec.mu != 0) else n - 3
    if y.order < need:
        raise TruncationError(f"G[y] up to order {n} needs y up to order {need}, have {y.order}")
    eng = CompositionEngine(f, h, spec.mu, n, scale=eps if eps > 0 else 1.0)
    out = np.zeros(n - 1)
    for k in range(2, n + 1):
        out[k - 2] = eng.g(k)
        yk = y.coeff(k) if k <= y.order else 0.0
        eng.push(k, yk)
    return TruncatedSeries(2, out)


def convolution_constant(a0: float, kmax: int = 200) -> float:
    """sup_k sum_{j=2}^{k-2} Gamma(j+a)Gamma(k-j+a) / Gamma(k-2+a) over 4 <= k <= kmax."""
    from scipy.special import gammaln

    best = 0.0
    for k in range(4, kmax + 1):
        j = np.arange(2, k - 1)
        s = np.sum(np.exp(gammaln(j + a0) + gammaln(k - j + a0) - gammaln(k - 2 + a0)))
        best = max(best, float(s))
    return best
