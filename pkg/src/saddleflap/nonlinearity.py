"""Problem inputs: the normal-form data (a, f, h, mu, rho, B).

The y-equation nonlinearity is g(x, y) = f(x) + mu * h(x, y) with

    f(x)    = sum_{k>=2} f_k x^k,
    h(x, y) = sum_{k>=2} h_{k,1} x^k y + sum_{k>=1, l>=2} h_{k,l} x^k y^l.

Coefficients come from providers (explicit lists, rational functions of x
expanded by long division, or a few named builtins).  Providers may carry an
additive explicit correction, which is how parameter shifts such as
f_2 -> f_2 + q are realised without rebuilding the rational part.

A spec may depend affinely on eps through ``a_slope``, ``f_slope`` and
``h_slope``; every example we ship is eps-independent.
"""
from __future__ import annotations

import json
import math
import threading
import warnings
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Mapping

import numpy as np

from .errors import BoundWarning, DomainError, HypothesisViolation, SpecParseError

CHECK_ORDER = 64


def expand_rational(num, den, n: int) -> np.ndarray:
    """Taylor coefficients of num(x)/den(x) at x=0, orders 0..n."""
    num = np.asarray(num, dtype=float).ravel()
    den = np.asarray(den, dtype=float).ravel()
    if den.size == 0 or den[0] == 0:
        raise DomainError("rational provider needs a denominator with nonzero constant term")
    if n < 0:
        return np.zeros(0)
    out = np.zeros(n + 1)
    d0 = den[0]
    for k in range(n + 1):
        acc = num[k] if k < num.size else 0.0
        jmax = min(k, den.size - 1)
        for j in range(1, jmax + 1):
            acc -= den[j] * out[k - j]
        out[k] = acc / d0
    return out


class _Memo:
    """Thread-safe memo of a growing coefficient array."""

    def __init__(self, build):
        self._build = build
        self._lock = threading.Lock()
        self._cache = np.zeros(0)

    def get(self, n: int) -> np.ndarray:
        cache = self._cache
        if cache.size > n:
            return cache[: n + 1]
        with self._lock:
            if self._cache.size <= n:
                cache = self._build(max(n, 2 * self._cache.size, 16))
                cache.setflags(write=False)
                self._cache = cache
            return self._cache[: n + 1]


_BUILTINS = ("zero", "monomial", "geometric")


@dataclass(frozen=True, eq=False)
class CoefficientProvider:
    """Coefficients c_k of a univariate series c(x).

    kind is "explicit" (``terms`` maps k to value), "rational" (``num``/``den``
    polynomial coefficient lists, lowest order first) or "builtin" (``name`` in
    zero / monomial{k, v} / geometric{start, ratio, scale}).  ``extra`` is an
    explicit additive correction applied on top of any kind.
    """

    kind: str = "explicit"
    terms: Mapping[int, float] = field(default_factory=dict)
    num: tuple = ()
    den: tuple = (1.0,)
    name: str = ""
    params: Mapping[str, float] = field(default_factory=dict)
    extra: Mapping[int, float] = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in ("explicit", "rational", "builtin"):
            raise SpecParseError(f"unknown provider kind {self.kind!r}")
        if self.kind == "rational":
            if len(self.den) == 0 or float(self.den[0]) == 0.0:
                raise DomainError("rational provider needs den[0] != 0")
        if self.kind == "builtin" and self.name not in _BUILTINS:
            raise SpecParseError(f"unknown builtin provider {self.name!r}")
        object.__setattr__(self, "_memo", _Memo(self._build))

    # -- construction helpers
    @classmethod
    def explicit(cls, terms: Mapping[int, float]) -> "CoefficientProvider":
        return cls("explicit", terms={int(k): float(v) for k, v in terms.items()})

    @classmethod
    def rational(cls, num, den, extra=None) -> "CoefficientProvider":
        return cls("rational", num=tuple(float(c) for c in num),
                   den=tuple(float(c) for c in den), extra=dict(extra or {}))

    @classmethod
    def zero(cls) -> "CoefficientProvider":
        return cls("explicit")

    def _build(self, n: int) -> np.ndarray:
        out = np.zeros(n + 1)
        if self.kind == "explicit":
            for k, v in self.terms.items():
                if 0 <= k <= n:
                    out[k] += v
        elif self.kind == "rational":
            out += expand_rational(self.num, self.den, n)
        else:
            p = self.params
            if self.name == "monomial":
                k = int(p["k"])
                if k <= n:
                    out[k] = float(p.get("v", 1.0))
            elif self.name == "geometric":
                start = int(p.get("start", 2))
                r = float(p.get("ratio", 1.0))
                s = float(p.get("scale", 1.0))
                ks = np.arange(start, n + 1)
                out[start:] = s * r ** (ks - start)
        for k, v in self.extra.items():
            if 0 <= k <= n:
                out[k] += v
        return out

    def coeffs(self, n: int) -> np.ndarray:
        """Read-only view of c_0..c_n."""
        return self._memo.get(n)

    def coeff(self, k: int) -> float:
        return float(self.coeffs(k)[k])

    def shifted(self, k: int, dv: float) -> "CoefficientProvider":
        extra = dict(self.extra)
        extra[k] = extra.get(k, 0.0) + dv
        return replace(self, extra=extra)

    def is_finite_polynomial(self) -> bool:
        return self.kind != "rational" and not (self.kind == "builtin" and self.name == "geometric")

    def to_document(self) -> dict:
        if self.kind == "explicit":
            doc = {"explicit": [{"k": k, "v": v} for k, v in sorted(self.terms.items())]}
        elif self.kind == "rational":
            doc = {"rational": {"num": list(self.num), "den": list(self.den)}}
        else:
            doc = {"builtin": {"name": self.name, **dict(self.params)}}
        if self.extra:
            doc["extra"] = [{"k": k, "v": v} for k, v in sorted(self.extra.items())]
        return doc


@dataclass(frozen=True, eq=False)
class BivariateCoefficientProvider:
    """Coefficients h_{k,l} of h(x, y) = sum h_{k,l} x^k y^l.

    ``terms`` maps (k, l) to explicit values; ``rational`` maps l to a
    CoefficientProvider giving the x-series that multiplies y^l.
    """

    terms: Mapping[tuple, float] = field(default_factory=dict)
    rational: Mapping[int, CoefficientProvider] = field(default_factory=dict)

    def levels(self) -> list[int]:
        ls = {l for (_, l), v in self.terms.items() if v != 0}
        ls |= set(self.rational)
        return sorted(ls)

    def table(self, n: int) -> dict[int, np.ndarray]:
        """{l: array of h_{k,l} for k = 0..n}."""
        out: dict[int, np.ndarray] = {}
        for l in self.levels():
            row = np.zeros(n + 1)
            for (k, ll), v in self.terms.items():
                if ll == l and 0 <= k <= n:
                    row[k] += v
            if l in self.rational:
                row += self.rational[l].coeffs(n)
            out[l] = row
        return out

    def coeff(self, k: int, l: int) -> float:
        v = float(self.terms.get((k, l), 0.0))
        if l in self.rational:
            v += self.rational[l].coeff(k)
        return v

    def is_empty(self) -> bool:
        return not self.levels()

    def to_document(self) -> list:
        doc: list = [{"k": k, "l": l, "v": v} for (k, l), v in sorted(self.terms.items())]
        for l, prov in sorted(self.rational.items()):
            d = prov.to_document()
            d["l"] = l
            doc.append(d)
        return doc


@dataclass(frozen=True, eq=False)
class NonlinearitySpec:
    a0: float
    f_provider: CoefficientProvider
    h_provider: BivariateCoefficientProvider
    mu: float = 1.0
    rho: float = 1.0
    B: float = 1.0
    a_slope: float = 0.0
    f_slope: CoefficientProvider | None = None
    h_slope: BivariateCoefficientProvider | None = None
    name: str = ""

    def __post_init__(self):
        validate(self)

    def a_eps(self, eps: float = 0.0) -> float:
        return self.a0 + self.a_slope * eps

    def f_coeffs(self, n: int, eps: float = 0.0) -> np.ndarray:
        """f_k at the given eps for k = 0..n (entries 0, 1 forced to zero)."""
        out = np.array(self.f_provider.coeffs(n), dtype=float)
        if self.f_slope is not None and eps != 0.0:
            out = out + eps * self.f_slope.coeffs(n)
        out[:2] = 0.0
        return out

    def h_table(self, n: int, eps: float = 0.0) -> dict[int, np.ndarray]:
        tab = self.h_provider.table(n)
        if self.h_slope is not None and eps != 0.0:
            for l, row in self.h_slope.table(n).items():
                tab[l] = tab.get(l, np.zeros(n + 1)) + eps * row
        for l in tab:
            tab[l][0] = 0.0
            if l == 1:
                tab[l][:2] = 0.0
        return tab

    def max_level(self) -> int:
        ls = self.h_provider.levels()
        if self.h_slope is not None:
            ls = ls + self.h_slope.levels()
        return max(ls) if ls else 0

    def with_f2_shift(self, q: float) -> "NonlinearitySpec":
        fp = self.f_provider.shifted(2, q)
        B = max(self.B, abs(fp.coeff(2)) * self.rho ** 2 * (1 + 1e-9))
        return replace(self, f_provider=fp, B=B)

    def with_mu(self, mu: float) -> "NonlinearitySpec":
        return replace(self, mu=mu)

    @property
    def is_y_linear(self) -> bool:
        return self.mu == 0 or (self.h_provider.is_empty()
                                and (self.h_slope is None or self.h_slope.is_empty()))


def validate(spec: NonlinearitySpec, order: int = CHECK_ORDER) -> None:
    """Hard checks (a0 > -2, h_{k,1}^0 = 0) plus advisory bound checks."""
    for nm in ("a0", "mu", "rho", "B", "a_slope"):
        v = getattr(spec, nm)
        if not isinstance(v, (int, float)) or not math.isfinite(v):
            raise SpecParseError(f"{nm} must be a finite number, got {v!r}")
    if spec.a0 <= -2:
        raise HypothesisViolation(f"a0 must exceed -2, got {spec.a0}")
    if spec.mu < 0:
        raise SpecParseError("mu must be >= 0")
    if spec.rho <= 0 or spec.B <= 0:
        raise SpecParseError("rho and B must be positive")
    h1 = spec.h_provider.table(order).get(1)
    if h1 is not None and np.any(h1 != 0):
        k = int(np.flatnonzero(h1)[0])
        raise HypothesisViolation(f"h_{{{k},1}} at eps=0 must vanish, got {h1[k]}")
    f = spec.f_provider.coeffs(order)
    if np.any(f[:2] != 0):
        raise HypothesisViolation("f must start at order x^2")
    ks = np.arange(order + 1)
    with np.errstate(over="ignore"):
        fb = spec.B * spec.rho ** (-ks.astype(float))
    bad = np.flatnonzero(np.abs(f[2:]) > fb[2:] * (1 + 1e-12))
    if bad.size:
        warnings.warn(f"|f_k| exceeds B*rho^-k at k={int(bad[0]) + 2} (advisory)", BoundWarning,
                      stacklevel=3)
    for l, row in spec.h_provider.table(order).items():
        with np.errstate(over="ignore"):
            hb = spec.rho ** (-(ks + l).astype(float))
        bad = np.flatnonzero(np.abs(row) > hb * (1 + 1e-12))
        if bad.size:
            warnings.warn(f"|h_{{k,{l}}}| exceeds rho^-(k+l) at k={int(bad[0])} (advisory)",
                          BoundWarning, stacklevel=3)


# ---------------------------------------------------------------- builtins

def euler_spec() -> NonlinearitySpec:
    """x^2 y' = -y + x^2, whose center manifold is sum (-1)^k (k-1)! x^k."""
    return NonlinearitySpec(0.0, CoefficientProvider.explicit({2: 1.0}),
                            BivariateCoefficientProvider(), mu=0.0, rho=1.0, B=1.0,
                            name="euler")


def zero_spec(a0: float = 0.0) -> NonlinearitySpec:
    return NonlinearitySpec(a0, CoefficientProvider.zero(), BivariateCoefficientProvider(),
                            mu=0.0, name="zero")


def family_spec(f2: float, p: float, rho: float = 0.5) -> NonlinearitySpec:
    """x^2 y' = -y + f2 x^2 + p (x^3/(1-x) + 3 x y^2 + x y^3), a0 = 0.

    The parameter p multiplies every nonlinear term, so it is folded into the
    h-coefficients and mu is set to 1.
    """
    f = CoefficientProvider.rational([0.0, 0.0, 0.0, p], [1.0, -1.0], extra={2: f2})
    h = BivariateCoefficientProvider({(1, 2): 3.0 * p, (1, 3): float(p)})
    fk = f.coeffs(CHECK_ORDER)
    B = max(1e-300, float(np.max(np.abs(fk) * rho ** np.arange(CHECK_ORDER + 1)))) * (1 + 1e-9)
    return NonlinearitySpec(0.0, f, h, mu=1.0, rho=rho, B=B, name="family")


BUILTIN_SPECS = {"euler": euler_spec, "zero": zero_spec, "family": family_spec}


# ------------------------------------------------------------ (de)serialise

def _provider_from_doc(doc) -> CoefficientProvider:
    if not isinstance(doc, Mapping):
        raise SpecParseError(f"provider must be an object, got {type(doc).__name__}")
    extra = {}
    for t in doc.get("extra", []):
        extra[int(t["k"])] = extra.get(int(t["k"]), 0.0) + float(t["v"])
    if "explicit" in doc:
        terms: dict[int, float] = {}
        for t in doc["explicit"]:
            terms[int(t["k"])] = terms.get(int(t["k"]), 0.0) + float(t["v"])
        return CoefficientProvider("explicit", terms=terms, extra=extra)
    if "rational" in doc:
        r = doc["rational"]
        return CoefficientProvider("rational", num=tuple(float(c) for c in r["num"]),
                                   den=tuple(float(c) for c in r["den"]), extra=extra)
    if "builtin" in doc:
        b = dict(doc["builtin"])
        name = b.pop("name")
        return CoefficientProvider("builtin", name=name, params=b, extra=extra)
    raise SpecParseError("provider needs one of explicit / rational / builtin")


def _bivariate_from_doc(doc) -> BivariateCoefficientProvider:
    if doc is None:
        return BivariateCoefficientProvider()
    if not isinstance(doc, list):
        raise SpecParseError("h must be a list of terms")
    terms: dict[tuple, float] = {}
    rational: dict[int, CoefficientProvider] = {}
    for t in doc:
        l = int(t["l"])
        if "v" in t:
            key = (int(t["k"]), l)
            terms[key] = terms.get(key, 0.0) + float(t["v"])
        else:
            if l in rational:
                raise SpecParseError(f"duplicate rational h-term for l={l}")
            rational[l] = _provider_from_doc(t)
    return BivariateCoefficientProvider(terms, rational)


def spec_from_document(doc: Mapping) -> NonlinearitySpec:
    try:
        if "builtin" in doc:
            name = doc["builtin"]
            if name not in BUILTIN_SPECS:
                raise SpecParseError(f"unknown builtin spec {name!r}")
            return BUILTIN_SPECS[name](**doc.get("params", {}))
        f = _provider_from_doc(doc.get("f", {"explicit": []}))
        h = _bivariate_from_doc(doc.get("h"))
        f_slope = _provider_from_doc(doc["f_slope"]) if "f_slope" in doc else None
        h_slope = _bivariate_from_doc(doc["h_slope"]) if "h_slope" in doc else None
        return NonlinearitySpec(
            a0=float(doc["a0"]), f_provider=f, h_provider=h,
            mu=float(doc.get("mu", 1.0)), rho=float(doc.get("rho", 1.0)),
            B=float(doc.get("B", 1.0)), a_slope=float(doc.get("a_slope", 0.0)),
            f_slope=f_slope, h_slope=h_slope, name=str(doc.get("name", "")))
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, (HypothesisViolation, DomainError, SpecParseError)):
            raise
        raise SpecParseError(f"malformed spec document: {exc!r}") from exc


def load_spec(document) -> NonlinearitySpec:
    """Build a validated spec from a JSON string, a path or a mapping."""
    if isinstance(document, Mapping):
        return spec_from_document(document)
    if isinstance(document, Path) or (isinstance(document, str) and not document.lstrip().startswith("{")):
        try:
            text = Path(document).read_text()
        except OSError as exc:
            raise SpecParseError(f"cannot read spec file: {exc}") from exc
    else:
        text = document
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SpecParseError(f"spec is not valid JSON: {exc}") from exc
    if not isinstance(doc, Mapping):
        raise SpecParseError("spec document must be a JSON object")
    return spec_from_document(doc)


def spec_to_document(spec: NonlinearitySpec) -> dict:
    doc = {"a0": spec.a0, "mu": spec.mu, "rho": spec.rho, "B": spec.B,
           "f": spec.f_provider.to_document(), "h": spec.h_provider.to_document()}
    if spec.a_slope:
        doc["a_slope"] = spec.a_slope
    if spec.f_slope is not None:
        doc["f_slope"] = spec.f_slope.to_document()
    if spec.h_slope is not None:
        doc["h_slope"] = spec.h_slope.to_document()
    if spec.name:
        doc["name"] = spec.name
    return doc


def serialize(spec: NonlinearitySpec) -> str:
    # json uses repr() for floats, which round-trips exactly (>= 17 digits)
    return json.dumps(spec_to_document(spec), indent=2)
