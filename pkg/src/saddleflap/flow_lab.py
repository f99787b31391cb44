"""Phase-space checks by direct integration.

Three planar fields are supported:

* ``original``: x' = (x - eps) x,       y' = -y (1 + a x) + g(x, y)
* ``scaled``:   xb' = eps xb (xb - 1),  yb' = -yb (1 + a eps xb) + g(eps xb, eps yb)/eps
* ``baby``:     x' = -eps x,            y' = -y + u(x)

W^ws is traced by evaluating its local series at |xbar| = r0 and integrating
backward in time, which is expansive in y and therefore follows the manifold
outward.  W^u is traced forward from the saddle along its unstable
eigenvector.  The integrator is scipy's Dormand-Prince RK45 stepped manually
so that line crossings can be located on the dense output.
"""
from __future__ import annotations

import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.integrate import RK45
from scipy.optimize import brentq

from .center_manifold import estimate_S_infty
from .errors import (DomainError, SaddleDegenerateError, SaddleFlapError, SeedQualityError,
                     StiffnessError)
from .nonlinearity import NonlinearitySpec, load_spec, spec_to_document
from .unfolding import (UnfoldingContext, WeakManifoldExpansion, make_context,
                        weak_manifold_coeffs)

MIN_STEP = 1e-14


@dataclass(frozen=True, eq=False)
class PlanarField:
    kind: str
    eps: float
    spec: NonlinearitySpec | None = None
    u: tuple = ()
    evaluation_order: int = 40

    def __post_init__(self):
        if self.kind not in ("original", "scaled", "baby"):
            raise DomainError(f"unknown field kind {self.kind!r}")
        if self.evaluation_order < 10:
            raise DomainError("evaluation_order must be >= 10")
        if self.kind != "baby" and self.spec is None:
            raise DomainError("original/scaled fields need a spec")
        n = self.evaluation_order
        if self.kind == "baby":
            u = np.zeros(max(len(self.u), 1))
            u[: len(self.u)] = self.u
            object.__setattr__(self, "_u", u)
            return
        spec = self.spec
        f = spec.f_coeffs(n, self.eps)
        tab = spec.h_table(n, self.eps)
        L = max(tab) if tab else 0
        H = np.zeros((n + 1, L + 1))
        for l, row in tab.items():
            H[:, l] = spec.mu * row
        object.__setattr__(self, "_f", f)
        object.__setattr__(self, "_H", H)
        object.__setattr__(self, "_a", spec.a_eps(self.eps))

    def g(self, x: float, y: float) -> float:
        """g(x, y) of the original coordinates, truncated at evaluation_order."""
        val = np.polynomial.polynomial.polyval(x, self._f)
        if self._H.shape[1] > 1:
            val += np.polynomial.polynomial.polyval2d(x, y, self._H)
        return float(val)

    def __call__(self, t, z):
        x, y = z
        e = self.eps
        if self.kind == "original":
            return np.array([(x - e) * x, -y * (1 + self._a * x) + self.g(x, y)])
        if self.kind == "scaled":
            return np.array([e * x * (x - 1), -y * (1 + self._a * e * x) + self.g(e * x, e * y) / e])
        u = np.polynomial.polynomial.polyval(x, self._u)
        return np.array([-e * x, -y + u])

    def jacobian(self, z, h: float = 1e-7) -> np.ndarray:
        z = np.asarray(z, dtype=float)
        J = np.zeros((2, 2))
        for i in range(2):
            d = np.zeros(2)
            d[i] = h * max(1.0, abs(z[i]))
            J[:, i] = (self(0, z + d) - self(0, z - d)) / (2 * d[i])
        return J


@dataclass(frozen=True)
class StopCondition:
    y_lines: tuple = ()
    x_range: tuple = (-math.inf, math.inf)
    y_range: tuple = (-math.inf, math.inf)
    t_max: float = 1e6
    max_steps: int = 1_000_000


@dataclass(eq=False)
class Trajectory:
    t: np.ndarray
    z: np.ndarray
    status: str              # line | box | time | steps
    event: float | None = None
    n_steps: int = 0
    min_step: float = math.inf
    pieces: list = field(default_factory=list, repr=False)

    @property
    def x(self):
        return self.z[:, 0]

    @property
    def y(self):
        return self.z[:, 1]

    @property
    def end(self):
        return self.z[-1]

    def y_at_x(self, xq: float) -> float:
        """y on the trajectory where x = xq (x must be monotone along it)."""
        for t0, t1, sol in self.pieces:
            x0, x1 = sol(t0)[0], sol(t1)[0]
            if (x0 - xq) * (x1 - xq) <= 0:
                if x0 == xq:
                    return float(sol(t0)[1])
                ts = brentq(lambda s: sol(s)[0] - xq, t0, t1, xtol=1e-14, rtol=1e-14)
                return float(sol(ts)[1])
        raise DomainError(f"x={xq} not reached on trajectory")


def integrate(field: PlanarField, start, direction: str = "forward", stop: StopCondition | None = None,
              rtol: float = 1e-10, atol: float = 1e-12, keep_dense: bool = False) -> Trajectory:
    """Adaptive RK45 integration with line/box/budget stopping."""
    if direction not in ("forward", "backward"):
        raise DomainError("direction must be forward or backward")
    if rtol <= 0 or atol <= 0:
        raise DomainError("tolerances must be positive")
    z0 = np.asarray(start, dtype=float)
    if not np.all(np.isfinite(z0)):
        raise DomainError("start must be finite")
    stop = stop or StopCondition()
    sgn = 1.0 if direction == "forward" else -1.0
    solver = RK45(field, 0.0, z0, sgn * stop.t_max, rtol=rtol, atol=atol)
    ts, zs = [0.0], [z0.copy()]
    pieces = []
    nsteps = 0
    hmin = math.inf
    xr, yr = stop.x_range, stop.y_range

    def funcs(z):
        vals = [z[1] - c for c in stop.y_lines]
        vals += [z[0] - xr[0], xr[1] - z[0], z[1] - yr[0], yr[1] - z[1]]
        return vals

    f_prev = funcs(z0)
    while True:
        if nsteps >= stop.max_steps:
            return Trajectory(np.array(ts), np.array(zs), "steps", None, nsteps, hmin, pieces)
        msg = solver.step()
        if solver.status == "failed":
            raise StiffnessError(f"integrator failed: {msg}")
        nsteps += 1
        h = abs(solver.t - solver.t_old)
        hmin = min(hmin, h)
        if h < MIN_STEP and solver.status == "running":
            raise StiffnessError(f"step size underflow ({h:.3g})")
        sol = solver.dense_output()
        if keep_dense:
            pieces.append((solver.t_old, solver.t, sol))
        f_new = funcs(solver.y)
        hit = None
        for i, (a, b) in enumerate(zip(f_prev, f_new)):
            if a > 0 and b <= 0 or (a < 0 and b >= 0 and i < len(stop.y_lines)):
                tc = brentq(lambda s: funcs(sol(s))[i], solver.t_old, solver.t, xtol=1e-15, rtol=1e-14)
                if hit is None or abs(tc) < abs(hit[0]):
                    hit = (tc, i)
        if hit is not None:
            tc, i = hit
            zc = sol(tc)
            ts.append(tc)
            zs.append(zc)
            if keep_dense:
                pieces[-1] = (solver.t_old, tc, sol)
            if i < len(stop.y_lines):
                return Trajectory(np.array(ts), np.array(zs), "line", stop.y_lines[i], nsteps, hmin, pieces)
            return Trajectory(np.array(ts), np.array(zs), "box", None, nsteps, hmin, pieces)
        ts.append(solver.t)
        zs.append(solver.y.copy())
        f_prev = f_new
        if solver.status == "finished":
            return Trajectory(np.array(ts), np.array(zs), "time", None, nsteps, hmin, pieces)


# ------------------------------------------------------------------ W^ws

def seed_wws(expansion: WeakManifoldExpansion, r0: float | None = None, side: str = "right",
             max_residual: float = 1e-8) -> tuple[tuple[float, float], float]:
    """Point (+-r0, mbar(+-r0)) on the local weak-manifold series."""
    if expansion.K < 10:
        raise SeedQualityError("seed_wws needs at least 10 coefficients")
    r0 = min(0.1, 2 * expansion.ctx.eps) if r0 is None else r0
    x = r0 if side == "right" else -r0
    y = expansion(x)
    K = expansion.K
    residual = abs(expansion.mbar[K] * x ** K)
    if residual > max_residual:
        raise SeedQualityError(f"seed residual {residual:.3g} > {max_residual:.1g}: raise K or shrink r0")
    return (x, y), residual


def _line_label(v: float | None) -> str:
    if v is None:
        return "none"
    return "+c" if v > 0 else "-c"


def predicted_line(ctx: UnfoldingContext, side: str, s: int) -> str:
    """Sign rules for where W^ws meets y = +-c (s = sign of S_infinity)."""
    if s == 0:
        return "not-predicted"
    if side == "right":
        v = s if ctx.N % 2 == 0 else -s
    else:
        if ctx.alpha <= ctx.alpha_lower:
            v = s
        elif ctx.alpha_c <= ctx.one_minus_alpha_lower:
            v = -s
        else:
            return "not-predicted"
    return "+c" if v > 0 else "-c"


@dataclass(eq=False)
class FlapReport:
    eps: float
    N: int
    alpha: float
    side: str
    crossed_line: str
    predicted_line: str
    agree: bool | None
    c: float
    trace_meta: dict = field(default_factory=dict)
    trace: Trajectory | None = field(default=None, repr=False)

    def to_record(self) -> dict:
        d = {k: v for k, v in asdict(self).items() if k != "trace"}
        return d


def default_seed_order(ctx: UnfoldingContext) -> int:
    return max(15, ctx.N + 30)


def track_wws(spec: NonlinearitySpec, ctx: UnfoldingContext, c: float = 0.1, side: str = "right",
              K: int | None = None, r0: float | None = None, S_sign: int | None = None,
              rtol: float = 1e-11, atol: float = 1e-14, keep_dense: bool = False) -> FlapReport:
    """Trace W^ws backward from a series seed until it meets y = +c or y = -c."""
    if side not in ("left", "right"):
        raise DomainError("side must be left or right")
    if c <= 0:
        raise DomainError("c must be positive")
    eps = ctx.eps
    K = default_seed_order(ctx) if K is None else K
    exp = weak_manifold_coeffs(spec, ctx, K, warn=False)
    r = min(0.1, 2 * eps) if r0 is None else r0
    for _ in range(80):
        try:
            pt, res = seed_wws(exp, r, side)
        except SeedQualityError:
            r /= 2
            continue
        if abs(eps * pt[1]) <= c / 4:
            break
        r /= 2
    else:
        raise SeedQualityError("could not place the seed inside the band |y| < c/4")
    if S_sign is None:
        S_sign = int(np.sign(estimate_S_infty(spec, 120).value))
    xmax = 0.9 * spec.rho / eps
    fld = PlanarField("scaled", eps, spec)
    stop = StopCondition(y_lines=(c / eps, -c / eps), x_range=(-xmax, xmax))
    tr = integrate(fld, pt, "backward", stop, rtol=rtol, atol=atol, keep_dense=keep_dense)
    crossed = _line_label(tr.event) if tr.status == "line" else "none"
    pred = predicted_line(ctx, side, S_sign)
    agree = None if pred == "not-predicted" else (crossed == pred)
    meta = {"n_steps": tr.n_steps, "min_step": tr.min_step, "status": tr.status,
            "seed_r0": r, "seed_residual": res, "x_end": float(tr.end[0]), "K": K,
            "S_sign": S_sign}
    return FlapReport(eps, ctx.N, ctx.alpha, side, crossed, pred, agree, c, meta, tr)


# ------------------------------------------------------------------- W^u

@dataclass(eq=False)
class WuTrace:
    xbar: np.ndarray
    ybar: np.ndarray
    saddle_ybar: float
    eigenvalues: tuple
    sup_ratio: float                  # sup |ybar|/eps over xbar in [0.1, 0.9]
    far_xbar: np.ndarray = field(default_factory=lambda: np.zeros(0))
    far_ybar: np.ndarray = field(default_factory=lambda: np.zeros(0))
    trajectory: Trajectory | None = field(default=None, repr=False)

    def y_at(self, xq: float) -> float:
        return self.trajectory.y_at_x(xq)


def locate_saddle(field: PlanarField) -> np.ndarray:
    """Saddle of the scaled field: xbar = 1, ybar by Newton."""
    if field.kind != "scaled":
        raise DomainError("locate_saddle works on the scaled field")
    y = 0.0
    for _ in range(60):
        F = field(0, (1.0, y))[1]
        dF = field.jacobian((1.0, y))[1, 1]
        step = F / dF
        y -= step
        if abs(step) <= 1e-15 * max(1.0, abs(y)):
            break
    return np.array([1.0, y])


def _saddle_eigen(field: PlanarField, zs):
    J = field.jacobian(zs)
    vals, vecs = np.linalg.eig(J)
    vals = np.real(vals)
    if not (np.min(vals) < 0 < np.max(vals)) or abs(vals[0] - vals[1]) < 1e-12:
        raise SaddleDegenerateError(f"saddle not hyperbolic: eigenvalues {vals}")
    iu = int(np.argmax(vals))
    vu = np.real(vecs[:, iu])
    vs = np.real(vecs[:, 1 - iu])
    return vals, vu / np.linalg.norm(vu), vs / np.linalg.norm(vs)


def track_wu(spec: NonlinearitySpec, ctx: UnfoldingContext, dist: float = 1e-6,
             x_stop: float = 0.02, rtol: float = 1e-11, atol: float = 1e-14) -> WuTrace:
    """Unstable manifold of the saddle in scaled variables."""
    eps = ctx.eps
    fld = PlanarField("scaled", eps, spec)
    zs = locate_saddle(fld)
    vals, vu, _ = _saddle_eigen(fld, zs)
    if vu[0] > 0:
        vu = -vu
    start = zs + dist * vu   # heads to xbar < 1, toward the node
    big = 10.0 / eps
    stop = StopCondition(x_range=(x_stop, 2.5), y_range=(-big, big), t_max=1e7)
    tr = integrate(fld, start, "forward", stop, rtol=rtol, atol=atol, keep_dense=True)
    far_stop = StopCondition(x_range=(0.5, 2.0), y_range=(-big, big), t_max=1e7)
    try:
        far = integrate(fld, zs - dist * vu, "forward", far_stop, rtol=rtol, atol=atol)
        fx, fy = far.x, far.y
    except SaddleFlapError:
        fx = fy = np.zeros(0)
    mask = (tr.x >= 0.1) & (tr.x <= 0.9)
    sup = float(np.max(np.abs(tr.y[mask])) / eps) if np.any(mask) else math.nan
    return WuTrace(tr.x.copy(), tr.y.copy(), float(zs[1]), tuple(vals), sup, fx, fy, tr)


def wws_wu_gap(report: FlapReport, wu: WuTrace, n: int = 200) -> float:
    """Smallest vertical distance between the traced W^ws and W^u (right side)."""
    tr = report.trace
    if tr is None or report.side != "right":
        raise DomainError("need a right-side report traced with keep_dense=True")
    lo = max(float(tr.x[0]), float(np.min(wu.xbar)))
    hi = min(float(tr.x[-1]), float(np.max(wu.xbar)))
    if hi <= lo:
        raise DomainError("W^ws and W^u traces do not overlap in xbar")
    xs = np.linspace(lo, hi, n)
    gaps = [abs(tr.y_at_x(x) - wu.y_at(x)) for x in xs]
    return float(min(gaps))


# --------------------------------------------------------------- portrait

def stable_manifold(spec: NonlinearitySpec, ctx: UnfoldingContext, c: float = 0.1, dist: float = 1e-6,
                    rtol: float = 1e-10, atol: float = 1e-13) -> list[Trajectory]:
    eps = ctx.eps
    fld = PlanarField("scaled", eps, spec)
    zs = locate_saddle(fld)
    _, _, vs = _saddle_eigen(fld, zs)
    out = []
    for sgn in (1.0, -1.0):
        stop = StopCondition(y_lines=(c / eps, -c / eps), x_range=(0.0, 0.9 * spec.rho / eps), t_max=1e4)
        out.append(integrate(fld, zs + sgn * dist * vs, "backward", stop, rtol=rtol, atol=atol))
    return out


def portrait(spec: NonlinearitySpec, ctx: UnfoldingContext, c: float = 0.1, n_series: int = 20) -> list[tuple]:
    """Samples (manifold, branch, xbar, ybar) of W^ss, W^ws, W^s and W^u."""
    rows: list[tuple] = []
    yl = c / ctx.eps
    for yv in np.linspace(-yl, yl, 21):
        rows.append(("W_ss", "x=0", 0.0, float(yv)))
    s = int(np.sign(estimate_S_infty(spec, 120).value))
    for side in ("left", "right"):
        rep = track_wws(spec, ctx, c, side, S_sign=s)
        r0 = rep.trace_meta["seed_r0"]
        exp = weak_manifold_coeffs(spec, ctx, rep.trace_meta["K"], warn=False)
        sg = 1 if side == "right" else -1
        for x in np.linspace(0, r0, n_series, endpoint=False):
            rows.append(("W_ws", side, sg * float(x), float(exp(sg * x))))
        for x, y in rep.trace.z:
            rows.append(("W_ws", side, float(x), float(y)))
    for i, tr in enumerate(stable_manifold(spec, ctx, c)):
        for x, y in tr.z:
            rows.append(("W_s", "up" if i == 0 else "down", float(x), float(y)))
    wu = track_wu(spec, ctx)
    for x, y in zip(wu.xbar, wu.ybar):
        rows.append(("W_u", "node", float(x), float(y)))
    for x, y in zip(wu.far_xbar, wu.far_ybar):
        rows.append(("W_u", "far", float(x), float(y)))
    return rows


# ------------------------------------------------------------- flap sweep

def _flap_task(args):
    doc, N, alpha, alpha_c, c, s = args
    spec = load_spec(doc)
    out = []
    try:
        ctx = make_context(spec, N=N, alpha=alpha, alpha_c=alpha_c)
    except SaddleFlapError as exc:
        return [FlapReport(math.nan, N, alpha, side, "none", "not-predicted", None, c,
                           {"error": f"{exc.code}: {exc}"}).to_record() for side in ("left", "right")]
    for side in ("left", "right"):
        try:
            out.append(track_wws(spec, ctx, c, side, S_sign=s).to_record())
        except SaddleFlapError as exc:
            out.append(FlapReport(ctx.eps, N, alpha, side, "none", predicted_line(ctx, side, s), None, c,
                                  {"error": f"{exc.code}: {exc}"}).to_record())
    return out


@dataclass
class FlapSweepResult:
    reports: list
    transitions: list   # (alpha_lo, alpha_hi) where the left crossing goes +c -> -c


def flap_sweep(spec: NonlinearitySpec, N: int, alpha_grid, c: float = 0.1, jobs: int = 1,
               alpha_c_grid=None) -> FlapSweepResult:
    """track_wws on both sides for every alpha; per-point errors are recorded, not raised."""
    alpha_grid = [float(a) for a in alpha_grid]
    acs = list(alpha_c_grid) if alpha_c_grid is not None else [None] * len(alpha_grid)
    s = int(np.sign(estimate_S_infty(spec, 120).value))
    doc = spec_to_document(spec)
    tasks = [(doc, N, a, ac, c, s) for a, ac in zip(alpha_grid, acs)]
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_flap_task, tasks))
    else:
        results = [_flap_task(t) for t in tasks]
    reports = [r for pair in results for r in pair]
    left = sorted((r for r in reports if r["side"] == "left"), key=lambda r: r["alpha"])
    trans = []
    for a, b in zip(left, left[1:]):
        if a["crossed_line"] == "+c" and b["crossed_line"] == "-c":
            trans.append((a["alpha"], b["alpha"]))
    return FlapSweepResult(reports, trans)


# ------------------------------------------------------------ baby model

def _baby_ctx(eps: float) -> UnfoldingContext:
    return UnfoldingContext.from_eps(eps)


def baby_exact(u_coeffs, eps: float | UnfoldingContext, x: float) -> float:
    """m(x) = sum u_k/(1 - eps k) x^k  (u_coeffs indexed by order)."""
    ctx = eps if isinstance(eps, UnfoldingContext) else _baby_ctx(eps)
    e = ctx.eps
    acc = 0.0
    for k, uk in enumerate(u_coeffs):
        if uk != 0 and k >= 1:
            acc += uk / (e * ctx.gap(k)) * x ** k
    return acc


def baby_V(u_coeffs, eps: float | UnfoldingContext, x: float) -> float:
    """V(x) = N u_N/alpha x^N - (N+1) u_{N+1}/(1-alpha) x^{N+1}."""
    ctx = eps if isinstance(eps, UnfoldingContext) else _baby_ctx(eps)
    N = ctx.N
    u = list(u_coeffs) + [0.0] * (N + 2)
    return N * u[N] / ctx.alpha * x ** N - (N + 1) * u[N + 1] / ctx.alpha_c * x ** (N + 1)


def baby_prediction(ctx: UnfoldingContext, u_coeffs, side: str, regime: str) -> str:
    """Line +-K/2 predicted by the node lemmas; regime 'alpha->0' or 'alpha->1'."""
    N = ctx.N
    u = list(u_coeffs) + [0.0] * (N + 2)
    if regime == "alpha->0":
        s = int(np.sign(u[N]))
        v = s if (N % 2 == 0 or side == "right") else -s
    elif regime == "alpha->1":
        s = int(np.sign(u[N + 1]))
        if N % 2 == 0:
            v = s if side == "left" else -s
        else:
            v = -s
    else:
        raise DomainError("regime must be 'alpha->0' or 'alpha->1'")
    if v == 0:
        return "not-predicted"
    return "+c" if v > 0 else "-c"


@dataclass
class BabyCrossing:
    side: str
    direct_line: str
    ode_line: str
    predicted_line: str
    x_direct: float
    x_ode: float


def baby_crossing(u_coeffs, ctx: UnfoldingContext, K: float = 1.0, delta: float = 0.2,
                  side: str = "right", regime: str = "alpha->0", n_grid: int = 4000,
                  rtol: float = 1e-10, atol: float = 1e-13) -> BabyCrossing:
    """Where the graph y = m(x) over 0 < +-x < delta first reaches |y| = K/2.

    Computed twice: by scanning the closed form, and by integrating the baby
    field backward from a seed on the graph close to the node.
    """
    sg = 1.0 if side == "right" else -1.0
    half = K / 2
    xs = sg * np.linspace(0, delta, n_grid + 1)[1:]
    ys = np.array([baby_exact(u_coeffs, ctx, x) for x in xs])
    hit = np.flatnonzero(np.abs(ys) >= half)
    if hit.size:
        direct = "+c" if ys[hit[0]] > 0 else "-c"
        x_direct = float(xs[hit[0]])
    else:
        direct, x_direct = "none", math.nan
    r0 = delta / 20
    while abs(baby_exact(u_coeffs, ctx, sg * r0)) > half / 4:
        r0 /= 2
    fld = PlanarField("baby", ctx.eps, u=tuple(float(v) for v in u_coeffs))
    start = (sg * r0, baby_exact(u_coeffs, ctx, sg * r0))
    stop = StopCondition(y_lines=(half, -half), x_range=(-delta, delta))
    tr = integrate(fld, start, "backward", stop, rtol=rtol, atol=atol)
    ode = _line_label(tr.event) if tr.status == "line" else "none"
    pred = baby_prediction(ctx, u_coeffs, side, regime)
    return BabyCrossing(side, direct, ode, pred, x_direct, float(tr.end[0]))
