import math

import numpy as np
import pytest

from saddleflap import flow_lab as fl
from saddleflap import unfolding as uf
from saddleflap.errors import DomainError, SeedQualityError
from saddleflap.nonlinearity import family_spec, zero_spec
from saddleflap.unfolding import UnfoldingContext as Ctx


@pytest.fixture(scope="module")
def fam():
    return family_spec(1.0, 1.0)


# --------------------------------------------------------------- integrator

def test_linear_flow_unit_time():
    fld = fl.PlanarField("baby", 1.0)          # xdot = -x, ydot = -y
    tr = fl.integrate(fld, (1.0, 1.0), stop=fl.StopCondition(t_max=1.0))
    assert tr.status == "time"
    np.testing.assert_allclose(tr.end, [math.exp(-1), math.exp(-1)], atol=1e-9)


def test_line_event_location():
    fld = fl.PlanarField("baby", 1.0)
    tr = fl.integrate(fld, (1.0, 1.0), stop=fl.StopCondition(y_lines=(0.5,)))
    assert tr.status == "line" and tr.event == 0.5
    assert tr.t[-1] == pytest.approx(math.log(2), abs=1e-10)
    assert tr.end[1] == pytest.approx(0.5, abs=1e-12)


def test_box_and_budget():
    fld = fl.PlanarField("baby", 1.0)
    tr = fl.integrate(fld, (1.0, 1.0), "backward", fl.StopCondition(x_range=(-2.0, 2.0)))
    assert tr.status == "box" and tr.end[0] == pytest.approx(2.0, abs=1e-10)
    tr = fl.integrate(fld, (1.0, 1.0), stop=fl.StopCondition(max_steps=3))
    assert tr.status == "steps" and tr.n_steps == 3


def test_integrate_argument_checks():
    fld = fl.PlanarField("baby", 1.0)
    with pytest.raises(DomainError):
        fl.integrate(fld, (1.0, 1.0), "sideways")
    with pytest.raises(DomainError):
        fl.integrate(fld, (math.nan, 1.0))
    with pytest.raises(DomainError):
        fl.integrate(fld, (1.0, 1.0), rtol=0.0)
    with pytest.raises(DomainError):
        fl.PlanarField("weird", 0.1)
    with pytest.raises(DomainError):
        fl.PlanarField("scaled", 0.1)


def test_node_invariant_curves():
    eps = 1 / 3.5
    fld = fl.PlanarField("baby", eps)          # u = 0: xdot = -eps x, ydot = -y
    tr = fl.integrate(fld, (0.8, 0.3), stop=fl.StopCondition(t_max=1.0))
    inv = tr.y * tr.x ** (-1 / eps)
    assert np.max(np.abs(inv / inv[0] - 1)) <= 1e-6


def test_baby_graph_is_invariant():
    u = (0.0, 0.0, 1.0, -0.7, 0.3)
    ctx = Ctx.from_eps(1 / 3.4)
    fld = fl.PlanarField("baby", ctx.eps, u=u)
    x0 = 0.15
    tr = fl.integrate(fld, (x0, fl.baby_exact(u, ctx, x0)), "backward",
                      fl.StopCondition(x_range=(-0.6, 0.6)), rtol=1e-11, atol=1e-14)
    dev = [abs(y - fl.baby_exact(u, ctx, x)) for x, y in tr.z]
    assert max(dev) <= 1e-7


def test_original_field_saddle_scaling(fam):
    vals = []
    for eps in (0.1, 0.05, 0.025):
        zs = fl.locate_saddle(fl.PlanarField("scaled", eps, fam))
        orig = fl.PlanarField("original", eps, fam)
        xs, ys = eps * zs[0], eps * zs[1]
        np.testing.assert_allclose(orig(0, (xs, ys)), [0, 0], atol=1e-14)
        np.testing.assert_allclose(orig(0, (0.0, 0.0)), [0, 0], atol=0)
        vals.append(abs(ys) / eps ** 2)
    assert max(vals) < 2 * min(vals)


def test_field_jacobian(fam):
    fld = fl.PlanarField("original", 0.1, fam)
    J = fld.jacobian((0.0, 0.0))
    np.testing.assert_allclose(J, [[-0.1, 0.0], [0.0, -1.0]], atol=1e-8)


# -------------------------------------------------------------------- seeds

def test_seed_zero_spec():
    ctx = Ctx.from_N_alpha(10, 0.5)
    exp = uf.weak_manifold_coeffs(zero_spec(), ctx, 20, warn=False)
    (x, y), res = fl.seed_wws(exp, 0.05)
    assert (x, y, res) == (0.05, 0.0, 0.0)


def test_seed_residual_scaling(fam):
    ctx = uf.make_context(fam, eps=1 / 10.5)
    K = 20
    exp = uf.weak_manifold_coeffs(fam, ctx, K, warn=False)
    res = [fl.seed_wws(exp, r, max_residual=1.0)[1] for r in (0.1, 0.05, 0.025)]
    for a, b in zip(res, res[1:]):
        assert b / a == pytest.approx(2.0 ** -K, rel=1e-9)
    with pytest.raises(SeedQualityError):
        fl.seed_wws(exp, 0.9)
    with pytest.raises(SeedQualityError):
        fl.seed_wws(uf.weak_manifold_coeffs(fam, ctx, 5), 0.01)


def test_predicted_line_rules():
    even, odd = Ctx.from_N_alpha(10, 0.5), Ctx.from_N_alpha(9, 0.5)
    assert fl.predicted_line(even, "right", 1) == "+c"
    assert fl.predicted_line(odd, "right", 1) == "-c"
    assert fl.predicted_line(odd, "right", -1) == "+c"
    assert fl.predicted_line(even, "left", 1) == "not-predicted"
    assert fl.predicted_line(Ctx.from_N_alpha(9, 9.0 ** -9 / 2), "left", 1) == "+c"
    assert fl.predicted_line(Ctx.from_N_alpha(9, alpha_c=9.0 ** -10 / 2), "left", 1) == "-c"
    assert fl.predicted_line(even, "right", 0) == "not-predicted"


# ---------------------------------------------------------------- tracking

@pytest.mark.parametrize("N,expected", [(10, "+c"), (9, "-c")])
def test_track_wws_right(fam, N, expected):
    ctx = uf.make_context(fam, N=N, alpha=0.5)
    rep = fl.track_wws(fam, ctx, 0.1, "right", S_sign=1)
    assert rep.crossed_line == expected and rep.agree is True
    assert rep.trace_meta["seed_residual"] <= 1e-8
    rec = rep.to_record()
    assert "trace" not in rec and rec["crossed_line"] == expected


def test_track_wws_left_near_resonance(fam):
    ctx = uf.make_context(fam, N=9, alpha=ctx_alpha_lower(9) / 2)
    assert fl.track_wws(fam, ctx, 0.1, "left", S_sign=1).crossed_line == "+c"
    ctx = uf.make_context(fam, N=9, alpha_c=9.0 ** -10 / 2)
    assert fl.track_wws(fam, ctx, 0.1, "left", S_sign=1).crossed_line == "-c"


def ctx_alpha_lower(N, a=0.0):
    return N ** (a - N)


def test_track_wws_arguments(fam):
    ctx = uf.make_context(fam, N=9, alpha=0.5)
    with pytest.raises(DomainError):
        fl.track_wws(fam, ctx, 0.1, "up")
    with pytest.raises(DomainError):
        fl.track_wws(fam, ctx, -0.1, "left")


def test_track_wu_zero_spec():
    wu = fl.track_wu(zero_spec(), Ctx.from_N_alpha(10, 0.5))
    assert np.all(wu.ybar == 0.0) and wu.sup_ratio == 0.0
    assert min(wu.eigenvalues) < 0 < max(wu.eigenvalues)


def test_track_wu_order_eps(fam):
    sups = [fl.track_wu(fam, uf.make_context(fam, N=N, alpha=0.5)).sup_ratio for N in (10, 20)]
    assert all(0 < s < 2 for s in sups)


def test_locate_saddle_requires_scaled(fam):
    with pytest.raises(DomainError):
        fl.locate_saddle(fl.PlanarField("original", 0.1, fam))


def test_portrait_has_all_manifolds(fam):
    rows = fl.portrait(fam, uf.make_context(fam, N=8, alpha=0.5))
    kinds = {(r[0], r[1]) for r in rows}
    assert {("W_ss", "x=0"), ("W_ws", "left"), ("W_ws", "right"), ("W_s", "up"), ("W_s", "down"),
            ("W_u", "node")} <= kinds
    assert all(np.isfinite(r[2]) and np.isfinite(r[3]) for r in rows)


def test_flap_sweep(fam):
    grid = [9.0 ** -9 / 2, 0.25, 0.5, 0.75]
    res = fl.flap_sweep(fam, 9, grid, 0.1, jobs=1)
    right = {r["crossed_line"] for r in res.reports if r["side"] == "right"}
    assert right == {"-c"}
    left = [r for r in res.reports if r["side"] == "left"]
    assert left[0]["crossed_line"] == "+c" and left[0]["agree"] is True
    par = fl.flap_sweep(fam, 9, grid, 0.1, jobs=2)
    assert [r["crossed_line"] for r in par.reports] == [r["crossed_line"] for r in res.reports]


def test_flap_sweep_records_errors(fam):
    res = fl.flap_sweep(fam, 9, [0.0], 0.1)
    assert all("error" in r["trace_meta"] for r in res.reports)


# ------------------------------------------------------------- baby model

def test_baby_exact_single_term():
    for x in (-0.3, 0.1, 0.4):
        assert fl.baby_exact((0, 0, 1.0), 1 / 2.5, x) == pytest.approx(5 * x * x, rel=1e-13)


def test_baby_V():
    ctx = Ctx.from_N_alpha(3, 0.25)
    assert fl.baby_V((0, 0, 1.0, 0, 0, 2.0), ctx, 0.3) == 0.0
    u = (0, 0, 0, 1.0, -1.0)
    assert fl.baby_V(u, ctx, 0.2) == pytest.approx(3 / 0.25 * 0.2 ** 3 + 4 / 0.75 * 0.2 ** 4)


def test_baby_remainder_bounded_near_resonance():
    u = (0, 0, 0.5, 1.0, -1.0, 0.3)
    x = 0.15
    B = []
    for t in (1e-2, 1e-4, 1e-6, 1e-8):
        for ctx in (Ctx.from_N_alpha(3, t), Ctx.from_N_alpha(3, alpha_c=t)):
            B.append(fl.baby_exact(u, ctx, x) - fl.baby_V(u, ctx, x))
    assert max(abs(b) for b in B) < 1.0


def test_baby_lemma_single_term_both_sides():
    u = (0, 0, 1.0)
    ctx = Ctx.from_N_alpha(2, 0.005)
    for side in ("left", "right"):
        bc = fl.baby_crossing(u, ctx, K=1.0, delta=0.2, side=side, regime="alpha->0")
        assert bc.direct_line == bc.ode_line == bc.predicted_line == "+c"


def test_baby_prediction_regime_check():
    with pytest.raises(DomainError):
        fl.baby_prediction(Ctx.from_N_alpha(2, 0.5), (0, 0, 1.0), "left", "alpha->2")
