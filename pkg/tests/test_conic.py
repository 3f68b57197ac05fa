import math

import numpy as np
import pytest

from crs_maxmin.conic import Affine, ConicProblem

# Each builder returns (problem, expected objective, {name: expected value}).


def lin_bound():
    p = ConicProblem(); t = p.variable("t")
    p.add_le(t - 3.0); p.maximize(t)
    return p, 3.0, {"t": [3.0]}


def exp_chain():
    p = ConicProblem(); t, a, r = p.variable("t"), p.variable("alpha"), p.variable("rho")
    p.add_le(t - a); p.add_exp2(a, r + 1.0); p.add_le(r - 1.0); p.maximize(t)
    return p, 1.0, {"alpha": [1.0], "rho": [1.0]}


def cauchy_schwarz():
    p = ConicProblem(); t = p.variable("t"); q = p.complex_variable("p", 2)
    re, _ = q.inner(np.array([1.0, 0.0]))
    p.add_le(t - re); p.add_quad(Affine.stack([q.re, q.im]), Affine.constant(4.0)); p.maximize(t)
    return p, 2.0, {"p": [2.0, 0.0]}


def box_lp():
    p = ConicProblem(); x, y = p.variable("x"), p.variable("y")
    p.add_le(x - 1.0); p.add_le(y - 2.0); p.maximize(x + y)
    return p, 3.0, {"x": [1.0], "y": [2.0]}


def vertex_lp():
    p = ConicProblem(); x, y = p.variable("x"), p.variable("y")
    p.add_le(x + y - 4.0); p.add_le(-x); p.add_le(y - 3.0); p.maximize(x + y * 2.0)
    return p, 7.0, {"x": [1.0], "y": [3.0]}


def soc_circle():
    p = ConicProblem(); x = p.variable("x")
    p.add_soc(Affine.constant(2.0), Affine.stack([x, Affine.constant(1.0)])); p.maximize(x)
    return p, math.sqrt(3.0), {}


def soc_direction():
    p = ConicProblem(); x = p.variable("x", 2)
    p.add_soc(Affine.constant(1.0), x); p.maximize(x.dot([3.0, 4.0]))
    return p, 5.0, {"x": [0.6, 0.8]}


def quad_epigraph():
    p = ConicProblem(); x, y = p.variable("x"), p.variable("y")
    p.add_quad(x, y); p.add_le(y - 9.0); p.maximize(x)
    return p, 3.0, {"x": [3.0]}


def exp_single():
    p = ConicProblem(); a = p.variable("a")
    p.add_exp2(a, Affine.constant(8.0)); p.maximize(a)
    return p, 3.0, {}


def exp_budget():
    # max log2(r1) + log2(r2) with r1 + r2 = 10
    p = ConicProblem(); a, r = p.variable("a", 2), p.variable("r", 2)
    p.add_exp2(a, r); p.add_eq(r.sum() - 10.0); p.maximize(a.sum())
    return p, 2 * math.log2(5.0), {"r": [5.0, 5.0]}


def equality_lp():
    p = ConicProblem(); x, y = p.variable("x"), p.variable("y")
    p.add_eq(x + y - 5.0); p.add_le(2.0 - y); p.maximize(x)
    return p, 3.0, {"y": [2.0]}


def minimize_via_negation():
    p = ConicProblem(); x = p.variable("x")
    p.add_le(1.5 - x); p.maximize(-x)
    return p, -1.5, {"x": [1.5]}


def complex_mrt():
    p = ConicProblem(); t = p.variable("t"); q = p.complex_variable("p", 2)
    re, _ = q.inner(np.array([1.0, 1.0j]))
    p.add_le(t - re); p.add_soc(Affine.constant(1.0), Affine.stack([q.re, q.im])); p.maximize(t)
    # optimum p = h / |h|
    return p, math.sqrt(2.0), {"p": np.array([1.0, 1.0j]) / math.sqrt(2.0)}


def complex_imaginary_part():
    p = ConicProblem(); q = p.complex_variable("p", 1)
    _, im = q.inner(np.array([2.0]))
    p.add_soc(Affine.constant(1.0), Affine.stack([q.re, q.im])); p.maximize(im)
    # Im(conj(2) * p) = 2 Im(p), maximized at p = i
    return p, 2.0, {"p": [1.0j]}


def water_filling_equal():
    p = ConicProblem(); a, x = p.variable("a", 2), p.variable("x", 2)
    p.add_exp2(a, x + 1.0); p.add_le(x.sum() - 2.0); p.add_le(-x); p.maximize(a.sum())
    return p, 2.0, {"x": [1.0, 1.0]}


def water_filling_single_active():
    # gains (2, 0.5), budget 1: water level 1.5 stays below 1/g2 = 2
    p = ConicProblem(); a, x = p.variable("a", 2), p.variable("x", 2)
    g = np.array([2.0, 0.5])
    p.add_exp2(a[0], x[0] * g[0] + 1.0); p.add_exp2(a[1], x[1] * g[1] + 1.0)
    p.add_le(x.sum() - 1.0); p.add_le(-x); p.maximize(a.sum())
    return p, math.log2(3.0), {"x": [1.0, 0.0]}


def maxmin_lp():
    p = ConicProblem(); t, x, y = p.variable("t"), p.variable("x"), p.variable("y")
    p.add_le(t - x); p.add_le(t - y); p.add_le(x + y * 2.0 - 3.0); p.maximize(t)
    return p, 1.0, {"x": [1.0], "y": [1.0]}


def quad_disc():
    p = ConicProblem(); v = p.variable("v", 2)
    p.add_quad(v, Affine.constant(2.0)); p.maximize(v.sum())
    return p, 2.0, {"v": [1.0, 1.0]}


def exp_with_cap():
    p = ConicProblem(); a, r = p.variable("a"), p.variable("r")
    p.add_exp2(a, r + 1.0); p.add_le(r - 3.0); p.maximize(a)
    return p, 2.0, {"r": [3.0]}


def affine_objective():
    p = ConicProblem(); t = p.variable("t")
    p.add_le(t - 4.0); p.maximize(t * 2.0 - 1.0)
    return p, 7.0, {}


def shifted_ball():
    p = ConicProblem(); x, y = p.variable("x"), p.variable("y")
    p.add_soc(Affine.constant(1.0), Affine.stack([x - 1.0, y])); p.add_eq(y); p.maximize(x)
    return p, 2.0, {}


def norm_epigraph_min():
    p = ConicProblem(); s = p.variable("s")
    p.add_soc(s, Affine.stack([Affine.constant(1.0), Affine.constant(1.0)])); p.maximize(-s)
    return p, -math.sqrt(2.0), {}


def quad_inner_product():
    p = ConicProblem(); q = p.complex_variable("p", 2)
    re, _ = q.inner(np.array([3.0, 4.0]))
    p.add_quad(Affine.stack([q.re, q.im]), Affine.constant(1.0)); p.maximize(re)
    return p, 5.0, {"p": [0.6, 0.8]}


def bilinear_surrogate():
    # max t s.t. t <= Phi(theta, a; 0.5, 2), theta <= 1, a <= 1: Phi(1,1) = 0.9375
    p = ConicProblem(); t, th, a = p.variable("t"), p.variable("theta"), p.variable("a")
    s_n = 2.5
    p.add_quad((th - a) * 0.5, (th + a) * (0.5 * s_n) - 0.25 * s_n ** 2 - t)
    p.add_le(th - 1.0); p.add_le(a - 1.0); p.maximize(t)
    return p, 0.9375, {"theta": [1.0], "a": [1.0]}


def linearized_sinr():
    # scalar DC restriction at p_n = 1, rho_n = 1: 1 - 2p + rho <= 0 with p <= 2 -> rho <= 3
    p = ConicProblem(); q, rho = p.variable("p"), p.variable("rho")
    p.add_le(1.0 - q * 2.0 + rho); p.add_le(q - 2.0); p.maximize(rho)
    return p, 3.0, {}


INSTANCES = [lin_bound, exp_chain, cauchy_schwarz, box_lp, vertex_lp, soc_circle, soc_direction,
             quad_epigraph, exp_single, exp_budget, equality_lp, minimize_via_negation, complex_mrt,
             complex_imaginary_part, water_filling_equal, water_filling_single_active, maxmin_lp,
             quad_disc, exp_with_cap, affine_objective, shifted_ball, norm_epigraph_min,
             quad_inner_product, bilinear_surrogate, linearized_sinr]


def test_instance_count():
    assert len(INSTANCES) >= 20


@pytest.mark.parametrize("build", INSTANCES, ids=lambda f: f.__name__)
def test_hand_solvable_instance(build):
    prob, expected, values = build()
    sol = prob.solve()
    assert sol.status == "optimal"
    assert sol.objective_value == pytest.approx(expected, rel=1e-5, abs=1e-7)
    for name, want in values.items():
        np.testing.assert_allclose(sol.values[name], np.asarray(want), rtol=1e-4, atol=1e-4)
    assert sol.max_constraint_violation <= 1e-6


def test_infeasible_status():
    p = ConicProblem(); x = p.variable("x")
    p.add_le(x + 1.0); p.add_le(1.0 - x); p.maximize(x)
    assert p.solve().status == "infeasible"


def test_unbounded_status():
    p = ConicProblem(); x = p.variable("x")
    p.add_le(-x); p.maximize(x)
    sol = p.solve()
    assert sol.status == "unbounded" and not sol.ok


def test_repeat_solve_is_deterministic():
    a, b = exp_budget()[0].solve(), exp_budget()[0].solve()
    assert a.objective_value == pytest.approx(b.objective_value, abs=1e-9)
    assert a.status == b.status


def test_audit_reports_violation():
    p = ConicProblem(); x = p.variable("x", 2)
    p.add_le(x[0] - 1.0, "cap"); p.add_soc(Affine.constant(1.0), x, "ball"); p.add_exp2(x[1], Affine.constant(1.0), "e")
    v = dict(p.violations(np.array([2.0, 0.0])))
    assert v["cap"] == pytest.approx(1.0)
    assert v["ball"] == pytest.approx(1.0)
    assert v["e"] == 0.0


def test_family_sizes_and_dump():
    p = ConicProblem(); x = p.variable("x", 3)
    p.add_le(x - 1.0, "cap"); p.add_exp2(x, x + 5.0, "exp"); p.add_soc(Affine.constant(1.0), x, "ball[0]")
    p.maximize(x.sum())
    sizes = p.family_sizes()
    assert sizes["cap"] == 3 and sizes["exp"] == 3 and sizes["ball"] == 1
    assert p.dump().startswith("vars 3")


def test_modeling_errors():
    p = ConicProblem(); x = p.variable("x", 2)
    with pytest.raises(ValueError):
        p.variable("x")
    with pytest.raises(ValueError):
        p.maximize(x)
    with pytest.raises(ValueError):
        p.add_quad(x, x)
    with pytest.raises(ValueError):
        ConicProblem().solve()
