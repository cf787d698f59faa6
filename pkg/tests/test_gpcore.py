import json
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from otfsidet.gpcore import (
    GPError,
    GPProblem,
    Monomial,
    Posynomial,
    PosynomialProduct,
    amgm_condense,
    amgm_weights,
    eval_posynomial,
    solve_gp,
    var,
)

x, y = var("x"), var("y")


def random_posynomial(rng, n_terms, names, spread=2.0):
    monos = [
        Monomial(float(rng.uniform(0.1, 5.0)), {k: float(rng.uniform(-spread, spread)) for k in names})
        for _ in range(n_terms)
    ]
    return Posynomial.from_monomials(monos)


def random_point(rng, names):
    return {k: float(np.exp(rng.uniform(-2, 2))) for k in names}


def term_loop(p, point):
    total = 0.0
    for m in p.terms:
        v = m.coeff
        for k, a in m.exponents.items():
            v *= point[k] ** a
        total += v
    return total


def test_eval_examples():
    assert eval_posynomial(x + 1 / x, {"x": 1.0}) == pytest.approx(2.0)
    assert (3 * x**2 * y).eval({"x": 2.0, "y": 1.0}) == pytest.approx(12.0)


def test_eval_matches_term_loop(rng):
    names = ["a", "b", "c", "d"]
    p = random_posynomial(rng, 30, names)
    for _ in range(20):
        pt = random_point(rng, names)
        assert p.eval(pt) == pytest.approx(term_loop(p, pt), rel=1e-12)


def test_eval_errors():
    with pytest.raises(GPError):
        (x + y).eval({"x": 1.0})
    with pytest.raises(GPError):
        (x + y).eval({"x": 1.0, "y": 0.0})
    with pytest.raises(GPError):
        Monomial(-1.0, {"x": 1})
    with pytest.raises(GPError):
        Posynomial([1.0, -2.0], np.zeros((2, 1)), ["x"])


def test_algebra():
    p = (x + y) * (x + 2)
    pt = {"x": 1.5, "y": 0.3}
    assert p.eval(pt) == pytest.approx((1.5 + 0.3) * 3.5)
    assert len(p) == 4
    q = (x + x + y).merged()
    assert len(q) == 2 and q.eval(pt) == pytest.approx(3.3)
    r = (x * y + y).rename({"y": "x"})
    assert r.variables == ("x",) and r.eval({"x": 2.0}) == pytest.approx(6.0)
    prod = PosynomialProduct((x + 1, y + 1))
    assert prod.eval(pt) == pytest.approx(2.5 * 1.3)


def test_condense_equal_terms():
    m = amgm_condense(x + x, {"x": 1.0})
    assert m.coeff == pytest.approx(2.0)
    assert m.exponents == pytest.approx({"x": 1.0})


def test_condense_x_plus_inverse():
    m = amgm_condense(x + 1 / x, {"x": 1.0})
    assert m.coeff == pytest.approx(2.0)
    assert abs(m.exponents.get("x", 0.0)) < 1e-15
    for t in np.exp(np.linspace(-3, 3, 50)):
        assert m.eval({"x": t}) <= t + 1 / t + 1e-15


def test_condense_random_bound(rng):
    names = [f"v{i}" for i in range(5)]
    p = random_posynomial(rng, 20, names)
    x0 = random_point(rng, names)
    m = amgm_condense(p, x0)
    assert m.eval(x0) == pytest.approx(p.eval(x0), rel=1e-9)
    for _ in range(1000):
        pt = random_point(rng, names)
        assert m.eval(pt) <= p.eval(pt) * (1 + 1e-12)
    assert amgm_weights(p, x0).sum() == pytest.approx(1.0, abs=1e-12)


def test_condense_monomial_is_exact(rng):
    m0 = Monomial(2.5, {"x": 1.5, "y": -0.5})
    pt = {"x": 0.7, "y": 3.0}
    m = amgm_condense(m0, pt)
    assert m.coeff == pytest.approx(2.5) and m.exponents == pytest.approx(m0.exponents)


def test_condense_degenerate_term():
    # second term underflows to zero weight at this point
    p = x + Monomial(1.0, {"x": -400.0})
    with pytest.raises(GPError):
        amgm_condense(p, {"x": 1e3})


@given(st.integers(0, 10_000), st.integers(1, 15))
def test_condense_bound_property(seed, k):
    rng = np.random.default_rng(seed)
    names = ["a", "b", "c"]
    p = random_posynomial(rng, k, names)
    x0 = random_point(rng, names)
    m = amgm_condense(p, x0)
    assert math.isclose(m.eval(x0), p.eval(x0), rel_tol=1e-9)
    for _ in range(50):
        pt = random_point(rng, names)
        assert m.eval(pt) <= p.eval(pt) * (1 + 1e-12)


@pytest.mark.parametrize("method", ["conic", "barrier"])
def test_solve_tight_constraint(method):
    sol = solve_gp(GPProblem(x, [2 / x]), method=method)
    assert sol.status == "optimal"
    assert sol["x"] == pytest.approx(2.0, rel=1e-6)
    assert sol.objective_value == pytest.approx(2.0, rel=1e-6)


@pytest.mark.parametrize("method", ["conic", "barrier"])
def test_solve_amgm_optimum(method):
    sol = solve_gp(GPProblem(x + y, [1 / (x * y)]), method=method)
    assert sol.status == "optimal"
    assert sol.objective_value == pytest.approx(2.0, rel=1e-6)
    assert sol["x"] == pytest.approx(1.0, rel=1e-4)
    assert sol["y"] == pytest.approx(1.0, rel=1e-4)


def _brute_force_instance():
    mhat = Monomial(3.0, {"x1": 0.6, "x2": 0.3})
    eta = var("eta")
    cap = (var("x1") ** 2 + 2 * var("x2") ** 2) / 4
    return GPProblem(eta**-1, [eta / mhat, cap]), mhat


def test_solve_matches_brute_force_grid():
    prob, mhat = _brute_force_instance()
    sol = solve_gp(prob)
    # the optimum sits on the cap boundary x1 = 2 cos t, x2 = sqrt(2) sin t
    t = np.linspace(1e-6, np.pi / 2 - 1e-6, 2_000_001)
    grid = 3.0 * (2 * np.cos(t)) ** 0.6 * (np.sqrt(2) * np.sin(t)) ** 0.3
    best = grid.max()
    assert sol["eta"] == pytest.approx(best, rel=1e-4)
    assert sol["eta"] == pytest.approx(mhat.eval(sol.assignment), rel=1e-6)


def test_infeasible_detected():
    for method in ("conic", "barrier"):
        sol = solve_gp(GPProblem(x, [2 / x, x]), method=method)
        assert sol.status == "infeasible"


def test_bounds_respected():
    sol = solve_gp(GPProblem(x, [], bounds={"x": (3.0, None)}))
    assert sol["x"] == pytest.approx(3.0, rel=1e-6)


def test_scale_invariance():
    obj = x + 2 * y + 1 / (x * y)
    a = solve_gp(GPProblem(obj, [x / 3]))
    b = solve_gp(GPProblem(obj * 1e4, [x / 3]))
    assert a["x"] == pytest.approx(b["x"], rel=1e-5)
    assert a["y"] == pytest.approx(b["y"], rel=1e-5)


def test_product_constraint_equals_expanded():
    f1, f2 = x + 1, y + 1 / x
    obj = 1 / (x * y)
    cap = [x / 4, y / 4]
    a = solve_gp(GPProblem(obj, [PosynomialProduct((f1 / 10, f2))] + cap))
    b = solve_gp(GPProblem(obj, [f1 * f2 / 10] + cap))
    assert a.objective_value == pytest.approx(b.objective_value, rel=1e-6)


def test_conic_and_barrier_agree(rng):
    names = ["a", "b", "c"]
    obj = random_posynomial(rng, 6, names, spread=1.0)
    cons = [random_posynomial(rng, 4, names, spread=1.0) * 0.05 for _ in range(3)]
    a = solve_gp(GPProblem(obj, cons), method="conic")
    b = solve_gp(GPProblem(obj, cons), method="barrier")
    assert a.status == b.status == "optimal"
    assert a.objective_value == pytest.approx(b.objective_value, rel=1e-6)


def test_cvxpy_cross_check(rng):
    cp = pytest.importorskip("cvxpy")
    names = ["a", "b", "c"]
    obj = random_posynomial(rng, 5, names, spread=1.0)
    cons = [random_posynomial(rng, 3, names, spread=1.0) * 0.05 for _ in range(2)]
    ours = solve_gp(GPProblem(obj, cons))
    v = {k: cp.Variable(pos=True, name=k) for k in names}

    def expr(p):
        out = 0
        for m in p.terms:
            t = m.coeff
            for k, a in m.exponents.items():
                t = t * v[k] ** a
            out = out + t
        return out

    prob = cp.Problem(cp.Minimize(expr(obj)), [expr(c) <= 1 for c in cons])
    prob.solve(gp=True)
    assert ours.objective_value == pytest.approx(prob.value, rel=1e-5)


def test_solver_argument_errors():
    with pytest.raises(GPError):
        solve_gp(GPProblem(x, [2 / x]), tol=0)
    with pytest.raises(GPError):
        solve_gp(GPProblem(x, [2 / x]), method="ellipsoid")
    with pytest.raises(GPError):
        GPProblem(x, [y], variables=("x",))
    with pytest.raises(GPError):
        GPProblem(x, [], bounds={"x": (0.0, 1.0)})


def test_problem_json_dump():
    prob, _ = _brute_force_instance()
    d = json.loads(json.dumps(prob.to_json()))
    assert d["variables"] == ["eta", "x1", "x2"]
    assert len(d["constraints"]) == 2
    assert d["objective"]["terms"][0]["exponents"] == {"eta": -1.0}
