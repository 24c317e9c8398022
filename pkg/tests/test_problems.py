import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from radial.core import check_upper_radial
from radial.problems import (
    PolyhedralGauge, ProblemFileError, QpInstance, SeparablePenalty, StarConvexSet,
    ball_set, box_constraints, gauge_of_set, generate_qp, halfspace, lambda_rescale,
    load_problem, lq_penalty, min_compose, parse_problem, poisson_loglik,
    polyhedral_gauge_eval, polyhedron_set, qp_dual_subgradient, qp_dual_value, quad_cap,
    quadratic, regularized_objective, scad_penalty, set_indicator, translate_truncate,
    trimmed_objective,
)

FIG2_A = np.array([[2.0, -1.0], [1.0, 1.0], [-1.0, 2.0]])


def fd_grad(fn, y, h=1e-6):
    return np.array([(fn(y + h * e) - fn(y - h * e)) / (2 * h) for e in np.eye(y.size)])


def bisect_dual(persp, lo=1e-9, hi=1e9, iters=200):
    """Independent oracle: largest v with persp(v) <= 1 on a monotone perspective."""
    if persp(hi) <= 1:
        return hi
    if persp(lo) > 1:
        return 0.0
    for _ in range(iters):
        mid = math.sqrt(lo * hi)
        lo, hi = (mid, hi) if persp(mid) <= 1 else (lo, mid)
    return lo


def small_qp(seed=0, n=4, m=6, concave=True):
    rng = np.random.default_rng(seed)
    M = rng.standard_normal((n, n))
    Q = M @ M.T if concave else M + M.T
    return QpInstance(c=rng.standard_normal(n), A=rng.standard_normal((m, n)),
                      b=rng.uniform(0.5, 2.0, m), Q=Q)


class TestQpDual:
    def test_origin(self):
        inst = small_qp()
        assert float(qp_dual_value(inst, np.zeros(inst.dim))) == 1.0

    def test_unconstrained_identity(self):
        inst = QpInstance(c=np.zeros(3), A=np.zeros((0, 3)), b=np.zeros(0), Q=np.eye(3))
        y = np.eye(3)[0]
        expected = bisect_dual(lambda v: v - 0.5 / v)  # v * (1 - |y/v|^2 / 2)
        assert math.isclose(expected, (1 + math.sqrt(3)) / 2, rel_tol=1e-12)
        assert math.isclose(float(qp_dual_value(inst, y)), expected, rel_tol=1e-12)

    def test_negative_discriminant_leaves_gauges(self):
        A = np.array([[1.0, 0.0], [0.0, 1.0]])
        inst = QpInstance(c=np.zeros(2), A=A, b=np.ones(2), Q=-np.eye(2))
        y = np.array([0.8, 0.1])  # 1 - 2|y|^2 < 0
        assert float(qp_dual_value(inst, y)) == pytest.approx(0.8)

    def test_matches_bisection_oracle(self):
        inst = small_qp(1)
        rng = np.random.default_rng(2)
        for _ in range(100):
            y = rng.standard_normal(inst.dim)
            persp = lambda v: v * float(inst.eval(y / v)) if float(inst.eval(y / v)) < math.inf else math.inf
            assert math.isclose(float(qp_dual_value(inst, y)), bisect_dual(persp), rel_tol=1e-9)

    def test_subgradient_at_origin_is_c(self):
        inst = small_qp(3)
        g = qp_dual_subgradient(inst, np.zeros(inst.dim))
        assert np.allclose(g, inst.c)

    def test_linear_piece_gradient(self):
        inst = QpInstance(c=np.zeros(2), A=np.array([[4.0, 0.0]]), b=np.array([1.0]), Q=np.eye(2))
        y = np.array([1.0, 0.0])
        assert np.allclose(qp_dual_subgradient(inst, y), [4.0, 0.0])

    def test_subgradient_finite_differences(self):
        inst = small_qp(4)
        rng = np.random.default_rng(5)
        fn = lambda y: float(qp_dual_value(inst, y))
        for _ in range(100):
            y = rng.standard_normal(inst.dim)
            vals, _ = inst.dual_pieces(y)
            top2 = np.sort(vals)[-2:]
            if top2[1] - top2[0] < 1e-4:
                continue
            assert np.allclose(qp_dual_subgradient(inst, y), fd_grad(fn, y), rtol=1e-6, atol=1e-6)

    def test_boundary_error(self):
        inst = QpInstance(c=np.zeros(1), A=np.zeros((0, 1)), b=np.zeros(0), Q=-np.eye(1))
        # s = 1, q = -1/2: s^2 + 2q = 0 with the quadratic piece active at value 1/2
        with pytest.raises(ArithmeticError):
            qp_dual_subgradient(inst, np.array([math.sqrt(0.5)]))

    def test_dual_point_matches_parts(self):
        inst = small_qp(6)
        y = np.random.default_rng(7).standard_normal(inst.dim)
        dp = inst.dual_point(y)
        assert float(dp.value) == float(qp_dual_value(inst, y))
        assert np.allclose(dp.subgradient, qp_dual_subgradient(inst, y))
        assert math.isclose(float(dp.primal), float(inst.eval(y / float(dp.value))), rel_tol=1e-12)

    def test_validation(self):
        with pytest.raises(ValueError):
            QpInstance(c=np.zeros(2), A=np.eye(2), b=np.array([1.0, 0.0]), Q=np.eye(2))
        with pytest.raises(ValueError):
            QpInstance(c=np.zeros(2), A=np.eye(2), b=np.ones(2))


class TestGauges:
    def test_polyhedral_examples(self):
        g = PolyhedralGauge.from_constraints([[1.0]], [2.0])
        assert polyhedral_gauge_eval(g, np.zeros(1))[0] == 0.0
        val, row = polyhedral_gauge_eval(g, np.array([4.0]))
        assert val == 2.0 and np.allclose(row, [0.5])

    def test_polyhedral_ties_lowest_index(self):
        g = PolyhedralGauge.from_constraints(np.eye(2), np.ones(2))
        _, row = polyhedral_gauge_eval(g, np.array([1.0, 1.0]))
        assert np.allclose(row, [1.0, 0.0])

    def test_polyhedral_matches_set_gauge(self):
        rng = np.random.default_rng(0)
        A, b = rng.standard_normal((7, 3)), rng.uniform(0.5, 2, 7)
        g = PolyhedralGauge.from_constraints(A, b)
        S = polyhedron_set(A, b)
        for _ in range(100):
            y = rng.standard_normal(3)
            assert math.isclose(gauge_of_set(S, y), polyhedral_gauge_eval(g, y)[0],
                                rel_tol=1e-9, abs_tol=1e-12)

    def test_ball_gauge(self):
        rng = np.random.default_rng(1)
        for _ in range(20):
            y = rng.standard_normal(4)
            assert math.isclose(gauge_of_set(ball_set(4), y), np.linalg.norm(y), rel_tol=1e-9)

    def test_union_of_boxes(self):
        # [-1,1] x [-0.2,0.2]  union  [-0.2,0.2] x [-1,1]: star-convex, not convex
        box = lambda x, a, b: abs(x[0]) <= a and abs(x[1]) <= b
        S = StarConvexSet(2, lambda x: box(x, 1, 0.2) or box(x, 0.2, 1), "cross")
        rng = np.random.default_rng(2)
        assert S.spot_check(rng.uniform(-1, 1, (200, 2)))
        grid = np.linspace(1e-4, 20, 200001)
        for _ in range(10):
            y = rng.uniform(-3, 3, 2)
            brute = grid[np.argmax([S.contains(y / lam) for lam in grid])]
            assert abs(gauge_of_set(S, y) - brute) <= 2 * (grid[1] - grid[0])

    def test_unbounded_set_gauge(self):
        S = StarConvexSet(1, lambda x: x[0] <= 1.0)
        assert gauge_of_set(S, np.array([-1.0])) == 0.0

    def test_indicator_dual_is_gauge(self):
        f = set_indicator(ball_set(2, 2.0))
        y = np.array([3.0, 4.0])
        assert math.isclose(float(f.dual_eval(y)), 2.5, rel_tol=1e-9)

    @settings(max_examples=50, deadline=None)
    @given(st.lists(st.floats(-10, 10), min_size=3, max_size=3).map(np.array),
           st.floats(0.01, 100))
    def test_homogeneity(self, y, alpha):
        A = np.array([[1.0, 2.0, 0.0], [-1.0, 0.5, 1.0], [0.0, -1.0, -1.0]])
        g = PolyhedralGauge.from_constraints(A, [1.0, 2.0, 0.5])
        assert math.isclose(polyhedral_gauge_eval(g, alpha * y)[0],
                            alpha * polyhedral_gauge_eval(g, y)[0], rel_tol=1e-9, abs_tol=1e-9)


class TestPoisson:
    def test_single(self):
        f = poisson_loglik([[1.0]], [1.0])
        assert f.value(np.array([1.0])) == -1.0
        assert np.allclose(f.supgradient(np.array([1.0])), 0.0)

    def test_fig2_value(self):
        f = poisson_loglik(FIG2_A, np.ones(3))
        assert math.isclose(f.value(np.array([3.0, 3.0])), 2 * math.log(3) + math.log(6) - 12,
                            rel_tol=1e-14)

    def test_outside_domain_is_zero_tag(self):
        f = poisson_loglik(FIG2_A, np.ones(3))
        assert f.value(np.array([-1.0, -1.0])) == -math.inf
        assert f.eval(np.array([-1.0, -1.0])).is_zero

    def test_derivatives(self):
        f = poisson_loglik(FIG2_A, np.array([1.0, 2.0, 3.0]))
        x = np.array([2.0, 2.5])
        assert np.allclose(f.supgradient(x), fd_grad(f.value, x), rtol=1e-7)
        assert np.allclose(f.hessian(x), np.array([fd_grad(lambda z: f.supgradient(z)[i], x)
                                                   for i in range(2)]), rtol=1e-6)


class TestTranslate:
    def test_identity(self):
        f = quad_cap(2)
        g = translate_truncate(f, np.zeros(2), 0.0)
        x = np.array([0.3, 0.9])
        assert float(g.eval(x)) == float(f.eval(x))

    def test_fig2(self):
        L = poisson_loglik(FIG2_A, np.ones(3))
        g = translate_truncate(L, np.array([3.0, 3.0]), -10.0)
        assert math.isclose(g.value(np.zeros(2)), L.value(np.array([3.0, 3.0])) + 10)
        assert g.value(np.zeros(2)) > 0
        assert g.is_concave
        assert check_upper_radial(g).passed

    def test_bad_anchor(self):
        L = poisson_loglik(FIG2_A, np.ones(3))
        with pytest.raises(ValueError, match="anchor"):
            translate_truncate(L, np.array([3.0, 3.0]), 0.0)


class TestPenalties:
    def test_scad_branches(self):
        a, lam = 3.7, 0.5
        assert scad_penalty(0.3, a, lam) == pytest.approx(0.15)
        assert scad_penalty(-5.0, a, lam) == pytest.approx((1 + a) * lam**2 / 2)
        for t in (lam, a * lam):
            assert abs(scad_penalty(t - 1e-13, a, lam) - scad_penalty(t + 1e-13, a, lam)) < 1e-12

    def test_scad_validation(self):
        with pytest.raises(ValueError):
            scad_penalty(1.0, 2.0, 1.0)

    def test_lq(self):
        assert lq_penalty(0.0) == 0.0
        assert lq_penalty(4.0, 0.5, 1.0) == 2.0

    def test_penalties_nonincreasing_along_rays(self):
        y = np.array([1.5, -0.7, 3.0])
        vs = np.geomspace(1e-2, 1e2, 200)
        for r in (SeparablePenalty.lq(0.5, 1.0), SeparablePenalty.scad(3.7, 1.0)):
            vals = [r(y / v) for v in vs]
            assert all(b <= a + 1e-15 for a, b in zip(vals, vals[1:]))

    def test_regularized_zero_penalty(self):
        f = quad_cap(2)
        g = regularized_objective(f, SeparablePenalty.zero())
        x = np.array([0.5, -1.0])
        assert float(g.eval(x)) == float(f.eval(x))

    def test_regularized_radial_and_dual(self):
        g = regularized_objective(quad_cap(2), SeparablePenalty.lq(0.5, 0.3))
        assert check_upper_radial(g).passed
        vs = np.geomspace(1e-3, 1e3, 200001)
        rng = np.random.default_rng(0)
        for _ in range(5):
            y = rng.standard_normal(2)
            p = np.array([v * float(g.eval(y / v)) for v in vs])
            brute = vs[np.flatnonzero(p <= 1.0).max()]
            assert math.isclose(float(g.dual_eval(y)), brute, rel_tol=1e-4)


class TestCompose:
    def test_single_piece(self):
        f = quad_cap(2)
        c = min_compose([f])
        y = np.array([0.4, 1.0])
        assert float(c.dual_eval(y)) == float(f.dual_eval(y))

    def test_qp_composite_matches_closed_form(self):
        inst = small_qp(8)
        comp = inst.as_composite()
        rng = np.random.default_rng(9)
        for _ in range(100):
            y = rng.standard_normal(inst.dim)
            vals = comp.dual_values(y)
            assert float(comp.dual_eval(y)) == max(float(v) for v in vals)
            assert math.isclose(float(comp.dual_eval(y)), float(qp_dual_value(inst, y)), rel_tol=1e-12)
            assert np.allclose(comp.dual_subgradient(y), qp_dual_subgradient(inst, y))

    def test_composite_eval_is_min(self):
        inst = small_qp(10)
        comp = inst.as_composite()
        rng = np.random.default_rng(11)
        for _ in range(50):
            x = rng.standard_normal(inst.dim) * 0.3
            assert math.isclose(float(comp.eval(x)), float(inst.eval(x)), rel_tol=1e-12)

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            min_compose([quad_cap(2), quad_cap(3)])


class TestTrimmed:
    def _constants(self, vals):
        return [quadratic(v, [0.0], [[0.0]]) for v in vals]

    def test_plain_mean(self):
        f = trimmed_objective(self._constants([0.2, 0.5, 0.9]), 0)
        assert f.value(np.zeros(1)) == pytest.approx(1.6 / 3)

    def test_drop_smallest(self):
        f = trimmed_objective(self._constants([0.2, 0.5, 0.9]), 1)
        assert f.value(np.zeros(1)) == pytest.approx(0.7)

    def test_supgradient_fd(self):
        rng = np.random.default_rng(0)
        pieces = [quadratic(1.0, rng.standard_normal(2), -np.eye(2) * rng.uniform(0.5, 2)) for _ in range(5)]
        f = trimmed_objective(pieces, 2)
        x = np.array([0.13, -0.21])
        assert np.allclose(f.supgradient(x), fd_grad(f.value, x), rtol=1e-6, atol=1e-8)

    def test_radial(self):
        rng = np.random.default_rng(1)
        pieces = [quadratic(1.0, rng.standard_normal(2), -np.eye(2)) for _ in range(4)]
        assert check_upper_radial(trimmed_objective(pieces, 1)).passed


class TestLambdaRescale:
    def test_concave_keeps_one(self):
        f = quadratic(1.0, [0.3, 0.0], -np.eye(2))
        lam, _ = lambda_rescale(f, np.random.default_rng(0).uniform(-1, 1, (100, 2)))
        assert lam == 1.0

    def test_nonconcave_box(self):
        Q = np.diag([2.0, -1.0])
        f = quadratic(0.0, [0.5, -0.25], -Q)  # -(x^T Q x / 2 + c^T x)
        rng = np.random.default_rng(1)
        box = rng.uniform(-1, 1, (4000, 2))
        lam, g = lambda_rescale(f, box)
        worst = max(f.supgradient(x) @ x - f.value(x) for x in box)
        assert lam == pytest.approx(0.5 / worst)
        # the rescaled objective restricted to the box is upper radial
        A, b = box_constraints(2)
        comp = min_compose([g] + [halfspace(a, bi) for a, bi in zip(A, b)])
        assert check_upper_radial(comp, require_strict=False).passed
        # same maximizer over the box grid
        grid = np.stack(np.meshgrid(np.linspace(-1, 1, 81), np.linspace(-1, 1, 81)), -1).reshape(-1, 2)
        fv = np.array([f.value(x) for x in grid])
        gv = np.array([g.value(x) for x in grid])
        assert np.argmax(fv) == np.argmax(gv)

    def test_empty(self):
        with pytest.raises(ValueError):
            lambda_rescale(quad_cap(2), np.zeros((0, 2)))


class TestGenerateAndLoad:
    def test_generate_deterministic(self):
        a, b = generate_qp(2, 2, 1, 7), generate_qp(2, 2, 1, 7)
        assert np.array_equal(a.A, b.A) and np.array_equal(a.P, b.P) and np.array_equal(a.c, b.c)
        assert float(qp_dual_value(a, np.zeros(2))) == 1.0
        assert np.all(a.b - a.A @ np.zeros(2) == 1.0)

    def test_load_inline_qp(self, tmp_path):
        p = tmp_path / "qp.yaml"
        p.write_text("type: qp\nc: [0, 0]\nA: [[1, 0], [0, 1]]\nb: [1, 2]\nQ: [[1, 0], [0, 1]]\n")
        spec = load_problem(p)
        assert isinstance(spec.problem, QpInstance) and spec.problem.m == 2

    def test_load_csv_matrix(self, tmp_path):
        (tmp_path / "A.csv").write_text("1,0\n0,1\n-1,-1\n")
        p = tmp_path / "qp.json"
        p.write_text('{"type": "qp", "c": [0.5, 0], "A": {"csv": "A.csv"}, "b": [1, 1, 1], "P": [[1], [0]]}')
        spec = load_problem(p)
        assert spec.problem.A.shape == (3, 2)

    def test_load_generated(self, tmp_path):
        p = tmp_path / "g.yaml"
        p.write_text("type: qp\nn: 5\nm: 12\nr: 2\nseed: 3\n")
        inst = load_problem(p).problem
        assert np.array_equal(inst.A, generate_qp(5, 12, 2, 3).A)

    def test_composite_and_poisson(self):
        spec = parse_problem({"type": "composite", "pieces": [
            {"kind": "quadratic", "const": 0.1, "c": [0], "Q": [[2]]}]})
        assert spec.problem.dim == 1
        spec = parse_problem({"type": "poisson", "A": FIG2_A.tolist(), "b": [1, 1, 1],
                              "anchor": [3, 3], "u0": -10})
        assert spec.problem.value(np.zeros(2)) > 0

    @pytest.mark.parametrize("doc, field", [
        ({"type": "nope"}, "type"),
        ({"type": "qp", "c": [0], "A": [[1]], "b": [0], "Q": [[1]]}, "strictly positive"),
        ({"type": "qp", "c": [0], "A": [[1]], "Q": [[1]]}, "'b'"),
        ({"type": "composite", "pieces": [{"kind": "blob"}]}, "pieces[0].kind"),
        ({"type": "qp", "c": "x", "A": [[1]], "b": [1], "Q": [[1]]}, "c"),
    ])
    def test_malformed(self, doc, field):
        with pytest.raises(ProblemFileError, match=field.replace("[", r"\[").replace("]", r"\]")):
            parse_problem(doc)

    def test_yaml_syntax_error_reports_line(self, tmp_path):
        p = tmp_path / "bad.yaml"
        p.write_text("type: qp\nc: [1, 2\nA: 3\n")
        with pytest.raises(ProblemFileError, match="line"):
            load_problem(p)
