import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from tubempc.errors import DimensionError
from tubempc.solvers import (INFEASIBLE, OPTIMAL, UNBOUNDED, LpProblem,
                             QpProblem, default_qp_tol, solve_lp, solve_qp)

finite = st.floats(-5.0, 5.0, allow_nan=False, allow_infinity=False)


def box_lp(c, r, sense="max"):
    n = len(c)
    A = np.vstack([np.eye(n), -np.eye(n)])
    return LpProblem(np.asarray(c, float), sense, A_ub=A,
                     b_ub=np.concatenate([r, r]).astype(float))


class TestLp:
    def test_box_maximum(self):
        st_ = solve_lp(box_lp([2.0, -3.0], [1.0, 2.0]))
        assert st_.kind == OPTIMAL and st_.is_optimal
        assert abs(st_.objective - 8.0) < 1e-9
        np.testing.assert_allclose(st_.x, [1.0, -2.0], atol=1e-9)

    def test_minimize_sense(self):
        st_ = solve_lp(box_lp([1.0], [2.0], sense="min"))
        assert abs(st_.objective + 2.0) < 1e-9

    def test_equality_constraint(self):
        # max x + y on the segment x + y = 1 inside the unit box
        p = LpProblem(np.array([1.0, 1.0]), "max",
                      A_ub=np.vstack([np.eye(2), -np.eye(2)]), b_ub=np.ones(4),
                      A_eq=np.array([[1.0, 1.0]]), b_eq=np.array([1.0]))
        st_ = solve_lp(p)
        assert abs(st_.objective - 1.0) < 1e-9

    def test_infeasible(self):
        p = LpProblem(np.array([1.0]), "max", A_ub=np.array([[1.0], [-1.0]]),
                      b_ub=np.array([-1.0, -2.0]))
        assert solve_lp(p).kind == INFEASIBLE

    def test_unbounded(self):
        p = LpProblem(np.array([1.0]), "max", A_ub=np.array([[-1.0]]),
                      b_ub=np.array([0.0]))
        assert solve_lp(p).kind == UNBOUNDED

    def test_free_variables_default(self):
        # without bounds the variable may go negative
        p = LpProblem(np.array([1.0]), "min", A_ub=np.array([[-1.0]]),
                      b_ub=np.array([5.0]))
        st_ = solve_lp(p)
        assert abs(st_.objective + 5.0) < 1e-9

    def test_duals_complementary_slackness(self):
        c = np.array([2.0, 0.5, 1.5])
        p = box_lp(c, [1.0, 1.0, 1.0])
        st_ = solve_lp(p)
        assert st_.ineq_duals is not None
        resid = p.A_ub @ st_.x - p.b_ub
        for lam, r in zip(st_.ineq_duals, resid):
            if abs(lam) > 1e-9:
                assert abs(r) < 1e-7

    def test_determinism(self):
        p = box_lp([1.0, 2.0, 3.0], [1.0, 2.0, 3.0])
        a = solve_lp(p)
        b = solve_lp(p)
        assert a.x.tobytes() == b.x.tobytes()
        assert a.objective == b.objective

    def test_nonfinite_rejected_at_construction(self):
        with pytest.raises(ValueError):
            LpProblem(np.array([np.nan]), "max")

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionError):
            LpProblem(np.array([1.0, 2.0]), "max", A_ub=np.array([[1.0]]),
                      b_ub=np.array([1.0]))

    @given(arrays(float, 4, elements=finite))
    def test_box_support_value(self, c):
        r = np.array([1.0, 2.0, 0.5, 3.0])
        st_ = solve_lp(box_lp(c, r))
        assert st_.is_optimal
        assert abs(st_.objective - float(np.abs(c) @ r)) < 1e-7


class TestQp:
    def test_unconstrained_quadratic(self):
        t = np.array([1.5, -2.0])
        st_ = solve_qp(QpProblem(P=2.0 * np.eye(2), q=-2.0 * t))
        assert st_.kind == OPTIMAL
        np.testing.assert_allclose(st_.x, t, atol=1e-7)
        assert abs(st_.objective + t @ t) < 1e-6

    def test_projection_onto_box_corner(self):
        # nearest point of the unit box to (2, 3) is the corner (1, 1)
        A = np.vstack([np.eye(2), -np.eye(2)])
        st_ = solve_qp(QpProblem(P=2.0 * np.eye(2), q=np.array([-4.0, -6.0]),
                                 A_ub=A, b_ub=np.ones(4)))
        np.testing.assert_allclose(st_.x, [1.0, 1.0], atol=1e-7)
        assert abs(st_.objective + 8.0) < 1e-6

    def test_projection_onto_plane(self):
        # project the origin-shifted point onto {x : sum x = 3}
        st_ = solve_qp(QpProblem(P=2.0 * np.eye(3), q=np.zeros(3),
                                 A_eq=np.ones((1, 3)), b_eq=np.array([3.0])))
        np.testing.assert_allclose(st_.x, np.ones(3), atol=1e-7)

    def test_infeasible(self):
        st_ = solve_qp(QpProblem(P=2.0 * np.eye(1), q=np.zeros(1),
                                 A_ub=np.array([[1.0], [-1.0]]),
                                 b_ub=np.array([-1.0, -1.0])))
        assert st_.kind == INFEASIBLE

    def test_unbounded(self):
        P = np.diag([2.0, 0.0])
        st_ = solve_qp(QpProblem(P=P, q=np.array([0.0, -1.0])))
        assert st_.kind == UNBOUNDED

    def test_asymmetric_P_rejected(self):
        with pytest.raises(ValueError):
            QpProblem(P=np.array([[1.0, 0.5], [0.0, 1.0]]), q=np.zeros(2))

    def test_indefinite_P_rejected(self):
        with pytest.raises(ValueError):
            QpProblem(P=np.diag([1.0, -1.0]), q=np.zeros(2))

    def test_determinism(self):
        prob = QpProblem(P=2.0 * np.eye(2), q=np.array([-4.0, -6.0]),
                         A_ub=np.vstack([np.eye(2), -np.eye(2)]), b_ub=np.ones(4))
        a = solve_qp(prob)
        b = solve_qp(prob)
        assert a.x.tobytes() == b.x.tobytes()

    @given(arrays(float, (3, 3), elements=finite), arrays(float, 3, elements=finite))
    def test_unconstrained_stationarity(self, M, q):
        P = M.T @ M + 0.1 * np.eye(3)
        st_ = solve_qp(QpProblem(P=P, q=q))
        assert st_.kind == OPTIMAL
        assert np.max(np.abs(P @ st_.x + q)) < 1e-6


class TestTolerance:
    def test_default_from_env(self, monkeypatch):
        monkeypatch.setenv("TUBEMPC_SOLVER_TOL", "1e-6")
        assert default_qp_tol() == 1e-6

    def test_default_without_env(self, monkeypatch):
        monkeypatch.delenv("TUBEMPC_SOLVER_TOL", raising=False)
        assert default_qp_tol() == 1e-9
