import numpy as np
import pytest

from tubempc.controller import (ARTIFACT_SCHEMA, ControllerArtifact, ControllerState,
                                PlantModel, SynthesisConfig, build_error_system,
                                build_qp, concretize_delta, control_law,
                                nominal_update, observer_update, solve_mpc,
                                synthesize, terminal_set, tighten)
from tubempc.errors import (DimensionError, DisturbanceTooLarge,
                            ExhaustedIterations, MpcInfeasible, StabilityError)
from tubempc.geometry import (HPolytope, MappedSet, bounding_box, cross_product,
                              is_subset)
from tubempc.lti import LtiSystem, lqr_gain, observer_gain
from tubempc.solvers import solve_qp

GOLDEN = (1.0 + np.sqrt(5.0)) / 2.0


def scalar_plant_model():
    sys = LtiSystem(np.eye(1), np.eye(1), np.eye(1), np.eye(1))
    return PlantModel(sys,
                      Z=HPolytope.from_box([-10.0], [10.0]),
                      U=HPolytope.from_box([-5.0], [5.0]),
                      W=HPolytope.from_box([-0.1], [0.1]),
                      V=HPolytope.from_box([-0.05], [0.05]))


class TestPlantModel:
    def test_wrong_disturbance_dim_rejected(self):
        sys = LtiSystem(np.eye(2), np.ones((2, 1)), np.ones((1, 2)), np.eye(2))
        with pytest.raises(DimensionError):
            PlantModel(sys, Z=HPolytope.from_box([-1, -1], [1, 1]),
                       U=HPolytope.from_box([-1], [1]),
                       W=HPolytope.from_box([-0.1], [0.1]),
                       V=HPolytope.from_box([-0.1], [0.1]))

    def test_constraints_need_origin_interior(self):
        sys = LtiSystem(np.eye(1), np.eye(1), np.eye(1), np.eye(1))
        with pytest.raises(ValueError):
            PlantModel(sys, Z=HPolytope.from_box([1.0], [2.0]),
                       U=HPolytope.from_box([-1], [1]),
                       W=HPolytope.from_box([-0.1], [0.1]),
                       V=HPolytope.from_box([-0.1], [0.1]))


class TestSynthesisConfig:
    def test_horizon_must_be_positive(self):
        with pytest.raises(ValueError):
            SynthesisConfig(Q=np.eye(1), R=np.eye(1), N=0)

    def test_weights_must_be_positive_definite(self):
        with pytest.raises(ValueError):
            SynthesisConfig(Q=np.diag([1.0, -1.0]), R=np.eye(1), N=3)

    def test_delta_mode_checked(self):
        with pytest.raises(ValueError):
            SynthesisConfig(Q=np.eye(1), R=np.eye(1), N=3, delta_mode="ball")


class TestErrorSystemAssembly:
    def test_scalar_block_structure(self):
        plant = scalar_plant_model()
        K = np.array([[-1.0 / GOLDEN]])
        L = np.array([[1.0 / GOLDEN]])
        es = build_error_system(plant, K, L)
        lam = 2.0 - GOLDEN  # both loops contract at the same rate
        np.testing.assert_allclose(es.A, [[lam, 0.0], [1.0 / GOLDEN, lam]],
                                   atol=1e-12)
        np.testing.assert_allclose(es.E, [[1.0, 1.0], [0.0, -1.0 / GOLDEN]],
                                   atol=1e-12)
        assert es.disturbance.dim == 2
        np.testing.assert_allclose(es.disturbance.M,
                                   [[1.0, -1.0 / GOLDEN], [0.0, 1.0 / GOLDEN]],
                                   atol=1e-12)

    def test_unstable_feedback_named_in_error(self):
        plant = scalar_plant_model()
        with pytest.raises(StabilityError, match="A \\+ BK"):
            build_error_system(plant, np.array([[0.5]]), np.array([[0.6]]))
        with pytest.raises(StabilityError, match="A - LC"):
            build_error_system(plant, np.array([[-0.6]]), np.array([[2.5]]))

    def test_exact_dynamics_identity(self, rng):
        """One simulated step of plant/observer/nominal matches the block form."""
        n = 3
        A = rng.normal(size=(n, n)); A *= 0.8 / max(abs(np.linalg.eigvals(A)))
        B = rng.normal(size=(n, 1))
        C = rng.normal(size=(1, n))
        sys = LtiSystem(A, B, C, np.eye(n))
        plant = PlantModel(sys, Z=HPolytope.from_box(-5 * np.ones(n), 5 * np.ones(n)),
                           U=HPolytope.from_box([-5.0], [5.0]),
                           W=HPolytope.from_box(-0.1 * np.ones(n), 0.1 * np.ones(n)),
                           V=HPolytope.from_box([-0.1], [0.1]))
        K = lqr_gain(A, B, np.eye(n), np.eye(1))
        L = observer_gain(A, C)
        es = build_error_system(plant, K, L)
        M_map = np.block([[np.eye(n), -L], [np.zeros((n, n)), L]])

        for _ in range(20):
            x = rng.normal(size=n); xhat = rng.normal(size=n); xbar = rng.normal(size=n)
            ubar = rng.normal(size=1)
            w = rng.normal(size=n); v = rng.normal(size=1)
            u = ubar + K @ (xhat - xbar)
            y = C @ x + v
            x2 = A @ x + B @ u + w
            xhat2 = A @ xhat + B @ u + L @ (y - C @ xhat)
            xbar2 = A @ xbar + B @ ubar
            xi = np.concatenate([x - xhat, xhat - xbar])
            xi2 = np.concatenate([x2 - xhat2, xhat2 - xbar2])
            np.testing.assert_allclose(
                xi2, es.A @ xi + M_map @ np.concatenate([w, v]), atol=1e-12)


class TestDeltaConcretization:
    def test_box_mode_bounding_box(self):
        M = np.array([[1.0, -1.0], [0.0, 1.0]])
        base = cross_product(HPolytope.from_box([-1.0], [1.0]),
                             HPolytope.from_box([-1.0], [1.0]))
        out = concretize_delta(MappedSet(M, base), mode="box", eta=1e-3)
        lower, upper = out.as_box()
        np.testing.assert_allclose(upper, [2.001, 1.001], atol=1e-9)
        np.testing.assert_allclose(lower, [-2.001, -1.001], atol=1e-9)

    def test_exact_mode_is_identity(self):
        d = MappedSet(np.eye(2), HPolytope.from_box([-1, -1], [1, 1]))
        assert concretize_delta(d, mode="exact") is d

    def test_unknown_mode_rejected(self):
        d = MappedSet(np.eye(2), HPolytope.from_box([-1, -1], [1, 1]))
        with pytest.raises(ValueError):
            concretize_delta(d, mode="ball")


class TestTighten:
    def test_box_tube_oracle(self):
        plant = scalar_plant_model()
        R = HPolytope.from_box([-0.5, -0.5], [0.5, 0.5])
        Z_t, U_t = tighten(plant, R, np.array([[-0.5]]))
        np.testing.assert_allclose(Z_t.b, [9.0, 9.0], atol=1e-8)
        np.testing.assert_allclose(U_t.b, [4.75, 4.75], atol=1e-8)

    def test_oversized_tube_rejected(self):
        plant = scalar_plant_model()
        R = HPolytope.from_box([-6.0, -6.0], [6.0, 6.0])
        with pytest.raises(DisturbanceTooLarge, match="tightened Z"):
            tighten(plant, R, np.array([[-0.5]]))


class TestTerminalSet:
    def test_scalar_input_limited(self):
        X = terminal_set(np.array([[0.382]]),
                         HPolytope.from_box([-9.0], [9.0]),
                         HPolytope.from_box([-4.0], [4.0]),
                         np.eye(1), np.array([[-0.618]]))
        np.testing.assert_allclose(X.b, [4.0 / 0.618] * 2, atol=1e-8)

    def test_scalar_without_input_rows(self):
        X = terminal_set(np.array([[0.5]]), HPolytope.from_box([-1.0], [1.0]),
                         None, np.eye(1), None)
        np.testing.assert_allclose(X.b, [1.0, 1.0], atol=1e-9)

    def test_missing_gain_with_input_rows(self):
        with pytest.raises(ValueError):
            terminal_set(np.array([[0.5]]), HPolytope.from_box([-1.0], [1.0]),
                         HPolytope.from_box([-1.0], [1.0]), np.eye(1), None)

    def test_unstable_dynamics_rejected(self):
        with pytest.raises(StabilityError):
            terminal_set(np.array([[1.0]]), HPolytope.from_box([-1.0], [1.0]),
                         None, np.eye(1), None)

    def test_slow_rotation_exhausts_cap(self):
        th = 2.0 * np.pi / (1.0 + GOLDEN)
        A = 0.999999 * np.array([[np.cos(th), -np.sin(th)],
                                 [np.sin(th), np.cos(th)]])
        with pytest.raises(ExhaustedIterations):
            terminal_set(A, HPolytope.from_box([-1, -1], [1, 1]), None,
                         np.eye(2), None, cap=5)

    def test_invariance_and_admissibility(self, di_artifact, rng):
        X = di_artifact.terminal
        A_cl = (di_artifact.plant.sys.A
                + di_artifact.plant.sys.B @ di_artifact.gains.K_f)
        lower, upper = bounding_box(X)
        hits = 0
        while hits < 40:
            x = rng.uniform(lower, upper)
            if not X.contains(x):
                continue
            hits += 1
            assert X.contains(A_cl @ x, tol=1e-8)
            assert di_artifact.Z_tight.contains(di_artifact.plant.sys.H @ x, tol=1e-8)
            assert di_artifact.U_tight.contains(di_artifact.gains.K_f @ x, tol=1e-8)


class TestArtifact:
    def test_json_round_trip(self, scalar_artifact):
        back = ControllerArtifact.from_json(scalar_artifact.to_json())
        np.testing.assert_array_equal(back.terminal.H, scalar_artifact.terminal.H)
        np.testing.assert_array_equal(back.tube.set.b, scalar_artifact.tube.set.b)
        assert back.horizon == scalar_artifact.horizon
        back.validate()

    def test_save_load(self, scalar_artifact, tmp_path):
        path = tmp_path / "artifact.json"
        scalar_artifact.save(path)
        back = ControllerArtifact.load(path)
        np.testing.assert_array_equal(back.gains.K, scalar_artifact.gains.K)

    def test_unknown_schema_rejected(self, scalar_artifact):
        data = scalar_artifact.to_json()
        data["schema"] = "something/else"
        with pytest.raises(ValueError):
            ControllerArtifact.from_json(data)

    def test_schema_tag_present(self, scalar_artifact):
        assert scalar_artifact.to_json()["schema"] == ARTIFACT_SCHEMA

    def test_validate_catches_oversized_terminal(self, scalar_artifact):
        data = scalar_artifact.to_json()
        data["terminal"] = HPolytope.from_box([-60.0], [60.0]).to_json()
        bad = ControllerArtifact.from_json(data)
        with pytest.raises(ValueError):
            bad.validate()

    def test_validate_catches_wrong_cost_matrix(self, scalar_artifact):
        data = scalar_artifact.to_json()
        data["gains"]["P"] = [[3.0]]
        bad = ControllerArtifact.from_json(data)
        with pytest.raises(ValueError):
            bad.validate()


class TestMpc:
    def test_solution_satisfies_dynamics(self, scalar_artifact):
        sol = solve_mpc(scalar_artifact, np.array([2.0]))
        s = scalar_artifact.plant.sys
        for k in range(scalar_artifact.horizon):
            np.testing.assert_allclose(
                sol.states[k + 1], s.A @ sol.states[k] + s.B @ sol.inputs[k],
                atol=1e-7)
        np.testing.assert_allclose(sol.states[0], [2.0], atol=1e-9)
        np.testing.assert_array_equal(sol.first_input, sol.inputs[0])

    def test_plan_respects_tightened_constraints(self, scalar_artifact):
        sol = solve_mpc(scalar_artifact, np.array([4.0]))
        art = scalar_artifact
        s = art.plant.sys
        for k in range(art.horizon):
            assert art.Z_tight.contains(s.H @ sol.states[k], tol=1e-7)
            assert art.U_tight.contains(sol.inputs[k], tol=1e-7)
        assert art.terminal.contains(sol.states[-1], tol=1e-7)

    def test_matches_terminal_gain_near_origin(self, di_artifact, rng):
        K_f = di_artifact.gains.K_f
        for _ in range(10):
            x = rng.uniform(-0.3, 0.3, size=2)
            sol = solve_mpc(di_artifact, x)
            np.testing.assert_allclose(sol.first_input, K_f @ x, atol=1e-6)

    def test_cost_decreases_along_nominal_rollout(self, di_artifact):
        art = di_artifact
        xbar = np.array([2.0, -1.0])
        prev = None
        for _ in range(15):
            sol = solve_mpc(art, xbar)
            stage = float(xbar @ art.Q @ xbar + sol.inputs[0] @ art.R_cost @ sol.inputs[0])
            if prev is not None:
                assert sol.objective <= prev_obj - prev + 1e-6
            prev, prev_obj = stage, sol.objective
            xbar = nominal_update(xbar, sol.inputs[0], art.gains)

    def test_far_state_infeasible(self, scalar_artifact):
        with pytest.raises(MpcInfeasible):
            solve_mpc(scalar_artifact, np.array([100.0]))

    def test_qp_shapes(self, scalar_artifact):
        art = scalar_artifact
        qp = build_qp(art, np.array([1.0]))
        n, m, N = 1, 1, art.horizon
        n_var = n * (N + 1) + m * N
        assert qp.P.shape == (n_var, n_var)
        assert qp.A_eq.shape[0] == n * (N + 1)
        np.testing.assert_allclose((qp.P - qp.P.T).toarray() if hasattr(qp.P, "toarray")
                                   else qp.P - qp.P.T, 0.0, atol=1e-12)

    def test_qp_is_solvable_directly(self, scalar_artifact):
        qp = build_qp(scalar_artifact, np.array([1.0]))
        assert solve_qp(qp).is_optimal


class TestOnlineUpdates:
    def test_formulas(self, scalar_artifact):
        g = scalar_artifact.gains
        xbar = np.array([1.0]); xhat = np.array([1.2]); ubar = np.array([-0.4])
        u = control_law(ubar, xbar, xhat, g.K)
        np.testing.assert_allclose(u, ubar + g.K @ (xhat - xbar), atol=1e-12)
        y = np.array([1.3])
        xh2 = observer_update(xhat, u, y, g)
        s = scalar_artifact.plant.sys
        np.testing.assert_allclose(
            xh2, s.A @ xhat + s.B @ u + g.L @ (y - s.C @ xhat), atol=1e-12)
        xb2 = nominal_update(xbar, ubar, g)
        np.testing.assert_allclose(xb2, s.A @ xbar + s.B @ ubar, atol=1e-12)

    def test_state_initialization(self):
        st = ControllerState.initialize([1.0, 2.0])
        np.testing.assert_array_equal(st.xhat, st.xbar)
        assert st.k == 0


class TestSynthesize:
    def test_scalar_end_to_end(self, scalar_artifact):
        art = scalar_artifact
        assert art.horizon == 8
        np.testing.assert_allclose(art.gains.K, [[-1.0 / GOLDEN]], atol=1e-9)
        np.testing.assert_allclose(art.gains.L, [[1.0 / GOLDEN]], atol=1e-9)
        assert art.tube.set.dim == 2
        assert is_subset(art.Z_tight, art.plant.Z)
        assert is_subset(art.U_tight, art.plant.U)
        art.validate()

    def test_disturbance_too_large_surfaces(self):
        sys = LtiSystem(np.eye(1), np.eye(1), np.eye(1), np.eye(1))
        plant = PlantModel(sys, Z=HPolytope.from_box([-10.0], [10.0]),
                           U=HPolytope.from_box([-5.0], [5.0]),
                           W=HPolytope.from_box([-6.0], [6.0]),
                           V=HPolytope.from_box([-0.05], [0.05]))
        with pytest.raises(DisturbanceTooLarge):
            synthesize(plant, SynthesisConfig(Q=np.eye(1), R=np.eye(1), N=4))

    def test_explicit_gain_override(self, scalar_plant):
        cfg = SynthesisConfig(Q=np.eye(1), R=np.eye(1), N=4,
                              K=np.array([[-0.9]]))
        art = synthesize(scalar_plant, cfg)
        np.testing.assert_allclose(art.gains.K, [[-0.9]])
        # terminal gain is still the optimal one
        np.testing.assert_allclose(art.gains.K_f, [[-1.0 / GOLDEN]], atol=1e-9)
