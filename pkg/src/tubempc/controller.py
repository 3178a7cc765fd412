"""Tube controller synthesis and the online MPC step.

Offline: from a constrained plant with bounded process and measurement noise,
build the coupled estimation/deviation error system, compute its RPI tube
cross-section, tighten the constraints by the tube's extent, and assemble
terminal ingredients from the DARE. Online: solve a sparse QP over the
nominal system, apply u = ubar + K (xhat - xbar), and propagate observer and
nominal states.
"""

from __future__ import annotations

import json
from contextlib import contextmanager
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .errors import (DimensionError, DisturbanceTooLarge, ExhaustedIterations,
                     MpcInfeasible, SolverFailure, StabilityError, TubeMpcError)
from .geometry import (DEFAULT_TOL, HPolytope, MappedSet, bounding_box,
                       cross_product, is_subset, pontryagin_diff,
                       remove_redundancy, support)
from .lti import (GainSet, LtiSystem, dare_residual, lqr_gain, observer_gain,
                  solve_dare, spectral_radius)
from .rpi import ErrorSystem, RpiResult, compute_rpi, find_min_k, verify_rpi
from .solvers import QpProblem, solve_qp

ARTIFACT_SCHEMA = "tubempc.artifact/1"

_ZERO_ROW_TOL = 1e-12


def _check_pd(M: np.ndarray, name: str):
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise DimensionError(f"{name} must be square")
    if np.max(np.abs(M - M.T)) > 1e-10:
        raise ValueError(f"{name} must be symmetric")
    if np.min(np.linalg.eigvalsh(M)) <= 0:
        raise ValueError(f"{name} must be positive definite")
    return M


@dataclass(frozen=True)
class PlantModel:
    """Plant x+ = Ax + Bu + w, y = Cx + v, z = Hx with set bounds.

    Z bounds the performance output, U the input; W and V bound the process
    and measurement noise. All four must be compact with the origin in their
    interior.
    """

    sys: LtiSystem
    Z: HPolytope
    U: HPolytope
    W: HPolytope
    V: HPolytope

    def __post_init__(self):
        dims = {"Z": (self.Z, self.sys.o), "U": (self.U, self.sys.m),
                "W": (self.W, self.sys.n), "V": (self.V, self.sys.p)}
        for name, (S, d) in dims.items():
            if S.dim != d:
                raise DimensionError(f"{name} has dimension {S.dim}, expected {d}")
            if not S.is_bounded():
                raise ValueError(f"{name} must be compact")
            if not S.has_origin_interior():
                raise ValueError(f"{name} must contain the origin in its interior")


@dataclass(frozen=True)
class SynthesisConfig:
    """Weights, horizon and tube options for :func:`synthesize`.

    K and L override the default LQR/dual-LQR gain choices when given.
    `rpi_k` pins the face-matrix order; when None the smallest workable order
    up to `k_max` is searched. `delta_mode` 'exact' keeps the error-system
    disturbance as a mapped set; 'box' replaces it by its bounding box
    inflated by `eta` (needed by the container-recursion comparator).
    """

    Q: np.ndarray
    R: np.ndarray
    N: int
    Q_obs: np.ndarray | None = None
    R_obs: np.ndarray | None = None
    K: np.ndarray | None = None
    L: np.ndarray | None = None
    rpi_k: int | None = None
    k_max: int = 1000
    k_start: int = 0
    delta_mode: str = "exact"
    eta: float = 1e-9
    tol: float = DEFAULT_TOL

    def __post_init__(self):
        object.__setattr__(self, "Q", _check_pd(self.Q, "Q"))
        object.__setattr__(self, "R", _check_pd(self.R, "R"))
        if self.N < 1:
            raise ValueError("horizon must be at least 1")
        if self.delta_mode not in ("exact", "box"):
            raise ValueError("delta_mode must be 'exact' or 'box'")
        if self.eta < 0:
            raise ValueError("eta must be nonnegative")


@dataclass
class ControllerState:
    """Online controller memory: estimate, nominal state, time index."""

    xhat: np.ndarray
    xbar: np.ndarray
    k: int = 0

    @classmethod
    def initialize(cls, xhat0: np.ndarray) -> "ControllerState":
        xhat0 = np.asarray(xhat0, dtype=float).ravel()
        # nominal trajectory starts at the current estimate
        return cls(xhat=xhat0.copy(), xbar=xhat0.copy(), k=0)


def build_error_system(plant: PlantModel, K: np.ndarray, L: np.ndarray) -> ErrorSystem:
    """Coupled dynamics of (estimation error, estimate-nominal deviation).

    State xi = (x - xhat, xhat - xbar), driven by delta = (w - Lv, Lv); the
    constrained output (z-part, u-part) deviation is E xi with
    E = [[H, H], [0, K]], bounded by Z x U.
    """
    s = plant.sys
    K = np.atleast_2d(np.asarray(K, dtype=float))
    L = np.atleast_2d(np.asarray(L, dtype=float))
    A_obs = s.A - L @ s.C
    A_fb = s.A + s.B @ K
    for name, M in (("A - LC", A_obs), ("A + BK", A_fb)):
        rho = spectral_radius(M)
        if rho >= 1.0:
            raise StabilityError(f"{name} is not Schur stable (spectral radius {rho:.6f})")
    n = s.n
    A_xi = np.block([[A_obs, np.zeros((n, n))], [L @ s.C, A_fb]])
    M_map = np.block([[np.eye(n), -L], [np.zeros((n, n)), L]])
    delta = MappedSet(M_map, cross_product(plant.W, plant.V))
    E = np.block([[s.H, s.H], [np.zeros((s.m, n)), K]])
    phi = cross_product(plant.Z, plant.U)
    return ErrorSystem(A_xi, E, delta, phi)


def concretize_delta(delta: MappedSet, mode: str = "exact",
                     eta: float = 1e-9) -> MappedSet | HPolytope:
    """'exact' keeps the mapped form; 'box' returns the axis-aligned bounding
    box inflated by eta, restoring full dimensionality when the image is flat."""
    if mode == "exact":
        return delta
    if mode != "box":
        raise ValueError("mode must be 'exact' or 'box'")
    lower, upper = bounding_box(delta)
    return HPolytope.from_box(lower - eta, upper + eta)


def tighten(plant: PlantModel, R: HPolytope, K: np.ndarray) -> tuple[HPolytope, HPolytope]:
    """Shrink Z by [H H]R and U by [0 K]R (tube cross-section R in xi-space)."""
    s = plant.sys
    K = np.atleast_2d(np.asarray(K, dtype=float))
    M_z = np.hstack([s.H, s.H])
    M_u = np.hstack([np.zeros((s.m, s.n)), K])
    out = []
    for name, target, M in (("Z", plant.Z, M_z), ("U", plant.U, M_u)):
        shrunk = pontryagin_diff(target, M, R)
        if shrunk.is_empty() or not shrunk.has_origin_interior():
            raise DisturbanceTooLarge(
                f"tightened {name} lost the origin; tube too large for the constraints")
        out.append(shrunk)
    return out[0], out[1]


def terminal_set(A_cl: np.ndarray, Z_tight: HPolytope, U_tight: HPolytope | None,
                 H: np.ndarray, K_f: np.ndarray | None, cap: int = 1000,
                 tol: float = DEFAULT_TOL) -> HPolytope:
    """Maximal positively invariant set of x+ = A_cl x inside
    {x : Hx in Z_tight, K_f x in U_tight}.

    Standard recursion: add constraint rows propagated through powers of A_cl
    until all new rows are redundant.
    """
    A_cl = np.atleast_2d(np.asarray(A_cl, dtype=float))
    rho = spectral_radius(A_cl)
    if rho >= 1.0:
        raise StabilityError(f"terminal dynamics must be Schur stable (radius {rho:.6f})")
    G = Z_tight.H @ np.atleast_2d(H)
    b = Z_tight.b.copy()
    if U_tight is not None:
        if K_f is None:
            raise ValueError("K_f required when input constraints are given")
        G = np.vstack([G, U_tight.H @ np.atleast_2d(K_f)])
        b = np.concatenate([b, U_tight.b])
    live = np.linalg.norm(G, axis=1) > _ZERO_ROW_TOL
    G, b = G[live], b[live]
    if G.shape[0] == 0:
        raise ValueError("no effective constraint rows for the terminal set")

    omega = HPolytope(G, b)
    G_pow = G @ A_cl
    for _ in range(cap):
        fresh_H, fresh_b = [], []
        for g, beta in zip(G_pow, b):
            if support(omega, g)[0] > beta + tol:
                fresh_H.append(g)
                fresh_b.append(beta)
        if not fresh_H:
            return remove_redundancy(omega, tol)
        omega = HPolytope(np.vstack([omega.H, fresh_H]),
                          np.concatenate([omega.b, fresh_b]))
        G_pow = G_pow @ A_cl
    raise ExhaustedIterations(
        f"terminal set recursion did not close within {cap} steps "
        "(spectral radius likely near one)")


@dataclass(frozen=True)
class MpcSolution:
    """Optimal nominal trajectory: states (N+1, n), inputs (N, m)."""

    states: np.ndarray
    inputs: np.ndarray
    objective: float

    @property
    def first_input(self) -> np.ndarray:
        return self.inputs[0]


@dataclass(frozen=True)
class ControllerArtifact:
    """Everything the online controller needs, validated and serializable."""

    plant: PlantModel
    gains: GainSet
    tube: RpiResult
    Z_tight: HPolytope
    U_tight: HPolytope
    terminal: HPolytope
    horizon: int
    Q: np.ndarray
    R_cost: np.ndarray
    delta_mode: str = "exact"
    eta: float = 1e-9

    def error_system(self) -> ErrorSystem:
        """Rebuild the coupled error system this artifact's tube refers to."""
        es = build_error_system(self.plant, self.gains.K, self.gains.L)
        if self.delta_mode == "box":
            dist = concretize_delta(es.disturbance, "box", self.eta)
            es = ErrorSystem(es.A, es.E, dist, es.output_bounds)
        return es

    def validate(self, tol: float = 1e-7) -> "ControllerArtifact":
        """Re-check every construction invariant; raises on failure."""
        s = self.plant.sys
        if self.horizon < 1:
            raise ValueError("artifact horizon must be at least 1")
        _check_pd(self.Q, "Q")
        _check_pd(self.R_cost, "R_cost")
        res = dare_residual(s.A, s.B, self.Q, self.R_cost, self.gains.P)
        if res > 1e-7:
            raise ValueError(f"terminal cost fails the Riccati equation (residual {res:.2e})")
        for name, small, big in (("Z_tight", self.Z_tight, self.plant.Z),
                                 ("U_tight", self.U_tight, self.plant.U)):
            if not small.has_origin_interior():
                raise ValueError(f"{name} must contain the origin in its interior")
            if not is_subset(small, big, tol):
                raise ValueError(f"{name} is not inside its original constraint set")
        es = self.error_system()
        cert = verify_rpi(self.tube.set, es, tol=tol)
        if not cert.invariant:
            raise ValueError(f"tube is not invariant (min slack {cert.min_slack:.2e})")
        if not cert.admissible:
            raise ValueError("tube image violates the output constraints")
        A_cl = s.A + s.B @ self.gains.K_f
        if not is_subset(MappedSet(A_cl, self.terminal), self.terminal, tol):
            raise ValueError("terminal set is not positively invariant")
        if not is_subset(MappedSet(s.H, self.terminal), self.Z_tight, tol):
            raise ValueError("terminal set violates the tightened output constraints")
        if not is_subset(MappedSet(self.gains.K_f, self.terminal), self.U_tight, tol):
            raise ValueError("terminal set violates the tightened input constraints")
        return self

    def to_json(self) -> dict:
        s = self.plant.sys
        return {
            "schema": ARTIFACT_SCHEMA,
            "plant": {
                "A": s.A.tolist(), "B": s.B.tolist(),
                "C": s.C.tolist(), "H": s.H.tolist(),
                "Z": self.plant.Z.to_json(), "U": self.plant.U.to_json(),
                "W": self.plant.W.to_json(), "V": self.plant.V.to_json(),
            },
            "gains": {
                "K": self.gains.K.tolist(), "L": self.gains.L.tolist(),
                "K_f": self.gains.K_f.tolist(), "P": self.gains.P.tolist(),
            },
            "tube": self.tube.to_json(),
            "Z_tight": self.Z_tight.to_json(),
            "U_tight": self.U_tight.to_json(),
            "terminal": self.terminal.to_json(),
            "horizon": self.horizon,
            "Q": self.Q.tolist(),
            "R_cost": self.R_cost.tolist(),
            "delta_mode": self.delta_mode,
            "eta": self.eta,
        }

    @classmethod
    def from_json(cls, data: dict) -> "ControllerArtifact":
        if data.get("schema") != ARTIFACT_SCHEMA:
            raise ValueError(f"unrecognized artifact schema {data.get('schema')!r}")
        p = data["plant"]
        sys = LtiSystem(np.array(p["A"], dtype=float), np.array(p["B"], dtype=float),
                        np.array(p["C"], dtype=float), np.array(p["H"], dtype=float))
        plant = PlantModel(sys, HPolytope.from_json(p["Z"]), HPolytope.from_json(p["U"]),
                           HPolytope.from_json(p["W"]), HPolytope.from_json(p["V"]))
        g = data["gains"]
        gains = GainSet(sys.A, sys.B, sys.C,
                        K=np.array(g["K"], dtype=float), L=np.array(g["L"], dtype=float),
                        K_f=np.array(g["K_f"], dtype=float), P=np.array(g["P"], dtype=float))
        return cls(plant=plant, gains=gains, tube=RpiResult.from_json(data["tube"]),
                   Z_tight=HPolytope.from_json(data["Z_tight"]),
                   U_tight=HPolytope.from_json(data["U_tight"]),
                   terminal=HPolytope.from_json(data["terminal"]),
                   horizon=int(data["horizon"]),
                   Q=np.array(data["Q"], dtype=float),
                   R_cost=np.array(data["R_cost"], dtype=float),
                   delta_mode=data.get("delta_mode", "exact"),
                   eta=float(data.get("eta", 1e-9)))

    def save(self, path):
        with open(path, "w") as f:
            json.dump(self.to_json(), f, indent=2)

    @classmethod
    def load(cls, path) -> "ControllerArtifact":
        with open(path) as f:
            return cls.from_json(json.load(f))


def build_qp(artifact: ControllerArtifact, xbar0: np.ndarray) -> QpProblem:
    """Stage-stacked sparse QP over the nominal system.

    Variables [x_0..x_N, u_0..u_{N-1}]; cost sum |x|_Q^2 + |u|_R^2 + |x_N|_P^2
    (the solver's 1/2 convention absorbed by doubling the blocks); equalities
    pin x_0 and the dynamics; inequalities apply the tightened constraints at
    stages 0..N-1 and the terminal set at stage N.
    """
    s = artifact.plant.sys
    n, m, N = s.n, s.m, artifact.horizon
    xbar0 = np.asarray(xbar0, dtype=float).ravel()
    if xbar0.shape != (n,):
        raise DimensionError(f"initial nominal state must have length {n}")
    nx = (N + 1) * n
    n_var = nx + N * m

    P_qp = sp.block_diag(
        [2.0 * artifact.Q] * N + [2.0 * artifact.gains.P] + [2.0 * artifact.R_cost] * N,
        format="csc")
    q = np.zeros(n_var)

    eye_n = sp.eye(n, format="csr")
    A_dyn = sp.hstack([
        sp.block_diag([sp.csr_matrix(s.A)] * N), sp.csr_matrix((N * n, n))
    ]) + sp.hstack([sp.csr_matrix((N * n, n)), -sp.block_diag([eye_n] * N)])
    B_dyn = sp.block_diag([sp.csr_matrix(s.B)] * N)
    A_eq = sp.vstack([
        sp.hstack([eye_n, sp.csr_matrix((n, n_var - n))]),
        sp.hstack([A_dyn, B_dyn]),
    ], format="csc")
    b_eq = np.concatenate([xbar0, np.zeros(N * n)])

    G_z = sp.csr_matrix(artifact.Z_tight.H @ s.H)
    G_u = sp.csr_matrix(artifact.U_tight.H)
    A_ub = sp.vstack([
        sp.hstack([sp.block_diag([G_z] * N), sp.csr_matrix((N * G_z.shape[0], n + N * m))]),
        sp.hstack([sp.csr_matrix((N * G_u.shape[0], nx)), sp.block_diag([G_u] * N)]),
        sp.hstack([sp.csr_matrix((artifact.terminal.n_rows, N * n)),
                   sp.csr_matrix(artifact.terminal.H),
                   sp.csr_matrix((artifact.terminal.n_rows, N * m))]),
    ], format="csc")
    b_ub = np.concatenate([
        np.tile(artifact.Z_tight.b, N),
        np.tile(artifact.U_tight.b, N),
        artifact.terminal.b,
    ])
    return QpProblem(P=P_qp, q=q, A_ub=A_ub, b_ub=b_ub, A_eq=A_eq, b_eq=b_eq)


def solve_mpc(artifact: ControllerArtifact, xbar0: np.ndarray,
              tol: float | None = None) -> MpcSolution:
    """Solve the nominal MPC QP; raises MpcInfeasible when no plan exists."""
    s = artifact.plant.sys
    n, m, N = s.n, s.m, artifact.horizon
    status = solve_qp(build_qp(artifact, xbar0), tol=tol)
    if status.kind == "infeasible":
        raise MpcInfeasible(f"MPC problem infeasible from nominal state {np.asarray(xbar0)}")
    if not status.is_optimal:
        raise SolverFailure(f"MPC QP failed: {status.detail}")
    nx = (N + 1) * n
    return MpcSolution(states=status.x[:nx].reshape(N + 1, n),
                       inputs=status.x[nx:].reshape(N, m),
                       objective=float(status.objective))


def control_law(ubar: np.ndarray, xbar: np.ndarray, xhat: np.ndarray,
                K: np.ndarray) -> np.ndarray:
    """Tube feedback u = ubar + K (xhat - xbar)."""
    return np.asarray(ubar, dtype=float) + np.atleast_2d(K) @ (
        np.asarray(xhat, dtype=float) - np.asarray(xbar, dtype=float))


def observer_update(xhat: np.ndarray, u: np.ndarray, y: np.ndarray,
                    gains: GainSet) -> np.ndarray:
    """Luenberger step xhat+ = A xhat + B u + L (y - C xhat)."""
    return (gains.A @ xhat + gains.B @ u
            + gains.L @ (np.asarray(y, dtype=float) - gains.C @ xhat))


def nominal_update(xbar: np.ndarray, ubar: np.ndarray, gains: GainSet) -> np.ndarray:
    """Noise-free planning model step xbar+ = A xbar + B ubar."""
    return gains.A @ xbar + gains.B @ ubar


@contextmanager
def _stage(name: str):
    try:
        yield
    except TubeMpcError as exc:
        exc.args = (f"synthesis stage '{name}': {exc.args[0]}",) + exc.args[1:]
        raise
    except (ValueError, np.linalg.LinAlgError) as exc:
        raise TubeMpcError(f"synthesis stage '{name}': {exc}") from exc


def synthesize(plant: PlantModel, config: SynthesisConfig) -> ControllerArtifact:
    """Full offline pipeline: gains, error system, tube, tightening, terminal
    ingredients, then a final validation pass over the assembled artifact."""
    s = plant.sys
    with _stage("gains"):
        P = solve_dare(s.A, s.B, config.Q, config.R)
        K_f = lqr_gain(s.A, s.B, config.Q, config.R)
        K = K_f if config.K is None else np.atleast_2d(np.asarray(config.K, dtype=float))
        if config.L is None:
            L = observer_gain(s.A, s.C, config.Q_obs, config.R_obs)
        else:
            L = np.atleast_2d(np.asarray(config.L, dtype=float))
        gains = GainSet(s.A, s.B, s.C, K=K, L=L, K_f=K_f, P=P)

    with _stage("error_system"):
        es = build_error_system(plant, gains.K, gains.L)
        if config.delta_mode == "box":
            dist = concretize_delta(es.disturbance, "box", config.eta)
            es = ErrorSystem(es.A, es.E, dist, es.output_bounds)

    with _stage("rpi"):
        if config.rpi_k is not None:
            tube = compute_rpi(es, config.rpi_k, tol=config.tol)
        else:
            tube = find_min_k(es, config.k_max, k_start=config.k_start, tol=config.tol)

    with _stage("tighten"):
        Z_tight, U_tight = tighten(plant, tube.set, gains.K)

    with _stage("terminal"):
        X_N = terminal_set(s.A + s.B @ gains.K_f, Z_tight, U_tight, s.H, gains.K_f)

    with _stage("validate"):
        artifact = ControllerArtifact(
            plant=plant, gains=gains, tube=tube, Z_tight=Z_tight, U_tight=U_tight,
            terminal=X_N, horizon=config.N, Q=config.Q, R_cost=config.R,
            delta_mode=config.delta_mode, eta=config.eta)
        artifact.validate()
    return artifact
