"""Seedable closed-loop simulation of the true plant under the tube controller.

One run steps the plant, observer, and nominal planner together while logging
every quantity needed to audit the guarantees afterwards: constraint
satisfaction, tube membership of the recomputed error state, geometric decay
of the distance to the tube around the origin, and the finite-horizon cost.
"""

from __future__ import annotations

import io
from dataclasses import dataclass

import numpy as np

from .controller import (ControllerArtifact, ControllerState, PlantModel,
                         control_law, nominal_update, observer_update,
                         solve_mpc)
from .errors import InvariantViolation, MpcInfeasible, NonBoxSet
from .geometry import HPolytope
from .solvers import QpProblem, solve_qp

_MEMBERSHIP_SLACK = 1e-9


@dataclass(frozen=True)
class SimConfig:
    """One closed-loop experiment.

    Exactly one of `x0` (fixed start) or `x0_box` (uniform sample) must be
    given. The estimate starts at the true state unless `init_error_box` is
    set, in which case the initial estimation error is sampled from it (keep
    it inside the tube's estimation-error section to honor the guarantees).
    `disturbance_scale` inflates the sampled noise, deliberately breaking the
    assumptions for audit demonstrations; pair it with strict=False.
    """

    steps: int
    seed: int
    x0: np.ndarray | None = None
    x0_box: HPolytope | None = None
    init_error_box: HPolytope | None = None
    disturbance_mode: str = "uniform"
    disturbance_scale: float = 1.0
    strict: bool = True

    def __post_init__(self):
        if self.steps < 1:
            raise ValueError("steps must be at least 1")
        if (self.x0 is None) == (self.x0_box is None):
            raise ValueError("give exactly one of x0 or x0_box")
        if self.disturbance_mode not in ("uniform", "zero"):
            raise ValueError("disturbance_mode must be 'uniform' or 'zero'")
        if self.x0 is not None:
            object.__setattr__(self, "x0", np.asarray(self.x0, dtype=float).ravel())


def sample_from_box(S: HPolytope, rng: np.random.Generator) -> np.ndarray:
    """Uniform sample from an axis-aligned box; rejects other polytopes."""
    box = S.as_box()
    if box is None:
        raise NonBoxSet("uniform sampling needs an axis-aligned box")
    lower, upper = box
    return rng.uniform(lower, upper)


@dataclass
class TrajectoryLog:
    """Per-step record of one closed-loop run; xi is recomputed from the
    logged states, never trusted from the controller."""

    x: np.ndarray
    xhat: np.ndarray
    xbar: np.ndarray
    u: np.ndarray
    ubar: np.ndarray
    z: np.ndarray
    w: np.ndarray
    v: np.ndarray
    xi: np.ndarray
    qp_status: list
    stage_cost: np.ndarray
    objectives: np.ndarray
    xi0_in_tube: bool
    rng_id: str

    @property
    def steps(self) -> int:
        return self.x.shape[0]

    def to_csv(self, path=None) -> str | None:
        """One row per step, fixed column order; repr floats so identical
        runs serialize bit-identically."""
        cols = (
            [f"x{i}" for i in range(self.x.shape[1])]
            + [f"xhat{i}" for i in range(self.xhat.shape[1])]
            + [f"xbar{i}" for i in range(self.xbar.shape[1])]
            + [f"u{i}" for i in range(self.u.shape[1])]
            + [f"ubar{i}" for i in range(self.ubar.shape[1])]
            + [f"z{i}" for i in range(self.z.shape[1])]
            + [f"w{i}" for i in range(self.w.shape[1])]
            + [f"v{i}" for i in range(self.v.shape[1])]
            + [f"xi{i}" for i in range(self.xi.shape[1])]
        )
        buf = io.StringIO()
        buf.write("k," + ",".join(cols) + ",qp_status,stage_cost\n")
        for k in range(self.steps):
            vals = np.concatenate([self.x[k], self.xhat[k], self.xbar[k],
                                   self.u[k], self.ubar[k], self.z[k],
                                   self.w[k], self.v[k], self.xi[k]])
            buf.write(f"{k}," + ",".join(repr(float(t)) for t in vals)
                      + f",{self.qp_status[k]},{repr(float(self.stage_cost[k]))}\n")
        text = buf.getvalue()
        if path is None:
            return text
        with open(path, "w") as f:
            f.write(text)
        return None


def run_closed_loop(plant: PlantModel, artifact: ControllerArtifact,
                    cfg: SimConfig) -> TrajectoryLog:
    """Simulate the true plant under the tube controller for cfg.steps steps.

    Step order: plan from xbar_k, apply u = ubar + K(xhat - xbar), measure,
    then update observer and nominal states. In strict mode an infeasible QP
    at k > 0, or a tube exit after starting inside, aborts with
    InvariantViolation (both falsify the controller's guarantees).
    """
    s = plant.sys
    rng = np.random.default_rng(cfg.seed)
    rng_id = f"numpy.random.default_rng(PCG64) seed={cfg.seed}"

    x = cfg.x0.copy() if cfg.x0 is not None else sample_from_box(cfg.x0_box, rng)
    if x.shape != (s.n,):
        raise ValueError(f"initial state must have length {s.n}")
    e0 = (sample_from_box(cfg.init_error_box, rng)
          if cfg.init_error_box is not None else np.zeros(s.n))
    state = ControllerState.initialize(x - e0)

    R = artifact.tube.set
    xi0 = np.concatenate([x - state.xhat, state.xhat - state.xbar])
    xi0_in = bool(R.contains(xi0, tol=_MEMBERSHIP_SLACK))

    K = artifact.gains.K
    kf = cfg.steps
    log = {name: np.empty((kf, dim)) for name, dim in
           (("x", s.n), ("xhat", s.n), ("xbar", s.n), ("u", s.m), ("ubar", s.m),
            ("z", s.o), ("w", s.n), ("v", s.p), ("xi", 2 * s.n))}
    statuses, costs, objectives = [], np.empty(kf), np.empty(kf)

    for k in range(kf):
        try:
            sol = solve_mpc(artifact, state.xbar)
        except MpcInfeasible:
            if k == 0:
                raise
            if cfg.strict:
                raise InvariantViolation(
                    f"MPC became infeasible at step {k}; recursive feasibility broken")
            statuses.append("infeasible")
            for name in log:
                log[name] = log[name][:k]
            costs, objectives = costs[:k], objectives[:k]
            break
        ubar = sol.inputs[0]
        u = control_law(ubar, state.xbar, state.xhat, K)

        if cfg.disturbance_mode == "uniform":
            w = cfg.disturbance_scale * sample_from_box(plant.W, rng)
            v = cfg.disturbance_scale * sample_from_box(plant.V, rng)
        else:
            w, v = np.zeros(s.n), np.zeros(s.p)
        y = s.C @ x + v

        xi = np.concatenate([x - state.xhat, state.xhat - state.xbar])
        if cfg.strict and xi0_in and not R.contains(xi, tol=_MEMBERSHIP_SLACK):
            raise InvariantViolation(
                f"error state left the tube at step {k} despite starting inside")

        log["x"][k], log["xhat"][k], log["xbar"][k] = x, state.xhat, state.xbar
        log["u"][k], log["ubar"][k] = u, ubar
        log["z"][k] = s.H @ x
        log["w"][k], log["v"][k], log["xi"][k] = w, v, xi
        statuses.append("optimal")
        costs[k] = float(x @ artifact.Q @ x + u @ artifact.R_cost @ u)
        objectives[k] = sol.objective

        x = s.A @ x + s.B @ u + w
        state.xhat = observer_update(state.xhat, u, y, artifact.gains)
        state.xbar = nominal_update(state.xbar, ubar, artifact.gains)
        state.k += 1

    return TrajectoryLog(x=log["x"], xhat=log["xhat"], xbar=log["xbar"],
                         u=log["u"], ubar=log["ubar"], z=log["z"],
                         w=log["w"], v=log["v"], xi=log["xi"],
                         qp_status=statuses, stage_cost=costs,
                         objectives=objectives, xi0_in_tube=xi0_in, rng_id=rng_id)


def _distance_to_tube_projection(x: np.ndarray, R: HPolytope, n: int) -> float:
    """Euclidean distance from x to {(I I) xi : xi in R}."""
    M = np.hstack([np.eye(n), np.eye(n)])
    P = 2.0 * (M.T @ M)
    q = -2.0 * (M.T @ x)
    status = solve_qp(QpProblem(P=P, q=q, A_ub=R.H, b_ub=R.b))
    if not status.is_optimal:
        return float("nan")
    return float(np.sqrt(max(status.objective + x @ x, 0.0)))


def fit_geometric_decay(distances: np.ndarray, floor: float = 1e-8) -> dict:
    """Least squares c * lambda^k on log-distance, ignoring values below
    the floor; returns rate, prefactor, R^2, and the points used."""
    k = np.arange(len(distances))
    mask = np.asarray(distances) > floor
    n_pts = int(mask.sum())
    if n_pts < 2:
        return {"lambda": 0.0, "c": 0.0, "r2": 1.0, "n_points": n_pts}
    y = np.log(distances[mask])
    coeffs = np.polyfit(k[mask], y, 1)
    resid = y - np.polyval(coeffs, k[mask])
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 if ss_tot == 0 else 1.0 - float(np.sum(resid ** 2)) / ss_tot
    return {"lambda": float(np.exp(coeffs[0])), "c": float(np.exp(coeffs[1])),
            "r2": r2, "n_points": n_pts}


def audit(log: TrajectoryLog, plant: PlantModel, artifact: ControllerArtifact) -> dict:
    """Check every logged step against the controller's promises.

    Reports constraint violations (true output and input), tube exits,
    distance of the true state to the tube around the origin with a fitted
    geometric decay rate, and the accumulated finite-horizon cost.
    """
    R = artifact.tube.set
    z_bad = [int(k) for k in range(log.steps)
             if not plant.Z.contains(log.z[k], tol=_MEMBERSHIP_SLACK)]
    u_bad = [int(k) for k in range(log.steps)
             if not plant.U.contains(log.u[k], tol=_MEMBERSHIP_SLACK)]
    tube_bad = [int(k) for k in range(log.steps)
                if not R.contains(log.xi[k], tol=_MEMBERSHIP_SLACK)]
    distances = np.array([_distance_to_tube_projection(log.x[k], R, plant.sys.n)
                          for k in range(log.steps)])
    return {
        "violations": {"z": z_bad, "u": u_bad, "tube": tube_bad},
        "n_violations": len(z_bad) + len(u_bad) + len(tube_bad),
        "qp_all_optimal": all(st == "optimal" for st in log.qp_status),
        "xi0_in_tube": log.xi0_in_tube,
        "distances": distances.tolist(),
        "decay": fit_geometric_decay(distances),
        "cost": float(log.stage_cost.sum()),
        "rng_id": log.rng_id,
    }


def feasible_region_scan(artifact: ControllerArtifact,
                         axes: list[tuple[float, float, int]],
                         seed: int = 0) -> np.ndarray:
    """Feasibility of the MPC plan from a grid of nominal starts.

    Dense product grid in 2-D; in other dimensions the same number of points
    is sampled uniformly from the axis box. Returns rows (coords..., 0/1).
    """
    n = artifact.plant.sys.n
    if len(axes) != n:
        raise ValueError(f"need one (min, max, count) per state dimension ({n})")
    counts = [int(c) for _, _, c in axes]
    if any(c < 1 for c in counts):
        raise ValueError("grid counts must be positive")
    if n == 2:
        g0 = np.linspace(axes[0][0], axes[0][1], counts[0])
        g1 = np.linspace(axes[1][0], axes[1][1], counts[1])
        pts = np.array([(a, b) for a in g0 for b in g1])
    else:
        rng = np.random.default_rng(seed)
        total = int(np.prod(counts))
        lo = np.array([a[0] for a in axes])
        hi = np.array([a[1] for a in axes])
        pts = rng.uniform(lo, hi, size=(total, n))
    out = np.empty((pts.shape[0], n + 1))
    for i, p in enumerate(pts):
        try:
            solve_mpc(artifact, p)
            ok = 1.0
        except MpcInfeasible:
            ok = 0.0
        out[i] = np.concatenate([p, [ok]])
    return out


def scan_to_csv(scan: np.ndarray, path=None) -> str | None:
    n = scan.shape[1] - 1
    lines = [",".join([f"x{i}" for i in range(n)] + ["feasible"])]
    for row in scan:
        lines.append(",".join(repr(float(t)) for t in row[:-1]) + f",{int(row[-1])}")
    text = "\n".join(lines) + "\n"
    if path is None:
        return text
    with open(path, "w") as f:
        f.write(text)
    return None
