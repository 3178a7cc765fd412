"""Robust positively invariant (RPI) set computation for e+ = A e + delta.

The primary method stacks facet normals generated from powers of the dynamics
through the output map and finds the smallest invariant offsets with a single
linear program. Two comparators are included: a container-based recursion that
grows the face set until a fixed point, and the same single LP on regular
polygon normals (2-D only). An independent verifier certifies invariance and
constraint admissibility of any candidate set.
"""

from __future__ import annotations

import time
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .errors import RpiFailure, SolverFailure, StabilityError, DimensionError
from .geometry import (DEFAULT_TOL, HPolytope, MappedSet, is_subset,
                       remove_redundancy, scale, support)
from .lti import observability_rank, spectral_radius
from .solvers import LpProblem, solve_lp

STACKED_LP = "stacked_lp"
CONTAINER_RECURSION = "container_recursion"
POLYGON_LP = "polygon_lp"

_ZERO_ROW_TOL = 1e-12
_PARALLEL_ANGLE = 1e-10


@dataclass(frozen=True)
class ErrorSystem:
    """Autonomous disturbed system e+ = A e + delta with output phi = E e.

    delta ranges over ``disturbance`` (halfspace form, or a linear image of
    one) and the output must stay in ``output_bounds``. A must be Schur
    stable, (A, E) observable, and the sets compact with the origin interior
    (for a mapped disturbance the conditions are checked on its base set,
    since the image may legitimately be lower-dimensional).
    """

    A: np.ndarray
    E: np.ndarray
    disturbance: HPolytope | MappedSet
    output_bounds: HPolytope

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.A, dtype=float))
        E = np.atleast_2d(np.asarray(self.E, dtype=float))
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "E", E)
        n = A.shape[0]
        if A.shape != (n, n):
            raise DimensionError("dynamics matrix must be square")
        if E.shape[1] != n:
            raise DimensionError("output map must have one column per state")
        rho = spectral_radius(A)
        if rho >= 1.0:
            raise StabilityError(f"dynamics must be Schur stable (spectral radius {rho:.6f})")
        if observability_rank(A, E) < n:
            raise ValueError("(A, E) must be observable")
        if self.disturbance.dim != n:
            raise DimensionError("disturbance set must live in the state space")
        base = self.disturbance.base if isinstance(self.disturbance, MappedSet) else self.disturbance
        if not base.is_bounded():
            raise ValueError("disturbance set must be compact")
        if not base.has_origin_interior():
            raise ValueError("disturbance set must contain the origin in its interior")
        if self.output_bounds.dim != E.shape[0]:
            raise DimensionError("output bound set must live in the output space")
        if not self.output_bounds.is_bounded():
            raise ValueError("output bound set must be compact")
        if not self.output_bounds.has_origin_interior():
            raise ValueError("output bound set must contain the origin in its interior")

    @property
    def n(self) -> int:
        return self.A.shape[0]


@dataclass(frozen=True)
class RpiCertificate:
    """Outcome of :func:`verify_rpi`; truthy iff the set is invariant."""

    invariant: bool
    admissible: bool
    min_slack: float
    slacks: np.ndarray

    def __bool__(self) -> bool:
        return self.invariant


@dataclass(frozen=True)
class RpiResult:
    """An RPI set together with how it was generated."""

    set: HPolytope
    k: int
    method: str
    diagnostics: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return {
            "schema": "tubempc.rpi/1",
            "set": self.set.to_json(),
            "k": self.k,
            "method": self.method,
            "diagnostics": self.diagnostics,
        }

    @classmethod
    def from_json(cls, data: dict) -> "RpiResult":
        return cls(set=HPolytope.from_json(data["set"]), k=int(data["k"]),
                   method=data["method"], diagnostics=dict(data.get("diagnostics", {})))


def _drop_zero_rows(G: np.ndarray, what: str) -> np.ndarray:
    norms = np.linalg.norm(G, axis=1)
    if np.any(norms <= _ZERO_ROW_TOL):
        warnings.warn(f"dropping {int(np.sum(norms <= _ZERO_ROW_TOL))} zero rows from {what}")
        G = G[norms > _ZERO_ROW_TOL]
    return G


def _dedup_parallel(H: np.ndarray) -> np.ndarray:
    """Collapse duplicate facet directions (angle below 1e-10 rad) of unit rows."""
    keep = np.ones(H.shape[0], dtype=bool)
    gram = np.clip(H @ H.T, -1.0, 1.0)
    angles = np.arccos(gram)
    for i in range(H.shape[0]):
        if not keep[i]:
            continue
        dup = (angles[i] < _PARALLEL_ANGLE) & keep
        dup[i] = False
        keep[dup] = False
    return H[keep]


def face_matrix(sys: ErrorSystem, k: int) -> np.ndarray:
    """Stack of output-constraint normals pushed through powers of the
    dynamics: rows H_phi E A^j for j = 0..k, zero rows dropped."""
    if k < 0:
        raise ValueError("k must be nonnegative")
    G = sys.output_bounds.H @ sys.E
    blocks = [G]
    for _ in range(k):
        G = G @ sys.A
        blocks.append(G)
    return _drop_zero_rows(np.vstack(blocks), "face matrix")


def _disturbance_parts(sys: ErrorSystem) -> tuple[np.ndarray, HPolytope]:
    d = sys.disturbance
    if isinstance(d, MappedSet):
        return d.M, d.base
    return np.eye(sys.n), d


def smallest_rpi_offsets(H_r: np.ndarray, sys: ErrorSystem) -> tuple[np.ndarray, float]:
    """Smallest offsets b making {e : H_r e <= b} an RPI set, via one LP.

    For each facet i the LP carries a state block xi_i (worst propagated
    point) and a disturbance block om_i (worst disturbance); maximizing the
    summed offsets lands on the unique fixed point where every facet offset
    equals its own one-step support. An unbounded objective means no RPI set
    exists with these normals.
    """
    H_r = np.atleast_2d(np.asarray(H_r, dtype=float))
    n_r, n_e = H_r.shape
    if n_e != sys.n:
        raise DimensionError("facet normals must live in the state space")
    M_d, base = _disturbance_parts(sys)
    H_d, b_d = base.H, base.b
    n_d = base.dim
    m_d = H_d.shape[0]

    n_var = 2 * n_r + n_r * n_e + n_r * n_d
    xi0 = 2 * n_r
    om0 = xi0 + n_r * n_e

    rows, cols, data = [], [], []

    def add(r, c, v):
        rows.append(np.asarray(r, dtype=np.int64).ravel())
        cols.append(np.asarray(c, dtype=np.int64).ravel())
        data.append(np.asarray(v, dtype=float).ravel())

    # c_i - (h_i' A) xi_i <= 0
    HA = H_r @ sys.A
    r0 = 0
    idx = np.arange(n_r)
    add(r0 + idx, idx, np.ones(n_r))
    add(np.repeat(r0 + idx, n_e),
        xi0 + (idx[:, None] * n_e + np.arange(n_e)[None, :]),
        -HA)

    # H_r xi_i - c - d <= 0   (n_r rows per block i)
    r1 = n_r
    blk = np.arange(n_r * n_r)
    i_of = blk // n_r  # which xi block
    j_of = blk % n_r   # which facet row
    add(r1 + blk, j_of, -np.ones(n_r * n_r))
    add(r1 + blk, n_r + j_of, -np.ones(n_r * n_r))
    add(np.repeat(r1 + blk, n_e),
        xi0 + (i_of[:, None] * n_e + np.arange(n_e)[None, :]),
        np.tile(H_r, (n_r, 1)))

    # d_i - (h_i' M_d) om_i <= 0
    r2 = r1 + n_r * n_r
    HM = H_r @ M_d
    add(r2 + idx, n_r + idx, np.ones(n_r))
    add(np.repeat(r2 + idx, n_d),
        om0 + (idx[:, None] * n_d + np.arange(n_d)[None, :]),
        -HM)

    # H_d om_i <= b_d
    r3 = r2 + n_r
    blk_d = np.arange(n_r * m_d)
    i_d = blk_d // m_d
    add(np.repeat(r3 + blk_d, n_d),
        om0 + (i_d[:, None] * n_d + np.arange(n_d)[None, :]),
        np.tile(H_d, (n_r, 1)))

    n_con = r3 + n_r * m_d
    A_ub = sp.coo_matrix(
        (np.concatenate(data), (np.concatenate(rows), np.concatenate(cols))),
        shape=(n_con, n_var)).tocsr()
    b_ub = np.concatenate([np.zeros(r3), np.tile(b_d, n_r)])
    c = np.zeros(n_var)
    c[:2 * n_r] = 1.0

    status = solve_lp(LpProblem(c, "max", A_ub=A_ub, b_ub=b_ub))
    if status.kind == "unbounded":
        raise RpiFailure("no RPI set exists for the chosen facet normals", reason="unbounded")
    if status.kind == "infeasible":
        # zero is always feasible when the disturbance base contains the origin
        raise SolverFailure("RPI offset LP reported infeasible; this indicates numerical failure")
    if not status.is_optimal:
        raise SolverFailure(f"RPI offset LP failed: {status.detail}")
    b_r = status.x[:n_r] + status.x[n_r:2 * n_r]
    return b_r, float(status.objective)


def compute_rpi(sys: ErrorSystem, k: int, tol: float = DEFAULT_TOL) -> RpiResult:
    """RPI set on the stacked face normals of order k, via one LP.

    Raises :class:`RpiFailure` (reason ``"unbounded"``) when no RPI set exists
    with those normals; callers may retry with a larger k.
    """
    t0 = time.perf_counter()
    H_raw = face_matrix(sys, k)
    H_unit = H_raw / np.linalg.norm(H_raw, axis=1)[:, None]
    H_lp = _dedup_parallel(H_unit)
    b_r, objective = smallest_rpi_offsets(H_lp, sys)
    R = remove_redundancy(HPolytope(H_lp, b_r), tol)
    cert = verify_rpi(R, sys, tol=max(tol, 1e-7))
    if not cert.invariant:
        raise SolverFailure(
            f"computed set failed invariance verification (min slack {cert.min_slack:.3e})")
    diagnostics = {
        "lp_objective": objective,
        "n_rows_stacked": int(H_raw.shape[0]),
        "n_rows_lp": int(H_lp.shape[0]),
        "n_rows_final": int(R.n_rows),
        "wall_time_s": time.perf_counter() - t0,
        "admissible": cert.admissible,
    }
    return RpiResult(set=R, k=k, method=STACKED_LP, diagnostics=diagnostics)


def find_min_k(sys: ErrorSystem, k_max: int, k_start: int = 0,
               tol: float = DEFAULT_TOL) -> RpiResult:
    """Increase k until the single-LP method succeeds; smallest k wins."""
    if k_max < k_start:
        raise ValueError("k_max must be at least k_start")
    for k in range(k_start, k_max + 1):
        try:
            return compute_rpi(sys, k, tol=tol)
        except RpiFailure as exc:
            if exc.reason != "unbounded":
                raise
    raise RpiFailure(f"no RPI set found for any k in [{k_start}, {k_max}]",
                     reason="exhausted_k")


def decay_steps(sys: ErrorSystem, eps: float, cap: int = 10_000) -> int:
    """Smallest k with (1+eps) A^k D inside eps D, for halfspace disturbance D."""
    if eps <= 0:
        raise ValueError("eps must be positive")
    D = sys.disturbance
    if not isinstance(D, HPolytope):
        raise ValueError("decay test needs the disturbance in halfspace form")
    target = scale(D, eps / (1.0 + eps))
    A_pow = sys.A.copy()
    for k in range(1, cap + 1):
        if is_subset(MappedSet(A_pow, D), target):
            return k
        A_pow = A_pow @ sys.A
    raise RpiFailure(f"decay index not found within {cap} steps", reason="exhausted_k")


def _container_offsets(sys: ErrorSystem, eps: float, k_star: int) -> tuple[np.ndarray, np.ndarray]:
    """Full-block container rows G0 = H_phi E and offsets
    (1+eps) * sum_(j<k_star) S_D(g' A^j), zero rows included."""
    D = sys.disturbance
    G0 = sys.output_bounds.H @ sys.E
    b = np.zeros(G0.shape[0])
    G_pow = G0.copy()
    for _ in range(k_star):
        for i in range(G0.shape[0]):
            b[i] += support(D, G_pow[i])[0]
        G_pow = G_pow @ sys.A
    return G0, (1.0 + eps) * b


def container_set(sys: ErrorSystem, eps: float, k_star: int) -> HPolytope:
    """Outer container with output-constraint normals pushed through the
    output map and geometric-tail offsets."""
    G0, b = _container_offsets(sys, eps, k_star)
    live = np.linalg.norm(G0, axis=1) > _ZERO_ROW_TOL
    if not live.all():
        warnings.warn(f"dropping {int(np.sum(~live))} zero rows from container normals")
    return HPolytope(G0[live], b[live])


def container_recursion(sys: ErrorSystem, eps: float, cap: int = 10_000,
                        tol: float = DEFAULT_TOL) -> tuple[HPolytope, int]:
    """Largest RPI set inside the eps-container, grown facet block by facet
    block until two consecutive iterates are equal as sets.

    Returns the fixed point and the number of iterations it took.
    """
    D = sys.disturbance
    k_star = decay_steps(sys, eps, cap=cap)
    G0, r = _container_offsets(sys, eps, k_star)
    norms0 = np.linalg.norm(G0, axis=1)

    live0 = norms0 > _ZERO_ROW_TOL
    if not live0.any():
        raise ValueError("output map annihilates every constraint normal")
    P_prev = remove_redundancy(HPolytope(G0[live0], r[live0]), tol)
    G_prev = G0
    for k in range(1, cap + 1):
        shrink = np.array([support(D, g)[0] for g in G_prev])
        r = r - shrink
        G_new = G_prev @ sys.A
        norms = np.linalg.norm(G_new, axis=1)
        live = norms > _ZERO_ROW_TOL
        if np.any(r[~live] < -tol):
            raise RpiFailure("container recursion produced an infeasible zero row; "
                             "assumptions violated", reason="unbounded")
        if live.any():
            candidate = HPolytope(np.vstack([P_prev.H, G_new[live]]),
                                  np.concatenate([P_prev.b, r[live]]))
        else:
            candidate = P_prev
        P_new = remove_redundancy(candidate, tol)
        if is_subset(P_prev, P_new, tol) and is_subset(P_new, P_prev, tol):
            return P_new, k
        P_prev = P_new
        G_prev = G_new
    raise RpiFailure(f"container recursion did not reach a fixed point in {cap} "
                     "iterations", reason="exhausted_k")


def polygon_faces(r: int) -> np.ndarray:
    """Unit normals of an r-sided regular polygon (2-D), angles 2*pi*i/r."""
    if r < 3:
        raise DimensionError("a polygon needs at least 3 sides")
    angles = 2.0 * np.pi * np.arange(r) / r
    return np.column_stack([np.cos(angles), np.sin(angles)])


def verify_rpi(R: HPolytope, sys: ErrorSystem, tol: float = DEFAULT_TOL) -> RpiCertificate:
    """Certify invariance facet by facet: S_R(h'A) + S_D(h) <= b + tol.

    Also reports whether the image E*R stays inside the output bounds.
    """
    slacks = np.empty(R.n_rows)
    for i, (h, beta) in enumerate(zip(R.H, R.b)):
        flow, _ = support(R, sys.A.T @ h)
        dist, _ = support(sys.disturbance, h)
        slacks[i] = beta - flow - dist
    invariant = bool(np.all(slacks >= -tol))
    admissible = is_subset(MappedSet(sys.E, R), sys.output_bounds, tol)
    return RpiCertificate(invariant=invariant, admissible=admissible,
                          min_slack=float(slacks.min()), slacks=slacks)
