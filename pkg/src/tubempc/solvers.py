"""Thin, swappable backend for linear and convex quadratic programs.

Everything upstream talks to :func:`solve_lp` / :func:`solve_qp` through the
problem dataclasses below, so the concrete solvers (HiGHS via
``scipy.optimize.linprog`` for LPs, Clarabel for QPs) can be swapped without
touching callers. Both backends are deterministic: identical problems yield
identical iterates and objectives.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.optimize import linprog

from .errors import DimensionError

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"
FAILURE = "failure"

_FREE = (-np.inf, np.inf)


def _as_2d(M) -> np.ndarray | sp.spmatrix:
    if sp.issparse(M):
        return M.tocsr()
    return np.atleast_2d(np.asarray(M, dtype=float))


@dataclass(frozen=True)
class SolveStatus:
    """Outcome of a solve: kind plus (for optimal) point and objective."""

    kind: str
    x: np.ndarray | None = None
    objective: float | None = None
    detail: str = ""
    ineq_duals: np.ndarray | None = None

    @property
    def is_optimal(self) -> bool:
        return self.kind == OPTIMAL


@dataclass(frozen=True)
class LpProblem:
    """max/min c'x subject to A_ub x <= b_ub, A_eq x = b_eq, bounds.

    Variables are free unless ``bounds`` (a per-variable list of
    ``(lo, hi)`` with ``None`` for unbounded ends) says otherwise.
    """

    c: np.ndarray
    sense: str = "max"
    A_ub: np.ndarray | sp.spmatrix | None = None
    b_ub: np.ndarray | None = None
    A_eq: np.ndarray | sp.spmatrix | None = None
    b_eq: np.ndarray | None = None
    bounds: list[tuple[float | None, float | None]] | None = None

    def __post_init__(self):
        object.__setattr__(self, "c", np.asarray(self.c, dtype=float).ravel())
        if self.sense not in ("max", "min"):
            raise ValueError(f"sense must be 'max' or 'min', got {self.sense!r}")
        if not np.all(np.isfinite(self.c)):
            raise ValueError("objective vector must be finite")
        n = self.c.size
        for name in ("A_ub", "A_eq"):
            A = getattr(self, name)
            if A is None:
                continue
            A = _as_2d(A)
            object.__setattr__(self, name, A)
            if A.shape[1] != n:
                raise DimensionError(f"{name} has {A.shape[1]} columns, expected {n}")
            b = np.asarray(getattr(self, name.replace("A", "b")), dtype=float).ravel()
            object.__setattr__(self, name.replace("A", "b"), b)
            if b.size != A.shape[0]:
                raise DimensionError(f"{name}/rhs row mismatch: {A.shape[0]} vs {b.size}")
            if not np.all(np.isfinite(b)):
                raise ValueError("constraint right-hand sides must be finite")
        if self.bounds is not None and len(self.bounds) != n:
            raise DimensionError("bounds must list one interval per variable")

    @property
    def n(self) -> int:
        return self.c.size


# defaults (1e-7) leave support values too loose for set-inclusion checks
# downstream, so invariance certificates would carry solver noise
_LP_OPTIONS = {"primal_feasibility_tolerance": 1e-9,
               "dual_feasibility_tolerance": 1e-9}


def solve_lp(p: LpProblem) -> SolveStatus:
    """Solve an LP; never raises on pathological input, returns a status."""
    sign = -1.0 if p.sense == "max" else 1.0
    bounds = p.bounds if p.bounds is not None else [_FREE] * p.n
    try:
        res = linprog(
            sign * p.c,
            A_ub=p.A_ub,
            b_ub=p.b_ub,
            A_eq=p.A_eq,
            b_eq=p.b_eq,
            bounds=bounds,
            method="highs",
            options=dict(_LP_OPTIONS),
        )
        if res.status == 2:
            # presolve cannot always tell infeasible from unbounded; re-solve
            # without it so the two outcomes are reported faithfully
            res = linprog(sign * p.c, A_ub=p.A_ub, b_ub=p.b_ub, A_eq=p.A_eq,
                          b_eq=p.b_eq, bounds=bounds, method="highs",
                          options={"presolve": False, **_LP_OPTIONS})
    except Exception as exc:  # malformed data the validators missed
        return SolveStatus(FAILURE, detail=str(exc))
    if res.status == 0:
        duals = None
        if res.ineqlin is not None and p.A_ub is not None:
            duals = np.asarray(res.ineqlin.marginals, dtype=float)
        return SolveStatus(OPTIMAL, x=np.asarray(res.x, dtype=float),
                           objective=sign * res.fun, ineq_duals=duals)
    if res.status == 2:
        return SolveStatus(INFEASIBLE, detail=res.message)
    if res.status == 3:
        return SolveStatus(UNBOUNDED, detail=res.message)
    return SolveStatus(FAILURE, detail=res.message)


@dataclass(frozen=True)
class QpProblem:
    """min 0.5 x'Px + q'x subject to A_ub x <= b_ub, A_eq x = b_eq.

    P must be symmetric (within 1e-10) and positive semidefinite (eigenvalues
    above -1e-9); both are checked at construction.
    """

    P: np.ndarray | sp.spmatrix
    q: np.ndarray
    A_ub: np.ndarray | sp.spmatrix | None = None
    b_ub: np.ndarray | None = None
    A_eq: np.ndarray | sp.spmatrix | None = None
    b_eq: np.ndarray | None = None

    def __post_init__(self):
        P = self.P.tocsc() if sp.issparse(self.P) else sp.csc_matrix(np.atleast_2d(self.P))
        object.__setattr__(self, "P", P)
        object.__setattr__(self, "q", np.asarray(self.q, dtype=float).ravel())
        n = P.shape[0]
        if P.shape[0] != P.shape[1] or self.q.size != n:
            raise DimensionError("quadratic cost must be square and match q")
        asym = abs(P - P.T).max() if P.nnz else 0.0
        if asym > 1e-10:
            raise ValueError(f"quadratic cost not symmetric (asymmetry {asym:.2e})")
        min_eig = np.linalg.eigvalsh(P.toarray()).min() if n else 0.0
        if min_eig < -1e-9:
            raise ValueError(f"quadratic cost not PSD (min eigenvalue {min_eig:.2e})")
        for name in ("A_ub", "A_eq"):
            A = getattr(self, name)
            if A is None:
                continue
            A = A.tocsc() if sp.issparse(A) else sp.csc_matrix(np.atleast_2d(A))
            object.__setattr__(self, name, A)
            if A.shape[1] != n:
                raise DimensionError(f"{name} has {A.shape[1]} columns, expected {n}")
            b = np.asarray(getattr(self, name.replace("A", "b")), dtype=float).ravel()
            object.__setattr__(self, name.replace("A", "b"), b)
            if b.size != A.shape[0]:
                raise DimensionError(f"{name}/rhs row mismatch")

    @property
    def n(self) -> int:
        return self.q.size


def default_qp_tol() -> float:
    """QP tolerance, overridable through the TUBEMPC_SOLVER_TOL env var."""
    return float(os.environ.get("TUBEMPC_SOLVER_TOL", 1e-9))


def solve_qp(p: QpProblem, tol: float | None = None) -> SolveStatus:
    """Solve a convex QP with Clarabel; statuses mirror :func:`solve_lp`."""
    import clarabel

    if tol is None:
        tol = default_qp_tol()

    blocks, rhs, cones = [], [], []
    if p.A_eq is not None and p.A_eq.shape[0]:
        blocks.append(p.A_eq)
        rhs.append(p.b_eq)
        cones.append(clarabel.ZeroConeT(p.A_eq.shape[0]))
    if p.A_ub is not None and p.A_ub.shape[0]:
        blocks.append(p.A_ub)
        rhs.append(p.b_ub)
        cones.append(clarabel.NonnegativeConeT(p.A_ub.shape[0]))
    if blocks:
        A = sp.vstack(blocks, format="csc")
        b = np.concatenate(rhs)
    else:
        A = sp.csc_matrix((0, p.n))
        b = np.zeros(0)

    settings = clarabel.DefaultSettings()
    settings.verbose = False
    settings.tol_gap_abs = tol
    settings.tol_gap_rel = tol
    settings.tol_feas = tol
    try:
        solver = clarabel.DefaultSolver(p.P, p.q, A, b, cones, settings)
        sol = solver.solve()
    except Exception as exc:
        return SolveStatus(FAILURE, detail=str(exc))
    status = str(sol.status)
    if status in ("Solved", "AlmostSolved"):
        detail = "" if status == "Solved" else "reduced accuracy"
        return SolveStatus(OPTIMAL, x=np.asarray(sol.x, dtype=float),
                           objective=float(sol.obj_val), detail=detail)
    if status in ("PrimalInfeasible", "AlmostPrimalInfeasible"):
        return SolveStatus(INFEASIBLE, detail=status)
    if status in ("DualInfeasible", "AlmostDualInfeasible"):
        return SolveStatus(UNBOUNDED, detail=status)
    return SolveStatus(FAILURE, detail=status)
