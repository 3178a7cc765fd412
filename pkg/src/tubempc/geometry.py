"""Halfspace-form polytope algebra where every set query is a linear program.

Sets are ``{x : Hx <= b}`` with rows normalized to unit Euclidean norm at
construction, so all tolerances are scale-free. Linear images ``M * base`` are
kept symbolic (:class:`MappedSet`); their support in direction ``a`` is the
support of the base in direction ``M'a``, which is what lets Minkowski-style
arithmetic run entirely on support LPs without ever materializing a sum.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import block_diag

from .errors import DimensionError, EmptySetError, SolverFailure
from .solvers import LpProblem, SolveStatus, solve_lp

DEFAULT_TOL = 1e-8


def _freeze(arr: np.ndarray) -> np.ndarray:
    arr = np.ascontiguousarray(arr, dtype=float)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class HPolytope:
    """Convex polyhedron {x : Hx <= b} with unit-norm facet rows.

    The representation is immutable after construction and safe to share
    across threads. Emptiness is allowed (and decidable via :meth:`is_empty`);
    all-zero facet rows are not.
    """

    H: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        H = np.atleast_2d(np.asarray(self.H, dtype=float))
        b = np.asarray(self.b, dtype=float).ravel()
        if H.ndim != 2 or H.shape[0] < 1:
            raise DimensionError("H must be a matrix with at least one row")
        if b.size != H.shape[0]:
            raise DimensionError(f"b has {b.size} entries for {H.shape[0]} rows")
        if not (np.all(np.isfinite(H)) and np.all(np.isfinite(b))):
            raise ValueError("polytope data must be finite")
        norms = np.linalg.norm(H, axis=1)
        if np.any(norms == 0.0):
            raise ValueError("all-zero facet normal")
        object.__setattr__(self, "H", _freeze(H / norms[:, None]))
        object.__setattr__(self, "b", _freeze(b / norms))

    @classmethod
    def from_box(cls, lower, upper) -> "HPolytope":
        """Axis-aligned box {x : lower <= x <= upper}."""
        lower = np.asarray(lower, dtype=float).ravel()
        upper = np.asarray(upper, dtype=float).ravel()
        if lower.size != upper.size:
            raise DimensionError("box bounds must have equal length")
        n = lower.size
        eye = np.eye(n)
        return cls(np.vstack([eye, -eye]), np.concatenate([upper, -lower]))

    @property
    def dim(self) -> int:
        return self.H.shape[1]

    @property
    def n_rows(self) -> int:
        return self.H.shape[0]

    def support(self, a) -> tuple[float, np.ndarray | None]:
        return support(self, a)

    def contains(self, x, tol: float = DEFAULT_TOL) -> bool | np.ndarray:
        """Membership test for a point (or a (m, dim) batch of points)."""
        x = np.asarray(x, dtype=float)
        if x.ndim == 1:
            return bool(np.all(self.H @ x <= self.b + tol))
        return np.all(x @ self.H.T <= self.b + tol, axis=1)

    def is_empty(self) -> bool:
        status = solve_lp(LpProblem(np.zeros(self.dim), "min", A_ub=self.H, b_ub=self.b))
        if status.kind == "infeasible":
            return True
        if status.is_optimal:
            return False
        raise SolverFailure(f"emptiness check failed: {status.detail}")

    def is_bounded(self) -> bool:
        """Boundedness along all +-e_i directions (hence in every direction)."""
        for i in range(self.dim):
            e = np.zeros(self.dim)
            for s in (1.0, -1.0):
                e[i] = s
                if not np.isfinite(support(self, e)[0]):
                    return False
            e[i] = 0.0
        return True

    def has_origin_interior(self, margin: float = 0.0) -> bool:
        """True iff 0 is strictly inside; rows are unit-norm so b_i is the
        Euclidean distance of facet i from the origin."""
        return bool(np.all(self.b > margin))

    def as_box(self, tol: float = 1e-12) -> tuple[np.ndarray, np.ndarray] | None:
        """Return (lower, upper) if every row is +-e_i, else None."""
        lower = np.full(self.dim, -np.inf)
        upper = np.full(self.dim, np.inf)
        for h, beta in zip(self.H, self.b):
            i = int(np.argmax(np.abs(h)))
            axis = np.zeros(self.dim)
            axis[i] = np.sign(h[i])
            if np.linalg.norm(h - axis) > tol:
                return None
            if h[i] > 0:
                upper[i] = min(upper[i], beta)
            else:
                lower[i] = max(lower[i], -beta)
        if not (np.all(np.isfinite(lower)) and np.all(np.isfinite(upper))):
            return None
        return lower, upper

    def to_json(self) -> dict:
        return {"H": self.H.tolist(), "b": self.b.tolist()}

    @classmethod
    def from_json(cls, data: dict) -> "HPolytope":
        return cls(np.asarray(data["H"]), np.asarray(data["b"]))


@dataclass(frozen=True)
class MappedSet:
    """Linear image M * base of a halfspace-form set, kept symbolic.

    Lower-dimensional images (rank-deficient M) are legal values; support in
    direction a equals the support of the base in direction M'a.
    """

    M: np.ndarray
    base: HPolytope

    def __post_init__(self):
        M = np.atleast_2d(np.asarray(self.M, dtype=float))
        if not np.all(np.isfinite(M)):
            raise ValueError("generator map must be finite")
        if M.shape[1] != self.base.dim:
            raise DimensionError(
                f"map has {M.shape[1]} columns but base lives in R^{self.base.dim}")
        object.__setattr__(self, "M", _freeze(M))

    @property
    def dim(self) -> int:
        return self.M.shape[0]

    def support(self, a) -> tuple[float, np.ndarray | None]:
        return support(self, a)


def support(P: HPolytope | MappedSet, a) -> tuple[float, np.ndarray | None]:
    """Support value max_{x in P} a'x and a maximizer.

    Returns ``(inf, None)`` when P is unbounded in direction a. Raises
    :class:`EmptySetError` if P is empty.
    """
    a = np.asarray(a, dtype=float).ravel()
    if not np.all(np.isfinite(a)):
        raise ValueError("support direction must be finite")
    if isinstance(P, MappedSet):
        if a.size != P.dim:
            raise DimensionError(f"direction has {a.size} entries, set lives in R^{P.dim}")
        value, point = support(P.base, P.M.T @ a)
        return value, None if point is None else P.M @ point
    if a.size != P.dim:
        raise DimensionError(f"direction has {a.size} entries, set lives in R^{P.dim}")
    status = solve_lp(LpProblem(a, "max", A_ub=P.H, b_ub=P.b))
    if status.is_optimal:
        return float(status.objective), status.x
    if status.kind == "unbounded":
        return np.inf, None
    if status.kind == "infeasible":
        raise EmptySetError("support of an empty set")
    raise SolverFailure(f"support LP failed: {status.detail}")


def pontryagin_diff(A: HPolytope, C: np.ndarray | None,
                    B: HPolytope | MappedSet) -> HPolytope:
    """Pontryagin difference A (-) C*B computed row-wise via support LPs.

    Row i of the result keeps A's normal with offset b_i - S_B(C' h_i). The
    result may be empty; emptiness is reported by the returned set, not raised.
    """
    if C is None:
        C = np.eye(A.dim)
    C = np.atleast_2d(np.asarray(C, dtype=float))
    if C.shape[0] != A.dim:
        raise DimensionError(f"map has {C.shape[0]} rows, minuend lives in R^{A.dim}")
    if C.shape[1] != B.dim:
        raise DimensionError(f"map has {C.shape[1]} columns, subtrahend lives in R^{B.dim}")
    shift = np.empty(A.n_rows)
    for i, h in enumerate(A.H):
        value, _ = support(B, C.T @ h)
        if not np.isfinite(value):
            raise ValueError("subtrahend must be bounded in the mapped directions")
        shift[i] = value
    return HPolytope(A.H, A.b - shift)


def is_subset(P: HPolytope | MappedSet, Q: HPolytope, tol: float = DEFAULT_TOL) -> bool:
    """True iff P is contained in Q up to tol: S_P(h_i) <= b_i + tol for all rows."""
    if P.dim != Q.dim:
        raise DimensionError("sets live in different ambient dimensions")
    for h, beta in zip(Q.H, Q.b):
        value, _ = support(P, h)
        if value > beta + tol:
            return False
    return True


def intersect(P: HPolytope, Q: HPolytope) -> HPolytope:
    """Exact intersection by stacking rows."""
    if P.dim != Q.dim:
        raise DimensionError("cannot intersect sets of different dimension")
    return HPolytope(np.vstack([P.H, Q.H]), np.concatenate([P.b, Q.b]))


def remove_redundancy(P: HPolytope, tol: float = DEFAULT_TOL) -> HPolytope:
    """Drop rows whose removal cannot change the set.

    A row is dropped when its supremum over the remaining rows stays below
    b_i - tol, so near-active rows are kept and set equality is preserved.
    """
    if P.n_rows == 1:
        return P
    keep = np.ones(P.n_rows, dtype=bool)
    for i in range(P.n_rows):
        keep[i] = False
        others = keep.copy()
        if not others.any():
            keep[i] = True
            continue
        status = solve_lp(LpProblem(P.H[i], "max", A_ub=P.H[others], b_ub=P.b[others]))
        if status.is_optimal and status.objective <= P.b[i] - tol:
            continue  # redundant, stays dropped
        if status.kind == "infeasible":
            raise EmptySetError("redundancy removal on an empty set")
        if status.kind == "failure":
            raise SolverFailure(f"redundancy LP failed: {status.detail}")
        keep[i] = True
    return HPolytope(P.H[keep], P.b[keep])


def scale(P: HPolytope, alpha: float) -> HPolytope:
    """Scale about the origin: alpha * P, alpha >= 0."""
    if alpha < 0:
        raise ValueError("scale factor must be nonnegative")
    return HPolytope(P.H, alpha * P.b)


def cross_product(P: HPolytope, Q: HPolytope) -> HPolytope:
    """Cartesian product P x Q as a block-diagonal stack."""
    return HPolytope(block_diag(P.H, Q.H), np.concatenate([P.b, Q.b]))


def bounding_box(S: HPolytope | MappedSet) -> tuple[np.ndarray, np.ndarray]:
    """Tight axis-aligned bounds of S via 2*dim support LPs."""
    n = S.dim
    lower = np.empty(n)
    upper = np.empty(n)
    e = np.zeros(n)
    for i in range(n):
        e[i] = 1.0
        upper[i], _ = support(S, e)
        e[i] = -1.0
        value, _ = support(S, e)
        lower[i] = -value
        e[i] = 0.0
    if not (np.all(np.isfinite(lower)) and np.all(np.isfinite(upper))):
        raise ValueError("set is unbounded; no bounding box exists")
    return lower, upper
