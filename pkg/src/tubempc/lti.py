"""Gains and certificates for linear discrete-time systems.

Discrete algebraic Riccati solutions, LQR and observer gains, spectral radii
and Kalman rank tests: the stock ingredients a tube controller needs before
any set computation starts.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import DimensionError, NonConvergence, StabilityError

DARE_RESIDUAL_TOL = 1e-9
_DARE_MAX_ITER = 10_000


@dataclass(frozen=True)
class LtiSystem:
    """x+ = Ax + Bu, y = Cx, z = Hx."""

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    H: np.ndarray

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.A, dtype=float))
        B = np.atleast_2d(np.asarray(self.B, dtype=float))
        C = np.atleast_2d(np.asarray(self.C, dtype=float))
        Hm = np.atleast_2d(np.asarray(self.H, dtype=float))
        n = A.shape[0]
        if A.shape != (n, n):
            raise DimensionError("A must be square")
        if B.shape[0] != n or C.shape[1] != n or Hm.shape[1] != n:
            raise DimensionError("B, C, H must share the state dimension")
        for name, M in (("A", A), ("B", B), ("C", C), ("H", Hm)):
            if not np.all(np.isfinite(M)):
                raise ValueError(f"{name} must be finite")
            object.__setattr__(self, name, M)

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def m(self) -> int:
        return self.B.shape[1]

    @property
    def p(self) -> int:
        return self.C.shape[0]

    @property
    def o(self) -> int:
        return self.H.shape[0]


def spectral_radius(M) -> float:
    M = np.atleast_2d(np.asarray(M, dtype=float))
    if M.shape[0] != M.shape[1]:
        raise DimensionError("spectral radius needs a square matrix")
    return float(np.max(np.abs(np.linalg.eigvals(M))))


def controllability_rank(A, B) -> int:
    """Rank of [B, AB, ..., A^(n-1)B]."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    B = np.atleast_2d(np.asarray(B, dtype=float))
    mats = [B]
    for _ in range(A.shape[0] - 1):
        mats.append(A @ mats[-1])
    K = np.hstack(mats)
    return int(np.linalg.matrix_rank(K, tol=1e-8 * max(np.linalg.norm(K, 2), 1e-300)))


def observability_rank(A, C) -> int:
    """Rank of [C; CA; ...; CA^(n-1)]."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    C = np.atleast_2d(np.asarray(C, dtype=float))
    mats = [C]
    for _ in range(A.shape[0] - 1):
        mats.append(mats[-1] @ A)
    O = np.vstack(mats)
    return int(np.linalg.matrix_rank(O, tol=1e-8 * max(np.linalg.norm(O, 2), 1e-300)))


def dare_residual(A, B, Q, R, P) -> float:
    """Inf-norm of A'PA - P - A'PB (R + B'PB)^-1 B'PA + Q."""
    G = A.T @ P @ B
    res = A.T @ P @ A - P - G @ np.linalg.solve(R + B.T @ P @ B, G.T) + Q
    return float(np.max(np.abs(res)))


def solve_dare(A, B, Q, R) -> np.ndarray:
    """Stabilizing solution of the discrete algebraic Riccati equation.

    Solved by the dense Schur method, then polished by fixed-point iteration
    until the residual drops below 1e-9 in inf-norm. Requires (A, B)
    controllable and Q, R symmetric positive definite.
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    B = np.atleast_2d(np.asarray(B, dtype=float))
    Q = np.atleast_2d(np.asarray(Q, dtype=float))
    R = np.atleast_2d(np.asarray(R, dtype=float))
    try:
        P = scipy.linalg.solve_discrete_are(A, B, Q, R)
    except Exception:
        P = Q.copy()
    P = 0.5 * (P + P.T)
    for _ in range(_DARE_MAX_ITER):
        if dare_residual(A, B, Q, R, P) <= DARE_RESIDUAL_TOL:
            break
        G = A.T @ P @ B
        P = A.T @ P @ A - G @ np.linalg.solve(R + B.T @ P @ B, G.T) + Q
        P = 0.5 * (P + P.T)
    else:
        raise NonConvergence("Riccati iteration did not reach residual 1e-9")
    if np.min(np.linalg.eigvalsh(P)) <= 0:
        raise NonConvergence("Riccati solution is not positive definite")
    return P


def lqr_gain(A, B, Q, R) -> np.ndarray:
    """Infinite-horizon LQR gain K_f with u = K_f x; A + B K_f is Schur."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    B = np.atleast_2d(np.asarray(B, dtype=float))
    P = solve_dare(A, B, Q, R)
    K = -np.linalg.solve(np.atleast_2d(R) + B.T @ P @ B, B.T @ P @ A)
    if spectral_radius(A + B @ K) >= 1.0:
        raise StabilityError("LQR gain failed to stabilize the closed loop")
    return K


def observer_gain(A, C, Q_o=None, R_o=None) -> np.ndarray:
    """Observer gain L with A - LC Schur, via LQR on the dual pair (A', C').

    Defaults Q_o = R_o = I; the weights are a design choice, not dictated by
    the estimator structure.
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    C = np.atleast_2d(np.asarray(C, dtype=float))
    n, p = A.shape[0], C.shape[0]
    Q_o = np.eye(n) if Q_o is None else np.atleast_2d(np.asarray(Q_o, dtype=float))
    R_o = np.eye(p) if R_o is None else np.atleast_2d(np.asarray(R_o, dtype=float))
    K_dual = lqr_gain(A.T, C.T, Q_o, R_o)
    L = -K_dual.T
    if spectral_radius(A - L @ C) >= 1.0:
        raise StabilityError("observer gain failed to stabilize A - LC")
    return L


def state_cost_from_output_weight(H, Q_z, gamma: float = 1e-6) -> np.ndarray:
    """Lift an output-space weight to the state: H'Q_z H + gamma*I."""
    H = np.atleast_2d(np.asarray(H, dtype=float))
    Q_z = np.atleast_2d(np.asarray(Q_z, dtype=float))
    return H.T @ Q_z @ H + gamma * np.eye(H.shape[1])


@dataclass(frozen=True)
class GainSet:
    """Tube gain K, observer gain L, terminal LQR gain K_f, terminal cost P.

    Construction verifies all three closed loops are Schur stable and that P
    is symmetric positive definite.
    """

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    K: np.ndarray
    L: np.ndarray
    K_f: np.ndarray
    P: np.ndarray

    def __post_init__(self):
        for name in ("A", "B", "C", "K", "L", "K_f", "P"):
            object.__setattr__(self, name, np.atleast_2d(np.asarray(getattr(self, name), dtype=float)))
        rho_K = spectral_radius(self.A + self.B @ self.K)
        rho_L = spectral_radius(self.A - self.L @ self.C)
        rho_f = spectral_radius(self.A + self.B @ self.K_f)
        if rho_K >= 1.0:
            raise StabilityError(f"A + BK has spectral radius {rho_K:.6f}")
        if rho_L >= 1.0:
            raise StabilityError(f"A - LC has spectral radius {rho_L:.6f}")
        if rho_f >= 1.0:
            raise StabilityError(f"A + BK_f has spectral radius {rho_f:.6f}")
        if np.max(np.abs(self.P - self.P.T)) > 1e-8:
            raise ValueError("terminal cost must be symmetric")
        if np.min(np.linalg.eigvalsh(self.P)) <= 0:
            raise ValueError("terminal cost must be positive definite")
