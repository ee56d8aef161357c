"""Dense real linear algebra used throughout the package.

Matrix exponential (scaling and squaring, degree-13 Pade), zero-order-hold
pairs, input and norm integrals of the exponential, a checked symmetric
eigensolver and a Newton-Kleinman solver for the shifted Riccati equation
that produces the Lyapunov matrix of the consensus protocol.

All functions are pure; inputs are never modified.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_continuous_lyapunov

from .errors import ConvergenceError, DimensionError, UncontrollableError


@dataclass(frozen=True)
class Tolerances:
    symmetry: float = 1e-10          # relative asymmetry accepted by sym_eig
    reconstruction: float = 1e-9     # ||M - V diag(w) V^T|| / ||M||
    zero_eig: float = 1e-8           # normalized kernel threshold for Lbar
    connectivity: float = 1e-9       # lambda_2 above this => connected
    care_step: float = 1e-13         # Newton-Kleinman relative step size
    care_max_iter: int = 100
    care_eps_scale: float = 1e-6     # default eps = scale * ||A||
    simpson_panels: int = 200
    fixed_point_rtol: float = 1e-10
    fixed_point_max_iter: int = 1000
    eta_safety: float = 1.01
    divergence_norm: float = 1e12
    envelope_slack: float = 1e-6


TOL = Tolerances()

# Pade(13) numerator coefficients and the 1-norm bound for which it is
# accurate to double precision without scaling.
_PADE13 = (
    64764752532480000.0, 32382376266240000.0, 7771770303897600.0,
    1187353796428800.0, 129060195264000.0, 10559470521600.0,
    670442572800.0, 33522128640.0, 1323241920.0, 40840800.0,
    960960.0, 16380.0, 182.0, 1.0,
)
_THETA13 = 5.371920351148152


@dataclass(frozen=True)
class SpectralResult:
    eigenvalues: np.ndarray   # ascending
    eigenvectors: np.ndarray  # orthonormal columns


def as_matrix(M, name="matrix") -> np.ndarray:
    """Return `M` as a finite 2-D float array (a 1-D input becomes a column)."""
    arr = np.array(M, dtype=float)
    if arr.ndim == 0:
        arr = arr.reshape(1, 1)
    elif arr.ndim == 1:
        arr = arr.reshape(-1, 1)
    elif arr.ndim != 2:
        raise DimensionError(f"{name} must be 2-D, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} has non-finite entries")
    return arr


def _square(A, name="A") -> np.ndarray:
    A = as_matrix(A, name)
    if A.shape[0] != A.shape[1]:
        raise DimensionError(f"{name} must be square, got {A.shape}")
    return A


def mat_exp(A, t: float = 1.0) -> np.ndarray:
    """e^{At} by scaling and squaring with the degree-13 Pade approximant."""
    A = _square(A)
    if t < 0 or not math.isfinite(t):
        raise ValueError(f"t must be finite and >= 0, got {t}")
    n = A.shape[0]
    X = A * t
    norm1 = np.linalg.norm(X, 1)
    if norm1 == 0.0:
        return np.eye(n)
    s = max(0, int(math.ceil(math.log2(norm1 / _THETA13))))
    X = X / (2.0 ** s)

    b = _PADE13
    I = np.eye(n)
    X2 = X @ X
    X4 = X2 @ X2
    X6 = X4 @ X2
    U = X @ (X6 @ (b[13] * X6 + b[11] * X4 + b[9] * X2)
             + b[7] * X6 + b[5] * X4 + b[3] * X2 + b[1] * I)
    V = (X6 @ (b[12] * X6 + b[10] * X4 + b[8] * X2)
         + b[6] * X6 + b[4] * X4 + b[2] * X2 + b[0] * I)
    R = np.linalg.solve(V - U, V + U)
    for _ in range(s):
        R = R @ R
    return R


def zoh_pair(A, B, h: float) -> tuple[np.ndarray, np.ndarray]:
    """Exact discretization under a held input.

    Returns ``G = e^{Ah}`` and ``H = (int_0^h e^{As} ds) B`` read off the
    exponential of the augmented matrix ``[[A, B], [0, 0]]``.
    """
    A = _square(A)
    B = as_matrix(B, "B")
    if B.shape[0] != A.shape[0]:
        raise DimensionError(f"B has {B.shape[0]} rows, A has {A.shape[0]}")
    if not h > 0:
        raise ValueError(f"h must be positive, got {h}")
    n, m = B.shape
    M = np.zeros((n + m, n + m))
    M[:n, :n] = A
    M[:n, n:] = B
    Phi = mat_exp(M, h)
    return Phi[:n, :n].copy(), Phi[:n, n:].copy()


def input_integral(A, B, c: float, F, h: float) -> np.ndarray:
    """int_0^h e^{A(h-s)} c B F ds, i.e. the ZOH input matrix of ``c B F``."""
    B = as_matrix(B, "B")
    F = as_matrix(F, "F")
    if F.shape[0] != B.shape[1]:
        raise DimensionError(f"F has {F.shape[0]} rows, B has {B.shape[1]} columns")
    return zoh_pair(A, c * (B @ F), h)[1]


def norm_integral(A, M, T: float, panels: int | None = None) -> float:
    """int_0^T ||e^{A(T-s)} M||_2 ds by composite Simpson.

    The panel count is at least ``TOL.simpson_panels`` and always even.
    """
    A = _square(A)
    M = as_matrix(M, "M")
    if T < 0:
        raise ValueError(f"T must be >= 0, got {T}")
    if T == 0:
        return 0.0
    k = max(panels or TOL.simpson_panels, TOL.simpson_panels)
    k += k % 2
    step = mat_exp(A, T / k)
    # integrand at s_j = j*T/k is ||e^{A (k-j) T/k} M||; walk from s = T back to 0
    vals = np.empty(k + 1)
    W = M.copy()
    vals[k] = np.linalg.norm(W, 2)
    for j in range(k - 1, -1, -1):
        W = step @ W
        vals[j] = np.linalg.norm(W, 2)
    weights = np.ones(k + 1)
    weights[1:-1:2] = 4.0
    weights[2:-1:2] = 2.0
    return float(T / (3.0 * k) * weights @ vals)


def sym_eig(M) -> SpectralResult:
    """Full spectrum of a symmetric matrix, ascending, with orthonormal vectors."""
    M = _square(M, "M")
    scale = max(np.linalg.norm(M, 2), np.finfo(float).tiny)
    if np.linalg.norm(M - M.T, 2) > TOL.symmetry * scale:
        raise ValueError("matrix is not symmetric")
    w, V = np.linalg.eigh(0.5 * (M + M.T))
    return SpectralResult(eigenvalues=w, eigenvectors=V)


def spectral_norm(M) -> float:
    return float(np.linalg.norm(np.atleast_2d(M), 2))


def controllability_matrix(A, B) -> np.ndarray:
    A = _square(A)
    B = as_matrix(B, "B")
    blocks = [B]
    for _ in range(A.shape[0] - 1):
        blocks.append(A @ blocks[-1])
    return np.hstack(blocks)


def is_controllable(A, B) -> bool:
    C = controllability_matrix(A, B)
    return int(np.linalg.matrix_rank(C)) == C.shape[0]


def riccati_lhs(P, A, B, alpha: float) -> np.ndarray:
    """PA + A^T P - 2 P B B^T P + 2 alpha P (negative definite for a valid P)."""
    PB = P @ B
    S = P @ A + A.T @ P - 2.0 * PB @ PB.T + 2.0 * alpha * P
    return 0.5 * (S + S.T)


def care_solve(A, B, alpha: float, eps: float | None = None) -> np.ndarray:
    """Symmetric positive definite P with riccati_lhs(P, A, B, alpha) = -eps I.

    Newton-Kleinman on the shifted Riccati equation
    ``(A + alpha I)^T P + P (A + alpha I) - 2 P B B^T P + eps I = 0``.
    The initial stabilizing gain comes from Bass' Lyapunov shift, so no pole
    placement is needed.
    """
    A = _square(A)
    B = as_matrix(B, "B")
    if B.shape[0] != A.shape[0]:
        raise DimensionError(f"B has {B.shape[0]} rows, A has {A.shape[0]}")
    if not alpha > 0:
        raise ValueError(f"alpha must be positive, got {alpha}")
    if not is_controllable(A, B):
        raise UncontrollableError("(A, B) is not controllable")
    n = A.shape[0]
    if eps is None:
        eps = TOL.care_eps_scale * max(spectral_norm(A), 1.0)
    if eps < 0:
        raise ValueError(f"eps must be >= 0, got {eps}")

    I = np.eye(n)
    As = A + alpha * I
    Bs = math.sqrt(2.0) * B
    Q = eps * I

    # Bass: with shift s making -(As + sI) Hurwitz, K0 = Bs^T W^{-1} is stabilizing.
    s = 1.0 + np.linalg.norm(As, 2)
    W = solve_continuous_lyapunov(As + s * I, 2.0 * Bs @ Bs.T)
    W = 0.5 * (W + W.T)
    K = np.linalg.solve(W, Bs).T

    P = None
    for _ in range(TOL.care_max_iter):
        Acl = As - Bs @ K
        P_new = solve_continuous_lyapunov(Acl.T, -(Q + K.T @ K))
        P_new = 0.5 * (P_new + P_new.T)
        K = Bs.T @ P_new
        if P is not None:
            step = np.linalg.norm(P_new - P, 2)
            if step <= TOL.care_step * np.linalg.norm(P_new, 2) or step == 0.0:
                return P_new
        P = P_new
    raise ConvergenceError(
        f"Newton-Kleinman did not converge in {TOL.care_max_iter} iterations")
