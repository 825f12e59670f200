"""Core types and matrix calculus for average-cost LQR.

The controlled system is

    x_{t+1} = A x_t + B u_t + eps_t,    eps_t ~ N(0, Psi),

with stage cost c(x, u) = x'Qx + u'Ru and a linear-Gaussian policy
u = -K x + sigma * eta, eta ~ N(0, I).  This module holds the problem
and policy containers together with the symmetric-matrix vectorization
toolkit (svec/smat, the symmetric Kronecker product, the quadratic
feature map) that everything downstream is built on.

Conventions
-----------
svec packs the upper triangle of a symmetric matrix row by row, with
off-diagonal entries weighted by sqrt(2) so that the packed inner
product equals the Frobenius inner product.  smat is its inverse.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "ProblemInstance",
    "PolicyParams",
    "StateActionPair",
    "svec",
    "smat",
    "sym_kron",
    "feature",
    "feature_matrix",
    "feature_dim",
    "cost",
]

# Construction-time tolerances.  Symmetry is absolute (inputs are user
# scale or solver output, both near-exact); definiteness is relative to
# the matrix norm so large well-conditioned inputs are not rejected.
SYMMETRY_TOL = 1e-10
DEFINITENESS_RTOL = 1e-12


def _as_matrix(value, rows: int | None, cols: int | None, name: str) -> np.ndarray:
    arr = np.array(value, dtype=float, order="C")
    if arr.ndim != 2:
        raise ValueError(f"{name} must be a 2-d matrix, got shape {arr.shape}")
    if rows is not None and arr.shape[0] != rows:
        raise ValueError(f"{name} must have {rows} rows, got {arr.shape[0]}")
    if cols is not None and arr.shape[1] != cols:
        raise ValueError(f"{name} must have {cols} columns, got {arr.shape[1]}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite entries")
    return arr


def _symmetrize_pd(M: np.ndarray, name: str) -> np.ndarray:
    """Check symmetry within tolerance, symmetrize, require positive definiteness."""
    gap = float(np.max(np.abs(M - M.T))) if M.size else 0.0
    if gap > SYMMETRY_TOL:
        raise ValueError(f"{name} is not symmetric (max asymmetry {gap:.3e})")
    S = 0.5 * (M + M.T)
    eigs = np.linalg.eigvalsh(S)
    scale = float(np.max(np.abs(eigs))) if S.size else 0.0
    if scale == 0.0 or float(eigs[0]) <= DEFINITENESS_RTOL * scale:
        raise ValueError(
            f"{name} must be positive definite "
            f"(min eigenvalue {float(eigs[0]) if S.size else 0.0:.3e})"
        )
    return S


def _freeze(arr: np.ndarray) -> np.ndarray:
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class ProblemInstance:
    """The LQR problem data (A, B, Q, R, Psi, sigma).

    A is the d x d state transition matrix, B the d x k input matrix,
    Q and R the positive-definite state and action cost weights, Psi
    the positive-definite process-noise covariance, and sigma >= 0 the
    exploration noise level of the policy class.
    """

    A: np.ndarray
    B: np.ndarray
    Q: np.ndarray
    R: np.ndarray
    Psi: np.ndarray
    sigma: float

    def __post_init__(self) -> None:
        A = _as_matrix(self.A, None, None, "A")
        d = A.shape[0]
        if A.shape[1] != d:
            raise ValueError(f"A must be square, got shape {A.shape}")
        if d < 1:
            raise ValueError("state dimension must be at least 1")
        B = _as_matrix(self.B, d, None, "B")
        k = B.shape[1]
        if k < 1:
            raise ValueError("action dimension must be at least 1")
        Q = _symmetrize_pd(_as_matrix(self.Q, d, d, "Q"), "Q")
        R = _symmetrize_pd(_as_matrix(self.R, k, k, "R"), "R")
        Psi = _symmetrize_pd(_as_matrix(self.Psi, d, d, "Psi"), "Psi")
        sigma = float(self.sigma)
        if not math.isfinite(sigma) or sigma < 0.0:
            raise ValueError(f"sigma must be a finite nonnegative real, got {sigma}")
        object.__setattr__(self, "A", _freeze(A))
        object.__setattr__(self, "B", _freeze(B))
        object.__setattr__(self, "Q", _freeze(Q))
        object.__setattr__(self, "R", _freeze(R))
        object.__setattr__(self, "Psi", _freeze(Psi))
        object.__setattr__(self, "sigma", sigma)

    @property
    def d(self) -> int:
        """State dimension."""
        return self.A.shape[0]

    @property
    def k(self) -> int:
        """Action dimension."""
        return self.B.shape[1]

    def noise_covariance(self) -> np.ndarray:
        """Effective closed-loop noise covariance Psi + sigma^2 B B'."""
        return self.Psi + (self.sigma**2) * (self.B @ self.B.T)

    def cost_block(self) -> np.ndarray:
        """Block-diagonal stage-cost matrix diag(Q, R) on the joint (x, u) space."""
        d, k = self.d, self.k
        M = np.zeros((d + k, d + k))
        M[:d, :d] = self.Q
        M[d:, d:] = self.R
        return M

    def to_dict(self) -> dict:
        return {
            "A": self.A.tolist(),
            "B": self.B.tolist(),
            "Q": self.Q.tolist(),
            "R": self.R.tolist(),
            "Psi": self.Psi.tolist(),
            "sigma": self.sigma,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, data: dict) -> "ProblemInstance":
        return cls(
            A=data["A"],
            B=data["B"],
            Q=data["Q"],
            R=data["R"],
            Psi=data["Psi"],
            sigma=data["sigma"],
        )

    @classmethod
    def from_json(cls, text: str) -> "ProblemInstance":
        return cls.from_dict(json.loads(text))


@dataclass(frozen=True, eq=False)
class PolicyParams:
    """Gain matrix K of the linear-Gaussian policy u = -K x + sigma * eta.

    Stability of the closed loop is a queried property, not an invariant:
    unstable gains must remain representable for diagnostics.
    """

    K: np.ndarray

    def __post_init__(self) -> None:
        K = _as_matrix(self.K, None, None, "K")
        object.__setattr__(self, "K", _freeze(K))

    @property
    def k(self) -> int:
        return self.K.shape[0]

    @property
    def d(self) -> int:
        return self.K.shape[1]


@dataclass(frozen=True, eq=False)
class StateActionPair:
    """A state vector paired with an action vector."""

    x: np.ndarray
    u: np.ndarray

    def __post_init__(self) -> None:
        x = np.array(self.x, dtype=float).reshape(-1)
        u = np.array(self.u, dtype=float).reshape(-1)
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(u))):
            raise ValueError("state-action pair contains non-finite entries")
        object.__setattr__(self, "x", _freeze(x))
        object.__setattr__(self, "u", _freeze(u))

    def joint(self) -> np.ndarray:
        """The stacked vector (x, u)."""
        return np.concatenate([self.x, self.u])


# svec/smat packing tables, cached per matrix side.
_PACK_CACHE: dict[int, tuple[np.ndarray, np.ndarray, np.ndarray]] = {}


def _packing(m: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    cached = _PACK_CACHE.get(m)
    if cached is None:
        rows, cols = np.triu_indices(m)
        weights = np.where(rows == cols, 1.0, math.sqrt(2.0))
        cached = (rows, cols, weights)
        _PACK_CACHE[m] = cached
    return cached


def svec(M) -> np.ndarray:
    """Pack a symmetric m x m matrix into a vector of length m(m+1)/2.

    Upper triangle, row-major; off-diagonal entries are multiplied by
    sqrt(2), which makes svec an isometry: <svec(M), svec(N)> equals the
    Frobenius inner product <M, N>.  M must be symmetric within an
    absolute tolerance of 1e-10 and is symmetrized before packing.
    """
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValueError(f"svec expects a square matrix, got shape {M.shape}")
    if M.size and float(np.max(np.abs(M - M.T))) > SYMMETRY_TOL:
        raise ValueError("svec input is not symmetric within tolerance")
    S = 0.5 * (M + M.T)
    rows, cols, weights = _packing(M.shape[0])
    return S[rows, cols] * weights


def smat(v) -> np.ndarray:
    """Unpack a vector of triangular length back into a symmetric matrix.

    Inverse of svec: smat(svec(M)) == M up to floating-point round trip.
    """
    v = np.asarray(v, dtype=float).reshape(-1)
    n = v.shape[0]
    m = int((math.isqrt(8 * n + 1) - 1) // 2)
    if m * (m + 1) // 2 != n:
        raise ValueError(f"length {n} is not a triangular number")
    rows, cols, weights = _packing(m)
    M = np.zeros((m, m))
    vals = v / weights
    M[rows, cols] = vals
    M[cols, rows] = vals
    return M


def sym_kron(A, B) -> np.ndarray:
    """Symmetric Kronecker product of two m x m matrices.

    Defined through its action on packed symmetric matrices:

        sym_kron(A, B) @ svec(S) == svec((B S A' + A S B') / 2)

    for every symmetric S.  Built column by column from that action.
    """
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError(f"sym_kron expects square matrices, got shape {A.shape}")
    if A.shape != B.shape:
        raise ValueError(f"sym_kron operands must match, got {A.shape} and {B.shape}")
    m = A.shape[0]
    rows, cols, weights = _packing(m)
    p = rows.shape[0]
    out = np.empty((p, p))
    S = np.zeros((m, m))
    for j in range(p):
        r, c = int(rows[j]), int(cols[j])
        # Unit basis vector in packed coordinates, unpacked: smat(e_j).
        val = 1.0 if r == c else 1.0 / math.sqrt(2.0)
        S[r, c] = val
        S[c, r] = val
        T = B @ S @ A.T
        half = 0.5 * (T + (A @ S @ B.T))
        sym = 0.5 * (half + half.T)
        out[:, j] = sym[rows, cols] * weights
        S[r, c] = 0.0
        S[c, r] = 0.0
    return out


def feature_dim(d: int, k: int) -> int:
    """Length of the quadratic feature vector for a d-state, k-action system."""
    n = d + k
    return n * (n + 1) // 2


def feature(z: StateActionPair) -> np.ndarray:
    """Quadratic feature of a state-action pair: svec of the outer product.

    feature(z) = svec([x; u] [x; u]') so that <feature(z), svec(M)> is
    the quadratic form [x; u]' M [x; u] for any symmetric M.
    """
    joint = z.joint()
    rows, cols, weights = _packing(joint.shape[0])
    return (joint[rows] * joint[cols]) * weights


def feature_matrix(Z: np.ndarray) -> np.ndarray:
    """Row-wise quadratic features of an array of joint (x, u) vectors.

    Z has shape (n, d + k); the result has shape (n, (d+k)(d+k+1)/2) and
    its rows are bitwise identical to feature() of the corresponding pair.
    """
    Z = np.asarray(Z, dtype=float)
    rows, cols, weights = _packing(Z.shape[1])
    return (Z[:, rows] * Z[:, cols]) * weights


def cost(inst: ProblemInstance, z: StateActionPair) -> float:
    """Instantaneous cost c(x, u) = x'Qx + u'Ru."""
    x, u = z.x, z.u
    return float(x @ inst.Q @ x + u @ inst.R @ u)
