"""Model-based evaluation of everything the learning code estimates.

Given the problem data and a stabilizing gain K, every quantity the
stochastic algorithms approximate has a closed form obtained from two
discrete Lyapunov equations:

    Sigma_K = Psi_sigma + (A - BK) Sigma_K (A - BK)'     (state covariance)
    P_K     = (Q + K'RK) + (A - BK)' P_K (A - BK)        (value curvature)

From these follow the average cost J(K), the action-value curvature
Theta_K, the preconditioned gradient direction E_K, the plain gradient
2 E_K Sigma_K, the stationary covariance of the joint (x, u) chain, the
population matrices of the temporal-difference fixed-point system, and
the optimal gain via the Riccati equation.  Everything here is exact up
to linear-algebra round-off and is used as the oracle that the sampled
estimators are tested against.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .errors import IllConditioned, NoConvergence, UnstablePolicy
from .lqr_model import PolicyParams, ProblemInstance, StateActionPair, svec, sym_kron

__all__ = [
    "ExactEvaluation",
    "CriticTarget",
    "spectral_radius",
    "solve_sigma",
    "solve_p",
    "evaluate",
    "value_functions",
    "joint_covariance",
    "joint_dynamics",
    "joint_noise_covariance",
    "xi_matrix",
    "solve_dare",
    "cost_difference_series",
    "gradient_dominance_bounds",
]

# Gains with spectral radius above this are rejected by all solvers.
STABILITY_LIMIT = 1.0 - 1e-12

# Side length at or below which the Lyapunov equation is solved densely
# via the vectorized linear system; above it, Smith doubling iteration.
DENSE_LYAPUNOV_MAX_SIDE = 20


def spectral_radius(M) -> float:
    """Largest modulus among the eigenvalues of a square matrix."""
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValueError(f"spectral_radius expects a square matrix, got {M.shape}")
    try:
        eigs = np.linalg.eigvals(M)
    except np.linalg.LinAlgError as exc:  # pragma: no cover - LAPACK failure
        raise IllConditioned(f"eigenvalue computation failed: {exc}") from exc
    return float(np.max(np.abs(eigs))) if eigs.size else 0.0


def _closed_loop(inst: ProblemInstance, policy: PolicyParams) -> np.ndarray:
    K = policy.K
    if K.shape != (inst.k, inst.d):
        raise ValueError(
            f"gain shape {K.shape} does not match instance dimensions "
            f"({inst.k}, {inst.d})"
        )
    return inst.A - inst.B @ K


def _require_stable(inst: ProblemInstance, policy: PolicyParams) -> tuple[np.ndarray, float]:
    M = _closed_loop(inst, policy)
    rho = spectral_radius(M)
    if rho > STABILITY_LIMIT:
        raise UnstablePolicy(rho)
    return M, rho


def _solve_discrete_lyapunov(M: np.ndarray, W: np.ndarray) -> np.ndarray:
    """Solve X = M X M' + W for symmetric W and rho(M) < 1.

    Dense vectorized solve for small sides, Smith doubling above: the
    doubling recursion X_{j+1} = X_j + M_j X_j M_j', M_{j+1} = M_j^2
    converges in O(log) steps since rho(M)^(2^j) -> 0.
    """
    n = M.shape[0]
    if n <= DENSE_LYAPUNOV_MAX_SIDE:
        lhs = np.eye(n * n) - np.kron(M, M)
        x = np.linalg.solve(lhs, W.reshape(-1))
        X = x.reshape(n, n)
        return 0.5 * (X + X.T)
    X = W.copy()
    Mj = M.copy()
    for _ in range(200):
        inc = Mj @ X @ Mj.T
        X = X + inc
        norm_inc = float(np.linalg.norm(inc))
        if norm_inc <= 1e-16 * float(np.linalg.norm(X)):
            break
        Mj = Mj @ Mj
    else:  # pragma: no cover - 200 doublings exceed any stable instance
        raise NoConvergence(200, "Smith iteration for the Lyapunov equation stalled")
    return 0.5 * (X + X.T)


def solve_sigma(inst: ProblemInstance, policy: PolicyParams) -> np.ndarray:
    """Stationary state covariance under the policy's closed loop.

    Solves Sigma = Psi_sigma + (A - BK) Sigma (A - BK)' where
    Psi_sigma = Psi + sigma^2 B B' is the effective noise covariance.
    """
    M, _ = _require_stable(inst, policy)
    return _solve_discrete_lyapunov(M, inst.noise_covariance())


def solve_p(inst: ProblemInstance, policy: PolicyParams) -> np.ndarray:
    """Quadratic coefficient of the differential value function.

    Solves P = (Q + K'RK) + (A - BK)' P (A - BK), the transposed
    companion of the covariance equation.
    """
    M, _ = _require_stable(inst, policy)
    K = policy.K
    return _solve_discrete_lyapunov(M.T, inst.Q + K.T @ inst.R @ K)


@dataclass(frozen=True, eq=False)
class ExactEvaluation:
    """Oracle bundle for a stable gain.

    P and Sigma solve their defining equations; Theta is the curvature
    of the action-value function on the joint (x, u) space; J is the
    average cost per step; E is the Fisher-preconditioned gradient
    direction; grad = 2 E Sigma is the plain policy gradient;
    spectral_radius is rho(A - BK).
    """

    K: PolicyParams
    P: np.ndarray
    Sigma: np.ndarray
    Theta: np.ndarray
    J: float
    E: np.ndarray
    grad: np.ndarray
    spectral_radius: float

    def to_dict(self) -> dict:
        return {
            "P": self.P.tolist(),
            "Sigma": self.Sigma.tolist(),
            "Theta": self.Theta.tolist(),
            "J": self.J,
            "E": self.E.tolist(),
            "grad": self.grad.tolist(),
            "rho": self.spectral_radius,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())


def evaluate(inst: ProblemInstance, policy: PolicyParams) -> ExactEvaluation:
    """Compute the full oracle bundle for a stable gain."""
    M, rho = _require_stable(inst, policy)
    K = policy.K
    psi_sigma = inst.noise_covariance()
    Sigma = _solve_discrete_lyapunov(M, psi_sigma)
    P = _solve_discrete_lyapunov(M.T, inst.Q + K.T @ inst.R @ K)
    A, B = inst.A, inst.B
    d = inst.d
    n = d + inst.k
    Theta = np.empty((n, n))
    Theta[:d, :d] = inst.Q + A.T @ P @ A
    Theta[:d, d:] = A.T @ P @ B
    Theta[d:, :d] = B.T @ P @ A
    Theta[d:, d:] = inst.R + B.T @ P @ B
    Theta = 0.5 * (Theta + Theta.T)
    J = float(np.trace(P @ psi_sigma)) + inst.sigma**2 * float(np.trace(inst.R))
    E = Theta[d:, d:] @ K - Theta[d:, :d]
    grad = 2.0 * E @ Sigma
    return ExactEvaluation(
        K=policy,
        P=P,
        Sigma=Sigma,
        Theta=Theta,
        J=J,
        E=E,
        grad=grad,
        spectral_radius=rho,
    )


def value_functions(
    inst: ProblemInstance, policy: PolicyParams, z: StateActionPair
) -> tuple[float, float]:
    """State value and action value at a point, centered to zero mean.

    V(x) = x'Px - tr(P Sigma); the action value is the quadratic form
    of Theta minus the constant sigma^2 tr(R + B'PB) + tr(P Sigma),
    so that its stationary average is zero as well.
    """
    ev = evaluate(inst, policy)
    x = np.asarray(z.x, dtype=float)
    trace_ps = float(np.trace(ev.P @ ev.Sigma))
    V = float(x @ ev.P @ x) - trace_ps
    joint = z.joint()
    quad = float(joint @ ev.Theta @ joint)
    const = inst.sigma**2 * float(np.trace(inst.R + inst.B.T @ ev.P @ inst.B))
    Q_value = quad - const - trace_ps
    return V, Q_value


def joint_dynamics(inst: ProblemInstance, policy: PolicyParams) -> np.ndarray:
    """One-step mean map of the joint (x, u) chain: z' = L z + noise."""
    K = policy.K
    top = np.hstack([inst.A, inst.B])
    return np.vstack([top, -K @ top])


def joint_noise_covariance(inst: ProblemInstance, policy: PolicyParams) -> np.ndarray:
    """Covariance of the innovation entering the joint (x, u) chain."""
    K = policy.K
    d, k = inst.d, inst.k
    Psi = inst.Psi
    out = np.empty((d + k, d + k))
    out[:d, :d] = Psi
    out[:d, d:] = -Psi @ K.T
    out[d:, :d] = -K @ Psi
    out[d:, d:] = K @ Psi @ K.T + inst.sigma**2 * np.eye(k)
    return 0.5 * (out + out.T)


def joint_covariance(inst: ProblemInstance, policy: PolicyParams) -> np.ndarray:
    """Stationary covariance of the joint (x, u) vector under the policy."""
    Sigma = solve_sigma(inst, policy)
    K = policy.K
    d, k = inst.d, inst.k
    out = np.empty((d + k, d + k))
    out[:d, :d] = Sigma
    out[:d, d:] = -Sigma @ K.T
    out[d:, :d] = -K @ Sigma
    out[d:, d:] = K @ Sigma @ K.T + inst.sigma**2 * np.eye(k)
    return 0.5 * (out + out.T)


@dataclass(frozen=True, eq=False)
class CriticTarget:
    """Population quantities of the temporal-difference fixed point.

    vartheta_star stacks the average cost and the packed action-value
    curvature; xi is the feature cross-moment E{phi (phi - phi')'};
    system_matrix is the full bordered matrix [[1, 0], [mean_feature, xi]]
    whose unique solution is vartheta_star; b is the right-hand side
    E[c phi]; kappa is the smallest singular value of system_matrix.
    """

    vartheta_star: np.ndarray
    xi: np.ndarray
    system_matrix: np.ndarray
    b: np.ndarray
    kappa: float

    @property
    def mean_feature(self) -> np.ndarray:
        """Stationary mean of the quadratic feature, svec of the joint covariance."""
        return self.system_matrix[1:, 0]

    @property
    def j(self) -> float:
        """Average cost component of the fixed point."""
        return float(self.vartheta_star[0])

    @property
    def theta_svec(self) -> np.ndarray:
        """Packed action-value curvature component of the fixed point."""
        return self.vartheta_star[1:]


def _critic_moments(
    inst: ProblemInstance, policy: PolicyParams
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray, float]:
    """Closed-form stationary feature moments and the bordered system.

    Returns (xi, b, mean_feature, system, kappa) without attempting the
    solve, so degenerate instances (singular joint covariance) can still
    be inspected.
    """
    S = joint_covariance(inst, policy)
    L = joint_dynamics(inst, policy)
    p = S.shape[0] * (S.shape[0] + 1) // 2
    xi = 2.0 * sym_kron(S, S) @ (np.eye(p) - sym_kron(L.T, L.T))
    C = inst.cost_block()
    b = svec(2.0 * S @ C @ S + float(np.sum(C * S)) * S)
    mean_feature = svec(S)
    system = np.zeros((p + 1, p + 1))
    system[0, 0] = 1.0
    system[1:, 0] = mean_feature
    system[1:, 1:] = xi
    kappa = float(np.linalg.svd(system, compute_uv=False)[-1])
    return xi, b, mean_feature, system, kappa


def xi_matrix(inst: ProblemInstance, policy: PolicyParams) -> CriticTarget:
    """Closed-form critic target: the fixed-point system and its solution.

    The cross-moment of consecutive stationary features has the closed
    form xi = 2 (S (x)s S)(I - L' (x)s L') with S the joint covariance
    and L the joint mean map; the right-hand side uses the Gaussian
    fourth-moment identity, b = svec(2 S C S + <S, C> S) for the stage
    cost block C.  The bordered system solve is verified against the
    direct evaluation and the result carries both computation paths.
    """
    ev = evaluate(inst, policy)
    xi, b, _, system, kappa = _critic_moments(inst, policy)
    if kappa < 1e-10:
        raise IllConditioned(
            f"fixed-point system is numerically singular (kappa = {kappa:.3e})"
        )
    rhs = np.concatenate([[ev.J], b])
    vartheta = np.linalg.solve(system, rhs)
    theta_direct = svec(ev.Theta)
    num = abs(vartheta[0] - ev.J)
    if num > 1e-8 * max(1.0, abs(ev.J)):
        raise IllConditioned(
            "fixed-point solve disagrees with direct evaluation on the cost term"
        )
    scale = float(np.linalg.norm(theta_direct))
    if float(np.linalg.norm(vartheta[1:] - theta_direct)) > 1e-8 * max(1.0, scale):
        raise IllConditioned(
            "fixed-point solve disagrees with direct evaluation on the curvature term"
        )
    return CriticTarget(
        vartheta_star=vartheta,
        xi=xi,
        system_matrix=system,
        b=b,
        kappa=kappa,
    )


def _riccati_step(inst: ProblemInstance, P: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    A, B, Q, R = inst.A, inst.B, inst.Q, inst.R
    G = R + B.T @ P @ B
    K = np.linalg.solve(G, B.T @ P @ A)
    Pn = Q + A.T @ P @ A - A.T @ P @ B @ K
    return 0.5 * (Pn + Pn.T), K


def _policy_iteration(inst: ProblemInstance, K: np.ndarray, max_iter: int) -> np.ndarray:
    """Gain-space fixed-point iteration; needs a stabilizing start."""
    for _ in range(max_iter):
        policy = PolicyParams(K)
        M = _closed_loop(inst, policy)
        if spectral_radius(M) > STABILITY_LIMIT:
            raise NoConvergence(max_iter, "policy iteration left the stable region")
        P = _solve_discrete_lyapunov(M.T, inst.Q + K.T @ inst.R @ K)
        G = inst.R + inst.B.T @ P @ inst.B
        K_next = np.linalg.solve(G, inst.B.T @ P @ inst.A)
        if float(np.max(np.abs(K_next - K))) <= 1e-13 * max(1.0, float(np.max(np.abs(K)))):
            return K_next
        K = K_next
    raise NoConvergence(max_iter, "policy iteration did not converge")


def solve_dare(
    inst: ProblemInstance, max_iter: int = 10**5
) -> tuple[PolicyParams, np.ndarray, float]:
    """Optimal gain, value curvature, and cost over linear policies.

    Fixed-point iteration of the Riccati map from P = Q with relative
    stopping at 1e-12; if the relative change stops decreasing for many
    consecutive steps, falls back to iterating in gain space.  Failure
    to converge signals a non-stabilizable or ill-posed instance.
    """
    P = inst.Q.copy()
    prev_rel = np.inf
    rising = 0
    K = None
    for _ in range(max_iter):
        Pn, K = _riccati_step(inst, P)
        diff = float(np.linalg.norm(Pn - P))
        rel = diff / max(1.0, float(np.linalg.norm(P)))
        P = Pn
        if rel < 1e-12:
            break
        if float(np.linalg.norm(P)) > 1e12:
            raise NoConvergence(max_iter, "Riccati iteration diverged")
        rising = rising + 1 if rel > prev_rel else 0
        prev_rel = rel
        if rising >= 50:
            K = _policy_iteration(inst, K, max_iter)
            M = inst.A - inst.B @ K
            P = _solve_discrete_lyapunov(M.T, inst.Q + K.T @ inst.R @ K)
            break
    else:
        raise NoConvergence(max_iter)
    G = inst.R + inst.B.T @ P @ inst.B
    K_star = np.linalg.solve(G, inst.B.T @ P @ inst.A)
    policy = PolicyParams(K_star)
    rho = spectral_radius(_closed_loop(inst, policy))
    if rho > STABILITY_LIMIT:
        raise NoConvergence(max_iter, "Riccati solution does not stabilize the loop")
    residual, _ = _riccati_step(inst, P)
    if float(np.linalg.norm(residual - P)) > 1e-10 * max(1.0, float(np.linalg.norm(P))):
        raise NoConvergence(max_iter, "Riccati fixed-point residual too large")
    J_star = float(np.trace(P @ inst.noise_covariance()))
    J_star += inst.sigma**2 * float(np.trace(inst.R))
    return policy, P, J_star


def cost_difference_series(
    inst: ProblemInstance,
    policy: PolicyParams,
    policy_prime: PolicyParams,
    x0,
    horizon: int,
) -> float:
    """Truncated telescoping series for the value difference of two gains.

    Sums the per-state advantage term

        A(x) = 2 x' D' E_K x + x' D' (R + B'P_K B) D x,   D = K' - K,

    along the deterministic trajectory of the second gain started at x0,
    for t = 0..horizon.  As the horizon grows the sum converges to
    x0' (P_{K'} - P_K) x0, with a geometrically small tail.
    """
    if horizon < 0:
        raise ValueError("horizon must be nonnegative")
    M_prime, _ = _require_stable(inst, policy_prime)
    M, _ = _require_stable(inst, policy)
    K = policy.K
    P = _solve_discrete_lyapunov(M.T, inst.Q + K.T @ inst.R @ K)
    G = inst.R + inst.B.T @ P @ inst.B
    E = G @ K - inst.B.T @ P @ inst.A
    D = policy_prime.K - K
    lin = 2.0 * D.T @ E
    quad = D.T @ G @ D
    x = np.asarray(x0, dtype=float).reshape(-1)
    if x.shape[0] != inst.d:
        raise ValueError(f"x0 must have length {inst.d}, got {x.shape[0]}")
    total = 0.0
    for _ in range(horizon + 1):
        total += float(x @ lin @ x) + float(x @ quad @ x)
        x = M_prime @ x
    return total


def gradient_dominance_bounds(
    inst: ProblemInstance, policy: PolicyParams
) -> tuple[float, float, float]:
    """Two-sided sandwich of the optimality gap by the gradient energy.

    Returns (lower, gap, upper) with

        lower = sigma_min(Psi) tr(E'E) / ||R + B'P_K B||,
        gap   = J(K) - J(K*),
        upper = ||Sigma_{K*}|| tr(E'E) / sigma_min(R),

    where the norms are spectral.  lower <= gap <= upper for stable K.
    """
    ev = evaluate(inst, policy)
    opt_policy, _, J_star = solve_dare(inst)
    Sigma_star = solve_sigma(inst, opt_policy)
    energy = float(np.sum(ev.E * ev.E))
    d = inst.d
    G = ev.Theta[d:, d:]
    lower = float(np.linalg.eigvalsh(inst.Psi)[0]) * energy / float(np.linalg.norm(G, 2))
    gap = ev.J - J_star
    upper = (
        float(np.linalg.norm(Sigma_star, 2)) * energy / float(np.linalg.eigvalsh(inst.R)[0])
    )
    return lower, gap, upper
