"""Natural-gradient actor loop over a plug-in critic.

Each outer round estimates the action-value curvature Theta of the
current gain (by temporal-difference learning, or exactly from the
oracle) and then applies the preconditioned update

    K <- K - gamma * (Theta22 @ K - Theta21)

which is a natural policy-gradient step: the Fisher preconditioner
cancels the stationary covariance in the plain gradient, leaving the
advantage coefficient E = Theta22 K - Theta21.  With the automatic step
size, the exact-critic recursion contracts the optimality gap linearly
and preserves stability; the sampled critic inherits that behavior up
to estimation error, which the run log exposes per round.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Union

import numpy as np

from .errors import InstabilityDuringRun, UnstablePolicy
from .exact_oracle import evaluate, solve_dare
from .gtd_critic import CriticState, evaluate_policy, projection_spec
from .lqr_model import PolicyParams, ProblemInstance
from .simulator import ExactStationary, SimConfig, _trajectory_arrays

__all__ = [
    "Gtd",
    "GtdOffPolicy",
    "Exact",
    "CriticMode",
    "ActorConfig",
    "RunRecord",
    "RunLog",
    "natural_gradient_step",
    "auto_gamma",
    "run",
]

# Trajectory length of the opt-in model-free estimate of J(K0).
_J0_ESTIMATE_STEPS = 100_000


@dataclass(frozen=True)
class Gtd:
    """On-policy sampled critic."""


@dataclass(frozen=True)
class GtdOffPolicy:
    """Sampled critic driven by a fixed behavior policy."""

    behavior: PolicyParams


@dataclass(frozen=True)
class Exact:
    """Oracle critic; isolates the actor recursion from estimation noise."""


CriticMode = Union[Gtd, GtdOffPolicy, Exact]


@dataclass(frozen=True)
class ActorConfig:
    """Outer-loop configuration.

    gamma=None selects the automatic step size from auto_gamma.  The
    critic budget per round is critic_T * critic_growth**t, rounded up;
    growth 1.0 keeps it constant.  model_free_j0 replaces the oracle
    J(K0), which sets the step size and the projection radii, with a
    trajectory average.

    warm_start carries each round's averaged primal/dual estimates into
    the next round's critic as its initial point (any feasible point is
    a valid start).  Consecutive gains are close, so this removes most
    of the transient that otherwise contaminates the weighted average;
    disable it to study the cold-start behavior.
    """

    n_outer: int
    critic_T: int = 200_000
    gamma: float | None = None
    critic_growth: float = 1.0
    critic_mode: CriticMode = field(default_factory=Gtd)
    seed: int = 0
    alpha: float = 0.1
    c_omega: float = 10.0
    model_free_j0: bool = False
    warm_start: bool = True

    def __post_init__(self) -> None:
        if self.n_outer < 1:
            raise ValueError("n_outer must be at least 1")
        if self.critic_T < 1:
            raise ValueError("critic_T must be at least 1")
        if self.critic_growth < 1.0:
            raise ValueError("critic_growth must be at least 1.0")
        if self.gamma is not None and not (math.isfinite(self.gamma) and self.gamma > 0.0):
            raise ValueError("gamma must be positive when given")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must fit in 64 bits")
        if self.alpha <= 0.0:
            raise ValueError("alpha must be positive")


@dataclass(frozen=True)
class RunRecord:
    """State of one outer round, logged before the actor update."""

    t: int
    K: np.ndarray
    J: float
    gap: float
    theta_err: float
    rho: float
    critic_iters: int


@dataclass
class RunLog:
    """Per-round records plus run-level outcomes.

    Rows cover t = 0..n_outer on a completed run (the last row is the
    final gain, with no critic attached); an aborted run stops at the
    last stable iterate and carries the instability marker.
    """

    records: list[RunRecord]
    gamma: float
    j_star: float
    k_star: np.ndarray
    wall_time: float = 0.0
    instability: InstabilityDuringRun | None = None

    @property
    def final_K(self) -> np.ndarray:
        return self.records[-1].K

    @property
    def final_J(self) -> float:
        return self.records[-1].J

    @property
    def final_gap(self) -> float:
        return self.records[-1].gap

    @property
    def final_rho(self) -> float:
        return self.records[-1].rho

    def to_csv(self, path) -> None:
        import csv

        with open(path, "w", newline="") as f:
            out = csv.writer(f, lineterminator="\n")
            out.writerow(["t", "J", "gap", "theta_err", "rho", "critic_iters"])
            for r in self.records:
                out.writerow(
                    [r.t, repr(r.J), repr(r.gap), repr(r.theta_err), repr(r.rho), r.critic_iters]
                )

    def summary(self) -> dict:
        return {
            "final_gap": self.final_gap,
            "steps": self.records[-1].t,
            "wall_time": self.wall_time,
            "instability_at": None if self.instability is None else self.instability.outer_step,
        }


def natural_gradient_step(policy: PolicyParams, Theta_hat: np.ndarray, gamma: float) -> PolicyParams:
    """K - gamma * (Theta22 @ K - Theta21), no projection or clipping."""
    K = policy.K
    k, d = K.shape
    Theta_hat = np.asarray(Theta_hat, dtype=float)
    if Theta_hat.shape != (d + k, d + k):
        raise ValueError(
            f"Theta_hat must be {(d + k, d + k)} to partition against K {K.shape}, "
            f"got {Theta_hat.shape}"
        )
    advantage_coeff = Theta_hat[d:, d:] @ K - Theta_hat[d:, :d]
    return PolicyParams(K - gamma * advantage_coeff)


def auto_gamma(inst: ProblemInstance, J_K0: float) -> float:
    """1 / (||R||_2 + sigma_min(Psi)^-1 ||B||_2^2 J(K0)).

    Keeps gamma * ||R + B' P_K B||_2 below one along any run whose cost
    stays under J(K0), which is what the exact-critic contraction needs.
    """
    if not (math.isfinite(J_K0) and J_K0 > 0.0):
        raise ValueError(f"J_K0 must be positive and finite, got {J_K0}")
    r_norm = float(np.linalg.eigvalsh(inst.R)[-1])
    b_norm = float(np.linalg.norm(inst.B, 2))
    psi_min = float(np.linalg.eigvalsh(inst.Psi)[0])
    return 1.0 / (r_norm + b_norm**2 * J_K0 / psi_min)


def _estimate_j0(inst: ProblemInstance, policy: PolicyParams, seed: int, stream: int) -> float:
    cfg = SimConfig(seed=seed, init=ExactStationary(), stream=stream)
    _, _, costs, overflow_at = _trajectory_arrays(inst, policy, cfg, _J0_ESTIMATE_STEPS)
    if overflow_at is not None:
        raise UnstablePolicy(float("inf"), "state overflow while estimating the initial cost")
    return float(costs.mean())


def run(inst: ProblemInstance, K0: PolicyParams, cfg: ActorConfig) -> RunLog:
    """Alternate critic estimation and natural-gradient updates.

    Every round logs the oracle cost, gap, spectral radius, and the
    critic's curvature error for the pre-update gain.  If an update
    produces an unstable gain the run stops and returns the partial log
    with an InstabilityDuringRun marker instead of raising; sampling
    failures inside the critic (divergence, overflow) do propagate.

    Round t draws its trajectory from RNG stream t of cfg.seed, so runs
    are reproducible and rounds are statistically independent.
    """
    t_start = time.perf_counter()
    ev = evaluate(inst, K0)  # raises UnstablePolicy for an unstable start
    if cfg.model_free_j0:
        j0 = _estimate_j0(inst, K0, cfg.seed, stream=cfg.n_outer)
    else:
        j0 = ev.J
    gamma = cfg.gamma if cfg.gamma is not None else auto_gamma(inst, j0)
    k_star, _, j_star = solve_dare(inst)

    records: list[RunRecord] = []
    instability: InstabilityDuringRun | None = None
    policy = K0
    mode = cfg.critic_mode
    carry: CriticState | None = None

    for t in range(cfg.n_outer):
        if isinstance(mode, Exact):
            theta_hat = ev.Theta
            theta_err = 0.0
            critic_iters = 0
        else:
            behavior = mode.behavior if isinstance(mode, GtdOffPolicy) else None
            T_t = math.ceil(cfg.critic_T * cfg.critic_growth**t)
            pspec = projection_spec(inst, policy, j0, cfg.c_omega)
            sim_cfg = SimConfig(seed=cfg.seed, init=ExactStationary(), stream=t)
            _, theta_hat, diag = evaluate_policy(
                inst,
                policy,
                T_t,
                cfg.alpha,
                pspec,
                sim_cfg,
                behavior=behavior,
                init=carry,
            )
            if cfg.warm_start:
                st = diag.state
                carry = CriticState(
                    vartheta1=st.avg_vartheta1,
                    vartheta2=st.avg_vartheta2,
                    omega1=st.avg_omega1,
                    omega2=st.avg_omega2,
                )
            theta_err = float(np.linalg.norm(theta_hat - ev.Theta))
            critic_iters = T_t
        records.append(
            RunRecord(
                t=t,
                K=policy.K.copy(),
                J=ev.J,
                gap=ev.J - j_star,
                theta_err=theta_err,
                rho=ev.spectral_radius,
                critic_iters=critic_iters,
            )
        )
        new_policy = natural_gradient_step(policy, theta_hat, gamma)
        try:
            ev = evaluate(inst, new_policy)
        except UnstablePolicy:
            instability = InstabilityDuringRun(t + 1, policy.K.copy())
            break
        policy = new_policy
    else:
        records.append(
            RunRecord(
                t=cfg.n_outer,
                K=policy.K.copy(),
                J=ev.J,
                gap=ev.J - j_star,
                theta_err=0.0,
                rho=ev.spectral_radius,
                critic_iters=0,
            )
        )

    return RunLog(
        records=records,
        gamma=gamma,
        j_star=j_star,
        k_star=k_star.K.copy(),
        wall_time=time.perf_counter() - t_start,
        instability=instability,
    )
