"""Trajectory sampling for the closed-loop linear-Gaussian system.

Rollouts draw from one PCG64 stream per call, derived from the config's
(seed, stream) pair, so distinct rollouts under one experiment seed are
independent and every rollout is reproducible bit for bit.  Draw order
within a stream: the initial state (when sampled), then the whole block
of action noise, then the whole block of process noise.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Union

import numpy as np

from .errors import RatioOverflow, StateOverflow, UnstablePolicy
from .exact_oracle import solve_sigma, spectral_radius
from .lqr_model import PolicyParams, ProblemInstance

__all__ = [
    "TrajectoryStep",
    "SimConfig",
    "ExactStationary",
    "BurnIn",
    "FromState",
    "default_burn_in",
    "rollout",
    "rollout_behavior",
    "dump_trajectory_csv",
]

STATE_NORM_LIMIT = 1e12
RATIO_LIMIT = 1e12


@dataclass(frozen=True)
class ExactStationary:
    """Draw the initial state from the exact stationary distribution."""


@dataclass(frozen=True)
class BurnIn:
    """Start at zero and discard a mixing prefix.

    n_steps defaults to ceil(20 / (1 - rho)) for closed-loop spectral
    radius rho, enough for geometric mixing to forget the start.
    """

    n_steps: int | None = None

    def __post_init__(self) -> None:
        if self.n_steps is not None and self.n_steps < 0:
            raise ValueError("burn-in length must be nonnegative")


@dataclass(frozen=True)
class FromState:
    """Start from a fixed state, stable or not (diagnostics)."""

    x0: tuple

    def __init__(self, x0) -> None:
        arr = np.asarray(x0, dtype=float).reshape(-1)
        object.__setattr__(self, "x0", tuple(float(v) for v in arr))


InitMode = Union[ExactStationary, BurnIn, FromState]


@dataclass(frozen=True)
class SimConfig:
    """Seed, per-rollout stream index, and initialization mode."""

    seed: int
    init: InitMode = field(default_factory=ExactStationary)
    stream: int = 0


@dataclass(frozen=True)
class TrajectoryStep:
    """One transition: (x, u, cost, next state, next action)."""

    x: np.ndarray
    u: np.ndarray
    c: float
    x_next: np.ndarray
    u_next: np.ndarray


def default_burn_in(rho: float) -> int:
    """Mixing prefix length for a stable closed loop."""
    if rho >= 1.0:
        raise ValueError("burn-in default requires a stable closed loop")
    return int(math.ceil(20.0 / (1.0 - rho)))


def _rng_for(cfg: SimConfig) -> np.random.Generator:
    ss = np.random.SeedSequence(entropy=cfg.seed, spawn_key=(cfg.stream,))
    return np.random.Generator(np.random.PCG64(ss))


def _stationary_factor(inst: ProblemInstance, policy: PolicyParams) -> np.ndarray:
    """A factor F with F F' equal to the stationary state covariance."""
    Sigma = solve_sigma(inst, policy)
    try:
        return np.linalg.cholesky(Sigma)
    except np.linalg.LinAlgError:
        # Numerically semidefinite: clamp negative eigenvalues to zero.
        w, V = np.linalg.eigh(Sigma)
        return V * np.sqrt(np.clip(w, 0.0, None))


def _noise_factor(Psi: np.ndarray) -> np.ndarray:
    try:
        return np.linalg.cholesky(Psi)
    except np.linalg.LinAlgError:
        w, V = np.linalg.eigh(Psi)
        return V * np.sqrt(np.clip(w, 0.0, None))


def _trajectory_arrays(
    inst: ProblemInstance, policy: PolicyParams, cfg: SimConfig, T: int
) -> tuple[np.ndarray, np.ndarray, np.ndarray, int | None]:
    """Simulate T transitions; returns (X, U, C, overflow_at).

    X is (T+1, d), U is (T+1, k), C is (T,).  overflow_at is the first
    index at which the state norm exceeded the guard, or None.  Rows at
    and past an overflow are not meaningful.
    """
    if T < 1:
        raise ValueError("T must be at least 1")
    K = policy.K
    if K.shape != (inst.k, inst.d):
        raise ValueError(
            f"gain shape {K.shape} does not match instance dimensions "
            f"({inst.k}, {inst.d})"
        )
    rng = _rng_for(cfg)
    init = cfg.init
    burn = 0
    if isinstance(init, ExactStationary):
        rho = spectral_radius(inst.A - inst.B @ K)
        if rho >= 1.0:
            raise UnstablePolicy(rho, "stationary initialization needs a stable policy")
        x0 = _stationary_factor(inst, policy) @ rng.standard_normal(inst.d)
    elif isinstance(init, BurnIn):
        rho = spectral_radius(inst.A - inst.B @ K)
        if rho >= 1.0:
            raise UnstablePolicy(rho, "burn-in initialization needs a stable policy")
        burn = init.n_steps if init.n_steps is not None else default_burn_in(rho)
        x0 = np.zeros(inst.d)
    elif isinstance(init, FromState):
        x0 = np.asarray(init.x0, dtype=float)
        if x0.shape[0] != inst.d:
            raise ValueError(f"x0 must have length {inst.d}, got {x0.shape[0]}")
    else:
        raise TypeError(f"unknown initialization mode: {init!r}")

    total = burn + T
    sigma = inst.sigma
    eta = rng.standard_normal((total + 1, inst.k))
    eps = rng.standard_normal((total, inst.d)) @ _noise_factor(inst.Psi).T

    A, B = inst.A, inst.B
    X = np.empty((total + 1, inst.d))
    U = np.empty((total + 1, inst.k))
    X[0] = x0
    x = x0
    for t in range(total):
        u = sigma * eta[t] - K @ x
        U[t] = u
        x = A @ x + B @ u + eps[t]
        X[t + 1] = x
    U[total] = sigma * eta[total] - K @ X[total]

    X = X[burn:]
    U = U[burn:]
    Xc, Uc = X[:T], U[:T]
    C = np.einsum("ti,ij,tj->t", Xc, inst.Q, Xc) + np.einsum(
        "ti,ij,tj->t", Uc, inst.R, Uc
    )

    overflow_at: int | None = None
    norms2 = np.einsum("ti,ti->t", X, X)
    hot = norms2 > STATE_NORM_LIMIT**2
    if bool(np.any(hot)):
        overflow_at = int(np.argmax(hot))
    return X, U, C, overflow_at


def rollout(
    inst: ProblemInstance, policy: PolicyParams, cfg: SimConfig, T: int
) -> Iterator[TrajectoryStep]:
    """Stream T consecutive transitions under the policy.

    Deterministic given the config.  Raises StateOverflow when the
    state norm passes 1e12; steps before that point are still yielded.
    """
    X, U, C, overflow_at = _trajectory_arrays(inst, policy, cfg, T)
    for t in range(T):
        if overflow_at is not None and overflow_at <= t + 1:
            raise StateOverflow(overflow_at, float(np.linalg.norm(X[overflow_at])))
        yield TrajectoryStep(x=X[t], u=U[t], c=float(C[t]), x_next=X[t + 1], u_next=U[t + 1])
    if overflow_at is not None:  # overflow at index 0 with T == 0 cannot happen; guard anyway
        raise StateOverflow(overflow_at, float(np.linalg.norm(X[overflow_at])))


def _behavior_ratios(
    inst: ProblemInstance,
    behavior: PolicyParams,
    target: PolicyParams,
    X: np.ndarray,
    U: np.ndarray,
) -> np.ndarray:
    """Importance ratios of target over behavior at the successor pairs.

    For a Gaussian policy pair sharing sigma, the density ratio at
    (x, u) is exp[(||u + K_b x||^2 - ||u + K x||^2) / (2 sigma^2)].
    """
    sigma = inst.sigma
    if sigma <= 0.0:
        raise ValueError("importance ratios need sigma > 0")
    Xs, Us = X[1:], U[1:]
    res_b = Us + Xs @ behavior.K.T
    res_t = Us + Xs @ target.K.T
    expo = (np.einsum("ti,ti->t", res_b, res_b) - np.einsum("ti,ti->t", res_t, res_t)) / (
        2.0 * sigma**2
    )
    with np.errstate(over="ignore"):
        return np.exp(expo)


def rollout_behavior(
    inst: ProblemInstance,
    behavior: PolicyParams,
    target: PolicyParams,
    cfg: SimConfig,
    T: int,
) -> Iterator[tuple[TrajectoryStep, float]]:
    """Stream transitions sampled under the behavior policy with ratios.

    Each yielded pair carries the importance ratio of the target over
    the behavior policy evaluated at the successor state-action pair,
    which is what the off-policy temporal-difference update consumes.
    """
    X, U, C, overflow_at = _trajectory_arrays(inst, behavior, cfg, T)
    ratios = _behavior_ratios(inst, behavior, target, X, U)
    for t in range(T):
        if overflow_at is not None and overflow_at <= t + 1:
            raise StateOverflow(overflow_at, float(np.linalg.norm(X[overflow_at])))
        r = float(ratios[t])
        if not (r <= RATIO_LIMIT):  # catches overflow to inf and NaN
            raise RatioOverflow(t, r)
        step = TrajectoryStep(
            x=X[t], u=U[t], c=float(C[t]), x_next=X[t + 1], u_next=U[t + 1]
        )
        yield step, r


def dump_trajectory_csv(path, steps: Iterable[TrajectoryStep]) -> int:
    """Write steps to CSV with header x_0..x_{d-1},u_0..u_{k-1},c.

    Returns the number of rows written.  Line endings are LF and the
    decimal separator is '.', independent of locale.
    """
    rows = 0
    writer = None
    with open(path, "w", newline="") as f:
        out = csv.writer(f, lineterminator="\n")
        for step in steps:
            if writer is None:
                d, k = step.x.shape[0], step.u.shape[0]
                header = [f"x_{i}" for i in range(d)] + [f"u_{i}" for i in range(k)] + ["c"]
                out.writerow(header)
                writer = out
            row = [repr(float(v)) for v in step.x]
            row += [repr(float(v)) for v in step.u]
            row.append(repr(float(step.c)))
            out.writerow(row)
            rows += 1
    return rows
