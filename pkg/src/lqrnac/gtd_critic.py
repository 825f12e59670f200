"""Projected primal-dual temporal-difference policy evaluation.

The average cost J(K) and the packed action-value curvature svec(Theta_K)
jointly solve a linear fixed-point system in the stationary feature
moments.  Estimating them online is cast as a stochastic saddle-point
problem: the primal variable vartheta = (vartheta1, vartheta2) carries
the estimates, the dual variable omega = (omega1, omega2) tracks the
residuals, and each observed transition applies one projected
primal-descent / dual-ascent step.  Outputs are the step-size-weighted
averages of the projected iterates.

Two samplers are supported: on-policy (transitions from the evaluated
policy itself) and off-policy (transitions from a behavior policy, each
carrying the importance ratio of the target over the behavior action
density at the successor pair).  The two update rules differ slightly
and deliberately: the off-policy rule multiplies its vartheta2 step by
(phi' omega2 + omega1) and feeds the full temporal-difference residual
to omega1, while the on-policy rule uses phi' omega2 alone and the
partial residual (vartheta1 - c).  Both are implemented exactly as
documented, and `evaluate_policy` runs the same arithmetic over a
precomputed feature matrix for speed; `tests` pin the two paths to
bit-identical iterates.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

from .errors import DivergenceError, RatioOverflow, StateOverflow
from .exact_oracle import CriticTarget
from .lqr_model import PolicyParams, ProblemInstance, feature_matrix, smat
from .simulator import SimConfig, TrajectoryStep, _behavior_ratios, _trajectory_arrays

__all__ = [
    "CriticState",
    "ProjectionSpec",
    "CriticDiagnostics",
    "projection_spec",
    "project_theta",
    "project_omega",
    "gtd_step_on_policy",
    "gtd_step_off_policy",
    "evaluate_policy",
]

# Anything past this is treated as divergence (covers inf and NaN via
# the negated comparison idiom below).
_FINITE_GUARD = 1e300


@dataclass
class CriticState:
    """Primal/dual iterates plus weighted running sums.

    The averages returned by a run are sum_* / alpha_sum, recomputable
    exactly by replaying the same transitions.  t counts completed
    update steps.
    """

    vartheta1: float
    vartheta2: np.ndarray
    omega1: float
    omega2: np.ndarray
    t: int = 0
    alpha_sum: float = 0.0
    sum_vartheta1: float = 0.0
    sum_vartheta2: np.ndarray = field(default=None)  # type: ignore[assignment]
    sum_omega1: float = 0.0
    sum_omega2: np.ndarray = field(default=None)  # type: ignore[assignment]

    def __post_init__(self) -> None:
        if self.sum_vartheta2 is None:
            self.sum_vartheta2 = np.zeros_like(self.vartheta2)
        if self.sum_omega2 is None:
            self.sum_omega2 = np.zeros_like(self.omega2)

    @classmethod
    def zeros(cls, p: int) -> "CriticState":
        """All-zero start; zero is feasible for both projection sets."""
        return cls(
            vartheta1=0.0,
            vartheta2=np.zeros(p),
            omega1=0.0,
            omega2=np.zeros(p),
        )

    @property
    def avg_vartheta1(self) -> float:
        return self.sum_vartheta1 / self.alpha_sum if self.alpha_sum > 0.0 else self.vartheta1

    @property
    def avg_vartheta2(self) -> np.ndarray:
        if self.alpha_sum > 0.0:
            return self.sum_vartheta2 / self.alpha_sum
        return self.vartheta2.copy()

    @property
    def avg_omega1(self) -> float:
        return self.sum_omega1 / self.alpha_sum if self.alpha_sum > 0.0 else self.omega1

    @property
    def avg_omega2(self) -> np.ndarray:
        if self.alpha_sum > 0.0:
            return self.sum_omega2 / self.alpha_sum
        return self.omega2.copy()


@dataclass(frozen=True)
class ProjectionSpec:
    """Radii of the primal and dual feasible sets.

    j_max caps the scalar cost estimate (and the scalar dual variable);
    r_theta bounds the packed-curvature estimate; r_omega_effective is
    the gain-dependent dual radius (1 + ||K||_F^2)^2 * r_omega_base.
    """

    j_max: float
    r_theta: float
    r_omega_base: float
    r_omega_effective: float
    c_omega: float

    def __post_init__(self) -> None:
        for name in ("j_max", "r_theta", "r_omega_base", "r_omega_effective"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v > 0.0):
                raise ValueError(f"{name} must be positive and finite, got {v}")


def projection_spec(
    inst: ProblemInstance,
    policy: PolicyParams,
    K0_cost: float,
    c_omega: float = 10.0,
) -> ProjectionSpec:
    """Feasible-set radii from the problem data and the initial cost.

    r_theta = ||Q||_F + ||R||_F + sqrt(d)/sigma_min(Psi) (||A||_F^2 + ||B||_F^2) J0
    r_omega = c_omega * r_theta * sigma_min(Q)^-2 * J0^2

    where J0 is the cost of the initial gain.  The scale constant
    c_omega is a free parameter; projection-hit diagnostics reveal
    whether it binds.
    """
    if not (math.isfinite(K0_cost) and K0_cost > 0.0):
        raise ValueError(f"K0_cost must be positive and finite, got {K0_cost}")
    fro = np.linalg.norm
    r_theta = float(fro(inst.Q)) + float(fro(inst.R))
    r_theta += (
        math.sqrt(inst.d)
        / float(np.linalg.eigvalsh(inst.Psi)[0])
        * (float(fro(inst.A)) ** 2 + float(fro(inst.B)) ** 2)
        * K0_cost
    )
    r_omega_base = c_omega * r_theta * float(np.linalg.eigvalsh(inst.Q)[0]) ** -2 * K0_cost**2
    k_norm2 = float(np.sum(policy.K * policy.K))
    return ProjectionSpec(
        j_max=K0_cost,
        r_theta=r_theta,
        r_omega_base=r_omega_base,
        r_omega_effective=(1.0 + k_norm2) ** 2 * r_omega_base,
        c_omega=c_omega,
    )


def project_theta(v: tuple[float, np.ndarray], spec: ProjectionSpec) -> tuple[float, np.ndarray]:
    """Euclidean projection of the primal pair onto its feasible set."""
    v1, v2 = v
    if v1 < 0.0:
        v1 = 0.0
    elif v1 > spec.j_max:
        v1 = spec.j_max
    nrm2 = float(v2 @ v2)
    if nrm2 > spec.r_theta * spec.r_theta:
        v2 = v2 * (spec.r_theta / math.sqrt(nrm2))
    return v1, v2


def project_omega(w: tuple[float, np.ndarray], spec: ProjectionSpec) -> tuple[float, np.ndarray]:
    """Euclidean projection of the dual pair onto its feasible set."""
    w1, w2 = w
    if w1 > spec.j_max:
        w1 = spec.j_max
    elif w1 < -spec.j_max:
        w1 = -spec.j_max
    nrm2 = float(w2 @ w2)
    if nrm2 > spec.r_omega_effective * spec.r_omega_effective:
        w2 = w2 * (spec.r_omega_effective / math.sqrt(nrm2))
    return w1, w2


def _phi(x: np.ndarray, u: np.ndarray) -> np.ndarray:
    # Single-row companion of feature_matrix, bit-identical to it.
    from .lqr_model import _packing

    joint = np.concatenate([x, u])
    rows, cols, weights = _packing(joint.shape[0])
    return (joint[rows] * joint[cols]) * weights


def _check_finite(value: float, name: str, iteration: int) -> None:
    if not (-_FINITE_GUARD <= value <= _FINITE_GUARD):
        raise DivergenceError(name, iteration)


def _check_finite_vec(nrm2: float, name: str, iteration: int) -> None:
    if not (nrm2 <= _FINITE_GUARD):
        raise DivergenceError(name, iteration)


def gtd_step_on_policy(
    state: CriticState,
    step: TrajectoryStep,
    alpha_t: float,
    spec: ProjectionSpec,
) -> CriticState:
    """One on-policy update from a single transition.

    Reads everything from the pre-step state, applies the four updates,
    projects, then accumulates the weighted averages.  Returns a new
    state; the input is not modified.
    """
    if alpha_t <= 0.0:
        raise ValueError("alpha_t must be positive")
    phi = _phi(step.x, step.u)
    phi_next = _phi(step.x_next, step.u_next)
    c = float(step.c)
    v1, th2 = state.vartheta1, state.vartheta2
    w1, w2 = state.omega1, state.omega2
    it = state.t + 1

    dphi = phi - phi_next
    pre = float(phi @ w2)
    delta = v1 - c + float(dphi @ th2)
    new_v1 = v1 - alpha_t * (w1 + pre)
    new_th2 = th2 - (alpha_t * pre) * dphi
    new_w1 = (1.0 - alpha_t) * w1 + alpha_t * (v1 - c)
    new_w2 = (1.0 - alpha_t) * w2 + (alpha_t * delta) * phi

    # overflow to inf is what the guards detect; keep numpy quiet about it
    with np.errstate(over="ignore"):
        _check_finite(new_v1, "vartheta1", it)
        _check_finite_vec(float(new_th2 @ new_th2), "vartheta2", it)
        _check_finite(new_w1, "omega1", it)
        _check_finite_vec(float(new_w2 @ new_w2), "omega2", it)

    new_v1, new_th2 = project_theta((new_v1, new_th2), spec)
    new_w1, new_w2 = project_omega((new_w1, new_w2), spec)

    return CriticState(
        vartheta1=new_v1,
        vartheta2=new_th2,
        omega1=new_w1,
        omega2=new_w2,
        t=it,
        alpha_sum=state.alpha_sum + alpha_t,
        sum_vartheta1=state.sum_vartheta1 + alpha_t * new_v1,
        sum_vartheta2=state.sum_vartheta2 + alpha_t * new_th2,
        sum_omega1=state.sum_omega1 + alpha_t * new_w1,
        sum_omega2=state.sum_omega2 + alpha_t * new_w2,
    )


def gtd_step_off_policy(
    state: CriticState,
    step_with_ratio: tuple[TrajectoryStep, float],
    alpha_t: float,
    spec: ProjectionSpec,
) -> CriticState:
    """One off-policy update from a transition carrying its importance ratio.

    The successor feature is reweighted by the ratio; the vartheta2 step
    multiplier gains the omega1 term and omega1 tracks the full
    temporal-difference residual.
    """
    if alpha_t <= 0.0:
        raise ValueError("alpha_t must be positive")
    step, ratio = step_with_ratio
    ratio = float(ratio)
    it = state.t + 1
    if not (-_FINITE_GUARD <= ratio <= _FINITE_GUARD):
        raise DivergenceError("ratio", it)
    if ratio > 1e12:
        raise RatioOverflow(it, ratio)
    phi = _phi(step.x, step.u)
    phi_next = _phi(step.x_next, step.u_next)
    c = float(step.c)
    v1, th2 = state.vartheta1, state.vartheta2
    w1, w2 = state.omega1, state.omega2

    g = phi - ratio * phi_next
    pre = float(phi @ w2)
    delta = v1 - c + float(g @ th2)
    new_v1 = v1 - alpha_t * (w1 + pre)
    new_th2 = th2 - (alpha_t * (pre + w1)) * g
    new_w1 = (1.0 - alpha_t) * w1 + alpha_t * delta
    new_w2 = (1.0 - alpha_t) * w2 + (alpha_t * delta) * phi

    with np.errstate(over="ignore"):
        _check_finite(new_v1, "vartheta1", it)
        _check_finite_vec(float(new_th2 @ new_th2), "vartheta2", it)
        _check_finite(new_w1, "omega1", it)
        _check_finite_vec(float(new_w2 @ new_w2), "omega2", it)

    new_v1, new_th2 = project_theta((new_v1, new_th2), spec)
    new_w1, new_w2 = project_omega((new_w1, new_w2), spec)

    return CriticState(
        vartheta1=new_v1,
        vartheta2=new_th2,
        omega1=new_w1,
        omega2=new_w2,
        t=it,
        alpha_sum=state.alpha_sum + alpha_t,
        sum_vartheta1=state.sum_vartheta1 + alpha_t * new_v1,
        sum_vartheta2=state.sum_vartheta2 + alpha_t * new_th2,
        sum_omega1=state.sum_omega1 + alpha_t * new_w1,
        sum_omega2=state.sum_omega2 + alpha_t * new_w2,
    )


@dataclass
class CriticDiagnostics:
    """Run summary: oracle-relative errors, projection activity, bounds."""

    theta_err: float | None
    residual: float | None
    proj_hits: dict[str, int]
    max_vartheta2_norm: float
    max_omega2_norm: float
    state: CriticState

    @property
    def total_proj_hits(self) -> int:
        return sum(self.proj_hits.values())


def evaluate_policy(
    inst: ProblemInstance,
    policy: PolicyParams,
    T: int,
    alpha: float,
    spec: ProjectionSpec,
    sim_cfg: SimConfig,
    *,
    oracle: CriticTarget | None = None,
    behavior: PolicyParams | None = None,
    init: CriticState | None = None,
    trace_path=None,
    trace_every: int = 0,
) -> tuple[float, np.ndarray, CriticDiagnostics]:
    """Run T projected primal-dual updates over one unbroken trajectory.

    Step sizes follow alpha_t = alpha / sqrt(t).  Returns the weighted
    average cost estimate, the averaged curvature estimate as a
    symmetric matrix, and diagnostics.  When an oracle target is given,
    diagnostics carry the curvature error of the averaged estimate and
    the population dual residual at the averaged primal point.  With a
    behavior policy the off-policy update rule is used on transitions
    sampled from that policy.

    init seeds the primal and dual variables (any feasible point is a
    valid start; the given state is projected into the current sets).
    Averages always restart from zero weight.

    The per-step arithmetic is the same as gtd_step_on_policy and
    gtd_step_off_policy, inlined over a precomputed feature matrix.
    """
    if T < 1:
        raise ValueError("T must be at least 1")
    if alpha <= 0.0:
        raise ValueError("alpha must be positive")
    sampling_policy = behavior if behavior is not None else policy
    X, U, C_arr, overflow_at = _trajectory_arrays(inst, sampling_policy, sim_cfg, T)
    if overflow_at is not None:
        raise StateOverflow(overflow_at, float(np.linalg.norm(X[overflow_at])))
    PHI = feature_matrix(np.hstack([X, U]))
    ratios: list[float] | None = None
    if behavior is not None:
        ratio_arr = _behavior_ratios(inst, behavior, policy, X, U)
        bad = ~(ratio_arr <= 1e12)
        if bool(np.any(bad)):
            idx = int(np.argmax(bad))
            r = float(ratio_arr[idx])
            if math.isnan(r):
                raise DivergenceError("ratio", idx + 1)
            raise RatioOverflow(idx + 1, r)
        ratios = ratio_arr.tolist()

    costs = C_arr.tolist()
    alphas = (alpha / np.sqrt(np.arange(1, T + 1))).tolist()
    p = PHI.shape[1]

    if init is None:
        v1 = 0.0
        w1 = 0.0
        th2 = np.zeros(p)
        w2 = np.zeros(p)
    else:
        th2_in = np.asarray(init.vartheta2, dtype=float)
        w2_in = np.asarray(init.omega2, dtype=float)
        if th2_in.shape != (p,) or w2_in.shape != (p,):
            raise ValueError(
                f"init state has feature dimension {th2_in.shape}, expected ({p},)"
            )
        v1, th2 = project_theta((float(init.vartheta1), th2_in.copy()), spec)
        w1, w2 = project_omega((float(init.omega1), w2_in.copy()), spec)
        th2 = np.ascontiguousarray(th2)
        w2 = np.ascontiguousarray(w2)
    sum_v1 = 0.0
    sum_w1 = 0.0
    sum_th2 = np.zeros(p)
    sum_w2 = np.zeros(p)
    alpha_sum = 0.0
    hits = {"vartheta1": 0, "vartheta2": 0, "omega1": 0, "omega2": 0}
    max_th2_nrm2 = 0.0
    max_w2_nrm2 = 0.0

    j_max = spec.j_max
    r_th = spec.r_theta
    r_th2 = r_th * r_th
    r_om = spec.r_omega_effective
    r_om2 = r_om * r_om

    theta_star = oracle.theta_svec if oracle is not None else None
    trace_rows: list[list] = []
    do_trace = trace_path is not None and trace_every > 0

    scratch_a = np.empty(p)
    scratch_b = np.empty(p)
    sub = np.subtract
    mul = np.multiply
    add = np.add

    off_policy = ratios is not None
    for t in range(T):
        a = alphas[t]
        c = costs[t]
        phi = PHI[t]
        pre = float(phi @ w2)
        if off_policy:
            # scratch_a = phi - tau * phi_next
            mul(PHI[t + 1], ratios[t], out=scratch_a)
            sub(phi, scratch_a, out=scratch_a)
            delta = v1 - c + float(scratch_a @ th2)
            v1 = v1 - a * (w1 + pre)
            mul(scratch_a, a * (pre + w1), out=scratch_b)
            sub(th2, scratch_b, out=th2)
            w1 = (1.0 - a) * w1 + a * delta
            mul(phi, a * delta, out=scratch_a)
            mul(w2, 1.0 - a, out=w2)
            add(w2, scratch_a, out=w2)
        else:
            sub(phi, PHI[t + 1], out=scratch_a)  # scratch_a = phi - phi_next
            delta = v1 - c + float(scratch_a @ th2)
            prev_v1 = v1
            v1 = v1 - a * (w1 + pre)
            mul(scratch_a, a * pre, out=scratch_b)
            sub(th2, scratch_b, out=th2)
            w1 = (1.0 - a) * w1 + a * (prev_v1 - c)
            mul(phi, a * delta, out=scratch_a)
            mul(w2, 1.0 - a, out=w2)
            add(w2, scratch_a, out=w2)

        it = t + 1
        if not (-_FINITE_GUARD <= v1 <= _FINITE_GUARD):
            raise DivergenceError("vartheta1", it)
        th2_nrm2 = float(th2 @ th2)
        if not (th2_nrm2 <= _FINITE_GUARD):
            raise DivergenceError("vartheta2", it)
        if not (-_FINITE_GUARD <= w1 <= _FINITE_GUARD):
            raise DivergenceError("omega1", it)
        w2_nrm2 = float(w2 @ w2)
        if not (w2_nrm2 <= _FINITE_GUARD):
            raise DivergenceError("omega2", it)

        # Projections, identical comparisons to project_theta/project_omega.
        if v1 < 0.0:
            v1 = 0.0
            hits["vartheta1"] += 1
        elif v1 > j_max:
            v1 = j_max
            hits["vartheta1"] += 1
        if th2_nrm2 > r_th2:
            mul(th2, r_th / math.sqrt(th2_nrm2), out=th2)
            hits["vartheta2"] += 1
            th2_nrm2 = r_th2
        if w1 > j_max:
            w1 = j_max
            hits["omega1"] += 1
        elif w1 < -j_max:
            w1 = -j_max
            hits["omega1"] += 1
        if w2_nrm2 > r_om2:
            mul(w2, r_om / math.sqrt(w2_nrm2), out=w2)
            hits["omega2"] += 1
            w2_nrm2 = r_om2

        if th2_nrm2 > max_th2_nrm2:
            max_th2_nrm2 = th2_nrm2
        if w2_nrm2 > max_w2_nrm2:
            max_w2_nrm2 = w2_nrm2

        alpha_sum += a
        sum_v1 += a * v1
        sum_w1 += a * w1
        mul(th2, a, out=scratch_a)
        add(sum_th2, scratch_a, out=sum_th2)
        mul(w2, a, out=scratch_a)
        add(sum_w2, scratch_a, out=sum_w2)

        if do_trace and it % trace_every == 0:
            err = float(np.linalg.norm(th2 - theta_star)) if theta_star is not None else ""
            omega_norm = math.sqrt(w1 * w1 + w2_nrm2)
            total_hits = hits["vartheta1"] + hits["vartheta2"] + hits["omega1"] + hits["omega2"]
            trace_rows.append([it, repr(v1), repr(err) if err != "" else "", repr(omega_norm), total_hits])

    state = CriticState(
        vartheta1=v1,
        vartheta2=th2,
        omega1=w1,
        omega2=w2,
        t=T,
        alpha_sum=alpha_sum,
        sum_vartheta1=sum_v1,
        sum_vartheta2=sum_th2,
        sum_omega1=sum_w1,
        sum_omega2=sum_w2,
    )
    j_hat = state.avg_vartheta1
    avg_th2 = state.avg_vartheta2
    theta_hat = smat(avg_th2)

    theta_err = None
    residual = None
    if oracle is not None:
        theta_err = float(np.linalg.norm(avg_th2 - oracle.theta_svec))
        res_vec = j_hat * oracle.mean_feature + oracle.xi @ avg_th2 - oracle.b
        residual = float(np.linalg.norm(res_vec))

    if do_trace:
        with open(trace_path, "w", newline="") as f:
            out = csv.writer(f, lineterminator="\n")
            out.writerow(["t", "vartheta1", "theta_err", "omega_norm", "proj_hits"])
            out.writerows(trace_rows)

    diagnostics = CriticDiagnostics(
        theta_err=theta_err,
        residual=residual,
        proj_hits=hits,
        max_vartheta2_norm=math.sqrt(max_th2_nrm2),
        max_omega2_norm=math.sqrt(max_w2_nrm2),
        state=state,
    )
    return j_hat, theta_hat, diagnostics
