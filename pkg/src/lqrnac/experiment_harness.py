"""Instance generation, verification suites, batch runs, and the CLI.

Everything here is scaffolding around the library: make random solvable
problems, make stable starting gains (using model knowledge on purpose;
the algorithms themselves never peek), cross-check the closed forms
against finite differences and Monte Carlo, and drive seeded batches
that leave a reproducible artifact directory behind.

Verification philosophy: every analytic quantity is checked by an
independent route.  The policy gradient gets three (closed form, central
finite differences of the exact cost, and a score-function Monte Carlo
estimate); the critic's fixed-point system gets sampled stationary
moments with batch-means standard errors, which stay honest under the
chain's autocorrelation.
"""

from __future__ import annotations

import argparse
import dataclasses
import hashlib
import json
import math
import os
import sys
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__
from .errors import GenerationFailed, IllConditioned, LqrError, NoConvergence, UnstablePolicy
from .exact_oracle import (
    _critic_moments,
    evaluate,
    solve_dare,
    spectral_radius,
    xi_matrix,
)
from .gtd_critic import evaluate_policy, projection_spec
from .lqr_model import PolicyParams, ProblemInstance, feature_matrix, svec
from .natural_actor_critic import (
    ActorConfig,
    Exact,
    Gtd,
    GtdOffPolicy,
    RunLog,
    run,
)
from .simulator import ExactStationary, SimConfig, _trajectory_arrays

__all__ = [
    "InstanceSpec",
    "ExperimentConfig",
    "GradientReport",
    "CriticTargetReport",
    "generate_instance",
    "initial_stable_gain",
    "verify_gradient",
    "verify_critic_target",
    "run_experiment",
    "main",
]

ENV_OUT_DIR = "LQRNAC_OUT_DIR"
_DEFAULT_OUT_DIR = "runs"
_GENERATION_ATTEMPTS = 100
_MC_CHUNK = 100_000


@dataclass(frozen=True)
class InstanceSpec:
    """Recipe for a random instance, kept alongside results for replay."""

    d: int
    k: int
    stability_margin: float = 0.2
    seed: int = 0
    sigma: float = 1.0

    def __post_init__(self) -> None:
        if self.d < 1 or self.k < 1:
            raise ValueError("d and k must be at least 1")
        if not 0.0 < self.stability_margin < 1.0:
            raise ValueError("stability_margin must lie in (0, 1)")
        if self.sigma < 0.0:
            raise ValueError("sigma must be nonnegative")


@dataclass(frozen=True)
class ExperimentConfig:
    """One batch: an instance (inline or recipe), a start gain, actor settings."""

    instance: ProblemInstance | InstanceSpec
    actor: ActorConfig
    k0: np.ndarray | None = None  # None means derive a stable gain
    trials: int = 1
    out_dir: str | None = None  # None falls back to $LQRNAC_OUT_DIR, then ./runs

    def __post_init__(self) -> None:
        if self.trials < 1:
            raise ValueError("trials must be at least 1")
        if self.k0 is not None:
            object.__setattr__(self, "k0", np.array(self.k0, dtype=float))


def generate_instance(
    d: int,
    k: int,
    stability_margin: float = 0.2,
    seed: int = 0,
    sigma: float = 1.0,
) -> ProblemInstance:
    """Random instance with an open-loop-unstable A and a solvable design.

    A is a Gaussian matrix rescaled to spectral radius 1 + margin, so
    doing nothing diverges and the control problem is nontrivial.  B is
    Gaussian with full rank, Q and R are identity times independent
    log-uniform scales in [0.5, 2], and Psi = I.  Candidates are
    rejected until solve_dare succeeds, which certifies stabilizability.
    """
    if d < 1 or k < 1:
        raise ValueError("d and k must be at least 1")
    if not 0.0 < stability_margin < 1.0:
        raise ValueError("stability_margin must lie in (0, 1)")
    rng = np.random.default_rng(np.random.SeedSequence(entropy=seed))
    log_half, log_two = math.log(0.5), math.log(2.0)
    for _ in range(_GENERATION_ATTEMPTS):
        A = rng.standard_normal((d, d))
        rho = spectral_radius(A)
        if rho < 1e-9:
            continue
        A *= (1.0 + stability_margin) / rho
        B = rng.standard_normal((d, k))
        if np.linalg.matrix_rank(B) < min(d, k):
            continue
        q_scale = math.exp(rng.uniform(log_half, log_two))
        r_scale = math.exp(rng.uniform(log_half, log_two))
        inst = ProblemInstance(
            A=A,
            B=B,
            Q=q_scale * np.eye(d),
            R=r_scale * np.eye(k),
            Psi=np.eye(d),
            sigma=sigma,
        )
        try:
            solve_dare(inst)
        except (NoConvergence, UnstablePolicy, IllConditioned):
            continue
        return inst
    raise GenerationFailed(
        f"no stabilizable instance found in {_GENERATION_ATTEMPTS} attempts "
        f"(d={d}, k={k}, margin={stability_margin}, seed={seed})"
    )


def initial_stable_gain(inst: ProblemInstance, seed: int = 0) -> PolicyParams:
    """Stable starting gain away from the optimum.

    Perturbs the optimal gain along random directions, shrinking the
    step until the closed loop has spectral radius at most 0.95, then
    growing it again to inflate the starting cost toward twice the
    optimum when the direction allows it.  Uses the model on purpose:
    the analysis assumes a stable start is handed to the algorithm, and
    this is the harness handing it over.
    """
    policy_star, _, j_star = solve_dare(inst)
    K_star = policy_star.K
    rng = np.random.default_rng(np.random.SeedSequence(entropy=seed))
    best: tuple[float, np.ndarray] | None = None

    def loop_radius(K: np.ndarray) -> float:
        return spectral_radius(inst.A - inst.B @ K)

    for _ in range(_GENERATION_ATTEMPTS):
        delta = rng.standard_normal(K_star.shape)
        nrm = float(np.linalg.norm(delta))
        if nrm < 1e-12:
            continue
        delta /= nrm
        zeta = 1.0
        for _ in range(80):
            if loop_radius(K_star + zeta * delta) <= 0.95:
                break
            zeta *= 0.5
        else:
            continue
        for _ in range(80):
            grown = 1.5 * zeta
            if loop_radius(K_star + grown * delta) <= 0.95:
                zeta = grown
            else:
                break
        K0 = K_star + zeta * delta
        j0 = evaluate(inst, PolicyParams(K0)).J
        if j0 >= 2.0 * j_star:
            return PolicyParams(K0)
        if best is None or j0 > best[0]:
            best = (j0, K0)
    if best is not None:
        return PolicyParams(best[1])
    raise GenerationFailed(
        f"no stable initial gain found in {_GENERATION_ATTEMPTS} attempts"
    )


@dataclass(frozen=True)
class GradientReport:
    """Triple check of the policy gradient at one gain."""

    closed_form: np.ndarray
    finite_diff: np.ndarray
    mc_mean: np.ndarray
    mc_se: np.ndarray
    z_scores: np.ndarray
    fd_rel_err: float
    max_abs_z: float
    n_mc: int
    passed: bool

    def to_dict(self) -> dict:
        return {
            "closed_form": self.closed_form.tolist(),
            "finite_diff": self.finite_diff.tolist(),
            "mc_mean": self.mc_mean.tolist(),
            "mc_se": self.mc_se.tolist(),
            "z_scores": self.z_scores.tolist(),
            "fd_rel_err": self.fd_rel_err,
            "max_abs_z": self.max_abs_z,
            "n_mc": self.n_mc,
            "passed": self.passed,
        }


def _z_where(diff: np.ndarray, se: np.ndarray) -> np.ndarray:
    # se of an identically-zero statistic is 0; a zero diff there is a
    # pass, anything else is an unambiguous failure.
    z = np.zeros_like(diff)
    live = se > 0.0
    z[live] = diff[live] / se[live]
    z[~live & (np.abs(diff) > 1e-12)] = np.inf
    return z


def verify_gradient(
    inst: ProblemInstance,
    policy: PolicyParams,
    h: float = 1e-5,
    n_mc: int = 10**6,
    seed: int = 0,
) -> GradientReport:
    """Closed-form gradient vs finite differences vs score-function MC.

    The Monte Carlo route samples the stationary state and the
    exploration noise, evaluates the centered action value, and uses the
    Gaussian score identity grad J = -sigma^-1 E[eta x' Q(x, u)].  It
    needs sigma > 0.  Componentwise z-scores use the i.i.d. standard
    error; the finite-difference comparison is a max-norm relative
    error.
    """
    if inst.sigma <= 0.0:
        raise ValueError("the Monte Carlo route needs sigma > 0")
    if n_mc < 2:
        raise ValueError("n_mc must be at least 2")
    ev = evaluate(inst, policy)
    K = policy.K
    k, d = K.shape

    fd = np.empty_like(K)
    for i in range(k):
        for j in range(d):
            up = K.copy()
            up[i, j] += h
            down = K.copy()
            down[i, j] -= h
            fd[i, j] = (
                evaluate(inst, PolicyParams(up)).J - evaluate(inst, PolicyParams(down)).J
            ) / (2.0 * h)
    scale = max(float(np.max(np.abs(ev.grad))), 1e-12)
    fd_rel_err = float(np.max(np.abs(ev.grad - fd))) / scale

    rng = np.random.default_rng(np.random.SeedSequence(entropy=seed))
    chol = np.linalg.cholesky(ev.Sigma)
    const = inst.sigma**2 * float(np.trace(inst.R + inst.B.T @ ev.P @ inst.B)) + float(
        np.trace(ev.P @ ev.Sigma)
    )
    s1 = np.zeros((k, d))
    s2 = np.zeros((k, d))
    done = 0
    inv_sigma = 1.0 / inst.sigma
    while done < n_mc:
        m = min(_MC_CHUNK, n_mc - done)
        x = rng.standard_normal((m, d)) @ chol.T
        eta = rng.standard_normal((m, k))
        u = -x @ K.T + inst.sigma * eta
        z = np.hstack([x, u])
        q = np.einsum("mi,ij,mj->m", z, ev.Theta, z) - const
        w = -inv_sigma * q
        s1 += np.einsum("mi,mj,m->ij", eta, x, w)
        s2 += np.einsum("mi,mj,m->ij", eta**2, x**2, w**2)
        done += m
    mc_mean = s1 / n_mc
    var = np.maximum(s2 / n_mc - mc_mean**2, 0.0) * (n_mc / (n_mc - 1))
    mc_se = np.sqrt(var / n_mc)
    z_scores = _z_where(mc_mean - ev.grad, mc_se)
    max_abs_z = float(np.max(np.abs(z_scores)))
    return GradientReport(
        closed_form=ev.grad,
        finite_diff=fd,
        mc_mean=mc_mean,
        mc_se=mc_se,
        z_scores=z_scores,
        fd_rel_err=fd_rel_err,
        max_abs_z=max_abs_z,
        n_mc=n_mc,
        passed=bool(fd_rel_err < 1e-5 and max_abs_z < 3.0),
    )


@dataclass(frozen=True)
class CriticTargetReport:
    """Sampled stationary moments vs the closed-form fixed-point system."""

    xi: np.ndarray
    b: np.ndarray
    mean_feature: np.ndarray
    xi_hat: np.ndarray
    b_hat: np.ndarray
    mean_feature_hat: np.ndarray
    z_xi: np.ndarray
    z_b: np.ndarray
    z_mean_feature: np.ndarray
    max_abs_z: float
    kappa: float
    ill_conditioned: bool
    j_rel_err: float | None
    theta_rel_err: float | None
    n_mc: int

    @property
    def passed(self) -> bool:
        if self.max_abs_z >= 5.0:
            return False
        if self.ill_conditioned:
            return True  # moments checked; recovery has no defined answer
        return self.j_rel_err <= 1e-8 and self.theta_rel_err <= 1e-8

    def to_dict(self) -> dict:
        return {
            "max_abs_z": self.max_abs_z,
            "kappa": self.kappa,
            "ill_conditioned": self.ill_conditioned,
            "j_rel_err": self.j_rel_err,
            "theta_rel_err": self.theta_rel_err,
            "n_mc": self.n_mc,
            "passed": self.passed,
            "z_xi": self.z_xi.tolist(),
            "z_b": self.z_b.tolist(),
            "z_mean_feature": self.z_mean_feature.tolist(),
        }


def verify_critic_target(
    inst: ProblemInstance,
    policy: PolicyParams,
    n_mc: int = 10**6,
    seed: int = 0,
) -> CriticTargetReport:
    """Monte-Carlo check of xi, b, and E[phi] on one stationary chain.

    Standard errors come from batch means over contiguous blocks, which
    absorbs the autocorrelation a naive i.i.d. formula would ignore.  On
    a well-conditioned system the bordered linear solve is also checked
    against the direct oracle; on a singular one (degenerate joint
    covariance) only the moment comparison applies and the report flags
    the conditioning.
    """
    if n_mc < 1000:
        raise ValueError("n_mc must be at least 1000 for batch-means errors")
    xi, b, mean_feature, system, kappa = _critic_moments(inst, policy)
    ill = kappa < 1e-10
    j_rel_err: float | None = None
    theta_rel_err: float | None = None
    if not ill:
        ev = evaluate(inst, policy)
        rhs = np.concatenate([[ev.J], b])
        vartheta = np.linalg.solve(system, rhs)
        theta_vec = svec(ev.Theta)
        j_rel_err = abs(float(vartheta[0]) - ev.J) / max(1.0, abs(ev.J))
        theta_rel_err = float(np.linalg.norm(vartheta[1:] - theta_vec)) / max(
            1.0, float(np.linalg.norm(theta_vec))
        )

    cfg = SimConfig(seed=seed, init=ExactStationary(), stream=0)
    X, U, C, overflow_at = _trajectory_arrays(inst, policy, cfg, n_mc)
    if overflow_at is not None:
        raise UnstablePolicy(
            spectral_radius(inst.A - inst.B @ policy.K),
            "state overflow while sampling the stationary chain",
        )
    PHI = feature_matrix(np.hstack([X, U]))
    D = PHI[:-1] - PHI[1:]

    n_batches = 100 if n_mc >= 10_000 else 10
    m = n_mc // n_batches
    n_eff = n_batches * m
    p = PHI.shape[1]
    xi_batches = np.empty((n_batches, p, p))
    b_batches = np.empty((n_batches, p))
    ef_batches = np.empty((n_batches, p))
    for g in range(n_batches):
        s, e = g * m, (g + 1) * m
        block = PHI[s:e]
        xi_batches[g] = block.T @ D[s:e] / m
        b_batches[g] = block.T @ C[s:e] / m
        ef_batches[g] = block.mean(axis=0)

    def batch_stats(batches: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        est = batches.mean(axis=0)
        se = batches.std(axis=0, ddof=1) / math.sqrt(n_batches)
        return est, se

    xi_hat, xi_se = batch_stats(xi_batches)
    b_hat, b_se = batch_stats(b_batches)
    ef_hat, ef_se = batch_stats(ef_batches)
    z_xi = _z_where(xi_hat - xi, xi_se)
    z_b = _z_where(b_hat - b, b_se)
    z_ef = _z_where(ef_hat - mean_feature, ef_se)
    max_abs_z = float(
        max(np.max(np.abs(z_xi)), np.max(np.abs(z_b)), np.max(np.abs(z_ef)))
    )
    return CriticTargetReport(
        xi=xi,
        b=b,
        mean_feature=mean_feature,
        xi_hat=xi_hat,
        b_hat=b_hat,
        mean_feature_hat=ef_hat,
        z_xi=z_xi,
        z_b=z_b,
        z_mean_feature=z_ef,
        max_abs_z=max_abs_z,
        kappa=kappa,
        ill_conditioned=ill,
        j_rel_err=j_rel_err,
        theta_rel_err=theta_rel_err,
        n_mc=n_eff,
    )


def _critic_mode_dict(mode) -> dict:
    if isinstance(mode, Exact):
        return {"mode": "exact"}
    if isinstance(mode, GtdOffPolicy):
        return {"mode": "gtd_off_policy", "behavior": mode.behavior.K.tolist()}
    return {"mode": "gtd"}


def _actor_dict(actor: ActorConfig) -> dict:
    return {
        "n_outer": actor.n_outer,
        "critic_T": actor.critic_T,
        "gamma": actor.gamma,
        "critic_growth": actor.critic_growth,
        "critic_mode": _critic_mode_dict(actor.critic_mode),
        "seed": actor.seed,
        "alpha": actor.alpha,
        "c_omega": actor.c_omega,
        "model_free_j0": actor.model_free_j0,
    }


def _config_dict(cfg: ExperimentConfig) -> dict:
    if isinstance(cfg.instance, ProblemInstance):
        instance = {"inline": cfg.instance.to_dict()}
    else:
        instance = {
            "generate": {
                "d": cfg.instance.d,
                "k": cfg.instance.k,
                "stability_margin": cfg.instance.stability_margin,
                "seed": cfg.instance.seed,
                "sigma": cfg.instance.sigma,
            }
        }
    return {
        "instance": instance,
        "k0": "auto" if cfg.k0 is None else cfg.k0.tolist(),
        "actor": _actor_dict(cfg.actor),
        "trials": cfg.trials,
    }


def _trial_seed(base_seed: int, trial: int) -> int:
    ss = np.random.SeedSequence(entropy=base_seed, spawn_key=(trial,))
    return int(ss.generate_state(1, np.uint64)[0])


def run_experiment(cfg: ExperimentConfig) -> Path:
    """Run the configured trials and write a self-describing artifact dir.

    The directory name hashes the canonical config, so identical configs
    land in the same place and rerunning overwrites with byte-identical
    trial CSVs and manifest.  Per-trial failures are recorded in the
    summary and never abort the batch.  Trial i runs with a seed derived
    from (actor.seed, i), making trials independent and reorderable.
    """
    if isinstance(cfg.instance, ProblemInstance):
        inst = cfg.instance
    else:
        spec = cfg.instance
        inst = generate_instance(
            spec.d, spec.k, spec.stability_margin, spec.seed, sigma=spec.sigma
        )
    if cfg.k0 is not None:
        k0 = PolicyParams(cfg.k0)
    else:
        k0 = initial_stable_gain(inst, seed=cfg.actor.seed)

    conf = _config_dict(cfg)
    digest = hashlib.sha256(
        json.dumps(conf, sort_keys=True, separators=(",", ":")).encode()
    ).hexdigest()[:12]
    out_root = cfg.out_dir or os.environ.get(ENV_OUT_DIR) or _DEFAULT_OUT_DIR
    art_dir = Path(out_root) / f"run_{digest}"
    art_dir.mkdir(parents=True, exist_ok=True)

    t_start = time.perf_counter()
    rows: list[dict] = []
    for i in range(cfg.trials):
        tseed = _trial_seed(cfg.actor.seed, i)
        trial_cfg = dataclasses.replace(cfg.actor, seed=tseed)
        row: dict = {"trial": i, "seed": tseed}
        try:
            log: RunLog = run(inst, k0, trial_cfg)
        except LqrError as exc:
            row["error"] = f"{type(exc).__name__}: {exc}"
            row["stable"] = False
        else:
            fname = f"trial_{i:03d}.csv"
            log.to_csv(art_dir / fname)
            row.update(
                file=fname,
                final_gap=log.final_gap,
                steps=log.records[-1].t,
                stable=log.instability is None,
            )
        rows.append(row)

    gaps = sorted(r["final_gap"] for r in rows if r.get("stable"))
    if gaps:
        median = float(np.median(gaps))
        iqr = [float(np.percentile(gaps, 25)), float(np.percentile(gaps, 75))]
    else:
        median = None
        iqr = None
    summary = {
        "trials": cfg.trials,
        "success_rate": sum(1 for r in rows if r.get("stable")) / cfg.trials,
        "final_gap_median": median,
        "final_gap_iqr": iqr,
        "wall_time": time.perf_counter() - t_start,
        "trial_results": rows,
    }
    with open(art_dir / "summary.json", "w") as f:
        json.dump(summary, f, indent=2, sort_keys=True)
        f.write("\n")
    manifest = {
        "config": conf,
        "digest": digest,
        "version": __version__,
        "instance": inst.to_dict(),
        "k0": k0.K.tolist(),
    }
    with open(art_dir / "manifest.json", "w") as f:
        json.dump(manifest, f, indent=2, sort_keys=True)
        f.write("\n")
    return art_dir


# ---------------------------------------------------------------------------
# Command-line interface


def _add_instance_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--instance", help="path to a problem-instance JSON file")
    p.add_argument("--d", type=int, help="state dimension (generate when no --instance)")
    p.add_argument("--k", type=int, help="input dimension (generate when no --instance)")
    p.add_argument("--stability-margin", type=float, default=0.2)
    p.add_argument("--gen-seed", type=int, default=0, help="generation seed")
    p.add_argument("--sigma", type=float, default=1.0, help="exploration scale when generating")


def _resolve_instance(args) -> ProblemInstance:
    if args.instance:
        with open(args.instance) as f:
            return ProblemInstance.from_json(f.read())
    if args.d is None or args.k is None:
        raise SystemExit("either --instance or both --d and --k are required")
    return generate_instance(
        args.d, args.k, args.stability_margin, args.gen_seed, sigma=args.sigma
    )


def _parse_gain(spec: str | None, inst: ProblemInstance, seed: int) -> PolicyParams:
    """'auto', an inline JSON matrix, or a path to a JSON file with one."""
    if spec is None or spec == "auto":
        return initial_stable_gain(inst, seed=seed)
    try:
        data = json.loads(spec)
    except json.JSONDecodeError:
        with open(spec) as f:
            data = json.load(f)
    if isinstance(data, dict):
        data = data["K"]
    return PolicyParams(np.array(data, dtype=float))


def _load_config_file(path: str | None) -> dict:
    if not path:
        return {}
    with open(path) as f:
        data = json.load(f)
    if not isinstance(data, dict):
        raise SystemExit("config file must hold a JSON object")
    return data


def _merged(args, config: dict, key: str, default):
    """Flag beats config file beats default; unset flags are None."""
    flag = getattr(args, key, None)
    if flag is not None:
        return flag
    if key in config:
        return config[key]
    return default


def _cmd_gen(args) -> int:
    inst = generate_instance(
        args.d, args.k, args.stability_margin, args.seed, sigma=args.sigma
    )
    text = inst.to_json()
    if args.out:
        Path(args.out).write_text(text + "\n")
    else:
        print(text)
    return 0


def _cmd_oracle(args) -> int:
    inst = _resolve_instance(args)
    policy = _parse_gain(args.gain, inst, seed=args.gen_seed)
    ev = evaluate(inst, policy)
    print(json.dumps(ev.to_dict(), indent=2, sort_keys=True))
    return 0


def _cmd_gtd(args) -> int:
    inst = _resolve_instance(args)
    policy = _parse_gain(args.gain, inst, seed=args.gen_seed)
    j0 = evaluate(inst, policy).J
    pspec = projection_spec(inst, policy, j0)
    behavior = None
    if args.behavior:
        behavior = _parse_gain(args.behavior, inst, seed=args.gen_seed)
    try:
        oracle = xi_matrix(inst, policy)
    except IllConditioned:
        oracle = None
    sim_cfg = SimConfig(seed=args.seed, init=ExactStationary(), stream=0)
    j_hat, _, diag = evaluate_policy(
        inst,
        policy,
        args.critic_T,
        args.alpha,
        pspec,
        sim_cfg,
        oracle=oracle,
        behavior=behavior,
        trace_path=args.trace,
        trace_every=args.trace_every,
    )
    print(
        json.dumps(
            {
                "J_hat": j_hat,
                "J": j0,
                "theta_err": diag.theta_err,
                "residual": diag.residual,
                "proj_hits": diag.proj_hits,
                "max_vartheta2_norm": diag.max_vartheta2_norm,
                "max_omega2_norm": diag.max_omega2_norm,
            },
            indent=2,
            sort_keys=True,
        )
    )
    return 0


def _cmd_ac(args) -> int:
    config = _load_config_file(args.config)
    inst = _resolve_instance(args)
    mode_name = _merged(args, config, "mode", "gtd")
    if mode_name == "exact":
        mode = Exact()
    elif mode_name == "off":
        if not args.behavior:
            raise SystemExit("--mode off requires --behavior")
        behavior = _parse_gain(args.behavior, inst, seed=args.gen_seed)
        mode = GtdOffPolicy(behavior)
    elif mode_name == "gtd":
        mode = Gtd()
    else:
        raise SystemExit(f"unknown mode {mode_name!r}")
    actor = ActorConfig(
        n_outer=int(_merged(args, config, "n_outer", 20)),
        critic_T=int(_merged(args, config, "critic_T", 200_000)),
        gamma=_merged(args, config, "gamma", None),
        critic_growth=float(_merged(args, config, "critic_growth", 1.0)),
        critic_mode=mode,
        seed=int(_merged(args, config, "seed", 0)),
        alpha=float(_merged(args, config, "alpha", 0.1)),
        c_omega=float(_merged(args, config, "c_omega", 10.0)),
        model_free_j0=bool(_merged(args, config, "model_free_j0", False)),
    )
    k0 = None
    gain_spec = _merged(args, config, "gain", "auto")
    if gain_spec != "auto":
        k0 = _parse_gain(gain_spec, inst, seed=actor.seed).K
    cfg = ExperimentConfig(
        instance=inst,
        actor=actor,
        k0=k0,
        trials=int(_merged(args, config, "trials", 1)),
        out_dir=_merged(args, config, "out_dir", None),
    )
    art_dir = run_experiment(cfg)
    with open(art_dir / "summary.json") as f:
        summary = json.load(f)
    print(art_dir)
    print(
        json.dumps(
            {k: summary[k] for k in ("final_gap_median", "success_rate", "trials")},
            indent=2,
            sort_keys=True,
        )
    )
    return 0


def _cmd_verify(args) -> int:
    inst = _resolve_instance(args)
    policy = _parse_gain(args.gain, inst, seed=args.gen_seed)
    ok = True
    out: dict = {}
    if args.suite in ("gradient", "both"):
        rep = verify_gradient(inst, policy, h=args.h, n_mc=args.n_mc, seed=args.seed)
        out["gradient"] = rep.to_dict()
        ok = ok and rep.passed
    if args.suite in ("critic", "both"):
        rep = verify_critic_target(inst, policy, n_mc=args.n_mc, seed=args.seed)
        out["critic_target"] = rep.to_dict()
        ok = ok and rep.passed
    print(json.dumps(out, indent=2, sort_keys=True))
    return 0 if ok else 1


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="lqrnac",
        description="Natural actor-critic for average-cost LQR: oracle, critic, "
        "actor loop, and verification suites.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_gen = sub.add_parser("gen", help="generate a random solvable instance")
    p_gen.add_argument("--d", type=int, required=True)
    p_gen.add_argument("--k", type=int, required=True)
    p_gen.add_argument("--stability-margin", type=float, default=0.2)
    p_gen.add_argument("--seed", type=int, default=0)
    p_gen.add_argument("--sigma", type=float, default=1.0)
    p_gen.add_argument("--out", help="write JSON here instead of stdout")
    p_gen.set_defaults(func=_cmd_gen)

    p_oracle = sub.add_parser("oracle", help="print the exact evaluation of a gain")
    _add_instance_args(p_oracle)
    p_oracle.add_argument("--gain", default="auto", help="JSON matrix, file path, or 'auto'")
    p_oracle.set_defaults(func=_cmd_oracle)

    p_gtd = sub.add_parser("gtd", help="one temporal-difference critic run")
    _add_instance_args(p_gtd)
    p_gtd.add_argument("--gain", default="auto")
    p_gtd.add_argument("--behavior", help="behavior gain for off-policy sampling")
    p_gtd.add_argument("--critic-T", dest="critic_T", type=int, default=200_000)
    p_gtd.add_argument("--alpha", type=float, default=0.1)
    p_gtd.add_argument("--seed", type=int, default=0)
    p_gtd.add_argument("--trace", help="write a critic trace CSV here")
    p_gtd.add_argument("--trace-every", dest="trace_every", type=int, default=0)
    p_gtd.set_defaults(func=_cmd_gtd)

    p_ac = sub.add_parser("ac", help="full actor-critic batch")
    _add_instance_args(p_ac)
    p_ac.add_argument("--config", help="JSON config file; flags override it")
    p_ac.add_argument("--gain", default=None, help="start gain or 'auto'")
    p_ac.add_argument("--behavior", help="behavior gain for --mode off")
    p_ac.add_argument("--mode", choices=["gtd", "exact", "off"], default=None)
    p_ac.add_argument("--n-outer", dest="n_outer", type=int, default=None)
    p_ac.add_argument("--critic-T", dest="critic_T", type=int, default=None)
    p_ac.add_argument("--critic-growth", dest="critic_growth", type=float, default=None)
    p_ac.add_argument("--gamma", type=float, default=None)
    p_ac.add_argument("--alpha", type=float, default=None)
    p_ac.add_argument("--seed", type=int, default=None)
    p_ac.add_argument("--trials", type=int, default=None)
    p_ac.add_argument("--out-dir", dest="out_dir", default=None)
    p_ac.set_defaults(func=_cmd_ac)

    p_ver = sub.add_parser("verify", help="gradient and critic-target checks")
    _add_instance_args(p_ver)
    p_ver.add_argument("--gain", default="auto")
    p_ver.add_argument("--suite", choices=["gradient", "critic", "both"], default="both")
    p_ver.add_argument("--n-mc", dest="n_mc", type=int, default=10**6)
    p_ver.add_argument("--h", type=float, default=1e-5)
    p_ver.add_argument("--seed", type=int, default=0)
    p_ver.set_defaults(func=_cmd_verify)

    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except LqrError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
