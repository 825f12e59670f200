"""Instance generation, verification suites, artifact dirs, and the CLI."""

import json

import numpy as np
import pytest

import lqrnac as L
from lqrnac.experiment_harness import ENV_OUT_DIR


class TestGenerateInstance:
    def test_deterministic(self):
        a = L.generate_instance(d=3, k=2, seed=11)
        b = L.generate_instance(d=3, k=2, seed=11)
        assert a.to_json() == b.to_json()
        c = L.generate_instance(d=3, k=2, seed=12)
        assert a.to_json() != c.to_json()

    def test_design_properties(self):
        inst = L.generate_instance(d=4, k=2, stability_margin=0.3, seed=5, sigma=0.7)
        assert inst.A.shape == (4, 4)
        assert L.spectral_radius(inst.A) == pytest.approx(1.3, rel=1e-12)
        assert np.linalg.matrix_rank(inst.B) == 2
        np.testing.assert_array_equal(inst.Psi, np.eye(4))
        # Q and R are scaled identities with log-uniform scales in [0.5, 2]
        q = inst.Q[0, 0]
        assert 0.5 <= q <= 2.0
        np.testing.assert_array_equal(inst.Q, q * np.eye(4))
        assert inst.sigma == 0.7
        L.solve_dare(inst)  # must be solvable by construction

    @pytest.mark.parametrize(
        "kwargs",
        [
            {"d": 0, "k": 1},
            {"d": 1, "k": 0},
            {"d": 1, "k": 1, "stability_margin": 0.0},
            {"d": 1, "k": 1, "stability_margin": 1.0},
        ],
    )
    def test_validation(self, kwargs):
        with pytest.raises(ValueError):
            L.generate_instance(**kwargs)


class TestInitialStableGain:
    def test_stable_and_away_from_optimum(self):
        for seed in range(5):
            inst = L.generate_instance(d=3, k=2, seed=seed)
            k0 = L.initial_stable_gain(inst, seed=seed)
            rho = L.spectral_radius(inst.A - inst.B @ k0.K)
            assert rho <= 0.95 + 1e-12
            k_star, _, j_star = L.solve_dare(inst)
            assert not np.allclose(k0.K, k_star.K)
            assert L.evaluate(inst, k0).J > j_star

    def test_deterministic(self, bench1):
        a = L.initial_stable_gain(bench1, seed=4)
        b = L.initial_stable_gain(bench1, seed=4)
        np.testing.assert_array_equal(a.K, b.K)


class TestInstanceSpec:
    @pytest.mark.parametrize(
        "kwargs",
        [
            {"d": 0, "k": 1},
            {"d": 1, "k": 1, "stability_margin": 1.5},
            {"d": 1, "k": 1, "sigma": -0.1},
        ],
    )
    def test_validation(self, kwargs):
        with pytest.raises(ValueError):
            L.InstanceSpec(**kwargs)

    def test_trials_validation(self, bench0):
        with pytest.raises(ValueError):
            L.ExperimentConfig(instance=bench0, actor=L.ActorConfig(n_outer=1), trials=0)


class TestVerifyGradient:
    def test_scalar_benchmark_passes(self, bench1, k_zero):
        rep = L.verify_gradient(bench1, k_zero, n_mc=10**5, seed=0)
        assert rep.passed
        assert rep.fd_rel_err < 1e-7
        assert rep.max_abs_z < 3.0
        assert rep.n_mc == 10**5
        # MC route agrees with the closed form well inside its own error bars
        np.testing.assert_allclose(rep.mc_mean, rep.closed_form, atol=5 * rep.mc_se.max())

    def test_multivariate_passes(self):
        inst = L.generate_instance(d=3, k=2, seed=1)
        pol = L.initial_stable_gain(inst, seed=1)
        rep = L.verify_gradient(inst, pol, n_mc=10**5, seed=1)
        assert rep.fd_rel_err < 1e-5
        assert rep.max_abs_z < 4.0
        assert rep.z_scores.shape == (2, 3)

    def test_needs_exploration_noise(self, bench0, k_zero):
        with pytest.raises(ValueError, match="sigma"):
            L.verify_gradient(bench0, k_zero, n_mc=100)

    def test_n_mc_validation(self, bench1, k_zero):
        with pytest.raises(ValueError, match="n_mc"):
            L.verify_gradient(bench1, k_zero, n_mc=1)

    def test_to_dict_round_trips_through_json(self, bench1, k_zero):
        rep = L.verify_gradient(bench1, k_zero, n_mc=10**4, seed=0)
        blob = json.dumps(rep.to_dict())
        back = json.loads(blob)
        assert back["passed"] == rep.passed
        assert back["n_mc"] == 10**4


class TestVerifyCriticTarget:
    def test_scalar_benchmark(self, bench1, k_zero):
        rep = L.verify_critic_target(bench1, k_zero, n_mc=10**5, seed=0)
        assert not rep.ill_conditioned
        assert rep.max_abs_z < 5.0
        assert rep.j_rel_err <= 1e-8
        assert rep.theta_rel_err <= 1e-8
        assert rep.passed

    def test_two_by_one_instance(self):
        inst = L.generate_instance(d=2, k=1, seed=3)
        pol = L.initial_stable_gain(inst, seed=3)
        rep = L.verify_critic_target(inst, pol, n_mc=10**5, seed=3)
        assert rep.passed

    def test_degenerate_joint_covariance(self, bench0, k_zero):
        # sigma = 0 with K = 0 collapses the action coordinate entirely
        rep = L.verify_critic_target(bench0, k_zero, n_mc=50_000, seed=0)
        assert rep.ill_conditioned
        assert rep.j_rel_err is None
        assert rep.theta_rel_err is None
        assert rep.passed == (rep.max_abs_z < 5.0)

    def test_n_mc_validation(self, bench1, k_zero):
        with pytest.raises(ValueError, match="n_mc"):
            L.verify_critic_target(bench1, k_zero, n_mc=10)


class TestRunExperiment:
    def test_artifact_layout(self, tmp_path, bench0):
        cfg = L.ExperimentConfig(
            instance=bench0,
            actor=L.ActorConfig(n_outer=4, critic_mode=L.Exact()),
            k0=[[0.0]],
            trials=3,
            out_dir=str(tmp_path),
        )
        art = L.run_experiment(cfg)
        assert art.parent == tmp_path
        assert art.name.startswith("run_")
        assert len(art.name) == len("run_") + 12
        names = sorted(p.name for p in art.iterdir())
        assert names == [
            "manifest.json",
            "summary.json",
            "trial_000.csv",
            "trial_001.csv",
            "trial_002.csv",
        ]
        summary = json.loads((art / "summary.json").read_text())
        assert summary["trials"] == 3
        assert summary["success_rate"] == 1.0
        assert summary["final_gap_median"] < 1e-6
        manifest = json.loads((art / "manifest.json").read_text())
        assert manifest["digest"] == art.name[len("run_"):]
        assert manifest["k0"] == [[0.0]]
        rebuilt = L.ProblemInstance.from_dict(manifest["instance"])
        assert rebuilt.to_json() == bench0.to_json()

    def test_rerun_byte_identical(self, tmp_path, bench1):
        cfg = L.ExperimentConfig(
            instance=bench1,
            actor=L.ActorConfig(n_outer=2, critic_T=2_000, seed=9),
            k0=[[0.0]],
            trials=2,
            out_dir=str(tmp_path),
        )
        art1 = L.run_experiment(cfg)
        first = {p.name: p.read_bytes() for p in art1.iterdir() if p.suffix == ".csv"}
        manifest1 = (art1 / "manifest.json").read_bytes()
        art2 = L.run_experiment(cfg)
        assert art2 == art1
        for name, blob in first.items():
            assert (art1 / name).read_bytes() == blob
        assert (art1 / "manifest.json").read_bytes() == manifest1

    def test_trials_differ_and_are_seeded(self, tmp_path, bench1):
        cfg = L.ExperimentConfig(
            instance=bench1,
            actor=L.ActorConfig(n_outer=1, critic_T=1_000, seed=0),
            k0=[[0.0]],
            trials=2,
            out_dir=str(tmp_path),
        )
        art = L.run_experiment(cfg)
        a = (art / "trial_000.csv").read_bytes()
        b = (art / "trial_001.csv").read_bytes()
        assert a != b
        summary = json.loads((art / "summary.json").read_text())
        seeds = [r["seed"] for r in summary["trial_results"]]
        assert len(set(seeds)) == 2

    def test_generates_from_recipe(self, tmp_path):
        cfg = L.ExperimentConfig(
            instance=L.InstanceSpec(d=2, k=1, seed=6),
            actor=L.ActorConfig(n_outer=2, critic_mode=L.Exact()),
            trials=1,
            out_dir=str(tmp_path),
        )
        art = L.run_experiment(cfg)
        manifest = json.loads((art / "manifest.json").read_text())
        assert manifest["config"]["instance"]["generate"]["d"] == 2
        assert manifest["config"]["k0"] == "auto"
        inst = L.ProblemInstance.from_dict(manifest["instance"])
        np.testing.assert_array_equal(
            inst.A, L.generate_instance(d=2, k=1, seed=6).A
        )

    def test_failed_trial_is_recorded_not_raised(self, tmp_path, bench0):
        # a huge fixed step blows past the stable region on round one
        cfg = L.ExperimentConfig(
            instance=bench0,
            actor=L.ActorConfig(n_outer=3, gamma=50.0, critic_mode=L.Exact()),
            k0=[[0.0]],
            trials=2,
            out_dir=str(tmp_path),
        )
        art = L.run_experiment(cfg)
        summary = json.loads((art / "summary.json").read_text())
        assert summary["success_rate"] == 0.0
        assert summary["final_gap_median"] is None
        # instability inside run() still yields a partial log and a CSV
        assert all("file" in r for r in summary["trial_results"])
        assert all(r["stable"] is False for r in summary["trial_results"])

    def test_env_var_out_dir(self, tmp_path, monkeypatch, bench0):
        monkeypatch.setenv(ENV_OUT_DIR, str(tmp_path / "from_env"))
        cfg = L.ExperimentConfig(
            instance=bench0,
            actor=L.ActorConfig(n_outer=1, critic_mode=L.Exact()),
            k0=[[0.0]],
        )
        art = L.run_experiment(cfg)
        assert art.parent == tmp_path / "from_env"


class TestCli:
    def test_gen_prints_instance(self, capsys):
        rc = L.main(["gen", "--d", "2", "--k", "1", "--seed", "3"])
        assert rc == 0
        inst = L.ProblemInstance.from_json(capsys.readouterr().out)
        assert inst.d == 2 and inst.k == 1

    def test_gen_writes_file(self, tmp_path, capsys):
        out = tmp_path / "inst.json"
        rc = L.main(["gen", "--d", "2", "--k", "1", "--seed", "3", "--out", str(out)])
        assert rc == 0
        assert capsys.readouterr().out == ""
        L.ProblemInstance.from_json(out.read_text())

    def test_oracle_on_saved_instance(self, tmp_path, capsys, bench0):
        path = tmp_path / "bench0.json"
        path.write_text(bench0.to_json())
        rc = L.main(["oracle", "--instance", str(path), "--gain", "[[0.0]]"])
        assert rc == 0
        out = json.loads(capsys.readouterr().out)
        assert out["J"] == pytest.approx(4.0 / 3.0, rel=1e-12)

    def test_oracle_unstable_gain_exits_2(self, tmp_path, capsys, bench0):
        path = tmp_path / "bench0.json"
        path.write_text(bench0.to_json())
        rc = L.main(["oracle", "--instance", str(path), "--gain", "[[-2.0]]"])
        assert rc == 2
        assert "error: UnstablePolicy" in capsys.readouterr().err

    def test_gtd_smoke(self, tmp_path, capsys, bench1):
        path = tmp_path / "bench1.json"
        path.write_text(bench1.to_json())
        rc = L.main(
            ["gtd", "--instance", str(path), "--gain", "[[0.0]]",
             "--critic-T", "5000", "--alpha", "0.5"]
        )
        assert rc == 0
        out = json.loads(capsys.readouterr().out)
        assert out["J"] == pytest.approx(11.0 / 3.0, rel=1e-12)
        assert abs(out["J_hat"] - out["J"]) / out["J"] < 0.5
        assert set(out["proj_hits"]) == {"vartheta1", "vartheta2", "omega1", "omega2"}

    def test_gtd_trace_file(self, tmp_path, bench1, capsys):
        path = tmp_path / "bench1.json"
        path.write_text(bench1.to_json())
        trace = tmp_path / "trace.csv"
        rc = L.main(
            ["gtd", "--instance", str(path), "--gain", "[[0.0]]",
             "--critic-T", "1000", "--trace", str(trace), "--trace-every", "200"]
        )
        assert rc == 0
        capsys.readouterr()
        lines = trace.read_text().splitlines()
        assert lines[0] == "t,vartheta1,theta_err,omega_norm,proj_hits"
        assert len(lines) == 6

    def test_ac_exact_batch(self, tmp_path, capsys):
        rc = L.main(
            ["ac", "--d", "2", "--k", "1", "--gen-seed", "4", "--mode", "exact",
             "--n-outer", "5", "--trials", "2", "--out-dir", str(tmp_path)]
        )
        assert rc == 0
        lines = capsys.readouterr().out.splitlines()
        art = tmp_path / lines[0].split("/")[-1]
        assert art.is_dir()
        tail = json.loads("\n".join(lines[1:]))
        assert tail["trials"] == 2
        assert tail["success_rate"] == 1.0

    def test_ac_config_file_with_flag_override(self, tmp_path, capsys, bench0):
        inst_path = tmp_path / "inst.json"
        inst_path.write_text(bench0.to_json())
        conf_path = tmp_path / "conf.json"
        conf_path.write_text(json.dumps({
            "mode": "exact", "n_outer": 50, "gain": "[[0.0]]",
            "out_dir": str(tmp_path / "batch"),
        }))
        rc = L.main(
            ["ac", "--instance", str(inst_path), "--config", str(conf_path),
             "--n-outer", "3"]
        )
        assert rc == 0
        capsys.readouterr()
        runs = list((tmp_path / "batch").iterdir())
        assert len(runs) == 1
        manifest = json.loads((runs[0] / "manifest.json").read_text())
        assert manifest["config"]["actor"]["n_outer"] == 3  # flag beat the file
        assert manifest["config"]["actor"]["critic_mode"] == {"mode": "exact"}

    def test_ac_off_mode_requires_behavior(self, tmp_path, bench1):
        inst_path = tmp_path / "inst.json"
        inst_path.write_text(bench1.to_json())
        with pytest.raises(SystemExit):
            L.main(["ac", "--instance", str(inst_path), "--mode", "off"])

    def test_verify_gradient_suite(self, tmp_path, capsys, bench1):
        path = tmp_path / "bench1.json"
        path.write_text(bench1.to_json())
        rc = L.main(
            ["verify", "--instance", str(path), "--gain", "[[0.0]]",
             "--suite", "gradient", "--n-mc", "100000"]
        )
        assert rc == 0
        out = json.loads(capsys.readouterr().out)
        assert out["gradient"]["passed"] is True
        assert "critic_target" not in out

    def test_verify_critic_suite(self, tmp_path, capsys, bench1):
        path = tmp_path / "bench1.json"
        path.write_text(bench1.to_json())
        rc = L.main(
            ["verify", "--instance", str(path), "--gain", "[[0.0]]",
             "--suite", "critic", "--n-mc", "50000"]
        )
        assert rc == 0
        out = json.loads(capsys.readouterr().out)
        assert out["critic_target"]["passed"] is True

    def test_missing_dimensions_exit(self):
        with pytest.raises(SystemExit):
            L.main(["oracle", "--gain", "auto"])

    def test_no_command_exits(self):
        with pytest.raises(SystemExit):
            L.main([])
