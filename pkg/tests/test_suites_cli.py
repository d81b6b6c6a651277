import json
import types

import numpy as np
import pytest

from mdpmetric import (
    ConfigError,
    ExperimentConfig,
    adversarial_search,
    build_environment,
    cli_main,
    config_from_toml,
    make_chain_example,
    run_suite,
    save_mdp,
)
from mdpmetric.suites import SUITE_NAMES, config_to_dict


def _cfg(**kw):
    base = dict(suite="metric_baseline", environment="chain", gamma=0.9, epsilons=(0.5, 0.95))
    base.update(kw)
    return ExperimentConfig(**base)


# --- configuration ----------------------------------------------------------


def test_config_validation_names_the_field():
    with pytest.raises(ConfigError, match="suite"):
        _cfg(suite="nope")
    with pytest.raises(ConfigError, match="environment"):
        _cfg(environment="maze")
    with pytest.raises(ConfigError, match="gamma"):
        _cfg(gamma=1.0)
    with pytest.raises(ConfigError, match="epsilons"):
        _cfg(epsilons=(0.95, 0.5))
    with pytest.raises(ConfigError, match="epsilons"):
        _cfg(epsilons=())
    with pytest.raises(ConfigError, match="metric_tolerance"):
        _cfg(metric_tolerance=0.0)
    with pytest.raises(ConfigError, match="slip"):
        _cfg(environment="grid", slip=1.2)
    with pytest.raises(ConfigError, match="environment"):
        _cfg(suite="transfer_test", environment="chain")
    with pytest.raises(ConfigError, match="environment"):
        _cfg(suite="adversarial", environment="grid")


def test_config_from_toml_roundtrip(tmp_path):
    path = tmp_path / "exp.toml"
    path.write_text(
        'suite = "composition"\n'
        'environment = "chain"\n'
        "gamma = 0.9\n"
        "epsilons = [0.5, 0.95]\n"
        "seed = 3\n"
        "metric_tolerance = 1e-10\n"
    )
    cfg = config_from_toml(path)
    assert cfg.suite == "composition"
    assert cfg.epsilons == (0.5, 0.95)
    assert cfg.seed == 3
    assert cfg.metric_tolerance == 1e-10
    echo = config_to_dict(cfg)
    assert echo["suite"] == "composition" and echo["gamma"] == 0.9


def test_config_from_toml_rejects_unknown_and_bad_values(tmp_path):
    bad_key = tmp_path / "a.toml"
    bad_key.write_text('suite = "metric_baseline"\ngammma = 0.9\n')
    with pytest.raises(ConfigError, match="gammma"):
        config_from_toml(bad_key)

    no_suite = tmp_path / "b.toml"
    no_suite.write_text("gamma = 0.9\n")
    with pytest.raises(ConfigError, match="suite"):
        config_from_toml(no_suite)

    not_toml = tmp_path / "c.toml"
    not_toml.write_text("suite = [unclosed\n")
    with pytest.raises(ConfigError, match="TOML"):
        config_from_toml(not_toml)

    frac_side = tmp_path / "d.toml"
    frac_side.write_text('suite = "metric_baseline"\nside = 5.5\n')
    with pytest.raises(ConfigError, match="side"):
        config_from_toml(frac_side)

    with pytest.raises(ConfigError, match="cannot read"):
        config_from_toml(tmp_path / "missing.toml")


def test_build_environment_all_kinds():
    chain = build_environment(_cfg())
    assert chain.n_states == 3
    grid = build_environment(_cfg(environment="grid", side=3))
    assert grid.n_states == 9 and grid.gamma == 0.9
    rnd = build_environment(
        _cfg(suite="adversarial", environment="random", n_states=4, n_actions=2)
    )
    assert rnd.n_states == 4 and rnd.n_actions == 2


# --- suites ------------------------------------------------------------------


def test_metric_baseline_writes_deterministic_reports(tmp_path):
    cfg = _cfg()
    r1 = run_suite(cfg, output_dir=tmp_path / "a")
    r2 = run_suite(cfg, output_dir=tmp_path / "b")
    assert r1.ok and r2.ok
    assert r1.rows["array_mean"] == pytest.approx((1.9 + 0.9 + 1.0) / 3)
    report_a = (tmp_path / "a/metric_baseline/report.json").read_bytes()
    report_b = (tmp_path / "b/metric_baseline/report.json").read_bytes()
    assert report_a == report_b
    for name in ("metric.csv", "residuals.csv", "spectral.json", "metadata.json"):
        assert (tmp_path / "a/metric_baseline" / name).exists()
    meta = json.loads((tmp_path / "a/metric_baseline/metadata.json").read_text())
    assert "timings_seconds" in meta and "written_at" in meta
    doc = json.loads(report_a)
    assert doc["config"]["gamma"] == 0.9  # full config echo
    assert set(doc["rows"]) >= {
        "array_mean",
        "array_std",
        "frobenius",
        "spectral_radius",
        "condition_number",
        "eigen_entropy",
        "empirical_contraction",
    }


def test_output_dir_env_var(tmp_path, monkeypatch):
    monkeypatch.setenv("MDPMETRIC_OUTPUT_DIR", str(tmp_path / "envout"))
    report = run_suite(_cfg())
    assert report.ok
    assert (tmp_path / "envout/metric_baseline/report.json").exists()


def test_composition_suite_zero_drift_on_chain(tmp_path):
    cfg = _cfg(suite="composition")
    report = run_suite(cfg, output_dir=tmp_path)
    assert report.ok
    assert report.rows["rerun_drift_max"] == 0.0
    assert report.rows["requotient_drift_max"] == 0.0
    assert report.flags["idempotence_ok"]
    per = report.rows["per_epsilon"]
    assert [e["epsilon"] for e in per] == [0.5, 0.95]
    assert (tmp_path / "composition/quotient_0.95.json").exists()


def test_backward_stability_suite_on_chain(tmp_path):
    report = run_suite(_cfg(suite="backward_stability"), output_dir=tmp_path)
    assert report.ok
    assert report.rows["backward_drift_max"] == 0.0
    assert report.flags["partition_reconstructed"]
    # the informational abstract-MDP route is reported but not asserted zero
    assert "abstract_metric_drift" in report.rows["per_epsilon"][0]


def test_info_theory_and_compression_on_chain(tmp_path):
    info = run_suite(_cfg(suite="info_theory"), output_dir=tmp_path)
    assert info.ok
    comp = run_suite(_cfg(suite="compression_sweep"), output_dir=tmp_path)
    assert comp.ok
    counts = [e["n_classes"] for e in comp.rows["per_epsilon"]]
    assert counts == sorted(counts, reverse=True)
    assert comp.flags["classes_monotone_nonincreasing"]


def test_spectral_suite_on_chain(tmp_path):
    report = run_suite(_cfg(suite="spectral"), output_dir=tmp_path)
    assert report.ok
    assert abs(report.rows["trace_raw"]) <= 1e-9
    assert report.flags["trace_zero_raw"]
    spec = json.loads((tmp_path / "spectral/spectral.json").read_text())
    assert set(spec) == {"raw", "double_centered"}


def test_grid_only_suites_run_small(tmp_path):
    cfg = ExperimentConfig(
        suite="scaling", environment="grid", side=3, gamma=0.9, epsilons=(0.1, 0.5, 1.0)
    )
    report = run_suite(cfg, output_dir=tmp_path)
    assert report.ok
    assert report.rows["value_loss"] <= report.rows["bound_diam"] + 1e-6
    assert (tmp_path / "scaling/values.csv").exists()

    t = ExperimentConfig(
        suite="transfer_test", environment="grid", side=3, gamma=0.9,
        slip=0.07, perturbed_slip=0.1, epsilons=(0.5,),
    )
    rt = run_suite(t, output_dir=tmp_path)
    assert rt.ok
    assert rt.rows["transfer_mean_delta"] == pytest.approx(
        rt.rows["array_mean_perturbed"] - rt.rows["array_mean"]
    )

    p = ExperimentConfig(
        suite="perturb_sweep", environment="grid", side=3, gamma=0.9,
        perturb_slips=(0.05, 0.1), epsilons=(0.5,),
    )
    rp = run_suite(p, output_dir=tmp_path)
    assert rp.ok
    assert [e["slip"] for e in rp.rows["per_slip"]] == [0.05, 0.1]


# --- adversarial -------------------------------------------------------------


def test_adversarial_single_action_loss_is_zero(tmp_path):
    cfg = ExperimentConfig(
        suite="adversarial", environment="random", n_states=3, n_actions=1,
        gamma=0.9, seed=0, adversarial_generations=5,
    )
    report = run_suite(cfg, output_dir=tmp_path)
    assert report.ok
    # a single action admits a single policy: lifting cannot lose value
    # (up to the two value solvers' stopping tolerance)
    assert report.rows["value_loss"] == pytest.approx(0.0, abs=1e-7)
    trace_lines = (tmp_path / "adversarial/trace.csv").read_text().strip().splitlines()
    assert trace_lines[0] == "generation,best_objective"
    best = [float(line.split(",")[1]) for line in trace_lines[1:]]
    assert best == sorted(best)
    worst = json.loads((tmp_path / "adversarial/worst_mdp.json").read_text())
    assert worst["n_states"] == 3 and worst["n_actions"] == 1


def test_adversarial_constant_objective_sanity():
    cfg = ExperimentConfig(
        suite="adversarial", environment="random", n_states=3, n_actions=2,
        gamma=0.9, seed=1, adversarial_generations=50,
    )
    rep = adversarial_search(cfg, objective=lambda x: 1.25)
    assert rep.converged and rep.n_generations <= 2
    assert rep.best_objective == 1.25
    assert rep.ok  # invariants audited on the (arbitrary) final point still hold
    assert rep.invariant_report["strategy"] == "rand/1/bin"
    assert rep.invariant_report["population"] == min(15 * 6, 300)


def test_adversarial_search_is_deterministic():
    cfg = ExperimentConfig(
        suite="adversarial", environment="random", n_states=3, n_actions=2,
        gamma=0.9, seed=7, adversarial_generations=4,
    )
    a = adversarial_search(cfg)
    b = adversarial_search(cfg)
    np.testing.assert_array_equal(a.worst_rewards, b.worst_rewards)
    np.testing.assert_array_equal(a.objective_trace, b.objective_trace)


# --- cli ---------------------------------------------------------------------


def test_cli_metric_and_quotient_roundtrip(tmp_path, capsys):
    mdp_path = tmp_path / "chain.json"
    save_mdp(make_chain_example(0.9), mdp_path)
    assert cli_main(["metric", "--mdp", str(mdp_path), "--tol", "1e-9"]) == 0
    out = capsys.readouterr().out.strip().splitlines()
    assert len(out) == 3
    assert float(out[0].split()[1]) == pytest.approx(1.9)

    assert cli_main(["quotient", "--mdp", str(mdp_path), "--eps", "1.2"]) == 0
    out = capsys.readouterr().out.strip().splitlines()
    assert out[0] == "class 0: 0 1 2"  # single class

    assert cli_main(["plan", "--mdp", str(mdp_path), "--epsilon", "0.95"]) == 0
    out = capsys.readouterr().out
    assert "value_loss 0" in out

    assert cli_main(["logic", "--mdp", str(mdp_path), "--formula", "(reward 0)"]) == 0
    out = capsys.readouterr().out.strip().splitlines()
    assert out == ["s0 0", "s1 1", "s2 0"]


def test_cli_suite_and_exit_codes(tmp_path, capsys):
    config = tmp_path / "exp.toml"
    config.write_text(
        'suite = "metric_baseline"\nenvironment = "chain"\ngamma = 0.9\nepsilons = [0.5]\n'
    )
    assert cli_main(["suite", "--config", str(config), "--output-dir", str(tmp_path / "o")]) == 0
    out = capsys.readouterr().out
    assert "metric_baseline.metric_valid: pass" in out
    assert (tmp_path / "o/metric_baseline/report.json").exists()

    assert cli_main(["suite", "--config", str(tmp_path / "missing.toml")]) == 2
    bad = tmp_path / "bad.toml"
    bad.write_text('suite = "metric_baseline"\nwhatnot = 3\n')
    assert cli_main(["suite", "--config", str(bad)]) == 2
    assert "whatnot" in capsys.readouterr().err

    assert cli_main(["metric", "--mdp", str(tmp_path / "nope.json")]) == 2
    assert cli_main(["bogus-command"]) == 2
    mdp_path = tmp_path / "chain.json"
    save_mdp(make_chain_example(0.9), mdp_path)
    assert cli_main(["logic", "--mdp", str(mdp_path), "--formula", "(reward"]) == 2


def test_cli_invariant_failure_exit_code(tmp_path, monkeypatch, capsys):
    mdp_path = tmp_path / "chain.json"
    save_mdp(make_chain_example(0.9), mdp_path)
    fake = types.SimpleNamespace(
        epsilon=0.5, n_classes=1, loss=99.0, bound_eps=1.0, bound_diam=1.0,
        findings=("value loss 99 exceeds diameter bound 1",), ok=False,
    )
    monkeypatch.setattr("mdpmetric.cli.value_loss_report", lambda *a, **k: fake)
    assert cli_main(["plan", "--mdp", str(mdp_path), "--epsilon", "0.5"]) == 1
    assert "exceeds" in capsys.readouterr().err


def test_suite_names_cover_runners():
    assert len(SUITE_NAMES) == 10
