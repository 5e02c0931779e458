import json
import shutil

import numpy as np
import pytest

from dqanneal import nmrsim
from dqanneal.harness import ExperimentConfig, compile_or_load, run_classical, run_single, run_sweep
from dqanneal.harness import cli, runner
from dqanneal.harness.figures import emit_figures
from dqanneal.nmrsim import NoiseConfig


@pytest.fixture
def workdir(compiled, tmp_path):
    """A fresh output directory whose cache already holds both programs."""
    src = compiled["neg"][0].output_dir
    shutil.copytree(f"{src}/cache", tmp_path / "cache")
    return tmp_path


def small(workdir, **kw):
    base = dict(output_dir=str(workdir), monte_carlo_runs=3, noise=NoiseConfig(n_slices=5), sweep=(0.0, 0.5))
    return ExperimentConfig(**{**base, **kw})


def test_config_roundtrip(tmp_path):
    cfg = ExperimentConfig(instance="pos", seed=5, sweep=(0.0, 0.1))
    cfg.save(tmp_path / "c.json")
    back = ExperimentConfig.load(tmp_path / "c.json")
    assert back == cfg and back.config_hash() == cfg.config_hash()


def test_config_validation():
    with pytest.raises(ValueError):
        ExperimentConfig(sweep=(0.0, 2.0))
    with pytest.raises(ValueError):
        ExperimentConfig(fidelity_convention="cubed")
    with pytest.raises(ValueError):
        ExperimentConfig.from_dict({"bogus": 1})


def test_compile_hash_scope():
    a = ExperimentConfig()
    assert a.compile_hash() == a.with_gradient(0.7).with_(seed=3, output_dir="x").compile_hash()
    assert a.compile_hash() != a.with_(instance="pos").compile_hash()
    assert a.compile_hash() != a.with_(compile_seed=1).compile_hash()
    assert a.config_hash() != a.with_gradient(0.7).config_hash()


def test_custom_instance():
    cfg = ExperimentConfig(instance="custom", custom_instance=dict(h1=1.0, h2=2.0, j12=-3.0, delta1=1.0, delta2=1.0))
    assert cfg.problem_instance().j12 == -3.0
    with pytest.raises(ValueError):
        ExperimentConfig(instance="custom")


def test_cache_reuse_skips_optimizer(workdir, monkeypatch):
    monkeypatch.setattr(runner.digitizer, "compile_program", lambda *a, **k: pytest.fail("recompiled"))
    for label in ("neg", "pos"):
        blocks, program, hit = compile_or_load(small(workdir, instance=label))
        assert hit and len(blocks) == 235 and blocks[0].target is not None


def test_cache_key_mismatch_recompiles(workdir, monkeypatch, caplog):
    cfg = small(workdir)
    cached, _, _ = compile_or_load(cfg)
    key = workdir / "cache" / cfg.compile_hash() / "key.json"
    key.write_text('{"tampered": true}\n')
    calls = []
    monkeypatch.setattr(runner.digitizer, "compile_program", lambda *a, **k: calls.append(1) or cached)
    _, _, hit = compile_or_load(cfg)
    assert not hit and calls == [1] and "mismatch" in caplog.text
    assert json.loads(key.read_text()) == json.loads(runner.canonical_json(cfg.compile_key()))


def test_run_single_outputs(workdir):
    art = run_single(small(workdir))
    assert art.ok and art.cache_hit
    rows = nmrsim.read_snapshot_csv(art.directory / "quantum.csv")
    assert [r["k"] for r in rows] == list(range(0, 235, 3))
    m = json.loads((art.directory / "manifest.json").read_text())
    assert m["seed"] == 0 and m["compile_hash"] == small(workdir).compile_hash()
    assert set(m["files"]) == {"quantum.csv", "classical.csv"}
    assert all(c["fidelity_std"] == 0 for c in nmrsim.read_snapshot_csv(art.directory / "classical.csv"))


def test_noiseless_final_fidelity(workdir):
    cfg = small(workdir, noise=NoiseConfig.noiseless())
    art = run_single(cfg)
    assert art.record.samples["fidelity"][0, -1] >= 0.98


def test_classical_csv_independent_of_gradient(workdir):
    a = run_single(small(workdir), 0.0)
    b = run_single(small(workdir), 0.3)
    assert (a.directory / "classical.csv").read_bytes() == (b.directory / "classical.csv").read_bytes()


def test_manifest_rerun_reproduces_outputs(workdir):
    art = run_single(small(workdir, seed=11), 0.2)
    before = (art.directory / "quantum.csv").read_bytes()
    again = runner.rerun_from_manifest(art.directory / "manifest.json")
    assert again.directory == art.directory
    assert (art.directory / "quantum.csv").read_bytes() == before


def test_classical_result():
    res = run_classical(ExperimentConfig(instance="pos"))
    assert res.time_average_fidelity == pytest.approx(0.972, abs=0.005)
    assert len(res.snapshot_rows) == 79
    # success is scored against the same ground states
    assert res.success[-1] == pytest.approx(res.fidelity[-1], abs=1e-9)


def test_ideal_negativity_peak_location():
    ideal = runner.ideal_trajectory(ExperimentConfig())
    t_peak = ideal["t_us"][np.argmax(ideal["negativity"])]
    assert 0.15 <= t_peak <= 0.35
    assert ideal["fidelity"].min() >= 0.997


def test_sweep_and_deterministic_figures(workdir):
    cfg = small(workdir)
    summary, arts = run_sweep(cfg)
    assert [r["gradient"] for r in summary.rows] == [0.0, 0.5]
    back = runner.SweepSummary.from_csv(workdir / "sweep_neg.csv")
    assert np.allclose(back.column("mean_fidelity"), summary.column("mean_fidelity"))
    assert back.classical_fidelity == summary.classical_fidelity
    svgs = sorted((workdir / "figures").glob("*.svg"))
    names = {p.name for p in svgs}
    assert {"schedule_neg.svg", "ideal_neg.svg", "trajectories_neg.svg", "sweep_neg.svg"} <= names
    before = {p.name: p.read_bytes() for p in svgs}
    made, missing = emit_figures(workdir)
    assert {p.name: p.read_bytes() for p in made} == before
    assert any("pos" in m for m in missing)


def test_sweep_with_workers(workdir):
    summary, _ = run_sweep(small(workdir, sweep=(0.0, 0.1), instance="pos"), workers=2, figures=False)
    serial, _ = run_sweep(small(workdir, sweep=(0.0, 0.1), instance="pos"), figures=False)
    assert summary.rows == serial.rows


def test_sweep_aborts_on_failed_member(workdir, monkeypatch):
    real = runner.run_single

    def flaky(cfg, g=None):
        art = real(cfg, g)
        art.checks["forced"] = g == 0.0
        return art

    monkeypatch.setattr(runner, "run_single", flaky)
    with pytest.raises(runner.SweepError):
        run_sweep(small(workdir), figures=False)
    assert (workdir / "neg" / "G_0.5" / "quantum.csv").exists()
    assert not (workdir / "sweep_neg.csv").exists()


def test_cli_verbs(workdir, capsys, tmp_path):
    assert cli.main(["init-config", "--instance", "pos"]) == 0
    cfg = json.loads(capsys.readouterr().out)
    assert cfg["instance"] == "pos"
    cfg["noise"]["n_slices"] = 3
    (tmp_path / "cfg.json").write_text(json.dumps(cfg))
    assert cli.main(["classical", "--config", str(tmp_path / "cfg.json")]) == 0
    assert "0.97" in capsys.readouterr().out
    assert cli.main(["compile", "--out", str(workdir)]) == 0
    assert "loaded 235 blocks" in capsys.readouterr().out
    args = ["run", "--config", str(tmp_path / "cfg.json"), "--out", str(workdir), "--gradient", "0.1", "--runs", "2"]
    assert cli.main(args) == 0
    assert (workdir / "pos" / "G_0.1" / "manifest.json").exists()
    assert cli.main(["figures", "--out", str(workdir)]) == 0


def test_cli_invariant_failure_exit_code(workdir, monkeypatch):
    def boom(*a, **k):
        raise nmrsim.InvariantError("trace drifted")

    monkeypatch.setattr(runner.nmrsim, "run_protocol", boom)
    assert cli.main(["run", "--out", str(workdir), "--runs", "1"]) == 2
