import json

import numpy as np
import pytest

from stochwave.cli import main
from stochwave.diffusion import Diffusion
from stochwave.drift import PolynomialDrift
from stochwave.experiments import (
    AnalyticStudy,
    ExperimentConfig,
    PRESETS,
    RateStudy,
    StabilityStudy,
    config_from_dict,
    config_to_dict,
    manifest_hash,
    preset_config,
    run_experiment,
    validate_config,
)
from stochwave.fields import Constant, CosineProduct


def _tiny_rate_config(threads=1, seed=77):
    return ExperimentConfig(
        name="tiny",
        dimension=1,
        drift=PolynomialDrift([-1.0, 0.0, -1.0], alpha=1.0, lam=0.5),
        diffusion=Diffusion.linear(1.0),
        h1=CosineProduct(kx=1),
        h2=Constant(0.0),
        n_samples=6,
        master_seed=seed,
        threads=threads,
        studies=[
            RateStudy(
                mode="spatial", levels=[4, 8], taus=[0.01], T=0.05,
                reference_extra_levels=1, label="spatial_rates",
            ),
            StabilityStudy(level=4, tau=0.02, T=0.1, label="stability"),
        ],
    )


# ---------------------------------------------------------------------------
# Presets and config plumbing
# ---------------------------------------------------------------------------

@pytest.mark.parametrize("name", sorted(PRESETS))
def test_presets_validate(name):
    for paper in (False, True):
        cfg = preset_config(name, paper_scale=paper)
        assert validate_config(cfg) == []
        assert cfg.n_samples == (5000 if paper and name != "lin-det-check" else cfg.n_samples)


def test_preset_paper_scale_sample_count():
    assert preset_config("test1a").n_samples == 200
    assert preset_config("test1a", paper_scale=True).n_samples == 5000


def test_unknown_preset():
    with pytest.raises(KeyError):
        preset_config("test9z")


def test_config_dict_roundtrip():
    cfg = _tiny_rate_config()
    d = config_to_dict(cfg)
    back = config_from_dict(json.loads(json.dumps(d)))
    assert config_to_dict(back) == d
    assert manifest_hash(back) == manifest_hash(cfg)


def test_validation_even_degree_drift():
    cfg = _tiny_rate_config()
    cfg.drift = PolynomialDrift([-1.0, -1.0], alpha=1.0, lam=0.5)
    problems = validate_config(cfg)
    assert any("odd" in p and p.startswith("drift:") for p in problems)


def test_validation_bad_ladder():
    cfg = _tiny_rate_config()
    cfg.studies[0].levels = [4, 12]
    problems = validate_config(cfg)
    assert any("studies[0]" in p for p in problems)


def test_validation_non_integral_steps():
    cfg = _tiny_rate_config()
    cfg.studies[1].tau = 0.03
    problems = validate_config(cfg)
    assert any("integer multiple" in p for p in problems)


# ---------------------------------------------------------------------------
# Runner outputs
# ---------------------------------------------------------------------------

def test_run_experiment_writes_outputs(tmp_path):
    cfg = _tiny_rate_config()
    result = run_experiment(cfg, tmp_path)
    rate_csv = tmp_path / "tiny_spatial_rates.csv"
    stab_csv = tmp_path / "tiny_stability.csv"
    det_csv = tmp_path / "tiny_stability_deterministic.csv"
    manifest = tmp_path / "tiny_manifest.json"
    for f in (rate_csv, stab_csv, det_csv, manifest):
        assert f.exists()

    meta = json.loads(manifest.read_text())
    assert meta["manifest_hash"] == manifest_hash(cfg)
    assert meta["config"]["n_samples"] == 6
    assert set(meta["outputs"]) == {
        "tiny_spatial_rates.csv",
        "tiny_stability.csv",
        "tiny_stability_deterministic.csv",
    }

    text = rate_csv.read_text()
    assert f"# manifest_hash: {manifest_hash(cfg)}" in text
    header = [l for l in text.splitlines() if not l.startswith("#")][0]
    assert header == "param,l2,l2_order,h1,h1_order,dtl2,dtl2_order"

    stab_lines = [l for l in stab_csv.read_text().splitlines() if not l.startswith("#")]
    assert stab_lines[0].startswith("t,mean_l2sq,min_l2sq,max_l2sq,mean_h1sq")
    assert stab_lines[0].endswith("mean_H,mean_H2,mean_H4,subset_fraction")
    assert len(stab_lines) == 1 + 6  # header + nodes of T/tau = 5 steps

    assert result.n_failures == 0
    assert result.max_energy_violation <= 1e-8


def test_rerun_is_byte_identical(tmp_path):
    cfg = _tiny_rate_config()
    run_experiment(cfg, tmp_path / "a")
    run_experiment(_tiny_rate_config(), tmp_path / "b")
    for name in ("tiny_spatial_rates.csv", "tiny_stability.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_thread_count_does_not_change_outputs(tmp_path):
    run_experiment(_tiny_rate_config(threads=1), tmp_path / "t1")
    run_experiment(_tiny_rate_config(threads=2), tmp_path / "t2")
    for name in ("tiny_spatial_rates.csv", "tiny_stability.csv"):
        a = (tmp_path / "t1" / name).read_bytes()
        b = (tmp_path / "t2" / name).read_bytes()
        assert a == b


def test_analytic_study_runs(tmp_path):
    cfg = ExperimentConfig(
        name="lincheck",
        dimension=1,
        drift=PolynomialDrift([0.0]),
        diffusion=Diffusion.zero(),
        h1=CosineProduct(kx=1),
        h2=Constant(0.0),
        n_samples=1,
        studies=[AnalyticStudy(levels=[4, 8], tau=1e-3, T=0.05)],
    )
    result = run_experiment(cfg, tmp_path)
    assert (tmp_path / "lincheck_analytic_rates.csv").exists()
    assert result.studies[0].table.l2[1] < result.studies[0].table.l2[0]


def test_run_experiment_rejects_invalid(tmp_path):
    cfg = _tiny_rate_config()
    cfg.scheme = "leapfrog"
    with pytest.raises(ValueError):
        run_experiment(cfg, tmp_path)


# ---------------------------------------------------------------------------
# Command line
# ---------------------------------------------------------------------------

def test_cli_config_run(tmp_path):
    cfg_file = tmp_path / "exp.json"
    cfg_file.write_text(json.dumps(config_to_dict(_tiny_rate_config())))
    rc = main(["--config", str(cfg_file), "--out", str(tmp_path / "out"),
               "--samples", "4", "--seed", "123"])
    assert rc == 0
    meta = json.loads((tmp_path / "out" / "tiny_manifest.json").read_text())
    assert meta["config"]["n_samples"] == 4  # flag beats file
    assert meta["config"]["master_seed"] == 123


def test_cli_tau_override(tmp_path):
    cfg_file = tmp_path / "exp.json"
    cfg = _tiny_rate_config()
    cfg.studies = [cfg.studies[1]]  # stability only
    cfg_file.write_text(json.dumps(config_to_dict(cfg)))
    rc = main(["--config", str(cfg_file), "--out", str(tmp_path / "out"),
               "--tau", "0.01", "--samples", "2"])
    assert rc == 0
    meta = json.loads((tmp_path / "out" / "tiny_manifest.json").read_text())
    assert meta["config"]["studies"][0]["tau"] == 0.01


def test_cli_invalid_drift_exits_2(tmp_path, capsys):
    cfg = _tiny_rate_config()
    cfg.drift = PolynomialDrift([-1.0, -1.0], alpha=1.0, lam=0.5)  # even degree
    cfg_file = tmp_path / "bad.json"
    cfg_file.write_text(json.dumps(config_to_dict(cfg)))
    rc = main(["--config", str(cfg_file), "--out", str(tmp_path / "out")])
    assert rc == 2
    err = capsys.readouterr().err
    assert "odd" in err


def test_cli_unreadable_config_exits_2(tmp_path):
    rc = main(["--config", str(tmp_path / "missing.json"), "--out", str(tmp_path)])
    assert rc == 2


def test_cli_rejects_unknown_preset():
    with pytest.raises(SystemExit):
        main(["--preset", "nope"])
