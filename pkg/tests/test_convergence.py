import json

import numpy as np
import pytest

import pfconv.convergence as convergence
from pfconv import ExperimentConfig, fit_loglog_slope, run_convergence_study
from pfconv.configfile import apply_overrides, load_config
from pfconv.convergence import ConvergenceReport, _aggregate, _rate_fits
from pfconv.errors import DomainError, InsufficientPoints, NonPositiveValue, StudyError
from pfconv.model import make_test_function
from pfconv.report import emit_report


def small_config(fixture_obs_path, **overrides):
    base = dict(
        observations=str(fixture_obs_path),
        particle_counts=(8, 16, 32),
        replicates=4,
        test_functions=("exp_neg",),
        moments=(2, 4),
        resampler="multinomial",
        master_seed=3,
        grid_dx=0.05,
        grid_x_max=12.0,
    )
    base.update(overrides)
    return ExperimentConfig(**base)


# ---------------------------------------------------------------------------
# rate fitting


def test_fit_exact_inverse_n():
    fit = fit_loglog_slope([(128, 1 / 128), (512, 1 / 512), (2048, 1 / 2048)])
    assert fit.slope == pytest.approx(-1.0, abs=1e-12)
    assert fit.r_squared == pytest.approx(1.0, abs=1e-12)


def test_fit_constant():
    fit = fit_loglog_slope([(100, 4.0), (400, 4.0), (1600, 4.0)])
    assert fit.slope == pytest.approx(0.0, abs=1e-12)


def test_fit_exact_inverse_n_squared():
    fit = fit_loglog_slope([(128, 128.0 ** -2), (512, 512.0 ** -2), (2048, 2048.0 ** -2)])
    assert fit.slope == pytest.approx(-2.0, abs=1e-12)


def test_fit_errors():
    with pytest.raises(InsufficientPoints):
        fit_loglog_slope([(128, 1.0), (512, 0.5)])
    with pytest.raises(InsufficientPoints):
        fit_loglog_slope([(128, 1.0), (128, 0.5), (512, 0.25)])
    with pytest.raises(NonPositiveValue):
        fit_loglog_slope([(128, 1.0), (512, 0.0), (2048, 0.25)])


def test_synthetic_error_injection_recovers_reference_slopes():
    # force per-replicate errors of exactly +/- N^(-1/2):
    # mse = 1/N (slope -1), fourth moment = 1/N^2 (slope -2)
    ns = (128, 512, 2048)
    phis = [make_test_function("one")]
    truth = np.zeros((3, 1))  # (T=3 steps, P=1)
    est = np.zeros((len(ns), 4, 3, 1))
    for i, n in enumerate(ns):
        est[i, 0::2] = n ** -0.5
        est[i, 1::2] = -(n ** -0.5)
    tables = {"normalized": _aggregate(est, truth, phis),
              "resampled": _aggregate(est, truth, phis)}
    cfg = ExperimentConfig(observations="unused.csv", particle_counts=ns,
                           replicates=4, test_functions=("one",))
    fits = _rate_fits(cfg, [1, 2, 3], tables)
    by_key = {(f["stage"], f["t"], f["moment"]): f for f in fits}
    assert by_key[("normalized", "mean", 2)]["slope"] == pytest.approx(-1.0, abs=1e-12)
    assert by_key[("normalized", "mean", 4)]["slope"] == pytest.approx(-2.0, abs=1e-12)


# ---------------------------------------------------------------------------
# config validation and files


def test_config_validation(fixture_obs_path):
    small_config(fixture_obs_path).validate()
    with pytest.raises(DomainError):
        small_config(fixture_obs_path, particle_counts=(16, 8)).validate()
    with pytest.raises(DomainError):
        small_config(fixture_obs_path, particle_counts=(1, 8)).validate()
    with pytest.raises(DomainError):
        small_config(fixture_obs_path, replicates=1).validate()
    with pytest.raises(DomainError):
        small_config(fixture_obs_path, test_functions=()).validate()
    with pytest.raises(DomainError):
        small_config(fixture_obs_path, moments=(3,)).validate()
    with pytest.raises(DomainError):
        small_config(fixture_obs_path, resampler="residual").validate()
    with pytest.raises(DomainError):
        small_config(fixture_obs_path, proposal="optimal").validate()


def test_config_file_roundtrip(tmp_path, fixture_obs_path):
    text = f"""
[model]
c = 0.5
eta = 0.1

[proposal]
kind = gamma
alpha = 1.25
beta = 0.5

[study]
observations = {fixture_obs_path}
particle_counts = 128, 512, 2048
replicates = 50
test_functions = exp_neg, one
moments = 2, 4
resampler = systematic
master_seed = 99

[oracle]
dx = 0.01
x_max = 15.0

[output]
csv = out/a.csv
json = out/a.json
"""
    path = tmp_path / "study.cfg"
    path.write_text(text)
    cfg = load_config(path)
    assert cfg.alpha == 1.25
    assert cfg.particle_counts == (128, 512, 2048)
    assert cfg.test_functions == ("exp_neg", "one")
    assert cfg.resampler == "systematic"
    assert cfg.master_seed == 99
    assert cfg.out_csv == "out/a.csv" and cfg.out_svg is None

    overridden = apply_overrides(cfg, replicates=10, alpha=None)
    assert overridden.replicates == 10 and overridden.alpha == 1.25


def test_committed_study_configs_parse(fixture_obs_path):
    import pathlib
    root = pathlib.Path(fixture_obs_path).parent.parent
    for name, alpha in (("acceptance_mse.cfg", 1.5), ("acceptance_l4.cfg", 1.25)):
        cfg = load_config(root / "configs" / name)
        cfg.validate()
        assert cfg.alpha == alpha
        assert cfg.particle_counts == (128, 512, 2048, 8192)
        assert cfg.replicates == 200
        assert (root / cfg.observations).exists()


def test_config_file_requires_observations(tmp_path):
    path = tmp_path / "bad.cfg"
    path.write_text("[model]\nc = 0.5\n")
    with pytest.raises(DomainError):
        load_config(path)
    with pytest.raises(DomainError):
        load_config(tmp_path / "missing.cfg")


# ---------------------------------------------------------------------------
# study runs


@pytest.fixture(scope="module")
def small_report(fixture_obs_path):
    return run_convergence_study(small_config(fixture_obs_path), workers=1)


def test_small_study_shapes(small_report):
    assert small_report.steps == tuple(range(1, 13))
    tab = small_report.tables["normalized"]["exp_neg"]
    assert len(tab["mse"]) == 3 and len(tab["mse"][0]) == 12
    assert not small_report.partial


def test_jensen_inequality(small_report):
    for stage in ("normalized", "resampled"):
        tab = small_report.tables[stage]["exp_neg"]
        mse = np.array(tab["mse"])
        l4 = np.array(tab["l4"])
        assert np.all(l4 >= mse ** 2 * (1 - 1e-12))


def test_report_roundtrip(small_report):
    data = small_report.to_dict()
    again = ConvergenceReport.from_dict(json.loads(json.dumps(data)))
    assert again.to_dict() == data
    assert again == small_report


def test_same_seed_reproduces_bytes(tmp_path, fixture_obs_path, small_report):
    rerun = run_convergence_study(small_config(fixture_obs_path), workers=1)
    assert rerun.to_dict() == small_report.to_dict()


def test_worker_count_does_not_change_results(tmp_path, fixture_obs_path, small_report):
    with_pool = run_convergence_study(small_config(fixture_obs_path), workers=3)
    assert with_pool.to_dict() == small_report.to_dict()
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    emit_report(small_report, "csv", a)
    emit_report(with_pool, "csv", b)
    assert a.read_bytes() == b.read_bytes()


def test_workers_env_cap(monkeypatch):
    import os
    cores = os.cpu_count() or 1
    monkeypatch.setenv(convergence.WORKERS_ENV, "1")
    assert convergence.resolve_workers(None) == 1  # env caps the default
    monkeypatch.setenv(convergence.WORKERS_ENV, str(cores + 10))
    assert convergence.resolve_workers(None) == cores  # cap never raises it
    assert convergence.resolve_workers(2) == 2  # explicit argument wins
    monkeypatch.delenv(convergence.WORKERS_ENV)
    assert convergence.resolve_workers(None) == cores


def test_partial_flush_on_failure(tmp_path, fixture_obs_path, monkeypatch):
    out_csv = tmp_path / "partial.csv"
    out_json = tmp_path / "partial.json"
    cfg = small_config(fixture_obs_path, out_csv=str(out_csv), out_json=str(out_json))

    real_cell = convergence._study_cell

    def failing_cell(args):
        _, _, n_idx, r = args
        if (n_idx, r) == (1, 2):
            raise RuntimeError("injected failure")
        return real_cell(args)

    monkeypatch.setattr(convergence, "_study_cell", failing_cell)
    with pytest.raises(StudyError, match=r"N=16, replicate=2"):
        run_convergence_study(cfg, workers=1)

    assert out_csv.exists() and out_json.exists()
    flushed = json.loads(out_json.read_text())
    assert flushed["partial"] is True
    # the csv keeps completed cells only: N=8 rows are all present
    lines = out_csv.read_text().splitlines()
    assert lines[0] == "phi,N,t,mse,mse_stderr,l4,l4_stderr"
    # N=8 completed, N=16 partially completed (still flushable aggregates),
    # N=32 never started and must be absent
    assert any(line.startswith("exp_neg,8,") for line in lines[1:])
    assert not any(line.startswith("exp_neg,32,") for line in lines[1:])


def test_estimates_stay_bounded(small_report):
    # |estimate - truth| <= sup + |truth| => mse <= (2 sup)^2; crude sanity
    tab = small_report.tables["normalized"]["exp_neg"]
    assert np.all(np.array(tab["mse"]) <= 4.0)
    assert np.all(np.array(tab["mse"]) >= 0.0)
