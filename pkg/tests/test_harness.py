import numpy as np
import pytest

from distfield.exceptions import ConfigError
from distfield.harness import (
    DESK_K_VALUES,
    PROFILES,
    SWEEP_COLUMNS,
    ExperimentConfig,
    run_sweep,
    run_trial,
    summarize,
    write_outlier_csv,
    write_sweep_csv,
    write_trials_csv,
)
from distfield.estimator import run_em
from distfield.metrics import TrialResult
from distfield.netsim import PLACEMENT, SENSING, derive_rng, place_sensors, simulate

REF = ExperimentConfig()
NOISELESS = ExperimentConfig(levels=1024, step=8.0 / 1024, sigma2=1e-6, eta2=1e-6)


def test_reference_defaults():
    assert REF.init_theta().tolist() == [9.0, 3.0, 3.0]
    assert REF.K_values == DESK_K_VALUES
    assert REF.noise().sigma2 == pytest.approx(0.39367451617790655, rel=1e-12)
    assert REF.noise().eta2 == pytest.approx(0.4016850322924817, rel=1e-10)


def test_trial_deterministic():
    assert run_trial(REF, 10, 3) == run_trial(REF, 10, 3)


def test_trials_differ():
    assert run_trial(REF, 10, 0).theta_hat != run_trial(REF, 10, 1).theta_hat


def test_near_noiseless_trials():
    for t in range(10):
        r = run_trial(NOISELESS, 50, t)
        assert r.converged and r.se <= 1e-4


def test_dense_network_mostly_converges():
    cfg = REF.replace(K_values=(40,), trials=100)
    row = run_sweep(cfg).row(40)
    assert row.n_converged >= 90


def test_failed_trial_carries_sentinels():
    # seed 0, K=10 contains divergent trials
    res = run_sweep(REF.replace(K_values=(10,), trials=100))
    bad = [t for t in res.trials[10] if t.failure_reason]
    assert bad
    for t in bad:
        assert not t.converged and t.se == np.inf and t.ise == np.inf and t.diverged
    row = res.row(10)
    assert row.se.n_nonfinite == len(bad)
    assert row.n_converged + row.n_failed == 100


def test_single_trial_sweep():
    cfg = REF.replace(K_values=(15,), trials=1)
    res = run_sweep(cfg)
    assert len(res.rows) == 1
    t = res.trials[15][0]
    assert t == run_trial(cfg, 15, 0)
    assert res.rows[0].se.median == t.se


def test_parallel_matches_serial():
    cfg = REF.replace(K_values=(10, 20), trials=6)
    a, b = run_sweep(cfg, n_jobs=1), run_sweep(cfg, n_jobs=2)
    assert a.rows == b.rows
    assert a.trials == b.trials


def _manual_trial(cfg, K, placement_trial, sensing_trial):
    grid = place_sensors(K, cfg.region, derive_rng(cfg.master_seed, K, placement_trial, PLACEMENT))
    real = simulate(cfg.field(), grid, cfg.quantizer(), cfg.noise(),
                    derive_rng(cfg.master_seed, K, sensing_trial, SENSING))
    return run_em(real.received, grid, cfg.quantizer(), cfg.noise(), cfg.init_theta(), cfg.em)


def test_trial_streams():
    r = run_trial(REF, 20, 4)
    assert r.theta_hat == tuple(_manual_trial(REF, 20, 4, 4).theta_hat)


def test_fixed_grid_reuses_placement():
    cfg = REF.replace(fixed_grid=True)
    r = run_trial(cfg, 20, 4)
    assert r.theta_hat == tuple(_manual_trial(cfg, 20, 0, 4).theta_hat)
    assert r.theta_hat != run_trial(REF, 20, 4).theta_hat


def test_summarize_accounting():
    results = [TrialResult(i, 10, (8.0, 4.0, 4.0), se, se, se < 5, 7) for i, se in
               enumerate([0.1, 0.2, 2.0, np.inf])]
    row = summarize(10, results)
    assert row.n_converged == 3 and row.n_failed == 1
    assert row.outlier_frac == 0.5
    assert row.se.n_nonfinite == 1
    assert row.mean_iters == 7.0


def test_profiles():
    assert PROFILES["desk"]["trials"] == 100
    assert PROFILES["paper"]["trials"] == 1000
    assert max(PROFILES["paper"]["K_values"]) == 200


def test_config_validation():
    with pytest.raises(ConfigError):
        REF.replace(trials=0)
    with pytest.raises(ConfigError):
        REF.replace(K_values=())
    with pytest.raises(ConfigError):
        REF.replace(sigma2=0.1)
    with pytest.raises(ConfigError):
        REF.replace(step=-1.0)
    with pytest.raises(ConfigError):
        REF.replace(init=(-1.0, 3.0, 3.0))


def test_csv_writers(tmp_path):
    res = run_sweep(REF.replace(K_values=(10, 20, 30, 40), trials=3))
    write_sweep_csv(res, tmp_path / "s.csv")
    write_trials_csv(res, tmp_path / "t.csv")
    write_outlier_csv(res, tmp_path / "o.csv", thresholds=[0.0, 1.0])
    s = (tmp_path / "s.csv").read_text().splitlines()
    assert s[0] == ",".join(SWEEP_COLUMNS) and len(s) == 5
    assert len((tmp_path / "t.csv").read_text().splitlines()) == 13
    assert len((tmp_path / "o.csv").read_text().splitlines()) == 9
    # full round-trip precision
    first = s[1].split(",")
    assert float(first[1]) == res.rows[0].se.median
