"""Monte Carlo sweeps over network size with independently seeded trials."""

from __future__ import annotations

import csv
import dataclasses
from dataclasses import dataclass, field as dc_field
from functools import lru_cache

import numpy as np
from joblib import Parallel, delayed

from .estimator import EmConfig, _FusionProblem, _run_em, loglik_is_monotone
from .exceptions import ConfigError
from .field import DEFAULT_RESOLUTION, DEFAULT_SPREAD, FieldParams, GaussianBellField, Region
from .metrics import BoxStats, TrialResult, box_stats, ise, location_se, outlier_curve
from .netsim import PLACEMENT, SENSING, NoiseConfig, calibrate_noise, derive_rng, place_sensors, simulate
from .quantizer import make_uniform

DESK_K_VALUES = tuple(range(5, 101, 5))
PAPER_K_VALUES = tuple(range(5, 201, 5))
PROFILES = {
    "desk": {"trials": 100, "K_values": DESK_K_VALUES},
    "paper": {"trials": 1000, "K_values": PAPER_K_VALUES},
}

SWEEP_COLUMNS = (
    "K",
    "se_median", "se_q25", "se_q75", "se_whisk_lo", "se_whisk_hi",
    "se_outlier_count", "se_n_diverged",
    "ise_median", "ise_q25", "ise_q75", "ise_whisk_lo", "ise_whisk_hi",
    "ise_outlier_count", "ise_n_diverged",
    "n_converged", "n_failed", "outlier_frac", "mean_iters",
)
TRIAL_COLUMNS = ("K", "trial", "mu", "xc", "yc", "se", "ise", "converged", "iterations")


@dataclass(frozen=True)
class ExperimentConfig:
    theta_true: FieldParams = FieldParams(8.0, 4.0, 4.0)
    spread: float = DEFAULT_SPREAD
    region: Region = Region()
    # network size for single runs (simulate / estimate)
    K: int = 10
    K_values: tuple = DESK_K_VALUES
    levels: int = 8
    step: float = 1.0
    offset: float = 0.0
    snr_o_db: float = 15.0
    snr_c_db: float = 15.0
    # explicit variances bypass SNR calibration
    sigma2: float | None = None
    eta2: float | None = None
    trials: int = 100
    master_seed: int = 0
    init_offset: tuple = (1.0, -1.0, -1.0)
    init: tuple | None = None
    em: EmConfig = EmConfig()
    resolution: int = DEFAULT_RESOLUTION
    fixed_grid: bool = False
    outlier_tau: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "K_values", tuple(int(k) for k in self.K_values))
        object.__setattr__(self, "init_offset", tuple(float(v) for v in self.init_offset))
        if self.init is not None:
            object.__setattr__(self, "init", tuple(float(v) for v in self.init))
        if int(self.trials) != self.trials or self.trials < 1:
            raise ConfigError(f"trials must be a positive integer, got {self.trials}",
                              field="trials")
        if int(self.K) != self.K or self.K < 1:
            raise ConfigError(f"K must be a positive integer, got {self.K}", field="K")
        if not self.K_values or min(self.K_values) < 1:
            raise ConfigError(f"K_values must be non-empty positive counts, got {self.K_values}",
                              field="K_values")
        if len(self.init_offset) != 3 or (self.init is not None and len(self.init) != 3):
            raise ConfigError("init and init_offset need three components", field="init")
        # construct sub-objects once for validation
        self.field()
        self.quantizer()
        if self.sigma2 is not None or self.eta2 is not None:
            if self.sigma2 is None or self.eta2 is None:
                raise ConfigError("sigma2 and eta2 must be given together", field="sigma2")
            NoiseConfig(self.sigma2, self.eta2)
        FieldParams.from_array(self.init_theta())

    def field(self) -> GaussianBellField:
        return GaussianBellField(self.theta_true, self.spread)

    def quantizer(self):
        return make_uniform(self.levels, self.step, self.offset)

    def noise(self) -> NoiseConfig:
        return _calibrated_noise(self)

    def init_theta(self) -> np.ndarray:
        if self.init is not None:
            return np.array(self.init, dtype=float)
        return self.theta_true.as_array() + np.array(self.init_offset)

    def replace(self, **changes) -> "ExperimentConfig":
        return dataclasses.replace(self, **changes)


@lru_cache(maxsize=64)
def _calibrated_noise(config: ExperimentConfig) -> NoiseConfig:
    # calibrated from the true field: the SNRs are design targets
    if config.sigma2 is not None:
        return NoiseConfig(config.sigma2, config.eta2)
    return calibrate_noise(config.field(), config.quantizer(), config.region,
                           config.snr_o_db, config.snr_c_db, config.resolution)


def run_trial(config: ExperimentConfig, K, trial_index) -> TrialResult:
    placement_key = (K, 0) if config.fixed_grid else (K, trial_index)
    grid = place_sensors(K, config.region, derive_rng(config.master_seed, *placement_key, PLACEMENT))
    field = config.field()
    quantizer = config.quantizer()
    noise = config.noise()
    real = simulate(field, grid, quantizer, noise,
                    derive_rng(config.master_seed, K, trial_index, SENSING))
    problem = _FusionProblem(grid.x, grid.y, real.received, quantizer,
                             noise.sigma, noise.eta, config.spread)
    res = _run_em(problem, config.init_theta(), config.em)
    theta_true = config.theta_true.as_array()
    if res.failure_reason is not None:
        se = err = float("inf")
    else:
        se = location_se(res.theta_hat, theta_true)
        err = ise(res.theta_hat, theta_true, config.spread, config.region, config.resolution)
    return TrialResult(
        trial=int(trial_index), K=int(K), theta_hat=tuple(float(v) for v in res.theta_hat),
        se=se, ise=err, converged=res.converged, iterations=res.iterations,
        failure_reason=res.failure_reason, loglik_monotone=loglik_is_monotone(res.trace),
    )


@dataclass(frozen=True)
class SweepRow:
    K: int
    se: BoxStats
    ise: BoxStats
    n_converged: int
    n_failed: int
    outlier_frac: float
    mean_iters: float

    def csv_values(self):
        def box(b):
            return [b.median, b.q25, b.q75, b.whisker_low, b.whisker_high]
        return ([self.K] + box(self.se) + [len(self.se.outliers), self.se.n_nonfinite]
                + box(self.ise) + [len(self.ise.outliers), self.ise.n_nonfinite]
                + [self.n_converged, self.n_failed, self.outlier_frac, self.mean_iters])


@dataclass
class SweepResult:
    rows: list
    trials: dict = dc_field(default_factory=dict)  # K -> list[TrialResult], by trial index

    def row(self, K) -> SweepRow:
        for r in self.rows:
            if r.K == K:
                return r
        raise KeyError(K)

    def se_samples(self, K) -> np.ndarray:
        return np.array([t.se for t in self.trials[K]])


def summarize(K, results, outlier_tau=1.0) -> SweepRow:
    se = [r.se for r in results]
    n_converged = sum(r.converged for r in results)
    return SweepRow(
        K=int(K),
        se=box_stats(se),
        ise=box_stats([r.ise for r in results]),
        n_converged=n_converged,
        # capped and diverged runs alike; diverged ones also show up in *_n_diverged
        n_failed=len(results) - n_converged,
        outlier_frac=outlier_curve(se, [outlier_tau])[0][1] / 100.0,
        mean_iters=float(np.mean([r.iterations for r in results])),
    )


def run_sweep(config: ExperimentConfig, n_jobs=1) -> SweepResult:
    """Run ``config.trials`` trials for every K and summarise each K.

    Every trial draws from its own pre-derived streams, so the result is the
    same for any ``n_jobs``.
    """
    config.noise()  # calibrate before fanning out
    keys = [(K, t) for K in config.K_values for t in range(config.trials)]
    if n_jobs == 1:
        results = [run_trial(config, K, t) for K, t in keys]
    else:
        results = Parallel(n_jobs=n_jobs)(delayed(run_trial)(config, K, t) for K, t in keys)
    by_key = {(r.K, r.trial): r for r in results}
    trials = {K: [by_key[(K, t)] for t in range(config.trials)] for K in config.K_values}
    rows = [summarize(K, trials[K], config.outlier_tau) for K in config.K_values]
    return SweepResult(rows, trials)


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


def write_sweep_csv(result: SweepResult, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SWEEP_COLUMNS)
        for row in result.rows:
            w.writerow([_fmt(v) for v in row.csv_values()])


def write_trials_csv(result: SweepResult, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRIAL_COLUMNS)
        for K, trials in result.trials.items():
            for t in trials:
                w.writerow([_fmt(v) for v in (K, t.trial, *t.theta_hat, t.se, t.ise,
                                               t.converged, t.iterations)])


def write_outlier_csv(result: SweepResult, path, thresholds=None):
    """Long-format ``K, tau, percent`` table of ``P[SE > tau]``."""
    if thresholds is None:
        thresholds = np.round(np.linspace(0.0, 4.0, 81), 10)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("K", "tau", "percent"))
        for K in result.trials:
            for tau, pct in outlier_curve(result.se_samples(K), thresholds):
                w.writerow([K, _fmt(tau), _fmt(pct)])
