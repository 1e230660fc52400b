"""Sensor placement, the sensing/quantization/channel chain, and SNR calibration."""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .exceptions import ConfigError
from .field import DEFAULT_RESOLUTION, GaussianBellField, Region, integrate_over_region
from .quantizer import QuantizerSpec, expected_square, quantize

# stream roles for per-trial seed derivation
PLACEMENT, SENSING = 0, 1

REALIZATION_COLUMNS = ("k", "x", "y", "G", "R", "q", "Z")


def derive_rng(master_seed, *key) -> np.random.Generator:
    """Generator for the stream identified by ``(master_seed, *key)``.

    Streams with distinct keys are statistically independent and do not
    depend on the order in which they are created.
    """
    seq = np.random.SeedSequence(int(master_seed), spawn_key=tuple(int(k) for k in key))
    return np.random.default_rng(seq)


@dataclass(frozen=True, eq=False)
class SensorGrid:
    positions: np.ndarray
    region: Region

    def __post_init__(self):
        pos = np.array(self.positions, dtype=float)
        if pos.ndim != 2 or pos.shape[1] != 2 or pos.shape[0] < 1:
            raise ConfigError("positions must be a non-empty (K, 2) array")
        if not np.all(self.region.contains(pos[:, 0], pos[:, 1])):
            raise ConfigError("every sensor must lie inside the region")
        pos.setflags(write=False)
        object.__setattr__(self, "positions", pos)

    @property
    def K(self) -> int:
        return self.positions.shape[0]

    @property
    def x(self) -> np.ndarray:
        return self.positions[:, 0]

    @property
    def y(self) -> np.ndarray:
        return self.positions[:, 1]


@dataclass(frozen=True)
class NoiseConfig:
    sigma2: float
    eta2: float

    def __post_init__(self):
        for name in ("sigma2", "eta2"):
            v = getattr(self, name)
            if not (np.isfinite(v) and v > 0):
                raise ConfigError(f"{name} must be positive, got {v}", field=name)

    @property
    def sigma(self) -> float:
        return float(np.sqrt(self.sigma2))

    @property
    def eta(self) -> float:
        return float(np.sqrt(self.eta2))


@dataclass(frozen=True, eq=False)
class NetworkRealization:
    grid: SensorGrid
    true_field_samples: np.ndarray
    raw: np.ndarray
    quantized: np.ndarray
    received: np.ndarray

    def __post_init__(self):
        for name in ("true_field_samples", "raw", "quantized", "received"):
            arr = np.array(getattr(self, name), dtype=float)
            if arr.shape != (self.grid.K,):
                raise ConfigError(f"{name} must have length K={self.grid.K}")
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    def __eq__(self, other):
        if not isinstance(other, NetworkRealization):
            return NotImplemented
        return all(np.array_equal(a, b) for a, b in zip(self._arrays(), other._arrays()))

    def _arrays(self):
        return (self.grid.positions, self.true_field_samples, self.raw,
                self.quantized, self.received)

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(REALIZATION_COLUMNS)
            for k in range(self.grid.K):
                w.writerow([k + 1] + [repr(float(v)) for v in (
                    self.grid.x[k], self.grid.y[k], self.true_field_samples[k],
                    self.raw[k], self.quantized[k], self.received[k])])


def read_realization_csv(path, region: Region | None = None):
    """Load positions and received values from a realization CSV.

    Only ``x``, ``y`` and ``Z`` are required; fusion-center estimation never
    sees the other columns. Returns ``(SensorGrid, Z)``.
    """
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        missing = [c for c in ("x", "y", "Z") if c not in header]
        if missing:
            raise ConfigError(f"realization CSV is missing columns {missing}", field=str(path))
        rows = list(reader)
    if not rows:
        raise ConfigError("realization CSV has no data rows", field=str(path))
    try:
        data = np.array([[float(r["x"]), float(r["y"]), float(r["Z"])] for r in rows])
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"non-numeric value in realization CSV: {exc}", field=str(path)) from None
    if region is None:
        region = Region()
    return SensorGrid(data[:, :2], region), data[:, 2]


def place_sensors(K, region: Region, rng) -> SensorGrid:
    """``K`` i.i.d. uniform positions on the region."""
    if int(K) != K or K < 1:
        raise ConfigError(f"number of sensors must be a positive integer, got {K}", field="K")
    rng = np.random.default_rng(rng)
    u = rng.random((int(K), 2))
    pos = np.column_stack([
        region.x_min + (region.x_max - region.x_min) * u[:, 0],
        region.y_min + (region.y_max - region.y_min) * u[:, 1],
    ])
    return SensorGrid(pos, region)


def _snr_linear(snr_db):
    if not np.isfinite(snr_db):
        raise ConfigError(f"SNR must be finite, got {snr_db} dB", field="snr_db")
    return 10.0 ** (snr_db / 10.0)


def signal_power(field: GaussianBellField, region: Region, resolution=DEFAULT_RESOLUTION):
    """Area mean of ``G**2``."""
    return integrate_over_region(lambda X, Y: field(X, Y) ** 2, region, resolution) / region.area


def quantized_power(field, quantizer, sigma2, region, resolution=DEFAULT_RESOLUTION):
    """Area mean of ``E[q(G + W)**2]``."""
    sigma = np.sqrt(sigma2)

    def integrand(X, Y):
        return expected_square(quantizer, field(X, Y), sigma)

    return integrate_over_region(integrand, region, resolution) / region.area


def calibrate_sigma2(field, region, snr_db, resolution=DEFAULT_RESOLUTION) -> float:
    return signal_power(field, region, resolution) / _snr_linear(snr_db)


def calibrate_eta2(field, quantizer: QuantizerSpec, sigma2, region, snr_db,
                   resolution=DEFAULT_RESOLUTION) -> float:
    if not sigma2 > 0:
        raise ConfigError(f"sigma2 must be positive, got {sigma2}", field="sigma2")
    return quantized_power(field, quantizer, sigma2, region, resolution) / _snr_linear(snr_db)


def snr_observation_db(field, region, sigma2, resolution=DEFAULT_RESOLUTION) -> float:
    return float(10.0 * np.log10(signal_power(field, region, resolution) / sigma2))


def snr_channel_db(field, quantizer, sigma2, eta2, region, resolution=DEFAULT_RESOLUTION) -> float:
    p = quantized_power(field, quantizer, sigma2, region, resolution)
    return float(10.0 * np.log10(p / eta2))


def calibrate_noise(field, quantizer, region, snr_o_db, snr_c_db,
                    resolution=DEFAULT_RESOLUTION) -> NoiseConfig:
    sigma2 = calibrate_sigma2(field, region, snr_o_db, resolution)
    eta2 = calibrate_eta2(field, quantizer, sigma2, region, snr_c_db, resolution)
    return NoiseConfig(sigma2, eta2)


def simulate(field: GaussianBellField, grid: SensorGrid, quantizer: QuantizerSpec,
             noise: NoiseConfig, rng) -> NetworkRealization:
    """Run the sensing chain ``Z = q(G + W) + N`` once.

    Sensor noise and channel noise are drawn from two child streams spawned
    from ``rng``, so neither depends on how many draws the other consumed.
    """
    sensor_rng, channel_rng = np.random.default_rng(rng).spawn(2)
    G = field(grid.x, grid.y)
    R = G + noise.sigma * sensor_rng.standard_normal(grid.K)
    q = quantize(quantizer, R)
    Z = q + noise.eta * channel_rng.standard_normal(grid.K)
    return NetworkRealization(grid, G, R, np.atleast_1d(q), Z)
