"""Deterministic scalar quantizer and Gaussian cell probabilities."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import log_ndtr
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .exceptions import ConfigError


@dataclass(frozen=True, eq=False)
class QuantizerSpec:
    """Cell boundaries ``tau_1 < ... < tau_{M+1}`` and reproduction points ``nu_1..nu_M``.

    The extreme boundaries may be infinite. A single-cell spec (``M == 1``) is
    accepted for degenerate checks; :func:`make_uniform` always builds ``M >= 2``.
    """

    boundaries: np.ndarray
    reproduction_points: np.ndarray

    def __post_init__(self):
        tau = np.array(self.boundaries, dtype=float)
        nu = np.array(self.reproduction_points, dtype=float)
        if tau.ndim != 1 or nu.ndim != 1 or tau.size != nu.size + 1 or nu.size < 1:
            raise ConfigError("need M reproduction points and M + 1 boundaries")
        if np.any(np.isnan(tau)) or not np.all(np.diff(tau) > 0):
            raise ConfigError("boundaries must be strictly increasing")
        if not np.all(np.isfinite(nu)):
            raise ConfigError("reproduction points must be finite")
        if np.any(nu < tau[:-1]) or np.any(nu > tau[1:]):
            raise ConfigError("each reproduction point must lie inside its cell")
        tau.setflags(write=False)
        nu.setflags(write=False)
        object.__setattr__(self, "boundaries", tau)
        object.__setattr__(self, "reproduction_points", nu)

    @property
    def M(self) -> int:
        return self.reproduction_points.size

    @property
    def interior(self) -> np.ndarray:
        return self.boundaries[1:-1]

    def __eq__(self, other):
        if not isinstance(other, QuantizerSpec):
            return NotImplemented
        return (np.array_equal(self.boundaries, other.boundaries)
                and np.array_equal(self.reproduction_points, other.reproduction_points))

    def __hash__(self):
        return hash((self.boundaries.tobytes(), self.reproduction_points.tobytes()))


def make_uniform(M, step, offset=0.0) -> QuantizerSpec:
    """Uniform quantizer with unbounded extreme cells.

    Interior boundaries sit at ``offset + step, ..., offset + (M - 1) * step``
    and every reproduction point is ``offset + (j - 1/2) * step``.
    """
    if int(M) != M or M < 2:
        raise ConfigError(f"number of levels must be an integer >= 2, got {M}", field="levels")
    if not (np.isfinite(step) and step > 0):
        raise ConfigError(f"quantization step must be positive, got {step}", field="step")
    if not np.isfinite(offset):
        raise ConfigError(f"offset must be finite, got {offset}", field="offset")
    M = int(M)
    interior = offset + step * np.arange(1, M)
    tau = np.concatenate(([-np.inf], interior, [np.inf]))
    nu = offset + step * (np.arange(M) + 0.5)
    return QuantizerSpec(tau, nu)


def cell_index(spec: QuantizerSpec, r) -> np.ndarray:
    """0-based index of the cell ``[tau_j, tau_{j+1})`` holding each ``r``."""
    return np.searchsorted(spec.interior, np.asarray(r, dtype=float), side="right")


def quantize(spec: QuantizerSpec, r):
    idx = cell_index(spec, r)
    out = spec.reproduction_points[idx]
    return out if np.ndim(out) else float(out)


def _check_sigma(sigma):
    sigma = np.asarray(sigma, dtype=float)
    if np.any(~(sigma > 0)):
        raise ValueError(f"noise standard deviation must be positive, got {sigma}")
    return sigma


def log_cell_mass(t):
    """``log(Phi(t[..., j+1]) - Phi(t[..., j]))`` for increasing standardized boundaries.

    Each cell is evaluated from whichever tail keeps the difference free of
    cancellation, so far-tail cells stay accurate in log space.
    """
    t = np.asarray(t, dtype=float)
    lu = log_ndtr(-t)
    ll = log_ndtr(t)
    with np.errstate(divide="ignore", invalid="ignore"):
        upper = lu[..., :-1] + np.log1p(-np.exp(lu[..., 1:] - lu[..., :-1]))
        lower = ll[..., 1:] + np.log1p(-np.exp(ll[..., :-1] - ll[..., 1:]))
        mid = np.nan_to_num(t[..., :-1] + t[..., 1:])  # -inf + inf for a single unbounded cell
    return np.where(mid > 0, upper, lower)


def standardized_boundaries(spec: QuantizerSpec, G, sigma) -> np.ndarray:
    """``(tau - G) / sigma`` with shape ``G.shape + (M + 1,)``."""
    G = np.asarray(G, dtype=float)
    return (spec.boundaries - G[..., None]) / np.asarray(sigma, dtype=float)[..., None]


def log_cell_probabilities(spec: QuantizerSpec, G, sigma) -> np.ndarray:
    sigma = _check_sigma(sigma)
    return log_cell_mass(standardized_boundaries(spec, G, sigma))


def cell_probabilities(spec: QuantizerSpec, G, sigma) -> np.ndarray:
    """``P[tau_j <= G + W < tau_{j+1}]`` for ``W ~ N(0, sigma**2)``; last axis runs over cells."""
    return np.exp(log_cell_probabilities(spec, G, sigma))


def expected_square(spec: QuantizerSpec, G, sigma):
    """``E[q(G + W)**2]`` in closed form."""
    p = cell_probabilities(spec, G, sigma)
    out = p @ (spec.reproduction_points ** 2)
    return out if np.ndim(out) else float(out)


class UniformQuantizer(TransformerMixin, BaseEstimator):
    """Transformer mapping readings to reproduction points of a uniform quantizer."""

    def __init__(self, levels=8, step=1.0, offset=0.0):
        self.levels = levels
        self.step = step
        self.offset = offset

    def fit(self, X, y=None):
        X = check_array(X, ensure_all_finite=True)
        self.spec_ = make_uniform(self.levels, self.step, self.offset)
        self.n_features_in_ = X.shape[1]
        return self

    def transform(self, X):
        check_is_fitted(self, "spec_")
        X = check_array(X, ensure_all_finite=True)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(
                f"X has {X.shape[1]} features, expected {self.n_features_in_}")
        return quantize(self.spec_, X)
