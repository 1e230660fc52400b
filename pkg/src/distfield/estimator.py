"""Fusion-center maximum likelihood estimation by EM with Newton M-steps.

Each EM iteration freezes, per sensor, the conditional mean ``A_i`` of the
raw reading given the received value and its normalisation ``B_i`` (both at
the current iterate), then solves

    sum_i dG_i/dtheta * (A_i - G_i(theta) * B_i) = 0

for the next iterate with a safeguarded Newton iteration. All mixture
quantities are evaluated in log space so received values far from every
reproduction point do not underflow.
"""

from __future__ import annotations

import csv
import logging
import math
import warnings
from dataclasses import dataclass, field as dc_field

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .exceptions import ConfigError, NewtonFailure
from .field import DEFAULT_SPREAD, FieldParams, bell_derivatives
from .netsim import NoiseConfig, SensorGrid
from .quantizer import QuantizerSpec, log_cell_mass, make_uniform, standardized_boundaries

log = logging.getLogger(__name__)

_HALF_LOG_2PI = 0.5 * math.log(2.0 * math.pi)
_TINY = np.finfo(float).tiny
_COND_LIMIT = 1e12

TRACE_COLUMNS = ("iteration", "mu", "xc", "yc", "loglik", "newton_residual", "inner_iters")


@dataclass(frozen=True)
class EmConfig:
    max_em_iters: int = 5000
    em_tol: float = 1e-6
    max_newton_iters: int = 50
    newton_tol: float = 1e-10
    damping: int = 10
    jacobian_ridge: float = 1e-6

    def __post_init__(self):
        for name in ("max_em_iters", "max_newton_iters"):
            v = getattr(self, name)
            if int(v) != v or v < 1:
                raise ConfigError(f"{name} must be an integer >= 1, got {v}", field=name)
        for name in ("em_tol", "newton_tol", "jacobian_ridge"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v > 0):
                raise ConfigError(f"{name} must be positive, got {v}", field=name)
        if int(self.damping) != self.damping or self.damping < 0:
            raise ConfigError(f"damping must be a non-negative integer, got {self.damping}",
                              field="damping")


@dataclass
class EmTrace:
    """Per-iteration history; row 0 is the initial point."""

    iteration: list = dc_field(default_factory=list)
    theta: list = dc_field(default_factory=list)
    loglik: list = dc_field(default_factory=list)
    newton_residual: list = dc_field(default_factory=list)
    inner_iters: list = dc_field(default_factory=list)

    def append(self, iteration, theta, loglik, newton_residual, inner_iters):
        self.iteration.append(int(iteration))
        self.theta.append(np.array(theta, dtype=float))
        self.loglik.append(float(loglik))
        self.newton_residual.append(float(newton_residual))
        self.inner_iters.append(int(inner_iters))

    def __len__(self):
        return len(self.iteration)

    @property
    def thetas(self) -> np.ndarray:
        return np.array(self.theta).reshape(-1, 3)

    @property
    def logliks(self) -> np.ndarray:
        return np.array(self.loglik)

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(TRACE_COLUMNS)
            for i in range(len(self)):
                mu, xc, yc = self.theta[i]
                w.writerow([self.iteration[i], repr(float(mu)), repr(float(xc)),
                            repr(float(yc)), repr(self.loglik[i]),
                            repr(self.newton_residual[i]), self.inner_iters[i]])


@dataclass
class EmResult:
    theta_hat: np.ndarray
    converged: bool
    iterations: int
    trace: EmTrace
    failure_reason: str | None = None
    loglik: float = float("nan")
    density_floor_hits: int = 0
    ridge_events: int = 0
    halving_events: int = 0

    @property
    def params(self) -> FieldParams:
        return FieldParams.from_array(self.theta_hat)


# ---------------------------------------------------------------------------
# per-sensor conditional quantities


def _channel_log_kernel(z, quantizer, eta):
    """``-(z - nu_j)**2 / (2 eta**2)``, shape ``z.shape + (M,)``."""
    d = np.asarray(z, dtype=float)[..., None] - quantizer.reproduction_points
    return -(d * d) / (2.0 * eta * eta)


def _posterior_terms(log_kernel, G, quantizer, sigma):
    """A, B and the per-sensor log normaliser for a frozen channel kernel.

    The normaliser is ``log sum_j p_j exp(-(z - nu_j)**2 / (2 eta**2))``, i.e.
    the per-sensor term of the incomplete-data log-likelihood.
    """
    G = np.asarray(G, dtype=float)
    t = standardized_boundaries(quantizer, G, sigma)
    joint = log_kernel + log_cell_mass(t)
    peak = np.max(joint, axis=-1, keepdims=True)
    peak = np.where(np.isfinite(peak), peak, 0.0)
    lse = peak + np.log(np.sum(np.exp(joint - peak), axis=-1, keepdims=True))
    B = np.sum(np.exp(joint - lse), axis=-1)
    # weight N(z; nu_j)/f_Z times the Gaussian density at each cell edge
    c = log_kernel - lse
    log_phi = -0.5 * t * t - _HALF_LOG_2PI
    edge = np.exp(c + log_phi[..., :-1]) - np.exp(c + log_phi[..., 1:])
    A = G * B + sigma * np.sum(edge, axis=-1)
    return A, B, lse[..., 0]


def _noise_parts(noise):
    return float(np.sqrt(noise.sigma2)), float(np.sqrt(noise.eta2))


def log_mixture_density(z, G, quantizer: QuantizerSpec, noise: NoiseConfig):
    """``log f_Z(z)`` for ``Z = q(G + W) + N``, exact in log space."""
    sigma, eta = _noise_parts(noise)
    lk = _channel_log_kernel(z, quantizer, eta)
    _, _, lse = _posterior_terms(lk, G, quantizer, sigma)
    return lse - math.log(eta) - _HALF_LOG_2PI


def mixture_density(z, G, quantizer: QuantizerSpec, noise: NoiseConfig, floor_hits=None):
    """``f_Z(z) = sum_j p_j N(z; nu_j, eta**2)``, floored at the smallest normal double.

    ``floor_hits``, if a list, receives the number of floored entries.
    """
    val = np.exp(log_mixture_density(z, G, quantizer, noise))
    low = val < _TINY
    if floor_hits is not None:
        floor_hits.append(int(np.count_nonzero(low)))
    out = np.where(low, _TINY, val)
    return out if np.ndim(out) else float(out)


def delta_Q(j, G, sigma, quantizer: QuantizerSpec):
    """Mass of cell ``j`` (0-based) under ``N(G, sigma**2)``: ``Q(a_j) - Q(a_{j+1})``."""
    if not 0 <= j < quantizer.M:
        raise IndexError(f"cell index {j} outside 0..{quantizer.M - 1}")
    t = standardized_boundaries(quantizer, G, sigma)
    out = np.exp(log_cell_mass(t[..., j:j + 2]))[..., 0]
    return out if np.ndim(out) else float(out)


def a_term(z, G, quantizer: QuantizerSpec, noise: NoiseConfig):
    """Conditional mean ``E[R | Z = z]`` when ``R ~ N(G, sigma**2)``."""
    sigma, eta = _noise_parts(noise)
    A, _, _ = _posterior_terms(_channel_log_kernel(z, quantizer, eta), G, quantizer, sigma)
    return A if np.ndim(A) else float(A)


def b_term(z, G, quantizer: QuantizerSpec, noise: NoiseConfig):
    """Total conditional mass; equals one up to rounding."""
    sigma, eta = _noise_parts(noise)
    _, B, _ = _posterior_terms(_channel_log_kernel(z, quantizer, eta), G, quantizer, sigma)
    return B if np.ndim(B) else float(B)


def incomplete_loglik(theta, Z, grid: SensorGrid, quantizer: QuantizerSpec,
                      noise: NoiseConfig, spread=DEFAULT_SPREAD) -> float:
    """Incomplete-data log-likelihood, without theta-independent constants."""
    sigma, eta = _noise_parts(noise)
    G = bell_derivatives(np.asarray(theta, dtype=float), grid.x, grid.y, spread, order=0)
    lk = _channel_log_kernel(np.asarray(Z, dtype=float), quantizer, eta)
    _, _, lse = _posterior_terms(lk, G, quantizer, sigma)
    total = float(np.sum(lse))
    if total == -np.inf:
        warnings.warn("every cell probability underflowed for at least one sensor; "
                      "theta is far from the data", RuntimeWarning, stacklevel=2)
    return total


# ---------------------------------------------------------------------------
# M-step


class _MStep:
    """Residual and Jacobian of the M-step equations with A, B frozen."""

    def __init__(self, x, y, A, B, spread):
        self.x = x
        self.y = y
        self.A = A
        self.B = B
        self.spread = spread

    def residual(self, theta):
        g, grad = bell_derivatives(theta, self.x, self.y, self.spread, order=1)
        return grad.T @ (self.A - g * self.B)

    def jacobian(self, theta):
        g, grad, hess = bell_derivatives(theta, self.x, self.y, self.spread, order=2)
        r = self.A - g * self.B
        return np.tensordot(r, hess, axes=1) - (grad.T * self.B) @ grad


class _FusionProblem:
    """Everything fixed across EM iterations for one set of received values."""

    def __init__(self, x, y, Z, quantizer, sigma, eta, spread):
        self.x = np.asarray(x, dtype=float)
        self.y = np.asarray(y, dtype=float)
        self.Z = np.asarray(Z, dtype=float)
        self.quantizer = quantizer
        self.sigma = sigma
        self.eta = eta
        self.spread = spread
        self.log_kernel = _channel_log_kernel(self.Z, quantizer, eta)
        self.log_eta = math.log(eta)

    def e_step(self, theta):
        G = bell_derivatives(theta, self.x, self.y, self.spread, order=0)
        A, B, lse = _posterior_terms(self.log_kernel, G, self.quantizer, self.sigma)
        floor_hits = int(np.count_nonzero(lse - self.log_eta - _HALF_LOG_2PI < math.log(_TINY)))
        return _MStep(self.x, self.y, A, B, self.spread), float(np.sum(lse)), floor_hits

    @classmethod
    def from_grid(cls, Z, grid, quantizer, noise, spread):
        sigma, eta = _noise_parts(noise)
        return cls(grid.x, grid.y, Z, quantizer, sigma, eta, spread)


def _newton_update(mstep, theta_n, F_n, config):
    """One safeguarded Newton step. Returns ``(theta, F, info)``."""
    norm_n = float(np.linalg.norm(F_n))
    info = {"ridge": False, "halvings": 0}
    if norm_n == 0.0:
        return theta_n, F_n, info
    J = mstep.jacobian(theta_n)
    cond = np.linalg.cond(J) if np.all(np.isfinite(J)) else np.inf
    if not cond <= _COND_LIMIT:
        # shift towards -I: the M-step objective is concave near its maximiser
        scale = max(1.0, float(np.max(np.abs(J)))) if np.all(np.isfinite(J)) else 1.0
        J = J - config.jacobian_ridge * scale * np.eye(J.shape[0])
        info["ridge"] = True
        cond = np.linalg.cond(J) if np.all(np.isfinite(J)) else np.inf
        if not cond <= _COND_LIMIT:
            raise NewtonFailure("Jacobian singular after ridge regularisation", theta_n,
                                {"cond": float(cond), "residual_norm": norm_n})
    step = np.linalg.solve(J, -F_n)
    theta = theta_n + step
    F = mstep.residual(theta)
    norm = float(np.linalg.norm(F))
    while not norm <= norm_n and info["halvings"] < config.damping:
        step = 0.5 * step
        theta = theta_n + step
        F = mstep.residual(theta)
        norm = float(np.linalg.norm(F))
        info["halvings"] += 1
    if not (np.all(np.isfinite(theta)) and np.all(np.isfinite(F))):
        raise NewtonFailure("Newton step produced non-finite values", theta_n,
                            {"residual_norm": norm_n})
    return theta, F, info


def em_residual(theta_next, theta_k, Z, grid: SensorGrid, quantizer: QuantizerSpec,
                noise: NoiseConfig, spread=DEFAULT_SPREAD) -> np.ndarray:
    """M-step residual at ``theta_next`` with A, B frozen at ``theta_k``."""
    problem = _FusionProblem.from_grid(Z, grid, quantizer, noise, spread)
    mstep, _, _ = problem.e_step(np.asarray(theta_k, dtype=float))
    return mstep.residual(np.asarray(theta_next, dtype=float))


def em_jacobian(theta, theta_k, Z, grid: SensorGrid, quantizer: QuantizerSpec,
                noise: NoiseConfig, spread=DEFAULT_SPREAD) -> np.ndarray:
    problem = _FusionProblem.from_grid(Z, grid, quantizer, noise, spread)
    mstep, _, _ = problem.e_step(np.asarray(theta_k, dtype=float))
    return mstep.jacobian(np.asarray(theta, dtype=float))


def newton_step(theta_n, theta_k, Z, grid: SensorGrid, quantizer: QuantizerSpec,
                noise: NoiseConfig, config: EmConfig | None = None,
                spread=DEFAULT_SPREAD) -> np.ndarray:
    """Solve ``J (theta_{n+1} - theta_n) = -F(theta_n)`` with ridge and step-halving guards."""
    config = config or EmConfig()
    problem = _FusionProblem.from_grid(Z, grid, quantizer, noise, spread)
    mstep, _, _ = problem.e_step(np.asarray(theta_k, dtype=float))
    theta_n = np.asarray(theta_n, dtype=float)
    theta, _, _ = _newton_update(mstep, theta_n, mstep.residual(theta_n), config)
    return theta


def _run_em(problem: _FusionProblem, init, config: EmConfig) -> EmResult:
    theta = np.array(init, dtype=float)
    trace = EmTrace()
    result = EmResult(theta, False, 0, trace)
    mstep, ll, hits = problem.e_step(theta)
    result.density_floor_hits += hits
    trace.append(0, theta, ll, float("nan"), 0)

    for k in range(1, config.max_em_iters + 1):
        # M-step: Newton from the current iterate
        t = theta
        F = mstep.residual(t)
        inner = 0
        try:
            for inner in range(1, config.max_newton_iters + 1):
                t_new, F, info = _newton_update(mstep, t, F, config)
                result.ridge_events += info["ridge"]
                result.halving_events += info["halvings"] > 0
                delta = float(np.max(np.abs(t_new - t)))
                t = t_new
                # residual small, or stalled at rounding level
                if np.linalg.norm(F) <= config.newton_tol or delta <= config.newton_tol:
                    break
        except NewtonFailure as exc:
            log.debug("EM iteration %d: %s (%s)", k, exc, exc.diagnostics)
            result.failure_reason = f"iteration {k}: {exc}"
            break
        em_step = float(np.max(np.abs(t - theta)))
        theta = t
        result.iterations = k
        if not (np.all(np.isfinite(theta)) and theta[0] > 0):
            trace.append(k, theta, float("nan"), np.linalg.norm(F), inner)
            result.failure_reason = f"iteration {k}: diverged to theta={theta.tolist()}"
            break
        mstep, ll, hits = problem.e_step(theta)
        result.density_floor_hits += hits
        trace.append(k, theta, ll, np.linalg.norm(F), inner)
        if em_step <= config.em_tol:
            result.converged = True
            break

    result.theta_hat = theta
    result.loglik = trace.loglik[-1]
    return result


def run_em(Z, grid: SensorGrid, quantizer: QuantizerSpec, noise: NoiseConfig, init,
           config: EmConfig | None = None, spread=DEFAULT_SPREAD) -> EmResult:
    """Estimate ``(mu, xc, yc)`` from received values ``Z``.

    Stops when the largest parameter change of one EM iteration is at most
    ``config.em_tol``. A failed or divergent M-step ends the run with
    ``converged=False`` and a ``failure_reason``; it is not raised.
    """
    if isinstance(init, FieldParams):
        init = init.as_array()
    Z = np.asarray(Z, dtype=float)
    if Z.shape != (grid.K,):
        raise ConfigError(f"expected {grid.K} received values, got shape {Z.shape}")
    problem = _FusionProblem.from_grid(Z, grid, quantizer, noise, spread)
    return _run_em(problem, init, config or EmConfig())


class QuantizedFieldEstimator(BaseEstimator):
    """Estimate a Gaussian-bell field from quantized readings sent over noisy channels.

    ``X`` holds sensor positions ``(K, 2)`` and ``y`` the values received at
    the fusion center. After fitting, :meth:`predict` evaluates the
    reconstructed field at arbitrary positions.

    Parameters
    ----------
    sigma2, eta2 : float
        Sensor and channel noise variances (assumed known).
    levels, step, offset : quantizer layout, see :func:`make_uniform`.
    spread : float
        Known squared spread of the bell.
    init : sequence of 3 floats
        Starting ``(mu, xc, yc)``.
    max_em_iters, em_tol, max_newton_iters, newton_tol, damping, jacobian_ridge
        Solver controls, see :class:`EmConfig`.
    """

    def __init__(self, sigma2=1.0, eta2=1.0, levels=8, step=1.0, offset=0.0,
                 spread=DEFAULT_SPREAD, init=(9.0, 3.0, 3.0), max_em_iters=5000,
                 em_tol=1e-6, max_newton_iters=50, newton_tol=1e-10, damping=10,
                 jacobian_ridge=1e-6):
        self.sigma2 = sigma2
        self.eta2 = eta2
        self.levels = levels
        self.step = step
        self.offset = offset
        self.spread = spread
        self.init = init
        self.max_em_iters = max_em_iters
        self.em_tol = em_tol
        self.max_newton_iters = max_newton_iters
        self.newton_tol = newton_tol
        self.damping = damping
        self.jacobian_ridge = jacobian_ridge

    def _em_config(self):
        return EmConfig(self.max_em_iters, self.em_tol, self.max_newton_iters,
                        self.newton_tol, self.damping, self.jacobian_ridge)

    def _problem(self, X, y):
        noise = NoiseConfig(self.sigma2, self.eta2)
        sigma, eta = _noise_parts(noise)
        return _FusionProblem(X[:, 0], X[:, 1], y, self.quantizer_, sigma, eta, self.spread)

    def fit(self, X, y):
        X, y = check_X_y(X, y, ensure_all_finite=True, y_numeric=True)
        if X.shape[1] != 2:
            raise ValueError(f"X must hold (x, y) positions, got {X.shape[1]} columns")
        if not self.spread > 0:
            raise ConfigError(f"spread must be positive, got {self.spread}", field="spread")
        init = np.asarray(self.init, dtype=float)
        if init.shape != (3,) or not np.all(np.isfinite(init)) or init[0] <= 0:
            raise ConfigError(f"init must be finite (mu > 0, xc, yc), got {self.init}",
                              field="init")
        self.quantizer_ = make_uniform(self.levels, self.step, self.offset)
        self.result_ = _run_em(self._problem(X, y), init, self._em_config())
        self.theta_ = self.result_.theta_hat
        self.converged_ = self.result_.converged
        self.n_iter_ = self.result_.iterations
        self.trace_ = self.result_.trace
        self.n_features_in_ = 2
        if not self.converged_:
            reason = self.result_.failure_reason or "iteration cap reached"
            warnings.warn(f"EM did not converge: {reason}", RuntimeWarning, stacklevel=2)
        return self

    def predict(self, X):
        check_is_fitted(self, "theta_")
        X = check_array(X, ensure_all_finite=True)
        return bell_derivatives(self.theta_, X[:, 0], X[:, 1], self.spread, order=0)

    def score(self, X, y):
        """Mean per-sensor incomplete-data log-likelihood of the fitted parameters."""
        check_is_fitted(self, "theta_")
        X, y = check_X_y(X, y, ensure_all_finite=True, y_numeric=True)
        _, ll, _ = self._problem(X, y).e_step(self.theta_)
        return ll / X.shape[0]


def loglik_is_monotone(trace: EmTrace, slack=1e-6) -> bool:
    """True when the recorded log-likelihood never drops by more than ``slack`` per step."""
    ll = trace.logliks
    ll = ll[np.isfinite(ll)]
    return bool(np.all(np.diff(ll) >= -slack))
