"""Direct SDE simulation: the independent oracle for the operator pipeline.

Randomness is counter-based: every draw comes from a Philox stream keyed by
(seed, stream tag) with the block counter set to the global step index, so
ensembles are bit-reproducible for a given McConfig no matter how the work
is scheduled.  Reductions over paths use numpy's pairwise summation in path
order, which keeps estimates independent of any internal threading.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import (
    InsufficientHorizonError,
    InvalidComparisonError,
    UnstableConfigurationError,
)
from .operator import GeneralDiffusion1D, Langevin1D
from .basis import resolve_support

__all__ = [
    "McConfig",
    "PathEnsemble",
    "CorrelationEstimate",
    "NoiseAverage",
    "CrossValidation",
    "simulate_ou_exact",
    "simulate_langevin_baoab",
    "simulate_general_euler",
    "noise_averaged_observable",
    "stationary_autocorrelation",
    "cross_validate",
]

_STREAM_INIT_Q = 0
_STREAM_INIT_P = 1
_STREAM_DYNAMICS = 2


@dataclass(frozen=True)
class McConfig:
    """Ensemble size, step, horizon and reproducibility parameters."""

    n_paths: int
    dt: float
    horizon: float
    seed: int
    integrator: str = "baoab"  # "ou-exact" | "baoab" | "euler-maruyama"
    burn_in: float = 0.0
    record_stride: int = 1

    def __post_init__(self):
        if self.n_paths < 2:
            raise ValueError("n_paths must be at least 2 (variance estimation)")
        if not 0 < self.dt < self.horizon:
            raise ValueError("need 0 < dt < horizon")
        if self.burn_in < 0:
            raise ValueError("burn_in must be nonnegative")
        if self.record_stride < 1:
            raise ValueError("record_stride must be >= 1")


@dataclass(frozen=True)
class PathEnsemble:
    """Recorded observables on the sampling window (never raw full paths)."""

    times: np.ndarray  # (n_rec,), 0 = end of burn-in
    series: dict[str, np.ndarray]  # name -> (n_rec, n_paths)
    x0: tuple | float | None  # fixed initial state, None for equilibrium start
    kind: str
    config: McConfig


@dataclass(frozen=True)
class NoiseAverage:
    times: np.ndarray
    values: np.ndarray
    standard_errors: np.ndarray


@dataclass(frozen=True)
class CorrelationEstimate:
    lags: np.ndarray
    values: np.ndarray
    standard_errors: np.ndarray
    n_samples: int
    degenerate: bool = False
    normalized: bool = False


@dataclass(frozen=True)
class CrossValidation:
    lags: np.ndarray
    reference: np.ndarray
    estimate: np.ndarray
    z_scores: np.ndarray
    max_abs_z: float
    threshold: float
    passed: bool


def _philox(seed: int, stream: int, step: int = 0) -> np.random.Generator:
    key = np.array([seed, stream], dtype=np.uint64)
    counter = np.array([0, 0, step, 0], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key, counter=counter))


def _recording_plan(cfg: McConfig):
    burn_steps = int(round(cfg.burn_in / cfg.dt))
    total_steps = int(round(cfg.horizon / cfg.dt))
    rec_steps = np.arange(0, total_steps + 1, cfg.record_stride)
    times = rec_steps * cfg.dt
    return burn_steps, total_steps, set(rec_steps.tolist()), times


def simulate_ou_exact(theta: float, sigma: float, cfg: McConfig, x0: float | None = None) -> PathEnsemble:
    """Exact Gaussian transition sampling of the OU process.

    One step is x <- x e^{-theta dt} + eta sqrt(sigma^2 (1 - e^{-2 theta dt})
    / (2 theta)), distributionally exact for any dt.  x0=None starts from the
    stationary law N(0, sigma^2 / (2 theta)).
    """
    decay = np.exp(-theta * cfg.dt)
    noise_std = np.sqrt(sigma**2 * (1 - decay**2) / (2 * theta)) if sigma > 0 else 0.0
    burn, total, rec_set, times = _recording_plan(cfg)
    if x0 is None:
        x = _philox(cfg.seed, _STREAM_INIT_Q).standard_normal(cfg.n_paths)
        x *= np.sqrt(sigma**2 / (2 * theta))
    else:
        x = np.full(cfg.n_paths, float(x0))
    recorded = np.empty((len(rec_set), cfg.n_paths))
    ri = 0
    for step in range(burn + total + 1):
        k = step - burn
        if k >= 0 and k in rec_set:
            recorded[ri] = x
            ri += 1
        if step == burn + total:
            break
        eta = _philox(cfg.seed, _STREAM_DYNAMICS, step).standard_normal(cfg.n_paths) \
            if noise_std > 0 else 0.0
        x = x * decay + noise_std * eta
    return PathEnsemble(times=times, series={"x": recorded}, x0=x0, kind="ou", config=cfg)


def _sample_inverse_cdf(log_density, hint, rng, n_samples, n_grid=8001):
    """Rejection-free equilibrium sampling via a dense tabulated inverse CDF."""
    lo, hi, _ = resolve_support(log_density, hint)
    x = np.linspace(lo, hi, n_grid)
    lw = np.asarray(log_density(x), dtype=float)
    pdf = np.exp(lw - lw.max())
    mids = 0.5 * (pdf[1:] + pdf[:-1])
    cdf = np.concatenate([[0.0], np.cumsum(mids)])
    cdf /= cdf[-1]
    u = rng.uniform(0.0, 1.0, n_samples)
    return np.interp(u, cdf, x)


def simulate_langevin_baoab(
    model: Langevin1D,
    cfg: McConfig,
    x0: tuple[float, float] | None = None,
    record: tuple[str, ...] = ("q", "p"),
) -> PathEnsemble:
    """BAOAB splitting for the Langevin pair (q, p).

    The O-substep applies the exact OU update with rate gamma/mu and the
    fluctuation-dissipation amplitude, so momentum statistics carry no step
    bias from the thermostat itself.  x0=None draws the initial state from
    the Gibbs measure (Gaussian momenta; inverse-CDF positions).
    """
    dt = cfg.dt
    c1 = np.exp(-(model.gamma / model.mu) * dt)
    c2 = np.sqrt((model.mu / model.beta) * (1 - c1 * c1))
    burn, total, rec_set, times = _recording_plan(cfg)

    if x0 is None:
        q = _sample_inverse_cdf(
            lambda s: -model.beta * model.potential_values(s),
            (-6.0, 6.0),
            _philox(cfg.seed, _STREAM_INIT_Q),
            cfg.n_paths,
        )
        p = _philox(cfg.seed, _STREAM_INIT_P).standard_normal(cfg.n_paths)
        p *= model.momentum_scale
    else:
        q = np.full(cfg.n_paths, float(x0[0]))
        p = np.full(cfg.n_paths, float(x0[1]))

    recorded = {name: np.empty((len(rec_set), cfg.n_paths)) for name in record}
    state = {"q": q, "p": p}
    ri = 0
    for step in range(burn + total + 1):
        k = step - burn
        if k >= 0 and k in rec_set:
            for name in record:
                recorded[name][ri] = state[name]
            ri += 1
        if step == burn + total:
            break
        q, p = state["q"], state["p"]
        p = p + 0.5 * dt * model.force_values(q)
        q = q + 0.5 * dt * p / model.mu
        eta = _philox(cfg.seed, _STREAM_DYNAMICS, step).standard_normal(cfg.n_paths)
        p = c1 * p + c2 * eta
        q = q + 0.5 * dt * p / model.mu
        p = p + 0.5 * dt * model.force_values(q)
        if not (np.isfinite(q[-1]) and np.isfinite(p[-1])) or not (
            np.all(np.isfinite(q)) and np.all(np.isfinite(p))
        ):
            raise UnstableConfigurationError(
                f"state overflow at step {step}; reduce dt for this potential"
            )
        state = {"q": q, "p": p}
    return PathEnsemble(times=times, series=recorded, x0=x0, kind="langevin", config=cfg)


def simulate_general_euler(
    model: GeneralDiffusion1D, cfg: McConfig, x0: float
) -> PathEnsemble:
    """Euler-Maruyama for a general 1-D diffusion, delta-initialized at x0."""
    burn, total, rec_set, times = _recording_plan(cfg)
    x = np.full(cfg.n_paths, float(x0))
    recorded = np.empty((len(rec_set), cfg.n_paths))
    sq_dt = np.sqrt(cfg.dt)
    ri = 0
    for step in range(burn + total + 1):
        k = step - burn
        if k >= 0 and k in rec_set:
            recorded[ri] = x
            ri += 1
        if step == burn + total:
            break
        eta = _philox(cfg.seed, _STREAM_DYNAMICS, step).standard_normal(cfg.n_paths)
        x = x + cfg.dt * np.asarray(model.drift(x), dtype=float) \
            + sq_dt * np.asarray(model.diffusion(x), dtype=float) * eta
        if not np.all(np.isfinite(x)):
            raise UnstableConfigurationError(f"state overflow at step {step}")
    return PathEnsemble(times=times, series={"x": recorded}, x0=x0, kind="general", config=cfg)


def noise_averaged_observable(ensemble: PathEnsemble, u: Callable) -> NoiseAverage:
    """Pathwise mean of u(state) per recorded time, with standard errors.

    ``u`` maps the ensemble's series dict to an (n_rec, n_paths) array, e.g.
    ``lambda s: s["p"]`` or ``lambda s: s["x"]**2``.
    """
    vals = np.asarray(u(ensemble.series), dtype=float)
    n = vals.shape[1]
    mean = vals.mean(axis=1)
    se = vals.std(axis=1, ddof=1) / np.sqrt(n)
    return NoiseAverage(times=ensemble.times, values=mean, standard_errors=se)


def stationary_autocorrelation(
    ensemble: PathEnsemble,
    u: Callable,
    max_lag: float | None = None,
    n_batches: int = 20,
    normalize: bool = False,
) -> CorrelationEstimate:
    """Time-and-ensemble average of <u(t) u(t+tau)> with batch-means errors.

    Paths are split into contiguous batches; each batch contributes its own
    time-averaged correlation curve (normalized by its own C(0) when
    ``normalize``), and the spread across batches gives the standard error,
    which correctly absorbs the serial correlation along each path.
    """
    vals = np.asarray(u(ensemble.series), dtype=float)
    n_rec, n_paths = vals.shape
    dt_rec = ensemble.times[1] - ensemble.times[0] if n_rec > 1 else ensemble.config.dt
    horizon = ensemble.times[-1]
    if max_lag is None:
        max_lag = horizon / 2
    if max_lag > horizon + 1e-12:
        raise InsufficientHorizonError(
            f"max lag {max_lag} exceeds sampled horizon {horizon}"
        )
    n_lags = int(round(max_lag / dt_rec)) + 1
    lags = np.arange(n_lags) * dt_rec

    spread = float(vals.std())
    level = float(np.abs(vals).max())
    if spread <= 1e-14 * max(level, 1.0):
        values = np.full(n_lags, float(vals.mean()) ** 2)
        return CorrelationEstimate(
            lags=lags, values=values, standard_errors=np.zeros(n_lags),
            n_samples=n_rec * n_paths, degenerate=True, normalized=False,
        )

    n_batches = min(n_batches, n_paths)
    bounds = np.linspace(0, n_paths, n_batches + 1).astype(int)
    batch_curves = np.empty((n_batches, n_lags))
    for b in range(n_batches):
        block = vals[:, bounds[b]:bounds[b + 1]]
        for ell in range(n_lags):
            batch_curves[b, ell] = np.mean(block[: n_rec - ell] * block[ell:])
        if normalize:
            batch_curves[b] = batch_curves[b] / batch_curves[b, 0]
    values = batch_curves.mean(axis=0)
    se = batch_curves.std(axis=0, ddof=1) / np.sqrt(n_batches)
    return CorrelationEstimate(
        lags=lags, values=values, standard_errors=se,
        n_samples=n_rec * n_paths, degenerate=False, normalized=normalize,
    )


def cross_validate(
    times: np.ndarray,
    trajectory: np.ndarray,
    estimate: CorrelationEstimate,
    threshold: float = 3.0,
) -> CrossValidation:
    """Pointwise z-scores of a Monte Carlo estimate against a model curve.

    The model trajectory is linearly interpolated onto the estimate's lag
    grid; passes when max |z| <= threshold.
    """
    times = np.asarray(times, dtype=float)
    trajectory = np.asarray(trajectory, dtype=float)
    if estimate.degenerate:
        raise InvalidComparisonError("estimate has zero variance; z-scores undefined")
    if estimate.lags[0] < times[0] - 1e-12 or estimate.lags[-1] > times[-1] + 1e-12:
        raise InvalidComparisonError(
            "estimate lags extend beyond the model trajectory grid"
        )
    ref = np.interp(estimate.lags, times, trajectory)
    se = estimate.standard_errors
    informative = se > 0
    if not informative.any():
        raise InvalidComparisonError("all standard errors are zero; z-scores undefined")
    z = np.zeros_like(ref)
    z[informative] = (estimate.values[informative] - ref[informative]) / se[informative]
    # zero-variance lags (e.g. the pinned normalization point) must agree exactly
    exact = ~informative
    if np.any(np.abs(estimate.values[exact] - ref[exact]) > 1e-9 * np.maximum(1.0, np.abs(ref[exact]))):
        raise InvalidComparisonError("deterministic lags disagree with the model curve")
    max_abs = float(np.abs(z).max())
    return CrossValidation(
        lags=estimate.lags, reference=ref, estimate=estimate.values,
        z_scores=z, max_abs_z=max_abs, threshold=threshold,
        passed=bool(max_abs <= threshold),
    )
