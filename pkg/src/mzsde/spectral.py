"""Eigen-analysis, cusp diagnostics, semigroup decay and derivative bounds.

The cusp constants of the underlying theory are non-constructive, so the
diagnostics here certify only the assertable consequences: eigenvalues stay
in the right half-plane, the imaginary axis carries nothing but zero, decay
rates match spectral gaps, and an empirical envelope exponent is fitted and
reported without being asserted.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .errors import EigensolverFailureError, InvalidGridError

__all__ = [
    "DecayFit",
    "SemigroupDecay",
    "SpectrumReport",
    "SubmultiplicativityRow",
    "eigen_decompose",
    "spectral_gap",
    "cusp_diagnostic",
    "fit_exponential_decay",
    "semigroup_decay",
    "submultiplicativity_check",
    "operator_norm",
    "propagate_series",
]


@dataclass(frozen=True)
class DecayFit:
    """Log-linear fit of an exponentially decaying residual series."""

    rate: float | None
    constant: float | None
    window: tuple[float, float] | None
    n_points: int
    degenerate: bool = False


@dataclass(frozen=True)
class SemigroupDecay:
    times: np.ndarray
    residuals: np.ndarray  # ||exp(-tA) u0 - Pi u0||
    norms: np.ndarray  # ||exp(-tA) u0||
    fit: DecayFit


@dataclass
class SpectrumReport:
    eigenvalues: np.ndarray
    spectral_gap: float | None
    zero_multiplicity: int
    imaginary_axis_violations: np.ndarray
    cusp_envelope_exponent: float | None
    envelope_residual: float | None
    re_tol: float
    im_tol: float
    decay_fit: DecayFit | None = None
    min_real_part: float = field(default=np.nan)


@dataclass(frozen=True)
class SubmultiplicativityRow:
    n: int
    lhs: float
    rhs: float
    ratio: float


def eigen_decompose(matrix: np.ndarray, right: bool = False):
    """Full complex spectrum of a dense real matrix, sorted by (Re, Im).

    Backed by LAPACK's Hessenberg reduction + shifted QR; an iteration-cap
    failure surfaces as EigensolverFailureError.
    """
    matrix = np.asarray(matrix, dtype=float)
    if not np.all(np.isfinite(matrix)):
        raise ValueError("matrix entries must be finite")
    try:
        if right:
            eigs, vecs = scipy.linalg.eig(matrix)
        else:
            eigs = scipy.linalg.eigvals(matrix)
    except np.linalg.LinAlgError as exc:  # pragma: no cover - rare QR failure
        raise EigensolverFailureError(str(exc)) from exc
    order = np.lexsort((eigs.imag, eigs.real))
    if right:
        return eigs[order], vecs[:, order]
    return eigs[order]


def spectral_gap(eigenvalues: np.ndarray, zero_tol: float = 1e-8) -> float | None:
    """Smallest real part over the nonzero part of the spectrum."""
    nonzero = eigenvalues[np.abs(eigenvalues) > zero_tol]
    if nonzero.size == 0:
        return None
    return float(nonzero.real.min())


def _envelope_exponent(eigs, im_tol, n_bins=8):
    """Fit log|Im| against log(1 + Re) over per-bin |Im| maxima."""
    complex_part = eigs[np.abs(eigs.imag) > im_tol]
    if complex_part.size < 2:
        return None, None
    re = complex_part.real
    edges = np.linspace(re.min(), re.max() * (1 + 1e-12), n_bins + 1)
    xs, ys = [], []
    for lo, hi in zip(edges[:-1], edges[1:]):
        sel = complex_part[(re >= lo) & (re < hi)]
        if sel.size:
            top = sel[np.argmax(np.abs(sel.imag))]
            xs.append(np.log1p(max(top.real, 0.0)))
            ys.append(np.log(np.abs(top.imag)))
    if len(xs) < 2 or np.ptp(xs) < 1e-12:
        return None, None
    coef, res = np.polyfit(xs, ys, 1, full=True)[:2]
    resid = float(np.sqrt(res[0] / len(xs))) if res.size else 0.0
    return float(coef[0]), resid


def cusp_diagnostic(
    eigenvalues: np.ndarray, re_tol: float = 1e-6, im_tol: float = 1e-6
) -> SpectrumReport:
    """Right-half-plane and imaginary-axis checks plus the envelope fit.

    zero_multiplicity counts eigenvalues with |lambda| <= re_tol; violations
    are eigenvalues hugging the imaginary axis away from the origin.
    """
    eigs = np.asarray(eigenvalues, dtype=complex)
    violations = eigs[(eigs.real <= re_tol) & (np.abs(eigs.imag) > im_tol)]
    zero_mult = int(np.sum(np.abs(eigs) <= re_tol))
    gap = spectral_gap(eigs, zero_tol=re_tol)
    exponent, resid = _envelope_exponent(eigs, im_tol)
    return SpectrumReport(
        eigenvalues=eigs,
        spectral_gap=gap,
        zero_multiplicity=zero_mult,
        imaginary_axis_violations=violations,
        cusp_envelope_exponent=exponent,
        envelope_residual=resid,
        re_tol=re_tol,
        im_tol=im_tol,
        min_real_part=float(eigs.real.min()) if eigs.size else np.nan,
    )


def fit_exponential_decay(
    times: np.ndarray,
    residuals: np.ndarray,
    window: tuple[float, float] = (1e-10, 1e-2),
    reference: float | None = None,
) -> DecayFit:
    """Least-squares slope of log(residual) on the mid-decay window.

    The window bounds are relative to ``reference`` (default: the initial
    residual), cutting off both the non-modal transient and the floating
    point floor.  A series already at its limit yields a degenerate fit.
    """
    times = np.asarray(times, dtype=float)
    residuals = np.asarray(residuals, dtype=float)
    ref = reference if reference is not None else residuals[0]
    if not ref > 0 or not np.isfinite(ref):
        return DecayFit(None, None, None, 0, degenerate=True)
    mask = (residuals >= window[0] * ref) & (residuals <= window[1] * ref) & (residuals > 0)
    if mask.sum() < 5:
        return DecayFit(None, None, None, int(mask.sum()), degenerate=True)
    slope, intercept = np.polyfit(times[mask], np.log(residuals[mask]), 1)
    tw = (float(times[mask].min()), float(times[mask].max()))
    return DecayFit(
        rate=float(-slope), constant=float(np.exp(intercept)),
        window=tw, n_points=int(mask.sum()),
    )


def envelope_constant(times: np.ndarray, residuals: np.ndarray, fit: DecayFit) -> float:
    """Tightest C such that residual <= C exp(-rate t) on the fit window.

    The least-squares fit constant tracks the mean of an oscillatory decay;
    this lifts it to an actual upper envelope so that one-sided bound checks
    are meaningful for complex-spectrum relaxation.
    """
    if fit.degenerate or fit.rate is None:
        raise ValueError("envelope_constant needs a non-degenerate fit")
    times = np.asarray(times, dtype=float)
    residuals = np.asarray(residuals, dtype=float)
    lo, hi = fit.window
    sel = (times >= lo) & (times <= hi)
    return float((residuals[sel] * np.exp(fit.rate * times[sel])).max())


def propagate_series(matrix: np.ndarray, u0: np.ndarray, time_grid: np.ndarray) -> np.ndarray:
    """exp(-t_k A) u0 for an increasing grid, one step propagator per step size.

    Uniform grids cost a single Pade expm; arbitrary increasing grids reuse
    propagators for repeated step sizes.
    """
    time_grid = np.asarray(time_grid, dtype=float)
    if time_grid.size == 0:
        return np.zeros((0, u0.shape[0]))
    steps = np.diff(time_grid)
    if np.any(steps <= 0):
        raise InvalidGridError("time grid must be strictly increasing")
    out = np.empty((time_grid.size,) + u0.shape)
    u = u0.copy()
    if time_grid[0] != 0.0:
        u = scipy.linalg.expm(-time_grid[0] * matrix) @ u
    out[0] = u
    cache: dict[float, np.ndarray] = {}
    for i, dt in enumerate(steps):
        key = round(float(dt), 15)
        prop = cache.get(key)
        if prop is None:
            prop = scipy.linalg.expm(-dt * matrix)
            cache[key] = prop
        u = prop @ u
        out[i + 1] = u
    return out


def semigroup_decay(
    matrix: np.ndarray,
    stationary_projector: np.ndarray,
    u0: np.ndarray,
    time_grid: np.ndarray,
    window: tuple[float, float] = (1e-10, 1e-2),
) -> SemigroupDecay:
    """Residual ||exp(-tA) u0 - Pi u0|| with its fitted decay rate.

    An initial state already inside the kernel gives an identically zero
    residual; that is reported as a degenerate fit with a warning rather
    than an error.
    """
    u0 = np.asarray(u0, dtype=float)
    pi_u0 = stationary_projector @ u0
    traj = propagate_series(matrix, u0, time_grid)
    residuals = np.linalg.norm(traj - pi_u0, axis=1)
    norms = np.linalg.norm(traj, axis=1)
    if residuals[0] <= 1e-12 * max(np.linalg.norm(u0), 1e-300):
        warnings.warn("u0 lies in the stationary subspace; decay fit skipped")
        fit = DecayFit(None, None, None, 0, degenerate=True)
    else:
        fit = fit_exponential_decay(time_grid, residuals, window=window)
    return SemigroupDecay(
        times=np.asarray(time_grid, float), residuals=residuals, norms=norms, fit=fit
    )


def operator_norm(
    matrix: np.ndarray,
    method: str = "svd",
    max_iter: int = 500,
    tol: float = 1e-13,
    seed: int = 0,
) -> float:
    """Spectral norm, exact by default.

    method="power" runs Rayleigh-quotient iteration on A^T A; it converges
    from below, which is why the one-sided derivative-bound check uses the
    exact SVD value instead.
    """
    matrix = np.asarray(matrix, dtype=float)
    if method == "svd":
        return float(np.linalg.norm(matrix, 2))
    if method != "power":
        raise ValueError(f"unknown method {method!r}")
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(matrix.shape[1])
    v /= np.linalg.norm(v)
    gram = matrix.T @ matrix
    lam = 0.0
    for _ in range(max_iter):
        w = gram @ v
        nl = float(np.linalg.norm(w))
        if nl == 0.0:
            return 0.0
        v = w / nl
        if abs(nl - lam) <= tol * nl:
            lam = nl
            break
        lam = nl
    return float(np.sqrt(lam))


def submultiplicativity_check(
    matrix: np.ndarray,
    u0: np.ndarray,
    t: float,
    n_max: int = 8,
) -> list[SubmultiplicativityRow]:
    """Check ||exp(-tA) A^n u0|| <= ||exp(-(t/n)A) A||^n ||u0|| for n <= n_max.

    Powers of A are accumulated with per-step normalization (log-scaled), so
    large spectra cannot overflow; the reported lhs/rhs fold the scale back.
    """
    if not t > 0:
        raise ValueError("t must be positive")
    if n_max > 8:
        raise ValueError("n_max above 8 is outside the conditioning budget")
    matrix = np.asarray(matrix, dtype=float)
    u0 = np.asarray(u0, dtype=float)
    nu0 = np.linalg.norm(u0)
    rows = []
    y = u0 / nu0
    log_scale = np.log(nu0)
    exp_t = scipy.linalg.expm(-t * matrix)
    for n in range(1, n_max + 1):
        y = matrix @ y
        ny = np.linalg.norm(y)
        log_scale += np.log(ny)
        y = y / ny
        log_lhs = np.log(np.linalg.norm(exp_t @ y)) + log_scale
        bn = scipy.linalg.expm(-(t / n) * matrix) @ matrix
        log_rhs = n * np.log(operator_norm(bn)) + np.log(nu0)
        rows.append(
            SubmultiplicativityRow(
                n=n,
                lhs=float(np.exp(log_lhs)),
                rhs=float(np.exp(log_rhs)),
                ratio=float(np.exp(log_lhs - log_rhs)),
            )
        )
    return rows
