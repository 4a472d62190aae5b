"""Streaming matrix, memory kernel, fluctuation term and the projected GLE.

Sign-convention bridge (used by every formula in this module): generators
are stored accretively, A = -K, with semigroups exp(-tA).  The decomposition
formulas are stated for the plain generator K, so here

    K   -> gen.as_generator()        (= -A)
    QKQ -> -qkq                      (propagator exp(t QKQ) = exp(-t qkq))
    K*  -> gen.as_generator().T      (weighted adjoint = matrix transpose)

With V the observable columns, G = V^T V and Q = I - P:

    Omega  = (V^T K V)^T G^{-1}
    K(t)   = (W^T exp(-t qkq) U)^T G^{-1},  U = Q K V,  W = Q K^T V
    f_j(t) = exp(-t qkq) U[:, j]
    limits: K_inf = (W^T pi0q U)^T G^{-1},  f_inf_j = pi0q U[:, j]
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import DimensionMismatchError, InvalidGridError, SchemeDivergenceError
from .operator import GeneratorMatrix
from .projection import MoriProjection, OrthogonalGenerator
from .spectral import DecayFit, fit_exponential_decay

__all__ = [
    "EmzDecomposition",
    "streaming_matrix",
    "memory_kernel",
    "fluctuation_term",
    "equilibrium_limits",
    "solve_gle",
    "second_fdt_diagnostic",
    "emz_decomposition",
]


@dataclass(frozen=True)
class EmzDecomposition:
    """The full decomposition on a time grid, with equilibrium limits and fits."""

    omega: np.ndarray  # (m, m)
    time_grid: np.ndarray  # (T,)
    kernel_series: np.ndarray  # (T, m, m)
    fluct_series: np.ndarray  # (T, m, N)
    kernel_equilibrium: np.ndarray  # (m, m)
    fluct_equilibrium: np.ndarray  # (m, N)
    kernel_fit: DecayFit
    fluct_fit: DecayFit

    @property
    def fitted_rate(self) -> float | None:
        return self.kernel_fit.rate

    @property
    def fit_constant(self) -> float | None:
        return self.kernel_fit.constant

    @property
    def kernel_residuals(self) -> np.ndarray:
        return np.abs(self.kernel_series - self.kernel_equilibrium).max(axis=(1, 2))

    @property
    def fluct_residuals(self) -> np.ndarray:
        return np.linalg.norm(
            self.fluct_series - self.fluct_equilibrium, axis=2
        ).max(axis=1)


def _check_match(gen: GeneratorMatrix, proj: MoriProjection):
    if gen.size != proj.dimension:
        raise DimensionMismatchError(
            f"generator size {gen.size} != projection dimension {proj.dimension}"
        )


def _propagated_vectors(gen, proj, og, time_grid):
    """exp(-t qkq) applied to the columns of U = Q K V, per grid point."""
    time_grid = np.asarray(time_grid, dtype=float)
    steps = np.diff(time_grid)
    if time_grid.size == 0 or np.any(steps <= 0):
        raise InvalidGridError("time grid must be non-empty and strictly increasing")
    k_gen = gen.as_generator()
    q = proj.complement()
    u = q @ (k_gen @ proj.observables)  # (N, m)
    out = np.empty((time_grid.size,) + u.shape)
    cur = u.copy()
    if time_grid[0] != 0.0:
        cur = scipy.linalg.expm(-time_grid[0] * og.qkq) @ cur
    out[0] = cur
    cache: dict[float, np.ndarray] = {}
    for i, dt in enumerate(steps):
        key = round(float(dt), 15)
        prop = cache.get(key)
        if prop is None:
            prop = scipy.linalg.expm(-dt * og.qkq)
            cache[key] = prop
        cur = prop @ cur
        out[i + 1] = cur
    return out


def streaming_matrix(gen: GeneratorMatrix, proj: MoriProjection) -> np.ndarray:
    """Markovian part: Omega_ij = sum_k G^{-1}_jk <v_k, K v_i>."""
    _check_match(gen, proj)
    v = proj.observables
    s = v.T @ (gen.as_generator() @ v)
    return s.T @ proj.gram_inverse()


def memory_kernel(
    gen: GeneratorMatrix,
    proj: MoriProjection,
    og: OrthogonalGenerator,
    time_grid: np.ndarray,
) -> np.ndarray:
    """Matrix-valued kernel K_ij(t) = sum_k G^{-1}_jk <v_k, K e^{tQKQ} Q K v_i>."""
    _check_match(gen, proj)
    w = proj.complement() @ (gen.as_generator().T @ proj.observables)
    ginv = proj.gram_inverse()
    propagated = _propagated_vectors(gen, proj, og, time_grid)
    return np.einsum("nk,tni,kj->tij", w, propagated, ginv, optimize=True)


def fluctuation_term(
    gen: GeneratorMatrix,
    proj: MoriProjection,
    og: OrthogonalGenerator,
    time_grid: np.ndarray,
) -> np.ndarray:
    """Coefficient trajectories f_j(t) = e^{tQKQ} Q K v_j, shape (T, m, N)."""
    _check_match(gen, proj)
    propagated = _propagated_vectors(gen, proj, og, time_grid)
    return np.swapaxes(propagated, 1, 2)


def equilibrium_limits(
    gen: GeneratorMatrix, proj: MoriProjection, og: OrthogonalGenerator
):
    """Long-time limits (kernel_equilibrium, fluct_equilibrium).

    kernel_equilibrium_ij = sum_k G^{-1}_jk <Q K* v_k, pi0q K v_i> and
    fluct_equilibrium_j = pi0q Q K v_j; requires og.pi0q.
    """
    _check_match(gen, proj)
    if og.pi0q is None:
        raise ValueError("build_pi0q must run before equilibrium_limits")
    k_gen = gen.as_generator()
    q = proj.complement()
    u = q @ (k_gen @ proj.observables)
    w = q @ (k_gen.T @ proj.observables)
    pu = og.pi0q @ u
    kernel_eq = (w.T @ pu).T @ proj.gram_inverse()
    return kernel_eq, pu.T


def solve_gle(
    omega: np.ndarray,
    time_grid: np.ndarray,
    kernel_series: np.ndarray,
    initial: np.ndarray,
    forcing: np.ndarray | None = None,
) -> np.ndarray:
    """Trapezoidal Volterra scheme for dq/dt = Omega q + int_0^t K(t-s) q(s) ds.

    Implicit in the current-time trapezoid weight: each step solves the
    fixed m x m system (I - dt/2 Omega - dt^2/4 K_0).  Requires a uniform
    grid; optional forcing is an (T, m) array added to the right-hand side.
    """
    omega = np.atleast_2d(np.asarray(omega, dtype=float))
    time_grid = np.asarray(time_grid, dtype=float)
    kernel_series = np.asarray(kernel_series, dtype=float)
    m = omega.shape[0]
    n = time_grid.size
    if n < 2:
        raise InvalidGridError("time grid needs at least two points")
    steps = np.diff(time_grid)
    dt = steps[0]
    if np.any(steps <= 0) or np.abs(steps - dt).max() > 1e-9 * dt:
        raise InvalidGridError("convolution scheme requires a uniform increasing grid")
    if kernel_series.shape != (n, m, m):
        raise DimensionMismatchError(
            f"kernel series shape {kernel_series.shape} != {(n, m, m)}"
        )
    f = np.zeros((n, m)) if forcing is None else np.asarray(forcing, dtype=float)
    if f.shape != (n, m):
        raise DimensionMismatchError(f"forcing shape {f.shape} != {(n, m)}")

    q = np.zeros((n, m))
    q[0] = np.asarray(initial, dtype=float)
    step_matrix = np.linalg.inv(
        np.eye(m) - 0.5 * dt * omega - 0.25 * dt * dt * kernel_series[0]
    )
    scalar = m == 1
    kflat = kernel_series[:, 0, 0] if scalar else None
    qflat = q[:, 0] if scalar else None
    limit = 1e6 * max(float(np.linalg.norm(q[0])), 1e-300)

    for k in range(n - 1):
        if scalar:
            # 1-D fast path: the history contractions are plain dots
            conv_k = dt * (
                0.5 * kflat[k] * qflat[0]
                + (kflat[k - 1:0:-1] @ qflat[1:k] if k >= 2 else 0.0)
                + 0.5 * kflat[0] * qflat[k]
            ) if k >= 1 else 0.0
            part_next = dt * (
                0.5 * kflat[k + 1] * qflat[0]
                + (kflat[k:0:-1] @ qflat[1:k + 1] if k >= 1 else 0.0)
            )
            rhs_k = omega[0, 0] * qflat[k] + conv_k + f[k, 0]
            qflat[k + 1] = step_matrix[0, 0] * (
                qflat[k] + 0.5 * dt * (rhs_k + part_next + f[k + 1, 0])
            )
            norm_next = abs(qflat[k + 1])
        else:
            if k >= 1:
                hist = np.einsum("jab,jb->a", kernel_series[k - 1:0:-1], q[1:k]) if k >= 2 else 0.0
                conv_k = dt * (
                    0.5 * kernel_series[k] @ q[0] + hist + 0.5 * kernel_series[0] @ q[k]
                )
            else:
                conv_k = np.zeros(m)
            hist_next = (
                np.einsum("jab,jb->a", kernel_series[k:0:-1], q[1:k + 1])
                if k >= 1 else np.zeros(m)
            )
            part_next = dt * (0.5 * kernel_series[k + 1] @ q[0] + hist_next)
            rhs_k = omega @ q[k] + conv_k + f[k]
            q[k + 1] = step_matrix @ (q[k] + 0.5 * dt * (rhs_k + part_next + f[k + 1]))
            norm_next = float(np.linalg.norm(q[k + 1]))
        if norm_next > limit:
            raise SchemeDivergenceError(
                f"trajectory norm exceeded 1e6 x initial at t={time_grid[k + 1]:.6g}"
            )
    return q


def second_fdt_diagnostic(
    dec: EmzDecomposition, gen: GeneratorMatrix, proj: MoriProjection
) -> np.ndarray:
    """Per-time max discrepancy between <f(t), f(0)> G^{-1} and K(t).

    The generator is not skew-adjoint in the weighted space, so the second
    fluctuation-dissipation relation generally fails; the series quantifies
    by how much (expected nonzero, reported rather than asserted).
    """
    f0 = dec.fluct_series[0]  # (m, N)
    corr = np.einsum(
        "kn,tin,kj->tij", f0, dec.fluct_series, proj.gram_inverse(), optimize=True
    )
    return np.abs(corr - dec.kernel_series).max(axis=(1, 2))


def emz_decomposition(
    gen: GeneratorMatrix,
    proj: MoriProjection,
    og: OrthogonalGenerator,
    time_grid: np.ndarray,
    fit_window: tuple[float, float] = (1e-10, 1e-2),
) -> EmzDecomposition:
    """Assemble the full decomposition and fit the relaxation envelopes.

    A kernel that starts at its equilibrium value (e.g. momentum observable
    in a harmonic potential, where Q K v is itself a kernel element of QKQ)
    yields a degenerate fit: there is no transient to regress on.
    """
    omega = streaming_matrix(gen, proj)
    kernel = memory_kernel(gen, proj, og, time_grid)
    fluct = fluctuation_term(gen, proj, og, time_grid)
    kernel_eq, fluct_eq = equilibrium_limits(gen, proj, og)

    kernel_resid = np.abs(kernel - kernel_eq).max(axis=(1, 2))
    fluct_resid = np.linalg.norm(fluct - fluct_eq, axis=2).max(axis=1)
    # The natural magnitude of kernel entries is ||K v||^2 ||G^{-1}||; residuals
    # at 1e-12 of that are Galerkin/roundoff junk, not a relaxation transient.
    kv = gen.as_generator() @ proj.observables
    scale = float(
        np.linalg.norm(kv, axis=0).max() ** 2 * np.abs(proj.gram_inverse()).max()
    )
    scale = max(scale, 1e-300)
    if kernel_resid[0] <= 1e-12 * scale:
        kernel_fit = DecayFit(None, None, None, 0, degenerate=True)
    else:
        kernel_fit = fit_exponential_decay(time_grid, kernel_resid, window=fit_window)
    fscale = max(np.linalg.norm(kv, axis=0).max(), 1e-300)
    if fluct_resid[0] <= 1e-12 * fscale:
        fluct_fit = DecayFit(None, None, None, 0, degenerate=True)
    else:
        fluct_fit = fit_exponential_decay(time_grid, fluct_resid, window=fit_window)

    return EmzDecomposition(
        omega=omega,
        time_grid=np.asarray(time_grid, dtype=float),
        kernel_series=kernel,
        fluct_series=fluct,
        kernel_equilibrium=kernel_eq,
        fluct_equilibrium=fluct_eq,
        kernel_fit=kernel_fit,
        fluct_fit=fluct_fit,
    )
