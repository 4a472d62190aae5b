"""Orthonormal polynomial bases of weighted L2 spaces and Gauss quadrature.

Every basis is defined by the monic three-term recurrence of the orthogonal
polynomials of its (probability-normalized) weight,

    p_{k+1}(x) = (x - a_k) p_k(x) - b_k p_{k-1}(x),      b_0 = total mass = 1,

from which orthonormal values, Gauss rules (Golub-Welsch nodes, Christoffel
weights) and coefficient projections are derived.  Inner products of basis
coefficients are plain dot products, which is what makes the downstream
projection and generator algebra purely matrix-valued.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.special import logsumexp

from .errors import InsufficientRecurrenceError, NonNormalizableWeightError

__all__ = [
    "WeightDescriptor",
    "OrthonormalBasis",
    "ProductBasis",
    "QuadratureRule",
    "build_hermite_basis",
    "build_weighted_basis",
    "resolve_support",
    "gauss_quadrature",
    "project_function",
    "reconstruct",
    "orthonormality_residual",
]

# Values of |phi_k| above this trigger renormalization inside the Christoffel
# weight accumulation; keeps the sum representable at edge nodes.
_RENORM_THRESHOLD = 1e100


@dataclass(frozen=True)
class WeightDescriptor:
    """Log-density of a 1-D probability weight, up to an additive constant.

    kind is "gaussian" (scale = standard deviation) or "custom" (generic
    log-density built by the Stieltjes path).  support is the interval on
    which quadrature grids for the weight were resolved.
    """

    kind: str
    log_density: Callable[[np.ndarray], np.ndarray]
    scale: float | None = None
    support: tuple[float, float] = (-np.inf, np.inf)


@dataclass(frozen=True)
class QuadratureRule:
    """Gauss rule exact on polynomials of degree 2*len(nodes)-1."""

    nodes: np.ndarray
    weights: np.ndarray
    axis: int = 0


@dataclass(frozen=True)
class OrthonormalBasis:
    """Orthonormal polynomial basis of L2 for a single axis.

    Attributes
    ----------
    size : number of basis functions (degrees 0 .. size-1).
    recurrence_a, recurrence_b : monic recurrence coefficients; ``b[0] = 1``
        is the (normalized) weight mass, so depth ``len(a)`` quadrature nodes
        are available.
    weight : descriptor of the underlying probability weight.
    """

    size: int
    recurrence_a: np.ndarray
    recurrence_b: np.ndarray
    weight: WeightDescriptor
    axis: int = 0

    axes: int = field(default=1, init=False)

    @property
    def depth(self) -> int:
        return self.recurrence_a.size

    @property
    def normalization_constants(self) -> np.ndarray:
        """Norms of the monic polynomials: ||p_k|| = sqrt(b_0 ... b_k)."""
        return np.sqrt(np.cumprod(self.recurrence_b[: self.size + 1]))

    def evaluate(self, x, n_deriv: int = 0) -> np.ndarray:
        """Raw values phi_k(x) (and derivatives) at arbitrary points.

        Returns array of shape (n_deriv+1, size, len(x)).  Intended for
        point reconstruction at moderate degree; quadrature work should use
        :meth:`weighted_values`, which stays O(1) at extreme nodes.
        """
        x = np.atleast_1d(np.asarray(x, dtype=float))
        return _recurrence_values(
            self.recurrence_a, self.recurrence_b, self.size, x,
            scale=np.ones_like(x), n_deriv=n_deriv,
        )

    def weighted_values(self, quad: QuadratureRule, n_deriv: int = 0) -> np.ndarray:
        """sqrt(w_j) * phi_k(x_j) (and derivatives scaled the same way).

        The Christoffel bound keeps these O(1) for every k below the rule
        order, so Gram/Galerkin sums built from them do not amplify roundoff.
        """
        return _recurrence_values(
            self.recurrence_a, self.recurrence_b, self.size,
            np.asarray(quad.nodes, dtype=float),
            scale=np.sqrt(quad.weights), n_deriv=n_deriv,
        )


@dataclass(frozen=True)
class ProductBasis:
    """Tensor basis phi_i(q) psi_j(p) for the two-axis phase space.

    Flattened coefficient index is ``i * p.size + j`` (row-major, q outer),
    matching ``np.kron(A_q, B_p)`` operator blocks.
    """

    q: OrthonormalBasis
    p: OrthonormalBasis

    axes: int = field(default=2, init=False)

    @property
    def size(self) -> int:
        return self.q.size * self.p.size

    def evaluate_point(self, coeffs: np.ndarray, q, p) -> np.ndarray:
        """Reconstruct sum_ij c_ij phi_i(q) psi_j(p) at scalar or array points."""
        c = np.asarray(coeffs, dtype=float).reshape(self.q.size, self.p.size)
        vq = self.q.evaluate(q)[0]
        vp = self.p.evaluate(p)[0]
        return np.einsum("ij,ix,jx->x", c, vq, vp)


def _recurrence_values(a, b, size, x, scale, n_deriv=0):
    """Orthonormal recurrence evaluation with a per-point prefactor.

    The prefactor commutes with the (linear, per-point) recurrence, so
    passing sqrt(w) evaluates the quadrature-scaled functions directly.
    """
    out = np.zeros((n_deriv + 1, size, x.size))
    sb = np.sqrt(b)
    phi_m1 = np.zeros_like(x)
    phi = scale / sb[0]
    d_m1 = np.zeros_like(x)
    d = np.zeros_like(x)
    dd_m1 = np.zeros_like(x)
    dd = np.zeros_like(x)
    for k in range(size):
        out[0, k] = phi
        if n_deriv >= 1:
            out[1, k] = d
        if n_deriv >= 2:
            out[2, k] = dd
        lo = sb[k] if k > 0 else 0.0
        phi_n = ((x - a[k]) * phi - lo * phi_m1) / sb[k + 1]
        if n_deriv >= 1:
            d_n = ((x - a[k]) * d + phi - lo * d_m1) / sb[k + 1]
            d_m1, d = d, d_n
        if n_deriv >= 2:
            dd_n = ((x - a[k]) * dd + 2 * d_m1 - lo * dd_m1) / sb[k + 1]
            dd_m1, dd = dd, dd_n
        phi_m1, phi = phi, phi_n
    return out


def build_hermite_basis(scale: float, size: int, depth: int | None = None) -> OrthonormalBasis:
    """Orthonormal polynomial basis for the Gaussian weight N(0, scale^2).

    The recurrence is the probabilists' Hermite one rescaled by ``scale``:
    a_k = 0, b_k = k * scale^2 (and b_0 = 1, the weight mass).
    """
    if not scale > 0:
        raise ValueError(f"scale must be positive, got {scale}")
    if size < 2:
        raise ValueError(f"size must be at least 2, got {size}")
    depth = depth if depth is not None else 2 * size + 8
    a = np.zeros(depth)
    b = np.ones(depth + 1)
    b[1:] = np.arange(1, depth + 1) * scale * scale
    s = float(scale)
    weight = WeightDescriptor(
        kind="gaussian",
        log_density=lambda x, _s=s: -np.asarray(x, dtype=float) ** 2 / (2 * _s * _s),
        scale=s,
    )
    return OrthonormalBasis(size=size, recurrence_a=a, recurrence_b=b, weight=weight)


def resolve_support(log_weight, support_hint, n_probe=2000, max_expand=80):
    """Grow the interval until the weight mass converges; detect divergence.

    Returns (lo, hi, log_mass).  Raises NonNormalizableWeightError when the
    mass keeps growing after the expansion budget (e.g. log_weight = +x^2).
    """
    lo, hi = float(support_hint[0]), float(support_hint[1])
    if not hi > lo:
        raise ValueError(f"support_hint must be an increasing interval, got {support_hint}")
    t, wt = leggauss(n_probe)
    prev = -np.inf
    for _ in range(max_expand):
        x = 0.5 * (hi + lo) + 0.5 * (hi - lo) * t
        lw = np.asarray(log_weight(x), dtype=float)
        if not np.all(np.isfinite(lw) | (lw == -np.inf)):
            raise NonNormalizableWeightError("log weight produced non-finite values")
        log_mass = logsumexp(lw, b=0.5 * (hi - lo) * wt)
        if np.isfinite(prev) and log_mass - prev < 1e-13:
            return lo, hi, log_mass
        prev = log_mass
        mid, half = 0.5 * (hi + lo), 0.5 * (hi - lo)
        lo, hi = mid - 1.5 * half, mid + 1.5 * half
    raise NonNormalizableWeightError(
        "weight mass did not converge under interval refinement; "
        "the weight looks non-normalizable"
    )


def build_weighted_basis(
    log_weight: Callable[[np.ndarray], np.ndarray],
    size: int,
    support_hint: tuple[float, float] = (-8.0, 8.0),
    depth: int | None = None,
    n_grid: int | None = None,
) -> OrthonormalBasis:
    """Orthonormal basis for the weight exp(log_weight)/Z by the Stieltjes procedure.

    The recurrence coefficients are accumulated against an oversampled
    Gauss-Legendre discretization of the normalized weight on its resolved
    support.  Intended for weights exp(-beta*V) with polynomially growing V.
    """
    if size < 2:
        raise ValueError(f"size must be at least 2, got {size}")
    depth = depth if depth is not None else 2 * size + 8
    n_grid = n_grid if n_grid is not None else max(1000, 8 * depth)
    lo, hi, log_mass = resolve_support(log_weight, support_hint)
    t, wt = leggauss(n_grid)
    x = 0.5 * (hi + lo) + 0.5 * (hi - lo) * t
    logw = np.asarray(log_weight(x), dtype=float) - log_mass
    w = 0.5 * (hi - lo) * wt * np.exp(logw)
    w = w / w.sum()

    a = np.zeros(depth)
    b = np.ones(depth + 1)
    phi_m1 = np.zeros_like(x)
    phi = np.ones_like(x)
    for k in range(depth):
        a[k] = np.sum(w * x * phi * phi)
        r = (x - a[k]) * phi - (np.sqrt(b[k]) if k > 0 else 0.0) * phi_m1
        b[k + 1] = np.sum(w * r * r)
        if not b[k + 1] > 0:
            raise NonNormalizableWeightError(
                f"Stieltjes recurrence broke down at depth {k + 1}; "
                "increase n_grid or reduce depth"
            )
        phi_m1, phi = phi, r / np.sqrt(b[k + 1])

    weight = WeightDescriptor(kind="custom", log_density=log_weight, support=(lo, hi))
    return OrthonormalBasis(size=size, recurrence_a=a, recurrence_b=b, weight=weight)


def gauss_quadrature(basis: OrthonormalBasis, n_nodes: int) -> QuadratureRule:
    """Gauss rule of the basis weight from the Jacobi matrix of the recurrence.

    Nodes are the eigenvalues of the symmetric tridiagonal Jacobi matrix.
    Weights come from the Christoffel function w_j = b_0 / sum_k phi_k(x_j)^2,
    which (unlike squared eigenvector components) remains relatively accurate
    at the extreme nodes.
    """
    if n_nodes < 1:
        raise ValueError(f"n_nodes must be positive, got {n_nodes}")
    if n_nodes > basis.depth:
        raise InsufficientRecurrenceError(
            f"{n_nodes} nodes requested but recurrence depth is {basis.depth}"
        )
    a = basis.recurrence_a
    b = basis.recurrence_b
    if n_nodes == 1:
        return QuadratureRule(nodes=np.array([a[0]]), weights=np.array([b[0]]), axis=basis.axis)
    off = np.sqrt(b[1:n_nodes])
    jacobi = np.diag(a[:n_nodes]) + np.diag(off, 1) + np.diag(off, -1)
    x = np.linalg.eigvalsh(jacobi)

    phi_m1 = np.zeros_like(x)
    phi = np.ones_like(x)
    ssum = np.ones_like(x)
    logs = np.zeros_like(x)
    sb = np.sqrt(b)
    for k in range(n_nodes - 1):
        lo = sb[k] if k > 0 else 0.0
        phi_m1, phi = phi, ((x - a[k]) * phi - lo * phi_m1) / sb[k + 1]
        big = np.abs(phi) > _RENORM_THRESHOLD
        if big.any():
            f = np.where(big, np.abs(phi), 1.0)
            phi = phi / f
            phi_m1 = phi_m1 / f
            ssum = ssum / (f * f)
            logs += np.log(f)
        ssum = ssum + phi * phi
    w = b[0] * np.exp(-2 * logs) / ssum
    return QuadratureRule(nodes=x, weights=w, axis=basis.axis)


def project_function(f, basis, quad) -> np.ndarray:
    """Coefficients of ``f`` in the basis: c_k = sum_j w_j f(x_j) phi_k(x_j).

    For a :class:`ProductBasis`, ``quad`` is the pair (quad_q, quad_p) and
    ``f`` takes broadcastable (q, p) arrays; the flattened coefficient vector
    follows the basis index convention.
    """
    if getattr(basis, "axes", 1) == 2:
        quad_q, quad_p = quad
        fv = np.asarray(
            f(quad_q.nodes[:, None], quad_p.nodes[None, :]), dtype=float
        )
        fv = np.broadcast_to(fv, (quad_q.nodes.size, quad_p.nodes.size))
        # weighted_values carry one sqrt(w) factor per axis; the integrand
        # needs the full weight, so the function values carry the other.
        fv = fv * np.sqrt(quad_q.weights)[:, None] * np.sqrt(quad_p.weights)[None, :]
        vq = basis.q.weighted_values(quad_q)[0]
        vp = basis.p.weighted_values(quad_p)[0]
        return (vq @ fv @ vp.T).reshape(-1)
    fv = np.asarray(f(quad.nodes), dtype=float) * np.sqrt(quad.weights)
    vals = basis.weighted_values(quad)[0]
    return vals @ fv


def reconstruct(coeffs: np.ndarray, basis: OrthonormalBasis, x) -> np.ndarray:
    """Evaluate sum_k c_k phi_k at the given points."""
    vals = basis.evaluate(x)[0]
    return np.asarray(coeffs, dtype=float) @ vals


def gram_matrix(basis, quad) -> np.ndarray:
    """Gram matrix of the basis under its own quadrature (identity, ideally)."""
    if getattr(basis, "axes", 1) == 2:
        gq = gram_matrix(basis.q, quad[0])
        gp = gram_matrix(basis.p, quad[1])
        return np.kron(gq, gp)
    vals = basis.weighted_values(quad)[0]
    return vals @ vals.T


def orthonormality_residual(basis, quad) -> float:
    """Max entrywise deviation of the Gram matrix from the identity."""
    g = gram_matrix(basis, quad)
    return float(np.abs(g - np.eye(g.shape[0])).max())
