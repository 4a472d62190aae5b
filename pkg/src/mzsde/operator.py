"""Dense Galerkin assembly of backward Kolmogorov generators.

All matrices are stored by default in the *accretive* convention: the matrix
``A`` represents the negative generator, the semigroup of noise-averaged
observables is ``exp(-t A)``, and the symmetric part of ``A`` is positive
semidefinite for the supported models.  ``GeneratorMatrix.as_generator()``
recovers the plain-generator sign when a formula needs it.

The weighted representation uses the orthonormal basis of L2(rho_eq); its
image under the flat-space unitary map is orthonormal in plain L2, so the
coefficient matrix is numerically identical in both representations and the
flat transform is a re-tag.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Union

import numpy as np
from numpy.polynomial import polynomial as npoly

from .basis import (
    OrthonormalBasis,
    ProductBasis,
    QuadratureRule,
    build_hermite_basis,
    build_weighted_basis,
    gauss_quadrature,
)
from .errors import (
    AssemblyInconsistencyError,
    DimensionMismatchError,
    InconsistentBasisError,
    InvalidModelError,
)

__all__ = [
    "OrnsteinUhlenbeck",
    "Langevin1D",
    "GeneralDiffusion1D",
    "SdeModel",
    "GeneratorMatrix",
    "LadderForm",
    "LangevinWorkspace",
    "assemble_ou_generator",
    "assemble_langevin_generator",
    "assemble_general_generator",
    "assemble_ladder_form",
    "flat_space_transform",
    "apply_generator",
    "build_langevin_workspace",
    "build_ou_workspace",
]


@dataclass(frozen=True)
class OrnsteinUhlenbeck:
    """dx/dt = -theta x + sigma xi(t)."""

    theta: float
    sigma: float

    def __post_init__(self):
        if not (self.theta > 0 and self.sigma > 0):
            raise InvalidModelError(
                f"theta and sigma must be positive, got theta={self.theta}, sigma={self.sigma}"
            )

    @property
    def equilibrium_scale(self) -> float:
        """Standard deviation of the stationary Gaussian law."""
        return float(np.sqrt(self.sigma**2 / (2 * self.theta)))


@dataclass(frozen=True)
class Langevin1D:
    """Single-particle Langevin dynamics in one position dimension.

    ``potential`` holds polynomial coefficients of V(q) in increasing order.
    The noise amplitude is never stored: sigma = sqrt(2*gamma/beta) by the
    fluctuation-dissipation relation.
    """

    mu: float
    gamma: float
    beta: float
    potential: tuple[float, ...]

    def __post_init__(self):
        if not (self.mu > 0 and self.gamma > 0 and self.beta > 0):
            raise InvalidModelError("mu, gamma, beta must all be positive")
        coeffs = np.trim_zeros(np.asarray(self.potential, dtype=float), "b")
        if coeffs.size < 3:
            raise InvalidModelError("potential must have degree >= 2")
        if coeffs[-1] <= 0:
            raise InvalidModelError("leading potential coefficient must be positive")
        object.__setattr__(self, "potential", tuple(np.asarray(self.potential, dtype=float)))

    @property
    def sigma(self) -> float:
        return float(np.sqrt(2 * self.gamma / self.beta))

    @property
    def momentum_scale(self) -> float:
        """Standard deviation sqrt(mu/beta) of the Gibbs momentum marginal."""
        return float(np.sqrt(self.mu / self.beta))

    def potential_values(self, q) -> np.ndarray:
        return npoly.polyval(np.asarray(q, dtype=float), self.potential)

    def force_values(self, q) -> np.ndarray:
        """-V'(q)."""
        return -npoly.polyval(np.asarray(q, dtype=float), npoly.polyder(self.potential))


@dataclass(frozen=True)
class GeneralDiffusion1D:
    """dx/dt = F(x) + sigma(x) xi(t) with user-supplied drift and diffusion."""

    drift: Callable[[np.ndarray], np.ndarray]
    diffusion: Callable[[np.ndarray], np.ndarray]


SdeModel = Union[OrnsteinUhlenbeck, Langevin1D, GeneralDiffusion1D]


@dataclass(frozen=True)
class GeneratorMatrix:
    """Dense Galerkin matrix of the Kolmogorov operator in a fixed basis."""

    entries: np.ndarray
    representation: str  # "weighted" | "flat"
    sign_convention: str  # "accretive" | "generator"
    basis: OrthonormalBasis | ProductBasis
    model: SdeModel | None = None

    @property
    def size(self) -> int:
        return self.entries.shape[0]

    def as_accretive(self) -> np.ndarray:
        """Matrix of the negative generator (semigroup exp(-t A))."""
        if self.sign_convention == "accretive":
            return self.entries
        return -self.entries

    def as_generator(self) -> np.ndarray:
        """Matrix of the plain generator (semigroup exp(+t K))."""
        if self.sign_convention == "generator":
            return self.entries
        return -self.entries


@dataclass(frozen=True)
class LadderForm:
    """Flat-space canonical form: accretive matrix = sum_i Xi*_i Xi_i - X0."""

    x0: np.ndarray
    xi: list[np.ndarray]
    xi_star: list[np.ndarray]

    def reassemble(self) -> np.ndarray:
        acc = -self.x0.copy()
        for s, x in zip(self.xi_star, self.xi):
            acc = acc + s @ x
        return acc


@dataclass(frozen=True)
class LangevinWorkspace:
    """Bases, quadratures and assembled generator for one Langevin model."""

    model: Langevin1D
    basis: ProductBasis
    quad_q: QuadratureRule
    quad_p: QuadratureRule
    generator: GeneratorMatrix


def _check_stationarity(entries: np.ndarray, tol: float = 1e-8) -> None:
    """Constant mode must be annihilated on both sides in the weighted rep.

    Column 0 is zero because K kills constants; row 0 is zero only if the
    basis weight actually is the stationary measure, which makes it the
    operative mismatch detector.
    """
    scale = max(np.abs(entries).max(), 1.0)
    col = np.abs(entries[:, 0]).max()
    row = np.abs(entries[0, :]).max()
    if col > tol * scale or row > tol * scale:
        raise InconsistentBasisError(
            f"constant mode not annihilated (|col0|={col:.2e}, |row0|={row:.2e}); "
            "basis weight does not match the model equilibrium"
        )


def assemble_ou_generator(
    theta: float,
    sigma: float,
    basis: OrthonormalBasis,
    quad: QuadratureRule,
    sign_convention: str = "accretive",
) -> GeneratorMatrix:
    """Galerkin matrix of the OU operator K = -theta x d/dx + (sigma^2/2) d2/dx2.

    In the Hermite basis of the equilibrium weight N(0, sigma^2/(2 theta))
    the accretive matrix is exactly diag(0, theta, 2 theta, ...).
    """
    model = OrnsteinUhlenbeck(theta=theta, sigma=sigma)
    if basis.weight.kind != "gaussian" or abs(basis.weight.scale - model.equilibrium_scale) > 1e-10 * model.equilibrium_scale:
        raise InconsistentBasisError(
            f"basis weight is not the OU equilibrium N(0, {model.equilibrium_scale**2:.6g})"
        )
    vals = basis.weighted_values(quad, n_deriv=2)
    x = quad.nodes
    neg_k = theta * x * vals[1] - 0.5 * sigma**2 * vals[2]  # -K phi_k, sqrt(w)-scaled
    entries = vals[0] @ neg_k.T
    _check_stationarity(entries)
    if sign_convention == "generator":
        entries = -entries
    return GeneratorMatrix(
        entries=entries, representation="weighted",
        sign_convention=sign_convention, basis=basis, model=model,
    )


def _langevin_blocks(model, basis_q, basis_p, quad_q, quad_p):
    """Per-axis Galerkin blocks shared by the generator and the ladder form."""
    eq = basis_q.weighted_values(quad_q, n_deriv=1)
    ep = basis_p.weighted_values(quad_p, n_deriv=2)
    dv = npoly.polyval(quad_q.nodes, npoly.polyder(model.potential))
    blocks = {
        "Dq": eq[0] @ eq[1].T,                        # <phi_i, phi_k'>
        "Vq": eq[0] @ (dv * eq[0]).T,                 # <phi_i, V' phi_k>
        "Pm": ep[0] @ (quad_p.nodes * ep[0]).T,       # <psi_j, p psi_l>
        "Dp": ep[0] @ ep[1].T,                        # <psi_j, psi_l'>
        "PDp": ep[0] @ (quad_p.nodes * ep[1]).T,      # <psi_j, p psi_l'>
        "D2p": ep[0] @ ep[2].T,                       # <psi_j, psi_l''>
    }
    return blocks


def _check_langevin_bases(model, basis_q, basis_p):
    sp = model.momentum_scale
    if basis_p.weight.kind != "gaussian" or abs(basis_p.weight.scale - sp) > 1e-10 * sp:
        raise InconsistentBasisError(
            f"momentum basis must be Gaussian with scale sqrt(mu/beta)={sp:.6g}"
        )
    lo, hi = basis_q.weight.support
    probe = np.linspace(max(lo, -3.0), min(hi, 3.0), 7)
    diff = np.asarray(basis_q.weight.log_density(probe), dtype=float) \
        + model.beta * model.potential_values(probe)
    if np.ptp(diff) > 1e-8 * max(1.0, np.abs(diff).max()):
        raise InconsistentBasisError(
            "position basis weight differs from exp(-beta V) beyond an additive constant"
        )


def assemble_langevin_generator(
    model: Langevin1D,
    basis_q: OrthonormalBasis,
    basis_p: OrthonormalBasis,
    quad_q: QuadratureRule,
    quad_p: QuadratureRule,
    sign_convention: str = "accretive",
) -> GeneratorMatrix:
    """Galerkin matrix of the Langevin Kolmogorov operator on the (q, p) basis.

    The accretive operator -(p/mu) d_q + V'(q) d_p + gamma((p/mu) d_p -
    (1/beta) d_p^2) factorizes axis-by-axis, so the matrix is a sum of four
    Kronecker products of 1-D blocks.
    """
    _check_langevin_bases(model, basis_q, basis_p)
    blk = _langevin_blocks(model, basis_q, basis_p, quad_q, quad_p)
    iq = np.eye(basis_q.size)
    entries = (
        (-1.0 / model.mu) * np.kron(blk["Dq"], blk["Pm"])
        + np.kron(blk["Vq"], blk["Dp"])
        + (model.gamma / model.mu) * np.kron(iq, blk["PDp"])
        - (model.gamma / model.beta) * np.kron(iq, blk["D2p"])
    )
    _check_stationarity(entries)
    if sign_convention == "generator":
        entries = -entries
    return GeneratorMatrix(
        entries=entries, representation="weighted",
        sign_convention=sign_convention,
        basis=ProductBasis(q=basis_q, p=basis_p), model=model,
    )


def assemble_general_generator(
    model: GeneralDiffusion1D,
    basis: OrthonormalBasis,
    quad: QuadratureRule,
    sign_convention: str = "accretive",
) -> GeneratorMatrix:
    """Galerkin matrix of K = F(x) d/dx + (sigma(x)^2/2) d2/dx2 on a user basis.

    No accretivity or stationarity guarantee is made for arbitrary drift,
    diffusion and weight; downstream diagnostics report violations.
    """
    vals = basis.weighted_values(quad, n_deriv=2)
    x = quad.nodes
    fx = np.broadcast_to(np.asarray(model.drift(x), dtype=float), x.shape)
    sx = np.broadcast_to(np.asarray(model.diffusion(x), dtype=float), x.shape)
    neg_k = -(fx * vals[1] + 0.5 * sx**2 * vals[2])
    entries = vals[0] @ neg_k.T
    if sign_convention == "generator":
        entries = -entries
    return GeneratorMatrix(
        entries=entries, representation="weighted",
        sign_convention=sign_convention, basis=basis, model=model,
    )


def flat_space_transform(gen: GeneratorMatrix) -> GeneratorMatrix:
    """Toggle weighted <-> flat representation.

    The basis is orthonormal in the weighted space and its unitary image is
    orthonormal in flat L2, so the coefficient matrix is unchanged; spectra
    coincide exactly and the operation is an involution.
    """
    tag = "flat" if gen.representation == "weighted" else "weighted"
    return GeneratorMatrix(
        entries=gen.entries, representation=tag,
        sign_convention=gen.sign_convention, basis=gen.basis, model=gen.model,
    )


def assemble_ladder_form(
    model: Langevin1D,
    basis_q: OrthonormalBasis,
    basis_p: OrthonormalBasis,
    quad_q: QuadratureRule,
    quad_p: QuadratureRule,
    tol: float = 1e-6,
) -> LadderForm:
    """Creation/annihilation canonical form of the flat-space generator.

    Conjugating by the Gibbs ground state leaves the transport part as the
    bare skew operator (p/mu) d_q - V'(q) d_p and turns the dissipative part
    into sqrt(gamma/beta) ladder operators acting on the momentum modes:

        X0 = (p/mu) d_q - V' d_p,   Xi = sqrt(gamma/beta) d_p,
        Xi* = sqrt(gamma/beta) (-d_p + (beta/mu) p).

    Raises AssemblyInconsistencyError if Xi* Xi - X0 fails to reproduce the
    independently assembled accretive matrix (quadrature underresolution).
    """
    _check_langevin_bases(model, basis_q, basis_p)
    blk = _langevin_blocks(model, basis_q, basis_p, quad_q, quad_p)
    iq = np.eye(basis_q.size)
    amp = np.sqrt(model.gamma / model.beta)
    x0 = (1.0 / model.mu) * np.kron(blk["Dq"], blk["Pm"]) - np.kron(blk["Vq"], blk["Dp"])
    xi = amp * np.kron(iq, blk["Dp"])
    xi_star = amp * np.kron(iq, (model.beta / model.mu) * blk["Pm"] - blk["Dp"])
    form = LadderForm(x0=x0, xi=[xi], xi_star=[xi_star])

    reference = assemble_langevin_generator(
        model, basis_q, basis_p, quad_q, quad_p
    ).entries
    resid = np.abs(form.reassemble() - reference).max()
    if resid > tol:
        raise AssemblyInconsistencyError(
            f"ladder reassembly residual {resid:.3e} exceeds {tol:.1e}"
        )
    return form


def apply_generator(gen: GeneratorMatrix, coeffs: np.ndarray) -> np.ndarray:
    """Matrix-vector action of the stored matrix on a coefficient vector."""
    coeffs = np.asarray(coeffs, dtype=float)
    if coeffs.shape[0] != gen.size:
        raise DimensionMismatchError(
            f"coefficient length {coeffs.shape[0]} != matrix size {gen.size}"
        )
    return gen.entries @ coeffs


def build_ou_workspace(model: OrnsteinUhlenbeck, size: int):
    """Equilibrium Hermite basis, quadrature and generator for an OU model."""
    basis = build_hermite_basis(model.equilibrium_scale, size)
    quad = gauss_quadrature(basis, 2 * size)
    gen = assemble_ou_generator(model.theta, model.sigma, basis, quad)
    return basis, quad, gen


def build_langevin_workspace(
    model: Langevin1D,
    n_q: int,
    n_p: int,
    support_hint: tuple[float, float] | None = None,
) -> LangevinWorkspace:
    """Gibbs-weight bases, quadratures and generator for a Langevin model.

    The position weight exp(-beta V) goes through the Stieltjes path except
    for quadratic V, where the Gaussian recurrence is exact and cheaper.
    Quadrature order covers the V'(q) d_p Galerkin integrands exactly.
    """
    coeffs = np.trim_zeros(np.asarray(model.potential, dtype=float), "b")
    degree = coeffs.size - 1
    quadratic = degree == 2 and np.abs(coeffs[:2]).max() == 0.0
    if quadratic:
        s_q = float(np.sqrt(1.0 / (model.beta * 2 * coeffs[2])))
        basis_q = build_hermite_basis(s_q, n_q)
    else:
        hint = support_hint if support_hint is not None else (-6.0, 6.0)
        basis_q = build_weighted_basis(
            lambda q: -model.beta * model.potential_values(q), n_q, support_hint=hint
        )
    basis_p = build_hermite_basis(model.momentum_scale, n_p)
    quad_q = gauss_quadrature(basis_q, max(2 * n_q, n_q + degree + 2))
    quad_p = gauss_quadrature(basis_p, 2 * n_p)
    gen = assemble_langevin_generator(model, basis_q, basis_p, quad_q, quad_p)
    return LangevinWorkspace(
        model=model, basis=gen.basis, quad_q=quad_q, quad_p=quad_p, generator=gen
    )
