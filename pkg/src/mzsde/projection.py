"""Finite-rank Mori projections and the orthogonal-dynamics generator QKQ.

Observable functions are stored as coefficient vectors in the orthonormal
weighted basis, so the weighted inner product is the Euclidean dot product
and the Mori projector is a literal symmetric projection matrix
P = V G^{-1} V^T with Gram matrix G = V^T V.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .basis import project_function
from .errors import (
    DependentObservablesError,
    DimensionMismatchError,
    InvalidObservableError,
)
from .operator import GeneratorMatrix

__all__ = [
    "MoriProjection",
    "OrthogonalGenerator",
    "build_mori_projection",
    "assemble_qkq",
    "solve_conjugate_observables",
    "kernel_qkq",
    "build_pi0q",
    "orthogonal_dynamics",
]


@dataclass(frozen=True)
class MoriProjection:
    """Mori projection onto the span of m observable coefficient vectors."""

    observables: np.ndarray  # (N, m) column matrix V, stored as given
    gram: np.ndarray  # (m, m), symmetric positive definite

    @property
    def rank(self) -> int:
        return self.observables.shape[1]

    @property
    def dimension(self) -> int:
        return self.observables.shape[0]

    def projector(self) -> np.ndarray:
        """P = V G^{-1} V^T."""
        v = self.observables
        return v @ np.linalg.solve(self.gram, v.T)

    def complement(self) -> np.ndarray:
        """Q = I - P."""
        return np.eye(self.dimension) - self.projector()

    def gram_inverse(self) -> np.ndarray:
        return np.linalg.inv(self.gram)


@dataclass
class OrthogonalGenerator:
    """QKQ (accretive convention) plus its numerically resolved kernel data.

    Built incrementally by assemble_qkq -> solve_conjugate_observables ->
    kernel_qkq -> build_pi0q (or in one go by :func:`orthogonal_dynamics`)
    and treated as immutable afterwards.
    """

    qkq: np.ndarray
    kernel_basis: np.ndarray | None = None  # (N, dim), orthonormal columns
    conjugates: list[np.ndarray | None] | None = None
    conjugate_residuals: list[float] | None = None
    adjoint_consistent: list[bool] | None = None
    pi0q: np.ndarray | None = None
    kernel_dim: int | None = None
    expected_kernel_dim: int | None = None
    kernel_tol: float = 1e-8

    singular_values: np.ndarray | None = field(default=None, repr=False)


def build_mori_projection(observables, basis, quad, cond_limit: float = 1e12) -> MoriProjection:
    """Project observables onto the basis and build the Mori projection.

    ``observables`` is a list of callables (projected via the quadrature) or
    of ready coefficient vectors.  Raises DependentObservablesError when the
    Gram matrix is numerically singular (condition number above cond_limit).
    """
    cols = []
    for obs in observables:
        if callable(obs):
            cols.append(project_function(obs, basis, quad))
        else:
            cols.append(np.asarray(obs, dtype=float))
    v = np.column_stack(cols)
    gram = v.T @ v
    cond = np.linalg.cond(gram)
    if not np.isfinite(cond) or cond > cond_limit:
        raise DependentObservablesError(
            f"observable Gram matrix has condition number {cond:.3e}"
        )
    proj = MoriProjection(observables=v, gram=gram)
    p = proj.projector()
    assert np.abs(p @ p - p).max() < 1e-10 and np.abs(p - p.T).max() < 1e-10
    return proj


def assemble_qkq(gen: GeneratorMatrix, proj: MoriProjection) -> OrthogonalGenerator:
    """QKQ = Q A Q with Q = I - P, in the accretive convention."""
    if gen.size != proj.dimension:
        raise DimensionMismatchError(
            f"generator size {gen.size} != projection dimension {proj.dimension}"
        )
    q = proj.complement()
    return OrthogonalGenerator(qkq=q @ gen.as_accretive() @ q)


def solve_conjugate_observables(
    gen: GeneratorMatrix,
    proj: MoriProjection,
    residual_rtol: float = 1e-6,
    orthogonality_tol: float = 1e-8,
):
    """Solve A w_j = v_j on the complement of Ker(A), then remove P w_j.

    The minimum-norm least-squares solution is automatically orthogonal to
    Ker(A); projecting out the observable span enforces <w_j, v_i> = 0.  A
    w_j surviving both the residual and orthogonality checks is a conjugate
    observable; otherwise its slot is None (non-fatal: the kernel of QKQ is
    then resolved numerically only).

    Returns (conjugates, residuals, adjoint_consistent); the last flags
    whether A^T w_j = v_j also holds, the condition under which the paper's
    closed-form equilibrium projector applies.
    """
    a = gen.as_accretive()
    v = proj.observables
    p = proj.projector()
    conjugates: list[np.ndarray | None] = []
    residuals: list[float] = []
    adjoint_ok: list[bool] = []
    for j in range(proj.rank):
        vj = v[:, j]
        nvj = np.linalg.norm(vj)
        if abs(vj[0]) > orthogonality_tol * max(nvj, 1.0):
            raise InvalidObservableError(
                f"observable {j} has nonzero mean (constant-mode coefficient {vj[0]:.3e})"
            )
        w, *_ = np.linalg.lstsq(a, vj, rcond=None)
        w = w - p @ w
        resid = np.linalg.norm(a @ w - vj) / nvj
        orth = np.abs(v.T @ w).max()
        if resid <= residual_rtol and orth <= orthogonality_tol * max(nvj, 1.0):
            conjugates.append(w)
            residuals.append(float(resid))
            adjoint_ok.append(
                bool(np.linalg.norm(a.T @ w - vj) <= residual_rtol * nvj)
            )
        else:
            conjugates.append(None)
            residuals.append(float(resid))
            adjoint_ok.append(False)
    return conjugates, residuals, adjoint_ok


def kernel_qkq(og: OrthogonalGenerator, tol: float = 1e-8) -> np.ndarray:
    """Orthonormal basis of the numerical null space of QKQ via SVD.

    Threshold is relative: singular values <= tol * s_max count as zero.
    The dimension is reported, not asserted, against the 2m+1 prediction
    (Galerkin truncation can perturb the kernel).
    """
    _, s, vt = np.linalg.svd(og.qkq)
    dim = int(np.sum(s <= tol * s[0]))
    basis = vt[len(s) - dim:].T if dim > 0 else np.zeros((og.qkq.shape[0], 0))
    og.kernel_basis = basis
    og.kernel_dim = dim
    og.kernel_tol = tol
    og.singular_values = s
    return basis


def build_pi0q(og: OrthogonalGenerator) -> np.ndarray:
    """Orthogonal projector onto Ker(QKQ): pi0q = E E^T.

    Because the numerical kernel of QKQ coincides with that of (QKQ)^T for
    the supported projections, qkq @ pi0q and pi0q @ qkq both vanish to the
    kernel tolerance; both residuals are left to the caller's diagnostics.
    """
    if og.kernel_basis is None:
        raise ValueError("kernel_qkq must be computed before build_pi0q")
    if og.kernel_basis.shape[1] == 0:
        raise RuntimeError("empty QKQ kernel; constants should always be present")
    e = og.kernel_basis
    og.pi0q = e @ e.T
    return og.pi0q


def orthogonal_dynamics(
    gen: GeneratorMatrix,
    proj: MoriProjection,
    tol: float = 1e-8,
    solve_conjugates: bool = True,
) -> OrthogonalGenerator:
    """Assemble QKQ, conjugates, kernel basis and pi0q in one pass.

    Observables with nonzero mean have no conjugate by definition; they
    degrade gracefully to the SVD kernel (expected_kernel_dim stays None).
    """
    og = assemble_qkq(gen, proj)
    if solve_conjugates:
        try:
            conj, resid, adj = solve_conjugate_observables(gen, proj)
            og.conjugates = conj
            og.conjugate_residuals = resid
            og.adjoint_consistent = adj
            if all(c is not None for c in conj):
                og.expected_kernel_dim = 2 * proj.rank + 1
        except InvalidObservableError:
            og.conjugates = [None] * proj.rank
    kernel_qkq(og, tol=tol)
    build_pi0q(og)
    return og
