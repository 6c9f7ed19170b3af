"""Schmidt decompositions, cheating unitaries and two-state discrimination."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .qstate import (
    SPECTRAL_TOL,
    STRUCT_TOL,
    DensityMatrix,
    StateVector,
    UnitaryOp,
    apply_unitary,
    fidelity,
    partial_trace,
    trace_norm,
)

SCHMIDT_CUTOFF = 1e-12

Bipartition = tuple[Sequence[str], Sequence[str]]


class ReducedStateMismatch(ValueError):
    """Side-B reduced states differ; use :func:`uhlmann_unitary` instead."""


@dataclass(frozen=True, eq=False)
class SchmidtDecomposition:
    coefficients: np.ndarray  # lambda_i, descending; the amplitudes are sqrt(lambda_i)
    a_vectors: np.ndarray  # columns
    b_vectors: np.ndarray  # columns
    bipartition: tuple[tuple[str, ...], tuple[str, ...]]

    @property
    def rank(self) -> int:
        return len(self.coefficients)

    def reconstruct(self) -> np.ndarray:
        """Amplitudes of ``sum_i sqrt(lambda_i) a_i (x) b_i`` in (A, B) register order."""
        m = (self.a_vectors * np.sqrt(self.coefficients)) @ self.b_vectors.T
        return m.reshape(-1)


def _validate_bipartition(s: StateVector, bipartition: Bipartition):
    side_a, side_b = (tuple(side) for side in bipartition)
    if not side_a or not side_b:
        raise ValueError("both sides of the bipartition must be nonempty")
    if sorted(side_a + side_b) != sorted(s.layout.names):
        raise ValueError(
            f"bipartition {side_a} | {side_b} does not partition {s.layout.names}"
        )
    return side_a, side_b


def schmidt_decompose(s: StateVector, bipartition: Bipartition) -> SchmidtDecomposition:
    """Schmidt form of ``s`` across ``bipartition``.

    The B-side vectors are an eigenbasis of the reduced state on B; each A-side
    vector is back-solved from the state, so degenerate coefficients still pair
    correctly and the reconstruction is exact.
    """
    side_a, side_b = _validate_bipartition(s, bipartition)
    m = s.bipartite_matrix(side_a, side_b)
    rho_b = m.T @ m.conj()
    vals, vecs = np.linalg.eigh((rho_b + rho_b.conj().T) / 2)
    order = np.argsort(vals)[::-1]
    vals, vecs = vals[order], vecs[:, order]
    keep = vals > SCHMIDT_CUTOFF
    vals, vecs = vals[keep], vecs[:, keep]
    a = (m @ vecs.conj()) / np.sqrt(vals)
    # back-solved vectors are orthonormal in exact arithmetic; re-orthonormalize the
    # numerical residue without changing the span ordering
    q, r = np.linalg.qr(a)
    phases = np.diagonal(r) / np.abs(np.diagonal(r))
    a = q * phases
    return SchmidtDecomposition(vals / vals.sum(), a, vecs, (side_a, side_b))


def _complete_basis(vectors: np.ndarray) -> np.ndarray:
    """Orthonormal completion of the columns of ``vectors``.

    Gram-Schmidt over the canonical basis, in index order, so the result is
    deterministic.
    """
    dim, k = vectors.shape
    basis = [vectors[:, j] for j in range(k)]
    for e in np.eye(dim, dtype=complex):
        if len(basis) == dim:
            break
        v = e.copy()
        for _ in range(2):
            for u in basis:
                v = v - np.vdot(u, v) * u
        nv = np.linalg.norm(v)
        if nv > 1e-8:
            basis.append(v / nv)
    return np.column_stack(basis)


def cheat_unitary(phi0: StateVector, phi1: StateVector, bipartition: Bipartition) -> UnitaryOp:
    """Side-A unitary mapping ``phi0`` onto ``phi1`` when their B-side reductions agree."""
    side_a, side_b = _validate_bipartition(phi0, bipartition)
    _validate_bipartition(phi1, bipartition)
    m0 = phi0.bipartite_matrix(side_a, side_b)
    m1 = phi1.bipartite_matrix(side_a, side_b)
    rho0 = m0.T @ m0.conj()
    rho1 = m1.T @ m1.conj()
    gap = np.max(np.abs(rho0 - rho1))
    if gap > SPECTRAL_TOL:
        raise ReducedStateMismatch(f"reduced B states differ by {gap:.3g}")

    dec = schmidt_decompose(phi0, (side_a, side_b))
    e0 = dec.a_vectors
    e1 = (m1 @ dec.b_vectors.conj()) / np.sqrt(dec.coefficients)
    q, r = np.linalg.qr(e1)
    e1 = q * (np.diagonal(r) / np.abs(np.diagonal(r)))
    full0 = _complete_basis(e0)
    full1 = _complete_basis(e1)
    return UnitaryOp(full1 @ full0.conj().T, side_a)


def uhlmann_unitary(
    psi0: StateVector, phi1: StateVector, bipartition: Bipartition
) -> tuple[UnitaryOp, float]:
    """Side-A unitary maximizing ``|<phi1|(U (x) I)|psi0>|``.

    The overlap equals ``|tr(U M)|`` with ``M = Psi0 Phi1^+`` (amplitude
    matrices, rows on A). Its maximum is the trace norm of ``M``, reached by the
    unitary polar factor from the SVD; that maximum is the fidelity of the two
    reduced B states.
    """
    side_a, side_b = _validate_bipartition(psi0, bipartition)
    _validate_bipartition(phi1, bipartition)
    m0 = psi0.bipartite_matrix(side_a, side_b)
    m1 = phi1.bipartite_matrix(side_a, side_b)
    w, sigma, vh = np.linalg.svd(m0 @ m1.conj().T)
    u = vh.conj().T @ w.conj().T
    return UnitaryOp(u, side_a), float(np.sum(sigma))


def achieved_overlap(psi: StateVector, u: UnitaryOp, target: StateVector) -> float:
    moved = apply_unitary(psi, u, u.target)
    return abs(target.inner(moved))


@dataclass(frozen=True, eq=False)
class DiscriminationInstance:
    rho0: DensityMatrix
    rho1: DensityMatrix
    prior0: float = 0.5

    def __post_init__(self):
        if not 0.0 <= self.prior0 <= 1.0:
            raise ValueError(f"prior0 must lie in [0, 1], got {self.prior0}")
        if self.rho0.dim != self.rho1.dim:
            raise ValueError(f"dimension mismatch: {self.rho0.dim} vs {self.rho1.dim}")

    @property
    def prior1(self) -> float:
        return 1.0 - self.prior0

    def weighted_difference(self) -> np.ndarray:
        return self.prior0 * self.rho0.matrix - self.prior1 * self.rho1.matrix


@dataclass(frozen=True)
class AnalysisConfig:
    alpha: float
    n_photons: int

    def __post_init__(self):
        if self.alpha <= 0:
            raise ValueError("alpha must be positive")
        if self.n_photons < 1:
            raise ValueError("n_photons must be at least 1")
        if not 0.0 < self.bound < 1.0:
            raise ValueError("2^(-alpha n) must lie strictly between 0 and 1")

    @property
    def bound(self) -> float:
        return 2.0 ** (-self.alpha * self.n_photons)


def distinguishing_error(inst: DiscriminationInstance) -> float:
    """Minimum error probability of any measurement guessing which state was sent."""
    pe = 0.5 * (1.0 - trace_norm(inst.weighted_difference()))
    return float(min(0.5, max(0.0, pe)))


def optimal_projector(inst: DiscriminationInstance) -> np.ndarray:
    """Projector onto the positive part of ``p0 rho0 - p1 rho1``; outcome in it means guess 0."""
    vals, vecs = np.linalg.eigh(inst.weighted_difference())
    pos = vecs[:, vals > 0]
    return pos @ pos.conj().T


def measurement_error(inst: DiscriminationInstance, projector: np.ndarray) -> float:
    """Error probability of the two-outcome measurement ``{P, I - P}`` (P means guess 0)."""
    p = np.asarray(projector)
    miss0 = np.real(np.trace(inst.rho0.matrix @ (np.eye(len(p)) - p)))
    miss1 = np.real(np.trace(inst.rho1.matrix @ p))
    return float(inst.prior0 * miss0 + inst.prior1 * miss1)


def check_concealment_bound(inst: DiscriminationInstance, cfg: AnalysisConfig) -> bool:
    return abs(0.5 - distinguishing_error(inst)) <= cfg.bound


def reduced_fidelity(s0: StateVector, s1: StateVector, side_b: Sequence[str]) -> float:
    return fidelity(partial_trace(s0, side_b), partial_trace(s1, side_b))


def schmidt_reconstruction_error(s: StateVector, dec: SchmidtDecomposition) -> float:
    side_a, side_b = dec.bipartition
    target = s.reorder(list(side_a) + list(side_b)).amplitudes
    return float(np.max(np.abs(dec.reconstruct() - target)))


__all__ = [
    "AnalysisConfig",
    "DiscriminationInstance",
    "ReducedStateMismatch",
    "SCHMIDT_CUTOFF",
    "STRUCT_TOL",
    "SchmidtDecomposition",
    "achieved_overlap",
    "cheat_unitary",
    "check_concealment_bound",
    "distinguishing_error",
    "measurement_error",
    "optimal_projector",
    "reduced_fidelity",
    "schmidt_decompose",
    "schmidt_reconstruction_error",
    "uhlmann_unitary",
]
