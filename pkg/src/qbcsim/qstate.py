"""Dense simulation of small multi-register qubit systems.

Index convention
----------------
A :class:`RegisterMap` lists registers in order. The basis-state index of a
:class:`StateVector` is big-endian at both levels: the first register occupies
the most significant bits of the index, and inside a register the first qubit
is the most significant bit. For registers ``[("a", 1), ("b", 2)]`` the
index of ``|a=1, b=2>`` is ``1 * 4 + 2 = 6``.

Diagonal basis states follow ``|0>x = (|0> + |1>)/sqrt(2)`` and
``|1>x = (|0> - |1>)/sqrt(2)``.
"""

from __future__ import annotations

import enum
import functools
import logging
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

logger = logging.getLogger(__name__)

STRUCT_TOL = 1e-9
SPECTRAL_TOL = 1e-7

HADAMARD = np.array([[1, 1], [1, -1]], dtype=complex) / np.sqrt(2)
PAULI_X = np.array([[0, 1], [1, 0]], dtype=complex)


class Basis(enum.IntEnum):
    """Single-qubit measurement/coding basis; the value is the BB84 basis bit."""

    RECTILINEAR = 0
    DIAGONAL = 1

    @classmethod
    def from_bit(cls, x: int) -> "Basis":
        return cls(int(x))

    @property
    def symbol(self) -> str:
        return "+" if self is Basis.RECTILINEAR else "x"

    def change_of_basis(self) -> np.ndarray:
        """Unitary mapping basis state ``|k>_basis`` to computational ``|k>``."""
        return HADAMARD if self is Basis.DIAGONAL else np.eye(2, dtype=complex)


@dataclass(frozen=True)
class RegisterMap:
    registers: tuple[tuple[str, int], ...]

    def __post_init__(self):
        regs = tuple((str(name), int(width)) for name, width in self.registers)
        object.__setattr__(self, "registers", regs)
        names = [name for name, _ in regs]
        if len(set(names)) != len(names):
            raise ValueError(f"duplicate register names in {names}")
        if any(width < 1 for _, width in regs):
            raise ValueError("register widths must be >= 1")
        if not regs:
            raise ValueError("a register map needs at least one register")

    @classmethod
    def of(cls, *registers: tuple[str, int]) -> "RegisterMap":
        return cls(tuple(registers))

    @property
    def names(self) -> list[str]:
        return [name for name, _ in self.registers]

    @property
    def widths(self) -> list[int]:
        return [width for _, width in self.registers]

    @property
    def total_width(self) -> int:
        return sum(self.widths)

    @property
    def dim(self) -> int:
        return 2**self.total_width

    def __contains__(self, name: str) -> bool:
        return name in self.names

    def position(self, name: str) -> int:
        try:
            return self.names.index(name)
        except ValueError:
            raise KeyError(f"no register named {name!r}; have {self.names}") from None

    def width(self, name: str) -> int:
        return self.registers[self.position(name)][1]

    def qubit_offset(self, name: str) -> int:
        """Position of the register's first qubit, counted from the most significant."""
        pos = self.position(name)
        return sum(self.widths[:pos])

    def qubits(self, names: Iterable[str]) -> list[int]:
        out = []
        for name in names:
            off = self.qubit_offset(name)
            out.extend(range(off, off + self.width(name)))
        return out

    def concat(self, other: "RegisterMap") -> "RegisterMap":
        return RegisterMap(self.registers + other.registers)

    def subset(self, names: Sequence[str]) -> "RegisterMap":
        return RegisterMap(tuple((name, self.width(name)) for name in names))


def _check_names(layout: RegisterMap, names: Sequence[str]) -> list[str]:
    names = list(names)
    if not names:
        raise ValueError("register list must be nonempty")
    if len(set(names)) != len(names):
        raise ValueError(f"repeated register in {names}")
    for name in names:
        layout.position(name)
    return names


@dataclass(frozen=True, eq=False)
class StateVector:
    layout: RegisterMap
    amplitudes: np.ndarray

    def __post_init__(self):
        amps = np.array(self.amplitudes, dtype=complex).reshape(-1)
        if amps.shape[0] != self.layout.dim:
            raise ValueError(
                f"expected {self.layout.dim} amplitudes for {self.layout.names}, "
                f"got {amps.shape[0]}"
            )
        norm = np.linalg.norm(amps)
        if abs(norm - 1.0) > STRUCT_TOL:
            raise ValueError(f"state is not normalized (norm = {norm!r})")
        amps.flags.writeable = False
        object.__setattr__(self, "amplitudes", amps)

    @classmethod
    def from_amplitudes(
        cls, registers: Sequence[tuple[str, int]], amplitudes, normalize: bool = False
    ) -> "StateVector":
        amps = np.asarray(amplitudes, dtype=complex)
        if normalize:
            amps = amps / np.linalg.norm(amps)
        return cls(RegisterMap(tuple(registers)), amps)

    @classmethod
    def basis_state(cls, registers: Sequence[tuple[str, int]], values: Sequence[int]):
        """Computational basis state with register ``k`` holding ``values[k]``."""
        layout = RegisterMap(tuple(registers))
        index = 0
        for (name, width), value in zip(layout.registers, values, strict=True):
            if not 0 <= value < 2**width:
                raise ValueError(f"value {value} does not fit register {name!r}")
            index = (index << width) | int(value)
        amps = np.zeros(layout.dim, dtype=complex)
        amps[index] = 1.0
        return cls(layout, amps)

    @property
    def dim(self) -> int:
        return self.layout.dim

    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    def tensor(self) -> np.ndarray:
        """Amplitudes shaped with one axis per register."""
        return self.amplitudes.reshape([2**w for w in self.layout.widths])

    def inner(self, other: "StateVector") -> complex:
        """``<self|other>``; layouts must match."""
        if self.layout != other.layout:
            raise ValueError("layouts differ")
        return complex(np.vdot(self.amplitudes, other.amplitudes))

    def reorder(self, names: Sequence[str]) -> "StateVector":
        """Same state with registers permuted into ``names`` order."""
        names = _check_names(self.layout, names)
        if sorted(names) != sorted(self.layout.names):
            raise ValueError("reorder needs every register exactly once")
        axes = [self.layout.position(n) for n in names]
        amps = np.transpose(self.tensor(), axes).reshape(-1)
        return StateVector(self.layout.subset(names), amps)

    def bipartite_matrix(self, side_a: Sequence[str], side_b: Sequence[str]) -> np.ndarray:
        """Amplitude matrix ``M[a, b]`` with rows over ``side_a`` and columns over ``side_b``."""
        ordered = self.reorder(list(side_a) + list(side_b))
        dim_a = 2 ** sum(self.layout.width(n) for n in side_a)
        return ordered.amplitudes.reshape(dim_a, -1)

    def branches(self, tol: float = 1e-12) -> dict[tuple[int, ...], complex]:
        """Nonzero amplitudes keyed by per-register computational values."""
        shape = [2**w for w in self.layout.widths]
        out = {}
        for index in np.flatnonzero(np.abs(self.amplitudes) > tol):
            out[tuple(int(v) for v in np.unravel_index(index, shape))] = self.amplitudes[index]
        return out


@dataclass(frozen=True, eq=False)
class DensityMatrix:
    """Hermitian, unit-trace, PSD matrix; ``layout`` is needed only for partial traces."""

    matrix: np.ndarray
    layout: RegisterMap | None = None

    def __post_init__(self):
        m = np.array(self.matrix, dtype=complex)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise ValueError(f"density matrix must be square, got shape {m.shape}")
        if self.layout is not None and self.layout.dim != m.shape[0]:
            raise ValueError("layout dimension does not match matrix")
        if np.max(np.abs(m - m.conj().T), initial=0.0) > STRUCT_TOL:
            raise ValueError("density matrix is not Hermitian")
        tr = np.trace(m).real
        if abs(tr - 1.0) > STRUCT_TOL:
            raise ValueError(f"density matrix trace is {tr!r}, expected 1")
        lo = np.linalg.eigvalsh(m).min()
        if lo < -STRUCT_TOL:
            raise ValueError(f"density matrix has negative eigenvalue {lo!r}")
        m.flags.writeable = False
        object.__setattr__(self, "matrix", m)

    @classmethod
    def from_state(cls, s: StateVector) -> "DensityMatrix":
        return cls(np.outer(s.amplitudes, s.amplitudes.conj()), s.layout)

    @classmethod
    def mixture(cls, weights: Sequence[float], states: Sequence[StateVector]):
        m = sum(w * np.outer(s.amplitudes, s.amplitudes.conj()) for w, s in zip(weights, states))
        return cls(m, states[0].layout)

    @classmethod
    def maximally_mixed(cls, dim: int) -> "DensityMatrix":
        return cls(np.eye(dim, dtype=complex) / dim)

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    def eigenvalues(self) -> np.ndarray:
        return np.linalg.eigvalsh(self.matrix)

    def purity(self) -> float:
        return float(np.real(np.trace(self.matrix @ self.matrix)))


@dataclass(frozen=True, eq=False)
class UnitaryOp:
    matrix: np.ndarray
    target: tuple[str, ...] | None = None

    def __post_init__(self):
        u = np.array(self.matrix, dtype=complex)
        if u.ndim != 2 or u.shape[0] != u.shape[1]:
            raise ValueError(f"unitary must be square, got shape {u.shape}")
        err = np.max(np.abs(u @ u.conj().T - np.eye(u.shape[0])))
        if err > STRUCT_TOL:
            raise ValueError(f"matrix is not unitary (|UU^+ - I| = {err:.3g})")
        u.flags.writeable = False
        object.__setattr__(self, "matrix", u)
        if self.target is not None:
            object.__setattr__(self, "target", tuple(self.target))

    @classmethod
    def identity(cls, dim: int, target=None) -> "UnitaryOp":
        return cls(np.eye(dim, dtype=complex), target)

    @classmethod
    def permutation(cls, mapping: Sequence[int], target=None) -> "UnitaryOp":
        """Unitary sending basis state ``|k>`` to ``|mapping[k]>``."""
        dim = len(mapping)
        if sorted(mapping) != list(range(dim)):
            raise ValueError("mapping is not a permutation")
        u = np.zeros((dim, dim), dtype=complex)
        u[np.asarray(mapping), np.arange(dim)] = 1.0
        return cls(u, target)

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    def dagger(self) -> "UnitaryOp":
        return UnitaryOp(self.matrix.conj().T, self.target)

    def kron(self, other: "UnitaryOp") -> "UnitaryOp":
        return UnitaryOp(np.kron(self.matrix, other.matrix))


@functools.lru_cache(maxsize=None)
def bb84_state(x: int, z: int, name: str = "q") -> StateVector:
    """BB84 coding: bit ``z`` in the basis selected by ``x`` (0 = +, 1 = x)."""
    if x not in (0, 1) or z not in (0, 1):
        raise ValueError("x and z must be bits")
    amps = Basis.from_bit(x).change_of_basis().conj().T[:, z]
    return StateVector.from_amplitudes([(name, 1)], amps)


def basis_vector(basis: Basis, k: int) -> np.ndarray:
    return basis.change_of_basis().conj().T[:, k]


def tensor(a: StateVector, b: StateVector) -> StateVector:
    layout = a.layout.concat(b.layout)
    return StateVector(layout, np.kron(a.amplitudes, b.amplitudes))


def apply_unitary(s: StateVector, u: UnitaryOp | np.ndarray, targets: Sequence[str] | None = None) -> StateVector:
    """Apply ``u`` to the registers ``targets`` (in that order), identity elsewhere."""
    if not isinstance(u, UnitaryOp):
        u = UnitaryOp(u)
    if targets is None:
        targets = u.target
    if targets is None:
        raise ValueError("no target registers given")
    targets = _check_names(s.layout, targets)
    dim_t = 2 ** sum(s.layout.width(n) for n in targets)
    if u.dim != dim_t:
        raise ValueError(f"unitary of dim {u.dim} does not fit targets {targets} (dim {dim_t})")
    axes = [s.layout.position(n) for n in targets]
    t = np.moveaxis(s.tensor(), axes, range(len(axes)))
    moved_shape = t.shape
    t = (u.matrix @ t.reshape(dim_t, -1)).reshape(moved_shape)
    amps = np.moveaxis(t, range(len(axes)), axes).reshape(-1)
    return StateVector(s.layout, amps)


def apply_permutation(s: StateVector, mapping: Sequence[int], targets: Sequence[str]) -> StateVector:
    """Apply the basis permutation ``|k> -> |mapping[k]>`` on ``targets`` without a dense matrix."""
    targets = _check_names(s.layout, targets)
    mapping = np.asarray(mapping, dtype=np.intp)
    dim_t = 2 ** sum(s.layout.width(n) for n in targets)
    if mapping.shape != (dim_t,):
        raise ValueError(f"mapping of length {len(mapping)} does not fit targets {targets}")
    if not np.array_equal(np.sort(mapping), np.arange(dim_t)):
        raise ValueError("mapping is not a permutation")
    axes = [s.layout.position(n) for n in targets]
    t = np.moveaxis(s.tensor(), axes, range(len(axes)))
    moved_shape = t.shape
    flat = t.reshape(dim_t, -1)
    out = np.empty_like(flat)
    out[mapping] = flat
    amps = np.moveaxis(out.reshape(moved_shape), range(len(axes)), axes).reshape(-1)
    return StateVector(s.layout, amps)


def hadamard_all(width: int) -> np.ndarray:
    m = np.ones((1, 1), dtype=complex)
    for _ in range(width):
        m = np.kron(m, HADAMARD)
    return m


def _qubit_tensor(s: StateVector) -> np.ndarray:
    return s.amplitudes.reshape((2,) * s.layout.total_width)


def _rotate(t: np.ndarray, qubits: Sequence[int], bases: Sequence[Basis], inverse=False) -> np.ndarray:
    for q, basis in zip(qubits, bases):
        if basis is Basis.RECTILINEAR:
            continue
        m = basis.change_of_basis()
        if inverse:
            m = m.conj().T
        t = np.moveaxis(np.tensordot(m, t, axes=([1], [q])), 0, q)
    return t


def _normalize_bases(layout: RegisterMap, targets, basis_per_qubit) -> tuple[list[int], list[Basis]]:
    targets = _check_names(layout, targets)
    qubits = layout.qubits(targets)
    if isinstance(basis_per_qubit, (Basis, int)):
        bases = [Basis(basis_per_qubit)] * len(qubits)
    else:
        bases = [Basis(b) for b in basis_per_qubit]
    if len(bases) != len(qubits):
        raise ValueError(f"need one basis per target qubit ({len(qubits)}), got {len(bases)}")
    return qubits, bases


def _split_outcomes(s: StateVector, qubits, bases) -> tuple[np.ndarray, tuple]:
    """Rotated amplitudes with target qubits gathered as leading axis."""
    t = _rotate(_qubit_tensor(s), qubits, bases)
    t = np.moveaxis(t, qubits, range(len(qubits)))
    return t.reshape(2 ** len(qubits), -1), t.shape


def _project(s: StateVector, qubits, bases, k: int, prob: float, split=None) -> StateVector:
    mat, shape = _split_outcomes(s, qubits, bases) if split is None else split
    kept = np.zeros_like(mat)
    kept[k] = mat[k] / np.sqrt(prob)
    t = np.moveaxis(kept.reshape(shape), range(len(qubits)), qubits)
    t = _rotate(t, qubits, bases, inverse=True)
    return StateVector(s.layout, t.reshape(-1))


def outcome_probabilities(s: StateVector, targets: Sequence[str], basis_per_qubit) -> np.ndarray:
    """Born probabilities of every outcome, indexed by the outcome bit string as an integer."""
    qubits, bases = _normalize_bases(s.layout, targets, basis_per_qubit)
    mat, _ = _split_outcomes(s, qubits, bases)
    return np.sum(np.abs(mat) ** 2, axis=1)


def measure(
    s: StateVector,
    targets: Sequence[str],
    basis_per_qubit,
    rng: np.random.Generator,
) -> tuple[str, StateVector, float]:
    """Projective measurement of the target registers, one basis per qubit.

    Returns the outcome bit string (target qubits in order), the renormalized
    post-measurement state, and the Born probability of that outcome. Exactly
    one uniform draw is taken from ``rng``.
    """
    qubits, bases = _normalize_bases(s.layout, targets, basis_per_qubit)
    split = _split_outcomes(s, qubits, bases)
    probs = np.sum(np.abs(split[0]) ** 2, axis=1)
    cdf = np.cumsum(probs)
    k = int(np.searchsorted(cdf, rng.random() * cdf[-1], side="right"))
    k = min(k, len(probs) - 1)
    while probs[k] <= 0.0:
        k -= 1
    prob = float(probs[k])
    assert prob > 0.0, "sampled a zero-probability outcome"
    post = _project(s, qubits, bases, k, prob, split)
    return format(k, f"0{len(qubits)}b"), post, prob


def measurement_branches(
    s: StateVector, targets: Sequence[str], basis_per_qubit, tol: float = 1e-14
) -> list[tuple[str, float, StateVector]]:
    """Every outcome with probability above ``tol``, with its post-measurement state."""
    qubits, bases = _normalize_bases(s.layout, targets, basis_per_qubit)
    split = _split_outcomes(s, qubits, bases)
    probs = np.sum(np.abs(split[0]) ** 2, axis=1)
    return [
        (format(k, f"0{len(qubits)}b"), float(p), _project(s, qubits, bases, k, float(p), split))
        for k, p in enumerate(probs)
        if p > tol
    ]


def partial_trace(s: StateVector | DensityMatrix, keep: Sequence[str]) -> DensityMatrix:
    """Reduced state on ``keep`` (registers ordered as listed)."""
    if isinstance(s, StateVector):
        layout = s.layout
        keep = _check_names(layout, keep)
        rest = [n for n in layout.names if n not in keep]
        if rest:
            m = s.bipartite_matrix(keep, rest)
        else:
            m = s.reorder(keep).amplitudes.reshape(-1, 1)
        rho = m @ m.conj().T
        return DensityMatrix((rho + rho.conj().T) / 2, layout.subset(keep))

    if s.layout is None:
        raise ValueError("partial trace of a density matrix needs its register layout")
    layout = s.layout
    keep = _check_names(layout, keep)
    rest = [n for n in layout.names if n not in keep]
    dims = [2**w for w in layout.widths]
    r = len(dims)
    t = s.matrix.reshape(dims + dims)
    order = [layout.position(n) for n in keep + rest]
    t = np.transpose(t, order + [p + r for p in order])
    dk = 2 ** sum(layout.width(n) for n in keep)
    dr = s.dim // dk
    rho = np.einsum("ajbj->ab", t.reshape(dk, dr, dk, dr))
    return DensityMatrix((rho + rho.conj().T) / 2, layout.subset(keep))


def _as_density(r) -> DensityMatrix:
    if isinstance(r, DensityMatrix):
        return r
    if isinstance(r, StateVector):
        return DensityMatrix.from_state(r)
    return DensityMatrix(np.asarray(r))


def sqrtm_psd(m: np.ndarray) -> np.ndarray:
    """Square root of a Hermitian PSD matrix, clamping negative eigenvalues to zero."""
    vals, vecs = np.linalg.eigh(m)
    lo = vals.min()
    if lo < -STRUCT_TOL:
        logger.warning("clamping eigenvalue %.3g to zero in sqrtm_psd", lo)
    vals = np.clip(vals, 0.0, None)
    return (vecs * np.sqrt(vals)) @ vecs.conj().T


def trace_norm(m: np.ndarray) -> float:
    return float(np.sum(np.linalg.svd(m, compute_uv=False)))


def trace_distance(r0, r1) -> float:
    r0, r1 = _as_density(r0), _as_density(r1)
    if r0.dim != r1.dim:
        raise ValueError(f"dimension mismatch: {r0.dim} vs {r1.dim}")
    vals = np.linalg.eigvalsh(r0.matrix - r1.matrix)
    return float(min(1.0, 0.5 * np.sum(np.abs(vals))))


def fidelity(r0, r1) -> float:
    """Root fidelity ``tr sqrt(sqrt(r0) r1 sqrt(r0))``.

    Evaluated as the trace norm of ``sqrt(r0) sqrt(r1)``, which has the same
    value and avoids taking a square root of a nearly singular product.
    """
    r0, r1 = _as_density(r0), _as_density(r1)
    if r0.dim != r1.dim:
        raise ValueError(f"dimension mismatch: {r0.dim} vs {r1.dim}")
    f = trace_norm(sqrtm_psd(r0.matrix) @ sqrtm_psd(r1.matrix))
    return float(min(1.0, max(0.0, f)))


def random_state(registers: Sequence[tuple[str, int]], rng: np.random.Generator) -> StateVector:
    layout = RegisterMap(tuple(registers))
    v = rng.normal(size=layout.dim) + 1j * rng.normal(size=layout.dim)
    return StateVector(layout, v / np.linalg.norm(v))


def random_density(dim: int, rng: np.random.Generator, rank: int | None = None) -> DensityMatrix:
    rank = dim if rank is None else rank
    g = rng.normal(size=(dim, rank)) + 1j * rng.normal(size=(dim, rank))
    m = g @ g.conj().T
    m = m / np.trace(m).real
    return DensityMatrix((m + m.conj().T) / 2)


def random_unitary(dim: int, rng: np.random.Generator) -> UnitaryOp:
    z = (rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))) / np.sqrt(2)
    q, r = np.linalg.qr(z)
    d = np.diagonal(r)
    return UnitaryOp(q * (d / np.abs(d)))
