"""Cheating strategies against quantum bit commitment.

The Kent attack works on one four-register system per photon slot::

    r_w  (n qubits)  the preimage w, kept in superposition
    r_f  (n qubits)  f_{theta z}(w), measured to produce the commitment y
    rA_z (1 qubit)   Alice's copy of z, in basis theta
    rB_z (1 qubit)   the qubit sent to Bob in place of a BB84 photon

Before any measurement the system holds

    2^{-(n+1)/2} sum_w sum_z |w> |f_{theta z}(w)> |z>_theta |z>_theta
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Callable, Sequence

import numpy as np

from .analysis import cheat_unitary, reduced_fidelity, uhlmann_unitary
from .oneway import AuditedFamily, PermutationFamily
from .protocols import BB84Alice, KentAlice, SharedSystem
from .qstate import (
    SPECTRAL_TOL,
    Basis,
    StateVector,
    UnitaryOp,
    apply_permutation,
    apply_unitary,
    hadamard_all,
    measure,
    measurement_branches,
    partial_trace,
    random_state,
    random_unitary,
    tensor,
)

R_W, R_F, RA_Z, RB_Z = "r_w", "r_f", "rA_z", "rB_z"

PREPARED, COMMITTED, TESTED, ERASED, OPENED = "prepared", "committed", "tested", "erased", "opened"

Family = PermutationFamily | AuditedFamily


@dataclass(frozen=True, eq=False)
class GammaSystem:
    state: StateVector
    theta: Basis
    n: int
    y: int | None = None
    phase: str = PREPARED


def _need_phase(sys: GammaSystem, *phases: str):
    if sys.phase not in phases:
        raise ValueError(f"operation needs phase {' or '.join(phases)}, system is {sys.phase}")


def xor_eval_mapping(f: Callable[[int], int], in_width: int, out_width: int) -> np.ndarray:
    """Basis permutation ``|u>|v> -> |u>|v xor f(u)>`` on ``in_width + out_width`` qubits."""
    u = np.repeat(np.arange(2**in_width), 2**out_width)
    v = np.tile(np.arange(2**out_width), 2**in_width)
    fu = np.array([f(k) for k in range(2**in_width)], dtype=np.int64)
    if np.any((fu < 0) | (fu >= 2**out_width)):
        raise ValueError(f"f produced a value wider than {out_width} bits")
    return (u << out_width) | (v ^ fu[u])


def _rotate_z_registers(state: StateVector, theta: Basis, names: Sequence[str]) -> StateVector:
    """Map computational ``|z>`` to ``|z>_theta`` on each listed qubit."""
    if theta is Basis.RECTILINEAR:
        return state
    h = theta.change_of_basis().conj().T
    for name in names:
        state = apply_unitary(state, h, [name])
    return state


def prepare_gamma(fam: Family, theta: Basis) -> GammaSystem:
    """Entangled stand-in for a BB84 photon whose basis is ``theta``.

    Built reversibly: uniform superposition over ``(w, z)``, table evaluation
    of ``f_{theta z}(w)`` into ``r_f``, a CNOT copying ``z`` to Bob's qubit, and
    finally both ``z`` qubits rotated into basis ``theta``.
    """
    theta = Basis(theta)
    n = fam.n
    layout = [(R_W, n), (R_F, n), (RA_Z, 1), (RB_Z, 1)]
    state = StateVector.basis_state(layout, [0, 0, 0, 0])
    state = apply_unitary(state, hadamard_all(n), [R_W])
    state = apply_unitary(state, hadamard_all(1), [RA_Z])
    tables = (fam.table(int(theta), 0), fam.table(int(theta), 1))
    f = lambda u: int(tables[u & 1][u >> 1])  # u = (w, z)
    state = apply_permutation(state, xor_eval_mapping(f, n + 1, n), [R_W, RA_Z, R_F])
    state = apply_permutation(state, xor_eval_mapping(lambda z: z, 1, 1), [RA_Z, RB_Z])
    state = _rotate_z_registers(state, theta, [RA_Z, RB_Z])
    return GammaSystem(state, theta, n)


def kent_commit(sys: GammaSystem, rng: np.random.Generator) -> tuple[int, GammaSystem]:
    """Measure ``r_f`` in the rectilinear basis; the outcome is the commitment ``y``.

    No inverse is computed: projecting ``r_f`` onto ``y`` leaves exactly the
    two preimage branches.
    """
    _need_phase(sys, PREPARED)
    outcome, state, _ = measure(sys.state, [R_F], Basis.RECTILINEAR, rng)
    y = int(outcome, 2)
    return y, replace(sys, state=state, y=y, phase=COMMITTED)


def commit_branches(sys: GammaSystem) -> list[tuple[int, float, GammaSystem]]:
    """Every possible commitment with its probability and resulting system."""
    _need_phase(sys, PREPARED)
    return [
        (int(o, 2), p, replace(sys, state=s, y=int(o, 2), phase=COMMITTED))
        for o, p, s in measurement_branches(sys.state, [R_F], Basis.RECTILINEAR)
    ]


def _unveil_bases(sys: GammaSystem) -> list[Basis]:
    return [Basis.RECTILINEAR] * sys.n + [sys.theta]


def kent_unveil_for_test(sys: GammaSystem, rng: np.random.Generator) -> tuple[int, int, int, GammaSystem]:
    """Measure ``r_w`` (rectilinear) and ``rA_z`` (basis theta) to answer a test request."""
    _need_phase(sys, COMMITTED)
    outcome, state, _ = measure(sys.state, [R_W, RA_Z], _unveil_bases(sys), rng)
    w, z = int(outcome[:-1], 2), int(outcome[-1])
    return int(sys.theta), z, w, replace(sys, state=state, phase=TESTED)


def unveil_branches(sys: GammaSystem) -> list[tuple[tuple[int, int, int], float, GammaSystem]]:
    _need_phase(sys, COMMITTED)
    out = []
    for o, p, s in measurement_branches(sys.state, [R_W, RA_Z], _unveil_bases(sys)):
        out.append(((int(sys.theta), int(o[-1]), int(o[:-1], 2)), p, replace(sys, state=s, phase=TESTED)))
    return out


def erase_rw(sys: GammaSystem, fam: Family) -> GammaSystem:
    """Reset ``r_w`` to ``0...0`` by XORing in the preimage selected by ``rA_z``.

    This is the point where the commitment functions get inverted, once per
    value of ``z``. The XOR is a permutation in the basis where ``rA_z`` is read
    in theta, so ``rA_z`` is rotated to the computational basis around it.
    """
    _need_phase(sys, COMMITTED)
    theta, n = sys.theta, sys.n
    preimages = [fam.invert(int(theta), z, sys.y) for z in (0, 1)]
    # index layout over (r_w, rA_z): u = (w << 1) | z
    u = np.arange(2 ** (n + 1))
    mapping = ((u >> 1) ^ np.asarray(preimages)[u & 1]) << 1 | (u & 1)
    rotate_in = theta.change_of_basis()
    state = sys.state
    if theta is Basis.DIAGONAL:
        state = apply_unitary(state, rotate_in, [RA_Z])
    state = apply_permutation(state, mapping, [R_W, RA_Z])
    if theta is Basis.DIAGONAL:
        state = apply_unitary(state, rotate_in.conj().T, [RA_Z])
    return replace(sys, state=state, phase=ERASED)


def kent_open_as(
    sys: GammaSystem, fam: Family, b: int, claimed_mask: int, rng: np.random.Generator
) -> tuple[int, int, int, GammaSystem]:
    """Open the photon as if its basis had been ``claimed_mask xor b``.

    After erasure ``rA_z`` and Bob's qubit are perfectly correlated in both
    bases, so measuring ``rA_z`` in the claimed basis predicts Bob's outcome.
    """
    _need_phase(sys, ERASED)
    x = int(claimed_mask) ^ int(b)
    outcome, state, _ = measure(sys.state, [RA_Z], [Basis(x)], rng)
    z = int(outcome)
    return x, z, fam.invert(x, z, sys.y), replace(sys, state=state, phase=OPENED)


class KentAttackAlice(KentAlice):
    """Sends ``rB_z`` of a fresh gamma system for every photon slot.

    Masks are announced for a nominal bit; the bit actually revealed is chosen
    at opening time.
    """

    def __init__(self, rng: np.random.Generator):
        self.rng = rng
        self.gammas: dict[int, GammaSystem] = {}
        self.systems: dict[int, SharedSystem] = {}
        self.masks: dict[int, int] = {}
        self.nominal_bit: int | None = None

    def _current(self, index: int) -> GammaSystem:
        return replace(self.gammas[index], state=self.systems[index].state)

    def _store(self, index: int, sys: GammaSystem) -> None:
        self.gammas[index] = sys
        self.systems[index].state = sys.state

    def commit(self, index):
        theta = Basis(int(self.rng.integers(0, 2)))
        y, sys = kent_commit(prepare_gamma(self.family, theta), self.rng)
        self.gammas[index] = sys
        self.systems[index] = SharedSystem(sys.state, RB_Z)
        return self.systems[index], y

    def unveil(self, index):
        x, z, w, sys = kent_unveil_for_test(self._current(index), self.rng)
        self._store(index, sys)
        return x, z, w

    def announce_masks(self, indices, b):
        self.nominal_bit = int(b)
        self.masks = {i: int(self.gammas[i].theta) ^ self.nominal_bit for i in indices}
        return dict(self.masks)

    def open(self, indices, b=None):
        b = self.nominal_bit if b is None else int(b)
        out = {}
        for i in indices:
            sys = erase_rw(self._current(i), self.family)
            x, z, w, sys = kent_open_as(sys, self.family, b, self.masks[i], self.rng)
            self._store(i, sys)
            out[i] = (x, z, w)
        return out


def epr_pair(names: tuple[str, str] = ("a", "b")) -> StateVector:
    return StateVector.from_amplitudes([(names[0], 1), (names[1], 1)], np.array([1, 0, 0, 1]) / np.sqrt(2))


class EPRAttackAlice(BB84Alice):
    """Keeps one half of an EPR pair per photon and decides the basis at opening."""

    def __init__(self, count: int, rng: np.random.Generator, default_bit: int = 0):
        if count < 1:
            raise ValueError("need at least one photon")
        self.count = count
        self.rng = rng
        self.default_bit = default_bit
        self.systems: list[SharedSystem] = []

    def send(self, count):
        if count != self.count:
            raise ValueError(f"prepared for {self.count} photons, asked for {count}")
        self.systems = [SharedSystem(epr_pair(), "b") for _ in range(count)]
        return list(self.systems)

    def open(self, b=None):
        b = self.default_bit if b is None else int(b)
        zs = []
        for system in self.systems:
            outcome, system.state, _ = measure(system.state, ["a"], [Basis(b)], self.rng)
            zs.append(int(outcome))
        return b, zs


def epr_attack_bb84(count: int, rng: np.random.Generator) -> EPRAttackAlice:
    return EPRAttackAlice(count, rng)


def coherent_message_eval(
    state: StateVector,
    inputs: Sequence[str],
    f: Callable[[int], int],
    out_width: int,
    rng: np.random.Generator,
    out_name: str = "msg",
) -> tuple[str, StateVector]:
    """Compute ``f`` of the input registers reversibly and measure only the result.

    A fresh ``out_name`` register is appended, ``|u>|0> -> |u>|f(u)>`` is
    applied (``u`` is the concatenated value of ``inputs``), and only the new
    register is measured. The inputs stay in superposition over the preimages
    of the observed message.
    """
    in_width = sum(state.layout.width(n) for n in inputs)
    fresh = StateVector.basis_state([(out_name, out_width)], [0])
    state = tensor(state, fresh)
    state = apply_permutation(state, xor_eval_mapping(f, in_width, out_width), list(inputs) + [out_name])
    message, state, _ = measure(state, [out_name], Basis.RECTILINEAR, rng)
    return message, state


# -- generic attack on a purified protocol -------------------------------------


@dataclass(frozen=True, eq=False)
class PurifiedProtocol:
    """Commit phase as a unitary ``U_b`` on ``side_a + side_b`` applied to ``initial``."""

    initial: StateVector
    commit_unitaries: tuple[UnitaryOp, UnitaryOp]
    side_a: tuple[str, ...]
    side_b: tuple[str, ...]

    def __post_init__(self):
        names = list(self.side_a) + list(self.side_b)
        if sorted(names) != sorted(self.initial.layout.names) or not self.side_a or not self.side_b:
            raise ValueError("side_a and side_b must partition the registers")
        object.__setattr__(self, "initial", self.initial.reorder(names))
        for u in self.commit_unitaries:
            if u.dim != self.initial.dim:
                raise ValueError("commit unitaries must act on the whole system")

    def final_state(self, b: int) -> StateVector:
        names = list(self.side_a) + list(self.side_b)
        return apply_unitary(self.initial, self.commit_unitaries[b], names)


@dataclass(frozen=True, eq=False)
class GenericAttack:
    prepared: StateVector
    open_maps: dict[int, UnitaryOp]
    predicted: dict[int, float]

    def open_map(self, b: int) -> UnitaryOp:
        return self.open_maps[b]

    def predicted_overlap(self, b: int) -> float:
        return self.predicted[b]


def generic_attack(p: PurifiedProtocol) -> GenericAttack:
    """Prepare the honest ``b = 0`` state and a side-A map for opening either bit.

    When the reduced states on B coincide the switch is exact. Otherwise the
    switch is the Uhlmann-optimal unitary and its overlap with the honest
    ``b = 1`` state equals the fidelity of the two reduced states.
    """
    phi0, phi1 = p.final_state(0), p.final_state(1)
    bip = (p.side_a, p.side_b)
    dim_a = 2 ** sum(phi0.layout.width(n) for n in p.side_a)
    stay = UnitaryOp.identity(dim_a, p.side_a)
    rho0 = partial_trace(phi0, p.side_b).matrix
    rho1 = partial_trace(phi1, p.side_b).matrix
    if np.max(np.abs(rho0 - rho1)) <= SPECTRAL_TOL:
        return GenericAttack(phi0, {0: stay, 1: cheat_unitary(phi0, phi1, bip)}, {0: 1.0, 1: 1.0})
    switch, _ = uhlmann_unitary(phi0, phi1, bip)
    return GenericAttack(phi0, {0: stay, 1: switch}, {0: 1.0, 1: reduced_fidelity(phi0, phi1, p.side_b)})


def synthesize_purified_protocol(
    qubits_a: int, qubits_b: int, rng: np.random.Generator, equal_reduced: bool
) -> PurifiedProtocol:
    """Random test instance; with ``equal_reduced`` the two commitments differ only on side A."""
    registers = [("A", qubits_a), ("B", qubits_b)]
    initial = random_state(registers, rng)
    dim = 2 ** (qubits_a + qubits_b)
    u0 = random_unitary(dim, rng)
    if equal_reduced:
        v = random_unitary(2**qubits_a, rng)
        u1 = UnitaryOp(np.kron(v.matrix, np.eye(2**qubits_b)) @ u0.matrix)
    else:
        u1 = random_unitary(dim, rng)
    return PurifiedProtocol(initial, (u0, u1), ("A",), ("B",))


__all__ = [
    "COMMITTED",
    "EPRAttackAlice",
    "ERASED",
    "GammaSystem",
    "GenericAttack",
    "KentAttackAlice",
    "OPENED",
    "PREPARED",
    "PurifiedProtocol",
    "RA_Z",
    "RB_Z",
    "R_F",
    "R_W",
    "TESTED",
    "coherent_message_eval",
    "commit_branches",
    "epr_attack_bb84",
    "epr_pair",
    "erase_rw",
    "generic_attack",
    "kent_commit",
    "kent_open_as",
    "kent_unveil_for_test",
    "prepare_gamma",
    "synthesize_purified_protocol",
    "unveil_branches",
    "xor_eval_mapping",
]
