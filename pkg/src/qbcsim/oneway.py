"""Toy classical commitments: four seeded permutations of n-bit strings.

``f[x, z]`` stands in for a one-way permutation. Its inverse exists in the
simulator, so hardness is a policy: :class:`AuditedFamily` records every
inversion together with the protocol phase in which it happened and can refuse
inversions before the open phase.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

MAX_WIDTH = 12
SERIAL_VERSION = 1


class InversionPolicyError(RuntimeError):
    """An inversion was attempted while the computational assumption still holds."""


def _check_pair(x: int, z: int):
    if x not in (0, 1) or z not in (0, 1):
        raise ValueError(f"(x, z) must be bits, got ({x}, {z})")


@dataclass(frozen=True, eq=False)
class PermutationFamily:
    n: int
    seed: int
    tables: np.ndarray = field(repr=False)  # shape (4, 2**n); row 2*x + z
    inverse_tables: np.ndarray = field(repr=False)

    @property
    def size(self) -> int:
        return 2**self.n

    def _check_word(self, v: int, what: str) -> int:
        v = int(v)
        if not 0 <= v < self.size:
            raise ValueError(f"{what}={v} is not a {self.n}-bit string")
        return v

    def evaluate(self, x: int, z: int, w: int) -> int:
        _check_pair(x, z)
        return int(self.tables[2 * x + z, self._check_word(w, "w")])

    def invert(self, x: int, z: int, y: int) -> int:
        _check_pair(x, z)
        return int(self.inverse_tables[2 * x + z, self._check_word(y, "y")])

    def table(self, x: int, z: int) -> np.ndarray:
        _check_pair(x, z)
        return self.tables[2 * x + z]

    def to_json(self) -> str:
        return json.dumps({"version": SERIAL_VERSION, "n": self.n, "seed": self.seed})

    @classmethod
    def from_json(cls, text: str) -> "PermutationFamily":
        data = json.loads(text)
        if data.get("version") != SERIAL_VERSION:
            raise ValueError(f"unsupported family serialization version {data.get('version')!r}")
        return gen_family(int(data["n"]), int(data["seed"]))


def gen_family(n: int, seed: int) -> PermutationFamily:
    """Four independent uniformly random bijections of ``{0,1}^n``, determined by ``seed``."""
    if not 1 <= n <= MAX_WIDTH:
        raise ValueError(f"n must lie in [1, {MAX_WIDTH}], got {n}")
    seed = int(seed)
    if not 0 <= seed < 2**64:
        raise ValueError("seed must be a 64-bit unsigned integer")
    rng = np.random.default_rng(seed)
    tables = np.stack([rng.permutation(2**n) for _ in range(4)])
    inverse = np.empty_like(tables)
    for row in range(4):
        inverse[row, tables[row]] = np.arange(2**n)
    tables.flags.writeable = False
    inverse.flags.writeable = False
    return PermutationFamily(n, seed, tables, inverse)


def evaluate(fam: PermutationFamily, x: int, z: int, w: int) -> int:
    return fam.evaluate(x, z, w)


def invert(fam: PermutationFamily, x: int, z: int, y: int) -> int:
    return fam.invert(x, z, y)


@dataclass
class InversionRecord:
    phase: str
    x: int
    z: int
    y: int


class AuditedFamily:
    """A family whose inversions are logged against the current protocol phase.

    ``phase_of`` returns the caller's current phase name; ``allowed`` lists the
    phases in which inversion is legitimate. With ``strict`` set an inversion
    outside those phases raises :class:`InversionPolicyError`.
    """

    def __init__(
        self,
        family: PermutationFamily,
        phase_of: Callable[[], str],
        allowed: tuple[str, ...] = ("open",),
        strict: bool = True,
    ):
        self.family = family
        self.phase_of = phase_of
        self.allowed = allowed
        self.strict = strict
        self.log: list[InversionRecord] = []

    @property
    def n(self) -> int:
        return self.family.n

    def evaluate(self, x: int, z: int, w: int) -> int:
        return self.family.evaluate(x, z, w)

    def table(self, x: int, z: int) -> np.ndarray:
        return self.family.table(x, z)

    def invert(self, x: int, z: int, y: int) -> int:
        phase = self.phase_of()
        self.log.append(InversionRecord(phase, x, z, y))
        if self.strict and phase not in self.allowed:
            raise InversionPolicyError(f"inversion attempted during phase {phase!r}")
        return self.family.invert(x, z, y)

    def calls_outside_allowed(self) -> int:
        return sum(rec.phase not in self.allowed for rec in self.log)
