"""Honest commitment protocols: Kent-style (with classical sub-commitments) and BB84-style.

A run is a sequence of messages appended to a :class:`Transcript`, which
enforces the phase order ``commit -> test -> mask -> open -> closed`` and
attributes any out-of-order or malformed message to its sender. Each photon
slot is a :class:`SharedSystem`: one global state vector of which Bob owns a
single qubit register; whoever owns the other registers is up to the Alice
strategy.
"""

from __future__ import annotations

import abc
import enum
import json
from dataclasses import dataclass, field
from typing import Any, Iterable, Sequence

import numpy as np

from .oneway import MAX_WIDTH, AuditedFamily, InversionPolicyError, PermutationFamily, gen_family
from .qstate import Basis, StateVector, bb84_state, measure

SCHEMA_VERSION = 1
ALICE, BOB = "alice", "bob"


class Phase(enum.IntEnum):
    COMMIT = 0
    TEST = 1
    MASK = 2
    OPEN = 3
    CLOSED = 4

    @property
    def label(self) -> str:
        return self.name.lower()


class ProtocolViolation(RuntimeError):
    def __init__(self, violator: str, reason: str):
        super().__init__(f"{violator}: {reason}")
        self.violator = violator
        self.reason = reason


# kind -> (phase it belongs to, party allowed to send it)
KENT_KINDS = {
    "commit": (Phase.COMMIT, ALICE),
    "sample": (Phase.TEST, BOB),
    "unveil": (Phase.TEST, ALICE),
    "test_verdict": (Phase.TEST, BOB),
    "mask": (Phase.MASK, ALICE),
    "open_request": (Phase.OPEN, BOB),
    "open_unveil": (Phase.OPEN, ALICE),
    "open_verdict": (Phase.CLOSED, BOB),
}
BB84_KINDS = {
    "send": (Phase.COMMIT, ALICE),
    "open_request": (Phase.OPEN, BOB),
    "bb84_open": (Phase.OPEN, ALICE),
    "open_verdict": (Phase.CLOSED, BOB),
}


@dataclass(frozen=True)
class KentParams:
    N_B: int
    N: int
    n: int
    seed: int = 0

    def __post_init__(self):
        if not 0 < self.N < self.N_B:
            raise ValueError(f"need 0 < N < N_B, got N={self.N}, N_B={self.N_B}")
        if not 1 <= self.n <= MAX_WIDTH:
            raise ValueError(f"n must lie in [1, {MAX_WIDTH}], got {self.n}")

    @property
    def sample_size(self) -> int:
        return self.N_B - self.N


@dataclass(frozen=True)
class Event:
    kind: str
    sender: str
    data: dict[str, Any] = field(default_factory=dict)

    def to_json(self, seq: int) -> str:
        return json.dumps(
            {"schema": SCHEMA_VERSION, "seq": seq, "kind": self.kind, "sender": self.sender, **self.data},
            sort_keys=True,
        )


class Transcript:
    """Ordered log of classical messages for one protocol run."""

    def __init__(self, protocol: str, params: KentParams | int, family: PermutationFamily | None = None):
        if protocol not in ("kent", "bb84"):
            raise ValueError(f"unknown protocol {protocol!r}")
        self.protocol = protocol
        self.params = params
        self.kinds = KENT_KINDS if protocol == "kent" else BB84_KINDS
        self.events: list[Event] = []
        self.phase = Phase.COMMIT
        self.family = AuditedFamily(family, lambda: self.phase.label) if family is not None else None

        self.commitments: list[int] = []
        self.sample: list[int] | None = None
        self.unveils: dict[int, tuple[int, int, int]] = {}
        self.test_verdicts: dict[int, bool] = {}
        self.masks: dict[int, int] = {}
        self.open_unveils: dict[int, tuple[int, int, int]] = {}
        self.photons_sent = 0
        self.bb84_opening: tuple[int, list[int]] | None = None
        self.verdict: str | None = None
        self.decoded_bit: int | None = None
        self.failure: dict[str, Any] | None = None

    # -- derived views -----------------------------------------------------

    @property
    def retained(self) -> list[int]:
        """The retained positions ``Y``: complement of Bob's sample."""
        if self.sample is None:
            return []
        chosen = set(self.sample)
        return [i for i in range(self.params.N_B) if i not in chosen]

    @property
    def test_passed(self) -> bool:
        return (
            self.sample is not None
            and len(self.test_verdicts) == len(self.sample)
            and all(self.test_verdicts.values())
        )

    @property
    def invert_calls_before_open(self) -> int:
        if self.family is None:
            return 0
        return sum(Phase[rec.phase.upper()] < Phase.OPEN for rec in self.family.log)

    def classical_view(self) -> tuple:
        """Bob's classical data before opening, as a hashable value."""
        return (
            tuple(self.commitments),
            tuple(self.sample or ()),
            tuple(sorted(self.unveils.items())),
            tuple(sorted(self.masks.items())),
        )

    # -- appending ---------------------------------------------------------

    def append(self, event: Event) -> None:
        if event.kind not in self.kinds:
            raise ProtocolViolation(event.sender, f"unknown message kind {event.kind!r}")
        phase, sender = self.kinds[event.kind]
        if event.sender != sender:
            raise ProtocolViolation(event.sender, f"{event.kind!r} must be sent by {sender}")
        if self.phase == Phase.CLOSED:
            raise ProtocolViolation(event.sender, "run is already closed")
        if phase < self.phase:
            raise ProtocolViolation(
                event.sender, f"{event.kind!r} belongs to phase {phase.label} but run is in {self.phase.label}"
            )
        getattr(self, f"_on_{event.kind}")(event)
        self.phase = phase
        self.events.append(event)

    def _need(self, ok: bool, event: Event, reason: str):
        if not ok:
            raise ProtocolViolation(event.sender, reason)

    def _bit(self, event: Event, key: str) -> int:
        v = event.data.get(key)
        self._need(v in (0, 1), event, f"{key} must be a bit, got {v!r}")
        return int(v)

    def _word(self, event: Event, key: str) -> int:
        v = event.data.get(key)
        ok = isinstance(v, (int, np.integer)) and 0 <= v < 2**self.params.n
        self._need(ok, event, f"{key} must be a {self.params.n}-bit string, got {v!r}")
        return int(v)

    def _index(self, event: Event, allowed: Iterable[int], seen) -> int:
        i = event.data.get("index")
        self._need(i in set(allowed), event, f"index {i!r} not allowed for {event.kind!r}")
        self._need(i not in seen, event, f"index {i} repeated for {event.kind!r}")
        return int(i)

    def _on_commit(self, event):
        i = event.data.get("index")
        self._need(i == len(self.commitments), event, f"commit index {i!r} out of sequence")
        self._need(len(self.commitments) < self.params.N_B, event, "too many commitments")
        self.commitments.append(self._word(event, "y"))

    def _on_sample(self, event):
        self._need(self.sample is None, event, "sample already chosen")
        self._need(len(self.commitments) == self.params.N_B, event, "sample before all commitments")
        sample = list(event.data.get("indices", []))
        ok = len(sample) == self.params.sample_size and len(set(sample)) == len(sample)
        ok = ok and all(0 <= i < self.params.N_B for i in sample)
        self._need(ok, event, f"malformed sample {sample!r}")
        self.sample = sorted(int(i) for i in sample)

    def _on_unveil(self, event):
        self._need(self.sample is not None, event, "unveil before sample")
        i = self._index(event, self.sample, self.unveils)
        self.unveils[i] = (self._bit(event, "x"), self._bit(event, "z"), self._word(event, "w"))

    def _on_test_verdict(self, event):
        i = self._index(event, self.unveils, self.test_verdicts)
        self.test_verdicts[i] = bool(event.data.get("ok"))

    def _on_mask(self, event):
        self._need(self.test_passed, event, "mask announced before a passed test")
        i = self._index(event, self.retained, self.masks)
        self.masks[i] = self._bit(event, "bit")

    def _on_open_request(self, event):
        if self.protocol == "kent":
            self._need(len(self.masks) == self.params.N, event, "open requested before all masks")
        else:
            self._need(self.photons_sent > 0, event, "open requested before photons were sent")

    def _on_open_unveil(self, event):
        self._need(self.phase == Phase.OPEN, event, "unveil before open request")
        i = self._index(event, self.retained, self.open_unveils)
        self.open_unveils[i] = (self._bit(event, "x"), self._bit(event, "z"), self._word(event, "w"))

    def _on_open_verdict(self, event):
        self._need(self.phase == Phase.OPEN, event, "verdict before open request")
        if self.protocol == "kent":
            self._need(len(self.open_unveils) == self.params.N, event, "verdict before all unveilings")
        else:
            self._need(self.bb84_opening is not None, event, "verdict before opening")
        self.verdict = "accept" if event.data.get("accepted") else "reject"
        self.decoded_bit = event.data.get("decoded_bit")
        if not event.data.get("accepted"):
            self.failure = {"reason": event.data.get("reason")}

    def _on_send(self, event):
        self._need(self.photons_sent == 0, event, "photons already sent")
        count = event.data.get("count")
        self._need(count == self.params, event, f"expected {self.params} photons, got {count!r}")
        self.photons_sent = int(count)

    def _on_bb84_open(self, event):
        self._need(self.phase == Phase.OPEN, event, "opening before open request")
        self._need(self.bb84_opening is None, event, "opened twice")
        b = self._bit(event, "bit")
        zs = list(event.data.get("z", []))
        self._need(len(zs) == self.photons_sent and all(z in (0, 1) for z in zs), event, "malformed z list")
        self.bb84_opening = (b, [int(z) for z in zs])

    # -- serialization -----------------------------------------------------

    def header(self) -> dict:
        if self.protocol == "kent":
            params = {"N_B": self.params.N_B, "N": self.params.N, "n": self.params.n, "seed": self.params.seed}
        else:
            params = {"N": self.params}
        head = {"schema": SCHEMA_VERSION, "kind": "header", "protocol": self.protocol, "params": params}
        if self.family is not None:
            head["family"] = {"n": self.family.family.n, "seed": self.family.family.seed}
        return head

    def to_jsonl(self) -> str:
        lines = [json.dumps(self.header(), sort_keys=True)]
        lines += [e.to_json(k) for k, e in enumerate(self.events)]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_jsonl(cls, text: str) -> "Transcript":
        """Rebuild a transcript, re-validating every event."""
        lines = [json.loads(line) for line in text.splitlines() if line.strip()]
        if not lines or lines[0].get("kind") != "header":
            raise ValueError("missing transcript header")
        head = lines[0]
        if head.get("schema") != SCHEMA_VERSION:
            raise ValueError(f"unsupported transcript schema {head.get('schema')!r}")
        if head["protocol"] == "kent":
            params = KentParams(**head["params"])
        else:
            params = int(head["params"]["N"])
        family = gen_family(head["family"]["n"], head["family"]["seed"]) if "family" in head else None
        t = cls(head["protocol"], params, family)
        for k, rec in enumerate(lines[1:]):
            if rec.get("seq") != k:
                raise ValueError(f"event sequence number {rec.get('seq')!r} at position {k}")
            data = {key: v for key, v in rec.items() if key not in ("schema", "seq", "kind", "sender")}
            t.append(Event(rec["kind"], rec["sender"], data))
        return t


class SharedSystem:
    """State of one photon slot. Bob may only touch ``bob_register``."""

    def __init__(self, state: StateVector, bob_register: str):
        if state.layout.width(bob_register) != 1:
            raise ValueError("Bob's register must be a single qubit")
        self.state = state
        self.bob_register = bob_register

    @property
    def alice_registers(self) -> list[str]:
        return [n for n in self.state.layout.names if n != self.bob_register]

    def measure_bob(self, basis: Basis, rng: np.random.Generator) -> int:
        outcome, self.state, _ = measure(self.state, [self.bob_register], [basis], rng)
        return int(outcome)


def photon_system(x: int, z: int) -> SharedSystem:
    return SharedSystem(bb84_state(x, z, name="photon"), "photon")


# -- strategies ----------------------------------------------------------------


class KentAlice(abc.ABC):
    """Alice's side of a Kent-style run."""

    transcript: Transcript

    def bind(self, transcript: Transcript) -> None:
        self.transcript = transcript

    @property
    def family(self) -> AuditedFamily:
        return self.transcript.family

    @abc.abstractmethod
    def commit(self, index: int) -> tuple[SharedSystem, int]:
        """Photon slot sent to Bob and the classical commitment ``y``."""

    @abc.abstractmethod
    def unveil(self, index: int) -> tuple[int, int, int]:
        """``(x, z, w)`` for a sampled position."""

    @abc.abstractmethod
    def announce_masks(self, indices: Sequence[int], b: int) -> dict[int, int]:
        ...

    @abc.abstractmethod
    def open(self, indices: Sequence[int], b: int | None = None) -> dict[int, tuple[int, int, int]]:
        """Unveilings for the retained positions; ``b`` is the bit Alice now wants to reveal."""


class HonestKentAlice(KentAlice):
    """Sends BB84 photons and commits to their (basis, value) pairs.

    Asked at opening time to reveal the bit she did not commit, she claims the
    other basis for every retained photon, keeps her value ``z`` and inverts
    the commitment functions to make the classical check pass.
    """

    def __init__(self, rng: np.random.Generator):
        self.rng = rng
        self.secrets: dict[int, tuple[int, int, int]] = {}
        self.committed_bit: int | None = None

    def commit(self, index):
        x, z = (int(v) for v in self.rng.integers(0, 2, size=2))
        w = int(self.rng.integers(0, 2**self.family.n))
        self.secrets[index] = (x, z, w)
        return photon_system(x, z), self.family.evaluate(x, z, w)

    def unveil(self, index):
        return self.secrets[index]

    def announce_masks(self, indices, b):
        self.committed_bit = int(b)
        return {i: self.secrets[i][0] ^ self.committed_bit for i in indices}

    def open(self, indices, b=None):
        if b is None or b == self.committed_bit:
            return {i: self.secrets[i] for i in indices}
        out = {}
        for i in indices:
            x, z, _ = self.secrets[i]
            y = self.transcript.commitments[i]
            out[i] = (x ^ 1, z, self.family.invert(x ^ 1, z, y))
        return out


class KentBob:
    """Verifier. ``mode='deferred'`` keeps photons unmeasured until a check needs them;
    ``mode='immediate'`` measures each photon on arrival in a random basis and can
    only check positions where that basis matches Alice's claim."""

    def __init__(self, rng: np.random.Generator, mode: str = "deferred"):
        if mode not in ("deferred", "immediate"):
            raise ValueError(f"unknown Bob mode {mode!r}")
        self.rng = rng
        self.mode = mode
        self.systems: list[SharedSystem] = []
        self.early: dict[int, tuple[int, int]] = {}

    def receive(self, index: int, system: SharedSystem) -> None:
        self.systems.append(system)
        if self.mode == "immediate":
            basis = int(self.rng.integers(0, 2))
            self.early[index] = (basis, system.measure_bob(Basis(basis), self.rng))

    def choose_sample(self, params: KentParams) -> list[int]:
        return sorted(int(i) for i in self.rng.choice(params.N_B, size=params.sample_size, replace=False))

    def check(self, transcript: Transcript, index: int, x: int, z: int, w: int) -> tuple[bool, str | None]:
        if transcript.family.evaluate(x, z, w) != transcript.commitments[index]:
            return False, f"commitment mismatch at photon {index}"
        if self.mode == "deferred":
            seen = self.systems[index].measure_bob(Basis(x), self.rng)
        else:
            basis, seen = self.early[index]
            if basis != x:
                return True, None
        if seen != z:
            return False, f"basis check failed at photon {index}"
        return True, None


def _ask_alice(fn, *args):
    try:
        return fn(*args)
    except InversionPolicyError as exc:
        raise ProtocolViolation(ALICE, str(exc)) from exc


def kent_commit_phase(
    alice: KentAlice, bob: KentBob, params: KentParams, family: PermutationFamily | None = None
) -> tuple[Transcript, list[SharedSystem]]:
    family = gen_family(params.n, params.seed) if family is None else family
    transcript = Transcript("kent", params, family)
    alice.bind(transcript)
    for i in range(params.N_B):
        system, y = _ask_alice(alice.commit, i)
        transcript.append(Event("commit", ALICE, {"index": i, "y": y}))
        bob.receive(i, system)
    return transcript, bob.systems


def kent_test_phase(transcript: Transcript, alice: KentAlice, bob: KentBob) -> Transcript:
    sample = bob.choose_sample(transcript.params)
    transcript.append(Event("sample", BOB, {"indices": sample}))
    for i in sample:
        x, z, w = _ask_alice(alice.unveil, i)
        transcript.append(Event("unveil", ALICE, {"index": i, "x": x, "z": z, "w": w}))
        ok, reason = bob.check(transcript, i, x, z, w)
        transcript.append(Event("test_verdict", BOB, {"index": i, "ok": ok}))
        if not ok:
            transcript.verdict = "alice_caught"
            transcript.failure = {"index": i, "reason": reason}
            break
    return transcript


def kent_mask_announce(transcript: Transcript, alice: KentAlice, b: int) -> Transcript:
    if not transcript.test_passed:
        raise ProtocolViolation(ALICE, "mask announcement requires a passed test phase")
    masks = _ask_alice(alice.announce_masks, transcript.retained, b)
    if sorted(masks) != transcript.retained:
        raise ProtocolViolation(ALICE, "masks must cover exactly the retained positions")
    for i in transcript.retained:
        transcript.append(Event("mask", ALICE, {"index": i, "bit": masks[i]}))
    return transcript


def kent_open_phase(
    transcript: Transcript, alice: KentAlice, bob: KentBob, open_bit: int | None = None
) -> tuple[int | None, bool]:
    """Alice unveils every retained position; Bob checks them and decodes the bit.

    Returns ``(decoded_bit, accepted)``; ``decoded_bit`` is ``None`` when the
    masks do not determine a single bit.
    """
    transcript.append(Event("open_request", BOB))
    unveils = _ask_alice(alice.open, transcript.retained, open_bit)
    for i in transcript.retained:
        if i not in unveils:
            raise ProtocolViolation(ALICE, f"no unveiling for retained photon {i}")
        x, z, w = unveils[i]
        transcript.append(Event("open_unveil", ALICE, {"index": i, "x": x, "z": z, "w": w}))

    decoded = {transcript.masks[i] ^ transcript.open_unveils[i][0] for i in transcript.retained}
    bit = decoded.pop() if len(decoded) == 1 else None
    reason = None if bit is not None else "masks are not consistent with a single bit"
    if bit is not None:
        for i in transcript.retained:
            ok, reason = bob.check(transcript, i, *transcript.open_unveils[i])
            if not ok:
                break
    accepted = reason is None
    transcript.append(
        Event("open_verdict", BOB, {"accepted": accepted, "decoded_bit": bit, "reason": reason})
    )
    return bit, accepted


# -- BB84-style commitment -----------------------------------------------------


class BB84Alice(abc.ABC):
    @abc.abstractmethod
    def send(self, count: int) -> list[SharedSystem]:
        ...

    @abc.abstractmethod
    def open(self, b: int | None = None) -> tuple[int, list[int]]:
        """The bit claimed and one value ``z`` per photon."""


class HonestBB84Alice(BB84Alice):
    """Commits ``bit`` by sending every photon in the basis it selects.

    Asked to open the other bit she can only report her original values.
    """

    def __init__(self, rng: np.random.Generator, bit: int):
        self.rng = rng
        self.bit = int(bit)
        self.values: list[int] = []

    def send(self, count):
        self.values = [int(v) for v in self.rng.integers(0, 2, size=count)]
        return [photon_system(self.bit, z) for z in self.values]

    def open(self, b=None):
        return (self.bit if b is None else int(b)), list(self.values)


class BB84Bob:
    def __init__(self, rng: np.random.Generator):
        self.rng = rng
        self.systems: list[SharedSystem] = []

    def receive(self, systems: Sequence[SharedSystem]) -> None:
        self.systems = list(systems)

    def verify(self, b: int, zs: Sequence[int]) -> tuple[bool, str | None]:
        for i, (system, z) in enumerate(zip(self.systems, zs)):
            if system.measure_bob(Basis(b), self.rng) != z:
                return False, f"basis check failed at photon {i}"
        return True, None


def bb84_commit_protocol(
    alice: BB84Alice, bob: BB84Bob, count: int, open_bit: int | None = None
) -> Transcript:
    """Full commit-and-open run of the single-basis protocol."""
    if count < 1:
        raise ValueError("need at least one photon")
    transcript = Transcript("bb84", count)
    systems = alice.send(count)
    transcript.append(Event("send", ALICE, {"count": len(systems)}))
    bob.receive(systems)
    transcript.append(Event("open_request", BOB))
    b, zs = alice.open(open_bit)
    transcript.append(Event("bb84_open", ALICE, {"bit": b, "z": zs}))
    ok, reason = bob.verify(b, zs)
    transcript.append(Event("open_verdict", BOB, {"accepted": ok, "decoded_bit": b, "reason": reason}))
    return transcript
