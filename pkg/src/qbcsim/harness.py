"""Seeded Monte-Carlo campaigns, exact concealment probes and reports."""

from __future__ import annotations

import csv
import itertools
import json
import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Iterator

import numpy as np

from . import attacks
from .oneway import gen_family
from .protocols import (
    BB84Bob,
    HonestBB84Alice,
    HonestKentAlice,
    KentBob,
    KentParams,
    ProtocolViolation,
    bb84_commit_protocol,
    kent_commit_phase,
    kent_mask_announce,
    kent_open_phase,
    kent_test_phase,
)
from .qstate import Basis, bb84_state, partial_trace, trace_norm

logger = logging.getLogger(__name__)

REPORT_SCHEMA = 1
CSV_COLUMNS = ["seed", "test_verdict", "opened_bit", "open_verdict", "decoded_bit"]
PROTOCOLS = ("kent", "bb84")
ALICES = ("honest", "attack")
BOBS = ("deferred", "immediate")
POLICIES = ("fixed0", "fixed1", "coin_after_commit")
FORMATS = ("json", "csv")

MAX_PROBE_PHOTONS = 4
MAX_PROBE_QUBITS = 12
MAX_PROBE_BRANCHES = 200_000


class ConfigError(ValueError):
    def __init__(self, field_name: str, message: str):
        super().__init__(f"{field_name}: {message}")
        self.field = field_name


class ProbeTooLarge(ValueError):
    pass


@dataclass(frozen=True)
class ExperimentConfig:
    protocol: str = "kent"
    alice: str = "honest"
    bob: str = "deferred"
    params: KentParams | int = field(default_factory=lambda: KentParams(N_B=20, N=10, n=3))
    trials: int = 1
    base_seed: int = 0
    open_bit_policy: str = "fixed0"
    claim_complement: bool = False  # honest Alice tries to open the bit she did not commit
    output_path: str | None = None
    output_format: str = "json"

    def __post_init__(self):
        for name, allowed in (
            ("protocol", PROTOCOLS),
            ("alice", ALICES),
            ("bob", BOBS),
            ("open_bit_policy", POLICIES),
            ("output_format", FORMATS),
        ):
            if getattr(self, name) not in allowed:
                raise ConfigError(name, f"must be one of {list(allowed)}, got {getattr(self, name)!r}")
        if not isinstance(self.trials, int) or self.trials < 1:
            raise ConfigError("trials", f"must be a positive integer, got {self.trials!r}")
        if not isinstance(self.base_seed, int) or not 0 <= self.base_seed < 2**64:
            raise ConfigError("base_seed", "must be a 64-bit unsigned integer")
        if self.protocol == "kent" and not isinstance(self.params, KentParams):
            raise ConfigError("params", "kent protocol needs N_B, N and n")
        if self.protocol == "bb84" and (not isinstance(self.params, int) or self.params < 1):
            raise ConfigError("params", "bb84 protocol needs a positive photon count N")
        if self.protocol == "bb84" and self.bob != "deferred":
            raise ConfigError("bob", "the bb84 protocol only has a deferred Bob")
        if self.claim_complement and self.alice != "honest":
            raise ConfigError("claim_complement", "only applies to an honest Alice")

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "ExperimentConfig":
        data = dict(data)
        known = {f for f in cls.__dataclass_fields__} | {"output"}
        for key in data:
            if key not in known:
                raise ConfigError(key, "unknown field")
        protocol = data.get("protocol", "kent")
        raw = data.get("params")
        if protocol == "kent":
            raw = raw or {"N_B": 20, "N": 10, "n": 3}
            if not isinstance(raw, dict):
                raise ConfigError("params", "must be an object with N_B, N, n")
            try:
                data["params"] = KentParams(**raw)
            except (TypeError, ValueError) as exc:
                raise ConfigError("params", str(exc)) from None
        elif protocol == "bb84":
            count = raw.get("N") if isinstance(raw, dict) else raw
            data["params"] = count
        output = data.pop("output", None)
        if output is not None:
            if not isinstance(output, dict):
                raise ConfigError("output", "must be an object with path and format")
            data["output_path"] = output.get("path")
            data["output_format"] = output.get("format", "json")
        return cls(**data)

    @classmethod
    def load(cls, path: str | Path) -> "ExperimentConfig":
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigError("config", f"cannot read {path}: {exc}") from None
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError("config", f"invalid JSON: {exc}") from None
        if not isinstance(data, dict):
            raise ConfigError("config", "top level must be an object")
        return cls.from_dict(data)

    def to_dict(self) -> dict[str, Any]:
        d = asdict(self)
        d["params"] = asdict(self.params) if isinstance(self.params, KentParams) else {"N": self.params}
        output_path = d.pop("output_path")
        d["output"] = {"path": output_path, "format": d.pop("output_format")}
        return d

    def with_overrides(self, **changes) -> "ExperimentConfig":
        d = {k: getattr(self, k) for k in self.__dataclass_fields__}
        d.update({k: v for k, v in changes.items() if v is not None})
        return ExperimentConfig(**d)


def trial_seed(cfg: ExperimentConfig, index: int) -> int:
    return (cfg.base_seed + index) % 2**64


def trial_streams(seed: int) -> tuple[np.random.Generator, np.random.Generator, np.random.Generator]:
    """Independent generators for Alice, Bob and the post-commit coin of one trial."""
    children = np.random.SeedSequence(seed).spawn(3)
    return tuple(np.random.default_rng(c) for c in children)


def _policy_bit(cfg: ExperimentConfig, coin_rng: np.random.Generator) -> int:
    if cfg.open_bit_policy == "fixed0":
        return 0
    if cfg.open_bit_policy == "fixed1":
        return 1
    return int(coin_rng.integers(0, 2))


def run_trial(cfg: ExperimentConfig, index: int) -> dict[str, Any]:
    seed = trial_seed(cfg, index)
    alice_rng, bob_rng, coin_rng = trial_streams(seed)
    row: dict[str, Any] = {
        "trial": index,
        "seed": seed,
        "test_verdict": "n/a",
        "opened_bit": None,
        "open_verdict": "skipped",
        "decoded_bit": None,
        "invert_calls_before_open": 0,
    }
    if cfg.protocol == "bb84":
        return _run_bb84_trial(cfg, row, alice_rng, bob_rng, coin_rng)

    p = cfg.params
    params = KentParams(p.N_B, p.N, p.n, seed)
    if cfg.alice == "honest":
        alice = HonestKentAlice(alice_rng)
    else:
        alice = attacks.KentAttackAlice(alice_rng)
    bob = KentBob(bob_rng, cfg.bob)
    transcript = None
    try:
        transcript, _ = kent_commit_phase(alice, bob, params)
        kent_test_phase(transcript, alice, bob)
        if transcript.verdict == "alice_caught":
            row["test_verdict"] = "caught"
            return row
        row["test_verdict"] = "pass"
        if cfg.alice == "honest":
            committed = _policy_bit(cfg, coin_rng)
            open_bit = committed ^ int(cfg.claim_complement)
            kent_mask_announce(transcript, alice, committed)
        else:
            kent_mask_announce(transcript, alice, 0)
            open_bit = _policy_bit(cfg, coin_rng)
        row["opened_bit"] = open_bit
        decoded, accepted = kent_open_phase(transcript, alice, bob, open_bit)
        row["open_verdict"] = "accept" if accepted else "reject"
        row["decoded_bit"] = decoded
    except ProtocolViolation as exc:
        logger.info("trial %d aborted: %s", index, exc)
        row["open_verdict"] = f"violation:{exc.violator}"
    finally:
        if transcript is not None:
            row["invert_calls_before_open"] = transcript.invert_calls_before_open
    return row


def _run_bb84_trial(cfg, row, alice_rng, bob_rng, coin_rng):
    count = cfg.params
    if cfg.alice == "honest":
        committed = _policy_bit(cfg, coin_rng)
        alice = HonestBB84Alice(alice_rng, committed)
        open_bit = committed ^ int(cfg.claim_complement)
    else:
        alice = attacks.epr_attack_bb84(count, alice_rng)
        open_bit = _policy_bit(cfg, coin_rng)
    transcript = bb84_commit_protocol(alice, BB84Bob(bob_rng), count, open_bit)
    row["opened_bit"] = open_bit
    row["open_verdict"] = transcript.verdict
    row["decoded_bit"] = transcript.decoded_bit
    return row


def _rate(values: list[bool]) -> float | None:
    return sum(values) / len(values) if values else None


def aggregate_rows(rows: list[dict[str, Any]]) -> dict[str, Any]:
    """Summary statistics; every value is a function of the rows alone."""
    tested = [r["test_verdict"] == "pass" for r in rows if r["test_verdict"] != "n/a"]
    opened = [r for r in rows if r["open_verdict"] in ("accept", "reject")]
    agg = {
        "trials": len(rows),
        "test_pass_rate": _rate(tested),
        "open_acceptance_rate": _rate([r["open_verdict"] == "accept" for r in opened]),
        "decoded_matches_opened_rate": _rate([r["decoded_bit"] == r["opened_bit"] for r in opened]),
    }
    for bit in (0, 1):
        agg[f"acceptance_rate_bit{bit}"] = _rate(
            [r["open_verdict"] == "accept" for r in opened if r["opened_bit"] == bit]
        )
    if all("invert_calls_before_open" in r for r in rows):
        agg["invert_calls_before_open"] = sum(r["invert_calls_before_open"] for r in rows)
    return agg


@dataclass
class Report:
    config: dict[str, Any]
    rows: list[dict[str, Any]]
    aggregate: dict[str, Any]

    def check_consistency(self) -> None:
        recomputed = aggregate_rows(self.rows)
        for key, value in recomputed.items():
            stored = self.aggregate.get(key)
            if value is None or stored is None:
                if value != stored:
                    raise ValueError(f"aggregate {key!r} = {stored!r}, rows give {value!r}")
            elif not math.isclose(stored, value, rel_tol=1e-12, abs_tol=1e-12):
                raise ValueError(f"aggregate {key!r} = {stored!r}, rows give {value!r}")

    @classmethod
    def load(cls, path: str | Path) -> "Report":
        path = Path(path)
        if path.suffix == ".csv":
            with path.open(newline="") as fh:
                rows = [_parse_csv_row(r) for r in csv.DictReader(fh)]
            return cls({}, rows, aggregate_rows(rows))
        data = json.loads(path.read_text())
        if data.get("schema") != REPORT_SCHEMA:
            raise ValueError(f"unsupported report schema {data.get('schema')!r}")
        report = cls(data["config"], data["rows"], data["aggregate"])
        report.check_consistency()
        return report


def _parse_csv_row(r: dict[str, str]) -> dict[str, Any]:
    opt = lambda v: None if v == "" else int(v)
    return {
        "seed": int(r["seed"]),
        "test_verdict": r["test_verdict"],
        "opened_bit": opt(r["opened_bit"]),
        "open_verdict": r["open_verdict"],
        "decoded_bit": opt(r["decoded_bit"]),
    }


class _RowSink:
    """Streams rows to disk as they are produced."""

    def __init__(self, path: str | Path, fmt: str, config: dict[str, Any]):
        self.fmt = fmt
        self.fh = open(path, "w", newline="")
        self.count = 0
        if fmt == "csv":
            self.writer = csv.DictWriter(self.fh, fieldnames=CSV_COLUMNS, extrasaction="ignore")
            self.writer.writeheader()
        else:
            self.fh.write(
                '{"schema": %d, "config": %s, "rows": [' % (REPORT_SCHEMA, json.dumps(config, sort_keys=True))
            )

    def write(self, row: dict[str, Any]) -> None:
        if self.fmt == "csv":
            self.writer.writerow({k: "" if row.get(k) is None else row[k] for k in CSV_COLUMNS})
        else:
            self.fh.write(("," if self.count else "") + "\n" + json.dumps(row, sort_keys=True))
        self.fh.flush()
        self.count += 1

    def close(self, aggregate: dict[str, Any] | None) -> None:
        # an aborted run leaves the JSON document unterminated on purpose
        if self.fmt == "json" and aggregate is not None:
            self.fh.write('\n], "aggregate": %s}\n' % json.dumps(aggregate, sort_keys=True))
        self.fh.close()


def iter_trials(cfg: ExperimentConfig, workers: int = 1) -> Iterator[dict[str, Any]]:
    """Rows in trial-index order, computed in ``workers`` processes when > 1."""
    if workers <= 1:
        for i in range(cfg.trials):
            yield run_trial(cfg, i)
        return
    with ProcessPoolExecutor(max_workers=workers) as pool:
        chunk = max(1, cfg.trials // (8 * workers))
        yield from pool.map(run_trial, itertools.repeat(cfg), range(cfg.trials), chunksize=chunk)


def run_experiment(cfg: ExperimentConfig, workers: int = 1) -> Report:
    """Run ``cfg.trials`` seeded trials; trial ``i`` uses seed ``base_seed + i``.

    The report does not depend on ``workers``.
    """
    start = time.perf_counter()
    config = cfg.to_dict()
    sink = _RowSink(cfg.output_path, cfg.output_format, config) if cfg.output_path else None
    rows = []
    aggregate = None
    try:
        for row in iter_trials(cfg, workers):
            rows.append(row)
            if sink:
                sink.write(row)
        aggregate = aggregate_rows(rows)
        aggregate["concealment_trace_distance"] = photon_concealment(cfg)
        aggregate["wall_time_s"] = round(time.perf_counter() - start, 6)
    finally:
        if sink:
            sink.close(aggregate)
    return Report(config, rows, aggregate)


# -- exact enumeration of Bob's view ------------------------------------------
#
# A view is a dict mapping Bob's classical data to the unnormalized state of his
# qubits (probability times density matrix). Photon slots are independent, so
# the joint view of several photons is the keyed tensor product.


def _photon_views_honest(fam, b: int, in_sample: bool, leak_z: bool) -> dict[tuple, np.ndarray]:
    n = fam.n
    weight = 1.0 / (4 * 2**n)
    views: dict[tuple, np.ndarray] = {}
    for x, z, w in itertools.product((0, 1), (0, 1), range(2**n)):
        y = fam.evaluate(x, z, w)
        if in_sample:
            key = ("X", y, x, z, w)
        else:
            key = ("Y", y, x ^ b) + ((z,) if leak_z else ())
        amps = bb84_state(x, z).amplitudes
        views[key] = views.get(key, 0) + weight * np.outer(amps, amps.conj())
    return views


def _photon_views_attack(fam, b: int, in_sample: bool) -> dict[tuple, np.ndarray]:
    views: dict[tuple, np.ndarray] = {}
    for theta in (Basis.RECTILINEAR, Basis.DIAGONAL):
        for y, p_commit, sys in attacks.commit_branches(attacks.prepare_gamma(fam, theta)):
            if in_sample:
                for (x, z, w), p_unveil, sys2 in attacks.unveil_branches(sys):
                    rho = partial_trace(sys2.state, [attacks.RB_Z]).matrix
                    key = ("X", y, x, z, w)
                    views[key] = views.get(key, 0) + 0.5 * p_commit * p_unveil * rho
            else:
                rho = partial_trace(sys.state, [attacks.RB_Z]).matrix
                key = ("Y", y, int(theta) ^ b)
                views[key] = views.get(key, 0) + 0.5 * p_commit * rho
    return views


def _photon_views(cfg: ExperimentConfig, fam, b: int, in_sample: bool, leak_z: bool):
    if cfg.alice == "honest":
        return _photon_views_honest(fam, b, in_sample, leak_z)
    if leak_z:
        raise ValueError("the leaky variant is defined for an honest Alice only")
    return _photon_views_attack(fam, b, in_sample)


def _bb84_photon_views(cfg: ExperimentConfig, b: int, leak_z: bool) -> dict[tuple, np.ndarray]:
    if cfg.alice == "attack":
        # Bob holds half an EPR pair whatever Alice later decides
        return {(): np.eye(2, dtype=complex) / 2}
    views: dict[tuple, np.ndarray] = {}
    for z in (0, 1):
        amps = bb84_state(b, z).amplitudes
        key = (z,) if leak_z else ()
        views[key] = views.get(key, 0) + 0.5 * np.outer(amps, amps.conj())
    return views


def _combine(views_per_photon: list[dict[tuple, np.ndarray]]) -> dict[tuple, np.ndarray]:
    total = math.prod(len(v) for v in views_per_photon)
    if total > MAX_PROBE_BRANCHES:
        raise ProbeTooLarge(
            f"{total} classical branches exceed the exact-enumeration limit; use Monte-Carlo mode"
        )
    out: dict[tuple, np.ndarray] = {(): np.ones((1, 1), dtype=complex)}
    for views in views_per_photon:
        out = {k + (pk,): np.kron(m, pm) for k, m in out.items() for pk, pm in views.items()}
    return out


def _view_distance(v0: dict, v1: dict) -> float:
    total = 0.0
    for key in set(v0) | set(v1):
        a = v0.get(key)
        c = v1.get(key)
        diff = (a if a is not None else 0) - (c if c is not None else 0)
        total += trace_norm(np.atleast_2d(diff))
    return 0.5 * total


def _check_probe_size(cfg: ExperimentConfig) -> None:
    if cfg.protocol == "kent":
        p = cfg.params
        per_system = 1 if cfg.alice == "honest" else 2 * p.n + 2
        if p.N_B > MAX_PROBE_PHOTONS:
            raise ProbeTooLarge(f"N_B={p.N_B} > {MAX_PROBE_PHOTONS}; use Monte-Carlo mode")
        if per_system > MAX_PROBE_QUBITS:
            raise ProbeTooLarge(f"{per_system} qubits per system > {MAX_PROBE_QUBITS}; use Monte-Carlo mode")
    elif cfg.params > MAX_PROBE_QUBITS:
        raise ProbeTooLarge(f"{cfg.params} photons > {MAX_PROBE_QUBITS} qubits; use Monte-Carlo mode")


def bob_view(cfg: ExperimentConfig, b: int, leak_z: bool = False) -> dict[tuple, np.ndarray]:
    """Bob's exact pre-opening state for committed bit ``b``: classical data -> weighted state."""
    _check_probe_size(cfg)
    if cfg.protocol == "bb84":
        return _combine([_bb84_photon_views(cfg, b, leak_z)] * cfg.params)
    p = cfg.params
    fam = gen_family(p.n, cfg.base_seed)
    per = {
        flag: _photon_views(cfg, fam, b, flag, leak_z) for flag in (True, False)
    }
    samples = list(itertools.combinations(range(p.N_B), p.sample_size))
    out = {}
    for sample in samples:
        chosen = set(sample)
        joint = _combine([per[i in chosen] for i in range(p.N_B)])
        for key, m in joint.items():
            out[(sample,) + key] = m / len(samples)
    return out


def concealment_probe(cfg: ExperimentConfig, leak_z: bool = False) -> float:
    """Trace distance between Bob's complete pre-opening views for ``b = 0`` and ``b = 1``.

    ``leak_z`` switches to a deliberately broken variant in which Alice also
    announces each photon's value ``z`` in the clear.
    """
    return _view_distance(bob_view(cfg, 0, leak_z), bob_view(cfg, 1, leak_z))


def transcript_distribution(cfg: ExperimentConfig, b: int) -> dict[tuple, float]:
    """Exact distribution of Bob's classical transcript before opening."""
    return {k: float(np.real(np.trace(m))) for k, m in bob_view(cfg, b).items()}


def statistical_distance(p: dict, q: dict) -> float:
    return 0.5 * sum(abs(p.get(k, 0.0) - q.get(k, 0.0)) for k in set(p) | set(q))


def photon_concealment(cfg: ExperimentConfig) -> float | None:
    """Trace distance between Bob's single-photon views of ``b = 0`` and ``b = 1``."""
    if cfg.protocol == "bb84":
        return _view_distance(_bb84_photon_views(cfg, 0, False), _bb84_photon_views(cfg, 1, False))
    p = cfg.params
    if cfg.alice == "attack" and 2 * p.n + 2 > MAX_PROBE_QUBITS:
        return None
    fam = gen_family(p.n, cfg.base_seed)
    return _view_distance(
        _photon_views(cfg, fam, 0, False, False), _photon_views(cfg, fam, 1, False, False)
    )
