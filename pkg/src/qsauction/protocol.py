"""The seven-step auction among Alice and N-1 bidders, run over a QuantumSystem.

Every quantum transmission, public announcement, check and final verdict is
appended to a :class:`Transcript`. A run is a pure function of its scenario and
seed: party randomness and adversary randomness come from two streams derived
from the seed.
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Any, Iterable, Mapping, Sequence

import numpy as np

from .adversary import (
    ChannelTap,
    CollusionMeasureDisordered,
    FalseAnnouncement,
    build_adversary,
    collusion_measure_disordered,
    false_announcement,
)
from .bids import Bid, Permutation, epr_decode, epr_encode_bid
from .quantum import (
    CARRIER_STATES,
    DECOY_STATES,
    I,
    ISIGMA_Y,
    Basis,
    CanonicalState,
    QuantumSystem,
    serialize_state,
)

if TYPE_CHECKING:
    from .scenario import Scenario

__all__ = [
    "AUCTIONEER",
    "AuctionOutcome",
    "CarrierSequence",
    "Confirmation",
    "DecoyCheck",
    "DecoyRecord",
    "Transcript",
    "Verdict",
    "decode_bid",
    "determine_winner",
    "encode_bid",
    "epr_encode_bid",
    "insert_decoys",
    "prepare_carriers",
    "prepare_epr_sequence",
    "post_confirm",
    "run_auction",
    "run_decoy_check",
    "seed_streams",
    "strip_decoys",
]

AUCTIONEER = "Alice"
EVERYONE = "all"
ENGINE = "engine"


class Verdict(enum.Enum):
    COMPLETED = "Completed"
    ABORTED_CHANNEL_CHECK = "AbortedChannelCheck"
    ABORTED_POST_CONFIRMATION = "AbortedPostConfirmation"
    TIE = "Tie"


@dataclass(frozen=True)
class Event:
    t: int
    step: str
    sender: str
    receiver: str
    kind: str
    payload: dict[str, Any]

    def to_dict(self) -> dict[str, Any]:
        return {
            "t": self.t,
            "step": self.step,
            "from": self.sender,
            "to": self.receiver,
            "kind": self.kind,
            "payload": self.payload,
        }


class Transcript:
    """Ordered event log, serialized as one JSON object per line."""

    KINDS = ("qsend", "announce", "check", "verdict")

    def __init__(self, debug: bool = False):
        self.events: list[Event] = []
        self.debug = debug

    def __len__(self) -> int:
        return len(self.events)

    def __iter__(self):
        return iter(self.events)

    def record(self, step: str, sender: str, receiver: str, kind: str, payload: dict[str, Any]) -> Event:
        if kind not in self.KINDS:
            raise ValueError(f"unknown event kind {kind!r}")
        event = Event(len(self.events), step, sender, receiver, kind, payload)
        self.events.append(event)
        return event

    def of_kind(self, kind: str) -> list[Event]:
        return [e for e in self.events if e.kind == kind]

    def to_jsonl(self) -> str:
        return "".join(json.dumps(e.to_dict()) + "\n" for e in self.events)

    @classmethod
    def from_jsonl(cls, text: str) -> Transcript:
        log = cls()
        for line in text.splitlines():
            if line.strip():
                d = json.loads(line)
                log.events.append(Event(d["t"], d["step"], d["from"], d["to"], d["kind"], d["payload"]))
        return log

    def describe(self, system: QuantumSystem, qubits: Sequence[int]) -> dict[str, Any]:
        """Per-qubit canonical labels ("*" when entangled), plus amplitudes in debug mode."""
        labels = []
        for q in qubits:
            lab = system.label(q)
            labels.append(lab.value if lab is not None else "*")
        out: dict[str, Any] = {"states": labels}
        if self.debug:
            out["amplitudes"] = [
                serialize_state(system.state([q])) if system.label(q) is not None else None for q in qubits
            ]
        return out


@dataclass
class CarrierSequence:
    """One bidder's message carriers: prepared as P_j, encoded in place into P''_j."""

    owner: str
    initial_states: tuple[CanonicalState, ...]
    qubits: list[int]
    encoded: bool = False


@dataclass(frozen=True)
class DecoyRecord:
    position: int
    state: CanonicalState

    @property
    def basis(self) -> Basis:
        return self.state.basis


@dataclass
class EprSequence:
    owner: str
    target: str
    labels: list
    permutation: Permutation
    qubits: list[int]


@dataclass(frozen=True)
class DecoyCheck:
    step: str
    sender: str
    receiver: str
    outcomes: tuple[int, ...]
    mismatches: int
    error_rate: float
    passed: bool
    tapped: bool = False

    @property
    def decoys(self) -> int:
        return len(self.outcomes)


@dataclass(frozen=True)
class Confirmation:
    verifier: str
    recovered: Bid
    passed: bool


@dataclass
class AuctionOutcome:
    verdict: Verdict
    true_bids: dict[str, Bid]
    winner: str | None = None
    announced_bid: Bid | None = None
    decoded_bids: dict[str, Bid] = field(default_factory=dict)
    checks: list[DecoyCheck] = field(default_factory=list)
    confirmations: dict[str, Confirmation] = field(default_factory=dict)
    collusion_guesses: dict[str, Bid] = field(default_factory=dict)
    collusion_target: str | None = None

    @property
    def decode_errors(self) -> int:
        return sum(
            a != b
            for name, bid in self.decoded_bids.items()
            for a, b in zip(bid.bits, self.true_bids[name].bits)
        )

    @property
    def decoded_bits(self) -> int:
        return sum(len(b) for b in self.decoded_bids.values())


def seed_streams(seed: int | np.random.SeedSequence, count: int = 2) -> list[np.random.Generator]:
    """Independent generators derived from ``seed`` by spawn-key counter."""
    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    return [
        np.random.default_rng(np.random.SeedSequence(ss.entropy, spawn_key=(*ss.spawn_key, k)))
        for k in range(count)
    ]


def prepare_carriers(system: QuantumSystem, m: int, rng: np.random.Generator, owner: str = "") -> CarrierSequence:
    if m < 2 or m % 2:
        raise ValueError(f"carrier length must be even and at least 2; got {m}")
    states = tuple(CARRIER_STATES[int(k)] for k in rng.integers(0, 4, size=m))
    return CarrierSequence(owner, states, [system.prepare(s) for s in states])


def carriers_from_states(system: QuantumSystem, states: Sequence[CanonicalState], owner: str = "") -> CarrierSequence:
    return CarrierSequence(owner, tuple(states), [system.prepare(s) for s in states])


def insert_decoys(
    system: QuantumSystem, qubits: Sequence[int], count: int, rng: np.random.Generator
) -> tuple[list[int], list[DecoyRecord]]:
    """Mix ``count`` random decoys into uniformly random positions of the sequence."""
    if count < 0:
        raise ValueError("decoy count must be non-negative")
    total = len(qubits) + count
    positions = sorted(int(p) for p in rng.choice(total, size=count, replace=False))
    records = [DecoyRecord(p, DECOY_STATES[int(k)]) for p, k in zip(positions, rng.integers(0, 4, size=count))]
    decoy_at = {r.position: r for r in records}
    data = iter(qubits)
    augmented = [system.prepare(decoy_at[p].state) if p in decoy_at else next(data) for p in range(total)]
    return augmented, records


def strip_decoys(augmented: Sequence[int], records: Iterable[DecoyRecord]) -> list[int]:
    drop = {r.position for r in records}
    return [q for p, q in enumerate(augmented) if p not in drop]


def run_decoy_check(
    system: QuantumSystem,
    records: Sequence[DecoyRecord],
    augmented: Sequence[int],
    rng: np.random.Generator,
    threshold: float = 0.0,
) -> tuple[float, bool, tuple[int, ...]]:
    """Receiver measures each decoy in its announced basis.

    Returns (error_rate, passed, outcomes); the check passes iff the error rate
    does not exceed ``threshold``.
    """
    if not records:
        raise ValueError("a channel check needs at least one decoy")
    outcomes = tuple(system.measure(augmented[r.position], r.basis, rng) for r in records)
    mismatches = sum(o != r.state.outcome for o, r in zip(outcomes, records))
    rate = mismatches / len(records)
    return rate, rate <= threshold, outcomes


def encode_bid(system: QuantumSystem, seq: CarrierSequence, bid: Bid) -> CarrierSequence:
    """Apply I for a 0 bit and i*sigma_y for a 1 bit, qubit by qubit."""
    if len(bid) != len(seq.qubits):
        raise ValueError(f"bid length {len(bid)} does not match {len(seq.qubits)} carriers")
    for q, bit in zip(seq.qubits, bid.bits):
        system.apply(ISIGMA_Y if bit == "1" else I, q)
    seq.encoded = True
    return seq


def decode_bid(
    system: QuantumSystem,
    initial_states: Sequence[CanonicalState],
    qubits: Sequence[int],
    rng: np.random.Generator,
) -> Bid:
    """Measure each returned carrier in its preparation basis; a flipped state reads as 1."""
    if len(initial_states) != len(qubits):
        raise ValueError(f"{len(initial_states)} initial states for {len(qubits)} returned qubits")
    bits = []
    for state, q in zip(initial_states, qubits):
        outcome = system.measure(q, state.basis, rng)
        bits.append("1" if outcome != state.outcome else "0")
    return Bid("".join(bits))


def prepare_epr_sequence(
    system: QuantumSystem, bid: Bid, permutation: Permutation, owner: str = "", target: str = ""
) -> EprSequence:
    """Prepare the bid's Bell pairs in order, then scramble positions with ``permutation``."""
    labels = epr_encode_bid(bid)
    ordered = [q for lab in labels for q in system.prepare_pair(lab)]
    return EprSequence(owner, target, labels, permutation, permutation.apply(ordered))


def determine_winner(
    decoded: Mapping[str, Bid], tie_policy: str = "abort"
) -> tuple[str | None, Bid]:
    """Highest bid by unsigned value. A tied top bid yields ``(None, bid)`` under "abort";
    "lowest_id" picks the earliest bidder in ``decoded`` order instead."""
    if not decoded:
        raise ValueError("no bids to compare")
    best = max(b.value for b in decoded.values())
    leaders = [name for name, b in decoded.items() if b.value == best]
    top = decoded[leaders[0]]
    if len(leaders) > 1:
        if tie_policy == "abort":
            return None, top
        if tie_policy != "lowest_id":
            raise ValueError(f"unknown tie policy {tie_policy!r}")
    return leaders[0], top


def post_confirm(
    system: QuantumSystem,
    permutation: Permutation,
    held: Mapping[str, Sequence[int]],
    announced: Bid,
    rng: np.random.Generator,
    invert: bool = True,
) -> dict[str, Confirmation]:
    """Each verifier unscrambles the winner's EPR register and Bell-measures pairs (2g, 2g+1)."""
    out = {}
    undo = permutation.inverse()
    for verifier, qubits in held.items():
        if len(qubits) != len(permutation):
            raise ValueError(f"{verifier} holds {len(qubits)} qubits for a permutation of length {len(permutation)}")
        ordered = undo.apply(qubits) if invert else list(qubits)
        labels = [system.bell_measure(ordered[k], ordered[k + 1], rng) for k in range(0, len(ordered), 2)]
        recovered = epr_decode(labels)
        out[verifier] = Confirmation(verifier, recovered, recovered == announced)
    return out


class _Run:
    """Mutable state for a single execution of :func:`run_auction`."""

    def __init__(self, scenario: Scenario, seed, debug: bool):
        self.scenario = scenario
        self.rng, self.tap_rng = seed_streams(scenario.seed if seed is None else seed)
        self.system = QuantumSystem()
        self.log = Transcript(debug=debug)
        self.tap: ChannelTap | None
        self.tap, self.behavior = build_adversary(scenario.attack)
        self.bidders = list(scenario.bidders)
        m = scenario.bid_length
        if scenario.bids is not None:
            bids = dict(zip(self.bidders, scenario.bids))
        else:
            bids = {b: Bid.random(m, self.rng) for b in self.bidders}
        self.outcome = AuctionOutcome(Verdict.COMPLETED, true_bids=bids)

    def transmit(self, step: str, sender: str, receiver: str, qubits: list[int], payload: dict) -> tuple[list[int], bool]:
        tapped = self.tap is not None and self.tap.matches(step, sender, receiver)
        payload.update(self.log.describe(self.system, qubits))
        if tapped:
            payload["tap"] = self.tap.behavior
        self.log.record(step, sender, receiver, "qsend", payload)
        if tapped:
            qubits = self.tap.act(self.system, qubits, self.tap_rng)
        return qubits, tapped

    def check_channel(self, step: str, sender: str, receiver: str, augmented, records, tapped: bool) -> DecoyCheck:
        self.log.record(
            step, sender, receiver, "announce",
            {"decoy_positions": [r.position for r in records], "bases": [r.basis.value for r in records]},
        )
        rate, passed, outcomes = run_decoy_check(
            self.system, records, augmented, self.rng, self.scenario.error_threshold
        )
        self.log.record(step, receiver, sender, "announce", {"outcomes": list(outcomes)})
        mismatches = sum(o != r.state.outcome for o, r in zip(outcomes, records))
        check = DecoyCheck(step, sender, receiver, outcomes, mismatches, rate, passed, tapped)
        self.log.record(
            step, sender, receiver, "check",
            {"decoys": len(records), "mismatches": mismatches, "error_rate": rate, "pass": passed},
        )
        self.outcome.checks.append(check)
        return check

    def finish(self, verdict: Verdict, step: str, **extra: Any) -> tuple[AuctionOutcome, Transcript]:
        o = self.outcome
        o.verdict = verdict
        payload = {
            "verdict": verdict.value,
            "winner": o.winner,
            "announced_bid": str(o.announced_bid) if o.announced_bid is not None else None,
            "decode_errors": o.decode_errors,
        }
        payload.update(extra)
        self.log.record(step, ENGINE, EVERYONE, "verdict", payload)
        return o, self.log

    def execute(self) -> tuple[AuctionOutcome, Transcript]:
        sc, system, rng = self.scenario, self.system, self.rng
        m = sc.bid_length
        bids = self.outcome.true_bids

        # Step 2: carriers plus decoys out to every bidder
        carriers: dict[str, CarrierSequence] = {}
        in_flight = {}
        d = sc.decoys_per_sequence
        for k, name in enumerate(self.bidders):
            if sc.carriers is not None:
                seq = carriers_from_states(system, sc.carriers[k], owner=name)
            else:
                seq = prepare_carriers(system, m, rng, owner=name)
            augmented, records = insert_decoys(system, seq.qubits, d, rng)
            payload = {"content": "carriers", "carriers": m, "decoys": d, "qubits": len(augmented)}
            augmented, tapped = self.transmit("S2", AUCTIONEER, name, augmented, payload)
            carriers[name] = seq
            in_flight[name] = (augmented, records, tapped)

        # Step 3: channel checks; abort before anything bid-dependent leaves a party
        results = [self.check_channel("S3", AUCTIONEER, name, *in_flight[name]) for name in self.bidders]
        if not all(c.passed for c in results):
            return self.finish(Verdict.ABORTED_CHANNEL_CHECK, "S3")
        for name in self.bidders:
            augmented, records, _ = in_flight[name]
            carriers[name].qubits = strip_decoys(augmented, records)

        # Step 4: local encoding
        for name in self.bidders:
            encode_bid(system, carriers[name], bids[name])

        # Step 5: scrambled EPR copies of each bid to every other bidder
        perms: dict[str, Permutation] = {}
        sent = {}
        for k, owner in enumerate(self.bidders):
            if sc.permutations is not None:
                perms[owner] = sc.permutations[k]
            else:
                perms[owner] = Permutation.random_pair_splitting(m, rng)
            for receiver in self.bidders:
                if receiver == owner:
                    continue
                epr = prepare_epr_sequence(system, bids[owner], perms[owner], owner, receiver)
                augmented, records = insert_decoys(system, epr.qubits, m, rng)
                payload = {
                    "content": "epr",
                    "pairs": [lab.text for lab in epr.labels],
                    "epr_qubits": m,
                    "decoys": m,
                    "qubits": len(augmented),
                }
                augmented, tapped = self.transmit("S5", owner, receiver, augmented, payload)
                sent[owner, receiver] = (augmented, records, tapped)
        results = [self.check_channel("S5", s, r, *sent[s, r]) for s, r in sent]
        if not all(c.passed for c in results):
            return self.finish(Verdict.ABORTED_CHANNEL_CHECK, "S5")
        held = {edge: strip_decoys(aug, recs) for edge, (aug, recs, _) in sent.items()}

        if isinstance(self.behavior, CollusionMeasureDisordered):
            target = self.behavior.target
            mine = {c: held[target, c] for c in self.behavior.colluders}
            guesses = collusion_measure_disordered(system, mine, self.tap_rng)
            self.outcome.collusion_guesses = guesses
            self.outcome.collusion_target = target
            for c, guess in guesses.items():
                self.log.record("S5", c, target, "check", {"collusion_guess": str(guess)})

        # Step 6: encoded carriers return to Alice, who decodes and announces
        for name in self.bidders:
            seq = carriers[name]
            payload = {"content": "encoded_carriers", "carriers": m, "decoys": 0, "bid_bits": len(bids[name]), "qubits": m}
            seq.qubits, _ = self.transmit("S6", name, AUCTIONEER, seq.qubits, payload)
            self.outcome.decoded_bids[name] = decode_bid(system, seq.initial_states, seq.qubits, rng)
        winner, best = determine_winner(self.outcome.decoded_bids, sc.tie_policy)
        if isinstance(self.behavior, FalseAnnouncement):
            winner, best = false_announcement(self.behavior, winner, best)
        if winner is None:
            self.log.record("S6", AUCTIONEER, EVERYONE, "announce", {"winner": None, "bid": None, "tie": True})
            return self.finish(Verdict.TIE, "S6")
        self.outcome.winner, self.outcome.announced_bid = winner, best
        self.log.record("S6", AUCTIONEER, EVERYONE, "announce", {"winner": winner, "bid": str(best), "tie": False})

        # Step 7: winner reveals its permutation; everyone else verifies
        self.log.record("S7", winner, EVERYONE, "announce", {"permutation": perms[winner].order_string()})
        verifiers = {v: held[winner, v] for v in self.bidders if v != winner}
        confirmations = post_confirm(system, perms[winner], verifiers, best, rng)
        self.outcome.confirmations = confirmations
        for v, conf in confirmations.items():
            self.log.record(
                "S7", v, EVERYONE, "check",
                {"recovered": str(conf.recovered), "announced": str(best), "pass": conf.passed},
            )
        discarded = [f"{s}->{r}" for s, r in held if s != winner]
        ok = all(c.passed for c in confirmations.values())
        verdict = Verdict.COMPLETED if ok else Verdict.ABORTED_POST_CONFIRMATION
        return self.finish(verdict, "S7", discarded_epr=discarded)


def run_auction(
    scenario: Scenario, seed: int | np.random.SeedSequence | None = None, *, debug: bool = False
) -> tuple[AuctionOutcome, Transcript]:
    """Execute Steps 2-7 for ``scenario``; ``seed`` defaults to the scenario's own seed."""
    return _Run(scenario, seed, debug).execute()
