"""Channel taps and dishonest-party behaviours, plus closed-form detection odds."""

from __future__ import annotations

import enum
import itertools
from dataclasses import dataclass, field
from typing import Any, Mapping, Sequence

import numpy as np

from .bids import Bid, epr_decode
from .quantum import CNOT, DECOY_STATES, Basis, CanonicalState, QuantumSystem

ATTACK_KINDS = ("pass_through", "cnot", "intercept_resend", "false_announcement", "collusion")
CHANNEL_ATTACKS = ("pass_through", "cnot", "intercept_resend")
TAPPABLE_STEPS = ("S2", "S5", "S6")


class BasisPolicy(enum.Enum):
    """How an intercept-resend eavesdropper picks a measurement basis per qubit."""

    FIXED_Z = "fixed_z"
    FIXED_X = "fixed_x"
    UNIFORM_XY = "uniform_xy"
    UNIFORM_ZXY = "uniform_zxy"

    @property
    def bases(self) -> tuple[Basis, ...]:
        return {
            BasisPolicy.FIXED_Z: (Basis.Z,),
            BasisPolicy.FIXED_X: (Basis.X,),
            BasisPolicy.UNIFORM_XY: (Basis.X, Basis.Y),
            BasisPolicy.UNIFORM_ZXY: (Basis.Z, Basis.X, Basis.Y),
        }[self]

    def draw(self, rng: np.random.Generator) -> Basis:
        choices = self.bases
        return choices[0] if len(choices) == 1 else choices[int(rng.integers(len(choices)))]


@dataclass(frozen=True)
class AttackDescriptor:
    """Attack configuration as it appears in scenario files.

    ``channel`` and ``target`` place a tap: at S2 and S6 the target is the bidder
    on the other end of Alice's channel, at S5 it is the bidder sending EPR pairs.
    ``target=None`` taps every edge of that step.
    """

    kind: str
    basis_policy: BasisPolicy = BasisPolicy.UNIFORM_XY
    channel: str = "S2"
    target: str | None = None
    winner: str | None = None
    fabricated_bid: Bid | None = None
    colluders: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        if self.kind not in ATTACK_KINDS:
            raise ValueError(f"attack must be one of {', '.join(ATTACK_KINDS)}; got {self.kind!r}")
        if self.channel not in TAPPABLE_STEPS:
            raise ValueError(f"channel must be one of {', '.join(TAPPABLE_STEPS)}; got {self.channel!r}")
        if self.kind == "false_announcement" and (self.winner is None or self.fabricated_bid is None):
            raise ValueError("false_announcement needs 'winner' and 'fabricated_bid'")
        if self.kind == "collusion" and (not self.colluders or self.target is None):
            raise ValueError("collusion needs 'colluders' and 'target'")
        if self.kind == "collusion" and self.target in self.colluders:
            raise ValueError("collusion target cannot be one of the colluders")

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> AttackDescriptor:
        known = {"attack", "basis_policy", "channel", "target", "winner", "fabricated_bid", "colluders"}
        extra = set(data) - known
        if extra:
            raise ValueError(f"unknown attack fields: {', '.join(sorted(extra))}")
        if "attack" not in data:
            raise ValueError("attack descriptor needs an 'attack' field")
        fab = data.get("fabricated_bid")
        return cls(
            kind=str(data["attack"]),
            basis_policy=BasisPolicy(data.get("basis_policy", "uniform_xy")),
            channel=str(data.get("channel", "S2")),
            target=data.get("target"),
            winner=data.get("winner"),
            fabricated_bid=Bid(str(fab)) if fab is not None else None,
            colluders=tuple(data.get("colluders", ())),
        )

    def to_dict(self) -> dict[str, Any]:
        out: dict[str, Any] = {"attack": self.kind}
        if self.kind == "intercept_resend":
            out["basis_policy"] = self.basis_policy.value
        if self.kind in CHANNEL_ATTACKS:
            out["channel"] = self.channel
            out["target"] = self.target
        if self.kind == "false_announcement":
            out["winner"] = self.winner
            out["fabricated_bid"] = str(self.fabricated_bid)
        if self.kind == "collusion":
            out["colluders"] = list(self.colluders)
            out["target"] = self.target
        return out


@dataclass
class ChannelTap:
    """An adversary sitting on one protocol step's quantum channel.

    The tap only ever sees qubit handles in transit, never the parties' decoy
    positions or bases.
    """

    behavior: str
    channel: str = "S2"
    target: str | None = None
    basis_policy: BasisPolicy = BasisPolicy.UNIFORM_XY
    ancillas: list[int] = field(default_factory=list)
    notes: list[tuple[int, str, int]] = field(default_factory=list)

    def matches(self, step: str, sender: str, receiver: str) -> bool:
        if step != self.channel:
            return False
        if self.target is None:
            return True
        # Alice sends at S2; bidders send at S5 and S6
        watched = receiver if step == "S2" else sender
        return watched == self.target

    def act(self, system: QuantumSystem, qubits: Sequence[int], rng: np.random.Generator) -> list[int]:
        if self.behavior == "cnot":
            return cnot_ancilla(self, system, qubits, rng)
        if self.behavior == "intercept_resend":
            return intercept_resend(self, system, qubits, self.basis_policy, rng)
        return list(qubits)


def intercept_resend(
    tap: ChannelTap,
    system: QuantumSystem,
    qubits: Sequence[int],
    basis_policy: BasisPolicy,
    rng: np.random.Generator,
) -> list[int]:
    """Measure every transiting qubit in a policy-drawn basis and forward it collapsed."""
    for q in qubits:
        basis = basis_policy.draw(rng)
        tap.notes.append((q, basis.value, system.measure(q, basis, rng)))
    return list(qubits)


def cnot_ancilla(
    tap: ChannelTap, system: QuantumSystem, qubits: Sequence[int], rng: np.random.Generator
) -> list[int]:
    """Entangle each transiting qubit (control) with a fresh |0> ancilla the tap keeps."""
    for q in qubits:
        anc = system.prepare(CanonicalState.ZERO)
        system.cnot(q, anc)
        tap.ancillas.append(anc)
    return list(qubits)


@dataclass(frozen=True)
class FalseAnnouncement:
    """Auctioneer replaces the Step 6 announcement with a colluder and a made-up bid."""

    winner: str
    fabricated: Bid


@dataclass(frozen=True)
class CollusionMeasureDisordered:
    """Colluding bidders Bell-measure the target's EPR sequence before it is unscrambled."""

    colluders: tuple[str, ...]
    target: str


def false_announcement(behavior: FalseAnnouncement | None, winner: str | None, bid: Bid | None):
    if behavior is None:
        return winner, bid
    return behavior.winner, behavior.fabricated


def collusion_measure_disordered(
    system: QuantumSystem, held: Mapping[str, Sequence[int]], rng: np.random.Generator
) -> dict[str, Bid]:
    """Each colluder Bell-measures adjacent positions of its held register and decodes."""
    guesses = {}
    for colluder, qubits in held.items():
        labels = [system.bell_measure(qubits[k], qubits[k + 1], rng) for k in range(0, len(qubits), 2)]
        guesses[colluder] = epr_decode(labels)
    return guesses


def build_adversary(
    descriptor: AttackDescriptor | None,
) -> tuple[ChannelTap | None, FalseAnnouncement | CollusionMeasureDisordered | None]:
    if descriptor is None:
        return None, None
    kind = descriptor.kind
    if kind in CHANNEL_ATTACKS:
        tap = ChannelTap(kind, descriptor.channel, descriptor.target, descriptor.basis_policy)
        return tap, None
    if kind == "false_announcement":
        assert descriptor.winner is not None and descriptor.fabricated_bid is not None
        return None, FalseAnnouncement(descriptor.winner, descriptor.fabricated_bid)
    assert descriptor.target is not None
    return None, CollusionMeasureDisordered(descriptor.colluders, descriptor.target)


def _ket(state: CanonicalState) -> np.ndarray:
    return state.vector.amplitudes


def per_decoy_detection(descriptor: AttackDescriptor) -> float:
    """Probability that one decoy reveals the attack, by enumeration.

    Averages over the four decoy states (uniform) and the adversary's choices,
    working directly with kets rather than the sampling engine.
    """
    kind = descriptor.kind
    if kind == "pass_through":
        return 0.0
    if kind == "cnot":
        total = 0.0
        for s in DECOY_STATES:
            joint = CNOT.matrix @ np.kron(_ket(s), _ket(CanonicalState.ZERO))
            wrong = _ket(s.flipped)
            leftover = wrong.conj() @ joint.reshape(2, 2)
            total += float(np.vdot(leftover, leftover).real)
        return total / len(DECOY_STATES)
    if kind == "intercept_resend":
        bases = descriptor.basis_policy.bases
        total = 0.0
        for s, basis in itertools.product(DECOY_STATES, bases):
            for eve_state in basis.states:
                p_eve = abs(np.vdot(_ket(eve_state), _ket(s))) ** 2
                p_wrong = abs(np.vdot(_ket(s.flipped), _ket(eve_state))) ** 2
                total += p_eve * p_wrong
        return total / (len(DECOY_STATES) * len(bases))
    raise ValueError(f"no decoy-detection model for attack {kind!r}")


def analytic_detection(descriptor: AttackDescriptor, decoys: int) -> float:
    """Chance that at least one of ``decoys`` independent decoys flags the attack."""
    if decoys < 0:
        raise ValueError("decoy count must be non-negative")
    p = per_decoy_detection(descriptor)
    return 1.0 - (1.0 - p) ** decoys
