"""Scenario documents: validated auction configurations loaded from JSON."""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path
from typing import Any, Mapping

from .adversary import AttackDescriptor
from .bids import Bid, Permutation
from .quantum import CARRIER_STATES, CanonicalState

SCHEMA_VERSION = 1
TIE_POLICIES = ("abort", "lowest_id")
DEFAULT_BIDDERS = ("Bob", "Charlie", "Dave", "Frank", "Grace", "Heidi", "Ivan", "Judy", "Mallory", "Niaj")

_FIELDS = {
    "schema_version",
    "n_parties",
    "bid_length",
    "bids",
    "bidders",
    "decoy_rate",
    "decoy_count",
    "error_threshold",
    "tie_policy",
    "attack",
    "carriers",
    "permutations",
    "seed",
}


class ScenarioError(ValueError):
    """A scenario file failed to parse or violates an invariant; ``location`` names the field."""

    def __init__(self, location: str, message: str):
        super().__init__(f"{location}: {message}")
        self.location = location


def default_bidders(count: int) -> tuple[str, ...]:
    names = list(DEFAULT_BIDDERS[:count])
    names += [f"Bidder{k}" for k in range(len(names) + 1, count + 1)]
    return tuple(names)


@dataclass(frozen=True)
class Scenario:
    n_parties: int
    bid_length: int
    bids: tuple[Bid, ...] | None = None  # None draws fresh random bids every run
    decoy_rate: float = 0.5
    decoy_count: int | None = None
    error_threshold: float = 0.0
    tie_policy: str = "abort"
    attack: AttackDescriptor | None = None
    carriers: tuple[tuple[CanonicalState, ...], ...] | None = None
    permutations: tuple[Permutation, ...] | None = None
    seed: int = 0
    bidders: tuple[str, ...] = field(default=())

    def __post_init__(self) -> None:
        if not self.bidders and self.n_parties >= 1:
            object.__setattr__(self, "bidders", default_bidders(self.n_parties - 1))
        self.validate()

    @property
    def decoys_per_sequence(self) -> int:
        """Decoys Alice mixes into each carrier sequence."""
        if self.decoy_count is not None:
            return self.decoy_count
        # round first so 0.3 * 10 does not ceil to 4
        return math.ceil(round(self.decoy_rate * self.bid_length, 9))

    def validate(self) -> None:
        n, m = self.n_parties, self.bid_length
        if n < 3:
            raise ScenarioError("n_parties", f"need at least 3 parties (one auctioneer, two bidders); got {n}")
        if m < 2:
            raise ScenarioError("bid_length", f"must be at least 2; got {m}")
        if m % 2:
            raise ScenarioError("bid_length", "bid_length must be even")
        if len(self.bidders) != n - 1 or len(set(self.bidders)) != n - 1:
            raise ScenarioError("bidders", f"need {n - 1} distinct bidder names")
        if "Alice" in self.bidders:
            raise ScenarioError("bidders", "'Alice' is reserved for the auctioneer")
        if self.bids is not None:
            if len(self.bids) != n - 1:
                raise ScenarioError("bids", f"expected {n - 1} bids for {n} parties; got {len(self.bids)}")
            for k, bid in enumerate(self.bids):
                if len(bid) != m:
                    raise ScenarioError(f"bids[{k}]", f"length {len(bid)} differs from bid_length {m}")
        if not 0 < self.decoy_rate <= 1:
            raise ScenarioError("decoy_rate", f"must lie in (0, 1]; got {self.decoy_rate}")
        if self.decoy_count is not None and self.decoy_count < 1:
            raise ScenarioError("decoy_count", f"must be at least 1; got {self.decoy_count}")
        if not 0 <= self.error_threshold <= 1:
            raise ScenarioError("error_threshold", f"must lie in [0, 1]; got {self.error_threshold}")
        if self.tie_policy not in TIE_POLICIES:
            raise ScenarioError("tie_policy", f"must be one of {', '.join(TIE_POLICIES)}")
        if self.carriers is not None:
            if len(self.carriers) != n - 1:
                raise ScenarioError("carriers", f"expected {n - 1} carrier sequences; got {len(self.carriers)}")
            for k, seq in enumerate(self.carriers):
                if len(seq) != m:
                    raise ScenarioError(f"carriers[{k}]", f"length {len(seq)} differs from bid_length {m}")
                bad = [s.value for s in seq if s not in CARRIER_STATES]
                if bad:
                    raise ScenarioError(f"carriers[{k}]", f"carrier states must be 0, 1, + or -; got {bad}")
        if self.permutations is not None:
            if len(self.permutations) != n - 1:
                raise ScenarioError("permutations", f"expected {n - 1} permutations; got {len(self.permutations)}")
            for k, perm in enumerate(self.permutations):
                if len(perm) != m:
                    raise ScenarioError(f"permutations[{k}]", f"length {len(perm)} differs from bid_length {m}")
        if self.attack is not None:
            self._validate_attack(self.attack)

    def _validate_attack(self, attack: AttackDescriptor) -> None:
        names = set(self.bidders)
        if attack.target is not None and attack.target not in names:
            raise ScenarioError("attack.target", f"unknown bidder {attack.target!r}")
        if attack.winner is not None and attack.winner not in names:
            raise ScenarioError("attack.winner", f"unknown bidder {attack.winner!r}")
        if attack.fabricated_bid is not None and len(attack.fabricated_bid) != self.bid_length:
            raise ScenarioError("attack.fabricated_bid", f"length must equal bid_length {self.bid_length}")
        for c in attack.colluders:
            if c not in names:
                raise ScenarioError("attack.colluders", f"unknown bidder {c!r}")

    def with_changes(self, **changes: Any) -> Scenario:
        return replace(self, **changes)

    def to_dict(self) -> dict[str, Any]:
        return {
            "schema_version": SCHEMA_VERSION,
            "n_parties": self.n_parties,
            "bid_length": self.bid_length,
            "bidders": list(self.bidders),
            "bids": [str(b) for b in self.bids] if self.bids is not None else "random",
            "decoy_rate": self.decoy_rate,
            "decoy_count": self.decoy_count,
            "error_threshold": self.error_threshold,
            "tie_policy": self.tie_policy,
            "attack": self.attack.to_dict() if self.attack is not None else None,
            "carriers": [" ".join(s.value for s in seq) for seq in self.carriers] if self.carriers else None,
            "permutations": [p.order_string() for p in self.permutations] if self.permutations else None,
            "seed": self.seed,
        }

    def canonical_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))

    def digest(self) -> str:
        return hashlib.sha256(self.canonical_json().encode()).hexdigest()


def _parse_states(value: Any, location: str) -> tuple[CanonicalState, ...]:
    tokens = value.split() if isinstance(value, str) else list(value)
    try:
        return tuple(CanonicalState.parse(str(t)) for t in tokens)
    except ValueError as exc:
        raise ScenarioError(location, str(exc)) from None


def _require(data: Mapping[str, Any], key: str, kind: type) -> Any:
    if key not in data:
        raise ScenarioError(key, "missing required field")
    value = data[key]
    if kind is int and (isinstance(value, bool) or not isinstance(value, int)):
        raise ScenarioError(key, f"expected an integer; got {value!r}")
    return value


def scenario_from_dict(data: Mapping[str, Any]) -> Scenario:
    if not isinstance(data, Mapping):
        raise ScenarioError("<root>", "scenario must be a JSON object")
    unknown = set(data) - _FIELDS
    if unknown:
        raise ScenarioError(sorted(unknown)[0], "unknown field")
    version = data.get("schema_version", SCHEMA_VERSION)
    if version != SCHEMA_VERSION:
        raise ScenarioError("schema_version", f"unsupported version {version!r}")
    n = _require(data, "n_parties", int)
    m = _require(data, "bid_length", int)

    raw_bids = data.get("bids", "random")
    bids = None
    if raw_bids != "random":
        if not isinstance(raw_bids, list):
            raise ScenarioError("bids", "expected a list of bit strings or \"random\"")
        parsed = []
        for k, b in enumerate(raw_bids):
            try:
                parsed.append(Bid(str(b)))
            except ValueError as exc:
                raise ScenarioError(f"bids[{k}]", str(exc)) from None
        bids = tuple(parsed)

    carriers = None
    if data.get("carriers") is not None:
        carriers = tuple(_parse_states(seq, f"carriers[{k}]") for k, seq in enumerate(data["carriers"]))

    perms = None
    if data.get("permutations") is not None:
        parsed_perms = []
        for k, p in enumerate(data["permutations"]):
            try:
                parsed_perms.append(Permutation.from_order(p))
            except ValueError as exc:
                raise ScenarioError(f"permutations[{k}]", str(exc)) from None
        perms = tuple(parsed_perms)

    attack = None
    if data.get("attack") is not None:
        try:
            attack = AttackDescriptor.from_dict(data["attack"])
        except (ValueError, TypeError) as exc:
            raise ScenarioError("attack", str(exc)) from None

    bidders = tuple(data["bidders"]) if data.get("bidders") else ()
    seed = data.get("seed", 0)
    if isinstance(seed, bool) or not isinstance(seed, int) or seed < 0:
        raise ScenarioError("seed", f"expected a non-negative integer; got {seed!r}")
    decoy_count = data.get("decoy_count")
    if decoy_count is not None and (isinstance(decoy_count, bool) or not isinstance(decoy_count, int)):
        raise ScenarioError("decoy_count", f"expected an integer; got {decoy_count!r}")

    return Scenario(
        n_parties=n,
        bid_length=m,
        bids=bids,
        decoy_rate=float(data.get("decoy_rate", 0.5)),
        decoy_count=decoy_count,
        error_threshold=float(data.get("error_threshold", 0.0)),
        tie_policy=str(data.get("tie_policy", "abort")),
        attack=attack,
        carriers=carriers,
        permutations=perms,
        seed=seed,
        bidders=bidders,
    )


def load_scenario(path: str | Path) -> Scenario:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ScenarioError(str(path), f"cannot read file ({exc.strerror})") from None
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"{path}:{exc.lineno}:{exc.colno}", f"invalid JSON ({exc.msg})") from None
    return scenario_from_dict(data)


def example3_scenario() -> Scenario:
    """The built-in three-party golden scenario (Bob 1011, Charlie 0111)."""
    text = resources.files("qsauction").joinpath("scenarios/example3.json").read_text()
    return scenario_from_dict(json.loads(text))
