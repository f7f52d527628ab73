"""Classical values exchanged in an auction: bids, Bell-code chunks and permutations."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence, TypeVar

import numpy as np

from .quantum import BellLabel

T = TypeVar("T")


@dataclass(frozen=True)
class Bid:
    """A bid as a big-endian bit string; bids compare by unsigned integer value."""

    bits: str

    def __post_init__(self) -> None:
        if not self.bits or set(self.bits) - {"0", "1"}:
            raise ValueError(f"bid must be a non-empty bit string, got {self.bits!r}")

    def __str__(self) -> str:
        return self.bits

    def __len__(self) -> int:
        return len(self.bits)

    @property
    def value(self) -> int:
        return int(self.bits, 2)

    @classmethod
    def random(cls, m: int, rng: np.random.Generator) -> Bid:
        return cls("".join(str(int(b)) for b in rng.integers(0, 2, size=m)))


def epr_encode_bid(bid: Bid) -> list[BellLabel]:
    """Split a bid into 2-bit chunks and map each to its Bell state."""
    if len(bid) % 2:
        raise ValueError(f"bid length {len(bid)} is odd; EPR encoding needs 2-bit chunks")
    return [BellLabel.from_code(bid.bits[k : k + 2]) for k in range(0, len(bid), 2)]


def epr_decode(labels: Sequence[BellLabel]) -> Bid:
    return Bid("".join(lab.code for lab in labels))


@dataclass(frozen=True)
class Permutation:
    """Position map: the item now at position ``i`` came from position ``map[i]``."""

    map: tuple[int, ...]

    def __post_init__(self) -> None:
        if sorted(self.map) != list(range(len(self.map))):
            raise ValueError(f"{list(self.map)} is not a bijection on 0..{len(self.map) - 1}")

    def __len__(self) -> int:
        return len(self.map)

    @classmethod
    def identity(cls, m: int) -> Permutation:
        return cls(tuple(range(m)))

    @classmethod
    def from_order(cls, order: str | Sequence[int]) -> Permutation:
        """Parse a 1-indexed source-order listing such as ``"1324"`` or ``[1, 3, 2, 4]``."""
        if isinstance(order, str):
            text = order.strip()
            tokens = text.split() if " " in text else list(text)
            try:
                digits = [int(tok) for tok in tokens]
            except ValueError:
                raise ValueError(f"cannot parse permutation order {order!r}") from None
        else:
            digits = [int(x) for x in order]
        return cls(tuple(d - 1 for d in digits))

    def order_string(self) -> str:
        """1-indexed source order; space separated once positions exceed 9."""
        parts = [str(i + 1) for i in self.map]
        return "".join(parts) if len(self.map) < 10 else " ".join(parts)

    def apply(self, items: Sequence[T]) -> list[T]:
        if len(items) != len(self.map):
            raise ValueError(f"permutation of length {len(self.map)} applied to {len(items)} items")
        return [items[src] for src in self.map]

    def inverse(self) -> Permutation:
        inv = [0] * len(self.map)
        for i, src in enumerate(self.map):
            inv[src] = i
        return Permutation(tuple(inv))

    def splits_pairs(self) -> bool:
        """True if no adjacent output slot (2g, 2g+1) holds both halves of an input pair."""
        return all(self.map[k] // 2 != self.map[k + 1] // 2 for k in range(0, len(self.map) - 1, 2))

    @classmethod
    def random(cls, m: int, rng: np.random.Generator) -> Permutation:
        return cls(tuple(int(x) for x in rng.permutation(m)))

    @classmethod
    def random_pair_splitting(cls, m: int, rng: np.random.Generator) -> Permutation:
        """Uniform over permutations that leave no EPR pair in an adjacent slot pair.

        At m = 2 no such permutation exists, so this falls back to a uniform draw.
        """
        if m < 4:
            return cls.random(m, rng)
        while True:
            perm = cls.random(m, rng)
            if perm.splits_pairs():
                return perm
