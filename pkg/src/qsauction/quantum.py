"""Exact pure-state engine for the handful of qubits a protocol run touches.

Qubit 0 is the leftmost tensor factor, so ``from_states([ZERO, ONE])`` has its
single nonzero amplitude at index ``0b01``.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

SQRT_HALF = 1 / np.sqrt(2)
_PROB_EPS = 1e-14


class QuantumError(ValueError):
    """Raised on malformed states, bad qubit indices or misused gates."""


class StateVector:
    """Normalized amplitude register over ``n_qubits`` qubits.

    Instances are treated as immutable values; every operation returns a new one.
    """

    __slots__ = ("n_qubits", "amplitudes")

    def __init__(self, amplitudes: Iterable[complex], *, check: bool = True):
        if isinstance(amplitudes, np.ndarray) and amplitudes.dtype == np.complex128 and amplitudes.ndim == 1:
            amps = amplitudes
        else:
            amps = np.asarray(amplitudes, dtype=np.complex128).reshape(-1)
        n = amps.size.bit_length() - 1
        if amps.size == 0 or 1 << n != amps.size:
            raise QuantumError(f"amplitude count {amps.size} is not a power of two")
        if check:
            norm = float(np.vdot(amps, amps).real)
            if abs(norm - 1.0) > 1e-9:
                raise QuantumError(f"state is not normalized (norm^2 = {norm!r})")
        self.n_qubits = n
        self.amplitudes = amps

    def __repr__(self) -> str:
        return f"StateVector(n_qubits={self.n_qubits}, amplitudes={self.amplitudes!r})"

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, StateVector):
            return NotImplemented
        return self.n_qubits == other.n_qubits and np.array_equal(self.amplitudes, other.amplitudes)

    __hash__ = None  # type: ignore[assignment]

    @property
    def norm_squared(self) -> float:
        return float(np.vdot(self.amplitudes, self.amplitudes).real)

    def tensor(self) -> np.ndarray:
        return self.amplitudes.reshape((2,) * self.n_qubits)

    def kron(self, other: StateVector) -> StateVector:
        return StateVector(np.multiply.outer(self.amplitudes, other.amplitudes).reshape(-1), check=False)

    def inner(self, other: StateVector) -> complex:
        """Return ``<self|other>``."""
        _same_size(self, other)
        return complex(np.vdot(self.amplitudes, other.amplitudes))


class CanonicalState(enum.Enum):
    """The six single-qubit states used by the auction, keyed by their text label."""

    ZERO = "0"
    ONE = "1"
    PLUS = "+"
    MINUS = "-"
    PLUS_Y = "+y"
    MINUS_Y = "-y"

    @property
    def vector(self) -> StateVector:
        return _CANONICAL_VECTORS[self]

    @property
    def basis(self) -> Basis:
        return _STATE_BASIS[self]

    @property
    def outcome(self) -> int:
        """Outcome index of this state when measured in its own basis."""
        return _STATE_OUTCOME[self]

    @property
    def flipped(self) -> CanonicalState:
        """The orthogonal partner in the same basis."""
        return self.basis.states[1 - self.outcome]

    @classmethod
    def parse(cls, label: str) -> CanonicalState:
        try:
            return cls(label)
        except ValueError:
            raise QuantumError(f"unknown state label {label!r}") from None


_CANONICAL_AMPS = {
    CanonicalState.ZERO: np.array([1, 0], dtype=complex),
    CanonicalState.ONE: np.array([0, 1], dtype=complex),
    CanonicalState.PLUS: np.array([SQRT_HALF, SQRT_HALF], dtype=complex),
    CanonicalState.MINUS: np.array([SQRT_HALF, -SQRT_HALF], dtype=complex),
    CanonicalState.PLUS_Y: np.array([SQRT_HALF, 1j * SQRT_HALF], dtype=complex),
    CanonicalState.MINUS_Y: np.array([SQRT_HALF, -1j * SQRT_HALF], dtype=complex),
}

CARRIER_STATES = (CanonicalState.ZERO, CanonicalState.ONE, CanonicalState.PLUS, CanonicalState.MINUS)
DECOY_STATES = (CanonicalState.PLUS, CanonicalState.MINUS, CanonicalState.PLUS_Y, CanonicalState.MINUS_Y)


class Basis(enum.Enum):
    Z = "Z"
    X = "X"
    Y = "Y"

    @property
    def states(self) -> tuple[CanonicalState, CanonicalState]:
        return _BASIS_STATES[self]

    def eigenvector(self, outcome: int) -> np.ndarray:
        return _CANONICAL_AMPS[_BASIS_STATES[self][outcome]]


_BASIS_STATES = {
    Basis.Z: (CanonicalState.ZERO, CanonicalState.ONE),
    Basis.X: (CanonicalState.PLUS, CanonicalState.MINUS),
    Basis.Y: (CanonicalState.PLUS_Y, CanonicalState.MINUS_Y),
}
_STATE_BASIS = {s: b for b, pair in _BASIS_STATES.items() for s in pair}
_STATE_OUTCOME = {s: k for pair in _BASIS_STATES.values() for k, s in enumerate(pair)}
_CANONICAL_VECTORS = {s: StateVector(a, check=False) for s, a in _CANONICAL_AMPS.items()}


@dataclass(frozen=True, eq=False)
class Gate:
    label: str
    matrix: np.ndarray

    @property
    def n_qubits(self) -> int:
        return self.matrix.shape[0].bit_length() - 1


I = Gate("I", np.eye(2, dtype=complex))
# i*sigma_y = |0><1| - |1><0|
ISIGMA_Y = Gate("ISigmaY", np.array([[0, 1], [-1, 0]], dtype=complex))
CNOT = Gate(
    "CNOT",
    np.array([[1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0]], dtype=complex),
)


class BellLabel(enum.Enum):
    """Bell states keyed by the two classical bits they encode."""

    PSI_PLUS = "00"
    PSI_MINUS = "01"
    PHI_PLUS = "10"
    PHI_MINUS = "11"

    @property
    def code(self) -> str:
        return self.value

    @property
    def text(self) -> str:
        return _BELL_TEXT[self]

    @classmethod
    def from_code(cls, code: str) -> BellLabel:
        try:
            return cls(code)
        except ValueError:
            raise QuantumError(f"Bell code must be a 2-bit string, got {code!r}") from None

    @classmethod
    def parse(cls, text: str) -> BellLabel:
        for label, name in _BELL_TEXT.items():
            if name == text:
                return label
        raise QuantumError(f"unknown Bell label {text!r}")


_BELL_TEXT = {
    BellLabel.PSI_PLUS: "psi+",
    BellLabel.PSI_MINUS: "psi-",
    BellLabel.PHI_PLUS: "phi+",
    BellLabel.PHI_MINUS: "phi-",
}

# psi+- = (|00> +- |11>)/sqrt2, phi+- = (|01> +- |10>)/sqrt2
_BELL_AMPS = {
    BellLabel.PSI_PLUS: np.array([SQRT_HALF, 0, 0, SQRT_HALF], dtype=complex),
    BellLabel.PSI_MINUS: np.array([SQRT_HALF, 0, 0, -SQRT_HALF], dtype=complex),
    BellLabel.PHI_PLUS: np.array([0, SQRT_HALF, SQRT_HALF, 0], dtype=complex),
    BellLabel.PHI_MINUS: np.array([0, SQRT_HALF, -SQRT_HALF, 0], dtype=complex),
}


def _same_size(a: StateVector, b: StateVector) -> None:
    if a.n_qubits != b.n_qubits:
        raise QuantumError(f"dimension mismatch: {a.n_qubits} vs {b.n_qubits} qubits")


def _check_index(sv: StateVector, index: int) -> None:
    if not 0 <= index < sv.n_qubits:
        raise QuantumError(f"qubit index {index} out of range for {sv.n_qubits} qubits")


def from_states(states: Sequence[CanonicalState]) -> StateVector:
    """Tensor product of canonical single-qubit states, in sequence order."""
    if not states:
        raise QuantumError("cannot build a register from an empty state sequence")
    amps = _CANONICAL_AMPS[states[0]]
    for s in states[1:]:
        amps = np.multiply.outer(amps, _CANONICAL_AMPS[s]).reshape(-1)
    return StateVector(amps, check=False)


def _leading(axes: Sequence[int]) -> bool:
    return all(a == i for i, a in enumerate(axes))


def _front(sv: StateVector, axes: Sequence[int]) -> np.ndarray:
    """View with ``axes`` moved to the front, flattened to (2**k, rest)."""
    k = len(axes)
    if _leading(axes):
        return sv.amplitudes.reshape(1 << k, -1)
    return np.moveaxis(sv.tensor(), axes, range(k)).reshape(1 << k, -1)


def _back(t: np.ndarray, axes: Sequence[int], n: int) -> StateVector:
    if _leading(axes):
        return StateVector(t.reshape(-1), check=False)
    k = len(axes)
    return StateVector(np.moveaxis(t.reshape((2,) * n), range(k), axes).reshape(-1), check=False)


def _apply_matrix(sv: StateVector, matrix: np.ndarray, axes: Sequence[int]) -> StateVector:
    return _back(matrix @ _front(sv, axes), axes, sv.n_qubits)


def apply_single(sv: StateVector, gate: Gate, index: int) -> StateVector:
    if gate.n_qubits != 1:
        raise QuantumError(f"{gate.label} is not a single-qubit gate")
    _check_index(sv, index)
    return _apply_matrix(sv, gate.matrix, [index])


def apply_cnot(sv: StateVector, control: int, target: int) -> StateVector:
    _check_index(sv, control)
    _check_index(sv, target)
    if control == target:
        raise QuantumError("CNOT control and target must differ")
    return _apply_matrix(sv, CNOT.matrix, [control, target])


def _project(sv: StateVector, axes: Sequence[int], vector: np.ndarray) -> tuple[float, np.ndarray]:
    """Contract ``<vector|`` against ``axes``; return (probability, unnormalized remainder)."""
    rest = vector.conj() @ _front(sv, axes)
    return float(np.vdot(rest, rest).real), rest


def _sample(probs: Sequence[float], rng: np.random.Generator) -> int:
    r = rng.random() * sum(probs)
    acc = 0.0
    last = max(i for i, p in enumerate(probs) if p > _PROB_EPS)
    for i, p in enumerate(probs):
        if p <= _PROB_EPS:
            continue
        acc += p
        if r < acc or i == last:
            return i
    raise AssertionError("unreachable")


def _reassemble(vector: np.ndarray, rest: np.ndarray, axes: Sequence[int], n: int) -> StateVector:
    rest = rest / np.sqrt(np.vdot(rest, rest).real)
    return _back(np.multiply.outer(vector, rest), axes, n)


def measure_split(
    sv: StateVector, index: int, basis: Basis, rng: np.random.Generator
) -> tuple[int, StateVector | None]:
    """Measure one qubit and return (outcome, state of the other qubits).

    After a projective single-qubit measurement the register factorizes, so the
    measured qubit is simply ``basis.eigenvector(outcome)``.
    """
    _check_index(sv, index)
    parts = [_project(sv, [index], basis.eigenvector(o)) for o in (0, 1)]
    outcome = _sample([p for p, _ in parts], rng)
    if sv.n_qubits == 1:
        return outcome, None
    rest = parts[outcome][1]
    return outcome, StateVector(rest / np.sqrt(parts[outcome][0]), check=False)


def measure(
    sv: StateVector, index: int, basis: Basis, rng: np.random.Generator
) -> tuple[int, StateVector]:
    """Projective measurement of one qubit; returns the outcome and collapsed register."""
    _check_index(sv, index)
    vecs = [basis.eigenvector(o) for o in (0, 1)]
    parts = [_project(sv, [index], v) for v in vecs]
    outcome = _sample([p for p, _ in parts], rng)
    return outcome, _reassemble(vecs[outcome], parts[outcome][1], [index], sv.n_qubits)


def outcome_probabilities(sv: StateVector, index: int, basis: Basis) -> tuple[float, float]:
    _check_index(sv, index)
    p0 = _project(sv, [index], basis.eigenvector(0))[0]
    p1 = _project(sv, [index], basis.eigenvector(1))[0]
    return p0, p1


def prepare_bell(label: BellLabel) -> StateVector:
    return StateVector(_BELL_AMPS[label], check=False)


def bell_vector(label: BellLabel) -> np.ndarray:
    return _BELL_AMPS[label]


def bell_probabilities(sv: StateVector, i: int, j: int) -> dict[BellLabel, float]:
    _check_pair(sv, i, j)
    return {lab: _project(sv, [i, j], vec)[0] for lab, vec in _BELL_AMPS.items()}


def _check_pair(sv: StateVector, i: int, j: int) -> None:
    _check_index(sv, i)
    _check_index(sv, j)
    if i == j:
        raise QuantumError("Bell measurement needs two distinct qubits")


def bell_measure_split(
    sv: StateVector, i: int, j: int, rng: np.random.Generator
) -> tuple[BellLabel, StateVector | None]:
    _check_pair(sv, i, j)
    labels = list(_BELL_AMPS)
    parts = [_project(sv, [i, j], _BELL_AMPS[lab]) for lab in labels]
    k = _sample([p for p, _ in parts], rng)
    if sv.n_qubits == 2:
        return labels[k], None
    return labels[k], StateVector(parts[k][1] / np.sqrt(parts[k][0]), check=False)


def bell_measure(
    sv: StateVector, i: int, j: int, rng: np.random.Generator
) -> tuple[BellLabel, StateVector]:
    """Project qubits (i, j) onto the Bell basis."""
    _check_pair(sv, i, j)
    labels = list(_BELL_AMPS)
    parts = [_project(sv, [i, j], _BELL_AMPS[lab]) for lab in labels]
    k = _sample([p for p, _ in parts], rng)
    return labels[k], _reassemble(_BELL_AMPS[labels[k]], parts[k][1], [i, j], sv.n_qubits)


def equal_up_to_phase(a: StateVector, b: StateVector, tol: float = 1e-9) -> bool:
    return abs(a.inner(b)) >= 1 - tol


def canonical_phase(sv: StateVector) -> StateVector:
    """Rotate the global phase so the first nonzero amplitude is real and positive."""
    amps = sv.amplitudes
    nz = np.flatnonzero(np.abs(amps) > 1e-12)
    lead = amps[nz[0]]
    return StateVector(amps * (abs(lead) / lead), check=False)


def serialize_state(sv: StateVector) -> list[list[float]]:
    amps = canonical_phase(sv).amplitudes
    # round away float dust so equal states serialize to equal text
    return [[_clean(z.real), _clean(z.imag)] for z in amps]


def _clean(x: float) -> float:
    r = round(float(x), 12)
    return 0.0 if r == 0 else r


def identify(sv: StateVector, tol: float = 1e-9) -> CanonicalState | None:
    """Canonical label of a single-qubit state, or None if it is not one of the six."""
    if sv.n_qubits != 1:
        return None
    for state, amps in _CANONICAL_AMPS.items():
        if abs(np.vdot(amps, sv.amplitudes)) >= 1 - tol:
            return state
    return None


def apply_permutation(sv: StateVector, order: Sequence[int]) -> StateVector:
    """Reorder qubits so that new qubit ``i`` is old qubit ``order[i]``."""
    if sorted(order) != list(range(sv.n_qubits)):
        raise QuantumError(f"{list(order)} is not a permutation of {sv.n_qubits} qubits")
    return StateVector(np.transpose(sv.tensor(), order).reshape(-1), check=False)


class QuantumSystem:
    """All qubits of one simulated run, stored as a product of independent factors.

    Qubits are integer handles. Two factors are merged only when a gate or Bell
    measurement couples them, and measurements split measured qubits back out,
    so the largest factor stays a few qubits wide even when an adversary keeps
    ancillas entangled with every qubit in transit.
    """

    def __init__(self) -> None:
        self._factors: dict[int, tuple[list[int], StateVector]] = {}
        self._home: dict[int, int] = {}
        self._next_qubit = 0
        self._next_factor = 0

    def __len__(self) -> int:
        return self._next_qubit

    def _new_factor(self, qubits: list[int], sv: StateVector) -> None:
        fid = self._next_factor
        self._next_factor += 1
        self._factors[fid] = (qubits, sv)
        for q in qubits:
            self._home[q] = fid

    def _new_qubits(self, count: int) -> list[int]:
        start = self._next_qubit
        self._next_qubit += count
        return list(range(start, start + count))

    def prepare(self, state: CanonicalState) -> int:
        (q,) = self._new_qubits(1)
        self._new_factor([q], state.vector)
        return q

    def prepare_pair(self, label: BellLabel) -> tuple[int, int]:
        a, b = self._new_qubits(2)
        self._new_factor([a, b], prepare_bell(label))
        return a, b

    def _locate(self, q: int) -> tuple[int, list[int], StateVector]:
        try:
            fid = self._home[q]
        except KeyError:
            raise QuantumError(f"unknown qubit {q}") from None
        qubits, sv = self._factors[fid]
        return fid, qubits, sv

    def _merge(self, a: int, b: int) -> tuple[int, list[int], StateVector]:
        fa, qa, sa = self._locate(a)
        fb, qb, sb = self._locate(b)
        if fa == fb:
            return fa, qa, sa
        del self._factors[fb]
        merged = qa + qb
        sv = sa.kron(sb)
        self._factors[fa] = (merged, sv)
        for q in qb:
            self._home[q] = fa
        return fa, merged, sv

    def apply(self, gate: Gate, q: int) -> None:
        fid, qubits, sv = self._locate(q)
        self._factors[fid] = (qubits, apply_single(sv, gate, qubits.index(q)))

    def cnot(self, control: int, target: int) -> None:
        if control == target:
            raise QuantumError("CNOT control and target must differ")
        fid, qubits, sv = self._merge(control, target)
        self._factors[fid] = (qubits, apply_cnot(sv, qubits.index(control), qubits.index(target)))

    def _split_off(self, fid: int, measured: list[int], state: StateVector, rest: StateVector | None) -> None:
        qubits, _ = self._factors.pop(fid)
        self._new_factor(measured, state)
        if rest is not None:
            self._new_factor([q for q in qubits if q not in measured], rest)

    def measure(self, q: int, basis: Basis, rng: np.random.Generator) -> int:
        fid, qubits, sv = self._locate(q)
        outcome, rest = measure_split(sv, qubits.index(q), basis, rng)
        self._split_off(fid, [q], basis.states[outcome].vector, rest)
        return outcome

    def bell_measure(self, a: int, b: int, rng: np.random.Generator) -> BellLabel:
        if a == b:
            raise QuantumError("Bell measurement needs two distinct qubits")
        fid, qubits, sv = self._merge(a, b)
        label, rest = bell_measure_split(sv, qubits.index(a), qubits.index(b), rng)
        self._split_off(fid, [a, b], prepare_bell(label), rest)
        return label

    def state(self, qubits: Sequence[int]) -> StateVector:
        """Joint state of ``qubits`` in the given order.

        The qubits must not be entangled with anything outside the list.
        """
        wanted = list(qubits)
        fids: list[int] = []
        for q in wanted:
            fid = self._locate(q)[0]
            if fid not in fids:
                fids.append(fid)
        order: list[int] = []
        sv: StateVector | None = None
        for fid in fids:
            fq, fsv = self._factors[fid]
            order.extend(fq)
            sv = fsv if sv is None else sv.kron(fsv)
        if sorted(order) != sorted(wanted):
            stray = sorted(set(order) - set(wanted))
            raise QuantumError(f"qubits {wanted} are entangled with qubits {stray} outside the selection")
        assert sv is not None
        return apply_permutation(sv, [order.index(q) for q in wanted])

    def label(self, q: int) -> CanonicalState | None:
        """Canonical label of ``q`` if it is unentangled and one of the six states."""
        _, qubits, sv = self._locate(q)
        if len(qubits) != 1:
            return None
        return identify(sv)
