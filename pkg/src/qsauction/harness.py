"""Seeded Monte Carlo over auction runs, consumption accounting and report files."""

from __future__ import annotations

import csv
import io
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, fields
from pathlib import Path
from statistics import NormalDist
from typing import Any, Iterable

import numpy as np

from .protocol import AuctionOutcome, Transcript, Verdict, run_auction
from .scenario import Scenario, example3_scenario

REPORT_SCHEMA = 1
CONFIDENCE = 0.99
_Z = NormalDist().inv_cdf(0.5 + CONFIDENCE / 2)


@dataclass(frozen=True)
class Rate:
    successes: int
    n: int

    @property
    def value(self) -> float | None:
        return self.successes / self.n if self.n else None

    @property
    def std_error(self) -> float | None:
        if not self.n:
            return None
        p = self.successes / self.n
        return math.sqrt(p * (1 - p) / self.n)

    def interval(self, z: float = _Z) -> tuple[float, float] | None:
        """Wilson score interval."""
        if not self.n:
            return None
        n, p = self.n, self.successes / self.n
        centre = (p + z * z / (2 * n)) / (1 + z * z / n)
        half = z * math.sqrt(p * (1 - p) / n + z * z / (4 * n * n)) / (1 + z * z / n)
        return max(0.0, centre - half), min(1.0, centre + half)


@dataclass(frozen=True)
class RunStatistics:
    scenario_hash: str
    seed: int
    trials: int
    completions: int = 0
    channel_aborts: int = 0
    post_confirmation_aborts: int = 0
    ties: int = 0
    decoys_checked: int = 0
    decoy_mismatches: int = 0
    tapped_decoys: int = 0
    tapped_mismatches: int = 0
    decoded_bits: int = 0
    decode_errors: int = 0
    conveying_runs: int = 0
    carrier_qubits: int = 0
    bid_bits: int = 0
    decoy_qubits: int = 0
    epr_qubits: int = 0
    epr_decoy_qubits: int = 0
    collusion_guesses: int = 0
    collusion_successes: int = 0

    def __post_init__(self) -> None:
        total = self.completions + self.channel_aborts + self.post_confirmation_aborts + self.ties
        if total != self.trials:
            raise ValueError(f"outcome counts sum to {total}, not {self.trials} trials")

    @property
    def rates(self) -> dict[str, Rate]:
        return {
            "completion_rate": Rate(self.completions, self.trials),
            "detection_rate": Rate(self.channel_aborts + self.post_confirmation_aborts, self.trials),
            "channel_abort_rate": Rate(self.channel_aborts, self.trials),
            "post_confirmation_abort_rate": Rate(self.post_confirmation_aborts, self.trials),
            "per_decoy_error_rate": Rate(self.decoy_mismatches, self.decoys_checked),
            "tapped_per_decoy_error_rate": Rate(self.tapped_mismatches, self.tapped_decoys),
            "decode_error_rate": Rate(self.decode_errors, self.decoded_bits),
            "collusion_success_rate": Rate(self.collusion_successes, self.collusion_guesses),
        }

    @property
    def detection_rate(self) -> float:
        return (self.channel_aborts + self.post_confirmation_aborts) / self.trials

    @property
    def xi(self) -> float | None:
        """Message-carrier qubits per conveyed bid bit."""
        return self.carrier_qubits / self.bid_bits if self.bid_bits else None

    def to_dict(self) -> dict[str, Any]:
        out: dict[str, Any] = {"schema_version": REPORT_SCHEMA, "confidence": CONFIDENCE}
        out.update(asdict(self))
        for name, rate in self.rates.items():
            ci = rate.interval()
            out[name] = rate.value
            out[f"{name}_n"] = rate.n
            out[f"{name}_ci99_low"] = ci[0] if ci else None
            out[f"{name}_ci99_high"] = ci[1] if ci else None
        out["xi"] = self.xi
        return out

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> RunStatistics:
        if data.get("schema_version") != REPORT_SCHEMA:
            raise ValueError(f"unsupported report schema {data.get('schema_version')!r}")
        return cls(**{f.name: data[f.name] for f in fields(cls)})


def aggregate(scenario_hash: str, seed: int, results: Iterable[tuple[AuctionOutcome, Transcript]]) -> RunStatistics:
    counts: dict[str, int] = {f.name: 0 for f in fields(RunStatistics) if f.name not in ("scenario_hash", "seed")}
    for outcome, transcript in results:
        counts["trials"] += 1
        key = {
            Verdict.COMPLETED: "completions",
            Verdict.ABORTED_CHANNEL_CHECK: "channel_aborts",
            Verdict.ABORTED_POST_CONFIRMATION: "post_confirmation_aborts",
            Verdict.TIE: "ties",
        }[outcome.verdict]
        counts[key] += 1
        for check in outcome.checks:
            counts["decoys_checked"] += check.decoys
            counts["decoy_mismatches"] += check.mismatches
            if check.tapped:
                counts["tapped_decoys"] += check.decoys
                counts["tapped_mismatches"] += check.mismatches
        counts["decoded_bits"] += outcome.decoded_bits
        counts["decode_errors"] += outcome.decode_errors
        usage = consumption_from_transcript(transcript)
        if usage["bid_bits"]:
            counts["conveying_runs"] += 1
            for k in ("carrier_qubits", "bid_bits", "decoy_qubits", "epr_qubits", "epr_decoy_qubits"):
                counts[k] += usage[k]
        if outcome.collusion_target is not None:
            truth = outcome.true_bids[outcome.collusion_target]
            counts["collusion_guesses"] += len(outcome.collusion_guesses)
            counts["collusion_successes"] += sum(g == truth for g in outcome.collusion_guesses.values())
    return RunStatistics(scenario_hash=scenario_hash, seed=seed, **counts)


def trial_seed(master: int, index: int) -> np.random.SeedSequence:
    """Seed for trial ``index``: a counter spawn key under the master seed."""
    return np.random.SeedSequence(master, spawn_key=(index,))


def _run_chunk(args: tuple[Scenario, int, int, int]) -> RunStatistics:
    scenario, master, start, stop = args
    results = (run_auction(scenario, trial_seed(master, i)) for i in range(start, stop))
    return aggregate(scenario.digest(), master, results)


def _merge(parts: list[RunStatistics]) -> RunStatistics:
    first = parts[0]
    counts = {
        f.name: sum(getattr(p, f.name) for p in parts)
        for f in fields(RunStatistics)
        if f.name not in ("scenario_hash", "seed")
    }
    return RunStatistics(scenario_hash=first.scenario_hash, seed=first.seed, **counts)


def run_trials(scenario: Scenario, trials: int, seed: int | None = None, workers: int = 1) -> RunStatistics:
    """Run ``trials`` independent auctions; trial ``i`` is replayable from ``trial_seed(seed, i)``."""
    if trials < 1:
        raise ValueError("trials must be at least 1")
    master = scenario.seed if seed is None else seed
    if workers <= 1 or trials < 2 * workers:
        return _run_chunk((scenario, master, 0, trials))
    bounds = np.linspace(0, trials, workers + 1).astype(int)
    jobs = [(scenario, master, int(a), int(b)) for a, b in zip(bounds[:-1], bounds[1:]) if b > a]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return _merge(list(pool.map(_run_chunk, jobs)))


def consumption_from_transcript(transcript: Transcript) -> dict[str, int]:
    """Count qubits by role from a run's quantum sends.

    Carriers are counted once, when Alice prepares and sends them; bid bits are
    counted when bidders return encoded carriers.
    """
    usage = dict.fromkeys(("carrier_qubits", "bid_bits", "decoy_qubits", "epr_qubits", "epr_decoy_qubits"), 0)
    for e in transcript.of_kind("qsend"):
        p = e.payload
        if p["content"] == "carriers":
            usage["carrier_qubits"] += p["carriers"]
            usage["decoy_qubits"] += p["decoys"]
        elif p["content"] == "encoded_carriers":
            usage["bid_bits"] += p["bid_bits"]
        elif p["content"] == "epr":
            usage["epr_qubits"] += p["epr_qubits"]
            usage["epr_decoy_qubits"] += p["decoys"]
    return usage


@dataclass(frozen=True)
class EfficiencyRow:
    protocol: str
    resource: str
    qubits_per_unit: int
    cbits_per_unit: int
    xi: float
    detection_state: str
    source: str


PROTOCOL_FAMILIES = ("GHZ-based", "EPR-based", "SinglePhoton")

_REFERENCE_ROWS = {
    "GHZ-based": ("GHZ state", 3, 2, "GHZ / EPR pairs / single photon", "reference"),
    "EPR-based": ("EPR pair", 2, 2, "EPR pairs / single photon", "reference"),
}


def efficiency_report(
    families: Iterable[str] = PROTOCOL_FAMILIES, scenario: Scenario | None = None
) -> tuple[list[EfficiencyRow], dict[str, int]]:
    """Quantum consumption table; the single-photon row is measured from an honest run.

    Returns the rows and the itemized qubit usage of that run, which keeps
    decoys and post-confirmation pairs out of the consumption rate.
    """
    scenario = scenario or example3_scenario()
    honest = scenario.with_changes(attack=None)
    _, transcript = run_auction(honest)
    usage = consumption_from_transcript(transcript)
    rows = []
    for family in families:
        if family in _REFERENCE_ROWS:
            resource, q, c, detect, source = _REFERENCE_ROWS[family]
            rows.append(EfficiencyRow(family, resource, q, c, q / c, detect, source))
        elif family == "SinglePhoton":
            if not usage["bid_bits"]:
                raise ValueError("honest run conveyed no bids; cannot measure consumption")
            xi = usage["carrier_qubits"] / usage["bid_bits"]
            rows.append(EfficiencyRow(family, "single photon", 1, 1, xi, "single photon", "measured"))
        else:
            raise ValueError(f"unknown protocol family {family!r}; expected one of {PROTOCOL_FAMILIES}")
    return rows, usage


def _csv_value(v: Any) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def emit_report(stats: RunStatistics, fmt: str, path: str | Path | None = None) -> str:
    """Render ``stats`` as JSON or CSV (one metric per row); write to ``path`` if given."""
    data = stats.to_dict()
    if fmt == "json":
        text = json.dumps(data, indent=2) + "\n"
    elif fmt == "csv":
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["metric", "value"])
        for k, v in data.items():
            writer.writerow([k, _csv_value(v)])
        text = buf.getvalue()
    else:
        raise ValueError(f"unknown report format {fmt!r}")
    if path is not None:
        Path(path).write_text(text)
    return text


def _parse_csv_value(text: str) -> Any:
    if text == "":
        return None
    for cast in (int, float):
        try:
            return cast(text)
        except ValueError:
            pass
    return text


def load_report(path: str | Path) -> RunStatistics:
    path = Path(path)
    text = path.read_text()
    if path.suffix == ".csv" or text.startswith("metric,value"):
        rows = list(csv.reader(io.StringIO(text)))[1:]
        data = {k: v if k == "scenario_hash" else _parse_csv_value(v) for k, v in rows}
    else:
        data = json.loads(text)
    return RunStatistics.from_dict(data)
