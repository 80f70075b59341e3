"""Elo engine for the pairwise human-preference study.

A ledger owns model ratings (initial 1500, K = 32, base 10 / scale 400),
an append-only match history, and pending match leases so concurrent
annotators never vote twice on the same scheduled match. Ratings are derived
state: replaying the history from the initial rating reproduces them exactly.
All mutations must be serialized through a single writer; the service layer
enforces that contract.
"""

from __future__ import annotations

import json
import os
import uuid
from dataclasses import dataclass
from enum import Enum
from pathlib import Path

import numpy as np

from .errors import (
    DuplicateMatchId,
    InvariantViolation,
    NoComparableSamples,
    NotEnoughModels,
    ParseError,
    StaleLease,
    UnknownModel,
)

INITIAL_RATING = 1500.0
DEFAULT_K_FACTOR = 32.0
DEFAULT_LEASE_TTL = 300.0
LEDGER_FILE_VERSION = 1


class Outcome(Enum):
    A_WINS = "a_wins"
    B_WINS = "b_wins"
    TIE = "tie"

    @property
    def score_a(self) -> float:
        return {Outcome.A_WINS: 1.0, Outcome.B_WINS: 0.0, Outcome.TIE: 0.5}[self]


@dataclass(frozen=True)
class MatchRecord:
    match_id: str
    model_a: str
    model_b: str
    sample_id: str
    outcome: Outcome
    annotator_id: str
    timestamp: float

    def __post_init__(self):
        if self.model_a == self.model_b:
            raise InvariantViolation(f"match {self.match_id} pits a model against itself")

    def to_dict(self) -> dict:
        return {
            "match_id": self.match_id,
            "model_a": self.model_a,
            "model_b": self.model_b,
            "sample_id": self.sample_id,
            "outcome": self.outcome.value,
            "annotator_id": self.annotator_id,
            "timestamp": self.timestamp,
        }

    @classmethod
    def from_dict(cls, d: dict) -> MatchRecord:
        return cls(
            match_id=d["match_id"],
            model_a=d["model_a"],
            model_b=d["model_b"],
            sample_id=d["sample_id"],
            outcome=Outcome(d["outcome"]),
            annotator_id=d["annotator_id"],
            timestamp=float(d["timestamp"]),
        )


@dataclass(frozen=True)
class MatchLease:
    match_id: str
    model_a: str
    model_b: str
    sample_id: str
    annotator_id: str
    expires_at: float


def expected_score(ra: float, rb: float) -> float:
    """Probability that the first player wins under the Elo model."""
    return 1.0 / (1.0 + 10.0 ** ((rb - ra) / 400.0))


class EloLedger:
    """Ratings, match history, and pending leases for one study."""

    def __init__(
        self,
        models: dict[str, frozenset[str]] | None = None,
        k_factor: float = DEFAULT_K_FACTOR,
        initial_rating: float = INITIAL_RATING,
    ):
        self.k_factor = float(k_factor)
        self.initial_rating = float(initial_rating)
        self.ratings: dict[str, float] = {}
        self.history: list[MatchRecord] = []
        self.pending: dict[str, MatchLease] = {}
        # samples on which each model has predictions, for scheduling
        self._availability: dict[str, frozenset[str]] = {}
        for model_id, samples in (models or {}).items():
            self.register_model(model_id, samples)

    def register_model(self, model_id: str, sample_ids=()) -> None:
        self.ratings.setdefault(model_id, self.initial_rating)
        merged = self._availability.get(model_id, frozenset()) | frozenset(sample_ids)
        self._availability[model_id] = merged

    @property
    def models(self) -> list[str]:
        return sorted(self.ratings)

    def matches_played(self, model_id: str) -> int:
        return sum(1 for r in self.history if model_id in (r.model_a, r.model_b))

    # --- mutations (single-writer) ---

    def record_outcome(self, record: MatchRecord, now: float | None = None) -> tuple[float, float]:
        """Apply one match result; returns the updated (rating_a, rating_b)."""
        if record.model_a not in self.ratings:
            raise UnknownModel(f"unknown model {record.model_a!r}")
        if record.model_b not in self.ratings:
            raise UnknownModel(f"unknown model {record.model_b!r}")
        if any(r.match_id == record.match_id for r in self.history):
            raise DuplicateMatchId(f"match {record.match_id!r} already recorded")
        lease = self.pending.get(record.match_id)
        if lease is not None:
            moment = record.timestamp if now is None else now
            if moment > lease.expires_at:
                raise StaleLease(f"lease for match {record.match_id!r} expired")
            del self.pending[record.match_id]
        ra = self.ratings[record.model_a]
        rb = self.ratings[record.model_b]
        s = record.outcome.score_a
        ra_new = ra + self.k_factor * (s - expected_score(ra, rb))
        rb_new = rb + self.k_factor * ((1.0 - s) - expected_score(rb, ra))
        self.ratings[record.model_a] = ra_new
        self.ratings[record.model_b] = rb_new
        self.history.append(record)
        return ra_new, rb_new

    def schedule_match(
        self,
        annotator_id: str,
        lease_ttl: float = DEFAULT_LEASE_TTL,
        rng_seed: int = 0,
        now: float = 0.0,
    ) -> MatchLease:
        """Lease a uniformly random model pair and a sample both can show.

        Deterministic given (seed, ledger state) up to the generated match id.
        Expired leases are purged first, returning their matches to the pool.
        """
        self.purge_expired(now)
        models = self.models
        if len(models) < 2:
            raise NotEnoughModels(f"scheduling needs >= 2 models, got {len(models)}")
        pairs = [
            (a, b)
            for i, a in enumerate(models)
            for b in models[i + 1 :]
            if self._availability.get(a, frozenset()) & self._availability.get(b, frozenset())
        ]
        if not pairs:
            raise NoComparableSamples("no model pair shares an evaluated sample")
        rng = np.random.default_rng(rng_seed)
        model_a, model_b = pairs[int(rng.integers(len(pairs)))]
        common = sorted(self._availability[model_a] & self._availability[model_b])
        sample_id = common[int(rng.integers(len(common)))]
        lease = MatchLease(
            match_id=uuid.uuid4().hex,
            model_a=model_a,
            model_b=model_b,
            sample_id=sample_id,
            annotator_id=annotator_id,
            expires_at=now + lease_ttl,
        )
        self.pending[lease.match_id] = lease
        return lease

    def purge_expired(self, now: float) -> None:
        expired = [mid for mid, lease in self.pending.items() if lease.expires_at < now]
        for mid in expired:
            del self.pending[mid]

    # --- derived state ---

    def leaderboard(self) -> list[tuple[str, float, int]]:
        """(model_id, rating, matches) sorted best-first, ties lexicographic."""
        played: dict[str, int] = {m: 0 for m in self.ratings}
        for r in self.history:
            played[r.model_a] += 1
            played[r.model_b] += 1
        rows = [(m, self.ratings[m], played[m]) for m in self.ratings]
        rows.sort(key=lambda row: (-row[1], row[0]))
        return rows

    def replay_ratings(self) -> dict[str, float]:
        """Recompute ratings from initial values by replaying the history."""
        fresh = EloLedger(k_factor=self.k_factor, initial_rating=self.initial_rating)
        for model_id in self.ratings:
            fresh.register_model(model_id)
        for record in self.history:
            fresh.record_outcome(record)
        return fresh.ratings


def simulate_study(
    true_skills: dict[str, float],
    rounds: int,
    k_factor: float = DEFAULT_K_FACTOR,
    rng_seed: int = 0,
) -> EloLedger:
    """Simulated annotator study: uniform random pairs, skill-driven outcomes.

    The simulated annotator prefers model A with the Elo win probability
    implied by the true skill gap. Fully deterministic under the seed.
    """
    if len(true_skills) < 2:
        raise NotEnoughModels(f"simulation needs >= 2 models, got {len(true_skills)}")
    if rounds < 1:
        raise InvariantViolation(f"rounds must be >= 1, got {rounds}")
    ledger = EloLedger(k_factor=k_factor)
    for model_id in sorted(true_skills):
        ledger.register_model(model_id, ("synthetic",))
    models = ledger.models
    pairs = [(a, b) for i, a in enumerate(models) for b in models[i + 1 :]]
    rng = np.random.default_rng(rng_seed)
    for round_idx in range(rounds):
        model_a, model_b = pairs[int(rng.integers(len(pairs)))]
        p_a = expected_score(true_skills[model_a], true_skills[model_b])
        outcome = Outcome.A_WINS if rng.random() < p_a else Outcome.B_WINS
        ledger.record_outcome(
            MatchRecord(
                match_id=f"sim-{round_idx:06d}",
                model_a=model_a,
                model_b=model_b,
                sample_id="synthetic",
                outcome=outcome,
                annotator_id="simulated",
                timestamp=float(round_idx),
            )
        )
    return ledger


# --- persistence: newline-delimited JSON, header line first ---------------------


def _header(ledger: EloLedger) -> dict:
    return {
        "version": LEDGER_FILE_VERSION,
        "k_factor": ledger.k_factor,
        "initial_rating": ledger.initial_rating,
        "models": ledger.models,
    }


def save_ledger(ledger: EloLedger, path: str | Path) -> None:
    """Write header + one record per line, atomically via temp file + rename."""
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "w") as fh:
        fh.write(json.dumps(_header(ledger), sort_keys=True) + "\n")
        for record in ledger.history:
            fh.write(json.dumps(record.to_dict(), sort_keys=True) + "\n")
        fh.flush()
        os.fsync(fh.fileno())
    tmp.replace(path)


def append_record(path: str | Path, record: MatchRecord) -> None:
    """Append one record line and flush; the file must already carry a header."""
    with open(path, "a") as fh:
        fh.write(json.dumps(record.to_dict(), sort_keys=True) + "\n")
        fh.flush()
        os.fsync(fh.fileno())


def load_ledger(path: str | Path) -> EloLedger:
    """Load a ledger file and rebuild ratings by replaying its records."""
    lines = Path(path).read_text().splitlines()
    if not lines:
        raise ParseError(f"ledger file {path} is empty")
    try:
        header = json.loads(lines[0])
    except json.JSONDecodeError as exc:
        raise ParseError(f"ledger header is not valid JSON: {exc}") from exc
    if header.get("version") != LEDGER_FILE_VERSION:
        raise ParseError(f"unsupported ledger version {header.get('version')!r}")
    ledger = EloLedger(
        k_factor=float(header.get("k_factor", DEFAULT_K_FACTOR)),
        initial_rating=float(header.get("initial_rating", INITIAL_RATING)),
    )
    for model_id in header.get("models", ()):
        ledger.register_model(model_id)
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        try:
            record = MatchRecord.from_dict(json.loads(line))
        except (json.JSONDecodeError, KeyError, ValueError) as exc:
            raise ParseError(f"bad ledger record at line {lineno}: {exc}") from exc
        for model_id in (record.model_a, record.model_b):
            ledger.register_model(model_id)
        ledger.record_outcome(record)
    return ledger
