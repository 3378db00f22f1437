"""Round scoring and aggregation.

A finished round is summarized by the remaining health of both fighters,
how many frames the round lasted, and the frame-delivery accounting for
the evaluated agent. Four normalized terms are averaged into a single
score in [0, 1]:

    hp1   = hp_self / hp_total            health the agent kept
    hp2   = 1 - hp_opp / hp_total         health the agent removed
    w     = 1 if hp_self > hp_opp else 0  win flag; a tie counts as a loss
    t     = w * (1 - e / T) + (1 - w) * (e / T)
    score = (hp1 + hp2 + w + t) / 4

where e is elapsed_frames and T is time_total. The time term rewards
winning quickly and losing slowly. Everything in this module is a pure
function over plain data; aggregation uses the population standard
deviation since the retained rounds are the entire population of
interest, not a sample from a larger one.
"""

from __future__ import annotations

import statistics
from dataclasses import dataclass
from typing import NamedTuple, Optional, Sequence


class ValidationError(ValueError):
    """A round result violates the bounds set by its score parameters."""


class EmptySampleError(ValueError):
    """No rounds remain after the warmup discard."""


@dataclass(frozen=True)
class ScoreParams:
    """Normalization constants for scoring.

    hp_total is each fighter's starting health; time_total is the frame
    count of a full-length round.
    """

    hp_total: int = 400
    time_total: int = 3600

    def __post_init__(self):
        if self.hp_total <= 0:
            raise ValidationError(f"hp_total={self.hp_total} must be positive")
        if self.time_total <= 0:
            raise ValidationError(f"time_total={self.time_total} must be positive")


@dataclass(frozen=True)
class RoundResult:
    """One finished round as reported by the match server.

    frames_sent counts frames emitted to the agent, frames_processed the
    ones it acted on, frames_skipped the ones dropped because a newer
    frame had already arrived. mean_overhead_us is the server-measured
    mean transport overhead for the round; it is absent in pure-virtual
    runs, which move no bytes.
    """

    round_id: int
    hp_self: int
    hp_opp: int
    elapsed_frames: int
    frames_sent: int
    frames_processed: int
    frames_skipped: int
    mean_overhead_us: Optional[float] = None


class ScoreBreakdown(NamedTuple):
    hp1: float
    hp2: float
    w: int
    t: float
    score: float


class AggregateScore(NamedTuple):
    mean: float
    stddev: float
    n: int


def validate_result(result: RoundResult, params: ScoreParams) -> None:
    """Raise ValidationError naming the violated bound, if any.

    Checks the range invariants: HP within [0, hp_total], elapsed within
    [0, time_total], and processed + skipped never exceeding sent.
    """
    if result.round_id < 1:
        raise ValidationError(f"round_id={result.round_id} outside [1, ...]")
    if not 0 <= result.hp_self <= params.hp_total:
        raise ValidationError(
            f"hp_self={result.hp_self} outside [0, {params.hp_total}]"
        )
    if not 0 <= result.hp_opp <= params.hp_total:
        raise ValidationError(
            f"hp_opp={result.hp_opp} outside [0, {params.hp_total}]"
        )
    if not 0 <= result.elapsed_frames <= params.time_total:
        raise ValidationError(
            f"elapsed_frames={result.elapsed_frames} outside [0, {params.time_total}]"
        )
    for name in ("frames_sent", "frames_processed", "frames_skipped"):
        if getattr(result, name) < 0:
            raise ValidationError(f"{name}={getattr(result, name)} outside [0, ...]")
    if result.frames_processed + result.frames_skipped > result.frames_sent:
        raise ValidationError(
            "frames_processed + frames_skipped = "
            f"{result.frames_processed + result.frames_skipped} exceeds "
            f"frames_sent={result.frames_sent}"
        )


def score_round(result: RoundResult, params: ScoreParams = ScoreParams()) -> ScoreBreakdown:
    """Score one round. Raises ValidationError on out-of-range fields."""
    validate_result(result, params)
    hp1 = result.hp_self / params.hp_total
    hp2 = 1.0 - result.hp_opp / params.hp_total
    w = 1 if result.hp_self > result.hp_opp else 0
    frac = result.elapsed_frames / params.time_total
    t = (1.0 - frac) if w else frac
    score = (hp1 + hp2 + w + t) / 4.0
    return ScoreBreakdown(hp1, hp2, w, t, score)


def aggregate_scores(
    results: Sequence[RoundResult],
    params: ScoreParams = ScoreParams(),
    warmup_rounds: int = 6,
) -> AggregateScore:
    """Mean and population stddev of scores for rounds past the warmup.

    Rounds with round_id <= warmup_rounds are discarded; they carry
    process start-up noise (imports, JITs, cold caches) that is not part
    of steady-state behaviour. Raises EmptySampleError if nothing is
    retained.
    """
    if warmup_rounds < 0:
        raise ValidationError(f"warmup_rounds={warmup_rounds} outside [0, ...]")
    scores = [
        score_round(r, params).score for r in results if r.round_id > warmup_rounds
    ]
    if not scores:
        raise EmptySampleError(
            f"no rounds retained after discarding round_id <= {warmup_rounds}"
        )
    return AggregateScore(statistics.fmean(scores), statistics.pstdev(scores), len(scores))
