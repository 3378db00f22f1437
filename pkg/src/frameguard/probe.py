"""Transport-overhead statistics and delay calibration.

The probe methodology: run a match against a sandbox client that does no
work and reports zero processing time, so the server-measured round trip
of every frame is pure transport overhead (sockets, serialization,
runtime dispatch). Per-round stats are summarized with a nearest-rank
percentile, early rounds are discarded as warmup, and the surviving
round means are averaged into one stable mean per client stack.

calibrate_delay() turns two such stable means into the delay to inject
into the faster client: the gap, rounded up to the granularity the
injection mechanism can actually express. Rounding up is deliberate;
under-compensating would leave the faster stack with a residual edge.

Functions here accept any sample objects with `round_id` and
`overhead_us` attributes (the server's FrameSample qualifies) so the
module stays import-light and testable with stubs.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from fractions import Fraction
from statistics import fmean
from typing import Optional, Sequence

from frameguard.core import EmptySampleError


class SwappedInputsError(ValueError):
    """The fast mean is larger than the slow mean."""


@dataclass(frozen=True)
class RoundLatency:
    """Overhead summary of one round's samples."""

    round_id: int
    n: int
    mean_overhead_us: float
    p50_us: int
    p99_us: int


@dataclass(frozen=True)
class CalibrationResult:
    mean_fast_us: float
    mean_slow_us: float
    gap_us: float
    granularity_us: int
    delay_us: int


def percentile_nearest_rank(sorted_values: Sequence, q: int):
    """Nearest-rank percentile: the ceil(q*n/100)-th smallest value."""
    n = len(sorted_values)
    if n == 0:
        raise EmptySampleError("percentile of an empty sequence")
    if not 0 < q <= 100:
        raise ValueError(f"q={q} outside (0, 100]")
    rank = -(-q * n // 100)  # integer ceiling
    return sorted_values[rank - 1]


def round_stats(samples: Sequence) -> RoundLatency:
    """Summarize the samples of a single round."""
    if not samples:
        raise EmptySampleError("round_stats on no samples")
    round_id = samples[0].round_id
    if any(s.round_id != round_id for s in samples):
        raise ValueError("round_stats got samples from more than one round")
    overheads = sorted(s.overhead_us for s in samples)
    return RoundLatency(
        round_id=round_id,
        n=len(overheads),
        mean_overhead_us=fmean(overheads),
        p50_us=percentile_nearest_rank(overheads, 50),
        p99_us=percentile_nearest_rank(overheads, 99),
    )


def rounds_from_samples(samples: Sequence) -> list[RoundLatency]:
    """Group a whole match's samples by round, in first-seen order."""
    by_round: dict[int, list] = {}
    for s in samples:
        by_round.setdefault(s.round_id, []).append(s)
    return [round_stats(group) for group in by_round.values()]


def stable_mean(rounds: Sequence[RoundLatency], warmup_rounds: int = 6) -> float:
    """Unweighted mean of per-round overhead means past the warmup.

    Rounds are the unit of replication, so each retained round counts
    once regardless of how many samples it holds.
    """
    retained = [r.mean_overhead_us for r in rounds if r.round_id > warmup_rounds]
    if not retained:
        raise EmptySampleError(
            f"no probe rounds retained after discarding round_id <= {warmup_rounds}"
        )
    return fmean(retained)


def stability_warning(
    rounds: Sequence[RoundLatency], warmup_rounds: int = 6
) -> Optional[str]:
    """Advisory check: post-warmup round means should sit close together.

    Returns a warning string when the spread (max - min) exceeds 20% of
    the stable mean, which usually means the host was not idle or the
    warmup was too short. None when the probe looks steady.
    """
    retained = [r.mean_overhead_us for r in rounds if r.round_id > warmup_rounds]
    if not retained:
        return None
    spread = max(retained) - min(retained)
    mean = fmean(retained)
    if spread > 0.2 * abs(mean):
        return (
            f"post-warmup round means spread {spread:.1f} us exceeds 20% of "
            f"the stable mean {mean:.1f} us; host may not have been idle"
        )
    return None


def calibrate_delay(
    mean_fast_us: float, mean_slow_us: float, granularity_us: int = 50
) -> CalibrationResult:
    """Delay to inject into the fast client to equalize transport cost.

    The gap is rounded up to the next multiple of granularity_us (an
    exact multiple stays put). A negative gap raises SwappedInputsError
    telling the caller which mean was larger; the caller decides
    direction, this function never guesses.
    """
    if granularity_us < 1:
        raise ValueError(f"granularity_us={granularity_us} outside [1, ...]")
    gap = mean_slow_us - mean_fast_us
    if gap < 0:
        raise SwappedInputsError(
            f"slow mean {mean_slow_us} is smaller than fast mean {mean_fast_us}; "
            "inputs look swapped"
        )
    # Fraction keeps the ceiling exact for float gaps
    steps = -(-Fraction(gap) // granularity_us)
    return CalibrationResult(
        mean_fast_us=mean_fast_us,
        mean_slow_us=mean_slow_us,
        gap_us=gap,
        granularity_us=granularity_us,
        delay_us=int(steps) * granularity_us,
    )


PROBE_COLUMNS = ["round_id", "n", "mean_overhead_us", "p50_us", "p99_us"]


def write_round_latency_csv(path, rounds: Sequence[RoundLatency]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(PROBE_COLUMNS)
        for r in rounds:
            writer.writerow([r.round_id, r.n, repr(r.mean_overhead_us), r.p50_us, r.p99_us])


def read_round_latency_csv(path) -> list[RoundLatency]:
    out = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != PROBE_COLUMNS:
            raise ValueError(f"line 1: expected header {','.join(PROBE_COLUMNS)}")
        for lineno, row in enumerate(reader, start=2):
            try:
                out.append(
                    RoundLatency(int(row[0]), int(row[1]), float(row[2]), int(row[3]), int(row[4]))
                )
            except (ValueError, IndexError) as exc:
                raise ValueError(f"line {lineno}: malformed probe row: {exc}") from None
    return out
