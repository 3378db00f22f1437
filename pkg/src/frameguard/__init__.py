"""frameguard: fairness-calibrated evaluation of out-of-process game agents.

Measures per-frame transport overhead between a frame-locked match
server and an agent client, calibrates an equalizing delay for the
faster stack, and scores matches where latency over the frame budget
costs the agent skipped frames.
"""

from frameguard.core import (
    AggregateScore,
    RoundResult,
    ScoreBreakdown,
    ScoreParams,
    aggregate_scores,
    score_round,
)
from frameguard.duel import KERNEL_BACKEND, DuelParams, run_duel_virtual
from frameguard.agents import VariantSpec, spin_until
from frameguard.probe import CalibrationResult, calibrate_delay, round_stats, stable_mean
from frameguard.protocol import decode, encode
from frameguard.server import MatchConfig, MatchOutcome, MatchServer, run_match

__version__ = "0.1.0"

__all__ = [
    "AggregateScore",
    "CalibrationResult",
    "DuelParams",
    "KERNEL_BACKEND",
    "MatchConfig",
    "MatchOutcome",
    "MatchServer",
    "RoundResult",
    "ScoreBreakdown",
    "ScoreParams",
    "VariantSpec",
    "__version__",
    "aggregate_scores",
    "calibrate_delay",
    "decode",
    "encode",
    "round_stats",
    "run_duel_virtual",
    "run_match",
    "score_round",
    "spin_until",
    "stable_mean",
]
