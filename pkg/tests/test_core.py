"""Scoring and aggregation: worked vectors, bounds, and properties."""

import random
from dataclasses import replace

import pytest

from frameguard.core import (
    AggregateScore,
    EmptySampleError,
    RoundResult,
    ScoreParams,
    ValidationError,
    aggregate_scores,
    score_round,
    validate_result,
)


def rr(hp_self, hp_opp, elapsed, round_id=1, sent=0, processed=0, skipped=0):
    return RoundResult(
        round_id=round_id,
        hp_self=hp_self,
        hp_opp=hp_opp,
        elapsed_frames=elapsed,
        frames_sent=sent,
        frames_processed=processed,
        frames_skipped=skipped,
    )


def test_perfect_instant_win():
    b = score_round(rr(400, 0, 0))
    assert b == (1.0, 1.0, 1, 1.0, 1.0)


def test_full_length_total_loss():
    b = score_round(rr(0, 400, 3600))
    assert b.hp1 == 0.0
    assert b.hp2 == 0.0
    assert b.w == 0
    assert b.t == 1.0
    assert b.score == 0.25


def test_hand_worked_midpoint():
    b = score_round(rr(200, 100, 1800))
    assert abs(b.hp1 - 0.5) < 1e-12
    assert abs(b.hp2 - 0.75) < 1e-12
    assert b.w == 1
    assert abs(b.t - 0.5) < 1e-12
    assert abs(b.score - 0.6875) < 1e-12


def test_skip_free_duel_vector():
    # the score the reference duel produces for a clean 480-frame win;
    # 0.831667 is this value shown at six decimals
    b = score_round(rr(184, 0, 480))
    exact = (184 / 400 + 1.0 + 1.0 + (1.0 - 480 / 3600)) / 4.0
    assert abs(b.score - exact) < 1e-12
    assert round(b.score, 6) == 0.831667
    assert abs(b.hp1 - 0.46) < 1e-12
    assert round(b.t, 6) == 0.866667


def test_tie_counts_as_loss():
    b = score_round(rr(250, 250, 3600))
    assert b.w == 0
    assert b.t == 1.0


@pytest.mark.parametrize(
    "field,value,bound",
    [
        ("hp_self", -1, "hp_self"),
        ("hp_self", 401, "hp_self"),
        ("hp_opp", 500, "hp_opp"),
        ("hp_opp", -2, "hp_opp"),
        ("elapsed_frames", 3601, "elapsed_frames"),
        ("elapsed_frames", -1, "elapsed_frames"),
    ],
)
def test_out_of_range_fields_name_the_bound(field, value, bound):
    base = dict(
        round_id=1,
        hp_self=100,
        hp_opp=100,
        elapsed_frames=100,
        frames_sent=0,
        frames_processed=0,
        frames_skipped=0,
    )
    base[field] = value
    with pytest.raises(ValidationError, match=bound):
        score_round(RoundResult(**base))


def test_round_id_must_be_positive():
    with pytest.raises(ValidationError, match="round_id"):
        score_round(rr(100, 100, 100, round_id=0))


def test_frame_accounting_cannot_exceed_sent():
    with pytest.raises(ValidationError, match="frames_sent"):
        score_round(rr(100, 100, 100, sent=10, processed=8, skipped=3))


def test_negative_frame_counters_rejected():
    with pytest.raises(ValidationError, match="frames_skipped"):
        validate_result(rr(100, 100, 100, sent=5, processed=5, skipped=-1), ScoreParams())


def test_score_params_validation():
    with pytest.raises(ValidationError, match="hp_total"):
        ScoreParams(hp_total=0)
    with pytest.raises(ValidationError, match="time_total"):
        ScoreParams(time_total=-5)


def test_custom_params_change_normalization():
    b = score_round(rr(50, 0, 30), ScoreParams(hp_total=100, time_total=60))
    assert abs(b.hp1 - 0.5) < 1e-12
    assert abs(b.t - 0.5) < 1e-12


def test_aggregate_constant_rounds():
    # hp_self=0, hp_opp=0, full length: a tie, and every term pair
    # cancels to score 0.5
    rounds = [rr(0, 0, 3600, round_id=i) for i in range(1, 9)]
    assert aggregate_scores(rounds, warmup_rounds=6) == AggregateScore(0.5, 0.0, 2)


def test_aggregate_two_point_sample():
    rounds = [rr(400, 0, 0, round_id=7), rr(0, 400, 0, round_id=8)]
    agg = aggregate_scores(rounds, warmup_rounds=6)
    assert agg.mean == 0.5
    assert agg.stddev == 0.5
    assert agg.n == 2


def test_aggregate_full_experiment_shape():
    rounds = [rr(200, 100, 1800, round_id=i) for i in range(1, 97)]
    agg = aggregate_scores(rounds, warmup_rounds=6)
    assert agg.n == 90
    assert abs(agg.mean - 0.6875) < 1e-12
    assert agg.stddev == 0.0


def test_aggregate_discards_by_round_id_not_position():
    # ordering in the sequence must not matter, only the ids
    rounds = [rr(400, 0, 0, round_id=8), rr(0, 400, 3600, round_id=3)]
    agg = aggregate_scores(rounds, warmup_rounds=6)
    assert agg == AggregateScore(1.0, 0.0, 1)


def test_aggregate_empty_after_warmup():
    rounds = [rr(100, 100, 100, round_id=i) for i in range(1, 7)]
    with pytest.raises(EmptySampleError):
        aggregate_scores(rounds, warmup_rounds=6)
    with pytest.raises(ValidationError):
        aggregate_scores(rounds, warmup_rounds=-1)


def _random_valid(rng, params=ScoreParams()):
    sent = rng.randrange(0, params.time_total + 1)
    processed = rng.randrange(0, sent + 1) if sent else 0
    skipped = rng.randrange(0, sent - processed + 1) if sent else 0
    return RoundResult(
        round_id=rng.randrange(1, 200),
        hp_self=rng.randrange(0, params.hp_total + 1),
        hp_opp=rng.randrange(0, params.hp_total + 1),
        elapsed_frames=rng.randrange(0, params.time_total + 1),
        frames_sent=sent,
        frames_processed=processed,
        frames_skipped=skipped,
    )


def test_score_range_and_averaging_identity():
    rng = random.Random(0xF1A6)
    for _ in range(500):
        b = score_round(_random_valid(rng))
        for term in (b.hp1, b.hp2, b.w, b.t, b.score):
            assert 0.0 <= term <= 1.0
        assert abs(4.0 * b.score - (b.hp1 + b.hp2 + b.w + b.t)) < 1e-12


def test_hp_monotonicity_with_w_flip():
    rng = random.Random(2024)
    for _ in range(500):
        r = _random_valid(rng)
        base = score_round(r).score
        if r.hp_self < 400:
            bump = rng.randrange(1, 400 - r.hp_self + 1)
            up = replace(r, hp_self=r.hp_self + bump)
            assert score_round(up).score >= base
        if r.hp_opp < 400:
            bump = rng.randrange(1, 400 - r.hp_opp + 1)
            up = replace(r, hp_opp=r.hp_opp + bump)
            assert score_round(up).score <= base


def test_time_direction():
    # wins reward speed, losses reward lasting
    rng = random.Random(77)
    for _ in range(200):
        e1 = rng.randrange(0, 3600)
        e2 = rng.randrange(e1 + 1, 3601)
        win_fast = score_round(rr(300, 100, e1)).score
        win_slow = score_round(rr(300, 100, e2)).score
        assert win_fast > win_slow
        lose_fast = score_round(rr(100, 300, e1)).score
        lose_slow = score_round(rr(100, 300, e2)).score
        assert lose_slow > lose_fast


def test_random_ties_always_lose():
    rng = random.Random(5)
    for _ in range(100):
        hp = rng.randrange(0, 401)
        assert score_round(rr(hp, hp, 1000)).w == 0
