"""Pure-Python duel pipeline kernel.

Simulates one round of the frame-locked loop on a virtual microsecond
clock: the server emits frame k at (k-1)*period, the client occupies
itself for a fixed time per frame, and whenever the client becomes free
it picks the newest pending frame, dropping older ones as skipped.

Event order at an instant t = k*period is fixed and is what makes the
simulation deterministic:

    1. the duel consumes frame k (KO ends the round before anything else)
    2. frame k+1 is emitted
    3. if the client is free and frames are pending, it picks now

Between instants the client can also become free and pick then. Two
consequences of the ordering: a frame still pending when its own apply
instant arrives can never be picked later (its successor is already
emitted and would be picked instead), so it is skipped; the round's
final frame has no successor, so the client always gets to it and it
counts as processed.

The compiled extension `_kernel.pyx` mirrors this function line for
line; keep the two in sync.
"""

from __future__ import annotations


def run_pipeline(
    total_us: int,
    period_us: int,
    hp_total: int,
    agent_hit_period: int,
    agent_hit_damage: int,
    opp_hit_period: int,
    opp_hit_damage: int,
    max_frames: int,
):
    """Run one round; returns (hp_self, hp_opp, elapsed, sent, processed, skipped)."""
    hp_self = hp_total
    hp_opp = hp_total
    processed_count = 0
    free_at = 0
    pend_lo, pend_hi = 1, 0  # pending frame ids [lo, hi], empty when lo > hi
    picked = 0  # the single in-flight picked frame id, 0 when none
    sent = 0
    processed = 0
    skipped = 0
    elapsed = 0
    for k in range(max_frames + 1):
        t = k * period_us
        if k >= 1:
            flag = False
            if picked == k:
                flag = True
                picked = 0
            elif k == max_frames and pend_lo <= k <= pend_hi:
                # last frame of the round: picked once the client frees up
                flag = True
                processed += 1
                skipped += k - pend_lo
                pend_lo = k + 1
            if flag:
                processed_count += 1
                if processed_count % agent_hit_period == 0:
                    hp_opp -= agent_hit_damage
            if k % opp_hit_period == 0:
                hp_self -= opp_hit_damage
            if hp_self < 0:
                hp_self = 0
            if hp_opp < 0:
                hp_opp = 0
            if hp_self == 0 or hp_opp == 0 or k == max_frames:
                elapsed = k
                break
        nxt = k + 1
        if nxt <= max_frames:
            if pend_lo > pend_hi:
                pend_lo = nxt
            pend_hi = nxt
            sent += 1
        if pend_lo <= pend_hi:
            if free_at <= t:
                pick_at = t
            elif free_at < t + period_us:
                pick_at = free_at
            else:
                continue
            if picked:
                raise RuntimeError("pick queue overflow")
            skipped += pend_hi - pend_lo
            picked = pend_hi
            processed += 1
            pend_lo = pend_hi + 1
            free_at = pick_at + total_us
    if pend_lo <= pend_hi:
        skipped += pend_hi - pend_lo + 1
    return hp_self, hp_opp, elapsed, sent, processed, skipped
