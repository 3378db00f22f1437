# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled duel pipeline kernel.

Line-for-line mirror of `_kernel_py.run_pipeline` with C integer
arithmetic; see that module's docstring for the event-ordering contract.
Callers are responsible for keeping inputs within int64-safe bounds
(duel.run_duel_virtual enforces them).
"""


def run_pipeline(
    long long total_us,
    long long period_us,
    long long hp_total,
    long long agent_hit_period,
    long long agent_hit_damage,
    long long opp_hit_period,
    long long opp_hit_damage,
    long long max_frames,
):
    """Run one round; returns (hp_self, hp_opp, elapsed, sent, processed, skipped)."""
    cdef long long hp_self = hp_total
    cdef long long hp_opp = hp_total
    cdef long long processed_count = 0
    cdef long long free_at = 0
    cdef long long pend_lo = 1
    cdef long long pend_hi = 0
    cdef long long picked = 0
    cdef long long sent = 0
    cdef long long processed = 0
    cdef long long skipped = 0
    cdef long long elapsed = 0
    cdef long long k, t, nxt, pick_at
    cdef bint flag, have_pick
    for k in range(max_frames + 1):
        t = k * period_us
        if k >= 1:
            flag = False
            if picked == k:
                flag = True
                picked = 0
            elif k == max_frames and pend_lo <= k <= pend_hi:
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
            have_pick = False
            if free_at <= t:
                pick_at = t
                have_pick = True
            elif free_at < t + period_us:
                pick_at = free_at
                have_pick = True
            if have_pick:
                if picked != 0:
                    raise RuntimeError("pick queue overflow")
                skipped += pend_hi - pend_lo
                picked = pend_hi
                processed += 1
                pend_lo = pend_hi + 1
                free_at = pick_at + total_us
    if pend_lo <= pend_hi:
        skipped += pend_hi - pend_lo + 1
    return hp_self, hp_opp, elapsed, sent, processed, skipped
