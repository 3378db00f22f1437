"""Stand-in duel and its virtual-time pipeline simulation.

The duel replaces a full fighting-game engine with the smallest model
that still couples outcome to frame delivery: the evaluated agent lands
a hit every `agent_hit_period` frames it actually processes, while the
scripted opponent lands one every `opp_hit_period` wall frames no matter
what. Skipped frames therefore slow the agent's damage output but never
the opponent's, which is exactly how a real-time game punishes a slow
client. Defaults are tuned so a skip-free agent wins: it needs 480
processed frames for the KO, the opponent would need 900.

run_duel_virtual() is the reference oracle for one round: a
deterministic discrete-event simulation on an integer microsecond clock
(see `_kernel_py` for the event-ordering contract). Identical inputs
give bit-identical outputs on every platform. The hot loop lives in a
compiled extension when available; set FRAMEGUARD_PURE=1 to force the
pure-Python kernel.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

from frameguard import _kernel_py
from frameguard.core import RoundResult

if os.environ.get("FRAMEGUARD_PURE") == "1":
    _kernel_impl = _kernel_py
    KERNEL_BACKEND = "python"
else:
    try:
        from frameguard import _kernel as _kernel_impl  # type: ignore[no-redef]

        KERNEL_BACKEND = "cython"
    except ImportError:
        _kernel_impl = _kernel_py
        KERNEL_BACKEND = "python"

# int64-safe input bounds for the compiled kernel
MAX_TOTAL_US = 10**12
MAX_PERIOD_US = 10**9
MAX_FRAMES_CAP = 10**7


def kernel_backends() -> dict:
    """Importable kernels by name, for tests and benchmarks."""
    backends = {"python": _kernel_py.run_pipeline}
    try:
        from frameguard import _kernel  # type: ignore

        backends["cython"] = _kernel.run_pipeline
    except ImportError:
        pass
    return backends


@dataclass(frozen=True)
class DuelParams:
    hp_total: int = 400
    agent_hit_period: int = 12
    agent_hit_damage: int = 10
    opp_hit_period: int = 20
    opp_hit_damage: int = 9
    max_frames: int = 3600

    def __post_init__(self):
        for name in (
            "hp_total",
            "agent_hit_period",
            "agent_hit_damage",
            "opp_hit_period",
            "opp_hit_damage",
        ):
            if getattr(self, name) < 1:
                raise ValueError(f"{name}={getattr(self, name)} outside [1, ...]")
        if not 0 <= self.max_frames <= MAX_FRAMES_CAP:
            raise ValueError(
                f"max_frames={self.max_frames} outside [0, {MAX_FRAMES_CAP}]"
            )


@dataclass
class DuelState:
    """Mutable per-round fight state. Single-owner; not locked."""

    hp_self: int
    hp_opp: int
    wall_frame: int = 0
    processed_count: int = 0
    ko: bool = False


def new_state(params: DuelParams = DuelParams()) -> DuelState:
    return DuelState(hp_self=params.hp_total, hp_opp=params.hp_total)


def apply_frame(state: DuelState, processed: bool, params: DuelParams) -> DuelState:
    """Advance the duel by one wall frame.

    `processed` says whether the agent acted on this frame. Both sides'
    hits for the frame land together before the KO check, so a mutual
    KO is possible and resolves as a tie. Mutates and returns `state`.
    """
    if state.ko:
        raise RuntimeError("apply_frame on a finished duel")
    state.wall_frame += 1
    if processed:
        state.processed_count += 1
        if state.processed_count % params.agent_hit_period == 0:
            state.hp_opp = max(0, state.hp_opp - params.agent_hit_damage)
    if state.wall_frame % params.opp_hit_period == 0:
        state.hp_self = max(0, state.hp_self - params.opp_hit_damage)
    state.ko = state.hp_self == 0 or state.hp_opp == 0
    return state


def run_duel_virtual(
    total_frame_time_us: int,
    frame_period_us: int,
    params: DuelParams = DuelParams(),
    round_id: int = 1,
) -> RoundResult:
    """Simulate one round on the virtual clock; the reference oracle.

    total_frame_time_us is how long the client is occupied per picked
    frame (compute plus any injected delay plus transport emulation);
    frame_period_us is the server's emission period. Occupancy at or
    under the period is budget-neutral: the outcome is identical to a
    zero-cost client. Over budget, lag accumulates until frames skip.
    """
    if not 1 <= total_frame_time_us <= MAX_TOTAL_US:
        raise ValueError(
            f"total_frame_time_us={total_frame_time_us} outside [1, {MAX_TOTAL_US}]"
        )
    if not 1 <= frame_period_us <= MAX_PERIOD_US:
        raise ValueError(
            f"frame_period_us={frame_period_us} outside [1, {MAX_PERIOD_US}]"
        )
    hp_self, hp_opp, elapsed, sent, processed, skipped = _kernel_impl.run_pipeline(
        total_frame_time_us,
        frame_period_us,
        params.hp_total,
        params.agent_hit_period,
        params.agent_hit_damage,
        params.opp_hit_period,
        params.opp_hit_damage,
        params.max_frames,
    )
    return RoundResult(
        round_id=round_id,
        hp_self=hp_self,
        hp_opp=hp_opp,
        elapsed_frames=elapsed,
        frames_sent=sent,
        frames_processed=processed,
        frames_skipped=skipped,
        mean_overhead_us=None,
    )
