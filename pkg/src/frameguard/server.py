"""Match server: the frame-locked loop on a virtual clock or real sockets.

Virtual mode replays the exact pipeline semantics of `duel` through the
server's own dispatch machinery on an integer microsecond clock. It is
deterministic to the bit and is the surface the oracle equivalence
checks run against.

Realtime mode drives a remote agent over TCP. One thread owns the tick
schedule and the duel (frames go out at round_start + (n-1) * period, an
absolute schedule that cannot accumulate drift); a reader thread owns
the socket's receive side, timestamps ACTION arrivals, and hands them
over via a queue. Frame fates are inferred from the ACTION stream: an
action for frame j marks j processed and any older unresolved frames
skipped, since the client acts on the newest frame it has and never goes
back. The duel therefore trails the wire by however long the client
holds a frame; a KO is discovered a tick or two late, the extra frames
already sent stay in frames_sent, and unresolved frames at round end are
in-flight rather than skipped, so processed + skipped never exceeds
sent.

Round boundaries have one wrinkle: ACTION carries no round id, and a
client that was mid-compute when the round ended will still reply once.
The server keeps the previous round's unresolved ids and runs a short
drain window after ROUND_END; a reply matching that set is discarded as
stale, anything else is a protocol violation and aborts the match.
"""

from __future__ import annotations

import csv
import queue
import socket
import threading
from dataclasses import dataclass, replace
from statistics import fmean
from typing import NamedTuple, Optional, Sequence, Union

from frameguard import duel as duel_mod
from frameguard import protocol
from frameguard.agents import HandshakeError, VariantSpec, now_us, spin_until
from frameguard.core import RoundResult
from frameguard.duel import DuelParams
from frameguard.protocol import (
    Action,
    Frame,
    Hello,
    HelloAck,
    MatchEnd,
    ProtocolError,
    RoundEnd,
    RoundStart,
    StreamDecoder,
)

CLOCK_MODES = ("virtual", "realtime")


@dataclass(frozen=True)
class FrameSample:
    """Per-frame latency measurement from the server's point of view.

    overhead_us = rtt_us - reported_processing_us, floored at zero. A
    client that over-reports shows up as rtt_us < reported_processing_us
    in the row; the sample is kept so the data stays honest.
    """

    round_id: int
    frame_id: int
    rtt_us: int
    reported_processing_us: int
    overhead_us: int


@dataclass(frozen=True)
class MatchConfig:
    frame_period_us: int = 16667
    frames_per_round: int = 3600
    rounds: int = 96
    rounds_per_game: int = 3
    warmup_rounds: int = 6
    clock_mode: str = "virtual"
    listen_port: int = 31415
    host: str = "127.0.0.1"
    duel: DuelParams = DuelParams()
    guard_us: int = 2000
    handshake_timeout_s: float = 10.0
    action_timeout_us: int = 2_000_000
    drain_timeout_us: int = 500_000

    def __post_init__(self):
        if not 1 <= self.frame_period_us <= duel_mod.MAX_PERIOD_US:
            raise ValueError(
                f"frame_period_us={self.frame_period_us} outside "
                f"[1, {duel_mod.MAX_PERIOD_US}]"
            )
        if not 0 <= self.frames_per_round <= duel_mod.MAX_FRAMES_CAP:
            raise ValueError(
                f"frames_per_round={self.frames_per_round} outside "
                f"[0, {duel_mod.MAX_FRAMES_CAP}]"
            )
        if self.rounds < 1:
            raise ValueError(f"rounds={self.rounds} outside [1, ...]")
        if self.rounds_per_game < 1:
            raise ValueError(f"rounds_per_game={self.rounds_per_game} outside [1, ...]")
        if not 0 <= self.warmup_rounds < self.rounds:
            raise ValueError(
                f"warmup_rounds={self.warmup_rounds} outside [0, {self.rounds - 1}]"
            )
        if self.clock_mode not in CLOCK_MODES:
            raise ValueError(f"clock_mode={self.clock_mode!r} not one of {CLOCK_MODES}")
        if not 0 <= self.listen_port <= 65535:
            raise ValueError(f"listen_port={self.listen_port} outside [0, 65535]")
        if self.guard_us < 0:
            raise ValueError(f"guard_us={self.guard_us} outside [0, ...]")
        # one round-length knob: the duel horizon is the round length
        if self.duel.max_frames != self.frames_per_round:
            object.__setattr__(
                self, "duel", replace(self.duel, max_frames=self.frames_per_round)
            )


class MatchOutcome(NamedTuple):
    results: list
    samples: list
    aborted: bool
    abort_reason: Optional[str]


def frame_dispatch(pending):
    """Pop everything pending; deliver the newest, count the rest skipped.

    Mutates `pending` (any sequence with clear()) and returns
    (newest_item, dropped_count). This is the whole skip policy: a slow
    client never sees a stale frame, it pays for it in skips.
    """
    if not pending:
        raise ValueError("frame_dispatch on no pending frames")
    newest = pending[-1]
    dropped = len(pending) - 1
    pending.clear()
    return newest, dropped


def _run_virtual_round(config: MatchConfig, round_id: int, total_us: int) -> RoundResult:
    """One round on the virtual clock, through the dispatch machinery.

    Same event ordering as the compiled kernel (see _kernel_py): at each
    instant the duel consumes its due frame, then the next frame is
    emitted, then a free client picks. The kernel is the oracle this
    implementation is checked against; do not fold the two together.
    """
    period = config.frame_period_us
    n_frames = config.frames_per_round
    state = duel_mod.new_state(config.duel)
    pending: list[int] = []
    picked_id = 0
    free_at = 0
    sent = processed = skipped = 0
    for k in range(n_frames + 1):
        t = k * period
        if k >= 1:
            if picked_id == k:
                flag = True
                picked_id = 0
            elif k == n_frames and pending and pending[-1] == k:
                # the round's last frame: the client always gets to it
                _, dropped = frame_dispatch(pending)
                skipped += dropped
                processed += 1
                flag = True
            else:
                flag = False
            duel_mod.apply_frame(state, flag, config.duel)
            if state.ko or k == n_frames:
                break
        if k + 1 <= n_frames:
            pending.append(k + 1)
            sent += 1
        if pending:
            if free_at <= t:
                pick_at = t
            elif free_at < t + period:
                pick_at = free_at
            else:
                continue
            fid, dropped = frame_dispatch(pending)
            skipped += dropped
            processed += 1
            picked_id = fid
            free_at = pick_at + total_us
    skipped += len(pending)
    return RoundResult(
        round_id=round_id,
        hp_self=state.hp_self,
        hp_opp=state.hp_opp,
        elapsed_frames=state.wall_frame,
        frames_sent=sent,
        frames_processed=processed,
        frames_skipped=skipped,
        mean_overhead_us=None,
    )


def run_virtual_match(config: MatchConfig, variant: VariantSpec) -> MatchOutcome:
    """All rounds against a fixed-load client model; no sockets, no clock.

    The client's occupancy is the variant's total frame time. There are
    no frame samples: nothing crosses a wire, so transport overhead is
    identically absent rather than zero.
    """
    total = variant.total_frame_time_us
    results = [
        _run_virtual_round(config, rid, total) for rid in range(1, config.rounds + 1)
    ]
    return MatchOutcome(results=results, samples=[], aborted=False, abort_reason=None)


class AgentConnection:
    """An accepted, handshaken client socket plus its reader thread."""

    def __init__(self, sock: socket.socket, hello: Hello, decoder: StreamDecoder):
        self.sock = sock
        self.hello = hello
        self._decoder = decoder
        self.queue: queue.Queue = queue.Queue()
        self._reader = threading.Thread(
            target=self._read_loop, name="frameguard-reader", daemon=True
        )

    def start(self):
        self._reader.start()

    def send(self, msg: protocol.Message) -> None:
        self.sock.sendall(protocol.encode(msg))

    def close(self):
        try:
            self.sock.shutdown(socket.SHUT_RDWR)
        except OSError:
            pass
        self.sock.close()
        if self._reader.is_alive():
            self._reader.join(timeout=1.0)

    def _read_loop(self):
        # Arrival timestamps are taken here, right after recv returns, on
        # the same monotonic clock the send path uses. One timestamp per
        # recv batch: the single-threaded client sends one action at a
        # time, so batches of more than one action mean the server was
        # behind anyway.
        while True:
            try:
                data = self.sock.recv(65536)
            except OSError:
                self.queue.put(("eof",))
                return
            ts = now_us()
            if not data:
                self.queue.put(("eof",))
                return
            try:
                msgs = self._decoder.feed(data)
            except ProtocolError as exc:
                self.queue.put(("error", f"client protocol error: {exc}"))
                return
            for msg in msgs:
                if isinstance(msg, Action):
                    self.queue.put(("action", ts, msg))
                else:
                    self.queue.put(
                        ("error", f"unexpected {type(msg).__name__} from client")
                    )
                    return


class MatchServer:
    """Owns the listening socket and runs realtime matches."""

    def __init__(self, config: MatchConfig):
        self.config = config
        self._lsock: Optional[socket.socket] = None
        self.port: Optional[int] = None
        self._prev_unresolved: set = set()
        self.stale_actions = 0

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    def bind(self) -> int:
        """Bind and listen; returns the bound port. OSError propagates."""
        sock = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        sock.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        try:
            sock.bind((self.config.host, self.config.listen_port))
            sock.listen(1)
        except OSError:
            sock.close()
            raise
        self._lsock = sock
        self.port = sock.getsockname()[1]
        return self.port

    def close(self):
        if self._lsock is not None:
            self._lsock.close()
            self._lsock = None

    def accept_agent(self) -> AgentConnection:
        """Accept one client and complete the handshake.

        Raises HandshakeError if no client arrives in time, the first
        message is not a HELLO, or the protocol version does not match.
        A rejected client is told so via HELLO_ACK(accepted=0).
        """
        if self._lsock is None:
            raise RuntimeError("accept_agent before bind")
        self._lsock.settimeout(self.config.handshake_timeout_s)
        try:
            sock, _addr = self._lsock.accept()
        except TimeoutError:
            raise HandshakeError("no client connected before timeout") from None
        sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
        sock.settimeout(self.config.handshake_timeout_s)
        decoder = StreamDecoder()
        msgs: list = []
        try:
            while not msgs:
                data = sock.recv(65536)
                if not data:
                    raise HandshakeError("client closed before HELLO")
                msgs = decoder.feed(data)
        except TimeoutError:
            sock.close()
            raise HandshakeError("timed out waiting for HELLO") from None
        except ProtocolError as exc:
            sock.close()
            raise HandshakeError(f"bad handshake bytes: {exc}") from None
        hello = msgs[0]
        if (
            not isinstance(hello, Hello)
            or len(msgs) > 1
            or hello.version != protocol.PROTOCOL_VERSION
            or hello.role not in (protocol.ROLE_SANDBOX, protocol.ROLE_PLAYER)
        ):
            try:
                sock.sendall(
                    protocol.encode(HelloAck(0, self.config.frame_period_us))
                )
            except OSError:
                pass
            sock.close()
            if isinstance(hello, Hello):
                raise HandshakeError(
                    f"rejected client {hello.name!r} "
                    f"(version {hello.version}, role {hello.role})"
                )
            raise HandshakeError(f"expected HELLO, got {type(hello).__name__}")
        sock.sendall(protocol.encode(HelloAck(1, self.config.frame_period_us)))
        sock.settimeout(None)
        conn = AgentConnection(sock, hello, decoder)
        conn.start()
        return conn

    def run_match(self, conn: AgentConnection) -> MatchOutcome:
        """Drive all configured rounds over an established connection."""
        self._prev_unresolved = set()
        self.stale_actions = 0
        results: list[RoundResult] = []
        samples: list[FrameSample] = []
        aborted = False
        reason = None
        for round_id in range(1, self.config.rounds + 1):
            rr, round_samples, err = self._run_round(conn, round_id)
            if rr is not None:
                results.append(rr)
                samples.extend(round_samples)
            if err is not None:
                aborted = True
                reason = f"round {round_id}: {err}"
                break
        if not aborted:
            try:
                conn.send(MatchEnd(rounds=len(results)))
            except OSError:
                pass  # results stand; the client just left early
        conn.close()
        return MatchOutcome(
            results=results, samples=samples, aborted=aborted, abort_reason=reason
        )

    def _run_round(self, conn: AgentConnection, round_id: int):
        """Returns (result | None, samples, error | None).

        A result is produced whenever the round itself finished, even if
        the connection died right after; an unfinished round yields None
        and its samples are dropped, as they describe no comparable
        round.
        """
        cfg = self.config
        period = cfg.frame_period_us
        n_frames = cfg.frames_per_round
        state = duel_mod.new_state(cfg.duel)
        fates: dict[int, bool] = {}
        sent_ts: dict[int, int] = {}
        samples: list[FrameSample] = []
        processed = skipped = 0
        applied = 0
        max_action = 0
        ko = False

        def resolve(ts: int, act: Action) -> Optional[str]:
            nonlocal processed, skipped, max_action
            fid = act.frame_id
            if fid in sent_ts:
                if fid in fates:
                    return f"duplicate action for frame {fid}"
                for j in range(max_action + 1, fid):
                    if j not in fates:
                        fates[j] = False
                        skipped += 1
                rtt = ts - sent_ts[fid]
                overhead = rtt - act.reported_processing_us
                samples.append(
                    FrameSample(
                        round_id=round_id,
                        frame_id=fid,
                        rtt_us=rtt,
                        reported_processing_us=act.reported_processing_us,
                        overhead_us=overhead if overhead > 0 else 0,
                    )
                )
                fates[fid] = True
                processed += 1
                if fid > max_action:
                    max_action = fid
                return None
            if fid in self._prev_unresolved:
                # the one reply a client mid-compute at round end still owes
                self._prev_unresolved.discard(fid)
                self.stale_actions += 1
                return None
            return f"action for unknown frame {fid}"

        def advance() -> None:
            nonlocal applied, ko
            while not ko and applied < n_frames and (applied + 1) in fates:
                applied += 1
                duel_mod.apply_frame(state, fates[applied], cfg.duel)
                if state.ko:
                    ko = True

        def handle(item) -> Optional[str]:
            if item[0] == "eof":
                return "client disconnected"
            if item[0] == "error":
                return item[1]
            err = resolve(item[1], item[2])
            if err:
                return err
            advance()
            return None

        def pump_nowait() -> Optional[str]:
            while True:
                try:
                    item = conn.queue.get_nowait()
                except queue.Empty:
                    return None
                err = handle(item)
                if err:
                    return err

        err: Optional[str] = None
        try:
            conn.send(RoundStart(round_id, n_frames, cfg.duel.hp_total))
        except OSError as exc:
            return None, [], f"send failed: {exc}"
        sent = 0
        n = 0
        t0 = now_us()
        while n < n_frames and not ko and err is None:
            n += 1
            spin_until(t0 + (n - 1) * period, cfg.guard_us)
            ts = now_us()
            sent_ts[n] = ts
            try:
                conn.send(Frame(round_id, n, state.hp_self, state.hp_opp, ts))
            except OSError as exc:
                del sent_ts[n]
                err = f"send failed: {exc}"
                break
            sent = n
            err = pump_nowait()
        # resolve the tail: every sent frame gets a fate before the round
        # closes, the client always answers its newest frame eventually
        while err is None and not ko and applied < sent:
            try:
                item = conn.queue.get(timeout=cfg.action_timeout_us / 1e6)
            except queue.Empty:
                err = f"no action within {cfg.action_timeout_us} us of the last frame"
                break
            err = handle(item)
            if err is None:
                err = pump_nowait()
        if err is not None:
            return None, [], err
        elapsed = state.wall_frame
        mean_overhead = fmean(s.overhead_us for s in samples) if samples else None
        result = RoundResult(
            round_id=round_id,
            hp_self=state.hp_self,
            hp_opp=state.hp_opp,
            elapsed_frames=elapsed,
            frames_sent=sent,
            frames_processed=processed,
            frames_skipped=skipped,
            mean_overhead_us=mean_overhead,
        )
        try:
            conn.send(
                RoundEnd(round_id, state.hp_self, state.hp_opp, elapsed, processed, skipped)
            )
        except OSError as exc:
            return result, samples, f"send failed: {exc}"
        unresolved = {j for j in range(1, sent + 1) if j not in fates}
        err = None
        if unresolved:
            # at most one stale reply can be in flight (the client computes
            # one frame at a time); the rest of the unresolved set was
            # dropped client-side on ROUND_END and will never be answered
            try:
                item = conn.queue.get(timeout=cfg.drain_timeout_us / 1e6)
            except queue.Empty:
                item = None
            if item is not None:
                if item[0] == "eof":
                    err = "client disconnected"
                elif item[0] == "error":
                    err = item[1]
                elif item[2].frame_id in unresolved:
                    unresolved.discard(item[2].frame_id)
                    self.stale_actions += 1
                else:
                    err = f"action for unknown frame {item[2].frame_id}"
        self._prev_unresolved = unresolved
        return result, samples, err


def run_match(
    config: MatchConfig, client: Union[VariantSpec, AgentConnection]
) -> MatchOutcome:
    """Run a match per config.clock_mode.

    Virtual mode takes a VariantSpec (the built-in fixed-load client
    model); realtime mode takes an AgentConnection from
    MatchServer.accept_agent().
    """
    if config.clock_mode == "virtual":
        if not isinstance(client, VariantSpec):
            raise TypeError("virtual run_match needs a VariantSpec client")
        return run_virtual_match(config, client)
    if not isinstance(client, AgentConnection):
        raise TypeError("realtime run_match needs an AgentConnection client")
    return MatchServer(config).run_match(client)


RESULTS_COLUMNS = [
    "round_id",
    "hp_self",
    "hp_opp",
    "elapsed_frames",
    "frames_sent",
    "frames_processed",
    "frames_skipped",
    "mean_overhead_us",
]

SAMPLES_COLUMNS = ["round_id", "frame_id", "rtt_us", "reported_processing_us", "overhead_us"]


def write_results_csv(path, results: Sequence[RoundResult]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(RESULTS_COLUMNS)
        for r in results:
            writer.writerow(
                [
                    r.round_id,
                    r.hp_self,
                    r.hp_opp,
                    r.elapsed_frames,
                    r.frames_sent,
                    r.frames_processed,
                    r.frames_skipped,
                    "" if r.mean_overhead_us is None else repr(r.mean_overhead_us),
                ]
            )


def read_results_csv(path) -> list[RoundResult]:
    out = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != RESULTS_COLUMNS:
            raise ValueError(f"line 1: expected header {','.join(RESULTS_COLUMNS)}")
        for lineno, row in enumerate(reader, start=2):
            try:
                if len(row) != len(RESULTS_COLUMNS):
                    raise ValueError(f"{len(row)} columns")
                out.append(
                    RoundResult(
                        round_id=int(row[0]),
                        hp_self=int(row[1]),
                        hp_opp=int(row[2]),
                        elapsed_frames=int(row[3]),
                        frames_sent=int(row[4]),
                        frames_processed=int(row[5]),
                        frames_skipped=int(row[6]),
                        mean_overhead_us=None if row[7] == "" else float(row[7]),
                    )
                )
            except ValueError as exc:
                raise ValueError(f"line {lineno}: malformed result row: {exc}") from None
    return out


def write_samples_csv(path, samples: Sequence[FrameSample]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(SAMPLES_COLUMNS)
        for s in samples:
            writer.writerow(
                [s.round_id, s.frame_id, s.rtt_us, s.reported_processing_us, s.overhead_us]
            )


def read_samples_csv(path) -> list[FrameSample]:
    out = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != SAMPLES_COLUMNS:
            raise ValueError(f"line 1: expected header {','.join(SAMPLES_COLUMNS)}")
        for lineno, row in enumerate(reader, start=2):
            try:
                out.append(FrameSample(*(int(v) for v in row)))
            except (ValueError, TypeError) as exc:
                raise ValueError(f"line {lineno}: malformed sample row: {exc}") from None
    return out
