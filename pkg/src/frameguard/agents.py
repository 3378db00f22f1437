"""Agent clients and the precise-wait helper they share with the server.

Two client behaviours ship with the harness. The sandbox client replies
to every frame instantly and reports zero processing time, so any round
trip the server measures is pure stack overhead; it is the measurement
instrument for probing. The fixed-load client emulates a real agent: it
occupies itself for processing_us + delay_us + extra_transport_us per
frame and reports processing_us + delay_us. The extra-transport slice is
deliberately left out of the report, which makes it indistinguishable
from genuine transport cost on the server side; that is the knob that
lets one host reproduce cross-stack latency gaps. The injected delay is
spent after compute, strictly inside the client, so the equalizing
mechanism itself never touches the wire format.

Both clients are single-threaded and drain their socket before acting,
always acting on the newest pending frame and dropping older ones; a
client that fell behind therefore skips frames exactly the way the
frame-locked server expects.
"""

from __future__ import annotations

import argparse
import os
import socket
import sys
import time
from dataclasses import dataclass

from frameguard import protocol
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

DEFAULT_PORT = 31415
DEFAULT_GUARD_US = 2000


class HandshakeError(Exception):
    """The server rejected the client or the handshake never completed."""


def now_us() -> int:
    """Monotonic clock in integer microseconds."""
    return time.monotonic_ns() // 1000


def spin_until(deadline_us: int, guard_us: int = DEFAULT_GUARD_US) -> int:
    """Wait until the monotonic clock reaches deadline_us; returns the time.

    Sleeps coarsely until guard_us before the deadline, then spins. The
    spin calls time.sleep(0) each iteration, which costs about a
    microsecond but yields the GIL so a sibling reader thread is never
    starved during the spin window. A deadline already in the past
    returns immediately.
    """
    while True:
        remaining = deadline_us - guard_us - now_us()
        if remaining <= 0:
            break
        time.sleep(remaining / 1e6)
    now = now_us()
    while now < deadline_us:
        time.sleep(0)
        now = now_us()
    return now


@dataclass(frozen=True)
class VariantSpec:
    """One experiment arm: what the client burns and what it admits to."""

    label: str
    processing_us: int = 0
    extra_transport_us: int = 0
    injected_delay_us: int = 0

    def __post_init__(self):
        for name in ("processing_us", "extra_transport_us", "injected_delay_us"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name}={getattr(self, name)} outside [0, ...]")

    @property
    def total_frame_time_us(self) -> int:
        return self.processing_us + self.extra_transport_us + self.injected_delay_us

    @property
    def reported_us(self) -> int:
        return self.processing_us + self.injected_delay_us


def sandbox_step(frame: Frame) -> Action:
    """The sandbox reply for a frame: act immediately, report nothing."""
    return Action(frame_id=frame.frame_id, action_code=0, reported_processing_us=0)


def fixedload_step(frame: Frame, spec: VariantSpec) -> Action:
    """The fixed-load reply; the caller is responsible for the occupancy."""
    return Action(
        frame_id=frame.frame_id,
        action_code=0,
        reported_processing_us=spec.reported_us,
    )


class AgentClient:
    """Connects to a match server and plays until MATCH_END."""

    def __init__(
        self,
        host: str,
        port: int,
        mode: str = "sandbox",
        spec: VariantSpec | None = None,
        guard_us: int = DEFAULT_GUARD_US,
        connect_timeout: float = 10.0,
    ):
        if mode not in ("sandbox", "fixedload"):
            raise ValueError(f"mode={mode!r} not one of sandbox, fixedload")
        self.host = host
        self.port = port
        self.mode = mode
        self.spec = spec or VariantSpec(label=mode)
        if mode == "sandbox" and (
            self.spec.processing_us or self.spec.injected_delay_us
        ):
            raise ValueError(
                "sandbox mode must not burn processing or delay; it reports zero "
                "and the report must stay honest"
            )
        self.guard_us = guard_us
        self.connect_timeout = connect_timeout
        self.rounds_seen = 0
        self._sock = None
        self._decoder = StreamDecoder()
        self._pending: list[Frame] = []
        self._done = False

    def _occupancy_us(self) -> int:
        if self.mode == "sandbox":
            return self.spec.extra_transport_us
        return self.spec.total_frame_time_us

    def _reported_us(self) -> int:
        return 0 if self.mode == "sandbox" else self.spec.reported_us

    def _handshake(self):
        self._sock.settimeout(self.connect_timeout)
        role = protocol.ROLE_SANDBOX if self.mode == "sandbox" else protocol.ROLE_PLAYER
        self._sock.sendall(protocol.encode(Hello(name=self.spec.label, role=role)))
        while True:
            try:
                data = self._sock.recv(65536)
            except socket.timeout:
                raise HandshakeError("timed out waiting for HELLO_ACK") from None
            if not data:
                raise HandshakeError("server closed the connection during handshake")
            msgs = self._decoder.feed(data)
            if not msgs:
                continue
            ack = msgs[0]
            if not isinstance(ack, HelloAck):
                raise HandshakeError(f"expected HELLO_ACK, got {type(ack).__name__}")
            if not ack.accepted:
                raise HandshakeError("server refused the handshake")
            for msg in msgs[1:]:
                self._handle(msg)
            return

    def _handle(self, msg) -> None:
        if isinstance(msg, Frame):
            self._pending.append(msg)
        elif isinstance(msg, RoundStart):
            self.rounds_seen += 1
            self._pending.clear()
        elif isinstance(msg, RoundEnd):
            self._pending.clear()
        elif isinstance(msg, MatchEnd):
            self._pending.clear()
            self._done = True
        # anything else from the server is ignorable chatter here

    def _drain(self) -> None:
        """Consume whatever is already buffered without blocking."""
        self._sock.setblocking(False)
        try:
            while True:
                try:
                    data = self._sock.recv(65536)
                except (BlockingIOError, InterruptedError):
                    return
                if not data:
                    raise ConnectionError("server closed the connection")
                for msg in self._decoder.feed(data):
                    self._handle(msg)
        finally:
            self._sock.setblocking(True)

    def _block_for_input(self) -> None:
        data = self._sock.recv(65536)
        if not data:
            raise ConnectionError("server closed the connection")
        for msg in self._decoder.feed(data):
            self._handle(msg)

    def run(self) -> int:
        """Play the match; returns the number of rounds seen."""
        self._sock = socket.create_connection(
            (self.host, self.port), timeout=self.connect_timeout
        )
        try:
            self._sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
            self._handshake()
            self._sock.settimeout(None)
            while not self._done:
                if self._pending:
                    self._drain()
                else:
                    self._block_for_input()
                if self._done:
                    break
                if not self._pending:
                    continue
                frame = self._pending[-1]
                self._pending.clear()
                t0 = now_us()
                busy = self._occupancy_us()
                if busy > 0:
                    spin_until(t0 + busy, self.guard_us)
                if self.mode == "sandbox":
                    action = sandbox_step(frame)
                else:
                    action = fixedload_step(frame, self.spec)
                self._sock.sendall(protocol.encode(action))
            return self.rounds_seen
        finally:
            self._sock.close()


def _env_port() -> int:
    raw = os.environ.get("FRAMEGUARD_PORT")
    if raw is None:
        return DEFAULT_PORT
    return int(raw)


def build_arg_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="frameguard agent",
        description="run an agent client against a match server",
    )
    parser.add_argument("--host", default="127.0.0.1")
    parser.add_argument("--port", type=int, default=None,
                        help="server port (default: FRAMEGUARD_PORT or 31415)")
    parser.add_argument("--mode", choices=("sandbox", "fixedload"), default="sandbox")
    parser.add_argument("--processing-us", type=int, default=0)
    parser.add_argument("--extra-transport-us", type=int, default=0)
    parser.add_argument("--delay-us", type=int, default=0,
                        help="calibrated equalizing delay, spent after compute")
    parser.add_argument("--label", default=None)
    parser.add_argument("--guard-us", type=int, default=DEFAULT_GUARD_US)
    return parser


def run_from_args(args) -> int:
    if args.mode == "sandbox" and (args.processing_us or args.delay_us):
        print(
            "error: --processing-us and --delay-us require --mode fixedload",
            file=sys.stderr,
        )
        return 2
    try:
        spec = VariantSpec(
            label=args.label or args.mode,
            processing_us=args.processing_us,
            extra_transport_us=args.extra_transport_us,
            injected_delay_us=args.delay_us,
        )
        port = args.port if args.port is not None else _env_port()
        client = AgentClient(
            args.host, port, mode=args.mode, spec=spec, guard_us=args.guard_us
        )
        rounds = client.run()
    except HandshakeError as exc:
        print(f"handshake failed: {exc}", file=sys.stderr)
        return 2
    except (ConnectionError, ProtocolError, OSError, ValueError) as exc:
        print(f"agent error: {exc}", file=sys.stderr)
        return 1
    print(f"match over after {rounds} rounds")
    return 0


def main(argv=None) -> int:
    args = build_arg_parser().parse_args(argv)
    return run_from_args(args)


if __name__ == "__main__":
    sys.exit(main())
