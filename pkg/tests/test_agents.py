"""Agent client behaviours and the precise-wait helper."""

import random
import socket
import statistics

import pytest

from frameguard import agents
from frameguard.agents import (
    AgentClient,
    VariantSpec,
    fixedload_step,
    now_us,
    sandbox_step,
    spin_until,
)
from frameguard.protocol import Action, Frame


def _frame(frame_id, rng=None):
    ts = rng.randrange(2**40) if rng else 0
    return Frame(round_id=1, frame_id=frame_id, hp_self=400, hp_opp=400, send_ts_us=ts)


def test_sandbox_step_echoes_frame_id_and_reports_zero():
    assert sandbox_step(_frame(42)) == Action(42, 0, 0)
    rng = random.Random(7)
    for _ in range(200):
        action = sandbox_step(_frame(rng.randrange(2**32), rng))
        assert action.reported_processing_us == 0
        assert action.action_code == 0


def test_sandbox_step_is_pure():
    frame = _frame(9)
    assert sandbox_step(frame) == sandbox_step(frame)


def test_fixedload_report_excludes_transport_emulation():
    spec = VariantSpec(label="v", processing_us=15850, extra_transport_us=350,
                       injected_delay_us=0)
    assert fixedload_step(_frame(1), spec).reported_processing_us == 15850
    spec = VariantSpec(label="v", processing_us=15850, extra_transport_us=0,
                       injected_delay_us=350)
    assert fixedload_step(_frame(1), spec).reported_processing_us == 16200


def test_variant_spec_arithmetic():
    spec = VariantSpec(label="x", processing_us=100, extra_transport_us=20,
                       injected_delay_us=3)
    assert spec.total_frame_time_us == 123
    assert spec.reported_us == 103


def test_variant_spec_rejects_negative_durations():
    with pytest.raises(ValueError, match="processing_us"):
        VariantSpec(label="x", processing_us=-1)
    with pytest.raises(ValueError, match="injected_delay_us"):
        VariantSpec(label="x", injected_delay_us=-5)


def test_spin_until_past_deadline_returns_immediately():
    deadline = now_us() - 10_000
    before = now_us()
    ret = spin_until(deadline)
    assert ret >= deadline
    # no sleeping happened; generous bound for a slow interpreter
    assert now_us() - before < 50_000


def test_spin_until_reaches_the_deadline():
    for wait in (350, 2_000, 15_000):
        deadline = now_us() + wait
        ret = spin_until(deadline)
        now = now_us()
        assert ret >= deadline
        assert now >= deadline


def test_spin_until_overshoot_is_small():
    # the spin tail should land within tens of microseconds; the hard
    # bound is loose so an unlucky scheduler slice cannot flake the suite
    overshoots = []
    for _ in range(60):
        deadline = now_us() + 350
        ret = spin_until(deadline)
        overshoots.append(ret - deadline)
    assert min(overshoots) >= 0
    p99 = sorted(overshoots)[-1]
    assert statistics.median(overshoots) < 1_000
    assert p99 < 5_000


def test_agent_client_sandbox_rejects_busy_specs():
    spec = VariantSpec(label="s", processing_us=10)
    with pytest.raises(ValueError, match="sandbox"):
        AgentClient("127.0.0.1", 1, mode="sandbox", spec=spec)
    spec = VariantSpec(label="s", injected_delay_us=10)
    with pytest.raises(ValueError, match="sandbox"):
        AgentClient("127.0.0.1", 1, mode="sandbox", spec=spec)
    # extra transport is the one sandbox knob: it stays unreported
    spec = VariantSpec(label="s", extra_transport_us=200)
    client = AgentClient("127.0.0.1", 1, mode="sandbox", spec=spec)
    assert client._occupancy_us() == 200
    assert client._reported_us() == 0


def test_agent_client_mode_validation():
    with pytest.raises(ValueError, match="mode"):
        AgentClient("127.0.0.1", 1, mode="turbo")


def test_cli_rejects_sandbox_with_compute_flags(capsys):
    rc = agents.main(["--mode", "sandbox", "--processing-us", "5"])
    assert rc == 2
    assert "fixedload" in capsys.readouterr().err


def test_cli_reports_connection_failure(capsys):
    # grab a port that is free right now, then aim at it closed
    probe = socket.socket()
    probe.bind(("127.0.0.1", 0))
    port = probe.getsockname()[1]
    probe.close()
    rc = agents.main(["--port", str(port), "--label", "nobody-home"])
    assert rc == 1
    assert "agent error" in capsys.readouterr().err


def test_env_port_fallback(monkeypatch):
    monkeypatch.delenv("FRAMEGUARD_PORT", raising=False)
    assert agents._env_port() == 31415
    monkeypatch.setenv("FRAMEGUARD_PORT", "4242")
    assert agents._env_port() == 4242
