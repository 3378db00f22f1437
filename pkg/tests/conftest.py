"""Shared fixtures and the acceptance-summary hook.

The acceptance tests are named test_criterion_<n>_<slug>; after the run
this plugin prints one line per criterion so a failure is legible
straight from the terminal output without digging through tracebacks.
"""

from __future__ import annotations

import re
import subprocess
import threading

import pytest

from frameguard.server import MatchServer

_CRITERION_RE = re.compile(r"test_acceptance\.py::test_criterion_(\d+)_(\w+)")
_criterion_reports: dict = {}


def pytest_runtest_logreport(report):
    m = _CRITERION_RE.search(report.nodeid)
    if m is None:
        return
    key = (int(m.group(1)), m.group(2))
    entry = _criterion_reports.setdefault(key, {"outcome": "PASS", "duration": 0.0})
    entry["duration"] += report.duration
    if report.skipped:
        entry["outcome"] = "SKIP"
    elif report.failed:
        entry["outcome"] = "FAIL"


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not _criterion_reports:
        return
    terminalreporter.section("acceptance criteria")
    for num, slug in sorted(_criterion_reports):
        entry = _criterion_reports[(num, slug)]
        label = slug.replace("_", " ")
        terminalreporter.write_line(
            f"criterion {num} ({label}): {entry['outcome']}  [{entry['duration']:.2f}s]"
        )


@pytest.fixture(autouse=True)
def _no_ambient_port(monkeypatch):
    # a stray FRAMEGUARD_PORT would silently redirect every server and
    # agent in the suite; tests that want it set it themselves
    monkeypatch.delenv("FRAMEGUARD_PORT", raising=False)


@pytest.fixture
def loopback():
    """Run a realtime match against a client callable in a thread.

    The client callable receives (host, port) and its return value (or
    exception) lands in the returned box dict. The config must use
    listen_port=0 so the OS picks a free port.
    """

    def run(config, client_fn, join_timeout=60.0):
        srv = MatchServer(config)
        port = srv.bind()
        box: dict = {}

        def _client():
            try:
                box["result"] = client_fn(config.host, port)
            except Exception as exc:
                box["error"] = exc

        thread = threading.Thread(target=_client, daemon=True)
        thread.start()
        try:
            conn = srv.accept_agent()
            outcome = srv.run_match(conn)
        finally:
            srv.close()
        thread.join(timeout=join_timeout)
        box["stale_actions"] = srv.stale_actions
        return outcome, box

    return run


@pytest.fixture
def subprocess_match():
    """Run a realtime match against an agent spawned as a subprocess."""

    def run(config, agent_argv, reap_timeout=15.0):
        srv = MatchServer(config)
        port = srv.bind()
        proc = subprocess.Popen(
            list(agent_argv) + ["--host", config.host, "--port", str(port)]
        )
        try:
            conn = srv.accept_agent()
            outcome = srv.run_match(conn)
        finally:
            srv.close()
            try:
                proc.wait(timeout=reap_timeout)
            except subprocess.TimeoutExpired:
                proc.kill()
                proc.wait()
        return outcome, srv.stale_actions

    return run
