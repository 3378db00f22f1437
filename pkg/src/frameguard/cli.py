"""Command-line interface.

Subcommands cover the whole measurement workflow:

    probe      measure transport overhead with a sandbox client
    calibrate  turn two probe summaries into an equalizing delay
    run        run an experiment plan (virtual or realtime variants)
    score      add score columns to a results CSV
    report     compare scored variants; emit plot and summary CSVs
    agent      run an agent client (the other end of probe/run)

Configuration files are flat `key = value` text with `#` comments.
Experiment plans add dotted variant keys:

    variant.<label>.processing_us       compute burned per frame
    variant.<label>.extra_transport_us  transport emulation, unreported
    variant.<label>.delay_us            calibrated equalizing delay
    variant.<label>.agent_cmd           realtime launcher override

Exit codes: 0 success, 2 handshake failure, 3 bind failure,
4 calibration failure, 5 match abort, 6 parse error.
The FRAMEGUARD_PORT environment variable overrides a configured listen
port; an explicit --port flag beats both.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import shlex
import statistics
import subprocess
import sys
from pathlib import Path

from frameguard import probe as probe_mod
from frameguard import server as server_mod
from frameguard.agents import HandshakeError, VariantSpec
from frameguard.core import (
    EmptySampleError,
    RoundResult,
    ScoreParams,
    ValidationError,
    score_round,
)
from frameguard.server import MatchConfig, MatchServer

EXIT_OK = 0
EXIT_HANDSHAKE = 2
EXIT_BIND = 3
EXIT_CALIBRATION = 4
EXIT_ABORT = 5
EXIT_PARSE = 6

DEFAULT_PORT = 31415

SCORED_COLUMNS = server_mod.RESULTS_COLUMNS + ["hp1", "hp2", "w", "t", "score"]

_LABEL_OK = set("abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789_.-")


class ParseError(Exception):
    """Bad config, plan, or CSV input; maps to exit code 6."""


def parse_kv_text(text: str, source: str = "<config>") -> dict:
    """Flat key = value lines; '#' starts a comment. Returns key -> value."""
    out: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ParseError(f"{source} line {lineno}: expected 'key = value'")
        key, value = (part.strip() for part in line.split("=", 1))
        if not key:
            raise ParseError(f"{source} line {lineno}: empty key")
        if key in out:
            raise ParseError(f"{source} line {lineno}: duplicate key {key!r}")
        out[key] = value
    return out


def read_kv_file(path) -> dict:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ParseError(f"cannot read {path}: {exc}") from None
    return parse_kv_text(text, source=str(path))


_INT_CONFIG_KEYS = {
    "frame_period_us",
    "frames_per_round",
    "rounds",
    "rounds_per_game",
    "warmup_rounds",
    "listen_port",
    "guard_us",
    "action_timeout_us",
    "drain_timeout_us",
    "duel.hp_total",
    "duel.agent_hit_period",
    "duel.agent_hit_damage",
    "duel.opp_hit_period",
    "duel.opp_hit_damage",
}
_STR_CONFIG_KEYS = {"clock_mode", "host"}
_FLOAT_CONFIG_KEYS = {"handshake_timeout_s"}


def build_match_config(kv: dict) -> MatchConfig:
    """MatchConfig from flat keys; unknown keys are errors, not typos."""
    fields: dict = {}
    duel_fields: dict = {}
    for key, value in kv.items():
        try:
            if key in _INT_CONFIG_KEYS:
                parsed: object = int(value)
            elif key in _FLOAT_CONFIG_KEYS:
                parsed = float(value)
            elif key in _STR_CONFIG_KEYS:
                parsed = value
            else:
                raise ParseError(f"unknown config key {key!r}")
        except ValueError:
            raise ParseError(f"config key {key}: bad value {value!r}") from None
        if key.startswith("duel."):
            duel_fields[key.split(".", 1)[1]] = parsed
        else:
            fields[key] = parsed
    try:
        if duel_fields:
            fields["duel"] = server_mod.DuelParams(**duel_fields)
        return MatchConfig(**fields)
    except ValueError as exc:
        raise ParseError(str(exc)) from None


def split_plan(kv: dict):
    """Split plan keys into (config_kv, variants, agent_cmds, default_cmd)."""
    config_kv: dict = {}
    variant_fields: dict[str, dict] = {}
    agent_cmds: dict[str, str] = {}
    default_cmd = None
    for key, value in kv.items():
        if key == "agent_cmd":
            default_cmd = value
            continue
        if not key.startswith("variant."):
            config_kv[key] = value
            continue
        parts = key.split(".")
        if len(parts) != 3:
            raise ParseError(f"variant key {key!r} must be variant.<label>.<field>")
        _, label, field = parts
        if not label or not set(label) <= _LABEL_OK:
            raise ParseError(f"variant label {label!r} has characters unfit for filenames")
        if field == "agent_cmd":
            agent_cmds[label] = value
            continue
        if field not in ("processing_us", "extra_transport_us", "delay_us"):
            raise ParseError(f"unknown variant field {field!r} in {key!r}")
        try:
            variant_fields.setdefault(label, {})[field] = int(value)
        except ValueError:
            raise ParseError(f"variant key {key}: bad value {value!r}") from None
    variants = []
    for label, fields in variant_fields.items():
        try:
            variants.append(
                VariantSpec(
                    label=label,
                    processing_us=fields.get("processing_us", 0),
                    extra_transport_us=fields.get("extra_transport_us", 0),
                    injected_delay_us=fields.get("delay_us", 0),
                )
            )
        except ValueError as exc:
            raise ParseError(f"variant {label}: {exc}") from None
    if not variants:
        raise ParseError("plan defines no variants")
    return config_kv, variants, agent_cmds, default_cmd


def _env_port():
    raw = os.environ.get("FRAMEGUARD_PORT")
    if raw is None:
        return None
    try:
        return int(raw)
    except ValueError:
        raise ParseError(f"FRAMEGUARD_PORT={raw!r} is not an integer") from None


def apply_overrides(kv: dict, sets) -> dict:
    for item in sets or []:
        if "=" not in item:
            raise ParseError(f"--set {item!r}: expected key=value")
        key, value = (part.strip() for part in item.split("=", 1))
        kv[key] = value
    return kv


def resolve_port(kv: dict, args_port) -> None:
    """Apply port precedence into kv: --port > FRAMEGUARD_PORT > config."""
    if args_port is not None:
        kv["listen_port"] = str(args_port)
        return
    env = _env_port()
    if env is not None:
        kv["listen_port"] = str(env)
    elif "listen_port" not in kv:
        kv["listen_port"] = str(DEFAULT_PORT)


def _spawn_agent(cmd: str, host: str, port: int, extra_flags=None):
    argv = shlex.split(cmd) + ["--host", host, "--port", str(port)]
    argv += extra_flags or []
    return subprocess.Popen(argv)


def _reap(proc, timeout=10.0):
    if proc is None:
        return
    try:
        proc.wait(timeout=timeout)
    except subprocess.TimeoutExpired:
        proc.kill()
        proc.wait()


def native_agent_cmd() -> str:
    return f"{shlex.quote(sys.executable)} -m frameguard agent --mode sandbox"


def cmd_probe(args) -> int:
    kv = read_kv_file(args.config) if args.config else {}
    apply_overrides(kv, args.set)
    resolve_port(kv, args.port)
    kv["clock_mode"] = "realtime"  # probing measures a real wire
    cfg = build_match_config(kv)
    # claim the output location before spending minutes on the wire
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    srv = MatchServer(cfg)
    try:
        srv.bind()
    except OSError as exc:
        print(f"cannot bind {cfg.host}:{cfg.listen_port}: {exc}", file=sys.stderr)
        return EXIT_BIND
    agent_cmd = args.agent_cmd or native_agent_cmd()
    proc = _spawn_agent(agent_cmd, cfg.host, srv.port)
    try:
        try:
            conn = srv.accept_agent()
        except HandshakeError as exc:
            print(f"handshake failed: {exc}", file=sys.stderr)
            return EXIT_HANDSHAKE
        outcome = srv.run_match(conn)
    finally:
        srv.close()
        _reap(proc)
    prefix = args.out
    server_mod.write_samples_csv(f"{prefix}_samples.csv", outcome.samples)
    rounds = probe_mod.rounds_from_samples(outcome.samples)
    probe_mod.write_round_latency_csv(f"{prefix}_rounds.csv", rounds)
    if outcome.aborted:
        print(f"match aborted: {outcome.abort_reason}", file=sys.stderr)
        return EXIT_ABORT
    try:
        stable = probe_mod.stable_mean(rounds, cfg.warmup_rounds)
    except EmptySampleError as exc:
        print(f"probe unusable: {exc}", file=sys.stderr)
        return EXIT_ABORT
    warning = probe_mod.stability_warning(rounds, cfg.warmup_rounds)
    if warning:
        print(f"warning: {warning}", file=sys.stderr)
    over = sum(1 for s in outcome.samples if s.rtt_us < s.reported_processing_us)
    retained = sum(1 for r in rounds if r.round_id > cfg.warmup_rounds)
    with open(f"{prefix}_summary.txt", "w") as fh:
        fh.write(f"label = {args.label}\n")
        fh.write(f"rounds = {len(rounds)}\n")
        fh.write(f"warmup_rounds = {cfg.warmup_rounds}\n")
        fh.write(f"retained_rounds = {retained}\n")
        fh.write(f"samples = {len(outcome.samples)}\n")
        fh.write(f"over_reported_samples = {over}\n")
        fh.write(f"stale_actions = {srv.stale_actions}\n")
        fh.write(f"stable_mean_us = {stable!r}\n")
    print(f"stable_mean_us = {stable!r}")
    return EXIT_OK


def _read_summary(path):
    kv = read_kv_file(path)
    try:
        return kv.get("label", Path(path).stem), float(kv["stable_mean_us"])
    except KeyError:
        raise ParseError(f"{path}: missing stable_mean_us") from None
    except ValueError:
        raise ParseError(f"{path}: bad stable_mean_us {kv['stable_mean_us']!r}") from None


def cmd_calibrate(args) -> int:
    fast_label, fast_mean = _read_summary(args.fast_summary)
    slow_label, slow_mean = _read_summary(args.slow_summary)
    try:
        result = probe_mod.calibrate_delay(fast_mean, slow_mean, args.granularity_us)
    except probe_mod.SwappedInputsError as exc:
        print(f"calibration failed: {exc}", file=sys.stderr)
        return EXIT_CALIBRATION
    print(f"fast {fast_label}: {fast_mean!r} us")
    print(f"slow {slow_label}: {slow_mean!r} us")
    print(f"gap_us = {result.gap_us!r}")
    print(f"delay_us = {result.delay_us}")
    if args.record:
        record = {
            "fast_label": fast_label,
            "slow_label": slow_label,
            "mean_fast_us": result.mean_fast_us,
            "mean_slow_us": result.mean_slow_us,
            "gap_us": result.gap_us,
            "granularity_us": result.granularity_us,
            "delay_us": result.delay_us,
        }
        with open(args.record, "a") as fh:
            fh.write(json.dumps(record, sort_keys=True) + "\n")
    return EXIT_OK


def _variant_flags(variant: VariantSpec) -> list:
    return [
        "--mode",
        "fixedload",
        "--processing-us",
        str(variant.processing_us),
        "--extra-transport-us",
        str(variant.extra_transport_us),
        "--delay-us",
        str(variant.injected_delay_us),
        "--label",
        variant.label,
    ]


def cmd_run(args) -> int:
    kv = read_kv_file(args.plan)
    apply_overrides(kv, args.set)
    config_kv, variants, agent_cmds, default_cmd = split_plan(kv)
    resolve_port(config_kv, args.port)
    cfg = build_match_config(config_kv)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    srv = None
    if cfg.clock_mode == "realtime":
        srv = MatchServer(cfg)
        try:
            srv.bind()
        except OSError as exc:
            print(f"cannot bind {cfg.host}:{cfg.listen_port}: {exc}", file=sys.stderr)
            return EXIT_BIND
    any_abort = False
    try:
        for variant in variants:
            if cfg.clock_mode == "virtual":
                outcome = server_mod.run_virtual_match(cfg, variant)
            else:
                cmd = agent_cmds.get(variant.label) or default_cmd or (
                    f"{shlex.quote(sys.executable)} -m frameguard agent"
                )
                proc = _spawn_agent(cmd, cfg.host, srv.port, _variant_flags(variant))
                try:
                    try:
                        conn = srv.accept_agent()
                    except HandshakeError as exc:
                        print(f"{variant.label}: handshake failed: {exc}", file=sys.stderr)
                        any_abort = True
                        continue
                    outcome = srv.run_match(conn)
                finally:
                    _reap(proc)
            results_path = out_dir / f"{variant.label}.csv"
            server_mod.write_results_csv(results_path, outcome.results)
            if cfg.clock_mode == "realtime":
                server_mod.write_samples_csv(
                    out_dir / f"{variant.label}_samples.csv", outcome.samples
                )
            note = ""
            if outcome.aborted:
                any_abort = True
                note = f" (ABORTED: {outcome.abort_reason})"
                print(f"{variant.label}: aborted: {outcome.abort_reason}", file=sys.stderr)
            print(f"{variant.label}: {len(outcome.results)} rounds -> {results_path}{note}")
    finally:
        if srv is not None:
            srv.close()
    return EXIT_ABORT if any_abort else EXIT_OK


def cmd_score(args) -> int:
    results = server_mod.read_results_csv(args.results)
    try:
        params = ScoreParams(hp_total=args.hp_total, time_total=args.time_total)
    except ValidationError as exc:
        raise ParseError(str(exc)) from None
    rows = []
    for i, result in enumerate(results):
        try:
            b = score_round(result, params)
        except ValidationError as exc:
            raise ParseError(f"{args.results} line {i + 2}: {exc}") from None
        rows.append((result, b))
    with open(args.out, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(SCORED_COLUMNS)
        for result, b in rows:
            writer.writerow(
                [
                    result.round_id,
                    result.hp_self,
                    result.hp_opp,
                    result.elapsed_frames,
                    result.frames_sent,
                    result.frames_processed,
                    result.frames_skipped,
                    "" if result.mean_overhead_us is None else repr(result.mean_overhead_us),
                    repr(b.hp1),
                    repr(b.hp2),
                    b.w,
                    repr(b.t),
                    repr(b.score),
                ]
            )
    print(f"scored {len(rows)} rounds -> {args.out}")
    return EXIT_OK


def _read_scored(path):
    rows = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != SCORED_COLUMNS:
            raise ParseError(f"{path} line 1: expected header {','.join(SCORED_COLUMNS)}")
        for lineno, row in enumerate(reader, start=2):
            try:
                rows.append((int(row[0]), float(row[12])))
            except (ValueError, IndexError) as exc:
                raise ParseError(f"{path} line {lineno}: malformed scored row: {exc}") from None
    return rows


def cmd_report(args) -> int:
    entries = []
    for path in args.scored:
        label = Path(path).stem
        rows = _read_scored(path)
        retained = [(rid, s) for rid, s in rows if rid > args.warmup_rounds]
        if not retained:
            raise ParseError(
                f"{path}: no rounds retained past warmup_rounds={args.warmup_rounds}"
            )
        scores = [s for _, s in retained]
        entries.append(
            {
                "label": label,
                "retained": retained,
                "mean": statistics.fmean(scores),
                "stddev": statistics.pstdev(scores),
                "n": len(scores),
            }
        )
    width = max(len(e["label"]) for e in entries)
    width = max(width, len("variant"))
    print(f"{'variant':<{width}}  {'n':>5}  {'games':>5}  {'mean':>10}  {'stddev':>10}")
    for e in entries:
        games = e["n"] // args.rounds_per_game
        print(
            f"{e['label']:<{width}}  {e['n']:>5}  {games:>5}  "
            f"{e['mean']:>10.6f}  {e['stddev']:>10.6f}"
        )
    print(
        f"(population stddev; rounds with round_id <= {args.warmup_rounds} discarded; "
        f"{args.rounds_per_game} rounds per game)"
    )
    if args.plot_out:
        with open(args.plot_out, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["variant", "round_id", "score"])
            for e in entries:
                for rid, s in e["retained"]:
                    writer.writerow([e["label"], rid, repr(s)])
    if args.summary_out:
        with open(args.summary_out, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["variant", "mean", "stddev", "n"])
            for e in entries:
                writer.writerow([e["label"], repr(e["mean"]), repr(e["stddev"]), e["n"]])
    return EXIT_OK


def cmd_agent(args) -> int:
    from frameguard import agents

    return agents.run_from_args(args)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="frameguard",
        description="fairness-calibrated evaluation harness for real-time game agents",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("probe", help="measure transport overhead with a sandbox client")
    p.add_argument("--out", required=True, help="output path prefix")
    p.add_argument("--config", default=None, help="key = value config file")
    p.add_argument("--set", action="append", metavar="KEY=VALUE")
    p.add_argument("--port", type=int, default=None)
    p.add_argument("--agent-cmd", default=None,
                   help="client launcher (default: the native sandbox agent)")
    p.add_argument("--label", default="probe")
    p.set_defaults(func=cmd_probe)

    p = sub.add_parser("calibrate", help="derive the equalizing delay from two probes")
    p.add_argument("fast_summary")
    p.add_argument("slow_summary")
    p.add_argument("--granularity-us", type=int, default=50)
    p.add_argument("--record", default=None, help="append a JSON line here")
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("run", help="run an experiment plan")
    p.add_argument("plan")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--set", action="append", metavar="KEY=VALUE")
    p.add_argument("--port", type=int, default=None)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("score", help="score a results CSV")
    p.add_argument("results")
    p.add_argument("-o", "--out", required=True)
    p.add_argument("--hp-total", type=int, default=400)
    p.add_argument("--time-total", type=int, default=3600)
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("report", help="compare scored variants")
    p.add_argument("scored", nargs="+")
    p.add_argument("--warmup-rounds", type=int, default=6)
    p.add_argument("--rounds-per-game", type=int, default=3)
    p.add_argument("--plot-out", default=None)
    p.add_argument("--summary-out", default=None)
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("agent", help="run an agent client")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=None)
    p.add_argument("--mode", choices=("sandbox", "fixedload"), default="sandbox")
    p.add_argument("--processing-us", type=int, default=0)
    p.add_argument("--extra-transport-us", type=int, default=0)
    p.add_argument("--delay-us", type=int, default=0)
    p.add_argument("--label", default=None)
    p.add_argument("--guard-us", type=int, default=2000)
    p.set_defaults(func=cmd_agent)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ParseError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except ValueError as exc:
        # CSV readers raise with line positions; same exit class
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARSE


if __name__ == "__main__":
    sys.exit(main())
