"""
Operator entry point: ``python -m app <subcommand>``.

Records go to stdout (JSON or CSV); logs go to stderr. Exit codes:
0 success, 2 configuration error, 3 transport error.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

from app.config import SETTINGS
from app.engine.attacks.estimators import report_from_outcomes
from app.engine.attacks.theta_oracle import predicted_rates
from app.engine.core.constants import (
    DEFAULT_EPS, DEFAULT_K, DEFAULT_M_S, DEFAULT_M_Y, DEFAULT_R, DEFAULT_SESSIONS,
    EXIT_CONFIG, EXIT_OK, EXIT_TRANSPORT, SWEEP_AXES,
)
from app.engine.core.errors import ConfigError, TransportError
from app.engine.core.models import KeyPair, Params, SessionOutcome
from app.engine.core.utils import configure_logging, parse_endpoint
from app.engine.hhb_engine import ExperimentRecord, HHBEngine, generate_keys, resolve_seed
from app.engine.netio.roles import MitmProxy, ReaderServer, TagClient, attack_schedule
from app.engine.calculators.statistics import rate_summary
from app.schemas import KeyFile, parse_spec

log = logging.getLogger("app.cli")


# === РАЗБОР АРГУМЕНТОВ ===

def _protocol_flags() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--k", type=int, default=DEFAULT_K, help="secret length")
    p.add_argument("--r", type=int, default=DEFAULT_R, help="HB rounds per session")
    p.add_argument("--eps", type=float, default=DEFAULT_EPS, help="noise rate, snapped to parts-per-2^16")
    p.add_argument("--u", type=int, default=None, help="acceptance threshold (default: 3-sigma rule)")
    p.add_argument("--seed", type=int, default=None, help="master seed (drawn and printed when absent)")
    p.add_argument("--keys", type=Path, default=None, help="key file {k, s_hex, y_hex}")
    p.add_argument("--format", choices=("json", "csv"), default="json")
    p.add_argument("--log-level", default=SETTINGS.log_level)
    return p


def _run_flags() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--workers", type=int, default=SETTINGS.workers, help="session worker processes")
    p.add_argument("--transport", choices=("inproc", "tcp"), default="inproc")
    return p


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="python -m app", description="hHB protocol lab and MITM key recovery")
    sub = parser.add_subparsers(dest="command", required=True)
    proto, run = _protocol_flags(), _run_flags()

    p = sub.add_parser("keygen", parents=[proto], help="write a random key file")
    p.add_argument("--out", type=Path, default=None, help="output file (default: stdout)")

    p = sub.add_parser("simulate", parents=[proto, run], help="honest / coin-flip / impersonation sessions")
    p.add_argument("--scenario", choices=("honest", "coin-flip-adversary", "impersonate"), default="honest")
    p.add_argument("--sessions", type=int, default=DEFAULT_SESSIONS)
    p.add_argument("--candidate", type=Path, default=None, help="tag key file for impersonate")

    p = sub.add_parser("attack-y", parents=[proto, run], help="recover y by flipping blinding bits")
    p.add_argument("--m", type=int, default=DEFAULT_M_Y, help="sessions per bit")

    p = sub.add_parser("attack-s", parents=[proto, run], help="recover s by flipping p0-exchange c bits")
    p.add_argument("--m", type=int, default=DEFAULT_M_S, help="sessions per bit")
    _s_attack_flags(p)

    p = sub.add_parser("attack-full", parents=[proto, run], help="recover (s, y) then impersonate")
    p.add_argument("--m-y", type=int, default=DEFAULT_M_Y)
    p.add_argument("--m-s", type=int, default=DEFAULT_M_S)
    p.add_argument("--sessions", type=int, default=DEFAULT_SESSIONS, help="impersonation sessions")
    _s_attack_flags(p)

    p = sub.add_parser("sweep", parents=[proto, run], help="run one scenario over a parameter axis")
    p.add_argument("--scenario", default="honest")
    p.add_argument("--axis", choices=SWEEP_AXES, required=True)
    p.add_argument("--values", required=True, help="comma separated values")
    p.add_argument("--sessions", type=int, default=DEFAULT_SESSIONS)
    p.add_argument("--m-y", type=int, default=DEFAULT_M_Y)
    p.add_argument("--m-s", type=int, default=DEFAULT_M_S)

    p = sub.add_parser("serve-reader", parents=[proto], help="accept tag connections as the reader")
    p.add_argument("--listen", required=True, help="host:port")
    p.add_argument("--sessions", type=int, default=0, help="stop after N sessions (0: run until interrupted)")
    p.add_argument("--first-session", type=int, default=0)

    p = sub.add_parser("run-tag", parents=[proto], help="connect to a reader (or proxy) as the tag")
    p.add_argument("--connect", required=True, help="host:port")
    p.add_argument("--sessions", type=int, default=1)
    p.add_argument("--first-session", type=int, default=0)

    p = sub.add_parser("run-proxy", parents=[proto], help="relay tag <-> reader traffic through an interceptor")
    p.add_argument("--listen", required=True, help="host:port")
    p.add_argument("--upstream", required=True, help="reader host:port")
    p.add_argument("--attack", choices=("none", "y", "s"), default="none")
    p.add_argument("--m", type=int, default=None, help="sessions per bit (default 5 for y, 48 for s)")
    p.add_argument("--sessions", type=int, default=0, help="relay N sessions when --attack none (0: forever)")
    p.add_argument("--first-session", type=int, default=0)
    p.add_argument("--force-a", action="store_true")
    return parser


def _s_attack_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--force-a", action="store_true", help="force the attacked challenge bit to 1")
    p.add_argument("--compare-force-a", action="store_true", help="also run with force-a toggled")
    p.add_argument("--pairs", default="0,1,2", help="wire pairs to flip, e.g. 0,1,2 or 1")


def _int_list(text: str, name: str) -> List[int]:
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise ConfigError(f"bad --{name}", {name: f"expected comma separated integers, got {text!r}"}) from None


def _float_list(text: str, name: str) -> List[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise ConfigError(f"bad --{name}", {name: f"expected comma separated numbers, got {text!r}"}) from None


def _read_keyfile(path: Path) -> Dict[str, Any]:
    try:
        data = json.loads(path.read_text())
    except (OSError, ValueError) as e:
        raise ConfigError(f"cannot read key file {path}", {"keys": str(e)}) from None
    KeyPair.from_json(data)
    return data


# === КОМАНДЫ ===

def _spec_data(args: argparse.Namespace, scenario: str) -> Dict[str, Any]:
    data: Dict[str, Any] = {
        "scenario": scenario,
        "k": args.k,
        "r": args.r,
        "eps": args.eps,
        "u": args.u,
        "seed": args.seed,
        "workers": args.workers,
        "transport": args.transport,
        "format": args.format,
    }
    if args.keys is not None:
        data["keys"] = _read_keyfile(args.keys)
    for name in ("sessions", "m_y", "m_s", "force_a", "compare_force_a"):
        if hasattr(args, name):
            data[name] = getattr(args, name)
    if getattr(args, "pairs", None) is not None:
        data["pairs"] = _int_list(args.pairs, "pairs")
    if getattr(args, "candidate", None) is not None:
        data["candidate"] = _read_keyfile(args.candidate)
    return data


def _engine() -> HHBEngine:
    return HHBEngine(min_key_length=SETTINGS.min_key_length, io_timeout=SETTINGS.io_timeout)


def _emit(text: str) -> None:
    sys.stdout.write(text if text.endswith("\n") else text + "\n")
    sys.stdout.flush()


def _experiment(args: argparse.Namespace, scenario: str) -> int:
    data = _spec_data(args, scenario)
    if scenario == "attack-y":
        data["m_y"] = args.m
    elif scenario == "attack-s":
        data["m_s"] = args.m
    spec = parse_spec(data)
    record = _engine().run_experiment(spec)
    log.info("[CLI] effective config: %s", json.dumps(record.spec))
    _emit(record.render(spec.format))
    return EXIT_OK


def cmd_keygen(args: argparse.Namespace) -> int:
    if args.k < SETTINGS.min_key_length:
        raise ConfigError("key too short", {"k": f"must be >= {SETTINGS.min_key_length}"})
    seed = resolve_seed(args.seed)
    log.info("[CLI] keygen k=%d seed=%d", args.k, seed)
    text = json.dumps(KeyFile.of(generate_keys(args.k, seed)).model_dump(), indent=2) + "\n"
    if args.out is None:
        _emit(text)
    else:
        args.out.write_text(text)
    return EXIT_OK


def cmd_sweep(args: argparse.Namespace) -> int:
    spec = parse_spec(_spec_data(args, args.scenario))
    records = _engine().sweep(spec, args.axis, _float_list(args.values, "values"))
    if spec.format == "csv":
        _emit("".join(r.to_csv() for r in records))
    else:
        _emit(json.dumps([r.as_dict() for r in records], indent=2))
    return EXIT_OK


def _network_params(args: argparse.Namespace) -> tuple[Params, int]:
    params = Params.build(args.k, args.r, args.eps, args.u).validate(SETTINGS.min_key_length)
    seed = resolve_seed(args.seed)
    return params, seed


def _network_keys(args: argparse.Namespace, params: Params, seed: int) -> KeyPair:
    if args.keys is not None:
        keys = KeyPair.from_json(_read_keyfile(args.keys))
        if keys.k != params.k:
            raise ConfigError("key length does not match k", {"keys": f"k = {keys.k}, expected {params.k}"})
        return keys
    return generate_keys(params.k, seed)


def _network_record(args: argparse.Namespace, params: Params, seed: int, rows: List[Dict[str, Any]],
                    extra: Optional[Dict[str, Any]] = None) -> ExperimentRecord:
    spec = {"command": args.command, "seed": seed, **params.as_dict(), **(extra or {})}
    log.info("[CLI] effective config: %s", json.dumps(spec))
    done = [r for r in rows if r["outcome"] != SessionOutcome.ABORTED.value]
    accepts = sum(1 for r in done if r["outcome"] == SessionOutcome.ACCEPT.value)
    rates = {"accept": dict(rate_summary(accepts, len(done)), aborted=len(rows) - len(done))}
    return ExperimentRecord(spec=spec, outcomes=rows, rates=rates)


def cmd_serve_reader(args: argparse.Namespace) -> int:
    params, seed = _network_params(args)
    keys = _network_keys(args, params, seed)
    server = ReaderServer(params, keys, seed, parse_endpoint(args.listen),
                          first_session=args.first_session, timeout=SETTINGS.io_timeout)
    with server:
        try:
            server.wait_for(args.sessions if args.sessions > 0 else float("inf"))
        except KeyboardInterrupt:
            log.info("[CLI] reader interrupted")
    rows = [
        {"stage": "reader", "index": rec.index, "outcome": rec.outcome.value, "wrong_count": rec.wrong_count}
        for rec in sorted(server.records.values(), key=lambda rec: rec.index)
    ]
    _emit(_network_record(args, params, seed, rows, {"listen": args.listen}).render(args.format))
    return EXIT_OK


def cmd_run_tag(args: argparse.Namespace) -> int:
    params, seed = _network_params(args)
    keys = _network_keys(args, params, seed)
    client = TagClient(keys, seed, parse_endpoint(args.connect), timeout=SETTINGS.io_timeout,
                       min_key_length=SETTINGS.min_key_length)
    records = client.run(args.sessions, args.first_session)
    rows = [{"stage": "tag", "index": rec.index, "outcome": rec.outcome.value} for rec in records]
    _emit(_network_record(args, params, seed, rows, {"connect": args.connect}).render(args.format))
    return EXIT_OK


def cmd_run_proxy(args: argparse.Namespace) -> int:
    seed = resolve_seed(args.seed)
    upstream, listen = parse_endpoint(args.upstream), parse_endpoint(args.listen)
    if args.attack == "none":
        proxy = MitmProxy(upstream, listen, seed, first_session=args.first_session, timeout=SETTINGS.io_timeout)
        with proxy:
            try:
                proxy.wait_for(args.sessions if args.sessions > 0 else float("inf"))
            except KeyboardInterrupt:
                log.info("[CLI] proxy interrupted")
        results = [proxy.results[i] for i in sorted(proxy.results)]
        rows = [dict(res.as_dict(), stage="relay") for res in results]
        params = proxy.params or Params.build(args.k, args.r, args.eps, args.u)
        _emit(_network_record(args, params, seed, rows, {"attack": "none"}).render(args.format))
        return EXIT_OK

    m = args.m if args.m is not None else (DEFAULT_M_Y if args.attack == "y" else DEFAULT_M_S)
    if m < 1:
        raise ConfigError("bad --m", {"m": "must be >= 1"})
    schedule = attack_schedule(args.attack, m, args.first_session, force_a=args.force_a)
    proxy = MitmProxy(upstream, listen, seed, schedule=schedule, timeout=SETTINGS.io_timeout)
    with proxy:
        proxy.wait_for(1)
        params = proxy.params
        if params is None:
            raise TransportError("first relayed session did not carry Params")
        total = params.k * m
        log.info("[ATTACK] %s-stage over the wire: k=%d, m=%d, waiting for %d sessions",
                 args.attack, params.k, m, total)
        proxy.wait_for(total)
    report = report_from_outcomes(args.attack, params.k, m, proxy.ordered_results(total, args.first_session),
                                  predicted_rates(params), params.r, force_a=args.force_a)
    record = _network_record(
        args, params, seed,
        [dict(res.as_dict(), stage=f"attack-{args.attack}", bit=n // m) for n, res in enumerate(report.results)],
        {"attack": args.attack, "m": m, "force_a": args.force_a},
    )
    record.recovery = {args.attack: report.as_dict()}
    _emit(record.render(args.format))
    return EXIT_OK


_COMMANDS = {
    "keygen": cmd_keygen,
    "simulate": lambda a: _experiment(a, a.scenario),
    "attack-y": lambda a: _experiment(a, "attack-y"),
    "attack-s": lambda a: _experiment(a, "attack-s"),
    "attack-full": lambda a: _experiment(a, "attack-full"),
    "sweep": cmd_sweep,
    "serve-reader": cmd_serve_reader,
    "run-tag": cmd_run_tag,
    "run-proxy": cmd_run_proxy,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    configure_logging(args.log_level)
    try:
        return _COMMANDS[args.command](args)
    except ConfigError as e:
        for line in e.details():
            print(f"config error: {line}", file=sys.stderr)
        return EXIT_CONFIG
    except TransportError as e:
        print(f"transport error: {e}", file=sys.stderr)
        return EXIT_TRANSPORT
