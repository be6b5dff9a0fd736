"""Command-line front end.

Exit codes: 0 success, 1 protocol aborted (an attack was detected during
``run``), 2 usage error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
from fractions import Fraction

from . import __version__, analysis, streams
from .adversary import STRATEGIES, make_strategy
from .protocol import (
    ConfigurationError,
    ProtocolConfig,
    concat_placement,
    rational_json,
    run_protocol,
    swap_placement,
)
from .qcore import BellKind

EXIT_OK, EXIT_ABORTED, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


def parse_hex_bits(text: str, n: int) -> list[int]:
    """``0xA5`` with ``n = 8`` -> ``[1, 0, 1, 0, 0, 1, 0, 1]`` (most significant bit first)."""
    try:
        value = int(text, 16)
    except ValueError:
        raise UsageError(f"not a hex number: {text!r}") from None
    if value < 0 or value >= 1 << n:
        raise UsageError(f"{text} does not fit in {n} bits")
    return [(value >> (n - 1 - i)) & 1 for i in range(n)]


def parse_placement(text: str, n: int) -> tuple[int, ...]:
    if text == "concat":
        return concat_placement(n)
    if text == "swap":
        return swap_placement(n)
    if text.startswith("perm:"):
        try:
            one_based = [int(p) for p in text[5:].split(",")]
        except ValueError:
            raise UsageError(f"bad permutation {text!r}") from None
        return tuple(p - 1 for p in one_based)
    raise UsageError(f"placement must be concat, swap or perm:<list>, got {text!r}")


def resolve_seed(arg: int | None) -> tuple[int, bool]:
    """(seed, was_drawn): the flag wins, then ``SQPC_SEED``, then a fresh draw."""
    if arg is not None:
        return streams.check_seed(arg), False
    env = os.environ.get("SQPC_SEED")
    if env:
        try:
            return streams.check_seed(int(env, 0)), False
        except ValueError as exc:
            raise UsageError(f"SQPC_SEED: {exc}") from None
    return streams.fresh_seed(), True


# ---------------------------------------------------------------------------
# output


def _plain(value):
    if isinstance(value, Fraction):
        return f"{value.numerator}/{value.denominator}"
    if isinstance(value, dict) and set(value) == {"num", "den", "value"}:
        return f"{value['num']}/{value['den']}"
    return value


def _flatten(d: dict, prefix: str = "") -> dict:
    out = {}
    for k, v in d.items():
        key = f"{prefix}{k}"
        v = _plain(v)
        if isinstance(v, dict):
            out.update(_flatten(v, key + "."))
        elif isinstance(v, list):
            out[key] = " ".join(str(_plain(x)) for x in v)
        else:
            out[key] = v
    return out


def render(payload, fmt: str) -> str:
    """JSON text, or CSV with one row per record (a dict becomes one row)."""
    if fmt == "json":
        return json.dumps(payload, indent=2) + "\n"
    rows = payload if isinstance(payload, list) else [payload]
    flat = [_flatten(r) for r in rows]
    fields: list[str] = []
    for r in flat:
        fields.extend(k for k in r if k not in fields)
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=fields, lineterminator="\n")
    writer.writeheader()
    writer.writerows(flat)
    return buf.getvalue()


def _report_rows(report: dict) -> list[dict]:
    rows = []
    for section, body in report.items():
        if isinstance(body, list):
            for i, item in enumerate(body):
                rows.extend({"section": f"{section}[{i}]", "key": k, "value": v} for k, v in _flatten(item).items())
        elif isinstance(body, dict):
            rows.extend({"section": section, "key": k, "value": v} for k, v in _flatten(body).items())
        else:
            rows.append({"section": "meta", "key": section, "value": body})
    return rows


# ---------------------------------------------------------------------------
# commands


def _config(args, seed: int) -> ProtocolConfig:
    return ProtocolConfig(
        n=args.n,
        placement=parse_placement(args.placement, args.n),
        key_mode=args.key_mode,
        seed=seed,
        mode=args.mode,
    )


def cmd_run(args, seed: int):
    X = parse_hex_bits(args.x, args.n)
    Y = parse_hex_bits(args.y, args.n)
    attack = make_strategy(args.strategy)
    result = run_protocol(_config(args, seed), X, Y, attack)
    if args.transcript:
        with open(args.transcript, "w", encoding="utf-8") as fh:
            fh.write(result.transcript.to_jsonl())
    out = result.to_dict()
    if attack is not None and result.knowledge is not None:
        out["knowledge"] = result.knowledge.to_dict()
    code = EXIT_ABORTED if result.outcome == "aborted" else EXIT_OK
    return out, code


def _default_scenario(strategy: str) -> str:
    return "ctrl_ctrl" if strategy.startswith("eve") else "sift_sift_checked"


def cmd_attack(args, seed: int):
    scenario = args.scenario or _default_scenario(args.strategy)
    kwargs = {"fake_bits": args.fake_bits} if args.fake_bits else {}
    report = analysis.monte_carlo_detection(
        args.strategy, scenario, args.trials, seed, BellKind(args.kind), workers=args.workers, **kwargs
    )
    out = report.to_dict()
    if args.n is not None:
        out["n"] = args.n
        out["per_run_abort"] = rational_json(analysis.per_run_detection(args.strategy, args.n, BellKind(args.kind)))
    return out, EXIT_OK


def cmd_table1(args, seed: int | None):
    result = analysis.verify_table1()
    if args.format == "csv":
        return [{k: v for k, v in r.items() if k != "simulated"} for r in result.rows], EXIT_OK
    return result.to_dict(), EXIT_OK


def cmd_efficiency(args, seed: int | None):
    return analysis.efficiency(args.n, Fraction(args.delta), args.m).to_dict(), EXIT_OK


def cmd_leakage(args, seed: int):
    return analysis.leakage_experiment(args.n, args.trials, seed, workers=args.workers).to_dict(), EXIT_OK


def cmd_report(args, seed: int):
    detection = [
        analysis.monte_carlo_detection(s, sc, args.trials, seed, workers=args.workers).to_dict()
        for s, sc in analysis.CATALOG
    ]
    leakage = [
        analysis.leakage_experiment(n, args.leakage_trials, seed, workers=args.workers).to_dict()
        for n in (2, 4, 8)
    ]
    sample = run_protocol(ProtocolConfig(n=args.n, seed=seed), [0] * args.n, [0] * args.n).to_dict()
    report = {
        "tool": "sqpc",
        "version": __version__,
        "seed": seed,
        "table1": analysis.verify_table1().to_dict(),
        "efficiency": analysis.efficiency(args.n, 0).to_dict(),
        "detection": detection,
        "leakage": leakage,
        "sample_run": sample,
    }
    if args.format == "csv":
        return _report_rows(report), EXIT_OK
    return report, EXIT_OK


COMMANDS = {
    "run": (cmd_run, True),
    "attack": (cmd_attack, True),
    "table1": (cmd_table1, False),
    "efficiency": (cmd_efficiency, False),
    "leakage": (cmd_leakage, True),
    "report": (cmd_report, True),
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--format", choices=("json", "csv"), default="json")
    common.add_argument("--seed", type=lambda s: int(s, 0), help="master seed (default: $SQPC_SEED, else fresh)")

    parser = _Parser(prog="sqpc", description="Bell-state semiquantum private comparison laboratory")
    parser.add_argument("--version", action="version", version=f"sqpc {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("run", parents=[common], help="execute one protocol run")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--x", required=True, help="Alice's input as hex")
    p.add_argument("--y", required=True, help="Bob's input as hex")
    p.add_argument("--mode", choices=("sampling", "exact"), default="sampling")
    p.add_argument("--strategy", default="none", choices=("none",) + tuple(STRATEGIES))
    p.add_argument("--placement", default="concat")
    p.add_argument("--key-mode", choices=("balanced", "padded"), default="balanced")
    p.add_argument("--transcript", help="write the transcript_v1 line-JSON here")

    p = sub.add_parser("attack", parents=[common], help="per-pair detection probability, exact and sampled")
    p.add_argument("--strategy", required=True, choices=tuple(STRATEGIES))
    p.add_argument("--scenario", choices=analysis.SCENARIOS)
    p.add_argument("--kind", choices=[k.value for k in BellKind], default="phi+")
    p.add_argument("--fake-bits", choices=("all_zero", "uniform_random"))
    p.add_argument("--n", type=int, help="also report the abort probability of a whole run of this length")
    p.add_argument("--trials", type=int, default=100_000)
    p.add_argument("--workers", type=int, default=1)

    p = sub.add_parser("table1", parents=[common], help="check the 16 Bell/unitary relations")

    p = sub.add_parser("efficiency", parents=[common], help="qubit efficiency")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--delta", default="0")
    p.add_argument("--m", type=int)

    p = sub.add_parser("leakage", parents=[common], help="early-abort rate of honest runs")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--trials", type=int, default=10_000)
    p.add_argument("--workers", type=int, default=1)

    p = sub.add_parser("report", parents=[common], help="every sub-report in one bundle")
    p.add_argument("--n", type=int, default=8)
    p.add_argument("--trials", type=int, default=10_000)
    p.add_argument("--leakage-trials", type=int, default=1_000)
    p.add_argument("--workers", type=int, default=1)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    handler, seeded = COMMANDS[args.command]
    try:
        seed = None
        if seeded:
            seed, drawn = resolve_seed(args.seed)
            if drawn:
                print(f"seed: {seed}", file=sys.stderr)
        payload, code = handler(args, seed)
    except (UsageError, ConfigurationError, ValueError) as exc:
        parser.print_usage(sys.stderr)
        print(f"sqpc: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    sys.stdout.write(render(payload, args.format))
    return code


if __name__ == "__main__":
    sys.exit(main())
