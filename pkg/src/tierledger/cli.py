"""Command-line entry point.

Commands: init, run, replay, classify, digest. Exit codes: 0 success,
1 assertion failure or detected divergence, 2 malformed input or unreadable
log. Per-transaction rejections are receipts, never process errors.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path
from typing import Optional, Sequence

from . import ledger, rules, scenario
from .model import ModelError, classify_level, tx_from_json

log = logging.getLogger("tierledger")


def _setup_logging() -> None:
    level_name = os.environ.get("TIERLEDGER_LOG_LEVEL", "error").lower()
    level = {"error": logging.ERROR, "info": logging.INFO, "debug": logging.DEBUG}.get(
        level_name, logging.ERROR
    )
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")


def _emit(args: argparse.Namespace, human: str, machine: dict) -> None:
    if args.quiet:
        return
    if args.json:
        print(json.dumps(machine, sort_keys=True))
    else:
        print(human)


def cmd_init(args: argparse.Namespace) -> int:
    try:
        cfg = rules.SystemConfig.from_json(
            json.loads(Path(args.genesis).read_text(encoding="utf-8"))
        )
    except (OSError, ValueError, KeyError, ModelError) as exc:
        log.error("cannot read genesis config: %s", exc)
        return 2
    ledger.init_log(args.logdir, cfg)
    _emit(args, f"initialized {args.logdir} (config {cfg.config_hash().hex()[:16]})",
          {"ok": True, "config_hash": cfg.config_hash().hex()})
    return 0


def cmd_run(args: argparse.Namespace) -> int:
    try:
        ok, report = scenario.run_scenario(args.scenario, logdir=args.logdir)
    except scenario.ScenarioError as exc:
        log.error("malformed scenario: %s", exc)
        if not args.quiet:
            print(f"error: {exc}", file=sys.stderr)
        return 2
    lines = [f"scenario {report['scenario']}: {'ok' if ok else 'FAILED'}"]
    for a in report["assertions"]:
        mark = "pass" if a["ok"] else "FAIL"
        lines.append(
            f"  step {a['step']} {a['check']}: {mark}"
            + ("" if a["ok"] else f" (expected {a['expected']}, got {a['actual']})")
        )
    lines.append(f"  batches={report['batches']} final_digest={report['final_digest']}")
    _emit(args, "\n".join(lines), report)
    return 0 if ok else 1


def cmd_replay(args: argparse.Namespace) -> int:
    report = ledger.replay_verify(args.logdir)
    if report.ok:
        _emit(args, "replay ok", report.to_json())
        return 0
    if report.kind == "unreadable":
        _emit(args, f"unreadable log at batch {report.batch}", report.to_json())
        return 2
    _emit(
        args,
        f"divergence at batch {report.batch}, field {report.field}: "
        f"expected {report.expected}, found {report.found}",
        report.to_json(),
    )
    return 1


def cmd_classify(args: argparse.Namespace) -> int:
    try:
        tx = tx_from_json(json.loads(Path(args.tx).read_text(encoding="utf-8")))
    except (OSError, ValueError, KeyError, ModelError) as exc:
        log.error("cannot parse transaction: %s", exc)
        if not args.quiet:
            print(f"error: {exc}", file=sys.stderr)
        return 2
    label = classify_level(tx).label
    _emit(args, label, {"level": label})
    return 0


def cmd_digest(args: argparse.Namespace) -> int:
    try:
        cfg = ledger.load_genesis(args.logdir)
        state = ledger.LedgerState()
        for i in range(ledger.batch_count(args.logdir)):
            obj = json.loads(
                (Path(args.logdir) / f"batch_{i:06d}.json").read_text(encoding="utf-8")
            )
            txs = [tx_from_json(t) for t in obj["txs"]]
            ledger.apply_batch(state, txs, obj["epoch"], cfg, workers=1)
    except (OSError, ValueError, KeyError, ModelError, ledger.BatchError) as exc:
        log.error("cannot replay log: %s", exc)
        return 2
    digest = ledger.state_digest(state).hex()
    _emit(args, digest, {"digest": digest, "batches": state.batch_number, "epoch": state.epoch})
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="tierledger", description=__doc__)
    p.add_argument("--quiet", action="store_true", help="suppress normal output")
    p.add_argument("--json", action="store_true", help="machine-readable report")
    sub = p.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("init", help="create a log directory from a genesis config")
    sp.add_argument("genesis")
    sp.add_argument("logdir")
    sp.set_defaults(func=cmd_init)

    sp = sub.add_parser("run", help="execute a scenario file against a fresh log")
    sp.add_argument("scenario")
    sp.add_argument("logdir")
    sp.set_defaults(func=cmd_run)

    sp = sub.add_parser("replay", help="re-execute a log and verify every header")
    sp.add_argument("logdir")
    sp.set_defaults(func=cmd_replay)

    sp = sub.add_parser("classify", help="print the programmability level of a transaction file")
    sp.add_argument("tx")
    sp.set_defaults(func=cmd_classify)

    sp = sub.add_parser("digest", help="replay a log and print the final state digest")
    sp.add_argument("logdir")
    sp.set_defaults(func=cmd_digest)
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    _setup_logging()
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    raise SystemExit(main())
