"""Command-line entry point: ``swarmlearn <subcommand> [flags]``."""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import os
import sys
from pathlib import Path
from typing import Optional, Sequence

from .chaincore import Chain, verify_genesis
from .config import ExperimentConfig, default_config, normalize_kind
from .faults import run_fault_matrix
from .orchestrator import (
    RUNS_HEADER,
    SWEEP_HEADER,
    run_local_epoch_sweep,
    run_primary_experiment,
    run_volume_sweep,
    sweep_row,
)
from .stats import TimingLedger, timing_report, write_summary_csv


class CliError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise CliError(f"usage: {message}")


def _parser() -> argparse.ArgumentParser:
    p = _Parser(prog="swarmlearn", description="Swarm Learning simulator")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp, seeds=True):
        sp.add_argument("--kind", help="PV, Gas or WellLog")
        sp.add_argument("--config", help="JSON config or a manifest.json from an earlier run")
        sp.add_argument("--out-dir", default="out")
        if seeds:
            sp.add_argument("--seed", type=int, help="run a single model seed")

    sp = sub.add_parser("primary", help="LL / CL / SL cross-validation")
    common(sp)
    sp.add_argument("--fold", type=int, help="run a single fold")
    sp = sub.add_parser("volume", help="data volume sweep on fold 0")
    common(sp)
    sp.add_argument("--selseed", type=int, default=0)
    sp = sub.add_parser("local-epoch", help="local epoch sweep at a fixed epoch budget")
    common(sp)
    sp.add_argument("--fold", type=int, help="fold to use (default from config)")
    sp = sub.add_parser("faults", help="scripted adversary scenarios")
    sp.add_argument("--out-dir", default="out")
    sp = sub.add_parser("inspect-chain", help="print or verify an exported chain")
    sp.add_argument("path")
    sp.add_argument("--verify", action="store_true")
    sp.add_argument("--accounts", help="accounts.json with verify keys (default: next to the chain)")
    return p


def load_config(args) -> ExperimentConfig:
    kind = normalize_kind(args.kind) if args.kind else None
    if args.config:
        path = Path(args.config)
        if not path.is_file():
            raise CliError(f"config not found: {path}")
        try:
            doc = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise CliError(f"config {path} is not valid JSON: {exc.msg} at line {exc.lineno}") from None
        if isinstance(doc.get("config"), dict):
            doc = doc["config"]
        if kind is not None:
            if "kind" in doc and normalize_kind(doc["kind"]) != kind:
                raise CliError(f"--kind {kind} conflicts with config kind {doc['kind']}")
            doc["kind"] = kind
        elif "kind" in doc:
            doc["kind"] = normalize_kind(doc["kind"])
        cfg = ExperimentConfig.from_dict(doc)
    else:
        cfg = default_config(kind or "Gas")
    changes = {}
    if getattr(args, "seed", None) is not None:
        changes["seeds"] = [args.seed]
    env = os.environ.get("SWARM_SEED")
    if env:
        try:
            changes["seeds"] = [int(env)]
        except ValueError:
            raise CliError(f"SWARM_SEED must be an integer, got {env!r}") from None
    if getattr(args, "fold", None) is not None:
        if args.command == "local-epoch":
            changes["local_epoch_fold"] = args.fold
        else:
            changes["folds"] = [args.fold]
    return cfg.replace(**changes) if changes else cfg


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _write_csv(path: Path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)


def _manifest(out: Path, command: str, cfg: ExperimentConfig, artifacts: Sequence[str], extra: Optional[dict] = None):
    doc = {
        "command": command,
        "config": cfg.to_dict(),
        "seeds": {"model": cfg.seeds, "data": cfg.data_seed, **(extra or {})},
        "artifacts": {name: _sha256(out / name) for name in artifacts},
    }
    (out / "manifest.json").write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


def cmd_primary(args) -> int:
    cfg = load_config(args)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    result = run_primary_experiment(cfg)
    _write_csv(out / "runs.csv", RUNS_HEADER, result.run_rows())
    write_summary_csv(result.summary, out / "summary.csv")
    artifacts = ["runs.csv", "summary.csv"]
    session = result.first_session
    if session is not None:
        (out / "chain.jsonl").write_text(session.network.reference_node().chain.to_jsonl())
        (out / "accounts.json").write_text(json.dumps(session.accounts_doc(), indent=2, sort_keys=True) + "\n")
        (out / "contract.json").write_text(session.contract.snapshot_json() + "\n")
        session.network.write_commit_log(out / "commit_log.csv")
        artifacts += ["chain.jsonl", "accounts.json", "contract.json", "commit_log.csv"]
    timing_rows = []
    for r in result.reports:
        if r.timing is not None:
            rep = timing_report(r.timing)
            timing_rows.append([r.fold, r.seed] + [repr(rep[k]) for k in rep])
    if timing_rows:
        keys = list(timing_report(TimingLedger()))
        # wall-clock figures vary between runs; kept out of the manifest hashes
        _write_csv(out / "timing.csv", ["fold", "seed"] + keys, timing_rows)
    _manifest(out, "primary", cfg, artifacts)
    for line in (out / "summary.csv").read_text().splitlines():
        print(line)
    return 0


def cmd_volume(args) -> int:
    cfg = load_config(args)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    points = run_volume_sweep(cfg, args.selseed)
    _write_csv(out / "volume.csv", SWEEP_HEADER, [sweep_row(p) for p in points])
    _manifest(out, "volume", cfg, ["volume.csv"], {"selseed": args.selseed})
    print(f"wrote {out / 'volume.csv'} ({len(points)} points)")
    return 0


def cmd_local_epoch(args) -> int:
    cfg = load_config(args)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    points = run_local_epoch_sweep(cfg)
    _write_csv(out / "local_epoch.csv", SWEEP_HEADER, [sweep_row(p) for p in points])
    _manifest(out, "local-epoch", cfg, ["local_epoch.csv"])
    print(f"wrote {out / 'local_epoch.csv'} ({len(points)} points)")
    return 0


def cmd_faults(args) -> int:
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    results = run_fault_matrix()
    _write_csv(out / "faults.csv", ["scenario", "passed", "detail"], [[r.name, r.passed, r.detail] for r in results])
    for r in results:
        print(f"{'PASS' if r.passed else 'FAIL'} {r.name}: {r.detail}")
    return 0 if all(r.passed for r in results) else 1


def cmd_inspect_chain(args) -> int:
    path = Path(args.path)
    if not path.is_file():
        raise CliError(f"chain not found: {path}")
    try:
        chain = Chain.from_jsonl(path.read_text())
    except Exception as exc:  # any decode problem means the file is not a valid chain
        raise CliError(f"cannot parse chain {path}: {type(exc).__name__}: {exc}") from None
    for i, b in enumerate(chain.blocks):
        print(f"{i} {b.block_hash.hex()} packager={b.packager} messages={len(b.messages)} ts={b.timestamp}")
    if args.verify:
        acc_path = Path(args.accounts) if args.accounts else path.with_name("accounts.json")
        if not acc_path.is_file():
            raise CliError(f"accounts not found: {acc_path}")
        keys = {k: bytes.fromhex(v) for k, v in json.loads(acc_path.read_text()).items()}
        if not (chain.blocks and verify_genesis(chain.blocks[0]) and chain.validate(keys)):
            raise CliError(f"chain verification failed: {path}")
        print(f"verified {len(chain)} blocks")
    return 0


COMMANDS = {
    "primary": cmd_primary,
    "volume": cmd_volume,
    "local-epoch": cmd_local_epoch,
    "faults": cmd_faults,
    "inspect-chain": cmd_inspect_chain,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    try:
        args = _parser().parse_args(argv)
        return COMMANDS[args.command](args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, KeyError, OSError) as exc:
        msg = " ".join(str(exc).split())
        print(f"error: {type(exc).__name__}: {msg}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
