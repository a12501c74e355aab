"""Command-line entry point: ``disarmlab <subcommand> ...``.

Configuration is a JSON file.  Run parameters may sit at the top level or
under ``"run"``; the remaining sections are optional::

    {
      "store": "work/store.db",
      "taxonomy": "disarm_techniques.json",
      "dataset_name": "china_like",
      "max_iterations": 15,
      "provider": {"kind": "scripted", "playbook": "playbook.json"},
      "limits": {"query_timeout": 30, "max_rows": 100000},
      "pricing": {"prompt": 3.0, "completion": 15.0}
    }

Relative paths are resolved against the config file's directory.  Flags
given on the command line override the file.  Exit status is 0 on success,
1 on a user error (bad input, configuration or arguments) and 2 on an
internal error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Any

from . import synth
from .datastore import DatasetManifest, IngestError, Store, UnknownDataset
from .engine import ConfigMismatch, RunConfig, UnknownRun, resume_run, run_investigation
from .provider import ProviderConfigError, ProviderError, make_provider
from .report import TraceError, export_report, trace
from .sandbox import QueryLimits
from .taxonomy import TaxonomyError, default_taxonomy_path, load_taxonomy
from .verifier import verify_run

logger = logging.getLogger("disarmlab")

PRESETS = {
    "china_like": lambda: synth.china_like_spec(),
    "china_null": lambda: synth.china_like_spec(planted=False, dataset_name="china_null"),
    "moldova_like": lambda: synth.moldova_like_spec(),
}


class UsageError(Exception):
    """Bad arguments or configuration; reported with exit status 1."""


USER_ERRORS = (
    UsageError, IngestError, UnknownDataset, UnknownRun, ConfigMismatch, ProviderConfigError, ProviderError,
    TaxonomyError, TraceError, synth.SynthError, FileNotFoundError, json.JSONDecodeError, ValueError, KeyError,
)


@dataclass
class AppConfig:
    store: Path = Path("disarmlab.db")
    taxonomy: Path = field(default_factory=default_taxonomy_path)
    run: dict[str, Any] = field(default_factory=dict)
    provider: dict[str, Any] = field(default_factory=lambda: {"kind": "scripted"})
    limits: dict[str, Any] = field(default_factory=dict)
    pricing: dict[str, float] | None = None

    @classmethod
    def load(cls, path: str | Path | None) -> "AppConfig":
        if path is None:
            return cls()
        path = Path(path)
        if not path.is_file():
            raise UsageError(f"config file {path} does not exist")
        try:
            raw = json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise UsageError(f"cannot parse config {path}: {exc}") from None
        if not isinstance(raw, dict):
            raise UsageError(f"config {path} must be a JSON object")
        base = path.resolve().parent
        run_keys = {f.name for f in fields(RunConfig)}
        known = {"store", "taxonomy", "run", "provider", "limits", "pricing"} | run_keys
        unknown = sorted(set(raw) - known)
        if unknown:
            raise UsageError(f"config {path}: unknown keys {unknown}")
        cfg = cls()
        if "store" in raw:
            cfg.store = base / raw["store"]
        if "taxonomy" in raw:
            cfg.taxonomy = base / raw["taxonomy"]
        cfg.run = {**{k: v for k, v in raw.items() if k in run_keys}, **raw.get("run", {})}
        cfg.provider = dict(raw.get("provider") or {"kind": "scripted"})
        if cfg.provider.get("playbook"):
            cfg.provider["playbook"] = str(base / cfg.provider["playbook"])
        cfg.limits = dict(raw.get("limits") or {})
        cfg.pricing = raw.get("pricing")
        return cfg

    def query_limits(self) -> QueryLimits:
        return QueryLimits(
            timeout=float(self.limits.get("query_timeout", 30.0)),
            max_rows=int(self.limits.get("max_rows", 100_000)),
        )

    def check_paths(self) -> None:
        if not Path(self.taxonomy).is_file():
            raise UsageError(f"taxonomy file {self.taxonomy} does not exist")
        if not Path(self.store).resolve().parent.is_dir():
            raise UsageError(f"store directory {Path(self.store).parent} does not exist")
        playbook = self.provider.get("playbook")
        if playbook and not Path(playbook).is_file():
            raise UsageError(f"playbook {playbook} does not exist")
        kinds = {self.provider.get("kind", "scripted")}
        if self.run.get("provider_kind") not in (None, *kinds):
            raise UsageError(
                f"run.provider_kind {self.run['provider_kind']!r} conflicts with provider.kind {kinds.pop()!r}"
            )

    def extra(self) -> dict[str, Any]:
        """Everything besides RunConfig that shapes results; hashed into the run record."""
        provider = {k: v for k, v in self.provider.items() if k != "api_key"}
        return {"provider": provider, "limits": self.limits}


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):  # argparse exits 2 by default; usage errors here are 1
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", help="JSON configuration file (see module docs for keys)")
    common.add_argument("--store", help="SQLite store path (overrides config)")
    common.add_argument("--taxonomy", help="taxonomy JSON file (overrides config; default: bundled subset)")
    common.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")

    p = _Parser(prog="disarmlab", description="Technique-grounded investigation of coordinated inauthentic behaviour.")
    sub = p.add_subparsers(dest="command", required=True, metavar="SUBCOMMAND", parser_class=_Parser)

    s = sub.add_parser("ingest", parents=[common], help="validate and load a dataset")
    s.add_argument("--manifest", required=True, help="dataset manifest JSON")
    s.add_argument("--accounts", required=True, help="accounts file (csv or jsonl)")
    s.add_argument("--messages", required=True, help="messages file (csv or jsonl)")

    s = sub.add_parser("run", parents=[common], help="start an investigation run")
    s.add_argument("--dataset", help="dataset name (overrides config dataset_name)")
    s.add_argument("--max-iterations", type=int, help="iteration budget including the EDA step")
    s.add_argument("--seed", type=int, help="run seed")
    s.add_argument("--auto-verify", action="store_true", help="verify every claim when the run completes")
    s.add_argument("--auto-report", action="store_true", help="write a report when the run completes (needs --out)")
    s.add_argument("--format", choices=("markdown", "structured"), default="markdown", help="report format")
    s.add_argument("--out", help="report output path for --auto-report")

    s = sub.add_parser("resume", parents=[common], help="continue an interrupted run")
    s.add_argument("--run-id", required=True, help="run to resume")

    s = sub.add_parser("verify", parents=[common], help="verify a run's atomic claims against labels")
    s.add_argument("--run-id", required=True, help="run to verify")
    s.add_argument("--reverify", action="store_true", help="add a new attempt even for verified claims")

    s = sub.add_parser("report", parents=[common], help="export a run report")
    s.add_argument("--run-id", required=True, help="run to report")
    s.add_argument("--format", choices=("markdown", "structured"), default="markdown", help="report format")
    s.add_argument("--out", help="output path (default: stdout)")

    s = sub.add_parser("synth", parents=[common], help="generate a labeled synthetic campaign")
    g = s.add_mutually_exclusive_group(required=True)
    g.add_argument("--spec", help="campaign spec JSON")
    g.add_argument("--preset", choices=sorted(PRESETS), help="built-in campaign shape")
    s.add_argument("--out", required=True, help="output directory")

    s = sub.add_parser("trace", parents=[common], help="show the provenance chain of an atomic claim")
    s.add_argument("--id", required=True, dest="atomic_id", help="atomic evidence id")

    sub.add_parser("taxonomy-check", parents=[common], help="validate a taxonomy file")
    return p


def _app_config(args: argparse.Namespace) -> AppConfig:
    cfg = AppConfig.load(args.config)
    if args.store:
        cfg.store = Path(args.store)
    if args.taxonomy:
        cfg.taxonomy = Path(args.taxonomy)
    return cfg


def _emit(obj: Any) -> None:
    print(json.dumps(obj, indent=2, ensure_ascii=False, sort_keys=True, default=str))


def _write_out(text: str, out: str | None) -> None:
    if out is None:
        sys.stdout.write(text if text.endswith("\n") else text + "\n")
        return
    Path(out).write_text(text if text.endswith("\n") else text + "\n", encoding="utf-8")
    logger.info("wrote %s", out)


def _verification_summary(results) -> dict[str, Any]:
    counts: dict[str, int] = {}
    for r in results:
        counts[r.status] = counts.get(r.status, 0) + 1
    return {"verified": len(results), "by_status": counts}


def cmd_ingest(args, cfg: AppConfig) -> int:
    store = Store(cfg.store, cfg.query_limits())
    report = store.ingest_dataset(DatasetManifest.load(args.manifest), args.accounts, args.messages)
    _emit(report.to_dict())
    return 0


def cmd_run(args, cfg: AppConfig) -> int:
    if args.dataset:
        cfg.run["dataset_name"] = args.dataset
    if args.max_iterations is not None:
        cfg.run["max_iterations"] = args.max_iterations
    if args.seed is not None:
        cfg.run["seed"] = args.seed
    if "dataset_name" not in cfg.run:
        raise UsageError("no dataset: set dataset_name in the config or pass --dataset")
    if args.auto_report and not args.out:
        raise UsageError("--auto-report needs --out")
    cfg.check_paths()
    cfg.run.setdefault("provider_kind", cfg.provider.get("kind", "scripted"))
    config = RunConfig.from_dict(cfg.run)
    taxonomy = load_taxonomy(cfg.taxonomy)
    store = Store(cfg.store, cfg.query_limits())
    provider = make_provider(cfg.provider, taxonomy, atomic_cap=config.atomic_cap)
    summary = run_investigation(store, taxonomy, provider, config, cfg.extra())
    return _after_run(args, cfg, store, taxonomy, summary)


def _after_run(args, cfg: AppConfig, store: Store, taxonomy, summary) -> int:
    out: dict[str, Any] = {"run": summary.__dict__}
    if getattr(args, "auto_verify", False):
        out["verification"] = _verification_summary(verify_run(store, summary.run_id))
    if getattr(args, "auto_report", False):
        _write_out(export_report(store, summary.run_id, args.format, taxonomy, cfg.pricing), args.out)
        out["report"] = args.out
    _emit(out)
    return 0 if summary.status == "complete" else 1


def cmd_resume(args, cfg: AppConfig) -> int:
    store = Store(cfg.store, cfg.query_limits())
    with store.read() as conn:
        row = conn.execute("SELECT config FROM runs WHERE run_id = ?", (args.run_id,)).fetchone()
    if row is None:
        raise UsageError(f"unknown run {args.run_id!r}")
    frozen = json.loads(row["config"])
    taxonomy = load_taxonomy(cfg.taxonomy)
    config = None
    if args.config:
        cfg.check_paths()
        cfg.run.setdefault("provider_kind", cfg.provider.get("kind", "scripted"))
        config = RunConfig.from_dict(cfg.run)
        provider_settings, extra = cfg.provider, cfg.extra()
    else:
        provider_settings, extra = frozen.get("provider") or {"kind": "scripted"}, None
    provider = make_provider(provider_settings, taxonomy, atomic_cap=int(frozen["run"].get("atomic_cap", 3)))
    summary = resume_run(store, taxonomy, provider, args.run_id, config, extra)
    if summary.notice:
        print(summary.notice, file=sys.stderr)
    return _after_run(args, cfg, store, taxonomy, summary)


def cmd_verify(args, cfg: AppConfig) -> int:
    store = Store(cfg.store, cfg.query_limits())
    _emit(_verification_summary(verify_run(store, args.run_id, reverify=args.reverify)))
    return 0


def cmd_report(args, cfg: AppConfig) -> int:
    store = Store(cfg.store, cfg.query_limits())
    taxonomy = load_taxonomy(cfg.taxonomy) if Path(cfg.taxonomy).is_file() else None
    _write_out(export_report(store, args.run_id, args.format, taxonomy, cfg.pricing), args.out)
    return 0


def cmd_synth(args, cfg: AppConfig) -> int:
    if args.preset:
        spec = PRESETS[args.preset]()
    else:
        try:
            spec = synth.CampaignSpec.from_dict(json.loads(Path(args.spec).read_text(encoding="utf-8")))
        except TypeError as exc:
            raise UsageError(f"bad campaign spec {args.spec}: {exc}") from None
    files = synth.generate_campaign(spec, args.out)
    _emit({k: str(v) for k, v in files.__dict__.items()})
    return 0


def cmd_trace(args, cfg: AppConfig) -> int:
    store = Store(cfg.store, cfg.query_limits())
    taxonomy = load_taxonomy(cfg.taxonomy)
    _emit(trace(store, args.atomic_id, taxonomy).to_dict())
    return 0


def cmd_taxonomy_check(args, cfg: AppConfig) -> int:
    tax = load_taxonomy(cfg.taxonomy)
    subs = sum(1 for t in tax if t.is_subtechnique)
    _emit({"path": str(cfg.taxonomy), "version": tax.version, "techniques": len(tax.ids()), "subtechniques": subs})
    return 0


COMMANDS = {
    "ingest": cmd_ingest,
    "run": cmd_run,
    "resume": cmd_resume,
    "verify": cmd_verify,
    "report": cmd_report,
    "synth": cmd_synth,
    "trace": cmd_trace,
    "taxonomy-check": cmd_taxonomy_check,
}


def dispatch(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        return COMMANDS[args.command](args, _app_config(args))
    except TaxonomyError as exc:
        print(f"error: {exc}", file=sys.stderr)
        for problem in getattr(exc, "problems", []) or []:
            print(f"  - {problem}", file=sys.stderr)
        return 1
    except USER_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception:
        logger.exception("internal error")
        return 2


def main() -> None:
    sys.exit(dispatch())


if __name__ == "__main__":
    main()
