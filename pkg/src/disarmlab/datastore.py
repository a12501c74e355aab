"""Embedded SQLite store: unified social-media schema, ingestion and summaries.

One file holds every ingested dataset plus all run artefacts.  Account and
message rows are keyed by ``(dataset, id)``; read-only query connections
see a single dataset through temporary views (see :mod:`disarmlab.sandbox`).
"""

from __future__ import annotations

import csv
import json
import logging
import re
import sqlite3
from collections import Counter
from contextlib import contextmanager
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Iterator

from . import sandbox
from .sandbox import QueryLimits, Table

logger = logging.getLogger(__name__)

PLATFORMS = ("microblog", "messaging_channel", "other")
LABELS = ("positive", "negative", "unlabeled")
MESSAGE_TYPES = ("post", "repost", "reply", "comment")
TS_FORMAT = "%Y-%m-%d %H:%M:%S"

_DEFAULT_LABEL_MAP = {
    "positive": "positive", "pos": "positive", "1": "positive", "true": "positive",
    "io": "positive", "bot": "positive",
    "negative": "negative", "neg": "negative", "0": "negative", "false": "negative",
    "organic": "negative", "control": "negative",
    "unlabeled": "unlabeled", "": "unlabeled", "unknown": "unlabeled",
}
_URL_RE = re.compile(r"(?:https?://|www\.)\S+", re.IGNORECASE)
_HASHTAG_RE = re.compile(r"#(\w+)")
_MENTION_RE = re.compile(r"@(\w+)")
_EPOCH = datetime(1970, 1, 1, tzinfo=timezone.utc)

SCHEMA = """
CREATE TABLE IF NOT EXISTS datasets (
    name TEXT PRIMARY KEY,
    platform TEXT NOT NULL,
    time_start TEXT NOT NULL,
    time_end TEXT NOT NULL,
    manifest TEXT NOT NULL,
    ingest_report TEXT NOT NULL
);
CREATE TABLE IF NOT EXISTS accounts (
    dataset TEXT NOT NULL,
    account_id TEXT NOT NULL,
    platform TEXT NOT NULL,
    created_at TEXT,
    display_name TEXT,
    profile_description TEXT,
    label TEXT NOT NULL,
    PRIMARY KEY (dataset, account_id)
);
CREATE TABLE IF NOT EXISTS messages (
    dataset TEXT NOT NULL,
    message_id TEXT NOT NULL,
    account_id TEXT NOT NULL,
    timestamp TEXT NOT NULL,
    text TEXT NOT NULL,
    message_type TEXT NOT NULL,
    parent_id TEXT,
    channel_id TEXT,
    language TEXT,
    reaction_count INTEGER,
    link_count INTEGER NOT NULL,
    hashtags TEXT NOT NULL,
    mentions TEXT NOT NULL,
    PRIMARY KEY (dataset, message_id),
    FOREIGN KEY (dataset, account_id) REFERENCES accounts (dataset, account_id)
);
CREATE INDEX IF NOT EXISTS messages_account ON messages (dataset, account_id);
CREATE TABLE IF NOT EXISTS runs (
    run_id TEXT PRIMARY KEY,
    dataset TEXT NOT NULL,
    config TEXT NOT NULL,
    config_hash TEXT NOT NULL,
    status TEXT NOT NULL,
    next_iteration INTEGER NOT NULL,
    max_iterations INTEGER NOT NULL
);
CREATE TABLE IF NOT EXISTS iterations (
    run_id TEXT NOT NULL,
    iteration_index INTEGER NOT NULL,
    kind TEXT NOT NULL,
    mode TEXT,
    technique_id TEXT,
    status TEXT NOT NULL,
    error TEXT,
    artifact TEXT,
    query_timings TEXT,
    started_at TEXT NOT NULL,
    wall_time REAL NOT NULL,
    PRIMARY KEY (run_id, iteration_index)
);
CREATE TABLE IF NOT EXISTS findings (
    finding_id TEXT PRIMARY KEY,
    run_id TEXT NOT NULL,
    iteration_index INTEGER NOT NULL,
    technique_id TEXT NOT NULL,
    evidence_type TEXT NOT NULL,
    hypothesis TEXT NOT NULL,
    plan TEXT NOT NULL,
    metric_values TEXT NOT NULL,
    signal_strength REAL NOT NULL,
    status TEXT NOT NULL,
    query_log TEXT NOT NULL,
    UNIQUE (run_id, iteration_index)
);
CREATE TABLE IF NOT EXISTS atomic_evidence (
    atomic_evidence_id TEXT PRIMARY KEY,
    finding_id TEXT NOT NULL,
    run_id TEXT NOT NULL,
    iteration_index INTEGER NOT NULL,
    technique_id TEXT NOT NULL,
    ordinal INTEGER NOT NULL,
    claim_text TEXT NOT NULL,
    evidence_type TEXT NOT NULL,
    strength TEXT NOT NULL,
    condition TEXT NOT NULL
);
CREATE TABLE IF NOT EXISTS verifications (
    atomic_evidence_id TEXT NOT NULL,
    attempt INTEGER NOT NULL,
    run_id TEXT NOT NULL,
    tp INTEGER, fp INTEGER, fn INTEGER, tn INTEGER,
    odds_ratio REAL,
    or_corrected INTEGER,
    p_value REAL,
    explicit_threshold INTEGER NOT NULL,
    effect_size_ok INTEGER NOT NULL,
    significance_ok INTEGER NOT NULL,
    status TEXT NOT NULL,
    note TEXT,
    PRIMARY KEY (atomic_evidence_id, attempt)
);
CREATE TABLE IF NOT EXISTS provider_calls (
    call_id INTEGER PRIMARY KEY AUTOINCREMENT,
    run_id TEXT,
    iteration_index INTEGER,
    provider TEXT NOT NULL,
    operation TEXT NOT NULL,
    attempt INTEGER NOT NULL,
    ok INTEGER NOT NULL,
    error TEXT,
    prompt_tokens INTEGER,
    completion_tokens INTEGER,
    latency REAL NOT NULL,
    request TEXT,
    response TEXT
);
"""

_IMMUTABLE = ("findings", "atomic_evidence", "verifications")


class IngestError(Exception):
    """Hard ingest failure; nothing is written."""


class UnknownDataset(KeyError):
    pass


@dataclass
class DatasetManifest:
    dataset_name: str
    platform: str
    declared_time_range: tuple[str, str]
    expected_account_count: int | None = None
    expected_message_count: int | None = None
    label_semantics: str = ""
    format: str | None = None
    account_columns: dict[str, str] = field(default_factory=dict)
    message_columns: dict[str, str] = field(default_factory=dict)
    label_map: dict[str, str] = field(default_factory=dict)

    def __post_init__(self):
        if not self.dataset_name:
            raise IngestError("manifest: dataset_name is required")
        if self.platform not in PLATFORMS:
            raise IngestError(f"manifest: platform must be one of {PLATFORMS}, got {self.platform!r}")
        start, end = (parse_timestamp(t) for t in self.declared_time_range)
        if start is None or end is None:
            raise IngestError("manifest: declared_time_range must hold two parseable timestamps")
        if not start < end:
            raise IngestError("manifest: declared_time_range start must precede end")
        self.declared_time_range = (start, end)
        for key, value in self.label_map.items():
            if value not in LABELS:
                raise IngestError(f"manifest: label_map[{key!r}] = {value!r} is not one of {LABELS}")

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "DatasetManifest":
        known = {f for f in cls.__dataclass_fields__}
        extra = set(data) - known
        if extra:
            logger.warning("manifest: ignoring unknown keys %s", sorted(extra))
        kwargs = {k: v for k, v in data.items() if k in known}
        if "declared_time_range" in kwargs:
            kwargs["declared_time_range"] = tuple(kwargs["declared_time_range"])
        try:
            return cls(**kwargs)
        except TypeError as exc:
            raise IngestError(f"manifest: {exc}") from exc

    @classmethod
    def load(cls, path: str | Path) -> "DatasetManifest":
        try:
            return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))
        except json.JSONDecodeError as exc:
            raise IngestError(f"cannot parse manifest {path}: {exc}") from exc

    def to_dict(self) -> dict[str, Any]:
        return asdict(self) | {"declared_time_range": list(self.declared_time_range)}


@dataclass
class RejectedRow:
    file: str
    line: int
    row_id: str | None
    reason: str


@dataclass
class IngestReport:
    dataset: str
    accounts_read: int = 0
    accounts_accepted: int = 0
    messages_read: int = 0
    messages_accepted: int = 0
    labeled_positive: int = 0
    labeled_negative: int = 0
    unlabeled: int = 0
    links_stripped: int = 0
    rejected: list[RejectedRow] = field(default_factory=list)
    normalization: list[str] = field(default_factory=list)

    @property
    def accounts_rejected(self) -> int:
        return sum(1 for r in self.rejected if r.file == "accounts")

    @property
    def messages_rejected(self) -> int:
        return sum(1 for r in self.rejected if r.file == "messages")

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)


@dataclass
class SummaryStats:
    dataset: str
    message_count: int
    account_count: int
    labeled_positive_count: int
    labeled_negative_count: int
    unlabeled_count: int
    active_account_count: int
    time_range: tuple[str | None, str | None]
    messages_by_type: dict[str, int]
    messages_per_day: dict[str, int]
    platform: str

    def to_dict(self) -> dict[str, Any]:
        d = asdict(self)
        d["time_range"] = list(self.time_range)
        return d

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "SummaryStats":
        return cls(**(d | {"time_range": tuple(d["time_range"])}))


def parse_timestamp(value: Any) -> str | None:
    """Normalise ISO-8601 strings or epoch seconds to ``YYYY-MM-DD HH:MM:SS`` UTC."""
    if value is None:
        return None
    if isinstance(value, (int, float)) and not isinstance(value, bool):
        try:
            dt = datetime.fromtimestamp(float(value), tz=timezone.utc)
        except (OverflowError, OSError, ValueError):
            return None
        return dt.strftime(TS_FORMAT)
    text = str(value).strip()
    if not text:
        return None
    if re.fullmatch(r"-?\d+(\.\d+)?", text):
        return parse_timestamp(float(text))
    if text.endswith(("Z", "z")):
        text = text[:-1] + "+00:00"
    try:
        dt = datetime.fromisoformat(text)
    except ValueError:
        return None
    if dt.tzinfo is not None:
        dt = dt.astimezone(timezone.utc).replace(tzinfo=None)
    return dt.strftime(TS_FORMAT)


def _read_records(path: Path, fmt: str | None) -> Iterator[tuple[int, dict[str, Any]]]:
    fmt = fmt or ("jsonl" if path.suffix.lower() in (".jsonl", ".ndjson") else "csv")
    with path.open(encoding="utf-8", newline="") as fh:
        if fmt == "jsonl":
            for lineno, line in enumerate(fh, start=1):
                if not line.strip():
                    continue
                try:
                    rec = json.loads(line)
                except json.JSONDecodeError as exc:
                    yield lineno, {"__error__": f"unparseable record: {exc.msg}"}
                    continue
                yield lineno, rec if isinstance(rec, dict) else {"__error__": "record is not an object"}
        elif fmt in ("csv", "tsv"):
            reader = csv.DictReader(fh, delimiter="\t" if fmt == "tsv" or path.suffix == ".tsv" else ",")
            for lineno, rec in enumerate(reader, start=2):
                yield lineno, rec
        else:
            raise IngestError(f"unsupported ingest format {fmt!r}")


def _header(path: Path, fmt: str | None) -> set[str] | None:
    fmt = fmt or ("jsonl" if path.suffix.lower() in (".jsonl", ".ndjson") else "csv")
    if fmt == "jsonl":
        return None
    with path.open(encoding="utf-8", newline="") as fh:
        first = fh.readline()
    if not first.strip():
        return set()
    return set(next(csv.reader([first], delimiter="\t" if fmt == "tsv" or path.suffix == ".tsv" else ",")))


def _as_list(value: Any) -> list[str] | None:
    if value is None or value == "":
        return None
    if isinstance(value, list):
        return [str(v) for v in value]
    text = str(value).strip()
    if text.startswith("["):
        try:
            parsed = json.loads(text)
            if isinstance(parsed, list):
                return [str(v) for v in parsed]
        except json.JSONDecodeError:
            pass
    return [t for t in re.split(r"[\s,;|]+", text) if t]


def _opt_str(value: Any) -> str | None:
    if value is None:
        return None
    text = str(value)
    return text if text != "" else None


def _opt_int(value: Any) -> int | None:
    if value is None or value == "":
        return None
    if isinstance(value, bool):
        raise ValueError("boolean is not an integer")
    f = float(value)
    if f != int(f):
        raise ValueError(f"{value!r} is not an integer")
    return int(f)


class Store:
    """Handle on one store file.  Cheap to construct; connections are opened per use."""

    def __init__(self, path: str | Path, limits: QueryLimits = QueryLimits()):
        self.path = str(path)
        self.limits = limits
        conn = self.connect()
        try:
            conn.executescript("BEGIN IMMEDIATE;" + SCHEMA + ";COMMIT;")
        finally:
            conn.close()
        with self.write() as conn:
            for table in _IMMUTABLE:
                for op in ("UPDATE", "DELETE"):
                    conn.execute(
                        f"CREATE TRIGGER IF NOT EXISTS {table}_no_{op.lower()} BEFORE {op} ON {table} "
                        f"BEGIN SELECT RAISE(ABORT, '{table} rows are immutable'); END"
                    )

    # connection helpers -------------------------------------------------

    def connect(self) -> sqlite3.Connection:
        conn = sqlite3.connect(self.path, timeout=60.0, isolation_level=None)
        conn.execute("PRAGMA foreign_keys = ON")
        return conn

    @contextmanager
    def write(self) -> Iterator[sqlite3.Connection]:
        """Serialised write transaction; rolled back on any exception."""
        conn = self.connect()
        try:
            conn.execute("BEGIN IMMEDIATE")
            try:
                yield conn
            except BaseException:
                conn.execute("ROLLBACK")
                raise
            conn.execute("COMMIT")
        finally:
            conn.close()

    @contextmanager
    def read(self) -> Iterator[sqlite3.Connection]:
        conn = sqlite3.connect(f"file:{self.path}?mode=ro", uri=True, timeout=60.0)
        conn.row_factory = sqlite3.Row
        try:
            yield conn
        finally:
            conn.close()

    @contextmanager
    def query_session(self, dataset: str) -> Iterator[sqlite3.Connection]:
        """Sandboxed read-only connection scoped to ``dataset``."""
        self.require_dataset(dataset)
        conn = sandbox.open_readonly(self.path, dataset)
        try:
            yield conn
        finally:
            conn.close()

    # datasets -----------------------------------------------------------

    def datasets(self) -> list[str]:
        with self.read() as conn:
            return [r[0] for r in conn.execute("SELECT name FROM datasets ORDER BY name")]

    def require_dataset(self, dataset: str) -> dict[str, Any]:
        with self.read() as conn:
            row = conn.execute("SELECT * FROM datasets WHERE name = ?", (dataset,)).fetchone()
        if row is None:
            raise UnknownDataset(f"unknown dataset {dataset!r}")
        return dict(row)

    def ingest_dataset(
        self, manifest: DatasetManifest, accounts_file: str | Path, messages_file: str | Path
    ) -> IngestReport:
        """Validate and load one dataset, replacing any previous copy atomically.

        Invalid rows are rejected with a reason; a declared count that does
        not match the accepted count aborts the whole ingest.
        """
        accounts_file, messages_file = Path(accounts_file), Path(messages_file)
        report = IngestReport(dataset=manifest.dataset_name)
        report.normalization = [
            "timestamps normalised to UTC 'YYYY-MM-DD HH:MM:SS'",
            "URLs stripped from text and counted into link_count",
            "hashtags and mentions extracted into list columns when not supplied",
        ]
        acc_map = {"account_id": "account_id"} | manifest.account_columns
        msg_map = {"message_id": "message_id", "account_id": "account_id", "timestamp": "timestamp"} | manifest.message_columns
        for path, mapping, required in (
            (accounts_file, acc_map, ("account_id",)),
            (messages_file, msg_map, ("message_id", "account_id", "timestamp")),
        ):
            header = _header(path, manifest.format)
            if header:
                missing = [mapping.get(k, k) for k in required if mapping.get(k, k) not in header]
                if missing:
                    raise IngestError(f"{path.name}: columns {missing} declared by the manifest are absent")

        label_map = _DEFAULT_LABEL_MAP | {k.lower(): v for k, v in manifest.label_map.items()}
        now = datetime.now(timezone.utc).strftime(TS_FORMAT)
        start, end = manifest.declared_time_range

        def get(rec: dict, mapping: dict, key: str):
            return rec.get(mapping.get(key, key))

        accounts: dict[str, tuple] = {}
        for lineno, rec in _read_records(accounts_file, manifest.format):
            report.accounts_read += 1
            aid = _opt_str(get(rec, acc_map, "account_id"))
            reason = rec.get("__error__")
            if reason is None:
                if aid is None:
                    reason = "missing account_id"
                elif aid in accounts:
                    reason = "duplicate account_id"
            raw_label = get(rec, acc_map, "label")
            label = label_map.get(str(raw_label if raw_label is not None else "").strip().lower())
            if reason is None and label is None:
                reason = f"invalid label {raw_label!r}"
            platform = _opt_str(get(rec, acc_map, "platform")) or manifest.platform
            if reason is None and platform not in PLATFORMS:
                reason = f"invalid platform {platform!r}"
            created = get(rec, acc_map, "created_at")
            created_at = parse_timestamp(created)
            if reason is None and created_at is not None and not ("1970-01-01 00:00:00" <= created_at <= now):
                reason = "created_at outside [1970-01-01, now]"
            if reason is not None:
                report.rejected.append(RejectedRow("accounts", lineno, aid, reason))
                continue
            accounts[aid] = (
                manifest.dataset_name, aid, platform, created_at,
                _opt_str(get(rec, acc_map, "display_name")),
                _opt_str(get(rec, acc_map, "profile_description")),
                label,
            )

        messages: list[tuple] = []
        seen_msgs: set[str] = set()
        for lineno, rec in _read_records(messages_file, manifest.format):
            report.messages_read += 1
            mid = _opt_str(get(rec, msg_map, "message_id"))
            try:
                row, stripped = self._message_row(manifest, rec, msg_map, mid, accounts, seen_msgs, start, end)
            except ValueError as exc:
                report.rejected.append(RejectedRow("messages", lineno, mid, str(exc)))
                continue
            seen_msgs.add(mid)
            report.links_stripped += stripped
            messages.append(row)

        report.accounts_accepted = len(accounts)
        report.messages_accepted = len(messages)
        labels = Counter(a[6] for a in accounts.values())
        report.labeled_positive = labels["positive"]
        report.labeled_negative = labels["negative"]
        report.unlabeled = labels["unlabeled"]

        if manifest.expected_account_count is not None and manifest.expected_account_count != report.accounts_accepted:
            raise IngestError(
                f"declared account count {manifest.expected_account_count} != accepted {report.accounts_accepted}"
            )
        if manifest.expected_message_count is not None and manifest.expected_message_count != report.messages_accepted:
            raise IngestError(
                f"declared message count {manifest.expected_message_count} != accepted {report.messages_accepted}"
            )

        with self.write() as conn:
            conn.execute("DELETE FROM messages WHERE dataset = ?", (manifest.dataset_name,))
            conn.execute("DELETE FROM accounts WHERE dataset = ?", (manifest.dataset_name,))
            conn.execute("DELETE FROM datasets WHERE name = ?", (manifest.dataset_name,))
            conn.execute(
                "INSERT INTO datasets VALUES (?, ?, ?, ?, ?, ?)",
                (manifest.dataset_name, manifest.platform, start, end,
                 json.dumps(manifest.to_dict(), sort_keys=True), json.dumps(report.to_dict(), sort_keys=True)),
            )
            conn.executemany("INSERT INTO accounts VALUES (?, ?, ?, ?, ?, ?, ?)", accounts.values())
            conn.executemany("INSERT INTO messages VALUES (?, ?, ?, ?, ?, ?, ?, ?, ?, ?, ?, ?, ?)", messages)
        logger.info(
            "ingested %s: %d accounts, %d messages, %d rejected rows",
            manifest.dataset_name, report.accounts_accepted, report.messages_accepted, len(report.rejected),
        )
        return report

    @staticmethod
    def _message_row(manifest, rec, msg_map, mid, accounts, seen, start, end):
        def get(key):
            return rec.get(msg_map.get(key, key))

        if "__error__" in rec:
            raise ValueError(rec["__error__"])
        if mid is None:
            raise ValueError("missing message_id")
        if mid in seen:
            raise ValueError("duplicate message_id")
        aid = _opt_str(get("account_id"))
        if aid is None or aid not in accounts:
            raise ValueError("unknown account")
        ts = parse_timestamp(get("timestamp"))
        if ts is None:
            raise ValueError("unparseable timestamp")
        if not (start <= ts <= end):
            raise ValueError("timestamp outside declared range")
        mtype = (_opt_str(get("message_type")) or ("comment" if manifest.platform == "messaging_channel" else "post")).lower()
        if mtype not in MESSAGE_TYPES:
            raise ValueError(f"invalid message_type {mtype!r}")
        raw_text = get("text")
        raw_text = "" if raw_text is None else str(raw_text)
        links = _URL_RE.findall(raw_text)
        text = " ".join(_URL_RE.sub(" ", raw_text).split()) if links else raw_text.strip()
        try:
            supplied_links = _opt_int(get("link_count"))
            reactions = _opt_int(get("reaction_count"))
        except ValueError as exc:
            raise ValueError(f"non-integer count: {exc}") from None
        if supplied_links is not None and links and supplied_links != len(links):
            raise ValueError(f"link_count {supplied_links} != {len(links)} extracted links")
        link_count = len(links) if links or supplied_links is None else supplied_links
        if link_count < 0:
            raise ValueError("negative link_count")
        if reactions is not None and reactions < 0:
            raise ValueError("negative reaction_count")
        hashtags = _as_list(get("hashtags"))
        if hashtags is None:
            hashtags = _HASHTAG_RE.findall(text)
        mentions = _as_list(get("mentions"))
        if mentions is None:
            mentions = _MENTION_RE.findall(text)
        row = (
            manifest.dataset_name, mid, aid, ts, text, mtype,
            _opt_str(get("parent_id")), _opt_str(get("channel_id")), _opt_str(get("language")),
            reactions, link_count,
            json.dumps(hashtags, ensure_ascii=False), json.dumps(mentions, ensure_ascii=False),
        )
        return row, len(links)

    # queries ------------------------------------------------------------

    def run_readonly_query(self, dataset: str, sql: str, limits: QueryLimits | None = None) -> Table:
        with self.query_session(dataset) as conn:
            return sandbox.execute(conn, sql, limits or self.limits)

    def dataset_summary(self, dataset: str) -> SummaryStats:
        """Exact descriptive counts for ``dataset``; deliberately no anomaly flags."""
        meta = self.require_dataset(dataset)
        with self.read() as conn:
            one = lambda sql: conn.execute(sql, (dataset,)).fetchone()  # noqa: E731
            msg_count, tmin, tmax = one("SELECT COUNT(*), MIN(timestamp), MAX(timestamp) FROM messages WHERE dataset = ?")
            labels = dict(conn.execute(
                "SELECT label, COUNT(*) FROM accounts WHERE dataset = ? GROUP BY label", (dataset,)
            ).fetchall())
            active = one("SELECT COUNT(DISTINCT account_id) FROM messages WHERE dataset = ?")[0]
            by_type = dict(conn.execute(
                "SELECT message_type, COUNT(*) FROM messages WHERE dataset = ? GROUP BY message_type ORDER BY message_type",
                (dataset,),
            ).fetchall())
            per_day = dict(conn.execute(
                "SELECT substr(timestamp, 1, 10) AS day, COUNT(*) FROM messages WHERE dataset = ? GROUP BY day ORDER BY day",
                (dataset,),
            ).fetchall())
        return SummaryStats(
            dataset=dataset,
            message_count=msg_count,
            account_count=sum(labels.values()),
            labeled_positive_count=labels.get("positive", 0),
            labeled_negative_count=labels.get("negative", 0),
            unlabeled_count=labels.get("unlabeled", 0),
            active_account_count=active,
            time_range=(tmin, tmax),
            messages_by_type={t: by_type.get(t, 0) for t in MESSAGE_TYPES},
            messages_per_day=per_day,
            platform=meta["platform"],
        )

    def labeled_accounts(self, dataset: str) -> dict[str, str]:
        """``account_id -> label`` for positive and negative accounts only."""
        with self.read() as conn:
            return dict(conn.execute(
                "SELECT account_id, label FROM accounts WHERE dataset = ? AND label != 'unlabeled'", (dataset,)
            ).fetchall())


def ingest_dataset(store: Store, manifest: DatasetManifest, accounts_file, messages_file) -> IngestReport:
    return store.ingest_dataset(manifest, accounts_file, messages_file)


def run_readonly_query(store: Store, dataset: str, sql: str, limits: QueryLimits | None = None) -> Table:
    return store.run_readonly_query(dataset, sql, limits)


def dataset_summary(store: Store, dataset: str) -> SummaryStats:
    return store.dataset_summary(dataset)
