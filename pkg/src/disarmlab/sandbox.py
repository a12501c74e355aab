"""Read-only SQL gate for generated queries.

Two layers guard the store.  :func:`check_query` is a lexical gate that
rejects anything but a single ``SELECT`` (optionally ``WITH``-prefixed)
and names the offending token.  At execution time the connection is
opened read-only and an SQLite authorizer denies every action other than
reading the dataset tables, so a query that slips past the lexer still
cannot mutate, attach or escape to other tables.
"""

from __future__ import annotations

import re
import sqlite3
import time
from dataclasses import dataclass, field
from typing import Any

DEFAULT_TIMEOUT_S = 30.0
DEFAULT_MAX_ROWS = 100_000

FORBIDDEN_KEYWORDS = frozenset(
    {
        "INSERT", "UPDATE", "DELETE", "REPLACE", "UPSERT", "MERGE", "CREATE", "DROP",
        "ALTER", "ATTACH", "DETACH", "PRAGMA", "VACUUM", "REINDEX", "ANALYZE", "BEGIN",
        "COMMIT", "ROLLBACK", "SAVEPOINT", "RELEASE", "TRUNCATE", "GRANT", "REVOKE",
        "LOAD_EXTENSION", "READFILE", "WRITEFILE", "EDIT", "FTS3_TOKENIZER",
    }
)
# These are also scalar functions in SQLite; only the function-call form is allowed.
_FUNCTION_OK = frozenset({"REPLACE"})
READABLE_TABLES = frozenset({"accounts", "messages"})

_TOKEN_RE = re.compile(
    r"""
    (?P<comment>--[^\n]*|/\*.*?(?:\*/|$))
  | (?P<string>'(?:[^']|'')*'?)
  | (?P<quoted>"(?:[^"]|"")*"?|`[^`]*`?|\[[^\]]*\]?)
  | (?P<word>[A-Za-z_][A-Za-z0-9_$]*)
  | (?P<semi>;)
  | (?P<space>\s+)
  | (?P<other>.)
    """,
    re.VERBOSE | re.DOTALL,
)


class SandboxError(Exception):
    """Query refused by the read-only gate."""

    def __init__(self, message: str, token: str | None = None):
        self.token = token
        super().__init__(message)


class QueryTimeout(Exception):
    pass


@dataclass(frozen=True)
class QueryLimits:
    timeout: float = DEFAULT_TIMEOUT_S
    max_rows: int = DEFAULT_MAX_ROWS


@dataclass
class Table:
    columns: list[str]
    rows: list[tuple[Any, ...]]
    truncated: bool = False
    duration: float = field(default=0.0, compare=False)

    def __len__(self) -> int:
        return len(self.rows)

    def column(self, name: str) -> list[Any]:
        idx = self.columns.index(name)
        return [row[idx] for row in self.rows]

    def to_dict(self) -> dict[str, Any]:
        return {"columns": self.columns, "rows": [list(r) for r in self.rows], "truncated": self.truncated}


def _tokens(sql: str):
    for m in _TOKEN_RE.finditer(sql):
        kind = m.lastgroup
        if kind in ("comment", "space"):
            continue
        yield kind, m.group()


def check_query(sql: str) -> str:
    """Validate ``sql`` against the gate and return it stripped of a trailing semicolon.

    Raises :class:`SandboxError` naming the offending token.
    """
    if not isinstance(sql, str) or not sql.strip():
        raise SandboxError("empty query")
    toks = list(_tokens(sql))
    if not toks:
        raise SandboxError("query contains only comments")

    for i, (kind, text) in enumerate(toks):
        if kind == "string" and not (len(text) >= 2 and text.endswith("'")):
            raise SandboxError("unterminated string literal", text[:20])
        if kind == "comment":
            continue
        if kind == "semi":
            if any(k != "semi" for k, _ in toks[i + 1 :]):
                raise SandboxError("multiple statements are not allowed", ";")
        if kind == "word":
            upper = text.upper()
            if upper in FORBIDDEN_KEYWORDS:
                nxt = toks[i + 1] if i + 1 < len(toks) else None
                if upper in _FUNCTION_OK and nxt is not None and nxt[1] == "(":
                    continue
                raise SandboxError(f"forbidden token {text!r}", text)

    first_kind, first = toks[0]
    if first_kind != "word" or first.upper() not in ("SELECT", "WITH", "VALUES"):
        raise SandboxError(f"query must start with SELECT or WITH, got {first!r}", first)
    return sql.strip().rstrip(";").rstrip()


def _authorizer(action, arg1, arg2, dbname, source):
    if action in (sqlite3.SQLITE_SELECT, sqlite3.SQLITE_RECURSIVE):
        return sqlite3.SQLITE_OK
    if action == sqlite3.SQLITE_READ:
        # Physical tables are reachable only through the dataset-scoped temp views.
        if dbname in (None, "temp") or (arg1 in READABLE_TABLES and source in READABLE_TABLES):
            return sqlite3.SQLITE_OK
        return sqlite3.SQLITE_DENY
    if action == sqlite3.SQLITE_FUNCTION:
        if arg2 and arg2.lower() in ("load_extension", "readfile", "writefile", "edit", "fts3_tokenizer"):
            return sqlite3.SQLITE_DENY
        return sqlite3.SQLITE_OK
    return sqlite3.SQLITE_DENY


def _quote_literal(value: str) -> str:
    return "'" + value.replace("'", "''") + "'"


def open_readonly(db_path: str, dataset: str) -> sqlite3.Connection:
    """Open a read-only connection where ``accounts``/``messages`` show only one dataset.

    Temporary views shadow the physical tables, so plan SQL written against
    ``messages`` is portable across datasets sharing one store.
    """
    conn = sqlite3.connect(f"file:{db_path}?mode=ro", uri=True, timeout=30.0)
    lit = _quote_literal(dataset)
    conn.execute(
        "CREATE TEMP VIEW accounts AS SELECT account_id, platform, created_at, display_name, "
        f"profile_description, label FROM main.accounts WHERE dataset = {lit}"
    )
    conn.execute(
        "CREATE TEMP VIEW messages AS SELECT message_id, account_id, timestamp, text, message_type, "
        "parent_id, channel_id, language, reaction_count, link_count, hashtags, mentions "
        f"FROM main.messages WHERE dataset = {lit}"
    )
    conn.execute("PRAGMA query_only = ON")
    conn.set_authorizer(_authorizer)
    return conn


def execute(conn: sqlite3.Connection, sql: str, limits: QueryLimits = QueryLimits()) -> Table:
    """Run one gated query on a connection from :func:`open_readonly`."""
    sql = check_query(sql)
    start = time.perf_counter()
    deadline = start + limits.timeout

    def _progress():
        return 1 if time.perf_counter() > deadline else 0

    conn.set_progress_handler(_progress, 1000)
    try:
        cur = conn.execute(sql)
        rows = cur.fetchmany(limits.max_rows + 1)
        columns = [d[0] for d in cur.description or ()]
        cur.close()
    except sqlite3.DatabaseError as exc:
        msg = str(exc)
        if "interrupted" in msg:
            raise QueryTimeout(f"query exceeded {limits.timeout}s") from exc
        if "not authorized" in msg or "prohibited" in msg or "readonly" in msg or "read-only" in msg:
            raise SandboxError(f"query rejected at execution: {msg}") from exc
        raise
    except sqlite3.Warning as exc:
        raise SandboxError(f"query rejected at execution: {exc}") from exc
    finally:
        conn.set_progress_handler(None, 0)
    truncated = len(rows) > limits.max_rows
    if truncated:
        rows = rows[: limits.max_rows]
    return Table(columns=columns, rows=[tuple(r) for r in rows], truncated=truncated, duration=time.perf_counter() - start)
