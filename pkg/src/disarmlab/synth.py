"""Labeled synthetic campaigns with planted coordination patterns.

A campaign is generated from a :class:`CampaignSpec` with a seeded numpy
generator.  Organic behaviour is deliberately plain: account creation dates
uniform over a range, message hours drawn from a fixed diurnal profile,
unique random-word texts.  Patterns are then planted on the positive
accounts and every affected id is written to a ground-truth sidecar,
together with the precision and recall that the pattern's canonical
detection condition achieves on the generated data.

Supported patterns::

    {"kind": "creation_burst", "window": [start, end], "size": 200, "share_positive": 0.97}
    {"kind": "duplicate_comments", "rate": 0.3, "min_length": 40}
    {"kind": "flooding_burst", "hour": 9, "concentration": 0.4}
    {"kind": "bot_comment_share", "share": 0.145}
"""

from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass, field
from datetime import datetime, timedelta, timezone
from pathlib import Path
from typing import Any

import numpy as np

from .stats import ConfusionMatrix, fisher_exact_two_sided, odds_ratio

PATTERN_ORDER = ("bot_comment_share", "creation_burst", "duplicate_comments", "flooding_burst")

# Organic hour-of-day profile (UTC): quiet nights, evening peak.
DIURNAL = np.array([
    1.0, 0.6, 0.4, 0.3, 0.3, 0.4, 0.8, 1.4, 2.0, 2.3, 2.4, 2.5,
    2.7, 2.6, 2.5, 2.5, 2.6, 2.8, 3.1, 3.4, 3.6, 3.2, 2.4, 1.6,
])
DIURNAL = DIURNAL / DIURNAL.sum()

_SYLLABLES = ["ka", "lo", "mi", "ren", "tu", "sa", "vel", "or", "qi", "nan", "dro", "pe", "xu", "ban", "li", "mor"]
_HASHTAGS = ["news", "truth", "election", "breaking", "freedom", "economy", "vote", "media"]
_TS = "%Y-%m-%dT%H:%M:%SZ"


class SynthError(ValueError):
    """Infeasible spec or conflicting pattern."""


def _parse(ts: str) -> datetime:
    return datetime.fromisoformat(ts.replace("Z", "+00:00")).astimezone(timezone.utc)


@dataclass
class CampaignSpec:
    positive_accounts: int
    negative_accounts: int
    seed: int = 0
    dataset_name: str = "synthetic"
    platform: str = "microblog"
    unlabeled_accounts: int = 0
    total_messages: int | None = None
    positive_messages: int | None = None
    negative_messages: int | None = None
    time_range: tuple[str, str] = ("2018-01-01T00:00:00Z", "2019-12-31T23:59:59Z")
    creation_range: tuple[str, str] = ("2010-01-01T00:00:00Z", "2019-06-30T23:59:59Z")
    channels: int = 20
    patterns: list[dict[str, Any]] = field(default_factory=list)

    def __post_init__(self):
        self.time_range = tuple(self.time_range)
        self.creation_range = tuple(self.creation_range)
        if min(self.positive_accounts, self.negative_accounts, self.unlabeled_accounts) < 0:
            raise SynthError("account counts must be non-negative")
        for lo, hi in (self.time_range, self.creation_range):
            if not _parse(lo) < _parse(hi):
                raise SynthError(f"range {lo}..{hi} is empty")
        split = self.positive_messages is not None or self.negative_messages is not None
        if split and self.total_messages is not None:
            raise SynthError("give either total_messages or per-class message counts")
        if not split and self.total_messages is None:
            raise SynthError("message counts missing")
        if split and self.unlabeled_accounts:
            raise SynthError("per-class message counts cannot be combined with unlabeled accounts")
        kinds = [p.get("kind") for p in self.patterns]
        for p in self.patterns:
            _check_pattern(p, self)
        if len(set(kinds)) != len(kinds):
            raise SynthError("each pattern kind may appear once")

    @property
    def message_count(self) -> int:
        if self.total_messages is not None:
            return self.total_messages
        return (self.positive_messages or 0) + (self.negative_messages or 0)

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "CampaignSpec":
        return cls(**d)

    def to_dict(self) -> dict[str, Any]:
        d = asdict(self)
        d["time_range"], d["creation_range"] = list(self.time_range), list(self.creation_range)
        return d


def _check_pattern(p: dict[str, Any], spec: CampaignSpec) -> None:
    kind = p.get("kind")
    if kind not in PATTERN_ORDER:
        raise SynthError(f"unknown pattern kind {kind!r}")
    for key in ("share_positive", "rate", "concentration", "share"):
        if key in p and not 0 <= float(p[key]) <= 1:
            raise SynthError(f"{kind}.{key} must lie in [0, 1]")
    if kind == "creation_burst":
        lo, hi = (_parse(t) for t in p["window"])
        c_lo, c_hi = (_parse(t) for t in spec.creation_range)
        if not (c_lo <= lo < hi <= c_hi):
            raise SynthError("creation_burst window must lie inside creation_range")
        size = int(p.get("size", 0))
        n_pos = round(size * float(p.get("share_positive", 1.0)))
        if n_pos > spec.positive_accounts or size - n_pos > spec.negative_accounts:
            raise SynthError(
                f"creation_burst needs {n_pos} positive and {size - n_pos} negative accounts; spec has "
                f"{spec.positive_accounts} and {spec.negative_accounts}"
            )
    if kind == "flooding_burst" and not 0 <= int(p["hour"]) <= 23:
        raise SynthError("flooding_burst.hour must be 0..23")


@dataclass
class SyntheticDataset:
    spec: CampaignSpec
    accounts: list[dict[str, Any]]
    messages: list[dict[str, Any]]
    sidecar: dict[str, Any]
    rng: np.random.Generator = field(repr=False)
    texts: Any = field(default=None, repr=False)

    def labels(self) -> dict[str, str]:
        return {a["account_id"]: a["label"] for a in self.accounts}


@dataclass
class CampaignFiles:
    accounts: Path
    messages: Path
    manifest: Path
    sidecar: Path


def _fmt(dt: datetime) -> str:
    return dt.strftime(_TS)


def _uniform_times(rng: np.random.Generator, lo: datetime, hi: datetime, n: int) -> list[datetime]:
    span = (hi - lo).total_seconds()
    return [lo + timedelta(seconds=int(s)) for s in rng.uniform(0, span, size=n)]


class _TextMaker:
    def __init__(self, rng: np.random.Generator):
        self.rng = rng
        self.vocab = sorted({
            "".join(rng.choice(_SYLLABLES, size=int(k)))
            for k in rng.integers(1, 4, size=600)
        })
        self.seen: set[str] = set()

    def unique(self, low: int = 6, high: int = 24) -> str:
        while True:
            n = int(self.rng.integers(low, high + 1))
            text = " ".join(self.rng.choice(self.vocab, size=n))
            if text not in self.seen:
                self.seen.add(text)
                return text

    def template(self, min_length: int) -> str:
        while True:
            words: list[str] = []
            while len(" ".join(words)) < max(min_length, 1):
                words.append(str(self.rng.choice(self.vocab)))
            text = " ".join(words)
            if text not in self.seen:
                self.seen.add(text)
                return text


def build_campaign(spec: CampaignSpec) -> SyntheticDataset:
    """Generate base activity, then plant the spec's patterns in canonical order."""
    rng = np.random.default_rng(spec.seed)
    texts = _TextMaker(rng)
    c_lo, c_hi = (_parse(t) for t in spec.creation_range)
    t_lo, t_hi = (_parse(t) for t in spec.time_range)

    accounts = []
    groups = [("positive", spec.positive_accounts), ("negative", spec.negative_accounts),
              ("unlabeled", spec.unlabeled_accounts)]
    counter = 0
    for label, n in groups:
        created = _uniform_times(rng, c_lo, c_hi, n)
        for i in range(n):
            counter += 1
            empty_profile = rng.random() < 0.3
            accounts.append({
                "account_id": f"acct{counter:06d}",
                "platform": spec.platform,
                "created_at": _fmt(created[i]),
                "display_name": texts.unique(1, 2).title(),
                "profile_description": "" if empty_profile else texts.unique(3, 10),
                "label": label,
            })

    by_label = {lab: [a["account_id"] for a in accounts if a["label"] == lab] for lab, _ in groups}
    if spec.total_messages is not None:
        pool = [a["account_id"] for a in accounts]
        authors = [pool[i] for i in rng.integers(0, len(pool), size=spec.total_messages)] if pool else []
        if spec.total_messages and not pool:
            raise SynthError("messages requested but no accounts")
    else:
        authors = []
        for lab, n in (("positive", spec.positive_messages or 0), ("negative", spec.negative_messages or 0)):
            if n and not by_label[lab]:
                raise SynthError(f"{n} {lab} messages requested but no {lab} accounts")
            ids = by_label[lab]
            authors += [ids[i] for i in rng.integers(0, len(ids), size=n)] if n else []

    days = max(1, (t_hi - t_lo).days)
    messages = []
    hours = rng.choice(24, size=len(authors), p=DIURNAL)
    day_offsets = rng.integers(0, days, size=len(authors))
    seconds = rng.integers(0, 3600, size=len(authors))
    for i, author in enumerate(authors):
        ts = t_lo.replace(hour=0, minute=0, second=0) + timedelta(days=int(day_offsets[i]), hours=int(hours[i]),
                                                                  seconds=int(seconds[i]))
        ts = min(max(ts, t_lo), t_hi)
        text = texts.unique()
        if rng.random() < 0.25:
            text += " #" + str(rng.choice(_HASHTAGS))
        if rng.random() < 0.1:
            text += f" https://example.org/p/{int(rng.integers(1, 10**6))}"
        if spec.platform == "messaging_channel":
            mtype, channel = "comment", f"chan{int(rng.integers(1, spec.channels + 1)):03d}"
        else:
            mtype = str(rng.choice(["post", "repost", "reply"], p=[0.7, 0.2, 0.1]))
            channel = ""
        messages.append({
            "message_id": f"msg{i + 1:08d}",
            "account_id": author,
            "timestamp": _fmt(ts),
            "text": text,
            "message_type": mtype,
            "channel_id": channel,
            "reaction_count": int(rng.poisson(3)),
        })

    sidecar = {"dataset_name": spec.dataset_name, "seed": spec.seed, "spec": spec.to_dict(), "patterns": {}}
    ds = SyntheticDataset(spec, accounts, messages, sidecar, rng, texts)
    for pattern in sorted(spec.patterns, key=lambda p: PATTERN_ORDER.index(p["kind"])):
        plant_pattern(ds, pattern)
    return ds


def _condition_stats(predicted: set[str], labels: dict[str, str], planted: set[str]) -> dict[str, Any]:
    pos = {a for a, lab in labels.items() if lab == "positive"}
    neg = {a for a, lab in labels.items() if lab == "negative"}
    tp, fp = len(predicted & pos), len(predicted & neg)
    out: dict[str, Any] = {
        "predicted": len(predicted & (pos | neg)),
        "precision": tp / (tp + fp) if tp + fp else None,
        "recall": tp / len(pos) if pos else None,
        "precision_vs_planted": len(predicted & planted) / len(predicted) if predicted else None,
    }
    if pos and neg:
        m = ConfusionMatrix(tp, fp, len(pos) - tp, len(neg) - fp)
        out["matrix"] = list(m.as_tuple())
        out["odds_ratio"], out["or_corrected"] = odds_ratio(m)
        out["p_value"] = fisher_exact_two_sided(m)
    return out


def plant_pattern(dataset: SyntheticDataset, pattern: dict[str, Any]) -> dict[str, Any]:
    """Apply one pattern in place and record it in the sidecar; returns the sidecar entry."""
    if not isinstance(dataset, SyntheticDataset):
        raise SynthError("patterns can only be planted into generated datasets")
    kind = pattern.get("kind")
    _check_pattern(pattern, dataset.spec)
    if kind in dataset.sidecar["patterns"]:
        raise SynthError(f"pattern {kind!r} is already planted")
    entry = {
        "creation_burst": _plant_creation_burst,
        "duplicate_comments": _plant_duplicates,
        "flooding_burst": _plant_flooding,
        "bot_comment_share": _plant_bot_share,
    }[kind](dataset, pattern)
    entry["params"] = dict(pattern)
    dataset.sidecar["patterns"][kind] = entry
    return entry


def _plant_creation_burst(ds: SyntheticDataset, p: dict[str, Any]) -> dict[str, Any]:
    rng = ds.rng
    lo, hi = (_parse(t) for t in p["window"])
    size = int(p.get("size", 0))
    n_pos = round(size * float(p.get("share_positive", 1.0)))
    pos = [a for a in ds.accounts if a["label"] == "positive"]
    neg = [a for a in ds.accounts if a["label"] == "negative"]
    chosen_pos = [pos[i] for i in sorted(rng.choice(len(pos), size=n_pos, replace=False))] if n_pos else []
    chosen_neg = [neg[i] for i in sorted(rng.choice(len(neg), size=size - n_pos, replace=False))] if size - n_pos else []
    chosen = {a["account_id"] for a in chosen_pos + chosen_neg}
    if size:
        c_lo, c_hi = (_parse(t) for t in ds.spec.creation_range)
        before, after = (lo - c_lo).total_seconds(), (c_hi - hi).total_seconds()
        for a in ds.accounts:
            if a["account_id"] in chosen:
                a["created_at"] = _fmt(_uniform_times(rng, lo, hi - timedelta(seconds=1), 1)[0])
            elif lo <= _parse(a["created_at"]) < hi:
                # keep the window exclusive to the burst
                s = rng.uniform(0, before + after)
                a["created_at"] = _fmt(c_lo + timedelta(seconds=int(s)) if s < before else hi + timedelta(seconds=int(s - before)))
    in_window = {a["account_id"] for a in ds.accounts if lo <= _parse(a["created_at"]) < hi}
    planted = {a["account_id"] for a in chosen_pos}
    lo_s, hi_s = lo.strftime("%Y-%m-%d %H:%M:%S"), hi.strftime("%Y-%m-%d %H:%M:%S")
    return {
        "account_ids": sorted(planted),
        "decoy_count": len(chosen_neg),
        "message_ids": [],
        "canonical_condition": {
            "feature_query": (
                f"SELECT account_id, CASE WHEN created_at >= '{lo_s}' AND created_at < '{hi_s}' "
                "THEN 1 ELSE 0 END AS in_window FROM accounts"
            ),
            "comparator": ">=",
            "threshold": 1,
            "description": "account created inside the burst window",
        },
        "canonical_stats": _condition_stats(in_window, ds.labels(), planted),
    }


def _dup_share(messages: list[dict[str, Any]]) -> dict[str, float]:
    counts: dict[str, int] = {}
    for m in messages:
        counts[m["text"]] = counts.get(m["text"], 0) + 1
    per_account: dict[str, list[int]] = {}
    for m in messages:
        per_account.setdefault(m["account_id"], []).append(counts[m["text"]] > 1)
    return {a: sum(v) / len(v) for a, v in per_account.items()}


def _plant_duplicates(ds: SyntheticDataset, p: dict[str, Any]) -> dict[str, Any]:
    rng = ds.rng
    rate, min_length = float(p["rate"]), int(p.get("min_length", 40))
    labels = ds.labels()
    bot_msgs = [m for m in ds.messages if labels[m["account_id"]] == "positive"]
    k = round(rate * len(bot_msgs))
    chosen = [bot_msgs[i] for i in sorted(rng.choice(len(bot_msgs), size=k, replace=False))] if k else []
    if k == 1:
        raise SynthError("duplicate_comments needs at least two copies")
    pool_size = max(1, min(k // 2, max(3, k // 20))) if k else 0
    templates = [ds.texts.template(min_length) for _ in range(pool_size)]
    for i, m in enumerate(chosen):
        m["text"] = templates[i % pool_size]
    affected = {m["account_id"] for m in chosen}
    shares = _dup_share(ds.messages)
    predicted = {a for a, s in shares.items() if s >= 0.1}
    return {
        "account_ids": sorted(affected),
        "message_ids": sorted(m["message_id"] for m in chosen),
        "templates": len(templates),
        "canonical_condition": {
            "feature_query": (
                "WITH t AS (SELECT text, COUNT(*) AS n FROM messages GROUP BY text) "
                "SELECT m.account_id, AVG(CASE WHEN t.n > 1 THEN 1.0 ELSE 0.0 END) AS dup_share "
                "FROM messages m JOIN t ON t.text = m.text GROUP BY m.account_id"
            ),
            "comparator": ">=",
            "threshold": 0.1,
            "description": "at least 10% of the account's messages duplicate another message",
        },
        "canonical_stats": _condition_stats(predicted, labels, affected),
    }


def _plant_flooding(ds: SyntheticDataset, p: dict[str, Any]) -> dict[str, Any]:
    rng = ds.rng
    hour, conc = int(p["hour"]), float(p["concentration"])
    labels = ds.labels()
    bot_msgs = [m for m in ds.messages if labels[m["account_id"]] == "positive"]
    k = round(conc * len(bot_msgs))
    chosen = [bot_msgs[i] for i in sorted(rng.choice(len(bot_msgs), size=k, replace=False))] if k else []
    t_lo, t_hi = (_parse(t) for t in ds.spec.time_range)
    for m in chosen:
        ts = _parse(m["timestamp"]).replace(hour=hour)
        m["timestamp"] = _fmt(min(max(ts, t_lo), t_hi))
    per_account: dict[str, list[bool]] = {}
    for m in ds.messages:
        per_account.setdefault(m["account_id"], []).append(_parse(m["timestamp"]).hour == hour)
    predicted = {a for a, v in per_account.items() if len(v) >= 3 and sum(v) / len(v) >= 0.5}
    return {
        "account_ids": sorted({m["account_id"] for m in chosen}),
        "message_ids": sorted(m["message_id"] for m in chosen),
        "expected_positive_hour_share": conc + (1 - conc) * float(DIURNAL[hour]),
        "canonical_condition": {
            "feature_query": (
                f"SELECT account_id, CASE WHEN COUNT(*) >= 3 THEN AVG(CAST(strftime('%H', timestamp) AS INTEGER) = {hour}) "
                "ELSE 0 END AS hour_share FROM messages GROUP BY account_id"
            ),
            "comparator": ">=",
            "threshold": 0.5,
            "description": f"at least half of the account's messages posted in hour {hour:02d} UTC",
        },
        "canonical_stats": _condition_stats(predicted, labels, {m["account_id"] for m in chosen}),
    }


def _plant_bot_share(ds: SyntheticDataset, p: dict[str, Any]) -> dict[str, Any]:
    rng = ds.rng
    share = float(p["share"])
    labels = ds.labels()
    pos_ids = [a for a, lab in labels.items() if lab == "positive"]
    other_ids = [a for a, lab in labels.items() if lab != "positive"]
    target = round(share * len(ds.messages))
    bot = [m for m in ds.messages if labels[m["account_id"]] == "positive"]
    rest = [m for m in ds.messages if labels[m["account_id"]] != "positive"]
    moved: list[str] = []
    if target > len(bot):
        if not pos_ids:
            raise SynthError("bot_comment_share needs positive accounts")
        for i in sorted(rng.choice(len(rest), size=target - len(bot), replace=False)):
            rest[i]["account_id"] = pos_ids[int(rng.integers(0, len(pos_ids)))]
            moved.append(rest[i]["message_id"])
    elif target < len(bot):
        if not other_ids:
            raise SynthError("bot_comment_share needs non-positive accounts")
        for i in sorted(rng.choice(len(bot), size=len(bot) - target, replace=False)):
            bot[i]["account_id"] = other_ids[int(rng.integers(0, len(other_ids)))]
            moved.append(bot[i]["message_id"])
    achieved = sum(1 for m in ds.messages if labels[m["account_id"]] == "positive") / max(1, len(ds.messages))
    return {"account_ids": [], "message_ids": sorted(moved), "achieved_share": achieved}


def manifest_for(ds: SyntheticDataset) -> dict[str, Any]:
    spec = ds.spec
    return {
        "dataset_name": spec.dataset_name,
        "platform": spec.platform,
        "declared_time_range": list(spec.time_range),
        "expected_account_count": len(ds.accounts),
        "expected_message_count": len(ds.messages),
        "label_semantics": "synthetic: positive = planted coordinated account, negative = organic control",
        "format": "csv",
    }


def write_campaign(ds: SyntheticDataset, out_dir: str | Path) -> CampaignFiles:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    files = CampaignFiles(out / "accounts.csv", out / "messages.csv", out / "manifest.json", out / "ground_truth.json")
    acc_cols = ["account_id", "platform", "created_at", "display_name", "profile_description", "label"]
    msg_cols = ["message_id", "account_id", "timestamp", "text", "message_type", "channel_id", "reaction_count"]
    for path, cols, rows in ((files.accounts, acc_cols, ds.accounts), (files.messages, msg_cols, ds.messages)):
        with path.open("w", encoding="utf-8", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=cols, lineterminator="\n")
            w.writeheader()
            for r in sorted(rows, key=lambda r: r[cols[0]]):
                w.writerow({c: r.get(c, "") for c in cols})
    files.manifest.write_text(json.dumps(manifest_for(ds), indent=2, sort_keys=True) + "\n", encoding="utf-8")
    files.sidecar.write_text(json.dumps(ds.sidecar, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return files


def generate_campaign(spec: CampaignSpec, out_dir: str | Path) -> CampaignFiles:
    """Generate ``spec`` and write accounts, messages, manifest and sidecar under ``out_dir``."""
    return write_campaign(build_campaign(spec), out_dir)


def china_like_spec(seed: int = 7, planted: bool = True, **overrides) -> CampaignSpec:
    """Microblog campaign shaped like the platform-disclosed corpus: 617 IO / 157 control accounts,
    38,927 + 1,936 posts, with an account-creation burst in August 2018 and copied comments."""
    kw: dict[str, Any] = dict(
        dataset_name="china_like",
        platform="microblog",
        seed=seed,
        positive_accounts=617,
        negative_accounts=157,
        time_range=("2017-04-01T00:00:00Z", "2019-12-31T23:59:59Z"),
        creation_range=("2009-01-01T00:00:00Z", "2019-10-31T23:59:59Z"),
    )
    window = ["2018-08-01T00:00:00Z", "2018-09-01T00:00:00Z"]
    if planted:
        kw.update(positive_messages=38_927, negative_messages=1_936, patterns=[
            {"kind": "creation_burst", "window": window, "size": 200, "share_positive": 0.97},
            {"kind": "duplicate_comments", "rate": 0.3, "min_length": 40},
        ])
    else:
        kw.update(total_messages=40_863, patterns=[
            {"kind": "creation_burst", "window": window, "size": 0, "share_positive": 0.97},
        ])
    kw.update(overrides)
    return CampaignSpec(**kw)


def moldova_like_spec(seed: int = 11, scale: float = 0.02, **overrides) -> CampaignSpec:
    """Messaging-channel campaign shaped like the comment corpus (30,297 accounts, 584 bots,
    595,814 comments, 14.5% by bots), scaled by ``scale``.  Unverified accounts are unlabeled."""
    pos = max(2, round(584 * scale))
    total_accounts = max(pos + 2, round(30_297 * scale))
    neg = max(1, round(total_accounts * 0.2))
    kw: dict[str, Any] = dict(
        dataset_name="moldova_like",
        platform="messaging_channel",
        seed=seed,
        positive_accounts=pos,
        negative_accounts=neg,
        unlabeled_accounts=total_accounts - pos - neg,
        total_messages=round(595_814 * scale),
        time_range=("2025-07-01T00:00:00Z", "2025-09-30T23:59:59Z"),
        creation_range=("2015-01-01T00:00:00Z", "2025-06-30T23:59:59Z"),
        channels=88,
        patterns=[
            {"kind": "bot_comment_share", "share": 0.145},
            {"kind": "duplicate_comments", "rate": 0.2, "min_length": 30},
        ],
    )
    kw.update(overrides)
    return CampaignSpec(**kw)


def null_fraction_significant(seeds: range, **spec_overrides) -> float:
    """Fraction of seeds whose null campaign gives a significant canonical burst condition."""
    hits = 0
    for s in seeds:
        ds = build_campaign(china_like_spec(seed=s, planted=False, **spec_overrides))
        stats = ds.sidecar["patterns"]["creation_burst"]["canonical_stats"]
        hits += stats["p_value"] <= 0.05
    return hits / max(1, len(seeds))

