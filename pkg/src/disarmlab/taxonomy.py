"""Loading and querying a DISARM technique taxonomy.

The taxonomy file is a JSON document, either a bare array of technique
objects or an object ``{"version": ..., "techniques": [...]}``.  Each
technique carries ``id``, ``name``, ``tactic_id``, ``description`` and,
for sub-techniques only, ``parent_id``.  ``summary_tags`` is optional.
"""

from __future__ import annotations

import json
import logging
import re
from dataclasses import dataclass, field
from pathlib import Path
from types import MappingProxyType
from typing import Any, Mapping

logger = logging.getLogger(__name__)

TECHNIQUE_ID_RE = re.compile(r"^T[0-9]{4}(\.[0-9]{3})?$")

_KNOWN_FIELDS = {"id", "name", "tactic_id", "parent_id", "description", "summary_tags"}
_FIELD_ALIASES = {"parent": "parent_id", "tactic": "tactic_id"}


class TaxonomyError(Exception):
    """Raised when a taxonomy file cannot be parsed or fails validation."""

    def __init__(self, message: str, problems: list[str] | None = None):
        self.problems = list(problems or [])
        if self.problems:
            message = message + ":\n  " + "\n  ".join(self.problems)
        super().__init__(message)


@dataclass(frozen=True)
class Technique:
    id: str
    name: str
    tactic_id: str
    description: str = ""
    parent_id: str | None = None
    summary_tags: tuple[str, ...] = ()

    @property
    def is_subtechnique(self) -> bool:
        return "." in self.id

    def to_dict(self) -> dict[str, Any]:
        out: dict[str, Any] = {
            "id": self.id,
            "name": self.name,
            "tactic_id": self.tactic_id,
            "description": self.description,
        }
        if self.parent_id is not None:
            out["parent_id"] = self.parent_id
        if self.summary_tags:
            out["summary_tags"] = list(self.summary_tags)
        return out


@dataclass(frozen=True)
class Taxonomy:
    """Immutable technique map; build through :func:`load_taxonomy` or :func:`build_taxonomy`."""

    techniques: Mapping[str, Technique]
    version: str = "unversioned"
    _children: Mapping[str, tuple[Technique, ...]] = field(default_factory=dict, repr=False, compare=False)

    def __len__(self) -> int:
        return len(self.techniques)

    def __contains__(self, technique_id: object) -> bool:
        return technique_id in self.techniques

    def __iter__(self):
        return iter(sorted(self.techniques.values(), key=lambda t: t.id))

    def ids(self) -> list[str]:
        return sorted(self.techniques)

    def to_dict(self) -> dict[str, Any]:
        return {"version": self.version, "techniques": [t.to_dict() for t in self]}


def _technique_from_dict(raw: Mapping[str, Any], index: int, problems: list[str]) -> Technique | None:
    if not isinstance(raw, Mapping):
        problems.append(f"entry {index}: expected an object, got {type(raw).__name__}")
        return None
    data = {}
    for key, value in raw.items():
        key = _FIELD_ALIASES.get(key, key)
        if key not in _KNOWN_FIELDS:
            logger.warning("taxonomy entry %s: ignoring unknown field %r", raw.get("id", index), key)
            continue
        data[key] = value

    tid = data.get("id")
    label = tid if isinstance(tid, str) else f"entry {index}"
    ok = True
    if not isinstance(tid, str) or not TECHNIQUE_ID_RE.match(tid):
        problems.append(f"{label}: invalid technique id {tid!r}")
        ok = False
    for required in ("name", "tactic_id"):
        if not isinstance(data.get(required), str) or not data[required].strip():
            problems.append(f"{label}: missing or empty {required!r}")
            ok = False
    parent = data.get("parent_id")
    if parent is not None and not isinstance(parent, str):
        problems.append(f"{label}: parent_id must be a string")
        ok = False
    tags = data.get("summary_tags") or []
    if not isinstance(tags, list) or not all(isinstance(t, str) for t in tags):
        problems.append(f"{label}: summary_tags must be a list of strings")
        ok = False
    if not ok:
        return None
    return Technique(
        id=tid,
        name=data["name"],
        tactic_id=data["tactic_id"],
        description=str(data.get("description") or ""),
        parent_id=parent,
        summary_tags=tuple(tags),
    )


def build_taxonomy(entries: list[Any], version: str = "unversioned") -> Taxonomy:
    """Validate raw technique objects and build a :class:`Taxonomy`."""
    problems: list[str] = []
    techniques: dict[str, Technique] = {}
    for i, raw in enumerate(entries):
        tech = _technique_from_dict(raw, i, problems)
        if tech is None:
            continue
        if tech.id in techniques:
            problems.append(f"{tech.id}: duplicate technique id")
            continue
        techniques[tech.id] = tech

    for tech in techniques.values():
        if tech.is_subtechnique:
            expected = tech.id.split(".")[0]
            if tech.parent_id is None:
                problems.append(f"{tech.id}: sub-technique without parent_id")
            elif tech.parent_id != expected:
                problems.append(f"{tech.id}: parent_id {tech.parent_id} does not match id prefix {expected}")
            elif tech.parent_id not in techniques:
                problems.append(f"{tech.id}: dangling parent_id {tech.parent_id}")
        elif tech.parent_id is not None:
            problems.append(f"{tech.id}: top-level technique must not have parent_id ({tech.parent_id})")

    if problems:
        raise TaxonomyError("taxonomy validation failed", problems)

    children: dict[str, list[Technique]] = {}
    for tech in sorted(techniques.values(), key=lambda t: t.id):
        if tech.parent_id is not None:
            children.setdefault(tech.parent_id, []).append(tech)
    return Taxonomy(
        techniques=MappingProxyType(dict(sorted(techniques.items()))),
        version=str(version),
        _children=MappingProxyType({k: tuple(v) for k, v in children.items()}),
    )


def load_taxonomy(path: str | Path) -> Taxonomy:
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise TaxonomyError(f"cannot parse taxonomy file {path}: {exc}") from exc

    if isinstance(doc, list):
        return build_taxonomy(doc)
    if isinstance(doc, dict) and isinstance(doc.get("techniques"), list):
        return build_taxonomy(doc["techniques"], version=doc.get("version", "unversioned"))
    raise TaxonomyError(f"{path}: expected a JSON array or an object with a 'techniques' array")


def dump_taxonomy(taxonomy: Taxonomy, path: str | Path) -> None:
    Path(path).write_text(json.dumps(taxonomy.to_dict(), indent=2, ensure_ascii=False) + "\n", encoding="utf-8")


def default_taxonomy_path() -> Path:
    return Path(__file__).parent / "data" / "disarm_techniques.json"


def lookup(taxonomy: Taxonomy, technique_id: str) -> Technique | None:
    """Return the technique with this id, or ``None`` when it is not in the taxonomy."""
    return taxonomy.techniques.get(technique_id)


def children(taxonomy: Taxonomy, technique_id: str) -> list[Technique]:
    """Sub-techniques of ``technique_id`` in ascending id order (empty for leaves and unknown ids)."""
    return list(taxonomy._children.get(technique_id, ()))
