"""Parsing and validation of structured pipeline output."""

from __future__ import annotations

import csv
import json
import logging
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Collection, Mapping, Optional, Sequence

from .prompts import PipelineKind

logger = logging.getLogger(__name__)

TOKEN_RE = re.compile(r"\[\s*(\d+)\s*\]")
REFERENCE_SEPARATOR = "; "
_FENCE_RE = re.compile(r"^\s*```[\w-]*\s*\n?(.*?)\n?\s*```\s*$", re.DOTALL)


class OutputError(ValueError):
    """Base class for rejected generator output."""


class OutputParseError(OutputError):
    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (at offset {offset})")
        self.offset = offset


class ContractViolation(OutputError):
    def __init__(self, message: str, missing: Collection[int] = (), extra: Collection[int] = ()):
        detail = message
        if missing:
            detail += f"; missing cluster_ids {sorted(missing)}"
        if extra:
            detail += f"; unexpected cluster_ids {sorted(extra)}"
        super().__init__(detail)
        self.missing = sorted(missing)
        self.extra = sorted(extra)


class GroundingViolation(OutputError):
    def __init__(self, message: str, tokens: Sequence[str]):
        super().__init__(f"{message}: {', '.join(map(str, tokens))}")
        self.tokens = list(tokens)


@dataclass(frozen=True)
class ClusterDescription:
    cluster_id: int
    description: str
    references: tuple[str, ...] = ()
    label: Optional[str] = None

    @property
    def text(self) -> str:
        """Label-plus-description representation."""
        if self.label:
            return f"{self.label.strip()}. {self.description.strip()}"
        return self.description.strip()

    def cited_ids(self) -> list[int]:
        out = []
        for ref in self.references:
            m = re.fullmatch(r"\s*\[\s*(\d+)\s*\]\s*", ref)
            if m:
                out.append(int(m.group(1)))
        return out


@dataclass(frozen=True)
class DescriptionSet:
    entries: tuple[ClusterDescription, ...]
    kind: Optional[PipelineKind] = None
    metadata: Mapping[str, object] = field(default_factory=dict, compare=False)

    def __post_init__(self):
        ids = [e.cluster_id for e in self.entries]
        if len(set(ids)) != len(ids):
            raise ContractViolation("duplicate cluster_ids in description set")

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    @property
    def cluster_ids(self) -> list[int]:
        return [e.cluster_id for e in self.entries]

    def entry(self, cluster_id: int) -> ClusterDescription:
        for e in self.entries:
            if e.cluster_id == cluster_id:
                return e
        raise KeyError(cluster_id)

    def all_references(self) -> list[str]:
        return [r for e in self.entries for r in e.references]

    def write_csv(self, path) -> None:
        has_labels = any(e.label for e in self.entries)
        with Path(path).open("w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["cluster_id", "description", "references"] + (["label"] if has_labels else []))
            for e in sorted(self.entries, key=lambda e: e.cluster_id):
                row = [e.cluster_id, e.description, REFERENCE_SEPARATOR.join(e.references)]
                writer.writerow(row + ([e.label or ""] if has_labels else []))

    @classmethod
    def read_csv(cls, path, kind: Optional[PipelineKind] = None) -> "DescriptionSet":
        entries = []
        with Path(path).open(newline="", encoding="utf-8") as fh:
            for row in csv.DictReader(fh):
                refs = tuple(r.strip() for r in (row.get("references") or "").split(REFERENCE_SEPARATOR) if r.strip())
                entries.append(
                    ClusterDescription(
                        cluster_id=int(row["cluster_id"]),
                        description=row["description"],
                        references=refs,
                        label=(row.get("label") or None),
                    )
                )
        return cls(tuple(entries), kind)

    @classmethod
    def from_texts(cls, texts: Sequence[str], kind: Optional[PipelineKind] = None) -> "DescriptionSet":
        """Reference-free set with cluster ids 1..n (e.g. human descriptions)."""
        return cls(tuple(ClusterDescription(i + 1, t) for i, t in enumerate(texts)), kind)


@dataclass(frozen=True)
class SelectionSet:
    selections: Mapping[int, tuple[int, ...]]

    @property
    def cluster_ids(self) -> list[int]:
        return sorted(self.selections)

    def paper_ids(self) -> set[int]:
        return {p for ids in self.selections.values() for p in ids}


def strip_fences(raw: str) -> str:
    m = _FENCE_RE.match(raw)
    return m.group(1) if m else raw.strip()


def _load_array(raw: str) -> list:
    text = strip_fences(raw)
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        # tolerate prose around a single JSON array
        start, end = text.find("["), text.rfind("]")
        if 0 <= start < end:
            try:
                data = json.loads(text[start : end + 1])
            except json.JSONDecodeError:
                raise OutputParseError(f"malformed JSON: {exc.msg}", exc.pos) from None
        else:
            raise OutputParseError(f"malformed JSON: {exc.msg}", exc.pos) from None
    if isinstance(data, dict):
        # {"clusters": [...]} style wrappers
        arrays = [v for v in data.values() if isinstance(v, list)]
        if len(arrays) == 1:
            data = arrays[0]
    if not isinstance(data, list):
        raise ContractViolation(f"expected a JSON array, got {type(data).__name__}")
    return data


def _cluster_id(obj: dict, index: int) -> int:
    value = obj["cluster_id"]
    if isinstance(value, bool):
        raise ContractViolation(f"object {index}: cluster_id must be numeric")
    if isinstance(value, int):
        return value
    if isinstance(value, float) and value.is_integer():
        return int(value)
    if isinstance(value, str) and value.strip().isdigit():
        return int(value.strip())
    raise ContractViolation(f"object {index}: cluster_id {value!r} is not numeric")


def _tokens(refs: list, cluster_id: int, context_ids: Optional[Collection[int]]) -> tuple[list[int], list[str]]:
    """Paper ids cited by '[#]' tokens plus any offending entries."""
    ids, bad = [], []
    for ref in refs:
        if not isinstance(ref, str):
            bad.append(repr(ref))
            continue
        found = TOKEN_RE.findall(ref)
        residue = TOKEN_RE.sub("", ref).strip(" ,;")
        if not found or residue:
            bad.append(ref)
            continue
        for tok in found:
            pid = int(tok)
            if context_ids is not None and pid not in context_ids:
                bad.append(f"[{pid}]")
            else:
                ids.append(pid)
    return ids, bad


def parse_output(
    raw: str,
    expected: Collection[int],
    kind: PipelineKind,
    stage: int = 1,
    context_ids: Optional[Collection[int]] = None,
    cluster_members: Optional[Mapping[int, Collection[int]]] = None,
    max_refs: Optional[int] = None,
):
    """Validate generator output against the stage's JSON contract.

    Returns a SelectionSet for the first stage of the select flows, otherwise
    a DescriptionSet.
    """
    kind = PipelineKind.parse(kind)
    expected = set(expected)
    selecting = kind.stages == 2 and stage == 1
    describing_only = kind.stages == 2 and stage == 2
    required = ["cluster_id"]
    if not selecting:
        required.append("description")
    if not describing_only:
        required.append("references")

    data = _load_array(raw)
    for i, obj in enumerate(data):
        if not isinstance(obj, dict):
            raise ContractViolation(f"object {i} is not a JSON object")
        absent = [f for f in required if f not in obj]
        if absent:
            raise ContractViolation(f"object {i} lacks required field(s) {absent}")
    ids = [_cluster_id(obj, i) for i, obj in enumerate(data)]
    dupes = sorted({c for c in ids if ids.count(c) > 1})
    if dupes:
        raise ContractViolation(f"duplicate cluster_ids {dupes}")
    if len(data) != len(expected) or set(ids) != expected:
        raise ContractViolation(
            f"expected exactly {len(expected)} objects, got {len(data)}",
            missing=expected - set(ids), extra=set(ids) - expected,
        )

    grounded = kind is not PipelineKind.BLIND
    violations: list[str] = []
    refs_by_cluster: dict[int, list] = {}
    for obj, cid in zip(data, ids):
        refs = obj.get("references", []) if not describing_only else []
        if refs is None:
            refs = []
        if not isinstance(refs, list):
            raise ContractViolation(f"cluster {cid}: references must be an array")
        if grounded:
            pids, bad = _tokens(refs, cid, context_ids)
            violations.extend(bad)
            if selecting and cluster_members is not None:
                members = set(cluster_members.get(cid, ()))
                violations.extend(f"[{p}] (not in cluster {cid})" for p in pids if p not in members)
            refs_by_cluster[cid] = list(dict.fromkeys(pids))
        else:
            bad = [repr(r) for r in refs if not isinstance(r, str) or not r.strip()]
            if bad:
                raise ContractViolation(f"cluster {cid}: references must be bibliographic strings")
            refs_by_cluster[cid] = list(dict.fromkeys(r.strip() for r in refs))
    if violations:
        raise GroundingViolation("references outside the provided context", violations)

    for cid, refs in refs_by_cluster.items():
        if max_refs is not None and len(refs) > max_refs:
            logger.warning("cluster %d: %d references, keeping first %d", cid, len(refs), max_refs)
            refs_by_cluster[cid] = refs[:max_refs]

    if selecting:
        return SelectionSet({cid: tuple(refs_by_cluster[cid]) for cid in sorted(ids)})

    entries = []
    for obj, cid in sorted(zip(data, ids), key=lambda t: t[1]):
        description = obj["description"]
        if not isinstance(description, str) or not description.strip():
            raise ContractViolation(f"cluster {cid}: description must be non-empty text")
        refs = refs_by_cluster.get(cid, [])
        tokens = tuple(f"[{p}]" for p in refs) if grounded else tuple(refs)
        label = obj.get("label")
        entries.append(
            ClusterDescription(cid, description.strip(), tokens, label if isinstance(label, str) and label.strip() else None)
        )
    return DescriptionSet(tuple(entries), kind)
