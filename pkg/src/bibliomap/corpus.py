"""Corpus ingestion, reference normalization and intra-corpus citation resolution."""

from __future__ import annotations

import csv
import json
import logging
import re
import unicodedata
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np
from rapidfuzz import fuzz, process

try:
    import tomllib
except ImportError:  # Python < 3.11
    import tomli as tomllib

logger = logging.getLogger(__name__)

CORPUS_COLUMNS = ("paper_id", "title", "abstract", "year", "authors", "references")
REQUIRED_COLUMNS = ("paper_id", "title")
DEFAULT_DELIMITER = "; "
TITLE_THRESHOLD = 80.0

_YEAR_RE = re.compile(r"(?<!\d)(1[89]\d\d|20\d\d)(?!\d)")
_PAREN_YEAR_RE = re.compile(r"\(\s*(?:1[89]\d\d|20\d\d)[a-z]?\s*\)")
_INITIAL_RE = re.compile(r"^(?:[A-Z]\.?-?){1,3}$")
_NON_WORD_RE = re.compile(r"[\W_]+", re.UNICODE)


class IngestionError(ValueError):
    """Raised when a corpus file cannot be turned into records."""


class NormalizationError(ValueError):
    pass


class ManifestError(ValueError):
    pass


@dataclass(frozen=True)
class PaperRecord:
    paper_id: int
    title: str
    abstract: str = ""
    year: Optional[int] = None
    authors: tuple[str, ...] = ()
    raw_references: tuple[str, ...] = ()
    cited_in_corpus: frozenset[int] = frozenset()

    @property
    def first_author_surname(self) -> Optional[str]:
        if not self.authors:
            return None
        return _surname_of(self.authors[0])

    @property
    def text(self) -> str:
        """Title-and-abstract representation used for embeddings."""
        if self.abstract.strip():
            return f"{self.title.strip()}. {self.abstract.strip()}"
        return self.title.strip()


@dataclass(frozen=True)
class BenchmarkInstance:
    instance_id: str
    query: str
    papers: tuple[PaperRecord, ...]
    target_k: int
    human_descriptions: Optional[tuple[str, ...]] = None

    def __post_init__(self):
        if self.target_k < 1:
            raise ManifestError(f"target_k must be >= 1, got {self.target_k}")
        if self.human_descriptions is not None and len(self.human_descriptions) != self.target_k:
            raise ManifestError(
                f"{len(self.human_descriptions)} human descriptions but target_k={self.target_k}"
            )

    @property
    def paper_ids(self) -> list[int]:
        return [p.paper_id for p in self.papers]

    def paper(self, paper_id: int) -> PaperRecord:
        for p in self.papers:
            if p.paper_id == paper_id:
                return p
        raise KeyError(paper_id)

    def by_id(self) -> dict[int, PaperRecord]:
        return {p.paper_id: p for p in self.papers}


@dataclass(frozen=True)
class ReferenceKey:
    normalized_title: str
    year: Optional[int] = None
    first_author_surname: Optional[str] = None

    def __post_init__(self):
        if not self.normalized_title:
            raise NormalizationError("normalized_title must be non-empty")


def normalize_title(text: str) -> str:
    """Lowercase, strip punctuation and collapse whitespace. Idempotent."""
    text = unicodedata.normalize("NFKC", text).lower()
    return " ".join(_NON_WORD_RE.sub(" ", text).split())


def normalize_surname(name: str) -> str:
    decomposed = unicodedata.normalize("NFKD", name)
    stripped = "".join(c for c in decomposed if not unicodedata.combining(c))
    return re.sub(r"[^a-z]", "", stripped.lower())


def _surname_of(author: str) -> Optional[str]:
    """Last word of the surname part of 'Smith, J.' / 'Smith J.' / 'J. Smith' / 'Van Eck N.J.'."""
    author = author.strip()
    if not author:
        return None
    head = author.split(",", 1)[0] if "," in author else author
    tokens = [t for t in head.split() if not _INITIAL_RE.match(t)]
    if not tokens:
        tokens = head.split()
    for tok in reversed(tokens):
        surname = normalize_surname(tok)
        if surname:
            return surname
    return None


_ABBREVIATIONS = {"al", "eds", "ed", "pp", "vol", "no", "eg", "ie", "vs", "jr", "st", "dr", "inc"}
_VENUE_RE = re.compile(r",\s*\d|\d+\s*[-\u2013]\s*\d+|\bpp\b|\bvol\b|\bdoi\b", re.IGNORECASE)
_SOURCE_RE = re.compile(
    r"\b(journal|proceedings|conference|review|letters|transactions|reports|annals|bulletin|"
    r"quarterly|magazine|press|symposium|workshop)\b",
    re.IGNORECASE,
)
_SCOPUS_AUTHOR_RE = re.compile(r"^[^\W\d_][\w'\-]*(?:\s+[^\W\d_][\w'\-]*)*\s+(?:[A-Z]\.\s?-?)+$")
_TRAILING_YEAR_RE = re.compile(r",?\s*\(\s*(1[89]\d\d|20\d\d)[a-z]?\s*\)\s*\.?$")


def _segments(text: str) -> list[str]:
    """Split on sentence ends, keeping initials and abbreviations intact."""
    parts, start = [], 0
    for m in re.finditer(r"[.?!](?=\s|$)", text):
        if m.group(0) == ".":
            before = re.search(r"([\w']+)$", text[start : m.start()])
            word = before.group(1) if before else ""
            if word.lower() in _ABBREVIATIONS:
                continue
            if len(word) == 1 and word.isalpha():
                # "Doe K. Title" ends a Vancouver author block; "J. Smith" does not
                if not re.search(r"[^\W\d_]{2,}\s+[A-Z]{1,2}$", text[start : m.start()]):
                    continue
        parts.append(text[start : m.start()])
        start = m.end()
    parts.append(text[start:])
    return [p.strip(" ,;:") for p in parts if p.strip(" ,;:")]


def _looks_like_authors(segment: str) -> bool:
    tokens = segment.replace(",", " ").split()
    if not tokens:
        return False
    if "et al" in segment.lower() or "&" in segment:
        return True
    initials = sum(1 for t in tokens if _INITIAL_RE.match(t))
    return initials > 0 and initials >= len(tokens) // 3


def _title_from_segments(segments: list[str]) -> str:
    """First segment that reads like a title; the longest one if none does."""
    for seg in segments:
        words = [w for w in normalize_title(seg).split() if not w.isdigit()]
        if words and not _VENUE_RE.search(seg) and not _looks_like_authors(seg):
            return seg

    def score(item):
        idx, seg = item
        words = [w for w in normalize_title(seg).split() if not w.isdigit()]
        return (not _VENUE_RE.search(seg), len(" ".join(words)), -idx)

    return max(enumerate(segments), key=score)[1]


def _scopus_title(text: str) -> tuple[str, str]:
    """(author block, title) for 'Surname I., Surname I., Title, Venue, vol, pp. x-y, (YYYY)'.

    Titles may themselves contain commas: everything between the author block
    and the source title is kept.
    """
    parts = [p.strip() for p in text.split(",")]
    authors = []
    while parts and _SCOPUS_AUTHOR_RE.match(parts[0]) and len(parts) > 1:
        authors.append(parts.pop(0))
    numeric = False
    while len(parts) > 1 and (re.search(r"\d", parts[-1]) or parts[-1].lower().startswith(("pp", "art"))):
        parts.pop()
        numeric = True
    if len(parts) > 1 and (numeric or _SOURCE_RE.search(parts[-1])):
        parts.pop()
    return ", ".join(authors), ", ".join(parts)


def normalize_reference(raw: str) -> ReferenceKey:
    """Canonical key for a free-text reference string.

    Handles 'Author (Year). Title. Venue.' styles, period-separated styles with
    a leading author block, and Scopus exports ending in '(Year)'.
    """
    text = " ".join((raw or "").split())
    if not text:
        raise NormalizationError("blank reference string")

    year_match = _YEAR_RE.search(text)
    year = int(year_match.group(1)) if year_match else None

    author_segment = ""
    paren = _PAREN_YEAR_RE.search(text)
    trailing = _TRAILING_YEAR_RE.search(text)
    if trailing and paren and paren.start() == trailing.start() + trailing.group(0).index("("):
        # Scopus: the only parenthesized year is the last thing in the string
        author_segment, title_span = _scopus_title(text[: trailing.start()])
        if not normalize_title(title_span):
            title_span = text[: trailing.start()]
    else:
        remainder = text
        if paren:
            author_segment = text[: paren.start()]
            remainder = text[paren.end():].lstrip(" .,:;")
        segments = _segments(remainder)
        if not paren and len(segments) > 1 and _looks_like_authors(segments[0]):
            author_segment = segments[0]
            segments = segments[1:]
        segments = [s for s in segments if normalize_title(_YEAR_RE.sub(" ", s))] or segments or [text]
        title_span = _title_from_segments(segments)

    title = normalize_title(title_span)
    if not title:
        raise NormalizationError(f"no title-like text in {raw!r}")

    surname = None
    if author_segment.strip():
        first_author = re.split(r";|&|\band\b|,(?=\s*[^\W\d_][\w'\-]*(?:,|\s+[A-Z]\.))", author_segment)[0]
        surname = _surname_of(first_author)
    return ReferenceKey(title, year, surname)


def record_key(paper: PaperRecord) -> ReferenceKey:
    return ReferenceKey(normalize_title(paper.title), paper.year, paper.first_author_surname)


def reference_keys(paper: PaperRecord) -> list[ReferenceKey]:
    keys = []
    for raw in paper.raw_references:
        try:
            keys.append(normalize_reference(raw))
        except NormalizationError:
            logger.debug("paper %s: skipping unnormalizable reference %r", paper.paper_id, raw)
    return keys


def _parse_int(value: str, what: str, row_no: int) -> int:
    try:
        return int(value.strip())
    except ValueError:
        raise IngestionError(f"row {row_no}: {what} {value!r} is not an integer") from None


def _split(cell: Optional[str], delimiter: str) -> tuple[str, ...]:
    if not cell or not cell.strip():
        return ()
    return tuple(part.strip() for part in cell.split(delimiter.strip() or delimiter) if part.strip())


def parse_corpus_csv(path, delimiter: str = DEFAULT_DELIMITER) -> list[PaperRecord]:
    """Read a corpus CSV (one paper per row)."""
    path = Path(path)
    if not path.exists():
        raise IngestionError(f"corpus file not found: {path}")
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise IngestionError(f"{path}: missing header row")
        fields = [f.strip() for f in reader.fieldnames]
        for column in REQUIRED_COLUMNS:
            if column not in fields:
                raise IngestionError(f"{path}: missing required column '{column}'")
        papers: list[PaperRecord] = []
        seen: set[int] = set()
        for row_no, row in enumerate(reader, start=2):
            row = {(k or "").strip(): (v or "") for k, v in row.items()}
            pid = _parse_int(row["paper_id"], "paper_id", row_no)
            if pid < 1:
                raise IngestionError(f"row {row_no}: paper_id must be positive, got {pid}")
            if pid in seen:
                raise IngestionError(f"{path}: duplicate paper_id {pid}")
            seen.add(pid)
            year_cell = row.get("year", "").strip()
            papers.append(
                PaperRecord(
                    paper_id=pid,
                    title=row["title"].strip(),
                    abstract=row.get("abstract", "").strip(),
                    year=_parse_int(year_cell, "year", row_no) if year_cell else None,
                    authors=_split(row.get("authors"), delimiter),
                    raw_references=_split(row.get("references"), delimiter),
                )
            )
    return papers


def write_corpus_csv(papers: Iterable[PaperRecord], path, delimiter: str = DEFAULT_DELIMITER) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CORPUS_COLUMNS)
        for p in papers:
            writer.writerow(
                [
                    p.paper_id,
                    p.title,
                    p.abstract,
                    "" if p.year is None else p.year,
                    delimiter.join(p.authors),
                    delimiter.join(p.raw_references),
                ]
            )


def resolve_intra_corpus_citations(
    papers: Sequence[PaperRecord], threshold: float = TITLE_THRESHOLD
) -> list[PaperRecord]:
    """Fill ``cited_in_corpus`` by fuzzy-matching each reference against corpus titles.

    A reference of paper i resolves to paper j (j != i) when the token-set
    title score is >= ``threshold`` and the years agree whenever both are known.
    """
    ids = [p.paper_id for p in papers]
    if len(set(ids)) != len(ids):
        raise IngestionError("paper_ids are not unique")
    corpus_keys = [record_key(p) for p in papers]
    corpus_titles = [k.normalized_title for k in corpus_keys]
    corpus_years = np.array([k.year if k.year is not None else -1 for k in corpus_keys])
    id_array = np.array(ids)

    resolved = []
    for paper in papers:
        keys = reference_keys(paper)
        cited: set[int] = set()
        if keys and corpus_titles:
            scores = process.cdist(
                [k.normalized_title for k in keys],
                corpus_titles,
                scorer=fuzz.token_set_ratio,
                dtype=np.float64,
            )
            for key, row in zip(keys, scores):
                ok = row >= threshold
                if key.year is not None:
                    ok &= (corpus_years == -1) | (corpus_years == key.year)
                cited.update(int(i) for i in id_array[ok])
        cited.discard(paper.paper_id)
        resolved.append(replace(paper, cited_in_corpus=frozenset(cited)))
    return resolved


def _read_manifest_file(path: Path) -> dict:
    text = path.read_text(encoding="utf-8")
    if path.suffix.lower() == ".json":
        return json.loads(text)
    try:
        return tomllib.loads(text)
    except tomllib.TOMLDecodeError:
        pass
    data = {}
    for line in text.splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line and ":" not in line:
            raise ManifestError(f"{path}: cannot parse line {line!r}")
        key, _, value = line.partition("=" if "=" in line else ":")
        data[key.strip()] = value.strip().strip('"').strip("'")
    return data


def read_human_descriptions(path) -> list[str]:
    """One description per row; uses the 'description' column when present, else the last column."""
    with Path(path).open(newline="", encoding="utf-8") as fh:
        rows = [r for r in csv.reader(fh) if any(c.strip() for c in r)]
    if not rows:
        return []
    header = [c.strip().lower() for c in rows[0]]
    if "description" in header:
        col = header.index("description")
        return [r[col].strip() for r in rows[1:]]
    return [r[-1].strip() for r in rows]


def load_benchmark_manifest(path, delimiter: str = DEFAULT_DELIMITER, resolve: bool = True) -> BenchmarkInstance:
    """Load one benchmark instance from a JSON/TOML/key=value manifest.

    Relative paths inside the manifest are resolved against the manifest's directory.
    """
    path = Path(path)
    if not path.exists():
        raise ManifestError(f"manifest not found: {path}")
    data = _read_manifest_file(path)
    for key in ("instance_id", "corpus_path"):
        if key not in data:
            raise ManifestError(f"{path}: missing '{key}'")
    base = path.parent
    corpus_path = base / data["corpus_path"]
    if not corpus_path.exists():
        raise ManifestError(f"{path}: corpus file not found: {corpus_path}")
    papers = parse_corpus_csv(corpus_path, delimiter=data.get("delimiter", delimiter))
    if resolve:
        papers = resolve_intra_corpus_citations(papers)

    humans = None
    if data.get("human_descriptions_path"):
        humans = tuple(read_human_descriptions(base / data["human_descriptions_path"]))
    explicit_k = data.get("target_k")
    if explicit_k not in (None, ""):
        target_k = int(explicit_k)
        if humans is not None and len(humans) != target_k:
            raise ManifestError(
                f"{path}: target_k={target_k} but human descriptions file has {len(humans)} rows"
            )
    elif humans is not None:
        target_k = len(humans)
    else:
        raise ManifestError(f"{path}: target_k absent and no human_descriptions_path given")
    return BenchmarkInstance(
        instance_id=str(data["instance_id"]),
        query=str(data.get("query", "")),
        papers=tuple(papers),
        target_k=target_k,
        human_descriptions=humans,
    )
