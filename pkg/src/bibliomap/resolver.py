"""External bibliographic record lookup (OpenAlex-compatible) with fuzzy title matching."""

from __future__ import annotations

import csv
import hashlib
import json
import logging
import os
import random
import threading
import time
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Optional, Protocol

import requests
from rapidfuzz import fuzz

from .corpus import ReferenceKey, _surname_of, normalize_reference, normalize_surname, normalize_title

logger = logging.getLogger(__name__)

TITLE_THRESHOLD = 80.0
DEFAULT_CANDIDATES = 5
OPENALEX_WORKS = "https://api.openalex.org/works"


@dataclass(frozen=True)
class ExternalRecord:
    record_id: str
    title: str
    year: Optional[int] = None
    first_author_surname: Optional[str] = None


@dataclass(frozen=True)
class Resolution:
    """Outcome of one lookup.

    ``status`` is "match" (record set), "no_match" (service answered, nothing
    usable) or "unresolved" (service unreachable).
    """

    status: str
    record: Optional[ExternalRecord] = None
    score: float = 0.0

    @property
    def matched(self) -> bool:
        return self.status == "match"


@dataclass(frozen=True)
class MatchCriteria:
    title: bool
    title_year: bool
    title_year_author: bool


def title_score(a: str, b: str) -> float:
    """Token-set similarity of normalized titles on a 0-100 scale."""
    na, nb = normalize_title(a), normalize_title(b)
    if not na or not nb:
        return 0.0
    return float(fuzz.token_set_ratio(na, nb))


def match_criteria(
    reference: ReferenceKey,
    record: ExternalRecord,
    score: Optional[float] = None,
    threshold: float = TITLE_THRESHOLD,
) -> MatchCriteria:
    if score is None:
        score = title_score(reference.normalized_title, record.title)
    title_ok = score >= threshold
    year_ok = (
        title_ok and reference.year is not None and record.year is not None
        and reference.year == record.year
    )
    ref_surname = normalize_surname(reference.first_author_surname or "")
    rec_surname = normalize_surname(record.first_author_surname or "")
    author_ok = year_ok and bool(ref_surname) and ref_surname == rec_surname
    return MatchCriteria(title_ok, year_ok, author_ok)


class RecordResolver(Protocol):
    resolver_id: str

    def search_best(self, reference: str) -> Resolution: ...


def _best(title: str, candidates: list[ExternalRecord], threshold: float = TITLE_THRESHOLD) -> Resolution:
    """Best-scoring candidate; below ``threshold`` it is reported as no_match (record kept for inspection)."""
    if not candidates:
        return Resolution("no_match")
    scored = [(title_score(title, c.title), i, c) for i, c in enumerate(candidates)]
    score, _, record = max(scored, key=lambda t: (t[0], -t[1]))
    return Resolution("match" if score >= threshold else "no_match", record, score)


class FixtureResolver:
    """Offline resolver over a local record list (CSV: record_id,title,year,first_author_surname)."""

    resolver_id = "fixture"

    def __init__(self, records: list[ExternalRecord]):
        self.records = list(records)

    @classmethod
    def from_csv(cls, path) -> "FixtureResolver":
        records = []
        with Path(path).open(newline="", encoding="utf-8") as fh:
            for row in csv.DictReader(fh):
                year = (row.get("year") or "").strip()
                records.append(
                    ExternalRecord(
                        record_id=row["record_id"].strip(),
                        title=row["title"].strip(),
                        year=int(year) if year else None,
                        first_author_surname=normalize_surname(row.get("first_author_surname") or "") or None,
                    )
                )
        return cls(records)

    def search_best(self, reference: str) -> Resolution:
        key = normalize_reference(reference)
        return _best(key.normalized_title, self.records)


class RateLimiter:
    """Serializes calls to at most ``rate`` per second."""

    def __init__(self, rate: float = 5.0):
        self.interval = 1.0 / rate
        self._lock = threading.Lock()
        self._next = 0.0

    def wait(self) -> None:
        with self._lock:
            now = time.monotonic()
            if now < self._next:
                time.sleep(self._next - now)
                now = self._next
            self._next = now + self.interval


class JsonlCache:
    """Append-only key/value file; the last entry for a key wins."""

    def __init__(self, path):
        self.path = Path(path)
        self._lock = threading.Lock()
        self._data: dict[str, dict] = {}
        if self.path.exists():
            with self.path.open(encoding="utf-8") as fh:
                for line in fh:
                    line = line.strip()
                    if not line:
                        continue
                    try:
                        entry = json.loads(line)
                    except json.JSONDecodeError:
                        logger.warning("skipping corrupt cache line in %s", self.path)
                        continue
                    self._data[entry["key"]] = entry["value"]

    def get(self, key: str) -> Optional[dict]:
        return self._data.get(key)

    def put(self, key: str, value: dict) -> None:
        with self._lock:
            self._data[key] = value
            self.path.parent.mkdir(parents=True, exist_ok=True)
            with self.path.open("a", encoding="utf-8") as fh:
                fh.write(json.dumps({"key": key, "value": value}, sort_keys=True) + "\n")


def _record_from_work(work: dict) -> Optional[ExternalRecord]:
    title = work.get("title") or work.get("display_name")
    if not title:
        return None
    surname = None
    authorships = work.get("authorships") or []
    if authorships:
        name = (authorships[0].get("author") or {}).get("display_name") or ""
        surname = _surname_of(name)
    return ExternalRecord(
        record_id=str(work.get("id", "")),
        title=title,
        year=work.get("publication_year"),
        first_author_surname=surname,
    )


class OpenAlexResolver:
    """Title search against an OpenAlex-compatible /works endpoint.

    Inspects the top ``candidates`` hits and keeps the best title score.
    Successful lookups (including no-match answers) are cached on disk;
    network failures are returned as "unresolved" and never cached.
    """

    resolver_id = "openalex"

    def __init__(
        self,
        base_url: Optional[str] = None,
        mailto: Optional[str] = None,
        cache_path=None,
        rate: float = 5.0,
        candidates: int = DEFAULT_CANDIDATES,
        retries: int = 3,
        backoff: float = 1.0,
        timeout: float = 30.0,
        session: Optional[requests.Session] = None,
    ):
        self.base_url = base_url or os.environ.get("BIBLIOMAP_OPENALEX_URL", OPENALEX_WORKS)
        self.mailto = mailto or os.environ.get("BIBLIOMAP_MAILTO")
        self.cache = JsonlCache(cache_path) if cache_path else None
        self.limiter = RateLimiter(rate)
        self.candidates = candidates
        self.retries = retries
        self.backoff = backoff
        self.timeout = timeout
        self.session = session or requests.Session()
        self.network_calls = 0

    def _fetch(self, title: str) -> list[dict]:
        params = {"search": title, "per-page": self.candidates}
        if self.mailto:
            params["mailto"] = self.mailto
        for attempt in range(self.retries + 1):
            self.limiter.wait()
            self.network_calls += 1
            try:
                resp = self.session.get(self.base_url, params=params, timeout=self.timeout)
                if resp.status_code == 429 or resp.status_code >= 500:
                    raise requests.HTTPError(f"HTTP {resp.status_code}")
                resp.raise_for_status()
                return resp.json().get("results", [])[: self.candidates]
            except (requests.RequestException, ValueError) as exc:
                if attempt == self.retries:
                    raise
                delay = self.backoff * 2**attempt * (1 + random.random() * 0.25)
                logger.debug("openalex retry %d after %s (%.2fs)", attempt + 1, exc, delay)
                time.sleep(delay)
        return []

    def search_best(self, reference: str) -> Resolution:
        key = normalize_reference(reference)
        digest = hashlib.sha256(key.normalized_title.encode("utf-8")).hexdigest()
        if self.cache is not None:
            cached = self.cache.get(digest)
            if cached is not None:
                record = ExternalRecord(**cached["record"]) if cached.get("record") else None
                return Resolution(cached["status"], record, cached.get("score", 0.0))
        try:
            works = self._fetch(key.normalized_title)
        except (requests.RequestException, ValueError) as exc:
            logger.warning("openalex lookup failed for %r: %s", reference[:80], exc)
            return Resolution("unresolved")
        records = [r for r in (_record_from_work(w) for w in works) if r is not None]
        result = _best(key.normalized_title, records)
        if self.cache is not None:
            self.cache.put(
                digest,
                {
                    "status": result.status,
                    "record": asdict(result.record) if result.record else None,
                    "score": result.score,
                },
            )
        return result
