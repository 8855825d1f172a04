import time

import pytest
import requests

from bibliomap.corpus import ReferenceKey
from bibliomap.resolver import (
    ExternalRecord,
    FixtureResolver,
    JsonlCache,
    OpenAlexResolver,
    RateLimiter,
    match_criteria,
    title_score,
)

# Pairs built so the token-set score lands exactly on the boundary.
AT_80 = ("a" * 80 + "b" * 20, "a" * 80 + "c" * 20)
AT_79 = ("a" * 79 + "b" * 21, "a" * 79 + "c" * 21)


def test_boundary_pairs_score_exactly():
    assert title_score(*AT_80) == 80.0
    assert title_score(*AT_79) == 79.0


def test_threshold_boundary_in_criteria():
    key = ReferenceKey(AT_80[0], 2020, "smith")
    passing = match_criteria(key, ExternalRecord("r", AT_80[1], 2020, "smith"))
    assert (passing.title, passing.title_year, passing.title_year_author) == (True, True, True)
    key79 = ReferenceKey(AT_79[0], 2020, "smith")
    failing = match_criteria(key79, ExternalRecord("r", AT_79[1], 2020, "smith"))
    assert (failing.title, failing.title_year, failing.title_year_author) == (False, False, False)


def test_criteria_full_and_title_only():
    key = ReferenceKey("deep learning", 2015, "lecun")
    full = match_criteria(key, ExternalRecord("r", "Deep Learning", 2015, "LeCun"))
    assert (full.title, full.title_year, full.title_year_author) == (True, True, True)
    wrong_year = match_criteria(key, ExternalRecord("r", "Deep Learning", 2016, "lecun"))
    assert (wrong_year.title, wrong_year.title_year, wrong_year.title_year_author) == (True, False, False)
    wrong_author = match_criteria(key, ExternalRecord("r", "Deep Learning", 2015, "hinton"))
    assert (wrong_author.title, wrong_author.title_year, wrong_author.title_year_author) == (True, True, False)
    missing_year = match_criteria(ReferenceKey("deep learning"), ExternalRecord("r", "Deep Learning", 2015))
    assert (missing_year.title, missing_year.title_year) == (True, False)


def test_fuzzy_typo_passes():
    assert title_score("Attention is all you ned", "Attention Is All You Need") >= 80


def test_fixture_resolver_exact_and_empty():
    resolver = FixtureResolver([ExternalRecord("W1", "Deep Learning", 2015, "lecun")])
    res = resolver.search_best("LeCun, Y. (2015). Deep learning. Nature, 521, 436-444.")
    assert res.matched and res.score == 100.0 and res.record.record_id == "W1"
    assert FixtureResolver([]).search_best("Doe, J. (2000). Anything. J.").status == "no_match"


def test_below_threshold_is_no_match():
    resolver = FixtureResolver([ExternalRecord("W1", "Protein folding kinetics")])
    res = resolver.search_best("Doe, J. (2000). Graph clustering methods. J.")
    assert res.status == "no_match" and res.score < 80


def test_fixture_resolver_from_csv(tmp_path):
    path = tmp_path / "records.csv"
    path.write_text("record_id,title,year,first_author_surname\nW1,Deep Learning,2015,LeCun\nW2,Other,,\n")
    resolver = FixtureResolver.from_csv(path)
    assert resolver.records[0] == ExternalRecord("W1", "Deep Learning", 2015, "lecun")
    assert resolver.records[1].year is None


# --- OpenAlex client with a fake session -------------------------------------

WORKS = {
    "results": [
        {"id": "https://openalex.org/W9", "title": "Something unrelated", "publication_year": 2001,
         "authorships": [{"author": {"display_name": "Ann Other"}}]},
        {"id": "https://openalex.org/W1", "title": "Deep learning", "publication_year": 2015,
         "authorships": [{"author": {"display_name": "Yann LeCun"}}]},
    ]
}


class FakeResponse:
    def __init__(self, payload, status=200):
        self._payload = payload
        self.status_code = status

    def json(self):
        return self._payload

    def raise_for_status(self):
        if self.status_code >= 400:
            raise requests.HTTPError(f"HTTP {self.status_code}")


class FakeSession:
    def __init__(self, responses):
        self.responses = list(responses)
        self.requests = []

    def get(self, url, params=None, timeout=None):
        self.requests.append((url, dict(params)))
        item = self.responses.pop(0) if len(self.responses) > 1 else self.responses[0]
        if isinstance(item, Exception):
            raise item
        return item


def _client(session, tmp_path=None, **kw):
    cache = tmp_path / "cache.jsonl" if tmp_path else None
    return OpenAlexResolver(base_url="http://oa.test/works", session=session, cache_path=cache,
                            rate=1000, backoff=0, **kw)


def test_openalex_request_and_best_candidate():
    session = FakeSession([FakeResponse(WORKS)])
    client = _client(session, mailto="me@example.org")
    res = client.search_best("LeCun, Y. (2015). Deep learning. Nature.")
    assert res.matched and res.record.record_id.endswith("W1")
    assert res.record.first_author_surname == "lecun"
    url, params = session.requests[0]
    assert url == "http://oa.test/works"
    assert params == {"search": "deep learning", "per-page": 5, "mailto": "me@example.org"}


def test_openalex_no_results_is_no_match():
    client = _client(FakeSession([FakeResponse({"results": []})]))
    assert client.search_best("Doe, J. (2000). Nothing here. J.").status == "no_match"


def test_openalex_retries_then_succeeds():
    session = FakeSession([FakeResponse({}, 429), FakeResponse({}, 503), FakeResponse(WORKS)])
    client = _client(session, retries=3)
    assert client.search_best("LeCun, Y. (2015). Deep learning. Nature.").matched
    assert client.network_calls == 3


def test_openalex_failure_unresolved_and_not_cached(tmp_path):
    session = FakeSession([requests.ConnectionError("down")])
    client = _client(session, tmp_path, retries=1)
    assert client.search_best("LeCun, Y. (2015). Deep learning. Nature.").status == "unresolved"
    assert not (tmp_path / "cache.jsonl").exists()


def test_warm_cache_makes_no_network_calls(tmp_path):
    first = _client(FakeSession([FakeResponse(WORKS)]), tmp_path)
    refs = ["LeCun, Y. (2015). Deep learning. Nature.", "Doe, J. (2001). Something unrelated. J."]
    cold = [first.search_best(r) for r in refs]
    assert first.network_calls == 2
    offline = FakeSession([requests.ConnectionError("must not be called")])
    second = _client(offline, tmp_path)
    warm = [second.search_best(r) for r in refs]
    assert warm == cold
    assert second.network_calls == 0 and offline.requests == []


def test_jsonl_cache_skips_corrupt_lines(tmp_path):
    path = tmp_path / "c.jsonl"
    path.write_text('{"key": "a", "value": {"x": 1}}\nnot json\n{"key": "a", "value": {"x": 2}}\n')
    cache = JsonlCache(path)
    assert cache.get("a") == {"x": 2}
    cache.put("b", {"y": 3})
    assert JsonlCache(path).get("b") == {"y": 3}


def test_rate_limiter_spacing():
    limiter = RateLimiter(rate=50)
    start = time.monotonic()
    for _ in range(6):
        limiter.wait()
    assert time.monotonic() - start >= 5 / 50 - 0.01
