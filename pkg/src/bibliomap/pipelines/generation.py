"""Generation clients: HTTP endpoint, transcript logging and an offline term-echo mock."""

from __future__ import annotations

import json
import logging
import os
import re
import threading
import time
from pathlib import Path
from typing import Optional, Protocol

import numpy as np
import requests

logger = logging.getLogger(__name__)


class GenerationError(RuntimeError):
    pass


class Generator(Protocol):
    model_id: str

    def generate(self, prompt: str) -> str: ...


class HTTPGenerator:
    """POST {"model", "prompt", "max_tokens"} -> {"text"}.

    A process-wide semaphore bounds concurrent requests; failures back off
    exponentially before the final GenerationError.
    """

    _semaphores: dict[int, threading.Semaphore] = {}

    def __init__(
        self,
        endpoint: str,
        model_id: str,
        max_output_tokens: int = 4096,
        api_key: Optional[str] = None,
        max_concurrency: int = 4,
        retries: int = 3,
        backoff: float = 2.0,
        timeout: float = 300.0,
        session: Optional[requests.Session] = None,
    ):
        self.endpoint = endpoint
        self.model_id = model_id
        self.max_output_tokens = max_output_tokens
        self.api_key = api_key or os.environ.get("BIBLIOMAP_GENERATION_KEY")
        self.retries = retries
        self.backoff = backoff
        self.timeout = timeout
        self.session = session or requests.Session()
        self._sem = self._semaphores.setdefault(max_concurrency, threading.Semaphore(max_concurrency))

    def generate(self, prompt: str) -> str:
        payload = {"model": self.model_id, "prompt": prompt, "max_tokens": self.max_output_tokens}
        headers = {"Authorization": f"Bearer {self.api_key}"} if self.api_key else {}
        for attempt in range(self.retries + 1):
            try:
                with self._sem:
                    resp = self.session.post(self.endpoint, json=payload, headers=headers, timeout=self.timeout)
                resp.raise_for_status()
                return resp.json()["text"]
            except (requests.RequestException, ValueError, KeyError) as exc:
                if attempt == self.retries:
                    raise GenerationError(f"generation failed after {attempt + 1} attempts: {exc}") from exc
                time.sleep(self.backoff * 2**attempt)
        raise AssertionError("unreachable")


class TranscriptLog:
    """Appends every request/response pair as one JSON line."""

    def __init__(self, path):
        self.path = Path(path)
        self._lock = threading.Lock()

    def record(self, **entry) -> None:
        with self._lock:
            self.path.parent.mkdir(parents=True, exist_ok=True)
            with self.path.open("a", encoding="utf-8") as fh:
                fh.write(json.dumps(entry, sort_keys=True, ensure_ascii=False) + "\n")


_BLOCK_RE = re.compile(r"^paper_id: (\d+)\n(?:cluster_id: (\d+)\n)?title: (.*)$", re.MULTILINE)
_HEADER_RE = re.compile(r"^### Cluster (\d+)", re.MULTILINE)


class TermEchoGenerator:
    """Offline stand-in for an LLM.

    Reads the records out of the prompt and echoes the titles of each
    cluster's papers as its description. Clusters come from the labels or
    cluster headings in the context; when the context is unlabeled, papers are
    dealt round-robin into the requested number of clusters. With
    ``shuffle_seed`` set, papers are permuted across clusters before echoing,
    which yields a structure-free control.
    """

    def __init__(self, model_id: str = "term-echo", shuffle_seed: Optional[int] = None):
        self.model_id = model_id
        self.shuffle_seed = shuffle_seed
        self.calls = 0

    def generate(self, prompt: str) -> str:
        self.calls += 1
        count = int(re.search(r"exactly (\d+)", prompt).group(1))
        fields_line = re.search(r"each object must contain: ([\w, ]+)", prompt).group(1)
        fields = [f.strip() for f in fields_line.split(",")]
        limit_m = re.search(r"no more than (\d+) references", prompt)
        max_refs = int(limit_m.group(1)) if limit_m else 10
        words_m = re.search(r"less than (\d+) words", prompt)
        max_words = int(words_m.group(1)) - 1 if words_m else 249

        records = [(int(m.group(1)), m.group(2), m.group(3).strip()) for m in _BLOCK_RE.finditer(prompt)]
        if not records:
            return self._blind(prompt, count, fields)

        groups: dict[int, list[tuple[int, str]]] = {}
        headers = list(_HEADER_RE.finditer(prompt))
        if headers:
            for m in _BLOCK_RE.finditer(prompt):
                owner = [h for h in headers if h.start() < m.start()][-1]
                groups.setdefault(int(owner.group(1)), []).append((int(m.group(1)), m.group(3).strip()))
        elif records[0][1] is not None:
            for pid, cluster, title in records:
                groups.setdefault(int(cluster), []).append((pid, title))
        else:
            for i, (pid, _, title) in enumerate(sorted(records)):
                groups.setdefault(i % count + 1, []).append((pid, title))
            for c in range(1, count + 1):
                groups.setdefault(c, [])

        if self.shuffle_seed is not None:
            rng = np.random.default_rng(self.shuffle_seed)
            flat = [item for c in sorted(groups) for item in groups[c]]
            perm = rng.permutation(len(flat))
            shuffled, pos = {}, 0
            for c in sorted(groups):
                shuffled[c] = [flat[i] for i in perm[pos : pos + len(groups[c])]]
                pos += len(groups[c])
            groups = shuffled

        out = []
        for cluster in sorted(groups):
            members = groups[cluster]
            obj = {"cluster_id": cluster}
            if "description" in fields:
                words = " ".join(title.rstrip(".") + "." for _, title in members[:max_refs]).split()
                obj["description"] = " ".join(words[:max_words]) or f"Cluster {cluster}."
            if "references" in fields:
                obj["references"] = [f"[{pid}]" for pid, _ in members[:max_refs]]
            out.append(obj)
        return json.dumps(out, indent=2)

    def _blind(self, prompt: str, count: int, fields: list[str]) -> str:
        m = re.search(r"^Query(?:/context)?:\n(.*)$", prompt, re.MULTILINE)
        topic = m.group(1).strip() if m else "the topic"
        out = []
        for c in range(1, count + 1):
            obj = {"cluster_id": c, "description": f"Research stream {c} on {topic}."}
            if "references" in fields:
                obj["references"] = [f"Author{c}, A. (2020). Perspectives on {topic}, part {c}. Journal of Studies."]
            out.append(obj)
        return json.dumps(out, indent=2)
