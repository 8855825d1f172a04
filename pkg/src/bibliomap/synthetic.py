"""Planted-partition graphs and vocabulary-blocked corpora with known cluster labels."""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from .community import Partition
from .corpus import BenchmarkInstance, PaperRecord, resolve_intra_corpus_citations, write_corpus_csv
from .graph import RelationGraph, RelationMode

_SYLLABLES = [
    "ka", "lo", "mi", "ne", "pu", "ra", "si", "to", "vu", "ze", "bo", "da",
    "fe", "gi", "ho", "ju", "ly", "my", "no", "py", "qua", "re", "sy", "ti",
]


def planted_partition_graph(
    n_blocks: int, block_size: int, p_in: float, p_out: float, seed: int = 0
) -> tuple[RelationGraph, Partition]:
    """Unit-weight stochastic block model with nodes 1..n_blocks*block_size."""
    rng = np.random.default_rng(seed)
    n = n_blocks * block_size
    block = np.repeat(np.arange(n_blocks), block_size)
    upper = np.triu(np.ones((n, n), dtype=bool), 1)
    prob = np.where(block[:, None] == block[None, :], p_in, p_out)
    mask = (rng.random((n, n)) < prob) & upper
    edges = {(int(u) + 1, int(v) + 1): 1.0 for u, v in zip(*np.nonzero(mask))}
    graph = RelationGraph(RelationMode.BC, tuple(range(1, n + 1)), edges)
    truth = Partition({i + 1: int(b) + 1 for i, b in enumerate(block)})
    return graph, truth


def _make_vocab(rng: np.random.Generator, size: int, taken: set[str]) -> list[str]:
    words = []
    while len(words) < size:
        word = "".join(rng.choice(_SYLLABLES, size=3))
        if word not in taken:
            taken.add(word)
            words.append(word)
    return words


def _sentence(rng: np.random.Generator, vocab: list[str], shared: list[str], n_words: int) -> str:
    own = list(rng.choice(vocab, size=n_words - 2))
    mixed = own + list(rng.choice(shared, size=2))
    rng.shuffle(mixed)
    text = " ".join(mixed)
    return text[0].upper() + text[1:] + "."


def blocked_corpus(
    n_blocks: int = 4,
    block_size: int = 10,
    refs_per_block: int = 30,
    refs_per_paper: int = 8,
    cross_ref_rate: float = 0.1,
    vocab_size: int = 25,
    seed: int = 0,
    instance_id: str = "synthetic",
    query: str = "synthetic topic",
) -> tuple[BenchmarkInstance, Partition]:
    """Corpus whose papers draw vocabulary and cited works from their own block.

    Returns the instance (target_k = n_blocks, with one human description per
    block) and the planted paper labels.
    """
    rng = np.random.default_rng(seed)
    taken: set[str] = set()
    shared = _make_vocab(rng, 10, taken)
    vocabs = [_make_vocab(rng, vocab_size, taken) for _ in range(n_blocks)]
    ref_pools = []
    for b in range(n_blocks):
        pool = []
        for r in range(refs_per_block):
            title = " ".join(rng.choice(vocabs[b], size=4)).capitalize()
            pool.append(f"Author{b}x{r}, A. ({1990 + r % 30}). {title} number {b}x{r}. Journal {b}.")
        ref_pools.append(pool)

    papers, labels = [], {}
    for b in range(n_blocks):
        for i in range(block_size):
            pid = b * block_size + i + 1
            title = " ".join(rng.choice(vocabs[b], size=5)).capitalize()
            abstract = " ".join(_sentence(rng, vocabs[b], shared, 9) for _ in range(3))
            refs = []
            for ref_idx in rng.choice(refs_per_block, size=refs_per_paper, replace=False):
                pool_b = b
                if rng.random() < cross_ref_rate:
                    pool_b = int(rng.integers(n_blocks))
                refs.append(ref_pools[pool_b][ref_idx])
            papers.append(
                PaperRecord(
                    paper_id=pid,
                    title=title,
                    abstract=abstract,
                    year=2015 + int(rng.integers(8)),
                    authors=(f"Writer{pid}, Q.",),
                    raw_references=tuple(dict.fromkeys(refs)),
                )
            )
            labels[pid] = b + 1
    humans = tuple(
        "Cluster about " + " ".join(vocabs[b][:8]) + "." for b in range(n_blocks)
    )
    instance = BenchmarkInstance(
        instance_id=instance_id,
        query=query,
        papers=tuple(resolve_intra_corpus_citations(papers)),
        target_k=n_blocks,
        human_descriptions=humans,
    )
    return instance, Partition(labels)


def write_fixture(instance: BenchmarkInstance, directory) -> Path:
    """Write corpus.csv, humans.csv and manifest.json; return the manifest path."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    write_corpus_csv(instance.papers, directory / "corpus.csv")
    manifest = {
        "instance_id": instance.instance_id,
        "query": instance.query,
        "corpus_path": "corpus.csv",
    }
    if instance.human_descriptions is not None:
        with (directory / "humans.csv").open("w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["cluster", "description"])
            for i, text in enumerate(instance.human_descriptions, start=1):
                writer.writerow([i, text])
        manifest["human_descriptions_path"] = "humans.csv"
    else:
        manifest["target_k"] = instance.target_k
    path = directory / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2) + "\n", encoding="utf-8")
    return path
