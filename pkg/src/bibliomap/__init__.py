"""Science mapping toolkit: relation graphs, Louvain clusters, LLM cluster descriptions, evaluation."""

__version__ = "0.1.0"
