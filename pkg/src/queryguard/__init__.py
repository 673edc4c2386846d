"""Adaptive detection of malicious web queries with hybrid active selection."""

from .corpus import Corpus, CorpusConfig, gen_corpus, load_corpus, save_corpus
from .ingest import BENIGN, MALICIOUS, NormalizedQuery, ingest_lines
from .loop import AdaptiveRun, RunConfig, compute_metrics, oracle_labeler, run_loop

__all__ = [
    "AdaptiveRun",
    "BENIGN",
    "Corpus",
    "CorpusConfig",
    "MALICIOUS",
    "NormalizedQuery",
    "RunConfig",
    "compute_metrics",
    "gen_corpus",
    "ingest_lines",
    "load_corpus",
    "oracle_labeler",
    "run_loop",
    "save_corpus",
]

__version__ = "0.1.0"
