"""Query text to dense vectors: character bigrams, feature scoring, reduction.

The alphabet is derived, not listed: printable ASCII 33..126 folds to 68
distinct lowercase symbols, and removing the five unsafe printables leaves 63.
Bigram counts over that alphabet give a 3969-dimensional raw space; scoring
picks the informative dimensions and PCA (or random projection) compresses
them to the working dimension.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .ingest import MALICIOUS, UNSAFE_PRINTABLE


class UnknownCharacter(ValueError):
    """Text contains a character outside the alphabet."""


class DegenerateLabels(ValueError):
    """An operation needs both classes but got only one."""


def _derive_symbols() -> str:
    folded = {chr(c).lower() for c in range(33, 127)}
    return "".join(sorted(folded - UNSAFE_PRINTABLE))


class Alphabet:
    """Ordered symbol set with a char -> position map."""

    def __init__(self, symbols: Optional[str] = None):
        self.symbols = symbols if symbols is not None else _derive_symbols()
        assert len(self.symbols) == 63, f"alphabet must have 63 symbols, got {len(self.symbols)}"
        assert len(set(self.symbols)) == len(self.symbols)
        assert not any(c.isupper() or c in UNSAFE_PRINTABLE for c in self.symbols)
        self.index = {c: i for i, c in enumerate(self.symbols)}
        # byte -> symbol position, -1 for anything outside the alphabet
        self._table = np.full(256, -1, dtype=np.int64)
        for c, i in self.index.items():
            self._table[ord(c)] = i

    def __len__(self) -> int:
        return len(self.symbols)

    def encode(self, text: str) -> np.ndarray:
        try:
            raw = np.frombuffer(text.encode("latin-1"), dtype=np.uint8)
        except UnicodeEncodeError as e:
            raise UnknownCharacter(str(e)) from None
        codes = self._table[raw]
        if (codes < 0).any():
            bad = text[int(np.argmax(codes < 0))]
            raise UnknownCharacter(f"character {bad!r} not in alphabet")
        return codes


_DEFAULT_ALPHABET: Optional[Alphabet] = None


def default_alphabet() -> Alphabet:
    global _DEFAULT_ALPHABET
    if _DEFAULT_ALPHABET is None:
        _DEFAULT_ALPHABET = Alphabet()
    return _DEFAULT_ALPHABET


N_BIGRAMS = 63 * 63

# Sparse bigram cache for the default alphabet; corpora reuse texts heavily
# across batches and strategies, and entries are tiny.
_SPARSE_CACHE: dict[str, tuple[np.ndarray, np.ndarray]] = {}


def sparse_bigrams(text: str, alphabet: Optional[Alphabet] = None) -> tuple[np.ndarray, np.ndarray]:
    """(sorted unique bigram ids, normalized values); max value is exactly 1.0."""
    use_cache = alphabet is None
    if use_cache:
        cached = _SPARSE_CACHE.get(text)
        if cached is not None:
            return cached
        alphabet = default_alphabet()
    if len(text) < 2:
        raise UnknownCharacter(f"text too short for bigrams: {text!r}")
    codes = alphabet.encode(text)
    ids = codes[:-1] * 63 + codes[1:]
    uniq, counts = np.unique(ids, return_counts=True)
    values = counts / counts.max()
    out = (uniq, values)
    if use_cache:
        _SPARSE_CACHE[text] = out
    return out


def bigram_vector(text: str, alphabet: Optional[Alphabet] = None) -> np.ndarray:
    """Dense length-3969 vector of bigram counts scaled by the per-query max."""
    ids, values = sparse_bigrams(text, alphabet)
    vec = np.zeros(N_BIGRAMS)
    vec[ids] = values
    return vec


def _entropy(p: np.ndarray) -> np.ndarray:
    p = np.clip(p, 0.0, 1.0)
    out = np.zeros_like(p)
    for q in (p, 1.0 - p):
        mask = q > 0
        out[mask] -= q[mask] * np.log2(q[mask])
    return out


def _scores_from_presence(
    pos_with: np.ndarray, neg_with: np.ndarray, n_pos: int, n_neg: int, method: str
) -> np.ndarray:
    n = n_pos + n_neg
    a = pos_with.astype(float)
    b = neg_with.astype(float)
    n_f = a + b

    if method == "df":
        return n_f / n

    if n_pos == 0 or n_neg == 0:
        raise DegenerateLabels("scoring needs both classes")

    if method == "ig":
        c = n_pos - a
        n_nf = n - n_f
        h_class = float(_entropy(np.array([n_pos / n]))[0])
        with np.errstate(invalid="ignore", divide="ignore"):
            h_given_f = np.where(n_f > 0, _entropy(np.divide(a, n_f, where=n_f > 0)), 0.0)
            h_given_nf = np.where(n_nf > 0, _entropy(np.divide(c, n_nf, where=n_nf > 0)), 0.0)
        ig = h_class - (n_f / n) * h_given_f - (n_nf / n) * h_given_nf
        ig[n_f == 0] = 0.0
        return np.maximum(ig, 0.0)

    if method == "chi2":
        c = n_pos - a
        d = n_neg - b
        num = n * (a * d - b * c) ** 2
        den = (a + b) * (c + d) * (a + c) * (b + d)
        with np.errstate(invalid="ignore", divide="ignore"):
            chi = np.where(den > 0, num / np.where(den > 0, den, 1.0), 0.0)
        return chi

    raise ValueError(f"unknown scoring method: {method!r}")


def score_features(X: np.ndarray, y: Sequence[int], method: str = "ig") -> np.ndarray:
    """Per-dimension relevance of presence (value > 0) to the class label.

    Dimensions absent from every sample score 0 under all methods.
    """
    y = np.asarray(y)
    presence = np.asarray(X) > 0
    pos = presence[y == 1].sum(axis=0)
    neg = presence[y == -1].sum(axis=0)
    return _scores_from_presence(pos, neg, int((y == 1).sum()), int((y == -1).sum()), method)


def select_top_k(scores: np.ndarray, k: int) -> np.ndarray:
    """Ascending indices of the k best nonzero scores; ties favor lower index."""
    scores = np.asarray(scores, dtype=float)
    order = np.argsort(-scores, kind="stable")
    nonzero = int(np.count_nonzero(scores))
    take = min(k, nonzero)
    return np.sort(order[:take])


@dataclass
class Reduction:
    kind: str  # "pca" or "rp"
    matrix: np.ndarray  # (K_sel, d)
    center: np.ndarray  # (K_sel,)
    eigenvalues: Optional[np.ndarray] = None  # top-d, PCA only
    total_variance: Optional[float] = None
    rank_deficient: bool = False


def fit_pca(X: np.ndarray, d: int) -> Reduction:
    """Top-d principal directions of the sample covariance.

    Columns carry a deterministic sign (largest-magnitude entry positive).
    Fewer than d positive eigenvalues is reported, not fatal: the trailing
    eigenvectors still form a deterministic orthonormal completion.
    """
    X = np.asarray(X, dtype=float)
    n, k = X.shape
    if n < 2:
        raise ValueError("PCA needs at least 2 samples")
    if d > k:
        raise ValueError(f"d={d} exceeds feature count {k}")
    center = X.mean(axis=0)
    Xc = X - center
    cov = (Xc.T @ Xc) / (n - 1)
    eigvals, eigvecs = np.linalg.eigh(cov)
    order = np.argsort(eigvals, kind="stable")[::-1]
    eigvals = eigvals[order]
    eigvecs = eigvecs[:, order]
    matrix = eigvecs[:, :d].copy()
    for j in range(matrix.shape[1]):
        pivot = int(np.argmax(np.abs(matrix[:, j])))
        if matrix[pivot, j] < 0:
            matrix[:, j] = -matrix[:, j]
    tol = max(float(eigvals[0]) if len(eigvals) else 0.0, 1.0) * 1e-10
    positive = int(np.sum(eigvals > tol))
    return Reduction(
        kind="pca",
        matrix=matrix,
        center=center,
        eigenvalues=np.maximum(eigvals[:d], 0.0),
        total_variance=float(np.sum(np.maximum(eigvals, 0.0))),
        rank_deficient=positive < d,
    )


def fit_random_projection(n_features: int, d: int, seed: int) -> Reduction:
    """Seeded +-1/sqrt(d) projection; center is zero (no data statistics)."""
    if d > n_features:
        raise ValueError(f"d={d} exceeds feature count {n_features}")
    rng = np.random.default_rng(seed)
    signs = rng.integers(0, 2, size=(n_features, d)) * 2 - 1
    return Reduction(kind="rp", matrix=signs / np.sqrt(d), center=np.zeros(n_features))


@dataclass
class PipelineConfig:
    scoring_method: str = "ig"
    top_k: int = 800
    reduction: str = "pca"  # "pca", "rp" or "none"
    dim: int = 80


@dataclass
class FeaturePipeline:
    alphabet: Alphabet
    selected: np.ndarray
    reduction: Optional[Reduction]
    scoring_method: str
    dim: int

    def out_dim(self) -> int:
        return self.reduction.matrix.shape[1] if self.reduction is not None else len(self.selected)


def _selected_matrix(
    texts: Sequence[str], selected: np.ndarray, alphabet: Optional[Alphabet]
) -> np.ndarray:
    M = np.zeros((len(texts), len(selected)))
    for row, text in enumerate(texts):
        ids, values = sparse_bigrams(text, alphabet)
        pos = np.searchsorted(selected, ids)
        pos_ok = pos < len(selected)
        hit = np.zeros(len(ids), dtype=bool)
        hit[pos_ok] = selected[pos[pos_ok]] == ids[pos_ok]
        M[row, pos[hit]] = values[hit]
    return M


def fit_pipeline(
    texts: Sequence[str],
    labels: Sequence[str],
    config: PipelineConfig,
    seed: int = 0,
    alphabet: Optional[Alphabet] = None,
) -> FeaturePipeline:
    """Score bigram dims on the labeled set, pick top-k, fit the reduction."""
    if len(texts) != len(labels):
        raise ValueError("texts/labels length mismatch")
    y = np.array([1 if lab == MALICIOUS else -1 for lab in labels])

    pos_with = np.zeros(N_BIGRAMS, dtype=np.int64)
    neg_with = np.zeros(N_BIGRAMS, dtype=np.int64)
    for text, cls in zip(texts, y):
        ids, _ = sparse_bigrams(text, alphabet)
        if cls == 1:
            pos_with[ids] += 1
        else:
            neg_with[ids] += 1
    scores = _scores_from_presence(
        pos_with, neg_with, int((y == 1).sum()), int((y == -1).sum()), config.scoring_method
    )
    selected = select_top_k(scores, config.top_k)
    if len(selected) == 0:
        raise DegenerateLabels("no scoring dimension survived selection")

    reduction = None
    if config.reduction != "none":
        d = min(config.dim, len(selected))
        if config.reduction == "pca":
            M = _selected_matrix(texts, selected, alphabet)
            reduction = fit_pca(M, d)
        elif config.reduction == "rp":
            reduction = fit_random_projection(len(selected), d, seed)
        else:
            raise ValueError(f"unknown reduction: {config.reduction!r}")

    return FeaturePipeline(
        alphabet=alphabet if alphabet is not None else default_alphabet(),
        selected=selected,
        reduction=reduction,
        scoring_method=config.scoring_method,
        dim=config.dim,
    )


def transform_many(pipeline: FeaturePipeline, texts: Sequence[str]) -> np.ndarray:
    alphabet = None if pipeline.alphabet is default_alphabet() else pipeline.alphabet
    M = _selected_matrix(texts, pipeline.selected, alphabet)
    if pipeline.reduction is None:
        return M
    return (M - pipeline.reduction.center) @ pipeline.reduction.matrix


def transform(pipeline: FeaturePipeline, text: str) -> np.ndarray:
    return transform_many(pipeline, [text])[0]
