"""Batch selection strategies: hybrid suspicion/exemplar picking plus baselines.

Suspicions are K-medoids centers among unknown queries whose decision values
fall inside the confusing region (the f-band spanned by misclassified
in-margin training queries). Exemplars are farthest-first picks on the
malicious side, maximizing summed kernel distance to the malicious pool.
Both run in the same kernel feature space that produces f(x).
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from math import comb
from typing import Optional

import numpy as np

from .svm import KernelSpec, kernel_distance_matrix


@dataclass(frozen=True)
class SelectionBudget:
    total: int = 150  # important queries per batch
    theta: tuple = (7, 3)  # (suspicion share, exemplar share) of the batch split
    cluster_size: int = 5  # average cluster size R for the suspicion K

    def __post_init__(self):
        if self.total < 1 or self.cluster_size < 1:
            raise ValueError("budget needs total >= 1 and cluster_size >= 1")
        ss, es = self.theta
        if ss < 0 or es < 0 or ss + es <= 0:
            raise ValueError("theta shares must be non-negative and not both zero")


@dataclass(frozen=True)
class ConfusingRegion:
    f_lower: float
    f_upper: float


@dataclass
class SelectionResult:
    suspicion_indices: list
    exemplar_indices: list
    margin_count: int
    confusing_count: int

    def all_indices(self) -> list:
        return list(self.suspicion_indices) + list(self.exemplar_indices)


def confusing_region(f_train: np.ndarray, y_train: np.ndarray) -> Optional[ConfusingRegion]:
    """f-band of misclassified training points inside the margin, or None."""
    f_train = np.asarray(f_train, dtype=float)
    y_train = np.asarray(y_train, dtype=float)
    mask = (y_train * f_train < 0) & (np.abs(f_train) <= 1.0)
    if not np.any(mask):
        return None
    return ConfusingRegion(f_lower=float(np.min(f_train[mask])), f_upper=float(np.max(f_train[mask])))


def k_medoids(
    D: np.ndarray,
    k: int,
    seed: int,
    init: str = "farthest",
    max_sweeps: int = 100,
    max_exhaustive: int = 300,
) -> tuple[np.ndarray, list[float]]:
    """PAM-style clustering on a distance matrix.

    Sweeps each medoid position, applying the best strictly-improving swap;
    stops when a full sweep changes nothing. Returns (medoid indices, the
    objective E after init and after each sweep). E is non-increasing.

    Instances with at most max_exhaustive medoid combinations are solved by
    enumeration instead: it is cheaper than sweeping at that size and immune
    to the local optima a swap search can fall into.
    """
    D = np.asarray(D, dtype=float)
    n = D.shape[0]
    k = min(k, n)
    rng = np.random.default_rng(seed)

    if init == "random":
        medoids = np.sort(rng.choice(n, size=k, replace=False))
    elif init == "farthest":
        first = int(rng.integers(n))
        chosen = [first]
        min_dist = D[:, first].copy()
        while len(chosen) < k:
            nxt = int(np.argmax(min_dist))  # ties: lowest index
            chosen.append(nxt)
            min_dist = np.minimum(min_dist, D[:, nxt])
        medoids = np.array(sorted(chosen))
    else:
        raise ValueError(f"unknown init: {init!r}")

    def objective(meds: np.ndarray) -> float:
        return float(D[:, meds].min(axis=1).sum())

    history = [objective(medoids)]
    if comb(n, k) <= max_exhaustive:
        best: Optional[np.ndarray] = None
        best_e = np.inf
        # strict improvement over lexicographic enumeration: ties keep the
        # lexicographically smallest optimal set, matching the lowest-index rule
        for combo in itertools.combinations(range(n), k):
            cand = np.array(combo, dtype=np.int64)
            e = objective(cand)
            if e < best_e - 1e-12:
                best, best_e = cand, e
        history.append(best_e)
        return np.sort(best), history
    for _ in range(max_sweeps):
        changed = False
        for pos in range(k):
            dist_to_med = D[:, medoids]
            if k == 1:
                base = np.full(n, np.inf)
            else:
                nearest = np.argmin(dist_to_med, axis=1)
                part = np.partition(dist_to_med, 1, axis=1)
                base = np.where(nearest == pos, part[:, 1], part[:, 0])
            current = float(np.minimum(base, D[:, medoids[pos]]).sum())
            cand = np.minimum(base[:, None], D).sum(axis=0)
            cand[medoids] = np.inf
            j = int(np.argmin(cand))
            if cand[j] < current - 1e-12:
                medoids[pos] = j
                changed = True
        history.append(objective(medoids))
        if not changed:
            break
    return np.sort(medoids), history


def kernel_farthest_first(
    candidates: np.ndarray,
    malicious: np.ndarray,
    count: int,
    kernel: KernelSpec,
) -> list[int]:
    """Greedy picks maximizing summed kernel distance to the malicious set.

    Each pick is treated as presumed-malicious for later picks only. Ties go
    to the lowest candidate index.
    """
    candidates = np.atleast_2d(np.asarray(candidates, dtype=float))
    n = len(candidates)
    if count <= 0 or n == 0:
        return []
    if len(malicious):
        sums = kernel_distance_matrix(kernel, candidates, malicious).sum(axis=1)
    else:
        sums = np.zeros(n)
    available = np.ones(n, dtype=bool)
    picks: list[int] = []
    for _ in range(min(count, n)):
        masked = np.where(available, sums, -np.inf)
        j = int(np.argmax(masked))
        picks.append(j)
        available[j] = False
        sums = sums + kernel_distance_matrix(kernel, candidates, candidates[j : j + 1])[:, 0]
    return picks


def suspicion_selection(
    f_candidates: np.ndarray,
    vectors: np.ndarray,
    cluster_size: int,
    kernel: KernelSpec,
    seed: int,
    cap: Optional[int] = None,
    init: str = "farthest",
) -> list[int]:
    """Indices (into the candidate list) of the chosen suspicions.

    K = floor(n/R); K = 0 returns the candidates verbatim. The cap, when
    given, bounds K so suspicions cannot starve the exemplar side.
    """
    n = len(f_candidates)
    if n == 0:
        return []
    k = n // cluster_size
    if cap is not None:
        k = min(k, cap)
    if k == 0:
        out = list(range(n))
        return out if cap is None else out[:cap]
    D = kernel_distance_matrix(kernel, vectors, vectors)
    medoids, _ = k_medoids(D, k, seed=seed, init=init)
    return [int(m) for m in medoids]


def hybrid_select(
    f_unknown: np.ndarray,
    vectors_unknown: np.ndarray,
    f_train: np.ndarray,
    y_train: np.ndarray,
    malicious_vectors: np.ndarray,
    budget: SelectionBudget,
    kernel: KernelSpec,
    seed: int,
    medoid_init: str = "farthest",
) -> SelectionResult:
    """Split the batch by theta, pick suspicions then backfill with exemplars."""
    f_unknown = np.asarray(f_unknown, dtype=float)
    n = len(f_unknown)
    ss, es = budget.theta
    share = ss + es
    rng = np.random.default_rng(seed)
    perm = rng.permutation(n)
    n_ss = n * ss // share
    u_ss, u_es = perm[:n_ss], perm[n_ss:]

    # margin accounting is over the suspicion subset, matching the batch reports
    margin_count = int(np.sum(np.abs(f_unknown[u_ss]) <= 1.0))
    region = confusing_region(f_train, y_train)

    suspicions: list[int] = []
    confusing_count = 0
    if region is not None and len(u_ss):
        in_region = u_ss[
            (f_unknown[u_ss] >= region.f_lower) & (f_unknown[u_ss] <= region.f_upper)
        ]
        confusing_count = len(in_region)
        if confusing_count:
            cap = -(-ss * budget.total // share)  # ceil of the theta share of M
            local = suspicion_selection(
                f_unknown[in_region],
                vectors_unknown[in_region],
                budget.cluster_size,
                kernel,
                seed=seed,
                cap=min(cap, budget.total),
                init=medoid_init,
            )
            suspicions = sorted(int(in_region[i]) for i in local)

    exemplar_budget = budget.total - len(suspicions)
    exemplars: list[int] = []
    if exemplar_budget > 0 and len(u_es):
        es_cand = u_es[f_unknown[u_es] > 0]
        picks = kernel_farthest_first(
            vectors_unknown[es_cand], malicious_vectors, exemplar_budget, kernel
        )
        exemplars = [int(es_cand[p]) for p in picks]

    return SelectionResult(
        suspicion_indices=suspicions,
        exemplar_indices=exemplars,
        margin_count=margin_count,
        confusing_count=confusing_count,
    )


def al_select(f_unknown: np.ndarray, total: int) -> list[int]:
    """Up to `total` in-margin indices ordered by ascending |f|."""
    f_unknown = np.asarray(f_unknown, dtype=float)
    inside = np.flatnonzero(np.abs(f_unknown) <= 1.0)
    order = np.argsort(np.abs(f_unknown[inside]), kind="stable")
    return [int(i) for i in inside[order][:total]]


def random_select(n: int, total: int, seed: int) -> list[int]:
    """Uniform sample without replacement of min(total, n) indices."""
    rng = np.random.default_rng(seed)
    return [int(i) for i in rng.permutation(n)[: min(total, n)]]
