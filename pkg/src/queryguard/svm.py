"""Soft-margin kernel SVM: pairwise dual solver, decision values, kernel geometry.

The trainer is a sequential two-variable ascent on the dual (Platt-style
working set heuristics). It was written here rather than wrapped from a
library because the solution must round-trip through JSON snapshots, satisfy
testable KKT bounds, and stay bit-deterministic under a fixed seed.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .features import DegenerateLabels


class DimensionMismatch(ValueError):
    pass


@dataclass(frozen=True)
class KernelSpec:
    kind: str = "rbf"  # "rbf", "poly" or "linear"
    gamma: Optional[float] = 2.0
    offset: float = 0.0
    degree: int = 1

    def __post_init__(self):
        if self.kind == "rbf":
            if self.gamma is None or self.gamma <= 0:
                raise ValueError("rbf kernel needs gamma > 0")
        elif self.kind == "poly":
            if self.degree < 1:
                raise ValueError("poly kernel needs degree >= 1")
        elif self.kind != "linear":
            raise ValueError(f"unknown kernel kind: {self.kind!r}")


def kernel_matrix(spec: KernelSpec, X: np.ndarray, Y: np.ndarray) -> np.ndarray:
    X = np.atleast_2d(np.asarray(X, dtype=float))
    Y = np.atleast_2d(np.asarray(Y, dtype=float))
    if X.shape[1] != Y.shape[1]:
        raise DimensionMismatch(f"{X.shape[1]} vs {Y.shape[1]}")
    if spec.kind == "linear":
        return X @ Y.T
    if spec.kind == "poly":
        return (X @ Y.T + spec.offset) ** spec.degree
    sq = (
        np.sum(X * X, axis=1)[:, None]
        + np.sum(Y * Y, axis=1)[None, :]
        - 2.0 * (X @ Y.T)
    )
    return np.exp(-spec.gamma * np.maximum(sq, 0.0))


def kernel_eval(spec: KernelSpec, x: np.ndarray, y: np.ndarray) -> float:
    return float(kernel_matrix(spec, np.asarray(x)[None, :], np.asarray(y)[None, :])[0, 0])


def kernel_self(spec: KernelSpec, X: np.ndarray) -> np.ndarray:
    """K(x,x) for each row, without the full Gram matrix."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if spec.kind == "rbf":
        return np.ones(X.shape[0])
    dots = np.sum(X * X, axis=1)
    if spec.kind == "linear":
        return dots
    return (dots + spec.offset) ** spec.degree


def kernel_distance_matrix(spec: KernelSpec, X: np.ndarray, Y: np.ndarray) -> np.ndarray:
    """Pairwise Euclidean distance in the kernel-induced feature space."""
    kxx = kernel_self(spec, X)[:, None]
    kyy = kernel_self(spec, Y)[None, :]
    sq = kxx + kyy - 2.0 * kernel_matrix(spec, X, Y)
    return np.sqrt(np.maximum(sq, 0.0))


def kernel_distance(spec: KernelSpec, x: np.ndarray, y: np.ndarray) -> float:
    return float(kernel_distance_matrix(spec, np.asarray(x)[None, :], np.asarray(y)[None, :])[0, 0])


@dataclass
class SvmModel:
    support_vectors: np.ndarray  # (n_sv, d)
    coeffs: np.ndarray  # alpha_i * y_i per support vector
    bias: float
    kernel: KernelSpec
    C: float
    converged: bool = True
    kkt_violation: float = 0.0
    # full-length duals, kept for diagnostics and oracle tests; not serialized
    alphas: Optional[np.ndarray] = field(default=None, repr=False)


def decision_values(model: SvmModel, X: np.ndarray) -> np.ndarray:
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if len(model.support_vectors) == 0:
        return np.full(X.shape[0], model.bias)
    return model.coeffs @ kernel_matrix(model.kernel, model.support_vectors, X) + model.bias


def decision_value(model: SvmModel, x: np.ndarray) -> float:
    return float(decision_values(model, np.asarray(x)[None, :])[0])


def margin_members(model: SvmModel, X: np.ndarray) -> np.ndarray:
    """Boolean mask of rows with |f| <= 1."""
    return np.abs(decision_values(model, X)) <= 1.0


def train_svm(
    X: np.ndarray,
    y: np.ndarray,
    C: float,
    kernel: KernelSpec,
    tol: float = 1e-3,
    seed: int = 0,
    max_passes: Optional[int] = None,
) -> SvmModel:
    """Solve the box-constrained dual by sequential pairwise optimization.

    Stops when a full sweep finds no KKT violator; hitting the sweep cap
    returns the best iterate with converged=False instead of raising.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    n = len(y)
    if n == 0 or X.shape[0] != n:
        raise ValueError("empty or mismatched training set")
    if not (np.any(y > 0) and np.any(y < 0)):
        raise DegenerateLabels("training set must contain both classes")
    if C <= 0 or tol <= 0:
        raise ValueError("C and tol must be positive")
    if max_passes is None:
        max_passes = 10 * n

    K = kernel_matrix(kernel, X, X)
    alphas = np.zeros(n)
    b = 0.0
    errors = -y.copy()  # E_i = f(x_i) - y_i with the zero model
    rng = np.random.default_rng(seed)
    snap = 1e-8 * C

    def take_step(i1: int, i2: int) -> bool:
        nonlocal b, errors
        if i1 == i2:
            return False
        a1, a2 = alphas[i1], alphas[i2]
        y1, y2 = y[i1], y[i2]
        E1, E2 = errors[i1], errors[i2]
        s = y1 * y2
        if y1 != y2:
            L, H = max(0.0, a2 - a1), min(C, C + a2 - a1)
        else:
            L, H = max(0.0, a1 + a2 - C), min(C, a1 + a2)
        if H - L < snap:
            return False
        k11, k12, k22 = K[i1, i1], K[i1, i2], K[i2, i2]
        eta = k11 + k22 - 2.0 * k12
        if eta > 0:
            a2_new = a2 + y2 * (E1 - E2) / eta
            a2_new = min(max(a2_new, L), H)
        else:
            # flat direction: test the interval endpoints on the objective
            f1 = y1 * (E1 + b) - a1 * k11 - s * a2 * k12
            f2 = y2 * (E2 + b) - s * a1 * k12 - a2 * k22
            L1 = a1 + s * (a2 - L)
            H1 = a1 + s * (a2 - H)
            obj_L = L1 * f1 + L * f2 + 0.5 * L1 * L1 * k11 + 0.5 * L * L * k22 + s * L * L1 * k12
            obj_H = H1 * f1 + H * f2 + 0.5 * H1 * H1 * k11 + 0.5 * H * H * k22 + s * H * H1 * k12
            if obj_L < obj_H - 1e-12:
                a2_new = L
            elif obj_L > obj_H + 1e-12:
                a2_new = H
            else:
                return False
        if abs(a2_new - a2) < snap * (a2_new + a2 + snap):
            return False
        a1_new = a1 + s * (a2 - a2_new)
        if a1_new < snap:
            a1_new = 0.0
        elif a1_new > C - snap:
            a1_new = C
        d1, d2 = a1_new - a1, a2_new - a2
        b1 = b - E1 - y1 * d1 * k11 - y2 * d2 * k12
        b2 = b - E2 - y1 * d1 * k12 - y2 * d2 * k22
        if snap < a1_new < C - snap:
            b_new = b1
        elif snap < a2_new < C - snap:
            b_new = b2
        else:
            b_new = (b1 + b2) / 2.0
        alphas[i1], alphas[i2] = a1_new, a2_new
        errors += y1 * d1 * K[i1] + y2 * d2 * K[i2] + (b_new - b)
        b = b_new
        return True

    def examine(i2: int) -> bool:
        y2, a2, E2 = y[i2], alphas[i2], errors[i2]
        r2 = E2 * y2
        if not ((r2 < -tol and a2 < C) or (r2 > tol and a2 > 0)):
            return False
        non_bound = np.flatnonzero((alphas > snap) & (alphas < C - snap))
        if len(non_bound) > 1:
            i1 = int(non_bound[np.argmax(np.abs(errors[non_bound] - E2))])
            if take_step(i1, i2):
                return True
        if len(non_bound):
            start = int(rng.integers(len(non_bound)))
            for i1 in np.roll(non_bound, -start):
                if take_step(int(i1), i2):
                    return True
        start = int(rng.integers(n))
        for i1 in range(n):
            if take_step((i1 + start) % n, i2):
                return True
        return False

    passes = 0
    examine_all = True
    num_changed = 1
    while passes < max_passes and (num_changed > 0 or examine_all):
        num_changed = 0
        if examine_all:
            candidates = range(n)
        else:
            candidates = np.flatnonzero((alphas > snap) & (alphas < C - snap))
        for i2 in candidates:
            if examine(int(i2)):
                num_changed += 1
        passes += 1
        if examine_all:
            examine_all = False
        elif num_changed == 0:
            examine_all = True
    converged = num_changed == 0 and not examine_all

    # Final bias: average over free support vectors, else the midpoint of the
    # feasible interval given the bound constraints.
    scores = (alphas * y) @ K
    free = (alphas > snap) & (alphas < C - snap)
    if np.any(free):
        bias = float(np.mean(y[free] - scores[free]))
    else:
        lower = np.concatenate(
            [(1.0 - scores)[(y > 0) & (alphas <= snap)], (-1.0 - scores)[(y < 0) & (alphas >= C - snap)]]
        )
        upper = np.concatenate(
            [(-1.0 - scores)[(y < 0) & (alphas <= snap)], (1.0 - scores)[(y > 0) & (alphas >= C - snap)]]
        )
        if len(lower) and len(upper):
            bias = float((np.max(lower) + np.min(upper)) / 2.0)
        elif len(lower):
            bias = float(np.max(lower))
        else:
            bias = float(np.min(upper))

    yf = y * (scores + bias)
    viol = np.zeros(n)
    at_zero = alphas <= snap
    at_c = alphas >= C - snap
    viol[at_zero] = np.maximum(0.0, 1.0 - yf[at_zero])
    viol[at_c] = np.maximum(0.0, yf[at_c] - 1.0)
    viol[~at_zero & ~at_c] = np.abs(yf[~at_zero & ~at_c] - 1.0)

    sv_mask = alphas > 1e-12
    return SvmModel(
        support_vectors=X[sv_mask].copy(),
        coeffs=(alphas * y)[sv_mask].copy(),
        bias=bias,
        kernel=kernel,
        C=C,
        converged=converged,
        kkt_violation=float(np.max(viol)) if n else 0.0,
        alphas=alphas,
    )
