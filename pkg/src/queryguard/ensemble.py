"""Stacked detection model: three base learner families plus a meta SVM.

Base learners emit scores in [-1, +1]. The meta SVM is trained on out-of-fold
base scores so no sample's meta-feature comes from a learner that saw it; the
bases are then refitted on the full pool for inference. Everything is
hand-rolled on numpy so models serialize exactly and refits are deterministic.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence, Union

import numpy as np

from .features import DegenerateLabels
from .svm import KernelSpec, SvmModel, decision_values, train_svm
from .util import derive_seed


class TooFewSamples(ValueError):
    pass


# Defaults are deliberately on the blunt side: deep trees and long MLP
# schedules memorize the pool and push every training point out of the
# margin, which starves the selection stage of candidates.
@dataclass(frozen=True)
class RandomForestSpec:
    kind: str = "random_forest"
    trees: int = 20
    max_depth: int = 4
    seed: int = 0


@dataclass(frozen=True)
class LogisticSpec:
    kind: str = "logistic"
    l2: float = 0.5
    max_iter: int = 50


@dataclass(frozen=True)
class MlpSpec:
    kind: str = "mlp"
    hidden: tuple = (16,)
    learning_rate: float = 0.1
    epochs: int = 60
    seed: int = 0


BaseLearnerSpec = Union[RandomForestSpec, LogisticSpec, MlpSpec]

_MIN_SPLIT = 4
_MAX_THRESHOLDS = 12


@dataclass
class Tree:
    feature: np.ndarray  # -1 marks a leaf
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    vote: np.ndarray  # -1/+1, meaningful at leaves


def _leaf_vote(y: np.ndarray) -> int:
    # ties vote benign, matching the f=0 tie rule downstream
    return 1 if 2 * int(np.sum(y > 0)) > len(y) else -1


def _grow_tree(X: np.ndarray, y: np.ndarray, rng: np.random.Generator, max_depth: int) -> Tree:
    cols: dict[str, list] = {k: [] for k in ("feature", "threshold", "left", "right", "vote")}
    d = X.shape[1]
    mtry = max(1, int(np.ceil(np.sqrt(d))))

    def new_node() -> int:
        for col in cols.values():
            col.append(0)
        return len(cols["feature"]) - 1

    def build(idx: np.ndarray, depth: int) -> int:
        node = new_node()
        ys = y[idx]
        pos = int(np.sum(ys > 0))
        if depth >= max_depth or len(idx) < _MIN_SPLIT or pos == 0 or pos == len(idx):
            cols["feature"][node] = -1
            cols["vote"][node] = _leaf_vote(ys)
            return node

        n_node = len(idx)
        p = pos / n_node
        parent_gini = 2.0 * p * (1.0 - p)
        best = (1e-12, -1, 0.0)  # (gain, feature, threshold)
        for f in rng.choice(d, size=min(mtry, d), replace=False):
            values = X[idx, f]
            uniq = np.unique(values)
            if len(uniq) < 2:
                continue
            thr = (uniq[:-1] + uniq[1:]) / 2.0
            if len(thr) > _MAX_THRESHOLDS:
                thr = thr[np.linspace(0, len(thr) - 1, _MAX_THRESHOLDS).astype(int)]
            mask = values[:, None] <= thr[None, :]
            n_l = mask.sum(axis=0)
            pos_l = (mask & (ys > 0)[:, None]).sum(axis=0)
            n_r = n_node - n_l
            pos_r = pos - pos_l
            with np.errstate(invalid="ignore", divide="ignore"):
                p_l = np.where(n_l > 0, pos_l / np.maximum(n_l, 1), 0.0)
                p_r = np.where(n_r > 0, pos_r / np.maximum(n_r, 1), 0.0)
            child = (n_l * 2.0 * p_l * (1 - p_l) + n_r * 2.0 * p_r * (1 - p_r)) / n_node
            gains = parent_gini - child
            j = int(np.argmax(gains))
            if gains[j] > best[0]:
                best = (float(gains[j]), int(f), float(thr[j]))

        if best[1] < 0:
            cols["feature"][node] = -1
            cols["vote"][node] = _leaf_vote(ys)
            return node

        _, f, t = best
        go_left = X[idx, f] <= t
        cols["feature"][node] = f
        cols["threshold"][node] = t
        cols["left"][node] = build(idx[go_left], depth + 1)
        cols["right"][node] = build(idx[~go_left], depth + 1)
        return node

    build(np.arange(len(y)), 0)
    return Tree(
        feature=np.array(cols["feature"], dtype=np.int64),
        threshold=np.array(cols["threshold"], dtype=float),
        left=np.array(cols["left"], dtype=np.int64),
        right=np.array(cols["right"], dtype=np.int64),
        vote=np.array(cols["vote"], dtype=np.int64),
    )


def _tree_votes(tree: Tree, X: np.ndarray) -> np.ndarray:
    node = np.zeros(len(X), dtype=np.int64)
    out = np.zeros(len(X), dtype=np.int64)
    active = np.arange(len(X))
    while len(active):
        nd = node[active]
        at_leaf = tree.feature[nd] < 0
        leaves = active[at_leaf]
        out[leaves] = tree.vote[node[leaves]]
        active = active[~at_leaf]
        if not len(active):
            break
        nd = node[active]
        go_left = X[active, tree.feature[nd]] <= tree.threshold[nd]
        node[active] = np.where(go_left, tree.left[nd], tree.right[nd])
    return out


@dataclass
class RandomForestModel:
    spec: RandomForestSpec
    trees: list

    def score(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        votes = np.zeros(len(X))
        for tree in self.trees:
            votes += _tree_votes(tree, X)
        # mean of +-1 votes equals 2*(fraction voting +1) - 1
        return votes / len(self.trees)


def _sigmoid(z: np.ndarray) -> np.ndarray:
    return 1.0 / (1.0 + np.exp(-np.clip(z, -35.0, 35.0)))


@dataclass
class LogisticModel:
    spec: LogisticSpec
    w: np.ndarray
    b: float

    def score(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        return 2.0 * _sigmoid(X @ self.w + self.b) - 1.0


@dataclass
class MlpModel:
    spec: MlpSpec
    weights: list  # one matrix per layer
    biases: list  # one vector per layer

    def _forward(self, X: np.ndarray) -> np.ndarray:
        a = X
        for W, c in zip(self.weights, self.biases):
            a = np.tanh(a @ W + c)
        return a

    def score(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        return self._forward(X)[:, 0]


BaseModel = Union[RandomForestModel, LogisticModel, MlpModel]


def _fit_forest(spec: RandomForestSpec, X: np.ndarray, y: np.ndarray) -> RandomForestModel:
    rng = np.random.default_rng(spec.seed)
    n = len(y)
    trees = []
    for _ in range(spec.trees):
        idx = rng.integers(0, n, size=n)
        trees.append(_grow_tree(X[idx], y[idx], rng, spec.max_depth))
    return RandomForestModel(spec=spec, trees=trees)


def _fit_logistic(spec: LogisticSpec, X: np.ndarray, y: np.ndarray) -> LogisticModel:
    n, d = X.shape
    t = (y + 1.0) / 2.0
    beta = np.zeros(d + 1)  # [w, b]
    Xb = np.hstack([X, np.ones((n, 1))])
    for _ in range(spec.max_iter):
        p = _sigmoid(Xb @ beta)
        W = np.maximum(p * (1.0 - p), 1e-9)
        grad = Xb.T @ (p - t)
        grad[:d] += spec.l2 * beta[:d]
        H = (Xb * W[:, None]).T @ Xb
        H[np.arange(d), np.arange(d)] += spec.l2
        H[np.arange(d + 1), np.arange(d + 1)] += 1e-10
        try:
            step = np.linalg.solve(H, grad)
        except np.linalg.LinAlgError:
            step = np.linalg.lstsq(H, grad, rcond=None)[0]
        beta -= step
        if np.max(np.abs(step)) < 1e-10:
            break
    return LogisticModel(spec=spec, w=beta[:d].copy(), b=float(beta[d]))


def _fit_mlp(spec: MlpSpec, X: np.ndarray, y: np.ndarray) -> MlpModel:
    rng = np.random.default_rng(spec.seed)
    sizes = [X.shape[1], *spec.hidden, 1]
    weights = [
        rng.standard_normal((sizes[i], sizes[i + 1])) / np.sqrt(sizes[i])
        for i in range(len(sizes) - 1)
    ]
    biases = [np.zeros(sizes[i + 1]) for i in range(len(sizes) - 1)]
    n = len(y)
    for _ in range(spec.epochs):
        acts = [X]
        for W, c in zip(weights, biases):
            acts.append(np.tanh(acts[-1] @ W + c))
        delta = (2.0 / n) * (acts[-1][:, 0] - y)[:, None] * (1.0 - acts[-1] ** 2)
        for layer in range(len(weights) - 1, -1, -1):
            gW = acts[layer].T @ delta
            gc = delta.sum(axis=0)
            if layer > 0:
                delta = (delta @ weights[layer].T) * (1.0 - acts[layer] ** 2)
            weights[layer] -= spec.learning_rate * gW
            biases[layer] -= spec.learning_rate * gc
    return MlpModel(spec=spec, weights=weights, biases=biases)


def fit_base(spec: BaseLearnerSpec, X: np.ndarray, y: np.ndarray) -> BaseModel:
    """Fit one base learner; scores of the result live in [-1, +1]."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if not (np.any(y > 0) and np.any(y < 0)):
        raise DegenerateLabels("base learner needs both classes")
    if isinstance(spec, RandomForestSpec):
        return _fit_forest(spec, X, y)
    if isinstance(spec, LogisticSpec):
        return _fit_logistic(spec, X, y)
    if isinstance(spec, MlpSpec):
        return _fit_mlp(spec, X, y)
    raise TypeError(f"unknown base learner spec: {spec!r}")


DEFAULT_SPECS: tuple = (RandomForestSpec(), LogisticSpec(), MlpSpec())


def stratified_folds(y: np.ndarray, k: int, seed: int) -> np.ndarray:
    """Fold id per sample: within-class seeded shuffle dealt round-robin."""
    y = np.asarray(y)
    rng = np.random.default_rng(seed)
    folds = np.zeros(len(y), dtype=np.int64)
    for cls in (1, -1):
        members = np.flatnonzero(y == cls)
        members = members[rng.permutation(len(members))]
        folds[members] = np.arange(len(members)) % k
    return folds


def out_of_fold_scores(
    X: np.ndarray, y: np.ndarray, specs: Sequence[BaseLearnerSpec], k: int, seed: int
) -> tuple[np.ndarray, np.ndarray]:
    """(n, len(specs)) matrix of base scores where each row is held out."""
    folds = stratified_folds(y, k, seed)
    S = np.zeros((len(y), len(specs)))
    for fold in range(k):
        train = folds != fold
        held = folds == fold
        if not np.any(held):
            continue
        for j, spec in enumerate(specs):
            model = fit_base(spec, X[train], y[train])
            S[held, j] = model.score(X[held])
    return S, folds


@dataclass
class StackModel:
    bases: list
    meta: SvmModel
    specs: tuple
    k_folds: int
    seed: int
    # Honest decision values for the training rows (OOF base scores through
    # the meta SVM), in the same row order stack_fit received. The refitted
    # bases memorize the pool, so these are the only f-values under which a
    # training point can legitimately look misclassified.
    oof_decision: Optional[np.ndarray] = None

    def meta_features(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        return np.column_stack([base.score(X) for base in self.bases])

    def decision_values(self, X: np.ndarray) -> np.ndarray:
        return decision_values(self.meta, self.meta_features(X))


def stack_fit(
    X: np.ndarray,
    y: np.ndarray,
    specs: Sequence[BaseLearnerSpec] = DEFAULT_SPECS,
    meta_C: float = 0.05,
    meta_kernel: KernelSpec = KernelSpec("rbf", gamma=2.0),
    k_folds: int = 5,
    seed: int = 0,
    ids: Optional[Sequence[int]] = None,
) -> StackModel:
    """Meta SVM on out-of-fold base scores; bases refitted on the full pool.

    Rows are canonicalized by sample id before anything random happens, so a
    permuted pool with the same ids yields an identical model.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if ids is None:
        ids = np.arange(len(y))
    order = np.argsort(np.asarray(ids), kind="stable")
    Xc, yc = X[order], y[order]

    if len(yc) < k_folds:
        raise TooFewSamples(f"{len(yc)} samples for {k_folds} folds")
    minority = min(int(np.sum(yc > 0)), int(np.sum(yc < 0)))
    if minority < k_folds:
        raise TooFewSamples(f"minority class has {minority} samples, needs >= {k_folds}")

    S, _ = out_of_fold_scores(Xc, yc, specs, k_folds, seed)
    meta = train_svm(S, yc, C=meta_C, kernel=meta_kernel, seed=derive_seed(seed, "meta"))
    bases = [fit_base(spec, Xc, yc) for spec in specs]
    # map OOF decisions back to the caller's row order
    oof = np.empty(len(yc))
    oof[order] = decision_values(meta, S)
    return StackModel(
        bases=bases, meta=meta, specs=tuple(specs), k_folds=k_folds, seed=seed, oof_decision=oof
    )
