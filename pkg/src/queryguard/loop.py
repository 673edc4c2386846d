"""The adaptive detection loop: classify, select, label, update, refit.

One engine drives both the CLI oracle runs and the HTTP labeling service, so
the two paths produce byte-identical snapshots and reports. All randomness is
derived from the run seed plus a purpose tag, never carried between phases.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Callable, Optional, Sequence, Union

import numpy as np

from . import snapshot as snapshot_mod
from .corpus import Corpus
from .ensemble import (
    DEFAULT_SPECS,
    LogisticSpec,
    MlpSpec,
    RandomForestSpec,
    StackModel,
    fit_base,
    out_of_fold_scores,
    stack_fit,
    stratified_folds,
)
from .features import FeaturePipeline, PipelineConfig, fit_pipeline, transform_many
from .ingest import ATTACK_CLASSES, BENIGN, MALICIOUS, NormalizedQuery
from .selection import (
    SelectionBudget,
    SelectionResult,
    al_select,
    hybrid_select,
    random_select,
)
from .svm import KernelSpec, SvmModel, decision_values, train_svm
from .util import derive_seed, jsonable

STRATEGIES = (
    "hybrid",
    "ss_only",
    "es_only",
    "svm_al",
    "random",
    "constant_stack",
    "constant_svm",
    "adaptive_svm",
)
_CONSTANT = {"constant_stack", "constant_svm"}
_BARE_SVM = {"constant_svm", "adaptive_svm"}
_HYBRID_THETAS = {"ss_only": (1, 0), "es_only": (0, 1)}


class LengthMismatch(ValueError):
    pass


class MissingTruth(KeyError):
    pass


class LabelerUnavailable(RuntimeError):
    pass


@dataclass
class Metrics:
    tp: int
    fp: int
    tn: int
    fn: int
    precision: float
    recall: Optional[float]
    f_value: Optional[float]
    tp_rate: Optional[float]
    fp_rate: Optional[float]

    def to_dict(self) -> dict:
        return jsonable(
            {
                "tp": self.tp,
                "fp": self.fp,
                "tn": self.tn,
                "fn": self.fn,
                "precision": self.precision,
                "recall": self.recall,
                "f_value": self.f_value,
                "tp_rate": self.tp_rate,
                "fp_rate": self.fp_rate,
            }
        )


def compute_metrics(
    predictions: Sequence[str], truths: Sequence[str], beta: float = 1.0
) -> Metrics:
    """Confusion counts and rates; malicious is the positive class.

    Undefined rates (no positives / no negatives in the truth) are None.
    Precision with an empty prediction set is 0 by convention, as is F when
    both precision and recall are 0.
    """
    if len(predictions) != len(truths):
        raise LengthMismatch(f"{len(predictions)} predictions vs {len(truths)} truths")
    tp = fp = tn = fn = 0
    for pred, truth in zip(predictions, truths):
        if truth == MALICIOUS:
            if pred == MALICIOUS:
                tp += 1
            else:
                fn += 1
        else:
            if pred == MALICIOUS:
                fp += 1
            else:
                tn += 1
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else None
    fp_rate = fp / (fp + tn) if fp + tn else None
    f_value = None
    if recall is not None:
        if precision == 0.0 and recall == 0.0:
            f_value = 0.0
        else:
            b2 = beta * beta
            denom = b2 * precision + recall
            f_value = (1 + b2) * precision * recall / denom if denom else 0.0
    return Metrics(
        tp=tp, fp=fp, tn=tn, fn=fn,
        precision=precision, recall=recall, f_value=f_value,
        tp_rate=recall, fp_rate=fp_rate,
    )


def oracle_labeler(truth: dict) -> Callable[[Sequence[str]], list]:
    """Labeler answering from a text -> (label, attack_class) map."""

    def labeler(texts: Sequence[str]) -> list:
        out = []
        for text in texts:
            if text not in truth:
                raise MissingTruth(text)
            out.append(truth[text])
        return out

    return labeler


def drift_monitor(reports: Sequence[dict], drift_factor: float = 3.0) -> list:
    """(batch id, flag) per report; flags fp-rate spikes against the prior median.

    With a zero median, a nonzero fp-rate is flagged only once at least three
    prior batches exist (a young history proves nothing).
    """
    if len(reports) < 2:
        raise ValueError("drift monitoring needs at least 2 reports")
    out = []
    history: list[float] = []
    for i, rep in enumerate(reports):
        fp = rep.get("fp_rate")
        flag = False
        if i > 0 and fp is not None and history:
            med = float(np.median(history))
            if med > 0:
                flag = fp > drift_factor * med
            else:
                flag = fp > 0 and len(history) >= 3
        out.append((rep["batch"], flag))
        if fp is not None:
            history.append(float(fp))
    return out


def _spec_from_dict(d: dict):
    kind = d.get("kind")
    if kind == "random_forest":
        return RandomForestSpec(**d)
    if kind == "logistic":
        return LogisticSpec(**d)
    if kind == "mlp":
        d = dict(d)
        if "hidden" in d:
            d["hidden"] = tuple(d["hidden"])
        return MlpSpec(**d)
    raise ValueError(f"unknown base learner kind: {kind!r}")


@dataclass
class RunConfig:
    strategy: str = "hybrid"
    budget: SelectionBudget = field(default_factory=SelectionBudget)
    pipeline: PipelineConfig = field(default_factory=PipelineConfig)
    meta_c: float = 0.05
    meta_gamma: float = 2.0
    specs: tuple = DEFAULT_SPECS
    k_folds: int = 5
    seed: int = 0
    beta: float = 1.0
    drift_factor: float = 3.0
    grid_search: bool = False
    grid_c: tuple = (0.01, 0.05, 0.1, 0.5, 1.0, 5.0)
    grid_gamma: tuple = (0.5, 1.0, 2.0, 4.0)
    svm_tol: float = 1e-3
    medoid_init: str = "farthest"
    batches: Optional[tuple] = None  # explicit batch ids; None means all in corpus

    def __post_init__(self):
        if self.strategy not in STRATEGIES:
            raise ValueError(f"unknown strategy {self.strategy!r}; one of {STRATEGIES}")

    def meta_kernel(self) -> KernelSpec:
        return KernelSpec("rbf", gamma=self.meta_gamma)

    def to_dict(self) -> dict:
        return jsonable(
            {
                "strategy": self.strategy,
                "budget": {
                    "total": self.budget.total,
                    "theta": list(self.budget.theta),
                    "cluster_size": self.budget.cluster_size,
                },
                "pipeline": {
                    "scoring_method": self.pipeline.scoring_method,
                    "top_k": self.pipeline.top_k,
                    "reduction": self.pipeline.reduction,
                    "dim": self.pipeline.dim,
                },
                "meta_c": self.meta_c,
                "meta_gamma": self.meta_gamma,
                "bases": [
                    {f.name: getattr(spec, f.name) for f in fields(spec)} for spec in self.specs
                ],
                "k_folds": self.k_folds,
                "seed": self.seed,
                "beta": self.beta,
                "drift_factor": self.drift_factor,
                "grid_search": self.grid_search,
                "grid_c": list(self.grid_c),
                "grid_gamma": list(self.grid_gamma),
                "svm_tol": self.svm_tol,
                "medoid_init": self.medoid_init,
                "batches": list(self.batches) if self.batches is not None else None,
            }
        )

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        d = dict(d)
        kwargs: dict = {}
        if "budget" in d:
            b = d.pop("budget")
            kwargs["budget"] = SelectionBudget(
                total=b.get("total", 150),
                theta=tuple(b.get("theta", (7, 3))),
                cluster_size=b.get("cluster_size", 5),
            )
        if "pipeline" in d:
            kwargs["pipeline"] = PipelineConfig(**d.pop("pipeline"))
        if "bases" in d:
            kwargs["specs"] = tuple(_spec_from_dict(s) for s in d.pop("bases"))
        for key in ("grid_c", "grid_gamma", "batches"):
            if key in d and d[key] is not None:
                d[key] = tuple(d[key])
        kwargs.update(d)
        return cls(**kwargs)


@dataclass
class StackDetector:
    pipeline: FeaturePipeline
    stack: StackModel

    @property
    def kernel(self) -> KernelSpec:
        return self.stack.meta.kernel

    def decision_values(self, texts: Sequence[str]) -> np.ndarray:
        return self.stack.decision_values(transform_many(self.pipeline, texts))

    def selection_vectors(self, texts: Sequence[str]) -> np.ndarray:
        return self.stack.meta_features(transform_many(self.pipeline, texts))


@dataclass
class SvmDetector:
    pipeline: FeaturePipeline
    model: SvmModel

    @property
    def kernel(self) -> KernelSpec:
        return self.model.kernel

    def decision_values(self, texts: Sequence[str]) -> np.ndarray:
        return decision_values(self.model, transform_many(self.pipeline, texts))

    def selection_vectors(self, texts: Sequence[str]) -> np.ndarray:
        return transform_many(self.pipeline, texts)


Detector = Union[StackDetector, SvmDetector]


def predict_labels(f_values: np.ndarray) -> list:
    """f > 0 is malicious; the f = 0 tie goes to benign."""
    return [MALICIOUS if f > 0 else BENIGN for f in f_values]


def fit_detector(config: RunConfig, pool: Sequence[NormalizedQuery], fit_index: int) -> Detector:
    texts = [q.text for q in pool]
    labels = [q.label for q in pool]
    pipeline = fit_pipeline(
        texts, labels, config.pipeline, seed=derive_seed(config.seed, "pipeline", fit_index)
    )
    X = transform_many(pipeline, texts)
    y = np.array([1.0 if lab == MALICIOUS else -1.0 for lab in labels])
    if config.strategy in _BARE_SVM:
        model = train_svm(
            X, y, C=config.meta_c, kernel=config.meta_kernel(), tol=config.svm_tol,
            seed=derive_seed(config.seed, "svm", fit_index),
        )
        return SvmDetector(pipeline=pipeline, model=model)
    stack = stack_fit(
        X, y, specs=config.specs, meta_C=config.meta_c, meta_kernel=config.meta_kernel(),
        k_folds=config.k_folds, seed=derive_seed(config.seed, "stack", fit_index),
    )
    return StackDetector(pipeline=pipeline, stack=stack)


def grid_search_meta(
    texts: Sequence[str],
    labels: Sequence[str],
    config: RunConfig,
    grid_c: Optional[Sequence[float]] = None,
    grid_gamma: Optional[Sequence[float]] = None,
) -> tuple[float, float]:
    """Mean cross-validated F over the (C, gamma) grid; ties prefer smaller."""
    grid_c = sorted(grid_c if grid_c is not None else config.grid_c)
    grid_gamma = sorted(grid_gamma if grid_gamma is not None else config.grid_gamma)
    y = np.array([1.0 if lab == MALICIOUS else -1.0 for lab in labels])
    folds = stratified_folds(y, config.k_folds, derive_seed(config.seed, "grid-folds"))
    texts = list(texts)
    labels = list(labels)

    # The pipeline, out-of-fold meta features, and refit bases do not depend
    # on the grid cell, so each fold is prepared once and only the meta SVM
    # is retrained per (C, gamma).
    prepared = []
    for fold in range(config.k_folds):
        train = folds != fold
        held = folds == fold
        if not np.any(held):
            continue
        tr_texts = [t for t, m in zip(texts, train) if m]
        tr_labels = [l for l, m in zip(labels, train) if m]
        pipeline = fit_pipeline(
            tr_texts, tr_labels, config.pipeline,
            seed=derive_seed(config.seed, "grid-pipeline", fold),
        )
        X_tr = transform_many(pipeline, tr_texts)
        y_tr = y[train]
        oof_seed = derive_seed(config.seed, "grid-stack", fold)
        S_tr, _ = out_of_fold_scores(X_tr, y_tr, config.specs, config.k_folds, oof_seed)
        bases = [fit_base(spec, X_tr, y_tr) for spec in config.specs]
        X_held = transform_many(pipeline, [t for t, m in zip(texts, held) if m])
        S_held = np.column_stack([base.score(X_held) for base in bases])
        held_labels = [l for l, m in zip(labels, held) if m]
        prepared.append((S_tr, y_tr, S_held, held_labels, oof_seed))

    best: Optional[tuple[float, float, float]] = None
    for c in grid_c:
        for gamma in grid_gamma:
            scores = []
            for S_tr, y_tr, S_held, held_labels, oof_seed in prepared:
                meta = train_svm(
                    S_tr, y_tr, C=c, kernel=KernelSpec("rbf", gamma=gamma),
                    seed=derive_seed(oof_seed, "meta"),
                )
                preds = predict_labels(decision_values(meta, S_held))
                m = compute_metrics(preds, held_labels, config.beta)
                scores.append(m.f_value if m.f_value is not None else 0.0)
            mean = float(np.mean(scores)) if scores else 0.0
            if best is None or mean > best[0] + 1e-12:
                best = (mean, c, gamma)
    assert best is not None
    return best[1], best[2]


class AdaptiveRun:
    """Single-writer state machine over (pool, detector).

    Phases per batch: begin (classify + select), submit labels, advance
    (pool update + report + refit + next begin). Constant strategies select
    nothing and never refit, so every batch is immediately ready to advance.
    """

    def __init__(self, config: RunConfig, corpus: Corpus, rundir: Optional[Path] = None):
        self.config = config
        self.corpus = corpus
        self.truth = corpus.truth()
        self.batch_ids = list(config.batches) if config.batches is not None else corpus.days
        missing = [b for b in self.batch_ids if b not in corpus.batches]
        if missing:
            raise ValueError(f"corpus has no batches {missing}")
        if not self.batch_ids:
            raise ValueError("no batches to run")
        for q in corpus.initial:
            if q.label is None:
                raise ValueError("initial pool must be fully labeled")
        self.rundir = Path(rundir) if rundir is not None else None
        if self.rundir is not None:
            self.rundir.mkdir(parents=True, exist_ok=True)
        self.pool: list[NormalizedQuery] = list(corpus.initial)
        self.pool_texts = {q.text for q in self.pool}
        self.reports: list[dict] = []
        self.completed = 0
        self.detector: Optional[Detector] = None
        self.pending: list[dict] = []
        self.labels: dict[str, tuple] = {}
        self.finished = False
        self._current: Optional[dict] = None

    # -- lifecycle ---------------------------------------------------------

    def start(self) -> None:
        if self.config.grid_search:
            texts = [q.text for q in self.pool]
            labels = [q.label for q in self.pool]
            c, gamma = grid_search_meta(texts, labels, self.config)
            self.config = replace(self.config, meta_c=c, meta_gamma=gamma, grid_search=False)
        self.detector = fit_detector(self.config, self.pool, fit_index=0)
        self._write_snapshot()
        self._begin_next()

    @classmethod
    def resume(cls, config: RunConfig, corpus: Corpus, rundir: Path) -> "AdaptiveRun":
        """Rebuild the engine from the newest snapshot in rundir."""
        rundir = Path(rundir)
        snaps = sorted(rundir.glob("snapshot-*.json"))
        if not snaps:
            raise FileNotFoundError(f"no snapshots under {rundir}")
        state = snapshot_mod.load_snapshot(snaps[-1])
        if state["corpus_digest"] and corpus.digest and state["corpus_digest"] != corpus.digest:
            raise ValueError("snapshot was produced from a different corpus")
        if state["config"] != config.to_dict():
            raise ValueError("snapshot was produced with a different config")
        run = cls(config, corpus, rundir)
        run.pool = state["pool"]
        run.pool_texts = {q.text for q in run.pool}
        run.completed = state["completed"]
        run.detector = state["detector"]
        run.reports = []
        for k in range(1, run.completed + 1):
            report_path = rundir / f"report-{run.batch_ids[k - 1]:04d}.json"
            if report_path.exists():
                run.reports.append(json.loads(report_path.read_text()))
        run._rebuild_runlog()
        run._begin_next()
        return run

    # -- phase transitions ---------------------------------------------------

    def state(self) -> str:
        if self.finished:
            return "finished"
        if any(p["query_id"] not in self.labels for p in self.pending):
            return "awaiting_labels"
        return "ready_to_advance"

    def current_batch(self) -> Optional[int]:
        if self.finished or self.completed >= len(self.batch_ids):
            return None
        return self.batch_ids[self.completed]

    def _begin_next(self) -> None:
        if self.completed >= len(self.batch_ids):
            self.finished = True
            self.pending = []
            self.labels = {}
            self._current = None
            return
        batch_id = self.batch_ids[self.completed]
        queries = self.corpus.batches[batch_id]
        texts = [q.text for q in queries]
        f_values = self.detector.decision_values(texts)
        preds = predict_labels(f_values)

        covered = [i for i, q in enumerate(queries) if q.text in self.truth]
        metrics = compute_metrics(
            [preds[i] for i in covered],
            [self.truth[queries[i].text][0] for i in covered],
            self.config.beta,
        )
        # texts already in the pool carry no new information; the unknown set
        # for selection is the batch minus those
        fresh = [i for i, q in enumerate(queries) if q.text not in self.pool_texts]
        selection = self._select(batch_id, texts, f_values, fresh)
        self.pending = []
        for pos, (idx, origin) in enumerate(
            [(i, "suspicion") for i in selection.suspicion_indices]
            + [(i, "exemplar") for i in selection.exemplar_indices]
        ):
            self.pending.append(
                {
                    "query_id": f"{batch_id}-{pos}",
                    "text": texts[idx],
                    "f_value": float(f_values[idx]),
                    "origin": origin,
                }
            )
        self.labels = {}
        self._current = {
            "batch": int(batch_id),
            "metrics": metrics.to_dict(),
            "coverage": len(covered) / len(queries) if queries else 1.0,
            "margin_count": int(selection.margin_count),
            "confusing_count": int(selection.confusing_count),
            "n_suspicions": len(selection.suspicion_indices),
            "n_exemplars": len(selection.exemplar_indices),
            "selected": [dict(p) for p in self.pending],
            "fp_rate": metrics.fp_rate,
        }

    def _select(
        self, batch_id: int, texts: Sequence[str], f_values: np.ndarray, fresh: Sequence[int]
    ) -> SelectionResult:
        cfg = self.config
        fresh = np.asarray(fresh, dtype=np.int64)
        f_fresh = f_values[fresh]
        margin = int(np.sum(np.abs(f_fresh) <= 1.0))
        if cfg.strategy in _CONSTANT:
            return SelectionResult([], [], margin, 0)
        if cfg.strategy == "svm_al":
            picks = al_select(f_fresh, cfg.budget.total)
            return SelectionResult([], [int(fresh[i]) for i in picks], margin, 0)
        if cfg.strategy == "random":
            picks = random_select(len(fresh), cfg.budget.total, derive_seed(cfg.seed, "random", batch_id))
            return SelectionResult([], [int(fresh[i]) for i in picks], margin, 0)

        theta = _HYBRID_THETAS.get(cfg.strategy, cfg.budget.theta)
        budget = SelectionBudget(
            total=cfg.budget.total, theta=theta, cluster_size=cfg.budget.cluster_size
        )
        # The confusing region needs honest pool scores. The refitted stack
        # memorizes its training pool (rescoring it yields near-zero error),
        # so use the out-of-fold decisions captured at fit time; fit_detector
        # passes rows in pool order, so they align index-for-index.
        oof = getattr(getattr(self.detector, "stack", None), "oof_decision", None)
        if oof is not None and len(oof) == len(self.pool):
            f_train = np.asarray(oof, dtype=float)
        else:
            f_train = self.detector.decision_values([q.text for q in self.pool])
        y_train = np.array([1.0 if q.label == MALICIOUS else -1.0 for q in self.pool])
        mal_texts = [q.text for q in self.pool if q.label == MALICIOUS]
        result = hybrid_select(
            f_fresh,
            self.detector.selection_vectors([texts[i] for i in fresh]),
            f_train,
            y_train,
            self.detector.selection_vectors(mal_texts),
            budget,
            self.detector.kernel,
            seed=derive_seed(cfg.seed, "select", batch_id),
            medoid_init=cfg.medoid_init,
        )
        return SelectionResult(
            suspicion_indices=[int(fresh[i]) for i in result.suspicion_indices],
            exemplar_indices=[int(fresh[i]) for i in result.exemplar_indices],
            margin_count=result.margin_count,
            confusing_count=result.confusing_count,
        )

    def submit_labels(self, items: Sequence[dict]) -> int:
        """Store labels for pending queries; returns how many remain unlabeled."""
        if self.state() != "awaiting_labels":
            raise StateError("labels are not being accepted in state " + self.state())
        known = {p["query_id"] for p in self.pending}
        checked = []
        for item in items:
            qid = item.get("query_id")
            label = item.get("label")
            attack_class = item.get("attack_class")
            if qid not in known:
                raise UnknownQuery(str(qid))
            if label not in (BENIGN, MALICIOUS):
                raise ValueError(f"bad label {label!r}")
            if attack_class is not None:
                if label != MALICIOUS:
                    raise ValueError("attack_class is only valid for malicious labels")
                if attack_class not in ATTACK_CLASSES:
                    raise ValueError(f"unknown attack_class {attack_class!r}")
            checked.append((qid, label, attack_class))
        # nothing is stored until the whole request checks out
        for qid, label, attack_class in checked:
            self.labels[qid] = (label, attack_class)
        return sum(1 for p in self.pending if p["query_id"] not in self.labels)

    def advance(self) -> dict:
        """Apply labels to the pool, finalize the report, refit, begin next batch."""
        if self.finished:
            raise StateError("run already finished")
        if self.state() != "ready_to_advance":
            raise StateError("cannot advance while labels are missing")
        batch_id = self.batch_ids[self.completed]
        harvested = 0
        for p in self.pending:
            label, attack_class = self.labels[p["query_id"]]
            if p["text"] in self.pool_texts:
                continue  # budget spent, pool unchanged, labels never overwritten
            self.pool.append(
                NormalizedQuery(text=p["text"], label=label, attack_class=attack_class, day=batch_id)
            )
            self.pool_texts.add(p["text"])
            if self.truth.get(p["text"], (None, None))[0] == MALICIOUS:
                harvested += 1

        report = dict(self._current)
        # count of genuinely malicious texts newly added to the pool
        report["malicious_obtained"] = harvested
        report["pool_size"] = len(self.pool)
        self.completed += 1

        if self.config.strategy not in _CONSTANT:
            self.detector = fit_detector(self.config, self.pool, fit_index=self.completed)

        self.reports.append(report)
        self._write_report(report)
        self._write_snapshot()
        self._begin_next()
        return report

    # -- persistence ---------------------------------------------------------

    def _write_report(self, report: dict) -> None:
        if self.rundir is None:
            return
        path = self.rundir / f"report-{report['batch']:04d}.json"
        path.write_text(json.dumps(jsonable(report), sort_keys=True) + "\n")
        with (self.rundir / "run.log").open("a") as fh:
            fh.write(json.dumps(jsonable(report), sort_keys=True) + "\n")

    def _write_snapshot(self) -> None:
        if self.rundir is None:
            return
        path = self.rundir / f"snapshot-{self.completed:04d}.json"
        snapshot_mod.save_snapshot(
            path,
            config=self.config,
            detector=self.detector,
            pool=self.pool,
            completed=self.completed,
            corpus_digest=self.corpus.digest,
        )

    def _rebuild_runlog(self) -> None:
        if self.rundir is None:
            return
        with (self.rundir / "run.log").open("w") as fh:
            for report in self.reports:
                fh.write(json.dumps(jsonable(report), sort_keys=True) + "\n")


class StateError(RuntimeError):
    """An operation arrived in a phase that does not allow it."""


class UnknownQuery(KeyError):
    pass


def run_loop(
    config: RunConfig,
    corpus: Corpus,
    labeler: Callable[[Sequence[str]], list],
    rundir: Optional[Path] = None,
    resume: bool = False,
) -> list[dict]:
    """Drive the engine to completion with a programmatic labeler."""
    if resume:
        engine = AdaptiveRun.resume(config, corpus, rundir)
    else:
        engine = AdaptiveRun(config, corpus, rundir)
        engine.start()
    start_at = len(engine.reports)
    while not engine.finished:
        if engine.pending:
            answers = labeler([p["text"] for p in engine.pending])
            if len(answers) != len(engine.pending):
                raise LengthMismatch("labeler answered the wrong number of queries")
            engine.submit_labels(
                [
                    {"query_id": p["query_id"], "label": lab, "attack_class": ac}
                    for p, (lab, ac) in zip(engine.pending, answers)
                ]
            )
        engine.advance()
    return engine.reports[start_at:]
