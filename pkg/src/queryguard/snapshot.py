"""Versioned JSON snapshots: pipeline, model, pool, and loop position.

Snapshots are written with sorted keys and plain Python numbers so identical
runs produce byte-identical files; reloading reproduces the exact decision
function (floats round-trip losslessly through JSON repr).
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Union

import numpy as np

from .ensemble import (
    LogisticModel,
    LogisticSpec,
    MlpModel,
    MlpSpec,
    RandomForestModel,
    RandomForestSpec,
    StackModel,
    Tree,
)
from .features import Alphabet, FeaturePipeline, Reduction, default_alphabet
from .ingest import NormalizedQuery
from .svm import KernelSpec, SvmModel
from .util import jsonable

VERSION = 1


class SnapshotError(ValueError):
    pass


def _kernel_to_dict(spec: KernelSpec) -> dict:
    return {"kind": spec.kind, "gamma": spec.gamma, "offset": spec.offset, "degree": spec.degree}


def _kernel_from_dict(d: dict) -> KernelSpec:
    return KernelSpec(kind=d["kind"], gamma=d["gamma"], offset=d["offset"], degree=d["degree"])


def _svm_to_dict(model: SvmModel) -> dict:
    return {
        "kernel": _kernel_to_dict(model.kernel),
        "C": model.C,
        "support_vectors": model.support_vectors,
        "coeffs": model.coeffs,
        "bias": model.bias,
        "converged": model.converged,
        "kkt_violation": model.kkt_violation,
    }


def _svm_from_dict(d: dict) -> SvmModel:
    sv = np.array(d["support_vectors"], dtype=float)
    if sv.size == 0:
        sv = sv.reshape(0, 1)
    return SvmModel(
        support_vectors=sv,
        coeffs=np.array(d["coeffs"], dtype=float),
        bias=float(d["bias"]),
        kernel=_kernel_from_dict(d["kernel"]),
        C=float(d["C"]),
        converged=bool(d["converged"]),
        kkt_violation=float(d["kkt_violation"]),
    )


def pipeline_to_dict(p: FeaturePipeline) -> dict:
    red = None
    if p.reduction is not None:
        red = {
            "kind": p.reduction.kind,
            "matrix": p.reduction.matrix,
            "center": p.reduction.center,
            "eigenvalues": p.reduction.eigenvalues,
            "total_variance": p.reduction.total_variance,
            "rank_deficient": p.reduction.rank_deficient,
        }
    return {
        "alphabet": p.alphabet.symbols,
        "selected": p.selected,
        "reduction": red,
        "scoring_method": p.scoring_method,
        "dim": p.dim,
    }


def pipeline_from_dict(d: dict) -> FeaturePipeline:
    alphabet = (
        default_alphabet() if d["alphabet"] == default_alphabet().symbols else Alphabet(d["alphabet"])
    )
    red = None
    if d["reduction"] is not None:
        r = d["reduction"]
        red = Reduction(
            kind=r["kind"],
            matrix=np.array(r["matrix"], dtype=float),
            center=np.array(r["center"], dtype=float),
            eigenvalues=None if r["eigenvalues"] is None else np.array(r["eigenvalues"], dtype=float),
            total_variance=r["total_variance"],
            rank_deficient=bool(r["rank_deficient"]),
        )
    return FeaturePipeline(
        alphabet=alphabet,
        selected=np.array(d["selected"], dtype=np.int64),
        reduction=red,
        scoring_method=d["scoring_method"],
        dim=int(d["dim"]),
    )


def _tree_to_record(tree: Tree, node: int = 0) -> dict:
    if tree.feature[node] < 0:
        return {"vote": int(tree.vote[node])}
    return {
        "feature": int(tree.feature[node]),
        "threshold": float(tree.threshold[node]),
        "left": _tree_to_record(tree, int(tree.left[node])),
        "right": _tree_to_record(tree, int(tree.right[node])),
    }


def _tree_from_record(rec: dict) -> Tree:
    cols: dict[str, list] = {k: [] for k in ("feature", "threshold", "left", "right", "vote")}

    def build(r: dict) -> int:
        node = len(cols["feature"])
        for col in cols.values():
            col.append(0)
        if "vote" in r:
            cols["feature"][node] = -1
            cols["vote"][node] = int(r["vote"])
            return node
        cols["feature"][node] = int(r["feature"])
        cols["threshold"][node] = float(r["threshold"])
        cols["left"][node] = build(r["left"])
        cols["right"][node] = build(r["right"])
        return node

    build(rec)
    return Tree(
        feature=np.array(cols["feature"], dtype=np.int64),
        threshold=np.array(cols["threshold"], dtype=float),
        left=np.array(cols["left"], dtype=np.int64),
        right=np.array(cols["right"], dtype=np.int64),
        vote=np.array(cols["vote"], dtype=np.int64),
    )


def _spec_to_dict(spec) -> dict:
    if isinstance(spec, RandomForestSpec):
        return {"kind": spec.kind, "trees": spec.trees, "max_depth": spec.max_depth, "seed": spec.seed}
    if isinstance(spec, LogisticSpec):
        return {"kind": spec.kind, "l2": spec.l2, "max_iter": spec.max_iter}
    if isinstance(spec, MlpSpec):
        return {
            "kind": spec.kind,
            "hidden": list(spec.hidden),
            "learning_rate": spec.learning_rate,
            "epochs": spec.epochs,
            "seed": spec.seed,
        }
    raise SnapshotError(f"unknown spec type {type(spec).__name__}")


def _spec_from_dict(d: dict):
    d = dict(d)
    kind = d.get("kind")
    if kind == "random_forest":
        return RandomForestSpec(**d)
    if kind == "logistic":
        return LogisticSpec(**d)
    if kind == "mlp":
        d["hidden"] = tuple(d["hidden"])
        return MlpSpec(**d)
    raise SnapshotError(f"unknown base learner kind {kind!r}")


def _base_to_dict(model) -> dict:
    if isinstance(model, RandomForestModel):
        return {
            "kind": "random_forest",
            "spec": _spec_to_dict(model.spec),
            "trees": [_tree_to_record(t) for t in model.trees],
        }
    if isinstance(model, LogisticModel):
        return {"kind": "logistic", "spec": _spec_to_dict(model.spec), "w": model.w, "b": model.b}
    if isinstance(model, MlpModel):
        return {
            "kind": "mlp",
            "spec": _spec_to_dict(model.spec),
            "weights": [w for w in model.weights],
            "biases": [c for c in model.biases],
        }
    raise SnapshotError(f"unknown base model type {type(model).__name__}")


def _base_from_dict(d: dict):
    kind = d["kind"]
    if kind == "random_forest":
        return RandomForestModel(
            spec=_spec_from_dict(d["spec"]), trees=[_tree_from_record(r) for r in d["trees"]]
        )
    if kind == "logistic":
        return LogisticModel(
            spec=_spec_from_dict(d["spec"]), w=np.array(d["w"], dtype=float), b=float(d["b"])
        )
    if kind == "mlp":
        return MlpModel(
            spec=_spec_from_dict(d["spec"]),
            weights=[np.array(w, dtype=float) for w in d["weights"]],
            biases=[np.array(c, dtype=float) for c in d["biases"]],
        )
    raise SnapshotError(f"unknown base model kind {kind!r}")


def stack_to_dict(stack: StackModel) -> dict:
    return {
        "bases": [_base_to_dict(b) for b in stack.bases],
        "meta": _svm_to_dict(stack.meta),
        "specs": [_spec_to_dict(s) for s in stack.specs],
        "k_folds": stack.k_folds,
        "seed": stack.seed,
        "oof_decision": None if stack.oof_decision is None else stack.oof_decision.tolist(),
    }


def stack_from_dict(d: dict) -> StackModel:
    oof = d.get("oof_decision")
    return StackModel(
        bases=[_base_from_dict(b) for b in d["bases"]],
        meta=_svm_from_dict(d["meta"]),
        specs=tuple(_spec_from_dict(s) for s in d["specs"]),
        k_folds=int(d["k_folds"]),
        seed=int(d["seed"]),
        oof_decision=None if oof is None else np.array(oof, dtype=float),
    )


def _pool_to_list(pool) -> list:
    return [
        {"text": q.text, "label": q.label, "attack_class": q.attack_class, "day": q.day}
        for q in pool
    ]


def _pool_from_list(items) -> list:
    return [
        NormalizedQuery(
            text=r["text"], label=r["label"], attack_class=r["attack_class"], day=int(r["day"])
        )
        for r in items
    ]


def detector_to_dict(detector) -> dict:
    from .loop import StackDetector  # late import to avoid a cycle

    if isinstance(detector, StackDetector):
        return {
            "type": "stack",
            "pipeline": pipeline_to_dict(detector.pipeline),
            "stack": stack_to_dict(detector.stack),
        }
    return {
        "type": "svm",
        "pipeline": pipeline_to_dict(detector.pipeline),
        "svm": _svm_to_dict(detector.model),
    }


def detector_from_dict(d: dict):
    from .loop import StackDetector, SvmDetector  # late import to avoid a cycle

    pipeline = pipeline_from_dict(d["pipeline"])
    if d["type"] == "stack":
        return StackDetector(pipeline=pipeline, stack=stack_from_dict(d["stack"]))
    if d["type"] == "svm":
        return SvmDetector(pipeline=pipeline, model=_svm_from_dict(d["svm"]))
    raise SnapshotError(f"unknown detector type {d['type']!r}")


def save_snapshot(path: Union[str, Path], config, detector, pool, completed: int, corpus_digest: str) -> None:
    payload = {
        "version": VERSION,
        "config": config.to_dict(),
        "detector": detector_to_dict(detector),
        "pool": _pool_to_list(pool),
        "completed": int(completed),
        "corpus_digest": corpus_digest,
    }
    Path(path).write_text(json.dumps(jsonable(payload), sort_keys=True) + "\n")


def load_snapshot(path: Union[str, Path]) -> dict:
    payload = json.loads(Path(path).read_text())
    if payload.get("version") != VERSION:
        raise SnapshotError(f"unsupported snapshot version {payload.get('version')!r}")
    return {
        "config": payload["config"],
        "detector": detector_from_dict(payload["detector"]),
        "pool": _pool_from_list(payload["pool"]),
        "completed": int(payload["completed"]),
        "corpus_digest": payload["corpus_digest"],
    }
