"""Per-batch anatomy of a hybrid run on the fixture corpus.

Prints the f-value placement of each corpus family, the confusing region,
candidate/medoid composition, and where the harvest comes from.
"""

import sys
from pathlib import Path

import numpy as np

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

from queryguard.corpus import CorpusConfig, benign_templates, gen_corpus
from queryguard.ingest import MALICIOUS
from queryguard.loop import AdaptiveRun, RunConfig, oracle_labeler
from queryguard.selection import SelectionBudget, confusing_region
from queryguard.util import derive_seed

SEED = int(sys.argv[1]) if len(sys.argv) > 1 else 101
BUDGET = int(sys.argv[2]) if len(sys.argv) > 2 else 15

HUB_NAMES = ("q=", "search=", "keyword=")
ECHO_MARKS = ("union+select+", "javascript:alert", "etc/passwd", "http://")
PAYLOAD_CHARS = set("0123456789(/=")


def family(text: str, label: str) -> str:
    if label == MALICIOUS:
        # stealth payloads ride hub-named search pairs and always carry a
        # digit, paren, slash, or '='; benign dilution searches never do
        for p in text.split("&"):
            if p.startswith(HUB_NAMES) and PAYLOAD_CHARS & set(p.split("=", 1)[1]):
                return "edge"
        return "deep"
    pairs = text.split("&")
    hub_pair = next((p for p in pairs if p.startswith(HUB_NAMES)), None)
    if hub_pair is None:
        return "plain"
    if any(m in hub_pair for m in ECHO_MARKS):
        return "echo"
    value = hub_pair.split("=", 1)[1]
    # carpet cores carry parens, a second '=', or path separators; plain
    # searches are bare word phrases
    if "(" in hub_pair.split("=", 1)[1] or "=" in value or "/" in value:
        return "carpet"
    return "plain"


def tag_tail(text: str, fam: str, words: frozenset) -> str:
    # tail one-offs are hexish or salad values drawn from no word list
    if fam != "plain":
        return fam
    first = text.split("&", 1)[0]
    value = first.split("=", 1)[1] if "=" in first else first
    parts = [p for chunk in value.split("+") for p in chunk.split("-")]
    if all(p in words or p.isdigit() or not p.isalnum() or len(p) <= 5 for p in parts):
        return fam
    return "tail"


def stats(f, idx):
    if not len(idx):
        return "n/a"
    vals = f[idx]
    return f"{np.mean(vals):+.2f}o{np.std(vals):.2f}[{np.min(vals):+.2f},{np.max(vals):+.2f}]"


def main() -> None:
    fixture = CorpusConfig(batch_size=1000, malicious_per_batch=20, seed=SEED,
                 initial_benign=400, initial_malicious=100)
    corpus = gen_corpus(fixture)
    config = RunConfig(
        seed=SEED, strategy="hybrid", grid_search=False, meta_c=0.5, meta_gamma=1.0,
        budget=SelectionBudget(total=BUDGET, cluster_size=2),
    )
    engine = AdaptiveRun(config, corpus)
    engine.start()
    truth = corpus.truth()
    labeler = oracle_labeler(truth)
    print(f"meta_c={engine.config.meta_c} meta_gamma={engine.config.meta_gamma}")

    totals = {"suspicion": 0, "exemplar": 0}
    while not engine.finished:
        batch_id = engine.current_batch()
        queries = corpus.batches[batch_id]
        texts = [q.text for q in queries]
        det = engine.detector
        f = det.decision_values(texts)
        words = frozenset(benign_templates()["words"])
        fams = [tag_tail(t, family(t, truth[t][0]), words) for t in texts]
        by_fam = {fam: np.flatnonzero([x == fam for x in fams]) for fam in
                  ("plain", "carpet", "echo", "deep", "edge", "tail")}
        is_mal = np.array([truth[t][0] == MALICIOUS for t in texts])

        fresh = np.array([i for i, q in enumerate(queries) if q.text not in engine.pool_texts])
        f_train = det.stack.oof_decision  # what the engine's region actually sees
        y_train = np.array([1.0 if q.label == MALICIOUS else -1.0 for q in engine.pool])
        region = confusing_region(f_train, y_train)
        n_fp_anchor = int(np.sum((y_train < 0) & (f_train > 0) & (f_train <= 1)))
        n_fn_anchor = int(np.sum((y_train > 0) & (f_train < 0) & (f_train >= -1)))

        print(
            f"b{batch_id}: carpet={stats(f, by_fam['carpet'])} echo={stats(f, by_fam['echo'])}"
            f" deep={stats(f, by_fam['deep'])} edge={stats(f, by_fam['edge'])}"
            f" tail={stats(f, by_fam['tail'])} plain_max={np.max(f[by_fam['plain']]):+.2f}"
        )
        rng = np.random.default_rng(derive_seed(SEED, "select", batch_id))
        perm = rng.permutation(len(fresh))
        n_ss = len(fresh) * 7 // 10
        u_ss, u_es = fresh[perm[:n_ss]], fresh[perm[n_ss:]]
        cap = -(-7 * BUDGET // 10)
        line = f"    anchors fp={n_fp_anchor} fn={n_fn_anchor}"
        if region is None:
            line += " region=None"
        else:
            in_r = u_ss[(f[u_ss] >= region.f_lower) & (f[u_ss] <= region.f_upper)]
            in_r = in_r[np.abs(f[in_r]) <= 1.0]
            comp = {fam: int(sum(1 for i in in_r if fams[i] == fam)) for fam in by_fam}
            line += (
                f" region=[{region.f_lower:+.2f},{region.f_upper:+.2f}] cand={len(in_r)}"
                f" (c{comp['carpet']}/e{comp['echo']}/d{comp['deep']}/g{comp['edge']})"
                f" K={min(len(in_r) // 5, cap)}"
            )
        es_pos = u_es[f[u_es] > 0]
        line += f" es_cand={len(es_pos)}({int(is_mal[es_pos].sum())}m)"
        sus_m = sum(1 for p in engine.pending if p["origin"] == "suspicion" and truth[p["text"]][0] == MALICIOUS)
        ex_m = sum(1 for p in engine.pending if p["origin"] == "exemplar" and truth[p["text"]][0] == MALICIOUS)
        n_sus = sum(1 for p in engine.pending if p["origin"] == "suspicion")
        line += f" | sus={n_sus}({sus_m}m) ex={len(engine.pending) - n_sus}({ex_m}m)"
        totals["suspicion"] += sus_m
        totals["exemplar"] += ex_m
        print(line, flush=True)

        if engine.pending:
            results = labeler([p["text"] for p in engine.pending])
            engine.submit_labels(
                [
                    {"query_id": p["query_id"], "label": lab, "attack_class": cls}
                    for p, (lab, cls) in zip(list(engine.pending), results)
                ]
            )
        report = engine.advance()
        print(
            f"    harvest={report['malicious_obtained']} pool={report['pool_size']}"
            f" F={report['metrics']['f_value'] and round(report['metrics']['f_value'], 3)}",
            flush=True,
        )

    print(f"harvest by origin: {totals}  total={sum(totals.values())}")


if __name__ == "__main__":
    main()
