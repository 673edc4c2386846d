"""Where do svm_al's picks and harvest come from, batch by batch."""

import sys
from pathlib import Path

import numpy as np

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

from queryguard.corpus import CorpusConfig, benign_templates, gen_corpus
from queryguard.ingest import MALICIOUS
from queryguard.loop import AdaptiveRun, RunConfig, oracle_labeler
from queryguard.selection import SelectionBudget

sys.path.insert(0, str(Path(__file__).resolve().parent))
from diag_selection import family, tag_tail  # noqa: E402

SEED = int(sys.argv[1]) if len(sys.argv) > 1 else 101
BUDGET = int(sys.argv[2]) if len(sys.argv) > 2 else 15


def main() -> None:
    corpus = gen_corpus(CorpusConfig(batch_size=1000, malicious_per_batch=20, seed=SEED,
                 initial_benign=400, initial_malicious=100))
    truth = corpus.truth()
    labeler = oracle_labeler(truth)
    config = RunConfig(
        seed=SEED, strategy="svm_al", grid_search=False, meta_c=0.5, meta_gamma=1.0,
        budget=SelectionBudget(total=BUDGET),
    )
    engine = AdaptiveRun(config, corpus)
    engine.start()
    while not engine.finished:
        batch_id = engine.current_batch()
        queries = corpus.batches[batch_id]
        texts = [q.text for q in queries]
        f = engine.detector.decision_values(texts)
        words = frozenset(benign_templates()["words"])
        fams = np.array([tag_tail(t, family(t, truth[t][0]), words) for t in texts])
        is_mal = np.array([truth[t][0] == MALICIOUS for t in texts])
        in_m = np.abs(f) <= 1.0
        n_margin = int(in_m.sum())
        mal_in = int((in_m & is_mal).sum())
        picks = [p["text"] for p in engine.pending]
        pick_fams = [tag_tail(t, family(t, truth[t][0]), words) for t in picks]
        comp = {fam: pick_fams.count(fam) for fam in ("plain", "carpet", "echo", "deep", "edge", "tail")}
        got = sum(1 for t in picks if truth[t][0] == MALICIOUS)
        tail_f = f[fams == "tail"]
        deep_f = f[fams == "deep"]
        edge_f = f[fams == "edge"]
        print(
            f"b{batch_id}: margin={n_margin}({mal_in}m)"
            f" picks c{comp['carpet']}/e{comp['echo']}/d{comp['deep']}/g{comp['edge']}/p{comp['plain']}/t{comp['tail']}"
            f" got={got}  deep_f={np.mean(deep_f):+.2f}o{np.std(deep_f):.2f}"
            f" edge_f={np.mean(edge_f):+.2f}o{np.std(edge_f):.2f}"
            f" tail_f={np.mean(tail_f):+.2f}o{np.std(tail_f):.2f}[{np.min(tail_f):+.2f},{np.max(tail_f):+.2f}]"
        )
        results = labeler(picks)
        engine.submit_labels(
            [
                {"query_id": p["query_id"], "label": lab, "attack_class": cls}
                for p, (lab, cls) in zip(list(engine.pending), results)
            ]
        )
        engine.advance()


if __name__ == "__main__":
    main()
