"""Command line behavior: exit codes and end-to-end command flows."""

import json
from dataclasses import asdict

import pytest

from queryguard import cli
from queryguard.corpus import CorpusConfig, load_corpus
from queryguard.loop import LabelerUnavailable, PipelineConfig, RunConfig
from queryguard.selection import SelectionBudget
from queryguard.snapshot import load_snapshot

CORPUS_CFG = CorpusConfig(
    batches=2,
    batch_size=60,
    malicious_per_batch=8,
    initial_benign=36,
    initial_malicious=12,
    seed=9,
)

RUN_CFG = RunConfig(
    strategy="hybrid",
    budget=SelectionBudget(total=6, theta=(7, 3), cluster_size=2),
    pipeline=PipelineConfig(top_k=250, dim=20),
    meta_c=0.5,
    meta_gamma=1.0,
    grid_search=False,
    k_folds=3,
    seed=7,
)


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    """Corpus + config files shared by the flow tests (read-only)."""
    root = tmp_path_factory.mktemp("cliflow")
    corpus_cfg = root / "corpus.json"
    corpus_cfg.write_text(json.dumps({"corpus": asdict(CORPUS_CFG)}))
    run_cfg = root / "run.json"
    run_cfg.write_text(json.dumps({"run": RUN_CFG.to_dict()}))
    rc = cli.main(["gen-corpus", "-c", str(corpus_cfg), "-o", str(root / "corpus.jsonl")])
    assert rc == 0
    return root


class TestUsageErrors:
    def test_no_command(self, capsys):
        assert cli.main([]) == 1
        assert "error" in capsys.readouterr().err

    def test_unknown_command(self, capsys):
        assert cli.main(["frobnicate"]) == 1
        assert "invalid choice" in capsys.readouterr().err

    def test_missing_required_option(self, capsys):
        assert cli.main(["gen-corpus"]) == 1
        err = capsys.readouterr().err
        assert "--config" in err or "-c" in err


class TestDataErrors:
    def test_missing_config_file(self, tmp_path, capsys):
        rc = cli.main(
            ["gen-corpus", "-c", str(tmp_path / "absent.json"), "-o", str(tmp_path / "c.jsonl")]
        )
        assert rc == 2
        assert "error:" in capsys.readouterr().err

    def test_config_not_json(self, tmp_path, capsys):
        bad = tmp_path / "bad.json"
        bad.write_text("{not json")
        rc = cli.main(["gen-corpus", "-c", str(bad), "-o", str(tmp_path / "c.jsonl")])
        assert rc == 2

    def test_config_rejected_by_validation(self, tmp_path):
        bad = tmp_path / "bad.json"
        bad.write_text(json.dumps({"batch_size": 5, "malicious_per_batch": 9}))
        rc = cli.main(["gen-corpus", "-c", str(bad), "-o", str(tmp_path / "c.jsonl")])
        assert rc == 2

    def test_missing_corpus(self, workdir, tmp_path):
        rc = cli.main(
            [
                "train",
                str(tmp_path / "absent.jsonl"),
                "-c",
                str(workdir / "run.json"),
                "-o",
                str(tmp_path / "snap.json"),
            ]
        )
        assert rc == 2

    def test_missing_log(self, tmp_path):
        rc = cli.main(
            ["ingest", str(tmp_path / "absent.log"), "-o", str(tmp_path / "out.jsonl")]
        )
        assert rc == 2

    def test_missing_snapshot(self, workdir, tmp_path):
        rc = cli.main(["eval", str(tmp_path / "absent.json"), str(workdir / "corpus.jsonl")])
        assert rc == 2

    def test_missing_ui_dir(self, workdir, tmp_path, capsys):
        rc = cli.main(
            [
                "serve",
                str(workdir / "corpus.jsonl"),
                "-c",
                str(workdir / "run.json"),
                "--ui",
                str(tmp_path / "no-dist"),
            ]
        )
        assert rc == 2
        assert "ui directory" in capsys.readouterr().err


class TestRuntimeErrors:
    def test_unexpected_exception(self, workdir, tmp_path, monkeypatch, capsys):
        def boom(*a, **kw):
            raise RuntimeError("synthetic failure")

        monkeypatch.setattr(cli, "run_loop", boom)
        rc = cli.main(
            [
                "run",
                str(workdir / "corpus.jsonl"),
                "-c",
                str(workdir / "run.json"),
                "-o",
                str(tmp_path / "rundir"),
            ]
        )
        assert rc == 3
        assert "runtime failure" in capsys.readouterr().err

    def test_labeler_unavailable(self, workdir, tmp_path, monkeypatch, capsys):
        def gone(*a, **kw):
            raise LabelerUnavailable("labeling service went away")

        monkeypatch.setattr(cli, "run_loop", gone)
        rc = cli.main(
            [
                "run",
                str(workdir / "corpus.jsonl"),
                "-c",
                str(workdir / "run.json"),
                "-o",
                str(tmp_path / "rundir"),
            ]
        )
        assert rc == 3
        assert "labeler unavailable" in capsys.readouterr().err


class TestFlows:
    def test_gen_corpus_output(self, workdir, capsys):
        corpus = load_corpus(workdir / "corpus.jsonl")
        assert len(corpus.initial) == CORPUS_CFG.initial_benign + CORPUS_CFG.initial_malicious
        assert sorted(corpus.batches) == [1, 2]
        assert all(len(corpus.batches[d]) == CORPUS_CFG.batch_size for d in corpus.batches)

    def test_train_writes_snapshot(self, workdir, capsys):
        out = workdir / "trained.json"
        rc = cli.main(
            ["train", str(workdir / "corpus.jsonl"), "-c", str(workdir / "run.json"), "-o", str(out)]
        )
        assert rc == 0
        assert "trained on" in capsys.readouterr().out
        state = load_snapshot(out)
        assert state["completed"] == 0
        assert state["config"] == RUN_CFG.to_dict()
        assert len(state["pool"]) == len(load_corpus(workdir / "corpus.jsonl").initial)

    def test_run_all_batches(self, workdir, capsys):
        rundir = workdir / "rundir"
        rc = cli.main(
            [
                "run",
                str(workdir / "corpus.jsonl"),
                "-c",
                str(workdir / "run.json"),
                "-o",
                str(rundir),
            ]
        )
        assert rc == 0
        out = capsys.readouterr().out
        assert "batch 1:" in out and "batch 2:" in out
        assert (rundir / "report-0001.json").exists()
        assert (rundir / "report-0002.json").exists()
        assert (rundir / "snapshot-0002.json").exists()
        assert len((rundir / "run.log").read_text().splitlines()) == 2

    def test_run_resume_after_completion(self, workdir, capsys):
        # nothing left to do; still a clean exit with no new reports
        rc = cli.main(
            [
                "run",
                str(workdir / "corpus.jsonl"),
                "-c",
                str(workdir / "run.json"),
                "-o",
                str(workdir / "rundir"),
                "--resume",
            ]
        )
        assert rc == 0
        assert "batch" not in capsys.readouterr().out

    def test_eval_snapshot(self, workdir, capsys):
        rc = cli.main(
            [
                "eval",
                str(workdir / "rundir" / "snapshot-0002.json"),
                str(workdir / "corpus.jsonl"),
            ]
        )
        assert rc == 0
        results = json.loads(capsys.readouterr().out)
        assert set(results) == {"1", "2", "overall"}
        assert 0.0 <= results["overall"]["recall"] <= 1.0

    def test_compare_strategies(self, workdir, capsys):
        out = workdir / "compare.json"
        rc = cli.main(
            [
                "compare",
                str(workdir / "corpus.jsonl"),
                "-c",
                str(workdir / "run.json"),
                "--strategies",
                "random,constant_stack",
                "-o",
                str(out),
            ]
        )
        assert rc == 0
        text = capsys.readouterr().out
        assert "random:" in text and "constant_stack:" in text
        payload = json.loads(out.read_text())
        assert set(payload) == {"random", "constant_stack"}
        for entry in payload.values():
            assert len(entry["reports"]) == 2
            assert entry["malicious_obtained"] >= 0


LOG_LINES = """\
10.0.0.1 - - [12/Mar/2025:06:25:24 +0100] "GET /index.php?user=alice&view=profile HTTP/1.1" 200 512
10.0.0.2 - - [12/Mar/2025:06:25:30 +0100] "GET /logo.png HTTP/1.1" 200 4096
10.0.0.3 - - [12/Mar/2025:06:26:01 +0100] "GET /search.php?q=%3Cscript%3Ealert(1)%3C/script%3E HTTP/1.1" 200 17
10.0.0.1 - - [12/Mar/2025:06:27:24 +0100] "GET /index.php?user=alice&view=profile HTTP/1.1" 200 512
not a log line
10.0.0.4 - - [12/Mar/2025:06:28:00 +0100] "GET /plain/path?next=1 HTTP/1.1" 404 0
10.0.0.5 - - [12/Mar/2025:06:29:00 +0100] "POST /cart.php?item=1234&qty=2 HTTP/1.1" 200 33 "http://shop.example/cart" "Mozilla/5.0"
10.0.0.6 - - [12/Mar/2025:06:30:00 +0100] "GET /a.php?x=1 HTTP/1.1" 200 9
"""


class TestIngest:
    @pytest.fixture()
    def logfile(self, tmp_path):
        path = tmp_path / "access.log"
        path.write_text(LOG_LINES)
        return path

    def test_stats_line_and_records(self, logfile, tmp_path, capsys):
        out = tmp_path / "queries.jsonl"
        rc = cli.main(["ingest", str(logfile), "-o", str(out), "--day", "3"])
        assert rc == 0
        stats = capsys.readouterr().out
        assert "lines=8" in stats
        assert "parse_errors=1" in stats
        assert "cleaned=4" in stats
        assert "dropped_short=1" in stats
        assert "flagged=1" in stats
        assert "duplicates=1" in stats
        assert "kept=1" in stats
        corpus = load_corpus(out)
        assert not corpus.initial
        assert [q.text for q in corpus.batches[3]] == ["user=alice&view=profile"]
        assert corpus.batches[3][0].label is None

    def test_include_flagged(self, logfile, tmp_path):
        out = tmp_path / "queries.jsonl"
        rc = cli.main(["ingest", str(logfile), "-o", str(out), "--include-flagged"])
        assert rc == 0
        records = load_corpus(out).batches[1]
        assert len(records) == 2
        flagged = [q for q in records if q.label == "malicious"]
        assert len(flagged) == 1
        assert "<script>" in flagged[0].text
