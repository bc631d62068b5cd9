"""End-to-end exercises of the command-line front end."""

import json

import pytest

from essaygen.cli import main
from essaygen.synth import synthesize_corpus, write_corpus


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out = capsys.readouterr()
    return code, out.out, out.err


def test_version(capsys):
    with pytest.raises(SystemExit) as e:
        main(["--version"])
    assert e.value.code == 0
    assert capsys.readouterr().out.startswith("essaygen ")


def test_prep_synthesize_counts(tmp_path, capsys):
    code, out, _ = run(capsys, "prep", "--synthesize", 12, "--out",
                       tmp_path / "p", "--seed", 3, "--json")
    assert code == 0
    stats = json.loads(out)
    assert stats["total"] == 12
    for artifact in ("corpus.jsonl", "vocab.txt", "psi.json", "stats.json",
                     "manifest.json"):
        assert (tmp_path / "p" / artifact).exists()


def test_prep_stats_counting_oracle(tmp_path, capsys):
    records, _ = synthesize_corpus(50, seed=9)
    corpus = tmp_path / "c.jsonl"
    write_corpus(records, corpus)
    code, out, _ = run(capsys, "prep", "--corpus", corpus, "--out",
                       tmp_path / "p", "--json")
    assert code == 0
    stats = json.loads(out)
    assert stats["total"] == 50
    expected_avg_t = sum(len(r["topics"]) for r in records) / 50
    assert stats["avg_t"] == pytest.approx(expected_avg_t)


def test_prep_deterministic_outputs(tmp_path, capsys):
    for d in ("a", "b"):
        code, _, _ = run(capsys, "prep", "--synthesize", 10, "--out",
                         tmp_path / d, "--seed", 5)
        assert code == 0
    for name in ("corpus.jsonl", "vocab.txt", "psi.json", "stats.json"):
        assert (tmp_path / "a" / name).read_bytes() == \
               (tmp_path / "b" / name).read_bytes()


def test_prep_k1_single_keyword(tmp_path, capsys):
    code, _, _ = run(capsys, "prep", "--synthesize", 10, "--out",
                     tmp_path / "p", "--k", 1)
    assert code == 0
    psi = json.loads((tmp_path / "p" / "psi.json").read_text())
    assert all(len(kws) == 1 for kws in psi["contexts"].values())


def test_prep_manifest_hashes(tmp_path, capsys):
    import hashlib
    run(capsys, "prep", "--synthesize", 8, "--out", tmp_path / "p")
    manifest = json.loads((tmp_path / "p" / "manifest.json").read_text())
    assert manifest["artifacts"]
    for path, digest in manifest["artifacts"].items():
        assert hashlib.sha256(open(path, "rb").read()).hexdigest() == digest


@pytest.fixture(scope="module")
def prepared(tmp_path_factory):
    root = tmp_path_factory.mktemp("pipeline")
    assert main(["prep", "--synthesize", "10", "--out", str(root),
                 "--seed", "1"]) == 0
    assert main(["train", "--corpus", str(root / "corpus.jsonl"),
                 "--psi", str(root / "psi.json"), "--out", str(root / "m"),
                 "--epochs", "3", "--batch-size", "4",
                 "--variant", "vanilla"]) == 0
    return root


def test_train_artifacts_and_log(prepared):
    assert (prepared / "m" / "final.npz").exists()
    assert (prepared / "m" / "best.npz").exists()
    records = [json.loads(line) for line
               in (prepared / "m" / "train_log.jsonl").read_text().splitlines()]
    assert records
    assert set(records[0]) == {"step", "epoch", "loss", "lr", "wall_ms"}
    assert [r["step"] for r in records] == list(range(1, len(records) + 1))


def test_generate_greedy_deterministic(prepared, capsys):
    argv = ["generate", "--checkpoint", str(prepared / "m" / "final.npz"),
            "--psi", str(prepared / "psi.json"), "--topics", "topic0,topic1",
            "--k", "1", "--max-len", "12"]
    outs = []
    for _ in range(2):
        assert main(argv) == 0
        outs.append(capsys.readouterr().out)
    assert outs[0] == outs[1]
    assert outs[0].strip()


def test_generate_json_payload(prepared, capsys):
    assert main(["generate", "--checkpoint", str(prepared / "m" / "final.npz"),
                 "--psi", str(prepared / "psi.json"), "--topics", "topic0",
                 "--max-len", "8", "--json"]) == 0
    payload = json.loads(capsys.readouterr().out)
    assert set(payload) == {"topics", "tokens", "text", "logprobs"}
    assert payload["topics"] == ["topic0"]
    assert len(payload["logprobs"]) == len(payload["tokens"])


def test_generate_rejects_foreign_psi(prepared, tmp_path, capsys):
    assert main(["prep", "--synthesize", "10", "--out", str(tmp_path),
                 "--seed", "1", "--k", "2"]) == 0
    code = main(["generate", "--checkpoint", str(prepared / "m" / "final.npz"),
                 "--psi", str(tmp_path / "psi.json"), "--topics", "topic0"])
    capsys.readouterr()
    assert code == 1


def test_eval_reports_metrics(tmp_path, capsys):
    cands = tmp_path / "c.txt"
    refs = tmp_path / "r.txt"
    cands.write_text("the cat sat\n")
    refs.write_text("the cat sat\n")
    assert main(["eval", "--candidates", str(cands), "--references", str(refs),
                 "--json"]) == 0
    report = json.loads(capsys.readouterr().out)
    assert report["bleu2"] == pytest.approx(100.0)
    assert report["rouge_l"] == pytest.approx(100.0)


def make_split(tmp_path, seed=2):
    train, hold = synthesize_corpus(10, seed=seed, holdout=3)
    write_corpus(train, tmp_path / "train.jsonl")
    write_corpus(hold, tmp_path / "hold.jsonl")
    return tmp_path / "train.jsonl", tmp_path / "hold.jsonl"


def ablate_argv(corpus, heldout, out):
    return ["ablate", "--corpus", str(corpus), "--heldout", str(heldout),
            "--out", str(out), "--epochs", "2", "--hidden-dim", "32",
            "--num-heads", "2", "--ffn-dim", "32", "--k", "4", "--json"]


def test_ablate_four_rows_and_param_ordering(tmp_path, capsys):
    corpus, heldout = make_split(tmp_path)
    assert main(ablate_argv(corpus, heldout, tmp_path / "out")) == 0
    rows = json.loads(capsys.readouterr().out)
    assert [r["variant"] for r in rows] == ["vanilla", "ef_only", "te_only", "full"]
    params = {r["variant"]: r["trainable_params"] for r in rows}
    assert params["full"] > params["vanilla"]
    assert all(r["metrics"] is not None for r in rows)


def test_ablate_rerun_bit_exact(tmp_path, capsys):
    corpus, heldout = make_split(tmp_path)
    reports = []
    for d in ("o1", "o2"):
        assert main(ablate_argv(corpus, heldout, tmp_path / d)) == 0
        capsys.readouterr()
        reports.append((tmp_path / d / "ablation.json").read_bytes())
    assert reports[0] == reports[1]


def test_missing_file_is_an_error(capsys):
    code = main(["eval", "--candidates", "/nonexistent/c.txt",
                 "--references", "/nonexistent/r.txt"])
    _, err = capsys.readouterr().out, capsys.readouterr().err
    assert code == 1
