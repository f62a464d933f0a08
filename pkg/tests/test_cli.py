import json

import pytest

from cda_crnn.cli import build_parser, main, model_config_from_args
from cda_crnn.corpus import Corpus, Dialogue, Utterance, save_corpus

SMALL = ["--embed-dim", "8", "--hidden", "8", "--filters", "4", "--layers", "1"]


@pytest.fixture(scope="module")
def corpus_path(tmp_path_factory):
    path = tmp_path_factory.mktemp("cli") / "c.json"
    assert main(["gen-synthetic", "--num-dialogues", "20", "--min-len", "2", "--max-len", "8",
                 "--extra-label-rate", "0.3", "--seed", "3", "--out", str(path)]) == 0
    return path


@pytest.fixture(scope="module")
def trained(corpus_path, tmp_path_factory):
    out = tmp_path_factory.mktemp("run")
    code = main(["train", "--corpus", str(corpus_path), "--variant", "crnn_v3", "--cell", "lstm", "--seed", "7",
                 "--epochs", "2", *SMALL, "--out", str(out)])
    assert code == 0
    return out


def test_gen_synthetic_is_reproducible(tmp_path):
    args = ["gen-synthetic", "--num-dialogues", "15", "--seed", "1"]
    assert main([*args, "--out", str(tmp_path / "a.json")]) == 0
    assert main([*args, "--out", str(tmp_path / "b.json")]) == 0
    assert (tmp_path / "a.json").read_bytes() == (tmp_path / "b.json").read_bytes()


def test_gen_synthetic_long_range(tmp_path):
    assert main(["gen-synthetic", "--long-range", "--num-dialogues", "5", "--min-len", "6", "--max-len", "6",
                 "--out", str(tmp_path / "lr.json")]) == 0
    raw = json.loads((tmp_path / "lr.json").read_text())
    assert all(d["utterances"][-1]["text"] == "final reply" for d in raw["dialogues"])


def test_train_writes_checkpoint_and_logs(trained):
    assert sorted(p.name for p in trained.iterdir()) == ["checkpoint", "metrics.json", "train.log"]
    metrics = json.loads((trained / "metrics.json").read_text())
    assert metrics["hyperparameters"] == "(4, 0.4, 8, 1, 0.15, 2)"
    assert metrics["split"] == {"train": 16, "validation": 2, "test": 2, "seed": 7, "overfit": False}
    assert "epoch=2 " in (trained / "train.log").read_text()


def test_default_flags_echo_reported_hyperparameters():
    args = build_parser().parse_args(["train", "--corpus", "c.json", "--out", "o"])
    assert model_config_from_args(args).hyperparameter_tuple() == "(100, 0.4, 900, 2, 0.15, 2)"


def test_config_file_fills_unset_flags(corpus_path, tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"embed_dim": 8, "hidden": 8, "filters": 4, "layers": 1, "epochs": 1,
                               "widths": [2, 3], "cell": "lstm"}))
    out = tmp_path / "run"
    assert main(["train", "--corpus", str(corpus_path), "--config", str(cfg), "--cell", "gru",
                 "--out", str(out)]) == 0
    m = json.loads((out / "metrics.json").read_text())
    assert m["config"]["cell"] == "gru" and m["config"]["widths"] == [2, 3]
    assert len(m["train_report"]["losses"]) == 1


def test_config_file_rejects_unknown_keys(corpus_path, tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"nonsense": 1}))
    assert main(["train", "--corpus", str(corpus_path), "--config", str(cfg), "--out", str(tmp_path)]) == 1


def test_train_missing_corpus_flag(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["train", "--out", "x"])
    assert exc.value.code == 1
    assert "usage" in capsys.readouterr().err


def test_train_nonexistent_corpus(tmp_path):
    assert main(["train", "--corpus", str(tmp_path / "missing.json"), "--out", str(tmp_path / "o")]) == 2


def test_evaluate_compare_same_checkpoint(trained, corpus_path, tmp_path, capsys):
    ck = str(trained / "checkpoint")
    out = tmp_path / "m.json"
    assert main(["evaluate", "--corpus", str(corpus_path), "--checkpoint", ck, "--compare", ck,
                 "--split", "all", "--out", str(out)]) == 0
    assert "t=0.0000 p=1" in capsys.readouterr().out
    report = json.loads(out.read_text())
    assert report["t_test"]["t"] == 0.0 and report["t_test"]["p"] == 1.0
    assert list(report["by_ref_count"]) == ["1", "2", "3", ">=4"]


def test_evaluate_rejects_missing_checkpoint(corpus_path, tmp_path):
    assert main(["evaluate", "--corpus", str(corpus_path), "--checkpoint", str(tmp_path / "none")]) == 2


def test_predict_is_stable(trained, corpus_path, tmp_path, capsys):
    ck = str(trained / "checkpoint")
    assert main(["predict", "--corpus", str(corpus_path), "--checkpoint", ck, "--out", str(tmp_path / "p1")]) == 0
    first = capsys.readouterr().out
    assert main(["predict", "--corpus", str(corpus_path), "--checkpoint", ck, "--out", str(tmp_path / "p2")]) == 0
    assert capsys.readouterr().out == first
    rows = [line.split("\t") for line in first.splitlines()]
    assert len(rows) == sum(len(d["utterances"]) for d in json.loads(corpus_path.read_text())["dialogues"])
    assert all(row[2].strip() for row in rows)


def test_analyze_transitions_single_path(tmp_path, capsys):
    path = tmp_path / "toy.json"
    utts = tuple(Utterance("u", "x", frozenset({code})) for code in ("OQ", "PA", "PF"))
    save_corpus(Corpus([Dialogue("toy", utts)]), path)
    assert main(["analyze-transitions", "--corpus", str(path), "--out", str(tmp_path / "m.txt")]) == 0
    assert capsys.readouterr().out.count("100.0%") == 4
    assert (tmp_path / "m.txt").read_text().startswith("from OQ")


def test_planted_matrix_file_drives_generator(tmp_path):
    path = tmp_path / "toy.json"
    save_corpus(Corpus([Dialogue("toy", (Utterance("u", "x", frozenset({"OQ"})),
                                         Utterance("u", "y", frozenset({"PA"}))))]), path)
    assert main(["analyze-transitions", "--corpus", str(path), "--out", str(tmp_path / "m.txt")]) == 0
    assert main(["gen-synthetic", "--planted", str(tmp_path / "m.txt"), "--num-dialogues", "5",
                 "--min-len", "1", "--out", str(tmp_path / "g.json")]) == 0
    raw = json.loads((tmp_path / "g.json").read_text())
    assert all([u["labels"] for u in d["utterances"]] == [["OQ"], ["PA"]] for d in raw["dialogues"])


def test_gradcheck_command(capsys):
    assert main(["gradcheck", "--tol", "1e-4", "--seeds", "0"]) == 0
    out = capsys.readouterr().out
    assert "all gradient checks passed" in out
    for key in ("crnn_v1[lstm]", "crnn_v3[gru]", "cnn_kim", "cnn_cr", "dynamic_kmax_pool"):
        assert key in out


def test_overfit_run_scores_on_training_split(corpus_path, tmp_path):
    out = tmp_path / "overfit"
    assert main(["train", "--corpus", str(corpus_path), "--seed", "7", "--embed-dim", "16", "--hidden", "32",
                 "--filters", "16", "--epochs", "500", "--patience", "15", "--overfit", "--out", str(out)]) == 0
    report = tmp_path / "train_eval.json"
    assert main(["evaluate", "--corpus", str(corpus_path), "--checkpoint", str(out / "checkpoint"),
                 "--split", "all", "--out", str(report)]) == 0
    assert json.loads(report.read_text())["accuracy"] >= 0.95
