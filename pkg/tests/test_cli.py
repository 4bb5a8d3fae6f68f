import io
import json
import os

import pytest

from tvnet.cli import main
from tvnet.io import read_networks
from tvnet.params import load_model
from tvnet.report import parse_dot

MR_LEBOWSKI = "I 'm not Mr. Lebowski ; you 're Mr. Lebowski ."


def write(path, text):
    path.write_text(text, encoding="utf-8")
    return str(path)


def corpus_files(tmp_path, lines, chars=None):
    corpus = write(tmp_path / "corpus.jsonl", "".join(json.dumps(r) + "\n" for r in lines))
    chars = chars or [("lebowski", "dude", "Jeffrey", "Lebowski"), ("lebowski", "walter", "Walter", "Sobchak")]
    table = "film_id\tcharacter_id\tfirst_name\tlast_name\n" + "".join("\t".join(c) + "\n" for c in chars)
    return corpus, write(tmp_path / "characters.tsv", table)


@pytest.fixture(scope="module")
def sim(tmp_path_factory):
    out = tmp_path_factory.mktemp("sim")
    assert main(["simulate", "--films", "12", "--nodes", "10", "--edges", "20", "--beta-hom", "1",
                 "--beta-het", "-1", "--tokens-mean", "4", "--seed", "7", "-o", str(out)]) == 0
    assert main(["ingest", str(out / "corpus.jsonl"), str(out / "characters.tsv"),
                 "-o", str(out / "networks.json")]) == 0
    return out


def test_ingest_mr_lebowski_line(tmp_path, capsys):
    corpus, chars = corpus_files(tmp_path, [
        {"film_id": "lebowski", "speaker_id": "walter", "addressee_id": "dude", "text": MR_LEBOWSKI}])
    out = str(tmp_path / "nets.json")
    assert main(["ingest", corpus, chars, "-o", out]) == 0
    vocab, nets = read_networks(out)
    k = vocab.index("title+name:mr")
    (net,) = nets
    assert net.edges == (("dude", "walter"),)
    assert net.x_bwd[0, k] == 2 and net.x_fwd.sum() == 0
    manifest = json.loads(open(out + ".manifest.json").read())
    assert manifest["subcommand"] == "ingest" and corpus in manifest["inputs"] and out in manifest["outputs"]
    assert "1 address" not in capsys.readouterr().err


def test_ingest_empty_corpus_fails(tmp_path, capsys):
    corpus, chars = corpus_files(tmp_path, [])
    assert main(["ingest", corpus, chars, "-o", str(tmp_path / "n.json")]) != 0
    err = capsys.readouterr().err
    assert "error[E_NO_LINES]" in err and "no dialogue lines" in err
    assert not (tmp_path / "n.json").exists()


def test_ingest_duplicate_character_fails(tmp_path, capsys):
    corpus, chars = corpus_files(tmp_path, [
        {"film_id": "lebowski", "speaker_id": "walter", "addressee_id": "dude", "text": MR_LEBOWSKI}],
        [("lebowski", "dude", "Jeffrey", "Lebowski"), ("lebowski", "dude", "The", "Dude")])
    assert main(["ingest", corpus, chars, "-o", str(tmp_path / "n.json")]) == 2
    err = capsys.readouterr().err
    assert err.startswith("error[E_DUP_CHAR]") and "'dude'" in err


def test_missing_input_is_io_error(tmp_path, capsys):
    assert main(["rank", str(tmp_path / "nope.json"), "-o", str(tmp_path / "r.tsv")]) == 2
    assert capsys.readouterr().err.startswith("error[E_IO]")


def test_simulated_corpus_ingests(sim):
    vocab, nets = read_networks(str(sim / "networks.json"))
    truth = json.loads((sim / "truth.json").read_text())
    assert len(nets) == 12
    for net in nets:
        assert len(net.edges) == 20
        # characters who never speak or get spoken to are not part of the ingested graph
        simulated = {n for e in truth["networks"][net.network_id] for n in e[:2]}
        assert set(net.nodes) == simulated and len(net.nodes) <= 10
        assert sorted(tuple(e[:2]) for e in truth["networks"][net.network_id]) == sorted(net.edges)
    assert set(vocab) <= {"firstName", "lastName", "title+name:mr", "title+name:mrs", "placeholder:dude",
                          "placeholder:man", "placeholder:baby", "placeholder:buddy", "placeholder:sir",
                          "placeholder:madam"}


def _train(sim, out, *extra):
    return main(["train", str(sim / "networks.json"), "--restarts", "2", "--max-iter", "8", "--seed", "3",
                 "-o", str(out), *extra])


def test_train_is_byte_identical(sim, tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert _train(sim, a, "--truth", str(sim / "truth.json")) == 0
    assert _train(sim, b, "--truth", str(sim / "truth.json")) == 0
    for name in ("model.json", "beliefs.json", "trace.tsv", "accuracy.json"):
        assert (a / name).read_bytes() == (b / name).read_bytes(), name
    acc = json.loads((a / "accuracy.json").read_text())
    assert acc["edges"] == 12 * 20
    assert 0.5 <= acc["best_permutation_accuracy"] <= 1.0
    assert (a / "manifest.json").exists()


def test_train_ablation_freezes_beta(sim, tmp_path):
    assert _train(sim, tmp_path, "--ablate", "triads") == 0
    model = load_model(str(tmp_path / "model.json"))
    assert not model.struct.beta.any()


def test_rank_weights_export_replay(sim, tmp_path, capsys):
    assert _train(sim, tmp_path / "m") == 0
    model = str(tmp_path / "m" / "model.json")
    rank = str(tmp_path / "rank.tsv")
    assert main(["rank", model, "--top", "10", "-o", rank]) == 0
    lines = open(rank).read().splitlines()
    assert lines[1] == "V-cluster\tV-ratio\tT-cluster\tT-ratio" and len(lines) == 12
    assert all(len(ln.split("\t")) == 4 and all(ln.split("\t")) for ln in lines[2:])
    weights = str(tmp_path / "w.tsv")
    assert main(["weights", model, "--chart", str(tmp_path / "chart.json"), "-o", weights]) == 0
    assert "ttt" in open(weights).read()
    dots = tmp_path / "dot"
    assert main(["export", str(sim / "networks.json"), str(tmp_path / "m" / "beliefs.json"), "--model", model,
                 "--characters", str(sim / "characters.tsv"), "--film", "film0000", "-o", str(dots)]) == 0
    doc = parse_dot((dots / "film0000.dot").read_text())
    assert len(doc["edges"]) == 20 and all(n["label"] for n in doc["nodes"].values())
    capsys.readouterr()
    assert main(["replay", str(tmp_path / "m" / "manifest.json"), "--check"]) == 0
    assert "reproduced" in capsys.readouterr().out
    # a changed input is refused
    rank_manifest = rank + ".manifest.json"
    with open(model, "a") as f:
        f.write(" ")
    assert main(["replay", rank_manifest]) == 2
    assert "E_REPLAY_INPUT" in capsys.readouterr().err


def test_eval_reports_every_ablation(sim, tmp_path):
    out = str(tmp_path / "eval.tsv")
    assert main(["eval", str(sim / "networks.json"), "--holdout-frac", "0.25", "--split-frac", "0.5",
                 "--restarts", "1", "--max-iter", "4", "-o", out]) == 0
    lines = open(out).read().splitlines()
    assert lines[0].startswith("# model-sha256: text-only=")
    summary = lines[2:lines.index("")]
    assert [ln.split("\t")[0] for ln in summary] == ["text-only", "text+triads", "text+mutual-friends", "full"]
    assert lines[lines.index("") + 1] == "ablation\tfilm\ttotal_ll"
    assert main(["eval", str(sim / "networks.json"), "--ablations", "bogus", "-o", out]) == 2


def test_lexicon_review(tmp_path, monkeypatch, capsys):
    rows = []
    for t in range(12):
        rows.append({"film_id": "f", "speaker_id": "a", "addressee_id": "b", "text": "Listen , guv .", "turn": t})
        rows.append({"film_id": "f", "speaker_id": "b", "addressee_id": "a", "text": "Hey , pal .", "turn": 50 + t})
        rows.append({"film_id": "f", "speaker_id": "a", "addressee_id": "b",
                     "text": "The rug is wet and the door is open .", "turn": 100 + t})
    corpus, chars = corpus_files(tmp_path, rows, [("f", "a", "Ann", "Arbor"), ("f", "b", "Bo", "Brand")])
    out = tmp_path / "ph.txt"
    assert main(["lexicon", corpus, chars, "--mode", "placeholders", "--yes", "-o", str(out)]) == 0
    text = out.read_text()
    assert "guv" in text and "pal" in text and "bootstrapped" in text
    monkeypatch.setattr("sys.stdin", io.StringIO("y\nn\n"))
    assert main(["lexicon", corpus, chars, "--mode", "placeholders", "-o", str(out)]) == 0
    kept = [ln for ln in out.read_text().splitlines() if ln and not ln.startswith("#")]
    assert len(kept) == 1
    assert "keep?" in capsys.readouterr().err


def test_simulate_rejects_bad_purity(tmp_path, capsys):
    assert main(["simulate", "--purity", "0.2", "-o", str(tmp_path)]) == 2
    assert "error[E_ARGS]" in capsys.readouterr().err
    assert not os.listdir(tmp_path)
