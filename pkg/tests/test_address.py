import random
from fractions import Fraction
from math import comb

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tvnet.address import (CharacterRecord, DialogueLine, IngestStats, Lexicon, binomial_tail,
                           bootstrap_lexicon, build_content_vectors, default_lexicon, detect_address_spans,
                           line_tags, load_lexicon, read_lexicon_file, tokenize, valid_bilou, write_lexicon_file)
from tvnet.errors import CorpusError

DUDE = CharacterRecord("lebowski", "dude", "Jeffrey", "Lebowski")
WALTER = CharacterRecord("lebowski", "walter", "Walter", "Sobchak")
LEX = default_lexicon()


def line(text, speaker="walter", addressee="dude", film="lebowski", turn=0):
    return DialogueLine.from_text(film, speaker, addressee, text, turn)


# Tokenization and tagging ----------------------------------------------------


def test_tokenize_keeps_abbreviations_and_splits_clitics():
    assert tokenize("I'm not Mr. Lebowski; you're Mr. Lebowski.") == \
        ["I", "'m", "not", "Mr.", "Lebowski", ";", "you", "'re", "Mr.", "Lebowski", "."]


def test_mr_lebowski_tags():
    ln = line("I 'm not Mr. Lebowski ; you 're Mr. Lebowski .")
    spans = detect_address_spans(ln, DUDE, LEX)
    assert [(s.start, s.end) for s in spans] == [(3, 5), (8, 10)]
    assert all(s.tags == ("B-ADDR", "L-ADDR") and s.symbol == "title+name:mr" for s in spans)
    assert line_tags(len(ln.tokens), spans) == ["O", "O", "O", "B-ADDR", "L-ADDR", "O", "O", "O",
                                                "B-ADDR", "L-ADDR", "O"]


def test_placeholder_in_vocative_position():
    ln = line("I 'm perfectly calm , dude .", speaker="walter", addressee="dude")
    spans = detect_address_spans(ln, WALTER, LEX)
    assert len(spans) == 1
    assert spans[0].tags == ("U-ADDR",) and ln.tokens[spans[0].start] == "dude"
    assert spans[0].category == "placeholder" and spans[0].symbol == "placeholder:dude"


def test_no_hits():
    assert detect_address_spans(line("The rug really tied the room together ."), DUDE, LEX) == []


def test_name_roles_and_title_alone():
    spans = detect_address_spans(line("Jeffrey Lebowski , listen ."), DUDE, LEX)
    assert [(s.symbol, s.tags) for s in spans] == [("fullName", ("B-ADDR", "L-ADDR"))]
    spans = detect_address_spans(line("Mr. Jeffrey Lebowski ?"), DUDE, LEX)
    assert [(s.symbol, s.tags) for s in spans] == [("title+name:mr", ("B-ADDR", "I-ADDR", "L-ADDR"))]
    spans = detect_address_spans(line("Thank you , sir ."), DUDE, LEX)
    assert [(s.symbol, s.category) for s in spans] == [("placeholder:sir", "placeholder")]
    spans = detect_address_spans(line("Yes , Mister ."), DUDE, LEX)
    assert [(s.symbol, s.category) for s in spans] == [("title:mister", "title-alone")]
    # a placeholder word inside a sentence is not vocative
    assert detect_address_spans(line("That man is here ."), DUDE, LEX) == []


WORDS = ["the", "dude", "sir", "man", "mr", "Mr.", "Jeffrey", "Lebowski", ",", ".", "?", "rug", "jeffrey"]


@settings(max_examples=200)
@given(st.lists(st.sampled_from(WORDS), min_size=1, max_size=12))
def test_tags_always_valid_bilou(tokens):
    ln = DialogueLine("f", "a", "b", tokens)
    spans = detect_address_spans(ln, DUDE, LEX)
    tags = line_tags(len(tokens), spans)
    assert valid_bilou(tags)
    for s in spans:
        assert len(s.tags) == len(s)
        if s.category == "title+name":
            assert tokens[s.start].casefold().strip(".") in LEX.titles


def test_valid_bilou_rejects_broken_sequences():
    assert not valid_bilou(["I-ADDR"])
    assert not valid_bilou(["B-ADDR", "O"])
    assert not valid_bilou(["B-ADDR", "U-ADDR"])
    assert valid_bilou(["O", "B-ADDR", "I-ADDR", "L-ADDR", "U-ADDR"])


def test_dialogue_line_invariants():
    with pytest.raises(CorpusError):
        DialogueLine.from_text("f", "a", "a", "hi")
    with pytest.raises(CorpusError):
        DialogueLine("f", "a", "b", ())
    with pytest.raises(CorpusError):
        CharacterRecord("f", "c", "", None)


# Lexicons ---------------------------------------------------------------------


def test_bundled_lexicons():
    assert len(LEX.titles) == 27 and len(LEX.placeholders) == 59
    assert "mister" in LEX.shared
    assert set(LEX.provenance.values()) == {"curated"}
    assert "" not in LEX.titles


def test_lexicon_file_round_trip(tmp_path):
    path = tmp_path / "t.txt"
    write_lexicon_file(path, ["guv", "Boss", "guv"], "titles", provenance="bootstrapped")
    terms, prov = read_lexicon_file(path)
    assert terms == ["boss", "guv"] and prov == "bootstrapped"
    lex = load_lexicon(titles_path=path)
    assert lex.titles == {"boss", "guv"} and len(lex.placeholders) == 59
    assert lex.provenance["guv"] == "bootstrapped"
    with pytest.raises(ValueError):
        Lexicon({""}, set())


# Binomial test ------------------------------------------------------------------


def exact_tail(k, n, p):
    p = Fraction(p)
    return float(sum(comb(n, j) * p**j * (1 - p) ** (n - j) for j in range(k, n + 1)))


@pytest.mark.parametrize("p0", ["0.05", "0.1", "0.2"])
def test_binomial_tail_grid(p0):
    for n in range(0, 31):
        for k in range(0, n + 1):
            assert abs(binomial_tail(k, n, float(p0)) - exact_tail(k, n, Fraction(p0))) <= 1e-12


def test_binomial_tail_examples():
    assert binomial_tail(0, 17, 0.3) == 1.0
    assert binomial_tail(1, 5, 0.2) == pytest.approx(1 - 0.8**5, rel=1e-12)
    assert binomial_tail(1, 5, 0.2) > 0.01
    assert binomial_tail(15, 20, 0.1) == pytest.approx(exact_tail(15, 20, Fraction(1, 10)), rel=1e-12)
    assert binomial_tail(15, 20, 0.1) < 0.01


def _bootstrap_corpus():
    chars = [CharacterRecord("f", "a", "Ann", "Arbor"), CharacterRecord("f", "b", "Bo", "Brand")]
    lines = []
    for t in range(12):
        lines.append(DialogueLine.from_text("f", "a", "b", "Listen , guv .", 2 * t))
        lines.append(DialogueLine.from_text("f", "b", "a", "The guv is late and the rug is wet .", 2 * t + 1))
    for t in range(10):
        lines.append(DialogueLine.from_text("f", "a", "b", "Ok , Chief Brand .", 100 + t))
    return lines, chars


def test_bootstrap_flags_vocative_terms():
    lines, chars = _bootstrap_corpus()
    cands = bootstrap_lexicon(lines, chars, mode="placeholders", alpha=0.01)
    terms = [c.term for c in cands]
    assert "guv" in terms and "rug" not in terms and "the" not in terms
    assert [c.p_value for c in cands] == sorted(c.p_value for c in cands)
    titles = bootstrap_lexicon(lines, chars, mode="titles", alpha=0.01)
    assert [c.term for c in titles] == ["chief"]


def test_bootstrap_rejects_duplicate_characters():
    lines, chars = _bootstrap_corpus()
    with pytest.raises(CorpusError, match="duplicate character record a"):
        bootstrap_lexicon(lines, chars + [CharacterRecord("f", "a", "X", "Y")])


# Content vectors -------------------------------------------------------------------


def test_content_vector_examples():
    chars = [WALTER, DUDE, CharacterRecord("other", "luke", "Luke", "Skywalker"),
             CharacterRecord("other", "leia", "Leia", "Organa")]
    lines = [
        line("I 'm not Mr. Lebowski ; I 'm the Dude .", turn=0),
        line("Hello , Mr. Lebowski .", turn=1),
        line("Calm down , dude .", speaker="dude", addressee="walter", turn=2),
        line("Walter , please .", speaker="dude", addressee="walter", turn=3),
        DialogueLine.from_text("other", "leia", "luke", "Luke , help .", 0),
        DialogueLine.from_text("other", "luke", "leia", "Nice weather .", 1),
    ]
    vocab, nets = build_content_vectors(lines, chars, LEX)
    assert vocab == sorted(set(vocab))
    idx = {s: k for k, s in enumerate(vocab)}
    by_id = {n.network_id: n for n in nets}
    leb = by_id["lebowski"]
    assert leb.edges == (("dude", "walter"),)
    # walter -> dude is the backward direction because "dude" < "walter"
    assert leb.x_bwd[0, idx["title+name:mr"]] == 2
    assert leb.x_fwd[0, idx["placeholder:dude"]] == 1
    assert leb.x_fwd[0, idx["firstName"]] == 1
    other = by_id["other"]
    assert other.x_fwd[0, idx["firstName"]] == 1  # leia -> luke
    assert leb.x_fwd.sum() + leb.x_bwd.sum() + other.x_fwd.sum() + other.x_bwd.sum() == 5


def test_content_vectors_order_free_and_closed():
    chars = [WALTER, DUDE, CharacterRecord("lebowski", "maude", "Maude", "Lebowski")]
    texts = ["Hey , Maude .", "Mr. Lebowski , sir .", "Dude , man .", "Listen , Walter Sobchak .", "Nothing ."]
    pairs = [("walter", "dude"), ("dude", "walter"), ("maude", "dude"), ("dude", "maude"), ("walter", "maude")]
    rng = random.Random(0)
    lines = [line(rng.choice(texts), s, a, turn=t) for t, (s, a) in
             enumerate(rng.choice(pairs) for _ in range(40))]
    vocab, nets = build_content_vectors(lines, chars, LEX)
    shuffled = lines[:]
    rng.shuffle(shuffled)
    vocab2, nets2 = build_content_vectors(shuffled, chars, LEX)
    assert vocab == vocab2
    for a, b in zip(nets, nets2):
        assert a.edges == b.edges and np.array_equal(a.x_fwd, b.x_fwd) and np.array_equal(a.x_bwd, b.x_bwd)
    assert all(n.vocab_size == len(vocab) for n in nets)
    used = set(np.flatnonzero(sum(n.x_fwd.sum(axis=0) + n.x_bwd.sum(axis=0) for n in nets)))
    assert used == set(range(len(vocab)))


def test_unknown_ids_skipped_and_empty_dyads_kept():
    stats = IngestStats()
    lines = [line("Hi , Dude .", "walter", "dude"), line("Hey , you .", "walter", "ghost"),
             DialogueLine.from_text("lebowski", "walter", "maude", "Nice rug .", 5)]
    chars = [WALTER, DUDE, CharacterRecord("lebowski", "maude", "Maude", "Lebowski")]
    _, nets = build_content_vectors(lines, chars, LEX, stats=stats)
    assert stats.skipped_unknown == 1 and stats.lines == 2
    net = nets[0]
    e = net.find_edge("walter", "maude")
    assert not net.x_fwd[e].any() and not net.x_bwd[e].any()
