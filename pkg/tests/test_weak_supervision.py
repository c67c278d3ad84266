
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from refreader.data import DataFormatError
from refreader.weak_supervision import (
    ChartError, EntityLexicon, TrainingChart, add_relation, build_sentence_sets, canonicalize, match_mentions,
    missing_pairs, pair_key, read_corpus, weak_label, write_corpus,
)

LEX = EntityLexicon({"phase": "Structure", "phase transition": "Structure", "annealing": "Process",
                     "toughness": "Property", "grain": "Structure", "creep strength": "Property"})


def test_longest_match_wins():
    assert match_mentions("a phase transition occurs".split(), LEX) == [("phase_transition", 1, 3)]


def test_short_match_alone():
    assert match_mentions("within each phase the".split(), LEX) == [("phase", 2, 3)]


def test_no_hits():
    assert match_mentions("nothing to see".split(), LEX) == []


def test_matching_is_case_insensitive():
    assert match_mentions("Creep Strength rose".split(), LEX) == [("creep_strength", 0, 2)]


def test_partial_overlap_prefers_longer_then_leftmost():
    lex = EntityLexicon({"a b": "Process", "b c d": "Structure", "d e": "Property"})
    assert match_mentions("a b c d e".split(), lex) == [("b_c_d", 1, 4)]
    lex = EntityLexicon({"a b": "Process", "b c": "Structure"})
    assert match_mentions("a b c".split(), lex) == [("a_b", 0, 2)]


@given(st.lists(st.sampled_from(["phase", "transition", "grain", "annealing", "x", "toughness"]), max_size=12))
def test_matches_never_overlap(tokens):
    spans = match_mentions(tokens, LEX)
    for (_, s1, e1), (_, s2, e2) in zip(spans, spans[1:]):
        assert e1 <= s2
    for name, s, e in spans:
        assert "_".join(tokens[s:e]) == name


def test_three_entities_feed_three_sets():
    sets = build_sentence_sets([["annealing", "grain", "toughness"]], LEX)
    assert set(sets) == {("annealing", "grain"), ("annealing", "toughness"), ("grain", "toughness")}


def test_single_entity_feeds_nothing():
    assert build_sentence_sets([["the", "grain", "grew"]], LEX) == {}


def test_set_sizes_match_brute_force():
    rng = np.random.default_rng(0)
    vocab = ["annealing", "grain", "toughness", "phase", "the", "of", "creep", "strength"]
    corpus = [[vocab[i] for i in rng.integers(len(vocab), size=int(rng.integers(1, 10)))] for _ in range(100)]
    sets = build_sentence_sets(corpus, LEX)
    brute = {}
    for sent in corpus:
        names = {n for n, _, _ in match_mentions(sent, LEX)}
        for a in names:
            for b in names:
                if a < b:
                    key = pair_key(a, b, LEX)
                    brute[key] = brute.get(key, 0) + 1
    assert {k: len(v) for k, v in sets.items()} == brute


def test_positions_are_first_occurrence():
    sets = build_sentence_sets([["grain", "x", "annealing", "grain"]], LEX)
    inst = sets[("annealing", "grain")][0]
    assert (inst.p1, inst.p2) == (2, 0)


def test_pair_key_orders_by_category():
    assert pair_key("toughness", "grain", LEX) == ("grain", "toughness")
    assert pair_key("grain", "annealing", LEX) == ("annealing", "grain")


def test_weak_label_positive_pair():
    corpus = [["annealing", "grain", "w"]] * 3 + [["grain", "toughness"]]
    sets = build_sentence_sets(corpus, LEX)
    chart = TrainingChart("c0", {("annealing", "grain"): True})
    labeled, unlabeled = weak_label(sets, [chart])
    assert len(labeled) == 3 and all(x.label is True and x.chart == 0 for x in labeled)
    assert len(unlabeled) == 1 and unlabeled[0].label is None


def test_weak_label_conflicting_charts():
    sets = build_sentence_sets([["annealing", "grain"]], LEX)
    charts = [TrainingChart("a", {("annealing", "grain"): True}), TrainingChart("b", {("annealing", "grain"): False})]
    with pytest.raises(ChartError):
        weak_label(sets, charts)


def test_disallowed_edge_rejected():
    with pytest.raises(ChartError):
        add_relation({}, "annealing", "toughness", True, LEX)


def test_chart_parse_roundtrip(tmp_path):
    path = tmp_path / "chart0.tsv"
    path.write_text("grain\tAnnealing\ttrue\nphase transition\ttoughness\tFALSE\n")
    chart = TrainingChart.parse(path, LEX)
    assert chart.relations == {("annealing", "grain"): True, ("phase_transition", "toughness"): False}
    path.write_text(chart.to_tsv())
    assert TrainingChart.parse(path, LEX) == chart


@pytest.mark.parametrize("text,field", [
    ("grain\tannealing\n", None),
    ("grain\tannealing\tmaybe\n", "relation"),
    ("grain\tsteel\ttrue\n", "e_j"),
])
def test_chart_parse_errors_name_line_and_field(tmp_path, text, field):
    path = tmp_path / "bad.tsv"
    path.write_text("phase\tannealing\ttrue\n" + text)
    with pytest.raises(DataFormatError) as err:
        TrainingChart.parse(path, LEX)
    assert err.value.line == 2 and err.value.field == field
    assert "bad.tsv" in str(err.value)


def test_lexicon_roundtrip(tmp_path):
    path = tmp_path / "lex.tsv"
    path.write_text(LEX.to_tsv())
    assert EntityLexicon.read(path).entries == LEX.entries


def test_lexicon_rejects_unknown_category(tmp_path):
    path = tmp_path / "lex.tsv"
    path.write_text("grain\tStructure\nsteel\tMaterial\n")
    with pytest.raises(DataFormatError) as err:
        EntityLexicon.read(path)
    assert err.value.line == 2


def test_missing_pairs():
    sets = build_sentence_sets([["annealing", "grain"]], LEX)
    chart = TrainingChart("c", {("annealing", "grain"): True, ("grain", "toughness"): False})
    assert missing_pairs(sets, [chart]) == [("grain", "toughness")]


def test_corpus_roundtrip(tmp_path):
    corpus = [["a", "b"], ["c"]]
    write_corpus(tmp_path / "c.jsonl", corpus)
    assert read_corpus(tmp_path / "c.jsonl") == corpus


def test_canonicalize():
    assert canonicalize("  Creep   Strength ") == "creep_strength"


def test_held_out_chart_split():
    lex = EntityLexicon({f"p{i}": "Process" for i in range(4)} | {f"s{i}": "Structure" for i in range(4)})
    charts = [TrainingChart(f"c{i}", {(f"p{i}", f"s{i}"): bool(i % 2)}) for i in range(4)]
    corpus = [[f"p{i}", f"s{i}"] for i in range(4) for _ in range(2)]
    labeled, _ = weak_label(build_sentence_sets(corpus, lex), charts)
    for held in range(4):
        train = [x for x in labeled if x.chart != held]
        test = [x for x in labeled if x.chart == held]
        assert not {x.pair for x in train} & {x.pair for x in test}
        assert len(train) == 6 and len(test) == 2
