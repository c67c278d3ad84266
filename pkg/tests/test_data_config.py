import json

import pytest
from hypothesis import given
from hypothesis import strategies as st

from refreader.config import ConfigError, RunConfig, from_dict, load
from refreader.data import DataFormatError, Question, Vocab, read_questions, write_questions
from refreader.synthetic import SyntheticKb, gen_wikihop


def test_question_jsonl_roundtrip(tmp_path):
    qs = gen_wikihop(SyntheticKb.default(), 5, 2, seed=0)
    write_questions(tmp_path / "q.jsonl", qs)
    assert read_questions(tmp_path / "q.jsonl") == qs


def test_question_schema():
    q = gen_wikihop(SyntheticKb.default(), 1, 2, seed=0)[0]
    doc = q.to_json()
    assert set(doc) == {"id", "query", "paragraphs", "candidates", "answer", "mentions"}
    assert set(doc["query"]) == {"relation", "entity"}


def test_bad_question_line_names_file_line_field(tmp_path):
    good = json.dumps(gen_wikihop(SyntheticKb.default(), 1, 2, seed=0)[0].to_json())
    doc = json.loads(good)
    del doc["answer"]
    path = tmp_path / "q.jsonl"
    path.write_text(good + "\n" + json.dumps(doc) + "\n")
    with pytest.raises(DataFormatError) as err:
        read_questions(path)
    assert err.value.line == 2 and err.value.field == "answer" and "q.jsonl" in str(err.value)


def test_invalid_json_line(tmp_path):
    path = tmp_path / "q.jsonl"
    path.write_text("{not json\n")
    with pytest.raises(DataFormatError) as err:
        read_questions(path)
    assert err.value.line == 1


def test_answer_must_be_candidate():
    with pytest.raises(ValueError):
        Question("x", "r", "@ent0", [["a"]], ["@ent1"], "@ent2", {})


def test_mentions_must_be_in_range():
    with pytest.raises(ValueError):
        Question("x", "r", "@ent0", [["a"]], ["@ent1"], "@ent1", {"@ent1": [(0, 3)]})


def test_vocab_specials_and_unknown():
    v = Vocab(["b", "a"])
    assert v.id("[PAD]") == 0 and v.id("[SEP]") == 1
    assert v.id("zzz") == v.id("[UNK]")
    assert Vocab(v.to_json()).tokens == v.tokens


def test_config_defaults_roundtrip():
    cfg = RunConfig()
    assert from_dict(json.loads(cfg.to_json())) == cfg


def test_config_rejects_unknown_keys():
    with pytest.raises(ConfigError, match="bogus"):
        from_dict({"cnn": {"bogus": 1}})
    with pytest.raises(ConfigError):
        from_dict({"nope": 1})


def test_config_overrides(tmp_path):
    path = tmp_path / "c.json"
    path.write_text(json.dumps({"seed": 3, "cnn": {"L": 50}}))
    cfg = load(str(path), ["cnn.lr=5e-5", "memprofile.paragraphs=1,3", "wikihop.anonymize=false"])
    assert (cfg.seed, cfg.cnn.L, cfg.cnn.lr) == (3, 50, 5e-5)
    assert cfg.memprofile.paragraphs == [1, 3] and cfg.wikihop.anonymize is False


def test_config_type_errors_name_the_key(tmp_path):
    with pytest.raises(ConfigError, match="cnn.L"):
        load(None, ["cnn.L=abc"])


def test_config_invalid_json_names_line(tmp_path):
    path = tmp_path / "c.json"
    path.write_text('{\n  "seed": 1,\n  oops\n}')
    with pytest.raises(ConfigError, match=r"c.json:3"):
        load(str(path))


@given(st.integers(0, 2**31), st.floats(1e-6, 1.0), st.booleans())
def test_config_dict_roundtrip(seed, lr, anon):
    cfg = from_dict({"seed": seed, "cnn": {"lr": lr}, "wikihop": {"anonymize": anon}})
    assert from_dict(cfg.to_dict()) == cfg
