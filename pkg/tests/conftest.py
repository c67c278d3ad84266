import numpy as np
import pytest

from refreader.data import Question, Vocab
from refreader.encoder import EncoderConfig
from refreader.reader import HeadConfig, Reader


def toy_question(num_paragraphs=2, qid="toy"):
    paragraphs, mentions = [], {}
    base = [["w1", "@ent1", "founded", "@ent0", "w2"], ["@ent2", "w3", "@ent1", "owns", "w1"],
            ["w2", "@ent2", "w2", "@ent0"]]
    for k in range(num_paragraphs):
        para = base[k % len(base)]
        paragraphs.append(list(para))
        for t, tok in enumerate(para):
            if tok.startswith("@ent"):
                mentions.setdefault(tok, []).append((k, t))
    return Question(qid, "founded owns", "@ent0", paragraphs, ["@ent1", "@ent2"], "@ent2", mentions)


def tiny_reader(questions, seed=0, dim=8, layers=1, dropout=0.0):
    vocab = Vocab.build(questions, [f"@ent{i}" for i in range(6)])
    cfg = EncoderConfig(len(vocab), num_layers=layers, model_dim=dim, num_heads=2, ffn_dim=2 * dim,
                        max_positions=64, dropout_p=dropout)
    return Reader(cfg, HeadConfig(6), vocab, seed=seed)


@pytest.fixture
def toy():
    q = toy_question()
    return q, tiny_reader([q])


def random_question(rng, num_paragraphs, length=8, candidates=3, qid="r"):
    ents = [f"@ent{i}" for i in range(candidates + 1)]
    paragraphs, mentions = [], {}
    for k in range(num_paragraphs):
        para = [f"w{int(i)}" for i in rng.integers(6, size=length)]
        for e in ents:
            if rng.random() < 0.7:
                t = int(rng.integers(length))
                para[t] = e
        for t, tok in enumerate(para):
            if tok in ents:
                mentions.setdefault(tok, []).append((k, t))
        paragraphs.append(para)
    answer = ents[1 + int(rng.integers(candidates))]
    return Question(qid, "founded", ents[0], paragraphs, ents[1:], answer, mentions)
