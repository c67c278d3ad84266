"""Synthetic multi-hop questions and relation-extraction corpora.

Multi-hop questions ask for the entity ``x`` linked to the query entity by both
halves of a composite relation ``(ra, rb)``: ``q ra x`` is stated in one
paragraph and ``x rb q`` in another. Each bridging paragraph also states the
same fact for a different distractor, so either paragraph alone leaves two
candidates tied and only their combination singles out the answer.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .data import Question

RELATION_WORDS = ("founded", "located", "member", "owns", "leads", "hosts", "borders", "supplies")
FILLER_WORDS = ("the", "a", "of", "in", "was", "is", "and", "with", "by", "for", "on", "at",
                "from", "later", "early", "known", "also", "which", "its", "large")


class GenerationError(ValueError):
    pass


@dataclass
class SyntheticKb:
    entities: list[str]
    relations: list[str]
    filler: list[str] = field(default_factory=lambda: list(FILLER_WORDS))
    templates: dict[str, list[list[str]]] = field(default_factory=dict)

    def __post_init__(self):
        if not self.templates:
            # X/Y are the subject/object slots; r is the relation word
            self.templates = {r: [["X", r, "Y", "."], ["X", "is", r, "by", "Y", "."],
                                  ["X", "also", r, "Y", "."]] for r in self.relations}

    @classmethod
    def default(cls, num_entities: int = 400, num_relations: int = 8) -> "SyntheticKb":
        if num_relations > len(RELATION_WORDS):
            raise GenerationError(f"at most {len(RELATION_WORDS)} relations available")
        return cls([f"ent{i}" for i in range(num_entities)], list(RELATION_WORDS[:num_relations]))


def _sentence(kb: SyntheticKb, subj: str, rel: str, obj: str, rng: np.random.Generator) -> list[str]:
    forms = kb.templates[rel]
    form = forms[int(rng.integers(len(forms)))]
    return [subj if tok == "X" else obj if tok == "Y" else tok for tok in form]


def _filler(kb: SyntheticKb, rng: np.random.Generator) -> list[str]:
    n = int(rng.integers(3, 7))
    return [kb.filler[int(i)] for i in rng.integers(len(kb.filler), size=n)] + ["."]


def _paragraph(kb, facts, rng, noise_sentences: int) -> list[str]:
    sentences = [_sentence(kb, s, r, o, rng) for s, r, o in facts]
    sentences += [_filler(kb, rng) for _ in range(noise_sentences)]
    order = rng.permutation(len(sentences))
    return [tok for i in order for tok in sentences[int(i)]]


def _index_mentions(paragraphs: list[list[str]], entities: set[str]) -> dict[str, list[tuple[int, int]]]:
    mentions: dict[str, list[tuple[int, int]]] = {}
    for k, para in enumerate(paragraphs):
        for t, tok in enumerate(para):
            if tok in entities:
                mentions.setdefault(tok, []).append((k, t))
    return dict(sorted(mentions.items()))


def anonymize(question: Question, rng: np.random.Generator, pool: int) -> Question:
    """Rename every entity to a fresh random ``@entK`` id, question-locally."""
    ents = sorted({question.query_entity, *question.candidates, *question.mentions})
    if len(ents) > pool:
        raise GenerationError(f"{len(ents)} entities exceed the anonymization pool of {pool}")
    ids = rng.permutation(pool)[: len(ents)]
    rename = {e: f"@ent{int(i)}" for e, i in zip(ents, ids)}
    return Question(
        id=question.id,
        query_relation=question.query_relation,
        query_entity=rename[question.query_entity],
        paragraphs=[[rename.get(t, t) for t in p] for p in question.paragraphs],
        candidates=[rename[c] for c in question.candidates],
        answer=rename[question.answer],
        mentions={rename[e]: list(v) for e, v in question.mentions.items()},
    )


def reanonymize(question: Question, rng: np.random.Generator, pool: int) -> Question:
    """Fresh ``@ent`` assignment plus a shuffled candidate order."""
    q = anonymize(question, rng, pool)
    order = rng.permutation(len(q.candidates))
    q.candidates = [q.candidates[int(i)] for i in order]
    q.mentions = dict(sorted(q.mentions.items()))
    return q


def gen_question(kb: SyntheticKb, hops: int, rng: np.random.Generator, qid: str,
                 num_distractor_paragraphs: int = 2, num_distractors: int = 3) -> Question:
    if hops not in (1, 2):
        raise GenerationError("hops must be 1 or 2")
    need_rel = hops + 1
    if len(kb.relations) < need_rel + 1:
        raise GenerationError("knowledge base has too few relations for the requested hops")
    n_cand = 1 + max(num_distractors, hops)
    need_ent = 1 + n_cand + 2 * num_distractor_paragraphs
    if len(kb.entities) < need_ent:
        raise GenerationError(f"knowledge base has {len(kb.entities)} entities, {need_ent} needed")
    picked = [kb.entities[int(i)] for i in rng.choice(len(kb.entities), need_ent, replace=False)]
    q_e, answer, *rest = picked
    distractors, others = rest[: n_cand - 1], rest[n_cand - 1:]
    rels = [kb.relations[int(i)] for i in rng.permutation(len(kb.relations))]
    query_rels, other_rels = rels[:hops], rels[hops:]

    bridging = []
    if hops == 1:
        bridging.append([(q_e, query_rels[0], answer)])
    else:
        ra, rb = query_rels
        bridging.append([(q_e, ra, answer), (q_e, ra, distractors[0])])
        bridging.append([(answer, rb, q_e), (distractors[1], rb, q_e)])
    loose = distractors[hops - 1:] if hops == 2 else distractors
    extra = []
    for j in range(num_distractor_paragraphs):
        a_ent = loose[j % len(loose)]
        facts = [(a_ent, other_rels[int(rng.integers(len(other_rels)))], others[2 * j]),
                 (others[2 * j + 1], other_rels[int(rng.integers(len(other_rels)))], a_ent)]
        extra.append(facts)
    paragraphs_facts = bridging + extra
    order = rng.permutation(len(paragraphs_facts))
    paragraphs = [_paragraph(kb, paragraphs_facts[int(i)], rng, int(rng.integers(0, 3))) for i in order]
    candidates = [answer, *distractors]
    candidates = [candidates[int(i)] for i in rng.permutation(len(candidates))]
    mentions = _index_mentions(paragraphs, set(picked))
    return Question(qid, " ".join(query_rels), q_e, paragraphs, candidates, answer, mentions)


def gen_wikihop(kb: SyntheticKb, count: int, hops: int, seed: int, anonymize_entities: bool = True,
                pool: int = 24, **kwargs) -> list[Question]:
    """``count`` questions; a pure function of its arguments."""
    if hops < 1:
        raise GenerationError("hops must be >= 1")
    rng = np.random.default_rng(seed)
    out = []
    for i in range(count):
        q = gen_question(kb, hops, rng, f"q{seed}-{i}", **kwargs)
        out.append(anonymize(q, rng, pool) if anonymize_entities else q)
    return out


# KB reasoning oracle ---------------------------------------------------------

def extract_facts(kb: SyntheticKb, paragraph: list[str], entities: set[str]) -> set[tuple[str, str, str]]:
    """Recover (subject, relation, object) triples from templated sentences."""
    facts = set()
    sentence: list[str] = []
    for tok in paragraph + ["."]:
        if tok != ".":
            sentence.append(tok)
            continue
        ents = [t for t in sentence if t in entities]
        rels = [t for t in sentence if t in kb.relations]
        if len(ents) == 2 and len(rels) == 1:
            facts.add((ents[0], rels[0], ents[1]))
        sentence = []
    return facts


def solve(kb: SyntheticKb, question: Question, visible: list[int] | None = None) -> list[str]:
    """Candidates satisfying the most query constraints given the visible paragraphs."""
    visible = range(len(question.paragraphs)) if visible is None else visible
    entities = {question.query_entity, *question.candidates, *question.mentions}
    facts = set()
    for k in visible:
        facts |= extract_facts(kb, question.paragraphs[k], entities)
    rels = question.query_relation.split()
    q = question.query_entity

    def satisfied(c):
        if len(rels) == 1:
            return int((q, rels[0], c) in facts)
        return int((q, rels[0], c) in facts) + int((c, rels[1], q) in facts)

    counts = {c: satisfied(c) for c in question.candidates}
    best = max(counts.values())
    return [c for c in question.candidates if counts[c] == best]


# relation-extraction world -----------------------------------------------------

PROCESS_HEADS = ("annealing", "rolling", "quenching", "aging", "forging", "sintering", "welding",
                 "tempering", "extrusion", "casting", "milling", "drawing")
STRUCTURE_HEADS = ("grain", "precipitate", "phase", "dislocation", "twin", "carbide", "martensite",
                   "ferrite", "pore", "boundary", "lamella", "texture")
PROPERTIES = ("toughness", "creep strength", "hardness", "ductility", "fatigue life", "yield strength")
TRIGGERS = ("causes", "improves", "promotes", "increases", "controls", "produces")
NEUTRAL = ("and", "or", "while", "whereas", "alongside", "versus")
SCI_FILLER = ("the", "samples", "were", "observed", "in", "this", "study", "alloy", "steel", "after",
              "we", "measured", "results", "show", "that", "for", "all", "specimens", "data", "at")


@dataclass
class ReWorld:
    lexicon: dict[str, str]
    charts: list[dict[tuple[str, str], bool]]


def gen_re_world(seed: int, num_charts: int = 4, processes: int = 4, structures: int = 5,
                 properties_per_chart: int = 2, positive_rate: float = 0.25) -> ReWorld:
    """Lexicon plus ``num_charts`` charts over disjoint processes/structures.

    Properties are shared across charts; every Process-Structure and
    Structure-Property pair inside a chart gets a label.
    """
    rng = np.random.default_rng(seed)
    lexicon: dict[str, str] = {p.replace(" ", "_"): "Property" for p in PROPERTIES}
    charts = []
    for c in range(num_charts):
        procs = [f"{PROCESS_HEADS[int(rng.integers(len(PROCESS_HEADS)))]}_{c}{i}" for i in range(processes)]
        structs = [f"{STRUCTURE_HEADS[int(rng.integers(len(STRUCTURE_HEADS)))]}_{c}{i}" for i in range(structures)]
        lexicon.update({p: "Process" for p in procs})
        lexicon.update({s: "Structure" for s in structs})
        props = [PROPERTIES[int(i)].replace(" ", "_")
                 for i in rng.choice(len(PROPERTIES), properties_per_chart, replace=False)]
        chart = {}
        for p in procs:
            for s in structs:
                chart[(p, s)] = bool(rng.random() < positive_rate)
        for s in structs:
            for q in props:
                chart[(s, q)] = bool(rng.random() < positive_rate)
        charts.append(chart)
    return ReWorld(dict(sorted(lexicon.items())), charts)


def gen_re_corpus(world: ReWorld, sentences_per_pair: float, signal_rate: float, seed: int,
                  unrelated: int = 0) -> list[list[str]]:
    """Sentences mentioning chart pairs; positives carry a trigger word w.p. ``signal_rate``.

    Sentence counts per pair are drawn independently of the label, and
    negatives only ever use neutral connectives.
    """
    if not 0.0 <= signal_rate <= 1.0:
        raise GenerationError("signal_rate must lie in [0, 1]")
    rng = np.random.default_rng(seed)

    def words(name):
        return name.split("_")

    def filler(lo, hi):
        return [SCI_FILLER[int(i)] for i in rng.integers(len(SCI_FILLER), size=int(rng.integers(lo, hi)))]

    corpus = []
    for chart in world.charts:
        for (a, b), positive in sorted(chart.items()):
            n = max(1, int(rng.poisson(sentences_per_pair)))
            for _ in range(n):
                signal = positive and rng.random() < signal_rate
                link = TRIGGERS if signal else NEUTRAL
                first, second = (a, b) if rng.random() < 0.5 else (b, a)
                sent = (filler(0, 4) + words(first) + filler(0, 3) + [link[int(rng.integers(len(link)))]]
                        + filler(0, 3) + words(second) + filler(0, 4) + ["."])
                corpus.append(sent)
    names = sorted(world.lexicon)
    for _ in range(unrelated):
        e = names[int(rng.integers(len(names)))]
        corpus.append(filler(2, 6) + words(e) + filler(1, 5) + ["."])
    order = rng.permutation(len(corpus))
    return [corpus[int(i)] for i in order]
