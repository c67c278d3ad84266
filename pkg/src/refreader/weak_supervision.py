"""Distant supervision: lexicon mention matching, sentence sets, chart labels."""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .data import DataFormatError
from .relation_cnn import SentenceInstance

CATEGORIES = ("Process", "Structure", "Property")
ALLOWED_EDGES = {frozenset(("Process", "Structure")), frozenset(("Structure", "Property"))}


class ChartError(ValueError):
    pass


def canonicalize(name: str) -> str:
    return "_".join(name.lower().split())


class EntityLexicon:
    def __init__(self, entries: Mapping[str, str]):
        self.entries: dict[str, str] = {}
        for name, cat in entries.items():
            canon = canonicalize(name.replace("_", " "))
            if cat not in CATEGORIES:
                raise ValueError(f"unknown category {cat!r} for {name!r}")
            if canon in self.entries:
                raise ValueError(f"duplicate lexicon entry {canon!r}")
            self.entries[canon] = cat
        self._by_tokens = {tuple(name.split("_")): name for name in self.entries}
        self.max_len = max((len(t) for t in self._by_tokens), default=0)

    def __contains__(self, name: str) -> bool:
        return name in self.entries

    def category(self, name: str) -> str:
        return self.entries[name]

    def names(self, category: str | None = None) -> list[str]:
        return sorted(n for n, c in self.entries.items() if category is None or c == category)

    def lookup(self, tokens: Sequence[str]) -> str | None:
        return self._by_tokens.get(tuple(tokens))

    def to_tsv(self) -> str:
        return "".join(f"{n}\t{c}\n" for n, c in sorted(self.entries.items()))

    @classmethod
    def read(cls, path) -> "EntityLexicon":
        entries = {}
        for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
            if not line.strip():
                continue
            parts = line.split("\t")
            if len(parts) != 2:
                raise DataFormatError(path, lineno, "name/category", "expected 2 tab-separated fields")
            if parts[1] not in CATEGORIES:
                raise DataFormatError(path, lineno, "category", f"unknown category {parts[1]!r}")
            entries[parts[0]] = parts[1]
        try:
            return cls(entries)
        except ValueError as exc:
            raise DataFormatError(path, None, "name", str(exc)) from None


def match_mentions(tokens: Sequence[str], lexicon: EntityLexicon) -> list[tuple[str, int, int]]:
    """Max-span entity matches as ``(entity, start, end)`` with ``end`` exclusive.

    A match strictly inside a longer match is dropped; remaining overlaps go to
    the longer span, then the leftmost.
    """
    toks = [t.lower() for t in tokens]
    found = []
    for i in range(len(toks)):
        for j in range(i + 1, min(len(toks), i + lexicon.max_len) + 1):
            name = lexicon.lookup(toks[i:j])
            if name is not None:
                found.append((name, i, j))
    maximal = [m for m in found
               if not any(o[1] <= m[1] and m[2] <= o[2] and (o[2] - o[1]) > (m[2] - m[1]) for o in found)]
    taken: list[tuple[str, int, int]] = []
    for m in sorted(maximal, key=lambda m: (-(m[2] - m[1]), m[1])):
        if all(m[2] <= o[1] or o[2] <= m[1] for o in taken):
            taken.append(m)
    return sorted(taken, key=lambda m: m[1])


def pair_key(a: str, b: str, lexicon: EntityLexicon) -> tuple[str, str]:
    """Canonical orientation: Process before Structure before Property, then by name."""
    rank = {c: i for i, c in enumerate(CATEGORIES)}
    return tuple(sorted((a, b), key=lambda e: (rank[lexicon.category(e)], e)))


def build_sentence_sets(corpus: Iterable[Sequence[str]], lexicon: EntityLexicon) -> dict[tuple[str, str], list[SentenceInstance]]:
    """Every sentence joins the set of each entity pair it mentions.

    Mention positions are the first token of each entity's first occurrence.
    """
    sets: dict[tuple[str, str], list[SentenceInstance]] = {}
    for tokens in corpus:
        first: dict[str, int] = {}
        for name, start, _ in match_mentions(tokens, lexicon):
            first.setdefault(name, start)
        for a, b in itertools.combinations(sorted(first), 2):
            key = pair_key(a, b, lexicon)
            inst = SentenceInstance(list(tokens), first[key[0]], first[key[1]], key)
            sets.setdefault(key, []).append(inst)
    return dict(sorted(sets.items()))


@dataclass
class TrainingChart:
    name: str
    relations: dict[tuple[str, str], bool]

    def to_tsv(self) -> str:
        return "".join(f"{a}\t{b}\t{'true' if r else 'false'}\n" for (a, b), r in sorted(self.relations.items()))

    @classmethod
    def parse(cls, path, lexicon: EntityLexicon, name: str | None = None) -> "TrainingChart":
        relations: dict[tuple[str, str], bool] = {}
        for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
            if not line.strip():
                continue
            parts = line.split("\t")
            if len(parts) != 3:
                raise DataFormatError(path, lineno, None, "expected e_i<TAB>e_j<TAB>true|false")
            a, b, flag = canonicalize(parts[0].replace("_", " ")), canonicalize(parts[1].replace("_", " ")), parts[2].strip().lower()
            if flag not in ("true", "false"):
                raise DataFormatError(path, lineno, "relation", f"expected true or false, got {parts[2]!r}")
            for field_name, e in (("e_i", a), ("e_j", b)):
                if e not in lexicon:
                    raise DataFormatError(path, lineno, field_name, f"entity {e!r} not in lexicon")
            try:
                add_relation(relations, a, b, flag == "true", lexicon)
            except ChartError as exc:
                raise DataFormatError(path, lineno, None, str(exc)) from None
        return cls(name or Path(path).stem, relations)


def add_relation(relations: dict, a: str, b: str, value: bool, lexicon: EntityLexicon) -> None:
    cats = frozenset((lexicon.category(a), lexicon.category(b)))
    if cats not in ALLOWED_EDGES:
        raise ChartError(f"{a} ({lexicon.category(a)}) and {b} ({lexicon.category(b)}) cannot be related")
    key = pair_key(a, b, lexicon)
    if key in relations and relations[key] != value:
        raise ChartError(f"contradictory labels for {key}")
    relations[key] = value


def weak_label(sets: Mapping[tuple[str, str], Sequence[SentenceInstance]],
               charts: Sequence[TrainingChart]) -> tuple[list[SentenceInstance], list[SentenceInstance]]:
    """Labeled instances for chart pairs, unlabeled instances for every other pair."""
    owner: dict[tuple[str, str], tuple[int, bool]] = {}
    for ci, chart in enumerate(charts):
        for pair, value in chart.relations.items():
            if pair in owner and owner[pair][1] != value:
                raise ChartError(f"charts {owner[pair][0]} and {ci} disagree on {pair}")
            owner.setdefault(pair, (ci, value))
    labeled, unlabeled = [], []
    for pair, sentences in sets.items():
        for s in sentences:
            if pair in owner:
                ci, value = owner[pair]
                labeled.append(SentenceInstance(s.tokens, s.p1, s.p2, pair, value, ci))
            else:
                unlabeled.append(SentenceInstance(s.tokens, s.p1, s.p2, pair, None, None))
    return labeled, unlabeled


def missing_pairs(sets: Mapping, charts: Sequence[TrainingChart]) -> list[tuple[str, str]]:
    """Chart pairs that no sentence mentions; they cannot be scored."""
    return sorted({p for c in charts for p in c.relations} - set(sets))


def read_corpus(path) -> list[list[str]]:
    out = []
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        if not line.strip():
            continue
        try:
            doc = json.loads(line)
            tokens = doc["tokens"]
        except (json.JSONDecodeError, KeyError, TypeError):
            raise DataFormatError(path, lineno, "tokens", "expected {\"tokens\": [...]}") from None
        if not isinstance(tokens, list):
            raise DataFormatError(path, lineno, "tokens", "tokens must be a list")
        out.append([str(t) for t in tokens])
    return out


def write_corpus(path, corpus: Iterable[Sequence[str]]) -> None:
    Path(path).write_text("".join(json.dumps({"tokens": list(s)}) + "\n" for s in corpus))
