"""Question records, vocabulary, and the question JSONL format."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence


class DataFormatError(ValueError):
    """Malformed input file; carries enough context to find the offending field."""

    def __init__(self, path, line: int | None, field_name: str | None, message: str):
        self.path, self.line, self.field = str(path), line, field_name
        where = self.path if line is None else f"{self.path}:{line}"
        if field_name:
            where += f" [{field_name}]"
        super().__init__(f"{where}: {message}")


class EmptyPassage(ValueError):
    pass


@dataclass
class Question:
    id: str
    query_relation: str
    query_entity: str
    paragraphs: list[list[str]]
    candidates: list[str]
    answer: str
    mentions: dict[str, list[tuple[int, int]]] = field(default_factory=dict)

    def __post_init__(self):
        if self.answer not in self.candidates:
            raise ValueError(f"question {self.id}: answer {self.answer!r} is not a candidate")
        if len(set(self.candidates)) != len(self.candidates):
            raise ValueError(f"question {self.id}: duplicate candidates")
        for ent, spots in self.mentions.items():
            for k, t in spots:
                if not 0 <= k < len(self.paragraphs) or not 0 <= t < len(self.paragraphs[k]):
                    raise ValueError(f"question {self.id}: mention ({k}, {t}) of {ent} out of range")

    @property
    def question_tokens(self) -> list[str]:
        return [*self.query_relation.split(), self.query_entity]

    def positions(self, k: int, entity: str) -> list[int]:
        """R(para_k, entity): paragraph-local token positions, in stored order."""
        return [t for kk, t in self.mentions.get(entity, ()) if kk == k]

    def to_json(self) -> dict:
        return {
            "id": self.id,
            "query": {"relation": self.query_relation, "entity": self.query_entity},
            "paragraphs": [list(p) for p in self.paragraphs],
            "candidates": list(self.candidates),
            "answer": self.answer,
            "mentions": {e: [[k, t] for k, t in spots] for e, spots in self.mentions.items()},
        }

    @classmethod
    def from_json(cls, doc: dict) -> "Question":
        return cls(
            id=str(doc["id"]),
            query_relation=doc["query"]["relation"],
            query_entity=doc["query"]["entity"],
            paragraphs=[list(p) for p in doc["paragraphs"]],
            candidates=list(doc["candidates"]),
            answer=doc["answer"],
            mentions={e: [(int(k), int(t)) for k, t in spots] for e, spots in doc["mentions"].items()},
        )


def dump_questions(questions: Iterable[Question]) -> str:
    return "".join(json.dumps(q.to_json(), separators=(",", ":")) + "\n" for q in questions)


def write_questions(path, questions: Iterable[Question]) -> None:
    Path(path).write_text(dump_questions(questions))


def read_questions(path) -> list[Question]:
    out = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                doc = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DataFormatError(path, lineno, None, f"invalid JSON ({exc.msg})") from None
            for key in ("id", "query", "paragraphs", "candidates", "answer", "mentions"):
                if key not in doc:
                    raise DataFormatError(path, lineno, key, "missing field")
            try:
                out.append(Question.from_json(doc))
            except (KeyError, TypeError) as exc:
                raise DataFormatError(path, lineno, "query", f"bad structure: {exc}") from None
            except ValueError as exc:
                raise DataFormatError(path, lineno, "mentions", str(exc)) from None
    return out


SPECIALS = ("[PAD]", "[SEP]", "[UNK]")
UNK = "[UNK]"


class Vocab:
    def __init__(self, tokens: Sequence[str]):
        tokens = list(tokens)
        if tuple(tokens[: len(SPECIALS)]) != SPECIALS:
            tokens = [*SPECIALS, *(t for t in tokens if t not in SPECIALS)]
        self.tokens = tokens
        self.index = {t: i for i, t in enumerate(tokens)}
        if len(self.index) != len(tokens):
            raise ValueError("duplicate vocabulary entries")

    def __len__(self) -> int:
        return len(self.tokens)

    def __contains__(self, token: str) -> bool:
        return token in self.index

    def id(self, token: str) -> int:
        return self.index.get(token, self.index[UNK])

    def ids(self, tokens: Iterable[str]) -> list[int]:
        return [self.id(t) for t in tokens]

    @classmethod
    def build(cls, questions: Iterable[Question], extra: Iterable[str] = ()) -> "Vocab":
        seen = set(extra)
        for q in questions:
            seen.update(q.question_tokens)
            for p in q.paragraphs:
                seen.update(p)
        return cls([*SPECIALS, *sorted(seen - set(SPECIALS))])

    def to_json(self) -> list[str]:
        return list(self.tokens)
