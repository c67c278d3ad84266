"""PSPP chart extraction from a scored process/structure/property graph.

Flow runs from processes through structures to the target properties, so a
structure's capacity is bounded by both what processes can feed it and what
the targets can absorb. Selection is greedy: top-``m`` structures by
capacity, then top-``n`` processes by capacity toward those structures.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from typing import Iterable, Mapping, Sequence

from .weak_supervision import ALLOWED_EDGES


class CategoryError(ValueError):
    pass


@dataclass
class PsppGraph:
    categories: dict[str, str]
    scores: dict[tuple[str, str], float] = field(default_factory=dict)
    sentences: dict[tuple[str, str], str] = field(default_factory=dict)

    def __post_init__(self):
        for (a, b), p in self.scores.items():
            cats = frozenset((self.categories[a], self.categories[b]))
            if cats not in ALLOWED_EDGES:
                raise CategoryError(f"no relation may link {a} and {b}")
            if not 0.0 <= p <= 1.0:
                raise ValueError(f"score {p} for {(a, b)} is not a probability")

    def score(self, a: str, b: str) -> float:
        """P(r=True | a, b); pairs without evidence count as zero."""
        return self.scores.get((a, b), self.scores.get((b, a), 0.0))

    def sentence(self, a: str, b: str) -> str | None:
        return self.sentences.get((a, b), self.sentences.get((b, a)))

    def of(self, category: str) -> list[str]:
        return sorted(e for e, c in self.categories.items() if c == category)

    def _require(self, e: str, category: str) -> None:
        if self.categories.get(e) != category:
            raise CategoryError(f"{e!r} is {self.categories.get(e)!r}, expected {category}")


def structure_capacity(e: str, processes: Iterable[str], properties: Iterable[str], graph: PsppGraph) -> float:
    graph._require(e, "Structure")
    feed = sum(graph.score(e, p) for p in processes)
    drain = sum(graph.score(q, e) for q in properties)
    return min(feed, drain)


def process_capacity(e: str, structures: Iterable[str], graph: PsppGraph) -> float:
    graph._require(e, "Process")
    return sum(graph.score(e, s) for s in structures)


@dataclass
class ChartNode:
    name: str
    category: str
    capacity: float | None = None


@dataclass
class ChartEdge:
    source: str
    target: str
    score: float
    sentence: str | None = None


@dataclass
class Chart:
    properties: list[str]
    structures: list[ChartNode]
    processes: list[ChartNode]
    edges: list[ChartEdge]
    n: int
    m: int
    shortfall: dict[str, int] = field(default_factory=dict)

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "Chart":
        doc = json.loads(text)
        return cls(
            properties=list(doc["properties"]),
            structures=[ChartNode(**s) for s in doc["structures"]],
            processes=[ChartNode(**p) for p in doc["processes"]],
            edges=[ChartEdge(**e) for e in doc["edges"]],
            n=doc["n"], m=doc["m"], shortfall=dict(doc["shortfall"]),
        )

    def to_dot(self) -> str:
        def q(s):
            return '"' + s.replace('"', '\\"') + '"'

        lines = ["digraph pspp {", "  rankdir=LR;", "  node [shape=box];"]
        columns = (("process", [p.name for p in self.processes]),
                   ("structure", [s.name for s in self.structures]),
                   ("property", self.properties))
        for label, names in columns:
            lines.append(f"  subgraph cluster_{label} {{")
            lines.append(f"    label={q(label)}; rank=same;")
            lines += [f"    {q(n)};" for n in names]
            lines.append("  }")
        for e in self.edges:
            lines.append(f"  {q(e.source)} -> {q(e.target)} [label={q(f'{e.score:.3f}')}];")
        lines.append("}")
        return "\n".join(lines) + "\n"


def _top(names: Sequence[str], capacity: Mapping[str, float], k: int) -> list[str]:
    return sorted(names, key=lambda e: (-capacity[e], e))[:k]


def build_chart(graph: PsppGraph, properties: Sequence[str], n: int, m: int,
                all_structures: bool = False) -> Chart:
    """Greedy chart with at most ``n`` processes and ``m`` structures.

    Process capacity is measured against the selected structures, or against
    every structure when ``all_structures`` is set.
    """
    if n < 1 or m < 1:
        raise ValueError("n and m must be at least 1")
    for p in properties:
        graph._require(p, "Property")
    props = sorted(set(properties))
    procs, structs = graph.of("Process"), graph.of("Structure")
    s_cap = {s: structure_capacity(s, procs, props, graph) for s in structs}
    chosen_s = _top(structs, s_cap, m)
    basis = structs if all_structures else chosen_s
    p_cap = {p: process_capacity(p, basis, graph) for p in procs}
    chosen_p = _top(procs, p_cap, n)

    edges = []
    for p in chosen_p:
        for s in chosen_s:
            if (p, s) in graph.scores or (s, p) in graph.scores:
                edges.append(ChartEdge(p, s, graph.score(p, s), graph.sentence(p, s)))
    for s in chosen_s:
        for q in props:
            if (s, q) in graph.scores or (q, s) in graph.scores:
                edges.append(ChartEdge(s, q, graph.score(s, q), graph.sentence(s, q)))
    shortfall = {}
    if len(chosen_p) < n:
        shortfall["processes"] = n - len(chosen_p)
    if len(chosen_s) < m:
        shortfall["structures"] = m - len(chosen_s)
    return Chart(
        properties=props,
        structures=[ChartNode(s, "Structure", s_cap[s]) for s in chosen_s],
        processes=[ChartNode(p, "Process", p_cap[p]) for p in chosen_p],
        edges=edges, n=n, m=m, shortfall=shortfall,
    )
