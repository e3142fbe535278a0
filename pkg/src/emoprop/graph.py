"""In-memory multilingual lexical graph: synsets, lexical units, typed relations.

Nodes are identified by (kind, numeric id, language); edges carry a typed
relation whose category encodes the endpoint kinds (SS, SL, LS, LL) and an
inter-lingual flag.  Lexical units may carry a 26-dimensional annotation
vector (6 polarity grades, 8 basic emotions, 12 valuations) with entries
in [0, 1], interpretable as annotator agreement fractions.

The graph is built once (from a JSON-lines file or programmatically) and is
immutable by convention afterwards; adjacency is finalized lazily and reads
are safe from concurrent workers.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, NamedTuple

import numpy as np

SYNSET = "synset"
LEXICAL_UNIT = "lu"
NODE_KINDS = (SYNSET, LEXICAL_UNIT)

EDGE_CATEGORIES = ("SS", "SL", "LS", "LL")

# Annotation dimensions in storage order: sentiment polarity (6 grades),
# basic emotions (8), fundamental valuations (12).
DIMENSIONS = (
    "pol_strong_positive",
    "pol_weak_positive",
    "pol_strong_negative",
    "pol_weak_negative",
    "pol_ambivalent",
    "pol_neutral",
    "emo_joy",
    "emo_fear",
    "emo_surprise",
    "emo_sadness",
    "emo_disgust",
    "emo_anger",
    "emo_trust",
    "emo_anticipation",
    "val_nonusefulness",
    "val_mistake",
    "val_ugliness",
    "val_goodness",
    "val_harm",
    "val_ignorance",
    "val_unhappiness",
    "val_beauty",
    "val_truth",
    "val_happiness",
    "val_usefulness",
    "val_knowledge",
)
NUM_DIMENSIONS = len(DIMENSIONS)
DIMENSION_INDEX = {name: i for i, name in enumerate(DIMENSIONS)}

_KIND_LETTER = {SYNSET: "S", LEXICAL_UNIT: "L"}
_LETTER_KIND = {"S": SYNSET, "L": LEXICAL_UNIT}


class GraphError(ValueError):
    """Malformed graph input or violated graph contract."""


class NodeId(NamedTuple):
    """Graph node identity; unique per graph by (kind, id), scoped by language."""

    kind: str
    id: int
    lang: str


class RelationType(NamedTuple):
    name: str
    category: str
    interlingual: bool


class Edge(NamedTuple):
    src: NodeId
    dst: NodeId
    rel: RelationType


def _expected_kinds(category: str) -> tuple[str, str]:
    return _LETTER_KIND[category[0]], _LETTER_KIND[category[1]]


def validate_annotation(values: Iterable[float], where: str = "annotation") -> np.ndarray:
    """Coerce to a float vector of exactly NUM_DIMENSIONS finite entries."""
    arr = np.asarray(list(values), dtype=np.float64)
    if arr.shape != (NUM_DIMENSIONS,):
        raise GraphError(f"{where}: expected {NUM_DIMENSIONS} values, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise GraphError(f"{where}: non-finite annotation value")
    return arr


@dataclass
class WordNetGraph:
    """Typed multigraph of synsets and lexical units with annotation store.

    Edges are stored as given (directed) but traversed bidirectionally; an
    edge contributes one adjacency entry to each endpoint, both reusing the
    forward relation.
    """

    nodes: set[NodeId] = field(default_factory=set)
    edges: list[Edge] = field(default_factory=list)
    annotations: dict[NodeId, np.ndarray] = field(default_factory=dict)
    lemmas: dict[NodeId, str] = field(default_factory=dict)
    _adjacency: dict[NodeId, list[tuple[Edge, NodeId]]] | None = field(
        default=None, repr=False, compare=False
    )

    def add_node(self, node: NodeId, lemma: str | None = None) -> None:
        if node.kind not in NODE_KINDS:
            raise GraphError(f"unknown node kind {node.kind!r}")
        if node.id < 0:
            raise GraphError(f"node id must be unsigned, got {node.id}")
        if not node.lang or not node.lang.isascii() or node.lang != node.lang.lower():
            raise GraphError(f"bad language code {node.lang!r}")
        if node in self.nodes:
            raise GraphError(f"duplicate node {node}")
        self.nodes.add(node)
        if lemma is not None:
            self.lemmas[node] = lemma
        self._adjacency = None

    def add_edge(self, edge: Edge) -> None:
        if edge.rel.category not in EDGE_CATEGORIES:
            raise GraphError(f"bad edge category {edge.rel.category!r}")
        if not edge.rel.name:
            raise GraphError("empty relation name")
        if edge.src not in self.nodes:
            raise GraphError(f"unknown endpoint {edge.src}")
        if edge.dst not in self.nodes:
            raise GraphError(f"unknown endpoint {edge.dst}")
        want_src, want_dst = _expected_kinds(edge.rel.category)
        if edge.src.kind != want_src or edge.dst.kind != want_dst:
            raise GraphError(
                f"category {edge.rel.category} does not match endpoint kinds "
                f"({edge.src.kind} -> {edge.dst.kind})"
            )
        self.edges.append(edge)
        self._adjacency = None

    def set_annotation(self, node: NodeId, values: Iterable[float]) -> None:
        if node not in self.nodes:
            raise GraphError(f"unknown endpoint {node}")
        if node.kind != LEXICAL_UNIT:
            raise GraphError(f"annotation target {node} is not a lexical unit")
        self.annotations[node] = validate_annotation(values, where=f"annotation for {node}")

    def _build_adjacency(self) -> dict[NodeId, list[tuple[Edge, NodeId]]]:
        adj: dict[NodeId, list[tuple[Edge, NodeId]]] = {n: [] for n in self.nodes}
        for e in self.edges:
            adj[e.src].append((e, e.dst))
            adj[e.dst].append((e, e.src))
        for entries in adj.values():
            entries.sort(key=lambda pair: (pair[1], pair[0].rel.name))
        return adj

    @property
    def adjacency(self) -> dict[NodeId, list[tuple[Edge, NodeId]]]:
        if self._adjacency is None:
            self._adjacency = self._build_adjacency()
        return self._adjacency

    def neighbors(self, node: NodeId) -> list[tuple[Edge, NodeId]]:
        """All incident edges of ``node``, both directions, in deterministic
        order (neighbor (kind, id, lang), then relation name)."""
        if node not in self.nodes:
            raise GraphError(f"unknown node {node}")
        return list(self.adjacency[node])

    def languages(self) -> list[str]:
        return sorted({n.lang for n in self.nodes})

    def lexical_units(self) -> list[NodeId]:
        return sorted(n for n in self.nodes if n.kind == LEXICAL_UNIT)

    def synsets(self) -> list[NodeId]:
        return sorted(n for n in self.nodes if n.kind == SYNSET)


def _parse_node_ref(obj: object, lineno: int) -> NodeId:
    if not (isinstance(obj, list) and len(obj) == 3):
        raise GraphError(f"line {lineno}: node reference must be [kind, id, lang], got {obj!r}")
    kind, num, lang = obj
    if kind not in NODE_KINDS:
        raise GraphError(f"line {lineno}: unknown kind {kind!r} in node reference")
    if not isinstance(num, int) or isinstance(num, bool):
        raise GraphError(f"line {lineno}: node id must be an integer, got {num!r}")
    if not isinstance(lang, str):
        raise GraphError(f"line {lineno}: language must be a string, got {lang!r}")
    return NodeId(kind, num, lang)


def parse_wordnet_file(path: str | Path) -> WordNetGraph:
    """Parse a JSON-lines graph file into a validated WordNetGraph.

    One object per line with a ``kind`` field in {synset, lu, edge,
    annotation}.  Node definitions may appear in any order relative to the
    edges that reference them; duplicate nodes, unknown endpoints and
    malformed lines are errors reported with their line number.
    """
    path = Path(path)
    records: list[tuple[int, dict]] = []
    with path.open("r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise GraphError(f"line {lineno}: malformed JSON ({exc.msg})") from exc
            if not isinstance(obj, dict) or "kind" not in obj:
                raise GraphError(f"line {lineno}: expected an object with a 'kind' field")
            records.append((lineno, obj))

    g = WordNetGraph()
    deferred: list[tuple[int, dict]] = []
    for lineno, obj in records:
        kind = obj["kind"]
        if kind in (SYNSET, LEXICAL_UNIT):
            extra = set(obj) - {"kind", "id", "lang", "lemma"}
            if extra:
                raise GraphError(f"line {lineno}: unknown field {sorted(extra)[0]!r}")
            try:
                num = obj["id"]
                lang = obj["lang"]
            except KeyError as exc:
                raise GraphError(f"line {lineno}: missing field {exc.args[0]!r}") from exc
            if not isinstance(num, int) or isinstance(num, bool):
                raise GraphError(f"line {lineno}: node id must be an integer, got {num!r}")
            lemma = obj.get("lemma")
            if lemma is not None and kind != LEXICAL_UNIT:
                raise GraphError(f"line {lineno}: lemma is only valid on lexical units")
            try:
                g.add_node(NodeId(kind, num, lang), lemma=lemma)
            except GraphError as exc:
                raise GraphError(f"line {lineno}: {exc}") from exc
        elif kind in ("edge", "annotation"):
            deferred.append((lineno, obj))
        else:
            raise GraphError(f"line {lineno}: unknown kind {kind!r}")

    for lineno, obj in deferred:
        if obj["kind"] == "edge":
            extra = set(obj) - {"kind", "src", "dst", "rel", "category", "interlingual"}
            if extra:
                raise GraphError(f"line {lineno}: unknown field {sorted(extra)[0]!r}")
            for key in ("src", "dst", "rel", "category", "interlingual"):
                if key not in obj:
                    raise GraphError(f"line {lineno}: missing field {key!r}")
            src = _parse_node_ref(obj["src"], lineno)
            dst = _parse_node_ref(obj["dst"], lineno)
            rel_name = obj["rel"]
            category = obj["category"]
            inter = obj["interlingual"]
            if not isinstance(rel_name, str) or not rel_name:
                raise GraphError(f"line {lineno}: relation name must be a non-empty string")
            if category not in EDGE_CATEGORIES:
                raise GraphError(f"line {lineno}: bad edge category {category!r}")
            if not isinstance(inter, bool):
                raise GraphError(f"line {lineno}: interlingual must be a boolean")
            try:
                g.add_edge(Edge(src, dst, RelationType(rel_name, category, inter)))
            except GraphError as exc:
                raise GraphError(f"line {lineno}: {exc}") from exc
        else:
            extra = set(obj) - {"kind", "lu", "values"}
            if extra:
                raise GraphError(f"line {lineno}: unknown field {sorted(extra)[0]!r}")
            ref = obj.get("lu")
            if not (isinstance(ref, list) and len(ref) == 2):
                raise GraphError(f"line {lineno}: annotation 'lu' must be [id, lang]")
            num, lang = ref
            if not isinstance(num, int) or isinstance(num, bool) or not isinstance(lang, str):
                raise GraphError(f"line {lineno}: annotation 'lu' must be [id, lang]")
            node = NodeId(LEXICAL_UNIT, num, lang)
            if "values" not in obj:
                raise GraphError(f"line {lineno}: missing field 'values'")
            if node in g.annotations:
                raise GraphError(f"line {lineno}: duplicate annotation for {node}")
            try:
                g.set_annotation(node, obj["values"])
            except GraphError as exc:
                raise GraphError(f"line {lineno}: {exc}") from exc
    return g


def write_wordnet_file(g: WordNetGraph, path: str | Path) -> None:
    """Serialize a graph to the JSON-lines format read by parse_wordnet_file.

    Output order is deterministic: sorted nodes, then edges in insertion
    order, then sorted annotations.
    """
    path = Path(path)
    with path.open("w", encoding="utf-8") as fh:
        for node in sorted(g.nodes):
            obj: dict = {"kind": node.kind, "id": node.id, "lang": node.lang}
            lemma = g.lemmas.get(node)
            if lemma is not None:
                obj["lemma"] = lemma
            fh.write(json.dumps(obj, ensure_ascii=False, sort_keys=False) + "\n")
        for e in g.edges:
            obj = {
                "kind": "edge",
                "src": [e.src.kind, e.src.id, e.src.lang],
                "dst": [e.dst.kind, e.dst.id, e.dst.lang],
                "rel": e.rel.name,
                "category": e.rel.category,
                "interlingual": e.rel.interlingual,
            }
            fh.write(json.dumps(obj, ensure_ascii=False) + "\n")
        for node in sorted(g.annotations):
            values = [float(v) for v in g.annotations[node]]
            obj = {"kind": "annotation", "lu": [node.id, node.lang], "values": values}
            fh.write(json.dumps(obj, ensure_ascii=False) + "\n")


@dataclass
class ValidationReport:
    """Report-only integrity check results for a WordNetGraph."""

    dangling_endpoints: list[Edge] = field(default_factory=list)
    interlingual_mismatches: list[Edge] = field(default_factory=list)
    annotation_range_violations: list[NodeId] = field(default_factory=list)
    nodes_by_language: dict[str, int] = field(default_factory=dict)
    edges_by_category: dict[str, int] = field(default_factory=dict)
    annotation_count: int = 0

    @property
    def num_violations(self) -> int:
        return (
            len(self.dangling_endpoints)
            + len(self.interlingual_mismatches)
            + len(self.annotation_range_violations)
        )

    @property
    def ok(self) -> bool:
        return self.num_violations == 0

    def summary(self) -> str:
        lines = [
            f"nodes by language: {self.nodes_by_language}",
            f"edges by category: {self.edges_by_category}",
            f"annotations: {self.annotation_count}",
            f"violations: {self.num_violations}",
        ]
        for e in self.interlingual_mismatches:
            lines.append(f"  interlingual flag mismatch: {e.src} -> {e.dst} ({e.rel.name})")
        for n in self.annotation_range_violations:
            lines.append(f"  annotation out of [0,1]: {n}")
        for e in self.dangling_endpoints:
            lines.append(f"  dangling endpoint: {e}")
        return "\n".join(lines)


def validate_graph(g: WordNetGraph) -> ValidationReport:
    """Check edge flags and annotation ranges; never raises."""
    report = ValidationReport()
    for n in g.nodes:
        report.nodes_by_language[n.lang] = report.nodes_by_language.get(n.lang, 0) + 1
    for e in g.edges:
        report.edges_by_category[e.rel.category] = (
            report.edges_by_category.get(e.rel.category, 0) + 1
        )
        if e.src not in g.nodes or e.dst not in g.nodes:
            report.dangling_endpoints.append(e)
        if e.rel.interlingual != (e.src.lang != e.dst.lang):
            report.interlingual_mismatches.append(e)
    for node, values in g.annotations.items():
        if np.any(values < 0.0) or np.any(values > 1.0):
            report.annotation_range_violations.append(node)
    report.annotation_count = len(g.annotations)
    return report
