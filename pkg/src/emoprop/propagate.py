"""Annotation propagation over the lexical graph.

A regressor is trained on the annotated seed (inputs are LU embedding
vectors) and applied outward in breadth-first waves: wave k holds the
target LUs whose shortest path to the nearest seed LU is k hops, with
synsets acting as transit nodes.  Because the default mode keeps the
model frozen, wave order cannot affect predictions; an optional mode
folds each wave's raw predictions into the training set and retrains
before the next wave.  Targets with no path to any seed are predicted
with the seed-trained model and flagged with wave -1.
"""

from __future__ import annotations

import json
from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, Mapping, NamedTuple

import numpy as np

from .corpus import node_token
from .graph import LEXICAL_UNIT, NUM_DIMENSIONS, NodeId, WordNetGraph
from .mlp import MLPConfig, MLPModel, TrainReport, binarize, predict, train_mlp


class PropagationError(ValueError):
    """Invalid propagation inputs."""


class Wave(NamedTuple):
    distance: int
    lus: tuple[NodeId, ...]


class Prediction(NamedTuple):
    wave: int
    raw: np.ndarray
    labels: np.ndarray


@dataclass
class PropagationPlan:
    seed: tuple[NodeId, ...]
    targets: tuple[NodeId, ...]
    waves: list[Wave]
    unreachable: tuple[NodeId, ...]

    def reachable(self) -> list[NodeId]:
        return [lu for wave in self.waves for lu in wave.lus]


@dataclass
class PropagationResult:
    predictions: dict[NodeId, Prediction]
    plan: PropagationPlan
    report: TrainReport
    model: MLPModel
    wave_reports: list[TrainReport] = field(default_factory=list)


def _check_lu_nodes(g: WordNetGraph, nodes: Iterable[NodeId], role: str) -> None:
    for node in nodes:
        if node not in g.nodes:
            raise PropagationError(f"{role} node {node} is not in the graph")
        if node.kind != LEXICAL_UNIT:
            raise PropagationError(f"{role} node {node} is not a lexical unit")


def build_plan(
    g: WordNetGraph, seed: Iterable[NodeId], targets: Iterable[NodeId]
) -> PropagationPlan:
    """Multi-source BFS from the seed over the full graph.

    Wave k collects exactly the target LUs at shortest-path distance k
    from the nearest seed LU; waves with no targets are omitted.  Targets
    never reached go to `unreachable`.
    """
    seed_set = set(seed)
    target_set = set(targets)
    overlap = seed_set & target_set
    if overlap:
        sample = ", ".join(str(n) for n in sorted(overlap)[:5])
        raise PropagationError(f"seed and targets overlap: {sample}")
    _check_lu_nodes(g, sorted(seed_set), "seed")
    _check_lu_nodes(g, sorted(target_set), "target")

    visited = set(seed_set)
    frontier: deque[NodeId] = deque(sorted(seed_set))
    remaining = set(target_set)
    waves: list[Wave] = []
    distance = 0
    while frontier and remaining:
        distance += 1
        next_frontier: deque[NodeId] = deque()
        for node in frontier:
            for _edge, nb in g.neighbors(node):
                if nb not in visited:
                    visited.add(nb)
                    next_frontier.append(nb)
        hit = sorted(n for n in next_frontier if n in remaining)
        if hit:
            waves.append(Wave(distance=distance, lus=tuple(hit)))
            remaining.difference_update(hit)
        frontier = next_frontier
    return PropagationPlan(
        seed=tuple(sorted(seed_set)),
        targets=tuple(sorted(target_set)),
        waves=waves,
        unreachable=tuple(sorted(remaining)),
    )


def _embedding_matrix(embeddings, lus: Iterable[NodeId]) -> np.ndarray:
    lus = list(lus)
    if not lus:
        return np.zeros((0, embeddings.dim))
    return np.stack([embeddings.vector_of(node_token(lu)) for lu in lus])


def _annotation_matrix(annotations: Mapping[NodeId, np.ndarray], lus) -> np.ndarray:
    rows = []
    for lu in lus:
        vec = np.asarray(annotations[lu], dtype=np.float64)
        if vec.shape != (NUM_DIMENSIONS,):
            raise PropagationError(
                f"annotation for {lu} has shape {vec.shape}, expected ({NUM_DIMENSIONS},)"
            )
        rows.append(vec)
    return np.stack(rows) if rows else np.zeros((0, NUM_DIMENSIONS))


def propagate(
    g: WordNetGraph,
    embeddings,
    cfg: MLPConfig,
    seed: Mapping[NodeId, np.ndarray],
    val: Mapping[NodeId, np.ndarray],
    targets: Iterable[NodeId],
    retrain_per_wave: bool = False,
) -> PropagationResult:
    """Train on the seed, then predict targets wave by wave.

    With retrain_per_wave off (the default) every wave is predicted by
    the same frozen model, so the result is identical to one batch
    prediction.  With it on, each completed wave's raw predictions are
    appended to the training inputs and the model is retrained from
    scratch before the next wave; the validation set is never extended.
    """
    if not seed:
        raise PropagationError("seed annotations are empty")
    seed_ids = sorted(seed)
    val_ids = sorted(val)
    target_ids = sorted(set(targets))

    missing = [
        node_token(lu)
        for lu in (*seed_ids, *val_ids, *target_ids)
        if node_token(lu) not in embeddings
    ]
    if missing:
        raise PropagationError("missing embeddings for: " + ", ".join(missing))

    plan = build_plan(g, seed_ids, target_ids)

    x_train = _embedding_matrix(embeddings, seed_ids)
    y_train = _annotation_matrix(seed, seed_ids)
    x_val = _embedding_matrix(embeddings, val_ids)
    y_val = _annotation_matrix(val, val_ids)

    model, report = train_mlp(cfg, (x_train, y_train), (x_val, y_val))
    initial_model = model
    wave_reports: list[TrainReport] = []

    predictions: dict[NodeId, Prediction] = {}
    for wi, wave in enumerate(plan.waves):
        x_wave = _embedding_matrix(embeddings, wave.lus)
        raw = np.atleast_2d(predict(model, x_wave))
        labels = binarize(raw)
        for i, lu in enumerate(wave.lus):
            predictions[lu] = Prediction(wave.distance, raw[i].copy(), labels[i].copy())
        if retrain_per_wave and wi < len(plan.waves) - 1:
            x_train = np.concatenate([x_train, x_wave])
            y_train = np.concatenate([y_train, raw])
            model, wave_report = train_mlp(cfg, (x_train, y_train), (x_val, y_val))
            wave_reports.append(wave_report)

    if plan.unreachable:
        x_un = _embedding_matrix(embeddings, plan.unreachable)
        raw = np.atleast_2d(predict(initial_model, x_un))
        labels = binarize(raw)
        for i, lu in enumerate(plan.unreachable):
            predictions[lu] = Prediction(-1, raw[i].copy(), labels[i].copy())

    return PropagationResult(
        predictions=predictions,
        plan=plan,
        report=report,
        model=model,
        wave_reports=wave_reports,
    )


def save_propagation(result: PropagationResult, path) -> None:
    """One JSON object per predicted LU, waves first, unreachable last."""
    order = [*result.plan.reachable(), *result.plan.unreachable]
    with open(path, "w", encoding="utf-8") as fh:
        for lu in order:
            pred = result.predictions[lu]
            record = {
                "lu": [lu.id, lu.lang],
                "wave": pred.wave,
                "raw": [float(v) for v in pred.raw],
                "labels": [bool(b) for b in pred.labels],
            }
            fh.write(json.dumps(record, ensure_ascii=False) + "\n")


def load_propagation(path) -> dict[NodeId, Prediction]:
    predictions: dict[NodeId, Prediction] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise PropagationError(f"line {lineno}: invalid JSON: {exc}") from exc
            lu = NodeId(LEXICAL_UNIT, int(record["lu"][0]), str(record["lu"][1]))
            raw = np.asarray(record["raw"], dtype=np.float64)
            labels = np.asarray(record["labels"], dtype=bool)
            if raw.shape != (NUM_DIMENSIONS,) or labels.shape != (NUM_DIMENSIONS,):
                raise PropagationError(f"line {lineno}: wrong vector length")
            predictions[lu] = Prediction(int(record["wave"]), raw, labels)
    return predictions
