"""Shared builders for the test suite: tiny graphs, annotation vectors and
a lookup-only embedding stand-in."""

import numpy as np

from emoprop.graph import (
    LEXICAL_UNIT,
    NUM_DIMENSIONS,
    SYNSET,
    Edge,
    NodeId,
    RelationType,
    WordNetGraph,
)

MEMBER = RelationType("membership", "SL", False)
HYPO = RelationType("hyponymy", "SS", False)
ANTONYMY_LL = RelationType("antonymy", "LL", False)


def synset(i, lang="pl"):
    return NodeId(SYNSET, i, lang)


def lu(i, lang="pl"):
    return NodeId(LEXICAL_UNIT, i, lang)


def ann(*indices, value=1.0):
    """26-vector with the given dimension indices set to ``value``."""
    v = np.zeros(NUM_DIMENSIONS)
    for i in indices:
        v[i] = value
    return v


def chain_graph(n_synsets=3, lus_per=1, lang="pl"):
    """Synset path S0-S1-...-S{n-1} with ``lus_per`` LUs hanging off each.

    LU ids are synset_index * lus_per + k, so lu(0) belongs to synset(0).
    """
    g = WordNetGraph()
    for i in range(n_synsets):
        g.add_node(synset(i, lang))
    for i in range(n_synsets - 1):
        g.add_edge(Edge(synset(i, lang), synset(i + 1, lang), HYPO))
    for i in range(n_synsets):
        for k in range(lus_per):
            node = lu(i * lus_per + k, lang)
            g.add_node(node)
            g.add_edge(Edge(synset(i, lang), node, MEMBER))
    return g


class ConstantTable:
    """Embedding lookup over a fixed token -> vector dict.

    Duck-types the parts of the trained table that propagation and
    evaluation use, so those tests need no actual embedding training.
    """

    def __init__(self, vectors, dim):
        self.vectors = {tok: np.asarray(v, dtype=np.float64) for tok, v in vectors.items()}
        self.dim = dim

    def vector_of(self, token):
        return self.vectors[token].copy()

    def __contains__(self, token):
        return token in self.vectors


def random_table(nodes, dim, seed=0):
    """ConstantTable with a seeded gaussian vector per node."""
    from emoprop.corpus import node_token

    rng = np.random.default_rng(seed)
    return ConstantTable({node_token(n): rng.normal(size=dim) for n in nodes}, dim)
