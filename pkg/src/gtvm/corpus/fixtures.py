"""Input graphs for the task suite, built as graph1 instances.

The shipped .gms files under ``corpus/fixtures/`` are snapshots of these
builders; a test keeps them in sync.
"""

from __future__ import annotations

import random

from ..errors import GtvmError
from ..modelspace import ModelSpace

G1 = "nemf.packages.graph1."
ESTRING = "nemf.ecore.datatypes.EString"


class Graph1Builder:
    """Convenience wrapper for assembling graph1 instances."""

    def __init__(self, space: ModelSpace):
        self.space = space
        self.graph = space.new_entity(G1 + "Graph")

    def node(self, name: str) -> int:
        space = self.space
        node = space.new_entity(G1 + "Node", self.graph)
        space.rename(node, name)
        space.new_relation(G1 + "Graph.nodes", self.graph, node)
        text = space.new_entity(ESTRING, node)
        space.set_value(text, name)
        space.new_relation(G1 + "Node.name", node, text)
        return node

    def edge(self, src: int | None, trg: int | None) -> int:
        space = self.space
        edge = space.new_entity(G1 + "Edge", self.graph)
        space.new_relation(G1 + "Graph.edges", self.graph, edge)
        if src is not None:
            space.new_relation(G1 + "Edge.src", edge, src)
        if trg is not None:
            space.new_relation(G1 + "Edge.trg", edge, trg)
        return edge


def _fresh_space():
    from . import metamodels
    return ModelSpace(metamodels())


def _triangle(space):
    b = Graph1Builder(space)
    n1, n2, n3 = b.node("n1"), b.node("n2"), b.node("n3")
    b.edge(n1, n2)
    b.edge(n2, n3)
    b.edge(n3, n1)


def _chain4(space):
    b = Graph1Builder(space)
    nodes = [b.node(f"n{i}") for i in range(1, 5)]
    for a, c in zip(nodes, nodes[1:]):
        b.edge(a, c)


def _selfloop(space):
    b = Graph1Builder(space)
    n1, n2 = b.node("n1"), b.node("n2")
    b.edge(n1, n1)
    b.edge(n2, n2)
    b.edge(n1, n2)


def _dangling(space):
    b = Graph1Builder(space)
    n1, n2 = b.node("n1"), b.node("n2")
    b.edge(n1, n2)
    b.edge(n1, None)  # the single dangling edge


def _isolated(space):
    b = Graph1Builder(space)
    n1, n2 = b.node("n1"), b.node("n2")
    b.node("n3")
    b.edge(n1, n2)


def _delete(space):
    # n1 with two incident edges, a bystander edge, and one pre-existing
    # dangling edge (its count must not grow when n1's edges are deleted)
    b = Graph1Builder(space)
    n1, n2, n3 = b.node("n1"), b.node("n2"), b.node("n3")
    b.edge(n1, n2)
    b.edge(n3, n1)
    b.edge(n2, n3)
    b.edge(None, n2)


def _random(space, n: int = 8, e: int = 12, seed: int = 0,
            p_selfloop: float = 0.1, p_dangling: float = 0.1):
    rng = random.Random(seed)
    b = Graph1Builder(space)
    nodes = [b.node(f"n{i}") for i in range(1, n + 1)]
    for _ in range(e):
        if nodes and rng.random() < p_selfloop:
            v = rng.choice(nodes)
            b.edge(v, v)
            continue
        src = rng.choice(nodes) if nodes else None
        trg = rng.choice(nodes) if nodes else None
        roll = rng.random()
        if roll < p_dangling / 2:
            src = None
        elif roll < p_dangling:
            trg = None
        b.edge(src, trg)


BUILDERS = {
    "empty": lambda space: None,
    "triangle": _triangle,
    "chain4": _chain4,
    "selfloop": _selfloop,
    "dangling": _dangling,
    "isolated": _isolated,
    "delete": _delete,
    "random": _random,
}


def load_fixture(name: str, **params) -> ModelSpace:
    builder = BUILDERS.get(name)
    if builder is None:
        raise GtvmError(f"unknown fixture {name!r} "
                        f"(have {', '.join(sorted(BUILDERS))})")
    space = _fresh_space()
    builder(space, **params)
    return space
