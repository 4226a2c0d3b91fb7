"""Random graph1 edit scripts shared by the rete tests and the acceptance
suite: create/delete/retype/retarget/setValue over a live space."""

import random

from gtvm.corpus.fixtures import ESTRING, G1


def random_edit(space, rng: random.Random) -> str | None:
    """Apply one random mutation; returns a tag or None if it was a no-op."""
    nodes = space.elements_of_type(G1 + "Node")
    edges = space.elements_of_type(G1 + "Edge")
    graphs = space.elements_of_type(G1 + "Graph")
    op = rng.randrange(10)
    if len(nodes) + len(edges) > 16 and op in (0, 1, 8):
        op = rng.choice((2, 3, 7))  # keep the space at desk scale
    if op == 0 or not nodes:
        g = graphs[0]
        n = space.new_entity(G1 + "Node", g)
        space.new_relation(G1 + "Graph.nodes", g, n)
        t = space.new_entity(ESTRING, n)
        space.set_value(t, "n%d" % rng.randrange(1, 6))
        space.new_relation(G1 + "Node.name", n, t)
        return "new-node"
    if op in (1, 8):
        g = graphs[0]
        e = space.new_entity(G1 + "Edge", g)
        space.new_relation(G1 + "Graph.edges", g, e)
        src = rng.choice(nodes)
        trg = rng.choice(nodes)
        roll = rng.random()
        if roll < 0.15:
            trg = src  # self loop
        elif roll < 0.25:
            src = None  # dangling
        elif roll < 0.35:
            trg = None
        if src is not None:
            space.new_relation(G1 + "Edge.src", e, src)
        if trg is not None:
            space.new_relation(G1 + "Edge.trg", e, trg)
        return "new-edge"
    if op == 2 and edges:
        space.delete(rng.choice(edges))
        return "del-edge"
    if op == 3 and len(nodes) > 1:
        space.delete(rng.choice(nodes))
        return "del-node"
    if op == 4 and edges:
        e = rng.choice(edges)
        rels = sorted(r for r in space.relations_from(e)
                      if space.conforms(r, G1 + "Edge.src"))
        if rels:
            space.remove_type(rels[0], G1 + "Edge.src")
            space.add_type(rels[0], G1 + "Edge.trg")
            return "retype"
    if op == 5 and edges:
        e = rng.choice(edges)
        rels = sorted(space.relations_from(e))
        if rels and nodes:
            space.set_target(rng.choice(rels), rng.choice(nodes))
            return "retarget"
    if op == 6 and nodes:
        n = rng.choice(nodes)
        rels = [r for r in space.relations_from(n)
                if space.conforms(r, G1 + "Node.name")]
        if rels:
            space.set_value(space.target(rels[0]), "n%d" % rng.randrange(1, 6))
            return "set-value"
    if op == 7 and edges:
        e = rng.choice(edges)
        rels = sorted(space.relations_from(e))
        if rels:
            space.delete(rng.choice(rels))  # makes the edge dangle
            return "del-rel"
    if op == 9 and nodes:
        space.rename(rng.choice(nodes), "n%d" % rng.randrange(1, 6))
        return "rename"
    return None


def run_script(space, rng: random.Random, steps: int, after_each) -> int:
    """Apply ``steps`` effective mutations, calling ``after_each()`` once per
    mutation; returns the number applied."""
    applied = 0
    guard = 0
    while applied < steps and guard < steps * 20:
        guard += 1
        if random_edit(space, rng) is not None:
            applied += 1
            after_each()
    return applied
