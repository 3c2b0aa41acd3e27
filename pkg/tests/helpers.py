"""Shared builders and brute-force oracles for the test suite."""

from __future__ import annotations

import itertools
import random

from foresta.heap import (
    HeapGraph, IoGraph, SubEdge, Tree, sel, data, ref,
    cheapest_costs_from,
)


def graph(*edges, extra=()):
    """edges: (origin, sublabel, *targets) triples."""
    out = []
    for e in edges:
        origin, lab, *targets = e
        out.append(SubEdge(origin, lab, tuple(targets)))
    return HeapGraph.from_subedges(out, extra_nodes=extra)


NEXT = sel("next")
PREV = sel("prev")


def dll2():
    # a -next-> b, b -prev-> a
    return graph(("a", NEXT, "b"), ("b", PREV, "a"))


def dll3():
    return graph(
        ("a", NEXT, "b"), ("b", PREV, "a"),
        ("b", NEXT, "c"), ("c", PREV, "b"),
    )


def csll2():
    # h -next-> x -next-> y -next-> x
    return graph(("h", NEXT, "x"), ("x", NEXT, "y"), ("y", NEXT, "x"))


# ---------------------------------------------------------------------------
# Oracles

def oracle_joins(g: HeapGraph):
    """Hand-enumeration of occurrence counts over all successor sequences."""
    count = {}
    for v in g.nodes:
        for w in g.succ(v):
            count[w] = count.get(w, 0) + 1
    return frozenset(v for v, c in count.items() if c > 1)


def oracle_cheapest(g: HeapGraph, u, v):
    """Exhaustive enumeration of simple paths from u, least cost to v."""
    best = {}

    def walk(node, cost, seen):
        if node not in best or cost < best[node]:
            best[node] = cost
        for i, w in enumerate(g.succ(node), start=1):
            if w not in seen:
                walk(w, cost + (i,), seen | {w})

    walk(u, (), {u})
    return best.get(v)


def all_paths_costs(g: HeapGraph, u):
    """Exhaustive simple-path enumeration; map node -> set of costs."""
    out = {u: {()}}

    def walk(node, cost, seen):
        for i, w in enumerate(g.succ(node), start=1):
            if w in seen:
                continue
            out.setdefault(w, set()).add(cost + (i,))
            walk(w, cost + (i,), seen | {w})

    walk(u, (), {u})
    return out


def random_accessible_iograph(rng: random.Random, max_nodes=8, symbols=None):
    """Random accessible io-graph over a small selector alphabet."""
    symbols = symbols or [sel("a"), sel("b"), sel("c")]
    n = rng.randint(1, max_nodes)
    nodes = list(range(n))
    used = set()
    edges = []
    # spanning structure keeps everything reachable from node 0
    for v in nodes[1:]:
        free = [(p, s) for p in nodes[:v] for s in symbols if (p, s.name) not in used]
        parent, lab = rng.choice(free)
        used.add((parent, lab.name))
        edges.append((parent, lab, v))
    # extra edges create joins and cycles
    for _ in range(rng.randint(0, n)):
        a = rng.choice(nodes)
        b = rng.choice(nodes)
        lab = rng.choice(symbols)
        if (a, lab.name) in used:
            continue
        used.add((a, lab.name))
        edges.append((a, lab, b))
    g = graph(*edges, extra=[0])
    return IoGraph(g, (0,))
