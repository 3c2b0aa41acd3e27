"""Concrete heaps: graphs with structured labels, io-graphs, trees and forests.

Everything here is immutable and purely functional; this module is the
semantic ground truth the automata layers are tested against.
"""

from __future__ import annotations

import heapq
import itertools
from dataclasses import dataclass
from typing import Iterable, Optional


class HeapError(Exception):
    pass


class InaccessibleGraph(HeapError):
    pass


class DanglingReference(HeapError):
    pass


# ---------------------------------------------------------------------------
# Sub-labels
#
# A structured label is a set of sub-labels.  Kinds:
#   sel   - pointer selector, rank 1
#   data  - (field, value) pair, rank 0
#   box   - named lower-level forest automaton used as a symbol, rank = its
#           number of output ports
#   ref   - root reference <index>, rank 0; may only appear as the sole
#           sub-label of a node (a reference leaf)
#
# The fixed total order used everywhere sub-edges or rule-terms are
# sequenced: selectors and data (lexicographic, interleaved by name), then
# boxes by name, then references by index.

@dataclass(frozen=True, order=False)
class SubLabel:
    kind: str  # "sel" | "data" | "box" | "ref"
    name: str = ""
    value: str = ""
    index: int = 0
    rank: int = 0

    def sort_key(self):
        if self.kind == "sel":
            return (0, self.name, "")
        if self.kind == "data":
            return (0, self.name, self.value)
        if self.kind == "box":
            return (1, self.name, "")
        return (2, "", "", self.index)

    def __lt__(self, other):
        return self.sort_key() < other.sort_key()

    def __str__(self):
        if self.kind == "sel":
            return self.name
        if self.kind == "data":
            return f"({self.name},{self.value})"
        if self.kind == "box":
            return f"box:{self.name}"
        return f"ref{self.index}"


def sel(name: str) -> SubLabel:
    return SubLabel("sel", name=name, rank=1)


def data(field: str, value) -> SubLabel:
    return SubLabel("data", name=field, value=str(value), rank=0)


def ref(index: int) -> SubLabel:
    return SubLabel("ref", index=index, rank=0)


def box(name: str, rank: int) -> SubLabel:
    return SubLabel("box", name=name, rank=rank)


def sort_label(sublabels: Iterable[SubLabel]) -> tuple[SubLabel, ...]:
    """Normalise a structured label to the fixed sub-label order."""
    lab = tuple(sorted(sublabels, key=SubLabel.sort_key))
    keys = [s.sort_key() for s in lab]
    if len(set(keys)) != len(keys):
        raise HeapError(f"duplicate sub-labels in {lab}")
    return lab


def label_rank(label: Iterable[SubLabel]) -> int:
    return sum(s.rank for s in label)


@dataclass(frozen=True)
class SubEdge:
    """Positional slice of a node's edge: one sub-label with its targets."""

    origin: int
    label: SubLabel
    targets: tuple[int, ...]

    def __str__(self):
        return f"{self.origin} {self.label} " + " ".join(map(str, self.targets))


# ---------------------------------------------------------------------------
# Graphs

class HeapGraph:
    """Directed ordered graph over structured labels.

    A node maps to a sorted tuple of sub-labels plus a successor sequence
    whose length equals the sum of sub-label ranks.  The graph is determined
    by its sub-edge set together with the set of edge-less nodes (ports with
    empty labels are permitted as explicitly listed nodes).
    """

    __slots__ = ("_nodes",)

    def __init__(self, nodes: dict[int, tuple[tuple[SubLabel, ...], tuple[int, ...]]]):
        for v, (lab, succ) in nodes.items():
            if label_rank(lab) != len(succ):
                raise HeapError(f"node {v}: label rank {label_rank(lab)} != {len(succ)} successors")
        self._nodes = dict(nodes)

    @staticmethod
    def from_subedges(edges: Iterable[SubEdge], extra_nodes: Iterable[int] = ()) -> "HeapGraph":
        per_node: dict[int, list[SubEdge]] = {}
        mentioned: set[int] = set(extra_nodes)
        for e in edges:
            per_node.setdefault(e.origin, []).append(e)
            mentioned.add(e.origin)
            mentioned.update(e.targets)
            if len(e.targets) != e.label.rank:
                raise HeapError(f"sub-edge {e}: rank mismatch")
        nodes = {}
        for v in mentioned:
            es = per_node.get(v, [])
            lab = sort_label([e.label for e in es])
            by_key = {e.label.sort_key(): e for e in es}
            succ: list[int] = []
            for s in lab:
                succ.extend(by_key[s.sort_key()].targets)
            nodes[v] = (lab, tuple(succ))
        return HeapGraph(nodes)

    @property
    def nodes(self) -> frozenset:
        return frozenset(self._nodes)

    def label(self, v) -> tuple[SubLabel, ...]:
        return self._nodes[v][0]

    def succ(self, v) -> tuple[int, ...]:
        return self._nodes[v][1]

    def has_node(self, v) -> bool:
        return v in self._nodes

    def sub_edges_of(self, v) -> list[SubEdge]:
        lab, succ = self._nodes[v]
        out, pos = [], 0
        for s in lab:
            out.append(SubEdge(v, s, succ[pos:pos + s.rank]))
            pos += s.rank
        return out

    def sub_edges(self) -> list[SubEdge]:
        return [e for v in self._nodes for e in self.sub_edges_of(v)]

    def subedge_set(self) -> frozenset[SubEdge]:
        return frozenset(self.sub_edges())

    def in_degree(self, v) -> int:
        return sum(succ.count(v) for (_, succ) in self._nodes.values())

    def joins(self) -> frozenset:
        """Nodes whose occurrence count across all successor sequences exceeds 1."""
        count: dict[int, int] = {}
        for (_, succ) in self._nodes.values():
            for w in succ:
                count[w] = count.get(w, 0) + 1
        return frozenset(v for v, c in count.items() if c > 1)

    def successors(self, v) -> tuple[int, ...]:
        return self._nodes[v][1]

    def reachable_from(self, v) -> set:
        seen = {v}
        stack = [v]
        while stack:
            u = stack.pop()
            for w in self._nodes[u][1]:
                if w not in seen:
                    seen.add(w)
                    stack.append(w)
        return seen

    def rename(self, mapping) -> "HeapGraph":
        return HeapGraph({
            mapping[v]: (lab, tuple(mapping[w] for w in succ))
            for v, (lab, succ) in self._nodes.items()
        })

    def __eq__(self, other):
        return isinstance(other, HeapGraph) and self._nodes == other._nodes

    def __hash__(self):
        return hash(frozenset((v, lab, succ) for v, (lab, succ) in self._nodes.items()))

    def __len__(self):
        return len(self._nodes)

    def __repr__(self):
        return f"HeapGraph({sorted(self._nodes)})"


PathCost = tuple[int, ...]  # successor positions along a path; lexicographic order


def cheapest_cost(g: HeapGraph, u, v) -> Optional[PathCost]:
    """Lexicographically least cost over simple paths from u to v.

    Costs of arbitrary paths have no minimum once a cycle can be pumped in
    front of a costlier exit slot, so the order is taken over paths that do
    not revisit nodes; a Dijkstra-style scan realises exactly that minimum
    because a cost sequence determines at most one path from a fixed start.
    """
    if not g.has_node(u) or not g.has_node(v):
        raise HeapError(f"unknown node in cheapest_cost: {u} -> {v}")
    costs = cheapest_costs_from(g, u)
    return costs.get(v)


def cheapest_costs_from(g: HeapGraph, u) -> dict[int, PathCost]:
    done: dict[int, PathCost] = {}
    pq: list[tuple[PathCost, int]] = [((), u)]
    while pq:
        cost, v = heapq.heappop(pq)
        if v in done:
            continue
        done[v] = cost
        for i, w in enumerate(g.succ(v), start=1):
            if w not in done:
                heapq.heappush(pq, (cost + (i,), w))
    return done


# ---------------------------------------------------------------------------
# io-graphs

@dataclass(frozen=True)
class IoGraph:
    graph: HeapGraph
    ports: tuple[int, ...]

    def __post_init__(self):
        if not self.ports:
            raise HeapError("io-graph needs a nonempty port sequence")
        if len(set(self.ports)) != len(self.ports):
            raise HeapError("ports must not repeat")
        for p in self.ports:
            if not self.graph.has_node(p):
                raise HeapError(f"port {p} not a node")

    @property
    def input_port(self):
        return self.ports[0]

    def cut_points(self) -> frozenset:
        return frozenset(self.ports) | self.graph.joins()

    def is_accessible(self) -> bool:
        return self.graph.reachable_from(self.input_port) == set(self.graph.nodes)

    def __len__(self):
        return len(self.graph)


def canonical_order(iog: IoGraph) -> list:
    """Cut-points sorted by cheapest path cost from the input port."""
    if not iog.is_accessible():
        raise InaccessibleGraph("canonical_order needs an accessible io-graph")
    costs = cheapest_costs_from(iog.graph, iog.input_port)
    return sorted(iog.cut_points(), key=lambda c: (costs[c], c))


# ---------------------------------------------------------------------------
# Trees and forests
#
# Trees are the values tree automata run over.  A reference leaf is a node
# whose sole sub-label is ref(i).

@dataclass(frozen=True)
class Tree:
    label: tuple[SubLabel, ...]
    children: tuple["Tree", ...] = ()

    def __post_init__(self):
        if label_rank(self.label) != len(self.children):
            raise HeapError("tree node arity mismatch")
        if any(s.kind == "ref" for s in self.label) and len(self.label) != 1:
            raise HeapError("reference must be the sole sub-label of a leaf")

    @property
    def is_ref(self) -> bool:
        return len(self.label) == 1 and self.label[0].kind == "ref"

    def size(self) -> int:
        return 1 + sum(c.size() for c in self.children)

    def refs(self) -> set[int]:
        out = set()
        stack = [self]
        while stack:
            t = stack.pop()
            if t.is_ref:
                out.add(t.label[0].index)
            stack.extend(t.children)
        return out

    def sort_key(self):
        return (
            tuple(s.sort_key() for s in self.label),
            tuple(c.sort_key() for c in self.children),
        )

    def __str__(self):
        parts, pos = [], 0
        for s in self.label:
            kids = self.children[pos:pos + s.rank]
            pos += s.rank
            inner = ",".join(str(k) for k in kids)
            parts.append(f"{s}({inner})" if kids else f"{s}")
        return "{" + ",".join(parts) + "}"


def tnode(sublabels: Iterable[SubLabel], *children: Tree) -> Tree:
    return Tree(sort_label(sublabels), tuple(children))


def tref(index: int) -> Tree:
    return Tree((ref(index),))


@dataclass(frozen=True)
class IoForest:
    trees: tuple[Tree, ...]
    port_indices: tuple[int, ...]

    def __post_init__(self):
        if not self.trees or not self.port_indices:
            raise HeapError("io-forest needs trees and port indices")
        if len(set(self.port_indices)) != len(self.port_indices):
            raise HeapError("port indices must not repeat")
        for i in self.port_indices:
            if not 1 <= i <= len(self.trees):
                raise HeapError(f"port index {i} out of range")


def compose(f: IoForest):
    """Interconnect the forest's trees into the io-graph it represents.

    Returns (io-graph, roots) where roots[i] is the node the i-th tree's
    root became.  Trees that consist of a bare reference forward to the
    referenced root transitively.
    """
    n = len(f.trees)
    ids = itertools.count()
    # build edges with placeholders for references
    placeholder: list[tuple[int, SubLabel, list]] = []

    def build(ti: int, t: Tree) -> object:
        """Return concrete node id or ('ref', j)."""
        if t.is_ref:
            j = t.label[0].index
            if not 1 <= j <= n:
                raise DanglingReference(f"reference to tree {j} of {n}")
            return ("ref", j)
        v = next(ids)
        pos = 0
        for s in t.label:
            kids = t.children[pos:pos + s.rank]
            pos += s.rank
            targets = [build(ti, k) for k in kids]
            placeholder.append((v, s, targets))
        return v

    built = [build(i + 1, t) for i, t in enumerate(f.trees)]

    # resolve forwarding chains of bare-reference trees
    def resolve(i: int, seen=()):
        b = built[i - 1]
        if isinstance(b, tuple):
            j = b[1]
            if j in seen:
                raise DanglingReference("cycle of bare reference trees")
            return resolve(j, seen + (i,))
        return b

    root_nodes = [resolve(i) for i in range(1, n + 1)]

    real_edges = []
    for (v, s, targets) in placeholder:
        tt = tuple(root_nodes[t[1] - 1] if isinstance(t, tuple) else t for t in targets)
        real_edges.append(SubEdge(v, s, tt))

    extra = [root_nodes[i - 1] for i in range(1, n + 1)]
    g = HeapGraph.from_subedges(real_edges, extra_nodes=extra)
    ports = tuple(root_nodes[i - 1] for i in f.port_indices)
    if len(set(ports)) != len(ports):
        raise HeapError("port trees forwarded onto the same root")
    return IoGraph(g, ports), tuple(root_nodes)


def compose_graph(f: IoForest) -> IoGraph:
    return compose(f)[0]


def decompose_canonical(iog: IoGraph) -> IoForest:
    """The unique minimal forest of an accessible io-graph, canonically ordered."""
    order = canonical_order(iog)  # raises if inaccessible
    index_of = {c: i + 1 for i, c in enumerate(order)}
    g = iog.graph

    def build_tree(v, at_root: bool) -> Tree:
        if not at_root and v in index_of:
            return tref(index_of[v])
        kids = []
        pos = 0
        lab = g.label(v)
        succ = g.succ(v)
        for s in lab:
            for w in succ[pos:pos + s.rank]:
                kids.append(build_tree(w, False))
            pos += s.rank
        return Tree(lab, tuple(kids))

    trees = tuple(build_tree(c, True) for c in order)
    port_indices = tuple(index_of[p] for p in iog.ports)
    return IoForest(trees, port_indices)


# ---------------------------------------------------------------------------
# Isomorphism (test support; brute-force on small instances)

def isomorphic(a: IoGraph, b: IoGraph) -> bool:
    """Graph isomorphism respecting ports, by backtracking bijection search."""
    ga, gb = a.graph, b.graph
    if len(ga) != len(gb) or len(a.ports) != len(b.ports):
        return False
    la = {v: ga.label(v) for v in ga.nodes}
    lb = {v: gb.label(v) for v in gb.nodes}
    if sorted(map(str, la.values())) != sorted(map(str, lb.values())):
        return False

    mapping: dict = {}
    used: set = set()

    def assign(v, w) -> bool:
        if v in mapping:
            return mapping[v] == w
        if w in used:
            return False
        if la[v] != lb[w]:
            return False
        mapping[v] = w
        used.add(w)
        for x, y in zip(ga.succ(v), gb.succ(w)):
            if not assign(x, y):
                return False
        return True

    def undo_to(snapshot):
        for v in list(mapping):
            if v not in snapshot:
                used.discard(mapping[v])
                del mapping[v]

    for v, w in zip(a.ports, b.ports):
        if not assign(v, w):
            return False

    rest_a = [v for v in sorted(ga.nodes, key=str) if v not in mapping]

    def backtrack(avs):
        if not avs:
            return True
        v, *tail = avs
        if v in mapping:
            return backtrack(tail)
        snapshot = set(mapping)
        for w in sorted(gb.nodes, key=str):
            if w in used:
                continue
            if assign(v, w):
                if backtrack(tail):
                    return True
            undo_to(snapshot)
        return False

    return backtrack(rest_a)


# ---------------------------------------------------------------------------
# Textual format: one line per sub-edge "origin sublabel target*",
# header "ports: id+".  Deterministic serialization: nodes in
# canonical-order-first BFS, sub-edges in sub-label order.

def parse_sublabel(tok: str) -> SubLabel:
    if tok.startswith("ref"):
        return ref(int(tok[3:]))
    if tok.startswith("box:"):
        name, _, rk = tok[4:].partition("/")
        return box(name, int(rk) if rk else 1)
    if tok.startswith("("):
        field, _, value = tok.strip("()").partition(",")
        return data(field, value)
    return sel(tok)


def parse_iograph(text: str) -> IoGraph:
    ports: tuple[int, ...] = ()
    edges = []
    for line in text.splitlines():
        line = line.split("#")[0].strip()
        if not line:
            continue
        if line.startswith("ports:"):
            ports = tuple(int(t) for t in line[6:].split())
            continue
        toks = line.split()
        origin = int(toks[0])
        lab = parse_sublabel(toks[1])
        targets = tuple(int(t) for t in toks[2:])
        if lab.rank != len(targets):
            if lab.kind == "box":
                lab = box(lab.name, len(targets))
            else:
                raise HeapError(f"bad arity in line: {line}")
        edges.append(SubEdge(origin, lab, targets))
    g = HeapGraph.from_subedges(edges, extra_nodes=ports)
    return IoGraph(g, ports)


def serialize_iograph(iog: IoGraph) -> str:
    g = iog.graph
    order: list = []
    seen = set()
    queue = list(iog.ports)
    try:
        start = canonical_order(iog)
        queue = list(start) + queue
    except InaccessibleGraph:
        pass
    while queue:
        v = queue.pop(0)
        if v in seen:
            continue
        seen.add(v)
        order.append(v)
        queue.extend(g.succ(v))
    for v in sorted(g.nodes, key=str):
        if v not in seen:
            order.append(v)
    number = {v: i for i, v in enumerate(order)}
    lines = ["ports: " + " ".join(str(number[p]) for p in iog.ports)]
    for v in order:
        for e in g.sub_edges_of(v):
            lines.append(" ".join(
                [str(number[v]), str(e.label)] + [str(number[t]) for t in e.targets]))
    return "\n".join(lines) + "\n"
