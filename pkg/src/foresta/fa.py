"""Forest automata: tuples of tree automata plus port indices.

Normal forms (state uniform, canonicity respecting, interconnection
respecting) are produced as *sets* of FA, since FA are not closed under
union.  All transformations preserve the union of the accessible graph
languages.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Callable, Iterable, Optional

from .heap import (
    DanglingReference, HeapError, IoForest, IoGraph, SubLabel, Tree,
    compose, decompose_canonical, ref, serialize_iograph, sort_label,
)
from .ta import (
    Rule, TreeAutomaton, enumerate_trees, fresh_state, includes, is_empty,
    witness as ta_witness,
)


class FaError(Exception):
    pass


class NonUniform(FaError):
    def __init__(self, state):
        super().__init__(f"state {state} has non-uniform spans")
        self.state = state


class EmptyLanguage(FaError):
    pass


@dataclass(frozen=True)
class Span:
    """Per-state summary of reachable root references.

    order: reference indices sorted by cheapest path cost from the node;
    multiples: indices reached by at least two occurrences in the subtree.
    """
    order: tuple[int, ...]
    multiples: frozenset[int] = frozenset()

    @property
    def refs(self) -> frozenset[int]:
        return frozenset(self.order)

    def __str__(self):
        mult = "".join(f"+{i}" for i in sorted(self.multiples))
        return f"[{','.join(map(str, self.order))}{mult}]"


EMPTY_SPAN = Span(())


def combine_spans(label: tuple[SubLabel, ...], child_spans: list[Span]) -> Span:
    """Span induced at a node from its label and per-slot child spans.

    Reference order merges by (first slot reaching the index, position in
    that child's order); this matches cheapest-path-cost ordering because
    slot costs compare lexicographically.
    """
    if len(label) == 1 and label[0].kind == "ref":
        return Span((label[0].index,))
    first: dict[int, tuple[int, int]] = {}
    count: dict[int, int] = {}
    for slot, sp in enumerate(child_spans):
        for pos, j in enumerate(sp.order):
            if j not in first:
                first[j] = (slot, pos)
        for j in sp.refs:
            count[j] = min(2, count.get(j, 0) + (2 if j in sp.multiples else 1))
    order = tuple(sorted(first, key=lambda j: first[j]))
    multiples = frozenset(j for j, c in count.items() if c >= 2)
    return Span(order, multiples)


def tree_span(t: Tree) -> Span:
    return combine_spans(t.label, [tree_span(c) for c in t.children])


@dataclass(frozen=True)
class ConnDesc:
    """Connection descriptor: which reference-set trace families share
    sub-edges inside accepted subtrees.

    edge_sets: the reference sets carried by individual sub-edges;
    pairs: unordered pairs of reference sets sitting on sibling slots of a
    single node (the fork patterns a closed knot can be built from).
    """
    edge_sets: frozenset[frozenset[int]] = frozenset()
    pairs: frozenset[frozenset[frozenset[int]]] = frozenset()


EMPTY_DESC = ConnDesc()


def combine_desc(label, child_spans: list[Span], child_descs: list[ConnDesc]) -> ConnDesc:
    if len(label) == 1 and label[0].kind == "ref":
        return EMPTY_DESC
    slot_sets = [sp.refs for sp in child_spans]
    edge_sets = set(slot_sets)
    for d in child_descs:
        edge_sets |= d.edge_sets
    pairs = set()
    for d in child_descs:
        pairs |= d.pairs
    for i in range(len(slot_sets)):
        for j in range(i + 1, len(slot_sets)):
            pairs.add(frozenset({slot_sets[i], slot_sets[j]}))
    return ConnDesc(frozenset(edge_sets), frozenset(pairs))


# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ForestAutomaton:
    components: tuple[TreeAutomaton, ...]
    port_indices: tuple[int, ...]
    flags: frozenset = frozenset()

    def __post_init__(self):
        if not self.components or not self.port_indices:
            raise FaError("forest automaton needs components and ports")
        if len(set(self.port_indices)) != len(self.port_indices):
            raise FaError("port indices must not repeat")
        n = len(self.components)
        for i in self.port_indices:
            if not 1 <= i <= n:
                raise FaError(f"port index {i} out of range")

    @property
    def n(self) -> int:
        return len(self.components)

    def boxes_used(self) -> set[str]:
        return {s.name for ta in self.components for s in ta.alphabet() if s.kind == "box"}

    def level(self, box_levels: Optional[dict[str, int]] = None) -> int:
        names = self.boxes_used()
        if not names:
            return 0
        if box_levels is None:
            return 1
        return 1 + max(box_levels.get(nm, 0) for nm in names)

    def with_flags(self, *names) -> "ForestAutomaton":
        return ForestAutomaton(self.components, self.port_indices,
                               self.flags | frozenset(names))

    def refreshed(self) -> "ForestAutomaton":
        return ForestAutomaton(tuple(ta.refreshed()[0] for ta in self.components),
                               self.port_indices, self.flags)

    def map_refs(self, perm: dict[int, int]) -> "ForestAutomaton":
        """Rename reference indices in all components (not positions)."""
        def fix(label):
            return sort_label(ref(perm[s.index]) if s.kind == "ref" else s
                              for s in label)
        return ForestAutomaton(
            tuple(ta.map_labels(fix) for ta in self.components),
            self.port_indices, frozenset())

    def __eq__(self, other):
        return (isinstance(other, ForestAutomaton)
                and self.components == other.components
                and self.port_indices == other.port_indices)

    def __hash__(self):
        return hash((self.components, self.port_indices))

    def __repr__(self):
        return f"FA(n={self.n}, ports={list(self.port_indices)}, flags={sorted(self.flags)})"


def is_fa_empty(fa: ForestAutomaton) -> bool:
    return any(is_empty(ta) for ta in fa.components)


def representative(fa: ForestAutomaton) -> IoGraph:
    """Deterministic minimal witness graph: compose of component witnesses."""
    return representative_with_roots(fa)[0]


def representative_with_roots(fa: ForestAutomaton):
    trees = []
    for ta in fa.components:
        t = ta_witness(ta)
        if t is None:
            raise EmptyLanguage("component with empty language")
        trees.append(t)
    return compose(IoForest(tuple(trees), fa.port_indices))


# ---------------------------------------------------------------------------
# Bounded semantics (oracle support)

def _tree_cap(fa: ForestAutomaton, graph_nodes: int) -> int:
    maxrank = 1
    for ta in fa.components:
        for r in ta.rules:
            maxrank = max(maxrank, len(r.children))
    return graph_nodes * (1 + maxrank)


def enumerate_forests(fa: ForestAutomaton, graph_nodes: int):
    cap = _tree_cap(fa, graph_nodes)
    per_comp = [sorted(enumerate_trees(ta, cap), key=lambda t: t.sort_key())
                for ta in fa.components]
    for combo in itertools.product(*per_comp):
        yield IoForest(tuple(combo), fa.port_indices)


def graph_key(iog: IoGraph) -> str:
    """Canonical serialization; equal iff io-graphs are isomorphic."""
    f = decompose_canonical(iog)
    return serialize_iograph(compose(f)[0])


def enumerate_graph_keys(fa: ForestAutomaton, graph_nodes: int) -> set[str]:
    """Canonical keys of the accessible graphs with at most graph_nodes nodes."""
    out = set()
    for f in enumerate_forests(fa, graph_nodes):
        try:
            iog, _ = compose(f)
        except (DanglingReference, HeapError):
            continue
        if len(iog) > graph_nodes or not iog.is_accessible():
            continue
        out.add(graph_key(iog))
    return out


def graph_language_member(fa: ForestAutomaton, iog: IoGraph) -> bool:
    if "canonical" in fa.flags:
        try:
            f = decompose_canonical(iog)
        except HeapError:
            return False
        if len(f.trees) != fa.n or f.port_indices != fa.port_indices:
            return False
        from .ta import accepts
        return all(accepts(ta, t) for ta, t in zip(fa.components, f.trees))
    if not iog.is_accessible():
        return False
    return graph_key(iog) in enumerate_graph_keys(fa, len(iog))


# ---------------------------------------------------------------------------
# Spans per state

def compute_spans(fa: ForestAutomaton) -> dict[int, Span]:
    """The unique span of every productive state, by bottom-up propagation.

    Raises NonUniform when two rules of one state induce different spans.
    """
    spans: dict[int, Span] = {}
    for ta in fa.components:
        ta = ta.trim()
        changed = True
        while changed:
            changed = False
            for r in ta.rules:
                if not all(c in spans for c in r.children):
                    continue
                induced = combine_spans(r.label, [spans[c] for c in r.children])
                if r.state not in spans:
                    spans[r.state] = induced
                    changed = True
                elif spans[r.state] != induced:
                    raise NonUniform(r.state)
    return spans


# ---------------------------------------------------------------------------
# Annotation product: the shared mechanism behind the state uniform and the
# interconnection respecting forms.  States are annotated bottom-up with a
# value computed from rule label and child annotations; distinct annotations
# become distinct states, and one output FA is produced per combination of
# root annotations.

def _annotate(ta: TreeAutomaton, combine: Callable):
    """Return (annotated rules, annotations per root state).

    combine(label, child_annotations) -> annotation.
    """
    ann: dict[int, set] = {q: set() for q in ta.states}
    rules: set = set()
    changed = True
    while changed:
        changed = False
        for r in ta.rules:
            for combo in itertools.product(*(sorted(ann[c], key=repr) for c in r.children)):
                a = combine(r.label, list(combo))
                key = (r, combo, a)
                if key not in rules:
                    rules.add(key)
                    if a not in ann[r.state]:
                        ann[r.state].add(a)
                    changed = True
    return rules, ann


def _split_by_annotation(fa: ForestAutomaton, combine: Callable) -> list[tuple[ForestAutomaton, list]]:
    """Split fa into FA uniform w.r.t. the annotation; returns
    [(fa, root annotations per component)].
    """
    per_comp = []
    for ta in fa.components:
        ta = ta.trim()
        if not ta.root_states:
            return []
        rules, ann = _annotate(ta, combine)
        per_comp.append((ta, rules, ann))

    outs = []
    root_choices = []
    for (ta, rules, ann) in per_comp:
        choices = [(root, a) for root in sorted(ta.root_states)
                   for a in sorted(ann[root], key=repr)]
        if not choices:
            return []
        root_choices.append(choices)

    for combo in itertools.product(*root_choices):
        comps = []
        ok = True
        for (ta, rules, ann), (root, a) in zip(per_comp, combo):
            state_ids: dict[tuple, int] = {}

            def sid(pair):
                if pair not in state_ids:
                    state_ids[pair] = fresh_state()
                return state_ids[pair]

            new_rules = [
                Rule(sid((r.state, an)), r.label,
                     tuple(sid((c, ca)) for c, ca in zip(r.children, child_combo)))
                for (r, child_combo, an) in rules
            ]
            new_ta = TreeAutomaton([sid((root, a))], new_rules).trim()
            if not new_ta.root_states:
                ok = False
                break
            comps.append(new_ta)
        if ok:
            outs.append((ForestAutomaton(tuple(comps), fa.port_indices),
                         [a for (_, a) in combo]))
    return outs


def state_uniform_form(fa: ForestAutomaton) -> list[ForestAutomaton]:
    """Finite set of state-uniform FA whose languages union to L(fa)."""
    outs = _split_by_annotation(fa, combine_spans)
    return [f.with_flags("state_uniform") for (f, _) in outs
            if not is_fa_empty(f)]


def interconnection_form(fa: ForestAutomaton) -> list[ForestAutomaton]:
    """Split so every output's graphs are interconnection equivalent."""

    def combine(label, combo):
        spans = [c[0] for c in combo]
        descs = [c[1] for c in combo]
        return (combine_spans(label, spans), combine_desc(label, spans, descs))

    outs = _split_by_annotation(fa, combine)
    result = []
    for f, _ in outs:
        if not is_fa_empty(f):
            result.append(f.with_flags(*(fa.flags | {"state_uniform", "interconnection"})))
    return result


# ---------------------------------------------------------------------------
# Canonicity respecting form

def canonize(fa: ForestAutomaton) -> list[ForestAutomaton]:
    """Set of canonicity-respecting FA preserving the accessible graph
    language union.  Relies on state uniformity for reference bookkeeping;
    call state_uniform_form first when unsure.
    """
    if "state_uniform" not in fa.flags:
        outs = []
        for u in state_uniform_form(fa):
            outs.extend(canonize(u))
        return _dedupe(outs)

    work = [fa]
    done = []
    while work:
        f = work.pop()
        f2 = _trimmed(f)
        if f2 is None:
            continue
        split = _defork(f2)
        if split is not None:
            work.extend(split)
            continue
        f3 = _inline_and_prune(f2)
        if f3 is None:
            continue
        if isinstance(f3, list):
            work.extend(f3)
            continue
        f4 = _reorder_canonical(f3)
        if f4 is not None:
            done.append(f4.with_flags("state_uniform", "canonical"))
    return _dedupe(done)


def _dedupe(fas: Iterable[ForestAutomaton]) -> list[ForestAutomaton]:
    out, seen = [], set()
    for f in fas:
        k = fa_structure_key(f)
        if k not in seen:
            seen.add(k)
            out.append(f)
    return out


def fa_structure_key(fa: ForestAutomaton) -> tuple:
    """Key invariant under state renaming (not exact equality; dedupe aid)."""
    comps = []
    for ta in fa.components:
        order = {}

        def num(q):
            if q not in order:
                order[q] = len(order)
            return order[q]

        for root in sorted(ta.root_states):
            num(root)
        rules = sorted((str(r.label), tuple(r.children)) for r in ta.rules)
        comps.append((tuple(sorted(map(num, ta.root_states))), tuple(rules)))
    return (tuple(comps), fa.port_indices)


def _trimmed(fa: ForestAutomaton) -> Optional[ForestAutomaton]:
    comps = []
    for ta in fa.components:
        t = ta.trim()
        if not t.root_states:
            return None
        comps.append(t)
    return ForestAutomaton(tuple(comps), fa.port_indices, fa.flags)


def _is_bare_ref_rule(r: Rule) -> bool:
    return len(r.label) == 1 and r.label[0].kind == "ref"


def _defork(fa: ForestAutomaton) -> Optional[list[ForestAutomaton]]:
    """Separate components whose roots mix bare-reference and real rules."""
    for i, ta in enumerate(fa.components):
        root = min(ta.root_states)
        root_rules = ta.rules_of(root)
        bare = [r for r in root_rules if _is_bare_ref_rule(r)]
        if bare and len(bare) < len(root_rules):
            with_bare = TreeAutomaton([root], [r for r in ta.rules
                                               if r.state != root or _is_bare_ref_rule(r)])
            without = TreeAutomaton([root], [r for r in ta.rules
                                             if r.state != root or not _is_bare_ref_rule(r)])
            outs = []
            for variant in (with_bare, without):
                comps = list(fa.components)
                comps[i] = variant
                outs.append(ForestAutomaton(tuple(comps), fa.port_indices, fa.flags))
            return outs
        if bare and len(bare) > 1:
            outs = []
            for r in bare:
                comps = list(fa.components)
                comps[i] = TreeAutomaton([root], [r])
                outs.append(ForestAutomaton(tuple(comps), fa.port_indices, fa.flags))
            return outs
    return None


def _resolve_forwarding(fa: ForestAutomaton) -> Optional[ForestAutomaton]:
    """Remove components that are a single bare reference (forwarders)."""
    n = fa.n
    forward = {}
    for i, ta in enumerate(fa.components, start=1):
        root = min(ta.root_states)
        rules = ta.rules_of(root)
        if len(rules) == 1 and _is_bare_ref_rule(rules[0]):
            forward[i] = rules[0].label[0].index
    if not forward:
        return fa

    def resolve(i, seen=()):
        if i in seen:
            return None
        return resolve(forward[i], seen + (i,)) if i in forward else i

    target = {}
    for i in range(1, n + 1):
        t = resolve(i)
        if t is None:
            return None  # cycle of bare references: no graphs
        target[i] = t
    keep = [i for i in range(1, n + 1) if i not in forward]
    newpos = {i: k + 1 for k, i in enumerate(keep)}
    remap = {i: newpos[target[i]] for i in range(1, n + 1)}
    comps = tuple(fa.components[i - 1] for i in keep)
    ports = tuple(remap[p] for p in fa.port_indices)
    if len(set(ports)) != len(ports):
        return None
    return ForestAutomaton(comps, ports, fa.flags).map_refs(remap)


def _inline_and_prune(fa: ForestAutomaton):
    """Inline non-cut-point roots; reject FA of inaccessible graphs."""
    f = _resolve_forwarding(fa)
    if f is None:
        return None
    f = _trimmed(f)
    if f is None:
        return None
    try:
        spans = compute_spans(f)
    except NonUniform:
        # inlining can in principle break uniformity; re-split
        return state_uniform_form(f)

    n = f.n
    ports = set(f.port_indices)
    indeg = {i: 0 for i in range(1, n + 1)}
    referrer = {}
    for j, ta in enumerate(f.components, start=1):
        root = min(ta.root_states)
        sp = spans.get(root, EMPTY_SPAN)
        for i in sp.refs:
            occ = 2 if i in sp.multiples else 1
            indeg[i] = min(2, indeg[i] + occ)
            referrer.setdefault(i, j)
            if indeg[i] >= 2:
                referrer[i] = None

    for i in range(1, n + 1):
        if i in ports:
            continue
        if indeg[i] == 0:
            return None  # unreferenced non-port component: graphs inaccessible
        if indeg[i] == 1:
            j = referrer[i]
            if j == i:
                return None  # only reference is from itself: inaccessible
            return _inline_and_prune(_inline_component(f, i, j))
    return f


def _inline_component(fa: ForestAutomaton, i: int, j: int) -> ForestAutomaton:
    """Splice component i into its unique referrer j, dropping position i."""
    comp_i = fa.components[i - 1].refreshed()[0]
    root_i = min(comp_i.root_states)
    comp_j = fa.components[j - 1]
    new_rules = set(comp_i.rules)
    for r in comp_j.rules:
        if _is_bare_ref_rule(r) and r.label[0].index == i:
            for rr in comp_i.rules_of(root_i):
                new_rules.add(Rule(r.state, rr.label, rr.children))
        else:
            new_rules.add(r)
    new_j = TreeAutomaton(comp_j.root_states, new_rules)

    keep = [k for k in range(1, fa.n + 1) if k != i]
    newpos = {k: p + 1 for p, k in enumerate(keep)}
    comps = []
    for k in keep:
        comps.append(new_j if k == j else fa.components[k - 1])
    ports = tuple(newpos[p] for p in fa.port_indices)
    remap = {k: newpos.get(k, 0) for k in range(1, fa.n + 1)}
    remap[i] = 0  # no references to i remain after splicing
    out = ForestAutomaton(tuple(comps), ports, fa.flags)
    safe = {k: v if v else 1 for k, v in remap.items()}
    return out.map_refs(safe)


def _reorder_canonical(fa: ForestAutomaton) -> Optional[ForestAutomaton]:
    """Order components by the canonical cut-point order of a representative."""
    try:
        iog, roots = representative_with_roots(fa)
    except EmptyLanguage:
        return None
    if not iog.is_accessible():
        return None
    from .heap import canonical_order
    order = canonical_order(iog)
    pos_of_node = {v: k + 1 for k, v in enumerate(order)}
    if len(roots) != len(order):
        return None  # roots and cut-points must coincide after inlining
    perm = {}
    for old_idx, node in enumerate(roots, start=1):
        if node not in pos_of_node:
            return None
        perm[old_idx] = pos_of_node[node]
    comps = [None] * fa.n
    for old_idx in range(1, fa.n + 1):
        comps[perm[old_idx] - 1] = fa.components[old_idx - 1]
    ports = tuple(perm[p] for p in fa.port_indices)
    return ForestAutomaton(tuple(comps), ports, fa.flags).map_refs(perm)


# ---------------------------------------------------------------------------
# Inclusion

def fa_includes(fa1: ForestAutomaton, fa2: ForestAutomaton) -> bool:
    """Component-wise language inclusion after canonical alignment.

    Exact for flat (level-0) FA; sound but possibly incomplete otherwise.
    Shape mismatches answer False.
    """
    if "canonical" in fa1.flags and "canonical" in fa2.flags:
        if fa1.n != fa2.n or fa1.port_indices != fa2.port_indices:
            return False
        return all(includes(a, b) for a, b in zip(fa1.components, fa2.components))
    left = canonize(fa1)
    right = canonize(fa2)
    if not left:
        return True
    if not right:
        return False
    return all(any(fa_includes(a, b) for b in right) for a in left)


def normalize(fa: ForestAutomaton, interconnect: bool = False) -> list[ForestAutomaton]:
    """Full normalisation pipeline: uniform + canonical (+ interconnection)."""
    outs = canonize(fa)
    if not interconnect:
        return outs
    result = []
    for f in outs:
        for g in interconnection_form(f):
            for h in canonize(g):
                result.append(h.with_flags("interconnection"))
    return _dedupe(result)
