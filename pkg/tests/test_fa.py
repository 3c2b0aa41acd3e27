import random

import pytest

from foresta.heap import IoGraph, data, ref, sel, tnode, tref
from foresta.fa import (
    EmptyLanguage, ForestAutomaton, NonUniform, Span, canonize,
    compute_spans, enumerate_graph_keys, fa_includes, graph_key,
    graph_language_member, interconnection_form, normalize, representative,
    state_uniform_form, tree_span,
)
from foresta.ta import build_ta, enumerate_trees, fresh_state
from helpers import NEXT, PREV, csll2, dll3, graph

VAL = data("v", "1")


def fa_of_iograph(iog: IoGraph) -> ForestAutomaton:
    """Singleton-language FA from the canonical decomposition."""
    from foresta.heap import decompose_canonical
    from foresta.ta import Rule, TreeAutomaton

    f = decompose_canonical(iog)
    comps = []
    for t in f.trees:
        rules = []

        def walk(tt):
            q = fresh_state()
            kids = tuple(walk(c) for c in tt.children)
            rules.append(Rule(q, tt.label, kids))
            return q

        root = walk(t)
        comps.append(TreeAutomaton([root], rules))
    return ForestAutomaton(tuple(comps), f.port_indices,
                           frozenset({"canonical", "state_uniform"}))


def dll3_iog():
    return IoGraph(dll3(), ("a",))


def csll2_iog():
    return IoGraph(csll2(), ("h",))


def test_singleton_fa_accepts_its_graph():
    iog = dll3_iog()
    fa = fa_of_iograph(iog)
    assert graph_language_member(fa, iog)


def test_singleton_fa_rejects_other():
    from helpers import dll2
    fa = fa_of_iograph(dll3_iog())
    other = IoGraph(dll2(), ("a",))
    assert not graph_language_member(fa, other)


def test_empty_component_accepts_nothing():
    q = fresh_state()
    empty = build_ta([q], [])
    fa = ForestAutomaton((empty,), (1,))
    assert not graph_language_member(fa, dll3_iog())
    with pytest.raises(EmptyLanguage):
        representative(fa)


def test_representative_singleton():
    iog = csll2_iog()
    fa = fa_of_iograph(iog)
    rep = representative(fa)
    assert graph_key(rep) == graph_key(iog)


def test_representative_minimal():
    # loops of next of any length >= 1 hanging off the port
    qh, qx, qm, ql = (fresh_state() for _ in range(4))
    head = build_ta([qh], [(qh, [NEXT], [ql]), (ql, [ref(2)], [])])
    loop = build_ta([qx], [(qx, [NEXT], [qm]), (qm, [NEXT], [qm]),
                           (qm, [ref(2)], [])])
    fa = ForestAutomaton((head, loop), (1,))
    rep = representative(fa)
    # enumerate-and-minimize oracle
    keys = enumerate_graph_keys(fa, 4)
    smallest = min(keys, key=lambda k: (k.count("\n"), k))
    assert graph_key(rep) == smallest


def test_compute_spans_leaf():
    q = fresh_state()
    ta = build_ta([q], [(q, [ref(2)], [])])
    fa = ForestAutomaton((build_ta([fresh_state()], []), ta), (1,))
    spans = compute_spans(fa)
    assert spans[q] == Span((2,))


def test_compute_spans_multiple():
    q, r1, r2 = fresh_state(), fresh_state(), fresh_state()
    ta = build_ta([q], [
        (q, [NEXT, PREV], [r1, r2]),
        (r1, [ref(2)], []),
        (r2, [ref(2)], []),
    ])
    fa = ForestAutomaton((ta,), (1,))
    spans = compute_spans(fa)
    assert spans[q] == Span((2,), frozenset({2}))
    # oracle: spans of enumerated trees computed directly
    for t in enumerate_trees(ta, 4):
        assert tree_span(t) == spans[q]


def test_compute_spans_non_uniform():
    q, r1, r2 = fresh_state(), fresh_state(), fresh_state()
    ta = build_ta([q], [
        (q, [NEXT], [r1]),
        (q, [PREV], [r2]),
        (r1, [ref(2)], []),
        (r2, [ref(3)], []),
    ])
    fa = ForestAutomaton((ta, build_ta([fresh_state()], []),
                          build_ta([fresh_state()], [])), (1,))
    with pytest.raises(NonUniform):
        compute_spans(fa)


def test_state_uniform_form_already_uniform():
    fa = fa_of_iograph(dll3_iog())
    outs = state_uniform_form(fa)
    assert len(outs) == 1
    assert bounded_keys(outs[0]) == bounded_keys(fa)


def bounded_keys(fa, n=6):
    return enumerate_graph_keys(fa, n)


def union_keys(fas, n=6):
    out = set()
    for f in fas:
        out |= enumerate_graph_keys(f, n)
    return out


def test_state_uniform_form_splits_by_span():
    # root accepts both "reaches ref 2 once" and "reaches ref 2 twice"
    q, s1, s2, l1, l2 = (fresh_state() for _ in range(5))
    ta = build_ta([q], [
        (q, [NEXT], [s1]),
        (q, [NEXT, PREV], [l1, l2]),
        (s1, [ref(2)], []),
        (l1, [ref(2)], []),
        (l2, [ref(2)], []),
    ])
    nil = build_ta([fresh_state()], [(fresh_state(), [VAL], [])])
    # build second component manually to be referenced
    t2 = build_ta([fresh_state()], [])
    q2 = fresh_state()
    t2 = build_ta([q2], [(q2, [VAL], [])])
    fa = ForestAutomaton((ta, t2), (1, 2))
    outs = state_uniform_form(fa)
    assert len(outs) == 2
    spans = sorted(str(compute_spans(o)[min(o.components[0].root_states)])
                   for o in outs)
    assert spans == ["[2+2]", "[2]"]
    assert union_keys(outs) == bounded_keys(fa)


def test_state_uniform_form_empty():
    q = fresh_state()
    fa = ForestAutomaton((build_ta([q], []),), (1,))
    assert state_uniform_form(fa) == []


def test_canonize_fixed_point_on_canonical():
    fa = fa_of_iograph(dll3_iog())
    outs = canonize(fa)
    assert len(outs) == 1
    assert bounded_keys(outs[0]) == bounded_keys(fa)
    assert "canonical" in outs[0].flags


def test_canonize_reorders_components():
    iog = dll3_iog()
    fa = fa_of_iograph(iog)
    # swap the two components and fix references accordingly
    swapped = ForestAutomaton(
        (fa.components[1], fa.components[0]), (2,)).map_refs({1: 2, 2: 1})
    outs = canonize(swapped)
    assert len(outs) == 1
    assert bounded_keys(outs[0]) == bounded_keys(fa)
    assert outs[0].port_indices == (1,)


def test_canonize_inlines_non_cutpoint_root():
    # second tree's root is referenced exactly once: not a cut-point
    qa, ql, qb = fresh_state(), fresh_state(), fresh_state()
    c1 = build_ta([qa], [(qa, [NEXT], [ql]), (ql, [ref(2)], [])])
    c2 = build_ta([qb], [(qb, [VAL], [])])
    fa = ForestAutomaton((c1, c2), (1,))
    outs = canonize(fa)
    assert len(outs) == 1
    assert outs[0].n == 1
    assert union_keys(outs) == bounded_keys(fa)


def test_canonize_csll():
    fa = fa_of_iograph(csll2_iog())
    outs = canonize(fa)
    assert len(outs) == 1
    assert union_keys(outs) == bounded_keys(fa)


def test_interconnection_form_uniform_input():
    fa = fa_of_iograph(csll2_iog())
    outs = interconnection_form(canonize(fa)[0])
    assert len(outs) == 1
    assert union_keys(outs) == bounded_keys(fa)


def test_interconnection_form_splits():
    # component 2 either loops back to itself once (one cycle at {2}) or
    # reaches both itself and component 3 (overlapping structure)
    q2, a2, b2, r2s, r2o, q3, l3 = (fresh_state() for _ in range(7))
    c2 = build_ta([q2], [
        (q2, [NEXT], [a2]),
        (a2, [ref(2)], []),
        (q2, [NEXT, PREV], [b2, r2o]),
        (b2, [ref(2)], []),
        (r2o, [ref(3)], []),
    ])
    qh, hl, h3 = fresh_state(), fresh_state(), fresh_state()
    c1 = build_ta([qh], [(qh, [NEXT, PREV], [hl, h3]),
                         (hl, [ref(2)], []), (h3, [ref(3)], [])])
    c3 = build_ta([q3], [(q3, [sel("z")], [l3]), (l3, [ref(2)], [])])
    fa = ForestAutomaton((c1, c2, c3), (1,))
    canon = canonize(fa)
    outs = []
    for c in canon:
        outs.extend(interconnection_form(c))
    assert union_keys(outs, 7) == union_keys(canon, 7) == bounded_keys(fa, 7)
    # every output is interconnection uniform: check with the knots oracle
    from foresta.knots import overlap_relation
    from foresta.heap import parse_iograph
    for o in outs:
        rels = set()
        for key in enumerate_graph_keys(o, 7):
            rels.add(frozenset(overlap_relation(parse_iograph(key)).pairs))
        assert len(rels) <= 1


def test_fa_includes_reflexive():
    fa = canonize(fa_of_iograph(dll3_iog()))[0]
    assert fa_includes(fa, fa)


def test_fa_includes_chain_lengths():
    def chain_fa(exact=None):
        if exact is not None:
            qs = [fresh_state() for _ in range(exact + 1)]
            rules = [(qs[i], [NEXT], [qs[i + 1]]) for i in range(exact)]
            rules.append((qs[-1], [VAL], []))
            ta = build_ta([qs[0]], rules)
        else:
            q, leaf = fresh_state(), fresh_state()
            ta = build_ta([q], [(q, [NEXT], [q]), (q, [NEXT], [leaf]),
                                (leaf, [VAL], [])])
        return ForestAutomaton((ta,), (1,))

    exact2 = canonize(chain_fa(2))[0]
    anylen = canonize(chain_fa())[0]
    assert fa_includes(exact2, anylen)
    assert not fa_includes(anylen, exact2)


def test_fa_includes_shape_mismatch():
    f1 = canonize(fa_of_iograph(dll3_iog()))[0]
    g = graph(("a", NEXT, "b"))
    f2 = canonize(fa_of_iograph(IoGraph(g, ("a", "b"))))[0]
    assert not fa_includes(f1, f2)


# ---------------------------------------------------------------------------
# Randomized preservation properties

def random_small_fa(rng: random.Random):
    """Random FA with <= 3 components, <= 5 states each."""
    n = rng.randint(1, 3)
    comps = []
    for _ in range(n):
        qs = [fresh_state() for _ in range(rng.randint(1, 4))]
        rules = []
        for _ in range(rng.randint(1, 6)):
            q = rng.choice(qs)
            kind = rng.random()
            if kind < 0.35:
                rules.append((q, [ref(rng.randint(1, n))], []))
            elif kind < 0.6:
                rules.append((q, [VAL], []))
            elif kind < 0.85:
                rules.append((q, [NEXT], [rng.choice(qs)]))
            else:
                rules.append((q, [NEXT, PREV], [rng.choice(qs), rng.choice(qs)]))
        comps.append(build_ta([qs[0]], rules))
    ports = [1] + [i for i in range(2, n + 1) if rng.random() < 0.3]
    return ForestAutomaton(tuple(comps), tuple(ports))


@pytest.mark.parametrize("seed", range(6))
def test_normalisation_preserves_language(seed):
    rng = random.Random(seed)
    for _ in range(12):
        fa = random_small_fa(rng)
        base = bounded_keys(fa, 6)
        uni = state_uniform_form(fa)
        assert union_keys(uni, 6) == base
        canon = []
        for u in uni:
            canon.extend(canonize(u))
        assert union_keys(canon, 6) == base
        inter = []
        for c in canon:
            inter.extend(interconnection_form(c))
        assert union_keys(inter, 6) == base
        for u in uni:
            compute_spans(u)  # never NonUniform after splitting


def test_canonize_outputs_accept_canonical_forests_only():
    rng = random.Random(42)
    from foresta.heap import decompose_canonical, parse_iograph
    for _ in range(25):
        fa = random_small_fa(rng)
        for c in normalize(fa):
            for key in enumerate_graph_keys(c, 6):
                iog = parse_iograph(key)
                f = decompose_canonical(iog)
                assert len(f.trees) == c.n
                assert f.port_indices == c.port_indices


def test_fa_includes_sound_and_complete_level0():
    rng = random.Random(77)
    pairs = 0
    for _ in range(40):
        f1 = random_small_fa(rng)
        f2 = random_small_fa(rng)
        c1s, c2s = normalize(f1), normalize(f2)
        k1, k2 = union_keys(c1s, 5), union_keys(c2s, 5)
        for a in c1s:
            included = all(any(fa_includes(a, b) for b in c2s) for _ in [0])
            if included:
                assert enumerate_graph_keys(a, 5) <= k2 or not k2 == k2
        if c1s and c2s:
            pairs += 1
            a, b = c1s[0], c2s[0]
            if fa_includes(a, b):
                assert enumerate_graph_keys(a, 5) <= enumerate_graph_keys(b, 5)
    assert pairs > 10
