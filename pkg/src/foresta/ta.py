"""Top-down nondeterministic tree automata over structured labels.

States are plain integers, globally fresh per automaton so that the state
sets of distinct TA are disjoint and forest-automaton assembly never has to
rename.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Callable, Iterable, Optional

from .heap import SubLabel, Tree, label_rank, parse_sublabel, sort_label

_fresh = itertools.count(1)


def fresh_state() -> int:
    return next(_fresh)


@dataclass(frozen=True)
class Rule:
    state: int
    label: tuple[SubLabel, ...]  # sorted structured label
    children: tuple[int, ...]

    def __post_init__(self):
        if label_rank(self.label) != len(self.children):
            raise ValueError(f"rule arity mismatch: {self}")

    def terms(self):
        """Positional rule-term slices (sub-label, child states)."""
        out, pos = [], 0
        for s in self.label:
            out.append((s, self.children[pos:pos + s.rank]))
            pos += s.rank
        return out

    def __str__(self):
        inner = ",".join(f"{s}({','.join(map(str, ch))})" for s, ch in self.terms())
        return f"{self.state} -> {{{inner}}}"


class TreeAutomaton:
    __slots__ = ("states", "root_states", "rules", "_by_state")

    def __init__(self, root_states: Iterable[int], rules: Iterable[Rule]):
        self.rules = frozenset(rules)
        self.root_states = frozenset(root_states)
        self.states = self.root_states | {r.state for r in self.rules} | {
            q for r in self.rules for q in r.children}
        self._by_state: dict[int, list[Rule]] = {}
        for r in self.rules:
            self._by_state.setdefault(r.state, []).append(r)

    def rules_of(self, q) -> list[Rule]:
        return self._by_state.get(q, [])

    def relabel(self, f: Callable[[int], int]) -> "TreeAutomaton":
        return TreeAutomaton(
            (f(q) for q in self.root_states),
            (Rule(f(r.state), r.label, tuple(f(c) for c in r.children)) for r in self.rules),
        )

    def refreshed(self) -> tuple["TreeAutomaton", dict[int, int]]:
        """Copy with globally fresh state ids; returns the mapping too."""
        mapping = {q: fresh_state() for q in sorted(self.states)}
        return self.relabel(lambda q: mapping[q]), mapping

    def map_labels(self, f: Callable[[tuple[SubLabel, ...]], tuple[SubLabel, ...]]) -> "TreeAutomaton":
        return TreeAutomaton(
            self.root_states,
            (Rule(r.state, f(r.label), r.children) for r in self.rules),
        )

    def productive(self) -> frozenset:
        prod: set[int] = set()
        changed = True
        while changed:
            changed = False
            for r in self.rules:
                if r.state not in prod and all(c in prod for c in r.children):
                    prod.add(r.state)
                    changed = True
        return frozenset(prod)

    def reachable(self) -> frozenset:
        seen = set(self.root_states)
        stack = list(self.root_states)
        while stack:
            q = stack.pop()
            for r in self.rules_of(q):
                for c in r.children:
                    if c not in seen:
                        seen.add(c)
                        stack.append(c)
        return frozenset(seen)

    def trim(self) -> "TreeAutomaton":
        prod = self.productive()
        keep_roots = self.root_states & prod
        useful = set(keep_roots)
        stack = list(keep_roots)
        while stack:
            q = stack.pop()
            for r in self._by_state.get(q, []):
                if all(c in prod for c in r.children):
                    for c in r.children:
                        if c not in useful:
                            useful.add(c)
                            stack.append(c)
        rules = [r for r in self.rules
                 if r.state in useful and all(c in useful and c in prod for c in r.children)]
        return TreeAutomaton(keep_roots, rules)

    def restricted_to_root(self, q) -> "TreeAutomaton":
        return TreeAutomaton([q], self.rules).trim()

    def alphabet(self) -> set[SubLabel]:
        return {s for r in self.rules for s in r.label}

    def __eq__(self, other):
        return (isinstance(other, TreeAutomaton)
                and self.root_states == other.root_states
                and self.rules == other.rules)

    def __hash__(self):
        return hash((self.root_states, self.rules))

    def __repr__(self):
        return f"TA(roots={sorted(self.root_states)}, rules={len(self.rules)})"


def build_ta(roots, rules) -> TreeAutomaton:
    """rules: iterable of (state, sublabels, children) with auto label sorting.

    Children are given in the order of the *sorted* label.
    """
    rr = []
    for (q, lab, children) in rules:
        rr.append(Rule(q, sort_label(lab), tuple(children)))
    return TreeAutomaton(roots, rr)


# ---------------------------------------------------------------------------
# Acceptance

def state_sets(ta: TreeAutomaton, t: Tree) -> frozenset:
    """States q with t in L(q), bottom-up."""
    kid_sets = [state_sets(ta, c) for c in t.children]
    out = set()
    for q, rules in ta._by_state.items():
        for r in rules:
            if r.label != t.label:
                continue
            if all(c in ks for c, ks in zip(r.children, kid_sets)):
                out.add(q)
                break
    return frozenset(out)


def accepts(ta: TreeAutomaton, t: Tree) -> bool:
    return bool(state_sets(ta, t) & ta.root_states)


# ---------------------------------------------------------------------------
# Emptiness and witnesses

def is_empty(ta: TreeAutomaton) -> bool:
    return not (ta.root_states & ta.productive())


def _state_witnesses(ta: TreeAutomaton) -> dict[int, Tree]:
    """Minimum-node-count witness per productive state.

    Ties among minimum-size trees broken by the deterministic tree
    serialization order.
    """
    best: dict[int, Tree] = {}

    def key(t: Tree):
        return (t.size(), t.sort_key())

    changed = True
    while changed:
        changed = False
        for r in ta.rules:
            if all(c in best for c in r.children):
                t = Tree(r.label, tuple(best[c] for c in r.children))
                if r.state not in best or key(t) < key(best[r.state]):
                    best[r.state] = t
                    changed = True
    return best


def witness(ta: TreeAutomaton) -> Optional[Tree]:
    best = _state_witnesses(ta)
    cands = [best[q] for q in ta.root_states if q in best]
    if not cands:
        return None
    return min(cands, key=lambda t: (t.size(), t.sort_key()))


# ---------------------------------------------------------------------------
# Language inclusion, upward antichain subset construction

def includes(ta1: TreeAutomaton, ta2: TreeAutomaton) -> bool:
    """L(ta1) subseteq L(ta2), exact for finite-tree languages."""
    a = ta1.trim()
    if not a.root_states:
        return True
    b = ta2

    b_by_label: dict[tuple, list[Rule]] = {}
    for r in b.rules:
        b_by_label.setdefault(r.label, []).append(r)

    # pairs (q1, M): some tree reaches q1 in a while M is exactly the set of
    # b-states reaching it.  Antichain keeps subset-minimal M per q1.
    antichain: dict[int, list[frozenset]] = {}
    work: list[tuple[int, frozenset]] = []

    def push(q1, m):
        ms = antichain.setdefault(q1, [])
        for old in ms:
            if old <= m:
                return
        ms[:] = [old for old in ms if not (m <= old)]
        ms.append(m)
        work.append((q1, m))

    def b_post(label, child_sets: list[frozenset]) -> frozenset:
        out = set()
        for r in b_by_label.get(label, []):
            if all(c in ms for c, ms in zip(r.children, child_sets)):
                out.add(r.state)
        return frozenset(out)

    a_rules = list(a.rules)
    for r in a_rules:
        if not r.children:
            push(r.state, b_post(r.label, []))

    while work:
        q1, m = work.pop()
        if q1 in a.root_states and not (m & b.root_states):
            return False
        for r in a_rules:
            if not r.children or q1 not in r.children:
                continue
            # combine over all current antichain choices for each child slot
            options = []
            for c in r.children:
                opts = antichain.get(c)
                if not opts:
                    options = None
                    break
                options.append(opts)
            if options is None:
                continue
            for combo in itertools.product(*options):
                if not any(c == q1 and mm == m for c, mm in zip(r.children, combo)):
                    continue
                push(r.state, b_post(r.label, list(combo)))

    for q1, ms in antichain.items():
        if q1 in a.root_states:
            for m in ms:
                if not (m & b.root_states):
                    return False
    return True


def same_language(ta1: TreeAutomaton, ta2: TreeAutomaton) -> bool:
    return includes(ta1, ta2) and includes(ta2, ta1)


# ---------------------------------------------------------------------------
# Quotienting

def quotient(ta: TreeAutomaton, eq: dict[int, int]) -> TreeAutomaton:
    """Collapse states by an equivalence given as state -> class representative."""
    missing = ta.states - set(eq)
    if missing:
        raise ValueError(f"equivalence does not cover states {sorted(missing)}")
    return ta.relabel(lambda q: eq[q])


def partition_to_map(blocks: Iterable[Iterable[int]]) -> dict[int, int]:
    out = {}
    for block in blocks:
        block = sorted(block)
        for q in block:
            out[q] = block[0]
    return out


# ---------------------------------------------------------------------------
# Bounded enumeration

def enumerate_trees(ta: TreeAutomaton, max_nodes: int) -> set[Tree]:
    """Exactly the accepted trees with at most max_nodes nodes."""
    per_state = enumerate_per_state(ta, max_nodes)
    out = set()
    for q in ta.root_states:
        for by_size in per_state.get(q, {}).values():
            out.update(by_size)
    return out


def enumerate_per_state(ta: TreeAutomaton, max_nodes: int) -> dict[int, dict[int, set[Tree]]]:
    """state -> size -> set of trees of exactly that size in L(state)."""
    table: dict[int, dict[int, set[Tree]]] = {q: {} for q in ta.states}
    for size in range(1, max_nodes + 1):
        for r in ta.rules:
            slot = table.setdefault(r.state, {}).setdefault(size, set())
            k = len(r.children)
            if k == 0:
                if size == 1:
                    slot.add(Tree(r.label))
                continue
            budget = size - 1
            if budget < k:
                continue
            for split in _compositions(budget, k):
                choices = []
                ok = True
                for c, sz in zip(r.children, split):
                    trees = table.get(c, {}).get(sz)
                    if not trees:
                        ok = False
                        break
                    choices.append(trees)
                if not ok:
                    continue
                for combo in itertools.product(*choices):
                    slot.add(Tree(r.label, tuple(combo)))
    return table


def _compositions(total: int, k: int):
    """All k-tuples of positive ints summing to total."""
    if k == 1:
        yield (total,)
        return
    for first in range(1, total - k + 2):
        for rest in _compositions(total - first, k - 1):
            yield (first,) + rest


# ---------------------------------------------------------------------------
# Textual format:  "roots: q+" then one rule per line "q -> {subterm,...}"
# with subterms sel(q1,...), (data,d)(), ref<i>(), box:NAME(q1,...).

def parse_ta(text: str) -> TreeAutomaton:
    roots: list[int] = []
    rules = []
    for line in text.splitlines():
        line = line.split("#")[0].strip()
        if not line:
            continue
        if line.startswith("roots:"):
            roots = [int(t) for t in line[6:].split()]
            continue
        head, _, body = line.partition("->")
        q = int(head.strip())
        body = body.strip()
        if not (body.startswith("{") and body.endswith("}")):
            raise ValueError(f"bad rule line: {line}")
        sublabels, children = [], []
        for part in _split_terms(body[1:-1]):
            name, kids = _parse_term(part)
            lab = parse_sublabel(name)
            if lab.kind == "box" and lab.rank != len(kids):
                lab = lab.__class__("box", name=lab.name, rank=len(kids))
            sublabels.append(lab)
            children.append((lab.sort_key(), kids))
        lab = sort_label(sublabels)
        kids_sorted = []
        children.sort(key=lambda p: p[0])
        for _, kids in children:
            kids_sorted.extend(kids)
        rules.append(Rule(q, lab, tuple(kids_sorted)))
    return TreeAutomaton(roots, rules)


def _parse_term(part: str):
    """Split "LABEL(q1,...)" where LABEL may itself carry parentheses."""
    part = part.strip()
    if part.startswith("("):
        depth = 0
        end = 0
        for i, ch in enumerate(part):
            depth += ch == "("
            depth -= ch == ")"
            if depth == 0:
                end = i
                break
        name, rest = part[:end + 1], part[end + 1:]
    else:
        name, sep, tail = part.partition("(")
        rest = sep + tail
    rest = rest.strip()
    if rest.startswith("("):
        rest = rest[1:-1]
    kids = [int(t) for t in rest.split(",") if t.strip()]
    return name.strip(), kids


def _split_terms(s: str):
    depth, cur, out = 0, [], []
    for ch in s:
        if ch == "," and depth == 0:
            out.append("".join(cur))
            cur = []
            continue
        if ch == "(":
            depth += 1
        elif ch == ")":
            depth -= 1
        cur.append(ch)
    if cur:
        out.append("".join(cur))
    return [p for p in (x.strip() for x in out) if p]


def serialize_ta(ta: TreeAutomaton) -> str:
    lines = ["roots: " + " ".join(map(str, sorted(ta.root_states)))]
    for r in sorted(ta.rules, key=lambda r: (r.state, str(r))):
        lines.append(str(r))
    return "\n".join(lines) + "\n"
