"""Two- and three-valued logical structures over temporal key-properties.

A key-property ``tau(p(t1..tk))`` becomes a tuple in the interpretation of the
predicate symbol ``tau(p)``. Canonical abstraction merges objects that agree
on every unary predicate and joins truth values with Kleene's join; the
embedding test decides whether a concrete structure is represented by an
abstract one.

Summary semantics follow the usual equality convention: a non-summary node
stands for exactly one concrete object, a summary node for one or more.
"""

from __future__ import annotations

import enum
import itertools
import re
from collections import Counter
from dataclasses import dataclass, field
from typing import Dict, FrozenSet, Iterable, List, Mapping, NamedTuple, Optional, Sequence, Tuple

TEMPORAL_TAGS = ("static", "init", "end")
_TAG_ORDER = {t: i for i, t in enumerate(TEMPORAL_TAGS)}
_NUM = re.compile(r"(\d+)")


def ident_key(s: str) -> tuple:
    parts = _NUM.split(s)
    return tuple((0, int(p), p) if p.isdigit() else (1, 0, p) for p in parts if p != "")


def _tuple_key(t: Sequence[str]) -> tuple:
    return tuple(ident_key(x) for x in t)


class StructureError(ValueError):
    pass


class PredicateSymbol(NamedTuple):
    """A temporal predicate ``tau(p)``; (name, arity, temporal) is the identity."""

    name: str
    arity: int
    temporal: str

    def __str__(self) -> str:
        return f"{self.temporal}({self.name}/{self.arity})"

    def sort_key(self) -> tuple:
        return (_TAG_ORDER.get(self.temporal, 9), self.name, self.arity)


class KeyProperty(NamedTuple):
    temporal: str
    pred: str
    terms: Tuple[str, ...] = ()

    @property
    def symbol(self) -> PredicateSymbol:
        return PredicateSymbol(self.pred, len(self.terms), self.temporal)

    def __str__(self) -> str:
        return f"({self.temporal} (" + " ".join((self.pred,) + tuple(self.terms)) + "))"

    def sort_key(self) -> tuple:
        return (_TAG_ORDER.get(self.temporal, 9), self.pred, _tuple_key(self.terms))

    def rename(self, mapping: Mapping[str, str]) -> "KeyProperty":
        return KeyProperty(self.temporal, self.pred, tuple(mapping.get(t, t) for t in self.terms))


class TruthValue(enum.Enum):
    FALSE = "0"
    TRUE = "1"
    MAYBE = "1/2"

    def leq(self, other: "TruthValue") -> bool:
        """Information order: 0 and 1 are below 1/2."""
        return self is other or other is TruthValue.MAYBE

    def __str__(self) -> str:
        return self.value


def kleene_join(values: Iterable[TruthValue]) -> TruthValue:
    vals = set(values)
    if not vals:
        raise StructureError("join of an empty set of truth values")
    if len(vals) == 1:
        return vals.pop()
    return TruthValue.MAYBE


@dataclass(frozen=True, eq=True)
class TwoValuedStructure:
    universe: FrozenSet[str]
    vocabulary: FrozenSet[PredicateSymbol]
    truths: Mapping[PredicateSymbol, FrozenSet[Tuple[str, ...]]] = field(hash=False)

    def __post_init__(self):
        for p, tuples in self.truths.items():
            if p not in self.vocabulary:
                raise StructureError(f"{p} has truths but is not in the vocabulary")
            for t in tuples:
                if len(t) != p.arity:
                    raise StructureError(f"{p}: tuple {t} has the wrong length")
                for o in t:
                    if o not in self.universe:
                        raise StructureError(f"{p}: object {o} is not in the universe")

    def value(self, p: PredicateSymbol, tup: Tuple[str, ...]) -> TruthValue:
        return TruthValue.TRUE if tup in self.truths.get(p, ()) else TruthValue.FALSE

    def unary(self) -> List[PredicateSymbol]:
        return [p for p in self.vocabulary if p.arity == 1]


@dataclass(frozen=True)
class AbstractNode:
    id: str
    canonical_name: FrozenSet[PredicateSymbol]
    summary: bool = False


@dataclass(frozen=True, eq=True)
class ThreeValuedStructure:
    nodes: Tuple[AbstractNode, ...]
    vocabulary: FrozenSet[PredicateSymbol]
    # only non-zero entries are stored
    truths: Mapping[PredicateSymbol, Mapping[Tuple[str, ...], TruthValue]] = field(hash=False)

    @property
    def universe(self) -> FrozenSet[str]:
        return frozenset(n.id for n in self.nodes)

    def node(self, node_id: str) -> AbstractNode:
        for n in self.nodes:
            if n.id == node_id:
                return n
        raise KeyError(node_id)

    def value(self, p: PredicateSymbol, tup: Tuple[str, ...]) -> TruthValue:
        return self.truths.get(p, {}).get(tup, TruthValue.FALSE)

    def summary_nodes(self) -> List[AbstractNode]:
        return [n for n in self.nodes if n.summary]

    def indefiniteness(self) -> int:
        """Number of 1/2 entries plus summary nodes; a specificity measure."""
        halves = sum(1 for m in self.truths.values() for v in m.values() if v is TruthValue.MAYBE)
        return halves + len(self.summary_nodes())


class EmbeddingFailure(str, enum.Enum):
    UNMATCHED_CANONICAL_NAME = "unmatched-canonical-name"
    SURJECTIVITY_VIOLATION = "surjectivity-violation"
    TRUTH_VALUE_CONFLICT = "truth-value-conflict"
    VOCABULARY_MISMATCH = "vocabulary-mismatch"


@dataclass(frozen=True)
class EmbeddingResult:
    embedded: bool
    mapping: Optional[Mapping[str, str]] = None
    failure: Optional[EmbeddingFailure] = None
    detail: str = ""

    def __bool__(self) -> bool:
        return self.embedded


# ------------------------------------------------------------ construction

def struc_from_keyprops(keyprops: Iterable[KeyProperty], extra_objects: Iterable[str] = ()) -> TwoValuedStructure:
    """Build Struc(K): universe = terms of K, one predicate per (tag, name)."""
    universe = set(extra_objects)
    truths: Dict[PredicateSymbol, set] = {}
    arity_of: Dict[Tuple[str, str], int] = {}
    for k in keyprops:
        if k.temporal not in _TAG_ORDER:
            raise StructureError(f"unknown temporal tag {k.temporal!r}")
        seen = arity_of.setdefault((k.temporal, k.pred), len(k.terms))
        if seen != len(k.terms):
            raise StructureError(f"{k.temporal}({k.pred}) used with arities {seen} and {len(k.terms)}")
        universe.update(k.terms)
        truths.setdefault(k.symbol, set()).add(tuple(k.terms))
    return TwoValuedStructure(frozenset(universe), frozenset(truths),
                              {p: frozenset(ts) for p, ts in truths.items()})


def canonical_name(u: str, c: TwoValuedStructure) -> FrozenSet[PredicateSymbol]:
    if u not in c.universe:
        raise StructureError(f"{u} is not in the universe")
    return frozenset(p for p in c.vocabulary if p.arity == 1 and (u,) in c.truths.get(p, ()))


def _canon_map(c: TwoValuedStructure) -> Dict[str, FrozenSet[PredicateSymbol]]:
    names: Dict[str, set] = {u: set() for u in c.universe}
    for p in c.vocabulary:
        if p.arity == 1:
            for (u,) in c.truths.get(p, ()):
                names[u].add(p)
    return {u: frozenset(s) for u, s in names.items()}


def canonical_abstraction(c: TwoValuedStructure) -> ThreeValuedStructure:
    """beta(C): one node per distinct canonical name, values joined per image tuple."""
    names = _canon_map(c)
    groups: Dict[FrozenSet[PredicateSymbol], List[str]] = {}
    for u in sorted(c.universe, key=ident_key):
        groups.setdefault(names[u], []).append(u)
    node_of: Dict[str, str] = {}
    size: Dict[str, int] = {}
    nodes = []
    for name, members in groups.items():
        nid = members[0]
        for u in members:
            node_of[u] = nid
        size[nid] = len(members)
        nodes.append(AbstractNode(nid, name, len(members) > 1))
    nodes.sort(key=lambda n: ident_key(n.id))

    truths: Dict[PredicateSymbol, Dict[Tuple[str, ...], TruthValue]] = {}
    for p, tuples in c.truths.items():
        counts = Counter(tuple(node_of[o] for o in t) for t in tuples)
        m = {}
        for img, n in counts.items():
            total = 1
            for w in img:
                total *= size[w]
            m[img] = TruthValue.TRUE if n == total else TruthValue.MAYBE
        truths[p] = m
    return ThreeValuedStructure(tuple(nodes), c.vocabulary, truths)


# ------------------------------------------------------------ embedding

def embeds_canonical(c: TwoValuedStructure, s: ThreeValuedStructure) -> EmbeddingResult:
    """Test C below S through the mapping induced by canonical names.

    Names are compared after restricting C's unary predicates to S's unary
    vocabulary; predicates S does not know are read as constantly 0 there.
    Only the sparse part of the check is enumerated: true tuples of C and
    definite-1 entries of S. Every other tuple is 0 on both sides or maps to 1/2.
    """
    s_unary = frozenset(p for p in s.vocabulary if p.arity == 1)
    by_name = {n.canonical_name: n for n in s.nodes}
    names = _canon_map(c)
    f: Dict[str, str] = {}
    for u in sorted(c.universe, key=ident_key):
        n = by_name.get(names[u] & s_unary)
        if n is None:
            return EmbeddingResult(False, None, EmbeddingFailure.UNMATCHED_CANONICAL_NAME,
                                   f"no node named {_fmt_name(names[u] & s_unary)} for {u}")
        f[u] = n.id
    pre = Counter(f.values())
    for n in s.nodes:
        if pre[n.id] == 0:
            return EmbeddingResult(False, None, EmbeddingFailure.SURJECTIVITY_VIOLATION,
                                   f"node {n.id} has no preimage")
        if not n.summary and pre[n.id] > 1:
            return EmbeddingResult(False, None, EmbeddingFailure.TRUTH_VALUE_CONFLICT,
                                   f"non-summary node {n.id} has {pre[n.id]} preimages (equality)")
    for p in sorted(c.vocabulary, key=PredicateSymbol.sort_key):
        if p not in s.vocabulary and c.truths.get(p):
            return EmbeddingResult(False, None, EmbeddingFailure.VOCABULARY_MISMATCH,
                                   f"{p} holds in the structure but is unknown to the scope")
    for p in sorted(c.vocabulary & s.vocabulary, key=PredicateSymbol.sort_key):
        smap = s.truths.get(p, {})
        counts: Counter = Counter()
        for t in c.truths.get(p, ()):
            img = tuple(f[o] for o in t)
            if smap.get(img, TruthValue.FALSE) is TruthValue.FALSE:
                return EmbeddingResult(False, None, EmbeddingFailure.TRUTH_VALUE_CONFLICT,
                                       f"{p}{t} is 1 but 0 in the scope")
            counts[img] += 1
        for img, v in smap.items():
            if v is TruthValue.TRUE:
                total = 1
                for w in img:
                    total *= pre[w]
                if counts[img] != total:
                    return EmbeddingResult(False, None, EmbeddingFailure.TRUTH_VALUE_CONFLICT,
                                           f"{p}{img} is 1 in the scope but fails for some preimage")
    for p in sorted(s.vocabulary - c.vocabulary, key=PredicateSymbol.sort_key):
        for img, v in s.truths.get(p, {}).items():
            if v is TruthValue.TRUE:
                return EmbeddingResult(False, None, EmbeddingFailure.TRUTH_VALUE_CONFLICT,
                                       f"{p}{img} is 1 in the scope but absent from the structure")
    return EmbeddingResult(True, f)


def embeds_oracle(c: TwoValuedStructure, s: ThreeValuedStructure, max_objects: int = 8) -> bool:
    """Exhaustive search for a surjective f: U -> U' satisfying the embedding condition.

    Equality is checked as an extra binary predicate: eq(u, v) = [u = v] in C,
    eq(w, w) = 1/2 on summary nodes and 1 otherwise, 0 between distinct nodes.
    Exponential; refuses universes larger than ``max_objects``.
    """
    universe = sorted(c.universe, key=ident_key)
    targets = [n.id for n in s.nodes]
    if len(universe) > max_objects:
        raise StructureError(f"oracle limited to {max_objects} objects, got {len(universe)}")
    if len(universe) < len(targets):
        return False
    summary = {n.id: n.summary for n in s.nodes}
    preds = sorted(c.vocabulary | s.vocabulary, key=PredicateSymbol.sort_key)

    def s_eq(a: str, b: str) -> TruthValue:
        if a != b:
            return TruthValue.FALSE
        return TruthValue.MAYBE if summary[a] else TruthValue.TRUE

    for image in itertools.product(targets, repeat=len(universe)):
        if len(set(image)) != len(targets):
            continue
        f = dict(zip(universe, image))
        ok = True
        for u in universe:
            for v in universe:
                sv = s_eq(f[u], f[v])
                cv = TruthValue.TRUE if u == v else TruthValue.FALSE
                if sv is not TruthValue.MAYBE and sv is not cv:
                    ok = False
                    break
            if not ok:
                break
        if not ok:
            continue
        for p in preds:
            for tup in itertools.product(universe, repeat=p.arity):
                sv = s.value(p, tuple(f[o] for o in tup)) if p in s.vocabulary else TruthValue.FALSE
                if sv is TruthValue.MAYBE:
                    continue
                if sv is not c.value(p, tup):
                    ok = False
                    break
            if not ok:
                break
        if ok:
            return True
    return False


def struc_equivalent(s1: ThreeValuedStructure, s2: ThreeValuedStructure) -> bool:
    """Isomorphism up to node names. Names are distinct, so the bijection is forced."""
    if s1.vocabulary != s2.vocabulary or len(s1.nodes) != len(s2.nodes):
        return False
    by_name = {n.canonical_name: n for n in s2.nodes}
    iso: Dict[str, str] = {}
    for n in s1.nodes:
        m = by_name.get(n.canonical_name)
        if m is None or m.summary != n.summary:
            return False
        iso[n.id] = m.id
    for p in s1.vocabulary:
        m1 = s1.truths.get(p, {})
        m2 = s2.truths.get(p, {})
        if len(m1) != len(m2):
            return False
        for tup, v in m1.items():
            if m2.get(tuple(iso[w] for w in tup)) is not v:
                return False
    return True


def definite_part(s: ThreeValuedStructure) -> TwoValuedStructure:
    """The 1-valued facts of ``s`` read as a 2-valued structure over its nodes."""
    truths = {p: frozenset(t for t, v in m.items() if v is TruthValue.TRUE) for p, m in s.truths.items()}
    truths = {p: ts for p, ts in truths.items() if ts}
    return TwoValuedStructure(s.universe, frozenset(truths), truths)


# ------------------------------------------------------------ serialization

class ScopeFact(NamedTuple):
    prop: KeyProperty
    value: TruthValue

    def render(self) -> str:
        inner = str(self.prop)
        return f"(maybe {inner})" if self.value is TruthValue.MAYBE else inner


def scope_facts(s: ThreeValuedStructure) -> List[ScopeFact]:
    facts = []
    for p, m in s.truths.items():
        for tup, v in m.items():
            if v is not TruthValue.FALSE:
                facts.append(ScopeFact(KeyProperty(p.temporal, p.name, tup), v))
    facts.sort(key=lambda f: f.prop.sort_key())
    return facts


def serialize_scope(s: ThreeValuedStructure) -> List[str]:
    """Scope terms: ``(summary ?o)`` lines, ``(node ?o)`` for fact-less nodes, then facts
    (1/2 facts wrapped in ``maybe``)."""
    facts = scope_facts(s)
    mentioned = {t for f in facts for t in f.prop.terms}
    ordered = sorted(s.nodes, key=lambda n: ident_key(n.id))
    lines = [f"(summary {n.id})" for n in ordered if n.summary]
    # a node no fact mentions would otherwise vanish
    lines += [f"(node {n.id})" for n in ordered if not n.summary and n.id not in mentioned]
    lines += [f.render() for f in facts]
    return lines


def scope_from_facts(summaries: Iterable[str], facts: Iterable[ScopeFact],
                     extra_nodes: Iterable[str] = ()) -> ThreeValuedStructure:
    """Rebuild a scope structure from its serialized terms."""
    summaries = set(summaries)
    ids = set(summaries) | set(extra_nodes)
    truths: Dict[PredicateSymbol, Dict[Tuple[str, ...], TruthValue]] = {}
    arity_of: Dict[Tuple[str, str], int] = {}
    for f in facts:
        if f.value is TruthValue.FALSE:
            continue
        if arity_of.setdefault((f.prop.temporal, f.prop.pred), len(f.prop.terms)) != len(f.prop.terms):
            raise StructureError(f"{f.prop.temporal}({f.prop.pred}) used with two arities")
        ids.update(f.prop.terms)
        truths.setdefault(f.prop.symbol, {})[tuple(f.prop.terms)] = f.value
    names: Dict[str, set] = {i: set() for i in ids}
    for p, m in truths.items():
        if p.arity == 1:
            for (w,), v in m.items():
                if v is TruthValue.TRUE:
                    names[w].add(p)
    nodes = tuple(sorted((AbstractNode(i, frozenset(names[i]), i in summaries) for i in ids),
                         key=lambda n: ident_key(n.id)))
    if len({n.canonical_name for n in nodes}) != len(nodes):
        raise StructureError("scope nodes must have pairwise distinct canonical names")
    return ThreeValuedStructure(nodes, frozenset(truths), truths)


def _fmt_name(name: Iterable[PredicateSymbol]) -> str:
    return "{" + ", ".join(f"{p.temporal}({p.name})" for p in sorted(name, key=PredicateSymbol.sort_key)) + "}"


def to_dot(s, title: str = "S") -> str:
    """Graphviz rendering for debugging: summary nodes as double circles,
    1-valued edges solid, 1/2-valued edges dashed. Unary facts go in labels."""
    lines = [f"digraph {title!s} {{"]
    if isinstance(s, TwoValuedStructure):
        names = _canon_map(s)
        for u in sorted(s.universe, key=ident_key):
            lines.append(f'  "{u}" [label="{u}\\n{_fmt_name(names[u])}"];')
        for p in sorted(s.vocabulary, key=PredicateSymbol.sort_key):
            if p.arity == 2:
                for a, b in sorted(s.truths.get(p, ()), key=_tuple_key):
                    lines.append(f'  "{a}" -> "{b}" [label="{p.temporal}({p.name})"];')
    else:
        for n in s.nodes:
            shape = "doublecircle" if n.summary else "circle"
            lines.append(f'  "{n.id}" [shape={shape}, label="{n.id}\\n{_fmt_name(n.canonical_name)}"];')
        for p in sorted(s.vocabulary, key=PredicateSymbol.sort_key):
            m = s.truths.get(p, {})
            if p.arity == 1:
                for (w,), v in sorted(m.items()):
                    if v is TruthValue.MAYBE:
                        lines.append(f'  "{w}" -> "{w}" [style=dashed, label="{p.temporal}({p.name})"];')
            elif p.arity == 2:
                for (a, b), v in sorted(m.items()):
                    style = "dashed" if v is TruthValue.MAYBE else "solid"
                    lines.append(f'  "{a}" -> "{b}" [style={style}, label="{p.temporal}({p.name})"];')
    lines.append("}")
    return "\n".join(lines)


def struc_from_problem(problem) -> TwoValuedStructure:
    """Struc of a task problem: static/init/end facts from sigma, s0 and g.

    Task arguments join the universe even when no atom mentions them.
    Accepts anything with ``key_properties()`` and ``task.args``.
    """
    return struc_from_keyprops(problem.key_properties(), problem.task.args)
