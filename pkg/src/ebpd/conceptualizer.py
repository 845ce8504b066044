"""Learning activity schemata from single experiences.

Pipeline: generalize constants to variables, replace concrete actions by
their abstract parents, attach features to every abstract action, fold
contiguous repeats into loops, and abstract the key-properties into the
schema's scope of applicability.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Dict, Hashable, List, NamedTuple, Optional, Sequence, Tuple, Union

from ebpd.logic import (
    KeyProperty,
    ThreeValuedStructure,
    canonical_abstraction,
    struc_from_keyprops,
)
from ebpd.model import Atom, Domain, Experience, binding_for, is_variable


@dataclass(frozen=True)
class GeneralizedExperience:
    name: str
    domain: str
    task: Atom
    key_properties: Tuple[KeyProperty, ...]
    plan: Tuple[Atom, ...]
    var_map: Dict[str, str] = field(compare=False)

    @property
    def objects(self) -> Tuple[str, ...]:
        return tuple(self.var_map.values())

    def degeneralize(self) -> Experience:
        inv = {v: c for c, v in self.var_map.items()}
        return Experience(
            self.name, self.domain, self.task.substitute(inv), tuple(inv[v] for v in self.objects),
            tuple(k.rename(inv) for k in self.key_properties),
            tuple(a.substitute(inv) for a in self.plan),
        )


@dataclass(frozen=True)
class AbstractAction:
    head: Atom
    features: Tuple[KeyProperty, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "features", tuple(sorted(set(self.features), key=KeyProperty.sort_key)))


@dataclass(frozen=True)
class Loop:
    body: Tuple[AbstractAction, ...]
    # number of iterations folded at learning time; not part of the document
    repeats: int = field(default=0, compare=False)

    def __post_init__(self):
        if not self.body:
            raise ValueError("loop body must be non-empty")


PlanItem = Union[AbstractAction, Loop]


@dataclass(frozen=True)
class ActivitySchema:
    name: str
    domain: str
    task: Atom
    plan: Tuple[PlanItem, ...]
    scope: ThreeValuedStructure

    @property
    def loops(self) -> List[Loop]:
        return [i for i in self.plan if isinstance(i, Loop)]


# ------------------------------------------------------------ generalization

_PREFIX = re.compile(r"[a-z]")


def generalize(e: Experience) -> GeneralizedExperience:
    """Replace every constant by a variable, consistently across task, K and plan.

    A constant typed by a static unary key-property gets that type's initial
    as prefix (``?b1`` for a block); numbering follows first occurrence.
    """
    type_of: Dict[str, str] = {}
    for k in e.key_properties:
        if k.temporal == "static" and len(k.terms) == 1 and not is_variable(k.terms[0]):
            type_of.setdefault(k.terms[0], k.pred)
    order: List[str] = []
    seen = set()

    def visit(terms):
        for t in terms:
            if not is_variable(t) and t not in seen:
                seen.add(t)
                order.append(t)

    visit(e.task.args)
    for k in e.key_properties:
        visit(k.terms)
    for a in e.plan:
        visit(a.args)
    visit(e.objects)

    counters: Dict[str, int] = {}
    var_map: Dict[str, str] = {}
    for c in order:
        m = _PREFIX.search(type_of.get(c, "x").lower())
        prefix = m.group(0) if m else "x"
        counters[prefix] = counters.get(prefix, 0) + 1
        var_map[c] = f"?{prefix}{counters[prefix]}"
    # keep the declared object order so degeneralize is exact
    declared = [c for c in dict.fromkeys(e.objects) if not is_variable(c)]
    var_map = {c: var_map[c] for c in declared + [c for c in var_map if c not in set(declared)]}
    return GeneralizedExperience(
        e.name, e.domain, e.task.substitute(var_map),
        tuple(k.rename(var_map) for k in e.key_properties),
        tuple(a.substitute(var_map) for a in e.plan),
        var_map,
    )


def abstract_actions(plan: Sequence[Atom], domain: Domain) -> List[Atom]:
    """Map each action to its parent head; actions without a parent are dropped."""
    out = []
    for act in plan:
        op = domain.concrete(act.pred, len(act.args))
        if op.parent is None:
            continue
        out.append(op.parent.substitute(binding_for(op, act)))
    return out


def extract_features(action: Atom, keyprops: Sequence[KeyProperty], task_params: Sequence[str]) -> Tuple[KeyProperty, ...]:
    """Key-properties that mention an argument of ``action`` and nothing outside
    the action arguments and the task parameters."""
    args = set(action.args)
    allowed = args | set(task_params)
    feats = {k for k in keyprops if args.intersection(k.terms) and allowed.issuperset(k.terms)}
    return tuple(sorted(feats, key=KeyProperty.sort_key))


def feature_shape(action: AbstractAction, task_params: Sequence[str]) -> Hashable:
    """Equality key for loop detection: head name/arity plus features with
    variable identity replaced by argument position or task-parameter slot."""
    args = list(action.head.args)
    tparams = list(task_params)

    def code(t: str, prefer_param: bool) -> tuple:
        if prefer_param and t in tparams:
            return ("t", tparams.index(t))
        if t in args:
            return ("a", args.index(t))
        if t in tparams:
            return ("t", tparams.index(t))
        return ("c", t)

    head_pattern = tuple(code(t, True) for t in args)
    feats = frozenset((k.temporal, k.pred, tuple(code(t, False) for t in k.terms)) for k in action.features)
    return (action.head.pred, len(args), head_pattern, feats)


# ------------------------------------------------------------ loop detection

def suffix_array(seq: Sequence[int]) -> List[int]:
    """Prefix-doubling suffix array (O(n log^2 n))."""
    n = len(seq)
    if n == 0:
        return []
    rank = list(seq)
    sa = list(range(n))
    k = 1
    while True:
        key = [(rank[i], rank[i + k] if i + k < n else -1) for i in range(n)]
        sa.sort(key=lambda i: key[i])
        new = [0] * n
        for j in range(1, n):
            new[sa[j]] = new[sa[j - 1]] + (key[sa[j]] != key[sa[j - 1]])
        rank = new
        if rank[sa[-1]] == n - 1 or k >= n:
            break
        k *= 2
    return sa


def lcp_array(seq: Sequence[int], sa: Sequence[int]) -> List[int]:
    """Kasai: ``lcp[r]`` is the common-prefix length of suffixes ``sa[r-1]`` and ``sa[r]``."""
    n = len(seq)
    rank = [0] * n
    for r, i in enumerate(sa):
        rank[i] = r
    lcp = [0] * n
    h = 0
    for i in range(n):
        r = rank[i]
        if r == 0:
            h = 0
            continue
        j = sa[r - 1]
        while i + h < n and j + h < n and seq[i + h] == seq[j + h]:
            h += 1
        lcp[r] = h
        if h:
            h -= 1
    return lcp


class SuffixIndex:
    """Suffix array + LCP array with O(1) range-minimum LCP queries."""

    def __init__(self, seq: Sequence[int]):
        self.seq = list(seq)
        self.sa = suffix_array(self.seq)
        self.lcp = lcp_array(self.seq, self.sa)
        n = len(self.seq)
        self.rank = [0] * n
        for r, i in enumerate(self.sa):
            self.rank[i] = r
        self._table = [self.lcp[:]]
        j = 1
        while (1 << j) <= n:
            prev = self._table[-1]
            half = 1 << (j - 1)
            self._table.append([min(prev[i], prev[i + half]) for i in range(n - (1 << j) + 1)])
            j += 1

    def common_prefix(self, i: int, j: int) -> int:
        n = len(self.seq)
        if i == j:
            return n - i
        a, b = sorted((self.rank[i], self.rank[j]))
        a += 1
        k = (b - a + 1).bit_length() - 1
        return min(self._table[k][a], self._table[k][b - (1 << k) + 1])

    def nlcp(self, i: int, j: int) -> int:
        """Non-overlapping common prefix: never longer than the suffixes' length difference."""
        return min(self.common_prefix(i, j), abs(i - j))

    def adjacent_nlcp(self) -> List[Tuple[int, int, int]]:
        """(suffix a, suffix b, nlcp) for consecutive suffixes in the suffix array."""
        return [(self.sa[r - 1], self.sa[r], min(self.lcp[r], abs(self.sa[r] - self.sa[r - 1])))
                for r in range(1, len(self.sa))]


class Run(NamedTuple):
    start: int
    period: int
    repeats: int

    @property
    def end(self) -> int:
        return self.start + self.period * self.repeats


@dataclass
class LoopDetection:
    runs: List[Run]
    # every non-overlapping common prefix consulted: (i, j, length)
    reported: List[Tuple[int, int, int]] = field(default_factory=list)


def _free_segments(n: int, runs: Sequence[Run]) -> List[Tuple[int, int]]:
    taken = sorted(runs)
    segs, pos = [], 0
    for r in taken:
        if r.start > pos:
            segs.append((pos, r.start))
        pos = max(pos, r.end)
    if pos < n:
        segs.append((pos, n))
    return segs


def detect_runs(keys: Sequence[Hashable]) -> LoopDetection:
    """Greedy contiguous-repeat detection on a key sequence.

    A tandem repeat of period p at s exists when the non-overlapping common
    prefix of suffixes s and s+p reaches p. Each round picks the run covering
    the most items (then leftmost, then shortest period) inside the still-free
    segments; claimed regions never nest or overlap.
    """
    ids: Dict[Hashable, int] = {}
    seq = [ids.setdefault(k, len(ids)) for k in keys]
    n = len(seq)
    det = LoopDetection([])
    if n < 2:
        return det
    index = SuffixIndex(seq)
    det.reported.extend(index.adjacent_nlcp())
    while True:
        best: Optional[Tuple[int, int, int, int]] = None
        for a, e in _free_segments(n, det.runs):
            for s in range(a, e):
                for p in range(1, (e - s) // 2 + 1):
                    nl = index.nlcp(s, s + p)
                    det.reported.append((s, s + p, nl))
                    if nl < p:
                        continue
                    r = min(1 + index.common_prefix(s, s + p) // p, (e - s) // p)
                    if r < 2:
                        continue
                    cand = (-(p * r), s, p, r)
                    if best is None or cand < best:
                        best = cand
        if best is None:
            break
        _, s, p, r = best
        det.runs.append(Run(s, p, r))
    det.runs.sort()
    return det


def _merge_iterations(iterations: List[List[AbstractAction]], task_params: Sequence[str]) -> Tuple[AbstractAction, ...]:
    """Keep a feature iff every iteration has it once its arguments are renamed
    positionally to the first iteration's."""
    first = iterations[0]
    body = []
    for q, act in enumerate(first):
        common = set(act.features)
        for it in iterations[1:]:
            other = it[q]
            ren = {a: b for a, b in zip(other.head.args, act.head.args)}
            ren.update({t: t for t in task_params})
            common &= {k.rename(ren) for k in other.features}
        body.append(AbstractAction(act.head, tuple(common)))
    return tuple(body)


def cnlcp_detect_loops(actions: Sequence[AbstractAction], task_params: Sequence[str] = ()) -> Tuple[PlanItem, ...]:
    """Fold contiguous repeats of equally-shaped actions into loops."""
    keys = [feature_shape(a, task_params) for a in actions]
    det = detect_runs(keys)
    items: List[PlanItem] = []
    runs = {r.start: r for r in det.runs}
    i = 0
    while i < len(actions):
        r = runs.get(i)
        if r is None:
            items.append(actions[i])
            i += 1
            continue
        iterations = [list(actions[r.start + k * r.period: r.start + (k + 1) * r.period]) for k in range(r.repeats)]
        items.append(Loop(_merge_iterations(iterations, task_params), r.repeats))
        i = r.end
    return tuple(items)


# ------------------------------------------------------------ learning

def schema_scope(keyprops: Sequence[KeyProperty], task: Atom) -> ThreeValuedStructure:
    return canonical_abstraction(struc_from_keyprops(keyprops, task.args))


def learn_schema(e: Experience, domain: Domain) -> ActivitySchema:
    g = generalize(e)
    heads = abstract_actions(g.plan, domain)
    for h in heads:
        domain.abstract(h.pred, len(h.args))
    params = list(g.task.args)
    acts = [AbstractAction(h, extract_features(h, g.key_properties, params)) for h in heads]
    plan = cnlcp_detect_loops(acts, params)
    return ActivitySchema(e.name, e.domain, g.task, plan, schema_scope(g.key_properties, g.task))


def expand(plan: Sequence[PlanItem]) -> List[AbstractAction]:
    """Unfold loops by their learned repeat counts (body copies, variables unchanged)."""
    out: List[AbstractAction] = []
    for item in plan:
        if isinstance(item, Loop):
            out.extend(list(item.body) * max(item.repeats, 1))
        else:
            out.append(item)
    return out
