"""EBPD domain model: atoms, operators, the abstraction hierarchy, problems,
experiences, STRIPS state progression and plan validation.

States are closed-world frozensets of ground atoms. Static information is
kept apart from the state and is never touched by ``apply``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, FrozenSet, Iterable, Iterator, List, Mapping, NamedTuple, Optional, Sequence, Tuple

from ebpd.logic import KeyProperty, ident_key

Binding = Mapping[str, str]
State = FrozenSet["Atom"]


def is_variable(term: str) -> bool:
    return term.startswith("?")


class ModelError(Exception):
    pass


class NotApplicableError(ModelError):
    def __init__(self, op_name: str, atom: "Atom", where: str):
        self.atom = atom
        self.where = where
        super().__init__(f"{op_name}: {where} atom {atom} does not hold")


class Atom(NamedTuple):
    pred: str
    args: Tuple[str, ...] = ()

    def __str__(self) -> str:
        return "(" + " ".join((self.pred,) + tuple(self.args)) + ")"

    @property
    def arity(self) -> int:
        return len(self.args)

    def is_ground(self) -> bool:
        return not any(is_variable(a) for a in self.args)

    def variables(self) -> Tuple[str, ...]:
        return tuple(a for a in self.args if is_variable(a))

    def substitute(self, binding: Binding) -> "Atom":
        return Atom(self.pred, tuple(binding.get(a, a) for a in self.args))

    def sort_key(self) -> tuple:
        return (self.pred, tuple(ident_key(a) for a in self.args))


def atom(pred: str, *args: str) -> Atom:
    return Atom(pred, tuple(args))


@dataclass(frozen=True)
class Operator:
    """Planning operator <h, S, P, E>. Effects are split into add/delete lists."""

    name: str
    params: Tuple[str, ...]
    static: Tuple[Atom, ...] = ()
    precondition: Tuple[Atom, ...] = ()
    add: Tuple[Atom, ...] = ()
    delete: Tuple[Atom, ...] = ()
    parent: Optional[Atom] = None
    kind: str = "concrete"

    @property
    def arity(self) -> int:
        return len(self.params)

    @property
    def head(self) -> Atom:
        return Atom(self.name, self.params)

    def check(self) -> None:
        """Raise ``ModelError`` if the operator breaks the hierarchy invariants."""
        params = set(self.params)
        for part in (self.static, self.precondition, self.add, self.delete):
            for a in part:
                for v in a.variables():
                    if v not in params:
                        raise ModelError(f"operator {self.name}: variable {v} in {a} is not a parameter")
        if self.kind == "abstract" and self.parent is not None:
            raise ModelError(f"abstract operator {self.name} cannot have a parent")
        if self.parent is not None:
            # parent args must be a subsequence of our parameters
            it = iter(self.params)
            if not all(any(p == a for p in it) for a in self.parent.args):
                raise ModelError(f"operator {self.name}: parent {self.parent} is not a parameter subsequence")


@dataclass(frozen=True)
class Domain:
    name: str
    abstract_ops: Tuple[Operator, ...] = ()
    concrete_ops: Tuple[Operator, ...] = ()

    def __post_init__(self):
        abstract = {(o.name, o.arity) for o in self.abstract_ops}
        for o in self.abstract_ops + self.concrete_ops:
            o.check()
        for o in self.concrete_ops:
            if o.parent is not None and (o.parent.pred, o.parent.arity) not in abstract:
                raise ModelError(f"operator {o.name}: parent {o.parent} is not a declared abstract operator")

    def concrete(self, name: str, arity: Optional[int] = None) -> Operator:
        for o in self.concrete_ops:
            if o.name == name and (arity is None or o.arity == arity):
                return o
        raise ModelError(f"unknown concrete operator {name}" + ("" if arity is None else f"/{arity}"))

    def abstract(self, name: str, arity: Optional[int] = None) -> Operator:
        for o in self.abstract_ops:
            if o.name == name and (arity is None or o.arity == arity):
                return o
        raise ModelError(f"unknown abstract operator {name}" + ("" if arity is None else f"/{arity}"))

    def refinements(self, abstract_name: str, arity: int) -> List[Operator]:
        """Concrete operators whose parent is the given abstract head."""
        return [o for o in self.concrete_ops
                if o.parent is not None and o.parent.pred == abstract_name and o.parent.arity == arity]

    def unparented(self) -> List[Operator]:
        return [o for o in self.concrete_ops if o.parent is None]


@dataclass(frozen=True)
class Problem:
    """Task planning problem <t, sigma, s0, g>."""

    name: str
    domain: str
    task: Atom
    objects: Tuple[str, ...]
    static: Tuple[Atom, ...] = ()
    init: Tuple[Atom, ...] = ()
    goal: Tuple[Atom, ...] = ()

    def key_properties(self) -> List[KeyProperty]:
        out = [KeyProperty("static", a.pred, a.args) for a in self.static]
        out += [KeyProperty("init", a.pred, a.args) for a in self.init]
        out += [KeyProperty("end", a.pred, a.args) for a in self.goal]
        return out

    def initial_state(self) -> State:
        return frozenset(self.init)


@dataclass(frozen=True)
class Experience:
    """Ground experience <t, K, pi>."""

    name: str
    domain: str
    task: Atom
    objects: Tuple[str, ...]
    key_properties: Tuple[KeyProperty, ...] = ()
    plan: Tuple[Atom, ...] = ()

    def as_problem(self, name: Optional[str] = None) -> Problem:
        by = {"static": [], "init": [], "end": []}
        for k in self.key_properties:
            by[k.temporal].append(Atom(k.pred, k.terms))
        return Problem(name or self.name, self.domain, self.task, self.objects,
                       tuple(by["static"]), tuple(by["init"]), tuple(by["end"]))


# ---------------------------------------------------------------- grounding

class AtomIndex:
    """Atoms bucketed by predicate name, each bucket in a fixed order."""

    __slots__ = ("_by_pred", "_atoms")

    def __init__(self, atoms: Iterable[Atom]):
        self._atoms = frozenset(atoms)
        by: Dict[str, List[Tuple[str, ...]]] = {}
        for a in self._atoms:
            by.setdefault(a.pred, []).append(a.args)
        for args in by.values():
            args.sort(key=lambda t: tuple(ident_key(x) for x in t))
        self._by_pred = by

    def __contains__(self, a: Atom) -> bool:
        return a in self._atoms

    def candidates(self, pred: str) -> List[Tuple[str, ...]]:
        return self._by_pred.get(pred, [])


def _unify(pattern: Atom, args: Tuple[str, ...], binding: Dict[str, str]) -> Optional[Dict[str, str]]:
    if len(args) != len(pattern.args):
        return None
    out = None
    for p, a in zip(pattern.args, args):
        if is_variable(p):
            cur = binding.get(p) if out is None else out.get(p)
            if cur is None:
                if out is None:
                    out = dict(binding)
                out[p] = a
            elif cur != a:
                return None
        elif p != a:
            return None
    return binding if out is None else out


def _match(patterns: List[Tuple[Atom, AtomIndex]], binding: Dict[str, str]) -> Iterator[Dict[str, str]]:
    if not patterns:
        yield binding
        return
    # most-bound pattern first, then the smallest bucket
    best, best_key = 0, None
    for k, (pat, idx) in enumerate(patterns):
        unbound = sum(1 for a in pat.args if is_variable(a) and a not in binding)
        key = (unbound, len(idx.candidates(pat.pred)))
        if best_key is None or key < best_key:
            best, best_key = k, key
    pat, idx = patterns[best]
    rest = patterns[:best] + patterns[best + 1:]
    if best_key[0] == 0:
        if pat.substitute(binding) in idx:
            yield from _match(rest, binding)
        return
    for args in idx.candidates(pat.pred):
        b = _unify(pat, args, binding)
        if b is not None:
            yield from _match(rest, b)


def groundings(op: Operator, state: AtomIndex, static: AtomIndex, objects: Sequence[str],
               fixed: Optional[Binding] = None) -> Iterator[Dict[str, str]]:
    """Yield every parameter binding (extending ``fixed``) under which ``op`` is applicable."""
    start = {v: c for v, c in (fixed or {}).items() if v in op.params}
    patterns = [(a, static) for a in op.static] + [(a, state) for a in op.precondition]
    free_objects = sorted(objects, key=ident_key)
    for b in _match(patterns, start):
        missing = [p for p in op.params if p not in b]
        if not missing:
            yield b
            continue
        yield from _fill(missing, b, free_objects)


def _fill(missing: List[str], b: Dict[str, str], objects: List[str]) -> Iterator[Dict[str, str]]:
    if not missing:
        yield b
        return
    for o in objects:
        nb = dict(b)
        nb[missing[0]] = o
        yield from _fill(missing[1:], nb, objects)


# ---------------------------------------------------------------- progression

def _require_total(op: Operator, binding: Binding) -> None:
    missing = [p for p in op.params if p not in binding]
    if missing:
        raise ModelError(f"{op.name}: binding is missing {', '.join(missing)}")


def applicable(state: Iterable[Atom], static_info: Iterable[Atom], op: Operator, binding: Binding) -> bool:
    _require_total(op, binding)
    state = state if isinstance(state, (set, frozenset)) else frozenset(state)
    static_info = static_info if isinstance(static_info, (set, frozenset)) else frozenset(static_info)
    return (all(a.substitute(binding) in static_info for a in op.static)
            and all(a.substitute(binding) in state for a in op.precondition))


def apply(state: Iterable[Atom], op: Operator, binding: Binding,
          static_info: Optional[Iterable[Atom]] = None) -> State:
    """Progress ``state`` through ``op``: deletes first, then adds.

    When ``static_info`` is given the static part is checked as well.
    """
    _require_total(op, binding)
    state = frozenset(state)
    if static_info is not None:
        static_info = frozenset(static_info)
        for a in op.static:
            g = a.substitute(binding)
            if g not in static_info:
                raise NotApplicableError(op.name, g, "static")
    for a in op.precondition:
        g = a.substitute(binding)
        if g not in state:
            raise NotApplicableError(op.name, g, "precondition")
    dels = {a.substitute(binding) for a in op.delete}
    adds = {a.substitute(binding) for a in op.add}
    return frozenset((state - dels) | adds)


def ground_action(op: Operator, binding: Binding) -> Atom:
    return Atom(op.name, tuple(binding[p] for p in op.params))


def binding_for(op: Operator, action: Atom) -> Dict[str, str]:
    if len(action.args) != op.arity:
        raise ModelError(f"{action}: {op.name} expects {op.arity} arguments")
    b: Dict[str, str] = {}
    for p, a in zip(op.params, action.args):
        if b.get(p, a) != a:
            raise ModelError(f"{action}: inconsistent binding for {p}")
        b[p] = a
    return b


@dataclass
class ValidationReport:
    success: bool
    goal_satisfied: bool
    final_state: State
    failed_step: Optional[int] = None
    message: str = ""
    trace: List[State] = field(default_factory=list, repr=False)

    @property
    def valid(self) -> bool:
        return self.success and self.goal_satisfied


def validate_plan(problem: Problem, plan: Sequence[Atom], domain: Domain) -> ValidationReport:
    """Simulate ``plan`` from the initial state using the concrete operators."""
    static = frozenset(problem.static)
    state = problem.initial_state()
    trace = [state]
    for i, act in enumerate(plan):
        try:
            op = domain.concrete(act.pred, len(act.args))
            state = apply(state, op, binding_for(op, act), static)
        except ModelError as exc:
            return ValidationReport(False, False, state, i, str(exc), trace)
        trace.append(state)
    goal_ok = all(g in state for g in problem.goal)
    return ValidationReport(True, goal_ok, state, None, "" if goal_ok else "goal not satisfied", trace)
