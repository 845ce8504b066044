"""Schema retrieval and the two-level schema-based planner (SBP).

The abstract planner walks a schema's plan over the abstract operators,
choosing bindings by feature cost; the concrete planner substitutes concrete
operators for the abstract steps and bridges gaps with short searches over
operators that have no abstract parent. A plain breadth-first search is
included as a baseline for node counts.
"""

from __future__ import annotations

import time
from collections import deque
from dataclasses import dataclass, field
from typing import Dict, Iterator, List, Optional, Sequence, Tuple

from ebpd.conceptualizer import AbstractAction, ActivitySchema, Loop, PlanItem
from ebpd.logic import EmbeddingResult, KeyProperty, embeds_canonical, ident_key, struc_from_problem
from ebpd.model import (
    Atom,
    AtomIndex,
    Domain,
    ModelError,
    Operator,
    Problem,
    State,
    apply,
    ground_action,
    groundings,
    is_variable,
    validate_plan,
)

SOLVED = "solved"
NO_SCHEMA = "no-schema"
FAILED = "failed"
TIMEOUT = "timeout"


class PlanningError(Exception):
    def __init__(self, message: str, step: Optional[int] = None):
        self.step = step
        super().__init__(message)


# ---------------------------------------------------------------- library

class SchemaLibrary:
    """Ordered schema collection.

    With ``order="specific"`` (default) schemata are kept sorted by the
    indefiniteness of their scope (count of 1/2 entries plus summary nodes),
    insertion order breaking ties, so the tightest applicable scope is found
    first. ``order="insertion"`` keeps plain insertion order.
    """

    def __init__(self, schemata: Sequence[ActivitySchema] = (), order: str = "specific"):
        if order not in ("specific", "insertion"):
            raise ValueError(f"unknown library order {order!r}")
        self.order = order
        self._items: List[Tuple[int, ActivitySchema]] = []
        for s in schemata:
            self.add(s)

    def add(self, schema: ActivitySchema) -> None:
        self._items.append((len(self._items), schema))
        if self.order == "specific":
            self._items.sort(key=lambda t: (t[1].scope.indefiniteness(), t[0]))

    @property
    def schemata(self) -> List[ActivitySchema]:
        return [s for _, s in self._items]

    def __len__(self) -> int:
        return len(self._items)

    def __iter__(self):
        return iter(self.schemata)


@dataclass
class Retrieval:
    schema: Optional[ActivitySchema]
    elapsed: float
    tried: List[Tuple[str, EmbeddingResult]] = field(default_factory=list)


def retrieve_verbose(problem: Problem, lib: SchemaLibrary) -> Retrieval:
    t0 = time.perf_counter()
    c = struc_from_problem(problem)
    tried = []
    for s in lib:
        if s.task.pred != problem.task.pred or len(s.task.args) != len(problem.task.args):
            continue
        r = embeds_canonical(c, s.scope)
        tried.append((s.name, r))
        if r.embedded:
            return Retrieval(s, time.perf_counter() - t0, tried)
    return Retrieval(None, time.perf_counter() - t0, tried)


def retrieve(problem: Problem, lib: SchemaLibrary) -> Optional[ActivitySchema]:
    """First schema in library order whose head matches and whose scope embeds the problem."""
    return retrieve_verbose(problem, lib).schema


# ---------------------------------------------------------------- costs

class _Facts:
    def __init__(self, problem: Problem):
        self.by_tag = {"static": frozenset(problem.static), "init": frozenset(problem.init),
                       "end": frozenset(problem.goal)}


def unverified_features(action: AbstractAction, binding: Dict[str, str], problem: Problem,
                        _facts: Optional[_Facts] = None) -> List[KeyProperty]:
    facts = _facts or _Facts(problem)
    out = []
    for k in action.features:
        args = []
        for t in k.terms:
            if is_variable(t):
                if t not in binding:
                    raise ModelError(f"feature {k} has unbound variable {t}")
                args.append(binding[t])
            else:
                args.append(t)
        if Atom(k.pred, tuple(args)) not in facts.by_tag[k.temporal]:
            out.append(k)
    return out


def feature_cost(action: AbstractAction, binding: Dict[str, str], problem: Problem,
                 _facts: Optional[_Facts] = None) -> int:
    """Number of features of ``action`` that the problem does not confirm under ``binding``."""
    return len(unverified_features(action, binding, problem, _facts))


# ---------------------------------------------------------------- abstract planning

@dataclass(frozen=True)
class GroundStep:
    action: Atom
    item: int
    iteration: Optional[int] = None


@dataclass
class GroundAbstractPlan:
    steps: List[GroundStep] = field(default_factory=list)
    nodes_evaluated: int = 0
    final_state: Optional[State] = None

    @property
    def actions(self) -> List[Atom]:
        return [s.action for s in self.steps]


class _Candidate:
    __slots__ = ("actions", "state", "binding", "cost")

    def __init__(self, actions, state, binding, cost):
        self.actions = actions
        self.state = state
        self.binding = binding
        self.cost = cost


def _add(x: Tuple[int, int], y: Tuple[int, int]) -> Tuple[int, int]:
    return x[0] + y[0], x[1] + y[1]


def _sort_binding(b: Dict[str, str]) -> tuple:
    return tuple((k, ident_key(v)) for k, v in sorted(b.items()))


class _AbstractSearch:
    def __init__(self, schema: ActivitySchema, problem: Problem, domain: Domain, max_loop_rounds: int):
        self.schema = schema
        self.problem = problem
        self.domain = domain
        self.facts = _Facts(problem)
        self.static = AtomIndex(problem.static)
        self.objects = sorted(problem.objects, key=ident_key)
        self.goal = frozenset(problem.goal)
        self.nodes = 0
        self.max_loop_rounds = max_loop_rounds
        self.task_binding = dict(zip(schema.task.args, problem.task.args))

    def op_for(self, a: AbstractAction) -> Operator:
        return self.domain.abstract(a.head.pred, len(a.head.args))

    def instantiate(self, a: AbstractAction, state: State, binding: Dict[str, str]) -> Iterator[Tuple[Dict[str, str], State]]:
        """Applicable instantiations of one schema action; yields (extended binding, successor)."""
        op = self.op_for(a)
        fixed = {}
        for p, v in zip(op.params, a.head.args):
            if is_variable(v):
                if v in binding:
                    if p in fixed and fixed[p] != binding[v]:
                        return
                    fixed[p] = binding[v]
            else:
                fixed[p] = v
        idx = AtomIndex(state)
        found = []
        for g in groundings(op, idx, self.static, self.objects, fixed):
            nb = dict(binding)
            ok = True
            for p, v in zip(op.params, a.head.args):
                if nb.setdefault(v, g[p]) != g[p]:
                    ok = False
                    break
            if ok:
                found.append((nb, g))
        found.sort(key=lambda t: _sort_binding(t[1]))
        for nb, g in found:
            self.nodes += 1
            yield nb, apply(state, op, g)

    def score(self, a: AbstractAction, binding: Dict[str, str]) -> Tuple[int, int]:
        # (feature cost, unverified goal features); the second part only breaks ties
        miss = unverified_features(a, binding, self.problem, self.facts)
        return len(miss), sum(1 for k in miss if k.temporal == "end")

    def ground(self, a: AbstractAction, binding: Dict[str, str]) -> Atom:
        return Atom(a.head.pred, tuple(binding.get(v, v) for v in a.head.args))

    def lookahead(self, item: Optional[PlanItem], state: State, binding: Dict[str, str]) -> Tuple[int, int]:
        if item is None:
            return (0, 0)
        a = item.body[0] if isinstance(item, Loop) else item
        b = binding if not isinstance(item, Loop) else dict(self.task_binding)
        best = None
        for nb, _ in self.instantiate(a, state, b):
            c = self.score(a, nb)
            if best is None or c < best:
                best = c
                if c == (0, 0):
                    break
        # dead end ahead: worse than any single unverified feature set
        return best if best is not None else (len(a.features) + 1, 0)

    def action_candidates(self, a: AbstractAction, nxt: Optional[PlanItem], state: State,
                          binding: Dict[str, str]) -> List[_Candidate]:
        out = []
        for nb, s2 in self.instantiate(a, state, binding):
            c = _add(self.score(a, nb), self.lookahead(nxt, s2, nb))
            out.append(_Candidate([self.ground(a, nb)], s2, nb, c))
        return out

    def iteration_candidates(self, loop: Loop, state: State, visited) -> List[_Candidate]:
        """Full-body iterations with fresh loop variables; revisits are dropped so loops terminate."""
        out: List[_Candidate] = []

        def rec(q, st, b, acts, cost):
            if q == len(loop.body):
                if st not in visited:
                    out.append(_Candidate(acts, st, b, cost))
                return
            a = loop.body[q]
            for nb, s2 in self.instantiate(a, st, b):
                rec(q + 1, s2, nb, acts + [self.ground(a, nb)],
                    _add(cost, self.score(a, nb)))

        rec(0, state, dict(self.task_binding), [], (0, 0))
        return out

    def run(self) -> GroundAbstractPlan:
        plan = self.schema.plan
        state = frozenset(self.problem.init)
        binding = dict(self.task_binding)
        visited = {state}
        out = GroundAbstractPlan()
        i = 0
        pending_exit: Optional[_Candidate] = None
        while i < len(plan):
            item = plan[i]
            nxt = plan[i + 1] if i + 1 < len(plan) else None
            if pending_exit is not None:
                cand, pending_exit = pending_exit, None
            elif isinstance(item, AbstractAction):
                cands = self.action_candidates(item, nxt, state, binding)
                if not cands:
                    raise PlanningError(f"no applicable instance of {item.head} (schema item {i})", i)
                cand = min(cands, key=lambda c: c.cost)
            else:
                cand = None
                rounds = 0
                while True:
                    if nxt is None and self.goal <= state:
                        break
                    if rounds >= self.max_loop_rounds:
                        break
                    loop_c = self.iteration_candidates(item, state, visited)
                    exit_c: List[_Candidate] = []
                    if isinstance(nxt, AbstractAction):
                        after = plan[i + 2] if i + 2 < len(plan) else None
                        exit_c = self.action_candidates(nxt, after, state, binding)
                    best_loop = min(loop_c, key=lambda c: c.cost) if loop_c else None
                    best_exit = min(exit_c, key=lambda c: c.cost) if exit_c else None
                    if best_loop is None or (best_exit is not None and best_exit.cost < best_loop.cost):
                        pending_exit = best_exit
                        break
                    state = best_loop.state
                    visited.add(state)
                    out.steps.extend(GroundStep(a, i, rounds) for a in best_loop.actions)
                    rounds += 1
                i += 1
                continue
            state = cand.state
            visited.add(state)
            out.steps.extend(GroundStep(a, i) for a in cand.actions)
            i += 1
        out.nodes_evaluated = self.nodes
        out.final_state = state
        # goal atoms the abstract operators can change must hold already
        tracked = {a.pred for op in self.domain.abstract_ops for a in op.add + op.delete}
        missing = [g for g in self.problem.goal if g.pred in tracked and g not in state]
        if missing:
            raise PlanningError(f"abstract plan ends without goal atom {missing[0]}", len(plan))
        return out


def plan_abstract(schema: ActivitySchema, problem: Problem, domain: Domain,
                  max_loop_rounds: Optional[int] = None) -> GroundAbstractPlan:
    """Instantiate the schema's abstract plan for ``problem`` (loops unrolled)."""
    rounds = max_loop_rounds if max_loop_rounds is not None else 4 * len(problem.objects) + 8
    return _AbstractSearch(schema, problem, domain, rounds).run()


# ---------------------------------------------------------------- concrete planning

@dataclass
class PlanResult:
    status: str
    plan: List[Atom] = field(default_factory=list)
    nodes_evaluated: int = 0
    elapsed: float = 0.0
    schema_used: Optional[str] = None
    retrieval_time: float = 0.0
    abstract_plan: Optional[GroundAbstractPlan] = None
    message: str = ""
    failed_step: Optional[int] = None

    @property
    def solved(self) -> bool:
        return self.status == SOLVED


class _NodeLimit(Exception):
    pass


class _ConcreteSearch:
    def __init__(self, problem: Problem, domain: Domain, bridge_depth: int, node_limit: int):
        self.problem = problem
        self.domain = domain
        self.static = AtomIndex(problem.static)
        self.objects = sorted(problem.objects, key=ident_key)
        self.bridge_ops = domain.unparented()
        self.bridge_depth = bridge_depth
        self.node_limit = node_limit
        self.nodes = 0
        self.deepest = 0

    def tick(self) -> None:
        self.nodes += 1
        if self.nodes > self.node_limit:
            raise _NodeLimit()

    def refine_here(self, step: Atom, state: State) -> Iterator[Tuple[Atom, State]]:
        idx = AtomIndex(state)
        for op in self.domain.refinements(step.pred, len(step.args)):
            fixed = dict(zip(op.parent.args, step.args))
            for g in groundings(op, idx, self.static, self.objects, fixed):
                self.tick()
                yield ground_action(op, g), apply(state, op, g)

    def bridges(self, state: State, depth: int, seen) -> Iterator[Tuple[List[Atom], State]]:
        if depth == 0:
            yield [], state
            return
        idx = AtomIndex(state)
        for op in self.bridge_ops:
            for g in groundings(op, idx, self.static, self.objects):
                s2 = apply(state, op, g)
                if s2 in seen:
                    continue
                self.tick()
                for rest, s3 in self.bridges(s2, depth - 1, seen | {s2}):
                    yield [ground_action(op, g)] + rest, s3

    def options(self, step: Atom, state: State) -> Iterator[Tuple[List[Atom], State]]:
        # iterative deepening on the bridge length
        for d in range(self.bridge_depth + 1):
            for bridge, s2 in self.bridges(state, d, {state}):
                for act, s3 in self.refine_here(step, s2):
                    yield bridge + [act], s3

    def final_options(self, state: State) -> Iterator[Tuple[List[Atom], State]]:
        goal = frozenset(self.problem.goal)
        for d in range(self.bridge_depth + 1):
            for bridge, s2 in self.bridges(state, d, {state}):
                if goal <= s2:
                    yield bridge, s2

    def run(self, steps: Sequence[Atom]) -> List[Atom]:
        state = frozenset(self.problem.init)
        # explicit DFS stack of option iterators; one frame per abstract step
        frames = [self.options(steps[0], state)] if steps else []
        chosen: List[Tuple[List[Atom], State]] = []
        while True:
            k = len(chosen)
            if k == len(steps) + 1:
                break
            if k == len(frames):
                cur = chosen[-1][1] if chosen else state
                frames.append(self.options(steps[k], cur) if k < len(steps) else self.final_options(cur))
            nxt = next(frames[k], None)
            if nxt is None:
                frames.pop()
                if not chosen:
                    raise PlanningError(f"no refinement for abstract step {k}: {steps[k] if k < len(steps) else 'goal'}", k)
                chosen.pop()
                continue
            chosen.append(nxt)
            self.deepest = max(self.deepest, len(chosen))
        return [a for acts, _ in chosen for a in acts]


def plan_concrete(skeleton: GroundAbstractPlan, problem: Problem, domain: Domain,
                  bridge_depth: int = 3, node_limit: int = 200_000) -> PlanResult:
    """Substitute concrete actions for the skeleton's steps, bridging with parentless operators."""
    t0 = time.perf_counter()
    search = _ConcreteSearch(problem, domain, bridge_depth, node_limit)
    try:
        plan = search.run(skeleton.actions)
    except PlanningError as exc:
        return PlanResult(FAILED, [], search.nodes, time.perf_counter() - t0, message=str(exc),
                          failed_step=exc.step, abstract_plan=skeleton)
    except _NodeLimit:
        return PlanResult(TIMEOUT, [], search.nodes, time.perf_counter() - t0,
                          message=f"node limit {node_limit} reached", failed_step=search.deepest,
                          abstract_plan=skeleton)
    report = validate_plan(problem, plan, domain)
    status = SOLVED if report.valid else FAILED
    return PlanResult(status, plan, search.nodes, time.perf_counter() - t0,
                      message=report.message, abstract_plan=skeleton)


def solve(problem: Problem, lib: SchemaLibrary, domain: Domain, bridge_depth: int = 3,
          node_limit: int = 200_000) -> PlanResult:
    """Retrieve a schema, instantiate it, refine it. Retrieval time is kept apart."""
    r = retrieve_verbose(problem, lib)
    if r.schema is None:
        return PlanResult(NO_SCHEMA, retrieval_time=r.elapsed, message="no applicable schema")
    t0 = time.perf_counter()
    try:
        skel = plan_abstract(r.schema, problem, domain)
    except PlanningError as exc:
        return PlanResult(FAILED, [], 0, time.perf_counter() - t0, r.schema.name, r.elapsed,
                          message=str(exc), failed_step=exc.step)
    res = plan_concrete(skel, problem, domain, bridge_depth, node_limit)
    res.nodes_evaluated += skel.nodes_evaluated
    res.elapsed = time.perf_counter() - t0
    res.schema_used = r.schema.name
    res.retrieval_time = r.elapsed
    return res


# ---------------------------------------------------------------- baseline

def baseline_forward_search(problem: Problem, domain: Domain, node_limit: int = 100_000,
                            time_limit: float = 60.0) -> PlanResult:
    """Breadth-first search over concrete operators with duplicate detection.

    ``nodes_evaluated`` counts expanded (popped) states.
    """
    t0 = time.perf_counter()
    static = AtomIndex(problem.static)
    objects = sorted(problem.objects, key=ident_key)
    goal = frozenset(problem.goal)
    start = frozenset(problem.init)
    parent: Dict[State, Optional[Tuple[State, Atom]]] = {start: None}
    queue = deque([start])
    nodes = 0
    while queue:
        if nodes >= node_limit or time.perf_counter() - t0 > time_limit:
            return PlanResult(TIMEOUT, [], nodes, time.perf_counter() - t0, message="search limit reached")
        state = queue.popleft()
        nodes += 1
        if goal <= state:
            plan = []
            cur = state
            while parent[cur] is not None:
                prev, act = parent[cur]
                plan.append(act)
                cur = prev
            return PlanResult(SOLVED, plan[::-1], nodes, time.perf_counter() - t0)
        idx = AtomIndex(state)
        for op in domain.concrete_ops:
            for g in groundings(op, idx, static, objects):
                s2 = apply(state, op, g)
                if s2 not in parent:
                    parent[s2] = (state, ground_action(op, g))
                    queue.append(s2)
    return PlanResult(FAILED, [], nodes, time.perf_counter() - t0, message="search space exhausted")
