"""Random structure builders and brute-force oracles shared by the tests."""

import itertools
import random
from collections import defaultdict

from hypothesis import strategies as st

from ebpd.logic import (
    TEMPORAL_TAGS,
    KeyProperty,
    TruthValue,
    TwoValuedStructure,
    struc_from_keyprops,
)
from ebpd.conceptualizer import AbstractAction, ActivitySchema, Loop, schema_scope
from ebpd.model import Domain, Experience, Operator, Problem, atom


def random_keyprops(rng: random.Random, n_objects: int, n_preds: int, max_arity: int = 2,
                    density: float = 0.3, unary_names=None):
    objs = [f"o{i}" for i in range(n_objects)]
    preds = []
    for k in range(n_preds):
        preds.append((rng.choice(TEMPORAL_TAGS), f"p{k}", rng.randint(1, max_arity)))
    ks = []
    for tag, name, ar in preds:
        for tup in itertools.product(objs, repeat=ar):
            if rng.random() < density:
                ks.append(KeyProperty(tag, name, tup))
    if unary_names is not None:
        # force each object into one of the given canonical names
        ks = [k for k in ks if len(k.terms) != 1]
        for o in objs:
            for tag, name in rng.choice(unary_names):
                ks.append(KeyProperty(tag, name, (o,)))
    return ks, objs


def random_structure(rng: random.Random, max_objects: int = 6, max_preds: int = 4, **kw) -> TwoValuedStructure:
    n = rng.randint(1, max_objects)
    ks, objs = random_keyprops(rng, n, rng.randint(1, max_preds), **kw)
    return struc_from_keyprops(ks, objs)


@st.composite
def structures(draw, max_objects=6, max_preds=4, max_arity=2):
    n = draw(st.integers(1, max_objects))
    objs = [f"o{i}" for i in range(n)]
    npred = draw(st.integers(0, max_preds))
    ks = []
    for k in range(npred):
        tag = draw(st.sampled_from(TEMPORAL_TAGS))
        ar = draw(st.integers(1, max_arity))
        tuples = list(itertools.product(objs, repeat=ar))
        chosen = draw(st.lists(st.sampled_from(tuples), max_size=len(tuples)))
        ks += [KeyProperty(tag, f"p{k}", t) for t in chosen]
    return struc_from_keyprops(ks, objs)


def brute_join_table(c: TwoValuedStructure):
    """Abstract truth values by enumerating every concrete tuple of every predicate."""
    name = {u: frozenset(p for p in c.vocabulary if p.arity == 1 and (u,) in c.truths.get(p, ()))
            for u in c.universe}
    node = {}
    for u in sorted(c.universe):
        node.setdefault(name[u], []).append(u)
    rep = {u: min(node[name[u]], key=lambda x: int(x[1:]) if x[1:].isdigit() else x) for u in c.universe}
    table = {}
    for p in c.vocabulary:
        vals = defaultdict(set)
        for tup in itertools.product(sorted(c.universe), repeat=p.arity):
            img = tuple(rep[o] for o in tup)
            vals[img].add(TruthValue.TRUE if tup in c.truths.get(p, ()) else TruthValue.FALSE)
        for img, vs in vals.items():
            table[(p, img)] = vs.pop() if len(vs) == 1 else TruthValue.MAYBE
    return table, rep


def brute_runs(seq):
    """Greedy periodic-run decomposition by direct enumeration of (start, period, repeats).

    Each round takes the run covering most items, then the leftmost, then the
    shortest period, among runs inside still-unclaimed segments.
    """
    n = len(seq)
    taken = []
    while True:
        free, pos = [], 0
        for s, p, r in sorted(taken):
            if s > pos:
                free.append((pos, s))
            pos = s + p * r
        if pos < n:
            free.append((pos, n))
        best = None
        for a, e in free:
            for s in range(a, e):
                for p in range(1, e - s + 1):
                    for r in range(2, (e - s) // p + 1):
                        if list(seq[s:s + p]) * r != list(seq[s:s + p * r]):
                            break
                        cand = (-(p * r), s, p, r)
                        if best is None or cand < best:
                            best = cand
        if best is None:
            return sorted(taken)
        taken.append(best[1:])


# ---------------------------------------------------------------- random documents

def _random_atoms(rng, preds, objs, k):
    out = []
    for _ in range(k):
        name, ar = rng.choice(preds)
        out.append(atom(name, *(rng.choice(objs) for _ in range(ar))))
    return list(dict.fromkeys(out))


def random_experience(rng: random.Random, variables: bool = False) -> Experience:
    mark = "?" if variables else ""
    objs = [f"{mark}{rng.choice('abcxyz')}{i}" for i in range(rng.randint(1, 7))]
    preds = [(f"q{k}", rng.randint(0, 3)) for k in range(rng.randint(1, 4))]
    ks = []
    for _ in range(rng.randint(0, 15)):
        name, ar = rng.choice(preds)
        ks.append(KeyProperty(rng.choice(TEMPORAL_TAGS), name, tuple(rng.choice(objs) for _ in range(ar))))
    ks = list(dict.fromkeys(ks))
    plan = [atom(f"op{rng.randint(0, 3)}", *(rng.choice(objs) for _ in range(rng.randint(0, 3))))
            for _ in range(rng.randint(0, 10))]
    task = atom("task", *rng.sample(objs, rng.randint(0, min(2, len(objs)))))
    return Experience(f"e{rng.randint(0, 999)}", "dom", task, tuple(objs), tuple(ks), tuple(plan))


def random_problem(rng: random.Random) -> Problem:
    objs = [f"o{i}" for i in range(rng.randint(1, 8))]
    preds = [(f"q{k}", rng.randint(0, 3)) for k in range(rng.randint(1, 4))]
    parts = [_random_atoms(rng, preds, objs, rng.randint(0, 10)) for _ in range(3)]
    task = atom("task", *rng.sample(objs, rng.randint(0, min(2, len(objs)))))
    return Problem(f"p{rng.randint(0, 999)}", "dom", task, tuple(objs), *map(tuple, parts))


def random_schema(rng: random.Random) -> ActivitySchema:
    e = random_experience(rng, variables=True)
    acts = []
    for a in e.plan:
        feats = [k for k in e.key_properties if rng.random() < 0.3]
        acts.append(AbstractAction(a, tuple(feats)))
    items, i = [], 0
    while i < len(acts):
        if rng.random() < 0.3:
            k = rng.randint(1, 3)
            items.append(Loop(tuple(acts[i:i + k])))
            i += k
        else:
            items.append(acts[i])
            i += 1
    return ActivitySchema(e.name, e.domain, e.task, tuple(items), schema_scope(e.key_properties, e.task))




def random_domain(rng: random.Random) -> Domain:
    def op(name, params, kind, parent=None):
        def atoms(k):
            return tuple(dict.fromkeys(atom(f"f{rng.randint(0, 3)}", *rng.sample(params, min(len(params), 1)))
                                       for _ in range(rng.randint(0, k))))
        return Operator(name, tuple(params), atoms(2), atoms(3), atoms(2), atoms(2), parent, kind)

    abstract = []
    for k in range(rng.randint(0, 3)):
        abstract.append(op(f"a{k}", [f"?v{i}" for i in range(rng.randint(0, 3))], "abstract"))
    concrete = []
    for k in range(rng.randint(0, 4)):
        params = [f"?v{i}" for i in range(rng.randint(0, 4))]
        parent = None
        fitting = [a for a in abstract if a.arity <= len(params)]
        if fitting and rng.random() < 0.6:
            a = rng.choice(fitting)
            parent = atom(a.name, *sorted(rng.sample(params, a.arity), key=params.index))
        concrete.append(op(f"c{k}", params, "concrete", parent))
    return Domain(f"d{rng.randint(0, 99)}", tuple(abstract), tuple(concrete))


def random_document(rng: random.Random):
    return rng.choice([random_domain, random_experience, random_problem, random_schema])(rng)
