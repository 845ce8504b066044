"""Seeded problem generators and scripted teachers for STACK and ROVER.

The teachers play the role of the human instructor: they produce one
solution plan per problem, which together with the problem's key-properties
forms a learning experience.
"""

from __future__ import annotations

from dataclasses import dataclass
from importlib import resources
from typing import Dict, List, Optional, Sequence, Tuple

from ebpd.model import Atom, Domain, Experience, Problem, atom

STACK_CLASSES = ("base", "i", "ii", "iii")
_MASK = (1 << 64) - 1


class GeneratorError(ValueError):
    pass


class SplitMix64:
    """SplitMix64 stream. Spelled out so other implementations can reproduce fixtures."""

    def __init__(self, seed: int):
        self.state = seed & _MASK

    def next_u64(self) -> int:
        self.state = (self.state + 0x9E3779B97F4A7C15) & _MASK
        z = self.state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
        return z ^ (z >> 31)

    def below(self, n: int) -> int:
        """Uniform integer in [0, n) by rejection."""
        if n <= 0:
            raise ValueError("n must be positive")
        limit = (1 << 64) - ((1 << 64) % n)
        while True:
            x = self.next_u64()
            if x < limit:
                return x % n

    def randint(self, lo: int, hi: int) -> int:
        return lo + self.below(hi - lo + 1)

    def coin(self) -> bool:
        return self.next_u64() >> 63 == 1

    def shuffle(self, xs: list) -> list:
        # Fisher-Yates, high index first
        for i in range(len(xs) - 1, 0, -1):
            j = self.below(i + 1)
            xs[i], xs[j] = xs[j], xs[i]
        return xs

    def sample(self, xs: Sequence, k: int) -> list:
        pool = list(xs)
        self.shuffle(pool)
        return pool[:k]


def load_fixture(name: str) -> str:
    return resources.files("ebpd").joinpath("fixtures", name).read_text()


def stack_domain() -> Domain:
    from ebpd.ebpdtext import parse_domain
    return parse_domain(load_fixture("stack-domain.ebpd"), "stack-domain.ebpd")


def rover_domain() -> Domain:
    from ebpd.ebpdtext import parse_domain
    return parse_domain(load_fixture("rover-domain.ebpd"), "rover-domain.ebpd")


# ---------------------------------------------------------------- STACK

@dataclass(frozen=True)
class StackLayout:
    """Generated STACK instance before it is rendered as a problem."""

    cls: str
    blues: Tuple[str, ...]
    reds: Tuple[str, ...]
    source: Tuple[str, ...]  # initial pile on p2, bottom to top (empty for base)
    chain: Tuple[str, ...]  # goal pile on p1, bottom to top


def stack_layout(cls: str, n: int, seed: Optional[int] = 0, shuffle: bool = True) -> StackLayout:
    """Decide block placement for class ``cls`` with ``n`` blue and ``n`` red blocks.

    Blues are b1..bn and reds b(n+1)..b(2n). ``shuffle=False`` keeps the
    numeric order everywhere (used for the hand-written base experience).
    """
    if cls not in STACK_CLASSES:
        raise GeneratorError(f"unknown STACK class {cls!r}")
    if not isinstance(n, int) or n < 1:
        raise GeneratorError("block count per colour must be >= 1")
    blues = [f"b{i}" for i in range(1, n + 1)]
    reds = [f"b{i}" for i in range(n + 1, 2 * n + 1)]
    rng = SplitMix64(seed or 0)
    if shuffle:
        rng.shuffle(blues)
        rng.shuffle(reds)
    if cls == "base":
        source: List[str] = []
        chain = blues + reds
    elif cls == "i":
        # red bottom, blue top; unstacking feeds the goal pile directly
        source = reds + blues
        chain = source[::-1]
    else:
        first, second = (blues, reds) if cls == "ii" else (reds, blues)
        source = [x for pair in zip(first, second) for x in pair]
        b2, r2 = list(blues), list(reds)
        if shuffle:
            rng.shuffle(b2)
            rng.shuffle(r2)
        chain = b2 + r2
    return StackLayout(cls, tuple(f"b{i}" for i in range(1, n + 1)),
                       tuple(f"b{i}" for i in range(n + 1, 2 * n + 1)), tuple(source), tuple(chain))


def stack_problem(layout: StackLayout, name: str) -> Problem:
    has_source = bool(layout.source)
    blocks = layout.blues + layout.reds
    objects = ["t1", "t2"] + (["t3"] if has_source else []) + ["l1", "h1", "p1"] \
        + (["p2"] if has_source else []) + list(blocks)
    static = [atom("table", "t1"), atom("pile", "t2")]
    if has_source:
        static.append(atom("pile", "t3"))
    static += [atom("location", "l1"), atom("hoist", "h1"), atom("pallet", "p1")]
    if has_source:
        static.append(atom("pallet", "p2"))
    static += [atom("at", "t1", "l1"), atom("at", "t2", "l1")]
    if has_source:
        static.append(atom("at", "t3", "l1"))
    static += [atom("block", b) for b in blocks]
    static += [atom("blue", b) for b in layout.blues] + [atom("red", b) for b in layout.reds]
    init = [atom("empty", "h1"), atom("near", "h1", "t1"), atom("top", "p1", "t2")]
    if has_source:
        below = "p2"
        for b in layout.source:
            init.append(atom("on", b, below))
            below = b
        init.append(atom("top", below, "t3"))
    else:
        init += [atom("ontable", b, "t1") for b in blocks]
    goal = []
    below = "p1"
    for b in layout.chain:
        goal.append(atom("on", b, below))
        below = b
    return Problem(name, "stack", atom("stack", "t1", "t2"), tuple(objects),
                   tuple(static), tuple(init), tuple(goal))


def gen_stack(cls: str, n: int, seed: int = 0, name: Optional[str] = None) -> Problem:
    """Generate a STACK problem of class ``cls`` with ``n`` blue and ``n`` red blocks."""
    layout = stack_layout(cls, n, seed)
    return stack_problem(layout, name or f"stack-{cls}-n{n}-s{seed}")


class _Hoist:
    def __init__(self, pos: str):
        self.pos = pos
        self.plan: List[Atom] = []

    def goto(self, where: str) -> None:
        if self.pos != where:
            self.plan.append(atom("move", "h1", self.pos, where, "l1"))
            self.pos = where

    def do(self, *args: str) -> None:
        self.plan.append(atom(*args))


def stack_teacher(layout: StackLayout) -> List[Atom]:
    """Scripted solution: clear the source pile, then build the goal pile."""
    h = _Hoist("t1")
    below = "p1"
    if layout.cls == "i":
        src = list(layout.source)
        for k in range(len(src) - 1, -1, -1):
            b, u = src[k], (src[k - 1] if k else "p2")
            h.goto("t3")
            h.do("unstack", "h1", b, u, "t3", "l1")
            h.goto("t2")
            h.do("stack", "h1", b, below, "t2", "l1")
            below = b
        return h.plan
    src = list(layout.source)
    for k in range(len(src) - 1, -1, -1):
        b, u = src[k], (src[k - 1] if k else "p2")
        h.goto("t3")
        h.do("unstack", "h1", b, u, "t3", "l1")
        h.goto("t1")
        h.do("put", "h1", b, "t1", "l1")
    for b in layout.chain:
        h.goto("t1")
        h.do("pick", "h1", b, "t1", "l1")
        h.goto("t2")
        h.do("stack", "h1", b, below, "t2", "l1")
        below = b
    return h.plan


def experience_from(problem: Problem, plan: Sequence[Atom], name: Optional[str] = None) -> Experience:
    return Experience(name or problem.name, problem.domain, problem.task, problem.objects,
                      tuple(problem.key_properties()), tuple(plan))


def stack_experience(cls: str, n: int, seed: int = 0, name: Optional[str] = None,
                     shuffle: bool = True) -> Experience:
    layout = stack_layout(cls, n, seed, shuffle)
    p = stack_problem(layout, name or f"stack-{cls}")
    return experience_from(p, stack_teacher(layout))


def listing1_experience() -> Experience:
    """The 8-block base experience: 4 blue + 4 red blocks on a table, 31 actions."""
    return stack_experience("base", 4, 0, "stack", shuffle=False)


# seeds of the three extra 20+20 learning experiences
STACK_EXPERIENCE_SEEDS = {"i": 101, "ii": 102, "iii": 103}


def stack_learning_experiences() -> Dict[str, Experience]:
    out = {"base": listing1_experience()}
    for cls, seed in STACK_EXPERIENCE_SEEDS.items():
        out[cls] = stack_experience(cls, 20, seed, f"stack-{cls}")
    return out


# ---------------------------------------------------------------- ROVER

ROVER_MODES = ("colour", "high_res", "low_res")
ROVER_RANGES = {"waypoints": (1, 3), "objectives": (5, 30), "cameras": (5, 10), "goals": (5, 20)}


def _check_range(what: str, v: int) -> None:
    lo, hi = ROVER_RANGES[what]
    if not isinstance(v, int) or not lo <= v <= hi:
        raise GeneratorError(f"{what} must lie in [{lo}, {hi}], got {v!r}")


def gen_rover(waypoints: int, objectives: int, cameras: int, goals: int, seed: int = 0,
              name: Optional[str] = None) -> Problem:
    """One-rover problem; every objective is visible from every waypoint.

    Objective o0 is the calibration target of all cameras and is never a goal.
    Goals are drawn without replacement from the soil, rock and image pools;
    the count is clipped to the pool size.
    """
    for what, v in (("waypoints", waypoints), ("objectives", objectives),
                    ("cameras", cameras), ("goals", goals)):
        _check_range(what, v)
    rng = SplitMix64(seed)
    ws = [f"w{i}" for i in range(waypoints)]
    objs = [f"o{i}" for i in range(objectives)]
    cams = [f"c{i}" for i in range(cameras)]
    static = [atom("rover", "rover0"), atom("store", "store0"), atom("lander", "general")]
    static += [atom("waypoint", w) for w in ws]
    static += [atom("camera", c) for c in cams]
    static += [atom("mode", m) for m in ROVER_MODES]
    static += [atom("objective", o) for o in objs]
    static += [atom("equipped_for_soil_analysis", "rover0"), atom("equipped_for_rock_analysis", "rover0"),
               atom("equipped_for_imaging", "rover0"), atom("store_of", "store0", "rover0"),
               atom("at_lander", "general", ws[0])]
    static += [atom("can_traverse", "rover0", a, b) for a in ws for b in ws if a != b]
    static += [atom("visible", a, b) for a in ws for b in ws]
    static += [atom("visible_from", o, w) for o in objs for w in ws]
    supported = set()
    for c in cams:
        static += [atom("on_board", c, "rover0"), atom("calibration_target", c, "o0")]
        modes = [m for m in ROVER_MODES if rng.coin()] or [ROVER_MODES[rng.below(3)]]
        static += [atom("supports", c, m) for m in modes]
        supported.update(modes)
    soil = [w for w in ws if rng.coin()]
    rock = [w for w in ws if rng.coin()]
    init = [atom("at", "rover0", ws[rng.below(waypoints)]), atom("empty", "store0")]
    init += [atom("at_soil_sample", w) for w in soil] + [atom("at_rock_sample", w) for w in rock]
    pool = [atom("communicated_soil_data", w) for w in soil]
    pool += [atom("communicated_rock_data", w) for w in rock]
    pool += [atom("communicated_image_data", o, m) for o in objs[1:] for m in ROVER_MODES if m in supported]
    goal = rng.sample(pool, min(goals, len(pool)))
    goal.sort(key=lambda a: (a.pred, a.args))
    objects = ["rover0", "store0", "general"] + ws + cams + list(ROVER_MODES) + objs
    return Problem(name or f"rover-w{waypoints}-o{objectives}-c{cameras}-g{goals}-s{seed}", "rover",
                   atom("gather", "rover0", "general"), tuple(objects), tuple(static), tuple(init), tuple(goal))


def rover_teacher(problem: Problem) -> List[Atom]:
    """Scripted solver: soil goals, then rock goals, then images; one trip each."""
    static = set(problem.static)
    pos = next(a.args[1] for a in problem.init if a.pred == "at" and a.args[0] == "rover0")
    lander_at = next(a.args[1] for a in problem.static if a.pred == "at_lander")
    plan: List[Atom] = []
    full = False

    def go(w: str) -> None:
        nonlocal pos
        if w != pos:
            plan.append(atom("navigate", "rover0", pos, w))
            pos = w

    goals = sorted(problem.goal, key=lambda a: ({"communicated_soil_data": 0, "communicated_rock_data": 1}
                                                .get(a.pred, 2), a.args))
    for g in goals:
        if g.pred in ("communicated_soil_data", "communicated_rock_data"):
            kind = "soil" if "soil" in g.pred else "rock"
            w = g.args[0]
            go(w)
            if full:
                plan.append(atom("drop", "rover0", "store0"))
            plan.append(atom(f"sample_{kind}", "rover0", "store0", w))
            full = True
            plan.append(atom(f"communicate_{kind}_data", "rover0", "general", w, pos, lander_at))
        else:
            o, m = g.args
            cam = next(c.args[0] for c in sorted(static) if c.pred == "supports" and c.args[1] == m)
            plan.append(atom("calibrate", "rover0", cam, "o0", pos))
            plan.append(atom("take_image", "rover0", pos, o, cam, m))
            plan.append(atom("communicate_image_data", "rover0", "general", o, m, pos, lander_at))
    return plan


def rover_experience(problem: Problem, name: Optional[str] = None) -> Experience:
    return experience_from(problem, rover_teacher(problem), name)


# ---------------------------------------------------------------- suites

def stack_suite(per_class: int = 10, n_min: int = 4, n_max: int = 20, seed: int = 1) -> List[Tuple[str, Problem]]:
    """(class label, problem) pairs, ``per_class`` problems for each class."""
    if n_min < 1 or n_max < n_min:
        raise GeneratorError("need 1 <= n_min <= n_max")
    rng = SplitMix64(seed)
    out = []
    for cls in STACK_CLASSES:
        for k in range(per_class):
            n = rng.randint(n_min, n_max)
            s = rng.next_u64()
            out.append((cls, gen_stack(cls, n, s, f"stack-{cls}-{k:02d}")))
    return out


def rover_suite(count: int = 50, seed: int = 2024) -> List[Problem]:
    rng = SplitMix64(seed)
    out = []
    for k in range(count):
        w, o = rng.randint(*ROVER_RANGES["waypoints"]), rng.randint(*ROVER_RANGES["objectives"])
        c, g = rng.randint(*ROVER_RANGES["cameras"]), rng.randint(*ROVER_RANGES["goals"])
        out.append(gen_rover(w, o, c, g, rng.next_u64(), f"rover-{k:02d}"))
    return out
