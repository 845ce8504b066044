"""Experiment harness: problem classification and the metric suites behind `ebpd bench`."""

from __future__ import annotations

import csv
import statistics
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, Tuple

from ebpd.conceptualizer import learn_schema
from ebpd.generators import (
    rover_domain,
    rover_experience,
    rover_suite,
    stack_domain,
    stack_learning_experiences,
    stack_suite,
)
from ebpd.logic import ThreeValuedStructure, canonical_abstraction, struc_equivalent, struc_from_problem
from ebpd.model import Domain, Problem
from ebpd.planner import SchemaLibrary, baseline_forward_search, retrieve_verbose, solve

RETRIEVAL_HEADER = ["problem", "n_objects", "schema", "retrieval_ms", "status"]
PLANNING_HEADER = ["problem", "schema", "plan_ms", "nodes", "plan_len", "status"]
BASELINE_COLUMNS = ["baseline_nodes", "baseline_len"]
CLASSIFICATION_HEADER = ["problem", "set_id", "abstraction_ms"]


def median_time(fn: Callable[[], object], repetitions: int = 5) -> Tuple[object, float]:
    """Run ``fn`` ``repetitions`` times; return the last result and the median seconds."""
    times = []
    out = None
    for _ in range(max(1, repetitions)):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return out, statistics.median(times)


# ---------------------------------------------------------------- classification

@dataclass
class ClassificationReport:
    sets: List[List[str]] = field(default_factory=list)
    representatives: List[ThreeValuedStructure] = field(default_factory=list)
    timing: Dict[str, float] = field(default_factory=dict)

    def set_of(self, problem_name: str) -> int:
        for k, members in enumerate(self.sets):
            if problem_name in members:
                return k
        raise KeyError(problem_name)


def classify(problems: Sequence[Problem], repetitions: int = 1) -> ClassificationReport:
    """Group problems whose canonical abstractions are structurally equivalent.

    Sets are numbered by first appearance; the first member is the representative.
    """
    rep = ClassificationReport()
    for p in problems:
        s, dt = median_time(lambda: canonical_abstraction(struc_from_problem(p)), repetitions)
        rep.timing[p.name] = dt
        for k, r in enumerate(rep.representatives):
            if struc_equivalent(r, s):
                rep.sets[k].append(p.name)
                break
        else:
            rep.representatives.append(s)
            rep.sets.append([p.name])
    return rep


# ---------------------------------------------------------------- libraries

def stack_library(domain: Optional[Domain] = None) -> SchemaLibrary:
    d = domain or stack_domain()
    return SchemaLibrary([learn_schema(e, d) for e in stack_learning_experiences().values()])


def rover_library(problems: Sequence[Problem], report: ClassificationReport,
                  domain: Optional[Domain] = None) -> Tuple[SchemaLibrary, Dict[int, str]]:
    """One schema per classification set, learned from the set's first problem."""
    d = domain or rover_domain()
    by_name = {p.name: p for p in problems}
    lib = SchemaLibrary()
    names = {}
    for k, members in enumerate(report.sets):
        name = f"gather-set{k}"
        lib.add(learn_schema(rover_experience(by_name[members[0]], name), d))
        names[k] = name
    return lib, names


# ---------------------------------------------------------------- bench

@dataclass
class SuiteConfig:
    out: Path = Path("results")
    repetitions: int = 5
    stack_per_class: int = 0
    stack_n_min: int = 4
    stack_n_max: int = 20
    stack_seed: int = 1
    rover_count: int = 0
    rover_seed: int = 2024
    baseline: bool = False
    baseline_node_limit: int = 20_000

    @classmethod
    def from_mapping(cls, m: dict, base_dir: Path = Path(".")) -> "SuiteConfig":
        st, rv = m.get("stack", {}), m.get("rover", {})
        c = cls()
        c.out = base_dir / m.get("out", "results")
        c.repetitions = int(m.get("repetitions", c.repetitions))
        c.stack_per_class = int(st.get("per_class", 0))
        c.stack_n_min = int(st.get("n_min", c.stack_n_min))
        c.stack_n_max = int(st.get("n_max", c.stack_n_max))
        c.stack_seed = int(st.get("seed", c.stack_seed))
        c.baseline = bool(st.get("baseline", False))
        c.baseline_node_limit = int(st.get("baseline_node_limit", c.baseline_node_limit))
        c.rover_count = int(rv.get("count", 0))
        c.rover_seed = int(rv.get("seed", c.rover_seed))
        return c


def _ms(x: float) -> str:
    return f"{x * 1000:.3f}"


def _run_suite(problems: Sequence[Problem], lib: SchemaLibrary, domain: Domain, cfg: SuiteConfig,
               retrieval_rows: list, planning_rows: list) -> None:
    for p in problems:
        r, dt = median_time(lambda: retrieve_verbose(p, lib), cfg.repetitions)
        name = r.schema.name if r.schema else ""
        retrieval_rows.append([p.name, len(p.objects), name, _ms(dt), "found" if r.schema else "no-schema"])
        try:
            res, pt = median_time(lambda: solve(p, lib, domain), cfg.repetitions)
            row = [p.name, res.schema_used or "", _ms(pt),
                   res.nodes_evaluated, len(res.plan), res.status]
        except Exception as exc:  # a bad row must not abort the suite
            row = [p.name, name, "", "", "", f"error: {exc}"]
        if cfg.baseline:
            b = baseline_forward_search(p, domain, cfg.baseline_node_limit)
            row += [b.nodes_evaluated, len(b.plan) if b.solved else ""]
        planning_rows.append(row)


def bench(cfg: SuiteConfig) -> Dict[str, Path]:
    """Run the configured suites and write the three CSV files. Rows are sorted by problem id."""
    retrieval_rows: list = []
    planning_rows: list = []
    class_rows: list = []
    if cfg.stack_per_class > 0:
        d = stack_domain()
        probs = [p for _, p in stack_suite(cfg.stack_per_class, cfg.stack_n_min, cfg.stack_n_max, cfg.stack_seed)]
        _run_suite(probs, stack_library(d), d, cfg, retrieval_rows, planning_rows)
        rep = classify(probs, cfg.repetitions)
        class_rows += [[n, f"stack-{rep.set_of(n)}", _ms(rep.timing[n])] for n in rep.timing]
    if cfg.rover_count > 0:
        d = rover_domain()
        probs = rover_suite(cfg.rover_count, cfg.rover_seed)
        rep = classify(probs, cfg.repetitions)
        class_rows += [[n, f"rover-{rep.set_of(n)}", _ms(rep.timing[n])] for n in rep.timing]
        lib, _ = rover_library(probs, rep, d)
        _run_suite(probs, lib, d, cfg, retrieval_rows, planning_rows)
    cfg.out.mkdir(parents=True, exist_ok=True)
    planning_header = PLANNING_HEADER + (BASELINE_COLUMNS if cfg.baseline else [])
    files = {}
    for fname, header, rows in (("retrieval.csv", RETRIEVAL_HEADER, retrieval_rows),
                                ("planning.csv", planning_header, planning_rows),
                                ("classification.csv", CLASSIFICATION_HEADER, class_rows)):
        path = cfg.out / fname
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            w.writerows(sorted(rows, key=lambda r: r[0]))
        files[fname] = path
    return files
