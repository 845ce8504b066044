"""Command-line interface: ``ebpd <command> ...``.

Exit codes: 0 ok, 1 usage, 2 parse error, 3 no applicable schema, 4 planning failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path
from typing import List, Optional, Sequence

from ebpd.conceptualizer import ActivitySchema, learn_schema
from ebpd.ebpdtext import load, parse_domain, serialize_experience, serialize_problem, serialize_schema
from ebpd.experiments import CLASSIFICATION_HEADER, SuiteConfig, bench, classify
from ebpd.generators import GeneratorError, gen_rover, rover_experience, stack_experience, gen_stack, STACK_CLASSES
from ebpd.logic import StructureError, serialize_scope, to_dot
from ebpd.model import Domain, Experience, ModelError, Problem
from ebpd.planner import NO_SCHEMA, SchemaLibrary, retrieve_verbose, solve
from ebpd.sexpr import ParseError

EXIT_OK, EXIT_USAGE, EXIT_PARSE, EXIT_NO_SCHEMA, EXIT_PLAN = 0, 1, 2, 3, 4


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _read_domain(path: str) -> Domain:
    return parse_domain(Path(path).read_text(encoding="utf-8"), path)


def _first(path: str, kind, domain: Optional[Domain] = None):
    for doc in load(path, domain):
        if isinstance(doc, kind):
            return doc
    raise UsageError(f"{path}: no {kind.__name__.lower()} document found")


def _library(path: str, domain: Optional[Domain]) -> SchemaLibrary:
    return SchemaLibrary([d for d in load(path, domain) if isinstance(d, ActivitySchema)])


def _write(text: str, out: Optional[str]) -> None:
    if out:
        Path(out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


# ---------------------------------------------------------------- commands

def cmd_learn(args) -> int:
    d = _read_domain(args.domain)
    e = _first(args.experience, Experience, d)
    _write(serialize_schema(learn_schema(e, d)), args.output)
    return EXIT_OK


def cmd_scope(args) -> int:
    d = _read_domain(args.domain)
    s = learn_schema(_first(args.experience, Experience, d), d)
    if args.dot:
        _write(to_dot(s.scope, s.name), None)
    else:
        _write("".join(line + "\n" for line in serialize_scope(s.scope)), None)
    return EXIT_OK


def cmd_retrieve(args) -> int:
    d = _read_domain(args.domain) if args.domain else None
    p = _first(args.problem, Problem, d)
    r = retrieve_verbose(p, _library(args.schemalib, d))
    if args.verbose:
        for name, res in r.tried:
            print(f"; {name}: {'embeds' if res.embedded else res.failure.value + ' ' + res.detail}", file=sys.stderr)
    if r.schema is None:
        print(f"{p.name}: no applicable schema", file=sys.stderr)
        return EXIT_NO_SCHEMA
    print(r.schema.name)
    return EXIT_OK


def cmd_plan(args) -> int:
    d = _read_domain(args.domain)
    p = _first(args.problem, Problem, d)
    res = solve(p, _library(args.schemalib, d), d, args.bridge_depth, args.node_limit)
    row = [p.name, res.schema_used or "", f"{res.retrieval_time * 1000:.3f}", f"{res.elapsed * 1000:.3f}",
           res.nodes_evaluated, len(res.plan), res.status]
    if args.metrics:
        new = not Path(args.metrics).exists()
        with open(args.metrics, "a", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            if new:
                w.writerow(["problem", "schema", "retrieval_ms", "plan_ms", "nodes", "plan_len", "status"])
            w.writerow(row)
    if res.status == NO_SCHEMA:
        print(f"{p.name}: no applicable schema", file=sys.stderr)
        return EXIT_NO_SCHEMA
    if not res.solved:
        print(f"{p.name}: planning failed: {res.message}", file=sys.stderr)
        return EXIT_PLAN
    text = f"; problem {p.name} solved with schema {res.schema_used}\n"
    text += f"; nodes {res.nodes_evaluated} length {len(res.plan)}\n"
    text += "".join(f"{a}\n" for a in res.plan)
    _write(text, args.output)
    return EXIT_OK


def cmd_classify(args) -> int:
    d = _read_domain(args.domain) if args.domain else None
    problems: List[Problem] = []
    for path in args.problems:
        problems += [x for x in load(path, d) if isinstance(x, Problem)]
    rep = classify(problems, args.repetitions)
    fh = open(args.output, "w", newline="") if args.output else sys.stdout
    try:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CLASSIFICATION_HEADER)
        for p in problems:
            w.writerow([p.name, rep.set_of(p.name), f"{rep.timing[p.name] * 1000:.3f}"])
    finally:
        if fh is not sys.stdout:
            fh.close()
    print(f"; {len(problems)} problems in {len(rep.sets)} sets", file=sys.stderr)
    return EXIT_OK


def cmd_gen(args) -> int:
    if args.kind == "stack":
        if args.experience:
            text = serialize_experience(stack_experience(args.cls, args.n, args.seed, args.name))
        else:
            text = serialize_problem(gen_stack(args.cls, args.n, args.seed, args.name))
    else:
        p = gen_rover(args.waypoints, args.objectives, args.cameras, args.goals, args.seed, args.name)
        text = serialize_experience(rover_experience(p)) if args.experience else serialize_problem(p)
    _write(text, args.output)
    return EXIT_OK


def _load_config(path: str) -> dict:
    raw = Path(path).read_bytes()
    if path.endswith(".json"):
        return json.loads(raw)
    if sys.version_info >= (3, 11):
        import tomllib
    else:
        import tomli as tomllib
    return tomllib.loads(raw.decode("utf-8"))


def cmd_bench(args) -> int:
    try:
        m = _load_config(args.config)
    except (ValueError, OSError) as exc:
        raise UsageError(f"{args.config}: {exc}")
    cfg = SuiteConfig.from_mapping(m, Path(args.config).parent)
    if args.out:
        cfg.out = Path(args.out)
    for name, path in bench(cfg).items():
        print(f"wrote {path}")
    return EXIT_OK


# ---------------------------------------------------------------- entry point

def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="ebpd", description="Learn activity schemata with scopes and plan with them.")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("learn", help="learn an activity schema from an experience")
    p.add_argument("experience")
    p.add_argument("domain")
    p.add_argument("-o", "--output")
    p.set_defaults(fn=cmd_learn)

    p = sub.add_parser("scope", help="print the scope learned from an experience")
    p.add_argument("experience")
    p.add_argument("domain")
    p.add_argument("--dot", action="store_true", help="emit Graphviz instead of key-properties")
    p.set_defaults(fn=cmd_scope)

    p = sub.add_parser("retrieve", help="find the first schema whose scope embeds a problem")
    p.add_argument("problem")
    p.add_argument("schemalib", help="schema file or directory of *.ebpd files")
    p.add_argument("--domain")
    p.add_argument("-v", "--verbose", action="store_true")
    p.set_defaults(fn=cmd_retrieve)

    p = sub.add_parser("plan", help="solve a problem with the schema-based planner")
    p.add_argument("problem")
    p.add_argument("schemalib")
    p.add_argument("domain")
    p.add_argument("-o", "--output")
    p.add_argument("--metrics", help="append a CSV metrics row to this file")
    p.add_argument("--bridge-depth", type=int, default=3)
    p.add_argument("--node-limit", type=int, default=200_000)
    p.set_defaults(fn=cmd_plan)

    p = sub.add_parser("classify", help="group problems by equivalent abstract structure")
    p.add_argument("problems", nargs="+")
    p.add_argument("--domain")
    p.add_argument("-o", "--output")
    p.add_argument("--repetitions", type=int, default=5)
    p.set_defaults(fn=cmd_classify)

    p = sub.add_parser("gen", help="generate a problem (or a teacher experience)")
    gsub = p.add_subparsers(dest="kind", required=True, parser_class=_Parser)
    g = gsub.add_parser("stack")
    g.add_argument("--class", dest="cls", choices=STACK_CLASSES, default="base")
    g.add_argument("--n", type=int, default=4, help="blocks per colour")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--name")
    g.add_argument("--experience", action="store_true")
    g.add_argument("-o", "--output")
    g.set_defaults(fn=cmd_gen)
    g = gsub.add_parser("rover")
    g.add_argument("--waypoints", type=int, default=1)
    g.add_argument("--objectives", type=int, default=5)
    g.add_argument("--cameras", type=int, default=5)
    g.add_argument("--goals", type=int, default=5)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--name")
    g.add_argument("--experience", action="store_true")
    g.add_argument("-o", "--output")
    g.set_defaults(fn=cmd_gen)

    p = sub.add_parser("bench", help="run metric suites from a TOML or JSON config")
    p.add_argument("config")
    p.add_argument("--out")
    p.set_defaults(fn=cmd_bench)
    return ap


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except ParseError as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_PARSE
    except (ModelError, StructureError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except (UsageError, GeneratorError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
