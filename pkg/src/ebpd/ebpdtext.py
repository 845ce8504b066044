"""Reader and writer for the EBPD s-expression documents.

Four document kinds share one surface syntax::

    (define (domain NAME) (:abstract-operator ...)* (:operator ...)*)
    (define (experience NAME) (:domain D) (:task ...) (:objects ...)
            (:key-properties (TAG (p args...))*) (:plan (a args...)*))
    (define (problem NAME) (:domain D) (:task ...) (:objects ...)
            (:static A*) (:init A*) (:goal A*))
    (define (activity-schema NAME) (:domain D) (:task ...)
            (:abstract-plan ITEM*) (:scope TERM*))

Keywords are case-insensitive; identifiers are case-sensitive; variables
start with ``?``. Errors raise :class:`ParseError` with source spans.
"""

from __future__ import annotations

from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, Set, Tuple, Union

from ebpd.conceptualizer import AbstractAction, ActivitySchema, Loop, PlanItem
from ebpd.logic import (
    TEMPORAL_TAGS,
    KeyProperty,
    ScopeFact,
    StructureError,
    ThreeValuedStructure,
    TruthValue,
    scope_from_facts,
    serialize_scope,
)
from ebpd.model import Atom, Domain, Experience, ModelError, Operator, Problem, is_variable
from ebpd.sexpr import Node, ParseDiagnostic, ParseError, SList, SourceSpan, Symbol, read_all, read_one

Document = Union[Domain, Experience, Problem, ActivitySchema]


def _fail(msg: str, node: Node) -> ParseError:
    return ParseError([ParseDiagnostic("error", msg, node.span)])


class _Reader:
    def __init__(self, warnings: Optional[List[ParseDiagnostic]] = None):
        self.warnings = warnings if warnings is not None else []

    def warn(self, msg: str, node: Node) -> None:
        self.warnings.append(ParseDiagnostic("warning", msg, node.span))

    # -- primitives
    def ident(self, node: Node, what: str = "identifier") -> str:
        if not isinstance(node, Symbol) or node.text.startswith((":", "(")):
            raise _fail(f"expected {what}", node)
        return node.text

    def name(self, node: Node, what: str = "name") -> str:
        t = self.ident(node, what)
        if is_variable(t):
            raise _fail(f"expected {what}, got variable {t}", node)
        return t

    def slist(self, node: Node, what: str) -> SList:
        if not isinstance(node, SList):
            raise _fail(f"expected {what}", node)
        return node

    def atom(self, node: Node, what: str = "atom") -> Atom:
        lst = self.slist(node, what)
        if len(lst) == 0:
            raise _fail(f"empty {what}", node)
        pred = self.name(lst[0], "predicate name")
        return Atom(pred, tuple(self.ident(a, "term") for a in lst.items[1:]))

    def atoms(self, nodes: Sequence[Node], what: str = "atom") -> Tuple[Atom, ...]:
        out, seen = [], set()
        for n in nodes:
            a = self.atom(n, what)
            if a in seen:
                self.warn(f"duplicate {a}", n)
                continue
            seen.add(a)
            out.append(a)
        return tuple(out)

    def keyprop(self, node: Node) -> KeyProperty:
        lst = self.slist(node, "key-property")
        if len(lst) != 2 or not isinstance(lst[0], Symbol):
            raise _fail("key-property must be (TAG (pred args...))", node)
        tag = lst[0].lower
        if tag not in TEMPORAL_TAGS:
            raise _fail(f"unknown temporal tag {lst[0].text!r}; expected static, init or end", lst[0])
        a = self.atom(lst[1])
        return KeyProperty(tag, a.pred, a.args)

    # -- document frame
    def frame(self, text: str, file: str, kind: str) -> Tuple[str, Dict[str, List[SList]], SList]:
        form = self.slist(read_one(text, file), "(define ...)")
        if form.head() != "define" or len(form) < 2:
            raise _fail("expected (define ...)", form)
        header = self.slist(form[1], f"({kind} NAME)")
        if header.head() != kind or len(header) != 2:
            raise _fail(f"expected ({kind} NAME)", header)
        name = self.name(header[1], f"{kind} name")
        sections: Dict[str, List[SList]] = {}
        for sec in form.items[2:]:
            sec = self.slist(sec, "section")
            h = sec.head()
            if h is None or not h.startswith(":"):
                raise _fail("expected a :section", sec)
            sections.setdefault(h, []).append(sec)
        return name, sections, form

    def single(self, sections, key: str, form: SList, required: bool = True) -> Optional[SList]:
        found = sections.get(key, [])
        if len(found) > 1:
            raise _fail(f"duplicate {key} section", found[1])
        if not found:
            if required:
                raise _fail(f"missing {key} section", form)
            return None
        return found[0]

    def only(self, sections, allowed: Set[str]) -> None:
        for k, secs in sections.items():
            if k not in allowed:
                raise _fail(f"unknown section keyword {secs[0][0].text}", secs[0][0])


def _check_ground(atoms, what: str, nodes: Sequence[Node], objects: Optional[Set[str]]):
    for a, n in zip(atoms, nodes):
        for t in a.args:
            if is_variable(t):
                raise _fail(f"non-ground term {t} in {what}", n)
            if objects is not None and t not in objects:
                raise _fail(f"constant {t} is not declared in :objects", n)


def _check_arity(pred: str, arity: int, node: Node, arities: Optional[Dict[str, Set[int]]]):
    if arities is not None and pred in arities and arity not in arities[pred]:
        raise _fail(f"{pred} used with arity {arity}; the domain uses {sorted(arities[pred])}", node)


def domain_arities(domain: Domain) -> Dict[str, Set[int]]:
    """Predicate name -> arities used by the domain's operators."""
    out: Dict[str, Set[int]] = {}
    for o in domain.abstract_ops + domain.concrete_ops:
        for part in (o.static, o.precondition, o.add, o.delete):
            for a in part:
                out.setdefault(a.pred, set()).add(a.arity)
    return out


# ------------------------------------------------------------ domain

_OP_SECTIONS = {":parent", ":static", ":precondition", ":effect"}


def parse_domain(text: str, file: str = "<domain>", warnings: Optional[List[ParseDiagnostic]] = None) -> Domain:
    r = _Reader(warnings)
    form = r.slist(read_one(text, file), "(define ...)")
    if form.head() != "define" or len(form) < 2:
        raise _fail("expected (define ...)", form)
    header = r.slist(form[1], "(domain NAME)")
    if header.head() != "domain" or len(header) != 2:
        raise _fail("expected (domain NAME)", header)
    name = r.name(header[1], "domain name")
    abstract: List[Operator] = []
    concrete: List[Tuple[Operator, SList]] = []
    for sec in form.items[2:]:
        sec = r.slist(sec, "operator")
        kw = sec.head()
        if kw not in (":abstract-operator", ":operator"):
            raise _fail(f"unknown section keyword {sec[0]!r}", sec[0] if len(sec) else sec)
        op = _parse_operator(r, sec, "abstract" if kw == ":abstract-operator" else "concrete")
        if op.kind == "abstract":
            abstract.append(op)
        else:
            concrete.append((op, sec))
    heads = {(o.name, o.arity) for o in abstract}
    for op, sec in concrete:
        if op.parent is not None and (op.parent.pred, op.parent.arity) not in heads:
            parent_node = next(s for s in sec.items[2:] if isinstance(s, SList) and s.head() == ":parent")
            raise _fail(f"parent {op.parent} of {op.name} is not a declared abstract operator", parent_node)
    try:
        return Domain(name, tuple(abstract), tuple(o for o, _ in concrete))
    except ModelError as exc:
        raise _fail(str(exc), form)


def _parse_operator(r: _Reader, sec: SList, kind: str) -> Operator:
    if len(sec) < 2:
        raise _fail("operator needs a head", sec)
    head = r.atom(sec[1], "operator head")
    params = head.args
    for p, n in zip(params, r.slist(sec[1], "head").items[1:]):
        if not is_variable(p):
            raise _fail(f"operator parameter {p} must be a variable", n)
    parts: Dict[str, SList] = {}
    for s in sec.items[2:]:
        s = r.slist(s, "operator section")
        kw = s.head()
        if kw not in _OP_SECTIONS or (kw == ":parent" and kind == "abstract"):
            raise _fail(f"unknown section keyword {s[0]!r}" if len(s) else "empty section", s[0] if len(s) else s)
        if kw in parts:
            raise _fail(f"duplicate {kw} section", s)
        parts[kw] = s
    parent = None
    if ":parent" in parts:
        ps = parts[":parent"]
        if len(ps) != 2:
            raise _fail(":parent takes one head", ps)
        parent = r.atom(ps[1], "parent head")
    static = r.atoms(parts[":static"].items[1:]) if ":static" in parts else ()
    pre = r.atoms(parts[":precondition"].items[1:]) if ":precondition" in parts else ()
    add, dele = [], []
    if ":effect" in parts:
        for n in parts[":effect"].items[1:]:
            lst = r.slist(n, "effect literal")
            if lst.head() == "not":
                if len(lst) != 2:
                    raise _fail("(not ATOM) takes one atom", lst)
                dele.append(r.atom(lst[1]))
            else:
                add.append(r.atom(lst))
    parameter_set = set(params)
    for key in (":static", ":precondition", ":effect", ":parent"):
        if key not in parts:
            continue
        _check_vars(parts[key], parameter_set, head.pred)
    return Operator(head.pred, params, static, pre, tuple(add), tuple(dele), parent, kind)


def _check_vars(node: Node, params: Set[str], opname: str) -> None:
    if isinstance(node, Symbol):
        if is_variable(node.text) and node.text not in params:
            raise _fail(f"variable {node.text} is not a parameter of {opname}", node)
        return
    for child in node:
        _check_vars(child, params, opname)


def _fmt_atoms(atoms: Sequence[Atom]) -> str:
    return " ".join(str(a) for a in atoms)


def serialize_domain(d: Domain) -> str:
    out = [f"(define (domain {d.name})"]
    for op in d.abstract_ops + d.concrete_ops:
        kw = ":abstract-operator" if op.kind == "abstract" else ":operator"
        out.append(f"  ({kw} {op.head}")
        if op.parent is not None:
            out.append(f"    (:parent {op.parent})")
        out.append(f"    (:static{_sp(_fmt_atoms(op.static))})")
        out.append(f"    (:precondition{_sp(_fmt_atoms(op.precondition))})")
        eff = [str(a) for a in op.add] + [f"(not {a})" for a in op.delete]
        out.append(f"    (:effect{_sp(' '.join(eff))}))")
    out[-1] += ")"
    return "\n".join(out) + "\n"


def _sp(s: str) -> str:
    return " " + s if s else ""


# ------------------------------------------------------------ experience / problem

def _task_objects(r: _Reader, sections, form, kind: str):
    task_sec = r.single(sections, ":task", form)
    if len(task_sec) != 2:
        raise _fail(":task takes one head", task_sec)
    task = r.atom(task_sec[1], "task")
    obj_sec = r.single(sections, ":objects", form)
    objects = tuple(r.name(o, "object constant") for o in obj_sec.items[1:])
    if len(set(objects)) != len(objects):
        r.warn("duplicate object in :objects", obj_sec)
        objects = tuple(dict.fromkeys(objects))
    dom_sec = r.single(sections, ":domain", form)
    if len(dom_sec) != 2:
        raise _fail(":domain takes one name", dom_sec)
    dom = r.name(dom_sec[1], "domain name")
    return dom, task, task_sec, objects


def parse_experience(text: str, file: str = "<experience>", domain: Optional[Domain] = None,
                     warnings: Optional[List[ParseDiagnostic]] = None) -> Experience:
    r = _Reader(warnings)
    name, sections, form = r.frame(text, file, "experience")
    r.only(sections, {":domain", ":task", ":objects", ":key-properties", ":plan"})
    dom, task, task_sec, objects = _task_objects(r, sections, form, "experience")
    objset = set(objects)
    _check_ground([task], "task", [task_sec[1]], objset)
    kp_sec = r.single(sections, ":key-properties", form, required=False)
    kp_nodes = list(kp_sec.items[1:]) if kp_sec else []
    kps, seen = [], set()
    arities = domain_arities(domain) if domain else None
    for n in kp_nodes:
        k = r.keyprop(n)
        _check_ground([Atom(k.pred, k.terms)], "key-property", [n], objset)
        _check_arity(k.pred, len(k.terms), n, arities)
        if k in seen:
            r.warn(f"duplicate key-property {k}", n)
            continue
        seen.add(k)
        kps.append(k)
    plan_sec = r.single(sections, ":plan", form, required=False)
    plan_nodes = list(plan_sec.items[1:]) if plan_sec else []
    plan = tuple(r.atom(n, "plan action") for n in plan_nodes)
    _check_ground(plan, "plan", plan_nodes, objset)
    if domain is not None:
        for a, n in zip(plan, plan_nodes):
            try:
                domain.concrete(a.pred, a.arity)
            except ModelError as exc:
                raise _fail(str(exc), n)
    return Experience(name, dom, task, objects, tuple(kps), plan)


def serialize_experience(e: Experience) -> str:
    out = [f"(define (experience {e.name})", f"  (:domain {e.domain})", f"  (:task {e.task})",
           f"  (:objects{_sp(' '.join(e.objects))})"]
    out.append("  (:key-properties" + "".join(f"\n    {k}" for k in e.key_properties) + ")")
    out.append("  (:plan" + "".join(f"\n    {a}" for a in e.plan) + "))")
    return "\n".join(out) + "\n"


def parse_problem(text: str, file: str = "<problem>", domain: Optional[Domain] = None,
                  warnings: Optional[List[ParseDiagnostic]] = None) -> Problem:
    r = _Reader(warnings)
    name, sections, form = r.frame(text, file, "problem")
    r.only(sections, {":domain", ":task", ":objects", ":static", ":init", ":goal"})
    dom, task, task_sec, objects = _task_objects(r, sections, form, "problem")
    objset = set(objects)
    _check_ground([task], "task", [task_sec[1]], objset)
    arities = domain_arities(domain) if domain else None
    parts = []
    for key in (":static", ":init", ":goal"):
        sec = r.single(sections, key, form, required=False)
        nodes = list(sec.items[1:]) if sec else []
        atoms = r.atoms(nodes)
        nodes = [n for n in nodes]  # spans for checks
        _check_ground(atoms, key[1:], nodes, objset)
        for a, n in zip(atoms, nodes):
            _check_arity(a.pred, a.arity, n, arities)
        parts.append(atoms)
    return Problem(name, dom, task, objects, *parts)


def serialize_problem(p: Problem) -> str:
    out = [f"(define (problem {p.name})", f"  (:domain {p.domain})", f"  (:task {p.task})",
           f"  (:objects{_sp(' '.join(p.objects))})"]
    for key, atoms in ((":static", p.static), (":init", p.init), (":goal", p.goal)):
        out.append(f"  ({key}" + "".join(f"\n    {a}" for a in atoms) + ")")
    out[-1] += ")"
    return "\n".join(out) + "\n"


# ------------------------------------------------------------ schema

def parse_scope_terms(r: _Reader, nodes: Sequence[Node]) -> ThreeValuedStructure:
    summaries, facts, bare = [], [], []
    for n in nodes:
        lst = r.slist(n, "scope term")
        h = lst.head()
        if h in ("summary", "node"):
            if len(lst) != 2:
                raise _fail(f"({h} ?o) takes one object", lst)
            (summaries if h == "summary" else bare).append(r.ident(lst[1], f"{h} object"))
        elif h == "maybe":
            if len(lst) != 2:
                raise _fail("(maybe KEY-PROPERTY) takes one key-property", lst)
            facts.append(ScopeFact(r.keyprop(lst[1]), TruthValue.MAYBE))
        else:
            facts.append(ScopeFact(r.keyprop(lst), TruthValue.TRUE))
    try:
        return scope_from_facts(summaries, facts, bare)
    except StructureError as exc:
        raise _fail(str(exc), nodes[0] if nodes else SList((), SourceSpan("<scope>", 1, 1)))


def _parse_action_item(r: _Reader, lst: SList, abstract_heads) -> AbstractAction:
    if len(lst) == 0:
        raise _fail("empty plan item", lst)
    head = r.atom(lst[0], "abstract action head")
    if abstract_heads is not None and (head.pred, head.arity) not in abstract_heads:
        raise _fail(f"unknown abstract operator {head.pred}/{head.arity}", lst[0])
    feats: List[KeyProperty] = []
    for s in lst.items[1:]:
        s = r.slist(s, "(:features ...)")
        if s.head() != ":features":
            raise _fail("expected (:features ...)", s)
        feats.extend(r.keyprop(k) for k in s.items[1:])
    return AbstractAction(head, tuple(feats))


def parse_schema(text: str, file: str = "<schema>", domain: Optional[Domain] = None,
                 warnings: Optional[List[ParseDiagnostic]] = None) -> ActivitySchema:
    r = _Reader(warnings)
    name, sections, form = r.frame(text, file, "activity-schema")
    r.only(sections, {":domain", ":task", ":abstract-plan", ":scope"})
    dom_sec = r.single(sections, ":domain", form)
    dom = r.name(dom_sec[1], "domain name") if len(dom_sec) == 2 else None
    if dom is None:
        raise _fail(":domain takes one name", dom_sec)
    task_sec = r.single(sections, ":task", form)
    if len(task_sec) != 2:
        raise _fail(":task takes one head", task_sec)
    task = r.atom(task_sec[1], "task")
    heads = {(o.name, o.arity) for o in domain.abstract_ops} if domain else None
    plan_sec = r.single(sections, ":abstract-plan", form, required=False)
    items: List[PlanItem] = []
    for n in (plan_sec.items[1:] if plan_sec else ()):
        lst = r.slist(n, "plan item")
        if lst.head() == ":loop":
            body = []
            for b in lst.items[1:]:
                b = r.slist(b, "loop body item")
                if b.head() == ":loop":
                    raise _fail("nested :loop is not supported", b)
                body.append(_parse_action_item(r, b, heads))
            if not body:
                raise _fail("empty :loop", lst)
            items.append(Loop(tuple(body)))
        else:
            items.append(_parse_action_item(r, lst, heads))
    scope_sec = r.single(sections, ":scope", form, required=False)
    scope = parse_scope_terms(r, scope_sec.items[1:] if scope_sec else ())
    return ActivitySchema(name, dom, task, tuple(items), scope)


def _fmt_action(a: AbstractAction, indent: str) -> str:
    feats = "".join(f"\n{indent}    {k}" for k in a.features)
    return f"{indent}({a.head}\n{indent}  (:features{feats}))"


def serialize_schema(s: ActivitySchema) -> str:
    out = [f"(define (activity-schema {s.name})", f"  (:domain {s.domain})", f"  (:task {s.task})"]
    plan = []
    for item in s.plan:
        if isinstance(item, Loop):
            body = "\n".join(_fmt_action(a, "      ") for a in item.body)
            plan.append(f"    (:loop\n{body})")
        else:
            plan.append(_fmt_action(item, "    "))
    out.append("  (:abstract-plan" + "".join("\n" + p for p in plan) + ")")
    out.append("  (:scope" + "".join(f"\n    {t}" for t in serialize_scope(s.scope)) + "))")
    return "\n".join(out) + "\n"


# ------------------------------------------------------------ dispatch

_KINDS: Dict[str, Callable] = {
    "domain": parse_domain,
    "experience": parse_experience,
    "problem": parse_problem,
    "activity-schema": parse_schema,
}


def document_kind(text: str, file: str = "<string>") -> str:
    form = read_one(text, file)
    if isinstance(form, SList) and form.head() == "define" and len(form) > 1 and isinstance(form[1], SList):
        kind = form[1].head()
        if kind in _KINDS:
            return kind
    raise _fail("not an EBPD document", form)


def serialize(doc: Document) -> str:
    if isinstance(doc, Domain):
        return serialize_domain(doc)
    if isinstance(doc, Experience):
        return serialize_experience(doc)
    if isinstance(doc, Problem):
        return serialize_problem(doc)
    if isinstance(doc, ActivitySchema):
        return serialize_schema(doc)
    raise TypeError(f"cannot serialize {type(doc).__name__}")


def split_documents(text: str, file: str = "<string>") -> List[str]:
    """Source text of each top-level form, for multi-document files."""
    lines = text.splitlines(keepends=True)
    offsets = [0]
    for ln in lines:
        offsets.append(offsets[-1] + len(ln))
    out = []
    forms = read_all(text, file)
    for k, f in enumerate(forms):
        start = offsets[f.span.line - 1] + f.span.column - 1
        end = len(text)
        if k + 1 < len(forms):
            nxt = forms[k + 1].span
            end = offsets[nxt.line - 1] + nxt.column - 1
        # pad so spans in the chunk still point into the original file
        out.append("\n" * (f.span.line - 1) + " " * (f.span.column - 1) + text[start:end])
    return out


def load(path: Union[str, Path], domain: Optional[Domain] = None) -> List[Document]:
    """Load every document in a file (or every ``*.ebpd`` file in a directory)."""
    path = Path(path)
    files = sorted(path.glob("*.ebpd")) if path.is_dir() else [path]
    docs: List[Document] = []
    for f in files:
        text = f.read_text(encoding="utf-8")
        for chunk in split_documents(text, str(f)):
            kind = document_kind(chunk, str(f))
            if kind == "domain":
                docs.append(parse_domain(chunk, str(f)))
            else:
                docs.append(_KINDS[kind](chunk, str(f), domain))
    return docs
