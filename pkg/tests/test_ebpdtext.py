import random
from pathlib import Path

import pytest

from ebpd.conceptualizer import learn_schema
from ebpd.ebpdtext import (
    document_kind,
    load,
    parse_domain,
    parse_experience,
    parse_problem,
    parse_schema,
    serialize,
    serialize_domain,
    serialize_experience,
    serialize_problem,
    serialize_schema,
)
from ebpd.generators import (
    load_fixture,
    gen_rover,
    gen_stack,
    listing1_experience,
    stack_learning_experiences,
)
from ebpd.logic import struc_equivalent
from ebpd.model import atom
from ebpd.sexpr import ParseError

from helpers import random_experience, random_problem, random_schema

STACK_TEXT = load_fixture("stack-domain.ebpd")


def test_stack_domain_counts():
    d = parse_domain(STACK_TEXT)
    assert sorted((o.name, o.arity) for o in d.concrete_ops) == [
        ("move", 4), ("pick", 4), ("put", 4), ("stack", 5), ("unstack", 5)]
    assert sorted((o.name, o.arity) for o in d.abstract_ops) == [
        ("pick", 3), ("put", 3), ("stack", 4), ("unstack", 4)]
    pick = d.concrete("pick", 4)
    assert pick.parent == atom("pick", "?h", "?b", "?t")
    assert atom("not", "x") not in pick.add  # negations land in the delete list
    assert atom("ontable", "?b", "?t") in pick.delete


def test_empty_domain():
    d = parse_domain("(define (domain nothing))")
    assert d.name == "nothing" and d.abstract_ops == () and d.concrete_ops == ()


def test_domain_round_trip():
    d = parse_domain(STACK_TEXT)
    assert parse_domain(serialize_domain(d)) == d


def test_undeclared_parent_has_span():
    bad = STACK_TEXT.replace("(:parent (unstack ?h ?b ?u ?p))", "(:parent (lift ?h ?b ?u ?p))")
    with pytest.raises(ParseError) as ei:
        parse_domain(bad, "stack.ebpd")
    span = ei.value.span
    assert span.file == "stack.ebpd"
    line = bad.splitlines()[span.line - 1]
    assert "lift" in line


def test_unknown_section_keyword():
    bad = STACK_TEXT.replace("(:precondition (near ?h ?from))", "(:requires (near ?h ?from))")
    with pytest.raises(ParseError, match="requires"):
        parse_domain(bad)


def test_variable_not_a_parameter():
    bad = STACK_TEXT.replace("(:precondition (near ?h ?from))", "(:precondition (near ?h ?elsewhere))")
    with pytest.raises(ParseError) as ei:
        parse_domain(bad)
    assert "?elsewhere" in str(ei.value)


def test_unbalanced_parenthesis_reports_position():
    with pytest.raises(ParseError) as ei:
        parse_domain("(define (domain d)\n  (:operator (go ?x)")
    assert ei.value.span.line >= 1


# ---------------------------------------------------------------- experiences

def test_listing1_fixture_parses(stack_dom):
    e = parse_experience(load_fixture("stack-exp-base.ebpd"), domain=stack_dom)
    assert e.task == atom("stack", "t1", "t2")
    assert len(e.plan) == 31
    blocks = [k for k in e.key_properties if k.pred == "block"]
    assert len(blocks) == 8
    assert e == listing1_experience()


def test_degenerate_experience():
    e = parse_experience("(define (experience nil) (:domain d) (:task (t)) (:objects))")
    assert e.plan == () and e.key_properties == () and e.objects == ()


def test_goal_tag_is_rejected():
    text = serialize_experience(listing1_experience()).replace("(end (on", "(goal (on", 1)
    with pytest.raises(ParseError, match="goal"):
        parse_experience(text)


def test_nonground_plan_rejected():
    text = serialize_experience(listing1_experience()).replace("(move h1 t1 t2 l1)", "(move ?h t1 t2 l1)", 1)
    assert text != serialize_experience(listing1_experience())
    with pytest.raises(ParseError):
        parse_experience(text)


def test_arity_mismatch_against_domain(stack_dom):
    text = serialize_experience(listing1_experience()).replace("(init (empty h1))", "(init (empty h1 t1))")
    parse_experience(text)  # no domain: nothing to check against
    with pytest.raises(ParseError, match="empty"):
        parse_experience(text, domain=stack_dom)


def test_unknown_plan_operator(stack_dom):
    text = serialize_experience(listing1_experience()).replace("(move h1 t1 t2 l1)", "(fly h1 t1 t2 l1)", 1)
    with pytest.raises(ParseError, match="fly"):
        parse_experience(text, domain=stack_dom)


def test_duplicate_keyprop_is_a_warning():
    text = ("(define (experience e) (:domain d) (:task (t a)) (:objects a)"
            " (:key-properties (init (p a)) (init (p a))))")
    warnings = []
    e = parse_experience(text, warnings=warnings)
    assert len(e.key_properties) == 1
    assert [w.severity for w in warnings] == ["warning"]


# ---------------------------------------------------------------- problems

def test_generated_problem_round_trip(stack_dom):
    p = gen_stack("ii", 5, 3)
    assert parse_problem(serialize_problem(p), domain=stack_dom) == p


def test_empty_problem_sections():
    p = parse_problem("(define (problem p) (:domain d) (:task (t)) (:objects a))")
    assert (p.static, p.init, p.goal) == ((), (), ())


def test_undeclared_object_rejected():
    text = serialize_problem(gen_stack("base", 2, 0)).replace("(empty h1)", "(empty h9)")
    with pytest.raises(ParseError, match="h9"):
        parse_problem(text)


# ---------------------------------------------------------------- schemata

def test_listing2_schema_has_two_loops(stack_dom, listing1):
    s = learn_schema(listing1, stack_dom)
    back = parse_schema(serialize_schema(s), domain=stack_dom)
    assert len(back.loops) == 2
    assert back == s


def test_empty_abstract_plan():
    s = parse_schema("(define (activity-schema s) (:domain d) (:task (t ?x)) (:abstract-plan) (:scope))")
    assert s.plan == ()
    assert s.scope.universe == frozenset()
    s = parse_schema(serialize_schema(s).replace("(:scope", "(:scope (node ?x)"))
    assert s.scope.universe == {"?x"}
    assert "(node ?x)" in serialize_schema(s)


def test_nested_loop_rejected():
    text = ("(define (activity-schema s) (:domain d) (:task (t))"
            " (:abstract-plan (:loop (:loop ((a ?x) (:features))))) (:scope))")
    with pytest.raises(ParseError, match="nested"):
        parse_schema(text)


def test_unknown_abstract_head(stack_dom):
    text = ("(define (activity-schema s) (:domain stack) (:task (stack ?t ?p))"
            " (:abstract-plan ((move ?h ?a ?b) (:features))) (:scope))")
    parse_schema(text)
    with pytest.raises(ParseError, match="move"):
        parse_schema(text, domain=stack_dom)


def schema_equal(a, b):
    return (a.name, a.domain, a.task, a.plan) == (b.name, b.domain, b.task, b.plan) \
        and a.scope.universe == b.scope.universe and struc_equivalent(a.scope, b.scope)


def test_random_round_trips():
    rng = random.Random(7)
    for _ in range(60):
        e = random_experience(rng)
        assert parse_experience(serialize_experience(e)) == e
        p = random_problem(rng)
        assert parse_problem(serialize_problem(p)) == p
        s = random_schema(rng)
        text = serialize_schema(s)
        back = parse_schema(text)
        assert schema_equal(s, back), text
        assert serialize_schema(back) == text


# ---------------------------------------------------------------- fixtures and loading

def test_golden_fixtures_regenerate(stack_dom):
    exps = stack_learning_experiences()
    for cls, e in exps.items():
        assert load_fixture(f"stack-exp-{cls}.ebpd") == serialize_experience(e)
    assert load_fixture("stack-base-n4-s7.ebpd") == serialize_problem(gen_stack("base", 4, 7))
    assert load_fixture("stack-ii-n1-s0.ebpd") == serialize_problem(gen_stack("ii", 1, 0))
    rover = serialize_problem(gen_rover(1, 5, 5, 5, 0))
    assert load_fixture("rover-w1-o5-c5-g5-s0.ebpd") == rover


def test_load_directory_and_multi_document_file(tmp_path: Path, stack_dom):
    s = learn_schema(listing1_experience(), stack_dom)
    (tmp_path / "a.ebpd").write_text(serialize_schema(s) + "\n" + serialize_problem(gen_stack("base", 2, 0)))
    (tmp_path / "b.ebpd").write_text(serialize_domain(stack_dom))
    (tmp_path / "ignored.txt").write_text("junk")
    docs = load(tmp_path, stack_dom)
    assert [type(d).__name__ for d in docs] == ["ActivitySchema", "Problem", "Domain"]


def test_multi_document_spans_point_into_file(tmp_path: Path):
    good = serialize_problem(gen_stack("base", 1, 0))
    bad = good.replace("(empty h1)", "(empty zz)")
    f = tmp_path / "two.ebpd"
    f.write_text(good + bad)
    with pytest.raises(ParseError) as ei:
        load(f)
    span = ei.value.span
    assert "zz" in f.read_text().splitlines()[span.line - 1]


def test_document_kind_and_dispatch(stack_dom):
    e = listing1_experience()
    assert document_kind(serialize(e)) == "experience"
    assert document_kind(serialize(stack_dom)) == "domain"
    with pytest.raises(ParseError):
        document_kind("(hello)")
    with pytest.raises(TypeError):
        serialize(42)
