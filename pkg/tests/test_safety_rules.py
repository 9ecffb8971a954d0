"""Temporal rule parsing and evaluation over event-chain paths."""

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sdv_guard.errors import RuleParseError
from sdv_guard.eventchain import (
    ActivityGraph,
    ChainDocument,
    Edge,
    EventSequence,
    EventStep,
    Node,
    parse_activity_diagram,
    to_chain_document,
)
from sdv_guard.safety_rules import (
    AndExpr,
    OrExpr,
    RuleAtom,
    build_correction_prompt,
    check,
    eval_atom,
    eval_rule,
    parse_rules,
    render_report,
    suggest_correction,
)

from conftest import scripted_gateway


def _seq(*events: str) -> EventSequence:
    return EventSequence(steps=tuple(
        EventStep(position=i, event=e, node_id=f"n{i}")
        for i, e in enumerate(events)
    ))


def _linear_chain(*events: str) -> ChainDocument:
    """A straight-line document: start -> one action per event -> stop."""
    nodes = [Node(id="s", kind="start")]
    edges = []
    prev = "s"
    for i, event in enumerate(events):
        node_id = f"a{i}"
        nodes.append(Node(id=node_id, kind="action", label=event))
        edges.append(Edge(src=prev, dst=node_id))
        prev = node_id
    nodes.append(Node(id="z", kind="stop"))
    edges.append(Edge(src=prev, dst="z"))
    graph = ActivityGraph(nodes=tuple(nodes), edges=tuple(edges))
    return ChainDocument(graph=graph,
                         events=tuple((f"a{i}", e) for i, e in enumerate(events)))


def _fixture_doc(fixtures_dir, name: str) -> ChainDocument:
    text = (fixtures_dir / "chains" / f"{name}.puml").read_text()
    return to_chain_document(parse_activity_diagram(text))


def _fixture_rules(fixtures_dir, name: str):
    return parse_rules((fixtures_dir / "rules" / f"{name}.txt").read_text())


# ---------------------------------------------------------------------------
# parsing


def test_parse_single_rule_file(fixtures_dir):
    ruleset = _fixture_rules(fixtures_dir, "rules-s1")
    assert len(ruleset) == 1
    (rule,) = ruleset.rules
    assert rule.name == "rule1"
    assert rule.mode == "require"
    assert rule.aliases == ()
    assert rule.expr == AndExpr((
        RuleAtom("accelerate", "before", "pedestrian-camera-detected"),
        RuleAtom("accelerate", "before", "pedestrian-lidar-detected"),
    ))


def test_parse_multi_line_rule_with_aliases(fixtures_dir):
    ruleset = _fixture_rules(fixtures_dir, "rules-s2")
    (rule,) = ruleset.rules
    assert rule.name == "rule2"
    # the two physical rule lines join into one expression
    assert isinstance(rule.expr, OrExpr)
    assert len(rule.expr.children) == 2
    assert all(isinstance(c, AndExpr) for c in rule.expr.children)
    assert rule.alias_patterns("camera-pedestrian-detected") \
        == ("pedestrian-camera-detected",)
    assert rule.alias_patterns("lidar-pedestrian-detected") \
        == ("pedestrian-lidar-detected",)
    assert rule.alias_patterns("brake") == ()


def test_parse_combined_rule_file(fixtures_dir):
    ruleset = _fixture_rules(fixtures_dir, "rules-all")
    assert [r.name for r in ruleset.rules] == ["rule1", "rule2", "rule3"]
    # aliases are per stanza: rule1 has none although rule2 defines two
    assert ruleset.rules[0].aliases == ()
    assert len(ruleset.rules[1].aliases) == 2
    assert len(ruleset.rules[2].aliases) == 1


def test_multi_word_events_join_with_hyphens(fixtures_dir):
    ruleset = _fixture_rules(fixtures_dir, "rules-s3")
    (rule,) = ruleset.rules
    # "camera-pedestrian detected" in the file names one event
    assert rule.expr == RuleAtom("brake", "after", "camera-pedestrian-detected")


def test_parse_modes_and_precedence():
    ruleset = parse_rules(
        "r1: forbid a before b\n"
        "\n"
        "r2: a before b or c before d and not e before f\n"
    )
    assert ruleset.rules[0].mode == "forbid"
    r2 = ruleset.rules[1].expr
    # 'and' binds tighter than 'or'; 'not' tighter than 'and'
    assert isinstance(r2, OrExpr)
    right = r2.children[1]
    assert isinstance(right, AndExpr)
    assert right.children[0] == RuleAtom("c", "before", "d")


def test_parentheses_override_precedence():
    expr = parse_rules("r: (a before b or c before d) and e after f\n").rules[0].expr
    assert isinstance(expr, AndExpr)
    assert isinstance(expr.children[0], OrExpr)


@pytest.mark.parametrize("text, message", [
    ("alias x = y\n", "alias lines but no rule"),
    ("just an expression a before b\n", "missing ':'"),
    ("bad name!: a before b\n", "invalid rule name"),
    ("r: a before b\n\nr: c after d\n", "duplicate rule name"),
    ("alias x = y\nalias x = z\nr: a before b\n", "duplicate alias"),
    ("alias x y\nr: a before b\n", "missing '='"),
    ("alias x =\nr: a before b\n", "lists no patterns"),
    ("alias = y\nr: a before b\n", "names no event"),
    ("r: a % b\n", "unexpected character"),
    ("r: a before\n", "expected an event name"),
    # non-keyword words join the event, so the stray operator must be a keyword
    ("r: a and b before c\n", "expected 'before' or 'after', got 'and'"),
    ("r: (a before b\n", "unexpected end of rule"),
    ("r: a before b )\n", "unexpected '\\)' after expression"),
    ("r: before b\n", "expected an event name"),
])
def test_parse_errors(text, message):
    with pytest.raises(RuleParseError, match=message):
        parse_rules(text)


def test_parse_error_carries_position():
    with pytest.raises(RuleParseError) as err:
        parse_rules("r: a ? b\n")
    assert err.value.position == 2  # offset inside the expression text


# ---------------------------------------------------------------------------
# atom semantics


BEFORE = RuleAtom("a", "before", "b")
AFTER = RuleAtom("a", "after", "b")


@pytest.mark.parametrize("events, expected", [
    (("a", "b"), True),
    (("b", "a"), False),
    (("a",), True),          # b absent: vacuously true
    ((), True),
    (("a", "b", "b"), True),
    (("b", "a", "b"), False),  # the first b has no earlier a
    (("x", "a", "x", "b"), True),
])
def test_before_semantics(events, expected):
    assert eval_atom(_seq(*events), BEFORE) is expected


@pytest.mark.parametrize("events, expected", [
    (("b", "a"), True),
    (("a", "b"), False),
    (("b",), True),          # a absent: vacuously true
    ((), True),
    (("b", "a", "a"), True),
    (("a", "b", "a"), False),  # the first a has no earlier b
])
def test_after_semantics(events, expected):
    assert eval_atom(_seq(*events), AFTER) is expected


def test_self_reference_is_false_exactly_when_present():
    atom = RuleAtom("a", "before", "a")
    assert eval_atom(_seq("x", "y"), atom) is True
    assert eval_atom(_seq("x", "a"), atom) is False


_EVENTS = st.lists(st.sampled_from("abcdef"), max_size=12).map(lambda e: _seq(*e))


@settings(max_examples=300, deadline=None)
@given(sequence=_EVENTS, a=st.sampled_from("abcdef"), b=st.sampled_from("abcdef"))
def test_atom_identities(sequence, a, b):
    before = eval_atom(sequence, RuleAtom(a, "before", b))
    after_swapped = eval_atom(sequence, RuleAtom(b, "after", a))
    assert before == after_swapped  # after is before with the operands swapped
    events = sequence.events
    if b not in events:
        assert before is True  # vacuous
    if a == b:
        assert before == (a not in events)


@settings(max_examples=100, deadline=None)
@given(events=st.lists(st.sampled_from("abcd"), max_size=10))
def test_require_forbid_duality(events):
    require = parse_rules("r: require a before b\n").rules[0]
    forbid_dual = parse_rules("r: forbid not (a before b)\n").rules[0]
    document = _linear_chain(*events)
    assert eval_rule(document, require).verdict \
        == eval_rule(document, forbid_dual).verdict


# ---------------------------------------------------------------------------
# fixture scenarios


def test_acceleration_rule_flags_the_detection_branch(fixtures_dir):
    document = _fixture_doc(fixtures_dir, "s1")
    report = check(document, _fixture_rules(fixtures_dir, "rules-s1"))
    assert report.overall == "violated"
    (result,) = report.results
    (witness,) = result.witnesses  # the cruise branch passes vacuously
    assert witness.sequence.events \
        == ("camera-sense", "pedestrian-camera-detected", "accelerate")
    assert dict(witness.atom_values) == {
        "accelerate before pedestrian-camera-detected": False,
        "accelerate before pedestrian-lidar-detected": True,
    }


def test_braking_rule_fails_without_a_sensing_step(fixtures_dir):
    document = _fixture_doc(fixtures_dir, "s2")
    report = check(document, _fixture_rules(fixtures_dir, "rules-s2"))
    assert report.overall == "violated"
    (result,) = report.results
    (witness,) = result.witnesses
    assert witness.sequence.events == ("pedestrian-lidar-detected", "brake")
    # aliases bridge the rule vocabulary to the chain's event names
    assert dict(witness.atom_values) == {
        "brake after camera-pedestrian-detected": False,
        "brake after lidar-pedestrian-detected": True,
        "camera-sense before camera-pedestrian-detected": True,
        "lidar-sense before lidar-pedestrian-detected": False,
    }


def test_early_brake_fails_and_correction_passes(fixtures_dir):
    rules = _fixture_rules(fixtures_dir, "rules-s3")
    assert check(_fixture_doc(fixtures_dir, "s3"), rules).overall == "violated"
    assert check(_fixture_doc(fixtures_dir, "s3-corrected"), rules).overall == "pass"


def test_combined_rules_bind_per_scenario(fixtures_dir):
    # the corrected third scenario still violates the acceleration rule, which
    # is why each scenario carries its own rule file
    document = _fixture_doc(fixtures_dir, "s3-corrected")
    report = check(document, _fixture_rules(fixtures_dir, "rules-all"))
    verdicts = {r.rule.name: r.verdict for r in report.results}
    assert verdicts == {"rule1": "violated", "rule2": "pass", "rule3": "pass"}


def test_guards_are_not_events(fixtures_dir):
    # the s2 decision guard mentions the lidar flag, but only action labels
    # can satisfy a rule event
    document = _fixture_doc(fixtures_dir, "s2")
    rule = parse_rules("r: lidar-flag-set before brake\n").rules[0]
    result = eval_rule(document, rule)
    # brake occurs with no matching left event anywhere -> atom false
    assert result.verdict == "violated"


def test_alias_patterns_are_globs():
    rule = parse_rules(
        "alias detected = pedestrian-*-detected\n"
        "r: camera-sense before detected\n"
    ).rules[0]
    document = _linear_chain("camera-sense", "pedestrian-camera-detected")
    assert eval_rule(document, rule).verdict == "pass"
    flipped = _linear_chain("pedestrian-lidar-detected", "camera-sense")
    assert eval_rule(flipped, rule).verdict == "violated"


# ---------------------------------------------------------------------------
# reports and correction


def test_report_digest_matches_chain(fixtures_dir):
    from sdv_guard.eventchain import chain_digest

    document = _fixture_doc(fixtures_dir, "s3")
    report = check(document, _fixture_rules(fixtures_dir, "rules-s3"))
    assert report.chain_digest == chain_digest(document)


def test_render_report_layout(fixtures_dir):
    document = _fixture_doc(fixtures_dir, "s3")
    report = check(document, _fixture_rules(fixtures_dir, "rules-s3"))
    text = render_report(report)
    lines = text.splitlines()
    assert lines[0] == "overall: violated"
    assert lines[1] == f"chain: {report.chain_digest}"
    assert lines[2] == "rule rule3 [require]: violated"
    assert lines[3] == "  witness 1: camera-sense -> brake -> pedestrian-camera-detected"
    assert lines[4] == "    brake after camera-pedestrian-detected: false"
    assert text.endswith("\n")


def test_report_to_dict_round_trips_through_json(fixtures_dir):
    import json

    document = _fixture_doc(fixtures_dir, "s2")
    report = check(document, _fixture_rules(fixtures_dir, "rules-s2"))
    data = json.loads(json.dumps(report.to_dict()))
    assert data["overall"] == "violated"
    (rule,) = data["rules"]
    assert rule["name"] == "rule2"
    (witness,) = rule["witnesses"]
    assert [step["event"] for step in witness["path"]] \
        == ["pedestrian-lidar-detected", "brake"]
    assert witness["value"] is False


def test_suggest_correction_needs_a_violation(fixtures_dir):
    document = _fixture_doc(fixtures_dir, "s3-corrected")
    report = check(document, _fixture_rules(fixtures_dir, "rules-s3"))
    with pytest.raises(ValueError, match="at least one violation"):
        suggest_correction("code", report, scripted_gateway([]))


def test_suggest_correction_sends_report_and_code(fixtures_dir):
    document = _fixture_doc(fixtures_dir, "s3")
    report = check(document, _fixture_rules(fixtures_dir, "rules-s3"))
    prompts = []
    gateway = scripted_gateway(["fixed code"], record_prompts=prompts)
    assert suggest_correction("def f(): ...", report, gateway) == "fixed code"
    (prompt,) = prompts
    assert prompt == build_correction_prompt("def f(): ...", report)
    assert "def f(): ..." in prompt
    assert render_report(report) in prompt
