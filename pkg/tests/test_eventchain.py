"""Activity-diagram parsing, canonical chain documents, path enumeration."""

import json

import pytest

from sdv_guard.errors import (
    ChainGenerationError,
    DiagramParseError,
    StructureError,
    TransformError,
    UnsupportedStructureError,
)
from sdv_guard.eventchain import (
    build_chain_prompt,
    chain_digest,
    enumerate_paths,
    extract_diagram_block,
    generate_chain,
    parse_activity_diagram,
    parse_chain_document,
    render_relevant_entries,
    serialize_chain,
    strip_fences,
    to_chain_document,
)
from sdv_guard.extraction import AcceptedEntry, ExtractedEntry

from conftest import scripted_gateway


def _doc(text: str):
    return to_chain_document(parse_activity_diagram(text))


LINEAR = """\
@startuml
start
:First step;
:Second step;
stop
@enduml
"""


# ---------------------------------------------------------------------------
# parsing


def test_parse_branching_fixture(fixtures_dir):
    text = (fixtures_dir / "chains" / "s1.puml").read_text()
    graph = parse_activity_diagram(text)
    kinds = [n.kind for n in graph.nodes]
    assert kinds == ["start", "action", "decision", "action", "action",
                     "action", "merge", "stop"]
    sense = graph.nodes[1]
    assert sense.label == "Camera sense"
    assert sense.note("input") == "Vehicle.ADAS.ObstacleDetection.Camera"
    assert sense.note("input_format") == "vss boolean"
    assert sense.note("output") is None
    decision = graph.nodes[2]
    assert decision.label == "pedestrian in frame?"
    guards = {e.guard for e in graph.outgoing(decision.id)}
    assert guards == {"yes", "no"}


def test_labels_normalize_to_events(fixtures_dir):
    text = (fixtures_dir / "chains" / "s1.puml").read_text()
    document = _doc(text)
    assert [event for _, event in document.events] == [
        "camera-sense", "pedestrian-camera-detected", "accelerate", "cruise",
    ]


def test_if_without_else_gets_an_implicit_no_arm():
    document = _doc("""\
@startuml
start
if (risk?) then (yes)
  :Mitigate;
endif
stop
@enduml
""")
    paths = enumerate_paths(document)
    assert [p.events for p in paths] == [("mitigate",), ()]


@pytest.mark.parametrize("text, message", [
    ("start\nstop", "must begin with @startuml"),
    ("@startuml\nstart\nstop", "must end with @enduml"),
    ("@startuml\n@startuml\nstart\nstop\n@enduml", "nested diagram delimiter"),
    ("@startuml\nstart\nfork\nstop\n@enduml", "unsupported directive 'fork'"),
    ("@startuml\nstart\nelse (no)\nstop\n@enduml", "'else' outside an if"),
    ("@startuml\nstart\nendif\nstop\n@enduml", "'endif' without a matching"),
    ("@startuml\nstart\nif (x?) then (yes)\n:A;\nstop\n@enduml",
     "never closed"),
    ("@startuml\nstart\nif (x?) then (yes)\n:A;\nelse\n:B;\nelse\n:C;\n"
     "endif\nstop\n@enduml", "duplicate 'else'"),
    ("@startuml\nstart\n:A;\nnote right: colour=red\nstop\n@enduml",
     "unknown note key 'colour'"),
    ("@startuml\nstart\nnote right: input=x\n:A;\nstop\n@enduml",
     "no preceding action"),
    ("@startuml\nstart\n:A;\nnote right: input=x\nnote right: input=y\n"
     "stop\n@enduml", "duplicate note key"),
])
def test_parse_errors(text, message):
    with pytest.raises(DiagramParseError, match=message):
        parse_activity_diagram(text)


def test_parse_error_carries_line_number():
    with pytest.raises(DiagramParseError) as err:
        parse_activity_diagram("@startuml\nstart\n:A;\nfloat on\nstop\n@enduml")
    assert err.value.line == 4


@pytest.mark.parametrize("text, message", [
    ("@startuml\nstart\n:A;\nstop\nstart\n:B;\nstop\n@enduml",
     "exactly one start"),
    ("@startuml\nstart\n:A;\n@enduml", "no stop node"),
])
def test_structure_errors(text, message):
    with pytest.raises(StructureError, match=message):
        parse_activity_diagram(text)


def test_comments_and_blank_lines_are_ignored():
    graph = parse_activity_diagram(
        "@startuml\n' a comment\n\nstart\n\n:Only step;\n' more\nstop\n@enduml"
    )
    assert [n.kind for n in graph.nodes] == ["start", "action", "stop"]


# ---------------------------------------------------------------------------
# canonical documents


def test_serialize_parse_round_trip_is_byte_stable(fixtures_dir):
    for name in ("s1", "s2", "s3", "s3-corrected"):
        text = (fixtures_dir / "chains" / f"{name}.puml").read_text()
        document = to_chain_document(parse_activity_diagram(text),
                                     source_digest="sd",
                                     generation_prompt_digest="gd")
        serialized = serialize_chain(document)
        reparsed = parse_chain_document(serialized)
        assert serialize_chain(reparsed) == serialized
        assert reparsed.metadata == (("generation_prompt_digest", "gd"),
                                     ("source_digest", "sd"))
        assert chain_digest(reparsed) == chain_digest(document)


def test_serialized_shape(fixtures_dir):
    text = (fixtures_dir / "chains" / "s3.puml").read_text()
    data = json.loads(serialize_chain(_doc(text)))
    assert set(data) == {"nodes", "edges", "metadata"}
    actions = [n for n in data["nodes"] if n["kind"] == "action"]
    assert [a["event"] for a in actions] == [
        "camera-sense", "brake", "pedestrian-camera-detected",
    ]
    assert actions[1]["notes"] == {
        "output": "Vehicle.ADAS.Brake", "output_format": "vss boolean",
    }
    assert all(set(e) <= {"from", "to", "guard"} for e in data["edges"])


def test_empty_action_label_cannot_become_an_event():
    graph = parse_activity_diagram("@startuml\nstart\n:!!!;\nstop\n@enduml")
    with pytest.raises(TransformError, match="no label"):
        to_chain_document(graph)


@pytest.mark.parametrize("payload, message", [
    ("nonsense", "not valid JSON"),
    ("[]", "must be a JSON object"),
    ('{"nodes": [{"kind": "action"}]}', "missing its id"),
    ('{"nodes": [{"id": "a", "kind": "start"}, {"id": "a", "kind": "stop"}]}',
     "duplicate chain node id"),
    ('{"nodes": [{"id": "a", "kind": "loop"}]}', "unknown kind"),
    ('{"nodes": [{"id": "a", "kind": "action", "label": "A"}]}',
     "missing its event"),
    ('{"nodes": [{"id": "a", "kind": "action", "event": "Not Normal"}]}',
     "not normalized"),
    ('{"nodes": [{"id": "a", "kind": "action", "event": "a", '
     '"notes": {"colour": "x"}}]}', "unknown note"),
    ('{"nodes": [{"id": "a", "kind": "start"}], '
     '"edges": [{"from": "a", "to": "zz"}]}', "unknown nodes"),
    ('{"nodes": [], "metadata": []}', "metadata must be an object"),
])
def test_parse_chain_document_rejects(payload, message):
    with pytest.raises(TransformError, match=message):
        parse_chain_document(payload)


# ---------------------------------------------------------------------------
# path enumeration


def test_paths_of_the_branching_fixture(fixtures_dir):
    document = _doc((fixtures_dir / "chains" / "s1.puml").read_text())
    paths = enumerate_paths(document)
    assert [p.events for p in paths] == [
        ("camera-sense", "pedestrian-camera-detected", "accelerate"),
        ("camera-sense", "cruise"),
    ]
    # steps carry their position and the owning node
    first = paths[0].steps
    assert [s.position for s in first] == [0, 1, 2]
    assert len(paths[0]) == 3


def test_three_decisions_give_eight_paths():
    blocks = "\n".join(
        f"if (risk {i}?) then (yes)\n  :Mitigate {i};\nendif" for i in (1, 2, 3)
    )
    document = _doc(f"@startuml\nstart\n{blocks}\nstop\n@enduml")
    paths = enumerate_paths(document)
    assert len(paths) == 8
    # declaration order: the all-yes path first, all-no path last
    assert paths[0].events == ("mitigate-1", "mitigate-2", "mitigate-3")
    assert paths[-1].events == ()


def test_cycle_is_rejected_at_enumeration():
    looped = json.dumps({
        "nodes": [
            {"id": "s", "kind": "start"},
            {"id": "a", "kind": "action", "label": "A", "event": "a"},
            {"id": "z", "kind": "stop"},
        ],
        "edges": [
            {"from": "s", "to": "a"},
            {"from": "a", "to": "a"},
            {"from": "a", "to": "z"},
        ],
    })
    document = parse_chain_document(looped)  # representable on purpose
    with pytest.raises(UnsupportedStructureError, match="cycle"):
        enumerate_paths(document)


def test_dead_end_is_rejected_at_enumeration():
    document = parse_chain_document(json.dumps({
        "nodes": [
            {"id": "s", "kind": "start"},
            {"id": "a", "kind": "action", "label": "A", "event": "a"},
        ],
        "edges": [{"from": "s", "to": "a"}],
    }))
    with pytest.raises(StructureError, match="dead-ends"):
        enumerate_paths(document)


# ---------------------------------------------------------------------------
# generation helpers


def test_strip_fences_and_extract_block():
    completion = (
        "Updated diagram:\n```plantuml\n@startuml\nstart\n:A;\nstop\n"
        "@enduml\n```\ntrailing remark\n"
    )
    assert "```" not in strip_fences(completion)
    block = extract_diagram_block(completion)
    assert block == "@startuml\nstart\n:A;\nstop\n@enduml\n"
    assert extract_diagram_block("no diagram here") is None
    assert extract_diagram_block("@enduml first\n@startuml\nlater") is None


def _accepted(protocol, key, value=None):
    entry = ExtractedEntry(name=key, type="float", value=value, protocol=protocol)
    return AcceptedEntry(entry=entry, resolved_key=key)


def test_render_relevant_entries():
    assert render_relevant_entries([]) == "(none)"
    text = render_relevant_entries([
        _accepted("VSS", "Vehicle.Speed.Target", "25.0"),
        _accepted("CAN", "BrakeCmd"),
    ])
    assert text == "VSS Vehicle.Speed.Target = 25.0\nCAN BrakeCmd"


def test_generate_chain_happy_path():
    completion = "Here you go:\n```plantuml\n" + LINEAR + "```\n"
    gateway = scripted_gateway([completion])
    block = generate_chain("code", "@startuml\n@enduml", [], gateway)
    assert block.startswith("@startuml")
    assert parse_activity_diagram(block)  # parses standalone


def test_generate_chain_prompt_embeds_all_three_bindings():
    prompts = []
    gateway = scripted_gateway([LINEAR], record_prompts=prompts)
    generate_chain("CODE-TEXT", "CHAIN-TEXT",
                   [_accepted("CAN", "BrakeCmd", "50")], gateway)
    (prompt,) = prompts
    assert prompt == build_chain_prompt("CODE-TEXT", "CHAIN-TEXT",
                                        "CAN BrakeCmd = 50")
    assert "CODE-TEXT" in prompt and "CHAIN-TEXT" in prompt


def test_generate_chain_without_block_keeps_raw_completion():
    gateway = scripted_gateway(["I could not produce a diagram, sorry."])
    with pytest.raises(ChainGenerationError) as err:
        generate_chain("code", "chain", [], gateway)
    assert "no @startuml block" in str(err.value)
    assert err.value.raw_text == "I could not produce a diagram, sorry."
    assert err.value.cause is None


def test_generate_chain_with_unparseable_block_carries_cause():
    bad = "```\n@startuml\nstart\nfork\nstop\n@enduml\n```"
    gateway = scripted_gateway([bad])
    with pytest.raises(ChainGenerationError) as err:
        generate_chain("code", "chain", [], gateway)
    assert "does not parse" in str(err.value)
    assert isinstance(err.value.cause, DiagramParseError)
    assert "@startuml" in err.value.raw_text
