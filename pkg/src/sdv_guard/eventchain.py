"""Activity-diagram event chains: parsing, canonical documents, path enumeration.

The accepted PlantUML subset is exactly:

    @startuml / @enduml        block delimiters
    start / stop               one start, one or more stops
    :Some label;               action node
    if (cond) then (yes)       decision; arms end at else/endif
    else (no)
    endif
    note right: key=value      attached to the closest preceding action;
                               keys: input, input_format, output, output_format
    ' comment                  ignored

Anything else is a parse error: unknown directives fail closed rather than
being skipped. Labels are normalized into event names by lowercasing,
collapsing non-alphanumeric runs to single hyphens and trimming, so
":Pedestrian (camera) detected;" becomes ``pedestrian-camera-detected``.

A parsed graph serializes to a canonical JSON document:

    {"nodes": [{"id", "kind", "label", "event"?, "notes"?}, ...],
     "edges": [{"from", "to", "guard"?}, ...],
     "metadata": {"source_digest": ..., "generation_prompt_digest": ...}}

Parsing that document back yields an equal document. Path enumeration walks
every maximal start-to-stop path following edges in declaration order; the
canonical form can encode cycles, which enumeration rejects.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field

from .errors import (
    ChainGenerationError,
    DiagramParseError,
    StructureError,
    TransformError,
    UnsupportedStructureError,
)
from .llm_gateway import PC2, CompletionRequest, LlmGateway, prompt_digest, render_prompt
from .util import canonical_json, normalize_name

NODE_KINDS = ("start", "stop", "action", "decision", "merge")
NOTE_KEYS = ("input", "input_format", "output", "output_format")

_ACTION_RE = re.compile(r"^:(?P<label>.*);$")
_IF_RE = re.compile(r"^if\s*\((?P<cond>[^)]*)\)\s*then(?:\s*\((?P<guard>[^)]*)\))?$")
_ELSE_RE = re.compile(r"^else(?:\s*\((?P<guard>[^)]*)\))?$")
_NOTE_RE = re.compile(
    r"^note\s+right\s*:\s*(?P<key>[A-Za-z_][A-Za-z0-9_]*)\s*=\s*(?P<value>.*)$"
)


@dataclass(frozen=True)
class Node:
    id: str
    kind: str
    label: str = ""
    notes: tuple[tuple[str, str], ...] = ()

    def note(self, key: str) -> str | None:
        for name, value in self.notes:
            if name == key:
                return value
        return None


@dataclass(frozen=True)
class Edge:
    src: str
    dst: str
    guard: str | None = None


@dataclass(frozen=True)
class ActivityGraph:
    nodes: tuple[Node, ...]
    edges: tuple[Edge, ...]

    def node(self, node_id: str) -> Node:
        for node in self.nodes:
            if node.id == node_id:
                return node
        raise KeyError(node_id)

    def outgoing(self, node_id: str) -> list[Edge]:
        return [e for e in self.edges if e.src == node_id]


@dataclass(frozen=True)
class EventStep:
    position: int
    event: str
    node_id: str


@dataclass(frozen=True)
class EventSequence:
    steps: tuple[EventStep, ...]

    @property
    def events(self) -> tuple[str, ...]:
        return tuple(step.event for step in self.steps)

    def __len__(self) -> int:
        return len(self.steps)


@dataclass(frozen=True)
class ChainDocument:
    graph: ActivityGraph
    events: tuple[tuple[str, str], ...]  # (action node id, normalized event)
    metadata: tuple[tuple[str, str], ...] = ()

    def event_of(self, node_id: str) -> str | None:
        for nid, event in self.events:
            if nid == node_id:
                return event
        return None


class _Parser:
    def __init__(self, text: str):
        self.lines = text.splitlines()
        self.nodes: list[Node] = []
        self.edges: list[Edge] = []
        self.counter = 0
        # dangling edge sources waiting for their target: (node_id, guard)
        self.frontier: list[tuple[str, str | None]] = []
        self.if_stack: list[dict] = []
        self.last_action: str | None = None
        self.notes: dict[str, list[tuple[str, str]]] = {}

    def new_node(self, kind: str, label: str = "") -> str:
        self.counter += 1
        node_id = f"n{self.counter}"
        self.nodes.append(Node(id=node_id, kind=kind, label=label))
        return node_id

    def connect(self, node_id: str) -> None:
        for src, guard in self.frontier:
            self.edges.append(Edge(src=src, dst=node_id, guard=guard))
        self.frontier = []

    def parse(self) -> ActivityGraph:
        body, offset = self._block_lines()
        open_ifs: list[int] = []
        for lineno, raw in body:
            line = raw.strip()
            if not line or line.startswith("'"):
                continue
            if line == "start":
                node_id = self.new_node("start")
                self.frontier = [(node_id, None)]
                self.last_action = None
            elif line == "stop":
                node_id = self.new_node("stop")
                self.connect(node_id)
                self.last_action = None
            elif match := _ACTION_RE.match(line):
                node_id = self.new_node("action", label=match.group("label").strip())
                self.connect(node_id)
                self.frontier = [(node_id, None)]
                self.last_action = node_id
            elif match := _IF_RE.match(line):
                node_id = self.new_node("decision", label=match.group("cond").strip())
                self.connect(node_id)
                guard = (match.group("guard") or "yes").strip()
                self.if_stack.append({
                    "decision": node_id,
                    "arms": [],
                    "has_else": False,
                    "line": lineno,
                })
                open_ifs.append(lineno)
                self.frontier = [(node_id, guard)]
                self.last_action = None
            elif match := _ELSE_RE.match(line):
                if not self.if_stack:
                    raise DiagramParseError("'else' outside an if block", line=lineno)
                frame = self.if_stack[-1]
                if frame["has_else"]:
                    raise DiagramParseError("duplicate 'else' in if block", line=lineno)
                frame["arms"].append(self.frontier)
                frame["has_else"] = True
                guard = (match.group("guard") or "no").strip()
                self.frontier = [(frame["decision"], guard)]
                self.last_action = None
            elif line == "endif":
                if not self.if_stack:
                    raise DiagramParseError("'endif' without a matching 'if'", line=lineno)
                frame = self.if_stack.pop()
                open_ifs.pop()
                arms = frame["arms"] + [self.frontier]
                if not frame["has_else"]:
                    arms.append([(frame["decision"], "no")])
                incoming = [pair for arm in arms for pair in arm]
                if incoming:
                    node_id = self.new_node("merge")
                    self.frontier = incoming
                    self.connect(node_id)
                    self.frontier = [(node_id, None)]
                else:
                    self.frontier = []
                self.last_action = None
            elif match := _NOTE_RE.match(line):
                self._attach_note(lineno, match.group("key"), match.group("value").strip())
            else:
                raise DiagramParseError(f"unsupported directive '{line}'", line=lineno)
        if self.if_stack:
            raise DiagramParseError(
                "if block is never closed", line=self.if_stack[-1]["line"]
            )
        nodes = tuple(
            Node(id=n.id, kind=n.kind, label=n.label,
                 notes=tuple(self.notes.get(n.id, ())))
            for n in self.nodes
        )
        graph = ActivityGraph(nodes=nodes, edges=tuple(self.edges))
        _validate_structure(graph)
        return graph

    def _attach_note(self, lineno: int, key: str, value: str) -> None:
        if key not in NOTE_KEYS:
            raise DiagramParseError(
                f"unknown note key '{key}' (expected one of {', '.join(NOTE_KEYS)})",
                line=lineno,
            )
        if self.last_action is None:
            raise DiagramParseError("note has no preceding action", line=lineno)
        existing = self.notes.setdefault(self.last_action, [])
        if any(name == key for name, _ in existing):
            raise DiagramParseError(f"duplicate note key '{key}'", line=lineno)
        existing.append((key, value))

    def _block_lines(self) -> tuple[list[tuple[int, str]], int]:
        numbered = list(enumerate(self.lines, start=1))
        stripped = [(n, line.strip()) for n, line in numbered]
        content = [(n, line) for n, line in stripped if line]
        if not content or content[0][1] != "@startuml":
            raise DiagramParseError("diagram must begin with @startuml",
                                    line=content[0][0] if content else 1)
        if content[-1][1] != "@enduml":
            raise DiagramParseError("diagram must end with @enduml", line=content[-1][0])
        inner = content[1:-1]
        for lineno, line in inner:
            if line in ("@startuml", "@enduml"):
                raise DiagramParseError("nested diagram delimiter", line=lineno)
        return inner, content[0][0]


def parse_activity_diagram(text: str) -> ActivityGraph:
    return _Parser(text).parse()


def _validate_structure(graph: ActivityGraph) -> None:
    starts = [n for n in graph.nodes if n.kind == "start"]
    stops = [n for n in graph.nodes if n.kind == "stop"]
    if len(starts) != 1:
        raise StructureError(
            f"diagram must have exactly one start node, found {len(starts)}"
        )
    if not stops:
        raise StructureError("diagram has no stop node")

    forward: dict[str, list[str]] = {n.id: [] for n in graph.nodes}
    backward: dict[str, list[str]] = {n.id: [] for n in graph.nodes}
    for edge in graph.edges:
        forward[edge.src].append(edge.dst)
        backward[edge.dst].append(edge.src)

    reachable = _flood(starts[0].id, forward)
    unreachable = sorted(set(forward) - reachable)
    if unreachable:
        raise StructureError(
            "unreachable from start: " + ", ".join(unreachable)
        )
    reaches_stop: set[str] = set()
    for stop in stops:
        reaches_stop |= _flood(stop.id, backward)
    stranded = sorted(set(forward) - reaches_stop)
    if stranded:
        raise StructureError(
            "cannot reach any stop: " + ", ".join(stranded)
        )
    for node in graph.nodes:
        out = graph.outgoing(node.id)
        if node.kind == "action" and len(out) != 1:
            raise StructureError(
                f"action '{node.id}' must have exactly one outgoing edge, has {len(out)}"
            )
        if node.kind == "decision":
            guards = [e.guard or "" for e in out]
            if len(out) < 2:
                raise StructureError(
                    f"decision '{node.id}' must have at least two outgoing edges"
                )
            if len(set(guards)) != len(guards):
                raise StructureError(
                    f"decision '{node.id}' has duplicate guards"
                )
        if node.kind == "stop" and out:
            raise StructureError(f"stop '{node.id}' must have no outgoing edges")


def _flood(origin: str, adjacency: dict[str, list[str]]) -> set[str]:
    seen = {origin}
    queue = [origin]
    while queue:
        current = queue.pop()
        for nxt in adjacency[current]:
            if nxt not in seen:
                seen.add(nxt)
                queue.append(nxt)
    return seen


# ---------------------------------------------------------------------------
# chain documents


def to_chain_document(graph: ActivityGraph, source_digest: str = "",
                      generation_prompt_digest: str = "") -> ChainDocument:
    """Normalize action labels into events and wrap the graph with metadata."""
    events: list[tuple[str, str]] = []
    for node in graph.nodes:
        if node.kind != "action":
            continue
        event = normalize_name(node.label)
        if not event:
            raise TransformError(
                f"action '{node.id}' has no label to derive an event from"
            )
        events.append((node.id, event))
    metadata = (
        ("source_digest", source_digest),
        ("generation_prompt_digest", generation_prompt_digest),
    )
    return ChainDocument(graph=graph, events=tuple(events), metadata=metadata)


def serialize_chain(document: ChainDocument) -> str:
    """Canonical JSON form; equal documents serialize to identical bytes."""
    events = dict(document.events)
    nodes = []
    for node in document.graph.nodes:
        obj: dict = {"id": node.id, "kind": node.kind, "label": node.label}
        if node.id in events:
            obj["event"] = events[node.id]
        if node.notes:
            obj["notes"] = {k: v for k, v in node.notes}
        nodes.append(obj)
    edges = []
    for edge in document.graph.edges:
        obj = {"from": edge.src, "to": edge.dst}
        if edge.guard is not None:
            obj["guard"] = edge.guard
        edges.append(obj)
    return canonical_json({
        "nodes": nodes,
        "edges": edges,
        "metadata": {k: v for k, v in document.metadata},
    })


def parse_chain_document(text: str) -> ChainDocument:
    """Inverse of serialize_chain; validates ids, kinds and edge endpoints only.

    Cycles are representable here on purpose: they are rejected at path
    enumeration, not at document parse time.
    """
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise TransformError(f"chain document is not valid JSON: {exc}") from exc
    if not isinstance(raw, dict):
        raise TransformError("chain document must be a JSON object")
    nodes = []
    events = []
    ids: set[str] = set()
    for obj in raw.get("nodes", []):
        kind = obj.get("kind")
        node_id = obj.get("id")
        if not isinstance(node_id, str) or not node_id:
            raise TransformError("chain node is missing its id")
        if node_id in ids:
            raise TransformError(f"duplicate chain node id '{node_id}'")
        ids.add(node_id)
        if kind not in NODE_KINDS:
            raise TransformError(f"chain node '{node_id}' has unknown kind '{kind}'")
        notes = obj.get("notes", {})
        if not isinstance(notes, dict):
            raise TransformError(f"chain node '{node_id}' notes must be an object")
        for key in notes:
            if key not in NOTE_KEYS:
                raise TransformError(f"chain node '{node_id}' has unknown note '{key}'")
        nodes.append(Node(
            id=node_id, kind=kind, label=obj.get("label", ""),
            notes=tuple((k, str(v)) for k, v in notes.items()),
        ))
        if kind == "action":
            event = obj.get("event")
            if not isinstance(event, str) or not event:
                raise TransformError(f"action '{node_id}' is missing its event")
            if event != normalize_name(event):
                raise TransformError(
                    f"action '{node_id}' event '{event}' is not normalized"
                )
            events.append((node_id, event))
    edges = []
    for obj in raw.get("edges", []):
        src, dst = obj.get("from"), obj.get("to")
        if src not in ids or dst not in ids:
            raise TransformError(f"edge {src!r} -> {dst!r} references unknown nodes")
        edges.append(Edge(src=src, dst=dst, guard=obj.get("guard")))
    metadata = raw.get("metadata", {})
    if not isinstance(metadata, dict):
        raise TransformError("chain metadata must be an object")
    return ChainDocument(
        graph=ActivityGraph(nodes=tuple(nodes), edges=tuple(edges)),
        events=tuple(events),
        metadata=tuple(sorted((str(k), str(v)) for k, v in metadata.items())),
    )


def chain_digest(document: ChainDocument) -> str:
    from .util import sha256_text

    return sha256_text(serialize_chain(document))


def enumerate_paths(document: ChainDocument) -> list[EventSequence]:
    """Every maximal start-to-stop path, edges followed in declaration order.

    Returns the action-event sequences; decision and merge nodes contribute
    no events. Cycles raise an unsupported-structure error naming a node on
    the cycle.
    """
    graph = document.graph
    starts = [n for n in graph.nodes if n.kind == "start"]
    if len(starts) != 1:
        raise StructureError(
            f"path enumeration needs exactly one start node, found {len(starts)}"
        )
    outgoing: dict[str, list[Edge]] = {n.id: [] for n in graph.nodes}
    for edge in graph.edges:
        outgoing[edge.src].append(edge)
    kinds = {n.id: n.kind for n in graph.nodes}
    events = dict(document.events)

    paths: list[EventSequence] = []
    on_stack: set[str] = set()
    steps: list[EventStep] = []

    def walk(node_id: str) -> None:
        if node_id in on_stack:
            raise UnsupportedStructureError(
                f"chain contains a cycle through node '{node_id}'"
            )
        kind = kinds[node_id]
        appended = False
        if kind == "action":
            steps.append(EventStep(
                position=len(steps), event=events[node_id], node_id=node_id,
            ))
            appended = True
        if kind == "stop":
            paths.append(EventSequence(steps=tuple(steps)))
            return
        edges = outgoing[node_id]
        if not edges:
            raise StructureError(f"node '{node_id}' dead-ends before any stop")
        on_stack.add(node_id)
        try:
            for edge in edges:
                walk(edge.dst)
        finally:
            on_stack.discard(node_id)
            if appended:
                steps.pop()

    walk(starts[0].id)
    return paths


# ---------------------------------------------------------------------------
# chain generation


def render_relevant_entries(accepted) -> str:
    """Stable text form of accepted entries for the chain-update construct."""
    lines = []
    for acc in accepted:
        line = f"{acc.entry.protocol} {acc.resolved_key}"
        if acc.entry.value is not None:
            line += f" = {acc.entry.value}"
        lines.append(line)
    return "\n".join(lines) if lines else "(none)"


def build_chain_prompt(code: str, current_chain: str, relevant_text: str) -> str:
    return render_prompt(PC2, {
        "current-event-chain": current_chain,
        "code": code,
        "relevant messages/signals": relevant_text,
    })


def strip_fences(text: str) -> str:
    """Drop Markdown code-fence lines, keeping everything between them."""
    return "\n".join(
        line for line in text.splitlines() if not line.lstrip().startswith("```")
    )


def extract_diagram_block(text: str) -> str | None:
    lines = strip_fences(text).splitlines()
    start = end = None
    for index, line in enumerate(lines):
        if line.strip() == "@startuml" and start is None:
            start = index
        elif line.strip() == "@enduml" and start is not None:
            end = index
            break
    if start is None or end is None:
        return None
    return "\n".join(lines[start:end + 1]) + "\n"


def generate_chain(code: str, current_chain: str, relevant, gateway: LlmGateway) -> str:
    """Ask the gateway for an updated diagram and insist the result parses.

    Returns the extracted ``@startuml`` block. A completion without a
    parseable block raises a generation error carrying the raw completion
    and the parse failure.
    """
    prompt = build_chain_prompt(code, current_chain, render_relevant_entries(relevant))
    completion = gateway.complete(CompletionRequest(prompt=prompt))
    block = extract_diagram_block(completion)
    if block is None:
        raise ChainGenerationError(
            "completion contains no @startuml block", raw_text=completion,
        )
    try:
        parse_activity_diagram(block)
    except (DiagramParseError, StructureError) as exc:
        raise ChainGenerationError(
            f"generated diagram does not parse: {exc}", raw_text=completion, cause=exc,
        ) from exc
    return block


def chain_generation_prompt_digest(code: str, current_chain: str, relevant) -> str:
    return prompt_digest(
        build_chain_prompt(code, current_chain, render_relevant_entries(relevant))
    )
