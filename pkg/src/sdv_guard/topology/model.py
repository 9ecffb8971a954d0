"""Metamodel and instance models for vehicle network topologies.

A metamodel is a JSON document:

    {"classes": [{"name", "abstract"?, "parent"?,
                  "attributes": [{"name", "kind"}, ...]}, ...],
     "enums": [{"name", "literals": [...]}, ...]}

Attribute kinds: ``string``, ``real``, ``int``, ``bool``, ``enum(E)`` and
``ref(C)``. Class names are unique, inheritance is acyclic, and every
enum/ref target must exist. The default vehicle-topology metamodel ships as
package data and is loaded with :func:`default_metamodel`.

An instance model is a JSON document:

    {"objects": [{"id", "class",
                  "attributes": {name: scalar, ...},
                  "references": {name: object-id, ...}}, ...]}

Instances can also be exchanged as PlantUML object diagrams:

    @startuml
    object hpc1 : HighPerformanceComputer
    hpc1 : name = "front HPC"
    object m1 : Message
    m1 : standard = IEEE-1722
    m1 --> hpc1 : source
    @enduml

Attribute lines assign scalars (quoted strings, numbers, true/false, or bare
enum literals); labeled arrows assign references. Import and export are
inverses over this subset.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from importlib import resources

from ..errors import InstanceParseError, MetamodelError, ModelImportError

KIND_RE = re.compile(r"^(string|real|int|bool|enum\(([A-Za-z_][A-Za-z0-9_]*)\)|ref\(([A-Za-z_][A-Za-z0-9_]*)\))$")
_NAME_RE = re.compile(r"^[A-Za-z_][A-Za-z0-9_]*$")
_ID_RE = re.compile(r"^[A-Za-z_][A-Za-z0-9_.-]*$")


@dataclass(frozen=True)
class Attribute:
    name: str
    kind: str

    @property
    def category(self) -> str:
        """'string' | 'real' | 'int' | 'bool' | 'enum' | 'ref'"""
        return self.kind.split("(", 1)[0]

    @property
    def target(self) -> str | None:
        """Enum or class name for enum()/ref() kinds."""
        if "(" in self.kind:
            return self.kind[self.kind.index("(") + 1:-1]
        return None


@dataclass(frozen=True)
class MetaClass:
    name: str
    abstract: bool = False
    parent: str | None = None
    attributes: tuple[Attribute, ...] = ()


@dataclass(frozen=True)
class EnumDef:
    name: str
    literals: tuple[str, ...]


class Metamodel:
    def __init__(self, classes: tuple[MetaClass, ...], enums: tuple[EnumDef, ...]):
        self.classes = {c.name: c for c in classes}
        self.enums = {e.name: e for e in enums}
        self._order = tuple(c.name for c in classes)

    def class_names(self) -> tuple[str, ...]:
        return self._order

    def is_subclass(self, child: str, ancestor: str) -> bool:
        """True when child == ancestor or child inherits from it."""
        current: str | None = child
        while current is not None:
            if current == ancestor:
                return True
            cls = self.classes.get(current)
            current = cls.parent if cls else None
        return False

    def all_attributes(self, class_name: str) -> dict[str, Attribute]:
        """Own and inherited attributes, nearest declaration wins."""
        chain: list[MetaClass] = []
        current = self.classes.get(class_name)
        while current is not None:
            chain.append(current)
            current = self.classes.get(current.parent) if current.parent else None
        out: dict[str, Attribute] = {}
        for cls in reversed(chain):
            for attr in cls.attributes:
                out[attr.name] = attr
        return out

    def resolve_attribute(self, class_name: str, attr_name: str) -> Attribute | None:
        return self.all_attributes(class_name).get(attr_name)

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, Metamodel)
            and self.classes == other.classes
            and self.enums == other.enums
        )


def parse_metamodel(text: str) -> Metamodel:
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise MetamodelError(f"metamodel is not valid JSON: {exc}") from exc
    if not isinstance(raw, dict) or not isinstance(raw.get("classes"), list):
        raise MetamodelError("metamodel must be an object with a 'classes' array")
    if not raw["classes"]:
        raise MetamodelError("metamodel declares no classes")

    enums: list[EnumDef] = []
    for obj in raw.get("enums", []):
        name = obj.get("name")
        literals = obj.get("literals")
        if not isinstance(name, str) or not _NAME_RE.match(name):
            raise MetamodelError(f"invalid enum name {name!r}")
        if not isinstance(literals, list) or not literals or not all(
            isinstance(l, str) and l for l in literals
        ):
            raise MetamodelError(f"enum '{name}' needs a non-empty literal list")
        if len(set(literals)) != len(literals):
            raise MetamodelError(f"enum '{name}' repeats a literal")
        enums.append(EnumDef(name=name, literals=tuple(literals)))
    enum_names = {e.name for e in enums}
    if len(enum_names) != len(enums):
        raise MetamodelError("duplicate enum name")

    classes: list[MetaClass] = []
    for obj in raw["classes"]:
        if not isinstance(obj, dict):
            raise MetamodelError("class declarations must be objects")
        name = obj.get("name")
        if not isinstance(name, str) or not _NAME_RE.match(name):
            raise MetamodelError(f"invalid class name {name!r}")
        attributes = []
        for attr in obj.get("attributes", []):
            attr_name = attr.get("name") if isinstance(attr, dict) else None
            kind = attr.get("kind") if isinstance(attr, dict) else None
            if not isinstance(attr_name, str) or not _NAME_RE.match(attr_name):
                raise MetamodelError(f"class '{name}' has an invalid attribute name")
            if not isinstance(kind, str) or not KIND_RE.match(kind):
                raise MetamodelError(
                    f"attribute '{name}.{attr_name}' has invalid kind {kind!r}"
                )
            attributes.append(Attribute(name=attr_name, kind=kind))
        if len({a.name for a in attributes}) != len(attributes):
            raise MetamodelError(f"class '{name}' repeats an attribute name")
        parent = obj.get("parent")
        if parent is not None and not isinstance(parent, str):
            raise MetamodelError(f"class '{name}' has an invalid parent")
        classes.append(MetaClass(
            name=name,
            abstract=bool(obj.get("abstract", False)),
            parent=parent,
            attributes=tuple(attributes),
        ))

    names = [c.name for c in classes]
    if len(set(names)) != len(names):
        dupe = sorted({n for n in names if names.count(n) > 1})[0]
        raise MetamodelError(f"duplicate class name '{dupe}'")
    by_name = {c.name: c for c in classes}
    for cls in classes:
        if cls.parent is not None and cls.parent not in by_name:
            raise MetamodelError(f"class '{cls.name}' extends unknown '{cls.parent}'")
        for attr in cls.attributes:
            if attr.category == "enum" and attr.target not in enum_names:
                raise MetamodelError(
                    f"attribute '{cls.name}.{attr.name}' uses unknown enum "
                    f"'{attr.target}'"
                )
            if attr.category == "ref" and attr.target not in by_name:
                raise MetamodelError(
                    f"attribute '{cls.name}.{attr.name}' references unknown class "
                    f"'{attr.target}'"
                )
    # inheritance must be acyclic
    for cls in classes:
        seen = {cls.name}
        current = cls.parent
        while current is not None:
            if current in seen:
                raise MetamodelError(f"inheritance cycle through '{current}'")
            seen.add(current)
            current = by_name[current].parent
    return Metamodel(classes=tuple(classes), enums=tuple(enums))


def serialize_metamodel(metamodel: Metamodel) -> str:
    doc = {
        "classes": [
            {
                "name": cls.name,
                **({"abstract": True} if cls.abstract else {}),
                **({"parent": cls.parent} if cls.parent else {}),
                "attributes": [
                    {"name": a.name, "kind": a.kind} for a in cls.attributes
                ],
            }
            for cls in (metamodel.classes[name] for name in metamodel.class_names())
        ],
        "enums": [
            {"name": e.name, "literals": list(e.literals)}
            for e in metamodel.enums.values()
        ],
    }
    return json.dumps(doc, indent=2, ensure_ascii=False) + "\n"


def default_metamodel() -> Metamodel:
    """The vehicle-topology metamodel shipped as package data."""
    text = resources.files("sdv_guard").joinpath("data/metamodel.json").read_text("utf-8")
    return parse_metamodel(text)


# ---------------------------------------------------------------------------
# instance models


@dataclass
class ModelObject:
    id: str
    cls: str
    attrs: dict[str, object] = field(default_factory=dict)
    refs: dict[str, str] = field(default_factory=dict)

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, ModelObject)
            and (self.id, self.cls, self.attrs, self.refs)
            == (other.id, other.cls, other.attrs, other.refs)
        )


class InstanceModel:
    def __init__(self, objects: list[ModelObject]):
        self.objects: dict[str, ModelObject] = {}
        for obj in objects:
            if obj.id in self.objects:
                raise InstanceParseError(f"duplicate object id '{obj.id}'")
            self.objects[obj.id] = obj

    def get(self, object_id: str) -> ModelObject | None:
        return self.objects.get(object_id)

    def __len__(self) -> int:
        return len(self.objects)

    def __eq__(self, other) -> bool:
        return isinstance(other, InstanceModel) and self.objects == other.objects


_SCALAR_TYPES = (str, int, float, bool)


def parse_instance(text: str) -> InstanceModel:
    """Parse the canonical JSON form; references must resolve syntactically."""
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise InstanceParseError(f"instance model is not valid JSON: {exc}") from exc
    if not isinstance(raw, dict) or not isinstance(raw.get("objects"), list):
        raise InstanceParseError("instance model must be an object with an 'objects' array")
    objects: list[ModelObject] = []
    for obj in raw["objects"]:
        if not isinstance(obj, dict):
            raise InstanceParseError("every object declaration must be an object")
        object_id = obj.get("id")
        cls = obj.get("class")
        if not isinstance(object_id, str) or not _ID_RE.match(object_id):
            raise InstanceParseError(f"invalid object id {object_id!r}")
        if not isinstance(cls, str) or not cls:
            raise InstanceParseError(f"object '{object_id}' is missing its class")
        attrs = obj.get("attributes", {})
        refs = obj.get("references", {})
        if not isinstance(attrs, dict) or not isinstance(refs, dict):
            raise InstanceParseError(
                f"object '{object_id}' attributes/references must be objects"
            )
        for name, value in attrs.items():
            if value is not None and not isinstance(value, _SCALAR_TYPES):
                raise InstanceParseError(
                    f"attribute '{object_id}.{name}' must be a scalar"
                )
        for name, value in refs.items():
            if not isinstance(value, str):
                raise InstanceParseError(
                    f"reference '{object_id}.{name}' must be an object id"
                )
        objects.append(ModelObject(
            id=object_id, cls=cls, attrs=dict(attrs), refs=dict(refs),
        ))
    model = InstanceModel(objects)
    for obj in model.objects.values():
        for name, target in obj.refs.items():
            if target not in model.objects:
                raise InstanceParseError(
                    f"reference '{obj.id}.{name}' points to unknown object '{target}'"
                )
    return model


def serialize_instance(model: InstanceModel) -> str:
    doc = {
        "objects": [
            {
                "id": obj.id,
                "class": obj.cls,
                "attributes": {k: obj.attrs[k] for k in sorted(obj.attrs)},
                "references": {k: obj.refs[k] for k in sorted(obj.refs)},
            }
            for obj in sorted(model.objects.values(), key=lambda o: o.id)
        ]
    }
    return json.dumps(doc, indent=2, ensure_ascii=False, sort_keys=True) + "\n"


# ---------------------------------------------------------------------------
# conformance


@dataclass(frozen=True)
class ConformanceViolation:
    object_id: str
    kind: str
    message: str


@dataclass(frozen=True)
class ConformanceReport:
    violations: tuple[ConformanceViolation, ...]

    @property
    def ok(self) -> bool:
        return not self.violations

    def render_text(self) -> str:
        if self.ok:
            return "conformant\n"
        lines = [
            f"{v.object_id}: {v.kind}: {v.message}" for v in self.violations
        ]
        return "\n".join(lines) + "\n"


def _value_matches(kind_category: str, value, enum: EnumDef | None) -> bool:
    if kind_category == "string":
        return isinstance(value, str)
    if kind_category == "bool":
        return isinstance(value, bool)
    if kind_category == "int":
        return isinstance(value, int) and not isinstance(value, bool)
    if kind_category == "real":
        return isinstance(value, (int, float)) and not isinstance(value, bool)
    if kind_category == "enum":
        return isinstance(value, str) and enum is not None and value in enum.literals
    return False


def conform(model: InstanceModel, metamodel: Metamodel) -> ConformanceReport:
    """Check every object against its class: kinds, targets, abstractness."""
    violations: list[ConformanceViolation] = []
    for obj in model.objects.values():
        cls = metamodel.classes.get(obj.cls)
        if cls is None:
            violations.append(ConformanceViolation(
                obj.id, "unknown-class", f"class '{obj.cls}' is not in the metamodel"
            ))
            continue
        if cls.abstract:
            violations.append(ConformanceViolation(
                obj.id, "abstract-class", f"class '{obj.cls}' is abstract"
            ))
        declared = metamodel.all_attributes(obj.cls)
        for name, value in obj.attrs.items():
            attr = declared.get(name)
            if attr is None:
                violations.append(ConformanceViolation(
                    obj.id, "unknown-attribute", f"'{obj.cls}' declares no '{name}'"
                ))
                continue
            if attr.category == "ref":
                violations.append(ConformanceViolation(
                    obj.id, "kind-mismatch",
                    f"'{name}' is a reference, assign it under references"
                ))
                continue
            enum = metamodel.enums.get(attr.target) if attr.category == "enum" else None
            if not _value_matches(attr.category, value, enum):
                violations.append(ConformanceViolation(
                    obj.id, "kind-mismatch",
                    f"'{name}' = {value!r} does not match kind {attr.kind}"
                ))
        for name, target_id in obj.refs.items():
            attr = declared.get(name)
            if attr is None:
                violations.append(ConformanceViolation(
                    obj.id, "unknown-attribute", f"'{obj.cls}' declares no '{name}'"
                ))
                continue
            if attr.category != "ref":
                violations.append(ConformanceViolation(
                    obj.id, "kind-mismatch",
                    f"'{name}' has kind {attr.kind}, not a reference"
                ))
                continue
            target = model.get(target_id)
            if target is None:
                violations.append(ConformanceViolation(
                    obj.id, "dangling-reference",
                    f"'{name}' points to missing object '{target_id}'"
                ))
                continue
            if target.cls not in metamodel.classes or not metamodel.is_subclass(
                target.cls, attr.target
            ):
                violations.append(ConformanceViolation(
                    obj.id, "ill-typed-reference",
                    f"'{name}' must target {attr.target}, got {target.cls} '{target_id}'"
                ))
    return ConformanceReport(violations=tuple(violations))


# ---------------------------------------------------------------------------
# PlantUML object-diagram import/export

_OBJECT_RE = re.compile(
    r"^object\s+(?P<id>[A-Za-z_][A-Za-z0-9_.-]*)\s*:\s*(?P<cls>[A-Za-z_][A-Za-z0-9_]*)$"
)
_ATTR_RE = re.compile(
    r"^(?P<id>[A-Za-z_][A-Za-z0-9_.-]*)\s*:\s*(?P<name>[A-Za-z_][A-Za-z0-9_]*)\s*=\s*(?P<value>.+)$"
)
_ARROW_RE = re.compile(
    r"^(?P<src>[A-Za-z_][A-Za-z0-9_.-]*)\s*-+>\s*(?P<dst>[A-Za-z_][A-Za-z0-9_.-]*)\s*:\s*(?P<name>[A-Za-z_][A-Za-z0-9_]*)$"
)
_NUMBER_RE = re.compile(r"^-?\d+(\.\d+)?$")


def _parse_scalar(raw: str):
    text = raw.strip()
    if len(text) >= 2 and text[0] == text[-1] and text[0] in ("'", '"'):
        return text[1:-1]
    if text == "true":
        return True
    if text == "false":
        return False
    if _NUMBER_RE.match(text):
        return float(text) if "." in text else int(text)
    return text  # bare word: enum literal or unquoted string


def import_class_diagram(text: str) -> InstanceModel:
    """Parse the object-diagram subset described in the module docstring."""
    lines = text.splitlines()
    content = [(n, l.strip()) for n, l in enumerate(lines, start=1) if l.strip()]
    if not content or content[0][1] != "@startuml":
        raise ModelImportError("diagram must begin with @startuml",
                               line=content[0][0] if content else 1)
    if content[-1][1] != "@enduml":
        raise ModelImportError("diagram must end with @enduml", line=content[-1][0])
    objects: dict[str, ModelObject] = {}
    order: list[ModelObject] = []
    for lineno, line in content[1:-1]:
        if line.startswith("'"):
            continue
        if match := _OBJECT_RE.match(line):
            object_id = match.group("id")
            if object_id in objects:
                raise ModelImportError(f"duplicate object '{object_id}'", line=lineno)
            obj = ModelObject(id=object_id, cls=match.group("cls"))
            objects[object_id] = obj
            order.append(obj)
        elif match := _ARROW_RE.match(line):
            src, dst = match.group("src"), match.group("dst")
            for end in (src, dst):
                if end not in objects:
                    raise ModelImportError(
                        f"arrow references undeclared object '{end}'", line=lineno
                    )
            name = match.group("name")
            if name in objects[src].refs:
                raise ModelImportError(
                    f"duplicate reference '{src}.{name}'", line=lineno
                )
            objects[src].refs[name] = dst
        elif match := _ATTR_RE.match(line):
            object_id = match.group("id")
            if object_id not in objects:
                raise ModelImportError(
                    f"attribute for undeclared object '{object_id}'", line=lineno
                )
            name = match.group("name")
            if name in objects[object_id].attrs:
                raise ModelImportError(
                    f"duplicate attribute '{object_id}.{name}'", line=lineno
                )
            objects[object_id].attrs[name] = _parse_scalar(match.group("value"))
        else:
            raise ModelImportError(f"unsupported line '{line}'", line=lineno)
    return InstanceModel(order)


def _format_scalar(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (int, float)):
        return repr(value)
    text = str(value)
    if _NUMBER_RE.match(text) or text in ("true", "false"):
        return f'"{text}"'
    if re.match(r"^[A-Za-z_][A-Za-z0-9_-]*$", text):
        return text  # bare: round-trips as the same string
    return f'"{text}"'


def export_class_diagram(model: InstanceModel) -> str:
    """Inverse of import_class_diagram over the same subset."""
    lines = ["@startuml"]
    ordered = sorted(model.objects.values(), key=lambda o: o.id)
    for obj in ordered:
        lines.append(f"object {obj.id} : {obj.cls}")
    for obj in ordered:
        for name in sorted(obj.attrs):
            lines.append(f"{obj.id} : {name} = {_format_scalar(obj.attrs[name])}")
    for obj in ordered:
        for name in sorted(obj.refs):
            lines.append(f"{obj.id} --> {obj.refs[name]} : {name}")
    lines.append("@enduml")
    return "\n".join(lines) + "\n"
