"""Security constraints over instance models: a small OCL subset.

Constraint files hold one or more blocks:

    context <Class>
    inv <Name>:
        <expr>

Expression forms, loosest binding first: ``implies`` (right-associative),
``or``, ``and``, comparisons (``=``, ``<>``, ``<``, ``<=``, ``>``, ``>=``),
``not`` (binds tighter than comparisons, as in OCL), ``let x : T = e in e``,
``self`` navigation chains (``self.target.name``), ``e.oclIsTypeOf(C)``
(exact type, never a subclass), ``e.toReal()``, parentheses, and literals:
reals, integers, single-quoted strings and enum literals ``E::lit`` (the
literal part may contain hyphens).

Everything type-checks against the metamodel under the context class before
any evaluation. At evaluation time a constraint applies to every object
whose class equals the context class or inherits from it; other objects are
reported not-applicable. Boolean connectives short-circuit, so a false
antecedent never evaluates its consequent. Runtime faults (``toReal`` on a
non-numeric string, navigation to an unset attribute) fail the constraint
for that object with the fault as the reason: analysis errs on the side of
flagging.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

from ..errors import ConstraintError
from .model import InstanceModel, Metamodel, ModelObject

_TOKEN_SPEC = [
    ("WS", r"[ \t\r\n]+"),
    ("COMMENT", r"--[^\n]*"),
    ("NUMBER", r"-?\d+(?:\.\d+)?"),
    ("STRING", r"'[^']*'"),
    ("IDENT", r"[A-Za-z_][A-Za-z0-9_]*(?:-[A-Za-z0-9_]+)*"),
    ("COLONCOLON", r"::"),
    ("LE", r"<="),
    ("GE", r">="),
    ("NE", r"<>"),
    ("LT", r"<"),
    ("GT", r">"),
    ("EQ", r"="),
    ("LPAREN", r"\("),
    ("RPAREN", r"\)"),
    ("DOT", r"\."),
    ("COLON", r":"),
]
_TOKEN_RE = re.compile("|".join(f"(?P<{name}>{pattern})" for name, pattern in _TOKEN_SPEC))

_KEYWORDS = {"context", "inv", "let", "in", "implies", "and", "or", "not", "self"}

_CMP_OPS = {"EQ": "=", "NE": "<>", "LT": "<", "LE": "<=", "GT": ">", "GE": ">="}

_LET_TYPES = {"Real", "Integer", "String", "Boolean"}


@dataclass(frozen=True)
class Token:
    kind: str
    text: str
    position: int


def _lex(text: str) -> list[Token]:
    tokens: list[Token] = []
    index = 0
    while index < len(text):
        match = _TOKEN_RE.match(text, index)
        if match is None:
            raise ConstraintError(
                f"unexpected character '{text[index]}'", position=index
            )
        kind = match.lastgroup
        if kind not in ("WS", "COMMENT"):
            value = match.group(0)
            if kind == "IDENT" and value in _KEYWORDS:
                kind = value  # keyword tokens carry their own kind
            tokens.append(Token(kind=kind, text=value, position=index))
        index = match.end()
    return tokens


# ---------------------------------------------------------------------------
# AST


@dataclass(frozen=True)
class SelfRef:
    pass


@dataclass(frozen=True)
class VarRef:
    name: str


@dataclass(frozen=True)
class Nav:
    target: "OclExpr"
    attr: str


@dataclass(frozen=True)
class IsTypeOf:
    target: "OclExpr"
    class_name: str


@dataclass(frozen=True)
class ToReal:
    target: "OclExpr"


@dataclass(frozen=True)
class NumberLit:
    value: float
    is_real: bool


@dataclass(frozen=True)
class StringLit:
    value: str


@dataclass(frozen=True)
class EnumLit:
    enum: str
    literal: str


@dataclass(frozen=True)
class Compare:
    op: str
    left: "OclExpr"
    right: "OclExpr"


@dataclass(frozen=True)
class NotOp:
    child: "OclExpr"


@dataclass(frozen=True)
class AndOp:
    left: "OclExpr"
    right: "OclExpr"


@dataclass(frozen=True)
class OrOp:
    left: "OclExpr"
    right: "OclExpr"


@dataclass(frozen=True)
class Implies:
    left: "OclExpr"
    right: "OclExpr"


@dataclass(frozen=True)
class Let:
    var: str
    type_name: str
    value: "OclExpr"
    body: "OclExpr"


OclExpr = (SelfRef | VarRef | Nav | IsTypeOf | ToReal | NumberLit | StringLit
           | EnumLit | Compare | NotOp | AndOp | OrOp | Implies | Let)


@dataclass(frozen=True)
class Constraint:
    name: str
    context: str
    body: OclExpr


@dataclass(frozen=True)
class ConstraintSet:
    constraints: tuple[Constraint, ...]

    def __len__(self) -> int:
        return len(self.constraints)


class _Parser:
    def __init__(self, text: str):
        self.text = text
        self.tokens = _lex(text)
        self.index = 0

    def peek(self) -> Token | None:
        return self.tokens[self.index] if self.index < len(self.tokens) else None

    def take(self, kind: str | None = None) -> Token:
        token = self.peek()
        if token is None:
            raise ConstraintError("unexpected end of constraint text",
                                  position=len(self.text))
        if kind is not None and token.kind != kind:
            raise ConstraintError(
                f"expected {kind}, got '{token.text}'", position=token.position
            )
        self.index += 1
        return token

    def at(self, kind: str) -> bool:
        token = self.peek()
        return token is not None and token.kind == kind

    def document(self) -> list[Constraint]:
        constraints: list[Constraint] = []
        while self.peek() is not None:
            self.take("context")
            context_cls = self.take("IDENT").text
            if not self.at("inv"):
                raise ConstraintError(
                    "expected 'inv' after context declaration",
                    position=self.peek().position if self.peek() else len(self.text),
                )
            while self.at("inv"):
                self.take("inv")
                name = self.take("IDENT").text
                self.take("COLON")
                body = self.expr()
                constraints.append(Constraint(name=name, context=context_cls, body=body))
        return constraints

    def expr(self) -> OclExpr:
        if self.at("let"):
            return self.let_expr()
        return self.implies_expr()

    def let_expr(self) -> Let:
        self.take("let")
        var = self.take("IDENT").text
        self.take("COLON")
        type_name = self.take("IDENT").text
        self.take("EQ")
        value = self.expr()
        self.take("in")
        body = self.expr()
        return Let(var=var, type_name=type_name, value=value, body=body)

    def implies_expr(self) -> OclExpr:
        left = self.or_expr()
        if self.at("implies"):
            self.take("implies")
            return Implies(left=left, right=self.expr())
        return left

    def or_expr(self) -> OclExpr:
        left = self.and_expr()
        while self.at("or"):
            self.take("or")
            left = OrOp(left=left, right=self.and_expr())
        return left

    def and_expr(self) -> OclExpr:
        left = self.comparison()
        while self.at("and"):
            self.take("and")
            left = AndOp(left=left, right=self.comparison())
        return left

    def comparison(self) -> OclExpr:
        left = self.operand()
        token = self.peek()
        if token is not None and token.kind in _CMP_OPS:
            self.take()
            right = self.operand()
            return Compare(op=_CMP_OPS[token.kind], left=left, right=right)
        return left

    def operand(self) -> OclExpr:
        if self.at("not"):
            self.take("not")
            return NotOp(child=self.operand())
        return self.postfix()

    def postfix(self) -> OclExpr:
        expr = self.atom()
        while self.at("DOT"):
            self.take("DOT")
            name = self.take("IDENT").text
            if self.at("LPAREN"):
                lparen = self.take("LPAREN")
                if name == "oclIsTypeOf":
                    cls = self.take("IDENT").text
                    self.take("RPAREN")
                    expr = IsTypeOf(target=expr, class_name=cls)
                elif name == "toReal":
                    self.take("RPAREN")
                    expr = ToReal(target=expr)
                else:
                    raise ConstraintError(
                        f"unsupported operation '{name}'",
                        position=lparen.position, symbol=name,
                    )
            else:
                expr = Nav(target=expr, attr=name)
        return expr

    def atom(self) -> OclExpr:
        token = self.peek()
        if token is None:
            raise ConstraintError("expected an expression", position=len(self.text))
        if token.kind == "self":
            self.take()
            return SelfRef()
        if token.kind == "NUMBER":
            self.take()
            return NumberLit(value=float(token.text), is_real="." in token.text)
        if token.kind == "STRING":
            self.take()
            return StringLit(value=token.text[1:-1])
        if token.kind == "LPAREN":
            self.take()
            inner = self.expr()
            self.take("RPAREN")
            return inner
        if token.kind == "IDENT":
            self.take()
            if self.at("COLONCOLON"):
                self.take("COLONCOLON")
                literal = self.take("IDENT").text
                return EnumLit(enum=token.text, literal=literal)
            return VarRef(name=token.text)
        raise ConstraintError(
            f"unexpected '{token.text}'", position=token.position
        )


# ---------------------------------------------------------------------------
# type checking

_BOOL = "Boolean"
_REAL = "Real"
_INT = "Integer"
_STR = "String"

_KIND_TO_TYPE = {"string": _STR, "real": _REAL, "int": _INT, "bool": _BOOL}


def _is_numeric(t) -> bool:
    return t in (_REAL, _INT)


class _TypeChecker:
    def __init__(self, metamodel: Metamodel, context_cls: str, constraint: str):
        self.metamodel = metamodel
        self.context_cls = context_cls
        self.constraint = constraint

    def fail(self, message: str, symbol: str | None = None):
        raise ConstraintError(
            f"constraint '{self.constraint}': {message}", symbol=symbol
        )

    def check(self, expr: OclExpr, env: dict[str, object]):
        if isinstance(expr, SelfRef):
            return ("Object", self.context_cls)
        if isinstance(expr, VarRef):
            if expr.name not in env:
                self.fail(f"unknown name '{expr.name}'", symbol=expr.name)
            return env[expr.name]
        if isinstance(expr, NumberLit):
            return _REAL if expr.is_real else _INT
        if isinstance(expr, StringLit):
            return _STR
        if isinstance(expr, EnumLit):
            enum = self.metamodel.enums.get(expr.enum)
            if enum is None:
                self.fail(f"unknown enum '{expr.enum}'", symbol=expr.enum)
            if expr.literal not in enum.literals:
                self.fail(
                    f"enum '{expr.enum}' has no literal '{expr.literal}'",
                    symbol=expr.literal,
                )
            return ("Enum", expr.enum)
        if isinstance(expr, Nav):
            target = self.check(expr.target, env)
            if not (isinstance(target, tuple) and target[0] == "Object"):
                self.fail(f"cannot navigate '{expr.attr}' on a non-object value",
                          symbol=expr.attr)
            attr = self.metamodel.resolve_attribute(target[1], expr.attr)
            if attr is None:
                self.fail(
                    f"class '{target[1]}' has no attribute '{expr.attr}'",
                    symbol=expr.attr,
                )
            if attr.category == "ref":
                return ("Object", attr.target)
            if attr.category == "enum":
                return ("Enum", attr.target)
            return _KIND_TO_TYPE[attr.category]
        if isinstance(expr, IsTypeOf):
            target = self.check(expr.target, env)
            if not (isinstance(target, tuple) and target[0] == "Object"):
                self.fail("oclIsTypeOf applies to objects only",
                          symbol=expr.class_name)
            if expr.class_name not in self.metamodel.classes:
                self.fail(f"unknown class '{expr.class_name}'",
                          symbol=expr.class_name)
            return _BOOL
        if isinstance(expr, ToReal):
            target = self.check(expr.target, env)
            if target not in (_STR, _REAL, _INT):
                self.fail("toReal applies to strings and numbers only")
            return _REAL
        if isinstance(expr, Compare):
            left = self.check(expr.left, env)
            right = self.check(expr.right, env)
            if expr.op in ("<", "<=", ">", ">="):
                if not (_is_numeric(left) and _is_numeric(right)):
                    self.fail(f"'{expr.op}' needs numeric operands")
            else:
                if not _comparable(left, right):
                    self.fail(f"cannot compare {_type_name(left)} with {_type_name(right)}")
            return _BOOL
        if isinstance(expr, NotOp):
            if self.check(expr.child, env) != _BOOL:
                self.fail("'not' needs a boolean operand")
            return _BOOL
        if isinstance(expr, (AndOp, OrOp, Implies)):
            word = {"AndOp": "and", "OrOp": "or", "Implies": "implies"}[type(expr).__name__]
            if self.check(expr.left, env) != _BOOL or self.check(expr.right, env) != _BOOL:
                self.fail(f"'{word}' needs boolean operands")
            return _BOOL
        if isinstance(expr, Let):
            if expr.type_name not in _LET_TYPES:
                self.fail(f"unknown let type '{expr.type_name}'", symbol=expr.type_name)
            value = self.check(expr.value, env)
            declared = expr.type_name
            if declared == _REAL and _is_numeric(value):
                pass
            elif value != declared:
                self.fail(
                    f"let '{expr.var}' declares {declared} but binds {_type_name(value)}"
                )
            inner = dict(env)
            inner[expr.var] = declared
            return self.check(expr.body, inner)
        raise TypeError(f"unknown expression node {expr!r}")


def _comparable(left, right) -> bool:
    if _is_numeric(left) and _is_numeric(right):
        return True
    if left == right and not isinstance(left, tuple):
        return True
    if isinstance(left, tuple) and isinstance(right, tuple):
        return left[0] == right[0] and (left[0] == "Object" or left[1] == right[1])
    return False


def _type_name(t) -> str:
    if isinstance(t, tuple):
        return f"{t[0]}({t[1]})"
    return str(t)


def parse_constraints(text: str, metamodel: Metamodel) -> ConstraintSet:
    """Parse and type-check a constraint file against the metamodel."""
    constraints = _Parser(text).document()
    names: set[str] = set()
    for constraint in constraints:
        if constraint.name in names:
            raise ConstraintError(f"duplicate constraint name '{constraint.name}'")
        names.add(constraint.name)
        if constraint.context not in metamodel.classes:
            raise ConstraintError(
                f"constraint '{constraint.name}': unknown context class "
                f"'{constraint.context}'",
                symbol=constraint.context,
            )
        checker = _TypeChecker(metamodel, constraint.context, constraint.name)
        result = checker.check(constraint.body, {})
        if result != _BOOL:
            raise ConstraintError(
                f"constraint '{constraint.name}' must be boolean, got {_type_name(result)}"
            )
    return ConstraintSet(constraints=tuple(constraints))


# ---------------------------------------------------------------------------
# evaluation


class _EvalFault(Exception):
    pass


class _Evaluator:
    def __init__(self, model: InstanceModel, metamodel: Metamodel):
        self.model = model
        self.metamodel = metamodel

    def eval(self, expr: OclExpr, env: dict[str, object]):
        if isinstance(expr, SelfRef):
            return env["self"]
        if isinstance(expr, VarRef):
            return env[expr.name]
        if isinstance(expr, NumberLit):
            return expr.value
        if isinstance(expr, StringLit):
            return expr.value
        if isinstance(expr, EnumLit):
            return expr.literal
        if isinstance(expr, Nav):
            target = self.eval(expr.target, env)
            if not isinstance(target, ModelObject):
                raise _EvalFault(f"cannot navigate '{expr.attr}' on {target!r}")
            if expr.attr in target.refs:
                resolved = self.model.get(target.refs[expr.attr])
                if resolved is None:
                    raise _EvalFault(
                        f"reference '{target.id}.{expr.attr}' dangles"
                    )
                return resolved
            if expr.attr in target.attrs:
                return target.attrs[expr.attr]
            raise _EvalFault(
                f"object '{target.id}' has no value for '{expr.attr}'"
            )
        if isinstance(expr, IsTypeOf):
            target = self.eval(expr.target, env)
            if not isinstance(target, ModelObject):
                raise _EvalFault("oclIsTypeOf applies to objects only")
            return target.cls == expr.class_name
        if isinstance(expr, ToReal):
            value = self.eval(expr.target, env)
            if isinstance(value, bool):
                raise _EvalFault("toReal cannot convert a boolean")
            if isinstance(value, (int, float)):
                return float(value)
            if isinstance(value, str):
                try:
                    return float(value.strip())
                except ValueError:
                    raise _EvalFault(
                        f"toReal cannot convert '{value}'"
                    ) from None
            raise _EvalFault(f"toReal cannot convert {value!r}")
        if isinstance(expr, Compare):
            left = self.eval(expr.left, env)
            right = self.eval(expr.right, env)
            return self._compare(expr.op, left, right)
        if isinstance(expr, NotOp):
            return not self._boolean(self.eval(expr.child, env))
        if isinstance(expr, AndOp):
            if not self._boolean(self.eval(expr.left, env)):
                return False
            return self._boolean(self.eval(expr.right, env))
        if isinstance(expr, OrOp):
            if self._boolean(self.eval(expr.left, env)):
                return True
            return self._boolean(self.eval(expr.right, env))
        if isinstance(expr, Implies):
            if not self._boolean(self.eval(expr.left, env)):
                return True  # vacuously true, consequent never evaluated
            return self._boolean(self.eval(expr.right, env))
        if isinstance(expr, Let):
            inner = dict(env)
            inner[expr.var] = self.eval(expr.value, env)
            return self.eval(expr.body, inner)
        raise TypeError(f"unknown expression node {expr!r}")

    @staticmethod
    def _boolean(value) -> bool:
        if not isinstance(value, bool):
            raise _EvalFault(f"expected a boolean, got {value!r}")
        return value

    @staticmethod
    def _compare(op: str, left, right) -> bool:
        numeric = (
            isinstance(left, (int, float)) and not isinstance(left, bool)
            and isinstance(right, (int, float)) and not isinstance(right, bool)
        )
        if op in ("<", "<=", ">", ">="):
            if not numeric:
                raise _EvalFault(f"'{op}' needs numeric operands")
            return {
                "<": left < right, "<=": left <= right,
                ">": left > right, ">=": left >= right,
            }[op]
        if isinstance(left, ModelObject) or isinstance(right, ModelObject):
            same = (
                isinstance(left, ModelObject) and isinstance(right, ModelObject)
                and left.id == right.id
            )
        elif numeric:
            same = float(left) == float(right)
        elif type(left) is type(right):
            same = left == right
        else:
            raise _EvalFault(f"cannot compare {left!r} with {right!r}")
        return same if op == "=" else not same


VERDICT_PASS = "pass"
VERDICT_FAIL = "fail"
VERDICT_NOT_APPLICABLE = "not-applicable"


@dataclass(frozen=True)
class ConstraintVerdict:
    constraint: str
    object_id: str
    verdict: str
    reason: str = ""


@dataclass(frozen=True)
class TopologyReport:
    rows: tuple[ConstraintVerdict, ...]

    @property
    def failing(self) -> tuple[ConstraintVerdict, ...]:
        return tuple(r for r in self.rows if r.verdict == VERDICT_FAIL)

    @property
    def overall(self) -> str:
        return VERDICT_FAIL if self.failing else VERDICT_PASS

    def to_dict(self) -> dict:
        return {
            "overall": self.overall,
            "rows": [
                {
                    "constraint": r.constraint,
                    "object": r.object_id,
                    "verdict": r.verdict,
                    **({"reason": r.reason} if r.reason else {}),
                }
                for r in self.rows
            ],
        }


def eval_constraints(model: InstanceModel, constraints: ConstraintSet,
                     metamodel: Metamodel) -> TopologyReport:
    """Evaluate every constraint against every object; nothing is skipped silently."""
    evaluator = _Evaluator(model, metamodel)
    rows: list[ConstraintVerdict] = []
    objects = sorted(model.objects.values(), key=lambda o: o.id)
    for constraint in constraints.constraints:
        for obj in objects:
            if not metamodel.is_subclass(obj.cls, constraint.context):
                rows.append(ConstraintVerdict(
                    constraint.name, obj.id, VERDICT_NOT_APPLICABLE,
                ))
                continue
            try:
                value = evaluator.eval(constraint.body, {"self": obj})
                if not isinstance(value, bool):
                    raise _EvalFault(f"constraint produced {value!r}, not a boolean")
            except _EvalFault as fault:
                rows.append(ConstraintVerdict(
                    constraint.name, obj.id, VERDICT_FAIL, reason=str(fault),
                ))
                continue
            if value:
                rows.append(ConstraintVerdict(constraint.name, obj.id, VERDICT_PASS))
            else:
                rows.append(ConstraintVerdict(constraint.name, obj.id, VERDICT_FAIL))
    return TopologyReport(rows=tuple(rows))


def render_topology_report(report: TopologyReport) -> str:
    """One line per (constraint, object): the pass/fail list used downstream."""
    lines = [f"overall: {report.overall}"]
    for row in report.rows:
        line = f"{row.constraint} {row.object_id} {row.verdict}"
        if row.reason:
            line += f" ({row.reason})"
        lines.append(line)
    return "\n".join(lines) + "\n"
