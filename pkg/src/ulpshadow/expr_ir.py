"""Mini numerical-program language: parser, printer and an evaluator with
pluggable backends (plain binary64, ULP-perturbed, double-double oracle).

Grammar (ASCII, whitespace-insensitive, ``#`` line comments)::

    program    := input_decl* stmt* expr
    input_decl := "input" IDENT ";"
    stmt       := "let" IDENT "=" expr ";"
    expr       := "if" cmp "then" expr "else" expr | sum
    cmp        := sum REL sum            REL in < > <= >= == !=
    sum        := prod (("+"|"-") prod)*
    prod       := unary (("*"|"/") unary)*
    unary      := "-" unary | atom
    atom       := NUMBER | IDENT | FUNC "(" expr ("," expr)? ")" | "(" expr ")"

NUMBER is a decimal or hex-float literal, converted by correctly-rounded
decimal-to-binary64 conversion (hex floats exist so fixtures can pin exact
bit patterns).  Programs are immutable after parse and freely shareable;
each evaluate() call owns its context, so concurrent evaluations of the
same Program are safe.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from typing import Mapping, Union

from . import hp_oracle as hp
from .perturb_engine import (
    ARITY,
    DEFAULT_POLICY,
    DEFAULT_STRATEGY,
    AtomicOp,
    EvalContext,
    NoPerturbation,
    PerturbationPolicy,
    PerturbationStrategy,
    TraceRecord,
    atomic_eval,
    perturbed_apply,
)
from .ulp_core import DomainError, divergence_ulp

__all__ = [
    "ParseError",
    "UnboundInputError",
    "Literal",
    "Var",
    "Unary",
    "Binary",
    "Call",
    "Let",
    "If",
    "Compare",
    "AstNode",
    "Program",
    "parse",
    "to_source",
    "Plain",
    "Perturbed",
    "Oracle",
    "EvalBackend",
    "EvalResult",
    "evaluate",
    "dela_error",
    "oracle_error",
]


class ParseError(ValueError):
    """Syntax or scope error, carrying 1-based line/column."""

    def __init__(self, message: str, line: int, column: int) -> None:
        super().__init__(f"{line}:{column}: {message}")
        self.line = line
        self.column = column


class UnboundInputError(ValueError):
    """An evaluation was missing a declared input binding."""


# --- AST ------------------------------------------------------------------

@dataclass(frozen=True)
class Literal:
    value: float


@dataclass(frozen=True)
class Var:
    name: str


@dataclass(frozen=True)
class Unary:
    op: AtomicOp
    child: "AstNode"


@dataclass(frozen=True)
class Binary:
    op: AtomicOp
    left: "AstNode"
    right: "AstNode"


@dataclass(frozen=True)
class Call:
    func: AtomicOp
    args: tuple["AstNode", ...]


@dataclass(frozen=True)
class Let:
    name: str
    bound: "AstNode"
    body: "AstNode"


@dataclass(frozen=True)
class Compare:
    lhs: "AstNode"
    relation: str  # one of < > <= >= == !=
    rhs: "AstNode"


@dataclass(frozen=True)
class If:
    comparison: Compare
    then_branch: "AstNode"
    else_branch: "AstNode"


AstNode = Union[Literal, Var, Unary, Binary, Call, Let, If]


@dataclass(frozen=True)
class Program:
    inputs: tuple[str, ...]
    body: AstNode
    source_text: str = field(compare=False)


_FUNCS = {
    "sin": AtomicOp.SIN,
    "cos": AtomicOp.COS,
    "tan": AtomicOp.TAN,
    "asin": AtomicOp.ASIN,
    "acos": AtomicOp.ACOS,
    "sinh": AtomicOp.SINH,
    "cosh": AtomicOp.COSH,
    "exp": AtomicOp.EXP,
    "log": AtomicOp.LOG,
    "log10": AtomicOp.LOG10,
    "pow": AtomicOp.POW,
    "sqrt": AtomicOp.SQRT,
    "fabs": AtomicOp.FABS,
}

_KEYWORDS = {"input", "let", "if", "then", "else"} | set(_FUNCS)

_BINOPS = {"+": AtomicOp.ADD, "-": AtomicOp.SUB, "*": AtomicOp.MUL, "/": AtomicOp.DIV}

_RELATIONS = ("<=", ">=", "==", "!=", "<", ">")


# --- tokenizer ------------------------------------------------------------

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>[ \t\r]+)
  | (?P<comment>\#[^\n]*)
  | (?P<newline>\n)
  | (?P<number>
        0[xX][0-9a-fA-F]+(\.[0-9a-fA-F]*)?([pP][+-]?[0-9]+)?
      | (\d+\.?\d*|\.\d+)([eE][+-]?\d+)?
    )
  | (?P<ident>[A-Za-z_][A-Za-z_0-9]*)
  | (?P<punct><=|>=|==|!=|[-+*/(),;=<>])
    """,
    re.VERBOSE,
)


@dataclass(frozen=True)
class _Token:
    kind: str  # number | ident | punct | end
    text: str
    line: int
    column: int


def _tokenize(text: str) -> list[_Token]:
    tokens: list[_Token] = []
    line, line_start = 1, 0
    pos = 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            raise ParseError(f"unexpected character {text[pos]!r}", line, pos - line_start + 1)
        kind = m.lastgroup
        if kind == "newline":
            line += 1
            line_start = m.end()
        elif kind not in ("ws", "comment"):
            tokens.append(_Token(kind, m.group(), line, m.start() - line_start + 1))
        pos = m.end()
    end_col = len(text) - line_start + 1
    tokens.append(_Token("end", "", line, end_col))
    return tokens


# --- parser ---------------------------------------------------------------

class _Parser:
    def __init__(self, text: str) -> None:
        self.text = text
        self.tokens = _tokenize(text)
        self.pos = 0

    @property
    def current(self) -> _Token:
        return self.tokens[self.pos]

    def _error(self, message: str) -> ParseError:
        tok = self.current
        where = "end of input" if tok.kind == "end" else repr(tok.text)
        return ParseError(f"{message} (at {where})", tok.line, tok.column)

    def _advance(self) -> _Token:
        tok = self.current
        self.pos += 1
        return tok

    def _accept(self, text: str) -> bool:
        if self.current.kind == "punct" and self.current.text == text:
            self.pos += 1
            return True
        return False

    def _accept_word(self, word: str) -> bool:
        if self.current.kind == "ident" and self.current.text == word:
            self.pos += 1
            return True
        return False

    def _expect(self, text: str) -> None:
        if not self._accept(text):
            raise self._error(f"expected {text!r}")

    def _expect_name(self, what: str) -> str:
        tok = self.current
        if tok.kind != "ident":
            raise self._error(f"expected {what}")
        if tok.text in _KEYWORDS:
            raise self._error(f"{tok.text!r} is reserved and cannot name {what}")
        self.pos += 1
        return tok.text

    def parse_program(self) -> Program:
        inputs: list[str] = []
        while self._accept_word("input"):
            name = self._expect_name("an input")
            if name in inputs:
                raise self._error(f"duplicate input {name!r}")
            inputs.append(name)
            self._expect(";")
        lets: list[tuple[str, AstNode]] = []
        bound_names = set(inputs)
        while self._accept_word("let"):
            name = self._expect_name("a let binding")
            if name in bound_names:
                raise self._error(f"{name!r} is already bound in this scope")
            self._expect("=")
            lets.append((name, self.parse_expr()))
            self._expect(";")
            bound_names.add(name)
        body = self.parse_expr()
        if self.current.kind != "end":
            raise self._error("trailing input after program body")
        for name, bound in reversed(lets):
            body = Let(name, bound, body)
        program = Program(tuple(inputs), body, self.text)
        _check_scopes(program)
        return program

    def parse_expr(self) -> AstNode:
        if self._accept_word("if"):
            lhs = self.parse_sum()
            tok = self.current
            if tok.kind != "punct" or tok.text not in _RELATIONS:
                raise self._error("expected a comparison operator")
            self.pos += 1
            rhs = self.parse_sum()
            if not self._accept_word("then"):
                raise self._error("expected 'then'")
            then_branch = self.parse_expr()
            if not self._accept_word("else"):
                raise self._error("expected 'else'")
            else_branch = self.parse_expr()
            return If(Compare(lhs, tok.text, rhs), then_branch, else_branch)
        return self.parse_sum()

    def parse_sum(self) -> AstNode:
        node = self.parse_prod()
        while self.current.kind == "punct" and self.current.text in ("+", "-"):
            op = _BINOPS[self._advance().text]
            node = Binary(op, node, self.parse_prod())
        return node

    def parse_prod(self) -> AstNode:
        node = self.parse_unary()
        while self.current.kind == "punct" and self.current.text in ("*", "/"):
            op = _BINOPS[self._advance().text]
            node = Binary(op, node, self.parse_unary())
        return node

    def parse_unary(self) -> AstNode:
        if self._accept("-"):
            return Unary(AtomicOp.NEG, self.parse_unary())
        return self.parse_atom()

    def parse_atom(self) -> AstNode:
        tok = self.current
        if tok.kind == "number":
            self.pos += 1
            text = tok.text
            value = float.fromhex(text) if text[:2].lower() == "0x" else float(text)
            return Literal(value)
        if tok.kind == "ident":
            if tok.text in _FUNCS:
                func = _FUNCS[tok.text]
                self.pos += 1
                self._expect("(")
                args = [self.parse_expr()]
                while self._accept(","):
                    args.append(self.parse_expr())
                self._expect(")")
                if len(args) != ARITY[func]:
                    raise self._error(
                        f"{tok.text} takes {ARITY[func]} argument(s), got {len(args)}"
                    )
                return Call(func, tuple(args))
            if tok.text in _KEYWORDS:
                raise self._error(f"unexpected keyword {tok.text!r}")
            self.pos += 1
            return Var(tok.text)
        if self._accept("("):
            node = self.parse_expr()
            self._expect(")")
            return node
        raise self._error("expected a number, name, function call or '('")


def _check_scopes(program: Program) -> None:
    """No free variables may survive to evaluation time."""

    def walk(node: AstNode, bound: frozenset[str]) -> None:
        if isinstance(node, Var):
            if node.name not in bound:
                raise ParseError(f"undefined identifier {node.name!r}", 1, 1)
        elif isinstance(node, Unary):
            walk(node.child, bound)
        elif isinstance(node, Binary):
            walk(node.left, bound)
            walk(node.right, bound)
        elif isinstance(node, Call):
            for a in node.args:
                walk(a, bound)
        elif isinstance(node, Let):
            walk(node.bound, bound)
            walk(node.body, bound | {node.name})
        elif isinstance(node, If):
            walk(node.comparison.lhs, bound)
            walk(node.comparison.rhs, bound)
            walk(node.then_branch, bound)
            walk(node.else_branch, bound)

    walk(program.body, frozenset(program.inputs))


def parse(text: str) -> Program:
    """Parse a program; raises ParseError with line/column on bad input."""
    return _Parser(text).parse_program()


# --- printer ---------------------------------------------------------------

_FUNC_NAMES = {v: k for k, v in _FUNCS.items()}
_BINOP_TEXT = {v: k for k, v in _BINOPS.items()}


def _print_node(node: AstNode, parent_level: int) -> str:
    # Precedence levels: 0 if/compare, 1 sum, 2 prod, 3 unary/atom.
    if isinstance(node, Literal):
        return repr(node.value)
    if isinstance(node, Var):
        return node.name
    if isinstance(node, Unary):
        text = "-" + _print_node(node.child, 3)
        return f"({text})" if parent_level > 3 else text
    if isinstance(node, Binary):
        level = 1 if node.op in (AtomicOp.ADD, AtomicOp.SUB) else 2
        text = (
            f"{_print_node(node.left, level)} {_BINOP_TEXT[node.op]} "
            f"{_print_node(node.right, level + 1)}"
        )
        return f"({text})" if parent_level > level else text
    if isinstance(node, Call):
        args = ", ".join(_print_node(a, 0) for a in node.args)
        return f"{_FUNC_NAMES[node.func]}({args})"
    if isinstance(node, If):
        c = node.comparison
        text = (
            f"if {_print_node(c.lhs, 1)} {c.relation} {_print_node(c.rhs, 1)} "
            f"then {_print_node(node.then_branch, 0)} "
            f"else {_print_node(node.else_branch, 0)}"
        )
        return f"({text})" if parent_level > 0 else text
    raise TypeError(f"cannot print {node!r}")


def to_source(program: Program) -> str:
    """Source text that reparses to a structurally identical Program."""
    lines = [f"input {name};" for name in program.inputs]
    body = program.body
    while isinstance(body, Let):
        lines.append(f"let {body.name} = {_print_node(body.bound, 0)};")
        body = body.body
    lines.append(_print_node(body, 0))
    return "\n".join(lines) + "\n"


# --- backends ---------------------------------------------------------------

@dataclass(frozen=True)
class Plain:
    """Ordinary binary64 round-to-nearest-even semantics."""


@dataclass(frozen=True)
class Perturbed:
    """Plain semantics plus a ULP-scale offset at every enabled site."""

    strategy: PerturbationStrategy = DEFAULT_STRATEGY
    policy: PerturbationPolicy = DEFAULT_POLICY


@dataclass(frozen=True)
class Oracle:
    """Double-double semantics; reports the full-precision value plus its
    binary64 rounding."""


EvalBackend = Union[Plain, Perturbed, Oracle]


@dataclass
class EvalResult:
    result: float
    oracle_result: "hp.DoubleDouble | None" = None
    bindings: dict[str, float] = field(default_factory=dict)
    trace: list[TraceRecord] | None = None
    branches: list[bool] = field(default_factory=list)
    site_count: int = 0


_RELATION_FUNCS = {
    "<": lambda a, b: a < b,
    ">": lambda a, b: a > b,
    "<=": lambda a, b: a <= b,
    ">=": lambda a, b: a >= b,
    "==": lambda a, b: a == b,
    "!=": lambda a, b: a != b,
}

# Double-double counterparts of the atomic operations, with the math-domain
# failures mapped to the same IEEE results the plain backend produces.
_DD_FUNCS = {
    AtomicOp.ADD: hp.dd_add,
    AtomicOp.SUB: hp.dd_sub,
    AtomicOp.MUL: hp.dd_mul,
    AtomicOp.NEG: hp.dd_neg,
    AtomicOp.FABS: hp.dd_abs,
    AtomicOp.SIN: hp.dd_sin,
    AtomicOp.COS: hp.dd_cos,
    AtomicOp.TAN: hp.dd_tan,
    AtomicOp.ASIN: hp.dd_asin,
    AtomicOp.ACOS: hp.dd_acos,
    AtomicOp.SINH: hp.dd_sinh,
    AtomicOp.COSH: hp.dd_cosh,
    AtomicOp.EXP: hp.dd_exp,
    AtomicOp.LOG: hp.dd_log,
    AtomicOp.LOG10: hp.dd_log10,
    AtomicOp.SQRT: hp.dd_sqrt,
    AtomicOp.POW: hp.dd_pow,
}


def _dd_apply(op: AtomicOp, args: list[hp.DoubleDouble]) -> hp.DoubleDouble:
    if op is AtomicOp.DIV:
        try:
            return hp.dd_div(args[0], args[1])
        except DomainError:  # division by exact dd zero: mirror IEEE
            return hp.dd(atomic_eval(op, [args[0].hi, args[1].hi]))
    try:
        return _DD_FUNCS[op](*args)
    except DomainError:
        return hp.dd(atomic_eval(op, [a.hi for a in args]))


def evaluate(
    program: Program,
    inputs: Mapping[str, float],
    backend: EvalBackend,
    record_trace: bool = False,
) -> EvalResult:
    """Run the program under the backend's semantics.

    Every declared input must be bound to a finite binary64 value.  Under
    Perturbed, inputs are perturbed once at binding time in declaration
    order, then every executed atomic operation is a site in execution
    order; `if` comparisons see the current (perturbed) values, so a
    perturbation can flip a branch.  Branch outcomes are recorded for every
    backend.
    """
    for name in program.inputs:
        if name not in inputs:
            raise UnboundInputError(f"input {name!r} is not bound")
        if not math.isfinite(inputs[name]):
            raise DomainError(f"input {name!r} must be finite, got {inputs[name]!r}")

    result = EvalResult(result=math.nan)
    oracle = isinstance(backend, Oracle)

    if isinstance(backend, Perturbed):
        ctx = EvalContext(backend.strategy, backend.policy, record_trace=record_trace)
    else:
        # Plain/Oracle share the branch recorder; no perturbation sites.
        ctx = EvalContext(NoPerturbation(), PerturbationPolicy(False, False, False, 0))

    def as_value(x: float):
        return hp.dd(x) if oracle else x

    def bind_input(x: float):
        if isinstance(backend, Perturbed):
            return ctx.perturb_input(x)
        return as_value(x)

    def eval_node(node: AstNode, env: dict):
        if isinstance(node, Literal):
            if isinstance(backend, Perturbed):
                return ctx.perturb_constant(node.value)
            return as_value(node.value)
        if isinstance(node, Var):
            return env[node.name]
        if isinstance(node, Unary):
            return apply_op(node.op, [eval_node(node.child, env)])
        if isinstance(node, Binary):
            left = eval_node(node.left, env)
            right = eval_node(node.right, env)
            return apply_op(node.op, [left, right])
        if isinstance(node, Call):
            return apply_op(node.func, [eval_node(a, env) for a in node.args])
        if isinstance(node, Let):
            value = eval_node(node.bound, env)
            result.bindings[node.name] = float(value)
            inner = dict(env)
            inner[node.name] = value
            return eval_node(node.body, inner)
        if isinstance(node, If):
            lhs = eval_node(node.comparison.lhs, env)
            rhs = eval_node(node.comparison.rhs, env)
            taken = bool(_RELATION_FUNCS[node.comparison.relation](lhs, rhs))
            ctx.record_branch(taken)
            return eval_node(node.then_branch if taken else node.else_branch, env)
        raise TypeError(f"cannot evaluate {node!r}")

    def apply_op(op: AtomicOp, args: list):
        if oracle:
            return _dd_apply(op, args)
        if isinstance(backend, Perturbed):
            return perturbed_apply(op, args, ctx)
        return atomic_eval(op, args)

    env = {name: bind_input(inputs[name]) for name in program.inputs}
    value = eval_node(program.body, env)

    if oracle:
        result.oracle_result = value
        result.result = value.to_float()
    else:
        result.result = value
    result.trace = ctx.trace
    result.branches = ctx.branches
    result.site_count = ctx.site_index
    return result


def dela_error(
    program: Program,
    inputs: Mapping[str, float],
    strategy: PerturbationStrategy = DEFAULT_STRATEGY,
    policy: PerturbationPolicy = DEFAULT_POLICY,
) -> float:
    """ULP divergence between the plain run and the perturbed run.

    Non-finite results with equal classification on both sides count as
    agreement (0.0); a finite/non-finite mismatch is the maximal-error
    sentinel.
    """
    plain = evaluate(program, inputs, Plain())
    perturbed = evaluate(program, inputs, Perturbed(strategy, policy))
    return divergence_ulp(plain.result, perturbed.result)


def oracle_error(program: Program, inputs: Mapping[str, float]) -> float:
    """ULP divergence of the plain run from the binary64 rounding of the
    double-double run; the rounded oracle value is the reference."""
    plain = evaluate(program, inputs, Plain())
    oracle = evaluate(program, inputs, Oracle())
    return divergence_ulp(oracle.result, plain.result)
