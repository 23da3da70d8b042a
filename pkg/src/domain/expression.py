"""
Formula language used by scenario files for alpha(theta), gamma(x), xi(theta),
g(theta) and h(theta).

Grammar (lowest to highest precedence):

    expr   := term (('+' | '-') term)*
    term   := unary (('*' | '/') unary)*
    unary  := '-' unary | power
    power  := atom ('^' unary)?          # right associative, binds tighter than unary minus
    atom   := NUMBER | NAME | FUNC '(' expr ')' | '(' expr ')'

so ``-2^2 == -4`` and ``2^3^2 == 512``. One free variable (``x`` or ``theta``),
named parameters bound through a mapping, and the functions ln, exp and sqrt.
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Mapping, Optional, Union

import numpy as np

from src.utils.constants import CLAIM_VARIABLE, FUNCTIONS, MIXING_VARIABLE
from src.utils.display_utils import format_number
from src.utils.exceptions import (
    DomainError,
    ExpressionSyntaxError,
    UnboundParameterError,
    UnknownIdentifierError,
)

VARIABLES = (CLAIM_VARIABLE, MIXING_VARIABLE)


# --- Syntax tree ---
@dataclass(frozen=True, slots=True)
class Num:
    value: float


@dataclass(frozen=True, slots=True)
class Var:
    name: str


@dataclass(frozen=True, slots=True)
class Param:
    name: str


@dataclass(frozen=True, slots=True)
class Neg:
    operand: "Node"


@dataclass(frozen=True, slots=True)
class BinOp:
    op: str
    left: "Node"
    right: "Node"


@dataclass(frozen=True, slots=True)
class Call:
    func: str
    arg: "Node"


Node = Union[Num, Var, Param, Neg, BinOp, Call]


# --- Tokenizer ---
_TOKEN_RE = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)|(?P<name>[A-Za-z_][A-Za-z_0-9]*)|(?P<op>[-+*/^()]))"
)


@dataclass(frozen=True, slots=True)
class _Token:
    kind: str   # "num", "name", "op" or "end"
    text: str
    offset: int


def _byte_offset(src: str, index: int) -> int:
    return len(src[:index].encode("utf-8"))


def _tokenize(src: str) -> list[_Token]:
    tokens = []
    pos = 0
    while True:
        while pos < len(src) and src[pos].isspace():
            pos += 1
        if pos >= len(src):
            tokens.append(_Token("end", "", _byte_offset(src, pos)))
            return tokens
        match = _TOKEN_RE.match(src, pos)
        if not match or match.end() == pos:
            raise ExpressionSyntaxError(_byte_offset(src, pos), f"unexpected character {src[pos]!r}")
        kind = match.lastgroup
        tokens.append(_Token(kind, match.group(kind), _byte_offset(src, match.start(kind))))
        pos = match.end()


# --- Parser ---
class _Parser:
    def __init__(self, src: str, variable: Optional[str], params: Mapping[str, Optional[float]]):
        self.tokens = _tokenize(src)
        self.index = 0
        self.variable = variable
        self.params = params

    @property
    def current(self) -> _Token:
        return self.tokens[self.index]

    def _advance(self) -> _Token:
        token = self.tokens[self.index]
        self.index += 1
        return token

    def _expect(self, text: str):
        token = self.current
        if token.kind != "op" or token.text != text:
            found = "end of input" if token.kind == "end" else repr(token.text)
            raise ExpressionSyntaxError(token.offset, f"expected {text!r}, found {found}")
        self._advance()

    def parse(self) -> Node:
        node = self._expr()
        if self.current.kind != "end":
            raise ExpressionSyntaxError(self.current.offset, f"unexpected {self.current.text!r}")
        return node

    def _expr(self) -> Node:
        node = self._term()
        while self.current.kind == "op" and self.current.text in "+-":
            op = self._advance().text
            node = BinOp(op, node, self._term())
        return node

    def _term(self) -> Node:
        node = self._unary()
        while self.current.kind == "op" and self.current.text in "*/":
            op = self._advance().text
            node = BinOp(op, node, self._unary())
        return node

    def _unary(self) -> Node:
        if self.current.kind == "op" and self.current.text == "-":
            self._advance()
            return Neg(self._unary())
        return self._power()

    def _power(self) -> Node:
        base = self._atom()
        if self.current.kind == "op" and self.current.text == "^":
            self._advance()
            return BinOp("^", base, self._unary())
        return base

    def _atom(self) -> Node:
        token = self.current
        if token.kind == "num":
            self._advance()
            return Num(float(token.text))
        if token.kind == "name":
            self._advance()
            return self._name(token)
        if token.kind == "op" and token.text == "(":
            self._advance()
            node = self._expr()
            self._expect(")")
            return node
        if token.kind == "end":
            raise ExpressionSyntaxError(token.offset, "unexpected end of input")
        raise ExpressionSyntaxError(token.offset, f"unexpected {token.text!r}")

    def _name(self, token: _Token) -> Node:
        name = token.text
        if name in FUNCTIONS:
            self._expect("(")
            arg = self._expr()
            self._expect(")")
            return Call(name, arg)
        if name in VARIABLES:
            if self.variable is None:
                self.variable = name
            if name != self.variable:
                raise UnknownIdentifierError(name, token.offset)
            return Var(name)
        if name in self.params:
            return Param(name)
        raise UnknownIdentifierError(name, token.offset)


# --- Printer ---
def _precedence(node: Node) -> int:
    if isinstance(node, BinOp):
        return {"+": 1, "-": 1, "*": 2, "/": 2, "^": 4}[node.op]
    if isinstance(node, Neg):
        return 3
    if isinstance(node, Num) and node.value < 0:
        return 3
    return 5


def _wrapped(node: Node, parens: bool) -> str:
    text = to_source(node)
    return f"({text})" if parens else text


def to_source(node: Node) -> str:
    """Prints a tree with the fewest parentheses that reparse to the same tree."""
    if isinstance(node, Num):
        return format_number(node.value)
    if isinstance(node, (Var, Param)):
        return node.name
    if isinstance(node, Call):
        return f"{node.func}({to_source(node.arg)})"
    if isinstance(node, Neg):
        return "-" + _wrapped(node.operand, _precedence(node.operand) < 3)
    level = _precedence(node)
    if node.op == "^":
        left = _wrapped(node.left, _precedence(node.left) <= 4)
        right = _wrapped(node.right, _precedence(node.right) < 3)
        return f"{left}^{right}"
    left = _wrapped(node.left, _precedence(node.left) < level)
    right = _wrapped(node.right, _precedence(node.right) <= level)
    if level == 1:
        return f"{left} {node.op} {right}"
    return f"{left}{node.op}{right}"


# --- Evaluation ---
def _evaluate(node: Node, point, env: Mapping[str, Optional[float]]):
    if isinstance(node, Num):
        return node.value
    if isinstance(node, Var):
        return point
    if isinstance(node, Param):
        value = env.get(node.name)
        if value is None:
            raise UnboundParameterError(node.name)
        return value
    if isinstance(node, Neg):
        return -_evaluate(node.operand, point, env)
    if isinstance(node, Call):
        arg = _evaluate(node.arg, point, env)
        if node.func == "ln":
            if np.any(np.asarray(arg) <= 0):
                raise DomainError("ln of a nonpositive number.")
            return np.log(arg)
        if node.func == "sqrt":
            if np.any(np.asarray(arg) < 0):
                raise DomainError("sqrt of a negative number.")
            return np.sqrt(arg)
        with np.errstate(over="ignore"):
            result = np.exp(arg)
        if np.any(np.isinf(result) & np.isfinite(arg)):
            raise DomainError("exp overflows the double range.")
        return result
    left = _evaluate(node.left, point, env)
    right = _evaluate(node.right, point, env)
    if node.op == "+":
        return np.add(left, right)
    if node.op == "-":
        return np.subtract(left, right)
    if node.op == "*":
        return np.multiply(left, right)
    if node.op == "/":
        if np.any(np.asarray(right) == 0):
            raise DomainError("Division by zero.")
        return np.divide(left, right)
    base, power = np.asarray(left, dtype=float), np.asarray(right, dtype=float)
    if np.any((base == 0) & (power < 0)):
        raise DomainError("Zero raised to a negative power.")
    result = np.power(base, power)
    if np.any(np.isnan(result) & ~np.isnan(base) & ~np.isnan(power)):
        raise DomainError("Negative number raised to a fractional power.")
    return result


@dataclass(frozen=True)
class RealFn:
    """A parsed single-variable formula together with its parameter bindings."""

    tree: Node
    variable: Optional[str] = None
    params: tuple[tuple[str, Optional[float]], ...] = ()

    @property
    def bindings(self) -> dict[str, Optional[float]]:
        return dict(self.params)

    def evaluate(self, point):
        """IEEE double evaluation at a scalar or elementwise over an array."""
        with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
            value = _evaluate(self.tree, np.asarray(point, dtype=float), self.bindings)
        if np.ndim(point) == 0:
            return float(value)
        return np.broadcast_to(np.asarray(value, dtype=float), np.shape(point)).copy()

    __call__ = evaluate

    def bind(self, **values: float) -> "RealFn":
        merged = self.bindings
        for name, value in values.items():
            if name in merged:
                merged[name] = float(value)
        return RealFn(self.tree, self.variable, tuple(sorted(merged.items())))

    def with_variable(self, variable: str) -> "RealFn":
        return RealFn(self.tree, variable, self.params)

    def is_constant(self) -> bool:
        return not _mentions_variable(self.tree)

    def to_source(self) -> str:
        return to_source(self.tree)

    def __str__(self) -> str:
        return self.to_source()


def parse(src: str, variable: Optional[str] = None, params: Optional[Mapping[str, Optional[float]]] = None) -> RealFn:
    """
    Parses formula text. The free variable is checked against ``variable`` when given,
    otherwise inferred from the first of ``x``/``theta`` that appears. Any other name
    must be a key of ``params`` (values may be None and bound later).
    """
    params = dict(params or {})
    parser = _Parser(src, variable, params)
    tree = parser.parse()
    used = sorted(_parameter_names(tree))
    return RealFn(tree, parser.variable, tuple((name, params[name]) for name in used))


def _parameter_names(node: Node) -> set[str]:
    if isinstance(node, Param):
        return {node.name}
    if isinstance(node, (Neg, Call)):
        return _parameter_names(node.operand if isinstance(node, Neg) else node.arg)
    if isinstance(node, BinOp):
        return _parameter_names(node.left) | _parameter_names(node.right)
    return set()


def _mentions_variable(node: Node) -> bool:
    if isinstance(node, Var):
        return True
    if isinstance(node, Neg):
        return _mentions_variable(node.operand)
    if isinstance(node, Call):
        return _mentions_variable(node.arg)
    if isinstance(node, BinOp):
        return _mentions_variable(node.left) or _mentions_variable(node.right)
    return False


def evaluate_constant(src: str, params: Optional[Mapping[str, float]] = None) -> float:
    """Evaluates variable-free text such as a distribution argument ``c+1``."""
    fn = parse(src, params=params)
    if not fn.is_constant():
        raise UnknownIdentifierError(fn.variable, 0)
    return fn.evaluate(0.0)


# --- Log-linear forms ---
@dataclass(frozen=True, slots=True)
class LogLinearForm:
    """ln(weight) = const + k*ln(v) + s*v for the formula's variable v."""

    k: float
    s: float
    const: float

    def __add__(self, other: "LogLinearForm") -> "LogLinearForm":
        return LogLinearForm(self.k + other.k, self.s + other.s, self.const + other.const)

    def scaled(self, factor: float) -> "LogLinearForm":
        return LogLinearForm(self.k * factor, self.s * factor, self.const * factor)


def _constant(node: Node, env) -> Optional[float]:
    if _mentions_variable(node):
        return None
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        return float(_evaluate(node, 0.0, env))


def _weight_form(node: Node, env) -> Optional[LogLinearForm]:
    value = _constant(node, env)
    if value is not None:
        return LogLinearForm(0.0, 0.0, math.log(value)) if value > 0 else None
    if isinstance(node, Var):
        return LogLinearForm(1.0, 0.0, 0.0)
    if isinstance(node, Call):
        if node.func == "exp":
            return _log_form(node.arg, env)
        inner = _weight_form(node.arg, env)
        return inner.scaled(0.5) if inner is not None and node.func == "sqrt" else None
    if isinstance(node, BinOp) and node.op in "*/^":
        left = _weight_form(node.left, env)
        if left is None:
            return None
        if node.op == "^":
            power = _constant(node.right, env)
            return left.scaled(power) if power is not None else None
        right = _weight_form(node.right, env)
        if right is None:
            return None
        return left + right if node.op == "*" else left + right.scaled(-1.0)
    return None


def _log_form(node: Node, env) -> Optional[LogLinearForm]:
    value = _constant(node, env)
    if value is not None:
        return LogLinearForm(0.0, 0.0, value)
    if isinstance(node, Var):
        return LogLinearForm(0.0, 1.0, 0.0)
    if isinstance(node, Neg):
        inner = _log_form(node.operand, env)
        return inner.scaled(-1.0) if inner is not None else None
    if isinstance(node, Call):
        return _weight_form(node.arg, env) if node.func == "ln" else None
    if isinstance(node, BinOp):
        if node.op in "+-":
            left, right = _log_form(node.left, env), _log_form(node.right, env)
            if left is None or right is None:
                return None
            return left + right if node.op == "+" else left + right.scaled(-1.0)
        if node.op == "*":
            factor, other = _constant(node.left, env), node.right
            if factor is None:
                factor, other = _constant(node.right, env), node.left
            inner = _log_form(other, env) if factor is not None else None
            return inner.scaled(factor) if inner is not None else None
        if node.op == "/":
            divisor = _constant(node.right, env)
            inner = _log_form(node.left, env) if divisor else None
            return inner.scaled(1.0 / divisor) if inner is not None else None
    return None


def log_linear_form(fn: RealFn, *, log_scale: bool) -> Optional[LogLinearForm]:
    """
    Recognizes ln(weight) = const + k ln v + s v. With ``log_scale`` the formula is
    itself ln(weight) (gamma, alpha); otherwise it is the weight (xi). Returns None
    when the formula has another shape.
    """
    try:
        if log_scale:
            return _log_form(fn.tree, fn.bindings)
        return _weight_form(fn.tree, fn.bindings)
    except (UnboundParameterError, DomainError, ValueError):
        return None


# --- Builders ---
def monomial(coef: float, power: float, rate: float, variable: str) -> RealFn:
    """coef * v^power * exp(rate*v), printed without redundant factors."""
    var = Var(variable)
    factors: list[Node] = []
    if coef != 1.0 or (power == 0 and rate == 0):
        factors.append(Num(coef))
    if power == 1:
        factors.append(var)
    elif power != 0:
        exponent = Num(power) if power > 0 else Neg(Num(-power))
        factors.append(BinOp("^", var, exponent))
    if rate == 1:
        factors.append(Call("exp", var))
    elif rate == -1:
        factors.append(Call("exp", Neg(var)))
    elif rate != 0:
        magnitude = Num(rate) if rate > 0 else Neg(Num(-rate))
        factors.append(Call("exp", BinOp("*", magnitude, var)))
    tree = factors[0]
    for factor in factors[1:]:
        tree = BinOp("*", tree, factor)
    return RealFn(tree, variable)


def scale(fn: RealFn, factor: float) -> RealFn:
    """factor * fn, folding into a leading numeric coefficient when there is one."""
    if factor == 1.0:
        return fn
    tree = fn.tree
    if isinstance(tree, Num):
        return RealFn(Num(tree.value * factor), fn.variable, fn.params)
    if isinstance(tree, BinOp) and tree.op == "*" and isinstance(tree.left, Num):
        return RealFn(BinOp("*", Num(tree.left.value * factor), tree.right), fn.variable, fn.params)
    return RealFn(BinOp("*", Num(factor), tree), fn.variable, fn.params)


def multiply_exp(rate_fn: RealFn, exponent: RealFn) -> RealFn:
    """rate_fn * exp(exponent) as one formula, keeping the parameters of both."""
    params = dict(rate_fn.params)
    params.update(exponent.params)
    tree = BinOp("*", rate_fn.tree, Call("exp", exponent.tree))
    return RealFn(tree, rate_fn.variable or exponent.variable, tuple(sorted(params.items())))


def exp_of(fn: RealFn) -> RealFn:
    """exp(fn), the density multiplier for a log-scale formula such as gamma."""
    return RealFn(Call("exp", fn.tree), fn.variable, fn.params)
