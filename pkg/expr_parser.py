"""
Parser and evaluator for the parameter-field expressions of a lattice spec.

Grammar (lowest to highest precedence)::

    expr    := term (('+' | '-') term)*
    term    := unary (('*' | '/') unary)*
    unary   := '-' unary | power
    power   := primary ('^' unary)?
    primary := number | name | name '(' expr (',' expr)* ')' | '(' expr ')'

`^` is right-associative and binds tighter than unary minus, so `-x^2` is
`-(x^2)` and `2^-1` is `2^(-1)`.
"""

import logging
import math
import re
from dataclasses import dataclass, field
from typing import Callable, Dict, FrozenSet, List, Mapping, Optional, Tuple, Union

import numpy as np

from errors import DomainError, ExpressionError, UnboundVariableError

logger = logging.getLogger(__name__)

Value = Union[float, np.ndarray]

CONSTANTS: Dict[str, float] = {"pi": math.pi, "e": math.e}

# name -> (minimum arity, maximum arity or None for variadic)
FUNCTIONS: Dict[str, Tuple[int, Optional[int]]] = {
    "sin": (1, 1),
    "cos": (1, 1),
    "tan": (1, 1),
    "sqrt": (1, 1),
    "exp": (1, 1),
    "ln": (1, 1),
    "abs": (1, 1),
    "min": (2, None),
    "max": (2, None),
}

_SCALAR_FUNCTIONS: Dict[str, Callable[..., float]] = {
    "sin": math.sin,
    "cos": math.cos,
    "tan": math.tan,
    "sqrt": math.sqrt,
    "exp": math.exp,
    "ln": math.log,
    "abs": abs,
    "min": min,
    "max": max,
}

_TOKEN_RE = re.compile(
    r"""
    (?P<space>\s+)
  | (?P<number>(?:\d+\.\d*|\.\d+|\d+)(?:[eE][+-]?\d+)?)
  | (?P<name>[A-Za-z_][A-Za-z_0-9]*)
  | (?P<op>[-+*/^(),])
    """,
    re.VERBOSE,
)


# --- tree nodes -----------------------------------------------------------

@dataclass(frozen=True)
class Number:
    value: float
    offset: int = field(default=0, compare=False)


@dataclass(frozen=True)
class Variable:
    name: str
    offset: int = field(default=0, compare=False)


@dataclass(frozen=True)
class Constant:
    name: str
    offset: int = field(default=0, compare=False)


@dataclass(frozen=True)
class Neg:
    operand: "Node"
    offset: int = field(default=0, compare=False)


@dataclass(frozen=True)
class BinaryOp:
    op: str
    left: "Node"
    right: "Node"
    offset: int = field(default=0, compare=False)


@dataclass(frozen=True)
class Call:
    function: str
    args: Tuple["Node", ...]
    offset: int = field(default=0, compare=False)


Node = Union[Number, Variable, Constant, Neg, BinaryOp, Call]


@dataclass(frozen=True)
class Token:
    kind: str  # number, name, op, end
    text: str
    offset: int


@dataclass(frozen=True)
class ExprAst:
    """Immutable parsed expression; safe to evaluate from many threads at once"""

    root: Node
    source: str = field(default="", compare=False)

    def evaluate(self, bindings: Mapping[str, float]) -> float:
        return evaluate(self, bindings)

    def evaluate_array(self, bindings: Mapping[str, Value]) -> np.ndarray:
        return evaluate_array(self, bindings)

    def free_variables(self) -> FrozenSet[str]:
        return free_variables(self)

    def to_source(self) -> str:
        return to_source(self)

    def is_constant(self) -> bool:
        return not free_variables(self)


# --- tokenizer / parser ---------------------------------------------------

def _byte_offset(text: str, index: int) -> int:
    return len(text[:index].encode("utf-8"))


def tokenize(source: str) -> List[Token]:
    tokens: List[Token] = []
    index = 0
    while index < len(source):
        match = _TOKEN_RE.match(source, index)
        if match is None:
            raise ExpressionError(
                f"unexpected character {source[index]!r}", offset=_byte_offset(source, index), source=source
            )
        kind = match.lastgroup or ""
        if kind != "space":
            tokens.append(Token(kind, match.group(), _byte_offset(source, index)))
        index = match.end()
    tokens.append(Token("end", "", _byte_offset(source, len(source))))
    return tokens


class ExpressionParser:
    """Recursive-descent parser producing an ExprAst"""

    def __init__(self, source: str):
        self.source = source
        self.tokens = tokenize(source)
        self.position = 0

    def parse(self) -> ExprAst:
        root = self._expression()
        token = self._peek()
        if token.kind != "end":
            raise self._error(f"unexpected {token.text!r}", token)
        return ExprAst(root=root, source=self.source)

    def _peek(self) -> Token:
        return self.tokens[self.position]

    def _advance(self) -> Token:
        token = self.tokens[self.position]
        self.position += 1
        return token

    def _accept(self, *ops: str) -> Optional[Token]:
        token = self._peek()
        if token.kind == "op" and token.text in ops:
            return self._advance()
        return None

    def _expect(self, op: str) -> Token:
        token = self._accept(op)
        if token is None:
            found = self._peek()
            what = "end of expression" if found.kind == "end" else repr(found.text)
            raise self._error(f"expected {op!r} but found {what}", found)
        return token

    def _error(self, message: str, token: Token) -> ExpressionError:
        return ExpressionError(message, offset=token.offset, source=self.source)

    def _expression(self) -> Node:
        node = self._term()
        while True:
            token = self._accept("+", "-")
            if token is None:
                return node
            node = BinaryOp(token.text, node, self._term(), offset=token.offset)

    def _term(self) -> Node:
        node = self._unary()
        while True:
            token = self._accept("*", "/")
            if token is None:
                return node
            node = BinaryOp(token.text, node, self._unary(), offset=token.offset)

    def _unary(self) -> Node:
        token = self._accept("-")
        if token is not None:
            return Neg(self._unary(), offset=token.offset)
        return self._power()

    def _power(self) -> Node:
        base = self._primary()
        token = self._accept("^")
        if token is None:
            return base
        return BinaryOp("^", base, self._unary(), offset=token.offset)

    def _primary(self) -> Node:
        token = self._advance()
        if token.kind == "number":
            value = float(token.text)
            if not math.isfinite(value):
                raise self._error(f"number {token.text} is out of range", token)
            return Number(value, offset=token.offset)
        if token.kind == "name":
            return self._name(token)
        if token.kind == "op" and token.text == "(":
            node = self._expression()
            self._expect(")")
            return node
        if token.kind == "end":
            raise self._error("unexpected end of expression", token)
        raise self._error(f"unexpected {token.text!r}", token)

    def _name(self, token: Token) -> Node:
        name = token.text
        if self._accept("(") is not None:
            if name not in FUNCTIONS:
                raise self._error(f"unknown function '{name}'", token)
            args = [self._expression()]
            while self._accept(",") is not None:
                args.append(self._expression())
            self._expect(")")
            low, high = FUNCTIONS[name]
            if len(args) < low or (high is not None and len(args) > high):
                expected = str(low) if high == low else f"at least {low}"
                raise self._error(f"'{name}' takes {expected} argument(s), got {len(args)}", token)
            return Call(name, tuple(args), offset=token.offset)
        if name in FUNCTIONS:
            raise self._error(f"function '{name}' needs an argument list", token)
        if name in CONSTANTS:
            return Constant(name, offset=token.offset)
        return Variable(name, offset=token.offset)


def parse(source: str) -> ExprAst:
    """Parse an expression string, raising ExpressionError with a byte offset"""
    if not isinstance(source, str):
        raise ExpressionError(f"expression must be text, got {type(source).__name__}")
    return ExpressionParser(source).parse()


# --- queries --------------------------------------------------------------

def _children(node: Node) -> Tuple[Node, ...]:
    if isinstance(node, Neg):
        return (node.operand,)
    if isinstance(node, BinaryOp):
        return (node.left, node.right)
    if isinstance(node, Call):
        return node.args
    return ()


def free_variables(ast: ExprAst) -> FrozenSet[str]:
    names = set()
    stack: List[Node] = [ast.root]
    while stack:
        node = stack.pop()
        if isinstance(node, Variable):
            names.add(node.name)
        stack.extend(_children(node))
    return frozenset(names)


def _render(node: Node) -> str:
    if isinstance(node, Number):
        return repr(node.value)
    if isinstance(node, (Variable, Constant)):
        return node.name
    if isinstance(node, Neg):
        return f"(-{_render(node.operand)})"
    if isinstance(node, BinaryOp):
        return f"({_render(node.left)} {node.op} {_render(node.right)})"
    return f"{node.function}({', '.join(_render(arg) for arg in node.args)})"


def to_source(ast: ExprAst) -> str:
    """Fully parenthesized text that parses back to an equivalent tree"""
    return _render(ast.root)


# --- scalar evaluation ----------------------------------------------------

def _domain_error(message: str, node: Node, source: str) -> DomainError:
    return DomainError(message, offset=node.offset, source=source or None)


def _eval_scalar(node: Node, bindings: Mapping[str, float], source: str) -> float:
    if isinstance(node, Number):
        return node.value
    if isinstance(node, Constant):
        return CONSTANTS[node.name]
    if isinstance(node, Variable):
        if node.name not in bindings:
            raise UnboundVariableError(node.name, offset=node.offset, source=source or None)
        return float(bindings[node.name])
    if isinstance(node, Neg):
        return -_eval_scalar(node.operand, bindings, source)
    if isinstance(node, BinaryOp):
        left = _eval_scalar(node.left, bindings, source)
        right = _eval_scalar(node.right, bindings, source)
        return _apply_binary(node, left, right, source)
    args = [_eval_scalar(arg, bindings, source) for arg in node.args]
    return _apply_call(node, args, source)


def _apply_binary(node: BinaryOp, left: float, right: float, source: str) -> float:
    op = node.op
    if op == "+":
        result = left + right
    elif op == "-":
        result = left - right
    elif op == "*":
        result = left * right
    elif op == "/":
        if right == 0.0:
            raise _domain_error(f"division by zero ({left!r} / 0)", node, source)
        result = left / right
    else:
        if left == 0.0 and right < 0.0:
            raise _domain_error(f"zero raised to negative power {right!r}", node, source)
        if left < 0.0 and not float(right).is_integer():
            raise _domain_error(f"negative base {left!r} raised to non-integer power {right!r}", node, source)
        try:
            result = math.pow(left, right)
        except OverflowError:
            raise _domain_error(f"{left!r} ^ {right!r} overflows", node, source) from None
    if not math.isfinite(result):
        raise _domain_error(f"'{op}' produced a non-finite value", node, source)
    return result


def _apply_call(node: Call, args: List[float], source: str) -> float:
    name = node.function
    if name == "sqrt" and args[0] < 0.0:
        raise _domain_error(f"sqrt of negative value {args[0]!r}", node, source)
    if name == "ln" and args[0] <= 0.0:
        raise _domain_error(f"ln of non-positive value {args[0]!r}", node, source)
    try:
        result = float(_SCALAR_FUNCTIONS[name](*args))
    except OverflowError:
        raise _domain_error(f"{name}({args[0]!r}) overflows", node, source) from None
    if not math.isfinite(result):
        raise _domain_error(f"{name} produced a non-finite value", node, source)
    return result


def evaluate(ast: ExprAst, bindings: Mapping[str, float]) -> float:
    """Evaluate with double precision; domain violations raise DomainError"""
    return _eval_scalar(ast.root, bindings, ast.source)


# --- array evaluation -----------------------------------------------------

def _eval_array(node: Node, bindings: Mapping[str, Value], source: str) -> np.ndarray:
    if isinstance(node, Number):
        return np.asarray(node.value, dtype=float)
    if isinstance(node, Constant):
        return np.asarray(CONSTANTS[node.name], dtype=float)
    if isinstance(node, Variable):
        if node.name not in bindings:
            raise UnboundVariableError(node.name, offset=node.offset, source=source or None)
        return np.asarray(bindings[node.name], dtype=float)
    if isinstance(node, Neg):
        return -_eval_array(node.operand, bindings, source)
    if isinstance(node, BinaryOp):
        left = _eval_array(node.left, bindings, source)
        right = _eval_array(node.right, bindings, source)
        return _array_binary(node, left, right, source)
    args = [_eval_array(arg, bindings, source) for arg in node.args]
    return _array_call(node, args, source)


def _first_bad(values: np.ndarray, mask: np.ndarray) -> float:
    return float(np.broadcast_to(values, mask.shape)[mask].flat[0])


def _array_binary(node: BinaryOp, left: np.ndarray, right: np.ndarray, source: str) -> np.ndarray:
    op = node.op
    with np.errstate(all="ignore"):
        if op == "+":
            result = left + right
        elif op == "-":
            result = left - right
        elif op == "*":
            result = left * right
        elif op == "/":
            zero = np.broadcast_to(right == 0.0, np.broadcast(left, right).shape)
            if zero.any():
                raise _domain_error(f"division by zero ({_first_bad(left, zero)!r} / 0)", node, source)
            result = left / right
        else:
            shape = np.broadcast(left, right).shape
            bad_zero = np.broadcast_to((left == 0.0) & (right < 0.0), shape)
            if bad_zero.any():
                raise _domain_error(
                    f"zero raised to negative power {_first_bad(right, bad_zero)!r}", node, source
                )
            bad_neg = np.broadcast_to((left < 0.0) & (np.floor(right) != right), shape)
            if bad_neg.any():
                raise _domain_error(
                    f"negative base {_first_bad(left, bad_neg)!r} raised to non-integer power", node, source
                )
            result = np.power(left, right)
    if not np.all(np.isfinite(result)):
        raise _domain_error(f"'{op}' produced a non-finite value", node, source)
    return result


def _array_call(node: Call, args: List[np.ndarray], source: str) -> np.ndarray:
    name = node.function
    value = args[0]
    if name == "sqrt" and np.any(value < 0.0):
        raise _domain_error(f"sqrt of negative value {_first_bad(value, value < 0.0)!r}", node, source)
    if name == "ln" and np.any(value <= 0.0):
        raise _domain_error(f"ln of non-positive value {_first_bad(value, value <= 0.0)!r}", node, source)
    with np.errstate(all="ignore"):
        if name == "min":
            result = args[0]
            for arg in args[1:]:
                result = np.minimum(result, arg)
        elif name == "max":
            result = args[0]
            for arg in args[1:]:
                result = np.maximum(result, arg)
        else:
            ufunc = {
                "sin": np.sin,
                "cos": np.cos,
                "tan": np.tan,
                "sqrt": np.sqrt,
                "exp": np.exp,
                "ln": np.log,
                "abs": np.abs,
            }[name]
            result = ufunc(value)
    if not np.all(np.isfinite(result)):
        raise _domain_error(f"{name} produced a non-finite value", node, source)
    return result


def evaluate_array(ast: ExprAst, bindings: Mapping[str, Value]) -> np.ndarray:
    """Vectorized evaluation over broadcastable numpy bindings"""
    return _eval_array(ast.root, bindings, ast.source)
