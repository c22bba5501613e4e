"""Expression language for model right-hand sides, outputs and closed forms.

Grammar (precedence low to high; binary operators associate left)::

    expression := signed (("+" | "-") product)*
    signed     := "-" signed | "+" signed | product
    product    := factor (("*" | "/") factor)*
    factor     := "-" factor | "+" factor | power
    power      := atom ("^" INTEGER)*
    atom       := NUMBER | NAME | ("exp" | "ln") "(" expression ")"
                | "(" expression ")"

``u`` is the input, ``t`` is time; every other name must be a declared state
or parameter. A leading minus applies to the whole product that follows it,
so ``-lambda*x`` is ``Neg(Mul(lambda, x))``.
"""
import logging
import re
from typing import Dict, Iterable, List, Mapping, NamedTuple, Optional, Sequence, Set, Tuple, Union

import numpy as np

from models.expression_models import (
    Add, Constant, Div, Exp, Expression, InputVar, Ln, Mul, Neg, ParamVar, PowInt, StateVar, Sub, TimeVar,
)
from utils.errors import (
    ExpressionEvaluationError, ExpressionParseError, ExpressionSyntaxError, InvalidExponentError,
    UnknownIdentifierError,
)

logger = logging.getLogger(__name__)

INPUT_NAME = "u"
TIME_NAME = "t"
FUNCTION_NAMES = ("exp", "ln")
RESERVED_NAMES = (INPUT_NAME, TIME_NAME) + FUNCTION_NAMES

Value = Union[float, np.ndarray]

_TOKEN_PATTERN = re.compile(
    r"(?P<ws>\s+)"
    r"|(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)"
    r"|(?P<name>[A-Za-z_][A-Za-z0-9_]*)"
    r"|(?P<op>[-+*/^()])"
)


class Token(NamedTuple):
    kind: str
    text: str
    offset: int


def tokenize(text: str) -> List[Token]:
    tokens: List[Token] = []
    pos = 0
    while pos < len(text):
        match = _TOKEN_PATTERN.match(text, pos)
        if match is None:
            raise ExpressionSyntaxError(f"Unexpected character '{text[pos]}'", pos)
        kind = match.lastgroup
        if kind != "ws":
            tokens.append(Token(kind, match.group(), pos))
        pos = match.end()
    tokens.append(Token("end", "", len(text)))
    return tokens


class ExpressionParser:
    """Recursive-descent parser over a token list"""

    def __init__(self, text: str, state_names: Sequence[str], param_names: Sequence[str]):
        states, params = set(state_names), set(param_names)
        if states & params:
            raise ExpressionParseError(f"Names declared as both state and parameter: {sorted(states & params)}")
        reserved = (states | params) & set(RESERVED_NAMES)
        if reserved:
            raise ExpressionParseError(f"Reserved names cannot be declared: {sorted(reserved)}")
        self.text = text
        self.states = states
        self.params = params
        self.tokens = tokenize(text)
        self.index = 0

    # Token stream

    def _peek(self) -> Token:
        return self.tokens[self.index]

    def _advance(self) -> Token:
        token = self.tokens[self.index]
        self.index += 1
        return token

    def _at(self, text: str) -> bool:
        token = self._peek()
        return token.kind == "op" and token.text == text

    def _expect(self, text: str) -> Token:
        token = self._peek()
        if not self._at(text):
            self._fail(token, f"Expected '{text}'")
        return self._advance()

    @staticmethod
    def _fail(token: Token, message: str):
        if token.kind == "end":
            raise ExpressionSyntaxError("Unexpected end of input", token.offset)
        raise ExpressionSyntaxError(f"{message}, found '{token.text}'", token.offset)

    # Grammar

    def parse(self) -> Expression:
        if self._peek().kind == "end":
            raise ExpressionSyntaxError("Empty expression", 0)
        node = self._expression()
        token = self._peek()
        if token.kind != "end":
            self._fail(token, "Unexpected token")
        return node

    def _expression(self) -> Expression:
        node = self._signed()
        while self._at("+") or self._at("-"):
            op = self._advance().text
            right = self._product()
            node = Add(left=node, right=right) if op == "+" else Sub(left=node, right=right)
        return node

    def _signed(self) -> Expression:
        if self._at("-"):
            self._advance()
            literal = self._peek().kind == "num"
            return _negate(self._signed(), literal)
        if self._at("+"):
            self._advance()
            return self._signed()
        return self._product()

    def _product(self) -> Expression:
        node = self._factor()
        while self._at("*") or self._at("/"):
            op = self._advance().text
            right = self._factor()
            node = Mul(left=node, right=right) if op == "*" else Div(left=node, right=right)
        return node

    def _factor(self) -> Expression:
        if self._at("-"):
            self._advance()
            literal = self._peek().kind == "num"
            return _negate(self._factor(), literal)
        if self._at("+"):
            self._advance()
            return self._factor()
        return self._power()

    def _power(self) -> Expression:
        node = self._atom()
        while self._at("^"):
            self._advance()
            token = self._peek()
            if token.kind == "op" and token.text == "-":
                raise InvalidExponentError("-", token.offset)
            if token.kind != "num":
                self._fail(token, "Expected integer exponent")
            self._advance()
            value = float(token.text)
            if not value.is_integer():
                raise InvalidExponentError(token.text, token.offset)
            node = PowInt(base=node, exponent=int(value))
        return node

    def _atom(self) -> Expression:
        token = self._peek()
        if token.kind == "num":
            self._advance()
            return Constant(value=float(token.text))
        if token.kind == "name":
            self._advance()
            return self._name(token)
        if self._at("("):
            self._advance()
            node = self._expression()
            self._expect(")")
            return node
        self._fail(token, "Expected a number, name or '('")

    def _name(self, token: Token) -> Expression:
        name = token.text
        if name in FUNCTION_NAMES:
            self._expect("(")
            arg = self._expression()
            self._expect(")")
            return Exp(arg=arg) if name == "exp" else Ln(arg=arg)
        if name == INPUT_NAME:
            return InputVar()
        if name == TIME_NAME:
            return TimeVar()
        if name in self.states:
            return StateVar(name=name)
        if name in self.params:
            return ParamVar(name=name)
        raise UnknownIdentifierError(name, token.offset)


def _negate(node: Expression, literal: bool) -> Expression:
    # A minus directly in front of a number token is the negative literal
    if literal and isinstance(node, Constant):
        return Constant(value=-node.value)
    return Neg(operand=node)


def parse_expression(text: str, state_names: Sequence[str] = (), param_names: Sequence[str] = ()) -> Expression:
    return ExpressionParser(text, state_names, param_names).parse()


# Evaluation

def _lookup(name: str, env: Mapping[str, Value]) -> Value:
    try:
        return env[name]
    except KeyError:
        raise ExpressionEvaluationError(f"Unbound name '{name}'") from None


def _divide(e: Div, env) -> Value:
    numerator = _eval(e.left, env)
    denominator = _eval(e.right, env)
    if np.any(np.asarray(denominator) == 0):
        raise ExpressionEvaluationError(f"Division by zero in {format_expression(e)}")
    return numerator / denominator


def _logarithm(e: Ln, env) -> Value:
    arg = _eval(e.arg, env)
    if np.any(np.asarray(arg) <= 0):
        raise ExpressionEvaluationError(f"Logarithm of a nonpositive value in {format_expression(e)}")
    return np.log(arg)


_EVALUATORS = {
    Constant: lambda e, env: e.value,
    StateVar: lambda e, env: _lookup(e.name, env),
    ParamVar: lambda e, env: _lookup(e.name, env),
    InputVar: lambda e, env: _lookup(INPUT_NAME, env),
    TimeVar: lambda e, env: _lookup(TIME_NAME, env),
    Neg: lambda e, env: -_eval(e.operand, env),
    Add: lambda e, env: _eval(e.left, env) + _eval(e.right, env),
    Sub: lambda e, env: _eval(e.left, env) - _eval(e.right, env),
    Mul: lambda e, env: _eval(e.left, env) * _eval(e.right, env),
    Div: _divide,
    PowInt: lambda e, env: _eval(e.base, env) ** e.exponent,
    Exp: lambda e, env: np.exp(_eval(e.arg, env)),
    Ln: _logarithm,
}


def _eval(e: Expression, env: Mapping[str, Value]) -> Value:
    return _EVALUATORS[type(e)](e, env)


def evaluate_expression(e: Expression, env: Mapping[str, Value]) -> Value:
    """Evaluate ``e``; env maps state/parameter names plus ``u`` and ``t`` to values.

    Values may be numpy arrays, in which case evaluation is elementwise.
    """
    result = _eval(e, env)
    if np.ndim(result) == 0:
        return float(result)
    return result


# Simplifying constructors: constant folding and 0/1 identities only

def _is_const(e: Expression, value: Optional[float] = None) -> bool:
    return isinstance(e, Constant) and (value is None or e.value == value)


def make_neg(a: Expression) -> Expression:
    if isinstance(a, Constant):
        return Constant(value=-a.value)
    if isinstance(a, Neg):
        return a.operand
    return Neg(operand=a)


def make_add(a: Expression, b: Expression) -> Expression:
    if _is_const(a) and _is_const(b):
        return Constant(value=a.value + b.value)
    if _is_const(a, 0):
        return b
    if _is_const(b, 0):
        return a
    return Add(left=a, right=b)


def make_sub(a: Expression, b: Expression) -> Expression:
    if _is_const(a) and _is_const(b):
        return Constant(value=a.value - b.value)
    if _is_const(b, 0):
        return a
    if _is_const(a, 0):
        return make_neg(b)
    return Sub(left=a, right=b)


def make_mul(a: Expression, b: Expression) -> Expression:
    if _is_const(a) and _is_const(b):
        return Constant(value=a.value * b.value)
    if _is_const(a, 0) or _is_const(b, 0):
        return Constant(value=0.0)
    if _is_const(a, 1):
        return b
    if _is_const(b, 1):
        return a
    if _is_const(a, -1):
        return make_neg(b)
    if _is_const(b, -1):
        return make_neg(a)
    return Mul(left=a, right=b)


def make_div(a: Expression, b: Expression) -> Expression:
    if _is_const(a) and _is_const(b) and b.value != 0:
        return Constant(value=a.value / b.value)
    if _is_const(a, 0) and not _is_const(b, 0):
        return Constant(value=0.0)
    if _is_const(b, 1):
        return a
    return Div(left=a, right=b)


def make_pow(base: Expression, exponent: int) -> Expression:
    if exponent == 0:
        return Constant(value=1.0)
    if exponent == 1:
        return base
    if isinstance(base, Constant):
        return Constant(value=base.value ** exponent)
    return PowInt(base=base, exponent=exponent)


def make_exp(arg: Expression) -> Expression:
    if isinstance(arg, Constant):
        return Constant(value=float(np.exp(arg.value)))
    return Exp(arg=arg)


def make_ln(arg: Expression) -> Expression:
    if isinstance(arg, Constant) and arg.value > 0:
        return Constant(value=float(np.log(arg.value)))
    return Ln(arg=arg)


def simplify_expression(e: Expression) -> Expression:
    """Rebuild ``e`` bottom-up through the folding constructors"""
    if isinstance(e, Neg):
        return make_neg(simplify_expression(e.operand))
    if isinstance(e, Add):
        return make_add(simplify_expression(e.left), simplify_expression(e.right))
    if isinstance(e, Sub):
        return make_sub(simplify_expression(e.left), simplify_expression(e.right))
    if isinstance(e, Mul):
        return make_mul(simplify_expression(e.left), simplify_expression(e.right))
    if isinstance(e, Div):
        return make_div(simplify_expression(e.left), simplify_expression(e.right))
    if isinstance(e, PowInt):
        return make_pow(simplify_expression(e.base), e.exponent)
    if isinstance(e, Exp):
        return make_exp(simplify_expression(e.arg))
    if isinstance(e, Ln):
        return make_ln(simplify_expression(e.arg))
    return e


# Differentiation

_ZERO = Constant(value=0.0)
_ONE = Constant(value=1.0)


def differentiate_expression(e: Expression, var: str) -> Expression:
    """Exact partial derivative of ``e`` with respect to a state or parameter.

    ``var == "t"`` differentiates with respect to time (the input counts as a
    constant), which is how closed-form outputs are differentiated.
    """
    if isinstance(e, Constant) or isinstance(e, InputVar):
        return _ZERO
    if isinstance(e, (StateVar, ParamVar)):
        return _ONE if e.name == var else _ZERO
    if isinstance(e, TimeVar):
        return _ONE if var == TIME_NAME else _ZERO
    if isinstance(e, Neg):
        return make_neg(differentiate_expression(e.operand, var))
    if isinstance(e, Add):
        return make_add(differentiate_expression(e.left, var), differentiate_expression(e.right, var))
    if isinstance(e, Sub):
        return make_sub(differentiate_expression(e.left, var), differentiate_expression(e.right, var))
    if isinstance(e, Mul):
        return make_add(
            make_mul(differentiate_expression(e.left, var), e.right),
            make_mul(e.left, differentiate_expression(e.right, var)),
        )
    if isinstance(e, Div):
        numerator = make_sub(
            make_mul(differentiate_expression(e.left, var), e.right),
            make_mul(e.left, differentiate_expression(e.right, var)),
        )
        return make_div(numerator, make_pow(e.right, 2))
    if isinstance(e, PowInt):
        if e.exponent == 0:
            return _ZERO
        outer = make_mul(Constant(value=float(e.exponent)), make_pow(e.base, e.exponent - 1))
        return make_mul(outer, differentiate_expression(e.base, var))
    if isinstance(e, Exp):
        return make_mul(e, differentiate_expression(e.arg, var))
    if isinstance(e, Ln):
        return make_div(differentiate_expression(e.arg, var), e.arg)
    raise TypeError(f"Not an expression node: {e!r}")


def differentiate_n(e: Expression, var: str, order: int) -> Expression:
    for _ in range(order):
        e = differentiate_expression(e, var)
    return e


# Printing

_BINARY_SYMBOLS = {Add: "+", Sub: "-", Mul: "*", Div: "/"}


def format_expression(e: Expression) -> str:
    """Fully parenthesized text that parses back to the same tree"""
    if isinstance(e, Constant):
        if e.value < 0:
            return f"(-{repr(-e.value)})"
        return repr(abs(e.value))
    if isinstance(e, (StateVar, ParamVar)):
        return e.name
    if isinstance(e, InputVar):
        return INPUT_NAME
    if isinstance(e, TimeVar):
        return TIME_NAME
    if isinstance(e, Neg):
        if isinstance(e.operand, Constant) and e.operand.value >= 0:
            return f"(-({format_expression(e.operand)}))"
        return f"(-{format_expression(e.operand)})"
    if type(e) in _BINARY_SYMBOLS:
        return f"({format_expression(e.left)} {_BINARY_SYMBOLS[type(e)]} {format_expression(e.right)})"
    if isinstance(e, PowInt):
        return f"({format_expression(e.base)}^{e.exponent})"
    if isinstance(e, Exp):
        return f"exp({format_expression(e.arg)})"
    if isinstance(e, Ln):
        return f"ln({format_expression(e.arg)})"
    raise TypeError(f"Not an expression node: {e!r}")


# Introspection

def _walk(e: Expression) -> Iterable[Expression]:
    yield e
    for child in _children(e):
        yield from _walk(child)


def _children(e: Expression) -> Tuple[Expression, ...]:
    if isinstance(e, Neg):
        return (e.operand,)
    if type(e) in _BINARY_SYMBOLS:
        return (e.left, e.right)
    if isinstance(e, PowInt):
        return (e.base,)
    if isinstance(e, (Exp, Ln)):
        return (e.arg,)
    return ()


def referenced_names(e: Expression) -> Dict[str, Set[str]]:
    """States and parameters a tree mentions"""
    states: Set[str] = set()
    params: Set[str] = set()
    for node in _walk(e):
        if isinstance(node, StateVar):
            states.add(node.name)
        elif isinstance(node, ParamVar):
            params.add(node.name)
    return {"states": states, "params": params}


def is_zero(e: Expression) -> bool:
    return _is_const(e, 0)
