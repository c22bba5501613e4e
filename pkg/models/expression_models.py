from pydantic import BaseModel, ConfigDict, Field


class ExprNode(BaseModel):
    """Base class of the expression tree; every node is immutable and hashable"""
    model_config = ConfigDict(frozen=True)


# Leaves

class Constant(ExprNode):
    value: float


class StateVar(ExprNode):
    name: str


class ParamVar(ExprNode):
    name: str


class InputVar(ExprNode):
    pass


class TimeVar(ExprNode):
    pass


# Operators

class Neg(ExprNode):
    operand: ExprNode


class Add(ExprNode):
    left: ExprNode
    right: ExprNode


class Sub(ExprNode):
    left: ExprNode
    right: ExprNode


class Mul(ExprNode):
    left: ExprNode
    right: ExprNode


class Div(ExprNode):
    left: ExprNode
    right: ExprNode


class PowInt(ExprNode):
    base: ExprNode
    exponent: int = Field(..., ge=0)


class Exp(ExprNode):
    arg: ExprNode


class Ln(ExprNode):
    arg: ExprNode


Expression = ExprNode

BINARY_NODES = (Add, Sub, Mul, Div)
