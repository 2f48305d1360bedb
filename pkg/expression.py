#!/usr/bin/env python3

"""
Expression trees used by mechanism bodies and probability entries.

Values are reals. Comparisons and logical operators produce 0 or 1, and
logical operators, xor and the condition of an if require operands that are
exactly 0 or 1.
"""

from dataclasses import dataclass, field
from typing import Mapping, Tuple

from errors import ModelError

# Binding strength used when rendering, loosest first
PREC_IF = 0
PREC_OR = 1
PREC_AND = 2
PREC_NOT = 3
PREC_COMPARE = 4
PREC_ADD = 5
PREC_MUL = 6
PREC_UNARY = 7
PREC_ATOM = 8

ARITHMETIC = ('+', '-', '*')
COMPARISONS = ('==', '!=', '<', '<=', '>', '>=')
LOGICAL = ('and', 'or')

# name: (min arity, max arity or None)
BUILTINS = {
    'xor': (2, 2),
    'min': (1, None),
    'max': (1, None),
    'abs': (1, 1),
}


def format_number(value):
    value = float(value)
    if value.is_integer() and abs(value) < 1e15:
        return '{:d}'.format(int(value))
    return repr(value)


def as_expression(value):
    if isinstance(value, Expression):
        return value
    return Const(float(value))


def _truth(value, what):
    if value == 0.0:
        return False
    if value == 1.0:
        return True
    raise ModelError('{} must be 0 or 1, got {}'.format(what, format_number(value)))


class Expression:
    PREC = PREC_ATOM

    def evaluate(self, env: Mapping[str, float]) -> float:
        raise NotImplementedError()

    def children(self):
        return ()

    def substitute(self, mapping):
        raise NotImplementedError()

    def _render(self):
        raise NotImplementedError()

    def render(self, min_prec=PREC_IF):
        text = self._render()
        if self.PREC < min_prec:
            return '({})'.format(text)
        return text

    def walk(self):
        yield self
        for child in self.children():
            yield from child.walk()

    def names(self) -> Tuple[str, ...]:
        # Order of first appearance
        seen = []
        for node in self.walk():
            if isinstance(node, Name) and node.id not in seen:
                seen.append(node.id)
        return tuple(seen)

    def is_constant(self):
        return len(self.names()) == 0

    def __str__(self):
        return self.render()


@dataclass(frozen=True)
class Const(Expression):
    value: float
    text: str = field(default=None, compare=False, repr=False)

    def evaluate(self, env):
        return self.value

    def substitute(self, mapping):
        return self

    def _render(self):
        text = self.text if self.text is not None else format_number(self.value)
        if self.value < 0 or text.startswith('-'):
            return '({})'.format(text)
        return text


@dataclass(frozen=True)
class Name(Expression):
    id: str

    def evaluate(self, env):
        try:
            return float(env[self.id])
        except KeyError:
            raise ModelError("unbound name '{}'".format(self.id)) from None

    def substitute(self, mapping):
        return mapping.get(self.id, self)

    def _render(self):
        return self.id


@dataclass(frozen=True)
class Neg(Expression):
    operand: Expression
    PREC = PREC_UNARY

    def evaluate(self, env):
        return -self.operand.evaluate(env)

    def children(self):
        return (self.operand,)

    def substitute(self, mapping):
        return Neg(self.operand.substitute(mapping))

    def _render(self):
        # A bare literal after a minus would read back as a negative literal
        if isinstance(self.operand, Const):
            return '-({})'.format(self.operand.render())
        return '-' + self.operand.render(PREC_UNARY)


@dataclass(frozen=True)
class BinOp(Expression):
    op: str
    left: Expression
    right: Expression

    @property
    def PREC(self):
        return PREC_MUL if self.op == '*' else PREC_ADD

    def evaluate(self, env):
        a = self.left.evaluate(env)
        b = self.right.evaluate(env)
        if self.op == '+':
            return a + b
        if self.op == '-':
            return a - b
        if self.op == '*':
            return a * b
        raise ModelError('unknown operator {}'.format(self.op))

    def children(self):
        return (self.left, self.right)

    def substitute(self, mapping):
        return BinOp(self.op, self.left.substitute(mapping), self.right.substitute(mapping))

    def _render(self):
        prec = self.PREC
        return '{} {} {}'.format(self.left.render(prec), self.op, self.right.render(prec + 1))


@dataclass(frozen=True)
class Compare(Expression):
    op: str
    left: Expression
    right: Expression
    PREC = PREC_COMPARE

    def evaluate(self, env):
        a = self.left.evaluate(env)
        b = self.right.evaluate(env)
        result = {
            '==': a == b,
            '!=': a != b,
            '<': a < b,
            '<=': a <= b,
            '>': a > b,
            '>=': a >= b,
        }[self.op]
        return 1.0 if result else 0.0

    def children(self):
        return (self.left, self.right)

    def substitute(self, mapping):
        return Compare(self.op, self.left.substitute(mapping), self.right.substitute(mapping))

    def _render(self):
        return '{} {} {}'.format(self.left.render(PREC_COMPARE + 1), self.op,
                                 self.right.render(PREC_COMPARE + 1))


@dataclass(frozen=True)
class Logic(Expression):
    op: str
    left: Expression
    right: Expression

    @property
    def PREC(self):
        return PREC_AND if self.op == 'and' else PREC_OR

    def evaluate(self, env):
        a = _truth(self.left.evaluate(env), "operand of '{}'".format(self.op))
        b = _truth(self.right.evaluate(env), "operand of '{}'".format(self.op))
        result = (a and b) if self.op == 'and' else (a or b)
        return 1.0 if result else 0.0

    def children(self):
        return (self.left, self.right)

    def substitute(self, mapping):
        return Logic(self.op, self.left.substitute(mapping), self.right.substitute(mapping))

    def _render(self):
        prec = self.PREC
        return '{} {} {}'.format(self.left.render(prec), self.op, self.right.render(prec + 1))


@dataclass(frozen=True)
class Not(Expression):
    operand: Expression
    PREC = PREC_NOT

    def evaluate(self, env):
        return 0.0 if _truth(self.operand.evaluate(env), "operand of 'not'") else 1.0

    def children(self):
        return (self.operand,)

    def substitute(self, mapping):
        return Not(self.operand.substitute(mapping))

    def _render(self):
        return 'not ' + self.operand.render(PREC_NOT)


@dataclass(frozen=True)
class Call(Expression):
    func: str
    args: Tuple[Expression, ...]

    def evaluate(self, env):
        values = [arg.evaluate(env) for arg in self.args]
        if self.func == 'xor':
            a = _truth(values[0], 'argument of xor')
            b = _truth(values[1], 'argument of xor')
            return 1.0 if a != b else 0.0
        if self.func == 'min':
            return min(values)
        if self.func == 'max':
            return max(values)
        if self.func == 'abs':
            return abs(values[0])
        raise ModelError("unknown function '{}'".format(self.func))

    def children(self):
        return self.args

    def substitute(self, mapping):
        return Call(self.func, tuple(arg.substitute(mapping) for arg in self.args))

    def _render(self):
        return '{}({})'.format(self.func, ', '.join(arg.render() for arg in self.args))


@dataclass(frozen=True)
class IfElse(Expression):
    condition: Expression
    then: Expression
    otherwise: Expression
    PREC = PREC_IF

    def evaluate(self, env):
        if _truth(self.condition.evaluate(env), 'condition of if'):
            return self.then.evaluate(env)
        return self.otherwise.evaluate(env)

    def children(self):
        return (self.condition, self.then, self.otherwise)

    def substitute(self, mapping):
        return IfElse(self.condition.substitute(mapping), self.then.substitute(mapping),
                      self.otherwise.substitute(mapping))

    def _render(self):
        return 'if {} then {} else {}'.format(self.condition.render(PREC_OR), self.then.render(),
                                              self.otherwise.render())
