#!/usr/bin/env python3

"""
Text format for structural models (.sem files).

    # binary symmetric channel
    param p in [0, 1]
    var X in {0, 1}
    root X {0: 1/2, 1: 1/2}
    cpt R | C { (0): {0: 0.8, 1: 0.2}, (1): {0: 0.2, 1: 0.8} }
    def Y = xor(X, Z)
    def Y | X, Z = X            # explicit parents
    fun W | R, S { (0, 0): 0, (0, 1): 1, (1, 0): 1, (1, 1): 1 }

Declarations must come before they are referenced. Numbers may be written
as decimals or as rationals such as 41/70.
"""

import logging

import ply.lex

from errors import ModelError, ParseError
from expression import (BUILTINS, BinOp, Call, Compare, Const, IfElse, Logic, Name, Neg, Not,
                        format_number)
from semmodel import (CPT, Deterministic, FiniteSupport, Model, Parameter, Root, Variable, cycle_nodes,
                      node_diagnostics, validate)

logger = logging.getLogger(__name__)


def parse_number(text):
    """
    Parse a decimal or rational literal such as 0.25, -3 or 41/70.
    """
    text = text.strip()
    try:
        if '/' in text:
            numerator, denominator = text.split('/', 1)
            denominator = float(denominator)
            if denominator == 0.0:
                raise ZeroDivisionError()
            return float(numerator) / denominator
        return float(text)
    except ZeroDivisionError:
        raise ValueError('division by zero in {!r}'.format(text)) from None
    except ValueError:
        raise ValueError('not a number: {!r}'.format(text)) from None


class SemLexer:
    reserved = {
        'param': 'PARAM',
        'var': 'VAR',
        'root': 'ROOT',
        'cpt': 'CPT',
        'def': 'DEF',
        'fun': 'FUN',
        'in': 'IN',
        'if': 'IF',
        'then': 'THEN',
        'else': 'ELSE',
        'and': 'AND',
        'or': 'OR',
        'not': 'NOT',
    }

    tokens = (
        'NUMBER',
        'IDENT',
        'LBRACE',
        'RBRACE',
        'LPAREN',
        'RPAREN',
        'LBRACKET',
        'RBRACKET',
        'COMMA',
        'COLON',
        'BAR',
        'EQ',
        'NE',
        'LE',
        'GE',
        'LT',
        'GT',
        'ASSIGN',
        'PLUS',
        'MINUS',
        'TIMES',
    ) + tuple(reserved.values())

    t_LBRACE = r'\{'
    t_RBRACE = r'\}'
    t_LPAREN = r'\('
    t_RPAREN = r'\)'
    t_LBRACKET = r'\['
    t_RBRACKET = r'\]'
    t_COMMA = r','
    t_COLON = r':'
    t_BAR = r'\|'
    t_EQ = r'=='
    t_NE = r'!='
    t_LE = r'<='
    t_GE = r'>='
    t_LT = r'<'
    t_GT = r'>'
    t_ASSIGN = r'='
    t_PLUS = r'\+'
    t_MINUS = r'-'
    t_TIMES = r'\*'

    t_ignore = ' \t\r'
    t_ignore_COMMENT = r'\#[^\n]*'

    def t_NUMBER(self, t):
        r'(\d+\.?\d*|\.\d+)([eE][-+]?\d+)?(/(\d+\.?\d*|\.\d+)([eE][-+]?\d+)?)?'
        try:
            t.value = (parse_number(t.value), t.value)
        except ValueError as e:
            raise ParseError(str(e), t.lineno, self.column(t.lexpos)) from None
        return t

    def t_IDENT(self, t):
        r'[A-Za-z_][A-Za-z0-9_]*'
        t.type = self.reserved.get(t.value, 'IDENT')
        return t

    def t_newline(self, t):
        r'\n+'
        t.lexer.lineno += len(t.value)

    def t_error(self, t):
        raise ParseError("illegal character '{}'".format(t.value[0]), t.lineno, self.column(t.lexpos))

    def __init__(self):
        self.text = ''
        self.lexer = ply.lex.lex(module=self, errorlog=ply.lex.NullLogger())

    def column(self, position):
        return position - self.text.rfind('\n', 0, position)

    def tokenize(self, text):
        self.text = text
        self.lexer.lineno = 1
        self.lexer.input(text)
        result = []
        while True:
            token = self.lexer.token()
            if token is None:
                break
            token.column = self.column(token.lexpos)
            result.append(token)
        return result


class SemParser:
    def __init__(self, text):
        self.text = text
        self.tokens = SemLexer().tokenize(text)
        self.position = 0

        self.variables = []
        self.supports = {}
        self.declared_at = {}
        self.mechanisms = {}
        self.mechanism_at = {}
        self.parameters = []

    # Token helpers

    def peek(self, offset=0):
        i = self.position + offset
        return self.tokens[i] if i < len(self.tokens) else None

    def at(self, *types):
        token = self.peek()
        return token is not None and token.type in types

    def error(self, message, token=None):
        if token is None:
            token = self.peek()
        if token is None:
            lines = self.text.split('\n')
            raise ParseError(message, len(lines), len(lines[-1]) + 1)
        raise ParseError(message, token.lineno, token.column)

    def advance(self):
        token = self.peek()
        self.position += 1
        return token

    def expect(self, type, what=None):
        token = self.peek()
        if token is None or token.type != type:
            found = 'end of input' if token is None else repr(self._token_text(token))
            self.error('expected {}, found {}'.format(what or type.lower(), found), token)
        return self.advance()

    @staticmethod
    def _token_text(token):
        if token.type == 'NUMBER':
            return token.value[1]
        return token.value

    # Statements

    def parse(self):
        while self.peek() is not None:
            token = self.peek()
            if token.type == 'PARAM':
                self.parse_param()
            elif token.type == 'VAR':
                self.parse_var()
            elif token.type == 'ROOT':
                self.parse_root()
            elif token.type == 'CPT':
                self.parse_cpt()
            elif token.type == 'DEF':
                self.parse_def()
            elif token.type == 'FUN':
                self.parse_fun()
            else:
                self.error('expected a declaration, found {!r}'.format(self._token_text(token)), token)

        if not self.variables:
            raise ParseError('no variables declared', 1, 1)

        for variable in self.variables:
            if variable.name not in self.mechanisms:
                token = self.declared_at[variable.name]
                self.error("variable '{}' has no mechanism".format(variable.name), token)

        model = Model(tuple(self.variables), self.mechanisms, tuple(self.parameters))
        diagnostics = validate(model)
        if diagnostics:
            self.report(model, diagnostics)
        return model

    def report(self, model, diagnostics):
        # Attribute each diagnostic to the declaration it comes from
        for name, token in self.mechanism_at.items():
            own = node_diagnostics(model, name)
            if own:
                self.error('; '.join(own), token)
        on_cycle = cycle_nodes(model)
        if on_cycle:
            last = max((self.mechanism_at[n] for n in on_cycle), key=lambda t: t.lexpos)
            self.error('; '.join(diagnostics), last)
        raise ParseError('; '.join(diagnostics), 1, 1)

    def parse_param(self):
        self.advance()
        token = self.expect('IDENT', 'a parameter name')
        self.check_fresh(token)
        self.expect('IN', "'in'")
        self.expect('LBRACKET', "'['")
        lower = self.parse_signed_number()
        self.expect('COMMA', "','")
        upper = self.parse_signed_number()
        self.expect('RBRACKET', "']'")
        if lower > upper:
            self.error("parameter '{}' has lower bound above upper bound".format(token.value), token)
        self.parameters.append(Parameter(token.value, lower, upper))
        self.declared_at[token.value] = token

    def parse_var(self):
        self.advance()
        token = self.expect('IDENT', 'a variable name')
        self.check_fresh(token)
        self.expect('IN', "'in'")
        brace = self.expect('LBRACE', "'{'")
        values = [self.parse_signed_number()]
        while self.at('COMMA'):
            self.advance()
            values.append(self.parse_signed_number())
        self.expect('RBRACE', "'}'")
        try:
            support = FiniteSupport(tuple(values))
        except ModelError as e:
            self.error(str(e), brace)
        self.variables.append(Variable(token.value, support))
        self.supports[token.value] = support
        self.declared_at[token.value] = token

    def check_fresh(self, token):
        if token.value in self.declared_at:
            kind = 'variable' if token.value in self.supports else 'parameter'
            self.error("duplicate {} '{}'".format(kind, token.value), token)
        if token.value in BUILTINS:
            self.error("'{}' is a builtin function name".format(token.value), token)

    def mechanism_target(self):
        token = self.expect('IDENT', 'a variable name')
        if token.value not in self.supports:
            self.error("unknown variable '{}'".format(token.value), token)
        if token.value in self.mechanisms:
            self.error("variable '{}' already has a mechanism".format(token.value), token)
        self.mechanism_at[token.value] = token
        return token

    def parse_parent_list(self):
        parents = []
        token = self.expect('IDENT', 'a parent name')
        parents.append(self.resolve_variable(token))
        while self.at('COMMA'):
            self.advance()
            token = self.expect('IDENT', 'a parent name')
            if token.value in parents:
                self.error("repeated parent '{}'".format(token.value), token)
            parents.append(self.resolve_variable(token))
        return tuple(parents)

    def resolve_variable(self, token):
        if token.value not in self.supports:
            self.error("unknown variable '{}'".format(token.value), token)
        return token.value

    def parse_root(self):
        self.advance()
        target = self.mechanism_target()
        table = self.parse_probability_table(target.value)
        self.mechanisms[target.value] = Root(table)

    def parse_cpt(self):
        self.advance()
        target = self.mechanism_target()
        self.expect('BAR', "'|'")
        parents = self.parse_parent_list()
        if target.value in parents:
            self.error('{} cannot be its own parent'.format(target.value), target)
        self.expect('LBRACE', "'{'")
        rows = {}
        while not self.at('RBRACE'):
            start = self.peek()
            key = self.parse_row_key(parents)
            if key in rows:
                self.error('duplicate row ({})'.format(', '.join(format_number(k) for k in key)), start)
            self.expect('COLON', "':'")
            rows[key] = self.parse_probability_table(target.value)
            if not self.at('COMMA'):
                break
            self.advance()
        self.expect('RBRACE', "'}'")
        self.mechanisms[target.value] = CPT(parents, rows)

    def parse_def(self):
        self.advance()
        target = self.mechanism_target()
        explicit = None
        if self.at('BAR'):
            self.advance()
            explicit = self.parse_parent_list()
        self.expect('ASSIGN', "'='")
        body = self.parse_expression(allow_variables=True)
        referenced = [n for n in body.names() if n in self.supports]
        if target.value in referenced or (explicit is not None and target.value in explicit):
            self.error('{} cannot depend on itself'.format(target.value), target)
        if explicit is None:
            order = [v.name for v in self.variables]
            parents = tuple(sorted(referenced, key=order.index))
        else:
            for n in referenced:
                if n not in explicit:
                    self.error("{} references '{}' which is not among its parents".format(target.value, n), target)
            parents = explicit
        self.mechanisms[target.value] = Deterministic(parents, body=body)

    def parse_fun(self):
        self.advance()
        target = self.mechanism_target()
        self.expect('BAR', "'|'")
        parents = self.parse_parent_list()
        if target.value in parents:
            self.error('{} cannot be its own parent'.format(target.value), target)
        self.expect('LBRACE', "'{'")
        lookup = {}
        while not self.at('RBRACE'):
            start = self.peek()
            key = self.parse_row_key(parents)
            if key in lookup:
                self.error('duplicate entry ({})'.format(', '.join(format_number(k) for k in key)), start)
            self.expect('COLON', "':'")
            token = self.peek()
            value = self.parse_signed_number()
            if value not in self.supports[target.value]:
                self.error('value {} is outside the support of {}'.format(format_number(value), target.value), token)
            lookup[key] = value
            if not self.at('COMMA'):
                break
            self.advance()
        self.expect('RBRACE', "'}'")
        self.mechanisms[target.value] = Deterministic(parents, lookup=lookup)

    def parse_row_key(self, parents):
        start = self.peek()
        if self.at('LPAREN'):
            self.advance()
            key = [self.parse_signed_number()]
            while self.at('COMMA'):
                self.advance()
                key.append(self.parse_signed_number())
            self.expect('RPAREN', "')'")
        else:
            key = [self.parse_signed_number()]
        if len(key) != len(parents):
            self.error('row key has {} values for {} parents'.format(len(key), len(parents)), start)
        for parent, value in zip(parents, key):
            if value not in self.supports[parent]:
                self.error('value {} is outside the support of {}'.format(format_number(value), parent), start)
        return tuple(self.supports[p].snap(v) for p, v in zip(parents, key))

    def parse_probability_table(self, owner):
        self.expect('LBRACE', "'{'")
        table = {}
        while not self.at('RBRACE'):
            token = self.peek()
            value = self.parse_signed_number()
            if value not in self.supports[owner]:
                self.error('value {} is outside the support of {}'.format(format_number(value), owner), token)
            value = self.supports[owner].snap(value)
            if value in table:
                self.error('duplicate entry for value {}'.format(format_number(value)), token)
            self.expect('COLON', "':'")
            table[value] = self.parse_expression(allow_variables=False)
            if not self.at('COMMA'):
                break
            self.advance()
        self.expect('RBRACE', "'}'")
        return table

    def parse_signed_number(self):
        negative = False
        if self.at('MINUS'):
            self.advance()
            negative = True
        token = self.expect('NUMBER', 'a number')
        value = token.value[0]
        return -value if negative else value

    # Expressions, loosest binding first

    def parse_expression(self, allow_variables):
        self.allow_variables = allow_variables
        return self.parse_if()

    def parse_if(self):
        if self.at('IF'):
            self.advance()
            condition = self.parse_or()
            self.expect('THEN', "'then'")
            then = self.parse_if()
            self.expect('ELSE', "'else'")
            otherwise = self.parse_if()
            return IfElse(condition, then, otherwise)
        return self.parse_or()

    def parse_or(self):
        left = self.parse_and()
        while self.at('OR'):
            self.advance()
            left = Logic('or', left, self.parse_and())
        return left

    def parse_and(self):
        left = self.parse_not()
        while self.at('AND'):
            self.advance()
            left = Logic('and', left, self.parse_not())
        return left

    def parse_not(self):
        if self.at('NOT'):
            self.advance()
            return Not(self.parse_not())
        return self.parse_comparison()

    def parse_comparison(self):
        left = self.parse_sum()
        if self.at('EQ', 'NE', 'LT', 'LE', 'GT', 'GE'):
            op = self.advance().value
            left = Compare(op, left, self.parse_sum())
            if self.at('EQ', 'NE', 'LT', 'LE', 'GT', 'GE'):
                self.error('comparisons cannot be chained; use parentheses')
        return left

    def parse_sum(self):
        left = self.parse_product()
        while self.at('PLUS', 'MINUS'):
            op = self.advance().value
            left = BinOp(op, left, self.parse_product())
        return left

    def parse_product(self):
        left = self.parse_unary()
        while self.at('TIMES'):
            self.advance()
            left = BinOp('*', left, self.parse_unary())
        return left

    def parse_unary(self):
        if self.at('MINUS'):
            self.advance()
            if self.at('NUMBER'):
                token = self.advance()
                value, text = token.value
                return Const(-value, '-' + text)
            return Neg(self.parse_unary())
        return self.parse_atom()

    def parse_atom(self):
        token = self.peek()
        if token is None:
            self.error('expected an expression, found end of input')
        if token.type == 'NUMBER':
            self.advance()
            value, text = token.value
            return Const(value, text)
        if token.type == 'LPAREN':
            self.advance()
            allow = self.allow_variables
            inner = self.parse_if()
            self.allow_variables = allow
            self.expect('RPAREN', "')'")
            return inner
        if token.type == 'IDENT':
            self.advance()
            if self.at('LPAREN'):
                return self.parse_call(token)
            return self.resolve_name(token)
        self.error('expected an expression, found {!r}'.format(self._token_text(token)), token)

    def parse_call(self, token):
        if token.value not in BUILTINS:
            self.error("unknown function '{}'".format(token.value), token)
        self.expect('LPAREN', "'('")
        args = []
        if not self.at('RPAREN'):
            args.append(self.parse_if())
            while self.at('COMMA'):
                self.advance()
                args.append(self.parse_if())
        self.expect('RPAREN', "')'")
        low, high = BUILTINS[token.value]
        if len(args) < low or (high is not None and len(args) > high):
            self.error('{}() takes {} arguments, got {}'.format(
                token.value, low if low == high else 'at least {}'.format(low), len(args)), token)
        return Call(token.value, tuple(args))

    def resolve_name(self, token):
        name = token.value
        if name in self.supports:
            if not self.allow_variables:
                self.error("probabilities cannot reference variable '{}'".format(name), token)
            return Name(name)
        if any(p.name == name for p in self.parameters):
            return Name(name)
        self.error("unknown identifier '{}'".format(name), token)


def parse_model(text):
    model = SemParser(text).parse()
    logger.debug('parsed model with %d variables', len(model.variables))
    return model


def load_model(path):
    with open(path, 'r', encoding='utf-8') as f:
        return parse_model(f.read())


def _render_table(table):
    return '{' + ', '.join('{}: {}'.format(format_number(k), v.render()) for k, v in table.items()) + '}'


def _render_key(key):
    return '(' + ', '.join(format_number(k) for k in key) + ')'


def serialize_model(model):
    lines = []
    for p in model.parameters:
        lines.append('param {} in [{}, {}]'.format(p.name, format_number(p.lower), format_number(p.upper)))
    for v in model.variables:
        lines.append('var {} in {{{}}}'.format(v.name, ', '.join(format_number(x) for x in v.support)))

    order = [v.name for v in model.variables]
    for v in model.variables:
        mechanism = model.mechanisms[v.name]
        if isinstance(mechanism, Root):
            lines.append('root {} {}'.format(v.name, _render_table(mechanism.table)))
        elif isinstance(mechanism, CPT):
            lines.append('cpt {} | {} {{'.format(v.name, ', '.join(mechanism.parents)))
            rows = ['  {}: {}'.format(_render_key(key), _render_table(table)) for key, table in mechanism.rows.items()]
            lines.append(',\n'.join(rows))
            lines.append('}')
        elif mechanism.body is not None:
            referenced = tuple(sorted((n for n in mechanism.body.names() if n in order), key=order.index))
            if referenced == mechanism.parents:
                lines.append('def {} = {}'.format(v.name, mechanism.body.render()))
            else:
                lines.append('def {} | {} = {}'.format(v.name, ', '.join(mechanism.parents), mechanism.body.render()))
        else:
            lines.append('fun {} | {} {{'.format(v.name, ', '.join(mechanism.parents)))
            entries = ['  {}: {}'.format(_render_key(key), format_number(value)) for key, value in mechanism.lookup.items()]
            lines.append(',\n'.join(entries))
            lines.append('}')
    return '\n'.join(lines) + '\n'


def save_model(model, path):
    with open(path, 'w', encoding='utf-8') as f:
        f.write(serialize_model(model))
