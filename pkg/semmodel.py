#!/usr/bin/env python3

"""
Structural models over finite discrete variables.

A Model is an immutable DAG of mechanisms: Root tables, conditional
probability tables (CPT) and Deterministic nodes. Probability entries are
expressions over the declared parameters and become plain numbers with bind().
"""

import dataclasses
import functools
import itertools
import logging
import math
import os
from dataclasses import dataclass, field
from typing import Dict, Mapping, Optional, Tuple

import networkx as nx

from errors import BindingError, ModelError, QueryError
from expression import Const, Expression, as_expression, format_number

logger = logging.getLogger(__name__)

STATE_LIMIT = 10 ** 7
PROBABILITY_TOLERANCE = 1e-9
SUPPORT_TOLERANCE = 1e-9


def state_limit():
    value = os.environ.get('VCE_STATE_LIMIT')
    if value is None or value.strip() == '':
        return STATE_LIMIT
    try:
        limit = int(value)
    except ValueError:
        raise ModelError('VCE_STATE_LIMIT must be a positive integer, got {!r}'.format(value)) from None
    if limit <= 0:
        raise ModelError('VCE_STATE_LIMIT must be a positive integer, got {!r}'.format(value))
    return limit


def format_assignment(names, values):
    return ', '.join('{}={}'.format(n, format_number(v)) for n, v in zip(names, values))


@dataclass(frozen=True)
class FiniteSupport:
    values: Tuple[float, ...]

    def __post_init__(self):
        values = tuple(float(v) for v in self.values)
        if len(values) == 0:
            raise ModelError('support must not be empty')
        for v in values:
            if not math.isfinite(v):
                raise ModelError('support values must be finite, got {}'.format(v))
        for a, b in zip(values, values[1:]):
            if not a < b:
                raise ModelError('support values must be strictly increasing: {}'.format(
                    ', '.join(format_number(v) for v in values)))
        object.__setattr__(self, 'values', values)

    def __len__(self):
        return len(self.values)

    def __iter__(self):
        return iter(self.values)

    def __getitem__(self, index):
        return self.values[index]

    def find(self, value):
        # Index of the support value within SUPPORT_TOLERANCE of value, or None
        value = float(value)
        for i, v in enumerate(self.values):
            if abs(v - value) <= SUPPORT_TOLERANCE:
                return i
        return None

    def index(self, value):
        i = self.find(value)
        if i is None:
            raise QueryError('value {} is outside the support {{{}}}'.format(
                format_number(value), ', '.join(format_number(v) for v in self.values)))
        return i

    def __contains__(self, value):
        return self.find(value) is not None

    def snap(self, value):
        return self.values[self.index(value)]


@dataclass(frozen=True)
class Variable:
    name: str
    support: FiniteSupport

    def __post_init__(self):
        if not isinstance(self.support, FiniteSupport):
            object.__setattr__(self, 'support', FiniteSupport(tuple(self.support)))


@dataclass(frozen=True)
class Parameter:
    name: str
    lower: float = 0.0
    upper: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, 'lower', float(self.lower))
        object.__setattr__(self, 'upper', float(self.upper))


def _probability_table(table):
    return {float(k): as_expression(v) for k, v in table.items()}


@dataclass(frozen=True)
class Root:
    table: Dict[float, Expression]
    parents: Tuple[str, ...] = field(default=(), init=False)

    def __post_init__(self):
        object.__setattr__(self, 'table', _probability_table(self.table))

    def expressions(self):
        return list(self.table.values())

    def substitute(self, mapping):
        return Root({k: v.substitute(mapping) for k, v in self.table.items()})


@dataclass(frozen=True)
class CPT:
    parents: Tuple[str, ...]
    rows: Dict[Tuple[float, ...], Dict[float, Expression]]

    def __post_init__(self):
        object.__setattr__(self, 'parents', tuple(self.parents))
        rows = {}
        for key, table in self.rows.items():
            key = tuple(float(k) for k in (key if isinstance(key, tuple) else (key,)))
            rows[key] = _probability_table(table)
        object.__setattr__(self, 'rows', rows)

    def expressions(self):
        return [e for table in self.rows.values() for e in table.values()]

    def substitute(self, mapping):
        return CPT(self.parents, {key: {k: v.substitute(mapping) for k, v in table.items()}
                                  for key, table in self.rows.items()})


@dataclass(frozen=True)
class Deterministic:
    parents: Tuple[str, ...]
    body: Optional[Expression] = None
    lookup: Optional[Dict[Tuple[float, ...], float]] = None

    def __post_init__(self):
        object.__setattr__(self, 'parents', tuple(self.parents))
        if (self.body is None) == (self.lookup is None):
            raise ModelError('a deterministic node needs exactly one of an expression or a lookup table')
        if self.lookup is not None:
            lookup = {}
            for key, value in self.lookup.items():
                key = tuple(float(k) for k in (key if isinstance(key, tuple) else (key,)))
                lookup[key] = float(value)
            object.__setattr__(self, 'lookup', lookup)

    def expressions(self):
        return []

    def substitute(self, mapping):
        if self.body is None:
            return self
        return Deterministic(self.parents, body=self.body.substitute(mapping))

    def evaluate(self, env):
        if self.body is not None:
            return self.body.evaluate(env)
        key = tuple(float(env[p]) for p in self.parents)
        try:
            return self.lookup[key]
        except KeyError:
            raise ModelError('lookup table has no entry for ({})'.format(
                format_assignment(self.parents, key))) from None


def is_stochastic(mechanism):
    return isinstance(mechanism, (Root, CPT))


@dataclass(frozen=True)
class Partition:
    indices: Tuple[int, ...]

    def __post_init__(self):
        indices = tuple(int(i) for i in self.indices)
        if len(indices) < 2:
            raise QueryError('a partition needs at least two points')
        for a, b in zip(indices, indices[1:]):
            if not a < b:
                raise QueryError('partition indices must be strictly increasing')
        if indices[0] < 0:
            raise QueryError('partition index {} out of range'.format(indices[0]))
        object.__setattr__(self, 'indices', indices)

    def check(self, support):
        if self.indices[-1] >= len(support):
            raise QueryError('partition index {} out of range for a support of {} values'.format(
                self.indices[-1], len(support)))

    @classmethod
    def from_values(cls, support, values):
        return cls(tuple(support.index(v) for v in values))

    def values(self, support):
        self.check(support)
        return tuple(support[i] for i in self.indices)

    def __len__(self):
        return len(self.indices)


@dataclass(frozen=True)
class Model:
    variables: Tuple[Variable, ...]
    mechanisms: Dict[str, object]
    parameters: Tuple[Parameter, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, 'variables', tuple(self.variables))
        object.__setattr__(self, 'mechanisms', dict(self.mechanisms))
        object.__setattr__(self, 'parameters', tuple(self.parameters))

    @property
    def names(self):
        return tuple(v.name for v in self.variables)

    @functools.cached_property
    def _positions(self):
        return {v.name: i for i, v in enumerate(self.variables)}

    def has_variable(self, name):
        return name in self._positions

    def variable(self, name):
        try:
            return self.variables[self._positions[name]]
        except KeyError:
            raise QueryError("unknown variable '{}'".format(name)) from None

    def support(self, name):
        return self.variable(name).support

    def mechanism(self, name):
        self.variable(name)
        try:
            return self.mechanisms[name]
        except KeyError:
            raise ModelError("variable '{}' has no mechanism".format(name)) from None

    def parents(self, name):
        return self.mechanism(name).parents

    def children(self, name):
        self.variable(name)
        return tuple(n for n in self.names if n in self.mechanisms and name in self.mechanisms[n].parents)

    def parameter(self, name):
        for p in self.parameters:
            if p.name == name:
                return p
        raise BindingError("unknown parameter '{}'".format(name))

    def graph(self):
        graph = nx.DiGraph()
        graph.add_nodes_from(self.names)
        for name in self.names:
            mechanism = self.mechanisms.get(name)
            if mechanism is None:
                continue
            for parent in mechanism.parents:
                graph.add_edge(parent, name)
        return graph

    def topological_order(self):
        graph = self.graph()
        if not nx.is_directed_acyclic_graph(graph):
            raise ModelError('cycle detected: {}'.format(_describe_cycle(graph)))
        position = {name: i for i, name in enumerate(self.names)}
        return tuple(nx.lexicographical_topological_sort(graph, key=lambda n: position.get(n, len(position))))

    def is_deterministic(self, name):
        return isinstance(self.mechanism(name), Deterministic)

    def stochastic_variables(self):
        return tuple(n for n in self.names if is_stochastic(self.mechanisms[n]))

    def free_names(self):
        names = []
        for name in self.names:
            mechanism = self.mechanisms.get(name)
            if mechanism is None:
                continue
            expressions = list(mechanism.expressions())
            if isinstance(mechanism, Deterministic) and mechanism.body is not None:
                expressions.append(mechanism.body)
            for e in expressions:
                for n in e.names():
                    if n not in names and n not in mechanism.parents:
                        names.append(n)
        return tuple(names)

    def is_bound(self):
        return len(self.parameters) == 0 and len(self.free_names()) == 0

    def state_space_size(self):
        size = 1
        for v in self.variables:
            size *= len(v.support)
        return size

    def parent_assignments(self, name):
        parents = self.parents(name)
        return itertools.product(*(self.support(p).values for p in parents))

    def outcome(self, name, assignment: Mapping[str, float]):
        mechanism = self.mechanism(name)
        if not isinstance(mechanism, Deterministic):
            raise QueryError("'{}' is not a deterministic node".format(name))
        env = {}
        for parent in mechanism.parents:
            if parent not in assignment:
                raise QueryError("assignment misses parent '{}' of {}".format(parent, name))
            env[parent] = self.support(parent).snap(assignment[parent])
        value = mechanism.evaluate(env)
        i = self.support(name).find(value)
        if i is None:
            raise ModelError('value {} of {} at ({}) is outside its support'.format(
                format_number(value), name, format_assignment(mechanism.parents, [env[p] for p in mechanism.parents])))
        return self.support(name)[i]

    def outcome_table(self, name):
        parents = self.parents(name)
        return {key: self.outcome(name, dict(zip(parents, key))) for key in self.parent_assignments(name)}

    def replace_mechanism(self, name, mechanism):
        self.variable(name)
        mechanisms = dict(self.mechanisms)
        mechanisms[name] = mechanism
        return dataclasses.replace(self, mechanisms=mechanisms)

    def insert_variable(self, variable, mechanism, before):
        if self.has_variable(variable.name):
            raise ModelError("duplicate variable '{}'".format(variable.name))
        index = self._positions[before] if before is not None else len(self.variables)
        variables = self.variables[:index] + (variable,) + self.variables[index:]
        mechanisms = dict(self.mechanisms)
        mechanisms[variable.name] = mechanism
        return Model(variables, mechanisms, self.parameters)

    def remove_variable(self, name):
        self.variable(name)
        variables = tuple(v for v in self.variables if v.name != name)
        mechanisms = {k: m for k, m in self.mechanisms.items() if k != name}
        return Model(variables, mechanisms, self.parameters)

    def with_parameter(self, parameter):
        if any(p.name == parameter.name for p in self.parameters):
            raise ModelError("duplicate parameter '{}'".format(parameter.name))
        return dataclasses.replace(self, parameters=self.parameters + (parameter,))


def cycle_nodes(model):
    try:
        return [edge[0] for edge in nx.find_cycle(model.graph())]
    except nx.NetworkXNoCycle:
        return []


def _describe_cycle(graph):
    cycle = nx.find_cycle(graph)
    nodes = [edge[0] for edge in cycle] + [cycle[0][0]]
    return ' -> '.join(nodes)


# Check one probability row, returning diagnostics
def _check_row(owner, table, support, where, diagnostics):
    for value in table:
        if value not in support:
            diagnostics.append('table of {}{} has value {} outside its support'.format(
                owner, where, format_number(value)))
    if any(not e.is_constant() for e in table.values()):
        return
    total = 0.0
    for value, e in table.items():
        p = e.evaluate({})
        if not math.isfinite(p) or p < -PROBABILITY_TOLERANCE or p > 1.0 + PROBABILITY_TOLERANCE:
            diagnostics.append('probability {} of {}={}{} is outside [0, 1]'.format(
                format_number(p), owner, format_number(value), where))
        total += p
    if abs(total - 1.0) > PROBABILITY_TOLERANCE:
        diagnostics.append('row of {}{} sums to {}, expected 1'.format(owner, where, repr(total)))


def validate(model):
    """
    Return a list of diagnostics, empty when every model invariant holds.
    Probability rows that reference parameters are checked after bind().
    """
    diagnostics = []

    names = [v.name for v in model.variables]
    seen = set()
    for name in names:
        if name in seen:
            diagnostics.append("duplicate variable '{}'".format(name))
        seen.add(name)

    parameter_names = set()
    for p in model.parameters:
        if p.name in parameter_names:
            diagnostics.append("duplicate parameter '{}'".format(p.name))
        if p.name in seen:
            diagnostics.append("parameter '{}' clashes with a variable".format(p.name))
        if not p.lower <= p.upper:
            diagnostics.append("parameter '{}' has bounds [{}, {}] with lower > upper".format(
                p.name, format_number(p.lower), format_number(p.upper)))
        parameter_names.add(p.name)

    for name in model.mechanisms:
        if name not in seen:
            diagnostics.append("mechanism for undeclared variable '{}'".format(name))

    structural_ok = True
    for name in names:
        mechanism = model.mechanisms.get(name)
        if mechanism is None:
            diagnostics.append("variable '{}' has no mechanism".format(name))
            structural_ok = False
            continue
        for parent in mechanism.parents:
            if parent not in seen:
                diagnostics.append("unknown parent '{}' of {}".format(parent, name))
                structural_ok = False
        if len(set(mechanism.parents)) != len(mechanism.parents):
            diagnostics.append('repeated parent of {}'.format(name))
            structural_ok = False
        if name in mechanism.parents:
            diagnostics.append('{} is its own parent'.format(name))

    if not structural_ok:
        return diagnostics

    graph = model.graph()
    if not nx.is_directed_acyclic_graph(graph):
        diagnostics.append('cycle detected: {}'.format(_describe_cycle(graph)))
        return diagnostics

    for v in model.variables:
        diagnostics.extend(node_diagnostics(model, v.name))
    return diagnostics


def node_diagnostics(model, name):
    """
    Diagnostics of one variable's mechanism: probability rows, lookup
    coverage and values inside the support. Parents must be declared.
    """
    diagnostics = []
    parameter_names = {p.name for p in model.parameters}
    v = model.variable(name)
    mechanism = model.mechanisms[name]
    for e in mechanism.expressions():
        for n in e.names():
            if n not in parameter_names:
                diagnostics.append("probability of {} references '{}' which is not a parameter".format(v.name, n))

    if isinstance(mechanism, Root):
        _check_row(v.name, mechanism.table, v.support, '', diagnostics)

    elif isinstance(mechanism, CPT):
        expected = set(model.parent_assignments(v.name))
        for key, table in mechanism.rows.items():
            where = ' given ({})'.format(format_assignment(mechanism.parents, key))
            if len(key) != len(mechanism.parents) or key not in expected:
                diagnostics.append('row ({}) of {} is not a parent assignment'.format(
                    ', '.join(format_number(k) for k in key), v.name))
                continue
            _check_row(v.name, table, v.support, where, diagnostics)
        for key in sorted(expected - set(mechanism.rows)):
            diagnostics.append('table of {} misses the row ({})'.format(
                v.name, format_assignment(mechanism.parents, key)))

    elif isinstance(mechanism, Deterministic):
        if mechanism.body is not None:
            allowed = set(mechanism.parents) | parameter_names
            unknown = [n for n in mechanism.body.names() if n not in allowed]
            for n in unknown:
                diagnostics.append("{} references '{}' which is neither a parent nor a parameter".format(v.name, n))
            if unknown or any(n in parameter_names for n in mechanism.body.names()):
                return diagnostics
        else:
            expected = set(model.parent_assignments(v.name))
            for key in sorted(expected - set(mechanism.lookup)):
                diagnostics.append('lookup of {} misses ({})'.format(
                    v.name, format_assignment(mechanism.parents, key)))
            for key in mechanism.lookup:
                if key not in expected:
                    diagnostics.append('lookup of {} has an entry ({}) that is not a parent assignment'.format(
                        v.name, ', '.join(format_number(k) for k in key)))
        for key in model.parent_assignments(v.name):
            env = dict(zip(mechanism.parents, key))
            try:
                value = mechanism.evaluate(env)
            except ModelError as e:
                diagnostics.append('{} at ({}): {}'.format(v.name, format_assignment(mechanism.parents, key), e))
                continue
            if value not in v.support:
                diagnostics.append('value {} of {} at ({}) is outside its support'.format(
                    format_number(value), v.name, format_assignment(mechanism.parents, key)))

    else:
        diagnostics.append('{} has an unknown mechanism type'.format(v.name))

    return diagnostics


def check(model):
    diagnostics = validate(model)
    if diagnostics:
        raise ModelError('; '.join(diagnostics))
    return model


def bind(model, bindings: Mapping[str, float]):
    """
    Substitute every declared parameter and return a fully numeric model.
    """
    bindings = dict(bindings)
    declared = {p.name: p for p in model.parameters}
    for name in bindings:
        if name not in declared:
            raise BindingError("unknown parameter '{}'".format(name))
    mapping = {}
    for name, p in declared.items():
        if name not in bindings:
            raise BindingError("unbound parameter '{}'".format(name))
        value = float(bindings[name])
        if not p.lower <= value <= p.upper:
            raise BindingError("parameter '{}' = {} is outside [{}, {}]".format(
                name, format_number(value), format_number(p.lower), format_number(p.upper)))
        mapping[name] = Const(value)

    if not declared:
        return model

    mechanisms = {}
    for name, mechanism in model.mechanisms.items():
        mechanism = mechanism.substitute(mapping)
        if isinstance(mechanism, Root):
            mechanism = Root({k: _fold(v) for k, v in mechanism.table.items()})
        elif isinstance(mechanism, CPT):
            mechanism = CPT(mechanism.parents, {key: {k: _fold(v) for k, v in table.items()}
                                                for key, table in mechanism.rows.items()})
        mechanisms[name] = mechanism
    bound = Model(model.variables, mechanisms, ())

    diagnostics = validate(bound)
    if diagnostics:
        raise BindingError('; '.join(diagnostics))
    logger.debug('bound %s', ', '.join('{}={}'.format(k, format_number(v.value)) for k, v in mapping.items()))
    return bound


def _fold(e):
    if isinstance(e, Const) or not e.is_constant():
        return e
    return Const(e.evaluate({}))
