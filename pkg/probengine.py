#!/usr/bin/env python3

"""
Exact inference by enumeration of the product state space.

The joint of a bound model is the product of its node conditionals
(deterministic nodes contribute an indicator), held as a dense numpy array
with one axis per variable in declaration order.
"""

import logging
from typing import Mapping, Optional, Sequence

import numpy as np
import pandas as pd

from errors import (AbsoluteContinuityError, BindingError, QueryError, StateSpaceError,
                    ZeroProbabilityError)
from expression import format_number
from semmodel import CPT, PROBABILITY_TOLERANCE, Deterministic, Model, Root, state_limit

logger = logging.getLogger(__name__)


class Distribution:
    """
    Probability table over an ordered list of variables.
    """

    def __init__(self, variables, supports, table):
        self.variables = tuple(variables)
        self.supports = tuple(supports)
        self.table = np.asarray(table, dtype=float)
        if self.table.shape != tuple(len(s) for s in self.supports):
            raise ValueError('table shape {} does not match the supports'.format(self.table.shape))

    def axis(self, name):
        try:
            return self.variables.index(name)
        except ValueError:
            raise QueryError("unknown variable '{}'".format(name)) from None

    def support(self, name):
        return self.supports[self.axis(name)]

    def total(self):
        return float(self.table.sum())

    def index_of(self, assignment):
        if isinstance(assignment, Mapping):
            assignment = [assignment[v] for v in self.variables]
        return tuple(s.index(value) for s, value in zip(self.supports, assignment))

    def prob(self, assignment):
        return float(self.table[self.index_of(assignment)])

    def items(self):
        # (values, probability) in row-major order, zero entries included
        for index in np.ndindex(*self.table.shape):
            yield tuple(s[i] for s, i in zip(self.supports, index)), float(self.table[index])

    def as_dict(self):
        return {values: p for values, p in self.items()}

    def expectation(self):
        if len(self.variables) != 1:
            raise QueryError('expectation needs a distribution over a single variable')
        values = np.asarray(self.supports[0].values)
        return float(np.dot(values, self.table) / self.table.sum())

    def __repr__(self):
        entries = ', '.join('({}): {:.6g}'.format(', '.join(format_number(v) for v in values), p)
                            for values, p in self.items() if p > 0)
        return 'Distribution[{}]{{{}}}'.format(', '.join(self.variables), entries)


class JointTable(Distribution):
    def __init__(self, model, table):
        super().__init__(model.names, [v.support for v in model.variables], table)
        self.model = model


# Factor of one node: (variables, array) with axes parents..., node
def node_factor(model, name):
    mechanism = model.mechanism(name)
    support = model.support(name)

    if isinstance(mechanism, Root):
        return (name,), _row_vector(mechanism.table, support, name)

    parents = mechanism.parents
    shape = tuple(len(model.support(p)) for p in parents) + (len(support),)
    factor = np.zeros(shape)

    if isinstance(mechanism, CPT):
        for key, table in mechanism.rows.items():
            index = tuple(model.support(p).index(k) for p, k in zip(parents, key))
            factor[index] = _row_vector(table, support, name)
    elif isinstance(mechanism, Deterministic):
        for key, value in model.outcome_table(name).items():
            index = tuple(model.support(p).index(k) for p, k in zip(parents, key))
            factor[index + (support.index(value),)] = 1.0
    else:
        raise QueryError('{} has an unknown mechanism type'.format(name))

    return parents + (name,), factor


def _row_vector(table, support, owner):
    row = np.zeros(len(support))
    for value, e in table.items():
        if not e.is_constant():
            raise BindingError('{} has unbound parameters ({}); bind the model first'.format(
                owner, ', '.join(e.names())))
        row[support.index(value)] = e.evaluate({})
    return row


def _expand(factor, factor_vars, order, sizes):
    # Reorder the factor axes to the global order and add singleton axes
    positions = [order.index(v) for v in factor_vars]
    permutation = sorted(range(len(factor_vars)), key=lambda i: positions[i])
    factor = np.transpose(factor, permutation)
    shape = [1] * len(order)
    for v in factor_vars:
        shape[order.index(v)] = sizes[order.index(v)]
    return factor.reshape(shape)


def joint_from_factors(model, factors):
    order = list(model.names)
    sizes = [len(v.support) for v in model.variables]
    table = np.ones(sizes)
    for name in model.topological_order():
        factor_vars, factor = factors[name]
        table = table * _expand(factor, factor_vars, order, sizes)
    return JointTable(model, table)


def build_joint(model):
    if not model.is_bound():
        raise BindingError('model has unbound parameters: {}'.format(
            ', '.join([p.name for p in model.parameters] or list(model.free_names()))))
    size = model.state_space_size()
    limit = state_limit()
    if size > limit:
        raise StateSpaceError('joint state space has {} states, above the limit of {}'.format(size, limit))

    factors = {name: node_factor(model, name) for name in model.names}
    joint = joint_from_factors(model, factors)

    total = joint.total()
    if abs(total - 1.0) > PROBABILITY_TOLERANCE:
        raise BindingError('joint mass is {}, expected 1'.format(total))
    logger.info('joint built with %d states', size)
    return joint


def marginal(joint, variables: Sequence[str]):
    variables = list(variables)
    axes = [joint.axis(v) for v in variables]
    if len(set(axes)) != len(axes):
        raise QueryError('repeated variable in {}'.format(', '.join(variables)))
    others = tuple(i for i in range(len(joint.variables)) if i not in axes)
    table = joint.table.sum(axis=others)
    # Remaining axes are in ascending order; move them into the requested order
    remaining = sorted(axes)
    table = np.transpose(table, [remaining.index(a) for a in axes]) if axes else table
    return Distribution(variables, [joint.supports[a] for a in axes], table)


def restrict(joint, given: Mapping[str, float]):
    # Zero every entry inconsistent with the given assignment
    table = joint.table
    for name, value in given.items():
        axis = joint.axis(name)
        mask = np.zeros(table.shape[axis])
        mask[joint.supports[axis].index(value)] = 1.0
        shape = [1] * table.ndim
        shape[axis] = len(mask)
        table = table * mask.reshape(shape)
    return table


def probability(joint, event: Mapping[str, float]):
    return float(restrict(joint, event).sum())


def conditional(joint, targets: Sequence[str], given: Optional[Mapping[str, float]] = None):
    given = dict(given or {})
    table = restrict(joint, given)
    mass = float(table.sum())
    if mass <= 0.0:
        raise ZeroProbabilityError('conditioning event ({}) has probability zero'.format(
            ', '.join('{}={}'.format(k, format_number(v)) for k, v in given.items())))
    restricted = Distribution(joint.variables, joint.supports, table / mass)
    return marginal(restricted, targets)


def intervene(model, do: Mapping[str, float]):
    """
    Replace each intervened node's mechanism by a point-mass root.
    """
    result = model
    for name, value in do.items():
        value = model.support(name).snap(value)
        result = result.replace_mechanism(name, Root({value: 1.0}))
    return result


def interventional_joint(model, do: Mapping[str, float]):
    return build_joint(intervene(model, do))


def expectation(source, target, condition: Optional[Mapping[str, float]] = None):
    joint = build_joint(source) if isinstance(source, Model) else source
    return conditional(joint, [target], condition).expectation()


def _as_array(dist):
    if isinstance(dist, Distribution):
        return dist.table
    return np.asarray(dist, dtype=float)


def entropy(dist):
    p = _as_array(dist).ravel()
    p = p[p > 0]
    return float(-np.sum(p * np.log2(p)))


def joint_entropy(joint, variables):
    return entropy(marginal(joint, variables))


def _as_list(variables):
    if isinstance(variables, str):
        return [variables]
    return list(variables)


def cond_entropy(joint, target, given):
    target = _as_list(target)
    given = [g for g in _as_list(given) if g not in target]
    if not given:
        return joint_entropy(joint, target)
    return joint_entropy(joint, target + given) - joint_entropy(joint, given)


def mutual_information(joint, x, y):
    return cond_entropy(joint, y, []) - cond_entropy(joint, y, x)


def conditional_mutual_information(joint, x, y, z):
    z = _as_list(z)
    return cond_entropy(joint, y, z) - cond_entropy(joint, y, _as_list(x) + z)


def kl_divergence(p, q):
    """
    D(P || Q) in bits; P must be absolutely continuous with respect to Q.
    """
    if isinstance(p, Distribution) and isinstance(q, Distribution) and p.variables != q.variables:
        raise QueryError('distributions are over different variables')
    p = _as_array(p)
    q = _as_array(q)
    if p.shape != q.shape:
        raise QueryError('distributions have different shapes {} and {}'.format(p.shape, q.shape))
    support = p > 0
    if np.any(q[support] <= 0):
        raise AbsoluteContinuityError('P puts mass where Q has none')
    return float(np.sum(p[support] * np.log2(p[support] / q[support])))


def sample(joint, n, seed=None):
    """
    Draw n independent records from the joint as a DataFrame.
    """
    rng = np.random.default_rng(seed)
    flat = joint.table.ravel()
    flat = flat / flat.sum()
    draws = rng.choice(flat.size, size=int(n), p=flat)
    indices = np.unravel_index(draws, joint.table.shape)
    columns = {}
    for name, support, index in zip(joint.variables, joint.supports, indices):
        columns[name] = np.asarray(support.values)[index]
    return pd.DataFrame(columns, columns=list(joint.variables))
