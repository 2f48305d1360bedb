#!/usr/bin/env python3

"""
Counterfactuals by abduction, action and prediction.

Every stochastic node (root or table) is a latent whose realized value is
kept in every world; deterministic nodes are recomputed from their parents
and intervened nodes take their do-value. The prior over latents is their
observational joint, so abduction is exhaustive enumeration of that joint.
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, Mapping

import numpy as np

from errors import QueryError, ZeroProbabilityError
from expression import format_number
from probengine import Distribution, build_joint, marginal
from semdsl import parse_number

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Evidence:
    # context is an intervention active while the evidence was observed
    observed: Dict[str, float] = field(default_factory=dict)
    context: Dict[str, float] = field(default_factory=dict)

    def check(self, model):
        for name, value in list(self.observed.items()) + list(self.context.items()):
            model.support(name).index(value)


def latent_variables(model):
    return tuple(model.stochastic_variables())


def propagate(model, latents: Mapping[str, float], do: Mapping[str, float]):
    """
    Values of every variable in the world fixed by the latent values and the
    intervention.
    """
    world = {}
    for name in model.topological_order():
        if name in do:
            world[name] = model.support(name).snap(do[name])
        elif name in latents:
            world[name] = latents[name]
        else:
            world[name] = model.outcome(name, world)
    return world


def prior(model, joint=None):
    joint = joint if joint is not None else build_joint(model)
    return marginal(joint, latent_variables(model))


def _consistent(world, observed):
    return all(world[name] == value for name, value in observed.items())


def abduct(model, evidence, joint=None):
    """
    Posterior over the latent values given evidence observed under the
    evidence context.
    """
    for name in list(evidence.observed) + list(evidence.context):
        model.variable(name)
    evidence.check(model)
    observed = {k: model.support(k).snap(v) for k, v in evidence.observed.items()}

    base = prior(model, joint)
    posterior = np.zeros(base.table.shape)
    for index in np.ndindex(*base.table.shape):
        p = base.table[index]
        if p <= 0:
            continue
        latents = {name: support[i] for name, support, i in zip(base.variables, base.supports, index)}
        if _consistent(propagate(model, latents, evidence.context), observed):
            posterior[index] = p

    mass = posterior.sum()
    if mass <= 0:
        raise ZeroProbabilityError('evidence ({}) has probability zero'.format(
            ', '.join('{}={}'.format(k, format_number(v)) for k, v in observed.items())))
    logger.debug('evidence mass %.12g over %d latent configurations', mass, int(np.count_nonzero(posterior)))
    return Distribution(base.variables, base.supports, posterior / mass)


def counterfactual_query(model, evidence, intervention: Mapping[str, float], target, joint=None):
    """
    Distribution of target in the intervened world, given evidence.
    """
    model.variable(target)
    for name in intervention:
        model.variable(name)
    posterior = abduct(model, evidence, joint)

    support = model.support(target)
    table = np.zeros(len(support))
    for values, p in posterior.items():
        if p <= 0:
            continue
        world = propagate(model, dict(zip(posterior.variables, values)), intervention)
        table[support.index(world[target])] += p
    return Distribution([target], [support], table)


def parse_assignment(text):
    """
    'Y=1,X=0' -> {'Y': 1.0, 'X': 0.0}
    """
    assignment = {}
    text = text.strip()
    if not text:
        return assignment
    for part in text.split(','):
        if '=' not in part:
            raise QueryError('expected name=value, got {!r}'.format(part.strip()))
        name, value = part.split('=', 1)
        name = name.strip()
        if name in assignment:
            raise QueryError("'{}' assigned twice".format(name))
        try:
            assignment[name] = parse_number(value)
        except ValueError as e:
            raise QueryError(str(e)) from None
    return assignment
