#!/usr/bin/env python3

"""
Reference causal measures to compare the variational effects against.
"""

import itertools
import logging

import networkx as nx
import pandas as pd

from counterfactual import prior, propagate
from errors import ModelError, PositivityError, QueryError
from expression import format_number
from probengine import (build_joint, conditional, conditional_mutual_information, expectation,
                        interventional_joint, joint_from_factors, kl_divergence, marginal, mutual_information,
                        node_factor, probability)
from semmodel import CPT, Root
from variational import cpt_to_noise

logger = logging.getLogger(__name__)


def _interventional_mean(model, do, outcome, condition=None):
    return expectation(interventional_joint(model, do), outcome, condition)


def ace(model, cause, x0, x1, outcome):
    """
    E(Y | do(X=x1)) - E(Y | do(X=x0))
    """
    model.variable(outcome)
    return _interventional_mean(model, {cause: x1}, outcome) - _interventional_mean(model, {cause: x0}, outcome)


def cace(model, cause, x0, x1, outcome, condition):
    """
    ACE restricted to a covariate event, evaluated in each intervened world.
    """
    model.variable(outcome)
    return (_interventional_mean(model, {cause: x1}, outcome, condition)
            - _interventional_mean(model, {cause: x0}, outcome, condition))


def acde(model, cause, x0, x1, outcome, controlled=()):
    """
    Controlled direct effect averaged over the observational distribution of
    the controlled variables.
    """
    controlled = list(controlled)
    for name in controlled:
        model.variable(name)
        if name in (cause, outcome):
            raise QueryError("'{}' cannot be controlled in its own effect".format(name))
    if not controlled:
        return ace(model, cause, x0, x1, outcome)

    weights = marginal(build_joint(model), controlled)
    total = 0.0
    for values, p in weights.items():
        if p <= 0:
            continue
        fixed = dict(zip(controlled, values))
        difference = (_interventional_mean(model, dict(fixed, **{cause: x1}), outcome)
                      - _interventional_mean(model, dict(fixed, **{cause: x0}), outcome))
        total += p * difference
    return total


def functional_form(model, cause):
    """
    Convert every table node downstream of the cause into a function of its
    parents and a noise variable, so that it responds to interventions.
    """
    downstream = nx.descendants(model.graph(), cause)
    result = model
    for name in model.names:
        if name not in downstream:
            continue
        if isinstance(model.mechanism(name), (CPT, Root)):
            if len(model.support(name)) != 2:
                raise ModelError("'{}' is a non-binary table node downstream of '{}'; "
                                 "natural effects need a functional model".format(name, cause))
            result = cpt_to_noise(result, name)
    return result


def ande(model, cause, x0, x1, outcome, mediators):
    """
    Natural direct effect E(Y(x1, M(x0))) - E(Y(x0)) over the latent
    configurations of the functional form.
    """
    mediators = list(mediators)
    for name in mediators + [outcome]:
        model.variable(name)
        if name == cause:
            raise QueryError("'{}' cannot mediate its own effect".format(name))
    model = functional_form(model, cause)
    latents = prior(model)

    total = 0.0
    for values, p in latents.items():
        if p <= 0:
            continue
        u = dict(zip(latents.variables, values))
        baseline = propagate(model, u, {cause: x0})
        do = {m: baseline[m] for m in mediators}
        do[cause] = x1
        crossed = propagate(model, u, do)
        total += p * (crossed[outcome] - baseline[outcome])
    return total


# Causal strength of arrows


def _check_arrows(model, arrows):
    arrows = [tuple(a) for a in arrows]
    for source, target in arrows:
        model.variable(source)
        if source not in model.parents(target):
            raise QueryError('no arrow {} -> {}'.format(source, target))
    return arrows


def post_cutting_joint(model, arrows, joint=None):
    """
    Joint after feeding every cut arrow with the independent marginal of its
    source instead of the source itself.
    """
    arrows = _check_arrows(model, arrows)
    joint = joint if joint is not None else build_joint(model)

    factors = {name: node_factor(model, name) for name in model.names}
    for target, group in itertools.groupby(sorted(arrows, key=lambda a: model.names.index(a[1])),
                                           key=lambda a: a[1]):
        factor_vars, factor = factors[target]
        factor_vars = list(factor_vars)
        for source, _ in group:
            axis = factor_vars.index(source)
            weights = marginal(joint, [source]).table
            shape = [1] * factor.ndim
            shape[axis] = len(weights)
            factor = (factor * weights.reshape(shape)).sum(axis=axis)
            del factor_vars[axis]
        factors[target] = (tuple(factor_vars), factor)
    return joint_from_factors(model, factors)


def janzing_strength(model, arrows, joint=None):
    joint = joint if joint is not None else build_joint(model)
    cut = post_cutting_joint(model, arrows, joint)
    value = kl_divergence(joint, cut)
    logger.debug('strength of %s: %.12g', ', '.join('{}->{}'.format(*a) for a in arrows), value)
    return value


def _check_parent(model, cause, outcome):
    model.variable(outcome)
    if cause not in model.parents(outcome):
        raise QueryError("'{}' is not a parent of '{}'".format(cause, outcome))


def mi_strength(model, cause, outcome, joint=None):
    _check_parent(model, cause, outcome)
    joint = joint if joint is not None else build_joint(model)
    return mutual_information(joint, cause, outcome)


def cmi_strength(model, cause, outcome, joint=None):
    _check_parent(model, cause, outcome)
    joint = joint if joint is not None else build_joint(model)
    others = [p for p in model.parents(outcome) if p != cause]
    return conditional_mutual_information(joint, cause, outcome, others)


# Inverse probability weighting


def ipwe(dataset, treatment, s, outcome, covariates=()):
    """
    (1/n) sum of y_i 1[s_i = s] / P(s | c_i), propensities taken as
    empirical frequencies within each covariate stratum.
    """
    frame = getattr(dataset, 'frame', dataset)
    covariates = list(covariates)
    for name in [treatment, outcome] + covariates:
        if name not in frame.columns:
            raise QueryError("unknown variable '{}'".format(name))

    treated = frame[treatment] == s
    if not treated.any():
        raise PositivityError('no record has {}={}'.format(treatment, format_number(s)))
    if covariates:
        propensity = treated.astype(float).groupby([frame[c] for c in covariates]).transform('mean')
    else:
        propensity = pd.Series(treated.mean(), index=frame.index)

    if (propensity[treated] <= 0).any():
        raise PositivityError('zero propensity for {}={}'.format(treatment, format_number(s)))
    return float((frame[outcome][treated] / propensity[treated]).sum() / len(frame))


def ipwe_population(model, treatment, s, outcome, covariates=(), joint=None):
    """
    The infinite-data limit of ipwe: sum over c of P(c) E(Y | s, c).
    """
    covariates = list(covariates)
    joint = joint if joint is not None else build_joint(model)
    model.support(treatment).index(s)
    weights = marginal(joint, covariates)

    total = 0.0
    for values, pc in weights.items():
        if pc <= 0:
            continue
        stratum = dict(zip(covariates, values))
        if probability(joint, dict(stratum, **{treatment: s})) <= 0:
            raise PositivityError('zero propensity for {}={} at ({})'.format(
                treatment, format_number(s), ', '.join('{}={}'.format(k, format_number(v)) for k, v in stratum.items())))
        total += pc * conditional(joint, [outcome], dict(stratum, **{treatment: s})).expectation()
    return total
