#!/usr/bin/env python3

"""
Variational direct causal effects.

For an outcome Y = g(X, Z) and each stratum Z=z, the weighted outcome changes
along increasing chains of Supp(X) are aggregated four ways:

    peace   consecutive pairs of the whole support
    pace    the best chain (maximum-weight increasing subsequence)
    space   the best single pair
    apace   every pair

The pair term for x < x' is delta(g(x', z) - g(x, z)) * weight(P(x'|z), P(x|z), d)
where delta is |.|, the positive part or the negative part, and the weight
(4pq)^d already carries the normalization. The effect is the expectation of
the per-stratum value over Z.
"""

import dataclasses
import itertools
import logging
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np

from errors import BindingError, ModelError, QueryError, ZeroProbabilityError
from expression import BinOp, Const, Name, format_number
from probengine import build_joint, expectation, interventional_joint, marginal
from semmodel import (CPT, Deterministic, FiniteSupport, Parameter, Partition, Root, Variable,
                      check)

logger = logging.getLogger(__name__)

VARIANTS = ('pace', 'peace', 'space', 'apace')
SIGNS = ('abs', 'positive', 'negative')

MAX_TOLERANCE = 1e-12
BRUTE_FORCE_LIMIT = 20


@dataclass(frozen=True)
class EffectQuery:
    cause: str
    outcome: str
    degree: float = 1.0
    variant: str = 'pace'
    sign: str = 'abs'

    def __post_init__(self):
        degree = float(self.degree)
        if not math.isfinite(degree) or degree < 0:
            raise QueryError('degree must be a finite number >= 0, got {}'.format(self.degree))
        variant = self.variant.lower()
        if variant not in VARIANTS:
            raise QueryError("unknown variant '{}', expected one of {}".format(self.variant, ', '.join(VARIANTS)))
        sign = self.sign.lower()
        if sign not in SIGNS:
            raise QueryError("unknown sign '{}', expected one of {}".format(self.sign, ', '.join(SIGNS)))
        object.__setattr__(self, 'degree', degree)
        object.__setattr__(self, 'variant', variant)
        object.__setattr__(self, 'sign', sign)

    def at_degree(self, degree):
        return dataclasses.replace(self, degree=degree)

    def with_sign(self, sign):
        return dataclasses.replace(self, sign=sign)

    def describe(self):
        suffix = {'abs': '', 'positive': '+', 'negative': '-'}[self.sign]
        return '{}{}_{}({} -> {})'.format(self.variant.upper(), suffix, format_number(self.degree),
                                         self.cause, self.outcome)


@dataclass
class StratumEffect:
    z: Dict[str, float]
    probability: float
    value: float
    witness: Optional[Tuple[float, ...]] = None


@dataclass
class EffectReport:
    query: EffectQuery
    value: float
    breakdown: List[StratumEffect] = field(default_factory=list)

    def to_dict(self):
        return {
            'query': {'cause': self.query.cause, 'outcome': self.query.outcome},
            'degree': self.query.degree,
            'variant': self.query.variant,
            'sign': self.query.sign,
            'value': self.value,
            'breakdown': [{
                'z': dict(entry.z),
                'probability': entry.probability,
                'value': entry.value,
                'witness': list(entry.witness) if entry.witness is not None else None,
            } for entry in self.breakdown],
        }


# Pair weights and terms


def weight(p, q, d):
    """
    Normalized natural-availability weight (4pq)^d, and 0 when p or q is 0
    for every d including d = 0.
    """
    if p <= 0.0 or q <= 0.0:
        return 0.0
    return (4.0 * p * q) ** d


def weight_matrix(probs, degree):
    p = np.asarray(probs, dtype=float)
    product = 4.0 * np.outer(p, p)
    result = np.zeros_like(product)
    positive = product > 0
    result[positive] = product[positive] ** degree
    return result


def _delta(differences, sign):
    if sign == 'abs':
        return np.abs(differences)
    if sign == 'positive':
        return np.maximum(differences, 0.0)
    if sign == 'negative':
        return np.maximum(-differences, 0.0)
    raise QueryError("unknown sign '{}'".format(sign))


def pair_differences(outcomes, sign):
    g = np.asarray(outcomes, dtype=float)
    # [i, j] holds delta(g[j] - g[i])
    return _delta(g[np.newaxis, :] - g[:, np.newaxis], sign)


def pair_terms(outcomes, probs, degree, sign):
    """
    Strictly upper-triangular matrix of weighted pair terms. Pairs with zero
    weight are 0 even when an outcome is undefined (NaN).
    """
    differences = pair_differences(outcomes, sign)
    weights = weight_matrix(probs, degree)
    n = weights.shape[0]
    upper = np.triu(np.ones((n, n), dtype=bool), k=1)
    return np.where(upper & (weights > 0), differences, 0.0) * weights


def needed_pairs(n, variant):
    if variant == 'peace':
        return np.eye(n, k=1, dtype=bool)
    return np.triu(np.ones((n, n), dtype=bool), k=1)


# Chain optimization


def _better(value, chain, best_value, best_chain):
    # Larger value wins; within tolerance prefer fewer points, then the lexicographically smaller chain
    if best_chain is None:
        return True
    if value > best_value + MAX_TOLERANCE:
        return True
    if value < best_value - MAX_TOLERANCE:
        return False
    return (len(chain), chain) < (len(best_chain), best_chain)


def chain_value(terms, chain):
    return float(sum(terms[a, b] for a, b in zip(chain, chain[1:])))


def best_chain(terms):
    """
    Maximum-weight increasing chain by dynamic programming:
    f(j) = max(0, max over i < j of f(i) + w(i, j)).
    """
    n = terms.shape[0]
    if n < 2:
        return 0.0, None

    ending = [(0.0, (j,)) for j in range(n)]
    best_value, best = 0.0, None
    for j in range(1, n):
        candidate_value, candidate = None, None
        for i in range(j):
            value = ending[i][0] + float(terms[i, j])
            chain = ending[i][1] + (j,)
            if _better(value, chain, candidate_value, candidate):
                candidate_value, candidate = value, chain
        if _better(candidate_value, candidate, best_value, best):
            best_value, best = candidate_value, candidate
        if _better(candidate_value, candidate, 0.0, (j,)):
            ending[j] = (candidate_value, candidate)
    return best_value, best


def best_pair(terms):
    n = terms.shape[0]
    best_value, best = 0.0, None
    for i, j in itertools.combinations(range(n), 2):
        value = float(terms[i, j])
        if _better(value, (i, j), best_value, best):
            best_value, best = value, (i, j)
    return best_value, best


def exhaustive_chain(terms):
    n = terms.shape[0]
    best_value, best = 0.0, None
    for size in range(2, n + 1):
        for chain in itertools.combinations(range(n), size):
            value = chain_value(terms, chain)
            if _better(value, chain, best_value, best):
                best_value, best = value, chain
    return best_value, best


def variation(terms, variant):
    """
    Aggregate a pair-term matrix; returns (value, witness indices or None).
    """
    n = terms.shape[0]
    if variant == 'pace':
        return best_chain(terms)
    if variant == 'space':
        return best_pair(terms)
    if variant == 'peace':
        return (chain_value(terms, tuple(range(n))) if n >= 2 else 0.0), None
    if variant == 'apace':
        return float(terms.sum()), None
    raise QueryError("unknown variant '{}'".format(variant))


def stratum_variation(outcomes, probs, degree, variant, sign, subset=None):
    outcomes = np.asarray(outcomes, dtype=float)
    probs = np.asarray(probs, dtype=float)
    if subset is not None:
        subset = list(subset)
        outcomes = outcomes[subset]
        probs = probs[subset]
    value, witness = variation(pair_terms(outcomes, probs, degree, sign), variant)
    if witness is not None and subset is not None:
        witness = tuple(subset[i] for i in witness)
    return value, witness


# Strata of a query


def check_query(model, query):
    """
    Return the adjustment set Z = parents(Y) without X.
    """
    model.variable(query.cause)
    model.variable(query.outcome)
    mechanism = model.mechanism(query.outcome)
    if not isinstance(mechanism, Deterministic):
        raise QueryError("outcome '{}' is not deterministic; convert it with cpt_to_noise first".format(query.outcome))
    if query.cause not in mechanism.parents:
        raise QueryError("'{}' is not a parent of '{}'".format(query.cause, query.outcome))
    return tuple(p for p in mechanism.parents if p != query.cause)


def _slices(joint, cause, given):
    # (z index, z assignment, P(z), P(X | z)) for every z, zero-mass strata included
    table = marginal(joint, [cause] + list(given)).table
    supports = [joint.support(g) for g in given]
    for zi in np.ndindex(*table.shape[1:]):
        column = table[(slice(None),) + zi]
        pz = float(column.sum())
        z = {g: s[i] for g, s, i in zip(given, supports, zi)}
        yield zi, z, pz, (column / pz if pz > 0 else column)


def _outcome_grid(model, cause, outcome, given):
    support = model.support(cause)
    shape = (len(support),) + tuple(len(model.support(g)) for g in given)
    grid = np.empty(shape)
    parents = model.parents(outcome)
    for key, value in model.outcome_table(outcome).items():
        assignment = dict(zip(parents, key))
        index = (support.index(assignment[cause]),) + tuple(model.support(g).index(assignment[g]) for g in given)
        grid[index] = value
    return grid


class _Stratum:
    def __init__(self, model, query, z, joint=None):
        given = check_query(model, query)
        z = dict(z or {})
        extra = [k for k in z if k not in given]
        missing = [g for g in given if g not in z]
        if extra or missing:
            raise QueryError('z must assign exactly {{{}}}'.format(', '.join(given)))
        joint = joint if joint is not None else build_joint(model)
        self.support = model.support(query.cause)
        index = tuple(model.support(g).index(z[g]) for g in given)
        table = marginal(joint, [query.cause] + list(given)).table
        column = table[(slice(None),) + index]
        self.pz = float(column.sum())
        if self.pz <= 0:
            raise ZeroProbabilityError('stratum ({}) has probability zero'.format(
                ', '.join('{}={}'.format(k, format_number(v)) for k, v in z.items())))
        self.probs = column / self.pz
        self.outcomes = _outcome_grid(model, query.cause, query.outcome, given)[(slice(None),) + index]
        self.query = query


def g_in(model, outcome, assignment):
    """
    Evaluate the outcome mechanism with all of its parents set by intervention.
    """
    return model.outcome(outcome, assignment)


def piev(model, query, z, partition, joint=None):
    stratum = _Stratum(model, query, z, joint)
    partition.check(stratum.support)
    terms = pair_terms(stratum.outcomes, stratum.probs, query.degree, query.sign)
    return chain_value(terms, partition.indices)


def piv(model, query, z, joint=None):
    stratum = _Stratum(model, query, z, joint)
    value, chain = best_chain(pair_terms(stratum.outcomes, stratum.probs, query.degree, query.sign))
    return value, (Partition(chain) if chain is not None else None)


def spiv(model, query, z, joint=None):
    stratum = _Stratum(model, query, z, joint)
    value, pair = best_pair(pair_terms(stratum.outcomes, stratum.probs, query.degree, query.sign))
    return value, (Partition(pair) if pair is not None else None)


def apiv(model, query, z, joint=None):
    stratum = _Stratum(model, query, z, joint)
    return float(pair_terms(stratum.outcomes, stratum.probs, query.degree, query.sign).sum())


def brute_force_piv(model, query, z, joint=None):
    stratum = _Stratum(model, query, z, joint)
    if len(stratum.support) > BRUTE_FORCE_LIMIT:
        raise QueryError('support of {} has {} values; brute force is limited to {}'.format(
            query.cause, len(stratum.support), BRUTE_FORCE_LIMIT))
    value, chain = exhaustive_chain(pair_terms(stratum.outcomes, stratum.probs, query.degree, query.sign))
    return value, (Partition(chain) if chain is not None else None)


def interventional_variation(model, query, z, joint=None):
    # Unweighted variation over the whole support, the d-free bound of piv
    stratum = _Stratum(model, query, z, joint)
    differences = pair_differences(stratum.outcomes, query.sign)
    n = len(stratum.support)
    return float(sum(differences[i, i + 1] for i in range(n - 1)))


# Matrix representation


def difference_matrix(outcomes, chain, sign):
    g = np.asarray(outcomes, dtype=float)
    n = len(g)
    matrix = np.zeros((n, n))
    for a, b in zip(chain, chain[1:]):
        matrix[a, b] = _delta(g[b] - g[a], sign)
    return matrix


def all_pairs_matrix(outcomes, sign):
    return np.triu(pair_differences(outcomes, sign), k=1)


def quadratic_form(matrix, probs, degree):
    p = np.asarray(probs, dtype=float)
    v = np.where(p > 0, p ** degree, 0.0)
    return float(v @ matrix @ v)


def matrix_form_piev(model, query, z, partition, joint=None, normalized=True):
    stratum = _Stratum(model, query, z, joint)
    partition.check(stratum.support)
    matrix = difference_matrix(stratum.outcomes, partition.indices, query.sign)
    value = quadratic_form(matrix, stratum.probs, query.degree)
    return value * 4.0 ** query.degree if normalized else value


def matrix_form_apiv(model, query, z, joint=None, normalized=True):
    stratum = _Stratum(model, query, z, joint)
    matrix = all_pairs_matrix(stratum.outcomes, query.sign)
    value = quadratic_form(matrix, stratum.probs, query.degree)
    return value * 4.0 ** query.degree if normalized else value


# Effects


def effect(model, query, joint=None, restrict=None):
    """
    Expectation over Z of the per-stratum variation; strata with P(z) = 0
    are skipped. restrict limits the chain to a subset of Supp(X) while
    keeping the conditional probabilities.
    """
    given = check_query(model, query)
    joint = joint if joint is not None else build_joint(model)
    support = model.support(query.cause)
    grid = _outcome_grid(model, query.cause, query.outcome, given)

    subset = None
    if restrict is not None:
        subset = sorted(set(support.index(v) for v in restrict))

    breakdown = []
    total = 0.0
    for zi, z, pz, probs in _slices(joint, query.cause, given):
        if pz <= 0:
            continue
        outcomes = grid[(slice(None),) + zi]
        value, witness = stratum_variation(outcomes, probs, query.degree, query.variant, query.sign, subset)
        witness = tuple(support[i] for i in witness) if witness is not None else None
        breakdown.append(StratumEffect(z, pz, value, witness))
        total += pz * value
        logger.debug('%s at z=%s: %.12g witness %s', query.describe(), z, value, witness)

    return EffectReport(query, total, breakdown)


def degree_grid(steps, maximum=1.0):
    """
    Degrees d_i = i * maximum / steps for i = 0..steps.
    """
    if steps < 1:
        raise QueryError('a degree grid needs at least one step')
    if maximum < 0:
        raise QueryError('the largest degree must be >= 0')
    return [i * maximum / steps for i in range(steps + 1)]


def pace_vector(model, query, grid, joint=None):
    grid = [float(d) for d in grid]
    if any(d < 0 for d in grid):
        raise QueryError('degrees must be >= 0')
    if any(b < a for a, b in zip(grid, grid[1:])):
        raise QueryError('degree grid must be ascending')
    joint = joint if joint is not None else build_joint(model)
    return [effect(model, query.at_degree(d), joint).value for d in grid]


def monotonicity_report(model, query, grid, joint=None):
    """
    Consecutive grid degrees where the effect decreases, as (d1, v1, d2, v2).
    """
    grid = sorted(float(d) for d in grid)
    values = pace_vector(model, query, grid, joint)
    decreases = []
    for (d1, v1), (d2, v2) in zip(zip(grid, values), zip(grid[1:], values[1:])):
        if v2 < v1 - MAX_TOLERANCE:
            decreases.append((d1, v1, d2, v2))
            logger.warning('%s decreases from %.12g at d=%s to %.12g at d=%s',
                           query.describe(), v1, format_number(d1), v2, format_number(d2))
    return decreases


def signed_decomposition(model, query, joint=None):
    joint = joint if joint is not None else build_joint(model)
    return {sign: effect(model, query.with_sign(sign), joint).value for sign in SIGNS}


def natural_availability(model, cause, given, degree, variant='pace', sign='abs', joint=None):
    """
    The variational family applied to X itself: how available changes of X
    are given Z.
    """
    model.variable(cause)
    given = list(given)
    for g in given:
        model.variable(g)
        if g == cause:
            raise QueryError('the cause cannot be part of Z')
    query = EffectQuery(cause, cause, degree, variant, sign)
    joint = joint if joint is not None else build_joint(model)
    outcomes = np.asarray(model.support(cause).values)
    total = 0.0
    for zi, z, pz, probs in _slices(joint, cause, given):
        if pz <= 0:
            continue
        value, _ = stratum_variation(outcomes, probs, query.degree, query.variant, query.sign)
        total += pz * value
    return total


def ace_flavored_effect(model, cause, outcome, degree, variant='pace', sign='abs', joint=None):
    """
    Variation of the interventional means E(Y | do(X=x)) weighted by the
    marginal distribution of X; there is no stratification by Z.
    """
    query = EffectQuery(cause, outcome, degree, variant, sign)
    model.variable(outcome)
    joint = joint if joint is not None else build_joint(model)
    probs = marginal(joint, [cause]).table
    means = [expectation(interventional_joint(model, {cause: x}), outcome) for x in model.support(cause)]
    value, _ = stratum_variation(means, probs, query.degree, query.variant, query.sign)
    return value


# Model transformations


def eliminate_mediator(model, mediator):
    """
    Substitute a deterministic mediator into its children and drop it.
    """
    mechanism = model.mechanism(mediator)
    if not isinstance(mechanism, Deterministic):
        raise ModelError("mediator '{}' is stochastic; only deterministic mediators can be eliminated".format(mediator))

    result = model
    for child in model.children(mediator):
        child_mechanism = model.mechanism(child)
        parents = []
        for p in child_mechanism.parents:
            if p == mediator:
                parents.extend(q for q in mechanism.parents if q not in parents and q not in child_mechanism.parents)
            else:
                parents.append(p)
        parents = tuple(parents)

        if isinstance(child_mechanism, Deterministic) and child_mechanism.body is not None and mechanism.body is not None:
            replacement = Deterministic(parents, body=child_mechanism.body.substitute({mediator: mechanism.body}))
        else:
            lookup = {}
            rows = {}
            for key in itertools.product(*(model.support(p).values for p in parents)):
                env = dict(zip(parents, key))
                env[mediator] = model.outcome(mediator, env)
                if isinstance(child_mechanism, CPT):
                    rows[key] = child_mechanism.rows[tuple(env[p] for p in child_mechanism.parents)]
                else:
                    lookup[key] = model.outcome(child, env)
            if isinstance(child_mechanism, CPT):
                replacement = CPT(parents, rows) if parents else Root(rows[()])
            elif parents:
                replacement = Deterministic(parents, lookup=lookup)
            else:
                replacement = Deterministic((), body=Const(lookup[()]))
        result = result.replace_mechanism(child, replacement)
        logger.debug('substituted %s into %s, parents now %s', mediator, child, ', '.join(parents))

    return check(result.remove_variable(mediator))


def _fresh_name(model, base):
    taken = set(model.names) | {p.name for p in model.parameters}
    name = base
    suffix = 2
    while name in taken:
        name = '{}_{}'.format(base, suffix)
        suffix += 1
    return name


def cpt_to_noise(model, node, noise_name=None, free_parameter=None):
    """
    Rewrite a binary stochastic node as a deterministic function of its
    parents and a binary noise U. U=0 gives the row's more probable outcome
    (ties go to the lower value) and U=1 the other, so P(U=1 | row) is the
    minority probability. Rows whose outcome is certain ignore U; their
    noise row is uniform, or B(free_parameter) when a parameter name is given.
    """
    mechanism = model.mechanism(node)
    if isinstance(mechanism, Root):
        parents, rows = (), {(): mechanism.table}
    elif isinstance(mechanism, CPT):
        parents, rows = mechanism.parents, mechanism.rows
    else:
        raise ModelError("'{}' is already deterministic".format(node))

    support = model.support(node)
    if len(support) != 2:
        raise ModelError("'{}' has {} values; noise conversion needs a binary outcome".format(node, len(support)))
    low, high = support.values

    name = noise_name if noise_name is not None else _fresh_name(model, 'U_' + node)
    if model.has_variable(name):
        raise ModelError("duplicate variable '{}'".format(name))

    if free_parameter is not None:
        if model.has_variable(free_parameter):
            raise ModelError("parameter '{}' clashes with a variable".format(free_parameter))
        if not any(p.name == free_parameter for p in model.parameters):
            model = model.with_parameter(Parameter(free_parameter, 0.0, 1.0))
        certain_row = {0.0: BinOp('-', Const(1.0), Name(free_parameter)), 1.0: Name(free_parameter)}
    else:
        certain_row = {0.0: Const(0.5), 1.0: Const(0.5)}

    lookup = {}
    noise_rows = {}
    for key, table in rows.items():
        for e in table.values():
            if not e.is_constant():
                raise BindingError("row of '{}' references parameters; bind the model first".format(node))
        p_low = table[low].evaluate({}) if low in table else 0.0
        p_high = table[high].evaluate({}) if high in table else 0.0
        modal, other = (high, low) if p_high > p_low else (low, high)
        minority = min(p_low, p_high)
        if minority <= 0.0:
            lookup[key + (0.0,)] = modal
            lookup[key + (1.0,)] = modal
            noise_rows[key] = dict(certain_row)
        else:
            lookup[key + (0.0,)] = modal
            lookup[key + (1.0,)] = other
            noise_rows[key] = {0.0: Const(1.0 - minority), 1.0: Const(minority)}

    noise_mechanism = Root(noise_rows[()]) if not parents else CPT(parents, noise_rows)
    result = model.insert_variable(Variable(name, FiniteSupport((0.0, 1.0))), noise_mechanism, before=node)
    result = result.replace_mechanism(node, Deterministic(parents + (name,), lookup=lookup))
    logger.info('rewrote %s as a function of %s with noise %s', node, ', '.join(parents + (name,)), name)
    return result
