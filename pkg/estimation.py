#!/usr/bin/env python3

"""
Plug-in estimation of the variational effects from observational records.

Under separability and conditional ignorability the effect only needs
E(Y | x, z), P(x | z) and P(z); these are estimated as empirical means and
frequencies per stratum and fed into the same chain machinery as the exact
engine. Swapping the empirical tables for exact ones gives the population
value.
"""

import dataclasses
import logging
from dataclasses import dataclass
from typing import List, Tuple

import numpy as np
import pandas as pd

from errors import DatasetError, QueryError, UnavailableStratumError
from expression import format_number
from probengine import build_joint, marginal, sample
from variational import EffectQuery, needed_pairs, pair_terms, variation

logger = logging.getLogger(__name__)


class Dataset:
    """
    Rectangular numeric records. Columns with a declared support are checked
    against it and snapped to its values.
    """

    def __init__(self, frame, supports=None):
        if len(frame.columns) == 0 or len(frame) == 0:
            raise DatasetError('dataset has no records')
        if frame.isnull().values.any():
            rows = frame.index[frame.isnull().any(axis=1)].tolist()
            raise DatasetError('missing values in row(s) {}'.format(', '.join(str(r + 1) for r in rows[:5])))
        try:
            frame = frame.astype(float)
        except (TypeError, ValueError) as e:
            raise DatasetError('non-numeric value: {}'.format(e)) from None

        self.supports = dict(supports or {})
        for name, support in self.supports.items():
            if name not in frame.columns:
                continue
            snapped = {}
            for value in frame[name].unique():
                i = support.find(value)
                if i is None:
                    raise DatasetError("value {} of column '{}' is outside its support".format(
                        format_number(value), name))
                snapped[value] = support[i]
            frame[name] = frame[name].map(snapped)
        self.frame = frame.reset_index(drop=True)

    @property
    def columns(self):
        return tuple(self.frame.columns)

    def __len__(self):
        return len(self.frame)

    def check_column(self, name):
        if name not in self.frame.columns:
            raise DatasetError("dataset has no column '{}'".format(name))

    def values_of(self, name):
        self.check_column(name)
        if name in self.supports:
            return np.asarray(self.supports[name].values, dtype=float)
        return np.sort(self.frame[name].unique())

    def subset(self, name, value):
        self.check_column(name)
        return self.frame[self.frame[name] == value]

    @classmethod
    def from_csv(cls, path, supports=None):
        try:
            frame = pd.read_csv(path, skipinitialspace=True)
        except (pd.errors.ParserError, pd.errors.EmptyDataError) as e:
            raise DatasetError('{}: {}'.format(path, e)) from None
        return cls(frame, supports)

    @classmethod
    def from_joint_sample(cls, joint, n, seed=None):
        return cls(sample(joint, n, seed), dict(zip(joint.variables, joint.supports)))

    @classmethod
    def from_model(cls, model, n, seed=None):
        return cls.from_joint_sample(build_joint(model), n, seed)

    def to_csv(self, path):
        self.frame.to_csv(path, index=False, float_format='%.12g')


def sample_dataset(model, n, seed=None):
    return Dataset.from_model(model, n, seed)


@dataclass
class Conditionals:
    """
    Per stratum z: P(z), P(x | z) and E(Y | x, z) over the cause values,
    NaN where no record supports the mean.
    """
    cause: str
    outcome: str
    given: Tuple[str, ...]
    x_values: np.ndarray
    strata: List[Tuple[float, ...]]
    pz: np.ndarray
    px: np.ndarray
    means: np.ndarray

    def stratum_index(self, z):
        try:
            return self.strata.index(tuple(float(v) for v in z))
        except ValueError:
            raise UnavailableStratumError('no records in stratum ({})'.format(
                ', '.join('{}={}'.format(g, format_number(v)) for g, v in zip(self.given, z)))) from None


def _groups(frame, given):
    if not given:
        yield (), frame
        return
    for key, group in frame.groupby(list(given), sort=True):
        yield (key if isinstance(key, tuple) else (key,)), group


def estimate_conditionals(dataset, cause, outcome, given=(), x_values=None):
    given = tuple(given)
    for name in (cause, outcome) + given:
        dataset.check_column(name)
    if cause in given:
        raise QueryError('the cause cannot be part of Z')
    x_values = dataset.values_of(cause) if x_values is None else np.asarray(x_values, dtype=float)

    n = len(dataset)
    strata, pz, px, means = [], [], [], []
    for key, group in _groups(dataset.frame, given):
        counts = group[cause].value_counts()
        averages = group[outcome].groupby(group[cause]).mean()
        strata.append(tuple(float(k) for k in key))
        pz.append(len(group) / n)
        px.append([counts.get(x, 0) / len(group) for x in x_values])
        means.append([averages.get(x, np.nan) for x in x_values])

    return Conditionals(cause, outcome, given, x_values, strata, np.asarray(pz), np.asarray(px),
                        np.asarray(means, dtype=float))


def population_conditionals(model, cause, outcome, given=(), joint=None):
    """
    The exact counterpart of estimate_conditionals.
    """
    given = tuple(given)
    joint = joint if joint is not None else build_joint(model)
    table = marginal(joint, (cause,) + given + (outcome,)).table
    y_values = np.asarray(model.support(outcome).values)
    pxz = table.sum(axis=-1)
    weighted = (table * y_values).sum(axis=-1)
    supports = [model.support(g) for g in given]

    strata, pz, px, means = [], [], [], []
    for zi in np.ndindex(*pxz.shape[1:]):
        column = pxz[(slice(None),) + zi]
        mass = float(column.sum())
        if mass <= 0:
            continue
        strata.append(tuple(s[i] for s, i in zip(supports, zi)))
        pz.append(mass)
        px.append(column / mass)
        means.append(np.divide(weighted[(slice(None),) + zi], column,
                               out=np.full(len(column), np.nan), where=column > 0))

    return Conditionals(cause, outcome, given, np.asarray(model.support(cause).values, dtype=float), strata,
                        np.asarray(pz), np.asarray(px), np.asarray(means, dtype=float))


def plugin_effect(conditionals, degree, variant='pace', sign='abs'):
    """
    E_Z of the chosen variation with E(Y | x, z) in place of g. Every pair
    the variant reads must have both means available.
    """
    query = EffectQuery(conditionals.cause, conditionals.outcome, degree, variant, sign)
    needed = needed_pairs(len(conditionals.x_values), query.variant)

    total = 0.0
    for k, z in enumerate(conditionals.strata):
        terms = pair_terms(conditionals.means[k], conditionals.px[k], query.degree, query.sign)
        missing = needed & np.isnan(terms)
        if missing.any():
            i, j = np.argwhere(missing)[0]
            raise UnavailableStratumError('no records for {} in ({}) at {}={} or {}={}'.format(
                conditionals.outcome,
                ', '.join('{}={}'.format(g, format_number(v)) for g, v in zip(conditionals.given, z)),
                conditionals.cause, format_number(conditionals.x_values[i]),
                conditionals.cause, format_number(conditionals.x_values[j])))
        value, _ = variation(np.where(needed, terms, 0.0), query.variant)
        total += conditionals.pz[k] * value
    return total


def identifiable_effect(dataset, cause, outcome, given, degree, variant='pace', sign='abs'):
    return plugin_effect(estimate_conditionals(dataset, cause, outcome, given), degree, variant, sign)


def covariate_weighted_effect(dataset, cause, outcome, given, covariate, c0, degree, variant='pace', sign='abs'):
    """
    Outcome differences read at the covariate value c0, weighted by
    P(x | z) with the covariate marginalized out.
    """
    given = tuple(given)
    if covariate in given or covariate in (cause, outcome):
        raise QueryError("covariate '{}' must differ from the cause, the outcome and Z".format(covariate))
    base = estimate_conditionals(dataset, cause, outcome, given)
    records = dataset.subset(covariate, c0)
    if len(records) == 0:
        raise UnavailableStratumError('no records with {}={}'.format(covariate, format_number(c0)))

    at_c0 = estimate_conditionals(Dataset(records, dataset.supports), cause, outcome, given, base.x_values)
    means = np.full(base.means.shape, np.nan)
    for k, z in enumerate(base.strata):
        if z in at_c0.strata:
            means[k] = at_c0.means[at_c0.strata.index(z)]
    return plugin_effect(dataclasses.replace(base, means=means), degree, variant, sign)


def natural_availability_estimate(dataset, cause, given, degree, variant='pace', sign='abs'):
    return plugin_effect(estimate_conditionals(dataset, cause, cause, given), degree, variant, sign)
