import itertools
import logging

import numpy as np
import pytest

from errors import ModelError, QueryError, ZeroProbabilityError
from expression import BinOp, Call, Const, Name
from probengine import build_joint, marginal
from semmodel import CPT, Deterministic, FiniteSupport, Model, Partition, Root, Variable, bind
from variational import (EffectQuery, ace_flavored_effect, apiv, best_chain, brute_force_piv, chain_value,
                         cpt_to_noise, degree_grid, effect, eliminate_mediator, exhaustive_chain, g_in,
                         interventional_variation, matrix_form_apiv, matrix_form_piev, monotonicity_report,
                         natural_availability, pace_vector, pair_terms, piev, piv, signed_decomposition, spiv,
                         stratum_variation, weight)

from conftest import load, pace_r, pace_s
from modelgen import random_query_model, random_row


def test_weight():
    assert weight(0.5, 0.5, 3.0) == 1.0
    assert weight(0.25, 0.5, 1.0) == 0.5
    assert weight(0.0, 0.5, 0.0) == 0.0
    assert weight(0.3, 0.7, 0.0) == 1.0


def test_query_normalization():
    q = EffectQuery('X', 'Y', 1, 'PEACE', 'Positive')
    assert q.variant == 'peace'
    assert q.sign == 'positive'
    assert q.describe() == 'PEACE+_1(X -> Y)'
    assert EffectQuery('R', 'W', 0.5).describe() == 'PACE_0.5(R -> W)'
    with pytest.raises(QueryError, match='degree'):
        EffectQuery('X', 'Y', -1)
    with pytest.raises(QueryError, match='unknown variant'):
        EffectQuery('X', 'Y', 1, 'mace')
    with pytest.raises(QueryError, match='unknown sign'):
        EffectQuery('X', 'Y', 1, 'pace', 'both')


@pytest.mark.parametrize('degree', [0, 0.5, 1, 3])
def test_bsc_is_maximal(bsc, degree):
    for variant in ('pace', 'peace', 'space', 'apace'):
        assert effect(bsc, EffectQuery('X', 'Y', degree, variant)).value == pytest.approx(1.0, abs=1e-12)


@pytest.mark.parametrize('p', [0.01, 0.1, 0.5, 0.9])
@pytest.mark.parametrize('degree', [0, 1, 2.5])
def test_rare_disease(p, degree):
    model = load('rare-disease', p=p)
    assert effect(model, EffectQuery('X', 'Y', degree)).value == pytest.approx((4 * p * (1 - p)) ** degree, abs=1e-12)


def test_sprinkler_closed_forms():
    rng = np.random.default_rng(505)
    for p, degree in rng.uniform(0, 1, size=(20, 2)):
        model = load('sprinkler-sem', p=float(p))
        assert effect(model, EffectQuery('R', 'W', degree)).value == pytest.approx(pace_r(p, degree), abs=1e-9)
        assert effect(model, EffectQuery('S', 'W', degree)).value == pytest.approx(pace_s(p, degree), abs=1e-9)


def test_sprinkler_without_free_noise():
    model = load('sprinkler-sem', p=0.0)
    assert effect(model, EffectQuery('R', 'W', 1)).value == pytest.approx(0.6567, abs=1e-4)
    # P(R=1 | S=1, V3=1) = 0, so that stratum carries no weight even at d = 0
    assert effect(model, EffectQuery('R', 'W', 0)).value == pytest.approx(0.7, abs=1e-12)


def test_rain_dominates_sprinkler_on_grid():
    grid = np.round(np.arange(0, 1.0001, 0.05), 2)
    for p in grid:
        model = load('sprinkler-sem', p=float(p))
        joint = build_joint(model)
        for degree in grid:
            rain = effect(model, EffectQuery('R', 'W', degree), joint).value
            sprinkler = effect(model, EffectQuery('S', 'W', degree), joint).value
            assert rain > sprinkler, (p, degree)


def test_noise_conversion_reproduces_functional_sprinkler(sprinkler):
    converted = cpt_to_noise(sprinkler, 'W', free_parameter='p')
    assert converted.names == ('C', 'R', 'S', 'U_W', 'W')
    assert [p.name for p in converted.parameters] == ['p']
    for p in (0.2, 0.6):
        bound = bind(converted, {'p': p})
        original = marginal(build_joint(sprinkler), ['C', 'R', 'S', 'W']).table
        rebuilt = marginal(build_joint(bound), ['C', 'R', 'S', 'W']).table
        np.testing.assert_allclose(rebuilt, original, atol=1e-12)
        assert effect(bound, EffectQuery('R', 'W', 1)).value == pytest.approx(pace_r(p, 1), abs=1e-12)


def test_noise_conversion_default_row_is_uniform(sprinkler):
    converted = cpt_to_noise(sprinkler, 'W')
    assert converted.is_bound()
    row = converted.mechanism('U_W').rows[(1.0, 1.0)]
    assert row[0.0].evaluate({}) == 0.5
    assert converted.outcome('W', {'R': 1, 'S': 1, 'U_W': 0}) == 1.0
    assert converted.outcome('W', {'R': 1, 'S': 1, 'U_W': 1}) == 1.0
    assert converted.outcome('W', {'R': 0, 'S': 0, 'U_W': 1}) == 1.0


def test_noise_conversion_errors(sprinkler, fallback, bsc):
    with pytest.raises(ModelError, match='already deterministic'):
        cpt_to_noise(bsc, 'Y')
    with pytest.raises(ModelError, match='binary'):
        cpt_to_noise(fallback, 'X')
    with pytest.raises(ModelError, match='duplicate'):
        cpt_to_noise(sprinkler, 'W', noise_name='C')
    assert cpt_to_noise(cpt_to_noise(sprinkler, 'W'), 'S').has_variable('U_S')


def test_stochastic_outcome_is_rejected(sprinkler):
    with pytest.raises(QueryError, match='not deterministic'):
        effect(sprinkler, EffectQuery('R', 'W'))


def test_cause_must_be_a_parent():
    model = load('sprinkler-sem', p=0.5)
    with pytest.raises(QueryError, match="'C' is not a parent of 'W'"):
        effect(model, EffectQuery('C', 'W'))
    with pytest.raises(QueryError, match="unknown variable 'Q'"):
        effect(model, EffectQuery('Q', 'W'))


def test_fallback_variants(fallback):
    q = EffectQuery('X', 'Y', 1)
    report = effect(fallback, q)
    assert report.value == pytest.approx(4 / 3, abs=1e-12)
    assert report.breakdown[0].witness == (1.0, 3.0, 4.0)
    assert effect(fallback, EffectQuery('X', 'Y', 1, 'peace')).value == pytest.approx(41 / 36, abs=1e-12)
    assert effect(fallback, EffectQuery('X', 'Y', 1, 'apace')).value == pytest.approx(59 / 36, abs=1e-12)
    space = effect(fallback, EffectQuery('X', 'Y', 1, 'space'))
    assert space.value == pytest.approx(1.0, abs=1e-12)
    assert space.breakdown[0].witness == (3.0, 4.0)


def test_fallback_partitions(fallback):
    q = EffectQuery('X', 'Y', 1)
    support = fallback.support('X')
    assert piev(fallback, q, {}, Partition.from_values(support, (1, 2, 3, 4))) == pytest.approx(41 / 36)
    assert piev(fallback, q.with_sign('negative'), {}, Partition.from_values(support, (3, 4))) == pytest.approx(1.0)
    assert piev(fallback, q.with_sign('positive'), {}, Partition.from_values(support, (3, 4))) == 0.0
    value, partition = piv(fallback, q, {})
    assert value == pytest.approx(4 / 3)
    assert partition == Partition((0, 2, 3))
    assert spiv(fallback, q, {}) == (pytest.approx(1.0), Partition((2, 3)))
    assert apiv(fallback, q, {}) == pytest.approx(59 / 36)
    assert brute_force_piv(fallback, q, {})[0] == pytest.approx(4 / 3)
    with pytest.raises(QueryError, match='out of range'):
        piev(fallback, q, {}, Partition((0, 7)))


def test_removing_values_can_raise_peace(fallback):
    restricted = effect(fallback, EffectQuery('X', 'Y', 1, 'peace'), restrict=[1, 3, 4])
    assert restricted.value == pytest.approx(4 / 3, abs=1e-12)
    assert restricted.value > effect(fallback, EffectQuery('X', 'Y', 1, 'peace')).value


def test_matrix_form(fallback):
    q = EffectQuery('X', 'Y', 1, 'peace')
    whole = Partition((0, 1, 2, 3))
    assert matrix_form_piev(fallback, q, {}, whole, normalized=False) == pytest.approx(41 / 144, abs=1e-12)
    assert matrix_form_piev(fallback, q, {}, whole) == pytest.approx(41 / 36, abs=1e-12)
    assert matrix_form_apiv(fallback, q, {}) == pytest.approx(59 / 36, abs=1e-12)


def test_best_partition_depends_on_degree(crossover):
    low = effect(crossover, EffectQuery('X', 'Y', 1 / 3))
    high = effect(crossover, EffectQuery('X', 'Y', 1))
    assert low.breakdown[0].witness == (0.0, 1.0, 2.0)
    assert high.breakdown[0].witness == (0.0, 2.0)
    assert high.value == pytest.approx(1024 / 1225, abs=1e-12)


def test_strata(bsc):
    q = EffectQuery('X', 'Y', 1)
    assert piv(bsc, q, {'Z': 0}) == (pytest.approx(1.0), Partition((0, 1)))
    assert interventional_variation(bsc, q, {'Z': 1}) == 1.0
    assert g_in(bsc, 'Y', {'X': 1, 'Z': 1}) == 0.0
    with pytest.raises(QueryError, match='exactly'):
        piv(bsc, q, {})
    with pytest.raises(QueryError, match='exactly'):
        piv(bsc, q, {'Z': 0, 'X': 1})


def test_zero_probability_stratum():
    binary = FiniteSupport((0, 1))
    model = Model((Variable('X', binary), Variable('Z', binary), Variable('Y', FiniteSupport((0, 1, 2)))), {
        'X': Root({0: 0.5, 1: 0.5}),
        'Z': Root({0: 1.0, 1: 0.0}),
        'Y': Deterministic(('X', 'Z'), body=BinOp('+', Name('X'), Name('Z'))),
    })
    q = EffectQuery('X', 'Y', 1)
    with pytest.raises(ZeroProbabilityError):
        piv(model, q, {'Z': 1})
    report = effect(model, q)
    assert [entry.z for entry in report.breakdown] == [{'Z': 0.0}]
    assert report.value == pytest.approx(1.0)


def test_signed_decomposition(fallback):
    parts = signed_decomposition(fallback, EffectQuery('X', 'Y', 1, 'peace'))
    assert parts['positive'] == pytest.approx(5 / 36)
    assert parts['negative'] == pytest.approx(1.0)
    assert parts['abs'] == pytest.approx(parts['positive'] + parts['negative'])


def test_report_to_dict(fallback):
    data = effect(fallback, EffectQuery('X', 'Y', 1)).to_dict()
    assert data['query'] == {'cause': 'X', 'outcome': 'Y'}
    assert data['variant'] == 'pace'
    assert data['breakdown'][0]['witness'] == [1.0, 3.0, 4.0]
    assert data['breakdown'][0]['z'] == {}


def test_degree_grid():
    assert degree_grid(4) == [0.0, 0.25, 0.5, 0.75, 1.0]
    assert degree_grid(2, maximum=3) == [0.0, 1.5, 3.0]
    with pytest.raises(QueryError):
        degree_grid(0)


def test_pace_vector():
    model = load('rare-disease', p=0.2)
    values = pace_vector(model, EffectQuery('X', 'Y'), [0, 1, 2])
    assert values == pytest.approx([1.0, 0.64, 0.4096])
    with pytest.raises(QueryError, match='ascending'):
        pace_vector(model, EffectQuery('X', 'Y'), [1, 0])


def test_monotonicity_report(bsc, caplog):
    model = load('rare-disease', p=0.2)
    with caplog.at_level(logging.WARNING, logger='variational'):
        decreases = monotonicity_report(model, EffectQuery('X', 'Y'), [0, 1, 2])
    assert [(d1, d2) for d1, _, d2, _ in decreases] == [(0.0, 1.0), (1.0, 2.0)]
    assert 'decreases' in caplog.text
    assert monotonicity_report(bsc, EffectQuery('X', 'Y'), degree_grid(5)) == []


@pytest.mark.parametrize('p, degree', [(0.1, 1), (0.5, 2), (0.3, 0)])
def test_natural_availability(p, degree):
    model = load('rare-disease', p=p)
    assert natural_availability(model, 'X', (), degree) == pytest.approx((4 * p * (1 - p)) ** degree)


def test_natural_availability_given(sprinkler):
    # P(R=1 | C=0) = 0.2 and P(R=1 | C=1) = 0.8
    assert natural_availability(sprinkler, 'R', ['C'], 1) == pytest.approx(0.64)
    with pytest.raises(QueryError):
        natural_availability(sprinkler, 'R', ['R'], 1)


@pytest.mark.parametrize('cause, ace_value, availability', [
    ('R', 0.653, 1.0),
    # P(S=1) = 0.3
    ('S', 0.495, 0.84),
])
@pytest.mark.parametrize('degree', [0, 1, 4])
def test_ace_flavored_effect(sprinkler, cause, ace_value, availability, degree):
    expected = ace_value * availability ** degree
    assert ace_flavored_effect(sprinkler, cause, 'W', degree) == pytest.approx(expected, abs=1e-12)


def test_eliminate_mediator(mediation):
    flat = eliminate_mediator(mediation, 'M')
    assert flat.names == ('X', 'UM', 'UY', 'Y')
    assert flat.parents('Y') == ('X', 'UM', 'UY')
    before = marginal(build_joint(mediation), ['X', 'UM', 'UY', 'Y']).table
    after = marginal(build_joint(flat), ['X', 'UM', 'UY', 'Y']).table
    np.testing.assert_allclose(after, before)
    assert effect(flat, EffectQuery('X', 'Y', 1)).value == pytest.approx(1.152, abs=1e-12)


def chain_model(y_mechanism):
    """
    Z -> W -> X -> Y and Z -> Y, with X = min(W, 1).
    """
    binary = FiniteSupport((0, 1))
    return Model((
        Variable('Z', binary),
        Variable('W', FiniteSupport((0, 1, 2))),
        Variable('X', binary),
        Variable('Y', FiniteSupport((0, 1, 2))),
    ), {
        'Z': Root({0: 0.4, 1: 0.6}),
        'W': CPT(('Z',), {(0,): {0: 0.5, 1: 0.3, 2: 0.2}, (1,): {0: 0.1, 1: 0.2, 2: 0.7}}),
        'X': Deterministic(('W',), body=Call('min', (Name('W'), Const(1.0)))),
        'Y': y_mechanism,
    })


def test_eliminate_mediator_on_chain():
    model = chain_model(Deterministic(('X', 'Z'), body=BinOp('+', Name('X'), Name('Z'))))
    flat = eliminate_mediator(model, 'X')
    assert flat.names == ('Z', 'W', 'Y')
    assert flat.parents('Y') == ('W', 'Z')
    for w in (0, 1, 2):
        for z in (0, 1):
            assert flat.outcome('Y', {'W': w, 'Z': z}) == min(w, 1) + z
    before = marginal(build_joint(model), ['Z', 'W', 'Y']).table
    np.testing.assert_allclose(build_joint(flat).table, before, atol=1e-12)
    assert effect(flat, EffectQuery('W', 'Y', 1)).value > 0


@pytest.mark.parametrize('degree', [0, 0.3, 1, 2])
def test_no_direct_effect_survives_elimination(degree):
    ignores_x = Deterministic(('X', 'Z'), lookup={(x, z): z for x in (0, 1) for z in (0, 1)})
    model = chain_model(ignores_x)
    assert effect(model, EffectQuery('X', 'Y', degree)).value == 0.0
    flat = eliminate_mediator(model, 'X')
    assert effect(flat, EffectQuery('W', 'Y', degree)).value == 0.0


def test_eliminate_stochastic_mediator_fails(sprinkler):
    with pytest.raises(ModelError, match='stochastic'):
        eliminate_mediator(sprinkler, 'R')


# Randomized properties

CHAIN_DEGREES = [0.0, 0.3, 1.0, 2.0]


def random_stratum(rng, n):
    outcomes = rng.integers(-4, 5, size=n).astype(float)
    return outcomes, random_row(rng, n, 0.2)


def test_dynamic_program_matches_brute_force():
    rng = np.random.default_rng(2024)
    for _ in range(500):
        n = int(rng.integers(2, 11))
        outcomes, probs = random_stratum(rng, n)
        degree = float(rng.choice(CHAIN_DEGREES))
        for sign in ('abs', 'positive', 'negative'):
            terms = pair_terms(outcomes, probs, degree, sign)
            value, chain = best_chain(terms)
            expected, _ = exhaustive_chain(terms)
            assert value == pytest.approx(expected, abs=1e-12)
            if chain is not None:
                assert chain_value(terms, chain) == pytest.approx(value, abs=1e-12)


def test_model_level_chain_search():
    rng = np.random.default_rng(99)
    for _ in range(500):
        model = random_query_model(rng, max_support=10, max_z_states=64)
        joint = build_joint(model)
        degree = float(rng.choice(CHAIN_DEGREES))
        given = model.parents('Y')[1:]
        for key in itertools.product(*(model.support(g).values for g in given)):
            z = dict(zip(given, key))
            for sign in ('abs', 'positive', 'negative'):
                q = EffectQuery('X', 'Y', degree, sign=sign)
                try:
                    fast = piv(model, q, z, joint)[0]
                except ZeroProbabilityError:
                    break
                assert fast == pytest.approx(brute_force_piv(model, q, z, joint)[0], abs=1e-9)


def test_variant_inequalities():
    rng = np.random.default_rng(5)
    for _ in range(500):
        n = int(rng.integers(2, 10))
        outcomes, probs = random_stratum(rng, n)
        degree = float(rng.uniform(0, 3))
        values = {variant: stratum_variation(outcomes, probs, degree, variant, 'abs')[0]
                  for variant in ('pace', 'peace', 'space', 'apace')}
        assert values['peace'] <= values['pace'] + 1e-12
        assert values['space'] <= values['pace'] + 1e-12
        assert values['pace'] <= values['apace'] + 1e-12
        total = float(np.abs(np.diff(outcomes)).sum())
        assert values['pace'] <= total + 1e-12


def test_binary_cause_variants_coincide():
    rng = np.random.default_rng(17)
    for _ in range(200):
        outcomes, probs = random_stratum(rng, 2)
        degree = float(rng.uniform(0, 3))
        for sign in ('abs', 'positive', 'negative'):
            values = [stratum_variation(outcomes, probs, degree, variant, sign)[0]
                      for variant in ('pace', 'peace', 'space', 'apace')]
            assert max(values) - min(values) <= 1e-12


def test_signed_identities():
    rng = np.random.default_rng(8)
    for _ in range(300):
        n = int(rng.integers(2, 9))
        outcomes, probs = random_stratum(rng, n)
        degree = float(rng.uniform(0, 2))
        for variant in ('peace', 'apace'):
            pos, neg, both = (stratum_variation(outcomes, probs, degree, variant, sign)[0]
                              for sign in ('positive', 'negative', 'abs'))
            assert both == pytest.approx(pos + neg, abs=1e-12)
        pos, neg, both = (stratum_variation(outcomes, probs, degree, 'pace', sign)[0]
                          for sign in ('positive', 'negative', 'abs'))
        assert max(pos, neg) <= both + 1e-12
        assert both <= pos + neg + 1e-12
        # Flipping the outcome swaps the signed parts
        assert stratum_variation(-outcomes, probs, degree, 'pace', 'positive')[0] == pytest.approx(neg, abs=1e-12)


def test_zero_positive_variation_iff_non_increasing():
    rng = np.random.default_rng(12)
    for _ in range(400):
        n = int(rng.integers(2, 6))
        outcomes = rng.integers(0, 3, size=n).astype(float)
        probs = random_row(rng, n, 0.3)
        value = stratum_variation(outcomes, probs, 1.0, 'pace', 'positive')[0]
        available = [i for i in range(n) if probs[i] > 0]
        non_increasing = all(outcomes[j] <= outcomes[i] for i, j in itertools.combinations(available, 2))
        assert (value == 0.0) == non_increasing


def test_removing_values_never_raises_pace():
    rng = np.random.default_rng(31)
    for _ in range(200):
        n = int(rng.integers(3, 9))
        outcomes, probs = random_stratum(rng, n)
        degree = float(rng.uniform(0, 2))
        size = int(rng.integers(2, n))
        subset = sorted(rng.choice(n, size=size, replace=False))
        for variant in ('pace', 'space', 'apace'):
            whole = stratum_variation(outcomes, probs, degree, variant, 'abs')[0]
            part, witness = stratum_variation(outcomes, probs, degree, variant, 'abs', subset)
            assert part <= whole + 1e-12
            if witness is not None:
                assert set(witness) <= set(subset)


def test_matrix_form_matches_direct_evaluation():
    rng = np.random.default_rng(44)
    for _ in range(100):
        model = random_query_model(rng, max_support=6, max_z_states=8)
        joint = build_joint(model)
        q = EffectQuery('X', 'Y', float(rng.uniform(0, 2)), sign=str(rng.choice(['abs', 'positive', 'negative'])))
        given = model.parents('Y')[1:]
        n = len(model.support('X'))
        for key in itertools.product(*(model.support(g).values for g in given)):
            z = dict(zip(given, key))
            try:
                direct = apiv(model, q, z, joint)
            except ZeroProbabilityError:
                continue
            assert matrix_form_apiv(model, q, z, joint) == pytest.approx(direct, abs=1e-9)
            chain = Partition(tuple(sorted(rng.choice(n, size=int(rng.integers(2, n + 1)), replace=False))))
            assert matrix_form_piev(model, q, z, chain, joint) == pytest.approx(piev(model, q, z, chain, joint), abs=1e-9)


@pytest.mark.parametrize('p', [0.2, 0.9])
@pytest.mark.parametrize('degree', [0.5, 1, 3])
def test_moment_of_unit_variation(p, degree):
    model = load('sprinkler-sem', p=p)
    joint = build_joint(model)
    q = EffectQuery('R', 'W', degree)
    unit = effect(model, q.at_degree(1), joint)
    moment = sum(entry.probability * entry.value ** degree for entry in unit.breakdown)
    assert effect(model, q, joint).value == pytest.approx(moment, abs=1e-9)
