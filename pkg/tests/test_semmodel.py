import pytest

from errors import BindingError, ModelError, QueryError, StateSpaceError
from expression import Name
from probengine import build_joint
from semmodel import (CPT, Deterministic, FiniteSupport, Model, Partition, Root, Variable, bind, check,
                      state_limit, validate)

from conftest import load


def binary(name):
    return Variable(name, FiniteSupport((0, 1)))


def test_support_must_increase():
    with pytest.raises(ModelError, match='strictly increasing'):
        FiniteSupport((1, 0))
    with pytest.raises(ModelError):
        FiniteSupport(())


def test_support_lookup():
    s = FiniteSupport((1, 2, 3, 4))
    assert s.index(3) == 2
    assert 2.0000000001 in s
    assert s.snap(2.0000000001) == 2.0
    with pytest.raises(QueryError, match='outside the support'):
        s.index(5)


def test_model_structure(sprinkler):
    assert sprinkler.names == ('C', 'R', 'S', 'W')
    assert sprinkler.parents('W') == ('R', 'S')
    assert sprinkler.children('C') == ('R', 'S')
    assert sprinkler.topological_order() == ('C', 'R', 'S', 'W')
    assert sprinkler.stochastic_variables() == ('C', 'R', 'S', 'W')
    assert sprinkler.state_space_size() == 16


def test_unknown_variable(bsc):
    with pytest.raises(QueryError, match="unknown variable 'Q'"):
        bsc.variable('Q')


def test_outcome(bsc, fallback):
    assert bsc.outcome('Y', {'X': 1, 'Z': 0}) == 1.0
    assert fallback.outcome('Y', {'X': 4}) == 1.0
    with pytest.raises(QueryError, match='misses parent'):
        bsc.outcome('Y', {'X': 1})
    with pytest.raises(QueryError, match='not a deterministic node'):
        bsc.outcome('X', {})


def test_outcome_outside_support():
    model = Model((binary('X'), binary('Y')),
                  {'X': Root({0: 0.5, 1: 0.5}), 'Y': Deterministic(('X',), body=Name('X'))})
    assert validate(model) == []
    broken = model.replace_mechanism('Y', Deterministic(('X',), lookup={(0,): 0, (1,): 2}))
    assert any('outside its support' in d for d in validate(broken))


def test_cycle_detected():
    model = Model((binary('A'), binary('B')),
                  {'A': Deterministic(('B',), body=Name('B')), 'B': Deterministic(('A',), body=Name('A'))})
    diagnostics = validate(model)
    assert len(diagnostics) == 1
    assert diagnostics[0].startswith('cycle detected: ')
    with pytest.raises(ModelError, match='cycle'):
        check(model)


def test_row_sums_and_missing_rows():
    model = Model((binary('A'), binary('B')),
                  {'A': Root({0: 0.5, 1: 0.4}), 'B': CPT(('A',), {(0,): {0: 1.0}})})
    diagnostics = validate(model)
    assert any('sums to' in d for d in diagnostics)
    assert any('misses the row (A=1)' in d for d in diagnostics)


def test_bind():
    model = load('rare-disease')
    assert not model.is_bound()
    bound = bind(model, {'p': 0.1})
    assert bound.is_bound()
    assert bound.parameters == ()
    assert bound.mechanism('X').table[1.0].evaluate({}) == pytest.approx(0.1)


def test_bind_errors():
    model = load('rare-disease')
    with pytest.raises(BindingError, match="unbound parameter 'p'"):
        bind(model, {})
    with pytest.raises(BindingError, match="unknown parameter 'q'"):
        bind(model, {'p': 0.1, 'q': 0.2})
    with pytest.raises(BindingError, match='outside'):
        bind(model, {'p': 1.5})


def test_unbound_model_cannot_build_joint():
    with pytest.raises(BindingError, match='unbound'):
        build_joint(load('rare-disease'))


def test_state_limit(monkeypatch, sprinkler):
    monkeypatch.setenv('VCE_STATE_LIMIT', '8')
    assert state_limit() == 8
    with pytest.raises(StateSpaceError, match='above the limit'):
        build_joint(sprinkler)


def test_insert_and_remove(bsc):
    model = bsc.insert_variable(binary('U'), Root({0: 1.0}), before='Y')
    assert model.names == ('X', 'Z', 'U', 'Y')
    assert model.remove_variable('U').names == bsc.names
    with pytest.raises(ModelError, match='duplicate'):
        model.insert_variable(binary('U'), Root({0: 1.0}), before=None)


def test_partition():
    s = FiniteSupport((1, 2, 3, 4))
    p = Partition.from_values(s, (1, 3, 4))
    assert p.indices == (0, 2, 3)
    assert p.values(s) == (1.0, 3.0, 4.0)
    with pytest.raises(QueryError):
        Partition((2, 1))
    with pytest.raises(QueryError):
        Partition((0,))
    with pytest.raises(QueryError, match='out of range'):
        Partition((0, 9)).check(s)
