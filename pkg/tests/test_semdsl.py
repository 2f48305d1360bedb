import numpy as np
import pytest

from errors import ParseError
from expression import Const
from semdsl import SemLexer, load_model, parse_model, parse_number, save_model, serialize_model
from semmodel import CPT, Deterministic, Root

from conftest import MODELS, load
from modelgen import random_sem_model


@pytest.mark.parametrize('text, expected', [
    ('0.25', 0.25),
    ('41/70', 41 / 70),
    ('-3', -3.0),
    ('1e-3', 0.001),
])
def test_parse_number(text, expected):
    assert parse_number(text) == pytest.approx(expected)


@pytest.mark.parametrize('text', ['abc', '1/0', ''])
def test_parse_number_rejects(text):
    with pytest.raises(ValueError):
        parse_number(text)


def test_lexer_positions():
    tokens = SemLexer().tokenize('var X in {0, 1}\nroot X {0: 1/2, 1: 1/2}')
    assert [t.type for t in tokens[:4]] == ['VAR', 'IDENT', 'IN', 'LBRACE']
    root = tokens[8]
    assert root.type == 'ROOT'
    assert (root.lineno, root.column) == (2, 1)
    half = [t for t in tokens if t.type == 'NUMBER' and t.value[1] == '1/2'][0]
    assert half.value[0] == 0.5


def test_illegal_character():
    with pytest.raises(ParseError) as info:
        parse_model('var X in {0, 1}\nroot X {0: 1 $ 2}')
    assert info.value.line == 2
    assert info.value.column == 14
    assert str(info.value).startswith('line 2, column 14: ')


def test_load_bsc(bsc):
    assert bsc.names == ('X', 'Z', 'Y')
    assert isinstance(bsc.mechanism('X'), Root)
    assert bsc.parents('Y') == ('X', 'Z')


def test_load_sprinkler_tables(sprinkler):
    w = sprinkler.mechanism('W')
    assert isinstance(w, CPT)
    assert w.parents == ('R', 'S')
    assert w.rows[(0.0, 0.0)][1.0].evaluate({}) == pytest.approx(0.01)


def test_functional_sprinkler():
    model = load('sprinkler-sem', p=0.3)
    w = model.mechanism('W')
    assert isinstance(w, Deterministic)
    assert w.parents == ('R', 'S', 'V3')
    assert model.outcome('W', {'R': 1, 'S': 1, 'V3': 1}) == 1.0
    assert model.outcome('W', {'R': 0, 'S': 1, 'V3': 1}) == 0.0
    assert model.outcome('W', {'R': 0, 'S': 0, 'V3': 1}) == 1.0


def test_lookup_and_explicit_parents():
    model = parse_model("""
        var X in {0, 1, 2}
        var Z in {0, 1}
        var Y in {0, 1, 2}
        root X {0: 0.2, 1: 0.3, 2: 0.5}
        root Z {0: 0.5, 1: 0.5}
        fun Y | X {0: 0, 1: 2, 2: 1}
    """)
    assert model.mechanism('Y').lookup == {(0.0,): 0.0, (1.0,): 2.0, (2.0,): 1.0}

    model = parse_model("""
        var X in {0, 1}
        var Z in {0, 1}
        var Y in {0, 1}
        root X {0: 0.5, 1: 0.5}
        root Z {0: 0.5, 1: 0.5}
        def Y | X, Z = X
    """)
    assert model.parents('Y') == ('X', 'Z')


@pytest.mark.parametrize('source, message', [
    ('', 'no variables declared'),
    ('var X in {0, 1}\nroot Y {0: 1}', "unknown variable 'Y'"),
    ('var X in {0, 1}\nvar X in {0, 1}', "duplicate variable 'X'"),
    ('var X in {0, 1}\nroot X {0: 0.5, 1: 0.4}', 'sums to'),
    ('var X in {0, 1}\nroot X {0: q, 1: 1}', "unknown identifier 'q'"),
    ('var X in {0, 1}\nvar Y in {0, 1}\nroot X {0: 1/2, 1: 1/2}\ndef Y = X + 1', 'outside its support'),
    ('var X in {0, 1}\nroot X {0: 1/2, 1: 1/2}\nvar Y in {0, 1}\ndef Y = foo(X)', "unknown function 'foo'"),
    ('var X in {0, 1}\nroot X {0: 1/2, 1: 1/2}\nvar Y in {0, 1}\ndef Y = xor(X)', 'takes 2 arguments'),
    ('var X in {0, 1}\nroot X {0: 1/2, 1: 1/2}\nvar Y in {0, 1}\ndef Y = X < 1 < 2', 'cannot be chained'),
    ('var X in {0, 1}', "variable 'X' has no mechanism"),
])
def test_parse_errors(source, message):
    with pytest.raises(ParseError, match=message):
        parse_model(source)


def test_error_location_points_at_token():
    with pytest.raises(ParseError) as info:
        parse_model('var X in {0, 1}\nroot X {0: 1/2, 1: 1/2}\nvar Y in {0, 1}\ndef Y = Q')
    assert (info.value.line, info.value.column) == (4, 9)


@pytest.mark.parametrize('source, message, location', [
    ('var X in {0, 1}\nroot X {0: 0.5, 1: 0.4}', 'sums to', (2, 6)),
    ('var X in {0, 1}\nvar Y in {0, 1}\nroot X {0: 1/2, 1: 1/2}\ndef Y = X + 1', 'outside its support', (4, 5)),
    ('var X in {0, 1}\nvar Y in {0, 1}\nroot X {0: 1/2, 1: 1/2}\nfun Y | X {0: 1}', 'lookup of Y misses', (4, 5)),
    ('var A in {0, 1}\nvar B in {0, 1}\ncpt A | B {(0): {0: 1, 1: 0}, (1): {0: 1, 1: 0}}\n'
     'cpt B | A {(0): {0: 1, 1: 0}, (1): {0: 1, 1: 0}}', 'cycle detected', (4, 5)),
])
def test_model_diagnostics_point_at_declaration(source, message, location):
    with pytest.raises(ParseError, match=message) as info:
        parse_model(source)
    assert (info.value.line, info.value.column) == location


def test_parameters_in_tables():
    model = load_model('{}/rare-disease.sem'.format(MODELS))
    assert [p.name for p in model.parameters] == ['p']
    assert model.mechanism('X').table[1.0].names() == ('p',)


def test_rationals_keep_their_text(fallback):
    assert fallback.mechanism('X').table[1.0] == Const(1 / 6)
    assert '1/6' in serialize_model(fallback)


@pytest.mark.parametrize('name', ['bsc', 'rare-disease', 'sprinkler', 'sprinkler-sem', 'fallback', 'crossover',
                                  'mediation'])
def test_serialize_shipped_models(name):
    model = load_model('{}/{}.sem'.format(MODELS, name))
    assert parse_model(serialize_model(model)) == model


def test_save_and_load(tmp_path, sprinkler):
    path = tmp_path / 'copy.sem'
    save_model(sprinkler, str(path))
    assert load_model(str(path)) == sprinkler


def test_random_models_survive_serialization():
    rng = np.random.default_rng(20240611)
    for _ in range(1000):
        model = random_sem_model(rng)
        text = serialize_model(model)
        assert parse_model(text) == model, text


def test_malformed_inputs_raise_parse_errors():
    rng = np.random.default_rng(7)
    alphabet = list('{}()[],:|=<>+-*/#$ \n01xyz') + ['var', 'root', 'def', 'if', 'then', '1/0', '1e999']
    for _ in range(300):
        text = serialize_model(random_sem_model(rng))
        cut = int(rng.integers(len(text) + 1))
        if rng.random() < 0.5:
            mutated = text[:cut] + text[cut + int(rng.integers(1, 6)):]
        else:
            mutated = text[:cut] + str(rng.choice(alphabet)) + text[cut:]
        try:
            parse_model(mutated)
        except ParseError:
            pass
