import os
import sys

import pytest

ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
sys.path.insert(0, ROOT)
sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

from semdsl import load_model  # noqa: E402
from semmodel import bind  # noqa: E402

MODELS = os.path.join(ROOT, 'models')


def model_path(name):
    return os.path.join(MODELS, name + '.sem')


# Closed forms of PACE_d(R -> W) and PACE_d(S -> W) on sprinkler-sem, p = P(V3=1 | R=1, S=1)
def pace_r(p, d):
    return (0.6561 * (5231.6 / 5314.41) ** d + 0.0439 * (4.756 / 19.2721) ** d
            + 0.3 * (0.07 + 0.3 * p) * (0.084 * p / (0.07 + 0.3 * p) ** 2) ** d)


def pace_s(p, d):
    return (0.4761 * (267960 / 279841) ** d + 0.0239 * (97440 / 228484) ** d
            + 0.5 * (0.082 + 0.18 * p) * (0.05904 * p / (0.082 + 0.18 * p) ** 2) ** d)


def load(name, **bindings):
    model = load_model(model_path(name))
    if not bindings and model.parameters:
        return model
    return bind(model, bindings)


@pytest.fixture
def bsc():
    return load('bsc')


@pytest.fixture
def sprinkler():
    return load('sprinkler')


@pytest.fixture
def fallback():
    return load('fallback')


@pytest.fixture
def crossover():
    return load('crossover')


@pytest.fixture
def mediation():
    return load('mediation')
