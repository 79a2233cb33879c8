import pytest

from cellfault.rules import default_ruleset
from cellfault.synth import GenSpec, generate


@pytest.fixture(scope="session")
def rules():
    return default_ruleset()


@pytest.fixture(scope="session")
def uniform_labeled(rules):
    return generate(GenSpec(mode="uniform", n=1000, seed=0, label_with=rules))


@pytest.fixture(scope="session")
def uniform_raw():
    return generate(GenSpec(mode="uniform", n=300, seed=1))
