import pytest

from gtvm import corpus
from gtvm.corpus.fixtures import load_fixture


@pytest.fixture
def registry():
    return corpus.metamodels()


@pytest.fixture
def triangle():
    return load_fixture("triangle")


@pytest.fixture
def library(triangle):
    """(space, program) with the shared pattern library linked."""
    return triangle, corpus.library_program(triangle.registry)
