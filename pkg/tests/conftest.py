"""Shared fixtures: the worked-example stores and split views.

Stores are immutable after construction, so the expensive ones are
session-scoped and shared across test modules.
"""

import pytest

from dytag import fixtures
from dytag.store import chronological_split


@pytest.fixture
def toy():
    return fixtures.toy_store()


@pytest.fixture
def toy_split(toy):
    return chronological_split(toy)


@pytest.fixture(scope="session")
def clustered():
    return fixtures.clustered_store(11)


@pytest.fixture(scope="session")
def clustered_split(clustered):
    return chronological_split(clustered)


@pytest.fixture(scope="session")
def bipartite():
    return fixtures.bipartite_store(3)
