import pytest

from driftrank.corpus import SynthConfig, generate_synthetic_corpus


@pytest.fixture(scope="session")
def small_corpus():
    """Shared desk-scale corpus; treat as read-only."""
    return generate_synthetic_corpus(SynthConfig(n_bugs=12, n_files=12), seed=7)


@pytest.fixture(scope="session")
def medium_corpus():
    return generate_synthetic_corpus(SynthConfig(n_bugs=50, n_files=40), seed=1)
