import pytest


@pytest.fixture(scope="session")
def canonical_traces():
    """All canonical study traces, run once per test session."""
    from quadsmc.checks import load_canonical_traces

    return load_canonical_traces()
