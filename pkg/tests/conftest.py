"""Shared desk-scale world: one key/cert generation per session, fresh
adapter states (stores, nonce maps, CA registries) per test."""

import pytest

from portsec.fixtures import build_world, generate_fixtures


@pytest.fixture(scope="session")
def base_fixtures():
    return generate_fixtures()


@pytest.fixture
def world(base_fixtures):
    return build_world(base_fixtures)


@pytest.fixture(scope="session")
def honest_sims(base_fixtures):
    """The four honest configurations, run once and shared read-only."""
    from portsec.sim import run_scenario

    return {
        (scenario, mode): run_scenario(base_fixtures, scenario, mode)
        for scenario in ("export", "import")
        for mode in ("p2p", "ledger")
    }


@pytest.fixture(scope="session")
def comparison(base_fixtures):
    from portsec.attacks import compare_modes

    return compare_modes(base_fixtures)
