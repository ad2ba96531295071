from __future__ import annotations

import dataclasses
import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from netrca import faultlab
from netrca.embeddings import HashedTrigramProvider
from netrca.pipeline import index_incident
from netrca.retrieval import VectorIndex


@pytest.fixture(scope="session")
def provider():
    return HashedTrigramProvider()


@pytest.fixture(scope="session")
def scenario_outputs():
    """All eight scenarios generated at seed 0."""
    return faultlab.generate_all(seed=0)


@pytest.fixture(scope="session")
def gw_contention():
    return faultlab.generate_scenario(
        dataclasses.replace(faultlab.get_scenario("gateway-resource-contention"), seed=0)
    )


@pytest.fixture(scope="session")
def app_latency():
    return faultlab.generate_scenario(
        dataclasses.replace(faultlab.get_scenario("high-app-latency"), seed=0)
    )


@pytest.fixture(scope="session")
def corpus_index(provider, scenario_outputs):
    """Incident index holding all eight seed-0 scenarios."""
    index = VectorIndex.for_provider(provider)
    for out in scenario_outputs:
        index_incident(
            index,
            out.snapshot,
            gold_diagnosis=out.truth.gold_diagnosis,
            gold_action_steps=list(out.truth.gold_action_steps),
            provider=provider,
            record_id=out.truth.scenario_name,
            metadata={"scenario_name": out.truth.scenario_name},
        )
    return index
