import json
from pathlib import Path

import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("repo", deadline=None, derandomize=True, max_examples=25,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("repo")

ORACLES = json.loads((Path(__file__).parent / "oracles" / "oracle_values.json").read_text())


@pytest.fixture(scope="session")
def oracle():
    return {k: float(v) for k, v in ORACLES.items()}
