"""Shared fixtures: recovery studies are expensive, so run each scenario
at most once per session and share the summaries across test modules."""

import pytest

from bcelliptical.simstudy import StudyConfig, run_study

_STUDY_CACHE: dict[str, object] = {}

STUDY_SEED = 0
STUDY_N = 500
STUDY_REPLICATES = 200


@pytest.fixture(scope="session")
def scenario_study():
    """Callable returning the N=200, n=500 summary for a scenario, cached."""

    def get(name: str):
        if name not in _STUDY_CACHE:
            _STUDY_CACHE[name] = run_study(
                StudyConfig(
                    name,
                    n=STUDY_N,
                    replicates=STUDY_REPLICATES,
                    master_seed=STUDY_SEED,
                )
            )
        return _STUDY_CACHE[name]

    return get
