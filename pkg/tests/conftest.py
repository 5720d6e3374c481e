import pathlib

import pytest

from pfconv import CoxParams, GammaProposal, ObservationSeries, \
    make_bootstrap_proposal, make_cox_model, make_gamma_proposal

REPO_ROOT = pathlib.Path(__file__).resolve().parent.parent
FIXTURE_OBS = REPO_ROOT / "fixtures" / "cox_obs_t12.csv"


@pytest.fixture(scope="session")
def cox_params():
    return CoxParams(c=0.5, eta=0.1)


@pytest.fixture(scope="session")
def cox_model(cox_params):
    return make_cox_model(cox_params)


@pytest.fixture(scope="session")
def gamma_proposal():
    return make_gamma_proposal(GammaProposal(alpha=1.5, beta=0.5))


@pytest.fixture(scope="session")
def bootstrap_proposal(cox_params):
    return make_bootstrap_proposal(cox_params)


@pytest.fixture(scope="session")
def fixture_obs_path():
    assert FIXTURE_OBS.exists(), "committed observation fixture is missing"
    return FIXTURE_OBS


@pytest.fixture(scope="session")
def fixture_obs(fixture_obs_path):
    return ObservationSeries.from_csv(fixture_obs_path)
