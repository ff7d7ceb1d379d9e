import pytest

from hcps.config import paper_preset


@pytest.fixture(scope="session")
def preset_cfg():
    return paper_preset()


@pytest.fixture(scope="session")
def preset_params(preset_cfg):
    return preset_cfg.system
