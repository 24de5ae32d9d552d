import pytest

import helpers


@pytest.fixture
def worked_catalog():
    return helpers.worked_example_catalog()


@pytest.fixture
def plato_manifest(tmp_path):
    return helpers.build_plato_store(tmp_path)


@pytest.fixture
def mandela_manifest(tmp_path):
    return helpers.build_mandela_store(tmp_path)
