import pytest

from legalstyle.gateway import mock_gateway


@pytest.fixture
def gw():
    return mock_gateway(seed=42)
