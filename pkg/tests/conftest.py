import time

import pytest

SESSION_START = time.perf_counter()


def pytest_configure(config):
    config.addinivalue_line("markers", "run_last: move to the end of the session (wall-clock checks)")


def pytest_collection_modifyitems(items):
    items.sort(key=lambda item: item.get_closest_marker("run_last") is not None)


@pytest.fixture
def session_elapsed():
    return lambda: time.perf_counter() - SESSION_START
