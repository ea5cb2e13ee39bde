import os

import pytest


@pytest.hookimpl
def pytest_sessionstart(session):
    # subprocess runs inherit these, keeps their output plain and their thread count fixed
    os.environ['SHOW_PROGRESS'] = 'False'
    os.environ['USE_COLOR'] = 'False'
    os.environ.setdefault('IFORMER_THREADS', '1')


@pytest.fixture(autouse=True)
def restore_precision():
    from onlinevis.tensorcore import get_precision, set_precision

    previous = get_precision()
    yield
    set_precision(previous)
