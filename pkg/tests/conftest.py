import logging

import numpy as np
import pytest

from winlin.data import SegSample


@pytest.fixture(autouse=True)
def _propagate_logs():
    # setup_logging() из CLI отключает propagate и вешает handler на текущий stderr,
    # который capsys закрывает после теста
    log = logging.getLogger("winlin")
    log.propagate = True
    yield
    for handler in list(log.handlers):
        log.removeHandler(handler)
    log.propagate = True


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def square_sample():
    """32×32 пример с одним зданием 12×10 в центре."""
    image = np.full((3, 32, 32), 0.2, dtype=np.float32)
    mask = np.zeros((1, 32, 32), dtype=np.float32)
    mask[0, 10:22, 11:21] = 1.0
    image[:, 10:22, 11:21] = 0.8
    return SegSample(image=image, mask=mask, id="square")
