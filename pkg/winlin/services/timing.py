from __future__ import annotations

import logging
import time
from contextlib import contextmanager
from typing import Any, Iterator, Optional

_default_logger = logging.getLogger("winlin.timing")


@contextmanager
def timed(op: str, log: Optional[logging.Logger] = None, **fields: Any) -> Iterator[None]:
    """
    Контекстный менеджер для логирования операции с измерением длительности.
    """
    log = log or _default_logger
    start = time.perf_counter()
    log.info("start %s | %s", op, fields)
    try:
        yield
        dur_ms = int((time.perf_counter() - start) * 1000)
        log.info("success %s | duration_ms=%s | %s", op, dur_ms, fields)
    except Exception:
        dur_ms = int((time.perf_counter() - start) * 1000)
        log.exception("fail %s | duration_ms=%s | %s", op, dur_ms, fields)
        raise
