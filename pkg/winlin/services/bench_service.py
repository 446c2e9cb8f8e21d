"""
Сравнение W-MHSA и W-LMHSA по размерам окна.

Соглашение о FLOPs: умножение-сложение = 2, softmax = 5 операций на элемент.
На окно с N = w², d = D/h:
    точное ядро   h·(2N²d + 5N² + 2N²d)
    линейное ядро h·(3Nd + 2Nd² + 2Nd² + 2Nd + 2Nd)
Итог умножается на число окон (с учётом дополнения). Проекции Q, K, V, O
(8·HW·D²) одинаковы для обоих ядер и выводятся отдельно.

Пиковые буферы считаются на одно окно: окна обрабатываются порциями по
token_budget токенов, пик трекера делится на число окон в порции.
"""
from __future__ import annotations

import csv
import io
import logging
import statistics
import time
from pathlib import Path
from typing import Optional

import numpy as np

from ..attention import BufferTracker, attention_exact, attention_linear, window_partition
from ..exceptions import PreconditionError
from ..schemas import BenchConfig, FlopReport
from ..schemas.bench import Kernel
from ..tensor import Tensor
from .timing import timed

logger = logging.getLogger("winlin.services.bench")

CSV_COLUMNS = ["kernel", "window", "flops", "peak_bytes", "wall_ms", "ratio"]
OOM_MARK = "*"
_FLOAT_BYTES = 4


def _windows(w: int, height: int, width: int) -> int:
    return (-(-height // w)) * (-(-width // w))


def core_flops_per_window(kernel: Kernel, w: int, dim: int, heads: int) -> int:
    n = w * w
    d = dim // heads
    if kernel == "exact":
        return heads * (2 * n * n * d + 5 * n * n + 2 * n * n * d)
    return heads * (3 * n * d + 2 * n * d * d + 2 * n * d * d + 2 * n * d + 2 * n * d)


def count_flops(kernel: Kernel, w: int, height: int, width: int, dim: int, heads: int) -> FlopReport:
    if min(w, height, width, dim, heads) < 1:
        raise PreconditionError("count_flops: all parameters must be positive")
    n_windows = _windows(w, height, width)
    tokens = n_windows * w * w
    return FlopReport(
        kernel=kernel,
        window_side=w,
        height=height,
        width=width,
        dim=dim,
        heads=heads,
        flops_total=n_windows * core_flops_per_window(kernel, w, dim, heads),
        projection_flops=8 * tokens * dim * dim,
    )


def predicted_chunk_bytes(kernel: Kernel, w: int, dim: int, heads: int, windows: int) -> int:
    n = w * w
    d = dim // heads
    per_window = heads * n * n if kernel == "exact" else heads * (d * d + d)
    return windows * per_window * _FLOAT_BYTES


def _split_heads(t: np.ndarray, heads: int) -> np.ndarray:
    bn, n, c = t.shape
    return np.ascontiguousarray(t.reshape(bn, n, heads, c // heads).transpose(0, 2, 1, 3))


def measure(
    kernel: Kernel,
    w: int,
    height: int,
    width: int,
    dim: int,
    heads: int,
    repeats: int = 3,
    *,
    warmup: int = 1,
    token_budget: int = 4096,
    memory_limit_bytes: Optional[int] = None,
    seed: int = 0,
) -> FlopReport:
    """
    Медиана времени (мс) прохода внимания по всему изображению и пиковый
    объём временных буферов ядра на окно. Если порция не помещается в
    memory_limit_bytes или numpy не может выделить память, возвращается
    отчёт с oom=True.
    """
    if repeats < 3:
        raise PreconditionError(f"measure needs repeats >= 3, got {repeats}")
    report = count_flops(kernel, w, height, width, dim, heads)
    n = w * w
    n_windows = _windows(w, height, width)
    per_chunk = min(n_windows, max(1, token_budget // n))

    if memory_limit_bytes is not None:
        needed = predicted_chunk_bytes(kernel, w, dim, heads, per_chunk)
        if needed > memory_limit_bytes:
            logger.warning("bench oom | kernel=%s | w=%d | needed=%d", kernel, w, needed)
            return report.model_copy(update={"oom": True})

    rng = np.random.default_rng([seed, w])
    x = Tensor(rng.standard_normal((1, dim, height, width)).astype(np.float32))
    proj = [rng.standard_normal((dim, dim)).astype(np.float32) * dim**-0.5 for _ in range(4)]
    tracker = BufferTracker()

    def run() -> None:
        tokens, _ = window_partition(x, w)
        t = tokens.data
        q, k, v = (_split_heads(t @ p, heads) for p in proj[:3])
        for start in range(0, n_windows, per_chunk):
            sl = slice(start, start + per_chunk)
            qc, kc, vc = Tensor(q[sl]), Tensor(k[sl]), Tensor(v[sl])
            if kernel == "exact":
                out = attention_exact(qc, kc, vc, tracker=tracker)
            else:
                out = attention_linear(qc, kc, vc, tracker=tracker)
            bn, h, nt, d = out.shape
            _ = out.data.transpose(0, 2, 1, 3).reshape(bn, nt, h * d) @ proj[3]

    try:
        for _ in range(warmup):
            run()
        timings = []
        for _ in range(repeats):
            tracker.reset()
            start = time.perf_counter()
            run()
            timings.append((time.perf_counter() - start) * 1000.0)
    except MemoryError:
        logger.warning("bench oom | kernel=%s | w=%d | numpy allocation failed", kernel, w)
        return report.model_copy(update={"oom": True})

    return report.model_copy(
        update={
            "peak_buffer_bytes": tracker.peak_bytes // per_chunk,
            "wall_ms": statistics.median(timings),
        }
    )


def bench_sweep(config: BenchConfig, seed: int = 0) -> list[FlopReport]:
    height, width = config.dims
    reports = []
    with timed("bench sweep", logger, dims=config.dims, windows=config.windows):
        for kernel in config.kernels:
            for w in config.windows:
                report = measure(
                    kernel,
                    w,
                    height,
                    width,
                    config.dim,
                    config.heads,
                    config.repeats,
                    warmup=config.warmup,
                    token_budget=config.token_budget,
                    memory_limit_bytes=config.memory_limit_bytes,
                    seed=seed,
                )
                logger.info(
                    "bench row | kernel=%s | w=%d | flops=%d | peak_bytes=%d | wall_ms=%s | oom=%s",
                    kernel,
                    w,
                    report.flops_total,
                    report.peak_buffer_bytes,
                    report.wall_ms,
                    report.oom,
                )
                reports.append(report)
    return reports


def format_bench_csv(reports: list[FlopReport]) -> str:
    buf = io.StringIO()
    if reports:
        r0 = reports[0]
        buf.write(
            f"# geometry: H={r0.height} W={r0.width} D={r0.dim} heads={r0.heads}\n"
            "# flops: attention-core FLOPs per image; multiply-add = 2, softmax = 5 per element\n"
            f"# projections excluded: 8*H*W*D^2 = {r0.projection_flops} for both kernels\n"
            "# peak_bytes: transient attention buffers per window (float32)\n"
            "# ratio: flops / flops of the previous window of the same kernel\n"
            f"# {OOM_MARK} marks runs that exceed the memory limit\n"
        )
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    previous: dict[str, int] = {}
    for r in reports:
        prev = previous.get(r.kernel)
        ratio = "" if prev is None else repr(r.flops_total / prev)
        previous[r.kernel] = r.flops_total
        writer.writerow(
            [
                r.kernel,
                r.window_side,
                r.flops_total,
                OOM_MARK if r.oom else r.peak_buffer_bytes,
                OOM_MARK if r.oom or r.wall_ms is None else repr(r.wall_ms),
                ratio,
            ]
        )
    return buf.getvalue()


def write_bench_csv(reports: list[FlopReport], path: Path | str) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(format_bench_csv(reports), encoding="utf-8")
    return path


def read_bench_csv(path: Path | str) -> list[dict[str, str]]:
    lines = [
        line for line in Path(path).read_text(encoding="utf-8").splitlines() if not line.startswith("#")
    ]
    return list(csv.DictReader(lines))
