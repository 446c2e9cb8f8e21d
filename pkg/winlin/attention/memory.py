from __future__ import annotations

import numpy as np


class BufferTracker:
    """
    Учёт временных буферов ядер внимания: матрица оценок N×N для точного ядра,
    K̂ᵀV (d×d) и сумма K̂ (d) для линейного. Веса и активации остальных слоёв
    сюда не попадают.
    """

    def __init__(self) -> None:
        self.live_bytes = 0
        self.peak_bytes = 0

    def allocate(self, *arrays: np.ndarray) -> int:
        nbytes = int(sum(a.nbytes for a in arrays))
        self.live_bytes += nbytes
        self.peak_bytes = max(self.peak_bytes, self.live_bytes)
        return nbytes

    def release(self, nbytes: int) -> None:
        self.live_bytes -= nbytes

    def reset(self) -> None:
        self.live_bytes = 0
        self.peak_bytes = 0
