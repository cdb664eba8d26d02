"""
GramMatrix value type shared by the DEK model, the RBF baseline and every
kernel machine.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import pandas as pd

from scripts.errors import NonFiniteError, ShapeMismatchError


@dataclass(frozen=True)
class GramMatrix:
    """
    Kernel evaluations K(a_p, b_q) between two sample sets.

    Attributes:
        values: (n_a x n_b) matrix.
        symmetric_flag: True when computed on one set against itself; the
            matrix is then square and equal to its transpose.
    """

    values: np.ndarray
    symmetric_flag: bool = False

    def __post_init__(self) -> None:
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim != 2:
            raise ShapeMismatchError(f"Gram matrix must be 2-D, got shape {values.shape}")
        if not np.all(np.isfinite(values)):
            raise NonFiniteError("Gram matrix contains NaN or Inf")
        if np.any(values < 0):
            raise ValueError("Gram matrix entries must be >= 0")
        if self.symmetric_flag and (values.shape[0] != values.shape[1] or not np.array_equal(values, values.T)):
            raise ShapeMismatchError("symmetric Gram matrix must be square and equal to its transpose")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape

    def to_frame(self) -> pd.DataFrame:
        """Wide layout: one row per left sample, columns ``c0..c{n_b-1}``."""
        frame = pd.DataFrame(self.values, columns=[f"c{q}" for q in range(self.values.shape[1])])
        frame.index.name = "row"
        return frame
