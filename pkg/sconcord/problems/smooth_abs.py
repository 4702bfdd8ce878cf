"""
Smooth surrogate of |x|: h(x) = (log(1 + e^{alpha x}) + log(1 + e^{-alpha x})) / alpha.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Tuple

import numpy as np
import numpy.typing as npt

from sconcord.core.oracle import OracleHandle, Vector

ArrayLike = npt.ArrayLike


@dataclass(frozen=True)
class SmoothAbs:
    alpha: float

    def __post_init__(self) -> None:
        if not self.alpha > 0.0:
            raise ValueError(f"alpha must be positive, got {self.alpha}")

    def value(self, x: ArrayLike) -> np.ndarray:
        # logaddexp(0, z) = log(1 + e^z) without overflow
        z = self.alpha * np.asarray(x, dtype=float)
        return (np.logaddexp(0.0, z) + np.logaddexp(0.0, -z)) / self.alpha

    def first(self, x: ArrayLike) -> np.ndarray:
        return np.tanh(0.5 * self.alpha * np.asarray(x, dtype=float))

    def second(self, x: ArrayLike) -> np.ndarray:
        th = self.first(x)
        return 0.5 * self.alpha * (1.0 - th * th)

    def third(self, x: ArrayLike) -> np.ndarray:
        th = self.first(x)
        return -0.5 * self.alpha**2 * th * (1.0 - th * th)


def smooth_abs_eval(
    alpha: float, x: ArrayLike
) -> Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """(h, h', h'', h''') at x, elementwise."""
    h = SmoothAbs(alpha)
    return h.value(x), h.first(x), h.second(x), h.third(x)


def smooth_abs_oracle(dim: int, alpha: float, weight: float = 1.0) -> OracleHandle:
    """weight * sum_i h(x_i), the smoothed l1 norm."""
    h = SmoothAbs(alpha)

    def hvp(x: Vector, v: Vector) -> Vector:
        return weight * h.second(x) * v

    return OracleHandle(
        dim=dim,
        evaluate=lambda x: weight * float(np.sum(h.value(x))),
        gradient=lambda x: weight * h.first(x),
        hessian=lambda x: np.diag(weight * h.second(x)),
        hvp=hvp,
        name=f"smooth_l1[alpha={alpha:g}]",
    )
