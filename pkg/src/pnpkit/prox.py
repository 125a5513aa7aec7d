"""Proximal maps: closed-form quadratic data term and a grid-search oracle."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from pnpkit.core import BlurOperator


@dataclass(frozen=True)
class DataFidelity:
    """``g(x) = ||A x - y||^2 / (2 lam)`` with ``A`` a circular blur."""

    blur: BlurOperator
    y: np.ndarray
    lam: float

    def __post_init__(self):
        if not self.lam > 0:
            raise ValueError(f"lam must be positive, got {self.lam}")
        y = np.array(self.y, dtype=np.float64)
        if not np.all(np.isfinite(y)):
            raise ValueError("observation y has non-finite entries")
        y.setflags(write=False)
        object.__setattr__(self, "y", y)

    def residual(self, x):
        return self.blur.apply(x) - self.y

    def value(self, x) -> float:
        r = self.residual(x)
        return float(np.sum(r * r) / (2 * self.lam))

    __call__ = value


def data_fidelity_grad(df: DataFidelity, x) -> np.ndarray:
    """``A^T (A x - y) / lam`` using the conjugate transfer function."""
    return df.blur.adjoint(df.residual(x)) / df.lam


def prox_quadratic_fft(df: DataFidelity, gamma: float, v) -> np.ndarray:
    """Exact ``argmin_x ||x - v||^2 / 2 + gamma g(x)``, one division per frequency."""
    if not gamma > 0:
        raise ValueError(f"gamma must be positive, got {gamma}")
    v = np.asarray(v, dtype=np.float64)
    if v.shape != df.y.shape:
        raise ValueError(f"v shape {v.shape} does not match observation {df.y.shape}")
    K = df.blur.transfer
    if v.ndim == 3:
        K = K[:, :, None]
    V = np.fft.fft2(v, axes=(0, 1))
    Y = np.fft.fft2(df.y, axes=(0, 1))
    X = (gamma * np.conj(K) * Y + df.lam * V) / (gamma * np.abs(K) ** 2 + df.lam)
    return np.real(np.fft.ifft2(X, axes=(0, 1)))


def grid_points(lo: float, hi: float, n: int, d: int) -> np.ndarray:
    """All points of the regular grid in lexicographic order, shape ``(n**d, d)``."""
    axis = np.linspace(lo, hi, n)
    mesh = np.meshgrid(*([axis] * d), indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=1)


def prox_bruteforce(h_eval: Callable[[np.ndarray], np.ndarray], gamma: float, v, grid,
                    h_values: np.ndarray | None = None) -> np.ndarray:
    """Minimise ``||x - v||^2 / 2 + gamma h(x)`` over a regular grid (``d <= 2``).

    ``h_eval`` receives the ``(n**d, d)`` grid and returns ``n**d`` values
    (``inf`` allowed). ``h_values`` may carry those values precomputed for
    repeated queries on one grid. Ties go to the lexicographically smallest
    grid point.
    """
    lo, hi, n = grid
    v = np.atleast_1d(np.asarray(v, dtype=np.float64))
    d = v.shape[0]
    if d > 2:
        raise ValueError("grid oracle supports d <= 2")
    if n < 3:
        raise ValueError("grid needs at least 3 points per dimension")
    pts = grid_points(lo, hi, int(n), d)
    h = np.asarray(h_eval(pts) if h_values is None else h_values, dtype=np.float64)
    if not np.any(np.isfinite(h)):
        raise ValueError("h infinite on grid")
    with np.errstate(invalid="ignore"):
        obj = 0.5 * np.sum((pts - v) ** 2, axis=1) + gamma * h
    obj[~np.isfinite(h)] = np.inf
    return pts[int(np.argmin(obj))]
