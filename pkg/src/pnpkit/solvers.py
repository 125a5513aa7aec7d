"""ADMM, PnP-ADMM and PnP-FISTA with full per-iteration traces."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from pnpkit.core import DivergenceError
from pnpkit.prior import DenoiserHandle

ProxFn = Callable[[np.ndarray, float], np.ndarray]


@dataclass(frozen=True)
class SolverConfig:
    gamma: float
    sigma: float = 1.0
    max_iter: int = 100
    stop_tol: float = 0.0
    record_diagnostics: bool = False

    def __post_init__(self):
        if not self.gamma > 0:
            raise ValueError(f"gamma must be positive, got {self.gamma}")
        if not self.sigma > 0:
            raise ValueError(f"sigma must be positive, got {self.sigma}")
        if self.max_iter < 1:
            raise ValueError("max_iter must be at least 1")
        if self.stop_tol < 0:
            raise ValueError("stop_tol must be non-negative")


@dataclass
class AdmmState:
    x: np.ndarray
    z: np.ndarray
    s: np.ndarray
    k: int = 0

    def __post_init__(self):
        self.x, self.z, self.s = (np.array(a, dtype=np.float64) for a in (self.x, self.z, self.s))
        if not (self.x.shape == self.z.shape == self.s.shape):
            raise ValueError(
                f"x, z, s shapes differ: {self.x.shape}, {self.z.shape}, {self.s.shape}"
            )
        if self.k < 0:
            raise ValueError("k must be non-negative")

    @classmethod
    def from_x(cls, x) -> "AdmmState":
        """``x0 = z0 = x``, ``s0 = 0``."""
        x = np.asarray(x, dtype=np.float64)
        return cls(x, x, np.zeros_like(x))

    @classmethod
    def dual_consistent(cls, x, denoiser: DenoiserHandle, sigma: float) -> "AdmmState":
        """``x0 = x``, ``z0 = D(x)``, ``s0 = x - D(x)``.

        For an exact MMSE denoiser this gives ``s0 = gamma grad h(z0)`` at
        every ``gamma``, the relation later iterates satisfy by construction.
        """
        x = np.asarray(x, dtype=np.float64)
        z = denoiser.denoise(x, sigma)
        return cls(x, z, x - z)


@dataclass
class RunTrace:
    """Per-iteration record of a run; record ``k`` holds the state after iteration ``k``.

    Norm columns are always filled. Snapshots of the iterates are kept only
    when the run was configured with ``record_diagnostics``. ``rel_change[k]``
    is ``||x^k - x^{k+1}|| / ||x^{k+1}||`` (NaN for the last record).
    Columns added later by diagnostics live in ``extra``.
    """

    solver: str
    gamma: float
    sigma: float
    primal_residual: list = field(default_factory=list)
    z_diff: list = field(default_factory=list)
    s_diff: list = field(default_factory=list)
    rel_change: list = field(default_factory=list)
    momentum: list = field(default_factory=list)
    xs: list = field(default_factory=list)
    zs: list = field(default_factory=list)
    ss: list = field(default_factory=list)
    final: Optional[AdmmState] = None
    extra: dict = field(default_factory=dict)

    @property
    def n_records(self) -> int:
        return len(self.primal_residual)

    @property
    def ks(self) -> np.ndarray:
        return np.arange(self.n_records)

    def column(self, name: str) -> np.ndarray:
        if name in self.extra:
            return np.asarray(self.extra[name], dtype=np.float64)
        return np.asarray(getattr(self, name), dtype=np.float64)


def _norm(a) -> float:
    return float(np.linalg.norm(np.ravel(a)))


def _rel_change(prev, new) -> float:
    num, den = _norm(prev - new), _norm(new)
    if den == 0.0:
        return 0.0 if num == 0.0 else math.inf
    return num / den


def _check_finite(k: int, **arrays):
    for name, a in arrays.items():
        if not np.all(np.isfinite(a)):
            raise DivergenceError(f"non-finite {name} at iteration {k}")


def _admm_loop(prox_g: ProxFn, z_step: Callable[[np.ndarray], np.ndarray],
               init: AdmmState, cfg: SolverConfig, solver: str) -> RunTrace:
    gamma = cfg.gamma
    x, z, s = init.x.copy(), init.z.copy(), init.s.copy()
    _check_finite(init.k, x=x, z=z, s=s)
    trace = RunTrace(solver, gamma, cfg.sigma)
    keep = cfg.record_diagnostics

    def record(x, z, s, dz, ds):
        trace.primal_residual.append(_norm(x - z))
        trace.z_diff.append(dz)
        trace.s_diff.append(ds)
        if keep:
            trace.xs.append(x)
            trace.zs.append(z)
            trace.ss.append(s)

    record(x, z, s, math.nan, math.nan)
    k = init.k
    for _ in range(cfg.max_iter):
        k += 1
        x_new = prox_g(z - s, gamma)
        z_new = z_step(x_new + s)
        s_new = s + x_new - z_new
        _check_finite(k, x=x_new, z=z_new, s=s_new)
        trace.rel_change.append(_rel_change(x, x_new))
        record(x_new, z_new, s_new, _norm(z_new - z), _norm(s_new - s))
        x, z, s = x_new, z_new, s_new
        if trace.rel_change[-1] < cfg.stop_tol:
            break
    trace.rel_change.append(math.nan)
    trace.final = AdmmState(x, z, s, k)
    return trace


def admm_classic(prox_g: ProxFn, prox_h: ProxFn, init: AdmmState, cfg: SolverConfig) -> RunTrace:
    """ADMM with scaled dual ``s``; ``prox_g(v, gamma)`` and ``prox_h(v, gamma)``.

    ``x = prox_g(z - s)``, ``z = prox_h(x + s)``, ``s = s + x - z``. Stops
    after ``max_iter`` iterations or when the relative change of ``x`` drops
    below ``stop_tol``.
    """
    return _admm_loop(prox_g, lambda v: prox_h(v, cfg.gamma), init, cfg, "admm")


def pnp_admm(prox_g: ProxFn, denoiser: DenoiserHandle, init: AdmmState,
             cfg: SolverConfig) -> RunTrace:
    """ADMM with the ``z`` update replaced by ``denoiser(x + s, sigma)``."""
    return _admm_loop(prox_g, lambda v: denoiser.denoise(v, cfg.sigma), init, cfg, "admm")


def pnp_fista(grad_g: Callable[[np.ndarray], np.ndarray], denoiser: DenoiserHandle, x0,
              cfg: SolverConfig, step: float) -> RunTrace:
    """FISTA with the proximal step replaced by the denoiser.

    ``w^k = x^k + (t_{k-1} - 1)/t_k (x^k - x^{k-1})`` with ``t_0 = 1`` and
    ``t_k = (1 + sqrt(1 + 4 t_{k-1}^2)) / 2``; ``w^0 = x^0``;
    ``x^{k+1} = D(w^k - step grad_g(w^k))``. Only ``x`` is tracked, so the
    ADMM-specific columns of the trace are NaN.
    """
    if not step > 0:
        raise ValueError(f"step must be positive, got {step}")
    x = np.array(x0, dtype=np.float64)
    _check_finite(0, x=x)
    trace = RunTrace("fista", cfg.gamma, cfg.sigma)
    keep = cfg.record_diagnostics

    def record(x):
        trace.primal_residual.append(math.nan)
        trace.z_diff.append(math.nan)
        trace.s_diff.append(math.nan)
        if keep:
            trace.xs.append(x)

    record(x)
    x_prev = x
    t = 1.0
    trace.momentum.append(t)
    for k in range(cfg.max_iter):
        if k == 0:
            w = x
        else:
            t_next = (1.0 + math.sqrt(1.0 + 4.0 * t * t)) / 2.0
            w = x + ((t - 1.0) / t_next) * (x - x_prev)
            t = t_next
            trace.momentum.append(t)
        x_new = denoiser.denoise(w - step * grad_g(w), cfg.sigma)
        _check_finite(k + 1, x=x_new)
        trace.rel_change.append(_rel_change(x, x_new))
        record(x_new)
        x_prev, x = x, x_new
        if trace.rel_change[-1] < cfg.stop_tol:
            break
    trace.rel_change.append(math.nan)
    trace.final = AdmmState(x, x, np.zeros_like(x), trace.n_records - 1)
    return trace


def admissible_step(M: float, safety: float = 0.9) -> float:
    """Step size ``safety / (2 M)``; ``safety < 1`` keeps ``gamma M < 1/2`` strict."""
    if not M > 0:
        raise ValueError(f"M must be positive, got {M}")
    if not 0 < safety <= 1:
        raise ValueError(f"safety must lie in (0, 1], got {safety}")
    return safety / (2.0 * M)
