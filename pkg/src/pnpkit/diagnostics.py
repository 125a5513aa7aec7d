"""Per-iteration convergence quantities for PnP-ADMM and the inequality checks
that the descent argument for MMSE denoisers predicts.

Every check returns a :class:`CheckReport`; its ``violations`` list is empty
exactly when the check passed.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from pnpkit.core import psnr, ssim
from pnpkit.prior import DenoiserInverseError, GmmPrior, hmmse_eval, hmmse_grad
from pnpkit.prox import DataFidelity, data_fidelity_grad
from pnpkit.solvers import RunTrace

CSV_COLUMNS = (
    "k", "lagrangian", "primal_residual", "z_diff", "s_diff", "rel_change",
    "grad_f_norm", "dual_gap", "psnr", "ssim",
)


@dataclass(frozen=True)
class MmseRegularizer:
    """``h_mmse`` summed over the rows of a signal reshaped to ``(-1, prior.dim)``."""

    prior: GmmPrior
    sigma: float
    gamma: float

    def _rows(self, x):
        x = np.asarray(x, dtype=np.float64)
        if x.size % self.prior.dim:
            raise ValueError(f"signal size {x.size} not a multiple of prior dim {self.prior.dim}")
        return x.reshape(-1, self.prior.dim)

    def value(self, x) -> float:
        vals = hmmse_eval(self.prior, self._rows(x), self.sigma, self.gamma)
        return float(np.sum(vals))

    __call__ = value

    def grad(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        return hmmse_grad(self.prior, self._rows(x), self.sigma, self.gamma).reshape(x.shape)


def augmented_lagrangian(g_eval: Callable, h_eval: Callable, x, z, s, gamma: float) -> float:
    """``g(x) + h(z) + s.(x - z)/gamma + ||x - z||^2/(2 gamma)``; ``inf`` if ``h(z)`` is."""
    if not gamma > 0:
        raise ValueError(f"gamma must be positive, got {gamma}")
    x, z, s = (np.asarray(a, dtype=np.float64) for a in (x, z, s))
    if not (x.shape == z.shape == s.shape):
        raise ValueError("x, z, s must share one shape")
    hz = h_eval(z)
    if not math.isfinite(hz):
        return math.inf
    r = (x - z).ravel()
    return float(g_eval(x) + hz + s.ravel() @ r / gamma + r @ r / (2 * gamma))


def descent_margin_eta(gamma: float, M: float) -> float:
    """``(1 - gamma M - 2 gamma^2 M^2) / (2 gamma)``; positive iff ``gamma < 1/(2M)``."""
    if not (gamma > 0 and M > 0):
        raise ValueError("gamma and M must be positive")
    return (1.0 - gamma * M - 2.0 * gamma**2 * M**2) / (2.0 * gamma)


def grad_f_norm(x, df: DataFidelity, prior: GmmPrior, sigma: float, gamma: float) -> float:
    """``||grad g(x) + grad h_mmse(x)||``, or ``inf`` outside the denoiser image."""
    reg = MmseRegularizer(prior, sigma, gamma)
    try:
        gh = reg.grad(x)
    except DenoiserInverseError:
        return math.inf
    return float(np.linalg.norm((data_fidelity_grad(df, x) + gh).ravel()))


def annotate_trace(trace: RunTrace, df: Optional[DataFidelity] = None,
                   reg: Optional[MmseRegularizer] = None, truth=None) -> RunTrace:
    """Fill derived columns of a trace recorded with snapshots.

    With ``df`` and ``reg``: ``lagrangian``, ``objective`` (``g(x)+h(x)``),
    ``grad_f_norm`` and ``dual_gap``. With ``truth``: ``psnr`` and ``ssim``.
    """
    n = trace.n_records
    if len(trace.xs) != n:
        raise ValueError("trace has no iterate snapshots; run with record_diagnostics=True")
    gamma = trace.gamma
    if df is not None and reg is not None and trace.zs:
        lag, obj, gnorm, gap = (np.full(n, np.nan) for _ in range(4))
        for k in range(n):
            x, z, s = trace.xs[k], trace.zs[k], trace.ss[k]
            lag[k] = augmented_lagrangian(df.value, reg.value, x, z, s, gamma)
            hx = reg.value(x)
            obj[k] = df.value(x) + hx if math.isfinite(hx) else math.inf
            gnorm[k] = grad_f_norm(x, df, reg.prior, reg.sigma, gamma)
            try:
                gap[k] = float(np.linalg.norm((s - gamma * reg.grad(z)).ravel()))
            except DenoiserInverseError:
                gap[k] = math.inf
        trace.extra.update(lagrangian=lag, objective=obj, grad_f_norm=gnorm, dual_gap=gap)
    if truth is not None:
        truth = np.asarray(truth, dtype=np.float64)
        trace.extra["psnr"] = np.array([psnr(x, truth) for x in trace.xs])
        if truth.ndim >= 2 and min(truth.shape[:2]) >= 11:
            trace.extra["ssim"] = np.array([ssim(x, truth) for x in trace.xs])
    return trace


@dataclass
class CheckReport:
    name: str
    checked: int = 0
    violations: list = field(default_factory=list)  # (k, lhs, rhs)
    skipped: list = field(default_factory=list)
    notes: list = field(default_factory=list)
    failed_guard: bool = False
    monotone: Optional[bool] = None

    @property
    def passed(self) -> bool:
        return not self.violations and not self.failed_guard

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        msg = f"[{status}] {self.name}: {self.checked} iterations checked, {len(self.violations)} violations"
        if self.skipped:
            msg += f", {len(self.skipped)} skipped"
        if self.notes:
            msg += " (" + "; ".join(self.notes) + ")"
        return msg


def _pairwise(trace: RunTrace, name: str, lhs, rhs, tol: float, skip=None) -> CheckReport:
    report = CheckReport(name)
    for k in range(1, trace.n_records):
        if skip is not None and skip(k):
            report.skipped.append(k)
            continue
        report.checked += 1
        if not lhs(k) <= rhs(k) + tol:
            report.violations.append((k, float(lhs(k)), float(rhs(k))))
    return report


def check_descent(trace: RunTrace, eta: float, tol: float = 1e-8) -> CheckReport:
    """``mu^k - mu^{k-1} <= -eta ||z^k - z^{k-1}||^2 + tol`` for every ``k >= 1``.

    When ``eta <= 0`` the step size is outside the admissible range: the
    margin check is skipped and the report fails. Monotonicity of the
    Lagrangian is always evaluated and noted.
    """
    mu = trace.column("lagrangian")
    zd = trace.column("z_diff")
    finite = np.isfinite(mu)

    def skip(k):
        return not (finite[k] and finite[k - 1])

    monotone = _pairwise(trace, "monotone", lambda k: mu[k] - mu[k - 1], lambda k: 0.0, tol, skip)
    if eta <= 0:
        report = CheckReport("descent (Lagrangian margin)", failed_guard=True)
        report.notes.append(f"eta = {eta:.3g} <= 0: step size inadmissible, margin check skipped")
    else:
        report = _pairwise(trace, "descent (Lagrangian margin)", lambda k: mu[k] - mu[k - 1],
                           lambda k: -eta * zd[k] ** 2, tol, skip)
    if report.skipped or monotone.skipped:
        report.notes.append("iterations with h(z) = +inf excluded")
    report.notes.append(
        "Lagrangian non-increasing at all iterations" if not monotone.violations
        else f"Lagrangian increased at {len(monotone.violations)} iterations"
    )
    report.monotone = not monotone.violations
    return report


def check_s_bound(trace: RunTrace, gamma: float, M: float, tol: float = 1e-8) -> CheckReport:
    """``||s^k - s^{k-1}|| <= gamma M ||z^k - z^{k-1}|| + tol``."""
    sd, zd = trace.column("s_diff"), trace.column("z_diff")
    return _pairwise(trace, "dual step bound", lambda k: sd[k], lambda k: gamma * M * zd[k], tol)


def check_residual_sum(trace: RunTrace, mu0: float, mu_star_lower: float, eta: float,
                       tol: float = 1e-8) -> CheckReport:
    """Every prefix sum of ``||z^k - z^{k-1}||^2`` stays below ``(mu0 - lower) / eta``."""
    if not eta > 0:
        raise ValueError("eta must be positive")
    zd = trace.column("z_diff")
    bound = (mu0 - mu_star_lower) / eta
    running = np.cumsum(np.nan_to_num(zd[1:]) ** 2)
    report = _pairwise(trace, "summed residual bound", lambda k: running[k - 1], lambda k: bound, tol)
    report.notes.append(f"allowance {bound:.6g}")
    return report


def check_grad_bound(trace: RunTrace, gamma: float, M: float, tol: float = 1e-6) -> CheckReport:
    """``||grad f(x^k)|| <= ||z^k - z^{k-1}|| / gamma + M ||x^k - z^k|| + tol``."""
    gf = trace.column("grad_f_norm")
    zd, pr = trace.column("z_diff"), trace.column("primal_residual")
    report = _pairwise(trace, "gradient-norm bound", lambda k: gf[k],
                       lambda k: zd[k] / gamma + M * pr[k], tol,
                       skip=lambda k: not math.isfinite(gf[k]))
    if report.skipped:
        report.notes.append("iterates outside the denoiser image excluded")
    return report


def check_dual_identity(trace: RunTrace, tol: float = 1e-8) -> CheckReport:
    """``||s^k - gamma grad h(z^k)|| <= tol`` for ``k >= 1``."""
    gap = trace.column("dual_gap")
    report = _pairwise(trace, "dual identity", lambda k: gap[k], lambda k: 0.0, tol)
    report.notes.append(f"max gap {np.max(gap[1:]):.3g}" if trace.n_records > 1 else "no iterations")
    return report


def _fmt(v) -> str:
    if v is None:
        return ""
    v = float(v)
    if math.isnan(v):
        return ""
    return repr(v)


def trace_rows(trace: RunTrace):
    cols = {}
    for name in CSV_COLUMNS[1:]:
        try:
            col = trace.column(name)
        except AttributeError:
            col = None
        cols[name] = col if col is not None and len(col) == trace.n_records else None
    for k in range(trace.n_records):
        yield [str(k)] + [_fmt(cols[c][k]) if cols[c] is not None else "" for c in CSV_COLUMNS[1:]]


def write_trace_csv(trace: RunTrace, path) -> None:
    """One row per record with the :data:`CSV_COLUMNS` header; missing values empty."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CSV_COLUMNS)
        writer.writerows(trace_rows(trace))
