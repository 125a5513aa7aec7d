"""Deblurring experiments (kernels x images x noise levels x solvers x denoisers)
and the theory verification suites behind ``pnpkit verify``.
"""

from __future__ import annotations

import csv
import math
import os
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Union

import numpy as np
import tomli

from pnpkit import reference as ref
from pnpkit.core import BlurOperator, awgn_corrupt, make_rng, psnr, ssim
from pnpkit.diagnostics import (
    MmseRegularizer,
    annotate_trace,
    check_descent,
    check_dual_identity,
    check_grad_bound,
    check_residual_sum,
    check_s_bound,
    descent_margin_eta,
    write_trace_csv,
)
from pnpkit.io import load_image
from pnpkit.prior import (
    GmmPrior,
    estimate_lipschitz_M,
    gmm_denoiser,
    gmm_h_sigma_grad,
    hmmse_eval,
    hmmse_grad,
    identity_denoiser,
    mmse_denoise,
    mmse_jacobian,
    score_identity_gap,
)
from pnpkit.prox import (
    DataFidelity,
    data_fidelity_grad,
    grid_points,
    prox_bruteforce,
    prox_quadratic_fft,
)
from pnpkit.solvers import AdmmState, SolverConfig, admissible_step, pnp_admm, pnp_fista

DEFAULT_NOISE_LEVELS = (0.01, 0.02, 0.03)
SOLVERS = ("admm", "fista")
DENOISERS = ("gmm_mmse", "gaussian_linear", "identity")


class ConfigError(ValueError):
    """Invalid experiment configuration (CLI exit code 2)."""


# --- kernels -----------------------------------------------------------------

def gaussian_kernel(std: float = 1.6, size: int = 9) -> np.ndarray:
    ax = np.arange(size) - size // 2
    g = np.exp(-(ax**2) / (2 * std**2))
    k = np.outer(g, g)
    return k / k.sum()


def box_kernel(size: int = 5) -> np.ndarray:
    return np.full((size, size), 1.0 / size**2)


def disk_kernel(radius: float = 3) -> np.ndarray:
    """Pixels whose centers lie within ``radius`` of the central pixel center."""
    r = int(math.floor(radius))
    ax = np.arange(-r, r + 1)
    k = (ax[:, None] ** 2 + ax[None, :] ** 2 <= radius**2).astype(np.float64)
    return k / k.sum()


def motion_kernel(length: int = 7) -> np.ndarray:
    """Diagonal line of ``length`` pixels (top-left to bottom-right)."""
    if length % 2 == 0:
        raise ValueError("motion length must be odd")
    return np.eye(length) / length


def delta_kernel() -> np.ndarray:
    return np.ones((1, 1))


_KERNELS = {
    "gaussian": (gaussian_kernel, (float, int)),
    "box": (box_kernel, (int,)),
    "disk": (disk_kernel, (float,)),
    "motion": (motion_kernel, (int,)),
    "delta": (delta_kernel, ()),
}

BUILTIN_KERNEL_SPECS = ("gaussian:1.6,9", "box:5", "disk:3", "motion:7")


def make_kernel(spec: str) -> np.ndarray:
    """Parse ``name[:p1[,p2]]``, e.g. ``gaussian:1.6,9``, ``box:5``, ``disk:3``."""
    name, _, params = spec.partition(":")
    if name not in _KERNELS:
        raise ConfigError(f"unknown kernel {name!r}; choose from {sorted(_KERNELS)}")
    fn, types = _KERNELS[name]
    args = [p for p in params.split(",") if p] if params else []
    if len(args) > len(types):
        raise ConfigError(f"too many parameters for kernel {name!r}")
    try:
        return fn(*(t(a) for t, a in zip(types, args)))
    except ValueError as exc:
        raise ConfigError(f"bad kernel spec {spec!r}: {exc}") from exc


def builtin_kernels() -> list:
    """Gaussian (std 1.6, 9x9), box 5x5, disk radius 3, diagonal motion length 7."""
    return [(spec, make_kernel(spec)) for spec in BUILTIN_KERNEL_SPECS]


# --- configuration -----------------------------------------------------------

DEFAULT_PRIORS = {
    # separated bimodal per-pixel prior: expansive MMSE denoiser near 0.5
    "gmm_mmse": {"component": [
        {"weight": 0.5, "mean": [0.25], "iso": 0.12**2},
        {"weight": 0.5, "mean": [0.75], "iso": 0.12**2},
    ]},
    # single Gaussian: linear shrinkage, Lipschitz constant < 1
    "gaussian_linear": {"component": [{"weight": 1.0, "mean": [0.5], "iso": 0.12**2}]},
}


def prior_from_spec(spec: dict) -> GmmPrior:
    comps = spec.get("component")
    if not comps:
        raise ConfigError("prior needs at least one [[...component]] entry")
    weights, means, covs = [], [], []
    for c in comps:
        unknown = set(c) - {"weight", "mean", "iso", "diag", "full"}
        if unknown:
            raise ConfigError(f"unknown prior component keys {sorted(unknown)}")
        given = [key for key in ("iso", "diag", "full") if key in c]
        if len(given) != 1:
            raise ConfigError("each component needs exactly one of iso, diag, full")
        weights.append(float(c["weight"]))
        means.append([float(v) for v in c["mean"]])
        covs.append(np.asarray(c[given[0]], dtype=np.float64))
    try:
        return GmmPrior(np.array(weights), np.array(means), covs)
    except ValueError as exc:
        raise ConfigError(f"invalid prior: {exc}") from exc


@dataclass
class ExperimentConfig:
    images: list = field(default_factory=lambda: ["squares", "disks"])
    kernels: list = field(default_factory=lambda: list(BUILTIN_KERNEL_SPECS))
    noise_levels: list = field(default_factory=lambda: list(DEFAULT_NOISE_LEVELS))
    solvers: list = field(default_factory=lambda: list(SOLVERS))
    denoisers: list = field(default_factory=lambda: ["gmm_mmse", "gaussian_linear"])
    priors: dict = field(default_factory=lambda: dict(DEFAULT_PRIORS))
    gamma: Union[str, float] = "auto"      # "auto", "sigma2" or a positive number
    sigma: Union[str, float] = "noise"     # "noise" or a positive number
    max_iter: int = 200
    stop_tol: float = 0.0
    seed: int = 0
    lipschitz_box: tuple = (-0.25, 1.25)
    lipschitz_samples: int = 256
    out: Optional[str] = None

    def __post_init__(self):
        for name in ("images", "kernels", "noise_levels", "solvers", "denoisers"):
            if not getattr(self, name):
                raise ConfigError(f"{name} must be a non-empty list")
        if any(not n > 0 for n in self.noise_levels):
            raise ConfigError("noise levels must be positive")
        bad = set(self.solvers) - set(SOLVERS)
        if bad:
            raise ConfigError(f"unknown solvers {sorted(bad)}")
        bad = set(self.denoisers) - set(DENOISERS)
        if bad:
            raise ConfigError(f"unknown denoisers {sorted(bad)}")
        if isinstance(self.gamma, str) and self.gamma not in ("auto", "sigma2"):
            raise ConfigError("gamma must be 'auto', 'sigma2' or a number")
        if not isinstance(self.gamma, str) and not self.gamma > 0:
            raise ConfigError("gamma must be positive")
        if isinstance(self.sigma, str) and self.sigma != "noise":
            raise ConfigError("sigma must be 'noise' or a number")
        if self.max_iter < 1:
            raise ConfigError("max_iter must be at least 1")
        self.priors = {**DEFAULT_PRIORS, **self.priors}
        self.built_priors = {name: prior_from_spec(spec) for name, spec in self.priors.items()
                             if name in ("gmm_mmse", "gaussian_linear")}
        for k in self.kernels:
            make_kernel(k)  # validates the spec early

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        allowed = set(cls.__dataclass_fields__)
        unknown = set(data) - allowed - {"prior"}
        if unknown:
            raise ConfigError(f"unknown config keys {sorted(unknown)}")
        kwargs = {k: v for k, v in data.items() if k != "prior"}
        if "prior" in data:
            kwargs["priors"] = data["prior"]
        if "lipschitz_box" in kwargs:
            kwargs["lipschitz_box"] = tuple(kwargs["lipschitz_box"])
        return cls(**kwargs)

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        try:
            with open(path, "rb") as fh:
                data = tomli.load(fh)
        except (OSError, tomli.TOMLDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        return cls.from_dict(data)


# --- running -----------------------------------------------------------------

@dataclass(frozen=True)
class Cell:
    index: int
    data_index: int
    image: str
    kernel: str
    noise: float
    solver: str
    denoiser: str

    @property
    def slug(self) -> str:
        kern = re.sub(r"[^A-Za-z0-9.]+", "-", self.kernel)
        img = re.sub(r"[^A-Za-z0-9.]+", "-", Path(self.image).stem)
        return f"{self.solver}_{self.denoiser}_{img}_{kern}_n{self.noise:g}"


def make_denoiser(name: str, cfg: ExperimentConfig):
    if name == "identity":
        return identity_denoiser(), None
    prior = cfg.built_priors[name]
    return gmm_denoiser(prior, name), prior


def resolve_gamma(cfg: ExperimentConfig, prior: Optional[GmmPrior], sigma: float) -> float:
    """Step size for one cell.

    ``auto``: ``admissible_step(M)`` with ``M`` sampled at the reference step
    ``sigma^2``. For the identity denoiser (no regularizer) ``auto`` falls
    back to ``sigma^2``.
    """
    if not isinstance(cfg.gamma, str):
        return float(cfg.gamma)
    if cfg.gamma == "sigma2" or prior is None:
        return sigma**2
    M = estimate_lipschitz_M(prior, sigma, sigma**2, cfg.lipschitz_box,
                             cfg.lipschitz_samples, cfg.seed)
    return admissible_step(M)


def noise_seed(master: int, data_index: int) -> int:
    return int(np.random.SeedSequence([int(master), int(data_index)]).generate_state(1)[0])


LAM_NOISELESS = 1e-12


def corrupt(truth, kernel, noise, seed):
    """Blur plus AWGN; ``noise = 0`` returns the noiseless blurred image."""
    blur = BlurOperator(kernel, truth.shape[:2])
    clean = blur.apply(truth)
    return blur, clean if noise == 0 else awgn_corrupt(clean, noise, seed)


def run_single(truth, kernel, noise: float, solver: str, denoiser_name: str,
               cfg: ExperimentConfig, seed: int):
    """Corrupt ``truth``, solve, and return ``(trace, y, x_hat, gamma, sigma)``."""
    blur, y = corrupt(truth, kernel, noise, seed)
    df = DataFidelity(blur, y, noise**2 if noise > 0 else LAM_NOISELESS)
    sigma = float(cfg.sigma) if cfg.sigma != "noise" else noise if noise > 0 else 1.0
    denoiser, prior = make_denoiser(denoiser_name, cfg)
    gamma = resolve_gamma(cfg, prior, sigma)
    scfg = SolverConfig(gamma, sigma, cfg.max_iter, cfg.stop_tol, record_diagnostics=True)
    if solver == "admm":
        trace = pnp_admm(lambda v, g: prox_quadratic_fft(df, g, v), denoiser,
                         AdmmState.from_x(y), scfg)
    else:
        step = df.lam / blur.max_gain**2
        trace = pnp_fista(lambda w: data_fidelity_grad(df, w), denoiser, y, scfg, step)
    annotate_trace(trace, truth=truth)
    return trace, y, trace.final.x, gamma, sigma


def _run_cell(cell: Cell, cfg: ExperimentConfig, out: Path) -> dict:
    row = {"cell": cell.slug, "solver": cell.solver, "denoiser": cell.denoiser,
           "image": cell.image, "kernel": cell.kernel, "noise": cell.noise}
    try:
        truth = load_image(cell.image)
        kernel = make_kernel(cell.kernel)
        trace, y, x_hat, gamma, sigma = run_single(
            truth, kernel, cell.noise, cell.solver, cell.denoiser, cfg,
            noise_seed(cfg.seed, cell.data_index))
    except Exception as exc:  # per-cell failure is recorded, the sweep continues
        row.update(status="error", error=f"{type(exc).__name__}: {exc}")
        return row
    write_trace_csv(trace, out / "cells" / f"{cell.slug}.csv")
    rel = trace.column("rel_change")
    below = np.flatnonzero(rel < 1e-4)
    row.update(
        status="ok", gamma=gamma, sigma=sigma, iterations=trace.n_records - 1,
        psnr_input=psnr(y, truth), psnr=float(trace.column("psnr")[-1]),
        ssim=ssim(x_hat, truth) if min(truth.shape[:2]) >= 11 else math.nan,
        first_rel_below_1e4=int(below[0]) if below.size else -1,
    )
    return row


def enumerate_cells(cfg: ExperimentConfig) -> list:
    cells = []
    data_index = 0
    for image in cfg.images:
        for kernel in cfg.kernels:
            for noise in cfg.noise_levels:
                for solver in cfg.solvers:
                    for den in cfg.denoisers:
                        cells.append(Cell(len(cells), data_index, image, kernel, float(noise),
                                          solver, den))
                data_index += 1
    return cells


@dataclass
class SummaryTable:
    """Mean final PSNR per (solver, denoiser) and noise level, plus the overall mean."""

    noise_levels: list
    rows: dict  # (solver, denoiser) -> {noise: [psnr, ...]}

    @classmethod
    def from_runs(cls, runs: list, noise_levels) -> "SummaryTable":
        rows: dict = {}
        for r in runs:
            if r.get("status") != "ok":
                continue
            cell = rows.setdefault((r["solver"], r["denoiser"]), {n: [] for n in noise_levels})
            cell[r["noise"]].append(r["psnr"])
        return cls(list(noise_levels), rows)

    def means(self, key) -> list:
        return [float(np.mean(self.rows[key][n])) if self.rows[key][n] else math.nan
                for n in self.noise_levels]

    def average(self, key) -> float:
        vals = [v for n in self.noise_levels for v in self.rows[key][n]]
        return float(np.mean(vals)) if vals else math.nan

    def header(self) -> list:
        return ["method"] + [f"{n:g}" for n in self.noise_levels] + ["avg"]

    def records(self):
        for solver, den in sorted(self.rows):
            yield [f"{solver.upper()} ({den})", *self.means((solver, den)),
                   self.average((solver, den))]

    def to_text(self) -> str:
        lines = []
        width = max([len(r[0]) for r in self.records()] + [6])
        head = self.header()
        lines.append(f"{head[0]:<{width}}  " + "  ".join(f"{h:>8}" for h in head[1:]))
        for rec in self.records():
            lines.append(f"{rec[0]:<{width}}  " + "  ".join(f"{v:8.2f}" for v in rec[1:]))
        return "\n".join(lines) + "\n"

    def write(self, out: Path):
        with open(out / "summary.csv", "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(self.header())
            for rec in self.records():
                w.writerow([rec[0]] + [repr(float(v)) for v in rec[1:]])
        (out / "summary.txt").write_text(self.to_text())


RUN_COLUMNS = ("cell", "solver", "denoiser", "image", "kernel", "noise", "status", "gamma",
               "sigma", "iterations", "psnr_input", "psnr", "ssim", "first_rel_below_1e4",
               "error")


def _write_runs(runs, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(RUN_COLUMNS)
        for r in runs:
            w.writerow([repr(r[c]) if isinstance(r.get(c), float) else r.get(c, "")
                        for c in RUN_COLUMNS])


def _write_gnuplot(runs, path):
    ok = [r for r in runs if r.get("status") == "ok"]
    lines = [
        "# Relative change ||x^k - x^{k+1}|| / ||x^{k+1}|| per iteration.",
        "# Usage: gnuplot -p plot_rel_change.gp",
        "set datafile separator ','",
        "set logscale y",
        "set xlabel 'iteration k'",
        "set ylabel 'relative change'",
        "set key outside right",
    ]
    if ok:
        parts = [f"'cells/{r['cell']}.csv' every ::1 using 1:6 with lines title '{r['cell']}'" for r in ok]
        lines.append("plot " + ", \\\n     ".join(parts))
    path.write_text("\n".join(lines) + "\n")


def thread_count() -> int:
    env = os.environ.get("PNPKIT_THREADS")
    if env:
        return max(1, int(env))
    return min(4, os.cpu_count() or 1)


def run_experiment(cfg: ExperimentConfig, out=None):
    """Run every cell, write per-cell CSVs and the summary; return ``(table, runs)``."""
    out = Path(out or cfg.out or "results")
    (out / "cells").mkdir(parents=True, exist_ok=True)
    cells = enumerate_cells(cfg)
    with ThreadPoolExecutor(max_workers=thread_count()) as pool:
        runs = list(pool.map(lambda c: _run_cell(c, cfg, out), cells))
    table = SummaryTable.from_runs(runs, [float(n) for n in cfg.noise_levels])
    table.write(out)
    _write_runs(runs, out / "runs.csv")
    _write_gnuplot(runs, out / "plot_rel_change.gp")
    return table, runs


# --- theory verification -----------------------------------------------------

@dataclass
class SuiteResult:
    lines: list = field(default_factory=list)
    failures: int = 0
    messages: list = field(default_factory=list)

    def add(self, name: str, passed: bool, detail: str = ""):
        self.lines.append(f"[{'PASS' if passed else 'FAIL'}] {name}" + (f": {detail}" if detail else ""))
        self.failures += not passed

    def add_report(self, report):
        self.lines.append(report.line())
        self.failures += not report.passed

    @property
    def ok(self) -> bool:
        return self.failures == 0


def run_theorem1(gamma: Optional[float] = None, box_margin: Optional[float] = None,
                 max_iter: int = ref.REF_MAX_ITER, trace_csv=None):
    """PnP-ADMM on the 16-dim reference problem with every convergence check.

    Returns ``(SuiteResult, details)``; ``details`` holds the trace and the
    constants used.
    """
    res = SuiteResult()
    prob = ref.reference_problem()
    if box_margin is not None:
        d = box_margin - ref.REF_BOX_MARGIN
        prob = ref.ReferenceProblem(prob.prior, prob.sigma, prob.truth, prob.df, prob.init,
                                    (prob.box[0] - d, prob.box[1] + d))
    sigma = prob.sigma
    M_ref = estimate_lipschitz_M(prob.prior, sigma, sigma**2, prob.box, 200, 1)
    if gamma is None:
        gamma = admissible_step(M_ref)
    M = estimate_lipschitz_M(prob.prior, sigma, gamma, prob.box, 200, 1)
    eta = descent_margin_eta(gamma, M)
    res.lines.append(
        f"gamma = {gamma:.6g}, M = {M:.6g} (sampled at this gamma), gamma*M = {gamma * M:.4f}, "
        f"eta = {eta:.6g}"
    )
    res.add("step rule gamma*M < 1/2 (eta > 0)", eta > 0, f"eta = {eta:.6g}")
    if eta <= 0:
        res.messages.append(
            "the sampled Lipschitz constant violates gamma < 1/(2M); the descent guarantee does "
            "not apply (the sample box reaches the expansive region of the denoiser)"
        )

    J_mid = mmse_jacobian(prob.prior, ref.reference_midpoint(), sigma)
    jnorm = float(np.linalg.norm(J_mid, 2))
    res.add("denoiser expansive at the mode midpoint (||J|| >= 2)", jnorm >= 2, f"||J|| = {jnorm:.4f}")

    cfg = SolverConfig(gamma, sigma, max_iter, 0.0, record_diagnostics=True)
    trace = pnp_admm(lambda v, g: prox_quadratic_fft(prob.df, g, v), gmm_denoiser(prob.prior),
                     prob.init, cfg)
    reg = MmseRegularizer(prob.prior, sigma, gamma)
    annotate_trace(trace, prob.df, reg, truth=prob.truth)
    if trace_csv is not None:
        write_trace_csv(trace, trace_csv)

    lo, hi = prob.box
    pts = np.array([a.ravel() for a in trace.xs + trace.zs])
    inside = bool(np.all((pts >= lo) & (pts <= hi)))
    res.add("all iterates inside the Lipschitz sample box", inside)

    res.add_report(check_descent(trace, eta, tol=1e-8))
    res.add_report(check_s_bound(trace, gamma, M, tol=1e-8))
    mu = trace.column("lagrangian")
    lower = float(np.nanmin(trace.column("objective")))
    if eta > 0:
        res.add_report(check_residual_sum(trace, mu[0], lower, eta, tol=1e-8))
    else:
        res.lines.append("[SKIP] summed residual bound: needs eta > 0")
    res.add_report(check_grad_bound(trace, gamma, M, tol=1e-6))
    res.add_report(check_dual_identity(trace, tol=1e-8))
    gf = trace.column("grad_f_norm")
    below = np.flatnonzero(gf < 1e-5)
    res.add("||grad f(x^k)|| < 1e-5 within the run", below.size > 0,
            f"first at k = {below[0]}" if below.size else f"min {np.nanmin(gf):.3g}")
    rel = trace.column("rel_change")
    res.lines.append(
        "relative change ||x^k - x^{k+1}||/||x^{k+1}|| at k = 0, 10, 50, 100: "
        + ", ".join(f"{rel[k]:.3g}" for k in (0, 10, 50, 100) if k < len(rel))
    )
    return res, {"trace": trace, "gamma": gamma, "M": M, "M_ref": M_ref, "eta": eta,
                 "problem": prob, "jacobian_norm": jnorm}


def run_prox_suite(n_points: int = 200, seed: int = 0):
    """Grid-search prox of ``h_mmse`` (gamma = sigma^2) against the MMSE denoiser."""
    res = SuiteResult()
    lo, hi, n = -4.0, 4.0, 8001
    step = (hi - lo) / (n - 1)
    grid = grid_points(lo, hi, n, 1)
    zs = make_rng(seed).uniform(-3.0, 3.0, n_points)
    for i, (prior, sigma) in enumerate(ref.prox_check_priors()):
        gamma = sigma**2
        table = hmmse_eval(prior, grid, sigma, gamma)
        d = mmse_denoise(prior, zs[:, None], sigma)[:, 0]
        errs = np.array([
            abs(prox_bruteforce(None, gamma, [z], (lo, hi, n), h_values=table)[0] - dz)
            for z, dz in zip(zs, d)
        ])
        frac = float(np.mean(errs <= 2 * step))
        res.add(f"prox = MMSE denoiser, prior {i + 1}", frac >= 0.99,
                f"{frac:.1%} of {n_points} points within 2 grid steps (max err {errs.max():.2e})")
    prior = ref.witness_prior()
    jn = float(np.linalg.norm(mmse_jacobian(prior, [0.0], ref.WITNESS_SIGMA), 2))
    res.add("expansive witness ||J_D(0)|| = 4 +- 5% (a=1, sigma=0.5)", abs(jn - 4) <= 0.2,
            f"{jn:.5f}")
    return res


def run_tweedie_suite(seed: int = 0):
    """Tweedie identity and finite-difference consistency of ``grad h_mmse``."""
    res = SuiteResult()
    gaps = [score_identity_gap(p, z, s) for p, s, z in ref.tweedie_cases(100, seed)]
    res.add("Tweedie identity on 100 random (prior, sigma, z)", max(gaps) <= 1e-10,
            f"max gap {max(gaps):.2e}")
    rng = make_rng(seed, 1)
    for i, (prior, sigma) in enumerate(ref.gradient_check_priors()):
        gamma = sigma**2
        worst = gradient_fd_error(prior, sigma, gamma, rng, 50)
        res.add(f"grad h_mmse vs central differences, prior {i + 1}", worst <= 1e-4,
                f"max relative error {worst:.2e} over 50 points")
    return res


def gradient_fd_error(prior, sigma, gamma, rng, n_points, step=1e-5) -> float:
    """Worst relative error of ``hmmse_grad`` against central differences of ``hmmse_eval``."""
    d = prior.dim
    z = prior.means[rng.integers(prior.n_components, size=n_points)]
    z = z + rng.standard_normal((n_points, d))
    X = mmse_denoise(prior, z, sigma)
    G = hmmse_grad(prior, X, sigma, gamma)
    E = step * np.eye(d)
    fd = np.stack([
        (hmmse_eval(prior, X + E[j], sigma, gamma) - hmmse_eval(prior, X - E[j], sigma, gamma))
        / (2 * step) for j in range(d)
    ], axis=1)
    rel = np.linalg.norm(fd - G, axis=1) / np.maximum(np.linalg.norm(G, axis=1), 1e-12)
    return float(rel.max())


def verify_theory(suite: str = "all", gamma: Optional[float] = None,
                  box_margin: Optional[float] = None, out=print) -> int:
    """Run the requested suites, print one line per check, return the exit code."""
    suites = ("theorem1", "prox", "tweedie") if suite == "all" else (suite,)
    failures = 0
    for name in suites:
        out(f"== {name}")
        if name == "theorem1":
            res, _ = run_theorem1(gamma=gamma, box_margin=box_margin)
        elif name == "prox":
            res = run_prox_suite()
        elif name == "tweedie":
            res = run_tweedie_suite()
        else:
            raise ConfigError(f"unknown suite {name!r}")
        for line in res.lines:
            out(line)
        for msg in res.messages:
            out(f"note: {msg}")
        failures += res.failures
    out(f"== {'all checks passed' if failures == 0 else f'{failures} checks failed'}")
    return 0 if failures == 0 else 1
