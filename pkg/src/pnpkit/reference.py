"""Small, fully specified problems used by ``pnpkit verify`` and the tests.

``reference_problem`` is a 4x4 (16-dim) circular deblurring instance with a
joint two-component GMM prior whose MMSE denoiser has Jacobian norm 4.75 at
the midpoint between its modes. Away from the midpoint the implicit
regularizer's curvature is mild, and the run never leaves that region, so
the sampled Lipschitz constant over the iterate box satisfies the step
rule while the denoiser itself is strongly expansive.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from pnpkit.core import BlurOperator, awgn_corrupt, make_rng
from pnpkit.prior import GmmPrior, gmm_denoiser
from pnpkit.prox import DataFidelity
from pnpkit.solvers import AdmmState

REF_SIGMA = 0.1
REF_SEPARATION = 8 * REF_SIGMA        # distance of each mode from the midpoint
REF_COMPONENT_VAR = 3 * REF_SIGMA**2  # keeps D' >= 3/4 everywhere
REF_NOISE = 0.02
REF_SHAPE = (4, 4)
REF_BOX_MARGIN = 3 * REF_SIGMA
REF_MAX_ITER = 500

WITNESS_SIGMA = 0.5
WITNESS_TAU = 1e-3


def witness_prior(a: float = 1.0, tau: float = WITNESS_TAU) -> GmmPrior:
    """Near point masses at ``+-a``; its MMSE Jacobian at 0 is about ``a^2 / sigma^2``."""
    return GmmPrior([0.5, 0.5], [[-a], [a]], [tau**2, tau**2])


def reference_prior() -> GmmPrior:
    d = REF_SHAPE[0] * REF_SHAPE[1]
    u = np.ones(d) / np.sqrt(d)
    mid = 0.5 * np.ones(d)
    return GmmPrior([0.5, 0.5], [mid + REF_SEPARATION * u, mid - REF_SEPARATION * u],
                    [REF_COMPONENT_VAR, REF_COMPONENT_VAR])


def reference_midpoint() -> np.ndarray:
    return 0.5 * np.ones(REF_SHAPE[0] * REF_SHAPE[1])


@dataclass(frozen=True)
class ReferenceProblem:
    prior: GmmPrior
    sigma: float
    truth: np.ndarray
    df: DataFidelity
    init: AdmmState
    box: tuple

    @property
    def y(self):
        return self.df.y


def reference_problem(seed: int = 7) -> ReferenceProblem:
    """Truth drawn from the upper mode, blurred by a 3x3 binomial kernel plus AWGN.

    The ADMM start is ``x0 = y``, ``z0 = D(y)``, ``s0 = y - D(y)``, so that
    ``s0 = gamma grad h(z0)`` already holds at ``k = 0``. The Lipschitz
    sample box spans, per pixel, the hull of ``y`` and ``D(y)`` widened by
    ``3 sigma``.
    """
    prior = reference_prior()
    rng = make_rng(seed)
    truth = (prior.means[0] + np.sqrt(REF_COMPONENT_VAR) * rng.standard_normal(prior.dim))
    truth = truth.reshape(REF_SHAPE)
    kernel = np.array([[1.0, 2.0, 1.0], [2.0, 4.0, 2.0], [1.0, 2.0, 1.0]]) / 16.0
    blur = BlurOperator(kernel, REF_SHAPE)
    y = awgn_corrupt(blur.apply(truth), REF_NOISE, seed + 4)
    df = DataFidelity(blur, y, REF_NOISE**2)
    init = AdmmState.dual_consistent(y, gmm_denoiser(prior), REF_SIGMA)
    z0 = init.z
    lo = np.minimum(y, z0).ravel() - REF_BOX_MARGIN
    hi = np.maximum(y, z0).ravel() + REF_BOX_MARGIN
    return ReferenceProblem(prior, REF_SIGMA, truth, df, init, (lo, hi))


def prox_check_priors():
    """Three 1D priors and the noise level each is paired with."""
    return [
        (GmmPrior([0.5, 0.5], [[-1.0], [1.0]], [0.1, 0.1]), 0.5),
        (GmmPrior([0.2, 0.5, 0.3], [[-2.0], [0.0], [1.5]], [0.05, 0.3, 0.1]), 0.4),
        (witness_prior(), WITNESS_SIGMA),
    ]


def gradient_check_priors():
    """Priors for finite-difference checks of ``grad h_mmse`` (d <= 2)."""
    return [
        (GmmPrior([0.5, 0.5], [[-1.0], [1.0]], [0.1, 0.1]), 0.5),
        (GmmPrior([0.2, 0.5, 0.3], [[-2.0], [0.0], [1.5]], [0.05, 0.3, 0.1]), 0.4),
        (GmmPrior([0.6, 0.4], [[0.0, 0.0], [1.5, -1.0]],
                  [[[0.3, 0.1], [0.1, 0.2]], [0.15, 0.4]]), 0.5),
    ]


def random_prior(rng: np.random.Generator, d: int, k: int) -> GmmPrior:
    w = rng.dirichlet(np.ones(k))
    means = 2.0 * rng.standard_normal((k, d))
    covs = []
    for _ in range(k):
        B = rng.standard_normal((d, d))
        covs.append(0.3 * B @ B.T / d + 0.05 * np.eye(d))
    return GmmPrior(w, means, covs)


def tweedie_cases(n: int = 100, seed: int = 0):
    """``n`` random ``(prior, sigma, z)`` triples with ``d <= 4``."""
    rng = make_rng(seed)
    cases = []
    for _ in range(n):
        d = int(rng.integers(1, 5))
        prior = random_prior(rng, d, int(rng.integers(1, 5)))
        sigma = float(rng.uniform(0.2, 1.5))
        z = 3.0 * rng.standard_normal(d)
        cases.append((prior, sigma, z))
    return cases
