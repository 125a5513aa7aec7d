"""PnP-ADMM / PnP-FISTA with exact Gaussian-mixture MMSE denoisers."""

from pnpkit.core import (
    BlurOperator,
    DivergenceError,
    awgn_corrupt,
    circular_convolve,
    make_rng,
    psnr,
    ssim,
)
from pnpkit.diagnostics import (
    MmseRegularizer,
    augmented_lagrangian,
    check_descent,
    check_dual_identity,
    check_grad_bound,
    check_residual_sum,
    check_s_bound,
    descent_margin_eta,
    grad_f_norm,
)
from pnpkit.prior import (
    DenoiserHandle,
    DenoiserInverseError,
    GmmPrior,
    denoiser_inverse,
    estimate_lipschitz_M,
    gmm_denoiser,
    gmm_h_sigma,
    gmm_h_sigma_grad,
    hmmse_eval,
    hmmse_grad,
    identity_denoiser,
    mmse_denoise,
    mmse_jacobian,
    score_identity_gap,
)
from pnpkit.prox import DataFidelity, data_fidelity_grad, prox_bruteforce, prox_quadratic_fft
from pnpkit.solvers import (
    AdmmState,
    RunTrace,
    SolverConfig,
    admissible_step,
    admm_classic,
    pnp_admm,
    pnp_fista,
)

__version__ = "0.1.0"
