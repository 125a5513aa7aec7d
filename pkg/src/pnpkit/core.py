"""Signals, blur operators, AWGN corruption and image-quality metrics.

Signals are plain float64 numpy arrays: ``(n,)`` vectors, ``(h, w)``
grayscale images or ``(h, w, c)`` multi-channel images. Blurring uses
periodic (circular) boundaries so that it is diagonalised by the 2D DFT.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage


class DivergenceError(FloatingPointError):
    """A signal or iterate became non-finite."""


def as_signal(x, name: str = "signal") -> np.ndarray:
    """Return ``x`` as a finite float64 array."""
    arr = np.array(x, dtype=np.float64, copy=True)
    if not np.all(np.isfinite(arr)):
        raise DivergenceError(f"{name} contains NaN or Inf")
    return arr


def make_rng(seed: int, *stream: int) -> np.random.Generator:
    """Counter-based Philox generator for ``seed`` and an optional stream path.

    Philox is keyed through ``SeedSequence``, so the same ``(seed, *stream)``
    reproduces bit-identical draws on every platform numpy supports.
    """
    ss = np.random.SeedSequence([int(seed), *(int(s) for s in stream)])
    return np.random.Generator(np.random.Philox(ss))


def _centered_transfer(kernel: np.ndarray, shape: tuple[int, int]) -> np.ndarray:
    kh, kw = kernel.shape
    h, w = shape
    if kh > h or kw > w:
        raise ValueError(f"kernel {kernel.shape} larger than image {shape}")
    padded = np.zeros((h, w))
    padded[:kh, :kw] = kernel
    padded = np.roll(padded, (-(kh // 2), -(kw // 2)), axis=(0, 1))
    return np.fft.fft2(padded)


@dataclass(frozen=True)
class BlurOperator:
    """Circular convolution with ``kernel`` on images of spatial ``shape``.

    ``transfer`` is the DFT of the kernel zero-padded to ``shape`` with its
    center moved to the origin, so ``ifft2(transfer * fft2(x))`` is the
    circular convolution of ``x`` with ``kernel``.
    """

    kernel: np.ndarray
    shape: tuple[int, int]
    transfer: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        kernel = np.array(self.kernel, dtype=np.float64)
        if kernel.ndim != 2 or kernel.shape[0] % 2 == 0 or kernel.shape[1] % 2 == 0:
            raise ValueError(f"kernel must be 2D with odd sides, got {kernel.shape}")
        if not np.all(np.isfinite(kernel)):
            raise ValueError("kernel has non-finite entries")
        kernel.setflags(write=False)
        object.__setattr__(self, "kernel", kernel)
        object.__setattr__(self, "shape", (int(self.shape[0]), int(self.shape[1])))
        transfer = _centered_transfer(kernel, self.shape)
        transfer.setflags(write=False)
        object.__setattr__(self, "transfer", transfer)

    @classmethod
    def identity(cls, shape) -> "BlurOperator":
        return cls(np.ones((1, 1)), tuple(shape))

    def _check(self, x: np.ndarray):
        if x.shape[:2] != self.shape or x.ndim not in (2, 3):
            raise ValueError(
                f"signal shape {x.shape} does not match operator shape {self.shape}"
            )

    def _filter(self, x: np.ndarray, transfer: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        self._check(x)
        if x.ndim == 3:
            transfer = transfer[:, :, None]
        return np.real(np.fft.ifft2(transfer * np.fft.fft2(x, axes=(0, 1)), axes=(0, 1)))

    def apply(self, x: np.ndarray) -> np.ndarray:
        return self._filter(x, self.transfer)

    def adjoint(self, x: np.ndarray) -> np.ndarray:
        return self._filter(x, np.conj(self.transfer))

    @property
    def max_gain(self) -> float:
        """Largest ``|K(f)|``, i.e. the operator norm of the blur."""
        return float(np.abs(self.transfer).max())


def circular_convolve(x, op: BlurOperator) -> np.ndarray:
    """Apply ``op`` to each channel of ``x`` in the frequency domain."""
    return op.apply(x)


def awgn_corrupt(x, sigma: float, seed: int) -> np.ndarray:
    """Return ``x + n`` with ``n ~ N(0, sigma^2 I)`` drawn from a Philox stream."""
    if not sigma > 0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    x = np.asarray(x, dtype=np.float64)
    noise = make_rng(seed).standard_normal(x.shape)
    return x + sigma * noise


def _same_shape(x, ref):
    x = np.asarray(x, dtype=np.float64)
    ref = np.asarray(ref, dtype=np.float64)
    if x.shape != ref.shape:
        raise ValueError(f"shape mismatch: {x.shape} vs {ref.shape}")
    return x, ref


def psnr(x, ref, peak: float = 1.0) -> float:
    """PSNR in dB over all pixels and channels jointly.

    Returns ``math.inf`` when the images are identical.
    """
    x, ref = _same_shape(x, ref)
    mse = float(np.mean((x - ref) ** 2))
    if mse == 0.0:
        return float("inf")
    return float(10.0 * np.log10(peak**2 / mse))


SSIM_WINDOW = 11
SSIM_STD = 1.5


def gaussian_window(size: int = SSIM_WINDOW, std: float = SSIM_STD) -> np.ndarray:
    ax = np.arange(size) - (size - 1) / 2
    g = np.exp(-(ax**2) / (2 * std**2))
    w = np.outer(g, g)
    return w / w.sum()


def _ssim_channel(x, ref, window, c1, c2):
    def wmean(a):
        return ndimage.correlate(a, window, mode="wrap")

    r = window.shape[0] // 2
    crop = (slice(r, x.shape[0] - r), slice(r, x.shape[1] - r))
    mx, mr = wmean(x), wmean(ref)
    vx = wmean(x * x) - mx * mx
    vr = wmean(ref * ref) - mr * mr
    cov = wmean(x * ref) - mx * mr
    num = (2 * mx * mr + c1) * (2 * cov + c2)
    den = (mx**2 + mr**2 + c1) * (vx + vr + c2)
    return float(np.mean((num / den)[crop]))


def ssim(x, ref, peak: float = 1.0) -> float:
    """Mean SSIM over all 11x11 windows that lie fully inside the image.

    Gaussian window (std 1.5), population (weighted) statistics,
    ``C1 = (0.01 peak)^2`` and ``C2 = (0.03 peak)^2``. Channels are scored
    independently and averaged.
    """
    x, ref = _same_shape(x, ref)
    if x.ndim not in (2, 3):
        raise ValueError(f"ssim needs a 2D image (optionally with channels), got {x.shape}")
    if x.shape[0] < SSIM_WINDOW or x.shape[1] < SSIM_WINDOW:
        raise ValueError(f"image {x.shape[:2]} smaller than the {SSIM_WINDOW}x{SSIM_WINDOW} window")
    window = gaussian_window()
    c1, c2 = (0.01 * peak) ** 2, (0.03 * peak) ** 2
    if x.ndim == 2:
        return _ssim_channel(x, ref, window, c1, c2)
    return float(np.mean([
        _ssim_channel(x[..., c], ref[..., c], window, c1, c2) for c in range(x.shape[2])
    ]))
