"""Regenerate the bundled 64x64 test images in src/pnpkit/data/.

Two synthetic piecewise-constant images and two downsampled public-domain
photographs shipped with scikit-image (``camera`` and ``astronaut``).
"""

from pathlib import Path

import numpy as np
from skimage import data
from skimage.transform import resize

from pnpkit.io import write_pnpk

OUT = Path(__file__).resolve().parents[1] / "src" / "pnpkit" / "data"
N = 64


def squares() -> np.ndarray:
    img = np.full((N, N), 0.25)
    img[8:28, 8:28] = 0.75
    img[36:58, 14:30] = 0.75
    img[12:50, 40:54] = 0.75
    img[44:52, 44:50] = 0.25
    return img


def disks() -> np.ndarray:
    yy, xx = np.mgrid[:N, :N] + 0.5
    img = np.full((N, N), 0.25)
    for cy, cx, r in [(18, 20, 11), (44, 46, 13), (48, 14, 7), (14, 50, 6)]:
        img[(yy - cy) ** 2 + (xx - cx) ** 2 <= r**2] = 0.75
    return img


def photo(name: str) -> np.ndarray:
    img = getattr(data, name)().astype(np.float64) / 255.0
    shape = (N, N) + img.shape[2:]
    return np.clip(resize(img, shape, anti_aliasing=True, order=1), 0.0, 1.0)


def main():
    OUT.mkdir(parents=True, exist_ok=True)
    images = {
        "squares": squares(),
        "disks": disks(),
        "camera": photo("camera"),
        "astronaut": photo("astronaut"),
    }
    for name, img in images.items():
        write_pnpk(OUT / f"{name}.pnpk", img)
        print(f"{name}: {img.shape} range [{img.min():.3f}, {img.max():.3f}]")


if __name__ == "__main__":
    main()
