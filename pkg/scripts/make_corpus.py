"""Regenerate tests/data: four scikit-image sample photos plus one synthetic scene."""
from pathlib import Path

import numpy as np
from PIL import Image

OUT = Path(__file__).resolve().parent.parent / "tests" / "data"


def synthetic(size=256, seed=7):
    rng = np.random.default_rng(seed)
    yy, xx = np.mgrid[0:size, 0:size] / size
    img = np.empty((size, size, 3))
    img[..., 0] = 40 + 180 * xx
    img[..., 1] = 60 + 150 * yy
    img[..., 2] = 200 - 120 * xx * yy
    disc = (xx - 0.3) ** 2 + (yy - 0.35) ** 2 < 0.04
    img[disc] = [230, 40, 50]
    img[(xx > 0.55) & (xx < 0.9) & (yy > 0.1) & (yy < 0.4)] = [20, 20, 30]
    stripes = (yy > 0.6) & (xx < 0.5)
    img[stripes, 1] = 128 + 100 * np.sin(2 * np.pi * 12 * xx[stripes])
    checker = (yy > 0.6) & (xx >= 0.5)
    img[checker] = (((xx[checker] * 32).astype(int) + (yy[checker] * 32).astype(int)) % 2)[:, None] * 200 + 30
    img += rng.normal(0, 3, img.shape)
    return np.clip(np.round(img), 0, 255).astype(np.uint8)


def main():
    from skimage import data

    OUT.mkdir(parents=True, exist_ok=True)
    Image.fromarray(data.astronaut()).save(OUT / "astronaut.png")
    Image.fromarray(data.camera()).save(OUT / "camera.png")
    Image.fromarray(data.chelsea()).save(OUT / "chelsea.png")
    Image.fromarray(data.coffee()[:, 44:556]).save(OUT / "coffee.png")
    Image.fromarray(synthetic()).save(OUT / "synthetic.png")


if __name__ == "__main__":
    main()
