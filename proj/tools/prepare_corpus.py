#!/usr/bin/env python3
"""Builds the small grayscale image corpus under data/corpus from the sample
images bundled with scikit-image.

    python3 tools/prepare_corpus.py [--out data/corpus]

Images are converted to 8-bit luminance with BT.601 weights and reduced so
that neither side exceeds 512 pixels.
"""
import argparse
import os

import numpy as np
from skimage import data, io, transform

TRAIN = [
    "brick", "cell", "coins", "grass", "gravel", "immunohistochemistry",
    "motorcycle_left", "rocket", "hubble_deep_field", "retina", "page",
    "clock",
]
EVAL = ["camera", "astronaut", "chelsea", "coffee", "moon"]

LOADERS = {
    "motorcycle_left": lambda: data.stereo_motorcycle()[0],
    "hubble_deep_field": lambda: data.hubble_deep_field(),
    "immunohistochemistry": lambda: data.immunohistochemistry(),
}


def load(name):
    img = LOADERS[name]() if name in LOADERS else getattr(data, name)()
    img = np.asarray(img)
    if img.dtype == bool:
        img = img.astype(np.uint8) * 255
    img = img.astype(np.float64)
    if img.max() <= 1.0:
        img *= 255.0
    if img.ndim == 3:
        img = img[..., :3]
        img = 0.299 * img[..., 0] + 0.587 * img[..., 1] + 0.114 * img[..., 2]
    h, w = img.shape
    f = min(1.0, 512.0 / max(h, w))
    if f < 1.0:
        img = transform.resize(img, (round(h * f), round(w * f)),
                               order=3, anti_aliasing=True,
                               preserve_range=True)
    return np.clip(np.floor(img + 0.5), 0, 255).astype(np.uint8)


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--out", default=os.path.join(
        os.path.dirname(__file__), "..", "data", "corpus"))
    args = ap.parse_args()
    for split, names in (("train", TRAIN), ("eval", EVAL)):
        d = os.path.join(args.out, split)
        os.makedirs(d, exist_ok=True)
        for n in names:
            io.imsave(os.path.join(d, n + ".png"), load(n),
                      check_contrast=False)
            print(split, n)


if __name__ == "__main__":
    main()
