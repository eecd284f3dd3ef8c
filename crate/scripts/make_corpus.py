#!/usr/bin/env python3
"""Cut the desk photo corpus (128x128 RGB, binary P6) from photographs that
ship with scikit-image, scikit-learn and matplotlib.

Usage: python3 scripts/make_corpus.py [out_dir]
"""
import os
import sys

import numpy as np
from PIL import Image

import matplotlib
import skimage
import sklearn

CROP = 128
PER_PHOTO = None

SKI = os.path.join(os.path.dirname(skimage.__file__), "data")
SKL = os.path.join(os.path.dirname(sklearn.__file__), "datasets", "images")
MPL = os.path.join(os.path.dirname(matplotlib.__file__), "mpl-data", "sample_data")

SOURCES = [
    ("astronaut", os.path.join(SKI, "astronaut.png")),
    ("coffee", os.path.join(SKI, "coffee.png")),
    ("chelsea", os.path.join(SKI, "chelsea.png")),
    ("rocket", os.path.join(SKI, "rocket.jpg")),
    ("hopper", os.path.join(MPL, "grace_hopper.jpg")),
    ("china", os.path.join(SKL, "china.jpg")),
    ("flower", os.path.join(SKL, "flower.jpg")),
]


def crops(arr):
    h, w = arr.shape[:2]
    cells = [(r, c) for r in range(0, h - CROP + 1, CROP) for c in range(0, w - CROP + 1, CROP)]
    if PER_PHOTO is not None and len(cells) > PER_PHOTO:
        idx = np.linspace(0, len(cells) - 1, PER_PHOTO).round().astype(int)
        cells = [cells[i] for i in idx]
    for r, c in cells:
        yield r, c, arr[r : r + CROP, c : c + CROP]


def main():
    out = sys.argv[1] if len(sys.argv) > 1 else os.path.join(os.path.dirname(__file__), "..", "corpus", "photos")
    os.makedirs(out, exist_ok=True)
    n = 0
    for name, path in SOURCES:
        arr = np.asarray(Image.open(path).convert("RGB"), dtype=np.uint8)
        for r, c, tile in crops(arr):
            fname = os.path.join(out, f"{name}_{r:04d}_{c:04d}.ppm")
            with open(fname, "wb") as f:
                f.write(f"P6\n{CROP} {CROP}\n255\n".encode())
                f.write(np.ascontiguousarray(tile).tobytes())
            n += 1
    print(f"wrote {n} tiles to {out}")


if __name__ == "__main__":
    main()
