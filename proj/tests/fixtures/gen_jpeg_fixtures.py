#!/usr/bin/env python3
"""Generates the JPEG conformance corpus.

Each fixture is encoded with Pillow (libjpeg-turbo) and decoded back with the
same library to produce the reference PPM. The decoder under test must stay
within one intensity level of these references.

Usage: gen_jpeg_fixtures.py OUT_DIR
"""
import io
import sys
from pathlib import Path

import numpy as np
from PIL import Image

SUBSAMPLING = {"444": 0, "422": 1, "420": 2}


def synth_photo(width, height, seed):
    rng = np.random.default_rng(seed)
    yy, xx = np.mgrid[0:height, 0:width].astype(np.float64)
    img = np.zeros((height, width, 3))
    for c in range(3):
        fx, fy = rng.uniform(0.5, 4.0, 2)
        phase = rng.uniform(0, 2 * np.pi)
        img[..., c] = 128 + 80 * np.sin(2 * np.pi * (fx * xx / max(width, 1) + fy * yy / max(height, 1)) + phase)
    for _ in range(6):
        cx, cy = rng.uniform(0, width), rng.uniform(0, height)
        r = rng.uniform(0.05, 0.3) * max(width, height)
        color = rng.uniform(0, 255, 3)
        mask = (xx - cx) ** 2 + (yy - cy) ** 2 < r * r
        img[mask] = 0.6 * img[mask] + 0.4 * color
    img += rng.normal(0, 12, img.shape)
    return np.clip(img, 0, 255).astype(np.uint8)


def write_ppm(path, arr):
    h, w = arr.shape[:2]
    with open(path, "wb") as f:
        f.write(b"P6\n%d %d\n255\n" % (w, h))
        f.write(arr.tobytes())


def emit(out, name, arr, **save_kwargs):
    img = Image.fromarray(arr)
    buf = io.BytesIO()
    img.save(buf, "JPEG", **save_kwargs)
    data = buf.getvalue()
    (out / f"{name}.jpg").write_bytes(data)
    decoded = Image.open(io.BytesIO(data))
    decoded.load()
    write_ppm(out / f"{name}.ppm", np.asarray(decoded.convert("RGB")))


def main():
    out = Path(sys.argv[1])
    out.mkdir(parents=True, exist_ok=True)
    seed = 1
    sizes = [(8, 8), (16, 16), (37, 23), (64, 48), (100, 75), (255, 129), (320, 240)]
    for w, h in sizes:
        for sub, mode in SUBSAMPLING.items():
            emit(out, f"photo_{w}x{h}_{sub}", synth_photo(w, h, seed), quality=90, subsampling=mode)
            seed += 1
    emit(out, "photo_640x480_420_q75", synth_photo(640, 480, seed), quality=75, subsampling=2)
    seed += 1
    emit(out, "photo_200x150_444_rst", synth_photo(200, 150, seed), quality=85, subsampling=0,
         restart_marker_blocks=3)
    seed += 1
    emit(out, "photo_200x150_420_rst", synth_photo(200, 150, seed), quality=85, subsampling=2,
         restart_marker_rows=1)
    seed += 1
    gray = synth_photo(96, 64, seed)[..., 0]
    seed += 1
    img = Image.fromarray(gray, mode="L")
    buf = io.BytesIO()
    img.save(buf, "JPEG", quality=90)
    (out / "gray_96x64.jpg").write_bytes(buf.getvalue())
    write_ppm(out / "gray_96x64.ppm", np.asarray(Image.open(io.BytesIO(buf.getvalue())).convert("RGB")))
    emit(out, "photo_1920x1080_420", synth_photo(1920, 1080, seed), quality=90, subsampling=2)
    seed += 1
    emit(out, "photo_1080x1920_420", synth_photo(1080, 1920, seed), quality=90, subsampling=2)
    seed += 1
    buf = io.BytesIO()
    Image.fromarray(synth_photo(64, 48, seed)).save(buf, "JPEG", progressive=True)
    (out / "progressive_64x48.jpg").write_bytes(buf.getvalue())


if __name__ == "__main__":
    main()
