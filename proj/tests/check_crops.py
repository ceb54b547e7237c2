#!/usr/bin/env python3
"""Independent validation of the crop PNGs with Pillow.

Generates a fixture via the CLI, produces crops, then re-decodes the RLE
masks and the source PPM in Python and verifies every crop pixel: inside the
mask it must equal the source image, outside it must be white.
"""
import struct
import subprocess
import sys
from pathlib import Path

from PIL import Image


def read_masks(path):
    data = Path(path).read_bytes()
    magic, width, height, count = struct.unpack_from("<4I", data, 0)
    assert magic == 0x454C524D, "bad mask file magic"
    offset = 16
    masks = {}
    for _ in range(count):
        mask_id, run_count = struct.unpack_from("<IQ", data, offset)
        offset += 12
        runs = struct.unpack_from(f"<{run_count}I", data, offset)
        offset += 4 * run_count
        bits = bytearray()
        value = 0
        for run in runs:
            bits.extend([value] * run)
            value ^= 1
        assert len(bits) == width * height, "RLE length mismatch"
        masks[mask_id] = (width, height, bits)
    return masks


def main():
    cli, workdir = sys.argv[1], Path(sys.argv[2])
    workdir.mkdir(parents=True, exist_ok=True)
    fx = workdir / "fx"
    crops = workdir / "crops"

    subprocess.run(
        [cli, "fixture", "--out-dir", str(fx), "--objects", "2", "--per-object", "30",
         "--views", "2", "--resolution", "48", "--dim", "16", "--seed", "4"],
        check=True, stdout=subprocess.DEVNULL)
    subprocess.run(
        [cli, "crops", "--manifest", str(fx / "manifest.txt"), "--image-id", "0",
         "--out-dir", str(crops)],
        check=True, stdout=subprocess.DEVNULL)

    source = Image.open(fx / "rgb" / "view_0.ppm").convert("RGB")
    masks = read_masks(fx / "masks" / "view_0.rle")

    checked = 0
    for mask_id, (width, height, bits) in masks.items():
        assert (width, height) == source.size
        xs = [i % width for i, b in enumerate(bits) if b]
        ys = [i // width for i, b in enumerate(bits) if b]
        if not xs:
            continue
        x0, x1, y0, y1 = min(xs), max(xs), min(ys), max(ys)

        crop_path = crops / f"0_{mask_id}.png"
        crop = Image.open(crop_path)
        assert crop.format == "PNG", f"{crop_path} is not a PNG"
        crop = crop.convert("RGB")
        assert crop.size == (x1 - x0 + 1, y1 - y0 + 1), "crop size != mask bbox"

        for y in range(y0, y1 + 1):
            for x in range(x0, x1 + 1):
                expected = source.getpixel((x, y)) if bits[y * width + x] else (255, 255, 255)
                actual = crop.getpixel((x - x0, y - y0))
                assert actual == expected, f"pixel mismatch at ({x},{y}): {actual} != {expected}"
        checked += 1

    assert checked >= 1, "no non-empty masks checked"
    print(f"OK: {checked} crops validated pixel-exactly")


if __name__ == "__main__":
    main()
