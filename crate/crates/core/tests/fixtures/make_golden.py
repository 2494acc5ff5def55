"""Regenerates the golden PPM fixtures with numpy.

Run from this directory: python3 make_golden.py
"""

import numpy as np

W, H = 16, 12


def write_ppm(path, img):
    with open(path, "wb") as f:
        f.write(b"P6\n%d %d\n255\n" % (W, H))
        f.write(img.astype(np.uint8).tobytes())


def source():
    y, x = np.mgrid[0:H, 0:W]
    r = (x * 17 + y * 5) % 256
    g = (x * x + 3 * y * y) % 256
    b = (255 - x * 13 - y * 7) % 256
    img = np.stack([r, g, b], axis=-1).astype(np.float64)
    img[0, :, :] = np.array([0, 1, 50, 51, 52, 53, 100, 127, 128, 129, 200, 254, 255, 255, 0, 51])[:, None]
    return img


def quantize(v):
    return np.clip(np.rint(v), 0, 255)


def blend(img, degenerate, factor):
    if factor == 1.0:
        return img.copy()
    return quantize(degenerate + factor * (img - degenerate))


def contrast(img, factor):
    lum = np.rint(0.299 * img[..., 0] + 0.587 * img[..., 1] + 0.114 * img[..., 2])
    mean = np.rint(lum.sum() / lum.size)
    return blend(img, mean, factor)


def brightness(img, factor):
    return blend(img, 0.0, factor)


def gamma(img, g):
    if g == 1.0:
        return img.copy()
    return quantize(255.0 * np.power(img / 255.0, g))


def main():
    img = source()
    write_ppm("input.ppm", img)
    for f in [0, 0.5, 1, 2, 5]:
        write_ppm(f"contrast_{f}.ppm", contrast(img, float(f)))
        write_ppm(f"brightness_{f}.ppm", brightness(img, float(f)))
    for g in [0.5, 1, 2, 5]:
        write_ppm(f"gamma_{g}.ppm", gamma(img, float(g)))


if __name__ == "__main__":
    main()
