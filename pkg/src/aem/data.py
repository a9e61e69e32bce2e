"""Synthetic 2-D densities, PGM-image sampling, CSV ingestion and train/val/test splits."""

import csv
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import ConfigurationError, InputError, ParseError

KINDS = ("spirals", "checkerboard", "diamond", "image")

DIAMOND_GRID = 15
DIAMOND_STD = 0.15
DIAMOND_SCALE = 1.0 / 5.0


def spirals(n, rng):
    """Two interleaved arms: ``t = 3 pi sqrt(u)``, radius ``2 t / (3 pi)``, noise sd 0.01."""
    t = 3.0 * math.pi * np.sqrt(rng.random(n))
    r = 2.0 * t / (3.0 * math.pi)
    sign = np.where(rng.random(n) < 0.5, 1.0, -1.0)
    x = sign[:, None] * np.stack([r * np.cos(t), r * np.sin(t)], axis=1)
    return x + 0.01 * rng.standard_normal((n, 2))


def checkerboard(n, rng):
    """4 x 4 checkerboard on [-2, 2]^2; mass on squares where floor(x1) + floor(x2) is even."""
    x1 = rng.random(n) * 4.0 - 2.0
    x2 = rng.random(n) - rng.integers(0, 2, n) * 2.0
    x2 = x2 + np.floor(x1) % 2
    return np.stack([x1, x2], axis=1)


def checkerboard_high(x):
    """True where a point lies in a high-density checkerboard square."""
    x = np.asarray(x)
    inside = np.all(np.abs(x) <= 2.0, axis=-1)
    return inside & ((np.floor(x[..., 0]) + np.floor(x[..., 1])) % 2 == 0)


def diamond_centers():
    """The 225 mode centres: a unit-spaced 15 x 15 grid rotated by 45 degrees, then scaled."""
    g = np.arange(DIAMOND_GRID) - (DIAMOND_GRID - 1) / 2
    grid = np.stack(np.meshgrid(g, g, indexing="ij"), axis=-1).reshape(-1, 2)
    c = s = math.sqrt(0.5)
    rot = np.array([[c, -s], [s, c]])
    return grid @ rot.T * DIAMOND_SCALE


def diamond(n, rng):
    centers = diamond_centers()
    idx = rng.integers(0, len(centers), n)
    return centers[idx] + DIAMOND_STD * DIAMOND_SCALE * rng.standard_normal((n, 2))


def read_pgm(path):
    """8-bit grayscale PGM, binary (P5) or ASCII (P2). Returns a uint8 (rows, cols) array."""
    try:
        with open(path, "rb") as fh:
            raw = fh.read()
    except OSError as exc:
        raise InputError(f"cannot read image {path}: {exc}") from exc
    tokens, pos = [], 0
    while len(tokens) < 4:
        while pos < len(raw) and raw[pos:pos + 1].isspace():
            pos += 1
        if pos >= len(raw):
            raise InputError(f"{path}: truncated PGM header")
        if raw[pos:pos + 1] == b"#":
            pos = raw.find(b"\n", pos)
            pos = len(raw) if pos < 0 else pos
            continue
        start = pos
        while pos < len(raw) and not raw[pos:pos + 1].isspace():
            pos += 1
        tokens.append(raw[start:pos])
    magic = tokens[0]
    try:
        width, height, maxval = (int(t) for t in tokens[1:])
    except ValueError:
        raise InputError(f"{path}: malformed PGM header") from None
    if magic not in (b"P5", b"P2") or not 0 < maxval < 256:
        raise InputError(f"{path}: only 8-bit P5/P2 PGM images are supported")
    if magic == b"P5":
        data = np.frombuffer(raw[pos + 1:pos + 1 + width * height], dtype=np.uint8)
    else:
        data = np.array(raw[pos:].split()[: width * height], dtype=np.int64).astype(np.uint8)
    if data.size != width * height:
        raise InputError(f"{path}: expected {width * height} pixels, found {data.size}")
    return data.reshape(height, width)


def image_density(image, n, rng):
    """Pixel coordinates sampled with probability proportional to intensity.

    Points are jittered uniformly within their pixel and mapped to [0, 1]^2 with
    the image's top row at x2 = 1.
    """
    image = np.asarray(image, dtype=np.float64)
    total = image.sum()
    if total <= 0:
        raise InputError("image has zero total intensity")
    h, w = image.shape
    idx = rng.choice(image.size, size=n, p=(image / total).ravel())
    row, col = np.divmod(idx, w)
    x1 = (col + rng.random(n)) / w
    x2 = 1.0 - (row + rng.random(n)) / h
    return np.stack([x1, x2], axis=1)


def generate(kind, n, seed, image_path=None):
    if n < 1:
        raise ConfigurationError(f"n must be positive, got {n}")
    rng = np.random.default_rng(seed)
    if kind == "spirals":
        return spirals(n, rng)
    if kind == "checkerboard":
        return checkerboard(n, rng)
    if kind == "diamond":
        return diamond(n, rng)
    if kind == "image":
        if image_path is None:
            raise InputError("image kind needs an image path")
        return image_density(read_pgm(image_path), n, rng)
    raise ConfigurationError(f"unknown dataset kind {kind!r}; choose from {KINDS}")


def load_csv(path, delimiter=",", has_header=False):
    rows, width = [], None
    with open(path, newline="") as fh:
        for lineno, fields in enumerate(csv.reader(fh, delimiter=delimiter), 1):
            if has_header and lineno == 1:
                continue
            if not fields or all(not f.strip() for f in fields):
                continue
            try:
                values = [float(f) for f in fields]
            except ValueError:
                raise ParseError(f"non-numeric cell in {fields!r}", lineno) from None
            if width is None:
                width = len(values)
            elif len(values) != width:
                raise ParseError(f"expected {width} columns, found {len(values)}", lineno)
            rows.append(values)
    if not rows:
        raise ParseError(f"{path}: no data rows")
    return np.array(rows, dtype=np.float64)


def save_csv(path, matrix, header=None):
    np.savetxt(path, np.asarray(matrix), delimiter=",", fmt="%.17g",
               header=header or "", comments="")


@dataclass
class DatasetSplit:
    train: np.ndarray
    validation: np.ndarray
    test: np.ndarray
    mean: Optional[np.ndarray] = None
    std: Optional[np.ndarray] = None

    @property
    def dim(self):
        return self.train.shape[1]


def split_standardize(matrix, fractions=(0.8, 0.1, 0.1), seed=0, standardize=False):
    """Seeded shuffle, then contiguous train/validation/test blocks.

    Sizes are ``floor(fraction * n)``. With ``standardize`` every split is shifted
    and scaled by the train split's column mean and standard deviation.
    """
    matrix = np.asarray(matrix, dtype=np.float64)
    if len(fractions) != 3 or min(fractions) <= 0 or sum(fractions) > 1 + 1e-12:
        raise ConfigurationError(f"fractions must be three positive numbers summing to <= 1: {fractions}")
    n = matrix.shape[0]
    sizes = [int(math.floor(f * n + 1e-9)) for f in fractions]
    if min(sizes) == 0:
        raise ConfigurationError(f"split sizes {sizes} include an empty split (n={n})")
    order = np.random.default_rng(seed).permutation(n)
    a, b = sizes[0], sizes[0] + sizes[1]
    train, val, test = (matrix[order[:a]], matrix[order[a:b]], matrix[order[b:b + sizes[2]]])
    if not standardize:
        return DatasetSplit(train, val, test)
    mean = train.mean(axis=0)
    std = train.std(axis=0)
    std = np.where(std > 0, std, 1.0)
    return DatasetSplit((train - mean) / std, (val - mean) / std, (test - mean) / std, mean, std)
