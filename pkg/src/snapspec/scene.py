"""Synthetic scenes and spectral cube I/O.

A scene is a square nonnegative intensity map together with one
normalized spectrum per column; the full spectral cube factorizes as
``cube[i, j, :] = intensity[i, j] * spectra[j, :]``.  The per-column
spectrum model is what makes single-exposure recovery well posed, so it
is enforced at the data-model level.

Cube files use a tiny self-describing binary format: an ASCII header
line ``HCUBE1 <rows> <cols> <bands>`` followed by rows*cols*bands
IEEE-754 binary32 little-endian values in row-major (row, col, band)
order.  Payloads are exactly float32; in-memory arrays are float64 and
round to the float32 grid on write.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import FormatError
from .smatrix import supported_order

_MAGIC = b"HCUBE1"


@dataclass
class SceneModel:
    """Square intensity map plus per-column normalized spectra."""

    intensity: np.ndarray  # (n, n) nonnegative
    spectra: np.ndarray    # (n, m) nonnegative, each row sums to 1

    def __post_init__(self):
        self.intensity = np.asarray(self.intensity, dtype=np.float64)
        self.spectra = np.asarray(self.spectra, dtype=np.float64)
        if self.intensity.ndim != 2 or self.intensity.shape[0] != self.intensity.shape[1]:
            raise ValueError(f"intensity must be square, got {self.intensity.shape}")
        n = self.intensity.shape[0]
        if self.spectra.ndim != 2 or self.spectra.shape[0] != n:
            raise ValueError(
                f"spectra must have one row per column: {self.spectra.shape} vs n={n}"
            )
        if not np.isfinite(self.intensity).all() or not np.isfinite(self.spectra).all():
            raise ValueError("scene values must be finite")
        if (self.intensity < 0).any() or (self.spectra < 0).any():
            raise ValueError("scene values must be nonnegative")
        sums = self.spectra.sum(axis=1)
        if np.abs(sums - 1.0).max() > 1e-9:
            raise ValueError("each spectrum must sum to 1 within 1e-9")

    @property
    def order(self) -> int:
        return self.intensity.shape[0]

    @property
    def bands(self) -> int:
        return self.spectra.shape[1]


def assemble_cube(scene: SceneModel, jitter: float = 0.0, seed: int | None = None) -> np.ndarray:
    """Expand a scene into its (n, n, m) cube.

    With ``jitter > 0`` each pixel's spectrum is multiplicatively
    perturbed and renormalized, deliberately breaking the equal-spectrum
    assumption for robustness studies; jitter requires a seed.
    """
    cube = scene.intensity[:, :, None] * scene.spectra[None, :, :]
    if jitter > 0.0:
        if seed is None:
            raise ValueError("jitter requires an explicit seed")
        rng = np.random.default_rng(seed)
        pert = np.maximum(
            scene.spectra[None, :, :] * (1.0 + jitter * rng.standard_normal(cube.shape)),
            0.0,
        )
        norm = pert.sum(axis=2, keepdims=True)
        norm[norm == 0.0] = 1.0
        cube = scene.intensity[:, :, None] * pert / norm
    return cube


def cube_intensity(cube: np.ndarray) -> np.ndarray:
    """Sum over the band axis: the panchromatic intensity image."""
    cube = np.asarray(cube, dtype=np.float64)
    if cube.ndim != 3:
        raise ValueError(f"cube must be 3-d, got {cube.shape}")
    return cube.sum(axis=2)


def scene_from_cube(cube: np.ndarray) -> SceneModel:
    """Project an arbitrary cube onto the per-column spectrum model.

    Intensity is the band sum; each column spectrum is the normalized
    column-summed spectrum.  Exact for cubes assembled from a
    SceneModel; for natural cubes it is the closest model instance.
    """
    cube = np.asarray(cube, dtype=np.float64)
    if cube.ndim != 3 or cube.shape[0] != cube.shape[1]:
        raise ValueError(f"expected square (n, n, m) cube, got {cube.shape}")
    intensity = cube.sum(axis=2)
    col = cube.sum(axis=0)
    tot = col.sum(axis=1, keepdims=True)
    if (tot == 0.0).any():
        raise ValueError("cube has an all-zero column; spectra undefined")
    return SceneModel(intensity=intensity, spectra=col / tot)


def synth_random_scene(
    order: int,
    bands: int,
    blobs: int = 3,
    seed: int | None = None,
    floor: float = 0.05,
) -> SceneModel:
    """Random smooth scene: Gaussian intensity blobs over an intensity
    floor, and 1-3 Gaussian lines per column spectrum.

    The floor (relative to the map maximum) keeps every coded element
    strictly positive so the normalized measurement matrix stays
    invertible.  Deterministic for a given seed.
    """
    if not supported_order(order):
        raise ValueError(f"order {order} has no coding-matrix construction")
    if bands < 2:
        raise ValueError("need at least 2 bands")
    if blobs < 0:
        raise ValueError("blobs must be >= 0")
    if not 0.0 < floor <= 1.0:
        raise ValueError("floor must be in (0, 1]")
    if seed is None:
        raise ValueError("seed is required")
    rng = np.random.default_rng(seed)
    n, m = order, bands

    yy, xx = np.mgrid[0:n, 0:n].astype(np.float64)
    img = np.zeros((n, n))
    for _ in range(blobs):
        cy = rng.uniform(0, n - 1)
        cx = rng.uniform(0, n - 1)
        sig = rng.uniform(n / 8.0, n / 3.0)
        amp = rng.uniform(0.3, 1.0)
        img += amp * np.exp(-((yy - cy) ** 2 + (xx - cx) ** 2) / (2.0 * sig * sig))
    peak = img.max()
    if peak > 0.0:
        img /= peak
    img = np.maximum(img, floor)

    lam = np.arange(m, dtype=np.float64)
    spectra = np.zeros((n, m))
    for j in range(n):
        prof = np.full(m, 0.05)
        for _ in range(rng.integers(1, 4)):
            c = rng.uniform(0, m - 1)
            width = rng.uniform(0.5, m / 2.0)
            amp = rng.uniform(0.2, 1.0)
            prof += amp * np.exp(-((lam - c) ** 2) / (2.0 * width * width))
        spectra[j] = prof / prof.sum()

    return SceneModel(intensity=img, spectra=spectra)


def write_cube(cube: np.ndarray, path: str | Path) -> None:
    cube = np.asarray(cube)
    if cube.ndim == 2:
        cube = cube[:, :, None]
    if cube.ndim != 3:
        raise ValueError(f"cube must be 2-d or 3-d, got {cube.shape}")
    if not np.isfinite(cube).all():
        raise ValueError("refusing to write non-finite values")
    r, c, b = cube.shape
    header = f"HCUBE1 {r} {c} {b}\n".encode("ascii")
    Path(path).write_bytes(header + cube.astype("<f4").tobytes(order="C"))


def read_cube(path: str | Path) -> np.ndarray:
    """Read an HCUBE1 file; returns float64 (rows, cols, bands)."""
    raw = Path(path).read_bytes()
    nl = raw.find(b"\n")
    if nl < 0 or nl > 64:
        raise FormatError(f"{path}: missing header line")
    parts = raw[:nl].split()
    if len(parts) != 4 or parts[0] != _MAGIC:
        raise FormatError(f"{path}: malformed header {raw[:nl]!r}")
    try:
        r, c, b = (int(p) for p in parts[1:])
    except ValueError as exc:
        raise FormatError(f"{path}: non-integer dims in header") from exc
    if min(r, c, b) <= 0:
        raise FormatError(f"{path}: non-positive dims {r}x{c}x{b}")
    payload = raw[nl + 1:]
    expected = r * c * b * 4
    if len(payload) != expected:
        raise FormatError(
            f"{path}: size mismatch, header promises {expected} payload bytes, found {len(payload)}"
        )
    data = np.frombuffer(payload, dtype="<f4").reshape(r, c, b).astype(np.float64)
    if not np.isfinite(data).all():
        raise FormatError(f"{path}: non-finite values in payload")
    return data


def write_image(image: np.ndarray, path: str | Path) -> None:
    """Store a 2-d image as a bands=1 cube."""
    image = np.asarray(image)
    if image.ndim != 2:
        raise ValueError(f"image must be 2-d, got {image.shape}")
    write_cube(image[:, :, None], path)


def read_image(path: str | Path) -> np.ndarray:
    cube = read_cube(path)
    if cube.shape[2] != 1:
        raise FormatError(f"{path}: expected bands=1, got {cube.shape[2]}")
    return cube[:, :, 0]
