"""Coded-aperture forward model: masking, dispersion, detector noise.

Each detector row i sees the scene row i through its binary code row,
and every column j of the coded row contributes its spectrum shifted
right by j pixels.  A row of the dispersed image is therefore the
shift-and-add mixture ``g[i, c] = sum_j M[i, j] * spectra[j, c - j]``
with width n + m - 1.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import FormatError
from .scene import SceneModel, read_image, write_image
from .smatrix import SMatrix

READ_NOISE = "read"
SHOT_NOISE = "shot"


@dataclass(frozen=True)
class NoiseModel:
    """Detector noise: additive Gaussian ``read`` (sigma in detector
    units) or signal-dependent ``shot`` (zero-mean Gaussian with
    per-pixel variance alpha * signal)."""

    kind: str
    param: float
    seed: int

    def __post_init__(self):
        if self.kind not in (READ_NOISE, SHOT_NOISE):
            raise ValueError(f"unknown noise kind {self.kind!r}")
        if self.param < 0:
            raise ValueError("noise parameter must be >= 0")


@dataclass
class DispersedImage:
    """Detector-plane measurement, width n + m - 1 for band count m."""

    values: np.ndarray
    bands: int

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 2:
            raise ValueError(f"dispersed image must be 2-d, got {self.values.shape}")
        n, w = self.values.shape
        if w != n + self.bands - 1:
            raise ValueError(
                f"width {w} inconsistent with {n} rows and {self.bands} bands"
            )


def apply_code(code: SMatrix | np.ndarray, intensity: np.ndarray) -> np.ndarray:
    """Element-wise mask of the intensity map by the coding matrix."""
    c = code.entries if isinstance(code, SMatrix) else np.asarray(code)
    intensity = np.asarray(intensity, dtype=np.float64)
    if c.shape != intensity.shape:
        raise ValueError(f"code {c.shape} and intensity {intensity.shape} differ")
    return c.astype(np.float64) * intensity


def disperse(coded: np.ndarray, spectra: np.ndarray) -> DispersedImage:
    """Shift-and-add dispersion of a coded intensity map.

    Equivalent to the matrix product of the coded map with the
    shift-embedded spectra (see recon.shift_embed) but computed by
    direct accumulation.
    """
    coded = np.asarray(coded, dtype=np.float64)
    spectra = np.asarray(spectra, dtype=np.float64)
    n = coded.shape[0]
    if coded.ndim != 2 or coded.shape != (n, n):
        raise ValueError(f"coded map must be square, got {coded.shape}")
    if spectra.ndim != 2 or spectra.shape[0] != n:
        raise ValueError(f"spectra {spectra.shape} do not match {n} columns")
    m = spectra.shape[1]
    g = np.zeros((n, n + m - 1))
    # accumulate column by column so the summation order matches the
    # per-pixel definition exactly (bit-for-bit)
    for j in range(n):
        g[:, j:j + m] += coded[:, j][:, None] * spectra[j][None, :]
    return DispersedImage(values=g, bands=m)


def disperse_cube(coded_cube: np.ndarray) -> DispersedImage:
    """Shift-and-add dispersion of a full coded cube (per-pixel spectra).

    For cubes that factor into intensity times per-column spectra this
    agrees with disperse(); it is the general forward model used in
    equal-spectrum violation studies.
    """
    cube = np.asarray(coded_cube, dtype=np.float64)
    if cube.ndim != 3 or cube.shape[0] != cube.shape[1]:
        raise ValueError(f"expected square (n, n, m) cube, got {cube.shape}")
    n, _, m = cube.shape
    g = np.zeros((n, n + m - 1))
    for j in range(n):
        g[:, j:j + m] += cube[:, j, :]
    return DispersedImage(values=g, bands=m)


def _noisy(values: np.ndarray, model: NoiseModel, rng: np.random.Generator) -> np.ndarray:
    if model.param == 0.0:
        return values.copy()
    if model.kind == READ_NOISE:
        return values + rng.normal(0.0, model.param, size=values.shape)
    std = np.sqrt(model.param * np.clip(values, 0.0, None))
    return values + std * rng.standard_normal(values.shape)


def add_noise(g: DispersedImage, model: NoiseModel) -> DispersedImage:
    """Inject detector noise; deterministic for a given model seed."""
    rng = np.random.default_rng(model.seed)
    return DispersedImage(values=_noisy(g.values, model, rng), bands=g.bands)


def noisy_image(values: np.ndarray, model: NoiseModel) -> np.ndarray:
    """Noise injection for plain 2-d images (e.g. an intensity path)."""
    rng = np.random.default_rng(model.seed)
    return _noisy(np.asarray(values, dtype=np.float64), model, rng)


def split_dual_path(
    scene: SceneModel, code: SMatrix | np.ndarray, model: NoiseModel
) -> tuple[DispersedImage, np.ndarray]:
    """Two-arm variant: a beam splitter halves the light into a
    dispersive arm and a direct intensity-imaging arm.

    Both arms see half the coded intensity and receive independent
    noise draws (derived deterministically from the model seed).
    Returns (dispersed image of the halved scene, noisy half coded
    intensity image).
    """
    half = apply_code(code, scene.intensity) * 0.5
    disp_seed, img_seed = np.random.SeedSequence(model.seed).spawn(2)
    g = disperse(half, scene.spectra)
    g = DispersedImage(
        values=_noisy(g.values, model, np.random.default_rng(disp_seed)),
        bands=g.bands,
    )
    img = _noisy(half, model, np.random.default_rng(img_seed))
    return g, img


def save_dispersed(
    g: DispersedImage,
    path: str | Path,
    noise: NoiseModel | None = None,
    extra: dict | None = None,
) -> None:
    """Write the measurement plus a key=value sidecar (`<path>.meta`)
    recording band count and the noise model."""
    write_image(g.values, path)
    lines = [f"bands = {g.bands}"]
    if noise is not None:
        lines += [
            f"noise_kind = {noise.kind}",
            f"noise_param = {noise.param!r}",
            f"noise_seed = {noise.seed}",
        ]
    for key, val in (extra or {}).items():
        lines.append(f"{key} = {val}")
    Path(str(path) + ".meta").write_text("\n".join(lines) + "\n")


def load_dispersed(path: str | Path) -> DispersedImage:
    values = read_image(path)
    meta_path = Path(str(path) + ".meta")
    if not meta_path.exists():
        raise FormatError(f"{meta_path}: sidecar missing")
    bands = None
    for line in meta_path.read_text().splitlines():
        line = line.split("#", 1)[0].strip()
        if line.startswith("bands"):
            bands = int(line.split("=", 1)[1])
    if bands is None:
        raise FormatError(f"{meta_path}: no bands entry")
    return DispersedImage(values=values, bands=bands)
