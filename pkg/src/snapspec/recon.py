"""Measurement-matrix normalization and linear spectral recovery.

The snapshot measurement in matrix form is ``g = M F + noise`` where M
is the coded intensity map and F holds each column's spectrum embedded
at its own shift.  Normalizing M by its maximum gives the actual
measurement matrix of the system; recovery is a square linear solve
followed by reading each row's shift window.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import AllZeroIntensity, SingularSnap
from .optics import DispersedImage, NoiseModel, apply_code, disperse, noisy_image
from .scene import SceneModel
from .smatrix import SMatrix, smatrix_inverse

SUB_HADAMARD = "sub-hadamard"
HTS_UNIFORM = "hts-uniform"
SLIT = "slit"


@dataclass
class SnapMatrix:
    """Normalized coded intensity: the system's measurement matrix.

    ``matrix`` has entries in [0, 1] with maximum exactly 1; ``scale``
    is the normalization factor (max of the coded map); ``shading`` is
    code minus matrix, the diagnostic gap left by nonuniform intensity.
    """

    matrix: np.ndarray
    scale: float
    shading: np.ndarray
    cond: float


@dataclass
class ReconResult:
    """Recovered per-column spectra plus quality diagnostics."""

    spectra: np.ndarray          # (n, m), carries the method's scale
    scale: float                 # divide by this for normalized spectra
    off_support_energy: float    # fraction of energy outside shift windows
    method: str
    cond: float | None = None

    @property
    def spectra_normalized(self) -> np.ndarray:
        return self.spectra / self.scale


def normalize_to_snap(
    coded: np.ndarray,
    code: SMatrix | np.ndarray | None = None,
    cond_max: float = 1e12,
) -> SnapMatrix:
    """Normalize a coded intensity map by its maximum.

    ``code`` supplies the binary mask for the shading diagnostic; if
    omitted it is inferred from the map's nonzero pattern.  Raises
    AllZeroIntensity on an all-zero map and SingularSnap when the
    condition number exceeds ``cond_max``.
    """
    m = np.asarray(coded, dtype=np.float64)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError(f"coded map must be square, got {m.shape}")
    peak = m.max()
    if peak <= 0.0:
        raise AllZeroIntensity("coded intensity map has no positive entries")
    snap = m / peak
    if code is None:
        mask = (m > 0).astype(np.float64)
    else:
        mask = (code.entries if isinstance(code, SMatrix) else np.asarray(code)).astype(np.float64)
    cond = float(np.linalg.cond(snap))
    if not np.isfinite(cond) or cond > cond_max:
        raise SingularSnap(f"condition number {cond:.3e} exceeds {cond_max:.3e}")
    return SnapMatrix(matrix=snap, scale=float(peak), shading=mask - snap, cond=cond)


def shift_embed(spectra: np.ndarray) -> np.ndarray:
    """Embed column spectra at their dispersion shifts.

    Row j of the result holds spectrum j on columns [j, j+m), zeros
    elsewhere, so that dispersion becomes a plain matrix product.
    """
    spectra = np.asarray(spectra, dtype=np.float64)
    n, m = spectra.shape
    out = np.zeros((n, n + m - 1))
    for j in range(n):
        out[j, j:j + m] = spectra[j]
    return out


def average_column_spectra(embedded: np.ndarray, bands: int) -> tuple[np.ndarray, float]:
    """Read each row's shift window out of an embedded-spectra matrix.

    Returns the (n, bands) spectra and the fraction of squared energy
    lying outside the windows (0 for an exact embedding; for a noisy
    reconstruction it measures leakage).
    """
    embedded = np.asarray(embedded, dtype=np.float64)
    n, w = embedded.shape
    if w != n + bands - 1:
        raise ValueError(f"width {w} inconsistent with {n} rows, {bands} bands")
    spectra = np.zeros((n, bands))
    total = float((embedded ** 2).sum())
    on = 0.0
    for j in range(n):
        spectra[j] = embedded[j, j:j + bands]
        on += float((spectra[j] ** 2).sum())
    off_energy = 0.0 if total == 0.0 else max((total - on) / total, 0.0)
    return spectra, off_energy


def reconstruct_subhadamard(g: DispersedImage, snap: SnapMatrix) -> ReconResult:
    """Invert the measurement with the normalized coded-intensity matrix.

    Square LU solve (no closed form exists once intensity is
    nonuniform).  Noiseless with the exact matrix this returns
    scale * embedded spectra exactly.
    """
    try:
        fhat = np.linalg.solve(snap.matrix, g.values)
    except np.linalg.LinAlgError as exc:
        raise SingularSnap(str(exc)) from exc
    spectra, off = average_column_spectra(fhat, g.bands)
    return ReconResult(
        spectra=spectra,
        scale=snap.scale,
        off_support_energy=off,
        method=SUB_HADAMARD,
        cond=snap.cond,
    )


def reconstruct_hts_uniform(g: DispersedImage, code: SMatrix) -> ReconResult:
    """Classic multiplexed inversion that ignores the intensity map.

    Uses the closed-form binary-matrix inverse; on nonuniform scenes
    this baseline is systematically wrong by construction.
    """
    fhat = smatrix_inverse(code) @ g.values
    spectra, off = average_column_spectra(fhat, g.bands)
    cond = float(np.linalg.cond(code.entries.astype(np.float64)))
    return ReconResult(
        spectra=spectra,
        scale=1.0,
        off_support_energy=off,
        method=HTS_UNIFORM,
        cond=cond,
    )


def measure_slit(scene: SceneModel, model: NoiseModel) -> ReconResult:
    """Single-open-element baseline: identity coding matrix.

    Detector row j sees only pixel (j, j), so its spectrum lands
    unmixed at shift j.  Same detector geometry and per-element photon
    budget as the multiplexed measurement; spectra carry each column's
    own intensity scale.
    """
    n = scene.order
    coded = np.zeros((n, n))
    idx = np.arange(n)
    coded[idx, idx] = scene.intensity[idx, idx]
    g = disperse(coded, scene.spectra)
    noisy = noisy_image(g.values, model)
    spectra, off = average_column_spectra(noisy, scene.bands)
    return ReconResult(
        spectra=spectra,
        scale=1.0,
        off_support_energy=off,
        method=SLIT,
        cond=1.0,
    )


def write_spectra_csv(result: ReconResult, path: str | Path, extra: dict | None = None) -> None:
    """One line of m comma-separated values per column index; the
    leading comment line records the method and diagnostics."""
    fields = {
        "method": result.method,
        "scale": repr(result.scale),
        "cond": "" if result.cond is None else repr(result.cond),
        "off_support_energy": repr(result.off_support_energy),
    }
    fields.update(extra or {})
    header = "# " + " ".join(f"{k}={v}" for k, v in fields.items())
    lines = [header]
    for row in result.spectra:
        lines.append(",".join(repr(float(v)) for v in row))
    Path(path).write_text("\n".join(lines) + "\n")
