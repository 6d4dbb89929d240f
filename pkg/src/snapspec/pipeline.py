"""End-to-end experiments: simulate, unmix, reconstruct, score.

An experiment is described by a small key=value config (see
ExperimentConfig).  All randomness is derived from the config's seeds
through named SeedSequence children, so a rerun of the same config
reproduces every number; reports embed the config hash.

Methods:

- ``sub-hadamard-exact``: recovery with the true normalized coded
  intensity (upper reference).
- ``sub-hadamard-net``: single-path recovery with the network-estimated
  intensity; also records the estimate's matrix error projection k.
- ``sub-hadamard-dual``: two-arm variant, half throughput per arm, the
  matrix estimated from the noisy intensity arm.
- ``slit``: identity-code baseline.
- ``hts-uniform``: multiplexed inversion ignoring intensity.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from . import netunmix
from .errors import ConfigError, SingularSnap
from .metrics import McRow, McTable, decompose_k, psnr_db, snr_db
from .optics import (
    DispersedImage,
    NoiseModel,
    apply_code,
    disperse,
    noisy_image,
)
from .recon import (
    measure_slit,
    normalize_to_snap,
    reconstruct_hts_uniform,
    reconstruct_subhadamard,
)
from .scene import SceneModel, synth_random_scene
from .smatrix import SMatrix, build_smatrix

ALL_METHODS = (
    "sub-hadamard-exact",
    "sub-hadamard-net",
    "sub-hadamard-dual",
    "slit",
    "hts-uniform",
)

ORACLE_NET = "oracle"


@dataclass(frozen=True)
class ExperimentConfig:
    order: int
    bands: int
    scene_count: int
    scene_seed: int
    master_seed: int
    blobs: int = 3
    floor: float = 0.05
    code: str = "hadamard"          # "hadamard" | "full-1"
    noise_kind: str = "read"        # "read" | "shot" | "none"
    noise_param: float = 0.01
    methods: tuple[str, ...] = ("sub-hadamard-exact", "slit", "hts-uniform")
    net_path: str = ""
    trials: int = 1
    cond_max: float = 1e6
    misalign: int = 0

    def __post_init__(self):
        if not self.methods:
            raise ConfigError("methods must be nonempty")
        for m in self.methods:
            if m not in ALL_METHODS:
                raise ConfigError(f"unknown method {m!r}")
        if self.code not in ("hadamard", "full-1"):
            raise ConfigError(f"unknown code {self.code!r}")
        if self.noise_kind not in ("read", "shot", "none"):
            raise ConfigError(f"unknown noise kind {self.noise_kind!r}")
        if self.code == "full-1" and "hts-uniform" in self.methods:
            raise ConfigError("hts-uniform needs a hadamard code (full-1 is singular)")
        if "sub-hadamard-net" in self.methods and not self.net_path:
            raise ConfigError("sub-hadamard-net needs net_path (a file or 'oracle')")
        if self.trials < 1 or self.scene_count < 1:
            raise ConfigError("trials and scene_count must be >= 1")


_CONFIG_TYPES = {f.name: f.type for f in fields(ExperimentConfig)}


def parse_config(text: str) -> ExperimentConfig:
    """Parse ``key = value`` lines; '#' starts a comment; unknown keys
    and missing required keys are errors."""
    values: dict = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key = value, got {raw!r}")
        key, val = (part.strip() for part in line.split("=", 1))
        if key not in _CONFIG_TYPES:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        values[key] = _convert(key, val, lineno)
    try:
        return ExperimentConfig(**values)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc


def _convert(key: str, val: str, lineno: int):
    kind = _CONFIG_TYPES[key]
    try:
        if kind == "int":
            return int(val)
        if kind == "float":
            return float(val)
        if key == "methods":
            return tuple(tok.strip() for tok in val.split(",") if tok.strip())
        return val
    except ValueError as exc:
        raise ConfigError(f"line {lineno}: bad value for {key}: {val!r}") from exc


def dump_config(cfg: ExperimentConfig) -> str:
    lines = []
    for f in fields(ExperimentConfig):
        val = getattr(cfg, f.name)
        if f.name == "methods":
            val = ", ".join(val)
        lines.append(f"{f.name} = {val}")
    return "\n".join(lines) + "\n"


def load_config(path: str | Path) -> ExperimentConfig:
    return parse_config(Path(path).read_text())


def config_hash(cfg: ExperimentConfig) -> str:
    return hashlib.sha256(dump_config(cfg).encode()).hexdigest()[:16]


def make_code(cfg: ExperimentConfig) -> SMatrix | np.ndarray:
    if cfg.code == "hadamard":
        return build_smatrix(cfg.order)
    return np.ones((cfg.order, cfg.order), dtype=np.int64)


def make_scenes(cfg: ExperimentConfig) -> list[SceneModel]:
    children = np.random.SeedSequence(cfg.scene_seed).spawn(cfg.scene_count)
    return [
        synth_random_scene(cfg.order, cfg.bands, blobs=cfg.blobs,
                           seed=child, floor=cfg.floor)
        for child in children
    ]


def _noise_model(cfg: ExperimentConfig, seq: np.random.SeedSequence) -> NoiseModel | None:
    if cfg.noise_kind == "none" or cfg.noise_param == 0.0:
        return None
    seed = int(seq.generate_state(1, dtype=np.uint64)[0])
    return NoiseModel(cfg.noise_kind, cfg.noise_param, seed)


def _apply_noise(values: np.ndarray, model: NoiseModel | None) -> np.ndarray:
    if model is None:
        return values.copy()
    return noisy_image(values, model)


@dataclass
class MethodEntry:
    method: str
    snr_db: list = field(default_factory=list)       # raw, vs true spectra
    snr_fit_db: list = field(default_factory=list)   # best-scalar-fit
    psnr_db: list = field(default_factory=list)      # intensity estimate (net methods)
    cond: list = field(default_factory=list)
    k: list = field(default_factory=list)
    skipped: int = 0

    def summary_row(self, noise_kind: str, noise_param: float) -> McRow:
        vals = np.asarray([v for v in self.snr_fit_db if math.isfinite(v)])
        if len(vals) == 0:
            return McRow(self.method, noise_kind, noise_param, math.inf, 0.0, len(self.snr_fit_db))
        return McRow(
            self.method, noise_kind, noise_param,
            float(vals.mean()), float(vals.std(ddof=0)), len(vals),
        )


@dataclass
class ExperimentReport:
    cfg: ExperimentConfig
    hash: str
    entries: dict
    provenance: dict

    def mc_table(self) -> McTable:
        return McTable(rows=[
            e.summary_row(self.cfg.noise_kind, self.cfg.noise_param)
            for e in self.entries.values()
        ])


def dedispersion_baseline(g: DispersedImage) -> np.ndarray:
    """Naive intensity estimate: per pixel, sum the measurement over
    that column's dispersion window.  Exact only for a single isolated
    column; overlapping neighbors contaminate it."""
    n, _ = g.values.shape
    m = g.bands
    out = np.zeros((n, n))
    for j in range(n):
        out[:, j] = g.values[:, j:j + m].sum(axis=1)
    return out


def _scale_fit(est: np.ndarray, ref: np.ndarray) -> np.ndarray:
    denom = float((est * est).sum())
    if denom == 0.0:
        return est
    return est * (float((ref * est).sum()) / denom)


def _score(entry: MethodEntry, truth: np.ndarray, recovered: np.ndarray) -> None:
    entry.snr_db.append(snr_db(truth, recovered).snr_db)
    entry.snr_fit_db.append(snr_db(truth, recovered, scale_fit=True).snr_db)


def run_method_comparison(
    cfg: ExperimentConfig,
    scenes: list[SceneModel] | None = None,
    net_params: netunmix.NetworkParams | None = None,
    oracle_intensity: bool = False,
) -> ExperimentReport:
    """Run every requested method on identical scenes and noise draws.

    Matrix methods share the same measured image per (scene, trial);
    the slit and the dual-path intensity arm have their own derived
    noise streams.  Scenes whose estimated matrix is too ill-conditioned
    are skipped and counted.  Asserts nothing; reports everything.

    Scoring: multiplexed methods recover the normalized column spectra
    and are scored against them; the slit is scored against the spectra
    it actually observes (each column's spectrum carrying that column's
    own intensity), since a dim column makes a slit measurement noisy
    rather than wrong.  Both raw and best-scalar-fit SNR are recorded.
    """
    scenes = make_scenes(cfg) if scenes is None else scenes
    code = make_code(cfg)
    code_arr = code.entries if isinstance(code, SMatrix) else code
    if net_params is None and "sub-hadamard-net" in cfg.methods:
        if cfg.net_path == ORACLE_NET:
            oracle_intensity = True
        else:
            net_params = netunmix.load_params(cfg.net_path)

    entries = {m: MethodEntry(m) for m in cfg.methods}
    for si, scene in enumerate(scenes):
        coded = apply_code(code_arr, scene.intensity)
        g_clean = disperse(coded, scene.spectra)
        truth = scene.spectra
        for trial in range(cfg.trials):
            streams = np.random.SeedSequence((cfg.master_seed, si, trial)).spawn(4)
            shared = _noise_model(cfg, streams[0])
            g = DispersedImage(_apply_noise(g_clean.values, shared), g_clean.bands)

            if "sub-hadamard-exact" in entries:
                e = entries["sub-hadamard-exact"]
                try:
                    snap = normalize_to_snap(coded, code_arr, cond_max=cfg.cond_max)
                    rec = reconstruct_subhadamard(g, snap)
                    _score(e, truth, rec.spectra_normalized)
                    e.cond.append(snap.cond)
                except SingularSnap:
                    e.skipped += 1

            if "sub-hadamard-net" in entries:
                e = entries["sub-hadamard-net"]
                est = coded if oracle_intensity else netunmix.infer(net_params, g)
                try:
                    snap_est = normalize_to_snap(est, code_arr, cond_max=cfg.cond_max)
                    rec = reconstruct_subhadamard(g, snap_est)
                    _score(e, truth, rec.spectra_normalized)
                    e.cond.append(snap_est.cond)
                    snap_true = normalize_to_snap(coded, code_arr, cond_max=cfg.cond_max)
                    e.k.append(decompose_k(snap_true.matrix,
                                           snap_true.matrix - snap_est.matrix).k)
                    e.psnr_db.append(psnr_db(coded, est, peak=float(coded.max())))
                except SingularSnap:
                    e.skipped += 1

            if "sub-hadamard-dual" in entries:
                e = entries["sub-hadamard-dual"]
                half = coded * 0.5
                g_half = DispersedImage(
                    _apply_noise(g_clean.values * 0.5, _noise_model(cfg, streams[1])),
                    g_clean.bands,
                )
                img = _apply_noise(half, _noise_model(cfg, streams[2]))
                if cfg.misalign:
                    img = np.roll(img, cfg.misalign, axis=1)
                try:
                    snap_dual = normalize_to_snap(
                        np.clip(img, 0.0, None), code_arr, cond_max=cfg.cond_max
                    )
                    rec = reconstruct_subhadamard(g_half, snap_dual)
                    _score(e, truth, rec.spectra_normalized)
                    e.cond.append(snap_dual.cond)
                except SingularSnap:
                    e.skipped += 1

            if "slit" in entries:
                e = entries["slit"]
                model = _noise_model(cfg, streams[3])
                if model is None:
                    model = NoiseModel("read", 0.0, 0)
                rec = measure_slit(scene, model)
                idx = np.arange(scene.order)
                slit_truth = scene.intensity[idx, idx][:, None] * truth
                _score(e, slit_truth, rec.spectra)

            if "hts-uniform" in entries:
                e = entries["hts-uniform"]
                rec = reconstruct_hts_uniform(g, code)
                scale = float(coded.max())
                _score(e, truth, rec.spectra / scale)

    provenance = {
        "config_hash": config_hash(cfg),
        "scene_seed": cfg.scene_seed,
        "master_seed": cfg.master_seed,
        "kernel_backend": netunmix.backend_name(),
        "oracle_intensity": oracle_intensity,
    }
    return ExperimentReport(cfg=cfg, hash=config_hash(cfg), entries=entries,
                            provenance=provenance)


def run_single_path_net(
    cfg: ExperimentConfig,
    scenes: list[SceneModel] | None = None,
    net_params: netunmix.NetworkParams | None = None,
    oracle_intensity: bool = False,
) -> ExperimentReport:
    """Single-path experiment: estimate the intensity from the measured
    dispersed image itself, normalize it, reconstruct, score.  With
    ``oracle_intensity`` the true coded intensity is injected instead
    of the network output (for equivalence checks)."""
    net_path = cfg.net_path
    if not net_path:
        if oracle_intensity:
            net_path = ORACLE_NET
        elif net_params is not None:
            net_path = "(in-memory)"
        else:
            raise ConfigError("run_single_path_net needs net_path, net_params, or oracle")
    cfg = replace(cfg, methods=("sub-hadamard-net",), net_path=net_path)
    return run_method_comparison(cfg, scenes, net_params, oracle_intensity)


def run_dual_path(
    cfg: ExperimentConfig, scenes: list[SceneModel] | None = None
) -> ExperimentReport:
    """Two-arm experiment: both arms at half throughput, the matrix
    estimated from the noisy intensity arm (optionally misaligned by
    cfg.misalign pixels)."""
    cfg = replace(cfg, methods=("sub-hadamard-dual",))
    return run_method_comparison(cfg, scenes)


def write_report(report: ExperimentReport, outdir: str | Path) -> None:
    """summary.txt (key=value), methods.csv (per-method statistics),
    per_scene.csv (every score)."""
    out = Path(outdir)
    out.mkdir(parents=True, exist_ok=True)
    report.mc_table().to_csv(out / "methods.csv")

    lines = [f"config_hash = {report.hash}"]
    for key, val in report.provenance.items():
        if key != "config_hash":
            lines.append(f"{key} = {val}")
    for method, e in report.entries.items():
        row = e.summary_row(report.cfg.noise_kind, report.cfg.noise_param)
        lines.append(f"{method}.mean_snr_db = {row.mean_snr_db!r}")
        lines.append(f"{method}.std_db = {row.std_db!r}")
        lines.append(f"{method}.scored = {row.trials}")
        lines.append(f"{method}.skipped = {e.skipped}")
        if e.k:
            lines.append(f"{method}.mean_k = {float(np.mean(e.k))!r}")
        if e.psnr_db:
            finite = [v for v in e.psnr_db if math.isfinite(v)]
            if finite:
                lines.append(f"{method}.mean_intensity_psnr_db = {float(np.mean(finite))!r}")
    (out / "summary.txt").write_text("\n".join(lines) + "\n")

    rows = ["# config_hash=" + report.hash,
            "method,index,snr_db,snr_fit_db,psnr_db,cond,k"]
    for method, e in report.entries.items():
        for i in range(len(e.snr_db)):
            psnr = repr(e.psnr_db[i]) if i < len(e.psnr_db) else ""
            cond = repr(e.cond[i]) if i < len(e.cond) else ""
            kk = repr(e.k[i]) if i < len(e.k) else ""
            rows.append(
                f"{method},{i},{e.snr_db[i]!r},{e.snr_fit_db[i]!r},{psnr},{cond},{kk}"
            )
    (out / "per_scene.csv").write_text("\n".join(rows) + "\n")


# ----------------------------------------------------------------------
# Network training data and evaluation helpers


def build_training_pairs(scenes, code, normalize: bool = True):
    """(dispersed, coded intensity) pairs for network training.

    Inputs are normalized to unit peak and the labels share the same
    factor, matching the normalization infer() applies.
    """
    code_arr = code.entries if isinstance(code, SMatrix) else np.asarray(code)
    pairs = []
    for scene in scenes:
        coded = apply_code(code_arr, scene.intensity)
        g = disperse(coded, scene.spectra)
        s = float(np.abs(g.values).max()) if normalize else 1.0
        if s == 0.0:
            s = 1.0
        pairs.append((g.values[None] / s, coded[None] / s))
    return pairs


def eval_network(params, scenes, cfg: ExperimentConfig):
    """Per-scene intensity PSNR and spectral SNR for a trained network.

    Runs the single-path pipeline (noise per cfg) on each scene.
    Returns (psnr list, snr list, baseline psnr list); the baseline is
    the scale-fitted naive de-dispersion estimate.
    """
    code = make_code(cfg)
    code_arr = code.entries if isinstance(code, SMatrix) else code
    psnrs, snrs, base_psnrs = [], [], []
    for si, scene in enumerate(scenes):
        coded = apply_code(code_arr, scene.intensity)
        g_clean = disperse(coded, scene.spectra)
        streams = np.random.SeedSequence((cfg.master_seed, si, 0)).spawn(4)
        g = DispersedImage(
            _apply_noise(g_clean.values, _noise_model(cfg, streams[0])), g_clean.bands
        )
        est = netunmix.infer(params, g)
        peak = float(coded.max())
        psnrs.append(psnr_db(coded, _scale_fit(est, coded), peak=peak))
        base = dedispersion_baseline(g)
        base_psnrs.append(psnr_db(coded, _scale_fit(base, coded), peak=peak))
        try:
            snap_est = normalize_to_snap(est, code_arr, cond_max=cfg.cond_max)
            rec = reconstruct_subhadamard(g, snap_est)
            snrs.append(snr_db(scene.spectra, rec.spectra_normalized, scale_fit=True).snr_db)
        except SingularSnap:
            snrs.append(float("nan"))
    return psnrs, snrs, base_psnrs
