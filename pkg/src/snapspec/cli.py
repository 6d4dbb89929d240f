"""Command-line interface.

Every command validates inputs before writing anything, writes only its
declared outputs, and never mutates inputs.  Randomized commands
require an explicit --seed.  Runtime failures exit 1 with a single
machine-parseable line ``error: <code>: <detail>``; usage errors exit 2
with argparse's message.  Outputs embed a hash of the invocation (or of
the experiment config) so reruns can be checked for reproducibility.
"""

from __future__ import annotations

import argparse
import hashlib
import math
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__, metrics, netunmix, pipeline
from .errors import ConfigError, FormatError, SnapSpecError
from .optics import NoiseModel, add_noise, apply_code, disperse, load_dispersed, save_dispersed
from .recon import (
    normalize_to_snap,
    reconstruct_hts_uniform,
    reconstruct_subhadamard,
    write_spectra_csv,
)
from .scene import (
    assemble_cube,
    read_cube,
    read_image,
    scene_from_cube,
    synth_random_scene,
    write_cube,
    write_image,
)
from .smatrix import build_smatrix, read_smatrix_csv, write_smatrix_csv


def _args_hash(args: argparse.Namespace) -> str:
    items = sorted(
        (k, repr(v)) for k, v in vars(args).items() if k not in ("func",)
    )
    blob = ";".join(f"{k}={v}" for k, v in items)
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def _parse_noise(spec: str, seed: int | None):
    """'read:0.01', 'shot:0.5', or 'none' -> (kind, param)."""
    if spec == "none":
        return None
    try:
        kind, param = spec.split(":", 1)
        param = float(param)
    except ValueError as exc:
        raise ConfigError(f"bad noise spec {spec!r}, expected kind:param") from exc
    if kind not in ("read", "shot"):
        raise ConfigError(f"unknown noise kind {kind!r}")
    if seed is None:
        raise ConfigError("--seed is required when noise is not 'none'")
    return kind, param


# ----------------------------------------------------------------------
# Commands


def cmd_gen_smatrix(args) -> int:
    s = build_smatrix(args.order, args.construction)
    write_smatrix_csv(s, args.out)
    print(f"wrote {args.out}: order {s.order}, {s.construction}, "
          f"row weight {(s.order + 1) // 2}")
    return 0


def cmd_synth_scenes(args) -> int:
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    children = np.random.SeedSequence(args.seed).spawn(args.count)
    for i, child in enumerate(children):
        sc = synth_random_scene(args.order, args.bands, blobs=args.blobs,
                                seed=child, floor=args.floor)
        write_cube(assemble_cube(sc), outdir / f"scene_{i:04d}.hcube")
    meta = [
        f"invocation_hash = {_args_hash(args)}",
        f"order = {args.order}",
        f"bands = {args.bands}",
        f"count = {args.count}",
        f"blobs = {args.blobs}",
        f"floor = {args.floor!r}",
        f"seed = {args.seed}",
    ]
    (outdir / "scenes.meta").write_text("\n".join(meta) + "\n")
    print(f"wrote {args.count} scenes to {outdir}")
    return 0


def _load_scene_files(scenes_dir: str):
    paths = sorted(Path(scenes_dir).glob("scene_*.hcube"))
    if not paths:
        raise ConfigError(f"no scene_*.hcube files in {scenes_dir}")
    return paths


def _load_code(spec: str, order: int):
    if spec == "full-1":
        return np.ones((order, order), dtype=np.int64)
    return read_smatrix_csv(spec)


def cmd_simulate(args) -> int:
    noise = _parse_noise(args.noise, args.seed)
    paths = _load_scene_files(args.scenes)
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    inv_hash = _args_hash(args)
    for i, path in enumerate(paths):
        sc = scene_from_cube(read_cube(path))
        code = _load_code(args.code, sc.order)
        coded = apply_code(code, sc.intensity)
        g = disperse(coded, sc.spectra)
        model = None
        if noise is not None:
            seed = int(np.random.SeedSequence((args.seed, i)).generate_state(1, np.uint64)[0])
            model = NoiseModel(noise[0], noise[1], seed)
            g = add_noise(g, model)
        save_dispersed(g, outdir / f"dispersed_{i:04d}.hcube", noise=model,
                       extra={"invocation_hash": inv_hash, "scene": path.name})
        write_image(coded, outdir / f"label_{i:04d}.hcube")
    print(f"simulated {len(paths)} scenes -> {outdir}")
    return 0


def _load_pairs(data_dir: str):
    disp = sorted(Path(data_dir).glob("dispersed_*.hcube"))
    if not disp:
        raise ConfigError(f"no dispersed_*.hcube files in {data_dir}")
    pairs = []
    bands = None
    for dpath in disp:
        lpath = dpath.parent / dpath.name.replace("dispersed_", "label_")
        if not lpath.exists():
            raise ConfigError(f"missing label for {dpath.name}")
        g = load_dispersed(dpath)
        bands = g.bands
        label = read_image(lpath)
        s = float(np.abs(g.values).max()) or 1.0
        pairs.append((g.values[None] / s, label[None] / s))
    return pairs, bands


def cmd_train(args) -> int:
    pairs, bands = _load_pairs(args.data)
    if args.preset == "desk":
        arch = netunmix.ArchConfig.desk(bands)
    else:
        arch = netunmix.ArchConfig.paper_scale(bands)
    n_val = max(1, int(round(args.val_frac * len(pairs)))) if args.val_frac > 0 else 0
    val = pairs[len(pairs) - n_val:] if n_val else None
    tr = pairs[: len(pairs) - n_val] if n_val else pairs
    if not tr:
        raise ConfigError("validation split leaves no training data")
    cfg = netunmix.TrainConfig(
        lr=args.lr, batch_size=args.batch, epochs=args.epochs,
        optimizer=args.optimizer, loss=args.loss, seed=args.seed,
        deterministic=not args.nondeterministic,
    )
    ckpt_epochs = []
    if args.checkpoint_epochs:
        ckpt_epochs = [int(tok) for tok in args.checkpoint_epochs.split(",") if tok]
    out = Path(args.out)

    def save_ckpt(epoch, params):
        netunmix.save_params(params, out.with_name(f"{out.stem}_ep{epoch:04d}{out.suffix}"))

    params, curve = netunmix.train(
        tr, cfg, arch=arch, val_dataset=val,
        checkpoint_epochs=ckpt_epochs, checkpoint_fn=save_ckpt,
    )
    netunmix.save_params(params, out)
    if args.curve:
        netunmix.save_loss_curve(curve, args.curve)
    print(f"trained {cfg.epochs} epochs on {len(tr)} samples "
          f"(final train loss {curve[-1][1]:.6g}); wrote {out}")
    return 0


def cmd_infer(args) -> int:
    params = netunmix.load_params(args.model)
    g = load_dispersed(args.input)
    est = netunmix.infer(params, g)
    write_image(est, args.out)
    print(f"wrote {args.out} ({est.shape[0]}x{est.shape[1]})")
    return 0


def cmd_reconstruct(args) -> int:
    g = load_dispersed(args.input)
    inv_hash = _args_hash(args)
    if args.method == "sub-hadamard":
        if not args.intensity:
            raise ConfigError("sub-hadamard needs --intensity")
        est = read_image(args.intensity)
        code = read_smatrix_csv(args.code).entries if args.code else None
        snap = normalize_to_snap(est, code, cond_max=args.cond_max)
        result = reconstruct_subhadamard(g, snap)
    else:
        if not args.code:
            raise ConfigError("hts-uniform needs --code")
        result = reconstruct_hts_uniform(g, read_smatrix_csv(args.code))
    write_spectra_csv(result, args.out, extra={"invocation_hash": inv_hash})
    print(f"wrote {args.out}: method {result.method}, "
          f"off-support energy {result.off_support_energy:.3e}")
    return 0


def cmd_compare(args) -> int:
    cfg = pipeline.load_config(args.config)
    report = pipeline.run_method_comparison(cfg)
    pipeline.write_report(report, args.out)
    for method, entry in report.entries.items():
        row = entry.summary_row(cfg.noise_kind, cfg.noise_param)
        print(f"{method}: mean SNR {row.mean_snr_db:.4f} dB "
              f"(std {row.std_db:.4f}, scored {row.trials}, skipped {entry.skipped})")
    print(f"report in {args.out} (config hash {report.hash})")
    return 0


def cmd_snr_sweep(args) -> int:
    cfg = pipeline.load_config(args.config)
    rows = ["# config_hash=" + pipeline.config_hash(cfg),
            "x,intensity_psnr_db,snr_mean_db,snr_std_db"]
    if args.mode in ("k", "noise"):
        if not args.values:
            raise ConfigError("empty sweep list")
        values = [float(tok) for tok in args.values.split(",") if tok.strip()]
        if not values:
            raise ConfigError("empty sweep list")
    if args.mode == "k":
        scene = pipeline.make_scenes(replace(cfg, scene_count=1))[0]
        code = pipeline.make_code(cfg)
        coded = apply_code(code, scene.intensity)
        snap = normalize_to_snap(coded, code, cond_max=cfg.cond_max)
        kind = "read" if cfg.noise_kind == "none" else cfg.noise_kind
        noise = NoiseModel(kind, cfg.noise_param, cfg.master_seed)
        for k in values:
            error = k * snap.matrix
            rep = metrics.perturbed_recon_snr(
                snap.matrix, error, scene.spectra, noise, trials=cfg.trials
            )
            ipsnr = metrics.psnr_db(snap.matrix, (1.0 - k) * snap.matrix, peak=1.0)
            rows.append(f"{k!r},{ipsnr!r},{rep.snr_db!r},{rep.std_db!r}")
    elif args.mode == "noise":
        for sigma in values:
            sub_cfg = replace(cfg, noise_param=sigma,
                              methods=("sub-hadamard-exact",),
                              noise_kind="read" if cfg.noise_kind == "none" else cfg.noise_kind)
            report = pipeline.run_method_comparison(sub_cfg)
            row = report.entries["sub-hadamard-exact"].summary_row(
                sub_cfg.noise_kind, sigma
            )
            rows.append(f"{sigma!r},inf,{row.mean_snr_db!r},{row.std_db!r}")
    elif args.mode == "checkpoints":
        if not args.checkpoints:
            raise ConfigError("empty sweep list")
        paths = [tok for tok in args.checkpoints.split(",") if tok.strip()]
        if not paths:
            raise ConfigError("empty sweep list")
        missing = [p for p in paths if not Path(p).exists()]
        if missing:
            raise FormatError(f"missing checkpoints: {', '.join(missing)}")
        scenes = pipeline.make_scenes(cfg)
        psnr_means, snr_means = [], []
        for i, p in enumerate(paths):
            params = netunmix.load_params(p)
            psnrs, snrs, _ = pipeline.eval_network(params, scenes, cfg)
            finite = [v for v in snrs if not math.isnan(v)]
            pm = float(np.mean(psnrs))
            sm = float(np.mean(finite)) if finite else float("nan")
            ss = float(np.std(finite)) if finite else float("nan")
            psnr_means.append(pm)
            snr_means.append(sm)
            rows.append(f"{i},{pm!r},{sm!r},{ss!r}")
        if len(paths) >= 2:
            rho = metrics.spearman_rank_corr(psnr_means, snr_means)
            rows.append(f"# spearman_psnr_snr={rho!r}")
            print(f"spearman(intensity PSNR, spectral SNR) = {rho:.4f}")
    Path(args.out).write_text("\n".join(rows) + "\n")
    print(f"wrote {args.out}")
    return 0


def cmd_grad_check(args) -> int:
    arch = netunmix.ArchConfig.desk(args.bands) if args.preset == "desk" \
        else netunmix.ArchConfig.paper_scale(args.bands)
    if args.linear:
        arch = replace(arch, activation="identity", include_enhance=False)
    params = netunmix.build_network(arch, seed=args.seed)
    rng = np.random.default_rng(args.seed)
    h, w = args.height, args.width
    x = rng.standard_normal((1, h, w + args.bands - 1))
    y = rng.standard_normal((1, h, w))
    err = netunmix.grad_check(params, (x, y), eps=args.eps,
                              num_params=args.samples, loss=args.loss, seed=args.seed)
    print(f"max relative gradient error: {err:.3e} "
          f"({args.samples} parameters, loss {args.loss})")
    return 0


def cmd_report(args) -> int:
    summary = Path(args.indir) / "summary.txt"
    if not summary.exists():
        raise FormatError(f"{summary}: not found")
    sys.stdout.write(summary.read_text())
    return 0


# ----------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="snapspec",
        description="Snapshot multiplexed spectrometer simulation toolkit",
    )
    p.add_argument("--version", action="version", version=f"snapspec {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen-smatrix", help="build a coding matrix and write it as CSV")
    g.add_argument("--order", type=int, required=True)
    g.add_argument("--construction", choices=["quadratic-residue", "m-sequence"])
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_gen_smatrix)

    g = sub.add_parser("synth-scenes", help="generate random scenes as cube files")
    g.add_argument("--order", type=int, required=True)
    g.add_argument("--bands", type=int, required=True)
    g.add_argument("--count", type=int, required=True)
    g.add_argument("--blobs", type=int, default=3)
    g.add_argument("--floor", type=float, default=0.05)
    g.add_argument("--seed", type=int, required=True)
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_synth_scenes)

    g = sub.add_parser("simulate", help="code, disperse, and add noise to scenes")
    g.add_argument("--scenes", required=True)
    g.add_argument("--code", required=True, help="coding matrix CSV or 'full-1'")
    g.add_argument("--noise", default="none", help="read:SIGMA, shot:ALPHA, or none")
    g.add_argument("--seed", type=int)
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_simulate)

    g = sub.add_parser("train", help="train the unmixing network")
    g.add_argument("--data", required=True, help="simulate output directory")
    g.add_argument("--preset", choices=["desk", "paper"], default="desk")
    g.add_argument("--epochs", type=int, default=50)
    g.add_argument("--batch", type=int, default=8)
    g.add_argument("--lr", type=float, default=1e-3)
    g.add_argument("--optimizer", choices=["adam", "sgd"], default="adam")
    g.add_argument("--loss", choices=["mse", "hard-mining"], default="mse")
    g.add_argument("--val-frac", type=float, default=0.0)
    g.add_argument("--seed", type=int, required=True)
    g.add_argument("--checkpoint-epochs", default="")
    g.add_argument("--curve", default="")
    g.add_argument("--nondeterministic", action="store_true")
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_train)

    g = sub.add_parser("infer", help="estimate coded intensity from a measurement")
    g.add_argument("--model", required=True)
    g.add_argument("--input", required=True)
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_infer)

    g = sub.add_parser("reconstruct", help="recover spectra from a measurement")
    g.add_argument("--input", required=True)
    g.add_argument("--method", choices=["sub-hadamard", "hts-uniform"], required=True)
    g.add_argument("--intensity", default="", help="intensity image for sub-hadamard")
    g.add_argument("--code", default="", help="coding matrix CSV")
    g.add_argument("--cond-max", type=float, default=1e6)
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_reconstruct)

    g = sub.add_parser("compare", help="run a method comparison experiment")
    g.add_argument("--config", required=True)
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_compare)

    g = sub.add_parser("snr-sweep", help="sweep k, noise, or training checkpoints")
    g.add_argument("--config", required=True)
    g.add_argument("--mode", choices=["k", "noise", "checkpoints"], required=True)
    g.add_argument("--values", default="", help="comma list for k/noise modes")
    g.add_argument("--checkpoints", default="", help="comma list of .hnet files")
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_snr_sweep)

    g = sub.add_parser("grad-check", help="finite-difference gradient verification")
    g.add_argument("--preset", choices=["desk", "paper"], default="desk")
    g.add_argument("--bands", type=int, default=8)
    g.add_argument("--loss", choices=["mse", "hard-mining"], default="mse")
    g.add_argument("--linear", action="store_true", help="relu-free sub-network")
    g.add_argument("--eps", type=float, default=1e-4)
    g.add_argument("--samples", type=int, default=200)
    g.add_argument("--height", type=int, default=16)
    g.add_argument("--width", type=int, default=16)
    g.add_argument("--seed", type=int, required=True)
    g.set_defaults(func=cmd_grad_check)

    g = sub.add_parser("report", help="print the summary of an experiment directory")
    g.add_argument("--in", dest="indir", required=True)
    g.set_defaults(func=cmd_report)

    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except SnapSpecError as exc:
        print(f"error: {exc.code}: {exc}", file=sys.stderr)
        return 1
    except (ValueError, OSError, np.linalg.LinAlgError) as exc:
        print(f"error: runtime: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
