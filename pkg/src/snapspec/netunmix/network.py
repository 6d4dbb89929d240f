"""Unmixing network: architecture, forward/backward, serialization.

The network maps a dispersed measurement (one channel, width W + m - 1
for m bands) to the coded intensity image (one channel, width W).  It
has two stages:

- an unmixing head: one zero column of right padding, a 1 x (m+1)
  valid convolution along the dispersion axis collapsing the width to
  W, a pointwise transposed convolution expanding 1 -> m channels, and
  a ladder of 3x3 convolutions back down to one channel;
- an enhancement encoder/decoder of downsampler blocks and factorized
  residual (NonBt1d) blocks, with transposed-convolution upsampling.

Spatial dims are padded to a multiple of 8 before the encoder and the
output is cropped back, so any input size works.  Two presets are
provided: ``paper`` (16/64/128 encoder channels, 5+8 encoder blocks,
2+2 decoder blocks) and ``desk`` (8/16/32 channels, 1+1 encoder and
decoder blocks) small enough to train on a laptop CPU in minutes.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from ..errors import FormatError
from .layers import Conv2d, ConvTranspose2d, Downsampler, NonBt1d

_DOWNSAMPLES = 3
_PAD_MULTIPLE = 2 ** _DOWNSAMPLES


@dataclass(frozen=True)
class ArchConfig:
    bands: int
    encoder_widths: tuple[int, int, int] = (8, 16, 32)
    encoder_blocks: tuple[int, int] = (1, 1)
    decoder_blocks: tuple[int, int] = (1, 1)
    activation: str = "relu"          # "relu" | "identity"
    downsample: str = "erfnet"        # "erfnet" | "pool"
    include_enhance: bool = True
    preset: str = "custom"

    def __post_init__(self):
        if self.bands < 2:
            raise ValueError("need at least 2 bands")
        if self.activation not in ("relu", "identity"):
            raise ValueError(f"unknown activation {self.activation!r}")

    @classmethod
    def desk(cls, bands: int, **overrides) -> "ArchConfig":
        return replace(
            cls(bands=bands, encoder_widths=(8, 16, 32), encoder_blocks=(1, 1),
                decoder_blocks=(1, 1), preset="desk"),
            **overrides,
        )

    @classmethod
    def paper_scale(cls, bands: int, **overrides) -> "ArchConfig":
        return replace(
            cls(bands=bands, encoder_widths=(16, 64, 128), encoder_blocks=(5, 8),
                decoder_blocks=(2, 2), preset="paper"),
            **overrides,
        )

    @property
    def unmix_ladder(self) -> tuple[int, ...]:
        m = self.bands
        return (max(m // 2, 1), max(m // 4, 1), max(m // 8, 1), 1)


@dataclass
class NetworkParams:
    """Ordered parameter blocks aligned with the network's layer list."""

    cfg: ArchConfig
    names: list[str]
    blocks: list[dict[str, np.ndarray]] = field(default_factory=list)

    def copy(self) -> "NetworkParams":
        return NetworkParams(
            cfg=self.cfg,
            names=list(self.names),
            blocks=[{k: v.copy() for k, v in b.items()} for b in self.blocks],
        )

    def count(self) -> int:
        return sum(int(v.size) for b in self.blocks for v in b.values())


def _build_layers(cfg: ArchConfig) -> list:
    m = cfg.bands
    act = cfg.activation
    layers = [
        Conv2d("unmix.conv1", 1, 1, (1, m + 1), act="linear"),
        ConvTranspose2d("unmix.expand", 1, m, (1, 1), act="linear"),
    ]
    cin = m
    for i, cout in enumerate(cfg.unmix_ladder, start=2):
        layers.append(Conv2d(f"unmix.conv{i}", cin, cout, (3, 3), padding=(1, 1), act=act))
        cin = cout
    if not cfg.include_enhance:
        return layers
    w1, w2, w3 = cfg.encoder_widths
    layers.append(Downsampler("enc.down1", 1, w1, mode=cfg.downsample, act=act))
    layers.append(Downsampler("enc.down2", w1, w2, mode=cfg.downsample, act=act))
    for i in range(cfg.encoder_blocks[0]):
        layers.append(NonBt1d(f"enc.mid.nb{i + 1}", w2, act=act))
    layers.append(Downsampler("enc.down3", w2, w3, mode=cfg.downsample, act=act))
    for i in range(cfg.encoder_blocks[1]):
        layers.append(NonBt1d(f"enc.deep.nb{i + 1}", w3, act=act))
    layers.append(ConvTranspose2d("dec.up1", w3, w2, (3, 3), stride=(2, 2),
                                  padding=(1, 1), out_padding=(1, 1), act=act))
    for i in range(cfg.decoder_blocks[0]):
        layers.append(NonBt1d(f"dec.nb1.{i + 1}", w2, act=act))
    layers.append(ConvTranspose2d("dec.up2", w2, w1, (3, 3), stride=(2, 2),
                                  padding=(1, 1), out_padding=(1, 1), act=act))
    for i in range(cfg.decoder_blocks[1]):
        layers.append(NonBt1d(f"dec.nb2.{i + 1}", w1, act=act))
    layers.append(ConvTranspose2d("dec.out", w1, 1, (3, 3), stride=(2, 2),
                                  padding=(1, 1), out_padding=(1, 1), act="linear"))
    return layers


class Network:
    def __init__(self, cfg: ArchConfig):
        self.cfg = cfg
        self.layers = _build_layers(cfg)
        self._enhance_start = 2 + len(cfg.unmix_ladder)

    def init_params(self, seed: int) -> NetworkParams:
        rng = np.random.default_rng(seed)
        blocks = [layer.init_params(rng) for layer in self.layers]
        return NetworkParams(cfg=self.cfg, names=[l.name for l in self.layers], blocks=blocks)

    def forward(self, params: NetworkParams, x: np.ndarray, want_caches: bool = False):
        """Input (N, 1, H, W + bands - 1) -> output (N, 1, H, W)."""
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 4 or x.shape[1] != 1:
            raise ValueError(f"expected (N, 1, H, Wd) input, got {x.shape}")
        m = self.cfg.bands
        w_out = x.shape[3] - m + 1
        if w_out < 1:
            raise ValueError(f"input width {x.shape[3]} too small for {m} bands")
        cur = np.pad(x, ((0, 0), (0, 0), (0, 0), (0, 1)))
        caches = []
        for layer, block in zip(self.layers[:self._enhance_start], params.blocks):
            cur, cache = layer.forward(block, cur)
            caches.append(cache)
        pad_hw = (0, 0)
        if self.cfg.include_enhance:
            h, w = cur.shape[2], cur.shape[3]
            pad_hw = ((-h) % _PAD_MULTIPLE, (-w) % _PAD_MULTIPLE)
            if pad_hw != (0, 0):
                cur = np.pad(cur, ((0, 0), (0, 0), (0, pad_hw[0]), (0, pad_hw[1])))
            for layer, block in zip(
                self.layers[self._enhance_start:], params.blocks[self._enhance_start:]
            ):
                cur, cache = layer.forward(block, cur)
                caches.append(cache)
            if pad_hw != (0, 0):
                cur = cur[:, :, :h, :w]
        if want_caches:
            return cur, (caches, pad_hw, x.shape)
        return cur

    def backward(self, params: NetworkParams, state, gy: np.ndarray) -> list[dict]:
        """Gradient of a scalar loss w.r.t. every parameter block."""
        caches, pad_hw, in_shape = state
        grads: list[dict] = [None] * len(self.layers)
        cur = np.asarray(gy, dtype=np.float64)
        if self.cfg.include_enhance:
            if pad_hw != (0, 0):
                padded = np.zeros(
                    (cur.shape[0], cur.shape[1], cur.shape[2] + pad_hw[0], cur.shape[3] + pad_hw[1])
                )
                padded[:, :, :cur.shape[2], :cur.shape[3]] = cur
                cur = padded
            for i in range(len(self.layers) - 1, self._enhance_start - 1, -1):
                cur, grads[i] = self.layers[i].backward(params.blocks[i], caches[i], cur)
            if pad_hw != (0, 0):
                cur = cur[:, :, :cur.shape[2] - pad_hw[0], :cur.shape[3] - pad_hw[1]]
        for i in range(self._enhance_start - 1, -1, -1):
            cur, grads[i] = self.layers[i].backward(params.blocks[i], caches[i], cur)
        return grads

    def declared_shapes(self, h: int, w_in: int) -> list[tuple[str, tuple[int, int, int]]]:
        """Propagate (C, H, W) through the declared layer shapes."""
        shapes = [("input", (1, h, w_in))]
        c, hh, ww = 1, h, w_in + 1
        for layer in self.layers[:self._enhance_start]:
            c, hh, ww = layer.out_shape(c, hh, ww)
            shapes.append((layer.name, (c, hh, ww)))
        if self.cfg.include_enhance:
            out_h, out_w = hh, ww
            hh += (-hh) % _PAD_MULTIPLE
            ww += (-ww) % _PAD_MULTIPLE
            for layer in self.layers[self._enhance_start:]:
                c, hh, ww = layer.out_shape(c, hh, ww)
                shapes.append((layer.name, (c, hh, ww)))
            shapes.append(("output", (c, out_h, out_w)))
        else:
            shapes.append(("output", (c, hh, ww)))
        return shapes


def build_network(cfg: ArchConfig, seed: int) -> NetworkParams:
    """Seeded He (fan-in) initialization of all parameter blocks."""
    return Network(cfg).init_params(seed)


def infer(params: NetworkParams, dispersed) -> np.ndarray:
    """Estimate the coded intensity image from a dispersed measurement.

    Accepts a DispersedImage or a raw 2-d array of width W + bands - 1.
    The input is normalized by its own maximum before the forward pass
    and rescaled after (the network is trained on unit-peak inputs);
    the output is clamped to be nonnegative.
    """
    values = getattr(dispersed, "values", dispersed)
    values = np.asarray(values, dtype=np.float64)
    if values.ndim != 2:
        raise ValueError(f"expected a 2-d measurement, got {values.shape}")
    scale = float(np.abs(values).max())
    if scale == 0.0:
        scale = 1.0
    net = Network(params.cfg)
    out = net.forward(params, (values / scale)[None, None])
    return np.clip(out[0, 0] * scale, 0.0, None)


_MAGIC = "HNET1"


def save_params(params: NetworkParams, path: str | Path) -> None:
    """Write all parameter blocks.

    Format: ASCII header ``HNET1 <array-count>``, then for every
    parameter array one ASCII line ``<layer>/<param> <dims...>``
    followed immediately by its binary32 little-endian values.  Arrays
    appear in layer order, kernels before biases.
    """
    chunks = []
    count = 0
    for name, block in zip(params.names, params.blocks):
        for pname, arr in block.items():
            dims = " ".join(str(d) for d in arr.shape)
            chunks.append(f"{name}/{pname} {dims}\n".encode("ascii"))
            chunks.append(np.asarray(arr, dtype="<f4").tobytes(order="C"))
            count += 1
    Path(path).write_bytes(f"{_MAGIC} {count}\n".encode("ascii") + b"".join(chunks))


def load_params(path: str | Path, cfg: ArchConfig | None = None) -> NetworkParams:
    """Read a parameter file; values come back on the float32 grid.

    Without an explicit cfg the architecture is reconstructed from the
    block tags and shapes (standard relu/erfnet variants only).
    """
    raw = Path(path).read_bytes()
    pos = raw.find(b"\n")
    if pos < 0:
        raise FormatError(f"{path}: missing header")
    head = raw[:pos].split()
    if len(head) != 2 or head[0] != _MAGIC.encode():
        raise FormatError(f"{path}: bad header {raw[:pos]!r}")
    count = int(head[1])
    pos += 1
    arrays: list[tuple[str, np.ndarray]] = []
    for _ in range(count):
        nl = raw.find(b"\n", pos)
        if nl < 0:
            raise FormatError(f"{path}: truncated block header")
        parts = raw[pos:nl].decode("ascii").split()
        tag, dims = parts[0], tuple(int(d) for d in parts[1:])
        nbytes = int(np.prod(dims)) * 4 if dims else 4
        start = nl + 1
        payload = raw[start:start + nbytes]
        if len(payload) != nbytes:
            raise FormatError(f"{path}: truncated payload for {tag}")
        arrays.append((tag, np.frombuffer(payload, dtype="<f4").reshape(dims).astype(np.float64)))
        pos = start + nbytes
    if pos != len(raw):
        raise FormatError(f"{path}: {len(raw) - pos} trailing bytes")

    if cfg is None:
        cfg = _reconstruct_cfg(arrays, path)
    net = Network(cfg)
    params = net.init_params(seed=0)
    expected = [
        (f"{name}/{pname}", (i, pname))
        for i, (name, block) in enumerate(zip(params.names, params.blocks))
        for pname in block
    ]
    if len(expected) != len(arrays):
        raise FormatError(
            f"{path}: {len(arrays)} arrays, architecture expects {len(expected)}"
        )
    for (tag, arr), (want_tag, (i, pname)) in zip(arrays, expected):
        if tag != want_tag:
            raise FormatError(f"{path}: block {tag!r} where {want_tag!r} expected")
        if arr.shape != params.blocks[i][pname].shape:
            raise FormatError(
                f"{path}: {tag} has shape {arr.shape}, expected {params.blocks[i][pname].shape}"
            )
        params.blocks[i][pname] = arr
    return params


def _reconstruct_cfg(arrays: list[tuple[str, np.ndarray]], path) -> ArchConfig:
    shapes = {tag: arr.shape for tag, arr in arrays}
    if "unmix.expand/kernel" not in shapes:
        raise FormatError(f"{path}: no unmixing head; pass cfg explicitly")
    bands = shapes["unmix.expand/kernel"][1]
    if "enc.down1/kernel" not in shapes:
        return ArchConfig(bands=bands, include_enhance=False, preset="file")
    w1 = shapes["enc.down1/kernel"][0] + 1
    w2 = shapes["enc.down2/kernel"][0] + w1
    w3 = shapes["enc.down3/kernel"][0] + w2
    def _count(prefix):
        tags = {t.split("/")[0] for t, _ in arrays if t.startswith(prefix)}
        return len(tags)
    cfg = ArchConfig(
        bands=bands,
        encoder_widths=(w1, w2, w3),
        encoder_blocks=(_count("enc.mid.nb"), _count("enc.deep.nb")),
        decoder_blocks=(_count("dec.nb1."), _count("dec.nb2.")),
        preset="file",
    )
    return cfg
