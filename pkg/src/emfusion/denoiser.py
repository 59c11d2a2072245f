"""Noise-prediction network: residual U-Net with cross-attention.

The network maps a noisy window (B, L, N), a diffusion step t and a
condition tensor (B, N_f, d_f) to a noise estimate of the window's
shape.  Structure per resolution level:

    encoder:  residual block -> stride-2 conv (time axis)
    decoder:  nearest x2 upsample -> conv -> skip concat -> residual block

Each residual block runs GroupNorm/SiLU/conv, injects the timestep
embedding through a per-block linear layer, applies a cross-attention
residual against the condition tensor, then GroupNorm/SiLU/dropout/conv
and a shortcut add.  Queries come from the flattened feature map
(rows = conv channels), keys and values from the condition rows; both
get a sinusoidal positional table added first.

Windows whose length is not a multiple of 2**depth are right-padded by
edge replication before the U-Net and cropped after.  The final output
convolution starts at zero so an untrained net predicts zero noise.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import ConfigError, NumericError

__all__ = [
    "NetConfig",
    "Denoiser",
    "embed_timestep",
    "positional_table",
    "positional_encode",
    "cross_attention",
    "group_norm",
    "residual_block",
    "param_shapes",
    "init_params",
    "PAPER_SCALE",
    "DESK_SCALE",
]

_GN_EPS = 1e-5


@dataclass(frozen=True)
class NetConfig:
    """Hyperparameters from which every tensor shape is derivable."""

    window_len: int               # H + F
    channels: int                 # N variates
    depth: int = 2                # encoder/decoder levels
    base_width: int = 16          # conv channels at the top level
    heads: int = 2
    attention_width: int = 32     # query/key/value projection width
    time_embed_width: int = 32    # sinusoidal timestep embedding width
    cond_len: int = 24            # N_f condition rows
    cond_width: int = 1           # d_f features per condition row
    dropout: float = 0.0
    mode: str = "multivariate"

    def __post_init__(self):
        if self.depth < 1:
            raise ConfigError("depth must be >= 1")
        if self.mode not in ("univariate", "multivariate"):
            raise ConfigError(f"unknown mode {self.mode!r}")
        if self.mode == "univariate" and self.channels != 1:
            raise ConfigError("univariate mode requires exactly one channel")
        if self.attention_width % self.heads != 0:
            raise ConfigError(
                f"heads ({self.heads}) must divide attention width ({self.attention_width})"
            )
        if self.time_embed_width % 2 != 0 or self.time_embed_width < 2:
            raise ConfigError("time embedding width must be even and >= 2")
        if not (0.0 <= self.dropout <= 1.0):
            raise ConfigError("dropout must be in [0, 1]")
        if self.window_len < 2**self.depth:
            raise ConfigError(f"window of {self.window_len} too short for depth {self.depth}")
        if not (1 <= self.cond_len <= self.window_len):
            raise ConfigError("condition length must be in [1, window_len]")

    @property
    def padded_len(self) -> int:
        block = 2**self.depth
        return ((self.window_len + block - 1) // block) * block

    @property
    def kernel_width(self) -> int:
        # univariate: 1-D convolution along time; multivariate: 3-wide
        # kernel couples neighbouring variates as well
        return 1 if self.mode == "univariate" else 3

    def level_width(self, level: int) -> int:
        return self.base_width * 2**level

    def level_len(self, level: int) -> int:
        return self.padded_len // 2**level


# presets: the published configuration and a CPU-sized twin
PAPER_SCALE = dict(depth=6, base_width=64, heads=8, attention_width=64, time_embed_width=128)
DESK_SCALE = dict(depth=2, base_width=16, heads=2, attention_width=32, time_embed_width=32)


# -- encodings ----------------------------------------------------------
def embed_timestep(t, width: int) -> np.ndarray:
    """Sinusoidal diffusion-step embedding, cosines then sines.

    Frequencies: w_m = exp(-ln(10000) * 2m / width) for m < width/2.
    Accepts a scalar step or a vector of per-sample steps.
    """
    if width % 2 != 0 or width < 2:
        raise ConfigError("embedding width must be even and >= 2")
    m = np.arange(width // 2, dtype=np.float64)
    omega = np.exp(-math.log(10000.0) * 2.0 * m / width)
    angles = np.multiply.outer(np.asarray(t, dtype=np.float64), omega)
    return np.concatenate([np.cos(angles), np.sin(angles)], axis=-1)


def positional_table(length: int, dim: int) -> np.ndarray:
    """Sin/cos position table: even columns sine, odd columns cosine."""
    table = np.zeros((length, dim))
    positions = np.arange(length, dtype=np.float64)[:, None]
    idx = np.arange(0, dim, 2, dtype=np.float64)
    rates = positions / np.power(10000.0, idx / dim)
    table[:, 0::2] = np.sin(rates)
    table[:, 1::2] = np.cos(rates[:, : table[:, 1::2].shape[1]])
    return table


def positional_encode(sequence) -> np.ndarray:
    """Add the positional table matching the (rows, dim) of ``sequence``."""
    seq = np.asarray(sequence, dtype=np.float64)
    if seq.size == 0:
        raise ConfigError("cannot positionally encode an empty sequence")
    return seq + positional_table(seq.shape[-2], seq.shape[-1])


# -- building blocks ----------------------------------------------------
def group_norm(x: Tensor, gamma: Tensor, beta: Tensor) -> Tensor:
    """GroupNorm over (B, L, N, C) with min(8, C) groups."""
    b, l, n, c = x.shape
    groups = _group_count(c)
    xg = ad.reshape(x, (b, l, n, groups, c // groups))
    mu = ad.mean(xg, axis=(1, 2, 4), keepdims=True)
    centered = xg - mu
    var = ad.mean(centered * centered, axis=(1, 2, 4), keepdims=True)
    normed = centered * ad.power(var + _GN_EPS, -0.5)
    out = ad.reshape(normed, (b, l, n, c))
    return out * gamma + beta


def _group_count(channels: int) -> int:
    for g in range(min(8, channels), 0, -1):
        if channels % g == 0:
            return g
    return 1


def cross_attention(
    h: Tensor,
    cond: Tensor,
    wq: Tensor,
    wk: Tensor,
    wv: Tensor,
    wo: Tensor,
    heads: int = 1,
    attn_sink: list | None = None,
    return_delta: bool = False,
):
    """Residual cross-attention of a feature map against condition rows.

    ``h``: (B, L, N, C) feature map, flattened to (B, C, L*N) so each
    conv channel is one query row.  ``cond``: (B, N_f, d_f).  Returns
    ``h + delta`` (and optionally ``delta``); every softmax row sums
    to one.
    """
    b, l, n, c = h.shape
    n_h = l * n
    n_f, d_f = cond.shape[-2], cond.shape[-1]
    if wq.shape[0] != n_h:
        raise ConfigError(f"W_Q expects {wq.shape[0]} feature columns, feature map has {n_h}")
    if wq.shape[1] != wk.shape[1] or wk.shape != wv.shape:
        raise ConfigError(f"attention projection widths disagree: {wq.shape} vs {wk.shape}")
    if wk.shape[0] != d_f:
        raise ConfigError(f"condition width {d_f} does not match W_K rows {wk.shape[0]}")
    width = wq.shape[1]
    if width % heads != 0:
        raise ConfigError(f"heads ({heads}) must divide attention width ({width})")
    d_head = width // heads

    h_flat = ad.transpose(ad.reshape(h, (b, n_h, c)), (0, 2, 1)) + Tensor(positional_table(c, n_h))
    c_pe = cond + Tensor(positional_table(n_f, d_f))
    q = ad.matmul(h_flat, wq)  # (B, C, width)
    k = ad.matmul(c_pe, wk)    # (B, N_f, width)
    v = ad.matmul(c_pe, wv)

    def split(x_t: Tensor, rows: int) -> Tensor:
        return ad.transpose(ad.reshape(x_t, (b, rows, heads, d_head)), (0, 2, 1, 3))

    qh, kh, vh = split(q, c), split(k, n_f), split(v, n_f)
    scores = ad.matmul(qh, ad.transpose(kh, (0, 1, 3, 2))) * (1.0 / math.sqrt(d_head))
    attn = ad.softmax(scores, axis=-1)  # (B, heads, C, N_f)
    if attn_sink is not None:
        attn_sink.append(attn.data.copy())
    ctx = ad.matmul(attn, vh)
    ctx = ad.reshape(ad.transpose(ctx, (0, 2, 1, 3)), (b, c, width))
    delta = ad.reshape(ad.transpose(ad.matmul(ctx, wo), (0, 2, 1)), (b, l, n, c))
    out = h + delta
    return (out, delta) if return_delta else out


def _dropout(x: Tensor, rate: float, stream) -> Tensor:
    if rate >= 1.0:
        return x * Tensor(np.zeros(x.shape))
    if rate <= 0.0 or stream is None:
        return x
    keep = 1.0 - rate
    mask = (stream.random(x.shape) < keep).astype(np.float64) / keep
    return x * Tensor(mask)


def residual_block(
    h: Tensor,
    t_embed: Tensor,
    cond: Tensor,
    p: dict[str, Tensor],
    prefix: str,
    heads: int,
    dropout: float = 0.0,
    dropout_stream=None,
    attn_sink: list | None = None,
) -> Tensor:
    """One GN/SiLU/conv block with timestep injection and cross-attention."""
    b = h.shape[0]
    tilde = ad.conv2d(ad.silu(group_norm(h, p[f"{prefix}.gn1.gamma"], p[f"{prefix}.gn1.beta"])),
                      p[f"{prefix}.conv1.w"], p[f"{prefix}.conv1.b"])
    t_proj = ad.matmul(ad.silu(t_embed), p[f"{prefix}.temb.w"]) + p[f"{prefix}.temb.b"]
    h_t = tilde + ad.reshape(t_proj, (b, 1, 1, tilde.shape[3]))
    h_a = cross_attention(
        h_t, cond,
        p[f"{prefix}.attn.wq"], p[f"{prefix}.attn.wk"],
        p[f"{prefix}.attn.wv"], p[f"{prefix}.attn.wo"],
        heads=heads, attn_sink=attn_sink,
    )
    body = ad.silu(group_norm(h_a, p[f"{prefix}.gn2.gamma"], p[f"{prefix}.gn2.beta"]))
    body = ad.conv2d(_dropout(body, dropout, dropout_stream),
                     p[f"{prefix}.conv2.w"], p[f"{prefix}.conv2.b"])
    if f"{prefix}.skip.w" in p:
        shortcut = ad.conv2d(h, p[f"{prefix}.skip.w"], p[f"{prefix}.skip.b"])
    else:
        shortcut = h
    return body + shortcut


# -- parameter bookkeeping ----------------------------------------------
def _block_shapes(config: NetConfig, prefix: str, c_in: int, c_out: int, level_len: int):
    kw = config.kernel_width
    n_h = level_len * config.channels
    e = config.attention_width
    shapes = {
        f"{prefix}.gn1.gamma": (c_in,),
        f"{prefix}.gn1.beta": (c_in,),
        f"{prefix}.conv1.w": (3, kw, c_in, c_out),
        f"{prefix}.conv1.b": (c_out,),
        f"{prefix}.temb.w": (config.time_embed_width, c_out),
        f"{prefix}.temb.b": (c_out,),
        f"{prefix}.attn.wq": (n_h, e),
        f"{prefix}.attn.wk": (config.cond_width, e),
        f"{prefix}.attn.wv": (config.cond_width, e),
        f"{prefix}.attn.wo": (e, n_h),
        f"{prefix}.gn2.gamma": (c_out,),
        f"{prefix}.gn2.beta": (c_out,),
        f"{prefix}.conv2.w": (3, kw, c_out, c_out),
        f"{prefix}.conv2.b": (c_out,),
    }
    if c_in != c_out:
        shapes[f"{prefix}.skip.w"] = (1, 1, c_in, c_out)
        shapes[f"{prefix}.skip.b"] = (c_out,)
    return shapes


def param_shapes(config: NetConfig) -> dict[str, tuple[int, ...]]:
    """Every learnable tensor's shape, in a stable order."""
    kw = config.kernel_width
    shapes: dict[str, tuple[int, ...]] = {
        "in.w": (3, kw, 1, config.base_width),
        "in.b": (config.base_width,),
    }
    for i in range(config.depth):
        ci, cn = config.level_width(i), config.level_width(i + 1)
        shapes.update(_block_shapes(config, f"enc{i}.res", ci, ci, config.level_len(i)))
        shapes[f"enc{i}.down.w"] = (3, kw, ci, cn)
        shapes[f"enc{i}.down.b"] = (cn,)
    c_mid = config.level_width(config.depth)
    shapes.update(_block_shapes(config, "mid.res", c_mid, c_mid, config.level_len(config.depth)))
    for i in reversed(range(config.depth)):
        ci, cn = config.level_width(i), config.level_width(i + 1)
        shapes[f"dec{i}.up.w"] = (3, kw, cn, ci)
        shapes[f"dec{i}.up.b"] = (ci,)
        shapes.update(_block_shapes(config, f"dec{i}.res", 2 * ci, ci, config.level_len(i)))
    shapes["head.gn.gamma"] = (config.base_width,)
    shapes["head.gn.beta"] = (config.base_width,)
    shapes["out.w"] = (3, kw, config.base_width, 1)
    shapes["out.b"] = (1,)
    return shapes


def init_params(config: NetConfig, stream) -> dict[str, Tensor]:
    """Fan-in-scaled uniform init; attention output and final conv start
    at zero, GroupNorm scales at one."""
    params: dict[str, Tensor] = {}
    for name, shape in param_shapes(config).items():
        if name.endswith("gamma"):
            data = np.ones(shape)
        elif name.endswith("beta") or name.endswith(".b") or name.endswith(".wo") or name == "out.w":
            data = np.zeros(shape)
        else:
            fan_in = int(np.prod(shape[:-1])) if len(shape) > 1 else int(shape[0])
            limit = math.sqrt(3.0 / max(fan_in, 1))
            data = stream.uniform(-limit, limit, size=shape)
        params[name] = Tensor(data, requires_grad=True)
    return params


@dataclass
class Denoiser:
    """NetConfig plus its parameter tensors; callable noise predictor."""

    config: NetConfig
    params: dict[str, Tensor] = field(default_factory=dict)

    @classmethod
    def initialize(cls, config: NetConfig, stream) -> "Denoiser":
        return cls(config, init_params(config, stream))

    def parameters(self) -> dict[str, Tensor]:
        return self.params

    def predict(self, x, t, cond, dropout_stream=None, attn_sink: list | None = None) -> Tensor:
        """Noise estimate for a batch: x (B, L, N), t (B,), cond (B, N_f, d_f)."""
        cfg = self.config
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 3 or x.shape[1] != cfg.window_len or x.shape[2] != cfg.channels:
            raise ConfigError(
                f"input shape {x.shape} does not match (B, {cfg.window_len}, {cfg.channels})"
            )
        cond = np.asarray(cond, dtype=np.float64)
        if cond.shape != (x.shape[0], cfg.cond_len, cfg.cond_width):
            raise ConfigError(
                f"condition shape {cond.shape} does not match "
                f"(B, {cfg.cond_len}, {cfg.cond_width})"
            )
        b = x.shape[0]
        pad = cfg.padded_len - cfg.window_len
        xp = np.pad(x, ((0, 0), (0, pad), (0, 0)), mode="edge") if pad else x
        h = Tensor(xp.reshape(b, cfg.padded_len, cfg.channels, 1))
        cond_t = Tensor(cond)
        t_e = Tensor(embed_timestep(np.asarray(t, dtype=np.float64).reshape(b), cfg.time_embed_width))
        p = self.params

        h = ad.conv2d(h, p["in.w"], p["in.b"])
        skips = []
        for i in range(cfg.depth):
            h = residual_block(h, t_e, cond_t, p, f"enc{i}.res", cfg.heads,
                               cfg.dropout, dropout_stream, attn_sink)
            self._check(h, f"enc{i}.res")
            skips.append(h)
            h = ad.conv2d(h, p[f"enc{i}.down.w"], p[f"enc{i}.down.b"], stride=(2, 1))
        h = residual_block(h, t_e, cond_t, p, "mid.res", cfg.heads,
                           cfg.dropout, dropout_stream, attn_sink)
        self._check(h, "mid.res")
        for i in reversed(range(cfg.depth)):
            h = ad.conv2d(ad.upsample_rows(h), p[f"dec{i}.up.w"], p[f"dec{i}.up.b"])
            h = ad.concat([h, skips[i]], axis=3)
            h = residual_block(h, t_e, cond_t, p, f"dec{i}.res", cfg.heads,
                               cfg.dropout, dropout_stream, attn_sink)
            self._check(h, f"dec{i}.res")
        h = ad.silu(group_norm(h, p["head.gn.gamma"], p["head.gn.beta"]))
        h = ad.conv2d(h, p["out.w"], p["out.b"])
        self._check(h, "out")
        h = ad.reshape(h, (b, cfg.padded_len, cfg.channels))
        if pad:
            h = ad.slice_axis(h, 1, 0, cfg.window_len)
        return h

    def predict_values(self, x, t, cond) -> np.ndarray:
        """Frozen-network evaluation without graph recording."""
        with ad.no_grad():
            return self.predict(x, t, cond).data

    @staticmethod
    def _check(h: Tensor, where: str):
        if not np.all(np.isfinite(h.data)):
            raise NumericError(f"non-finite activation after block {where!r}")

    def with_params(self, params: dict[str, Tensor]) -> "Denoiser":
        return replace(self, params=params)
