"""Conditional clean-video predictor with a switchable temporal mode.

The network is a small spatial U-Net with factorized attention: per-frame
spatial self-attention, per-pixel-location temporal self-attention,
cross-attention to learned token embeddings, and a temporal-difference
convolution residual branch. In "masked" temporal mode the temporal
attention collapses to a self-only (identity) mask and the temporal
convolution branch is bypassed, so frame i of the output depends only on
frame i of the input. Both temporal paths are built so that a one-frame
forward in full mode is bit-equal to masked mode.

All normalization is computed per frame; nothing outside the two
temporal paths mixes information across frames.
"""

from __future__ import annotations

import json
import math
import struct
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import torch
import torch.nn.functional as tf
from torch import nn

from . import rng
from .errors import (
    ConfigurationError,
    DimensionMismatchError,
    InvalidArgumentError,
)
from .video_core import PromptTokens, VideoTensor
from .vocab import VOCAB_SIZE

MODE_FULL = "full"
MODE_MASKED = "masked"
TEMPORAL_MODES = (MODE_FULL, MODE_MASKED)

CKPT_MAGIC = b"DMXCKPT1"
CKPT_VERSION = 1


@dataclass(frozen=True)
class ArchSpec:
    """Hyperparameters fixing a DenoiserNet's architecture.

    ``conditioning`` states how a conditioning video is built for this
    stage ("none" for the base model, "spatial"/"temporal" for
    super-resolution stages); it also fixes whether the forward pass
    expects a second video concatenated on channels.
    """

    width: int = 32
    channel_mults: tuple[int, ...] = (1, 2)
    blocks_per_level: int = 1
    heads: int = 2
    vocab_size: int = VOCAB_SIZE
    token_dim: int = 32
    time_dim: int = 32
    attn_levels: tuple[int, ...] = (1,)
    middle_block: bool = True
    stem_kernel: int = 3
    conditioning: str = "none"
    cond_factor: int = 1
    dtype: str = "float32"

    def __post_init__(self):
        if self.conditioning not in ("none", "spatial", "temporal"):
            raise InvalidArgumentError(f"bad conditioning kind {self.conditioning!r}")
        if self.dtype not in ("float32", "float64"):
            raise InvalidArgumentError(f"bad dtype {self.dtype!r}")
        if self.time_dim % 2:
            raise InvalidArgumentError("time_dim must be even")
        for m in self.channel_mults:
            if (self.width * m) % self.heads:
                raise InvalidArgumentError("head count must divide every level width")
        object.__setattr__(self, "channel_mults", tuple(self.channel_mults))
        object.__setattr__(self, "attn_levels", tuple(self.attn_levels))

    @property
    def expects_cond(self) -> bool:
        return self.conditioning != "none"

    @property
    def in_channels(self) -> int:
        return 6 if self.expects_cond else 3

    @property
    def torch_dtype(self):
        return torch.float64 if self.dtype == "float64" else torch.float32


def _groups_for(channels: int) -> int:
    for g in (8, 4, 2, 1):
        if channels % g == 0:
            return g
    return 1


class FrameNorm(nn.Module):
    """GroupNorm with statistics computed independently per frame."""

    def __init__(self, channels: int):
        super().__init__()
        self.groups = _groups_for(channels)
        self.weight = nn.Parameter(torch.ones(channels))
        self.bias = nn.Parameter(torch.zeros(channels))

    def forward(self, x):
        b, c, f, h, w = x.shape
        y = x.permute(0, 2, 1, 3, 4).reshape(b * f, c, h, w)
        y = tf.group_norm(y, self.groups, self.weight, self.bias, eps=1e-5)
        return y.reshape(b, f, c, h, w).permute(0, 2, 1, 3, 4)


def _time_embedding(s, dim: int, dtype, device) -> torch.Tensor:
    """Sinusoidal features of the diffusion time, shape (B, dim)."""
    if not torch.is_tensor(s):
        s = torch.tensor([float(s)], dtype=dtype, device=device)
    s = s.to(dtype=dtype, device=device).reshape(-1)
    half = dim // 2
    if half == 1:
        freqs = torch.ones(1, dtype=dtype, device=device)
    else:
        freqs = torch.exp(
            torch.linspace(0.0, math.log(1000.0), half, dtype=dtype, device=device)
        )
    ang = s[:, None] * freqs[None, :]
    return torch.cat([torch.sin(ang), torch.cos(ang)], dim=1)


class ResBlock(nn.Module):
    """Per-frame residual block with additive time conditioning."""

    def __init__(self, c_in: int, c_out: int, time_dim: int):
        super().__init__()
        self.norm1 = FrameNorm(c_in)
        self.conv1 = nn.Conv3d(c_in, c_out, (1, 3, 3), padding=(0, 1, 1))
        self.time_proj = nn.Linear(time_dim, c_out)
        self.norm2 = FrameNorm(c_out)
        self.conv2 = nn.Conv3d(c_out, c_out, (1, 3, 3), padding=(0, 1, 1))
        self.conv2._zero_init = True
        self.skip = nn.Conv3d(c_in, c_out, 1) if c_in != c_out else None

    def forward(self, x, t_emb):
        h = self.conv1(tf.silu(self.norm1(x)))
        h = h + self.time_proj(t_emb)[:, :, None, None, None]
        h = self.conv2(tf.silu(self.norm2(h)))
        base = x if self.skip is None else self.skip(x)
        return base + h


class TemporalDiffBlock(nn.Module):
    """Residual branch over temporal neighbour differences.

    The branch input is (x[f-1]-x[f], x[f+1]-x[f]) with replicate padding
    at the ends, so it vanishes exactly on single frames and on
    temporally constant videos; no biases anywhere keeps that exact.
    In masked mode the branch is skipped entirely.
    """

    def __init__(self, channels: int):
        super().__init__()
        self.mix = nn.Conv3d(2 * channels, channels, 1, bias=False)
        self.out = nn.Conv3d(channels, channels, 1, bias=False)
        self.out._zero_init = True

    def forward(self, x, masked: bool):
        if masked or x.shape[2] == 1:
            return x
        prev = torch.cat([x[:, :, :1], x[:, :, :-1]], dim=2)
        nxt = torch.cat([x[:, :, 1:], x[:, :, -1:]], dim=2)
        d = torch.cat([prev - x, nxt - x], dim=1)
        return x + self.out(tf.silu(self.mix(d)))


def _split_heads(t, heads):
    b, n, c = t.shape
    return t.reshape(b, n, heads, c // heads).permute(0, 2, 1, 3)


def _merge_heads(t):
    b, h, n, d = t.shape
    return t.permute(0, 2, 1, 3).reshape(b, n, h * d)


def _attend(q, k, v, heads):
    qh, kh, vh = _split_heads(q, heads), _split_heads(k, heads), _split_heads(v, heads)
    scale = 1.0 / math.sqrt(qh.shape[-1])
    att = torch.softmax(qh @ kh.transpose(-2, -1) * scale, dim=-1)
    return _merge_heads(att @ vh)


class SpatialAttention(nn.Module):
    """Self-attention over pixels, independently per frame."""

    def __init__(self, channels: int, heads: int):
        super().__init__()
        self.heads = heads
        self.norm = FrameNorm(channels)
        self.qkv = nn.Linear(channels, 3 * channels, bias=False)
        self.out = nn.Linear(channels, channels, bias=False)
        self.out._zero_init = True

    def forward(self, x):
        b, c, f, h, w = x.shape
        y = self.norm(x).permute(0, 2, 3, 4, 1).reshape(b * f, h * w, c)
        q, k, v = self.qkv(y).chunk(3, dim=-1)
        y = self.out(_attend(q, k, v, self.heads))
        return x + y.reshape(b, f, h, w, c).permute(0, 4, 1, 2, 3)


class TemporalAttention(nn.Module):
    """Self-attention over frames at each pixel location.

    Masked mode restricts every frame to attend only to itself, which
    reduces the softmax to a delta and the output to out(v(x)).
    """

    def __init__(self, channels: int, heads: int):
        super().__init__()
        self.heads = heads
        self.norm = FrameNorm(channels)
        self.qkv = nn.Linear(channels, 3 * channels, bias=False)
        self.out = nn.Linear(channels, channels, bias=False)
        self.out._zero_init = True

    def forward(self, x, masked: bool):
        b, c, f, h, w = x.shape
        y = self.norm(x).permute(0, 3, 4, 2, 1).reshape(b * h * w, f, c)
        q, k, v = self.qkv(y).chunk(3, dim=-1)
        if masked:
            y = self.out(v)
        else:
            y = self.out(_attend(q, k, v, self.heads))
        return x + y.reshape(b, h, w, f, c).permute(0, 4, 3, 1, 2)


class CrossAttention(nn.Module):
    """Pixel queries attending to prompt token embeddings, per frame."""

    def __init__(self, channels: int, token_dim: int, heads: int):
        super().__init__()
        self.heads = heads
        self.norm = FrameNorm(channels)
        self.q = nn.Linear(channels, channels, bias=False)
        self.k = nn.Linear(token_dim, channels, bias=False)
        self.v = nn.Linear(token_dim, channels, bias=False)
        self.out = nn.Linear(channels, channels, bias=False)
        self.out._zero_init = True

    def forward(self, x, tok):
        b, c, f, h, w = x.shape
        y = self.norm(x).permute(0, 2, 3, 4, 1).reshape(b * f, h * w, c)
        q = self.q(y)
        k = self.k(tok).repeat_interleave(f, dim=0)
        v = self.v(tok).repeat_interleave(f, dim=0)
        y = self.out(_attend(q, k, v, self.heads))
        return x + y.reshape(b, f, h, w, c).permute(0, 4, 1, 2, 3)


class BlockGroup(nn.Module):
    """One unit of the U-Net: residual + temporal paths + attention."""

    def __init__(self, c_in: int, c_out: int, arch: ArchSpec, spatial_attn: bool):
        super().__init__()
        self.res = ResBlock(c_in, c_out, arch.time_dim)
        self.tdiff = TemporalDiffBlock(c_out)
        self.tattn = TemporalAttention(c_out, arch.heads)
        self.sattn = SpatialAttention(c_out, arch.heads) if spatial_attn else None
        self.xattn = CrossAttention(c_out, arch.token_dim, arch.heads)

    def forward(self, x, t_emb, tok, masked):
        x = self.res(x, t_emb)
        x = self.tdiff(x, masked)
        x = self.tattn(x, masked)
        if self.sattn is not None:
            x = self.sattn(x)
        x = self.xattn(x, tok)
        return x


class DenoiserNet(nn.Module):
    """Predicts the clean video from (noisy video, time, prompt, cond)."""

    def __init__(self, arch: ArchSpec, seed: int = 0):
        super().__init__()
        self.arch = arch
        widths = [arch.width * m for m in arch.channel_mults]
        pad = arch.stem_kernel // 2
        self.token_emb = nn.Embedding(arch.vocab_size, arch.token_dim)
        self.stem = nn.Conv3d(
            arch.in_channels, widths[0], (1, arch.stem_kernel, arch.stem_kernel),
            padding=(0, pad, pad),
        )
        levels = len(widths)
        self.down = nn.ModuleList()
        c_prev = widths[0]
        for i, w_i in enumerate(widths):
            blocks = nn.ModuleList()
            for b in range(arch.blocks_per_level):
                blocks.append(BlockGroup(c_prev, w_i, arch, i in arch.attn_levels))
                c_prev = w_i
            self.down.append(blocks)
        if arch.middle_block:
            self.middle = nn.ModuleList(
                [
                    BlockGroup(widths[-1], widths[-1], arch, True),
                    BlockGroup(widths[-1], widths[-1], arch, False),
                ]
            )
        else:
            self.middle = None
        self.up = nn.ModuleList()
        c_prev = widths[-1]
        for i in reversed(range(levels - 1)):
            blocks = nn.ModuleList()
            c_in = c_prev + widths[i]
            for b in range(arch.blocks_per_level):
                blocks.append(BlockGroup(c_in, widths[i], arch, i in arch.attn_levels))
                c_in = widths[i]
            c_prev = widths[i]
            self.up.append(blocks)
        self.head_norm = FrameNorm(widths[0])
        self.head = nn.Conv3d(
            widths[0], 3, (1, arch.stem_kernel, arch.stem_kernel), padding=(0, pad, pad)
        )
        self.to(self.arch.torch_dtype)
        self.reset_parameters(seed)

    @property
    def expects_cond(self) -> bool:
        return self.arch.expects_cond

    def reset_parameters(self, seed: int) -> None:
        """Deterministic re-init of every parameter from ``seed``.

        Convolution/linear weights use the usual 1/sqrt(fan_in) uniform
        init, norms start at identity, residual-tail layers marked
        ``_zero_init`` start at zero so untrained temporal/attention
        branches contribute nothing.
        """
        gen = rng.generator(seed, "init")
        with torch.no_grad():
            for name, mod in self.named_modules():
                if isinstance(mod, (nn.Conv3d, nn.Conv1d, nn.Linear)):
                    fan_in = mod.weight.shape[1] * int(np.prod(mod.weight.shape[2:]))
                    bound = 1.0 / math.sqrt(fan_in)
                    if getattr(mod, "_zero_init", False):
                        mod.weight.zero_()
                    else:
                        w = gen.uniform(-bound, bound, size=tuple(mod.weight.shape))
                        mod.weight.copy_(torch.from_numpy(w))
                    if mod.bias is not None:
                        b = gen.uniform(-bound, bound, size=tuple(mod.bias.shape))
                        mod.bias.copy_(torch.from_numpy(b))
                elif isinstance(mod, FrameNorm):
                    mod.weight.fill_(1.0)
                    mod.bias.zero_()
                elif isinstance(mod, nn.Embedding):
                    e = gen.standard_normal(size=tuple(mod.weight.shape))
                    mod.weight.copy_(torch.from_numpy(e))

    def forward(self, z, s, tokens, c=None, masked: bool = False):
        """Torch-level forward over a batch.

        z: (B, 3, F, H, W); s: scalar or (B,); tokens: (B, L) long;
        c: optional (B, 3, F, H, W) conditioning video, required iff the
        architecture expects one. Returns the clean-video prediction with
        z's shape.
        """
        if self.expects_cond:
            if c is None:
                raise InvalidArgumentError("this net requires a conditioning video")
            if c.shape != z.shape:
                raise DimensionMismatchError(
                    f"conditioning shape {tuple(c.shape)} != input shape {tuple(z.shape)}"
                )
            x = torch.cat([z, c], dim=1)
        else:
            if c is not None:
                raise InvalidArgumentError("this net does not take a conditioning video")
            x = z
        t_emb = _time_embedding(s, self.arch.time_dim, x.dtype, x.device)
        if t_emb.shape[0] == 1 and z.shape[0] > 1:
            t_emb = t_emb.expand(z.shape[0], -1)
        tok = self.token_emb(tokens)

        x = self.stem(x)
        skips = []
        for i, blocks in enumerate(self.down):
            for blk in blocks:
                x = blk(x, t_emb, tok, masked)
            if i < len(self.down) - 1:
                skips.append(x)
                x = tf.avg_pool3d(x, (1, 2, 2))
        if self.middle is not None:
            for blk in self.middle:
                x = blk(x, t_emb, tok, masked)
        for blocks in self.up:
            x = tf.interpolate(x, scale_factor=(1, 2, 2), mode="nearest")
            x = torch.cat([x, skips.pop()], dim=1)
            for blk in blocks:
                x = blk(x, t_emb, tok, masked)
        return self.head(tf.silu(self.head_norm(x)))

    # ---- numpy-facing API used by the sampler and cascade ----

    def _check_tokens(self, tokens) -> torch.Tensor:
        ids = [int(t) for t in tokens]
        for t in ids:
            if not (0 <= t < self.arch.vocab_size):
                raise InvalidArgumentError(
                    f"token id {t} outside this net's vocabulary ({self.arch.vocab_size})"
                )
        return torch.tensor([ids], dtype=torch.long)

    def predict_clean(self, z: np.ndarray, s: float, tokens, c, mode: str) -> np.ndarray:
        """Single-video prediction, (F,H,W,C) numpy in and out."""
        check_mode(mode)
        if not (0.0 <= float(s) <= 1.0):
            raise InvalidArgumentError(f"time s must lie in [0, 1], got {s}")
        tok = self._check_tokens(tokens)
        zt = _to_torch(z, self.arch.torch_dtype)
        ct = None
        if c is not None:
            if c.shape != z.shape:
                raise DimensionMismatchError(
                    f"conditioning shape {c.shape} != input shape {z.shape}"
                )
            ct = _to_torch(c, self.arch.torch_dtype)
        with torch.no_grad():
            out = self.forward(zt, float(s), tok, ct, masked=(mode == MODE_MASKED))
        return _from_torch(out)

    def param_count(self) -> int:
        return sum(p.numel() for p in self.parameters())

    def clone(self) -> "DenoiserNet":
        dup = DenoiserNet(self.arch, seed=0)
        dup.load_state_dict(self.state_dict())
        return dup


class OracleDenoiser:
    """Analytic stand-in denoiser that always returns a fixed target.

    Used to exercise the sampler and cascade independently of training.
    """

    expects_cond = False

    def __init__(self, target: VideoTensor):
        self.target = target.data

    def predict_clean(self, z, s, tokens, c, mode):
        if z.shape != self.target.shape:
            raise DimensionMismatchError(
                f"oracle target shape {self.target.shape} != input shape {z.shape}"
            )
        return self.target.copy()


def check_mode(mode: str) -> str:
    if mode not in TEMPORAL_MODES:
        raise InvalidArgumentError(f"temporal mode must be one of {TEMPORAL_MODES}, got {mode!r}")
    return mode


def _to_torch(data: np.ndarray, dtype) -> torch.Tensor:
    # (F,H,W,C) -> (1,C,F,H,W)
    arr = np.ascontiguousarray(np.transpose(data, (3, 0, 1, 2)))[None]
    return torch.from_numpy(arr).to(dtype)


def _from_torch(t: torch.Tensor) -> np.ndarray:
    arr = t.detach().to(torch.float32).numpy()[0]
    return np.ascontiguousarray(np.transpose(arr, (1, 2, 3, 0)))


def video_to_batch(v: np.ndarray, dtype=torch.float32) -> torch.Tensor:
    return _to_torch(v, dtype)


def batch_to_video(t: torch.Tensor) -> np.ndarray:
    return _from_torch(t)


def forward(net, z: VideoTensor, s: float, t: PromptTokens, c: VideoTensor | None = None,
            mode: str = MODE_FULL) -> VideoTensor:
    """Clean-video prediction on VideoTensor currency."""
    c_data = c.data if c is not None else None
    out = net.predict_clean(z.data, s, t.tokens, c_data, mode)
    return VideoTensor(out, fps=z.fps)


def perturb_frame_sensitivity(net, z: VideoTensor, s: float, t: PromptTokens,
                              mode: str = MODE_FULL, c: VideoTensor | None = None,
                              delta: float = 0.05) -> np.ndarray:
    """Finite-perturbation frame coupling matrix.

    Entry (i, j) is the RMS change of output frame i when input frame j
    is shifted by a constant ``delta``. Masked mode must produce a
    diagonal matrix.
    """
    c_data = c.data if c is not None else None
    base = net.predict_clean(z.data, s, t.tokens, c_data, mode)
    f = z.num_frames
    sens = np.zeros((f, f), dtype=np.float64)
    for j in range(f):
        bumped = z.data.copy()
        bumped[j] += delta
        out = net.predict_clean(bumped, s, t.tokens, c_data, mode)
        diff = out - base
        sens[:, j] = np.sqrt(np.mean(diff.reshape(f, -1).astype(np.float64) ** 2, axis=1))
    return sens


# ---- checkpoint container: json header + raw little-endian arrays ----

def save_checkpoint(net: DenoiserNet, path) -> None:
    """Write a version-tagged named-array checkpoint (byte-stable)."""
    state = net.state_dict()
    names = sorted(state.keys())
    arrays = {n: state[n].detach().cpu().numpy() for n in names}
    meta = {
        "format": "dmx-checkpoint",
        "version": CKPT_VERSION,
        "arch": asdict(net.arch),
        "params": [
            {"name": n, "dtype": str(arrays[n].dtype), "shape": list(arrays[n].shape)}
            for n in names
        ],
    }
    blob = json.dumps(meta, sort_keys=True).encode()
    with open(path, "wb") as fh:
        fh.write(CKPT_MAGIC)
        fh.write(struct.pack("<I", len(blob)))
        fh.write(blob)
        for n in names:
            fh.write(np.ascontiguousarray(arrays[n]).astype(arrays[n].dtype, order="C").tobytes())


def load_checkpoint(path) -> DenoiserNet:
    path = Path(path)
    if not path.exists():
        raise ConfigurationError(f"checkpoint not found: {path}")
    with open(path, "rb") as fh:
        if fh.read(8) != CKPT_MAGIC:
            raise ConfigurationError(f"{path}: not a checkpoint file")
        (n,) = struct.unpack("<I", fh.read(4))
        meta = json.loads(fh.read(n))
        if meta.get("version") != CKPT_VERSION:
            raise ConfigurationError(f"{path}: unsupported checkpoint version {meta.get('version')}")
        arch_kw = dict(meta["arch"])
        arch_kw["channel_mults"] = tuple(arch_kw["channel_mults"])
        arch_kw["attn_levels"] = tuple(arch_kw["attn_levels"])
        arch = ArchSpec(**arch_kw)
        net = DenoiserNet(arch, seed=0)
        state = {}
        for spec in meta["params"]:
            count = int(np.prod(spec["shape"])) if spec["shape"] else 1
            raw = fh.read(count * np.dtype(spec["dtype"]).itemsize)
            arr = np.frombuffer(raw, dtype=spec["dtype"]).reshape(spec["shape"])
            state[spec["name"]] = torch.from_numpy(arr.copy())
    net.load_state_dict(state)
    return net


def checkpoint_hash(path) -> str:
    import hashlib

    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()
