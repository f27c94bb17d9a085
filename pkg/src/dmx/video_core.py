"""Media and conditioning data model plus lossless frame I/O.

A video is a (frames, height, width, 3) float32 array in [-1, 1] with a
frame rate tag. Values are immutable after construction so instances can
be shared freely across workers.
"""

from __future__ import annotations

import hashlib
import re
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import (
    DimensionMismatchError,
    EmptyInputError,
    InvalidArgumentError,
)
from .vocab import RARE_TOKEN_ID, VOCAB_SIZE

RAW_MAGIC = b"DMXV1"
_FRAME_NAME = "frame_{:05d}.png"
_IMAGE_SUFFIXES = {".png", ".jpg", ".jpeg", ".bmp"}


@dataclass(frozen=True)
class VideoTensor:
    """A (F, H, W, C) float32 pixel tensor plus frames-per-second."""

    data: np.ndarray
    fps: float = 8.0

    def __post_init__(self):
        arr = np.array(self.data, dtype=np.float32, copy=True, order="C")
        if arr.ndim != 4:
            raise DimensionMismatchError(f"video data must be 4-d (F,H,W,C), got shape {arr.shape}")
        f, h, w, c = arr.shape
        if f < 1 or h < 1 or w < 1:
            raise DimensionMismatchError(f"degenerate video shape {arr.shape}")
        if c != 3:
            raise DimensionMismatchError(f"videos must have 3 channels, got {c}")
        if not np.all(np.isfinite(arr)):
            raise InvalidArgumentError("video contains non-finite values")
        if not (self.fps > 0):
            raise InvalidArgumentError(f"fps must be positive, got {self.fps}")
        arr.setflags(write=False)
        object.__setattr__(self, "data", arr)
        object.__setattr__(self, "fps", float(self.fps))

    @property
    def shape(self) -> tuple[int, int, int, int]:
        return self.data.shape

    @property
    def num_frames(self) -> int:
        return self.data.shape[0]

    @property
    def spatial(self) -> tuple[int, int]:
        return self.data.shape[1], self.data.shape[2]

    def frame(self, i: int) -> "VideoTensor":
        """Frame ``i`` as a single-frame video."""
        return VideoTensor(self.data[i : i + 1], fps=self.fps)

    def content_digest(self) -> str:
        h = hashlib.sha256()
        h.update(struct.pack("<4I", *self.data.shape))
        h.update(self.data.tobytes())
        return h.hexdigest()


@dataclass(frozen=True)
class FrameSet:
    """An unordered collection of same-sized single-frame videos.

    No temporal ordering is retained; consumers that need a reproducible
    iteration order use :meth:`canonical`, which sorts by content digest
    so the same set of pixels always enumerates identically no matter how
    it was assembled.
    """

    frames: tuple[VideoTensor, ...]

    def __post_init__(self):
        frames = tuple(self.frames)
        if len(frames) == 0:
            raise EmptyInputError("a FrameSet needs at least one frame")
        hw = frames[0].spatial
        for fr in frames:
            if fr.num_frames != 1:
                raise DimensionMismatchError("FrameSet members must be single-frame videos")
            if fr.spatial != hw:
                raise DimensionMismatchError(
                    f"all frames must share spatial shape, got {fr.spatial} vs {hw}"
                )
        object.__setattr__(self, "frames", frames)

    @property
    def count(self) -> int:
        return len(self.frames)

    @property
    def spatial(self) -> tuple[int, int]:
        return self.frames[0].spatial

    def canonical(self) -> "FrameSet":
        """The same set with frames sorted by content digest."""
        return FrameSet(tuple(sorted(self.frames, key=lambda f: f.content_digest())))

    @staticmethod
    def from_video(v: VideoTensor) -> "FrameSet":
        return FrameSet(tuple(v.frame(i) for i in range(v.num_frames)))


@dataclass(frozen=True)
class PromptTokens:
    """A sequence of token ids from the fixed vocabulary."""

    tokens: tuple[int, ...]

    def __post_init__(self):
        toks = tuple(int(t) for t in self.tokens)
        if len(toks) < 1:
            raise EmptyInputError("prompt needs at least one token")
        for t in toks:
            if not (0 <= t < VOCAB_SIZE):
                raise InvalidArgumentError(f"token id {t} outside vocabulary of size {VOCAB_SIZE}")
        object.__setattr__(self, "tokens", toks)

    @property
    def contains_rare_token(self) -> bool:
        return RARE_TOKEN_ID in self.tokens

    def with_rare_token(self) -> "PromptTokens":
        """This prompt with the rare token appended (idempotent)."""
        if self.contains_rare_token:
            return self
        return PromptTokens(self.tokens + (RARE_TOKEN_ID,))

    def __len__(self) -> int:
        return len(self.tokens)


def _numeric_key(path: Path) -> int:
    nums = re.findall(r"\d+", path.stem)
    if not nums:
        raise InvalidArgumentError(f"frame file {path.name} has no numeric index in its name")
    return int(nums[-1])


def import_frames(directory_path, fps: float = 8.0) -> VideoTensor:
    """Load a numbered directory of 8-bit images as a video in [-1, 1].

    Frames are ordered by the numeric part of their filenames. Grayscale
    inputs are replicated to 3 channels.
    """
    directory = Path(directory_path)
    files = sorted(
        (p for p in directory.iterdir() if p.suffix.lower() in _IMAGE_SUFFIXES),
        key=_numeric_key,
    )
    if not files:
        raise EmptyInputError(f"no image files in {directory}")
    frames = []
    for p in files:
        with Image.open(p) as im:
            arr = np.asarray(im.convert("RGB"), dtype=np.float32)
        frames.append(arr / 127.5 - 1.0)
    hw = frames[0].shape
    for p, fr in zip(files, frames):
        if fr.shape != hw:
            raise DimensionMismatchError(
                f"frame {p.name} has shape {fr.shape[:2]}, expected {hw[:2]}"
            )
    return VideoTensor(np.stack(frames, axis=0), fps=fps)


def export_frames(v: VideoTensor, directory_path) -> None:
    """Write one zero-padded 8-bit PNG per frame.

    Values are clipped to [-1, 1] and quantized; a subsequent import
    round-trips within 1/255 per channel.
    """
    directory = Path(directory_path)
    directory.mkdir(parents=True, exist_ok=True)
    data = np.clip(v.data, -1.0, 1.0)
    quant = np.clip(np.round((data + 1.0) * 127.5), 0, 255).astype(np.uint8)
    for i in range(v.num_frames):
        Image.fromarray(quant[i]).save(directory / _FRAME_NAME.format(i))


def import_image(path, fps: float = 8.0) -> VideoTensor:
    """Load one image file as a single-frame video."""
    with Image.open(path) as im:
        arr = np.asarray(im.convert("RGB"), dtype=np.float32)
    return VideoTensor((arr / 127.5 - 1.0)[None], fps=fps)


def as_static_video(x: VideoTensor, n: int) -> VideoTensor:
    """Replicate a single frame n times along the frame axis."""
    if x.num_frames != 1:
        raise InvalidArgumentError(f"expected a single-frame video, got {x.num_frames} frames")
    if n < 1:
        raise InvalidArgumentError(f"frame count must be >= 1, got {n}")
    return VideoTensor(np.repeat(x.data, n, axis=0), fps=x.fps)


def save_tensor(v: VideoTensor, path) -> None:
    """Write the lossless raw format (magic, u32 F/H/W/C, f32 fps, f32 data)."""
    f, h, w, c = v.shape
    header = RAW_MAGIC + struct.pack("<4If", f, h, w, c, v.fps)
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(np.ascontiguousarray(v.data, dtype="<f4").tobytes())


def load_tensor(path) -> VideoTensor:
    with open(path, "rb") as fh:
        magic = fh.read(5)
        if magic != RAW_MAGIC:
            raise InvalidArgumentError(f"{path}: bad magic {magic!r}, expected {RAW_MAGIC!r}")
        f, h, w, c, fps = struct.unpack("<4If", fh.read(20))
        payload = fh.read()
    data = np.frombuffer(payload, dtype="<f4")
    if data.size != f * h * w * c:
        raise DimensionMismatchError(f"{path}: payload has {data.size} floats, header says {f*h*w*c}")
    return VideoTensor(data.reshape(f, h, w, c), fps=fps)
