"""Synthetic motion clips, sparse segment sampling and the ``TEAC`` clip format.

Every clip shows the same sprite on a torus moving UP, DOWN, LEFT or RIGHT.
Start positions are uniform and the canvas wraps, so any single frame has the
same distribution whatever the class: only motion tells the classes apart.
"""
from __future__ import annotations

import json
import struct
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from .errors import BadMagicError, InvalidPayloadError, TruncatedPayloadError, VersionMismatchError

CLASSES = ("UP", "DOWN", "LEFT", "RIGHT")
# (dy, dx) per class, image rows growing downwards
DIRECTIONS = {0: (-1.0, 0.0), 1: (1.0, 0.0), 2: (0.0, -1.0), 3: (0.0, 1.0)}

CLIP_MAGIC = b"TEAC"
CLIP_VERSION = 1
_HEADER = struct.Struct("<4s6I")


@dataclass(frozen=True)
class SyntheticSpec:
    size: int = 16
    frames: int = 32
    speed: float = 0.5
    sprite_size: int = 5
    noise: float = 0.05
    background: float = 0.2
    channels: int = 3
    seed: int = 0

    def validate(self) -> None:
        if self.size < 1 or self.frames < 1 or self.channels < 1:
            raise ValueError("size, frames and channels must be >= 1")
        if not 1 <= self.sprite_size <= self.size:
            raise ValueError(f"sprite of size {self.sprite_size} does not fit a {self.size}px frame")
        if self.noise < 0 or self.speed < 0:
            raise ValueError("noise and speed must be non-negative")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class ClipRecord:
    frames: np.ndarray  # [T_raw, C, H, W] float32 in [0, 1]
    label: int
    clip_id: int = 0

    def __post_init__(self):
        if self.frames.ndim != 4 or self.frames.shape[0] < 1:
            raise ValueError(f"clip frames must be [T_raw>=1, C, H, W], got {self.frames.shape}")


def make_sprite(spec: SyntheticSpec) -> np.ndarray:
    """The shared sprite, ``[C, s, s]``; an asymmetric pattern so that no
    motion is confusable with a change of appearance."""
    rng = np.random.default_rng([spec.seed, 0x5B1])
    s = spec.sprite_size
    sprite = rng.uniform(0.55, 1.0, size=(spec.channels, s, s))
    return sprite.astype(np.float32)


def _place(canvas_bg: float, sprite: np.ndarray, size: int, y: float, x: float) -> np.ndarray:
    """Render ``sprite`` with its corner at the real position ``(y, x)`` on a
    toroidal canvas, bilinearly splitting mass between neighbouring pixels."""
    c, s, _ = sprite.shape
    layer = np.zeros((c, size, size), dtype=np.float64)
    layer[:, :s, :s] = sprite
    mask = np.zeros((size, size))
    mask[:s, :s] = 1.0
    y0, x0 = int(np.floor(y)), int(np.floor(x))
    fy, fx = y - y0, x - x0
    out = np.zeros_like(layer)
    alpha = np.zeros_like(mask)
    for dy, wy in ((0, 1 - fy), (1, fy)):
        for dx, wx in ((0, 1 - fx), (1, fx)):
            wgt = wy * wx
            if wgt == 0.0:
                continue
            out += wgt * np.roll(layer, (y0 + dy, x0 + dx), axis=(1, 2))
            alpha += wgt * np.roll(mask, (y0 + dy, x0 + dx), axis=(0, 1))
    return out + canvas_bg * (1.0 - alpha)


def render_clip(spec: SyntheticSpec, label: int, rng: np.random.Generator,
                sprite: Optional[np.ndarray] = None) -> np.ndarray:
    if label not in DIRECTIONS:
        raise ValueError(f"label must be in 0..{len(CLASSES) - 1}, got {label}")
    sprite = make_sprite(spec) if sprite is None else sprite
    y, x = rng.uniform(0, spec.size, size=2)
    dy, dx = DIRECTIONS[label]
    frames = np.empty((spec.frames, spec.channels, spec.size, spec.size), dtype=np.float32)
    for t in range(spec.frames):
        img = _place(spec.background, sprite, spec.size,
                     (y + dy * spec.speed * t) % spec.size, (x + dx * spec.speed * t) % spec.size)
        if spec.noise:
            img = img + spec.noise * rng.standard_normal(img.shape)
        frames[t] = np.clip(img, 0.0, 1.0)
    return frames


def generate_dataset(spec: SyntheticSpec, n_per_class: int, stream: int = 0) -> list:
    """``n_per_class`` clips of each class, ordered index-major.

    Clip ``i`` of every class draws its start position and noise from the same
    generator (keyed by seed, ``stream`` and ``i``), so classes differ only in
    direction. Use distinct ``stream`` values for disjoint splits.
    """
    spec.validate()
    if n_per_class < 1:
        raise ValueError("n_per_class must be >= 1")
    sprite = make_sprite(spec)
    out = []
    for i in range(n_per_class):
        for label in range(len(CLASSES)):
            rng = np.random.default_rng([spec.seed, stream, i])
            out.append(ClipRecord(render_clip(spec, label, rng, sprite), label,
                                  clip_id=i * len(CLASSES) + label))
    return out


def make_splits(spec: SyntheticSpec, n_train: int = 500, n_val: int = 200) -> tuple:
    """Train and validation sets of ``n_train`` / ``n_val`` clips in total
    (both multiples of the class count)."""
    k = len(CLASSES)
    if n_train % k or n_val % k:
        raise ValueError(f"split sizes must be multiples of {k}")
    return generate_dataset(spec, n_train // k, stream=0), generate_dataset(spec, n_val // k, stream=1)


# ---------------------------------------------------------------- sampling

def segment_bounds(t_raw: int, t: int) -> list:
    """``[(start, end), ...]`` with boundaries at ``floor(i * t_raw / t)``."""
    if t_raw < 1:
        raise ValueError("clip has no frames")
    if t < 1:
        raise ValueError("T must be >= 1")
    edges = [(i * t_raw) // t for i in range(t + 1)]
    return list(zip(edges[:-1], edges[1:]))


def sample_indices(t_raw: int, t: int, mode: str = "test", rng: Optional[np.random.Generator] = None) -> np.ndarray:
    """One frame index per segment: the centre in ``test`` mode, uniform in
    ``train`` mode. An empty segment (``t_raw < t``) reuses the previous frame."""
    if mode not in ("train", "test"):
        raise ValueError(f"mode must be 'train' or 'test', got {mode!r}")
    if mode == "train" and rng is None:
        raise ValueError("train mode needs a generator")
    idx = []
    for start, end in segment_bounds(t_raw, t):
        if end <= start:
            idx.append(max(start - 1, 0))
        elif mode == "test":
            idx.append(start + (end - start) // 2)
        else:
            idx.append(int(rng.integers(start, end)))
    return np.asarray(idx, dtype=np.int64)


def sparse_sample(clip: ClipRecord, t: int, mode: str = "test", seed: Optional[int] = None,
                  rng: Optional[np.random.Generator] = None) -> np.ndarray:
    """``[T, C, H, W]`` frames picked by :func:`sample_indices`. In train mode
    pass either ``seed`` or a generator."""
    if mode == "train" and rng is None:
        rng = np.random.default_rng(seed)
    return clip.frames[sample_indices(clip.frames.shape[0], t, mode, rng)]


# ---------------------------------------------------------------- clip files

def encode_clip(clip: ClipRecord) -> bytes:
    t, c, h, w = clip.frames.shape
    data = np.ascontiguousarray(clip.frames, dtype="<f4")
    return _HEADER.pack(CLIP_MAGIC, CLIP_VERSION, int(clip.label), t, c, h, w) + data.tobytes()


def decode_clip(buf: bytes, clip_id: int = 0) -> ClipRecord:
    if len(buf) < 4 or buf[:4] != CLIP_MAGIC:
        raise BadMagicError("not a clip file (bad magic)")
    if len(buf) < _HEADER.size:
        raise TruncatedPayloadError("clip header is truncated")
    _, version, label, t, c, h, w = _HEADER.unpack_from(buf)
    if version != CLIP_VERSION:
        raise VersionMismatchError(f"clip version {version}, expected {CLIP_VERSION}")
    if label >= len(CLASSES):
        raise InvalidPayloadError(f"clip label {label} is not one of {len(CLASSES)} classes")
    if min(t, c, h, w) < 1:
        raise InvalidPayloadError(f"clip shape {(t, c, h, w)} has an empty axis")
    n = t * c * h * w
    need = _HEADER.size + 4 * n
    if len(buf) < need:
        raise TruncatedPayloadError(f"clip payload has {len(buf) - _HEADER.size} bytes, expected {4 * n}")
    if len(buf) > need:
        raise TruncatedPayloadError(f"clip file has {len(buf) - need} trailing bytes")
    frames = np.frombuffer(buf, dtype="<f4", count=n, offset=_HEADER.size).reshape(t, c, h, w)
    # no checksum in this format, so at least reject values a clip cannot hold
    if not np.all((frames >= 0) & (frames <= 1)):
        raise InvalidPayloadError("clip values must lie in [0, 1]")
    return ClipRecord(frames.astype(np.float32), label, clip_id)


def write_clip(path, clip: ClipRecord) -> Path:
    path = Path(path)
    path.write_bytes(encode_clip(clip))
    return path


def read_clip(path, clip_id: int = 0) -> ClipRecord:
    return decode_clip(Path(path).read_bytes(), clip_id)


def write_dataset(clips: list, out_dir) -> Path:
    """Write every clip plus ``manifest.json`` (a list of
    ``{path, label, clip_id}`` with paths relative to the manifest)."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    entries = []
    for clip in clips:
        name = f"clip_{clip.clip_id:05d}.teac"
        write_clip(out_dir / name, clip)
        entries.append({"path": name, "label": int(clip.label), "clip_id": int(clip.clip_id)})
    manifest = out_dir / "manifest.json"
    manifest.write_text(json.dumps(entries, indent=1) + "\n")
    return manifest


def read_manifest(path) -> list:
    """Load every clip listed in a manifest, in order."""
    path = Path(path)
    entries = json.loads(path.read_text())
    clips = []
    for e in entries:
        clip = read_clip(path.parent / e["path"], clip_id=int(e["clip_id"]))
        if clip.label != int(e["label"]):
            raise ValueError(f"{e['path']}: label {clip.label} disagrees with manifest label {e['label']}")
        clips.append(clip)
    return clips
