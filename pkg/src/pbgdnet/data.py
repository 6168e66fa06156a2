"""Datasets: the Square synthetic benchmark, PPM/PGM ingestion, splits.

Images are variable-size (3, H, W) float64 tensors in [0, 1] and are never
silently resized on the way in; ``resize_bilinear`` exists only for
fixed-input baselines.  The only codecs are binary PPM (P6) and PGM (P5)
with maxval 255: bit-exact, dependency-free.  Manifests are CSV files of
``relative_path,label`` under a ``path,label`` header.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .tensor import Tensor


class DataError(ValueError):
    """Dataset-level problem: bad manifest, bad geometry, empty split."""


class PnmFormatError(DataError):
    """Malformed or unsupported PPM/PGM content."""


# ---------------------------------------------------------------------------
# PPM / PGM codecs (binary, maxval 255)


def _read_pnm_tokens(data: bytes, count: int, start: int) -> tuple[list[int], int]:
    tokens: list[int] = []
    i = start
    n = len(data)
    while len(tokens) < count:
        while i < n and data[i] in b" \t\r\n":
            i += 1
        if i < n and data[i] == ord("#"):
            while i < n and data[i] != ord("\n"):
                i += 1
            continue
        j = i
        while j < n and data[j] not in b" \t\r\n":
            j += 1
        if j == i:
            raise PnmFormatError("truncated header")
        try:
            tokens.append(int(data[i:j]))
        except ValueError:
            raise PnmFormatError(f"non-numeric header token {data[i:j]!r}") from None
        i = j
    if i >= n:
        raise PnmFormatError("missing payload")
    return tokens, i + 1  # skip the single whitespace after maxval


def _load_pnm(path, magic: bytes, channels: int) -> np.ndarray:
    data = Path(path).read_bytes()
    if not data.startswith(magic):
        raise PnmFormatError(f"{path}: expected {magic.decode()} header")
    (w, h, maxval), off = _read_pnm_tokens(data, 3, len(magic))
    if maxval != 255:
        raise PnmFormatError(f"{path}: unsupported maxval {maxval} (only 255)")
    if w <= 0 or h <= 0:
        raise PnmFormatError(f"{path}: bad dimensions {w}x{h}")
    need = w * h * channels
    payload = np.frombuffer(data, dtype=np.uint8, count=-1, offset=off)
    if payload.size < need:
        raise PnmFormatError(f"{path}: truncated payload ({payload.size} of {need} bytes)")
    px = payload[:need].astype(np.float64) / 255.0
    if channels == 1:
        return px.reshape(h, w)
    return px.reshape(h, w, 3).transpose(2, 0, 1)


def _quantize(arr: np.ndarray) -> np.ndarray:
    # round half up, clipped to the 8-bit range
    return np.clip(np.floor(arr * 255.0 + 0.5), 0, 255).astype(np.uint8)


def load_ppm(path) -> np.ndarray:
    """Binary P6 file -> (3, H, W) float64 in [0, 1]."""
    return _load_pnm(path, b"P6", 3)


def save_ppm(path, arr: np.ndarray) -> None:
    arr = np.asarray(arr)
    if arr.ndim != 3 or arr.shape[0] != 3:
        raise DataError(f"save_ppm needs (3,H,W), got {list(arr.shape)}")
    _, h, w = arr.shape
    with open(path, "wb") as f:
        f.write(b"P6\n%d %d\n255\n" % (w, h))
        f.write(_quantize(arr).transpose(1, 2, 0).tobytes())


def load_pgm(path) -> np.ndarray:
    """Binary P5 file -> (H, W) float64 in [0, 1]."""
    return _load_pnm(path, b"P5", 1)


def save_pgm(path, arr: np.ndarray) -> None:
    arr = np.asarray(arr)
    if arr.ndim != 2:
        raise DataError(f"save_pgm needs (H,W), got {list(arr.shape)}")
    h, w = arr.shape
    with open(path, "wb") as f:
        f.write(b"P5\n%d %d\n255\n" % (w, h))
        f.write(_quantize(arr).tobytes())


def read_pnm_size(path) -> tuple[int, int]:
    """(width, height) from a PPM/PGM header without decoding the payload."""
    with open(path, "rb") as f:
        data = f.read(512)
    if not data.startswith(b"P6") and not data.startswith(b"P5"):
        raise PnmFormatError(f"{path}: not a binary PPM/PGM file")
    (w, h, _), _ = _read_pnm_tokens(data, 3, 2)
    return w, h


def normalize_minmax(arr: np.ndarray) -> np.ndarray:
    """Map to [0, 1]; a constant map becomes uniform mid-gray."""
    lo, hi = float(arr.min()), float(arr.max())
    if hi == lo:
        return np.full_like(arr, 0.5)
    return (arr - lo) / (hi - lo)


# ---------------------------------------------------------------------------
# manifests and datasets


@dataclass
class ManifestEntry:
    path: str
    label: int
    width: int
    height: int
    split: Optional[str] = None


@dataclass
class DatasetManifest:
    root: Path
    entries: list[ManifestEntry]

    def tagged(self, split: str) -> list[ManifestEntry]:
        return [e for e in self.entries if e.split == split]

    def class_counts(self) -> dict[int, int]:
        counts: dict[int, int] = {}
        for e in self.entries:
            counts[e.label] = counts.get(e.label, 0) + 1
        return counts


def load_manifest(path) -> DatasetManifest:
    path = Path(path)
    root = path.parent
    entries: list[ManifestEntry] = []
    with open(path, newline="") as f:
        reader = csv.reader(f)
        header = next(reader, None)
        if header != ["path", "label"]:
            raise DataError(f"{path}: manifest header must be 'path,label', got {header}")
        for row in reader:
            if len(row) != 2:
                raise DataError(f"{path}: bad manifest row {row}")
            rel, label = row[0], int(row[1])
            w, h = read_pnm_size(root / rel)
            entries.append(ManifestEntry(path=rel, label=label, width=w, height=h))
    if not entries:
        raise DataError(f"{path}: empty manifest")
    return DatasetManifest(root=root, entries=entries)


def save_manifest(manifest: DatasetManifest, path) -> None:
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["path", "label"])
        for e in manifest.entries:
            writer.writerow([e.path, e.label])


def split(manifest: DatasetManifest, fractions: Sequence[float] = (0.8, 0.2),
          seed: int = 0) -> DatasetManifest:
    """Tag entries 'train'/'val' by a stratified, seeded shuffle split."""
    if len(fractions) != 2:
        raise DataError("split expects exactly two fractions (train, val)")
    if abs(sum(fractions) - 1.0) > 1e-9:
        raise DataError(f"fractions must sum to 1, got {fractions}")
    rng = np.random.default_rng(seed)
    by_label: dict[int, list[int]] = {}
    for i, e in enumerate(manifest.entries):
        by_label.setdefault(e.label, []).append(i)
    for label in sorted(by_label):
        idxs = by_label[label]
        order = rng.permutation(len(idxs))
        n_train = int(round(fractions[0] * len(idxs)))
        for rank, k in enumerate(order):
            manifest.entries[idxs[k]].split = "train" if rank < n_train else "val"
    for tag in ("train", "val"):
        if not manifest.tagged(tag):
            raise DataError(f"split produced an empty {tag!r} subset")
    return manifest


def compute_avg_pixels(manifest: DatasetManifest) -> float:
    """Mean w*h over the training split (all entries when untagged)."""
    entries = manifest.tagged("train") or manifest.entries
    return float(np.mean([e.width * e.height for e in entries]))


@dataclass
class ImageSample:
    pixels: Tensor  # (3, H, W), values in [0, 1]
    label: int
    source_id: str


class ManifestDataset:
    """Lazy PPM-backed dataset over one split tag of a manifest."""

    def __init__(self, manifest: DatasetManifest, split: Optional[str] = None):
        self.root = manifest.root
        self.entries = manifest.tagged(split) if split else list(manifest.entries)
        if not self.entries:
            raise DataError(f"no entries for split {split!r}")

    def __len__(self) -> int:
        return len(self.entries)

    def dims(self, i: int) -> tuple[int, int]:
        e = self.entries[i]
        return e.width, e.height

    def sample(self, i: int) -> ImageSample:
        e = self.entries[i]
        return ImageSample(pixels=Tensor(load_ppm(self.root / e.path)),
                           label=e.label, source_id=e.path)


class InMemoryDataset:
    """Plain list of samples; convenient for synthetic experiments."""

    def __init__(self, samples: Sequence[ImageSample]):
        if not samples:
            raise DataError("empty dataset")
        self.samples = list(samples)

    def __len__(self) -> int:
        return len(self.samples)

    def dims(self, i: int) -> tuple[int, int]:
        _, h, w = self.samples[i].pixels.shape
        return w, h

    def sample(self, i: int) -> ImageSample:
        return self.samples[i]


# ---------------------------------------------------------------------------
# bilinear resize (baseline preprocessing only; not differentiable)


def resize_bilinear(img: Tensor | np.ndarray, out_h: int, out_w: int) -> Tensor:
    """Align-corners-false bilinear resampling of (3, H, W)."""
    if out_h < 1 or out_w < 1:
        raise DataError(f"target size must be positive, got {out_h}x{out_w}")
    arr = img.data if isinstance(img, Tensor) else np.asarray(img, dtype=np.float64)
    _, h, w = arr.shape

    def axis_coords(n_in: int, n_out: int):
        src = (np.arange(n_out) + 0.5) * (n_in / n_out) - 0.5
        src = np.clip(src, 0.0, n_in - 1.0)
        i0 = np.floor(src).astype(np.intp)
        i1 = np.minimum(i0 + 1, n_in - 1)
        return i0, i1, src - i0

    y0, y1, wy = axis_coords(h, out_h)
    x0, x1, wx = axis_coords(w, out_w)
    rows = arr[:, y0, :] * (1.0 - wy)[None, :, None] + arr[:, y1, :] * wy[None, :, None]
    out = rows[:, :, x0] * (1.0 - wx)[None, None, :] + rows[:, :, x1] * wx[None, None, :]
    return Tensor(out)


# ---------------------------------------------------------------------------
# the Square synthetic benchmark


@dataclass
class SquareConfig:
    """Generator settings for the square / non-square toy task.

    Each image is a uniform background with one filled axis-aligned
    rectangle; the label says whether that rectangle is a square.  The
    rectangle's area is sampled first and shaped afterwards, so area,
    color, position and image size are all independent of the label; the
    rectangle's aspect is likewise independent of the image's aspect, so
    resizing everything to a fixed canvas scrambles the labels.
    Non-square aspects stay outside the exclusion band (and are drawn from
    ``nonsquare_ratio_range``) to keep labels unambiguous.
    """
    count: int = 2000
    seed: int = 42
    aspect_range: tuple = (0.6, 1.67)       # image width / height
    side_range: tuple = (48, 160)           # image side lengths, px
    rect_area_range: tuple = (256, 414)     # rectangle area, px^2
    exclusion_band: tuple = (0.9, 1.111)    # non-square aspect keep-out
    nonsquare_ratio_range: tuple = (1.6, 2.0)  # long/short side of non-squares
    min_contrast: float = 0.2
    max_retries: int = 1000


def _sample_image_dims(rng: np.random.Generator, cfg: SquareConfig) -> tuple[int, int]:
    lo, hi = cfg.side_range
    a = rng.uniform(*cfg.aspect_range)
    b_lo = lo / min(a, 1.0)
    b_hi = hi / max(a, 1.0)
    b = rng.uniform(b_lo, b_hi)
    h = int(np.clip(round(b), lo, hi))
    w = int(np.clip(round(a * b), lo, hi))
    return w, h


def _sample_rect_dims(rng: np.random.Generator, cfg: SquareConfig, label: int,
                      img_w: int, img_h: int) -> tuple[int, int]:
    # Area first (label-independent), then shape: square side = sqrt(area),
    # non-square sides = sqrt(area/ratio) x sqrt(area*ratio).
    band_lo, band_hi = cfg.exclusion_band
    limit = min(img_w - 1, img_h - 1)
    for _ in range(cfg.max_retries):
        area = float(rng.uniform(*cfg.rect_area_range))
        if label == 1:
            side = int(round(np.sqrt(area)))
            if 1 <= side <= limit:
                return side, side
            continue
        ratio = float(rng.uniform(*cfg.nonsquare_ratio_range))
        short = int(round(np.sqrt(area / ratio)))
        long = int(round(np.sqrt(area * ratio)))
        w, h = (long, short) if rng.integers(0, 2) else (short, long)
        if short < 1 or long > limit or w == h:
            continue
        aspect = w / h
        if aspect < band_lo or aspect > band_hi:
            return w, h
    raise DataError("could not sample a rectangle satisfying the geometry constraints")


def _sample_colors(rng: np.random.Generator, cfg: SquareConfig) -> tuple[np.ndarray, np.ndarray]:
    bg = rng.uniform(0.0, 1.0, size=3)
    for _ in range(cfg.max_retries):
        fg = rng.uniform(0.0, 1.0, size=3)
        if np.max(np.abs(fg - bg)) >= cfg.min_contrast:
            return bg, fg
    raise DataError("could not sample a rectangle color with enough contrast")


def render_square_sample(rng: np.random.Generator, cfg: SquareConfig,
                         label: int) -> tuple[np.ndarray, dict]:
    """One (3, H, W) image plus its ground-truth geometry."""
    img_w, img_h = _sample_image_dims(rng, cfg)
    rw, rh = _sample_rect_dims(rng, cfg, label, img_w, img_h)
    bg, fg = _sample_colors(rng, cfg)
    x0 = int(rng.integers(0, img_w - rw + 1))
    y0 = int(rng.integers(0, img_h - rh + 1))
    img = np.empty((3, img_h, img_w), dtype=np.float64)
    img[:] = bg[:, None, None]
    img[:, y0:y0 + rh, x0:x0 + rw] = fg[:, None, None]
    geom = {"rect": (x0, y0, rw, rh), "bg": bg, "fg": fg, "size": (img_w, img_h)}
    return img, geom


def synth_square(cfg: SquareConfig, out_dir) -> DatasetManifest:
    """Write a balanced Square dataset (PPMs + manifest.csv) to out_dir."""
    if cfg.count % 2 != 0:
        raise DataError(f"count must be even for balanced classes, got {cfg.count}")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(cfg.seed)
    labels = np.repeat([0, 1], cfg.count // 2)
    rng.shuffle(labels)
    entries: list[ManifestEntry] = []
    for i, label in enumerate(labels):
        img, geom = render_square_sample(rng, cfg, int(label))
        name = f"{i:05d}.ppm"
        save_ppm(out_dir / name, img)
        w, h = geom["size"]
        entries.append(ManifestEntry(path=name, label=int(label), width=w, height=h))
    manifest = DatasetManifest(root=out_dir, entries=entries)
    save_manifest(manifest, out_dir / "manifest.csv")
    return manifest
