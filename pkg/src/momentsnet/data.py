"""Image I/O, rescaling, the synthetic rotated-shape corpus and stratified splits.

The synthetic corpus stands in for a real silhouette database: nine
parametric shapes rendered under rotation and small random jitter.
Accuracies measured on it say nothing about any published benchmark.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import CorruptHeaderError, DimensionOverflowError, ImageFormatError, MomentsNetError
from .pipeline import Image

__all__ = [
    "Dataset",
    "SHAPES",
    "load_image",
    "save_pgm",
    "rescale",
    "Deformation",
    "render_shape",
    "random_deformation",
    "generate_shapes",
    "split",
    "write_dataset",
    "load_dataset",
]

MAX_PIXELS = 1 << 26


@dataclass
class Dataset:
    images: list
    class_names: list
    provenance: str = ""
    counts: dict = field(init=False)

    def __post_init__(self):
        for im in self.images:
            if im.label is None or not 0 <= im.label < len(self.class_names):
                raise MomentsNetError(f"image {im.ident!r} has label {im.label} outside the class list")
        self.counts = {name: 0 for name in self.class_names}
        for im in self.images:
            self.counts[self.class_names[im.label]] += 1

    def __len__(self):
        return len(self.images)

    @property
    def labels(self):
        return np.array([im.label for im in self.images], dtype=int)

    @property
    def grids(self):
        return np.stack([im.grid for im in self.images])


# -- loading -------------------------------------------------------------------

def _pgm_tokens(data, count):
    """Read ``count`` whitespace-separated header tokens, skipping # comments."""
    tokens, pos = [], 2
    while len(tokens) < count:
        while pos < len(data) and (chr(data[pos]).isspace() or data[pos] == ord("#")):
            if data[pos] == ord("#"):
                while pos < len(data) and data[pos] not in b"\r\n":
                    pos += 1
            else:
                pos += 1
        start = pos
        while pos < len(data) and not chr(data[pos]).isspace() and data[pos] != ord("#"):
            pos += 1
        if start == pos:
            raise CorruptHeaderError("PGM header ended early")
        tokens.append(data[start:pos])
    return tokens, pos


def _read_pgm(data, path):
    tokens, pos = _pgm_tokens(data, 3)
    try:
        width, height, maxval = (int(t) for t in tokens)
    except ValueError:
        raise CorruptHeaderError(f"{path}: non-numeric PGM header field") from None
    if width <= 0 or height <= 0 or not 0 < maxval < 65536:
        raise CorruptHeaderError(f"{path}: bad PGM header {width}x{height}, maxval {maxval}")
    if width * height > MAX_PIXELS:
        raise DimensionOverflowError(f"{path}: {width}x{height} exceeds {MAX_PIXELS} pixels")
    if data[:2] == b"P5":
        pos += 1  # single whitespace byte before the raster
        dtype = np.dtype(">u2") if maxval > 255 else np.dtype("u1")
        need = width * height * dtype.itemsize
        raster = data[pos : pos + need]
        if len(raster) < need:
            raise CorruptHeaderError(f"{path}: raster truncated ({len(raster)} of {need} bytes)")
        values = np.frombuffer(raster, dtype=dtype).astype(float)
    else:
        words = data[pos:].split()
        if len(words) < width * height:
            raise CorruptHeaderError(f"{path}: raster truncated ({len(words)} of {width * height} values)")
        try:
            values = np.array([int(w) for w in words[: width * height]], dtype=float)
        except ValueError:
            raise CorruptHeaderError(f"{path}: non-numeric value in P2 raster") from None
    return values.reshape(height, width) / maxval


def _read_png(path):
    from PIL import Image as PILImage

    try:
        with PILImage.open(path) as im:
            im.load()
            if im.mode not in ("1", "L", "I;16", "I"):
                raise ImageFormatError(f"{path}: PNG mode {im.mode} is not single-channel")
            if im.width * im.height > MAX_PIXELS:
                raise DimensionOverflowError(f"{path}: {im.width}x{im.height} exceeds {MAX_PIXELS} pixels")
            arr = np.asarray(im, dtype=float)
            scale = 1.0 if im.mode == "1" else (255.0 if im.mode == "L" else 65535.0)
    except (OSError, SyntaxError) as exc:
        raise CorruptHeaderError(f"{path}: unreadable PNG ({exc})") from None
    return arr / scale


def load_image(path, label=None):
    """Read a P2/P5 PGM or a single-channel PNG into an ``Image`` in [0, 1]."""
    path = Path(path)
    data = path.read_bytes()
    if data[:2] in (b"P2", b"P5"):
        grid = _read_pgm(data, path)
    elif data[:8] == b"\x89PNG\r\n\x1a\n":
        grid = _read_png(path)
    elif len(data) < 2:
        raise CorruptHeaderError(f"{path}: file too short to carry a header")
    else:
        raise ImageFormatError(f"{path}: unsupported image format (magic {data[:2]!r})")
    return Image(grid, label=label, ident=str(path))


def save_pgm(path, grid):
    grid = np.clip(np.asarray(grid, dtype=float), 0.0, 1.0)
    h, w = grid.shape
    raster = np.round(grid * 255).astype(np.uint8)
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        fh.write(raster.tobytes())


# -- rescaling -----------------------------------------------------------------

def _axis_weights(src, dst):
    pos = (np.arange(dst) + 0.5) * (src / dst) - 0.5
    pos = np.clip(pos, 0, src - 1)
    lo = np.floor(pos).astype(int)
    hi = np.minimum(lo + 1, src - 1)
    return lo, hi, pos - lo


def rescale(image, target):
    """Bilinear resize with pixel-center alignment; output clamped to [0, 1]."""
    grid = image.grid if isinstance(image, Image) else np.asarray(image, dtype=float)
    M, N = (int(v) for v in target)
    if M <= 0 or N <= 0:
        raise ValueError(f"target size must be positive, got {target}")
    if grid.shape == (M, N):
        out = grid.copy()
    else:
        r0, r1, rw = _axis_weights(grid.shape[0], M)
        c0, c1, cw = _axis_weights(grid.shape[1], N)
        rows = grid[r0] * (1 - rw)[:, None] + grid[r1] * rw[:, None]
        out = rows[:, c0] * (1 - cw) + rows[:, c1] * cw
    out = np.clip(out, 0.0, 1.0)
    if isinstance(image, Image):
        return Image(out, label=image.label, ident=image.ident)
    return Image(out)


# -- synthetic shapes ----------------------------------------------------------
# Membership tests on normalized coordinates (x right, y up), shapes fit in
# roughly the disk of radius 0.8.

def _star(x, y):
    r, th = np.hypot(x, y), np.arctan2(y, x)
    return r <= 0.35 + 0.4 * (0.5 + 0.5 * np.cos(5 * th)) ** 3


def _cross(x, y):
    return ((np.abs(x) <= 0.16) & (y >= -0.75) & (y <= 0.55)) | ((np.abs(y - 0.2) <= 0.14) & (np.abs(x) <= 0.5))


def _keyhole(x, y):
    return (np.hypot(x, y - 0.25) <= 0.38) | ((y <= 0.1) & (y >= -0.7) & (np.abs(x) <= 0.12 + 0.25 * (0.1 - y)))


def _crescent(x, y):
    return (np.hypot(x, y) <= 0.7) & (np.hypot(x - 0.35, y + 0.1) > 0.55)


def _lshape(x, y):
    return ((x >= -0.55) & (x <= -0.2) & (y >= -0.6) & (y <= 0.7)) | ((x >= -0.55) & (x <= 0.6) & (y >= -0.6) & (y <= -0.28))


def _arrow(x, y):
    shaft = (np.abs(y) <= 0.12) & (x >= -0.7) & (x <= 0.15)
    head = (x >= 0.1) & (x <= 0.7) & (np.abs(y) <= 0.5 * (0.7 - x) / 0.6 + 1e-9)
    return shaft | head


def _heart(x, y):
    xs, ys = x / 0.58, y / 0.58 + 0.12
    return (xs**2 + ys**2 - 1) ** 3 - xs**2 * ys**3 <= 0


def _hammer(x, y):
    handle = (np.abs(x + 0.05) <= 0.1) & (y >= -0.75) & (y <= 0.35)
    head = (x >= -0.55) & (x <= 0.45) & (y >= 0.3) & (y <= 0.62)
    return handle | (head & ~((x > 0.25) & (y > 0.46)))


def _fork(x, y):
    handle = (np.abs(x) <= 0.09) & (y >= -0.8) & (y <= 0.0)
    base = (np.abs(x) <= 0.45) & (y >= -0.05) & (y <= 0.12)
    prongs = (y >= 0.0) & (y <= 0.75) & ((np.abs(x + 0.37) <= 0.08) | (np.abs(x) <= 0.08) | (np.abs(x - 0.37) <= 0.08))
    return handle | base | prongs


SHAPES = {
    "star": _star,
    "cross": _cross,
    "keyhole": _keyhole,
    "crescent": _crescent,
    "lshape": _lshape,
    "arrow": _arrow,
    "heart": _heart,
    "hammer": _hammer,
    "fork": _fork,
}


@dataclass(frozen=True)
class Deformation:
    """Per-instance shape variation applied in the shape's own frame.

    ``aspect`` stretches x and squeezes y, ``shear`` skews x by y, and
    ``warp`` holds (k, amplitude, phase) terms of a smooth radial
    displacement r -> r (1 + sum a cos(k theta + phase)).
    """

    aspect: float = 1.0
    shear: float = 0.0
    warp: tuple = ()

    def apply(self, x, y):
        x, y = x / self.aspect, y * self.aspect
        x = x - self.shear * y
        if self.warp:
            th = np.arctan2(y, x)
            factor = 1.0 + sum(a * np.cos(k * th + ph) for k, a, ph in self.warp)
            x, y = x / factor, y / factor
        return x, y


def render_shape(name, angle=0.0, size=32, scale=1.0, shift=(0.0, 0.0), hires=128, deformation=None):
    """Rasterize a prototype rotated by ``angle`` degrees (counter-clockwise).

    The shape is sampled on a ``hires`` grid, area-averaged down to ``size``
    and binarized at 0.5. ``shift`` is in output pixels (dx right, dy up).
    """
    if hires % size:
        raise ValueError(f"hires={hires} must be a multiple of size={size}")
    centers = (2 * np.arange(hires) + 1 - hires) / hires
    x, y = np.meshgrid(centers, -centers)
    x = x - 2 * shift[0] / size
    y = y - 2 * shift[1] / size
    a = math.radians(angle)
    xr = (math.cos(a) * x + math.sin(a) * y) / scale
    yr = (-math.sin(a) * x + math.cos(a) * y) / scale
    if deformation is not None:
        xr, yr = deformation.apply(xr, yr)
    fine = SHAPES[name](xr, yr).astype(float)
    f = hires // size
    coarse = fine.reshape(size, f, size, f).mean(axis=(1, 3))
    return (coarse >= 0.5).astype(float)


def random_deformation(rng, strength=1.0):
    """Draw one instance deformation; ``strength`` 0 gives the identity."""
    aspect = math.exp(rng.uniform(-0.14, 0.14) * strength)
    shear = rng.uniform(-0.15, 0.15) * strength
    warp = tuple((k, rng.uniform(-0.05, 0.05) * strength, rng.uniform(0, 2 * math.pi)) for k in (2, 3, 4))
    return Deformation(aspect, shear, warp)


def generate_shapes(num_classes=9, rotations_per_class=12, size=32, seed=0, replicas=12,
                    max_shift=2.0, scale_range=(0.9, 1.1), deform=0.0):
    """Deterministic rotated-silhouette dataset.

    Each class holds ``rotations_per_class * replicas`` images. A class has
    ``replicas`` instances of its prototype, each with its own seeded
    deformation (scaled by ``deform``; 0 disables it), and every instance is
    rendered at each evenly spaced rotation with a fresh small translation
    and scaling.
    """
    if not 2 <= num_classes <= len(SHAPES):
        raise ValueError(f"num_classes must lie in [2, {len(SHAPES)}], got {num_classes}")
    if rotations_per_class < 1 or 360 % rotations_per_class:
        raise ValueError(f"rotations_per_class must divide 360, got {rotations_per_class}")
    if replicas < 1 or size < 4:
        raise ValueError("replicas must be >= 1 and size >= 4")
    rng = np.random.default_rng(seed)
    names = list(SHAPES)[:num_classes]
    step = 360 // rotations_per_class
    images = []
    for label, name in enumerate(names):
        instances = [random_deformation(rng, deform) if deform else None for _ in range(replicas)]
        index = 0
        for r in range(rotations_per_class):
            for instance in instances:
                scale = rng.uniform(*scale_range)
                shift = tuple(rng.uniform(-max_shift, max_shift, size=2))
                grid = render_shape(name, r * step, size, scale, shift, hires=4 * size, deformation=instance)
                images.append(Image(grid, label=label, ident=f"{name}/{index:04d}"))
                index += 1
    provenance = (
        f"synthetic shapes: classes={num_classes} rotations={rotations_per_class} "
        f"replicas={replicas} size={size} deform={deform} seed={seed}"
    )
    return Dataset(images, names, provenance)


def split(dataset, train_fraction=0.5, seed=0):
    """Stratified seeded split into disjoint (train, test) datasets."""
    if not 0.0 < train_fraction < 1.0:
        raise ValueError(f"train_fraction must lie in (0, 1), got {train_fraction}")
    rng = np.random.default_rng(seed)
    labels = dataset.labels
    train_idx, test_idx = [], []
    for label, name in enumerate(dataset.class_names):
        members = np.flatnonzero(labels == label)
        if len(members) < 2:
            raise MomentsNetError(f"class {name!r} has {len(members)} image(s); need at least 2 to split")
        members = members[rng.permutation(len(members))]
        n_train = int(math.floor(train_fraction * len(members) + 0.5))
        n_train = min(max(n_train, 1), len(members) - 1)
        train_idx.extend(members[:n_train])
        test_idx.extend(members[n_train:])
    pick = lambda idx: [dataset.images[i] for i in sorted(idx)]  # noqa: E731
    note = f"{dataset.provenance}; split fraction={train_fraction} seed={seed}"
    return (
        Dataset(pick(train_idx), list(dataset.class_names), note + " [train]"),
        Dataset(pick(test_idx), list(dataset.class_names), note + " [test]"),
    )


def write_dataset(dataset, root):
    """Write ``root/<class>/<index>.pgm`` plus ``manifest.csv``; returns the manifest path."""
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    counters = {}
    rows = []
    for im in dataset.images:
        name = dataset.class_names[im.label]
        idx = counters.get(name, 0)
        counters[name] = idx + 1
        rel = Path(name) / f"{idx:04d}.pgm"
        (root / name).mkdir(exist_ok=True)
        save_pgm(root / rel, im.grid)
        rows.append((rel.as_posix(), im.label, name))
    manifest = root / "manifest.csv"
    with open(manifest, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["path", "label", "class_name"])
        writer.writerows(rows)
    return manifest


def load_dataset(root, size=(32, 32)):
    """Read a directory written by ``write_dataset`` (or laid out the same way)."""
    root = Path(root)
    manifest = root / "manifest.csv"
    with open(manifest, newline="") as fh:
        rows = list(csv.DictReader(fh))
    names = {}
    for row in rows:
        names.setdefault(int(row["label"]), row["class_name"])
    class_names = [names[i] for i in sorted(names)]
    if sorted(names) != list(range(len(names))):
        raise MomentsNetError(f"{manifest}: labels must be 0..{len(names) - 1}")
    images = []
    for row in rows:
        im = load_image(root / row["path"], label=int(row["label"]))
        im = rescale(im, size)
        im.ident = row["path"]
        images.append(im)
    return Dataset(images, class_names, f"directory {root}")
