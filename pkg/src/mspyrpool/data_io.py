"""Dataset ingestion and preprocessing.

Supported on-disk formats:

* IDX (big-endian, magic ``0x00000803`` for ubyte images and ``0x00000801``
  for ubyte labels), optionally gzip-compressed;
* binary PGM (``P5``, 8-bit);
* raw tensors (``.tensor``): little-endian int64 ``rows, cols, maps``
  followed by float64 values in map-major order.

Image directories hold one subdirectory per class. Class indices follow the
lexicographic order of the subdirectory names unless a manifest overrides
them.
"""
import gzip
import os
import struct
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.ndimage import map_coordinates

from .errors import DomainError, FormatError, ShapeError
from .tensor import DTYPE, as_tensor, check_shape, from_planes, normalize_zmuv, to_planes

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801
TENSOR_EXT = ".tensor"
PGM_EXT = ".pgm"
MANIFEST_NAME = "manifest.txt"


@dataclass(frozen=True)
class PreprocessPolicy:
    normalize: bool = False
    min_size: int = None
    max_edge: int = None


@dataclass
class Sample:
    image: np.ndarray  # [H, W, 1]
    label: int
    source: str = ""


@dataclass
class Dataset:
    samples: list
    class_names: list
    policy: PreprocessPolicy = field(default_factory=PreprocessPolicy)

    @property
    def n_classes(self):
        return len(self.class_names)

    def __len__(self):
        return len(self.samples)

    def __iter__(self):
        return iter(self.samples)

    def __getitem__(self, i):
        return self.samples[i]

    @property
    def labels(self):
        return np.array([s.label for s in self.samples], dtype=np.intp)


# -- IDX --------------------------------------------------------------------

def _read_bytes(path):
    opener = gzip.open if str(path).endswith(".gz") else open
    with opener(path, "rb") as f:
        return f.read()


def _parse_idx(raw, magic, path):
    if len(raw) < 8:
        raise FormatError(f"{path}: header truncated", offset=len(raw))
    found = struct.unpack_from(">I", raw)[0]
    if found != magic:
        raise FormatError(f"{path}: bad magic 0x{found:08x}, expected 0x{magic:08x}", offset=0)
    ndim = magic & 0xFF
    header = 4 + 4 * ndim
    if len(raw) < header:
        raise FormatError(f"{path}: dimension header truncated", offset=len(raw))
    dims = struct.unpack_from(f">{ndim}I", raw, 4)
    need = header + int(np.prod(dims))
    if len(raw) < need:
        raise FormatError(f"{path}: expected {need} bytes, file ends early", offset=len(raw))
    if len(raw) > need:
        raise FormatError(f"{path}: {len(raw) - need} trailing bytes", offset=need)
    return np.frombuffer(raw, dtype=np.uint8, offset=header).reshape(dims)


def load_idx(images_path, labels_path, n_classes=10):
    """Load an IDX image/label pair; pixel bytes are scaled to [0, 1]."""
    images = _parse_idx(_read_bytes(images_path), IDX_IMAGES_MAGIC, images_path)
    labels = _parse_idx(_read_bytes(labels_path), IDX_LABELS_MAGIC, labels_path)
    if len(images) != len(labels):
        raise FormatError(
            f"{images_path} holds {len(images)} images but {labels_path} holds {len(labels)} labels",
            offset=4,
        )
    if len(labels) and labels.max() >= n_classes:
        bad = int(np.argmax(labels >= n_classes))
        raise FormatError(f"{labels_path}: label {labels[bad]} out of range", offset=8 + bad)
    base = os.path.basename(str(images_path))
    samples = [
        Sample(img.astype(DTYPE)[:, :, None] / 255.0, int(lab), f"{base}[{i}]")
        for i, (img, lab) in enumerate(zip(images, labels))
    ]
    return Dataset(samples, [str(k) for k in range(n_classes)])


def write_idx(images_path, labels_path, images, labels):
    """Write uint8 ``images [n, rows, cols]`` and ``labels [n]`` as IDX."""
    images = np.asarray(images, dtype=np.uint8)
    labels = np.asarray(labels, dtype=np.uint8)
    opener = lambda p: gzip.GzipFile(p, "wb", mtime=0) if str(p).endswith(".gz") else open(p, "wb")
    with opener(images_path) as f:
        f.write(struct.pack(">IIII", IDX_IMAGES_MAGIC, *images.shape))
        f.write(images.tobytes())
    with opener(labels_path) as f:
        f.write(struct.pack(">II", IDX_LABELS_MAGIC, len(labels)))
        f.write(labels.tobytes())


# -- single-image formats ---------------------------------------------------

def _pgm_tokens(raw, path):
    """Yield ``(token, end_offset)`` for the four P5 header fields."""
    pos, tokens = 0, []
    while len(tokens) < 4:
        while pos < len(raw) and raw[pos : pos + 1].isspace():
            pos += 1
        if raw[pos : pos + 1] == b"#":
            while pos < len(raw) and raw[pos : pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < len(raw) and not raw[pos : pos + 1].isspace() and raw[pos : pos + 1] != b"#":
            pos += 1
        if start == pos:
            raise FormatError(f"{path}: PGM header truncated", offset=pos)
        tokens.append(raw[start:pos])
    return tokens, pos + 1  # exactly one whitespace byte follows maxval


def read_pgm(path):
    raw = _read_bytes(path)
    if raw[:2] != b"P5":
        raise FormatError(f"{path}: not a binary P5 PGM", offset=0)
    tokens, offset = _pgm_tokens(raw, path)
    try:
        width, height, maxval = (int(t) for t in tokens[1:])
    except ValueError:
        raise FormatError(f"{path}: malformed PGM header", offset=0) from None
    if not 0 < maxval < 256:
        raise FormatError(f"{path}: only 8-bit PGM is supported (maxval {maxval})", offset=0)
    need = offset + width * height
    if len(raw) < need:
        raise FormatError(f"{path}: pixel data truncated", offset=len(raw))
    pixels = np.frombuffer(raw, dtype=np.uint8, count=width * height, offset=offset)
    return pixels.reshape(height, width, 1).astype(DTYPE) / maxval


def write_pgm(path, image):
    """Write an image with values in [0, 1] as an 8-bit P5 PGM."""
    img = np.asarray(image)
    if img.ndim == 3:
        img = img[:, :, 0]
    data = np.clip(np.rint(img * 255.0), 0, 255).astype(np.uint8)
    with open(path, "wb") as f:
        f.write(b"P5\n%d %d\n255\n" % (data.shape[1], data.shape[0]))
        f.write(data.tobytes())


def write_tensor(path, t):
    t = np.asarray(t, dtype=DTYPE)
    if t.ndim != 3:
        raise ShapeError(f"raw tensor files hold 3-D tensors, got shape {t.shape}")
    with open(path, "wb") as f:
        f.write(struct.pack("<qqq", *t.shape))
        f.write(to_planes(t).astype("<f8").tobytes())


def read_tensor(path):
    raw = _read_bytes(path)
    if len(raw) < 24:
        raise FormatError(f"{path}: tensor header truncated", offset=len(raw))
    dims = struct.unpack_from("<qqq", raw)
    try:
        shape = check_shape(dims)
    except ShapeError as exc:
        raise FormatError(f"{path}: {exc}", offset=0) from None
    need = 24 + 8 * shape.size
    if len(raw) != need:
        raise FormatError(f"{path}: expected {need} bytes, found {len(raw)}", offset=min(need, len(raw)))
    return from_planes(np.frombuffer(raw, dtype="<f8", offset=24), shape)


def read_image(path):
    ext = os.path.splitext(str(path))[1].lower()
    if ext == PGM_EXT:
        return read_pgm(path)
    if ext == TENSOR_EXT:
        img = read_tensor(path)
        if img.shape[2] != 1:
            raise FormatError(f"{path}: expected a single-map image, found {img.shape[2]} maps")
        return img
    raise FormatError(f"{path}: unsupported format {ext!r}")


# -- image directories ------------------------------------------------------

def read_manifest(path):
    """Parse ``class_name index`` lines into a dict."""
    mapping = {}
    with open(path) as f:
        for lineno, line in enumerate(f, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            if len(parts) != 2 or not parts[1].lstrip("-").isdigit():
                raise FormatError(f"{path}:{lineno}: expected 'class_name index', got {line!r}")
            mapping[parts[0]] = int(parts[1])
    indices = sorted(mapping.values())
    if indices != list(range(len(indices))):
        raise FormatError(f"{path}: class indices must be exactly 0..{len(indices) - 1}")
    return mapping


def load_image_dir(root, manifest=None):
    """Load a ``root/<class>/<image>`` tree into a Dataset.

    Every problem (empty class directory, unreadable or unsupported file) is
    collected and reported in one FormatError.
    """
    classes = sorted(
        d for d in os.listdir(root) if os.path.isdir(os.path.join(root, d))
    )
    if not classes:
        raise FormatError(f"{root}: no class subdirectories")
    if manifest is None and os.path.exists(os.path.join(root, MANIFEST_NAME)):
        manifest = os.path.join(root, MANIFEST_NAME)
    if manifest is not None:
        mapping = read_manifest(manifest)
        missing = sorted(set(classes) ^ set(mapping))
        if missing:
            raise FormatError(f"{manifest}: manifest and directories disagree on {missing}")
        classes = sorted(classes, key=mapping.__getitem__)

    problems, samples = [], []
    for label, name in enumerate(classes):
        files = sorted(os.listdir(os.path.join(root, name)))
        if not files:
            problems.append(f"{name}/: empty class directory")
        for fname in files:
            path = os.path.join(root, name, fname)
            try:
                samples.append(Sample(read_image(path), label, f"{name}/{fname}"))
            except (OSError, FormatError, ShapeError) as exc:
                problems.append(f"{name}/{fname}: {exc}")
    if problems:
        raise FormatError(f"{root}: {len(problems)} problem(s):\n  " + "\n  ".join(problems))
    return Dataset(samples, classes)


def load_dataset(path, labels_path=None):
    """Dispatch on the path: a directory is an image tree, else an IDX pair."""
    if os.path.isdir(path):
        return load_image_dir(path)
    if labels_path is None:
        raise DomainError(f"{path}: IDX images need a matching labels file")
    return load_idx(path, labels_path)


def subset(dataset, n, seed):
    """A seeded random subset of ``n`` samples, kept in original order."""
    if n is None or n >= len(dataset):
        return dataset
    rng = np.random.default_rng(seed)
    keep = np.sort(rng.choice(len(dataset), size=n, replace=False))
    return replace(dataset, samples=[dataset.samples[i] for i in keep])


# -- preprocessing ----------------------------------------------------------

def resize_bilinear(img, rows, cols):
    """Bilinear resampling of every map to ``rows x cols`` (pixel-center aligned)."""
    H, W, K = img.shape
    r = (np.arange(rows) + 0.5) * (H / rows) - 0.5
    c = (np.arange(cols) + 0.5) * (W / cols) - 0.5
    rr, cc = np.meshgrid(np.clip(r, 0, H - 1), np.clip(c, 0, W - 1), indexing="ij")
    out = np.empty((rows, cols, K), dtype=DTYPE)
    for k in range(K):
        out[:, :, k] = map_coordinates(img[:, :, k], [rr, cc], order=1, mode="nearest")
    return out


def pad_center(img, min_size):
    """Zero-pad so both extents reach ``min_size``, keeping the image centered."""
    H, W, _ = img.shape
    dr, dc = max(0, min_size - H), max(0, min_size - W)
    if not (dr or dc):
        return img
    return np.pad(img, ((dr // 2, dr - dr // 2), (dc // 2, dc - dc // 2), (0, 0)))


def preprocess(sample, policy):
    """Apply, in order: longest-edge clamp, centered padding, normalization."""
    img = as_tensor(sample.image)
    H, W, _ = img.shape
    if policy.max_edge and max(H, W) > policy.max_edge:
        scale = policy.max_edge / max(H, W)
        rows = policy.max_edge if H >= W else max(1, round(H * scale))
        cols = policy.max_edge if W > H else max(1, round(W * scale))
        img = resize_bilinear(img, rows, cols)
    if policy.min_size and min(img.shape[:2]) < policy.min_size:
        if policy.normalize and img.size > 1:
            # Standardizing first makes the zero fill equal to the content mean,
            # so the final normalization only rescales and the fill stays 0.
            img = normalize_zmuv(img)
        img = pad_center(img, policy.min_size)
    if policy.normalize:
        img = normalize_zmuv(img)
    return replace(sample, image=img)


def apply_policy(dataset, policy):
    return Dataset([preprocess(s, policy) for s in dataset.samples], dataset.class_names, policy)
