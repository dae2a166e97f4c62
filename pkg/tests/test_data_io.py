import gzip
import os
import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mspyrpool.data_io import (
    Dataset,
    PreprocessPolicy,
    Sample,
    apply_policy,
    load_dataset,
    load_idx,
    load_image_dir,
    pad_center,
    preprocess,
    read_image,
    read_pgm,
    read_tensor,
    resize_bilinear,
    subset,
    write_idx,
    write_pgm,
    write_tensor,
)
from mspyrpool.errors import DomainError, FormatError, ShapeError

ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))


def idx_pair(tmp_path, n=5, rows=4, cols=3, gz=False, seed=0):
    rng = np.random.default_rng(seed)
    images = rng.integers(0, 256, size=(n, rows, cols), dtype=np.uint8)
    labels = rng.integers(0, 10, size=n, dtype=np.uint8)
    ext = ".gz" if gz else ""
    ip, lp = tmp_path / f"img{ext}", tmp_path / f"lab{ext}"
    write_idx(ip, lp, images, labels)
    return ip, lp, images, labels


# -- IDX --------------------------------------------------------------------

@pytest.mark.parametrize("gz", [False, True])
def test_idx_round_trip(tmp_path, gz):
    ip, lp, images, labels = idx_pair(tmp_path, gz=gz)
    ds = load_idx(ip, lp)
    assert len(ds) == 5 and ds.n_classes == 10
    back = np.rint(np.stack([s.image[:, :, 0] for s in ds]) * 255).astype(np.uint8)
    assert np.array_equal(back, images)
    assert ds.labels.tolist() == labels.tolist()
    write_idx(tmp_path / "i2", tmp_path / "l2", back, ds.labels)
    suffix = ".gz" if gz else ""
    raw = lambda p: gzip.decompress(p.read_bytes()) if gz else p.read_bytes()
    assert raw(tmp_path / f"img{suffix}") == (tmp_path / "i2").read_bytes()


def test_idx_scaling(tmp_path):
    write_idx(tmp_path / "i", tmp_path / "l", np.array([[[0, 255]]], dtype=np.uint8), [3])
    ds = load_idx(tmp_path / "i", tmp_path / "l")
    assert ds[0].image.ravel().tolist() == [0.0, 1.0] and ds[0].label == 3


def test_idx_header_layout(tmp_path):
    ip, lp, _, _ = idx_pair(tmp_path, n=2, rows=28, cols=28)
    assert struct.unpack(">IIII", ip.read_bytes()[:16]) == (0x803, 2, 28, 28)
    assert struct.unpack(">II", lp.read_bytes()[:8]) == (0x801, 2)


def test_idx_errors(tmp_path):
    ip, lp, _, _ = idx_pair(tmp_path)
    raw = ip.read_bytes()
    (tmp_path / "bad").write_bytes(b"\x00\x00\x08\x04" + raw[4:])
    with pytest.raises(FormatError) as info:
        load_idx(tmp_path / "bad", lp)
    assert info.value.offset == 0
    (tmp_path / "short").write_bytes(raw[:-7])
    with pytest.raises(FormatError) as info:
        load_idx(tmp_path / "short", lp)
    assert info.value.offset == len(raw) - 7
    write_idx(tmp_path / "i4", tmp_path / "l4", np.zeros((4, 4, 3), np.uint8), [0, 1, 2, 3])
    with pytest.raises(FormatError, match="4 labels"):
        load_idx(ip, tmp_path / "l4")
    with pytest.raises(DomainError):
        load_dataset(str(ip))


def test_bundled_mnist_subset_loads():
    d = os.path.join(ROOT, "data", "mnist10k")
    ds = load_idx(os.path.join(d, "test-images-idx3-ubyte.gz"), os.path.join(d, "test-labels-idx1-ubyte.gz"))
    assert len(ds) == 1000 and ds[0].image.shape == (28, 28, 1)
    assert set(ds.labels.tolist()) == set(range(10))


# -- single images ----------------------------------------------------------

def test_pgm_pixel_scaling(tmp_path):
    p = tmp_path / "a.pgm"
    p.write_bytes(b"P5\n# made by hand\n2 1\n255\n" + bytes([128, 255]))
    img = read_pgm(p)
    assert img.shape == (1, 2, 1)
    assert img[0, 0, 0] == 128 / 255 and img[0, 1, 0] == 1.0


def test_pgm_round_trip_and_errors(tmp_path, rng):
    img = rng.integers(0, 256, size=(5, 7)) / 255.0
    write_pgm(tmp_path / "x.pgm", img)
    assert np.array_equal(read_pgm(tmp_path / "x.pgm")[:, :, 0], img)
    (tmp_path / "p2.pgm").write_bytes(b"P2\n1 1\n255\n0\n")
    with pytest.raises(FormatError):
        read_pgm(tmp_path / "p2.pgm")
    (tmp_path / "t.pgm").write_bytes(b"P5\n4 4\n255\n" + bytes(3))
    with pytest.raises(FormatError):
        read_pgm(tmp_path / "t.pgm")
    (tmp_path / "w.pgm").write_bytes(b"P5\n1 1\n65535\n\0\0")
    with pytest.raises(FormatError, match="8-bit"):
        read_pgm(tmp_path / "w.pgm")


def test_tensor_format(tmp_path, rng):
    t = rng.normal(size=(3, 4, 2))
    p = tmp_path / "t.tensor"
    write_tensor(p, t)
    raw = p.read_bytes()
    assert struct.unpack("<qqq", raw[:24]) == (3, 4, 2)
    assert np.frombuffer(raw[24:32], "<f8")[0] == t[0, 0, 0]
    assert np.frombuffer(raw[24 + 8 * 12 : 24 + 8 * 13], "<f8")[0] == t[0, 0, 1]  # map-major
    assert np.array_equal(read_tensor(p), t)
    p.write_bytes(raw[:-1])
    with pytest.raises(FormatError):
        read_tensor(p)
    with pytest.raises(ShapeError):
        write_tensor(p, np.zeros((2, 2)))


def test_read_image_dispatch(tmp_path):
    write_tensor(tmp_path / "rgb.tensor", np.zeros((2, 2, 3)))
    with pytest.raises(FormatError, match="single-map"):
        read_image(tmp_path / "rgb.tensor")
    (tmp_path / "a.png").write_bytes(b"")
    with pytest.raises(FormatError, match="unsupported"):
        read_image(tmp_path / "a.png")


# -- image directories ------------------------------------------------------

def make_tree(root, spec):
    for cls, sizes in spec.items():
        os.makedirs(root / cls, exist_ok=True)
        for i, (h, w) in enumerate(sizes):
            img = np.full((h, w), (i + 1) / 10)
            if i % 2:
                write_tensor(root / cls / f"{i}.tensor", img[:, :, None])
            else:
                write_pgm(root / cls / f"{i}.pgm", img)


def test_image_dir_labels_and_sizes(tmp_path):
    make_tree(tmp_path, {"b": [(64, 64)], "a": [(64, 64), (300, 200)]})
    ds = load_image_dir(tmp_path)
    assert ds.class_names == ["a", "b"]
    assert [(s.source, s.label, s.image.shape[:2]) for s in ds] == [
        ("a/0.pgm", 0, (64, 64)), ("a/1.tensor", 0, (300, 200)), ("b/0.pgm", 1, (64, 64)),
    ]
    assert load_dataset(str(tmp_path)).labels.tolist() == ds.labels.tolist()


def test_image_dir_manifest(tmp_path):
    make_tree(tmp_path, {"a": [(3, 3)], "b": [(3, 3)]})
    (tmp_path / "manifest.txt").write_text("a 1\nb 0\n")
    ds = load_image_dir(tmp_path)
    assert ds.class_names == ["b", "a"]
    assert {s.source: s.label for s in ds} == {"a/0.pgm": 1, "b/0.pgm": 0}
    (tmp_path / "manifest.txt").write_text("a 1\nb 2\n")
    with pytest.raises(FormatError):
        load_image_dir(tmp_path)


def test_image_dir_reports_every_problem(tmp_path):
    make_tree(tmp_path, {"a": [(3, 3)], "b": []})
    os.makedirs(tmp_path / "c")
    (tmp_path / "a" / "notes.txt").write_text("hi")
    (tmp_path / "c" / "x.pgm").write_bytes(b"junk")
    with pytest.raises(FormatError) as info:
        load_image_dir(tmp_path)
    msg = str(info.value)
    assert "3 problem(s)" in msg
    for needle in ("b/: empty", "a/notes.txt", "c/x.pgm"):
        assert needle in msg


def test_subset_is_seeded_and_ordered(tmp_path):
    ip, lp, _, _ = idx_pair(tmp_path, n=20)
    ds = load_idx(ip, lp)
    a, b = subset(ds, 7, 1), subset(ds, 7, 1)
    assert [s.source for s in a] == [s.source for s in b]
    idx = [int(s.source.split("[")[1][:-1]) for s in a]
    assert idx == sorted(idx) and len(set(idx)) == 7
    assert subset(ds, None, 0) is ds


# -- preprocessing ----------------------------------------------------------

def test_pad_to_min_size_centered(rng):
    img = rng.uniform(0.1, 1.0, size=(20, 80, 1))
    out = preprocess(Sample(img, 0), PreprocessPolicy(min_size=100)).image
    assert out.shape == (100, 100, 1)
    assert np.array_equal(out[40:60, 10:90], img)
    mask = np.ones(out.shape, bool)
    mask[40:60, 10:90] = False
    assert not out[mask].any()


def test_pad_then_normalize_keeps_fill_at_zero(rng):
    img = rng.uniform(0.1, 1.0, size=(20, 80, 1))
    out = preprocess(Sample(img, 0), PreprocessPolicy(normalize=True, min_size=100)).image
    assert out.shape == (100, 100, 1)
    assert abs(out.mean()) < 1e-12 and abs(out.std() - 1) < 1e-12
    # the fill is the content mean up to roundoff of the final normalization
    assert np.abs(out[:40]).max() < 1e-12 and np.abs(out[:, :10]).max() < 1e-12


def test_clamp_longest_edge():
    img = np.random.default_rng(0).uniform(size=(2000, 400, 1))
    out = preprocess(Sample(img, 0), PreprocessPolicy(max_edge=500)).image
    assert out.shape == (500, 100, 1)


def test_policy_off_is_identity(rng):
    img = rng.normal(size=(13, 9, 1))
    assert np.array_equal(preprocess(Sample(img, 0), PreprocessPolicy()).image, img)


def test_resize_constant_and_identity(rng):
    assert np.allclose(resize_bilinear(np.full((40, 10, 1), 0.3), 20, 5), 0.3)
    img = rng.normal(size=(6, 5, 2))
    assert np.allclose(resize_bilinear(img, 6, 5), img)


def test_pad_center_noop(rng):
    img = rng.normal(size=(5, 5, 1))
    assert pad_center(img, 5) is img


def test_apply_policy_records_policy(rng):
    ds = Dataset([Sample(rng.normal(size=(4, 4, 1)), 0)], ["x"])
    pol = PreprocessPolicy(normalize=True)
    out = apply_policy(ds, pol)
    assert out.policy == pol and abs(out[0].image.std() - 1) < 1e-12


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 700), st.integers(1, 700), st.booleans())
def test_preprocess_meets_constraints(h, w, normalize):
    img = np.random.default_rng(h * 1000 + w).uniform(size=(h, w, 1))
    pol = PreprocessPolicy(normalize=normalize, min_size=100, max_edge=500)
    out = preprocess(Sample(img, 0), pol).image
    assert min(out.shape[:2]) >= 100 and max(out.shape[:2]) <= 500
    if max(h, w) > 500:
        # aspect ratio of the resized content is kept within rounding
        long_, short = max(h, w), min(h, w)
        expect = short * 500 / long_
        got = min(resize_shape(h, w))
        assert abs(got - expect) <= 1


def resize_shape(h, w):
    img = np.zeros((h, w, 1))
    return preprocess(Sample(img, 0), PreprocessPolicy(max_edge=500)).image.shape[:2]
