import struct

import numpy as np
import pytest

from rfgan.data import (
    ArraySampler,
    IDXFormatError,
    RingSampler,
    RingSpec,
    corrupt,
    denormalize_unit_range,
    load_idx,
    load_idx_labels,
    normalize_unit_range,
    sample_ring,
    write_idx,
)


def idx_bytes(images: np.ndarray) -> bytes:
    # hand-built big-endian header, independent of write_idx
    n, h, w = images.shape
    return struct.pack(">IIII", 0x803, n, h, w) + images.astype(np.uint8).tobytes()


@pytest.fixture
def idx_file(tmp_path):
    imgs = np.random.default_rng(0).integers(0, 256, (5, 4, 3), dtype=np.uint8)
    path = tmp_path / "imgs.idx"
    path.write_bytes(idx_bytes(imgs))
    return path, imgs


def test_load_idx(idx_file):
    path, imgs = idx_file
    out = load_idx(path)
    assert out.shape == (5, 4, 3) and out.dtype == np.float64
    np.testing.assert_array_equal(out, imgs)


def test_idx_write_round_trip(tmp_path):
    imgs = np.random.default_rng(1).integers(0, 256, (3, 28, 28))
    labels = np.array([3, 0, 9])
    write_idx(tmp_path / "i", imgs)
    write_idx(tmp_path / "l", labels)
    assert (tmp_path / "i").read_bytes() == idx_bytes(imgs)
    np.testing.assert_array_equal(load_idx(tmp_path / "i"), imgs)
    np.testing.assert_array_equal(load_idx_labels(tmp_path / "l"), labels)


@pytest.mark.parametrize("mutate, match", [
    (lambda b: b[:2], "header"),
    (lambda b: struct.pack(">I", 0x801) + b[4:], "magic"),
    (lambda b: b[:10], "dimensions"),
    (lambda b: b[:-1], "truncated"),
    (lambda b: b + b"\x00\x00", "beyond"),
])
def test_idx_errors(tmp_path, idx_file, mutate, match):
    path, _ = idx_file
    bad = tmp_path / "bad.idx"
    bad.write_bytes(mutate(path.read_bytes()))
    with pytest.raises(IDXFormatError, match=match):
        load_idx(bad)


def test_write_idx_rejects_bad_input(tmp_path):
    with pytest.raises(IDXFormatError):
        write_idx(tmp_path / "x", np.zeros((2, 2)))
    with pytest.raises(IDXFormatError):
        write_idx(tmp_path / "x", np.full((1, 2, 2), 300))


def test_ring_means():
    mu = RingSpec().means()
    assert mu.shape == (8, 2)
    np.testing.assert_allclose(np.hypot(mu[:, 0], mu[:, 1]), 2.0)
    np.testing.assert_allclose(mu[0], [2.0, 0.0])
    np.testing.assert_allclose(mu[2], [0.0, 2.0], atol=1e-15)


def test_ring_sample_statistics():
    # Monte-Carlo: residual to the nearest mean has std sigma, modes equally likely
    spec = RingSpec()
    x = sample_ring(spec, 80_000, np.random.default_rng(0))
    mu = spec.means()
    nearest = np.argmin(((x[:, None] - mu[None]) ** 2).sum(-1), axis=1)
    resid = x - mu[nearest]
    assert resid.std() == pytest.approx(0.1, rel=0.01)
    freq = np.bincount(nearest, minlength=8) / len(x)
    np.testing.assert_allclose(freq, 1 / 8, atol=0.005)
    np.testing.assert_allclose(x.mean(axis=0), 0.0, atol=0.03)


def test_ring_spec_validation_and_determinism():
    with pytest.raises(ValueError):
        RingSpec(k=0)
    with pytest.raises(ValueError):
        RingSpec(sigma=0)
    with pytest.raises(ValueError):
        RingSpec(radius=-1)
    with pytest.raises(ValueError):
        sample_ring(RingSpec(), 0, np.random.default_rng(0))
    a = RingSampler(RingSpec(), np.random.default_rng(3)).sample(10)
    b = RingSampler(RingSpec(), np.random.default_rng(3)).sample(10)
    assert a.dtype == np.float32 and a.tobytes() == b.tobytes()


def test_array_sampler():
    data = np.arange(20).reshape(10, 2)
    s = ArraySampler(data, np.random.default_rng(0))
    batch = s.sample(50)
    assert batch.shape == (50, 2) and s.dim == 2
    assert set(map(tuple, batch.astype(int))) <= set(map(tuple, data))


def test_normalisation():
    x = np.array([0.0, 127.5, 255.0])
    np.testing.assert_allclose(normalize_unit_range(x), [-1.0, 0.0, 1.0])
    np.testing.assert_allclose(denormalize_unit_range(normalize_unit_range(x)), x)
    np.testing.assert_allclose(normalize_unit_range([2.0, 4.0], 2, 4), [-1.0, 1.0])
    with pytest.raises(ValueError):
        normalize_unit_range(x, 3, 3)
    with pytest.raises(ValueError):
        normalize_unit_range(x, 4, 3)


def test_corrupt():
    x = np.zeros((20_000, 2), dtype=np.float32)
    noisy = corrupt(x, 0.1, np.random.default_rng(0))
    assert noisy.dtype == np.float32
    assert noisy.std() == pytest.approx(0.1, rel=0.02)
    same = corrupt(x, 0.0, np.random.default_rng(0))
    assert same is not x and np.array_equal(same, x)
    with pytest.raises(ValueError):
        corrupt(x, -0.1, np.random.default_rng(0))
