import struct

import numpy as np
import pytest

from siamdibs.datasets import (DatasetError, IdxFormatError, LabeledDataset, SyntheticSpec,
                               class_centers, generate_synthetic, load_idx, write_idx)


def test_generator_counts_and_labels():
    ds = generate_synthetic(SyntheticSpec(n_c=10, N_c=50, d=16, seed=0))
    assert len(ds) == 500
    assert ds.dim == 16
    assert np.array_equal(ds.class_counts(), np.full(10, 50))
    assert set(np.unique(ds.labels)) == set(range(1, 11))


def test_generator_is_bit_identical_under_seed():
    a = generate_synthetic(SyntheticSpec(seed=3))
    b = generate_synthetic(SyntheticSpec(seed=3))
    c = generate_synthetic(SyntheticSpec(seed=4))
    assert a.items.tobytes() == b.items.tobytes()
    assert a.items.tobytes() != c.items.tobytes()


def test_zero_spread_puts_items_on_centers():
    ds = generate_synthetic(SyntheticSpec(n_c=2, N_c=3, d=2, spread=0.0))
    for c in (1, 2):
        pts = ds.items[ds.class_indices(c)]
        assert np.allclose(pts, pts[0])
    a, b = ds.class_indices(1)[0], ds.class_indices(2)[0]
    assert np.linalg.norm(ds.items[a] - ds.items[b]) >= 6.0 - 1e-12


def test_synthetic_classes_are_interleaved():
    ds = generate_synthetic(SyntheticSpec(n_c=10, N_c=50))
    assert not np.array_equal(ds.labels, np.sort(ds.labels))
    assert np.array_equal(np.bincount(ds.labels), [0] + [50] * 10)


@pytest.mark.parametrize("n_c,d", [(10, 16), (5, 3), (2, 1), (8, 4)])
def test_centers_respect_separation(n_c, d):
    c = class_centers(n_c, d, 6.0, seed=1)
    gaps = [np.linalg.norm(c[i] - c[j]) for i in range(n_c) for j in range(i + 1, n_c)]
    assert min(gaps) >= 6.0 - 1e-9


def test_impossible_centers_rejected():
    with pytest.raises(DatasetError):
        class_centers(3, 1, 1.0)


@pytest.mark.parametrize("bad", [dict(n_c=1), dict(N_c=1), dict(d=0), dict(separation=0.0),
                                 dict(spread=-1.0)])
def test_invalid_specs(bad):
    with pytest.raises(DatasetError):
        generate_synthetic(SyntheticSpec(**bad))


def test_labeled_dataset_validation():
    with pytest.raises(DatasetError):
        LabeledDataset(np.zeros((3, 2)), [1, 2], 2)
    with pytest.raises(DatasetError):
        LabeledDataset(np.zeros((2, 2)), [1, 3], 2)
    with pytest.raises(DatasetError, match="no items"):
        LabeledDataset(np.zeros((2, 2)), [1, 1], 2)
    ds = LabeledDataset(np.zeros((2, 2)), [1, 2], 2)
    with pytest.raises(ValueError):
        ds.items[0, 0] = 1.0


def _fixture(tmp_path, n=5, rows=3, cols=2):
    rng = np.random.default_rng(0)
    images = rng.integers(0, 256, size=(n, rows, cols), dtype=np.uint8)
    labels = np.array([0, 1, 2, 1, 0][:n], dtype=np.uint8)
    ip, lp = tmp_path / "img.idx", tmp_path / "lab.idx"
    write_idx(images, labels, ip, lp)
    return images, labels, ip, lp


def test_idx_round_trip(tmp_path):
    images, labels, ip, lp = _fixture(tmp_path)
    ds = load_idx(ip, lp)
    assert ds.n_c == 3
    assert np.array_equal(ds.labels, labels.astype(int) + 1)
    assert np.allclose(ds.items, images.reshape(5, -1) / 255.0)
    # hand-built header bytes: magic, count, rows, cols in big endian
    raw = ip.read_bytes()
    assert raw[:16] == bytes.fromhex("00000803" "00000005" "00000003" "00000002")


def test_idx_truncated_pixels(tmp_path):
    _, _, ip, lp = _fixture(tmp_path)
    ip.write_bytes(ip.read_bytes()[:-3])
    with pytest.raises(IdxFormatError) as err:
        load_idx(ip, lp)
    assert "byte offset" in str(err.value)
    assert err.value.offset == 16 + 30 - 3


def test_idx_bad_magic(tmp_path):
    _, _, ip, lp = _fixture(tmp_path)
    ip.write_bytes(struct.pack(">I", 0x12345678) + ip.read_bytes()[4:])
    with pytest.raises(IdxFormatError) as err:
        load_idx(ip, lp)
    assert err.value.offset == 0


def test_idx_unsupported_element_type(tmp_path):
    _, _, ip, lp = _fixture(tmp_path)
    ip.write_bytes(struct.pack(">I", 0x00000D03) + ip.read_bytes()[4:])
    with pytest.raises(IdxFormatError) as err:
        load_idx(ip, lp)
    assert err.value.offset == 2


def test_idx_count_mismatch(tmp_path):
    images, labels, ip, lp = _fixture(tmp_path)
    write_idx(images, labels, ip, lp)
    lp.write_bytes(struct.pack(">2I", 0x801, 4) + labels[:4].tobytes())
    with pytest.raises(IdxFormatError, match="count mismatch"):
        load_idx(ip, lp)


def test_idx_truncated_header(tmp_path):
    _, _, ip, lp = _fixture(tmp_path)
    ip.write_bytes(ip.read_bytes()[:10])
    with pytest.raises(IdxFormatError, match="truncated header"):
        load_idx(ip, lp)


def test_two_classes_zero_spread_repeat_points():
    ds = generate_synthetic(SyntheticSpec(n_c=2, N_c=3, d=2, separation=10, spread=0))
    assert len(ds) == 6
    assert len(np.unique(ds.items, axis=0)) == 2


def test_nearest_center_recovers_labels():
    spec = SyntheticSpec(n_c=3, N_c=100, d=8, separation=8, spread=1, seed=0)
    ds = generate_synthetic(spec)
    centers = class_centers(3, 8, 8, 0)
    dist = np.linalg.norm(ds.items[:, None, :] - centers[None], axis=2)
    assert np.mean(dist.argmin(axis=1) + 1 != ds.labels) < 0.01


def test_hand_written_two_image_fixture(tmp_path):
    ip, lp = tmp_path / "i", tmp_path / "l"
    ip.write_bytes(bytes.fromhex("00000803" "00000002" "00000002" "00000002")
                   + bytes([0, 0, 0, 0, 255, 255, 255, 255]))
    lp.write_bytes(bytes.fromhex("00000801" "00000002") + bytes([0, 1]))
    ds = load_idx(ip, lp)
    assert ds.items.tolist() == [[0, 0, 0, 0], [1, 1, 1, 1]]
    assert ds.labels.tolist() == [1, 2]


def test_three_images_two_labels(tmp_path):
    ip, lp = tmp_path / "i", tmp_path / "l"
    write_idx(np.zeros((3, 1, 1)), [0, 1, 0], ip, lp)
    lp.write_bytes(bytes.fromhex("00000801" "00000002") + bytes([0, 1]))
    with pytest.raises(IdxFormatError):
        load_idx(ip, lp)
