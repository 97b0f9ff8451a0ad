import numpy as np
import pytest

from spikepgd.data import CIFAR_RECORD, Dataset, load_cifar10, synth_dataset, write_cifar10


def test_single_cifar_record(tmp_path):
    path = tmp_path / "one.bin"
    path.write_bytes(bytes([7]) + bytes([255]) * 3072)
    data = load_cifar10(path)
    assert len(data) == 1
    assert data.labels.tolist() == [7]
    assert data.images.shape == (1, 3, 32, 32)
    assert np.all(data.images == 1.0)


def test_cifar_channel_order(tmp_path):
    rec = np.zeros(CIFAR_RECORD, np.uint8)
    rec[1:1025] = 51  # red plane
    path = tmp_path / "r.bin"
    rec.tofile(path)
    img = load_cifar10(path).images[0]
    assert np.all(img[0] == 0.2) and np.all(img[1:] == 0.0)


def test_empty_cifar_file(tmp_path):
    path = tmp_path / "empty.bin"
    path.write_bytes(b"")
    assert len(load_cifar10(path)) == 0


@pytest.mark.parametrize("size", [3074, 3072, 1])
def test_bad_cifar_size(tmp_path, size):
    path = tmp_path / "bad.bin"
    path.write_bytes(bytes(size))
    with pytest.raises(ValueError):
        load_cifar10(path)


def test_bad_cifar_label(tmp_path):
    path = tmp_path / "bad.bin"
    path.write_bytes(bytes([10]) + bytes(3072))
    with pytest.raises(ValueError):
        load_cifar10(path)


def test_cifar_round_trip(tmp_path, rng):
    pix = rng.integers(0, 256, (5, 3, 32, 32)) / 255.0
    data = Dataset(pix, np.array([0, 9, 3, 3, 1]), 10)
    path = tmp_path / "rt.bin"
    write_cifar10(data, path)
    assert path.stat().st_size == 5 * CIFAR_RECORD
    back = load_cifar10(path)
    assert np.array_equal(back.images, data.images)
    assert np.array_equal(back.labels, data.labels)


def test_dataset_validation():
    with pytest.raises(ValueError):
        Dataset(np.zeros((2, 3)), np.array([0, 5]), 3)
    with pytest.raises(ValueError):
        Dataset(np.full((1, 3), 1.5), np.array([0]), 3)
    with pytest.raises(ValueError):
        Dataset(np.zeros((2, 3)), np.array([0]), 3)


def test_synth_determinism_and_classes():
    a = synth_dataset(3, 50)
    b = synth_dataset(3, 50)
    assert np.array_equal(a.images, b.images)
    assert np.array_equal(a.labels, b.labels)
    assert not np.array_equal(a.images, synth_dataset(3, 50, split="test").images)
    small = synth_dataset(0, 10)
    assert sorted(small.labels.tolist()) == list(range(10))
    assert small.images.min() >= 0 and small.images.max() <= 1
    with pytest.raises(ValueError):
        synth_dataset(0, 5)


def test_synth_shared_class_means():
    # noise-free draws from the two splits show the same class images
    tr = synth_dataset(1, 20, noise=0.0)
    te = synth_dataset(1, 20, noise=0.0, split="test")
    for c in range(10):
        assert np.array_equal(tr.images[tr.labels == c][0], te.images[te.labels == c][0])
