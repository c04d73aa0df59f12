import numpy as np
import pytest

from side.data import (FeatureView, LabeledSet, ShiftSpec, blob_means, generate_pair,
                       read_dataset, read_manifest, write_dataset)
from side.errors import ConfigError, DatasetFormatError
from side.source import SourceConfig, accuracy, pretrain


def test_zero_rotation_same_distribution():
    src, tgt = generate_pair(ShiftSpec(shift=0.0, n_per_class=2000, seed=4))
    # two independent draws of one distribution: class-wise moments agree
    for k in range(2):
        a, b = src.features[src.labels == k], tgt.features[tgt.labels == k]
        np.testing.assert_allclose(a.mean(axis=0), b.mean(axis=0), atol=0.05)
        np.testing.assert_allclose(a.std(axis=0), b.std(axis=0), atol=0.05)


def test_blob_shift_moves_means_exactly():
    spec = ShiftSpec(family="gauss_blobs", K=3, n_per_class=50, noise_sigma=0.0, shift=[5.0, 0.0])
    src, tgt = generate_pair(spec)
    means = blob_means(3, 2)
    for k in range(3):
        np.testing.assert_array_equal(src.features[src.labels == k], np.tile(means[k], (50, 1)))
        np.testing.assert_array_equal(tgt.features[tgt.labels == k], np.tile(means[k] + [5.0, 0.0], (50, 1)))


def test_generation_is_pure():
    spec = ShiftSpec(seed=11)
    a, b = generate_pair(spec)
    c, d = generate_pair(ShiftSpec(seed=11))
    assert a == c and b == d


def test_rotation_gap_on_two_moons():
    # noise lowered from the benchmark's 0.15 so held-out source sits above 99%
    spec = ShiftSpec(noise_sigma=0.1, seed=0)
    src, tgt = generate_pair(spec)
    held, _ = generate_pair(spec, source_label="heldout")
    model, _ = pretrain(src, SourceConfig(seed=0))
    assert accuracy(model, held.features, held.labels) >= 0.99
    assert accuracy(model, tgt.features, tgt.labels) < 0.95


@pytest.mark.parametrize(
    "changes, field",
    [({"family": "spirals"}, "family"), ({"K": 3}, "K"), ({"noise_sigma": -1.0}, "noise_sigma"),
     ({"n_per_class": 0}, "n_per_class"), ({"shift": [1.0, 2.0]}, "shift")],
)
def test_invalid_spec_names_field(changes, field):
    with pytest.raises(ConfigError, match=field):
        generate_pair(ShiftSpec(**changes))


def test_roundtrip(tmp_path):
    spec = ShiftSpec(family="gauss_blobs", K=4, n_per_class=10, shift=[1.0, -2.0, 0.5], seed=3)
    src, tgt = generate_pair(spec)
    for role, ds in (("source", src), ("target", tgt)):
        path = tmp_path / f"{role}.csv"
        write_dataset(ds, path, spec.manifest(role))
        assert read_dataset(path) == ds
        assert read_manifest(path)["role"] == role


def test_hand_written_fixture(tmp_path):
    path = tmp_path / "tiny.csv"
    path.write_text("id,label,f0,f1\n0,1,0.5,-1.25\n2,0,3,1e-3\n1,0,-0.0,7.125\n")
    ds = read_dataset(path)
    np.testing.assert_array_equal(ds.features, [[0.5, -1.25], [-0.0, 7.125], [3.0, 0.001]])
    np.testing.assert_array_equal(ds.labels, [1, 0, 0])
    np.testing.assert_array_equal(ds.ids, [0, 1, 2])


@pytest.mark.parametrize(
    "body, line",
    [
        ("id,label,f0\n0,0,1.0\n1,2,1.0\n", 3),  # label >= K
        ("id,label,f0\n0,0,1.0\n0,1,1.0\n", 3),  # duplicate id
        ("id,label,f0\n0,0,1.0\n1,1\n", 3),  # short row
        ("id,lab,f0\n0,0,1.0\n", 1),  # header
        ("id,label,f0\n0,0,abc\n", 2),
    ],
)
def test_parse_errors_carry_line(tmp_path, body, line):
    path = tmp_path / "bad.csv"
    path.write_text(body)
    with pytest.raises(DatasetFormatError) as info:
        read_dataset(path, num_classes=2)
    assert info.value.line == line


def test_unlabeled_view_has_no_labels():
    src, _ = generate_pair(ShiftSpec(n_per_class=5))
    view = src.unlabeled()
    assert isinstance(view, FeatureView)
    assert not hasattr(view, "labels")


def test_every_class_needs_a_sample():
    with pytest.raises(ValueError, match="classes without samples"):
        LabeledSet(np.zeros((2, 2)), [0, 0], 2)
