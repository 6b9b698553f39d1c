import json

import numpy as np
import pytest

from noisecurator.data import (
    Dataset,
    DatasetError,
    SplitSpec,
    load_dataset,
    make_gaussian_blobs,
    save_dataset,
    split,
)
from oracles import perceptron_separable


def write(path, lines):
    path.write_text("\n".join(lines) + "\n")
    return path


def test_load_jsonl_vectors(tmp_path):
    p = write(
        tmp_path / "d.jsonl",
        [json.dumps({"id": "a", "label": 0, "features": [1.0, 2.0]}), json.dumps({"id": "b", "label": 1, "features": [0.0, -1.0]})],
    )
    ds = load_dataset(p, 2)
    assert len(ds) == 2 and ds.feature_dim == 2
    assert ds.ids == ("a", "b")
    assert ds.labels.tolist() == [0, 1]
    assert ds.clean is None and ds.provenance == "ingested"


def test_load_text_and_flags(tmp_path):
    p = write(
        tmp_path / "t.jsonl",
        [json.dumps({"id": 1, "label": 2, "text": "good film", "clean": True}), json.dumps({"id": 2, "label": 0, "text": "bad", "clean": False})],
    )
    ds = load_dataset(p, 3)
    assert ds.texts == ("good film", "bad") and not ds.is_vector
    assert ds.clean.tolist() == [True, False]


def test_label_out_of_range_names_line(tmp_path):
    p = write(tmp_path / "d.jsonl", [json.dumps({"id": "a", "label": 0, "features": [1]}), json.dumps({"id": "b", "label": 5, "features": [1]})])
    with pytest.raises(DatasetError, match="line 2.*label out of range"):
        load_dataset(p, 2)


def test_malformed_record_reports_line(tmp_path):
    p = write(tmp_path / "d.jsonl", [json.dumps({"id": "a", "label": 0, "features": [1]}), "{not json"])
    with pytest.raises(DatasetError, match="line 2: malformed"):
        load_dataset(p, 2)


def test_inconsistent_feature_length(tmp_path):
    p = write(tmp_path / "d.jsonl", [json.dumps({"id": "a", "label": 0, "features": [1, 2]}), json.dumps({"id": "b", "label": 0, "features": [1]})])
    with pytest.raises(DatasetError, match="inconsistent feature length"):
        load_dataset(p, 2)


def test_declared_feature_dim_checked(tmp_path):
    p = write(tmp_path / "d.jsonl", [json.dumps({"id": "a", "label": 0, "features": [1, 2]})])
    with pytest.raises(DatasetError, match="declared 3"):
        load_dataset(p, 2, feature_dim=3)


def test_empty_file(tmp_path):
    p = write(tmp_path / "d.jsonl", [""])
    with pytest.raises(DatasetError, match="empty"):
        load_dataset(p, 2)


def test_csv_roundtrip(tmp_path):
    p = write(tmp_path / "d.csv", ["x1,0,0.5,1.5", "x2,1,-1,2"])
    ds = load_dataset(p, 2)
    assert ds.features.tolist() == [[0.5, 1.5], [-1.0, 2.0]]
    with pytest.raises(DatasetError, match="line 2"):
        load_dataset(write(tmp_path / "e.csv", ["x1,0,0.5", "x2,1,a"]), 2)


def test_num_classes_inferred(tmp_path):
    p = write(tmp_path / "d.jsonl", [json.dumps({"id": "a", "label": 3, "features": [1]})])
    assert load_dataset(p).num_classes == 4


def test_save_load_roundtrip(tmp_path):
    ds = make_gaussian_blobs(5, 3, 4, 2.0, seed=3)
    save_dataset(ds, tmp_path / "x.jsonl")
    back = load_dataset(tmp_path / "x.jsonl", 3)
    assert back.ids == ds.ids
    np.testing.assert_array_equal(back.labels, ds.labels)
    np.testing.assert_allclose(back.features, ds.features)
    np.testing.assert_array_equal(back.clean, ds.clean)


def test_dataset_invariants():
    with pytest.raises(DatasetError, match="unique"):
        Dataset(ids=["a", "a"], labels=[0, 1], num_classes=2, features=[[0.0], [1.0]])
    with pytest.raises(DatasetError, match="exactly one"):
        Dataset(ids=["a"], labels=[0], num_classes=2)
    with pytest.raises(DatasetError, match="label out of range"):
        Dataset(ids=["a"], labels=[-1], num_classes=2, features=[[0.0]])
    ds = Dataset(ids=["a"], labels=[0], num_classes=2, features=[[0.0]])
    with pytest.raises(ValueError):
        ds.labels[0] = 1


def test_blobs_shape_and_flags():
    ds = make_gaussian_blobs(100, 3, 5, 4.0, seed=0)
    assert len(ds) == 300 and ds.feature_dim == 5
    assert np.bincount(ds.labels).tolist() == [100, 100, 100]
    assert ds.clean.all() and ds.provenance == "synthetic"


def test_blob_means_are_separated():
    for k, d in [(2, 2), (3, 5), (6, 2)]:
        ds = make_gaussian_blobs(2000, k, d, 5.0, seed=1)
        means = np.stack([ds.features[ds.labels == c].mean(0) for c in range(k)])
        dists = np.linalg.norm(means[:, None] - means[None], axis=-1)[np.triu_indices(k, 1)]
        assert dists.min() > 5.0 - 0.3


def test_blobs_separable_when_far_apart():
    # Means 12 apart with unit variance: a linear separator exists with overwhelming probability.
    ds = make_gaussian_blobs(100, 2, 2, 12.0, seed=0)
    assert perceptron_separable(ds.features, ds.labels)


def test_blobs_deterministic():
    a = make_gaussian_blobs(10, 2, 3, 2.0, seed=7)
    b = make_gaussian_blobs(10, 2, 3, 2.0, seed=7)
    np.testing.assert_array_equal(a.features, b.features)
    np.testing.assert_array_equal(a.labels, b.labels)


def test_split_disjoint_and_complete():
    ds = make_gaussian_blobs(50, 2, 2, 2.0, seed=0)
    tr, va = split(ds, SplitSpec(0.8, seed=1))
    assert len(tr) == 80 and len(va) == 20
    assert not set(tr.ids) & set(va.ids)
    assert set(tr.ids) | set(va.ids) == set(ds.ids)


def test_split_rejects_empty_side():
    ds = make_gaussian_blobs(1, 2, 2, 2.0, seed=0)
    with pytest.raises(DatasetError):
        split(ds, SplitSpec(0.9))
    with pytest.raises(ValueError):
        SplitSpec(1.0)
