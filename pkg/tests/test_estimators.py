import numpy as np
import pytest
from sklearn.base import clone
from sklearn.model_selection import cross_val_score

from noisecurator import BilevelReweighter, SoftmaxClassifier, inject_noise, make_gaussian_blobs, NoiseSpec
from noisecurator.evaluation import separation_auroc


def test_classifier_sklearn_api():
    ds = make_gaussian_blobs(100, 3, 2, 5.0)
    clf = SoftmaxClassifier(epochs=10)
    labels = np.array(["a", "b", "c"])[ds.labels]
    clf.fit(ds.features, labels)
    assert set(clf.predict(ds.features)) <= {"a", "b", "c"}
    assert clf.score(ds.features, labels) > 0.9
    np.testing.assert_allclose(clf.predict_proba(ds.features).sum(1), 1.0)
    assert clone(clf).get_params() == clf.get_params()
    assert cross_val_score(SoftmaxClassifier(epochs=5), ds.features, ds.labels, cv=3).mean() > 0.9


def test_classifier_rejects_bad_input():
    with pytest.raises(ValueError):
        SoftmaxClassifier().fit(np.ones((3, 2)), [0, 1])
    with pytest.raises(Exception):
        SoftmaxClassifier().predict(np.ones((3, 2)))


def test_reweighter_api():
    ds = inject_noise(make_gaussian_blobs(300, 2, 2, 4.0), NoiseSpec("uniform", eta=0.3, seed=1))
    rw = BilevelReweighter(outer_iterations=15, budget=300)
    Xs, ys = rw.fit_resample(ds.features, ds.labels)
    assert rw.sample_weights_.shape == (600,)
    assert separation_auroc(rw.sample_weights_, ds.clean) > 0.9
    assert 250 < len(ys) < 350 and Xs.shape[1] == 2
    assert rw.get_params()["outer_iterations"] == 15
    idx = rw.subset_indices(100, seed=1)
    assert np.all(np.diff(idx) > 0)
    rw2 = BilevelReweighter(outer_iterations=3).fit(ds.features[:400], ds.labels[:400], ds.features[400:], ds.labels[400:])
    assert len(rw2.trace_.records) == 3
