import json

import jsonschema
import numpy as np
import pytest

from noisecurator.bilevel import BilevelConfig, run_bilevel
from noisecurator.data import make_gaussian_blobs
from noisecurator.evaluation import (
    bleu4,
    build_report,
    cross_loss_curves,
    emit_report,
    flat_fraction,
    loss_surface,
    report_schema,
    self_bleu4,
    separation_auroc,
    weight_histogram,
)
from noisecurator.model import ClassifierParams
from noisecurator.training import TrainConfig
from oracles import hand_bleu4, pairwise_auroc


def test_auroc_matches_pair_enumeration(rng):
    for _ in range(5):
        scores = np.round(rng.random(40), 1)  # coarse rounding forces ties
        flags = rng.random(40) < 0.6
        assert separation_auroc(scores, flags) == pytest.approx(pairwise_auroc(scores, flags))


def test_auroc_edge_cases():
    assert separation_auroc([0.9, 0.8, 0.1], [True, True, False]) == 1.0
    assert separation_auroc([0.5, 0.5], [True, False]) == 0.5
    with pytest.raises(ValueError):
        separation_auroc([0.1, 0.2], [True, True])


def test_histogram_bins():
    h = weight_histogram([0.0, 0.05, 0.5, 0.999, 1.0], bins=20)
    assert h.sum() == 5 and h[0] == 1 and h[1] == 1 and h[10] == 1 and h[19] == 2
    with pytest.raises(ValueError):
        weight_histogram([0.5], bins=1)


def test_loss_surface_center_and_layout():
    ds = make_gaussian_blobs(20, 2, 2, 3.0)
    p = ClassifierParams.initialize(2, 2, seed=0)
    s = loss_surface(p, ds, ("ce", "rce"), grid_size=5, seed=1)
    assert s.values["ce"].shape == (5, 5)
    assert np.isclose(np.linalg.norm(s.u), 1.0) and np.isclose(np.linalg.norm(s.v), 1.0)
    from noisecurator.losses import dataset_loss

    assert s.values["rce"][2, 2] == pytest.approx(dataset_loss(p, ds, "rce"))
    shifted = p.with_vector(p.vector + s.alphas[0] * s.u + s.betas[4] * s.v)
    assert s.values["ce"][0, 4] == pytest.approx(dataset_loss(shifted, ds, "ce"))


def test_flat_fraction():
    x = np.linspace(-1, 1, 11)
    assert flat_fraction(np.zeros((11, 11)), 0.2) == 1.0
    assert flat_fraction(np.add.outer(x, x), 0.2) == 0.0


def test_cross_loss_curves_decrease_under_ce():
    ds = make_gaussian_blobs(500, 2, 2, 3.0)
    curves = cross_loss_curves(ds, TrainConfig(epochs=5, learning_rate=0.05), "ce")
    assert len(curves) == 6
    ce, rce = np.array(curves).T
    assert np.sum(np.diff(ce) >= 0) <= 1 and np.sum(np.diff(rce) >= 0) <= 1


def test_bleu_against_hand_oracle():
    hyp = "the cat sat on the mat".split()
    refs = ["the cat is on the mat".split(), "a cat sat on a mat today".split()]
    assert bleu4(hyp, refs) == pytest.approx(hand_bleu4(hyp, refs))
    assert bleu4(hyp, [hyp]) == pytest.approx(1.0)
    # no matches at any order: geometric mean of eps/4, eps/3, eps/2, eps/1
    assert bleu4("x y z w".split(), ["a b c d".split()]) == pytest.approx(1e-9 * (1 / 24) ** 0.25)


def test_self_bleu_diversity():
    same = ["the movie was really great fun"] * 5
    varied = ["a b c d e", "f g h i j", "k l m n o", "p q r s t"]
    assert self_bleu4(same) == pytest.approx(1.0)
    assert self_bleu4(varied) < 1e-6
    with pytest.raises(ValueError):
        self_bleu4(["one"])


def test_report_validates_and_contains_every_histogram(tmp_path, small_noisy):
    tr, va = small_noisy
    _, trace = run_bilevel(tr, va, BilevelConfig(outer_iterations=3))
    rep = build_report({"outer_iterations": 3}, "abc", trace=trace.records, auroc=0.9, accuracies={"subset": 0.8})
    emit_report(rep, tmp_path / "r.json")
    back = json.loads((tmp_path / "r.json").read_text())
    jsonschema.validate(back, report_schema())
    assert len(back["histograms"]) == 3 and back["schema_version"] == 1
    bad = dict(rep, auroc=2.0)
    with pytest.raises(jsonschema.ValidationError):
        emit_report(bad, tmp_path / "bad.json")
