import numpy as np
import pytest

from noisecurator.data import make_gaussian_blobs
from noisecurator.model import ClassifierParams
from noisecurator.noise import NoiseSpec, flip_probabilities, inject_noise, separator_margins, tolerance_oracle


def test_uniform_rate_and_flags():
    ds = make_gaussian_blobs(5000, 3, 2, 3.0)
    noisy = inject_noise(ds, NoiseSpec("uniform", eta=0.3, seed=1))
    assert abs((~noisy.clean).mean() - 0.3) < 0.01
    np.testing.assert_array_equal(noisy.clean, noisy.labels == ds.labels)
    assert noisy.provenance == "noise-injected"
    # flips go to the other classes uniformly
    flipped_to = noisy.labels[(ds.labels == 0) & ~noisy.clean]
    assert abs((flipped_to == 1).mean() - 0.5) < 0.05


def test_zero_noise_is_identity():
    ds = make_gaussian_blobs(100, 2, 2, 3.0)
    noisy = inject_noise(ds, NoiseSpec("uniform", eta=0.0))
    np.testing.assert_array_equal(noisy.labels, ds.labels)


def test_class_dependent_rates():
    ds = make_gaussian_blobs(5000, 2, 2, 3.0)
    m = ((0.9, 0.1), (0.4, 0.6))
    noisy = inject_noise(ds, NoiseSpec("class", matrix=m, seed=2))
    assert abs((noisy.labels[ds.labels == 0] == 1).mean() - 0.1) < 0.02
    assert abs((noisy.labels[ds.labels == 1] == 0).mean() - 0.4) < 0.02


def test_class_matrix_validation():
    with pytest.raises(ValueError, match="probability"):
        NoiseSpec("class", matrix=((0.5, 0.4), (0.0, 1.0)))
    with pytest.warns(RuntimeWarning):
        NoiseSpec("class", matrix=((0.4, 0.6), (0.0, 1.0)))
    with pytest.raises(ValueError):
        NoiseSpec("uniform", eta=1.0)
    with pytest.raises(ValueError):
        NoiseSpec("bogus")


def test_repeated_injection_keeps_earlier_flags():
    ds = make_gaussian_blobs(1000, 2, 2, 3.0)
    once = inject_noise(ds, NoiseSpec("uniform", eta=0.3, seed=1))
    twice = inject_noise(once, NoiseSpec("uniform", eta=0.3, seed=2))
    assert not np.any(twice.clean & ~once.clean)


def test_instance_noise_concentrates_near_boundary():
    ds = make_gaussian_blobs(2000, 2, 2, 3.0)
    margin = separator_margins(ds)
    p = flip_probabilities(ds, NoiseSpec("instance", eta_max=0.5, tau=0.5))
    near, far = np.abs(margin) < 0.3, margin > 2.0
    assert p[near].mean() > 0.3 and p[far].mean() < 0.01
    assert p.max() <= 0.5


def test_tolerance_oracle_identity_for_rce():
    ds = make_gaussian_blobs(200, 2, 2, 2.0)
    rng = np.random.default_rng(0)
    grid = [ClassifierParams(2, 2, vector=rng.standard_normal(6)) for _ in range(10)]
    rep = tolerance_oracle(grid, ds, NoiseSpec("uniform", eta=0.2, seed=3), "rce", draws=100)
    assert rep.expected_slope == pytest.approx(0.6)
    assert rep.expected_intercept == pytest.approx(0.8)
    assert rep.max_deviation < 0.05
    with pytest.raises(ValueError):
        tolerance_oracle(grid, ds, NoiseSpec("uniform", eta=0.6), "rce")


def test_flip_fraction_binomial_bound():
    ds = make_gaussian_blobs(5000, 2, 2, 3.0)
    noisy = inject_noise(ds, NoiseSpec("uniform", eta=0.3, seed=11))
    assert abs((~noisy.clean).mean() - 0.3) <= 0.01


def test_identity_transition_matrix_is_identity():
    ds = make_gaussian_blobs(200, 3, 2, 3.0)
    noisy = inject_noise(ds, NoiseSpec("class", matrix=np.eye(3), seed=1))
    np.testing.assert_array_equal(noisy.labels, ds.labels)
    assert noisy.clean.all()


def _grid(seed=0, size=10):
    rng = np.random.default_rng(seed)
    return [ClassifierParams(2, 2, vector=rng.standard_normal(6)) for _ in range(size)]


def test_zero_noise_oracle_is_exact():
    ds = make_gaussian_blobs(100, 2, 2, 2.0)
    rep = tolerance_oracle(_grid(), ds, NoiseSpec("uniform", eta=0.0), "rce", draws=5)
    assert rep.max_deviation < 1e-12 and rep.argmin_preserved


def test_oracle_rce_plug_in_values():
    # K=2, eta=0.3, A=-4: noisy mean loss ~ 0.4 * clean + 1.2
    ds = make_gaussian_blobs(200, 2, 2, 2.0)
    rep = tolerance_oracle(_grid(size=20), ds, NoiseSpec("uniform", eta=0.3, seed=4), "rce", draws=200)
    assert rep.expected_slope == pytest.approx(0.4) and rep.expected_intercept == pytest.approx(1.2)
    assert rep.fitted_slope == pytest.approx(0.4, abs=0.02)
    assert rep.fitted_intercept == pytest.approx(1.2, abs=0.05)
    assert rep.max_deviation < 0.02 * 4


def test_class_dependent_oracle_checks_argmin_only():
    # Separable data and a scaled family of the clean separator: the clean minimizer reaches ~0 loss.
    ds = make_gaussian_blobs(200, 2, 2, 12.0, seed=0)
    from noisecurator.training import TrainConfig, train

    center = train(ds, TrainConfig(epochs=10))
    rng = np.random.default_rng(0)
    grid = [center.with_vector(center.vector * s) for s in (1, 2, 4, 8)]
    grid += [center.with_vector(rng.standard_normal(center.size)) for _ in range(20)]
    spec = NoiseSpec("class", matrix=((0.8, 0.2), (0.3, 0.7)), seed=1)
    rep = tolerance_oracle(grid, ds, spec, "rce", draws=50)
    assert np.isnan(rep.max_deviation) and rep.expected_slope is None
    assert rep.argmin_preserved
    with pytest.raises(ValueError):
        tolerance_oracle(grid, ds, NoiseSpec("instance", eta_max=0.3), "rce")


def test_instance_noise_loss_overlap_after_one_epoch():
    from noisecurator.data import split, SplitSpec
    from noisecurator.losses import per_sample_losses
    from noisecurator.model import forward
    from noisecurator.training import TrainConfig, train
    from oracles import histogram_overlap

    noisy = inject_noise(make_gaussian_blobs(2000, 2, 2, 1.0), NoiseSpec("instance", eta_max=0.5, tau=0.25, seed=2))
    p = train(noisy, TrainConfig(epochs=1))
    Z, _ = forward(p, noisy.features)
    losses = per_sample_losses("ce", Z, noisy.labels)
    assert histogram_overlap(losses[noisy.clean], losses[~noisy.clean]) > 0.5
