import numpy as np
import pytest

from noisecurator.baselines import confidence_filter, small_loss_filter
from noisecurator.evaluation import separation_auroc
from noisecurator.training import TrainConfig


@pytest.mark.parametrize("method", [confidence_filter, small_loss_filter])
def test_filters_prefer_clean(small_noisy, method):
    tr, _ = small_noisy
    rep = method(tr, TrainConfig(epochs=3), keep=400)
    assert rep.kept.size == 400 and np.all(np.diff(rep.kept) > 0)
    assert separation_auroc(rep.scores, tr.clean) > 0.8
    assert tr.clean[rep.kept].mean() > tr.clean.mean()


def test_keep_bounds(small_noisy):
    tr, _ = small_noisy
    with pytest.raises(ValueError):
        small_loss_filter(tr, TrainConfig(epochs=1), keep=len(tr) + 1)
    assert confidence_filter(tr, TrainConfig(epochs=0), keep=0).kept.size == 0
