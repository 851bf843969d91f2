import numpy as np
import pytest
from sklearn.exceptions import NotFittedError

from tschrl.estimator import TschScheduler, check_requirements, check_topology
from tschrl.exceptions import ConfigurationError
from tschrl.hrl import synthesize

from conftest import TINY


def test_estimator_wraps_a_trained_bank(small_bank):
    est = TschScheduler.from_bank(small_bank, seed=3)
    assert est.get_params()["seed"] == 3
    phis = np.array([[0.8, 0.1, 0.1], [0.1, 0.1, 0.8]])
    schedules = est.predict(phis)
    assert len(schedules) == 2
    assert schedules[0] == synthesize(small_bank, check_requirements(phis[0])[0], seed=3).schedule
    pdt = est.transform(phis)
    assert pdt.shape == (2, 3) and np.all(np.isfinite(pdt))


def test_estimator_fit_on_positions():
    pos = np.array([[1, 0, 0], [2, 0, 30], [3, 0, 60]])
    est = TschScheduler(train_config=TINY, seed=3).fit(pos)
    assert est.n_links_ == 4 and est.bank_.complete
    assert len(est.predict([0.5, 0.3, 0.2])) == 1


def test_estimator_input_validation(small_bank):
    est = TschScheduler.from_bank(small_bank)
    with pytest.raises(ValueError):
        est.predict([[0.5, 0.5]])
    with pytest.raises(ValueError):
        est.predict([[0.9, 0.9, 0.1]])
    with pytest.raises(ValueError):
        est.predict([[np.nan, 0.5, 0.5]])
    with pytest.raises(ConfigurationError):
        check_topology(np.zeros((3, 2)), 50.0, 100.0)
    with pytest.raises(ConfigurationError):
        TschScheduler(jobs=0).fit(np.array([[1, 0, 0], [2, 0, 30]]))


def test_unfitted_estimator_refuses_to_predict():
    with pytest.raises(NotFittedError):
        TschScheduler().predict([[1.0, 0.0, 0.0]])


def test_estimator_clones_and_roundtrips_params():
    from sklearn.base import clone

    est = TschScheduler(train_config=TINY, budget=5, seed=9)
    copy = clone(est)
    assert copy.get_params() == est.get_params()
    assert copy.set_params(seed=1).seed == 1 and est.seed == 9
