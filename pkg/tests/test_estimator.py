import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from statenet.estimator import NetworkDynamics


def profiles(rows=3, n=10, seed=0):
    return np.random.default_rng(seed).uniform(0, 100, (rows, n))


def test_fit_transform_and_predict():
    X = profiles()
    est = NetworkDynamics(params={"eps": 10.0})
    out = est.fit_transform(X)
    assert out.shape == X.shape
    assert len(est.trajectories_) == 3 and est.n_features_in_ == 10
    np.testing.assert_array_equal(est.transform(), out)
    labels = est.predict()
    for s, lab in zip(out, labels):
        for c in np.unique(lab):
            assert np.ptp(s[lab == c]) < 1e-6
        centers = np.sort([s[lab == c].mean() for c in np.unique(lab)])
        assert np.all(np.diff(centers) > 10.0)


def test_transform_new_rows_matches_refit():
    est = NetworkDynamics(params={"eps": 15.0}).fit(profiles(seed=1))
    X = profiles(2, seed=2)
    np.testing.assert_array_equal(est.transform(X), clone(est).fit_transform(X))


def test_clone_and_params():
    est = NetworkDynamics(preset="lazy_hk", params={"eps": 5.0}, max_iter=7, seed=3)
    twin = clone(est)
    assert twin.get_params() == est.get_params()
    assert not hasattr(twin, "final_states_")
    est.set_params(max_iter=3).fit(profiles(1))
    assert est.trajectories_[0].iterations <= 3


def test_family_override():
    est = NetworkDynamics(family="bcd_majorize", max_iter=5).fit(profiles(1))
    assert est.trajectories_[0].spec.family.value == "bcd_majorize"


def test_input_validation():
    est = NetworkDynamics()
    with pytest.raises(NotFittedError):
        est.transform()
    with pytest.raises(ValueError):
        est.fit(np.array([[1.0, np.nan]]))
    est.fit(profiles(1, n=4))
    with pytest.raises(ValueError):
        est.transform(profiles(1, n=5))
    with pytest.raises(ValueError):
        NetworkDynamics(preset="two_agent_flow").fit(np.zeros((1, 2)))
