import json

import numpy as np
import pytest
from sklearn.base import clone

from trajphase.clustering import (
    GmmModel,
    PhaseMixture,
    UnfittedModelError,
    assign_active_label,
    fit_gmm,
    p_active,
    responsibilities,
)
from trajphase.errors import DegenerateInputError, LabelTieError


def two_blobs(n=500, sep=5.0, seed=0):
    rng = np.random.default_rng(seed)
    X = np.concatenate([rng.normal(size=(n, 2)) + [-sep, 0], rng.normal(size=(n, 2)) + [sep, 0]])
    return X, np.repeat([1.0, 10.0], n)


def datasets():
    rng = np.random.default_rng(42)
    yield two_blobs()[0]
    yield two_blobs(sep=0.5, seed=1)[0]
    yield rng.normal(size=(300, 2)) @ np.array([[3, 1], [0, 0.2]])
    yield np.concatenate([rng.normal(size=(50, 2)) * 0.01, rng.normal(size=(400, 2)) * 4 + 2])
    yield rng.uniform(size=(200, 2))


def symmetric_model():
    return GmmModel(np.array([0.5, 0.5]), np.array([[-2.0, 0.0], [2.0, 0.0]]), np.array([np.eye(2), np.eye(2)]))


def test_two_gaussian_recovery():
    X, _ = two_blobs()
    g = fit_gmm(X, seed=0)
    order = np.argsort(g.means[:, 0])
    assert np.max(np.abs(g.means[order] - [[-5, 0], [5, 0]])) < 0.15
    assert np.all(np.abs(g.weights - 0.5) < 0.05)
    assert abs(g.weights.sum() - 1) < 1e-12


@pytest.mark.parametrize("idx", range(5))
def test_log_likelihood_monotone_and_floor(idx):
    X = list(datasets())[idx]
    g = fit_gmm(X, seed=idx)
    hist = np.array(g.ll_history)
    assert len(hist) >= 2
    assert np.all(np.diff(hist) >= -1e-10)
    for c in g.covariances:
        assert np.allclose(c, c.T)
        assert np.linalg.eigvalsh(c).min() >= 1e-6 * (1 - 1e-9)


def test_duplicated_tight_cluster():
    rng = np.random.default_rng(3)
    pts = rng.normal(size=(20, 2)) * 1e-9
    g = fit_gmm(np.concatenate([pts, pts]))
    assert np.isfinite(g.log_likelihood)
    assert np.all(np.isfinite(g.means)) and np.all(np.isfinite(g.covariances))
    for c in g.covariances:
        ev = np.linalg.eigvalsh(c)
        assert np.all(ev >= 1e-6 * (1 - 1e-9)) and np.all(ev < 1.01e-6)


def test_degenerate_inputs():
    with pytest.raises(DegenerateInputError):
        fit_gmm(np.ones((10, 2)))
    with pytest.raises(DegenerateInputError):
        fit_gmm(np.random.default_rng(0).normal(size=(3, 2)))


def test_responsibilities():
    X, w = two_blobs()
    g = fit_gmm(X)
    c0 = int(np.argmin(g.means[:, 0]))
    assert responsibilities(g, g.means[c0])[c0] > 0.999
    assert np.allclose(responsibilities(symmetric_model(), [0.0, 0.7]), [0.5, 0.5], atol=1e-9)
    Z = np.random.default_rng(1).normal(scale=10, size=(10**4, 2))
    assert np.max(np.abs(responsibilities(g, Z).sum(axis=1) - 1)) < 1e-12
    with pytest.raises(UnfittedModelError):
        responsibilities(GmmModel(None, None, None), [0.0, 0.0])


def test_active_label_rules():
    X, w = two_blobs()
    g = assign_active_label(fit_gmm(X), X, w)
    assert np.allclose(g.means[g.active_component], [5, 0], atol=0.15)
    assert p_active(g, [5.0, 0.0]) > 0.999
    assert p_active(g, [-5.0, 0.0]) < 1e-3
    again = assign_active_label(g, X, w)
    assert again.active_component == g.active_component
    with pytest.raises(UnfittedModelError):
        p_active(fit_gmm(X), [0.0, 0.0])


def test_label_tie_raises():
    X = np.array([[0.0, 0.0], [0.0, 1.0]])
    with pytest.raises(LabelTieError):
        assign_active_label(symmetric_model(), X, [3.0, 3.0])


def test_permutation_invariance_of_p_active():
    X, w = two_blobs(seed=4)
    g = assign_active_label(fit_gmm(X), X, w)
    swapped = g.permuted([1, 0])
    assert swapped.active_component == 1 - g.active_component
    Z = np.random.default_rng(2).normal(scale=6, size=(1000, 2))
    assert np.allclose(p_active(g, Z), p_active(swapped, Z), rtol=0, atol=1e-15)
    relabelled = assign_active_label(swapped, X, w)
    assert relabelled.active_component == swapped.active_component


def test_json_round_trip_exact():
    X, w = two_blobs(seed=5)
    g = assign_active_label(fit_gmm(X), X, w)
    back = GmmModel.from_json(g.to_json())
    assert back.weights.tobytes() == g.weights.tobytes()
    assert back.means.tobytes() == g.means.tobytes()
    assert back.covariances.tobytes() == g.covariances.tobytes()
    assert back.active_component == g.active_component
    assert json.loads(g.to_json())["n_components"] == 2


def test_fit_is_deterministic():
    X, _ = two_blobs(sep=1.0, seed=6)
    a, b = fit_gmm(X, seed=3, restarts=3), fit_gmm(X, seed=3, restarts=3)
    assert a.means.tobytes() == b.means.tobytes()


def test_estimator_wrapper():
    X, w = two_blobs(seed=7)
    est = PhaseMixture(random_state=1).fit(X, w)
    assert clone(est).get_params() == est.get_params()
    proba = est.predict_proba(X)
    assert proba.shape == (1000, 2)
    assert np.array_equal(est.predict(X), np.argmax(proba, axis=1))
    assert np.mean(est.p_active(X[w == 10]) > 0.5) > 0.99
    assert np.isfinite(est.score(X))
