import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

import dndarray as dnd
from dndarray import KMeans, Lasso
from dndarray.transport import run_loopback


def regression_data(n=80, m=5, seed=0):
    rng = np.random.default_rng(seed)
    x = np.hstack([np.ones((n, 1)), rng.standard_normal((n, m - 1))])
    return x, x @ rng.normal(size=m)


def test_get_params_and_clone():
    km = KMeans(k=3, max_iter=7, seed=4)
    assert km.get_params() == {"k": 3, "max_iter": 7, "tol": 0.0, "seed": 4}
    assert clone(km).get_params() == km.get_params()
    las = Lasso(lam=0.5).set_params(max_sweeps=40)
    assert las.get_params() == {"lam": 0.5, "max_sweeps": 40, "tol": 0.0}


def test_kmeans_numpy_in_numpy_out():
    data = np.random.default_rng(0).random((50, 3))
    km = KMeans(k=4, max_iter=5).fit(data)
    assert isinstance(km.labels_, np.ndarray) and km.labels_.shape == (50,)
    assert km.cluster_centers_.shape == (4, 3)
    assert len(km.inertia_trace_) == km.n_iter_ == 5
    np.testing.assert_array_equal(km.predict(data), km.labels_)
    np.testing.assert_array_equal(KMeans(k=4, max_iter=5).fit_predict(data), km.labels_)


def test_kmeans_dndarray_in_dndarray_out():
    data = np.random.default_rng(1).random((40, 2))

    def prog(c):
        x = dnd.array(data, split=1, comm=c)
        km = KMeans(k=3, max_iter=4).fit(x)
        labels = km.predict(x)
        return type(labels).__name__, labels.split, labels.numpy(), km.cluster_centers_

    ref = KMeans(k=3, max_iter=4).fit(data)
    for kind, split, labels, centers in run_loopback(prog, 3):
        assert (kind, split) == ("DndArray", 0)
        np.testing.assert_array_equal(labels, ref.labels_)
        np.testing.assert_allclose(centers, ref.cluster_centers_, rtol=1e-12)


def test_not_fitted():
    with pytest.raises(NotFittedError):
        KMeans().predict(np.zeros((2, 2)))
    with pytest.raises(NotFittedError):
        Lasso().predict(np.zeros((2, 2)))


def test_feature_mismatch():
    km = KMeans(k=2, max_iter=2).fit(np.random.default_rng(0).random((10, 3)))
    with pytest.raises(ValueError, match="features"):
        km.predict(np.zeros((2, 4)))
    x, y = regression_data()
    las = Lasso(lam=0.1).fit(x, y)
    with pytest.raises(ValueError, match="features"):
        las.predict(x[:, :3])


def test_input_validation():
    with pytest.raises(ValueError):
        KMeans(k=2).fit(np.array([[1.0, np.nan], [0.0, 0.0]]))
    with pytest.raises(ValueError):
        KMeans(k=2).fit(np.zeros(5))
    x, y = regression_data()
    with pytest.raises(ValueError):
        Lasso().fit(x, y[:-1])


def test_lasso_numpy_roundtrip_and_score():
    x, y = regression_data(seed=3)
    las = Lasso(lam=0.0, max_sweeps=300).fit(x, y)
    pred = las.predict(x)
    assert isinstance(pred, np.ndarray)
    assert las.score(x, y) == pytest.approx(1.0, abs=1e-9)
    assert las.coef_.shape == (5,) and las.n_features_in_ == 5
    assert len(las.objective_trace_) == las.n_iter_


def test_lasso_dndarray_split_invariant():
    x, y = regression_data(n=60, seed=4)
    ref = Lasso(lam=2.0).fit(x, y).coef_

    def prog(c):
        las = Lasso(lam=2.0).fit(dnd.array(x, split=0, comm=c), dnd.array(y, split=0, comm=c))
        return las.coef_, type(las.predict(dnd.array(x, split=0, comm=c))).__name__

    for coef, kind in run_loopback(prog, 4):
        np.testing.assert_allclose(coef, ref, rtol=1e-12, atol=1e-15)
        assert kind == "DndArray"
