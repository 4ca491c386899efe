"""Two-component Gaussian mixture over the latent plane, fit by EM."""

import json
import warnings
from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.cluster import KMeans
from sklearn.exceptions import ConvergenceWarning
from sklearn.utils.validation import check_array, check_is_fitted

from .errors import DegenerateInputError, LabelTieError, TrajphaseError

N_COMPONENTS = 2
REG_COVAR = 1e-6


class UnfittedModelError(TrajphaseError):
    pass


@dataclass
class GmmModel:
    weights: np.ndarray
    means: np.ndarray
    covariances: np.ndarray
    active_component: int = None
    log_likelihood: float = None
    n_iter: int = 0
    converged: bool = False
    ll_history: list = field(default_factory=list, repr=False)

    def permuted(self, order):
        order = list(order)
        active = None if self.active_component is None else order.index(self.active_component)
        return GmmModel(
            self.weights[order].copy(),
            self.means[order].copy(),
            self.covariances[order].copy(),
            active,
            self.log_likelihood,
            self.n_iter,
            self.converged,
            list(self.ll_history),
        )

    def to_dict(self):
        return {
            "n_components": N_COMPONENTS,
            "weights": self.weights.tolist(),
            "means": self.means.tolist(),
            "covariances": self.covariances.tolist(),
            "active_component": self.active_component,
            "log_likelihood": self.log_likelihood,
            "n_iter": self.n_iter,
            "converged": self.converged,
        }

    def to_json(self):
        return json.dumps(self.to_dict(), indent=1, sort_keys=True)

    @classmethod
    def from_dict(cls, d):
        return cls(
            np.array(d["weights"], dtype=float),
            np.array(d["means"], dtype=float),
            np.array(d["covariances"], dtype=float),
            d.get("active_component"),
            d.get("log_likelihood"),
            d.get("n_iter", 0),
            d.get("converged", False),
        )

    @classmethod
    def from_json(cls, text):
        return cls.from_dict(json.loads(text))


def _log_gaussian(X, mean, cov):
    chol = np.linalg.cholesky(cov)
    diff = np.linalg.solve(chol, (X - mean).T)
    maha = np.sum(diff**2, axis=0)
    log_det = 2.0 * np.sum(np.log(np.diag(chol)))
    return -0.5 * (maha + log_det + X.shape[1] * np.log(2.0 * np.pi))


def _logsumexp_rows(a):
    top = a.max(axis=1)
    return top + np.log(np.exp(a - top[:, None]).sum(axis=1))


def _weighted_log_prob(model, X):
    return np.column_stack(
        [
            np.log(model.weights[c]) + _log_gaussian(X, model.means[c], model.covariances[c])
            for c in range(len(model.weights))
        ]
    )


def _m_step(X, resp, reg_covar):
    nk = resp.sum(axis=0) + 10 * np.finfo(float).eps
    means = (resp.T @ X) / nk[:, None]
    covs = np.empty((len(nk), X.shape[1], X.shape[1]))
    for c in range(len(nk)):
        diff = X - means[c]
        covs[c] = (resp[:, c, None] * diff).T @ diff / nk[c]
        covs[c] = 0.5 * (covs[c] + covs[c].T)
        covs[c].flat[:: X.shape[1] + 1] += reg_covar
    return GmmModel(nk / nk.sum(), means, covs)


def _em_run(X, init_labels, max_iter, tol, reg_covar):
    resp = np.zeros((X.shape[0], N_COMPONENTS))
    resp[np.arange(X.shape[0]), init_labels] = 1.0
    model = _m_step(X, resp, reg_covar)
    history = []
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        wlp = _weighted_log_prob(model, X)
        norm = _logsumexp_rows(wlp)
        history.append(float(np.mean(norm)))
        if len(history) > 1 and abs(history[-1] - history[-2]) < tol:
            converged = True
            break
        resp = np.exp(wlp - norm[:, None])
        model = _m_step(X, resp, reg_covar)
    model.ll_history = history
    model.log_likelihood = history[-1]
    model.n_iter = it
    model.converged = converged
    return model


def fit_gmm(points, max_iter=500, tol=1e-8, restarts=10, seed=0, reg_covar=REG_COVAR):
    """Best of ``restarts`` EM runs, each started from a seeded k-means split.

    ``ll_history`` of the result holds the mean log-likelihood evaluated
    before every M-step of the winning run.
    """
    X = np.asarray(points, dtype=float)
    if X.ndim != 2 or X.shape[0] < 4:
        raise DegenerateInputError("need at least 4 points of shape (n, d)")
    if np.all(X == X[0]):
        raise DegenerateInputError("all points are identical")
    rng = np.random.default_rng(seed)
    best = None
    for _ in range(restarts):
        km_seed = int(rng.integers(2**31 - 1))
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", ConvergenceWarning)
            labels = KMeans(N_COMPONENTS, init="k-means++", n_init=1, random_state=km_seed).fit_predict(X)
        run = _em_run(X, labels, max_iter, tol, reg_covar)
        if best is None or run.log_likelihood > best.log_likelihood:
            best = run
    return best


def responsibilities(model, z):
    """Posterior component probabilities, shape ``(n, 2)`` (or ``(2,)`` for one point)."""
    if model is None or model.means is None:
        raise UnfittedModelError("mixture model is not fitted")
    Z = np.atleast_2d(np.asarray(z, dtype=float))
    wlp = _weighted_log_prob(model, Z)
    out = np.exp(wlp - _logsumexp_rows(wlp)[:, None])
    out /= out.sum(axis=1, keepdims=True)
    return out[0] if np.ndim(z) == 1 else out


def assign_active_label(model, Z, omegas, tie_tol=1e-9):
    """Mark the component that dominates the encodings at the largest ``omega``."""
    Z = np.asarray(Z, dtype=float)
    omegas = np.asarray(omegas, dtype=float)
    top = np.isclose(omegas, omegas.max())
    mean_resp = responsibilities(model, Z[top]).mean(axis=0)
    if abs(mean_resp[0] - mean_resp[1]) <= tie_tol:
        raise LabelTieError(f"components tie at omega={omegas.max()}: {mean_resp}")
    out = model.permuted([0, 1])
    out.active_component = int(np.argmax(mean_resp))
    return out


def p_active(model, z):
    if model.active_component is None:
        raise UnfittedModelError("active component has not been labelled")
    r = responsibilities(model, z)
    return r[..., model.active_component]


class PhaseMixture(BaseEstimator):
    """Scikit-learn wrapper around :func:`fit_gmm`.

    ``fit(Z, y)`` with ``y`` the control parameter of every row also labels
    the active component.
    """

    def __init__(self, max_iter=500, tol=1e-8, n_init=10, reg_covar=REG_COVAR, random_state=0):
        self.max_iter = max_iter
        self.tol = tol
        self.n_init = n_init
        self.reg_covar = reg_covar
        self.random_state = random_state

    def fit(self, Z, y=None):
        Z = check_array(Z, dtype=np.float64)
        model = fit_gmm(Z, self.max_iter, self.tol, self.n_init, self.random_state, self.reg_covar)
        if y is not None:
            model = assign_active_label(model, Z, y)
        self.model_ = model
        self.n_features_in_ = Z.shape[1]
        return self

    @property
    def means_(self):
        return self.model_.means

    @property
    def weights_(self):
        return self.model_.weights

    @property
    def covariances_(self):
        return self.model_.covariances

    def predict_proba(self, Z):
        check_is_fitted(self, "model_")
        return responsibilities(self.model_, check_array(Z, dtype=np.float64))

    def predict(self, Z):
        return np.argmax(self.predict_proba(Z), axis=1)

    def p_active(self, Z):
        check_is_fitted(self, "model_")
        return p_active(self.model_, check_array(Z, dtype=np.float64))

    def score(self, Z, y=None):
        check_is_fitted(self, "model_")
        wlp = _weighted_log_prob(self.model_, check_array(Z, dtype=np.float64))
        return float(np.mean(_logsumexp_rows(wlp)))
