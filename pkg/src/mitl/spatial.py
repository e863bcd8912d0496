"""Common spatial patterns and its source-domain transfer variants.

Class-mean covariances are averages of trace-normalized trial covariances.
Filters for class ``k`` are the leading generalized eigenvectors of
``(C^k, C^{-k})``, found through the symmetric whitened problem
``C^{-k,-1/2} C^k C^{-k,-1/2}``. Each filter is sign-normalized so that its
largest-magnitude entry is positive.

All three fitters route through the same class sums, so ``rcsp_fit`` with
``beta=1, gamma=0`` reproduces ``csp_fit`` and ``beta=0.5, gamma=0``
reproduces ``ccsp_fit`` bit for bit.
"""
from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .alignment import trial_covariances
from .exceptions import (
    DimensionMismatch,
    EmptyClass,
    InvalidParam,
    MitlError,
    RankDeficient,
    ZeroVariance,
)
from .linalg import regularize, spd_inv_sqrt, sym_eig

__all__ = [
    "FilterBank",
    "class_mean_cov",
    "csp_fit",
    "ccsp_fit",
    "rcsp_fit",
    "extract_features",
    "fit_filters_from_covs",
    "features_from_covs",
    "CSP",
]

COV_EPS = 1e-10
CLASSES = (-1, 1)


@dataclass(frozen=True)
class FilterBank:
    """Spatial filters ``[W_{-1} W_{+1}]`` of shape ``(c, 2f)``.

    ``eigenvalues`` holds the generalized eigenvalue of every column, in the
    same order as ``filters``.
    """

    filters: np.ndarray
    f: int
    method: str
    params: dict = field(default_factory=dict)
    eigenvalues: np.ndarray = None


def _normalized(covs):
    tr = np.trace(covs, axis1=1, axis2=2)
    if np.any(tr <= 0):
        raise ZeroVariance("a trial has zero total power")
    return covs / tr[:, None, None]


def _class_sum(ncovs, labels, k):
    mask = np.asarray(labels) == k
    if not mask.any():
        return np.zeros(ncovs.shape[1:]), 0
    return ncovs[mask].sum(axis=0), int(mask.sum())


def class_mean_cov(trials, labels, k, normalize=True, eps=COV_EPS):
    """Regularized mean covariance of the class-``k`` trials."""
    covs = trial_covariances(trials)
    if normalize:
        covs = _normalized(covs)
    S, n = _class_sum(covs, labels, k)
    if n == 0:
        raise EmptyClass(f"no trials of class {k}")
    return regularize(S / n, eps)


def _leading_filters(C_k, C_other, f):
    try:
        P = spd_inv_sqrt(C_other)
    except MitlError as exc:
        raise RankDeficient(str(exc)) from exc
    eig = sym_eig(P @ C_k @ P)
    W = P @ eig.vectors[:, :f]
    idx = np.argmax(np.abs(W), axis=0)
    W = W * np.sign(W[idx, np.arange(W.shape[1])])
    return W, eig.values[:f]


def _filters_from_class_covs(covs, f, method, params):
    c = covs[1].shape[0]
    if not 1 <= f or 2 * f > c:
        raise InvalidParam(f"need 1 <= f and 2f <= channels ({c}), got f={f}")
    for k in CLASSES:
        if sym_eig(covs[k]).values.min() <= 0:
            raise RankDeficient(f"class {k} mean covariance is not positive definite")
    w_neg, l_neg = _leading_filters(covs[-1], covs[1], f)
    w_pos, l_pos = _leading_filters(covs[1], covs[-1], f)
    return FilterBank(np.hstack([w_neg, w_pos]), f, method, params,
                      np.concatenate([l_neg, l_pos]))


def fit_filters_from_covs(target_covs, target_labels, source_covs=None, source_labels=None,
                          f=3, method="csp", beta=0.1, gamma=0.1, normalize=True):
    """Fit a :class:`FilterBank` from unnormalized trial covariances.

    Each trial covariance is divided by its trace before averaging unless
    ``normalize`` is false.

    ``method`` selects which trials enter the class means:

    - ``"csp"``: target only
    - ``"ccsp"``: target and source pooled with equal per-trial weight
    - ``"rcsp"``: per-class mix ``(beta N_t C_t + (1-beta) N_s C_s) /
      (beta N_t + (1-beta) N_s)`` shrunk by ``gamma`` towards
      ``tr(C) / c * I``; ``N`` are the per-class trial counts
    """
    method = method.lower()
    target_covs = np.asarray(target_covs, dtype=float)
    source_covs = None if source_covs is None else np.asarray(source_covs, dtype=float)
    sized = [a for a in (target_covs, source_covs) if a is not None and a.size]
    if not sized:
        raise EmptyClass("no labeled trials at all")
    c = sized[0].shape[-1]

    def prepared(covs, labels):
        if covs is None or covs.size == 0:
            return np.zeros((0, c, c)), np.zeros(0, dtype=int)
        if covs.shape[-1] != c:
            raise DimensionMismatch("source and target channel counts differ")
        return (_normalized(covs) if normalize else covs), np.asarray(labels)

    t_norm, target_labels = prepared(target_covs, target_labels)
    s_norm, source_labels = prepared(source_covs, source_labels)
    params = {}
    if method == "rcsp":
        if not (0 <= beta <= 1 and 0 <= gamma <= 1):
            raise InvalidParam(f"beta and gamma must lie in [0, 1], got {beta}, {gamma}")
        params = {"beta": beta, "gamma": gamma}

    covs = {}
    for k in CLASSES:
        S_t, n_t = _class_sum(t_norm, target_labels, k)
        if method == "csp":
            if n_t == 0:
                raise EmptyClass(f"target has no labeled trials of class {k}")
            C = S_t / n_t
        elif method == "ccsp":
            S_s, n_s = _class_sum(s_norm, source_labels, k)
            if n_t + n_s == 0:
                raise EmptyClass(f"no labeled trials of class {k}")
            C = (S_t + S_s) / (n_t + n_s)
        elif method == "rcsp":
            S_s, n_s = _class_sum(s_norm, source_labels, k)
            denom = beta * n_t + (1 - beta) * n_s
            if denom == 0:
                raise EmptyClass(f"class {k} has zero total weight")
            C = (beta * S_t + (1 - beta) * S_s) / denom
            C = (1 - gamma) * C + (gamma / c) * np.trace(C) * np.eye(c)
        else:
            raise ValueError(f"unknown spatial method {method!r}")
        covs[k] = regularize(C, COV_EPS)
    return _filters_from_class_covs(covs, f, method, params)


def csp_fit(trials, labels, f=3, normalize=True):
    """CSP filters from labeled target trials only."""
    return fit_filters_from_covs(trial_covariances(trials), labels, f=f, method="csp",
                                 normalize=normalize)


def ccsp_fit(source_trials, source_labels, target_trials, target_labels, f=3,
             normalize=True):
    """CSP on the pooled source and target labeled trials."""
    return fit_filters_from_covs(
        _covs_or_empty(target_trials), target_labels,
        _covs_or_empty(source_trials), source_labels, f=f, method="ccsp",
        normalize=normalize)


def rcsp_fit(source_trials, source_labels, target_trials, target_labels, f=3,
             beta=0.1, gamma=0.1, normalize=True):
    """Regularized CSP with source weight ``1 - beta`` and shrinkage ``gamma``."""
    return fit_filters_from_covs(
        _covs_or_empty(target_trials), target_labels,
        _covs_or_empty(source_trials), source_labels,
        f=f, method="rcsp", beta=beta, gamma=gamma, normalize=normalize)


def _covs_or_empty(trials):
    if trials is None or len(trials) == 0:
        return np.zeros((0, 0, 0))
    return trial_covariances(trials)


def features_from_covs(covs, bank):
    """Log relative variances ``log(diag(W^T C W) / tr(W^T C W))``."""
    W = bank.filters if isinstance(bank, FilterBank) else np.asarray(bank)
    covs = np.asarray(covs, dtype=float)
    if covs.shape[-1] != W.shape[0]:
        raise DimensionMismatch(
            f"trials have {covs.shape[-1]} channels, filters expect {W.shape[0]}")
    power = np.einsum("ci,ncd,di->ni", W, covs, W)
    if np.any(power == 0):
        raise ZeroVariance("a filtered component has zero variance")
    return np.log(power / power.sum(axis=1, keepdims=True))


def extract_features(trials, bank):
    """Log-variance features, one row of ``2f`` values per trial."""
    return features_from_covs(trial_covariances(trials), bank)


class CSP(TransformerMixin, BaseEstimator):
    """Spatial filtering + log-variance features as an sklearn transformer.

    ``X`` is ``(n_trials, channels, samples)``. Source-domain trials for the
    ``'ccsp'`` and ``'rcsp'`` methods are passed to :meth:`fit` as keyword
    arguments.

    Parameters
    ----------
    n_filters : int
        Filters per class ``f``; features have length ``2f``.
    method : {'csp', 'ccsp', 'rcsp'}
    beta, gamma : float
        RCSP target weight and identity shrinkage.
    normalize : bool
        Trace-normalize trial covariances before averaging.
    """

    def __init__(self, n_filters=3, method="csp", beta=0.1, gamma=0.1, normalize=True):
        self.n_filters = n_filters
        self.method = method
        self.beta = beta
        self.gamma = gamma
        self.normalize = normalize

    def fit(self, X, y, X_source=None, y_source=None):
        X = np.asarray(X, dtype=float)
        y = np.asarray(y)
        if X.ndim != 3 or X.shape[0] != y.shape[0]:
            raise ValueError("X must be (n_trials, channels, samples) matching y")
        src = None if X_source is None else trial_covariances(X_source)
        self.bank_ = fit_filters_from_covs(
            trial_covariances(X), y, src, y_source, f=self.n_filters,
            method=self.method, beta=self.beta, gamma=self.gamma, normalize=self.normalize)
        self.filters_ = self.bank_.filters
        self.n_features_in_ = X.shape[1]
        return self

    def transform(self, X):
        check_is_fitted(self, "bank_")
        return extract_features(X, self.bank_)
