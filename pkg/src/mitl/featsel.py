"""ReliefF feature weighting for binary labels and its pooled-domain variant."""
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.feature_selection import SelectorMixin
from sklearn.utils.validation import check_is_fitted, check_X_y

from .exceptions import InvalidM, TooFewSamples

__all__ = ["FeatureWeights", "relieff", "crelieff", "select_top", "ReliefF"]


@dataclass(frozen=True)
class FeatureWeights:
    weights: np.ndarray
    n_iterations: int
    k: int


def relieff(X, y, k=10, n_iter=100, seed=None, replace=True, range_normalize=True):
    """ReliefF weights for a two-class problem.

    Each of ``n_iter`` rounds draws a sample, finds its ``k`` nearest hits
    (same class, the sample itself excluded) and ``k`` nearest misses under
    the Euclidean distance on range-scaled features, and updates::

        w -= mean_j diff(hit_j)
        w += mean_j diff(miss_j)

    where ``diff`` is the per-feature absolute difference divided by that
    feature's range over ``X``. Weights are not averaged over rounds.
    Classes with fewer than ``k + 1`` (hits) or ``k`` (misses) candidates use
    all of them; a lone sample of its class has no hit term. Neighbor ties go
    to the lower sample index.

    Parameters
    ----------
    X : (n_samples, n_features) array_like
    y : (n_samples,) array_like of {-1, +1}
    k : int
        Neighbors per class.
    n_iter : int
        Number of sampled instances.
    seed : int or None
        Seed for the instance sampler.
    replace : bool
        Draw instances with replacement. Without replacement ``n_iter`` is
        capped at ``n_samples``.
    range_normalize : bool
        Divide differences by the feature range. Zero-range features always
        contribute 0.

    Returns
    -------
    FeatureWeights
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y)
    if X.ndim != 2 or X.shape[0] != y.shape[0]:
        raise ValueError("X must be (n_samples, n_features) matching y")
    classes = np.unique(y)
    if classes.size != 2:
        raise TooFewSamples("ReliefF needs labeled samples of both classes")
    if k < 1 or n_iter < 1:
        raise ValueError("k and n_iter must be positive")

    n, d = X.shape
    ranges = X.max(axis=0) - X.min(axis=0)
    if range_normalize:
        inv = np.divide(1.0, ranges, out=np.zeros(d), where=ranges > 0)
    else:
        inv = (ranges > 0).astype(float)
    Z = X * inv

    rng = np.random.default_rng(seed)
    if replace:
        picks = rng.integers(0, n, size=n_iter)
    else:
        picks = rng.permutation(n)[:n_iter]

    w = np.zeros(d)
    index = np.arange(n)
    for i in picks:
        dist = np.sqrt(np.sum((Z - Z[i]) ** 2, axis=1))
        same = index[(y == y[i]) & (index != i)]
        other = index[y != y[i]]
        hits = same[np.argsort(dist[same], kind="stable")[:k]]
        misses = other[np.argsort(dist[other], kind="stable")[:k]]
        if hits.size:
            w -= np.mean(np.abs(X[hits] - X[i]) * inv, axis=0)
        w += np.mean(np.abs(X[misses] - X[i]) * inv, axis=0)
    return FeatureWeights(w, int(len(picks)), int(k))


def crelieff(source_X, source_y, target_X, target_y, k=10, n_iter=100, seed=None,
             replace=True, range_normalize=True):
    """ReliefF over target and source labeled samples pooled (target first)."""
    target_X = np.asarray(target_X, dtype=float)
    if source_X is None or len(source_X) == 0:
        X, y = target_X, np.asarray(target_y)
    else:
        X = np.vstack([target_X.reshape(-1, np.shape(source_X)[1]), source_X])
        y = np.concatenate([np.asarray(target_y).reshape(-1), source_y])
    return relieff(X, y, k=k, n_iter=n_iter, seed=seed, replace=replace,
                   range_normalize=range_normalize)


def select_top(weights, m):
    """Indices of the ``m`` largest weights, ascending; ties favor lower index."""
    w = weights.weights if isinstance(weights, FeatureWeights) else np.asarray(weights)
    if not 1 <= m <= w.size:
        raise InvalidM(f"m must lie in [1, {w.size}], got {m}")
    order = np.lexsort((np.arange(w.size), -w))
    return np.sort(order[:m])


class ReliefF(SelectorMixin, BaseEstimator):
    """Select the ``n_features_to_select`` best ReliefF features.

    Passing ``X_source``/``y_source`` to :meth:`fit` turns it into the pooled
    (CReliefF) variant.
    """

    def __init__(self, n_features_to_select=6, k=10, n_iter=100, random_state=None):
        self.n_features_to_select = n_features_to_select
        self.k = k
        self.n_iter = n_iter
        self.random_state = random_state

    def fit(self, X, y, X_source=None, y_source=None):
        X, y = check_X_y(X, y)
        self.feature_weights_ = crelieff(X_source, y_source, X, y, k=self.k,
                                         n_iter=self.n_iter, seed=self.random_state)
        self.support_ = np.zeros(X.shape[1], dtype=bool)
        self.support_[select_top(self.feature_weights_, self.n_features_to_select)] = True
        self.n_features_in_ = X.shape[1]
        return self

    def _get_support_mask(self):
        check_is_fitted(self, "support_")
        return self.support_
