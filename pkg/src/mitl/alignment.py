"""Whitening-based domain alignment of raw EEG trials.

Both methods whiten every trial of a domain by ``R^{-1/2}``, where ``R`` is
either the arithmetic mean (``"ea"``) or the affine-invariant Riemannian mean
(``"ps"``) of the domain's spatial covariances ``X X^T``.
"""
from dataclasses import dataclass, replace

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .exceptions import (
    DegenerateReference,
    DimensionMismatch,
    EmptyOnlineReference,
    MitlError,
)
from .linalg import regularize, riemannian_mean, spd_inv_sqrt, sym_eig

__all__ = [
    "AlignmentReference",
    "trial_covariances",
    "ea_reference",
    "ps_reference",
    "reference_from_covariances",
    "align",
    "align_covariances",
    "domain_align",
    "Aligner",
]

# ridge applied only to numerically singular inputs; an unconditional ridge
# biases ill-conditioned references away from exact whitening
REF_EPS = 1e-10
# per-trial covariances of short trials are spread far apart on the manifold,
# where the unit-step Karcher iteration contracts slowly
PS_MAX_ITER = 500
METHODS = ("ea", "ps")


@dataclass(frozen=True)
class AlignmentReference:
    method: str
    reference: np.ndarray
    whitener: np.ndarray
    n_trials_used: int


def _as_trials(trials):
    X = np.asarray(trials, dtype=float)
    if X.ndim == 2:
        X = X[np.newaxis]
    if X.ndim != 3:
        raise ValueError(f"trials must be (n_trials, channels, samples), got {X.shape}")
    return X


def trial_covariances(trials):
    """Unnormalized spatial covariances ``X_n X_n^T``, shape ``(n, c, c)``."""
    X = _as_trials(trials)
    return np.einsum("nct,ndt->ncd", X, X)


def reference_from_covariances(covs, method="ea", max_iter=PS_MAX_ITER):
    """Build an :class:`AlignmentReference` from stacked covariances.

    ``max_iter`` bounds the Karcher iteration of the ``"ps"`` reference.
    """
    covs = np.asarray(covs, dtype=float)
    if covs.ndim != 3 or covs.shape[0] == 0:
        raise ValueError("need at least one (c, c) covariance")
    method = method.lower()
    if method == "ea":
        mean = covs.mean(axis=0)
        ref = regularize(mean, REF_EPS) if _numerically_singular(mean) else mean
    elif method == "ps":
        # ridge all or none so the mean stays that of one consistent set
        if any(_numerically_singular(C) for C in covs):
            covs = np.stack([regularize(C, REF_EPS) for C in covs])
        try:
            ref = riemannian_mean(list(covs), max_iter=max_iter)
        except MitlError as exc:
            # ridged rank-deficient trials are too ill-conditioned for the log map
            raise DegenerateReference(f"no Riemannian reference: {exc}") from exc
    else:
        raise ValueError(f"unknown alignment method {method!r}")
    try:
        if sym_eig(ref).values.min() <= 0:
            raise DegenerateReference("reference is not positive definite")
        whitener = spd_inv_sqrt(ref)
    except MitlError as exc:
        if isinstance(exc, DegenerateReference):
            raise
        raise DegenerateReference(str(exc)) from exc
    return AlignmentReference(method, ref, whitener, int(covs.shape[0]))


def _numerically_singular(S):
    vals = np.linalg.eigvalsh(S)
    return vals[0] <= S.shape[0] * np.finfo(float).eps * vals[-1]


def ea_reference(trials):
    """Arithmetic-mean reference over all given trials."""
    return reference_from_covariances(trial_covariances(trials), "ea")


def ps_reference(trials):
    """Riemannian-mean reference over the (regularized) trial covariances."""
    return reference_from_covariances(trial_covariances(trials), "ps")


def align(trials, ref):
    """Left-multiply every trial by the reference whitener."""
    X = _as_trials(trials)
    if X.shape[1] != ref.whitener.shape[0]:
        raise DimensionMismatch(
            f"trials have {X.shape[1]} channels, reference has {ref.whitener.shape[0]}")
    return np.einsum("cd,ndt->nct", ref.whitener, X)


def align_covariances(covs, ref):
    """Covariance-space equivalent of :func:`align`: ``W C_n W^T``."""
    covs = np.asarray(covs, dtype=float)
    W = ref.whitener
    if covs.shape[-1] != W.shape[0]:
        raise DimensionMismatch("covariance and reference dimensions differ")
    return W @ covs @ W.T


def domain_align(domain, method="ea", mode="offline", labeled_indices=None):
    """Return an aligned copy of a :class:`~mitl.data.TrialSet`.

    In ``"offline"`` mode the reference uses every trial of the domain. In
    ``"online"`` mode only ``labeled_indices`` contribute (defaulting to the
    labeled trials of the set), which must be non-empty. The reference is
    stored on the returned set as ``alignment``.
    """
    if mode == "offline":
        used = np.arange(domain.n_trials)
    elif mode == "online":
        if labeled_indices is None:
            labeled_indices = np.flatnonzero(domain.labeled_mask)
        used = np.asarray(labeled_indices, dtype=int)
        if used.size == 0:
            raise EmptyOnlineReference("online alignment needs at least one labeled trial")
    else:
        raise ValueError(f"unknown mode {mode!r}")
    covs = trial_covariances(domain.X[used])
    ref = reference_from_covariances(covs, method)
    return replace(domain, X=align(domain.X, ref), alignment=ref)


class Aligner(TransformerMixin, BaseEstimator):
    """Domain whitening as a transformer over ``(n_trials, c, t)`` arrays.

    ``fit`` estimates the reference on the trials of one domain; ``transform``
    whitens any trials with it. For per-domain alignment call ``fit_transform``
    once per subject/session.

    Parameters
    ----------
    method : {'ea', 'ps'}
        Arithmetic (``'ea'``) or Riemannian (``'ps'``) mean reference.
    """

    def __init__(self, method="ea"):
        self.method = method

    def fit(self, X, y=None):
        X = _as_trials(X)
        if not np.all(np.isfinite(X)):
            raise ValueError("input contains NaN or inf")
        if self.method not in METHODS:
            raise ValueError(f"method must be one of {METHODS}")
        self.reference_ = reference_from_covariances(trial_covariances(X), self.method)
        self.n_features_in_ = X.shape[1]
        return self

    def transform(self, X):
        check_is_fitted(self, "reference_")
        return align(X, self.reference_)
