"""Binary classifiers: LDA, pooled LDA and weighted adaptation regularization.

The adaptation-regularized classifier minimizes, over ``f = sum_i alpha_i
K(x_i, .)`` and with squared loss::

    sum_source w_s (y - f)^2 + w_t sum_target_labeled w_t^n (y - f)^2
      + lambda1 ||f||_K^2 + lambda2 f^T M0 f + lambda3 f^T M1 f

``M0`` penalizes the gap between the source and target means of ``f``;
``M1`` does the same per class, using pseudo-labels on unlabeled target rows.
Setting the gradient to zero gives the linear system::

    ((E + lambda2 M0 + lambda3 M1) K + lambda1 I) alpha = E y

with ``E`` the diagonal of per-sample loss weights.
"""
from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import cdist, pdist
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .exceptions import DimensionMismatch, EmptyClass, NoLabeledData, SingularSystem

__all__ = [
    "LdaModel",
    "WarParams",
    "WarModel",
    "lda_fit",
    "lda_predict",
    "clda_fit",
    "kernel_matrix",
    "median_bandwidth",
    "balance_weights",
    "mmd_matrices",
    "war_objective",
    "war_fit",
    "owar_fit",
    "war_predict",
    "LDA",
    "WAR",
]

RESIDUAL_TOL = 1e-8


def _sign(v):
    return np.where(v >= 0, 1, -1)


# ---------------------------------------------------------------------------
# LDA

@dataclass(frozen=True)
class LdaModel:
    w: np.ndarray
    theta: float
    cov: np.ndarray

    def decision_function(self, X):
        return np.asarray(X, dtype=float) @ self.w - self.theta


def lda_fit(X, y, ridge=1e-6):
    """Two-class LDA with a pooled within-class covariance.

    ``w = (S + ridge * tr(S)/d * I)^{-1} (mean_+ - mean_-)`` and
    ``theta = w . (mean_+ + mean_-) / 2`` where ``S`` is the pooled
    within-class scatter divided by the sample count ``n``. Singular systems fall back to
    the minimum-norm least-squares solution.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y)
    if X.ndim != 2 or X.shape[0] != y.shape[0]:
        raise ValueError("X must be (n_samples, n_features) matching y")
    pos, neg = X[y == 1], X[y == -1]
    if len(pos) == 0 or len(neg) == 0:
        raise EmptyClass("LDA needs labeled samples of both classes")
    mu_pos, mu_neg = pos.mean(axis=0), neg.mean(axis=0)
    centered = np.vstack([pos - mu_pos, neg - mu_neg])
    d = X.shape[1]
    cov = centered.T @ centered / len(X)
    A = cov + ridge * (np.trace(cov) / d) * np.eye(d)
    diff = mu_pos - mu_neg
    try:
        w = np.linalg.solve(A, diff)
        if not np.all(np.isfinite(w)):
            raise np.linalg.LinAlgError
    except np.linalg.LinAlgError:
        w = np.linalg.lstsq(A, diff, rcond=None)[0]
    theta = 0.5 * float(w @ (mu_pos + mu_neg))
    return LdaModel(w, theta, cov)


def lda_predict(model, X):
    """``sign(w x - theta)`` with ties mapped to +1."""
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[1] != model.w.shape[0]:
        raise DimensionMismatch(f"expected {model.w.shape[0]} features")
    return _sign(model.decision_function(X))


def _pool(source_X, source_y, target_X, target_y):
    target_X = np.asarray(target_X, dtype=float)
    target_y = np.asarray(target_y).reshape(-1)
    if source_X is None or len(source_X) == 0:
        return target_X, target_y
    source_X = np.asarray(source_X, dtype=float)
    if target_X.size == 0:
        return source_X, np.asarray(source_y)
    return np.vstack([target_X, source_X]), np.concatenate([target_y, source_y])


def clda_fit(source_X, source_y, target_X, target_y, ridge=1e-6):
    """LDA on target and source labeled samples pooled with equal weight."""
    X, y = _pool(source_X, source_y, target_X, target_y)
    return lda_fit(X, y, ridge=ridge)


# ---------------------------------------------------------------------------
# kernels

def median_bandwidth(X):
    d = pdist(np.asarray(X, dtype=float))
    d = d[d > 0]
    return float(np.median(d)) if d.size else 1.0


def kernel_matrix(X, Y=None, kernel="linear", bandwidth=None):
    """Gram matrix between the rows of ``X`` and ``Y``.

    ``'linear'``: ``x . y``; ``'rbf'``: ``exp(-||x - y||^2 / (2 bandwidth^2))``
    with the median pairwise distance of ``X`` when ``bandwidth`` is None.
    """
    X = np.asarray(X, dtype=float)
    Y = X if Y is None else np.asarray(Y, dtype=float)
    if X.shape[1] != Y.shape[1]:
        raise DimensionMismatch("X and Y have different feature counts")
    if kernel == "linear":
        return X @ Y.T
    if kernel == "rbf":
        sigma = median_bandwidth(X) if bandwidth is None else bandwidth
        return np.exp(-cdist(X, Y, "sqeuclidean") / (2 * sigma ** 2))
    raise ValueError(f"unknown kernel {kernel!r}")


# ---------------------------------------------------------------------------
# weighted adaptation regularization

@dataclass(frozen=True)
class WarParams:
    """Hyper-parameters of the adaptation-regularized classifier.

    ``wt`` scales the target loss; ``lambda1`` the RKHS norm, ``lambda2`` the
    marginal and ``lambda3`` the class-conditional mean discrepancy.
    ``balance`` turns on per-domain class-balancing sample weights.
    """

    wt: float = 10.0
    lambda1: float = 0.1
    lambda2: float = 10.0
    lambda3: float = 10.0
    kernel: str = "linear"
    bandwidth: float = None
    n_em_iters: int = 5
    balance: bool = True

    def __post_init__(self):
        if min(self.lambda1, self.lambda2, self.lambda3) < 0:
            raise ValueError("lambdas must be non-negative")
        if self.wt <= 0:
            raise ValueError("wt must be positive")
        if self.n_em_iters < 1:
            raise ValueError("n_em_iters must be >= 1")


@dataclass(frozen=True)
class WarModel:
    alpha: np.ndarray
    X_train: np.ndarray
    y_train: np.ndarray
    sample_weights: np.ndarray
    M0: np.ndarray
    M1: np.ndarray
    kernel: str
    bandwidth: float
    params: WarParams
    n_source: int
    n_labeled: int
    n_unlabeled: int

    def decision_function(self, X):
        K = kernel_matrix(np.asarray(X, dtype=float), self.X_train, self.kernel, self.bandwidth)
        return K @ self.alpha


def balance_weights(y):
    """``N / (2 N_k)`` for a class-``k`` sample: both classes weigh ``N / 2``."""
    y = np.asarray(y)
    w = np.zeros(y.shape[0])
    for k in (-1, 1):
        mask = y == k
        if mask.any():
            w[mask] = y.shape[0] / (2 * mask.sum())
    return w


def mmd_matrices(n_source, source_y, target_y):
    """Marginal (``M0``) and class-conditional (``M1``) discrepancy matrices.

    Rows are ordered source first, then target. With ``e`` holding
    ``1/n_src`` on source rows and ``-1/n_tgt`` on target rows, ``M0 = e e^T``
    and ``M1 = sum_k e_k e_k^T`` with ``e_k`` restricted to class ``k``.
    Both are zero when either domain is empty.
    """
    source_y = np.asarray(source_y)
    target_y = np.asarray(target_y)
    n_tgt = target_y.shape[0]
    n = n_source + n_tgt
    M0 = np.zeros((n, n))
    M1 = np.zeros((n, n))
    if n_source == 0 or n_tgt == 0:
        return M0, M1
    e = np.concatenate([np.full(n_source, 1 / n_source), np.full(n_tgt, -1 / n_tgt)])
    M0 = np.outer(e, e)
    for k in (-1, 1):
        s_mask = source_y == k
        t_mask = target_y == k
        if not s_mask.any() or not t_mask.any():
            continue
        ek = np.concatenate([s_mask / s_mask.sum(), -(t_mask / t_mask.sum())])
        M1 += np.outer(ek, ek)
    return M0, M1


def war_objective(alpha, K, E, y, M0, M1, params):
    """Value of the regularized squared-loss objective at ``alpha``."""
    f = K @ alpha
    r = y - f
    return float(np.sum(E * r ** 2) + params.lambda1 * alpha @ K @ alpha
                 + params.lambda2 * f @ M0 @ f + params.lambda3 * f @ M1 @ f)


def _solve_alpha(K, E, y, M0, M1, params):
    n = K.shape[0]
    A = (np.diag(E) + params.lambda2 * M0 + params.lambda3 * M1) @ K + params.lambda1 * np.eye(n)
    b = E * y
    try:
        alpha = np.linalg.solve(A, b)
    except np.linalg.LinAlgError as exc:
        raise SingularSystem(f"wAR system is singular: {exc}", np.inf) from exc
    residual = np.linalg.norm(A @ alpha - b) / max(np.linalg.norm(b), 1.0)
    if not np.isfinite(residual) or residual > RESIDUAL_TOL:
        cond = np.linalg.cond(A)
        raise SingularSystem(
            f"wAR system residual {residual:.2e} exceeds {RESIDUAL_TOL:g} (cond {cond:.2e})", cond)
    return alpha


def war_fit(source_X, source_y, target_X, target_y, unlabeled_X=None, params=None):
    """Fit the adaptation-regularized kernel classifier.

    Rows are ordered source, target labeled, target unlabeled. Unlabeled rows
    carry zero loss weight; their pseudo-labels, initialized from a pooled
    LDA, only enter the class-conditional discrepancy and are refined for up
    to ``params.n_em_iters`` solves (stopping early once stable).

    Parameters
    ----------
    source_X, source_y : array_like
        Labeled source samples (may be empty).
    target_X, target_y : array_like
        Labeled target samples (may be empty).
    unlabeled_X : array_like, optional
        Unlabeled target samples.
    params : WarParams

    Returns
    -------
    WarModel
    """
    params = params or WarParams()
    parts = [np.asarray(a, dtype=float) for a in (source_X, target_X, unlabeled_X)
             if a is not None and len(a)]
    if not parts:
        raise NoLabeledData("no samples supplied")
    d = parts[0].shape[1]

    def rows(a):
        return np.zeros((0, d)) if a is None or len(a) == 0 else np.asarray(a, dtype=float)

    Xs, Xl, Xu = rows(source_X), rows(target_X), rows(unlabeled_X)
    ys = np.asarray(source_y if source_y is not None else [], dtype=int).reshape(-1)
    yl = np.asarray(target_y if target_y is not None else [], dtype=int).reshape(-1)
    ns, nl, nu = len(Xs), len(Xl), len(Xu)
    if ns + nl == 0:
        raise NoLabeledData("wAR needs labeled source or target samples")
    if ys.shape[0] != ns or yl.shape[0] != nl:
        raise ValueError("labels do not match sample counts")

    X = np.vstack([Xs, Xl, Xu])
    bandwidth = params.bandwidth
    if params.kernel == "rbf" and bandwidth is None:
        bandwidth = median_bandwidth(X)
    K = kernel_matrix(X, X, params.kernel, bandwidth)

    if params.balance:
        ws, wl = balance_weights(ys), balance_weights(yl)
    else:
        ws, wl = np.ones(ns), np.ones(nl)
    E = np.concatenate([ws, params.wt * wl, np.zeros(nu)])

    if nu:
        pseudo = lda_predict(clda_fit(Xs, ys, Xl, yl), Xu)
    else:
        pseudo = np.zeros(0, dtype=int)

    for _ in range(params.n_em_iters):
        y = np.concatenate([ys, yl, pseudo]).astype(float)
        M0, M1 = mmd_matrices(ns, ys, np.concatenate([yl, pseudo]))
        alpha = _solve_alpha(K, E, y, M0, M1, params)
        if nu == 0:
            break
        updated = _sign(K[ns + nl:] @ alpha)
        if np.array_equal(updated, pseudo):
            break
        pseudo = updated

    return WarModel(alpha, X, y, E, M0, M1, params.kernel, bandwidth, params, ns, nl, nu)


def owar_fit(source_X, source_y, target_X, target_y, params=None):
    """Online variant: only labeled rows build the kernel and discrepancies."""
    return war_fit(source_X, source_y, target_X, target_y, None, params)


def war_predict(model, X):
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[1] != model.X_train.shape[1]:
        raise DimensionMismatch(f"expected {model.X_train.shape[1]} features")
    return _sign(model.decision_function(X))


# ---------------------------------------------------------------------------
# sklearn wrappers

class LDA(ClassifierMixin, BaseEstimator):
    """Linear discriminant for labels in {-1, +1}.

    Source samples given to :meth:`fit` are pooled with the target samples
    (CLDA).
    """

    def __init__(self, ridge=1e-6):
        self.ridge = ridge

    def fit(self, X, y, X_source=None, y_source=None):
        X, y = check_X_y(X, y)
        self.model_ = clda_fit(X_source, y_source, X, y, ridge=self.ridge)
        self.classes_ = np.array([-1, 1])
        self.n_features_in_ = X.shape[1]
        return self

    def decision_function(self, X):
        check_is_fitted(self, "model_")
        return self.model_.decision_function(check_array(X))

    def predict(self, X):
        check_is_fitted(self, "model_")
        return lda_predict(self.model_, check_array(X))


class WAR(ClassifierMixin, BaseEstimator):
    """Weighted adaptation regularization for labels in {-1, +1}.

    ``fit(X, y, X_source, y_source, X_unlabeled)``: ``X, y`` are the labeled
    target samples. Omitting ``X_unlabeled`` gives the online variant.
    """

    def __init__(self, wt=10.0, lambda1=0.1, lambda2=10.0, lambda3=10.0, kernel="linear",
                 bandwidth=None, n_em_iters=5, balance=True):
        self.wt = wt
        self.lambda1 = lambda1
        self.lambda2 = lambda2
        self.lambda3 = lambda3
        self.kernel = kernel
        self.bandwidth = bandwidth
        self.n_em_iters = n_em_iters
        self.balance = balance

    def fit(self, X, y, X_source=None, y_source=None, X_unlabeled=None):
        X = check_array(X, ensure_min_samples=0)
        params = WarParams(self.wt, self.lambda1, self.lambda2, self.lambda3, self.kernel,
                           self.bandwidth, self.n_em_iters, self.balance)
        self.model_ = war_fit(X_source, y_source, X, y, X_unlabeled, params)
        self.classes_ = np.array([-1, 1])
        self.n_features_in_ = self.model_.X_train.shape[1]
        return self

    def decision_function(self, X):
        check_is_fitted(self, "model_")
        return self.model_.decision_function(check_array(X))

    def predict(self, X):
        check_is_fitted(self, "model_")
        return war_predict(self.model_, check_array(X))
