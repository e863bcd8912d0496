"""Symmetric / SPD matrix kernels and affine-invariant Riemannian geometry.

Every eigen-solver here works on the explicitly symmetrized input
``(S + S.T) / 2`` so that round-off asymmetry never leaks into the result.
"""
from dataclasses import dataclass

import numpy as np

from .exceptions import (
    AllZeroSpectrum,
    DimensionMismatch,
    NoConvergence,
    NonFinite,
    NonPositiveDefinite,
    NonSymmetric,
)

__all__ = [
    "EigenPair",
    "sym_eig",
    "spd_inv_sqrt",
    "spd_sqrt",
    "spd_log",
    "spd_exp",
    "riemannian_distance",
    "riemannian_mean",
    "karcher_residual",
    "regularize",
    "SYM_TOL",
]

SYM_TOL = 1e-10
# relative gap below which two eigenvalues count as tied
_TIE_TOL = 1e-12


@dataclass(frozen=True)
class EigenPair:
    """Eigen-decomposition of a symmetric matrix.

    ``values`` are sorted in descending order and ``vectors[:, i]`` is the
    unit eigenvector belonging to ``values[i]``.
    """

    values: np.ndarray
    vectors: np.ndarray


def _check_square(S):
    S = np.asarray(S, dtype=float)
    if S.ndim != 2 or S.shape[0] != S.shape[1]:
        raise DimensionMismatch(f"expected a square matrix, got shape {S.shape}")
    if not np.all(np.isfinite(S)):
        raise NonFinite("matrix contains NaN or inf")
    return S


def _symmetrize(S, tol=SYM_TOL):
    S = _check_square(S)
    norm = np.linalg.norm(S)
    if norm > 0 and np.linalg.norm(S - S.T) > tol * norm:
        raise NonSymmetric(
            f"relative asymmetry {np.linalg.norm(S - S.T) / norm:.3e} exceeds {tol:g}"
        )
    return (S + S.T) / 2


def _descending_order(vals):
    """Descending order of ``vals`` (ascending eigh output), ties by index."""
    order = np.argsort(-vals, kind="stable")
    scale = max(np.max(np.abs(vals)), np.finfo(float).tiny)
    out = []
    group = [order[0]]
    for i in order[1:]:
        if vals[group[0]] - vals[i] <= _TIE_TOL * scale:
            group.append(i)
        else:
            out.extend(sorted(group))
            group = [i]
    out.extend(sorted(group))
    return np.array(out, dtype=int)


def sym_eig(S):
    """Eigen-decomposition of a symmetric matrix with descending eigenvalues.

    Eigenvalues that agree to a relative 1e-12 are treated as tied and keep
    the order in which LAPACK returned them.

    Parameters
    ----------
    S : (c, c) array_like
        Symmetric matrix.

    Returns
    -------
    EigenPair
    """
    S = _symmetrize(S)
    vals, vecs = np.linalg.eigh(S)
    order = _descending_order(vals)
    return EigenPair(values=vals[order], vectors=vecs[:, order])


def _eig_function(S, fn):
    eig = sym_eig(S)
    return (eig.vectors * fn(eig.values)) @ eig.vectors.T


def _require_pd(S, what):
    eig = sym_eig(S)
    if eig.values.min() <= 0:
        raise NonPositiveDefinite(
            f"{what} requires a positive-definite matrix (min eigenvalue {eig.values.min():.3e})"
        )
    return eig


def spd_inv_sqrt(S, eps=1e-10):
    """Inverse square root with an eigenvalue floor of ``eps * max eigenvalue``."""
    if eps < 0:
        raise ValueError("eps must be non-negative")
    eig = sym_eig(S)
    lmax = eig.values.max()
    if lmax <= 0:
        raise AllZeroSpectrum("largest eigenvalue is not positive")
    lam = np.maximum(eig.values, eps * lmax)
    return (eig.vectors / np.sqrt(lam)) @ eig.vectors.T


def spd_sqrt(S):
    eig = _require_pd(S, "spd_sqrt")
    return (eig.vectors * np.sqrt(eig.values)) @ eig.vectors.T


def spd_log(S):
    eig = _require_pd(S, "spd_log")
    return (eig.vectors * np.log(eig.values)) @ eig.vectors.T


def spd_exp(S):
    """Matrix exponential of a symmetric matrix (always SPD)."""
    return _eig_function(S, np.exp)


def _check_pair(R1, R2):
    R1 = _check_square(R1)
    R2 = _check_square(R2)
    if R1.shape != R2.shape:
        raise DimensionMismatch(f"shapes differ: {R1.shape} vs {R2.shape}")
    return R1, R2


def riemannian_distance(R1, R2):
    """Affine-invariant distance ``sqrt(sum log^2 eig(R1^-1 R2))``.

    The eigenvalues of ``R1^{-1} R2`` are obtained from the congruent
    symmetric matrix ``R1^{-1/2} R2 R1^{-1/2}``.
    """
    R1, R2 = _check_pair(R1, R2)
    eig1 = _require_pd(R1, "riemannian_distance")
    _require_pd(R2, "riemannian_distance")
    P = (eig1.vectors / np.sqrt(eig1.values)) @ eig1.vectors.T
    lam = sym_eig(_sym(P @ R2 @ P)).values
    return float(np.sqrt(np.sum(np.log(lam) ** 2)))


def _tangent_mean(M, Rs):
    eig = sym_eig(M)
    isq = (eig.vectors / np.sqrt(eig.values)) @ eig.vectors.T
    sq = (eig.vectors * np.sqrt(eig.values)) @ eig.vectors.T
    T = np.mean([spd_log(_sym(isq @ R @ isq)) for R in Rs], axis=0)
    return _sym(T), sq


def _sym(S):
    # products of symmetric factors drift by roundoff; tangent means near
    # convergence are tiny, so the relative check would misfire
    return (S + S.T) / 2


def karcher_residual(M, Rs):
    """Frobenius norm of the mean log-map of ``Rs`` at ``M`` (zero at the mean)."""
    T, _ = _tangent_mean(_symmetrize(M), [_symmetrize(R) for R in Rs])
    return float(np.linalg.norm(T))


def riemannian_mean(Rs, tol=1e-8, max_iter=50):
    """Karcher (Frechet) mean of SPD matrices under the affine-invariant metric.

    Fixed point iteration started from the arithmetic mean::

        M <- M^{1/2} exp(s * mean_n log(M^{-1/2} R_n M^{-1/2})) M^{1/2}

    with step ``s = 1`` whenever that shrinks the tangent-mean residual. For
    widely spread inputs, where the unit step can diverge, ``s`` is halved
    until the residual decreases and then grows back towards 1.

    The iteration runs on the inputs congruence-whitened by their arithmetic
    mean and maps the result back. The mean and the residual are invariant
    under that change of frame, and ill-conditioned inputs lose far less
    precision in the whitened frame.

    Parameters
    ----------
    Rs : sequence of (c, c) array_like
        SPD matrices of a shared dimension.
    tol : float
        Stop once the Frobenius norm of the tangent mean drops below ``tol``.
    max_iter : int
        Maximum number of updates.

    Returns
    -------
    M : (c, c) ndarray
        The mean; its tangent-mean residual is below ``tol``.

    Raises
    ------
    NoConvergence
        If the residual is still above ``tol`` after ``max_iter`` updates.
    """
    Rs = [_symmetrize(R) for R in Rs]
    if len(Rs) == 0:
        raise ValueError("riemannian_mean needs at least one matrix")
    shape = Rs[0].shape
    for R in Rs:
        if R.shape != shape:
            raise DimensionMismatch("all matrices must share one dimension")
        _require_pd(R, "riemannian_mean")

    eig = sym_eig(np.mean(Rs, axis=0))
    P = (eig.vectors / np.sqrt(eig.values)) @ eig.vectors.T
    P_inv = (eig.vectors * np.sqrt(eig.values)) @ eig.vectors.T
    Rs = [_sym(P @ R @ P) for R in Rs]

    M = np.mean(Rs, axis=0)
    T, sq = _tangent_mean(M, Rs)
    residual = np.linalg.norm(T)
    step = 1.0
    for _ in range(max_iter):
        if residual < tol:
            return _sym(P_inv @ M @ P_inv)
        # unit step unless it fails to shrink the residual (far-spread inputs)
        while True:
            M_new = _sym(sq @ spd_exp(step * T) @ sq)
            T_new, sq_new = _tangent_mean(M_new, Rs)
            res_new = np.linalg.norm(T_new)
            if res_new < residual or step < 1e-6:
                break
            step /= 2
        M, T, sq, residual = M_new, T_new, sq_new, res_new
        step = min(1.0, 2 * step)
    if residual < tol:
        return _sym(P_inv @ M @ P_inv)
    raise NoConvergence(
        f"Karcher iteration stopped at residual {residual:.3e} after {max_iter} steps",
        residual=float(residual),
    )


def regularize(S, eps):
    """Ridge ``S + eps * (tr(S) / c) * I``."""
    S = _check_square(S)
    c = S.shape[0]
    return S + eps * (np.trace(S) / c) * np.eye(c)
