"""Positive definite dispersion matrices and conditional decompositions.

All densities in the package evaluate quadratic forms v' Sigma^-1 v
through a cached Cholesky factor; nothing ever inverts Sigma directly.
The Gibbs sweeps additionally need, for every coordinate k, the
regression of coordinate k on the rest; ``ConditionalSlices`` precomputes
those once per matrix.
"""

from __future__ import annotations

import numpy as np
from scipy import linalg as _sla

__all__ = ["PdMatrix", "ConditionalSlices", "conditional_slice", "NotPositiveDefiniteError"]


class NotPositiveDefiniteError(ValueError):
    """Raised when a dispersion matrix is unusable (asymmetric, indefinite, near-singular)."""


class PdMatrix:
    """A symmetric positive definite matrix with its Cholesky factor.

    Rejects asymmetry beyond 1e-12 relative, non positive definite
    matrices, and near-singular ones whose Cholesky pivot ratio falls
    below 1e-10.
    """

    def __init__(self, matrix):
        mat = np.array(matrix, dtype=float)
        if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
            raise NotPositiveDefiniteError("dispersion must be a square matrix")
        scale = np.max(np.abs(mat))
        if not np.isfinite(mat).all() or scale == 0.0:
            raise NotPositiveDefiniteError("dispersion entries must be finite and nonzero")
        if np.max(np.abs(mat - mat.T)) > 1e-12 * scale:
            raise NotPositiveDefiniteError("dispersion must be symmetric to 1e-12 relative")
        mat = 0.5 * (mat + mat.T)
        try:
            chol = np.linalg.cholesky(mat)
        except np.linalg.LinAlgError as exc:
            raise NotPositiveDefiniteError("dispersion is not positive definite") from exc
        pivots = np.diag(chol)
        if pivots.min() < 1e-10 * pivots.max():
            raise NotPositiveDefiniteError("dispersion is numerically singular")
        mat.flags.writeable = False
        chol.flags.writeable = False
        self.mat = mat
        self.chol = chol
        self.dim = mat.shape[0]
        self.log_det = 2.0 * float(np.sum(np.log(pivots)))

    def whiten(self, v: np.ndarray) -> np.ndarray:
        """Solve L z = v' rows, so that ||z||^2 = v' Sigma^-1 v."""
        v = np.asarray(v, dtype=float)
        if v.ndim == 1:
            return _sla.solve_triangular(self.chol, v, lower=True)
        return _sla.solve_triangular(self.chol, v.T, lower=True).T

    def quad_form(self, v) -> np.ndarray | float:
        """v' Sigma^-1 v for a vector (p,) or rowwise for (n, p)."""
        z = self.whiten(v)
        if z.ndim == 1:
            return float(z @ z)
        return np.einsum("ij,ij->i", z, z)

    def solve(self, v) -> np.ndarray:
        """Sigma^-1 v via two triangular solves."""
        v = np.asarray(v, dtype=float)
        z = _sla.solve_triangular(self.chol, v, lower=True)
        return _sla.solve_triangular(self.chol.T, z, lower=False)

    def submatrix(self, idx) -> "PdMatrix":
        idx = np.asarray(idx, dtype=int)
        return PdMatrix(self.mat[np.ix_(idx, idx)])

    def __repr__(self):
        return f"PdMatrix(dim={self.dim})"


class _CoordinateSlice:
    """Per-coordinate regression data used by the Gibbs sweep."""

    __slots__ = ("coef", "sigma2_cond", "chol_inv_rest")

    def __init__(self, coef, sigma2_cond, chol_inv_rest):
        self.coef = coef
        self.sigma2_cond = sigma2_cond
        self.chol_inv_rest = chol_inv_rest


class ConditionalSlices:
    """All single-coordinate conditional decompositions of one matrix.

    For each k this stores the regression coefficients
    b_k = Sigma_{k,-k} Sigma_{-k,-k}^{-1}, the conditional variance
    sigma_{k.-k}^2 = sigma_kk - b_k Sigma_{-k,k}, and the inverse Cholesky
    factor of Sigma_{-k,-k} used to evaluate the residual quadratic form.
    """

    def __init__(self, sigma: PdMatrix):
        self.sigma = sigma
        p = sigma.dim
        self.slices = []
        for k in range(p):
            rest = [j for j in range(p) if j != k]
            if not rest:
                self.slices.append(_CoordinateSlice(np.zeros(0), float(sigma.mat[0, 0]), np.zeros((0, 0))))
                continue
            sub = sigma.mat[np.ix_(rest, rest)]
            cross = sigma.mat[rest, k]
            try:
                chol_rest = np.linalg.cholesky(sub)
            except np.linalg.LinAlgError as exc:
                raise NotPositiveDefiniteError("principal submatrix is not positive definite") from exc
            coef = _sla.cho_solve((chol_rest, True), cross)
            sigma2 = float(sigma.mat[k, k] - cross @ coef)
            if sigma2 <= 0.0:
                raise NotPositiveDefiniteError("conditional variance is not positive")
            chol_inv = _sla.solve_triangular(chol_rest, np.eye(len(rest)), lower=True)
            self.slices.append(_CoordinateSlice(coef, sigma2, chol_inv))

    def conditional(self, mu: np.ndarray, w: np.ndarray, k: int):
        """Conditional mean/variance of coordinate k and the residual form q(w_{-k})."""
        p = self.sigma.dim
        sl = self.slices[k]
        if p == 1:
            return float(mu[0]), sl.sigma2_cond, 0.0
        rest = np.concatenate((w[:k], w[k + 1 :])) - np.concatenate((mu[:k], mu[k + 1 :]))
        mu_cond = float(mu[k] + sl.coef @ rest)
        z = sl.chol_inv_rest @ rest
        return mu_cond, sl.sigma2_cond, float(z @ z)


def conditional_slice(sigma: PdMatrix, mu, w, k: int):
    """One-shot (mu_{k.-k}, sigma^2_{k.-k}, q(w_{-k})) for coordinate k."""
    mu = np.asarray(mu, dtype=float)
    w = np.asarray(w, dtype=float)
    if not 0 <= k < sigma.dim:
        raise IndexError("coordinate index out of range")
    if mu.shape != (sigma.dim,) or w.shape != (sigma.dim,):
        raise ValueError("mu and w must be vectors of the matrix dimension")
    return ConditionalSlices(sigma).conditional(mu, w, k)
