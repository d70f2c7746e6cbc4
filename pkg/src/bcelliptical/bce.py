"""Positive multivariate distributions from power-transformed elliptical laws.

A random vector Y on (0, inf)^p belongs to the class exactly when its
coordinatewise power transform W = T_{lambda,mu}(Y) follows the elliptical
kernel g with dispersion Sigma truncated to the transform's image rectangle
R(lambda) (see the transform module):

    f(y) = g(w' Sigma^-1 w) prod_k [y_k^(lambda_k - 1) / mu_k^lambda_k] / K,
    w = T_{lambda,mu}(y),    K = int_{R(lambda)} g(w' Sigma^-1 w) dw.

lambda = 0 gives log-elliptical laws (log-normal, log-t, ...) and lambda = 1
recovers elliptical laws truncated to the positive orthant.  mu_k is the
scale (and, for lambda_k = 0, the exact median) of the k-th coordinate and
lambda_k its skewness-correcting power.

The distribution object provides

* joint density and log density;
* sampling, by Gibbs draws of W pushed through the inverse transform;
* conditionals, which stay in the class: given Y2 = y2 the remaining block
  has transformed location delta1 = T^-1_{lambda1,mu1}(m1) with
  m1 = Sigma12 Sigma22^-1 w2, dispersion D_alpha^-1 Sigma_{11.2} D_alpha^-1
  with alpha = 1 + lambda1 * m1, and the kernel shifted by w2' Sigma22^-1 w2;
* block marginals, which stay in the class when the cross block of Sigma
  vanishes (the marginal kernel integrates the shifted parent kernel over
  the dropped block's rectangle) and otherwise come back as a pointwise
  density evaluator;
* univariate marginal densities, quantiles and the quantile-based
  coefficient of variation, driven by a per-coordinate auxiliary marginal
  CDF that is tabulated once and cached on the distribution;
* Monte Carlo mixed moments E[prod Y_k^h_k] with standard errors and a
  divergence diagnostic (heavy-tailed kernels need not have moments).
"""

from __future__ import annotations

import math
import threading
import warnings
from dataclasses import dataclass
from functools import cached_property, lru_cache

import numpy as np
from scipy.optimize import brentq

from .families import Family, ShiftedFamily, slash_kernel, TabulatedSymmetricLaw
from .integrate import (
    RectangleIntegralResult,
    ToleranceNotMetError,
    rectangle_integral,
)
from .linalg import NotPositiveDefiniteError, PdMatrix
from .transform import (
    LAMBDA_ZERO_TOL,
    BoxCoxParams,
    Rectangle,
    forward,
    inverse,
    log_jacobian,
    rectangle_of,
)
from .truncated import GibbsConfig, TruncatedElliptical

__all__ = [
    "BceDistribution",
    "ConditionalBce",
    "MarginalDensity",
    "MarginalFamily",
    "MixedMomentResult",
    "MomentDivergenceWarning",
    "HypothesisViolationError",
    "QuantileAux",
    "bce_pdf",
    "bce_logpdf",
    "sample",
    "conditional",
    "marginal_block",
    "marginal_pdf_1d",
    "quantile",
    "cv_quantile",
    "mixed_moment",
]


class HypothesisViolationError(ValueError):
    """The conditional location left the image rectangle, so the conditional
    law is not a member of the transformed-elliptical class at that point."""


class MomentDivergenceWarning(RuntimeWarning):
    """A Monte Carlo moment whose running variance failed to stabilize; the
    target moment may not exist for this kernel and exponent."""


# ---------------------------------------------------------------------------
# marginal kernels of the four named families


def _split_family(family):
    if isinstance(family, ShiftedFamily):
        return family.base, family.shift
    return family, 0.0


def _pexp_radial_kernel(beta: float, d: int, shift: float = 0.0):
    """v -> S_{d-1} int_0^inf r^(d-1) exp(-(v + shift + r^2)^beta / 2) dr.

    The power-exponential kernel is not closed under marginalization, so the
    d-dimensional reduction is quadrature over the radius: panel bounds are
    crowded toward zero (where small-v mass concentrates) and the upper
    radius is cut where the integrand drops by a factor e^-80.
    """
    surf = 2.0 * math.pi ** (0.5 * d) / math.gamma(0.5 * d)
    gx, gw = np.polynomial.legendre.leggauss(8)
    grid = np.sinh(np.linspace(0.0, 4.0, 41)) / math.sinh(4.0)

    def kern(v):
        v = np.asarray(v, dtype=float)
        scalar = v.ndim == 0
        vv = np.atleast_1d(v).astype(float) + shift
        r2_hi = (vv**beta + 160.0) ** (1.0 / beta) - vv
        r_hi = math.sqrt(float(np.max(r2_hi)))
        bounds = r_hi * grid
        mid = 0.5 * (bounds[1:] + bounds[:-1])
        half = 0.5 * np.diff(bounds)
        r = (mid[:, None] + half[:, None] * gx[None, :]).ravel()
        w = (half[:, None] * gw[None, :]).ravel()
        args = vv[:, None] + r[None, :] ** 2
        vals = r ** (d - 1) * np.exp(-0.5 * args**beta)
        out = surf * (vals @ w)
        return float(out[0]) if scalar else out

    return kern


@lru_cache(maxsize=64)
def _pexp_marginal_law(beta: float, p: int, shift: float = 0.0):
    kern = _pexp_radial_kernel(beta, p - 1, shift)
    hint = max(math.sqrt(max(60.0 ** (1.0 / beta) - shift, 1.0)), 8.0)
    return TabulatedSymmetricLaw(kern, tail_hint=hint)


def _marginal_symmetric_law(family):
    """Law of one coordinate of the kernel with the others integrated over
    the whole space, or None when the family offers no such reduction."""
    base, shift = _split_family(family)
    if not isinstance(base, Family):
        return None
    if base.kind == "pexp" and base.dim >= 2:
        return _pexp_marginal_law(base.eta[0], base.dim, shift)
    return Family(base.kind, base.eta, 1).univariate_shifted(shift)


def _marginal_kernel_1d(family):
    """One-coordinate marginal kernel with its explicit constant,
    v -> int_{R^(p-1)} g(v + s's) ds, or None when unavailable."""
    base, shift = _split_family(family)
    if not isinstance(base, Family):
        return None
    p = base.dim
    d = p - 1
    if base.kind == "normal":
        c = (2.0 * math.pi) ** (0.5 * d)
        return lambda v: c * np.exp(-0.5 * (np.asarray(v, dtype=float) + shift))
    if base.kind == "t":
        tau = base.eta[0]
        c = (
            (tau * math.pi) ** (0.5 * d)
            * math.gamma(0.5 * (tau + 1.0))
            / math.gamma(0.5 * (tau + p))
        )
        return lambda v: c * (
            1.0 + (np.asarray(v, dtype=float) + shift) / tau
        ) ** (-0.5 * (tau + 1.0))
    if base.kind == "slash":
        q = base.eta[0]
        c = (2.0 * math.pi) ** (0.5 * d)
        return lambda v: c * slash_kernel(np.asarray(v, dtype=float) + shift, 1.0 + q)
    beta = base.eta[0]
    if d == 0:
        return lambda v: np.exp(-0.5 * (np.asarray(v, dtype=float) + shift) ** beta)
    return _pexp_radial_kernel(beta, d, shift)


# ---------------------------------------------------------------------------
# auxiliary marginal CDFs


class _SymmetricCdf:
    """Marginal CDF of one standardized coordinate when the remaining
    coordinates are unconstrained: the law is symmetric around zero, so
    the median and central quantiles are exact."""

    def __init__(self, law):
        self._law = law

    def cdf(self, u):
        out = self._law.cdf(np.asarray(u, dtype=float))
        return float(out) if np.ndim(out) == 0 else np.asarray(out, dtype=float)

    def ppf(self, alpha):
        alpha = np.asarray(alpha, dtype=float)
        if np.any(alpha <= 0.0) or np.any(alpha >= 1.0):
            raise ValueError("quantile level must lie in (0, 1)")
        out = self._law.ppf(alpha)
        return float(out) if np.ndim(out) == 0 else np.asarray(out, dtype=float)


_PROBE_LEVELS = np.unique(
    np.concatenate(
        [
            np.array([1e-6, 1e-5, 1e-4, 1e-3, 3e-3]),
            np.linspace(0.01, 0.99, 33),
            1.0 - np.array([3e-3, 1e-3, 1e-4, 1e-5, 1e-6]),
        ]
    )
)


class _RectangleMarginalCdf:
    """Marginal CDF of the k-th standardized coordinate of the kernel with
    the remaining coordinates confined to their rectangle sides.

    The cumulative integral of the one-coordinate marginal kernel and the
    rectangle integral over the other coordinates combine into a single
    rectangle integral over the correlation matrix whose k-th side opens up
    to the argument, so every evaluation reuses the fast integration routes.
    A quantile-spaced table built once at construction provides monotone
    brackets; inversion bisects on live evaluations inside a bracket.
    """

    def __init__(self, family, corr: PdMatrix, k: int, lower, upper, probe_nodes):
        self._family = family
        self._corr = corr
        self._k = int(k)
        self._lower = np.asarray(lower, dtype=float)
        self._upper = np.asarray(upper, dtype=float)
        self._total = self._mass(np.inf)
        if not self._total > 0.0:
            raise ValueError("rectangle mass vanishes; no marginal CDF exists")
        nodes = np.asarray(probe_nodes, dtype=float)
        nodes = np.unique(nodes[np.isfinite(nodes)])
        vals = np.array([self._cdf_scalar(u) for u in nodes])
        self.grid = nodes
        self.grid_cdf = np.maximum.accumulate(vals)

    def _rect(self, u: float) -> Rectangle:
        lo = self._lower.copy()
        up = self._upper.copy()
        lo[self._k] = -np.inf
        up[self._k] = u
        return Rectangle(tuple(lo), tuple(up))

    def _mass(self, u: float) -> float:
        try:
            res = rectangle_integral(self._family, self._corr, self._rect(u))
        except ToleranceNotMetError as exc:
            res = exc.result
        return res.value

    def _cdf_scalar(self, u: float) -> float:
        if math.isinf(u):
            return 1.0 if u > 0 else 0.0
        val = self._mass(float(u)) / self._total
        return min(max(val, 0.0), 1.0)

    def cdf(self, u):
        u = np.asarray(u, dtype=float)
        if u.ndim == 0:
            return self._cdf_scalar(float(u))
        return np.array([self._cdf_scalar(float(v)) for v in u])

    def ppf(self, alpha):
        alpha = np.asarray(alpha, dtype=float)
        if alpha.ndim == 0:
            return self._ppf_scalar(float(alpha))
        return np.array([self._ppf_scalar(float(v)) for v in alpha])

    def _ppf_scalar(self, alpha: float) -> float:
        if not 0.0 < alpha < 1.0:
            raise ValueError("quantile level must lie in (0, 1)")
        i = int(np.searchsorted(self.grid_cdf, alpha))
        if i == 0:
            lo, hi = self.grid[0] - 1.0, float(self.grid[0])
        elif i == self.grid.size:
            lo, hi = float(self.grid[-1]), self.grid[-1] + 1.0
        else:
            lo, hi = float(self.grid[i - 1]), float(self.grid[i])
        span = max(hi - lo, 1.0)
        flo = self._cdf_scalar(lo) - alpha
        for _ in range(80):
            if flo <= 0.0:
                break
            lo -= span
            span *= 2.0
            flo = self._cdf_scalar(lo) - alpha
        else:
            raise RuntimeError("failed to bracket the quantile from below")
        if flo == 0.0:
            return lo
        span = max(hi - lo, 1.0)
        fhi = self._cdf_scalar(hi) - alpha
        for _ in range(80):
            if fhi >= 0.0:
                break
            hi += span
            span *= 2.0
            fhi = self._cdf_scalar(hi) - alpha
        else:
            raise RuntimeError("failed to bracket the quantile from above")
        if fhi == 0.0:
            return hi
        return float(
            brentq(lambda t: self._cdf_scalar(t) - alpha, lo, hi, xtol=1e-11)
        )


def _spectral_inv_sqrt(mat: np.ndarray) -> np.ndarray:
    """Symmetric inverse square root through the eigendecomposition."""
    vals, vecs = np.linalg.eigh(0.5 * (mat + mat.T))
    if vals.min() <= 0.0:
        raise NotPositiveDefiniteError("matrix has nonpositive eigenvalues")
    return (vecs / np.sqrt(vals)) @ vecs.T


@dataclass(frozen=True, eq=False)
class QuantileAux:
    """Per-coordinate marginal machinery, built once and cached.

    ``delta_diag`` holds the scale roots sqrt(sigma_jj).  ``omega_k`` is the
    symmetric (spectral) inverse square root of the dispersion Schur
    complement times the remaining scale roots and ``upsilon_k`` the induced
    cross-coupling row, so the marginal kernel of the standardized k-th
    coordinate u = w_k / sqrt(sigma_kk) is

        m(u) = int g((1 + Y Y') u^2 - 2 u Y O z + z' O'O z) dz
             = sqrt(det C*) int g(u^2 + (z - u c) C*^-1 (z - u c)) dz

    (Y = upsilon_k, O = omega_k, C* the correlation Schur complement and c
    the standardized regression column) over the scaled rectangle of the
    other coordinates.  ``cdf_Uk`` is the cumulative of m over the whole
    real line, normalized to [0, 1]; the k-th coordinate's own truncation
    enters through the quantile formulas, not through ``cdf_Uk``.
    ``marginal_norm`` is the integral of m over the image interval, equal to
    the joint normalizer divided by the product of scale roots.
    """

    k: int
    delta_diag: np.ndarray
    omega_k: np.ndarray
    upsilon_k: np.ndarray
    cdf_Uk: object
    xi: float
    marginal_norm: float
    _g_upsilon: object

    def g_upsilon(self, u):
        """Marginal kernel m(u) of the standardized k-th coordinate."""
        u = np.asarray(u, dtype=float)
        if u.ndim == 0:
            return float(self._g_upsilon(float(u)))
        return np.array([self._g_upsilon(float(v)) for v in u])


# ---------------------------------------------------------------------------
# derived objects returned by conditional / marginal_block


@dataclass(frozen=True, eq=False)
class ConditionalBce:
    """Conditional law of a block given exact values for the other block.

    The law stays in the transformed-elliptical class: ``delta1`` is the
    conditional scale vector, ``sigma_cond`` the rescaled dispersion
    D_alpha^-1 Sigma_{11.2} D_alpha^-1, and ``family`` the parent kernel
    shifted by ``q_w2``, the quadratic form of the conditioning values in
    the transformed scale.
    """

    delta1: tuple
    lambda1: tuple
    sigma_cond: PdMatrix
    alpha_w2: tuple
    mu1_w2: tuple
    q_w2: float
    family: object

    @cached_property
    def distribution(self) -> "BceDistribution":
        return BceDistribution(
            BoxCoxParams(self.delta1, self.lambda1), self.sigma_cond, self.family
        )

    def pdf(self, y1):
        return self.distribution.pdf(y1)

    def logpdf(self, y1):
        return self.distribution.logpdf(y1)


class MarginalFamily:
    """Marginal kernel of a block-diagonal split.

    The kept block keeps its own dispersion while the dropped block is
    integrated out of the shifted parent kernel:

        g1(u) = det(Sigma2)^(-1/2) int_{rect2} g(u + w2' Sigma2^-1 w2) dw2,

    evaluated by rectangle quadrature at each argument (and cached by the
    integrator, since equal arguments produce equal cache keys).
    """

    def __init__(self, base, sigma2: PdMatrix, rect2: Rectangle, shift: float = 0.0):
        if shift < 0.0:
            raise ValueError("kernel shift must be nonnegative")
        self.base = base
        self.sigma2 = sigma2
        self.rect2 = rect2
        self.shift = float(shift)
        self._scale = math.exp(-0.5 * sigma2.log_det)

    def kernel(self, u):
        u = np.asarray(u, dtype=float)
        scalar = u.ndim == 0
        flat = np.atleast_1d(u).ravel()
        out = np.empty(flat.shape)
        for i, v in enumerate(flat):
            fam = self.base.shifted(float(v) + self.shift)
            try:
                res = rectangle_integral(fam, self.sigma2, self.rect2)
            except ToleranceNotMetError as exc:
                res = exc.result
            out[i] = self._scale * res.value
        if scalar:
            return float(out[0])
        return out.reshape(np.atleast_1d(u).shape)

    def log_kernel(self, u):
        with np.errstate(divide="ignore"):
            return np.log(self.kernel(u))

    def shifted(self, shift: float) -> "MarginalFamily":
        if shift < 0.0:
            raise ValueError("kernel shift must be nonnegative")
        if shift == 0.0:
            return self
        return MarginalFamily(self.base, self.sigma2, self.rect2, self.shift + shift)

    def __eq__(self, other):
        return (
            isinstance(other, MarginalFamily)
            and self.base == other.base
            and self.shift == other.shift
            and self.rect2 == other.rect2
            and np.array_equal(self.sigma2.mat, other.sigma2.mat)
        )

    def __hash__(self):
        return hash((self.base, self.shift, self.rect2, self.sigma2.mat.tobytes()))

    def __repr__(self):
        return (
            f"MarginalFamily({self.base!r}, dropped_dim={self.sigma2.dim}, "
            f"shift={self.shift})"
        )


class MarginalDensity:
    """Pointwise marginal density of a kept block when the dispersion is not
    block diagonal.

    The dropped coordinates are integrated out of the joint kernel afresh at
    every argument, through the conditional decomposition of the quadratic
    form, so the object evaluates the density but carries no distribution
    structure of its own.
    """

    def __init__(self, parent: "BceDistribution", keep, rest):
        keep = np.asarray(keep, dtype=int)
        rest = np.asarray(rest, dtype=int)
        self.parent = parent
        self.indices = tuple(int(j) for j in keep)
        self.params = BoxCoxParams(
            parent.params.mu_arr[keep], parent.params.lam_arr[keep]
        )
        mat = parent.sigma.mat
        self._s11 = PdMatrix(mat[np.ix_(keep, keep)])
        s12 = mat[np.ix_(keep, rest)]
        self._coef = self._s11.solve(s12)
        schur = mat[np.ix_(rest, rest)] - s12.T @ self._coef
        self._schur22 = PdMatrix(0.5 * (schur + schur.T))
        self._rect2 = rectangle_of(parent.params.lam_arr[rest])

    @property
    def dim(self) -> int:
        return len(self.indices)

    def logpdf(self, y1):
        y1 = np.asarray(y1, dtype=float)
        if y1.ndim == 0:
            y1 = y1.reshape(1)
        single = y1.ndim == 1
        pts = np.atleast_2d(y1)
        if pts.shape[-1] != self.dim:
            raise ValueError("point dimension does not match the marginal block")
        lam = self.params.lam_arr
        mu = self.params.mu_arr
        w1 = forward(pts, lam, mu)
        jac = np.atleast_1d(log_jacobian(pts, lam, mu))
        out = np.empty(len(pts))
        for i, w in enumerate(w1):
            q1 = float(self._s11.quad_form(w))
            try:
                res = rectangle_integral(
                    self.parent.family.shifted(q1),
                    self._schur22,
                    self._rect2,
                    mu=w @ self._coef,
                )
            except ToleranceNotMetError as exc:
                res = exc.result
            out[i] = math.log(res.value) if res.value > 0.0 else -math.inf
        out = out + jac - math.log(self.parent.norm_const)
        return float(out[0]) if single else out

    def pdf(self, y1):
        return np.exp(self.logpdf(y1))


@dataclass(frozen=True)
class MixedMomentResult:
    """Monte Carlo estimate of E[prod Y_k^h_k] with its standard error and
    the running-variance trace used by the divergence diagnostic."""

    value: float
    std_error: float
    n: int
    diverged: bool
    variance_history: tuple


# ---------------------------------------------------------------------------
# the distribution


class BceDistribution:
    """Positive-support law obtained by pushing a truncated elliptical vector
    through the inverse power transform.

    Parameters
    ----------
    params : BoxCoxParams
        Scale vector mu (positive) and power vector lambda.
    sigma : PdMatrix or array
        Dispersion of the transformed vector.
    family : kernel family
        Density generator; one of the named families (or a shifted or
        marginal kernel derived from one).
    """

    def __init__(self, params, sigma, family, *, _normalization=None):
        if not isinstance(params, BoxCoxParams):
            raise TypeError("params must be BoxCoxParams")
        if not isinstance(sigma, PdMatrix):
            sigma = PdMatrix(sigma)
        if sigma.dim != params.dim:
            raise ValueError("dispersion dimension does not match the parameters")
        if not (hasattr(family, "kernel") and hasattr(family, "log_kernel")):
            raise TypeError("family must provide kernel and log_kernel")
        if isinstance(family, Family) and family.dim != params.dim:
            raise ValueError("family kernel dimension must match the parameters")
        self.params = params
        self.sigma = sigma
        self.family = family
        self.image_rect = rectangle_of(params.lam_arr)
        self._norm = _normalization
        self._trunc_obj = None
        self._aux = {}
        self._aux_lock = threading.Lock()

    # -- basic structure ----------------------------------------------------

    @property
    def dim(self) -> int:
        return self.params.dim

    @property
    def mu(self) -> np.ndarray:
        return self.params.mu_arr

    @property
    def lam(self) -> np.ndarray:
        return self.params.lam_arr

    def __repr__(self):
        return (
            f"BceDistribution(mu={np.round(self.mu, 6).tolist()}, "
            f"lam={np.round(self.lam, 6).tolist()}, family={self.family!r})"
        )

    @property
    def normalization(self) -> RectangleIntegralResult:
        """Kernel integral over the image rectangle (the best available
        estimate when the point budget runs out; see ``est_error``)."""
        if self._norm is None:
            try:
                self._norm = rectangle_integral(
                    self.family, self.sigma, self.image_rect
                )
            except ToleranceNotMetError as exc:
                self._norm = exc.result
        return self._norm

    @property
    def norm_const(self) -> float:
        return self.normalization.value

    @property
    def _trunc(self) -> TruncatedElliptical:
        if self._trunc_obj is None:
            self._trunc_obj = TruncatedElliptical(
                self.family, np.zeros(self.dim), self.sigma, self.image_rect
            )
        return self._trunc_obj

    # -- density ------------------------------------------------------------

    def logpdf(self, y):
        y = np.asarray(y, dtype=float)
        if y.ndim == 0:
            y = y.reshape(1)
        single = y.ndim == 1
        pts = np.atleast_2d(y)
        if pts.shape[-1] != self.dim:
            raise ValueError("point dimension does not match the distribution")
        w = forward(pts, self.lam, self.mu)
        out = (
            np.asarray(self.family.log_kernel(self.sigma.quad_form(w)), dtype=float)
            + np.atleast_1d(log_jacobian(pts, self.lam, self.mu))
            - math.log(self.norm_const)
        )
        return float(out[0]) if single else out

    def pdf(self, y):
        return np.exp(self.logpdf(y))

    # -- sampling -----------------------------------------------------------

    def sample(self, n: int, config: GibbsConfig | None = None) -> np.ndarray:
        """Draw n rows by Gibbs sampling the transformed vector and applying
        the inverse transform; every entry is strictly positive."""
        if not isinstance(self.family, (Family, ShiftedFamily)):
            raise NotImplementedError(
                "sampling requires one of the named kernel families"
            )
        w = self._trunc.sample(n, config)
        return inverse(w, self.lam, self.mu)

    # -- conditionals -------------------------------------------------------

    def conditional(self, indices, values) -> ConditionalBce:
        """Law of the remaining coordinates given Y[indices] = values."""
        idx2 = np.atleast_1d(np.asarray(indices, dtype=int))
        if idx2.size == 0:
            raise ValueError("conditioning requires a nonempty index set")
        if (
            np.unique(idx2).size != idx2.size
            or idx2.min() < 0
            or idx2.max() >= self.dim
        ):
            raise ValueError("conditioning indices must be distinct and in range")
        if idx2.size >= self.dim:
            raise ValueError("cannot condition on every coordinate")
        vals = np.atleast_1d(np.asarray(values, dtype=float))
        if vals.shape != idx2.shape:
            raise ValueError("conditioning values must match the index set")
        dropped = set(idx2.tolist())
        idx1 = np.array([j for j in range(self.dim) if j not in dropped])
        lam1 = self.lam[idx1]
        mu1 = self.mu[idx1]
        w2 = forward(vals, self.lam[idx2], self.mu[idx2])
        mat = self.sigma.mat
        s22 = PdMatrix(mat[np.ix_(idx2, idx2)])
        s12 = mat[np.ix_(idx1, idx2)]
        sol = s22.solve(w2)
        q_w2 = float(w2 @ sol)
        m1 = s12 @ sol
        if not rectangle_of(lam1).contains(m1, strict=True):
            raise HypothesisViolationError(
                "conditional location leaves the image rectangle; the "
                "conditional law is undefined within the class at this point"
            )
        alpha = 1.0 + lam1 * m1
        schur = mat[np.ix_(idx1, idx1)] - s12 @ s22.solve(s12.T)
        sigma_cond = PdMatrix(0.5 * (schur + schur.T) / np.outer(alpha, alpha))
        delta1 = inverse(m1, lam1, mu1)
        fam_cond = self.family.shifted(q_w2)
        if isinstance(fam_cond, Family) and fam_cond.dim != idx1.size:
            # a zero shift hands back the parent kernel; keep the wrapper so
            # the parent's dimension hint survives in the smaller block
            fam_cond = ShiftedFamily(fam_cond, 0.0)
        return ConditionalBce(
            delta1=tuple(float(v) for v in delta1),
            lambda1=tuple(float(v) for v in lam1),
            sigma_cond=sigma_cond,
            alpha_w2=tuple(float(v) for v in alpha),
            mu1_w2=tuple(float(v) for v in m1),
            q_w2=q_w2,
            family=fam_cond,
        )

    # -- marginals ----------------------------------------------------------

    def marginal_block(self, indices):
        """Marginal of Y[indices]: a distribution in the class when the
        cross block of the dispersion vanishes, otherwise a pointwise
        density evaluator."""
        idx1 = np.atleast_1d(np.asarray(indices, dtype=int))
        if idx1.size == 0:
            raise ValueError("marginal block requires a nonempty index set")
        if (
            np.unique(idx1).size != idx1.size
            or idx1.min() < 0
            or idx1.max() >= self.dim
        ):
            raise ValueError("marginal indices must be distinct and in range")
        if idx1.size >= self.dim:
            raise ValueError("marginal block must be a proper subset")
        idx1 = np.sort(idx1)
        kept = set(idx1.tolist())
        idx2 = np.array([j for j in range(self.dim) if j not in kept])
        mat = self.sigma.mat
        params1 = BoxCoxParams(self.mu[idx1], self.lam[idx1])
        if np.any(mat[np.ix_(idx1, idx2)] != 0.0):
            return MarginalDensity(self, idx1, idx2)
        sigma2 = PdMatrix(mat[np.ix_(idx2, idx2)])
        fam1 = MarginalFamily(self.family, sigma2, rectangle_of(self.lam[idx2]))
        parent = self.normalization
        scale = math.exp(-0.5 * sigma2.log_det)
        derived = RectangleIntegralResult(
            parent.value * scale, parent.est_error * scale, parent.n_points, "derived"
        )
        return BceDistribution(
            params1,
            PdMatrix(mat[np.ix_(idx1, idx1)]),
            fam1,
            _normalization=derived,
        )

    # -- univariate marginal machinery ---------------------------------------

    def quantile_aux(self, k: int) -> QuantileAux:
        """Auxiliary marginal objects for coordinate k (built once, cached;
        initialization is exclusive, reads are concurrent)."""
        k = int(k)
        if not 0 <= k < self.dim:
            raise IndexError("coordinate index out of range")
        with self._aux_lock:
            aux = self._aux.get(k)
            if aux is None:
                aux = self._build_aux(k)
                self._aux[k] = aux
        return aux

    def _build_aux(self, k: int) -> QuantileAux:
        p = self.dim
        mat = self.sigma.mat
        delta = np.sqrt(np.diag(mat))
        lam = self.lam
        xi = float(lam[k] * delta[k])
        marg_norm = self.norm_const * math.exp(-float(np.sum(np.log(delta))))

        if p == 1:
            law = _marginal_symmetric_law(self.family)
            if law is not None:
                cdf = _SymmetricCdf(law)
            else:
                nodes = np.tan(np.linspace(-0.5 * math.pi + 0.04, 0.5 * math.pi - 0.04, 61))
                cdf = _RectangleMarginalCdf(
                    self.family, PdMatrix(np.eye(1)), 0, [-np.inf], [np.inf], nodes
                )
            fam = self.family

            def g_up(u, _fam=fam):
                return float(np.asarray(_fam.kernel(np.asarray(u * u))))

            return QuantileAux(
                k, delta, np.zeros((0, 0)), np.zeros(0), cdf, xi, marg_norm, g_up
            )

        rest = np.array([j for j in range(p) if j != k])
        s_rest = mat[np.ix_(rest, rest)]
        cross = mat[rest, k]
        schur = s_rest - np.outer(cross, cross) / mat[k, k]
        omega = _spectral_inv_sqrt(schur) @ np.diag(delta[rest])
        upsilon = (mat[k, rest] @ omega) / delta[rest] / delta[k]
        scaled_rect = rectangle_of(lam[rest] * delta[rest])
        schur_std = PdMatrix(0.5 * (schur + schur.T) / np.outer(delta[rest], delta[rest]))
        cross_corr = cross / (delta[rest] * delta[k])
        det_fac = math.exp(0.5 * schur_std.log_det)

        symmetric = bool(np.all(np.abs(lam[rest]) < LAMBDA_ZERO_TOL))
        law = _marginal_symmetric_law(self.family) if symmetric else None
        if law is not None:
            cdf = _SymmetricCdf(law)
            kern1 = _marginal_kernel_1d(self.family)

            def g_up(u, _kern=kern1, _c=det_fac):
                return _c * float(np.asarray(_kern(u * u)))

        else:
            ref = _marginal_symmetric_law(self.family)
            if ref is not None:
                nodes = np.asarray(ref.ppf(_PROBE_LEVELS), dtype=float)
            else:
                nodes = np.tan(np.linspace(-0.5 * math.pi + 0.04, 0.5 * math.pi - 0.04, 61))
            if abs(xi) >= LAMBDA_ZERO_TOL * delta[k]:
                nodes = np.append(nodes, -1.0 / xi)
            corr = PdMatrix(mat / np.outer(delta, delta))
            lower = np.full(p, -np.inf)
            upper = np.full(p, np.inf)
            lower[rest] = scaled_rect.lower_arr
            upper[rest] = scaled_rect.upper_arr
            cdf = _RectangleMarginalCdf(self.family, corr, k, lower, upper, nodes)

            def g_up(
                u,
                _fam=self.family,
                _schur=schur_std,
                _rect=scaled_rect,
                _coef=cross_corr,
            ):
                try:
                    res = rectangle_integral(
                        _fam.shifted(u * u), _schur, _rect, mu=u * _coef
                    )
                except ToleranceNotMetError as exc:
                    res = exc.result
                return res.value

        return QuantileAux(k, delta, omega, upsilon, cdf, xi, marg_norm, g_up)

    def marginal_pdf_1d(self, k: int, y):
        """Density of the k-th coordinate at y (scalar or vector)."""
        aux = self.quantile_aux(k)
        lam_k = float(self.lam[k])
        mu_k = float(self.mu[k])
        dk = float(aux.delta_diag[k])
        y = np.asarray(y, dtype=float)
        scalar = y.ndim == 0
        ys = np.atleast_1d(y)
        if ys.ndim != 1:
            raise ValueError("marginal density expects a scalar or a vector")
        w = forward(ys[:, None], [lam_k], [mu_k])[:, 0]
        gvals = aux.g_upsilon(w / dk)
        logjac = (lam_k - 1.0) * np.log(ys) - lam_k * math.log(mu_k)
        out = gvals * np.exp(logjac) / (dk * aux.marginal_norm)
        return float(out[0]) if scalar else out

    def quantile(self, k: int, alpha):
        """alpha-quantile of the k-th coordinate.

        The standardized transformed coordinate s has CDF F restricted to
        the image interval, so the quantile maps back through

            lambda_k = 0:  s_alpha = F^-1(alpha)
            lambda_k > 0:  s_alpha = F^-1(alpha + (1 - alpha) F(c)),
            lambda_k < 0:  s_alpha = F^-1(alpha F(c)),   c = -1 / xi,

        followed by y = T^-1(sqrt(sigma_kk) s_alpha).
        """
        aux = self.quantile_aux(k)
        lam_k = float(self.lam[k])
        mu_k = float(self.mu[k])
        dk = float(aux.delta_diag[k])
        alpha = np.asarray(alpha, dtype=float)
        scalar = alpha.ndim == 0
        avec = np.atleast_1d(alpha)
        if np.any(avec <= 0.0) or np.any(avec >= 1.0):
            raise ValueError("quantile level must lie in (0, 1)")
        cdf = aux.cdf_Uk
        if abs(lam_k) < LAMBDA_ZERO_TOL:
            s = np.asarray(cdf.ppf(avec), dtype=float)
        elif lam_k > 0.0:
            fc = float(cdf.cdf(-1.0 / aux.xi))
            s = np.asarray(cdf.ppf(avec + (1.0 - avec) * fc), dtype=float)
        else:
            fc = float(cdf.cdf(-1.0 / aux.xi))
            s = np.asarray(cdf.ppf(avec * fc), dtype=float)
        ys = inverse((dk * s)[:, None], [lam_k], [mu_k])[:, 0]
        return float(ys[0]) if scalar else ys

    def cv_quantile(self, k: int) -> float:
        """Quantile-based coefficient of variation of the k-th coordinate,
        0.75 (y_{3/4} - y_{1/4}) / y_{1/2}."""
        q = self.quantile(k, np.array([0.25, 0.5, 0.75]))
        return float(0.75 * (q[2] - q[0]) / q[1])

    # -- moments --------------------------------------------------------------

    def mixed_moment(self, h, n_mc: int, seed: int = 0) -> MixedMomentResult:
        """Monte Carlo estimate of E[prod Y_k^h_k] over n_mc Gibbs draws.

        The estimate averages prod (mu_k u_k)^h_k with u_k the inverse
        transform of the k-th chain coordinate at unit scale.  A moment need
        not exist for heavy-tailed kernels; when the running variance moves
        by more than ten percent over the last sample-size doubling (or the
        estimate is not finite) the result is flagged and a
        MomentDivergenceWarning carrying it is issued.
        """
        h = np.asarray(h, dtype=float)
        if h.shape != (self.dim,) or not np.all(np.isfinite(h)):
            raise ValueError("moment exponents must be a finite vector of length p")
        n = int(n_mc)
        if n < 1000:
            raise ValueError("Monte Carlo moments need at least 1000 draws")
        w = self._trunc.sample(n, GibbsConfig(seed=int(seed)))
        u = inverse(w, self.lam, np.ones(self.dim))
        with np.errstate(over="ignore"):
            terms = np.prod((self.mu * u) ** h, axis=1)
        est = float(terms.mean())
        se = float(terms.std(ddof=1) / math.sqrt(n))
        sizes = []
        m = n
        while m >= 2 and len(sizes) < 4:
            sizes.append(m)
            m //= 2
        history = tuple(
            float(np.var(terms[:size], ddof=1)) for size in reversed(sizes)
        )
        var_full = history[-1]
        var_half = history[-2] if len(history) >= 2 else var_full
        diverged = not (math.isfinite(est) and math.isfinite(var_full))
        if not diverged:
            if var_half > 0.0:
                diverged = abs(var_full - var_half) > 0.1 * var_half
            else:
                diverged = var_full > 0.0
        result = MixedMomentResult(est, se, n, bool(diverged), history)
        if diverged:
            warning = MomentDivergenceWarning(
                "running variance of the moment estimate did not stabilize over "
                "the last sample-size doubling; the target moment may not exist "
                f"(variance history: {history})"
            )
            warning.result = result
            warnings.warn(warning, stacklevel=2)
        return result


# ---------------------------------------------------------------------------
# module-level operations


def bce_pdf(dist: BceDistribution, y):
    """Joint density of ``dist`` at y (a point or a stack of points)."""
    return dist.pdf(y)


def bce_logpdf(dist: BceDistribution, y):
    """Joint log density of ``dist`` at y."""
    return dist.logpdf(y)


def sample(dist: BceDistribution, n: int, config: GibbsConfig | None = None):
    """n rows drawn from ``dist``; see BceDistribution.sample."""
    return dist.sample(n, config)


def conditional(dist: BceDistribution, given) -> ConditionalBce:
    """Conditional law given a (indices, values) pair."""
    indices, values = given
    return dist.conditional(indices, values)


def marginal_block(dist: BceDistribution, indices):
    """Marginal of the indexed block; see BceDistribution.marginal_block."""
    return dist.marginal_block(indices)


def marginal_pdf_1d(dist: BceDistribution, k: int, y):
    """Density of coordinate k of ``dist`` at y."""
    return dist.marginal_pdf_1d(k, y)


def quantile(dist: BceDistribution, k: int, alpha):
    """alpha-quantile of coordinate k of ``dist``."""
    return dist.quantile(k, alpha)


def cv_quantile(dist: BceDistribution, k: int) -> float:
    """Quantile-based coefficient of variation of coordinate k."""
    return dist.cv_quantile(k)


def mixed_moment(dist: BceDistribution, h, n_mc: int, seed: int = 0):
    """Monte Carlo mixed moment E[prod Y_k^h_k]; see
    BceDistribution.mixed_moment."""
    return dist.mixed_moment(h, n_mc, seed)
