"""Rectangle integrals of elliptical kernels.

Computes K = int_rect g((w - mu)' Sigma^-1 (w - mu)) dw for the package's
kernels over axis-aligned rectangles with possibly infinite sides.  These
integrals normalize every truncated and transformed density, so both
accuracy and determinism matter: all stochastic estimates use Sobol
sequences scrambled with seeded generators, and repeated evaluations
are memoized.

Stochastic estimates average 8 independent randomizations of the Sobol
sequence (Owen scrambling, seeded deterministically), with the standard
error across randomizations as the error estimate.

Method selection (overridable via ``method=``):

* ``closed``    full-space rectangles of unshifted kernels use the
                analytic normalization constant (default dispatch only);
* ``factored``  normal kernels whose dispersion splits into diagonal
                blocks: the integrand separates, so the integral is the
                product of the per-block integrals (each dispatched
                recursively); keeps products of marginal masses exactly
                consistent with the joint normalizer;
* ``exact1d``   one-dimensional rectangles, via the univariate law CDF;
* ``sov``       normal, t, and slash kernels: sequential separation of
                variables through the Cholesky factor (conditioned
                coordinates map to the unit cube), estimated by
                randomized QMC; t and slash kernels
                are normal scale mixtures and add one mixing coordinate,
                which keeps the integrand bounded even for heavy tails;
* ``tensor_gl`` any kernel, dimension <= 2: tensor Gauss-Legendre with
                tan compactification of infinite sides, node doubling
                until the error estimate meets tolerance;
* ``qmc``       any kernel, any dimension: tan compactification and
                randomized QMC (light-tailed kernels; heavy-tailed ones
                should go through their mixture SOV form).

Estimated error must satisfy est <= max(abs_tol, rel_tol * value),
otherwise ``ToleranceNotMetError`` (carrying the best result) is raised.
"""

from __future__ import annotations

import math
import threading
from collections import OrderedDict
from dataclasses import dataclass

import numpy as np
from scipy import special as _special
from scipy.stats import qmc as _qmc

from .families import Family, ShiftedFamily
from .linalg import PdMatrix
from .rng import spawn_seed
from .transform import Rectangle

__all__ = [
    "RectangleIntegralResult",
    "ToleranceNotMetError",
    "rectangle_integral",
    "clear_cache",
]

DEFAULT_SEED = 0x5EED
_N_RANDOMIZATIONS = 8
_START_POINTS = 1 << 10
_MAX_POINTS = 1 << 20
_TINY = 1e-16


@dataclass(frozen=True)
class RectangleIntegralResult:
    value: float
    est_error: float
    n_points: int
    method: str


class ToleranceNotMetError(RuntimeError):
    """Point budget exhausted before the error tolerance was met."""

    def __init__(self, result: RectangleIntegralResult):
        super().__init__(
            f"rectangle integral reached {result.n_points} points with estimated "
            f"error {result.est_error:.3e} on value {result.value:.6e}"
        )
        self.result = result


# ---------------------------------------------------------------------------
# memo cache

_cache_lock = threading.Lock()
_cache: OrderedDict = OrderedDict()
_CACHE_CAP = 8192


def clear_cache() -> None:
    with _cache_lock:
        _cache.clear()


class _ScrambledSobol:
    """Cached scrambled Sobol point sets, one scramble per randomization.

    Point sets depend only on (seed, dim), not on the integrand, so they
    are generated once and extended on demand; Sobol prefixes nest, so a
    request for fewer points slices the cached block.
    """

    def __init__(self, n_scrambles: int = _N_RANDOMIZATIONS, max_entries: int = 16):
        self._store: OrderedDict = OrderedDict()
        self._lock = threading.Lock()
        self._n_scrambles = n_scrambles
        self._max_entries = max_entries

    def get(self, seed: int, dim: int, n: int) -> np.ndarray:
        """Return an array (n_scrambles, n, dim) of points in [0, 1)."""
        with self._lock:
            entry = self._store.pop((seed, dim), None)
            if entry is None:
                gens = [
                    _qmc.Sobol(dim, scramble=True, seed=spawn_seed(seed, r))
                    for r in range(self._n_scrambles)
                ]
                entry = [gens, np.empty((self._n_scrambles, 0, dim))]
            gens, pts = entry
            if pts.shape[1] < n:
                extra = n - pts.shape[1]
                new = np.stack([g.random(extra) for g in gens], axis=0)
                pts = np.concatenate([pts, new], axis=1)
                entry[1] = pts
            self._store[(seed, dim)] = entry
            while len(self._store) > self._max_entries:
                self._store.popitem(last=False)
            return pts[:, :n, :]


_sobol_cache = _ScrambledSobol()


def _cache_key(family, sigma, rect, mu, method, seed, rel_tol, abs_tol, fixed):
    try:
        fam_key = hash(family)
    except TypeError:
        return None
    chol = np.round(sigma.chol, 12)
    mu_key = None if mu is None else tuple(np.round(mu, 12))
    return (
        fam_key,
        chol.tobytes(),
        rect.lower,
        rect.upper,
        mu_key,
        method,
        seed,
        rel_tol,
        abs_tol,
        fixed,
    )


# ---------------------------------------------------------------------------
# kernel profiles for the separation-of-variables path


def _sov_profile(family, d: int):
    """Reduce a (possibly shifted) normal, t, or slash kernel to SOV form.

    Returns (kind, const, chol_scale, aux); the rectangle integral is then

        const * front(kind, d) * det(chol_scale * chol) * E[prod of
        conditional masses],

    where the expectation is over the quasi-uniform cube.  Normal kernels
    need no mixing coordinate; t kernels mix over a chi variable (the
    kernel is a normal scale mixture with inverse-chi scale); slash
    kernels mix over a power-law variable on (0, 1).  Returns None when
    the kernel admits no such reduction.
    """
    shift = 0.0
    base = family
    if isinstance(family, ShiftedFamily):
        shift = family.shift
        base = family.base
    if not isinstance(base, Family):
        return None
    if base.kind == "normal":
        return ("normal", math.exp(-0.5 * shift), 1.0, None)
    if base.kind == "t":
        tau = base.eta[0]
        m = tau + base.dim
        df = m - d
        if df <= 0.0:
            return None
        tau_sh = tau + shift
        const = (tau_sh / tau) ** (-0.5 * m)
        chol_scale = math.sqrt(tau_sh / df)
        return ("t", const, chol_scale, df)
    if base.kind == "slash":
        # g(u + shift) = int_0^1 t^(p+q-1) e^(-shift t^2/2) e^(-u t^2/2) dt;
        # integrating the normal factor over the rectangle and substituting
        # v = t^mix, mix = p + q - d, gives a bounded mixture integrand
        mix = base.dim + base.eta[0] - d
        if mix <= 0.0:
            return None
        return ("slash", 1.0 / mix, 1.0, (mix, shift))
    return None


def _mvn_prob_factors(lower, upper, chol, points):
    """Genz separation of variables: per-point product of conditional masses.

    ``points`` has shape (n, d-1); bounds are standardized sequentially
    through the Cholesky factor, each conditioned coordinate drawn by
    inverse CDF at the quasi-uniform coordinate.
    """
    d = len(lower)
    n = points.shape[0] if d > 1 else 1
    prod = np.ones(n)
    zs = np.zeros((n, max(d - 1, 1)))
    for k in range(d):
        drift = zs[:, :k] @ chol[k, :k] if k else 0.0
        with np.errstate(invalid="ignore"):
            lo = (lower[k] - drift) / chol[k, k]
            hi = (upper[k] - drift) / chol[k, k]
        dk = _special.ndtr(lo)
        ek = _special.ndtr(hi)
        width = np.maximum(ek - dk, 0.0)
        prod = prod * width
        if k < d - 1:
            arg = dk + points[:, k] * width
            zs[:, k] = _special.ndtri(np.clip(arg, _TINY, 1.0 - _TINY))
    return prod


def _chi_quantile(u, df):
    return np.sqrt(2.0 * _special.gammaincinv(0.5 * df, u))


def _sov_estimate(kind, aux, lower, upper, chol, points):
    if kind == "normal":
        return _mvn_prob_factors(lower, upper, chol, points)
    u0 = np.clip(points[:, 0], _TINY, 1.0 - _TINY)
    weight = 1.0
    if kind == "t":
        df = aux
        s = _chi_quantile(u0, df) / math.sqrt(df)
    else:
        mix, shift = aux
        s = u0 ** (1.0 / mix)
        if shift != 0.0:
            weight = np.exp(-0.5 * shift * s * s)
    d = len(lower)
    n = points.shape[0]
    prod = np.ones(n)
    zs = np.zeros((n, max(d - 1, 1)))
    with np.errstate(invalid="ignore"):
        lo_s = np.multiply.outer(s, lower)
        hi_s = np.multiply.outer(s, upper)
    lo_s = np.nan_to_num(lo_s, nan=0.0, posinf=np.inf, neginf=-np.inf)
    hi_s = np.nan_to_num(hi_s, nan=0.0, posinf=np.inf, neginf=-np.inf)
    for k in range(d):
        drift = zs[:, :k] @ chol[k, :k] if k else 0.0
        dk = _special.ndtr((lo_s[:, k] - drift) / chol[k, k])
        ek = _special.ndtr((hi_s[:, k] - drift) / chol[k, k])
        width = np.maximum(ek - dk, 0.0)
        prod = prod * width
        if k < d - 1:
            arg = dk + points[:, k + 1] * width
            zs[:, k] = _special.ndtri(np.clip(arg, _TINY, 1.0 - _TINY))
    return prod * weight


def _sov_front(kind, aux, d: int) -> float:
    if kind == "normal" or kind == "slash":
        return (2.0 * math.pi) ** (0.5 * d)
    df = aux
    return (
        (df * math.pi) ** (0.5 * d) * math.gamma(0.5 * df) / math.gamma(0.5 * (df + d))
    )


def _sov_value(family, sigma, lower, upper, seed, n_per_shift):
    d = len(lower)
    kind, const, chol_scale, aux = _sov_profile(family, d)
    chol = sigma.chol * chol_scale
    cube_dim = d - 1 if kind == "normal" else d
    if cube_dim == 0:
        # one normal coordinate: exact
        lo, hi = lower[0] / chol[0, 0], upper[0] / chol[0, 0]
        prob = float(_special.ndtr(hi) - _special.ndtr(lo))
        value = const * (2.0 * math.pi) ** 0.5 * chol[0, 0] * prob
        return value, 4.0 * np.finfo(float).eps * abs(value), 1
    points = _sobol_cache.get(seed, cube_dim, n_per_shift)
    det_chol = float(np.prod(np.diag(chol)))
    scale = const * _sov_front(kind, aux, d) * det_chol
    ests = np.empty(_N_RANDOMIZATIONS)
    for r in range(_N_RANDOMIZATIONS):
        ests[r] = _sov_estimate(kind, aux, lower, upper, chol, points[r]).mean()
    value = scale * float(ests.mean())
    se = scale * float(ests.std(ddof=1)) / math.sqrt(_N_RANDOMIZATIONS)
    return value, se, _N_RANDOMIZATIONS * n_per_shift


# ---------------------------------------------------------------------------
# compactification helpers shared by tensor_gl and qmc paths


def _axis_map(lo: float, hi: float):
    """Map t in (0,1) to (lo, hi) with the analytic Jacobian."""
    if math.isinf(lo) and math.isinf(hi):

        def both(t):
            w = np.tan(math.pi * (t - 0.5))
            return w, math.pi * (1.0 + w * w)

        return both
    if math.isinf(hi):

        def upper_open(t):
            w = np.tan(0.5 * math.pi * t)
            return lo + w, 0.5 * math.pi * (1.0 + w * w)

        return upper_open
    if math.isinf(lo):

        def lower_open(t):
            w = np.tan(0.5 * math.pi * t)
            return hi - w, 0.5 * math.pi * (1.0 + w * w)

        return lower_open

    def finite(t):
        return lo + (hi - lo) * t, (hi - lo) * np.ones_like(t)

    return finite


def _gauss_legendre_unit(n: int):
    x, w = np.polynomial.legendre.leggauss(n)
    return 0.5 * (x + 1.0), 0.5 * w


def _tensor_gl_value(family, sigma, lower, upper, n: int) -> float:
    d = len(lower)
    maps = [_axis_map(lower[k], upper[k]) for k in range(d)]
    t, w = _gauss_legendre_unit(n)
    coords, jacs = zip(*(m(t) for m in maps))
    if d == 1:
        pts = coords[0][:, None]
        wts = w * jacs[0]
    else:
        g1, g2 = np.meshgrid(coords[0], coords[1], indexing="ij")
        j1, j2 = np.meshgrid(jacs[0], jacs[1], indexing="ij")
        w1, w2 = np.meshgrid(w, w, indexing="ij")
        pts = np.column_stack([g1.ravel(), g2.ravel()])
        wts = (w1 * w2 * j1 * j2).ravel()
    qf = sigma.quad_form(pts)
    vals = family.kernel(qf)
    return float(wts @ vals)


def _qmc_value(family, sigma, lower, upper, seed, n_per_shift):
    d = len(lower)
    maps = [_axis_map(lower[k], upper[k]) for k in range(d)]
    points = _sobol_cache.get(seed, d, n_per_shift)
    ests = np.empty(_N_RANDOMIZATIONS)
    for r in range(_N_RANDOMIZATIONS):
        pts01 = np.clip(points[r], _TINY, 1.0 - _TINY)
        cols = []
        jac = np.ones(n_per_shift)
        for k in range(d):
            wk, jk = maps[k](pts01[:, k])
            cols.append(wk)
            jac = jac * jk
        pts = np.column_stack(cols)
        vals = np.asarray(family.kernel(sigma.quad_form(pts)), dtype=float)
        ests[r] = float(np.mean(vals * jac))
    value = float(ests.mean())
    se = float(ests.std(ddof=1)) / math.sqrt(_N_RANDOMIZATIONS)
    return value, se, _N_RANDOMIZATIONS * n_per_shift


# ---------------------------------------------------------------------------
# entry point


def _diag_blocks(mat: np.ndarray):
    """Connected components of the nonzero pattern of a symmetric matrix,
    or None when the matrix does not split into diagonal blocks."""
    p = mat.shape[0]
    if p <= 1:
        return None
    adj = np.abs(mat) > 0.0
    seen = np.zeros(p, dtype=bool)
    blocks = []
    for start in range(p):
        if seen[start]:
            continue
        stack = [start]
        seen[start] = True
        comp = [start]
        while stack:
            j = stack.pop()
            nxt = np.flatnonzero(adj[j] & ~seen)
            seen[nxt] = True
            comp.extend(nxt.tolist())
            stack.extend(nxt.tolist())
        blocks.append(np.sort(np.asarray(comp, dtype=int)))
    if len(blocks) == 1:
        return None
    return blocks


def _exact_1d(family, sigma, lower, upper):
    law = family.univariate() if hasattr(family, "univariate") else None
    if law is None:
        return None
    s = math.sqrt(sigma.mat[0, 0])
    mass = float(law.cdf(upper[0] / s) - law.cdf(lower[0] / s))
    value = s * law.total * mass
    return value, 8.0 * np.finfo(float).eps * abs(value) + 1e-13 * abs(value), 2


def rectangle_integral(
    family,
    sigma: PdMatrix,
    rect: Rectangle,
    *,
    mu=None,
    rel_tol: float = 1e-6,
    abs_tol: float = 1e-8,
    seed: int = DEFAULT_SEED,
    method: str | None = None,
    max_points: int = _MAX_POINTS,
    fixed_points: int | None = None,
) -> RectangleIntegralResult:
    """Integrate the family kernel with dispersion ``sigma`` over ``rect``.

    ``mu`` translates the kernel location; ``fixed_points`` pins the
    number of points per randomization (no adaptivity, no tolerance
    check), which fitting uses to keep the objective smooth in theta.
    """
    if not isinstance(sigma, PdMatrix):
        sigma = PdMatrix(sigma)
    if rect.dim != sigma.dim:
        raise ValueError("rectangle and dispersion dimensions differ")
    lower = rect.lower_arr.copy()
    upper = rect.upper_arr.copy()
    if mu is not None:
        mu = np.asarray(mu, dtype=float)
        if mu.shape != (rect.dim,):
            raise ValueError("location must match the rectangle dimension")
        lower = lower - mu
        upper = upper - mu
        rect = Rectangle(tuple(lower), tuple(upper))
        mu = None
    d = rect.dim

    if method is None:
        if (
            isinstance(family, Family)
            and family.dim == d
            and np.all(np.isinf(lower))
            and np.all(np.isinf(upper))
        ):
            value = family.full_space_integral() * math.exp(0.5 * sigma.log_det)
            return RectangleIntegralResult(
                value, 4.0 * np.finfo(float).eps * value, 0, "closed"
            )
        profile = _sov_profile(family, d)
        if (
            d > 1
            and profile is not None
            and profile[0] == "normal"
            and _diag_blocks(sigma.mat) is not None
        ):
            method = "factored"
        elif d == 1 and hasattr(family, "univariate"):
            method = "exact1d"
        elif profile is not None:
            method = "sov"
        elif d <= 2:
            method = "tensor_gl"
        else:
            method = "qmc"

    key = _cache_key(family, sigma, rect, mu, method, seed, rel_tol, abs_tol, fixed_points)
    if key is not None:
        with _cache_lock:
            hit = _cache.get(key)
        if hit is not None:
            return hit

    result = _dispatch(
        family, sigma, lower, upper, method, seed, rel_tol, abs_tol, max_points, fixed_points
    )

    if key is not None:
        with _cache_lock:
            _cache[key] = result
            while len(_cache) > _CACHE_CAP:
                _cache.popitem(last=False)
    return result


def _tolerance(value, rel_tol, abs_tol):
    return max(abs_tol, rel_tol * abs(value))


def _dispatch(family, sigma, lower, upper, method, seed, rel_tol, abs_tol, max_points, fixed):
    d = len(lower)
    if method == "exact1d":
        if d != 1:
            raise ValueError("exact1d applies to one-dimensional rectangles only")
        out = _exact_1d(family, sigma, lower, upper)
        if out is None:
            raise ValueError("family provides no univariate law")
        return RectangleIntegralResult(*out, "exact1d")

    if method == "factored":
        profile = _sov_profile(family, d)
        if profile is None or profile[0] != "normal":
            raise ValueError("block factorization applies to normal kernels only")
        blocks = _diag_blocks(sigma.mat)
        if blocks is None:
            raise ValueError("dispersion does not split into diagonal blocks")
        const = profile[1]
        vals = []
        errs = []
        total = 0
        failed = False
        for idx in blocks:
            sub_sigma = PdMatrix(sigma.mat[np.ix_(idx, idx)])
            sub_rect = Rectangle(tuple(lower[idx]), tuple(upper[idx]))
            try:
                sub = rectangle_integral(
                    Family.normal(idx.size),
                    sub_sigma,
                    sub_rect,
                    rel_tol=rel_tol,
                    abs_tol=abs_tol,
                    seed=seed,
                    max_points=max_points,
                    fixed_points=fixed,
                )
            except ToleranceNotMetError as exc:
                sub = exc.result
                failed = True
            vals.append(sub.value)
            errs.append(sub.est_error)
            total += sub.n_points
        value = const * float(np.prod(vals))
        est = 0.0
        for i, err in enumerate(errs):
            others = float(np.prod([abs(v) for j, v in enumerate(vals) if j != i]))
            est += const * err * others
        result = RectangleIntegralResult(value, est, total, "factored")
        if failed:
            raise ToleranceNotMetError(result)
        return result

    if method == "sov":
        if _sov_profile(family, d) is None:
            raise ValueError(
                "separation of variables requires a normal, t, or slash kernel"
            )
        n = fixed if fixed is not None else _START_POINTS
        total = 0
        best = None
        while True:
            value, se, used = _sov_value(family, sigma, lower, upper, seed, n)
            total += used
            best = RectangleIntegralResult(value, se, total, "sov")
            if fixed is not None or se <= _tolerance(value, rel_tol, abs_tol):
                return best
            if total + 2 * _N_RANDOMIZATIONS * n > max_points:
                raise ToleranceNotMetError(best)
            n *= 2

    if method == "tensor_gl":
        if d > 2:
            raise ValueError("tensor quadrature is limited to two dimensions")
        n = fixed if fixed is not None else 64
        prev = _tensor_gl_value(family, sigma, lower, upper, n)
        total = n**d
        while True:
            n *= 2
            cur = _tensor_gl_value(family, sigma, lower, upper, n)
            total += n**d
            est = abs(cur - prev)
            best = RectangleIntegralResult(cur, est, total, "tensor_gl")
            if fixed is not None or est <= _tolerance(cur, rel_tol, abs_tol):
                return best
            if total + (2 * n) ** d > max_points:
                raise ToleranceNotMetError(best)
            prev = cur

    if method == "qmc":
        n = fixed if fixed is not None else _START_POINTS
        total = 0
        while True:
            value, se, used = _qmc_value(family, sigma, lower, upper, seed, n)
            total += used
            best = RectangleIntegralResult(value, se, total, "qmc")
            if fixed is not None or se <= _tolerance(value, rel_tol, abs_tol):
                return best
            if total + 2 * _N_RANDOMIZATIONS * n > max_points:
                raise ToleranceNotMetError(best)
            n *= 2

    raise ValueError(f"unknown method {method!r}")
