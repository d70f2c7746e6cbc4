"""The extended power transform and its image rectangles.

Coordinatewise, for positive data y and positive scale mu,

    w_k = ((y_k / mu_k)^lambda_k - 1) / lambda_k     (lambda_k != 0)
    w_k = log(y_k / mu_k)                            (lambda_k  = 0)

maps (0, inf)^p onto the open rectangle R(lambda) = prod_k I(lambda_k),

    I(xi) = (-1/xi, inf) for xi > 0,  (-inf, -1/xi) for xi < 0,  R for xi = 0.

Lambdas with |lambda| < 1e-8 use the log branch; the power branch is
evaluated through expm1/log1p so the two branches agree smoothly across
the threshold.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "Rectangle",
    "BoxCoxParams",
    "rectangle_of",
    "forward",
    "inverse",
    "log_jacobian",
    "LAMBDA_ZERO_TOL",
]

LAMBDA_ZERO_TOL = 1e-8


@dataclass(frozen=True)
class Rectangle:
    """An open axis-aligned rectangle, sides possibly infinite."""

    lower: tuple[float, ...]
    upper: tuple[float, ...]

    def __post_init__(self):
        lo = tuple(float(v) for v in np.atleast_1d(self.lower))
        up = tuple(float(v) for v in np.atleast_1d(self.upper))
        if len(lo) != len(up) or not lo:
            raise ValueError("rectangle needs matching nonempty bound vectors")
        for a, b in zip(lo, up):
            if np.isnan(a) or np.isnan(b) or not a < b:
                raise ValueError("rectangle requires lower < upper on every axis")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", up)

    @property
    def dim(self) -> int:
        return len(self.lower)

    @property
    def lower_arr(self) -> np.ndarray:
        return np.asarray(self.lower, dtype=float)

    @property
    def upper_arr(self) -> np.ndarray:
        return np.asarray(self.upper, dtype=float)

    def contains(self, w, strict: bool = True) -> bool:
        w = np.asarray(w, dtype=float)
        lo, up = self.lower_arr, self.upper_arr
        if strict:
            return bool(np.all(w > lo) and np.all(w < up))
        return bool(np.all(w >= lo) and np.all(w <= up))

    def translate(self, shift) -> "Rectangle":
        shift = np.asarray(shift, dtype=float)
        return Rectangle(tuple(self.lower_arr + shift), tuple(self.upper_arr + shift))

    def axis(self, k: int) -> tuple[float, float]:
        return self.lower[k], self.upper[k]

    def subrect(self, idx) -> "Rectangle":
        idx = np.asarray(idx, dtype=int)
        return Rectangle(tuple(self.lower_arr[idx]), tuple(self.upper_arr[idx]))


@dataclass(frozen=True)
class BoxCoxParams:
    """Scale and power parameters of the coordinatewise transform."""

    mu: tuple[float, ...]
    lam: tuple[float, ...]

    def __post_init__(self):
        mu = tuple(float(v) for v in np.atleast_1d(self.mu))
        lam = tuple(float(v) for v in np.atleast_1d(self.lam))
        if len(mu) != len(lam) or not mu:
            raise ValueError("mu and lambda must have the same positive length")
        if not all(np.isfinite(mu)) or min(mu) <= 0.0:
            raise ValueError("mu must be finite and positive")
        if not all(np.isfinite(lam)):
            raise ValueError("lambda must be finite")
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "lam", lam)

    @property
    def dim(self) -> int:
        return len(self.mu)

    @property
    def mu_arr(self) -> np.ndarray:
        return np.asarray(self.mu, dtype=float)

    @property
    def lam_arr(self) -> np.ndarray:
        return np.asarray(self.lam, dtype=float)


def rectangle_of(lam) -> Rectangle:
    """Image rectangle R(lambda) of the transform."""
    lam = np.atleast_1d(np.asarray(lam, dtype=float))
    lower = np.where(lam > 0.0, -1.0 / np.where(lam == 0.0, np.inf, lam), -np.inf)
    upper = np.where(lam < 0.0, -1.0 / np.where(lam == 0.0, np.inf, lam), np.inf)
    return Rectangle(tuple(lower), tuple(upper))


def _check_params(lam, mu):
    lam = np.atleast_1d(np.asarray(lam, dtype=float))
    mu = np.atleast_1d(np.asarray(mu, dtype=float))
    if lam.shape != mu.shape:
        raise ValueError("lambda and mu must have the same length")
    if not np.isfinite(lam).all() or not np.isfinite(mu).all() or (mu <= 0.0).any():
        raise ValueError("lambda must be finite and mu finite positive")
    return lam, mu


def forward(y, lam, mu) -> np.ndarray:
    """Transform positive data y, shape (p,) or (n, p), coordinatewise."""
    lam, mu = _check_params(lam, mu)
    y = np.asarray(y, dtype=float)
    if y.shape[-1:] != lam.shape:
        raise ValueError("data dimension does not match parameter dimension")
    if not (y > 0.0).all() or not np.isfinite(y).all():
        raise ValueError("data must be finite and strictly positive")
    r = np.log(y) - np.log(mu)
    zero = np.abs(lam) < LAMBDA_ZERO_TOL
    lam_safe = np.where(zero, 1.0, lam)
    with np.errstate(over="ignore"):
        w = np.where(zero, r, np.expm1(lam_safe * r) / lam_safe)
    return w


def inverse(w, lam, mu) -> np.ndarray:
    """Map w strictly inside R(lambda) back to positive data."""
    lam, mu = _check_params(lam, mu)
    w = np.asarray(w, dtype=float)
    if w.shape[-1:] != lam.shape:
        raise ValueError("data dimension does not match parameter dimension")
    if not np.isfinite(w).all():
        raise ValueError("transformed values must be finite")
    if np.any(1.0 + lam * w <= 0.0):
        raise ValueError("value lies outside the image rectangle of the transform")
    zero = np.abs(lam) < LAMBDA_ZERO_TOL
    lam_safe = np.where(zero, 1.0, lam)
    with np.errstate(invalid="ignore", divide="ignore"):
        r = np.where(zero, w, np.log1p(lam_safe * w) / lam_safe)
    return mu * np.exp(r)


def log_jacobian(y, lam, mu) -> float | np.ndarray:
    """log |d w / d y| = sum_k (lambda_k - 1) log y_k - lambda_k log mu_k."""
    lam, mu = _check_params(lam, mu)
    y = np.asarray(y, dtype=float)
    if not (y > 0.0).all():
        raise ValueError("data must be strictly positive")
    terms = (lam - 1.0) * np.log(y) - lam * np.log(mu)
    out = terms.sum(axis=-1)
    return float(out) if out.ndim == 0 else out
