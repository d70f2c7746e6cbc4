"""Brute-force oracles for rectangle integrals of elliptical kernels.

Computed with scipy adaptive quadrature, independently of the package
implementation, so the frozen constants in the tests are trustworthy.
"""
import numpy as np
from scipy import integrate, special


def quad_form(sigma):
    si = np.linalg.inv(sigma)
    return lambda w1, w2: (
        si[0, 0] * w1 * w1 + 2.0 * si[0, 1] * w1 * w2 + si[1, 1] * w2 * w2
    )


def dblquad_kernel(kernel, sigma, rect, tol=1e-12):
    q = quad_form(sigma)
    (a1, b1), (a2, b2) = rect
    val, err = integrate.dblquad(
        lambda w2, w1: kernel(q(w1, w2)),
        a1, b1, a2, b2, epsabs=tol, epsrel=tol,
    )
    return val, err


def t_kernel(tau, p):
    return lambda u: (1.0 + u / tau) ** (-(tau + p) / 2.0)


def slash_kernel(q_par, p):
    # closed form: int_0^1 t^(p+q-1) exp(-u t^2/2) dt
    a = (p + q_par) / 2.0
    def g(u):
        if u == 0.0:
            return 1.0 / (p + q_par)
        return 0.5 * (2.0 / u) ** a * special.gamma(a) * special.gammainc(a, u / 2.0)
    return g


def pexp_kernel(beta):
    return lambda u: np.exp(-0.5 * u ** beta)


if __name__ == "__main__":
    np.set_printoptions(precision=17)

    # case A: Student t, tau=3, p=2, dispersion from the bivariate example fit,
    # rectangle R(lambda) for lambda = (-1, 1.5): (-inf, 1) x (-2/3, inf)
    sigma_a = np.array([[0.5, -0.2], [-0.2, 0.3]])
    rect_a = ((-np.inf, 1.0), (-2.0 / 3.0, np.inf))
    val, err = dblquad_kernel(t_kernel(3.0, 2), sigma_a, rect_a)
    print("K_t3_fig:", repr(val), "err", err)
    # cross-check: full plane should equal (tau*pi)^(p/2) gamma(tau/2)/gamma((tau+p)/2) sqrt(det)
    full, _ = dblquad_kernel(t_kernel(3.0, 2), sigma_a, ((-np.inf, np.inf), (-np.inf, np.inf)))
    closed = (3 * np.pi) * special.gamma(1.5) / special.gamma(2.5) * np.sqrt(np.linalg.det(sigma_a))
    print("full-plane t quad vs closed:", repr(full), repr(closed), "diff", full - closed)

    # case B: normal kernel, same dispersion, same rectangle
    val_b, err_b = dblquad_kernel(lambda u: np.exp(-0.5 * u), sigma_a, rect_a)
    print("K_norm_fig:", repr(val_b), "err", err_b)

    # case C: power exponential beta=0.75
    sigma_c = np.array([[1.0, 0.3], [0.3, 0.8]])
    rect_c = ((-1.5, 2.0), (0.5, np.inf))
    val_c, err_c = dblquad_kernel(pexp_kernel(0.75), sigma_c, rect_c)
    print("K_pexp:", repr(val_c), "err", err_c)

    # case D: slash q=1.5 p=2
    val_d, err_d = dblquad_kernel(slash_kernel(1.5, 2), sigma_c, rect_c)
    print("K_slash:", repr(val_d), "err", err_d)

    # case E: normal kernel, correlated, fully finite rectangle
    rect_e = ((-0.8, 1.4), (-1.1, 0.9))
    val_e, err_e = dblquad_kernel(lambda u: np.exp(-0.5 * u), sigma_a, rect_e)
    print("K_norm_finite:", repr(val_e), "err", err_e)

    # case F: t tau=6.22 on half-infinite rectangle (both sides), mimics lambda=(0.4,0.3)
    # R(lambda): (-1/0.4, inf) x (-1/0.3, inf) = (-2.5, inf) x (-10/3, inf)
    sigma_f = np.array([[0.4, 0.1], [0.1, 0.3]])
    rect_f = ((-2.5, np.inf), (-10.0 / 3.0, np.inf))
    val_f, err_f = dblquad_kernel(t_kernel(6.0, 2), sigma_f, rect_f)
    print("K_t6:", repr(val_f), "err", err_f)
