"""Closed-form Gaussian integral helpers.

Everything downstream (analytic variable eliminations, the limiting collision
pairings, the W^{4,1} diagnostic) reduces to a handful of identities collected
here:

* linear-phase Gaussian integrals
      integral exp(-1/2 z^T M z + b.z + c) dz
        = (2pi)^{d/2} det(M)^{-1/2} exp(c + 1/2 b^T M^{-1} b)
  for real SPD M and complex b, c (analytic continuation in b);

* even moments E[(mu + s Z)^{2k}] of a scalar Gaussian with complex mean, and
  from them E[|W|^{2n}] for a 3-vector Gaussian W with complex mean -- the
  factor through which the polynomial part of phi_hat survives the analytic
  xi elimination;

* L^1 moments of Hermite-polynomial x Gaussian profiles through exact
  piecewise integration (incomplete Gaussian moment recursion).
"""

from __future__ import annotations

import math

import numpy as np
from numpy.polynomial import hermite_e
from scipy.special import comb, factorial, ndtr

_LOG_2PI = math.log(2.0 * math.pi)


def gauss_linear_phase_exponent(M, b, c=0.0):
    """Complex log of integral exp(-1/2 z^T M z + b.z + c) dz.

    M: (..., d, d) real SPD, b: (..., d) complex, c: (...,) complex.
    Returns the complex exponent  c + 1/2 b^T M^{-1} b + d/2 log(2pi)
    - 1/2 log det M; exponentiate at the call site (after combining with any
    other exponents, which is kinder to float range).
    """
    M = np.asarray(M, dtype=float)
    b = np.asarray(b, dtype=complex)
    d = M.shape[-1]
    sign, logdet = np.linalg.slogdet(M)
    if np.any(sign <= 0):
        raise np.linalg.LinAlgError("quadratic form is not positive definite")
    x = np.linalg.solve(M, b[..., None])[..., 0]
    quad = 0.5 * np.sum(b * x, axis=-1)
    return np.asarray(c, dtype=complex) + quad + 0.5 * (d * _LOG_2PI - logdet)


def gauss_linear_phase(M, b, c=0.0):
    """Value (not log) of the linear-phase Gaussian integral above."""
    return np.exp(gauss_linear_phase_exponent(M, b, c))


def _double_factorial_odd(j):
    # (2j-1)!! with the j = 0 convention (−1)!! = 1
    return float(np.prod(np.arange(2 * j - 1, 0, -2))) if j > 0 else 1.0


def gaussian_even_moment(mu, var, k):
    """E[(mu + sqrt(var) Z)^{2k}], Z ~ N(0,1); mu may be complex."""
    mu = np.asarray(mu, dtype=complex)
    var = np.asarray(var, dtype=float)
    acc = np.zeros(np.broadcast(mu, var).shape, dtype=complex)
    mu2 = mu * mu
    for j in range(k + 1):
        coeff = comb(2 * k, 2 * j, exact=True) * _double_factorial_odd(j)
        acc = acc + coeff * var ** j * mu2 ** (k - j)
    return acc


def _compositions3(n):
    return [(k1, k2, n - k1 - k2)
            for k1 in range(n + 1) for k2 in range(n - k1 + 1)]


def norm_power_expectation(mu, var, n):
    """E[(W.W)^n] for W ~ N(mu, diag(var)) in R^3, with complex mean mu.

    mu: (..., 3) complex, var: (..., 3) or (3,) per-axis variances (the caller
    supplies principal-axis coordinates).  Used for the potential's polynomial
    factor |eps*xi - h|^{2n} once the Gaussian part has been absorbed.
    """
    if n == 0:
        return np.ones(np.asarray(mu).shape[:-1], dtype=complex)
    mu = np.asarray(mu, dtype=complex)
    var = np.broadcast_to(np.asarray(var, dtype=float), mu.shape)
    # per-axis table m[k, ..., i] = E[W_i^{2k}]
    table = np.empty((n + 1,) + mu.shape, dtype=complex)
    table[0] = 1.0
    for k in range(1, n + 1):
        table[k] = gaussian_even_moment(mu, var, k)
    out = np.zeros(mu.shape[:-1], dtype=complex)
    for k1, k2, k3 in _compositions3(n):
        coeff = (factorial(n, exact=True)
                 // (factorial(k1, exact=True) * factorial(k2, exact=True)
                     * factorial(k3, exact=True)))
        out += coeff * table[k1][..., 0] * table[k2][..., 1] * table[k3][..., 2]
    return out


def incomplete_gauss_moments(k_max, a, b):
    """M_k = integral_a^b z^k phi(z) dz for k = 0..k_max, phi the N(0,1) pdf.

    a, b may be -inf / +inf.  Recursion
        M_0 = Phi(b) - Phi(a),  M_1 = phi(a) - phi(b),
        M_k = (k-1) M_{k-2} + a^{k-1} phi(a) - b^{k-1} phi(b).
    """
    def pdf(x):
        return 0.0 if np.isinf(x) else math.exp(-0.5 * x * x) / math.sqrt(2 * math.pi)

    def pow_pdf(x, p):
        return 0.0 if np.isinf(x) else x ** p * pdf(x)

    out = np.empty(k_max + 1)
    out[0] = ndtr(b) - ndtr(a)
    if k_max >= 1:
        out[1] = pdf(a) - pdf(b)
    for k in range(2, k_max + 1):
        out[k] = (k - 1) * out[k - 2] + pow_pdf(a, k - 1) - pow_pdf(b, k - 1)
    return out


def abs_poly_gauss_expectation(coeffs):
    """E|p(Z)| for Z ~ N(0,1) and a real polynomial p (coeffs low->high).

    Exact: split the line at the real roots of p, integrate p * phi on each
    segment with the incomplete-moment recursion, and sum absolute values.
    """
    coeffs = np.trim_zeros(np.asarray(coeffs, dtype=float), trim='b')
    if coeffs.size == 0:
        return 0.0
    deg = coeffs.size - 1
    roots = np.roots(coeffs[::-1])
    real_roots = np.sort(roots[np.abs(roots.imag) < 1e-10].real)
    cuts = np.concatenate(([-np.inf], real_roots, [np.inf]))
    total = 0.0
    for lo, hi in zip(cuts[:-1], cuts[1:]):
        if hi - lo < 1e-14:
            continue
        mom = incomplete_gauss_moments(deg, lo, hi)
        total += abs(float(np.dot(coeffs, mom[:deg + 1])))
    return total


def abs_hermite_expectation(m):
    """E|He_m(Z)| for the probabilists' Hermite polynomial, Z ~ N(0,1)."""
    basis = np.zeros(m + 1)
    basis[m] = 1.0
    return abs_poly_gauss_expectation(hermite_e.herme2poly(basis))
