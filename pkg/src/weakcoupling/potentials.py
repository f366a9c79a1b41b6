"""Fourier-side pair interaction family.

The interaction enters every operator in this package only through its Fourier
transform, so the potential is defined directly on the Fourier side as

    phi_hat(h) = A * (c0 + |h|^(2n)) * exp(-a |h|^2),   h in R^3.

This family is even, real, Schwartz class, and (for c0 = 0) vanishes at the
origin to order 2n.  With n >= 6 the vanishing order is >= 12, which clears the
"at least 11th order" admissibility bar; c0 > 0 exists only to violate the
vanishing condition on purpose for the necessity demonstrations.  The physical
side phi(x) is never materialized.

Convention: phi_hat(h) = integral phi(x) exp(-i h.x) dx, with the inverse
carrying (2pi)^-3, i.e. the convention under which
integral exp(i xi.x) dxi = (2pi)^3 delta(x).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

THEOREM_MIN_ORDER = 11


@dataclass(frozen=True)
class PairPotential:
    """Polynomial-times-Gaussian Fourier-side potential.

    amplitude        A >= 0 (0 gives the identically-zero potential)
    vanishing_order  n >= 0, phi_hat ~ |h|^(2n) near the origin when offset = 0
    width            a > 0, Gaussian decay rate exp(-a |h|^2)
    offset           c0 >= 0, constant admixture so phi_hat(0) = c0 * A
    """

    amplitude: float = 1.0
    vanishing_order: int = 6
    width: float = 1.0
    offset: float = 0.0

    def __post_init__(self):
        if self.amplitude < 0:
            raise ValueError("amplitude must be nonnegative")
        if self.vanishing_order < 0 or int(self.vanishing_order) != self.vanishing_order:
            raise ValueError("vanishing_order must be a nonnegative integer")
        if self.width <= 0:
            raise ValueError("width must be positive")
        if self.offset < 0:
            raise ValueError("offset must be nonnegative")

    def scaled(self, lam: float) -> "PairPotential":
        """Potential with phi_hat multiplied pointwise by lam."""
        return PairPotential(lam * self.amplitude, self.vanishing_order,
                             self.width, self.offset)


def eval_phi_hat(p: PairPotential, h) -> np.ndarray | float:
    """Evaluate phi_hat(h) = A (c0 + |h|^(2n)) exp(-a |h|^2).

    `h` is a 3-vector or an (..., 3) array; evenness under h -> -h is exact
    because only |h|^2 enters the arithmetic.
    """
    h = np.asarray(h, dtype=float)
    r2 = np.sum(h * h, axis=-1)
    return phi_hat_radial2(p, r2)


def phi_hat_radial2(p: PairPotential, r2) -> np.ndarray | float:
    """phi_hat as a function of |h|^2 (the whole family is radial)."""
    r2 = np.asarray(r2, dtype=float)
    return p.amplitude * (p.offset + r2 ** p.vanishing_order) * np.exp(-p.width * r2)


def check_vanishing_order(p: PairPotential) -> int:
    """Order to which phi_hat vanishes at the origin: 2n if c0 = 0, else 0."""
    if p.offset > 0:
        return 0
    return 2 * p.vanishing_order


def is_theorem_class(p: PairPotential) -> bool:
    """Whether the potential satisfies the admissibility hypothesis (order >= 11)."""
    return check_vanishing_order(p) >= THEOREM_MIN_ORDER


def schwartz_envelope(p: PairPotential):
    """(K, R) such that |phi_hat(h)| <= A (c0 + 1) K exp(-a |h|^2 / 2) for |h| >= R.

    Take R = max(1, sqrt(2n/a)): beyond R the polynomial is dominated by the
    half Gaussian, with K = max over r >= R of (c0 + r^(2n)) e^(-a r^2 / 2)
    divided by (c0 + 1); the maximum of r^(2n) e^(-a r^2/2) sits at r^2 = 2n/a.
    """
    n, a, c0 = p.vanishing_order, p.width, p.offset
    r_star2 = max(2.0 * n / a, 1.0)
    radius = np.sqrt(r_star2)
    peak = (c0 + r_star2 ** n) * np.exp(-a * r_star2 / 2.0)
    return peak / (c0 + 1.0), radius
