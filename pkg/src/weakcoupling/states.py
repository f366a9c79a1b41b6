"""Gaussian k-particle trial data on phase space.

A state is f(x_1..x_k, v_1..v_k) = Z * prod_j exp(-1/2 (zeta_j - mu_j)^T P_j
(zeta_j - mu_j)) with zeta_j = (x_j, v_j) in R^6 and P_j symmetric positive
definite.  The family is closed under the only two operations the hierarchy
needs: free transport (x, v) -> (x - t v, v), which is an exact affine update
of means and precisions, and linear-phase integration over a coordinate block,
which produces a complex amplitude times another Gaussian profile.  Trial
hierarchy data is the transported tensor state f^{(k)}(t) = S^{(k)}(t) f0,
which keeps every inner integral of the reduction chain closed form.

Also here: the test observable J(x, v) (Gaussian, optionally cosine
modulated), Monte Carlo estimate records, and the per-particle W^{4,1}
regularity norm diagnostic.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import IllConditionedTransform, IncompatibleState, NonPositiveDefinite
from .gaussmath import abs_hermite_expectation, gauss_linear_phase_exponent

_TWO_PI = 2.0 * math.pi
_COND_LIMIT = 1e12


def _as_spd(P, name="precision"):
    P = np.array(P, dtype=float)
    if P.shape[-1] != P.shape[-2]:
        raise NonPositiveDefinite(f"{name} is not square: {P.shape}")
    if not np.allclose(P, np.swapaxes(P, -1, -2), rtol=0, atol=1e-10):
        raise NonPositiveDefinite(f"{name} is not symmetric")
    P = 0.5 * (P + np.swapaxes(P, -1, -2))
    try:
        np.linalg.cholesky(P)
    except np.linalg.LinAlgError as exc:
        raise NonPositiveDefinite(f"{name} is not positive definite") from exc
    return P


@dataclass(frozen=True)
class GaussianPhaseState:
    """Product-of-Gaussians k-particle phase-space density."""

    means: np.ndarray        # (k, 6)
    precisions: np.ndarray   # (k, 6, 6), each SPD
    amplitude: float = 1.0

    def __post_init__(self):
        means = np.atleast_2d(np.array(self.means, dtype=float))
        if means.shape[-1] != 6:
            raise IncompatibleState(f"means must be (k, 6), got {means.shape}")
        precs = _as_spd(self.precisions)
        if precs.ndim == 2:
            precs = precs[None]
        if precs.shape != (means.shape[0], 6, 6):
            raise IncompatibleState(
                f"precisions must be (k, 6, 6), got {precs.shape}")
        if self.amplitude < 0:
            raise ValueError("amplitude must be nonnegative")
        means.setflags(write=False)
        precs.setflags(write=False)
        object.__setattr__(self, "means", means)
        object.__setattr__(self, "precisions", precs)

    @property
    def k(self) -> int:
        return self.means.shape[0]

    def block_mass(self, j: int) -> float:
        """Mass of particle j's factor, amplitude excluded."""
        det = float(np.linalg.det(self.precisions[j]))
        return _TWO_PI ** 3 / math.sqrt(det)

    def mass(self) -> float:
        out = self.amplitude
        for j in range(self.k):
            out *= self.block_mass(j)
        return out

    def single_particle(self, j: int) -> "GaussianPhaseState":
        return GaussianPhaseState(self.means[j:j + 1], self.precisions[j:j + 1],
                                  self.amplitude)


def make_tensor_state(means, precisions, amplitude=1.0, *,
                      normalize=False) -> GaussianPhaseState:
    """Build a k-particle tensor state; optionally normalize to unit mass per particle."""
    state = GaussianPhaseState(means, precisions, amplitude)
    if normalize:
        z = 1.0
        for j in range(state.k):
            z /= state.block_mass(j)
        state = replace(state, amplitude=z)
    return state


def eval_state(state: GaussianPhaseState, x, v, dx=None, dv=None):
    """Evaluate f at positions x (..., k, 3) and velocities v (..., k, 3).

    dx / dv, when given, are additive offsets broadcastable to (k, 3): the
    evaluation point of particle j becomes (x_j + dx_j, v_j + dv_j).  Repeating
    a spatial argument across particles is just a choice of x.
    """
    x = np.asarray(x, dtype=float)
    v = np.asarray(v, dtype=float)
    if x.shape[-2:] != (state.k, 3) or v.shape[-2:] != (state.k, 3):
        raise IncompatibleState(
            f"points must end in (k={state.k}, 3), got {x.shape} and {v.shape}")
    if dx is not None:
        x = x + np.asarray(dx, dtype=float)
    if dv is not None:
        v = v + np.asarray(dv, dtype=float)
    zeta = np.concatenate([x, v], axis=-1)            # (..., k, 6)
    delta = zeta - state.means
    quad = np.einsum("...ki,kij,...kj->...", delta, state.precisions, delta)
    return state.amplitude * np.exp(-0.5 * quad)


def transport_block_params(mean, precision, t):
    """Mean/precision of one particle's factor after free transport by time t.

    (S(t) f)(x, v) = f(x - t v, v); in block form with P = [[Pxx, Pxv],
    [Pvx, Pvv]] the update is exact:
        mu_x <- mu_x + t mu_v,          mu_v <- mu_v,
        Pxx  <- Pxx,
        Pxv  <- Pxv - t Pxx,
        Pvv  <- Pvv - t (Pxv + Pvx) + t^2 Pxx.
    `t` may be an array; outputs broadcast to (..., 6) / (..., 6, 6).
    """
    t = np.asarray(t, dtype=float)
    tt = t[..., None]
    mean = np.asarray(mean, dtype=float)
    P = np.asarray(precision, dtype=float)
    Pxx, Pxv = P[:3, :3], P[:3, 3:]
    Pvx, Pvv = P[3:, :3], P[3:, 3:]
    mu = np.broadcast_to(mean, t.shape + (6,)).copy()
    mu[..., :3] += tt * mean[3:]
    out = np.empty(t.shape + (6, 6))
    t1 = t[..., None, None]
    out[..., :3, :3] = Pxx
    out[..., :3, 3:] = Pxv - t1 * Pxx
    out[..., 3:, :3] = Pvx - t1 * Pxx
    out[..., 3:, 3:] = Pvv - t1 * (Pxv + Pvx) + t1 ** 2 * Pxx
    return mu, out


def free_transport(state: GaussianPhaseState, t: float) -> GaussianPhaseState:
    """Exact free transport of every particle block; mass is preserved."""
    means = np.empty_like(state.means)
    precs = np.empty_like(state.precisions)
    for j in range(state.k):
        mu, P = transport_block_params(state.means[j], state.precisions[j],
                                       float(t))
        cond = np.linalg.cond(P)
        if not np.isfinite(cond) or cond > _COND_LIMIT:
            raise IllConditionedTransform(
                f"transport by t={t} gives condition number {cond:.3g}")
        means[j], precs[j] = mu, P
    return GaussianPhaseState(means, precs, state.amplitude)


@dataclass(frozen=True)
class ComplexGaussianFactor:
    """exp(c + b.s - 1/2 s^T Q s) over the surviving coordinates (b, c complex)."""

    Q: np.ndarray
    b: np.ndarray
    c: complex

    def value(self, s):
        s = np.asarray(s, dtype=float)
        quad = np.einsum("...i,ij,...j->...", s, self.Q, s)
        return np.exp(self.c + s @ self.b - 0.5 * quad)


def linear_phase_integral(mean, precision, theta, block=None):
    """integral exp(i theta.y) G(y, s) dy for one Gaussian factor G.

    `mean`/`precision` describe the factor exp(-1/2 (zeta-mean)^T P
    (zeta-mean)) on R^d; `block` lists the coordinates y to integrate out
    (default: all of them); `theta` has the block's dimension.  Returns the
    complex amplitude when the block is everything, else (amplitude 1.0,
    ComplexGaussianFactor in the surviving coordinates s) folded into a single
    ComplexGaussianFactor.  Eliminating x_2, x_3 and xi_1 in the hierarchy
    estimators is repeated use of this identity.
    """
    mean = np.asarray(mean, dtype=float)
    P = _as_spd(precision)
    d = mean.size
    theta = np.asarray(theta, dtype=float)
    if block is None:
        block = np.arange(d)
    block = np.asarray(block, dtype=int)
    if theta.shape != (block.size,):
        raise ValueError("theta must match the integrated block dimension")
    rest = np.setdiff1d(np.arange(d), block)
    Pyy = P[np.ix_(block, block)]
    mu_y = mean[block]
    if rest.size == 0:
        expo = gauss_linear_phase_exponent(Pyy, 1j * theta)
        return np.exp(expo + 1j * theta @ mu_y)
    Pys = P[np.ix_(block, rest)]
    Pss = P[np.ix_(rest, rest)]
    mu_s = mean[rest]
    Pyy_inv = np.linalg.inv(Pyy)
    schur = Pss - Pys.T @ Pyy_inv @ Pys
    w_lin = Pys.T @ Pyy_inv @ theta          # real vector on the s block
    sign, logdet = np.linalg.slogdet(Pyy)
    c = (-0.5 * mu_s @ schur @ mu_s + 1j * (w_lin @ mu_s)
         - 0.5 * theta @ Pyy_inv @ theta + 1j * theta @ mu_y
         + 0.5 * (block.size * math.log(_TWO_PI) - logdet))
    b = schur @ mu_s - 1j * w_lin
    return ComplexGaussianFactor(Q=schur, b=b, c=c)


@dataclass(frozen=True)
class TestObservable:
    """Real Schwartz test function J(x, v) on R^3 x R^3.

    J(zeta) = amplitude * exp(-1/2 (zeta - mean)^T P (zeta - mean)) * cos(kappa . zeta)
    with zeta = (x, v); kappa = None drops the modulation.
    """

    mean: np.ndarray
    precision: np.ndarray
    kappa: np.ndarray | None = None
    amplitude: float = 1.0

    def __post_init__(self):
        mean = np.array(self.mean, dtype=float).reshape(6)
        prec = _as_spd(self.precision, "observable precision")
        if prec.shape != (6, 6):
            raise ValueError("observable precision must be 6x6")
        mean.setflags(write=False)
        prec.setflags(write=False)
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "precision", prec)
        if self.kappa is not None:
            kap = np.array(self.kappa, dtype=float).reshape(6)
            kap.setflags(write=False)
            object.__setattr__(self, "kappa", kap)

    def __call__(self, x, v):
        x = np.asarray(x, dtype=float)
        v = np.asarray(v, dtype=float)
        zeta = np.concatenate([x, v], axis=-1)
        delta = zeta - self.mean
        quad = np.einsum("...i,ij,...j->...", delta, self.precision, delta)
        out = self.amplitude * np.exp(-0.5 * quad)
        if self.kappa is not None:
            out = out * np.cos(zeta @ self.kappa)
        return out

    def phase_branches(self):
        """(weight, kappa) pairs writing cos(kappa.zeta) as complex exponentials."""
        if self.kappa is None:
            return [(1.0, np.zeros(6))]
        return [(0.5, self.kappa), (0.5, -self.kappa)]


@dataclass(frozen=True)
class MCEstimate:
    """Monte Carlo value with shard-level error bar and seed provenance."""

    value: float
    stderr: float
    n_samples: int
    seed: int
    wall_time_s: float = 0.0
    imag_value: float = 0.0          # diagnostic: must sit at 0 within errors
    imag_stderr: float = 0.0
    shard_count: int = 1
    clip_bias_bound: float = 0.0

    def __add__(self, other):
        if not isinstance(other, MCEstimate):
            return NotImplemented
        return MCEstimate(
            value=self.value + other.value,
            stderr=math.hypot(self.stderr, other.stderr),
            n_samples=self.n_samples + other.n_samples,
            seed=self.seed,
            wall_time_s=self.wall_time_s + other.wall_time_s,
            imag_value=self.imag_value + other.imag_value,
            imag_stderr=math.hypot(self.imag_stderr, other.imag_stderr),
            shard_count=self.shard_count,
            clip_bias_bound=self.clip_bias_bound + other.clip_bias_bound,
        )


_W41_MAX_DERIV = 4


def w41_norm(state: GaussianPhaseState) -> float:
    """Per-particle W^{4,1} norm sum_j sum_{m<=4} (||d^m_{x_j} f||_1 + ||d^m_{v_j} f||_1).

    For vector coordinates the m-th derivative is taken per axis and summed.
    For a Gaussian factor, d^m along coordinate c produces a scaled Hermite
    polynomial in the linear statistic l = (P (zeta - mu))_c whose variance
    under the factor is P_cc, so each L^1 integral is
        mass * P_cc^{m/2} * E|He_m(Z)|,
    exactly.  The m = 0 term contributes ||f||_1 once for the x slot and once
    for the v slot of every particle.
    """
    mass = state.mass()
    cm = [abs_hermite_expectation(m) for m in range(_W41_MAX_DERIV + 1)]
    total = 0.0
    for j in range(state.k):
        diag = np.diag(state.precisions[j])
        contrib = 2.0                       # m = 0, x and v slots
        for m in range(1, _W41_MAX_DERIV + 1):
            contrib += cm[m] * float(np.sum(diag ** (m / 2.0)))
        total += contrib
    return mass * total


def state_to_dict(state: GaussianPhaseState) -> dict:
    return {
        "k": state.k,
        "blocks": [
            {"mean": state.means[j].tolist(),
             "precision": state.precisions[j].reshape(36).tolist()}
            for j in range(state.k)
        ],
        "amplitude": state.amplitude,
    }


def state_from_dict(data: dict) -> GaussianPhaseState:
    blocks = data["blocks"]
    if len(blocks) != data["k"]:
        raise IncompatibleState("block count does not match k")
    means = np.array([b["mean"] for b in blocks], dtype=float)
    precs = np.array([np.reshape(b["precision"], (6, 6)) for b in blocks],
                     dtype=float)
    return GaussianPhaseState(means, precs, float(data.get("amplitude", 1.0)))
