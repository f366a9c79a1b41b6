"""Seeded, sharded Monte Carlo with importance sampling, plus a tensor-grid oracle.

Reproducibility contract: each shard owns the Philox substream
Philox(key=seed).jumped(shard_index) (a counter-based split), draws its
samples serially, and shard results are reduced in shard order.  Two runs with
the same (seed, shard_count, n_samples) are bit identical regardless of how
shards are scheduled; changing shard_count may move the value within its error
bar and is not promised invariant.

The oracle is a composite Gauss-Legendre tensor grid over at most 7
dimensions; its error bound is the difference against the same rule at doubled
node counts.  It exists to validate every Monte Carlo estimator on shrunk
configurations through an independent integration route.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.special import gammaln

from .errors import DimensionTooHigh, NonConvergentEstimate
from .states import MCEstimate

_LOG_2PI = math.log(2.0 * math.pi)


# ---------------------------------------------------------------------------
# proposal families
# ---------------------------------------------------------------------------

class GaussianProposal:
    """N(mean, cov) block of dimension d."""

    def __init__(self, mean, cov):
        self.mean = np.atleast_1d(np.asarray(mean, dtype=float))
        cov = np.asarray(cov, dtype=float)
        if cov.ndim == 0:
            cov = cov * np.eye(self.mean.size)
        self.cov = cov
        self.dim = self.mean.size
        self._chol = np.linalg.cholesky(cov)
        self._prec = np.linalg.inv(cov)
        sign, logdet = np.linalg.slogdet(cov)
        self._log_norm = -0.5 * (self.dim * _LOG_2PI + logdet)

    def sample(self, rng, n):
        z = rng.standard_normal((n, self.dim))
        return self.mean + z @ self._chol.T

    def logpdf(self, x):
        d = x - self.mean
        quad = np.einsum("...i,ij,...j->...", d, self._prec, d)
        return self._log_norm - 0.5 * quad


class ExponentialProposal:
    """rate * exp(-rate * (x - lo)) on [lo, inf); dimension 1."""

    dim = 1

    def __init__(self, rate, lo=0.0):
        if rate <= 0:
            raise ValueError("rate must be positive")
        self.rate = float(rate)
        self.lo = float(lo)

    def sample(self, rng, n):
        return self.lo + rng.exponential(1.0 / self.rate, size=(n, 1))

    def logpdf(self, x):
        x = x[..., 0]
        out = np.full(x.shape, -np.inf)
        ok = x >= self.lo
        out[ok] = math.log(self.rate) - self.rate * (x[ok] - self.lo)
        return out


class UniformProposal:
    """Uniform on [lo, hi]; optionally jitter-stratified within each batch."""

    dim = 1

    def __init__(self, lo, hi, stratified=False):
        if hi <= lo:
            raise ValueError("need hi > lo")
        self.lo, self.hi = float(lo), float(hi)
        self.stratified = stratified

    def sample(self, rng, n):
        u = rng.random(n)
        if self.stratified:
            u = (np.arange(n) + u) / n
        return (self.lo + (self.hi - self.lo) * u)[:, None]

    def logpdf(self, x):
        x = x[..., 0]
        inside = (x >= self.lo) & (x <= self.hi)
        return np.where(inside, -math.log(self.hi - self.lo), -np.inf)


class MixtureProposal:
    """Finite mixture of same-dimension proposals."""

    def __init__(self, components):
        weights = np.array([w for w, _ in components], dtype=float)
        if np.any(weights <= 0):
            raise ValueError("mixture weights must be positive")
        self.weights = weights / weights.sum()
        self.parts = [p for _, p in components]
        dims = {p.dim for p in self.parts}
        if len(dims) != 1:
            raise ValueError("mixture components must share a dimension")
        self.dim = dims.pop()

    def sample(self, rng, n):
        choice = rng.random(n)
        edges = np.cumsum(self.weights)
        out = np.empty((n, self.dim))
        lo = 0.0
        for w_edge, part in zip(edges, self.parts):
            mask = (choice >= lo) & (choice < w_edge)
            m = int(mask.sum())
            if m:
                out[mask] = part.sample(rng, m)
            lo = w_edge
        return out

    def logpdf(self, x):
        logs = np.stack([math.log(w) + p.logpdf(x)
                         for w, p in zip(self.weights, self.parts)], axis=0)
        m = np.max(logs, axis=0)
        m = np.where(np.isfinite(m), m, 0.0)
        return m + np.log(np.sum(np.exp(logs - m), axis=0))


class PolyGaussianProposal:
    """Density on R^3 proportional to (sum_j c_j |h|^{2 p_j}) exp(-h^T B h).

    Exact sampling: direction u uniform on S^2; given u, y = |h|^2 follows a
    Gamma mixture with rate beta(u) = u^T B u, shapes p_j + 3/2 and direction-
    dependent component weights.  Matches the radial profile of phi_hat (and
    of |phi_hat|^2) so the potential's polynomial ring is not a weight spike.
    """

    dim = 3

    def __init__(self, powers, coeffs, B):
        self.powers = np.asarray(powers, dtype=int)
        self.coeffs = np.asarray(coeffs, dtype=float)
        if np.any(self.coeffs <= 0):
            raise ValueError("component coefficients must be positive")
        B = np.asarray(B, dtype=float)
        if B.ndim == 0:
            B = B * np.eye(3)
        self.B = 0.5 * (B + B.T)
        np.linalg.cholesky(self.B)      # SPD check
        self._shapes = self.powers + 1.5
        self._log_coeffs = np.log(self.coeffs) + gammaln(self._shapes)

    def _beta(self, u):
        return np.einsum("...i,ij,...j->...", u, self.B, u)

    def _log_ztilde(self, beta):
        logs = self._log_coeffs - self._shapes * np.log(beta)[..., None]
        m = logs.max(axis=-1)
        return m + np.log(np.sum(np.exp(logs - m[..., None]), axis=-1))

    def sample(self, rng, n):
        u = rng.standard_normal((n, 3))
        u /= np.linalg.norm(u, axis=1, keepdims=True)
        beta = self._beta(u)
        logw = self._log_coeffs - self._shapes * np.log(beta)[:, None]
        logw -= logw.max(axis=1, keepdims=True)
        w = np.exp(logw)
        w /= w.sum(axis=1, keepdims=True)
        pick = (rng.random(n)[:, None] > np.cumsum(w, axis=1)).sum(axis=1)
        shape = self._shapes[pick]
        y = rng.gamma(shape) / beta
        return np.sqrt(y)[:, None] * u

    def logpdf(self, h):
        y = np.sum(h * h, axis=-1)
        u = h / np.sqrt(np.maximum(y, 1e-300))[..., None]
        beta = self._beta(u)
        poly = np.zeros(y.shape)
        for c, p in zip(self.coeffs, self.powers):
            poly += c * y ** p
        return (np.log(poly) - beta * y - math.log(2 * math.pi)
                - self._log_ztilde(beta))


class BlockProposal:
    """Named product of proposals; samples are dicts of (n, dim) arrays."""

    def __init__(self, blocks):
        self.blocks = dict(blocks)

    @property
    def names(self):
        return list(self.blocks)

    def sample(self, rng, n):
        return {name: p.sample(rng, n) for name, p in self.blocks.items()}

    def logpdf(self, samples):
        out = 0.0
        for name, p in self.blocks.items():
            out = out + p.logpdf(samples[name])
        return out


# ---------------------------------------------------------------------------
# Monte Carlo driver
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class QuadratureConfig:
    """Sharded importance-sampling configuration.

    proposal is a BlockProposal; the integrand receives the sampled block dict
    and returns (possibly complex) integrand values, which are divided by the
    proposal density here.  max_rel_stderr = inf disables the convergence
    guard; clip_quantile, when set, clips weight magnitudes at that per-shard
    quantile and records the implied bias bound (off by default; the necessity
    scan turns it on because its integrand diverges in the limit).
    """

    n_samples: int
    shard_count: int = 8
    seed: int = 20250810
    proposal: BlockProposal | None = None
    max_rel_stderr: float = math.inf
    clip_quantile: float | None = None
    chunk_size: int = 250_000

    def __post_init__(self):
        if self.n_samples <= 0 or self.shard_count <= 0:
            raise ValueError("n_samples and shard_count must be positive")
        if self.n_samples % self.shard_count:
            raise ValueError("n_samples must be divisible by shard_count")

    def with_proposal(self, proposal) -> "QuadratureConfig":
        return replace(self, proposal=proposal)


def shard_rng(seed: int, shard_index: int) -> np.random.Generator:
    """Counter-based substream for one shard."""
    return np.random.Generator(np.random.Philox(key=seed).jumped(shard_index))


def mc_integrate(integrand, config: QuadratureConfig) -> MCEstimate:
    """Importance-sampled integral of `integrand` under config.proposal.

    Unbiased (up to optional clipping); stderr from the spread of shard means;
    deterministic for fixed (seed, shard_count, n_samples).
    """
    if config.proposal is None:
        raise ValueError("QuadratureConfig.proposal is required")
    t0 = time.perf_counter()
    per_shard = config.n_samples // config.shard_count
    shard_means = np.empty(config.shard_count, dtype=complex)
    clip_bias = 0.0
    for s in range(config.shard_count):
        rng = shard_rng(config.seed, s)
        acc = 0.0 + 0.0j
        done = 0
        while done < per_shard:
            m = min(config.chunk_size, per_shard - done)
            samples = config.proposal.sample(rng, m)
            logq = config.proposal.logpdf(samples)
            vals = np.asarray(integrand(samples), dtype=complex)
            w = vals * np.exp(-logq)
            w[~np.isfinite(w)] = 0.0
            if config.clip_quantile is not None:
                mag = np.abs(w)
                cap = np.quantile(mag, config.clip_quantile)
                over = mag > cap
                if np.any(over):
                    clip_bias += float(np.sum(mag[over] - cap)) / config.n_samples
                    w[over] *= cap / mag[over]
            acc += w.sum()
            done += m
        shard_means[s] = acc / per_shard
    value = shard_means.mean()                       # ordered, fixed shard count
    if config.shard_count > 1:
        spread = shard_means - value
        se_re = np.sqrt(np.sum(spread.real ** 2)
                        / (config.shard_count - 1) / config.shard_count)
        se_im = np.sqrt(np.sum(spread.imag ** 2)
                        / (config.shard_count - 1) / config.shard_count)
    else:
        se_re = se_im = math.nan
    est = MCEstimate(value=float(value.real), stderr=float(se_re),
                     n_samples=config.n_samples, seed=config.seed,
                     wall_time_s=time.perf_counter() - t0,
                     imag_value=float(value.imag), imag_stderr=float(se_im),
                     shard_count=config.shard_count, clip_bias_bound=clip_bias)
    if math.isfinite(config.max_rel_stderr):
        scale = abs(est.value)
        if scale > 0 and est.stderr / scale > config.max_rel_stderr:
            raise NonConvergentEstimate(
                f"relative stderr {est.stderr / scale:.3g} exceeds "
                f"{config.max_rel_stderr} at n={config.n_samples}")
    return est


# ---------------------------------------------------------------------------
# deterministic tensor-grid oracle
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class OracleAxis:
    name: str
    dim: int
    nodes: int
    lo: float
    hi: float


@dataclass(frozen=True)
class OracleConfig:
    """Composite Gauss-Legendre tensor grid; total dimension capped at 7."""

    axes: tuple
    max_dim: int = 7
    chunk_size: int = 200_000

    def total_dim(self):
        return sum(a.dim for a in self.axes)

    def doubled(self) -> "OracleConfig":
        return replace(self, axes=tuple(replace(a, nodes=2 * a.nodes)
                                        for a in self.axes))


def _axis_rule(axis: OracleAxis):
    x, w = np.polynomial.legendre.leggauss(axis.nodes)
    half = 0.5 * (axis.hi - axis.lo)
    return axis.lo + half * (x + 1.0), half * w


def _tensor_eval(integrand, config: OracleConfig):
    scalar_nodes, scalar_weights, owners = [], [], []
    for a in config.axes:
        n, w = _axis_rule(a)
        for _ in range(a.dim):
            scalar_nodes.append(n)
            scalar_weights.append(w)
            owners.append(a)
    sizes = [len(n) for n in scalar_nodes]
    total = int(np.prod(sizes))
    value = 0.0 + 0.0j
    start = 0
    while start < total:
        stop = min(start + config.chunk_size, total)
        idx = np.arange(start, stop)
        coords = []
        rem = idx
        for size in reversed(sizes):
            coords.append(rem % size)
            rem = rem // size
        coords = coords[::-1]
        samples, weights = {}, np.ones(stop - start)
        pos = 0
        for a in config.axes:
            cols = []
            for _ in range(a.dim):
                cols.append(scalar_nodes[pos][coords[pos]])
                weights = weights * scalar_weights[pos][coords[pos]]
                pos += 1
            samples[a.name] = np.stack(cols, axis=-1)
        value += np.sum(weights * np.asarray(integrand(samples), dtype=complex))
        start = stop
    return value


def oracle_integrate(integrand, config: OracleConfig):
    """(value, error bound); bound is |value - value at doubled node counts|."""
    if config.total_dim() > config.max_dim:
        raise DimensionTooHigh(
            f"oracle limited to {config.max_dim} dims, got {config.total_dim()}")
    for a in config.axes:
        if a.nodes < 2:
            raise ValueError(f"axis {a.name} needs at least 2 nodes")
    base = _tensor_eval(integrand, config)
    fine = _tensor_eval(integrand, config.doubled())
    err = abs(fine - base)
    out = base.real if abs(base.imag) < 1e-12 * max(1.0, abs(base.real)) else base
    return out, float(err)
