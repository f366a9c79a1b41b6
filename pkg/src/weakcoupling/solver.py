"""Homogeneous kinetic solver on a cubic velocity grid.

Integrates d f / dt = Q(f, f) (quantum Boltzmann) or the Uehling-Uhlenbeck
right-hand side with quantum factors (1 + 8 pi^3 theta f) on a uniform grid
over [-L, L]^3, with a classical explicit fourth-order one-step method.
Diagnostics: trapezoidal moments (mass, momentum, energy = <|v|^2/2>), the H
functional (classical f log f, or the quantum counterpart matching the
collision bracket), optional per-step projection onto the affine set of
grid states sharing the pre-step moments, and a positivity clamp whose
removed mass is logged on the state.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import StabilityViolation, ToleranceNotMet
from .limits import (CollisionKernelConfig, EIGHT_PI3, StatisticsFlag,
                     qb_collision_grid, uu_collision_grid)
from .potentials import PairPotential, phi_hat_radial2

_F_FLOOR = 1e-300


@dataclass(frozen=True)
class VelocityGridState:
    """Nonnegative grid samples of f(v) on [-extent, extent]^3."""

    extent: float
    values: np.ndarray          # (N, N, N)
    time: float = 0.0
    clamped_mass: float = 0.0   # mass removed by the positivity clamp, last step

    def __post_init__(self):
        vals = np.array(self.values, dtype=float)
        if vals.ndim != 3 or len(set(vals.shape)) != 1:
            raise ValueError("values must be a cubic (N, N, N) array")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    @property
    def n_axis(self) -> int:
        return self.values.shape[0]

    def axis(self) -> np.ndarray:
        return np.linspace(-self.extent, self.extent, self.n_axis)

    def spacing(self) -> float:
        return 2.0 * self.extent / (self.n_axis - 1)

    def velocities(self) -> np.ndarray:
        g = self.axis()
        return np.stack(np.meshgrid(g, g, g, indexing="ij"), axis=-1)


def grid_from_function(f, extent: float, n_axis: int, time: float = 0.0) -> VelocityGridState:
    g = np.linspace(-extent, extent, n_axis)
    V = np.stack(np.meshgrid(g, g, g, indexing="ij"), axis=-1)
    vals = np.asarray(f(V.reshape(-1, 3)), dtype=float).reshape(n_axis, n_axis, n_axis)
    return VelocityGridState(extent=extent, values=np.maximum(vals, 0.0), time=time)


def trapezoid_weights(state: VelocityGridState) -> np.ndarray:
    n = state.n_axis
    w1 = np.full(n, state.spacing())
    w1[0] *= 0.5
    w1[-1] *= 0.5
    return w1[:, None, None] * w1[None, :, None] * w1[None, None, :]


def moments(state: VelocityGridState):
    """(mass, momentum 3-vector, energy) with energy = int |v|^2/2 f dv."""
    w = trapezoid_weights(state)
    V = state.velocities()
    f = state.values
    mass = float(np.sum(w * f))
    mom = np.array([float(np.sum(w * f * V[..., i])) for i in range(3)])
    energy = float(np.sum(w * f * 0.5 * np.sum(V * V, axis=-1)))
    return mass, mom, energy


def h_functional(state: VelocityGridState, stats: StatisticsFlag | None = None,
                 floor: float = 1e-14) -> float:
    """H = int f log f dv (classical), or with the quantum counterpart term
    - theta (1 + 8 pi^3 theta f) log(1 + 8 pi^3 theta f) / 8 pi^3 when a
    statistics flag is given (a diagnostic matching the collision bracket,
    non-increasing along trajectories).  Nodes with f below `floor` are
    excluded."""
    w = trapezoid_weights(state)
    f = state.values
    mask = f > floor
    if not np.any(mask):
        return 0.0
    fm = f[mask]
    out = fm * np.log(fm)
    if stats is not None:
        g = EIGHT_PI3 * stats.theta * fm
        out = out - stats.theta * (1.0 + g) * np.log1p(g) / EIGHT_PI3
    return float(np.sum(w[mask] * out))


@dataclass(frozen=True)
class SolverConfig:
    dt: float
    steps: int
    collision: CollisionKernelConfig = field(default_factory=CollisionKernelConfig)
    stats: StatisticsFlag | None = None      # None -> quantum Boltzmann Q(f, f)
    conservation_projection: bool = False
    stability_factor: float = 0.5

    def __post_init__(self):
        if self.dt < 0 or self.steps < 0:
            raise ValueError("dt and steps must be nonnegative")


def _collision_rate_bound(state: VelocityGridState, potential: PairPotential,
                          stats: StatisticsFlag | None) -> float:
    """Lipschitz proxy for the collision RHS: twice the collision-frequency
    bound nu <= (4 pi / 8 pi^2) k_hat(0) * max plane density of f, times the
    quantum enhancement (1 + 8 pi^3 max f)^2 for the UU bracket."""
    r = np.linspace(0, 25, 4001)
    khat0 = 2.0 * np.trapz(r * phi_hat_radial2(potential, r * r) ** 2, r)
    h = state.spacing()
    f = state.values
    plane_max = max(float(f.sum(axis=(1, 2)).max(initial=0.0)),
                    float(f.sum(axis=(0, 2)).max(initial=0.0)),
                    float(f.sum(axis=(0, 1)).max(initial=0.0))) * h * h
    enh = 1.0
    if stats is not None:
        enh = (1.0 + EIGHT_PI3 * float(f.max(initial=0.0))) ** 2
    return 2.0 * khat0 * plane_max * enh / (2.0 * math.pi)


def rhs_qb(state: VelocityGridState, potential: PairPotential,
           cfg: CollisionKernelConfig = CollisionKernelConfig()) -> np.ndarray:
    """Q(f, f) at every grid node (quantum Boltzmann collision operator)."""
    return qb_collision_grid(state.values, state.extent, potential, cfg)


def rhs_uu(state: VelocityGridState, potential: PairPotential,
           stats: StatisticsFlag,
           cfg: CollisionKernelConfig = CollisionKernelConfig()) -> np.ndarray:
    """Uehling-Uhlenbeck right-hand side; for fermions, warn (not raise) when
    the Pauli bound 8 pi^3 f <= 1 is violated on the grid."""
    if stats.theta == -1:
        peak = EIGHT_PI3 * float(state.values.max(initial=0.0))
        if peak > 1.0 + 1e-12:
            import warnings
            warnings.warn(f"fermion state violates the Pauli bound: "
                          f"8 pi^3 max f = {peak:.4f} > 1", stacklevel=2)
    return uu_collision_grid(state.values, state.extent, potential, stats, cfg)


def _rhs(state, config, potential):
    if config.stats is None:
        return rhs_qb(state, potential, config.collision)
    return rhs_uu(state, potential, config.stats, config.collision)


def _moment_matrix(state: VelocityGridState) -> np.ndarray:
    w = trapezoid_weights(state).ravel()
    V = state.velocities().reshape(-1, 3)
    rows = [w, w * V[:, 0], w * V[:, 1], w * V[:, 2],
            w * 0.5 * np.sum(V * V, axis=1)]
    return np.stack(rows)


def _project_moments(values: np.ndarray, state_like: VelocityGridState,
                     target: np.ndarray) -> np.ndarray:
    """Least-squares correction onto {A f = target} (mass, momentum, energy)."""
    A = _moment_matrix(state_like)
    resid = target - A @ values.ravel()
    corr = A.T @ np.linalg.solve(A @ A.T, resid)
    return values + corr.reshape(values.shape)


def step(state: VelocityGridState, config: SolverConfig,
         potential: PairPotential) -> VelocityGridState:
    """One classical RK4 step; optional moment projection; positivity clamp."""
    if config.dt == 0.0:
        return state
    lip = _collision_rate_bound(state, potential, config.stats)
    if config.dt * lip > config.stability_factor:
        raise StabilityViolation(
            f"dt * L = {config.dt * lip:.3g} exceeds {config.stability_factor} "
            f"(L estimate {lip:.3g})")
    dt = config.dt
    f0 = state.values
    k1 = _rhs(state, config, potential)
    k2 = _rhs(replace(state, values=np.maximum(f0 + 0.5 * dt * k1, 0.0)),
              config, potential)
    k3 = _rhs(replace(state, values=np.maximum(f0 + 0.5 * dt * k2, 0.0)),
              config, potential)
    k4 = _rhs(replace(state, values=np.maximum(f0 + dt * k3, 0.0)),
              config, potential)
    new_vals = f0 + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
    if config.conservation_projection:
        target = _moment_matrix(state) @ f0.ravel()
        new_vals = _project_moments(new_vals, state, target)
    clamped = np.minimum(new_vals, 0.0)
    w = trapezoid_weights(state)
    clamped_mass = float(-np.sum(w * clamped))
    new_vals = np.maximum(new_vals, 0.0)
    return VelocityGridState(extent=state.extent, values=new_vals,
                             time=state.time + dt, clamped_mass=clamped_mass)


def run(state: VelocityGridState, config: SolverConfig,
        potential: PairPotential, record=None):
    """Advance `config.steps` steps; `record(state)` is called after each step
    (and once on the initial state).  Returns the final state."""
    if record is not None:
        record(state)
    for _ in range(config.steps):
        state = step(state, config, potential)
        if record is not None:
            record(state)
    return state


def trajectory_rows(states, stats: StatisticsFlag | None = None):
    """CSV rows (t, mass, momentum_x/y/z, energy, H, clamped_mass)."""
    rows = []
    for s in states:
        mass, mom, energy = moments(s)
        rows.append({
            "t": s.time, "mass": mass,
            "momentum_x": mom[0], "momentum_y": mom[1], "momentum_z": mom[2],
            "energy": energy, "H": h_functional(s, stats),
            "clamped_mass": s.clamped_mass,
        })
    return rows


# convenient initial data ----------------------------------------------------

def maxwellian(mass=1.0, temperature=1.0, drift=(0.0, 0.0, 0.0)):
    drift = np.asarray(drift, dtype=float)

    def f(v):
        v = np.asarray(v, dtype=float)
        d = v - drift
        e = 0.5 * np.sum(d * d, axis=-1) / temperature
        return mass * np.exp(-e) / (2.0 * math.pi * temperature) ** 1.5
    return f


def bose_einstein(fugacity=0.5, temperature=1.0):
    """f with 8 pi^3 f / (1 + 8 pi^3 f) = z exp(-|v|^2 / 2T): the stationary
    family of the full quantum bracket at theta = +1."""
    if not 0.0 < fugacity < 1.0:
        raise ValueError("fugacity must lie in (0, 1)")

    def f(v):
        v = np.asarray(v, dtype=float)
        w = fugacity * np.exp(-0.5 * np.sum(v * v, axis=-1) / temperature)
        return w / (1.0 - w) / EIGHT_PI3
    return f


def fermi_dirac(fugacity=0.5, temperature=1.0):
    def f(v):
        v = np.asarray(v, dtype=float)
        w = fugacity * np.exp(-0.5 * np.sum(v * v, axis=-1) / temperature)
        return w / (1.0 + w) / EIGHT_PI3
    return f
