"""Exponential time differencing for the nonlinear Lagrangian system.

The linear part is propagated exactly by the Hodge blocks; only the forcing
[0; N] is approximated. For a block with propagator E(h) and weights w1, w2
(see :func:`hookelab.propagator.duhamel_weights`):

    etd1:    U+ = E U + w1 N(U)
    etd2rk:  a = E U + w1 N(U),  U+ = a + w2 (N(a) - N(U))
"""

from __future__ import annotations

from dataclasses import dataclass, field
import math

import numpy as np

from .diagnostics import energy_functionals, make_record
from .errors import AdmissibilityError, NonFiniteStateError
from .nonlinear import forcing_from_spectral, kinematics_from_gradient
from .params import SimParams
from .propagator import (
    block_propagator,
    char_roots,
    duhamel_weights,
    linear_trajectory,
    split_parallel,
)
from .spectral import Grid, gradient, to_physical, to_spectral

SCHEMES = ("etd1", "etd2rk")


@dataclass(frozen=True)
class SimState:
    eta_hat: np.ndarray
    u_hat: np.ndarray
    t: float = 0.0

    @classmethod
    def from_physical(cls, eta, u, grid: Grid, t: float = 0.0) -> "SimState":
        """Transform and drop the Nyquist planes, which have no conjugate
        partner on an even grid."""
        keep = grid.nyquist_keep
        return cls(to_spectral(eta, grid) * keep, to_spectral(u, grid) * keep, float(t))

    def physical(self, grid: Grid) -> tuple:
        return to_physical(self.eta_hat, grid), to_physical(self.u_hat, grid)


@dataclass(frozen=True)
class StepConfig:
    dt: float = None  # None: advective default at the start of a run
    scheme: str = "etd2rk"
    dealias: bool = True
    admissibility_check_every: int = 1

    def __post_init__(self):
        if self.dt is not None and not self.dt > 0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        if self.scheme not in SCHEMES:
            raise ValueError(f"scheme must be one of {SCHEMES}, got {self.scheme!r}")
        if self.admissibility_check_every < 0:
            raise ValueError("admissibility_check_every must be >= 0")


def default_dt(u: np.ndarray, grid: Grid, cap: float = 0.1) -> float:
    """min(cap, 0.5 dx / max|u|)."""
    umax = float(np.abs(u).max()) if u.size else 0.0
    if umax == 0.0:
        return cap
    return min(cap, 0.5 * grid.spacing / umax)


class _BlockStep:
    """Propagator and Duhamel weights of one Hodge block over the lattice."""

    def __init__(self, c_visc, c_stiff, grid: Grid, h: float):
        mag = grid.xi_mag
        roots = char_roots(mag, c_visc, c_stiff)
        self.E = block_propagator(roots, c_visc, c_stiff, mag, h)
        self.W = duhamel_weights(c_visc, c_stiff, mag, h, block=self.E)

    def advance(self, a, b):
        return self.E.apply(a, b)

    def kick(self, f, second: bool = False):
        W = self.W
        if second:
            return W.w2_top * f, W.w2_bot * f
        return W.w1_top * f, W.w1_bot * f


class Stepper:
    """Caches the per-mode coefficients for a fixed (params, grid, dt)."""

    def __init__(self, params: SimParams, grid: Grid, cfg: StepConfig, dt: float):
        self.params = params
        self.grid = grid
        self.cfg = cfg
        self.dt = float(dt)
        self.comp = _BlockStep(params.visc_compressible, params.stiff_compressible, grid, dt)
        self.sol = _BlockStep(params.visc_solenoidal, params.stiff_solenoidal, grid, dt)
        self.calls = 0

    def forcing(self, eta_hat, u_hat, t, check=True):
        f = forcing_from_spectral(
            eta_hat, u_hat, self.grid, self.params, dealias=self.cfg.dealias,
            check=check, time=t,
        )
        return f.n_hat, f.kin

    def _linear(self, eta_hat, u_hat):
        ep, es = split_parallel(eta_hat, self.grid)
        up, us = split_parallel(u_hat, self.grid)
        a, b = self.comp.advance(ep, up)
        c, d = self.sol.advance(es, us)
        return a + c, b + d

    def _kick(self, n_hat, second=False):
        npar, nperp = split_parallel(n_hat, self.grid)
        a, b = self.comp.kick(npar, second)
        c, d = self.sol.kick(nperp, second)
        return a + c, b + d

    def step(self, s: SimState, forcing=None, check: bool = True):
        """Advance one step. ``forcing(eta_hat, u_hat, t)`` overrides the
        nonlinearity (used for synthetic tests); returns (state, min J)."""
        t = s.t
        min_j = float("nan")
        if forcing is None:
            n0, kin = self.forcing(s.eta_hat, s.u_hat, t, check)
            min_j = kin.min_j
        else:
            n0 = forcing(s.eta_hat, s.u_hat, t)
        le, lu = self._linear(s.eta_hat, s.u_hat)
        ke, ku = self._kick(n0)
        eta1, u1 = le + ke, lu + ku
        if self.cfg.scheme == "etd2rk":
            t1 = t + self.dt
            if forcing is None:
                n1, _ = self.forcing(eta1, u1, t1, check=False)
            else:
                n1 = forcing(eta1, u1, t1)
            ke2, ku2 = self._kick(n1 - n0, second=True)
            eta1, u1 = eta1 + ke2, u1 + ku2
        new = SimState(eta1, u1, t + self.dt)
        if not (np.all(np.isfinite(eta1)) and np.all(np.isfinite(u1))):
            raise NonFiniteStateError(time=new.t)
        return new, min_j


def etd_step(
    s: SimState, cfg: StepConfig, params: SimParams, grid: Grid, forcing=None
) -> SimState:
    """One exponential step; see the module docstring."""
    dt = cfg.dt if cfg.dt is not None else default_dt(to_physical(s.u_hat, grid), grid)
    state, _ = Stepper(params, grid, cfg, dt).step(s, forcing=forcing)
    return state


@dataclass
class SimulationResult:
    times: list = field(default_factory=list)
    states: list = field(default_factory=list)
    records: list = field(default_factory=list)
    dt: float = None
    aborted: bool = False


def _as_state(initial, grid: Grid) -> SimState:
    if isinstance(initial, SimState):
        return initial
    eta0, u0 = initial
    return SimState.from_physical(np.asarray(eta0), np.asarray(u0), grid)


def _grid_of(initial, grid):
    if grid is not None:
        return grid
    g = getattr(initial, "grid", None)
    if g is None:
        eta0 = initial.eta_hat if isinstance(initial, SimState) else initial[0]
        g = Grid(eta0.shape[-1])
    return g


def simulate(
    initial,
    cfg: StepConfig,
    params: SimParams,
    t_end: float,
    record_every: int = 1,
    grid: Grid = None,
    keep_states: bool = True,
) -> SimulationResult:
    """Fixed-step run from ``initial`` (physical ``(eta0, u0)``, InitialData
    or SimState) to ``t_end``; the last step lands exactly on t_end.

    On admissibility loss or a non-finite state the raised error carries the
    result accumulated so far in ``.partial``.
    """
    if t_end < 0:
        raise ValueError("t_end must be nonnegative")
    if record_every < 1:
        raise ValueError("record_every must be >= 1")
    grid = _grid_of(initial, grid)
    state = _as_state(initial, grid)
    dt = cfg.dt if cfg.dt is not None else default_dt(to_physical(state.u_hat, grid), grid)
    n_steps = max(1, math.ceil(t_end / dt - 1e-12)) if t_end > 0 else 0
    dt = t_end / n_steps if n_steps else dt
    result = SimulationResult(dt=dt)

    grad0 = to_physical(gradient(state.eta_hat, grid), grid)
    kin0 = kinematics_from_gradient(grad0, check=True, time=state.t)
    energy0, _ = energy_functionals((state.eta_hat, state.u_hat), state.t, params, grid)

    def record(s, min_j):
        result.times.append(s.t)
        if keep_states:
            result.states.append(s)
        result.records.append(
            make_record((s.eta_hat, s.u_hat), s.t, params, grid, min_j, energy0)
        )

    record(state, kin0.min_j)
    if n_steps == 0:
        return result
    stepper = Stepper(params, grid, cfg, dt)
    every = cfg.admissibility_check_every
    min_j = kin0.min_j
    try:
        for i in range(1, n_steps + 1):
            check = every > 0 and (i - 1) % every == 0
            state, mj = stepper.step(state, check=check)
            if math.isfinite(mj):
                min_j = mj
            if i == n_steps:
                state = SimState(state.eta_hat, state.u_hat, t_end)
            if i % record_every == 0 or i == n_steps:
                # min J of the recorded state itself
                g = to_physical(gradient(state.eta_hat, grid), grid)
                kin = kinematics_from_gradient(g, check=every > 0, time=state.t)
                min_j = kin.min_j
                record(state, min_j)
    except (AdmissibilityError, NonFiniteStateError) as exc:
        result.aborted = True
        exc.partial = result
        raise
    return result


def mode_oracle(xi_mag, c_visc, c_stiff, v0, t, rk4_steps) -> np.ndarray:
    """Classical RK4 for d/dt [a, b] = [[0, 1], [-s r^2, -c r^2]] [a, b].

    Vectorized over samples: every argument broadcasts to a common shape
    (``v0`` carries a leading axis of length 2). Raises if dt |gamma| > 0.1
    for any sample.
    """
    xi = np.asarray(xi_mag, dtype=float)
    cv = np.asarray(c_visc, dtype=float)
    cs = np.asarray(c_stiff, dtype=float)
    tt = np.asarray(t, dtype=float)
    steps = np.asarray(rk4_steps)
    v0 = np.asarray(v0, dtype=complex)
    shape = np.broadcast(xi, cv, cs, tt, steps, v0[0]).shape
    xi, cv, cs, tt, steps = (np.broadcast_to(x, shape) for x in (xi, cv, cs, tt, steps))
    if np.any(tt < 0):
        raise ValueError("time must be nonnegative")
    if np.any(steps < 1) or not np.all(np.equal(np.mod(steps, 1), 0)):
        raise ValueError("rk4_steps must be positive integers")
    steps = steps.astype(int)
    r2 = xi * xi
    a_coef, b_coef = cs * r2, cv * r2
    h = tt / steps
    # spectral radius of the mode matrix, per sample
    disc = np.sqrt((0.25 * b_coef * b_coef - a_coef).astype(complex))
    gam = np.maximum(np.abs(-0.5 * b_coef + disc), np.abs(-0.5 * b_coef - disc))
    if np.any(h * gam > 0.1):
        worst = float(np.max(h * gam))
        raise ValueError(f"rk4 step too large: dt*|gamma| = {worst:.3g} > 0.1")

    def rhs(x, y):
        return y, -a_coef * x - b_coef * y

    x = np.broadcast_to(v0[0], shape).astype(complex)
    y = np.broadcast_to(v0[1], shape).astype(complex)
    for i in range(int(steps.max(initial=0))):
        live = i < steps
        k1 = rhs(x, y)
        k2 = rhs(x + 0.5 * h * k1[0], y + 0.5 * h * k1[1])
        k3 = rhs(x + 0.5 * h * k2[0], y + 0.5 * h * k2[1])
        k4 = rhs(x + h * k3[0], y + h * k3[1])
        nx = x + h / 6 * (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0])
        ny = y + h / 6 * (k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1])
        x = np.where(live, nx, x)
        y = np.where(live, ny, y)
    return np.stack([x, y])


@dataclass
class GapResult:
    times: np.ndarray
    gap_energy: np.ndarray  # E of (eta - eta_lin, u - u_lin)
    gap_dissipation: np.ndarray
    dissipation_integral: np.ndarray  # trapezoid of gap_dissipation
    field_size: np.ndarray  # E of the nonlinear state, for scale

    @property
    def sup_gap(self) -> float:
        return float(np.max(self.gap_energy))


def linear_nonlinear_gap(
    initial,
    cfg: StepConfig,
    params: SimParams,
    t_end: float,
    record_every: int = 1,
    grid: Grid = None,
) -> GapResult:
    """Run both solvers from the same data and measure their difference with
    the energy functional."""
    grid = _grid_of(initial, grid)
    state0 = _as_state(initial, grid)
    run = simulate(state0, cfg, params, t_end, record_every, grid=grid)
    times = np.asarray(run.times)
    lin = linear_trajectory((state0.eta_hat, state0.u_hat), times, params, grid)
    ge, gd, fe = [], [], []
    for s, (le, lu) in zip(run.states, lin):
        e, d = energy_functionals((s.eta_hat - le, s.u_hat - lu), s.t, params, grid)
        ge.append(e)
        gd.append(d)
        fe.append(energy_functionals((s.eta_hat, s.u_hat), s.t, params, grid)[0])
    gd = np.asarray(gd)
    integral = np.concatenate([[0.0], np.cumsum(0.5 * np.diff(times) * (gd[1:] + gd[:-1]))])
    return GapResult(
        times=times,
        gap_energy=np.asarray(ge),
        gap_dissipation=gd,
        dissipation_integral=integral,
        field_size=np.asarray(fe),
    )
