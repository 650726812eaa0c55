"""Fast invariant self-checks behind the ``validate`` subcommand."""

from __future__ import annotations

import io as _io
import math

import numpy as np
import scipy.linalg

from . import io
from .diagnostics import linear_energy_balance, make_record
from .hodge import decompose, reconstruct
from .integrator import SimState, StepConfig, Stepper, mode_oracle
from .nonlinear import RandomBand, kinematics, make_initial_data, nonlinear_force
from .params import SimParams
from .propagator import (
    LatticePropagator,
    assemble_green,
    block_propagator,
    char_roots,
    critical_wavenumber,
    duhamel_weights,
    iter_linear_trajectory,
    mode_matrix,
)
from .spectral import Grid, gradient_norms_sq, l2_norm_physical, to_physical, to_spectral


def _rel(a, b):
    return float(np.max(np.abs(a - b)) / max(np.max(np.abs(b)), 1e-300))


def run_checks(cfg: dict, seed: int = 0) -> list:
    rng = np.random.default_rng(seed)
    p = SimParams(cfg["mu"], cfg["lam"], cfg["kappa"], cfg["pressure_amp"], cfg["pressure_exp"])
    grid = Grid(16, cfg["box_len"])
    out = []

    def check(name, value, tol):
        out.append((name, bool(value <= tol), f"{value:.3g} (tol {tol:g})"))

    f = rng.normal(size=(3,) + grid.shape)
    F = to_spectral(f, grid)
    check("fft round trip", _rel(to_physical(F, grid), f), 1e-12)
    parseval = abs(gradient_norms_sq(F, grid, 0)[0] - l2_norm_physical(f, grid) ** 2)
    check("parseval", parseval / l2_norm_physical(f, grid) ** 2, 1e-12)

    G = to_spectral(rng.normal(size=(3,) + grid.shape), grid)
    F0, G0 = F.copy(), G.copy()
    F0[:, 0, 0, 0] = 0
    G0[:, 0, 0, 0] = 0
    e_back, u_back = reconstruct(decompose(F0, G0, grid), grid)
    keep = grid.nyquist_keep
    check("hodge round trip", max(_rel(e_back * keep, F0 * keep), _rel(u_back * keep, G0 * keep)), 1e-12)

    cv, cs = p.visc_compressible, p.stiff_compressible
    crit = critical_wavenumber(cv, cs)
    xi = np.concatenate([rng.uniform(0, 3 * crit, 200), crit * (1 + rng.uniform(-1e-6, 1e-6, 20))])
    r = char_roots(xi, cv, cs)
    vieta = max(
        _rel(r.gamma_plus + r.gamma_minus, -cv * xi**2 + 0j),
        _rel(r.gamma_plus * r.gamma_minus, cs * xi**2 + 0j),
    )
    check("root sum and product", vieta, 1e-12)

    t1, t2 = rng.uniform(0, 1, xi.shape), rng.uniform(0, 1, xi.shape)
    b1 = block_propagator(r, cv, cs, xi, t1)
    b2 = block_propagator(r, cv, cs, xi, t2)
    b12 = block_propagator(r, cv, cs, xi, t1 + t2)
    comp = b2 @ b1
    semigroup = max(_rel(getattr(comp, k), getattr(b12, k)) for k in ("g11", "g12", "g21", "g22"))
    check("block semigroup", semigroup, 1e-10)
    tr = np.exp(r.gamma_plus * t1) + np.exp(r.gamma_minus * t1)
    check("block trace and determinant", max(_rel(b1.trace, tr), _rel(b1.det, np.exp(-cv * xi**2 * t1) + 0j)), 1e-10)

    xs, ts = rng.uniform(0, 3, 40), rng.uniform(0, 1, 40)
    rs = char_roots(xs, cv, cs)
    blk = block_propagator(rs, cv, cs, xs, ts)
    steps = np.maximum(1, np.ceil(ts * np.abs(rs.gamma_minus) / 0.01)).astype(int)
    ref = mode_oracle(xs, cv, cs, np.array([1.0, 0.5])[:, None], ts, steps)
    a, b = blk.apply(1.0, 0.5)
    check("block vs rk4", max(_rel(a, ref[0]), _rel(b, ref[1])), 1e-6)

    worst = 0.0
    for _ in range(10):
        v, t = rng.normal(size=3), rng.uniform(0, 2)
        worst = max(worst, _rel(assemble_green(p, v, t).matrix, scipy.linalg.expm(mode_matrix(p, v) * t)))
    check("green matrix vs expm", worst, 1e-8)

    data = make_initial_data(RandomBand(seed=seed, band=2, amplitude=0.02), p, grid)
    kin = kinematics(data.eta0, grid)
    div = kin.grad_eta[0, 0] + kin.grad_eta[1, 1] + kin.grad_eta[2, 2]
    check("J = 1 + div eta + r_eta", float(np.abs(kin.J - 1 - div - kin.r_eta).max()), 1e-12)
    zero = np.zeros_like(data.u0)
    check("forcing at rest", float(np.abs(nonlinear_force(zero, data.u0, p, grid).n_total).max()), 1e-12)

    s0 = SimState.from_physical(data.eta0, data.u0, grid)
    h = 0.05
    st = Stepper(p, grid, StepConfig(dt=h), h)
    lin, _ = st.step(s0, forcing=lambda e, u, t: np.zeros_like(u))
    exact = LatticePropagator(p, grid).apply(s0.eta_hat, s0.u_hat, h)
    check("zero-forcing step is exact", max(_rel(lin.eta_hat, exact[0]), _rel(lin.u_hat, exact[1])), 1e-12)

    w = duhamel_weights(cv, cs, np.array([0.0, 0.3, 2.0, 7.0]), h)
    worst = 0.0
    for i, x in enumerate([0.0, 0.3, 2.0, 7.0]):
        M = np.zeros((4, 4))
        M[:2, :2] = [[0, 1], [-cs * x * x, -cv * x * x]]
        M[:2, 2:] = np.eye(2)
        ref = scipy.linalg.expm(M * h)[:2, 3]
        worst = max(worst, _rel(np.array([w.w1_top[i], w.w1_bot[i]]), ref))
    check("duhamel weights vs augmented expm", worst, 1e-10)

    p10 = p.replace(kappa=10.0)
    d1 = make_initial_data(RandomBand(seed=seed, band=1, amplitude=0.01), p10, grid)
    s1 = SimState.from_physical(d1.eta0, d1.u0, grid)
    times = np.linspace(0.0, 2.0, 801)
    bal = linear_energy_balance(
        iter_linear_trajectory((s1.eta_hat, s1.u_hat), times, p10, grid), times, p10, grid, "simpson"
    )
    check("linear energy identity", float(np.abs(bal - bal[0]).max() / bal[0]), 1e-6)

    rec = make_record((s0.eta_hat, s0.u_hat), 0.5, p, grid, kin.min_j)
    buf = _io.StringIO()
    io.emit_records(buf, [rec])
    back = io.parse_records(_io.StringIO(buf.getvalue()))[0]
    out.append(("csv round trip", back == rec, "bit-exact" if back == rec else "mismatch"))
    e, d = rec.recombine()
    check("record recombination", abs(e - rec.energy) / max(rec.energy, 1e-300), 1e-12)
    if not math.isfinite(rec.energy):
        out.append(("finite energy", False, "non-finite"))
    return out
