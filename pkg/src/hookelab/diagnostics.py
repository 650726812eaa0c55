"""Energy functionals, the S(t) running supremum, decay fits and the kappa study.

Norm convention: with b_k = ||grad^k eta||_0^2 and a_k = ||grad^k u||_0^2,
||grad^k f||_m^2 = sum_{j<=m} ||grad^(k+j) f||_0^2 and Delta counts as a
second derivative. The energy and dissipation are then

    E = (a0+a1+a2) + kappa (b1+b2+b3)
        + (t+1) [(a1+a2+a3) + kappa (b2+b3+b4)]
        + (t+1)^2 [(a2+a3) + kappa (b3+b4)]
    D = (a1+a2+a3) + kappa (b2+b3+b4)
        + (t+1) [(a2+a3+a4) + kappa (b3+b4)] + (t+1)^2 (a3+a4)

so both are exact combinations of the ten recorded norms.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
import math

import numpy as np
from scipy import integrate

from .params import SimParams
from .spectral import Grid, gradient_norms_sq

KMAX = 4

KAPPA_CAVEAT = (
    "note: the kappa^(-1/2) gap bound is a one-sided whole-space estimate; "
    "this periodic-box sweep checks consistency with it, not sharpness"
)


def combine_functionals(a, b, t: float, kappa: float) -> tuple:
    """(E, D) from squared norms a_k of u and b_k of eta, k = 0..4."""
    w1, w2 = t + 1.0, (t + 1.0) ** 2
    energy = (
        (a[0] + a[1] + a[2])
        + kappa * (b[1] + b[2] + b[3])
        + w1 * ((a[1] + a[2] + a[3]) + kappa * (b[2] + b[3] + b[4]))
        + w2 * ((a[2] + a[3]) + kappa * (b[3] + b[4]))
    )
    dissipation = (
        (a[1] + a[2] + a[3])
        + kappa * (b[2] + b[3] + b[4])
        + w1 * ((a[2] + a[3] + a[4]) + kappa * (b[3] + b[4]))
        + w2 * (a[3] + a[4])
    )
    return float(energy), float(dissipation)


def energy_functionals(state, t: float, params: SimParams, grid: Grid) -> tuple:
    """(E(t), D(t)) of a spectral state ``(eta_hat, u_hat)``."""
    eta_hat, u_hat = state
    b = gradient_norms_sq(eta_hat, grid, KMAX)
    a = gradient_norms_sq(u_hat, grid, KMAX)
    return combine_functionals(a, b, t, params.kappa)


@dataclass(frozen=True)
class EnergyRecord:
    t: float
    kappa: float
    eta_norms: np.ndarray  # ||grad^k eta||_0, k = 0..4
    u_norms: np.ndarray
    energy: float
    dissipation: float
    min_j: float
    smallness_ratio: float

    def recombine(self) -> tuple:
        """(E, D) recomputed from the stored norms alone."""
        return combine_functionals(
            np.asarray(self.u_norms) ** 2, np.asarray(self.eta_norms) ** 2, self.t, self.kappa
        )

    def __eq__(self, other):
        if not isinstance(other, EnergyRecord):
            return NotImplemented
        return all(
            np.array_equal(np.asarray(getattr(self, f)), np.asarray(getattr(other, f)))
            for f in self.__dataclass_fields__
        )


def make_record(
    state, t: float, params: SimParams, grid: Grid, min_j: float = 1.0, energy0=None
) -> EnergyRecord:
    """Sample every diagnostic norm of a spectral state.

    ``energy0`` (defaults to this sample's E) feeds the smallness ratio.
    """
    from .nonlinear import smallness_ratio

    eta_hat, u_hat = state
    b = gradient_norms_sq(eta_hat, grid, KMAX)
    a = gradient_norms_sq(u_hat, grid, KMAX)
    energy, dissipation = combine_functionals(a, b, t, params.kappa)
    e0 = energy if energy0 is None else energy0
    return EnergyRecord(
        t=float(t),
        kappa=params.kappa,
        eta_norms=np.sqrt(b),
        u_norms=np.sqrt(a),
        energy=energy,
        dissipation=dissipation,
        min_j=float(min_j),
        smallness_ratio=smallness_ratio(e0, params.kappa),
    )


def s_functional(records, kappa: float = None, min_samples: int = 8) -> np.ndarray:
    """Running supremum S(t_i) over the recorded samples.

    Each sample contributes
        max_k (1+t)^(3/4+k/2) (||grad^k eta|| + ||grad^k u||),  k = 0, 1, 2
        + (1+t) (sqrt(kappa) ||Delta grad eta||_1 + ||grad^2 u||_1)
        + sqrt(kappa) ||grad eta||_2 + sqrt(kappa) (1+t)^(1/2) ||Delta eta||_2
        + (int_0^t (1+s)^2 ||grad Delta u||_1^2 ds)^(1/2),
    the time integral by the trapezoid rule over the samples.
    """
    records = list(records)
    if len(records) < max(min_samples, 1):
        raise ValueError(f"need at least {min_samples} samples, got {len(records)}")
    times = np.array([r.t for r in records])
    if np.any(np.diff(times) < 0):
        raise ValueError("records must be in time order")
    if kappa is None:
        kappa = records[0].kappa
    sk = math.sqrt(kappa)
    out = np.empty(len(records))
    integral = 0.0
    best = -np.inf
    prev = None
    for i, r in enumerate(records):
        b = np.asarray(r.eta_norms, dtype=float) ** 2
        a = np.asarray(r.u_norms, dtype=float) ** 2
        w = 1.0 + r.t
        rate = max(w ** (0.75 + 0.5 * k) * (r.eta_norms[k] + r.u_norms[k]) for k in range(3))
        dens = w * w * (a[3] + a[4])
        if prev is not None:
            integral += 0.5 * (r.t - prev[0]) * (dens + prev[1])
        prev = (r.t, dens)
        value = (
            rate
            + w * (sk * math.sqrt(b[3] + b[4]) + math.sqrt(a[2] + a[3]))
            + sk * math.sqrt(b[1] + b[2] + b[3])
            + sk * math.sqrt(w) * math.sqrt(b[2] + b[3] + b[4])
            + math.sqrt(integral)
        )
        best = max(best, value)
        out[i] = best
    return out


def _convolution_integral(t: float, r1: float, r2: float) -> float:
    """int_0^t (1+t-s)^(-r1) (1+s)^(-r2) ds; bounded by C (1+t)^(-r2) when
    0 <= r2 <= r1 and r1 > 0. Used to build synthetic decaying series."""
    if not (r1 > 0 and 0 <= r2 <= r1):
        raise ValueError("need r1 > 0 and 0 <= r2 <= r1")
    val, _ = integrate.quad(
        lambda s: (1 + t - s) ** (-r1) * (1 + s) ** (-r2), 0.0, t, limit=200
    )
    return val


@dataclass(frozen=True)
class DecayFit:
    t_min: float
    t_max: float
    exponent: float
    residual: float
    samples: int
    misfit: bool
    prefactor: float = 1.0


def decay_fit(times, values, window=None, residual_threshold: float = 0.05) -> DecayFit:
    """Least squares of log(value) on log(1+t) over a window.

    The default window is [t_end/10, t_end]. ``residual`` is the RMS of the
    log-space residual; above ``residual_threshold`` the series is flagged as
    not a power law.
    """
    t = np.asarray(times, dtype=float)
    v = np.asarray(values, dtype=float)
    if t.shape != v.shape:
        raise ValueError("times and values must have the same length")
    if window is None:
        t_end = t.max()
        window = (t_end / 10.0, t_end)
    lo, hi = map(float, window)
    if not lo < hi:
        raise ValueError(f"window must satisfy t_min < t_max, got {window}")
    sel = (t >= lo) & (t <= hi)
    if sel.sum() < 8:
        raise ValueError(f"need at least 8 samples in the window, got {int(sel.sum())}")
    if np.any(v[sel] <= 0) or not np.all(np.isfinite(v[sel])):
        raise ValueError("decay fit needs positive finite values")
    x, y = np.log1p(t[sel]), np.log(v[sel])
    (slope, icpt), res, *_ = np.polyfit(x, y, 1, full=True)
    rms = math.sqrt(float(res[0]) / sel.sum()) if len(res) else 0.0
    return DecayFit(
        t_min=lo,
        t_max=hi,
        exponent=float(slope),
        residual=rms,
        samples=int(sel.sum()),
        misfit=rms > residual_threshold,
        prefactor=math.exp(icpt),
    )


# --- kappa sweep -------------------------------------------------------------


@dataclass(frozen=True)
class KappaRow:
    kappa: float
    sup_gap: float
    gap_dissipation: float
    aborted: bool
    message: str = ""


@dataclass(frozen=True)
class KappaStudy:
    rows: list
    slope: float  # nan when undefined
    caveat: str = KAPPA_CAVEAT

    @property
    def slope_defined(self) -> bool:
        return math.isfinite(self.slope)


def gap_slope(kappas, gaps) -> float:
    k = np.asarray(kappas, dtype=float)
    g = np.asarray(gaps, dtype=float)
    ok = np.isfinite(g) & (g > 0)
    if ok.sum() < 2:
        return float("nan")
    return float(np.polyfit(np.log(k[ok]), np.log(g[ok]), 1)[0])


def kappa_study(
    initial_factory,
    cfg,
    params: SimParams,
    kappas,
    t_end: float,
    threads: int = 1,
    record_every: int = 1,
    require_span: bool = True,
) -> KappaStudy:
    """Nonlinear-vs-linear gap for each kappa with identical initial data.

    ``initial_factory(params)`` returns the initial data; ``cfg`` is a
    StepConfig or a callable ``cfg(params) -> StepConfig`` so each run can
    pick its own step.
    """
    from .errors import AdmissibilityError, NonFiniteStateError
    from .integrator import linear_nonlinear_gap

    kappas = [float(k) for k in kappas]
    if require_span and (len(kappas) < 3 or max(kappas) / min(kappas) < 100):
        raise ValueError("need at least 3 kappa values spanning 2 decades")

    def run(kappa):
        p = params.replace(kappa=kappa)
        step = cfg(p) if callable(cfg) else cfg
        try:
            gap = linear_nonlinear_gap(initial_factory(p), step, p, t_end, record_every)
        except (AdmissibilityError, NonFiniteStateError) as exc:
            return KappaRow(kappa, float("nan"), float("nan"), True, str(exc))
        return KappaRow(kappa, gap.sup_gap, gap.dissipation_integral[-1], False)

    with ThreadPoolExecutor(max_workers=max(1, int(threads))) as pool:
        rows = list(pool.map(run, kappas))
    slope = gap_slope([r.kappa for r in rows], [r.sup_gap for r in rows])
    return KappaStudy(rows=rows, slope=slope)


# --- linear energy balance and decay study -------------------------------------


def linear_energy_balance(trajectory, times, params: SimParams, grid: Grid, rule="trapezoid"):
    """||u||^2 + kappa ||grad eta||^2 + P'(1) ||div eta||^2
    + 2 int_0^t (lam ||div u||^2 + mu ||grad u||^2), per sample.

    Constant along exact linear trajectories; ``rule`` is ``trapezoid`` or
    ``simpson`` (cumulative, for the time integral).
    """
    times = np.asarray(times, dtype=float)
    stored, rate = [], []
    for eta_hat, u_hat in trajectory:
        xi = grid.xi
        div_eta = xi[0] * eta_hat[0] + xi[1] * eta_hat[1] + xi[2] * eta_hat[2]
        div_u = xi[0] * u_hat[0] + xi[1] * u_hat[1] + xi[2] * u_hat[2]
        vol = grid.box_len**3
        div_eta_sq = vol * float(np.sum(np.abs(div_eta) ** 2))
        div_u_sq = vol * float(np.sum(np.abs(div_u) ** 2))
        u_sq = gradient_norms_sq(u_hat, grid, 1)
        grad_eta_sq = gradient_norms_sq(eta_hat, grid, 1)[1]
        stored.append(u_sq[0] + params.kappa * grad_eta_sq + params.p_prime_1 * div_eta_sq)
        rate.append(2.0 * (params.lam * div_u_sq + params.mu * u_sq[1]))
    rate = np.asarray(rate)
    if rule == "trapezoid":
        integral = integrate.cumulative_trapezoid(rate, times, initial=0.0)
    elif rule == "simpson":
        integral = integrate.cumulative_simpson(rate, x=times, initial=0.0)
    else:
        raise ValueError(f"rule must be 'trapezoid' or 'simpson', got {rule!r}")
    return np.asarray(stored) + integral


@dataclass(frozen=True)
class DecayStudy:
    k: int
    times: np.ndarray
    norm_sq: np.ndarray
    fit: DecayFit

    @property
    def expected(self) -> float:
        return -(1.5 + self.k)


def decay_study(
    params: SimParams,
    k: int,
    t_min: float = 100.0,
    t_max: float = 10000.0,
    samples: int = 16,
    profile=None,
    residual_threshold: float = 0.05,
) -> DecayStudy:
    """Whole-space linear decay of ``||grad^k (eta, u)(t)||_0^2`` for Gaussian
    displacement data, sampled log-uniformly on [t_min, t_max] and fitted."""
    from .propagator import RadialProfile, radial_decay_norm

    if profile is None:
        profile = RadialProfile.gaussian("displacement")
    times = np.geomspace(t_min, t_max, samples)
    vals = np.array([radial_decay_norm(params, profile, t, k) for t in times])
    fit = decay_fit(times, vals, window=(t_min, t_max), residual_threshold=residual_threshold)
    return DecayStudy(k=k, times=times, norm_sq=vals, fit=fit)
