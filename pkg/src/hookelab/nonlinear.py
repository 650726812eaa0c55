"""Flow-map kinematics and the nonlinear forcing of the Lagrangian system.

All fields here are physical-space arrays on a :class:`Grid`. Derivatives are
spectral; products are pointwise, and the assembled forcing is dealiased by
the two-thirds rule before it re-enters spectral space.

Index conventions: ``grad[i, j] = d_j eta_i``; F = I + grad eta;
A = F^{-T} = cof(F)/J; the twisted gradient of a scalar is
(grad_A f)_i = A_ik d_k f and the twisted divergence of a vector is
div_A v = A_lk d_k v_l.
"""

from __future__ import annotations

from dataclasses import dataclass, field
import math

import numpy as np

from .errors import AdmissibilityError
from .params import SimParams
from .spectral import (
    Grid,
    dealias as dealias_modes,
    div_physical,
    grad_physical,
    gradient,
    l2_norm_physical,
    laplacian,
    to_physical,
    to_spectral,
)

J_MIN = 0.5


def _eye(grid: Grid) -> np.ndarray:
    return np.eye(3)[:, :, None, None, None]


def cofactor(F: np.ndarray) -> np.ndarray:
    """Cofactor matrix field; row i is the cross product of the other two rows."""
    out = np.empty_like(F)
    for i in range(3):
        a, b = F[(i + 1) % 3], F[(i + 2) % 3]
        out[i] = np.cross(a, b, axis=0)
    return out


def _trace(M):
    return M[0, 0] + M[1, 1] + M[2, 2]


def _matmul(X, Y):
    return np.einsum("ik...,kj...->ij...", X, Y)


@dataclass(frozen=True)
class KinematicFields:
    grad_eta: np.ndarray
    J: np.ndarray
    A: np.ndarray
    A_tilde: np.ndarray
    r_eta: np.ndarray
    cof: np.ndarray

    @property
    def min_j(self) -> float:
        return float(self.J.min())

    @property
    def argmin_j(self) -> tuple:
        return tuple(int(i) for i in np.unravel_index(np.argmin(self.J), self.J.shape))

    @property
    def density(self) -> np.ndarray:
        """Lagrangian density rho o zeta = 1/J."""
        return 1.0 / self.J

    @property
    def deformation(self) -> np.ndarray:
        """F o zeta = grad zeta."""
        return self.grad_eta + np.eye(3)[:, :, None, None, None]


def kinematics_from_gradient(grad_eta: np.ndarray, check: bool = True, time=None):
    """Kinematic fields from a given ``grad[i, j] = d_j eta_i`` field."""
    G = np.asarray(grad_eta, dtype=float)
    F = G + np.eye(3).reshape((3, 3) + (1,) * (G.ndim - 2))
    cof = cofactor(F)
    J = np.einsum("j...,j...->...", F[0], cof[0])
    if not np.all(np.isfinite(J)):
        raise AdmissibilityError(float("nan"), time=time)
    if check and J.min() < J_MIN:
        loc = np.unravel_index(np.argmin(J), J.shape)
        raise AdmissibilityError(J.min(), location=loc, time=time)
    div = _trace(G)
    det_g = np.einsum("j...,j...->...", G[0], cofactor(G)[0])
    r_eta = 0.5 * (div * div - _trace(_matmul(G, G))) + det_g
    A = cof / J
    eye = np.eye(3).reshape(F.shape[:2] + (1,) * (G.ndim - 2))
    A_tilde = (cof - eye * J) / J
    return KinematicFields(grad_eta=G, J=J, A=A, A_tilde=A_tilde, r_eta=r_eta, cof=cof)


def kinematics(
    eta: np.ndarray,
    grid: Grid,
    check: bool = True,
    background_gradient=None,
    time=None,
) -> KinematicFields:
    """Kinematics of the flow map y + eta(y) (+ G0 y for an affine patch).

    ``background_gradient`` adds a constant matrix to grad eta, which models
    an affine displacement that a periodic grid cannot represent.
    """
    grid.check(eta, rank=1)
    G = to_physical(gradient(to_spectral(eta, grid), grid), grid)
    if background_gradient is not None:
        G = G + np.asarray(background_gradient, dtype=float)[:, :, None, None, None]
    return kinematics_from_gradient(G, check=check, time=time)


def pressure_terms(J: np.ndarray, params: SimParams, check: bool = True):
    """(P(1/J), remainder) with remainder = P(1+w) - P(1) - P'(1) w, w = 1/J - 1.

    The remainder is the integral of (w - z) P''(1+z) over [0, w], which for
    the power law is this exact antiderivative.
    """
    J = np.asarray(J, dtype=float)
    if check and J.min() < J_MIN:
        loc = np.unravel_index(np.argmin(J), J.shape) if J.ndim else None
        raise AdmissibilityError(J.min(), location=loc)
    g, amp = params.pressure_exp, params.pressure_amp
    w = (1.0 - J) / J
    p = amp * J ** (-g)
    remainder = amp * (np.expm1(g * np.log1p(w)) - g * w)
    return p, remainder


@dataclass(frozen=True)
class NonlinearForcing:
    n_p: np.ndarray
    n_u: np.ndarray
    n_hat: np.ndarray = field(repr=False)
    kin: KinematicFields = field(repr=False)

    @property
    def n_total(self) -> np.ndarray:
        return self.n_p + self.n_u


_spectral_grad_phys = grad_physical


def _viscous_part(kin, u_hat, grid, params):
    A, At, J = kin.A, kin.A_tilde, kin.J
    Gu = to_physical(gradient(u_hat, grid), grid)  # Gu[l, m] = d_m u_l
    B = np.einsum("jm...,lm...->jl...", A, Gu)
    C = np.einsum("jm...,lm...->jl...", At, Gu)
    dB = _spectral_grad_phys(B, grid)  # dB[j, l, k] = d_k B_jl
    div_C = div_physical(np.swapaxes(C, 0, 1), grid)  # sum_j d_j C_jl
    grad_trB = _spectral_grad_phys(_trace(B), grid)
    grad_trC = _spectral_grad_phys(_trace(C), grid)

    div_At_gradA = np.einsum("jk...,jlk...->l...", At, dB)
    gradAt_divA = np.einsum("lk...,k...->l...", At, grad_trB)
    lap_A = np.einsum("jk...,jlk...->l...", A, dB)
    gradA_divA = np.einsum("lk...,k...->l...", A, grad_trB)

    mu, lam = params.mu, params.lam
    return (
        mu * (div_At_gradA + div_C)
        + lam * (gradAt_divA + grad_trC)
        + (J - 1.0) * (mu * lap_A + lam * gradA_divA)
    )


def _pressure_part(kin, eta_hat, grid, params):
    A, At, J = kin.A, kin.A_tilde, kin.J
    p, remainder = pressure_terms(J, params, check=False)
    div_eta = _trace(kin.grad_eta)
    # 1/J - 1 + div eta, free of the O(1) cancellation
    lin_gap = (div_eta * (div_eta + kin.r_eta) - kin.r_eta) / J
    q = params.p_prime_1 * lin_gap + remainder
    grad_p = _spectral_grad_phys(p, grid)
    grad_q = _spectral_grad_phys(q, grid)
    return (
        -(J - 1.0) * np.einsum("ik...,k...->i...", A, grad_p)
        - np.einsum("ik...,k...->i...", At, grad_p)
        - grad_q
    )


def forcing_from_spectral(
    eta_hat: np.ndarray,
    u_hat: np.ndarray,
    grid: Grid,
    params: SimParams,
    dealias: bool = True,
    check: bool = True,
    background_gradient=None,
    time=None,
) -> NonlinearForcing:
    grad = to_physical(gradient(eta_hat, grid), grid)
    if background_gradient is not None:
        grad = grad + np.asarray(background_gradient, dtype=float)[:, :, None, None, None]
    kin = kinematics_from_gradient(grad, check=check, time=time)
    n_u = _viscous_part(kin, u_hat, grid, params)
    n_p = _pressure_part(kin, eta_hat, grid, params)
    nu_hat = to_spectral(n_u, grid)
    np_hat = to_spectral(n_p, grid)
    if dealias:
        nu_hat = dealias_modes(nu_hat, grid)
        np_hat = dealias_modes(np_hat, grid)
        n_u = to_physical(nu_hat, grid)
        n_p = to_physical(np_hat, grid)
    return NonlinearForcing(n_p=n_p, n_u=n_u, n_hat=np_hat + nu_hat, kin=kin)


def nonlinear_force(
    eta: np.ndarray,
    u: np.ndarray,
    params: SimParams,
    grid: Grid,
    dealias: bool = True,
    background_gradient=None,
) -> NonlinearForcing:
    """Pressure and viscous parts of the forcing for physical (eta, u)."""
    grid.check(eta, rank=1)
    grid.check(u, rank=1)
    return forcing_from_spectral(
        to_spectral(eta, grid),
        to_spectral(u, grid),
        grid,
        params,
        dealias=dealias,
        background_gradient=background_gradient,
    )


def piola_residual(eta: np.ndarray, grid: Grid, background_gradient=None) -> float:
    """L2 norm of the row divergence of cof(F) = J A, zero for exact fields."""
    kin = kinematics(eta, grid, check=False, background_gradient=background_gradient)
    d = _spectral_grad_phys(kin.cof, grid)
    div = np.einsum("ikk...->i...", d)
    return l2_norm_physical(div, grid)


def elasticity_identity_residual(
    eta: np.ndarray, grid: Grid, form: str = "chain", background_gradient=None
) -> float:
    """L2 norm of an identity between the elastic stress and Delta zeta.

    ``chain``: J div_A(J^-1 F F^T) - Delta eta, with the twisted divergence
    taken along rows, (div_A X)_i = A_lk d_k X_il. It vanishes only through
    the Piola identity, so it measures spectral truncation.

    ``algebraic``: div(A^T F F^T) - Delta eta with the divergence contracting
    the first index. Since A^T F = I pointwise, this one is round-off only.
    """
    kin = kinematics(eta, grid, check=False, background_gradient=background_gradient)
    F = kin.deformation
    FFt = np.einsum("ik...,jk...->ij...", F, F)
    lap = to_physical(laplacian(to_spectral(eta, grid), grid), grid)
    if form == "chain":
        X = FFt / kin.J
        dX = _spectral_grad_phys(X, grid)  # dX[i, l, k] = d_k X_il
        div_a = np.einsum("lk...,ilk...->i...", kin.A, dX)
        res = kin.J * div_a - lap
    elif form == "algebraic":
        M = np.einsum("ki...,kj...->ij...", kin.A, FFt)
        dM = _spectral_grad_phys(M, grid)  # dM[k, i, m] = d_m M_ki
        res = np.einsum("kik...->i...", dM) - lap
    else:
        raise ValueError(f"form must be 'chain' or 'algebraic', got {form!r}")
    return l2_norm_physical(res, grid)


# --- initial data -------------------------------------------------------------


@dataclass(frozen=True)
class GaussianBump:
    """Smooth periodic bump exp(-chord^2 / (2 width^2)) times a fixed direction.

    The chord distance (L/pi) sin(pi (y - c)/L) per axis equals |y - c| near
    the centre and keeps the bump smooth across the box faces.
    """

    amplitude: float
    width: float = 0.5
    center: tuple = None
    velocity_amplitude: float = 0.0
    direction: tuple = (1.0, 0.5, -0.25)


@dataclass(frozen=True)
class RandomBand:
    """Random Fourier modes with 1 <= max|m_i| <= band, scaled to a sup norm."""

    seed: int
    band: int = 3
    amplitude: float = 0.01
    velocity_amplitude: float = None


@dataclass(frozen=True)
class InitialData:
    eta0: np.ndarray
    u0: np.ndarray
    grid: Grid
    energy0: float
    smallness_ratio: float
    min_j: float

    def __iter__(self):
        return iter((self.eta0, self.u0))


def smallness_ratio(energy0: float, kappa: float) -> float:
    """kappa^-1 max(sqrt(2 E0), (2 E0)^2), reported with unit constant."""
    e2 = 2.0 * energy0
    return max(math.sqrt(e2), e2 * e2) / kappa


def _bump_field(spec: GaussianBump, grid: Grid, amplitude: float) -> np.ndarray:
    L = grid.box_len
    c = np.full(3, L / 2) if spec.center is None else np.asarray(spec.center, float)
    y = grid.points
    chord2 = sum(((L / np.pi) * np.sin(np.pi * (y[i] - c[i]) / L)) ** 2 for i in range(3))
    g = np.exp(-chord2 / (2 * spec.width**2))
    d = np.asarray(spec.direction, dtype=float)
    f = amplitude * d[:, None, None, None] * g
    return f - f.mean(axis=(1, 2, 3), keepdims=True)


def _band_field(rng, grid: Grid, band: int, amplitude: float) -> np.ndarray:
    m = np.abs(grid.mode_numbers)
    mmax = np.maximum.reduce(np.meshgrid(m, m, m, indexing="ij"))
    mask = (mmax >= 1) & (mmax <= band)
    coef = rng.normal(size=(3,) + grid.shape) + 1j * rng.normal(size=(3,) + grid.shape)
    f = to_physical(coef * mask, grid)
    peak = np.abs(f).max()
    return f * (amplitude / peak) if peak > 0 else f


def make_initial_data(spec, params: SimParams, grid: Grid) -> InitialData:
    """Build (eta0, u0) from a generator spec, verify min J >= 1/2 and report
    E(0) with the smallness ratio."""
    from .diagnostics import energy_functionals

    if isinstance(spec, GaussianBump):
        if spec.width <= 0:
            raise ValueError("bump width must be positive")
        eta0 = _bump_field(spec, grid, spec.amplitude)
        u0 = _bump_field(spec, grid, spec.velocity_amplitude)
    elif isinstance(spec, RandomBand):
        if not 1 <= spec.band < grid.n // 2:
            raise ValueError(f"band must lie in [1, {grid.n // 2 - 1}]")
        rng = np.random.default_rng(spec.seed)
        vel = spec.amplitude if spec.velocity_amplitude is None else spec.velocity_amplitude
        eta0 = _band_field(rng, grid, spec.band, spec.amplitude)
        u0 = _band_field(rng, grid, spec.band, vel)
    else:
        raise TypeError(f"unknown initial-data spec {type(spec).__name__}")
    kin = kinematics(eta0, grid, check=True, time=0.0)
    energy0, _ = energy_functionals(
        (to_spectral(eta0, grid), to_spectral(u0, grid)), 0.0, params, grid
    )
    return InitialData(
        eta0=eta0,
        u0=u0,
        grid=grid,
        energy0=energy0,
        smallness_ratio=smallness_ratio(energy0, params.kappa),
        min_j=kin.min_j,
    )
