"""Exact Fourier-space propagator of the linearized system.

The 6x6 mode system for (eta, u) splits, through the projectors
xi xi^T/|xi|^2 and I - xi xi^T/|xi|^2, into two damped-oscillator blocks

    d/dt [a, b] = [[0, 1], [-c_stiff |xi|^2, -c_visc |xi|^2]] [a, b]

with (c_visc, c_stiff) = (lam + mu, P'(1) + kappa) for the compressible part
and (mu, kappa) for the solenoidal part. Every block entry is written through
m = (g+ + g-)/2, d = (g+ - g-)/2 and the entire functions cosh(z), sinh(z)/z of
z = d t, so nothing branches on root equality and the double root is just a
point of a smooth formula.
"""

from __future__ import annotations

from dataclasses import dataclass
import math

import numpy as np

from .params import SimParams
from .spectral import Grid

SERIES_RADIUS = 0.1  # |d t| below this uses the Taylor form
_SERIES_TERMS = 9

UNDERDAMPED = "underdamped"
CRITICAL = "critical"
OVERDAMPED = "overdamped"


def critical_wavenumber(c_visc, c_stiff):
    """|xi| at which the two roots merge; broadcasts over array arguments."""
    out = 2.0 * np.sqrt(c_stiff) / np.asarray(c_visc, dtype=float)
    return float(out) if np.ndim(out) == 0 else out


def _check_coeffs(c_visc, c_stiff):
    if not (np.all(np.asarray(c_visc) > 0) and np.all(np.asarray(c_stiff) > 0)):
        raise ValueError(
            f"viscosity and stiffness must be positive, got {c_visc}, {c_stiff}"
        )


@dataclass(frozen=True)
class EigenPair:
    gamma_plus: np.ndarray
    gamma_minus: np.ndarray
    # half-sum and half-difference; d**2 = disc is kept to avoid a sqrt in series
    mean: np.ndarray
    half_gap: np.ndarray
    disc: np.ndarray
    regime: object

    def as_tuple(self):
        return self.gamma_plus, self.gamma_minus


def classify(xi_mag, c_visc, c_stiff, rtol: float = 1e-12):
    """Informational regime label; no numerical path depends on it."""
    xi = np.asarray(xi_mag, dtype=float)
    crit = critical_wavenumber(c_visc, c_stiff)
    labels = np.where(
        np.abs(xi - crit) <= rtol * crit,
        CRITICAL,
        np.where(xi < crit, UNDERDAMPED, OVERDAMPED),
    )
    return str(labels) if labels.ndim == 0 else labels


def char_roots(xi_mag, c_visc: float, c_stiff: float) -> EigenPair:
    """Roots of g^2 + c_visc |xi|^2 g + c_stiff |xi|^2 = 0.

    The larger-magnitude root is formed without cancellation and the other one
    from the product of roots, which keeps the slow overdamped root accurate
    at large |xi|.
    """
    _check_coeffs(c_visc, c_stiff)
    xi = np.asarray(xi_mag, dtype=float)
    if np.any(xi < 0):
        raise ValueError("wavenumber magnitude must be nonnegative")
    r2 = xi * xi
    m = -0.5 * c_visc * r2
    disc = (m * m - c_stiff * r2).astype(complex)
    d = np.sqrt(disc)
    g_big = m - d
    prod = c_stiff * r2
    safe = np.where(g_big != 0, g_big, 1.0)
    g_small = np.where(g_big != 0, prod / safe, 0.0)
    return EigenPair(
        gamma_plus=g_small,
        gamma_minus=g_big,
        mean=m,
        half_gap=d,
        disc=disc,
        regime=classify(xi, c_visc, c_stiff),
    )


def root_asymptotics(xi_mag, c_visc: float, c_stiff: float, branch: str) -> EigenPair:
    """Leading-order root expansions, for validating :func:`char_roots`.

    low:  g+- ~ -c_visc |xi|^2/2 +- i sqrt(c_stiff) |xi|
    high: g+ ~ -c_stiff/c_visc,  g- ~ -c_visc |xi|^2 + c_stiff/c_visc
    """
    _check_coeffs(c_visc, c_stiff)
    xi = np.asarray(xi_mag, dtype=float)
    crit = critical_wavenumber(c_visc, c_stiff)
    if branch == "low":
        if np.any(xi >= crit):
            raise ValueError(f"low branch needs |xi| < {crit:.6g}")
        re = -0.5 * c_visc * xi * xi
        im = math.sqrt(c_stiff) * xi
        gp, gm = re + 1j * im, re - 1j * im
    elif branch == "high":
        if np.any(xi <= crit):
            raise ValueError(f"high branch needs |xi| > {crit:.6g}")
        gp = np.full_like(xi, -c_stiff / c_visc, dtype=complex)
        gm = (-c_visc * xi * xi + c_stiff / c_visc).astype(complex)
    else:
        raise ValueError(f"branch must be 'low' or 'high', got {branch!r}")
    return EigenPair(
        gamma_plus=gp,
        gamma_minus=gm,
        mean=0.5 * (gp + gm),
        half_gap=0.5 * (gp - gm),
        disc=(0.5 * (gp - gm)) ** 2,
        regime=classify(xi, c_visc, c_stiff),
    )


def _cosh_sinhc_series(z2):
    """cosh(z) and sinh(z)/z as series in z^2."""
    ch = np.ones_like(z2)
    sc = np.ones_like(z2)
    term_c = np.ones_like(z2)
    term_s = np.ones_like(z2)
    for j in range(1, _SERIES_TERMS):
        term_c = term_c * z2 / ((2 * j - 1) * (2 * j))
        term_s = term_s * z2 / ((2 * j) * (2 * j + 1))
        ch = ch + term_c
        sc = sc + term_s
    return ch, sc


@dataclass(frozen=True)
class PropagatorBlock:
    g11: np.ndarray
    g12: np.ndarray
    g21: np.ndarray
    g22: np.ndarray

    @property
    def trace(self):
        return self.g11 + self.g22

    @property
    def det(self):
        return self.g11 * self.g22 - self.g12 * self.g21

    def matrix(self) -> np.ndarray:
        return np.array([[self.g11, self.g12], [self.g21, self.g22]])

    def apply(self, a, b):
        return self.g11 * a + self.g12 * b, self.g21 * a + self.g22 * b

    def __matmul__(self, other: "PropagatorBlock") -> "PropagatorBlock":
        return PropagatorBlock(
            g11=self.g11 * other.g11 + self.g12 * other.g21,
            g12=self.g11 * other.g12 + self.g12 * other.g22,
            g21=self.g21 * other.g11 + self.g22 * other.g21,
            g22=self.g21 * other.g12 + self.g22 * other.g22,
        )


def block_propagator(roots: EigenPair, c_visc, c_stiff, xi_mag, t) -> PropagatorBlock:
    """exp(t B) for the 2x2 mode matrix B with the given roots.

    g12 is the divided difference (e^{g+ t} - e^{g- t})/(g+ - g-) written as
    e^{m t} t sinhc(d t); g11 = C - m g12, g22 = C + m g12 with
    C = e^{m t} cosh(d t). When |d t| is not small the same quantities are
    formed from e^{g+- t} directly, which cannot overflow.
    """
    t_arr = np.asarray(t, dtype=float)
    if np.any(t_arr < 0):
        raise ValueError("propagator time must be nonnegative")
    xi = np.asarray(xi_mag, dtype=float)
    r2 = xi * xi
    m, disc = roots.mean, roots.disc
    gp, gm = roots.gamma_plus, roots.gamma_minus
    shape = np.broadcast(m, t_arr).shape
    m = np.broadcast_to(m, shape)
    disc = np.broadcast_to(disc, shape)
    gp = np.broadcast_to(gp, shape)
    gm = np.broadcast_to(gm, shape)
    tt = np.broadcast_to(t_arr, shape)
    r2 = np.broadcast_to(r2, shape)

    z2 = disc * tt * tt
    small = np.abs(z2) < SERIES_RADIUS**2

    g11 = np.empty(shape, dtype=complex)
    g12 = np.empty(shape, dtype=complex)
    g22 = np.empty(shape, dtype=complex)

    if np.any(small):
        em = np.exp(m[small] * tt[small])
        ch, sc = _cosh_sinhc_series(z2[small])
        phi = em * tt[small] * sc
        cc = em * ch
        g12[small] = phi
        g11[small] = cc - m[small] * phi
        g22[small] = cc + m[small] * phi
    big = ~small
    if np.any(big):
        ep = np.exp(gp[big] * tt[big])
        en = np.exp(gm[big] * tt[big])
        gap = gp[big] - gm[big]
        g12[big] = (ep - en) / gap
        g11[big] = (gp[big] * en - gm[big] * ep) / gap
        g22[big] = (gp[big] * ep - gm[big] * en) / gap
    g21 = -c_stiff * r2 * g12
    return PropagatorBlock(g11=g11, g12=g12, g21=g21, g22=g22)


def compressible_block(params: SimParams, xi_mag, t) -> PropagatorBlock:
    cv, cs = params.visc_compressible, params.stiff_compressible
    return block_propagator(char_roots(xi_mag, cv, cs), cv, cs, xi_mag, t)


def solenoidal_block(params: SimParams, xi_mag, t) -> PropagatorBlock:
    cv, cs = params.visc_solenoidal, params.stiff_solenoidal
    return block_propagator(char_roots(xi_mag, cv, cs), cv, cs, xi_mag, t)


@dataclass(frozen=True)
class GreenMatrix6:
    """exp(t G(xi)) acting on (eta_hat, u_hat) at one wavevector."""

    matrix: np.ndarray
    compressible: PropagatorBlock
    solenoidal: PropagatorBlock

    def apply(self, eta_hat, u_hat):
        out = self.matrix @ np.concatenate([eta_hat, u_hat])
        return out[:3], out[3:]


def assemble_green(params: SimParams, xi, t: float) -> GreenMatrix6:
    """Assemble the 6x6 propagator from the two blocks and the projectors.

    At xi = 0 both blocks reduce to [[1, t], [0, 1]]: the mean displacement
    drifts with the mean velocity, which itself stays constant.
    """
    xi = np.asarray(xi, dtype=float)
    r = float(np.linalg.norm(xi))
    comp = compressible_block(params, r, t)
    sol = solenoidal_block(params, r, t)
    par = np.outer(xi, xi) / (r * r) if r > 0 else np.zeros((3, 3))
    perp = np.eye(3) - par
    mat = np.zeros((6, 6), dtype=complex)
    entries = (("g11", 0, 0), ("g12", 0, 3), ("g21", 3, 0), ("g22", 3, 3))
    for name, i, j in entries:
        mat[i : i + 3, j : j + 3] = (
            complex(getattr(comp, name)) * par + complex(getattr(sol, name)) * perp
        )
    return GreenMatrix6(matrix=mat, compressible=comp, solenoidal=sol)


def mode_matrix(params: SimParams, xi) -> np.ndarray:
    """Generator G(xi) of the linear mode system, 6x6 real."""
    xi = np.asarray(xi, dtype=float)
    r2 = float(xi @ xi)
    outer = np.outer(xi, xi)
    G = np.zeros((6, 6))
    G[:3, 3:] = np.eye(3)
    G[3:, :3] = -(params.p_prime_1 * outer + params.kappa * r2 * np.eye(3))
    G[3:, 3:] = -(params.lam * outer + params.mu * r2 * np.eye(3))
    return G


# --- lattice-wide application ---------------------------------------------


def split_parallel(F: np.ndarray, grid: Grid):
    """Projection of a spectral vector field onto xi and its complement."""
    e = grid.unit_xi
    proj = e[0] * F[0] + e[1] * F[1] + e[2] * F[2]
    par = e * proj
    return par, F - par


class LatticePropagator:
    """exp(t G) applied mode-wise on a grid, with the blocks cached per t."""

    def __init__(self, params: SimParams, grid: Grid):
        self.params = params
        self.grid = grid
        self._cache = {}

    def blocks(self, t: float):
        key = float(t)
        if key not in self._cache:
            if len(self._cache) > 8:
                self._cache.clear()
            mag = self.grid.xi_mag
            self._cache[key] = (
                compressible_block(self.params, mag, key),
                solenoidal_block(self.params, mag, key),
            )
        return self._cache[key]

    def apply(self, eta_hat: np.ndarray, u_hat: np.ndarray, t: float):
        comp, sol = self.blocks(t)
        eta_par, eta_perp = split_parallel(eta_hat, self.grid)
        u_par, u_perp = split_parallel(u_hat, self.grid)
        a, b = comp.apply(eta_par, u_par)
        c, d = sol.apply(eta_perp, u_perp)
        return a + c, b + d


def linear_trajectory(state0, times, params: SimParams, grid: Grid) -> list:
    """Exact linear evolution of ``state0 = (eta_hat, u_hat)`` to each time."""
    return list(iter_linear_trajectory(state0, times, params, grid))


def iter_linear_trajectory(state0, times, params: SimParams, grid: Grid):
    """Generator form of :func:`linear_trajectory`.

    Successive outputs are chained through exp((t_k - t_{k-1}) G); repeated
    increments reuse the cached blocks, so dense uniform sampling is cheap.
    """
    times = np.asarray(times, dtype=float)
    if np.any(times < 0):
        raise ValueError("times must be nonnegative")
    if np.any(np.diff(times) < 0):
        raise ValueError("times must be ascending")
    eta, u = state0
    grid.check(eta, rank=1)
    grid.check(u, rank=1)
    prop = LatticePropagator(params, grid)
    t_prev = 0.0
    for t in times:
        step = float(t - t_prev)
        if step > 0:
            # snap increments that differ only by round-off onto one cache key
            key = float("%.12g" % step)
            eta, u = prop.apply(eta, u, key if abs(key - step) <= 1e-14 * max(t, 1.0) else step)
        yield eta, u
        t_prev = t


# --- Duhamel weights --------------------------------------------------------


@dataclass(frozen=True)
class DuhamelWeights:
    """Second columns of the exponential-integrator matrices for step h:

    w1 = int_0^h exp(s B) ds e2,   w2 = (1/h) int_0^h (h - s) exp(s B) ds e2.

    A forcing f on the velocity row contributes w1 * f (frozen forcing) and
    w2 * df (linear-in-time correction).
    """

    w1_top: np.ndarray
    w1_bot: np.ndarray
    w2_top: np.ndarray
    w2_bot: np.ndarray


def duhamel_weights(c_visc, c_stiff, xi_mag, h: float, block=None) -> DuhamelWeights:
    """Exact quadrature weights from the block itself.

    With B invertible, int exp(sB) = B^-1 (exp(hB) - I) and the second moment
    follows by one more B^-1. Those identities lose digits when h*|g| is small,
    where the exponential series of B is summed instead; this covers xi = 0.
    """
    if h <= 0:
        raise ValueError("step must be positive")
    xi = np.asarray(xi_mag, dtype=float)
    roots = char_roots(xi, c_visc, c_stiff)
    if block is None:
        block = block_propagator(roots, c_visc, c_stiff, xi, h)
    r2 = xi * xi
    a = c_stiff * r2
    b = c_visc * r2
    rho = h * np.abs(roots.gamma_minus)
    series = rho < 0.5

    w1t = np.empty(xi.shape, dtype=complex)
    w1b = np.empty(xi.shape, dtype=complex)
    w2t = np.empty(xi.shape, dtype=complex)
    w2b = np.empty(xi.shape, dtype=complex)

    if np.any(series):
        aa, bb = a[series], b[series]
        v1 = np.zeros(aa.shape, dtype=complex)
        v2 = np.ones(aa.shape, dtype=complex)
        s1t = np.zeros_like(v1)
        s1b = np.zeros_like(v1)
        s2t = np.zeros_like(v1)
        s2b = np.zeros_like(v1)
        c1 = h  # h^(n+1)/(n+1)!
        c2 = h / 2.0  # h^(n+1)/(n+2)!
        for n in range(30):
            s1t += c1 * v1
            s1b += c1 * v2
            s2t += c2 * v1
            s2b += c2 * v2
            v1, v2 = v2, -aa * v1 - bb * v2
            c1 *= h / (n + 2)
            c2 *= h / (n + 3)
        w1t[series], w1b[series] = s1t, s1b
        w2t[series], w2b[series] = s2t, s2b
    closed = ~series
    if np.any(closed):
        aa, bb = a[closed], b[closed]
        g12, g22 = block.g12[closed], block.g22[closed]
        i1 = (1.0 - g22 - bb * g12) / aa
        i2 = (h - g12 - bb * i1) / aa
        w1t[closed], w1b[closed] = i1, g12
        w2t[closed], w2b[closed] = i2 / h, i1 / h
    return DuhamelWeights(w1_top=w1t, w1_bot=w1b, w2_top=w2t, w2_bot=w2b)


# --- whole-space radial quadrature -------------------------------------------


@dataclass(frozen=True)
class RadialProfile:
    """Isotropic initial spectrum: amplitudes of d_0, A_0 (compressible parts
    of eta_0, u_0) and of the solenoidal parts of eta_0, u_0, as functions of
    |xi|. ``r_max`` bounds the support numerically."""

    d0: object
    a0: object
    m0: object
    w0: object
    r_max: float = 12.0

    @classmethod
    def gaussian(cls, which: str = "displacement", width: float = 1.0):
        """exp(-|xi|^2 w^2/2) profiles.

        ``displacement``: Gaussian eta_0 in both Hodge parts, u_0 = 0.
        ``velocity``: Gaussian u_0, eta_0 = 0.
        ``both``: all four parts Gaussian.
        """

        def g(r):
            return np.exp(-0.5 * (width * r) ** 2)

        def zero(r):
            return np.zeros_like(np.asarray(r, dtype=float))

        eta = which in ("displacement", "both")
        vel = which in ("velocity", "both")
        if not (eta or vel):
            raise ValueError(f"unknown Gaussian profile kind {which!r}")
        return cls(
            d0=g if eta else zero,
            a0=g if vel else zero,
            m0=g if eta else zero,
            w0=g if vel else zero,
            r_max=float(np.sqrt(2 * 80.0) / width),
        )


def _integrand_parts(params, profile, r, t, kmax, blocks=None):
    """Shell densities |xi|^(2k) |eta_hat|^2 and |xi|^(2k) |u_hat|^2 for
    k = 0..kmax, without the 4 pi |xi|^2 weight; shape (kmax+1, len(r))."""
    if blocks is None:
        comp = compressible_block(params, r, t)
        sol = solenoidal_block(params, r, t)
    else:
        comp, sol = blocks(r, t)
    d0, a0, m0, w0 = profile.d0(r), profile.a0(r), profile.m0(r), profile.w0(r)
    ce, cu = comp.apply(d0, a0)
    se, su = sol.apply(m0, w0)
    eta = np.abs(ce) ** 2 + np.abs(se) ** 2
    u = np.abs(cu) ** 2 + np.abs(su) ** 2
    powers = (r * r)[None, :] ** np.arange(kmax + 1)[:, None]
    return powers * eta, powers * u


def _breakpoints(params, profile, t, n_base):
    """Panel edges resolving the oscillation period, the decay scale and the
    critical wavenumbers."""
    r_max = profile.r_max
    c_min = min(params.visc_compressible, params.visc_solenoidal)
    pts = [np.linspace(0.0, r_max, n_base + 1)]
    for c in (
        critical_wavenumber(params.visc_compressible, params.stiff_compressible),
        critical_wavenumber(params.visc_solenoidal, params.stiff_solenoidal),
    ):
        if c < r_max:
            pts.append([c])
    if t > 0:
        r_decay = min(math.sqrt(80.0 / (c_min * t)), r_max)
        period = 2 * math.pi / (params.sound_speed * t)
        n_osc = int(min(r_decay / period, 200_000))
        pts.append(np.linspace(0.0, r_decay, max(n_osc, 1) * 2 + n_base + 1))
    return np.unique(np.concatenate([np.asarray(p, dtype=float) for p in pts]))


def _gauss_legendre(edges, order):
    x, w = np.polynomial.legendre.leggauss(order)
    lo, hi = edges[:-1, None], edges[1:, None]
    half = 0.5 * (hi - lo)
    nodes = (lo + half * (x[None, :] + 1.0)).ravel()
    weights = (half * w[None, :]).ravel()
    return nodes, weights


def radial_norms(
    params: SimParams,
    profile: RadialProfile,
    t: float,
    kmax: int = 2,
    rtol: float = 1e-10,
    blocks=None,
) -> tuple:
    """Whole-space ``||grad^k eta(t)||_0^2`` and ``||grad^k u(t)||_0^2`` for
    k = 0..kmax and isotropic data.

    Composite Gauss-Legendre in |xi| with the 4 pi |xi|^2 shell weight; the
    panel set is halved until two successive estimates agree to ``rtol``.
    Returns two arrays of length kmax + 1.
    """
    if t < 0:
        raise ValueError("time must be nonnegative")
    if kmax < 0:
        raise ValueError("derivative order must be nonnegative")
    tail_eta, tail_u = _integrand_parts(
        params, profile, np.array([profile.r_max]), 0.0, kmax
    )
    edges = _breakpoints(params, profile, t, n_base=64)

    def estimate(e):
        nodes, weights = _gauss_legendre(e, 16)
        eta, u = _integrand_parts(params, profile, nodes, t, kmax, blocks)
        shell = 4 * math.pi * nodes * nodes * weights
        return np.concatenate([eta @ shell, u @ shell])

    prev = estimate(edges)
    for _ in range(6):
        edges = np.sort(np.concatenate([edges, 0.5 * (edges[:-1] + edges[1:])]))
        cur = estimate(edges)
        if not np.all(np.isfinite(cur)):
            raise ValueError("radial integral diverged; profile must decay")
        scale = np.maximum(np.abs(cur), 1e-300)
        if np.all(np.abs(cur - prev) <= rtol * scale):
            break
        prev = cur
    else:
        raise RuntimeError("radial quadrature did not converge")
    # a profile still large at r_max would make the truncated integral meaningless
    tail = 4 * math.pi * profile.r_max**3 * (tail_eta[:, 0] + tail_u[:, 0])
    initial = estimate(_breakpoints(params, profile, 0.0, 64))
    total0 = initial[: kmax + 1] + initial[kmax + 1 :]
    if np.any(tail > 1e-10 * np.maximum(total0, 1e-300)):
        raise ValueError("initial profile does not decay; integral is divergent")
    return cur[: kmax + 1], cur[kmax + 1 :]


def radial_decay_norm(
    params: SimParams, profile: RadialProfile, t: float, k: int, blocks=None
) -> float:
    """``||grad^k U(t)||_0^2`` with U = (eta, u) over R^3."""
    if k < 0:
        raise ValueError("k must be nonnegative")
    eta, u = radial_norms(params, profile, t, kmax=k, blocks=blocks)
    return float(eta[k] + u[k])
