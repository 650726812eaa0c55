"""Compressible/solenoidal potentials of (eta, u) and their reconstruction.

Mode-wise, with xi the wavevector,

    d = i |xi|^-1 xi . eta,          M_ij = i |xi|^-1 (eta_i xi_j - xi_i eta_j),

and likewise (A, Mu) for u. Reconstruction inverts this:

    eta = -i |xi|^-1 (d xi + M xi).

Antisymmetric tensors are stored densely as ``(3, 3, n, n, n)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import GridMismatchError
from .spectral import Grid


@dataclass(frozen=True)
class HodgePotentials:
    d: np.ndarray
    M: np.ndarray
    script_a: np.ndarray
    script_m: np.ndarray


def _inv_mag(grid: Grid) -> np.ndarray:
    mag = grid.xi_mag
    inv = np.zeros_like(mag)
    np.divide(1.0, mag, out=inv, where=mag > 0)
    return inv


def _scalar_potential(F: np.ndarray, grid: Grid) -> np.ndarray:
    k = grid.xi
    div = k[0] * F[0] + k[1] * F[1] + k[2] * F[2]
    return 1j * _inv_mag(grid) * div


def _curl_potential(F: np.ndarray, grid: Grid) -> np.ndarray:
    k = grid.xi
    inv = _inv_mag(grid)
    out = np.empty((3, 3) + grid.shape, dtype=complex)
    for i in range(3):
        for j in range(3):
            out[i, j] = 1j * inv * (F[i] * k[j] - k[i] * F[j])
    return out


def decompose(eta_hat: np.ndarray, u_hat: np.ndarray, grid: Grid) -> HodgePotentials:
    grid.check(eta_hat, rank=1)
    grid.check(u_hat, rank=1)
    return HodgePotentials(
        d=_scalar_potential(eta_hat, grid),
        M=_curl_potential(eta_hat, grid),
        script_a=_scalar_potential(u_hat, grid),
        script_m=_curl_potential(u_hat, grid),
    )


def antisymmetry_error(T: np.ndarray) -> float:
    return float(np.max(np.abs(T + np.swapaxes(T, 0, 1)), initial=0.0))


def _rebuild(d: np.ndarray, M: np.ndarray, grid: Grid) -> np.ndarray:
    k = grid.xi
    inv = _inv_mag(grid)
    out = np.empty((3,) + grid.shape, dtype=complex)
    for i in range(3):
        m_xi = M[i, 0] * k[0] + M[i, 1] * k[1] + M[i, 2] * k[2]
        out[i] = -1j * inv * (d * k[i] + m_xi)
    return out


def reconstruct(
    p: HodgePotentials,
    grid: Grid,
    zero_modes=None,
    atol: float = 1e-12,
) -> tuple:
    """Inverse of :func:`decompose`; ``zero_modes = (eta_mean, u_mean)`` is
    re-inserted at xi = 0 (the potentials carry no mean)."""
    for name, T in (("M", p.M), ("script_m", p.script_m)):
        grid.check(T, rank=2)
        scale = max(1.0, float(np.max(np.abs(T), initial=0.0)))
        err = antisymmetry_error(T)
        if err > atol * scale:
            raise ValueError(f"potential {name} is not antisymmetric (error {err:.3g})")
    for s in (p.d, p.script_a):
        if s.shape != grid.shape:
            raise GridMismatchError(f"scalar potential has shape {s.shape}")
    eta_hat = _rebuild(p.d, p.M, grid)
    u_hat = _rebuild(p.script_a, p.script_m, grid)
    if zero_modes is not None:
        eta0, u0 = zero_modes
        eta_hat[:, 0, 0, 0] = eta0
        u_hat[:, 0, 0, 0] = u0
    return eta_hat, u_hat
