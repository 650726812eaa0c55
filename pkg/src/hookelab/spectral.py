"""Periodic-box Fourier machinery.

Physical fields are real arrays whose last three axes are the n x n x n grid
(a vector field has shape ``(3, n, n, n)``, a tensor ``(3, 3, n, n, n)``).
Spectral fields have the same shape, complex, in numpy FFT ordering.

Conventions:

* the forward transform carries the 1/n^3 factor, so the zero mode is the mean;
* L^2 norms approximate integrals over the box: ``||f||^2 = L^3 sum |F_m|^2``;
* Nyquist planes are zeroed after every differentiation so odd derivatives
  of real fields stay real;
* the zero mode of Lambda^s, s < 0, is defined as 0 when requested.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property, lru_cache

import numpy as np
import scipy.fft

from .errors import GridMismatchError, ZeroModeError

_WORKERS = 1


def set_workers(n: int) -> None:
    """Cap the number of threads used by the FFTs."""
    global _WORKERS
    _WORKERS = max(1, int(n))


@dataclass(frozen=True)
class Grid:
    n: int
    box_len: float = 2 * np.pi

    def __post_init__(self):
        if self.n < 8 or self.n % 2:
            raise ValueError(f"n must be even and >= 8, got {self.n}")
        if not self.box_len > 0:
            raise ValueError(f"box length must be positive, got {self.box_len}")

    @property
    def shape(self) -> tuple:
        return (self.n, self.n, self.n)

    @property
    def spacing(self) -> float:
        return self.box_len / self.n

    @property
    def cell_volume(self) -> float:
        return self.spacing**3

    @cached_property
    def mode_numbers(self) -> np.ndarray:
        """Integer mode numbers in FFT order; the Nyquist index holds -n/2."""
        return np.fft.fftfreq(self.n, d=1.0 / self.n).astype(int)

    @cached_property
    def wavenumbers(self) -> np.ndarray:
        return (2 * np.pi / self.box_len) * self.mode_numbers

    @cached_property
    def xi(self) -> tuple:
        """Broadcastable wavevector components (n,1,1), (1,n,1), (1,1,n)."""
        k = self.wavenumbers
        return (k[:, None, None], k[None, :, None], k[None, None, :])

    @cached_property
    def xi_full(self) -> np.ndarray:
        """Wavevectors as a dense ``(3, n, n, n)`` array."""
        return np.stack(np.broadcast_arrays(*self.xi))

    @cached_property
    def xi_sq(self) -> np.ndarray:
        k1, k2, k3 = self.xi
        return k1**2 + k2**2 + k3**2

    @cached_property
    def xi_mag(self) -> np.ndarray:
        return np.sqrt(self.xi_sq)

    @cached_property
    def unit_xi(self) -> np.ndarray:
        """xi/|xi| with the zero mode set to 0."""
        mag = np.where(self.xi_mag > 0, self.xi_mag, 1.0)
        out = self.xi_full / mag
        out[:, 0, 0, 0] = 0.0
        return out

    @cached_property
    def nyquist_keep(self) -> np.ndarray:
        """False on any plane with |m_i| = n/2."""
        ok = np.abs(self.mode_numbers) < self.n // 2
        return ok[:, None, None] & ok[None, :, None] & ok[None, None, :]

    @cached_property
    def dealias_mask(self) -> np.ndarray:
        """Two-thirds rule: keep modes with 3|m_i| <= n on every axis."""
        ok = 3 * np.abs(self.mode_numbers) <= self.n
        return ok[:, None, None] & ok[None, :, None] & ok[None, None, :]

    @cached_property
    def points(self) -> np.ndarray:
        """Physical sample locations as a ``(3, n, n, n)`` array."""
        y = np.arange(self.n) * self.spacing
        return np.stack(np.meshgrid(y, y, y, indexing="ij"))

    def check(self, arr: np.ndarray, rank: int | None = None) -> None:
        if arr.shape[-3:] != self.shape:
            raise GridMismatchError(
                f"field grid {arr.shape[-3:]} does not match grid {self.shape}"
            )
        if rank is not None and arr.ndim - 3 != rank:
            raise GridMismatchError(
                f"expected rank-{rank} field, got shape {arr.shape}"
            )


def to_spectral(f: np.ndarray, grid: Grid) -> np.ndarray:
    grid.check(f)
    return scipy.fft.fftn(f, axes=(-3, -2, -1), norm="forward", workers=_WORKERS)


def to_physical(F: np.ndarray, grid: Grid) -> np.ndarray:
    grid.check(F)
    f = scipy.fft.ifftn(F, axes=(-3, -2, -1), norm="forward", workers=_WORKERS)
    return f.real


def _strip_nyquist(F: np.ndarray, grid: Grid) -> np.ndarray:
    return F * grid.nyquist_keep


def gradient(F: np.ndarray, grid: Grid) -> np.ndarray:
    """Spectral gradient; the derivative index is appended as the first axis
    after the input's own component axes, i.e. ``out[i, j] = d_j F_i``."""
    grid.check(F)
    k = grid.xi
    parts = [1j * kj * F for kj in k]
    return _strip_nyquist(np.stack(parts, axis=F.ndim - 3), grid)


def divergence(F: np.ndarray, grid: Grid) -> np.ndarray:
    """Contracts the last component axis with i*xi."""
    grid.check(F)
    if F.ndim < 4 or F.shape[-4] != 3:
        raise GridMismatchError(f"divergence needs a trailing vector axis, got {F.shape}")
    k = grid.xi
    out = 1j * (k[0] * F[..., 0, :, :, :] + k[1] * F[..., 1, :, :, :] + k[2] * F[..., 2, :, :, :])
    return _strip_nyquist(out, grid)


def curl_matrix(F: np.ndarray, grid: Grid) -> np.ndarray:
    """(curl z)_ij = d_j z_i - d_i z_j for a vector field z."""
    grid.check(F, rank=1)
    G = gradient(F, grid)
    return G - np.swapaxes(G, 0, 1)


def laplacian(F: np.ndarray, grid: Grid) -> np.ndarray:
    grid.check(F)
    return _strip_nyquist(-grid.xi_sq * F, grid)


def lambda_power(
    F: np.ndarray, grid: Grid, s: float, mean_zero: bool = False
) -> np.ndarray:
    """Lambda^s = (-Delta)^(s/2), multiplier |xi|^s.

    For s < 0 the zero mode is undefined: it must already vanish, or the
    caller opts into ``mean_zero=True`` which sets it to 0.
    """
    grid.check(F)
    if s == 0:
        return F.copy()
    if s > 0:
        return _strip_nyquist(grid.xi_mag**s * F, grid)
    zero = F[..., 0, 0, 0]
    if not mean_zero and np.any(zero != 0):
        raise ZeroModeError(
            f"Lambda^{s} of a field with nonzero mean; pass mean_zero=True to drop it"
        )
    mag = grid.xi_mag.copy()
    mag[0, 0, 0] = 1.0
    out = mag**s * F
    out[..., 0, 0, 0] = 0.0
    return _strip_nyquist(out, grid)


def derivative_magnitude(F: np.ndarray, grid: Grid, k: int) -> np.ndarray:
    """Multiplier |xi|^k, the Fourier symbol size of the k-th gradient."""
    if k < 0:
        raise ValueError("derivative order must be nonnegative")
    return lambda_power(F, grid, float(k))


_OPS = {
    "grad": gradient,
    "div": divergence,
    "curl_matrix": curl_matrix,
    "laplacian": laplacian,
}


def apply_multiplier(F: np.ndarray, grid: Grid, op: str, **kwargs) -> np.ndarray:
    """Dispatch by name: grad, div, curl_matrix, laplacian, lambda_power (s=...),
    derivative_magnitude (k=...)."""
    if op in _OPS:
        return _OPS[op](F, grid)
    if op == "lambda_power":
        return lambda_power(F, grid, **kwargs)
    if op == "derivative_magnitude":
        return derivative_magnitude(F, grid, **kwargs)
    raise ValueError(f"unknown multiplier {op!r}")


def gradient_norms_sq(F: np.ndarray, grid: Grid, kmax: int) -> np.ndarray:
    """``||grad^k f||_0^2`` for k = 0..kmax, summed over all component axes."""
    grid.check(F)
    power = np.abs(F) ** 2
    if F.ndim > 3:
        power = power.reshape(-1, *grid.shape).sum(axis=0)
    vol = grid.box_len**3
    out = np.empty(kmax + 1)
    weight = np.ones(grid.shape)
    for k in range(kmax + 1):
        out[k] = vol * np.sum(weight * power)
        weight = weight * grid.xi_sq
    return out


def sobolev_norm(F: np.ndarray, grid: Grid, k: int = 0, m: int = 0) -> float:
    """``||grad^k f||_m = sqrt(sum_{j<=m} ||grad^(k+j) f||_0^2)``.

    Derivatives are measured by |xi|^(2j) multipliers, an equivalent norm to
    the multi-index sum; k = m = 0 is the plain L^2 norm.
    """
    if not (0 <= k <= 4 and 0 <= m <= 4):
        raise ValueError(f"need 0 <= k, m <= 4, got k={k}, m={m}")
    sq = gradient_norms_sq(F, grid, k + m)
    return float(np.sqrt(np.sum(sq[k:])))


def l2_norm_physical(f: np.ndarray, grid: Grid) -> float:
    grid.check(f)
    return float(np.sqrt(grid.cell_volume * np.sum(f * f)))


def dealias(F: np.ndarray, grid: Grid) -> np.ndarray:
    grid.check(F)
    return F * grid.dealias_mask


def project_real(F: np.ndarray, grid: Grid) -> np.ndarray:
    """Enforce conjugate symmetry by a physical-space round trip."""
    return to_spectral(to_physical(F, grid), grid)


def conjugate_symmetry_error(F: np.ndarray) -> float:
    """max |F(-m) - conj F(m)| over the lattice."""
    flipped = np.roll(F[..., ::-1, ::-1, ::-1], 1, axis=(-3, -2, -1))
    return float(np.max(np.abs(flipped - np.conj(F)), initial=0.0))


# --- physical-to-physical derivatives through real transforms ---------------

@lru_cache(maxsize=16)
def _rfft_ik(n: int, box_len: float) -> tuple:
    """i*xi on the half spectrum and the mask that zeroes Nyquist planes."""
    m = np.fft.fftfreq(n, d=1.0 / n)
    mr = np.fft.rfftfreq(n, d=1.0 / n)
    k = (2 * np.pi / box_len) * m
    kr = (2 * np.pi / box_len) * mr
    ok, okr = np.abs(m) < n // 2, mr < n // 2
    keep = ok[:, None, None] & ok[None, :, None] & okr[None, None, :]
    return (
        1j * k[:, None, None],
        1j * k[None, :, None],
        1j * kr[None, None, :],
        keep,
    )


def _rfft(f, grid):
    return scipy.fft.rfftn(f, axes=(-3, -2, -1), workers=_WORKERS)


def _irfft(F, grid):
    return scipy.fft.irfftn(F, s=grid.shape, axes=(-3, -2, -1), workers=_WORKERS)


def grad_physical(f: np.ndarray, grid: Grid) -> np.ndarray:
    """Spectral gradient of a real field, physical in and out; same index
    layout as :func:`gradient`."""
    grid.check(f)
    *ik, keep = _rfft_ik(grid.n, grid.box_len)
    Fh = _rfft(f, grid) * keep
    return _irfft(np.stack([d * Fh for d in ik], axis=f.ndim - 3), grid)


def div_physical(f: np.ndarray, grid: Grid) -> np.ndarray:
    """Contraction of the last component axis with the spectral gradient."""
    grid.check(f)
    *ik, keep = _rfft_ik(grid.n, grid.box_len)
    Fh = _rfft(f, grid) * keep
    out = ik[0] * Fh[..., 0, :, :, :] + ik[1] * Fh[..., 1, :, :, :] + ik[2] * Fh[..., 2, :, :, :]
    return _irfft(out, grid)
