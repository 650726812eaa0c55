"""Physical constants of the compressible Hookean viscoelastic model."""

from __future__ import annotations

from dataclasses import dataclass
import math


@dataclass(frozen=True)
class SimParams:
    """Viscosities, elasticity and the power-law pressure P(rho) = A * rho**g.

    Defaults give P'(1) = 1.4.
    """

    mu: float = 1.0
    lam: float = 1.0
    kappa: float = 100.0
    pressure_amp: float = 1.0
    pressure_exp: float = 1.4

    def __post_init__(self):
        if not self.mu > 0:
            raise ValueError(f"mu must be positive, got {self.mu}")
        if not 3 * self.lam + 2 * self.mu > 0:
            raise ValueError(
                f"need 3*lam + 2*mu > 0, got lam={self.lam}, mu={self.mu}"
            )
        if not self.kappa > 0:
            raise ValueError(f"kappa must be positive, got {self.kappa}")
        if not self.p_prime_1 > 0:
            raise ValueError(
                f"pressure must increase at rho=1, got P'(1)={self.p_prime_1}"
            )

    @property
    def p_prime_1(self) -> float:
        return self.pressure_amp * self.pressure_exp

    # coefficients of the two Hodge blocks
    @property
    def visc_compressible(self) -> float:
        return self.lam + self.mu

    @property
    def stiff_compressible(self) -> float:
        return self.p_prime_1 + self.kappa

    @property
    def visc_solenoidal(self) -> float:
        return self.mu

    @property
    def stiff_solenoidal(self) -> float:
        return self.kappa

    @property
    def sound_speed(self) -> float:
        return math.sqrt(self.stiff_compressible)

    @property
    def shear_speed(self) -> float:
        return math.sqrt(self.kappa)

    def pressure(self, rho):
        return self.pressure_amp * rho**self.pressure_exp

    def replace(self, **changes) -> "SimParams":
        fields = dict(
            mu=self.mu,
            lam=self.lam,
            kappa=self.kappa,
            pressure_amp=self.pressure_amp,
            pressure_exp=self.pressure_exp,
        )
        fields.update(changes)
        return SimParams(**fields)
