"""Physical constants and unit conventions.

All quantities in this package are strictly SI internally:
positions in meters, times in seconds, magnetic fields in tesla,
and couplings / broadening widths in angular frequency (rad/s).
Gyromagnetic ratios are angular frequencies per tesla (rad s^-1 T^-1);
this convention reproduces the usual crossover-field arithmetic
B ~ A / gamma_n without stray factors of 2*pi.
"""

from __future__ import annotations

from dataclasses import dataclass

# 1 Gauss = 1e-4 tesla; conversion happens only at I/O boundaries.
GAUSS = 1e-4

# Ground-state zero-field splitting of the central electron spin (rad/s,
# ~2.87 GHz).  It justifies the pure-dephasing (secular) treatment and is
# recorded in run metadata only; it never enters the dynamics.
ZERO_FIELD_SPLITTING = 2 * 3.141592653589793 * 2.87e9


@dataclass(frozen=True)
class PhysicalConstants:
    """Constants entering the dipolar coupling and bath Zeeman energy.

    Attributes
    ----------
    gamma_e : float
        Electron gyromagnetic ratio (rad s^-1 T^-1).
    gamma_c : float
        13C nuclear gyromagnetic ratio (rad s^-1 T^-1).
    hbar : float
        Reduced Planck constant (J s).
    mu0_over_4pi : float
        Magnetic constant over 4*pi (T m / A).
    """

    gamma_e: float = 1.76e11
    gamma_c: float = 6.73e7
    hbar: float = 1.0546e-34
    mu0_over_4pi: float = 1e-7

    def __post_init__(self):
        for name in ("gamma_e", "gamma_c", "hbar", "mu0_over_4pi"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be strictly positive")

    @property
    def dipolar_prefactor(self) -> float:
        """(mu0/4pi) * gamma_e * gamma_c * hbar, in rad/s * m^3.

        Dividing by r^3 gives the scale of the dipolar coupling of a
        nucleus at distance r.
        """
        return self.mu0_over_4pi * self.gamma_e * self.gamma_c * self.hbar


DEFAULT_CONSTANTS = PhysicalConstants()
