"""Secular dipolar couplings and inhomogeneous-broadening statistics.

Each nucleus at position r (defect frame, z along the defect axis)
couples to the central spin through the z-row of the point-dipole tensor,

    A_k = D * (delta_zk - 3 n_z n_k) / r^3,   D = (mu0/4pi) gamma_e gamma_c hbar,

returned in rad/s.  The thermal Overhauser-field width of an unpolarized
spin-1/2 bath is sigma = (1/2) sqrt(sum_j |A_j|^2), giving a Gaussian
free-induction decay with dephasing time sqrt(2)/sigma; in the strong-field
limit only the z-components contribute.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .constants import DEFAULT_CONSTANTS, PhysicalConstants
from .geometry import BathConfiguration, config_format


@dataclass(frozen=True)
class BroadeningStats:
    """Overhauser-field widths and the Gaussian dephasing times they imply.

    ``t2_weak = sqrt(2)/sigma_full`` applies at zero field, where the full
    coupling vector fluctuates; ``t2_strong = sqrt(2)/sigma_z`` applies when
    a large nuclear Zeeman energy freezes out the transverse components.
    ``t2_strong`` is infinite when every coupling is purely transverse.
    """

    sigma_full: float
    sigma_z: float
    t2_weak: float
    t2_strong: float


class CrossoverEstimate(NamedTuple):
    """Dominant-prefix coupling scale and the field where bath quantum
    fluctuations switch on/off, b_c = a_bar / gamma_c."""

    k: int
    a_bar: float
    b_c: float


def dipolar_coupling(position, constants: PhysicalConstants = DEFAULT_CONSTANTS) -> np.ndarray:
    """Coupling vector (ax, ay, az) in rad/s for one nucleus.

    Parameters
    ----------
    position : (3,) array, meters, defect frame.

    Raises
    ------
    ValueError for a zero-length position.
    """
    position = np.asarray(position, dtype=float)
    if position.shape != (3,):
        raise ValueError("position must be a 3-vector")
    if np.linalg.norm(position) == 0:
        raise ValueError("nucleus at the origin has no defined dipolar coupling")
    return _dipolar_vectors(position[None, :], constants)[0]


def couplings_for(
    config: BathConfiguration, constants: PhysicalConstants = DEFAULT_CONSTANTS
) -> np.ndarray:
    """Element-wise dipolar couplings, one row per nucleus, order preserved."""
    return _dipolar_vectors(config.positions, constants)


def _dipolar_vectors(positions: np.ndarray, constants: PhysicalConstants) -> np.ndarray:
    r = np.linalg.norm(positions, axis=1)
    n = positions / r[:, None]
    prefactor = constants.dipolar_prefactor / r**3
    couplings = -3.0 * (prefactor * n[:, 2])[:, None] * n
    couplings[:, 2] += prefactor
    return couplings


def coupling_magnitudes(couplings: np.ndarray) -> np.ndarray:
    return np.linalg.norm(np.atleast_2d(couplings), axis=1)


def broadening_stats(couplings: np.ndarray) -> BroadeningStats:
    """Widths of the thermal Overhauser-field distribution.

    sigma_full = (1/2) sqrt(sum |A_j|^2), sigma_z likewise over the
    z-components only.  Raises ValueError when all couplings vanish
    (the dephasing time would be infinite).
    """
    couplings = np.atleast_2d(np.asarray(couplings, dtype=float))
    if couplings.size == 0:
        raise ValueError("empty coupling list")
    total = float(np.sum(couplings**2))
    if total == 0.0:
        raise ValueError("all couplings vanish; no dephasing")
    sigma_full = 0.5 * math.sqrt(total)
    sigma_z = 0.5 * math.sqrt(float(np.sum(couplings[:, 2] ** 2)))
    t2_strong = math.sqrt(2.0) / sigma_z if sigma_z > 0 else math.inf
    return BroadeningStats(
        sigma_full=sigma_full,
        sigma_z=sigma_z,
        t2_weak=math.sqrt(2.0) / sigma_full,
        t2_strong=t2_strong,
    )


def crossover_estimate(
    couplings: np.ndarray,
    variance_fraction: float = 0.8,
    constants: PhysicalConstants = DEFAULT_CONSTANTS,
) -> CrossoverEstimate:
    """Crossover field from the couplings that dominate the broadening.

    Sorts couplings by descending magnitude, takes the smallest prefix
    holding at least ``variance_fraction`` of the total sum of squared
    magnitudes, and averages the prefix magnitudes into a_bar.  The
    crossover field is b_c = a_bar / gamma_c (tesla).
    """
    if not 0.0 < variance_fraction <= 1.0:
        raise ValueError("variance_fraction must lie in (0, 1]")
    couplings = np.atleast_2d(np.asarray(couplings, dtype=float))
    if couplings.size == 0:
        raise ValueError("empty coupling list")
    mag2 = np.sum(couplings**2, axis=1)
    order = np.argsort(-mag2, kind="stable")
    cumulative = np.cumsum(mag2[order])
    k = int(np.searchsorted(cumulative, variance_fraction * cumulative[-1]) + 1)
    k = min(k, len(mag2))
    a_bar = float(np.mean(np.sqrt(mag2[order][:k])))
    return CrossoverEstimate(k=k, a_bar=a_bar, b_c=a_bar / constants.gamma_c)


def participation_ratios(couplings: np.ndarray) -> tuple[float, float]:
    """Effective number of nuclei carrying the broadening variance.

    Returns ``(sum w)^2 / sum w^2`` for weights w = |A_j|^2 and again for
    w = (A_j^z)^2.  Values near 1 mean a single dominant nucleus; the
    Gaussian (central-limit) decay regime needs both ratios large.
    """
    couplings = np.atleast_2d(np.asarray(couplings, dtype=float))
    mag2 = np.sum(couplings**2, axis=1)
    z2 = couplings[:, 2] ** 2
    full = float(mag2.sum() ** 2 / np.sum(mag2**2)) if mag2.any() else 0.0
    z = float(z2.sum() ** 2 / np.sum(z2**2)) if z2.any() else 0.0
    return full, z


def write_couplings_csv(path, config: BathConfiguration, couplings: np.ndarray):
    """CSV export: index, distance, coupling components and magnitude."""
    mags = coupling_magnitudes(couplings)
    lines = ["index, r_m, ax_rad_s, ay_rad_s, az_rad_s, magnitude_rad_s"]
    for i, (r, (ax, ay, az), m) in enumerate(zip(config.distances, couplings, mags)):
        lines.append(
            f"{i}, {config_format(r)}, {config_format(ax)}, "
            f"{config_format(ay)}, {config_format(az)}, {config_format(m)}"
        )
    with open(path, "w", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")
