"""Brute-force full-Hilbert-space decay for small baths.

Builds the conditional bath Hamiltonians on the full 2^N product space and
evaluates the coherence trace directly,

    L(t) = 2^-N Tr[ exp(+i H0 t) exp(-i H1 t) ],
    H0 = sum_j gamma_c B Iz_j,
    H1 = sum_j ( -A_j . I_j + gamma_c B Iz_j ),

via Hermitian eigendecomposition of each Hamiltonian.  This is the
independent reference the closed-form product formula is checked against:
for a non-interacting bath the 2^N trace factorizes exactly into per-
nucleus 2x2 traces.
"""

from __future__ import annotations

import numpy as np

from .constants import DEFAULT_CONSTANTS, PhysicalConstants

MAX_BATH_SPINS = 12  # complex 4096^2 matrices; larger baths are refused

_SX = np.array([[0.0, 1.0], [1.0, 0.0]], dtype=complex)
_SY = np.array([[0.0, -1.0j], [1.0j, 0.0]], dtype=complex)
_SZ = np.array([[1.0, 0.0], [0.0, -1.0]], dtype=complex)


def _embed(op: np.ndarray, site: int, n_spins: int) -> np.ndarray:
    """Single-site operator lifted to the 2^N product space."""
    out = np.eye(1, dtype=complex)
    for j in range(n_spins):
        out = np.kron(out, op if j == site else np.eye(2, dtype=complex))
    return out


def fid_bruteforce(
    couplings: np.ndarray,
    b_tesla: float,
    t: np.ndarray,
    constants: PhysicalConstants = DEFAULT_CONSTANTS,
) -> np.ndarray:
    """Exact coherence envelope of an N <= 12 spin bath.

    Raises
    ------
    ValueError
        For more than 12 bath spins, or if the assembled Hamiltonians fail
        the Hermiticity self-check (internal error).
    """
    couplings = np.atleast_2d(np.asarray(couplings, dtype=float))
    n_spins = len(couplings)
    if n_spins > MAX_BATH_SPINS:
        raise ValueError(
            f"brute-force evaluation refused for N={n_spins} > {MAX_BATH_SPINS}"
        )
    t = np.asarray(t, dtype=float)
    dim = 2**n_spins
    omega_z = constants.gamma_c * b_tesla

    h0 = np.zeros((dim, dim), dtype=complex)
    h1 = np.zeros((dim, dim), dtype=complex)
    for j, (ax, ay, az) in enumerate(couplings):
        # spin-1/2 operators I = sigma/2
        sz_j = _embed(_SZ, j, n_spins)
        h0 += 0.5 * omega_z * sz_j
        coupling_term = 0.5 * (ax * _embed(_SX, j, n_spins) + ay * _embed(_SY, j, n_spins) + az * sz_j)
        h1 += 0.5 * omega_z * sz_j - coupling_term

    scale = max(np.abs(h0).max(), np.abs(h1).max(), 1.0)
    if max(np.abs(h0 - h0.conj().T).max(), np.abs(h1 - h1.conj().T).max()) > 1e-12 * scale:
        raise ValueError("internal error: assembled Hamiltonian is not Hermitian")

    eig0, vec0 = np.linalg.eigh(h0)
    eig1, vec1 = np.linalg.eigh(h1)

    # Tr[e^{iH0 t} e^{-iH1 t}] = sum_{m,k} |M_mk|^2 e^{i(e0_m - e1_k) t},
    # M = V0^dagger V1; evaluated as a dense time-by-state contraction.
    overlap_sq = np.abs(vec0.conj().T @ vec1) ** 2
    phase1 = np.exp(-1j * np.outer(t, eig1))
    partial = phase1 @ overlap_sq.T
    phase0 = np.exp(1j * np.outer(t, eig0))
    trace = np.sum(phase0 * partial, axis=1) / dim

    if np.abs(trace.imag).max() > 1e-10:
        raise ValueError(
            f"internal error: trace has imaginary part {np.abs(trace.imag).max():.3e}"
        )
    return trace.real
