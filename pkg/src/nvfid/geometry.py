"""Diamond-lattice carbon sites around the defect and random isotope placement.

The defect frame ("NV frame") has its origin at the vacancy site and its
z-axis along the nitrogen-vacancy bond direction.  Site generation works in
the crystal frame (conventional cubic cell, fcc lattice with a two-atom
basis) and rotates the result so the chosen crystal axis lands on +z.

The two lattice sites occupied by the substitutional nitrogen and by the
vacancy itself are removed from the carbon candidate list.  The nitrogen
site is the nearest-neighbor carbon site reached from the vacancy along
the negative defect axis; the basis is chosen so that this site exists
exactly (second sublattice offset -(1/4,1/4,1/4) of the cell edge).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

# Tie-break resolution for site ordering (meters).  Coarse enough to absorb
# floating-point noise from the frame rotation, fine enough to keep distinct
# lattice shells apart.
_SORT_RESOLUTION = 1e-15

# Standard diamond lattice constant (meters); the conventional cubic cell
# holds 8 carbon atoms.
DIAMOND_LATTICE_CONSTANT = 3.567e-10

_FCC = np.array([[0.0, 0.0, 0.0], [0.0, 0.5, 0.5], [0.5, 0.0, 0.5], [0.5, 0.5, 0.0]])


@dataclass(frozen=True)
class LatticeSpec:
    """Geometry of the carbon supercell around the defect.

    Attributes
    ----------
    lattice_constant : float
        Cubic cell edge (m).
    supercell_radius : float
        Sites are kept within this distance of the vacancy (m).
    nv_axis : tuple
        Defect axis as a crystal-frame direction, e.g. (1, 1, 1).
    abundance : float
        Probability that a carbon site carries a spin-1/2 isotope.
    """

    lattice_constant: float = DIAMOND_LATTICE_CONSTANT
    supercell_radius: float = 4.5e-9
    nv_axis: tuple = (1.0, 1.0, 1.0)
    abundance: float = 0.011

    def __post_init__(self):
        if self.lattice_constant <= 0:
            raise ValueError("lattice_constant must be positive")
        if self.supercell_radius <= self.lattice_constant:
            raise ValueError("supercell_radius must exceed the lattice constant")
        if not 0.0 <= self.abundance <= 1.0:
            raise ValueError("abundance must lie in [0, 1]")
        if np.linalg.norm(np.asarray(self.nv_axis, dtype=float)) == 0:
            raise ValueError("nv_axis must be a nonzero direction")


@dataclass(eq=False)
class BathConfiguration:
    """Nuclear-spin positions in the defect frame plus RNG provenance.

    positions : (N, 3) float array, meters, sorted by distance from the
    origin (lexicographic tie-break).  ``seed`` records the occupancy draw
    that produced the configuration; ``label`` carries free-form provenance
    such as truncation warnings.
    """

    positions: np.ndarray
    seed: int
    label: str = ""

    def __post_init__(self):
        pos = np.asarray(self.positions, dtype=float)
        if pos.ndim != 2 or pos.shape[1] != 3 or len(pos) == 0:
            raise ValueError("positions must be a nonempty (N, 3) array")
        d = np.linalg.norm(pos, axis=1)
        if np.any(d <= 0):
            raise ValueError("all nuclei must sit at nonzero distance from the origin")
        key = _sort_order(pos)
        if not np.array_equal(key, np.arange(len(pos))):
            raise ValueError("positions must be sorted by distance (lexicographic tie-break)")
        if len(np.unique(np.round(pos / _SORT_RESOLUTION), axis=0)) != len(pos):
            raise ValueError("duplicate nuclear positions")
        self.positions = pos

    def __len__(self) -> int:
        return len(self.positions)

    @property
    def distances(self) -> np.ndarray:
        return np.linalg.norm(self.positions, axis=1)


def rotation_to_defect_frame(nv_axis) -> np.ndarray:
    """Rotation matrix taking the crystal-frame defect axis onto +z.

    Rodrigues construction about axis x z; for an axis already (anti-)
    parallel to z the rotation degenerates to the identity (or a flip
    about x).
    """
    a = np.asarray(nv_axis, dtype=float)
    a = a / np.linalg.norm(a)
    z = np.array([0.0, 0.0, 1.0])
    c = float(a @ z)
    if c > 1.0 - 1e-14:
        return np.eye(3)
    if c < -1.0 + 1e-14:
        return np.diag([1.0, -1.0, -1.0])
    v = np.cross(a, z)
    vx = np.array([[0.0, -v[2], v[1]], [v[2], 0.0, -v[0]], [-v[1], v[0], 0.0]])
    return np.eye(3) + vx + vx @ vx / (1.0 + c)


def _sort_order(positions: np.ndarray) -> np.ndarray:
    """Deterministic site ordering: distance, then (x, y, z) lexicographic."""
    q = np.round(positions / _SORT_RESOLUTION)
    d = np.round(np.linalg.norm(positions, axis=1) / _SORT_RESOLUTION)
    return np.lexsort((q[:, 2], q[:, 1], q[:, 0], d))


def generate_lattice_sites(spec: LatticeSpec) -> np.ndarray:
    """All carbon sites of the supercell, in the defect frame.

    Enumerates the diamond structure (fcc lattice + two-atom basis) over
    conventional cells covering the supercell sphere, removes the nitrogen
    and vacancy sites, rotates the crystal frame so ``spec.nv_axis`` lies
    along +z, and orders sites by distance from the vacancy.

    Returns
    -------
    (N, 3) float array of site positions (m).

    Raises
    ------
    ValueError
        If the supercell radius is too small to contain any carbon site.
    """
    a0 = spec.lattice_constant
    # Second sublattice at -(1/4,1/4,1/4): puts a nearest-neighbor site
    # exactly on the negative defect axis, where the nitrogen sits.
    basis = np.vstack([_FCC, _FCC - 0.25])
    nmax = int(np.ceil(spec.supercell_radius / a0)) + 1
    rng = np.arange(-nmax, nmax + 1)
    cells = np.stack(np.meshgrid(rng, rng, rng, indexing="ij"), axis=-1).reshape(-1, 3)
    sites = (cells[:, None, :] + basis[None, :, :]).reshape(-1, 3) * a0

    d = np.linalg.norm(sites, axis=1)
    sites = sites[d <= spec.supercell_radius]
    d = np.linalg.norm(sites, axis=1)

    nitrogen = -0.25 * a0 * np.ones(3)
    occupied_by_defect = (d < a0 * 1e-9) | (
        np.linalg.norm(sites - nitrogen, axis=1) < a0 * 1e-9
    )
    sites = sites[~occupied_by_defect]
    if len(sites) == 0:
        raise ValueError(
            f"supercell radius {spec.supercell_radius:g} m contains no carbon sites"
        )

    rot = rotation_to_defect_frame(spec.nv_axis)
    sites = sites @ rot.T
    return sites[_sort_order(sites)]


def sample_configuration(
    sites: np.ndarray, abundance: float, n_keep: int, seed: int
) -> BathConfiguration:
    """Thin the site list by independent Bernoulli occupancy and keep the
    ``n_keep`` occupied sites nearest the origin.

    The draw consumes exactly one uniform variate per site, in site order,
    from a PCG64 stream seeded with ``seed``; the result is therefore
    bitwise reproducible for a fixed site ordering.

    Raises
    ------
    ValueError
        If no site is occupied (e.g. abundance 0), or on invalid arguments.
        A shortfall (fewer than ``n_keep`` occupied) is not an error; it is
        recorded in the configuration label.
    """
    sites = np.asarray(sites, dtype=float)
    if len(sites) == 0:
        raise ValueError("empty site list")
    if n_keep < 1:
        raise ValueError("n_keep must be at least 1")
    if not 0.0 <= abundance <= 1.0:
        raise ValueError("abundance must lie in [0, 1]")

    rng = np.random.Generator(np.random.PCG64(seed))
    occupied = rng.random(len(sites)) < abundance
    picked = sites[occupied]
    if len(picked) == 0:
        raise ValueError(f"no occupied sites for abundance={abundance} (seed {seed})")

    label = ""
    if len(picked) < n_keep:
        label = f"short: {len(picked)} of {n_keep} requested nuclei"
    return BathConfiguration(positions=picked[:n_keep], seed=seed, label=label)


def filter_by_target_sigma(
    spec: LatticeSpec,
    n_keep: int,
    target_sigma: float,
    rel_tol: float,
    seed_start: int = 0,
    max_trials: int = 1000,
    constants=None,
) -> BathConfiguration:
    """First sampled configuration whose broadening width matches a target.

    Scans seeds ``seed_start, seed_start+1, ...`` and accepts the first
    configuration whose width sigma (half the root sum of squared coupling
    magnitudes) satisfies ``|sigma - target_sigma| <= rel_tol * target_sigma``.
    The accepted seed is recorded on the returned configuration.

    Raises
    ------
    ValueError
        On invalid arguments, or if ``max_trials`` seeds are exhausted; the
        error message reports the closest width encountered.
    """
    # Local import: hyperfine consumes configurations from this module.
    from . import hyperfine
    from .constants import DEFAULT_CONSTANTS

    if target_sigma <= 0:
        raise ValueError("target_sigma must be positive")
    if not 0.0 < rel_tol < 1.0:
        raise ValueError("rel_tol must lie strictly between 0 and 1")
    if max_trials < 1:
        raise ValueError("max_trials must be at least 1")
    constants = constants or DEFAULT_CONSTANTS

    sites = generate_lattice_sites(spec)
    best = (np.inf, None)
    for trial in range(max_trials):
        seed = seed_start + trial
        try:
            config = sample_configuration(sites, spec.abundance, n_keep, seed)
        except ValueError:
            continue
        couplings = hyperfine.couplings_for(config, constants)
        sigma = hyperfine.broadening_stats(couplings, constants).sigma_full
        miss = abs(sigma - target_sigma)
        if miss <= rel_tol * target_sigma:
            return config
        if miss < best[0]:
            best = (miss, sigma)
    raise ValueError(
        f"no configuration within {rel_tol:.3g} of target sigma {target_sigma:.6g} rad/s "
        f"after {max_trials} trials from seed {seed_start}; closest was "
        f"{best[1]:.6g} rad/s"
    )


def save_configuration(path, config: BathConfiguration, spec: LatticeSpec, n_keep: int):
    """Write a configuration as a plain-text table.

    Header comment lines record seed, lattice constant, abundance and the
    requested bath size; each row holds ``index, x_m, y_m, z_m`` with 17
    significant digits (exact float round-trip).
    """
    lines = [
        f"# seed = {config.seed}",
        f"# lattice_constant_m = {config_format(spec.lattice_constant)}",
        f"# abundance = {spec.abundance!r}",
        f"# n_keep = {n_keep}",
        f"# label = {config.label}",
    ]
    for i, (x, y, z) in enumerate(config.positions):
        lines.append(
            f"{i}, {config_format(x)}, {config_format(y)}, {config_format(z)}"
        )
    with open(path, "w", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def load_configuration(path) -> BathConfiguration:
    """Read back a table written by :func:`save_configuration`."""
    seed, label = 0, ""
    rows = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                key, _, value = line[1:].partition("=")
                key = key.strip()
                if key == "seed":
                    seed = int(value.strip())
                elif key == "label":
                    label = value.strip()
                continue
            fields = [f.strip() for f in line.split(",")]
            rows.append([float(fields[1]), float(fields[2]), float(fields[3])])
    return BathConfiguration(positions=np.array(rows), seed=seed, label=label)


def config_format(x: float) -> str:
    """Exponential notation with 17 significant digits (round-trip exact)."""
    return f"{x:.16e}"
