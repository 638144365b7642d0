"""Run configuration: strict TOML parsing with mandatory unit tags.

Every dimensioned input is a string ``"<value> <unit>"`` (for example
``b = "10.3 gauss"``); bare numbers are rejected for dimensioned keys, and
unknown keys anywhere in the file are rejected outright.  Fields mix Gauss
and SI freely in practice, so silent unit mistakes are the dominant risk;
conversion to strict SI happens here, exactly once.

Per-trial seeds derive from a master seed and a trial index through
SplitMix64 (``derive_seed``), a fixed, documented integer mixing function,
so multi-trial runs are reproducible from one recorded seed.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib

from .constants import GAUSS, PhysicalConstants
from .fitting import FitOptions
from .geometry import LatticeSpec

_UNIT_SCALES = {
    "length": {"m": 1.0, "nm": 1e-9, "angstrom": 1e-10},
    "field": {"tesla": 1.0, "gauss": GAUSS},
    "time": {"s": 1.0, "ms": 1e-3, "us": 1e-6, "ns": 1e-9},
    "angular_frequency": {"rad/s": 1.0, "rad/ms": 1e3, "rad/us": 1e6, "rad/ns": 1e9},
}

_SCHEMA = {
    "lattice": {"lattice_constant", "supercell_radius", "nv_axis", "abundance"},
    "bath": {"n_keep", "seed", "label"},
    "filter": {"target_sigma", "rel_tol", "max_trials", "seed_start"},
    "constants": {"gamma_e", "gamma_c", "hbar", "mu0_over_4pi"},
    "signal": {"a14n", "phase"},
    "field": {"b"},
    "grid": {"points", "span_multiplier"},
    "fit": {"max_iterations", "relative_tolerance", "envelope_only", "window"},
    "sweep": {"fields", "log_min", "log_max", "count", "include_zero"},
    "converge": {"sizes", "b"},
    "oracle": {"n_spins", "fields", "points", "tolerance"},
    "output": {"directory"},
}


class ConfigError(ValueError):
    """Invalid or ambiguous run configuration."""


def parse_quantity(value, kind: str, key: str) -> float:
    """Convert ``"<number> <unit>"`` to SI for the given dimension ``kind``.

    Raises ConfigError naming ``key`` when the unit tag is missing or the
    unit does not belong to the dimension.
    """
    units = _UNIT_SCALES[kind]
    if not isinstance(value, str):
        raise ConfigError(
            f"{key}: dimensioned values need a unit tag, e.g. "
            f"\"1.0 {next(iter(units))}\"; got {value!r}"
        )
    parts = value.split()
    if len(parts) != 2:
        raise ConfigError(f"{key}: expected \"<value> <unit>\", got {value!r}")
    number, unit = parts
    if unit not in units:
        raise ConfigError(
            f"{key}: unknown {kind} unit {unit!r}; allowed: {sorted(units)}"
        )
    try:
        return float(number) * units[unit]
    except ValueError:
        raise ConfigError(f"{key}: cannot parse number {number!r}") from None


def derive_seed(master: int, index: int) -> int:
    """Per-trial seed from a master seed and trial index (SplitMix64).

    state = (master + (index + 1) * 0x9E3779B97F4A7C15) mod 2^64, then the
    SplitMix64 output permutation.  Stable across releases.
    """
    mask = (1 << 64) - 1
    z = (master + (index + 1) * 0x9E3779B97F4A7C15) & mask
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & mask
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & mask
    return (z ^ (z >> 31)) & mask


@dataclass
class RunConfig:
    """Validated, SI-converted run configuration."""

    lattice: LatticeSpec
    n_keep: int
    seed: int
    label: str
    constants: PhysicalConstants
    a14n: float
    phase: float
    b_tesla: float
    grid_points: int
    grid_span_multiplier: float
    fit_options: FitOptions
    filter_target_sigma: float | None
    filter_rel_tol: float
    filter_max_trials: int
    filter_seed_start: int | None
    sweep_fields: list
    converge_sizes: list
    converge_b: float
    oracle_n_spins: int
    oracle_fields: list
    oracle_points: int
    oracle_tolerance: float
    output_directory: str | None
    sha256: str


def _require(table: dict, section: str, key: str, typ, default=None, required=False):
    if key not in table:
        if required:
            raise ConfigError(f"missing required key [{section}] {key}")
        return default
    value = table[key]
    if typ is float and isinstance(value, int) and not isinstance(value, bool):
        value = float(value)
    if not isinstance(value, typ) or isinstance(value, bool) and typ is not bool:
        raise ConfigError(f"[{section}] {key}: expected {typ.__name__}, got {value!r}")
    return value


def _check_schema(raw: dict):
    for section, table in raw.items():
        if section not in _SCHEMA:
            raise ConfigError(f"unknown config section [{section}]")
        if not isinstance(table, dict):
            raise ConfigError(f"[{section}] must be a table")
        for key in table:
            if key not in _SCHEMA[section]:
                raise ConfigError(f"unknown key [{section}] {key}")


def load_run_config(path) -> RunConfig:
    """Parse, validate and SI-convert a TOML run configuration file."""
    with open(path, "rb") as fh:
        blob = fh.read()
    try:
        raw = tomllib.loads(blob.decode("utf-8"))
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    _check_schema(raw)
    digest = hashlib.sha256(blob).hexdigest()

    lat = raw.get("lattice", {})
    lattice = LatticeSpec(
        lattice_constant=parse_quantity(
            lat["lattice_constant"], "length", "[lattice] lattice_constant"
        ) if "lattice_constant" in lat else LatticeSpec.lattice_constant,
        supercell_radius=parse_quantity(
            lat["supercell_radius"], "length", "[lattice] supercell_radius"
        ) if "supercell_radius" in lat else LatticeSpec.supercell_radius,
        nv_axis=tuple(lat.get("nv_axis", (1.0, 1.0, 1.0))),
        abundance=_require(lat, "lattice", "abundance", float, default=0.011),
    )

    bath = raw.get("bath", {})
    n_keep = _require(bath, "bath", "n_keep", int, default=500)
    seed = _require(bath, "bath", "seed", int, default=0)
    label = _require(bath, "bath", "label", str, default="")
    if n_keep < 1:
        raise ConfigError("[bath] n_keep must be at least 1")
    if seed < 0:
        raise ConfigError("[bath] seed must be a nonnegative integer")

    cons = raw.get("constants", {})
    constants = PhysicalConstants(
        gamma_e=_require(cons, "constants", "gamma_e", float, default=1.76e11),
        gamma_c=_require(cons, "constants", "gamma_c", float, default=6.73e7),
        hbar=_require(cons, "constants", "hbar", float, default=1.0546e-34),
        mu0_over_4pi=_require(cons, "constants", "mu0_over_4pi", float, default=1e-7),
    )

    sig = raw.get("signal", {})
    a14n = parse_quantity(sig["a14n"], "angular_frequency", "[signal] a14n") \
        if "a14n" in sig else 0.0
    phase = _require(sig, "signal", "phase", float, default=0.0)

    fld = raw.get("field", {})
    b_tesla = parse_quantity(fld["b"], "field", "[field] b") if "b" in fld else 0.0

    grid = raw.get("grid", {})
    grid_points = _require(grid, "grid", "points", int, default=400)
    grid_span = _require(grid, "grid", "span_multiplier", float, default=4.0)
    if grid_points < 2:
        raise ConfigError("[grid] points must be at least 2")
    if grid_span <= 0:
        raise ConfigError("[grid] span_multiplier must be positive")

    fit_table = raw.get("fit", {})
    window = None
    if "window" in fit_table:
        w = fit_table["window"]
        if not isinstance(w, list) or len(w) != 2:
            raise ConfigError("[fit] window must be a two-element list of times")
        window = (
            parse_quantity(w[0], "time", "[fit] window[0]"),
            parse_quantity(w[1], "time", "[fit] window[1]"),
        )
    fit_options = FitOptions(
        max_iterations=_require(fit_table, "fit", "max_iterations", int, default=500),
        relative_tolerance=_require(
            fit_table, "fit", "relative_tolerance", float, default=1e-10
        ),
        envelope_only=_require(fit_table, "fit", "envelope_only", bool, default=True),
        fit_window=window,
    )

    filt = raw.get("filter", {})
    target_sigma = parse_quantity(
        filt["target_sigma"], "angular_frequency", "[filter] target_sigma"
    ) if "target_sigma" in filt else None
    filter_rel_tol = _require(filt, "filter", "rel_tol", float, default=0.1)
    filter_max_trials = _require(filt, "filter", "max_trials", int, default=1000)
    filter_seed_start = _require(filt, "filter", "seed_start", int, default=None)

    sweep = raw.get("sweep", {})
    sweep_fields = []
    if "fields" in sweep:
        values = sweep["fields"]
        if not isinstance(values, list):
            raise ConfigError("[sweep] fields must be a list")
        sweep_fields = [
            parse_quantity(v, "field", f"[sweep] fields[{i}]")
            for i, v in enumerate(values)
        ]
    elif "log_min" in sweep or "log_max" in sweep:
        lo = parse_quantity(sweep["log_min"], "field", "[sweep] log_min")
        hi = parse_quantity(sweep["log_max"], "field", "[sweep] log_max")
        count = _require(sweep, "sweep", "count", int, default=20)
        if lo <= 0 or hi <= lo:
            raise ConfigError("[sweep] log_min/log_max must satisfy 0 < min < max")
        ratio = (hi / lo) ** (1.0 / (count - 1)) if count > 1 else 1.0
        sweep_fields = [lo * ratio**i for i in range(count)]
        if sweep.get("include_zero", True):
            sweep_fields = [0.0] + sweep_fields

    conv = raw.get("converge", {})
    converge_sizes = conv.get("sizes", [1, 3, 5, 10, 30, 100])
    if not isinstance(converge_sizes, list) or not all(
        isinstance(s, int) and not isinstance(s, bool) for s in converge_sizes
    ):
        raise ConfigError("[converge] sizes must be a list of integers")
    converge_b = parse_quantity(conv["b"], "field", "[converge] b") \
        if "b" in conv else 0.0

    orc = raw.get("oracle", {})
    oracle_n_spins = _require(orc, "oracle", "n_spins", int, default=8)
    oracle_fields = [
        parse_quantity(v, "field", f"[oracle] fields[{i}]")
        for i, v in enumerate(orc.get("fields", ["0 gauss", "10 gauss", "100 gauss", "300 gauss"]))
    ]
    oracle_points = _require(orc, "oracle", "points", int, default=200)
    oracle_tolerance = _require(orc, "oracle", "tolerance", float, default=1e-9)

    out = raw.get("output", {})
    output_directory = _require(out, "output", "directory", str, default=None)

    return RunConfig(
        lattice=lattice,
        n_keep=n_keep,
        seed=seed,
        label=label,
        constants=constants,
        a14n=a14n,
        phase=phase,
        b_tesla=b_tesla,
        grid_points=grid_points,
        grid_span_multiplier=grid_span,
        fit_options=fit_options,
        filter_target_sigma=target_sigma,
        filter_rel_tol=filter_rel_tol,
        filter_max_trials=filter_max_trials,
        filter_seed_start=filter_seed_start,
        sweep_fields=sweep_fields,
        converge_sizes=converge_sizes,
        converge_b=converge_b,
        oracle_n_spins=oracle_n_spins,
        oracle_fields=oracle_fields,
        oracle_points=oracle_points,
        oracle_tolerance=oracle_tolerance,
        output_directory=output_directory,
        sha256=digest,
    )
