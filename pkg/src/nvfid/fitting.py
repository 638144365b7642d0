"""Stretched-exponential decay fits with the three-line beating bracket.

Model:  S(t) = C exp(-(t/T2)^n) * [ 1/3 + 2/3 cos(a14n t + phi) ]

The bracket is dropped in envelope-only mode (the default for simulated
envelopes, where the beating is known exactly).  Fitting minimizes the
unweighted sum of squared residuals by damped least squares: Gauss-Newton
steps with an adaptive Marquardt damping term, the damping increased when
a step fails to reduce the residual and decreased when it succeeds, and
every iterate projected onto the parameter box.  Convergence is declared
when an accepted step changes no parameter by more than the relative
tolerance.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

_PARAM_NAMES = ("c", "t2star", "n", "a14n", "phi")
_EXP_ARG_CAP = 700.0  # beyond this exp(-u) underflows; u*exp(-u) is treated as 0


@dataclass
class FitModelParams:
    """Model parameters: amplitude, dephasing time (s), decay index,
    beating frequency (rad/s) and phase (rad)."""

    c: float
    t2star: float
    n: float
    a14n: float = 0.0
    phi: float = 0.0

    def __post_init__(self):
        if self.c <= 0:
            raise ValueError("amplitude c must be positive")
        if self.t2star <= 0:
            raise ValueError("t2star must be positive")
        if self.n <= 0:
            raise ValueError("decay index n must be positive")

    def as_array(self) -> np.ndarray:
        return np.array([self.c, self.t2star, self.n, self.a14n, self.phi])

    @classmethod
    def from_array(cls, p) -> "FitModelParams":
        return cls(c=float(p[0]), t2star=float(p[1]), n=float(p[2]),
                   a14n=float(p[3]), phi=float(p[4]))


@dataclass
class FitOptions:
    """Optimizer controls; ``parameter_bounds`` maps parameter names to
    (low, high) intervals overriding the defaults."""

    max_iterations: int = 500
    relative_tolerance: float = 1e-10
    parameter_bounds: dict | None = None
    initial_guess: FitModelParams | None = None
    fit_window: tuple | None = None
    envelope_only: bool = True

    def __post_init__(self):
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be at least 1")
        if self.relative_tolerance <= 0:
            raise ValueError("relative_tolerance must be positive")


@dataclass
class FitResult:
    params: FitModelParams
    rms_residual: float
    iterations: int
    converged: bool
    jacobian_condition_estimate: float
    mode: str  # "envelope" or "full", recording which model was fitted


def model_eval(params: FitModelParams, t, envelope_only: bool = True):
    """Model value at ``t`` (scalar or array); the power term is 1 at t=0."""
    t = np.asarray(t, dtype=float)
    with np.errstate(over="ignore"):
        u = (t / params.t2star) ** params.n
    decay = params.c * np.exp(-np.minimum(u, _EXP_ARG_CAP))
    if not envelope_only:
        decay = decay * (1.0 / 3.0 + 2.0 / 3.0 * np.cos(params.a14n * t + params.phi))
    return decay if decay.ndim else float(decay)


def model_gradient(params: FitModelParams, t, envelope_only: bool = True) -> np.ndarray:
    """Analytic partials [d/dC, d/dT2, d/dn, d/da14n, d/dphi], shape (len(t), 5).

    The d/dn partial is -C e^{-u} u ln(t/T2) with u = (t/T2)^n, which has
    limit 0 at t = 0 and at t = T2.
    """
    t = np.atleast_1d(np.asarray(t, dtype=float))
    c, t2, n, a14n, phi = params.c, params.t2star, params.n, params.a14n, params.phi
    with np.errstate(over="ignore", divide="ignore", invalid="ignore"):
        u = (t / t2) ** n
        log_ratio = np.where(t > 0, np.log(np.where(t > 0, t, 1.0) / t2), 0.0)
    exp_u = np.exp(-np.minimum(u, _EXP_ARG_CAP))
    # u e^{-u}: explicitly zero in the deep-decay regime to avoid inf*0
    u_exp_u = np.where(u > _EXP_ARG_CAP, 0.0, u) * exp_u

    if envelope_only:
        bracket = np.ones_like(t)
        d_bracket_freq = np.zeros_like(t)
        d_bracket_phase = np.zeros_like(t)
    else:
        arg = a14n * t + phi
        bracket = 1.0 / 3.0 + 2.0 / 3.0 * np.cos(arg)
        d_bracket_phase = -2.0 / 3.0 * np.sin(arg)
        d_bracket_freq = d_bracket_phase * t

    grad = np.empty((len(t), 5))
    grad[:, 0] = exp_u * bracket
    grad[:, 1] = c * bracket * u_exp_u * (n / t2)
    grad[:, 2] = -c * bracket * u_exp_u * log_ratio
    grad[:, 3] = c * exp_u * d_bracket_freq
    grad[:, 4] = c * exp_u * d_bracket_phase
    return grad


def default_bounds(t: np.ndarray) -> dict:
    """Default parameter box: contains every physical regime with margin."""
    dt = float(np.min(np.diff(t))) if len(t) > 1 else 1e-9
    span = float(t[-1] - t[0]) if len(t) > 1 else 1e-6
    return {
        "c": (1e-300, math.inf),
        "t2star": (dt, 100.0 * span),
        "n": (0.25, 6.0),
        "a14n": (0.0, math.pi / dt),
        "phi": (-math.pi, math.pi),
    }


def _upper_envelope_estimate(t: np.ndarray, values: np.ndarray) -> np.ndarray:
    """Piecewise-linear interpolation through strict local maxima; falls back
    to |values| when the signal carries no visible oscillation."""
    v = values
    peaks = [0]
    peaks += [i for i in range(1, len(v) - 1) if v[i] >= v[i - 1] and v[i] >= v[i + 1]]
    if len(peaks) < 4:
        return np.abs(v)
    return np.interp(t, t[peaks], v[peaks])


def initial_guess(
    t: np.ndarray, values: np.ndarray, envelope_only: bool, bounds: dict
) -> FitModelParams:
    """Starting point heuristics.

    Amplitude from the first sample; dephasing time from the first
    1/e crossing of the envelope estimate (linear interpolation); index 2;
    beating frequency from the dominant nonzero bin of the spectrum of
    values over the envelope estimate; phase 0.
    """
    c0 = float(values[0]) if values[0] > 0 else float(np.max(np.abs(values)))
    c0 = min(max(c0, bounds["c"][0]), 1e300)

    env_est = np.abs(values) if envelope_only else _upper_envelope_estimate(t, values)
    threshold = c0 / math.e
    t2_0 = None
    below = np.nonzero(env_est < threshold)[0]
    for i in below:
        if i == 0:
            continue
        e_hi, e_lo = env_est[i - 1], env_est[i]
        frac = (e_hi - threshold) / (e_hi - e_lo) if e_hi > e_lo else 0.5
        t2_0 = float(t[i - 1] + frac * (t[i] - t[i - 1]))
        break
    if t2_0 is None or t2_0 <= 0:
        t2_0 = float(t[-1] - t[0]) / 3.0
    t2_0 = float(np.clip(t2_0, *bounds["t2star"]))

    a14n_0 = 0.0
    if not envelope_only:
        ratio = values / np.maximum(env_est, 1e-3 * c0)
        ratio = ratio - np.mean(ratio)
        spectrum = np.abs(np.fft.rfft(ratio))
        if len(spectrum) > 1:
            k = 1 + int(np.argmax(spectrum[1:]))
            span = float(t[-1] - t[0])
            a14n_0 = 2.0 * math.pi * k / span if span > 0 else 0.0
        a14n_0 = float(np.clip(a14n_0, *bounds["a14n"]))

    return FitModelParams(c=c0, t2star=t2_0, n=2.0, a14n=a14n_0, phi=0.0)


def fit(times, values, options: FitOptions | None = None) -> FitResult:
    """Least-squares fit of the decay model to sampled data.

    Non-convergence within the iteration budget is reported through
    ``FitResult.converged``, not raised.  Degenerate input (fewer than 8
    samples, or constant values) raises ValueError.
    """
    options = options or FitOptions()
    t = np.asarray(times, dtype=float)
    v = np.asarray(values, dtype=float)
    if t.shape != v.shape or t.ndim != 1:
        raise ValueError("times and values must be 1-d arrays of equal length")
    if options.fit_window is not None:
        lo, hi = options.fit_window
        keep = (t >= lo) & (t <= hi)
        t, v = t[keep], v[keep]
    if len(t) < 8:
        raise ValueError(f"need at least 8 data points, got {len(t)}")
    if np.ptp(v) == 0.0:
        raise ValueError("degenerate data: all values are equal")

    bounds = default_bounds(t)
    bounds.update(options.parameter_bounds or {})
    lower = np.array([bounds[name][0] for name in _PARAM_NAMES])
    upper = np.array([bounds[name][1] for name in _PARAM_NAMES])

    guess = options.initial_guess or initial_guess(t, v, options.envelope_only, bounds)
    p = np.clip(guess.as_array(), lower, upper)

    free = np.array([True, True, True, not options.envelope_only, not options.envelope_only])

    def residual(pvec):
        return model_eval(FitModelParams.from_array(pvec), t, options.envelope_only) - v

    # Relative-change floors: a14n and phi legitimately pass through zero,
    # so give them natural scales (one radian over the window; one radian).
    span = float(t[-1] - t[0])
    change_floor = np.array([1e-300, 1e-300, 1e-300, 1.0 / span, 1.0])

    r = residual(p)
    ssr = float(r @ r)
    damping = 1e-3
    converged = False
    iterations = 0
    jacobian = None

    for iterations in range(1, options.max_iterations + 1):
        jacobian = model_gradient(FitModelParams.from_array(p), t, options.envelope_only)
        j_free = jacobian[:, free]
        gradient = j_free.T @ r
        hessian = j_free.T @ j_free
        diag = np.diag(hessian).copy()
        diag[diag <= 0] = max(diag.max(), 1.0) * 1e-12

        accepted = False
        while damping <= 1e16:
            try:
                step_free = np.linalg.solve(hessian + damping * np.diag(diag), -gradient)
            except np.linalg.LinAlgError:
                damping *= 10.0
                continue
            candidate = p.copy()
            candidate[free] = p[free] + step_free
            candidate = np.clip(candidate, lower, upper)
            r_new = residual(candidate)
            ssr_new = float(r_new @ r_new)
            if np.isfinite(ssr_new) and ssr_new <= ssr:
                actual_step = candidate - p
                p, r, ssr = candidate, r_new, ssr_new
                damping = max(damping / 10.0, 1e-15)
                relative_change = np.max(
                    np.abs(actual_step) / np.maximum(np.abs(p), change_floor)
                )
                accepted = True
                if relative_change < options.relative_tolerance:
                    converged = True
                break
            damping *= 10.0
        if converged or not accepted:
            break

    j_free = jacobian[:, free] if jacobian is not None else np.zeros((len(t), 1))
    scaled = j_free * np.maximum(np.abs(p[free]), 1e-300)[None, :]
    try:
        condition = float(np.linalg.cond(scaled))
    except np.linalg.LinAlgError:
        condition = math.inf

    return FitResult(
        params=FitModelParams.from_array(p),
        rms_residual=math.sqrt(ssr / len(t)),
        iterations=iterations,
        converged=converged,
        jacobian_condition_estimate=condition,
        mode="envelope" if options.envelope_only else "full",
    )


def read_signal_csv(path):
    """Read a decay CSV: either ``t_s, value`` or ``t_s, envelope, signal``.

    Comment lines (#) are skipped; a header naming the columns is optional.
    Returns (t, columns) with ``columns`` a dict keyed by column name
    ("value" for two-column files without a header).
    """
    names = None
    rows = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            fields = [f.strip() for f in line.split(",")]
            try:
                rows.append([float(f) for f in fields])
            except ValueError:
                if names is None:
                    names = fields
                    continue
                raise
    if not rows:
        raise ValueError(f"no data rows in {path}")
    data = np.array(rows)
    if names is None or len(names) != data.shape[1]:
        names = ["t_s"] + (
            ["value"] if data.shape[1] == 2
            else [f"col{i}" for i in range(1, data.shape[1])]
        )
    return data[:, 0], {name: data[:, i] for i, name in enumerate(names) if i > 0}


def fit_report(result: FitResult) -> str:
    """Human-readable key = value report of a fit."""
    p = result.params
    lines = [
        f"mode = {result.mode}",
        f"c = {p.c:.10g}",
        f"t2star_s = {p.t2star:.10g}",
        f"n = {p.n:.10g}",
        f"a14n_rad_s = {p.a14n:.10g}",
        f"phi_rad = {p.phi:.10g}",
        f"rms_residual = {result.rms_residual:.10g}",
        f"iterations = {result.iterations}",
        f"converged = {str(result.converged).lower()}",
        f"jacobian_condition_estimate = {result.jacobian_condition_estimate:.6g}",
    ]
    return "\n".join(lines) + "\n"


def result_to_dict(result: FitResult) -> dict:
    p = result.params
    return {
        "mode": result.mode,
        "params": {
            "c": p.c, "t2star_s": p.t2star, "n": p.n,
            "a14n_rad_s": p.a14n, "phi_rad": p.phi,
        },
        "rms_residual": result.rms_residual,
        "iterations": result.iterations,
        "converged": result.converged,
        "jacobian_condition_estimate": result.jacobian_condition_estimate,
    }


def result_to_json(result: FitResult) -> str:
    return json.dumps(result_to_dict(result), indent=2, sort_keys=True) + "\n"
