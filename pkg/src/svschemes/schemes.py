"""One-step transition kernels and path builders for every scheme.

Every scheme except CMT fits the conditional-Gaussian template

    x_{k+1} = x_k + drift_k + mult_k * dB_{k+1}

where drift_k and mult_k depend only on the factor-side randomness
(Y values, W increments and the time integral iW). ``drift_and_mult``
computes those two arrays for a whole path at once; the couplings, the
terminal-form simulation and the Romano-Touzi conditioning all reuse
them. CMT does not fit the template (its update mixes dB into the
factor recursion) and keeps a dedicated recursion.

Simulation is vectorized across paths: arrays are laid out with shape
(steps, paths). Draw order per step and stream: the factor stream "y"
supplies the joint (dW, iW, dY) normals step by step, the asset stream
"b" supplies the B-increments, and the uniform stream "u" supplies
bridge uniforms, each an independent child stream of the caller's.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import InvalidParameterError, NumericalError
from .models import VolModelSpec
from .rng import (
    JointIncrement,
    OUJointDraw,
    RngStream,
    joint_chol,
    ou_joint_from_normals,
    ou_transition_moments,
    ou_triple_chol,
)


class SchemeKind(str, Enum):
    EULER = "euler"
    WEAKTRAJ1 = "weaktraj1"
    WEAKTRAJ1_OU_EXACT = "weaktraj1-ou-exact"
    OU_IMPROVED = "ou-improved"
    WEAK2 = "weak2"
    IJK = "ijk"
    CMT = "cmt"


# Kinds that only make sense with exact OU factor simulation.
_OU_ONLY = {SchemeKind.WEAKTRAJ1_OU_EXACT, SchemeKind.OU_IMPROVED, SchemeKind.IJK}

# Kinds compatible with the conditional-Gaussian template above.
GAUSSIAN_TEMPLATE_KINDS = (
    SchemeKind.EULER,
    SchemeKind.WEAKTRAJ1,
    SchemeKind.OU_IMPROVED,
    SchemeKind.WEAK2,
    SchemeKind.IJK,
)


@dataclass(frozen=True)
class StepDraws:
    """Randomness consumed by one step: factor joint draw, dB, extras."""

    joint: JointIncrement | OUJointDraw
    dB: float
    g: float | None = None


@dataclass
class GridPath:
    """Scheme state on the uniform grid; arrays are (N+1,) or (N+1, paths)."""

    times: np.ndarray
    x: np.ndarray
    y: np.ndarray
    m: np.ndarray | None = None
    v: np.ndarray | None = None


@dataclass
class FactorDraws:
    """Factor-side randomness for a batch of paths.

    y has shape (N+1, paths); dW and iW have shape (N, paths). For
    OU-backed specs y is the exact solution at the grid nodes and stays
    consistent under coarsening (coarse nodes = fine even nodes).
    """

    delta: float
    y: np.ndarray
    dW: np.ndarray
    iW: np.ndarray


def _require_ou(spec: VolModelSpec, kind: SchemeKind):
    if spec.ou is None:
        raise InvalidParameterError(f"scheme {kind.value} requires an OU-backed spec")


def _sqrt1m_rho2(spec: VolModelSpec) -> float:
    return math.sqrt(max(0.0, 1.0 - spec.rho**2))


def cutoff_radicand(spec: VolModelSpec, y, correction, cutoff: str = "floor"):
    """Variance radicand psi(y) + correction with the configured cutoff.

    ``floor`` keeps only the lower cutoff (max with psi_lower); ``band``
    first caps at psi_hat(y), then floors, matching the left-to-right
    reading of the band cutoff.
    """
    rad = spec.psi(y) + correction
    if cutoff == "band":
        rad = np.minimum(rad, spec.psi_hat(y))
    elif cutoff != "floor":
        raise InvalidParameterError(f"unknown cutoff {cutoff!r}; expected 'floor' or 'band'")
    floor = max(spec.psi_lower, 0.0)
    rad = np.maximum(rad, floor)
    assert np.all(rad >= floor), "cutoff failed to enforce the variance floor"
    return rad


# ---------------------------------------------------------------------------
# one-step kernels


def milstein_step_y(spec: VolModelSpec, y, delta: float, dW):
    """Milstein update for the factor SDE."""
    if not delta > 0:
        raise InvalidParameterError(f"delta must be positive, got {delta}")
    sig = spec.sigma(y)
    return y + spec.b(y) * delta + sig * dW + 0.5 * sig * spec.sigma1(y) * (np.asarray(dW) ** 2 - delta)


def nv_step_y(spec: VolModelSpec, y, delta: float, dW):
    """Ninomiya-Victoir update: half drift flow, full vol flow, half drift flow."""
    if not delta > 0:
        raise InvalidParameterError(f"delta must be positive, got {delta}")
    if spec.flow_drift is None or spec.flow_vol is None:
        raise InvalidParameterError("spec supplies no closed-form ODE flows for the NV step")
    half = spec.flow_drift(y, delta / 2.0)
    full = spec.flow_vol(half, dW)
    return spec.flow_drift(full, delta / 2.0)


def weaktraj1_step(spec: VolModelSpec, x, y_prev, y_next, delta: float, iW, dB,
                   cutoff: str = "floor"):
    """First-order weak-trajectorial update of the log-asset."""
    if not delta > 0:
        raise InvalidParameterError(f"delta must be positive, got {delta}")
    correction = spec.sigma(y_prev) * spec.psi1(y_prev) * np.asarray(iW) / delta
    rad = cutoff_radicand(spec, y_prev, correction, cutoff)
    return (
        x
        + spec.rho * (spec.F(y_next) - spec.F(y_prev))
        + delta * spec.h(y_prev)
        + _sqrt1m_rho2(spec) * np.sqrt(rad) * dB
    )


def ou_improved_step(spec: VolModelSpec, x, y_prev, y_next, delta: float, iW, dB):
    """Order-3/2 refinement of the weak-trajectorial update (OU factor)."""
    _require_ou(spec, SchemeKind.OU_IMPROVED)
    if spec.h1 is None or spec.h2 is None:
        raise InvalidParameterError("ou_improved_step needs closed-form h' and h''")
    if not delta > 0:
        raise InvalidParameterError(f"delta must be positive, got {delta}")
    ou = spec.ou
    pull = ou.kappa * (ou.theta - np.asarray(y_prev))
    h_tilde = (
        delta * spec.h(y_prev)
        + ou.nu * spec.h1(y_prev) * np.asarray(iW)
        + (pull * spec.h1(y_prev) + 0.5 * ou.nu**2 * spec.h2(y_prev)) * delta**2 / 2.0
    )
    psi_tilde = np.maximum(
        spec.psi(y_prev)
        + ou.nu * spec.psi1(y_prev) * np.asarray(iW) / delta
        + (pull * spec.psi1(y_prev) + 0.5 * ou.nu**2 * spec.psi2(y_prev)) * delta / 2.0,
        max(spec.psi_lower, 0.0),
    )
    floor = max(spec.psi_lower, 0.0)
    assert np.all(psi_tilde >= floor), "cutoff failed to enforce the variance floor"
    return (
        x
        + spec.rho * (spec.F(y_next) - spec.F(y_prev))
        + h_tilde
        + _sqrt1m_rho2(spec) * np.sqrt(psi_tilde) * dB
    )


def euler_step(spec: VolModelSpec, x, y, delta: float, dW, dB, y_next=None):
    """Euler log-asset update; the factor moves exactly when y_next is given.

    OU-backed callers draw y_next from the exact transition (jointly
    with dW) and pass it in; otherwise the factor falls back to its own
    Euler update driven by the same dW.
    """
    if not delta > 0:
        raise InvalidParameterError(f"delta must be positive, got {delta}")
    x_next = (
        x
        + (spec.r - 0.5 * spec.psi(y)) * delta
        + spec.f(y) * (spec.rho * np.asarray(dW) + _sqrt1m_rho2(spec) * np.asarray(dB))
    )
    if y_next is None:
        y_next = y + spec.b(y) * delta + spec.sigma(y) * np.asarray(dW)
    return x_next, y_next


def ijk_step(spec: VolModelSpec, x, y_prev, y_next, delta: float, dW, dB):
    """Kahl-Jaeckel update with exact OU factor values at both nodes."""
    _require_ou(spec, SchemeKind.IJK)
    if not delta > 0:
        raise InvalidParameterError(f"delta must be positive, got {delta}")
    nu = spec.ou.nu
    dW = np.asarray(dW)
    return (
        x
        + (spec.r - (spec.psi(y_next) + spec.psi(y_prev)) / 4.0) * delta
        + spec.rho * spec.f(y_prev) * dW
        + _sqrt1m_rho2(spec) * 0.5 * (spec.f(y_next) + spec.f(y_prev)) * np.asarray(dB)
        + 0.5 * spec.rho * nu * spec.f1(y_prev) * (dW**2 - delta)
    )


def cmt_step(spec: VolModelSpec, x, y, delta: float, dW, dB):
    """Cruzeiro-Malliavin-Thalmaier update, all coefficients at the left node."""
    if not delta > 0:
        raise InvalidParameterError(f"delta must be positive, got {delta}")
    f_val = np.asarray(spec.f(y), dtype=float)
    if np.any(np.abs(f_val) < 1e-12):
        raise NumericalError("cmt_step: f(y) vanishes, sigma^2 f'/(2f) term is singular")
    dW = np.asarray(dW)
    dB = np.asarray(dB)
    sig = spec.sigma(y)
    sig1 = spec.sigma1(y)
    fp = spec.f1(y)
    sqrt1m = _sqrt1m_rho2(spec)
    x_next = (
        x
        + (spec.r - 0.5 * spec.psi(y)) * delta
        + spec.rho * f_val * dW
        + 0.5 * spec.rho * sig * fp * dW**2
        + sqrt1m * sig * fp * dW * dB
        + sqrt1m * f_val * dB
        - 0.5 * spec.rho * sig * fp * dB**2
    )
    y_next = (
        y
        + (spec.b(y) + 0.5 * (sig**2 * fp / f_val - sig * sig1)) * delta
        + sig * dW
        + 0.5 * sig * sig1 * dW**2
        - sig**2 * fp / (2.0 * f_val) * dB**2
    )
    return x_next, y_next


# ---------------------------------------------------------------------------
# vectorized path machinery


def _ou_factor_path(spec: VolModelSpec, delta: float, n_steps: int, dy: np.ndarray):
    """Exact OU path from the stochastic increments dy, shape (N, paths)."""
    decay, mean_shift, _, _, _ = ou_transition_moments(spec.ou, delta)
    y = np.empty((n_steps + 1,) + dy.shape[1:])
    y[0] = spec.y0
    for k in range(n_steps):
        y[k + 1] = mean_shift + decay * y[k] + dy[k]
    return y


def _recursive_factor_path(spec: VolModelSpec, delta: float, dW: np.ndarray, use_nv: bool):
    """Milstein (or NV) factor path for generic specs."""
    n_steps = dW.shape[0]
    y = np.empty((n_steps + 1,) + dW.shape[1:])
    y[0] = spec.y0
    for k in range(n_steps):
        if use_nv:
            y[k + 1] = nv_step_y(spec, y[k], delta, dW[k])
        else:
            y[k + 1] = milstein_step_y(spec, y[k], delta, dW[k])
    return y


def draw_brownian_increments(rng_b: RngStream, n_steps: int, npaths: int,
                             delta: float) -> np.ndarray:
    """Independent B-increments, shape (n_steps, npaths), variance delta."""
    if not delta > 0:
        raise InvalidParameterError(f"delta must be positive, got {delta}")
    return math.sqrt(delta) * rng_b.normal((n_steps, npaths))


def draw_factor_paths(spec: VolModelSpec, kind: SchemeKind, n_steps: int,
                      rng_y: RngStream, npaths: int) -> FactorDraws:
    """Draw all factor-side randomness for a batch of paths.

    OU-backed specs consume three normals per step (the joint law of
    dW, iW and the exact factor increment); generic specs consume two
    (dW, iW) and build y by Milstein (NV for the weak scheme).
    """
    if n_steps < 1:
        raise InvalidParameterError(f"need at least one step, got {n_steps}")
    if kind in _OU_ONLY:
        _require_ou(spec, kind)
    delta = spec.T / n_steps
    if spec.ou is not None:
        g = rng_y.normal((n_steps, 3, npaths))
        chol = ou_triple_chol(spec.ou, delta)
        dW = chol[0, 0] * g[:, 0]
        iW = chol[1, 0] * g[:, 0] + chol[1, 1] * g[:, 1]
        dy = chol[2, 0] * g[:, 0] + chol[2, 1] * g[:, 1] + chol[2, 2] * g[:, 2]
        y = _ou_factor_path(spec, delta, n_steps, dy)
    else:
        g = rng_y.normal((n_steps, 2, npaths))
        chol = joint_chol(delta)
        dW = chol[0, 0] * g[:, 0]
        iW = chol[1, 0] * g[:, 0] + chol[1, 1] * g[:, 1]
        y = _recursive_factor_path(spec, delta, dW, use_nv=kind is SchemeKind.WEAK2)
    return FactorDraws(delta=delta, y=y, dW=dW, iW=iW)


def coarsen_factor_draws(spec: VolModelSpec, kind: SchemeKind,
                         fine: FactorDraws) -> FactorDraws:
    """Halve the resolution of factor draws consistently with the fine grid.

    Coarse dW sums the two fine increments; the coarse time integral
    uses iW_coarse = iW_1 + iW_2 + delta_fine * dW_1. For OU-backed
    specs the coarse factor values are the fine even nodes (the exact
    solution restricted to the coarse grid); generic specs re-run their
    factor recursion on the summed increments.
    """
    if fine.dW.shape[0] % 2 != 0:
        raise InvalidParameterError("fine draws must have an even number of steps")
    delta_c = 2.0 * fine.delta
    dW_c = fine.dW[0::2] + fine.dW[1::2]
    iW_c = fine.iW[0::2] + fine.iW[1::2] + fine.delta * fine.dW[0::2]
    if spec.ou is not None:
        y_c = fine.y[::2]
    else:
        y_c = _recursive_factor_path(spec, delta_c, dW_c, use_nv=kind is SchemeKind.WEAK2)
    return FactorDraws(delta=delta_c, y=y_c, dW=dW_c, iW=iW_c)


def drift_and_mult(spec: VolModelSpec, kind: SchemeKind, draws: FactorDraws,
                   cutoff: str = "floor"):
    """Per-step drift and B-multiplier arrays for template schemes.

    Conditionally on the factor draws, the log-asset path is
    x_{k+1} = x_k + drift[k] + mult[k]*dB[k]; both arrays have shape
    (N, paths).
    """
    y_prev = draws.y[:-1]
    y_next = draws.y[1:]
    delta = draws.delta
    sqrt1m = _sqrt1m_rho2(spec)
    if kind in (SchemeKind.WEAKTRAJ1, SchemeKind.WEAKTRAJ1_OU_EXACT):
        drift = spec.rho * (spec.F(y_next) - spec.F(y_prev)) + delta * spec.h(y_prev)
        correction = spec.sigma(y_prev) * spec.psi1(y_prev) * draws.iW / delta
        mult = sqrt1m * np.sqrt(cutoff_radicand(spec, y_prev, correction, cutoff))
    elif kind is SchemeKind.OU_IMPROVED:
        _require_ou(spec, kind)
        if spec.h1 is None or spec.h2 is None:
            raise InvalidParameterError("OU_IMPROVED needs closed-form h' and h''")
        ou = spec.ou
        pull = ou.kappa * (ou.theta - y_prev)
        drift = (
            spec.rho * (spec.F(y_next) - spec.F(y_prev))
            + delta * spec.h(y_prev)
            + ou.nu * spec.h1(y_prev) * draws.iW
            + (pull * spec.h1(y_prev) + 0.5 * ou.nu**2 * spec.h2(y_prev)) * delta**2 / 2.0
        )
        floor = max(spec.psi_lower, 0.0)
        psi_tilde = np.maximum(
            spec.psi(y_prev)
            + ou.nu * spec.psi1(y_prev) * draws.iW / delta
            + (pull * spec.psi1(y_prev) + 0.5 * ou.nu**2 * spec.psi2(y_prev)) * delta / 2.0,
            floor,
        )
        assert np.all(psi_tilde >= floor), "cutoff failed to enforce the variance floor"
        mult = sqrt1m * np.sqrt(psi_tilde)
    elif kind is SchemeKind.EULER:
        drift = (spec.r - 0.5 * spec.psi(y_prev)) * delta + spec.rho * spec.f(y_prev) * draws.dW
        mult = sqrt1m * spec.f(y_prev)
        mult = np.broadcast_to(np.asarray(mult), drift.shape)
    elif kind is SchemeKind.IJK:
        _require_ou(spec, kind)
        nu = spec.ou.nu
        drift = (
            (spec.r - (spec.psi(y_next) + spec.psi(y_prev)) / 4.0) * delta
            + spec.rho * spec.f(y_prev) * draws.dW
            + 0.5 * spec.rho * nu * spec.f1(y_prev) * (draws.dW**2 - delta)
        )
        mult = sqrt1m * 0.5 * (spec.f(y_next) + spec.f(y_prev))
    elif kind is SchemeKind.WEAK2:
        drift = (
            spec.rho * (spec.F(y_next) - spec.F(y_prev))
            + delta * 0.5 * (spec.h(y_prev) + spec.h(y_next))
        )
        mult = sqrt1m * np.sqrt(0.5 * (spec.psi(y_prev) + spec.psi(y_next)))
    else:
        raise InvalidParameterError(f"scheme {kind.value} has no drift/multiplier form")
    return drift, mult


def cmt_paths(spec: VolModelSpec, delta: float, dW: np.ndarray, dB: np.ndarray):
    """CMT recursion over a batch of paths; returns (x, y) node arrays."""
    n_steps = dW.shape[0]
    x = np.empty((n_steps + 1,) + dW.shape[1:])
    y = np.empty_like(x)
    x[0] = spec.x0
    y[0] = spec.y0
    for k in range(n_steps):
        x[k + 1], y[k + 1] = cmt_step(spec, x[k], y[k], delta, dW[k], dB[k])
    return x, y


def _assemble_x(x0: float, drift: np.ndarray, mult: np.ndarray, dB: np.ndarray):
    increments = drift + mult * dB
    x = np.empty((increments.shape[0] + 1,) + increments.shape[1:])
    x[0] = x0
    np.cumsum(increments, axis=0, out=x[1:])
    x[1:] += x0
    return x


def _weak2_accumulators(spec: VolModelSpec, draws: FactorDraws):
    """Cumulative trapezoidal integrals of h and f^2 along the factor path."""
    h_vals = spec.h(draws.y)
    psi_vals = spec.psi(draws.y)
    m_inc = draws.delta * 0.5 * (h_vals[:-1] + h_vals[1:])
    v_inc = draws.delta * 0.5 * (psi_vals[:-1] + psi_vals[1:])
    shape = (m_inc.shape[0] + 1,) + m_inc.shape[1:]
    m = np.zeros(shape)
    v = np.zeros(shape)
    np.cumsum(m_inc, axis=0, out=m[1:])
    np.cumsum(v_inc, axis=0, out=v[1:])
    return m, v


def simulate_paths(kind: SchemeKind, spec: VolModelSpec, n_steps: int,
                   rng: RngStream, npaths: int, cutoff: str = "floor") -> GridPath:
    """Simulate a batch of paths on the uniform grid.

    Consumes the child streams "y" (factor joint draws) and "b"
    (B-increments) of ``rng`` in the documented order.
    """
    draws = draw_factor_paths(spec, kind, n_steps, rng.child("y"), npaths)
    dB = draw_brownian_increments(rng.child("b"), n_steps, npaths, draws.delta)
    times = np.linspace(0.0, spec.T, n_steps + 1)
    if kind is SchemeKind.CMT:
        x, y = cmt_paths(spec, draws.delta, draws.dW, dB)
        return GridPath(times=times, x=x, y=y)
    drift, mult = drift_and_mult(spec, kind, draws, cutoff)
    x = _assemble_x(spec.x0, drift, mult, dB)
    m = v = None
    if kind is SchemeKind.WEAK2:
        m, v = _weak2_accumulators(spec, draws)
    return GridPath(times=times, x=x, y=draws.y, m=m, v=v)


def simulate_path(kind: SchemeKind, spec: VolModelSpec, n_steps: int,
                  rng: RngStream, cutoff: str = "floor") -> GridPath:
    """Single-path convenience wrapper around simulate_paths."""
    batch = simulate_paths(kind, spec, n_steps, rng, 1, cutoff)
    return GridPath(
        times=batch.times,
        x=batch.x[:, 0],
        y=batch.y[:, 0] if batch.y.ndim == 2 else batch.y,
        m=None if batch.m is None else batch.m[:, 0],
        v=None if batch.v is None else batch.v[:, 0],
    )


def weak2_terminal(spec: VolModelSpec, n_steps: int, rng: RngStream, npaths: int | None = None):
    """Terminal draw of the second-order weak scheme.

    Returns (xT, yT, m_bar, v_bar); scalars when npaths is None, arrays
    of length npaths otherwise. The factor path uses the exact OU
    transition when available, the NV scheme otherwise; one independent
    normal G closes the conditional Gaussian.
    """
    if not -1.0 < spec.rho < 1.0:
        raise InvalidParameterError(f"weak2_terminal requires rho in (-1, 1), got {spec.rho}")
    squeeze = npaths is None
    count = 1 if squeeze else npaths
    draws = draw_factor_paths(spec, SchemeKind.WEAK2, n_steps, rng.child("y"), count)
    m, v = _weak2_accumulators(spec, draws)
    g = rng.child("b").normal(count)
    y_terminal = draws.y[-1]
    m_bar = m[-1]
    v_bar = v[-1]
    x_terminal = (
        spec.x0
        + spec.rho * (spec.F(y_terminal) - spec.F(spec.y0))
        + m_bar
        + np.sqrt((1.0 - spec.rho**2) * v_bar) * g
    )
    if squeeze:
        return float(x_terminal[0]), float(y_terminal[0]), float(m_bar[0]), float(v_bar[0])
    return x_terminal, y_terminal, m_bar, v_bar
