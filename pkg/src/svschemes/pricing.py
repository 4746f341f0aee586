"""Payoffs, Black-Scholes kernel and conditioning-based call pricing.

Conditionally on the factor path (Y and W draws), every template
scheme leaves the terminal log-asset Gaussian:

    x_T | factor  ~  N(x0 + D, V),   D = sum of drifts,
                                     V = delta * sum of squared multipliers.

The expected call payoff given the factor path is therefore a closed
Black-Scholes formula, which removes all the B-noise from the
estimator (Romano-Touzi conditioning). CMT admits no such form and is
priced by plain Monte Carlo on the simulated paths.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr

from .errors import InvalidParameterError
from .models import VolModelSpec
from .rng import RngStream
from .schemes import SchemeKind, draw_factor_paths, drift_and_mult, simulate_paths


@dataclass
class PriceEstimate:
    """Monte Carlo price with its standard error and sample size."""

    value: float
    stderr: float
    npaths: int

    @property
    def halfwidth95(self) -> float:
        return 1.96 * self.stderr

    def ci(self, z: float = 1.96) -> tuple[float, float]:
        return self.value - z * self.stderr, self.value + z * self.stderr


def bs_call(s, total_var, r: float, maturity: float, strike: float):
    """Black-Scholes call price from spot and total variance sigma^2*T.

    Zero total variance collapses to the intrinsic value of the forward,
    max(s - K*e^{-rT}, 0); a zero strike returns the spot.
    """
    if strike < 0:
        raise InvalidParameterError(f"strike must be nonnegative, got {strike}")
    if maturity < 0:
        raise InvalidParameterError(f"maturity must be nonnegative, got {maturity}")
    s = np.asarray(s, dtype=float)
    total_var = np.asarray(total_var, dtype=float)
    if np.any(s < 0) or np.any(total_var < 0):
        raise InvalidParameterError("spot and total variance must be nonnegative")
    discounted_strike = strike * math.exp(-r * maturity)
    if strike == 0.0:
        return s + 0.0 * total_var
    intrinsic = np.maximum(s - discounted_strike, 0.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        root = np.sqrt(total_var)
        d1 = (np.log(s / strike) + r * maturity + 0.5 * total_var) / root
        d2 = d1 - root
        price = s * ndtr(d1) - discounted_strike * ndtr(d2)
    degenerate = (total_var == 0.0) | (s == 0.0)
    out = np.where(degenerate, intrinsic, price)
    return float(out) if out.ndim == 0 else out


def call_payoff(spot, strike: float):
    """Undiscounted call payoff."""
    return np.maximum(np.asarray(spot, dtype=float) - strike, 0.0)


def discounted_call_payoff(spec: VolModelSpec, x_terminal, strike: float):
    """Discounted call payoff from terminal log-asset values."""
    return math.exp(-spec.r * spec.T) * call_payoff(np.exp(x_terminal), strike)


def conditional_call_values(spec: VolModelSpec, kind: SchemeKind, n_steps: int,
                            strike: float, rng: RngStream, npaths: int,
                            cutoff: str = "floor") -> np.ndarray:
    """Per-path conditional call prices given the factor draws.

    Each value is bs_call(s0*e^{D + V/2 - rT}, V) with (D, V) the
    accumulated drift and conditional variance of the scheme, so the
    spread across paths carries only the factor-side noise.
    """
    if kind is SchemeKind.CMT:
        raise InvalidParameterError("CMT admits no conditional-Gaussian terminal law")
    draws = draw_factor_paths(spec, kind, n_steps, rng.child("y"), npaths)
    drift, mult = drift_and_mult(spec, kind, draws, cutoff)
    total_drift = drift.sum(axis=0)
    total_var = draws.delta * (mult**2).sum(axis=0)
    spot_eff = spec.s0 * np.exp(total_drift + 0.5 * total_var - spec.r * spec.T)
    return bs_call(spot_eff, total_var, spec.r, spec.T, strike)


def _mc_estimate(values: np.ndarray) -> PriceEstimate:
    n = values.size
    if n < 2:
        raise InvalidParameterError("need at least two samples for a standard error")
    return PriceEstimate(
        value=float(values.mean()),
        stderr=float(values.std(ddof=1) / math.sqrt(n)),
        npaths=n,
    )


def _chunk_sizes(npaths: int, chunk_paths: int):
    sizes = [chunk_paths] * (npaths // chunk_paths)
    if npaths % chunk_paths:
        sizes.append(npaths % chunk_paths)
    return sizes


def romano_touzi_call(spec: VolModelSpec, kind: SchemeKind, n_steps: int, strike: float,
                      rng: RngStream, npaths: int, cutoff: str = "floor",
                      chunk_paths: int = 250_000) -> PriceEstimate:
    """Conditioning-based call price (plain Monte Carlo for CMT).

    Paths are simulated in fixed-size chunks, each on its own child
    stream, so the result is independent of available memory.
    """
    if npaths < 2:
        raise InvalidParameterError(f"need at least two paths, got {npaths}")
    pieces = []
    for i, size in enumerate(_chunk_sizes(npaths, chunk_paths)):
        chunk_rng = rng.child("chunk", i)
        if kind is SchemeKind.CMT:
            path = simulate_paths(kind, spec, n_steps, chunk_rng, size, cutoff)
            pieces.append(discounted_call_payoff(spec, path.x[-1], strike))
        else:
            pieces.append(
                conditional_call_values(spec, kind, n_steps, strike, chunk_rng, size, cutoff)
            )
    return _mc_estimate(np.concatenate(pieces))


def plain_call(spec: VolModelSpec, kind: SchemeKind, n_steps: int, strike: float,
               rng: RngStream, npaths: int, cutoff: str = "floor",
               chunk_paths: int = 250_000) -> PriceEstimate:
    """Unconditioned call price from simulated terminal values."""
    if npaths < 2:
        raise InvalidParameterError(f"need at least two paths, got {npaths}")
    pieces = []
    for i, size in enumerate(_chunk_sizes(npaths, chunk_paths)):
        path = simulate_paths(kind, spec, n_steps, rng.child("chunk", i), size, cutoff)
        pieces.append(discounted_call_payoff(spec, path.x[-1], strike))
    return _mc_estimate(np.concatenate(pieces))
