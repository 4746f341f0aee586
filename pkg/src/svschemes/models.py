"""Stochastic volatility model specifications.

A model is described by the asset dynamics

    dS = r S dt + f(Y) S (rho dW + sqrt(1-rho^2) dB)
    dY = b(Y) dt + sigma(Y) dW

together with the derived functions used by the discretization schemes:
the primitive F of f/sigma (anchored at 0), the transformed drift

    h(y) = r - f(y)^2/2 - rho*(b*f/sigma + (sigma*f' - f*sigma')/2)(y)

and psi = f^2 with its lower bound and the capped bound psi_hat.

All derivatives are supplied analytically by the model builder; the
schemes need them exactly and every model of interest is closed-form.
When F has no closed form it is evaluated by cached adaptive quadrature
of f/sigma.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.integrate import quad
from scipy.interpolate import CubicSpline

from .errors import ConfigError, InvalidParameterError

# Scalar-or-array function of the factor value.
Fn = Callable[[float | np.ndarray], float | np.ndarray]


@dataclass(frozen=True)
class OUParams:
    """Ornstein-Uhlenbeck factor dY = kappa*(theta - Y) dt + nu dW."""

    kappa: float
    theta: float
    nu: float
    y0: float

    def __post_init__(self):
        if not self.kappa > 0:
            raise InvalidParameterError(f"kappa must be positive, got {self.kappa}")
        if not self.nu > 0:
            raise InvalidParameterError(f"nu must be positive, got {self.nu}")


@dataclass(frozen=True)
class ScottParams:
    """Scott model: f(y) = sigma0*exp(y) with an OU factor."""

    sigma0: float
    kappa: float
    theta: float
    nu: float
    rho: float
    r: float
    s0: float
    y0: float
    T: float

    def __post_init__(self):
        if not self.sigma0 > 0:
            raise InvalidParameterError(f"sigma0 must be positive, got {self.sigma0}")
        if not self.s0 > 0:
            raise InvalidParameterError(f"s0 must be positive, got {self.s0}")
        if not self.T > 0:
            raise InvalidParameterError(f"T must be positive, got {self.T}")
        if not -1.0 <= self.rho <= 1.0:
            raise InvalidParameterError(f"rho must lie in [-1, 1], got {self.rho}")
        # positivity of kappa/nu checked by the OUParams embedding
        OUParams(self.kappa, self.theta, self.nu, self.y0)

    @property
    def ou(self) -> OUParams:
        return OUParams(self.kappa, self.theta, self.nu, self.y0)


@dataclass(frozen=True)
class VolModelSpec:
    """Immutable model specification consumed by the schemes.

    All callables accept scalars or numpy arrays. ``ou`` is set when the
    factor is an OU process, which unlocks exact factor simulation.
    ``flow_drift(y, t)`` and ``flow_vol(y, s)`` are the closed-form ODE
    flows of V0 = b - sigma*sigma'/2 and V = sigma used by the
    Ninomiya-Victoir step; they may be None for OU-backed specs (never
    needed) or derived from a zeta-primitive via ``vol_flow_from_zeta``.
    """

    r: float
    s0: float
    y0: float
    T: float
    rho: float
    f: Fn
    f1: Fn
    f2: Fn
    b: Fn
    b1: Fn
    sigma: Fn
    sigma1: Fn
    sigma2: Fn
    F: Fn
    h: Fn
    psi: Fn
    psi1: Fn
    psi2: Fn
    psi_lower: float
    psi_hat: Fn
    h1: Fn | None = None
    h2: Fn | None = None
    ou: OUParams | None = None
    scott: ScottParams | None = None
    flow_drift: Callable[[float | np.ndarray, float], float | np.ndarray] | None = None
    flow_vol: Callable[[float | np.ndarray, float | np.ndarray], float | np.ndarray] | None = None

    @property
    def x0(self) -> float:
        return math.log(self.s0)


@dataclass
class ValidationReport:
    """Consistency check results; empty failure list means pass."""

    failures: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.failures


class QuadPrimitive:
    """Primitive of an integrand with value 0 at 0, by cached quadrature.

    Keeps a knot grid of cumulative Gauss-Kronrod integrals (abs tol
    1e-10) with cubic interpolation between knots; the grid is extended
    on demand when evaluated outside the cached range.
    """

    def __init__(self, integrand: Fn, step: float = 0.0625):
        self._integrand = integrand
        self._step = step
        self._lo = 0
        self._hi = 0
        self._knots = np.array([0.0])
        self._values = np.array([0.0])
        self._spline = None
        self._extend(-1.0, 1.0)

    def _extend(self, lo: float, hi: float):
        lo_idx = math.floor(lo / self._step) - 1
        hi_idx = math.ceil(hi / self._step) + 1
        changed = False
        while self._lo > lo_idx:
            a = (self._lo - 1) * self._step
            piece, _ = quad(self._integrand, a, self._lo * self._step, epsabs=1e-12)
            self._knots = np.concatenate(([a], self._knots))
            self._values = np.concatenate(([self._values[0] - piece], self._values))
            self._lo -= 1
            changed = True
        while self._hi < hi_idx:
            b = (self._hi + 1) * self._step
            piece, _ = quad(self._integrand, self._hi * self._step, b, epsabs=1e-12)
            self._knots = np.concatenate((self._knots, [b]))
            self._values = np.concatenate((self._values, [self._values[-1] + piece]))
            self._hi += 1
            changed = True
        if changed or self._spline is None:
            self._spline = CubicSpline(self._knots, self._values)

    def __call__(self, y):
        arr = np.asarray(y, dtype=float)
        self._extend(float(arr.min()), float(arr.max()))
        out = self._spline(arr)
        return float(out) if np.isscalar(y) or arr.ndim == 0 else out


def derive_h(spec: VolModelSpec, y):
    """Transformed drift h built from the raw model coefficients."""
    sig = spec.sigma(y)
    return (
        spec.r
        - 0.5 * spec.f(y) ** 2
        - spec.rho
        * (spec.b(y) * spec.f(y) / sig + 0.5 * (sig * spec.f1(y) - spec.f(y) * spec.sigma1(y)))
    )


def make_spec(
    *,
    r: float,
    s0: float,
    y0: float,
    T: float,
    rho: float,
    f: Fn,
    f1: Fn,
    f2: Fn,
    b: Fn,
    b1: Fn,
    sigma: Fn,
    sigma1: Fn,
    sigma2: Fn,
    F: Fn | None = None,
    h: Fn | None = None,
    h1: Fn | None = None,
    h2: Fn | None = None,
    psi_lower: float | None = None,
    psi_upper: float | None = None,
    ou: OUParams | None = None,
    scott: ScottParams | None = None,
    flow_drift=None,
    flow_vol=None,
) -> VolModelSpec:
    """Assemble a VolModelSpec, deriving psi, h, F and psi_hat as needed.

    ``psi_lower`` defaults to 0; ``psi_upper`` finite makes psi_hat that
    constant, otherwise psi_hat(y) = 1.5*f(y)^2.
    """
    if not s0 > 0:
        raise InvalidParameterError(f"s0 must be positive, got {s0}")
    if not T > 0:
        raise InvalidParameterError(f"T must be positive, got {T}")
    if not -1.0 <= rho <= 1.0:
        raise InvalidParameterError(f"rho must lie in [-1, 1], got {rho}")

    def psi(y):
        return f(y) ** 2

    def psi1(y):
        return 2.0 * f(y) * f1(y)

    def psi2(y):
        return 2.0 * (f1(y) ** 2 + f(y) * f2(y))

    if F is None:
        F = QuadPrimitive(lambda y: f(y) / sigma(y))

    if h is None:
        def h(y):
            sig = sigma(y)
            return r - 0.5 * f(y) ** 2 - rho * (
                b(y) * f(y) / sig + 0.5 * (sig * f1(y) - f(y) * sigma1(y))
            )

    if psi_upper is None:
        def psi_hat(y):
            return 1.5 * f(y) ** 2
    else:
        def psi_hat(y):
            return psi_upper + 0.0 * np.asarray(y, dtype=float)

    return VolModelSpec(
        r=r, s0=s0, y0=y0, T=T, rho=rho,
        f=f, f1=f1, f2=f2, b=b, b1=b1,
        sigma=sigma, sigma1=sigma1, sigma2=sigma2,
        F=F, h=h,
        psi=psi, psi1=psi1, psi2=psi2,
        psi_lower=0.0 if psi_lower is None else psi_lower,
        psi_hat=psi_hat,
        h1=h1, h2=h2, ou=ou, scott=scott,
        flow_drift=flow_drift, flow_vol=flow_vol,
    )


def vol_flow_from_zeta(zeta: Fn, zeta_inv: Fn):
    """Flow of the ODE eta' = V(eta) from a primitive zeta of 1/V.

    Returns flow_vol(y, s) = zeta_inv(s + zeta(y)); the caller's
    zeta_inv is expected to raise FlowDomainError outside its range.
    """

    def flow_vol(y, s):
        return zeta_inv(s + zeta(y))

    return flow_vol


def scott_model(params: ScottParams) -> VolModelSpec:
    """Scott model spec with every derived function in closed form."""
    s0_, r_, rho_ = params.s0, params.r, params.rho
    sig0, kap, th, nu = params.sigma0, params.kappa, params.theta, params.nu

    def f(y):
        return sig0 * np.exp(y)

    def F(y):
        return sig0 * np.expm1(y) / nu

    def h(y):
        e = np.exp(y)
        return r_ - 0.5 * sig0**2 * e**2 - rho_ * sig0 * e * (kap * (th - y) / nu + nu / 2)

    def h1(y):
        e = np.exp(y)
        return -(sig0**2) * e**2 - rho_ * sig0 * e * (kap * (th - y) / nu + nu / 2 - kap / nu)

    def h2(y):
        e = np.exp(y)
        return -2.0 * sig0**2 * e**2 - rho_ * sig0 * e * (
            kap * (th - y) / nu + nu / 2 - 2.0 * kap / nu
        )

    return make_spec(
        r=r_, s0=s0_, y0=params.y0, T=params.T, rho=rho_,
        f=f, f1=f, f2=f,
        b=lambda y: kap * (th - y), b1=lambda y: -kap + 0.0 * np.asarray(y, dtype=float),
        sigma=lambda y: nu + 0.0 * np.asarray(y, dtype=float),
        sigma1=lambda y: 0.0 * np.asarray(y, dtype=float),
        sigma2=lambda y: 0.0 * np.asarray(y, dtype=float),
        F=F, h=h, h1=h1, h2=h2,
        psi_lower=0.0, psi_upper=None,
        ou=params.ou, scott=params,
        flow_drift=lambda y, t: th + (y - th) * np.exp(-kap * t),
        flow_vol=lambda y, s: y + nu * s,
    )


def validate_spec(spec: VolModelSpec, probe_points: Sequence[float]) -> ValidationReport:
    """Spot-check the derived-function identities at the probe points."""
    if len(probe_points) == 0:
        raise InvalidParameterError("probe_points must be nonempty")
    report = ValidationReport()
    if not -1.0 <= spec.rho <= 1.0:
        report.failures.append(f"rho out of range: {spec.rho}")
    eps = 1e-5
    for y in probe_points:
        sig = float(spec.sigma(y))
        if not sig > 0:
            report.failures.append(f"sigma not positive at y={y}: {sig}")
            continue
        target = float(spec.f(y)) / sig
        fd = (float(spec.F(y + eps)) - float(spec.F(y - eps))) / (2 * eps)
        if abs(fd - target) > 1e-5 * (1.0 + abs(target)):
            report.failures.append(f"F inconsistent with f/sigma at y={y}: {fd} vs {target}")
        if abs(float(spec.h(y)) - float(derive_h(spec, y))) > 1e-8 * (1.0 + abs(float(spec.h(y)))):
            report.failures.append(f"h inconsistent with components at y={y}")
        psi_val = float(spec.psi(y))
        if abs(psi_val - float(spec.f(y)) ** 2) > 1e-10 * (1.0 + psi_val):
            report.failures.append(f"psi differs from f^2 at y={y}")
        if spec.psi_lower > psi_val + 1e-12:
            report.failures.append(f"psi_lower exceeds psi at y={y}")
        if float(spec.psi_hat(y)) < psi_val - 1e-12:
            report.failures.append(f"psi_hat below psi at y={y}")
    return report


_SCOTT_KEYS = {"model", "sigma0", "kappa", "theta", "nu", "rho", "r", "s0", "y0", "T"}


def spec_from_config(cfg: dict) -> VolModelSpec:
    """Build a spec from a JSON-style config mapping.

    Only the Scott model is configurable this way; unknown keys are
    rejected so typos fail loudly.
    """
    if not isinstance(cfg, dict):
        raise ConfigError(f"config must be a mapping, got {type(cfg).__name__}")
    model = cfg.get("model")
    if model != "scott":
        raise ConfigError(f"unsupported model {model!r}; expected 'scott'")
    unknown = set(cfg) - _SCOTT_KEYS
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    missing = _SCOTT_KEYS - set(cfg)
    if missing:
        raise ConfigError(f"missing config keys: {sorted(missing)}")
    numeric = {}
    for key in sorted(_SCOTT_KEYS - {"model"}):
        value = cfg[key]
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"config key {key!r} must be a number, got {value!r}")
        numeric[key] = float(value)
    try:
        params = ScottParams(**numeric)
    except InvalidParameterError as exc:
        raise ConfigError(str(exc)) from exc
    return scott_model(params)


def benchmark_scott_params() -> ScottParams:
    """The benchmark Scott parameter set used throughout the experiments."""
    return ScottParams(
        sigma0=0.25, kappa=1.0, theta=0.0, nu=7.0 * math.sqrt(2.0) / 20.0,
        rho=-0.2, r=0.05, s0=100.0, y0=0.0, T=1.0,
    )
