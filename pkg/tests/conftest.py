"""Shared model fixtures for the test suite."""

import dataclasses
import math

import numpy as np

from svschemes.models import (
    OUParams,
    benchmark_scott_params,
    make_spec,
    scott_model,
    vol_flow_from_zeta,
)


def scott_spec(**overrides):
    params = benchmark_scott_params()
    if overrides:
        params = dataclasses.replace(params, **overrides)
    return scott_model(params)


def const_vol_ou_spec(rho=0.0, sigma0=0.25, kappa=1.0, theta=0.0, nu=0.5,
                      r=0.05, s0=100.0, y0=0.0, T=1.0):
    """OU-backed spec with constant f: the asset is Black-Scholes when rho=0."""
    ou = OUParams(kappa=kappa, theta=theta, nu=nu, y0=y0)

    def zeros(y):
        return 0.0 * np.asarray(y, dtype=float)

    # h(y) = r - sigma0^2/2 - rho*kappa*(theta-y)*sigma0/nu (f'=sigma'=0)
    slope = rho * kappa * sigma0 / nu
    return make_spec(
        r=r, s0=s0, y0=y0, T=T, rho=rho,
        f=lambda y: sigma0 + zeros(y),
        f1=zeros, f2=zeros,
        b=lambda y: kappa * (theta - np.asarray(y, dtype=float)),
        b1=lambda y: -kappa + zeros(y),
        sigma=lambda y: nu + zeros(y),
        sigma1=zeros, sigma2=zeros,
        F=lambda y: (sigma0 / nu) * np.asarray(y, dtype=float),
        h1=lambda y: slope + zeros(y),
        h2=zeros,
        ou=ou,
        flow_drift=lambda y, t: theta + (np.asarray(y, dtype=float) - theta) * math.exp(-kappa * t),
        flow_vol=lambda y, s: np.asarray(y, dtype=float) + nu * np.asarray(s),
    )


def gbm_factor_spec(rho=0.0):
    """Generic (non-OU) spec whose factor is a GBM: exercises the NV flows."""
    return make_spec(
        r=0.05, s0=100.0, y0=1.0, T=1.0, rho=rho,
        f=lambda y: 0.25 + 0.0 * np.asarray(y, dtype=float),
        f1=lambda y: 0.0 * np.asarray(y, dtype=float),
        f2=lambda y: 0.0 * np.asarray(y, dtype=float),
        b=lambda y: 0.5 * np.asarray(y, dtype=float),
        b1=lambda y: 0.5 + 0.0 * np.asarray(y, dtype=float),
        sigma=lambda y: np.asarray(y, dtype=float),
        sigma1=lambda y: 1.0 + 0.0 * np.asarray(y, dtype=float),
        sigma2=lambda y: 0.0 * np.asarray(y, dtype=float),
        F=lambda y: 0.25 * np.log(np.asarray(y, dtype=float)),
        flow_drift=lambda y, t: y,
        flow_vol=vol_flow_from_zeta(np.log, np.exp),
    )
