"""Reproducible random streams and the exact joint laws of the schemes.

Streams are counter-based (Philox) and keyed by hashing a (seed, path)
tuple, so any worker can recreate its stream from the seed and a list
of identifiers without coordination. Normals are produced by inversion
of the standard normal CDF, so a fixed draw index always maps to the
same variate.

The joint laws implemented here:

* (dW, iW) where iW = int_{t_k}^{t_{k+1}} (W_s - W_{t_k}) ds, with
  covariance [[delta, delta^2/2], [delta^2/2, delta^3/3]];
* the exact OU transition (Y_{k+1} - e^{-kappa*delta} Y_k, iW) with the
  closed-form (M, Gamma) moments;
* the full triple (dW, iW, dY_stoch) used to keep fine and coarse grids
  of a coupling consistent, where dY_stoch is the stochastic part of the
  exact OU increment.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtri

from .errors import InvalidParameterError, NumericalError
from .models import OUParams

# Smallest uniform fed to the inverse CDF; Generator.random() lies in
# [0, 1) so only the exact-zero draw needs the clip.
_U_FLOOR = 2.0**-64


class RngStream:
    """Counter-based random stream identified by (seed, *path).

    The Philox key is a hash of the seed and the path of identifiers,
    so distinct paths give independent streams and ``child`` streams
    can be handed to workers in any order.
    """

    def __init__(self, seed: int, *path):
        self.seed = int(seed)
        self.path = tuple(path)
        material = repr((self.seed,) + self.path).encode()
        digest = hashlib.blake2b(material, digest_size=16).digest()
        key = int.from_bytes(digest, "little")
        self._gen = np.random.Generator(np.random.Philox(key=key))

    def child(self, *ids) -> "RngStream":
        """Derived independent stream with the given extra identifiers."""
        return RngStream(self.seed, *self.path, *ids)

    def uniform(self, size=None):
        """Uniform draws on [0, 1)."""
        return self._gen.random(size)

    def uniform_open(self, size=None):
        """Uniform draws on (0, 1], valid inputs for log and bridge draws."""
        return 1.0 - self._gen.random(size)

    def normal(self, size=None):
        """Standard normals by inversion of the normal CDF."""
        u = self._gen.random(size)
        return ndtri(np.maximum(u, _U_FLOOR))


def gaussian(rng: RngStream) -> float:
    """Single standard normal variate from the stream."""
    return float(rng.normal())


@dataclass(frozen=True)
class JointIncrement:
    """One correlated draw of the Brownian increment and its time integral."""

    dW: float
    iW: float


@dataclass(frozen=True)
class OUJointDraw:
    """Exact OU transition value drawn jointly with the W time integral."""

    y_next: float
    iW: float


def joint_chol(delta: float) -> np.ndarray:
    """Lower Cholesky factor of Cov(dW, iW)."""
    if not delta > 0:
        raise InvalidParameterError(f"delta must be positive, got {delta}")
    root = math.sqrt(delta)
    return np.array([
        [root, 0.0],
        [delta * root / 2.0, delta * root / (2.0 * math.sqrt(3.0))],
    ])


def joint_from_normals(delta: float, g1, g2):
    """Map independent standard normals to a (dW, iW) pair."""
    chol = joint_chol(delta)
    return chol[0, 0] * np.asarray(g1), chol[1, 0] * np.asarray(g1) + chol[1, 1] * np.asarray(g2)


def joint_w_integral(delta: float, rng: RngStream, size=None):
    """Draw (dW, iW); scalar sizes yield a JointIncrement."""
    g1 = rng.normal(size)
    g2 = rng.normal(size)
    dw, iw = joint_from_normals(delta, g1, g2)
    if size is None:
        return JointIncrement(float(dw), float(iw))
    return dw, iw


def ou_transition_moments(ou: OUParams, delta: float):
    """Closed-form moments of the exact OU transition over one step.

    Returns (decay, mean_shift, g11, g12, g22) where the transition is
    y' = mean_shift + decay*y + stochastic part of variance g11, and
    (g12, g22) complete the covariance with iW. For kappa*delta below
    1e-4 the cancellation-prone g12 term switches to its Taylor
    expansion nu*(delta^2/2 - kappa*delta^3/3 + kappa^2*delta^4/8).
    """
    if not delta > 0:
        raise InvalidParameterError(f"delta must be positive, got {delta}")
    kd = ou.kappa * delta
    decay = math.exp(-kd)
    mean_shift = ou.theta * (1.0 - decay)
    g11 = ou.nu**2 * (-math.expm1(-2.0 * kd)) / (2.0 * ou.kappa)
    if kd < 1e-4:
        g12 = ou.nu * (delta**2 / 2.0 - ou.kappa * delta**3 / 3.0 + ou.kappa**2 * delta**4 / 8.0)
    else:
        g12 = ou.nu / ou.kappa**2 * (1.0 - decay * (1.0 + kd))
    g22 = delta**3 / 3.0
    return decay, mean_shift, g11, g12, g22


def ou_joint_chol(ou: OUParams, delta: float) -> np.ndarray:
    """Lower Cholesky factor of Gamma = Cov(dY_stoch, iW).

    Degenerate-to-rounding covariances are regularized by clipping the
    correlation into [-1, 1].
    """
    _, _, g11, g12, g22 = ou_transition_moments(ou, delta)
    l11 = math.sqrt(g11)
    corr = g12 / math.sqrt(g11 * g22)
    corr = min(1.0, max(-1.0, corr))
    l21 = corr * math.sqrt(g22)
    l22 = math.sqrt(max(g22 - l21**2, 0.0))
    return np.array([[l11, 0.0], [l21, l22]])


def ou_joint_from_normals(ou: OUParams, y, delta: float, g1, g2):
    """Map independent standard normals to (y_next, iW)."""
    decay, mean_shift, _, _, _ = ou_transition_moments(ou, delta)
    chol = ou_joint_chol(ou, delta)
    y_next = mean_shift + decay * np.asarray(y) + chol[0, 0] * np.asarray(g1)
    iw = chol[1, 0] * np.asarray(g1) + chol[1, 1] * np.asarray(g2)
    return y_next, iw


def ou_exact_joint(ou: OUParams, y: float, delta: float, rng: RngStream, size=None):
    """Draw the exact OU transition jointly with the W time integral."""
    g1 = rng.normal(size)
    g2 = rng.normal(size)
    y_next, iw = ou_joint_from_normals(ou, y, delta, g1, g2)
    if size is None:
        return OUJointDraw(float(y_next), float(iw))
    return y_next, iw


def ou_triple_cov(ou: OUParams, delta: float) -> np.ndarray:
    """Covariance of (dW, iW, dY_stoch) over one step.

    dY_stoch = nu * int e^{-kappa*(delta-s)} dW_s is the stochastic part
    of the exact OU increment; all three are linear functionals of W on
    the step, hence jointly Gaussian.
    """
    _, _, g11, g12, g22 = ou_transition_moments(ou, delta)
    kd = ou.kappa * delta
    if kd < 1e-4:
        # nu*(1 - e^{-kd})/kappa without cancellation
        c_w_dy = ou.nu * delta * (1.0 - kd / 2.0 + kd**2 / 6.0 - kd**3 / 24.0)
    else:
        c_w_dy = ou.nu * (-math.expm1(-kd)) / ou.kappa
    return np.array([
        [delta, delta**2 / 2.0, c_w_dy],
        [delta**2 / 2.0, g22, g12],
        [c_w_dy, g12, g11],
    ])


def ou_triple_chol(ou: OUParams, delta: float) -> np.ndarray:
    """Lower Cholesky factor of the (dW, iW, dY_stoch) covariance.

    The matrix is near-singular for tiny kappa*delta (dY_stoch tends to
    nu*dW); a diagonal jitter retry keeps the factorization stable.
    """
    cov = ou_triple_cov(ou, delta)
    try:
        return np.linalg.cholesky(cov)
    except np.linalg.LinAlgError:
        jitter = 1e-12 * np.diag(np.diag(cov))
        try:
            return np.linalg.cholesky(cov + jitter)
        except np.linalg.LinAlgError as exc:
            raise NumericalError(
                f"OU step covariance not positive definite at delta={delta}"
            ) from exc
