"""Elastica Hamiltonian with a pointwise curvature-prior shift.

The model measures a lifted curve (x(t), y(t), theta(t)) by

    ||x'|| + beta^2 (theta' - omega ||x'||)^2 / ||x'||

subject to the alignment constraint x' = (cos theta, sin theta) ||x'||, where
``omega`` is a local reference curvature (zero recovers the classical bending
penalty).  The associated Hamiltonian has a closed form

    h(xhat) = (1/8) (a + sqrt(a^2 + b^2))^2,
    a = <xhat_spatial, n(theta)> + omega * xhat_theta,    b = xhat_theta / beta,

and an equivalent integral form over control directions

    q(phi) = (n(theta) cos phi,  omega cos phi + sin(phi)/beta),

whose quadrature discretization drives the finite-difference scheme.  The
prior model is a linear reparametrization of the classical one: shifting the
covector by ``omega * xhat_theta * n(theta)`` in the spatial slots maps one
Hamiltonian onto the other exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

ALIGNMENT_TOL = 1e-9


@dataclass(frozen=True)
class ModelParams:
    """Bending weight and local curvature prior value.

    beta > 0 sets the relative price of turning; omega is the reference
    curvature at the current point (0 for the classical model).
    """

    beta: float
    omega: float = 0.0

    def __post_init__(self):
        if not (self.beta > 0.0) or not math.isfinite(self.beta):
            raise ValueError(f"beta must be positive, got {self.beta}")
        if not math.isfinite(self.omega):
            raise ValueError(f"omega must be finite, got {self.omega}")


@dataclass(frozen=True)
class Covector:
    """Dual vector (per-pixel, per-pixel, per-radian components)."""

    hx: float
    hy: float
    htheta: float

    def as_array(self) -> np.ndarray:
        return np.array([self.hx, self.hy, self.htheta])


@dataclass(frozen=True)
class ControlSample:
    """One quadrature control direction and its positive weight."""

    direction: np.ndarray
    weight: float


def _as_cov(xhat) -> np.ndarray:
    if isinstance(xhat, Covector):
        return xhat.as_array()
    a = np.asarray(xhat, dtype=np.float64).reshape(-1)
    if a.size != 3:
        raise ValueError(f"covector must have 3 components, got {a.size}")
    return a


def heading(theta: float, a: float = 0.0) -> np.ndarray:
    """The lifted direction (cos theta, sin theta, a)."""
    return np.array([math.cos(theta), math.sin(theta), a])


def fejer_nodes_weights(L: int) -> tuple[np.ndarray, np.ndarray]:
    """Quadrature angles phi_l and weights mu_l for the integral Hamiltonian.

    Nodes are the midpoints phi_l = (2l-1-L)*pi/(2L) of [-pi/2, pi/2].  Under
    the substitution s = sin(phi) these are the classical Fejer (first rule)
    Chebyshev nodes on [-1, 1], so the weights below integrate the cos(phi)
    density exactly; the 3/8 front factor of the integral form is folded in.
    """
    if L < 1:
        raise ValueError(f"L must be >= 1, got {L}")
    l = np.arange(1, L + 1)
    phis = (2 * l - 1 - L) * math.pi / (2 * L)
    th = (2 * l - 1) * math.pi / (2 * L)
    m = np.arange(1, L // 2 + 1)
    if m.size:
        corr = 2.0 * np.cos(2.0 * np.outer(th, m)) @ (1.0 / (4.0 * m**2 - 1.0))
    else:
        corr = np.zeros(L)
    w = (2.0 / L) * (1.0 - corr)
    return phis, 0.375 * w


def control_direction(params: ModelParams, theta: float, phi: float) -> np.ndarray:
    """Control vector q(phi) of the integral form."""
    c, s = math.cos(phi), math.sin(phi)
    return np.array(
        [math.cos(theta) * c, math.sin(theta) * c, params.omega * c + s / params.beta]
    )


def control_samples(params: ModelParams, theta: float, L: int) -> list[ControlSample]:
    """The L quadrature control directions with their weights."""
    phis, mus = fejer_nodes_weights(L)
    return [
        ControlSample(control_direction(params, theta, p), float(m))
        for p, m in zip(phis, mus)
    ]


def metric_value(params: ModelParams, theta: float, xdot) -> float:
    """Length measure of a lifted velocity; +inf off the admissible cone.

    Admissible velocities have their spatial part aligned with the heading
    n(theta) (within a relative tolerance, since exact alignment is
    measure-zero in floats).  The zero velocity costs 0 by convention.
    """
    v = np.asarray(xdot, dtype=np.float64).reshape(3)
    speed = math.hypot(v[0], v[1])
    if speed == 0.0:
        return 0.0 if v[2] == 0.0 else math.inf
    if v[0] * math.cos(theta) + v[1] * math.sin(theta) < (1.0 - ALIGNMENT_TOL) * speed:
        return math.inf
    dev = v[2] - params.omega * speed
    return speed + (params.beta * dev) ** 2 / speed


def _support_term(a: float, b: float) -> float:
    """a + sqrt(a^2 + b^2), evaluated without cancellation for a < 0."""
    r = math.hypot(a, b)
    if a >= 0.0:
        return a + r
    if r == 0.0:
        return 0.0
    return b * b / (r - a)


def hamiltonian_closed(params: ModelParams, theta: float, xhat) -> float:
    """Closed-form Hamiltonian value (nonnegative, 2-homogeneous)."""
    h = _as_cov(xhat)
    a = h[0] * math.cos(theta) + h[1] * math.sin(theta) + params.omega * h[2]
    b = h[2] / params.beta
    return 0.125 * _support_term(a, b) ** 2


def hamiltonian_quadrature(params: ModelParams, theta: float, xhat, L: int) -> float:
    """Quadrature approximation of the Hamiltonian; O(1/L^2) consistent."""
    h = _as_cov(xhat)
    phis, mus = fejer_nodes_weights(L)
    c, s = np.cos(phis), np.sin(phis)
    dots = (
        (h[0] * math.cos(theta) + h[1] * math.sin(theta)) * c
        + h[2] * (params.omega * c + s / params.beta)
    )
    return float(np.sum(mus * np.maximum(dots, 0.0) ** 2))


def transform_covector(params: ModelParams, theta: float, xhat) -> Covector:
    """Map a prior-model covector to the classical-model covector.

    The prior metric is the classical one composed with the linear map
    (xdot, thetadot) -> (xdot, thetadot - omega <n(theta), xdot>); its
    transposed inverse acts on covectors as
    (hx, hy, ht) -> (hx + omega*ht*cos(theta), hy + omega*ht*sin(theta), ht),
    so the prior Hamiltonian equals the classical one at the image covector.
    """
    h = _as_cov(xhat)
    shift = params.omega * h[2]
    return Covector(
        float(h[0] + shift * math.cos(theta)),
        float(h[1] + shift * math.sin(theta)),
        float(h[2]),
    )


def hamiltonian_gradient(params: ModelParams, theta: float, xhat) -> np.ndarray:
    """Analytic gradient of the closed-form Hamiltonian w.r.t. the covector.

    Away from the non-smooth locus a + sqrt(a^2+b^2) = 0 this is the exact
    derivative; on it the Hamiltonian vanishes identically and the zero
    vector (the minimal-norm subgradient) is returned.
    """
    h = _as_cov(xhat)
    ct, st = math.cos(theta), math.sin(theta)
    a = h[0] * ct + h[1] * st + params.omega * h[2]
    b = h[2] / params.beta
    r = math.hypot(a, b)
    if r == 0.0:
        return np.zeros(3)
    f = _support_term(a, b)
    if f <= 0.0:
        return np.zeros(3)
    da = 1.0 + a / r
    db = b / r
    pref = 0.25 * f
    return pref * np.array(
        [da * ct, da * st, da * params.omega + db / params.beta]
    )
