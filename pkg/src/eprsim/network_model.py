"""Temporal-multiplexing network: two squeezed paths interfered on a 50:50 coupler.

Path 1 is the direct line, path 2 the delay line. Each path carries a
single-mode squeezed state (x squeezed), passes a loss channel, picks up a
phase offset and is then combined with a pi/2 phase on path 2:

    xA = (x1 - p2)/sqrt2   pA = (p1 + x2)/sqrt2
    xB = (x1 + p2)/sqrt2   pB = (p1 - x2)/sqrt2

All variances are in V0 units.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .gaussian_core import ContractError, CovarianceMatrix4, QuadratureVariancePair

SQRT_HALF = math.sqrt(0.5)

# Linear map (x1, p1, x2, p2) -> (xA, pA, xB, pB).
INTERFERE = SQRT_HALF * np.array(
    [
        [1.0, 0.0, 0.0, -1.0],
        [0.0, 1.0, 1.0, 0.0],
        [1.0, 0.0, 0.0, 1.0],
        [0.0, 1.0, -1.0, 0.0],
    ]
)


@dataclass(frozen=True)
class PathState:
    """Single-mode squeezed state in one path before the coupler.

    ``v_x``/``v_p`` are the variances before the path loss ``eta``.
    """

    v_x: float
    v_p: float
    eta: float = 1.0
    phase_offset: float = 0.0
    phase_jitter_sigma: float = 0.0

    def __post_init__(self):
        if not (self.v_x > 0 and self.v_p > 0):
            raise ContractError("path variances must be positive")
        if not 0.0 <= self.eta <= 1.0:
            raise ContractError("path efficiency must lie in [0, 1]")
        if self.phase_jitter_sigma < 0:
            raise ContractError("phase jitter must be non-negative")

    @classmethod
    def from_squeezing(cls, r: float, eta: float = 1.0, **kw) -> "PathState":
        return cls(math.exp(-2 * r), math.exp(2 * r), eta, **kw)

    @property
    def v_x_eff(self) -> float:
        return self.eta * self.v_x + 1.0 - self.eta

    @property
    def v_p_eff(self) -> float:
        return self.eta * self.v_p + 1.0 - self.eta

    @property
    def pair(self) -> QuadratureVariancePair:
        return QuadratureVariancePair(self.v_x_eff, self.v_p_eff)

    def ideal(self) -> "PathState":
        """Same state after loss, without offsets or jitter."""
        return PathState(self.v_x_eff, self.v_p_eff)

    def with_phase(self, offset: float, sigma: float = 0.0) -> "PathState":
        return replace(self, phase_offset=offset, phase_jitter_sigma=sigma)


@dataclass(frozen=True)
class ChannelParams:
    """Per-path loss and phase behaviour, independent of the input state."""

    eta: float = 1.0
    phase_offset: float = 0.0
    phase_jitter_sigma: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.eta <= 1.0:
            raise ContractError("path efficiency must lie in [0, 1]")
        if self.phase_jitter_sigma < 0:
            raise ContractError("phase jitter must be non-negative")

    def state(self, v_x: float, v_p: float) -> PathState:
        return PathState(v_x, v_p, self.eta, self.phase_offset, self.phase_jitter_sigma)


@dataclass(frozen=True)
class MeasurementAngles:
    theta_A: float
    theta_B: float

    @classmethod
    def set1(cls, theta: float) -> "MeasurementAngles":
        return cls(theta, -theta)

    @classmethod
    def set2(cls, theta: float) -> "MeasurementAngles":
        return cls(theta, theta - math.pi / 2)

    @classmethod
    def for_set(cls, which: int, theta: float) -> "MeasurementAngles":
        if which == 1:
            return cls.set1(theta)
        if which == 2:
            return cls.set2(theta)
        raise ContractError(f"unknown tomography set {which}")


def interfere(quads):
    """Map ``(x1, p1, x2, p2)`` to ``(xA, pA, xB, pB)``.

    Works on scalars or on arrays (leading axis of length 4).
    """
    x1, p1, x2, p2 = quads
    return (
        (x1 - p2) * SQRT_HALF,
        (p1 + x2) * SQRT_HALF,
        (x1 + p2) * SQRT_HALF,
        (p1 - x2) * SQRT_HALF,
    )


def measured_quadrature(quads, angles: MeasurementAngles):
    """Homodyne outputs ``q = x cos(theta) + p sin(theta)`` at both stations."""
    xa, pa, xb, pb = quads
    return (
        xa * np.cos(angles.theta_A) + pa * np.sin(angles.theta_A),
        xb * np.cos(angles.theta_B) + pb * np.sin(angles.theta_B),
    )


def analytic_cov(path1: PathState, path2: PathState, angles: MeasurementAngles) -> float:
    """Covariance of ``q_A`` and ``q_B`` for ideally aligned paths (after loss)."""
    ca, sa = math.cos(angles.theta_A), math.sin(angles.theta_A)
    cb, sb = math.cos(angles.theta_B), math.sin(angles.theta_B)
    return 0.5 * (path1.v_x_eff - path2.v_p_eff) * ca * cb - 0.5 * (
        path2.v_x_eff - path1.v_p_eff
    ) * sa * sb


def variance_set1(path1: PathState, path2: PathState, theta: float):
    """``(Var(qA+qB), Var(qA-qB))`` with ``theta_B = -theta_A = -theta``."""
    c2, s2 = math.cos(theta) ** 2, math.sin(theta) ** 2
    total = 2.0 * (path1.v_x_eff * c2 + path2.v_x_eff * s2)
    diff = 2.0 * (path2.v_p_eff * c2 + path1.v_p_eff * s2)
    return total, diff


def variance_set2(path1: PathState, path2: PathState, theta: float):
    """``(Var(qA+qB), Var(qA-qB))`` with ``theta_B = theta - pi/2``.

    At ``theta = 0, pi/2`` both equal half the sum of all four variances;
    at ``theta = pi/4`` they reach ``Vx1 + Vx2`` and ``Vp1 + Vp2``.
    """
    sx = path1.v_x_eff + path2.v_x_eff
    sp = path1.v_p_eff + path2.v_p_eff
    s = math.sin(2.0 * theta)
    total = 0.5 * ((1 + s) * sx + (1 - s) * sp)
    diff = 0.5 * ((1 - s) * sx + (1 + s) * sp)
    return total, diff


def path_block(path: PathState, average_jitter: bool = False) -> np.ndarray:
    """2x2 covariance of one path after loss and phase rotation.

    With ``average_jitter`` the rotation angle is Gaussian around the offset
    and the block is the ensemble average, which shrinks the rotated
    anisotropy by ``exp(-2 sigma^2)``.
    """
    vx, vp = path.v_x_eff, path.v_p_eff
    mean, half = 0.5 * (vx + vp), 0.5 * (vx - vp)
    vis = math.exp(-2.0 * path.phase_jitter_sigma**2) if average_jitter else 1.0
    c2, s2 = math.cos(2 * path.phase_offset), math.sin(2 * path.phase_offset)
    return np.array(
        [[mean + half * vis * c2, half * vis * s2], [half * vis * s2, mean - half * vis * c2]]
    )


def input_cov(path1: PathState, path2: PathState, average_jitter: bool = False) -> np.ndarray:
    """Covariance of ``(x1, p1, x2, p2)`` entering the coupler."""
    m = np.zeros((4, 4))
    m[:2, :2] = path_block(path1, average_jitter)
    m[2:, 2:] = path_block(path2, average_jitter)
    return m


def build_two_mode_cov(
    path1: PathState, path2: PathState, average_jitter: bool = False
) -> CovarianceMatrix4:
    """Two-mode covariance of ``(xA, pA, xB, pB)``.

    Phase offsets are fixed rotations; jitter is ignored unless
    ``average_jitter`` is set.
    """
    m = INTERFERE @ input_cov(path1, path2, average_jitter) @ INTERFERE.T
    return CovarianceMatrix4(0.5 * (m + m.T))


def c_xapb(path1: PathState, path2: PathState) -> float:
    """Closed form of ``<xA pB>`` from fixed phase offsets.

    ``1/2 sum_i eta_i (v_x,i - v_p,i) cos(sigma_i) sin(sigma_i)``; for pure
    squeezed inputs ``v_x - v_p = exp(-2r) - exp(2r)``.
    """
    total = 0.0
    for p in (path1, path2):
        total += p.eta * (p.v_x - p.v_p) * math.cos(p.phase_offset) * math.sin(p.phase_offset)
    return 0.5 * total


def intra_inter_cov_equality_check(path1: PathState, path2: PathState, atol: float = 1e-12) -> bool:
    """Whether ``<xA pA> = <xB pB> = <xA pB> = <xB pA>`` on the built matrix.

    Only the pairs ``<xA pA> = <xB pB>`` and ``<xA pB> = <xB pA>`` hold in
    general; the four-way chain needs zero net offset rotation.
    """
    m = build_two_mode_cov(path1, path2).entries
    vals = np.array([m[0, 1], m[2, 3], m[0, 3], m[2, 1]])
    return bool(np.ptp(vals) <= atol)


def weight_vector(angles: MeasurementAngles, sign: int = 1) -> np.ndarray:
    """Coefficients of ``qA + sign*qB`` on ``(xA, pA, xB, pB)``."""
    return np.array(
        [
            math.cos(angles.theta_A),
            math.sin(angles.theta_A),
            sign * math.cos(angles.theta_B),
            sign * math.sin(angles.theta_B),
        ]
    )


def combination_variance(cov, angles: MeasurementAngles, sign: int = 1) -> float:
    """``Var(qA + sign*qB)`` for a full two-mode covariance."""
    m = cov.entries if isinstance(cov, CovarianceMatrix4) else np.asarray(cov)
    w = weight_vector(angles, sign)
    return float(w @ m @ w)


def station_moments(cov, angles: MeasurementAngles):
    """``(Var qA, Var qB, Cov(qA, qB))`` for a full two-mode covariance."""
    m = cov.entries if isinstance(cov, CovarianceMatrix4) else np.asarray(cov)
    wa = np.array([math.cos(angles.theta_A), math.sin(angles.theta_A), 0.0, 0.0])
    wb = np.array([0.0, 0.0, math.cos(angles.theta_B), math.sin(angles.theta_B)])
    return float(wa @ m @ wa), float(wb @ m @ wb), float(wa @ m @ wb)


def predict_set_variances(
    path1: PathState, path2: PathState, which: int, thetas, average_jitter: bool = True
) -> np.ndarray:
    """Predicted ``(sum, diff)`` rows for a tomography set, including offsets and jitter."""
    cov = build_two_mode_cov(path1, path2, average_jitter)
    out = []
    for th in np.atleast_1d(thetas):
        ang = MeasurementAngles.for_set(which, float(th))
        out.append((combination_variance(cov, ang, 1), combination_variance(cov, ang, -1)))
    return np.array(out)


__all__ = [
    "INTERFERE",
    "PathState",
    "ChannelParams",
    "MeasurementAngles",
    "interfere",
    "measured_quadrature",
    "analytic_cov",
    "variance_set1",
    "variance_set2",
    "path_block",
    "input_cov",
    "build_two_mode_cov",
    "c_xapb",
    "intra_inter_cov_equality_check",
    "weight_vector",
    "combination_variance",
    "station_moments",
    "predict_set_variances",
]
