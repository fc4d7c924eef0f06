"""Below-threshold OPO squeezing spectra with seed-beam technical noise.

Rates are angular (rad/s). Spectra returned by :func:`output_spectrum` are
normalized to the vacuum (shot-noise) level, i.e. in units of V0. The seed
noise coefficients ``K_q`` keep their natural absolute scale
(variance * rad^2/s^2 with vacuum variance 1/2), so that
``S_q = 1/2 -/+ 2 eps gamma eta / D_q + K_q / D_q`` holds before the
normalization to V0.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Iterable, Optional

import numpy as np
from scipy import constants

from .gaussian_core import V0, ContractError, QuadratureVariancePair

TWO_PI = 2.0 * math.pi


class AboveThresholdError(ContractError):
    pass


@dataclass(frozen=True)
class CavityGeometry:
    coupling_transmission: float
    intracavity_loss: float
    round_trip_length: float  # meters

    def __post_init__(self):
        if not 0.0 <= self.coupling_transmission < 1.0:
            raise ContractError("coupling transmission must lie in [0, 1)")
        if not 0.0 <= self.intracavity_loss < 1.0:
            raise ContractError("intracavity loss must lie in [0, 1)")
        if self.round_trip_length <= 0:
            raise ContractError("round-trip length must be positive")

    @property
    def round_trip_time(self) -> float:
        return self.round_trip_length / constants.c


def decay_rate(geom: CavityGeometry) -> float:
    """Total field decay rate from mirror transmission and intracavity loss.

    ``gamma = [(1 - sqrt(1 - T_c)) + (1 - sqrt(1 - L))] / tau`` with ``tau``
    the round-trip time.
    """
    coupling = 1.0 - math.sqrt(1.0 - geom.coupling_transmission)
    loss = 1.0 - math.sqrt(1.0 - geom.intracavity_loss)
    return (coupling + loss) / geom.round_trip_time


def coupling_decay_rates(geom: CavityGeometry) -> tuple:
    """Split :func:`decay_rate` into ``(gamma_c, gamma_l)``."""
    tau = geom.round_trip_time
    return (
        (1.0 - math.sqrt(1.0 - geom.coupling_transmission)) / tau,
        (1.0 - math.sqrt(1.0 - geom.intracavity_loss)) / tau,
    )


def pump_rate(pump_power: float, threshold_power: float, gamma: float) -> float:
    """Pump rate ``eps = gamma * sqrt(P / P_th)`` below threshold."""
    if pump_power < 0:
        raise ContractError("pump power must be non-negative")
    if pump_power >= threshold_power:
        raise AboveThresholdError(
            f"pump power {pump_power} W is not below threshold {threshold_power} W"
        )
    return gamma * math.sqrt(pump_power / threshold_power)


def efficiency_budget(stages: Iterable[float]) -> float:
    """Overall efficiency as the product of stage efficiencies."""
    eta = 1.0
    for s in stages:
        if not 0.0 <= s <= 1.0:
            raise ContractError(f"stage efficiency {s} outside [0, 1]")
        eta *= s
    return eta


@dataclass(frozen=True)
class OpoParams:
    """OPO rates (rad/s), overall detection efficiency and squeezed quadrature.

    ``gamma_s`` (seed-mirror leakage) is kept for bookkeeping only; its effect
    is folded into the seed-noise coefficients.
    """

    gamma_c: float
    gamma_l: float
    epsilon: float
    eta: float
    gamma_s: float = 0.0
    squeezed_quadrature: str = "x"

    def __post_init__(self):
        if min(self.gamma_c, self.gamma_l, self.gamma_s, self.epsilon) < 0:
            raise ContractError("rates must be non-negative")
        if not 0.0 <= self.eta <= 1.0:
            raise ContractError("efficiency must lie in [0, 1]")
        if self.squeezed_quadrature not in ("x", "p"):
            raise ContractError("squeezed quadrature must be 'x' or 'p'")
        if self.epsilon >= self.gamma and self.gamma > 0:
            raise AboveThresholdError("pump rate must stay below the decay rate")

    @property
    def gamma(self) -> float:
        return self.gamma_c + self.gamma_l + self.gamma_s

    @property
    def antisqueezed_quadrature(self) -> str:
        return "p" if self.squeezed_quadrature == "x" else "x"

    @classmethod
    def from_rates(cls, gamma: float, epsilon: float, eta: float, **kw) -> "OpoParams":
        """Build from a total decay rate, attributing all of it to coupling."""
        return cls(gamma_c=gamma, gamma_l=0.0, epsilon=epsilon, eta=eta, **kw)

    @classmethod
    def from_geometry(
        cls,
        geom: CavityGeometry,
        pump_power: float,
        threshold_power: float,
        eta: float,
        **kw,
    ) -> "OpoParams":
        gamma_c, gamma_l = coupling_decay_rates(geom)
        eps = pump_rate(pump_power, threshold_power, gamma_c + gamma_l)
        return cls(gamma_c=gamma_c, gamma_l=gamma_l, epsilon=eps, eta=eta, **kw)

    def with_pump(self, epsilon: float) -> "OpoParams":
        return OpoParams(self.gamma_c, self.gamma_l, epsilon, self.eta,
                         self.gamma_s, self.squeezed_quadrature)


@dataclass(frozen=True)
class SeedNoiseModel:
    """Seed-noise coefficients ``K_x(omega)``, ``K_p(omega)`` on a grid.

    Values between grid points are linearly interpolated; outside the grid
    the end values are held.
    """

    omega: np.ndarray
    k_x: np.ndarray
    k_p: np.ndarray
    n_clipped: int = 0

    def __post_init__(self):
        w = np.atleast_1d(np.asarray(self.omega, dtype=float))
        kx = np.broadcast_to(np.asarray(self.k_x, dtype=float), w.shape).copy()
        kp = np.broadcast_to(np.asarray(self.k_p, dtype=float), w.shape).copy()
        if w.size == 0:
            raise ContractError("seed model needs a non-empty grid")
        order = np.argsort(w)
        for name, arr in (("omega", w[order]), ("k_x", kx[order]), ("k_p", kp[order])):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @classmethod
    def zero(cls) -> "SeedNoiseModel":
        return cls(np.array([0.0]), np.array([0.0]), np.array([0.0]))

    @classmethod
    def from_excess(cls, omega, excess_x, gamma: float, excess_p=None) -> "SeedNoiseModel":
        """Seed model from unpumped excess noise above shot noise (V0 units)."""
        omega = np.asarray(omega, dtype=float)
        excess_p = excess_x if excess_p is None else excess_p
        scale = (gamma**2 + omega**2) * V0
        return cls(omega, scale * np.asarray(excess_x), scale * np.asarray(excess_p))

    def k(self, omega, quadrature: str):
        table = self.k_x if quadrature == "x" else self.k_p
        return np.interp(omega, self.omega, table)

    @property
    def is_zero(self) -> bool:
        return not (np.any(self.k_x) or np.any(self.k_p))


def parametric_excess(
    freq_hz,
    one_over_f: float = 0.0,
    f_min_hz: float = 0.2e6,
    bump_amplitude: float = 0.0,
    bump_center_hz: float = 5.5e6,
    bump_width_hz: float = 0.7e6,
):
    """Technical excess noise above shot noise (V0 units) versus frequency.

    ``one_over_f`` is the 1/f amplitude at 1 MHz, flattened below ``f_min_hz``;
    the optional Lorentzian bump models switch amplitude noise.
    """
    f = np.abs(np.asarray(freq_hz, dtype=float))
    out = one_over_f * 1e6 / np.maximum(f, f_min_hz)
    if bump_amplitude:
        out = out + bump_amplitude / (1.0 + ((f - bump_center_hz) / bump_width_hz) ** 2)
    return out


def _denominator(params: OpoParams, omega, squeezed: bool):
    detuned = params.gamma + params.epsilon if squeezed else params.gamma - params.epsilon
    return detuned**2 + np.asarray(omega, dtype=float) ** 2


def output_spectrum(params: OpoParams, seed: Optional[SeedNoiseModel], omega, quadrature: str):
    """Quadrature noise spectrum of the OPO output, normalized to vacuum.

    Evaluates ``1/2 -/+ 2 eps gamma eta / ((gamma +/- eps)^2 + w^2)
    + K_q / ((gamma +/- eps)^2 + w^2)`` and divides by V0.
    """
    if quadrature not in ("x", "p"):
        raise ContractError("quadrature must be 'x' or 'p'")
    squeezed = quadrature == params.squeezed_quadrature
    d = _denominator(params, omega, squeezed)
    gain = 2.0 * params.epsilon * params.gamma * params.eta / d
    s = V0 - gain if squeezed else V0 + gain
    if seed is not None:
        s = s + seed.k(np.abs(omega), quadrature) / d
    return s / V0


def spectrum_pair(params: OpoParams, seed: Optional[SeedNoiseModel], omega):
    """(squeezed, anti-squeezed) spectra at ``omega``."""
    return (
        output_spectrum(params, seed, omega, params.squeezed_quadrature),
        output_spectrum(params, seed, omega, params.antisqueezed_quadrature),
    )


def kq_from_seed_spectrum(omega, s0_x, gamma: float, s0_p=None) -> SeedNoiseModel:
    """Seed-noise coefficients from unpumped spectra (shot-noise normalized).

    ``K_q = (gamma^2 + w^2) (S0_q - 1/2)`` with ``S0_q`` in absolute units.
    Values where the measured spectrum dips below shot noise are clipped to
    zero and counted.
    """
    omega = np.atleast_1d(np.asarray(omega, dtype=float))
    if omega.size == 0:
        raise ContractError("empty frequency grid")
    s0_x = np.broadcast_to(np.asarray(s0_x, dtype=float), omega.shape)
    s0_p = s0_x if s0_p is None else np.broadcast_to(np.asarray(s0_p, dtype=float), omega.shape)
    if np.any(s0_x <= 0) or np.any(s0_p <= 0):
        raise ContractError("unpumped spectra must be positive")
    scale = gamma**2 + omega**2
    kx = scale * (s0_x * V0 - V0)
    kp = scale * (s0_p * V0 - V0)
    n_neg = int(np.sum(kx < 0) + np.sum(kp < 0))
    if n_neg:
        warnings.warn(f"{n_neg} seed-noise coefficients below shot noise clipped to zero",
                      RuntimeWarning, stacklevel=2)
    return SeedNoiseModel(omega, np.clip(kx, 0, None), np.clip(kp, 0, None), n_clipped=n_neg)


def _trig_exact(angle: float):
    """cos/sin with exact zeros at multiples of pi/2."""
    quarter = angle / (math.pi / 2)
    k = round(quarter)
    if abs(quarter - k) < 1e-12:
        return [(1.0, 0.0), (0.0, 1.0), (-1.0, 0.0), (0.0, -1.0)][k % 4]
    return math.cos(angle), math.sin(angle)


def cavity_quadrature_transfer(phi: float, omega: float, params: OpoParams) -> np.ndarray:
    """Transfer matrix from noise-operator quadratures to cavity quadratures.

    Returns ``M`` with ``(x_a, p_a) = M @ (x_Gamma, p_Gamma)`` in the
    frequency domain, for pump phase ``phi``.
    """
    eps, gamma = abs(params.epsilon), params.gamma
    c, s = _trig_exact(phi)
    d = eps**2 - (1j * omega - gamma) ** 2
    return np.array(
        [
            [(1j * omega - gamma - eps * c) / d, -eps * s / d],
            [-eps * s / d, (1j * omega - gamma + eps * c) / d],
        ],
        dtype=complex,
    )


def phase_averaged_variance(
    pair: QuadratureVariancePair, theta: float, sigma: float, mode: str = "exact"
) -> float:
    """Variance measured at LO angle ``theta`` under Gaussian phase jitter.

    ``approx`` shifts the angle by ``sigma``:
    ``v_x cos^2(theta+sigma) + v_p sin^2(theta+sigma)``, adequate for small
    ``sigma`` near ``theta = 0, pi/2``. ``exact`` is the Gaussian average
    ``v_x (1 + V cos 2theta)/2 + v_p (1 - V cos 2theta)/2`` with
    ``V = exp(-2 sigma^2)``.
    """
    if sigma < 0:
        raise ContractError("sigma must be non-negative")
    if mode == "approx":
        c2 = math.cos(theta + sigma) ** 2
        return pair.v_x * c2 + pair.v_p * (1.0 - c2)
    if mode == "exact":
        vis = math.exp(-2.0 * sigma**2) * math.cos(2.0 * theta)
        return 0.5 * pair.v_x * (1 + vis) + 0.5 * pair.v_p * (1 - vis)
    raise ContractError(f"unknown mode {mode!r}")


def mhz_to_omega(f_mhz):
    return TWO_PI * 1e6 * np.asarray(f_mhz, dtype=float)


def omega_to_mhz(omega):
    return np.asarray(omega, dtype=float) / (TWO_PI * 1e6)


@dataclass(frozen=True)
class NoiseProfile:
    """Parametric excess-noise description used for synthesis (V0 units)."""

    one_over_f: float = 0.0
    f_min_hz: float = 0.2e6
    bump_amplitude: float = 0.0
    bump_center_hz: float = 5.5e6
    bump_width_hz: float = 0.7e6
    extra: dict = field(default_factory=dict)

    def __call__(self, freq_hz):
        return parametric_excess(freq_hz, self.one_over_f, self.f_min_hz,
                                 self.bump_amplitude, self.bump_center_hz, self.bump_width_hz)
