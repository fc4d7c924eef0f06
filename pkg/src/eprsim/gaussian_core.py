"""Two-mode Gaussian covariance algebra.

Covariance matrices are stored in units of the vacuum variance ``V0 = 1/2``,
so the vacuum state is the identity matrix. The mode order is
``(x_A, p_A, x_B, p_B)`` throughout.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Optional, Tuple

import numpy as np
from scipy.optimize import minimize, minimize_scalar

V0 = 0.5
ORDER = ("xA", "pA", "xB", "pB")

#: Symplectic form for (x_A, p_A, x_B, p_B): [x_i, p_i] = i.
OMEGA = np.array(
    [
        [0.0, 1.0, 0.0, 0.0],
        [-1.0, 0.0, 0.0, 0.0],
        [0.0, 0.0, 0.0, 1.0],
        [0.0, 0.0, -1.0, 0.0],
    ]
)

DEFAULT_TOL = 1e-9
SYMMETRY_TOL = 1e-12


class ContractError(ValueError):
    """An input violates a documented precondition."""


def _check_symmetric(m: np.ndarray) -> None:
    if m.shape != (4, 4):
        raise ContractError(f"expected a 4x4 matrix, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise ContractError("covariance entries must be finite")
    if np.max(np.abs(m - m.T)) > SYMMETRY_TOL:
        raise ContractError("covariance matrix is not symmetric")


@dataclass(frozen=True)
class CovarianceMatrix4:
    """Quadrature covariance of two modes, in units of V0.

    ``entries[i][j]`` is ``<xi_i xi_j>`` (symmetrized) divided by V0 for
    ``xi = (x_A, p_A, x_B, p_B)``.
    """

    entries: np.ndarray

    def __post_init__(self):
        m = np.array(self.entries, dtype=float)
        _check_symmetric(m)
        if np.any(np.diag(m) <= 0):
            raise ContractError("diagonal entries must be strictly positive")
        m.setflags(write=False)
        object.__setattr__(self, "entries", m)

    @classmethod
    def vacuum(cls) -> "CovarianceMatrix4":
        return cls(np.eye(4))

    @classmethod
    def from_absolute(cls, m) -> "CovarianceMatrix4":
        return cls(np.asarray(m, dtype=float) / V0)

    def absolute(self) -> np.ndarray:
        return self.entries * V0

    def __getitem__(self, key):
        return self.entries[key]

    def to_json(self, stderr: Optional[np.ndarray] = None) -> str:
        return covariance_to_json(self.entries, stderr=stderr)


@dataclass(frozen=True)
class PartialCovariance:
    """A covariance matrix with some symmetric entries unknown.

    Unknown entries are NaN in ``entries`` and True in ``unknown``.
    The usual template has ``a = <x_A p_A>`` and ``b = <x_B p_B>`` unknown.
    """

    entries: np.ndarray
    stderr: Optional[np.ndarray] = None

    def __post_init__(self):
        m = np.array(self.entries, dtype=float)
        if m.shape != (4, 4):
            raise ContractError(f"expected a 4x4 matrix, got shape {m.shape}")
        known = ~np.isnan(m)
        if np.any(known != known.T):
            raise ContractError("unknown entries must be placed symmetrically")
        filled = np.where(known, m, 0.0)
        if np.max(np.abs(filled - filled.T)) > SYMMETRY_TOL:
            raise ContractError("covariance matrix is not symmetric")
        if np.any(np.isnan(np.diag(m))) or np.any(np.diag(m) <= 0):
            raise ContractError("diagonal entries must be known and positive")
        m.setflags(write=False)
        object.__setattr__(self, "entries", m)
        if self.stderr is not None:
            s = np.array(self.stderr, dtype=float)
            s.setflags(write=False)
            object.__setattr__(self, "stderr", s)

    @classmethod
    def ab_template(cls, m, stderr=None) -> "PartialCovariance":
        """Copy ``m`` and mark the (0,1) and (2,3) entries unknown."""
        m = np.array(m, dtype=float)
        m[0, 1] = m[1, 0] = np.nan
        m[2, 3] = m[3, 2] = np.nan
        return cls(m, stderr)

    @property
    def unknown(self) -> np.ndarray:
        return np.isnan(self.entries)

    def unknown_pairs(self) -> list:
        idx = np.argwhere(np.triu(self.unknown, 1))
        return [tuple(int(v) for v in p) for p in idx]

    def fill(self, *values: float) -> CovarianceMatrix4:
        pairs = self.unknown_pairs()
        if len(values) != len(pairs):
            raise ContractError(f"expected {len(pairs)} values, got {len(values)}")
        m = np.array(self.entries)
        for (i, j), v in zip(pairs, values):
            m[i, j] = m[j, i] = v
        return CovarianceMatrix4(m)

    def to_json(self) -> str:
        return covariance_to_json(self.entries, stderr=self.stderr)


def covariance_to_json(entries, stderr=None) -> str:
    def rows(m):
        return [[None if np.isnan(v) else float(v) for v in row] for row in np.asarray(m)]

    doc = {"order": list(ORDER), "v0": V0, "entries": rows(entries)}
    if stderr is not None:
        doc["stderr"] = rows(stderr)
    return json.dumps(doc, indent=2)


def covariance_from_json(text: str):
    """Parse the covariance JSON format.

    Returns a :class:`CovarianceMatrix4` when every entry is known and a
    :class:`PartialCovariance` when some entries are ``null``.
    """
    doc = json.loads(text)
    if list(doc.get("order", [])) != list(ORDER):
        raise ContractError(f"unsupported quadrature order {doc.get('order')!r}")
    if not math.isclose(float(doc.get("v0", V0)), V0):
        raise ContractError("only the V0 = 1/2 convention is supported")
    m = np.array([[np.nan if v is None else v for v in row] for row in doc["entries"]], dtype=float)
    stderr = doc.get("stderr")
    if stderr is not None:
        stderr = np.array([[np.nan if v is None else v for v in row] for row in stderr], dtype=float)
    if np.any(np.isnan(m)):
        return PartialCovariance(m, stderr)
    return CovarianceMatrix4(m)


@dataclass(frozen=True)
class QuadratureVariancePair:
    """Variances of the squeezed (x) and anti-squeezed (p) quadrature, in V0."""

    v_x: float
    v_p: float

    def __post_init__(self):
        if not (self.v_x > 0 and self.v_p > 0):
            raise ContractError("quadrature variances must be positive")

    def is_physical(self, tol: float = DEFAULT_TOL) -> bool:
        return self.v_x * self.v_p >= 1.0 - tol

    @classmethod
    def from_squeezing(cls, r: float) -> "QuadratureVariancePair":
        return cls(math.exp(-2 * r), math.exp(2 * r))


def _as_matrix(cov) -> np.ndarray:
    if isinstance(cov, CovarianceMatrix4):
        return cov.entries
    m = np.asarray(cov, dtype=float)
    _check_symmetric(m)
    return m


def min_uncertainty_eigenvalue(cov) -> float:
    """Smallest eigenvalue of ``cov + i*Omega`` (V0 units)."""
    return float(np.linalg.eigvalsh(_as_matrix(cov) + 1j * OMEGA)[0])


def is_physical(cov, tol: float = DEFAULT_TOL) -> bool:
    """Check the uncertainty relation ``gamma + (i/2) Omega >= 0``.

    With entries in V0 units this reads ``cov + i*Omega >= 0``, which the
    vacuum saturates exactly.
    """
    return min_uncertainty_eigenvalue(cov) >= -tol


@dataclass(frozen=True)
class BoundScanResult:
    a_range: Optional[Tuple[float, float]]
    b_range: Optional[Tuple[float, float]]
    grid_step: float
    feasible: bool
    best_point: Tuple[float, float] = field(default=(math.nan, math.nan))
    best_eigenvalue: float = math.nan


def _lmin_batch(base: np.ndarray, pairs, a, b) -> np.ndarray:
    a = np.atleast_1d(np.asarray(a, dtype=float))
    b = np.atleast_1d(np.asarray(b, dtype=float))
    a, b = np.broadcast_arrays(a, b)
    m = np.broadcast_to(base + 1j * OMEGA, a.shape + (4, 4)).copy()
    for (i, j), v in zip(pairs, (a, b)):
        m[..., i, j] = m[..., j, i] = v + 1j * OMEGA[i, j]
    return np.linalg.eigvalsh(m)[..., 0]


def best_partner(template: PartialCovariance, axis: int, value: float, window: Optional[float] = None):
    """For one unknown fixed at ``value``, the other unknown maximizing ``lambda_min``.

    Returns ``(other, lambda_min)``; ``axis`` 0 fixes ``a``, 1 fixes ``b``.
    """
    pairs = template.unknown_pairs()
    if len(pairs) != 2:
        raise ContractError("need exactly two unknown entries")
    base = np.where(template.unknown, 0.0, template.entries)
    if window is None:
        window = 3.0 * float(np.max(np.diag(base)))

    def f(other):
        ab = (value, other) if axis == 0 else (other, value)
        return -float(_lmin_batch(base, pairs, *ab)[0])

    r = minimize_scalar(f, bounds=(-window, window), method="bounded", options={"xatol": 1e-12})
    return float(r.x), -float(r.fun)


def bound_scan(
    template: PartialCovariance,
    grid_step: float = 0.005,
    tol: float = DEFAULT_TOL,
    window: Optional[float] = None,
) -> BoundScanResult:
    """Range of the two unknown entries that keeps the matrix physical.

    The feasible set of ``(a, b)`` is convex (a linear matrix inequality),
    so each projected range is an interval. Its end points are located on
    the grid ``k * grid_step`` by bisection, using ``max_b lambda_min(a, b)``
    as the feasibility test for a given ``a`` (a concave function of ``b``).
    """
    if grid_step <= 0:
        raise ContractError("grid_step must be positive")
    pairs = template.unknown_pairs()
    if len(pairs) != 2:
        raise ContractError("bound_scan needs exactly two unknown entries")
    base = np.where(template.unknown, 0.0, template.entries)
    if window is None:
        window = 3.0 * float(np.max(np.diag(base)))

    def lmin(a, b):
        return float(_lmin_batch(base, pairs, a, b)[0])

    # most-feasible point; lambda_min is concave so any local max is global
    res = minimize(
        lambda v: -lmin(v[0], v[1]),
        x0=np.zeros(2),
        method="Nelder-Mead",
        options={"xatol": 1e-10, "fatol": 1e-14, "maxiter": 4000},
    )
    best = (float(res.x[0]), float(res.x[1]))
    best_val = -float(res.fun)
    if lmin(0.0, 0.0) >= best_val:
        best, best_val = (0.0, 0.0), lmin(0.0, 0.0)
    if best_val < -tol:
        return BoundScanResult(None, None, grid_step, False, best, best_val)

    def profile(axis: int, value: float) -> float:
        def f(other):
            return -(lmin(value, other) if axis == 0 else lmin(other, value))

        r = minimize_scalar(f, bounds=(-window, window), method="bounded",
                            options={"xatol": 1e-12})
        centre = best[1 - axis]
        return max(-float(r.fun), -f(centre))

    def axis_range(axis: int):
        kmax = int(math.floor(window / grid_step))
        k0 = int(round(best[axis] / grid_step))
        if profile(axis, k0 * grid_step) < -tol:
            return None

        def edge(direction: int) -> int:
            good, bad = k0, direction * (kmax + 1)
            if profile(axis, direction * kmax * grid_step) >= -tol:
                return direction * kmax
            while abs(bad - good) > 1:
                mid = (good + bad) // 2
                if profile(axis, mid * grid_step) >= -tol:
                    good = mid
                else:
                    bad = mid
            return good

        return (edge(-1) * grid_step, edge(+1) * grid_step)

    a_range = axis_range(0)
    b_range = axis_range(1)
    feasible = a_range is not None and b_range is not None
    return BoundScanResult(a_range, b_range, grid_step, feasible, best, best_val)


def duan_criterion(cov) -> float:
    """``<D(x_A+x_B)^2> + <D(p_A-p_B)^2>`` in V0; below 4 certifies inseparability."""
    m = _as_matrix(cov)
    plus_x = m[0, 0] + m[2, 2] + 2 * m[0, 2]
    minus_p = m[1, 1] + m[3, 3] - 2 * m[1, 3]
    return float(plus_x + minus_p)


def conditional_variance(var_i: float, var_j: float, cov_ij: float) -> float:
    if var_j == 0:
        raise ZeroDivisionError("conditioning variance is zero")
    return var_i - cov_ij**2 / var_j


def reid_criterion(cov) -> Tuple[float, float]:
    """Inferred-variance products ``(A given B, B given A)`` in V0^2.

    A product below 1 (that is, below V0^2) certifies EPR steering in that
    direction.
    """
    m = _as_matrix(cov)
    xa, pa, xb, pb = (m[i, i] for i in range(4))
    a_given_b = conditional_variance(xa, xb, m[0, 2]) * conditional_variance(pa, pb, m[1, 3])
    b_given_a = conditional_variance(xb, xa, m[0, 2]) * conditional_variance(pb, pa, m[1, 3])
    return float(a_given_b), float(b_given_a)


def apply_loss(pair: QuadratureVariancePair, eta: float) -> QuadratureVariancePair:
    """Pure-loss channel: ``v -> eta*v + (1-eta)`` (vacuum admixture, V0 units)."""
    if not 0.0 <= eta <= 1.0:
        raise ContractError(f"efficiency must lie in [0, 1], got {eta}")
    return QuadratureVariancePair(eta * pair.v_x + (1 - eta), eta * pair.v_p + (1 - eta))


def rotation(theta: float) -> np.ndarray:
    """Phase-space rotation acting on one ``(x, p)`` pair."""
    c, s = math.cos(theta), math.sin(theta)
    return np.array([[c, -s], [s, c]])


def beam_splitter(transmittance: float = 0.5) -> np.ndarray:
    """Real beam splitter on (x1, p1, x2, p2); symplectic for any transmittance."""
    t = math.sqrt(transmittance)
    r = math.sqrt(1 - transmittance)
    return np.array(
        [[t, 0, r, 0], [0, t, 0, r], [r, 0, -t, 0], [0, r, 0, -t]], dtype=float
    )


def local_rotation(theta_a: float, theta_b: float) -> np.ndarray:
    s = np.zeros((4, 4))
    s[:2, :2] = rotation(theta_a)
    s[2:, 2:] = rotation(theta_b)
    return s


def transform(cov, s: np.ndarray) -> CovarianceMatrix4:
    m = _as_matrix(cov)
    out = s @ m @ s.T
    return CovarianceMatrix4(0.5 * (out + out.T))


def xp_cross_terms(cov) -> dict:
    m = _as_matrix(cov)
    return {"xApA": m[0, 1], "xBpB": m[2, 3], "xApB": m[0, 3], "xBpA": m[2, 1]}


__all__ = [
    "V0",
    "OMEGA",
    "ORDER",
    "ContractError",
    "CovarianceMatrix4",
    "PartialCovariance",
    "QuadratureVariancePair",
    "BoundScanResult",
    "is_physical",
    "min_uncertainty_eigenvalue",
    "bound_scan",
    "best_partner",
    "duan_criterion",
    "reid_criterion",
    "conditional_variance",
    "apply_loss",
    "rotation",
    "beam_splitter",
    "local_rotation",
    "transform",
    "xp_cross_terms",
    "covariance_to_json",
    "covariance_from_json",
]

