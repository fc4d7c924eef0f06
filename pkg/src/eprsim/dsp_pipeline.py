"""Trace processing: slope and ripple removal, temporal histograms, spectra and mode values.

Spectra and mode variances are normalized with calibration sets (shot noise
and electronic floor) that should be processed exactly like the signal, so
that the bias from fitting out a line per trace cancels for flat spectra.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.linalg import toeplitz

from .gaussian_core import ContractError
from .trace_synth import SwitchTiming, TraceSet


@dataclass(frozen=True)
class ProcessedTraceSet:
    samples: np.ndarray
    sample_rate: float
    timing: SwitchTiming
    kind: str = "signal"
    slope_removed: bool = False
    ripple_removed: bool = False
    electronic_subtracted: bool = False
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        s = np.asarray(self.samples, dtype=np.float64).view()
        s.setflags(write=False)
        object.__setattr__(self, "samples", s)

    @property
    def n_traces(self) -> int:
        return self.samples.shape[0]

    @property
    def n_samples(self) -> int:
        return self.samples.shape[1]

    @property
    def time(self) -> np.ndarray:
        return np.arange(self.n_samples) / self.sample_rate


def as_processed(data) -> ProcessedTraceSet:
    if isinstance(data, ProcessedTraceSet):
        return data
    if isinstance(data, TraceSet):
        return ProcessedTraceSet(data.samples, data.sample_rate, data.timing, data.kind,
                                 meta=dict(data.meta))
    raise ContractError(f"expected a trace set, got {type(data).__name__}")


def _line_basis(n: int) -> np.ndarray:
    """Orthonormal basis (2 x n) of constant and linear trends."""
    t = np.arange(n, dtype=float)
    t -= t.mean()
    return np.stack([np.full(n, 1.0 / math.sqrt(n)), t / np.linalg.norm(t)])


def detrend_projector(n: int) -> np.ndarray:
    """``I - P`` where ``P`` projects on constant and linear trends."""
    q = _line_basis(n)
    return np.eye(n) - q.T @ q


def slope_remove(data) -> ProcessedTraceSet:
    """Subtract each trace's ordinary least-squares line."""
    ps = as_processed(data)
    if ps.n_samples < 3:
        raise ContractError("slope removal needs at least 3 samples")
    q = _line_basis(ps.n_samples)
    x = ps.samples
    out = x - (x @ q.T) @ q
    return replace(ps, samples=out, slope_removed=True)


def ripple_remove(data, require_slope_removed: bool = True) -> ProcessedTraceSet:
    """Subtract the ensemble-mean trace from every trace."""
    ps = as_processed(data)
    if require_slope_removed and not ps.slope_removed:
        raise ContractError("ripple removal expects slope-removed traces")
    return replace(ps, samples=ps.samples - ps.samples.mean(axis=0), ripple_removed=True)


def process(data, remove_slope: bool = True, remove_ripple: bool = True) -> ProcessedTraceSet:
    """The standard chain: slope removal, then ripple removal (steps already done are skipped)."""
    ps = as_processed(data)
    if remove_slope and not ps.slope_removed:
        ps = slope_remove(ps)
    if remove_ripple and not ps.ripple_removed:
        ps = ripple_remove(ps, require_slope_removed=remove_slope)
    return ps


@dataclass(frozen=True)
class TemporalHistogram:
    time: np.ndarray
    quantile_levels: np.ndarray
    quantiles: np.ndarray  # (levels, samples)
    edges: np.ndarray
    counts: np.ndarray  # (bins, samples)


def temporal_histogram(data, quantiles=(0.025, 0.16, 0.5, 0.84, 0.975), bins: int = 60,
                       value_range=None) -> TemporalHistogram:
    """Per-sample-index distribution of the ensemble (quantile bands and 2-D histogram)."""
    x = data.samples
    levels = np.asarray(quantiles, dtype=float)
    q = np.quantile(x, levels, axis=0)
    if value_range is None:
        lo, hi = float(x.min()), float(x.max())
        if lo == hi:
            lo, hi = lo - 0.5, hi + 0.5
        value_range = (lo, hi)
    edges = np.linspace(value_range[0], value_range[1], bins + 1)
    counts = np.empty((bins, x.shape[1]), dtype=np.int64)
    for j in range(x.shape[1]):
        counts[:, j] = np.histogram(x[:, j], bins=edges)[0]
    t = np.arange(x.shape[1]) / data.sample_rate
    return TemporalHistogram(t, levels, q, edges, counts)


# ------------------------------------------------------------------ spectra


def _window(name: str, n: int) -> np.ndarray:
    if name in ("rect", "rectangular", "boxcar", None):
        return np.ones(n)
    if name == "hann":
        return np.hanning(n + 2)[1:-1]
    raise ContractError(f"unknown window {name!r}")


def periodograms(x: np.ndarray, sample_rate: float, window: str = "rect"):
    """Per-trace periodograms, scaled so white noise of variance ``c`` gives ``c``.

    Returns ``(freqs_hz, P)`` with ``P`` of shape ``(traces, bins)``.
    """
    n = x.shape[-1]
    w = _window(window, n)
    spec = np.fft.rfft(x * w, axis=-1)
    return np.fft.rfftfreq(n, 1.0 / sample_rate), (spec.real**2 + spec.imag**2) / np.sum(w**2)


@dataclass(frozen=True)
class SpectrumEstimate:
    freq_grid: np.ndarray  # Hz
    variance_rel_shot: np.ndarray
    stderr: np.ndarray

    @property
    def variance_db(self) -> np.ndarray:
        return 10.0 * np.log10(self.variance_rel_shot)

    @property
    def stderr_db(self) -> np.ndarray:
        return 10.0 / math.log(10.0) * self.stderr / self.variance_rel_shot

    def at(self, freq_hz: float) -> float:
        return float(np.interp(freq_hz, self.freq_grid, self.variance_rel_shot))

    def band(self, f_lo: float, f_hi: float) -> np.ndarray:
        return (self.freq_grid >= f_lo) & (self.freq_grid <= f_hi)

    def to_csv(self) -> str:
        lines = ["freq_MHz,value_dB,stderr_dB"]
        for f, v, e in zip(self.freq_grid, self.variance_db, self.stderr_db):
            lines.append(f"{f / 1e6:.6f},{v:.6f},{e:.6f}")
        return "\n".join(lines) + "\n"


def _check_aligned(*sets):
    shapes = {s.samples.shape[1] for s in sets if s is not None}
    if len(shapes) != 1:
        raise ContractError("trace sets differ in length")


def _mean_se(p: np.ndarray):
    return p.mean(axis=0), p.std(axis=0, ddof=1) / math.sqrt(p.shape[0])


def combined_spectrum(set_a, set_b, sign: int, shot, electronic=None, shot_b=None,
                      electronic_b=None, window: str = "rect",
                      subtract_electronic: bool = True) -> SpectrumEstimate:
    """Shot-noise normalized spectrum of ``q_A + sign*q_B``.

    ``(P_{A+-B} - P_elA - P_elB) / ((P_shotA - P_elA) + (P_shotB - P_elB))``
    with all periodograms ensemble-averaged per bin. When only one
    calibration set is given it serves both stations. The DC bin is dropped.
    """
    if sign not in (1, -1):
        raise ContractError("sign must be +1 or -1")
    if set_a.samples.shape != set_b.samples.shape:
        raise ContractError("station trace sets differ in shape")
    shot_b = shot if shot_b is None else shot_b
    electronic_b = electronic if electronic_b is None else electronic_b
    _check_aligned(set_a, set_b, shot, shot_b, electronic, electronic_b)
    fs = set_a.sample_rate
    freqs, p = periodograms(set_a.samples + sign * set_b.samples, fs, window)
    num, num_se = _mean_se(p)
    sa, sa_se = _mean_se(periodograms(shot.samples, fs, window)[1])
    sb, sb_se = (sa, sa_se) if shot_b is shot else _mean_se(periodograms(shot_b.samples, fs, window)[1])
    if subtract_electronic and electronic is not None:
        ea, ea_se = _mean_se(periodograms(electronic.samples, fs, window)[1])
        if electronic_b is electronic:
            eb, eb_se = ea, ea_se
        else:
            eb, eb_se = _mean_se(periodograms(electronic_b.samples, fs, window)[1])
    else:
        ea = eb = ea_se = eb_se = np.zeros_like(num)
    top = num - ea - eb
    bottom = (sa - ea) + (sb - eb)
    ratio = top / bottom
    top_se = np.sqrt(num_se**2 + ea_se**2 + eb_se**2)
    bottom_se = np.sqrt(sa_se**2 + sb_se**2 + ea_se**2 + eb_se**2)
    se = np.abs(ratio) * np.sqrt((top_se / top) ** 2 + (bottom_se / bottom) ** 2)
    return SpectrumEstimate(freqs[1:], ratio[1:], se[1:])


def single_spectrum(data, shot, electronic=None, window: str = "rect") -> SpectrumEstimate:
    """Shot-noise normalized spectrum of a single station."""
    fs = data.sample_rate
    freqs, p = periodograms(data.samples, fs, window)
    num, num_se = _mean_se(p)
    s, s_se = _mean_se(periodograms(shot.samples, fs, window)[1])
    if electronic is not None:
        e, e_se = _mean_se(periodograms(electronic.samples, fs, window)[1])
    else:
        e = e_se = np.zeros_like(num)
    ratio = (num - e) / (s - e)
    se = np.abs(ratio) * np.sqrt((np.hypot(num_se, e_se) / (num - e)) ** 2
                                 + (np.hypot(s_se, e_se) / (s - e)) ** 2)
    return SpectrumEstimate(freqs[1:], ratio[1:], se[1:])


# ------------------------------------------------------------ mode values


def mixing_kernel(n: int, sample_rate: float, f0: float) -> np.ndarray:
    t = np.arange(n) / sample_rate
    return np.sin(2.0 * math.pi * f0 * t) / sample_rate


def demodulate(x: np.ndarray, sample_rate: float, f0: float) -> np.ndarray:
    """``sum_t x(t) sin(2 pi f0 t) dt`` for every trace."""
    if not 0 < f0 < sample_rate / 2:
        raise ContractError("mixing frequency must lie between 0 and Nyquist")
    return x @ mixing_kernel(x.shape[-1], sample_rate, f0)


def jackknife_variance(y: np.ndarray):
    """Sample variance and its delete-one jackknife standard error (closed form)."""
    return jackknife_covariance(y, y)


def jackknife_covariance(y: np.ndarray, z: np.ndarray):
    """Sample covariance (ddof 1) and its delete-one jackknife standard error."""
    y = np.asarray(y, dtype=float)
    z = np.asarray(z, dtype=float)
    n = y.size
    if n < 3:
        raise ContractError("need at least 3 values")
    yc, zc = y - y.mean(), z - z.mean()
    sy, sz, syz = yc.sum(), zc.sum(), np.dot(yc, zc)
    full = syz / (n - 1)
    # Remove value i from the (centred) sums and re-evaluate.
    sy_i, sz_i, syz_i = sy - yc, sz - zc, syz - yc * zc
    loo = (syz_i - sy_i * sz_i / (n - 1)) / (n - 2)
    se = math.sqrt((n - 1) / n * np.sum((loo - loo.mean()) ** 2))
    return float(full), float(se)


@dataclass(frozen=True)
class ModeValues:
    """Shot-noise normalized mode values of one station.

    ``values`` are scaled so that the shot-noise calibration has variance
    1 after subtracting the electronic floor; ``electronic_norm`` is the
    electronic variance on the same scale.
    """

    values: np.ndarray
    variance: float
    stderr: float
    electronic_norm: float
    calibration_rel_se: float
    f0: float


def mode_extract(data, f0: float, shot, electronic=None) -> ModeValues:
    """Demodulate every trace at ``f0`` and normalize to the shot-noise calibration."""
    fs = data.sample_rate
    _check_aligned(data, shot, electronic)
    v = demodulate(data.samples, fs, f0)
    shot_var, shot_se = jackknife_variance(demodulate(shot.samples, fs, f0))
    if electronic is not None:
        elec_var, elec_se = jackknife_variance(demodulate(electronic.samples, fs, f0))
    else:
        elec_var = elec_se = 0.0
    scale = shot_var - elec_var
    if scale <= 0:
        raise ContractError("shot-noise calibration does not exceed the electronic floor")
    cal_rel = math.hypot(shot_se, elec_se) / scale
    values = v / math.sqrt(scale)
    raw_var, raw_se = jackknife_variance(values)
    e_norm = elec_var / scale
    var = raw_var - e_norm
    se = math.hypot(math.hypot(raw_se, elec_se / scale), abs(var) * cal_rel)
    return ModeValues(values, var, se, e_norm, cal_rel, f0)


@dataclass(frozen=True)
class CombinedMode:
    variance: float
    stderr: float


def combined_mode_variance(mode_a: ModeValues, mode_b: ModeValues, sign: int) -> CombinedMode:
    """Variance of ``q_A + sign*q_B`` mode values, electronic floors removed (V0 units)."""
    var, se = jackknife_variance(mode_a.values + sign * mode_b.values)
    var -= mode_a.electronic_norm + mode_b.electronic_norm
    cal = math.hypot(mode_a.calibration_rel_se, mode_b.calibration_rel_se) / math.sqrt(2.0)
    return CombinedMode(var, math.hypot(se, abs(var) * cal))


def mode_covariance(mode_a: ModeValues, mode_b: ModeValues):
    """Covariance between station mode values and its jackknife standard error."""
    return jackknife_covariance(mode_a.values, mode_b.values)


# ------------------------------------------------------ analytic predictions


def _covariance_matrix(psd_grid: np.ndarray, m: int, n: int) -> np.ndarray:
    return toeplitz(np.fft.irfft(psd_grid, n=m)[:n])


def expected_periodogram(psd_grid: np.ndarray, m: int, n: int, remove_slope: bool = True,
                         window: str = "rect") -> np.ndarray:
    """Expected per-bin periodogram of an ``n``-sample record of a stationary process.

    The process has PSD ``psd_grid`` on the rfft grid of length ``m`` (the
    generator's grid, ``m >= n``); optional line removal and window are
    applied before the transform. Bins follow :func:`periodograms`.
    """
    sigma = _covariance_matrix(psd_grid, m, n)
    op = detrend_projector(n) if remove_slope else np.eye(n)
    w = _window(window, n)
    f = np.exp(-2j * math.pi * np.outer(np.arange(n // 2 + 1), np.arange(n)) / n)
    a = (f * w) @ op
    return np.einsum("ki,ij,kj->k", a, sigma, a.conj()).real / np.sum(w**2)


def expected_mode_variance(psd_grid: np.ndarray, m: int, n: int, sample_rate: float, f0: float,
                           remove_slope: bool = True) -> float:
    """Shot-normalized mode variance for a process with PSD ``psd_grid`` (generator grid)."""
    sigma = _covariance_matrix(psd_grid, m, n)
    w = mixing_kernel(n, sample_rate, f0)
    if remove_slope:
        w = detrend_projector(n) @ w
    return float(w @ sigma @ w / (w @ w))


__all__ = [
    "ProcessedTraceSet",
    "SpectrumEstimate",
    "TemporalHistogram",
    "ModeValues",
    "CombinedMode",
    "as_processed",
    "detrend_projector",
    "slope_remove",
    "ripple_remove",
    "process",
    "temporal_histogram",
    "periodograms",
    "combined_spectrum",
    "single_spectrum",
    "demodulate",
    "jackknife_variance",
    "jackknife_covariance",
    "mode_extract",
    "combined_mode_variance",
    "mode_covariance",
    "expected_periodogram",
    "expected_mode_variance",
]
