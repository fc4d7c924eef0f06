"""Synthetic homodyne time traces of the two-mode state, with detector artifacts.

Traces are in shot-noise standard-deviation units: a shot-noise trace is
unit-variance white noise. Power spectral densities handed to
:func:`colored_noise` use the same scale, i.e. a flat PSD of value ``c``
gives a per-sample variance ``c``.

Every trace draws its random numbers from its own counter-based Philox
stream keyed by ``(master_seed, labels)`` with ``trace_index`` and channel in
the counter, so results do not depend on how work is split across threads.
"""

from __future__ import annotations

import math
import zlib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .gaussian_core import ContractError
from .network_model import ChannelParams, MeasurementAngles
from .opo_model import OpoParams, SeedNoiseModel, output_spectrum, TWO_PI

KINDS = ("signal", "shot_noise", "electronic")


@dataclass(frozen=True)
class SwitchTiming:
    switch_frequency: float = 5e5
    window_length: float = 1e-6
    extract_length: float = 900e-9
    traces_per_set: int = 16000
    sample_rate: float = 250e6

    def __post_init__(self):
        if self.extract_length > self.window_length * (1 + 1e-12):
            raise ContractError("extract length exceeds the switching window")
        if not math.isclose(self.window_length, 1.0 / (2.0 * self.switch_frequency), rel_tol=1e-9):
            raise ContractError("window length must equal half the switching period")
        if self.traces_per_set < 1 or self.sample_rate <= 0:
            raise ContractError("need at least one trace and a positive sample rate")
        if self.n_samples < 3:
            raise ContractError("extraction window holds fewer than 3 samples")

    @property
    def n_samples(self) -> int:
        return int(round(self.extract_length * self.sample_rate))

    def to_dict(self) -> dict:
        return {
            "switch_frequency": self.switch_frequency,
            "window_length": self.window_length,
            "extract_length": self.extract_length,
            "traces_per_set": self.traces_per_set,
            "sample_rate": self.sample_rate,
        }


@dataclass(frozen=True)
class DampedSine:
    amplitude: float
    frequency: float  # Hz
    decay_time: float  # s
    phase: float = 0.0

    def __call__(self, t):
        return self.amplitude * np.exp(-t / self.decay_time) * np.sin(
            TWO_PI * self.frequency * t + self.phase
        )


@dataclass(frozen=True)
class ArtifactModel:
    """Deterministic and per-trace detector artifacts (shot-noise sigma units).

    ``ripple`` is either a sequence of :class:`DampedSine` terms or a
    tabulated waveform with one value per sample.
    """

    coherent_offset: float = 0.0
    slope_decay: float = 0.0  # units per second
    slope_jitter_sigma: float = 0.0  # units per second
    ripple: Sequence = ()
    electronic_noise_db: float = -20.0

    def __post_init__(self):
        if not self.electronic_noise_db < 0:
            raise ContractError("electronic noise must lie below shot noise")
        if self.slope_jitter_sigma < 0:
            raise ContractError("slope jitter must be non-negative")

    @classmethod
    def none(cls, electronic_noise_db: float = -300.0) -> "ArtifactModel":
        return cls(electronic_noise_db=electronic_noise_db)

    @property
    def electronic_variance(self) -> float:
        return 10.0 ** (self.electronic_noise_db / 10.0)

    def ripple_waveform(self, t: np.ndarray) -> np.ndarray:
        if len(self.ripple) == 0:
            return np.zeros_like(t)
        if isinstance(self.ripple[0], DampedSine):
            return sum(term(t) for term in self.ripple)
        wave = np.asarray(self.ripple, dtype=float)
        if wave.shape != t.shape:
            raise ContractError("tabulated ripple must have one value per sample")
        return wave


@dataclass(frozen=True)
class TraceSet:
    samples: np.ndarray
    sample_rate: float
    timing: SwitchTiming
    kind: str = "signal"
    seed: Optional[int] = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ContractError(f"unknown trace-set kind {self.kind!r}")
        s = np.asarray(self.samples, dtype=np.float64)
        if s.ndim != 2:
            raise ContractError("samples must be a 2-D (traces x samples) array")
        if s.shape[1] != self.timing.n_samples:
            raise ContractError(
                f"trace length {s.shape[1]} does not match timing ({self.timing.n_samples})"
            )
        s = s.view()
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


# ---------------------------------------------------------------- RNG streams


def _label_word(label) -> int:
    if isinstance(label, (int, np.integer)):
        return int(label) & 0xFFFFFFFF
    return zlib.crc32(str(label).encode())


def stream_key(master_seed: int, *labels) -> np.ndarray:
    """128-bit Philox key derived from the master seed and set labels."""
    words = [int(master_seed) & 0xFFFFFFFF, (int(master_seed) >> 32) & 0xFFFFFFFF]
    words += [_label_word(lab) for lab in labels]
    return np.random.SeedSequence(words).generate_state(2, np.uint64)


def trace_rng(key: np.ndarray, trace_index: int, channel: int = 0) -> np.random.Generator:
    """Independent generator for one trace of one channel."""
    return np.random.Generator(
        np.random.Philox(key=key, counter=[0, 0, int(trace_index), int(channel)])
    )


# ------------------------------------------------------------- colored noise


def psd_on_grid(target_psd, n: int, sample_rate: float) -> np.ndarray:
    """Evaluate a PSD on the rfft grid of an ``n``-sample record.

    ``target_psd`` is a callable of frequency in Hz, a ``(freq_hz, values)``
    pair (linearly interpolated, end values held), or an array already on
    the grid.
    """
    freqs = np.fft.rfftfreq(n, d=1.0 / sample_rate)
    if callable(target_psd):
        vals = np.asarray(target_psd(freqs), dtype=float)
        vals = np.broadcast_to(vals, freqs.shape)
    elif isinstance(target_psd, tuple) and len(target_psd) == 2:
        vals = np.interp(freqs, np.asarray(target_psd[0], float), np.asarray(target_psd[1], float))
    else:
        vals = np.asarray(target_psd, dtype=float)
        if vals.shape != freqs.shape:
            vals = np.interp(freqs, np.linspace(0, sample_rate / 2, vals.size), vals)
    if np.any(vals < 0):
        raise ContractError("target PSD must be non-negative")
    return vals


def shape_white(white: np.ndarray, psd_grid: np.ndarray, n_out: int) -> np.ndarray:
    """Colour white unit normals along the last axis and keep the first ``n_out`` samples."""
    m = white.shape[-1]
    spec = np.fft.rfft(white, axis=-1) * np.sqrt(psd_grid)
    return np.fft.irfft(spec, n=m, axis=-1)[..., :n_out]


def colored_noise(
    target_psd,
    n_samples: int,
    sample_rate: float,
    rng: np.random.Generator,
    oversample: int = 1,
) -> np.ndarray:
    """Gaussian trace with the requested PSD via frequency-domain shaping.

    With ``oversample == 1`` the process is circular and its expected
    periodogram equals the PSD exactly at every bin. Larger values generate
    a longer record and crop it, which removes the wrap-around correlation.
    """
    m = n_samples * int(oversample)
    grid = psd_on_grid(target_psd, m, sample_rate)
    return shape_white(rng.standard_normal(m), grid, n_samples)


def autocovariance(psd_grid: np.ndarray, m: int, n: int) -> np.ndarray:
    """Lags ``0..n-1`` of the stationary autocovariance of :func:`shape_white` output."""
    return np.fft.irfft(psd_grid, n=m)[:n]


# ------------------------------------------------------------- path spectra


@dataclass(frozen=True)
class QuadratureSpectra:
    """Per-path quadrature PSDs on the generation grid (V0 units = per-sample variance)."""

    freqs: np.ndarray
    x1: np.ndarray
    p1: np.ndarray
    x2: np.ndarray
    p2: np.ndarray

    def stack(self) -> np.ndarray:
        return np.stack([self.x1, self.p1, self.x2, self.p2])


def path_spectra(
    opo: OpoParams,
    seed: Optional[SeedNoiseModel],
    paths: Sequence[ChannelParams],
    freqs: np.ndarray,
    delay_excess: Optional[Callable] = None,
) -> QuadratureSpectra:
    """Detected quadrature spectra of direct (1) and delay (2) paths.

    The OPO spectra already carry the overall efficiency; each path's
    ``eta`` is an extra loss on top. ``delay_excess`` (V0 units, callable of
    Hz) is added to both delay-path quadratures.
    """
    omega = TWO_PI * np.asarray(freqs, dtype=float)
    sx = output_spectrum(opo, seed, omega, "x")
    sp = output_spectrum(opo, seed, omega, "p")
    out = []
    for i, path in enumerate(paths):
        vx = path.eta * sx + 1.0 - path.eta
        vp = path.eta * sp + 1.0 - path.eta
        if i == 1 and delay_excess is not None:
            extra = np.asarray(delay_excess(np.asarray(freqs, dtype=float)), dtype=float)
            vx, vp = vx + extra, vp + extra
        out.extend([vx, vp])
    return QuadratureSpectra(np.asarray(freqs, float), *out)


# ---------------------------------------------------------------- synthesis


@dataclass(frozen=True)
class SynthOptions:
    oversample: int = 2
    chunk_size: int = 1000
    threads: int = 1


def _chunks(n_traces: int, chunk_size: int):
    return [(s, min(s + chunk_size, n_traces)) for s in range(0, n_traces, chunk_size)]


def _run_chunks(fn, n_traces: int, options: SynthOptions) -> None:
    chunks = _chunks(n_traces, max(1, options.chunk_size))
    if options.threads <= 1 or len(chunks) == 1:
        for c in chunks:
            fn(*c)
        return
    with ThreadPoolExecutor(max_workers=options.threads) as pool:
        for fut in [pool.submit(fn, *c) for c in chunks]:
            fut.result()


def _artifact_terms(artifacts: ArtifactModel, t: np.ndarray):
    return artifacts.coherent_offset + artifacts.ripple_waveform(t)


def synthesize_quadrature_traces(
    opo: OpoParams,
    seed_model: Optional[SeedNoiseModel],
    paths: Sequence[ChannelParams],
    angles: MeasurementAngles,
    timing: SwitchTiming,
    artifacts: ArtifactModel,
    master_seed: int,
    delay_excess: Optional[Callable] = None,
    options: SynthOptions = SynthOptions(),
    label="signal",
):
    """Trace sets at stations A and B for one pair of LO angles.

    Per trace: path rotation angles are drawn from ``N(offset_i, sigma_i^2)``;
    four independent coloured-noise records give ``x1, p1, x2, p2``; these are
    rotated, interfered and projected on the LO angles. Detector artifacts
    (offset, per-trace slope, ripple, white electronic noise) are then added
    to each station.

    Per-trace draw layout (one Philox stream per trace): ``4*m`` quadrature
    normals, 2 angle normals, 2 slope normals, ``2*n`` electronic normals.
    """
    if len(paths) != 2:
        raise ContractError("need exactly two paths")
    n, fs = timing.n_samples, timing.sample_rate
    m = n * options.oversample
    freqs = np.fft.rfftfreq(m, d=1.0 / fs)
    spectra = path_spectra(opo, seed_model, paths, freqs, delay_excess).stack()
    offsets = np.array([p.phase_offset for p in paths])
    sigmas = np.array([p.phase_jitter_sigma for p in paths])
    t = np.arange(n) / fs
    fixed = _artifact_terms(artifacts, t)
    elec_sd = math.sqrt(artifacts.electronic_variance)
    ca, sa = math.cos(angles.theta_A), math.sin(angles.theta_A)
    cb, sb = math.cos(angles.theta_B), math.sin(angles.theta_B)
    key = stream_key(master_seed, label)
    n_tr = timing.traces_per_set
    out_a = np.empty((n_tr, n))
    out_b = np.empty((n_tr, n))

    def work(start: int, stop: int):
        k = stop - start
        draws = np.empty((k, 4 * m + 4 + 2 * n))
        for j in range(k):
            draws[j] = trace_rng(key, start + j).standard_normal(draws.shape[1])
        quads = shape_white(draws[:, : 4 * m].reshape(k, 4, m), spectra, n)
        pos = 4 * m
        delta = offsets + sigmas * draws[:, pos : pos + 2]
        slopes = artifacts.slope_decay + artifacts.slope_jitter_sigma * draws[:, pos + 2 : pos + 4]
        elec = draws[:, pos + 4 :].reshape(k, 2, n)
        c, s = np.cos(delta)[:, :, None], np.sin(delta)[:, :, None]
        x1 = c[:, 0] * quads[:, 0] - s[:, 0] * quads[:, 1]
        p1 = s[:, 0] * quads[:, 0] + c[:, 0] * quads[:, 1]
        x2 = c[:, 1] * quads[:, 2] - s[:, 1] * quads[:, 3]
        p2 = s[:, 1] * quads[:, 2] + c[:, 1] * quads[:, 3]
        r = math.sqrt(0.5)
        xa, pa = (x1 - p2) * r, (p1 + x2) * r
        xb, pb = (x1 + p2) * r, (p1 - x2) * r
        out_a[start:stop] = (
            xa * ca + pa * sa + fixed + slopes[:, :1] * t + elec_sd * elec[:, 0]
        )
        out_b[start:stop] = (
            xb * cb + pb * sb + fixed + slopes[:, 1:] * t + elec_sd * elec[:, 1]
        )

    _run_chunks(work, n_tr, options)
    meta = {"theta_A": angles.theta_A, "theta_B": angles.theta_B, "label": str(label)}
    return (
        TraceSet(out_a, fs, timing, "signal", master_seed, dict(meta, station="A")),
        TraceSet(out_b, fs, timing, "signal", master_seed, dict(meta, station="B")),
    )


def synthesize_calibration(
    kind: str,
    timing: SwitchTiming,
    artifacts: ArtifactModel,
    master_seed: int,
    station: str = "A",
    options: SynthOptions = SynthOptions(),
) -> TraceSet:
    """Shot-noise (unit white + electronic floor) or electronic-only calibration set."""
    if kind not in ("shot_noise", "electronic"):
        raise ContractError(f"unknown calibration kind {kind!r}")
    n = timing.n_samples
    elec_sd = math.sqrt(artifacts.electronic_variance)
    key = stream_key(master_seed, kind, station)
    n_tr = timing.traces_per_set
    out = np.empty((n_tr, n))
    shot = 1.0 if kind == "shot_noise" else 0.0

    def work(start: int, stop: int):
        for j in range(start, stop):
            z = trace_rng(key, j).standard_normal(2 * n)
            out[j] = shot * z[:n] + elec_sd * z[n:]

    _run_chunks(work, n_tr, options)
    return TraceSet(out, timing.sample_rate, timing, kind, master_seed, {"station": station})


__all__ = [
    "SwitchTiming",
    "DampedSine",
    "ArtifactModel",
    "TraceSet",
    "SynthOptions",
    "QuadratureSpectra",
    "stream_key",
    "trace_rng",
    "psd_on_grid",
    "shape_white",
    "colored_noise",
    "autocovariance",
    "path_spectra",
    "synthesize_quadrature_traces",
    "synthesize_calibration",
]
