"""Partial tomography, covariance reconstruction, phase-fluctuation fit and reporting."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional

import numpy as np
from scipy import optimize, stats

from . import dsp_pipeline as dsp
from .config import ExperimentConfig, TomographyPlan
from .gaussian_core import (
    ContractError,
    CovarianceMatrix4,
    PartialCovariance,
    best_partner,
    bound_scan,
    duan_criterion,
    is_physical,
    reid_criterion,
)
from .io import DataError, read_traceset, write_traceset
from .network_model import (
    INTERFERE,
    MeasurementAngles,
    PathState,
    predict_set_variances,
)
from .opo_model import TWO_PI, OpoParams, SeedNoiseModel, efficiency_budget, output_spectrum
from .trace_synth import (
    SwitchTiming,
    path_spectra,
    synthesize_calibration,
    synthesize_quadrature_traces,
)

# Single-mode spectra isolated by set-1 combinations: name -> (theta, sign).
SPECTRUM_SOURCES = {
    "direct_sq": (0.0, 1),
    "delay_anti": (0.0, -1),
    "delay_sq": (math.pi / 2, 1),
    "direct_anti": (math.pi / 2, -1),
}


# ------------------------------------------------------------ analytic model


@dataclass(frozen=True)
class ExperimentModel:
    """Analytic description of the source and the two paths."""

    opo: OpoParams
    seed_model: Optional[SeedNoiseModel]
    channels: tuple
    delay_excess: Optional[Callable] = None

    @classmethod
    def from_config(cls, cfg: ExperimentConfig) -> "ExperimentModel":
        return cls(cfg.opo, cfg.seed_model, cfg.channels, cfg.delay_excess)

    def paths_at(self, freq_hz: float):
        """Path states at one frequency, including the delay-line excess."""
        sp = path_spectra(self.opo, self.seed_model, self.channels, np.array([freq_hz]),
                          self.delay_excess)
        return (
            PathState(float(sp.x1[0]), float(sp.p1[0]), 1.0, self.channels[0].phase_offset,
                      self.channels[0].phase_jitter_sigma),
            PathState(float(sp.x2[0]), float(sp.p2[0]), 1.0, self.channels[1].phase_offset,
                      self.channels[1].phase_jitter_sigma),
        )

    def combined_psd(self, freqs_hz, angles: MeasurementAngles, sign: int,
                     average_jitter: bool = True) -> np.ndarray:
        """PSD of ``q_A + sign*q_B`` (ensemble over jitter), per-sample-variance scale."""
        freqs_hz = np.asarray(freqs_hz, dtype=float)
        sp = path_spectra(self.opo, self.seed_model, self.channels, freqs_hz, self.delay_excess)
        w = np.array([math.cos(angles.theta_A), math.sin(angles.theta_A),
                      sign * math.cos(angles.theta_B), sign * math.sin(angles.theta_B)])
        u = INTERFERE.T @ w
        total = np.zeros_like(freqs_hz)
        for ch, vx, vp, (ux, up) in zip(self.channels, (sp.x1, sp.x2), (sp.p1, sp.p2),
                                        (u[:2], u[2:])):
            vis = math.exp(-2 * ch.phase_jitter_sigma**2) if average_jitter else 1.0
            c2, s2 = math.cos(2 * ch.phase_offset), math.sin(2 * ch.phase_offset)
            mean, half = 0.5 * (vx + vp), 0.5 * (vx - vp) * vis
            total += (ux**2 * (mean + half * c2) + up**2 * (mean - half * c2)
                      + 2 * ux * up * half * s2)
        return total

    def predicted_spectrum(self, freqs_hz, angles, sign) -> np.ndarray:
        """Shot-normalized spectrum of ``q_A + sign*q_B`` (two vacuum inputs give 1)."""
        return self.combined_psd(freqs_hz, angles, sign) / 2.0

    def expected_spectrum(self, timing: SwitchTiming, oversample: int, angles, sign,
                          remove_slope: bool = True, window: str = "rect"):
        """Expected estimator output of :func:`combined_spectrum` on its bins.

        Accounts for the finite record, the generator grid, line removal and
        the window; the DC bin is dropped as in the estimator.
        """
        n, fs = timing.n_samples, timing.sample_rate
        m = n * oversample
        grid = np.fft.rfftfreq(m, 1.0 / fs)
        num = dsp.expected_periodogram(self.combined_psd(grid, angles, sign), m, n,
                                       remove_slope, window)
        den = dsp.expected_periodogram(np.ones_like(grid), m, n, remove_slope, window)
        return np.fft.rfftfreq(n, 1.0 / fs)[1:], (num / (2.0 * den))[1:]

    def expected_mode(self, timing: SwitchTiming, oversample: int, f0: float, angles, sign,
                      remove_slope: bool = True) -> float:
        """Expected combined mode variance (V0 units, vacuum 2)."""
        n, fs = timing.n_samples, timing.sample_rate
        m = n * oversample
        grid = np.fft.rfftfreq(m, 1.0 / fs)
        psd = self.combined_psd(grid, angles, sign)
        return dsp.expected_mode_variance(psd, m, n, fs, f0, remove_slope)


# ------------------------------------------------------------------ sources


def _theta_tag(theta: float) -> str:
    return f"{math.degrees(theta):06.2f}".replace(".", "p")


def signal_stem(root, which: int, theta: float, station: str) -> Path:
    return Path(root) / f"set{which}_theta{_theta_tag(theta)}_{station}"


def calibration_stem(root, kind: str, station: str) -> Path:
    return Path(root) / f"{kind}_{station}"


class SimulatedSource:
    """Synthesizes trace sets on demand from an experiment configuration."""

    def __init__(self, cfg: ExperimentConfig, master_seed: Optional[int] = None,
                 channels: Optional[tuple] = None, artifacts=None, opo=None):
        self.cfg = cfg
        self.master_seed = cfg.master_seed if master_seed is None else master_seed
        self.channels = cfg.channels if channels is None else channels
        self.artifacts = cfg.artifacts if artifacts is None else artifacts
        self.opo = cfg.opo if opo is None else opo

    def signal(self, which: int, theta: float):
        return synthesize_quadrature_traces(
            self.opo, self.cfg.seed_model, self.channels, MeasurementAngles.for_set(which, theta),
            self.cfg.timing, self.artifacts, self.master_seed, self.cfg.delay_excess,
            self.cfg.synth, label=f"set{which}-{_theta_tag(theta)}",
        )

    def calibration(self, kind: str, station: str):
        return synthesize_calibration(kind, self.cfg.timing, self.artifacts, self.master_seed,
                                      station, self.cfg.synth)


class DirectorySource:
    """Reads trace sets written by :func:`write_all` from a directory."""

    def __init__(self, root):
        self.root = Path(root)

    def signal(self, which: int, theta: float):
        try:
            return tuple(read_traceset(signal_stem(self.root, which, theta, s)) for s in "AB")
        except DataError as exc:
            raise DataError(f"missing dataset for set {which}, theta "
                            f"{math.degrees(theta):.2f} deg: {exc}") from exc

    def calibration(self, kind: str, station: str):
        return read_traceset(calibration_stem(self.root, kind, station))


def write_all(source, plan: TomographyPlan, root) -> list:
    """Materialize every dataset of a plan (and calibrations) as files."""
    written = []
    for kind in ("shot_noise", "electronic"):
        for st in "AB":
            written.append(write_traceset(source.calibration(kind, st),
                                          calibration_stem(root, kind, st)))
    for which in (1, 2):
        for theta in plan.angles(which):
            for st, ts in zip("AB", source.signal(which, theta)):
                written.append(write_traceset(ts, signal_stem(root, which, theta, st)))
    return written


# ---------------------------------------------------------------- tomography


@dataclass(frozen=True)
class TomographyRow:
    which: int
    theta: float  # rad
    freq: float  # Hz
    var_a: float
    var_a_se: float
    var_b: float
    var_b_se: float
    sum_var: float
    sum_se: float
    diff_var: float
    diff_se: float
    cov_ab: float
    cov_ab_se: float


def _db(v):
    return 10.0 * np.log10(v)


@dataclass
class TomographyTable:
    rows: list = field(default_factory=list)

    def get(self, which: int, theta: float, freq: float) -> TomographyRow:
        for r in self.rows:
            if r.which == which and abs(r.theta - theta) < 1e-9 and abs(r.freq - freq) < 1.0:
                return r
        raise KeyError((which, math.degrees(theta), freq))

    def select(self, which: int, freq: float) -> list:
        return sorted((r for r in self.rows if r.which == which and abs(r.freq - freq) < 1.0),
                      key=lambda r: r.theta)

    def to_csv(self) -> str:
        head = ("set,theta_deg,freq_MHz,sum_dB,diff_dB,stderr_sum_dB,stderr_diff_dB,"
                "sum_V0,diff_V0,var_A,var_B,cov_AB,cov_AB_stderr")
        lines = [head]
        k = 10.0 / math.log(10.0)
        for r in self.rows:
            lines.append(",".join(f"{v:.8g}" for v in (
                r.which, math.degrees(r.theta), r.freq / 1e6, _db(r.sum_var / 2), _db(r.diff_var / 2),
                k * r.sum_se / r.sum_var, k * r.diff_se / r.diff_var, r.sum_var, r.diff_var,
                r.var_a, r.var_b, r.cov_ab, r.cov_ab_se)))
        return "\n".join(lines) + "\n"

    @classmethod
    def from_csv(cls, text: str) -> "TomographyTable":
        lines = [ln for ln in text.splitlines() if ln.strip()]
        head = lines[0].split(",")
        rows = []
        for ln in lines[1:]:
            d = dict(zip(head, (float(v) for v in ln.split(","))))
            k = math.log(10.0) / 10.0
            rows.append(TomographyRow(
                int(d["set"]), math.radians(d["theta_deg"]), d["freq_MHz"] * 1e6,
                d["var_A"], math.nan, d["var_B"], math.nan,
                d["sum_V0"], d["stderr_sum_dB"] * k * d["sum_V0"],
                d["diff_V0"], d["stderr_diff_dB"] * k * d["diff_V0"],
                d["cov_AB"], d["cov_AB_stderr"]))
        return cls(rows)


@dataclass
class Calibrations:
    shot_a: object
    shot_b: object
    elec_a: object
    elec_b: object


def load_calibrations(source, remove_slope: bool = True, remove_ripple: bool = True) -> Calibrations:
    def prep(kind, st):
        return dsp.process(source.calibration(kind, st), remove_slope, remove_ripple)

    return Calibrations(prep("shot_noise", "A"), prep("shot_noise", "B"),
                        prep("electronic", "A"), prep("electronic", "B"))


def tomography_rows(a, b, which: int, theta: float, freqs, cal: Calibrations) -> list:
    """Mode-variance rows for one processed angle dataset."""
    rows = []
    for f0 in freqs:
        ma = dsp.mode_extract(a, f0, cal.shot_a, cal.elec_a)
        mb = dsp.mode_extract(b, f0, cal.shot_b, cal.elec_b)
        s = dsp.combined_mode_variance(ma, mb, 1)
        d = dsp.combined_mode_variance(ma, mb, -1)
        c, c_se = dsp.mode_covariance(ma, mb)
        rows.append(TomographyRow(which, theta, f0, ma.variance, ma.stderr, mb.variance, mb.stderr,
                                  s.variance, s.stderr, d.variance, d.stderr, c, c_se))
    return rows


def spectra_from_set1(a, b, theta: float, cal: Calibrations, window: str = "rect") -> dict:
    out = {}
    for name, (th, sign) in SPECTRUM_SOURCES.items():
        if abs(th - theta) < 1e-9:
            out[name] = dsp.combined_spectrum(a, b, sign, cal.shot_a, cal.elec_a, cal.shot_b,
                                              cal.elec_b, window=window)
    return out


@dataclass
class TomographyResult:
    table: TomographyTable
    spectra: dict


def run_tomography(plan: TomographyPlan, source, window: str = "rect", with_spectra: bool = True,
                   sets=(1, 2), remove_slope: bool = True) -> TomographyResult:
    """Process every angle dataset of the plan into mode-variance rows.

    Each dataset goes through slope removal, ripple removal and mode
    extraction at every plan frequency; the set-1 datasets at 0 and 90
    degrees also yield the four single-mode spectra.
    """
    cal = load_calibrations(source, remove_slope)
    table = TomographyTable()
    spectra = {}
    for which in sets:
        for theta in plan.angles(which):
            a, b = (dsp.process(x, remove_slope) for x in source.signal(which, theta))
            table.rows.extend(tomography_rows(a, b, which, theta, plan.frequencies, cal))
            if with_spectra and which == 1:
                spectra.update(spectra_from_set1(a, b, theta, cal, window))
    return TomographyResult(table, spectra)


def reconstruct_cov(table: TomographyTable, freq: float) -> PartialCovariance:
    """Covariance at ``freq`` from set-1 and set-2 rows at 0 and 90 degrees.

    ``<xA pA>`` and ``<xB pB>`` are not measured and stay unknown.
    """
    try:
        s1_0 = table.get(1, 0.0, freq)
        s1_90 = table.get(1, math.pi / 2, freq)
        s2_0 = table.get(2, 0.0, freq)
        s2_90 = table.get(2, math.pi / 2, freq)
    except KeyError as exc:
        raise ContractError(f"insufficient tomography rows for reconstruction: {exc}") from exc
    m = np.full((4, 4), np.nan)
    se = np.full((4, 4), np.nan)

    def put(i, j, v, e):
        m[i, j] = m[j, i] = v
        se[i, j] = se[j, i] = e

    put(0, 0, s1_0.var_a, s1_0.var_a_se)
    put(2, 2, s1_0.var_b, s1_0.var_b_se)
    put(1, 1, s1_90.var_a, s1_90.var_a_se)
    put(3, 3, s1_90.var_b, s1_90.var_b_se)
    put(0, 2, s1_0.cov_ab, s1_0.cov_ab_se)          # qA = xA, qB = xB
    put(1, 3, -s1_90.cov_ab, s1_90.cov_ab_se)       # qA = pA, qB = -pB
    put(0, 3, -s2_0.cov_ab, s2_0.cov_ab_se)         # qA = xA, qB = -pB
    put(1, 2, s2_90.cov_ab, s2_90.cov_ab_se)        # qA = pA, qB = xB
    return PartialCovariance(m, se)


def predict_tomography(model: ExperimentModel, plan: TomographyPlan, freq: float,
                       average_jitter: bool = True) -> TomographyTable:
    """Analytic single-frequency prediction of every plan row (no record-length effects)."""
    p1, p2 = model.paths_at(freq)
    rows = []
    for which in (1, 2):
        pred = predict_set_variances(p1, p2, which, plan.angles(which), average_jitter)
        for theta, (s, d) in zip(plan.angles(which), pred):
            rows.append(TomographyRow(which, theta, freq, math.nan, math.nan, math.nan, math.nan,
                                      float(s), 0.0, float(d), 0.0, float((s - d) / 4), 0.0))
    return TomographyTable(rows)


# ----------------------------------------------------------------- phase fit


class FitError(RuntimeError):
    def __init__(self, message: str, residuals=None):
        super().__init__(message)
        self.residuals = residuals


@dataclass(frozen=True)
class FitResult:
    sigma1: float  # degrees
    sigma2: float
    ci1: tuple
    ci2: tuple
    residual_norm: float
    residuals: np.ndarray
    u: tuple  # fitted sigma^2 in rad^2
    u_stderr: tuple
    mode: str
    n_points: int

    def to_dict(self) -> dict:
        return {
            "sigma1_deg": self.sigma1,
            "sigma2_deg": self.sigma2,
            "sigma1_ci95_deg": list(self.ci1),
            "sigma2_ci95_deg": list(self.ci2),
            "residual_norm": self.residual_norm,
            "variance_rad2": list(self.u),
            "variance_stderr_rad2": list(self.u_stderr),
            "mode": self.mode,
            "n_points": self.n_points,
        }


def visibility(u: float, mode: str) -> float:
    """Fringe visibility for phase variance ``u = sigma^2``.

    ``approx`` follows the shifted-angle formula, ``cos(2 sigma)``, continued
    analytically to ``u < 0``; ``exact`` is the Gaussian average ``exp(-2u)``.
    """
    if mode == "exact":
        return math.exp(-2.0 * u)
    if mode == "approx":
        return math.cos(2.0 * math.sqrt(u)) if u >= 0 else math.cosh(2.0 * math.sqrt(-u))
    raise ContractError(f"unknown mode {mode!r}")


def phase_model(freqs_hz, opo: OpoParams, seed_model, u1: float, u2: float, delay_excess=None,
                mode: str = "approx", phase_offset: float = 0.0) -> dict:
    """Single-mode spectra of both paths under phase fluctuations (V0 units).

    ``delay_excess`` is ``(excess_sq, excess_anti)`` on ``freqs_hz``, added to
    the delay-path quadratures before averaging.
    """
    omega = TWO_PI * np.asarray(freqs_hz, dtype=float)
    sq = output_spectrum(opo, seed_model, omega, opo.squeezed_quadrature)
    anti = output_spectrum(opo, seed_model, omega, opo.antisqueezed_quadrature)
    ex_sq, ex_anti = (0.0, 0.0) if delay_excess is None else delay_excess
    c2 = math.cos(2.0 * phase_offset)
    out = {}
    for name, u, vs, va in (("direct", u1, sq, anti), ("delay", u2, sq + ex_sq, anti + ex_anti)):
        v = visibility(u, mode) * c2
        out[f"{name}_sq"] = 0.5 * vs * (1 + v) + 0.5 * va * (1 - v)
        out[f"{name}_anti"] = 0.5 * vs * (1 - v) + 0.5 * va * (1 + v)
    return out


FIT_KEYS = ("direct_sq", "direct_anti", "delay_sq", "delay_anti")


def fit_phase_sigma(freqs_hz, spectra: dict, opo: OpoParams, seed_model=None, unpumped=None,
                    delay_excess=None, mode: str = "approx", stderr_db: Optional[dict] = None,
                    weighted: bool = False, phase_offset: float = 0.0,
                    start=(1e-3, 1e-3)) -> FitResult:
    """Least-squares fit of the path phase-jitter widths to four spectra.

    Args:
        freqs_hz: common frequency grid of the spectra.
        spectra: linear shot-normalized spectra keyed ``direct_sq``,
            ``direct_anti``, ``delay_sq``, ``delay_anti``.
        opo: source parameters (overall efficiency included).
        seed_model: seed-noise coefficients, or None.
        unpumped: optional ``{"direct": (sq, anti), "delay": (sq, anti)}``
            unpumped spectra; their difference is the delay-line excess.
        delay_excess: ``(excess_sq, excess_anti)`` used when ``unpumped`` is
            not given.
        mode: ``approx`` or ``exact`` phase averaging.
        stderr_db: per-point standard errors in dB, used when ``weighted``.
        weighted: divide dB residuals by ``stderr_db``.
        phase_offset: fixed common phase offset (rad).

    Returns:
        FitResult with sigmas in degrees and 95% confidence intervals.
    """
    freqs_hz = np.asarray(freqs_hz, dtype=float)
    missing = [k for k in FIT_KEYS if k not in spectra]
    if missing:
        raise ContractError(f"missing spectra: {missing}")
    meas = {k: np.asarray(spectra[k], dtype=float) for k in FIT_KEYS}
    if any(v.shape != freqs_hz.shape for v in meas.values()):
        raise ContractError("spectra must share the frequency grid")
    if unpumped is not None:
        delay_excess = tuple(np.asarray(unpumped["delay"][i]) - np.asarray(unpumped["direct"][i])
                             for i in range(2))
    bad = [k for k, v in meas.items() if not np.all(np.isfinite(v) & (v > 0))]
    if bad:
        raise FitError(f"spectra must be finite and positive: {bad}",
                       residuals=np.concatenate([meas[k] for k in bad]))
    meas_db = np.concatenate([10 * np.log10(meas[k]) for k in FIT_KEYS])
    if weighted:
        if stderr_db is None:
            raise ContractError("weighted fit needs stderr_db")
        scale = np.concatenate([np.asarray(stderr_db[k], dtype=float) for k in FIT_KEYS])
    else:
        scale = np.ones_like(meas_db)

    def resid(params):
        model = phase_model(freqs_hz, opo, seed_model, params[0], params[1], delay_excess, mode,
                            phase_offset)
        with np.errstate(divide="ignore", invalid="ignore"):
            mdb = np.concatenate([10 * np.log10(model[k]) for k in FIT_KEYS])
        return (mdb - meas_db) / scale

    try:
        res = optimize.least_squares(resid, x0=np.asarray(start, dtype=float), x_scale=1e-3,
                                     method="lm", xtol=1e-14, ftol=1e-14, gtol=1e-14)
    except ValueError as exc:
        raise FitError(f"phase fit failed: {exc}", residuals=resid(np.asarray(start))) from exc
    if not res.success or not np.all(np.isfinite(res.fun)):
        raise FitError(f"phase fit did not converge: {res.message}", residuals=res.fun)
    dof = res.fun.size - 2
    if dof <= 0:
        raise FitError("not enough spectral points for a two-parameter fit", residuals=res.fun)
    jtj = res.jac.T @ res.jac
    try:
        cov = np.linalg.inv(jtj) * float(res.fun @ res.fun) / dof
    except np.linalg.LinAlgError as exc:
        raise FitError("singular fit Jacobian", residuals=res.fun) from exc
    u = res.x
    u_se = np.sqrt(np.clip(np.diag(cov), 0, None))
    tq = stats.t.ppf(0.975, dof)

    def to_deg(v):
        return math.degrees(math.sqrt(max(v, 0.0)))

    cis = [(to_deg(ui - tq * si), to_deg(ui + tq * si)) for ui, si in zip(u, u_se)]
    return FitResult(to_deg(u[0]), to_deg(u[1]), cis[0], cis[1], float(np.linalg.norm(res.fun)),
                     res.fun.copy(), (float(u[0]), float(u[1])), (float(u_se[0]), float(u_se[1])),
                     mode, int(res.fun.size))


# -------------------------------------------------------------------- report


@dataclass
class Report:
    duan: float
    duan_inseparable: bool
    reid: tuple
    reid_epr: bool
    max_two_mode_squeezing_db: Optional[float]
    physical_at_estimate: bool
    ab_estimate: Optional[tuple]
    a_range: Optional[tuple]
    b_range: Optional[tuple]
    physical_at_range_ends: Optional[bool]
    efficiency: Optional[float]
    stage_efficiencies: tuple = ()
    fit: Optional[dict] = None
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        d = dict(self.__dict__)
        d["reid"] = list(self.reid)
        for k in ("ab_estimate", "a_range", "b_range", "stage_efficiencies"):
            d[k] = None if d[k] is None else list(d[k])
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def to_text(self) -> str:
        lines = [
            f"Duan sum: {self.duan:.3f} V0 ({'inseparable' if self.duan_inseparable else 'not certified'}, bound 4)",
            f"Reid products: A|B {self.reid[0]:.3f}, B|A {self.reid[1]:.3f} V0^2 "
            f"({'EPR steering' if self.reid_epr else 'not certified'}, bound 1)",
        ]
        if self.max_two_mode_squeezing_db is not None:
            lines.append(f"Max two-mode squeezing: {self.max_two_mode_squeezing_db:.2f} dB")
        if self.a_range is not None:
            lines.append(f"<xA pA> range: [{self.a_range[0]:.3f}, {self.a_range[1]:.3f}]")
            lines.append(f"<xB pB> range: [{self.b_range[0]:.3f}, {self.b_range[1]:.3f}]")
        elif self.ab_estimate is not None:
            lines.append("no physical completion of the unmeasured entries found")
        if self.ab_estimate is not None:
            lines.append(f"Point estimate a = b = {self.ab_estimate[0]:.4f}: "
                         f"{'physical' if self.physical_at_estimate else 'unphysical'}")
        else:
            lines.append(f"Physical: {self.physical_at_estimate}")
        if self.efficiency is not None:
            stages = " x ".join(f"{s:.2f}" for s in self.stage_efficiencies)
            lines.append(f"Efficiency: {stages} = {self.efficiency:.3f}")
        if self.fit is not None:
            f = self.fit
            lines.append(
                f"Phase jitter: sigma1 = {f['sigma1_deg']:.2f} deg "
                f"[{f['sigma1_ci95_deg'][0]:.2f}, {f['sigma1_ci95_deg'][1]:.2f}], "
                f"sigma2 = {f['sigma2_deg']:.2f} deg "
                f"[{f['sigma2_ci95_deg'][0]:.2f}, {f['sigma2_ci95_deg'][1]:.2f}]")
        return "\n".join(lines) + "\n"


def report(cov, spectra: Optional[dict] = None, fit: Optional[FitResult] = None,
           stages=(), grid_step: float = 0.005, tol: float = 1e-9) -> Report:
    """Entanglement criteria, physicality and bounds for a (partial) covariance.

    Unknown ``<xA pA>``, ``<xB pB>`` are never assumed zero for the
    physicality verdict: they are checked at the measured inter-mode
    cross-term estimate and at the ends of their physical ranges.
    """
    if isinstance(cov, PartialCovariance):
        known = np.where(cov.unknown, 0.0, cov.entries)
        partial = cov if cov.unknown.any() else None
    else:
        known = cov.entries if isinstance(cov, CovarianceMatrix4) else np.asarray(cov, float)
        partial = None
    duan = duan_criterion(known)
    reid = reid_criterion(known)
    a_range = b_range = estimate = None
    ends_ok = None
    if partial is not None:
        estimate_val = 0.5 * (known[0, 3] + known[1, 2])
        estimate = (estimate_val, estimate_val)
        phys = is_physical(partial.fill(*estimate), tol)
        scan = bound_scan(partial, grid_step, tol)
        a_range, b_range = scan.a_range, scan.b_range
        if scan.feasible:
            ends_ok = all(
                best_partner(partial, axis, end)[1] >= -tol
                for axis, rng in ((0, a_range), (1, b_range)) for end in rng
            )
        else:
            ends_ok = False
    else:
        phys = is_physical(known, tol)
    tms = None
    if spectra:
        vals = [-float(np.min(s.variance_db)) for k, s in spectra.items() if k.endswith("_sq")]
        tms = max(vals) if vals else None
    eff = efficiency_budget(stages) if len(stages) else None
    return Report(duan, duan < 4.0, tuple(reid), min(reid) < 1.0, tms, phys, estimate, a_range,
                  b_range, ends_ok, eff, tuple(stages), fit.to_dict() if fit else None)
