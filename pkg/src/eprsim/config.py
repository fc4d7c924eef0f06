"""Experiment configuration: YAML profile merged over the shipped defaults."""

from __future__ import annotations

import copy
import math
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Optional

import numpy as np
import yaml

from .gaussian_core import ContractError
from .network_model import ChannelParams
from .opo_model import (
    TWO_PI,
    CavityGeometry,
    NoiseProfile,
    OpoParams,
    SeedNoiseModel,
    decay_rate,
    efficiency_budget,
    kq_from_seed_spectrum,
)
from .trace_synth import ArtifactModel, DampedSine, SwitchTiming, SynthOptions

SCHEMA_VERSION = 1
RIPPLE_KEYS = {"amplitude", "frequency_mhz", "decay_ns", "phase_rad"}


class ConfigError(Exception):
    pass


def default_dict() -> dict:
    text = resources.files("eprsim").joinpath("defaults.yaml").read_text()
    return yaml.safe_load(text)


def _merge(base: dict, override: dict, where: str = "") -> dict:
    out = copy.deepcopy(base)
    for key, val in override.items():
        path = f"{where}.{key}" if where else key
        if key not in base:
            raise ConfigError(f"unknown config key '{path}'")
        if isinstance(base[key], dict) and base[key] and not isinstance(val, dict):
            raise ConfigError(f"'{path}' must be a mapping")
        if isinstance(base[key], dict) and base[key]:
            out[key] = _merge(base[key], val, path)
        else:
            out[key] = val
    return out


@dataclass(frozen=True)
class TomographyPlan:
    set1_angles: tuple  # rad
    set2_angles: tuple  # rad
    frequencies: tuple  # Hz

    def __post_init__(self):
        for name in ("set1_angles", "set2_angles"):
            vals = getattr(self, name)
            if len(vals) == 0:
                raise ContractError(f"{name} must not be empty")
            if min(vals) < -1e-12 or max(vals) > math.pi / 2 + 1e-12:
                raise ContractError(f"{name} must lie within [0, 90] degrees")
        if len(self.frequencies) == 0:
            raise ContractError("need at least one analysis frequency")

    @classmethod
    def from_degrees(cls, set1, set2, freqs_mhz) -> "TomographyPlan":
        return cls(
            tuple(math.radians(float(a)) for a in set1),
            tuple(math.radians(float(a)) for a in set2),
            tuple(float(f) * 1e6 for f in freqs_mhz),
        )

    def angles(self, which: int) -> tuple:
        return self.set1_angles if which == 1 else self.set2_angles


@dataclass(frozen=True)
class ExperimentConfig:
    raw: dict
    geometry: CavityGeometry
    opo: OpoParams
    stage_efficiencies: tuple
    seed_model: SeedNoiseModel
    seed_profile: Optional[NoiseProfile]
    delay_excess: NoiseProfile
    channels: tuple
    timing: SwitchTiming
    artifacts: ArtifactModel
    synth: SynthOptions
    plan: TomographyPlan
    master_seed: int
    output_dir: Path
    window: str
    band: tuple  # Hz
    fit_mode: str
    fit_weighted: bool

    @property
    def gamma(self) -> float:
        return self.opo.gamma

    def with_threads(self, threads: int) -> "ExperimentConfig":
        from dataclasses import replace

        return replace(self, synth=replace(self.synth, threads=max(1, int(threads))))


def _profile(d: dict) -> NoiseProfile:
    return NoiseProfile(
        one_over_f=float(d["one_over_f"]),
        f_min_hz=float(d["f_min_mhz"]) * 1e6,
        bump_amplitude=float(d["bump_amplitude"]),
        bump_center_hz=float(d["bump_center_mhz"]) * 1e6,
        bump_width_hz=float(d["bump_width_mhz"]) * 1e6,
    )


def _ripple(items) -> tuple:
    terms = []
    for i, item in enumerate(items or []):
        if not isinstance(item, dict) or set(item) != RIPPLE_KEYS:
            raise ConfigError(f"ripple[{i}] needs exactly the keys {sorted(RIPPLE_KEYS)}")
        terms.append(DampedSine(float(item["amplitude"]), float(item["frequency_mhz"]) * 1e6,
                                float(item["decay_ns"]) * 1e-9, float(item["phase_rad"])))
    return tuple(terms)


def build_config(raw: dict, base_dir: Optional[Path] = None) -> ExperimentConfig:
    """Typed configuration from a merged dictionary; raises ConfigError."""
    try:
        if raw.get("schema_version") != SCHEMA_VERSION:
            raise ConfigError(f"unsupported schema_version {raw.get('schema_version')!r}")
        cav = raw["cavity"]
        geom = CavityGeometry(float(cav["coupling_transmission"]), float(cav["intracavity_loss"]),
                              float(cav["round_trip_length_m"]))
        stages = tuple(float(s) for s in raw["efficiency"]["stages"])
        eta = efficiency_budget(stages)
        pump = raw["pump"]
        opo = OpoParams.from_geometry(geom, float(pump["power_w"]), float(pump["threshold_w"]), eta,
                                      squeezed_quadrature=raw["squeezed_quadrature"])
        t = raw["timing"]
        timing = SwitchTiming(
            switch_frequency=float(t["switch_frequency_hz"]),
            window_length=float(t["window_length_ns"]) * 1e-9,
            extract_length=float(t["extract_length_ns"]) * 1e-9,
            traces_per_set=int(t["traces_per_set"]),
            sample_rate=float(t["sample_rate_msps"]) * 1e6,
        )
        sn = raw["seed_noise"]
        grid_hz = np.linspace(0.0, timing.sample_rate / 2, 4001)
        if sn.get("csv"):
            from .io import read_seed_csv

            csv_path = Path(sn["csv"])
            if base_dir is not None and not csv_path.is_absolute():
                csv_path = base_dir / csv_path
            f_mhz, s0 = read_seed_csv(csv_path)
            seed_model = kq_from_seed_spectrum(TWO_PI * 1e6 * f_mhz, s0, opo.gamma)
            seed_profile = None
        else:
            seed_profile = _profile(sn)
            seed_model = SeedNoiseModel.from_excess(TWO_PI * grid_hz, seed_profile(grid_hz), opo.gamma)
        channels = tuple(
            ChannelParams(float(p["eta"]), math.radians(float(p["phase_offset_deg"])),
                          math.radians(float(p["phase_jitter_deg"])))
            for p in (raw["paths"]["direct"], raw["paths"]["delay"])
        )
        a = raw["artifacts"]
        artifacts = ArtifactModel(
            coherent_offset=float(a["coherent_offset"]),
            slope_decay=float(a["slope_decay_per_us"]) * 1e6,
            slope_jitter_sigma=float(a["slope_jitter_per_us"]) * 1e6,
            ripple=_ripple(a["ripple"]),
            electronic_noise_db=float(a["electronic_noise_db"]),
        )
        s = raw["synthesis"]
        synth = SynthOptions(oversample=int(s["oversample"]), chunk_size=int(s["chunk_size"]))
        if synth.oversample < 1 or synth.chunk_size < 1:
            raise ConfigError("synthesis oversample and chunk_size must be >= 1")
        tp = raw["tomography"]
        plan = TomographyPlan.from_degrees(tp["set1_angles_deg"], tp["set2_angles_deg"],
                                           tp["frequencies_mhz"])
        for f in plan.frequencies:
            if not 0 < f < timing.sample_rate / 2:
                raise ConfigError(f"analysis frequency {f / 1e6} MHz outside (0, Nyquist)")
        an = raw["analysis"]
        if an["fit_mode"] not in ("approx", "exact"):
            raise ConfigError("analysis.fit_mode must be 'approx' or 'exact'")
        if an["window"] not in ("rect", "hann"):
            raise ConfigError("analysis.window must be 'rect' or 'hann'")
        band = tuple(float(v) * 1e6 for v in an["spectrum_band_mhz"])
        if len(band) != 2 or band[0] >= band[1]:
            raise ConfigError("analysis.spectrum_band_mhz must be [low, high]")
        return ExperimentConfig(
            raw=raw, geometry=geom, opo=opo, stage_efficiencies=stages, seed_model=seed_model,
            seed_profile=seed_profile, delay_excess=_profile(raw["delay_excess"]),
            channels=channels, timing=timing, artifacts=artifacts, synth=synth, plan=plan,
            master_seed=int(raw["master_seed"]), output_dir=Path(raw["output_dir"]),
            window=an["window"], band=band, fit_mode=an["fit_mode"],
            fit_weighted=bool(an["fit_weighted"]),
        )
    except ConfigError:
        raise
    except (ContractError, KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"invalid configuration: {exc}") from exc


def load_config(path=None, overrides: Optional[dict] = None) -> ExperimentConfig:
    """Load a YAML profile over the defaults; unknown keys are rejected."""
    raw = default_dict()
    base_dir = None
    if path is not None:
        path = Path(path)
        try:
            user = yaml.safe_load(path.read_text()) or {}
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        except yaml.YAMLError as exc:
            raise ConfigError(f"cannot parse config {path}: {exc}") from exc
        if not isinstance(user, dict):
            raise ConfigError("config file must hold a mapping")
        raw = _merge(raw, user)
        base_dir = path.parent
    if overrides:
        raw = _merge(raw, overrides)
    return build_config(raw, base_dir)


def describe_rates(cfg: ExperimentConfig) -> dict:
    """Derived rates in MHz (divided by 2 pi) for reports."""
    return {
        "gamma_mhz": decay_rate(cfg.geometry) / TWO_PI / 1e6,
        "epsilon_mhz": cfg.opo.epsilon / TWO_PI / 1e6,
        "eta": cfg.opo.eta,
    }
