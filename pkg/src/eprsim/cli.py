"""Command-line entry point: simulate -> process -> analyze -> fit -> report."""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from pathlib import Path

import numpy as np

from . import dsp_pipeline as dsp
from .config import ConfigError, ExperimentConfig, describe_rates, load_config
from .gaussian_core import ContractError, covariance_from_json
from .io import DataError, read_rows_csv, read_traceset, write_rows_csv, write_traceset
from .network_model import MeasurementAngles
from .tomography import (
    FIT_KEYS,
    SPECTRUM_SOURCES,
    DirectorySource,
    ExperimentModel,
    FitError,
    SimulatedSource,
    TomographyTable,
    calibration_stem,
    fit_phase_sigma,
    load_calibrations,
    predict_tomography,
    reconstruct_cov,
    report,
    signal_stem,
    spectra_from_set1,
    tomography_rows,
)

log = logging.getLogger("eprsim")

EXIT_OK, EXIT_CONFIG, EXIT_DATA = 0, 2, 3


def _sets(angle_set: str) -> tuple:
    return {"1": (1,), "2": (2,), "both": (1, 2)}[angle_set]


def _config(args) -> ExperimentConfig:
    overrides = {}
    if args.seed is not None:
        overrides["master_seed"] = args.seed
    if args.out is not None:
        overrides["output_dir"] = str(args.out)
    if getattr(args, "freq", None):
        overrides["tomography"] = {"frequencies_mhz": list(args.freq)}
    cfg = load_config(args.config, overrides)
    return cfg.with_threads(args.threads)


def _iter_datasets(cfg: ExperimentConfig, sets: tuple):
    for which in sets:
        for theta in cfg.plan.angles(which):
            yield which, theta


def cmd_simulate(cfg: ExperimentConfig, sets: tuple) -> Path:
    """Write calibration and signal trace sets for the plan."""
    root = cfg.output_dir / "traces"
    source = SimulatedSource(cfg)
    for kind in ("shot_noise", "electronic"):
        for st in "AB":
            write_traceset(source.calibration(kind, st), calibration_stem(root, kind, st))
    for which, theta in _iter_datasets(cfg, sets):
        for st, ts in zip("AB", source.signal(which, theta)):
            write_traceset(ts, signal_stem(root, which, theta, st))
        log.info("simulated set %d at %.2f deg", which, math.degrees(theta))
    (cfg.output_dir / "config_used.json").write_text(
        json.dumps(cfg.raw, indent=2, sort_keys=True, default=str) + "\n")
    return root


def _write_spectra(spectra: dict, root: Path) -> None:
    root.mkdir(parents=True, exist_ok=True)
    for name, sp in spectra.items():
        (root / f"{name}.csv").write_text(sp.to_csv())


def cmd_process(cfg: ExperimentConfig, sets: tuple, traces_dir: Path) -> Path:
    """Slope and ripple removal on every set; spectra of the set-1 end points."""
    src = DirectorySource(traces_dir)
    out = cfg.output_dir / "processed"
    for kind in ("shot_noise", "electronic"):
        for st in "AB":
            write_traceset(dsp.process(src.calibration(kind, st)), calibration_stem(out, kind, st))
    cal = load_calibrations(DirectorySource(out))
    spectra = {}
    for which, theta in _iter_datasets(cfg, sets):
        a, b = (dsp.process(x) for x in src.signal(which, theta))
        write_traceset(a, signal_stem(out, which, theta, "A"))
        write_traceset(b, signal_stem(out, which, theta, "B"))
        if which == 1:
            spectra.update(spectra_from_set1(a, b, theta, cal, cfg.window))
    _write_spectra(spectra, cfg.output_dir / "spectra")
    return out


def cmd_analyze(cfg: ExperimentConfig, sets: tuple, processed_dir: Path) -> dict:
    """Tomography table, reconstructed covariances and report."""
    src = DirectorySource(processed_dir)
    cal = load_calibrations(src)
    out = cfg.output_dir / "analysis"
    out.mkdir(parents=True, exist_ok=True)
    table = TomographyTable()
    for which, theta in _iter_datasets(cfg, sets):
        a, b = (dsp.process(x) for x in src.signal(which, theta))
        table.rows.extend(tomography_rows(a, b, which, theta, cfg.plan.frequencies, cal))
    (out / "tomography.csv").write_text(table.to_csv())
    results = {}
    for f in cfg.plan.frequencies:
        tag = f"{f / 1e6:g}MHz"
        try:
            cov = reconstruct_cov(table, f)
        except ContractError as exc:
            log.warning("no covariance at %s: %s", tag, exc)
            continue
        (out / f"covariance_{tag}.json").write_text(cov.to_json() + "\n")
        rep = report(cov, stages=cfg.stage_efficiencies)
        (out / f"report_{tag}.json").write_text(rep.to_json() + "\n")
        (out / f"report_{tag}.txt").write_text(rep.to_text())
        results[tag] = rep
    return results


def _read_spectra(root: Path):
    spectra, errs, freqs = {}, {}, None
    for key in FIT_KEYS:
        rows = read_rows_csv(root / f"{key}.csv")
        f = np.array([float(r["freq_MHz"]) for r in rows]) * 1e6
        if freqs is not None and (f.shape != freqs.shape or not np.allclose(f, freqs)):
            raise DataError("spectra are not on a common grid")
        freqs = f
        spectra[key] = 10 ** (np.array([float(r["value_dB"]) for r in rows]) / 10)
        errs[key] = np.array([float(r["stderr_dB"]) for r in rows])
    return freqs, spectra, errs


def cmd_fit(cfg: ExperimentConfig, spectra_dir: Path):
    """Fit phase-jitter widths to the four single-mode spectra within the analysis band."""
    freqs, spectra, errs = _read_spectra(spectra_dir)
    band = (freqs >= cfg.band[0]) & (freqs <= cfg.band[1])
    if band.sum() < 2:
        raise DataError("fewer than two spectral points inside the analysis band")
    excess = cfg.delay_excess(freqs[band])
    fit = fit_phase_sigma(freqs[band], {k: v[band] for k, v in spectra.items()}, cfg.opo,
                          cfg.seed_model, delay_excess=(excess, excess), mode=cfg.fit_mode,
                          stderr_db={k: v[band] for k, v in errs.items()},
                          weighted=cfg.fit_weighted,
                          phase_offset=float(np.mean([c.phase_offset for c in cfg.channels])))
    out = cfg.output_dir / "fit"
    out.mkdir(parents=True, exist_ok=True)
    (out / "fit.json").write_text(json.dumps(fit.to_dict(), indent=2, sort_keys=True) + "\n")
    return fit


def _figure_rows_tomography(cfg, table: TomographyTable):
    model = ExperimentModel.from_config(cfg)
    rows = []
    for f in cfg.plan.frequencies:
        pred = predict_tomography(model, cfg.plan, f)
        for r in pred.rows:
            try:
                m = table.get(r.which, r.theta, f)
                meas = (10 * math.log10(m.sum_var / 2), 10 * math.log10(m.diff_var / 2))
            except KeyError:
                meas = (math.nan, math.nan)
            rows.append((r.which, math.degrees(r.theta), f / 1e6, *meas,
                         10 * math.log10(r.sum_var / 2), 10 * math.log10(r.diff_var / 2)))
    return rows


def _figure_rows_spectra(cfg, spectra_dir: Path):
    model = ExperimentModel.from_config(cfg)
    rows = []
    for name, (theta, sign) in SPECTRUM_SOURCES.items():
        path = spectra_dir / f"{name}.csv"
        if not path.exists():
            continue
        meas = read_rows_csv(path)
        f = np.array([float(r["freq_MHz"]) for r in meas]) * 1e6
        pred = model.predicted_spectrum(f, MeasurementAngles.set1(theta), sign)
        for r, p in zip(meas, pred):
            rows.append((name, float(r["freq_MHz"]), float(r["value_dB"]), float(r["stderr_dB"]),
                         10 * math.log10(p)))
    return rows


def _figure_rows_processing(traces_dir: Path):
    """Quantile bands before and after processing of the set-1, 0 degree station-A traces."""
    raw = read_traceset(signal_stem(traces_dir, 1, 0.0, "A"))
    rows = []
    for stage, data in (("raw", raw), ("processed", dsp.process(raw))):
        h = dsp.temporal_histogram(data)
        for j, t in enumerate(h.time):
            rows.append((stage, t * 1e9, *h.quantiles[:, j]))
    return rows


def cmd_report(cfg: ExperimentConfig, artifacts: Path) -> Path:
    """Consolidated report plus figure-data CSVs."""
    out = artifacts / "report"
    out.mkdir(parents=True, exist_ok=True)
    summary = {"rates": describe_rates(cfg)}
    table_path = artifacts / "analysis" / "tomography.csv"
    table = TomographyTable.from_csv(table_path.read_text()) if table_path.exists() else TomographyTable()
    fit = None
    fit_path = artifacts / "fit" / "fit.json"
    if fit_path.exists():
        fit = json.loads(fit_path.read_text())
    spectra = {}
    for name in SPECTRUM_SOURCES:
        p = artifacts / "spectra" / f"{name}.csv"
        if p.exists():
            rows = read_rows_csv(p)
            spectra[name] = dsp.SpectrumEstimate(
                np.array([float(r["freq_MHz"]) * 1e6 for r in rows]),
                10 ** (np.array([float(r["value_dB"]) for r in rows]) / 10),
                np.zeros(len(rows)))
    text = []
    for f in cfg.plan.frequencies:
        tag = f"{f / 1e6:g}MHz"
        cov_path = artifacts / "analysis" / f"covariance_{tag}.json"
        if not cov_path.exists():
            continue
        cov = covariance_from_json(cov_path.read_text())
        rep = report(cov, spectra, None, cfg.stage_efficiencies)
        rep.fit = fit
        summary[tag] = rep.to_dict()
        text.append(f"== {tag} ==\n{rep.to_text()}")
    (out / "report.json").write_text(json.dumps(summary, indent=2, sort_keys=True, default=str) + "\n")
    (out / "report.txt").write_text("\n".join(text) or "no covariance results found\n")
    write_rows_csv(out / "fig3_tomography.csv",
                   ["set", "theta_deg", "freq_MHz", "sum_dB", "diff_dB", "pred_sum_dB", "pred_diff_dB"],
                   _figure_rows_tomography(cfg, table))
    write_rows_csv(out / "fig4_spectra.csv",
                   ["spectrum", "freq_MHz", "value_dB", "stderr_dB", "model_dB"],
                   _figure_rows_spectra(cfg, artifacts / "spectra"))
    traces = artifacts / "traces"
    if Path(f"{signal_stem(traces, 1, 0.0, 'A')}.json").exists():
        write_rows_csv(out / "fig5_processing.csv",
                       ["stage", "time_ns", "q02.5", "q16", "q50", "q84", "q97.5"],
                       _figure_rows_processing(traces))
    return out


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="YAML profile merged over the defaults")
    common.add_argument("--seed", type=int, help="master seed override")
    common.add_argument("--out", type=Path, help="output directory override")
    common.add_argument("--threads", type=int, default=1)
    common.add_argument("--angle-set", choices=("1", "2", "both"), default="both")
    common.add_argument("--freq", type=float, nargs="+", metavar="MHZ",
                        help="analysis frequencies in MHz")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="eprsim", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("simulate", parents=[common], help="synthesize trace sets")
    pr = sub.add_parser("process", parents=[common], help="slope/ripple removal and spectra")
    pr.add_argument("--traces", type=Path, help="trace directory (default OUT/traces)")
    an = sub.add_parser("analyze", parents=[common], help="tomography and covariance")
    an.add_argument("--processed", type=Path, help="processed directory (default OUT/processed)")
    fi = sub.add_parser("fit", parents=[common], help="phase-fluctuation fit")
    fi.add_argument("--spectra", type=Path, help="spectra directory (default OUT/spectra)")
    rp = sub.add_parser("report", parents=[common], help="consolidated report and figure data")
    rp.add_argument("--artifacts", type=Path, help="artifact directory (default OUT)")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        cfg = _config(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    sets = _sets(args.angle_set)
    out = cfg.output_dir
    try:
        if args.command == "simulate":
            print(cmd_simulate(cfg, sets))
        elif args.command == "process":
            print(cmd_process(cfg, sets, args.traces or out / "traces"))
        elif args.command == "analyze":
            for tag, rep in cmd_analyze(cfg, sets, args.processed or out / "processed").items():
                print(f"== {tag} ==\n{rep.to_text()}", end="")
        elif args.command == "fit":
            fit = cmd_fit(cfg, args.spectra or out / "spectra")
            print(json.dumps(fit.to_dict(), indent=2))
        elif args.command == "report":
            print(cmd_report(cfg, args.artifacts or out))
    except (DataError, ContractError, FitError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except OSError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
