"""Command-line driver: ``casimirlab {epsilon,force-curve,simulate,analyze,compare}``.

Exit codes: 0 success, 1 invalid input or configuration, 2 numerical
failure, 3 file I/O failure. On failure a JSON error document is printed to
stderr and, when possible, written to ``<out>/error.json``.
"""
from __future__ import annotations

import argparse
import glob
import json
import math
import os
import sys
import warnings
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from . import __version__, analysis, io, rig
from .auxforce import SeriesConvergenceError
from .config import ConfigError, PipelineConfig
from .fitting import FitError
from .lifshitz import PFA_LIMIT, LifshitzError, pressure_curve
from .materials import EV_TO_RAD_S, eval_epsilon

EXIT_OK, EXIT_VALIDATION, EXIT_NUMERICAL, EXIT_IO = 0, 1, 2, 3


class UsageError(ValueError):
    pass


class InputFileError(OSError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _global_flags(p, suppress):
    d = (lambda v: argparse.SUPPRESS) if suppress else (lambda v: v)
    p.add_argument("--config", default=d(None), help="pipeline config file (INI)")
    p.add_argument("--seed", type=int, default=d(None), help="master random seed")
    p.add_argument("--out", default=d("."), help="output directory")
    p.add_argument("--format", choices=("csv", "structured"), default=d("csv"), help="output format")
    p.add_argument("--threads", type=int, default=d(None), help="worker threads")


def build_parser() -> argparse.ArgumentParser:
    main = _Parser(prog="casimirlab", description=__doc__.splitlines()[0])
    main.add_argument("--version", action="version", version=f"casimirlab {__version__}")
    _global_flags(main, suppress=False)
    sub = main.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("epsilon", help="tabulate eps(i xi) of a material")
    _global_flags(p, suppress=True)
    p.add_argument("--material", required=True)
    p.add_argument("--xi-min", type=float, default=1e13)
    p.add_argument("--xi-max", type=float, default=1e17)
    p.add_argument("--points", type=int, default=50)
    p.add_argument("--xi-unit", choices=("rad_s", "eV"), default="rad_s")

    p = sub.add_parser("force-curve", help="Lifshitz pressure and PFA sphere-plate force versus separation")
    _global_flags(p, suppress=True)
    p.add_argument("--pair", action="append", help="sphere:plate, repeatable (default from config)")
    p.add_argument("--d-min", type=float)
    p.add_argument("--d-max", type=float)
    p.add_argument("--points", type=int)
    p.add_argument("--spacing", choices=("geometric", "linear"))
    p.add_argument("--temperature", type=float)
    p.add_argument("--zero-frequency", choices=("drude", "plasma"))
    p.add_argument("--radius", type=float)
    p.add_argument("--plot", action="store_true", help="also write force_curve.svg")

    p = sub.add_parser("simulate", help="simulate a series of calibration/measurement runs")
    _global_flags(p, suppress=True)
    p.add_argument("--runs", type=int)
    p.add_argument("--plate")
    p.add_argument("--preset", choices=("none", "paper"))

    p = sub.add_parser("analyze", help="calibrate runs and compute ensemble statistics")
    _global_flags(p, suppress=True)
    p.add_argument("inputs", nargs="+", help="run CSV files, bundled runs JSON, or glob patterns")
    p.add_argument("--probe-d", type=float)
    p.add_argument("--window", type=float)
    p.add_argument("--exponent", type=float)
    p.add_argument("--weighting", choices=("uniform", "relative"))
    p.add_argument("--min-curves", type=int)
    p.add_argument("--no-plot", action="store_true")

    p = sub.add_parser("compare", help="ratio of two ensemble means (second / first)")
    _global_flags(p, suppress=True)
    p.add_argument("reference", help="ensemble or analysis JSON of the reference pair")
    p.add_argument("other", help="ensemble or analysis JSON of the compared pair")
    return main


# ---------------------------------------------------------------------------


def _load_config(args) -> PipelineConfig:
    cfg = PipelineConfig.from_file(args.config) if args.config else PipelineConfig.from_text("")
    cfg = cfg.override("pipeline", seed=args.seed, threads=args.threads)
    return cfg


def _provenance(cfg: PipelineConfig, command: str, extra=None) -> dict:
    meta = {
        "code_version": __version__,
        "command": command,
        "config": cfg.to_dict(),
        "config_hash": cfg.hash(),
    }
    meta.update(extra or {})
    return meta


def _write(args, stem, columns, meta, structured_doc=None):
    """Write one result as CSV or as a structured JSON document."""
    if args.format == "csv":
        path = os.path.join(args.out, stem + ".csv")
        io.write_table(path, columns, meta)
    else:
        path = os.path.join(args.out, stem + ".json")
        doc = dict(meta)
        doc.update(structured_doc if structured_doc is not None else {"columns": columns})
        io.write_json(path, doc)
    return path


def cmd_epsilon(args, cfg):
    lib = cfg.library()
    model = lib[args.material]
    if args.points < 1:
        raise UsageError("--points must be >= 1")
    lo, hi = args.xi_min, args.xi_max
    if not 0 < lo <= hi:
        raise UsageError("need 0 < xi-min <= xi-max")
    xi = np.geomspace(lo, hi, args.points) if args.points > 1 else np.array([lo])
    xi_rad = xi * EV_TO_RAD_S if args.xi_unit == "eV" else xi
    eps = np.atleast_1d(eval_epsilon(model, xi_rad))
    meta = _provenance(cfg, "epsilon", {"material": args.material, "schema": io.SCHEMA_EPSILON})
    return [_write(args, "epsilon", {"xi_rad_s": xi_rad, "epsilon": eps}, meta)]


def cmd_force_curve(args, cfg):
    cfg = cfg.override(
        "sweep",
        d_min=args.d_min,
        d_max=args.d_max,
        points=args.points,
        spacing=args.spacing,
        pairs=args.pair,
    )
    cfg = cfg.override("lifshitz", temperature=args.temperature, zero_frequency=args.zero_frequency)
    cfg = cfg.override("geometry", radius=args.radius)
    lib, grid, quad = cfg.library(), cfg.grid(), cfg.quadrature()
    R = cfg.sections["geometry"]["radius"]
    ito_t = cfg.sections["geometry"]["ito_thickness"]
    threads = cfg.sections["pipeline"]["threads"]
    d = np.sort(cfg.separations())
    policy = grid.zero_frequency

    results = {}
    for sphere, plate in cfg.pairs():
        m1 = rig.build_mirror(sphere, lib, ito_t)
        m2 = rig.build_mirror(plate, lib, ito_t)
        P = pressure_curve(m1, m2, d, grid, quad, "pressure", threads)
        E = pressure_curve(m1, m2, d, grid, quad, "energy", threads)
        results[f"{sphere}:{plate}"] = (P, E)

    ref = next(iter(results.values()))[0]
    cols = {k: [] for k in ("d_nm", "pressure_Pa", "force_N", "force_gradient_N_per_m", "material_pair",
                            "zero_freq_policy", "pressure_ratio_to_first_pair")}
    structured = []
    for pair, (P, E) in results.items():
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = np.where(ref != 0, P / np.where(ref != 0, ref, 1.0), math.nan)
        F = 2 * math.pi * R * E
        G = -2 * math.pi * R * P
        cols["d_nm"] += list(d * 1e9)
        cols["pressure_Pa"] += list(P)
        cols["force_N"] += list(F)
        cols["force_gradient_N_per_m"] += list(G)
        cols["material_pair"] += [pair] * d.size
        cols["zero_freq_policy"] += [policy] * d.size
        cols["pressure_ratio_to_first_pair"] += list(ratio)
        structured.append(
            {"material_pair": pair, "zero_freq_policy": policy, "d_m": d, "pressure_Pa": P, "force_N": F,
             "force_gradient_N_per_m": G, "pressure_ratio_to_first_pair": ratio}
        )
    pfa = (d / R > PFA_LIMIT).tolist()
    meta = _provenance(cfg, "force-curve", {"schema": io.SCHEMA_FORCE_CURVE, "radius_m": R,
                                            "pfa_limit": PFA_LIMIT, "pfa_warning": any(pfa),
                                            "reference_pair": next(iter(results))})
    outputs = [_write(args, "force_curve", cols, meta, {"curves": structured})]
    if args.plot:
        from .plotting import plot_force_curves

        path = os.path.join(args.out, "force_curve.svg")
        plot_force_curves(path, {k: (d, -2 * math.pi * P) for k, (P, _) in results.items()},
                          {"command": "force-curve", "config_hash": meta["config_hash"], "code_version": __version__})
        outputs.append(path)
    return outputs


def _gradient_model(rcfg: rig.RigConfig, cfg: PipelineConfig, n_runs: int):
    d = np.asarray(rcfg.d0) - np.asarray(rcfg.set_points)
    d_lo = float(np.min(d))
    d_hi = float(np.max(d))
    if not rcfg.track_drift:
        d_hi += abs(rcfg.drift_per_run) * max(n_runs - 1, 0)
        d_lo -= max(-rcfg.drift_per_run, 0.0) * max(n_runs - 1, 0)
    if d_lo <= 0:
        return None  # contact: simulate_run reports it
    return rig.casimir_gradient_model(
        rcfg, cfg.library(), cfg.quadrature(), d_min=min(20e-9, 0.5 * d_lo), d_max=max(2e-6, 1.2 * d_hi),
        workers=cfg.sections["pipeline"]["threads"],
    )


def cmd_simulate(args, cfg):
    cfg = cfg.override("rig", plate=args.plate, preset=args.preset,
                       runs_per_series=args.runs)
    rcfg = cfg.rig_config()
    n_runs = rcfg.runs_per_series
    if n_runs < 1:
        raise UsageError("--runs must be >= 1")
    seed = cfg.sections["pipeline"]["seed"]
    threads = cfg.sections["pipeline"]["threads"]
    # contact is a configuration error; check before the expensive table
    for i in (0, n_runs - 1):
        _, _, d = rig.run_geometry(rcfg, i)
        if np.any(d <= 0):
            raise rig.ContactError(f"run {i}: configuration drives the sphere into contact (min d = {d.min():.3e} m)")
    grad = _gradient_model(rcfg, cfg, n_runs)
    runs, truths = rig.simulate_series(rcfg, grad, seed, n_runs, threads)

    meta = _provenance(cfg, "simulate", {"schema": io.SCHEMA_RUNS, "master_seed": seed, "rig": rcfg.to_dict()})
    outputs = []
    run_dir = os.path.join(args.out, "runs")
    for r in runs:
        m = dict(meta, run_index=r.run_index, seed=r.seed, quasi_static_warning=r.quasi_static_warning)
        cols = r.to_dict()
        cols = {c: cols[c] for c in rig.RunRecord.COLUMNS}
        path = os.path.join(run_dir, f"run_{r.run_index:04d}.csv")
        io.write_table(path, cols, m)
        outputs.append(path)
    bundle = dict(meta, runs=[dict(r.to_dict(), quasi_static_warning=r.quasi_static_warning) for r in runs])
    path = os.path.join(args.out, "runs.json")
    io.write_json(path, bundle)
    outputs.append(path)
    truth = {
        "schema": io.SCHEMA_TRUTH,
        "notice": "TEST-ONLY ground truth; analysis must not read this file",
        "config_hash": meta["config_hash"],
        "code_version": __version__,
        "truth": [t.to_dict() for t in truths],
    }
    path = os.path.join(args.out, "truth.TEST-ONLY.json")
    io.write_json(path, truth)
    outputs.append(path)
    return outputs


def _expand_inputs(patterns):
    files = []
    for pat in patterns:
        if os.path.isdir(pat):
            hits = sorted(glob.glob(os.path.join(pat, "run_*.csv")))
            if not hits and os.path.exists(os.path.join(pat, "runs.json")):
                hits = [os.path.join(pat, "runs.json")]
        else:
            hits = sorted(glob.glob(pat))
        files.extend(hits)
    if not files:
        raise InputFileError(f"no input files match {list(patterns)}")
    return files


def load_runs(paths) -> list[tuple[rig.RunRecord, rig.RigConfig]]:
    """Read run CSV files and/or bundled runs JSON documents."""
    out = []
    for path in paths:
        try:
            if path.endswith(".json"):
                doc = io.read_json(path)
                if "runs" not in doc or "rig" not in doc:
                    raise InputFileError(f"{path}: not a bundled runs document")
                rcfg = rig.RigConfig.from_dict(doc["rig"])
                for rd in doc["runs"]:
                    out.append((rig.RunRecord.from_dict(rd, doc["rig"]), rcfg))
            else:
                meta, cols = io.read_table(path)
                if "rig" not in meta:
                    raise InputFileError(f"{path}: run file lacks the rig configuration header")
                data = dict(cols, run_index=meta["run_index"], seed=meta["seed"])
                out.append((rig.RunRecord.from_dict(data, meta["rig"]), rig.RigConfig.from_dict(meta["rig"])))
        except (KeyError, json.JSONDecodeError, UnicodeDecodeError) as exc:
            raise InputFileError(f"{path}: unreadable run data ({exc})") from None
    out.sort(key=lambda rc: rc[0].run_index)
    return out


def cmd_analyze(args, cfg):
    cfg = cfg.override("analysis", probe_d=args.probe_d, window=args.window, exponent=args.exponent,
                       weighting=args.weighting, min_curves=args.min_curves)
    a = cfg.sections["analysis"]
    files = _expand_inputs(args.inputs)
    runs = load_runs(files)
    threads = cfg.sections["pipeline"]["threads"]

    def one(item):
        run, rcfg = item
        try:
            cal = analysis.fit_calibration(run, rcfg, a["weighting"])
            cas = analysis.extract_force_gradient(run, cal, rcfg, a["background_limit"])
            hyd = analysis.extract_hydrodynamic(run, cal, rcfg)
            return run.run_index, cal, cas, hyd, None
        except (analysis.CalibrationError, FitError, SeriesConvergenceError) as exc:
            return run.run_index, None, None, None, f"{type(exc).__name__}: {exc}"

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            results = list(ex.map(one, runs))
    else:
        results = [one(r) for r in runs]
    ok = [r for r in results if r[4] is None]
    failed = {r[0]: r[4] for r in results if r[4] is not None}
    if not ok:
        raise analysis.CalibrationError(f"calibration failed for all {len(results)} runs")
    stats = analysis.ensemble_statistics([r[2] for r in ok], a["probe_d"], a["window"], a["exponent"],
                                         a["min_curves"])
    d0s = np.array([r[1].d0_est for r in ok])
    idx = np.array([r[0] for r in ok], dtype=float)
    drift = float(np.polyfit(idx, d0s, 1)[0]) if len(ok) > 1 else 0.0
    rig_cfgs = {io.config_hash(rc.to_dict()): rc.to_dict() for _, rc in runs}

    meta = _provenance(cfg, "analyze", {
        "schema": io.SCHEMA_ANALYSIS,
        "inputs": [os.path.basename(f) for f in files],
        "rig_configs": rig_cfgs,
        "failed_runs": {str(k): v for k, v in failed.items()},
        "histogram_bin_rule": stats.bin_rule,
    })
    ens = {"ensemble": stats.to_dict(), "drift_slope_m_per_run": drift,
           "std_over_mean": stats.std / abs(stats.mean) if stats.mean else math.nan,
           "sem_over_mean": stats.sem / abs(stats.mean) if stats.mean else math.nan}

    cal_cols = {"run_index": [r[0] for r in ok], "d0_est_m": d0s, "beta_est_V_per_N": [r[1].beta_est for r in ok],
                "d0_sigma_m": [r[1].d0_sigma for r in ok], "beta_sigma_V_per_N": [r[1].beta_sigma for r in ok],
                "residual_norm": [r[1].residual_norm for r in ok]}
    curve_cols = {"run_index": [], "d_nm": [], "force_gradient_over_R_Pa": [], "background_flag": []}
    hyd_cols = {"run_index": [], "d_nm": [], "hydrodynamic_amplitude_N": []}
    for run_id, _, cas, hyd, _ in ok:
        curve_cols["run_index"] += [run_id] * cas.d.size
        curve_cols["d_nm"] += list(cas.d * 1e9)
        curve_cols["force_gradient_over_R_Pa"] += list(cas.value)
        curve_cols["background_flag"] += [bool(f) for f in cas.flags]
        hyd_cols["run_index"] += [run_id] * hyd.d.size
        hyd_cols["d_nm"] += list(hyd.d * 1e9)
        hyd_cols["hydrodynamic_amplitude_N"] += list(hyd.value)

    outputs = []
    if args.format == "csv":
        for stem, cols in (("calibration", cal_cols), ("casimir_curves", curve_cols), ("hydrodynamic_curves", hyd_cols)):
            path = os.path.join(args.out, stem + ".csv")
            io.write_table(path, cols, meta)
            outputs.append(path)
        path = os.path.join(args.out, "ensemble.json")
        io.write_json(path, dict(meta, **ens))
        outputs.append(path)
    else:
        path = os.path.join(args.out, "analysis.json")
        io.write_json(path, dict(meta, **ens, calibration=cal_cols, casimir_curves=curve_cols,
                                 hydrodynamic_curves=hyd_cols))
        outputs.append(path)
    if not args.no_plot:
        from .plotting import plot_histogram

        path = os.path.join(args.out, "histogram.svg")
        plot_histogram(path, stats, {"command": "analyze", "config_hash": meta["config_hash"],
                                     "code_version": __version__, "bin_rule": stats.bin_rule})
        outputs.append(path)
    return outputs


def _read_ensemble(path):
    try:
        doc = io.read_json(path)
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise InputFileError(f"{path}: not JSON ({exc})") from None
    if "ensemble" not in doc:
        raise InputFileError(f"{path}: no ensemble statistics in document")
    return analysis.EnsembleStats.from_dict(doc["ensemble"]), doc.get("config_hash")


def cmd_compare(args, cfg):
    a, ha = _read_ensemble(args.reference)
    b, hb = _read_ensemble(args.other)
    r = analysis.compare_pairs(a, b)
    meta = _provenance(cfg, "compare", {"schema": io.SCHEMA_COMPARE, "reference": os.path.basename(args.reference),
                                        "other": os.path.basename(args.other),
                                        "source_config_hashes": [ha, hb]})
    cols = {"probe_d_m": [a.probe_d], "mean_reference": [a.mean], "mean_other": [b.mean],
            "ratio": [r.value], "ratio_uncertainty": [r.uncertainty]}
    return [_write(args, "compare", cols, meta, {"ratio": r.value, "ratio_uncertainty": r.uncertainty,
                                                 "probe_d_m": a.probe_d, "mean_reference": a.mean,
                                                 "mean_other": b.mean})]


COMMANDS = {
    "epsilon": cmd_epsilon,
    "force-curve": cmd_force_curve,
    "simulate": cmd_simulate,
    "analyze": cmd_analyze,
    "compare": cmd_compare,
}

_NUMERICAL = (LifshitzError, SeriesConvergenceError, analysis.CalibrationError, FitError, ArithmeticError)


def _classify(exc) -> int:
    if isinstance(exc, rig.ContactError):
        return EXIT_VALIDATION
    if isinstance(exc, _NUMERICAL):
        return EXIT_NUMERICAL
    if isinstance(exc, OSError):
        return EXIT_IO
    if isinstance(exc, (ValueError, KeyError, TypeError)):
        return EXIT_VALIDATION
    return EXIT_NUMERICAL


def _error_document(exc, code, command):
    return {
        "schema": io.SCHEMA_ERROR,
        "code_version": __version__,
        "command": command,
        "exit_code": code,
        "category": {1: "validation", 2: "numerical", 3: "io"}[code],
        "error_type": type(exc).__name__,
        "message": str(exc),
    }


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    command, out = None, None
    try:
        args = build_parser().parse_args(argv)
        command, out = args.command, args.out
        cfg = _load_config(args)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            outputs = COMMANDS[args.command](args, cfg)
        print(json.dumps({"command": args.command, "status": "ok", "outputs": outputs}))
        return EXIT_OK
    except SystemExit as exc:  # --help / --version
        return int(exc.code or 0)
    except ConfigError as exc:
        code, err = EXIT_VALIDATION, exc
    except Exception as exc:  # noqa: BLE001 - mapped onto the exit-code contract
        code, err = _classify(exc), exc
    doc = _error_document(err, code, command)
    print(json.dumps(doc, sort_keys=True), file=sys.stderr)
    if out:
        try:
            io.write_json(os.path.join(out, "error.json"), doc)
        except OSError:
            pass
    return code


def main_entry():
    sys.exit(main())


if __name__ == "__main__":
    main_entry()
