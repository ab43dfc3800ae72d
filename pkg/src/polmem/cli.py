"""Command-line front end: simulate runs, analyze them, emit model curves.

Subcommands
-----------
simulate     generate a dataset (histogram, reference, polarimetry sweep,
             decay series, or background sweep) from a config JSON
analyze      build the six-state summary report from simulated files
model-curve  emit the detection-model (p, sbr, fidelity) curve as CSV
fit          run one of the estimation fits on a saved dataset

Structured objects are JSON, plot-ready series are CSV.  Every stochastic
command writes a `<out>.manifest.json` recording command, config, seed and
outputs, and all files are written atomically (temp + rename).  Exit codes:
0 success, 2 usage/config/data error, 3 fit failure.
"""

import argparse
import datetime
import json
import math
import os
import sys

import numpy as np

from . import __version__
from .errors import ConfigError, DataError, FitError
from .memory_sim import (
    ArrivalHistogram,
    MemoryConfig,
    SweepSeries,
    simulate_background_sweep,
    simulate_decay_series,
    simulate_histogram,
    simulate_polarimetry_sweep,
    simulate_reference,
)
from .noise_model import NoiseModelParams, model_fidelity, model_sbr
from .polarization import (
    CANONICAL_STATES,
    STATE_NAMES,
    PolarimetrySample,
    fit_stokes,
    read_polarimetry_csv,
    write_polarimetry_csv,
)
from .histogram_analysis import (
    Window,
    build_report,
    fit_exponential_decay,
    fit_sqrt_background,
)

SIM_KINDS = ("histogram", "reference", "polarimetry", "decay", "background")


def _atomic_write(path: str, text: str) -> None:
    tmp = f"{path}.tmp.{os.getpid()}"
    with open(tmp, "w", newline="") as fh:
        fh.write(text)
    os.replace(tmp, path)


def _atomic_save(path: str, saver) -> None:
    """Run `saver(tmp_path)` then rename the result into place."""
    tmp = f"{path}.tmp.{os.getpid()}"
    saver(tmp)
    os.replace(tmp, path)


def _json_text(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def _write_manifest(args, outputs: list) -> None:
    manifest = {
        "command": args.cmd,
        "config": getattr(args, "config", None),
        "seed": getattr(args, "seed", None),
        "outputs": outputs,
        "version": __version__,
        "timestamp": datetime.datetime.now(datetime.timezone.utc).isoformat(),
    }
    _atomic_write(outputs[0] + ".manifest.json", _json_text(manifest))


def _float_list(text: str, flag: str) -> list:
    try:
        return [float(v) for v in text.split(",") if v.strip() != ""]
    except ValueError as exc:
        raise ConfigError(f"{flag} expects comma-separated numbers: {exc}") from exc


def _state(name: str):
    if name not in CANONICAL_STATES:
        raise ConfigError(f"state must be one of {STATE_NAMES}, got {name!r}")
    return CANONICAL_STATES[name]


def _technical_path(out: str) -> str:
    root, ext = os.path.splitext(out)
    return f"{root}.technical{ext or '.csv'}"


def cmd_simulate(args) -> int:
    config = MemoryConfig.load(args.config)
    outputs = [args.out]
    if args.kind == "histogram":
        state = _state(args.state)
        analyzer = math.radians(args.analyzer) if args.analyzer is not None else None
        hist = simulate_histogram(
            config, state, analyzer, args.trials, args.seed,
            workers=args.workers, label=f"storage:{args.state}",
        )
        _atomic_save(args.out, hist.save)
    elif args.kind == "reference":
        hist = simulate_reference(config, args.trials, args.seed, workers=args.workers)
        _atomic_save(args.out, hist.save)
    elif args.kind == "polarimetry":
        if args.angles:
            angles = [math.radians(a) for a in _float_list(args.angles, "--angles")]
        else:
            angles = list(np.linspace(0.0, math.pi, 16))
        sweep = simulate_polarimetry_sweep(
            config, _state(args.state), angles, args.trials, args.seed,
            noiseless=args.noiseless,
        )
        samples = [PolarimetrySample(a, y) for a, y in zip(sweep.x, sweep.y)]
        _atomic_save(args.out, lambda p: write_polarimetry_csv(p, samples))
    elif args.kind == "decay":
        if not args.times:
            raise ConfigError("--kind decay requires --times")
        series = simulate_decay_series(
            config, _float_list(args.times, "--times"), args.trials, args.seed
        )
        _atomic_save(args.out, series.save_csv)
    elif args.kind == "background":
        if not args.powers:
            raise ConfigError("--kind background requires --powers")
        bg, tech = simulate_background_sweep(
            config, _float_list(args.powers, "--powers"), args.trials, args.seed
        )
        _atomic_save(args.out, bg.save_csv)
        tech_path = _technical_path(args.out)
        _atomic_save(tech_path, tech.save_csv)
        outputs.append(tech_path)
    _write_manifest(args, outputs)
    return 0


def _parse_state_paths(pairs: list, flag: str) -> dict:
    mapping = {}
    for item in pairs or []:
        name, sep, path = item.partition("=")
        if not sep or name not in STATE_NAMES:
            raise ConfigError(f"{flag} expects NAME=PATH with NAME in {STATE_NAMES}, got {item!r}")
        mapping[name] = path
    missing = [s for s in STATE_NAMES if s not in mapping]
    if missing:
        raise ConfigError(f"{flag} missing for states {missing}")
    return mapping


def cmd_analyze(args) -> int:
    config = MemoryConfig.load(args.config)
    roi = Window(config.roi_start, config.roi_end)
    bg = Window(config.bg_window_start, config.bg_window_end)
    storage = {
        name: ArrivalHistogram.load(path)
        for name, path in _parse_state_paths(args.storage, "--storage").items()
    }
    reference = ArrivalHistogram.load(args.reference)
    measured = {}
    for name, path in _parse_state_paths(args.stokes, "--stokes").items():
        vec, _ = fit_stokes(read_polarimetry_csv(path))
        measured[name] = vec.normalize()
    report = build_report(storage, reference, roi, bg, measured)
    _atomic_write(args.out, _json_text(report.to_json()))
    print(report.to_text())
    return 0


def cmd_model_curve(args) -> int:
    if args.p_points < 1:
        raise ConfigError(f"--p-points must be >= 1, got {args.p_points}")
    if args.p_min <= 0 or args.p_max < args.p_min:
        raise ConfigError("need 0 < p-min <= p-max")
    grid = np.linspace(args.p_min, args.p_max, args.p_points)
    rows = []
    for p in grid:
        params = NoiseModelParams(eta=args.eta, p=float(p), q=args.q, n_max=args.n_max)
        rows.append((float(p), model_sbr(params), model_fidelity(params)))
    if args.format == "json":
        text = _json_text([{"p": p, "sbr": s, "fidelity": f} for p, s, f in rows])
    else:
        lines = ["p,sbr,fidelity"]
        lines += [f"{p!r},{s!r},{f!r}" for p, s, f in rows]
        text = "\n".join(lines) + "\n"
    _atomic_write(args.out, text)
    return 0


def _fit_result_text(result, fmt: str) -> str:
    if fmt == "csv":
        lines = ["param,value,stderr"]
        for name, value in result.params.items():
            lines.append(f"{name},{value!r},{result.stderr[name]!r}")
        return "\n".join(lines) + "\n"
    return _json_text(result.to_dict())


def cmd_fit(args) -> int:
    if args.kind in ("decay", "background") and not args.series:
        raise ConfigError(f"--kind {args.kind} requires --series")
    if args.kind == "stokes" and not args.samples:
        raise ConfigError("--kind stokes requires --samples")
    if args.kind == "decay":
        result = fit_exponential_decay(SweepSeries.load_csv(args.series))
    elif args.kind == "background":
        if not args.technical:
            raise ConfigError("--kind background requires --technical")
        result = fit_sqrt_background(
            SweepSeries.load_csv(args.series), SweepSeries.load_csv(args.technical)
        )
    else:  # stokes always emits JSON (structured Stokes payload)
        vec, result = fit_stokes(read_polarimetry_csv(args.samples))
        payload = result.to_dict()
        payload["stokes"] = vec.to_json()
        payload["stokes_normalized"] = vec.normalize().to_json()
        text = _json_text(payload)
        _atomic_write(args.out, text)
        print(text, end="")
        return 0
    text = _fit_result_text(result, args.format)
    _atomic_write(args.out, text)
    print(text, end="")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="polmem",
        description="simulate and analyze dual-rail polarization-memory runs",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="cmd", required=True)

    p_sim = sub.add_parser("simulate", help="generate a dataset from a config")
    p_sim.add_argument("--config", required=True, help="MemoryConfig JSON path")
    p_sim.add_argument("--kind", choices=SIM_KINDS, default="histogram")
    p_sim.add_argument("--state", default=None, help="input state name (H V D A R L)")
    p_sim.add_argument("--analyzer", type=float, default=None,
                       help="polarimeter plate angle in degrees (histogram kind)")
    p_sim.add_argument("--trials", type=int, required=True,
                       help="pulses (per angle/point for sweep kinds)")
    p_sim.add_argument("--seed", type=int, required=True)
    p_sim.add_argument("--workers", type=int, default=1)
    p_sim.add_argument("--angles", default=None,
                       help="comma-separated plate angles in degrees (polarimetry kind)")
    p_sim.add_argument("--times", default=None,
                       help="comma-separated storage times in us (decay kind)")
    p_sim.add_argument("--powers", default=None,
                       help="comma-separated control powers (background kind)")
    p_sim.add_argument("--noiseless", action="store_true",
                       help="polarimetry kind: exact expectations, no Poisson draws")
    p_sim.add_argument("--out", required=True)
    p_sim.set_defaults(func=cmd_simulate)

    p_an = sub.add_parser("analyze", help="six-state summary report")
    p_an.add_argument("--config", required=True)
    p_an.add_argument("--storage", action="append", metavar="NAME=PATH",
                      help="storage histogram per state (repeat six times)")
    p_an.add_argument("--reference", required=True)
    p_an.add_argument("--stokes", action="append", metavar="NAME=PATH",
                      help="polarimetry sweep CSV per state (repeat six times)")
    p_an.add_argument("--out", required=True)
    p_an.set_defaults(func=cmd_analyze)

    p_mc = sub.add_parser("model-curve", help="detection-model fidelity/SBR curve")
    p_mc.add_argument("--eta", type=float, default=0.055)
    p_mc.add_argument("--q", type=float, default=0.005)
    p_mc.add_argument("--n-max", type=int, default=20)
    p_mc.add_argument("--p-min", type=float, default=0.1)
    p_mc.add_argument("--p-max", type=float, default=20.0)
    p_mc.add_argument("--p-points", type=int, default=50)
    p_mc.add_argument("--format", choices=("csv", "json"), default="csv")
    p_mc.add_argument("--out", required=True)
    p_mc.set_defaults(func=cmd_model_curve)

    p_fit = sub.add_parser("fit", help="run an estimation fit on a saved dataset")
    p_fit.add_argument("--kind", choices=("decay", "background", "stokes"), required=True)
    p_fit.add_argument("--series", default=None, help="sweep CSV (decay/background)")
    p_fit.add_argument("--technical", default=None, help="technical sweep CSV (background)")
    p_fit.add_argument("--samples", default=None, help="polarimetry CSV (stokes)")
    p_fit.add_argument("--format", choices=("json", "csv"), default="json")
    p_fit.add_argument("--out", required=True)
    p_fit.set_defaults(func=cmd_fit)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except FitError as exc:
        print(f"fit error: {exc}", file=sys.stderr)
        return 3
    except (ConfigError, DataError, OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
