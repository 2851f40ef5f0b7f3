"""Command line interface: ``idmix <subcommand> ...``.

Failures print a JSON object ``{"error", "message", "exit_code"}`` on stderr.
Missing inputs exit with 2, invalid data with 1 and an aborted study with 3.
"""
from __future__ import annotations

import argparse
import datetime as dt
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

from . import constants as C
from .benchmarks import KINDS, BenchmarkSpec, fit_benchmark, simulate_benchmark
from .estimation import FittedMixtureModel
from .evaluation import build_report
from .marketgrid import grids_to_frame
from .report import make_report
from .simulation import PathEnsemble, PathHistory, simulate_session
from .study import (RUN_ROOT_ENV, StudyAbort, StudyConfig, fit_session_model, load_dataset, load_features,
                    realized_path, rolling_study, run_root, save_features, training_keys, write_report)
from .synth import SynthSpec, synth_generate

log = logging.getLogger("idmix")

EXIT_INVALID = 1
EXIT_MISSING = 2
EXIT_ABORT = 3


class MissingInputError(FileNotFoundError):
    pass


def _require(path, what: str) -> Path:
    p = Path(path)
    if not p.exists():
        raise MissingInputError(f"{what} not found: {p}")
    return p


def _hours(text: str | None) -> list[int] | None:
    return None if not text else [int(h) for h in text.split(",")]


def _day(text: str) -> dt.date:
    return dt.date.fromisoformat(text)


def cmd_synth(a) -> dict:
    spec = SynthSpec.from_dict(json.loads(_require(a.config, "synth config").read_text())) if a.config else SynthSpec()
    if a.seed is not None:
        spec = replace(spec, seed=a.seed)
    if a.days is not None:
        spec = replace(spec, n_days=a.days)
    if a.hours:
        spec = replace(spec, hours=_hours(a.hours))
    paths = synth_generate(spec, a.out)
    return {"files": [str(p) for p in paths]}


def cmd_aggregate(a) -> dict:
    _require(a.data, "data directory")
    ds = load_dataset(a.data, _hours(a.hours))
    out = Path(a.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    grids_to_frame([ds.grids[k] for k in sorted(ds.grids)], include_history=a.history).to_csv(
        out, index=False, float_format="%.17g")
    return {"sessions": len(ds.grids), "file": str(out)}


def cmd_features(a) -> dict:
    _require(a.data, "data directory")
    q_grid = [float(q) for q in a.q_grid.split(",")]
    ds = load_dataset(a.data, _hours(a.hours), q_grid)
    paths = save_features(ds, a.out, q_grid)
    return {"sessions": len(ds.sessions), "failed": len(ds.failures), "files": [str(p) for p in paths]}


def _load_features(path):
    _require(path, "feature directory")
    return load_features(path)


def cmd_fit(a) -> dict:
    ds, q_grid = _load_features(a.features)
    day = _day(a.day)
    out = Path(a.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    if a.model == "mix":
        model, keys = fit_session_model(ds, day, a.hour, a.train_days, a.family, q_grid)
        model.save(out)
        return {"model": model.model_id, "training_sessions": len(keys), "file": str(out)}
    keys = training_keys(ds, day, a.hour, a.train_days)
    target = ds.grids.get((day, a.hour))
    spec = fit_benchmark(a.model, [ds.grids[k] for k in keys], target,
                         window={"delivery_day": day.isoformat(), "delivery_hour": a.hour})
    out.write_text(json.dumps(spec.to_dict(), sort_keys=True))
    return {"model": spec.model_id, "training_sessions": len(keys), "file": str(out)}


def cmd_simulate(a) -> dict:
    doc = json.loads(_require(a.model_file, "model file").read_text())
    ds, _ = _load_features(a.features)
    key = (_day(a.day), a.hour)
    if key not in ds.sessions:
        raise MissingInputError(f"no features for session {key}")
    target = ds.sessions[key]
    if "kind" in doc:
        ens = simulate_benchmark(BenchmarkSpec.from_dict(doc), target.grid.anchor_price, a.paths,
                                 target.grid.T, a.seed, key)
    else:
        model = FittedMixtureModel.from_dict(doc)
        ens = simulate_session(model, target.statics, PathHistory.from_grid(target.grid), a.paths,
                               target.grid.T, a.seed, threads=a.threads)
    out = Path(a.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    ens.save(out)
    return {"model": ens.model_id, "M": ens.M, "file": str(out)}


def cmd_evaluate(a) -> dict:
    root = _require(a.ensembles, "ensemble directory")
    ds, _ = _load_features(a.features)
    results: dict = {}
    for model_dir in sorted(p for p in root.iterdir() if p.is_dir()):
        for f in sorted(model_dir.glob("*.csv")):
            ens = PathEnsemble.load(f)
            key = (ens.delivery_key[0], int(ens.delivery_key[1]))
            if key not in ds.grids:
                raise MissingInputError(f"no realized path for {key}")
            results.setdefault(model_dir.name, {})[key] = (ens.P, realized_path(ds.grids[key]))
    if not results:
        raise MissingInputError(f"no ensembles under {root}")
    report = build_report(results, {"ensembles": str(root)})
    report.validate()
    write_report(report, a.out)
    return {"models": report.models, "dir": str(a.out)}


def cmd_study(a) -> dict:
    config = StudyConfig.load(_require(a.config, "study config"))
    if a.seed is not None:
        config.seed = a.seed
    if a.threads is not None:
        config.threads = a.threads
    if a.run_id:
        config.run_id = a.run_id
    _require(config.data_dir, "data directory")
    root = Path(a.run_root) if a.run_root else run_root()
    report = rolling_study(config, root)
    run_dir = root / config.resolved_run_id()
    return {"run_dir": str(run_dir), "models": report.models,
            "CRPS": {m: report.aggregates[m]["CRPS"] for m in report.models},
            "ES": {m: report.aggregates[m]["ES"] for m in report.models}}


def cmd_report(a) -> dict:
    _require(a.run, "run directory or report file")
    paths = make_report(a.run, a.out, plots=not a.no_plots)
    return {"files": [str(p) for p in paths]}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="idmix", description="Intraday price path forecasting")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("synth", help="generate a synthetic market data set")
    s.add_argument("--out", required=True)
    s.add_argument("--config", help="JSON file with generator settings")
    s.add_argument("--seed", type=int)
    s.add_argument("--days", type=int)
    s.add_argument("--hours", help="comma separated delivery hours")
    s.set_defaults(func=cmd_synth)

    s = sub.add_parser("aggregate", help="aggregate trades to 5-minute grids")
    s.add_argument("--data", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--hours")
    s.add_argument("--history", action="store_true", help="include pre-window buckets")
    s.set_defaults(func=cmd_aggregate)

    s = sub.add_parser("features", help="build per-session features")
    s.add_argument("--data", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--hours")
    s.add_argument("--q-grid", default=",".join(str(q) for q in C.DEFAULT_Q_GRID))
    s.set_defaults(func=cmd_features)

    s = sub.add_parser("fit", help="fit the mixture model or a benchmark for one session")
    s.add_argument("--features", required=True)
    s.add_argument("--day", required=True)
    s.add_argument("--hour", type=int, required=True)
    s.add_argument("--train-days", type=int, default=365)
    s.add_argument("--family", choices=["jsu", "sst"], default="jsu")
    s.add_argument("--model", choices=["mix", *KINDS], default="mix")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_fit)

    s = sub.add_parser("simulate", help="simulate a path ensemble from a fitted model")
    s.add_argument("--model-file", required=True)
    s.add_argument("--features", required=True)
    s.add_argument("--day", required=True)
    s.add_argument("--hour", type=int, required=True)
    s.add_argument("-M", "--paths", type=int, default=C.DEFAULT_PATHS)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--threads", type=int, default=1)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("evaluate", help="score ensembles stored as <dir>/<model>/<day>_<hh>.csv")
    s.add_argument("--ensembles", required=True)
    s.add_argument("--features", required=True)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_evaluate)

    s = sub.add_parser("study", help="run the rolling-window study")
    s.add_argument("--config", required=True)
    s.add_argument("--seed", type=int)
    s.add_argument("--threads", type=int)
    s.add_argument("--run-id")
    s.add_argument("--run-root", help=f"defaults to ${RUN_ROOT_ENV} or ./runs")
    s.set_defaults(func=cmd_study)

    s = sub.add_parser("report", help="score tables and figures of a run")
    s.add_argument("--run", required=True, help="run directory or report.json")
    s.add_argument("--out", required=True)
    s.add_argument("--no-plots", action="store_true")
    s.set_defaults(func=cmd_report)
    return p


def _fail(exc: BaseException, code: int) -> int:
    doc = {"error": type(exc).__name__, "message": str(exc), "exit_code": code}
    print(json.dumps(doc), file=sys.stderr)
    return code


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        result = args.func(args)
    except FileNotFoundError as exc:
        return _fail(exc, EXIT_MISSING)
    except StudyAbort as exc:
        return _fail(exc, EXIT_ABORT)
    except (ValueError, KeyError, json.JSONDecodeError) as exc:
        return _fail(exc, EXIT_INVALID)
    print(json.dumps(result, default=str))
    return 0


if __name__ == "__main__":
    sys.exit(main())
