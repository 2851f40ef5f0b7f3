"""Rolling-window forecasting study: fit, simulate and score day by day."""
from __future__ import annotations

import datetime as dt
import hashlib
import json
import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd

from . import constants as C
from .benchmarks import KINDS as BENCHMARK_KINDS
from .benchmarks import fit_benchmark, simulate_benchmark
from .curves import read_curves
from .estimation import DesignMatrix, fit_mixture
from .evaluation import ScoreReport, build_report
from .features import (SessionStatics, assemble_rows, manifest, read_forecasts, read_outages, OutageBook,
                       session_statics)
from .marketgrid import SessionGrid, grids_from_frame, grids_from_trades, grids_to_frame, read_trades
from .simulation import PathHistory, simulate_session

log = logging.getLogger(__name__)

RUN_ROOT_ENV = "IDMIX_RUN_ROOT"
MAX_FAILURE_SHARE = 0.10


class StudyAbort(RuntimeError):
    """Too many sessions failed."""


@dataclass
class StudyConfig:
    data_dir: str
    train_days: int = 365
    start: str | None = None  # first and last delivery day of the whole range
    end: str | None = None
    hours: list[int] | None = None
    family: str = "jsu"
    benchmarks: list[str] = field(default_factory=lambda: ["naive", "rw_normal"])
    M: int = C.DEFAULT_PATHS
    seed: int = 0
    q_grid: list[float] = field(default_factory=lambda: list(C.DEFAULT_Q_GRID))
    run_id: str | None = None
    threads: int = 1

    def __post_init__(self):
        if self.train_days < 30:
            raise ValueError("training window must cover at least 30 days")
        if self.family not in ("jsu", "sst"):
            raise ValueError(f"unknown family {self.family!r}")
        bad = [b for b in self.benchmarks if b not in BENCHMARK_KINDS]
        if bad:
            raise ValueError(f"unknown benchmarks {bad}")
        if self.start and self.end:
            n = (dt.date.fromisoformat(self.end) - dt.date.fromisoformat(self.start)).days + 1
            if n <= self.train_days:
                raise ValueError("date range must be longer than the training window")

    @classmethod
    def from_dict(cls, d: dict) -> "StudyConfig":
        return cls(**d)

    @classmethod
    def load(cls, path) -> "StudyConfig":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def identity(self) -> dict:
        """Fields that determine the results (thread count excluded)."""
        d = asdict(self)
        d.pop("threads")
        d.pop("run_id")
        return d

    def resolved_run_id(self) -> str:
        if self.run_id:
            return self.run_id
        blob = json.dumps(self.identity(), sort_keys=True).encode()
        return "run-" + hashlib.sha256(blob).hexdigest()[:12]


@dataclass
class SessionData:
    grid: SessionGrid
    statics: SessionStatics
    X_logit: np.ndarray
    X_gamlss: np.ndarray


@dataclass
class Dataset:
    sessions: dict[tuple, SessionData]
    grids: dict[tuple, SessionGrid]
    failures: dict[tuple, str]
    days: list[dt.date]
    hours: list[int]


def read_da_prices(path) -> dict[tuple[dt.date, int], float]:
    df = pd.read_csv(path, float_precision="round_trip")
    days = pd.to_datetime(df["delivery_day"]).dt.date
    return {(d, int(h)): float(p) for d, h, p in zip(days, df["delivery_hour"], df["price"])}


def load_dataset(data_dir, hours=None, q_grid=C.DEFAULT_Q_GRID, start=None, end=None) -> Dataset:
    """Aggregate trades and build features for every delivery period."""
    data_dir = Path(data_dir)
    for name in ("trades.csv", "forecasts.csv", "outages.csv", "curves.csv", "da_prices.csv"):
        if not (data_dir / name).exists():
            raise FileNotFoundError(data_dir / name)
    da = read_da_prices(data_dir / "da_prices.csv")
    keys = sorted(k for k in da if hours is None or k[1] in hours)
    if start:
        keys = [k for k in keys if k[0] >= dt.date.fromisoformat(start)]
    if end:
        keys = [k for k in keys if k[0] <= dt.date.fromisoformat(end)]
    grids = grids_from_trades(read_trades(data_dir / "trades.csv"), da, keys)
    forecasts = read_forecasts(data_dir / "forecasts.csv")
    book = OutageBook(read_outages(data_dir / "outages.csv"))
    curves = read_curves(data_dir / "curves.csv")
    sessions, failures = {}, {}
    for key in keys:
        try:
            if key not in curves:
                raise KeyError(f"no auction curves for {key}")
            st = session_statics(grids[key], forecasts.get(key, {}), book.relevant(key), curves[key], q_grid)
            sessions[key] = SessionData(grids[key], st, assemble_rows(grids[key], st, "logistic"),
                                        assemble_rows(grids[key], st, "gamlss"))
        except Exception as exc:  # recorded and skipped
            failures[key] = f"{type(exc).__name__}: {exc}"
            log.warning("features failed for %s: %s", key, exc)
    days = sorted({k[0] for k in keys})
    return Dataset(sessions, grids, failures, days, sorted({k[1] for k in keys}))


def save_features(ds: Dataset, out_dir, q_grid=C.DEFAULT_Q_GRID) -> list[Path]:
    """Persist grids and per-session statics; design rows are rebuilt from
    these on load."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    grids_to_frame([ds.grids[k] for k in sorted(ds.grids)], include_history=True).to_csv(
        out / "grids.csv", index=False, float_format="%.17g")
    sessions = [{"delivery_day": k[0].isoformat(), "delivery_hour": k[1], "da_price": ds.grids[k].da_price,
                 "n_trades": ds.grids[k].n_trades,
                 "statics": ds.sessions[k].statics.values if k in ds.sessions else None,
                 "flags": ds.sessions[k].statics.flags if k in ds.sessions else None}
                for k in sorted(ds.grids)]
    failures = {f"{k[0].isoformat()}_{k[1]:02d}": v for k, v in sorted(ds.failures.items())}
    doc = {"q_grid": list(q_grid), "sessions": sessions, "failures": failures}
    _atomic_write(out / "features.json", json.dumps(doc, indent=1, sort_keys=True))
    return [out / "grids.csv", out / "features.json"]


def load_features(feature_dir) -> tuple[Dataset, list[float]]:
    d = Path(feature_dir)
    for name in ("grids.csv", "features.json"):
        if not (d / name).exists():
            raise FileNotFoundError(d / name)
    doc = json.loads((d / "features.json").read_text())
    q_grid = [float(q) for q in doc["q_grid"]]
    meta = {(dt.date.fromisoformat(r["delivery_day"]), int(r["delivery_hour"])): r for r in doc["sessions"]}
    da = {k: float(r["da_price"]) for k, r in meta.items()}
    frame = pd.read_csv(d / "grids.csv", float_precision="round_trip")
    grids = grids_from_frame(frame, da, {k: int(r["n_trades"]) for k, r in meta.items()})
    sessions = {}
    for k, r in meta.items():
        if r["statics"] is None:
            continue
        g = grids[k]
        st = SessionStatics(k, g.da_price, g.anchor_price, {n: float(v) for n, v in r["statics"].items()},
                            tuple(q_grid), dict(r["flags"] or {}))
        sessions[k] = SessionData(g, st, assemble_rows(g, st, "logistic"), assemble_rows(g, st, "gamlss"))
    failures = {}
    for tag, err in doc["failures"].items():
        day, hour = tag.rsplit("_", 1)
        failures[(dt.date.fromisoformat(day), int(hour))] = err
    keys = sorted(grids)
    return Dataset(sessions, grids, failures, sorted({k[0] for k in keys}), sorted({k[1] for k in keys})), q_grid


def training_keys(ds: Dataset, day: dt.date, hour: int, D: int) -> list[tuple]:
    return [(day - dt.timedelta(days=i), hour) for i in range(D, 0, -1)
            if (day - dt.timedelta(days=i), hour) in ds.sessions]


def fit_session_model(ds: Dataset, day: dt.date, hour: int, D: int, family: str, q_grid):
    keys = training_keys(ds, day, hour, D)
    if not keys:
        raise ValueError(f"no training sessions for {(day, hour)}")
    XL = np.vstack([ds.sessions[k].X_logit for k in keys])
    alpha = np.concatenate([ds.sessions[k].grid.alpha for k in keys]).astype(float)
    XG = np.vstack([ds.sessions[k].X_gamlss for k in keys])
    dp = np.concatenate([ds.sessions[k].grid.diffs for k in keys])
    traded = alpha == 1
    window = {"id": f"mix_{family}", "delivery_day": day.isoformat(), "delivery_hour": hour,
              "train_first": keys[0][0].isoformat(), "train_last": keys[-1][0].isoformat(), "n_sessions": len(keys)}
    return fit_mixture(DesignMatrix.build(XL, manifest("logistic", q_grid)), alpha,
                       DesignMatrix.build(XG[traded], manifest("gamlss", q_grid)), dp[traded], family,
                       window=window), keys


def realized_path(grid: SessionGrid) -> np.ndarray:
    """Observed window prices; NaN for a session without any window trade."""
    return grid.prices.copy() if grid.alpha.any() else np.full(grid.T, np.nan)


def _atomic_write(path: Path, text: str) -> None:
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_text(text)
    tmp.replace(path)


def run_root() -> Path:
    return Path(os.environ.get(RUN_ROOT_ENV, "runs"))


def rolling_study(config: StudyConfig, root=None, dataset: Dataset | None = None) -> ScoreReport:
    """Run the study and persist models, ensembles and scores under
    ``<root>/<run id>/``."""
    root = Path(root) if root is not None else run_root()
    run_dir = root / config.resolved_run_id()
    for sub in ("models", "ensembles", "scores"):
        (run_dir / sub).mkdir(parents=True, exist_ok=True)
    ds = dataset or load_dataset(config.data_dir, config.hours, config.q_grid, config.start, config.end)
    D = config.train_days
    if len(ds.days) <= D:
        raise ValueError(f"{len(ds.days)} days of data, need more than {D}")
    oos_days = ds.days[D:]
    tasks = [(d, h) for d in oos_days for h in ds.hours]
    mix_id = f"mix_{config.family}"
    models = [mix_id] + list(config.benchmarks)

    def run(task):
        day, hour = task
        try:
            if task not in ds.sessions:
                raise ValueError(ds.failures.get(task, "session missing"))
            target = ds.sessions[task]
            model, keys = fit_session_model(ds, day, hour, D, config.family, config.q_grid)
            tag = f"{day.isoformat()}_{hour:02d}"
            model.save(run_dir / "models" / f"{tag}_{mix_id}.json")
            out = {mix_id: simulate_session(model, target.statics, PathHistory.from_grid(target.grid),
                                            config.M, target.grid.T, config.seed)}
            train_grids = [ds.sessions[k].grid for k in keys]
            for kind in config.benchmarks:
                spec = fit_benchmark(kind, train_grids, target.grid, window={"delivery_day": day.isoformat(),
                                                                              "delivery_hour": hour})
                _atomic_write(run_dir / "models" / f"{tag}_{kind}.json", json.dumps(spec.to_dict(), sort_keys=True))
                out[kind] = simulate_benchmark(spec, target.grid.anchor_price, config.M, target.grid.T,
                                               config.seed, task)
            for name, ens in out.items():
                d = run_dir / "ensembles" / name
                d.mkdir(exist_ok=True)
                ens.save(d / f"{tag}.csv")
            return task, {k: v.P for k, v in out.items()}, realized_path(target.grid), None
        except Exception as exc:
            log.warning("session %s failed: %s", task, exc)
            return task, None, None, f"{type(exc).__name__}: {exc}"

    if config.threads > 1:
        with ThreadPoolExecutor(max_workers=config.threads) as ex:
            results = list(ex.map(run, tasks))
    else:
        results = [run(t) for t in tasks]

    failures = {f"{d.isoformat()}_{h:02d}": err for (d, h), _, _, err in results if err}
    if len(failures) > MAX_FAILURE_SHARE * len(tasks):
        _atomic_write(run_dir / "scores" / "failures.json", json.dumps(failures, indent=1, sort_keys=True))
        raise StudyAbort(f"{len(failures)} of {len(tasks)} sessions failed")
    by_model: dict[str, dict] = {m: {} for m in models}
    for task, ens, real, err in results:
        if err is None:
            for m in models:
                by_model[m][task] = (ens[m], real)
    meta = {"run_id": run_dir.name, "config": config.identity(), "n_sessions": len(tasks),
            "failed_sessions": failures, "oos_days": len(oos_days)}
    report = build_report(by_model, meta)
    write_report(report, run_dir / "scores")
    write_manifest(run_dir, config)
    return report


def write_report(report: ScoreReport, out_dir) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    _atomic_write(out / "report.json", report.to_json())
    _atomic_write(out / "aggregates.csv", report.aggregates_csv())
    for loss in report.dm:
        _atomic_write(out / f"dm_{loss}.csv", report.dm_csv(loss))
    pd.DataFrame(report.sessions).to_csv(out / "sessions.csv", index=False, float_format="%.17g")


def write_manifest(run_dir: Path, config: StudyConfig) -> None:
    files = {}
    for p in sorted(run_dir.rglob("*")):
        if p.is_file() and p.name != "manifest.json":
            files[p.relative_to(run_dir).as_posix()] = hashlib.sha256(p.read_bytes()).hexdigest()
    doc = {"run_id": run_dir.name, "config": config.identity(), "files": files}
    _atomic_write(run_dir / "manifest.json", json.dumps(doc, indent=1, sort_keys=True))
