"""Score tables and figures from a finished study run."""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np
import pandas as pd

from .evaluation import TAU_GRID

FIGURES = ("es_by_hour.png", "crps_by_hour.png", "pinball_by_tau.png", "crps_by_step.png", "dm_CRPS.png", "dm_ES.png")


def load_report(path) -> dict:
    path = Path(path)
    if path.is_dir():
        # a run directory or a directory written by ``evaluate``
        path = path / "report.json" if (path / "report.json").exists() else path / "scores" / "report.json"
    if not path.exists():
        raise FileNotFoundError(path)
    return json.loads(path.read_text())


def hourly_table(report: dict, loss: str) -> pd.DataFrame:
    """Mean session loss per delivery hour (rows) and model (columns)."""
    df = pd.DataFrame(report["sessions"])
    if df.empty:
        return pd.DataFrame()
    return df.pivot_table(index="hour", columns="model", values=loss, aggfunc="mean")[report["models"]]


def tau_table(report: dict) -> pd.DataFrame:
    return pd.DataFrame({m: report["aggregates"][m]["pinball"] for m in report["models"]},
                        index=pd.Index(report.get("tau_grid", TAU_GRID.tolist()), name="tau"))


def step_table(report: dict) -> pd.DataFrame:
    data = {m: report["aggregates"][m]["crps_by_t"] for m in report["models"]}
    T = len(next(iter(data.values())))
    return pd.DataFrame(data, index=pd.Index(np.arange(1, T + 1), name="t"))


def dm_table(report: dict, loss: str) -> pd.DataFrame:
    models = report["models"]
    return pd.DataFrame([[report["dm"][loss][a].get(b) for b in models] for a in models],
                        index=models, columns=models, dtype=float)


def write_tables(report: dict, out_dir) -> list[Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    agg = pd.DataFrame(report["aggregates"]).T.drop(columns=["pinball", "crps_by_t"])
    tables = {"aggregates.csv": agg, "es_by_hour.csv": hourly_table(report, "ES"),
              "crps_by_hour.csv": hourly_table(report, "CRPS"), "pinball_by_tau.csv": tau_table(report),
              "crps_by_step.csv": step_table(report)}
    for loss in report["dm"]:
        tables[f"dm_{loss}.csv"] = dm_table(report, loss)
    paths = []
    for name, df in tables.items():
        df.to_csv(out / name, float_format="%.10g")
        paths.append(out / name)
    return paths


def _lines(ax, df: pd.DataFrame, xlabel: str, ylabel: str) -> None:
    for m in df.columns:
        ax.plot(df.index, df[m], marker="." if len(df) < 40 else None, label=m)
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    ax.grid(alpha=0.3)
    ax.legend(fontsize=7)


def write_figures(report: dict, out_dir) -> list[Path]:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    specs = [("es_by_hour.png", hourly_table(report, "ES"), "delivery hour", "energy score"),
             ("crps_by_hour.png", hourly_table(report, "CRPS"), "delivery hour", "CRPS"),
             ("pinball_by_tau.png", tau_table(report), "quantile level", "pinball loss"),
             ("crps_by_step.png", step_table(report), "step t", "CRPS")]
    paths = []
    for name, df, xl, yl in specs:
        fig, ax = plt.subplots(figsize=(7, 4))
        if not df.empty:
            _lines(ax, df, xl, yl)
        fig.tight_layout()
        fig.savefig(out / name, dpi=100)
        plt.close(fig)
        paths.append(out / name)
    for loss in report["dm"]:
        df = dm_table(report, loss)
        fig, ax = plt.subplots(figsize=(6, 5))
        im = ax.imshow(df.to_numpy(), vmin=0.0, vmax=0.1, cmap="RdYlGn_r")
        ax.set_xticks(range(len(df)), df.columns, rotation=60, ha="right", fontsize=7)
        ax.set_yticks(range(len(df)), df.index, fontsize=7)
        ax.set_title(f"DM p-values ({loss}): column better than row", fontsize=9)
        fig.colorbar(im, ax=ax)
        fig.tight_layout()
        fig.savefig(out / f"dm_{loss}.png", dpi=100)
        plt.close(fig)
        paths.append(out / f"dm_{loss}.png")
    return paths


def make_report(run_or_report, out_dir, plots: bool = True) -> list[Path]:
    report = load_report(run_or_report)
    paths = write_tables(report, out_dir)
    if plots:
        paths += write_figures(report, out_dir)
    return paths
