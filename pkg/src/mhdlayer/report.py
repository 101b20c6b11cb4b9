"""Figure and summary-table rendering from a recorded frame CSV.

This is the only module that touches matplotlib, and it imports it
lazily so the solver and checkers stay import-light.  `cmd_report`
reads `<outdir>/frames.csv` (written by the simulate command), renders
PNG figures next to it, and writes `report.csv` with fitted decay
slopes and observed extremes so the figures have a machine-readable
counterpart.
"""

from __future__ import annotations

import re
from pathlib import Path

import numpy as np

from .config import RunConfig, config_hash
from .energy import fit_decay

__all__ = ["load_frames", "cmd_report"]


def load_frames(path) -> tuple[dict, dict]:
    """Read a frame CSV into {column: array}, plus its header metadata."""
    path = Path(path)
    lines = path.read_text().splitlines()
    comments = [ln for ln in lines if ln.startswith("#")]
    body = [ln for ln in lines if ln and not ln.startswith("#")]
    if not comments or "frame schema" not in comments[0]:
        raise ValueError(f"{path} is not a frame CSV")
    meta = {"schema": comments[0].lstrip("# ")}
    match = re.search(r"delta=([0-9eE+.-]+)", comments[0])
    meta["delta"] = float(match.group(1)) if match else None
    for line in comments[1:]:
        if "=" in line:
            key, val = line.lstrip("# ").split("=", 1)
            meta[key] = val
    names = body[0].split(",")
    rows = np.array([[float(v) for v in ln.split(",")] for ln in body[1:]])
    if rows.ndim != 2 or rows.shape[1] != len(names):
        raise ValueError(f"{path}: malformed rows")
    return {name: rows[:, j] for j, name in enumerate(names)}, meta


def _joint(cols: dict, a: str, b: str) -> np.ndarray:
    return np.hypot(cols[a], cols[b])


def _fit_or_nan(t: np.ndarray, v: np.ndarray, window) -> float:
    try:
        return fit_decay(zip(t, v), window)
    except ValueError:
        return float("nan")


def cmd_report(cfg: RunConfig) -> int:
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    cols, meta = load_frames(cfg.frames_csv)
    outdir = Path(cfg.outdir)
    t = cols["t"]
    tt = 1.0 + t
    delta = meta["delta"] if meta["delta"] is not None else cfg.delta
    window = (5.0, float(t[-1]))

    # energy and dissipation
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.loglog(tt, cols["E_delta"], label="energy")
    ax.loglog(tt, cols["D_delta"], label="dissipation")
    ax.set_xlabel("1 + t")
    ax.set_title("energy budget")
    ax.legend()
    fig.savefig(outdir / "energy.png", dpi=120)
    plt.close(fig)

    # norm decay with reference slopes
    prim = _joint(cols, "u_H80_mu", "f_H80_mu")
    good = _joint(cols, "U_dy0_H50_mu", "F_dy0_H50_mu")
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.loglog(tt, prim, label="primitive H80")
    ax.loglog(tt, good, label="good H50")
    for power, style in ((-(1.0 - delta) / 4.0, ":"),
                         (-(5.0 - delta) / 4.0, "--")):
        ref = good[0] * tt ** power
        ax.loglog(tt, ref, style, color="gray",
                  label=f"slope {power:.3f}")
    ax.set_xlabel("1 + t")
    ax.set_title("norm decay")
    ax.legend()
    fig.savefig(outdir / "decay.png", dpi=120)
    plt.close(fig)

    # comparison ratios
    ratio_names = sorted(name for name in cols if name.startswith("ratio_"))
    fig, ax = plt.subplots(figsize=(6, 4))
    for name in ratio_names:
        ax.plot(t, cols[name], label=name, linewidth=0.8)
    ax.set_xlabel("t")
    ax.set_title("norm-comparison ratios")
    ax.legend(fontsize=5, ncol=2)
    fig.savefig(outdir / "ratios.png", dpi=120)
    plt.close(fig)

    # delimited counterpart
    rows = [("primitive_H80", _fit_or_nan(t, prim, window)),
            ("good_H50", _fit_or_nan(t, good, window)),
            ("E_delta", _fit_or_nan(t, cols["E_delta"], window))]
    with open(outdir / "report.csv", "w") as fh:
        fh.write(f"# mhdlayer report v1 config={config_hash(cfg)}\n")
        fh.write("series,fitted_slope,window_lo,window_hi,final_value\n")
        for name, slope in rows:
            final = {"primitive_H80": prim, "good_H50": good,
                     "E_delta": cols["E_delta"]}[name][-1]
            fh.write(f"{name},{float(slope)!r},{float(window[0])!r},"
                     f"{float(window[1])!r},{float(final)!r}\n")
        fh.write(f"f_min,{float(cols['f_min'].min())!r},,,\n")
        drift = max(cols["drift_u"].max(), cols["drift_f"].max())
        fh.write(f"drift_max,{float(drift)!r},,,\n")
    return 0
