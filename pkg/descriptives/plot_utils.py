from pathlib import Path
from typing import Dict, Optional

import matplotlib as mpl
import matplotlib.pyplot as plt
import pandas as pd
import seaborn as sns

from misc.decorators import log_plot_saving
from pipeline.motion_data.motion import MotionSequence
from pipeline.motion_data.skeleton import PELVIS

STYLE = {
    "font.size": 10,
    "axes.titlesize": 11,
    "axes.labelsize": 10,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "grid.linestyle": ":",
    "grid.linewidth": 0.6,
    "legend.frameon": False,
    "savefig.bbox": "tight",
}


def label(name: Optional[str]) -> str:
    """'diffusion_loss' -> 'Diffusion loss'."""
    return name.replace("_", " ").capitalize() if name else ""


def apply_style(dpi: int = 300) -> None:
    sns.set_theme(style="ticks", context="paper")
    mpl.rcParams.update({**STYLE, "figure.dpi": dpi})


def _finish(save_path: Optional[str], dpi: int) -> None:
    if not save_path:
        plt.show()
        return
    target = Path(save_path).expanduser()
    target.parent.mkdir(parents=True, exist_ok=True)
    plt.savefig(target, dpi=dpi)
    plt.close()


@log_plot_saving
def plot_loss_curve(history: pd.DataFrame, title: str = None, var: str = "loss", window: int = 50,
                    save_path: str = None, dpi: int = 300):
    """Raw per-step loss in grey, rolling mean in black, log scale."""
    if history.empty:
        print(f"[WARN] Skipping empty loss curve for {var}")
        return
    apply_style(dpi)
    plt.figure(figsize=(7, 4))
    smooth = history[var].rolling(window, min_periods=1).mean()
    sns.lineplot(x=history["step"], y=history[var], color="gray", alpha=0.35, linewidth=0.8)
    sns.lineplot(x=history["step"], y=smooth, color="black", linewidth=1.4)
    plt.yscale("log")
    plt.xlabel("Step")
    plt.ylabel(label(var))
    plt.title(title or f"{label(var)} over training", fontweight="bold")
    _finish(save_path, dpi)


@log_plot_saving
def plot_trajectories(motions: Dict[str, MotionSequence], joint: int = PELVIS, title: str = None,
                      save_path: str = None, dpi: int = 300):
    """Top-down (X/Z) path of one joint for each labelled motion."""
    apply_style(dpi)
    plt.figure(figsize=(5, 5))
    rows = [
        {"motion": name, "frame": i, "x": float(p[0]), "z": float(p[2])}
        for name, m in motions.items()
        for i, p in enumerate(m.coords[:, joint])
    ]
    df = pd.DataFrame(rows)
    sns.lineplot(data=df, x="x", y="z", hue="motion", sort=False, estimator=None)
    plt.gca().set_aspect("equal", adjustable="datalim")
    plt.xlabel("X (m)")
    plt.ylabel("Z (m)")
    plt.title(title or "Joint trajectories (top view)", fontweight="bold")
    _finish(save_path, dpi)


@log_plot_saving
def plot_length_distribution(summary: pd.DataFrame, title: str = None, save_path: str = None, dpi: int = 300):
    """Histogram of sequence lengths per split (DatasetLoader.summary() frame)."""
    apply_style(dpi)
    plt.figure(figsize=(7, 4))
    sns.histplot(data=summary, x="frames", hue="split", multiple="stack", bins=20)
    plt.xlabel("Frames")
    plt.ylabel("Sequences")
    plt.title(title or "Sequence lengths", fontweight="bold")
    _finish(save_path, dpi)
