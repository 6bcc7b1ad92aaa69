import os
import sys
from typing import List

import pandas as pd
import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt
import seaborn as sns

root = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
sys.path.append(root)
from evaluations.stability import BodeData


def comparison_plot(bodes: List[BodeData], labels: List[str], figsize=(9, 7), figure_path='./figures',
                    figure_name='loop_gain.svg', figure_title=None):
    """Overlays several loop-gain sweeps, e.g. before and after compensation."""
    plt.clf()
    sns.set_theme(style="whitegrid", font_scale=1.1)
    fig, (ax_mag, ax_phase) = plt.subplots(2, 1, sharex=True, figsize=figsize)
    palette = sns.color_palette("deep", n_colors=len(bodes))
    for bode, label, color in zip(bodes, labels, palette):
        ax_mag.semilogx(bode.freqs_hz, bode.mag_db, label=label, color=color)
        ax_phase.semilogx(bode.freqs_hz, bode.phase_deg, label=label, color=color)
    ax_mag.axhline(0.0, color="gray", linewidth=0.8)
    ax_phase.axhline(-180.0, color="gray", linewidth=0.8)
    ax_mag.set_ylabel("magnitude (dB)")
    ax_phase.set_ylabel("phase (deg)")
    ax_phase.set_xlabel("frequency (Hz)")
    ax_mag.legend()

    if figure_title is not None:
        ax_mag.set_title(figure_title)
    if os.path.exists(figure_path) is False:
        os.makedirs(figure_path)

    fig.savefig(os.path.join(figure_path, figure_name))
    plt.close(fig)


def capacitance_plot(frame: pd.DataFrame, figsize=(8, 4), figure_path='./figures',
                     figure_name='cap_sweep.svg', figure_title=None):
    """Phase margin against bulk capacitance, from `capacitance_sweep`."""
    plt.clf()
    sns.set_theme(style="whitegrid", font_scale=1.1)
    fig, ax = plt.subplots(figsize=figsize)
    data = frame.assign(capacitance_uf=frame["capacitance_f"] * 1e6)
    sns.lineplot(data=data, x="capacitance_uf", y="phase_margin_deg", marker="o", ax=ax)
    ax.set_xscale("log")
    ax.axhline(0.0, color="tab:red", linewidth=0.8)
    ax.set_xlabel("bank capacitance (uF)")
    ax.set_ylabel("phase margin (deg)")

    if figure_title is not None:
        ax.set_title(figure_title)
    if os.path.exists(figure_path) is False:
        os.makedirs(figure_path)

    fig.savefig(os.path.join(figure_path, figure_name))
    plt.close(fig)

