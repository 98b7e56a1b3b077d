"""Rendering: sweep panel grids and histogram overlays, byte-deterministic.

Figures are pure functions of the CSV content: fixed style, fixed fonts, a
fixed SVG hash salt, and no timestamps in either the SVG or PNG output, so
identical inputs produce identical image bytes.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .panels import (
    FigureKitError,
    PanelData,
    PanelSpec,
    load_histogram_csv,
    load_panel,
    require_same_grid,
)

# Orange carries the feedback series, blue the feedback-free reference; any
# other split value falls back to a fixed cycle.
SERIES_COLORS = {"on": "tab:orange", "off": "tab:blue"}
_FALLBACK = ("tab:green", "tab:red", "tab:purple", "tab:brown")

_STYLE = {
    "figure.dpi": 100,
    "savefig.dpi": 200,
    "svg.hashsalt": "figurekit",
    "svg.fonttype": "none",
    "font.family": "DejaVu Sans",
    "font.size": 9,
    "axes.linewidth": 0.8,
    "lines.linewidth": 1.1,
    "errorbar.capsize": 2.0,
    "legend.frameon": False,
}

_Y_LABEL = {"g2": "$g^{(2)}(0)$", "I": "$\\mathcal{I}$"}
_SERIES_LABEL = {"on": "with feedback", "off": "without feedback"}


def _save(fig, out_base) -> list[Path]:
    """Write <base>.svg and <base>.png without any date metadata."""
    base = Path(out_base)
    base.parent.mkdir(parents=True, exist_ok=True)
    svg, png = base.with_suffix(".svg"), base.with_suffix(".png")
    fig.savefig(svg, metadata={"Date": None})
    fig.savefig(png, metadata={"Software": None})
    plt.close(fig)
    return [svg, png]


def _color(key: str, i: int) -> str:
    return SERIES_COLORS.get(key, _FALLBACK[i % len(_FALLBACK)])


def _draw_panel(ax, data: PanelData, letter: str) -> None:
    spec = data.spec
    for i, s in enumerate(data.series):
        ax.errorbar(
            s.x,
            s.y,
            yerr=s.err,
            fmt="o-",
            ms=3,
            color=_color(s.key, i),
            label=_SERIES_LABEL.get(s.key, s.key),
        )
    ax.set_xscale(spec.xscale)
    ax.set_yscale(spec.yscale)
    ax.set_xlabel(spec.xlabel or spec.x)
    ax.set_ylabel(spec.ylabel or _Y_LABEL[spec.y])
    if spec.title:
        ax.set_title(spec.title, fontsize=9)
    ax.text(0.04, 0.92, f"({letter})", transform=ax.transAxes, fontsize=9)


def build_sweep_figure(panels: list[PanelSpec]):
    """Lay the panels out on a grid: g2 row on top, I row below.

    Returns the matplotlib Figure; ``plot_sweep`` is the file-writing wrapper.
    """
    if not panels:
        raise FigureKitError("no panels given")
    loaded = [load_panel(p) for p in panels]  # validate everything up front

    rows: list[list[PanelData]] = []
    for kind in ("g2", "I"):
        row = [d for d in loaded if d.spec.y == kind]
        if row:
            rows.append(row)
    ncols = max(len(r) for r in rows)
    fig, axes = plt.subplots(
        len(rows),
        ncols,
        figsize=(2.7 * ncols, 2.3 * len(rows)),
        squeeze=False,
        constrained_layout=True,
    )
    letter = iter("abcdefghijklmnopqrstuvwxyz")
    for r, row in enumerate(rows):
        for c in range(ncols):
            ax = axes[r][c]
            if c < len(row):
                _draw_panel(ax, row[c], next(letter))
            else:
                ax.set_axis_off()
    handles, labels = axes[0][0].get_legend_handles_labels()
    fig.legend(handles, labels, loc="outside upper center", ncols=len(labels))
    return fig


def plot_sweep(panels: list[PanelSpec], out_base=None) -> list[Path]:
    """Render one multi-panel image (SVG + PNG) from sweep summary CSVs.

    All inputs are validated before anything is written; the output path base
    defaults to the first panel's ``out`` field.
    """
    if out_base is None:
        out_base = next((p.out for p in panels if p.out), None)
    if out_base is None:
        raise FigureKitError("no output path: pass out_base or set PanelSpec.out")
    with matplotlib.rc_context(_STYLE):
        fig = build_sweep_figure(panels)
        return _save(fig, out_base)


def build_histogram_figure(
    with_feedback, without_feedback, labels=("with feedback", "without feedback")
):
    """Overlay two coincidence histograms plus a zoom on the central peak."""
    t1, n1 = load_histogram_csv(with_feedback)
    t2, n2 = load_histogram_csv(without_feedback)
    require_same_grid(with_feedback, t1, without_feedback, t2)

    fig, ax = plt.subplots(figsize=(5.2, 3.4), constrained_layout=True)
    ax.plot(t1, n2, drawstyle="steps-mid", color=SERIES_COLORS["off"], label=labels[1])
    ax.plot(t1, n1, drawstyle="steps-mid", color=SERIES_COLORS["on"], label=labels[0])
    ax.set_xlabel("$\\gamma t'$")
    ax.set_ylabel("coincidences")
    ax.legend(loc="upper left")

    # Central-peak zoom spanning |gamma t'| <= 2.
    axins = ax.inset_axes([0.62, 0.45, 0.35, 0.5])
    axins.plot(t1, n2, drawstyle="steps-mid", color=SERIES_COLORS["off"])
    axins.plot(t1, n1, drawstyle="steps-mid", color=SERIES_COLORS["on"])
    axins.set_xlim(-2.0, 2.0)
    central = np.concatenate([n1[np.abs(t1) <= 2.0], n2[np.abs(t2) <= 2.0]])
    top = float(central.max()) if central.size else 0.0
    axins.set_ylim(0.0, 1.15 * top if top > 0 else 1.0)
    axins.tick_params(labelsize=7)
    ax.indicate_inset_zoom(axins, edgecolor="0.4")
    return fig


def plot_histograms(with_feedback, without_feedback, out_base, labels=None) -> list[Path]:
    """Render the two-histogram overlay (SVG + PNG) from histogram CSVs."""
    kwargs = {} if labels is None else {"labels": tuple(labels)}
    with matplotlib.rc_context(_STYLE):
        fig = build_histogram_figure(with_feedback, without_feedback, **kwargs)
        return _save(fig, out_base)
