"""Command line entry point: render every figure described by a spec document.

The document is JSON::

    {
      "figures": [
        {"kind": "sweep", "out": "fig_sweep",
         "panels": [{"csv": "sweep/summary.csv", "x": "value", "y": "g2",
                     "xscale": "log", "xlabel": "\\u03b3 t_p"}, ...]},
        {"kind": "histograms", "out": "fig_histograms",
         "with_feedback": "on/histogram.csv",
         "without_feedback": "off/histogram.csv"}
      ]
    }

CSV paths are resolved relative to the document; output bases are resolved
relative to --out-dir (default: the document's directory).  Exit codes:
0 success, 1 invalid document or CSV content, 3 unreadable/unwritable files.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .panels import FigureKitError, PanelSpec
from .render import plot_histograms, plot_sweep

_PANEL_KEYS = {
    "csv": "csv_path",
    "x": "x",
    "y": "y",
    "split": "split",
    "xscale": "xscale",
    "yscale": "yscale",
    "xlabel": "xlabel",
    "ylabel": "ylabel",
    "title": "title",
}


def _panel_from_dict(d: dict, base: Path) -> PanelSpec:
    if not isinstance(d, dict):
        raise FigureKitError(f"panel entry must be an object, got {type(d).__name__}")
    unknown = set(d) - set(_PANEL_KEYS)
    if unknown:
        raise FigureKitError(f"unknown panel keys: {', '.join(sorted(unknown))}")
    if "csv" not in d:
        raise FigureKitError("panel entry needs a 'csv' path")
    kwargs = {dest: d[src] for src, dest in _PANEL_KEYS.items() if src in d}
    kwargs["csv_path"] = str(base / kwargs["csv_path"])
    return PanelSpec(**kwargs)


def render_document(doc: dict, base: Path, out_dir: Path) -> list[Path]:
    figures = doc.get("figures")
    if not isinstance(figures, list) or not figures:
        raise FigureKitError("document needs a non-empty 'figures' list")
    written: list[Path] = []
    for i, entry in enumerate(figures):
        if not isinstance(entry, dict) or "kind" not in entry:
            raise FigureKitError(f"figures[{i}]: each entry needs a 'kind'")
        kind = entry["kind"]
        out = entry.get("out")
        if not out:
            raise FigureKitError(f"figures[{i}]: missing 'out' image path base")
        out_base = out_dir / out
        if kind == "sweep":
            panels = entry.get("panels")
            if not isinstance(panels, list) or not panels:
                raise FigureKitError(f"figures[{i}]: sweep needs a non-empty 'panels' list")
            specs = [_panel_from_dict(p, base) for p in panels]
            written += plot_sweep(specs, out_base)
        elif kind == "histograms":
            try:
                h_on = entry["with_feedback"]
                h_off = entry["without_feedback"]
            except KeyError as exc:
                raise FigureKitError(
                    f"figures[{i}]: histograms needs 'with_feedback' and 'without_feedback'"
                ) from exc
            written += plot_histograms(base / h_on, base / h_off, out_base)
        else:
            raise FigureKitError(f"figures[{i}]: unknown kind {kind!r}")
    return written


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="figurekit", description="Render figures from photonloop CSV outputs."
    )
    parser.add_argument("document", help="JSON figure-spec document")
    parser.add_argument(
        "--out-dir", default=None, help="directory for image output (default: document's)"
    )
    args = parser.parse_args(argv)

    doc_path = Path(args.document)
    try:
        with open(doc_path) as f:
            doc = json.load(f)
    except OSError as exc:
        print(f"figurekit: cannot read {doc_path}: {exc}", file=sys.stderr)
        return 3
    except json.JSONDecodeError as exc:
        print(f"figurekit: {doc_path} is not valid JSON: {exc}", file=sys.stderr)
        return 1

    base = doc_path.parent
    out_dir = Path(args.out_dir) if args.out_dir else base
    try:
        written = render_document(doc, base, out_dir)
    except FigureKitError as exc:
        print(f"figurekit: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"figurekit: I/O error: {exc}", file=sys.stderr)
        return 3
    for path in written:
        print(path)
    return 0


if __name__ == "__main__":
    sys.exit(main())
