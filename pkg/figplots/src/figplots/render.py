"""Render the figure data series CSVs (fig2..fig7) to images.

Strictly CSV-to-image: inputs are the versioned series files written by the
tomography CLI (`# schema=figN.v1` first line plus a documented column set)
and the output is one image per figure kind.  Rendering is a pure function
of the CSV content and the spec; with the pinned style, re-rendering the
same inputs yields byte-identical files.
"""

from __future__ import annotations

import argparse
import csv
import sys
from dataclasses import dataclass
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

SCHEMA_VERSION = "v1"

EXPECTED_COLUMNS = {
    "fig2": ["n", "entry", "variance"],
    "fig3": ["n", "frame", "repetition", "samples_to_converge", "censored"],
    "fig4": ["n", "scenario", "entry", "repetition", "samples_to_converge", "censored"],
    "fig5": ["n", "entry", "variance"],
    "fig6": ["n", "entry", "variance"],
    "fig7": ["n", "dim", "trials", "mean_sum", "std_sum"],
}

#: Log-scale variance axis where the series spans decades.
DEFAULT_LOG_Y = {"fig3": True, "fig6": True}

STYLE = {
    "figure.dpi": 120,
    "savefig.dpi": 120,
    "font.size": 9,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "legend.frameon": False,
}

ENTRY_TITLES = {
    ";": "identity entry",
    ";X0": "(identity, X0) entry",
    "X0;X0": "(X0, X0) entry",
}


class SchemaError(ValueError):
    pass


@dataclass
class PlotSpec:
    """What to render: figure kind, input series, output path, toggles."""

    kind: str
    inputs: list
    output: str
    log_y: bool | None = None  # None = per-kind default
    error_bars: bool = True


def read_series(path, kind: str):
    """Load one CSV, validating the schema line and column set."""
    expected = EXPECTED_COLUMNS[kind]
    with open(path) as fh:
        first = fh.readline().strip()
        if first != f"# schema={kind}.{SCHEMA_VERSION}":
            raise SchemaError(
                f"{path}: expected '# schema={kind}.{SCHEMA_VERSION}', found {first!r}"
            )
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != expected:
            raise SchemaError(
                f"{path}: expected columns {expected}, found {header}"
            )
        rows = [dict(zip(expected, row)) for row in reader if row]
    if not rows:
        raise SchemaError(f"{path}: no data rows")
    return rows


def _entry_label(entry: str) -> str:
    return ENTRY_TITLES.get(entry, entry or "identity entry")


def _mean_std(groups: dict):
    out = {}
    for key, values in groups.items():
        arr = np.asarray(values, dtype=float)
        out[key] = (arr.mean(), arr.std())
    return out


def _variance_panels(rows, fig, log_y: bool):
    entries = sorted({row["entry"] for row in rows})
    axes = fig.subplots(len(entries), 1, squeeze=False)[:, 0]
    for ax, entry in zip(axes, entries):
        pts = sorted(
            (int(r["n"]), float(r["variance"]))
            for r in rows
            if r["entry"] == entry
        )
        ns, vs = zip(*pts)
        ax.plot(ns, vs, marker="o", label=_entry_label(entry))
        ax.set_ylabel("variance")
        ax.set_title(_entry_label(entry))
        if log_y:
            ax.set_yscale("log")
    axes[-1].set_xlabel("qubits n")


def _convergence_series(rows, key_col):
    """Group samples-to-convergence by (series key, n), censored rows dropped."""
    groups: dict = {}
    for r in rows:
        if int(r["censored"]):
            continue
        key = (r[key_col], int(r["n"]))
        groups.setdefault(key, []).append(int(r["samples_to_converge"]))
    return _mean_std(groups)


def _plot_convergence(ax, stats, series_names, error_bars: bool):
    for name in series_names:
        pts = sorted(
            (n, *stats[(name, n)]) for (s, n) in stats if s == name
        )
        if not pts:
            continue
        ns, means, stds = zip(*pts)
        if error_bars:
            ax.errorbar(
                ns, means, yerr=stds, marker="o", capsize=3, label=name
            )
        else:
            ax.plot(ns, means, marker="o", label=name)
    ax.set_ylabel("samples to convergence")
    ax.legend()


def build_figure(spec: PlotSpec):
    """Assemble the matplotlib figure for a spec (pure, nothing written)."""
    kind = spec.kind
    if kind not in EXPECTED_COLUMNS:
        raise ValueError(f"unknown figure kind {kind!r}")
    rows = []
    for path in spec.inputs:
        rows.extend(read_series(path, kind))
    log_y = DEFAULT_LOG_Y.get(kind, False) if spec.log_y is None else spec.log_y
    with plt.rc_context(STYLE):
        if kind in ("fig2", "fig5", "fig6"):
            fig = plt.figure(figsize=(5, 5.5))
            _variance_panels(rows, fig, log_y)
        elif kind == "fig3":
            fig = plt.figure(figsize=(5, 3.6))
            ax = fig.subplots()
            stats = _convergence_series(rows, "frame")
            # blue = optimized dual, orange = shadow dual (default cycle)
            _plot_convergence(ax, stats, ["min", "shadow"], spec.error_bars)
            ax.set_xlabel("qubits n")
            if log_y:
                ax.set_yscale("log")
        elif kind == "fig4":
            entries = sorted({r["entry"] for r in rows})
            fig = plt.figure(figsize=(5, 2.6 * len(entries)))
            axes = fig.subplots(len(entries), 1, squeeze=False)[:, 0]
            for ax, entry in zip(axes, entries):
                sub = [r for r in rows if r["entry"] == entry]
                stats = _convergence_series(sub, "scenario")
                _plot_convergence(ax, stats, ["single", "layer"], spec.error_bars)
                ax.set_title(_entry_label(entry))
                if log_y:
                    ax.set_yscale("log")
            axes[-1].set_xlabel("qubits n")
        elif kind == "fig7":
            fig = plt.figure(figsize=(5, 3.6))
            ax = fig.subplots()
            pts = sorted(
                (int(r["n"]), float(r["mean_sum"]), float(r["std_sum"]))
                for r in rows
            )
            ns, means, stds = zip(*pts)
            if spec.error_bars:
                ax.errorbar(ns, means, yerr=stds, marker="o", capsize=3)
            else:
                ax.plot(ns, means, marker="o")
            ax.set_xlabel("system size n (matrix dimension n^2)")
            ax.set_ylabel("sum of matrix entries")
        fig.tight_layout()
    return fig


def render(spec: PlotSpec) -> None:
    """Render a spec to its output image; nothing is written on error."""
    fig = build_figure(spec)
    out = Path(spec.output)
    out.parent.mkdir(parents=True, exist_ok=True)
    try:
        # strip the creator metadata so identical inputs give identical bytes
        fig.savefig(out, metadata={"Software": None})
    finally:
        plt.close(fig)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="figplots-render",
        description="Render tomography figure CSV series to images",
    )
    parser.add_argument("--fig", required=True, choices=sorted(EXPECTED_COLUMNS))
    parser.add_argument("--in", dest="inputs", nargs="+", required=True)
    parser.add_argument("--out", required=True)
    parser.add_argument("--log-y", action="store_true", default=None)
    parser.add_argument("--no-error-bars", action="store_true")
    args = parser.parse_args(argv)
    spec = PlotSpec(
        kind=args.fig,
        inputs=args.inputs,
        output=args.out,
        log_y=args.log_y,
        error_bars=not args.no_error_bars,
    )
    try:
        render(spec)
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
