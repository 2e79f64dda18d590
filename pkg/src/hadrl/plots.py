"""PNG charts rendered from the CSV files written by the command-line tools."""
from __future__ import annotations

import csv
from collections import defaultdict
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

# schema name -> (x column, y column, series column, numeric columns)
SCHEMAS = {
    "acceptance": ("phase", "acceptance_ratio", "agent", ("rho", "phase", "accepted", "arrivals", "acceptance_ratio")),
    "validation": ("arrival", "cumulative_acceptance", "agent", ("arrival", "accepted_total", "cumulative_acceptance")),
    "timing": ("x", "mean_seconds", "agent", ("num_vnfs", "num_servers", "mean_seconds", "max_seconds", "mean_steps")),
}
REQUIRED = {
    "acceptance": {"agent", "phase", "acceptance_ratio"},
    "validation": {"agent", "arrival", "cumulative_acceptance"},
    "timing": {"sweep", "agent", "num_vnfs", "num_servers", "mean_seconds"},
}


class PlotError(ValueError):
    pass


def detect_schema(header: list[str]) -> str:
    cols = set(header)
    for name, req in REQUIRED.items():
        if req <= cols:
            return name
    raise PlotError(f"row 1: unrecognised header {header}")


def read_rows(path: Path) -> tuple[str, list[dict]]:
    """Parse and type-check a result CSV; errors name the offending row (1 = header)."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if not header:
            raise PlotError("empty CSV")
        schema = detect_schema(header)
        numeric = [c for c in SCHEMAS[schema][3] if c in header]
        rows = []
        for lineno, raw in enumerate(reader, start=2):
            if len(raw) != len(header):
                raise PlotError(f"row {lineno}: expected {len(header)} fields, got {len(raw)}")
            row = dict(zip(header, raw))
            for c in numeric:
                try:
                    row[c] = float(row[c])
                except ValueError:
                    raise PlotError(f"row {lineno}: column {c!r} is not a number: {row[c]!r}") from None
            rows.append(row)
    if not rows:
        raise PlotError("no data rows")
    return schema, rows


def render_csv(path: Path, out_dir: Path) -> Path:
    schema, rows = read_rows(path)
    fig = _figure(schema, rows)
    out_dir.mkdir(parents=True, exist_ok=True)
    out = out_dir / (path.stem + ".png")
    # fixed metadata keeps repeated renders byte-identical
    fig.savefig(out, dpi=100, metadata={"Software": None})
    plt.close(fig)
    return out


def _figure(schema: str, rows: list[dict]):
    if schema == "timing":
        sweeps = sorted({r["sweep"] for r in rows})
        fig, axes = plt.subplots(1, len(sweeps), figsize=(5 * len(sweeps), 4), squeeze=False)
        for ax, sweep in zip(axes[0], sweeps):
            xcol = "num_vnfs" if sweep == "vnfs" else "num_servers"
            series = defaultdict(list)
            for r in rows:
                if r["sweep"] == sweep:
                    series[r["agent"]].append((r[xcol], r["mean_seconds"]))
            for agent in sorted(series):
                xs, ys = zip(*sorted(series[agent]))
                ax.plot(xs, ys, marker="o", label=agent)
            ax.set_xlabel("VNFs per request" if sweep == "vnfs" else "servers in substrate")
            ax.set_ylabel("mean placement time (s)")
            ax.legend()
        fig.tight_layout()
        return fig
    xcol, ycol, scol, _ = SCHEMAS[schema]
    series = defaultdict(list)
    for r in rows:
        label = r[scol] if schema == "validation" or "rho" not in r else f"{r[scol]} rho={r['rho']:g}"
        series[label].append((r[xcol], r[ycol]))
    fig, ax = plt.subplots(figsize=(7, 4))
    for label in sorted(series):
        xs, ys = zip(*sorted(series[label]))
        ax.plot(xs, ys, marker="o" if schema == "acceptance" else None, label=label)
    ax.set_xlabel("training phase" if schema == "acceptance" else "arrivals")
    ax.set_ylabel("acceptance ratio")
    ax.set_ylim(0, 1.02)
    ax.legend()
    fig.tight_layout()
    return fig
