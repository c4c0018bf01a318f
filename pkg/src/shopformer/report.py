"""Combine metrics CSVs and draw per-metric line charts as standalone SVG files."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
from matplotlib.figure import Figure  # noqa: E402

from .errors import DataError  # noqa: E402
from .metrics import METRIC_COLUMNS, read_rows, write_rows  # noqa: E402

CHART_METRICS = ("AUC-ROC", "AUC-PR", "EER")
PREFERRED_X = ("num_tokens", "channels", "layers", "heads", "ff_dim", "window")


def combine(paths) -> tuple[list[str], list[dict]]:
    """Concatenate metrics CSVs; every file must carry the same column set."""
    paths = [Path(p) for p in paths]
    if not paths:
        raise DataError("report needs at least one metrics CSV")
    columns, rows = read_rows(paths[0])
    if not columns:
        raise DataError(f"{paths[0]}: empty file")
    for path in paths[1:]:
        cols, more = read_rows(path)
        if set(cols) != set(columns):
            missing = sorted(set(columns) - set(cols))
            extra = sorted(set(cols) - set(columns))
            raise DataError(
                f"inconsistent columns in {path} vs {paths[0]}: "
                f"missing {missing or '[]'}, unexpected {extra or '[]'}"
            )
        rows.extend(more)
    absent = [m for m in METRIC_COLUMNS if m not in columns]
    if absent:
        raise DataError(f"{paths[0]}: not a metrics table, missing {absent}")
    return columns, rows


def varying_columns(columns, rows) -> list[str]:
    return [c for c in columns if c not in METRIC_COLUMNS and len({r[c] for r in rows}) > 1]


def pick_x(columns, rows, x: str | None = None) -> str | None:
    if x is not None:
        if x not in columns:
            raise DataError(f"x column {x!r} not in {columns}")
        return x
    varying = varying_columns(columns, rows)
    for name in PREFERRED_X:
        if name in varying:
            return name
    return varying[0] if varying else None


def _as_number(text):
    try:
        return float(text)
    except ValueError:
        return None


def series_for(columns, rows, x: str | None) -> dict:
    """Group rows into labeled series keyed by the other varying columns."""
    group_cols = [c for c in varying_columns(columns, rows) if c != x]
    groups: dict[str, list[dict]] = {}
    for r in rows:
        label = ", ".join(f"{c}={r[c]}" for c in group_cols) or "run"
        groups.setdefault(label, []).append(r)
    return groups


def draw_chart(metric: str, groups: dict, x: str | None, path: Path):
    fig = Figure(figsize=(5.0, 3.5))
    ax = fig.add_subplot(1, 1, 1)
    all_x = [r[x] for rows in groups.values() for r in rows] if x else []
    numeric = x is not None and all(_as_number(v) is not None for v in all_x)
    categories = sorted(set(all_x), key=lambda v: (_as_number(v) is None, _as_number(v) or 0, v))
    for label, rows in groups.items():
        if x is None:
            xs = list(range(1, len(rows) + 1))
            ordered = rows
        elif numeric:
            ordered = sorted(rows, key=lambda r: float(r[x]))
            xs = [float(r[x]) for r in ordered]
        else:
            ordered = sorted(rows, key=lambda r: categories.index(r[x]))
            xs = [categories.index(r[x]) for r in ordered]
        ys = [100.0 * float(r[metric]) for r in ordered]
        ax.plot(xs, ys, marker="o", label=label)
    if x is not None and not numeric:
        ax.set_xticks(range(len(categories)), categories)
    elif x is not None:
        ax.set_xticks(sorted({float(v) for v in all_x}))
    ax.set_xlabel(x or "run")
    ax.set_ylabel(f"{metric} (%)")
    ax.set_title(f"{metric} vs {x or 'run'}")
    ax.grid(True, alpha=0.3)
    if len(groups) > 1:
        ax.legend(fontsize="small")
    fig.tight_layout()
    with matplotlib.rc_context({"svg.hashsalt": "shopformer", "svg.fonttype": "path"}):
        fig.savefig(path, format="svg", metadata={"Date": None})


def make_report(paths, out_dir, x: str | None = None) -> list[Path]:
    """Write ``combined.csv`` plus one SVG per headline metric; returns the written paths."""
    columns, rows = combine(paths)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = [out / "combined.csv"]
    write_rows(written[0], columns, rows)
    xcol = pick_x(columns, rows, x)
    groups = series_for(columns, rows, xcol)
    for metric in CHART_METRICS:
        path = out / f"{metric.lower().replace('-', '_')}.svg"
        draw_chart(metric, groups, xcol, path)
        written.append(path)
    return written
