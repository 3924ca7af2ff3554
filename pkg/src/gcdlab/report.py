"""Report emission: SVG accuracy curves and a plain-text comparison table.

Charts are hand-written SVG (polylines on a framed plot area) so reports
need no plotting stack and diff cleanly.
"""

from __future__ import annotations

import glob
import logging
import os

from .harness import METRICS_COLUMNS

logger = logging.getLogger(__name__)

_PALETTE = (
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd",
    "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf",
)

WIDTH, HEIGHT = 720, 420
MARGIN_L, MARGIN_R, MARGIN_T, MARGIN_B = 60, 160, 40, 50


def read_metrics_csv(path: str) -> list[dict[str, float]]:
    """Parse a metrics CSV back into per-epoch dicts."""
    with open(path, "r", encoding="utf-8") as fh:
        lines = [ln.rstrip("\n") for ln in fh if ln.strip()]
    if not lines or not lines[0].startswith("#"):
        raise ValueError(f"{path}: missing version header")
    header = lines[1].split(",")
    if tuple(header) != METRICS_COLUMNS:
        raise ValueError(f"{path}: unexpected columns {header}")
    rows = []
    for ln in lines[2:]:
        parts = ln.split(",")
        if len(parts) != len(header):
            raise ValueError(f"{path}: ragged row {ln!r}")
        rows.append({k: float(v) for k, v in zip(header, parts)})
    if not rows:
        raise ValueError(f"{path}: no data rows")
    return rows


def find_run_metrics(run_dir: str) -> tuple[str, list[dict[str, float]]]:
    """Locate the single metrics CSV in a run directory."""
    candidates = sorted(glob.glob(os.path.join(run_dir, "metrics_*.csv")))
    if not candidates:
        raise FileNotFoundError(f"{run_dir}: no metrics_*.csv")
    path = candidates[0]
    tag = os.path.basename(path)[len("metrics_"):-len(".csv")]
    return tag, read_metrics_csv(path)


def _polyline(xs, ys, x0, y0, x1, y1, x_max, y_min, y_max, color, dash=""):
    span_x = max(x_max, 1e-12)
    span_y = max(y_max - y_min, 1e-12)
    points = []
    for x, y in zip(xs, ys):
        px = x0 + (x / span_x) * (x1 - x0)
        py = y1 - ((y - y_min) / span_y) * (y1 - y0)
        points.append(f"{px:.2f},{py:.2f}")
    dash_attr = f' stroke-dasharray="{dash}"' if dash else ""
    return (f'<polyline fill="none" stroke="{color}" stroke-width="1.5"{dash_attr} '
            f'points="{" ".join(points)}"/>')


def line_chart_svg(title: str, y_label: str,
                   series: list[tuple[str, list[float], list[float], str, str]],
                   y_min: float, y_max: float) -> str:
    """series entries: (label, xs, ys, color, dash)."""
    x0, y0 = MARGIN_L, MARGIN_T
    x1, y1 = WIDTH - MARGIN_R, HEIGHT - MARGIN_B
    x_max = max((max(xs) for _, xs, _, _, _ in series if xs), default=1)

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
        f'viewBox="0 0 {WIDTH} {HEIGHT}" font-family="monospace" font-size="11">',
        f'<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
        f'<text x="{(x0 + x1) / 2:.0f}" y="20" text-anchor="middle" font-size="14">{title}</text>',
        f'<rect x="{x0}" y="{y0}" width="{x1 - x0}" height="{y1 - y0}" fill="none" stroke="#333"/>',
    ]
    for i in range(5):
        frac = i / 4
        y_val = y_min + frac * (y_max - y_min)
        py = y1 - frac * (y1 - y0)
        parts.append(f'<line x1="{x0}" y1="{py:.1f}" x2="{x1}" y2="{py:.1f}" '
                     f'stroke="#ddd" stroke-width="0.5"/>')
        parts.append(f'<text x="{x0 - 6}" y="{py + 4:.1f}" text-anchor="end">{y_val:.2f}</text>')
        x_val = frac * x_max
        px = x0 + frac * (x1 - x0)
        parts.append(f'<text x="{px:.1f}" y="{y1 + 16}" text-anchor="middle">{x_val:.0f}</text>')
    parts.append(f'<text x="{(x0 + x1) / 2:.0f}" y="{HEIGHT - 12}" text-anchor="middle">epoch</text>')
    parts.append(f'<text x="16" y="{(y0 + y1) / 2:.0f}" text-anchor="middle" '
                 f'transform="rotate(-90 16 {(y0 + y1) / 2:.0f})">{y_label}</text>')

    legend_y = y0 + 10
    for label, xs, ys, color, dash in series:
        parts.append(_polyline(xs, ys, x0, y0, x1, y1, x_max, y_min, y_max, color, dash))
        dash_attr = f' stroke-dasharray="{dash}"' if dash else ""
        parts.append(f'<line x1="{x1 + 8}" y1="{legend_y}" x2="{x1 + 28}" y2="{legend_y}" '
                     f'stroke="{color}" stroke-width="1.5"{dash_attr}/>')
        parts.append(f'<text x="{x1 + 32}" y="{legend_y + 4}">{label}</text>')
        legend_y += 16
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def _accuracy_chart(runs: list[tuple[str, list[dict[str, float]]]]) -> str:
    series = []
    for i, (tag, rows) in enumerate(runs):
        color = _PALETTE[i % len(_PALETTE)]
        xs = [r["epoch"] for r in rows]
        series.append((f"{tag} old", xs, [r["acc_old"] for r in rows], color, ""))
        series.append((f"{tag} new", xs, [r["acc_new"] for r in rows], color, "4 3"))
    return line_chart_svg("unlabeled accuracy by epoch", "accuracy", series, 0.0, 1.0)


def _known_count_chart(runs: list[tuple[str, list[dict[str, float]]]]) -> str:
    top = max(r["known_count"] for _, rows in runs for r in rows)
    series = []
    for i, (tag, rows) in enumerate(runs):
        color = _PALETTE[i % len(_PALETTE)]
        xs = [r["epoch"] for r in rows]
        series.append((tag, xs, [r["known_count"] for r in rows], color, ""))
    return line_chart_svg("confident known-class samples by epoch", "count",
                          series, 0.0, max(top, 1.0))


def comparison_table(runs: list[tuple[str, list[dict[str, float]]]]) -> str:
    width = max(len(tag) for tag, _ in runs) + 2
    lines = [f"{'run':<{width}} {'final_all':>9} {'final_old':>9} {'final_new':>9}"]
    finals = []
    for tag, rows in runs:
        last = rows[-1]
        finals.append((last["acc_all"], last["acc_old"], last["acc_new"]))
        lines.append(f"{tag:<{width}} {last['acc_all']:>9.4f} {last['acc_old']:>9.4f} "
                     f"{last['acc_new']:>9.4f}")
    if len(runs) > 1:
        base = finals[0]
        lines.append("")
        for (tag, _), vals in zip(runs[1:], finals[1:]):
            deltas = [v - b for v, b in zip(vals, base)]
            lines.append(f"{'Δ ' + tag:<{width}} {deltas[0]:>+9.4f} {deltas[1]:>+9.4f} "
                         f"{deltas[2]:>+9.4f}")
        lines.append("")
        lines.append(f"(Δ rows: margin over the first run, {runs[0][0]})")
    return "\n".join(lines) + "\n"


def emit_report(run_dirs: list[str], out: str) -> int:
    """Charts + table for a set of run directories.

    Unreadable runs are skipped with a warning; the exit status is nonzero
    only when no run could be used.
    """
    runs = []
    for run_dir in run_dirs:
        try:
            runs.append(find_run_metrics(run_dir))
        except (OSError, ValueError) as exc:
            logger.warning("skipping %s: %s", run_dir, exc)
    if not runs:
        logger.error("no usable metrics among %s", run_dirs)
        return 1
    os.makedirs(out, exist_ok=True)
    with open(os.path.join(out, "accuracy.svg"), "w", encoding="utf-8", newline="\n") as fh:
        fh.write(_accuracy_chart(runs))
    with open(os.path.join(out, "known_count.svg"), "w", encoding="utf-8", newline="\n") as fh:
        fh.write(_known_count_chart(runs))
    with open(os.path.join(out, "report.txt"), "w", encoding="utf-8", newline="\n") as fh:
        fh.write(comparison_table(runs))
    return 0
