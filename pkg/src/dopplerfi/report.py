"""CSV tables and plot scripts for experiment results.

Rendering returns text so the HTTP service can stream it; the
``write_*`` helpers persist it. Column order is fixed so identical runs
produce byte-identical files.
"""

from __future__ import annotations

import csv
import io
import logging
import math
from pathlib import Path
from typing import Iterable, Mapping, Sequence

logger = logging.getLogger(__name__)

METRIC_COLUMNS = (
    "trials",
    "bits",
    "bit_errors",
    "ber",
    "ber_ci95",
    "pre_fec_ber",
    "recovered_fraction",
    "frames_detected",
    "throughput_bps",
    "throughput_ci95",
    "legacy_per",
    "legacy_throughput_loss",
    "legacy_ci95",
)


def _cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        if math.isnan(value):
            return ""
        return f"{value:.6g}"
    return str(value)


def render_csv(rows: Iterable[Mapping[str, object]], columns: Sequence[str]) -> str:
    """Render *rows* with a header; missing cells are left empty."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([_cell(row.get(c)) for c in columns])
    return buf.getvalue()


def write_csv(rows: Iterable[Mapping[str, object]], columns: Sequence[str], path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(render_csv(rows, columns), encoding="utf-8")
    logger.info("Wrote %s", path)
    return path


# ---------------------------------------------------------------------------
# Plot scripts
# ---------------------------------------------------------------------------

_PLOT_TEMPLATE = '''\
"""Plot {title} from {csv_name}."""

import csv

import matplotlib.pyplot as plt

with open({csv_name!r}, newline="", encoding="utf-8") as fh:
    rows = list(csv.DictReader(fh))

x = [float(r[{x!r}]) for r in rows]
fig, ax = plt.subplots()
for column in {y_columns!r}:
    y = [float(r[column]) if r[column] else float("nan") for r in rows]
    ax.plot(x, y, marker="o", label=column)
ax.set_xlabel({x_label!r})
ax.set_ylabel({y_label!r})
ax.set_title({title!r})
ax.grid(True)
ax.legend()
fig.savefig({image_name!r}, dpi=150)
'''

_CSI_TEMPLATE = '''\
"""CSI amplitude per subcarrier over time from {csv_name}."""

import csv
from collections import defaultdict

import matplotlib.pyplot as plt

series = defaultdict(list)
with open({csv_name!r}, newline="", encoding="utf-8") as fh:
    for r in csv.DictReader(fh):
        series[float(r["time"])].append((int(r["k"]), float(r["amplitude"])))

fig, ax = plt.subplots()
for t, points in sorted(series.items()):
    k, amp = zip(*points)
    ax.plot(k, amp, label=f"{{t * 1e6:.0f}} us")
ax.set_xlabel("subcarrier index")
ax.set_ylabel("CSI amplitude")
ax.legend(fontsize="small")
fig.savefig({image_name!r}, dpi=150)
'''


def render_plot_script(
    csv_name: str,
    x: str,
    y_columns: Sequence[str],
    *,
    title: str = "",
    y_label: str = "",
) -> str:
    """Matplotlib script plotting *y_columns* against *x* from a sibling CSV."""
    return _PLOT_TEMPLATE.format(
        csv_name=csv_name,
        x=x,
        y_columns=list(y_columns),
        x_label=x,
        y_label=y_label or ", ".join(y_columns),
        title=title or f"{', '.join(y_columns)} vs {x}",
        image_name=Path(csv_name).with_suffix(".png").name,
    )


def write_plot_script(csv_path: str | Path, x: str, y_columns: Sequence[str], **kwargs) -> Path:
    csv_path = Path(csv_path)
    script = csv_path.with_name(f"plot_{csv_path.stem}.py")
    script.write_text(render_plot_script(csv_path.name, x, y_columns, **kwargs), encoding="utf-8")
    logger.info("Wrote %s", script)
    return script


def write_csi_plot_script(csv_path: str | Path) -> Path:
    csv_path = Path(csv_path)
    script = csv_path.with_name(f"plot_{csv_path.stem}.py")
    image = csv_path.with_suffix(".png").name
    script.write_text(_CSI_TEMPLATE.format(csv_name=csv_path.name, image_name=image), encoding="utf-8")
    logger.info("Wrote %s", script)
    return script
