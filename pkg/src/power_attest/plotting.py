"""Plot-data emission for traces and templates.

Plots are CSV-first: ``emit_trace_plot`` writes ``series,index,value`` rows
that any external tool can render, with trigger onsets emitted as dedicated
marker rows at their exact sample indices. ``emit_trace_image`` optionally
rasterizes such a CSV with matplotlib when it is installed.
"""

from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

from .errors import IoError, PowerAttestError
from .template import Template
from .trace import Trace, execution_window

MAX_POINTS_PER_SERIES = 65536


def _auto_stride(length: int) -> int:
    return max(1, -(-length // MAX_POINTS_PER_SERIES))


def _series_rows(name: str, values: np.ndarray, stride: int):
    for index in range(0, len(values), stride):
        yield name, index, values[index]


def emit_trace_plot(
    subject: Trace | Template,
    path,
    *,
    template: Template | None = None,
    stride: int | None = None,
) -> Path:
    """Write plot data for a trace, a template, or a trace/template overlay.

    With a template overlay the trace is trimmed to the template's bucket,
    so both series always have equal length. Long series are subsampled by
    ``stride`` (chosen automatically when omitted); trigger markers are
    written at their exact indices regardless of stride.
    """
    rows = []
    if isinstance(subject, Template):
        if template is not None:
            raise PowerAttestError("cannot overlay a template on a template")
        length = subject.bucket.size
        use = stride or _auto_stride(length)
        rows.extend(_series_rows("template", subject.samples, use))
    elif isinstance(subject, Trace):
        if template is not None:
            window = execution_window(subject, template.bucket)
            use = stride or _auto_stride(template.bucket.size)
            rows.extend(_series_rows("trace", window, use))
            rows.extend(_series_rows("template", template.samples, use))
        else:
            use = stride or _auto_stride(subject.samples.size)
            rows.extend(_series_rows("trace", subject.samples, use))
            if subject.triggers is not None:
                for onset in subject.triggers:
                    rows.append(("trigger", onset, subject.samples[onset]))
    else:
        raise PowerAttestError(
            f"cannot plot a {type(subject).__name__}; expected Trace or Template"
        )
    path = Path(path)
    try:
        with path.open("w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(("series", "index", "value"))
            for name, index, value in rows:
                writer.writerow((name, index, repr(float(value))))
    except OSError as exc:
        raise IoError(f"cannot write plot data to {path}: {exc}") from exc
    return path


def read_plot_csv(path) -> dict[str, list[tuple[int, float]]]:
    series: dict[str, list[tuple[int, float]]] = {}
    try:
        with Path(path).open("r", encoding="utf-8", newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            if header != ["series", "index", "value"]:
                raise PowerAttestError(f"{path} is not a plot-data CSV")
            for name, index, value in reader:
                series.setdefault(name, []).append((int(index), float(value)))
    except OSError as exc:
        raise IoError(f"cannot read plot data from {path}: {exc}") from exc
    return series


def emit_trace_image(csv_path, image_path) -> Path:
    """Rasterize a plot-data CSV; requires the optional matplotlib extra."""
    try:
        import matplotlib
    except ImportError as exc:
        raise PowerAttestError(
            "matplotlib is not installed; install the 'plot' extra for raster output"
        ) from exc
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    series = read_plot_csv(csv_path)
    fig, ax = plt.subplots(figsize=(10, 4))
    for name, points in series.items():
        xs = [p[0] for p in points]
        ys = [p[1] for p in points]
        if name == "trigger":
            ax.scatter(xs, ys, marker="x", color="red", zorder=3, label=name)
        else:
            ax.plot(xs, ys, linewidth=0.7, label=name)
    ax.set_xlabel("sample index")
    ax.set_ylabel("level")
    ax.legend(loc="upper right")
    image_path = Path(image_path)
    try:
        fig.savefig(image_path, dpi=120, bbox_inches="tight")
    except OSError as exc:
        raise IoError(f"cannot write image to {image_path}: {exc}") from exc
    finally:
        plt.close(fig)
    return image_path
