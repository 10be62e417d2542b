"""SVG line charts for indicator-versus-target comparisons.

Rendering uses the Agg backend so no display server is needed, and the
SVG output is deterministic: the hash salt is pinned and the creation
date metadata is stripped, so the same inputs give byte-identical
files.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)

from .errors import ConfigError  # noqa: E402
from .series import TimeSeries  # noqa: E402


def render_comparison(path: str | Path, series: list[TimeSeries],
                      title: str = "") -> Path:
    """Write one SVG chart overlaying the given monthly series."""
    if not series:
        raise ConfigError("nothing to plot")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)

    with plt.rc_context({"svg.hashsalt": "itac"}):
        fig, ax = plt.subplots(figsize=(9, 4.5))
        try:
            for s in series:
                x = range(s.start, s.start + len(s) * s.step, s.step)
                ax.plot(list(x), s.values, lw=1.2,
                        label=s.name or "series")
            base = series[0]
            labels = base.labels()
            ticks = list(range(base.start, base.start + len(base) * base.step,
                               base.step))
            keep = max(1, len(ticks) // 8)
            ax.set_xticks(ticks[::keep])
            ax.set_xticklabels(labels[::keep], rotation=45, ha="right",
                               fontsize=8)
            if title:
                ax.set_title(title)
            ax.legend(fontsize=8)
            ax.grid(alpha=0.3)
            fig.tight_layout()
            fig.savefig(path, format="svg", metadata={"Date": None})
        finally:
            plt.close(fig)
    return path
