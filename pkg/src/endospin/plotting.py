"""Quick-look SVG rendering of a trace. CSV stays the canonical output."""

from __future__ import annotations

import io

from .traces import SpectrumTrace


def render_svg(trace: SpectrumTrace, title: str = "") -> str:
    """Plain line plot as SVG text; byte-stable for identical input."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    with matplotlib.rc_context({"svg.hashsalt": "endospin", "svg.fonttype": "none"}):
        fig, ax = plt.subplots(figsize=(6, 3.5))
        try:
            ax.plot(trace.axis, trace.amplitude, lw=0.8)
            ax.set_xlabel(trace.header[0])
            ax.set_ylabel(trace.value_name)
            if title:
                ax.set_title(title)
            fig.tight_layout()
            buf = io.StringIO()
            fig.savefig(buf, format="svg", metadata={"Date": None})
        finally:
            plt.close(fig)
    return buf.getvalue()
