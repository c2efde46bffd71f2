"""Complexity report formats (HTML and PDF)."""

from pathlib import Path
from typing import List, Optional, Union

import pandas as pd
import plotly.graph_objects as go
from plotly.subplots import make_subplots

from .config import RunConfig
from .log import get_logger
from .profiler import ComplexityReport, comparison_table, count

logger = get_logger(__name__)

GROUP_COLORS = {
    "front": "steelblue",
    "core": "darkorange",
    "back": "seagreen",
    "postnet": "firebrick",
}


class HTMLComplexityReport:
    """Interactive complexity report of one configuration and the presets."""

    def __init__(
        self,
        config: RunConfig,
        label: Optional[str] = None,
        presets: Optional[List[str]] = None,
    ):
        """
        Initialize the report.

        Args:
            config: Configuration whose layer groups are broken down.
            label: Name shown for ``config``.
            presets: Presets compared against their published complexity;
                all published rows by default.
        """
        self.config = config
        self.report: ComplexityReport = count(config, label=label)
        self.presets = presets
        self._table: Optional[pd.DataFrame] = None

    @property
    def table(self) -> pd.DataFrame:
        if self._table is None:
            self._table = comparison_table(self.presets)
        return self._table

    def generate(
        self, output_file: Union[str, Path] = "complexity.html"
    ) -> None:
        """
        Write the HTML report.

        Args:
            output_file: Output filename for the HTML report.
        """
        fig = self.figure()
        fig.write_html(str(output_file))
        _log_written("HTML", output_file)

    def figure(self) -> go.Figure:
        """Build the report figure without writing it."""
        fig = make_subplots(
            rows=4,
            cols=2,
            subplot_titles=(
                "Totals",
                "Layer groups",
                None,
                None,
                None,
                None,
                None,
                None,
            ),
            specs=[
                [{"type": "table"}, {"type": "table"}],
                [{"colspan": 2}, None],
                [{"colspan": 2}, None],
                [{"colspan": 2}, None],
            ],
            row_heights=[0.20, 0.27, 0.27, 0.27],
            vertical_spacing=0.10,
        )
        self._add_tables(fig)
        self._add_macs_bars(fig)
        self._add_param_bars(fig)
        self._add_group_breakdown(fig)
        self._update_layout(fig)
        return fig

    def _add_tables(self, fig: go.Figure) -> None:
        report = self.report
        totals = {
            "Parameters": f"{report.params / 1e3:.1f}K",
            "MACs/frame": f"{report.macs_per_frame / 1e6:.3f}M",
            "MACs/s": f"{report.macs_per_second / 1e6:.1f}M",
            "Frame rate": f"{report.frame_rate:.0f} Hz",
            "Layers": f"{len(report.entries)}",
        }
        fig.add_trace(
            go.Table(
                header=dict(
                    values=["Metric", "Value"],
                    fill_color="paleturquoise",
                    align="left",
                ),
                cells=dict(
                    values=[list(totals), list(totals.values())],
                    fill_color="lavender",
                    align="left",
                ),
            ),
            row=1,
            col=1,
        )

        groups = report.group_totals()
        fig.add_trace(
            go.Table(
                header=dict(
                    values=["Group", "Params", "MACs/s"],
                    fill_color="lightblue",
                    align="left",
                ),
                cells=dict(
                    values=[
                        list(groups.index),
                        [f"{p / 1e3:.1f}K" for p in groups["params"]],
                        [
                            f"{m / 1e6:.1f}M"
                            for m in groups["macs_per_second"]
                        ],
                    ],
                    fill_color="aliceblue",
                    align="left",
                ),
            ),
            row=1,
            col=2,
        )

    def _add_macs_bars(self, fig: go.Figure) -> None:
        """Analytic vs published MACs/s per preset."""
        table = self.table
        fig.add_trace(
            go.Bar(
                x=table["preset"],
                y=table["macs_per_second"] / 1e6,
                name="Analytic",
                marker_color="blue",
                legendgroup="macs",
                legendgrouptitle_text="MACs/s (M)",
            ),
            row=2,
            col=1,
        )
        fig.add_trace(
            go.Bar(
                x=table["preset"],
                y=table["published_macs_m"],
                name="Published",
                marker_color="orange",
                legendgroup="macs",
            ),
            row=2,
            col=1,
        )
        fig.update_yaxes(title_text="MACs/s (M)", type="log", row=2, col=1)

    def _add_param_bars(self, fig: go.Figure) -> None:
        table = self.table
        fig.add_trace(
            go.Bar(
                x=table["preset"],
                y=table["params"] / 1e3,
                name="Analytic",
                marker_color="blue",
                opacity=0.6,
                legendgroup="params",
                legendgrouptitle_text="Parameters (K)",
            ),
            row=3,
            col=1,
        )
        fig.add_trace(
            go.Bar(
                x=table["preset"],
                y=table["published_params_k"],
                name="Published",
                marker_color="orange",
                opacity=0.6,
                legendgroup="params",
            ),
            row=3,
            col=1,
        )
        fig.update_yaxes(title_text="Parameters (K)", row=3, col=1)

    def _add_group_breakdown(self, fig: go.Figure) -> None:
        """Per-layer MACs/s of the primary configuration, coloured by group."""
        layers = self.report.to_frame()
        for group, rows in layers.groupby("group", sort=False):
            fig.add_trace(
                go.Bar(
                    x=rows["name"],
                    y=rows["macs_per_second"] / 1e6,
                    name=str(group),
                    marker_color=GROUP_COLORS.get(str(group), "gray"),
                    legendgroup="layers",
                    legendgrouptitle_text="Layer MACs/s (M)",
                ),
                row=4,
                col=1,
            )
        fig.update_xaxes(title_text="Layer", row=4, col=1)
        fig.update_yaxes(title_text="MACs/s (M)", row=4, col=1)

    def _update_layout(self, fig: go.Figure) -> None:
        fig.update_layout(
            title_text=(
                f"Complexity report: {self.report.label} "
                f"({self.report.macs_per_second / 1e6:.1f}M MACs/s)"
            ),
            height=1400,
            barmode="group",
            showlegend=True,
            legend=dict(
                orientation="v",
                yanchor="top",
                y=0.98,
                xanchor="right",
                x=0.99,
                bgcolor="rgba(255,255,255,0.8)",
                bordercolor="lightgray",
                borderwidth=1,
                tracegroupgap=30,
                groupclick="toggleitem",
            ),
        )
        for text, y in (
            ("MACs per second by preset", 0.765),
            ("Parameters by preset", 0.495),
            ("Per-layer MACs per second", 0.225),
        ):
            fig.add_annotation(
                text=text,
                xref="paper",
                yref="paper",
                x=0.5,
                y=y,
                xanchor="center",
                yanchor="bottom",
                showarrow=False,
                font=dict(size=14),
            )


class PDFComplexityReport:
    """Static PDF version of :class:`HTMLComplexityReport` (Kaleido)."""

    def __init__(
        self,
        config: RunConfig,
        label: Optional[str] = None,
        presets: Optional[List[str]] = None,
    ):
        self.html = HTMLComplexityReport(config, label, presets)

    def generate(
        self, output_file: Union[str, Path] = "complexity.pdf"
    ) -> None:
        fig = self.html.figure()
        fig.write_image(str(output_file), width=1200, height=1400)
        _log_written("PDF", output_file)


def _log_written(kind: str, output_file: Union[str, Path]) -> None:
    path = Path(output_file)
    logger.info(
        "%s report generated: %s (%.0f KB)",
        kind,
        path,
        path.stat().st_size / 1024,
    )
