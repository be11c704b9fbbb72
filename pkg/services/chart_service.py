"""
Chart generation service using matplotlib (static) and Plotly (interactive).
Renders uncertainty-removal sweep curves and entropy histograms.
"""

import io
import json
import logging

# Set matplotlib backend before importing pyplot (required for headless use)
import matplotlib
matplotlib.use('Agg')

import matplotlib.pyplot as plt
import numpy as np
from matplotlib.figure import Figure
import plotly.graph_objects as go
from plotly.utils import PlotlyJSONEncoder

from config import config
from models.evaluation import SweepCurve
from models.uncertainty import EntropyHistogram

logger = logging.getLogger(__name__)

# Default color palette for curves (visually distinct, accessible)
DEFAULT_COLORS = [
    "#3498db",  # Blue
    "#e74c3c",  # Red
    "#2ecc71",  # Green
    "#9b59b6",  # Purple
    "#f39c12",  # Orange
    "#1abc9c",  # Teal
    "#e91e63",  # Pink
    "#00bcd4",  # Cyan
    "#ff9800",  # Amber
    "#607d8b",  # Blue Grey
]


def curve_color(index: int) -> str:
    return DEFAULT_COLORS[index % len(DEFAULT_COLORS)]


class ChartService:
    """
    Generates static chart images.

    Features:
    - TPR versus FDR sweep curves, one line per measure or method
    - Entropy histograms over [0, ln C]
    """

    def __init__(
        self,
        width: int = None,
        height: int = None,
        dpi: int = None,
        title: str = None,
    ):
        """
        Initialize the ChartService.

        Args:
            width: Figure width in inches
            height: Figure height in inches
            dpi: Dots per inch for output
            title: Chart title
        """
        self.width = width or config.CHART_WIDTH
        self.height = height or config.CHART_HEIGHT
        self.dpi = dpi or config.CHART_DPI
        self.title = title

    def generate_sweep_chart(self, curves: list[SweepCurve], output_format: str = "png") -> bytes:
        """
        Plot TPR against FDR for each curve.

        Args:
            curves: Sweep curves; each curve's label goes into the legend
            output_format: Image format (png, svg, pdf)

        Returns:
            Image data as bytes
        """
        title = self.title or "Uncertainty removal sweep"
        if not any(c.points for c in curves):
            return self._generate_empty_chart("No sweep points to plot", title, output_format)

        fig, ax = self._create_figure()
        for i, curve in enumerate(curves):
            if not curve.points:
                continue
            ax.plot(
                curve.fdrs(), curve.tprs(),
                marker='o', markersize=3, linewidth=1.5,
                color=curve_color(i), label=curve.label or f"curve {i + 1}",
            )
        ax.set_xlabel("False detection rate", fontsize=10, color='#2c3e50')
        ax.set_ylabel("True positive rate", fontsize=10, color='#2c3e50')
        ax.set_xlim(0.0, 1.0)
        ax.set_ylim(0.0, 1.0)
        ax.grid(True, linestyle='--', alpha=0.4)
        ax.set_title(title, fontsize=14, fontweight='bold', pad=15, color='#2c3e50')
        ax.legend(loc='lower right', framealpha=0.9, fontsize=8)
        return self._render_to_bytes(fig, output_format)

    def generate_histogram_chart(self, histogram: EntropyHistogram, output_format: str = "png") -> bytes:
        """Bar chart of histogram counts over the bin edges."""
        title = self.title or f"{histogram.measure.replace('_', ' ').capitalize()} histogram"
        if histogram.total == 0:
            return self._generate_empty_chart("No pixels to bin", title, output_format)

        fig, ax = self._create_figure()
        edges = np.asarray(histogram.edges)
        ax.bar(
            edges[:-1], histogram.counts,
            width=np.diff(edges), align='edge',
            color=DEFAULT_COLORS[0], edgecolor='white', linewidth=0.5,
        )
        ax.set_xlabel(f"{histogram.measure} (nats)", fontsize=10, color='#2c3e50')
        ax.set_ylabel("Pixels", fontsize=10, color='#2c3e50')
        ax.set_xlim(edges[0], edges[-1])
        ax.set_title(title, fontsize=14, fontweight='bold', pad=15, color='#2c3e50')
        return self._render_to_bytes(fig, output_format)

    def _create_figure(self) -> tuple[Figure, plt.Axes]:
        """Create a new figure with configured size."""
        fig, ax = plt.subplots(figsize=(self.width, self.height))
        fig.patch.set_facecolor('#ffffff')
        ax.set_facecolor('#fafafa')
        return fig, ax

    def _generate_empty_chart(self, message: str, title: str, output_format: str) -> bytes:
        """Generate a placeholder chart when there is nothing to plot."""
        fig, ax = self._create_figure()

        ax.text(
            0.5, 0.5,
            message,
            ha='center', va='center',
            fontsize=14,
            color='#7f8c8d',
            transform=ax.transAxes
        )
        ax.set_title(title, fontsize=14, fontweight='bold', pad=15, color='#2c3e50')
        ax.axis('off')

        return self._render_to_bytes(fig, output_format)

    def _render_to_bytes(self, fig: Figure, output_format: str) -> bytes:
        """Render figure to bytes buffer."""
        buffer = io.BytesIO()
        fig.savefig(
            buffer,
            format=output_format,
            dpi=self.dpi,
            bbox_inches='tight',
            facecolor='white',
            edgecolor='none'
        )
        plt.close(fig)
        buffer.seek(0)
        return buffer.getvalue()


def create_chart_service(**kwargs) -> ChartService:
    """Factory function to create a ChartService instance."""
    return ChartService(**kwargs)


class InteractiveChartService:
    """
    Generates interactive sweep charts using Plotly.

    Features:
    - Hover tooltips with threshold and removed fraction
    - Zoom and pan
    """

    def __init__(self, title: str = None):
        self.title = title or "Uncertainty removal sweep"

    def generate_plotly_chart(self, curves: list[SweepCurve], title: str = None) -> go.Figure:
        """
        Generate an interactive TPR versus FDR chart.

        Args:
            curves: Sweep curves to draw
            title: Optional title override

        Returns:
            Plotly Figure
        """
        if not any(c.points for c in curves):
            return self._generate_empty_chart()

        fig = go.Figure()
        for i, curve in enumerate(curves):
            if not curve.points:
                continue
            hover = [
                f"threshold: {p.threshold:.4f}<br>removed: {p.removed_fraction:.1%}"
                f"<br>TP {p.tp} / FP {p.fp} / FN {p.fn}"
                for p in curve.points
            ]
            fig.add_trace(go.Scatter(
                x=curve.fdrs(),
                y=curve.tprs(),
                mode='lines+markers',
                name=curve.label or f"curve {i + 1}",
                line=dict(color=curve_color(i), width=2),
                marker=dict(size=5),
                text=hover,
                hovertemplate="FDR %{x:.3f}, TPR %{y:.3f}<br>%{text}<extra></extra>",
            ))

        fig.update_layout(
            title=dict(text=title or self.title, font=dict(size=20, color='#2c3e50')),
            xaxis=dict(title="False detection rate", range=[0, 1]),
            yaxis=dict(title="True positive rate", range=[0, 1]),
            plot_bgcolor='#fafafa',
            paper_bgcolor='white',
            hovermode='closest',
        )
        return fig

    def generate_chart_json(self, curves: list[SweepCurve], title: str = None) -> str:
        """Plotly chart as JSON for embedding."""
        fig = self.generate_plotly_chart(curves, title=title)
        return json.dumps(fig.to_dict(), cls=PlotlyJSONEncoder)

    def generate_chart_html(self, curves: list[SweepCurve], title: str = None, full_html: bool = True) -> str:
        """
        Generate Plotly chart as HTML.

        Args:
            curves: Sweep curves
            title: Optional title override
            full_html: If True, return complete HTML document

        Returns:
            HTML string
        """
        fig = self.generate_plotly_chart(curves, title=title)
        return fig.to_html(full_html=full_html, include_plotlyjs='cdn')

    def _generate_empty_chart(self) -> go.Figure:
        """Generate a placeholder chart when there are no sweep points."""
        fig = go.Figure()

        fig.add_annotation(
            text="No sweep points to plot",
            xref="paper",
            yref="paper",
            x=0.5,
            y=0.5,
            showarrow=False,
            font=dict(size=16, color='#7f8c8d')
        )

        fig.update_layout(
            title=dict(text=self.title, font=dict(size=20, color='#2c3e50')),
            plot_bgcolor='#fafafa',
            paper_bgcolor='white',
            height=300
        )

        return fig


def create_interactive_chart_service(**kwargs) -> InteractiveChartService:
    """Factory function to create an InteractiveChartService instance."""
    return InteractiveChartService(**kwargs)
