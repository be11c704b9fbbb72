"""Services for the ensemble panoptic fusion toolkit."""

from .bench_service import BenchService
from .chart_service import ChartService, InteractiveChartService
from .pipeline import FusionPipeline, FusionResult

__all__ = ["BenchService", "ChartService", "InteractiveChartService", "FusionPipeline", "FusionResult"]
