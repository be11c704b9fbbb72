"""
Runtime benchmark: seconds per image for each fusion method and sample count.
Ensembles are loaded before timing starts; only fusion itself is timed.
"""

import logging
import time
from dataclasses import asdict, dataclass
from pathlib import Path

import pandas as pd

from config import METHODS, RunConfig
from errors import InputError
from services.pipeline import FusionPipeline
from services.tensor_store import load_ensemble

logger = logging.getLogger(__name__)

DEFAULT_SAMPLE_COUNTS = (1, 5, 15)


@dataclass
class BenchRow:
    method: str
    samples: int
    images: int
    seconds_per_image: float


class BenchService:
    """Times FusionPipeline.fuse over a fixed set of ensembles."""

    def __init__(
        self,
        run: RunConfig,
        methods: tuple[str, ...] = METHODS,
        sample_counts: tuple[int, ...] = DEFAULT_SAMPLE_COUNTS,
    ):
        """
        Args:
            run: Base configuration; upscale mode, measures and reference seed carry over
            methods: Methods to time
            sample_counts: Q values to time each method at
        """
        self.run = run
        self.methods = tuple(methods)
        self.sample_counts = tuple(sample_counts)

    def _pipeline(self, method: str, samples: int) -> FusionPipeline:
        run = RunConfig(
            subcommand="bench",
            method=method,
            sample_limit=samples,
            upscale_mode=self.run.upscale_mode,
            measures=list(self.run.measures),
            reference_seed=self.run.reference_seed,
            workers=1,
        ).resolve()
        return FusionPipeline(run)

    def run_bench(self, manifests: list[str]) -> list[BenchRow]:
        """
        Time every (method, sample count) pair.

        A pair is skipped with a warning when no ensemble has that many samples.

        Raises:
            InputError: No manifests given
        """
        if not manifests:
            raise InputError("bench needs at least one input manifest")
        batches = [load_ensemble(m) for m in manifests]

        rows = []
        for method in self.methods:
            for samples in self.sample_counts:
                usable = [b for b in batches if b.num_samples >= samples]
                if not usable:
                    logger.warning(f"Skipping {method} at Q={samples}: no ensemble has that many samples")
                    continue
                pipeline = self._pipeline(method, samples)
                start = time.perf_counter()
                for batch in usable:
                    pipeline.fuse(batch)
                elapsed = time.perf_counter() - start
                row = BenchRow(method=method, samples=samples, images=len(usable),
                               seconds_per_image=elapsed / len(usable))
                logger.info(f"bench {method} Q={samples}: {row.seconds_per_image:.3f} s/image")
                rows.append(row)
        return rows


def write_bench_csv(rows: list[BenchRow], destination) -> Path:
    destination = Path(destination)
    destination.parent.mkdir(parents=True, exist_ok=True)
    columns = ["method", "samples", "images", "seconds_per_image"]
    pd.DataFrame([asdict(r) for r in rows], columns=columns).to_csv(destination, index=False)
    return destination
