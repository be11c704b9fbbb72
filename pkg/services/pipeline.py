"""
Fusion pipeline: runs one of the fusion methods over an ensemble, derives
the requested uncertainty maps and writes the per-image outputs.
"""

import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional

from config import RunConfig
from errors import ConfigError, InvalidManifestError
from models.catalog import ClassCatalog
from models.ensemble import EnsembleBatch
from models.fusion import FusionParams, InstanceRecord
from models.panoptic import PanopticMap
from models.uncertainty import UncertaintyMap
from services.assignment import hungarian_fuse
from services.per_sample import baseline_segmentation, per_sample_seg
from services.stuff_fusion import stuff_seg
from services.tensor_store import (
    load_catalog,
    load_ensemble,
    load_manifest,
    read_json,
    write_catalog,
    write_panoptic,
    write_tensor,
)
from services.thing_fusion import fuse_things, instance_count
from services.uncertainty_service import compute_uncertainty, export_heatmap, prune

logger = logging.getLogger(__name__)

REPORT_NAME = "report.json"


@dataclass
class FusionResult:
    """Output of one fused image."""

    image_id: str
    method: str
    panoptic: PanopticMap
    uncertainty: dict[str, UncertaintyMap]
    sample_count: int
    num_classes: int
    records: list[InstanceRecord] = field(default_factory=list)
    empty_samples: list[int] = field(default_factory=list)

    @property
    def instance_count(self) -> int:
        return instance_count(self.panoptic)


class FusionPipeline:
    """
    Fuses ensembles with the method and thresholds of a resolved RunConfig.

    Methods:
    - ours: stuff fusion by mean confidence, thing fusion by sequential
      clustering, then optional confidence pruning
    - hungarian: repeated assignment against a reference sample
    - baseline: sample 0 only, with score/area pruning
    """

    def __init__(self, run: RunConfig):
        """
        Initialize the FusionPipeline.

        Args:
            run: Resolved run configuration
        """
        self.run = run

    def limit_samples(self, batch: EnsembleBatch) -> EnsembleBatch:
        """Keep the first `sample_limit` samples; a limit above Q keeps them all with a warning."""
        limit = self.run.sample_limit
        if limit is not None and limit > batch.num_samples:
            logger.warning(f"{batch.image_id}: sample limit {limit} exceeds Q={batch.num_samples}, using all")
        return batch.take(limit)

    def fuse(self, batch: EnsembleBatch) -> FusionResult:
        """Run the configured method on one ensemble."""
        run = self.run
        batch = self.limit_samples(batch)
        if run.method == "baseline":
            batch = batch.sample(0)

        pss = per_sample_seg(batch, run.upscale_mode)
        s_initial, sc, mc = stuff_seg(pss, batch.catalog)
        records: list[InstanceRecord] = []

        if run.method == "ours":
            params = FusionParams(iou_threshold=run.iou_threshold, min_member_fraction=run.min_member_fraction)
            panoptic, records = fuse_things(pss, pss.kept_softmax, s_initial, mc, batch.catalog, params)
            if run.pruning:
                panoptic = prune(panoptic, mc, run.min_prob, run.min_pixels)
        elif run.method == "hungarian":
            panoptic = hungarian_fuse(pss, batch, run.reference_seed, run.upscale_mode)
        elif run.method == "baseline":
            panoptic = baseline_segmentation(
                batch,
                min_score=run.min_prob if run.pruning else None,
                min_pixels=run.min_pixels if run.pruning else None,
                upscale_mode=run.upscale_mode,
            )
        else:
            raise ConfigError(f"Unknown method '{run.method}'")

        panoptic.check_invariants(batch.catalog.thing_mask)
        uncertainty = {measure: compute_uncertainty(measure, sc, mc) for measure in run.measures}
        result = FusionResult(
            image_id=batch.image_id,
            method=run.method,
            panoptic=panoptic,
            uncertainty=uncertainty,
            sample_count=batch.num_samples,
            num_classes=batch.num_classes,
            records=records,
            empty_samples=pss.empty_samples,
        )
        logger.info(f"{batch.image_id}: {run.method} fused {result.sample_count} samples, "
                    f"{result.instance_count} instances")
        return result

    # =========================================================================
    # File outputs
    # =========================================================================

    def write_result(self, result: FusionResult, output_dir: Path) -> dict[str, Any]:
        """
        Write panoptic PNG + sidecar, one heatmap and one PFTN tensor per measure.

        Returns:
            The image's entry for the run report (paths relative to output_dir)
        """
        output_dir.mkdir(parents=True, exist_ok=True)
        png_name = f"{result.image_id}_panoptic.png"
        sidecar = write_panoptic(result.panoptic, output_dir / png_name)

        uncertainty_files = {}
        for measure, u in result.uncertainty.items():
            heatmap_name = f"{result.image_id}_{measure}.png"
            tensor_name = f"{result.image_id}_{measure}.pftn"
            export_heatmap(u, output_dir / heatmap_name)
            write_tensor(u.to_tensor(), output_dir / tensor_name)
            uncertainty_files[measure] = {"heatmap": heatmap_name, "tensor": tensor_name}

        return {
            "image_id": result.image_id,
            "method": result.method,
            "samples": result.sample_count,
            "instance_count": result.instance_count,
            "segment_count": len(result.panoptic.segments()),
            "empty_samples": result.empty_samples,
            "panoptic": png_name,
            "segments": sidecar.name,
            "uncertainty": uncertainty_files,
        }

    def process_manifest(self, manifest_path: str, output_dir: Path) -> dict[str, Any]:
        batch = load_ensemble(manifest_path)
        entry = self.write_result(self.fuse(batch), output_dir)
        entry["manifest"] = str(manifest_path)
        entry["class_count"] = batch.num_classes
        return entry

    def fuse_manifests(self, manifests: list[str], output_dir: Path) -> Path:
        """
        Fuse every manifest on a thread pool and write report.json.

        Results are gathered in input order regardless of completion order.
        """
        output_dir = Path(output_dir)
        output_dir.mkdir(parents=True, exist_ok=True)
        with ThreadPoolExecutor(max_workers=self.run.pool_size()) as pool:
            entries = list(pool.map(lambda m: self.process_manifest(m, output_dir), manifests))

        catalog_name = None
        if manifests:
            batch_catalog = load_catalog_for(manifests[0])
            catalog_name = "catalog.json"
            write_catalog(batch_catalog, output_dir / catalog_name)

        report = {
            "method": self.run.method,
            "config": self.run.to_dict(),
            "catalog": catalog_name,
            "class_count": entries[0]["class_count"] if entries else None,
            "images": entries,
        }
        report_path = output_dir / REPORT_NAME
        report_path.write_text(json.dumps(report, indent=2, sort_keys=True), encoding="utf-8")
        logger.info(f"Wrote {len(entries)} fused images to {output_dir}")
        return report_path


def load_catalog_for(manifest_path: str) -> ClassCatalog:
    """Catalog referenced by a manifest."""
    manifest = load_manifest(manifest_path)
    return load_catalog(manifest.resolve(manifest.class_catalog_path))


def read_report(output_dir) -> dict[str, Any]:
    """Load report.json of a fuse run; paths in it are relative to `output_dir`."""
    return read_json(Path(output_dir) / REPORT_NAME, "Run report", InvalidManifestError)


def create_pipeline(run: Optional[RunConfig] = None, **overrides) -> FusionPipeline:
    """Factory function to create a FusionPipeline from a RunConfig or keyword overrides."""
    if run is None:
        run = RunConfig(**overrides).resolve()
    return FusionPipeline(run)
