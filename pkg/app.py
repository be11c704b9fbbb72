"""
Ensemble Panoptic Fusion - Command-Line Entry Point

Subcommands:
- fuse:    fuse sampled network outputs into panoptic maps + uncertainty maps
- eval:    PQ/SQ/RQ of fused maps against ground truth
- sweep:   TPR/FDR curves while removing the most uncertain pixels
- hist:    histograms of uncertainty values
- synth:   synthetic scenes and jittered ensembles with known correspondences
- corrupt: Gaussian + shot noise corruption of images
- bench:   seconds per image per method and sample count

Exit codes: 0 success, 2 input error, 3 configuration error, 4 internal error.
"""

# Set matplotlib backend FIRST (before any other imports that might use it)
import matplotlib
matplotlib.use('Agg')

import argparse
import json
import logging
import shutil
import sys
from pathlib import Path
from typing import Any, Callable, Optional

from config import RunConfig, config
from errors import EXIT_INTERNAL, EXIT_OK, FusionError, InputError, InvalidManifestError, MissingInputError
from models.synthetic import JitterSpec, SceneSpec
from models.uncertainty import UncertaintyMap
from services.bench_service import DEFAULT_SAMPLE_COUNTS, BenchService, write_bench_csv
from services.chart_service import create_chart_service, create_interactive_chart_service
from services.panoptic_eval import (
    evaluate_dataset,
    summary_table,
    sweep_dataset,
    threshold_grid,
    write_pq_csv,
    write_pq_json,
    write_sweep_csv,
)
from services.pipeline import FusionPipeline, read_report
from services.synth_corrupt import (
    correspondence_frame,
    corrupt_image,
    gen_ensemble,
    gen_scene,
    load_image,
    render_scene_rgb,
    save_image,
)
from services.tensor_store import load_catalog, read_json, read_panoptic_png, read_tensor, write_ensemble, write_panoptic
from services.uncertainty_service import bin_entropy, write_histogram_csv

# Configure logging
logging.basicConfig(
    level=getattr(logging, config.LOG_LEVEL.upper(), logging.INFO),
    format='%(asctime)s - %(name)s - %(levelname)s - %(message)s'
)
logger = logging.getLogger(__name__)

# Validate configuration
problems = config.validate()
if problems:
    logger.warning(f"Invalid environment configuration: {', '.join(problems)}")
    logger.warning("Set these environment variables to valid values before running")

DEFAULT_SYNTH_SAMPLES = 15


# ============================================================================
# Input Helpers
# ============================================================================

def collect_manifests(inputs: list[str]) -> list[str]:
    """Expand directories to their *_manifest.json files; keep files as given."""
    manifests = []
    for item in inputs:
        path = Path(item)
        if path.is_dir():
            found = sorted(path.glob("*_manifest.json"))
            if not found:
                raise MissingInputError(f"No *_manifest.json files in {path}")
            manifests.extend(str(p) for p in found)
        elif path.exists():
            manifests.append(str(path))
        else:
            raise MissingInputError(f"Input not found: {path}")
    return manifests


def single_input(run: RunConfig) -> Path:
    if len(run.inputs) != 1:
        raise InputError(f"{run.subcommand} expects exactly one fuse output directory, got {len(run.inputs)}")
    return Path(run.inputs[0])


def gt_directory(run: RunConfig) -> Path:
    gt_dir = run.extra.get("gt_dir")
    if not gt_dir:
        raise InputError(f"{run.subcommand} needs --gt-dir")
    return Path(gt_dir)


def load_uncertainty(pred_dir: Path, entry: dict[str, Any], measure: str, num_classes: int) -> UncertaintyMap:
    files = entry.get("uncertainty", {}).get(measure)
    if files is None:
        raise MissingInputError(f"{entry['image_id']}: no {measure} map in the fuse report")
    return UncertaintyMap.from_tensor(read_tensor(pred_dir / files["tensor"]), measure, num_classes)


def load_pairs(pred_dir: Path, gt_dir: Path, report: dict[str, Any]):
    """(entry, prediction, ground truth) per image of a fuse report."""
    for entry in report["images"]:
        pred = read_panoptic_png(pred_dir / entry["panoptic"])
        gt = read_panoptic_png(gt_dir / f"{entry['image_id']}_gt.png")
        yield entry, pred, gt


# ============================================================================
# Subcommands
# ============================================================================

def cmd_fuse(run: RunConfig) -> None:
    manifests = collect_manifests(run.inputs)
    report_path = FusionPipeline(run).fuse_manifests(manifests, Path(run.output_dir))
    logger.info(f"Report: {report_path}")


def cmd_eval(run: RunConfig) -> None:
    pred_dir = single_input(run)
    report = read_report(pred_dir)
    if not report.get("catalog"):
        raise InvalidManifestError(f"{pred_dir}: fuse report names no class catalog")
    catalog = load_catalog(pred_dir / report["catalog"])
    pairs = [(pred, gt) for _, pred, gt in load_pairs(pred_dir, gt_directory(run), report)]

    result, _ = evaluate_dataset(pairs, catalog)
    output_dir = Path(run.output_dir)
    write_pq_csv(result, output_dir / "pq.csv", catalog)
    write_pq_json(result, output_dir / "pq.json", catalog)
    logger.info(f"Panoptic evaluation over {len(pairs)} images:\n" + summary_table(result))


def cmd_sweep(run: RunConfig) -> None:
    pred_dir = single_input(run)
    report = read_report(pred_dir)
    num_classes = int(report["class_count"])
    loaded = list(load_pairs(pred_dir, gt_directory(run), report))

    curves = []
    for measure in run.measures:
        items = [(pred, load_uncertainty(pred_dir, entry, measure, num_classes), gt) for entry, pred, gt in loaded]
        thresholds = run.thresholds or threshold_grid(
            [u for _, u, _ in items], run.sweep_points, run.sweep_max_removal
        )
        curves.append(sweep_dataset(items, thresholds, run.sweep_iou_threshold, label=measure))

    output_dir = Path(run.output_dir)
    write_sweep_csv(curves, output_dir / "sweep.csv")
    (output_dir / "sweep.png").write_bytes(create_chart_service().generate_sweep_chart(curves))
    interactive = create_interactive_chart_service()
    (output_dir / "sweep.html").write_text(interactive.generate_chart_html(curves), encoding="utf-8")
    (output_dir / "sweep.json").write_text(interactive.generate_chart_json(curves), encoding="utf-8")
    logger.info(f"Swept {len(curves)} measure(s) over {len(loaded)} images")


def cmd_hist(run: RunConfig) -> None:
    pred_dir = single_input(run)
    report = read_report(pred_dir)
    num_classes = int(report["class_count"])
    output_dir = Path(run.output_dir)

    for measure in run.measures:
        maps = [load_uncertainty(pred_dir, entry, measure, num_classes) for entry in report["images"]]
        histogram = bin_entropy(maps, run.hist_bins)
        write_histogram_csv(histogram, output_dir / f"histogram_{measure}.csv")
        chart = create_chart_service().generate_histogram_chart(histogram)
        (output_dir / f"histogram_{measure}.png").write_bytes(chart)
        logger.info(f"{measure}: {histogram.total} pixels in {histogram.num_bins} bins")


def _spec_from(run: RunConfig, key: str, cls):
    source = run.extra.get(key)
    if source is None:
        return None
    if isinstance(source, dict):
        return cls.from_dict(source)
    return cls.from_dict(read_json(Path(source), f"{key} spec", InputError))


def cmd_synth(run: RunConfig) -> None:
    scene = _spec_from(run, "scene", SceneSpec) or SceneSpec()
    jitter = _spec_from(run, "jitter", JitterSpec) or JitterSpec()
    samples = run.sample_limit or DEFAULT_SYNTH_SAMPLES
    count = int(run.extra.get("count") or 1)
    output_dir = Path(run.output_dir)
    output_dir.mkdir(parents=True, exist_ok=True)

    for k in range(count):
        image_id = f"scene_{k:03d}"
        scene_k = SceneSpec.from_dict({**scene.to_dict(), "seed": run.seed + scene.seed + k})
        jitter_k = JitterSpec.from_dict({**jitter.to_dict(), "seed": run.seed + jitter.seed + k})
        gt, registry = gen_scene(scene_k)
        batch, table = gen_ensemble(gt, registry, samples, jitter_k, image_id=image_id)

        write_ensemble(batch, output_dir)
        write_panoptic(gt, output_dir / f"{image_id}_gt.png")
        save_image(render_scene_rgb(gt), output_dir / f"{image_id}_image.png")
        correspondence_frame(table).to_csv(output_dir / f"{image_id}_correspondence.csv", index=False)
        logger.info(f"{image_id}: {len(registry.instances)} instances, Q={samples}")

    specs = {"scene": scene.to_dict(), "jitter": jitter.to_dict(), "samples": samples, "count": count}
    (output_dir / "synth_spec.json").write_text(json.dumps(specs, indent=2, sort_keys=True), encoding="utf-8")


def cmd_corrupt(run: RunConfig) -> None:
    severity = int(run.extra.get("severity") or 1)
    output_dir = Path(run.output_dir)
    for item in run.inputs:
        source = Path(item)
        corrupted = corrupt_image(load_image(source), severity, run.seed)
        destination = save_image(corrupted, output_dir / f"{source.stem}_s{severity}.png")
        logger.info(f"Corrupted {source.name} at severity {severity} -> {destination}")


def cmd_bench(run: RunConfig) -> None:
    manifests = collect_manifests(run.inputs) if run.inputs else []
    methods = tuple(run.extra.get("methods") or ("baseline", "ours", "hungarian"))
    sample_counts = tuple(int(q) for q in (run.extra.get("sample_counts") or DEFAULT_SAMPLE_COUNTS))
    rows = BenchService(run, methods, sample_counts).run_bench(manifests)
    destination = write_bench_csv(rows, Path(run.output_dir) / "bench.csv")
    logger.info(f"Wrote {len(rows)} benchmark rows to {destination}")


COMMANDS: dict[str, Callable[[RunConfig], None]] = {
    "fuse": cmd_fuse,
    "eval": cmd_eval,
    "sweep": cmd_sweep,
    "hist": cmd_hist,
    "synth": cmd_synth,
    "corrupt": cmd_corrupt,
    "bench": cmd_bench,
}


# ============================================================================
# Argument Parsing
# ============================================================================

# CLI options that are not RunConfig fields travel in RunConfig.extra
EXTRA_OPTIONS = ("gt_dir", "scene", "jitter", "count", "severity", "methods", "sample_counts")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", dest="config_file", help="JSON file with run settings")
    common.add_argument("--print-config", action="store_true", help="Print the resolved configuration and exit")
    common.add_argument("-v", "--verbose", action="store_true", help="Debug logging")
    common.add_argument("-o", "--output-dir", help="Output directory (default: out)")
    common.add_argument("--workers", type=int, help="Worker threads (default: available cores)")
    common.add_argument("--seed", type=int, help="Random seed")

    fusion = argparse.ArgumentParser(add_help=False)
    fusion.add_argument("--method", help="ours, hungarian or baseline")
    fusion.add_argument("--samples", dest="sample_limit", type=int, help="Use only the first Q samples")
    fusion.add_argument("--iou-threshold", type=float)
    fusion.add_argument("--min-member-fraction", type=float)
    fusion.add_argument("--min-prob", type=float)
    fusion.add_argument("--min-pixels", type=int)
    fusion.add_argument("--no-pruning", dest="pruning", action="store_false", default=None)
    fusion.add_argument("--upscale-mode", help="bilinear or nearest")
    fusion.add_argument("--reference-seed", type=int, help="Random reference sample for hungarian")

    measures = argparse.ArgumentParser(add_help=False)
    measures.add_argument("--measure", dest="measures", action="append",
                          help="predictive_entropy, mutual_information or softmax_entropy (repeatable)")

    evaluation = argparse.ArgumentParser(add_help=False)
    evaluation.add_argument("--gt-dir", help="Directory with <image_id>_gt.png ground truth")

    parser = argparse.ArgumentParser(prog="app.py", description="Ensemble panoptic fusion toolkit")
    sub = parser.add_subparsers(dest="subcommand", required=True)

    p = sub.add_parser("fuse", parents=[common, fusion, measures], help="Fuse ensembles")
    p.add_argument("inputs", nargs="+", help="Manifests or directories of manifests")

    p = sub.add_parser("eval", parents=[common, evaluation], help="PQ evaluation")
    p.add_argument("inputs", nargs=1, help="fuse output directory")

    p = sub.add_parser("sweep", parents=[common, evaluation, measures], help="Uncertainty removal sweep")
    p.add_argument("inputs", nargs=1, help="fuse output directory")
    p.add_argument("--thresholds", type=float, nargs="+", help="Explicit uncertainty thresholds")
    p.add_argument("--sweep-points", type=int)
    p.add_argument("--sweep-max-removal", type=float)
    p.add_argument("--sweep-iou-threshold", type=float)

    p = sub.add_parser("hist", parents=[common, measures], help="Uncertainty histograms")
    p.add_argument("inputs", nargs=1, help="fuse output directory")
    p.add_argument("--bins", dest="hist_bins", type=int)

    p = sub.add_parser("synth", parents=[common], help="Synthetic ensembles")
    p.add_argument("--samples", dest="sample_limit", type=int, help=f"Q (default {DEFAULT_SYNTH_SAMPLES})")
    p.add_argument("--count", type=int, help="Number of scenes")
    p.add_argument("--scene", help="Scene spec JSON")
    p.add_argument("--jitter", help="Jitter spec JSON")

    p = sub.add_parser("corrupt", parents=[common], help="Gaussian + shot noise")
    p.add_argument("inputs", nargs="+", help="Images")
    p.add_argument("--severity", type=int, help="1, 2 or 3")

    p = sub.add_parser("bench", parents=[common, measures], help="Runtime benchmark")
    p.add_argument("inputs", nargs="*", help="Manifests or directories of manifests")
    p.add_argument("--methods", nargs="+")
    p.add_argument("--sample-counts", type=int, nargs="+")
    p.add_argument("--upscale-mode")
    return parser


def cli_values(args: argparse.Namespace) -> dict[str, Any]:
    values = {k: v for k, v in vars(args).items() if k not in EXTRA_OPTIONS}
    extra = {k: getattr(args, k) for k in EXTRA_OPTIONS if getattr(args, k, None) is not None}
    if extra:
        values["extra"] = extra
    return values


# ============================================================================
# Main Entry Point
# ============================================================================

def _snapshot(output_dir: Path) -> Optional[set[Path]]:
    """Files present before the run; None when the directory does not exist yet."""
    if not output_dir.exists():
        return None
    return set(output_dir.rglob("*"))


def remove_partial_outputs(output_dir: Path, before: Optional[set[Path]]) -> None:
    """Delete whatever a failed run created under output_dir."""
    if not output_dir.exists():
        return
    if before is None:
        shutil.rmtree(output_dir, ignore_errors=True)
        return
    for path in sorted(set(output_dir.rglob("*")) - before, reverse=True):
        if path.is_dir():
            shutil.rmtree(path, ignore_errors=True)
        else:
            path.unlink(missing_ok=True)


def main(argv: Optional[list[str]] = None) -> int:
    """Run one subcommand. Returns the process exit code."""
    args = build_parser().parse_args(argv)
    if args.verbose:
        logging.getLogger().setLevel(logging.DEBUG)

    output_dir = None
    before = None
    try:
        run = RunConfig.from_sources(cli_values(args), args.config_file)
        if args.print_config:
            print(run.to_json())
            return EXIT_OK

        output_dir = Path(run.output_dir)
        before = _snapshot(output_dir)
        COMMANDS[run.subcommand](run)
        return EXIT_OK
    except FusionError as e:
        logger.error(f"{type(e).__name__}: {e}")
        code = e.exit_code
    except Exception as e:
        logger.exception(f"Unexpected error: {e}")
        code = EXIT_INTERNAL

    if output_dir is not None:
        remove_partial_outputs(output_dir, before)
    return code


if __name__ == "__main__":
    sys.exit(main())
