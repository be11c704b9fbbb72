"""
Synthetic scenes and ensembles with known instance correspondences, plus
combined Gaussian and shot-noise image corruption.

All randomness comes from counter-based Philox generators, so every sample's
stream depends only on (seed, sample) and not on generation order.
"""

import logging
from pathlib import Path
from typing import Optional

import matplotlib
import numpy as np
import pandas as pd
from PIL import Image
from scipy import ndimage

from errors import ConfigError, InfeasiblePackingError, MissingInputError
from models.catalog import ClassCatalog
from models.ensemble import EnsembleBatch
from models.panoptic import PanopticMap
from models.synthetic import Correspondence, JitterSpec, PlantedInstance, SceneRegistry, SceneSpec

logger = logging.getLogger(__name__)

# Mask logits: instances beat stuff, stuff beats everything else
INSTANCE_LOGIT = 6.0
STUFF_LOGIT = 3.0
OUTSIDE_LOGIT = -6.0
CLASS_LOGIT = 8.0

# Extra background proposals per sample
PADDING_PROPOSALS = 2

# severity -> (gaussian sigma, photon count scale)
SEVERITY_PARAMS = {
    1: (0.08, 60.0),
    2: (0.12, 25.0),
    3: (0.18, 12.0),
}


def make_rng(seed: int, *stream: int) -> np.random.Generator:
    """Philox generator keyed by the seed and an optional stream index."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, *stream])))


# ============================================================================
# Scenes
# ============================================================================

def scene_catalog(spec: SceneSpec) -> ClassCatalog:
    return ClassCatalog.build(spec.stuff_classes, spec.thing_classes)


def _stuff_layout(spec: SceneSpec) -> np.ndarray:
    """Stuff classes as equal horizontal bands, first class on top."""
    bounds = np.linspace(0, spec.height, len(spec.stuff_classes) + 1).astype(int)
    rows = np.zeros(spec.height, dtype=np.int32)
    for class_id, (top, bottom) in enumerate(zip(bounds[:-1], bounds[1:])):
        rows[top:bottom] = class_id
    return np.repeat(rows[:, None], spec.width, axis=1)


def _shape_mask(spec: SceneSpec, shape: str, top: int, left: int, h: int, w: int) -> np.ndarray:
    mask = np.zeros((spec.height, spec.width), dtype=bool)
    if shape == "rectangle":
        mask[top:top + h, left:left + w] = True
        return mask
    rows, cols = np.ogrid[:h, :w]
    inside = ((rows + 0.5 - h / 2) / (h / 2)) ** 2 + ((cols + 0.5 - w / 2) / (w / 2)) ** 2 <= 1.0
    mask[top:top + h, left:left + w] = inside
    return mask


def gen_scene(spec: SceneSpec) -> tuple[PanopticMap, SceneRegistry]:
    """
    Plant `spec.num_instances` thing instances on a banded stuff background.

    Returns:
        (ground-truth map, registry of the planted instances)

    Raises:
        InfeasiblePackingError: An instance found no free spot within max_retries
    """
    rng = make_rng(spec.seed)
    catalog = scene_catalog(spec)
    stuff_map = _stuff_layout(spec)
    gt = PanopticMap(class_ids=stuff_map.copy(), instance_ids=np.zeros_like(stuff_map))

    max_h = min(spec.max_size, spec.height)
    max_w = min(spec.max_size, spec.width)
    if spec.num_instances and (spec.min_size > spec.height or spec.min_size > spec.width):
        raise InfeasiblePackingError(f"min_size {spec.min_size} does not fit a {spec.height}x{spec.width} image")

    occupied = np.zeros((spec.height, spec.width), dtype=bool)
    instances: list[PlantedInstance] = []
    first_thing = len(spec.stuff_classes)
    for instance_id in range(1, spec.num_instances + 1):
        for _ in range(spec.max_retries):
            h = int(rng.integers(spec.min_size, max_h + 1))
            w = int(rng.integers(spec.min_size, max_w + 1))
            top = int(rng.integers(0, spec.height - h + 1))
            left = int(rng.integers(0, spec.width - w + 1))
            shape = spec.shapes[int(rng.integers(len(spec.shapes)))]
            mask = _shape_mask(spec, shape, top, left, h, w)
            if spec.allow_overlap or not np.any(mask & occupied):
                break
        else:
            raise InfeasiblePackingError(
                f"Could not place instance {instance_id} of {spec.num_instances} after {spec.max_retries} tries"
            )

        class_id = first_thing + int(rng.integers(len(spec.thing_classes)))
        instances.append(PlantedInstance(instance_id=instance_id, class_id=class_id, mask=mask))
        grown = ndimage.binary_dilation(mask, iterations=spec.min_gap) if spec.min_gap > 0 else mask
        occupied |= grown

        # earlier instances stay on top where overlap is allowed
        free = mask & (gt.instance_ids == 0)
        gt.class_ids[free] = class_id
        gt.instance_ids[free] = instance_id

    logger.debug(f"Planted {len(instances)} instances in a {spec.height}x{spec.width} scene")
    return gt, SceneRegistry(instances=instances, stuff_map=stuff_map, catalog=catalog)


# ============================================================================
# Ensembles
# ============================================================================

def jitter_mask(mask: np.ndarray, jitter: JitterSpec, rng: np.random.Generator) -> np.ndarray:
    """Random integer translation then random dilation; pixels shifted off the image are lost."""
    out = mask
    if jitter.translation > 0:
        dy, dx = rng.integers(-jitter.translation, jitter.translation + 1, size=2)
        out = ndimage.shift(out.astype(np.uint8), (int(dy), int(dx)), order=0, cval=0).astype(bool)
    if jitter.dilation > 0:
        radius = int(rng.integers(0, jitter.dilation + 1))
        if radius:
            out = ndimage.binary_dilation(out, iterations=radius)
    return out


def _class_logits(class_id: int, num_classes: int, noise: float, rng: np.random.Generator) -> np.ndarray:
    logits = np.zeros(num_classes, dtype=np.float64)
    logits[class_id] = CLASS_LOGIT
    if noise > 0:
        logits += rng.normal(0.0, noise, size=num_classes)
    return logits


def gen_ensemble(
    gt: PanopticMap,
    registry: SceneRegistry,
    sample_count: int,
    jitter: Optional[JitterSpec] = None,
    image_id: str = "synthetic",
) -> tuple[EnsembleBatch, list[Correspondence]]:
    """
    Build Q jittered samples of a scene.

    Each sample holds one proposal per surviving instance (in registry order),
    one per stuff class present, then background padding up to a common N.
    Masks are full resolution.

    Returns:
        (batch, correspondence rows for every (sample, proposal))
    """
    if sample_count < 1:
        raise ConfigError(f"Q must be >= 1, got {sample_count}")
    jitter = jitter or JitterSpec()
    catalog = registry.catalog
    height, width = gt.shape
    num_classes = catalog.num_classes
    stuff_ids = registry.stuff_ids
    proposal_count = len(registry.instances) + len(stuff_ids) + PADDING_PROPOSALS

    logits = np.zeros((sample_count, proposal_count, num_classes), dtype=np.float32)
    masks = np.full((sample_count, proposal_count, height, width), OUTSIDE_LOGIT, dtype=np.float32)
    table: list[Correspondence] = []

    for q in range(sample_count):
        rng = make_rng(jitter.seed, q)
        n = 0
        for instance in registry.instances:
            if jitter.dropout > 0 and rng.random() < jitter.dropout:
                continue
            mask = jitter_mask(instance.mask, jitter, rng)
            masks[q, n][mask] = INSTANCE_LOGIT
            logits[q, n] = _class_logits(instance.class_id, num_classes, jitter.logit_noise, rng)
            table.append(Correspondence(q, n, instance.instance_id, instance.class_id, "thing"))
            n += 1
        for class_id in stuff_ids:
            masks[q, n][registry.stuff_map == class_id] = STUFF_LOGIT
            logits[q, n] = _class_logits(class_id, num_classes, jitter.logit_noise, rng)
            table.append(Correspondence(q, n, -1, class_id, "stuff"))
            n += 1
        while n < proposal_count:
            logits[q, n] = _class_logits(catalog.background_id, num_classes, 0.0, rng)
            table.append(Correspondence(q, n, -1, catalog.background_id, "background"))
            n += 1

    batch = EnsembleBatch(
        logits=logits,
        mask_logits=masks,
        image_size=(height, width),
        catalog=catalog,
        image_id=image_id,
    )
    return batch, table


def correspondence_frame(table: list[Correspondence]) -> pd.DataFrame:
    columns = ["sample", "proposal", "instance_id", "class_id", "kind"]
    return pd.DataFrame([[c.sample, c.proposal, c.instance_id, c.class_id, c.kind] for c in table], columns=columns)


# ============================================================================
# Images and corruption
# ============================================================================

def render_scene_rgb(gt: PanopticMap) -> np.ndarray:
    """
    Flat-colored H x W x 3 rendering in [0, 1]: one tab20 color per class,
    slightly darkened per instance, void black.
    """
    palette = np.array([matplotlib.colormaps["tab20"](i % 20)[:3] for i in range(max(gt.class_ids.max() + 1, 1))])
    image = np.zeros(gt.shape + (3,), dtype=np.float64)
    labelled = ~gt.void_mask
    image[labelled] = palette[gt.class_ids[labelled]]
    shade = 1.0 - 0.15 * (gt.instance_ids % 3)
    return image * shade[..., None]


def corrupt_image(img: np.ndarray, severity: int, seed: int = 0) -> np.ndarray:
    """
    Additive Gaussian noise, then shot noise, each followed by clipping to [0, 1].

    Args:
        img: H x W x 3 (or H x W) values in [0, 1]
        severity: 1, 2 or 3
        seed: Generator seed

    Returns:
        Corrupted float64 image in [0, 1]
    """
    if severity not in SEVERITY_PARAMS:
        raise ConfigError(f"Severity must be one of {sorted(SEVERITY_PARAMS)}, got {severity}")
    sigma, photons = SEVERITY_PARAMS[severity]
    rng = make_rng(seed)
    x = np.asarray(img, dtype=np.float64)
    x = np.clip(x + rng.normal(0.0, sigma, size=x.shape), 0.0, 1.0)
    return np.clip(rng.poisson(x * photons) / photons, 0.0, 1.0)


def load_image(source) -> np.ndarray:
    path = Path(source)
    if not path.exists():
        raise MissingInputError(f"Image not found: {path}")
    with Image.open(path) as image:
        return np.asarray(image.convert("RGB"), dtype=np.float64) / 255.0


def save_image(img: np.ndarray, destination) -> Path:
    destination = Path(destination)
    destination.parent.mkdir(parents=True, exist_ok=True)
    pixels = np.clip(np.floor(np.asarray(img) * 255.0 + 0.5), 0, 255).astype(np.uint8)
    Image.fromarray(pixels).save(destination, format="PNG")
    return destination
