"""
File formats for ensemble inputs and fused outputs.

- PFTN tensors: "PFTN", version byte 1, element-type byte, rank byte,
  little-endian uint32 dims, then raw little-endian elements in C order.
- Panoptic PNG: 24-bit RGB, segment id = R + 256*G + 65536*B, id 0 = void,
  plus a JSON sidecar listing the segments (COCO panoptic style).
- Manifest and class catalog: UTF-8 JSON documents.

All functions are pure over their inputs and safe to call from several
threads on distinct files.
"""

import json
import logging
import struct
from pathlib import Path
from typing import BinaryIO, Union

import numpy as np
from PIL import Image

from errors import (
    BadMagicError,
    CatalogMismatchError,
    ElementCountMismatchError,
    InvalidManifestError,
    MissingInputError,
    NonFiniteValueError,
    SegmentIdOverflowError,
    SegmentTableError,
    ShapeMismatchError,
    TensorFormatError,
    TruncatedPayloadError,
    UnknownElementTypeError,
    UnsupportedVersionError,
)
from models.catalog import ClassCatalog
from models.ensemble import EnsembleBatch, EnsembleManifest
from models.panoptic import PanopticMap
from models.tensor import ElemType, Tensor

logger = logging.getLogger(__name__)

MAGIC = b"PFTN"
VERSION = 1
MAX_SEGMENT_ID = (1 << 24) - 1

PathLike = Union[str, Path]

# segment id -> (class_id, instance_id)
SegmentTable = dict[int, tuple[int, int]]


# ============================================================================
# PFTN tensors
# ============================================================================

def encode_tensor(t: Tensor) -> bytes:
    """Serialize a tensor to PFTN bytes."""
    header = MAGIC + struct.pack("<BBB", VERSION, int(t.elem_type), t.rank)
    header += struct.pack(f"<{t.rank}I", *t.dims)
    payload = np.ascontiguousarray(t.data, dtype=t.elem_type.dtype).tobytes(order="C")
    return header + payload


def decode_tensor(raw: bytes) -> Tensor:
    """
    Parse PFTN bytes.

    Raises:
        BadMagicError, UnsupportedVersionError, UnknownElementTypeError,
        TruncatedPayloadError, ElementCountMismatchError
    """
    if raw[:4] != MAGIC:
        if len(raw) < 4 and MAGIC.startswith(raw):
            raise TruncatedPayloadError(f"File holds only {len(raw)} bytes, header needs 7")
        raise BadMagicError(f"Expected magic {MAGIC!r}, found {raw[:4]!r}")
    if len(raw) < 7:
        raise TruncatedPayloadError(f"Header needs 7 bytes, file holds {len(raw)}")

    version, type_byte, rank = struct.unpack_from("<BBB", raw, 4)
    if version != VERSION:
        raise UnsupportedVersionError(f"PFTN version {version} is not supported (expected {VERSION})")
    try:
        elem_type = ElemType(type_byte)
    except ValueError:
        raise UnknownElementTypeError(f"Unknown PFTN element type byte {type_byte}") from None
    if not 1 <= rank <= 4:
        raise TensorFormatError(f"PFTN rank must be 1..4, got {rank}")

    offset = 7 + 4 * rank
    if len(raw) < offset:
        raise TruncatedPayloadError(f"Header declares rank {rank} but file ends after {len(raw)} bytes")
    dims = struct.unpack_from(f"<{rank}I", raw, 7)
    if any(d == 0 for d in dims):
        raise ElementCountMismatchError(f"PFTN dims must be positive, got {dims}")

    count = int(np.prod(dims, dtype=np.int64))
    expected = count * elem_type.itemsize
    available = len(raw) - offset
    if available < expected:
        raise TruncatedPayloadError(f"dims {dims} need {expected} payload bytes, file holds {available}")
    if available > expected:
        raise ElementCountMismatchError(
            f"dims {dims} account for {expected} payload bytes, file holds {available}"
        )

    data = np.frombuffer(raw, dtype=elem_type.dtype, count=count, offset=offset).copy()
    return Tensor(dims=dims, elem_type=elem_type, data=data)


def write_tensor(t: Tensor, destination: Union[PathLike, BinaryIO]) -> None:
    """Write a tensor as a PFTN file (path or writable binary stream)."""
    raw = encode_tensor(t)
    if hasattr(destination, "write"):
        destination.write(raw)
        return
    Path(destination).write_bytes(raw)
    logger.debug(f"Wrote tensor {t.dims} {t.elem_type.name} to {destination}")


def read_tensor(source: Union[PathLike, BinaryIO]) -> Tensor:
    """Read a PFTN file (path or readable binary stream)."""
    if hasattr(source, "read"):
        return decode_tensor(source.read())
    path = Path(source)
    if not path.exists():
        raise MissingInputError(f"Tensor file not found: {source}")
    return decode_tensor(path.read_bytes())


def import_npy(source: PathLike) -> Tensor:
    """
    Convert a NumPy .npy dump into a Tensor.

    Only float32/uint16/uint8 compatible arrays of rank 1..4 are accepted;
    float64 arrays are narrowed to float32.
    """
    path = Path(source)
    if not path.exists():
        raise MissingInputError(f"Array file not found: {source}")
    array = np.load(path, allow_pickle=False)
    if array.dtype == np.float64:
        array = array.astype(np.float32)
    return Tensor.from_array(array)


# ============================================================================
# Panoptic PNG + segment sidecar
# ============================================================================

def id_to_rgb(ids: np.ndarray) -> np.ndarray:
    """Segment ids (H x W) to an H x W x 3 uint8 image of base-256 digits."""
    ids = np.asarray(ids, dtype=np.uint32)
    rgb = np.empty(ids.shape + (3,), dtype=np.uint8)
    for channel in range(3):
        rgb[..., channel] = ids % 256
        ids = ids // 256
    return rgb


def rgb_to_id(rgb: np.ndarray) -> np.ndarray:
    rgb = np.asarray(rgb, dtype=np.uint32)
    return rgb[..., 0] + 256 * rgb[..., 1] + 256 * 256 * rgb[..., 2]


def build_segment_table(m: PanopticMap) -> SegmentTable:
    """Assign segment ids 1, 2, ... to the map's segments in raster order of first appearance."""
    return {segment_id: key for segment_id, key in enumerate(m.segments(), start=1)}


def sidecar_path(png_path: PathLike) -> Path:
    return Path(png_path).with_suffix(".json")


def write_panoptic_png(m: PanopticMap, segment_table: SegmentTable, destination: PathLike) -> Path:
    """
    Write a panoptic map as RGB PNG plus JSON sidecar.

    Args:
        m: Map to write
        segment_table: segment id -> (class_id, instance_id), ids in 1..2^24-1
        destination: PNG path; the sidecar goes next to it with a .json suffix

    Returns:
        Path of the sidecar JSON

    Raises:
        SegmentIdOverflowError: an id does not fit into 24 bits (or is 0)
        SegmentTableError: a non-void cell has no segment-table entry
    """
    lookup: dict[tuple[int, int], int] = {}
    for segment_id, key in segment_table.items():
        if not 1 <= segment_id <= MAX_SEGMENT_ID:
            raise SegmentIdOverflowError(f"Segment id {segment_id} outside 1..{MAX_SEGMENT_ID}")
        lookup[(int(key[0]), int(key[1]))] = int(segment_id)

    ids = np.zeros(m.shape, dtype=np.uint32)
    keys = m.segment_keys()
    segments_info = []
    for key in np.unique(keys[keys >= 0]):
        class_id, instance_id = PanopticMap.decode_key(int(key))
        segment_id = lookup.get((class_id, instance_id))
        if segment_id is None:
            raise SegmentTableError(f"No segment id for class {class_id} instance {instance_id}")
        region = keys == key
        ids[region] = segment_id
        segments_info.append({
            "id": segment_id,
            "category_id": class_id,
            "instance_id": instance_id,
            "area": int(region.sum()),
            "iscrowd": 0,
        })
    segments_info.sort(key=lambda s: s["id"])

    destination = Path(destination)
    Image.fromarray(id_to_rgb(ids)).save(destination, format="PNG")
    annotation = {
        "file_name": destination.name,
        "height": m.height,
        "width": m.width,
        "segments_info": segments_info,
    }
    sidecar = sidecar_path(destination)
    sidecar.write_text(json.dumps(annotation, indent=2, sort_keys=True), encoding="utf-8")
    return sidecar


def read_segment_table(source: PathLike) -> SegmentTable:
    """Segment table from the JSON sidecar of a panoptic PNG."""
    sidecar = sidecar_path(source)
    if not sidecar.exists():
        raise MissingInputError(f"Segment sidecar not found: {sidecar}")
    try:
        annotation = json.loads(sidecar.read_text(encoding="utf-8"))
        return {
            int(s["id"]): (int(s["category_id"]), int(s.get("instance_id", 0)))
            for s in annotation["segments_info"]
        }
    except (json.JSONDecodeError, KeyError, TypeError, ValueError) as e:
        raise SegmentTableError(f"Malformed segment sidecar {sidecar}: {e}") from e


def read_panoptic_png(source: PathLike) -> PanopticMap:
    """Read a panoptic PNG and its sidecar back into a PanopticMap."""
    path = Path(source)
    if not path.exists():
        raise MissingInputError(f"Panoptic PNG not found: {source}")
    table = read_segment_table(path)
    with Image.open(path) as image:
        ids = rgb_to_id(np.array(image.convert("RGB")))

    out = PanopticMap.empty(*ids.shape)
    for segment_id in np.unique(ids):
        if segment_id == 0:
            continue
        if int(segment_id) not in table:
            raise SegmentTableError(f"Segment {segment_id} in {path.name} is missing from its sidecar")
        class_id, instance_id = table[int(segment_id)]
        region = ids == segment_id
        out.class_ids[region] = class_id
        out.instance_ids[region] = instance_id
    return out


def write_panoptic(m: PanopticMap, destination: PathLike) -> Path:
    """Write a map with a freshly built segment table."""
    return write_panoptic_png(m, build_segment_table(m), destination)


# ============================================================================
# Class catalog and manifests
# ============================================================================

def read_json(path: Path, what: str, error_cls) -> dict:
    if not path.exists():
        raise MissingInputError(f"{what} not found: {path}")
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except (json.JSONDecodeError, UnicodeDecodeError) as e:
        raise error_cls(f"{what} {path} is not valid JSON: {e}") from e
    if not isinstance(data, dict):
        raise error_cls(f"{what} {path} must hold a JSON object")
    return data


def load_catalog(source: PathLike) -> ClassCatalog:
    return ClassCatalog.from_dict(read_json(Path(source), "Class catalog", CatalogMismatchError))


def write_catalog(catalog: ClassCatalog, destination: PathLike) -> None:
    Path(destination).write_text(json.dumps(catalog.to_dict(), indent=2, sort_keys=True), encoding="utf-8")


def load_manifest(source: PathLike) -> EnsembleManifest:
    path = Path(source)
    data = read_json(path, "Manifest", InvalidManifestError)
    return EnsembleManifest.from_dict(data, base_dir=path.parent)


def write_manifest(manifest: EnsembleManifest, destination: PathLike) -> None:
    Path(destination).write_text(json.dumps(manifest.to_dict(), indent=2, sort_keys=True), encoding="utf-8")


def load_ensemble(manifest_source: PathLike) -> EnsembleBatch:
    """
    Load and validate one image's ensemble.

    Checks every manifest invariant: positive sizes, C >= 2, a catalog with
    exactly C classes, tensor shapes (Q x N x C) and (Q x N x h x w) and
    finite values.

    Raises:
        MissingInputError, InvalidManifestError, ShapeMismatchError,
        CatalogMismatchError, NonFiniteValueError, TensorFormatError
    """
    manifest = load_manifest(manifest_source)

    catalog = load_catalog(manifest.resolve(manifest.class_catalog_path))
    if catalog.num_classes != manifest.C:
        raise CatalogMismatchError(
            f"{manifest.image_id}: catalog has {catalog.num_classes} classes, manifest says C={manifest.C}"
        )

    logits = read_tensor(manifest.resolve(manifest.logits_path))
    masks = read_tensor(manifest.resolve(manifest.masks_path))
    for name, tensor, expected in (
        ("logits", logits, manifest.logits_shape),
        ("masks", masks, manifest.masks_shape),
    ):
        if tensor.dims != expected:
            raise ShapeMismatchError(f"{manifest.image_id}: {name} tensor is {tensor.dims}, manifest expects {expected}")
        if tensor.elem_type != ElemType.FLOAT32:
            raise InvalidManifestError(f"{manifest.image_id}: {name} tensor must be float32, got {tensor.elem_type.name}")

    logits_array = logits.to_array()
    masks_array = masks.to_array()
    if not (np.isfinite(logits_array).all() and np.isfinite(masks_array).all()):
        raise NonFiniteValueError(f"{manifest.image_id}: logits or mask logits contain NaN/Inf")

    logger.info(
        f"Loaded {manifest.image_id}: Q={manifest.Q} N={manifest.N} C={manifest.C} "
        f"masks {manifest.h}x{manifest.w} -> {manifest.H}x{manifest.W}"
    )
    return EnsembleBatch(
        logits=logits_array,
        mask_logits=masks_array,
        image_size=(manifest.H, manifest.W),
        catalog=catalog,
        image_id=manifest.image_id,
    )


def write_ensemble(
    batch: EnsembleBatch,
    directory: PathLike,
    catalog_path: PathLike = None,
) -> Path:
    """
    Write a batch as PFTN tensors + manifest into `directory`.

    Args:
        batch: Ensemble to write
        directory: Output directory
        catalog_path: Existing catalog file to reference; one is written when None

    Returns:
        Path of the manifest
    """
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    image_id = batch.image_id

    logits_name = f"{image_id}_logits.pftn"
    masks_name = f"{image_id}_masks.pftn"
    write_tensor(Tensor.from_array(batch.logits, ElemType.FLOAT32), directory / logits_name)
    write_tensor(Tensor.from_array(batch.mask_logits, ElemType.FLOAT32), directory / masks_name)

    if catalog_path is None:
        catalog_path = directory / f"{image_id}_catalog.json"
        write_catalog(batch.catalog, catalog_path)
    catalog_ref = Path(catalog_path)
    if catalog_ref.parent.resolve() == directory.resolve():
        catalog_ref = Path(catalog_ref.name)

    q, n, c = batch.logits.shape
    h, w = batch.mask_logits.shape[2:]
    manifest = EnsembleManifest(
        image_id=image_id, Q=q, N=n, C=c, h=h, w=w,
        H=batch.image_size[0], W=batch.image_size[1],
        logits_path=logits_name, masks_path=masks_name,
        class_catalog_path=str(catalog_ref),
        base_dir=directory,
    )
    manifest_path = directory / f"{image_id}_manifest.json"
    write_manifest(manifest, manifest_path)
    return manifest_path
