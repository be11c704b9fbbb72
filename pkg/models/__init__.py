"""Data models for the ensemble panoptic fusion toolkit."""

from .catalog import ClassCatalog, ClassEntry
from .confidence import ConfidenceStack, MeanConfidence
from .ensemble import NO_PROPOSAL, EnsembleBatch, EnsembleManifest, PerSampleSegmentation
from .evaluation import PQResult, PQStatClass, PQStats, SweepCurve, SweepPoint
from .fusion import FusionParams, InstanceRecord
from .panoptic import VOID, PanopticMap
from .synthetic import Correspondence, JitterSpec, PlantedInstance, SceneRegistry, SceneSpec
from .tensor import ElemType, Tensor
from .uncertainty import EntropyHistogram, UncertaintyMap

__all__ = [
    "ClassCatalog", "ClassEntry",
    "ConfidenceStack", "MeanConfidence",
    "NO_PROPOSAL", "EnsembleBatch", "EnsembleManifest", "PerSampleSegmentation",
    "PQResult", "PQStatClass", "PQStats", "SweepCurve", "SweepPoint",
    "FusionParams", "InstanceRecord",
    "VOID", "PanopticMap",
    "Correspondence", "JitterSpec", "PlantedInstance", "SceneRegistry", "SceneSpec",
    "ElemType", "Tensor",
    "EntropyHistogram", "UncertaintyMap",
]
