"""
Class catalog: which class ids are things, stuff or the background slot.
"""

from dataclasses import dataclass, field
from typing import Any

import numpy as np

from errors import CatalogMismatchError


@dataclass(frozen=True)
class ClassEntry:
    class_id: int
    name: str
    is_thing: bool = False


@dataclass
class ClassCatalog:
    """
    Ordered class list with contiguous ids 0..C-1.

    The background id is the reserved "no object" slot of the network output.
    It is neither a thing nor a stuff class.
    """

    entries: list[ClassEntry]
    background_id: int
    _thing_lookup: np.ndarray = field(init=False, repr=False)
    _stuff_lookup: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        ids = [e.class_id for e in self.entries]
        if sorted(ids) != list(range(len(ids))):
            raise CatalogMismatchError(f"Class ids must be unique and contiguous from 0, got {ids}")
        if not 0 <= self.background_id < len(ids):
            raise CatalogMismatchError(f"background_id {self.background_id} not in catalog")
        self.entries = sorted(self.entries, key=lambda e: e.class_id)
        if self.entries[self.background_id].is_thing:
            raise CatalogMismatchError("Background class cannot be a thing class")

        self._thing_lookup = np.array([e.is_thing for e in self.entries], dtype=bool)
        self._stuff_lookup = ~self._thing_lookup
        self._stuff_lookup[self.background_id] = False

    @property
    def num_classes(self) -> int:
        return len(self.entries)

    @property
    def thing_ids(self) -> list[int]:
        return [e.class_id for e in self.entries if self.is_thing(e.class_id)]

    @property
    def stuff_ids(self) -> list[int]:
        return [e.class_id for e in self.entries if self.is_stuff(e.class_id)]

    def is_thing(self, class_id: int) -> bool:
        return bool(self._thing_lookup[class_id])

    def is_stuff(self, class_id: int) -> bool:
        return bool(self._stuff_lookup[class_id])

    def thing_mask(self, class_ids: np.ndarray) -> np.ndarray:
        """Vectorised is_thing over an integer array; negative ids are never things."""
        class_ids = np.asarray(class_ids)
        valid = class_ids >= 0
        out = np.zeros(class_ids.shape, dtype=bool)
        out[valid] = self._thing_lookup[class_ids[valid]]
        return out

    def stuff_mask(self, class_ids: np.ndarray) -> np.ndarray:
        """Vectorised is_stuff over an integer array; negative ids are never stuff."""
        class_ids = np.asarray(class_ids)
        valid = class_ids >= 0
        out = np.zeros(class_ids.shape, dtype=bool)
        out[valid] = self._stuff_lookup[class_ids[valid]]
        return out

    def name(self, class_id: int) -> str:
        return self.entries[class_id].name

    def to_dict(self) -> dict[str, Any]:
        return {
            "background_id": self.background_id,
            "classes": [
                {"id": e.class_id, "name": e.name, "isthing": int(e.is_thing)}
                for e in self.entries
            ],
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "ClassCatalog":
        """
        Build a catalog from its JSON document.

        Expected shape: {"background_id": int, "classes": [{"id", "name", "isthing"}, ...]}
        """
        try:
            entries = [
                ClassEntry(
                    class_id=int(item["id"]),
                    name=str(item.get("name", f"class_{item['id']}")),
                    is_thing=bool(item.get("isthing", 0)),
                )
                for item in data["classes"]
            ]
            background_id = int(data["background_id"])
        except (KeyError, TypeError, ValueError) as e:
            raise CatalogMismatchError(f"Malformed class catalog: {e}") from e
        return cls(entries=entries, background_id=background_id)

    @classmethod
    def build(cls, stuff: list[str], things: list[str], background: str = "no_object") -> "ClassCatalog":
        """Convenience constructor: stuff classes, then thing classes, background last."""
        entries = []
        for name in stuff:
            entries.append(ClassEntry(len(entries), name, False))
        for name in things:
            entries.append(ClassEntry(len(entries), name, True))
        entries.append(ClassEntry(len(entries), background, False))
        return cls(entries=entries, background_id=len(entries) - 1)
