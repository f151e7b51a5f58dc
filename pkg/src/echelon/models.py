"""Static force-model knowledge base.

Force types live in a within-level refinement ("is-a") hierarchy, while
composition models span levels ("part-of"): a model at one level lists
component slots whose types sit exactly one level below.  Doctrine adds
plausibility tables (minimum separations, heading compatibility) used
as non-evidential conflict tests.  A loaded library is immutable and
safe to share across threads.
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field
from typing import Iterator, Mapping

from echelon.exceptions import (
    LibraryFormatError,
    LibraryValidationError,
    UnknownTypeError,
)


class Level(enum.IntEnum):
    """Force levels, ordered bottom-up.

    The second level is called "array" because it also covers
    non-company units such as artillery batteries and missile sites.
    """

    VEHICLE = 0
    ARRAY = 1
    BATTALION = 2
    REGIMENT = 3
    DIVISION = 4

    @property
    def label(self) -> str:
        return self.name.lower()

    @classmethod
    def from_label(cls, label: str) -> "Level":
        try:
            return cls[label.upper()]
        except KeyError:
            raise LibraryFormatError(f"unknown level {label!r}") from None


LEVELS = tuple(Level)


@dataclass(frozen=True)
class ForceType:
    """A named force type at a fixed level, optionally refining a parent."""

    name: str
    level: Level
    isa_parent: str | None = None


@dataclass(frozen=True)
class ComponentSlot:
    """One component requirement of a model: a type and a count range."""

    required_type: str
    count_min: int
    count_max: int

    def __post_init__(self) -> None:
        if self.count_min < 0:
            raise LibraryValidationError(f"slot {self.required_type}: count_min < 0")
        if self.count_max < self.count_min:
            raise LibraryValidationError(
                f"slot {self.required_type}: count_max < count_min"
            )


@dataclass(frozen=True)
class DeploymentConstraint:
    """Pairwise spatial constraint between members of two slots.

    Applies to every cross pair of the two assignments (all distinct
    pairs when both indices name the same slot).  ``bearing_tolerance``
    bounds the heading difference between the pair, in degrees.
    """

    slot_a: int
    slot_b: int
    distance_min: float
    distance_max: float
    bearing_tolerance: float | None = None

    def __post_init__(self) -> None:
        if not (0 <= self.distance_min <= self.distance_max):
            raise LibraryValidationError(
                f"constraint ({self.slot_a},{self.slot_b}): "
                "need 0 <= distance_min <= distance_max"
            )


@dataclass(frozen=True)
class ForceModel:
    """A deployment template: the type it models, slots, geometry, prior."""

    name: str
    models_type: str
    slots: tuple[ComponentSlot, ...]
    constraints: tuple[DeploymentConstraint, ...] = ()
    prior: float = 0.5

    def __post_init__(self) -> None:
        if not self.slots:
            raise LibraryValidationError(f"model {self.name}: needs at least one slot")
        if not (0.0 <= self.prior <= 1.0):
            raise LibraryValidationError(f"model {self.name}: prior outside [0,1]")
        for c in self.constraints:
            for idx in (c.slot_a, c.slot_b):
                if not (0 <= idx < len(self.slots)):
                    raise LibraryValidationError(
                        f"model {self.name}: constraint references slot {idx} "
                        f"but model has {len(self.slots)} slots"
                    )


@dataclass(frozen=True)
class DoctrineConfig:
    """Plausibility tables keyed by unordered type-name pairs.

    ``min_separation`` gives the closest two units of the given types
    may legally sit; ``max_heading_delta`` the largest heading
    difference they may legally show.  Lookups walk both refinement
    chains and return the most specific entry.
    """

    min_separation: Mapping[tuple[str, str], float] = field(default_factory=dict)
    max_heading_delta: Mapping[tuple[str, str], float] = field(default_factory=dict)

    @staticmethod
    def key(a: str, b: str) -> tuple[str, str]:
        return (a, b) if a <= b else (b, a)


@dataclass(frozen=True)
class ModelLibrary:
    """Validated, immutable collection of types, models and doctrine."""

    types: Mapping[str, ForceType]
    models: Mapping[str, ForceModel]
    doctrine: DoctrineConfig = field(default_factory=DoctrineConfig)

    def type_of(self, name: str) -> ForceType:
        try:
            return self.types[name]
        except KeyError:
            raise UnknownTypeError(f"unknown force type {name!r}") from None

    def models_at(self, level: Level) -> list[ForceModel]:
        """Models whose modeled type sits at ``level``, name-sorted."""
        out = [
            m
            for m in self.models.values()
            if self.types[m.models_type].level == level
        ]
        out.sort(key=lambda m: m.name)
        return out

    def min_separation(self, a: str, b: str) -> float | None:
        return self._doctrine_lookup(self.doctrine.min_separation, a, b)

    def max_heading_delta(self, a: str, b: str) -> float | None:
        return self._doctrine_lookup(self.doctrine.max_heading_delta, a, b)

    def _doctrine_lookup(
        self, table: Mapping[tuple[str, str], float], a: str, b: str
    ) -> float | None:
        # Most specific applicable entry wins: walk ancestor pairs in
        # order of combined refinement depth (shallowest climb first).
        chain_a = isa_ancestors(a, self)
        chain_b = isa_ancestors(b, self)
        best: tuple[int, float] | None = None
        for i, ta in enumerate(chain_a):
            for j, tb in enumerate(chain_b):
                val = table.get(DoctrineConfig.key(ta.name, tb.name))
                if val is not None and (best is None or i + j < best[0]):
                    best = (i + j, val)
        return None if best is None else best[1]


def isa_ancestors(type_name: str | ForceType, lib: ModelLibrary) -> list[ForceType]:
    """Refinement chain [t, parent, ..., root]; the root has no parent."""
    name = type_name.name if isinstance(type_name, ForceType) else type_name
    t = lib.type_of(name)
    chain = [t]
    while t.isa_parent is not None:
        t = lib.type_of(t.isa_parent)
        chain.append(t)
    return chain


def subsumes(general: str, specific: str, lib: ModelLibrary) -> bool:
    """True iff ``general`` appears on ``specific``'s refinement chain.

    Reflexive: every type subsumes itself.
    """
    lib.type_of(general)
    return any(t.name == general for t in isa_ancestors(specific, lib))


_TYPE_KEYS = {"name", "level", "isa"}
_MODEL_KEYS = {"name", "type", "slots", "constraints", "prior"}
_SLOT_KEYS = {"type", "min", "max"}
_CONSTRAINT_KEYS = {"slots", "d_min", "d_max", "bearing_tol"}
_DOCTRINE_KEYS = {"min_separation", "max_heading_delta"}
_PAIR_KEYS = {"a", "b", "meters", "degrees"}


def load_library(text: str) -> ModelLibrary:
    """Parse and validate a serialized library.

    Strict: unknown keys anywhere in the document are rejected, so a
    typo fails loudly instead of silently dropping a constraint.
    """
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise LibraryFormatError(f"library is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise LibraryFormatError("library document must be a JSON object")
    unknown = set(doc) - {"types", "models", "doctrine"}
    if unknown:
        raise LibraryFormatError(f"unknown top-level keys: {sorted(unknown)}")

    types = _parse_types(doc.get("types", []))
    models = _parse_models(doc.get("models", []))
    doctrine = _parse_doctrine(doc.get("doctrine", {}))
    lib = ModelLibrary(types=types, models=models, doctrine=doctrine)
    _validate(lib)
    return lib


def _require_keys(obj: dict, allowed: set[str], what: str) -> None:
    if not isinstance(obj, dict):
        raise LibraryFormatError(f"{what} must be an object")
    unknown = set(obj) - allowed
    if unknown:
        raise LibraryFormatError(f"{what}: unknown keys {sorted(unknown)}")


def _parse_types(raw: list) -> dict[str, ForceType]:
    types: dict[str, ForceType] = {}
    for entry in raw:
        _require_keys(entry, _TYPE_KEYS, "type entry")
        try:
            t = ForceType(
                name=entry["name"],
                level=Level.from_label(entry["level"]),
                isa_parent=entry.get("isa"),
            )
        except KeyError as exc:
            raise LibraryFormatError(f"type entry missing key {exc}") from None
        if t.name in types:
            raise LibraryValidationError(f"duplicate type {t.name!r}")
        types[t.name] = t
    return types


def _parse_models(raw: list) -> dict[str, ForceModel]:
    models: dict[str, ForceModel] = {}
    for entry in raw:
        _require_keys(entry, _MODEL_KEYS, "model entry")
        slots = []
        for s in entry.get("slots", []):
            _require_keys(s, _SLOT_KEYS, "slot entry")
            slots.append(
                ComponentSlot(
                    required_type=s["type"],
                    count_min=int(s["min"]),
                    count_max=int(s["max"]),
                )
            )
        constraints = []
        for c in entry.get("constraints", []):
            _require_keys(c, _CONSTRAINT_KEYS, "constraint entry")
            pair = c["slots"]
            if not (isinstance(pair, list) and len(pair) == 2):
                raise LibraryFormatError("constraint 'slots' must be a pair")
            constraints.append(
                DeploymentConstraint(
                    slot_a=int(pair[0]),
                    slot_b=int(pair[1]),
                    distance_min=float(c["d_min"]),
                    distance_max=float(c["d_max"]),
                    bearing_tolerance=(
                        float(c["bearing_tol"]) if "bearing_tol" in c else None
                    ),
                )
            )
        try:
            m = ForceModel(
                name=entry["name"],
                models_type=entry["type"],
                slots=tuple(slots),
                constraints=tuple(constraints),
                prior=float(entry.get("prior", 0.5)),
            )
        except KeyError as exc:
            raise LibraryFormatError(f"model entry missing key {exc}") from None
        if m.name in models:
            raise LibraryValidationError(f"duplicate model {m.name!r}")
        models[m.name] = m
    return models


def _parse_doctrine(raw: dict) -> DoctrineConfig:
    _require_keys(raw, _DOCTRINE_KEYS, "doctrine")
    min_sep: dict[tuple[str, str], float] = {}
    for entry in raw.get("min_separation", []):
        _require_keys(entry, _PAIR_KEYS - {"degrees"}, "min_separation entry")
        min_sep[DoctrineConfig.key(entry["a"], entry["b"])] = float(entry["meters"])
    max_delta: dict[tuple[str, str], float] = {}
    for entry in raw.get("max_heading_delta", []):
        _require_keys(entry, _PAIR_KEYS - {"meters"}, "max_heading_delta entry")
        max_delta[DoctrineConfig.key(entry["a"], entry["b"])] = float(entry["degrees"])
    return DoctrineConfig(min_separation=min_sep, max_heading_delta=max_delta)


def _validate(lib: ModelLibrary) -> None:
    for t in lib.types.values():
        _validate_isa_chain(t, lib)
    for m in lib.models.values():
        model_level = _resolved_level(m.models_type, lib, f"model {m.name}")
        for slot in m.slots:
            slot_level = _resolved_level(
                slot.required_type, lib, f"model {m.name} slot"
            )
            if model_level == Level.VEHICLE:
                raise LibraryValidationError(
                    f"model {m.name}: vehicle-level types have no components"
                )
            if slot_level != model_level - 1:
                raise LibraryValidationError(
                    f"model {m.name}: level skip: slot type "
                    f"{slot.required_type!r} is {slot_level.label}, "
                    f"expected {Level(model_level - 1).label}"
                )
    for pair in list(lib.doctrine.min_separation) + list(lib.doctrine.max_heading_delta):
        for name in pair:
            if name not in lib.types:
                raise LibraryValidationError(f"doctrine: dangling type {name!r}")


def _resolved_level(name: str, lib: ModelLibrary, what: str) -> Level:
    if name not in lib.types:
        raise LibraryValidationError(f"{what}: dangling type {name!r}")
    return lib.types[name].level


def _validate_isa_chain(t: ForceType, lib: ModelLibrary) -> None:
    seen = {t.name}
    cur = t
    while cur.isa_parent is not None:
        if cur.isa_parent not in lib.types:
            raise LibraryValidationError(
                f"type {cur.name!r}: dangling type {cur.isa_parent!r}"
            )
        parent = lib.types[cur.isa_parent]
        if parent.level != t.level:
            raise LibraryValidationError(
                f"type {cur.name!r}: is-a parent {parent.name!r} is at "
                f"{parent.level.label}, not {t.level.label} (is-a refines "
                "within a level)"
            )
        if parent.name in seen:
            raise LibraryValidationError(f"cyclic isa chain through {parent.name!r}")
        seen.add(parent.name)
        cur = parent


def iter_vehicle_types(lib: ModelLibrary) -> Iterator[ForceType]:
    for name in sorted(lib.types):
        t = lib.types[name]
        if t.level == Level.VEHICLE:
            yield t
