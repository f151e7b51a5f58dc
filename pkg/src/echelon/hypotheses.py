"""Runtime hypothesis space.

Hypotheses are instantiated claims that a force of some type sits at a
location; component links tie each one to the hypotheses exactly one
level below it, forming a level-descending DAG.  One child may support
several parents; that overlap is precisely what conflict detection
feeds on.  Mutation is single-writer; reads may run concurrently.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import TYPE_CHECKING

from echelon.evidence import EMPTY_SET, EvidenceItem, EvidenceSet
from echelon.exceptions import (
    DanglingComponentError,
    EvidenceResolutionError,
    LevelViolationError,
    UnknownHypothesisError,
)
from echelon.models import Level

if TYPE_CHECKING:
    from echelon.accrual import AccrualResult

_ID_PREFIX = {
    Level.VEHICLE: "v",
    Level.ARRAY: "a",
    Level.BATTALION: "b",
    Level.REGIMENT: "r",
    Level.DIVISION: "d",
}


class Status(enum.Enum):
    """SKIPPED and EXCLUDED are set by conflict handling; CONFIRMED is
    reserved for downstream consumers and never set by the engine."""

    ACTIVE = "active"
    SKIPPED = "skipped"
    EXCLUDED = "excluded"
    CONFIRMED = "confirmed"


@dataclass
class Hypothesis:
    """A claim that a force of ``force_type`` exists at ``location``.

    Leaves (vehicle level) have no components and no model; every other
    hypothesis was instantiated from a model over one-level-lower
    components.  ``posterior`` and ``status`` are bookkeeping updated by
    the accrual and conflict stages; everything else is fixed at insert.
    """

    id: str
    force_type: str
    level: Level
    location: tuple[float, float]
    time: float = 0.0
    model: str | None = None
    components: tuple[str, ...] = ()
    own_evidence: EvidenceSet = EMPTY_SET
    prior: float = 0.5
    posterior: float = 0.5
    heading: float | None = None
    status: Status = Status.ACTIVE
    # Filled by propagate_level: full factor trace behind `posterior`.
    accrual: "AccrualResult | None" = None

    def is_leaf(self) -> bool:
        return self.level == Level.VEHICLE


@dataclass
class HypothesisGraph:
    """Id-addressed store of hypotheses plus the evidence table backing
    every referenced item id."""

    hypotheses: dict[str, Hypothesis] = field(default_factory=dict)
    evidence: dict[str, EvidenceItem] = field(default_factory=dict)
    _by_level: dict[Level, list[str]] = field(default_factory=dict)
    _closures: dict[str, EvidenceSet] = field(default_factory=dict)
    _counters: dict[Level, int] = field(default_factory=dict)

    def add_evidence(self, item: EvidenceItem) -> None:
        if item.id in self.evidence:
            raise ValueError(f"duplicate evidence id {item.id!r}")
        self.evidence[item.id] = item

    def item(self, item_id: str) -> EvidenceItem:
        try:
            return self.evidence[item_id]
        except KeyError:
            raise EvidenceResolutionError(
                f"evidence id {item_id!r} not in evidence table"
            ) from None

    def insert(self, h: Hypothesis) -> str:
        """Validate and add a hypothesis; returns its (possibly assigned) id.

        Components must already be present and sit exactly one level
        below; every own-evidence id must resolve in the evidence table.
        """
        if not h.id:
            n = self._counters.get(h.level, 0)
            self._counters[h.level] = n + 1
            h.id = f"{_ID_PREFIX[h.level]}{n}"
        if h.id in self.hypotheses:
            raise ValueError(f"duplicate hypothesis id {h.id!r}")
        if h.is_leaf():
            if h.components:
                raise LevelViolationError(f"{h.id}: leaf hypotheses have no components")
            if h.model is not None:
                raise LevelViolationError(f"{h.id}: leaf hypotheses carry no model")
        elif not h.components:
            raise LevelViolationError(
                f"{h.id}: non-leaf hypothesis needs at least one component"
            )
        for cid in h.components:
            child = self.hypotheses.get(cid)
            if child is None:
                raise DanglingComponentError(f"{h.id}: dangling component {cid!r}")
            if child.level != h.level - 1:
                raise LevelViolationError(
                    f"{h.id}: level violation: component {cid} is "
                    f"{child.level.label}, expected {Level(h.level - 1).label}"
                )
        for item_id in h.own_evidence:
            self.item(item_id)
        if not (0.0 <= h.prior <= 1.0 and 0.0 <= h.posterior <= 1.0):
            raise ValueError(f"{h.id}: prior/posterior outside [0,1]")
        self.hypotheses[h.id] = h
        self._by_level.setdefault(h.level, []).append(h.id)
        return h.id

    def get(self, hid: str) -> Hypothesis:
        try:
            return self.hypotheses[hid]
        except KeyError:
            raise UnknownHypothesisError(f"unknown hypothesis {hid!r}") from None

    def at_level(self, level: Level, statuses: set[Status] | None = None) -> list[str]:
        ids = self._by_level.get(level, [])
        if statuses is None:
            return list(ids)
        return [i for i in ids if self.hypotheses[i].status in statuses]

    def evidence_closure(self, hid: str) -> EvidenceSet:
        """Own evidence unioned with all component closures, recursively.

        Component links are fixed at insert, so closures are memoized.
        """
        cached = self._closures.get(hid)
        if cached is not None:
            return cached
        h = self.get(hid)
        closure = h.own_evidence
        for cid in h.components:
            closure = closure | self.evidence_closure(cid)
        self._closures[hid] = closure
        return closure

    def shared_evidence(self, a: str, b: str) -> EvidenceSet:
        return self.evidence_closure(a) & self.evidence_closure(b)

    def parents_of(self, hid: str) -> list[str]:
        """Ids of hypotheses having ``hid`` as a component, id-sorted."""
        self.get(hid)
        return sorted(
            h.id for h in self.hypotheses.values() if hid in h.components
        )
