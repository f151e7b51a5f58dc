"""Evidence atoms and the likelihood-ratio combiner.

Every atom carries a likelihood ratio lambda = P(item | supported
hypothesis) / P(item | its negation).  Subsets of atoms combine into a
posterior by the odds product, which is the unique combiner consistent
with treating atoms as conditionally independent given the hypothesis
and supports evaluation on any evidence subset.
"""

from __future__ import annotations

import enum
import math
import warnings
from dataclasses import dataclass, field
from typing import Any, Iterable, Iterator, Mapping, Sequence

from echelon.exceptions import DegeneratePriorWarning

# Beyond this many ratios the odds product moves to log space to dodge
# overflow/underflow; results are surfaced in linear space either way.
_LOG_SPACE_THRESHOLD = 30


class EvidenceKind(enum.Enum):
    DETECTION = "detection"
    FIT = "fit"
    TERRAIN = "terrain"


@dataclass(frozen=True)
class EvidenceItem:
    """One atomic support unit: a detection, a formation-fit score, or
    a terrain statement, reduced to a likelihood ratio."""

    id: str
    kind: EvidenceKind
    likelihood_ratio: float
    location: tuple[float, float] | None = None
    heading: float | None = None
    sensor_context: Mapping[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        lr = self.likelihood_ratio
        if not (lr > 0.0 and math.isfinite(lr)):
            raise ValueError(
                f"evidence {self.id!r}: likelihood_ratio must be positive "
                f"and finite, got {lr!r}"
            )


@dataclass(frozen=True)
class EvidenceSet:
    """An immutable set of evidence item ids with plain set algebra."""

    items: frozenset[str] = frozenset()

    @classmethod
    def of(cls, *ids: str) -> "EvidenceSet":
        return cls(frozenset(ids))

    @classmethod
    def from_iterable(cls, ids: Iterable[str]) -> "EvidenceSet":
        return cls(frozenset(ids))

    def union(self, other: "EvidenceSet") -> "EvidenceSet":
        return EvidenceSet(self.items | other.items)

    def difference(self, other: "EvidenceSet") -> "EvidenceSet":
        return EvidenceSet(self.items - other.items)

    def shared(self, other: "EvidenceSet") -> "EvidenceSet":
        """Intersection: the evidence associated to both sides."""
        return EvidenceSet(self.items & other.items)

    __or__ = union
    __sub__ = difference
    __and__ = shared

    def issubset(self, other: "EvidenceSet") -> bool:
        return self.items <= other.items

    def __contains__(self, item_id: str) -> bool:
        return item_id in self.items

    def __iter__(self) -> Iterator[str]:
        return iter(sorted(self.items))

    def __len__(self) -> int:
        return len(self.items)

    def __bool__(self) -> bool:
        return bool(self.items)


EMPTY_SET = EvidenceSet()


def posterior_from_evidence(
    prior: float, items: Sequence[EvidenceItem] | Sequence[float]
) -> float:
    """Combine a prior with likelihood ratios in odds form.

    Accepts items or bare ratios.  A prior of exactly 0 or 1 is
    returned unchanged with a diagnostic: evidence cannot move
    certainty.  An empty item list returns the prior.
    """
    if not (0.0 <= prior <= 1.0):
        raise ValueError(f"prior must be in [0,1], got {prior!r}")
    if prior == 0.0 or prior == 1.0:
        warnings.warn(
            f"degenerate prior {prior}: evidence ignored",
            DegeneratePriorWarning,
            stacklevel=2,
        )
        return prior
    ratios = [
        it.likelihood_ratio if isinstance(it, EvidenceItem) else float(it)
        for it in items
    ]
    if not ratios:
        return prior

    if len(ratios) <= _LOG_SPACE_THRESHOLD:
        odds = prior / (1.0 - prior)
        for lr in ratios:
            odds *= lr
        if math.isinf(odds):
            return 1.0
        return odds / (1.0 + odds)

    log_odds = math.log(prior) - math.log1p(-prior)
    log_odds += sum(math.log(lr) for lr in ratios)
    if log_odds >= 0:
        return 1.0 / (1.0 + math.exp(-log_odds))
    expo = math.exp(log_odds)
    return expo / (1.0 + expo)


def odds(p: float) -> float:
    """p / (1-p); infinity at p=1."""
    if p >= 1.0:
        return math.inf
    return p / (1.0 - p)


def from_odds(o: float) -> float:
    if math.isinf(o):
        return 1.0
    return o / (1.0 + o)
