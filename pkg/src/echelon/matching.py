"""Bottom-up model instantiation.

Child hypotheses are gathered into radius clusters; inside each cluster
every slot assignment satisfying type subsumption and count bounds is
enumerated exactly and scored on deployment geometry.  Enumeration is
exponential only in cluster size, which is capped.  Candidates at or
above the fit threshold become parent hypotheses carrying a fit
evidence item whose likelihood ratio rises with geometric fit.
"""

from __future__ import annotations

import itertools
import math
import warnings
from dataclasses import dataclass

from echelon.accrual import DEFAULT_CALIBRATION, FitCalibration
from echelon.evidence import EvidenceItem, EvidenceKind, EvidenceSet
from echelon.exceptions import ClusterCapWarning
from echelon.geometry import centroid, distance, heading_difference, mean_heading
from echelon.hypotheses import Hypothesis, HypothesisGraph, Status
from echelon.models import ForceModel, Level, ModelLibrary, subsumes

MATCHABLE = {Status.ACTIVE, Status.SKIPPED, Status.CONFIRMED}


@dataclass(frozen=True)
class MatchConfig:
    """Knobs of the matcher; all distances in meters.

    slack is the fraction of a constraint's interval width over which
    satisfaction decays linearly to zero outside the interval; rho is
    the per-missing-component score penalty.
    """

    gather_radius: float = 1500.0
    min_fit: float = 0.1
    max_missing: int = 0
    max_cluster: int = 12
    rho: float = 0.5
    slack: float = 0.25
    lambda_max: float = 9.0
    calibration: FitCalibration = DEFAULT_CALIBRATION

    def __post_init__(self) -> None:
        if self.gather_radius <= 0:
            raise ValueError("gather_radius must be positive")
        if not (0.0 <= self.min_fit <= 1.0):
            raise ValueError("min_fit outside [0,1]")
        if self.max_missing < 0 or self.max_cluster < 1:
            raise ValueError("max_missing/max_cluster out of range")
        if not (0.0 < self.rho <= 1.0):
            raise ValueError("rho outside (0,1]")
        if self.slack < 0.0:
            raise ValueError("slack must be nonnegative")
        if self.lambda_max <= 1.0:
            raise ValueError("lambda_max must exceed 1")

    @classmethod
    def from_dict(cls, raw: dict) -> "MatchConfig":
        allowed = {
            "gather_radius",
            "min_fit",
            "max_missing",
            "max_cluster",
            "rho",
            "slack",
            "lambda_max",
        }
        unknown = set(raw) - allowed
        if unknown:
            raise ValueError(f"matcher config: unknown keys {sorted(unknown)}")
        return cls(**raw)


@dataclass
class MatchCandidate:
    """One enumerated model instantiation over child hypotheses."""

    model: ForceModel
    assignment: dict[int, tuple[str, ...]]
    fit_score: float
    missing_slots: int

    def children(self) -> tuple[str, ...]:
        return tuple(sorted(itertools.chain.from_iterable(self.assignment.values())))


def _interval_satisfaction(d: float, lo: float, hi: float, slack: float) -> float:
    if lo <= d <= hi:
        return 1.0
    margin = slack * (hi - lo)
    if margin <= 0.0:
        return 0.0
    delta = (lo - d) if d < lo else (d - hi)
    return max(0.0, 1.0 - delta / margin)


def _geometric_mean(values: list[float]) -> float:
    if not values:
        return 1.0
    if any(v == 0.0 for v in values):
        return 0.0
    if all(v == 1.0 for v in values):
        return 1.0
    return math.exp(math.fsum(math.log(v) for v in values) / len(values))


def fit_score(
    g: HypothesisGraph,
    model: ForceModel,
    assignment: dict[int, tuple[str, ...]],
    cfg: MatchConfig,
) -> float:
    """Geometric mean of per-constraint satisfaction, penalized rho per
    missing required component.

    A constraint applies to every cross pair of its two slots (distinct
    pairs when both indices match); a constraint with fewer than one
    applicable pair is skipped.  Distances inside the interval satisfy
    fully; outside, satisfaction decays linearly over the slack margin.
    Pair heading differences are held to bearing_tolerance the same
    way.  The score depends only on relative geometry, so it is
    invariant under rigid motions of the children.
    """
    per_constraint: list[float] = []
    for c in model.constraints:
        ids_a = assignment.get(c.slot_a, ())
        ids_b = assignment.get(c.slot_b, ())
        if c.slot_a == c.slot_b:
            pairs = list(itertools.combinations(ids_a, 2))
        else:
            pairs = [(u, v) for u in ids_a for v in ids_b]
        if not pairs:
            continue
        sats: list[float] = []
        for u, v in pairs:
            hu, hv = g.get(u), g.get(v)
            s = _interval_satisfaction(
                distance(hu.location, hv.location),
                c.distance_min,
                c.distance_max,
                cfg.slack,
            )
            if (
                c.bearing_tolerance is not None
                and hu.heading is not None
                and hv.heading is not None
            ):
                diff = heading_difference(hu.heading, hv.heading)
                if diff > c.bearing_tolerance:
                    margin = cfg.slack * c.bearing_tolerance
                    if margin <= 0.0:
                        s = 0.0
                    else:
                        s *= max(0.0, 1.0 - (diff - c.bearing_tolerance) / margin)
            sats.append(s)
        per_constraint.append(_geometric_mean(sats))

    missing = sum(
        max(0, slot.count_min - len(assignment.get(i, ())))
        for i, slot in enumerate(model.slots)
    )
    return _geometric_mean(per_constraint) * cfg.rho**missing


def _clusters(
    g: HypothesisGraph, ids: list[str], radius: float
) -> list[list[str]]:
    parent = {i: i for i in ids}

    def find(x: str) -> str:
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for a, b in itertools.combinations(ids, 2):
        if distance(g.get(a).location, g.get(b).location) <= radius:
            parent[find(a)] = find(b)
    groups: dict[str, list[str]] = {}
    for i in ids:
        groups.setdefault(find(i), []).append(i)
    return [sorted(groups[r]) for r in sorted(groups, key=lambda r: min(groups[r]))]


def _cap_cluster(g: HypothesisGraph, cluster: list[str], cap: int) -> list[str]:
    if len(cluster) <= cap:
        return cluster
    warnings.warn(
        f"cluster of {len(cluster)} children exceeds max_cluster={cap}; "
        "keeping the members nearest the cluster centroid",
        ClusterCapWarning,
        stacklevel=3,
    )
    center = centroid([g.get(i).location for i in cluster])
    ranked = sorted(cluster, key=lambda i: (distance(g.get(i).location, center), i))
    return sorted(ranked[:cap])


def _enumerate_assignments(
    g: HypothesisGraph,
    lib: ModelLibrary,
    model: ForceModel,
    pool: list[str],
    max_missing: int,
):
    eligible = [
        [c for c in pool if subsumes(s.required_type, g.get(c).force_type, lib)]
        for s in model.slots
    ]

    def rec(slot_idx: int, used: frozenset[str], missing: int, acc: dict):
        if missing > max_missing:
            return
        if slot_idx == len(model.slots):
            if any(acc.values()):
                yield dict(acc), missing
            return
        slot = model.slots[slot_idx]
        avail = [c for c in eligible[slot_idx] if c not in used]
        for size in range(0, min(slot.count_max, len(avail)) + 1):
            short = max(0, slot.count_min - size)
            for combo in itertools.combinations(avail, size):
                acc[slot_idx] = combo
                yield from rec(slot_idx + 1, used | set(combo), missing + short, acc)
        acc.pop(slot_idx, None)

    yield from rec(0, frozenset(), 0, {})


def match_level(
    g: HypothesisGraph,
    lib: ModelLibrary,
    level: Level,
    cfg: MatchConfig,
) -> list[MatchCandidate]:
    """All candidates at ``level`` meeting the fit and missing bounds.

    Output order is deterministic (descending fit, then model name,
    then child ids) and invariant to child insertion order.
    """
    if level == Level.VEHICLE:
        raise ValueError("vehicle level has no child level to match against")
    child_ids = sorted(g.at_level(Level(level - 1), statuses=MATCHABLE))
    models = lib.models_at(level)
    if not child_ids or not models:
        return []

    candidates: list[MatchCandidate] = []
    for cluster in _clusters(g, child_ids, cfg.gather_radius):
        cluster = _cap_cluster(g, cluster, cfg.max_cluster)
        for model in models:
            for assignment, missing in _enumerate_assignments(
                g, lib, model, cluster, cfg.max_missing
            ):
                score = fit_score(g, model, assignment, cfg)
                if score >= cfg.min_fit:
                    candidates.append(
                        MatchCandidate(
                            model=model,
                            assignment=assignment,
                            fit_score=score,
                            missing_slots=missing,
                        )
                    )
    candidates.sort(key=lambda c: (-c.fit_score, c.model.name, c.children()))
    return candidates


def candidate_to_hypothesis(
    g: HypothesisGraph,
    lib: ModelLibrary,
    c: MatchCandidate,
    cfg: MatchConfig,
) -> tuple[Hypothesis, EvidenceItem]:
    """Build the parent hypothesis and its fit evidence item.

    The fit likelihood ratio is lambda_max ** (2*fit - 1): confirming
    above fit 0.5, uninformative at 0.5, disconfirming below.  Neither
    object is registered with the graph; the caller owns insertion.
    """
    if c.fit_score < cfg.min_fit:
        raise ValueError(
            f"candidate below fit threshold: {c.fit_score} < {cfg.min_fit}"
        )
    children = c.children()
    locations = [g.get(i).location for i in children]
    headings = [g.get(i).heading for i in children]
    center = centroid(locations)
    lam = cfg.lambda_max ** (2.0 * c.fit_score - 1.0)
    item = EvidenceItem(
        id="f:" + c.model.name + ":" + "+".join(children),
        kind=EvidenceKind.FIT,
        likelihood_ratio=lam,
        location=center,
        sensor_context={"fit_score": c.fit_score, "model": c.model.name},
    )
    h = Hypothesis(
        id="",
        force_type=c.model.models_type,
        level=lib.type_of(c.model.models_type).level,
        location=center,
        time=max((g.get(i).time for i in children), default=0.0),
        model=c.model.name,
        components=children,
        own_evidence=EvidenceSet.of(item.id),
        prior=c.model.prior,
        posterior=c.model.prior,
        heading=mean_heading([h for h in headings if h is not None]),
    )
    return h, item
