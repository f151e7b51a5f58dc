"""Conflict detection and resolution.

Same-level hypotheses conflict when their evidence closures overlap
(one item claimed by both) or when doctrine rules them implausible
together (too close, incompatible headings).  Each connected group is
analyzed in polynomial time: members are ordered heuristically, each is
scored on the pooled evidence minus the closures of the members after
it, and the product k estimates how likely all members are to be true
despite the conflict.  (1-k)/k is the conflict measure: when it is
under threshold the group is skipped (accrual jumps over the level)
with a per-parent error estimate; otherwise the group is resolved
exactly over maximal consistent sets, which is worst-case exponential.
"""

from __future__ import annotations

import enum
import math
import warnings
from dataclasses import dataclass, field

from echelon.accrual import (
    DEFAULT_CALIBRATION,
    FitCalibration,
    direct_posterior,
    posterior_given_subset,
)
from echelon.evidence import EMPTY_SET, EvidenceKind, EvidenceSet
from echelon.exceptions import (
    DegenerateThresholdWarning,
    ResolutionTooLargeError,
)
from echelon.geometry import distance, heading_difference
from echelon.hypotheses import HypothesisGraph, Status
from echelon.models import LEVELS, Level, ModelLibrary


class ConflictReason(enum.Enum):
    SHARED_EVIDENCE = "shared_evidence"
    TOO_CLOSE = "too_close"
    ORIENTATION = "orientation"


class Heuristic(enum.Enum):
    MOST_MATCHES = "most_matches"
    HIGHEST_PRIOR = "highest_prior"
    HIGHEST_POSTERIOR = "highest_posterior"


class Decision(enum.Enum):
    SKIP = "skip"
    RESOLVE = "resolve"


@dataclass(frozen=True)
class ConflictSet:
    """A connected group of mutually incompatible hypotheses."""

    members: tuple[str, ...]
    pooled_evidence: EvidenceSet
    reasons: dict[tuple[str, str], frozenset[ConflictReason]]
    level: Level

    def __post_init__(self) -> None:
        if len(self.members) < 2:
            raise ValueError("a conflict set needs at least two members")


@dataclass(frozen=True)
class ApproxJointResult:
    """The ordered-product joint estimate with its per-member pieces."""

    k: float
    ordering: tuple[str, ...]
    factors: tuple[float, ...]
    conditioning: tuple[EvidenceSet, ...]


@dataclass
class ConflictReport:
    conflict_set: ConflictSet
    ordering: tuple[str, ...]
    per_member_conditioning: tuple[EvidenceSet, ...]
    k: float
    measure: float
    decision: Decision
    skip_error_estimates: dict[str, float] = field(default_factory=dict)
    consistent_sets: list["ConsistentSet"] | None = None


@dataclass(frozen=True)
class ConsistentSet:
    """A maximal conflict-free subset with its normalized belief."""

    included: tuple[str, ...]
    weight: float
    normalized_belief: float


def _sharable(g: HypothesisGraph, hid: str) -> EvidenceSet:
    # Terrain is context, not an associable measurement: two forces over
    # the same ground are not in conflict for that reason alone.
    return EvidenceSet.from_iterable(
        i
        for i in g.evidence_closure(hid)
        if g.item(i).kind is not EvidenceKind.TERRAIN
    )


def detect_conflicts(
    g: HypothesisGraph,
    lib: ModelLibrary,
    level: Level | None = None,
) -> list[ConflictSet]:
    """Connected components of the per-level conflict graph.

    An edge joins two active same-level hypotheses when their closures
    share a non-terrain item, or doctrine flags them (closer than the
    type pair's minimum separation, or heading difference over the type
    pair's maximum).
    """
    out: list[ConflictSet] = []
    for lvl in LEVELS if level is None else (level,):
        ids = sorted(g.at_level(lvl, statuses={Status.ACTIVE}))
        if len(ids) < 2:
            continue
        sharable = {i: _sharable(g, i) for i in ids}
        edges: dict[tuple[str, str], frozenset[ConflictReason]] = {}
        parent = {i: i for i in ids}

        def find(x: str) -> str:
            while parent[x] != x:
                parent[x] = parent[parent[x]]
                x = parent[x]
            return x

        for ai in range(len(ids)):
            for bi in range(ai + 1, len(ids)):
                a, b = ids[ai], ids[bi]
                ha, hb = g.get(a), g.get(b)
                reasons = set()
                if sharable[a] & sharable[b]:
                    reasons.add(ConflictReason.SHARED_EVIDENCE)
                sep = lib.min_separation(ha.force_type, hb.force_type)
                if sep is not None and distance(ha.location, hb.location) < sep:
                    reasons.add(ConflictReason.TOO_CLOSE)
                if ha.heading is not None and hb.heading is not None:
                    max_delta = lib.max_heading_delta(ha.force_type, hb.force_type)
                    if (
                        max_delta is not None
                        and heading_difference(ha.heading, hb.heading) > max_delta
                    ):
                        reasons.add(ConflictReason.ORIENTATION)
                if reasons:
                    edges[(a, b)] = frozenset(reasons)
                    parent[find(a)] = find(b)

        groups: dict[str, list[str]] = {}
        for i in ids:
            groups.setdefault(find(i), []).append(i)
        for root in sorted(groups):
            members = sorted(groups[root])
            if len(members) < 2:
                continue
            pooled = EMPTY_SET
            for m in members:
                pooled = pooled | g.evidence_closure(m)
            member_set = set(members)
            group_edges = {
                pair: rs
                for pair, rs in edges.items()
                if pair[0] in member_set and pair[1] in member_set
            }
            out.append(
                ConflictSet(
                    members=tuple(members),
                    pooled_evidence=pooled,
                    reasons=group_edges,
                    level=lvl,
                )
            )
    return out


def order_hypotheses(
    s: ConflictSet, g: HypothesisGraph, heuristic: Heuristic
) -> tuple[str, ...]:
    """Ascending heuristic order, ties by id: the strongest member sits
    last, so the product conditions it on the fullest evidence set."""
    if heuristic is Heuristic.MOST_MATCHES:
        score = lambda hid: float(len(g.evidence_closure(hid)))
    elif heuristic is Heuristic.HIGHEST_PRIOR:
        score = lambda hid: g.get(hid).prior
    else:
        score = lambda hid: g.get(hid).posterior
    return tuple(sorted(s.members, key=lambda hid: (score(hid), hid)))


def approx_joint(
    s: ConflictSet,
    ordering: tuple[str, ...],
    g: HypothesisGraph,
    calibration: FitCalibration = DEFAULT_CALIBRATION,
) -> ApproxJointResult:
    """k = product over members of P(member | pooled minus later closures).

    Building the n-1 difference sets is polynomial in members and
    evidence.  A member whose conditioning set retains nothing of its
    closure contributes its prior.  The factor product runs in
    id-canonical member order, so with pairwise-disjoint closures every
    ordering yields the identical k, bit for bit.
    """
    if sorted(ordering) != sorted(s.members):
        raise ValueError("ordering must be a permutation of the conflict members")
    closures = {m: g.evidence_closure(m) for m in s.members}
    factors: list[float] = []
    conditioning: list[EvidenceSet] = []
    for i, m in enumerate(ordering):
        cond = s.pooled_evidence
        for later in ordering[i + 1 :]:
            cond = cond - closures[later]
        conditioning.append(cond)
        keep = cond & closures[m]
        if not keep:
            factors.append(g.get(m).prior)
        else:
            factors.append(posterior_given_subset(g, m, keep, calibration))

    k = 1.0
    for _, f in sorted(zip(ordering, factors)):
        k *= f
    return ApproxJointResult(
        k=k,
        ordering=tuple(ordering),
        factors=tuple(factors),
        conditioning=tuple(conditioning),
    )


def conflict_measure(k: float) -> float:
    """(1-k)/k; zero at k=1, infinite (forcing resolution) at k=0."""
    if not (0.0 <= k <= 1.0):
        raise ValueError(f"k outside [0,1]: {k!r}")
    if k == 0.0:
        return math.inf
    return (1.0 - k) / k


def skip_error_estimate(
    g: HypothesisGraph,
    parent_id: str,
    k: float,
    calibration: FitCalibration = DEFAULT_CALIBRATION,
) -> float:
    """Bound on the parent-posterior error from skipping the conflicted
    level: P(H | evidence) * (1-k)/k, with P(H | evidence) taken from
    the direct path (evidence flows straight to the parent)."""
    del calibration  # the direct path needs no fit calibration
    if k == 0.0:
        return math.inf
    p_he = direct_posterior(g, parent_id)
    return p_he * (1.0 - k) / k


def resolve_exact(
    s: ConflictSet, g: HypothesisGraph, max_exact: int = 20
) -> list[ConsistentSet]:
    """Enumerate maximal consistent subsets and distribute belief.

    Maximal independent sets of the conflict graph are found by pivoted
    Bron-Kerbosch on the complement.  Each set S weighs
    prod_{m in S} P(m) * prod_{m not in S} (1 - P(m)) with P taken from
    stored posteriors; beliefs are the normalized weights.  Worst-case
    exponential, hence the member cap.
    """
    n = len(s.members)
    if n > max_exact:
        raise ResolutionTooLargeError(
            f"resolution too large: {n} members exceeds cap {max_exact}"
        )
    idx = {m: i for i, m in enumerate(s.members)}
    adj = [0] * n
    for (a, b) in s.reasons:
        adj[idx[a]] |= 1 << idx[b]
        adj[idx[b]] |= 1 << idx[a]
    full = (1 << n) - 1
    comp = [(full ^ adj[v]) & ~(1 << v) for v in range(n)]

    cliques: list[int] = []

    def expand(r: int, p: int, x: int) -> None:
        if p == 0 and x == 0:
            cliques.append(r)
            return
        pivot = (p | x).bit_length() - 1
        candidates = p & ~comp[pivot]
        while candidates:
            v = candidates & -candidates
            vi = v.bit_length() - 1
            expand(r | v, p & comp[vi], x & comp[vi])
            p &= ~v
            x |= v
            candidates &= ~v

    expand(0, full, 0)

    posteriors = [g.get(m).posterior for m in s.members]
    raw: list[tuple[tuple[str, ...], float]] = []
    for mask in cliques:
        w = 1.0
        for i in range(n):
            w *= posteriors[i] if (mask >> i) & 1 else 1.0 - posteriors[i]
        included = tuple(s.members[i] for i in range(n) if (mask >> i) & 1)
        raw.append((included, w))

    total = math.fsum(w for _, w in raw)
    if total == 0.0:
        warnings.warn(
            "all consistent-set weights are zero; distributing belief uniformly",
            stacklevel=2,
        )
        beliefs = [1.0 / len(raw)] * len(raw)
    else:
        beliefs = [w / total for _, w in raw]

    sets = [
        ConsistentSet(included=inc, weight=w, normalized_belief=b)
        for (inc, w), b in zip(raw, beliefs)
    ]
    sets.sort(key=lambda cs: (-cs.normalized_belief, cs.included))
    return sets


def decide(
    s: ConflictSet,
    g: HypothesisGraph,
    tau: float,
    heuristic: Heuristic = Heuristic.HIGHEST_POSTERIOR,
    exclusion_floor: float = 0.05,
    max_exact: int = 20,
    calibration: FitCalibration = DEFAULT_CALIBRATION,
) -> ConflictReport:
    """Skip when the conflict measure is under tau, else resolve exactly.

    Skipping marks members for level-jumping accrual and estimates the
    resulting parent errors for every parent already in the graph.
    Resolution redistributes member posteriors over maximal consistent
    sets and excludes members falling under the floor.
    """
    if not (tau > 0.0):
        raise ValueError(f"tau must be positive, got {tau!r}")
    if math.isinf(tau):
        warnings.warn(
            "tau is infinite: every conflict with k > 0 will be skipped",
            DegenerateThresholdWarning,
            stacklevel=2,
        )
    ordering = order_hypotheses(s, g, heuristic)
    aj = approx_joint(s, ordering, g, calibration)
    measure = conflict_measure(aj.k)
    decision = Decision.SKIP if measure < tau else Decision.RESOLVE
    if decision is Decision.RESOLVE and len(s.members) > max_exact:
        # resolution refused at this size: fall back to skipping, with
        # the (large) measure left on record
        warnings.warn(
            f"resolution too large ({len(s.members)} members > {max_exact}); "
            "skipping the conflict instead",
            stacklevel=2,
        )
        decision = Decision.SKIP
    report = ConflictReport(
        conflict_set=s,
        ordering=ordering,
        per_member_conditioning=aj.conditioning,
        k=aj.k,
        measure=measure,
        decision=decision,
    )
    if decision is Decision.SKIP:
        for m in s.members:
            g.get(m).status = Status.SKIPPED
        parents = sorted({p for m in s.members for p in g.parents_of(m)})
        for p in parents:
            report.skip_error_estimates[p] = skip_error_estimate(
                g, p, aj.k, calibration
            )
    else:
        sets = resolve_exact(s, g, max_exact=max_exact)
        report.consistent_sets = sets
        for m in s.members:
            belief = math.fsum(
                cs.normalized_belief for cs in sets if m in cs.included
            )
            h = g.get(m)
            h.posterior = belief
            if belief < exclusion_floor:
                h.status = Status.EXCLUDED
    return report
