"""Hierarchical belief accrual.

A parent force's posterior combines, per component: belief given that
component's evidence, belief given its terrain, their joint, and the
priors, times a formation-fit ratio.  The rule is a ratio product:

    raw = (fit_num / fit_den)
          * prod_i [ p_ce_i * p_ct_i / p_cet_i * p_h / p_c_i**2 ]

computed exactly as written, never normalized: raw > 1 on legal inputs
is reported via ``out_of_range`` because it signals that the
independence assumptions behind the rule are violated by the data.
Every factor is recorded in a trace so any reported posterior can be
recomputed from the report alone.

Restricted evaluation (``posterior_given_subset``) recomputes any
hypothesis bottom-up using only a subset of its evidence closure; the
conflict analysis relies on it.  Restriction removes information, so an
absent fit item neutralizes the fit ratio rather than disconfirming.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

from echelon.evidence import (
    EvidenceKind,
    EvidenceSet,
    from_odds,
    odds,
    posterior_from_evidence,
)
from echelon.exceptions import (
    AccrualDomainError,
    EvidenceResolutionError,
    SubsetError,
)
from echelon.hypotheses import HypothesisGraph, Status
from echelon.models import Level

# Products over more components than this run in log space.
_LOG_SPACE_THRESHOLD = 30


@dataclass(frozen=True)
class ComponentBelief:
    """Per-component inputs: P(C|e), P(C|t), P(C|e,t), P(C)."""

    p_ce: float
    p_ct: float
    p_cet: float
    p_c: float


@dataclass(frozen=True)
class AccrualInputs:
    """Validated inputs of the parent update rule."""

    fit_num: float
    fit_den: float
    per_component: tuple[ComponentBelief, ...]
    p_h: float

    def __post_init__(self) -> None:
        for name, val in (
            ("fit_num", self.fit_num),
            ("fit_den", self.fit_den),
            ("p_h", self.p_h),
        ):
            if not (0.0 <= val <= 1.0):
                raise ValueError(f"{name} outside [0,1]: {val!r}")
        if self.fit_den == 0.0:
            raise AccrualDomainError("fit_den is zero")
        for i, cb in enumerate(self.per_component):
            for name, val in (
                ("p_ce", cb.p_ce),
                ("p_ct", cb.p_ct),
                ("p_cet", cb.p_cet),
                ("p_c", cb.p_c),
            ):
                if not (0.0 <= val <= 1.0):
                    raise ValueError(f"component {i}: {name} outside [0,1]: {val!r}")
            if cb.p_cet == 0.0:
                raise AccrualDomainError(f"component {i}: p_cet is zero")
            if cb.p_c == 0.0:
                raise AccrualDomainError(f"component {i}: p_c is zero")


@dataclass(frozen=True)
class TraceEntry:
    symbol: str
    value: float
    component: int | None = None
    kind: str = "input"  # input | factor | result


@dataclass(frozen=True)
class AccrualResult:
    """Unclamped rule value, clamped posterior, and the full trace.

    The product of the ``factor`` trace entries reproduces ``raw``.
    ``direct`` marks level-skipping odds accrual, where the trace holds
    likelihood ratios instead of rule factors.
    """

    raw: float
    posterior: float
    out_of_range: bool
    trace: tuple[TraceEntry, ...]
    direct: bool = False

    def factors(self) -> list[float]:
        return [e.value for e in self.trace if e.kind == "factor"]


def accrue_parent(inputs: AccrualInputs) -> AccrualResult:
    """Run the ratio-product rule exactly as written.

    Per-component factors group as (p_ce*p_ct*p_h) / (p_cet*(p_c*p_c)),
    so all-equal inputs cancel to exactly 1.0 in float arithmetic.
    """
    fit_ratio = inputs.fit_num / inputs.fit_den
    trace: list[TraceEntry] = [
        TraceEntry("P(f|H,C)", inputs.fit_num),
        TraceEntry("P(f|e,t)", inputs.fit_den),
        TraceEntry("P(H)", inputs.p_h),
        TraceEntry("fit_ratio", fit_ratio, kind="factor"),
    ]
    brackets: list[float] = []
    for i, cb in enumerate(inputs.per_component):
        num = cb.p_ce * cb.p_ct * inputs.p_h
        den = cb.p_cet * (cb.p_c * cb.p_c)
        bracket = num / den
        brackets.append(bracket)
        trace.extend(
            [
                TraceEntry("P(C|e)", cb.p_ce, i),
                TraceEntry("P(C|t)", cb.p_ct, i),
                TraceEntry("P(C|e,t)", cb.p_cet, i),
                TraceEntry("P(C)", cb.p_c, i),
                TraceEntry("component_ratio", bracket, i, kind="factor"),
            ]
        )

    if len(brackets) > _LOG_SPACE_THRESHOLD:
        if fit_ratio == 0.0 or any(b == 0.0 for b in brackets):
            raw = 0.0
        else:
            raw = math.exp(
                math.log(fit_ratio) + math.fsum(math.log(b) for b in brackets)
            )
    else:
        raw = fit_ratio
        for b in brackets:
            raw *= b

    trace.append(TraceEntry("raw", raw, kind="result"))
    return AccrualResult(
        raw=raw,
        posterior=min(raw, 1.0),
        out_of_range=raw > 1.0,
        trace=tuple(trace),
    )


def _default_fit_num(fit_score: float) -> float:
    return 0.5 + 0.5 * fit_score


def _default_fit_den(fit_score: float) -> float:
    return 0.5


@dataclass(frozen=True)
class FitCalibration:
    """Maps a geometric fit score onto the rule's fit probabilities.

    Defaults: num = 0.5 + 0.5*score, den = 0.5.  Override
    programmatically to recalibrate how strongly formation fit counts.
    """

    num: Callable[[float], float] = _default_fit_num
    den: Callable[[float], float] = _default_fit_den


DEFAULT_CALIBRATION = FitCalibration()


def _combined_et(p_ce: float, p_ct: float, p_c: float) -> float:
    """Joint of evidence- and terrain-conditioned beliefs, by odds.

    When either side is 0 the component factor is already annihilated
    (zero numerator), so 1.0 is returned purely to keep the inputs
    valid.
    """
    if p_ce == 0.0 or p_ct == 0.0:
        return 1.0
    if p_ce == 1.0 or p_ct == 1.0:
        return 1.0
    return from_odds(odds(p_ce) * odds(p_ct) / odds(p_c))


def direct_posterior(
    g: HypothesisGraph, hid: str, keep: EvidenceSet | None = None
) -> float:
    """Accrue every retained closure item straight onto the force prior.

    This is the level-skipping path: component structure is ignored and
    each item's likelihood ratio acts directly on the hypothesis.
    """
    h = g.get(hid)
    ids = [i for i in g.evidence_closure(hid) if keep is None or i in keep]
    return posterior_from_evidence(h.prior, [g.item(i) for i in ids])


def _direct_result(
    g: HypothesisGraph, hid: str, keep: EvidenceSet | None
) -> AccrualResult:
    h = g.get(hid)
    ids = [i for i in g.evidence_closure(hid) if keep is None or i in keep]
    post = posterior_from_evidence(h.prior, [g.item(i) for i in ids])
    trace = [TraceEntry("prior", h.prior)]
    trace.extend(
        TraceEntry(f"lambda[{i}]", g.item(i).likelihood_ratio, kind="odds_factor")
        for i in ids
    )
    trace.append(TraceEntry("posterior", post, kind="result"))
    return AccrualResult(
        raw=post, posterior=post, out_of_range=False, trace=tuple(trace), direct=True
    )


def _evaluate(
    g: HypothesisGraph,
    hid: str,
    keep: EvidenceSet | None,
    calibration: FitCalibration,
) -> tuple[float, AccrualResult | None]:
    h = g.get(hid)
    if h.is_leaf():
        items = [
            g.item(i)
            for i in h.own_evidence
            if (keep is None or i in keep)
            and g.item(i).kind is not EvidenceKind.TERRAIN
        ]
        return posterior_from_evidence(h.prior, items), None

    if any(g.get(cid).status is Status.SKIPPED for cid in h.components):
        result = _direct_result(g, hid, keep)
        return result.posterior, result

    per_component = []
    for cid in h.components:
        c = g.get(cid)
        c_keep = keep if keep is None else keep & g.evidence_closure(cid)
        p_ce, _ = _evaluate(g, cid, c_keep, calibration)
        terrain = [
            g.item(i)
            for i in c.own_evidence
            if (keep is None or i in keep)
            and g.item(i).kind is EvidenceKind.TERRAIN
        ]
        p_ct = posterior_from_evidence(c.prior, terrain)
        per_component.append(
            ComponentBelief(
                p_ce=p_ce,
                p_ct=p_ct,
                p_cet=_combined_et(p_ce, p_ct, c.prior),
                p_c=c.prior,
            )
        )

    fit_num = fit_den = 1.0
    for item_id in h.own_evidence:
        item = g.item(item_id)
        if item.kind is not EvidenceKind.FIT:
            continue
        if keep is not None and item_id not in keep:
            continue  # restriction removes information, not injects it
        score = item.sensor_context.get("fit_score")
        if score is None:
            raise EvidenceResolutionError(
                f"fit item {item_id!r} lacks a fit_score in sensor_context"
            )
        fit_num *= calibration.num(float(score))
        fit_den *= calibration.den(float(score))

    result = accrue_parent(
        AccrualInputs(
            fit_num=fit_num,
            fit_den=fit_den,
            per_component=tuple(per_component),
            p_h=h.prior,
        )
    )
    return result.posterior, result


def posterior_given_subset(
    g: HypothesisGraph,
    hid: str,
    keep: EvidenceSet,
    calibration: FitCalibration = DEFAULT_CALIBRATION,
) -> float:
    """Recompute a posterior bottom-up using only the items in ``keep``.

    ``keep`` must be a subset of the hypothesis's evidence closure.
    Restricting to the full closure reproduces the stored posterior
    exactly (identical arithmetic path).
    """
    closure = g.evidence_closure(hid)
    if not keep.issubset(closure):
        extra = sorted(set(keep.items) - set(closure.items))
        raise SubsetError(f"{hid}: items {extra} are outside the evidence closure")
    post, _ = _evaluate(g, hid, keep, calibration)
    return post


def propagate_level(
    g: HypothesisGraph,
    level: Level,
    calibration: FitCalibration = DEFAULT_CALIBRATION,
) -> None:
    """Recompute and store posteriors for every hypothesis at a level.

    Levels must be propagated bottom-up; hypotheses whose components
    were skipped by conflict handling accrue via the direct path.
    """
    for hid in g.at_level(level):
        h = g.get(hid)
        post, result = _evaluate(g, hid, None, calibration)
        h.posterior = post
        h.accrual = result
