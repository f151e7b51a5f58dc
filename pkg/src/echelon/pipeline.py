"""Batch inference pipeline: scenario in, ranked interpretations out.

Leaf hypotheses are instantiated from detections, then each level is
processed bottom-up: match models over the children, accrue posteriors,
detect conflicts, and either skip them (marking members and estimating
the induced parent error at the next level) or resolve them exactly.
The report carries every hypothesis with its full accrual trace, so any
posterior can be recomputed from the report alone.  Output is
deterministic given the config and seed.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from echelon.accrual import DEFAULT_CALIBRATION, propagate_level
from echelon.conflict import (
    ConflictReport,
    Decision,
    Heuristic,
    decide,
    detect_conflicts,
    skip_error_estimate,
)
from echelon.evidence import EvidenceItem, EvidenceKind, EvidenceSet
from echelon.exceptions import ScenarioError
from echelon.geometry import distance
from echelon.hypotheses import Hypothesis, HypothesisGraph
from echelon.matching import MatchConfig, candidate_to_hypothesis, match_level
from echelon.models import LEVELS, Level, ModelLibrary, load_library
from echelon.scenario import SCHEMA_VERSION, dumps


@dataclass
class RunConfig:
    library: str
    scenario: str
    out: str | None = None
    matcher: MatchConfig = field(default_factory=MatchConfig)
    tau: float = 0.1
    heuristic: Heuristic = Heuristic.HIGHEST_POSTERIOR
    exclusion_floor: float = 0.05
    max_exact: int = 20
    leaf_prior: float = 0.5
    seed: int = 0

    @classmethod
    def from_file(cls, path: str | Path) -> "RunConfig":
        path = Path(path)
        doc = json.loads(path.read_text())
        return cls.from_dict(doc, base_dir=path.parent)

    @classmethod
    def from_dict(cls, doc: dict, base_dir: Path | None = None) -> "RunConfig":
        known = {
            "library",
            "scenario",
            "out",
            "matcher",
            "tau",
            "heuristic",
            "exclusion_floor",
            "max_exact",
            "leaf_prior",
            "seed",
        }
        unknown = set(doc) - known
        if unknown:
            raise ScenarioError(f"run config: unknown keys {sorted(unknown)}")

        def resolve(p: str | None) -> str | None:
            if p is None or base_dir is None:
                return p
            return str((base_dir / p).resolve()) if not Path(p).is_absolute() else p

        return cls(
            library=resolve(doc["library"]),
            scenario=resolve(doc["scenario"]),
            out=resolve(doc.get("out")),
            matcher=MatchConfig.from_dict(doc.get("matcher", {})),
            tau=float(doc.get("tau", 0.1)),
            heuristic=Heuristic(doc.get("heuristic", "highest_posterior")),
            exclusion_floor=float(doc.get("exclusion_floor", 0.05)),
            max_exact=int(doc.get("max_exact", 20)),
            leaf_prior=float(doc.get("leaf_prior", 0.5)),
            seed=int(doc.get("seed", 0)),
        )


def _terrain_items(scenario: dict) -> list[EvidenceItem]:
    items = []
    for i, t in enumerate(scenario.get("terrain", [])):
        items.append(
            EvidenceItem(
                id=str(t.get("id", f"t{i}")),
                kind=EvidenceKind.TERRAIN,
                likelihood_ratio=float(t["lambda"]),
                location=(float(t["x"]), float(t["y"])),
                sensor_context={"radius_m": float(t.get("radius_m", 1000.0))},
            )
        )
    return items


def _attached_terrain(
    terrain: list[EvidenceItem], location: tuple[float, float]
) -> list[str]:
    out = []
    for t in terrain:
        assert t.location is not None
        if distance(t.location, location) <= float(t.sensor_context["radius_m"]):
            out.append(t.id)
    return out


def build_graph(
    scenario: dict, lib: ModelLibrary, leaf_prior: float
) -> HypothesisGraph:
    """Create leaf hypotheses from the scenario's detections."""
    g = HypothesisGraph()
    terrain = _terrain_items(scenario)
    for t in terrain:
        g.add_evidence(t)
    for d in scenario.get("detections", []):
        lib.type_of(d["type"])  # unknown detection types are a domain error
        item = EvidenceItem(
            id=str(d["id"]),
            kind=EvidenceKind.DETECTION,
            likelihood_ratio=float(d["lambda"]),
            location=(float(d["x"]), float(d["y"])),
            heading=float(d["heading"]) if d.get("heading") is not None else None,
        )
        g.add_evidence(item)
        location = (float(d["x"]), float(d["y"]))
        own = [item.id] + _attached_terrain(terrain, location)
        g.insert(
            Hypothesis(
                id=f"v.{d['id']}",
                force_type=d["type"],
                level=Level.VEHICLE,
                location=location,
                time=float(d.get("time", 0.0)),
                own_evidence=EvidenceSet.from_iterable(own),
                prior=leaf_prior,
                posterior=leaf_prior,
                heading=float(d["heading"]) if d.get("heading") is not None else None,
            )
        )
    return g


def run(cfg: RunConfig) -> dict:
    """Execute the full pipeline and return the report document."""
    lib = load_library(Path(cfg.library).read_text())
    scenario = json.loads(Path(cfg.scenario).read_text())
    g = build_graph(scenario, lib, cfg.leaf_prior)
    calibration = cfg.matcher.calibration or DEFAULT_CALIBRATION

    terrain = [g.evidence[i] for i in sorted(g.evidence) if g.evidence[i].kind is EvidenceKind.TERRAIN]
    conflict_log: list[tuple[Level, ConflictReport]] = []

    for level in LEVELS:
        if level > Level.VEHICLE:
            candidates = match_level(g, lib, level, cfg.matcher)
            seen: set[tuple[str, tuple[str, ...]]] = set()
            for cand in candidates:
                key = (cand.model.name, cand.children())
                if key in seen:  # keep the best-fit assignment per component set
                    continue
                seen.add(key)
                h, fit_item = candidate_to_hypothesis(g, lib, cand, cfg.matcher)
                g.add_evidence(fit_item)
                own = [fit_item.id] + _attached_terrain(terrain, h.location)
                h.own_evidence = EvidenceSet.from_iterable(own)
                g.insert(h)

        propagate_level(g, level, calibration)

        # Parents of members skipped one level down now exist: estimate
        # the error their level-jumping accrual may carry.
        for lvl, report in conflict_log:
            if lvl == level - 1 and report.decision is Decision.SKIP:
                parents = sorted(
                    {
                        p
                        for m in report.conflict_set.members
                        for p in g.parents_of(m)
                    }
                )
                for p in parents:
                    report.skip_error_estimates[p] = skip_error_estimate(
                        g, p, report.k, calibration
                    )

        for s in detect_conflicts(g, lib, level):
            report = decide(
                s,
                g,
                cfg.tau,
                heuristic=cfg.heuristic,
                exclusion_floor=cfg.exclusion_floor,
                max_exact=cfg.max_exact,
                calibration=calibration,
            )
            conflict_log.append((level, report))

    return _build_report(cfg, scenario, g, conflict_log)


def _trace_records(h: Hypothesis) -> list[dict] | None:
    if h.accrual is None:
        return None
    return [
        {
            "symbol": e.symbol,
            "value": e.value,
            "component": e.component,
            "kind": e.kind,
        }
        for e in h.accrual.trace
    ]


def _build_report(
    cfg: RunConfig,
    scenario: dict,
    g: HypothesisGraph,
    conflict_log: list[tuple[Level, ConflictReport]],
) -> dict:
    levels: dict[str, list[dict]] = {}
    for level in LEVELS:
        entries = []
        for hid in g.at_level(level):
            h = g.get(hid)
            out_of_range = bool(h.accrual and h.accrual.out_of_range)
            entries.append(
                {
                    "id": h.id,
                    "type": h.force_type,
                    "model": h.model,
                    "x": h.location[0],
                    "y": h.location[1],
                    "heading": h.heading,
                    "time": h.time,
                    "prior": h.prior,
                    "posterior": h.posterior,
                    "status": h.status.value,
                    "out_of_range": out_of_range,
                    "components": list(h.components),
                    "own_evidence": list(h.own_evidence),
                    "direct_accrual": bool(h.accrual and h.accrual.direct),
                    "accrual_trace": _trace_records(h),
                }
            )
        # Ranked by posterior; out-of-range entries listed but demoted.
        entries.sort(key=lambda e: (e["out_of_range"], -e["posterior"], e["id"]))
        levels[level.label] = entries

    conflicts = []
    for level, rep in conflict_log:
        conflicts.append(
            {
                "level": level.label,
                "members": list(rep.conflict_set.members),
                "reasons": [
                    {"pair": list(pair), "reasons": sorted(r.value for r in rs)}
                    for pair, rs in sorted(rep.conflict_set.reasons.items())
                ],
                "ordering": list(rep.ordering),
                "per_member_conditioning": [
                    list(c) for c in rep.per_member_conditioning
                ],
                "k": rep.k,
                "measure": rep.measure,
                "decision": rep.decision.value,
                "skip_error_estimates": dict(sorted(rep.skip_error_estimates.items())),
                "consistent_sets": (
                    None
                    if rep.consistent_sets is None
                    else [
                        {
                            "members": list(cs.included),
                            "weight": cs.weight,
                            "belief": cs.normalized_belief,
                        }
                        for cs in rep.consistent_sets
                    ]
                ),
            }
        )

    return {
        "schema_version": SCHEMA_VERSION,
        "scenario_id": scenario.get("scenario_id"),
        "seed": cfg.seed,
        "config": {
            "tau": cfg.tau,
            "heuristic": cfg.heuristic.value,
            "exclusion_floor": cfg.exclusion_floor,
            "max_exact": cfg.max_exact,
            "leaf_prior": cfg.leaf_prior,
            "matcher": {
                "gather_radius": cfg.matcher.gather_radius,
                "min_fit": cfg.matcher.min_fit,
                "max_missing": cfg.matcher.max_missing,
                "max_cluster": cfg.matcher.max_cluster,
                "rho": cfg.matcher.rho,
                "slack": cfg.matcher.slack,
                "lambda_max": cfg.matcher.lambda_max,
            },
        },
        "levels": levels,
        "conflicts": conflicts,
    }


def write_report(report: dict, out_path: str | Path) -> None:
    Path(out_path).write_text(dumps(report))
