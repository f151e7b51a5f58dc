"""Synthetic ground truth and imperfect-sensor simulation.

A ground-truth document places force instances as trees whose leaves
are vehicles with explicit coordinates; placements are validated
against the instantiated models' deployment constraints.  The noise
channel drops vehicles, jitters surviving locations, misclassifies
types by a row-stochastic confusion matrix, and sprinkles false
alarms: the classic detector pathologies.  Generation is deterministic given
the seed, byte for byte.

The detection confidence model is a synthetic stand-in (leaf sensor
modeling is out of scope): a correctly classified detection carries
lambda_hit, a misclassified one carries lambda_hit scaled by the
confusion row's odds of the observed label.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field

import numpy as np

from echelon.exceptions import ScenarioError
from echelon.geometry import centroid, distance
from echelon.models import Level, ModelLibrary, subsumes

SCHEMA_VERSION = 1


@dataclass(frozen=True)
class GroundTruthNode:
    """A force instance: either a vehicle leaf or a model over children."""

    model: str | None = None
    vehicle_type: str | None = None
    x: float | None = None
    y: float | None = None
    heading: float | None = None
    children: tuple["GroundTruthNode", ...] = ()

    def is_vehicle(self) -> bool:
        return self.model is None


@dataclass(frozen=True)
class GroundTruth:
    forces: tuple[GroundTruthNode, ...]
    area: tuple[float, float]
    terrain: tuple[dict, ...] = ()
    scenario_id: str = "scenario"


@dataclass(frozen=True)
class NoiseSpec:
    """Sensor imperfection channel; see module docstring."""

    p_detect: float = 1.0
    false_alarm_density: float = 0.0  # per km^2
    misclassification: dict[str, dict[str, float]] = field(default_factory=dict)
    location_jitter: float = 0.0  # std, meters
    seed: int = 0
    lambda_hit: float = 6.0
    false_alarm_types: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        if not (0.0 <= self.p_detect <= 1.0):
            raise ScenarioError("p_detect outside [0,1]")
        if self.false_alarm_density < 0 or self.location_jitter < 0:
            raise ScenarioError("negative noise magnitude")
        for row_type, row in self.misclassification.items():
            total = math.fsum(row.values())
            if abs(total - 1.0) > 1e-9:
                raise ScenarioError(
                    f"misclassification row {row_type!r} sums to {total}, not 1"
                )
            if any(p < 0 for p in row.values()):
                raise ScenarioError(f"negative entry in row {row_type!r}")


def load_ground_truth(doc: dict, lib: ModelLibrary | None = None) -> GroundTruth:
    """Parse (and, when a library is given, validate) a ground-truth doc."""
    area = doc.get("area", {})
    gt = GroundTruth(
        forces=tuple(_parse_node(f) for f in doc.get("forces", [])),
        area=(float(area.get("width_m", 10000.0)), float(area.get("height_m", 10000.0))),
        terrain=tuple(doc.get("terrain", [])),
        scenario_id=str(doc.get("id", "scenario")),
    )
    if lib is not None:
        for force in gt.forces:
            _validate_node(force, lib)
    return gt


def load_noise_spec(doc: dict) -> NoiseSpec:
    known = {
        "p_detect",
        "false_alarm_density",
        "misclassification",
        "location_jitter",
        "seed",
        "lambda_hit",
        "false_alarm_types",
    }
    unknown = set(doc) - known
    if unknown:
        raise ScenarioError(f"noise spec: unknown keys {sorted(unknown)}")
    doc = dict(doc)
    if "false_alarm_types" in doc:
        doc["false_alarm_types"] = tuple(doc["false_alarm_types"])
    return NoiseSpec(**doc)


def _parse_node(raw: dict) -> GroundTruthNode:
    if "type" in raw:
        return GroundTruthNode(
            vehicle_type=raw["type"],
            x=float(raw["x"]),
            y=float(raw["y"]),
            heading=float(raw["heading"]) if "heading" in raw else None,
        )
    if "model" not in raw:
        raise ScenarioError(f"force node needs 'model' or 'type': {raw!r}")
    return GroundTruthNode(
        model=raw["model"],
        children=tuple(_parse_node(c) for c in raw.get("components", [])),
    )


def node_location(node: GroundTruthNode) -> tuple[float, float]:
    if node.is_vehicle():
        assert node.x is not None and node.y is not None
        return (node.x, node.y)
    return centroid([node_location(c) for c in node.children])


def _node_type(node: GroundTruthNode, lib: ModelLibrary) -> str:
    if node.is_vehicle():
        assert node.vehicle_type is not None
        return node.vehicle_type
    return lib.models[node.model].models_type


def _validate_node(node: GroundTruthNode, lib: ModelLibrary) -> None:
    if node.is_vehicle():
        lib.type_of(node.vehicle_type or "")
        return
    if node.model not in lib.models:
        raise ScenarioError(f"unknown model {node.model!r} in ground truth")
    model = lib.models[node.model]
    # First-fit slot assignment in listed child order, then a strict
    # (no-slack) check of every deployment constraint.
    assigned: dict[int, list[GroundTruthNode]] = {i: [] for i in range(len(model.slots))}
    for child in node.children:
        child_type = _node_type(child, lib)
        for i, slot in enumerate(model.slots):
            if len(assigned[i]) < slot.count_max and subsumes(
                slot.required_type, child_type, lib
            ):
                assigned[i].append(child)
                break
        else:
            raise ScenarioError(
                f"ground truth node {node.model!r}: child of type "
                f"{child_type!r} fits no slot"
            )
    for i, slot in enumerate(model.slots):
        if len(assigned[i]) < slot.count_min:
            raise ScenarioError(
                f"ground truth node {node.model!r}: slot {i} underfilled"
            )
    for c in model.constraints:
        if c.slot_a == c.slot_b:
            pairs = list(itertools.combinations(assigned[c.slot_a], 2))
        else:
            pairs = [(u, v) for u in assigned[c.slot_a] for v in assigned[c.slot_b]]
        for u, v in pairs:
            d = distance(node_location(u), node_location(v))
            if not (c.distance_min <= d <= c.distance_max):
                raise ScenarioError(
                    f"ground truth node {node.model!r}: pair distance {d:.1f} "
                    f"outside [{c.distance_min}, {c.distance_max}]"
                )
    for child in node.children:
        _validate_node(child, lib)


def _draw_from_row(rng: np.random.Generator, row: dict[str, float]) -> str:
    u = rng.random()
    acc = 0.0
    keys = sorted(row)
    for key in keys:
        acc += row[key]
        if u < acc:
            return key
    return keys[-1]


def generate(gt: GroundTruth, noise: NoiseSpec, lib: ModelLibrary | None = None) -> dict:
    """Run the noise channel over the ground truth; returns the scenario
    document with its ground-truth sidecar for scoring."""
    rng = np.random.default_rng(noise.seed)

    vehicles: list[GroundTruthNode] = []
    units: list[dict] = []

    def walk(node: GroundTruthNode) -> None:
        if node.is_vehicle():
            vehicles.append(node)
            return
        loc = node_location(node)
        level = (
            lib.type_of(lib.models[node.model].models_type).level.label
            if lib is not None and node.model in lib.models
            else None
        )
        units.append(
            {
                "id": f"g{len(units)}",
                "model": node.model,
                "type": (
                    lib.models[node.model].models_type if lib is not None else None
                ),
                "level": level,
                "x": loc[0],
                "y": loc[1],
            }
        )
        for child in node.children:
            walk(child)

    for force in gt.forces:
        walk(force)

    detections: list[dict] = []
    vehicle_records: list[dict] = []
    for vi, v in enumerate(vehicles):
        assert v.vehicle_type is not None and v.x is not None and v.y is not None
        detected = rng.random() < noise.p_detect
        record = {
            "id": f"gv{vi}",
            "type": v.vehicle_type,
            "x": v.x,
            "y": v.y,
            "heading": v.heading,
            "detected": detected,
            "observed_as": None,
            "detection_id": None,
        }
        if detected:
            row = noise.misclassification.get(v.vehicle_type, {v.vehicle_type: 1.0})
            observed = _draw_from_row(rng, row)
            x, y = v.x, v.y
            if noise.location_jitter > 0.0:
                x += rng.normal(0.0, noise.location_jitter)
                y += rng.normal(0.0, noise.location_jitter)
            if observed == v.vehicle_type:
                lam = noise.lambda_hit
            else:
                p_correct = row.get(v.vehicle_type, 0.0)
                p_observed = row.get(observed, 0.0)
                lam = (
                    max(noise.lambda_hit * p_observed / p_correct, 0.05)
                    if p_correct > 0.0
                    else 1.0
                )
            det_id = f"d{len(detections)}"
            detections.append(
                {
                    "id": det_id,
                    "type": observed,
                    "x": x,
                    "y": y,
                    "heading": v.heading,
                    "lambda": lam,
                    "time": 0.0,
                }
            )
            record["observed_as"] = observed
            record["detection_id"] = det_id
        vehicle_records.append(record)

    fa_types = noise.false_alarm_types or tuple(
        sorted({v.vehicle_type for v in vehicles if v.vehicle_type})
    )
    area_km2 = gt.area[0] * gt.area[1] / 1e6
    n_fa = int(rng.poisson(noise.false_alarm_density * area_km2)) if fa_types else 0
    for _ in range(n_fa):
        detections.append(
            {
                "id": f"d{len(detections)}",
                "type": fa_types[int(rng.integers(len(fa_types)))],
                "x": float(rng.uniform(0.0, gt.area[0])),
                "y": float(rng.uniform(0.0, gt.area[1])),
                "heading": float(rng.uniform(0.0, 360.0)),
                "lambda": noise.lambda_hit,
                "time": 0.0,
            }
        )

    return {
        "schema_version": SCHEMA_VERSION,
        "scenario_id": gt.scenario_id,
        "detections": detections,
        "terrain": list(gt.terrain),
        "ground_truth": {
            "units": units,
            "vehicles": vehicle_records,
            "seed": noise.seed,
        },
    }


def dumps(doc: dict) -> str:
    """Canonical serialization: the byte-determinism contract."""
    return json.dumps(doc, sort_keys=True, indent=2) + "\n"


def score(
    report: dict,
    scenario: dict,
    match_radius: float | None = None,
    lib: ModelLibrary | None = None,
) -> dict:
    """Precision/recall of reported hypotheses against ground truth.

    A hypothesis matches an unmatched ground-truth unit of the same
    force type within ``match_radius``; matching is greedy in
    descending posterior.  Skipped and excluded hypotheses do not
    count as assertions.  The radius defaults to half the library's
    smallest doctrine separation when a library is given.
    """
    if match_radius is None:
        if lib is None or not lib.doctrine.min_separation:
            raise ScenarioError(
                "match_radius required (no doctrine separations to default from)"
            )
        match_radius = min(lib.doctrine.min_separation.values()) / 2.0
    if report.get("scenario_id") != scenario.get("scenario_id"):
        raise ScenarioError(
            f"report is for {report.get('scenario_id')!r}, "
            f"scenario is {scenario.get('scenario_id')!r}"
        )
    gt = scenario.get("ground_truth")
    if gt is None:
        raise ScenarioError("scenario has no ground_truth sidecar")

    truth_by_level: dict[str, list[dict]] = {}
    for u in gt["units"]:
        truth_by_level.setdefault(u["level"], []).append(u)
    for v in gt["vehicles"]:
        truth_by_level.setdefault(Level.VEHICLE.label, []).append(
            {"id": v["id"], "type": v["type"], "x": v["x"], "y": v["y"]}
        )

    levels_out: dict[str, dict] = {}
    matched_hyp_to_unit: dict[str, str] = {}
    for level_label, entries in report.get("levels", {}).items():
        asserting = [
            e for e in entries if e["status"] in ("active", "confirmed")
        ]
        truth = list(truth_by_level.get(level_label, []))
        taken: set[str] = set()
        matched = 0
        for e in sorted(asserting, key=lambda e: (-e["posterior"], e["id"])):
            best = None
            for u in truth:
                if u["id"] in taken or u["type"] != e["type"]:
                    continue
                d = distance((e["x"], e["y"]), (u["x"], u["y"]))
                if d <= match_radius and (best is None or d < best[0]):
                    best = (d, u)
            if best is not None:
                taken.add(best[1]["id"])
                matched_hyp_to_unit[e["id"]] = best[1]["id"]
                matched += 1
        levels_out[level_label] = {
            "hypotheses": len(asserting),
            "truth_units": len(truth),
            "matched": matched,
            "precision": matched / len(asserting) if asserting else 1.0,
            "recall": matched / len(truth) if truth else 1.0,
        }

    ranks: list[int] = []
    skip_count = 0
    estimates: dict[str, float] = {}
    for c in report.get("conflicts", []):
        if c["decision"] == "skip":
            skip_count += 1
            estimates.update(c.get("skip_error_estimates", {}))
        members = c["members"]
        posts = {e["id"]: e["posterior"] for lvl in report["levels"].values() for e in lvl}
        ordered = sorted(members, key=lambda m: (-posts.get(m, 0.0), m))
        for rank, m in enumerate(ordered, start=1):
            if m in matched_hyp_to_unit:
                ranks.append(rank)
                break

    return {
        "levels": levels_out,
        "true_hypothesis_ranks": ranks,
        "skips": {"count": skip_count, "estimates": estimates},
    }
