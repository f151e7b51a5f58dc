"""Ground-truth engine: exact inference on small explicit joint
distributions.

Networks here are binary Bayesian networks built to honor the engine's
independence assumptions, so every approximation in the package can be
measured against exact conditionals computed by full state enumeration.
Variable roles follow a naming convention: "H" is the parent-force
variable, "C*" are components, "e*" detection evidence, "t*" terrain
evidence, and "f" formation fit.  Part-of links are deterministic:
P(C=1 | H=1) = 1 in every table row where H is true.

Enumeration sums use math.fsum (exactly rounded), and the joint table
is filled with a fixed multiplication order, so recorded values are
bit-stable across runs, platforms, and kernel backends.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Any, Iterable, Mapping, Sequence

import numpy as np

from echelon import kernels
from echelon.accrual import AccrualInputs, ComponentBelief, accrue_parent
from echelon.exceptions import OracleStructureError, ZeroProbabilityEvent

MAX_VARIABLES = 20
IDENTITY_TOL = 1e-12


@dataclass
class OracleNetwork:
    """An explicit joint distribution over binary variables.

    ``tables[v]`` stores P(v=1 | parent row) indexed by the packed
    parent state: parent j of v (in ``parents[v]`` order) contributes
    bit j of the row index.
    """

    variables: tuple[str, ...]
    parents: dict[str, tuple[str, ...]]
    tables: dict[str, np.ndarray]
    name: str = "network"
    _joint: np.ndarray | None = field(default=None, repr=False)
    _states: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self) -> None:
        n = len(self.variables)
        if n == 0:
            raise OracleStructureError("network has no variables")
        if n > MAX_VARIABLES:
            raise OracleStructureError(
                f"{n} variables exceeds the enumeration cap of {MAX_VARIABLES}"
            )
        index = {v: i for i, v in enumerate(self.variables)}
        if len(index) != n:
            raise OracleStructureError("duplicate variable names")
        for v in self.variables:
            ps = self.parents.setdefault(v, ())
            for p in ps:
                if p not in index:
                    raise OracleStructureError(f"{v}: unknown parent {p!r}")
            table = np.asarray(self.tables[v], dtype=np.float64)
            if table.shape != (1 << len(ps),):
                raise OracleStructureError(
                    f"{v}: table needs {1 << len(ps)} rows, got {table.shape}"
                )
            if np.any(table < 0.0) or np.any(table > 1.0):
                raise OracleStructureError(f"{v}: table entries outside [0,1]")
            self.tables[v] = table
        self._index = index

    # -- enumeration ---------------------------------------------------

    def joint(self) -> np.ndarray:
        """Probability of every one of the 2**n states (cached)."""
        if self._joint is None:
            n = len(self.variables)
            offsets = [0]
            flat: list[int] = []
            table_offsets = []
            p_flat: list[float] = []
            for v in self.variables:
                flat.extend(self._index[p] for p in self.parents[v])
                offsets.append(len(flat))
                table_offsets.append(len(p_flat))
                p_flat.extend(self.tables[v])
            self._joint = kernels.fill_joint(
                n,
                np.array(offsets, dtype=np.int32),
                np.array(flat, dtype=np.int32),
                np.array(table_offsets, dtype=np.int32),
                np.array(p_flat, dtype=np.float64),
            )
            self._states = np.arange(1 << n, dtype=np.int64)
        return self._joint

    def _mask(self, assignment: Mapping[str, int]) -> np.ndarray:
        self.joint()
        assert self._states is not None
        mask = np.ones(self._states.shape, dtype=bool)
        for var, val in assignment.items():
            if var not in self._index:
                raise OracleStructureError(f"unknown variable {var!r}")
            if val not in (0, 1):
                raise OracleStructureError(f"{var}: binary value expected, got {val!r}")
            mask &= ((self._states >> self._index[var]) & 1) == val
        return mask

    def event_prob(self, assignment: Mapping[str, int]) -> float:
        """P(assignment) by exactly-rounded summation over states."""
        return math.fsum(self.joint()[self._mask(assignment)].tolist())

    def exact_conditional(
        self, query: Mapping[str, int], given: Mapping[str, int]
    ) -> float:
        """P(query | given), exact up to float rounding.

        Contradictory overlap between query and given yields 0; a
        zero-probability conditioning event raises.
        """
        denom = self.event_prob(given)
        if denom == 0.0:
            raise ZeroProbabilityEvent(f"P{dict(given)!r} = 0")
        merged = dict(given)
        for var, val in query.items():
            if var in merged and merged[var] != val:
                return 0.0
            merged[var] = val
        return self.event_prob(merged) / denom

    # -- roles ---------------------------------------------------------

    def role_vars(self, prefix: str) -> list[str]:
        return [v for v in self.variables if v.startswith(prefix)]

    def components(self) -> list[str]:
        return self.role_vars("C")

    def evidence_of(self, component: str, prefix: str = "e") -> list[str]:
        """Evidence variables having ``component`` among their parents."""
        return [
            v
            for v in self.role_vars(prefix)
            if component in self.parents[v]
        ]

    def own_evidence_of(self, component: str, prefix: str = "e") -> list[str]:
        """Evidence variables whose only parent is ``component``."""
        return [
            v
            for v in self.role_vars(prefix)
            if self.parents[v] == (component,)
        ]

    # -- serialization -------------------------------------------------

    def to_json(self) -> str:
        doc = {
            "variables": list(self.variables),
            "parents": {v: list(self.parents[v]) for v in self.variables},
            "tables": {v: [float(x) for x in self.tables[v]] for v in self.variables},
        }
        return json.dumps(doc, sort_keys=True, indent=2)

    @classmethod
    def from_json(cls, text: str, name: str = "network") -> "OracleNetwork":
        doc = json.loads(text)
        return cls(
            variables=tuple(doc["variables"]),
            parents={v: tuple(ps) for v, ps in doc["parents"].items()},
            tables={v: np.array(t, dtype=np.float64) for v, t in doc["tables"].items()},
            name=name,
        )


def _all_true(vars_: Iterable[str]) -> dict[str, int]:
    return {v: 1 for v in vars_}


@dataclass(frozen=True)
class DeviationReport:
    """An approximation measured against the exact conditional."""

    network: str
    approx: float
    exact: float
    annotations: dict[str, Any] = field(default_factory=dict)

    @property
    def deviation(self) -> float:
        return abs(self.approx - self.exact)

    def to_record(self) -> dict[str, Any]:
        """Bit-exact record: floats serialized as hex strings."""
        ann = {
            k: (float(v).hex() if isinstance(v, float) else v)
            for k, v in sorted(self.annotations.items())
        }
        return {
            "network": self.network,
            "approx": float(self.approx).hex(),
            "exact": float(self.exact).hex(),
            "deviation": float(self.deviation).hex(),
            "annotations": ann,
        }


def check_accrual_formula(net: OracleNetwork) -> DeviationReport:
    """Evaluate the hierarchical update rule on exactly-computed inputs
    and report its deviation from the exact conditional.

    Whether the ratio-product rule agrees with exact Bayes on networks
    satisfying its assumptions is answered by this measurement, not
    assumed; the suite records the deviations and regression-tests
    their stability.
    """
    comps = net.components()
    if "H" not in net.variables or not comps:
        raise OracleStructureError(f"{net.name}: accrual check needs H and C* roles")
    all_e = net.role_vars("e")
    all_t = net.role_vars("t")
    fit = net.role_vars("f")

    per_component = []
    for c in comps:
        e_c = net.evidence_of(c, "e")
        t_c = net.evidence_of(c, "t")
        p_c = net.event_prob({c: 1}) / net.event_prob({})
        p_ce = net.exact_conditional({c: 1}, _all_true(e_c))
        p_ct = net.exact_conditional({c: 1}, _all_true(t_c))
        p_cet = net.exact_conditional({c: 1}, _all_true(e_c + t_c))
        per_component.append(ComponentBelief(p_ce=p_ce, p_ct=p_ct, p_cet=p_cet, p_c=p_c))

    p_h = net.event_prob({"H": 1}) / net.event_prob({})
    if fit:
        fit_num = net.exact_conditional(
            _all_true(fit), {**_all_true(comps), "H": 1}
        )
        fit_den = net.exact_conditional(_all_true(fit), _all_true(all_e + all_t))
    else:
        fit_num = fit_den = 1.0

    result = accrue_parent(
        AccrualInputs(
            fit_num=fit_num,
            fit_den=fit_den,
            per_component=tuple(per_component),
            p_h=p_h,
        )
    )
    exact = net.exact_conditional(
        {"H": 1}, _all_true(comps + all_e + all_t + fit)
    )
    return DeviationReport(
        network=net.name,
        approx=result.raw,
        exact=exact,
        annotations={
            "out_of_range": result.out_of_range,
            "components": len(comps),
            "fit_num": fit_num,
            "fit_den": fit_den,
        },
    )


def check_skip_identity(net: OracleNetwork) -> bool:
    """Verify the level-skip error algebra as an exact identity.

    With evidence = every e/t/f variable observed true, and writing
    q = P(all C | evidence):

        |P(H | all C, evidence) - P(H | evidence)|
            = P(H | evidence) * (1 - q) / q

    holds whenever P(all C | H, evidence) = 1, which the deterministic
    part-of rows guarantee.  Returns True when both sides agree within
    1e-12.
    """
    comps = net.components()
    if "H" not in net.variables or not comps:
        raise OracleStructureError(f"{net.name}: skip check needs H and C* roles")
    ev = net.role_vars("e") + net.role_vars("t") + net.role_vars("f")
    ev_true = _all_true(ev)
    linked = net.exact_conditional(_all_true(comps), {**ev_true, "H": 1})
    if abs(linked - 1.0) > IDENTITY_TOL:
        raise OracleStructureError(
            f"{net.name}: P(all C | H, evidence) = {linked}, not 1"
        )
    p_h_ce = net.exact_conditional({"H": 1}, {**ev_true, **_all_true(comps)})
    p_h_e = net.exact_conditional({"H": 1}, ev_true)
    q = net.exact_conditional(_all_true(comps), ev_true)
    lhs = abs(p_h_ce - p_h_e)
    rhs = p_h_e * (1.0 - q) / q
    return abs(lhs - rhs) <= IDENTITY_TOL


def skip_identity_report(net: OracleNetwork) -> DeviationReport:
    """The skip identity as a measurement: exact side is the realized
    |P(H|all C, evidence) - P(H|evidence)|, approx side the error
    formula P(H|evidence)*(1-q)/q.  Deviation is ~0 whenever the
    deterministic-link precondition holds."""
    comps = net.components()
    if "H" not in net.variables or not comps:
        raise OracleStructureError(f"{net.name}: skip check needs H and C* roles")
    ev = net.role_vars("e") + net.role_vars("t") + net.role_vars("f")
    ev_true = _all_true(ev)
    p_h_ce = net.exact_conditional({"H": 1}, {**ev_true, **_all_true(comps)})
    p_h_e = net.exact_conditional({"H": 1}, ev_true)
    q = net.exact_conditional(_all_true(comps), ev_true)
    return DeviationReport(
        network=net.name,
        approx=p_h_e * (1.0 - q) / q,
        exact=abs(p_h_ce - p_h_e),
        annotations={"q": q, "p_h_given_evidence": p_h_e},
    )


def check_approx_k(
    net: OracleNetwork, ordering: Sequence[str] | None = None
) -> DeviationReport:
    """Measure the ordered-product approximation of the joint component
    posterior against the exact P(all C | all evidence).

    Factor i conditions on the total evidence minus the evidence of
    every later member, mirroring the engine's conflict analysis.  The
    annotation records whether cross-component independence
    (P(C_i | own evidence of C_j) = P(C_i)) actually holds in the
    network: when it does and evidence sets are disjoint, the deviation
    is zero to rounding.  A single component degenerates to
    k = P(C | evidence) exactly.
    """
    comps = net.components()
    if not comps:
        raise OracleStructureError(f"{net.name}: approx-k check needs C* roles")
    order = list(ordering) if ordering is not None else list(comps)
    if sorted(order) != sorted(comps):
        raise OracleStructureError(f"{net.name}: ordering must permute the components")

    e_of = {c: set(net.evidence_of(c, "e")) for c in comps}
    total = sorted(set().union(*e_of.values()))

    factors = []
    for i, c in enumerate(order):
        later: set[str] = set()
        for d in order[i + 1 :]:
            later |= e_of[d]
        cond = [v for v in total if v not in later]
        if cond:
            factors.append(net.exact_conditional({c: 1}, _all_true(cond)))
        else:
            factors.append(net.event_prob({c: 1}) / net.event_prob({}))

    k = 1.0
    for f in factors:
        k *= f
    exact = net.exact_conditional(_all_true(comps), _all_true(total))

    indep = True
    for ci in comps:
        for cj in comps:
            if ci == cj:
                continue
            own_j = net.own_evidence_of(cj, "e")
            if not own_j:
                continue
            marginal = net.event_prob({ci: 1}) / net.event_prob({})
            conditioned = net.exact_conditional({ci: 1}, _all_true(own_j))
            if abs(conditioned - marginal) > IDENTITY_TOL:
                indep = False
    shared = [v for v in total if len([c for c in comps if c in net.parents[v]]) > 1]
    return DeviationReport(
        network=net.name,
        approx=k,
        exact=exact,
        annotations={
            "factors": [float(f) for f in factors],
            "independence_holds": indep,
            "shared_evidence_vars": shared,
            "ordering": list(order),
        },
    )


# -- network builders ----------------------------------------------------


def make_chain_network() -> OracleNetwork:
    """Three-node chain: force -> component -> detection."""
    return OracleNetwork(
        variables=("H", "C1", "e1"),
        parents={"H": (), "C1": ("H",), "e1": ("C1",)},
        tables={
            "H": np.array([0.5]),
            # rows: H=0, H=1 (deterministic part-of link)
            "C1": np.array([0.2, 1.0]),
            # rows: C1=0, C1=1
            "e1": np.array([0.1, 0.9]),
        },
        name="chain",
    )


def make_two_evidence_network(
    prior: float, lr_pairs: Sequence[tuple[float, float]]
) -> OracleNetwork:
    """One component with independent evidence children.

    Each (p1, p0) pair sets P(e=1|C=1) and P(e=1|C=0), i.e. a
    likelihood ratio of p1/p0, for cross-checking the odds combiner.
    """
    variables = ["C1"] + [f"e{i + 1}" for i in range(len(lr_pairs))]
    parents: dict[str, tuple[str, ...]] = {"C1": ()}
    tables: dict[str, np.ndarray] = {"C1": np.array([prior])}
    for i, (p1, p0) in enumerate(lr_pairs):
        parents[f"e{i + 1}"] = ("C1",)
        tables[f"e{i + 1}"] = np.array([p0, p1])
    return OracleNetwork(
        variables=tuple(variables), parents=parents, tables=tables, name="two-evidence"
    )


def random_skip_network(seed: int, max_vars: int = 12) -> OracleNetwork:
    """Seeded force/component/evidence network with deterministic
    part-of links, sized for fast enumeration."""
    rng = np.random.default_rng(seed)
    m = int(rng.integers(1, 4))
    e_counts = [int(rng.integers(1, 3)) for _ in range(m)]
    with_t = [bool(rng.random() < 0.4) for _ in range(m)]
    with_f = bool(rng.random() < 0.3)

    def total(tf: list[bool], f: bool) -> int:
        return 1 + m + sum(e_counts) + sum(tf) + (1 if f else 0)

    if total(with_t, with_f) > max_vars:
        with_f = False
    while total(with_t, with_f) > max_vars and any(with_t):
        with_t[with_t.index(True)] = False

    variables = ["H"]
    parents: dict[str, tuple[str, ...]] = {"H": ()}
    tables: dict[str, np.ndarray] = {"H": np.array([rng.uniform(0.15, 0.85)])}
    comps = []
    for i in range(m):
        c = f"C{i + 1}"
        comps.append(c)
        variables.append(c)
        parents[c] = ("H",)
        tables[c] = np.array([rng.uniform(0.05, 0.6), 1.0])
    for i, c in enumerate(comps):
        for j in range(e_counts[i]):
            e = f"e{i + 1}_{j + 1}"
            variables.append(e)
            parents[e] = (c,)
            tables[e] = np.array(
                [rng.uniform(0.05, 0.45), rng.uniform(0.55, 0.95)]
            )
        if with_t[i]:
            t = f"t{i + 1}"
            variables.append(t)
            parents[t] = (c,)
            tables[t] = np.array(
                [rng.uniform(0.05, 0.45), rng.uniform(0.55, 0.95)]
            )
    if with_f:
        variables.append("f")
        parents["f"] = tuple(["H"] + comps)
        tables["f"] = rng.uniform(0.05, 0.95, size=1 << (1 + m))
    return OracleNetwork(
        variables=tuple(variables),
        parents=parents,
        tables=tables,
        name=f"skip-{seed}",
    )


def random_accrual_network(seed: int) -> OracleNetwork:
    """Seeded network with the full H/C/e/t/f role structure."""
    rng = np.random.default_rng(seed)
    m = int(rng.integers(1, 4))
    variables = ["H"]
    parents: dict[str, tuple[str, ...]] = {"H": ()}
    tables: dict[str, np.ndarray] = {"H": np.array([rng.uniform(0.15, 0.85)])}
    comps = []
    for i in range(m):
        c = f"C{i + 1}"
        comps.append(c)
        variables.append(c)
        parents[c] = ("H",)
        tables[c] = np.array([rng.uniform(0.05, 0.6), 1.0])
    for i, c in enumerate(comps):
        for j in range(int(rng.integers(1, 3))):
            e = f"e{i + 1}_{j + 1}"
            variables.append(e)
            parents[e] = (c,)
            tables[e] = np.array(
                [rng.uniform(0.05, 0.45), rng.uniform(0.55, 0.95)]
            )
        t = f"t{i + 1}"
        variables.append(t)
        parents[t] = (c,)
        tables[t] = np.array([rng.uniform(0.05, 0.45), rng.uniform(0.55, 0.95)])
    variables.append("f")
    parents["f"] = tuple(["H"] + comps)
    tables["f"] = rng.uniform(0.05, 0.95, size=1 << (1 + m))
    return OracleNetwork(
        variables=tuple(variables),
        parents=parents,
        tables=tables,
        name=f"accrual-{seed}",
    )


def random_conflict_network(seed: int, shared: bool) -> OracleNetwork:
    """Seeded component-root network for the approx-k check.

    Components are roots (marginally independent), each with its own
    evidence children; with ``shared``, one extra evidence variable has
    two component parents, modelling an ambiguously associated item.
    """
    rng = np.random.default_rng(seed)
    m = int(rng.integers(2, 4))
    variables = []
    parents: dict[str, tuple[str, ...]] = {}
    tables: dict[str, np.ndarray] = {}
    comps = []
    for i in range(m):
        c = f"C{i + 1}"
        comps.append(c)
        variables.append(c)
        parents[c] = ()
        tables[c] = np.array([rng.uniform(0.2, 0.8)])
    for i, c in enumerate(comps):
        for j in range(int(rng.integers(1, 3))):
            e = f"e{i + 1}_{j + 1}"
            variables.append(e)
            parents[e] = (c,)
            tables[e] = np.array(
                [rng.uniform(0.05, 0.45), rng.uniform(0.55, 0.95)]
            )
    if shared:
        a, b = comps[0], comps[1]
        variables.append("e_shared")
        parents["e_shared"] = (a, b)
        # rows packed (a bit 0, b bit 1): 00, 10, 01, 11
        tables["e_shared"] = np.array(
            [
                rng.uniform(0.02, 0.2),
                rng.uniform(0.4, 0.7),
                rng.uniform(0.4, 0.7),
                rng.uniform(0.75, 0.98),
            ]
        )
    return OracleNetwork(
        variables=tuple(variables),
        parents=parents,
        tables=tables,
        name=f"conflict-{seed}-{'shared' if shared else 'disjoint'}",
    )
