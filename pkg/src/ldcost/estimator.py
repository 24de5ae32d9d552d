"""Dereference-count estimation for answerable query patterns.

Four methods of increasing awareness:

* ``mnp``  - global averages only (predicate-agnostic);
* ``mp``   - per-predicate subject/object binding averages;
* ``mpj``  - additionally discounts star-join checks by a trained factor;
* ``mpjf`` - additionally discounts positioned FILTER constraints.

All methods walk the resolution groups in traversal order, carrying an
estimated binding count per variable.  A constant dereference counts once
query-wide; a variable group costs its variable's count at group start;
discounts land at group end, before counts propagate to variables bound
inside the group.  Binding counts assume the worst case: no two bindings
coincide.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

from .analysis import (
    NotAnswerable,
    ResolutionGroup,
    build_resolution_groups,
    check_answerability,
    detect_star_joins,
    traversal_steps,
)
from .errors import InputError
from .query import RDF_TYPE, FilterClause, QueryPattern
from .stats import StatsCatalog

DEFAULT_JOIN_FACTOR = 0.9
DEFAULT_FILTER_FACTOR = 0.9


class Method(enum.Enum):
    """Estimation method, keyed by its short CLI name."""

    PREDICATE_AGNOSTIC = "mnp"
    PREDICATE_AWARE = "mp"
    PREDICATE_JOINS = "mpj"
    PREDICATE_JOINS_FILTERS = "mpjf"

    @property
    def label(self) -> str:
        return {"mnp": "Mnp", "mp": "Mp", "mpj": "Mpj", "mpjf": "Mpjf"}[self.value]

    @classmethod
    def from_name(cls, name: str) -> "Method":
        try:
            return cls(name.lower())
        except ValueError:
            raise InputError(f"unknown estimation method {name!r}") from None


class NegativeOrNaNStat(InputError):
    """The catalog supplied a negative or NaN average."""


@dataclass(frozen=True)
class EstimatorConfig:
    method: Method = Method.PREDICATE_JOINS_FILTERS
    join_factor: float = DEFAULT_JOIN_FACTOR
    filter_factor: float = DEFAULT_FILTER_FACTOR

    def __post_init__(self):
        for name in ("join_factor", "filter_factor"):
            value = getattr(self, name)
            if not (0.0 <= value <= 1.0):
                raise ValueError(f"{name} must lie in [0, 1], got {value!r}")


@dataclass(frozen=True)
class GroupCost:
    group_id: int
    variable: str  # "constant" for constant-anchored groups
    accesses: float


@dataclass(frozen=True)
class CostEstimate:
    total: float
    ceiled_total: int
    group_costs: tuple[GroupCost, ...]
    binding_counts: dict[str, float] = field(default_factory=dict)

    def as_dict(self) -> dict:
        return {
            "total": self.total,
            "ceiled_total": self.ceiled_total,
            "groups": [
                {"id": g.group_id, "variable": g.variable, "accesses": g.accesses}
                for g in self.group_costs
            ],
            "binding_counts": dict(sorted(self.binding_counts.items())),
        }


# Totals carry float noise from repeated multiplication (0.01 * 10000 is not
# exactly 100); snap to 9 decimals before ceiling so exact-integer totals stay
# exact.
def _ceil(total: float) -> int:
    return math.ceil(round(total, 9))


def _checked(value: float, predicate: str) -> float:
    if math.isnan(value) or value < 0.0:
        raise NegativeOrNaNStat(f"catalog average for {predicate!r} is {value!r}")
    return value


def estimate(q: QueryPattern, catalog: StatsCatalog, config: EstimatorConfig) -> CostEstimate:
    """Estimated number of remote dereferences to evaluate ``q``.

    Raises NotAnswerable when the pattern has no traversal-evaluable order.
    """
    report = check_answerability(q)
    if not report.answerable:
        raise NotAnswerable(
            f"triples {sorted(report.failure_witness or ())} can never be anchored"
        )
    order = report.order
    steps = {s.index: s for s in traversal_steps(q, order)}
    groups = build_resolution_groups(q, order)
    stars = detect_star_joins(q, order) if config.method in (
        Method.PREDICATE_JOINS,
        Method.PREDICATE_JOINS_FILTERS,
    ) else {}
    filter_targets = (
        _filter_reduction_targets(q, order)
        if config.method is Method.PREDICATE_JOINS_FILTERS
        else {}
    )

    counts: dict[str, float] = {}
    dereferenced: set[str] = set()
    group_costs: list[GroupCost] = []
    total = 0.0

    for gid, group in enumerate(groups):
        accesses = 0.0
        if not group.is_constant:
            accesses += counts.get(group.variable, 0.0)
        # every constant in subject/object position is resolved, once per query
        for idx in group.triple_indices:
            t = q.triples[idx]
            for term in (t.subject, t.object):
                if term.is_iri and term.value not in dereferenced:
                    dereferenced.add(term.value)
                    accesses += 1.0

        # discounts land at group end, before counts derived inside the
        # group are computed, so those counts inherit them ...
        bound_before = set(counts)
        _apply_star_reductions(group, config, stars, counts)
        ending_filters = (
            q.filters_after(group.triple_indices[-1])
            if config.method is Method.PREDICATE_JOINS_FILTERS and group.ended_by_filter
            else []
        )
        for clause in ending_filters:
            for v in filter_targets.get(clause, ()):
                if v in counts:
                    counts[v] *= config.filter_factor
        _bind_fresh_variables(q, group, steps, counts, catalog, config.method)
        # ... except filter discounts on variables first bound in this very
        # group, which only exist after binding
        for clause in ending_filters:
            for v in filter_targets.get(clause, ()):
                if v in counts and v not in bound_before:
                    counts[v] *= config.filter_factor

        group_costs.append(GroupCost(gid, group.label, accesses))
        total += accesses

    binding_counts = {
        name: value for name, value in counts.items() if not name.startswith("_:")
    }
    return CostEstimate(
        total=total,
        ceiled_total=_ceil(total),
        group_costs=tuple(group_costs),
        binding_counts=binding_counts,
    )


def _filter_reduction_targets(
    q: QueryPattern, order: tuple[int, ...]
) -> dict[FilterClause, set[str]]:
    """Per filter: variables whose counts it discounts.

    A filter discounts v when v occurs in its expression or its attached
    triple, and some later triple dereferences v's bindings to bind
    something new.
    """
    position = {idx: pos for pos, idx in enumerate(order)}
    steps = traversal_steps(q, order)
    consumer_positions: dict[str, list[int]] = {}
    for step in steps:
        if step.anchor_kind == "variable" and step.fresh:
            consumer_positions.setdefault(step.anchor_term.value, []).append(step.position)

    targets: dict[FilterClause, set[str]] = {}
    for clause in q.filters:
        fpos = position[clause.after_triple]
        touched = set(clause.variables) | {
            v for v in q.triples[clause.after_triple].variables()
        }
        affected = {
            v
            for v in touched
            if any(p > fpos for p in consumer_positions.get(v, ()))
        }
        if affected:
            targets[clause] = affected
    return targets


def _apply_star_reductions(
    group: ResolutionGroup,
    config: EstimatorConfig,
    stars: dict[str, set[int]],
    counts: dict[str, float],
) -> None:
    if config.method not in (Method.PREDICATE_JOINS, Method.PREDICATE_JOINS_FILTERS):
        return
    if group.is_constant:
        return
    v = group.variable
    star_indices = stars.get(v, ())
    for idx in group.triple_indices:
        if idx in star_indices and v in counts:
            counts[v] *= config.join_factor


def _bind_fresh_variables(
    q: QueryPattern,
    group: ResolutionGroup,
    steps: dict,
    counts: dict[str, float],
    catalog: StatsCatalog,
    method: Method,
) -> None:
    for idx in group.triple_indices:
        step = steps[idx]
        if not step.fresh:
            continue
        t = q.triples[idx]
        if step.anchor_kind == "constant":
            base = 1.0
        else:
            base = counts.get(step.anchor_term.value, 0.0)
        anchored_at_subject = step.anchor_term == t.subject
        g = catalog.global_stats

        if t.predicate.is_iri:
            if anchored_at_subject:
                if method is Method.PREDICATE_AGNOSTIC:
                    node_multiplier = g.avg_obj_bindings
                else:
                    node_multiplier = catalog.lookup_object_avg(t.predicate.value)
            else:
                is_type = t.predicate.value == RDF_TYPE
                if method is Method.PREDICATE_AGNOSTIC:
                    node_multiplier = (
                        g.avg_instances_per_class if is_type else g.avg_subj_bindings_nontype
                    )
                else:
                    node_multiplier = catalog.lookup_subject_avg(
                        t.predicate.value, is_rdf_type=is_type
                    )
            node_multiplier = _checked(node_multiplier, t.predicate.value)
            predicate_multiplier = None
        else:
            # variable predicate: every property of the anchor is followed,
            # and each contributes the direction's global average
            predicate_multiplier = _checked(
                g.avg_outgoing_props if anchored_at_subject else g.avg_incoming_props,
                "?" + t.predicate.value,
            )
            direction_avg = _checked(
                g.avg_obj_bindings if anchored_at_subject else g.avg_subj_bindings_nontype,
                "?" + t.predicate.value,
            )
            node_multiplier = predicate_multiplier * direction_avg

        for term in (t.subject, t.predicate, t.object):
            name = None
            if term.is_variable:
                name = term.value
            elif term.is_blank:
                name = "_:" + term.value
            if name is None or name not in step.fresh or name in counts:
                continue
            if term is t.predicate:
                counts[name] = base * (predicate_multiplier or 1.0)
            else:
                counts[name] = base * node_multiplier


def estimate_all(
    q: QueryPattern,
    catalog: StatsCatalog,
    join_factor: float = DEFAULT_JOIN_FACTOR,
    filter_factor: float = DEFAULT_FILTER_FACTOR,
) -> dict[Method, CostEstimate]:
    """Run all four methods with shared factors."""
    return {
        method: estimate(
            q,
            catalog,
            EstimatorConfig(method=method, join_factor=join_factor, filter_factor=filter_factor),
        )
        for method in Method
    }
