"""Structural analysis of query patterns for traversal execution.

Answers four questions about a basic graph pattern:

* can it be evaluated by dereferencing only IRIs found in the query and in
  intermediate bindings (answerability), and in what triple order;
* which variables must have their bindings dereferenced to evaluate later
  triples (necessary-to-resolve variables);
* which triples narrow those variables' binding sets (star-join checks,
  positioned FILTER clauses);
* how the ordered triples partition into resolution groups, each served by
  one dereferencing pass.
"""

from __future__ import annotations

from dataclasses import dataclass

from .errors import InputError
from .query import (
    FilterClause,
    QueryPattern,
    Term,
    TriplePattern,
    render_expression,
    render_term,
)

CONSTANT_GROUP = "constant"


class InvalidOrder(InputError):
    """The supplied triple order is not traversal-evaluable."""


class NotAnswerable(InputError):
    """Operation requires an answerable query."""


@dataclass(frozen=True)
class AnswerabilityReport:
    answerable: bool
    order: tuple[int, ...] | None = None
    reordered_from_original: bool = False
    failure_witness: frozenset[int] | None = None


@dataclass(frozen=True)
class NrvInfo:
    """A variable whose bindings must be dereferenced for later triples."""

    variable: str
    binding_triple: int
    consumer_triples: tuple[int, ...]
    star_triples: tuple[int, ...] = ()
    filter_affected: bool = False


@dataclass(frozen=True)
class ResolutionGroup:
    """A maximal run of consecutive triples served by one dereference pass.

    ``variable`` is None for runs anchored at constant IRIs (the
    ``CONSTANT_GROUP`` sentinel is used in serialized output).
    """

    variable: str | None
    triple_indices: tuple[int, ...]
    ended_by_filter: bool = False

    @property
    def is_constant(self) -> bool:
        return self.variable is None

    @property
    def label(self) -> str:
        return CONSTANT_GROUP if self.variable is None else self.variable


@dataclass(frozen=True)
class TripleStep:
    """One triple of the traversal order with its anchor resolved."""

    index: int
    position: int
    anchor_kind: str  # "constant" | "variable"
    anchor_term: Term
    fresh: frozenset[str]  # names first bound here; blanks carry a "_:" prefix


def _binding_name(term: Term) -> str | None:
    """Key under which a term's binding is tracked, or None for constants."""
    if term.is_variable:
        return term.value
    if term.is_blank:
        return "_:" + term.value
    return None


def _anchor(triple: TriplePattern, bound: set[str]) -> tuple[str, Term] | None:
    """The term whose dereference evaluates the triple, preferring the subject.

    Constant IRIs and already-bound variables anchor; blank nodes, literals
    and predicate-position IRIs never do.
    """
    for term in (triple.subject, triple.object):
        if term.is_iri:
            return ("constant", term)
        if term.is_variable and term.value in bound:
            return ("variable", term)
    return None


def _triple_names(triple: TriplePattern) -> list[str]:
    names = []
    for term in triple.terms():
        name = _binding_name(term)
        if name is not None:
            names.append(name)
    return names


def check_answerability(q: QueryPattern) -> AnswerabilityReport:
    """Decide whether the pattern is evaluable by pure traversal.

    Repeatedly places the earliest-by-original-index triple that has an
    anchor given the bindings accumulated so far; evaluating a triple binds
    all of its variables (a variable predicate included).  The identity
    order is returned unchanged whenever it is itself evaluable.
    """
    remaining = list(range(len(q.triples)))
    bound: set[str] = set()
    order: list[int] = []
    while remaining:
        pick = None
        for idx in remaining:
            if _anchor(q.triples[idx], bound) is not None:
                pick = idx
                break
        if pick is None:
            return AnswerabilityReport(
                answerable=False, failure_witness=frozenset(remaining)
            )
        remaining.remove(pick)
        order.append(pick)
        bound.update(_triple_names(q.triples[pick]))
    return AnswerabilityReport(
        answerable=True,
        order=tuple(order),
        reordered_from_original=order != sorted(order),
    )


def traversal_steps(q: QueryPattern, order: tuple[int, ...]) -> list[TripleStep]:
    """Replay ``order``, resolving each triple's anchor and fresh bindings.

    Raises InvalidOrder if ``order`` is not a permutation of the triple
    indices or some triple has no anchor at its turn.
    """
    if sorted(order) != list(range(len(q.triples))):
        raise InvalidOrder(f"order {order!r} is not a permutation of the triple indices")
    bound: set[str] = set()
    steps: list[TripleStep] = []
    for position, idx in enumerate(order):
        triple = q.triples[idx]
        anchor = _anchor(triple, bound)
        if anchor is None:
            raise InvalidOrder(f"triple {idx} has no anchor at position {position}")
        fresh = frozenset(n for n in _triple_names(triple) if n not in bound)
        bound.update(fresh)
        steps.append(
            TripleStep(
                index=idx,
                position=position,
                anchor_kind=anchor[0],
                anchor_term=anchor[1],
                fresh=fresh,
            )
        )
    return steps


def _consumers_by_variable(q: QueryPattern, steps: list[TripleStep]) -> dict[str, list[int]]:
    """For each variable: the later triples it anchors that bind something new."""
    consumers: dict[str, list[int]] = {}
    for step in steps:
        if step.anchor_kind == "variable" and step.fresh:
            consumers.setdefault(step.anchor_term.value, []).append(step.index)
    return consumers


def find_nrvs(q: QueryPattern, order: tuple[int, ...]) -> list[NrvInfo]:
    """Necessary-to-resolve variables of the pattern under ``order``.

    A variable qualifies when at least one later triple is anchored by it
    and still has an unbound variable of its own, i.e. its bindings must be
    dereferenced to bind something else.
    """
    steps = traversal_steps(q, order)
    consumers = _consumers_by_variable(q, steps)
    stars = detect_star_joins(q, order)

    base: list[NrvInfo] = []
    for step in steps:
        for name in sorted(step.fresh):
            if name.startswith("_:") or name not in consumers:
                continue
            base.append(NrvInfo(name, step.index, tuple(consumers[name])))
    affected = filter_affected_nrvs(q, order, base)
    return [
        NrvInfo(
            variable=info.variable,
            binding_triple=info.binding_triple,
            consumer_triples=info.consumer_triples,
            star_triples=tuple(sorted(stars.get(info.variable, ()))),
            filter_affected=info.variable in affected,
        )
        for info in base
    ]


def detect_star_joins(q: QueryPattern, order: tuple[int, ...]) -> dict[str, set[int]]:
    """Triples that narrow an NRV's bindings before they are dereferenced.

    A triple earns star credit for variable v when v reappears in it purely
    as an extra constraint: the triple binds at least one fresh variable
    that is never itself dereferenced, its predicate is fixed, it carries no
    FILTER, and it is neither the first nor the last triple of the order.
    Binding-propagation steps (a fresh variable consumed later) and pure
    membership checks narrow bindings through other parts of the cost model
    and earn no credit here.
    """
    steps = traversal_steps(q, order)
    consumers = _consumers_by_variable(q, steps)
    binding_pos: dict[str, int] = {}
    for step in steps:
        for name in step.fresh:
            binding_pos[name] = step.position

    first, last = order[0], order[-1]
    out: dict[str, set[int]] = {}
    for step in steps:
        idx = step.index
        if idx in (first, last):
            continue
        triple = q.triples[idx]
        if not triple.predicate.is_iri:
            continue
        if not step.fresh:
            continue
        if q.filters_after(idx):
            continue
        # a step whose fresh binding feeds a later dereference is a chain
        # link, not a narrowing check
        if any(not name.startswith("_:") and name in consumers for name in step.fresh):
            continue
        for term in (triple.subject, triple.object):
            if term.is_variable and term.value not in step.fresh:
                v = term.value
                if v in consumers and binding_pos.get(v, 0) < step.position:
                    out.setdefault(v, set()).add(idx)
    return out


def filter_affected_nrvs(
    q: QueryPattern, order: tuple[int, ...], nrvs: list[NrvInfo]
) -> set[str]:
    """NRVs whose binding sets some FILTER narrows before a later consumer.

    A filter touches v when v occurs in its expression or in the triple it
    is attached to; it only matters if a consumer of v comes after the
    filter's position in traversal order.
    """
    position = {idx: pos for pos, idx in enumerate(order)}
    affected: set[str] = set()
    for nrv in nrvs:
        for clause in q.filters:
            if _filter_touches(q, clause, nrv.variable):
                fpos = position[clause.after_triple]
                if any(position[c] > fpos for c in nrv.consumer_triples):
                    affected.add(nrv.variable)
                    break
    return affected


def _filter_touches(q: QueryPattern, clause: FilterClause, variable: str) -> bool:
    if variable in clause.variables:
        return True
    return variable in q.triples[clause.after_triple].variables()


def build_resolution_groups(
    q: QueryPattern, order: tuple[int, ...]
) -> list[ResolutionGroup]:
    """Partition the traversal order into dereference passes.

    Consecutive triples anchored at constants share one pass, as do
    consecutive triples anchored by the same variable; a FILTER attached to
    a triple closes the pass it falls in.
    """
    steps = traversal_steps(q, order)
    groups: list[ResolutionGroup] = []
    run: list[int] = []
    run_variable: str | None = None
    run_is_constant = False

    def close(ended_by_filter: bool):
        nonlocal run
        if run:
            groups.append(
                ResolutionGroup(
                    variable=None if run_is_constant else run_variable,
                    triple_indices=tuple(run),
                    ended_by_filter=ended_by_filter,
                )
            )
            run = []

    for step in steps:
        is_constant = step.anchor_kind == "constant"
        variable = None if is_constant else step.anchor_term.value
        if run and (is_constant != run_is_constant or variable != run_variable):
            close(False)
        run_is_constant = is_constant
        run_variable = variable
        run.append(step.index)
        if q.filters_after(step.index):
            close(True)
    close(False)
    return groups


def render_service_form(q: QueryPattern, order: tuple[int, ...]) -> str:
    """Rewrite the query with one SERVICE block per dereference pass.

    Constant passes split into one block per distinct anchor IRI; variable
    passes anchor at their variable.  Raises NotAnswerable when the order
    cannot be replayed.
    """
    try:
        steps = traversal_steps(q, order)
    except InvalidOrder as exc:
        raise NotAnswerable(str(exc)) from exc
    groups = build_resolution_groups(q, order)
    step_by_index = {s.index: s for s in steps}
    prefixes = dict(q.prefixes)

    lines = [f"PREFIX {p}: <{iri}>" for p, iri in q.prefixes]
    select = "*" if q.select_vars is None else " ".join(f"?{v}" for v in q.select_vars)
    lines.append(f"SELECT {select} WHERE {{")

    def emit_block(anchor: Term, indices: list[int]):
        lines.append(f"  SERVICE {render_term(anchor, prefixes)} {{")
        for idx in indices:
            t = q.triples[idx]
            lines.append(
                f"    {render_term(t.subject, prefixes)} "
                f"{render_term(t.predicate, prefixes)} "
                f"{render_term(t.object, prefixes)} ."
            )
            for f in q.filters_after(idx):
                lines.append(f"    FILTER {render_expression(f.expression, prefixes)}")
        lines.append("  }")

    for group in groups:
        if group.is_constant:
            run: list[int] = []
            run_anchor: Term | None = None
            for idx in group.triple_indices:
                anchor = step_by_index[idx].anchor_term
                if run and anchor != run_anchor:
                    emit_block(run_anchor, run)
                    run = []
                run_anchor = anchor
                run.append(idx)
            if run:
                emit_block(run_anchor, run)
        else:
            emit_block(Term.var(group.variable), list(group.triple_indices))
    lines.append("}")
    return "\n".join(lines) + "\n"
