"""Knowledge-base statistics consumed by the cost estimators.

A catalog holds five global averages plus per-predicate subject/object
binding averages.  It can be computed from an RDF dump, fetched from a
SPARQL endpoint by running the aggregate queries that define each value,
or loaded from a plain-text file.  Lookups never fail: unknown predicates
fall back to the global averages.
"""

from __future__ import annotations

import statistics
import warnings
from dataclasses import dataclass, field, replace
from xml.etree import ElementTree

from .errors import FormatError, InputError, RemoteError
from .query import RDF_TYPE

# Averages measured on DBpedia; used when no catalog is supplied.
DEFAULT_AVG_OUTGOING_PROPS = 25.0
DEFAULT_AVG_INCOMING_PROPS = 5.0
DEFAULT_AVG_SUBJ_BINDINGS_NONTYPE = 1505.0
DEFAULT_AVG_INSTANCES_PER_CLASS = 848.0
DEFAULT_AVG_OBJ_BINDINGS = 1.86

GLOBAL_KEYS = (
    "avg_outgoing_props",
    "avg_incoming_props",
    "avg_subj_bindings_nontype",
    "avg_instances_per_class",
    "avg_obj_bindings",
)

GLOBAL_PARAMETERS = ("K1", "K2", "K3", "K4", "K5")
PER_PREDICATE_PARAMETERS = ("perPredSubj", "perPredObj")


class MissingPredicate(InputError):
    """A per-predicate collector query was requested without a predicate."""


class MalformedTriple(InputError):
    """A dump record could not be interpreted as a triple."""


class EndpointUnreachable(RemoteError):
    """The SPARQL endpoint could not be contacted at all."""


class ProtocolError(RemoteError):
    """The endpoint answered with something that is not a numeric result."""


class PartialCatalogWarning(UserWarning):
    """Some collector queries failed; the catalog has gaps noted in provenance."""


@dataclass(frozen=True)
class GlobalStats:
    """The five dataset-wide averages.

    In order: outgoing properties per typed entity, incoming properties
    per typed entity, subjects per object for non-type predicates,
    instances per class, and objects per subject.
    """

    avg_outgoing_props: float = DEFAULT_AVG_OUTGOING_PROPS
    avg_incoming_props: float = DEFAULT_AVG_INCOMING_PROPS
    avg_subj_bindings_nontype: float = DEFAULT_AVG_SUBJ_BINDINGS_NONTYPE
    avg_instances_per_class: float = DEFAULT_AVG_INSTANCES_PER_CLASS
    avg_obj_bindings: float = DEFAULT_AVG_OBJ_BINDINGS

    def __post_init__(self):
        for key in GLOBAL_KEYS:
            value = getattr(self, key)
            if not (value >= 0.0) or value != value or value in (float("inf"),):
                raise ValueError(f"{key} must be finite and non-negative, got {value!r}")

    def as_dict(self) -> dict[str, float]:
        return {key: getattr(self, key) for key in GLOBAL_KEYS}


@dataclass(frozen=True)
class PredicateStats:
    predicate: str
    avg_subject_bindings: float
    avg_object_bindings: float


@dataclass(frozen=True)
class StatsCatalog:
    global_stats: GlobalStats = field(default_factory=GlobalStats)
    per_predicate: dict[str, PredicateStats] = field(default_factory=dict)
    provenance: str = ""

    def lookup_subject_avg(self, predicate: str, is_rdf_type: bool = False) -> float:
        """Average subjects per object for a predicate, with global fallback."""
        entry = self.per_predicate.get(predicate)
        if entry is not None:
            return entry.avg_subject_bindings
        if is_rdf_type or predicate == RDF_TYPE:
            return self.global_stats.avg_instances_per_class
        return self.global_stats.avg_subj_bindings_nontype

    def lookup_object_avg(self, predicate: str) -> float:
        """Average objects per subject for a predicate, with global fallback."""
        entry = self.per_predicate.get(predicate)
        if entry is not None:
            return entry.avg_object_bindings
        return self.global_stats.avg_obj_bindings


def lookup_subject_avg(catalog: StatsCatalog, predicate: str, is_rdf_type: bool = False) -> float:
    return catalog.lookup_subject_avg(predicate, is_rdf_type)


def lookup_object_avg(catalog: StatsCatalog, predicate: str) -> float:
    return catalog.lookup_object_avg(predicate)


# --- collector queries --------------------------------------------------------

_GLOBAL_QUERIES = {
    "K1": (
        "SELECT (AVG(?count) AS ?average)\n"
        "WHERE {\n"
        "  { SELECT ?x (COUNT(DISTINCT ?y) AS ?count)\n"
        "    WHERE {\n"
        "      ?x a ?type . ?x ?y ?z } GROUP BY ?x }}"
    ),
    "K2": (
        "SELECT (AVG(?count) AS ?average)\n"
        "WHERE {\n"
        "  { SELECT ?z (COUNT(DISTINCT ?y) AS ?count)\n"
        "    WHERE {\n"
        "      ?x ?y ?z . ?z a ?type } GROUP BY ?z }}"
    ),
    "K3": (
        "SELECT (AVG(?count) AS ?average)\n"
        "WHERE {\n"
        " { SELECT ?z (COUNT(DISTINCT ?x) AS ?count)\n"
        "   WHERE {\n"
        "    ?x ?y ?z FILTER (?y!=<" + RDF_TYPE + ">) } GROUP BY ?z } }"
    ),
    "K4": (
        "SELECT (AVG(?count) AS ?average)\n"
        "WHERE {\n"
        "  { SELECT ?z (COUNT(DISTINCT ?x) AS ?count)\n"
        "    WHERE { ?x a ?z } GROUP BY ?z } }"
    ),
    "K5": (
        "SELECT (AVG(?count) AS ?average)\n"
        "WHERE {\n"
        "  { SELECT ?x (COUNT(DISTINCT ?z) AS ?count)\n"
        "    WHERE { ?x ?y ?z } GROUP BY ?x } }"
    ),
}

_PER_PREDICATE_QUERIES = {
    "perPredObj": (
        "SELECT (AVG(?count) AS ?average)\n"
        "WHERE {\n"
        "  { SELECT ?x (COUNT(DISTINCT ?z) AS ?count)\n"
        "    WHERE { ?x <PREDICATE> ?z } GROUP BY ?x } }"
    ),
    "perPredSubj": (
        "SELECT (AVG(?count) AS ?average)\n"
        "WHERE {\n"
        "  { SELECT ?z (COUNT(DISTINCT ?x) AS ?count)\n"
        "    WHERE { ?x <PREDICATE> ?z } GROUP BY ?z } }"
    ),
}


def collector_query(parameter: str, predicate: str | None = None) -> str:
    """The aggregate SPARQL query that defines a catalog value.

    ``parameter`` is one of K1..K5 or perPredSubj/perPredObj; the latter two
    require ``predicate``.
    """
    if parameter in _GLOBAL_QUERIES:
        return _GLOBAL_QUERIES[parameter]
    if parameter in _PER_PREDICATE_QUERIES:
        if predicate is None:
            raise MissingPredicate(f"{parameter} requires a predicate IRI")
        return _PER_PREDICATE_QUERIES[parameter].replace("PREDICATE", predicate)
    raise InputError(f"unknown statistics parameter {parameter!r}")


# --- computing from a dump ----------------------------------------------------

def _mean_of_counts(groups: dict) -> float:
    if not groups:
        return 0.0
    return statistics.fmean(len(v) for v in groups.values())


def compute_from_dump(triples, provenance: str = "dump") -> StatsCatalog:
    """Build a catalog from an iterable of (subject, predicate, object) records.

    Distinct counting is exact and in-memory; this is meant for dumps that
    fit on a workstation, not for web-scale corpora.  Records that are not
    3-tuples of strings are skipped and counted; only an all-malformed
    stream is an error.
    """
    outgoing: dict[str, set[str]] = {}          # subject -> predicates
    incoming: dict[str, set[str]] = {}          # object  -> predicates
    subj_by_obj_nontype: dict[str, set[str]] = {}
    instances: dict[str, set[str]] = {}         # class -> subjects
    objects_by_subj: dict[str, set[str]] = {}
    pred_objects: dict[str, dict[str, set[str]]] = {}  # p -> subject -> objects
    pred_subjects: dict[str, dict[str, set[str]]] = {}  # p -> object -> subjects
    typed: set[str] = set()

    total = 0
    malformed = 0
    for record in triples:
        total += 1
        try:
            s, p, o = record
            if not (isinstance(s, str) and isinstance(p, str) and isinstance(o, str)):
                raise TypeError
        except (TypeError, ValueError):
            malformed += 1
            continue
        outgoing.setdefault(s, set()).add(p)
        incoming.setdefault(o, set()).add(p)
        if p == RDF_TYPE:
            typed.add(s)
            instances.setdefault(o, set()).add(s)
        else:
            subj_by_obj_nontype.setdefault(o, set()).add(s)
        objects_by_subj.setdefault(s, set()).add(o)
        pred_objects.setdefault(p, {}).setdefault(s, set()).add(o)
        pred_subjects.setdefault(p, {}).setdefault(o, set()).add(s)

    if total and malformed == total:
        raise MalformedTriple(f"all {total} records were malformed")

    k1 = _mean_of_counts({s: preds for s, preds in outgoing.items() if s in typed})
    k2 = _mean_of_counts({o: preds for o, preds in incoming.items() if o in typed})
    k3 = _mean_of_counts(subj_by_obj_nontype)
    k4 = _mean_of_counts(instances)
    k5 = _mean_of_counts(objects_by_subj)

    per_predicate = {
        p: PredicateStats(
            predicate=p,
            avg_subject_bindings=_mean_of_counts(pred_subjects[p]),
            avg_object_bindings=_mean_of_counts(pred_objects[p]),
        )
        for p in pred_objects
    }
    note = provenance
    if malformed:
        note += f" ({malformed} malformed records skipped)"
    if total == 0:
        return StatsCatalog(
            global_stats=GlobalStats(0.0, 0.0, 0.0, 0.0, 0.0),
            per_predicate={},
            provenance=note,
        )
    return StatsCatalog(
        global_stats=GlobalStats(k1, k2, k3, k4, k5),
        per_predicate=per_predicate,
        provenance=note,
    )


# --- SPARQL endpoint fetch ------------------------------------------------------

def _parse_average(payload_text: str, content_type: str) -> float | None:
    """Extract the single ?average value from a results document.

    Returns None for an empty result set (no qualifying groups); raises
    ProtocolError for anything that is not a results document.
    """
    import json

    if "json" in content_type:
        try:
            doc = json.loads(payload_text)
            bindings = doc["results"]["bindings"]
        except (ValueError, KeyError, TypeError) as exc:
            raise ProtocolError(f"bad SPARQL results JSON: {exc}") from exc
        if not bindings:
            return None
        try:
            return float(bindings[0]["average"]["value"])
        except (KeyError, ValueError, TypeError) as exc:
            raise ProtocolError(f"non-numeric average in results: {exc}") from exc
    # XML fallback
    try:
        root = ElementTree.fromstring(payload_text)
    except ElementTree.ParseError as exc:
        raise ProtocolError(f"unparseable SPARQL results: {exc}") from exc
    ns = {"s": "http://www.w3.org/2005/sparql-results#"}
    literals = root.findall(".//s:binding[@name='average']/s:literal", ns)
    if not literals:
        if root.findall(".//s:result", ns):
            raise ProtocolError("result row lacks an ?average binding")
        return None
    try:
        return float(literals[0].text or "")
    except ValueError as exc:
        raise ProtocolError(f"non-numeric average in results: {exc}") from exc


def fetch_from_endpoint(
    endpoint_url: str,
    predicate_list: list[str] | None = None,
    timeout: float = 60.0,
) -> StatsCatalog:
    """Assemble a catalog by running the collector queries over HTTP.

    Per-predicate queries that fail or return nothing leave the entry out;
    global queries that fail keep their default value.  Either case is
    noted in the provenance and raises PartialCatalogWarning.
    """
    import requests

    session = requests.Session()
    gaps: list[str] = []

    def run(query: str) -> float | None:
        try:
            resp = session.get(
                endpoint_url,
                params={"query": query},
                headers={
                    "Accept": "application/sparql-results+json, application/sparql-results+xml"
                },
                timeout=timeout,
            )
        except requests.exceptions.Timeout as exc:
            raise TimeoutError(str(exc)) from exc
        except requests.exceptions.RequestException as exc:
            raise EndpointUnreachable(f"cannot reach {endpoint_url}: {exc}") from exc
        if resp.status_code >= 500:
            raise ProtocolError(f"endpoint error {resp.status_code}")
        if resp.status_code != 200:
            raise ProtocolError(f"unexpected status {resp.status_code}")
        return _parse_average(resp.text, resp.headers.get("Content-Type", ""))

    globals_kwargs: dict[str, float] = {}
    for parameter, key in zip(GLOBAL_PARAMETERS, GLOBAL_KEYS):
        try:
            value = run(collector_query(parameter))
        except (TimeoutError, ProtocolError) as exc:
            gaps.append(f"{parameter}: {exc}")
            continue
        if value is None:
            gaps.append(f"{parameter}: empty result")
            continue
        globals_kwargs[key] = value

    per_predicate: dict[str, PredicateStats] = {}
    for predicate in sorted(predicate_list or []):
        try:
            obj_avg = run(collector_query("perPredObj", predicate))
            subj_avg = run(collector_query("perPredSubj", predicate))
        except (TimeoutError, ProtocolError) as exc:
            gaps.append(f"{predicate}: {exc}")
            continue
        if obj_avg is None or subj_avg is None:
            continue  # predicate absent from the knowledge base
        per_predicate[predicate] = PredicateStats(
            predicate=predicate,
            avg_subject_bindings=subj_avg,
            avg_object_bindings=obj_avg,
        )

    provenance = f"endpoint {endpoint_url}"
    if gaps:
        provenance += "; gaps: " + "; ".join(gaps)
        warnings.warn(
            f"partial catalog: {len(gaps)} collector queries failed", PartialCatalogWarning
        )
    return StatsCatalog(
        global_stats=GlobalStats(**globals_kwargs),
        per_predicate=per_predicate,
        provenance=provenance,
    )


# --- catalog file format --------------------------------------------------------
#
# UTF-8 text, '#' comments.  A "[global]" section with one "key<TAB>value"
# row per global average, then a "[predicates]" section with
# "IRI<TAB>avgSubjectBindings<TAB>avgObjectBindings" rows.

def save_catalog(catalog: StatsCatalog, path) -> None:
    lines = ["# ldcost statistics catalog"]
    if catalog.provenance:
        for part in catalog.provenance.splitlines():
            lines.append(f"# provenance: {part}")
    lines.append("[global]")
    for key in GLOBAL_KEYS:
        lines.append(f"{key}\t{getattr(catalog.global_stats, key)!r}")
    lines.append("[predicates]")
    for iri in sorted(catalog.per_predicate):
        entry = catalog.per_predicate[iri]
        lines.append(f"{iri}\t{entry.avg_subject_bindings!r}\t{entry.avg_object_bindings!r}")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def load_catalog(path) -> StatsCatalog:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            raw_lines = fh.read().splitlines()
    except OSError as exc:
        raise InputError(f"cannot read catalog {path}: {exc}") from exc

    section = None
    globals_seen: dict[str, float] = {}
    per_predicate: dict[str, PredicateStats] = {}
    provenance_parts: list[str] = []
    for lineno, raw in enumerate(raw_lines, start=1):
        line = raw.strip()
        if line.startswith("# provenance:"):
            provenance_parts.append(line[len("# provenance:"):].strip())
            continue
        if not line or line.startswith("#"):
            continue
        if line == "[global]":
            section = "global"
            continue
        if line == "[predicates]":
            section = "predicates"
            continue
        if line.startswith("["):
            raise FormatError(f"line {lineno}: unknown section {line!r}")
        if section == "global":
            parts = line.split("\t")
            if len(parts) != 2 or parts[0] not in GLOBAL_KEYS:
                raise FormatError(f"line {lineno}: expected 'key<TAB>value' global row")
            try:
                globals_seen[parts[0]] = float(parts[1])
            except ValueError as exc:
                raise FormatError(f"line {lineno}: bad number {parts[1]!r}") from exc
        elif section == "predicates":
            parts = line.split("\t")
            if len(parts) != 3:
                raise FormatError(
                    f"line {lineno}: expected 'IRI<TAB>subjAvg<TAB>objAvg' predicate row"
                )
            try:
                per_predicate[parts[0]] = PredicateStats(
                    predicate=parts[0],
                    avg_subject_bindings=float(parts[1]),
                    avg_object_bindings=float(parts[2]),
                )
            except ValueError as exc:
                raise FormatError(f"line {lineno}: bad number in predicate row") from exc
        else:
            raise FormatError(f"line {lineno}: content before any section header")

    missing = [k for k in GLOBAL_KEYS if k not in globals_seen]
    if missing:
        raise FormatError(f"missing global parameter rows: {', '.join(missing)}")
    return StatsCatalog(
        global_stats=GlobalStats(**globals_seen),
        per_predicate=per_predicate,
        provenance="\n".join(provenance_parts),
    )


def with_provenance(catalog: StatsCatalog, provenance: str) -> StatsCatalog:
    return replace(catalog, provenance=provenance)
