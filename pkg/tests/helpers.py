"""Shared fixtures: example queries, store builders, brute-force oracles
and seeded generators used by the property-style tests."""

from __future__ import annotations

import json
import random
import threading
import time
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path
from urllib.parse import parse_qs, urlparse

from ldcost.query import RDF_TYPE
from ldcost.stats import GlobalStats, PredicateStats, StatsCatalog

DBR = "http://dbpedia.org/resource/"
DBO = "http://dbpedia.org/ontology/"
EX = "http://example.org/"

MANDELA_QUERY = """
PREFIX dbr: <http://dbpedia.org/resource/>
PREFIX dbo: <http://dbpedia.org/ontology/>
SELECT ?birthDate  WHERE {
  dbr:Nelson_Mandela dbo:birthDate ?birthDate }
"""

PLATO_QUERY = """
PREFIX dbr: <http://dbpedia.org/resource/>
PREFIX dbo: <http://dbpedia.org/ontology/>
SELECT ?influencer ?influencerDescription  WHERE {
  dbr:Plato dbo:influencedBy ?influencer .
  ?influencer dbo:abstract ?influencerDescription
        FILTER (lang(?influencerDescription) = 'en') }
"""

PLATO_LD_QUERY = """
PREFIX dbr: <http://dbpedia.org/resource/>
PREFIX dbo: <http://dbpedia.org/ontology/>
SELECT ?influencer ?influencerDescription  WHERE {
  SERVICE dbr:Plato {
     dbr:Plato dbo:influencedBy ?influencer }
  SERVICE ?influencer {
     ?influencer dbo:abstract ?influencerDescription
           FILTER (lang(?influencerDescription) = 'en') } }
"""

AUTHOR_CHAIN_QUERY = """
PREFIX : <http://example.org/>
SELECT * WHERE {
  ?author a :Author .
  ?author :hasPublication ?publication .
  ?publication :inVenue ?venue }
"""

DIRECTOR_STAR_QUERY = """
PREFIX : <http://example.org/>
SELECT * WHERE {
  ?author a :Author .
  ?author :directorOf ?institution .
  ?author :hasPublication ?publication .
  ?publication :inVenue ?venue }
"""

BIRTHDATE_FILTER_QUERY = """
PREFIX : <http://example.org/>
SELECT * WHERE {
  ?author a :Author .
  ?author :directorOf ?institution .
  ?author :birthDate ?birthDate FILTER(year(?birthDate)>1985)
  ?author :hasPublication ?publication .
  ?publication :inVenue ?venue }
"""

PARTY_CHAIN_QUERY = """
PREFIX : <http://example.org/>
SELECT * WHERE {
  :party12 :hasMember ?author .
  ?author a :Author .
  ?author :hasPublication ?publication .
  ?publication :inVenue ?venue }
"""

ISURI_QUERY = """
SELECT * WHERE {
  ?subject ?predicate ?object FILTER isURI(?object) }
"""


def worked_example_catalog() -> StatsCatalog:
    """Exact statistics that make the narrative examples come out round."""
    return StatsCatalog(
        per_predicate={
            RDF_TYPE: PredicateStats(RDF_TYPE, avg_subject_bindings=10_000.0, avg_object_bindings=1.0),
            EX + "hasPublication": PredicateStats(EX + "hasPublication", 1.0, 50.0),
            EX + "inVenue": PredicateStats(EX + "inVenue", 1.0, 1.0),
        }
    )


# --- local store builders -------------------------------------------------------

def write_manifest(root: Path, entries: dict[str, str]) -> Path:
    manifest = root / "manifest.tsv"
    manifest.write_text(
        "".join(f"{iri}\t{rel}\n" for iri, rel in entries.items()), encoding="utf-8"
    )
    return manifest


def build_plato_store(root: Path, influencers: int = 14) -> Path:
    """Hub document plus one document per influencer, each with an English
    and a German abstract."""
    docs = root / "docs"
    docs.mkdir(parents=True, exist_ok=True)
    hub = [f"@prefix dbr: <{DBR}> .", f"@prefix dbo: <{DBO}> ."]
    entries: dict[str, str] = {}
    for i in range(influencers):
        hub.append(f"dbr:Plato dbo:influencedBy dbr:Influencer_{i} .")
        (docs / f"influencer_{i}.n3").write_text(
            f"@prefix dbr: <{DBR}> .\n@prefix dbo: <{DBO}> .\n"
            f'dbr:Influencer_{i} dbo:abstract "Thinker number {i}"@en .\n'
            f'dbr:Influencer_{i} dbo:abstract "Denker Nummer {i}"@de .\n',
            encoding="utf-8",
        )
        entries[f"{DBR}Influencer_{i}"] = f"docs/influencer_{i}.n3"
    (docs / "plato.n3").write_text("\n".join(hub) + "\n", encoding="utf-8")
    entries[f"{DBR}Plato"] = "docs/plato.n3"
    return write_manifest(root, entries)


def build_mandela_store(root: Path) -> Path:
    docs = root / "docs"
    docs.mkdir(parents=True, exist_ok=True)
    (docs / "mandela.n3").write_text(
        f"@prefix dbr: <{DBR}> .\n@prefix dbo: <{DBO}> .\n"
        f"@prefix xsd: <http://www.w3.org/2001/XMLSchema#> .\n"
        'dbr:Nelson_Mandela dbo:birthDate "1918-07-18"^^xsd:date .\n',
        encoding="utf-8",
    )
    return write_manifest(root, {f"{DBR}Nelson_Mandela": "docs/mandela.n3"})


def build_chain_store(root: Path, degrees: list[int]) -> tuple[Path, str, list[tuple[str, str, str]], int]:
    """A uniform-out-degree chain fixture.

    Level 0 is a single seed; each node at level i links to ``degrees[i]``
    fresh children via predicate p{i+1}.  Returns (manifest path, query
    text, all triples as string records, expected distinct dereferences).
    Nodes on the last level are never dereferenced and get no documents.
    """
    docs = root / "docs"
    docs.mkdir(parents=True, exist_ok=True)
    entries: dict[str, str] = {}
    records: list[tuple[str, str, str]] = []

    levels: list[list[str]] = [[EX + "seed"]]
    for depth, degree in enumerate(degrees):
        children: list[str] = []
        for parent_pos, parent in enumerate(levels[-1]):
            kids = [f"{EX}n{depth + 1}_{parent_pos}_{k}" for k in range(degree)]
            children.extend(kids)
            lines = [
                f"<{parent}> <{EX}p{depth + 1}> <{kid}> ." for kid in kids
            ]
            doc_name = f"docs/d{depth}_{parent_pos}.nt"
            (root / doc_name).write_text("\n".join(lines) + "\n", encoding="utf-8")
            entries[parent] = doc_name
            records.extend((parent, f"{EX}p{depth + 1}", kid) for kid in kids)
        levels.append(children)

    manifest = write_manifest(root, entries)
    body = [f"<{EX}seed> <{EX}p1> ?v1 ."]
    for depth in range(1, len(degrees)):
        body.append(f"?v{depth} <{EX}p{depth + 1}> ?v{depth + 1} .")
    query = "SELECT * WHERE {\n  " + "\n  ".join(body) + "\n}"
    expected = sum(len(level) for level in levels[:-1])
    return manifest, query, records, expected


# --- brute-force evaluation of the statistics queries ---------------------------
#
# Each function below literally performs the group-by that defines the
# corresponding catalog value, with no shared code with the implementation.

def _mean(counts: list[int]) -> float:
    return sum(counts) / len(counts) if counts else 0.0


def oracle_avg_outgoing(triples) -> float:
    typed = {s for s, p, o in triples if p == RDF_TYPE}
    return _mean([len({p for s, p, o in triples if s == x}) for x in sorted(typed)])


def oracle_avg_incoming(triples) -> float:
    typed = {s for s, p, o in triples if p == RDF_TYPE}
    as_object = {o for s, p, o in triples}
    qualifying = sorted(typed & as_object)
    return _mean([len({p for s, p, o in triples if o == z}) for z in qualifying])


def oracle_avg_subj_nontype(triples) -> float:
    objects = sorted({o for s, p, o in triples if p != RDF_TYPE})
    return _mean(
        [len({s for s, p, o in triples if o == z and p != RDF_TYPE}) for z in objects]
    )


def oracle_avg_instances(triples) -> float:
    classes = sorted({o for s, p, o in triples if p == RDF_TYPE})
    return _mean(
        [len({s for s, p, o in triples if o == z and p == RDF_TYPE}) for z in classes]
    )


def oracle_avg_objects(triples) -> float:
    subjects = sorted({s for s, p, o in triples})
    return _mean([len({o for s, p, o in triples if s == x}) for x in subjects])


def oracle_pred_object_avg(triples, predicate) -> float:
    subjects = sorted({s for s, p, o in triples if p == predicate})
    return _mean(
        [len({o for s, p, o in triples if s == x and p == predicate}) for x in subjects]
    )


def oracle_pred_subject_avg(triples, predicate) -> float:
    objects = sorted({o for s, p, o in triples if p == predicate})
    return _mean(
        [len({s for s, p, o in triples if o == z and p == predicate}) for z in objects]
    )


def random_dump(rng: random.Random, max_triples: int = 500) -> list[tuple[str, str, str]]:
    """A random small dump mixing typed entities, plain links and literals."""
    n_subjects = rng.randint(1, 25)
    n_predicates = rng.randint(1, 6)
    n_classes = rng.randint(1, 4)
    subjects = [f"{EX}s{i}" for i in range(n_subjects)]
    predicates = [f"{EX}q{i}" for i in range(n_predicates)]
    classes = [f"{EX}C{i}" for i in range(n_classes)]
    literals = [f'"value {i}"' for i in range(5)]
    triples: set[tuple[str, str, str]] = set()
    for _ in range(rng.randint(1, max_triples)):
        kind = rng.random()
        s = rng.choice(subjects)
        if kind < 0.2:
            triples.add((s, RDF_TYPE, rng.choice(classes)))
        elif kind < 0.8:
            triples.add((s, rng.choice(predicates), rng.choice(subjects)))
        else:
            triples.add((s, rng.choice(predicates), rng.choice(literals)))
    return sorted(triples)


# --- random answerable queries ---------------------------------------------------

def random_answerable_query(rng: random.Random) -> str:
    """Generate an answerable query text with chains, stars and filters."""
    lines: list[str] = []
    bound: list[str] = []
    var_counter = 0

    def fresh() -> str:
        nonlocal var_counter
        var_counter += 1
        return f"v{var_counter}"

    # a constant start: either a seeded subject or a class membership
    if rng.random() < 0.5:
        v = fresh()
        lines.append(f"<{EX}seed{rng.randint(0, 3)}> <{EX}p{rng.randint(0, 5)}> ?{v} .")
        bound.append(v)
    else:
        v = fresh()
        lines.append(f"?{v} a <{EX}Class{rng.randint(0, 3)}> .")
        bound.append(v)

    for _ in range(rng.randint(1, 6)):
        anchor = rng.choice(bound)
        move = rng.random()
        if move < 0.35:  # chain forward
            w = fresh()
            lines.append(f"?{anchor} <{EX}p{rng.randint(0, 5)}> ?{w} .")
            bound.append(w)
        elif move < 0.5:  # chain backward (object anchored)
            w = fresh()
            lines.append(f"?{w} <{EX}p{rng.randint(0, 5)}> ?{anchor} .")
            bound.append(w)
        elif move < 0.7:  # star check with a dangling variable
            w = fresh()
            lines.append(f"?{anchor} <{EX}q{rng.randint(0, 5)}> ?{w} .")
        elif move < 0.85:  # pure constant check
            lines.append(f"?{anchor} <{EX}q{rng.randint(0, 5)}> <{EX}thing{rng.randint(0, 5)}> .")
        else:  # variable predicate hop
            w, pv = fresh(), fresh()
            lines.append(f"?{anchor} ?{pv} ?{w} .")
            bound.append(w)
            bound.append(pv)
        if rng.random() < 0.3:
            lines.append(f"FILTER(year(?{rng.choice(bound)}) > {rng.randint(1900, 2000)})")

    return "SELECT * WHERE {\n  " + "\n  ".join(lines) + "\n}"


def random_catalog(rng: random.Random) -> StatsCatalog:
    per = {}
    for i in range(6):
        for letter in ("p", "q"):
            iri = f"{EX}{letter}{i}"
            per[iri] = PredicateStats(
                predicate=iri,
                avg_subject_bindings=round(rng.uniform(0.0, 2000.0), 3),
                avg_object_bindings=round(rng.uniform(0.0, 60.0), 3),
            )
    global_stats = GlobalStats(
        avg_outgoing_props=round(rng.uniform(1.0, 40.0), 3),
        avg_incoming_props=round(rng.uniform(1.0, 10.0), 3),
        avg_subj_bindings_nontype=round(rng.uniform(1.0, 2000.0), 3),
        avg_instances_per_class=round(rng.uniform(1.0, 1000.0), 3),
        avg_obj_bindings=round(rng.uniform(1.0, 5.0), 3),
    )
    return StatsCatalog(global_stats=global_stats, per_predicate=per)


# --- canned SPARQL-protocol endpoint ----------------------------------------------

class _EndpointHandler(BaseHTTPRequestHandler):
    def do_GET(self):
        try:
            self._respond()
        except (BrokenPipeError, ConnectionResetError):
            pass  # client gave up (timeout simulation)

    def _respond(self):
        params = parse_qs(urlparse(self.path).query)
        query = params.get("query", [""])[0]
        behavior = self.server.responses.get(query, None)  # type: ignore[attr-defined]
        if behavior == "timeout":
            time.sleep(2.0)
            behavior = None
        if behavior == "garbage":
            self.send_response(200)
            self.send_header("Content-Type", "application/sparql-results+json")
            self.end_headers()
            self.wfile.write(b"this is not json")
            return
        bindings = []
        if isinstance(behavior, (int, float)):
            bindings = [{"average": {"type": "literal", "value": str(behavior)}}]
        payload = json.dumps(
            {"head": {"vars": ["average"]}, "results": {"bindings": bindings}}
        ).encode()
        self.send_response(200)
        self.send_header("Content-Type", "application/sparql-results+json")
        self.end_headers()
        self.wfile.write(payload)

    def log_message(self, *args):
        pass


class FixtureEndpoint:
    """A local SPARQL endpoint serving canned averages per query text."""

    def __init__(self, responses: dict[str, object]):
        self.responses = responses
        self.server = None
        self.thread = None

    def __enter__(self) -> str:
        self.server = ThreadingHTTPServer(("127.0.0.1", 0), _EndpointHandler)
        self.server.responses = self.responses  # type: ignore[attr-defined]
        self.thread = threading.Thread(target=self.server.serve_forever, daemon=True)
        self.thread.start()
        return f"http://127.0.0.1:{self.server.server_address[1]}/sparql"

    def __exit__(self, *exc):
        self.server.shutdown()
        self.server.server_close()
        self.thread.join(timeout=5)


class _DocHandler(BaseHTTPRequestHandler):
    def do_GET(self):
        documents = self.server.documents  # type: ignore[attr-defined]
        self.server.requests.append((self.path, self.headers.get("Accept", "")))  # type: ignore[attr-defined]
        doc = documents.get(self.path)
        if doc is None:
            self.send_response(404)
            self.end_headers()
            return
        payload = doc.encode()
        self.send_response(200)
        self.send_header("Content-Type", "text/turtle")
        self.end_headers()
        self.wfile.write(payload)

    def log_message(self, *args):
        pass


class DocServer:
    """Serves RDF documents over HTTP for http-mode store tests."""

    def __init__(self, documents: dict[str, str]):
        self.documents = documents
        self.requests: list[tuple[str, str]] = []
        self.server = None
        self.thread = None

    def __enter__(self) -> str:
        self.server = ThreadingHTTPServer(("127.0.0.1", 0), _DocHandler)
        self.server.documents = self.documents  # type: ignore[attr-defined]
        self.server.requests = self.requests  # type: ignore[attr-defined]
        self.thread = threading.Thread(target=self.server.serve_forever, daemon=True)
        self.thread.start()
        return f"http://127.0.0.1:{self.server.server_address[1]}"

    def __exit__(self, *exc):
        self.server.shutdown()
        self.server.server_close()
        self.thread.join(timeout=5)


# --- ground-truth dataset builder -------------------------------------------------

def write_ground_truth_entry(
    root: Path,
    name: str,
    query_text: str,
    real_cost: int,
    accessed: list[str] | None = None,
    executed_at: str = "2021-06-01T00:00:00Z",
) -> Path:
    entry = root / name
    entry.mkdir(parents=True, exist_ok=True)
    (entry / "query.rq").write_text(query_text, encoding="utf-8")
    (entry / "meta.json").write_text(
        json.dumps({"id": name, "real_cost": real_cost, "executed_at": executed_at}),
        encoding="utf-8",
    )
    if accessed is not None:
        (entry / "accessed.txt").write_text("\n".join(accessed) + "\n", encoding="utf-8")
    return entry
