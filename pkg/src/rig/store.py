"""SQLite persistence for finalized RIGs, plus structural diffing.

Schema (version 1). Identifier sets live in join tables; ordered text lists
(source files, runner arguments, evidence locations) are JSON arrays.

    meta(key PRIMARY KEY, value)
    repo(name, root_path, build_dir, output_dir, install_dir,
         configure_cmd, build_cmd, test_cmd, install_cmd)
    build(name, variant, build_type)
    components(id PRIMARY KEY, name, type, programming_language, output_path, source_files)
    aggregators(id PRIMARY KEY, name)
    runners(id PRIMARY KEY, name, arguments)
    tests(id PRIMARY KEY, name, framework, test_executable_component_id, source_files)
    external_packages(id PRIMARY KEY, name, package_manager_id)
    package_managers(id PRIMARY KEY, name, package_name)
    evidence(id PRIMARY KEY, locations)
    edges(src_id, relation, dst_id)       -- depends_on | args_node | test_component | tested_component
    node_evidence(node_id, evidence_id)
    component_packages(component_id, package_id)
"""

from __future__ import annotations

import json
import os
import sqlite3
import tempfile
from contextlib import closing
from dataclasses import dataclass, field
from pathlib import Path

from rig.model import (
    RIG,
    Aggregator,
    BuildSystemInfo,
    CallStack,
    Component,
    ComponentType,
    Evidence,
    ExternalPackage,
    FileLine,
    PackageManager,
    RepositoryInfo,
    RIGError,
    Runner,
    StateError,
    TestDefinition,
    collection_of,
)
from rig.validate import ValidationPolicy, finalize
from rig.view import IdAssignment, rendered_key

SCHEMA_VERSION = 1
SQLITE_MAGIC = b"SQLite format 3\x00"

_SCHEMA = """
CREATE TABLE meta (key TEXT PRIMARY KEY, value TEXT NOT NULL);
CREATE TABLE repo (
    name TEXT NOT NULL, root_path TEXT NOT NULL, build_dir TEXT NOT NULL,
    output_dir TEXT NOT NULL, install_dir TEXT NOT NULL, configure_cmd TEXT NOT NULL,
    build_cmd TEXT NOT NULL, test_cmd TEXT NOT NULL, install_cmd TEXT NOT NULL
);
CREATE TABLE build (name TEXT NOT NULL, variant TEXT, build_type TEXT);
CREATE TABLE components (
    id TEXT PRIMARY KEY, name TEXT NOT NULL, type TEXT NOT NULL,
    programming_language TEXT NOT NULL, output_path TEXT NOT NULL, source_files TEXT NOT NULL
);
CREATE TABLE aggregators (id TEXT PRIMARY KEY, name TEXT NOT NULL);
CREATE TABLE runners (id TEXT PRIMARY KEY, name TEXT NOT NULL, arguments TEXT NOT NULL);
CREATE TABLE tests (
    id TEXT PRIMARY KEY, name TEXT NOT NULL, framework TEXT NOT NULL,
    test_executable_component_id TEXT, source_files TEXT NOT NULL
);
CREATE TABLE external_packages (id TEXT PRIMARY KEY, name TEXT NOT NULL, package_manager_id TEXT);
CREATE TABLE package_managers (id TEXT PRIMARY KEY, name TEXT NOT NULL, package_name TEXT NOT NULL);
CREATE TABLE evidence (id TEXT PRIMARY KEY, locations TEXT NOT NULL);
CREATE TABLE edges (src_id TEXT NOT NULL, relation TEXT NOT NULL, dst_id TEXT NOT NULL,
                    PRIMARY KEY (src_id, relation, dst_id));
CREATE TABLE node_evidence (node_id TEXT NOT NULL, evidence_id TEXT NOT NULL,
                            PRIMARY KEY (node_id, evidence_id));
CREATE TABLE component_packages (component_id TEXT NOT NULL, package_id TEXT NOT NULL,
                                  PRIMARY KEY (component_id, package_id));
"""

_RELATIONS = {
    "depends_on": "depends_on_ids",
    "args_node": "args_nodes_ids",
    "test_component": "test_components_ids",
    "tested_component": "components_being_tested_ids",
}


class StoreError(RIGError):
    pass


class StoreIOError(StoreError, OSError):
    def __init__(self, path, message: str):
        super().__init__(f"{path}: {message}")
        self.path = str(path)


class SchemaVersionError(StoreError):
    def __init__(self, found, supported: int = SCHEMA_VERSION):
        super().__init__(f"store schema version {found} is not supported (expected {supported})")
        self.found = found


class LoadError(StoreError):
    def __init__(self, table: str, row, message: str):
        super().__init__(f"{table} row {row}: {message}")
        self.table = table
        self.row = row


# save ------------------------------------------------------------------------

def _location_json(loc) -> str | list[str]:
    if isinstance(loc, FileLine):
        return str(loc)
    return [str(f) for f in loc.frames]


def _write(conn: sqlite3.Connection, rig: RIG) -> None:
    conn.executescript(_SCHEMA)
    policy = rig.policy or ValidationPolicy()
    meta = {
        "schema_version": str(SCHEMA_VERSION),
        "require_acyclic": str(int(policy.require_acyclic)),
        "lenient_sources": str(int(policy.lenient_sources)),
    }
    if rig.root is not None:
        meta["source_root"] = rig.root
    conn.executemany("INSERT INTO meta VALUES (?, ?)", sorted(meta.items()))
    r = rig.repo
    conn.execute(
        "INSERT INTO repo VALUES (?,?,?,?,?,?,?,?,?)",
        (r.name, r.root_path, r.build_dir, r.output_dir, r.install_dir,
         r.configure_cmd, r.build_cmd, r.test_cmd, r.install_cmd),
    )
    conn.execute("INSERT INTO build VALUES (?,?,?)", (rig.build.name, rig.build.variant, rig.build.build_type))

    def dump(items) -> str:
        return json.dumps(list(items), ensure_ascii=False)

    conn.executemany("INSERT INTO components VALUES (?,?,?,?,?,?)", [
        (c.id, c.name, c.type.value, c.programming_language, c.output_path, dump(c.source_files))
        for c in rig.components.values()
    ])
    conn.executemany("INSERT INTO aggregators VALUES (?,?)", [(a.id, a.name) for a in rig.aggregators.values()])
    conn.executemany("INSERT INTO runners VALUES (?,?,?)", [
        (r.id, r.name, dump(r.arguments)) for r in rig.runners.values()
    ])
    conn.executemany("INSERT INTO tests VALUES (?,?,?,?,?)", [
        (t.id, t.name, t.framework, t.test_executable_component_id, dump(t.source_files))
        for t in rig.tests.values()
    ])
    conn.executemany("INSERT INTO external_packages VALUES (?,?,?)", [
        (p.id, p.name, p.package_manager_id) for p in rig.external_packages.values()
    ])
    conn.executemany("INSERT INTO package_managers VALUES (?,?,?)", [
        (m.id, m.name, m.package_name) for m in rig.package_managers.values()
    ])
    conn.executemany("INSERT INTO evidence VALUES (?,?)", [
        (e.id, dump(_location_json(loc) for loc in e.locations)) for e in rig.evidence.values()
    ])
    edges, node_ev = [], []
    for node in rig.nodes():
        for relation, attr in _RELATIONS.items():
            edges += [(node.id, relation, dst) for dst in sorted(getattr(node, attr, ()))]
        node_ev += [(node.id, e) for e in sorted(node.evidence_ids)]
    conn.executemany("INSERT INTO edges VALUES (?,?,?)", edges)
    conn.executemany("INSERT INTO node_evidence VALUES (?,?)", node_ev)
    conn.executemany("INSERT INTO component_packages VALUES (?,?)", [
        (c.id, p) for c in rig.components.values() for p in sorted(c.external_packages_ids)
    ])


def save(rig: RIG, path: str | Path) -> None:
    """Write ``rig`` to ``path`` atomically (temp file in the same directory, then rename)."""
    if not rig.finalized:
        raise StateError("only finalized graphs can be saved")
    path = Path(path)
    try:
        fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", suffix=".tmp", dir=path.parent)
    except OSError as exc:
        raise StoreIOError(path, exc.strerror or str(exc)) from exc
    os.close(fd)
    try:
        with closing(sqlite3.connect(tmp)) as conn:
            with conn:
                _write(conn, rig)
        os.replace(tmp, path)
    except BaseException as exc:
        try:
            os.unlink(tmp)
        except FileNotFoundError:
            pass
        if isinstance(exc, (OSError, sqlite3.Error)):
            raise StoreIOError(path, str(exc)) from exc
        raise


# load ------------------------------------------------------------------------

def _rows(conn: sqlite3.Connection, table: str):
    try:
        return conn.execute(f"SELECT rowid, * FROM {table} ORDER BY rowid").fetchall()
    except sqlite3.Error as exc:
        raise LoadError(table, "-", f"unreadable table ({exc})") from exc


def _json_list(table: str, rowid, column: str, text) -> list:
    try:
        value = json.loads(text)
    except (TypeError, ValueError):
        raise LoadError(table, rowid, f"column {column} is not a JSON array") from None
    if not isinstance(value, list):
        raise LoadError(table, rowid, f"column {column} is not a JSON array")
    return value


def _parse_location(table: str, rowid, item):
    try:
        if isinstance(item, str):
            return FileLine.parse(item)
        if isinstance(item, list) and all(isinstance(f, str) for f in item):
            return CallStack(tuple(FileLine.parse(f) for f in item))
    except ValueError as exc:
        raise LoadError(table, rowid, str(exc)) from None
    raise LoadError(table, rowid, f"bad location {item!r}")


def read(path: str | Path) -> RIG:
    """Reconstruct the stored graph without validating it (not finalized)."""
    path = Path(path)
    try:
        with open(path, "rb") as fh:
            head = fh.read(len(SQLITE_MAGIC))
    except OSError as exc:
        raise StoreIOError(path, exc.strerror or str(exc)) from exc
    if head != SQLITE_MAGIC:
        raise StoreIOError(path, "not a graph store (SQLite header missing)")
    uri = f"{path.resolve().as_uri()}?mode=ro"
    try:
        conn = sqlite3.connect(uri, uri=True)
    except sqlite3.Error as exc:
        raise StoreIOError(path, str(exc)) from exc
    with closing(conn):
        rig = _read(conn)
    return rig


def _read(conn: sqlite3.Connection) -> RIG:
    meta = {k: v for _, k, v in _rows(conn, "meta")}
    version = meta.get("schema_version")
    if version is None:
        raise LoadError("meta", "schema_version", "missing schema version")
    try:
        number = int(version)
    except ValueError:
        raise LoadError("meta", "schema_version", f"not an integer: {version!r}") from None
    if number != SCHEMA_VERSION:
        raise SchemaVersionError(number)

    def one(table: str) -> tuple:
        rows = _rows(conn, table)
        if len(rows) != 1:
            raise LoadError(table, "-", f"expected exactly one row, found {len(rows)}")
        return rows[0]

    repo_row, build_row = one("repo"), one("build")
    try:
        rig = RIG(RepositoryInfo(*repo_row[1:]), BuildSystemInfo(*build_row[1:]))
    except (RIGError, TypeError) as exc:
        raise LoadError("repo", repo_row[0], str(exc)) from None

    def guarded(table: str, rowid, fn, *args):
        try:
            return fn(*args)
        except (RIGError, ValueError, TypeError) as exc:
            raise LoadError(table, rowid, str(exc)) from None

    for rowid, pid, name, pkg_name in _rows(conn, "package_managers"):
        guarded("package_managers", rowid, rig.add_package_manager, PackageManager(pid, name, pkg_name))
    for rowid, pid, name, pm_id in _rows(conn, "external_packages"):
        guarded("external_packages", rowid, rig.add_package, ExternalPackage(pid, name, pm_id))
    for rowid, eid, locations in _rows(conn, "evidence"):
        locs = [_parse_location("evidence", rowid, item) for item in _json_list("evidence", rowid, "locations", locations)]
        guarded("evidence", rowid, rig.add_evidence, Evidence(eid, locs))

    rels: dict[str, dict[str, set[str]]] = {}
    for rowid, src, relation, dst in _rows(conn, "edges"):
        if relation not in _RELATIONS:
            raise LoadError("edges", rowid, f"unknown relation {relation!r}")
        rels.setdefault(src, {}).setdefault(relation, set()).add(dst)
    node_ev: dict[str, set[str]] = {}
    for _, nid, eid in _rows(conn, "node_evidence"):
        node_ev.setdefault(nid, set()).add(eid)
    comp_pkgs: dict[str, set[str]] = {}
    for _, cid, pid in _rows(conn, "component_packages"):
        comp_pkgs.setdefault(cid, set()).add(pid)

    def common(nid: str) -> dict:
        return {
            "depends_on_ids": set(rels.get(nid, {}).get("depends_on", ())),
            "evidence_ids": set(node_ev.get(nid, ())),
        }

    def rel(nid: str, relation: str) -> set[str]:
        return set(rels.get(nid, {}).get(relation, ()))

    for rowid, cid, name, ctype, lang, output, sources in _rows(conn, "components"):
        srcs = _json_list("components", rowid, "source_files", sources)
        node = guarded("components", rowid, lambda: Component(
            id=cid, name=name, type=ComponentType(ctype), programming_language=lang,
            output_path=output, source_files=srcs, external_packages_ids=set(comp_pkgs.get(cid, ())),
            **common(cid),
        ))
        guarded("components", rowid, rig.add_node, node)
    for rowid, aid, name in _rows(conn, "aggregators"):
        guarded("aggregators", rowid, rig.add_node, Aggregator(id=aid, name=name, **common(aid)))
    for rowid, rid, name, arguments in _rows(conn, "runners"):
        args = _json_list("runners", rowid, "arguments", arguments)
        guarded("runners", rowid, rig.add_node, Runner(
            id=rid, name=name, arguments=args, args_nodes_ids=rel(rid, "args_node"), **common(rid),
        ))
    for rowid, tid, name, framework, exe, sources in _rows(conn, "tests"):
        srcs = _json_list("tests", rowid, "source_files", sources)
        guarded("tests", rowid, rig.add_node, TestDefinition(
            id=tid, name=name, framework=framework, test_executable_component_id=exe,
            test_components_ids=rel(tid, "test_component"),
            components_being_tested_ids=rel(tid, "tested_component"),
            source_files=srcs, **common(tid),
        ))
    rig.policy = ValidationPolicy(
        require_acyclic=meta.get("require_acyclic", "1") != "0",
        lenient_sources=meta.get("lenient_sources", "0") == "1",
    )
    rig.root = meta.get("source_root")
    return rig


def load(path: str | Path, root: str | Path | None = None) -> RIG:
    """Read, re-validate (fail-fast), and hydrate a stored graph.

    ``root`` overrides the source root recorded at save time.
    """
    rig = read(path)
    finalize(rig, rig.policy, root if root is not None else rig.root)
    return rig.hydrate()


# diff ------------------------------------------------------------------------

def _fields(item) -> dict:
    """Serialized non-relational fields of an entity, for change detection."""
    if isinstance(item, Evidence):
        return {"locations": [_location_json(loc) for loc in item.locations]}
    if isinstance(item, PackageManager):
        return {"name": item.name, "package_name": item.package_name}
    if isinstance(item, ExternalPackage):
        return {"name": item.name}
    out = {"name": item.name}
    if isinstance(item, Component):
        out.update(type=item.type.value, programming_language=item.programming_language,
                   output_path=item.output_path, source_files=list(item.source_files))
    elif isinstance(item, Runner):
        out["arguments"] = list(item.arguments)
    elif isinstance(item, TestDefinition):
        out.update(framework=item.framework, source_files=list(item.source_files))
    return out


_TEST_RELATIONS = {"test_executable", "test_component", "tested_component"}


@dataclass(frozen=True)
class Edge:
    src: str
    relation: str
    dst: str

    def __str__(self) -> str:
        return f"{self.src} -{self.relation}-> {self.dst}"


@dataclass
class DiffReport:
    """Entries are rendered ids (of the graph the entity lives in)."""

    added: dict[str, list[str]] = field(default_factory=dict)
    removed: dict[str, list[str]] = field(default_factory=dict)
    changed: dict[str, list[str]] = field(default_factory=dict)
    edges_added: list[Edge] = field(default_factory=list)
    edges_removed: list[Edge] = field(default_factory=list)

    @property
    def dependency_deltas(self) -> dict[str, list[Edge]]:
        return {
            "added": [e for e in self.edges_added if e.relation == "depends_on"],
            "removed": [e for e in self.edges_removed if e.relation == "depends_on"],
        }

    @property
    def test_deltas(self) -> dict[str, list]:
        return {
            "added": self.added.get("tests", []) + [e for e in self.edges_added if e.relation in _TEST_RELATIONS],
            "removed": self.removed.get("tests", [])
            + [e for e in self.edges_removed if e.relation in _TEST_RELATIONS],
        }

    def is_empty(self) -> bool:
        return not (
            any(self.added.values()) or any(self.removed.values()) or any(self.changed.values())
            or self.edges_added or self.edges_removed
        )

    def to_dict(self) -> dict:
        def edges(items):
            return [{"src": e.src, "relation": e.relation, "dst": e.dst} for e in items]

        return {
            "added": self.added,
            "removed": self.removed,
            "changed": self.changed,
            "edges_added": edges(self.edges_added),
            "edges_removed": edges(self.edges_removed),
            "dependency_deltas": {k: edges(v) for k, v in self.dependency_deltas.items()},
            "test_deltas": {k: [x if isinstance(x, str) else str(x) for x in v] for k, v in self.test_deltas.items()},
        }

    def lines(self) -> list[str]:
        out = []
        for collection in RIG.COLLECTIONS:
            out += [f"+ {collection} {rid}" for rid in self.added.get(collection, [])]
            out += [f"- {collection} {rid}" for rid in self.removed.get(collection, [])]
            out += [f"~ {collection} {rid}" for rid in self.changed.get(collection, [])]
        out += [f"+ edge {e}" for e in self.edges_added]
        out += [f"- edge {e}" for e in self.edges_removed]
        return out


class _Identity:
    """Content keys that match entities across graphs whose internal ids differ.

    Nodes are keyed by kind and name, packages and managers by their
    fields, evidence by its locations; repeated keys are numbered in
    rendered-id order.
    """

    def __init__(self, rig: RIG):
        self.ids = IdAssignment(rig)
        self.key: dict[tuple[str, str], tuple] = {}  # (collection, internal id) -> key
        self.items: dict[tuple, tuple[str, object]] = {}  # key -> (rendered id, item)
        for collection in RIG.COLLECTIONS:
            table = getattr(rig, collection)
            seen: dict[tuple, int] = {}
            for item in sorted(table.values(), key=lambda i: rendered_key(self.ids.get(collection, i.id))):
                base = (collection, *self._content(rig, item))
                n = seen.get(base, 0)
                seen[base] = n + 1
                key = (*base, n)
                self.key[(collection, item.id)] = key
                self.items[key] = (self.ids.get(collection, item.id), item)
        self.node_collection = {n.id: collection_of(n) for n in rig.nodes()}

    @staticmethod
    def _content(rig: RIG, item) -> tuple:
        if isinstance(item, Evidence):
            return (json.dumps([_location_json(loc) for loc in item.locations]),)
        if isinstance(item, PackageManager):
            return (item.name, item.package_name)
        if isinstance(item, ExternalPackage):
            pm = rig.package_managers.get(item.package_manager_id or "")
            return (item.name, pm.name if pm else "", pm.package_name if pm else "")
        return (item.name,)

    def edges(self, rig: RIG) -> dict[tuple, Edge]:
        out = {}

        def add(src_coll, src, relation, dst_coll, dst):
            a, b = self.key[(src_coll, src)], self.key[(dst_coll, dst)]
            out[(a, relation, b)] = Edge(self.items[a][0], relation, self.items[b][0])

        for node in rig.nodes():
            coll = collection_of(node)
            for relation, attr in _RELATIONS.items():
                for dst in getattr(node, attr, ()):
                    add(coll, node.id, relation, self.node_collection[dst], dst)
            for e in node.evidence_ids:
                add(coll, node.id, "evidence", "evidence", e)
            if isinstance(node, TestDefinition) and node.test_executable_component_id:
                exe = node.test_executable_component_id
                add(coll, node.id, "test_executable", self.node_collection[exe], exe)
            if isinstance(node, Component):
                for p in node.external_packages_ids:
                    add(coll, node.id, "external_package", "external_packages", p)
        for pkg in rig.external_packages.values():
            if pkg.package_manager_id:
                add("external_packages", pkg.id, "package_manager", "package_managers", pkg.package_manager_id)
        return out


def diff(a: RIG, b: RIG) -> DiffReport:
    """Structural difference from ``a`` to ``b``, reported with rendered ids."""
    if not (a.finalized and b.finalized):
        raise StateError("diff requires finalized graphs")
    ia, ib = _Identity(a), _Identity(b)
    report = DiffReport()
    for collection in RIG.COLLECTIONS:
        ka = {k for k in ia.items if k[0] == collection}
        kb = {k for k in ib.items if k[0] == collection}
        report.added[collection] = sorted((ib.items[k][0] for k in kb - ka), key=rendered_key)
        report.removed[collection] = sorted((ia.items[k][0] for k in ka - kb), key=rendered_key)
        report.changed[collection] = sorted(
            (ib.items[k][0] for k in ka & kb if _fields(ia.items[k][1]) != _fields(ib.items[k][1])),
            key=rendered_key,
        )

    def order(e: Edge):
        return (rendered_key(e.src), e.relation, rendered_key(e.dst))

    ea, eb = ia.edges(a), ib.edges(b)
    report.edges_added = sorted((eb[k] for k in eb.keys() - ea.keys()), key=order)
    report.edges_removed = sorted((ea[k] for k in ea.keys() - eb.keys()), key=order)
    return report
