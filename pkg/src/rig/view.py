"""Flat JSON view of a RIG with short, stable identifiers.

The pydantic models below are the closed schema of the document; rendering
builds them, and :mod:`rig.authoring` validates incoming documents against
the same models.
"""

from __future__ import annotations

import heapq
import json
import re
from dataclasses import dataclass
from typing import Annotated, Literal, Optional, Union

from pydantic import BaseModel, ConfigDict, Field, StringConstraints

from rig.model import (
    NODE_COLLECTIONS,
    RIG,
    ComponentType,
    FileLine,
    StateError,
    collection_of,
)

PREFIXES = {
    "components": "comp",
    "aggregators": "agg",
    "runners": "run",
    "tests": "test",
    "external_packages": "pkg",
    "package_managers": "pm",
    "evidence": "evidence",
}
_PREFIX_RANK = {p: i for i, p in enumerate(PREFIXES.values())}
_KIND_RANK = {c: i for i, c in enumerate(NODE_COLLECTIONS)}


def _id_pattern(*prefixes: str) -> str:
    return r"^(?:" + "|".join(prefixes) + r")-[1-9][0-9]*$"


def _ident(*prefixes: str):
    return Annotated[str, StringConstraints(pattern=_id_pattern(*prefixes))]


CompId = _ident("comp")
AggId = _ident("agg")
RunId = _ident("run")
TestId = _ident("test")
PkgId = _ident("pkg")
PmId = _ident("pm")
EvidenceId = _ident("evidence")
NodeId = _ident("comp", "agg", "run", "test")
ExecutableId = _ident("comp", "run")
NonEmpty = Annotated[str, StringConstraints(min_length=1)]
FileLineText = Annotated[str, StringConstraints(pattern=r"^.+:[1-9][0-9]*$")]
LanguageTag = Annotated[str, StringConstraints(pattern=r"^(?:UNKNOWN|[a-z0-9][a-z0-9_+#.-]*)$")]


class _Closed(BaseModel):
    model_config = ConfigDict(extra="forbid", strict=True)


class RepoView(_Closed):
    name: NonEmpty
    root_path: str
    build_dir: str
    output_dir: str
    install_dir: str
    configure_cmd: str
    build_cmd: str
    test_cmd: str
    install_cmd: str


class BuildView(_Closed):
    name: Annotated[str, StringConstraints(pattern=r"^[^A-Z]+$")]
    variant: Optional[str]
    build_type: Optional[str]


class ComponentView(_Closed):
    id: CompId
    name: NonEmpty
    type: Literal[tuple(t.value for t in ComponentType)]  # type: ignore[valid-type]
    programming_language: LanguageTag
    output_path: str
    source_files: list[str]
    depends_on_ids: list[NodeId]
    external_packages_ids: list[PkgId]
    evidence_ids: list[EvidenceId]


class AggregatorView(_Closed):
    id: AggId
    name: NonEmpty
    depends_on_ids: list[NodeId]
    evidence_ids: list[EvidenceId]


class RunnerView(_Closed):
    id: RunId
    name: NonEmpty
    arguments: list[str]
    args_nodes_ids: list[NodeId]
    depends_on_ids: list[NodeId]
    evidence_ids: list[EvidenceId]


class TestView(_Closed):
    __test__ = False

    id: TestId
    name: NonEmpty
    framework: str
    test_executable_component_id: Optional[ExecutableId]
    test_components_ids: list[CompId]
    components_being_tested_ids: list[CompId]
    source_files: list[str]
    depends_on_ids: list[NodeId]
    evidence_ids: list[EvidenceId]


class PackageView(_Closed):
    id: PkgId
    name: NonEmpty
    package_manager_id: Optional[PmId]


class PackageManagerView(_Closed):
    id: PmId
    name: NonEmpty
    package_name: NonEmpty


class CallStackView(_Closed):
    call_stack: list[FileLineText]


class EvidenceView(_Closed):
    id: EvidenceId
    locations: list[Union[FileLineText, CallStackView]] = Field(min_length=1)


class ViewDocument(_Closed):
    repo: RepoView
    build: BuildView
    components: list[ComponentView]
    aggregators: list[AggregatorView]
    runners: list[RunnerView]
    tests: list[TestView]
    external_packages: list[PackageView]
    package_managers: list[PackageManagerView]
    evidence: list[EvidenceView]


VIEW_KEYS = tuple(ViewDocument.model_fields)


# identifier assignment -------------------------------------------------------

def natural_key(ident: str) -> tuple:
    """Sort key that orders ``comp-2`` before ``comp-10``."""
    return tuple(
        (0, "", int(chunk)) if chunk.isdigit() else (1, chunk, 0)
        for chunk in re.split(r"(\d+)", ident)
        if chunk
    )


def rendered_key(rid: str) -> tuple[int, int]:
    prefix, _, num = rid.rpartition("-")
    return _PREFIX_RANK[prefix], int(num)


def _location_key(loc) -> tuple:
    if isinstance(loc, FileLine):
        return (0, loc.path, loc.line, ())
    return (1, "", 0, tuple((f.path, f.line) for f in loc.frames))


class IdAssignment:
    """Internal id -> rendered id, per collection.

    Ordinals depend only on graph content: nodes are numbered in a
    dependency-first topological order whose ready-set ties are broken by
    (name, kind, id); auxiliary collections are sorted by content.
    """

    def __init__(self, rig: RIG):
        self.forward: dict[str, dict[str, str]] = {c: {} for c in PREFIXES}
        self.backward: dict[str, tuple[str, str]] = {}
        for node in _node_order(rig):
            self._assign(collection_of(node), node.id)

        def pm_key(pm):
            return (pm.name, pm.package_name, natural_key(pm.id))

        def pkg_key(pkg):
            pm = rig.package_managers.get(pkg.package_manager_id or "")
            pm_part = (pm.name, pm.package_name) if pm else ("", "")
            return (pkg.name, pm_part, natural_key(pkg.id))

        def ev_key(ev):
            return (tuple(_location_key(loc) for loc in ev.locations), natural_key(ev.id))

        for pkg in sorted(rig.external_packages.values(), key=pkg_key):
            self._assign("external_packages", pkg.id)
        for pm in sorted(rig.package_managers.values(), key=pm_key):
            self._assign("package_managers", pm.id)
        for ev in sorted(rig.evidence.values(), key=ev_key):
            self._assign("evidence", ev.id)

    def _assign(self, collection: str, ident: str) -> None:
        table = self.forward[collection]
        rid = f"{PREFIXES[collection]}-{len(table) + 1}"
        table[ident] = rid
        self.backward[rid] = (collection, ident)

    def node(self, ident: str) -> str:
        for collection in NODE_COLLECTIONS:
            rid = self.forward[collection].get(ident)
            if rid is not None:
                return rid
        raise KeyError(ident)

    def get(self, collection: str, ident: str) -> str:
        return self.forward[collection][ident]

    def internal(self, rid: str) -> tuple[str, str]:
        return self.backward[rid]


def _node_order(rig: RIG) -> list:
    nodes = {n.id: n for n in rig.nodes()}

    def key(n):
        return (n.name, _KIND_RANK[collection_of(n)], natural_key(n.id))

    pending = {nid: {d for d in n.depends_on_ids if d in nodes and d != nid} for nid, n in nodes.items()}
    dependents: dict[str, list[str]] = {nid: [] for nid in nodes}
    for nid, deps in pending.items():
        for d in deps:
            dependents[d].append(nid)
    ready = [(key(nodes[nid]), nid) for nid, deps in pending.items() if not deps]
    heapq.heapify(ready)
    order = []
    done: set[str] = set()
    while len(order) < len(nodes):
        if not ready:
            # only reachable when cycles were allowed through validation
            stuck = min((key(nodes[nid]), nid) for nid in nodes if nid not in done)
            heapq.heappush(ready, stuck)
            pending[stuck[1]] = set()
        _, nid = heapq.heappop(ready)
        if nid in done:
            continue
        done.add(nid)
        order.append(nodes[nid])
        for dep in dependents[nid]:
            waiting = pending[dep]
            if nid in waiting:
                waiting.discard(nid)
                if not waiting and dep not in done:
                    heapq.heappush(ready, (key(nodes[dep]), dep))
    return order


# rendering -------------------------------------------------------------------

def _render_location(loc) -> str | dict:
    if isinstance(loc, FileLine):
        return str(loc)
    return {"call_stack": [str(f) for f in loc.frames]}


def view_document(rig: RIG, ids: IdAssignment | None = None) -> ViewDocument:
    """Build the (validated) view model for a finalized graph."""
    if not rig.finalized:
        raise StateError("render_view requires a finalized graph")
    ids = ids or IdAssignment(rig)

    def refs(collection: str, idents) -> list[str]:
        return sorted((ids.get(collection, i) for i in idents), key=rendered_key)

    def node_refs(idents) -> list[str]:
        return sorted((ids.node(i) for i in idents), key=rendered_key)

    def ordered(collection: str):
        table = getattr(rig, collection)
        return sorted(table.values(), key=lambda item: rendered_key(ids.get(collection, item.id)))

    components = [
        ComponentView(
            id=ids.get("components", c.id),
            name=c.name,
            type=c.type.value,
            programming_language=c.programming_language,
            output_path=c.output_path,
            source_files=list(c.source_files),
            depends_on_ids=node_refs(c.depends_on_ids),
            external_packages_ids=refs("external_packages", c.external_packages_ids),
            evidence_ids=refs("evidence", c.evidence_ids),
        )
        for c in ordered("components")
    ]
    aggregators = [
        AggregatorView(
            id=ids.get("aggregators", a.id),
            name=a.name,
            depends_on_ids=node_refs(a.depends_on_ids),
            evidence_ids=refs("evidence", a.evidence_ids),
        )
        for a in ordered("aggregators")
    ]
    runners = [
        RunnerView(
            id=ids.get("runners", r.id),
            name=r.name,
            arguments=list(r.arguments),
            args_nodes_ids=node_refs(r.args_nodes_ids),
            depends_on_ids=node_refs(r.depends_on_ids),
            evidence_ids=refs("evidence", r.evidence_ids),
        )
        for r in ordered("runners")
    ]
    tests = [
        TestView(
            id=ids.get("tests", t.id),
            name=t.name,
            framework=t.framework,
            test_executable_component_id=(
                ids.node(t.test_executable_component_id) if t.test_executable_component_id else None
            ),
            test_components_ids=refs("components", t.test_components_ids),
            components_being_tested_ids=refs("components", t.components_being_tested_ids),
            source_files=list(t.source_files),
            depends_on_ids=node_refs(t.depends_on_ids),
            evidence_ids=refs("evidence", t.evidence_ids),
        )
        for t in ordered("tests")
    ]
    packages = [
        PackageView(
            id=ids.get("external_packages", p.id),
            name=p.name,
            package_manager_id=(
                ids.get("package_managers", p.package_manager_id) if p.package_manager_id else None
            ),
        )
        for p in ordered("external_packages")
    ]
    managers = [
        PackageManagerView(id=ids.get("package_managers", m.id), name=m.name, package_name=m.package_name)
        for m in ordered("package_managers")
    ]
    evidence = [
        EvidenceView(id=ids.get("evidence", e.id), locations=[_render_location(loc) for loc in e.locations])
        for e in ordered("evidence")
    ]
    repo = rig.repo
    return ViewDocument(
        repo=RepoView(
            name=repo.name,
            root_path=repo.root_path,
            build_dir=repo.build_dir,
            output_dir=repo.output_dir,
            install_dir=repo.install_dir,
            configure_cmd=repo.configure_cmd,
            build_cmd=repo.build_cmd,
            test_cmd=repo.test_cmd,
            install_cmd=repo.install_cmd,
        ),
        build=BuildView(name=rig.build.name, variant=rig.build.variant, build_type=rig.build.build_type),
        components=components,
        aggregators=aggregators,
        runners=runners,
        tests=tests,
        external_packages=packages,
        package_managers=managers,
        evidence=evidence,
    )


def dumps(doc: ViewDocument) -> str:
    return json.dumps(doc.model_dump(mode="json"), indent=2, ensure_ascii=False) + "\n"


def render_view(rig: RIG) -> str:
    """Canonical JSON text for a finalized graph; equal graphs render identically."""
    return dumps(view_document(rig))


@dataclass(frozen=True)
class SizeReport:
    bytes: int
    tokens: int

    def __str__(self) -> str:
        return f"bytes={self.bytes} tokens={self.tokens}"


def size_report(doc: bytes | str) -> SizeReport:
    """Byte length and the four-bytes-per-token estimate (floor)."""
    n = len(doc.encode("utf-8")) if isinstance(doc, str) else len(doc)
    return SizeReport(n, n // 4)

