"""In-memory RIG schema: entities, the top-level container, and hydration."""

from __future__ import annotations

import posixpath
import re
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterator, Union

UNKNOWN = "UNKNOWN"


class RIGError(Exception):
    """Base class for all errors raised by this package."""


class MetadataError(RIGError, ValueError):
    def __init__(self, field_name: str, message: str):
        super().__init__(message)
        self.field = field_name


class InvalidNodeError(RIGError, ValueError):
    pass


class DuplicateIdError(RIGError, KeyError):
    def __init__(self, collection: str, ident: str):
        super().__init__(f"duplicate id {ident!r} in {collection}")
        self.collection = collection
        self.id = ident

    def __str__(self) -> str:
        return self.args[0]


class StateError(RIGError, RuntimeError):
    """Operation not allowed in the graph's current (un)finalized state."""


class BrokenReferenceError(RIGError, LookupError):
    def __init__(self, node_id: str, ref: str, field_name: str):
        super().__init__(f"{node_id}: {field_name} references unknown id {ref!r}")
        self.node_id = node_id
        self.ref = ref
        self.field = field_name


class ComponentType(str, Enum):
    EXECUTABLE = "executable"
    STATIC_LIBRARY = "static_library"
    SHARED_LIBRARY = "shared_library"
    PACKAGE_LIBRARY = "package_library"
    VM = "vm"
    INTERPRETED = "interpreted"
    UNKNOWN = "unknown"


def canonical_path(path: str, root: str | None = None) -> str:
    """Forward slashes; absolute paths under ``root`` become root-relative."""
    text = str(path).replace("\\", "/")
    if root is not None and text.startswith("/"):
        base = str(root).replace("\\", "/").rstrip("/") or "/"
        norm = posixpath.normpath(text)
        if norm == base:
            return "."
        if norm.startswith(base + "/"):
            return norm[len(base) + 1:]
    return text


@dataclass(frozen=True)
class FileLine:
    path: str
    line: int

    def __post_init__(self) -> None:
        if not self.path:
            raise ValueError("file location needs a path")
        if isinstance(self.line, bool) or not isinstance(self.line, int) or self.line < 1:
            raise ValueError(f"line must be a positive integer, got {self.line!r}")

    def __str__(self) -> str:
        return f"{self.path}:{self.line}"

    @classmethod
    def parse(cls, text: str) -> FileLine:
        path, sep, line = text.rpartition(":")
        if not sep or not line.isdigit():
            raise ValueError(f"expected 'path:line', got {text!r}")
        return cls(path, int(line))


@dataclass(frozen=True)
class CallStack:
    frames: tuple[FileLine, ...]


Location = Union[FileLine, CallStack]


@dataclass
class Evidence:
    id: str
    locations: list[Location] = field(default_factory=list)


@dataclass
class RepositoryInfo:
    name: str
    root_path: str = "."
    build_dir: str = ""
    output_dir: str = ""
    install_dir: str = ""
    configure_cmd: str = ""
    build_cmd: str = ""
    test_cmd: str = ""
    install_cmd: str = ""


@dataclass
class BuildSystemInfo:
    name: str
    variant: str | None = None
    build_type: str | None = None


@dataclass
class PackageManager:
    id: str
    name: str
    package_name: str


@dataclass
class ExternalPackage:
    id: str
    name: str
    package_manager_id: str | None = None
    # attached object; registered by add_node, refilled by hydrate
    package_manager: PackageManager | None = field(default=None, compare=False, repr=False)


@dataclass(kw_only=True)
class RIGNode:
    id: str
    name: str
    depends_on_ids: set[str] = field(default_factory=set)
    evidence_ids: set[str] = field(default_factory=set)
    evidence: list[Evidence] = field(default_factory=list, compare=False, repr=False)

    kind = "node"


@dataclass(kw_only=True)
class Component(RIGNode):
    type: ComponentType = ComponentType.UNKNOWN
    programming_language: str = UNKNOWN
    output_path: str = ""
    source_files: list[str] = field(default_factory=list)
    external_packages_ids: set[str] = field(default_factory=set)
    external_packages: list[ExternalPackage] = field(default_factory=list, compare=False, repr=False)

    kind = "component"


@dataclass(kw_only=True)
class Aggregator(RIGNode):
    kind = "aggregator"


@dataclass(kw_only=True)
class Runner(RIGNode):
    arguments: list[str] = field(default_factory=list)
    args_nodes_ids: set[str] = field(default_factory=set)

    kind = "runner"


@dataclass(kw_only=True)
class TestDefinition(RIGNode):
    test_executable_component_id: str | None = None
    test_components_ids: set[str] = field(default_factory=set)
    components_being_tested_ids: set[str] = field(default_factory=set)
    source_files: list[str] = field(default_factory=list)
    framework: str = "ctest"
    test_executable_component: Component | Runner | None = field(default=None, compare=False, repr=False)
    test_components: list[Component] = field(default_factory=list, compare=False, repr=False)
    components_being_tested: list[Component] = field(default_factory=list, compare=False, repr=False)

    kind = "test"
    __test__ = False  # keep pytest from collecting this class


Node = Union[Component, Aggregator, Runner, TestDefinition]

NODE_COLLECTIONS = ("components", "aggregators", "runners", "tests")
_COLLECTION_OF = {
    Component: "components",
    Aggregator: "aggregators",
    Runner: "runners",
    TestDefinition: "tests",
}
_LANG_RE = re.compile(r"^[a-z0-9][a-z0-9_+#.-]*$")


def _check_node(node: Node) -> None:
    if not node.id:
        raise InvalidNodeError("node id must be non-empty")
    if not node.name:
        raise InvalidNodeError(f"{node.id}: node name must be non-empty")
    if isinstance(node, Component):
        if not isinstance(node.type, ComponentType):
            node.type = ComponentType(node.type)
        lang = node.programming_language
        if lang != UNKNOWN and not _LANG_RE.match(lang or ""):
            raise InvalidNodeError(
                f"{node.id}: programming_language must be a lowercase tag or {UNKNOWN}, got {lang!r}"
            )
        if node.type is ComponentType.INTERPRETED:
            if not node.source_files:
                raise InvalidNodeError(f"{node.id}: interpreted component needs source_files")
        elif not node.output_path:
            raise InvalidNodeError(f"{node.id}: {node.type.value} component needs an output_path")


class RIG:
    """Top-level container for one repository's graph.

    Nodes are registered with :meth:`add_node`; identifier references may
    dangle until :meth:`validate`/:meth:`finalize` checks them.
    """

    def __init__(self, repo: RepositoryInfo, build: BuildSystemInfo):
        if not repo.name:
            raise MetadataError("repo.name", "empty repository name")
        if not build.name:
            raise MetadataError("build.name", "empty build system name")
        if build.name != build.name.lower():
            raise MetadataError("build.name", f"build system name must be lowercase: {build.name!r}")
        self.repo = repo
        self.build = build
        self.components: dict[str, Component] = {}
        self.aggregators: dict[str, Aggregator] = {}
        self.runners: dict[str, Runner] = {}
        self.tests: dict[str, TestDefinition] = {}
        self.external_packages: dict[str, ExternalPackage] = {}
        self.package_managers: dict[str, PackageManager] = {}
        self.evidence: dict[str, Evidence] = {}
        self.finalized = False
        self.warnings: list = []
        # validation policy recorded at finalize time (see rig.validate)
        self.policy = None
        # absolute directory source files were checked against at finalize
        self.root: str | None = None

    def __repr__(self) -> str:
        return (
            f"RIG({self.repo.name!r}, components={len(self.components)}, "
            f"aggregators={len(self.aggregators)}, runners={len(self.runners)}, "
            f"tests={len(self.tests)}, finalized={self.finalized})"
        )

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, RIG):
            return NotImplemented
        return (
            self.repo == other.repo
            and self.build == other.build
            and all(getattr(self, c) == getattr(other, c) for c in self.COLLECTIONS)
        )

    __hash__ = None  # type: ignore[assignment]

    COLLECTIONS = NODE_COLLECTIONS + ("external_packages", "package_managers", "evidence")

    def _require_open(self) -> None:
        if self.finalized:
            raise StateError("graph is finalized; no further additions")

    def add_node(self, node: Node) -> str:
        self._require_open()
        collection = _COLLECTION_OF.get(type(node))
        if collection is None:
            raise TypeError(f"not a RIG node: {type(node).__name__}")
        _check_node(node)
        table = getattr(self, collection)
        if node.id in table:
            raise DuplicateIdError(collection, node.id)
        for ev in node.evidence:
            self.add_evidence(ev)
            node.evidence_ids.add(ev.id)
        if isinstance(node, Component):
            for pkg in node.external_packages:
                self.add_package(pkg)
                node.external_packages_ids.add(pkg.id)
        table[node.id] = node
        return node.id

    def add_evidence(self, ev: Evidence) -> str:
        self._require_open()
        return self._register("evidence", ev)

    def add_package(self, pkg: ExternalPackage) -> str:
        self._require_open()
        if not pkg.name:
            raise InvalidNodeError(f"{pkg.id}: package name must be non-empty")
        if pkg.package_manager is not None:
            self.add_package_manager(pkg.package_manager)
            pkg.package_manager_id = pkg.package_manager.id
        return self._register("external_packages", pkg)

    def add_package_manager(self, pm: PackageManager) -> str:
        self._require_open()
        if not pm.name or not pm.package_name:
            raise InvalidNodeError(f"{pm.id}: package manager needs name and package_name")
        return self._register("package_managers", pm)

    def _register(self, collection: str, item) -> str:
        table = getattr(self, collection)
        existing = table.get(item.id)
        if existing is None:
            table[item.id] = item
        elif existing is not item and existing != item:
            raise DuplicateIdError(collection, item.id)
        return item.id

    # lookup ---------------------------------------------------------------

    def nodes(self) -> Iterator[Node]:
        for collection in NODE_COLLECTIONS:
            yield from getattr(self, collection).values()

    def node(self, ident: str) -> Node | None:
        for collection in NODE_COLLECTIONS:
            found = getattr(self, collection).get(ident)
            if found is not None:
                return found
        return None

    def hydrate(self) -> RIG:
        return hydrate(self)

    def validate(self, **kwargs):
        from rig.validate import validate

        return validate(self, **kwargs)

    def finalize(self, **kwargs) -> RIG:
        from rig.validate import finalize

        return finalize(self, **kwargs)


def hydrate(rig: RIG) -> RIG:
    """Rebuild attached object references from identifier sets. Idempotent."""
    for pkg in rig.external_packages.values():
        if pkg.package_manager_id is None:
            pkg.package_manager = None
            continue
        pm = rig.package_managers.get(pkg.package_manager_id)
        if pm is None:
            raise BrokenReferenceError(pkg.id, pkg.package_manager_id, "package_manager_id")
        pkg.package_manager = pm

    for comp in rig.components.values():
        pkgs = []
        for pid in sorted(comp.external_packages_ids):
            pkg = rig.external_packages.get(pid)
            if pkg is None:
                raise BrokenReferenceError(comp.id, pid, "external_packages_ids")
            pkgs.append(pkg)
        comp.external_packages = pkgs

    for test in rig.tests.values():
        exe_id = test.test_executable_component_id
        if exe_id is None:
            test.test_executable_component = None
        else:
            exe = rig.components.get(exe_id) or rig.runners.get(exe_id)
            if exe is None:
                raise BrokenReferenceError(test.id, exe_id, "test_executable_component_id")
            test.test_executable_component = exe
        test.test_components = _resolve_components(rig, test.id, test.test_components_ids, "test_components_ids")
        test.components_being_tested = _resolve_components(
            rig, test.id, test.components_being_tested_ids, "components_being_tested_ids"
        )

    for node in rig.nodes():
        attached = []
        for eid in sorted(node.evidence_ids):
            ev = rig.evidence.get(eid)
            if ev is None:
                raise BrokenReferenceError(node.id, eid, "evidence_ids")
            attached.append(ev)
        node.evidence = attached
    return rig


def _resolve_components(rig: RIG, owner: str, ids: set[str], field_name: str) -> list[Component]:
    out = []
    for cid in sorted(ids):
        comp = rig.components.get(cid)
        if comp is None:
            raise BrokenReferenceError(owner, cid, field_name)
        out.append(comp)
    return out


def collection_of(node: Node) -> str:
    return _COLLECTION_OF[type(node)]
