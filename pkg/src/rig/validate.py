"""Consistency checks over a RIG and fail-fast finalization."""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

from rig.model import (
    NODE_COLLECTIONS,
    RIG,
    UNKNOWN,
    CallStack,
    Component,
    FileLine,
    RIGError,
    Runner,
    TestDefinition,
)


class Severity(str, Enum):
    ERROR = "ERROR"
    WARNING = "WARNING"


class Category(str, Enum):
    # declaration order is the reporting order
    MISSING_SOURCE_FILE = "missing_source_file"
    BROKEN_DEPENDENCY = "broken_dependency"
    CIRCULAR_DEPENDENCY = "circular_dependency"
    DUPLICATE_NODE_ID = "duplicate_node_id"
    MISSING_TEST_EXECUTABLE = "missing_test_executable"
    TEST_EXECUTABLE_COMPONENT_NOT_FOUND = "test_executable_component_not_found"
    MISSING_EVIDENCE = "missing_evidence"


_ORDER = {c: i for i, c in enumerate(Category)}


@dataclass(frozen=True)
class ValidationError:
    severity: Severity
    category: Category
    message: str
    node_id: str | None = None
    file: str | None = None
    line: int | None = None
    suggestion: str | None = None
    # cycle members for circular_dependency; not part of the serialized form
    members: tuple[str, ...] = field(default=(), compare=False)

    def to_dict(self) -> dict:
        return {
            "category": self.category.value,
            "severity": self.severity.value,
            "message": self.message,
            "node_id": self.node_id,
            "file": self.file,
            "line": self.line,
            "suggestion": self.suggestion,
        }


@dataclass(frozen=True)
class ValidationPolicy:
    """Knobs for :func:`validate`.

    ``lenient_sources`` downgrades missing_source_file to WARNING, for
    authored graphs whose tree is not checked out next to the document.
    """

    require_acyclic: bool = True
    lenient_sources: bool = False


STRICT = ValidationPolicy()
AUTHORED = ValidationPolicy(lenient_sources=True)


class ValidationFailure(RIGError):
    def __init__(self, errors: list[ValidationError]):
        self.errors = errors
        worst = [e for e in errors if e.severity is Severity.ERROR]
        head = "; ".join(f"{e.category.value}: {e.message}" for e in worst[:3])
        more = f" (+{len(worst) - 3} more)" if len(worst) > 3 else ""
        super().__init__(f"{len(worst)} validation error(s): {head}{more}")


def validate(rig: RIG, policy: ValidationPolicy | None = None, root: str | Path | None = None) -> list[ValidationError]:
    """Return every violation in ``rig``, deterministically ordered."""
    policy = policy or rig.policy or STRICT
    root_dir = Path(root if root is not None else rig.repo.root_path)
    errors: list[ValidationError] = []
    errors += _missing_sources(rig, root_dir, policy)
    errors += _broken_references(rig)
    if policy.require_acyclic:
        errors += _cycles(rig)
    errors += _duplicates(rig)
    errors += _test_executables(rig)
    errors += _missing_evidence(rig)
    errors.sort(key=lambda e: (_ORDER[e.category], e.node_id or "", e.message))
    return errors


def finalize(rig: RIG, policy: ValidationPolicy | None = None, root: str | Path | None = None) -> RIG:
    """Validate and freeze ``rig``; raise :class:`ValidationFailure` on any ERROR."""
    if rig.finalized:
        return rig
    policy = policy or rig.policy or STRICT
    errors = validate(rig, policy, root)
    if any(e.severity is Severity.ERROR for e in errors):
        raise ValidationFailure(errors)
    rig.warnings = errors
    rig.policy = policy
    rig.root = Path(root if root is not None else rig.repo.root_path).resolve().as_posix()
    rig.finalized = True
    return rig


def _err(category: Category, message: str, node_id: str | None = None, **kw) -> ValidationError:
    return ValidationError(Severity.ERROR, category, message, node_id, **kw)


def _missing_sources(rig: RIG, root: Path, policy: ValidationPolicy) -> list[ValidationError]:
    severity = Severity.WARNING if policy.lenient_sources else Severity.ERROR
    out = []
    for comp in rig.components.values():
        for src in comp.source_files:
            if src == UNKNOWN or (root / src).exists():
                continue
            out.append(ValidationError(
                severity,
                Category.MISSING_SOURCE_FILE,
                f"{comp.id}: source file {src!r} not found under {root.as_posix()}",
                comp.id,
                file=src,
                suggestion="check the repository root or the component's source list",
            ))
    return out


def _kind(rig: RIG, ident: str) -> str | None:
    for collection in NODE_COLLECTIONS:
        if ident in getattr(rig, collection):
            return collection
    return None


def _broken_references(rig: RIG) -> list[ValidationError]:
    out = []

    def broken(owner: str, field_name: str, ref: str, why: str = "does not exist") -> None:
        out.append(_err(
            Category.BROKEN_DEPENDENCY,
            f"{owner}: {field_name} references {ref!r}, which {why}",
            owner,
        ))

    for node in rig.nodes():
        for dep in sorted(node.depends_on_ids):
            if _kind(rig, dep) is None:
                broken(node.id, "depends_on_ids", dep)
        for eid in sorted(node.evidence_ids):
            if eid not in rig.evidence:
                broken(node.id, "evidence_ids", eid)
        if isinstance(node, Runner):
            for ref in sorted(node.args_nodes_ids):
                if _kind(rig, ref) is None:
                    broken(node.id, "args_nodes_ids", ref)
        elif isinstance(node, Component):
            for pid in sorted(node.external_packages_ids):
                if pid not in rig.external_packages:
                    broken(node.id, "external_packages_ids", pid)
        elif isinstance(node, TestDefinition):
            for field_name in ("test_components_ids", "components_being_tested_ids"):
                for ref in sorted(getattr(node, field_name)):
                    kind = _kind(rig, ref)
                    if kind is None:
                        broken(node.id, field_name, ref)
                    elif kind != "components":
                        broken(node.id, field_name, ref, f"is in {kind}, not components")

    for pkg in rig.external_packages.values():
        if pkg.package_manager_id is not None and pkg.package_manager_id not in rig.package_managers:
            broken(pkg.id, "package_manager_id", pkg.package_manager_id)
    return out


def _cycles(rig: RIG) -> list[ValidationError]:
    graph = {n.id: sorted(d for d in n.depends_on_ids if _kind(rig, d)) for n in rig.nodes()}
    out = []
    for scc in strongly_connected(graph):
        members = sorted(scc)
        start = members[0]
        if len(members) == 1 and start not in graph[start]:
            continue
        path = _cycle_through(graph, start, set(members))
        out.append(_err(
            Category.CIRCULAR_DEPENDENCY,
            "dependency cycle: " + " -> ".join(path),
            start,
            members=tuple(members),
            suggestion="break the cycle or disable the acyclicity requirement",
        ))
    return out


def strongly_connected(graph: dict[str, list[str]]) -> list[list[str]]:
    """Tarjan's algorithm, iterative; components in discovery order."""
    index: dict[str, int] = {}
    low: dict[str, int] = {}
    on_stack: set[str] = set()
    stack: list[str] = []
    result: list[list[str]] = []
    for root in sorted(graph):
        if root in index:
            continue
        work = [(root, iter(graph[root]))]
        index[root] = low[root] = len(index)
        stack.append(root)
        on_stack.add(root)
        while work:
            node, it = work[-1]
            advanced = False
            for nxt in it:
                if nxt not in index:
                    index[nxt] = low[nxt] = len(index)
                    stack.append(nxt)
                    on_stack.add(nxt)
                    work.append((nxt, iter(graph[nxt])))
                    advanced = True
                    break
                if nxt in on_stack:
                    low[node] = min(low[node], index[nxt])
            if advanced:
                continue
            work.pop()
            if work:
                parent = work[-1][0]
                low[parent] = min(low[parent], low[node])
            if low[node] == index[node]:
                comp = []
                while True:
                    top = stack.pop()
                    on_stack.discard(top)
                    comp.append(top)
                    if top == node:
                        break
                result.append(comp)
    return result


def _cycle_through(graph: dict[str, list[str]], start: str, members: set[str]) -> list[str]:
    # BFS inside the component for the shortest way back to start
    prev: dict[str, str] = {}
    frontier = [start]
    seen = {start}
    while frontier:
        nxt_frontier = []
        for node in frontier:
            for nxt in graph[node]:
                if nxt not in members:
                    continue
                if nxt == start:
                    path = [node]
                    while path[-1] != start:
                        path.append(prev[path[-1]])
                    path.reverse()
                    return path + [start]
                if nxt not in seen:
                    seen.add(nxt)
                    prev[nxt] = node
                    nxt_frontier.append(nxt)
        frontier = nxt_frontier
    return [start, start]


def _duplicates(rig: RIG) -> list[ValidationError]:
    out = []
    where: dict[str, list[str]] = defaultdict(list)
    for collection in NODE_COLLECTIONS:
        for ident in getattr(rig, collection):
            where[ident].append(collection)
    for ident, collections in where.items():
        if len(collections) > 1:
            out.append(_err(
                Category.DUPLICATE_NODE_ID,
                f"id {ident!r} is used in {', '.join(collections)}",
                ident,
                suggestion="node identifiers must be unique across node kinds",
            ))
    for collection in rig.COLLECTIONS:
        for key, item in getattr(rig, collection).items():
            if key != item.id:
                out.append(_err(
                    Category.DUPLICATE_NODE_ID,
                    f"{collection} key {key!r} holds an entry with id {item.id!r}",
                    key,
                ))
    return out


def _test_executables(rig: RIG) -> list[ValidationError]:
    out = []
    for test in rig.tests.values():
        exe = test.test_executable_component_id
        if exe is None:
            continue
        kind = _kind(rig, exe)
        if kind is None:
            out.append(_err(
                Category.MISSING_TEST_EXECUTABLE,
                f"{test.id}: test executable {exe!r} does not exist",
                test.id,
            ))
        elif kind not in ("components", "runners"):
            out.append(_err(
                Category.TEST_EXECUTABLE_COMPONENT_NOT_FOUND,
                f"{test.id}: test executable {exe!r} is in {kind}, expected a component or runner",
                test.id,
            ))
    return out


def _concrete(ev) -> bool:
    for loc in ev.locations:
        if isinstance(loc, FileLine):
            return True
        if isinstance(loc, CallStack) and loc.frames:
            return True
    return False


def _missing_evidence(rig: RIG) -> list[ValidationError]:
    out = []
    for node in rig.nodes():
        if not node.evidence_ids:
            out.append(_err(Category.MISSING_EVIDENCE, f"{node.id}: node has no evidence", node.id))
            continue
        known = [rig.evidence[e] for e in node.evidence_ids if e in rig.evidence]
        if known and not any(_concrete(ev) for ev in known):
            out.append(_err(
                Category.MISSING_EVIDENCE,
                f"{node.id}: evidence carries no concrete location",
                node.id,
            ))
    return out

