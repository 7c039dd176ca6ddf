"""Map File API target records and CTest records onto RIG nodes."""

from __future__ import annotations

import logging
import posixpath
import re
from dataclasses import dataclass
from pathlib import Path

from rig.cmake.fileapi import CTestRecord, TargetRecord, normalize_arg
from rig.cmake.listfile import (
    ListfileError,
    custom_target_depends,
    is_literal,
    link_items,
    read_arguments,
)
from rig.model import (
    RIG,
    UNKNOWN,
    Aggregator,
    CallStack,
    Component,
    ComponentType,
    Evidence,
    ExternalPackage,
    FileLine,
    PackageManager,
    Runner,
    StateError,
    TestDefinition,
    canonical_path,
)

log = logging.getLogger("rig.cmake")

TYPE_MAP = {
    "EXECUTABLE": ComponentType.EXECUTABLE,
    "STATIC_LIBRARY": ComponentType.STATIC_LIBRARY,
    "OBJECT_LIBRARY": ComponentType.STATIC_LIBRARY,
    "SHARED_LIBRARY": ComponentType.SHARED_LIBRARY,
    "MODULE_LIBRARY": ComponentType.SHARED_LIBRARY,
}
# generator bookkeeping targets, not part of the project
SKIPPED_UTILITIES = frozenset({"ALL_BUILD", "ZERO_CHECK", "INSTALL", "RUN_TESTS", "PACKAGE"})


def target_id(name: str) -> str:
    return f"target:{name}"


def test_id(name: str) -> str:
    return f"test:{name}"


def runner_id(name: str) -> str:
    return f"runner:{name}"


def language_tag(label: str) -> str:
    return label.lower()


def pick_language(counts: dict[str, int]) -> str:
    """Language compiling the most sources; ties go to the smallest tag."""
    if not counts:
        return UNKNOWN
    tags: dict[str, int] = {}
    for label, n in counts.items():
        tag = language_tag(label)
        tags[tag] = tags.get(tag, 0) + n
    return min(tags, key=lambda t: (-tags[t], t))


def evidence_for(frames: list[FileLine]) -> Evidence | None:
    """One FileLine for a single frame, a call stack (innermost first) otherwise."""
    if not frames:
        return None
    if len(frames) == 1:
        loc = frames[0]
        return Evidence(f"evidence:{loc}", [loc])
    return Evidence("evidence:" + "|".join(str(f) for f in frames), [CallStack(tuple(frames))])


@dataclass(frozen=True)
class VcpkgPackage:
    name: str  # find_package name, from the <name>_DIR cache entry
    port: str
    triplet: str
    installed: str  # .../installed, absolute as recorded

    @property
    def id(self) -> str:
        return f"package:{self.name}"

    @property
    def manager_id(self) -> str:
        return f"pm:vcpkg:{self.port}"

    def lib_dirs(self) -> tuple[str, ...]:
        base = posixpath.join(self.installed, self.triplet)
        return (posixpath.join(base, "lib"), posixpath.join(base, "debug", "lib"))


_SHARE_RE = re.compile(r"^(?P<installed>.*/(?:vcpkg_)?installed)/(?P<triplet>[^/]+)/share/(?P<port>[^/]+)/?$")


def vcpkg_packages(cache: dict[str, str]) -> list[VcpkgPackage]:
    """Packages resolved through a vcpkg toolchain, from ``<Name>_DIR`` entries."""
    toolchain = cache.get("CMAKE_TOOLCHAIN_FILE", "").replace("\\", "/")
    if not toolchain.endswith("scripts/buildsystems/vcpkg.cmake"):
        return []
    found = []
    for key in sorted(cache):
        if not key.endswith("_DIR") or key.startswith("CMAKE_") or len(key) <= 4:
            continue
        m = _SHARE_RE.match(posixpath.normpath(str(cache[key]).replace("\\", "/")))
        if m:
            found.append(VcpkgPackage(key[:-4], m["port"], m["triplet"], m["installed"]))
    return found


def _fragment_port(fragment: str, pkg: VcpkgPackage) -> bool:
    path = posixpath.normpath(fragment.replace("\\", "/"))
    if posixpath.dirname(path) not in pkg.lib_dirs():
        return False
    stem = posixpath.basename(path).split(".", 1)[0]
    stem = stem[3:] if stem.startswith("lib") else stem
    return stem in (pkg.port, pkg.port + "d")


def _names_package(item: str, pkg: VcpkgPackage) -> bool:
    return any(item == n or item.startswith(n + "::") for n in {pkg.name, pkg.port})


class _Listfiles:
    """Reads invocations relative to the source tree; failures are logged, not fatal."""

    def __init__(self, source_dir: str | Path | None):
        self.root = Path(source_dir) if source_dir is not None else None

    def arguments(self, site: FileLine, command: str) -> list[str] | None:
        if self.root is None or site.path.startswith("/"):
            return None
        try:
            return read_arguments(self.root / site.path, site.line, command)
        except (OSError, ListfileError) as exc:
            log.info("cannot re-read %s at %s: %s", command, site, exc)
            return None


def map_targets(
    records: list[TargetRecord],
    rig: RIG,
    *,
    source_dir: str | Path | None = None,
    packages: list[VcpkgPackage] = (),
) -> RIG:
    """Add a Component or Aggregator per target, with evidence and dependencies.

    ``source_dir`` lets the mapper re-read backtraced listfile lines for the
    DEPENDS fallback and for package attribution; without it those steps
    are skipped.
    """
    if rig.finalized:
        raise StateError("cannot map targets into a finalized graph")
    listfiles = _Listfiles(source_dir)
    by_name = {r.name: r for r in records}
    interface = {r.name for r in records if r.target_type == "INTERFACE_LIBRARY"}
    skipped = {r.name for r in records if r.target_type == "UTILITY" and r.name in SKIPPED_UTILITIES}

    def resolve(deps, seen=()) -> set[str]:
        # interface libraries are not nodes; their dependencies pass through
        out = set()
        for d in deps:
            if d in skipped:
                continue
            if d in interface and d not in seen:
                out |= resolve(by_name[d].dependencies, (*seen, d))
            elif d not in interface:
                out.add(target_id(d))
        return out

    for pkg in packages:
        rig.add_package_manager(PackageManager(pkg.manager_id, "vcpkg", pkg.port))
        rig.add_package(ExternalPackage(pkg.id, pkg.name, pkg.manager_id))

    for rec in records:
        if rec.name in interface or rec.name in skipped:
            continue
        evidence = []
        for frames in [rec.backtrace, *(rec.dependency_backtraces.get(d, []) for d in rec.dependencies)]:
            ev = evidence_for(frames)
            if ev is not None and all(e.id != ev.id for e in evidence):
                evidence.append(ev)
        deps = resolve(rec.dependencies)

        if rec.target_type == "UTILITY":
            deps |= _custom_target_depends(rec, by_name, listfiles, resolve)
            deps.discard(target_id(rec.name))
            rig.add_node(Aggregator(id=target_id(rec.name), name=rec.name, depends_on_ids=deps, evidence=evidence))
            continue

        used = {}
        for p in packages:
            site = _package_site(rec, p, listfiles)
            if site is not None:
                used[p.id] = site
        for site in used.values():
            ev = evidence_for([site]) if isinstance(site, FileLine) else None
            if ev is not None and all(e.id != ev.id for e in evidence):
                evidence.append(ev)
        ctype = TYPE_MAP.get(rec.target_type, ComponentType.UNKNOWN)
        rig.add_node(Component(
            id=target_id(rec.name),
            name=rec.name,
            type=ctype,
            programming_language=pick_language(rec.language_counts),
            output_path=_output_path(rec),
            source_files=list(rec.sources),
            depends_on_ids=deps,
            external_packages_ids=set(used),
            evidence=evidence,
        ))
    return rig


def _output_path(rec: TargetRecord) -> str:
    if not rec.artifact_paths:
        return UNKNOWN
    artifact = rec.artifact_paths[0]
    if "$<" in artifact:
        return UNKNOWN
    if artifact.startswith("/"):
        return artifact
    return posixpath.normpath(posixpath.join(rec.build_root, artifact)) if rec.build_root else artifact


def _custom_target_depends(rec, by_name, listfiles, resolve) -> set[str]:
    if not rec.backtrace:
        return set()
    args = listfiles.arguments(rec.backtrace[0], "add_custom_target")
    if args is None:
        return set()
    found = set()
    for tok in custom_target_depends(args):
        if not is_literal(tok):
            log.info("%s: DEPENDS item %r needs evaluation; left unresolved", rec.name, tok)
        elif tok in by_name and tok != rec.name:
            found.add(tok)
    return resolve(sorted(found))


def _package_site(rec: TargetRecord, pkg: VcpkgPackage, listfiles: _Listfiles) -> FileLine | bool | None:
    """Where ``rec`` links ``pkg``: the listfile line if known, True if only the linker says so."""
    for command, site in rec.command_sites:
        if command != "target_link_libraries":
            continue
        args = listfiles.arguments(site, command)
        if args and args[0] == rec.name and any(_names_package(i, pkg) for i in link_items(args)):
            return site
    if any(_fragment_port(f, pkg) for f in rec.link_fragments):
        return True
    return None


def capture_tests(records: list[CTestRecord], rig: RIG, *, source_root: str | None = None) -> RIG:
    """One TestDefinition per CTest record.

    A command whose first argument is a component's artifact makes that
    component the executable; anything else becomes a Runner. Absolute
    paths under ``source_root`` are made relative to it first.
    """
    if rig.finalized:
        raise StateError("cannot capture tests into a finalized graph")
    by_output = {}
    for comp in sorted(rig.components.values(), key=lambda c: c.id):
        if comp.output_path != UNKNOWN:
            by_output.setdefault(comp.output_path, comp.id)
    names = {r.name for r in records}

    for rec in records:
        frames = [FileLine(canonical_path(f.path, source_root), f.line) for f in rec.backtrace]
        ev = evidence_for(frames)
        evidence = [ev] if ev else []
        argv = [normalize_arg(a, source_root) if source_root else a for a in rec.command]
        deps = {test_id(d) for d in _depends_property(rec) if d in names and d != rec.name}

        exe_id = None
        test_components, tested = set(), set()
        if argv and argv[0] in by_output:
            exe_id = by_output[argv[0]]
            test_components.add(exe_id)
        elif argv:
            exe_id = runner_id(rec.name)
            arg_nodes = {by_output[a] for a in argv[1:] if a in by_output}
            tested |= arg_nodes
            rig.add_node(Runner(
                id=exe_id,
                name=f"{rec.name}-runner",
                arguments=argv,
                args_nodes_ids=arg_nodes,
                depends_on_ids=set(arg_nodes),
                evidence=list(evidence),
            ))
        else:
            log.info("%s: ctest reported no command; test has no executable", rec.name)

        rig.add_node(TestDefinition(
            id=test_id(rec.name),
            name=rec.name,
            framework="ctest",
            test_executable_component_id=exe_id,
            test_components_ids=test_components,
            components_being_tested_ids=tested,
            depends_on_ids=deps,
            evidence=evidence,
        ))
    return rig


def _depends_property(rec: CTestRecord) -> list[str]:
    value = rec.properties.get("DEPENDS")
    if value is None:
        return []
    if isinstance(value, list):
        return [str(v) for v in value]
    return [v for v in str(value).split(";") if v]
