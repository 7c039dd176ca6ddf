"""CMake File API and CTest JSON plumbing: queries, configure, reply parsing."""

from __future__ import annotations

import json
import posixpath
import subprocess
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

from rig.model import FileLine, RIGError, canonical_path

QUERY_KINDS = ("codemodel-v2", "cache-v2", "toolchains-v1")
API_DIR = Path(".cmake", "api", "v1")


class ExtractionError(RIGError):
    """A pipeline stage failed; ``stage`` names it, ``output`` keeps tool output."""

    def __init__(self, stage: str, message: str, output: str = "", path: str | None = None):
        super().__init__(f"{stage}: {message}")
        self.stage = stage
        self.output = output
        self.path = path


class Mode(str, Enum):
    CONFIGURE = "configure"
    REPLAY = "replay"


@dataclass(frozen=True)
class ExtractionSource:
    """Where extraction reads from.

    Replay mode reads a checked-in reply directory (and optional CTest
    document); configure mode runs CMake on ``project_dir`` into
    ``build_dir`` first. ``project_dir`` is also the tree that source files
    and listfiles are checked against; in replay mode it defaults to the
    reply directory's parent (the fixture bundle layout).
    """

    mode: Mode
    reply_dir: Path | None = None
    project_dir: Path | None = None
    build_dir: Path | None = None
    ctest_doc: Path | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "mode", Mode(self.mode))
        for name in ("reply_dir", "project_dir", "build_dir", "ctest_doc"):
            value = getattr(self, name)
            if value is not None:
                object.__setattr__(self, name, Path(value))
        if self.mode is Mode.REPLAY:
            if self.reply_dir is None:
                raise ExtractionError("source", "replay mode needs a reply directory")
            if not any(self.reply_dir.glob("index-*.json")):
                raise ExtractionError("source", f"no index-*.json in {self.reply_dir}", path=str(self.reply_dir))
        else:
            if self.project_dir is None or self.build_dir is None:
                raise ExtractionError("source", "configure mode needs a project and a build directory")
            if self.reply_dir is None:
                object.__setattr__(self, "reply_dir", self.build_dir / API_DIR / "reply")

    @classmethod
    def replay(cls, bundle: str | Path) -> ExtractionSource:
        """A fixture bundle: ``reply/``, optional ``ctest.json``, and the source snapshot."""
        bundle = Path(bundle)
        ctest = bundle / "ctest.json"
        return cls(Mode.REPLAY, reply_dir=bundle / "reply", project_dir=bundle,
                   ctest_doc=ctest if ctest.exists() else None)

    @property
    def source_dir(self) -> Path:
        if self.project_dir is not None:
            return self.project_dir
        return self.reply_dir.parent


@dataclass
class TargetRecord:
    name: str
    target_type: str
    artifact_paths: list[str] = field(default_factory=list)
    sources: list[str] = field(default_factory=list)
    dependencies: list[str] = field(default_factory=list)
    backtrace: list[FileLine] = field(default_factory=list)
    languages: set[str] = field(default_factory=set)
    # beyond the core record: what mapping needs for tie-breaks and evidence
    language_counts: dict[str, int] = field(default_factory=dict)
    generated_sources: list[str] = field(default_factory=list)
    dependency_backtraces: dict[str, list[FileLine]] = field(default_factory=dict)
    command_sites: list[tuple[str, FileLine]] = field(default_factory=list)
    link_fragments: list[str] = field(default_factory=list)
    build_root: str = ""


@dataclass
class CTestRecord:
    name: str
    command: list[str] = field(default_factory=list)
    backtrace: list[FileLine] = field(default_factory=list)
    properties: dict[str, object] = field(default_factory=dict)


@dataclass
class Reply:
    index_path: Path
    source_root: str
    build_root: str
    generator: str
    project_name: str | None
    configuration: str | None
    cache: dict[str, str]
    targets: list[TargetRecord]


# queries & configure --------------------------------------------------------

def prepare_query(build_dir: str | Path) -> list[Path]:
    """Create the three shared stateless query files; idempotent."""
    qdir = Path(build_dir) / API_DIR / "query"
    try:
        qdir.mkdir(parents=True, exist_ok=True)
        paths = []
        for kind in QUERY_KINDS:
            p = qdir / kind
            p.touch(exist_ok=True)
            paths.append(p)
    except OSError as exc:
        where = exc.filename or qdir
        raise ExtractionError("query", f"cannot write File API query under {where}: {exc.strerror}",
                              path=str(where)) from exc
    return paths


def newest_index(reply_dir: str | Path) -> Path:
    indexes = sorted(Path(reply_dir).glob("index-*.json"))
    if not indexes:
        raise ExtractionError("codemodel", f"no index-*.json in {reply_dir}", path=str(reply_dir))
    return indexes[-1]


def run_configure(src: ExtractionSource, options: list[str] | tuple[str, ...] = (), cmake: str = "cmake") -> Path:
    """Run the configure step and return the newest reply index."""
    if src.mode is not Mode.CONFIGURE:
        raise ExtractionError("configure", "run_configure is only used in configure mode")
    prepare_query(src.build_dir)
    cmd = [cmake, "-S", str(src.project_dir), "-B", str(src.build_dir), *options]
    try:
        proc = subprocess.run(cmd, capture_output=True, text=True)
    except OSError as exc:
        raise ExtractionError("configure", f"cannot run {cmake}: {exc.strerror}") from exc
    output = proc.stdout + proc.stderr
    if proc.returncode != 0:
        raise ExtractionError("configure", f"{cmake} exited with status {proc.returncode}", output=output)
    try:
        return newest_index(src.reply_dir)
    except ExtractionError as exc:
        raise ExtractionError("configure", str(exc), output=output) from None


def run_build(src: ExtractionSource, cmake: str = "cmake") -> None:
    """Build every target so CTest can resolve test executables to paths."""
    try:
        proc = subprocess.run([cmake, "--build", str(src.build_dir)], capture_output=True, text=True)
    except OSError as exc:
        raise ExtractionError("build", f"cannot run {cmake}: {exc.strerror}") from exc
    if proc.returncode != 0:
        raise ExtractionError("build", f"{cmake} --build exited with status {proc.returncode}",
                              output=proc.stdout + proc.stderr)


def run_ctest_show_only(build_dir: str | Path, ctest: str = "ctest") -> dict:
    try:
        proc = subprocess.run([ctest, "--show-only=json-v1"], cwd=build_dir, capture_output=True, text=True)
    except OSError as exc:
        raise ExtractionError("ctest", f"cannot run {ctest}: {exc.strerror}") from exc
    if proc.returncode != 0:
        raise ExtractionError("ctest", f"{ctest} exited with status {proc.returncode}", output=proc.stderr)
    try:
        return json.loads(proc.stdout)
    except ValueError as exc:
        raise ExtractionError("ctest", f"unparseable ctest output: {exc}", output=proc.stdout) from exc


# reply parsing ---------------------------------------------------------------

def _load_json(path: Path, stage: str = "codemodel") -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
    except FileNotFoundError:
        raise ExtractionError(stage, f"missing reply document {path.name}", path=str(path)) from None
    except (OSError, ValueError) as exc:
        raise ExtractionError(stage, f"malformed document {path.name}: {exc}", path=str(path)) from None
    if not isinstance(data, dict):
        raise ExtractionError(stage, f"malformed document {path.name}: not a JSON object", path=str(path))
    return data


def _frames(graph: dict, index, source_root: str) -> list[FileLine]:
    """Innermost-first frames of a backtrace; frames without a line are dropped."""
    nodes, files = graph.get("nodes", []), graph.get("files", [])
    out = []
    seen = set()
    while isinstance(index, int) and 0 <= index < len(nodes) and index not in seen:
        seen.add(index)
        node = nodes[index]
        if "line" in node:
            out.append(FileLine(canonical_path(files[node["file"]], source_root), node["line"]))
        index = node.get("parent")
    return out


def _command_sites(graph: dict, source_root: str) -> list[tuple[str, FileLine]]:
    commands, nodes, files = graph.get("commands", []), graph.get("nodes", []), graph.get("files", [])
    sites = []
    for node in nodes:
        if "command" in node and "line" in node:
            sites.append((commands[node["command"]], FileLine(canonical_path(files[node["file"]], source_root), node["line"])))
    return sorted(set(sites), key=lambda s: (s[0], s[1].path, s[1].line))


def _pick_configuration(configs: list[dict], build_type: str | None) -> dict | None:
    if not configs:
        return None
    for cfg in configs:
        if build_type and cfg.get("name") == build_type:
            return cfg
    return configs[0]


def read_reply(reply_dir: str | Path) -> Reply:
    reply_dir = Path(reply_dir)
    index_path = newest_index(reply_dir)
    index = _load_json(index_path)
    responses = index.get("reply", {})

    def doc(kind: str) -> dict | None:
        entry = responses.get(kind)
        if not entry:
            return None
        if "error" in entry or "jsonFile" not in entry:
            raise ExtractionError("codemodel", f"{kind} query failed: {entry.get('error', 'no reply file')}")
        return _load_json(reply_dir / entry["jsonFile"])

    codemodel = doc("codemodel-v2")
    if codemodel is None:
        raise ExtractionError("codemodel", f"{index_path.name} has no codemodel-v2 reply", path=str(index_path))
    cache_doc = doc("cache-v2") or {"entries": []}
    cache = {e["name"]: e.get("value", "") for e in cache_doc.get("entries", []) if "name" in e}

    paths = codemodel.get("paths", {})
    source_root = paths.get("source", "")
    build_abs = paths.get("build", "")
    build_root = canonical_path(build_abs, source_root) if build_abs else ""
    config = _pick_configuration(codemodel.get("configurations", []), cache.get("CMAKE_BUILD_TYPE"))
    projects = (config or {}).get("projects", [])
    entries = (config or {}).get("targets", [])

    names_by_id = {t["id"]: t["name"] for t in entries if "id" in t and "name" in t}
    records = []
    for entry in entries:
        if "jsonFile" not in entry:
            raise ExtractionError("codemodel", f"target {entry.get('name')!r} has no jsonFile")
        target = _load_json(reply_dir / entry["jsonFile"])
        records.append(_target_record(target, names_by_id, source_root, build_root))
    records.sort(key=lambda r: r.name)
    return Reply(
        index_path=index_path,
        source_root=source_root,
        build_root=build_root,
        generator=index.get("cmake", {}).get("generator", {}).get("name", ""),
        project_name=projects[0]["name"] if projects else cache.get("CMAKE_PROJECT_NAME"),
        configuration=(config or {}).get("name"),
        cache=cache,
        targets=records,
    )


def _target_record(target: dict, names_by_id: dict, source_root: str, build_root: str) -> TargetRecord:
    graph = target.get("backtraceGraph", {})
    name = target.get("name")
    if not name:
        raise ExtractionError("codemodel", f"target {target.get('id')!r} has no name")
    sources, generated = [], []
    for src in target.get("sources", []):
        path = canonical_path(src["path"], source_root)
        (generated if src.get("isGenerated") else sources).append(path)
    counts: dict[str, int] = {}
    for group in target.get("compileGroups", []):
        lang = group.get("language")
        if lang:
            counts[lang] = counts.get(lang, 0) + len(group.get("sourceIndexes", []))
    deps, dep_traces = [], {}
    for dep in target.get("dependencies", []):
        dep_name = names_by_id.get(dep["id"], dep["id"].split("::@", 1)[0])
        deps.append(dep_name)
        dep_traces[dep_name] = _frames(graph, dep.get("backtrace"), source_root)
    fragments = [
        frag["fragment"]
        for frag in target.get("link", {}).get("commandFragments", [])
        if frag.get("role") == "libraries" and "backtrace" in frag
    ]
    return TargetRecord(
        name=name,
        target_type=target.get("type", ""),
        artifact_paths=[a["path"] for a in target.get("artifacts", []) if "path" in a],
        sources=sources,
        dependencies=sorted(set(deps)),
        backtrace=_frames(graph, target.get("backtrace"), source_root),
        languages=set(counts),
        language_counts=counts,
        generated_sources=generated,
        dependency_backtraces=dep_traces,
        command_sites=_command_sites(graph, source_root),
        link_fragments=fragments,
        build_root=build_root,
    )


def parse_codemodel(reply_dir: str | Path) -> list[TargetRecord]:
    """One record per codemodel target, ordered by name."""
    return read_reply(reply_dir).targets


def parse_ctest(doc: str | Path | dict) -> list[CTestRecord]:
    """Records from ``ctest --show-only=json-v1`` output (a path or parsed dict).

    Backtrace paths stay as ctest reports them (absolute); the mapping step
    relativizes them. A test whose executable ctest could not resolve has
    an empty ``command``.
    """
    data = doc if isinstance(doc, dict) else _load_json(Path(doc), stage="ctest")
    graph = data.get("backtraceGraph", {})
    records = []
    for test in data.get("tests", []):
        if "name" not in test:
            raise ExtractionError("ctest", "test entry without a name")
        props = {p["name"]: p.get("value") for p in test.get("properties", []) if "name" in p}
        records.append(CTestRecord(
            name=test["name"],
            command=[str(a) for a in test.get("command", [])],
            backtrace=_frames(graph, test.get("backtrace"), ""),
            properties=props,
        ))
    return records


def normalize_arg(arg: str, source_root: str) -> str:
    if arg.startswith("/"):
        return canonical_path(posixpath.normpath(arg), source_root)
    return arg
