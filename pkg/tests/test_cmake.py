import json
import shutil

import pytest

from graphs import build_info, repo
from rig.cmake import (
    CTestRecord,
    ExtractionError,
    ExtractionSource,
    Mode,
    TargetRecord,
    capture_tests,
    extract,
    map_targets,
    parse_codemodel,
    parse_ctest,
    prepare_query,
    read_reply,
    vcpkg_packages,
)
from rig.cmake.mapping import evidence_for, pick_language
from rig.model import RIG, UNKNOWN, CallStack, ComponentType, FileLine
from rig.validate import Category, ValidationFailure
from rig.view import render_view

# prepare_query ----------------------------------------------------------------


def test_prepare_query_creates_three_files(tmp_path):
    paths = prepare_query(tmp_path)
    qdir = tmp_path / ".cmake" / "api" / "v1" / "query"
    assert sorted(p.name for p in qdir.iterdir()) == ["cache-v2", "codemodel-v2", "toolchains-v1"]
    assert all(p.stat().st_size == 0 for p in paths)
    assert prepare_query(tmp_path) == paths
    assert len(list(qdir.iterdir())) == 3


def test_prepare_query_io_error_names_path(tmp_path):
    blocker = tmp_path / "build"
    blocker.write_text("not a directory")
    with pytest.raises(ExtractionError) as exc:
        prepare_query(blocker)
    assert exc.value.stage == "query"
    assert str(blocker) in str(exc.value)


# reply parsing ----------------------------------------------------------------


def test_hello_world_records(hello_bundle):
    records = parse_codemodel(hello_bundle / "reply")
    assert [(r.name, r.target_type) for r in records] == [
        ("hello_world", "EXECUTABLE"), ("utils", "STATIC_LIBRARY"),
    ]
    hello = records[0]
    assert hello.sources == ["main.cpp"]
    assert hello.dependencies == ["utils"]
    assert hello.backtrace[0] == FileLine("CMakeLists.txt", 8)
    assert hello.languages == {"CXX"}


def test_reply_metadata(hello_bundle):
    reply = read_reply(hello_bundle / "reply")
    assert reply.project_name == "hello_world"
    assert reply.configuration == "Debug"
    assert reply.build_root == "build"
    assert reply.index_path.parent == hello_bundle / "reply"


def _mini_reply(tmp_path, targets):
    reply = tmp_path / "reply"
    reply.mkdir()
    codemodel = {
        "kind": "codemodel", "version": {"major": 2, "minor": 3},
        "paths": {"source": "/src", "build": "/src/build"},
        "configurations": [{"name": "Debug", "projects": [{"name": "mini"}], "targets": targets}],
    }
    (reply / "codemodel-v2-1.json").write_text(json.dumps(codemodel))
    index = {"cmake": {"generator": {"name": "Ninja"}},
             "reply": {"codemodel-v2": {"kind": "codemodel", "jsonFile": "codemodel-v2-1.json"}}}
    (reply / "index-0001.json").write_text(json.dumps(index))
    return reply


def test_zero_targets(tmp_path):
    assert parse_codemodel(_mini_reply(tmp_path, [])) == []


def test_missing_target_document_is_named(tmp_path):
    reply = _mini_reply(tmp_path, [{"name": "app", "id": "app::@1", "jsonFile": "target-app.json"}])
    with pytest.raises(ExtractionError, match="target-app.json"):
        parse_codemodel(reply)


def test_newest_index_wins(tmp_path):
    reply = _mini_reply(tmp_path, [])
    (reply / "index-0000.json").write_text("{ not json")
    assert read_reply(reply).index_path.name == "index-0001.json"


def test_replay_requires_an_index(tmp_path):
    with pytest.raises(ExtractionError) as exc:
        ExtractionSource(Mode.REPLAY, reply_dir=tmp_path)
    assert exc.value.stage == "source"


# mapping ----------------------------------------------------------------------


def _rig() -> RIG:
    return RIG(repo(), build_info())


def _rec(name, ttype="EXECUTABLE", deps=(), line=1, **kw):
    kw.setdefault("artifact_paths", [name] if ttype != "UTILITY" else [])
    kw.setdefault("language_counts", {"CXX": 1} if ttype != "UTILITY" else {})
    return TargetRecord(name=name, target_type=ttype, dependencies=list(deps),
                        backtrace=[FileLine("CMakeLists.txt", line)], build_root="build", **kw)


def test_hello_world_mapping(hello_bundle):
    rig = map_targets(parse_codemodel(hello_bundle / "reply"), _rig(), source_dir=hello_bundle)
    hello, utils = rig.components["target:hello_world"], rig.components["target:utils"]
    assert (hello.type, hello.programming_language) == (ComponentType.EXECUTABLE, "cxx")
    assert (utils.type, utils.programming_language) == (ComponentType.STATIC_LIBRARY, "cxx")
    assert hello.depends_on_ids == {"target:utils"}
    assert utils.output_path == "build/utils/libutils.a"


def test_utility_target_becomes_aggregator():
    records = [_rec("a", line=1), _rec("b", line=2), _rec("group", "UTILITY", deps=["a", "b"], line=3)]
    rig = map_targets(records, _rig())
    assert len(rig.components) == 2 and len(rig.aggregators) == 1
    assert rig.aggregators["target:group"].depends_on_ids == {"target:a", "target:b"}


def test_generator_bookkeeping_targets_are_skipped():
    rig = map_targets([_rec("a"), _rec("ALL_BUILD", "UTILITY", deps=["a"])], _rig())
    assert list(rig.aggregators) == []


def test_interface_library_edges_forwarded():
    records = [
        _rec("core", "STATIC_LIBRARY"),
        TargetRecord(name="headers", target_type="INTERFACE_LIBRARY", dependencies=["core"]),
        _rec("app", deps=["headers"]),
    ]
    rig = map_targets(records, _rig())
    assert set(rig.components) == {"target:core", "target:app"}
    assert rig.components["target:app"].depends_on_ids == {"target:core"}


@pytest.mark.parametrize("counts,expected", [
    ({"C": 1, "CXX": 1}, "c"),
    ({"C": 1, "CXX": 2}, "cxx"),
    ({"Fortran": 3, "CXX": 3, "C": 1}, "cxx"),
    ({}, UNKNOWN),
])
def test_language_tie_break(counts, expected):
    assert pick_language(counts) == expected


def test_unresolvable_output_path_is_unknown():
    rig = map_targets([
        _rec("genex", artifact_paths=["$<TARGET_FILE_DIR:x>/genex"]),
        _rec("none", artifact_paths=[]),
        _rec("linkonly", "STATIC_LIBRARY", language_counts={}),
    ], _rig())
    assert rig.components["target:genex"].output_path == UNKNOWN
    assert rig.components["target:none"].output_path == UNKNOWN
    assert rig.components["target:linkonly"].programming_language == UNKNOWN
    assert rig.components["target:linkonly"].output_path == "build/linkonly"


def test_unknown_target_type_maps_to_unknown():
    rig = map_targets([_rec("odd", "GLOBAL_TARGET")], _rig())
    assert rig.components["target:odd"].type is ComponentType.UNKNOWN


def test_evidence_shapes():
    single = evidence_for([FileLine("a.txt", 3)])
    assert single.id == "evidence:a.txt:3" and single.locations == [FileLine("a.txt", 3)]
    stack = evidence_for([FileLine("f.cmake", 2), FileLine("CMakeLists.txt", 9)])
    assert isinstance(stack.locations[0], CallStack)
    assert evidence_for([]) is None


def test_vcpkg_cache_pattern():
    cache = {
        "CMAKE_TOOLCHAIN_FILE": "/opt/vcpkg/scripts/buildsystems/vcpkg.cmake",
        "fmt_DIR": "/opt/vcpkg/installed/x64-linux/share/fmt",
        "ZLIB_DIR": "/proj/vcpkg_installed/x64-windows/share/zlib",
        "Qt5_DIR": "/usr/lib/cmake/Qt5",
        "CMAKE_DIR": "/opt/vcpkg/installed/x64-linux/share/cmake",
    }
    found = vcpkg_packages(cache)
    assert [(p.name, p.port, p.triplet) for p in found] == [("ZLIB", "zlib", "x64-windows"), ("fmt", "fmt", "x64-linux")]
    assert vcpkg_packages({**cache, "CMAKE_TOOLCHAIN_FILE": "/tc/clang.cmake"}) == []


# tests -------------------------------------------------------------------------

GO_CTEST = {
    "kind": "ctestInfo", "version": {"major": 1, "minor": 0},
    "backtraceGraph": {"commands": ["add_test"], "files": ["/src/CMakeLists.txt"],
                       "nodes": [{"file": 0}, {"file": 0, "line": 4, "command": 0, "parent": 0}]},
    "tests": [{"name": "go_tests", "command": ["go", "test", "./..."], "backtrace": 1}],
}


def test_command_test_becomes_runner():
    rig = capture_tests(parse_ctest(GO_CTEST), _rig(), source_root="/src")
    runner = rig.runners["runner:go_tests"]
    assert runner.arguments == ["go", "test", "./..."]
    test = rig.tests["test:go_tests"]
    assert test.test_executable_component_id == "runner:go_tests"
    assert test.evidence[0].locations == [FileLine("CMakeLists.txt", 4)]


def test_artifact_command_names_component():
    rig = map_targets([_rec("hello_world_test")], _rig())
    capture_tests([CTestRecord("t", ["/src/build/hello_world_test"])], rig, source_root="/src")
    assert rig.tests["test:t"].test_executable_component_id == "target:hello_world_test"
    assert rig.tests["test:t"].test_components_ids == {"target:hello_world_test"}


def test_zero_tests_leave_graph_unchanged(hello_bundle):
    a = map_targets(parse_codemodel(hello_bundle / "reply"), _rig())
    b = map_targets(parse_codemodel(hello_bundle / "reply"), _rig())
    capture_tests([], b)
    assert a == b


def test_test_without_command_has_no_executable():
    rig = capture_tests([CTestRecord("lost")], _rig())
    assert rig.tests["test:lost"].test_executable_component_id is None


# whole pipeline -----------------------------------------------------------------


def test_golden_hello_world(hello_bundle):
    rig = extract(ExtractionSource.replay(hello_bundle))
    comps = sorted(rig.components.values(), key=lambda c: c.name)
    assert [(c.name, c.type.value, c.programming_language) for c in comps] == [
        ("hello_world", "executable", "cxx"), ("utils", "static_library", "cxx"),
    ]
    assert sum(len(c.depends_on_ids) for c in comps) == 1
    [test] = rig.tests.values()
    assert rig.components[test.test_executable_component_id].name == "hello_world"
    assert all(n.evidence for n in rig.nodes())
    assert rig.repo.name == "hello_world" and rig.build.variant == "Ninja"


@pytest.mark.parametrize("bundle", ["hello_world", "multi"])
def test_extraction_is_deterministic(fixtures, bundle):
    first = render_view(extract(ExtractionSource.replay(fixtures / bundle)))
    assert render_view(extract(ExtractionSource.replay(fixtures / bundle))) == first


@pytest.mark.parametrize("bundle", ["hello_world", "multi"])
def test_evidence_points_into_the_tree(fixtures, bundle):
    rig = extract(ExtractionSource.replay(fixtures / bundle))
    for node in rig.nodes():
        frames = [f for ev in node.evidence for loc in ev.locations
                  for f in (loc.frames if isinstance(loc, CallStack) else [loc])]
        assert frames, node.id
        assert any((fixtures / bundle / f.path).exists() for f in frames), node.id


def test_counts_match_codemodel(multi_bundle):
    records = parse_codemodel(multi_bundle / "reply")
    rig = extract(ExtractionSource.replay(multi_bundle))
    producing = [r for r in records if r.target_type not in ("UTILITY", "INTERFACE_LIBRARY") and r.artifact_paths]
    utilities = [r for r in records if r.target_type == "UTILITY"]
    assert len(rig.components) == len(producing) == 5
    assert len(rig.aggregators) == len(utilities) == 2


def test_multi_details(multi_bundle):
    rig = extract(ExtractionSource.replay(multi_bundle))
    by_name = {n.name: n for n in rig.nodes()}
    # DEPENDS recovered from the listfile; the ${EXTRA_APPS} token is not evaluated
    assert {rig.node(d).name for d in by_name["all_apps"].depends_on_ids} == {"app", "app_test"}
    assert {rig.node(d).name for d in by_name["bundle"].depends_on_ids} == {"app", "plugin"}
    assert by_name["mixed"].programming_language == "c"
    assert by_name["plugin"].type is ComponentType.SHARED_LIBRARY
    core = by_name["core"]
    [pkg] = core.external_packages
    assert (pkg.name, pkg.package_manager.name, pkg.package_manager.package_name) == ("fmt", "vcpkg", "fmt")
    assert FileLine("CMakeLists.txt", 13) in [loc for ev in core.evidence for loc in ev.locations]
    smoke = by_name["plugin_smoke-runner"]
    assert {rig.node(a).name for a in smoke.args_nodes_ids} == {"plugin"}
    assert "tests/smoke.py" in smoke.arguments
    assert {rig.node(d).name for d in by_name["go_tests"].depends_on_ids} == {"app_unit"}
    assert rig.tests["test:app_unit"].test_executable_component_id == "target:app_test"


def test_evidence_less_node_fails_finalize(tmp_path, hello_bundle):
    bundle = tmp_path / "hello"
    shutil.copytree(hello_bundle, bundle)
    [doc] = bundle.glob("reply/target-utils-*.json")
    target = json.loads(doc.read_text())
    del target["backtrace"]
    doc.write_text(json.dumps(target))
    with pytest.raises(ValidationFailure) as exc:
        extract(ExtractionSource.replay(bundle))
    assert [(e.category, e.node_id) for e in exc.value.errors] == [(Category.MISSING_EVIDENCE, "target:utils")]


def test_replay_without_ctest_has_no_tests(tmp_path, hello_bundle):
    src = ExtractionSource(Mode.REPLAY, reply_dir=hello_bundle / "reply", project_dir=hello_bundle)
    assert extract(src).tests == {}


def test_malformed_ctest_document(tmp_path, hello_bundle):
    bad = tmp_path / "ctest.json"
    bad.write_text("[]")
    src = ExtractionSource(Mode.REPLAY, reply_dir=hello_bundle / "reply", project_dir=hello_bundle, ctest_doc=bad)
    with pytest.raises(ExtractionError) as exc:
        extract(src)
    assert exc.value.stage == "ctest"


# configure mode (needs a toolchain) ---------------------------------------------


def test_configure_hello_world(cmake_available, tmp_path, hello_bundle):
    project = tmp_path / "hello"
    shutil.copytree(hello_bundle, project, ignore=shutil.ignore_patterns("reply", "ctest.json"))
    src = ExtractionSource(Mode.CONFIGURE, project_dir=project, build_dir=project / "build")
    rig = extract(src, configure_options=["-G", "Ninja", "-DCMAKE_BUILD_TYPE=Debug"])
    assert sorted(c.name for c in rig.components.values()) == ["hello_world", "utils"]
    assert len(rig.tests) == 1
    assert (project / "build" / ".cmake" / "api" / "v1" / "query" / "codemodel-v2").exists()
    # same project content as the golden bundle, so the view matches byte for byte
    assert render_view(rig) == render_view(extract(ExtractionSource.replay(hello_bundle)))


def test_configure_broken_project_keeps_output(cmake_available, tmp_path, fixtures):
    src = ExtractionSource(Mode.CONFIGURE, project_dir=fixtures / "broken", build_dir=tmp_path / "build")
    with pytest.raises(ExtractionError) as exc:
        extract(src, configure_options=["-G", "Ninja"])
    assert exc.value.stage == "configure"
    assert "CMake Error" in exc.value.output
