"""Acceptance criteria, one test each; the terminal summary prints a line per criterion."""

import json
import random
import time

import pytest
from hypothesis import Phase, given, settings
from hypothesis import strategies as st

import validator_cases
from graphs import dag_rig, graph_specs, materialize, random_dag
from rig.authoring import load_view, read_view
from rig.cmake import ExtractionSource, extract
from rig.complexity import band_for, normalized
from rig.model import hydrate
from rig.query import build_order, direct_deps, reverse_closure
from rig.store import load, save
from rig.validate import AUTHORED, finalize, validate
from rig.view import render_view, size_report

# published byte counts and token estimates of the eight corpus views
SIZES = [(1977, 494), (5967, 1491), (7816, 1954), (15680, 3920),
         (28886, 7221), (60076, 15019), (23011, 5752), (22121, 5530)]
# published normalized scores and their levels
LEVELS = [(10.0, "LOW"), (33.5, "MEDIUM"), (38.9, "MEDIUM"), (47.5, "MEDIUM"),
          (54.3, "MEDIUM"), (91.9, "HIGH"), (95.9, "HIGH"), (100.0, "HIGH")]


class Clock:
    def __enter__(self):
        self.start = time.perf_counter()
        return self

    def __exit__(self, *exc):
        self.elapsed = time.perf_counter() - self.start


def test_criterion_1_token_accounting():
    with Clock() as clock:
        for n_bytes, tokens in SIZES:
            assert size_report(b" " * n_bytes).tokens == tokens
    assert clock.elapsed < 0.1


def test_criterion_2_complexity_bands():
    with Clock() as clock:
        top = normalized(221, 221)
        assert (top.normalized, top.band.value) == (100.0, "HIGH")
        for value, level in LEVELS:
            assert band_for(value).value == level
        assert [band_for(v).value for v in (30.0, 70.0, 70.1)] == ["MEDIUM", "MEDIUM", "HIGH"]
        # the band follows the rounded score
        assert normalized(7004, 10000).band.value == "MEDIUM"
        assert normalized(7005, 10000).band.value == "HIGH"
    assert clock.elapsed < 0.1


def test_criterion_3_validator_fixtures(tmp_path):
    root = validator_cases.source_tree(tmp_path)
    with Clock() as clock:
        for builder, category, node in validator_cases.CASES:
            errors = validate(builder(), root=root)
            assert [(e.category.value, e.node_id) for e in errors] == [(category, node)], category
        assert validate(validator_cases.clean(), root=root) == []
    assert clock.elapsed < 1.0


def test_criterion_4_determinism(hello_bundle):
    seen = 0

    @settings(max_examples=5, phases=[Phase.generate], deadline=None)
    @given(graph_specs(min_nodes=30, max_nodes=30), st.integers(0, 2**32 - 1))
    def shuffled(spec, seed):
        nonlocal seen
        rng = random.Random(seed)
        texts = {render_view(materialize(spec, rng=rng)) for _ in range(20)}
        assert len(texts) == 1
        seen += 1

    with Clock() as clock:
        first = render_view(extract(ExtractionSource.replay(hello_bundle)))
        assert render_view(extract(ExtractionSource.replay(hello_bundle))) == first
        shuffled()
    assert seen == 5
    assert clock.elapsed < 10


def test_criterion_5_golden_fixture(hello_bundle):
    with Clock() as clock:
        rig = extract(ExtractionSource.replay(hello_bundle))
    comps = list(rig.components.values())
    assert len(comps) == 2
    assert sorted(c.type.value for c in comps) == ["executable", "static_library"]
    assert {c.programming_language for c in comps} == {"cxx"}
    assert sum(len(c.depends_on_ids) for c in comps) == 1
    wired = [t for t in rig.tests.values() if t.test_executable_component_id in rig.components]
    assert len(wired) >= 1
    assert all(node.evidence_ids for node in rig.nodes())
    assert clock.elapsed < 1.0


def test_criterion_6_round_trips(tmp_path):
    seen = 0

    @settings(max_examples=100, phases=[Phase.generate], deadline=None)
    @given(graph_specs(max_nodes=50))
    def round_trip(spec):
        nonlocal seen
        rig = materialize(spec)
        text = render_view(rig)
        back = load_view(text)
        finalize(back, AUTHORED, root=".")
        hydrate(back)
        assert render_view(back) == text
        path = tmp_path / "g.db"
        save(rig, path)
        assert load(path) == rig
        seen += 1

    with Clock() as clock:
        round_trip()
    assert seen == 100
    assert clock.elapsed < 30


def _reaches(edges, src, dst):
    stack, seen = list(edges[src]), set()
    while stack:
        n = stack.pop()
        if n == dst:
            return True
        if n not in seen:
            seen.add(n)
            stack.extend(edges[n])
    return False


def test_criterion_7_query_oracles():
    rng = random.Random(20260)
    with Clock() as clock:
        for _ in range(200):
            n = rng.randint(1, 12)
            edges = random_dag(rng, n)
            kinds = {name: "agg" for name in edges if rng.random() < 0.25}
            rig = dag_rig(edges, kinds)
            for target in edges:
                expected = sorted(x for x in edges if _reaches(edges, x, target))
                assert reverse_closure(rig, target).names == expected
            order = build_order(rig).names
            components = sorted(x for x in edges if x not in kinds)
            assert sorted(order) == components
            pos = {x: i for i, x in enumerate(order)}
            for c in components:
                for d in components:
                    if _reaches(edges, c, d):
                        assert pos[d] < pos[c]
    assert clock.elapsed < 30


def test_criterion_8_metaffi_example(metaffi_view):
    with Clock() as clock:
        rig = read_view(metaffi_view)
        finalize(rig, AUTHORED, root=metaffi_view.parent)
        deps = set(direct_deps(rig, "MetaFFI").names)
    assert deps == {"go", "metaffi-core", "openjdk", "python311"}
    assert json.loads(metaffi_view.read_text())["aggregators"][0]["name"] == "MetaFFI"
    assert clock.elapsed < 0.5


def test_criterion_9_agent_study_out_of_scope():
    pytest.skip("agent accuracy and timing results need commercial LLM agents; "
                "criteria 6 and 7 property suites stand in for them")
