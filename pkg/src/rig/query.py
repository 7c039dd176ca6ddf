"""Structural questions over a finalized RIG: deps, impact, build order, coverage."""

from __future__ import annotations

import heapq
from collections import deque
from dataclasses import dataclass, field

from rig.model import RIG, Component, Node, RIGError, collection_of
from rig.view import IdAssignment, rendered_key


class QueryError(RIGError, LookupError):
    pass


class NotFoundError(QueryError):
    pass


class AmbiguousNameError(QueryError):
    def __init__(self, ref: str, candidates: list[str]):
        super().__init__(f"{ref!r} is ambiguous: {', '.join(candidates)}")
        self.candidates = candidates


@dataclass(frozen=True)
class Entry:
    id: str
    name: str


@dataclass
class QueryResult:
    kind: str  # name_list | ordered_name_list | name_set
    entries: list[Entry] = field(default_factory=list)

    @property
    def names(self) -> list[str]:
        return [e.name for e in self.entries]

    def to_json(self) -> list[dict]:
        return [{"id": e.id, "name": e.name} for e in self.entries]


class GraphQuery:
    def __init__(self, rig: RIG):
        self.rig = rig
        self.ids = IdAssignment(rig)
        self._nodes = {n.id: n for n in rig.nodes()}
        self._rid = {nid: self.ids.node(nid) for nid in self._nodes}
        self._dependents: dict[str, set[str]] = {nid: set() for nid in self._nodes}
        for n in self._nodes.values():
            for d in n.depends_on_ids:
                if d in self._dependents:
                    self._dependents[d].add(n.id)

    def _entry(self, nid: str) -> Entry:
        return Entry(self._rid[nid], self._nodes[nid].name)

    def _sorted(self, kind: str, nids) -> QueryResult:
        entries = [self._entry(n) for n in nids]
        entries.sort(key=lambda e: (e.name, rendered_key(e.id)))
        return QueryResult(kind, entries)

    def resolve(self, ref: str) -> Node:
        """Rendered id, then exact name, then unique name prefix."""
        try:
            collection, nid = self.ids.internal(ref)
        except KeyError:
            pass
        else:
            if nid in self._nodes and collection_of(self._nodes[nid]) == collection:
                return self._nodes[nid]
        for match in (lambda n: n.name == ref, lambda n: n.name.startswith(ref)):
            hits = sorted((n for n in self._nodes.values() if match(n)), key=lambda n: rendered_key(self._rid[n.id]))
            if len(hits) == 1:
                return hits[0]
            if hits:
                raise AmbiguousNameError(ref, [f"{self._rid[n.id]} ({n.name})" for n in hits])
        raise NotFoundError(f"no node matches {ref!r}")

    def direct_deps(self, ref: str) -> QueryResult:
        node = self.resolve(ref)
        return self._sorted("name_list", (d for d in node.depends_on_ids if d in self._nodes))

    def reverse_closure(self, ref: str, components_only: bool = False) -> QueryResult:
        """Every node that reaches ``ref`` along depends_on edges.

        Traversal always crosses all node kinds; ``components_only`` filters
        the answer, not the walk.
        """
        start = self.resolve(ref).id
        seen: set[str] = set()
        queue = deque([start])
        while queue:
            for dep in self._dependents[queue.popleft()]:
                if dep not in seen:
                    seen.add(dep)
                    queue.append(dep)
        seen.discard(start)
        if components_only:
            seen = {n for n in seen if isinstance(self._nodes[n], Component)}
        return self._sorted("name_set", seen)

    def component_prerequisites(self, cid: str) -> set[str]:
        """Components that must be built before ``cid``.

        Paths through aggregators, runners, and tests are followed until
        they hit a component.
        """
        found: set[str] = set()
        seen: set[str] = set()
        stack = [d for d in self._nodes[cid].depends_on_ids if d in self._nodes]
        while stack:
            nid = stack.pop()
            if nid in seen:
                continue
            seen.add(nid)
            if isinstance(self._nodes[nid], Component):
                found.add(nid)
            else:
                stack.extend(d for d in self._nodes[nid].depends_on_ids if d in self._nodes)
        found.discard(cid)
        return found

    def build_order(self) -> QueryResult:
        comps = self.rig.components
        pending = {cid: self.component_prerequisites(cid) for cid in comps}
        users: dict[str, list[str]] = {cid: [] for cid in comps}
        for cid, reqs in pending.items():
            for r in reqs:
                users[r].append(cid)

        def key(cid: str):
            return (comps[cid].name, rendered_key(self._rid[cid]), cid)

        ready = [key(cid) for cid, reqs in pending.items() if not reqs]
        heapq.heapify(ready)
        order = []
        while ready:
            cid = heapq.heappop(ready)[2]
            order.append(cid)
            for user in users[cid]:
                pending[user].discard(cid)
                if not pending[user]:
                    heapq.heappush(ready, key(user))
        if len(order) != len(comps):
            raise QueryError("component dependencies contain a cycle; no build order exists")
        return QueryResult("ordered_name_list", [self._entry(c) for c in order])

    def tests_covering(self, ref: str) -> QueryResult:
        node = self.resolve(ref)
        if not isinstance(node, Component):
            raise NotFoundError(f"{ref!r} resolves to {self._rid[node.id]}, which is not a component")
        hits = [
            t.id for t in self.rig.tests.values()
            if node.id in t.components_being_tested_ids or t.test_executable_component_id == node.id
        ]
        return self._sorted("name_list", hits)


def direct_deps(rig: RIG, node: str) -> QueryResult:
    return GraphQuery(rig).direct_deps(node)


def reverse_closure(rig: RIG, node: str, components_only: bool = False) -> QueryResult:
    return GraphQuery(rig).reverse_closure(node, components_only)


def build_order(rig: RIG) -> QueryResult:
    return GraphQuery(rig).build_order()


def tests_covering(rig: RIG, component: str) -> QueryResult:
    return GraphQuery(rig).tests_covering(component)
