"""App-level call graph over method references, with BFS reachability.

A deliberate over-approximation: virtual dispatch is resolved by declared
target only, so edges are exactly the invoke instructions found in the code.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Iterable

from .dex import Invocation, MethodRef
from .manifest import ManifestModel

LIFECYCLE_METHODS = ("onCreate", "onStart", "onResume")


def class_name_to_descriptor(name: str) -> str:
    return "L" + name.replace(".", "/") + ";"


@dataclass(frozen=True)
class CallGraph:
    nodes: frozenset[MethodRef]
    edges: frozenset[tuple[MethodRef, MethodRef]]
    entry_points: frozenset[MethodRef]
    launcher_entry_points: frozenset[MethodRef]
    _adjacency: dict[MethodRef, tuple[MethodRef, ...]] = field(
        default_factory=dict, repr=False, compare=False
    )

    def successors(self, node: MethodRef) -> tuple[MethodRef, ...]:
        return self._adjacency.get(node, ())


def build_call_graph(
    invocations: Iterable[Invocation],
    manifest: ManifestModel,
    defined_methods: Iterable[MethodRef] = (),
) -> CallGraph:
    """Graph over app methods and referenced externals.

    Entry points are the lifecycle methods of manifest-declared activities;
    those belonging to launcher activities are additionally flagged.
    defined_methods seeds nodes for code-bearing methods that never call out.
    """
    nodes: set[MethodRef] = set(defined_methods)
    edges: set[tuple[MethodRef, MethodRef]] = set()
    adjacency: dict[MethodRef, list[MethodRef]] = {}
    for inv in invocations:
        nodes.add(inv.caller)
        nodes.add(inv.callee)
        edge = (inv.caller, inv.callee)
        if edge not in edges:
            edges.add(edge)
            adjacency.setdefault(inv.caller, []).append(inv.callee)

    activity_descriptors = {class_name_to_descriptor(c) for c in manifest.all_activities}
    launcher_descriptors = {
        class_name_to_descriptor(c) for c in manifest.launcher_activities
    }
    entry_points = {
        n
        for n in nodes
        if n.class_descriptor in activity_descriptors and n.name in LIFECYCLE_METHODS
    }
    launcher_entries = {
        n for n in entry_points if n.class_descriptor in launcher_descriptors
    }

    return CallGraph(
        nodes=frozenset(nodes),
        edges=frozenset(edges),
        entry_points=frozenset(entry_points),
        launcher_entry_points=frozenset(launcher_entries),
        _adjacency={k: tuple(v) for k, v in adjacency.items()},
    )


def shortest_distances(graph: CallGraph, start: MethodRef) -> dict[MethodRef, int]:
    """BFS edge-count distances from start to every reachable node."""
    distances = {start: 0}
    queue = deque([start])
    while queue:
        node = queue.popleft()
        for succ in graph.successors(node):
            if succ not in distances:
                distances[succ] = distances[node] + 1
                queue.append(succ)
    return distances


def reachable_from(graph: CallGraph, starts: Iterable[MethodRef]) -> frozenset[MethodRef]:
    seen: set[MethodRef] = set()
    queue = deque()
    for s in starts:
        if s not in seen:
            seen.add(s)
            queue.append(s)
    while queue:
        node = queue.popleft()
        for succ in graph.successors(node):
            if succ not in seen:
                seen.add(succ)
                queue.append(succ)
    return frozenset(seen)
