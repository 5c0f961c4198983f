"""Influence digraphs and their hierarchy of strongly connected nodes.

Arc convention: ``(j, i)`` means oscillator ``j`` influences oscillator ``i``,
i.e. ``j`` is in the neighbour set of ``i`` and ``chi[i, j] == 1``.  Every
reachability question (spanning tree, maximum node) follows that influence
direction.  Vertices are 0-based here; the JSON graph format is 1-based.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import InvalidConfig, NoSpanningTree

__all__ = [
    "Digraph",
    "NodeDecomposition",
    "has_spanning_tree",
    "strongly_connected_components",
    "maximum_nodes",
    "node_decomposition",
]


@dataclass(frozen=True)
class Digraph:
    n: int
    arcs: frozenset[tuple[int, int]] = field(default_factory=frozenset)

    def __post_init__(self) -> None:
        if self.n < 1:
            raise InvalidConfig(f"need at least one vertex, got n={self.n}")
        arcs = frozenset((int(j), int(i)) for j, i in self.arcs)
        for j, i in arcs:
            if not (0 <= j < self.n and 0 <= i < self.n):
                raise InvalidConfig(f"arc ({j}, {i}) out of range for n={self.n}")
            if i == j:
                raise InvalidConfig(f"self-loop at vertex {i}")
        object.__setattr__(self, "arcs", arcs)

    @classmethod
    def from_arcs(cls, n: int, arcs: Iterable[Sequence[int]]) -> "Digraph":
        return cls(n, frozenset((j, i) for j, i in arcs))

    @classmethod
    def from_adjacency(cls, chi) -> "Digraph":
        """Build from a (0,1) matrix with ``chi[i, j] = 1`` iff j influences i."""
        chi = np.asarray(chi)
        if chi.ndim != 2 or chi.shape[0] != chi.shape[1]:
            raise InvalidConfig("adjacency matrix must be square")
        ii, jj = np.nonzero(chi)
        return cls(chi.shape[0], frozenset(zip(jj.tolist(), ii.tolist())))

    @classmethod
    def complete(cls, n: int) -> "Digraph":
        return cls(n, frozenset((j, i) for i in range(n) for j in range(n) if i != j))

    @cached_property
    def neighbors(self) -> tuple[tuple[int, ...], ...]:
        """In-neighbours: ``neighbors[i]`` lists every j that influences i."""
        out: list[list[int]] = [[] for _ in range(self.n)]
        for j, i in self.arcs:
            out[i].append(j)
        return tuple(tuple(sorted(v)) for v in out)

    @cached_property
    def successors(self) -> tuple[tuple[int, ...], ...]:
        out: list[list[int]] = [[] for _ in range(self.n)]
        for j, i in self.arcs:
            out[j].append(i)
        return tuple(tuple(sorted(v)) for v in out)

    @cached_property
    def adjacency(self) -> np.ndarray:
        chi = np.zeros((self.n, self.n), dtype=np.int8)
        for j, i in self.arcs:
            chi[i, j] = 1
        chi.setflags(write=False)
        return chi

    @property
    def in_degree(self) -> np.ndarray:
        return self.adjacency.sum(axis=1)

    def subgraph(self, vertices: Iterable[int]) -> tuple["Digraph", list[int]]:
        """Induced subgraph, relabelled 0..m-1 in ascending original order."""
        keep = sorted(set(vertices))
        index = {v: k for k, v in enumerate(keep)}
        arcs = frozenset(
            (index[j], index[i]) for j, i in self.arcs if j in index and i in index
        )
        return Digraph(len(keep), arcs), keep

    def to_json(self) -> dict:
        return {"n": self.n, "arcs": [[j + 1, i + 1] for j, i in sorted(self.arcs)]}

    @classmethod
    def from_json(cls, obj: dict | str | Path) -> "Digraph":
        if isinstance(obj, (str, Path)):
            try:
                obj = json.loads(Path(obj).read_text())
            except (OSError, json.JSONDecodeError) as exc:
                raise InvalidConfig(f"cannot read graph from {obj}: {exc}") from exc
        try:
            n = int(obj["n"])
            arcs = [(int(j) - 1, int(i) - 1) for j, i in obj.get("arcs", [])]
        except (KeyError, TypeError, ValueError) as exc:
            raise InvalidConfig(f"malformed graph JSON: {exc}") from exc
        return cls.from_arcs(n, arcs)


def has_spanning_tree(g: Digraph) -> bool:
    """True iff some vertex reaches every other vertex along influence arcs."""
    # The vertex finished last by a full DFS is the only candidate root.
    seen = [False] * g.n
    last = 0
    for start in range(g.n):
        if seen[start]:
            continue
        seen[start] = True
        stack = [(start, iter(g.successors[start]))]
        while stack:
            v, it = stack[-1]
            for w in it:
                if not seen[w]:
                    seen[w] = True
                    stack.append((w, iter(g.successors[w])))
                    break
            else:
                stack.pop()
        last = start
    return len(_reach(g, last)) == g.n


def _reach(g: Digraph, root: int) -> set[int]:
    seen = {root}
    frontier = [root]
    while frontier:
        v = frontier.pop()
        for w in g.successors[v]:
            if w not in seen:
                seen.add(w)
                frontier.append(w)
    return seen


def strongly_connected_components(g: Digraph) -> list[frozenset[int]]:
    """Maximal strongly connected vertex sets (iterative Tarjan).

    Components are returned ordered by their smallest vertex.
    """
    index: dict[int, int] = {}
    low: dict[int, int] = {}
    on_stack: set[int] = set()
    stack: list[int] = []
    comps: list[frozenset[int]] = []
    counter = 0

    for root in range(g.n):
        if root in index:
            continue
        work = [(root, 0)]
        while work:
            v, pos = work.pop()
            if pos == 0:
                index[v] = low[v] = counter
                counter += 1
                stack.append(v)
                on_stack.add(v)
            succ = g.successors[v]
            recurse = False
            while pos < len(succ):
                w = succ[pos]
                pos += 1
                if w not in index:
                    work.append((v, pos))
                    work.append((w, 0))
                    recurse = True
                    break
                if w in on_stack:
                    low[v] = min(low[v], index[w])
            if recurse:
                continue
            if low[v] == index[v]:
                comp = set()
                while True:
                    w = stack.pop()
                    on_stack.discard(w)
                    comp.add(w)
                    if w == v:
                        break
                comps.append(frozenset(comp))
            if work:
                parent = work[-1][0]
                low[parent] = min(low[parent], low[v])
    return sorted(comps, key=min)


def maximum_nodes(g: Digraph) -> list[frozenset[int]]:
    """SCCs receiving no arc from outside themselves (condensation sources)."""
    comps = strongly_connected_components(g)
    comp_of = {v: k for k, c in enumerate(comps) for v in c}
    fed = set()
    for j, i in g.arcs:
        if comp_of[j] != comp_of[i]:
            fed.add(comp_of[i])
    return [c for k, c in enumerate(comps) if k not in fed]


@dataclass(frozen=True)
class NodeDecomposition:
    """Layers G_0..G_d obtained by repeatedly peeling maximum nodes.

    ``groups[k]`` keeps the individual maximum nodes merged into layer k.
    """

    n: int
    layers: tuple[tuple[int, ...], ...]
    groups: tuple[tuple[tuple[int, ...], ...], ...]

    @property
    def d(self) -> int:
        return len(self.layers) - 1

    @cached_property
    def sizes(self) -> tuple[int, ...]:
        return tuple(len(layer) for layer in self.layers)

    @cached_property
    def prefix_sizes(self) -> tuple[int, ...]:
        return tuple(int(s) for s in np.cumsum(self.sizes))

    @cached_property
    def layer_of(self) -> tuple[int, ...]:
        out = [0] * self.n
        for k, layer in enumerate(self.layers):
            for v in layer:
                out[v] = k
        return tuple(out)

    @property
    def merged(self) -> bool:
        return any(len(gr) > 1 for gr in self.groups)

    def to_json(self) -> dict:
        return {
            "n": self.n,
            "d": self.d,
            "layers": [[v + 1 for v in layer] for layer in self.layers],
            "groups": [[[v + 1 for v in node] for node in gr] for gr in self.groups],
            "sizes": list(self.sizes),
            "prefix_sizes": list(self.prefix_sizes),
        }


def node_decomposition(g: Digraph) -> NodeDecomposition:
    if not has_spanning_tree(g):
        raise NoSpanningTree("digraph has no spanning tree; the maximum node is not unique")
    remaining = set(range(g.n))
    layers: list[tuple[int, ...]] = []
    groups: list[tuple[tuple[int, ...], ...]] = []
    while remaining:
        sub, labels = g.subgraph(remaining)
        nodes = [tuple(sorted(labels[v] for v in c)) for c in maximum_nodes(sub)]
        nodes.sort()
        layer = tuple(sorted(v for node in nodes for v in node))
        layers.append(layer)
        groups.append(tuple(nodes))
        remaining.difference_update(layer)
    return NodeDecomposition(g.n, tuple(layers), tuple(groups))
