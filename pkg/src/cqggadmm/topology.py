"""Bipartite worker graphs and their incidence-matrix representations.

Workers are split into a head group and a tail group by a breadth-first
two-coloring that starts from worker 0 (a head). Heads only talk to tails.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable

import numpy as np

from .errors import InvalidArgument, InvalidEdge, NotBipartite, NotConnected, ParseError

Edge = tuple[int, int]


@dataclass(frozen=True)
class Topology:
    n_workers: int
    edges: tuple[Edge, ...]
    heads: tuple[int, ...]
    tails: tuple[int, ...]
    neighbors: tuple[tuple[int, ...], ...]
    degree: tuple[int, ...]

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    def is_head(self, n: int) -> bool:
        return n in self._head_set

    @property
    def _head_set(self) -> frozenset[int]:
        return frozenset(self.heads)

    def oriented_edges(self) -> list[Edge]:
        """Edges as (head, tail) pairs, in sorted edge order."""
        heads = self._head_set
        return [(u, v) if u in heads else (v, u) for u, v in self.edges]


@dataclass(frozen=True)
class IncidenceSet:
    m_signed: np.ndarray
    m_unsigned: np.ndarray
    degree_matrix: np.ndarray
    adjacency: np.ndarray
    c_block: np.ndarray


def _normalize_edges(n_workers: int, edges: Iterable[Iterable[int]]) -> tuple[Edge, ...]:
    out = set()
    for pair in edges:
        u, v = (int(x) for x in pair)
        if not (0 <= u < n_workers and 0 <= v < n_workers):
            raise InvalidEdge(f"edge ({u}, {v}) out of range for {n_workers} workers")
        if u == v:
            raise InvalidEdge(f"self-loop at worker {u}")
        out.add((min(u, v), max(u, v)))
    return tuple(sorted(out))


def build_topology(n_workers: int, edges: Iterable[Iterable[int]]) -> Topology:
    """Validate a worker graph and split it into heads and tails.

    Raises
    ------
    InvalidEdge
        Out-of-range endpoint or self-loop.
    NotConnected
        The graph has more than one component.
    NotBipartite
        The graph contains an odd cycle.
    """
    if n_workers < 2:
        raise InvalidArgument(f"need at least 2 workers, got {n_workers}")
    edge_list = _normalize_edges(n_workers, edges)

    adj: list[list[int]] = [[] for _ in range(n_workers)]
    for u, v in edge_list:
        adj[u].append(v)
        adj[v].append(u)
    for nbrs in adj:
        nbrs.sort()

    color = [-1] * n_workers
    color[0] = 0
    queue = deque([0])
    while queue:
        u = queue.popleft()
        for v in adj[u]:
            if color[v] < 0:
                color[v] = 1 - color[u]
                queue.append(v)
            elif color[v] == color[u]:
                raise NotBipartite(f"odd cycle through edge ({u}, {v})")
    unreached = [n for n in range(n_workers) if color[n] < 0]
    if unreached:
        raise NotConnected(f"workers {unreached} are not reachable from worker 0")

    return Topology(
        n_workers=n_workers,
        edges=edge_list,
        heads=tuple(n for n in range(n_workers) if color[n] == 0),
        tails=tuple(n for n in range(n_workers) if color[n] == 1),
        neighbors=tuple(tuple(nbrs) for nbrs in adj),
        degree=tuple(len(nbrs) for nbrs in adj),
    )


def incidence_set(topology: Topology) -> IncidenceSet:
    """Signed/unsigned incidence matrices with both orientations of every edge.

    Columns ``0..E-1`` hold the head->tail orientation of the sorted edges,
    columns ``E..2E-1`` the tail->head orientation.
    """
    n, e = topology.n_workers, topology.n_edges
    oriented = topology.oriented_edges()
    m_signed = np.zeros((n, 2 * e), dtype=np.int64)
    m_unsigned = np.zeros((n, 2 * e), dtype=np.int64)
    for j, (h, t) in enumerate(oriented):
        for col, (src, dst) in ((j, (h, t)), (e + j, (t, h))):
            m_signed[src, col] = 1
            m_signed[dst, col] = -1
            m_unsigned[src, col] = 1
            m_unsigned[dst, col] = 1

    adjacency = np.zeros((n, n), dtype=np.int64)
    c_block = np.zeros((n, n), dtype=np.int64)
    for h, t in oriented:
        adjacency[h, t] = adjacency[t, h] = 1
        c_block[h, t] = 1
    degree_matrix = np.diag(np.asarray(topology.degree, dtype=np.int64))
    return IncidenceSet(m_signed, m_unsigned, degree_matrix, adjacency, c_block)


def generate_path(n_workers: int) -> Topology:
    if n_workers < 2:
        raise InvalidArgument(f"a path needs at least 2 workers, got {n_workers}")
    return build_topology(n_workers, [(i, i + 1) for i in range(n_workers - 1)])


def _components(n: int, edges: Iterable[Edge]) -> list[list[int]]:
    parent = list(range(n))

    def find(x: int) -> int:
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for u, v in edges:
        ru, rv = find(u), find(v)
        if ru != rv:
            parent[max(ru, rv)] = min(ru, rv)
    groups: dict[int, list[int]] = {}
    for x in range(n):
        groups.setdefault(find(x), []).append(x)
    return sorted(groups.values(), key=lambda g: g[0])


def generate_random_bipartite(
    n_heads: int, n_tails: int, edge_prob: float, seed: int
) -> Topology:
    """Random head-tail graph; heads are ``0..n_heads-1``, tails follow.

    Each head-tail pair is linked with probability ``edge_prob``. A
    disconnected draw is repaired by adding one head-tail edge per extra
    component, visiting components in order of their smallest id.
    """
    if n_heads < 1 or n_tails < 1:
        raise InvalidArgument("need at least one head and one tail")
    if not 0.0 < edge_prob <= 1.0:
        raise InvalidArgument(f"edge_prob must lie in (0, 1], got {edge_prob}")
    n = n_heads + n_tails
    rng = np.random.default_rng(seed)
    draws = rng.random((n_heads, n_tails))
    edges = {
        (h, n_heads + t)
        for h in range(n_heads)
        for t in range(n_tails)
        if draws[h, t] < edge_prob
    }

    comps = _components(n, edges)
    merged = set(comps[0])
    pending = deque(comps[1:])
    while pending:
        comp = pending.popleft()
        comp_tails = [x for x in comp if x >= n_heads]
        merged_tails = sorted(x for x in merged if x >= n_heads)
        if comp_tails:
            head = min(x for x in merged if x < n_heads)
            edges.add((head, comp_tails[0]))
        elif merged_tails:
            edges.add((comp[0], merged_tails[0]))
        else:
            # lone head while only heads are merged; a tail component comes later
            pending.append(comp)
            continue
        merged.update(comp)
    return build_topology(n, sorted(edges))


def parse_edge_list(text: str) -> list[Edge]:
    """Parse ``u v`` lines; ``#`` starts a comment."""
    edges = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 2:
            raise ParseError(f"expected 'u v', got {raw!r}", line=lineno)
        try:
            edges.append((int(parts[0]), int(parts[1])))
        except ValueError:
            raise ParseError(f"non-integer worker id in {raw!r}", line=lineno) from None
    return edges


def load_edge_list(path: str | Path, n_workers: int | None = None) -> Topology:
    edges = parse_edge_list(Path(path).read_text())
    if n_workers is None:
        n_workers = 1 + max((max(e) for e in edges), default=0)
    return build_topology(n_workers, edges)


def format_edge_list(topology: Topology) -> str:
    lines = [f"# {topology.n_workers} workers, {topology.n_edges} edges"]
    lines += [f"{u} {v}" for u, v in topology.edges]
    return "\n".join(lines) + "\n"
