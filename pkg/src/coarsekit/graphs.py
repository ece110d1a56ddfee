"""Finite multigraphs with their path metric, vertex boundaries and exact conductance.

Graphs here are undirected, loop-free, and may carry parallel edges.  Vertices are
``0 .. n-1``.  Also holds the expander family generators (Margulis and random
regular) and the plain-text edge-list format used by the command line.
"""
from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import shortest_path

UNREACHABLE = math.inf

# 2**24 subsets is the largest exhaustive scan we allow.
EXHAUSTIVE_LIMIT = 24


class GraphError(ValueError):
    pass


class FiniteGraph:
    """Undirected loop-free multigraph on vertices ``0 .. vertex_count-1``.

    ``edges`` is an ``(m, 2)`` integer array with ``u < v`` in every row; parallel
    edges appear as repeated rows.  Connectivity is computed once and cached.
    """

    def __init__(self, vertex_count: int, edges: Iterable[Sequence[int]]):
        n = int(vertex_count)
        if n < 1:
            raise GraphError("vertex_count must be positive")
        arr = np.asarray(list(edges), dtype=np.int64).reshape(-1, 2)
        if arr.size:
            if arr.min() < 0 or arr.max() >= n:
                bad = arr[(arr < 0).any(axis=1) | (arr >= n).any(axis=1)][0]
                raise GraphError(f"edge endpoint out of range: {tuple(bad)} for n={n}")
            loops = arr[:, 0] == arr[:, 1]
            if loops.any():
                raise GraphError(f"self-loop at vertex {int(arr[loops][0, 0])}")
            arr = np.sort(arr, axis=1)
        self.vertex_count = n
        self.edges = arr
        self.edges.setflags(write=False)
        deg = np.zeros(n, dtype=np.int64)
        np.add.at(deg, arr[:, 0], 1)
        np.add.at(deg, arr[:, 1], 1)
        self.degrees = deg
        self.degrees.setflags(write=False)
        self._cache: dict = {}

    def __repr__(self) -> str:
        return f"FiniteGraph(n={self.vertex_count}, m={self.edge_count}, d_max={self.max_degree})"

    @property
    def edge_count(self) -> int:
        return int(self.edges.shape[0])

    @property
    def max_degree(self) -> int:
        return int(self.degrees.max()) if self.vertex_count else 0

    @cached_property
    def neighbors(self) -> list[list[int]]:
        """Adjacency lists; a neighbor joined by k parallel edges appears k times."""
        adj: list[list[int]] = [[] for _ in range(self.vertex_count)]
        for u, v in self.edges.tolist():
            adj[u].append(v)
            adj[v].append(u)
        return adj

    @cached_property
    def adjacency_sparse(self) -> csr_matrix:
        n = self.vertex_count
        u, v = self.edges[:, 0], self.edges[:, 1]
        data = np.ones(2 * len(u))
        # duplicate (row, col) entries are summed, which records multiplicity
        return csr_matrix((data, (np.r_[u, v], np.r_[v, u])), shape=(n, n))

    @cached_property
    def is_connected(self) -> bool:
        return bool(np.all(np.isfinite(bfs_distances(self, 0))))

    @cached_property
    def distance_matrix(self) -> np.ndarray:
        """All-pairs path distances as floats (``inf`` between components)."""
        return shortest_path(self.adjacency_sparse, unweighted=True, directed=False)

    def edge_multiset(self) -> list[tuple[int, int]]:
        return sorted(map(tuple, self.edges.tolist()))

    def require_connected(self) -> None:
        if not self.is_connected:
            raise GraphError("operation requires a connected graph")


def build_graph(vertex_count: int, edges: Iterable[Sequence[int]]) -> FiniteGraph:
    """Validate and build a graph.  Disconnected input is accepted; check ``is_connected``."""
    return FiniteGraph(vertex_count, edges)


def cycle_graph(n: int) -> FiniteGraph:
    if n < 3:
        raise GraphError("cycle needs n >= 3")
    return FiniteGraph(n, [(i, (i + 1) % n) for i in range(n)])


def path_graph(n: int) -> FiniteGraph:
    return FiniteGraph(n, [(i, i + 1) for i in range(n - 1)])


def complete_graph(n: int) -> FiniteGraph:
    return FiniteGraph(n, [(i, j) for i in range(n) for j in range(i + 1, n)])


def bfs_distances(g: FiniteGraph, source: int) -> np.ndarray:
    dist = np.full(g.vertex_count, UNREACHABLE)
    dist[source] = 0
    queue = deque([source])
    adj = g.neighbors
    while queue:
        x = queue.popleft()
        for y in adj[x]:
            if dist[y] == UNREACHABLE:
                dist[y] = dist[x] + 1
                queue.append(y)
    return dist


def graph_distance(g: FiniteGraph, u: int, v: int) -> float:
    """Path distance between ``u`` and ``v``; ``UNREACHABLE`` (inf) across components."""
    for x in (u, v):
        if not 0 <= x < g.vertex_count:
            raise GraphError(f"vertex {x} out of range")
    if u == v:
        return 0
    d = bfs_distances(g, u)[v]
    return int(d) if np.isfinite(d) else UNREACHABLE


def vertex_boundary(g: FiniteGraph, a: Iterable[int]) -> frozenset[int]:
    """Vertices at distance exactly one from the set ``a``."""
    aset = set(int(x) for x in a)
    if not aset:
        raise GraphError("vertex_boundary needs a nonempty set")
    if min(aset) < 0 or max(aset) >= g.vertex_count:
        raise GraphError("set contains a vertex out of range")
    adj = g.neighbors
    return frozenset(y for x in aset for y in adj[x] if y not in aset)


def _neighbor_masks(g: FiniteGraph) -> np.ndarray:
    masks = np.zeros(g.vertex_count, dtype=np.uint64)
    for u, v in g.edges.tolist():
        masks[u] |= np.uint64(1 << v)
        masks[v] |= np.uint64(1 << u)
    return masks


def _subset_unions(masks: np.ndarray, bits: int) -> np.ndarray:
    """Entry ``s`` is the OR of ``masks[k]`` over the bits ``k`` set in ``s``."""
    out = np.zeros(1 << bits, dtype=np.uint64)
    for k in range(bits):
        half = 1 << k
        out[half : 2 * half] = out[:half] | masks[k]
    return out


def conductance_exact(g: FiniteGraph) -> Fraction:
    """Minimum of |boundary(A)| / |A| over nonempty A with |A| <= n/2, as an exact rational.

    Exhaustive over all subsets, so limited to ``EXHAUSTIVE_LIMIT`` vertices; for larger
    graphs use the spectral lower bound ``lambda1 / (2 d_max)``.
    """
    n = g.vertex_count
    if n > EXHAUSTIVE_LIMIT:
        raise GraphError(
            f"exhaustive conductance limited to n <= {EXHAUSTIVE_LIMIT} (got {n}); "
            "use spectral.lambda1(g).conductance_lower_bound instead"
        )
    if n < 2:
        raise GraphError("conductance needs at least two vertices")
    g.require_connected()
    half = n // 2
    low = min(n, 20)
    masks = _neighbor_masks(g)
    low_union = _subset_unions(masks[:low], low)
    low_ids = np.arange(1 << low, dtype=np.uint64)
    low_sizes = np.bitwise_count(low_ids).astype(np.int64)
    high_union = _subset_unions(masks[low:], n - low)
    best = [None] * (half + 1)
    for h in range(1 << (n - low)):
        hsize = int(h).bit_count()
        if hsize > half:
            continue
        sizes = low_sizes + hsize
        ids = low_ids | np.uint64(h << low)
        bd = np.bitwise_count(
            (low_union | high_union[h]) & ~ids & np.uint64((1 << n) - 1)
        ).astype(np.int64)
        for s in range(max(1, hsize), half + 1):
            sel = sizes == s
            if sel.any():
                m = int(bd[sel].min())
                if best[s] is None or m < best[s]:
                    best[s] = m
    return min(Fraction(b, s) for s, b in enumerate(best) if s >= 1 and b is not None)


def margulis_graph(n: int) -> FiniteGraph:
    """Degree-8 Margulis / Gabber-Galil multigraph on (Z/n)^2.

    Vertex (x, y) has id ``x*n + y`` and is joined to its images under
    (x, x+y), (x, x+y+1), (x+y, y), (x+y+1, y); the inverse maps give the same edges
    seen from the other end.  Parallel edges are kept and loops dropped, so vertices
    fixed by some map have degree below 8.
    """
    if n < 2:
        raise GraphError("margulis_graph needs n >= 2")
    edges = []
    for x in range(n):
        for y in range(n):
            v = x * n + y
            for a, b in ((x, x + y), (x, x + y + 1), (x + y, y), (x + y + 1, y)):
                w = (a % n) * n + (b % n)
                if w != v:
                    edges.append((v, w))
    return FiniteGraph(n * n, edges)


def random_regular(n: int, d: int, seed: int, max_restarts: int = 1000) -> FiniteGraph:
    """Simple d-regular graph from the configuration model, rejecting loops and repeats.

    Stubs are paired after a shuffle; valid pairs are kept and the leftover stubs
    re-shuffled.  When the leftovers cannot be completed the whole pairing restarts.
    """
    if n * d % 2:
        raise GraphError("n * d must be even")
    if not 0 <= d < n:
        raise GraphError("need 0 <= d < n")
    rng = np.random.default_rng(seed)
    if d == 0:
        return FiniteGraph(n, [])
    for _ in range(max_restarts):
        edges = _try_pairing(n, d, rng)
        if edges is not None:
            return FiniteGraph(n, sorted(edges))
    raise GraphError(f"random_regular({n}, {d}) failed after {max_restarts} restarts")


def _try_pairing(n: int, d: int, rng: np.random.Generator) -> set | None:
    edges: set[tuple[int, int]] = set()
    stubs = np.repeat(np.arange(n), d)
    while stubs.size:
        rng.shuffle(stubs)
        leftover = []
        for s1, s2 in zip(stubs[0::2].tolist(), stubs[1::2].tolist()):
            e = (min(s1, s2), max(s1, s2))
            if s1 != s2 and e not in edges:
                edges.add(e)
            else:
                leftover += [s1, s2]
        if len(leftover) == stubs.size:
            # no progress: check whether any admissible pair remains at all
            rest = sorted(set(leftover))
            if not any(
                (a, b) not in edges for i, a in enumerate(rest) for b in rest[i + 1 :]
            ):
                return None
        stubs = np.asarray(leftover, dtype=np.int64)
    return edges


FAMILY_KINDS = ("margulis", "random_regular", "cycle", "complete")


@dataclass
class ExpanderFamily:
    """Graphs of strictly increasing size, tagged with how they were generated.

    ``members`` pairs every graph with its spectral certificate (computed on first
    access).  ``cycle`` and ``complete`` kinds exist as controls.
    """

    kind: str
    sizes: list[int]
    degree: int | None = None
    seed: int = 0
    graphs: list[FiniteGraph] = field(default_factory=list, repr=False)

    def __post_init__(self) -> None:
        counts = [g.vertex_count for g in self.graphs]
        if any(b <= a for a, b in zip(counts, counts[1:])):
            raise GraphError(f"member sizes must strictly increase, got {counts}")

    @property
    def members(self) -> list[tuple[FiniteGraph, object]]:
        from .spectral import lambda1

        return [(g, lambda1(g)) for g in self.graphs]

    def __len__(self) -> int:
        return len(self.graphs)


def member_seed(seed: int, index: int) -> int:
    """Independent per-member seed so members can be built in any order."""
    return int(np.random.SeedSequence([seed, index]).generate_state(1)[0])


def expander_family(kind: str, sizes: Sequence[int], degree: int = 4, seed: int = 0) -> ExpanderFamily:
    if kind not in FAMILY_KINDS:
        raise GraphError(f"unknown family kind {kind!r}; expected one of {FAMILY_KINDS}")
    sizes = [int(s) for s in sizes]
    if kind == "margulis":
        graphs = [margulis_graph(s) for s in sizes]
        degree = 8
    elif kind == "random_regular":
        graphs = [random_regular(s, degree, member_seed(seed, i)) for i, s in enumerate(sizes)]
    elif kind == "cycle":
        graphs = [cycle_graph(s) for s in sizes]
        degree = 2
    else:
        graphs = [complete_graph(s) for s in sizes]
        degree = None
    return ExpanderFamily(kind, sizes, degree, seed, graphs)


# --- edge-list text format -------------------------------------------------

def format_edgelist(g: FiniteGraph) -> str:
    lines = [f"{g.vertex_count} {g.edge_count}"]
    lines += [f"{u} {v}" for u, v in g.edges.tolist()]
    return "\n".join(lines) + "\n"


def parse_edgelist(text: str) -> FiniteGraph:
    rows = [ln.split() for ln in text.splitlines() if ln.strip() and not ln.lstrip().startswith("#")]
    if not rows or len(rows[0]) != 2:
        raise GraphError("edge list must start with a line 'n m'")
    try:
        n, m = int(rows[0][0]), int(rows[0][1])
        edges = [(int(r[0]), int(r[1])) for r in rows[1:]]
    except (ValueError, IndexError) as exc:
        raise GraphError(f"malformed edge list: {exc}") from None
    if any(len(r) != 2 for r in rows[1:]):
        raise GraphError("every edge line must hold exactly two vertex ids")
    if len(edges) != m:
        raise GraphError(f"header declares {m} edges, found {len(edges)}")
    return FiniteGraph(n, edges)


def read_edgelist(path: str | Path) -> FiniteGraph:
    return parse_edgelist(Path(path).read_text())
