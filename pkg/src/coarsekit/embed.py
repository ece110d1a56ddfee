"""Euclidean images of finite graphs: Lipschitz constants, the pair/edge energy ratio
D_f, its spectral upper bound c0, and the concentration quantities that follow.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .graphs import FiniteGraph, GraphError
from .spectral import laplacian_matrix, lambda1

CONSTANT_TOL = 1e-12
RADIUS_SLACK = 1e-6


@dataclass
class Embedding:
    graph: FiniteGraph
    coords: np.ndarray
    meta: dict = field(default_factory=dict, repr=False)

    def __post_init__(self) -> None:
        c = np.asarray(self.coords, dtype=float)
        if c.ndim == 1:
            c = c[:, None]
        if c.shape[0] != self.graph.vertex_count:
            raise ValueError(
                f"coords has {c.shape[0]} rows, graph has {self.graph.vertex_count} vertices"
            )
        self.coords = c

    @property
    def dim(self) -> int:
        return self.coords.shape[1]

    @property
    def nonconstant(self) -> bool:
        c = self.coords
        return bool(np.any(np.abs(c - c[0]) > CONSTANT_TOL))


def _edge_sq(g: FiniteGraph, coords: np.ndarray) -> np.ndarray:
    d = coords[..., g.edges[:, 0], :] - coords[..., g.edges[:, 1], :]
    return np.sum(d * d, axis=-1)


def _pair_sq_sum(coords: np.ndarray) -> np.ndarray:
    """Sum of squared distances over unordered pairs, by direct enumeration."""
    n = coords.shape[-2]
    iu, ju = np.triu_indices(n, 1)
    d = coords[..., iu, :] - coords[..., ju, :]
    return np.sum(d * d, axis=(-1, -2))


def lipschitz_constant(e: Embedding) -> float:
    """Largest image length of an edge; equals the Lipschitz constant for the path metric."""
    if e.graph.edge_count == 0:
        return 0.0
    return float(np.sqrt(_edge_sq(e.graph, e.coords).max()))


def d_ratio(e: Embedding) -> float:
    if not e.nonconstant:
        raise ValueError("d_ratio is undefined for a constant map")
    return float(d_ratio_batch(e.graph, e.coords[None])[0])


def d_ratio_batch(g: FiniteGraph, coords: np.ndarray) -> np.ndarray:
    """D_f for a stack of maps ``coords[b]`` of shape ``(n, dim)``."""
    coords = np.asarray(coords, dtype=float)
    n, m = g.vertex_count, g.edge_count
    pairs = n * (n - 1) / 2
    edge_mean = _edge_sq(g, coords).sum(axis=-1) / m if m else np.zeros(coords.shape[0])
    if np.any(edge_mean <= 0):
        raise ValueError("D_f needs a map that is nonconstant along some edge")
    return (_pair_sq_sum(coords) / pairs) / edge_mean


def c0_bound(g: FiniteGraph) -> float:
    """d_max * n / ((n - 1) * lambda1): an upper bound for D_f over every nonconstant map.

    Pair energy of a centered map is n * sum |f|^2 <= n * (edge energy) / lambda1, and
    there are n(n-1)/2 pairs against at most d_max * n / 2 edges.
    """
    g.require_connected()
    n = g.vertex_count
    return g.max_degree * n / ((n - 1) * lambda1(g).lambda1)


@dataclass(frozen=True)
class ConcentrationReport:
    c0: float
    radius: float
    inside_count: int
    total: int
    mean_squared_norm: float
    pair_mean: float
    shift: np.ndarray
    scale: float

    @property
    def pair_mean_ok(self) -> bool:
        return self.pair_mean <= self.c0 * (1 + 1e-9)

    @property
    def mean_squared_norm_ok(self) -> bool:
        return self.mean_squared_norm <= self.c0 / 2 * (1 + 1e-9)

    @property
    def majority_inside(self) -> bool:
        return 2 * self.inside_count > self.total

    @property
    def ok(self) -> bool:
        return self.pair_mean_ok and self.mean_squared_norm_ok and self.majority_inside


def corollary_report(e: Embedding, c0: float | None = None) -> ConcentrationReport:
    """Center the map, shrink it to Lipschitz constant <= 1 if needed, and measure
    the pair mean, the mean squared norm, and how many points sit within
    ``(1 + 1e-6) * sqrt(c0)`` of the origin."""
    if not e.nonconstant:
        raise ValueError("corollary_report needs a nonconstant map")
    g = e.graph
    if c0 is None:
        c0 = c0_bound(g)
    shift = -e.coords.mean(axis=0)
    f = e.coords + shift
    lip = lipschitz_constant(Embedding(g, f))
    scale = 1.0 / lip if lip > 1 else 1.0
    f = f * scale
    n = g.vertex_count
    norms_sq = np.sum(f * f, axis=1)
    radius = (1 + RADIUS_SLACK) * math.sqrt(c0)
    return ConcentrationReport(
        c0=c0,
        radius=radius,
        inside_count=int(np.count_nonzero(norms_sq <= radius * radius)),
        total=n,
        mean_squared_norm=float(norms_sq.mean()),
        pair_mean=float(_pair_sq_sum(f) / (n * (n - 1) / 2)),
        shift=shift,
        scale=scale,
    )


def _normalize(g: FiniteGraph, x: np.ndarray) -> np.ndarray:
    x = x - x.mean(axis=0)
    lip = math.sqrt(_edge_sq(g, x).max())
    return x / lip


def _spread_direction(g: FiniteGraph, x: np.ndarray, p: float) -> np.ndarray:
    # gradient of log sum|x|^2 - (2/p) log sum_e |dx_e|^p, a smooth stand-in for
    # spread divided by squared Lipschitz constant
    u, v = g.edges[:, 0], g.edges[:, 1]
    diff = x[u] - x[v]
    lens = np.sqrt(np.sum(diff * diff, axis=1))
    top = lens.max()
    w = (lens / top) ** (p - 2)
    total = np.sum((lens / top) ** p) * top * top
    pull = np.zeros_like(x)
    np.add.at(pull, u, w[:, None] * diff)
    np.add.at(pull, v, -w[:, None] * diff)
    grad = 2 * x / np.sum(x * x) - 2 * pull / total
    grad -= grad.mean(axis=0)
    top = np.abs(grad).max()
    return grad / top if top > 0 else grad


def max_spread_embedding(
    g: FiniteGraph,
    dim: int = 3,
    iters: int = 500,
    seed: int = 0,
    restarts: int = 4,
    smoothing: float = 32.0,
) -> Embedding:
    """Search for a centered 1-Lipschitz map with large sum of squared norms.

    Each restart runs ascent along a smoothed gradient with backtracking; a step is
    kept only when the exact objective (after recentering and rescaling to Lipschitz
    constant 1) does not drop, so the recorded history is monotone.  The best restart
    is returned, with its history in ``meta["history"]``.
    """
    if dim < 1:
        raise ValueError("dim must be >= 1")
    g.require_connected()
    if g.vertex_count < 2:
        raise GraphError("need at least two vertices")
    rng = np.random.default_rng(seed)
    best = None
    for _ in range(restarts):
        x = _normalize(g, rng.standard_normal((g.vertex_count, dim)))
        obj = float(np.sum(x * x))
        history = [obj]
        step = 0.25
        for _ in range(iters):
            cand = _normalize(g, x + step * _spread_direction(g, x, smoothing))
            cand_obj = float(np.sum(cand * cand))
            if cand_obj >= obj:
                x, obj = cand, cand_obj
                step = min(step * 1.5, 1.0)
            else:
                step *= 0.5
                if step < 1e-9:
                    step = 1e-3
            history.append(obj)
        if best is None or obj > best[0]:
            best = (obj, x, history)
    obj, x, history = best
    return Embedding(g, x, {"history": history, "spread": obj})


def spread(e: Embedding) -> float:
    c = e.coords - e.coords.mean(axis=0)
    return float(np.sum(c * c))


def spectral_embedding(g: FiniteGraph, dim: int) -> Embedding:
    """Coordinates from the ``dim`` lowest nonconstant Laplacian eigenvectors,
    rescaled to Lipschitz constant 1."""
    n = g.vertex_count
    if not 1 <= dim <= n - 1:
        raise ValueError(f"dim must lie in [1, {n - 1}]")
    g.require_connected()
    _, vecs = scipy.linalg.eigh(laplacian_matrix(g), subset_by_index=[1, dim])
    return Embedding(g, _normalize(g, vecs))


def random_embeddings(g: FiniteGraph, count: int, dim: int, rng: np.random.Generator) -> np.ndarray:
    """A stack of ``count`` maps mixing Gaussian, heavy-tailed, spiky and
    near-eigenvector shapes, used to probe the ratio bounds."""
    n = g.vertex_count
    out = rng.standard_normal((count, n, dim))
    kind = rng.integers(0, 4, size=count)
    heavy = kind == 1
    out[heavy] = rng.standard_cauchy((int(heavy.sum()), n, dim))
    spiky = kind == 2
    out[spiky] *= rng.random((int(spiky.sum()), n, 1)) < 0.2
    near = kind == 3
    if near.any():
        w = lambda1(g).witness_vector
        k = int(near.sum())
        out[near] = w[None, :, None] * rng.standard_normal((k, 1, dim)) + 1e-2 * out[near]
    # keep every map nonconstant
    out[:, 0, 0] += 1.0
    out[:, -1, 0] -= 1.0
    return out


def format_embedding_csv(e: Embedding) -> str:
    header = "vertex," + ",".join(f"x{i}" for i in range(e.dim))
    rows = [header]
    for v, row in enumerate(e.coords.tolist()):
        rows.append(f"{v}," + ",".join(repr(float(t)) for t in row))
    return "\n".join(rows) + "\n"


def parse_embedding_csv(g: FiniteGraph, text: str) -> Embedding:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    head = lines[0].split(",")
    if head[0] != "vertex":
        raise ValueError("embedding CSV must start with a 'vertex' column")
    coords = np.zeros((g.vertex_count, len(head) - 1))
    seen = set()
    for ln in lines[1:]:
        parts = ln.split(",")
        v = int(parts[0])
        coords[v] = [float(t) for t in parts[1:]]
        seen.add(v)
    if len(seen) != g.vertex_count:
        raise ValueError("embedding CSV must list every vertex exactly once")
    return Embedding(g, coords)
