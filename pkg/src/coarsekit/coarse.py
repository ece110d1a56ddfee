"""Coarse quasi-embedding candidates of graphs into Z^2 and the averaging argument
that forces any 1-Lipschitz image of an expander member to pile up in a bounded ball.

The Lipschitz field used throughout is the translation family f(x, w) = x + w on
Z^2 x R^2: it is 1-Lipschitz in x (Euclidean <= l1), has degree one in w, and the
part of each slice landing in the Euclidean r-ball sits inside an l1 ball of radius
c(r) = 2r about the nearest lattice point once r >= 1.
"""
from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .embed import RADIUS_SLACK, c0_bound, spectral_embedding
from .graphs import ExpanderFamily, FiniteGraph, GraphError, bfs_distances
from .spectral import certify_family
from .transport import MetricSpaceTable

THREADS_ENV = "COARSE_OBSTRUCT_THREADS"
VERDICT_EXCLUDED = "quasi-embedding excluded at these scales"
VERDICT_NONE = "no obstruction"


class CoarseError(ValueError):
    pass


def c_of_r(r: float) -> float:
    """Radius of an l1 ball (about the nearest lattice point) holding a Euclidean r-ball's lattice points, r >= 1."""
    return 2.0 * r


def ball_capacity(k: int) -> int:
    """Number of points of Z^2 with l1 norm <= k."""
    return 2 * k * k + 2 * k + 1


@dataclass
class QuasiEmbeddingCandidate:
    """A map from the vertices of ``graph`` to points (by index) of ``target``."""

    graph: FiniteGraph
    target: MetricSpaceTable
    images: np.ndarray

    def __post_init__(self) -> None:
        self.images = np.asarray(self.images, dtype=np.int64)
        if self.images.shape != (self.graph.vertex_count,):
            raise CoarseError("every vertex needs exactly one image")
        if self.images.min() < 0 or self.images.max() >= self.target.size:
            raise CoarseError("image index outside the target space")

    @property
    def lipschitz_verified(self) -> bool:
        e = self.graph.edges
        if not len(e):
            return True
        return bool(np.all(self.target.dist[self.images[e[:, 0]], self.images[e[:, 1]]] <= 1))

    @property
    def image_coords(self) -> np.ndarray:
        if self.target.coords is None:
            raise CoarseError("target space carries no coordinates")
        return self.target.coords[self.images]


def lattice_candidate(graph: FiniteGraph, coords) -> QuasiEmbeddingCandidate:
    """Candidate into Z^2 from integer coordinates.  The target table holds only the
    distinct image points with their l1 distances; balls about arbitrary lattice
    centers are handled from the coordinates."""
    pts = np.asarray(coords, dtype=np.int64).reshape(graph.vertex_count, 2)
    uniq, inverse = np.unique(pts, axis=0, return_inverse=True)
    dist = np.abs(uniq[:, None, :] - uniq[None, :, :]).sum(axis=2).astype(float)
    space = MetricSpaceTable(dist, coords=uniq, validate=False, kind="z2")
    return QuasiEmbeddingCandidate(graph, space, inverse.ravel())


def _l1_lipschitz(graph: FiniteGraph, pts: np.ndarray) -> bool:
    e = graph.edges
    return bool(np.all(np.abs(pts[e[:, 0]] - pts[e[:, 1]]).sum(axis=1) <= 1))


def rounded_lattice_coords(graph: FiniteGraph, coords: np.ndarray, steps: int = 80) -> np.ndarray:
    """Round a real map (first two coordinates) to Z^2, shrinking it until every edge
    lands on equal or adjacent lattice points.  Scale 0 (a constant map) always works."""
    c = np.asarray(coords, dtype=float)
    if c.shape[1] == 1:
        c = np.hstack([c, np.zeros_like(c)])
    c = c[:, :2] - c[:, :2].mean(axis=0)
    for s in 0.93 ** np.arange(steps):
        pts = np.rint(s * c).astype(np.int64)
        if _l1_lipschitz(graph, pts):
            return pts
    return np.zeros((graph.vertex_count, 2), dtype=np.int64)


def walk_lattice_coords(graph: FiniteGraph, rng: np.random.Generator) -> np.ndarray:
    """xi(v) = W[h(v)] with h a 1-Lipschitz integer function (distance to a random root,
    possibly folded) and W a random lazy lattice walk: always 1-Lipschitz into (Z^2, l1)."""
    n = graph.vertex_count
    h = bfs_distances(graph, int(rng.integers(n))).astype(np.int64)
    if rng.random() < 0.5:
        fold = int(rng.integers(0, int(h.max()) + 1))
        h = np.abs(h - fold)
    steps = np.array([(0, 0), (1, 0), (-1, 0), (0, 1), (0, -1)])
    walk = np.cumsum(steps[rng.integers(0, 5, size=int(h.max()) + 1)], axis=0)
    walk -= walk[0]
    return walk[h]


def _best_lattice_ball(pts: np.ndarray, k: int) -> tuple[int, tuple[int, int]]:
    """Most points of ``pts`` in one l1 ball of integer radius k about a lattice point.

    In u = x + y, v = x - y the ball is the square max(|du|, |dv|) <= k, and lattice
    centers are the (u, v) of equal parity; window sums come from 2-D prefix sums.
    """
    u = pts[:, 0] + pts[:, 1]
    v = pts[:, 0] - pts[:, 1]
    u0, v0 = int(u.min()) - k, int(v.min()) - k
    nu, nv = int(u.max()) + k - u0 + 1, int(v.max()) + k - v0 + 1
    hist = np.zeros((nu + 2 * k + 1, nv + 2 * k + 1), dtype=np.int64)
    np.add.at(hist, (u - u0 + k, v - v0 + k), 1)
    pre = np.zeros((hist.shape[0] + 1, hist.shape[1] + 1), dtype=np.int64)
    pre[1:, 1:] = hist.cumsum(axis=0).cumsum(axis=1)
    w = 2 * k + 1
    # window for center (u0 + i, v0 + j) covers hist rows i..i+2k, cols j..j+2k
    counts = pre[w : w + nu, w : w + nv] - pre[:nu, w : w + nv] - pre[w : w + nu, :nv] + pre[:nu, :nv]
    cu = u0 + np.arange(nu)[:, None]
    cv = v0 + np.arange(nv)[None, :]
    counts = np.where((cu - cv) % 2 == 0, counts, -1)
    i, j = np.unravel_index(int(np.argmax(counts)), counts.shape)
    a, b = int(cu[i, 0]), int(cv[0, j])
    return int(counts[i, j]), ((a + b) // 2, (a - b) // 2)


def preimage_concentration(cand: QuasiEmbeddingCandidate, r: float) -> tuple[float, object]:
    """Largest fraction of vertices mapped into one r-ball of the target, and its center.

    For Z^2 targets the center ranges over all lattice points and is returned as a
    coordinate pair; otherwise it is the index of a point of the target table.
    """
    n = cand.graph.vertex_count
    if cand.target.kind == "z2":
        best, center = _best_lattice_ball(cand.image_coords, int(math.floor(r)))
        return best / n, center
    counts = (cand.target.dist[:, cand.images] <= r).sum(axis=1)
    best = int(np.argmax(counts))
    return float(counts[best]) / n, best


def averaging_center(cand: QuasiEmbeddingCandidate) -> np.ndarray:
    """The zero of F(w) = mean_v (xi(v) + w), i.e. minus the image centroid."""
    pts = cand.image_coords.astype(float)
    w = -pts.mean(axis=0)
    residual = np.abs((pts + w).sum(axis=0)).max()
    if residual > 1e-9 * max(1.0, len(pts)):
        raise CoarseError(f"averaging residual {residual} too large")
    return w


@dataclass(frozen=True)
class ConcentrationWitness:
    center: tuple[int, int]
    radius: float
    fraction: float
    euclidean_radius: float
    euclidean_inside: int


def concentration_witness(cand: QuasiEmbeddingCandidate, c0: float | None = None) -> ConcentrationWitness:
    """An l1 ball of radius c(R) in Z^2 holding more than half of the image multiset.

    Recenter by the averaging shift, apply the concentration bound with
    R = (1 + 1e-6) sqrt(c0) to find the Euclidean R-ball about the centroid, and
    take the lattice point nearest the centroid as center.
    """
    if cand.target.kind != "z2":
        raise CoarseError("concentration_witness needs a Z^2 lattice target")
    if not cand.lipschitz_verified:
        raise CoarseError("candidate is not 1-Lipschitz")
    if c0 is None:
        c0 = c0_bound(cand.graph)
    pts = cand.image_coords.astype(float)
    w = averaging_center(cand)
    R = (1 + RADIUS_SLACK) * math.sqrt(c0)
    if R < 1:
        raise CoarseError("the l1 containment needs R >= 1")
    inside = int(np.count_nonzero(np.sum((pts + w) ** 2, axis=1) <= R * R))
    center = np.rint(-w).astype(np.int64)
    radius = c_of_r(R)
    frac = float(np.count_nonzero(np.abs(pts - center).sum(axis=1) <= radius)) / len(pts)
    return ConcentrationWitness((int(center[0]), int(center[1])), radius, frac, R, inside)


BASELINES: dict[str, Callable[[FiniteGraph], np.ndarray]] = {
    "spectral": lambda g: rounded_lattice_coords(g, spectral_embedding(g, min(2, g.vertex_count - 1)).coords),
    "bfs": lambda g: np.stack([bfs_distances(g, 0).astype(np.int64), np.zeros(g.vertex_count, dtype=np.int64)], axis=1),
}


REPORT_COLUMNS = [
    "n", "d_max", "lambda1", "c0", "R", "c_of_R", "capacity",
    "forced_fraction", "baseline_fraction", "verdict", "witness_fraction",
]


@dataclass
class ObstructionRow:
    n: int
    d_max: int
    lambda1: float
    c0: float
    R: int
    c_of_R: float
    capacity: int
    forced_fraction: float
    baseline_fraction: float
    verdict: str
    witness_fraction: float

    @property
    def violation(self) -> bool:
        return not self.witness_fraction > 0.5 or self.baseline_fraction < self.forced_fraction

    def as_dict(self) -> dict:
        return {k: getattr(self, k) for k in REPORT_COLUMNS}


@dataclass
class ObstructionReport:
    rows: list[ObstructionRow]
    c0_uniform: float | None
    uniformly_gapped: bool

    @property
    def violations(self) -> int:
        return sum(r.violation for r in self.rows)


def _threads() -> int:
    try:
        return max(1, int(os.environ.get(THREADS_ENV, "1")))
    except ValueError:
        return 1


def obstruction_bound(fam: ExpanderFamily, target: str = "z2", baseline: str = "spectral") -> ObstructionReport:
    """Tabulate, per member, the fraction of vertices that any 1-Lipschitz map into
    Z^2 must send to a single lattice point.

    For a uniformly gapped family the concentration constant c0 is the largest member
    bound, so R (smallest integer above sqrt(c0)), c(R) = 2R and the forced fraction
    (1/2) / capacity(c(R)) do not depend on n.  Without a uniform gap each member uses
    its own c0 and the forced fraction shrinks with n.
    """
    if target != "z2":
        raise CoarseError(f"unsupported target {target!r}; only 'z2' is implemented")
    if baseline not in BASELINES:
        raise CoarseError(f"unknown baseline {baseline!r}; choose from {sorted(BASELINES)}")
    fcert = certify_family(fam)
    c0s = [c0_bound(g) for g in fam.graphs]
    c0_uniform = max(c0s) if fcert.uniformly_gapped else None

    def row(i: int) -> ObstructionRow:
        g = fam.graphs[i]
        c0 = c0s[i]
        R = math.floor(math.sqrt(c0_uniform if c0_uniform is not None else c0)) + 1
        cR = c_of_r(R)
        k = math.ceil(cR)
        cap = ball_capacity(k)
        cand = lattice_candidate(g, BASELINES[baseline](g))
        if not cand.lipschitz_verified:
            raise GraphError("baseline map is not 1-Lipschitz")
        base, _ = preimage_concentration(cand, cR)
        wit = concentration_witness(cand, c0)
        return ObstructionRow(
            n=g.vertex_count,
            d_max=g.max_degree,
            lambda1=fcert.certificates[i].lambda1,
            c0=c0,
            R=R,
            c_of_R=cR,
            capacity=cap,
            forced_fraction=0.5 / cap,
            baseline_fraction=base,
            verdict=VERDICT_EXCLUDED if fcert.uniformly_gapped else VERDICT_NONE,
            witness_fraction=wit.fraction,
        )

    with ThreadPoolExecutor(max_workers=_threads()) as pool:
        rows = list(pool.map(row, range(len(fam.graphs))))
    return ObstructionReport(rows, c0_uniform, fcert.uniformly_gapped)
