"""Finitely supported measures on finite metric spaces and the Kantorovich-Rubinstein
(Wasserstein-1) distance between them.

The primal value comes from a transportation simplex (network simplex on the
bipartite support graph).  ``kr_dual`` solves the potential LP with scipy and is kept
as an independent check.  Also here: the barycentric extension of a vector map to
measures and the partition-of-unity map onto a K-dense net.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Mapping, Sequence

import numpy as np
from scipy.optimize import linprog

from .graphs import FiniteGraph, parse_edgelist

MASS_TOL = 1e-12
TRIANGLE_EXHAUSTIVE_LIMIT = 512


class TransportError(ValueError):
    pass


class MetricSpaceTable:
    """Finite metric space given by a symmetric distance table.

    ``coords`` optionally records lattice or Euclidean coordinates for each point
    (set for lattice balls).  Metric axioms are validated on construction: on every
    triple up to 512 points, on a random sample of triples above.
    """

    def __init__(self, dist, coords=None, validate: bool = True, kind: str = "table"):
        d = np.asarray(dist, dtype=float)
        if d.ndim != 2 or d.shape[0] != d.shape[1]:
            raise TransportError("distance table must be square")
        self.dist = d
        self.coords = None if coords is None else np.asarray(coords)
        self.kind = kind
        if validate:
            self._validate()

    @property
    def size(self) -> int:
        return self.dist.shape[0]

    def _validate(self) -> None:
        d = self.dist
        if not np.all(np.isfinite(d)):
            raise TransportError("distance table has infinite entries (disconnected space?)")
        if np.any(np.diag(d) != 0):
            raise TransportError("distance table must have a zero diagonal")
        if not np.array_equal(d, d.T):
            raise TransportError("distance table must be symmetric")
        if np.any(d < 0):
            raise TransportError("distances must be nonnegative")
        n = self.size
        slack = 1e-12 * max(1.0, float(d.max(initial=0.0)))
        if n <= TRIANGLE_EXHAUSTIVE_LIMIT:
            for k in range(n):
                if np.any(d > d[:, k : k + 1] + d[k : k + 1, :] + slack):
                    raise TransportError(f"triangle inequality fails through point {k}")
        else:
            rng = np.random.default_rng(0)
            i, j, k = rng.integers(0, n, size=(3, 200_000))
            if np.any(d[i, j] > d[i, k] + d[k, j] + slack):
                raise TransportError("triangle inequality fails on a sampled triple")

    @classmethod
    def from_graph(cls, g: FiniteGraph) -> "MetricSpaceTable":
        g.require_connected()
        return cls(g.distance_matrix, validate=False, kind="graph")


def lattice_ball_space(radius: int) -> MetricSpaceTable:
    """Points of Z^2 with l1 norm <= radius, under the l1 (word) metric."""
    pts = [(x, y) for x in range(-radius, radius + 1) for y in range(-radius, radius + 1) if abs(x) + abs(y) <= radius]
    coords = np.array(pts, dtype=np.int64)
    dist = np.abs(coords[:, None, :] - coords[None, :, :]).sum(axis=2).astype(float)
    return MetricSpaceTable(dist, coords=coords, validate=False, kind="z2")


@dataclass(frozen=True)
class FiniteMeasure:
    """Nonnegative weights on distinct points of an ambient finite space."""

    support: tuple[int, ...]
    weights: tuple[float, ...]

    def __post_init__(self) -> None:
        if len(self.support) != len(self.weights):
            raise TransportError("support and weights differ in length")
        if len(set(self.support)) != len(self.support):
            raise TransportError("support points must be distinct")
        if any(w < 0 or not math.isfinite(w) for w in self.weights):
            raise TransportError("weights must be finite and nonnegative")

    @classmethod
    def from_pairs(cls, pairs: Mapping[int, float] | Sequence[tuple[int, float]]) -> "FiniteMeasure":
        items = pairs.items() if isinstance(pairs, Mapping) else pairs
        merged: dict[int, float] = {}
        for p, w in items:
            merged[int(p)] = merged.get(int(p), 0.0) + float(w)
        keys = sorted(merged)
        return cls(tuple(keys), tuple(merged[k] for k in keys))

    @property
    def total_mass(self) -> float:
        return float(math.fsum(self.weights))

    def as_dict(self) -> dict[int, float]:
        return dict(zip(self.support, self.weights))


def dirac(point: int, mass: float = 1.0) -> FiniteMeasure:
    return FiniteMeasure((int(point),), (float(mass),))


def _check_pair(mu: FiniteMeasure, nu: FiniteMeasure, space: MetricSpaceTable) -> None:
    if not mu.support or not nu.support:
        raise TransportError("measures must be nonempty")
    for m in (mu, nu):
        if min(m.support) < 0 or max(m.support) >= space.size:
            raise TransportError("measure support lies outside the space")
    if abs(mu.total_mass - nu.total_mass) > MASS_TOL * max(1.0, mu.total_mass):
        raise TransportError(
            f"total masses differ ({mu.total_mass!r} vs {nu.total_mass!r}); "
            "the distance is only finite between equal masses"
        )


def transport_simplex(supply: np.ndarray, demand: np.ndarray, cost: np.ndarray, max_pivots: int = 100_000):
    """Solve the balanced transportation problem; returns ``(value, plan)``.

    Northwest-corner start, then pivots on the basis spanning tree using the
    smallest-index entering cell (Bland's rule, so degenerate bases cannot cycle).
    """
    a = np.asarray(supply, dtype=float).copy()
    b = np.asarray(demand, dtype=float).copy()
    cost = np.asarray(cost, dtype=float)
    m, k = len(a), len(b)
    b *= a.sum() / b.sum()
    plan = np.zeros((m, k))
    basis: list[tuple[int, int]] = []
    i = j = 0
    while True:
        q = min(a[i], b[j])
        plan[i, j] = q
        basis.append((i, j))
        a[i] -= q
        b[j] -= q
        if i == m - 1 and j == k - 1:
            break
        if (a[i] <= b[j] and i < m - 1) or j == k - 1:
            i += 1
        else:
            j += 1
    in_basis = np.zeros((m, k), dtype=bool)
    for cell in basis:
        in_basis[cell] = True
    tol = 1e-12 * max(1.0, float(np.abs(cost).max(initial=0.0)))
    for _ in range(max_pivots):
        u, v = _potentials(basis, cost, m, k)
        reduced = cost - u[:, None] - v[None, :]
        reduced[in_basis] = 0.0
        neg = np.flatnonzero(reduced < -tol)
        if neg.size == 0:
            return float(np.sum(plan * cost)), plan
        ei, ej = divmod(int(neg[0]), k)
        path = _tree_path(basis, m, ej, ei)  # cells from column ej back to row ei
        minus = path[0::2]
        theta = min(plan[c] for c in minus)
        leave = min((c for c in minus if plan[c] == theta), key=lambda c: c[0] * k + c[1])
        for idx, c in enumerate(path):
            plan[c] += -theta if idx % 2 == 0 else theta
        plan[ei, ej] = theta
        plan[leave] = 0.0
        basis.remove(leave)
        basis.append((ei, ej))
        in_basis[leave] = False
        in_basis[ei, ej] = True
    raise TransportError("transportation simplex did not converge")


def _potentials(basis, cost, m, k):
    # rows are nodes 0..m-1, columns m..m+k-1; u_i + v_j = c_ij on the basis tree
    adj: list[list[tuple[int, int, int]]] = [[] for _ in range(m + k)]
    for i, j in basis:
        adj[i].append((m + j, i, j))
        adj[m + j].append((i, i, j))
    pot = np.full(m + k, np.nan)
    pot[0] = 0.0
    stack = [0]
    while stack:
        x = stack.pop()
        for y, i, j in adj[x]:
            if np.isnan(pot[y]):
                pot[y] = cost[i, j] - pot[x]
                stack.append(y)
    return pot[:m], pot[m:]


def _tree_path(basis, m, col, row):
    adj: dict[int, list[tuple[int, tuple[int, int]]]] = {}
    for i, j in basis:
        adj.setdefault(i, []).append((m + j, (i, j)))
        adj.setdefault(m + j, []).append((i, (i, j)))
    start, goal = m + col, row
    parent: dict[int, tuple[int, tuple[int, int]] | None] = {start: None}
    stack = [start]
    while stack:
        x = stack.pop()
        if x == goal:
            break
        for y, cell in adj.get(x, []):
            if y not in parent:
                parent[y] = (x, cell)
                stack.append(y)
    cells = []
    x = goal
    while parent[x] is not None:
        prev, cell = parent[x]
        cells.append(cell)
        x = prev
    cells.reverse()
    return cells


def _active(mu: FiniteMeasure):
    pts = [p for p, w in zip(mu.support, mu.weights) if w > 0]
    wts = [w for w in mu.weights if w > 0]
    return pts, np.array(wts)


def kr_distance(mu: FiniteMeasure, nu: FiniteMeasure, space: MetricSpaceTable) -> float:
    """Wasserstein-1 distance between equal-mass measures (minimum transport cost)."""
    _check_pair(mu, nu, space)
    if mu.total_mass == 0:
        return 0.0
    ps, a = _active(mu)
    qs, b = _active(nu)
    value, _ = transport_simplex(a, b, space.dist[np.ix_(ps, qs)])
    return max(value, 0.0)


def kr_dual(mu: FiniteMeasure, nu: FiniteMeasure, space: MetricSpaceTable) -> float:
    """Supremum of sum (mu - nu) * phi over 1-Lipschitz potentials phi, by linear programming.

    Potentials only need to live on the union of the supports: any 1-Lipschitz
    function there extends to the whole space without changing the objective.
    """
    _check_pair(mu, nu, space)
    pts = sorted(set(mu.support) | set(nu.support))
    pos = {p: i for i, p in enumerate(pts)}
    c = np.zeros(len(pts))
    for p, w in zip(mu.support, mu.weights):
        c[pos[p]] += w
    for p, w in zip(nu.support, nu.weights):
        c[pos[p]] -= w
    n = len(pts)
    if n == 1:
        return 0.0
    rows, rhs = [], []
    for i in range(n):
        for j in range(n):
            if i != j:
                r = np.zeros(n)
                r[i], r[j] = 1.0, -1.0
                rows.append(r)
                rhs.append(space.dist[pts[i], pts[j]])
    bounds = [(0.0, 0.0)] + [(None, None)] * (n - 1)
    res = linprog(-c, A_ub=np.array(rows), b_ub=np.array(rhs), bounds=bounds, method="highs",
                  options={"primal_feasibility_tolerance": 1e-10, "dual_feasibility_tolerance": 1e-10})
    if not res.success:
        raise TransportError(f"dual LP failed: {res.message}")
    return float(-res.fun)


def bary_extend(g_map: Callable[[int], Sequence[float]] | Mapping[int, Sequence[float]] | np.ndarray,
                mu: FiniteMeasure) -> np.ndarray:
    """sum_i w_i g(x_i): the linear extension of a vector-valued map to measures."""
    if callable(g_map):
        get = g_map
    else:
        def get(p):
            try:
                return g_map[p]
            except (KeyError, IndexError):
                raise TransportError(f"map undefined at support point {p}") from None
    vals = [np.asarray(get(p), dtype=float) for p in mu.support]
    return np.sum([w * v for w, v in zip(mu.weights, vals)], axis=0)


def partition_map(space: MetricSpaceTable, net: Sequence[int], K: float, x: int) -> FiniteMeasure:
    """Probability measure on the net points within distance < K of ``x``, weighted by
    ``K - d(x, x_i)`` (the distance from x to the complement of the ball B_K(x_i))."""
    d = space.dist[x, list(net)]
    lam = np.maximum(0.0, K - d)
    total = lam.sum()
    if total <= 0:
        raise TransportError(f"net is not K-dense: point {x} is at distance >= {K} from every net point")
    keep = lam > 0
    pts = [int(p) for p, k in zip(net, keep) if k]
    return FiniteMeasure.from_pairs(list(zip(pts, (lam[keep] / total).tolist())))


@dataclass(frozen=True)
class PsiAudit:
    lipschitz_empirical: float
    multiplicity: int
    pairs_checked: int
    worst_pair: tuple[int, int] | None
    K: float

    @property
    def reference_bound(self) -> float:
        return 6 * self.K * self.multiplicity


def psi_lipschitz_audit(space: MetricSpaceTable, net: Sequence[int], K: float) -> tuple[float, PsiAudit]:
    """Largest ratio d_KR(psi x, psi y) / d(x, y) over pairs at distance <= K, with the
    cover multiplicity ``max_x #{i : d(x, x_i) < K}``."""
    net = list(net)
    if not net:
        raise TransportError("net is empty")
    d = space.dist
    psi = [partition_map(space, net, K, x) for x in range(space.size)]
    mult = int((d[:, net] < K).sum(axis=1).max())
    best, worst, count = 0.0, None, 0
    for x in range(space.size):
        for y in range(x + 1, space.size):
            if 0 < d[x, y] <= K:
                count += 1
                r = kr_distance(psi[x], psi[y], space) / d[x, y]
                if r > best:
                    best, worst = r, (x, y)
    if not math.isfinite(best):
        raise TransportError("audit produced a non-finite constant")
    best = float(best)
    return best, PsiAudit(best, mult, count, worst, K)


# --- measure JSON -------------------------------------------------------------

def load_space(spec, base: Path | None = None) -> MetricSpaceTable:
    """A space given inline as a distance table, or as a path to an edge-list file."""
    if isinstance(spec, str):
        path = Path(spec)
        if base is not None and not path.is_absolute():
            path = base / path
        return MetricSpaceTable.from_graph(parse_edgelist(path.read_text()))
    if isinstance(spec, list):
        return MetricSpaceTable(spec)
    raise TransportError("'space' must be a file path or an inline distance table")


def parse_measure_json(text: str, base: Path | None = None) -> tuple[FiniteMeasure, object]:
    try:
        doc = json.loads(text)
        atoms = [(int(a["point"]), float(a["weight"])) for a in doc["atoms"]]
        space_spec = doc["space"]
    except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
        raise TransportError(f"malformed measure JSON: {exc}") from None
    return FiniteMeasure.from_pairs(atoms), space_spec


def measure_to_json(mu: FiniteMeasure, space_spec) -> str:
    return json.dumps({"space": space_spec, "atoms": [{"point": p, "weight": w} for p, w in zip(mu.support, mu.weights)]})
