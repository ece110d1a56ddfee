"""Marked groups, Cayley balls and word metrics, plus displacement checks for group
actions and the radial map builder on lattice balls.

Infinite groups are only ever seen through a finite ball; every verdict here is about
the enumerated ball and the supplied test points.
"""
from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field
from typing import Callable, Hashable, Iterable, Sequence

import numpy as np

from .graphs import FiniteGraph

Element = Hashable

DEFAULT_BALL_CAP = 2_000_000


class CayleyError(ValueError):
    pass


class MarkedGroup:
    """A group with a finite symmetric generating set and canonical element tuples.

    ``kind`` is one of ``free_abelian``, ``free``, ``cyclic_product``, ``sl2_mod_p``.
    Use the module-level constructors rather than calling this directly.
    """

    def __init__(self, kind: str, params: tuple, identity: Element, mul, inv, base_generators: Sequence[Element]):
        self.kind = kind
        self.params = params
        self.identity = identity
        self._mul = mul
        self._inv = inv
        gens: list[Element] = []
        for s in base_generators:
            for t in (s, inv(s)):
                if t != identity and t not in gens:
                    gens.append(t)
        self.generators: tuple[Element, ...] = tuple(gens)

    def __repr__(self) -> str:
        return f"MarkedGroup({self.kind}{self.params})"

    def mul(self, a: Element, b: Element) -> Element:
        return self._mul(a, b)

    def inv(self, a: Element) -> Element:
        return self._inv(a)


def free_abelian(k: int) -> MarkedGroup:
    def mul(a, b):
        return tuple(x + y for x, y in zip(a, b))

    def inv(a):
        return tuple(-x for x in a)

    basis = [tuple(int(i == j) for j in range(k)) for i in range(k)]
    return MarkedGroup("free_abelian", (k,), (0,) * k, mul, inv, basis)


def cyclic_product(n: int, m: int) -> MarkedGroup:
    mods = (n, m)

    def mul(a, b):
        return tuple((x + y) % q for x, y, q in zip(a, b, mods))

    def inv(a):
        return tuple((-x) % q for x, q in zip(a, mods))

    return MarkedGroup("cyclic_product", mods, (0, 0), mul, inv, [(1 % n, 0), (0, 1 % m)])


def free_group(k: int) -> MarkedGroup:
    """Free group on k letters; elements are reduced words of nonzero ints (-i is the inverse of i)."""

    def mul(a, b):
        out = list(a)
        for x in b:
            if out and out[-1] == -x:
                out.pop()
            else:
                out.append(x)
        return tuple(out)

    def inv(a):
        return tuple(-x for x in reversed(a))

    return MarkedGroup("free", (k,), (), mul, inv, [(i,) for i in range(1, k + 1)])


def sl2_mod_p(p: int) -> MarkedGroup:
    """SL(2, Z/p) with the elementary matrices [[1,1],[0,1]], [[1,0],[1,1]] and inverses.

    Matrices are stored row-major as 4-tuples.
    """

    def mul(a, b):
        return (
            (a[0] * b[0] + a[1] * b[2]) % p,
            (a[0] * b[1] + a[1] * b[3]) % p,
            (a[2] * b[0] + a[3] * b[2]) % p,
            (a[2] * b[1] + a[3] * b[3]) % p,
        )

    def inv(a):
        return (a[3] % p, (-a[1]) % p, (-a[2]) % p, a[0] % p)

    return MarkedGroup("sl2_mod_p", (p,), (1, 0, 0, 1), mul, inv, [(1, 1, 0, 1), (1, 0, 1, 1)])


def parse_group(text: str) -> MarkedGroup:
    """``z2``, ``free_abelian:3``, ``free:2``, ``cyclic:3x3``, ``sl2:5``."""
    name, _, arg = text.partition(":")
    try:
        if name == "z2":
            return free_abelian(2)
        if name in ("free_abelian", "zk"):
            return free_abelian(int(arg))
        if name == "free":
            return free_group(int(arg))
        if name in ("cyclic", "cyclic_product"):
            n, m = arg.lower().split("x")
            return cyclic_product(int(n), int(m))
        if name in ("sl2", "sl2_mod_p"):
            return sl2_mod_p(int(arg))
    except ValueError:
        pass
    raise CayleyError(f"cannot parse group spec {text!r}")


class CayleyBall:
    """All elements of word norm <= radius, in BFS order, with their norms.

    ``adjacency[i, k]`` is the index of ``elements[i] * generators[k]`` or -1 when that
    product falls outside the ball.
    """

    def __init__(self, group: MarkedGroup, radius: int, cap: int = DEFAULT_BALL_CAP):
        if radius < 0:
            raise CayleyError("radius must be >= 0")
        self.group = group
        self.radius = int(radius)
        gens = group.generators
        elements = [group.identity]
        index = {group.identity: 0}
        norms = [0]
        frontier = deque([0])
        while frontier:
            i = frontier.popleft()
            if norms[i] == radius:
                continue
            for s in gens:
                y = group.mul(elements[i], s)
                if y not in index:
                    if len(elements) >= cap:
                        raise CayleyError(f"ball exceeds the cap of {cap} elements")
                    index[y] = len(elements)
                    elements.append(y)
                    norms.append(norms[i] + 1)
                    frontier.append(index[y])
        self.elements = elements
        self.index = index
        self.norms = np.array(norms, dtype=np.int64)
        adj = np.full((len(elements), len(gens)), -1, dtype=np.int64)
        for i, x in enumerate(elements):
            for k, s in enumerate(gens):
                adj[i, k] = index.get(group.mul(x, s), -1)
        self.adjacency = adj

    def __len__(self) -> int:
        return len(self.elements)

    def __contains__(self, gamma) -> bool:
        return gamma in self.index

    def elements_within(self, r: int) -> list[Element]:
        return [x for x, k in zip(self.elements, self.norms.tolist()) if k <= r]

    def to_graph(self) -> FiniteGraph:
        """Cayley graph restricted to the ball, one edge per pair {x, xs} and generator pair {s, s^-1}."""
        g = self.group
        gens = g.generators
        keep = []
        for k, s in enumerate(gens):
            j = gens.index(g.inv(s))
            if k < j:
                keep.append((k, False))
            elif k == j:
                keep.append((k, True))
        edges = []
        for i in range(len(self.elements)):
            for k, involution in keep:
                t = int(self.adjacency[i, k])
                if t >= 0 and (not involution or i < t):
                    edges.append((i, t))
        return FiniteGraph(len(self.elements), edges)


def cayley_ball(group: MarkedGroup, radius: int, cap: int = DEFAULT_BALL_CAP) -> CayleyBall:
    return CayleyBall(group, radius, cap)


def word_norm(b: CayleyBall, gamma: Element) -> int:
    try:
        return int(b.norms[b.index[gamma]])
    except KeyError:
        raise CayleyError(f"{gamma!r} lies outside the enumerated ball of radius {b.radius}") from None


def word_distance(b: CayleyBall, x: Element, y: Element) -> int:
    """d_S(x, y) = |x^-1 y|_S."""
    return word_norm(b, b.group.mul(b.group.inv(x), y))


# --- displacement checks ------------------------------------------------------

Action = Callable[[Element, object], object]
PointMap = Callable[[object], Sequence[float]]


@dataclass(frozen=True)
class Witness:
    gamma: Element
    point: object
    displacement: float
    bound: float

    @property
    def excess(self) -> float:
        return self.displacement - self.bound


@dataclass
class DisplacementResult:
    passed: bool
    generator_passed: bool
    worst: Witness | None
    checked: int
    failures: int = 0


def _evaluate(p: PointMap, x):
    try:
        return np.asarray(p(x), dtype=float)
    except (KeyError, IndexError) as exc:
        raise CayleyError(f"point {x!r} lies outside the domain of the map") from exc


def _act(action: Action, gamma, x):
    try:
        return action(gamma, x)
    except (KeyError, IndexError) as exc:
        raise CayleyError(f"action of {gamma!r} on {x!r} leaves the tested domain") from exc


def displacement_check(
    b: CayleyBall,
    action: Action,
    p: PointMap,
    points: Iterable,
    samples: int = 1000,
    seed: int = 0,
    exhaustive: bool = False,
    tol: float = 1e-12,
    pairs: Iterable | None = None,
) -> DisplacementResult:
    """Check |p(x) - p(gamma x)| <= |gamma|_S on the test points.

    Every generator is checked at every point (which, by telescoping along a word,
    controls the whole group); on top of that ``samples`` random pairs (gamma, x) with
    gamma in the ball are spot-checked, or all of them when ``exhaustive``.  Explicit
    ``pairs`` (gamma, x) are checked as well; their x need not be test points.  The
    reported witness is the worst generator failure if there is one, otherwise the
    worst sampled failure, otherwise the tightest case seen.
    """
    pts = list(points)
    if not pts:
        raise CayleyError("no test points")
    values: dict = {}

    def pv(x):
        key = x if isinstance(x, Hashable) else repr(x)
        if key not in values:
            values[key] = _evaluate(p, x)
        return values[key]

    checked = 0
    failures = 0
    gen_worst: Witness | None = None
    gen_fail = False
    for x in pts:
        px = pv(x)
        for s in b.group.generators:
            disp = float(np.linalg.norm(px - pv(_act(action, s, x))))
            checked += 1
            w = Witness(s, x, disp, 1.0)
            if disp > 1 + tol:
                failures += 1
                if not gen_fail or w.excess > gen_worst.excess:
                    gen_worst = w
                gen_fail = True
            elif not gen_fail and (gen_worst is None or w.excess > gen_worst.excess):
                gen_worst = w
    if exhaustive:
        spots = [(gamma, x) for gamma in b.elements for x in pts]
    else:
        rng = np.random.default_rng(seed)
        gi = rng.integers(0, len(b), size=samples)
        xi = rng.integers(0, len(pts), size=samples)
        spots = [(b.elements[i], pts[j]) for i, j in zip(gi.tolist(), xi.tolist())]
    spots += list(pairs or [])
    spot_worst: Witness | None = None
    spot_fail = False
    for gamma, x in spots:
        if gamma not in b.index:
            raise CayleyError(f"{gamma!r} lies outside the enumerated ball")
        bound = float(b.norms[b.index[gamma]])
        disp = float(np.linalg.norm(pv(x) - pv(_act(action, gamma, x))))
        checked += 1
        w = Witness(gamma, x, disp, bound)
        if disp > bound + tol * max(1.0, bound):
            failures += 1
            if not spot_fail or w.excess > spot_worst.excess:
                spot_worst = w
            spot_fail = True
    worst = gen_worst if gen_fail or not spot_fail else spot_worst
    return DisplacementResult(not gen_fail and not spot_fail, not gen_fail, worst, checked, failures)


@dataclass
class CrosscheckResult:
    passed: bool
    displacement_passed: bool
    witness: tuple | None
    checked: int

    @property
    def agrees(self) -> bool:
        return self.passed == self.displacement_passed


def prop2_crosscheck(
    b: CayleyBall,
    action: Action,
    p: PointMap,
    points: Iterable,
    samples: int = 1000,
    seed: int = 0,
    tol: float = 1e-12,
) -> CrosscheckResult:
    """Check the orbit form of the displacement bound,
    |p(g1^-1 x) - p(g2^-1 x)| <= d_S(g1, g2), and compare with ``displacement_check``.

    Tested triples: (1, s, x) for every generator s and test point x, then ``samples``
    random triples with g1, g2 drawn from the half-radius ball so that g1^-1 g2 stays
    inside the enumerated ball.  The displacement form is run on the same evidence:
    the generator checks at the test points plus, for each random triple, the pair
    (g2^-1 g1, g1^-1 x), since g2^-1 x = (g2^-1 g1)(g1^-1 x) and d_S(g1, g2) = |g2^-1 g1|.
    """
    pts = list(points)
    group = b.group
    triples = [(group.identity, s, x) for x in pts for s in group.generators]
    inner = b.elements_within(b.radius // 2)
    rng = np.random.default_rng(seed)
    g1 = rng.integers(0, len(inner), size=samples)
    g2 = rng.integers(0, len(inner), size=samples)
    xs = rng.integers(0, len(pts), size=samples)
    rand = [(inner[i], inner[j], pts[k]) for i, j, k in zip(g1.tolist(), g2.tolist(), xs.tolist())]
    triples += rand
    passed = True
    witness = None
    worst_excess = -math.inf
    for a, c, x in triples:
        ya = _act(action, group.inv(a), x)
        yc = _act(action, group.inv(c), x)
        disp = float(np.linalg.norm(_evaluate(p, ya) - _evaluate(p, yc)))
        bound = word_distance(b, a, c)
        if disp > bound + tol * max(1.0, bound):
            passed = False
            if disp - bound > worst_excess:
                worst_excess = disp - bound
                witness = (a, c, x, disp, bound)
    translated = [(group.mul(group.inv(c), a), _act(action, group.inv(a), x)) for a, c, x in rand]
    disp_result = displacement_check(b, action, p, pts, samples=0, tol=tol, pairs=translated)
    return CrosscheckResult(passed, disp_result.passed, witness, len(triples))


def translation_action(gamma, x):
    """Z^k acting on Z^k (or R^k) by translation."""
    return tuple(a + b for a, b in zip(gamma, x))


def gamma_variation(b: CayleyBall, action: Action, f: Callable[[object], float], R: int, x) -> float:
    """max |f(x) - f(gamma x)| over gamma with |gamma|_S <= R."""
    if R > b.radius:
        raise CayleyError(f"R={R} exceeds the enumerated radius {b.radius}")
    fx = float(f(x))
    return max(abs(fx - float(f(_act(action, gamma, x)))) for gamma in b.elements_within(R))


def metric_variation(dist: np.ndarray, values: np.ndarray, R: float, x: int) -> float:
    """max |f(x) - f(x')| over points x' with d(x, x') <= R."""
    near = dist[x] <= R
    return float(np.max(np.abs(values[near] - values[x])))


# --- radial map on lattice balls --------------------------------------------

def lattice_points(radius: int) -> list[tuple[int, int]]:
    return [(x, y) for x in range(-radius, radius + 1) for y in range(-radius, radius + 1) if abs(x) + abs(y) <= radius]


def boundary_cycle(radius: int) -> list[tuple[int, int]]:
    """The l1 sphere of the given radius, counterclockwise from (radius, 0)."""
    out = []
    for i in range(radius):
        out.append((radius - i, i))
    for i in range(radius):
        out.append((-i, radius - i))
    for i in range(radius):
        out.append((-radius + i, -i))
    for i in range(radius):
        out.append((i, -radius + i))
    return out


def winding_number(values: Sequence[Sequence[float]]) -> int:
    """Winding number about the origin of the closed polygon through ``values``."""
    pts = np.asarray(values, dtype=float)
    if np.any(np.hypot(pts[:, 0], pts[:, 1]) == 0):
        raise CayleyError("curve passes through the origin")
    ang = np.arctan2(pts[:, 1], pts[:, 0])
    d = np.diff(np.r_[ang, ang[0]])
    d = (d + np.pi) % (2 * np.pi) - np.pi
    return int(round(d.sum() / (2 * np.pi)))


def _default_phi(x) -> float:
    return math.atan2(x[1], x[0])


def _angle_between(a: float, b: float) -> float:
    d = abs(a - b) % (2 * math.pi)
    return min(d, 2 * math.pi - d)


@dataclass
class RadialMap:
    radius: int
    r0: float
    epsilon: float
    nu: np.ndarray
    profile: np.ndarray
    values: dict = field(repr=False)
    max_generator_displacement: float = 0.0
    winding: int = 0

    def __call__(self, x) -> np.ndarray:
        return self.values[tuple(x)]

    def radial_profile(self, t: float) -> float:
        """The nondecreasing piecewise-linear function f, evaluated at t >= 0."""
        return float(np.interp(t, np.arange(len(self.profile)), self.profile))

    @property
    def displacement_ok(self) -> bool:
        return self.max_generator_displacement <= 1.0 + 1e-12


def radial_map_build(
    radius: int,
    r0: float = 2.0,
    epsilon: float = 0.1,
    phi: Callable[[tuple[int, int]], float] = _default_phi,
) -> RadialMap:
    """Build p(x) = (f(|x|)/2, phi(x)) in polar coordinates on the l1 ball of Z^2.

    ``phi`` returns an angle.  ``nu[t]`` is the largest angle between phi(x) and
    phi(x s) over generators s and interior points with |x| >= t.  The radial profile f
    vanishes up to r0, grows with slope at most 1 - epsilon, and never exceeds
    1 / nu(t).  Diagnostics: the largest generator displacement over interior points
    and the winding number of p along the boundary sphere.
    """
    if not 0 < epsilon < 1:
        raise CayleyError("epsilon must lie in (0, 1)")
    if r0 < 2:
        raise CayleyError("r0 must be >= 2")
    if radius <= r0 + 1:
        raise CayleyError(f"domain radius {radius} too small for r0={r0}")
    gens = free_abelian(2).generators
    pts = lattice_points(radius)
    ang = {x: phi(x) for x in pts if x != (0, 0)}
    # worst angle change at each norm, for interior points x with x, xs both nonzero
    worst_at = np.zeros(radius + 1)
    for x in pts:
        k = abs(x[0]) + abs(x[1])
        if k == 0 or k >= radius:
            continue
        for s in gens:
            y = (x[0] + s[0], x[1] + s[1])
            if y != (0, 0):
                worst_at[k] = max(worst_at[k], _angle_between(ang[x], ang[y]))
    nu = np.maximum.accumulate(worst_at[::-1])[::-1]
    profile = np.zeros(radius + 1)
    slope = 1 - epsilon
    for t in range(1, radius + 1):
        if t <= r0:
            continue
        cap = math.inf if nu[t] == 0 else 1 / nu[t]
        # the value at the start of the ramp is limited by the slope from r0
        ramp = profile[t - 1] + slope * (t - max(t - 1, r0))
        profile[t] = min(ramp, cap)
    values = {}
    for x in pts:
        k = abs(x[0]) + abs(x[1])
        rad = profile[k] / 2
        a = ang.get(x, 0.0)
        values[x] = np.array([rad * math.cos(a), rad * math.sin(a)])
    worst = 0.0
    for x in pts:
        if abs(x[0]) + abs(x[1]) >= radius:
            continue
        for s in gens:
            y = (x[0] + s[0], x[1] + s[1])
            worst = max(worst, float(np.linalg.norm(values[x] - values[y])))
    wind = winding_number([values[x] for x in boundary_cycle(radius)])
    return RadialMap(radius, r0, epsilon, nu, profile, values, worst, wind)


# --- export -------------------------------------------------------------------

def format_norm_table(b: CayleyBall) -> str:
    rows = ["element_id,word_norm"] + [f"{i},{k}" for i, k in enumerate(b.norms.tolist())]
    return "\n".join(rows) + "\n"
