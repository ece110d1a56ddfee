"""Acceptance criteria, one test each.  Every test records a PASS/FAIL line that is
printed in the pytest terminal summary (and on stdout when run as a script)."""
import csv
import math
import time
from contextlib import contextmanager

import numpy as np
import pytest

from coarsekit import cayley, cli, coarse, embed, graphs, spectral, transport
from coarsekit.embed import Embedding
from coarsekit.transport import FiniteMeasure, MetricSpaceTable

from conftest import ACCEPTANCE_LINES, random_connected


@contextmanager
def criterion(label: str, budget: float):
    start = time.perf_counter()
    status, detail = "FAIL", ""
    try:
        yield
        elapsed = time.perf_counter() - start
        if elapsed >= budget:
            detail = f"over time budget {budget:.0f}s"
            raise AssertionError(f"{label}: {elapsed:.2f}s exceeds {budget}s")
        status = "PASS"
    except BaseException as exc:
        detail = detail or type(exc).__name__
        raise
    finally:
        elapsed = time.perf_counter() - start
        line = f"{status} {label} ({elapsed:.2f}s{', ' + detail if detail else ''})"
        ACCEPTANCE_LINES.append(line)
        print(line)


def test_c1_spectral_exactness():
    with criterion("C1 spectral exactness: cycles and complete graphs, n=3..64", 5.0):
        worst = 0.0
        for n in range(3, 65):
            cyc = spectral.lambda1(graphs.cycle_graph(n)).lambda1
            ref = 2 * (1 - math.cos(2 * math.pi / n))
            worst = max(worst, abs(cyc - ref) / ref)
            kn = spectral.lambda1(graphs.complete_graph(n)).lambda1
            worst = max(worst, abs(kn - n) / n)
        assert worst <= 1e-9, worst


def test_c2_cheeger_crosscheck():
    with criterion("C2 Cheeger bounds on 200 random connected graphs, n<=12", 30.0):
        rng = np.random.default_rng(2024)
        failures = 0
        for _ in range(200):
            n = int(rng.integers(2, 13))
            g = random_connected(rng, n, float(rng.uniform(0.05, 0.7)))
            rep = spectral.cheeger_crosscheck(g)
            h = float(rep.h_exact)
            lam = rep.lambda1
            ok = lam <= 2 * h + 1e-9 and h <= math.sqrt(2 * g.max_degree * lam) + 1e-9
            failures += not (ok and rep.bounds_ok)
        assert failures == 0


def _c3_graphs():
    gs = [graphs.margulis_graph(n) for n in range(3, 11)]
    gs += [graphs.random_regular(n, 4, seed=graphs.member_seed(3, i)) for i, n in enumerate([16, 32, 64])]
    gs += [graphs.cycle_graph(n) for n in (3, 4, 5, 8, 16, 33)]
    gs += [graphs.complete_graph(n) for n in (2, 3, 4, 7, 12)]
    return gs


def test_c3_ratio_bound():
    with criterion("C3 D_f <= c0 on 1e5 random embeddings; tight on C4 and K4", 60.0):
        gs = _c3_graphs()
        total = 100_000
        per = [total // len(gs) + (i < total % len(gs)) for i in range(len(gs))]
        violations, checked, worst = 0, 0, -math.inf
        for i, (g, count) in enumerate(zip(gs, per)):
            rng = np.random.default_rng([33, i])
            c0 = embed.c0_bound(g)
            chunk = max(1, 2_000_000 // max(1, g.vertex_count**2))
            done = 0
            while done < count:
                k = min(chunk, count - done)
                dim = int(rng.integers(1, 5))
                maps = embed.random_embeddings(g, k, dim, rng)
                r = embed.d_ratio_batch(g, maps)
                violations += int(np.count_nonzero(r > c0 + 1e-9))
                worst = max(worst, float((r - c0).max()))
                done += k
            checked += count
        assert checked == total
        assert violations == 0, (violations, worst)
        c4, k4 = graphs.cycle_graph(4), graphs.complete_graph(4)
        square = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])
        assert abs(embed.d_ratio(Embedding(c4, square)) - 4 / 3) <= 1e-9
        assert abs(embed.c0_bound(c4) - 4 / 3) <= 1e-9
        assert abs(embed.d_ratio(Embedding(k4, np.eye(4))) - 1.0) <= 1e-9
        assert abs(embed.c0_bound(k4) - 1.0) <= 1e-9


def test_c4_corollaries():
    with criterion("C4 concentration corollaries on 1e4 random + optimizer maps; centered identity", 120.0):
        gs = _c3_graphs()
        bad, tested, ident_worst = 0, 0, 0.0
        for i, g in enumerate(gs):
            rng = np.random.default_rng([44, i])
            c0 = embed.c0_bound(g)
            count = 10_000 // len(gs) + (i < 10_000 % len(gs))
            maps = embed.random_embeddings(g, count, int(rng.integers(1, 4)), rng)
            opt = [embed.max_spread_embedding(g, dim=d, iters=150, seed=i, restarts=2) for d in (1, 2, 3)]
            for e in [Embedding(g, m) for m in maps] + opt:
                rep = embed.corollary_report(e, c0)
                tested += 1
                lip = embed.lipschitz_constant(Embedding(g, (e.coords + rep.shift) * rep.scale))
                assert lip <= 1 + 1e-12
                # equality is attained on K2, so allow the same 1e-9 rounding slack as C3
                bad += not (rep.pair_mean <= c0 + 1e-9 and rep.mean_squared_norm <= c0 / 2 + 1e-9
                            and 2 * rep.inside_count > rep.total)
            # centered identity on arbitrary (uncentered, unscaled) maps
            n = g.vertex_count
            for m in maps[:50]:
                f = m * rng.uniform(0.1, 100) + rng.standard_normal(m.shape[1]) * 10
                c = f - f.mean(axis=0)
                lhs = float(embed._pair_sq_sum(c))
                rhs = n * float(np.sum(c * c))
                ident_worst = max(ident_worst, abs(lhs - rhs) / lhs)
        assert tested >= 10_000
        assert bad == 0, bad
        assert ident_worst <= 1e-9, ident_worst


def _random_measure(rng, size, k, mass=1.0):
    pts = rng.choice(size, size=k, replace=False)
    w = rng.random(k) + 1e-3
    return FiniteMeasure.from_pairs(zip(pts.tolist(), (mass * w / w.sum()).tolist()))


def test_c5_transport():
    with criterion("C5 transport: primal=dual on 500 instances, Dirac isometry, metric axioms, bary bound", 120.0):
        rng = np.random.default_rng(55)
        spaces = [
            MetricSpaceTable.from_graph(graphs.random_regular(24, 3, seed=1)),
            MetricSpaceTable.from_graph(graphs.margulis_graph(5)),
        ]
        pts = rng.standard_normal((30, 3))
        spaces.append(MetricSpaceTable(np.linalg.norm(pts[:, None] - pts[None], axis=2)))
        worst = 0.0
        for t in range(500):
            space = spaces[t % len(spaces)]
            mass = float(rng.uniform(0.5, 3.0))
            mu = _random_measure(rng, space.size, int(rng.integers(1, 13)), mass)
            nu = _random_measure(rng, space.size, int(rng.integers(1, 13)), mass)
            worst = max(worst, abs(transport.kr_distance(mu, nu, space) - transport.kr_dual(mu, nu, space)))
        assert worst <= 1e-7, worst

        for space in spaces:
            for x in range(space.size):
                for y in range(space.size):
                    assert transport.kr_distance(transport.dirac(x), transport.dirac(y), space) == space.dist[x, y]

        gap = 0.0
        for t in range(1000):
            space = spaces[t % len(spaces)]
            a, b, c = (_random_measure(rng, space.size, int(rng.integers(1, 8))) for _ in range(3))
            dab = transport.kr_distance(a, b, space)
            dba = transport.kr_distance(b, a, space)
            gap = max(gap, transport.kr_distance(a, c, space) - dab - transport.kr_distance(b, c, space),
                      abs(dab - dba), abs(transport.kr_distance(a, a, space)))
            assert dab >= -1e-12
        assert gap <= 1e-9, gap

        excess = -math.inf
        for t in range(1000):
            space = spaces[t % len(spaces)]
            gmap = rng.standard_normal((space.size, 2)) * rng.uniform(0.1, 5)
            diff = np.linalg.norm(gmap[:, None] - gmap[None], axis=2)
            off = space.dist > 0
            N = float((diff[off] / space.dist[off]).max())
            mu = _random_measure(rng, space.size, int(rng.integers(1, 10)))
            nu = _random_measure(rng, space.size, int(rng.integers(1, 10)))
            lhs = float(np.linalg.norm(transport.bary_extend(gmap, mu) - transport.bary_extend(gmap, nu)))
            excess = max(excess, lhs - N * transport.kr_distance(mu, nu, space))
        assert excess <= 1e-9, excess


def _fold_map(rng):
    A = rng.standard_normal((2, 2)) * rng.uniform(0.1, 0.8)
    normal = rng.standard_normal(2)
    normal /= np.linalg.norm(normal)
    c = rng.uniform(-3, 3, size=2)
    v = rng.standard_normal(2) * rng.uniform(0.0, 0.6)

    def p(x):
        x = np.asarray(x, dtype=float)
        return A @ x + max(0.0, float(normal @ (x - c))) * v

    return p


def test_c6_displacement():
    with criterion("C6 displacement checks, 1e3 fold maps, radial map radius 32", 30.0):
        ball = cayley.cayley_ball(cayley.free_abelian(2), 8)
        pts = ball.elements_within(4)
        ident = lambda x: np.asarray(x, dtype=float)  # noqa: E731
        double = lambda x: 2 * np.asarray(x, dtype=float)  # noqa: E731
        act = cayley.translation_action
        assert cayley.displacement_check(ball, act, ident, pts).passed
        assert cayley.prop2_crosscheck(ball, act, ident, pts).passed
        assert not cayley.displacement_check(ball, act, double, pts).passed
        assert not cayley.prop2_crosscheck(ball, act, double, pts).passed

        rng = np.random.default_rng(66)
        disagree, passed = 0, 0
        for i in range(1000):
            c = cayley.prop2_crosscheck(ball, act, _fold_map(rng), pts, samples=60, seed=i)
            disagree += not c.agrees
            passed += c.passed
        assert disagree == 0
        # both verdicts must actually occur for the agreement to mean anything
        assert 0 < passed < 1000, passed

        radial = cayley.radial_map_build(32)
        assert radial.displacement_ok and radial.max_generator_displacement <= 1 + 1e-12
        assert radial.winding == 1
        assert cayley.winding_number([radial(x) for x in cayley.boundary_cycle(32)]) == 1


def test_c7_obstruction(tmp_path):
    with criterion("C7 obstruction report for margulis 3..14 with cycle control", 60.0):
        out = tmp_path / "obs.csv"
        assert cli.main(["obstruct", "--family", "margulis", "--target", "z2", "--sizes", "3..14", "-o", str(out)]) == 0
        with open(out, newline="") as fh:
            rows = list(csv.DictReader(fh))
        assert [int(r["n"]) for r in rows] == [n * n for n in range(3, 15)]
        forced = set()
        for r in rows:
            R = int(r["R"])
            k = math.ceil(2 * R)
            assert float(r["c_of_R"]) == 2 * R
            assert int(r["capacity"]) == 2 * k * k + 2 * k + 1
            assert float(r["forced_fraction"]) == 0.5 / (2 * k * k + 2 * k + 1)
            assert float(r["witness_fraction"]) >= 0.5
            assert float(r["baseline_fraction"]) >= float(r["forced_fraction"])
            assert r["verdict"] == coarse.VERDICT_EXCLUDED
            forced.add(r["forced_fraction"])
        assert len(forced) == 1

        # every baseline candidate, the rounded optimizer output, and randomized
        # 1-Lipschitz candidates all admit a witness ball holding at least half
        rng = np.random.default_rng(77)
        for n in range(3, 15):
            g = graphs.margulis_graph(n)
            cands = [coarse.lattice_candidate(g, make(g)) for make in coarse.BASELINES.values()]
            opt = embed.max_spread_embedding(g, dim=2, iters=60, seed=n, restarts=1)
            cands.append(coarse.lattice_candidate(g, coarse.rounded_lattice_coords(g, opt.coords)))
            cands += [coarse.lattice_candidate(g, coarse.walk_lattice_coords(g, rng)) for _ in range(100)]
            for cand in cands:
                assert cand.lipschitz_verified
                assert coarse.concentration_witness(cand).fraction >= 0.5

        ctrl = tmp_path / "cyc.csv"
        cli.main(["obstruct", "--family", "cycle", "--target", "z2", "--sizes", "8,16,32,64,128,256", "-o", str(ctrl)])
        with open(ctrl, newline="") as fh:
            crow = list(csv.DictReader(fh))
        cf = [float(r["forced_fraction"]) for r in crow]
        assert all(b < a for a, b in zip(cf, cf[1:]))
        sizes = np.array([8, 16, 32, 64, 128, 256], dtype=float)
        slope = np.polyfit(np.log(sizes), np.log(cf), 1)[0]
        assert slope < -1.5, slope
        assert cf[-1] < 1e-2 * cf[0]
        assert all(r["verdict"] == coarse.VERDICT_NONE for r in crow)


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-q"]))
