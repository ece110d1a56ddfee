import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from coarsekit import graphs, transport
from coarsekit.transport import FiniteMeasure, MetricSpaceTable, TransportError, dirac

PATH = MetricSpaceTable.from_graph(graphs.path_graph(9))


def cdf_distance(mu: FiniteMeasure, nu: FiniteMeasure, n: int) -> float:
    """W1 on the path 0-1-...-(n-1): integral of |F_mu - F_nu|."""
    a = np.zeros(n)
    b = np.zeros(n)
    for p, w in zip(mu.support, mu.weights):
        a[p] += w
    for p, w in zip(nu.support, nu.weights):
        b[p] += w
    return float(np.abs(np.cumsum(a - b))[:-1].sum())


@st.composite
def measures(draw, size, mass=1.0, max_support=6):
    k = draw(st.integers(1, max_support))
    pts = draw(st.lists(st.integers(0, size - 1), min_size=k, max_size=k, unique=True))
    w = np.array(draw(st.lists(st.floats(0.01, 1.0), min_size=k, max_size=k)))
    w = mass * w / w.sum()
    return FiniteMeasure.from_pairs(list(zip(pts, w.tolist())))


@given(measures(9), measures(9))
def test_path_matches_cdf_formula(mu, nu):
    ref = cdf_distance(mu, nu, 9)
    assert transport.kr_distance(mu, nu, PATH) == pytest.approx(ref, abs=1e-9)
    assert transport.kr_dual(mu, nu, PATH) == pytest.approx(ref, abs=1e-7)


@given(measures(9, mass=2.5), measures(9, mass=2.5))
def test_equal_unnormalized_mass(mu, nu):
    assert transport.kr_distance(mu, nu, PATH) == pytest.approx(cdf_distance(mu, nu, 9), abs=1e-9)


def test_unequal_mass_rejected():
    with pytest.raises(TransportError):
        transport.kr_distance(dirac(0), dirac(1, 2.0), PATH)


def test_transport_plan_is_feasible(rng):
    supply = rng.random(5)
    demand = rng.random(7)
    demand *= supply.sum() / demand.sum()
    cost = rng.random((5, 7))
    value, plan = transport.transport_simplex(supply, demand, cost)
    assert np.all(plan >= -1e-12)
    assert np.allclose(plan.sum(axis=1), supply) and np.allclose(plan.sum(axis=0), demand)
    assert value == pytest.approx(float((plan * cost).sum()))


def test_primal_matches_dual_on_graph(rng):
    space = MetricSpaceTable.from_graph(graphs.random_regular(20, 3, seed=5))
    for _ in range(50):
        pts_a = rng.choice(20, size=rng.integers(1, 13), replace=False)
        pts_b = rng.choice(20, size=rng.integers(1, 13), replace=False)
        wa, wb = rng.random(len(pts_a)), rng.random(len(pts_b))
        mu = FiniteMeasure.from_pairs(zip(pts_a.tolist(), (wa / wa.sum()).tolist()))
        nu = FiniteMeasure.from_pairs(zip(pts_b.tolist(), (wb / wb.sum()).tolist()))
        assert transport.kr_distance(mu, nu, space) == pytest.approx(transport.kr_dual(mu, nu, space), abs=1e-7)


@given(measures(9), measures(9), measures(9))
def test_metric_axioms(a, b, c):
    d = lambda x, y: transport.kr_distance(x, y, PATH)  # noqa: E731
    assert d(a, a) == pytest.approx(0, abs=1e-12)
    assert d(a, b) == pytest.approx(d(b, a), abs=1e-12)
    assert d(a, c) <= d(a, b) + d(b, c) + 1e-9


def test_dirac_isometry():
    space = MetricSpaceTable.from_graph(graphs.margulis_graph(4))
    for x in range(space.size):
        for y in range(space.size):
            assert transport.kr_distance(dirac(x), dirac(y), space) == space.dist[x, y]


@given(measures(9), measures(9), st.integers(0, 2**31))
def test_bary_extend_lipschitz(mu, nu, seed):
    rng = np.random.default_rng(seed)
    # an N-Lipschitz map into R^2 on the path: random steps of length <= N
    steps = rng.standard_normal((8, 2))
    steps *= 1.7 / np.linalg.norm(steps, axis=1, keepdims=True).max()
    gmap = np.vstack([np.zeros(2), np.cumsum(steps, axis=0)])
    N = float(np.linalg.norm(np.diff(gmap, axis=0), axis=1).max())
    lhs = np.linalg.norm(transport.bary_extend(gmap, mu) - transport.bary_extend(gmap, nu))
    assert lhs <= N * transport.kr_distance(mu, nu, PATH) + 1e-9


def test_bary_extend_on_dirac():
    gmap = {3: [1.0, 2.0]}
    assert np.array_equal(transport.bary_extend(gmap, dirac(3)), [1.0, 2.0])
    with pytest.raises(TransportError):
        transport.bary_extend(gmap, dirac(4))


def test_partition_map():
    space = transport.lattice_ball_space(4)
    net = [i for i, (x, y) in enumerate(space.coords.tolist()) if (x + y) % 2 == 0]
    for x in range(space.size):
        m = transport.partition_map(space, net, 2.0, x)
        assert m.total_mass == pytest.approx(1.0)
        assert all(space.dist[x, p] < 2 for p in m.support)
    with pytest.raises(TransportError):
        transport.partition_map(space, [0], 1.0, space.size - 1)


def test_psi_audit_checkerboard():
    space = transport.lattice_ball_space(6)
    net = [i for i, (x, y) in enumerate(space.coords.tolist()) if (x + y) % 2 == 0]
    L, audit = transport.psi_lipschitz_audit(space, net, 2.0)
    assert isinstance(L, float)
    assert L == pytest.approx(1.5)
    assert audit.multiplicity == 4 and audit.pairs_checked == 410
    assert L <= audit.reference_bound


@pytest.mark.parametrize(
    "table",
    [[[0, 1], [2, 0]], [[0, 1, 5], [1, 0, 1], [5, 1, 0]], [[1, 0], [0, 1]], [[0, -1], [-1, 0]]],
)
def test_bad_tables_rejected(table):
    with pytest.raises(TransportError):
        MetricSpaceTable(table)


def test_measure_validation():
    with pytest.raises(TransportError):
        FiniteMeasure((0, 0), (0.5, 0.5))
    with pytest.raises(TransportError):
        FiniteMeasure((0,), (-1.0,))
    assert FiniteMeasure.from_pairs([(1, 0.25), (1, 0.25)]).as_dict() == {1: 0.5}


def test_measure_json_round_trip(tmp_path):
    (tmp_path / "g.txt").write_text(graphs.format_edgelist(graphs.cycle_graph(6)))
    mu = FiniteMeasure.from_pairs([(0, 0.5), (3, 0.5)])
    back, spec = transport.parse_measure_json(transport.measure_to_json(mu, "g.txt"))
    assert back == mu and spec == "g.txt"
    space = transport.load_space(spec, tmp_path)
    assert transport.kr_distance(back, dirac(0), space) == pytest.approx(1.5)
    inline = transport.load_space([[0, 2], [2, 0]])
    assert inline.dist[0, 1] == 2
    with pytest.raises(TransportError):
        transport.parse_measure_json(json.dumps({"atoms": []}))
