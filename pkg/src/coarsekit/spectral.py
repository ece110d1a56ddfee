"""Combinatorial Laplacian, its first positive eigenvalue and Cheeger cross-checks."""
from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np
import scipy.linalg
from scipy.sparse import diags
from scipy.sparse.linalg import eigsh

from .graphs import ExpanderFamily, FiniteGraph, GraphError

DENSE_LIMIT = 2000
CHEEGER_LIMIT = 20
REL_TOL = 1e-9


@dataclass(frozen=True)
class SpectralCertificate:
    lambda1: float
    witness_vector: np.ndarray
    degree: int
    conductance_lower_bound: float
    method: str = "dense"

    @property
    def vertex_count(self) -> int:
        return len(self.witness_vector)


def _as_vertex_array(g: FiniteGraph, f) -> np.ndarray:
    arr = np.asarray(f, dtype=float)
    if arr.shape[0] != g.vertex_count:
        raise ValueError(f"vector has {arr.shape[0]} entries, graph has {g.vertex_count} vertices")
    return arr


def laplacian_matrix(g: FiniteGraph, sparse: bool = False):
    lap = diags(g.degrees.astype(float)) - g.adjacency_sparse
    return lap.tocsr() if sparse else lap.toarray()


def laplacian_apply(g: FiniteGraph, f) -> np.ndarray:
    """(Lf)(x) = deg(x) f(x) - sum of f over neighbors, counting parallel edges."""
    arr = _as_vertex_array(g, f)
    deg = g.degrees.astype(float)
    return (deg[:, None] * arr.reshape(len(deg), -1) - g.adjacency_sparse @ arr.reshape(len(deg), -1)).reshape(arr.shape)


def edge_energy(g: FiniteGraph, f) -> float:
    arr = _as_vertex_array(g, f).reshape(g.vertex_count, -1)
    diff = arr[g.edges[:, 0]] - arr[g.edges[:, 1]]
    return float(np.sum(diff * diff))


def rayleigh_quotient(g: FiniteGraph, f) -> float:
    """Edge energy over squared norm after removing the mean of ``f``.

    By the variational characterization this is never below ``lambda1(g)``.
    """
    arr = _as_vertex_array(g, f).reshape(g.vertex_count, -1)
    centered = arr - arr.mean(axis=0)
    denom = float(np.sum(centered * centered))
    scale = max(float(np.max(np.abs(arr))), 1.0)
    if denom <= (1e-12 * scale) ** 2:
        raise ValueError("rayleigh_quotient is undefined for a constant vector")
    return edge_energy(g, centered) / denom


def lambda1(g: FiniteGraph, method: str = "auto") -> SpectralCertificate:
    """Smallest positive Laplacian eigenvalue with an eigenvector witness.

    Dense symmetric eigensolve up to ``DENSE_LIMIT`` vertices, shift-invert Lanczos
    above it.  Results are cached on the graph per method.
    """
    if method == "auto":
        method = "dense" if g.vertex_count <= DENSE_LIMIT else "iterative"
    if method not in ("dense", "iterative"):
        raise ValueError(f"unknown method {method!r}")
    key = ("lambda1", method)
    if key in g._cache:
        return g._cache[key]
    if g.vertex_count < 2:
        raise GraphError("lambda1 needs at least two vertices")
    g.require_connected()
    if method == "dense":
        vals, vecs = scipy.linalg.eigh(laplacian_matrix(g), subset_by_index=[0, 1])
    else:
        vals, vecs = _iterative_bottom_pair(g)
    lam = float(vals[1])
    w = vecs[:, 1] - vecs[:, 1].mean()
    w /= np.linalg.norm(w)
    d = g.max_degree
    cert = SpectralCertificate(lam, w, d, lam / (2 * d), method)
    g._cache[key] = cert
    return cert


def _iterative_bottom_pair(g: FiniteGraph):
    # two eigenpairs nearest a small negative shift: the constant vector and lambda1
    lap = laplacian_matrix(g, sparse=True)
    shift = -1e-3 * max(1.0, g.max_degree)
    vals, vecs = eigsh(lap, k=2, sigma=shift, which="LM", tol=1e-14)
    order = np.argsort(vals)
    vals, vecs = vals[order], vecs[:, order]
    # one Rayleigh-quotient refinement keeps the relative error near machine level
    v = vecs[:, 1] - vecs[:, 1].mean()
    vals[1] = float(v @ (lap @ v)) / float(v @ v)
    return vals, vecs


def _edge_expansion_exact(g: FiniteGraph) -> Fraction:
    n = g.vertex_count
    mult = np.zeros((n, n), dtype=np.int64)
    np.add.at(mult, (g.edges[:, 0], g.edges[:, 1]), 1)
    mult += mult.T
    layers = int(mult.max()) if mult.size else 0
    # layer t holds neighbors joined by at least t parallel edges
    masks = np.zeros((layers, n), dtype=np.uint64)
    for t in range(layers):
        for k in range(n):
            m = 0
            for j in np.nonzero(mult[k] > t)[0].tolist():
                m |= 1 << j
            masks[t, k] = m
    size = 1 << n
    vol = np.zeros(size, dtype=np.int64)
    inner = np.zeros(size, dtype=np.int64)
    ids = np.arange(size, dtype=np.uint64)
    for k in range(n):
        half = 1 << k
        lower = ids[:half]
        link = np.zeros(half, dtype=np.int64)
        for t in range(layers):
            link += np.bitwise_count(lower & masks[t, k]).astype(np.int64)
        vol[half : 2 * half] = vol[:half] + g.degrees[k]
        inner[half : 2 * half] = inner[:half] + link
    cut = vol - 2 * inner
    sizes = np.bitwise_count(ids).astype(np.int64)
    best = None
    for s in range(1, n // 2 + 1):
        c = Fraction(int(cut[sizes == s].min()), s)
        if best is None or c < best:
            best = c
    return best


@dataclass(frozen=True)
class CheegerReport:
    h_exact: Fraction
    lambda1: float
    d_max: int
    lower_ok: bool
    upper_ok: bool

    @property
    def bounds_ok(self) -> bool:
        return self.lower_ok and self.upper_ok


def cheeger_crosscheck(g: FiniteGraph, tol: float = 1e-9) -> CheegerReport:
    """Exhaustive edge-expansion constant h against lambda1 <= 2h <= 2 sqrt(2 d_max lambda1)."""
    if g.vertex_count > CHEEGER_LIMIT:
        raise GraphError(f"exhaustive Cheeger constant limited to n <= {CHEEGER_LIMIT}")
    cert = lambda1(g)
    h = _edge_expansion_exact(g)
    lam, d = cert.lambda1, g.max_degree
    lower_ok = lam <= 2 * float(h) * (1 + tol) + tol
    upper_ok = float(h) <= math.sqrt(2 * d * lam) * (1 + tol) + tol
    return CheegerReport(h, lam, d, lower_ok, upper_ok)


@dataclass(frozen=True)
class FamilyCertificate:
    certificates: list[SpectralCertificate]
    delta: float
    decay_exponent: float
    uniformly_gapped: bool


def certify_family(fam: ExpanderFamily, decay_threshold: float = -1.0) -> FamilyCertificate:
    """Certificates for every member plus the empirical gap ``delta = min lambda1``.

    Finite data cannot prove a uniform gap.  The family is flagged as gapped when the
    log-log slope of lambda1 against vertex count, fitted over the larger half of the
    members, stays above ``decay_threshold``; cycles decay with slope -2.
    """
    for g in fam.graphs:
        if not g.is_connected:
            raise GraphError(f"family member {g!r} is disconnected")
    certs = [lambda1(g) for g in fam.graphs]
    lams = np.array([c.lambda1 for c in certs])
    sizes = np.array([g.vertex_count for g in fam.graphs], dtype=float)
    delta = float(lams.min())
    tail = slice(len(certs) // 2 if len(certs) >= 4 else 0, None)
    if len(certs) >= 2:
        slope = float(np.polyfit(np.log(sizes[tail]), np.log(lams[tail]), 1)[0])
    else:
        slope = 0.0
    return FamilyCertificate(certs, delta, slope, bool(delta > 0 and slope > decay_threshold))


CERTIFICATE_COLUMNS = ["n", "m", "d_max", "lambda1", "h_exact", "conductance_lower_bound"]


def certificate_row(g: FiniteGraph, with_cheeger: bool = True) -> dict:
    cert = lambda1(g)
    h = ""
    if with_cheeger and g.vertex_count <= CHEEGER_LIMIT:
        h = repr(float(_edge_expansion_exact(g)))
    return {
        "n": g.vertex_count,
        "m": g.edge_count,
        "d_max": g.max_degree,
        "lambda1": repr(cert.lambda1),
        "h_exact": h,
        "conductance_lower_bound": repr(cert.conductance_lower_bound),
    }
