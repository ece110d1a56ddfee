"""Command line front end.

    coarsekit gen margulis --n 8 -o g.txt
    coarsekit verify expander-inequalities --family margulis --sizes 3..10 --seed 1 -o rep.csv
    coarsekit obstruct --family margulis --target z2 --sizes 3..14 -o obs.csv

Exit status: 0 success, 1 when a verifier records a violation, 2 on usage or input errors.
"""
from __future__ import annotations

import argparse
import csv
import dataclasses
import io
import json
import os
import sys
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import cayley, coarse, embed, graphs, spectral, transport

EXIT_OK, EXIT_VIOLATION, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


@dataclass
class RunConfig:
    command: str
    action: str | None = None
    input: str | None = None
    output: str | None = None
    sizes: list[int] = field(default_factory=list)
    family: str = "margulis"
    degree: int = 4
    dim: int = 3
    iters: int = 500
    seed: int | None = None
    n: int | None = None
    group: str = "z2"
    radius: int = 3
    norms: str | None = None
    mu: str | None = None
    nu: str | None = None
    target: str = "z2"
    baseline: str = "spectral"
    samples: int = 200
    r0: float = 2.0
    epsilon: float = 0.1
    tolerance: dict = field(default_factory=dict)

    RANDOMIZED = {("gen", "random-regular"), ("verify", "expander-inequalities"),
                  ("verify", "transport-metric"), ("embed", "max-spread")}

    def validate(self) -> None:
        if (self.command, self.action) in self.RANDOMIZED and self.seed is None:
            raise UsageError(f"'{self.command} {self.action}' is randomized and needs --seed")
        for name in ("input", "mu", "nu"):
            path = getattr(self, name)
            if path is not None and not Path(path).is_file():
                raise UsageError(f"--{name} {path}: no such file")
        if self.output is not None:
            parent = Path(self.output).resolve().parent
            if not parent.is_dir():
                raise UsageError(f"output directory {parent} does not exist")
        unknown = set(self.tolerance) - set(DEFAULT_TOLERANCES)
        if unknown:
            raise UsageError(f"unknown tolerance keys: {sorted(unknown)}")

    def tol(self, key: str) -> float:
        return float(self.tolerance.get(key, DEFAULT_TOLERANCES[key]))


DEFAULT_TOLERANCES = {"ratio": 1e-9, "identity": 1e-9, "transport": 1e-7, "metric": 1e-9}


def parse_sizes(text: str) -> list[int]:
    out: list[int] = []
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        if ".." in part:
            lo, hi = part.split("..")
            out += list(range(int(lo), int(hi) + 1))
        else:
            out.append(int(part))
    if not out:
        raise argparse.ArgumentTypeError("empty size list")
    return out


def write_atomic(path: str | None, text: str) -> None:
    if path is None:
        sys.stdout.write(text)
        return
    target = Path(path)
    fd, tmp = tempfile.mkstemp(dir=target.resolve().parent, prefix=f".{target.name}.")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, target)
    except BaseException:
        Path(tmp).unlink(missing_ok=True)
        raise


def csv_text(columns: list[str], rows: list[dict]) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=columns, lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in r.items()})
    return buf.getvalue()


def _family(cfg: RunConfig) -> graphs.ExpanderFamily:
    if not cfg.sizes:
        raise UsageError("--sizes is required")
    kind = cfg.family.replace("-", "_")
    return graphs.expander_family(kind, cfg.sizes, degree=cfg.degree, seed=cfg.seed or 0)


# --- subcommands ----------------------------------------------------------------

def cmd_gen(cfg: RunConfig) -> int:
    if cfg.action == "margulis":
        if cfg.n is None:
            raise UsageError("--n is required")
        write_atomic(cfg.output, graphs.format_edgelist(graphs.margulis_graph(cfg.n)))
    elif cfg.action == "random-regular":
        if cfg.n is None:
            raise UsageError("--n is required")
        write_atomic(cfg.output, graphs.format_edgelist(graphs.random_regular(cfg.n, cfg.degree, cfg.seed)))
    elif cfg.action == "cayley":
        ball = cayley.cayley_ball(cayley.parse_group(cfg.group), cfg.radius)
        write_atomic(cfg.output, graphs.format_edgelist(ball.to_graph()))
        norms = cfg.norms or (f"{cfg.output}.norms.csv" if cfg.output else None)
        if norms:
            write_atomic(norms, cayley.format_norm_table(ball))
    else:
        raise UsageError(f"unknown generator {cfg.action!r}")
    return EXIT_OK


def cmd_spectral(cfg: RunConfig) -> int:
    gs = [graphs.read_edgelist(cfg.input)] if cfg.input else _family(cfg).graphs
    rows = [spectral.certificate_row(g) for g in gs]
    write_atomic(cfg.output, csv_text(spectral.CERTIFICATE_COLUMNS, rows))
    return EXIT_OK


EXPANDER_COLUMNS = [
    "n", "m", "d_max", "lambda1", "c0", "samples", "max_d_ratio", "ratio_violations",
    "corollary_checks", "corollary_violations", "identity_max_rel_err", "identity_violations",
    "optimizer_spread", "spread_bound", "violations",
]


def verify_expander(cfg: RunConfig) -> tuple[list[str], list[dict]]:
    rows = []
    fam = _family(cfg)
    for i, g in enumerate(fam.graphs):
        rng = np.random.default_rng([cfg.seed, i])
        c0 = embed.c0_bound(g)
        maps = embed.random_embeddings(g, cfg.samples, cfg.dim, rng)
        ratios = embed.d_ratio_batch(g, maps)
        ratio_bad = int(np.count_nonzero(ratios > c0 + cfg.tol("ratio")))
        # pair energy identity on the raw (uncentered) maps
        n = g.vertex_count
        iu, ju = np.triu_indices(n, 1)
        pair = np.sum((maps[:, iu] - maps[:, ju]) ** 2, axis=(1, 2))
        ident = n * np.sum(maps ** 2, axis=(1, 2)) - np.sum(maps.sum(axis=1) ** 2, axis=1)
        rel = np.abs(pair - ident) / np.maximum(np.abs(pair), 1e-300)
        ident_bad = int(np.count_nonzero(rel > cfg.tol("identity")))
        opt = embed.max_spread_embedding(g, cfg.dim, cfg.iters, cfg.seed + i, restarts=2)
        cor_bad = 0
        checks = [embed.Embedding(g, m) for m in maps] + [opt]
        for e in checks:
            if not embed.corollary_report(e, c0).ok:
                cor_bad += 1
        bound = n * c0 / 2
        spread_bad = int(embed.spread(opt) > bound + 1e-6)
        rows.append({
            "n": n, "m": g.edge_count, "d_max": g.max_degree,
            "lambda1": spectral.lambda1(g).lambda1, "c0": c0, "samples": cfg.samples,
            "max_d_ratio": float(ratios.max()), "ratio_violations": ratio_bad,
            "corollary_checks": len(checks), "corollary_violations": cor_bad,
            "identity_max_rel_err": float(rel.max()), "identity_violations": ident_bad,
            "optimizer_spread": embed.spread(opt), "spread_bound": bound,
            "violations": ratio_bad + cor_bad + ident_bad + spread_bad,
        })
    return EXPANDER_COLUMNS, rows


CHECK_COLUMNS = ["check", "count", "max_error", "violations"]


def verify_transport(cfg: RunConfig) -> tuple[list[str], list[dict]]:
    rng = np.random.default_rng(cfg.seed)
    g = graphs.random_regular(30, 3, cfg.seed)
    space = transport.MetricSpaceTable.from_graph(g)
    count = cfg.samples

    def rand_measure(k, mass=1.0):
        pts = rng.choice(space.size, size=k, replace=False)
        w = rng.random(k)
        return transport.FiniteMeasure.from_pairs(zip(pts.tolist(), (mass * w / w.sum()).tolist()))

    dual_err, dual_bad = 0.0, 0
    for _ in range(count):
        mu, nu = rand_measure(int(rng.integers(1, 13))), rand_measure(int(rng.integers(1, 13)))
        err = abs(transport.kr_distance(mu, nu, space) - transport.kr_dual(mu, nu, space))
        dual_err = max(dual_err, err)
        dual_bad += err > cfg.tol("transport")
    dirac_err = max(abs(transport.kr_distance(transport.dirac(x), transport.dirac(y), space) - space.dist[x, y])
                    for x in range(space.size) for y in range(space.size))
    tri_err, tri_bad = 0.0, 0
    for _ in range(count):
        a, b, c = (rand_measure(int(rng.integers(1, 7))) for _ in range(3))
        gap = transport.kr_distance(a, c, space) - transport.kr_distance(a, b, space) - transport.kr_distance(b, c, space)
        tri_err = max(tri_err, gap)
        tri_bad += gap > cfg.tol("metric")
    return CHECK_COLUMNS, [
        {"check": "primal_equals_dual", "count": count, "max_error": dual_err, "violations": dual_bad},
        {"check": "dirac_isometry", "count": space.size ** 2, "max_error": float(dirac_err), "violations": int(dirac_err > 0)},
        {"check": "triangle_inequality", "count": count, "max_error": max(tri_err, 0.0), "violations": tri_bad},
    ]


def verify_displacement(cfg: RunConfig) -> tuple[list[str], list[dict]]:
    ball = cayley.cayley_ball(cayley.free_abelian(2), max(cfg.radius, 2))
    pts = ball.elements
    ident = lambda x: np.asarray(x, dtype=float)  # noqa: E731
    double = lambda x: 2 * np.asarray(x, dtype=float)  # noqa: E731
    rows = []
    for name, p, expect in (("identity", ident, True), ("double", double, False)):
        d = cayley.displacement_check(ball, cayley.translation_action, p, pts, seed=cfg.seed or 0)
        c = cayley.prop2_crosscheck(ball, cayley.translation_action, p, pts, seed=cfg.seed or 0)
        bad = int(d.passed != expect) + int(not c.agrees)
        rows.append({"check": f"{name}_map", "count": d.checked + c.checked,
                     "max_error": d.worst.excess if d.worst else 0.0, "violations": bad})
    radial = cayley.radial_map_build(32 if cfg.radius < 8 else cfg.radius, cfg.r0, cfg.epsilon)
    rows.append({"check": "radial_generator_displacement", "count": len(radial.values),
                 "max_error": radial.max_generator_displacement - 1.0, "violations": int(not radial.displacement_ok)})
    rows.append({"check": "radial_winding_number", "count": 1, "max_error": float(radial.winding - 1),
                 "violations": int(radial.winding != 1)})
    return CHECK_COLUMNS, rows


def cmd_verify(cfg: RunConfig) -> int:
    runners = {"expander-inequalities": verify_expander, "transport-metric": verify_transport,
               "displacement": verify_displacement}
    if cfg.action not in runners:
        raise UsageError(f"unknown verifier {cfg.action!r}")
    cols, rows = runners[cfg.action](cfg)
    write_atomic(cfg.output, csv_text(cols, rows))
    return EXIT_VIOLATION if any(r["violations"] for r in rows) else EXIT_OK


def cmd_embed(cfg: RunConfig) -> int:
    if not cfg.input:
        raise UsageError("--input edge list is required")
    g = graphs.read_edgelist(cfg.input)
    if cfg.action == "max-spread":
        e = embed.max_spread_embedding(g, cfg.dim, cfg.iters, cfg.seed)
    elif cfg.action == "spectral":
        e = embed.spectral_embedding(g, cfg.dim)
    else:
        raise UsageError(f"unknown embedding {cfg.action!r}")
    write_atomic(cfg.output, embed.format_embedding_csv(e))
    return EXIT_OK


def cmd_transport(cfg: RunConfig) -> int:
    if cfg.action != "kr":
        raise UsageError(f"unknown transport action {cfg.action!r}")
    if not (cfg.mu and cfg.nu):
        raise UsageError("--mu and --nu are required")
    mu, spec_a = transport.parse_measure_json(Path(cfg.mu).read_text())
    nu, spec_b = transport.parse_measure_json(Path(cfg.nu).read_text())
    if spec_a != spec_b:
        raise UsageError("the two measures must live on the same space")
    space = transport.load_space(spec_a, Path(cfg.mu).resolve().parent)
    value = transport.kr_distance(mu, nu, space)
    write_atomic(cfg.output, csv_text(["kr_distance"], [{"kr_distance": value}]))
    return EXIT_OK


def cmd_obstruct(cfg: RunConfig) -> int:
    report = coarse.obstruction_bound(_family(cfg), cfg.target, cfg.baseline)
    write_atomic(cfg.output, csv_text(coarse.REPORT_COLUMNS, [r.as_dict() for r in report.rows]))
    return EXIT_VIOLATION if report.violations else EXIT_OK


COMMANDS = {"gen": cmd_gen, "spectral": cmd_spectral, "verify": cmd_verify, "embed": cmd_embed,
            "transport": cmd_transport, "obstruct": cmd_obstruct}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="coarsekit", description=__doc__.split("\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, *, family=False):
        p.add_argument("-o", "--output")
        p.add_argument("--seed", type=int)
        p.add_argument("--config", help="JSON file of RunConfig fields (command-line flags win)")
        if family:
            p.add_argument("--family", choices=["margulis", "random-regular", "random_regular", "cycle", "complete"])
            p.add_argument("--sizes", type=parse_sizes)
            p.add_argument("--degree", type=int)

    gen = sub.add_parser("gen", help="generate a graph as an edge list")
    gen.add_argument("action", choices=["margulis", "random-regular", "cayley"])
    gen.add_argument("--n", type=int)
    gen.add_argument("--d", dest="degree", type=int)
    gen.add_argument("--group")
    gen.add_argument("--radius", type=int)
    gen.add_argument("--norms")
    common(gen)

    sp = sub.add_parser("spectral", help="spectral certificates as CSV")
    sp.add_argument("--input")
    common(sp, family=True)

    ver = sub.add_parser("verify", help="run a verifier and report violations")
    ver.add_argument("action", choices=["expander-inequalities", "transport-metric", "displacement"])
    ver.add_argument("--samples", type=int)
    ver.add_argument("--dim", type=int)
    ver.add_argument("--iters", type=int)
    ver.add_argument("--radius", type=int)
    ver.add_argument("--r0", type=float)
    ver.add_argument("--epsilon", type=float)
    common(ver, family=True)

    em = sub.add_parser("embed", help="embed a graph")
    em.add_argument("action", choices=["max-spread", "spectral"])
    em.add_argument("--input")
    em.add_argument("--dim", type=int)
    em.add_argument("--iters", type=int)
    common(em)

    tr = sub.add_parser("transport", help="Kantorovich-Rubinstein distance between measure files")
    tr.add_argument("action", choices=["kr"])
    tr.add_argument("--mu")
    tr.add_argument("--nu")
    common(tr)

    ob = sub.add_parser("obstruct", help="obstruction report for a graph family")
    ob.add_argument("--target", choices=["z2"])
    ob.add_argument("--baseline", choices=sorted(coarse.BASELINES))
    common(ob, family=True)
    return parser


def config_from_args(ns: argparse.Namespace) -> RunConfig:
    names = {f.name for f in dataclasses.fields(RunConfig)}
    values: dict = {}
    if getattr(ns, "config", None):
        try:
            loaded = json.loads(Path(ns.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"cannot read config: {exc}") from None
        unknown = set(loaded) - names
        if unknown:
            raise UsageError(f"unknown config keys: {sorted(unknown)}")
        values.update(loaded)
    for k, v in vars(ns).items():
        if k in names and v is not None:
            values[k] = v
    values["command"] = ns.command
    if "sizes" in values and isinstance(values["sizes"], str):
        values["sizes"] = parse_sizes(values["sizes"])
    return RunConfig(**values)


def run(cfg: RunConfig) -> int:
    cfg.validate()
    return COMMANDS[cfg.command](cfg)


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    ns = parser.parse_args(argv)
    try:
        return run(config_from_args(ns))
    except (UsageError, graphs.GraphError, transport.TransportError, cayley.CayleyError,
            coarse.CoarseError, ValueError, OSError) as exc:
        print(f"coarsekit: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
