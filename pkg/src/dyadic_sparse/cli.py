"""Command-line front end.

Exit codes: 0 success, 1 verification failure, 2 input error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .applications import TransformCoefficients, dominate_martingale_transform, jn_profile
from .czd import cz_decompose, verify_czd_contract
from .dyadic_core import CubeId
from .errors import DyadicError
from .instance import Instance, dumps, read_json
from .instance_gen import GenSpec, generate
from .median_decomposition import build_median_decomposition
from .positive_operators import PositiveOperator, ProbePolicy
from .sparse_domination import DominationConfig, build_sparse_domination
from .verify import check_certificate

EXIT_OK, EXIT_FAIL, EXIT_INPUT = 0, 1, 2

SWEEP_COLUMNS = (
    "digest", "k", "status", "tau1", "tau2", "cert_constant", "measured_constant",
    "measured_per_k1", "adaptation_rounds", "weak_estimate", "family_size", "error",
)


@dataclass
class RunReport:
    command: str
    instance_digest: str
    wall_time: float
    certificate: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        out = dict(self.certificate)
        out["command"] = self.command
        out["instance_digest"] = self.instance_digest
        out["wall_time"] = self.wall_time
        return out


def _cube_arg(text: str) -> CubeId:
    try:
        return CubeId.from_list([int(t) for t in text.replace(",", " ").split()])
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"cube must look like 'level,i[,j]': {text!r}") from exc


def _emit(obj, out: str | None) -> None:
    text = dumps(obj)
    if out:
        Path(out).write_text(text + "\n")
    else:
        print(text)


def _run(command: str, inst: Instance, build) -> RunReport:
    t0 = time.perf_counter()
    cert = build()
    return RunReport(command, inst.digest(), time.perf_counter() - t0, cert)


def _default_cube(inst: Instance, given: CubeId | None) -> CubeId:
    if given is not None:
        return inst.grid.check(given)
    if inst.collection:
        top = min(inst.collection, key=lambda Q: Q.level)
        if all(inst.grid.contains(top, S) for S in inst.collection):
            return top
    return inst.grid.root


# -- sweep -----------------------------------------------------------------------


def sweep_instance(inst: Instance, ks, probes: ProbePolicy, max_iter: int = 64) -> list[dict]:
    """Dominate ``A_k |f|`` for every ``k`` with one shared ``tau1``.

    Starting from the largest ``4 * estimate`` over ``k``, all ``k`` are re-run
    with the current ``tau1`` until none of them needs to adapt, so the
    certified constants are exactly ``tau1 + 4k``.
    """
    W = inst.weighted
    f = np.abs(inst.f)
    digest = inst.digest()
    ops, rows = {}, {}
    for k in ks:
        try:
            ops[k] = PositiveOperator(inst.grid, inst.collection, k)
        except DyadicError as exc:
            rows[k] = {"digest": digest, "k": k, "status": "error", "error": str(exc)}
    tau = None
    total_rounds = {k: 0 for k in ops}
    estimates: dict[int, float] = {}
    for _ in range(max_iter):
        certs = {}
        for k, op in ops.items():
            cfg = DominationConfig(probes=probes, tau1=tau, estimate=estimates.get(k))
            certs[k] = build_sparse_domination(op, W, f, cfg)
            estimates[k] = certs[k].weak_estimate
            total_rounds[k] += certs[k].adaptation_rounds
        if tau is None:
            tau = max(4.0 * c.weak_estimate for c in certs.values()) if certs else 0.0
            continue
        if all(c.adaptation_rounds == 0 for c in certs.values()):
            break
        tau = max(c.tau1 for c in certs.values())
    else:
        raise RuntimeError("common threshold did not settle")
    for k, cert in certs.items():
        rows[k] = {
            "digest": digest,
            "k": k,
            "status": "ok" if cert.measured_constant <= cert.cert_constant else "fail",
            "tau1": cert.tau1,
            "tau2": cert.tau2,
            "cert_constant": cert.cert_constant,
            "measured_constant": cert.measured_constant,
            "measured_per_k1": cert.measured_constant / (k + 1),
            "adaptation_rounds": total_rounds[k],
            "weak_estimate": cert.weak_estimate,
            "family_size": len(cert.family),
            "error": "",
        }
    return [rows[k] for k in ks]


def _sweep_file(args) -> list[dict]:
    path, ks, seed, count = args
    try:
        inst = Instance.load(path)
        return sweep_instance(inst, ks, ProbePolicy(seed=seed, random_count=count))
    except (DyadicError, RuntimeError) as exc:
        return [{"digest": str(path), "k": k, "status": "error", "error": str(exc)} for k in ks]


def sweep_csv(rows: list[dict]) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=SWEEP_COLUMNS, lineterminator="\n")
    w.writeheader()
    for r in sorted(rows, key=lambda r: (r["digest"], r["k"])):
        w.writerow({c: _csv_value(r.get(c, "")) for c in SWEEP_COLUMNS})
    return buf.getvalue()


def _csv_value(v):
    if isinstance(v, float):
        return format(v, ".17g") if math.isfinite(v) else str(v)
    return v


def _parse_k_range(text: str) -> list[int]:
    out = []
    for part in text.split(","):
        lo, _, hi = part.partition("-")
        out.extend(range(int(lo), int(hi or lo) + 1))
    return sorted(set(out))


# -- commands --------------------------------------------------------------------


def cmd_gen(a) -> int:
    spec = GenSpec(
        seed=a.seed, dimension=a.dimension, depth=a.depth, measure=a.measure, f_kind=a.f_kind,
        collection=a.collection, k=a.k or 0, lam=a.lam if a.lam is not None else 0.3, top_level=a.top_level,
    )
    _emit(generate(spec).to_dict(), a.out)
    return EXIT_OK


def cmd_dominate(a) -> int:
    inst = Instance.load(a.instance)
    k = inst.k if a.k is None else a.k
    op = PositiveOperator(inst.grid, inst.collection, k)
    cfg = DominationConfig(probes=ProbePolicy(seed=a.seed, random_count=a.probes), tau1=a.tau1)
    rep = _run("dominate", inst, lambda: build_sparse_domination(op, inst.weighted, np.abs(inst.f), cfg).to_dict())
    _emit(rep.to_dict(), a.out)
    return EXIT_OK if rep.certificate["measured_constant"] <= rep.certificate["cert_constant"] else EXIT_FAIL


def cmd_mod(a) -> int:
    inst = Instance.load(a.instance)
    lam = inst.lam if a.lam is None else a.lam
    F0 = _default_cube(inst, a.cube)
    rep = _run("mod", inst, lambda: build_median_decomposition(inst.weighted, inst.f, F0, lam, a.root_rule).to_dict())
    _emit(rep.to_dict(), a.out)
    return EXIT_OK


def cmd_czd(a) -> int:
    inst = Instance.load(a.instance)
    W = inst.weighted
    p_list = [float(p) for p in a.p.split(",")]

    def build():
        dec = cz_decompose(W, inst.f, a.height)
        out = dec.to_dict()
        out["report"] = verify_czd_contract(W, inst.f, dec, p_list).to_dict()
        return out

    rep = _run("czd", inst, build)
    _emit(rep.to_dict(), a.out)
    return EXIT_OK if rep.certificate["report"]["ok"] else EXIT_FAIL


def _load_eps(inst: Instance, a) -> TransformCoefficients:
    grid = inst.grid
    if a.eps is None:
        return TransformCoefficients.random(grid, np.random.default_rng(a.seed))
    if a.eps.startswith("const:"):
        return TransformCoefficients.constant(grid, float(a.eps.split(":", 1)[1]))
    doc = read_json(a.eps)
    items = doc["eps"] if isinstance(doc, dict) else doc
    return TransformCoefficients.from_mapping(grid, {CubeId.from_list(q): float(v) for q, v in items})


def cmd_martingale(a) -> int:
    inst = Instance.load(a.instance)
    W = inst.weighted
    lam = inst.lam if a.lam is None else a.lam
    eps = _load_eps(inst, a)
    F0 = inst.grid.check(a.cube) if a.cube is not None else inst.grid.root
    f = np.zeros(inst.grid.n_cells)
    f[inst.grid.cells(F0)] = inst.f[inst.grid.cells(F0)]

    def build():
        cert = dominate_martingale_transform(W, f, eps, F0, lam, ProbePolicy(seed=a.seed, random_count=a.probes))
        out = cert.to_dict()
        out["eps"] = eps.to_list()
        return out

    local = Instance(inst.dimension, inst.depth, inst.masses, f, inst.collection, inst.k, lam, inst.meta)
    rep = _run("martingale", local, build)
    _emit(rep.to_dict(), a.out)
    c = rep.certificate
    return EXIT_OK if math.isfinite(c["final_constant"]) and c["final_constant"] <= c["final_bound"] * (1 + 1e-9) else EXIT_FAIL


def cmd_jn(a) -> int:
    inst = Instance.load(a.instance)
    lam = inst.lam if a.lam is None else a.lam
    Q = _default_cube(inst, a.cube)
    rep = _run("jn", inst, lambda: jn_profile(inst.weighted, inst.f, Q, lam, a.c, a.cap).to_dict())
    _emit(rep.to_dict(), a.out)
    return EXIT_OK if rep.certificate["decay_ok"] else EXIT_FAIL


def cmd_sweep(a) -> int:
    ks = _parse_k_range(a.k_range)
    files = list(a.instances)
    if a.instance:
        files.insert(0, a.instance)
    if not files:
        raise ValueError("sweep needs at least one instance file")
    jobs = [(p, ks, a.seed, a.probes) for p in files]
    if a.jobs > 1:
        with ProcessPoolExecutor(a.jobs) as ex:
            results = list(ex.map(_sweep_file, jobs))
    else:
        results = [_sweep_file(j) for j in jobs]
    rows = [r for res in results for r in res]
    text = sweep_csv(rows)
    if a.out:
        Path(a.out).write_text(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK if all(r["status"] == "ok" for r in rows) else EXIT_FAIL


def cmd_verify(a) -> int:
    inst = Instance.load(a.instance)
    failed = False
    lines = []
    for path in a.certs:
        doc = read_json(path)
        problems = check_certificate(inst, doc)
        digest = doc.get("instance_digest")
        if digest is not None and digest != inst.digest():
            problems.append(f"certificate was produced for instance {digest}, not {inst.digest()}")
        failed |= bool(problems)
        lines.append(f"{path}: {'ok' if not problems else 'FAIL'}")
        lines.extend(f"  - {p}" for p in problems)
    text = "\n".join(lines)
    if a.out:
        Path(a.out).write_text(text + "\n")
    print(text)
    return EXIT_FAIL if failed else EXIT_OK


# -- parser ------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--instance", help="instance JSON file")
    common.add_argument("--out", help="output file (default: stdout)")
    common.add_argument("--seed", type=int, default=0, help="seed for generation, probes and random coefficients")
    common.add_argument("--lambda", dest="lam", type=float, help="oscillation parameter in (0, 1/2)")
    common.add_argument("--k", type=int, help="complexity of the positive operator")
    common.add_argument("--jobs", type=int, default=1, help="worker processes for sweeps")

    p = argparse.ArgumentParser(prog="dyadic-sparse", description="Sparse bounds on weighted dyadic grids.")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", parents=[common], help="generate a random instance")
    g.add_argument("--dimension", type=int, default=1)
    g.add_argument("--depth", type=int, default=6)
    g.add_argument("--measure", default="uniform", help="uniform | random | skewed:S | atomic")
    g.add_argument("--f-kind", default="random", help="random | spike | haar")
    g.add_argument("--collection", default="random-sparse:0.5", help="nested-chain | random-sparse:G | full-grid")
    g.add_argument("--top-level", type=int, default=None)
    g.set_defaults(run=cmd_gen)

    d = sub.add_parser("dominate", parents=[common], help="sparse domination of A_k |f|")
    d.add_argument("--tau1", type=float, default=None, help="initial weak-type threshold")
    d.add_argument("--probes", type=int, default=64, help="random probes for the weak-norm estimate")
    d.set_defaults(run=cmd_dominate)

    m = sub.add_parser("mod", parents=[common], help="median oscillation decomposition")
    m.add_argument("--cube", type=_cube_arg, default=None, help="starting cube 'level,i[,j]'")
    m.add_argument("--root-rule", default="self", choices=("self", "require_parent"))
    m.set_defaults(run=cmd_mod)

    c = sub.add_parser("czd", parents=[common], help="Calderon-Zygmund decomposition")
    c.add_argument("--height", type=float, required=True)
    c.add_argument("--p", default="2", help="comma-separated exponents for the g-bound ratio")
    c.set_defaults(run=cmd_czd)

    t = sub.add_parser("martingale", parents=[common], help="sparse domination of a martingale transform")
    t.add_argument("--eps", default=None, help="coefficient JSON file, or const:V (default: random signs)")
    t.add_argument("--cube", type=_cube_arg, default=None)
    t.add_argument("--probes", type=int, default=64)
    t.set_defaults(run=cmd_martingale)

    j = sub.add_parser("jn", parents=[common], help="John-Nirenberg profile")
    j.add_argument("--c", type=float, default=0.1, help="exponent for the exponential moment")
    j.add_argument("--cap", type=float, default=10.0, help="moment cap for the fitted exponent")
    j.add_argument("--cube", type=_cube_arg, default=None)
    j.set_defaults(run=cmd_jn)

    s = sub.add_parser("sweep", parents=[common], help="constants versus k, as CSV")
    s.add_argument("instances", nargs="*", help="instance files (in addition to --instance)")
    s.add_argument("--k-range", default="0-6", help="inclusive range such as 0-6, or a list such as 0,2,4")
    s.add_argument("--probes", type=int, default=64)
    s.set_defaults(run=cmd_sweep)

    v = sub.add_parser("verify", parents=[common], help="re-check certificate files")
    v.add_argument("certs", nargs="+", help="certificate JSON files")
    v.set_defaults(run=cmd_verify)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    a = parser.parse_args(argv)
    if a.command not in ("gen", "sweep") and not a.instance:
        parser.error("--instance is required")
    try:
        return a.run(a)
    except (DyadicError, ValueError, KeyError, OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
