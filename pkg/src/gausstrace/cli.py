"""Command-line driver: campaigns, one-off checks, scans and PDE solves.

Every subcommand except ``list-catalog`` builds one or more jobs (see
:mod:`gausstrace.config`) and runs them through the same executor, so a
``check`` on the command line produces exactly the report a campaign job
with the same keys would.

Exit status: 0 when every job completed and no report falsified its
inequality, 1 on a falsification (the "tripwire") or a failed job,
2 on a configuration error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from datetime import datetime, timezone
from importlib import resources
from pathlib import Path

import numpy as np

from . import verify, weighted_pde as wp
from .config import (CHECKED, SOLVE_PROBLEMS, SPECTRUM_PROBLEMS, Campaign, ConfigError, Job,
                     _validate_job, load_campaign)
from .domains import make_domain
from .rearrange import rearrangement
from .testbed import catalog, constant_field, entry

__all__ = ["main", "execute", "run_campaign", "JobResult", "bundled_suite"]

EXIT_OK, EXIT_FAIL, EXIT_CONFIG = 0, 1, 2
_DEFAULT_DOMAIN = "kind=halfline omega=0.0"


def bundled_suite() -> Path:
    """Path of the bundled campaign reproducing the sharpness and spectral results."""
    return Path(str(resources.files("gausstrace") / "data" / "reference_suite.cfg"))


def dumps(obj) -> str:
    """Deterministic JSON text (sorted keys, fixed indentation)."""
    return json.dumps(verify.to_jsonable(obj), indent=2, sort_keys=True) + "\n"


def _table(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])
    return buf.getvalue()


def _mesh_table(mesh: wp.WeightedMesh, values: dict) -> str:
    header = [f"x{k + 1}" for k in range(mesh.dim)] + list(values)
    cols = [mesh.nodes[:, k] for k in range(mesh.dim)] + [np.asarray(v) for v in values.values()]
    return _table(header, zip(*cols))


# --------------------------------------------------------------------------
# job execution
# --------------------------------------------------------------------------


@dataclass
class JobResult:
    id: str
    type: str
    verdict: str
    constant: float | None
    report: dict
    tables: dict = field(default_factory=dict)
    runtime: float = 0.0
    failed: bool = False

    @property
    def tripwire(self) -> bool:
        return self.type == "check" and self.verdict == "Diverges"


def _field(name: str):
    if name == "zero":
        return constant_field(0.0), make_domain(_DEFAULT_DOMAIN)
    e = entry(name)
    return e.field, e.domain


def _f(job: Job, key, default=None):
    v = job.get(key)
    return default if v is None else float(v)


def _flag(job: Job, key) -> bool:
    return str(job.get(key, "false")).lower() in ("1", "true", "yes", "on")


def _check(job: Job, levels: int):
    ineq = job.get("inequality")
    u, d = _field(job.get("field"))
    if job.get("domain") is not None:
        d = make_domain(job.get("domain"))
    p = _f(job, "p", 2.0)
    levels = int(_f(job, "levels", levels))
    if ineq == "Gross":
        dom = make_domain(job.get("domain")) if job.get("domain") else None
        rep = verify.check_gross(u, p, dom, tol=_f(job, "tol", verify.GROSS_TOL))
    elif ineq == "EmbedP":
        rep = verify.check_embedding_p(u, d, p, levels=levels)
    elif ineq == "EmbedInf":
        rep = verify.check_embedding_inf(u, d, levels=levels)
    elif ineq == "TraceLogP":
        rep = verify.check_trace_logp(u, d, p)
    elif ineq == "TraceExp":
        rep = verify.check_trace_exp(u, d, _f(job, "lambda", 0.5))
    elif ineq == "PoincareWirtinger":
        rep = verify.check_poincare_wirtinger(u, d, p)
    elif ineq == "TraceL2":
        rep = verify.check_trace_l2(u, d, p)
    else:
        rep = verify.check_poincare_trace(u, d, p)
    return rep.verdict, rep.fitted_C, rep.to_dict(), {}


def _scan(job: Job, levels: int, workers: int):
    grid = job.get("grid")
    grid = [float(v) for v in grid.split(",")] if grid else None
    sc = verify.sharpness_scan(job.get("inequality"), grid, p=_f(job, "p", 2.0),
                               delta=_f(job, "delta", 0.5), lam=_f(job, "lambda", 0.5),
                               levels=int(_f(job, "levels", levels)), workers=workers)
    names = sorted(sc.terms)
    rows = [[x, v] + [sc.terms[n]["verdicts"][i] for n in names]
            for i, (x, v) in enumerate(zip(sc.grid, sc.verdicts))]
    table = _table([sc.exponent, "verdict"] + names, rows)
    crit = "none" if sc.critical is None else f"{sc.critical:g}"
    return f"critical={crit}", sc.critical, sc.to_dict(), {"scan": table}


def _solve(job: Job):
    mesh = wp.assemble(make_domain(job.get("domain")), _f(job, "h"))
    f, _ = _field(job.get("field"))
    fq = f.value
    if _flag(job, "center"):
        mean = mesh.integrate(f.value) / mesh.mass.sum()
        fq = lambda x, _v=f.value: _v(x) - mean  # noqa: E731
    eps = _f(job, "tol")
    if job.get("problem") == "neumann":
        sol = wp.solve_neumann(mesh, fq, eps=eps)
    else:
        g = _field(job.get("g", "zero"))[0].value
        sol = wp.solve_nonhomogeneous_neumann(mesh, fq, g, eps=eps)
    base = {"problem": job.get("problem"), "domain": mesh.domain.spec(), "h": mesh.h,
            "unknowns": mesh.size, "solvable": sol.solvable, "defect": sol.defect}
    if not sol.solvable:
        return "Incompatible", None, {**base, "eps": sol.eps}, {}
    u = sol.u
    base.update(mean=sol.mean, residual=sol.residual, multiplier=sol.multiplier,
                l2_norm=math.sqrt(mesh.lp_power(u, 2.0)), energy=mesh.energy(u),
                u_min=float(u.min()), u_max=float(u.max()))
    return "Solved", None, base, {"solution": _mesh_table(mesh, {"u": u})}


def _spectrum(job: Job):
    mesh = wp.assemble(make_domain(job.get("domain")), _f(job, "h"))
    problem = job.get("problem")
    k = int(_f(job, "k", 4))
    if problem in ("oscillator", "steklov"):
        if problem == "oscillator":
            sol = wp.oscillator_spectrum(mesh, k, job.get("weighting", "MassGamma"))
            oracle = wp.oscillator_rayleigh(mesh, sol.weighting)
        else:
            sol = wp.steklov_spectrum(mesh, k)
            oracle = wp.steklov_rayleigh(mesh)
        lam2 = float(sol.eigenvalues[1])
        rep = {**sol.to_dict(), "unknowns": mesh.size, "rayleigh_lambda2": oracle.value,
               "rayleigh_converged": oracle.converged,
               "rayleigh_rel_diff": abs(oracle.value - lam2) / abs(lam2)}
        vecs = {f"v{i + 1}": sol.eigenvectors[:, i] for i in range(sol.eigenvectors.shape[1])}
        return "Solved", lam2, rep, {"modes": _mesh_table(mesh, vecs)}
    if problem == "trace":
        tc = wp.best_trace_constant(mesh)
        rep = {"problem": problem, "domain": mesh.domain.spec(), "h": mesh.h,
               "unknowns": mesh.size, "mu": tc.mu, "constant": tc.constant,
               "residual": tc.residual, "constant_ratio": tc.constant_ratio,
               "rayleigh_mu": tc.oracle}
        return "Solved", tc.constant, rep, {"extremal": _mesh_table(mesh, {"v": tc.vector})}
    pc = wp.poincare_constant(mesh, _f(job, "p", 2.0), job.get("subspace", "mean"))
    rep = {"problem": problem, "domain": mesh.domain.spec(), "h": mesh.h, "unknowns": mesh.size,
           "constant": pc.constant, "p": pc.p, "subspace": pc.subspace, "exact": pc.exact,
           "converged": pc.converged, "iterations": pc.iterations, "message": pc.message}
    verdict = "Solved" if pc.converged else "Unconverged"
    return verdict, pc.constant, rep, {}


def _profile(job: Job, levels: int):
    u, d = _field(job.get("field"))
    if job.get("domain") is not None:
        d = make_domain(job.get("domain"))
    prof = rearrangement(u, int(_f(job, "levels", levels)), d)
    rep = {"field": u.name, "domain": d.spec(), "gamma": prof.gamma, "meta": prof.meta,
           "analytic_deviation": prof.deviation, "points": len(prof.s),
           "u_star_max": float(prof.values[-1]), "u_star_at_gamma": float(prof.values[0])}
    return "Computed", None, rep, {"profile": prof.to_csv()}


def execute(job: Job, levels: int = 4000, workers: int = 1) -> JobResult:
    """Run one job; exceptions become a failed result rather than propagating."""
    t0 = time.perf_counter()
    try:
        if job.type == "check":
            out = _check(job, levels)
        elif job.type == "scan":
            out = _scan(job, levels, workers)
        elif job.type == "solve":
            out = _solve(job)
        elif job.type == "spectrum":
            out = _spectrum(job)
        else:
            out = _profile(job, levels)
        verdict, const, rep, tables = out
        failed = False
    except Exception as exc:  # reported per job, never fatal to the campaign
        verdict, const, rep, tables = "Failed", None, {"error": f"{type(exc).__name__}: {exc}"}, {}
        failed = True
    return JobResult(job.id, job.type, verdict, const, rep, tables,
                     time.perf_counter() - t0, failed)


# --------------------------------------------------------------------------
# campaigns
# --------------------------------------------------------------------------


def _document(job: Job, res: JobResult, timestamps: bool) -> dict:
    doc = {"job": job.id, "type": job.type, "config": dict(job.params), "verdict": res.verdict,
           "constant": res.constant, "result": res.report,
           "tables": sorted(f"{job.id}_{name}.csv" for name in res.tables)}
    if timestamps:
        doc["runtime_s"] = res.runtime
        doc["generated"] = datetime.now(timezone.utc).isoformat(timespec="seconds")
    return doc


def _fmt_const(v):
    if v is None:
        return "-"
    return "inf" if isinstance(v, float) and math.isinf(v) else f"{v:.6g}"


def summary_table(results: list[JobResult], timestamps: bool = True) -> str:
    rows = [("job", "type", "verdict", "fitted C", "runtime")]
    for r in results:
        rows.append((r.id, r.type, r.verdict, _fmt_const(r.constant),
                     f"{r.runtime:.2f}s" if timestamps else "-"))
    widths = [max(len(row[i]) for row in rows) for i in range(5)]
    return "\n".join("  ".join(c.ljust(w) for c, w in zip(row, widths)).rstrip()
                     for row in rows) + "\n"


def run_campaign(camp: Campaign, out: str | Path | None = None, *, timestamps: bool = True,
                 workers: int | None = None, stream=None) -> int:
    """Run every job of a campaign, write reports and return the exit status."""
    stream = stream or sys.stdout
    out = Path(out or camp.out)
    out.mkdir(parents=True, exist_ok=True)
    workers = max(1, workers or camp.workers)
    jobs = camp.jobs
    if workers > 1 and len(jobs) > 1:
        with ThreadPoolExecutor(max_workers=workers) as ex:
            results = list(ex.map(lambda j: execute(j, camp.levels), jobs))
    else:
        results = [execute(j, camp.levels, workers) for j in jobs]
    # writing is serialised and follows config order, whatever the completion order
    offending = []
    for job, res in zip(jobs, results):
        path = out / f"{job.id}.json"
        path.write_text(dumps(_document(job, res, timestamps)))
        for name, text in res.tables.items():
            (out / f"{job.id}_{name}.csv").write_text(text)
        if res.tripwire or res.failed:
            offending.append((res, path))
    summary = {"campaign": str(camp.source), "jobs": [
        {"job": r.id, "type": r.type, "verdict": r.verdict, "constant": r.constant,
         **({"runtime_s": r.runtime} if timestamps else {})} for r in results],
        "tripwire": any(r.tripwire for r in results),
        "failed": [r.id for r in results if r.failed]}
    (out / "summary.json").write_text(dumps(summary))
    stream.write(summary_table(results, timestamps))
    for res, path in offending:
        kind = "tripwire" if res.tripwire else "failed"
        print(f"{kind}: job {res.id!r} -> {path}", file=sys.stderr)
    return EXIT_FAIL if offending else EXIT_OK


# --------------------------------------------------------------------------
# argument parsing
# --------------------------------------------------------------------------


def _common(sp, *keys):
    opts = {
        "domain": dict(help="domain as 'kind=... key=value ...'"),
        "field": dict(help="catalog field name (or 'zero')"),
        "p": dict(help="integrability exponent"),
        "alpha": dict(help="single exponent to scan instead of the default grid"),
        "beta": dict(help="single log exponent to scan (TraceLogP)"),
        "lambda": dict(help="exponential parameter"),
        "h": dict(help="mesh width"),
        "levels": dict(help="rearrangement level count"),
        "tol": dict(help="tolerance (Gross slack or Neumann compatibility)"),
        "grid": dict(help="comma-separated exponent grid"),
        "delta": dict(help="family parameter"),
        "k": dict(help="number of eigenpairs"),
        "weighting": dict(help="oscillator mass: MassGamma or MassLebesgueWeighted"),
        "subspace": dict(help="Poincare subspace: mean or trace"),
        "g": dict(help="boundary datum field for the nonhomogeneous problem"),
    }
    for k in keys:
        sp.add_argument(f"--{k}", dest=k.replace("-", "_"), **opts[k])


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="gausstrace", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    def outputs(sp):
        sp.add_argument("--out", help="directory for reports")
        sp.add_argument("--json", action="store_true", help="print the JSON report")
        sp.add_argument("--no-timestamps", action="store_true",
                        help="omit runtimes and dates for byte-stable output")

    r = sub.add_parser("run", help="run a campaign file")
    r.add_argument("campaign", help="campaign file ('suite' for the bundled one)")
    r.add_argument("--workers", type=int)
    outputs(r)

    lc = sub.add_parser("list-catalog", help="list the function catalog")
    lc.add_argument("--family")
    lc.add_argument("--json", action="store_true")

    c = sub.add_parser("check", help="check one inequality on one field")
    c.add_argument("inequality", choices=CHECKED)
    _common(c, "field", "domain", "p", "lambda", "tol", "levels")
    outputs(c)

    s = sub.add_parser("scan", help="sharpness scan of an exponent")
    s.add_argument("inequality", choices=sorted(verify.DEFAULT_GRIDS))
    _common(s, "grid", "alpha", "beta", "p", "delta", "lambda", "levels")
    s.add_argument("--workers", type=int, default=1)
    outputs(s)

    so = sub.add_parser("solve", help="weighted Neumann problem")
    so.add_argument("problem", choices=SOLVE_PROBLEMS)
    _common(so, "domain", "h", "field", "g", "tol")
    so.add_argument("--center", action="store_true", help="subtract the gamma-mean of f")
    outputs(so)

    sp = sub.add_parser("spectrum", help="eigenvalue problems and variational constants")
    sp.add_argument("problem", choices=SPECTRUM_PROBLEMS)
    _common(sp, "domain", "h", "k", "weighting", "p", "subspace")
    outputs(sp)
    return ap


_PARAM_KEYS = ("field", "domain", "p", "lambda", "tol", "levels", "grid", "delta", "h", "k",
               "weighting", "subspace", "g")


def _job_from_args(args) -> Job:
    params = {"id": args.command, "type": args.command}
    if args.command in ("check", "scan"):
        params["inequality"] = args.inequality
    else:
        params["problem"] = args.problem
    for key in _PARAM_KEYS:
        v = getattr(args, key, None)
        if v is not None:
            params[key] = str(v)
    single = getattr(args, "alpha", None) or getattr(args, "beta", None)
    if single is not None:
        params["grid"] = str(single)
    if getattr(args, "center", False):
        params["center"] = "true"
    if args.command == "solve":
        params.setdefault("field", "zero")
    return _validate_job(params, 0, "<command line>")


def _single(args) -> int:
    job = _job_from_args(args)
    res = execute(job, int(getattr(args, "levels", None) or 4000), getattr(args, "workers", 1) or 1)
    doc = _document(job, res, not args.no_timestamps)
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / f"{job.id}.json").write_text(dumps(doc))
        for name, text in res.tables.items():
            (out / f"{job.id}_{name}.csv").write_text(text)
    if args.json:
        sys.stdout.write(dumps(doc))
    else:
        sys.stdout.write(summary_table([res], not args.no_timestamps))
        if res.failed:
            print(res.report["error"], file=sys.stderr)
    return EXIT_FAIL if res.failed or res.tripwire else EXIT_OK


def _list_catalog(args) -> int:
    entries = catalog(args.family)
    if args.json:
        sys.stdout.write(dumps([e.to_dict() for e in entries]))
        return EXIT_OK
    rows = [("name", "family", "domain", "memberships", "source")]
    for e in entries:
        claims = "; ".join(c.describe() for c in e.claims)
        sources = "; ".join(sorted({c.source for c in e.claims}))
        rows.append((e.name, e.family, e.domain_spec, claims, sources))
    widths = [max(len(r[i]) for r in rows) for i in range(4)]
    for r in rows:
        print("  ".join(c.ljust(w) for c, w in zip(r[:4], widths)) + "  " + r[4])
    return EXIT_OK


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "list-catalog":
            return _list_catalog(args)
        if args.command == "run":
            path = bundled_suite() if args.campaign == "suite" else args.campaign
            camp = load_campaign(path)
            return run_campaign(camp, args.out, timestamps=not args.no_timestamps,
                                workers=args.workers)
        return _single(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
