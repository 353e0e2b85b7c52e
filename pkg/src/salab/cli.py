"""Command-line harness: ``salab <command> [--config cfg.json] [flags]``.

Every command reads its parameters from an optional JSON config file and
from flags; a flag given on the command line wins over the file.  The merged
parameters are validated against the command's JSON schema (unknown keys
are rejected), and a schema violation exits with status 2.  A failed
verification or property check exits with status 1.

Machine-readable results go to stdout or ``--out``; progress messages go to
the log file named by ``--log-file``.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path
from typing import Any, Callable

import jsonschema
import numpy as np

from . import data_path
from .clique_formula import PolynomialSystem, build_clique_formula
from .graph_core import BlockGraph, Rectangle, sample_block_model
from .lp_duality import (MonomialIndex, build_dual, build_primal, check_pseudo_measure,
                         export_lp, extract_solutions, result_bundle, solve_exact, write_bundle)
from .measure import MeasureParams, mu_d, split_main_boundary
from .pattern_cores import counting_audit, core_of, enumerate_patterns, vc_number, write_audit_csv
from .rational import fmt_q, parse_q
from .sa_proof import Refutation, size_report, verify_canonical, verify_truth_table
from .validate import run_suite
from .wellbehaved import (TailProbe, WellBehavedSpec, check_char_bounds,
                          check_common_neighborhoods, check_error_sets, decompose_rectangle,
                          sample_rectangle, tail_probe, verify_part)

log = logging.getLogger("salab")

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2
REPORT_COLUMNS = ["property", "parameters", "value", "passed"]


class UsageError(Exception):
    """Raised for configuration problems; mapped to exit status 2."""


# option tables -----------------------------------------------------------------

@dataclass(frozen=True)
class Opt:
    name: str
    schema: dict
    help: str
    default: Any = None
    required: bool = False
    nargs: str | None = None

    @property
    def dest(self) -> str:
        return self.name.replace("-", "_")


RATIONAL = {"type": ["string", "integer"]}
INT = {"type": "integer"}
NUM = {"type": "number"}
STR = {"type": "string"}

COMMON = [
    Opt("seed", INT, "random seed", 0),
    Opt("out", STR, "output path"),
]

GRAPH_IN = Opt("graph", STR, "graph JSON file", required=True)
RECT_IN = Opt("rect", STR, "rectangle JSON file (default: the full product of all blocks)")
P_OPT = Opt("p", RATIONAL, "edge probability as a rational, e.g. 1/2")
D_OPT = Opt("D", NUM, "clique parameter; sets p = n^(-2/D) in binary64 mode")

COMMANDS: dict[str, tuple[str, list[Opt]]] = {
    "gen-graph": ("sample a block random graph", [
        Opt("n", INT, "vertices per block", required=True),
        Opt("k", INT, "number of blocks", required=True),
        P_OPT, D_OPT]),
    "build-formula": ("write the clique polynomial system of a graph", [GRAPH_IN]),
    "verify": ("check a refutation against a formula", [
        Opt("formula", STR, "formula JSON (default: bundled k=2, n=1 instance)"),
        Opt("proof", STR, "certificate JSON (default: bundled k=2, n=1 certificate)"),
        Opt("method", {"enum": ["canonical", "truth-table", "both"]}, "verifier", "both")]),
    "lp-solve": ("minimum-coefficient refutation by exact LP", [
        Opt("formula", STR, "formula JSON (default: bundled k=2, n=1 instance)"),
        Opt("form", {"enum": ["primal", "dual"]}, "which LP to build", "primal"),
        Opt("max-degree", INT, "degree cap on multiplier monomials"),
        Opt("export-lp", STR, "also write the LP in CPLEX LP format")]),
    "enumerate-cores": ("list pattern graphs or core fixed points", [
        Opt("k", INT, "labels", required=True),
        Opt("d", INT, "cover-number bound", required=True),
        Opt("mode", {"enum": ["all_Hd", "cores_only"]}, "family", "cores_only"),
        Opt("audit", STR, "also write the counting audit CSV here")]),
    "eval-measure": ("truncated measure of a rectangle, or a seed sweep of mu_d(1)", [
        Opt("graph", STR, "graph JSON file (omit to sample one graph per seed)"),
        RECT_IN,
        Opt("n", INT, "vertices per block when sampling"),
        Opt("k", INT, "blocks when sampling"),
        Opt("d", INT, "truncation", required=True),
        P_OPT, D_OPT,
        Opt("seeds", INT, "number of seeds for a sweep", 1),
        Opt("strategy", {"enum": ["naive", "factorized", "grouped"]}, "evaluator", "grouped")]),
    "split-sum": ("main and boundary terms of the split", [
        GRAPH_IN, RECT_IN,
        Opt("ell", INT, "number of singleton blocks", required=True),
        Opt("d", INT, "truncation", required=True),
        P_OPT,
        Opt("R", {"type": "array", "items": INT}, "singleton blocks (default 0..ell-1)",
            nargs="*")]),
    "decompose": ("partition a rectangle into small, axiom and good pieces", [
        GRAPH_IN, RECT_IN,
        Opt("s", NUM, "block-size scale", required=True),
        Opt("d", INT, "truncation", required=True),
        P_OPT,
        Opt("C", NUM, "regime constant", 324)]),
    "check-wellbehaved": ("check one pseudorandomness property", [
        GRAPH_IN,
        Opt("property", {"enum": ["p1", "p2", "p3", "p4"]}, "property", required=True),
        Opt("spec", STR, "well-behaved spec JSON"),
        P_OPT,
        Opt("d-cap", INT, "tuple size cap for p1, error-set level for p2", 1),
        Opt("samples", INT, "sampled rectangles for p2 and p4", 4)]),
    "tail-probe": ("Monte Carlo tail of a weighted single-edge character sum", [
        Opt("n", INT, "vertices per block", 20),
        P_OPT,
        Opt("m", INT, "even moment", 2),
        Opt("trials", INT, "Monte Carlo trials", 10000),
        Opt("s-grid", {"type": "array", "items": NUM}, "thresholds",
            [10, 20, 40, 60, 80, 120, 200, 400], nargs="+")]),
    "validate": ("run an invariant suite", [
        Opt("suite", {"enum": ["cores", "duality", "measure", "all"]}, "suite", "all"),
        Opt("k", INT, "labels for the cores suite", 4),
        Opt("count", INT, "instances for randomized suites")]),
    "report": ("aggregate report CSVs by property and parameters", [
        Opt("inputs", {"type": "array", "items": STR}, "CSV files", [], nargs="*")]),
}


def command_schema(command: str) -> dict:
    _, opts = COMMANDS[command]
    props = {o.dest: o.schema for o in opts + COMMON}
    props.update({"jobs": INT, "log_file": STR})
    return {"type": "object", "properties": props, "additionalProperties": False,
            "required": [o.dest for o in opts if o.required]}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="salab", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name, (help_text, opts) in COMMANDS.items():
        sp = sub.add_parser(name, help=help_text)
        sp.add_argument("--config", help="JSON config file")
        sp.add_argument("--jobs", type=int, default=None, help="worker processes")
        sp.add_argument("--log-file", dest="log_file", default=None, help="progress log")
        for o in opts + COMMON:
            kwargs: dict[str, Any] = {"dest": o.dest, "default": None, "help": o.help}
            if o.nargs:
                kwargs["nargs"] = o.nargs
            typ = o.schema.get("type")
            item = o.schema.get("items", {}).get("type")
            if typ == "integer" or item == "integer":
                kwargs["type"] = int
            elif typ == "number" or item == "number":
                kwargs["type"] = float
            sp.add_argument("--" + o.name, **kwargs)
    return parser


def merge_config(command: str, args: argparse.Namespace) -> dict:
    cfg: dict[str, Any] = {}
    if args.config:
        try:
            with open(args.config) as fh:
                cfg = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"cannot read config: {exc}") from exc
        if not isinstance(cfg, dict):
            raise UsageError("config must be a JSON object")
        cfg = {key.replace("-", "_"): val for key, val in cfg.items()}
    _, opts = COMMANDS[command]
    for o in opts + COMMON:
        val = getattr(args, o.dest)
        if val is not None:
            cfg[o.dest] = val
    for key in ("jobs", "log_file"):
        if getattr(args, key) is not None:
            cfg[key] = getattr(args, key)
    try:
        jsonschema.validate(cfg, command_schema(command))
    except jsonschema.ValidationError as exc:
        raise UsageError(f"config error: {exc.message}") from exc
    for o in opts + COMMON:
        cfg.setdefault(o.dest, o.default)
    cfg.setdefault("jobs", 1)
    return cfg


# helpers ----------------------------------------------------------------------

def _p_of(cfg, n: int | None = None):
    if cfg.get("p") is not None and cfg.get("D") is not None:
        raise UsageError("give either p or D, not both")
    if cfg.get("p") is not None:
        try:
            p = parse_q(str(cfg["p"]))
        except (ValueError, ZeroDivisionError) as exc:
            raise UsageError(f"bad p: {cfg['p']!r}") from exc
        if not 0 < p <= 1:
            raise UsageError("p must lie in (0, 1]")
        return p
    if cfg.get("D") is not None:
        if n is None:
            raise UsageError("D needs n")
        return float(n) ** (-2.0 / cfg["D"])
    raise UsageError("one of p or D is required")


def _rect(cfg, G: BlockGraph) -> Rectangle:
    if cfg.get("rect"):
        with open(cfg["rect"]) as fh:
            return Rectangle.from_json(json.load(fh))
    return Rectangle.full(G.k, G.n)


def _emit(cfg, payload: dict) -> None:
    text = json.dumps(payload, indent=1, sort_keys=True)
    if cfg.get("out"):
        Path(cfg["out"]).write_text(text + "\n")
    print(text)


def _value_text(v) -> str:
    return fmt_q(v) if isinstance(v, Fraction) else repr(float(v))


def _params_text(params: dict) -> str:
    return json.dumps(params, sort_keys=True, separators=(",", ":"))


def _write_report(path, rows: list[dict]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=REPORT_COLUMNS)
        w.writeheader()
        for row in rows:
            w.writerow(row)


def _map(cfg, fn: Callable, items: list):
    """Map in seed order, across processes when --jobs > 1."""
    if cfg.get("jobs", 1) > 1 and len(items) > 1:
        with ProcessPoolExecutor(max_workers=cfg["jobs"]) as pool:
            return list(pool.map(fn, items))
    return [fn(x) for x in items]


# commands ---------------------------------------------------------------------

def cmd_gen_graph(cfg) -> int:
    p = _p_of(cfg, cfg["n"])
    G = sample_block_model(cfg["n"], cfg["k"], p, cfg["seed"])
    obj = G.to_json()
    if cfg.get("out"):
        G.save(cfg["out"])
    else:
        print(json.dumps(obj))
    log.info("sampled graph n=%d k=%d with %d edges", G.n, G.k, G.edge_count)
    return EXIT_OK


def cmd_build_formula(cfg) -> int:
    P = build_clique_formula(BlockGraph.load(cfg["graph"]))
    if cfg.get("out"):
        P.save(cfg["out"])
    else:
        print(json.dumps(P.to_json()))
    return EXIT_OK


def _formula(cfg) -> PolynomialSystem:
    return PolynomialSystem.load(cfg.get("formula") or data_path("k2n1_formula.json"))


def cmd_verify(cfg) -> int:
    P = _formula(cfg)
    pi = Refutation.load(cfg.get("proof") or data_path("k2n1_certificate.json"), len(P.axioms))
    verdicts = {}
    if cfg["method"] in ("canonical", "both"):
        verdicts["canonical"] = verify_canonical(P, pi)
    if cfg["method"] in ("truth-table", "both"):
        verdicts["truth_table"] = verify_truth_table(P, pi)
    accepted = all(verdicts.values())
    _emit(cfg, {"accepted": accepted, "verifiers": verdicts,
                "size": size_report(pi, P).to_json()})
    return EXIT_OK if accepted else EXIT_FAIL


def cmd_lp_solve(cfg) -> int:
    P = _formula(cfg)
    idx = MonomialIndex.build(P.num_vars, cfg.get("max_degree"))
    lp = build_primal(P, idx) if cfg["form"] == "primal" else build_dual(P, idx)
    if cfg.get("export_lp"):
        export_lp(lp, cfg["export_lp"])
    res = solve_exact(lp)
    log.info("%s LP: %s after %d iterations", lp.kind, res.status, res.iterations)
    if res.status != "optimal":
        print(res.status)
        return EXIT_FAIL
    pi, mu = extract_solutions(lp, res, P, idx)
    ok = verify_canonical(P, pi) and check_pseudo_measure(mu, P, mu.delta, idx).passed
    if cfg.get("out"):
        write_bundle(cfg["out"], result_bundle(res, pi, mu))
    print(fmt_q(res.optimum))
    return EXIT_OK if ok else EXIT_FAIL


def cmd_enumerate_cores(cfg) -> int:
    k, d = cfg["k"], cfg["d"]
    fam = enumerate_patterns(k, d, cfg["mode"])
    rows = []
    for H in fam:
        info = core_of(H)
        rows.append({"edges": [list(e) for e in H.edges], "vc": vc_number(H),
                     "estar": sorted(list(e) for e in info.Estar) if info.F == H else None})
    if cfg.get("audit"):
        write_audit_csv(counting_audit(k), cfg["audit"])
    _emit(cfg, {"k": k, "d": d, "mode": cfg["mode"], "count": len(fam), "graphs": rows})
    return EXIT_OK


def _sweep_one(job):
    n, k, p, d, strategy, seed = job
    G = sample_block_model(n, k, p, seed)
    return seed, mu_d(G, Rectangle.full(k, n), MeasureParams(d, p), strategy)


def cmd_eval_measure(cfg) -> int:
    d, strategy = cfg["d"], cfg["strategy"]
    if cfg.get("graph"):
        G = BlockGraph.load(cfg["graph"])
        p = _p_of(cfg, G.n)
        Q = _rect(cfg, G)
        value = mu_d(G, Q, MeasureParams(d, p), strategy)
        mode = "exact" if isinstance(value, Fraction) else "binary64"
        _emit(cfg, {"value": _value_text(value), "mode": mode, "d": d, "p": _value_text(p),
                    "cardinality": Q.cardinality()})
        return EXIT_OK
    n, k = cfg.get("n"), cfg.get("k")
    if n is None or k is None:
        raise UsageError("a sweep needs n and k (or give --graph)")
    p = _p_of(cfg, n)
    seeds = list(range(cfg["seed"], cfg["seed"] + cfg["seeds"]))
    results = _map(cfg, _sweep_one, [(n, k, p, d, strategy, s) for s in seeds])
    rows = []
    params = _params_text({"n": n, "k": k, "d": d, "p": _value_text(p)})
    for seed, value in results:
        log.info("seed %d: mu_d(1) = %s", seed, _value_text(value))
        rows.append({"property": "mu_d(1)", "parameters": params,
                     "value": _value_text(value), "passed": ""})
    if cfg.get("out"):
        _write_report(cfg["out"], rows)
    w = csv.DictWriter(sys.stdout, fieldnames=REPORT_COLUMNS)
    w.writeheader()
    w.writerows(rows)
    return EXIT_OK


def cmd_split_sum(cfg) -> int:
    G = BlockGraph.load(cfg["graph"])
    p = _p_of(cfg, G.n)
    Q = _rect(cfg, G)
    try:
        res = split_main_boundary(G, Q, cfg["ell"], MeasureParams(cfg["d"], p), R=cfg.get("R"))
    except ValueError as exc:
        print(json.dumps({"error": str(exc)}))
        return EXIT_FAIL
    ok = res.check()
    _emit(cfg, {"main": _value_text(res.main), "total": _value_text(res.total),
                "order": res.order, "identity_holds": ok,
                "boundary": [{"i": i, "j": j, "value": _value_text(v), "family_size": c}
                             for i, j, v, c in res.boundary]})
    return EXIT_OK if ok else EXIT_FAIL


def cmd_decompose(cfg) -> int:
    G = BlockGraph.load(cfg["graph"])
    p = _p_of(cfg, G.n)
    Q = _rect(cfg, G)
    s, d = cfg["s"], cfg["d"]
    dec = decompose_rectangle(G, Q, s, p, d, C=cfg["C"])
    beta = Fraction(1, G.k) if isinstance(p, Fraction) else 1.0 / G.k
    verified = all(verify_part(G, part, s, p, d, beta) for part in dec.parts)
    exact_cover = dec.cardinality() == Q.cardinality()
    labels: dict[str, int] = {}
    for part in dec.parts:
        labels[part.label] = labels.get(part.label, 0) + 1
    _emit(cfg, {"parts": len(dec.parts), "labels": labels, "size_bound": dec.size_bound,
                "within_bound": dec.within_bound, "regime_ok": dec.regime_ok,
                "labels_verified": verified, "cardinality_matches": exact_cover,
                "pieces": [{"label": part.label, "rect": part.rect.to_json(),
                            "detail": {k: (list(v) if isinstance(v, tuple) else v)
                                       for k, v in part.detail.items()}}
                           for part in dec.parts]})
    return EXIT_OK if verified and exact_cover else EXIT_FAIL


def cmd_check_wellbehaved(cfg) -> int:
    G = BlockGraph.load(cfg["graph"])
    p = _p_of(cfg, G.n) if (cfg.get("p") or cfg.get("D")) else G.p_meta
    if p is None:
        raise UsageError("p is neither given nor recorded in the graph file")
    k, n = G.k, G.n
    ell = cfg["d_cap"]
    if cfg.get("spec"):
        with open(cfg["spec"]) as fh:
            try:
                spec = WellBehavedSpec.from_json(json.load(fh))
            except (TypeError, ValueError) as exc:
                raise UsageError(f"bad spec: {exc}") from exc
    else:
        spec = WellBehavedSpec.for_graph(k, n, p, ell)
    rng = np.random.default_rng(cfg["seed"])
    prop = cfg["property"]
    params = {"n": n, "k": k, "p": _value_text(p), "d_cap": ell}
    if prop == "p1":
        rep = check_common_neighborhoods(G, spec.beta, p, ell)
        value, passed, details = rep.worst_slack, rep.passed, rep.to_json()
    elif prop == "p2":
        rects = [sample_rectangle(G, rng, min(n, math.ceil(2 * spec.s)), n)
                 for _ in range(cfg["samples"])]
        rep = check_error_sets(G, spec, rects, p, ell)
        value, passed, details = rep.worst_slack, rep.passed, rep.to_json()
    elif prop == "p3":
        Q = Rectangle.full(k, n)
        reports = [check_char_bounds(G, F, Q, p, "general", lam=spec.lam)
                   for F in enumerate_patterns(k, ell, "cores_only")]
        value = min(r.worst_slack for r in reports)
        passed = all(r.passed for r in reports)
        details = {"cores": [r.to_json() for r in reports]}
    else:
        reports = []
        lo, hi = int(spec.Lambda) + 1, int(4 * spec.Lambda)
        if lo > n:
            raise UsageError(f"Lambda = {spec.Lambda:g} leaves no admissible block size for n = {n}")
        for _ in range(cfg["samples"]):
            Q = sample_rectangle(G, rng, lo, min(hi, n))
            for F in enumerate_patterns(k, ell, "cores_only"):
                try:
                    reports.append(check_char_bounds(G, F, Q, p, "tight", Lambda=spec.Lambda,
                                                     B=range(k), tight_constant=spec.tight_constant))
                except ValueError as exc:
                    log.info("tight check skipped: %s", exc)
        value = min((r.worst_slack for r in reports), default=math.inf)
        passed = all(r.passed for r in reports)
        details = {"checked": len(reports), "cores": [r.to_json() for r in reports]}
    row = {"property": prop, "parameters": _params_text(params), "value": repr(float(value)),
           "passed": passed}
    if cfg.get("out"):
        _write_report(cfg["out"], [row])
    print(json.dumps({**row, "details": details}, sort_keys=True, default=str))
    return EXIT_OK if passed else EXIT_FAIL


def cmd_tail_probe(cfg) -> int:
    from .pattern_cores import PatternGraph
    n = cfg["n"]
    p = float(_p_of(cfg, n)) if cfg.get("p") is not None else 0.5
    Q = Rectangle.full(2, n)
    probe = TailProbe(PatternGraph.from_edges(2, [(0, 1)]), [(0, 1)], Q, cfg["m"], 1.0,
                      np.ones((n, n)))
    rep = tail_probe(probe, p, cfg["s_grid"], cfg["trials"], seed=cfg["seed"])
    rows = [{"property": "tail", "parameters": _params_text({"n": n, "p": p, "m": cfg["m"], "s": r.s}),
             "value": repr(r.empirical), "passed": r.passed} for r in rep.rows]
    if cfg.get("out"):
        _write_report(cfg["out"], rows)
    for r in rep.rows:
        print(f"s={r.s:g} empirical={r.empirical:.5f} bound={r.bound:.5g} "
              f"stderr={r.stderr:.5f} {'PASS' if r.passed else 'FAIL'}")
    return EXIT_OK if rep.passed else EXIT_FAIL


def cmd_validate(cfg) -> int:
    checks = run_suite(cfg["suite"], k=cfg["k"], count=cfg.get("count"), seed=cfg["seed"])
    for c in checks:
        print(f"{'PASS' if c.passed else 'FAIL'} {c.name} {c.detail}")
        log.info("%s %s", c.name, c.passed)
    return EXIT_OK if all(c.passed for c in checks) else EXIT_FAIL


def aggregate(rows: list[dict]) -> list[dict]:
    """Mean and standard error of ``value`` grouped by (property, parameters)."""
    groups: dict[tuple[str, str], list[float]] = {}
    for row in rows:
        missing = [c for c in ("property", "parameters", "value") if c not in row]
        if missing:
            raise UsageError(f"malformed row, missing {missing}")
        try:
            val = float(Fraction(row["value"]))
        except (ValueError, ZeroDivisionError) as exc:
            raise UsageError(f"malformed value {row['value']!r}") from exc
        groups.setdefault((row["property"], row["parameters"]), []).append(val)
    out = []
    for (prop, params), vals in sorted(groups.items()):
        mean = math.fsum(vals) / len(vals)
        if len(vals) > 1:
            var = math.fsum((v - mean) ** 2 for v in vals) / (len(vals) - 1)
            stderr = math.sqrt(var / len(vals))
        else:
            stderr = 0.0
        out.append({"property": prop, "parameters": params, "count": len(vals),
                    "mean": repr(mean), "stderr": repr(stderr)})
    return out


def cmd_report(cfg) -> int:
    rows = []
    for path in cfg["inputs"]:
        with open(path, newline="") as fh:
            rows.extend(csv.DictReader(fh))
    agg = aggregate(rows)
    fields = ["property", "parameters", "count", "mean", "stderr"]
    target = open(cfg["out"], "w", newline="") if cfg.get("out") else sys.stdout
    try:
        w = csv.DictWriter(target, fieldnames=fields)
        w.writeheader()
        w.writerows(agg)
    finally:
        if target is not sys.stdout:
            target.close()
    return EXIT_OK


HANDLERS = {
    "gen-graph": cmd_gen_graph,
    "build-formula": cmd_build_formula,
    "verify": cmd_verify,
    "lp-solve": cmd_lp_solve,
    "enumerate-cores": cmd_enumerate_cores,
    "eval-measure": cmd_eval_measure,
    "split-sum": cmd_split_sum,
    "decompose": cmd_decompose,
    "check-wellbehaved": cmd_check_wellbehaved,
    "tail-probe": cmd_tail_probe,
    "validate": cmd_validate,
    "report": cmd_report,
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = merge_config(args.command, args)
        if cfg.get("log_file"):
            logging.basicConfig(filename=cfg["log_file"], level=logging.INFO,
                                format="%(asctime)s %(name)s %(levelname)s %(message)s",
                                force=True)
        return HANDLERS[args.command](cfg)
    except UsageError as exc:
        print(f"salab: {exc}", file=sys.stderr)
        return EXIT_USAGE
