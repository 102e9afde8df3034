"""Command-line scenario runner.

Scenarios are JSON documents (schema tag "sfspec/1") that describe a
model, a path, and a list of flow estimators to run against the
combinatorial oracle.  Reports are JSON with deterministic layout: the
same scenario and seed produce byte-identical output (wall-clock timing
is only recorded when explicitly requested, for that reason).

Exit codes: 0 all estimators within tolerance, 1 at least one
discrepancy above tolerance, 2 malformed input.
"""
from __future__ import annotations

import argparse
import csv
import json
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .algebra import BlockOperator, SemifiniteModel
from .calculus import QuadratureSpec, eigendecompose
from .flow import (EstimatorResult, finitely_summable_constant,
                   normalization_constant_bounded,
                   normalization_constant_unbounded, sf_bounded_path,
                   sf_finitely_summable, sf_oracle, sf_unbounded)
from .generators import (dirac_circle, random_path, random_selfadjoint,
                         random_unitary)
from .jlo import (DoubledSystem, jlo_series_sf, sf_doubled_r_integral,
                  sf_superconnection_integral)
from .paths import PiecewisePath, conjugation_path, transform_path

SCHEMA = "sfspec/1"
DEFAULT_TOL = 1e-6


class ScenarioError(ValueError):
    pass


# ---------------------------------------------------------------------------
# (de)serialization
# ---------------------------------------------------------------------------

def _matrix_to_json(a: np.ndarray):
    """Row-major nested lists of [re, im] pairs."""
    return [[[float(x.real), float(x.imag)] for x in row] for row in np.asarray(a, dtype=complex)]

def _matrix_from_json(rows) -> np.ndarray:
    return np.array([[complex(p[0], p[1]) for p in row] for row in rows])


def _load_model(cfg) -> SemifiniteModel:
    try:
        return SemifiniteModel(tuple((int(d), float(w)) for d, w in cfg["blocks"]))
    except (KeyError, TypeError, ValueError) as exc:
        raise ScenarioError(f"bad model spec: {exc}") from exc


def _build_path(scn, model, rng):
    cfg = scn.get("path")
    if not isinstance(cfg, dict) or "kind" not in cfg:
        raise ScenarioError("scenario needs a path object with a 'kind'")
    kind = cfg["kind"]
    unitary = None
    if kind == "random_linear" or kind == "random_piecewise":
        nodes = int(cfg.get("nodes", 2))
        scale = float(cfg.get("scale", 1.0))
        path = random_path(model, rng, n_nodes=nodes, scale=scale)
    elif kind == "conjugation":
        D = random_selfadjoint(model, rng, float(cfg.get("scale", 1.0)))
        ucfg = cfg.get("unitary", {"kind": "random"})
        if ucfg.get("kind") == "random":
            unitary = random_unitary(model, rng)
        else:
            raise ScenarioError(f"unknown unitary kind {ucfg.get('kind')!r}")
        path = conjugation_path(D, unitary)
    elif kind == "dirac_circle":
        m = int(cfg.get("m", 4))
        model, D, unitary = dirac_circle(m)
        path = conjugation_path(D, unitary)
    elif kind == "explicit":
        try:
            nodes = tuple(
                BlockOperator(model, tuple(_matrix_from_json(b) for b in node))
                for node in cfg["nodes"])
        except (KeyError, TypeError, ValueError, IndexError) as exc:
            raise ScenarioError(f"bad explicit path: {exc}") from exc
        path = PiecewisePath(nodes)
    else:
        raise ScenarioError(f"unknown path kind {kind!r}")
    return path, model, unitary


def _quad_spec(scn) -> QuadratureSpec:
    cfg = scn.get("quadrature", {})
    return QuadratureSpec(
        abs_tol=float(cfg.get("abs_tol", 1e-10)),
        rel_tol=float(cfg.get("rel_tol", 1e-10)),
        max_subdivisions=int(cfg.get("max_subdivisions", 200)),
    )


# ---------------------------------------------------------------------------
# estimator dispatch
# ---------------------------------------------------------------------------

def _run_estimator(cfg, path, unitary, spec) -> EstimatorResult:
    name = cfg.get("name")
    if name == "unbounded_theta":
        return sf_unbounded(path, variant="theta", spec=spec)
    if name == "unbounded_eps":
        return sf_unbounded(path, variant="eps", eps=float(cfg.get("eps", 1.0)), spec=spec)
    if name == "unbounded_q":
        return sf_unbounded(path, variant="q", q=float(cfg.get("q", 1.0)), spec=spec)
    if name == "bounded_path":
        return sf_bounded_path(transform_path(path), r=float(cfg.get("r", 1.5)),
                               q=float(cfg.get("q", 1.0)), spec=spec)
    if name == "finitely_summable":
        return sf_finitely_summable(path, p=float(cfg.get("p", 3.0)), spec=spec)
    if name in ("jlo_series", "doubled_r_integral", "superconnection"):
        if unitary is None:
            raise ScenarioError(f"estimator {name!r} needs a conjugation path")
        sys_ = DoubledSystem(path.model, path.value(0.0), unitary)
        if name == "jlo_series":
            ser = jlo_series_sf(sys_, k_max=int(cfg.get("k_max", 16)),
                                tol=float(cfg.get("tol", 1e-8)))
            flags = () if ser.converged else ("series_not_converged",)
            return EstimatorResult("jlo_series", ser.value, ser.value, {}, 0.0, flags)
        if name == "doubled_r_integral":
            v = sf_doubled_r_integral(sys_, spec)
            return EstimatorResult("doubled_r_integral", v, v)
        v = sf_superconnection_integral(sys_, spec)
        return EstimatorResult("superconnection", v, v)
    raise ScenarioError(f"unknown estimator {name!r}")


def _integrand_samples(path, cfg, n: int = 201):
    """Uniform samples of the heat-weight flow integrand, for CSV export."""
    eps = float(cfg.get("eps", 1.0)) if cfg.get("name") != "unbounded_theta" else 1.0
    pref = np.sqrt(eps / np.pi)
    ts = np.linspace(0.0, 1.0, n)
    vals = []
    for t in ts:
        D = path.value(min(t, 1.0 - 1e-12))
        dD = path.derivative(min(t, 1.0 - 1e-12))
        eig = eigendecompose(D)
        G = eig.apply(lambda x: np.exp(-np.clip(eps * x * x, None, 700.0)))
        vals.append(pref * float(np.real(path.model.trace(dD @ G))))
    cum = np.concatenate([[0.0], np.cumsum(0.5 * (np.array(vals[1:]) + np.array(vals[:-1]))
                                           * np.diff(ts))])
    return ts, np.array(vals), cum


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def run_scenario(scn: dict, tol_override: float | None = None,
                 seed_override: int | None = None, timing: bool = False) -> dict:
    if scn.get("schema") != SCHEMA:
        raise ScenarioError(f"scenario schema must be {SCHEMA!r}")
    seed = seed_override if seed_override is not None else int(scn.get("seed", 0))
    tol = tol_override if tol_override is not None else float(scn.get("tol", DEFAULT_TOL))
    rng = np.random.default_rng(seed)
    model = _load_model(scn["model"]) if "model" in scn else None
    if model is None and scn.get("path", {}).get("kind") != "dirac_circle":
        raise ScenarioError("scenario needs a model")
    spec = _quad_spec(scn)
    t0 = time.perf_counter()
    path, model, unitary = _build_path(scn, model, rng)
    oracle = sf_oracle(path)
    results, all_pass = [], True
    for cfg in scn.get("estimators", []):
        res = _run_estimator(cfg, path, unitary, spec)
        disc = abs(res.value - oracle)
        ok = disc <= tol
        all_pass = all_pass and ok
        results.append({
            "name": res.name,
            "params": {k: v for k, v in cfg.items() if k != "name"},
            "value": res.value,
            "main_integral": res.main_integral,
            "corrections": res.corrections,
            "quad_error": res.quad_error,
            "discrepancy": disc,
            "pass": ok,
            "flags": list(res.flags),
        })
    report = {
        "schema": SCHEMA,
        "version": __version__,
        "seed": seed,
        "tol": tol,
        "scenario": scn,
        "oracle": oracle,
        "estimators": results,
        "pass": all_pass,
        "conventions": {"sign_at_zero": "+1", "sf": "tau(P_end) - tau(P_start)"},
    }
    if timing:
        report["elapsed_s"] = time.perf_counter() - t0
    return report


def _json_default(o):
    if isinstance(o, np.bool_):
        return bool(o)
    if isinstance(o, np.integer):
        return int(o)
    if isinstance(o, np.floating):
        return float(o)
    raise TypeError(f"not JSON serializable: {type(o)}")


def _dump(obj, out: str | None):
    text = json.dumps(obj, indent=2, sort_keys=True, default=_json_default) + "\n"
    if out:
        Path(out).parent.mkdir(parents=True, exist_ok=True)
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def _cmd_run(args) -> int:
    try:
        scn = json.loads(Path(args.scenario).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        print(f"error: cannot read scenario: {exc}", file=sys.stderr)
        return 2
    try:
        report = run_scenario(scn, args.tol, args.seed, args.timing)
    except ScenarioError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    _dump(report, args.out)
    if args.csv:
        est_cfgs = [c for c in scn.get("estimators", [])
                    if c.get("name", "").startswith("unbounded")]
        cfg = est_cfgs[0] if est_cfgs else {"name": "unbounded_theta"}
        rng = np.random.default_rng(report["seed"])
        model = _load_model(scn["model"]) if "model" in scn else None
        path, _, _ = _build_path(scn, model, rng)
        ts, vals, cum = _integrand_samples(path, cfg)
        Path(args.csv).parent.mkdir(parents=True, exist_ok=True)
        with open(args.csv, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "integrand", "cumulative"])
            for row in zip(ts, vals, cum):
                w.writerow([repr(float(x)) for x in row])
    return 0 if report["pass"] else 1


def _cmd_suite(args) -> int:
    files = sorted(Path(args.directory).glob("*.json"))
    if not files:
        print("error: no scenario files found", file=sys.stderr)
        return 2
    def one(f: Path):
        try:
            scn = json.loads(f.read_text())
            rep = run_scenario(scn, args.tol, args.seed, args.timing)
            return {"file": f.name, "pass": rep["pass"], "oracle": rep["oracle"],
                    "estimators": [{"name": e["name"], "discrepancy": e["discrepancy"],
                                    "pass": e["pass"]} for e in rep["estimators"]]}
        except (ScenarioError, json.JSONDecodeError, OSError) as exc:
            return {"file": f.name, "pass": False, "error": str(exc)}
    if args.threads > 1:
        with ThreadPoolExecutor(max_workers=args.threads) as pool:
            rows = list(pool.map(one, files))
    else:
        rows = [one(f) for f in files]
    bad_input = any("error" in r for r in rows)
    summary = {"schema": SCHEMA, "version": __version__,
               "results": rows, "pass": all(r["pass"] for r in rows)}
    _dump(summary, args.out)
    if bad_input:
        return 2
    return 0 if summary["pass"] else 1


def _cmd_constants(args) -> int:
    out = {
        "schema": SCHEMA,
        "C_1": normalization_constant_unbounded(1.0),
        "C_q": normalization_constant_unbounded(args.q),
        "C_r_q": normalization_constant_bounded(args.r, args.q),
        "q": args.q,
        "r": args.r,
    }
    if args.p is not None:
        out["C_half_p"] = finitely_summable_constant(args.p)
        out["p"] = args.p
    _dump(out, args.out)
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="sflab", description="spectral-flow estimators on weighted matrix models")
    parser.add_argument("--threads", type=int,
                        default=int(os.environ.get("SFLAB_THREADS", "1")),
                        help="worker threads for the suite runner")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run a single scenario file")
    p_run.add_argument("scenario")
    p_run.add_argument("--out", default=None, help="report path (default: stdout)")
    p_run.add_argument("--csv", default=None, help="dump integrand samples as CSV")
    p_run.add_argument("--tol", type=float, default=None)
    p_run.add_argument("--seed", type=int, default=None)
    p_run.add_argument("--timing", action="store_true",
                       help="include wall-clock time (breaks byte-determinism)")
    p_run.set_defaults(func=_cmd_run)

    p_suite = sub.add_parser("suite", help="run every scenario in a directory")
    p_suite.add_argument("directory")
    p_suite.add_argument("--out", default=None)
    p_suite.add_argument("--tol", type=float, default=None)
    p_suite.add_argument("--seed", type=int, default=None)
    p_suite.add_argument("--timing", action="store_true")
    p_suite.set_defaults(func=_cmd_suite)

    p_const = sub.add_parser("constants", help="print normalization constants")
    p_const.add_argument("--r", type=float, default=1.5)
    p_const.add_argument("--q", type=float, default=1.0)
    p_const.add_argument("--p", type=float, default=None)
    p_const.add_argument("--out", default=None)
    p_const.set_defaults(func=_cmd_constants)

    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
