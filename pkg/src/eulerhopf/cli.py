"""Command-line front door: ``eulerhopf run config.yaml``.

Exit status: 0 completed (any verdict), 2 configuration error,
3 assumptions violated with ``--strict``.
"""
from __future__ import annotations

import argparse
import json
import math
import os
import sys
from datetime import datetime, timezone

import numpy as np

from . import __version__
from . import config as cfgmod
from . import geometry, kfield as kfmod
from ._rng import ALGORITHM
from .bubbles import (BubbleConfiguration, QuadratureRule, dimensional_constants,
                      fit_parameters, functional_J, load_point_list, membership_V_p_eps,
                      slaved_alpha)
from .criterion import ASSUMPTIONS_VIOLATED, euler_hopf_verdict
from .errors import (AssumptionsViolated, CapExceededError, ConfigError, DomainError, FitError,
                     IntegratorError)
from .greens import GreensEvaluator
from .pseudoflow import ABORTED, FlowModel, FlowParams, detect_blowup, dump_trajectory, integrate_flow

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_STRICT = 3


def _clean(obj):
    """JSON-safe copy: numpy scalars and arrays to Python, non-finite floats to strings."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer, int)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        f = float(obj)
        return f if math.isfinite(f) else repr(f)
    return obj


def _semantic_checks(raw):
    """Dimension consistency; returns diagnostics keyed by config path."""
    out = []
    dom = raw["domain"]
    c = dom["center"] if dom["type"] == "ball" else dom["params"]["center"]
    n = len(c)
    if n < 4:
        out.append((["domain"], f"dimension {n} is below 4"))
    if dom["type"] == "sdf":
        need = {"ball": ["radius"], "ellipsoid": ["semi_axes"],
                "rounded_box": ["half_widths", "rounding"]}[dom["kind"]]
        for k in need:
            if k not in dom["params"]:
                out.append((["domain", "params"], f"{dom['kind']} needs {k!r}"))
        for k in ("semi_axes", "half_widths"):
            if k in dom["params"] and len(dom["params"][k]) != n:
                out.append((["domain", "params", k], f"expected {n} entries"))
    for i, cp in enumerate(raw["kfield"]["critical_points"]):
        for k in ("y", "b"):
            if len(cp[k]) != n:
                out.append((["kfield", "critical_points", i, k], f"expected {n} entries"))
    env = raw["kfield"].get("envelope", {})
    if "center" in env and len(env["center"]) != n:
        out.append((["kfield", "envelope", "center"], f"expected {n} entries"))

    def bubbles(path, b):
        if len(b["lambda"]) != len(b["a"]):
            out.append((path + ["lambda"], "one lambda per centre"))
        if "alpha" in b and len(b["alpha"]) != len(b["a"]):
            out.append((path + ["alpha"], "one alpha per centre"))
        for j, a in enumerate(b["a"]):
            if len(a) != n:
                out.append((path + ["a", j], f"expected {n} entries"))

    for i, s in enumerate(raw.get("flow", {}).get("starts", [])):
        bubbles(["flow", "starts", i], s)
    for i, s in enumerate(raw.get("bubbles", {}).get("configurations", [])):
        bubbles(["bubbles", "configurations", i], s)
    fit = raw.get("bubbles", {}).get("fit")
    if fit:
        bubbles(["bubbles", "fit", "initial"], fit["initial"])
        if len(fit["initial"]["a"]) != fit["p"]:
            out.append((["bubbles", "fit", "p"], "initial guess must have p bubbles"))
    return out


def load_run_config(path, seed=None):
    raw = cfgmod.load(path)
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    probs = _semantic_checks(raw)
    if probs:
        import yaml
        root = yaml.compose(text, Loader=yaml.SafeLoader)
        diags = [f"{path}:{cfgmod._line_of(root, p)}: {'/'.join(map(str, p))}: {m}"
                 for p, m in probs]
        raise ConfigError(f"{path}: {len(diags)} inconsistent entries", diags)
    return cfgmod.resolve(raw, seed)


def build_problem(cfg):
    domain = geometry.from_config(cfg["domain"])
    field = kfmod.from_config(cfg["kfield"], domain)
    g = cfg["greens"]
    backend = g["backend"]
    if backend == "auto":
        backend = "analytic" if isinstance(domain, geometry.Ball) else "montecarlo"
    greens = GreensEvaluator(domain, backend, walks=g["walks"], shell=g["shell_width"],
                             seed=cfg["seed"], max_steps=g["max_steps"],
                             antithetic=g["antithetic"], workers=g["workers"])
    return domain, field, greens


def _config_from(spec, field, n):
    a = np.asarray(spec["a"], dtype=float)
    lam = np.asarray(spec["lambda"], dtype=float)
    if "alpha" in spec:
        alpha = np.asarray(spec["alpha"], dtype=float)
    else:
        alpha = slaved_alpha(a, np.array([field.eval(ai) for ai in a]), n)
    return BubbleConfiguration(alpha, a, lam)


def flow_starts(cfg, domain, field):
    """Explicit starts, then seeded random ones; one start per critical point if none given."""
    fl = cfg["flow"]
    n = domain.n
    starts = [_config_from(s, field, n) for s in fl["starts"]]
    rs = fl["random_starts"]
    rng = np.random.default_rng([cfg["seed"], 0x666C6F77])
    lo, hi = rs["lambda_range"]
    for _ in range(rs["count"]):
        p = int(rng.integers(1, rs["max_bubbles"] + 1))
        a = domain.sample_interior(p, rng)
        lam = np.exp(rng.uniform(np.log(lo), np.log(hi), size=p))
        starts.append(_config_from({"a": a.tolist(), "lambda": lam.tolist()}, field, n))
    if not starts:
        for cp in field.points:
            starts.append(_config_from({"a": [cp.y.tolist()], "lambda": [fl["initial_lambda"]]},
                                       field, n))
    return starts


def run(config_path, seed=None, strict=False, timestamp=True, out=None, trajectories=False,
        stream=sys.stderr):
    try:
        cfg = load_run_config(config_path, seed)
        domain, field, greens = build_problem(cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=stream)
        for d in exc.diagnostics:
            print("  " + d, file=stream)
        return EXIT_CONFIG, None
    except (DomainError, ValueError, KeyError) as exc:
        print(f"config error: {config_path}: {exc}", file=stream)
        return EXIT_CONFIG, None

    outdir = out or cfg["output"]["directory"]
    if not os.path.isabs(outdir) and out is None:
        outdir = os.path.join(os.path.dirname(os.path.abspath(config_path)), outdir)
    os.makedirs(outdir, exist_ok=True)
    dump = trajectories or cfg["output"]["trajectories"]
    cfg["output"]["trajectories"] = bool(dump)

    report = {"program": {"name": "eulerhopf", "version": __version__},
              "rng_algorithm": ALGORITHM, "seed": cfg["seed"], "config": cfg,
              "domain": domain.describe(), "kfield": field.describe(),
              "green_backend": greens.describe(),
              "dimensional_constants": dimensional_constants(domain.n).as_dict()}
    if timestamp:
        report["timestamp"] = datetime.now(timezone.utc).isoformat()
    violated = []
    an = cfg["analyses"]

    assumptions = None
    if an["assumptions"] or an["criterion"]:
        assumptions = kfmod.check_assumptions(domain, field, cfg["assumptions"]["sample_budget"],
                                              cfg["seed"])
        report["assumptions"] = assumptions.as_dict()
        if not assumptions.passed:
            violated += assumptions.failures()

    if an["criterion"]:
        try:
            crit = euler_hopf_verdict(field, greens, assumptions, cfg["criterion"]["subset_cap"],
                                      cfg["assumptions"]["sample_budget"], cfg["seed"])
            report["criterion"] = crit.as_dict()
            if crit.flagged:
                violated.append("A2")
        except CapExceededError as exc:
            report["criterion"] = {"error": str(exc)}

    if an["flow"]:
        fl = []
        params = FlowParams(**cfg["flow"]["params"])
        try:
            model = FlowModel(domain, field, params, greens)
            report["flow_parameters_resolved"] = model.params.as_dict()
            for k, start in enumerate(flow_starts(cfg, domain, field)):
                entry = {"start": start.as_dict()}
                try:
                    tr = integrate_flow(start, model)
                    entry["trajectory"] = tr.summary()
                    entry["blowup"] = detect_blowup(tr, model).as_dict()
                    if tr.verdict.kind == ABORTED:
                        violated.append("A2")
                    if dump:
                        name = f"trajectory_{k:03d}.csv"
                        with open(os.path.join(outdir, name), "w", encoding="utf-8") as fh:
                            dump_trajectory(tr, fh)
                        entry["dump"] = name
                except IntegratorError as exc:
                    entry["error"] = str(exc)
                    entry["last_state"] = exc.last_state.as_dict() if exc.last_state else None
                except ValueError as exc:
                    entry["error"] = str(exc)
                fl.append(entry)
        except AssumptionsViolated as exc:
            fl.append({"error": str(exc)})
            violated.append("A2")
        report["flow"] = fl

    if an["bubbles"]:
        bb = cfg["bubbles"]
        res = {"configurations": []}
        rule_cache = {}
        for spec in bb["configurations"]:
            c = _config_from(spec, field, domain.n)
            rule = rule_cache.get(c.p)
            if rule is None:
                rule = rule_cache[c.p] = QuadratureRule.make(domain.n, c.p,
                                                             bb["quadrature_budget"], cfg["seed"])
            J = functional_J(c, field, domain, rule=rule, greens=greens)
            member, bad = membership_V_p_eps(c, bb["eps"], field, domain)
            res["configurations"].append({"config": c.as_dict(), "J": J.as_dict(),
                                          "in_V_p_eps": member, "violated_clauses": bad})
        fit = bb.get("fit")
        if fit:
            path = fit["points_file"]
            if not os.path.isabs(path):
                path = os.path.join(os.path.dirname(os.path.abspath(config_path)), path)
            X, vals = load_point_list(path)
            init = _config_from(fit["initial"], field, domain.n)
            try:
                fr = fit_parameters(X, vals, fit["p"], init, domain, greens,
                                    max_iter=fit.get("max_iter", 200))
                res["fit"] = {"config": fr.config.as_dict(), "residual": fr.residual,
                              "iterations": fr.iterations, "in_model": fr.in_model}
            except FitError as exc:
                res["fit"] = {"error": str(exc), "residual": exc.residual,
                              "best": exc.best.as_dict() if exc.best is not None else None}
        report["bubbles"] = res

    violated = sorted(set(violated))
    report["assumptions_violated"] = violated
    status = EXIT_STRICT if (strict and violated) else EXIT_OK
    report["exit_status"] = status
    report["strict"] = bool(strict)
    path = os.path.join(outdir, cfg["output"]["report"])
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(_clean(report), fh, sort_keys=True, indent=2)
        fh.write("\n")
    return status, path


def main(argv=None):
    ap = argparse.ArgumentParser(prog="eulerhopf",
                                 description="Existence criterion and bubble dynamics runner")
    sub = ap.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="run a config file")
    r.add_argument("config")
    r.add_argument("--seed", type=int, default=None, help="override the config seed")
    r.add_argument("--strict", action="store_true", help="exit 3 if an assumption fails")
    r.add_argument("--no-timestamp", action="store_true", help="omit the timestamp field")
    r.add_argument("--out", default=None, help="output directory")
    r.add_argument("--trajectories", action="store_true", help="write per-run trajectory dumps")
    args = ap.parse_args(argv)
    status, path = run(args.config, args.seed, args.strict, not args.no_timestamp, args.out,
                       args.trajectories)
    if path:
        print(path)
    return status


if __name__ == "__main__":
    sys.exit(main())
