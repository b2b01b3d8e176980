"""Command-line front end.

Usage::

    geowalk <command> [--config FILE] [--key value ...]

Every configuration key is also a flag (``--max-geodesics 3``); flags override
keys read from ``--config``, which override the built-in defaults. Output
files go to ``--output`` or, when that is not given, to
``$GEOWALK_OUTPUT_DIR/<command>.{json,csv}`` (current directory by default).

Exit codes: 0 success, 1 invalid configuration or usage, 2 runtime failure.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import asdict, fields
from pathlib import Path

import numpy as np

from . import brownian, estimator, rates
from . import rng as rngmod
from .config import COMMANDS, ExperimentConfig, _parse_value, coerce, parse_config
from .errors import ConfigError, GeowalkError
from .geometry import geodesic_curve
from .measures import parse_family
from .walks import WalkConfig, run_geodesic_walk, write_walk_csv

OUTPUT_ENV = "GEOWALK_OUTPUT_DIR"


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(message)


def _build_parser():
    p = _Parser(prog="geowalk", description="Geodesic random walks and large deviations.")
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--config", help="key = value configuration file")
    for f in fields(ExperimentConfig):
        if f.name == "command":
            continue
        p.add_argument("--" + f.name.replace("_", "-"), dest=f.name, default=None)
    return p


def _resolve(argv):
    args = _build_parser().parse_args(argv)
    cfg = ExperimentConfig()
    if args.config:
        cfg = parse_config(Path(args.config).read_text(encoding="utf-8"))
    overrides = {}
    for f in fields(ExperimentConfig):
        raw = getattr(args, f.name, None)
        if f.name != "command" and raw is not None:
            overrides[f.name] = _parse_value(raw)
    for key, val in coerce(overrides).items():
        setattr(cfg, key, val)
    cfg.command = args.command
    errs = cfg.validate()
    if errs:
        raise ConfigError(errs)
    return cfg


def _output(cfg, ext):
    if cfg.output:
        return Path(cfg.output)
    return Path(os.environ.get(OUTPUT_ENV, ".")) / f"{cfg.command}.{ext}"


def _write_json(path, data):
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        json.dump(data, fh, indent=2)


def _vector(m, x, spec):
    """A tangent vector from a scalar (length along the first basis vector) or components."""
    if isinstance(spec, (int, float)):
        return float(spec) * m.tangent_basis(x)[0]
    if isinstance(spec, str):
        spec = [float(c) for c in spec.split(",")]
    return m.project(x, np.asarray(spec, dtype=float))


def _terminal(cfg, m):
    kind, _, arg = str(cfg.terminal).partition(":")
    centre = m.origin()
    if kind == "neg_sq_dist":
        c = float(arg) if arg else 1.0
        return lambda y: -c * float(m.dist(y, centre)) ** 2
    if kind == "const":
        c = float(arg)
        return lambda y: c
    if kind == "linear":
        a = np.array([float(q) for q in arg.split(",")])
        return lambda y: float(np.dot(a, y))
    raise ConfigError([f"terminal: unknown {kind!r}; supported: neg_sq_dist[:c], const:c, linear:a1,..."])


def _model(cfg, m):
    if cfg.model == "brownian":
        return rates.RateModel.brownian(m)
    return rates.RateModel.walk(parse_family(cfg.family, m))


def _dispatch(cfg):
    m = cfg.manifold_model()
    x0 = cfg.point(m, cfg.x0)
    cmd = cfg.command

    if cmd == "walk":
        wc = WalkConfig(m, parse_family(cfg.family, m), x0, cfg.n, cfg.T, cfg.seed)
        path = run_geodesic_walk(wc)
        out = _output(cfg, "csv")
        out.parent.mkdir(parents=True, exist_ok=True)
        write_walk_csv(path, wc, out)
        return f"walk: {len(path.increments)} steps, endpoint {np.round(path.steps[-1], 6).tolist()} -> {out}"

    if cmd == "bm":
        p = brownian.run_brownian(m, x0, cfg.eps, cfg.T, cfg.dt, rngmod.stream(cfg.seed, rngmod.BROWNIAN))
        out = _output(cfg, "csv")
        out.parent.mkdir(parents=True, exist_ok=True)
        brownian.write_brownian_csv(p, out)
        return f"bm: {len(p.times) - 1} steps, endpoint {np.round(p.points[-1], 6).tolist()} -> {out}"

    if cmd == "rate":
        rm = _model(cfg, m)
        rec = {"model": rm.name, "x0": x0.tolist()}
        if cfg.p is not None:
            p = m.flat(x0, _vector(m, x0, cfg.p))
            rec["p"] = p.tolist()
            rec["hamiltonian"] = rates.hamiltonian(rm, x0, p)
        if cfg.v is not None:
            v = _vector(m, x0, cfg.v)
            rec["v"] = v.tolist()
            rec["lagrangian"] = rates.lagrangian(rm, x0, v)
        if len(rec) == 2:
            raise ConfigError(["rate: give --p and/or --v"])
        _write_json(_output(cfg, "json"), rec)
        parts = [f"{k} {rec[k]:.10g}" for k in ("hamiltonian", "lagrangian") if k in rec]
        return "rate: " + ", ".join(parts)

    if cmd == "action":
        rm = _model(cfg, m)
        target = cfg.point(m, cfg.target, base=x0)
        v = m.log(x0, target)
        curve = geodesic_curve(m, x0, v, num=cfg.segments + 1)
        rep = rates.path_action(rm, curve)
        rec = {"model": rm.name, "x0": x0.tolist(), "target": target.tolist(),
               "action": rep.value, "segments": cfg.segments, "flags": rep.flags}
        _write_json(_output(cfg, "json"), rec)
        return f"action {rep.value:.10g}"

    if cmd == "cramer":
        rm = _model(cfg, m)
        target = cfg.point(m, cfg.target, base=x0)
        rec = rates.cramer_details(rm, x0, target, cfg.max_geodesics)
        _write_json(_output(cfg, "json"), rec.to_json())
        flag = " (degenerate)" if rec.degenerate_flag else ""
        return f"rate {rec.rate:.10g}{flag}"

    if cmd == "estimate":
        fam = parse_family(cfg.family, m)
        target = cfg.point(m, cfg.target, base=x0)
        reps = cfg.replicas
        rep = estimator.run_endpoint_experiment(
            m, fam, x0, target, cfg.delta, cfg.levels, reps, cfg.seed, cfg.threads, cfg.tolerance,
            config={k: v for k, v in asdict(cfg).items() if k not in ("output", "threads")},
        )
        out = _output(cfg, "json")
        out.parent.mkdir(parents=True, exist_ok=True)
        estimator.persist_report(rep, out)
        estimator.write_rate_table(rep.estimates[0], out.with_suffix(".csv"))
        est = rep.estimates[0]
        return (f"estimate: fitted {est.fitted_rate:.4f} +- {est.stderr:.4f}, theory {rep.theory:.4f}, "
                f"pass={str(rep.passed).lower()}")

    if cmd == "exitbound":
        grid = [(d, t) for t in cfg.taus for d in cfg.deltas]
        dt = None if cfg.dt == 1e-3 else cfg.dt
        rep = estimator.verify_exit_bound(m, x0, grid, cfg.eps, int(cfg.replicas), dt, cfg.seed,
                                          threads=cfg.threads)
        _write_json(_output(cfg, "json"), {"points": [asdict(p) for p in rep.points], "pass": rep.passed})
        return f"exitbound: {len(rep.points)} points, pass={str(rep.passed).lower()}"

    if cmd == "semigroup":
        rm = _model(cfg, m)
        res = rates.variational_semigroup(rm, _terminal(cfg, m), cfg.t, x0, cfg.segments, seed=cfg.seed)
        _write_json(_output(cfg, "json"), {"model": rm.name, "x0": x0.tolist(), "t": cfg.t,
                                           "value": res.value, "converged": res.converged})
        return f"semigroup {res.value:.10g} (converged={str(res.converged).lower()})"

    if cmd == "conjugate":
        fam = parse_family(cfg.family, m)
        v = _vector(m, x0, 0.0 if cfg.v is None else cfg.v)
        res = fam.legendre(x0, v)
        _write_json(_output(cfg, "json"), {"family": fam.spec(), "x0": x0.tolist(), "v": v.tolist(),
                                           "value": res.value, "argmax_p": res.argmax_p.tolist(),
                                           "iterations": res.iterations, "attained": res.attained,
                                           "in_domain": res.in_domain})
        return f"conjugate {res.value:.10g}"

    raise ConfigError([f"unknown command {cmd!r}"])


def run_command(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        cfg = _resolve(argv)
    except _UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except ConfigError as exc:
        for e in exc.errors:
            print(f"config error: {e}", file=sys.stderr)
        return 1
    except (OSError, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    try:
        print(_dispatch(cfg))
    except ConfigError as exc:
        for e in exc.errors:
            print(f"config error: {e}", file=sys.stderr)
        return 1
    except (GeowalkError, ArithmeticError, RuntimeError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


def main():
    sys.exit(run_command())


if __name__ == "__main__":
    main()
