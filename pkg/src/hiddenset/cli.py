"""Command line: generate, run-dense, run-sparse, se, sweep."""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys

import numpy as np

from . import harness, io as instio, rng as rngmod
from .dense import run_algorithm1
from .harness import ConfigError, make_config
from .instances import gen_sparse_instance, planted_instance
from .noise import FAMILIES
from .sparse import (bp_estimate, counting_rule_recursion, local_majority_refine,
                     predicted_bp_error, run_bp, run_population, symdiff_rate, tree_vertex_distribution,
                     misclassification_estimate)
from .state_evolution import ScheduleDiverged, build_schedule, ideal_recursion, sparse_gaussian_se


def _global_flags(p):
    p.add_argument("--seed", type=int, help="base seed")
    p.add_argument("--jobs", type=int, default=1, help="parallel trials")
    p.add_argument("--out", help="output path (default stdout)")
    p.add_argument("--config", help="key=value config file; flags override it")
    p.add_argument("--no-timing", action="store_true", help="blank runtime_ms, for golden comparisons")
    p.add_argument("--dump-sets", metavar="PATH", help="write each trial's estimated set")


def _model_flags(p, dense=True):
    p.add_argument("--n", type=int)
    p.add_argument("--kappa", type=float)
    if dense:
        p.add_argument("--k", type=int)
        p.add_argument("--noise", choices=FAMILIES)
        p.add_argument("--lambda", dest="lam", type=float)
    else:
        p.add_argument("--delta", type=int)
        p.add_argument("--sampling-mode", choices=("iid", "fixed-size"))


def build_parser():
    ap = argparse.ArgumentParser(prog="hiddenset", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="write an instance file")
    _global_flags(g)
    g.add_argument("--kind", choices=("dense", "sparse"), default="dense")
    _model_flags(g)
    g.add_argument("--delta", type=int)
    g.add_argument("--sampling-mode", choices=("iid", "fixed-size"))

    d = sub.add_parser("run-dense", help="one run of the complete-graph pipeline")
    _global_flags(d)
    _model_flags(d)
    d.add_argument("--d-star", type=int)
    d.add_argument("--t-star", type=int)
    d.add_argument("--M", type=float)
    d.add_argument("--t-power", type=int)
    d.add_argument("--rho-bar", type=float)
    d.add_argument("--instance", help="instance file written by generate")
    d.add_argument("--diagnostics", metavar="PATH", help="per-stage JSON sidecar")

    s = sub.add_parser("run-sparse", help="sparse BP, tree populations, local rule or Gaussian recursion")
    _global_flags(s)
    _model_flags(s, dense=False)
    s.add_argument("--t", dest="bp_t", type=int)
    s.add_argument("--mode", dest="sparse_mode", default="graph-bp",
                   choices=("graph-bp", "tree-population", "local-rule", "sparse-se"))
    s.add_argument("--P", dest="pool", type=int)
    s.add_argument("--eps", type=float, default=0.1, help="initial error of the local rule")

    e = sub.add_parser("se", help="state evolution trajectories")
    _global_flags(e)
    e.add_argument("--lambda", dest="lam", type=float, default=1.0)
    e.add_argument("--kappa", type=float, required=True)
    e.add_argument("--d-star", type=int, default=40)
    e.add_argument("--t-max", type=int, default=20)
    e.add_argument("--mode", dest="se_mode", choices=("ideal", "schedule", "sparse"), default="schedule")

    w = sub.add_parser("sweep", help="trials over a kappa grid")
    _global_flags(w)
    w.add_argument("--mode", choices=("dense", "sparse"))
    w.add_argument("--kappas", help="comma separated grid (default: the config's kappa)")
    w.add_argument("--trials", type=int)
    w.add_argument("--algorithm")
    _model_flags(w)
    w.add_argument("--delta", type=int)
    w.add_argument("--d-star", type=int)
    w.add_argument("--t-star", type=int)
    w.add_argument("--M", type=float)
    w.add_argument("--t", dest="bp_t", type=int)
    return ap


def _settings(args):
    return harness.read_config_file(args.config) if args.config else {}


def _emit(args, text):
    if args.out:
        harness.write_text(args.out, text)
    else:
        sys.stdout.write(text)


def _csv(rows):
    buf = io.StringIO()
    csv.writer(buf, lineterminator="\n").writerows(rows)
    return buf.getvalue()


def cmd_generate(args):
    if not args.out:
        raise ConfigError("generate needs --out")
    seed = args.seed or 0
    if args.kind == "dense":
        cfg = make_config(_settings(args), mode="dense", n=args.n, kappa=args.kappa, k=args.k, noise=args.noise,
                          lam=args.lam, seed=seed)
        inst = planted_instance(cfg.n, cfg.hidden_size, cfg.noise_spec, cfg.seed)
        instio.save_dense(args.out, inst)
    else:
        cfg = make_config(_settings(args), mode="sparse", n=args.n, kappa=args.kappa, delta=args.delta,
                          sampling_mode=args.sampling_mode, seed=seed)
        inst = gen_sparse_instance(cfg.n, cfg.delta, cfg.kappa, sampling_mode=cfg.sampling_mode or "iid",
                                   rng_seed=cfg.seed)
        instio.save_sparse(args.out, inst)


def cmd_run_dense(args):
    if args.instance:
        inst = instio.load(args.instance)
        settings = dict(_settings(args), n=inst.n, k=inst.k, noise=inst.noise.family, lam=inst.noise.lam)
        cfg = make_config(settings, mode="dense", seed=args.seed, d_star=args.d_star, t_star=args.t_star,
                          M=args.M, t_power=args.t_power, rho_bar=args.rho_bar)
        t_star = cfg.resolved_t_star()
        sched = build_schedule(cfg.noise_spec.lam, cfg.effective_kappa, cfg.d_star, t_star, strict=True)
        res = run_algorithm1(inst, cfg.hidden_size, sched, cfg.t_power, cfg.rho_bar)
        success, symdiff, overlap = harness.set_metrics(inst.hidden_set, res.final_set)
        rec = harness.TrialRecord(inst.seed, "dense", inst.n, cfg.effective_kappa, cfg.noise_spec.lam, None, "mp",
                                  t_star, cfg.d_star, success, symdiff, overlap,
                                  sum(res.runtime_ms.values()), res.final_set)
        diag = res.as_dict()
    else:
        cfg = make_config(_settings(args), mode="dense", n=args.n, kappa=args.kappa, k=args.k, noise=args.noise,
                          lam=args.lam, seed=args.seed, d_star=args.d_star, t_star=args.t_star, M=args.M,
                          t_power=args.t_power, rho_bar=args.rho_bar)
        rec = harness.run_trial(cfg, 0)
        diag = {"final_set": rec.estimate.tolist()}
    _emit(args, _csv([harness.COLUMNS, harness.record_row(rec, not args.no_timing)]))
    if args.diagnostics:
        harness.write_text(args.diagnostics, json.dumps(diag, indent=1, default=str) + "\n")
    if args.dump_sets:
        harness.dump_sets(args.dump_sets, [[rec]])


SPARSE_COLUMNS = ["mode", "kappa", "delta", "t", "error_rate", "predicted_error", "pool_mean0", "pool_mean1"]


def cmd_run_sparse(args):
    cfg = make_config(_settings(args), mode="sparse", n=args.n, kappa=args.kappa, delta=args.delta,
                      sampling_mode=args.sampling_mode, seed=args.seed, bp_t=args.bp_t, pool=args.pool)
    kap, delta, t = cfg.kappa, cfg.delta, cfg.bp_t
    pop_rng = rngmod.stream(cfg.seed, rngmod.POPULATION)
    rows = [SPARSE_COLUMNS]
    mode = args.sparse_mode
    if mode == "sparse-se":
        tr = sparse_gaussian_se(kap, t)
        for s in range(1, len(tr.mu0)):
            rows.append([mode, kap, delta, s, "", tr.predicted_error(s), "", ""])
    elif mode == "tree-population":
        pops = run_population(kap, delta, t, cfg.pool, pop_rng)
        for s, pop in enumerate(pops):
            v0, v1 = tree_vertex_distribution(pop, pop_rng)
            est = misclassification_estimate(v0, v1, kap, delta)
            rows.append([mode, kap, delta, s + 1, "", est.error, pop.pool0.mean(), pop.pool1.mean()])
    elif mode == "graph-bp":
        inst = gen_sparse_instance(cfg.n, delta, kap, sampling_mode=cfg.sampling_mode or "iid", rng_seed=cfg.seed)
        pred = predicted_bp_error(kap, delta, t, cfg.pool, pop_rng, init=1.0)
        err = symdiff_rate(bp_estimate(run_bp(inst, t), delta), inst.labels)
        rows.append([mode, kap, delta, t, err, pred.error, "", ""])
    else:  # local-rule: counting rule started from Y with error eps
        inst = gen_sparse_instance(cfg.n, delta, kap, sampling_mode=cfg.sampling_mode or "iid", rng_seed=cfg.seed)
        flip = rngmod.stream(cfg.seed, rngmod.LOCAL_RULE).random(cfg.n) < args.eps
        y = np.where(flip, 1 - inst.labels, inst.labels)
        rec = counting_rule_recursion(kap, delta, args.eps, t, rng=pop_rng)
        q = inst.labels.mean()
        for s in range(1, t + 1):
            bits = local_majority_refine(inst, y, s).bits
            pred = (1 - q) * rec.p[s] + q * (1 - rec.q[s])
            rows.append([mode, kap, delta, s, float(np.mean(bits != inst.labels)), pred, "", ""])
    _emit(args, _csv(rows))


def cmd_se(args):
    rows = []
    if args.se_mode == "ideal":
        tr = ideal_recursion(args.lam * args.kappa, args.t_max)
        rows.append(["t", "mu", "tau"])
        rows += [[t, m, 1.0 if t else 0.0] for t, m in enumerate(tr.mu)]
    elif args.se_mode == "schedule":
        sch = build_schedule(args.lam, args.kappa, args.d_star, args.t_max)
        rows.append(["t", "mu", "tau"])
        rows += [[t, m, 1.0 if t else 0.0] for t, m in enumerate(sch.mu_hat)]
    else:
        tr = sparse_gaussian_se(args.kappa, args.t_max)
        rows.append(["t", "mu0", "mu1", "sigma", "predicted_error"])
        for t in range(len(tr.mu0)):
            pe = tr.predicted_error(t)
            rows.append([t, tr.mu0[t], tr.mu1[t], math.sqrt(tr.sigma2[t]), "" if math.isnan(pe) else pe])
    _emit(args, _csv(rows))


def cmd_sweep(args):
    try:
        kappas = [float(x) for x in args.kappas.split(",")] if args.kappas else None
    except ValueError:
        raise ConfigError(f"bad --kappas {args.kappas!r}") from None
    kappa = kappas[0] if kappas else args.kappa
    cfg = make_config(_settings(args), mode=args.mode, n=args.n, kappa=kappa, k=None if kappas else args.k,
                      noise=args.noise, lam=args.lam, delta=args.delta, seed=args.seed, trials=args.trials,
                      algorithm=args.algorithm, d_star=args.d_star, t_star=args.t_star, M=args.M, bp_t=args.bp_t)
    text, records = harness.sweep(cfg, kappas, jobs=args.jobs, timing=not args.no_timing)
    _emit(args, text)
    if args.dump_sets:
        harness.dump_sets(args.dump_sets, records)


COMMANDS = {"generate": cmd_generate, "run-dense": cmd_run_dense, "run-sparse": cmd_run_sparse,
            "se": cmd_se, "sweep": cmd_sweep}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return harness.EXIT_CONFIG
    except ScheduleDiverged as exc:
        print(f"diverged: {exc}", file=sys.stderr)
        return harness.EXIT_DIVERGED
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return harness.EXIT_IO
    except ValueError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return harness.EXIT_CONFIG
    return harness.EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
