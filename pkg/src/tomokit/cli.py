"""Command-line front end: povm / simulate / estimate / eprec / qpt / bench.

Exit codes: 0 success, 1 domain error (the message names the error type,
never a stack trace), 2 usage error.  Stochastic commands require --seed so
identical (command, config, seed) reruns produce byte-identical outputs.
Each data-file output gets a sibling ``<out>.manifest.json``; directory
outputs (bench) carry a ``manifest.json`` inside.

A JSON config file can supply any long option (keys use underscores);
explicit flags win over config values.
"""

import argparse
import hashlib
import json
import os
import sys
import time


def _apply_thread_env():
    """Honor TOMOKIT_THREADS before numpy first loads its BLAS."""
    n = os.environ.get("TOMOKIT_THREADS")
    if n:
        for var in ("OPENBLAS_NUM_THREADS", "OMP_NUM_THREADS",
                    "MKL_NUM_THREADS", "NUMEXPR_NUM_THREADS"):
            os.environ.setdefault(var, n)


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, (bool, int, float, str)) or x is None:
        return x
    if hasattr(x, "item"):
        return x.item()
    return repr(x)


def _config_digest(merged):
    blob = json.dumps(_jsonable(merged), sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def _merge_config(args, parser):
    """Fill argument slots left at None from --config; flags win."""
    if not getattr(args, "config", None):
        return args
    try:
        with open(args.config, encoding="utf-8") as fh:
            cfg = json.load(fh)
    except json.JSONDecodeError as e:
        raise ValueError(f"config file {args.config}: {e}") from e
    if not isinstance(cfg, dict):
        raise ValueError(f"config file {args.config} must hold a JSON object")
    for key, value in cfg.items():
        dest = key.replace("-", "_")
        if not hasattr(args, dest):
            parser.error(f"config key {key!r} is not an option of this command")
        if getattr(args, dest) is None:
            setattr(args, dest, value)
    return args


def _write_run_manifest(out_path, args, outputs, wall_time, seed=None):
    import tomokit
    from tomokit.bench import _atomic_write
    merged = {k: v for k, v in vars(args).items()
              if not k.startswith("_") and k != "func" and v is not None}
    payload = {
        "command": list(getattr(args, "_argv", [])),
        "config_digest": _config_digest(merged),
        "seed": seed,
        "outputs": sorted(outputs),
        "version": tomokit.__version__,
        "wall_time_s": round(float(wall_time), 3),
    }
    path = out_path + ".manifest.json"
    _atomic_write(path, json.dumps(_jsonable(payload), indent=2,
                                   sort_keys=True) + "\n")
    return path


def _require_seed(args, parser, why):
    if getattr(args, "seed", None) is None:
        parser.error(f"--seed is required: {why}")


def _load_opts(args):
    from tomokit.solvers import SolverOptions
    kw = {}
    if getattr(args, "opts", None):
        with open(args.opts, encoding="utf-8") as fh:
            kw = json.load(fh)
        if not isinstance(kw, dict):
            raise ValueError(f"options file {args.opts} must hold a JSON object")
    opts = SolverOptions(**kw)
    if getattr(args, "eps", None) is not None:
        opts.epsilon = float(args.eps)
    return opts


def _diagnostics(est):
    return {"label": est.label, "objective": est.objective,
            "residual": est.residual, "iterations": est.iterations,
            "converged": est.converged, "flags": _jsonable(est.flags)}


def _save_with_diagnostics(path, doc, diagnostics):
    doc = dict(doc)
    doc["diagnostics"] = _jsonable(diagnostics)
    from tomokit.bench import _atomic_write
    _atomic_write(path, json.dumps(doc))


# --- povm ---------------------------------------------------------------------


def cmd_povm(args, parser):
    from tomokit import povmlib
    from tomokit.qobjects import load, save_povm
    from tomokit.matcore import matrix_to_doc
    import numpy as np

    t0 = time.time()
    if args.kind in ("random", "local-random"):
        _require_seed(args, parser, f"kind {args.kind} draws random bases")
    fiducial = None
    if args.kind == "neumark":
        if not args.fiducial:
            parser.error("--kind neumark needs --fiducial FILE "
                         "(the POVM to extend)")
        small = load(args.fiducial)
        result = povmlib.neumark_extend(small, args.dim)
    else:
        if args.fiducial:
            with open(args.fiducial, encoding="utf-8") as fh:
                entries = json.load(fh)
            fiducial = np.array([complex(a, b) for a, b in entries])
        result = povmlib.build(args.kind, args.dim, rank=args.rank,
                               bases=args.bases, seed=args.seed,
                               fiducial=fiducial)
    povm = result.as_povm() if isinstance(result, povmlib.BasisSet) else result
    save_povm(args.out, povm)
    _write_run_manifest(args.out, args, [os.path.basename(args.out)],
                        time.time() - t0, seed=args.seed)
    print(f"{args.kind} d={args.dim}: {len(povm)} elements -> {args.out}")
    return 0


# --- simulate -----------------------------------------------------------------


def cmd_simulate(args, parser):
    from tomokit import simkit
    from tomokit.qobjects import (born_probabilities, load, save_record,
                                  save_recordset)
    from tomokit.simkit import NoiseSpec, split_seed

    _require_seed(args, parser, "simulate draws measurement records")
    t0 = time.time()
    povm = load(args.povm)
    noise = NoiseSpec.parse(args.noise, seed=args.seed)
    if args.perturb:
        eta = float(args.perturb.split("eta=")[1]) if "eta=" in args.perturb \
            else float(args.perturb)
        child = int(split_seed(args.seed, "perturb").integers(2 ** 32))
        povm = simkit.perturb_povm(povm, eta, seed=child)

    if args.mode == "qpt":
        if not (args.process and args.states):
            parser.error("simulate qpt needs --process and --states")
        chi = load(args.process)
        states = load(args.states)
        sensing = simkit.qpt_sensing(states, povm)
        p = simkit.qpt_probabilities(chi.chi, sensing)
        records = simkit.qpt_sample_records(p, len(states), noise,
                                            povm_label=povm.label)
        save_recordset(args.out, records, label=f"qpt({povm.label})")
        n = len(records)
        print(f"qpt: {n} per-state records ({len(records[0].f)} outcomes "
              f"each, noise {noise.tag()}) -> {args.out}")
    else:
        if not args.state:
            parser.error("simulate needs --state FILE")
        rho = load(args.state)
        p = born_probabilities(povm, rho)
        rec = simkit.sample_record(p, noise, povm_label=povm.label)
        save_record(args.out, rec)
        print(f"record: {len(rec.f)} outcomes, noise {noise.tag()} "
              f"-> {args.out}")
    _write_run_manifest(args.out, args, [os.path.basename(args.out)],
                        time.time() - t0, seed=args.seed)
    return 0


# --- estimate -----------------------------------------------------------------


def cmd_estimate(args, parser):
    from tomokit import simkit, solvers
    from tomokit.matcore import matrix_to_doc
    from tomokit.qobjects import load
    import numpy as np

    t0 = time.time()
    opts = _load_opts(args)
    if args.mode == "qpt":
        est = _estimate_qpt(args, parser, opts)
        d = int(round(est.matrix.shape[0] ** 0.5))
        doc = {"kind": "process", "dim": d, "basis_label": "units",
               "label": f"{est.label}-estimate", "tp": None,
               "matrix": matrix_to_doc(est.matrix)}
    elif args.mode == "qdt":
        if not (args.record and args.states):
            parser.error("estimate qdt needs --record and --states")
        record = load(args.record)
        states = load(args.states)
        theta = simkit.qdt_probing_matrix(states)
        est = solvers.qdt_element_ls(record, theta, opts)
        doc = {"kind": "element", "dim": int(est.matrix.shape[0]),
               "label": "qdt-estimate", "matrix": matrix_to_doc(est.matrix)}
    else:
        if not (args.record and args.povm):
            parser.error("estimate needs --record and --povm")
        record = load(args.record)
        povm = load(args.povm)
        if args.method == "li":
            est = solvers.linear_inversion(record, povm)
            doc = {"kind": "element", "dim": povm.dim,
                   "label": "li-estimate", "matrix": matrix_to_doc(est.matrix)}
        else:
            if args.method == "rankr":
                if args.rank is None:
                    parser.error("--method rankr needs --rank R")
                _require_seed(args, parser, "rankr uses random restarts")
                est = solvers.rankr_projection_state(record, povm, args.rank,
                                                     opts, seed=args.seed)
            elif args.method == "ls":
                est = solvers.ls_state(record, povm, opts)
            elif args.method == "ml":
                est = solvers.ml_state(record, povm, opts)
            elif args.method == "trmin":
                est = solvers.trmin_state(record, povm, opts)
            else:
                parser.error(f"unknown method {args.method!r}")
            doc = {"kind": "state", "dim": povm.dim,
                   "label": f"{est.label}-estimate",
                   "matrix": matrix_to_doc(est.matrix)}
    _save_with_diagnostics(args.out, doc, _diagnostics(est))
    _write_run_manifest(args.out, args, [os.path.basename(args.out)],
                        time.time() - t0, seed=getattr(args, "seed", None))
    state = "converged" if est.converged else "NOT converged"
    print(f"{est.label}: objective={est.objective:.6e} "
          f"residual={est.residual:.3e} iterations={est.iterations} {state} "
          f"-> {args.out}")
    return 0


def _estimate_qpt(args, parser, opts):
    from tomokit import simkit, solvers
    from tomokit.qobjects import load

    if not (args.record and args.states and args.povm):
        parser.error("estimate qpt needs --record, --states and --povm")
    records = load(args.record)
    if not isinstance(records, list):
        records = [records]
    states = load(args.states)
    povm = load(args.povm)
    u_target = load(args.target_unitary) if args.target_unitary else None
    if args.cyclic_average:
        if u_target is None:
            parser.error("--cyclic-average needs --target-unitary")
        return solvers.l1_cyclic_average(records, states, povm,
                                         args.cyclic_average, u_target, opts)
    sensing = simkit.qpt_sensing(states, povm)
    if args.method == "ls":
        return solvers.ls_process(records, sensing, opts)
    if args.method == "trmin":
        return solvers.trmin_process(records, sensing, opts)
    if args.method == "l1":
        if u_target is None:
            parser.error("--method l1 needs --target-unitary")
        return solvers.l1_process(records, sensing, u_target, opts)
    parser.error(f"unknown qpt method {args.method!r}")


# --- eprec --------------------------------------------------------------------


def cmd_eprec(args, parser):
    from tomokit import eprec
    from tomokit.matcore import matrix_to_doc
    from tomokit.qobjects import load

    t0 = time.time()
    if args.mode == "complete":
        if not (args.record and args.povm_kind):
            parser.error("eprec complete needs --record and --povm-kind")
        record = load(args.record)
        mask = eprec.extract_elements(record, args.povm_kind, dim=args.dim,
                                      rank=args.rank)
        x = eprec.complete_rank_r(mask, args.rank or 1)
        doc = {"kind": "element", "dim": int(x.shape[0]),
               "label": f"eprec({args.povm_kind})", "matrix": matrix_to_doc(x)}
        _save_with_diagnostics(args.out, doc,
                               {"povm_kind": args.povm_kind,
                                "rank": args.rank or 1,
                                "measured_entries": int(mask.known.sum())})
        _write_run_manifest(args.out, args, [os.path.basename(args.out)],
                            time.time() - t0)
        print(f"completed rank-{args.rank or 1} matrix "
              f"(dim {x.shape[0]}) -> {args.out}")
        return 0
    # probe
    if not args.povm:
        parser.error("eprec probe needs --povm FILE")
    _require_seed(args, parser, "probe samples random kernel directions")
    povm = load(args.povm)
    report = eprec.strictness_probe(povm, args.rank or 1,
                                    n_samples=args.samples, seed=args.seed)
    print(json.dumps(_jsonable(report), indent=2, sort_keys=True))
    return 0


# --- qpt states ---------------------------------------------------------------


def cmd_qpt(args, parser):
    from tomokit import qptsets
    from tomokit.qobjects import save_stateset

    t0 = time.time()
    builders = {
        "standard": qptsets.standard_states,
        "uic-mixed": qptsets.uic_minimal_mixed,
        "uic-nplus": qptsets.uic_pure_nplus,
        "uic-0plus": qptsets.uic_pure_0plus,
    }
    sset = builders[args.kind](args.dim)
    if args.supplement:
        sset = qptsets.supplement_to_full(sset)
    save_stateset(args.out, sset.matrices(), label=sset.label)
    _write_run_manifest(args.out, args, [os.path.basename(args.out)],
                        time.time() - t0)
    print(f"{sset.label}: {len(sset)} states (dim {sset.dim}) -> {args.out}")
    return 0


# --- bench --------------------------------------------------------------------


def cmd_bench(args, parser):
    from tomokit.bench import SweepSpec, run_experiment

    params = {}
    if args.spec:
        with open(args.spec, encoding="utf-8") as fh:
            params = json.load(fh)
        if not isinstance(params, dict):
            raise ValueError(f"spec file {args.spec} must hold a JSON object")
    declared = params.pop("experiment", None)
    if declared is not None and declared != args.experiment:
        raise ValueError(f"spec file says experiment {declared!r} but the "
                         f"command line says {args.experiment!r}")
    seed = params.pop("seed", 0)
    if args.seed is not None:
        seed = args.seed
    spec = SweepSpec(args.experiment, seed=seed, **params)
    extra = {"command": list(getattr(args, "_argv", [])),
             "config_digest": _config_digest(spec.to_dict())}
    outputs = run_experiment(spec, args.out, extra=extra)
    for name in outputs:
        print(os.path.join(args.out, name))
    return 0


# --- parser -------------------------------------------------------------------


def build_parser():
    top = argparse.ArgumentParser(
        prog="tomokit",
        description="Measurement construction, simulation, and estimation "
                    "workbench for quantum state / process / detector "
                    "tomography.")
    sub = top.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", metavar="FILE",
                       help="JSON file supplying defaults for any long "
                            "option (explicit flags win)")

    # povm build
    povm = sub.add_parser("povm", help="construct measurement families")
    povm_sub = povm.add_subparsers(dest="action", required=True)
    pb = povm_sub.add_parser("build", help="build a POVM or basis set")
    pb.add_argument("--kind", required=True,
                    choices=["sic", "mub", "gmb", "gmb4", "gmb5", "flammia2d",
                             "flammia-rr", "psi3d", "poly4", "poly5",
                             "random", "local-random", "neumark"])
    pb.add_argument("--dim", type=int, required=True)
    pb.add_argument("--rank", type=int)
    pb.add_argument("--bases", type=int, help="basis count for random kinds")
    pb.add_argument("--seed", type=int)
    pb.add_argument("--fiducial", metavar="FILE",
                    help="sic: JSON [[re,im],...] fiducial vector; "
                         "neumark: the saved POVM to extend")
    pb.add_argument("--out", required=True)
    common(pb)
    pb.set_defaults(func=cmd_povm)

    # simulate
    sim = sub.add_parser("simulate", help="draw measurement records")
    sim.add_argument("mode", nargs="?", choices=["qpt"], default=None,
                     help="omit for state tomography; 'qpt' probes a process")
    sim.add_argument("--povm", required=True)
    sim.add_argument("--state", help="state tomography input state")
    sim.add_argument("--process", help="qpt: process matrix file")
    sim.add_argument("--states", help="qpt: probing state set file")
    sim.add_argument("--noise", default="ideal",
                     help="ideal | multinomial:m=4800 | gaussian:sigma=0.01")
    sim.add_argument("--perturb", metavar="eta=0.05",
                     help="apply a random POVM perturbation of strength eta")
    sim.add_argument("--seed", type=int)
    sim.add_argument("--out", required=True)
    common(sim)
    sim.set_defaults(func=cmd_simulate)

    # estimate
    est = sub.add_parser("estimate", help="run an estimator on a record")
    est.add_argument("mode", nargs="?", choices=["qpt", "qdt"], default=None)
    est.add_argument("--method", default="ls",
                     help="state: li|ls|ml|trmin|rankr;  qpt: ls|trmin|l1")
    est.add_argument("--rank", type=int, help="rank for --method rankr")
    est.add_argument("--record", help="record (state/qdt) or recordset (qpt)")
    est.add_argument("--povm")
    est.add_argument("--states", help="qpt/qdt: probing state set")
    est.add_argument("--target-unitary", metavar="FILE",
                     help="qpt: target unitary for l1 / cyclic averaging")
    est.add_argument("--cyclic-average", type=int, metavar="K",
                     help="qpt: average l1 over cyclic rotations, k states")
    est.add_argument("--eps", type=float,
                     help="residual-ball radius override")
    est.add_argument("--opts", metavar="FILE",
                     help="JSON solver options (tol_obj, max_iter, ...)")
    est.add_argument("--seed", type=int)
    est.add_argument("--out", required=True)
    common(est)
    est.set_defaults(func=cmd_estimate)

    # eprec
    ep = sub.add_parser("eprec",
                        help="elementwise reconstruction and completion")
    ep.add_argument("mode", choices=["complete", "probe"])
    ep.add_argument("--record")
    ep.add_argument("--povm-kind",
                    choices=["gmb", "gmb4", "gmb5", "flammia2d",
                             "flammia-rr", "psi3d"])
    ep.add_argument("--povm", help="probe: POVM file to test")
    ep.add_argument("--rank", type=int)
    ep.add_argument("--dim", type=int)
    ep.add_argument("--samples", type=int, default=200)
    ep.add_argument("--seed", type=int)
    ep.add_argument("--out")
    common(ep)
    ep.set_defaults(func=cmd_eprec)

    # qpt states
    qp = sub.add_parser("qpt", help="process-tomography inputs")
    qp_sub = qp.add_subparsers(dest="action", required=True)
    qs = qp_sub.add_parser("states", help="build probing state sets")
    qs.add_argument("--kind", required=True,
                    choices=["standard", "uic-mixed", "uic-nplus",
                             "uic-0plus"])
    qs.add_argument("--dim", type=int, required=True)
    qs.add_argument("--supplement", action="store_true",
                    help="extend to a fully-IC set")
    qs.add_argument("--out", required=True)
    common(qs)
    qs.set_defaults(func=cmd_qpt)

    # bench
    be = sub.add_parser("bench", help="run a sweep, write CSVs + manifest")
    be.add_argument("experiment", choices=["strict", "robustness", "noisy",
                                           "qpt", "gramian", "counts"])
    be.add_argument("--spec", metavar="FILE",
                    help="JSON sweep parameters (seed may live here)")
    be.add_argument("--seed", type=int, help="overrides the spec file seed")
    be.add_argument("--out", required=True, metavar="DIR")
    common(be)
    be.set_defaults(func=cmd_bench)

    return top


def main(argv=None):
    _apply_thread_env()
    argv = sys.argv[1:] if argv is None else list(argv)
    parser = build_parser()
    args = parser.parse_args(argv)
    args._argv = ["tomokit"] + argv
    try:
        args = _merge_config(args, parser)
        return args.func(args, parser)
    except (ValueError, OSError, KeyError) as e:
        # Domain errors (Infeasible, SingularBlock, UnsupportedDim,
        # RankDeficient, FiducialInvalid, ...) all derive from ValueError;
        # name the type, no stack trace.
        print(f"{type(e).__name__}: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
