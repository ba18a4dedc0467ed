"""``coxthin`` command line.

Every command takes a JSON config (``--config``) whose values may be
overridden by flags.  Outputs go to ``--out`` together with a
``manifest.json``; failures print a JSON object on stderr and exit non-zero.

Matern III simulations do not correct edge effects: points near the domain
boundary can only be shadowed by observed points inside the domain.
"""
from __future__ import annotations

import argparse
import json
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import io
from .config import Config, MtsgcpConfig, Matern3Config, SgcpConfig, load_config
from .errors import CoxthinError, StructureError
from .gp import LMCParams
from .pattern import MarkedPattern, make_rng, max_workers, spawn_rngs

EXIT_FAILED_CHECK = 1
EXIT_ERROR = 2


def _model(cfg: Config, cls):
    if cfg.model is None:
        return cls()
    if not isinstance(cfg.model, cls):
        raise StructureError(f"config model is {cfg.model.kind!r}, command needs {cls().kind!r}")
    return cfg.model


def _prov(cfg: Config, command: str) -> dict:
    return io.provenance(cfg.model_dump(mode="json"), cfg.seed, command=command)


class Outputs:
    def __init__(self, out: Path, prov: dict):
        self.out, self.prov, self.files = out, prov, []
        out.mkdir(parents=True, exist_ok=True)

    def add(self, path: Path) -> Path:
        self.files.append(path)
        return path

    def finish(self):
        io.write_manifest(self.out, self.files, self.prov)


# simulate -----------------------------------------------------------------------

def cmd_simulate(cfg: Config, args) -> int:
    from .matern3 import simulate_matern3
    from .mtsgcp.model import MtsgcpParams, simulate_mtsgcp
    from .sgcp.model import simulate_sgcp

    rng = make_rng(cfg.seed)
    dom = cfg.domain.build()
    outs = Outputs(Path(args.out), _prov(cfg, f"simulate {args.model}"))
    if args.model == "sgcp":
        thinned, observed = simulate_sgcp(rng, _model(cfg, SgcpConfig).build(dom))
    elif args.model == "mtsgcp":
        m = _model(cfg, MtsgcpConfig)
        thinned, obs = simulate_mtsgcp(rng, MtsgcpParams(m.lam, m.lmc(), dom))
        observed = MarkedPattern.concat([o.replace(colours=np.full(len(o), k + 1)) for k, o in enumerate(obs)])
        thinned = thinned.replace(colours=np.zeros(len(thinned), dtype=np.int64))
    else:
        m = _model(cfg, Matern3Config)
        thinned, observed = simulate_matern3(rng, dom, m.lam, m.shadow.build())
    outs.add(io.write_pattern_csv(outs.out / "thinned.csv", thinned, outs.prov))
    outs.add(io.write_pattern_csv(outs.out / "observed.csv", observed, outs.prov))
    outs.finish()
    print(io.dumps({"thinned": len(thinned), "observed": len(observed), "out": str(outs.out)}))
    return 0


# fit ----------------------------------------------------------------------------

def _load_data(cfg: Config, args):
    path = args.data or (cfg.data.path if cfg.data else None)
    if path is None:
        raise StructureError("no data file: set data.path in the config or pass --data")
    type_column = cfg.data.type_column if cfg.data else "type"
    rescale = args.rescale or (cfg.data.rescale if cfg.data else False)
    return io.load_csv(path, cfg.domain.build(), type_column=type_column, rescale=rescale)


def _run_chain(job):
    from .mtsgcp.gibbs import fit

    rng, data, priors, controls, n_iter, n_burn, dom = job
    return fit(rng, data, priors, controls, n_iter, n_burn, dom=dom)


def run_chains(cfg: Config, data, seed: int):
    dom = cfg.domain.build()
    priors, controls = cfg.priors.build(dom), cfg.controls.build()
    jobs = [(rng, list(data.patterns), priors, controls, cfg.run.iters, cfg.run.burn, dom)
            for rng in spawn_rngs(seed, cfg.run.chains)]
    workers = max_workers(len(jobs))
    if workers == 1:
        return [_run_chain(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_run_chain, jobs))


def cmd_fit(cfg: Config, args) -> int:
    data = _load_data(cfg, args)
    if args.model == "sgcp" and data.p != 1:
        raise StructureError(f"sgcp fit needs a single type, data has {data.p}")
    outs = Outputs(Path(args.out), _prov(cfg, f"fit {args.model}"))
    traces = run_chains(cfg, data, cfg.seed)
    summary = {"counts": data.counts, "chains": []}
    for k, trace in enumerate(traces):
        outs.add(io.write_trace_jsonl(outs.out / f"chain{k}.jsonl", trace, outs.prov))
        if trace.intensity is not None:
            for j, grid in enumerate(trace.intensity):
                outs.add(io.write_grid_csv(outs.out / f"intensity_chain{k}_type{j + 1}.csv", grid, outs.prov))
        lam = trace.column("lam") if len(trace) else np.array([])
        summary["chains"].append({"kept": len(trace), "lam_mean": float(lam.mean()) if len(lam) else None})
    outs.finish()
    print(io.dumps(summary))
    return 0


# pcf / intensity ----------------------------------------------------------------

def _draws_from(cfg: Config, args) -> list[LMCParams]:
    if args.trace:
        draws = []
        for path in args.trace:
            trace = io.read_trace_jsonl(path)
            draws += [LMCParams(r["A"], r["rho"], r["mu"]) for r in trace.records]
        if not draws:
            raise StructureError("traces contain no kept iterations")
        idx = np.unique(np.linspace(0, len(draws) - 1, min(cfg.pcf.max_draws, len(draws))).astype(int))
        return [draws[i] for i in idx]
    return [_model(cfg, MtsgcpConfig).lmc()]


def cmd_pcf(cfg: Config, args) -> int:
    from .mtsgcp.pcf import pcf

    outs = Outputs(Path(args.out), _prov(cfg, "pcf"))
    res = pcf(_draws_from(cfg, args), cfg.pcf.r_values, cfg.pcf.n_mc, seed=cfg.seed)
    outs.add(io.write_pcf_csv(outs.out / "pcf.csv", res.table(), outs.prov))
    outs.finish()
    print(io.dumps({"draws": int(res.draws.shape[0]), "pairs": [f"{k}-{l}" for k, l in res.pairs]}))
    return 0


def cmd_intensity_grid(cfg: Config, args) -> int:
    from .mtsgcp.intensity import posterior_intensity_grid

    if not args.trace:
        raise StructureError("intensity-grid needs --trace files written with controls.store_latent")
    res = args.res or cfg.controls.grid_res or 64
    outs = Outputs(Path(args.out), _prov(cfg, "intensity-grid"))
    rng = make_rng(cfg.seed)
    for k, path in enumerate(args.trace):
        trace = io.read_trace_jsonl(path)
        if trace.dom is None:
            trace.dom = cfg.domain.build()
        grids = posterior_intensity_grid(rng, trace, res)
        for j, grid in enumerate(grids):
            outs.add(io.write_grid_csv(outs.out / f"intensity_chain{k}_type{j + 1}.csv", grid, outs.prov))
    outs.finish()
    print(io.dumps({"files": [str(f) for f in outs.files]}))
    return 0


# verification -------------------------------------------------------------------

def _report(outs: Outputs, name: str, report: dict, passed: bool) -> int:
    report = {"provenance": outs.prov, "passed": bool(passed), **report}
    outs.add(io.write_json(outs.out / f"{name}.json", report))
    outs.finish()
    print(io.dumps(report, indent=2, sort_keys=True))
    return 0 if passed else EXIT_FAILED_CHECK


def cmd_verify(cfg: Config, args) -> int:
    outs = Outputs(Path(args.out), _prov(cfg, f"verify {args.check}"))
    rng = make_rng(cfg.seed)
    v = cfg.verify
    dom = cfg.domain.build()
    if args.check == "colouring":
        from .colouring import verify_colouring_suite

        rep = verify_colouring_suite()
        return _report(outs, "verify-colouring", rep, rep["passed"])
    if args.check == "appendix-b":
        from .sgcp.checks import verify_appendix_b

        rep = verify_appendix_b(rng, _model(cfg, SgcpConfig).build(dom), v.n_reps, v.grid_res)
        return _report(outs, "verify-appendix-b", rep, rep["count_test"]["p_value"] > 0.01)
    if args.check == "appendix-c":
        from .sgcp.checks import verify_appendix_c

        params = _model(cfg, SgcpConfig).build(dom)
        rep = verify_appendix_c(rng, params, v.n_reps, v.grid_res, n_sweeps=v.n_sweeps,
                                steps_per_sweep=v.steps_per_sweep, n_burn=v.n_burn)
        ok = abs(rep["neg_integral"]["z"]) < 3 and rep["exp_integral"]["excess_in_se"] > 3
        if "empty_given_empty" in rep:
            ok = ok and rep["empty_given_empty"]["bdm_below_rao"]
        return _report(outs, "verify-appendix-c", rep, ok)
    if args.check == "matern3":
        from .matern3 import verify_matern3

        m = _model(cfg, Matern3Config)
        R = m.shadow.R if m.shadow.kind == "disc" else 0.1
        rep = verify_matern3(rng, lam=m.lam, R=R, n_configs=v.n_configs, n_hardcore=min(v.n_reps, 10**4),
                             n_conditional=v.n_reps, dom=dom)
        return _report(outs, "verify-matern3", rep, rep["passed"])
    from .mtsgcp.geweke import geweke_test

    rep = geweke_test(rng, n_samples=v.n_samples, dom=dom)
    return _report(outs, "verify-geweke", rep, rep["passed"])


def cmd_compare_samplers(cfg: Config, args) -> int:
    from .sgcp.checks import compare_samplers

    dom = cfg.domain.build()
    params = _model(cfg, SgcpConfig).build(dom)
    if args.observed == "empty":
        observed = None
    else:
        observed = io.read_pattern_csv(args.observed, dom)
        if observed.n_marks != 1:
            raise StructureError("observed pattern needs one GP mark column g1")
        observed = MarkedPattern(observed.locations, dom, marks=observed.marks)
    outs = Outputs(Path(args.out), _prov(cfg, "compare-samplers"))
    v = cfg.verify
    rep = compare_samplers(make_rng(cfg.seed), params, observed, n_bdm_sweeps=v.n_sweeps, n_iid=v.n_reps,
                           n_burn=v.n_burn, steps_per_sweep=v.steps_per_sweep,
                           include_goncalves=abs(dom.volume - 1.0) < 1e-12)
    return _report(outs, "compare-samplers", rep, True)


# parser -------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON config file")
    common.add_argument("--seed", type=int, help="64-bit seed (overrides config)")
    common.add_argument("--out", default="coxthin-out", help="output directory")
    common.add_argument("--chains", type=int)
    common.add_argument("--iters", type=int)
    common.add_argument("--burn", type=int)
    common.add_argument("--rescale", action="store_true", help="map data coordinates onto the domain")

    parser = argparse.ArgumentParser(prog="coxthin", description=__doc__,
                                     formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", parents=[common], help="simulate a model")
    p.add_argument("model", choices=["sgcp", "mtsgcp", "matern3"])
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("fit", parents=[common], help="posterior sampling for observed data")
    p.add_argument("model", choices=["sgcp", "mtsgcp"])
    p.add_argument("--data", help="CSV with x,y[,type] (overrides data.path)")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("pcf", parents=[common], help="pair correlation functions")
    p.add_argument("--trace", nargs="*", help="trace JSONL files; without them the config model is used")
    p.set_defaults(func=cmd_pcf)

    p = sub.add_parser("intensity-grid", parents=[common], help="posterior mean intensity grids")
    p.add_argument("--trace", nargs="+", required=True)
    p.add_argument("--res", type=int)
    p.set_defaults(func=cmd_intensity_grid)

    p = sub.add_parser("verify", parents=[common], help="run a verification experiment")
    p.add_argument("check", choices=["colouring", "appendix-b", "appendix-c", "matern3", "geweke"],
                   help="colouring: density vs enumeration; appendix-b: thinning vs grid Cox counts; "
                        "appendix-c: symmetry identity, Jensen bound and empty-given-empty probabilities; "
                        "matern3: density chain, hard core, conditional counts; geweke: joint test")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("compare-samplers", parents=[common],
                       help="birth-death-move chain against the flawed samplers")
    p.add_argument("--observed", default="empty", help="'empty' or a CSV with x,y,g1")
    p.set_defaults(func=cmd_compare_samplers)
    return parser


def _overrides(args) -> dict:
    out: dict = {}
    if args.seed is not None:
        out["seed"] = args.seed
    run = {k: getattr(args, k) for k in ("chains", "iters", "burn") if getattr(args, k) is not None}
    if run:
        out["run"] = run
    return out


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = load_config(args.config, _overrides(args))
        return args.func(cfg, args)
    except (CoxthinError, ValueError, OSError, json.JSONDecodeError) as exc:
        err = {"error": type(exc).__name__, "message": str(exc)}
        if getattr(exc, "line", None) is not None:
            err["line"] = exc.line
        print(json.dumps(err), file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
