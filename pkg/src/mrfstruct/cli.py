"""Command-line interface: simulate, fit, summarize, exact, convert.

Exit codes: 0 success, 2 validation error, 1 I/O error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from .io import (
    attach_covariates,
    beta_document,
    checkpoint_document,
    format_grid,
    phi_document,
    read_checkpoint,
    read_grid,
    read_spec,
    read_trace,
    trace_header,
    truncate_trace,
    TraceWriter,
    write_checkpoint,
)
from .lattice import Dims, parse_type
from .mrf import MAX_EXACT_NODES, Grid, all_configs, exact_distribution, sample_field
from .parametrization import TiedState, phi_from_beta, project_sum_to_zero, tie_equal
from .sampler import DEFAULT_P_O_COVARIATES, INIT_CHOICES, Chain, SamplerConfig
from .summary import DEFAULT_BINS, format_report, summarize

log = logging.getLogger("mrfstruct")

EXIT_OK, EXIT_IO, EXIT_INVALID = 0, 1, 2


def _load_json(path) -> dict:
    if path is None:
        return {}
    data = json.loads(Path(path).read_text())
    if not isinstance(data, dict):
        raise ValueError(f"{path}: config must be a JSON object")
    return data


def _write_text(path, text: str) -> None:
    if path is None or path == "-":
        sys.stdout.write(text)
    else:
        Path(path).write_text(text)


def _dims(values) -> Dims | None:
    return None if values is None else Dims(*values)


# -- simulate -----------------------------------------------------------------

def cmd_simulate(args) -> int:
    cfg = _load_json(args.config)
    dims = _dims(args.dims)
    _, spec = read_spec(args.spec, dims)
    sweeps = args.sweeps if args.sweeps is not None else cfg.get("sweeps", 1000)
    seed = args.seed if args.seed is not None else cfg.get("seed", 0)
    if sweeps < 0:
        raise ValueError("sweeps must be non-negative")
    template = None
    if args.covariates:
        base = Grid(np.zeros((spec.dims.m, spec.dims.n)))
        template = attach_covariates(base, args.covariates)
    if spec.kappa and template is None:
        raise ValueError("a spec with kappa needs --covariates")
    if template is not None and template.n_covariates != len(spec.kappa):
        raise ValueError("number of covariate layers does not match kappa")
    grid = sample_field(spec, spec.dims, sweeps, np.random.default_rng(seed), template)
    _write_text(args.out, format_grid(Grid(grid.x)))
    log.info("simulated %dx%d field, black fraction %.4f", spec.dims.m, spec.dims.n, grid.x.mean())
    return EXIT_OK


# -- fit ----------------------------------------------------------------------

def _fit_config(args, data: Grid) -> SamplerConfig:
    raw = _load_json(args.config)
    for key in ("iterations", "seed", "thin", "aux_burn_in", "init"):
        val = getattr(args, key)
        if val is not None:
            raw[key] = val
    if args.debug:
        raw["debug"] = True
    if data.n_covariates and "proposal_probs" not in raw:
        raw["proposal_probs"] = DEFAULT_P_O_COVARIATES
    return SamplerConfig.from_dict(raw)


def fit_one(data_path: str, covariates: list, standardize: bool, config: SamplerConfig,
            out: str, checkpoint: str | None = None, checkpoint_every: int = 0,
            resume: str | None = None, stop_at: int | None = None) -> dict:
    """Run (or resume) one chain, streaming its trace to ``out``."""
    data = read_grid(data_path, covariates, standardize)
    start, state, counters, aux_runs = 0, None, None, 0
    if resume is not None and Path(resume).exists():
        start, state, counters, aux_runs, saved = read_checkpoint(resume)
        if saved.to_dict() != config.to_dict():
            log.warning("resuming with the configuration stored in the checkpoint")
        config = saved
        truncate_trace(out, start - 1)
        writer = TraceWriter(out, append=True)
    else:
        writer = TraceWriter(out, trace_header(data.dims, config, str(data_path)))
    chain = Chain(data, config, state, counters, aux_runs)
    stop = config.iterations if stop_at is None else min(stop_at, config.iterations)
    ckpt = checkpoint or (resume if resume else f"{out}.ckpt")

    def save(next_it: int) -> None:
        writer.flush()
        write_checkpoint(ckpt, checkpoint_document(next_it, chain.state, chain.counters,
                                                   chain.evaluator.aux_runs, config, data.dims))

    with writer:
        for it in range(start, stop):
            accept = chain.step(it)
            if (it + 1) % config.thin == 0:
                writer.write(chain.record(it, accept))
            if checkpoint_every and (it + 1) % checkpoint_every == 0:
                save(it + 1)
        if stop < config.iterations:
            save(stop)
            log.info("stopped at iteration %d; checkpoint written to %s", stop, ckpt)
    summary = {
        "iterations": stop,
        "rates": chain.counters.rates(),
        "counters": chain.counters.to_json(),
        "aux_simulations": chain.evaluator.aux_runs,
    }
    Path(f"{out}.accept.json").write_text(json.dumps(summary, indent=1, sort_keys=True) + "\n")
    if data.has_boundary:
        log.info("boundary Gibbs scans performed: %d", chain.counters.boundary_scans)
    return summary


def _fit_worker(job: tuple) -> dict:
    return fit_one(*job)


def cmd_fit(args) -> int:
    data = read_grid(args.data, args.covariates, args.standardize)
    config = _fit_config(args, data)
    Chain(data, config)  # validates config against the data before any output
    if args.chains <= 1:
        fit_one(args.data, args.covariates, args.standardize, config, args.out,
                args.checkpoint, args.checkpoint_every, args.resume, args.stop_at)
        return EXIT_OK
    jobs = []
    for k in range(args.chains):
        cfg_k = SamplerConfig.from_dict({**config.to_dict(), "seed": config.seed + k})
        out_k = f"{args.out}.chain{k}"
        jobs.append((args.data, args.covariates, args.standardize, cfg_k, out_k,
                     None, args.checkpoint_every, None, args.stop_at))
    with ProcessPoolExecutor(max_workers=args.chains) as pool:
        list(pool.map(_fit_worker, jobs))
    return EXIT_OK


# -- summarize -----------------------------------------------------------------

def cmd_summarize(args) -> int:
    cfg = _load_json(args.config)
    header, records = read_trace(args.trace)
    if header is None:
        raise ValueError("trace has no header line")
    dims = Dims(*header["dims"])
    burn_in = args.burn_in if args.burn_in is not None else cfg.get("burn_in", 10_000)
    if records and burn_in > records[-1]["iter"]:
        raise ValueError(f"burn-in {burn_in} is not shorter than the trace")
    type_texts = args.types if args.types is not None else cfg.get("types")
    types = None if type_texts is None else [parse_type(t, dims) for t in type_texts]
    edges = args.edges if args.edges is not None else cfg.get("edges")
    if isinstance(edges, str):
        edges = [float(v) for v in edges.split(",")]
    bins = args.bins if args.bins is not None else cfg.get("bins", DEFAULT_BINS)
    report = summarize(records, dims, burn_in, types, bins, edges,
                       grouping=not args.no_grouping, top=args.top)
    accept_path = Path(args.accept) if args.accept else Path(f"{args.trace}.accept.json")
    if accept_path.exists():
        report.acceptance_rates = json.loads(accept_path.read_text()).get("rates", {})
    if args.out:
        Path(args.out).write_text(json.dumps(report.to_json(), indent=1) + "\n")
    sys.stdout.write(format_report(report, args.top))
    return EXIT_OK


# -- exact ---------------------------------------------------------------------

def cmd_exact(args) -> int:
    _, spec = read_spec(args.spec, _dims(args.dims))
    dims = spec.dims
    if dims.size > MAX_EXACT_NODES:
        raise ValueError(f"exact enumeration is limited to {MAX_EXACT_NODES} nodes")
    probs = exact_distribution(spec, dims)
    configs = all_configs(dims).reshape(len(probs), -1)
    lines = [f"# dims {dims.m} {dims.n}", "# code config probability"]
    for code, (bits, p) in enumerate(zip(configs, probs)):
        lines.append(f"{code} {''.join(map(str, bits))} {float(p)!r}")
    _write_text(args.out, "\n".join(lines) + "\n")
    return EXIT_OK


# -- convert -------------------------------------------------------------------

def cmd_convert(args) -> int:
    form, spec = read_spec(args.spec, _dims(args.dims))
    target = args.to or ("beta" if form == "phi" else "phi")
    if target == "beta":
        doc = beta_document(spec.beta, spec.dims, spec.kappa)
    else:
        phi = phi_from_beta(spec.beta, spec.dims)
        if args.tie is not None:
            z = tie_equal(phi, args.tie)
        elif form == "phi":
            z = spec.z
        else:
            z = TiedState.untied(phi)
        if args.center:
            z = TiedState(z.cells, tuple(project_sum_to_zero(z.phi).tolist()))
        doc = phi_document(z, spec.dims, spec.kappa)
    _write_text(args.out, json.dumps(doc) + "\n")
    return EXIT_OK


# -- parser --------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help="random seed")
    common.add_argument("--config", default=None, help="JSON config file")
    common.add_argument("--out", default=None, help="output path (stdout if omitted, where allowed)")
    common.add_argument("-q", "--quiet", action="store_true", help="only log warnings")

    parser = argparse.ArgumentParser(
        prog="mrfstruct",
        description="Bayesian structure inference for stationary binary MRFs on torus lattices.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", parents=[common], help="Gibbs-sample a field from a model spec")
    p.add_argument("--spec", required=True)
    p.add_argument("--dims", type=int, nargs=2, metavar=("M", "N"))
    p.add_argument("--sweeps", type=int, default=None)
    p.add_argument("--covariates", nargs="*", default=[])
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("fit", parents=[common], help="run the RJMCMC sampler on a grid")
    p.add_argument("--data", required=True)
    p.add_argument("--covariates", nargs="*", default=[])
    p.add_argument("--standardize", action="store_true", help="standardize covariate layers")
    p.add_argument("--iterations", type=int, default=None)
    p.add_argument("--thin", type=int, default=None)
    p.add_argument("--aux-burn-in", dest="aux_burn_in", type=int, default=None)
    p.add_argument("--init", choices=INIT_CHOICES, default=None,
                   help="start state: the empty structure, or an untied nearest-neighbour pseudo-likelihood fit")
    p.add_argument("--debug", action="store_true", help="check state invariants every iteration")
    p.add_argument("--chains", type=int, default=1)
    p.add_argument("--checkpoint", default=None)
    p.add_argument("--checkpoint-every", dest="checkpoint_every", type=int, default=0)
    p.add_argument("--resume", default=None, help="checkpoint file to resume from")
    p.add_argument("--stop-at", dest="stop_at", type=int, default=None,
                   help="stop after this many iterations and write a checkpoint")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("summarize", parents=[common], help="posterior summaries of a trace")
    p.add_argument("--trace", required=True)
    p.add_argument("--burn-in", dest="burn_in", type=int, default=None)
    p.add_argument("--types", nargs="*", default=None, help="clique types, e.g. '[[0,0],[0,1]]'")
    p.add_argument("--bins", type=int, default=None)
    p.add_argument("--edges", default=None, help="comma-separated histogram edges")
    p.add_argument("--no-grouping", dest="no_grouping", action="store_true")
    p.add_argument("--top", type=int, default=10)
    p.add_argument("--accept", default=None, help="acceptance summary file")
    p.set_defaults(func=cmd_summarize)

    p = sub.add_parser("exact", parents=[common], help="exact distribution on a tiny lattice")
    p.add_argument("--spec", required=True)
    p.add_argument("--dims", type=int, nargs=2, metavar=("M", "N"))
    p.set_defaults(func=cmd_exact)

    p = sub.add_parser("convert", parents=[common], help="convert between beta and phi specs")
    p.add_argument("--spec", required=True)
    p.add_argument("--dims", type=int, nargs=2, metavar=("M", "N"))
    p.add_argument("--to", choices=("phi", "beta"), default=None)
    p.add_argument("--tie", type=float, default=None, metavar="TOL",
                   help="tie types whose phi values agree within TOL")
    p.add_argument("--center", action="store_true", help="center phi cells to sum zero")
    p.set_defaults(func=cmd_convert)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO,
                        format="%(levelname)s: %(message)s")
    if args.command == "fit" and args.out is None:
        parser.error("fit needs --out")
    try:
        return args.func(args)
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (ValueError, KeyError, TypeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
