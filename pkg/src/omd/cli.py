"""Command-line interface.

Exit status is 0 on success, 2 for usage errors and 1 for runtime failures,
which are reported on standard error. Outputs given as bare file names land
in ``$OMD_OUTPUT_DIR`` (default: the working directory).
"""

from __future__ import annotations

import argparse
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import io
from .dpt import CountTensor, dpt_generate, sample_dpt_params
from .errors import InvalidArgumentError, InvalidParameterError, SamplerError
from .evaluation import (
    HeldOutCells,
    SequenceSplit,
    SplitSpec,
    TensorSplit,
    TruthSpec,
    dpt_metrics,
    experiment_from_config,
    hmm_metrics,
    job_seed,
    make_truth,
    run_experiment,
    split,
)
from .events import PRESETS, generate_event_stream, ingest_events
from .hmm import MISSING, HmmParams, SequenceDataset, hmm_generate
from .inference import DptModel, HmmModel, SamplerConfig, posterior_mean, run_chain
from .priors import BandSpec, PriorConfig, check_well_ordered, is_stochastic, sample_bmd, sample_omd, sample_smd

logger = logging.getLogger("omd")


class UsageError(Exception):
    """Bad flag values detected after argument parsing."""


def _floats(text):
    try:
        return [float(v) for v in str(text).split(",") if v.strip()]
    except ValueError as err:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from err


def _out_path(value, default_name) -> Path:
    if value:
        return Path(value)
    out = io.output_dir()
    out.mkdir(parents=True, exist_ok=True)
    return out / default_name


def _prior(name) -> PriorConfig:
    try:
        return PriorConfig.from_name(name)
    except (InvalidArgumentError, InvalidParameterError, ValueError) as err:
        raise UsageError(str(err)) from err


def _sampler(args) -> SamplerConfig:
    try:
        return SamplerConfig(algorithm=args.algorithm, n_samples=args.samples, burn_in=args.burn_in,
                             thin=args.thin, n_leapfrog=args.leapfrog)
    except InvalidArgumentError as err:
        raise UsageError(str(err)) from err


# ---------------------------------------------------------------- subcommands

def cmd_sample_prior(args):
    rng = np.random.default_rng(args.seed)
    if args.family == "bmd":
        alpha3 = tuple(args.alpha) if args.alpha else (1.0, 1.0, 1.0)
        if len(alpha3) != 3:
            raise UsageError("bmd takes --alpha with three values (escalating, de-escalating, steady)")
        try:
            band = BandSpec(args.bandwidth, args.K)
        except (InvalidArgumentError, InvalidParameterError) as err:
            raise UsageError(str(err)) from err
        m = sample_bmd(band, alpha3, rng)
        alpha = alpha3
    else:
        A = args.A or (len(args.alpha) if args.alpha else None)
        if A is None:
            raise UsageError(f"{args.family} needs --A or --alpha")
        alpha = np.asarray(args.alpha if args.alpha else np.ones(A), dtype=float)
        if alpha.size != A or np.any(alpha <= 0):
            raise UsageError(f"--alpha needs {A} positive values")
        m = sample_omd(args.K, alpha, rng)[0] if args.family == "omd" else sample_smd(args.K, alpha, rng)
    path = _out_path(args.out, f"{args.family}_prior.csv")
    io.write_matrix(path, m, family=args.family, alpha=alpha, seed=args.seed)
    print(path)


def cmd_check_order(args):
    m, _ = io.read_matrix(args.matrix)
    if not is_stochastic(m, tol=args.stochastic_tol):
        print("not stochastic")
        return 1 if args.strict else 0
    ordered = check_well_ordered(m, tol=args.tol)
    print("ordered" if ordered else "not ordered")
    return 0 if ordered or not args.strict else 1


def cmd_generate_synthetic(args):
    rng = np.random.default_rng(args.seed)
    path = _out_path(args.out, f"{args.model}_data.csv")
    stem = path.with_suffix("")
    if args.model == "hmm":
        try:
            truth_spec = TruthSpec(args.shape, K=args.K, A=args.A, emission_width=args.emission_width,
                                   band_self=args.band_self, stickiness=args.stickiness, decay=args.decay)
        except InvalidArgumentError as err:
            raise UsageError(str(err)) from err
        N = args.N or (100 if args.few_shot else 10000)
        truth = make_truth(truth_spec)
        data, states = hmm_generate(truth, N, args.T, rng)
        io.write_sequences(path, data, shape=args.shape, seed=args.seed)
        io.write_sequences(f"{stem}_states.csv", SequenceDataset(states, truth.K), kind="latent states")
        io.write_matrix(f"{stem}_transition.csv", truth.transition, family="truth")
        io.write_matrix(f"{stem}_emission.csv", truth.emission, family="truth")
    else:
        params = sample_dpt_params(args.V, args.C, args.K, args.A, args.T, _prior(args.prior), rng,
                                   tau0=args.tau0)
        tensor = dpt_generate(params, rng)
        io.write_tensor(path, tensor, prior=args.prior, seed=args.seed, tau0=args.tau0)
        io.write_matrix(f"{stem}_transition.csv", params.transition, family="truth")
        io.write_matrix(f"{stem}_emission.csv", params.emission, family="truth")
    print(path)


def cmd_split(args):
    if args.mode == "imputation":
        spec = SplitSpec.imputation(args.fraction if args.fraction is not None else 0.3, seed=args.seed)
    else:
        spec = SplitSpec.forecasting(args.fraction if args.fraction is not None else 0.7, seed=args.seed)
    data = io.read_tensor(args.data) if args.model == "dpt" else io.read_sequences(args.data)
    try:
        parts = split(data, spec)
    except InvalidArgumentError as err:
        raise UsageError(str(err)) from err
    stem = _out_path(args.out, Path(args.data).stem + ".csv").with_suffix("")
    train_path, test_path = Path(f"{stem}_train.csv"), Path(f"{stem}_test.csv")
    info = {"split_mode": parts.mode, "t_cut": parts.t_cut, "seed": args.seed}
    if args.model == "dpt":
        io.write_tensor(train_path, parts.train, **info)
        held = CountTensor(data.dims, parts.test.cells, parts.test.counts, mask=parts.test.cells,
                          labels=data.labels)
        io.write_tensor(test_path, held, **info)
    else:
        io.write_sequences(train_path, parts.train, **info)
        io.write_sequences(test_path, parts.test, **info)
    print(train_path)
    print(test_path)


def _fit_one(job):
    model, config, seed = job
    return run_chain(config, model, seed=seed)


def cmd_fit(args):
    prior = _prior(args.prior)
    config = _sampler(args)
    if args.model == "hmm":
        data = io.read_sequences(args.data)
        model = HmmModel(data, args.K, prior)
    else:
        data = io.read_tensor(args.data)
        model = DptModel(data, args.C, args.K, prior, tau0=args.tau0, alpha0=args.alpha0,
                         separate_receiver=args.separate_receiver)
    seeds = [args.seed] if args.chains == 1 else [job_seed(args.seed, c, stream=3) for c in range(args.chains)]
    jobs = [(model, config, s) for s in seeds]
    if args.threads > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=args.threads) as pool:
            traces = list(pool.map(_fit_one, jobs))
    else:
        traces = [_fit_one(j) for j in jobs]
    path = _out_path(args.out, f"{args.model}_trace.jsonl")
    meta = {"model": args.model, "prior": prior.name, "K": args.K, "data": str(args.data)}
    if args.model == "dpt":
        meta.update(C=args.C, tau0=args.tau0, alpha0=args.alpha0)
    for c, trace in enumerate(traces):
        out = path if len(traces) == 1 else path.with_name(f"{path.stem}.chain{c}{path.suffix}")
        io.write_trace(out, trace, chain=c, **meta)
        logger.info("chain %d: acceptance %.3f", c, trace.acceptance_rate)
        print(out)


def _hmm_split(train: SequenceDataset, test: SequenceDataset, meta):
    mode = meta.get("split_mode")
    if mode == "forecasting" or (mode is None and test.N == train.N and test.T != train.T):
        full = np.concatenate([train.obs, test.obs], axis=1)
        return SequenceSplit(train, test, "forecasting", train.T), full
    if train.obs.shape != test.obs.shape:
        raise InvalidArgumentError("imputation train and test must share a shape")
    full = np.where(test.obs != MISSING, test.obs, train.obs)
    return SequenceSplit(train, test, "imputation"), full


def cmd_evaluate(args):
    trace, meta = io.read_trace(args.trace)
    model = args.model or meta.get("model", "hmm")
    config = args.config or meta.get("prior", "unknown")
    if model == "hmm":
        train, test = io.read_sequences(args.train), io.read_sequences(args.test)
        data_split, full = _hmm_split(train, test, io.read_sidecar(args.test))
        if not (args.truth_transition and args.truth_emission):
            raise UsageError("hmm evaluation needs --truth-transition and --truth-emission")
        truth = HmmParams.from_matrices(io.read_matrix(args.truth_transition)[0],
                                        io.read_matrix(args.truth_emission)[0])
        states = io.read_sequences(args.truth_states).obs if args.truth_states else None
        if states is None:
            raise UsageError("hmm evaluation needs --truth-states")
        metrics = hmm_metrics(truth, states, full, trace, data_split)
        mode = data_split.mode
    else:
        test = io.read_tensor(args.test)
        side = io.read_sidecar(args.test)
        cells = test.mask if test.mask is not None else test.coords
        held = HeldOutCells(cells, test.count_at(cells))
        mode = side.get("split_mode", "imputation")
        data_split = TensorSplit(io.read_tensor(args.train), held, mode, side.get("t_cut"))
        metrics = dpt_metrics(trace, data_split, float(meta.get("tau0", 1.0)), float(meta.get("alpha0", 1.0)))
    seed = meta.get("seed", 0)
    rows = [(args.experiment_id, seed, config, mode, name, value) for name, value in metrics.items()]
    path = _out_path(args.out, "metrics.csv")
    io.write_metric_rows(path, rows, append=args.append)
    print(path)


def cmd_ingest_events(args):
    countries = None
    if args.countries:
        p = Path(args.countries)
        countries = (p.read_text().split() if p.exists() else [c.strip() for c in args.countries.split(",")])
    tensor, stats = ingest_events(io.read_events(args.events), countries=countries, start=args.start,
                                  n_months=args.months, return_stats=True)
    path = _out_path(args.out, "events.csv")
    io.write_tensor(path, tensor)
    print(f"kept {stats.kept} records, dropped {stats.self_targeted} self-targeted, "
          f"skipped {stats.n_skipped} {dict(sorted(stats.skipped.items()))}", file=sys.stderr)
    print(path)


def cmd_generate_events(args):
    rng = np.random.default_rng(args.seed)
    records, tensor = generate_event_stream(args.preset, rng, start=args.start)
    path = _out_path(args.out, "events.tsv")
    io.write_events(path, records)
    print(path)


def cmd_summarize_posterior(args):
    trace, meta = io.read_trace(args.trace)
    out_dir = Path(args.out_dir) if args.out_dir else io.output_dir()
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    for name in trace.block_names:
        mean = posterior_mean(trace, name)
        if name == "core":
            # one (C*C) x K table per time step: row c1*C + c2, column k
            T, C, _, K = mean.shape
            for t in range(T):
                p = out_dir / f"core_t{t:03d}.csv"
                io.write_matrix(p, mean[t].reshape(C * C, K), block="core", t=t)
                written.append(p)
            continue
        p = out_dir / f"{name}.csv"
        io.write_matrix(p, np.atleast_2d(mean), block=name,
                        ordered=bool(check_well_ordered(mean)) if name in ("emission", "transition") else None)
        written.append(p)
    for p in written:
        print(p)


def cmd_run_experiment(args):
    cfg = io.read_config(args.config)
    try:
        spec = experiment_from_config(cfg)
    except (InvalidArgumentError, InvalidParameterError, ValueError) as err:
        raise UsageError(str(err)) from err
    if args.seed:
        spec.seeds = tuple(args.seed + s for s in spec.seeds)
    result = run_experiment(spec, n_jobs=args.threads)
    path = _out_path(args.out, f"{spec.experiment_id}_metrics.csv")
    io.write_metric_rows(path, result.rows())
    for config, report in result.reports.items():
        for metric, (mean, sd) in report.summary().items():
            print(f"{config}\t{metric}\t{mean:.6g}\t{sd:.6g}", file=sys.stderr)
    for seed, config, error in result.failures:
        print(f"seed {seed} {config}: {error}", file=sys.stderr)
    print(path)
    return 1 if result.failures and not any(r.per_seed for r in result.reports.values()) else 0


# ---------------------------------------------------------------- parser

def _add_sampler_flags(p):
    p.add_argument("--algorithm", choices=("adaptive-rwm", "hmc"), default="adaptive-rwm")
    p.add_argument("--samples", type=int, default=1000, help="kept draws S")
    p.add_argument("--burn-in", type=int, default=200)
    p.add_argument("--thin", type=int, default=1)
    p.add_argument("--leapfrog", type=int, default=16, help="HMC leapfrog steps")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="omd", description="Ordered matrix Dirichlet priors for state-space models.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("sample-prior", help="draw one stochastic matrix from a prior")
    p.add_argument("--family", choices=("omd", "smd", "bmd"), required=True)
    p.add_argument("--K", type=int, required=True)
    p.add_argument("--A", type=int)
    p.add_argument("--alpha", type=_floats, help="concentrations; three values for bmd")
    p.add_argument("--bandwidth", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    p.set_defaults(func=cmd_sample_prior)

    p = sub.add_parser("check-order", help="test whether a matrix is well-ordered")
    p.add_argument("matrix")
    p.add_argument("--tol", type=float, default=1e-12)
    p.add_argument("--stochastic-tol", type=float, default=1e-10)
    p.add_argument("--strict", action="store_true", help="exit 1 when not ordered")
    p.set_defaults(func=cmd_check_order)

    p = sub.add_parser("generate-synthetic", help="simulate a dataset from a stylised truth")
    p.add_argument("--model", choices=("hmm", "dpt"), default="hmm")
    p.add_argument("--shape", choices=("banded", "bonbon", "triangle"), default="banded")
    p.add_argument("--K", type=int, default=10)
    p.add_argument("--A", type=int, default=10)
    p.add_argument("--N", type=int)
    p.add_argument("--T", type=int, default=10)
    p.add_argument("--few-shot", action="store_true")
    p.add_argument("--emission-width", type=float, default=0.8)
    p.add_argument("--band-self", type=float, default=0.8)
    p.add_argument("--stickiness", type=float, default=0.9)
    p.add_argument("--decay", type=float, default=0.5)
    p.add_argument("--V", type=int, default=10)
    p.add_argument("--C", type=int, default=3)
    p.add_argument("--prior", default="omd+omd", help="dpt: prior of the generating parameters")
    p.add_argument("--tau0", type=float, default=100.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    p.set_defaults(func=cmd_generate_synthetic)

    p = sub.add_parser("split", help="write train and test views of a dataset")
    p.add_argument("data")
    p.add_argument("--model", choices=("hmm", "dpt"), default="hmm")
    p.add_argument("--mode", choices=("imputation", "forecasting"), default="forecasting")
    p.add_argument("--fraction", type=float, help="mask fraction (imputation) or train fraction (forecasting)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="path whose stem prefixes the _train/_test files")
    p.set_defaults(func=cmd_split)

    p = sub.add_parser("fit", help="run MCMC and write a JSON-lines trace")
    p.add_argument("--model", choices=("hmm", "dpt"), default="hmm")
    p.add_argument("--data", required=True)
    p.add_argument("--prior", default="omd+omd", help="emission+transition, e.g. omd+omd, smd+bmd")
    p.add_argument("--K", type=int, required=True)
    p.add_argument("--C", type=int, default=3)
    p.add_argument("--tau0", type=float, default=1.0)
    p.add_argument("--alpha0", type=float, default=1.0)
    p.add_argument("--separate-receiver", action="store_true")
    _add_sampler_flags(p)
    p.add_argument("--chains", type=int, default=1)
    p.add_argument("--threads", type=int, default=1, help="parallel chains")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("evaluate", help="score a trace against held-out data")
    p.add_argument("--trace", required=True)
    p.add_argument("--train", required=True)
    p.add_argument("--test", required=True)
    p.add_argument("--model", choices=("hmm", "dpt"))
    p.add_argument("--truth-transition")
    p.add_argument("--truth-emission")
    p.add_argument("--truth-states")
    p.add_argument("--config", help="prior label for the report (default: from the trace)")
    p.add_argument("--experiment-id", default="cli")
    p.add_argument("--append", action="store_true")
    p.add_argument("--out")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("ingest-events", help="bin a TSV of events into a monthly count tensor")
    p.add_argument("events")
    p.add_argument("--countries", help="comma list or file of country codes")
    p.add_argument("--start", help="first month, YYYY-MM")
    p.add_argument("--months", type=int)
    p.add_argument("--out")
    p.set_defaults(func=cmd_ingest_events)

    p = sub.add_parser("generate-events", help="write a synthetic event TSV from a preset")
    p.add_argument("--preset", choices=PRESETS, default=PRESETS[0])
    p.add_argument("--start", default="2015-01")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    p.set_defaults(func=cmd_generate_events)

    p = sub.add_parser("summarize-posterior", help="posterior-mean tables of every block")
    p.add_argument("trace")
    p.add_argument("--out-dir")
    p.set_defaults(func=cmd_summarize_posterior)

    p = sub.add_parser("run-experiment", help="run a sweep described by a key = value file")
    p.add_argument("config")
    p.add_argument("--threads", type=int, default=1, help="parallel jobs")
    p.add_argument("--seed", type=int, default=0, help="offset added to every configured seed")
    p.add_argument("--out")
    p.set_defaults(func=cmd_run_experiment)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    if getattr(args, "threads", 1) < 1:
        print("omd: error: --threads must be >= 1", file=sys.stderr)
        return 2
    try:
        code = args.func(args)
    except UsageError as err:
        print(f"omd {args.command}: error: {err}", file=sys.stderr)
        return 2
    except (OSError, InvalidArgumentError, InvalidParameterError, SamplerError, ValueError) as err:
        print(f"omd {args.command}: {type(err).__name__}: {err}", file=sys.stderr)
        return 1
    return int(code or 0)


cli_main = main

if __name__ == "__main__":
    sys.exit(main())
