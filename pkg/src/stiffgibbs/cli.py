"""Command-line interface.

Commands: simulate, calibrate, monitor, assess, diagnose.  JSON/CSV files are
the data contract; PNG figures are rendered alongside them in the report
directory unless --no-figures is given.

Exit codes: 0 success, 2 input/schema errors, 3 numerical or convergence
failures (message carries the Gibbs iteration index), 4 when warnings (never
stationary, degenerate R-hat) are promoted by --strict.
"""

from __future__ import annotations

import argparse
import sys
import time
from pathlib import Path

import numpy as np

from . import io
from .bench import apply_damage, build_shear_building, simulate_modal_data
from .damage import calibrate, damage_probability, monitor
from .engine import GibbsConfig, detect_burn_in, run_parallel_chains, split_r_hat
from .errors import ConvergenceError, InputError, NumericalError

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_NUMERICAL = 3
EXIT_STRICT = 4


def _add_shared(parser: argparse.ArgumentParser):
    parser.add_argument("--algorithm", choices=("exact", "marginal"), default="marginal",
                        help="sampler variant: keep the equation-error precision as a "
                             "variable (exact) or integrate it out (marginal)")
    parser.add_argument("--samples", type=int, default=10000, metavar="N",
                        help="number of Gibbs samples (default 10000)")
    parser.add_argument("--seed", type=int, default=0, help="64-bit RNG seed")
    parser.add_argument("--chains", type=int, default=1, metavar="C",
                        help="number of independent chains (>=2 adds an ergodicity report)")
    parser.add_argument("--sparse", choices=("on", "off"), default=None,
                        help="impose sparsity on the stiffness change (needs a calibration value)")
    parser.add_argument("--burnin", default="auto",
                        help="burn-in: 'auto' (Geweke-style detection, or n/5 for the "
                             "monitoring stage) or an explicit count")
    parser.add_argument("--strict", action="store_true",
                        help="promote warnings (non-stationary chain, degenerate R-hat) to exit 4")
    parser.add_argument("--out", required=True, metavar="DIR", help="output directory")
    parser.add_argument("--no-figures", action="store_true", help="skip PNG rendering")


def _parse_burnin(value, n_samples: int, default_auto):
    if value == "auto":
        return default_auto
    try:
        count = int(value)
    except ValueError:
        raise InputError(f"--burnin must be 'auto' or an integer, got {value!r}") from None
    if count < 0 or count >= n_samples:
        raise InputError(f"--burnin {count} out of range for {n_samples} samples")
    return count


def _config(args, sparse_default=False) -> GibbsConfig:
    sparse = sparse_default if args.sparse is None else (args.sparse == "on")
    return GibbsConfig(algorithm=args.algorithm, n_samples=args.samples, seed=args.seed,
                       n_chains=args.chains, sparse_mode=sparse)


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_simulate(args, argv) -> int:
    started = time.time()
    spec, damage = io.load_benchmark_spec(args.spec)
    if args.seed is not None:
        spec = type(spec)(**{**spec.__dict__, "seed": args.seed})
    model, labels = build_shear_building(spec)
    theta_true = apply_damage(np.ones(model.n_theta), damage)
    rng = np.random.default_rng(np.random.SeedSequence(spec.seed))
    data, truth = simulate_modal_data(model, theta_true, spec, rng)
    out = _out_dir(args)
    io.save_model(out / "model.json", model)
    io.save_dataset(out / "dataset.json", data)
    io.save_ground_truth(out / "ground_truth.json", truth)
    io.write_manifest(out, "simulate", argv, [args.spec],
                      ["model.json", "dataset.json", "ground_truth.json"],
                      spec.seed, started)
    return EXIT_OK


def cmd_calibrate(args, argv) -> int:
    started = time.time()
    model = io.load_model(args.model)
    data = io.load_dataset(args.data)
    config = _config(args, sparse_default=False)
    out = _out_dir(args)
    warnings = []
    outputs = []

    if config.n_chains >= 2:
        chains, report = run_parallel_chains(data, model, config)
        for c, chain in enumerate(chains):
            name = f"chain_{c + 1}.csv"
            io.save_chain(out / name, chain)
            outputs += [name, f"chain_{c + 1}.json"]
        _write_ergodicity(out / "ergodicity.json", report)
        outputs.append("ergodicity.json")
        if report.degenerate:
            warnings.append("identical chains detected; R-hat undefined")
        if not all(report.stationary):
            warnings.append("some chains never reached stationarity")
        if not args.no_figures:
            from . import plots
            plots.plot_theta_trace(chains[0], out / "theta_trace.png")
            plots.plot_rhat(report, out / "rhat.png")
            outputs += ["theta_trace.png", "rhat.png"]
        chain = chains[0]
    else:
        chain = calibrate(data, model, config)
        io.save_chain(out / "chain.csv", chain)
        outputs += ["chain.csv", "chain.json"]
        result = detect_burn_in(chain)
        if not result.stationary:
            warnings.append("chain never reached stationarity by the Geweke criterion")
        if not args.no_figures:
            from . import plots
            plots.plot_theta_trace(chain, out / "theta_trace.png", burn_in=result.index)
            outputs.append("theta_trace.png")

    io.write_manifest(out, "calibrate", argv, [args.model, args.data], outputs,
                      args.seed, started)
    return _finish(warnings, args.strict)


def cmd_monitor(args, argv) -> int:
    started = time.time()
    model = io.load_model(args.model)
    data = io.load_dataset(args.data)
    calib_chain = io.load_chain(args.calib_chain)
    config = _config(args, sparse_default=True)
    monitor_burnin = _parse_burnin(args.burnin, args.samples + 1, None)
    calib_burnin = args.calib_burnin
    if calib_burnin != "auto":
        calib_burnin = int(calib_burnin)
    pairs = monitor(data, model, calib_chain, config,
                    calib_burn_in=calib_burnin,
                    burn_in=monitor_burnin,
                    inject_during_burnin=args.inject_during_burnin,
                    laplace=args.laplace)
    out = _out_dir(args)
    io.save_pairs(out / "pairs.csv", pairs)
    io.write_manifest(out, "monitor", argv,
                      [args.model, args.data, args.calib_chain, Path(args.calib_chain).with_suffix(".json")],
                      ["pairs.csv"], args.seed, started)
    return EXIT_OK


def cmd_assess(args, argv) -> int:
    started = time.time()
    out = _out_dir(args)
    warnings = []
    outputs = []
    inputs = []

    if args.pairs:
        pairs = io.load_pairs(args.pairs)
        inputs.append(args.pairs)
    else:
        if not (args.model and args.data_u and args.data_d):
            raise InputError("assess needs either --pairs or all of --model, --data-u, --data-d")
        model = io.load_model(args.model)
        data_u = io.load_dataset(args.data_u)
        data_d = io.load_dataset(args.data_d)
        inputs += [args.model, args.data_u, args.data_d]
        config = _config(args, sparse_default=False)
        calib_chain = calibrate(data_u, model, config)
        io.save_chain(out / "calibration_chain.csv", calib_chain)
        outputs += ["calibration_chain.csv", "calibration_chain.json"]
        result = detect_burn_in(calib_chain)
        if not result.stationary:
            warnings.append("calibration chain never reached stationarity")
        monitor_burnin = _parse_burnin(args.burnin, args.samples + 1, None)
        pairs = monitor(data_d, model, calib_chain, config,
                        burn_in=monitor_burnin,
                        inject_during_burnin=args.inject_during_burnin,
                        laplace=args.laplace)
        io.save_pairs(out / "pairs.csv", pairs)
        outputs.append("pairs.csv")

    curves = damage_probability(pairs)
    io.save_curves(out / "damage_curves.csv", curves, summary_path=out / "damage_summary.json")
    outputs += ["damage_curves.csv", "damage_summary.json"]
    if not args.no_figures:
        from . import plots
        plots.plot_damage_curves(curves, out / "damage_curves.png")
        outputs.append("damage_curves.png")
    io.write_manifest(out, "assess", argv, inputs, outputs, args.seed, started)
    return _finish(warnings, args.strict)


def cmd_diagnose(args, argv) -> int:
    started = time.time()
    chains = [io.load_chain(path) for path in args.chain]
    out = _out_dir(args)
    warnings = []
    outputs = []

    results = [detect_burn_in(c) for c in chains]
    payload = {"chains": []}
    for path, chain, res in zip(args.chain, chains, results):
        payload["chains"].append({
            "file": str(path),
            "burn_in": res.index,
            "stationary": res.stationary,
            "window": res.window,
            "z_threshold": res.z_threshold,
        })
        if not res.stationary:
            warnings.append(f"{path}: never stationary; burn-in reported as chain length")
    if len(chains) >= 2:
        kept = [c.theta[r.index:] if r.stationary else c.theta[len(c) // 2:]
                for c, r in zip(chains, results)]
        degenerate = any(np.array_equal(chains[i].theta, chains[j].theta)
                         for i in range(len(chains)) for j in range(i + 1, len(chains)))
        r_hat = split_r_hat(kept)
        payload["r_hat"] = {lab: (None if not np.isfinite(v) else float(v))
                            for lab, v in zip(chains[0].labels, r_hat)}
        payload["degenerate"] = degenerate
        if degenerate:
            warnings.append("identical chains supplied; R-hat undefined")

    io._write_json(out / "diagnosis.json", payload)
    outputs.append("diagnosis.json")
    for k, (chain, res) in enumerate(zip(chains, results)):
        stem = f"trace_{k + 1}"
        _write_trace_csv(out / f"{stem}.csv", chain, res)
        outputs.append(f"{stem}.csv")
        if not args.no_figures:
            from . import plots
            plots.plot_theta_trace(chain, out / f"{stem}.png",
                                   burn_in=res.index if res.stationary else None)
            outputs.append(f"{stem}.png")
    io.write_manifest(out, "diagnose", argv,
                      list(args.chain) + [str(Path(p).with_suffix(".json")) for p in args.chain],
                      outputs, 0, started)
    return _finish(warnings, args.strict)


def _write_trace_csv(path, chain, result):
    """Per-parameter trace plus the burn-in scan, for external plotting."""
    import csv as _csv
    with open(path, "w", newline="") as fh:
        writer = _csv.writer(fh)
        writer.writerow(["iteration"] + [f"theta_{lab}" for lab in chain.labels] + ["z_max"])
        z = np.full(len(chain), np.nan)
        z[result.candidates] = result.z_max
        for n in range(len(chain)):
            row = [str(n)] + [repr(float(v)) for v in chain.theta[n]]
            row.append("" if np.isnan(z[n]) else repr(float(z[n])))
            writer.writerow(row)


def _write_ergodicity(path, report):
    io._write_json(path, {
        "r_hat": {lab: (None if not np.isfinite(v) else float(v))
                  for lab, v in zip(report.labels, report.r_hat)},
        "chain_means": [[float(v) for v in row] for row in report.chain_means],
        "chain_se": [[float(v) for v in row] for row in report.chain_se],
        "burn_in": list(report.burn_in),
        "stationary": list(report.stationary),
        "degenerate": report.degenerate,
    })


def _finish(warnings: list[str], strict: bool) -> int:
    for message in warnings:
        print(f"warning: {message}", file=sys.stderr)
    if warnings and strict:
        return EXIT_STRICT
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="stiffgibbs",
        description="Bayesian stiffness identification and damage assessment "
                    "from modal data via Gibbs sampling")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="generate a synthetic benchmark dataset")
    p.add_argument("spec", help="benchmark spec JSON")
    p.add_argument("--seed", type=int, default=None, help="override the spec seed")
    p.add_argument("--out", required=True, metavar="DIR")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("calibrate", help="run the sampler on calibration-stage data")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    _add_shared(p)
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("monitor", help="run the monitoring-stage sampler against a calibration chain")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--calib-chain", required=True, help="calibration chain CSV")
    p.add_argument("--calib-burnin", default="auto",
                   help="calibration-chain burn-in for the resampling pool ('auto' or count)")
    p.add_argument("--inject-during-burnin", action="store_true",
                   help="consume calibration draws during monitoring burn-in too")
    p.add_argument("--laplace", action="store_true",
                   help="use the calibration posterior mean instead of resampling (fast shortcut)")
    _add_shared(p)
    p.set_defaults(func=cmd_monitor)

    p = sub.add_parser("assess", help="two-stage damage assessment (calibrate + monitor + curves)")
    p.add_argument("--model")
    p.add_argument("--data-u", help="calibration-stage dataset")
    p.add_argument("--data-d", help="monitoring-stage dataset")
    p.add_argument("--pairs", help="precomputed paired samples CSV (skips the sampling stages)")
    p.add_argument("--inject-during-burnin", action="store_true")
    p.add_argument("--laplace", action="store_true")
    _add_shared(p)
    p.set_defaults(func=cmd_assess)

    p = sub.add_parser("diagnose", help="burn-in and ergodicity diagnostics for stored chains")
    p.add_argument("--chain", required=True, nargs="+", help="chain CSV file(s)")
    p.add_argument("--strict", action="store_true")
    p.add_argument("--out", required=True, metavar="DIR")
    p.add_argument("--no-figures", action="store_true")
    p.set_defaults(func=cmd_diagnose)
    return parser


def main(argv=None) -> int:
    argv = list(sys.argv[1:]) if argv is None else list(argv)
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args, argv)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (NumericalError, ConvergenceError) as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
