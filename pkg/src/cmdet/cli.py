"""Command-line interface.

Subcommands map one-to-one onto the core entry points: simulate (BER sweep
to CSV), train (parameter file plus loss-trace CSV), calibrate (reliability
and KL report to CSV), complexity (MOP table), selftest (diagnostic
battery), serve (HTTP service).  Exit codes: 0 success, 1 configuration
error, 2 numerical failure.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .baselines import SearchSizeError
from .calibration import calibration_to_csv, run_calibration
from .complexity import DETECTOR_NAMES, complexity_table
from .config import (
    CalibrateJobConfig,
    ExperimentConfig,
    TrainJobConfig,
    load_config,
)
from .constellations import build_constellation
from .errors import ConfigError, NumericalError
from .montecarlo import report_to_csv, run_ber_sweep
from .selftest import run_selftest
from .training import OptimizerConfig, TrainConfig, save_params, train

LONG_RUN_ITERATIONS = 100_000


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cmdet",
        description="Soft MIMO detection: unfolded relaxed-MAP detectors, "
        "oracles, baselines and evaluation harness.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_sim = sub.add_parser("simulate", help="run a BER/SER sweep and emit CSV")
    p_sim.add_argument("--config", required=True, help="experiment YAML")
    p_sim.add_argument("--seed", type=int, default=None, help="override the config seed")
    p_sim.add_argument("--out", default=None, help="CSV path (default: config output or stdout)")
    p_sim.add_argument(
        "--long-run", action="store_true", help="raise the instance cap by 10x"
    )

    p_train = sub.add_parser("train", help="train unfolded detector parameters")
    p_train.add_argument("--config", required=True, help="training YAML")
    p_train.add_argument("--seed", type=int, default=None, help="override the config seed")
    p_train.add_argument(
        "--out", default=None, help="parameter file path (default: config output)"
    )
    p_train.add_argument(
        "--long-run",
        action="store_true",
        help=f"train for {LONG_RUN_ITERATIONS} iterations regardless of the config",
    )

    p_cal = sub.add_parser("calibrate", help="measure posterior calibration")
    p_cal.add_argument("--config", required=True, help="calibration YAML")
    p_cal.add_argument("--seed", type=int, default=None, help="override the config seed")
    p_cal.add_argument("--out", default=None, help="CSV path (default: config output or stdout)")
    p_cal.add_argument(
        "--long-run", action="store_true", help="measure 10x as many instances"
    )

    p_cplx = sub.add_parser("complexity", help="print per-detection MOP counts")
    p_cplx.add_argument("--nt", type=int, required=True, help="complex transmit antennas")
    p_cplx.add_argument("--nr", type=int, required=True, help="complex receive antennas")
    p_cplx.add_argument("--k", type=int, required=True, help="real alphabet size")
    p_cplx.add_argument("--layers", type=int, default=None, help="unfolded depth")
    p_cplx.add_argument(
        "--detectors",
        default=None,
        help=f"comma-separated subset of {','.join(DETECTOR_NAMES)}",
    )
    p_cplx.add_argument("--out", default=None, help="write the table as CSV instead")

    p_self = sub.add_parser("selftest", help="run the oracle/gradient diagnostic battery")
    p_self.add_argument("--quiet", action="store_true", help="suppress per-check lines")

    p_serve = sub.add_parser("serve", help="start the HTTP service")
    p_serve.add_argument("--host", default="127.0.0.1")
    p_serve.add_argument("--port", type=int, default=8000)

    return parser


def _cmd_simulate(args) -> int:
    config = load_config(args.config, ExperimentConfig)
    if args.seed is not None:
        config = config.model_copy(update={"seed": args.seed})
    if args.long_run:
        stop = config.stop.model_copy(update={"max_instances": config.stop.max_instances * 10})
        config = config.model_copy(update={"stop": stop})
    report = run_ber_sweep(config)
    csv_text = report_to_csv(report)
    out = args.out or config.output
    if out:
        Path(out).write_text(csv_text)
        print(f"wrote {out}")
    else:
        sys.stdout.write(csv_text)
    return 0


def _cmd_train(args) -> int:
    config = load_config(args.config, TrainJobConfig)
    if args.seed is not None:
        config = config.model_copy(update={"seed": args.seed})
    if args.long_run:
        config = config.model_copy(update={"iterations": LONG_RUN_ITERATIONS})
    constellation = build_constellation(config.constellation)
    train_cfg = TrainConfig(
        batch_size=config.resolved_batch_size,
        iterations=config.iterations,
        ebn0_range_db=config.ebn0_range_db,
        layers=config.layers,
        init_schedule=config.init_schedule,
        seed=config.seed,
        mode=config.mode,
        checkpoint_every=config.checkpoint_every,
        optimizer=OptimizerConfig(
            learning_rate=config.optimizer.learning_rate,
            beta1=config.optimizer.beta1,
            beta2=config.optimizer.beta2,
            epsilon=config.optimizer.epsilon,
        ),
    )
    params, trace = train(train_cfg, constellation, config.channel.to_channel_config(config.seed))

    out = args.out or config.output
    if out:
        save_params(
            params,
            out,
            k=constellation.size,
            metadata={"config": config.model_dump(), "seed": config.seed},
        )
        print(f"wrote {out}")
    else:
        print("temperatures:", [float(t) for t in params.temperatures])
        print("step_sizes:", [float(d) for d in params.step_sizes])
    if config.trace_output:
        lines = ["iteration,loss,learning_rate"]
        lr = repr(float(config.optimizer.learning_rate))
        for i, loss in enumerate(trace.losses):
            lines.append(f"{i},{repr(float(loss))},{lr}")
        Path(config.trace_output).write_text("\n".join(lines) + "\n")
        print(f"wrote {config.trace_output}")
    return 0


def _cmd_calibrate(args) -> int:
    config = load_config(args.config, CalibrateJobConfig)
    if args.seed is not None:
        config = config.model_copy(update={"seed": args.seed})
    if args.long_run:
        config = config.model_copy(update={"n_instances": config.n_instances * 10})
    reports = run_calibration(config)
    csv_text = calibration_to_csv(reports)
    out = args.out or config.output
    if out:
        Path(out).write_text(csv_text)
        print(f"wrote {out}")
    else:
        sys.stdout.write(csv_text)
    return 0


def _cmd_complexity(args) -> int:
    detectors = (
        tuple(name.strip() for name in args.detectors.split(",") if name.strip())
        if args.detectors
        else DETECTOR_NAMES
    )
    try:
        rows = complexity_table(args.nt, args.nr, args.k, args.layers, detectors)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    if args.out:
        lines = ["detector,mops,per_layer"]
        for r in rows:
            per = "" if r["per_layer"] is None else str(r["per_layer"])
            lines.append(f"{r['detector']},{r['mops']},{per}")
        Path(args.out).write_text("\n".join(lines) + "\n")
        print(f"wrote {args.out}")
    else:
        width = max(len(r["detector"]) for r in rows)
        print(f"{'detector':<{width}}  {'mops':>24}  per_layer")
        for r in rows:
            per = "-" if r["per_layer"] is None else str(r["per_layer"])
            print(f"{r['detector']:<{width}}  {r['mops']:>24}  {per}")
    return 0


def _cmd_selftest(args) -> int:
    result = run_selftest(verbose=not args.quiet)
    if result.ok:
        print(f"selftest: all {len(result.checks)} checks passed")
        return 0
    failed = sum(1 for c in result.checks if not c.passed)
    print(f"selftest: {failed}/{len(result.checks)} checks FAILED", file=sys.stderr)
    return 2


def _cmd_serve(args) -> int:
    import uvicorn

    from .service import create_app

    uvicorn.run(create_app(), host=args.host, port=args.port)
    return 0


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    handlers = {
        "simulate": _cmd_simulate,
        "train": _cmd_train,
        "calibrate": _cmd_calibrate,
        "complexity": _cmd_complexity,
        "selftest": _cmd_selftest,
        "serve": _cmd_serve,
    }
    try:
        return handlers[args.command](args)
    except (ConfigError, SearchSizeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
