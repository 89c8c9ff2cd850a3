"""Command-line entry point.

    rmda run <config-or-preset> [--seed N] [--out PATH]
    rmda compare <log>...
    rmda validate-schedule <config-or-preset> [--horizon T]
    rmda gen-data <config-or-preset> [--out PATH] [--seed N]

Exit codes: 0 success, 2 config error, 3 data error, 4 numeric error.
"""

from __future__ import annotations

import argparse
import json
import math
import sys

import numpy as np

from . import config as cfgmod
from . import runner
from .core import InvalidScheduleError, validate_schedule
from .data import DataError
from .optimizers import NumericError
from .regularizers import RegularizerParameterError

EXIT_CONFIG, EXIT_DATA, EXIT_NUMERIC = 2, 3, 4


def _load(path, seed=None, out=None):
    cfg = cfgmod.load(path)
    overrides = {}
    if seed is not None:
        overrides["seed"] = seed
    if out is not None:
        overrides["output"] = out
    if overrides:
        cfg = cfg.replace(**overrides)
    return cfg, overrides


def cmd_run(args) -> int:
    cfg, overrides = _load(args.config, args.seed, args.out)
    records = runner.run_experiment(cfg, overrides=overrides)
    summary = runner.summarize(records, cfg.name, cfg.optimizer.kind)
    print(json.dumps(summary))
    return 0


def cmd_compare(args) -> int:
    rows = runner.compare(args.logs)
    print(runner.format_table(rows))
    return 0


def cmd_validate(args) -> int:
    cfg, _ = _load(args.config)
    setup = runner.prepare(cfg)
    per_epoch = math.ceil(len(setup.train) / cfg.batch_size)
    eta = cfg.optimizer.eta
    report = validate_schedule(lambda t: eta.values((np.asarray(t) - 1) // per_epoch),
                               args.horizon)
    print(json.dumps({"steps_per_epoch": per_epoch, **report.__dict__}))
    return 0 if report.passed else 1


def cmd_gen_data(args) -> int:
    cfg, _ = _load(args.config, args.seed)
    if cfg.data.get("source") != "synthetic":
        raise cfgmod.ConfigError("gen-data only applies to synthetic data sources")
    setup = runner.prepare(cfg)
    out = args.out or f"{cfg.name}-data.npz"
    train = setup.train
    np.savez(out, inputs=train.inputs, labels=train.labels,
             val_inputs=setup.val.inputs, val_labels=setup.val.labels,
             ground_truth=train.ground_truth.values, truth_pattern=setup.truth_pattern)
    print(out)
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="rmda", description=__doc__.split("\n\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="train one configuration")
    p.add_argument("config")
    p.add_argument("--seed", type=int)
    p.add_argument("--out")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("compare", help="summarize run logs")
    p.add_argument("logs", nargs="*")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("validate-schedule", help="check a learning-rate schedule")
    p.add_argument("config")
    p.add_argument("--horizon", type=int, default=10**6)
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("gen-data", help="write the synthetic dataset of a config")
    p.add_argument("config")
    p.add_argument("--out")
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_gen_data)

    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (cfgmod.ConfigError, InvalidScheduleError, RegularizerParameterError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (NumericError, FloatingPointError) as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
