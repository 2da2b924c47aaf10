"""Batch command-line front end.

Subcommands read an INI experiment file, run every trial and write a CSV of
result records. Errors are reported on stderr as a single line::

    mcuos-error kind=<config|data|numerical> code=<exit code> type=<name> msg="<text>"
"""
import argparse
import json
import logging
import os
import sys
import time

import numpy as np

from . import exceptions
from .config import config_lines, describe, load_config
from .evaluation import aggregate, run_experiment, write_csv
from .exceptions import ConfigError, DataError, McuosError

log = logging.getLogger("mcuos")

SUBCOMMAND_MODES = {
    "learn": ("synth-mcuos", "synth-rmcuos", "mckuos", "rmckuos"),
    "denoise": ("denoise",),
    "cluster": ("cluster",),
    "bounds": ("bounds-check",),
}


def _fail(exc):
    if isinstance(exc, McuosError):
        kind, code = exc.kind, exc.exit_code
    elif isinstance(exc, (OSError, ValueError)):
        kind, code = "data", DataError.exit_code
    else:
        kind, code = "numerical", exceptions.NumericalError.exit_code
    msg = " ".join(str(exc).split())
    sys.stderr.write(f"mcuos-error kind={kind} code={code} type={type(exc).__name__} "
                     f"msg={json.dumps(msg)}\n")
    return code


def _load(args, require_mode=True):
    cfg = load_config(args.config, require_mode=require_mode)
    if args.seed is not None:
        cfg["experiment"]["seed"] = args.seed
    if args.trials is not None:
        if args.trials < 1:
            raise ConfigError("--trials must be at least 1")
        if args.command == "bounds":
            cfg["bounds"]["samples"] = args.trials
        else:
            cfg["experiment"]["trials"] = args.trials
    if getattr(args, "delta", None):
        if any(not 0 < d < 1 for d in args.delta):
            raise ConfigError("--delta values must lie in (0, 1)")
        cfg["bounds"]["delta"] = list(args.delta)
    if args.out:
        cfg["experiment"]["out"] = args.out
    return cfg


def cmd_synth(args):
    """Write a synthetic dataset (train, labels, clean test, truth bases) as CSV files."""
    from .datagen import SyntheticSpec, add_noise, generate_points, generate_subspaces
    cfg = _load(args, require_mode=False)
    d = cfg["data"]
    out = cfg["experiment"]["out"] if args.out else "synth"
    os.makedirs(out, exist_ok=True)
    rng = np.random.default_rng(cfg["experiment"]["seed"])
    spec = SyntheticSpec(d["m"], d["s"], d["L"], d["t_s"], d["cluster_sizes"], d["sigma_tr_sq"], 0.0)
    truth = generate_subspaces(spec, rng)
    train = generate_points(truth, spec, rng)
    Y = add_noise(train.clean, spec.sigma_tr_sq, rng)
    fmt = "%.17g"
    np.savetxt(os.path.join(out, "train.csv"), Y.T, delimiter=",", fmt=fmt)
    np.savetxt(os.path.join(out, "train_clean.csv"), train.clean.T, delimiter=",", fmt=fmt)
    np.savetxt(os.path.join(out, "labels.csv"), train.labels, fmt="%d")
    if d["n_test"]:
        test = generate_points(truth, spec, rng, sizes=[d["n_test"]] * spec.L)
        np.savetxt(os.path.join(out, "test.csv"), test.clean.T, delimiter=",", fmt=fmt)
        np.savetxt(os.path.join(out, "test_labels.csv"), test.labels, fmt="%d")
    for l, T in enumerate(truth.bases):
        np.savetxt(os.path.join(out, f"truth_{l}.csv"), T, delimiter=",", fmt=fmt)
    print(f"wrote {spec.N} training signals of dimension {spec.m} to {out}")
    return 0


def _run(args):
    cfg = _load(args)
    mode = cfg["experiment"]["mode"]
    if mode not in SUBCOMMAND_MODES[args.command]:
        raise ConfigError(f"mode {mode} does not belong to the '{args.command}' subcommand "
                          f"(expected {', '.join(SUBCOMMAND_MODES[args.command])})")
    jobs = args.jobs if args.jobs is not None else (os.cpu_count() or 1)
    t0 = time.perf_counter()
    records = run_experiment(cfg, jobs=max(1, jobs))
    elapsed = time.perf_counter() - t0
    failed = [r for r in records if r.metric.startswith("failed:")]
    if records and len(failed) == len(records):
        name = failed[0].metric.split(":", 1)[1]
        cls = getattr(exceptions, name, McuosError)
        base = next((b for b in (ConfigError, DataError, exceptions.NumericalError)
                     if issubclass(cls, b)), McuosError)
        raise base(f"all {len(failed)} runs failed with {name}")
    path = cfg["experiment"]["out"]
    parent = os.path.dirname(os.path.abspath(path))
    os.makedirs(parent, exist_ok=True)
    write_csv(records, path, config_lines(cfg))
    for key, (mean, std, n) in sorted(aggregate(records).items(), key=str):
        method, metric = key[0], key[1]
        print(f"{method}\t{metric}\tlambda={key[2]:g}\tmissing={key[5]:g}\tsigma_te={key[7]:g}\t"
              f"mean={mean:.6g}\tstd={std:.3g}\tn={n}")
    print(f"# {len(records)} records written to {path} in {elapsed:.1f}s")
    return 0


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True, help="INI experiment file")
    common.add_argument("--seed", type=int, help="override [experiment] seed")
    common.add_argument("--trials", type=int,
                        help="override [experiment] trials (for 'bounds': Monte Carlo samples)")
    common.add_argument("--jobs", type=int, help="parallel trial workers (default: all processors)")
    common.add_argument("--out", help="output CSV path (for 'synth': output directory)")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(
        prog="mcuos",
        description="Learn unions of subspaces from complete or partially observed data.",
        epilog="configuration keys and defaults:\n" + describe(),
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("synth", parents=[common], help="write a synthetic dataset")
    sub.add_parser("learn", parents=[common],
                   help="learning experiments (synth-mcuos, synth-rmcuos, mckuos, rmckuos)")
    sub.add_parser("denoise", parents=[common], help="test-signal denoising experiments")
    sub.add_parser("cluster", parents=[common], help="clustering-error experiments")
    b = sub.add_parser("bounds", parents=[common], help="Monte Carlo check of kernel estimate bounds")
    b.add_argument("--delta", type=float, nargs="+", help="override [bounds] delta")
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.ERROR,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "synth":
            return cmd_synth(args)
        return _run(args)
    except Exception as exc:  # noqa: BLE001 - every failure must become one stderr line
        if args.verbose:
            log.exception("failure")
        return _fail(exc)


if __name__ == "__main__":
    sys.exit(main())
