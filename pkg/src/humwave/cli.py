"""Command line entry point.

Exit codes: 0 success, 2 configuration error, 3 numerical failure.
"""

import argparse
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np
from scipy.linalg import LinAlgError

from .cache import Cache, encode, write_atomic
from .config import ConfigError, ExperimentConfig, from_mapping, load_config
from .mt_operator import NumericalError, log_magnitude
from .spectral_basis import EigenSolverError

EXIT_CONFIG = 2
EXIT_NUMERIC = 3


def default_cache_dir():
    return os.environ.get("HUMWAVE_CACHE") or str(Path.home() / ".cache" / "humwave")


def _overrides(extra):
    """Turn leftover ``--key value`` tokens into a mapping."""
    out = {}
    it = iter(extra)
    for tok in it:
        if not tok.startswith("--"):
            raise ConfigError(f"unexpected argument {tok!r}")
        key = tok[2:].replace("-", "_")
        if "=" in key:
            key, val = key.split("=", 1)
        else:
            try:
                val = next(it)
            except StopIteration:
                raise ConfigError(f"flag --{key} needs a value") from None
        out[key] = val
    return out


def _config(args, extra):
    ov = _overrides(extra)
    if getattr(args, "cache_dir", None):
        ov.setdefault("cache_dir", args.cache_dir)
    if getattr(args, "config", None):
        return load_config(args.config, ov)
    return from_mapping(ov)


def cmd_basis(args, extra):
    cfg = _config(args, extra)
    from .experiments import _exact_kind, get_basis

    kind = "fd" if cfg.basis == "fd" or _exact_kind(cfg) is None else _exact_kind(cfg)
    store = Cache(cfg.cache_dir) if cfg.cache_dir else None
    b = get_basis(cfg.domain_spec(), kind, args.count, store)
    out = sys.stdout if args.out in (None, "-") else open(args.out, "w")
    try:
        out.write("index,omega,label\n")
        for j, (w, lab) in enumerate(zip(b.omegas, b.labels)):
            out.write(f"{j + 1},{w:.15g},{' '.join(map(str, lab))}\n")
    finally:
        if out is not sys.stdout:
            out.close()
    return 0


def cmd_assemble(args, extra):
    cfg = _config(args, extra)
    from .experiments import _exact_kind, get_basis, get_gram
    from .hum_solver import condition_number
    from .mt_operator import GalerkinSystem

    kind = "fd" if cfg.basis == "fd" or _exact_kind(cfg) is None else _exact_kind(cfg)
    store = Cache(cfg.cache_dir) if cfg.cache_dir else None
    b = get_basis(cfg.domain_spec(), kind, cfg.n_control, store)
    sw = cfg.space_weight()
    M = GalerkinSystem(b, sw, cfg.time_weight(), get_gram(b, sw, store)).matrix(cfg.n_control)
    if args.dump:
        write_atomic(args.dump, encode(b"HUMM", [M.values]))
    if args.logmag:
        L = log_magnitude(M.values)
        with open(args.logmag, "w") as fh:
            fh.write("row,col,log10_abs\n")
            for i, j in zip(*np.nonzero(np.ones_like(L, bool))):
                fh.write(f"{i + 1},{j + 1},{L[i, j]:.6g}\n")
    print(json.dumps({"n": cfg.n_control, "size": M.values.shape[0], "kappa": condition_number(M),
                      "asymmetry": M.asymmetry}))
    return 0


def cmd_solve(args, extra):
    from .experiments import run

    cfg = _config(args, extra)
    r = run(cfg, write=False)
    print(json.dumps({"kappa": r.kappa, "E": r.E, "control_norm": r.control_norm,
                      "n_control": r.n_control, "cutoff": r.cutoff, "n_verify": r.n_verify}))
    return 0


def cmd_experiment(args, extra):
    from .experiments import run, run_suite

    if args.action == "run":
        cfg = _config(args, extra)
        r = run(cfg)
        print(json.dumps({"name": r.name, "kappa": r.kappa, "E": r.E, "control_norm": r.control_norm,
                          "report": r.artifacts.get("report")}))
        return 0
    ov = _overrides(extra)
    out_dir = ov.pop("output_dir", "humwave-out")
    cache_dir = ov.pop("cache_dir", args.cache_dir or "")
    if args.suite is None:
        raise ConfigError("experiment suite needs a suite name")
    reports = run_suite(args.suite, out_dir, cache_dir, base=ov)
    for r in reports:
        print(f"{r.name}: kappa={r.kappa:.6g} E={r.E:.6g} |w|={r.control_norm:.6g}")
    return 0


def cmd_cache(args, extra):
    if extra:
        raise ConfigError(f"unexpected arguments {extra}")
    c = Cache(args.cache_dir or default_cache_dir())
    if args.action == "list":
        for e in c.list():
            print(f"{e['file']}\t{e['bytes']}\t{json.dumps(e['key'], sort_keys=True)}")
        return 0
    if args.action == "purge":
        print(f"removed {c.purge()} entries")
        return 0
    bad = 0
    for name, ok, reason in c.verify():
        print(f"{name}\t{'ok' if ok else 'CORRUPT'}\t{reason}")
        bad += not ok
    return 1 if bad else 0


def build_parser():
    p = argparse.ArgumentParser(prog="humwave", description="Spectral HUM control of 2D waves.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", help="TOML configuration file")
        sp.add_argument("--cache-dir", dest="cache_dir", default=None)

    sp = sub.add_parser("basis", help="list eigenfrequencies")
    common(sp)
    sp.add_argument("--count", type=int, default=100)
    sp.add_argument("--out", default=None)
    sp.set_defaults(func=cmd_basis)

    sp = sub.add_parser("assemble", help="assemble the Galerkin matrix")
    common(sp)
    sp.add_argument("--dump", help="write an HUMM matrix container")
    sp.add_argument("--logmag", help="write log10|M| as CSV")
    sp.set_defaults(func=cmd_assemble)

    sp = sub.add_parser("solve", help="solve for the control and print the summary")
    common(sp)
    sp.set_defaults(func=cmd_solve)

    sp = sub.add_parser("experiment", help="run a configuration or a named suite")
    common(sp)
    sp.add_argument("action", choices=["run", "suite"])
    sp.add_argument("suite", nargs="?")
    sp.set_defaults(func=cmd_experiment)

    sp = sub.add_parser("cache", help="inspect the on-disk cache")
    sp.add_argument("action", choices=["list", "purge", "verify"])
    sp.add_argument("--cache-dir", dest="cache_dir", default=None)
    sp.set_defaults(func=cmd_cache)
    return p


def main(argv=None):
    parser = build_parser()
    args, extra = parser.parse_known_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args, extra)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NumericalError, EigenSolverError, LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
