"""Command-line front end.

Every subcommand except ``run`` executes one experiment with parameters
taken from the flags (defaults as in :class:`waverg.config.RunConfig`).
Exit codes: 0 success, 2 validation failure, 3 hard invariant failure,
4 IO error.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys

from .config import EXPERIMENTS, RunConfig, _field_types, _parse, load_config
from .errors import DomainError, ValidationError
from .experiments import MANIFEST_NAME, run_experiment
from .gaussian import WeylDescriptor
from .lattice import LatticeSpec

EXIT_OK, EXIT_VALIDATION, EXIT_INVARIANT, EXIT_IO = 0, 2, 3, 4

_SKIP = {"experiments", "out", "version"}


def _add_config_flags(parser):
    kinds = _field_types()
    for f in dataclasses.fields(RunConfig):
        if f.name in _SKIP:
            continue
        flag = "--" + f.name.replace("_", "-")
        if kinds[f.name] is bool:
            parser.add_argument(flag, dest=f.name, action="store_true", default=None)
        else:
            parser.add_argument(flag, dest=f.name, default=None, metavar="VALUE")


def _config_from_args(args, experiment):
    kinds = _field_types()
    values = {}
    for f in dataclasses.fields(RunConfig):
        if f.name in _SKIP:
            continue
        raw = getattr(args, f.name, None)
        if raw is None:
            continue
        values[f.name] = raw if isinstance(raw, bool) else _parse(f.name, raw, kinds[f.name])
    if values.get("mu") is not None and "m" not in values:
        values["m"] = None
    return RunConfig(experiments=(experiment,), out=args.out or "out", **values)


def _load_descriptors(path, spec):
    """JSON list of descriptors, each a list of ``[site, field, amplitude]`` terms."""
    with open(path, encoding="utf-8") as fh:
        data = json.load(fh)
    out = []
    for terms in data:
        w = WeylDescriptor.zero(spec)
        for site, fld, amp in terms:
            w = w + WeylDescriptor.delta(spec, site, fld, float(amp))
        out.append(w)
    return out


def _add_run_flags(parser, default):
    parser.add_argument("--out", default=default, help="output directory (default: the config's, else ./out)")
    parser.add_argument("--threads", type=int, default=default, help="experiments run concurrently")


def build_parser():
    parser = argparse.ArgumentParser(prog="waverg", description="Wavelet renormalisation group experiments.")
    _add_run_flags(parser, None)
    sub = parser.add_subparsers(dest="command", required=True)
    # the same flags after the subcommand; SUPPRESS keeps a global value when absent
    run = sub.add_parser("run", help="run every experiment of an INI config")
    run.add_argument("config")
    _add_run_flags(run, argparse.SUPPRESS)
    for name in EXPERIMENTS:
        p = sub.add_parser(name, help=f"run the {name} experiment")
        _add_run_flags(p, argparse.SUPPRESS)
        _add_config_flags(p)
        if name == "mera-check":
            p.add_argument("--descriptors", default=None, help="JSON file of probe descriptors")
    return parser


def _report(manifest, stream):
    for exp, checks in manifest.checks.items():
        for c in checks:
            status = "PASS" if c["passed"] else ("FAIL" if c["hard"] else "WARN")
            print(f"{status} {exp}:{c['name']} = {c['value']:.3e}", file=stream)


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    extra = {}
    try:
        if args.command == "run":
            cfg = load_config(args.config)
            out = args.out
        else:
            cfg = _config_from_args(args, args.command)
            out = None
            if args.command == "mera-check" and args.descriptors:
                spec = LatticeSpec(cfg.d, cfg.L, cfg.eps0, cfg.N)
                extra["mera-check"] = {"descriptors": _load_descriptors(args.descriptors, spec)}
        manifest = run_experiment(cfg, out=out, threads=args.threads or 1, extra=extra)
    except ValidationError as exc:
        for v in exc.violations:
            print(f"invalid config: {v}", file=sys.stderr)
        return EXIT_VALIDATION
    except (ValueError, DomainError) as exc:
        print(f"invalid input: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except OSError as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return EXIT_IO
    if args.command == "mera-check":
        with open(f"{out or cfg.out}/mera-check/layer.json", encoding="utf-8") as fh:
            sys.stdout.write(fh.read())
    _report(manifest, sys.stderr if args.command == "mera-check" else sys.stdout)
    print(f"manifest: {(out or cfg.out)}/{MANIFEST_NAME}", file=sys.stderr)
    return EXIT_OK if manifest.ok else EXIT_INVARIANT


if __name__ == "__main__":
    sys.exit(main())
