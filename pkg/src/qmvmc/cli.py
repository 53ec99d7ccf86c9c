"""Command-line entry point: ``run``, ``fit``, ``plot`` and ``gen-fixture``.

Exit codes: 0 success, 1 config error, 2 runtime error.
"""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np
import yaml

from . import harness
from .errors import ConfigError, QmvmcError
from .fixtures import Family, fixture_bits, majority_parity_instance, single_loop_instance
from .mrp import INF, exact_value, to_json


def _parse_params(pairs: list[str]) -> dict:
    params = {}
    for pair in pairs:
        if "=" not in pair:
            raise ConfigError(f"expected key=value, got {pair!r}")
        key, value = pair.split("=", 1)
        params[key] = harness._num(yaml.safe_load(value))
    return params


def cmd_run(args: argparse.Namespace) -> int:
    cfg = harness.load_config(args.config)
    if args.csv:
        cfg.setdefault("output", {})["csv"] = args.csv
    result = harness.run(cfg, workers=args.workers)
    s = result.summary
    print(f"trials={s['trials']} success_rate={s['success_rate']:.4f} mean_error={s['mean_error']:.6g}")
    for key in sorted(k for k in s if k.startswith("count_")):
        print(f"{key}={s[key]}")
    if not (cfg.get("output") or {}).get("csv"):
        sys.stdout.write(result.csv_text)
    return 0


def cmd_fit(args: argparse.Namespace) -> int:
    fit = harness.fit_scaling(args.csv, args.axis, args.counter)
    print(f"slope={fit.slope:.6f} stderr={fit.stderr:.6f} points={len(fit.xs)}")
    return 0


def cmd_plot(args: argparse.Namespace) -> int:
    try:
        with open(args.spec) as fh:
            spec = yaml.safe_load(fh)
    except (OSError, yaml.YAMLError) as exc:
        raise ConfigError(f"cannot read plot spec: {exc}") from exc
    if not isinstance(spec, dict) or "output" not in spec:
        raise ConfigError("plot spec needs an output path")
    print(harness.emit_plot(args.csv, spec))
    return 0


def cmd_gen_fixture(args: argparse.Namespace) -> int:
    params = _parse_params(args.params)
    try:
        family = Family(args.family)
    except ValueError:
        raise ConfigError(f"unknown family {args.family!r}") from None
    d = int(params.get("d", 2))
    rng = np.random.default_rng(int(params.get("seed", 0)))
    R_max, q = float(params.get("R_max", 1.0)), params.get("q", 2.0)
    if family is Family.MAJORITY_PARITY:
        k, T_prime = int(params.get("k", 1)), int(params.get("T_prime", 32))
        bits = np.asarray(params["bits"]) if "bits" in params else fixture_bits(family, d, rng, k, T_prime)
        inst, desc = majority_parity_instance(bits, d, k, T_prime, q, R_max)
    else:
        bits = np.asarray(params["bits"]) if "bits" in params else fixture_bits(family, d, rng)
        inst, desc = single_loop_instance(
            family, bits, d, float(params.get("eps", 0.1)), params.get("T", 0), float(params.get("gamma", 1.0)),
            q, R_max, params.get("setting", "path_independent"),
        )
    doc = {
        "instance": json.loads(to_json(inst)),
        "bits": np.asarray(desc.bits).tolist(),
        "closed_form": desc.closed_form().tolist(),
        "exact_value": exact_value(inst).tolist(),
    }
    print(json.dumps(doc, allow_nan=False, default=lambda x: "inf" if x == INF else x))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="qmvmc", description="Multivariate Monte Carlo estimation experiments")
    sub = parser.add_subparsers(dest="verb", required=True)

    p = sub.add_parser("run", help="run the trials of a config file")
    p.add_argument("config")
    p.add_argument("--workers", type=int, default=None, help=f"worker processes (default ${harness.WORKERS_ENV} or 1)")
    p.add_argument("--csv", default=None, help="override the CSV output path")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("fit", help="fit a log-log scaling exponent")
    p.add_argument("--axis", required=True, choices=sorted(harness.AXIS_COLUMNS))
    p.add_argument("--counter", required=True)
    p.add_argument("csv", nargs="+")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("plot", help="render an SVG plot from CSV files")
    p.add_argument("spec")
    p.add_argument("csv", nargs="+")
    p.set_defaults(func=cmd_plot)

    p = sub.add_parser("gen-fixture", help="print a fixture instance as JSON")
    p.add_argument("family")
    p.add_argument("params", nargs="*", help="key=value parameters")
    p.set_defaults(func=cmd_gen_fixture)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 1 if exc.code else 0
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except (QmvmcError, OSError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
