"""Command-line front end.

Subcommands::

    contrastkit run   --config CONFIG.json [--threads N] [--emit-plot-data]
    contrastkit synth --spec SPEC.json --out DIR
    contrastkit sweep --config CONFIG.json --param gamma --grid log:0.1:1000:15

Exit codes: 0 success, 2 workflow stop (no contrastive signal or no valid
background), 3 configuration or input error, 4 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import io
from .exceptions import (
    ConfigError,
    InvalidArgument,
    InvalidData,
    NoValidBackground,
    NumericalFailure,
    ParseError,
)
from .pipeline import PipelineConfig, dumps_report, parse_grid, run_pipeline, run_sweep
from .structured import CurveSet
from .synth import GeneratorSpec, generate

EXIT_OK = 0
EXIT_STOP = 2
EXIT_CONFIG = 3
EXIT_NUMERICAL = 4

log = logging.getLogger("contrastkit")


def _cmd_run(args) -> int:
    config = PipelineConfig.from_json(args.config)
    result = run_pipeline(config, n_jobs=args.threads, emit_plot_data=args.emit_plot_data)
    content = result.content
    out = config.resolve(config.output_dir)
    print(f"status: {content['status']}")
    print(f"message: {content['message']}")
    print(f"report: {out / 'report.json'}")
    return result.exit_code


def _truth_dict(truth) -> dict:
    out = {}
    for key in ("S", "W", "beta"):
        val = getattr(truth, key)
        out[key] = None if val is None else np.asarray(val).tolist()
    out["planted_indices"] = list(truth.planted_indices)
    out["extras"] = {k: np.asarray(v).tolist() if isinstance(v, np.ndarray) else v
                     for k, v in truth.extras.items()}
    return out


def _cmd_synth(args) -> int:
    try:
        data = json.loads(Path(args.spec).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read spec {args.spec}: {exc}") from None
    try:
        spec = GeneratorSpec.from_dict(data)
    except (InvalidArgument, TypeError) as exc:
        raise ConfigError(str(exc)) from None
    X, Y, resp, truth = generate(spec)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    stamp = {"model": spec.model, "seed": spec.seed}
    feat = [f"x{j}" for j in range(X.shape[1])]
    if spec.model == "planted_curves":
        grid = truth.extras["grid"]
        io.save_curves(out / "foreground.csv", CurveSet(grid, X), stamp=stamp)
        io.save_curves(out / "background.csv", CurveSet(grid, Y), stamp=stamp)
    elif spec.model == "clr":
        io.save_matrix(out / "foreground.csv", np.column_stack([X, resp]), header=feat + ["r"], stamp=stamp)
        io.save_matrix(out / "background.csv", Y, header=feat, stamp=stamp)
    elif spec.model == "supervised_contrast":
        y, yb = resp
        io.save_matrix(out / "foreground.csv", np.column_stack([X, y]), header=feat + ["y"], stamp=stamp)
        io.save_matrix(out / "background.csv", np.column_stack([Y, yb]), header=feat + ["y"], stamp=stamp)
    else:
        io.save_matrix(out / "foreground.csv", X, header=feat, stamp=stamp)
        io.save_matrix(out / "background.csv", Y, header=feat, stamp=stamp)
    (out / "spec.json").write_text(json.dumps(spec.to_dict(), indent=2) + "\n", encoding="utf-8")
    (out / "truth.json").write_text(json.dumps(_truth_dict(truth)) + "\n", encoding="utf-8")
    print(f"wrote {out / 'foreground.csv'} and {out / 'background.csv'}")
    return EXIT_OK


def _cmd_sweep(args) -> int:
    if args.param != "gamma":
        raise ConfigError(f"only the gamma parameter can be swept, got {args.param!r}")
    config = PipelineConfig.from_json(args.config)
    result = run_sweep(config, parse_grid(args.grid))
    sys.stdout.write(dumps_report(result))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="contrastkit",
                                     description="Contrastive dimension reduction workflow")
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="background selection, CDE test, dimension and fit")
    run.add_argument("--config", required=True, help="pipeline config JSON")
    run.add_argument("--threads", type=int, default=1, help="bootstrap worker threads (default 1)")
    run.add_argument("--emit-plot-data", action="store_true",
                     help="also write tidy CSVs for external plotting")
    run.set_defaults(func=_cmd_run)

    synth = sub.add_parser("synth", help="draw a synthetic dataset")
    synth.add_argument("--spec", required=True, help="generator spec JSON")
    synth.add_argument("--out", required=True, help="output directory")
    synth.set_defaults(func=_cmd_synth)

    sweep = sub.add_parser("sweep", help="objective over a contrast-strength grid")
    sweep.add_argument("--config", required=True, help="pipeline config JSON (needs d)")
    sweep.add_argument("--param", default="gamma", help="parameter to sweep (gamma)")
    sweep.add_argument("--grid", default="log:0.1:1000:15",
                       help="log:lo:hi:n, lin:lo:hi:n or a comma-separated list")
    sweep.set_defaults(func=_cmd_sweep)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except NoValidBackground as exc:
        log.error("%s", exc)
        return EXIT_STOP
    except (ConfigError, ParseError, InvalidArgument, InvalidData) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalFailure as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
