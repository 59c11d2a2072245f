"""Command-line front end.

Exit codes: 0 success, 2 input/config error, 3 numeric failure.
"""
from __future__ import annotations

import argparse
import sys

from .config import load_run_config
from .errors import EmfusionError, NumericError
from .pipeline import cmd_convert, cmd_evaluate, cmd_forecast, cmd_synth, cmd_train

__all__ = ["main", "build_parser"]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="emfusion",
        description="Conditional-diffusion probabilistic forecasting of frequency-selective EMF series",
    )
    parser.add_argument("--config", help="run-config file (key = value with [section] headers)")
    parser.add_argument("--desk-scale", action="store_true",
                        help="override defaults with the small CPU-sized preset")
    parser.add_argument("--seed", type=int, help="master seed for all randomness")
    parser.add_argument("--mode", choices=("uv", "mv"), help="univariate or multivariate")
    parser.add_argument("--condition",
                        choices=("none", "workingday", "workinghour", "season", "multi"),
                        help="condition schema")
    parser.add_argument("--guidance-scale", type=float, help="classifier-free guidance scale")
    parser.add_argument("--scenarios", type=int, help="ensemble size for forecasting")

    sub = parser.add_subparsers(dest="command", required=True)

    p_convert = sub.add_parser("convert", help="raw dBm CSV to field-strength CSV + mask")
    p_convert.add_argument("--data", help="raw power CSV (overrides config)")
    p_convert.add_argument("--channel-specs", help="channel spec file (overrides config)")
    p_convert.add_argument("--output", help="output field CSV path")

    p_synth = sub.add_parser("synth", help="generate the synthetic dataset")
    p_synth.add_argument("--output-dir", help="where to write the dataset")

    sub.add_parser("train", help="fit the denoiser and write a checkpoint")

    p_forecast = sub.add_parser("forecast", help="sample an ensemble and build intervals")
    p_forecast.add_argument("--checkpoint", help="checkpoint path (overrides config)")

    p_eval = sub.add_parser("evaluate", help="score a stored ensemble against the truth")
    p_eval.add_argument("--ensemble", required=True, help="ensemble binary from forecast")
    p_eval.add_argument("--truth", required=True, help="field CSV with the realized future block")
    return parser


def _overrides(args: argparse.Namespace) -> dict:
    out = {}
    for key in ("seed", "mode", "condition", "guidance_scale", "scenarios"):
        value = getattr(args, key, None)
        if value is not None:
            out[key] = value
    for key in ("data", "channel_specs", "output_dir"):
        value = getattr(args, key.replace("-", "_"), None)
        if value is not None:
            out[key] = value
    return out


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = load_run_config(args.config, desk_scale=args.desk_scale,
                                 overrides=_overrides(args))
        if args.command == "convert":
            out, mask = cmd_convert(config, output=args.output)
            print(out)
            print(mask)
        elif args.command == "synth":
            print(cmd_synth(config))
        elif args.command == "train":
            result = cmd_train(config)
            for path in result["checkpoints"] + result["loss_logs"]:
                print(path)
        elif args.command == "forecast":
            result = cmd_forecast(config, checkpoint=args.checkpoint)
            for path in result.values():
                print(path)
        elif args.command == "evaluate":
            result = cmd_evaluate(config, args.ensemble, args.truth)
            for path in result.values():
                print(path)
    except NumericError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return 3
    except (EmfusionError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
