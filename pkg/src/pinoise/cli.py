"""Command-line entry point: data generation, training, evaluation,
ablation, verification, and curve export as reproducible runs.

Exit codes: 0 success, 1 usage or config error, 2 data or model format
error, 3 verification-suite failure. The environment variable PIN_SEED
overrides the config seed. Outputs carry the resolved config as a comment
line and never contain timestamps, so identical invocations produce
byte-identical artifacts.
"""
from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys

from .ablation import run_ablation
from .data import (FormatError, ShortcutSpec, gen_shortcut_dataset, read_features,
                   to_arrays, write_features)
from .metrics import evaluate
from .objective import ConfigError, CurvePoint, RunConfig, anchors_from_raw, train
from .state_io import CURVE_COLUMNS, load_state, save_state
from .verify import verify_all

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_FORMAT = 2
EXIT_VERIFY = 3


def _load_json(path, what: str) -> dict:
    try:
        with open(path) as fh:
            data = json.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"{what} file not found: {path}")
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{what} file {path} is not valid JSON: {exc}")
    if not isinstance(data, dict):
        raise ConfigError(f"{what} file {path} must hold a JSON object")
    return data


def _resolve_config(path: str | None) -> RunConfig:
    config = RunConfig.from_dict(_load_json(path, "config")) if path else RunConfig().validate()
    env_seed = os.environ.get("PIN_SEED")
    if env_seed is not None:
        try:
            config = dataclasses.replace(config, seed=int(env_seed))
        except ValueError:
            raise ConfigError(f"PIN_SEED must be an integer, got {env_seed!r}")
    return config


def _config_comment(config) -> str:
    return "# config: " + json.dumps(config.to_dict(), sort_keys=True)


def _announce(config) -> None:
    print(_config_comment(config)[2:])
    print(f"master seed: {config.seed}")


def _write_curves(path, config: RunConfig, curve: list[CurvePoint]) -> None:
    with open(path, "w") as fh:
        fh.write(_config_comment(config) + "\n")
        fh.write(",".join(CURVE_COLUMNS) + "\n")
        for c in curve:
            fh.write(f"{c.step},{c.loss_base:.17g},{c.loss_vpn:.17g},"
                     f"{c.loss_total:.17g},{c.batch_acc:.17g}\n")


def _cmd_gen_data(args) -> int:
    spec = ShortcutSpec.from_dict(_load_json(args.spec, "shortcut spec")) if args.spec else ShortcutSpec().validate()
    env_seed = os.environ.get("PIN_SEED")
    if env_seed is not None:
        spec = dataclasses.replace(spec, seed=int(env_seed))
    print("spec: " + json.dumps(spec.to_dict(), sort_keys=True))
    print(f"master seed: {spec.seed}")
    records = gen_shortcut_dataset(spec)
    write_features(args.out, records)
    print(f"wrote {len(records)} records to {args.out}")
    return EXIT_OK


def _cmd_train(args) -> int:
    config = _resolve_config(args.config)
    _announce(config)
    records, anchors_raw = read_features(args.data)
    train_x, train_y = to_arrays(records, "train")
    if train_x.shape[0] == 0:
        raise ConfigError(f"no train-domain records in {args.data}")
    if train_x.shape[1] != config.dim_in:
        raise ConfigError(f"data dimension {train_x.shape[1]} != config dim_in {config.dim_in}")
    anchors = anchors_from_raw(*anchors_raw, config) if anchors_raw is not None else None
    state, curve = train(train_x, train_y, config, anchors)
    save_state(args.out, state, config, curve)
    if args.curves:
        _write_curves(args.curves, config, curve)
    print(f"trained {state.step} steps; model -> {args.out}")
    return EXIT_OK


def _cmd_eval(args) -> int:
    state, config, _ = load_state(args.model)
    _announce(config)
    records, _ = read_features(args.data)
    report = evaluate(records, state, config)
    with open(args.report, "w") as fh:
        fh.write(_config_comment(config) + "\n")
        fh.write("domain,n,accuracy,average_precision\n")
        for domain, n, acc, ap in report.rows():
            fh.write(f"{domain},{n},{acc:.17g},{ap:.17g}\n")
    print(report.pretty())
    print(f"report -> {args.report}")
    return EXIT_OK


def _cmd_ablate(args) -> int:
    config = _resolve_config(args.config)
    _announce(config)
    records, _ = read_features(args.data)
    seeds = tuple(config.seed + i for i in range(args.seeds))
    modes = tuple(args.modes.split(","))
    table = run_ablation(records, config, modes=modes, seeds=seeds)
    with open(args.report, "w") as fh:
        fh.write(_config_comment(config) + "\n")
        fh.write("mode,median_ood_accuracy,median_ood_average_precision\n")
        for mode, acc, ap in table.rows():
            fh.write(f"{mode},{acc:.17g},{ap:.17g}\n")
    print(table.pretty())
    print(f"report -> {args.report}")
    return EXIT_OK


def _cmd_check(args) -> int:
    config = _resolve_config(args.config)
    _announce(config)
    report = verify_all(config)
    print(report.pretty())
    if not report.all_passed:
        return EXIT_VERIFY
    return EXIT_OK


def _cmd_export_curves(args) -> int:
    _, config, curve = load_state(args.model)
    _announce(config)
    _write_curves(args.out, config, curve)
    print(f"{len(curve)} curve rows -> {args.out}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pinoise",
        description="Positive-incentive noise training engine for feature-space detectors.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="generate the planted-shortcut benchmark")
    p.add_argument("--spec", help="shortcut spec JSON (defaults when omitted)")
    p.add_argument("--out", required=True, help="output PINF path")
    p.set_defaults(fn=_cmd_gen_data)

    p = sub.add_parser("train", help="train a model on a PINF feature file")
    p.add_argument("--data", required=True)
    p.add_argument("--config", help="run config JSON (defaults when omitted)")
    p.add_argument("--out", required=True, help="output model state path")
    p.add_argument("--curves", help="optional curve-log CSV path")
    p.set_defaults(fn=_cmd_train)

    p = sub.add_parser("eval", help="evaluate a trained model per domain")
    p.add_argument("--data", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--report", required=True)
    p.set_defaults(fn=_cmd_eval)

    p = sub.add_parser("ablate", help="train and compare the noise modes")
    p.add_argument("--data", required=True)
    p.add_argument("--config")
    p.add_argument("--seeds", type=int, default=5)
    p.add_argument("--modes", default="none,random,sample,pin")
    p.add_argument("--report", required=True)
    p.set_defaults(fn=_cmd_ablate)

    p = sub.add_parser("check", help="run the verification suite")
    p.add_argument("--config")
    p.set_defaults(fn=_cmd_check)

    p = sub.add_parser("export-curves", help="re-emit the curve log stored in a model")
    p.add_argument("--model", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=_cmd_export_curves)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code not in (0, None) else EXIT_OK
    try:
        return args.fn(args)
    except (ConfigError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except FormatError as exc:
        print(f"format error: {exc}", file=sys.stderr)
        return EXIT_FORMAT
    except OSError as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return EXIT_FORMAT


def entry() -> None:
    raise SystemExit(main())


if __name__ == "__main__":
    entry()
