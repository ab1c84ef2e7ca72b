#!/usr/bin/env python3
"""
Command-line entry point for the ShuffleFME experiment framework.
"""

import os
import sys
import json
import logging
import argparse

from Core.config import ExperimentConfig, load_config
from Core.dummy import PrivacyBudget, calibrate_fme, calibrate_lnf, certify_dp, distribution_from_config
from Core.exceptions import CalibrationError, ConfigError, DatasetError
from Core.experiments import (load_replay, predict, replay_report, run_experiment, run_replay,
                              run_single, write_results)
from Core.reports import print_table
from Core.utils.constants import ExitCode, ProtocolKind
from Core.utils.helpers import parse_tau

logger = logging.getLogger("shufflefme")

def configure_logging(verbose: bool = False, quiet: bool = False):
    level = logging.DEBUG if verbose else logging.WARNING if quiet else logging.INFO
    logging.basicConfig(level=level, format='%(asctime)s - %(name)s - %(levelname)s - %(message)s')

def parse_values(text: str, convert, flag: str) -> list:
    """Comma-separated flag values, converted one by one."""
    try:
        return [convert(v) for v in text.split(',')]
    except ValueError as e:
        raise ConfigError(f"Bad value in {flag}: {e}")

def build_config(args) -> ExperimentConfig:
    """Config file, then --set overrides, then the dedicated flags."""
    overrides = list(args.set or [])
    flags = {
        'budget.eps': args.eps,
        'budget.delta': args.delta,
        'seed': args.seed,
        'trials': args.trials,
        'cipher.kind': args.cipher,
        'protocol': args.protocol,
        'output': args.output,
        'workers': args.workers,
    }
    for key, value in flags.items():
        if value is not None:
            overrides.append(f"{key}={json.dumps(value)}")
    if args.tau:
        try:
            overrides.append(f"cipher.tau={json.dumps(list(parse_tau(args.tau)))}")
        except ValueError as e:
            raise ConfigError(str(e))
    return load_config(args.config, overrides)

def cmd_run(args) -> int:
    config = build_config(args)
    config.sweep = None
    rows = run_single(config)
    result = write_results(config, {'run': rows}, args.xlsx)
    print(f"Protocol: {config.protocol}  (config {config.hash()[:8]})")
    print_table(rows)
    print(f"\nResults saved to: {', '.join(result.files)}")
    return ExitCode.SUCCESS

def cmd_sweep(args) -> int:
    config = build_config(args)
    if args.kind:
        config.sweep = dict(config.sweep or {}, kind=args.kind)
    if args.values:
        config.sweep = dict(config.sweep or {}, values=parse_values(args.values, json.loads, "--values"))
    if config.sweep is None:
        raise ConfigError("sweep needs a 'sweep' section or --kind")
    result = run_experiment(config, args.xlsx)
    for name, rows in result.tables.items():
        print(f"\nSweep: {name}")
        print_table(rows)
    print(f"\nResults saved to: {', '.join(result.files)}")
    return ExitCode.SUCCESS

def cmd_attack(args) -> int:
    config = build_config(args)
    attack = dict(config.attack or {})
    if args.targets:
        attack['targets'] = parse_values(args.targets, int, "--targets")
    if args.lambdas:
        attack['lambdas'] = parse_values(args.lambdas, float, "--lambdas")
    if args.variant:
        attack['variant'] = args.variant
    config.attack = attack
    if config.sweep is not None and config.sweep.get('kind') != 'gain':
        config.sweep = None
    result = run_experiment(config.validate(), args.xlsx)
    for rows in result.tables.values():
        print_table(rows)
    print(f"\nResults saved to: {', '.join(result.files)}")
    return ExitCode.SUCCESS

def cmd_calibrate(args) -> int:
    config = build_config(args)
    budget = PrivacyBudget(config.budget['eps'], config.budget['delta'], config.budget.get('split'))
    if config.kind in (ProtocolKind.FME, ProtocolKind.PROPOSAL_STAR, ProtocolKind.KV):
        d1, d2 = calibrate_fme(budget, config.beta)
        (eps1, _), (eps2, _) = budget.split_parts()
        summary = {
            'd1': {**d1.describe(), 'delta': certify_dp(d1, config.beta, eps1 / 2)},
            'd2': {**d2.describe(), 'delta': certify_dp(d2, 1.0, eps2 / 2)},
        }
    else:
        dist = calibrate_lnf(budget, config.beta)
        summary = {'d': {**dist.describe(), 'delta': certify_dp(dist, config.beta, budget.eps / 2)}}

    print(f"Calibration for {config.protocol} at eps={budget.eps}, delta={budget.delta}, beta={config.beta}")
    print(json.dumps(summary, indent=2))
    if args.write:
        os.makedirs(config.output, exist_ok=True)
        path = os.path.join(config.output, "calibration.json")
        with open(path, 'w') as f:
            json.dump({'config_hash': config.hash(), **summary}, f, indent=2)
        print(f"Calibration saved to: {path}")
    return ExitCode.SUCCESS

def cmd_certify(args) -> int:
    params = {}
    for assignment in args.param or []:
        key, sep, value = assignment.partition('=')
        if not sep:
            raise ConfigError(f"--param expects KEY=VALUE, got {assignment!r}")
        try:
            params[key] = json.loads(value)
        except ValueError as e:
            raise ConfigError(f"Bad value in --param {key}: {e}")
    try:
        dist = distribution_from_config(args.dist, params)
    except (KeyError, ValueError) as e:
        raise ConfigError(f"Bad distribution: {e}")
    if args.eps is None or args.eps < 0:
        raise ConfigError("certify needs --eps >= 0")
    delta = certify_dp(dist, args.beta, args.eps)
    print(f"Distribution: {dist!r}  (mean {dist.mean:.4f}, variance {dist.variance:.4f})")
    print(f"delta({args.eps}) = {delta:.6e} at beta={args.beta}")
    return ExitCode.SUCCESS

def cmd_predict(args) -> int:
    config = build_config(args)
    rows = predict(config)
    result = write_results(config, {'predict': rows}, args.xlsx)
    print_table(rows)
    print(f"\nResults saved to: {', '.join(result.files)}")
    return ExitCode.SUCCESS

def cmd_replay(args) -> int:
    document = load_replay(args.path)
    try:
        output = run_replay(document)
    except (KeyError, ValueError) as e:
        raise ConfigError(f"Invalid replay {args.path}: {e}")
    report = replay_report(document, output)
    print(json.dumps(report, indent=2))
    if report.get('matches_expected') is False:
        logger.error("Replay output differs from the expected block")
        return ExitCode.REPLAY_MISMATCH
    return ExitCode.SUCCESS

def add_common_arguments(parser: argparse.ArgumentParser):
    parser.add_argument("--config", help="Path to a JSON experiment config")
    parser.add_argument("--set", action="append", metavar="KEY=VALUE", help="Override a (dotted) config key")
    parser.add_argument("--eps", type=float, help="Target epsilon")
    parser.add_argument("--delta", type=float, help="Target delta")
    parser.add_argument("--seed", type=int, help="Master seed")
    parser.add_argument("--trials", type=int, help="Monte Carlo trials per point")
    parser.add_argument("--cipher", choices=["mock", "real"], help="Cipher suite")
    parser.add_argument("--tau", help="Ciphertext size model in bits, e.g. 712,1392,2072")
    parser.add_argument("--protocol", help="lnf, ch, gh, uh, fme, kv, proposal-star or pure-grr")
    parser.add_argument("--output", help="Directory to save outputs")
    parser.add_argument("--workers", type=int, help="Worker processes for trials")
    parser.add_argument("--xlsx", action="store_true", help="Also write a styled results workbook")

def main(argv=None) -> int:
    """Main entry point."""
    parser = argparse.ArgumentParser(description="Augmented shuffle frequency estimation experiments")
    parser.add_argument("--verbose", action="store_true", help="Debug logging")
    parser.add_argument("--quiet", action="store_true", help="Warnings and errors only")
    commands = parser.add_subparsers(dest="command", required=True)

    run = commands.add_parser("run", help="Run one configuration")
    add_common_arguments(run)
    run.set_defaults(handler=cmd_run)

    sweep = commands.add_parser("sweep", help="Run a parameter sweep")
    add_common_arguments(sweep)
    sweep.add_argument("--kind", choices=["mse", "collusion", "gain", "efficiency", "b_grid"])
    sweep.add_argument("--values", help="Comma-separated sweep values")
    sweep.set_defaults(handler=cmd_sweep)

    attack = commands.add_parser("attack", help="Measure poisoning gains")
    add_common_arguments(attack)
    attack.add_argument("--targets", help="Comma-separated target items")
    attack.add_argument("--lambdas", help="Comma-separated fake-user fractions")
    attack.add_argument("--variant", choices=["colliding", "single"], help="CH attacker variant")
    attack.set_defaults(handler=cmd_attack)

    calibrate = commands.add_parser("calibrate", help="Calibrate dummy distributions")
    add_common_arguments(calibrate)
    calibrate.add_argument("--write", action="store_true", help="Save the calibration as JSON")
    calibrate.set_defaults(handler=cmd_calibrate)

    certify = commands.add_parser("certify", help="Certify a dummy distribution")
    certify.add_argument("--dist", required=True, help="binomial, point_mass or asymmetric_geometric")
    certify.add_argument("--param", action="append", metavar="KEY=VALUE", help="Distribution parameter")
    certify.add_argument("--beta", type=float, default=1.0, help="Sampling probability")
    certify.add_argument("--eps", type=float, required=True, help="Epsilon to certify at")
    certify.set_defaults(handler=cmd_certify)

    predict_cmd = commands.add_parser("predict", help="Compare closed-form predictors with measurements")
    add_common_arguments(predict_cmd)
    predict_cmd.set_defaults(handler=cmd_predict)

    replay = commands.add_parser("replay", help="Replay a scripted example")
    replay.add_argument("path", help="Replay JSON document")
    replay.set_defaults(handler=cmd_replay)

    args = parser.parse_args(argv)
    configure_logging(args.verbose, args.quiet)

    try:
        return int(args.handler(args))
    except ConfigError as e:
        logger.error(f"Configuration error: {e}")
        return int(ExitCode.CONFIG_ERROR)
    except CalibrationError as e:
        logger.error(f"Calibration infeasible: {e}")
        return int(ExitCode.CALIBRATION_INFEASIBLE)
    except DatasetError as e:
        logger.error(f"Dataset error: {e}")
        return int(ExitCode.DATASET_ERROR)

if __name__ == "__main__":
    sys.exit(main())
