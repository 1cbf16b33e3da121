"""
Command-line front end: synth | run | theorem-check | sweep
Precedence for every setting: defaults < --config file < command-line flags.

Exit codes: 0 success, 2 configuration error, 3 numeric divergence,
4 theorem check failed.
"""
import argparse
import json
import os
import sys

from fairfl import exporters
from fairfl.config import load_manifest, parse_algorithms
from fairfl.data_synth import build_scenario
from fairfl.errors import FocusFLError, TheoremCheckFailed
from fairfl.experiments import SWEEP_PARAMS, run_and_write, sweep_and_write
from fairfl.parallel import set_thread_count
from fairfl.theorem_checks import CHECKS, run_theorem_check
from utils.console import get_logger, print_ok, set_verbosity

log = get_logger("CLI")


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument('--config', help='flat JSON config file (empty file = defaults)')
    common.add_argument('--seed', type=int, help='override the config seed')
    common.add_argument('--out', help='output directory (overrides output_dir)')
    common.add_argument('--verbose', action='store_true', default=False, help='debug logging')
    common.add_argument('--threads', type=int, help='worker threads for per-agent work (overrides FOCUS_FL_THREADS)')

    parser = argparse.ArgumentParser(prog='focus_fl',
                                     description='Fairness-aware clustered federated learning simulator')
    sub = parser.add_subparsers(dest='command', required=True)

    sub.add_parser('synth', parents=[common], help='generate a scenario and write per-agent CSVs')

    run = sub.add_parser('run', parents=[common], help='train and evaluate algorithms')
    run.add_argument('--algo', help='fedavg, focus, fedavg_hardcluster or all')
    run.add_argument('--repetitions', type=int, help='number of seeds (seed, seed+1, ...)')

    check = sub.add_parser('theorem-check', parents=[common], help='numerical theorem checks')
    check.add_argument('--which', required=True, choices=CHECKS)
    check.add_argument('--slack', type=float, help='absolute slack on trained FAA comparisons')

    sweep = sub.add_parser('sweep', parents=[common], help='sweep one parameter')
    sweep.add_argument('--param', required=True, help=f"one of {', '.join(k for k in SWEEP_PARAMS if k != 'η')}")
    sweep.add_argument('--values', required=True, help='comma-separated values, e.g. 1,2,3,4')
    sweep.add_argument('--algo', help='fedavg, focus, fedavg_hardcluster or all')
    sweep.add_argument('--repetitions', type=int)
    return parser


def _manifest(args):
    manifest = load_manifest(args.config)
    algorithms = getattr(args, 'algo', None)
    return manifest.with_overrides(
        scenario_overrides={"seed": args.seed},
        algorithms=parse_algorithms(algorithms) if algorithms else None,
        repetitions=getattr(args, 'repetitions', None),
        output_dir=args.out,
    )


def cmd_synth(args):
    manifest = _manifest(args)
    cfg = manifest.scenario
    scenario = build_scenario(cfg)
    out_dir = manifest.output_dir
    paths = exporters.export_datasets(scenario.train, out_dir)
    exporters.write_json(os.path.join(out_dir, "manifest.json"), {
        "config": manifest.to_dict(),
        "seed": cfg.seed,
        "agents": [os.path.basename(p) for p in paths],
        "assignment": list(scenario.assignment),
    })
    print_ok(f"wrote {len(paths)} agent datasets to {out_dir}")
    return 0


def cmd_run(args):
    manifest = _manifest(args)
    results, summary_path = run_and_write(manifest)
    for r in results:
        row = r.summary_row()
        log.info(f"{row['algo']:<20} seed {row['seed']:<6} avg_loss {row['avg_loss']:.5f}  faa {row['faa']:.5f}  "
                 f"agnostic {row['agnostic']:.5f}")
    print_ok(f"summary written to {summary_path}")
    return 0


def cmd_theorem_check(args):
    manifest = _manifest(args)
    verdict = run_theorem_check(args.which, manifest.scenario, args.slack)
    path = exporters.write_json(os.path.join(manifest.output_dir, f"theorem_{args.which}.json"), verdict)
    print(json.dumps(verdict, sort_keys=True))
    if not verdict["passed"]:
        raise TheoremCheckFailed(verdict)
    print_ok(f"{args.which} passed, verdict in {path}")
    return 0


def cmd_sweep(args):
    manifest = _manifest(args)
    rows, path = sweep_and_write(manifest, args.param, args.values)
    print_ok(f"{len(rows)} sweep rows written to {path}")
    return 0


COMMANDS = {
    'synth': cmd_synth,
    'run': cmd_run,
    'theorem-check': cmd_theorem_check,
    'sweep': cmd_sweep,
}


def main(argv=None):
    """Parse argv and run one subcommand; returns the process exit code"""
    args = build_parser().parse_args(argv)
    set_verbosity(args.verbose)
    try:
        set_thread_count(args.threads)
        return COMMANDS[args.command](args)
    except FocusFLError as e:
        # anything else is a bug and propagates with its traceback
        log.error(str(e))
        return e.exit_code
    finally:
        set_thread_count(None)


if __name__ == "__main__":
    sys.exit(main())
