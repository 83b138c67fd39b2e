"""
Command-line interface for GIC network building, solving and blocker comparison.

    python gic_cli.py build-dc case.case --out network.csv
    python gic_cli.py solve case.case --uniform-field 1 90 --blocker neutral --out results/
    python gic_cli.py compare-blockers case.case --line-volts volts.csv --out results/
    python gic_cli.py experiment case.case --uniform-field 1 90 --line-volts volts.csv --out results/
    python gic_cli.py validate case.case

Exit codes: 0 success, 1 usage error, 2 data or file error.
"""
import argparse
import logging
import sys

import utils
from blockers import BlockerKind, BlockerScenario, scenario_matrix, standard_scenarios
from case_io import format_network, parse_case, parse_line_voltages, write_network, write_results
from coupling import UniformField
from dc_builder import build, load_builder_config
from model import GicError, InvalidCaseError, SettingsError
from solver import SolverSettings

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2


class UsageError(Exception):
    pass


class CliParser(argparse.ArgumentParser):
    """ArgumentParser that raises instead of exiting on bad arguments"""

    def error(self, message):
        raise UsageError(message)


def _add_field_arguments(parser, required_both=False):
    if required_both:
        parser.add_argument('--uniform-field', nargs=2, type=float, metavar=('MAG', 'BEARING'), required=True,
                            help='Uniform field magnitude (V/km) and bearing (degrees from North)')
        parser.add_argument('--line-volts', required=True, help='CSV with LineID and GICInducedDCVolt columns')
        return
    group = parser.add_mutually_exclusive_group(required=True)
    group.add_argument('--uniform-field', nargs=2, type=float, metavar=('MAG', 'BEARING'),
                       help='Uniform field magnitude (V/km) and bearing (degrees from North)')
    group.add_argument('--line-volts', help='CSV with LineID and GICInducedDCVolt columns')


def build_parser():
    parser = CliParser(prog='gic_cli', description='GIC DC network analysis and blocker comparison')
    parser.add_argument('--settings', help='Settings JSON file (default: gic_settings.json)')
    verbosity = parser.add_mutually_exclusive_group()
    verbosity.add_argument('-v', '--verbose', action='store_true', help='Debug logging')
    verbosity.add_argument('-q', '--quiet', action='store_true', help='Warnings and errors only')
    commands = parser.add_subparsers(dest='command', parser_class=CliParser)

    build_dc = commands.add_parser('build-dc', help='Dump the GMD network built from a case')
    build_dc.add_argument('case')
    build_dc.add_argument('--out', help='Output file (default: stdout)')

    solve = commands.add_parser('solve', help='Solve one field and blocker scenario')
    solve.add_argument('case')
    _add_field_arguments(solve)
    solve.add_argument('--blocker', choices=[kind.value for kind in BlockerKind], default='none')
    solve.add_argument('--locations', help='Comma-separated ids to block (default: all)')
    solve.add_argument('--out', required=True, help='Output directory')

    compare = commands.add_parser('compare-blockers', help='Run no blocking and every blocker type at 100%%')
    compare.add_argument('case')
    _add_field_arguments(compare)
    compare.add_argument('--out', required=True, help='Output directory')
    compare.add_argument('--jobs', type=int, help='Parallel scenario evaluations')

    experiment = commands.add_parser('experiment', help='Uniform and non-uniform fields against every blocker type')
    experiment.add_argument('case')
    _add_field_arguments(experiment, required_both=True)
    experiment.add_argument('--out', required=True, help='Output directory')
    experiment.add_argument('--jobs', type=int, help='Parallel scenario evaluations')

    validate = commands.add_parser('validate', help='Report case diagnostics')
    validate.add_argument('case')
    return parser


def _parse_locations(text):
    if text is None:
        return None
    try:
        locations = frozenset(int(item) for item in text.split(',') if item.strip())
    except ValueError:
        raise UsageError(f"--locations must be comma-separated integers, got {text!r}")
    if not locations:
        raise UsageError("--locations needs at least one id")
    return locations


def _field_sources(args):
    fields = []
    if args.uniform_field is not None:
        magnitude, bearing = args.uniform_field
        try:
            fields.append(UniformField(magnitude, bearing % 360.0))
        except ValueError as e:
            raise UsageError(str(e))
    if args.line_volts is not None:
        fields.append(parse_line_voltages(args.line_volts))
    return fields


def _load_settings(path):
    settings = utils.load_settings(path)
    cfg = load_builder_config(settings)
    try:
        solver_settings = SolverSettings.from_dict(settings.get('solver', {}))
        n_jobs = int(settings.get('scenarios', {}).get('n_jobs', 1))
    except (TypeError, ValueError, AttributeError) as e:
        raise SettingsError(f"invalid settings: {e}")
    return cfg, solver_settings, n_jobs


def _report(rows, out_dir):
    files = write_results(rows, out_dir)
    for row in rows:
        print(f"{row.field_label:>24} {row.scenario_label:>16} {row.result.total_qloss:12.6g} MVAr")
    for path in files:
        print(f"Wrote {path}")


def _cmd_build_dc(args, cfg, solver_settings, n_jobs):
    case = parse_case(args.case)
    network, _ = build(case, cfg)
    if args.out:
        write_network(network, args.out)
        print(f"Wrote {args.out}")
    else:
        sys.stdout.write(format_network(network))
    return EXIT_OK


def _cmd_solve(args, cfg, solver_settings, n_jobs):
    scenario = BlockerScenario(BlockerKind(args.blocker), _parse_locations(args.locations))
    fields = _field_sources(args)
    case = parse_case(args.case)
    rows = scenario_matrix(case, cfg, fields, [scenario], 1, solver_settings)
    _report(rows, args.out)
    return EXIT_OK


def _cmd_compare(args, cfg, solver_settings, n_jobs):
    fields = _field_sources(args)
    case = parse_case(args.case)
    rows = scenario_matrix(case, cfg, fields, standard_scenarios(), args.jobs or n_jobs, solver_settings)
    _report(rows, args.out)
    return EXIT_OK


def _cmd_validate(args, cfg, solver_settings, n_jobs):
    try:
        parse_case(args.case)
    except InvalidCaseError as e:
        for diagnostic in e.diagnostics:
            print(f"{diagnostic.severity.upper()}: {diagnostic}")
        return EXIT_DATA
    print(f"{args.case}: OK")
    return EXIT_OK


COMMANDS = {
    'build-dc': _cmd_build_dc,
    'solve': _cmd_solve,
    'compare-blockers': _cmd_compare,
    'experiment': _cmd_compare,
    'validate': _cmd_validate,
}


def main(argv=None):
    parser = build_parser()
    try:
        try:
            args = parser.parse_args(argv)
        except SystemExit as e:
            # --help
            return e.code or EXIT_OK
        if args.command is None:
            raise UsageError('a command is required')
        if args.verbose:
            utils.configure_logging(logging.DEBUG)
        elif args.quiet:
            utils.configure_logging(logging.WARNING)
        else:
            utils.configure_logging(logging.INFO)
        cfg, solver_settings, n_jobs = _load_settings(args.settings)
        return COMMANDS[args.command](args, cfg, solver_settings, n_jobs)
    except UsageError as e:
        print(f"{parser.prog}: error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except (GicError, OSError) as e:
        print(f"ERROR: {e}", file=sys.stderr)
        return EXIT_DATA


if __name__ == '__main__':
    sys.exit(main())
