# -*- coding: utf-8 -*-
"""
The :mod:`shelbylab.scripts` module handles the command line interface. Every
subcommand writes its results into the output directory given by ``--out``
and returns an exit code: 0 on success, 1 on I/O or configuration errors, and
2 when a scenario's expectations or an incentive check fail.

.. autofunction:: main

.. autofunction:: parse_args

.. autofunction:: run_scenario
"""

import os
import sys
import json
import argparse
import datetime
import pkg_resources
import pandas as pd
import yaml

from . import __version__, global_config, _global_config_factory_defaults, global_config_file, default_log_level
from .exceptions import ParameterError
from .coding.codec import CodingParams
from .storage.prep import Blob, prepare, reassemble, save_prepared, load_prepared
from .analysis.economics import check_all
from .analysis.reliability import FailureModel, AvailabilityModel, durability, availability, reliability_grid
from .simulation.scenario import ScenarioSelector, load_params_file
from .simulation.experiments import (simulate, simulate_trial, nash_test, mutual_dishonesty_test,
                                     coalition_test)

import logging
logger = logging.getLogger(__name__)


SCHEMA_VERSION = 1

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_FAILED = 2


def example_file(name):
    """
    The path of a bundled example file.
    """
    return pkg_resources.resource_filename('shelbylab', f'example/{name}')


def _add_common_arguments(parser, defaults):
    parser.add_argument('--seed', type=int, default=None,
                        help='override the seed of the scenario'
                             f' (default: the scenario\'s own, or {defaults["seed"]})')
    parser.add_argument('--trials', type=int, default=None,
                        help='override the number of trials'
                             f' (default: the scenario\'s own, or {defaults["trials"]})')
    parser.add_argument('--out',
                        help='the directory for output files'
                             f' (default: {defaults["out"]})')
    parser.add_argument('--workers', type=int,
                        help='the number of processes running trials in parallel'
                             f' (default: {defaults["workers"]})')

    group = parser.add_mutually_exclusive_group()
    group.add_argument('--deterministic', dest='deterministic',
                       action='store_true',
                       help='omit timestamps from reports so that repeated '
                            'runs produce identical files'
                            f'{" (default)" if defaults["deterministic"] else ""}')
    group.add_argument('--no-deterministic', dest='deterministic',
                       action='store_false',
                       help='stamp reports with the time they were written'
                            f'{" (default)" if not defaults["deterministic"] else ""}')

    group = parser.add_mutually_exclusive_group()
    group.add_argument('--debug', dest='debug',
                       action='store_true',
                       help='log every step of the simulation, with source lines'
                            f'{" (default)" if defaults["debug"] else ""}')
    group.add_argument('--no-debug', dest='debug',
                       action='store_false',
                       help='log progress and problems only'
                            f'{" (default)" if not defaults["debug"] else ""}')

    parser.add_argument('--use-factory-defaults',
                        action='store_true',
                        help='ignore your global config file and the other '
                             'options, using built-in defaults')

def _add_scenario_arguments(parser, defaults):
    parser.add_argument('file',
                        help='the path to a scenario YAML file, or "example" '
                             'for the bundled equilibrium scenarios')
    parser.add_argument('scenario', nargs='?',
                        help='the name of a scenario in the file (default: '
                             'every scenario in the file)')
    group = parser.add_mutually_exclusive_group()
    group.add_argument('--force', dest='force',
                       action='store_true',
                       help='run even if the economic parameters fail an '
                            'incentive check'
                            f'{" (default)" if defaults["force"] else ""}')
    group.add_argument('--no-force', dest='force',
                       action='store_false',
                       help='refuse to run scenarios whose economic '
                            'parameters fail an incentive check'
                            f'{" (default)" if not defaults["force"] else ""}')


def parse_args(argv):
    """
    Parse the command line. ``argv[0]`` is the program name.
    """

    description = """
    shelbylab encodes and commits blobs, evaluates the incentive checks and
    reliability of a decentralized hot storage protocol, and simulates its
    audit epochs with strategic storage providers.
    """

    epilog = f"""
    Every default shown here comes from the [defaults] section of
    ~/{os.path.relpath(global_config_file, os.path.expanduser('~'))}, where you
    can change it.
    """

    defaults = global_config['defaults']

    parser = argparse.ArgumentParser(prog='shelbylab', description=description, epilog=epilog)
    parser.add_argument('-V', '--version',
                        action='version',
                        version='shelbylab {}'.format(__version__))

    common = argparse.ArgumentParser(add_help=False)
    common.set_defaults(**defaults)
    _add_common_arguments(common, defaults)

    subparsers = parser.add_subparsers(dest='command', metavar='command')
    subparsers.required = True

    p = subparsers.add_parser('run', parents=[common],
                              help='run the experiment of each scenario and '
                                   'check its expectations')
    _add_scenario_arguments(p, defaults)

    p = subparsers.add_parser('simulate', parents=[common],
                              help='tabulate every provider\'s utility under '
                                   'the scenario\'s strategy mix')
    _add_scenario_arguments(p, defaults)

    p = subparsers.add_parser('nash-test', parents=[common],
                              help='compare honesty with every unilateral '
                                   'deviation')
    _add_scenario_arguments(p, defaults)
    p.add_argument('--deviations', nargs='+',
                   help='the strategy presets to test (default: the '
                        'scenario\'s, or all deviations)')

    p = subparsers.add_parser('mutual-dishonesty-test', parents=[common],
                              help='measure the utility of reporting a 1 '
                                   'when every provider colludes')
    _add_scenario_arguments(p, defaults)

    p = subparsers.add_parser('coalition-test', parents=[common],
                              help='compare honesty with joint deviations '
                                   'of small coalitions')
    _add_scenario_arguments(p, defaults)
    p.add_argument('--sizes', type=int, nargs='+',
                   help='the coalition sizes to test (default: the '
                        'scenario\'s)')

    p = subparsers.add_parser('prepare', parents=[common],
                              help='partition, erasure code and commit a file')
    p.add_argument('input', help='the file to prepare')
    p.add_argument('--k', type=int, default=4, help='data chunks per chunkset (default: 4)')
    p.add_argument('--m', type=int, default=2, help='parity chunks per chunkset (default: 2)')
    p.add_argument('--scheme', choices=['Clay', 'ReedSolomon'], default='Clay',
                   help='the erasure code (default: Clay)')
    p.add_argument('--chunkset-size', type=int,
                   default=global_config['simulation']['chunkset_size'],
                   help='bytes per chunkset, a multiple of k times the '
                        'sub-packetization'
                        f' (default: {global_config["simulation"]["chunkset_size"]})')
    p.add_argument('--sample-size', type=int,
                   default=global_config['simulation']['sample_size'],
                   help='bytes per Merkle leaf'
                        f' (default: {global_config["simulation"]["sample_size"]})')

    p = subparsers.add_parser('reassemble', parents=[common],
                              help='decode a prepared blob from its chunks')
    p.add_argument('directory', help='a directory written by prepare')
    p.add_argument('--range', type=int, nargs=2, metavar=('OFFSET', 'LENGTH'),
                   help='read only LENGTH bytes starting at OFFSET')
    p.add_argument('--lost', type=int, nargs='+', default=[],
                   help='chunk indices to leave out of decoding')
    p.add_argument('--output',
                   help='the file to write (default: the blob id inside --out)')

    p = subparsers.add_parser('econ-check', parents=[common],
                              help='evaluate the incentive checks of an '
                                   'economic parameter file')
    p.add_argument('params', nargs='?',
                   help='the path to a parameter YAML file (default: the '
                        'bundled example)')
    p.add_argument('--prct-fake', type=float,
                   help='the fraction of chunks a cheater fakes (default: the file\'s, or 0.1)')
    p.add_argument('--total-committed', type=int,
                   help='the chunks a cheater committed to (default: the file\'s, or 1000)')

    p = subparsers.add_parser('reliability', parents=[common],
                              help='tabulate durability and availability')
    p.add_argument('--n-nodes', type=int, default=16, help='chunks per chunkset (default: 16)')
    p.add_argument('--m', type=int, default=6, help='tolerable chunk losses (default: 6)')
    p.add_argument('--p-loss', type=float, default=0.5,
                   help='probability a failure trigger destroys a chunk (default: 0.5)')
    p.add_argument('--mttd', type=float, default=24, help='hours to detect a loss (default: 24)')
    p.add_argument('--mttr', type=float, default=12, help='hours to rebuild a chunk (default: 12)')
    p.add_argument('--dc-count', type=int, default=5, help='datacenters (default: 5)')
    p.add_argument('--dc-uptime', type=float, default=0.98, help='datacenter uptime (default: 0.98)')
    p.add_argument('--min-dcs', type=int, default=3, help='datacenters needed online (default: 3)')
    p.add_argument('--systemic-minutes', type=float, default=30,
                   help='systemic outage minutes per year (default: 30)')

    args = parser.parse_args(argv[1:])

    if args.use_factory_defaults:
        # seed and trials stay None so that scenarios keep their own
        factory = _global_config_factory_defaults['defaults']
        vars(args).update({k: v for k, v in factory.items() if k not in ('seed', 'trials')})

    # also undoes an earlier --debug in the same session
    logger.parent.setLevel(logging.DEBUG if args.debug else default_log_level)
    logger.debug(f'Running {args.command} with {vars(args)}')
    logger.debug(f'Global config is {global_config}')

    return args


def _stamp(payload, args):
    payload = {'schema_version': SCHEMA_VERSION, **payload}
    if not args.deterministic:
        payload['generated'] = datetime.datetime.now().isoformat(timespec='seconds')
    return payload

def write_json(path, payload, args):
    """
    Write ``payload`` with a schema version and, unless running
    deterministically, a timestamp.
    """
    os.makedirs(os.path.dirname(path) or '.', exist_ok=True)
    with open(path, 'w') as f:
        json.dump(_stamp(payload, args), f, indent=2, sort_keys=True, default=_json_default)
        f.write('\n')
    logger.info(f'Wrote {path}')
    return path

def write_csv(path, table):
    os.makedirs(os.path.dirname(path) or '.', exist_ok=True)
    table.to_csv(path, index=False, float_format='%.12g')
    logger.info(f'Wrote {path}')
    return path

def _json_default(obj):
    # numpy scalars and tuples of them
    if hasattr(obj, 'item'):
        return obj.item()
    if isinstance(obj, (set, frozenset)):
        return sorted(obj)
    raise TypeError(f'{type(obj).__name__} is not JSON serializable')


def _scenarios(args):
    """
    The scenarios named on the command line, with ``--seed`` and
    ``--trials`` applied.
    """
    file = example_file('equilibrium.scenario') if args.file == 'example' else args.file
    selector = ScenarioSelector(file=file)
    names = selector.keys if args.scenario is None else [args.scenario]
    scenarios = []
    for name in names:
        scenario = selector.scenario(name)
        changes = {}
        if args.seed is not None:
            changes['seed'] = args.seed
        if args.trials is not None:
            changes['trials'] = args.trials
        scenarios.append(scenario.replace(**changes) if changes else scenario)
    return scenarios

def _admit(scenario, args, out):
    """
    Write the scenario's incentive report. Returns whether the scenario may
    run.
    """
    report = scenario.check()
    write_json(os.path.join(out, 'incentive_report.json'), report.to_dict(), args)
    if not report.satisfied:
        if args.force:
            logger.warning(f'Running {scenario.name} although its economic parameters fail incentive checks')
        else:
            logger.error(f'Economic parameters of {scenario.name} fail incentive checks; use --force to run anyway')
            return False
    return True

def _failed_expectations(expect, measured):
    failed = []
    for key, wanted in sorted(expect.items()):
        if key not in measured:
            logger.warning(f'Expectation "{key}" does not apply to this experiment, ignoring it')
            continue
        if measured[key] != wanted:
            failed.append(f'{key}: expected {wanted}, measured {measured[key]}')
    return failed


def run_scenario(scenario, args, experiment=None):
    """
    Run the experiment of ``scenario`` (or ``experiment`` if given), write
    every output into a subdirectory of ``args.out`` named after the
    scenario, and return an exit code.
    """
    experiment = scenario.experiment if experiment is None else experiment
    out = os.path.join(args.out, scenario.name)
    os.makedirs(out, exist_ok=True)
    logger.info(f'Running {experiment} on scenario {scenario.name}')

    if not _admit(scenario, args, out):
        return EXIT_ERROR

    # the ledger history of the first trial
    world = simulate_trial(scenario, scenario.strategies(), 0)
    world.ledger.write_event_log(os.path.join(out, 'events.ndjson'))

    workers = args.workers
    measured = {}
    summary = {'scenario': scenario.to_dict(), 'experiment': experiment}
    if experiment == 'simulate':
        table = simulate(scenario, workers=workers)
        write_csv(os.path.join(out, 'utility.csv'), table)
        measured.update(table.attrs)
        summary['utility'] = table.to_dict(orient='records')
    elif experiment == 'nash':
        deviations = getattr(args, 'deviations', None) or scenario.deviations
        table = nash_test(scenario, deviations, workers=workers)
        write_csv(os.path.join(out, 'nash.csv'), table)
        measured['nash_passes'] = table.attrs['passed']
        summary['nash'] = table.to_dict(orient='records')
    elif experiment == 'mutual_dishonesty':
        result = mutual_dishonesty_test(scenario, workers=workers)
        measured['mutual_dishonesty_passes'] = result['passed']
        measured['negative_per_one_utility'] = result['negative']
        summary['mutual_dishonesty'] = result
    elif experiment == 'coalition':
        sizes = getattr(args, 'sizes', None) or scenario.coalition_sizes
        tables = [coalition_test(scenario, size, scenario.joint_deviations, workers=workers)
                  for size in sizes]
        table = pd.concat(tables, ignore_index=True)
        write_csv(os.path.join(out, 'coalition.csv'), table)
        measured['coalition_passes'] = all(t.attrs['passed'] for t in tables)
        summary['coalition'] = table.to_dict(orient='records')
    else:
        raise ParameterError(f'unknown experiment "{experiment}"')
    measured.setdefault('conserved', world.ledger.check_conservation())

    model = FailureModel(n_nodes=scenario.coding.n, m=scenario.coding.m)
    write_csv(os.path.join(out, 'reliability.csv'),
              reliability_grid(m_values=range(1, scenario.coding.n), n_nodes=scenario.coding.n,
                               p_chunk_loss_on_trigger=model.p_chunk_loss_on_trigger))

    failed = _failed_expectations(scenario.expect, measured)
    summary['measured'] = measured
    summary['failed_expectations'] = failed
    write_json(os.path.join(out, 'summary.json'), summary, args)
    for message in failed:
        logger.error(f'Scenario {scenario.name} failed an expectation: {message}')
    return EXIT_FAILED if failed else EXIT_OK


EXPERIMENT_COMMANDS = {
    'simulate': 'simulate',
    'nash-test': 'nash',
    'mutual-dishonesty-test': 'mutual_dishonesty',
    'coalition-test': 'coalition',
}

def _run_scenarios(args):
    experiment = EXPERIMENT_COMMANDS.get(args.command)
    code = EXIT_OK
    for scenario in _scenarios(args):
        code = max(code, run_scenario(scenario, args, experiment))
    return code

def _prepare(args):
    with open(args.input, 'rb') as f:
        data = f.read()
    params = CodingParams(args.k, args.m, scheme=args.scheme)
    blob = Blob(os.path.basename(args.input), data)
    prepared = prepare(blob, params, args.chunkset_size, args.sample_size, workers=args.workers)
    save_prepared(prepared, args.out)
    logger.info(f'Blob root {prepared.blob_root.root.hex()}')
    return EXIT_OK

def _reassemble(args):
    prepared = load_prepared(args.directory)
    data = reassemble(prepared, args.range, lost=args.lost)
    output = args.output or os.path.join(args.out, prepared.blob_id)
    os.makedirs(os.path.dirname(output) or '.', exist_ok=True)
    with open(output, 'wb') as f:
        f.write(data)
    logger.info(f'Wrote {len(data)} bytes to {output}')
    return EXIT_OK

def _econ_check(args):
    file = args.params or example_file('params.yml')
    params, prct_fake, total_committed = load_params_file(file)
    if args.prct_fake is not None:
        prct_fake = args.prct_fake
    if args.total_committed is not None:
        total_committed = args.total_committed
    report = check_all(params, prct_fake, total_committed)
    print(report.to_table())
    write_json(os.path.join(args.out, 'incentive_report.json'),
               {'params': params.to_dict(), 'prct_fake': prct_fake,
                'total_committed': total_committed, **report.to_dict()}, args)
    return EXIT_OK if report.satisfied else EXIT_FAILED

def _reliability(args):
    model = FailureModel(n_nodes=args.n_nodes, p_chunk_loss_on_trigger=args.p_loss,
                         mttd_hours=args.mttd, mttr_rebuild_hours=args.mttr, m=args.m)
    p_loss = durability(model)
    p_unavailable = availability(AvailabilityModel(
        dc_count=args.dc_count, dc_uptime=args.dc_uptime, min_dcs_required=args.min_dcs,
        systemic_outage_minutes_per_year=args.systemic_minutes, p_data_loss=p_loss))
    print(f'P(data loss)   {p_loss:.3g}')
    print(f'P(unavailable) {p_unavailable:.3g}')
    write_csv(os.path.join(args.out, 'reliability.csv'),
              reliability_grid(m_values=range(1, args.n_nodes), n_nodes=args.n_nodes,
                               p_chunk_loss_on_trigger=args.p_loss,
                               availability_model=AvailabilityModel(
                                   dc_count=args.dc_count, dc_uptime=args.dc_uptime,
                                   min_dcs_required=args.min_dcs,
                                   systemic_outage_minutes_per_year=args.systemic_minutes)))
    write_json(os.path.join(args.out, 'reliability.json'),
               {'p_data_loss': p_loss, 'p_unavailable': p_unavailable}, args)
    return EXIT_OK

COMMANDS = {
    'run': _run_scenarios,
    'simulate': _run_scenarios,
    'nash-test': _run_scenarios,
    'mutual-dishonesty-test': _run_scenarios,
    'coalition-test': _run_scenarios,
    'prepare': _prepare,
    'reassemble': _reassemble,
    'econ-check': _econ_check,
    'reliability': _reliability,
}


def main(argv=None):
    """
    Run the command line interface and return its exit code.
    """
    args = parse_args(sys.argv if argv is None else argv)
    try:
        return COMMANDS[args.command](args)
    except (OSError, yaml.YAMLError, ValueError, KeyError, IndexError) as e:
        logger.error(f'{type(e).__name__}: {e}')
        logger.debug('Traceback', exc_info=True)
        return EXIT_ERROR
