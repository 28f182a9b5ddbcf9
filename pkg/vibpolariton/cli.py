'''
``vibpolariton`` command-line interface

Exit codes: 0 on success, 1 on configuration errors, 2 when a
self-consistency loop fails to converge.
'''
import argparse
import logging
import sys

from .config import THREADS_ENVIRONMENT, parse_config
from .exceptions import ConfigurationError, ConvergenceFailure, PolaritonError
from .experiments import default_registry
from .manifest import RunManifest, code_version

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIGURATION = 1
EXIT_CONVERGENCE = 2


def _common_arguments() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument('config', help='YAML configuration file')
    common.add_argument('-o', '--output', default=None,
                        help='Output directory (overrides output.directory)')
    common.add_argument('--seed', type=int, default=None,
                        help='Master random seed')
    common.add_argument('--threads', type=int, default=None,
                        help='Worker threads (overrides {})'
                        ''.format(THREADS_ENVIRONMENT))
    common.add_argument('--log-level', default='INFO',
                        choices=['DEBUG', 'INFO', 'WARNING', 'ERROR'])
    return common


def build_parser(registry=None) -> argparse.ArgumentParser:
    'Argument parser with one sub-command per registered experiment'
    registry = registry or default_registry()
    parser = argparse.ArgumentParser(
        prog='vibpolariton',
        description='Anharmonic vibrational polaritons in a cavity-coupled '
        'chain')
    parser.add_argument('--version', action='version',
                        version='%(prog)s ' + code_version())
    subparsers = parser.add_subparsers(dest='command', metavar='command')
    subparsers.required = True
    common = _common_arguments()
    for name in registry.names():
        experiment = registry.create(name)
        sub = subparsers.add_parser(name, parents=[common],
                                    help=experiment.help,
                                    description=experiment.help)
        experiment.add_arguments(sub)
    return parser


def run(args, registry=None) -> int:
    '''
    Run a parsed command line

    Returns
    -------
    exit_code : int
    '''
    registry = registry or default_registry()
    try:
        config = parse_config(args.config)
        if args.seed is not None:
            config = config.with_seed(args.seed)
        if args.threads is not None:
            config = config.with_threads(args.threads)
        if args.output is not None:
            config = config.with_output(args.output)
    except ConfigurationError as ex:
        logger.error('Configuration error: %s', ex)
        return EXIT_CONFIGURATION

    experiment = registry.create(args.command)
    manifest = RunManifest(config.output.directory, command=args.command,
                           config=config.echo(), seed=config.seed)
    exit_code = EXIT_OK
    try:
        converged = experiment.run(config, args, manifest)
        if not converged:
            logger.error('%s finished without converging', args.command)
            exit_code = EXIT_CONVERGENCE
    except ConfigurationError as ex:
        logger.error('Configuration error: %s', ex)
        exit_code = EXIT_CONFIGURATION
    except ConvergenceFailure as ex:
        logger.error('Convergence failure: %s', ex)
        manifest.record_convergence('failure', message=str(ex),
                                    residuals=ex.residuals)
        exit_code = EXIT_CONVERGENCE
    except PolaritonError as ex:
        logger.error('%s: %s', type(ex).__name__, ex)
        manifest.note('{}: {}'.format(type(ex).__name__, ex))
        exit_code = EXIT_CONVERGENCE

    manifest.exit_code = exit_code
    manifest.write()
    return exit_code


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=args.log_level,
                        format='%(asctime)s %(name)s %(levelname)s '
                        '%(message)s')
    return run(args)


if __name__ == '__main__':
    sys.exit(main())
