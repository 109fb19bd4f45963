"""
stdfbias

This file is part of stdfbias, a library for bias-corrected nonparametric
estimation of stable tail dependence functions.

Command line front end:

    stdfbias sample --model bpii --beta 3 -n 1000 --seed 7 -o s.csv
    stdfbias estimate --input s.csv --estimator ring-agg --grid 30 -o L.csv
    stdfbias rho --input s.csv
    stdfbias qcurve --input s.csv --estimator ring-agg -o q.csv
    stdfbias experiment --spec student.spec --workers 4 -o rows.csv
    stdfbias failure-prob --input s.csv --z 10000,20000 --k-margin 200 --estimator ring-agg

Exit codes: 0 on success, 1 on usage errors, 2 when the data, a fit or an
estimate fails.

MIT License
"""
import argparse
import sys
from typing import Optional, Sequence, Union

import pandas as pd
from loguru import logger

from stdfbias.errors import (DataError, DegenerateError, DomainError, FitError,
                             ModelParameterError, UnsupportedOperationError, UsageError)
from stdfbias.model.models import MODELS, build_model
from stdfbias.model.sampler import sample
from stdfbias.tools.dataset import load_dataset, ranks, write_sample_csv
from stdfbias.tools.estimators import (EmpiricalStdf, EstimatorConfig, PickandsCurve,
                                       pickands_curve, stdf_evaluator)
from stdfbias.tools.experiments import (ExperimentResult, QCurve, load_experiment_spec, qcurve,
                                        run_experiment)
from stdfbias.tools.second_order import resolve_rho, rho_hat
from stdfbias.tools.tail_probability import (GPD_FITS, FailureQuery, estimate_failure_prob,
                                             failure_prob_second_order, second_order_delta)
from stdfbias.tools.utils import (A_DEFAULT, GRID_DEFAULT, K_MARGIN_DEFAULT, R_DEFAULT,
                                  format_float, parse_floats, write_csv)

ESTIMATOR_CHOICES = ['empirical', 'ring-agg', 'tilde-agg', 'ring-agg-convex']
MODEL_CHOICES = sorted([*MODELS, 'cauchy'])

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_FAILURE = 2

# loguru's default stderr handler
_console_sink = 0


class ArgumentParser(argparse.ArgumentParser):
    """Raises :class:`UsageError` instead of exiting."""

    def error(self, message):
        raise UsageError(f'{self.prog}: error: {message}\n{self.format_usage()}')


def write_curve_csv(curve: Union[PickandsCurve, QCurve, ExperimentResult], path) -> None:
    """Writes a Pickands curve (``t,value``), a Q-curve (``theta,radius``) or experiment rows."""
    if isinstance(curve, PickandsCurve):
        frame = pd.DataFrame({'t': curve.t, 'value': curve.values})
    elif isinstance(curve, QCurve):
        frame = pd.DataFrame({'theta': curve.theta, 'radius': curve.radii})
    elif isinstance(curve, ExperimentResult):
        frame = curve.rows
    else:
        raise TypeError(f'Cannot write a {type(curve).__name__} as a curve')

    write_csv(frame, path)


def write_summary_csv(result: ExperimentResult, path) -> None:
    write_csv(result.summary(), path)


def _add_estimator_flags(parser: ArgumentParser):
    parser.add_argument('--estimator', choices=ESTIMATOR_CHOICES, default='ring-agg',
                        help='Estimator of L')
    parser.add_argument('--k', type=int, default=None,
                        help='Intermediate count of the empirical estimator')
    parser.add_argument('--a', type=float, default=A_DEFAULT, help='Scale a in (0, 1)')
    parser.add_argument('--r', type=float, default=R_DEFAULT, help='Ratio r of the rho estimator')
    parser.add_argument('--k-rho', type=int, default=None,
                        help='Level of the bias estimates (default ceil(0.99 n))')
    parser.add_argument('--kappa', type=int, default=None,
                        help='Aggregate over k = 1..kappa (default n - 1)')
    parser.add_argument('--rho', type=float, default=None,
                        help='Use this rho instead of estimating it')
    parser.add_argument('--aggregation', choices=['median', 'mean'], default='median')
    parser.add_argument('--no-clamp', action='store_true', default=False,
                        help='Do not project estimates onto the bounds of L')


def _config(args) -> EstimatorConfig:
    return EstimatorConfig(k=args.k, a=args.a, r=args.r, k_rho=args.k_rho, kappa=args.kappa,
                           rho_override=args.rho, clamp=not args.no_clamp,
                           aggregation=args.aggregation)


def _tag(args) -> str:
    return args.estimator.replace('-', '_')


def build_parser() -> ArgumentParser:
    parser = ArgumentParser(prog='stdfbias',
                            description='Bias-corrected estimation of stable tail dependence')
    parser.add_argument('-v', '--verbose', action='store_true', default=False,
                        help='Debug logging')
    commands = parser.add_subparsers(dest='command', required=True, parser_class=ArgumentParser)

    command = commands.add_parser('sample', help='Draw a sample from a reference model')
    command.add_argument('--model', choices=MODEL_CHOICES, required=True)
    for name in ('beta', 'nu', 'theta', 'tau', 's'):
        command.add_argument(f'--{name}', type=float, default=None,
                             help=f'Model parameter {name}')
    command.add_argument('-n', type=int, required=True, help='Sample size')
    command.add_argument('--seed', type=int, required=True, help='Unsigned 64-bit seed')
    command.add_argument('-o', '--output', default=None, help='CSV path (stdout if omitted)')

    command = commands.add_parser('estimate', help='Estimate the Pickands curve of a dataset')
    command.add_argument('--input', required=True, help='Dataset CSV')
    _add_estimator_flags(command)
    command.add_argument('--grid', type=int, default=GRID_DEFAULT, help='Grid size T')
    command.add_argument('-o', '--output', default=None, help='CSV path (stdout if omitted)')

    command = commands.add_parser('rho', help='Estimate the second-order parameter')
    command.add_argument('--input', required=True, help='Dataset CSV')
    command.add_argument('--a', type=float, default=A_DEFAULT)
    command.add_argument('--r', type=float, default=R_DEFAULT)
    command.add_argument('--k-rho', type=int, default=None)
    command.add_argument('--x', type=parse_floats, default=None,
                         help='Evaluation point (default 0.5,...,0.5)')

    command = commands.add_parser('qcurve', help='Estimate the Q-curve of a dataset')
    command.add_argument('--input', required=True, help='Dataset CSV')
    _add_estimator_flags(command)
    command.add_argument('--grid', type=int, default=GRID_DEFAULT, help='Grid size T')
    command.add_argument('-o', '--output', default=None, help='CSV path (stdout if omitted)')

    command = commands.add_parser('experiment', help='Run a Monte Carlo experiment')
    command.add_argument('--spec', required=True, help='key=value experiment spec file')
    command.add_argument('--workers', type=int, default=None,
                         help='Ray CPUs, 0 runs serially (overrides the spec)')
    command.add_argument('-o', '--output', default=None, help='Result rows CSV')
    command.add_argument('--summary', default=None, help='Summary CSV (stdout if omitted)')

    command = commands.add_parser('failure-prob', help='Estimate a joint tail probability')
    command.add_argument('--input', required=True, help='Dataset CSV')
    command.add_argument('--z', type=parse_floats, required=True, help='Extreme levels z1,z2')
    margins = command.add_mutually_exclusive_group()
    margins.add_argument('--p', type=parse_floats, default=None,
                         help='Known marginal exceedance probabilities p1,p2')
    margins.add_argument('--k-margin', type=int, default=None,
                         help=f'POT level of the margins (default {K_MARGIN_DEFAULT})')
    command.add_argument('--fit', choices=sorted(GPD_FITS), default='pwm',
                         help='GPD fit of the POT margins')
    _add_estimator_flags(command)
    command.add_argument('--grid', type=int, default=GRID_DEFAULT,
                         help='Grid size of the convexified estimator')
    command.add_argument('--second-order', action='store_true', default=False,
                         help='Add the second-order term (known margins only, needs --k)')

    return parser


def _output(path):
    return sys.stdout if path is None else path


def command_sample(args) -> None:
    params = {name: getattr(args, name) for name in ('beta', 'nu', 'theta', 'tau', 's')}
    model = build_model(args.model, **params)
    draws = sample(model, args.n, args.seed)

    write_sample_csv(draws, _output(args.output))
    logger.info('Wrote {n} draws of {model}', n=draws.n, model=model)


def command_estimate(args) -> None:
    data = load_dataset(args.input, d=2)
    curve = pickands_curve(ranks(data), _config(args), _tag(args), args.grid)

    write_curve_csv(curve, _output(args.output))


def command_rho(args) -> None:
    data = load_dataset(args.input)
    estimator = EmpiricalStdf(ranks(data))
    config = EstimatorConfig(a=args.a, r=args.r, k_rho=args.k_rho).resolve(data.n)
    estimate = rho_hat(estimator, config.k_rho, config.a, config.r, args.x)

    write_csv(pd.DataFrame([estimate.to_record()]), sys.stdout, header=False)


def command_qcurve(args) -> None:
    data = load_dataset(args.input, d=2)
    evaluate = stdf_evaluator(ranks(data), _config(args), _tag(args), grid=args.grid)

    write_curve_csv(qcurve(evaluate, args.grid), _output(args.output))


def command_experiment(args) -> None:
    spec = load_experiment_spec(args.spec)
    result = run_experiment(spec, workers=args.workers)

    if args.output is not None:
        write_curve_csv(result, args.output)

    write_summary_csv(result, _output(args.summary))


def command_failure_prob(args) -> None:
    data = load_dataset(args.input)
    estimator = EmpiricalStdf(ranks(data))
    config = _config(args).resolve(data.n)
    query = FailureQuery(z=tuple(args.z), p=None if args.p is None else tuple(args.p),
                         k_margin=None if args.p is not None else
                         (args.k_margin or K_MARGIN_DEFAULT), fit=args.fit)
    L_estimate = stdf_evaluator(estimator, config, _tag(args), grid=args.grid)

    if args.second_order:
        if query.mode != 'known':
            raise UsageError('--second-order needs known margins (--p)')
        if config.k is None:
            raise UsageError('--second-order needs --k')

        rho = resolve_rho(estimator, config)
        value = failure_prob_second_order(query.p, L_estimate,
                                          second_order_delta(estimator, config.k, rho),
                                          config.k, data.n, rho)
    else:
        value = estimate_failure_prob(data, query, L_estimate)

    sys.stdout.write(format_float(value) + '\n')


COMMANDS = {
    'sample': command_sample,
    'estimate': command_estimate,
    'rho': command_rho,
    'qcurve': command_qcurve,
    'experiment': command_experiment,
    'failure-prob': command_failure_prob,
}


def _configure_console(verbose: bool) -> None:
    global _console_sink

    try:
        logger.remove(_console_sink)
    except ValueError:
        pass

    _console_sink = logger.add(sys.stderr, level='DEBUG' if verbose else 'INFO')


def run_cli(argv: Optional[Sequence[str]] = None) -> int:
    """Parses ``argv`` and runs the subcommand; returns the exit code."""
    parser = build_parser()

    try:
        args = parser.parse_args(argv)
    except UsageError as error:
        sys.stderr.write(f'{error}\n')
        return EXIT_USAGE
    except SystemExit as error:
        # --help
        return int(error.code or 0)

    _configure_console(args.verbose)

    try:
        COMMANDS[args.command](args)
    except (UsageError, ModelParameterError) as error:
        logger.error('{error}', error=error)
        sys.stderr.write(parser.format_usage())
        return EXIT_USAGE
    except (DataError, FitError, DomainError, DegenerateError,
            UnsupportedOperationError) as error:
        logger.error('{command} failed: {error}', command=args.command, error=error)
        return EXIT_FAILURE

    return EXIT_OK


def run():
    """Console entry point."""
    # initialize logger
    logger.add('stdfbias_errors_{time}.log', delay=True,
               backtrace=True, diagnose=True, level='ERROR', rotation='10 MB')

    sys.exit(run_cli(sys.argv[1:]))


if __name__ == '__main__':
    run()
