"""
Command line entry point, installed as ``cbfpds``.

Exit codes: 0 success, 1 failed reproduction or contraction checks, 2 bad
input (scenario, flags, files), 3 integration or projection failure, 4 failed
inclusion sweep.
"""
from __future__ import annotations

import argparse
import contextlib
import json
import logging
import sys

import numpy as np

from .analysis import (EXAMPLE_X0, cbf_equilibria, check_strong_monotonicity,
                       convergence_sweep, reproduce_example)
from .bounds import compute_constants, sweep_inclusion, worst_margin
from .config import get_config
from .exceptions import (CbfPdsError, IntegrationError, ProjectionError,
                         ValidationError)
from .pds import check_pds_monotonicity
from .plot import plot_trajectories
from .problem import SafeSetRegion, effective_field, validate_scenario
from .scenarios import dumps_scenario, load_scenario
from .sim import (PDS_SCHEMES, PROJECTED_EULER, Trajectory, integrate_cbf,
                  integrate_nominal, integrate_pds)
from .version import __version__

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CHECKS_FAILED = 1
EXIT_BAD_INPUT = 2
EXIT_INTEGRATION = 3
EXIT_INCLUSION = 4
# Samples used by the validation run in front of simulate
VALIDATE_SAMPLES = 500


def _exit_code(exc: Exception) -> int:
    if isinstance(exc, (IntegrationError, ProjectionError)):
        return EXIT_INTEGRATION
    return EXIT_BAD_INPUT


@contextlib.contextmanager
def _output(path):
    if path is None or path == '-':
        yield sys.stdout
    else:
        with open(path, 'w') as fd:
            yield fd


def _scenario(args, cfg):
    s = load_scenario(args.scenario, seed=cfg['seed'])
    if getattr(args, 'a', None) is not None and not isinstance(args.a, list):
        s = s.with_(a=args.a)
    return s


def _x0(args, s):
    if args.x0 is not None:
        return np.array(args.x0, dtype=float)
    if s.dim == len(EXAMPLE_X0):
        return np.array(EXAMPLE_X0)
    raise ValueError(f'--x0 is required for a {s.dim}-dimensional scenario')


def cmd_simulate(args, cfg) -> int:
    s = _scenario(args, cfg)
    validate_scenario(s, VALIDATE_SAMPLES, cfg['seed']).raise_if_failed()
    x0 = _x0(args, s)
    if args.controller == 'cbf':
        traj = integrate_cbf(s, x0, cfg['dt'], cfg['t_final'])
    elif args.controller == 'pds':
        traj = integrate_pds(s, x0, cfg['dt'], cfg['t_final'],
                             scheme=args.scheme)
    else:
        traj = integrate_nominal(s, x0, cfg['dt'], cfg['t_final'])
    traj.to_csv(args.out)
    return EXIT_OK


def cmd_bounds(args, cfg) -> int:
    s = _scenario(args, cfg)
    bundle = compute_constants(s, cfg['eps_fraction'],
                               samples=cfg['samples'], pairs=cfg['pairs'],
                               inflation=cfg['inflation'], seed=cfg['seed'])
    with _output(args.out) as fd:
        json.dump(bundle.as_dict(), fd, indent=2, sort_keys=True)
        fd.write('\n')
    return EXIT_OK


def cmd_check_inclusion(args, cfg) -> int:
    s = _scenario(args, cfg)
    bundle = compute_constants(s, cfg['eps_fraction'],
                               samples=cfg['samples'], pairs=cfg['pairs'],
                               inflation=cfg['inflation'], seed=cfg['seed'])
    a = s.a if args.a is None else args.a
    reports = sweep_inclusion(s, bundle, a, args.grid,
                              workers=cfg['workers'])
    with _output(args.out) as fd:
        for report in reports:
            fd.write(json.dumps(report.as_dict(), sort_keys=True))
            fd.write('\n')
    failed = sum(not report.passed for report in reports)
    print(f'a={a:g} a_star={bundle.a_star:.6g} points={len(reports)} '
          f'worst margin={worst_margin(reports)}', file=sys.stderr)
    if failed:
        print(f'{failed} of {len(reports)} points failed the inclusion check',
              file=sys.stderr)
        return EXIT_INCLUSION
    return EXIT_OK


def cmd_sweep(args, cfg) -> int:
    s = _scenario(args, cfg)
    rows = convergence_sweep(s, _x0(args, s), args.a, cfg['dt'],
                             cfg['t_final'], scheme=args.scheme,
                             workers=cfg['workers'])
    with _output(args.out) as fd:
        fd.write('a,sup_distance\n')
        for a, distance in rows:
            fd.write(f'{a:.17g},{distance:.17g}\n')
    return EXIT_OK


def cmd_equilibria(args, cfg) -> int:
    s = _scenario(args, cfg)
    found = cbf_equilibria(s, seeds=args.seeds, seed=cfg['seed'],
                           workers=cfg['workers'])
    with _output(args.out) as fd:
        json.dump([eq.as_dict() for eq in found], fd, indent=2)
        fd.write('\n')
    return EXIT_OK


def cmd_reproduce(args, cfg) -> int:
    report = reproduce_example(args.variant, dt=cfg['dt'],
                               t_final=cfg['t_final'], seed=cfg['seed'])
    with _output(args.out) as fd:
        json.dump(report.as_dict(), fd, indent=2)
        fd.write('\n')
    for check in report.checks:
        if not check.ok:
            print(f'FAILED {check.name}: {check.detail}', file=sys.stderr)
    return EXIT_OK if report.ok else EXIT_CHECKS_FAILED


def cmd_plot(args, cfg) -> int:
    trajectories = [Trajectory.from_csv(path) for path in args.trajectory]
    barrier = box = None
    if args.scenario is not None:
        s = load_scenario(args.scenario, seed=cfg['seed'])
        box = s.bounding_box
        if not args.no_boundary:
            barrier = s.barrier
    plot_trajectories(trajectories, args.out, barrier=barrier, box=box,
                      xlim=args.xlim, ylim=args.ylim)
    return EXIT_OK


def cmd_scenario(args, cfg) -> int:
    s = load_scenario(args.source, seed=cfg['seed'])
    if args.validate:
        report = validate_scenario(s, cfg['samples'], cfg['seed'])
        with _output(args.out) as fd:
            json.dump(report.as_dict(), fd, indent=2)
            fd.write('\n')
        report.raise_if_failed()
        return EXIT_OK
    with _output(args.out) as fd:
        fd.write(dumps_scenario(s))
        fd.write('\n')
    return EXIT_OK


def cmd_monotonicity(args, cfg) -> int:
    s = _scenario(args, cfg)
    if args.projected:
        alpha = check_pds_monotonicity(s, pairs=cfg['pairs'],
                                       seed=cfg['seed'])
    else:
        alpha = check_strong_monotonicity(
            effective_field(s), s.metric, cfg['pairs'], SafeSetRegion.of(s),
            np.random.default_rng(cfg['seed']))
    print(json.dumps({'scenario': s.name, 'alpha_est': alpha,
                      'projected': args.projected}))
    return EXIT_OK if alpha > 0 else EXIT_CHECKS_FAILED


def _add_scenario(parser, required=True):
    parser.add_argument('--scenario', required=required,
                        help='Scenario JSON file or builtin:NAME')


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog='cbfpds',
        description='CBF safety filters and projected dynamical systems',
    )
    parser.add_argument('--version', action='version',
                        version=f'%(prog)s {__version__}')
    parser.add_argument('--seed', type=int, help='Seed for all sampling')
    parser.add_argument('--log-level', default='WARNING',
                        choices=['DEBUG', 'INFO', 'WARNING', 'ERROR'])
    parser.add_argument('--workers', type=int,
                        help='Worker threads for sweeps')
    sub = parser.add_subparsers(dest='command', required=True)

    simulate = sub.add_parser('simulate', help='Integrate one trajectory')
    _add_scenario(simulate)
    simulate.add_argument('--controller', required=True,
                          choices=['nominal', 'cbf', 'pds'])
    simulate.add_argument('--a', type=float, help='Filter gain')
    simulate.add_argument('--x0', type=float, nargs='+')
    simulate.add_argument('--dt', type=float)
    simulate.add_argument('--t-final', type=float)
    simulate.add_argument('--scheme', choices=PDS_SCHEMES,
                          default=PROJECTED_EULER)
    simulate.add_argument('--out', required=True, help='Trajectory CSV')
    simulate.set_defaults(func=cmd_simulate)

    bounds = sub.add_parser('bounds', help='Constants of the inclusion bound')
    _add_scenario(bounds)
    bounds.add_argument('--eps-fraction', type=float)
    bounds.add_argument('--samples', type=int)
    bounds.add_argument('--pairs', type=int)
    bounds.add_argument('--inflation', type=float)
    bounds.add_argument('--out')
    bounds.set_defaults(func=cmd_bounds)

    inclusion = sub.add_parser('check-inclusion',
                               help='Check the inclusion on a grid')
    _add_scenario(inclusion)
    inclusion.add_argument('--a', type=float)
    inclusion.add_argument('--grid', type=int, default=32)
    inclusion.add_argument('--eps-fraction', type=float)
    inclusion.add_argument('--samples', type=int)
    inclusion.add_argument('--pairs', type=int)
    inclusion.add_argument('--inflation', type=float)
    inclusion.add_argument('--out', help='JSON lines report')
    inclusion.set_defaults(func=cmd_check_inclusion)

    sweep = sub.add_parser('sweep', help='CBF to PDS distance over gains')
    _add_scenario(sweep)
    sweep.add_argument('--a', type=float, nargs='+', required=True)
    sweep.add_argument('--x0', type=float, nargs='+')
    sweep.add_argument('--dt', type=float)
    sweep.add_argument('--t-final', type=float)
    sweep.add_argument('--scheme', choices=PDS_SCHEMES,
                       default=PROJECTED_EULER)
    sweep.add_argument('--out', help='CSV table')
    sweep.set_defaults(func=cmd_sweep)

    equilibria = sub.add_parser('equilibria',
                                help='Equilibria of the CBF closed loop')
    _add_scenario(equilibria)
    equilibria.add_argument('--a', type=float)
    equilibria.add_argument('--seeds', type=int, default=32)
    equilibria.add_argument('--out')
    equilibria.set_defaults(func=cmd_equilibria)

    reproduce = sub.add_parser('reproduce', help='Re-run the design example')
    reproduce.add_argument('--variant', required=True,
                           choices=['correct', 'wrong', 'CorrectP', 'WrongP'])
    reproduce.add_argument('--dt', type=float)
    reproduce.add_argument('--t-final', type=float)
    reproduce.add_argument('--out')
    reproduce.set_defaults(func=cmd_reproduce)

    plot = sub.add_parser('plot', help='Render trajectories as SVG')
    plot.add_argument('--trajectory', action='append', default=[],
                      help='Trajectory CSV, repeatable')
    _add_scenario(plot, required=False)
    plot.add_argument('--no-boundary', action='store_true')
    plot.add_argument('--xlim', type=float, nargs=2)
    plot.add_argument('--ylim', type=float, nargs=2)
    plot.add_argument('--out', required=True)
    plot.set_defaults(func=cmd_plot)

    scenario = sub.add_parser('scenario', help='Dump or validate a scenario')
    scenario.add_argument('--dump', dest='source', required=True,
                          help='Scenario JSON file or builtin:NAME')
    scenario.add_argument('--validate', action='store_true')
    scenario.add_argument('--samples', type=int)
    scenario.add_argument('--out')
    scenario.set_defaults(func=cmd_scenario)

    monotonicity = sub.add_parser('monotonicity',
                                  help='Sampled strong monotonicity modulus')
    _add_scenario(monotonicity)
    monotonicity.add_argument('--pairs', type=int)
    monotonicity.add_argument('--projected', action='store_true',
                              help='Include normal cone elements on the '
                                   'boundary')
    monotonicity.set_defaults(func=cmd_monotonicity)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_BAD_INPUT if exc.code else EXIT_OK
    logging.basicConfig(level=args.log_level,
                        format='%(levelname)s %(name)s: %(message)s')
    try:
        cfg = get_config(
            seed=args.seed,
            workers=args.workers,
            dt=getattr(args, 'dt', None),
            t_final=getattr(args, 't_final', None),
            eps_fraction=getattr(args, 'eps_fraction', None),
            samples=getattr(args, 'samples', None),
            pairs=getattr(args, 'pairs', None),
            inflation=getattr(args, 'inflation', None),
        )
        return args.func(args, cfg)
    except ValidationError as exc:
        print(f'Scenario validation failed: {exc}', file=sys.stderr)
        for name, detail, witness in exc.failures:
            print(f'  {name}: {detail} at {witness}', file=sys.stderr)
        return EXIT_BAD_INPUT
    except (CbfPdsError, ValueError, OSError) as exc:
        logger.debug('Command %s failed', args.command, exc_info=True)
        print(f'{type(exc).__name__}: {exc}', file=sys.stderr)
        return _exit_code(exc)


if __name__ == '__main__':
    sys.exit(main())
