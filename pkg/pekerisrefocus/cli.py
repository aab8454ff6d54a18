import argparse
import logging
import sys

from .pekerisrefocus import PRESETS, ExperimentRunner


def _parser():
    parser = argparse.ArgumentParser(prog='pekerisrefocus',
                                     description='Mode coupling and time-reversal refocusing in a random Pekeris '
                                                 'waveguide')
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument('--config', help='JSON or INI configuration file')
    common.add_argument('--out', help='output directory (default results)')
    common.add_argument('--seed', type=int, help='root seed of every random draw')
    common.add_argument('--threads', type=int, help='worker processes for Monte Carlo batches')
    common.add_argument('-v', '--verbose', action='count', default=0, help='log to stderr (-vv for debug)')

    sub = parser.add_subparsers(dest='subcommand', metavar='subcommand')
    sub.required = True
    sub.add_parser('modes', parents=[common], help='propagating modes of the waveguide')
    coupling = sub.add_parser('coupling', parents=[common], help='coupling and loss matrices')
    power = sub.add_parser('power', parents=[common], help='mean mode powers against distance')
    for p in (coupling, power):
        p.add_argument('--nearest-neighbor', action='store_true', default=None,
                       help='keep only nearest-neighbour coupling and the loss of the last mode')
    power.add_argument('--z-max', type=float, help='largest propagation distance')
    power.add_argument('--checkpoints', type=int, help='number of equispaced checkpoints in [0, z_max]')
    power.add_argument('--tau-sweep', type=float, nargs='+',
                       help='coupling strengths tau of the strong and weak sweep')
    power.add_argument('--mc-paths', type=int, help='jump Markov paths checked against the power equations')

    diffusion = sub.add_parser('diffusion', parents=[common], help='continuum diffusion of the mode power')
    profile = sub.add_parser('profile', parents=[common], help='refocused transverse profiles')
    resolution = sub.add_parser('resolution', parents=[common], help='refocusing width against distance')
    for p in (diffusion, profile, resolution):
        p.add_argument('--a0', type=float)
        p.add_argument('--a', type=float)
        p.add_argument('--d', type=float)
        p.add_argument('--n1', type=float)
        p.add_argument('--bc', choices=('absorbing', 'reflecting'))
        p.add_argument('--cells', type=int)
    diffusion.add_argument('--z', type=float, nargs='+', help='checkpoint distances')
    for p in (profile, resolution):
        p.add_argument('--L', type=float, nargs='+', help='propagation distances')
    profile.add_argument('--alpha-m', type=float, help='mirror size exponent alpha_M')
    profile.add_argument('--mirror-center', type=float, help='mirror center d_M')
    profile.add_argument('--mirror-half-widths', type=float, nargs=2, metavar=('D1', 'D2'),
                         help='scaled half widths d~1 d~2')
    profile.add_argument('--x0', type=float, help='source depth')
    profile.add_argument('--lossless', action='store_true', default=None, help='reflecting bottom, no radiation loss')

    montecarlo = sub.add_parser('montecarlo', parents=[common], help='direct simulation of the coupled mode ODE')
    montecarlo.add_argument('--epsilon', type=float)
    montecarlo.add_argument('--realizations', type=int)
    montecarlo.add_argument('--bins', type=int, help='radiation bins')
    montecarlo.add_argument('--mode-in', type=int, help='launched mode')

    validate = sub.add_parser('validate', parents=[common], help='run the validation suite')
    validate.add_argument('--slow', action='store_true', default=None, help='include slow checks')
    validate.add_argument('--medium', choices=('exponential', 'cosine', 'constant', 'zero'), help='medium preset')

    preset = sub.add_parser('preset', parents=[common], help='reproduce a reference figure')
    preset.add_argument('name', choices=sorted(PRESETS))
    return parser


def overrides_from(args):
    """ Configuration blocks set by command line flags. Unset flags are left out. """
    get = lambda name: getattr(args, name, None)
    mirror = {'d_M': get('mirror_center'), 'alpha_M': get('alpha_m')}
    if get('mirror_half_widths'):
        mirror['d_tilde_1'], mirror['d_tilde_2'] = args.mirror_half_widths
    blocks = {
        'run': {'out': get('out'), 'seed': get('seed'), 'threads': get('threads'), 'z': get('z'), 'L': get('L'),
                'z_max': get('z_max'), 'checkpoints': get('checkpoints'), 'tau_sweep': get('tau_sweep'),
                'mc_paths': get('mc_paths'), 'x0': get('x0'), 'lossless': get('lossless'),
                'nearest_neighbor': get('nearest_neighbor'), 'slow': get('slow'), 'medium': get('medium')},
        'diffusion': {'a0': get('a0'), 'a': get('a'), 'd': get('d'), 'n1': get('n1'), 'bc': get('bc'),
                      'cells': get('cells')},
        'mirror': mirror,
        'montecarlo': {'epsilon': get('epsilon'), 'realizations': get('realizations'), 'bins': get('bins'),
                       'mode_in': get('mode_in')},
    }
    return {block: {k: v for k, v in values.items() if v is not None}
            for block, values in blocks.items() if any(v is not None for v in values.values())}


def main(argv=None):
    args = _parser().parse_args(argv)
    if args.verbose:
        logging.basicConfig(stream=sys.stderr, level=logging.DEBUG if args.verbose > 1 else logging.INFO,
                            format='%(asctime)s %(name)s %(levelname)s %(message)s')
    runner = ExperimentRunner(config=args.config, overrides=overrides_from(args))
    if args.subcommand == 'preset':
        return runner.run(preset=args.name)
    return runner.run(args.subcommand)


if __name__ == '__main__':
    sys.exit(main())
