#!/usr/bin/env python3

__package__ = 'onlinevis.cli'
__command__ = 'onlinevis ablate'

import sys
import argparse

from typing import Optional, List, IO

from onlinevis.misc.util import docstring
from ..logging_util import SmartFormatter, reject_stdin
from ..main import ablate, parse_overrides, ABLATION_VARIANTS, DEFAULT_D_VALUES, DEFAULT_K_VALUES
from . import resolve_path


def int_list(value: str) -> List[int]:
    try:
        return [int(v) for v in value.split(',') if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f'expected comma-separated integers, got {value!r}')


@docstring(ablate.__doc__)
def main(args: Optional[List[str]]=None, stdin: Optional[IO]=None, pwd: Optional[str]=None) -> None:
    parser = argparse.ArgumentParser(
        prog=__command__,
        description=ablate.__doc__,
        add_help=True,
        formatter_class=SmartFormatter,
    )
    parser.add_argument('--data', '-d', type=str, required=True, help='Dataset directory, ideally generated with a high --crossing-rate')
    parser.add_argument('--out', '-o', type=str, required=True, help='Directory for ablation.csv')
    parser.add_argument('--preset', type=str, choices=('toy', 'paper'), default='toy', help='Model size preset (default: toy)')
    parser.add_argument('--iters', type=int, default=300, help='Training iterations per row (default: 300)')
    parser.add_argument('--seeds', type=int_list, default=[0, 1, 2], help='Comma-separated seeds (default: 0,1,2)')
    parser.add_argument('--variants', type=str, default=None, help='Comma-separated variants (default: {})'.format(','.join(ABLATION_VARIANTS)))
    parser.add_argument('--d-values', type=int_list, default=list(DEFAULT_D_VALUES), help='Memory lengths for the d sweep (default: 2,3,4,8)')
    parser.add_argument('--k-values', type=int_list, default=list(DEFAULT_K_VALUES), help='Tokens per frame for the k sweep (default: 5,10,15,20)')
    parser.add_argument('--no-sweeps', action='store_true', help='Only run the variant grid, skip the d and k sweeps')
    parser.add_argument('--precision', type=str, choices=('f32', 'f64'), default='f32', help='Float precision of the parameters (default: f32)')
    parser.add_argument('--set', dest='overrides', action='append', default=[], metavar='KEY=VALUE', help='Override a model, loss or training config value for every row')
    command = parser.parse_args(args or ())
    reject_stdin(__command__, stdin)

    ablate(
        data_dir=resolve_path(command.data, pwd),
        out_dir=resolve_path(command.out, pwd),
        preset=command.preset,
        iters=command.iters,
        seeds=command.seeds,
        variants=[v.strip() for v in command.variants.split(',') if v.strip()] if command.variants else None,
        d_values=command.d_values,
        k_values=command.k_values,
        sweeps=not command.no_sweeps,
        precision=command.precision,
        overrides=parse_overrides(command.overrides),
    )


if __name__ == '__main__':
    main(args=sys.argv[1:], stdin=sys.stdin)
