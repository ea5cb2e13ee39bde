#!/usr/bin/env python3

__package__ = 'onlinevis.cli'
__command__ = 'onlinevis train'

import sys
import argparse

from typing import Optional, List, IO

from onlinevis.misc.util import docstring
from ..logging_util import SmartFormatter, reject_stdin
from ..main import train, parse_overrides
from . import resolve_path


@docstring(train.__doc__)
def main(args: Optional[List[str]]=None, stdin: Optional[IO]=None, pwd: Optional[str]=None) -> None:
    parser = argparse.ArgumentParser(
        prog=__command__,
        description=train.__doc__,
        add_help=True,
        formatter_class=SmartFormatter,
    )
    parser.add_argument('--data', '-d', type=str, required=True, help='Dataset directory written by gen-data')
    parser.add_argument('--out', '-o', type=str, required=True, help='Directory for the checkpoint, loss.csv and resolved-config.json')
    parser.add_argument('--preset', type=str, choices=('toy', 'paper'), default='toy', help='Model size preset (default: toy)')
    parser.add_argument('--iters', type=int, default=None, help='Training iterations (default: ITERS=300)')
    parser.add_argument('--seed', type=int, default=None, help='Initialization and clip sampling seed (default: SEED=0)')
    parser.add_argument('--lr', type=float, default=None, help='Learning rate (default: 1e-3 for toy, 1e-4 for paper)')
    parser.add_argument('--precision', type=str, choices=('f32', 'f64'), default='f32', help='Float precision of the parameters (default: f32)')
    parser.add_argument(
        '--set', dest='overrides', action='append', default=[], metavar='KEY=VALUE',
        help='Override any model, loss or training config value,\ne.g. --set MEMORY_TOKENS=5 --set USE_TCL=false',
    )
    command = parser.parse_args(args or ())
    reject_stdin(__command__, stdin)

    train(
        data_dir=resolve_path(command.data, pwd),
        out_dir=resolve_path(command.out, pwd),
        preset=command.preset,
        iters=command.iters,
        seed=command.seed,
        lr=command.lr,
        precision=command.precision,
        overrides=parse_overrides(command.overrides),
    )


if __name__ == '__main__':
    main(args=sys.argv[1:], stdin=sys.stdin)
