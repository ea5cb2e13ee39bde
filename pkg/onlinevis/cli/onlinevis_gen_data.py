#!/usr/bin/env python3

__package__ = 'onlinevis.cli'
__command__ = 'onlinevis gen-data'

import sys
import argparse

from typing import Optional, List, IO

from onlinevis.misc.util import docstring
from ..logging_util import SmartFormatter, reject_stdin
from ..main import gen_data, parse_overrides
from . import resolve_path


@docstring(gen_data.__doc__)
def main(args: Optional[List[str]]=None, stdin: Optional[IO]=None, pwd: Optional[str]=None) -> None:
    parser = argparse.ArgumentParser(
        prog=__command__,
        description=gen_data.__doc__,
        add_help=True,
        formatter_class=SmartFormatter,
    )
    parser.add_argument('--out', '-o', type=str, required=True, help='Directory to write the dataset into')
    parser.add_argument('--videos', type=int, default=None, help='Number of videos to generate (default: VIDEOS=8)')
    parser.add_argument('--frames', type=int, default=None, help='Frames per video (default: FRAMES=24)')
    parser.add_argument('--canvas', type=int, default=None, help='Square canvas size in pixels, a multiple of 16 (default: CANVAS=64)')
    parser.add_argument('--shapes', type=int, default=None, help='Exact number of shapes per video\n(sets both MIN_INSTANCES and MAX_INSTANCES)')
    parser.add_argument('--seed', type=int, default=None, help='Dataset seed (default: DATA_SEED=0)')
    parser.add_argument('--crossing-rate', type=float, default=None, help='Fraction of shapes aimed at the canvas centre, higher means more occlusion')
    parser.add_argument('--set', dest='overrides', action='append', default=[], metavar='KEY=VALUE', help='Override any DataConfig value, e.g. --set MAX_SPEED=2.0')
    command = parser.parse_args(args or ())
    reject_stdin(__command__, stdin)

    gen_data(
        out_dir=resolve_path(command.out, pwd),
        videos=command.videos,
        frames=command.frames,
        canvas=command.canvas,
        shapes=command.shapes,
        seed=command.seed,
        crossing_rate=command.crossing_rate,
        overrides=parse_overrides(command.overrides)['DATA'],
    )


if __name__ == '__main__':
    main(args=sys.argv[1:], stdin=sys.stdin)
