#!/usr/bin/env python3

__package__ = 'onlinevis.cli'
__command__ = 'onlinevis eval'

import sys
import argparse

from typing import Optional, List, IO

from onlinevis.config import CONSTANTS
from onlinevis.misc.util import docstring
from ..logging_util import SmartFormatter, reject_stdin
from ..main import evaluate
from . import resolve_path


@docstring(evaluate.__doc__)
def main(args: Optional[List[str]]=None, stdin: Optional[IO]=None, pwd: Optional[str]=None) -> None:
    parser = argparse.ArgumentParser(
        prog=__command__,
        description=evaluate.__doc__,
        add_help=True,
        formatter_class=SmartFormatter,
    )
    parser.add_argument('--tracks', '-t', type=str, required=True, help=f'{CONSTANTS.TRACKS_FILENAME} written by infer')
    parser.add_argument('--data', '-d', type=str, required=True, help='Dataset directory with the ground truth')
    parser.add_argument('--out', '-o', type=str, default=None, help=f'Directory for {CONSTANTS.METRICS_FILENAME} (default: next to the tracks file)')
    command = parser.parse_args(args or ())
    reject_stdin(__command__, stdin)

    tracks_path = resolve_path(command.tracks, pwd)
    evaluate(
        tracks_path=tracks_path,
        data_dir=resolve_path(command.data, pwd),
        out_dir=resolve_path(command.out, pwd) if command.out else tracks_path.parent,
    )


if __name__ == '__main__':
    main(args=sys.argv[1:], stdin=sys.stdin)
