#!/usr/bin/env python3

__package__ = 'onlinevis.cli'
__command__ = 'onlinevis infer'

import sys
import argparse

from typing import Optional, List, IO

from onlinevis.misc.util import docstring
from ..logging_util import SmartFormatter, reject_stdin
from ..main import infer, parse_overrides
from . import resolve_path


@docstring(infer.__doc__)
def main(args: Optional[List[str]]=None, stdin: Optional[IO]=None, pwd: Optional[str]=None) -> None:
    parser = argparse.ArgumentParser(
        prog=__command__,
        description=infer.__doc__,
        add_help=True,
        formatter_class=SmartFormatter,
    )
    parser.add_argument('--checkpoint', '-c', type=str, required=True, help='Checkpoint directory written by train')
    parser.add_argument('--data', '-d', type=str, required=True, help='Dataset directory written by gen-data')
    parser.add_argument('--out', '-o', type=str, required=True, help='Directory for tracks.json and the optional exports')
    parser.add_argument('--overlay', action='store_true', help='Also write one PPM per frame with every track painted in its own colour')
    parser.add_argument('--export-embeddings', action='store_true', help='Also write embeddings.csv with the decoder embedding of every track per frame')
    parser.add_argument('--top-k', type=int, default=None, help='Number of tracks kept per video (default: TOP_K_TRACKS)')
    parser.add_argument('--precision', type=str, choices=('f32', 'f64'), default='f32', help='Float precision to run in (default: f32)')
    parser.add_argument(
        '--set', dest='overrides', action='append', default=[], metavar='KEY=VALUE',
        help='Override a model config value stored in the checkpoint,\ne.g. --set REF_MODE=literal',
    )
    command = parser.parse_args(args or ())
    reject_stdin(__command__, stdin)

    infer(
        checkpoint_dir=resolve_path(command.checkpoint, pwd),
        data_dir=resolve_path(command.data, pwd),
        out_dir=resolve_path(command.out, pwd),
        overlay=command.overlay,
        export_embeddings=command.export_embeddings,
        top_k=command.top_k,
        precision=command.precision,
        overrides=parse_overrides(command.overrides)['MODEL'],
    )


if __name__ == '__main__':
    main(args=sys.argv[1:], stdin=sys.stdin)
