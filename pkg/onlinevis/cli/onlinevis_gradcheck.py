#!/usr/bin/env python3

__package__ = 'onlinevis.cli'
__command__ = 'onlinevis gradcheck'

import sys
import argparse

from typing import Optional, List, IO

from onlinevis.config import CONSTANTS
from onlinevis.misc.util import docstring
from ..logging_util import SmartFormatter, reject_stdin
from ..main import gradcheck
from . import resolve_path


@docstring(gradcheck.__doc__)
def main(args: Optional[List[str]]=None, stdin: Optional[IO]=None, pwd: Optional[str]=None) -> None:
    parser = argparse.ArgumentParser(
        prog=__command__,
        description=gradcheck.__doc__,
        add_help=True,
        formatter_class=SmartFormatter,
    )
    parser.add_argument('--out', '-o', type=str, default='.', help=f'Directory for {CONSTANTS.GRADCHECK_FILENAME} (default: current dir)')
    parser.add_argument('--seeds', type=int, default=3, help='Random inputs checked per case (default: 3)')
    parser.add_argument('--tolerance', type=float, default=CONSTANTS.GRADCHECK_TOLERANCE, help=f'Largest accepted relative error (default: {CONSTANTS.GRADCHECK_TOLERANCE:g})')
    parser.add_argument('--only', type=str, default=None, help='Comma-separated case names to run instead of all of them')
    command = parser.parse_args(args or ())
    reject_stdin(__command__, stdin)

    results = gradcheck(
        out_dir=resolve_path(command.out, pwd),
        seeds=command.seeds,
        tolerance=command.tolerance,
        only=[name.strip() for name in command.only.split(',') if name.strip()] if command.only else None,
    )
    if not all(result.passed for result in results):
        raise SystemExit(CONSTANTS.EXIT_VERIFY_FAILED)


if __name__ == '__main__':
    main(args=sys.argv[1:], stdin=sys.stdin)
