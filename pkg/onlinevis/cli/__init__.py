__package__ = 'onlinevis.cli'
__command__ = 'onlinevis'

import os
import sys
import argparse

from collections.abc import Mapping
from importlib import import_module
from pathlib import Path
from typing import IO, List, Optional, Tuple, Union

from rich import print

CLI_DIR = Path(__file__).resolve().parent

CONFIG_FILE_ENV = 'ONLINEVIS_CONFIG_FILE'

if '--debug' in sys.argv:
    os.environ['DEBUG'] = 'True'
    sys.argv.remove('--debug')


# just define it statically, it's much faster than scanning CLI_DIR:
SUBCOMMAND_MODULES = {
    'help': 'onlinevis_help',
    'version': 'onlinevis_version',

    'gen-data': 'onlinevis_gen_data',
    ##############################################
    'train': 'onlinevis_train',
    'infer': 'onlinevis_infer',
    'eval': 'onlinevis_eval',
    'gradcheck': 'onlinevis_gradcheck',
    'ablate': 'onlinevis_ablate',
}

# every imported command module must have these properties in order to be valid
required_attrs = ('__package__', '__command__', 'main')

is_valid_cli_module = lambda module, subcommand: (
    all(hasattr(module, attr) for attr in required_attrs)
    and module.__command__.split(' ')[-1] == subcommand
)

class LazySubcommands(Mapping):
    def keys(self):
        return SUBCOMMAND_MODULES.keys()

    def values(self):
        return [self[key] for key in self.keys()]

    def items(self):
        return [(key, self[key]) for key in self.keys()]

    def __getitem__(self, key):
        module = import_module(f'.{SUBCOMMAND_MODULES[key]}', __package__)
        assert is_valid_cli_module(module, key)
        return module.main

    def __iter__(self):
        return iter(SUBCOMMAND_MODULES.keys())

    def __len__(self):
        return len(SUBCOMMAND_MODULES)

CLI_SUBCOMMANDS = LazySubcommands()


# these common commands will appear sorted before any others for ease-of-use
meta_cmds = ('help', 'version')                                 # dont need a dataset or checkpoint at all
data_cmds = ('gen-data',)                                       # write a dataset
model_cmds = ('train', 'infer', 'eval', 'gradcheck', 'ablate')  # train, run and check models

display_first = (*meta_cmds, *data_cmds, *model_cmds)


def pop_config_flag(args: List[str]) -> Tuple[List[str], Optional[str]]:
    """Strip --config PATH / --config=PATH from anywhere in args, it is shared by every subcommand"""
    remaining, config_file = [], None
    it = iter(args)
    for arg in it:
        if arg == '--config':
            config_file = next(it, None)
            if config_file is None:
                print('[red][X] --config needs a path to a JSON config file[/red]', file=sys.stderr)
                raise SystemExit(2)
        elif arg.startswith('--config='):
            config_file = arg.split('=', 1)[1]
        else:
            remaining.append(arg)
    return remaining, config_file


def exit_code_for(err: BaseException) -> int:
    """Map an exception escaping a subcommand onto the CLI exit codes"""
    from pydantic import ValidationError
    from ..config.constants import CONSTANTS
    from ..misc.errors import OnlineVISError, NumericError

    if isinstance(err, NumericError):
        return CONSTANTS.EXIT_NUMERIC
    if isinstance(err, (OnlineVISError, ValidationError, FileNotFoundError, NotADirectoryError)):
        return CONSTANTS.EXIT_USAGE
    raise err


def fail(err: BaseException) -> None:
    """Print [X] and the error's hints on stderr, then exit with the code its type maps to"""
    code = exit_code_for(err)
    print(f'[red][X] {err.__class__.__name__}: {err}[/red]', file=sys.stderr)
    if getattr(err, 'iteration', None) is not None:
        print(f'    Failed at iteration {err.iteration}', file=sys.stderr)
    for hint in getattr(err, 'hints', None) or ():
        print(f'    [violet]Hint:[/violet] {hint}', file=sys.stderr)
    raise SystemExit(code)


def run_subcommand(subcommand: str,
                   subcommand_args: Optional[List[str]]=None,
                   stdin: Optional[IO]=None,
                   pwd: Union[Path, str, None]=None) -> None:
    """Run a given onlinevis subcommand with the given list of args"""

    subcommand_args = subcommand_args or []

    module = import_module('.{}'.format(SUBCOMMAND_MODULES[subcommand]), __package__)
    module.main(args=subcommand_args, stdin=stdin, pwd=pwd)    # type: ignore


class NotProvided:
    def __len__(self):
        return 0
    def __bool__(self):
        return False
    def __repr__(self):
        return '<not provided>'

Omitted = Union[None, NotProvided]

OMITTED = NotProvided()


def main(args: Union[List[str], Omitted]=OMITTED, stdin: Union[IO, Omitted]=OMITTED, pwd: Optional[str]=None) -> None:
    args = sys.argv[1:] if args is OMITTED else args
    stdin = sys.stdin if stdin is OMITTED else stdin

    args, config_file = pop_config_flag(list(args or ()))
    if config_file:
        # must be set before any config set is built, they read it at construction
        os.environ[CONFIG_FILE_ENV] = str(Path(config_file).expanduser().resolve())

    try:
        dispatch(args, stdin, pwd)
    except KeyboardInterrupt:
        print('\n\n[red][X] Got CTRL+C. Exiting...[/red]')
        raise SystemExit(130)
    except Exception as err:
        fail(err)


def dispatch(args: List[str], stdin: Optional[IO], pwd: Optional[str]) -> None:
    parser = argparse.ArgumentParser(
        prog=__command__,
        description='onlinevis: online video instance segmentation at desk scale',
        add_help=False,
    )
    group = parser.add_mutually_exclusive_group()
    group.add_argument(
        '--help', '-h',
        action='store_true',
        help=CLI_SUBCOMMANDS['help'].__doc__,
    )
    group.add_argument(
        '--version',
        action='store_true',
        help=CLI_SUBCOMMANDS['version'].__doc__,
    )
    group.add_argument(
        "subcommand",
        type=str,
        help= "The name of the subcommand to run",
        nargs='?',
        choices=CLI_SUBCOMMANDS.keys(),
        default=None,
    )
    parser.add_argument(
        "subcommand_args",
        help="Arguments for the subcommand",
        nargs=argparse.REMAINDER,
    )
    command = parser.parse_args(args or ())

    if command.version:
        command.subcommand = 'version'
        command.subcommand_args = ['--quiet']
    elif command.help or command.subcommand is None:
        command.subcommand = 'help'

    if command.subcommand not in ('version',):
        from ..logging_util import log_cli_command

        log_cli_command(
            subcommand=command.subcommand,
            subcommand_args=command.subcommand_args,
            stdin=stdin or None,
        )

    run_subcommand(
        subcommand=command.subcommand,
        subcommand_args=command.subcommand_args,
        stdin=stdin or None,
        pwd=pwd,
    )


def resolve_path(path: Union[Path, str], pwd: Union[Path, str, None]=None) -> Path:
    """Relative paths given on the command line are taken relative to pwd"""
    return Path(pwd or '.') / Path(path).expanduser()
