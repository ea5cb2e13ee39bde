__package__ = 'onlinevis'

import sys

from pathlib import Path
from datetime import datetime, timezone
from dataclasses import dataclass
from typing import Any, Dict, IO, List, Optional, Sequence, Union, TYPE_CHECKING

if TYPE_CHECKING:
    from .model.inference import VideoResult
    from .model.trainer import TrainingRun
    from .tensorcore.gradcheck import GradcheckResult

from rich import print
from rich.panel import Panel
from rich.markup import escape
from rich.table import Table
from rich.progress import Progress, BarColumn, MofNCompleteColumn, TextColumn, TimeElapsedColumn
from rich_argparse import RichHelpFormatter

from onlinevis.config import VERSION
from onlinevis.config.common import SHELL_CONFIG
from onlinevis.misc.util import enforce_types


@dataclass
class RuntimeStats:
    """mutable stats counter for logging run timing info to CLI output"""

    videos: int = 0
    frames: int = 0

    generation_start_ts: Optional[datetime] = None
    training_start_ts: Optional[datetime] = None
    inference_start_ts: Optional[datetime] = None

_LAST_RUN_STATS = RuntimeStats()


def _now() -> datetime:
    return datetime.now(timezone.utc)


def _duration(start: Optional[datetime], end: datetime) -> str:
    seconds = (end - start).total_seconds() if start else 0.0
    if seconds > 60:
        return '{0:.2f} min'.format(seconds / 60)
    return '{0:.2f} sec'.format(seconds)


class SmartFormatter(RichHelpFormatter):
    """Patched formatter that prints newlines in argparse help strings"""
    def _split_lines(self, text, width):
        if '\n' in text:
            return text.splitlines()
        return RichHelpFormatter._split_lines(self, text, width)


def reject_stdin(caller: str, stdin: Optional[IO]=sys.stdin) -> None:
    """Tell the user they passed stdin to a command that doesn't accept it"""

    if not stdin or not hasattr(stdin, 'isatty'):
        return None

    if not stdin.isatty():
        stdin_raw_text = stdin.read()
        if stdin_raw_text.strip():
            print(f'[red][!] The "{caller}" command does not accept stdin (ignoring).[/red]', file=sys.stderr)
            print(f'    Run "{caller} --help" to see usage and examples.\n', file=sys.stderr)
    return None


def log_cli_command(subcommand: str, subcommand_args: List[str], stdin: Optional[Union[str, IO]], pwd: str='.'):
    args = ' '.join(subcommand_args)
    version_msg = '[dark_magenta]\\[{now}][/dark_magenta] [dark_red]onlinevis[/dark_red] [dark_goldenrod]v{VERSION}[/dark_goldenrod]: [green4]onlinevis [green3]{subcommand}[green2] {args}[/green2]'.format(
        now=_now().strftime('%Y-%m-%d %H:%M:%S'),
        VERSION=VERSION,
        subcommand=subcommand,
        args=args,
    )
    print(Panel(version_msg), file=sys.stderr)


### Dataset Generation Stage

def log_generation_started(count: int, canvas: int, frames: int, seed: int):
    _LAST_RUN_STATS.generation_start_ts = _now()
    print('[green][▶] [{}] Generating {} synthetic videos ({}x{}, {} frames, seed={})...[/]'.format(
        _LAST_RUN_STATS.generation_start_ts.strftime('%Y-%m-%d %H:%M:%S'),
        count, canvas, canvas, frames, seed,
    ))


def log_generation_finished(out_dir: Path, count: int, num_bytes: int):
    end_ts = _now()
    print('[green][√] [{}] Wrote {} videos ({}) in {}[/]'.format(
        end_ts.strftime('%Y-%m-%d %H:%M:%S'),
        count,
        printable_filesize(num_bytes),
        _duration(_LAST_RUN_STATS.generation_start_ts, end_ts),
    ))
    print(f'    > {pretty_path(out_dir)}')


### Training Stage

def log_training_started(iters: int, num_videos: int, preset: str, num_parameters: int, out_dir: Path):
    _LAST_RUN_STATS.training_start_ts = _now()
    print('[green][▶] [{}] Training preset "{}" ({} parameters) for {} iterations on {} videos...[/]'.format(
        _LAST_RUN_STATS.training_start_ts.strftime('%Y-%m-%d %H:%M:%S'),
        preset, num_parameters, iters, num_videos,
    ))
    print(f'    > {pretty_path(out_dir)}')


class TrainingProgress:
    """rich progress bar over the iterations, or a plain status line every few iterations when stdout is not a TTY"""

    def __init__(self, total: int, every: int=10):
        self.total = total
        self.every = max(1, every)
        self.progress: Optional[Progress] = None
        if SHELL_CONFIG.SHOW_PROGRESS and total > 0:
            self.progress = Progress(
                TextColumn('    [bright_black]{task.description}'),
                BarColumn(),
                MofNCompleteColumn(),
                TimeElapsedColumn(),
                transient=True,
            )
            self.task = self.progress.add_task('loss=...', total=total)
            self.progress.start()

    def update(self, iteration: int, row: Dict[str, Any]) -> None:
        if self.progress is not None:
            self.progress.update(self.task, completed=iteration, description=f'loss={float(row["total"]):.4f}')
        else:
            log_training_progress(iteration, self.total, row, every=self.every)

    def end(self) -> None:
        if self.progress is not None:
            self.progress.stop()
            self.progress = None


def log_training_progress(iteration: int, total: int, row: Dict[str, Any], every: int=10):
    if iteration % every and iteration != total:
        return
    parts = ' '.join(f'{key}={float(row[key]):.4f}' for key in ('cls', 'box', 'mask', 'tcl'))
    print(f'    [bright_black]> iter {iteration}/{total} total={float(row["total"]):.4f} {parts}[/]')


def log_training_finished(run: "TrainingRun", out_dir: Optional[Path]):
    end_ts = _now()
    print('[green][√] [{}] Trained {} iterations in {} (final loss {:.4f})[/]'.format(
        end_ts.strftime('%Y-%m-%d %H:%M:%S'),
        run.iterations,
        _duration(_LAST_RUN_STATS.training_start_ts, end_ts),
        run.final_loss,
    ))
    print(f'    - {len(run.checkpoints)} checkpoints written')
    print(f'    - {len(run.rows)} loss rows logged')
    if out_dir is not None:
        print(f'    > {pretty_path(out_dir)}')


### Inference Stage

def log_inference_started(num_videos: int, checkpoint: Path):
    _LAST_RUN_STATS.inference_start_ts = _now()
    _LAST_RUN_STATS.videos = _LAST_RUN_STATS.frames = 0
    print('[green][▶] [{}] Streaming {} videos through {}...[/]'.format(
        _LAST_RUN_STATS.inference_start_ts.strftime('%Y-%m-%d %H:%M:%S'),
        num_videos,
        pretty_path(checkpoint),
    ))


def log_inference_video(result: "VideoResult", index: int, total: int):
    _LAST_RUN_STATS.videos += 1
    _LAST_RUN_STATS.frames += result.num_frames
    tracks = ', '.join(str(int(q)) for q in result.merged.candidates)
    print(f'    [{index + 1}/{total}] {result.name}: {result.num_frames} frames, tracks [{tracks}]')


def log_inference_finished(out_dir: Path):
    end_ts = _now()
    print('[green][√] [{}] Streamed {} videos ({} frames) in {}[/]'.format(
        end_ts.strftime('%Y-%m-%d %H:%M:%S'),
        _LAST_RUN_STATS.videos,
        _LAST_RUN_STATS.frames,
        _duration(_LAST_RUN_STATS.inference_start_ts, end_ts),
    ))
    print(f'    > {pretty_path(out_dir)}')


### Evaluation Stage

def log_eval_summary(metrics: Dict[str, Any], id_switches: Optional[int]=None):
    overall = metrics['overall']
    line = ' '.join(f'{key}={float(overall[key]):.4f}' for key in ('AP', 'AP50', 'AP75', 'AR@1', 'AR@10') if key in overall)
    if id_switches is not None:
        line += f' id_switches={id_switches}'
    print(f'[green][√][/green] {line}')


### Gradient Checks

def log_gradcheck_report(results: Sequence["GradcheckResult"], tolerance: float):
    table = Table(title=f'Gradient checks (tolerance {tolerance:g})', title_justify='left')
    table.add_column('case')
    table.add_column('max rel. error', justify='right')
    table.add_column('worst seed', justify='right')
    table.add_column('status')
    for result in results:
        table.add_row(
            result.name,
            f'{result.max_error:.3e}',
            str(result.worst_seed),
            '[green]ok[/green]' if result.passed else '[red]FAIL[/red]',
        )
    print(table)

    failed = [result.name for result in results if not result.passed]
    if failed:
        print(f'[red][X] {len(failed)} of {len(results)} gradient checks failed: {", ".join(failed)}[/red]')
    else:
        print(f'[green][√] All {len(results)} gradient checks passed[/green]')


### Ablation

def log_ablation_row(row: Dict[str, Any]):
    print('    {label} seed={seed} d={memory_frames} k={memory_tokens} loss={final_loss:.4f} AP={AP:.4f} id_switches={id_switches}'.format(label=escape(f'[{row["variant"]}]'), **row))


### Helpers

def pretty_path(path: Union[Path, str], pwd: Union[Path, str, None]=None) -> str:
    """convert long absolute paths under the current dir into ./relative ones"""
    pwd = str(Path(pwd or Path.cwd()))
    path = str(path)

    if not path:
        return path

    if path.startswith(pwd) and (pwd != '/') and path != pwd:
        path = path.replace(pwd, '.', 1)

    if ' ' in path:
        path = f'"{path}"'

    return path.replace(str(Path('~').expanduser()), '~')


@enforce_types
def printable_filesize(num_bytes: Union[int, float]) -> str:
    for count in ['Bytes','KB','MB','GB']:
        if num_bytes > -1024.0 and num_bytes < 1024.0:
            return '%3.1f %s' % (num_bytes, count)
        num_bytes /= 1024.0
    return '%3.1f %s' % (num_bytes, 'TB')
