__package__ = 'onlinevis'

import os
import sys
import json
import platform

from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple

from onlinevis.config import CONSTANTS, VERSION
from onlinevis.config.common import SHELL_CONFIG, ModelConfig, LossConfig, TrainConfig, DataConfig
from onlinevis.config.version import get_dependency_versions
from onlinevis.misc.errors import ConfigurationError, ContractError
from onlinevis.misc.system import get_dir_size
from onlinevis.misc.util import enforce_types
from .cli import CLI_SUBCOMMANDS, meta_cmds, data_cmds, model_cmds, display_first
from .evalkit import count_id_switches, evaluate as evaluate_tracks, gt_tracks_from_dataset, load_tracks_json
from .model import OnlineVISModel, Trainer, TrainingRun, VideoResult, load_model, run_video, tracks_document
from .reports import ABLATION_COLUMNS, embedding_columns, write_csv, write_gradcheck_report, write_json_report, write_metrics, write_overlays, write_resolved_config
from .synthdata import SynthVideo, VideoSpec, generate_video, read_dataset, write_dataset
from .tensorcore import RngState, get_precision, set_precision
from .tensorcore.gradcheck import GradcheckResult, run_gradchecks
from .logging_util import (
    TrainingProgress,
    log_ablation_row,
    log_eval_summary,
    log_generation_finished,
    log_generation_started,
    log_gradcheck_report,
    log_inference_finished,
    log_inference_started,
    log_inference_video,
    log_training_finished,
    log_training_started,
)


CONFIG_SECTIONS = {
    'MODEL': ModelConfig,
    'LOSS': LossConfig,
    'TRAIN': TrainConfig,
    'DATA': DataConfig,
}

# rows of the propagation/memory ablation, each adding one component to the one before
ABLATION_VARIANTS: Dict[str, Dict[str, bool]] = {
    'prior-only':   dict(USE_REF_PROPAGATION=False, USE_CLASS_PRIOR=False, USE_MEMORY=False, USE_TCL=False),
    '+ref':         dict(USE_REF_PROPAGATION=True,  USE_CLASS_PRIOR=False, USE_MEMORY=False, USE_TCL=False),
    '+class':       dict(USE_REF_PROPAGATION=True,  USE_CLASS_PRIOR=True,  USE_MEMORY=False, USE_TCL=False),
    '+memory':      dict(USE_REF_PROPAGATION=True,  USE_CLASS_PRIOR=True,  USE_MEMORY=True,  USE_TCL=False),
    '+memory+TCL':  dict(USE_REF_PROPAGATION=True,  USE_CLASS_PRIOR=True,  USE_MEMORY=True,  USE_TCL=True),
}
DEFAULT_D_VALUES = (2, 3, 4, 8)
DEFAULT_K_VALUES = (5, 10, 15, 20)


def parse_overrides(pairs: Sequence[str]) -> Dict[str, Dict[str, Any]]:
    """
    KEY=VALUE strings -> {section: {KEY: value}}, routed to whichever config set
    declares KEY. Values are parsed as JSON when they parse, kept as text otherwise.
    """
    sections: Dict[str, Dict[str, Any]] = {name: {} for name in CONFIG_SECTIONS}
    for pair in pairs:
        if '=' not in pair:
            raise ConfigurationError(f'Override {pair!r} is not of the form KEY=VALUE')
        key, raw = pair.split('=', 1)
        key = key.strip().upper()
        try:
            value = json.loads(raw)
        except json.JSONDecodeError:
            value = raw
        owners = [name for name, cls in CONFIG_SECTIONS.items() if key in cls.model_fields]
        if not owners:
            raise ConfigurationError(f'Unknown config key {key}', hints=(f'Known sections: {", ".join(CONFIG_SECTIONS)}',))
        for name in owners:
            sections[name][key] = value
    return sections


def _drop_none(**values) -> Dict[str, Any]:
    return {key: value for key, value in values.items() if value is not None}


def _run_info(subcommand: str, out_dir: Path, seed: Optional[int]=None, **extra) -> Dict[str, Any]:
    return {
        'subcommand': subcommand,
        'seed': seed,
        'precision': get_precision(),
        'out_dir': str(out_dir),
        'config_file': os.environ.get(CONSTANTS.CONFIG_FILE_ENV),
        'threads': SHELL_CONFIG.THREADS,
        **extra,
    }


def _load_videos(data_dir: Path) -> List[SynthVideo]:
    videos = read_dataset(data_dir)
    if not videos:
        raise ContractError(f'Dataset {data_dir} has no videos', hints=('Generate one with: onlinevis gen-data --out <dir>',))
    return videos


@enforce_types
def help() -> None:
    """Print the onlinevis help message and usage"""

    from rich import print

    def section(commands) -> str:
        return '\n    '.join(
            f'[green]{cmd.ljust(20)}[/green] {func.__doc__}'
            for cmd, func in CLI_SUBCOMMANDS.items()
            if cmd in commands
        )

    COMMANDS_HELP_TEXT = '\n\n    '.join((
        section(meta_cmds),
        section(data_cmds),
        section(model_cmds),
        section([cmd for cmd in CLI_SUBCOMMANDS if cmd not in display_first]),
    )).rstrip()

    print(f'''
[deep_sky_blue4]Usage:[/deep_sky_blue4]
    [dark_green]onlinevis[/dark_green] [green]\\[command][/green] [green3][...args][/green3] [violet][--help][/violet] [grey53][--version][/grey53]

[deep_sky_blue4]Commands:[/deep_sky_blue4]
    {COMMANDS_HELP_TEXT}

[deep_sky_blue4]Example:[/deep_sky_blue4]
    [dark_green]onlinevis[/dark_green] [green]gen-data[/green] --out data --videos 8 --seed 7
    [dark_green]onlinevis[/dark_green] [green]train[/green] --data data --out run --iters 300
    [dark_green]onlinevis[/dark_green] [green]infer[/green] --checkpoint run --data data --out run/infer --overlay
    [dark_green]onlinevis[/dark_green] [green]eval[/green] --tracks run/infer/{CONSTANTS.TRACKS_FILENAME} --data data --out run/infer

[violet]Hint:[/violet] config values resolve as flags > environment > [green]--config[/green] JSON file > defaults,
      and every run records what it used in [yellow]{CONSTANTS.RESOLVED_CONFIG_FILENAME}[/yellow].
''')


@enforce_types
def version(quiet: bool=False) -> None:
    """Print the onlinevis version and dependency information"""

    print(VERSION)
    if quiet:
        return

    from rich.console import Console
    prnt = Console().print

    p = platform.uname()
    prnt(
        '[dark_green]onlinevis[/dark_green] [dark_goldenrod]v{}[/dark_goldenrod]'.format(CONSTANTS.VERSION),
        f'ARCH={p.machine}',
        f'OS={p.system}',
        f'PYTHON={sys.implementation.name.title()} {platform.python_version()}',
    )
    prnt(
        f'DEBUG={SHELL_CONFIG.DEBUG}',
        f'IS_TTY={SHELL_CONFIG.IS_TTY}',
        f'THREADS={SHELL_CONFIG.THREADS}',
        f'PRECISION={get_precision()}',
    )
    prnt()
    prnt('[deep_sky_blue3][i] Dependency versions:[/deep_sky_blue3]')
    for name, dist_version in get_dependency_versions().items():
        color = 'green' if dist_version else 'red'
        prnt('', f'[{color}]{"√" if dist_version else "X"}[/{color}]', name.ljust(20), dist_version or 'not installed', sep='  ')


@enforce_types
def gen_data(out_dir: Path,
             videos: Optional[int]=None,
             frames: Optional[int]=None,
             canvas: Optional[int]=None,
             shapes: Optional[int]=None,
             seed: Optional[int]=None,
             crossing_rate: Optional[float]=None,
             overrides: Optional[Dict[str, Any]]=None) -> List[SynthVideo]:
    """Generate a synthetic moving-shapes dataset with occlusion ground truth"""

    flags = _drop_none(VIDEOS=videos, FRAMES=frames, CANVAS=canvas, DATA_SEED=seed, CROSSING_RATE=crossing_rate)
    if shapes is not None:
        flags.update(MIN_INSTANCES=shapes, MAX_INSTANCES=shapes)
    data_config = DataConfig(**{**(overrides or {}), **flags})

    spec = VideoSpec.from_config(data_config)
    spec.check_feasible()

    log_generation_started(data_config.VIDEOS, spec.canvas, spec.frames, data_config.DATA_SEED)

    # every video draws from its own (seed, index) stream, so worker order does not matter
    with ThreadPoolExecutor(max_workers=SHELL_CONFIG.THREADS) as pool:
        generated = list(pool.map(lambda i: generate_video(spec, data_config.DATA_SEED, index=i), range(data_config.VIDEOS)))

    write_dataset(generated, out_dir)
    write_resolved_config(out_dir, {'DATA': data_config}, _run_info('gen-data', out_dir, seed=data_config.DATA_SEED))

    num_bytes, _, _ = get_dir_size(out_dir)
    log_generation_finished(out_dir, len(generated), num_bytes)
    return generated


def build_configs(preset: str, overrides: Optional[Dict[str, Dict[str, Any]]]=None, **train_flags) -> Tuple[ModelConfig, LossConfig, TrainConfig]:
    overrides = overrides or {}
    model_config = ModelConfig(**{**overrides.get('MODEL', {}), 'PRESET': preset})
    loss_config = LossConfig(**overrides.get('LOSS', {}))
    train_config = TrainConfig(**{**overrides.get('TRAIN', {}), **_drop_none(**train_flags)})
    return model_config, loss_config, train_config


@enforce_types
def train(data_dir: Path,
          out_dir: Path,
          preset: str='toy',
          iters: Optional[int]=None,
          seed: Optional[int]=None,
          lr: Optional[float]=None,
          precision: str='f32',
          overrides: Optional[Dict[str, Dict[str, Any]]]=None) -> TrainingRun:
    """Train a model on a generated dataset, writing checkpoints and loss.csv"""

    set_precision(precision)
    model_config, loss_config, train_config = build_configs(preset, overrides, ITERS=iters, SEED=seed, LR=lr)
    videos = _load_videos(data_dir)

    model = OnlineVISModel(model_config, loss_config, RngState(train_config.SEED))
    out_dir.mkdir(parents=True, exist_ok=True)
    write_resolved_config(
        out_dir,
        {'MODEL': model_config, 'LOSS': loss_config, 'TRAIN': train_config},
        _run_info('train', out_dir, seed=train_config.SEED, data_dir=str(data_dir), lr=train_config.learning_rate(preset)),
    )

    log_training_started(train_config.ITERS, len(videos), preset, model.num_parameters(), out_dir)
    trainer = Trainer(model, videos, train_config, preset, out_dir=out_dir, threads=SHELL_CONFIG.THREADS)
    progress = TrainingProgress(train_config.ITERS)
    try:
        run = trainer.run(on_progress=progress.update)
    finally:
        progress.end()

    log_training_finished(run, out_dir)
    return run


@enforce_types
def infer(checkpoint_dir: Path,
          data_dir: Path,
          out_dir: Path,
          overlay: bool=False,
          export_embeddings: bool=False,
          top_k: Optional[int]=None,
          precision: str='f32',
          overrides: Optional[Dict[str, Any]]=None) -> List[VideoResult]:
    """Stream each video frame by frame through a checkpoint and write tracks.json"""

    set_precision(precision)
    model, metadata = load_model(checkpoint_dir, overrides=overrides)
    videos = _load_videos(data_dir)

    out_dir.mkdir(parents=True, exist_ok=True)
    write_resolved_config(
        out_dir,
        {'MODEL': model.model_config, 'LOSS': model.loss_config},
        _run_info('infer', out_dir, checkpoint=str(checkpoint_dir), data_dir=str(data_dir), iteration=metadata.get('iteration')),
    )

    log_inference_started(len(videos), checkpoint_dir)
    results = []
    for index, video in enumerate(videos):
        result = run_video(model, video, top_k=top_k)
        log_inference_video(result, index, len(videos))
        results.append(result)

        if overlay:
            frame_masks = [
                {int(query): result.masks[int(query)][t] for query in result.merged.candidates}
                for t in range(result.num_frames)
            ]
            write_overlays(out_dir, video.name, video.frames, frame_masks)

    write_json_report(out_dir / CONSTANTS.TRACKS_FILENAME, 'tracks', tracks_document(results))
    if export_embeddings:
        rows = [row for result in results for row in result.embedding_rows()]
        write_csv(out_dir / CONSTANTS.EMBEDDINGS_FILENAME, rows, embedding_columns(model.model_config.WIDTH))
    log_inference_finished(out_dir)
    return results


def score_tracks(preds: Dict[str, list], gts: Dict[str, list]) -> Dict[str, Any]:
    """AP/AR metrics plus id switches counted video by video"""
    metrics = evaluate_tracks(preds, gts)
    names = sorted(gts)
    with ThreadPoolExecutor(max_workers=SHELL_CONFIG.THREADS) as pool:
        switches = list(pool.map(lambda name: count_id_switches(preds.get(name, []), gts[name]), names))
    metrics['id_switches'] = int(sum(switches))
    metrics['per_video_id_switches'] = dict(zip(names, switches))
    return metrics


@enforce_types
def evaluate(tracks_path: Path, data_dir: Path, out_dir: Path) -> Dict[str, Any]:
    """Score tracks.json against the dataset ground truth and write metrics.json"""

    preds = load_tracks_json(tracks_path)
    gts = gt_tracks_from_dataset(_load_videos(data_dir))
    unknown = sorted(set(preds) - set(gts))
    if unknown:
        raise ContractError(f'Tracks file has videos missing from the dataset: {", ".join(unknown[:5])}')

    metrics = score_tracks(preds, gts)
    out_dir.mkdir(parents=True, exist_ok=True)
    write_resolved_config(out_dir, {}, _run_info('eval', out_dir, tracks=str(tracks_path), data_dir=str(data_dir)))
    write_metrics(out_dir, metrics)
    log_eval_summary(metrics, metrics['id_switches'])
    return metrics


@enforce_types
def gradcheck(out_dir: Path,
              seeds: int=3,
              tolerance: float=CONSTANTS.GRADCHECK_TOLERANCE,
              only: Optional[List[str]]=None) -> List[GradcheckResult]:
    """Compare every registered gradient against central finite differences in 64-bit mode"""

    results = run_gradchecks(list(range(seeds)), tolerance=tolerance, only=only)
    out_dir.mkdir(parents=True, exist_ok=True)
    write_resolved_config(out_dir, {}, _run_info('gradcheck', out_dir, seeds=seeds, tolerance=tolerance, only=only))
    write_gradcheck_report(out_dir, results, tolerance)
    log_gradcheck_report(results, tolerance)
    return results


def ablation_row(variant: str,
                 switches: Dict[str, bool],
                 seed: int,
                 videos: List[SynthVideo],
                 gts: Dict[str, list],
                 preset: str,
                 iters: int,
                 overrides: Dict[str, Dict[str, Any]],
                 memory_frames: Optional[int]=None,
                 memory_tokens: Optional[int]=None) -> Dict[str, Any]:
    """Train one variant from scratch, run it over the same videos and score it"""
    model_overrides = {
        **overrides.get('MODEL', {}),
        **{key: value for key, value in switches.items() if key != 'USE_TCL'},
        **_drop_none(MEMORY_FRAMES=memory_frames, MEMORY_TOKENS=memory_tokens),
    }
    loss_overrides = {**overrides.get('LOSS', {}), 'USE_TCL': switches['USE_TCL']}
    model_config, loss_config, train_config = build_configs(
        preset, {**overrides, 'MODEL': model_overrides, 'LOSS': loss_overrides}, ITERS=iters, SEED=seed,
    )

    model = OnlineVISModel(model_config, loss_config, RngState(seed))
    run = Trainer(model, videos, train_config, preset, threads=SHELL_CONFIG.THREADS).run()
    results = [run_video(model, video) for video in videos]
    metrics = score_tracks({result.name: result.tracks() for result in results}, gts)

    return {
        'variant': variant,
        'seed': seed,
        'query': True,
        'ref': switches['USE_REF_PROPAGATION'],
        'class': switches['USE_CLASS_PRIOR'],
        'memory': switches['USE_MEMORY'],
        'tcl': switches['USE_TCL'],
        'memory_frames': model_config.MEMORY_FRAMES,
        'memory_tokens': model_config.MEMORY_TOKENS,
        'iters': run.iterations,
        'final_loss': run.final_loss,
        'AP': metrics['overall']['AP'],
        'AP50': metrics['overall']['AP50'],
        'AP75': metrics['overall']['AP75'],
        'id_switches': metrics['id_switches'],
    }


@enforce_types
def ablate(data_dir: Path,
           out_dir: Path,
           preset: str='toy',
           iters: int=300,
           seeds: Optional[List[int]]=None,
           variants: Optional[List[str]]=None,
           d_values: Optional[List[int]]=None,
           k_values: Optional[List[int]]=None,
           sweeps: bool=True,
           precision: str='f32',
           overrides: Optional[Dict[str, Dict[str, Any]]]=None) -> List[Dict[str, Any]]:
    """Train and score the propagation/memory variant grid and the memory size sweeps"""

    set_precision(precision)
    overrides = overrides or {}
    seeds = list(seeds) if seeds is not None else [0, 1, 2]
    variants = list(variants) if variants is not None else list(ABLATION_VARIANTS)
    unknown = [name for name in variants if name not in ABLATION_VARIANTS]
    if unknown:
        raise ConfigurationError(f'Unknown ablation variants: {", ".join(unknown)}', hints=(f'Choose from: {", ".join(ABLATION_VARIANTS)}',))
    d_values = list(d_values) if d_values is not None else list(DEFAULT_D_VALUES)
    k_values = list(k_values) if k_values is not None else list(DEFAULT_K_VALUES)

    videos = _load_videos(data_dir)
    gts = gt_tracks_from_dataset(videos)

    jobs: List[Tuple[str, Dict[str, bool], int, Optional[int], Optional[int]]] = [
        (name, ABLATION_VARIANTS[name], seed, None, None) for name in variants for seed in seeds
    ]
    if sweeps:
        full = ABLATION_VARIANTS['+memory+TCL']
        jobs += [('d-sweep', full, seed, d, None) for d in d_values for seed in seeds]
        jobs += [('k-sweep', full, seed, None, k) for k in k_values for seed in seeds]

    # the shared base; each row then flips its variant switches and memory sizes on top
    model_config, loss_config, train_config = build_configs(preset, overrides, ITERS=iters)
    out_dir.mkdir(parents=True, exist_ok=True)
    write_resolved_config(
        out_dir,
        {'MODEL': model_config, 'LOSS': loss_config, 'TRAIN': train_config},
        _run_info('ablate', out_dir, seeds=seeds, variants=variants, d_values=d_values, k_values=k_values, sweeps=sweeps, data_dir=str(data_dir)),
    )

    rows: List[Dict[str, Any]] = []
    for variant, switches, seed, d, k in jobs:
        row = ablation_row(variant, switches, seed, videos, gts, preset, iters, overrides, memory_frames=d, memory_tokens=k)
        rows.append(row)
        log_ablation_row(row)
        # the csv always holds every finished row
        write_csv(out_dir / CONSTANTS.ABLATION_FILENAME, rows, ABLATION_COLUMNS)
    return rows

