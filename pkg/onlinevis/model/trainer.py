__package__ = 'onlinevis.model'

import threading

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from ..config.constants import CONSTANTS
from ..losses import LossParts, joint_loss
from ..misc.errors import ContractError, NumericError
from ..reports import LOSS_COLUMNS, write_csv
from ..synthdata import SynthVideo
from ..tensorcore import Tensor, RngState, backward
from .checkpoint import save_model
from .network import OnlineVISModel
from .optim import AdamW, MultiStepLR, build_optimizer, clip_grad_norm


def sample_clip(video_length: int, rng: RngState, min_len: int=3, max_len: int=5) -> List[int]:
    """Sorted random frame indices; the clip keeps the video's temporal order"""
    if video_length < 1:
        raise ContractError('Cannot sample a clip from an empty video')
    if min_len < 1 or min_len > max_len:
        raise ContractError(f'Invalid clip length range [{min_len}, {max_len}]')
    length = min(int(rng.integers(min_len, max_len + 1)), video_length)
    return sorted(int(i) for i in rng.choice(video_length, length, replace=False))


def train_clip(model: OnlineVISModel, video: SynthVideo, frame_indices: Sequence[int]) -> Tuple[Tensor, Dict[str, float]]:
    """Run the clip in train mode with clip-local frame numbers 0..T-1 and sum the joint loss over its frames"""
    state = model.init_state()
    parts: List[LossParts] = []
    for t, frame in enumerate(frame_indices):
        prediction, state = model.process_frame(state, video.frame_tensor(frame), mode='train', gt=video.frame_ground_truth(frame), t=t)
        parts.append(prediction.losses)
    total = joint_loss(parts, model.weights)
    values = [p.values() for p in parts]
    summed = {name: float(sum(v[name] for v in values)) for name in LossParts.NAMES}
    return total, summed


@dataclass
class TrainingRun:
    iterations: int = 0
    rows: List[dict] = field(default_factory=list)
    checkpoints: List[int] = field(default_factory=list)

    @property
    def final_loss(self) -> float:
        return float(self.rows[-1]['total']) if self.rows else float('nan')


ProgressCallback = Callable[[int, dict], None]


class Trainer:
    def __init__(self, model: OnlineVISModel, videos: List[SynthVideo], train_config, preset: str, out_dir: Optional[Path]=None, threads: int=1):
        if not videos:
            raise ContractError('Training needs at least one video')
        self.model = model
        self.videos = videos
        self.config = train_config
        self.out_dir = None if out_dir is None else Path(out_dir)
        self.threads = max(1, threads)
        self.rng = RngState(train_config.SEED, key=(7,))
        self.optimizer: AdamW = build_optimizer(model, train_config, preset)
        self.scheduler = MultiStepLR.from_fractions(self.optimizer, train_config.LR_MILESTONES, train_config.ITERS, train_config.LR_GAMMA)
        self.lock = threading.Lock()

    def draw_clip(self) -> Tuple[SynthVideo, List[int]]:
        video = self.videos[int(self.rng.integers(0, len(self.videos)))]
        frames = sample_clip(len(video), self.rng, self.config.MIN_CLIP_FRAMES, self.config.MAX_CLIP_FRAMES)
        return video, frames

    def step(self, iteration: int) -> dict:
        self.optimizer.zero_grad()
        if self.config.PARALLEL_CLIPS > 1:
            total, parts = self._parallel_step()
        else:
            video, frames = self.draw_clip()
            loss, parts = train_clip(self.model, video, frames)
            total = loss.item()
            backward(loss)

        self._check_finite(total, iteration)
        clip_grad_norm(self.optimizer.params, self.config.GRAD_CLIP_NORM)
        self.optimizer.step()
        self.scheduler.step()
        return {'iter': iteration, **{name: parts[name] for name in LossParts.NAMES}, 'total': total}

    def _parallel_step(self) -> Tuple[float, Dict[str, float]]:
        """Evaluate several clips on worker threads, each into its own gradient dict, then sum under a lock"""
        clips = [self.draw_clip() for _ in range(self.config.PARALLEL_CLIPS)]
        totals: List[float] = []
        parts = {name: 0.0 for name in LossParts.NAMES}

        def work(clip):
            video, frames = clip
            loss, clip_parts = train_clip(self.model, video, frames)
            grads: Dict[Tensor, np.ndarray] = {}
            if np.isfinite(loss.item()):
                backward(loss, grads=grads)
            with self.lock:
                totals.append(loss.item())
                for name in LossParts.NAMES:
                    parts[name] += clip_parts[name]
                for param, grad in grads.items():
                    param.grad = grad if param.grad is None else param.grad + grad

        with ThreadPoolExecutor(max_workers=self.threads) as pool:
            list(pool.map(work, clips))
        return float(sum(totals)), parts

    def _check_finite(self, total: float, iteration: int) -> None:
        if not np.isfinite(total):
            raise NumericError(f'Total loss is not finite at iteration {iteration} ({total})', part='total', iteration=iteration)

    def run(self, on_progress: Optional[ProgressCallback]=None) -> TrainingRun:
        run = TrainingRun()
        iters = self.config.ITERS
        for iteration in range(1, iters + 1):
            try:
                row = self.step(iteration)
            except NumericError as err:
                err.iteration = iteration if err.iteration is None else err.iteration
                raise
            run.iterations = iteration
            if iteration % self.config.LOG_EVERY == 0:
                run.rows.append(row)
            if on_progress:
                on_progress(iteration, row)
            if iteration % self.config.CHECKPOINT_EVERY == 0 and iteration != iters:
                self.save(run)
        self.save(run)
        return run

    def save(self, run: TrainingRun) -> None:
        run.checkpoints.append(run.iterations)
        if self.out_dir is None:
            return
        save_model(self.model, self.out_dir, iteration=run.iterations, extra={'seed': self.config.SEED})
        write_csv(self.out_dir / CONSTANTS.LOSS_LOG_FILENAME, run.rows, LOSS_COLUMNS)
