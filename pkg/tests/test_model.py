import numpy as np
import pytest

from onlinevis.config import CONSTANTS
from onlinevis.config.common import ModelConfig, LossConfig, TrainConfig
from onlinevis.evalkit import rle_decode
from onlinevis.losses import update_matches
from onlinevis.misc.errors import ConfigurationError, ContractError, FormatError, NumericError
from onlinevis.model import (
    AdamW, MultiStepLR, OnlineVISModel, ParamGroup, Trainer, build_optimizer, clip_grad_norm, load_model,
    merge_video_scores, run_video, sample_clip, save_model, train_clip, upsample_masks,
)
from onlinevis.model import network
from onlinevis.reports import read_csv
from onlinevis.tensorcore import RngState, check_mode, parameter
from onlinevis.tensorcore.gradcheck import load_all_cases, run_gradcheck

from .fixtures import *


def tiny_model(seed: int=0, **overrides) -> OnlineVISModel:
    return OnlineVISModel(ModelConfig(**{**TINY_MODEL, **overrides}), LossConfig(), RngState(seed))


### Streaming

def test_process_frame_in_infer_mode(tiny_videos):
    model = tiny_model()
    video = tiny_videos[0]
    state = model.init_state()
    for t in range(len(video)):
        prediction, state = model.process_frame(state, video.frame_tensor(t))
        assert prediction.frame_index == t
        assert prediction.scores.shape == (6, len(CONSTANTS.CLASS_NAMES))
        assert ((prediction.scores.data >= 0) & (prediction.scores.data <= 1)).all()
        assert ((prediction.boxes.data > 0) & (prediction.boxes.data < 1)).all()
        assert prediction.mask_logits.shape == (6, 8, 8)
        assert not prediction.scores.requires_grad
        assert len(prediction.selected) == 2
        assert ((state.ref.data > 0) & (state.ref.data < 1)).all()
    assert len(state.queue) == 2 and state.queue.newest_frame == len(video) - 1


def test_process_frame_contracts(tiny_videos):
    model = tiny_model()
    frame = tiny_videos[0].frame_tensor(0)
    state = model.init_state()
    with pytest.raises(ContractError):
        model.process_frame(state, frame, t=1)
    with pytest.raises(ContractError):
        model.process_frame(state, frame, mode='train')
    with pytest.raises(ContractError):
        model.process_frame(state, frame, mode='replay')
    with pytest.raises(ContractError):
        model.process_frame(state, frame[:, :20, :20])


def test_identical_seeds_give_identical_predictions(tiny_videos):
    frame = tiny_videos[1].frame_tensor(0)
    a, _ = tiny_model(seed=5).process_frame(tiny_model(seed=5).init_state(), frame)
    b, _ = tiny_model(seed=5).process_frame(tiny_model(seed=5).init_state(), frame)
    np.testing.assert_array_equal(a.scores.data, b.scores.data)
    np.testing.assert_array_equal(a.mask_logits.data, b.mask_logits.data)


def test_train_mode_matches_every_visible_instance(tiny_videos):
    model = tiny_model()
    video = tiny_videos[0]
    state = model.init_state()
    for t in range(3):
        gt = video.frame_ground_truth(t)
        prediction, state = model.process_frame(state, video.frame_tensor(t), mode='train', gt=gt)
        assert len(prediction.matched) == len(gt)
        assert set(prediction.selected.tolist()) <= set(prediction.matched.tolist())
        assert all(np.isfinite(v) for v in prediction.losses.values().values())
    assert state.match_state.matcher_calls >= 1
    assert sorted(state.assoc) == sorted({inst.instance_id for inst in video.instances if any(inst.is_visible(t) for t in range(3))})


def _carried(state):
    """References to everything the state carries into the next frame"""
    return [
        state.q.data, state.ref.data, *state.class_history,
        *(token.embedding.data for slot in state.queue for token in slot.tokens),
    ]


def test_predictions_never_depend_on_later_frames(tiny_videos):
    video, t = tiny_videos[0], 2
    runs = []
    with check_mode():
        for later in ('real', 'noise'):
            model = tiny_model(seed=4)
            frames = [video.frame_tensor(i) for i in range(t + 2)]
            if later == 'noise':
                frames[t + 1] = RngState(9).uniform(0.0, 1.0, frames[t + 1].shape)
            state = model.init_state()
            for i in range(t + 1):
                prediction, state = model.process_frame(state, frames[i])
            carried = _carried(state)
            model.process_frame(state, frames[t + 1])
            runs.append((prediction, carried))

    (a, carried_a), (b, carried_b) = runs
    assert a.scores.data.dtype == np.float64
    for name in ('c_hat', 'scores', 'boxes', 'mask_logits'):
        np.testing.assert_array_equal(getattr(a, name).data, getattr(b, name).data)
    assert len(carried_a) == len(carried_b)
    for x, y in zip(carried_a, carried_b):
        np.testing.assert_array_equal(x, y)


def test_state_stays_bounded_however_long_the_video():
    model = tiny_model()
    rng = RngState(2)
    depth = model.propagation_config.history_depth
    peaks = {}
    for length in (8, 64, 256):
        state = model.init_state()
        peak = 0
        for _ in range(length):
            _, state = model.process_frame(state, rng.uniform(0.0, 1.0, (3, 32, 32)))
            peak = max(peak, state.footprint())
            assert len(state.queue) <= 2 and all(len(slot.tokens) <= 2 for slot in state.queue)
            assert len(state.class_history) <= depth
        assert state.footprint() == peak
        peaks[length] = peak
    assert peaks[8] == peaks[64] == peaks[256]


def test_matching_costs_classes_before_the_prior(tiny_videos, monkeypatch):
    seen = []

    def recording_update_matches(state, gt, probs, *args, **kwargs):
        seen.append(np.array(probs, copy=True))
        return update_matches(state, gt, probs, *args, **kwargs)

    monkeypatch.setattr(network, 'update_matches', recording_update_matches)
    model = tiny_model()
    video = tiny_videos[0]
    state = model.init_state()
    assoc = {}
    for t in range(len(video)):
        prediction, state = model.process_frame(state, video.frame_tensor(t), mode='train', gt=video.frame_ground_truth(t))
        np.testing.assert_array_equal(seen[t], prediction.c_hat.data)
        if t >= 1:
            assert not np.array_equal(prediction.scores.data, prediction.c_hat.data)
        assert {gt_id: state.assoc[gt_id] for gt_id in assoc} == assoc
        assoc = dict(state.assoc)


def test_without_memory_the_queue_stays_empty(tiny_videos):
    model = tiny_model(USE_MEMORY=False)
    video = tiny_videos[0]
    state = model.init_state()
    for t in range(3):
        prediction, state = model.process_frame(state, video.frame_tensor(t), mode='train', gt=video.frame_ground_truth(t))
        assert prediction.losses.tcl.item() == 0.0
    assert state.queue.is_empty


def test_train_clip_gradients_reach_every_stage(tiny_videos):
    model = tiny_model()
    loss, parts = train_clip(model, tiny_videos[0], [0, 1, 2])
    assert set(parts) == {'cls', 'box', 'mask', 'tcl'}
    loss.backward()
    for stage in (model.backbone, model.encoder, model.decoder, model.heads):
        assert any(p.grad is not None and np.abs(p.grad).sum() > 0 for p in stage.parameters())


def test_merge_video_scores_picks_early_confident_queries():
    scores = np.zeros((5, 4, 2))
    scores[0, 3, 1] = 0.9
    scores[1, 1, 0] = 0.7
    scores[4, 0, 0] = 0.99          # too late to become a candidate
    merged = merge_video_scores(scores, top_k=2, first_frames=3)
    np.testing.assert_array_equal(merged.candidates, [1, 3])
    np.testing.assert_allclose(merged.class_scores[1], [0.0, 0.9 / 5])

    ties = merge_video_scores(np.full((2, 4, 2), 0.5), top_k=3)
    np.testing.assert_array_equal(ties.candidates, [0, 1, 2])
    with pytest.raises(ContractError):
        merge_video_scores(np.zeros((0, 4, 2)), top_k=2)


def test_upsample_masks_thresholds_logits():
    logits = np.array([[[1.0, -1.0], [0.0, 2.0]]])
    masks = upsample_masks(logits, stride=2)
    assert masks.shape == (1, 4, 4) and masks.dtype == bool
    np.testing.assert_array_equal(masks[0, :2, :2], True)
    np.testing.assert_array_equal(masks[0, 2:, :2], False)


def test_run_video_keeps_top_k_tracks(tiny_videos):
    model = tiny_model()
    video = tiny_videos[0]
    result = run_video(model, video, top_k=3)
    assert len(result.merged.candidates) == 3
    assert sorted(result.masks) == sorted(int(q) for q in result.merged.candidates)
    for query in result.masks:
        assert len(result.masks[query]) == len(video)
        assert result.masks[query][0].shape == video.canvas

    document = result.to_json()
    assert document['num_frames'] == len(video)
    track = document['tracks'][0]
    assert 0 <= track['class_id'] < len(CONSTANTS.CLASS_NAMES)
    np.testing.assert_array_equal(rle_decode(track['masks'][0]), result.masks[track['track_id']][0])
    assert len(result.embedding_rows()) == 3 * len(video)


### Training

def test_sample_clip_is_sorted_and_bounded():
    rng = RngState(0)
    for _ in range(50):
        clip = sample_clip(10, rng, 3, 5)
        assert 3 <= len(clip) <= 5
        assert clip == sorted(set(clip))
        assert all(0 <= i < 10 for i in clip)
    assert len(sample_clip(2, rng, 3, 5)) == 2
    with pytest.raises(ContractError):
        sample_clip(0, rng)
    with pytest.raises(ContractError):
        sample_clip(5, rng, 4, 2)


def test_trainer_writes_checkpoints_and_loss_log(tmp_path, tiny_videos, tiny_train_config):
    model = tiny_model()
    seen = []
    run = Trainer(model, tiny_videos, tiny_train_config, 'toy', out_dir=tmp_path).run(on_progress=lambda i, row: seen.append(i))
    assert run.iterations == 4 and seen == [1, 2, 3, 4]
    assert run.checkpoints == [2, 4]
    assert np.isfinite(run.final_loss)

    rows = read_csv(tmp_path / CONSTANTS.LOSS_LOG_FILENAME)
    assert [int(row['iter']) for row in rows] == [1, 2, 3, 4]
    assert (tmp_path / CONSTANTS.CHECKPOINT_FILENAME).exists()

    loaded, metadata = load_model(tmp_path)
    assert metadata['iteration'] == 4 and metadata['seed'] == 0
    for name, value in model.state_dict().items():
        np.testing.assert_array_equal(loaded.state_dict()[name], value)


def test_training_is_reproducible(tiny_videos, tiny_train_config):
    runs = [Trainer(tiny_model(), tiny_videos, tiny_train_config, 'toy').run() for _ in range(2)]
    assert [row['total'] for row in runs[0].rows] == [row['total'] for row in runs[1].rows]


def test_parallel_clips_accumulate_gradients(tiny_videos):
    config = TrainConfig(ITERS=2, MIN_CLIP_FRAMES=2, MAX_CLIP_FRAMES=2, PARALLEL_CLIPS=2)
    run = Trainer(tiny_model(), tiny_videos, config, 'toy', threads=2).run()
    assert run.iterations == 2
    assert all(np.isfinite(row['total']) for row in run.rows)


def test_trainer_reports_the_iteration_of_a_non_finite_loss(tiny_videos, tiny_train_config):
    model = tiny_model()
    model.heads.mask_head.mask_proj.weight.data[...] = np.nan
    with pytest.raises(NumericError) as err:
        Trainer(model, tiny_videos, tiny_train_config, 'toy').run()
    assert err.value.iteration == 1


def test_trainer_needs_videos(tiny_train_config):
    with pytest.raises(ContractError):
        Trainer(tiny_model(), [], tiny_train_config, 'toy')


def test_checkpoint_round_trip_reproduces_inference(tmp_path, tiny_videos):
    model = tiny_model(seed=3)
    save_model(model, tmp_path, iteration=0)
    loaded, _ = load_model(tmp_path)
    a = run_video(model, tiny_videos[1], top_k=2)
    b = run_video(loaded, tiny_videos[1], top_k=2)
    np.testing.assert_array_equal(a.merged.class_scores, b.merged.class_scores)

    with pytest.raises(ConfigurationError):
        load_model(tmp_path, overrides={'WIDTH': 32})
    with pytest.raises(FormatError):
        load_model(tmp_path / 'missing')


### Optimizer

def test_adamw_first_step_moves_by_the_learning_rate():
    p = parameter([1.0, -2.0])
    p.grad = np.array([0.5, -3.0])
    AdamW([ParamGroup([p], lr=0.01)]).step()
    np.testing.assert_allclose(p.data, [0.99, -1.99], atol=1e-6)


def test_adamw_weight_decay_is_decoupled():
    p = parameter([2.0])
    p.grad = np.zeros(1)
    AdamW([ParamGroup([p], lr=0.1, weight_decay=0.5)]).step()
    np.testing.assert_allclose(p.data, [2.0 * (1 - 0.05)], atol=1e-6)


def test_adamw_validates_groups():
    p = parameter([1.0])
    with pytest.raises(ConfigurationError):
        AdamW([ParamGroup([p], lr=0.1), ParamGroup([p], lr=0.1)])
    with pytest.raises(ConfigurationError):
        AdamW([ParamGroup([p], lr=0.0)])


def test_multistep_lr_drops_at_the_milestone():
    optimizer = AdamW([ParamGroup([parameter([1.0])], lr=1.0)])
    scheduler = MultiStepLR.from_fractions(optimizer, [2 / 3], 300, gamma=0.1)
    assert scheduler.milestones == [200]
    for _ in range(199):
        scheduler.step()
    assert optimizer.groups[0].lr == 1.0
    scheduler.step()
    assert optimizer.groups[0].lr == pytest.approx(0.1)


def test_clip_grad_norm_rescales_globally():
    a, b = parameter([0.0]), parameter([0.0])
    a.grad, b.grad = np.array([3.0]), np.array([4.0])
    assert clip_grad_norm([a, b], 1.0) == pytest.approx(5.0)
    np.testing.assert_allclose([a.grad[0], b.grad[0]], [0.6, 0.8], atol=1e-5)
    assert clip_grad_norm([a, b], 0.0) == pytest.approx(1.0, abs=1e-5)


def test_optimizer_groups_use_the_backbone_multiplier():
    model = tiny_model()
    optimizer = build_optimizer(model, TrainConfig(), 'toy')
    backbone, rest = optimizer.groups
    assert backbone.lr == pytest.approx(1e-4) and rest.lr == pytest.approx(1e-3)
    assert len(optimizer.params) == len(model.parameters())
    assert build_optimizer(model, TrainConfig(LR=5e-4), 'paper').groups[1].lr == 5e-4


### Composite gradients

@pytest.mark.parametrize('name', [
    'multi_head_attention', 'ms_deform_attn', 'class_prior', 'memory_cross_attention',
    'classification_loss', 'box_loss', 'mask_loss', 'temporal_contrastive_loss',
    'encoder_layer', 'decoder_layer',
])
def test_composite_gradchecks_pass(name):
    load_all_cases()
    result = run_gradcheck(name, seeds=[0, 1])
    assert result.passed, result


def test_joint_loss_gradcheck_passes():
    load_all_cases()
    result = run_gradcheck('joint_loss', seeds=[0])
    assert result.passed, result
