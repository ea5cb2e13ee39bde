import itertools
import json

import numpy as np
import pytest

from onlinevis.evalkit import (
    Track, count_id_switches, evaluate, greedy_match, gt_tracks_from_video, interpolated_precision,
    load_tracks_json, mask_iou, rle_decode, rle_encode, track_iou, tracks_from_json,
)
from onlinevis.misc.errors import ContractError, FormatError
from onlinevis.tensorcore import RngState

from .fixtures import *


def columns(*cols, size=4):
    mask = np.zeros((size, size), dtype=bool)
    mask[:, list(cols)] = True
    return mask


def track(masks, class_id=0, score=1.0, source=0) -> Track:
    return Track(masks=list(masks), class_id=class_id, score=score, source=source)


def test_track_iou_of_half_overlapping_masks():
    assert track_iou(track([columns(0, 1)]), track([columns(1, 2)])) == pytest.approx(1 / 3)
    assert mask_iou(columns(0), columns(0)) == 1.0


def test_track_iou_sums_over_frames_and_absent_frames():
    a = track([columns(0), None])
    b = track([columns(0), columns(3)])
    assert track_iou(a, b) == pytest.approx(4 / 8)
    assert track_iou(track([None, None]), track([None, None])) == 0.0
    with pytest.raises(ContractError):
        track_iou(track([None]), track([None, None]))


def test_track_iou_matches_pixel_sums(rng):
    masks = random_masks(rng, 2, 5)
    a, b = track(masks[0]), track(masks[1])
    inter = np.logical_and(masks[0], masks[1]).sum()
    union = np.logical_or(masks[0], masks[1]).sum()
    assert track_iou(a, b) == pytest.approx(inter / union)
    assert track_iou(a, b) == track_iou(b, a)


def test_greedy_match_follows_detection_order():
    ious = np.array([[0.6, 0.9], [0.9, 0.0]])
    matched = greedy_match(ious, thresholds=[0.5, 0.95])
    np.testing.assert_array_equal(matched, [[True, True], [False, False]])

    contested = np.array([[0.8], [0.9]])
    np.testing.assert_array_equal(greedy_match(contested, thresholds=[0.5]), [[True, False]])


def test_interpolated_precision_closed_forms():
    assert interpolated_precision(np.array([True, True]), 2) == (pytest.approx(1.0), 1.0)
    ap, recall = interpolated_precision(np.array([False, True]), 1)
    assert ap == pytest.approx(0.5) and recall == 1.0
    ap, recall = interpolated_precision(np.array([True]), 2)
    assert ap == pytest.approx(51 / 101) and recall == 0.5
    assert interpolated_precision(np.array([], dtype=bool), 3) == (0.0, 0.0)
    assert interpolated_precision(np.array([True]), 0) == (0.0, 0.0)


def _gt_and_perfect(rng):
    masks = random_masks(rng, 3, 4, size=8, p=0.5)
    gts = {'v': [track(masks[i], class_id=i % 2, source=i + 1) for i in range(3)]}
    preds = {'v': [track(masks[i], class_id=i % 2, score=0.9 - 0.1 * i, source=i) for i in range(3)]}
    return gts, preds


def test_perfect_predictions_score_one(rng):
    gts, preds = _gt_and_perfect(rng)
    metrics = evaluate(preds, gts)
    overall = metrics['overall']
    assert overall['AP'] == pytest.approx(1.0)
    assert overall['AP50'] == pytest.approx(1.0) and overall['AP75'] == pytest.approx(1.0)
    assert overall['AR@10'] == pytest.approx(1.0)
    # class 0 has two instances, one detection per video recalls half of them
    assert overall['AR@1'] == pytest.approx(0.75)
    assert metrics['num_classes'] == 2
    assert set(metrics['per_class']) == {'0', '1'}
    assert len(metrics['per_threshold']) == 10


def exhaustive_ap(preds, gts, threshold: float) -> float:
    """
    Enumerates every one-to-one assignment of score-ordered predictions to
    ground truths at IoU >= threshold and keeps the one whose IoU sequence is
    lexicographically largest, then takes the 101-point interpolated precision.
    """
    order = sorted(range(len(preds)), key=lambda i: -preds[i].score)
    ious = [[track_iou(preds[d], gt) for gt in gts] for d in order]
    best_key, best_choice = None, ()
    for choice in itertools.product(range(-1, len(gts)), repeat=len(order)):
        used = [g for g in choice if g >= 0]
        if len(used) != len(set(used)) or any(g >= 0 and ious[d][g] < threshold for d, g in enumerate(choice)):
            continue
        key = tuple(ious[d][g] if g >= 0 else -1.0 for d, g in enumerate(choice))
        if best_key is None or key > best_key:
            best_key, best_choice = key, choice

    hits = [g >= 0 for g in best_choice]
    points = []
    for r in np.linspace(0.0, 1.0, 101):
        reachable = [
            sum(hits[:k + 1]) / (k + 1)
            for k in range(len(hits))
            if sum(hits[:k + 1]) / len(gts) >= r
        ]
        points.append(max(reachable) if reachable else 0.0)
    return float(np.mean(points))


def test_evaluate_agrees_with_exhaustive_assignment():
    rng = RngState(21)
    thresholds = np.round(np.linspace(0.5, 0.95, 10), 2)
    for _ in range(100):
        num_gt, num_pred = int(rng.integers(1, 4)), int(rng.integers(0, 4))
        gt_masks = random_masks(rng, num_gt, 3, size=6, p=0.5)
        gts = {'v': [track(gt_masks[i], source=i + 1) for i in range(num_gt)]}
        pred_tracks = []
        for i in range(num_pred):
            # half the predictions are noisy copies of a ground truth so that matches happen
            masks = random_masks(rng, 1, 3, size=6, p=0.5)[0]
            if rng.uniform() < 0.5:
                flip = rng.uniform(0.0, 1.0, masks.shape) < 0.15
                masks = gt_masks[int(rng.integers(0, num_gt))] ^ flip
            pred_tracks.append(track(masks, score=float(rng.uniform(0.01, 1.0)), source=i))
        preds = {'v': pred_tracks}

        overall = evaluate(preds, gts)['overall']
        expected = [exhaustive_ap(pred_tracks, gts['v'], float(t)) for t in thresholds]
        assert overall['AP'] == pytest.approx(np.mean(expected), abs=1e-9)
        assert overall['AP50'] == pytest.approx(expected[0], abs=1e-9)
        assert overall['AP75'] == pytest.approx(expected[5], abs=1e-9)


def test_wrong_classes_score_zero_and_unlabelled_classes_are_ignored(rng):
    gts, preds = _gt_and_perfect(rng)
    for t in preds['v']:
        t.class_id = 2
    metrics = evaluate(preds, gts)
    assert metrics['overall']['AP'] == 0.0
    assert metrics['num_classes'] == 2


def test_missing_half_the_instances_halves_recall():
    masks = [columns(0), columns(2)]
    gts = {'v': [track([m], source=i + 1) for i, m in enumerate(masks)]}
    preds = {'v': [track([masks[0]], score=0.8)]}
    overall = evaluate(preds, gts)['overall']
    assert overall['AP'] == pytest.approx(51 / 101)
    assert overall['AR@1'] == pytest.approx(0.5)


def test_ar_at_one_caps_detections_per_video():
    masks = [columns(0), columns(2)]
    gts = {'v': [track([m], source=i + 1) for i, m in enumerate(masks)]}
    preds = {'v': [track([m], score=s, source=i) for i, (m, s) in enumerate(zip(masks, (0.9, 0.8)))]}
    overall = evaluate(preds, gts)['overall']
    assert overall['AR@1'] == pytest.approx(0.5)
    assert overall['AR@10'] == pytest.approx(1.0)


def test_id_switches():
    gt = track([columns(0)] * 4, source=1)
    same = track([columns(0)] * 4, source=0)
    assert count_id_switches([same], [gt]) == 0

    first = track([columns(0), columns(0), None, None], source=0)
    second = track([None, None, columns(0), columns(0)], source=1)
    assert count_id_switches([first, second], [gt]) == 1
    assert count_id_switches([first, second], []) == 0


def test_id_switch_across_an_occlusion_still_counts():
    gt = track([columns(1), columns(1), None, columns(1)], source=1)
    before = track([columns(1), columns(1), None, None], source=4)
    after = track([None, None, None, columns(1)], source=2)
    assert count_id_switches([before, after], [gt]) == 1


def test_rle_layout_and_errors():
    mask = np.array([[0, 1], [1, 1]], dtype=bool)
    assert rle_encode(mask) == {'size': [2, 2], 'counts': [1, 3]}
    assert rle_encode(np.array([[1, 0, 0]], dtype=bool))['counts'] == [0, 1, 2]
    np.testing.assert_array_equal(rle_decode(rle_encode(mask)), mask)
    with pytest.raises(FormatError):
        rle_decode({'size': [2, 2], 'counts': [1, 2]})
    with pytest.raises(FormatError):
        rle_decode({'counts': [4]})


def test_gt_tracks_are_absent_while_hidden(crossing_video):
    circle, square = gt_tracks_from_video(crossing_video)
    assert square.masks[6] is None and square.masks[0] is not None
    assert circle.source == 1 and square.source == 2
    assert all(mask is not None for mask in circle.masks)


def test_tracks_json_loading(tmp_path):
    document = {'videos': [{'name': 'v', 'num_frames': 2, 'tracks': [
        {'track_id': 3, 'class_id': 1, 'score': 0.7, 'class_scores': [0.1, 0.7, 0.2], 'masks': [rle_encode(columns(1)), None]},
    ]}]}
    loaded = tracks_from_json(document)['v'][0]
    assert (loaded.source, loaded.class_id, loaded.score) == (3, 1, 0.7)
    np.testing.assert_array_equal(loaded.masks[0], columns(1))
    assert loaded.masks[1] is None

    path = tmp_path / 'tracks.json'
    with pytest.raises(FormatError):
        load_tracks_json(path)
    path.write_text('{"videos": [{"name": "v"}]}')
    with pytest.raises(FormatError):
        load_tracks_json(path)
    path.write_text('not json')
    with pytest.raises(FormatError):
        load_tracks_json(path)
    path.write_text(json.dumps(document))
    assert list(load_tracks_json(path)) == ['v']
