import dataclasses
import math

import numpy as np
import pytest
import torch

from conftest import fd_probe
from rfaction.core import FormatError
from rfaction.core.types import ActionSegment, SkeletonFrame
from rfaction.detect import ClassifierOutput, SlotOutput
from rfaction.model import ACTION_RECOGNIZER, SKELETON_GENERATOR, ModelConfig, RFActionModel
from rfaction.simkit import random_scenario, render_heatmaps, simulate, synth_motion
from rfaction.train import (
    RF,
    SKELETON,
    ModelState,
    TrainBatch,
    DetectionTargets,
    TrainConfig,
    alternate_schedule,
    clip_segments,
    cosine_factor,
    detection_gradients,
    detection_loss,
    fit,
    load_state,
    loss_detection,
    loss_skeleton,
    multimodal_step,
    pack_checkpoint,
    rf_batch,
    rf_losses,
    rotate_scene,
    save_state,
    scene_joints,
    skeleton_batch,
    smooth_l1,
    unpack_checkpoint,
)
from rfaction.train.data import mirror_batch


@pytest.fixture(scope="module")
def scene():
    return simulate(random_scenario(11, duration=60))


def tiny_config(**kw):
    return TrainConfig(steps=kw.pop("steps", 4), clip_windows=1, log_every=0, **kw)


# -- losses -----------------------------------------------------------------

def test_smooth_l1_pieces():
    beta = 0.1
    x = torch.tensor([0.0, 0.05, -0.05, 0.1, 0.3, -2.0], dtype=torch.double)
    want = [0.0, 0.05 ** 2 / 0.2, 0.05 ** 2 / 0.2, 0.05, 0.25, 1.95]
    torch.testing.assert_close(smooth_l1(x, beta), torch.tensor(want, dtype=torch.double))


def test_skeleton_loss_perfect_and_offset():
    rng = np.random.default_rng(0)
    gt = torch.as_tensor(rng.uniform(0, 3, (2, 5, 14, 4)))
    gt[..., 0] += torch.tensor([0.0, 3.0])[:, None, None]  # keep persons apart
    assert loss_skeleton(gt[..., :3].clone(), gt).item() == 0.0
    # person order does not matter
    assert loss_skeleton(gt[[1, 0], ..., :3].clone(), gt).item() == 0.0
    d = 0.04
    # every coordinate off by d < beta: 3 coordinates of d^2 / (2 beta)
    assert loss_skeleton(gt[..., :3] + d, gt).item() == pytest.approx(3 * d * d / 0.2)


def test_skeleton_loss_ignores_unmatched_predictions():
    gt = torch.zeros(1, 3, 14, 4, dtype=torch.double)
    pred = torch.zeros(2, 3, 14, 3, dtype=torch.double)
    pred[1] += 5.0
    assert loss_skeleton(pred, gt).item() == 0.0


def test_skeleton_loss_gradient():
    gt = torch.rand(2, 4, 14, 4, dtype=torch.double)
    gt[1, ..., 0] += 3
    pred = (gt[..., :3] + 0.2 * torch.randn(2, 4, 14, 3, dtype=torch.double)).requires_grad_(True)
    assert fd_probe(lambda: loss_skeleton(pred, gt), pred) < 1e-4


def detection_setup(scene):
    model = RFActionModel().double()
    ids, joints = scene_joints(scene.frames)
    seqs = torch.as_tensor(joints.transpose(0, 3, 1, 2)[:, :, :60])
    return model.action_recognizer, ids, seqs, scene.segments


def test_detection_loss_gradient(scene):
    rec, ids, seqs, segs = detection_setup(scene)

    def loss():
        return detection_loss(rec, ids, seqs, segs, np.random.default_rng(0))[0]

    for p in (rec.detector.classifiers["single"].actionness.weight, rec.features.mask_conv.weight):
        assert fd_probe(loss, p, eps=1e-5) < 1e-4


def test_detection_terms_are_finite_without_ground_truth(scene):
    rec, ids, seqs, _ = detection_setup(scene)
    total, logged = detection_loss(rec, ids, seqs, [], np.random.default_rng(0))
    assert torch.isfinite(total)
    assert logged["class_ce"] == 0.0 and logged["boundary"] == 0.0 and logged["proposal_reg"] == 0.0


# -- data and schedule ------------------------------------------------------

def test_schedule():
    assert alternate_schedule(1, 6) == [RF, SKELETON] * 3
    assert alternate_schedule(3, 8) == [RF, RF, RF, SKELETON] * 2
    assert alternate_schedule(2, 5, skeleton_available=False) == [RF] * 5
    with pytest.raises(ValueError):
        alternate_schedule(0, 4)


def test_cosine_factor():
    assert cosine_factor(0, 100) == 1.0
    assert cosine_factor(50, 100) == pytest.approx(0.5)
    assert cosine_factor(100, 100) == pytest.approx(0.0)
    assert cosine_factor(5, 0) == 1.0


def test_clip_segments():
    segs = [ActionSegment(0, 10, 50, (1,)), ActionSegment(1, 85, 95, (1,)), ActionSegment(2, 0, 5, (2,))]
    out = clip_segments(segs, 40, 50)
    assert out == [ActionSegment(0, 0, 10, (1,))]
    assert clip_segments(segs, 0, 100) == segs


def test_rotation_keeps_limb_lengths(scene):
    _, joints = scene_joints(scene.frames)
    rot = rotate_scene(joints, 1.1)
    np.testing.assert_allclose(np.linalg.norm(rot[..., 0, :3] - rot[..., 1, :3], axis=-1),
                               np.linalg.norm(joints[..., 0, :3] - joints[..., 1, :3], axis=-1), atol=1e-12)
    np.testing.assert_array_equal(rot[..., 2], joints[..., 2])


@pytest.mark.parametrize("fx,fy", [(True, False), (False, True), (True, True)])
def test_mirror_matches_rendering_the_mirrored_scene(fx, fy):
    sc = random_scenario(5, duration=20)
    sc = dataclasses.replace(sc, wall=None, render=dataclasses.replace(sc.render, p_spec=0.0, noise=0.0))
    frames, _ = synth_motion(sc)
    ids, joints = scene_joints(frames)
    mirrored = mirror_batch(TrainBatch(RF, ids, joints, [], render_heatmaps(frames, sc)), fx, fy)
    redo = render_heatmaps([SkeletonFrame(f.frame_index, {p: mirrored.joints[k, t] for k, p in enumerate(ids)})
                            for t, f in enumerate(frames)], sc)
    np.testing.assert_array_equal(redo.horizontal, mirrored.heatmaps.horizontal)
    np.testing.assert_array_equal(redo.vertical, mirrored.heatmaps.vertical)


# -- routing ----------------------------------------------------------------

def generator_snapshot(model):
    return {n: p.detach().clone() for n, p in model.partition(SKELETON_GENERATOR)}


def test_skeleton_step_leaves_generator_bitwise_unchanged(scene):
    rng = np.random.default_rng(0)
    state = ModelState(RFActionModel(), lr=1e-3)
    multimodal_step(state, rf_batch(scene, rng, 30), rng=rng)  # populate optimizer moments
    before = generator_snapshot(state.model)
    rec_before = [p.detach().clone() for _, p in state.model.partition(ACTION_RECOGNIZER)]
    multimodal_step(state, skeleton_batch(scene, rng), rng=rng)
    after = generator_snapshot(state.model)
    assert all(torch.equal(before[n], after[n]) for n in before)
    assert any(not torch.equal(a, p) for a, (_, p) in zip(rec_before, state.model.partition(ACTION_RECOGNIZER)))


def test_end_to_end_reaches_generator_and_separate_does_not(scene):
    batch = rf_batch(scene, np.random.default_rng(0), 30)
    model = RFActionModel()
    e2e = detection_gradients(model, batch, "end_to_end", np.random.default_rng(0))
    sep = detection_gradients(model, batch, "separate", np.random.default_rng(0))
    assert any(g is not None and torch.count_nonzero(g) > 0 for g in e2e.values())
    assert all(g is None or torch.count_nonzero(g) == 0 for g in sep.values())


def test_zero_lambda_drops_detection(scene):
    batch = rf_batch(scene, np.random.default_rng(0), 30)
    losses, _ = rf_losses(RFActionModel(), batch, lam=0.0)
    assert losses["total"].item() == pytest.approx(losses["skeleton"].item() + losses["rpn"].item())


# -- fit, checkpoints, config -----------------------------------------------

def test_fit_is_reproducible(scene):
    a = fit(tiny_config(), [scene]).model.state_dict()
    b = fit(tiny_config(), [scene]).model.state_dict()
    assert all(torch.equal(a[k], b[k]) for k in a)


def test_fit_needs_rf_scenes():
    with pytest.raises(ValueError):
        fit(tiny_config(), [])


def test_checkpoint_round_trip(scene, tmp_path):
    state = fit(tiny_config(steps=2), [scene])
    save_state(tmp_path / "m.rfa", state)
    loaded = load_state(tmp_path / "m.rfa")
    assert loaded.step == state.step == 2
    for (n, p), (_, q) in zip(state.model.named_parameters(), loaded.model.named_parameters()):
        assert torch.equal(p, q), n
    ours, theirs = state.optimizer_tensors(), loaded.optimizer_tensors()
    assert ours.keys() == theirs.keys()
    assert all(torch.equal(ours[k].float(), theirs[k].float()) for k in ours)


def test_checkpoint_blocks_round_trip_and_corruption():
    rng = np.random.default_rng(0)
    blocks = {f"b{k}": rng.normal(size=tuple(rng.integers(1, 4, rng.integers(0, 4)))).astype(np.float32)
              for k in range(5)}
    data = pack_checkpoint(blocks, {"step": 3})
    out, meta = unpack_checkpoint(data)
    assert meta == {"step": 3} and all(np.array_equal(out[k], blocks[k]) for k in blocks)
    assert pack_checkpoint(out, meta) == data
    with pytest.raises(FormatError, match="magic"):
        unpack_checkpoint(b"XXXX" + data[4:])
    with pytest.raises(FormatError, match="truncated"):
        unpack_checkpoint(data[:-3])
    with pytest.raises(FormatError, match="trailing"):
        unpack_checkpoint(data + b"\0")


def test_train_config_round_trip_and_errors():
    cfg = TrainConfig(steps=10, lr=3e-3, model=ModelConfig(proposals="single"))
    assert TrainConfig.from_dict(cfg.to_dict()) == cfg
    with pytest.raises(ValueError, match="unknown"):
        TrainConfig.from_dict({"stpes": 3})
    with pytest.raises(ValueError, match="mode"):
        TrainConfig(mode="joint")
    with pytest.raises(ValueError):
        TrainConfig(ratio=0)


def synthetic_outputs(anchor_logit, windows, actionness, class_logits):
    anchors = torch.tensor([[10.0, 20.0], [50.0, 20.0]], dtype=torch.double)
    out = SlotOutput(None, 80, torch.zeros(1), anchors, torch.full((2,), anchor_logit, dtype=torch.double),
                     torch.zeros(2, 2, dtype=torch.double))
    cls = ClassifierOutput(torch.tensor(windows, dtype=torch.double), torch.tensor(actionness, dtype=torch.double),
                           torch.tensor(class_logits, dtype=torch.double), torch.zeros(len(windows), 2, dtype=torch.double))
    return out, cls


def test_detection_loss_vanishes_as_scores_go_to_zero_without_ground_truth():
    empty = DetectionTargets(np.zeros((0, 2)), np.zeros(0, int))
    totals = []
    for logit in (-2.0, -8.0, -30.0):
        out, cls = synthetic_outputs(logit, [[0.0, 20.0], [40.0, 60.0]], [logit, logit], [[0.0, 0.0], [0.0, 0.0]])
        totals.append(sum(v.item() for v in loss_detection(out, cls, empty).values()))
    assert totals[0] > totals[1] > totals[2] >= 0 and totals[2] < 1e-12


def test_perfect_match_class_term_is_negative_log_probability():
    target = DetectionTargets(np.array([[0.0, 20.0]]), np.array([1]))
    logits = [[0.3, 1.2, -0.5]]
    out, cls = synthetic_outputs(0.0, [[0.0, 20.0]], [5.0], logits)
    terms = loss_detection(out, cls, target)
    p = torch.softmax(torch.tensor(logits[0], dtype=torch.double), 0)[1]
    assert terms["class_ce"].item() == pytest.approx(-math.log(p.item()))
    assert terms["boundary"].item() == 0.0
