import numpy as np
import pytest
import torch

from conftest import fd_probe
from rfaction.simkit import GridSpec, HeatmapStream, random_scenario, simulate
from rfaction.skelgen import (
    FeatureNet,
    PoseHead,
    RegionProposalNet,
    SkeletonGenerator,
    box_iou,
    clip_boxes,
    decode,
    encode,
    nms,
    person_box,
    propose_regions,
    rpn_targets,
    soft_argmax,
    soft_argmax_logits,
    soft_argmax_separable,
)


def small_net(**kw):
    return FeatureNet(window=8, horizontal=(16, 16), vertical=(16, 8), **kw).double()


# -- feature net ------------------------------------------------------------

def test_zero_in_zero_out():
    net = small_net()
    for m in net.modules():
        if isinstance(m, torch.nn.Conv3d):
            torch.nn.init.zeros_(m.bias)
    out = net(torch.zeros(2, 8, 16, 16, dtype=torch.double), torch.zeros(2, 8, 16, 8, dtype=torch.double))
    assert torch.count_nonzero(out.horizontal) == 0 and torch.count_nonzero(out.vertical) == 0


@pytest.mark.parametrize("T,H,W", [(30, 64, 64), (8, 16, 16), (9, 17, 13)])
def test_output_shape_closed_form(T, H, W):
    net = FeatureNet(window=T, horizontal=(H, W), vertical=(H, 8))
    # k=3, pad=1: n -> floor((n - 1) / s) + 1 per block
    t, h, w = T, H, W
    for st, ss in ((1, 2), (1, 2), (2, 1), (2, 1)):
        t, h, w = (t - 1) // st + 1, (h - 1) // ss + 1, (w - 1) // ss + 1
    assert net.output_shape(T, H, W) == (32, t, h, w)
    out = net(torch.rand(1, T, H, W), torch.rand(1, T, H, 8))
    assert tuple(out.horizontal.shape[1:]) == (32, t, h, w)


def test_wrong_grid_shape_raises():
    with pytest.raises(ValueError, match="horizontal"):
        small_net()(torch.zeros(1, 8, 15, 16, dtype=torch.double), torch.zeros(1, 8, 16, 8, dtype=torch.double))


def test_feature_net_gradient_matches_finite_differences():
    net = small_net()
    h, v = torch.rand(1, 8, 16, 16, dtype=torch.double), torch.rand(1, 8, 16, 8, dtype=torch.double)
    probe = torch.randn(net.output_shape(8, 16, 16), dtype=torch.double)

    def loss():
        return (net(h, v).horizontal[0] * probe).sum()

    for layer in (net.horizontal[0].weight, net.horizontal[6].weight):
        assert fd_probe(loss, layer) < 1e-4


# -- region proposals -------------------------------------------------------

def test_nms_drops_the_weaker_overlap():
    boxes = np.array([[10.0, 10.0, 10.0, 10.0], [10.0, 10.5, 10.0, 10.0], [30.0, 30.0, 8.0, 8.0]])
    assert box_iou(boxes[0], boxes[1])[0, 0] > 0.9
    assert nms(boxes, np.array([0.6, 0.9, 0.5]), 0.5) == [1, 2]


def test_box_iou_examples():
    a = np.array([[0.0, 0.0, 2.0, 2.0]])
    assert box_iou(a, a)[0, 0] == 1.0
    assert box_iou(a, np.array([[1.0, 0.0, 2.0, 2.0]]))[0, 0] == pytest.approx(1 / 3)
    assert box_iou(a, np.array([[5.0, 5.0, 2.0, 2.0]]))[0, 0] == 0.0


def test_encode_decode_inverse():
    anchors = torch.tensor([[8.0, 12.0, 10.0, 10.0]])
    boxes = torch.tensor([[9.5, 10.0, 14.0, 7.0]])
    torch.testing.assert_close(decode(anchors, encode(anchors, boxes)), boxes)


def test_clip_keeps_boxes_on_grid():
    out = clip_boxes(np.array([[-3.0, 2.0, 10.0, 4.0], [62.0, 62.0, 10.0, 10.0]]), (64, 64))
    lo, hi = out[:, :2] - out[:, 2:] / 2, out[:, :2] + out[:, 2:] / 2
    assert lo.min() >= -0.5 and hi.max() <= 63.5


def test_all_scores_below_threshold_gives_nothing():
    rpn = RegionProposalNet(in_channels=4)
    torch.nn.init.constant_(rpn.score.bias, -20.0)
    assert propose_regions(torch.rand(2, 4, 3, 8, 8), rpn, (32, 32)) == [[], []]


def test_proposals_sorted_by_score():
    rpn = RegionProposalNet(in_channels=4)
    torch.nn.init.constant_(rpn.score.bias, 3.0)
    props = propose_regions(torch.rand(1, 4, 3, 16, 16), rpn, (64, 64), score_thresh=0.0, max_proposals=50)[0]
    scores = [p.score for p in props]
    assert props and scores == sorted(scores, reverse=True)
    assert all(0.0 <= s <= 1.0 for s in scores)


def test_rpn_targets_best_anchor_always_positive():
    anchors = np.array([[0, 0, 10, 10], [20, 20, 10, 10], [40, 40, 10, 10]], float)
    labels, match = rpn_targets(anchors, [np.array([24.0, 24.0, 3.0, 3.0])])
    assert labels.tolist() == [0, 1, 0] and match.tolist() == [-1, 0, -1]
    labels, _ = rpn_targets(anchors, [])
    assert labels.tolist() == [0, 0, 0]


# -- soft-argmax ------------------------------------------------------------

@pytest.mark.parametrize("tau", [0.01, 1.0, 10.0])
def test_soft_argmax_one_hot(tau):
    v = torch.zeros(5, 6, 4, dtype=torch.double)
    v[2, 3, 1] = 1.0
    assert soft_argmax(v, tau).tolist() == [2.0, 3.0, 1.0]


def test_soft_argmax_uniform_is_centre():
    torch.testing.assert_close(soft_argmax(torch.ones(5, 6, 4, dtype=torch.double)),
                               torch.tensor([2.0, 2.5, 1.5], dtype=torch.double))


def test_soft_argmax_two_peaks():
    v = torch.zeros(5, 3, 3, dtype=torch.double)
    v[0, 0, 0] = v[4, 0, 0] = 1.0
    torch.testing.assert_close(soft_argmax(v, 0.5), torch.tensor([2.0, 0.0, 0.0], dtype=torch.double))


def test_soft_argmax_errors():
    with pytest.raises(ValueError, match="all-zero"):
        soft_argmax(torch.zeros(2, 2, 2))
    with pytest.raises(ValueError):
        soft_argmax(-torch.ones(2, 2, 2))
    with pytest.raises(ValueError):
        soft_argmax(torch.ones(2, 2, 2), temperature=0.0)


def peaked_volume(rng, shape=(6, 7, 5), margin=1.1):
    """Uniform background in [0, 1) with one cell raised to ``margin`` times the runner-up."""
    v = rng.random(shape)
    idx = tuple(int(rng.integers(n)) for n in shape)
    v[idx] = 0.0
    v[idx] = margin * v.max()
    return torch.as_tensor(v / v.sum())


def test_soft_argmax_low_temperature_is_argmax():
    rng = np.random.default_rng(0)
    for _ in range(100):
        v = peaked_volume(rng)
        want = np.unravel_index(int(v.argmax()), v.shape)
        got = soft_argmax(v, 0.01).numpy()
        assert np.abs(got - np.array(want)).max() < 0.5


def test_soft_argmax_gradient():
    v = torch.rand(4, 5, 3, dtype=torch.double) + 0.1
    v.requires_grad_(True)
    w = torch.randn(3, dtype=torch.double)
    assert fd_probe(lambda: (soft_argmax(v, 0.7) * w).sum(), v, n_probes=20) < 1e-4


# -- pose head --------------------------------------------------------------

def test_readout_of_forced_one_hot_volumes():
    grid = GridSpec()
    head = PoseHead(crop=8, depth_bins=4, n_joints=3).double()
    boxes = torch.tensor([[20.0, 30.0, 8.0, 12.0]], dtype=torch.double)
    cells = [(1, 2, 5), (3, 0, 7), (0, 7, 0)]
    vol = torch.zeros(1, 1, 3, 4, 8, 8, dtype=torch.double)
    for j, (d, x, y) in enumerate(cells):
        vol[0, 0, j, d, x, y] = 1.0
    out = head.readout(vol, boxes, grid)
    for j, (d, x, y) in enumerate(cells):
        gx = 20.0 - 4.0 + (x + 0.5) * 8.0 / 8
        gy = 30.0 - 6.0 + (y + 0.5) * 12.0 / 8
        gz = (d + 0.5) * 32 / 4 - 0.5
        want = (np.array([gx, gy, gz]) + 0.5) * grid.cell
        np.testing.assert_allclose(out.coords[0, 0, j].numpy(), want, atol=1e-12)
    assert out.confidence.tolist() == [[[1.0, 1.0, 1.0]]]


def test_degenerate_box_raises():
    head = PoseHead()
    with pytest.raises(ValueError, match="degenerate"):
        head.sample_points(torch.tensor([[10.0, 10.0, 0.0, 5.0]]), GridSpec())


def test_person_box_contains_the_body():
    grid = GridSpec()
    joints = np.zeros((5, 14, 3))
    joints[..., 0] = np.linspace(2.0, 2.4, 14)
    joints[..., 1] = 3.0
    box = person_box(joints, grid)
    lo, hi = box[:2] - box[2:] / 2, box[:2] + box[2:] / 2
    cells = joints[..., :2].reshape(-1, 2) / grid.cell[:2] - 0.5
    assert np.all(cells >= lo) and np.all(cells <= hi)


def test_generator_confidences_in_unit_interval_and_deterministic():
    gen = SkeletonGenerator()
    torch.nn.init.constant_(gen.rpn.score.bias, 5.0)
    stream = simulate(random_scenario(3, duration=40)).heatmaps
    a = gen.infer(stream, max_proposals=3)
    b = gen.infer(stream, max_proposals=3)
    assert len(a) == 40 and a == b
    conf = np.concatenate([j[:, 3] for f in a for j in f.persons.values()])
    assert conf.size and conf.min() > 0 and conf.max() <= 1


def test_empty_stream_has_no_frames():
    gen = SkeletonGenerator()
    empty = HeatmapStream(np.zeros((0, 64, 64)), np.zeros((0, 64, 32)))
    assert gen.infer(empty) == []


def test_separable_readout_equals_full_volume():
    a = torch.randn(3, 14, 16, 16, dtype=torch.double) * 3
    b = torch.randn(3, 14, 16, 8, dtype=torch.double) * 3
    vol = a.unsqueeze(2) + b.transpose(-1, -2).unsqueeze(-1)  # (z, x, y)
    for tau in (0.5, 1.0):
        coords, conf = soft_argmax_separable(a, b, tau)
        torch.testing.assert_close(coords, soft_argmax_logits(vol, tau), rtol=0, atol=1e-10)
        p = torch.softmax(vol.flatten(-3) / tau, -1)
        torch.testing.assert_close(conf, p.max(-1).values, rtol=0, atol=1e-12)


def test_pose_forward_matches_volume_readout():
    gen = SkeletonGenerator().double()
    stream = simulate(random_scenario(4, duration=30)).heatmaps
    _, _, h, v = next(gen.windows(stream))
    h, v = h.double(), v.double()
    maps = gen.feature_net(h[None], v[None])[0]
    boxes = torch.tensor([[20.0, 30.0, 12.0, 10.0]], dtype=torch.double)
    out = gen.pose(maps, h, v, boxes, gen.grid)
    vol = torch.softmax(gen.pose.volume_logits(maps, h, v, boxes, gen.grid).flatten(-3), -1)
    ref = gen.pose.readout(vol.reshape(1, 30, 14, 16, 16, 16), boxes, gen.grid)
    torch.testing.assert_close(out.coords, ref.coords, rtol=0, atol=1e-9)
    torch.testing.assert_close(out.confidence, ref.confidence, rtol=0, atol=1e-12)
