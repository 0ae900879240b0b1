import pytest
import torch

from conftest import fd_probe
from rfaction.actionfeat import AttentionFeatureNet, TemporalSelfAttention, attention_mask, frame_difference


def zero_conv(cin):
    conv = torch.nn.Conv2d(cin, 1, 1).double()
    torch.nn.init.zeros_(conv.weight)
    torch.nn.init.zeros_(conv.bias)
    return conv


def test_zero_mask_weights_halve_features():
    f_s, f_t = torch.randn(2, 8, 5, 14, dtype=torch.double), torch.randn(2, 8, 5, 14, dtype=torch.double)
    out, mask = attention_mask(f_s, f_t, zero_conv(16))
    assert torch.all(mask == 0.5)
    assert torch.equal(out, 0.5 * torch.cat([f_s, f_t], 1))


def test_mask_values_in_open_interval():
    conv = torch.nn.Conv2d(16, 1, 1).double()
    torch.nn.init.normal_(conv.weight, std=0.5)
    _, mask = attention_mask(torch.randn(3, 8, 6, 14, dtype=torch.double), torch.randn(3, 8, 6, 14, dtype=torch.double), conv)
    assert mask.shape == (3, 1, 6, 14)
    assert torch.all(mask > 0) and torch.all(mask < 1)


def test_mask_shape_mismatch():
    with pytest.raises(ValueError, match="shape"):
        attention_mask(torch.zeros(1, 8, 5, 14), torch.zeros(1, 8, 4, 14), None)


def test_mask_gradient_matches_finite_differences():
    conv = torch.nn.Conv2d(16, 1, 1).double()
    f_s, f_t = torch.randn(2, 8, 5, 14, dtype=torch.double), torch.randn(2, 8, 5, 14, dtype=torch.double)
    probe = torch.randn(2, 16, 5, 14, dtype=torch.double)
    assert fd_probe(lambda: (attention_mask(f_s, f_t, conv)[0] * probe).sum(), conv.weight) < 1e-4


def test_identical_steps_give_uniform_attention():
    att = TemporalSelfAttention(32, 4).double()
    x = torch.randn(1, 32, 1, dtype=torch.double).expand(2, 32, 7)
    _, w = att.attend(x)
    torch.testing.assert_close(w, torch.full_like(w, 1 / 7))


def test_attention_rows_sum_to_one():
    att = TemporalSelfAttention(32, 4, positional=True).double()
    _, w = att.attend(torch.randn(3, 32, 9, dtype=torch.double))
    assert (w.sum(-1) - 1).abs().max() < 1e-6


def test_attention_is_permutation_equivariant():
    att = TemporalSelfAttention(32, 4).double()
    x = torch.randn(2, 32, 10, dtype=torch.double)
    perm = torch.randperm(10)
    y, _ = att.attend(x)
    y_perm, _ = att.attend(x[:, :, perm])
    torch.testing.assert_close(y_perm, y[:, :, perm])


def test_head_mismatch():
    with pytest.raises(ValueError, match="heads"):
        TemporalSelfAttention(30, 4)
    with pytest.raises(ValueError, match="channels"):
        TemporalSelfAttention(32, 4).attend(torch.zeros(1, 16, 5))


def test_frame_difference_keeps_length():
    seq = torch.randn(2, 4, 11, 14)
    d = frame_difference(seq)
    assert d.shape == seq.shape
    assert torch.all(d[:, :, 0] == 0)
    torch.testing.assert_close(d[:, :, 5], seq[:, :, 5] - seq[:, :, 4])


def test_ablated_mask_equals_plain_path():
    net = AttentionFeatureNet(use_attention=False).double()
    seq = torch.randn(2, 4, 30, 14, dtype=torch.double)
    f_s, f_t = net.stream_features(seq)
    x = torch.cat([f_s, f_t], 1).permute(0, 3, 2, 1)
    plain = torch.relu(net.cooc2(torch.relu(net.cooc1(x)))).max(-1).values
    assert torch.equal(net(seq), plain)


def test_feature_shape_and_bad_input():
    net = AttentionFeatureNet()
    assert net(torch.randn(3, 4, 30, 14)).shape == (3, 32, 15)
    with pytest.raises(ValueError):
        net(torch.randn(3, 3, 30, 14))
    with pytest.raises(ValueError):
        net(torch.randn(3, 4, 30, 12))


def test_forward_is_deterministic():
    net = AttentionFeatureNet()
    seq = torch.randn(2, 4, 30, 14)
    assert torch.equal(net(seq), net(seq))
