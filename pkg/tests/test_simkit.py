import numpy as np
import pytest

from rfaction.core import DEFAULT_CLASSES, FormatError, SkeletonFrame
from rfaction.simkit import (
    GridSpec,
    HeatmapStream,
    InteractionScript,
    PersonScript,
    RenderConfig,
    Scenario,
    ScriptedAction,
    Wall,
    load_scenario,
    random_scenario,
    read_heatmaps,
    render_frame,
    render_heatmaps,
    save_scenario,
    simulate,
    synth_motion,
    write_heatmaps,
)

CLEAN = RenderConfig(p_spec=0.0, noise=0.0)


def one_joint(xyz, frame=0, pid=1):
    return SkeletonFrame(frame, {pid: np.array([[*xyz, 1.0]])})


def scenario(**kw):
    base = dict(seed=3, duration=10, persons=[PersonScript(1, (2.0, 2.0))], render=CLEAN)
    base.update(kw)
    return Scenario(**base)


def local_maxima(grid):
    """Cells strictly greater than all 8 neighbours (borders padded with -inf)."""
    p = np.pad(grid, 1, constant_values=-np.inf)
    c = p[1:-1, 1:-1]
    count = 0
    for i in range(c.shape[0]):
        for j in range(c.shape[1]):
            nb = p[i:i + 3, j:j + 3].copy()
            nb[1, 1] = -np.inf
            if c[i, j] > nb.max():
                count += 1
    return count


# -- motion -----------------------------------------------------------------

def test_motion_is_deterministic():
    sc = random_scenario(11)
    f1, s1 = synth_motion(sc)
    f2, s2 = synth_motion(sc)
    assert f1 == f2 and s1 == s2
    assert simulate(sc).heatmaps == simulate(sc).heatmaps


def test_wave_script_gives_one_segment():
    sc = Scenario(1, 120, persons=[PersonScript(1, (2.0, 2.0), actions=[ScriptedAction("wave", 30, 90)])])
    _, segs = synth_motion(sc)
    wave = DEFAULT_CLASSES.by_name("wave").class_id
    assert [(s.class_id, s.start_frame, s.end_frame, s.participants) for s in segs] == [(wave, 30, 90, (1,))]


def test_hand_shake_is_a_pair_segment():
    sc = Scenario(1, 100, persons=[PersonScript(1, (2.0, 2.0)), PersonScript(2, (2.9, 2.0), heading=180.0)],
                  interactions=[InteractionScript("hand-shake", (1, 2), 20, 60)])
    _, segs = synth_motion(sc)
    assert len(segs) == 1
    assert segs[0].participants == (1, 2)
    assert DEFAULT_CLASSES.is_interaction(segs[0].class_id)


def test_script_outside_duration_is_rejected():
    with pytest.raises(ValueError):
        synth_motion(Scenario(1, 50, persons=[PersonScript(1, (2.0, 2.0), actions=[ScriptedAction("wave", 30, 90)])]))


def test_random_scenario_stays_in_room():
    for seed in range(20):
        frames, _ = synth_motion(random_scenario(seed))
        xyz = np.concatenate([j[:, :3] for f in frames for j in f.persons.values()])
        assert xyz.min() >= 0.0
        assert xyz[:, 0].max() < 6.4 and xyz[:, 1].max() < 6.4 and xyz[:, 2].max() < 3.2


# -- rendering --------------------------------------------------------------

@pytest.mark.parametrize("xyz", [(2.05, 3.15, 1.25), (0.42, 5.97, 0.11), (3.33, 1.01, 2.49)])
def test_peak_at_projection(xyz):
    h, v = render_frame(one_joint(xyz), scenario())
    cell = GridSpec().cell
    ix, iy, iz = (np.asarray(xyz) // cell).astype(int)
    assert np.unravel_index(h.argmax(), h.shape) == (ix, iy)
    assert np.unravel_index(v.argmax(), v.shape) == (ix, iz)


def test_wall_halves_the_peak():
    xyz = (4.55, 3.0, 1.0)
    free, _ = render_frame(one_joint(xyz), scenario())
    walled, _ = render_frame(one_joint(xyz), scenario(wall=Wall(4.0, 0.5)))
    assert walled.max() == pytest.approx(0.5 * free.max(), rel=1e-6)
    front, _ = render_frame(one_joint((3.5, 3.0, 1.0)), scenario(wall=Wall(4.0, 0.5)))
    unwalled, _ = render_frame(one_joint((3.5, 3.0, 1.0)), scenario())
    assert np.array_equal(front, unwalled)


def test_close_joints_merge_into_one_blob():
    frame = SkeletonFrame(0, {1: np.array([[3.02, 3.05, 1.05, 1.0]]), 2: np.array([[3.07, 3.05, 1.05, 1.0]])})
    h, v = render_frame(frame, scenario())
    assert local_maxima(h) == 1
    assert local_maxima(v) == 1
    far = SkeletonFrame(0, {1: np.array([[2.05, 3.05, 1.05, 1.0]]), 2: np.array([[4.05, 3.05, 1.05, 1.0]])})
    assert local_maxima(render_frame(far, scenario())[0]) == 2


def test_rendering_is_linear():
    a = one_joint((2.0, 2.5, 1.0))
    b = SkeletonFrame(0, {2: np.array([[3.1, 4.0, 0.7, 1.0]])})
    both = SkeletonFrame(0, {1: a.persons[1], 2: b.persons[2]})
    sc = scenario()
    ha, va = render_frame(a, sc)
    hb, vb = render_frame(b, sc)
    hab, vab = render_frame(both, sc)
    np.testing.assert_allclose(hab, ha + hb, rtol=1e-6, atol=1e-7)
    np.testing.assert_allclose(vab, va + vb, rtol=1e-6, atol=1e-7)


def test_mass_matches_independent_sum():
    rng = np.random.default_rng(0)
    xyz = rng.uniform([0.2, 0.2, 0.1], [6.2, 6.2, 3.1], size=(14, 3))
    frame = SkeletonFrame(0, {1: np.column_stack([xyz, np.ones(14)])})
    sc = scenario()
    h, v = render_frame(frame, sc)
    from rfaction.simkit import AMPLITUDES

    cells = xyz / GridSpec().cell - 0.5
    sig = CLEAN.sigma

    def mass(c, n):
        return sum(np.exp(-((i - c) ** 2) / (2 * sig * sig)) for i in range(n))

    want_h = sum(a * mass(c[0], 64) * mass(c[1], 64) for a, c in zip(AMPLITUDES, cells))
    want_v = sum(a * mass(c[0], 64) * mass(c[2], 32) for a, c in zip(AMPLITUDES, cells))
    assert h.astype(np.float64).sum() == pytest.approx(want_h, rel=1e-6)
    assert v.astype(np.float64).sum() == pytest.approx(want_v, rel=1e-6)


def test_alpha_one_equals_no_wall():
    sc = random_scenario(5, render=RenderConfig())
    frames, _ = synth_motion(sc)
    plain = render_heatmaps(frames, sc)
    sc.wall = Wall(3.0, 1.0)
    assert render_heatmaps(frames, sc) == plain


def test_noise_is_nonnegative_and_specular_dropout_removes_mass():
    sc = random_scenario(2)
    stream = simulate(sc).heatmaps
    assert stream.horizontal.min() >= 0 and stream.vertical.min() >= 0
    frames, _ = synth_motion(sc)
    dense = render_heatmaps(frames, scenario(seed=sc.seed, duration=sc.duration))
    sparse = render_heatmaps(frames, scenario(seed=sc.seed, duration=sc.duration,
                                              render=RenderConfig(p_spec=0.5, noise=0.0)))
    assert sparse.horizontal.sum() < dense.horizontal.sum()


# -- files ------------------------------------------------------------------

def test_heatmap_round_trip(tmp_path):
    rng = np.random.default_rng(1)
    for k in range(5):
        T = int(rng.integers(0, 4))
        s = HeatmapStream(rng.random((T, 8, 6)), rng.random((T, 8, 3)))
        write_heatmaps(tmp_path / "h.rfhm", s)
        assert read_heatmaps(tmp_path / "h.rfhm") == s


def test_heatmap_corruption(tmp_path):
    p = tmp_path / "h.rfhm"
    write_heatmaps(p, HeatmapStream(np.ones((2, 4, 4)), np.ones((2, 4, 2))))
    data = p.read_bytes()
    p.write_bytes(b"XXXX" + data[4:])
    with pytest.raises(FormatError, match="magic"):
        read_heatmaps(p)
    p.write_bytes(data[:-3])
    with pytest.raises(FormatError):
        read_heatmaps(p)


def test_scenario_yaml_round_trip(tmp_path):
    sc = random_scenario(9, wall=Wall(4.5, 0.5))
    save_scenario(tmp_path / "s.yaml", sc)
    back = load_scenario(tmp_path / "s.yaml")
    assert back.to_dict() == sc.to_dict()
    assert simulate(back).heatmaps == simulate(sc).heatmaps


def test_scenario_rejects_unknown_keys():
    d = random_scenario(1).to_dict()
    d["colour"] = "red"
    with pytest.raises(ValueError, match="colour"):
        Scenario.from_dict(d)
