import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sfgru.architectures import FEATURE_DIMS
from sfgru.errors import GeometryError, InsufficientHistory, MissingModalityError
from sfgru.features import (FLIP_PERM, JOINT_NAMES, N_JOINTS, BBox, FrameFeatures, assemble_window,
                            bbox_displacement, center_displacement, flip_box, flip_pose,
                            horizontal_flip, normalize_pose, scale_squarify_box, suppression_region)

W, H = 1920, 1080
coord = st.integers(0, 4 * 1000).map(lambda v: v / 4.0)  # quarter-pixel grid


def test_squarify_example():
    b = scale_squarify_box(BBox(100, 100, 140, 220), 1.5, W, H)
    assert b.as_tuple() == (30, 70, 210, 250)


def test_squarify_unit_scale_on_square():
    b = BBox(50, 60, 90, 100)
    assert scale_squarify_box(b, 1.0, W, H) == b


def test_squarify_clamps_left_edge():
    b = scale_squarify_box(BBox(5, 100, 45, 220), 1.5, W, H)
    assert b.x1 == 0.0
    assert b.x2 == 25 + 90 and b.y1 == 70 and b.y2 == 250


def test_squarify_rejects_bad_input():
    with pytest.raises(GeometryError):
        BBox(10, 10, 10, 20)
    with pytest.raises(GeometryError):
        scale_squarify_box(BBox(0, 0, 1, 1), 0.5, W, H)


@settings(max_examples=200)
@given(coord, coord, st.floats(1, 40), st.floats(1, 200), st.floats(1.0, 3.0))
def test_squarify_unclamped_is_centred_square(x, y, w, h, scale):
    b = BBox(x + 500, y + 500, x + 500 + w, y + 500 + h)
    s = scale_squarify_box(b, scale, 1e5, 1e5)
    assert abs(s.width - s.height) < 1e-9
    assert abs(s.center[0] - b.center[0]) < 1e-9 and abs(s.center[1] - b.center[1]) < 1e-9


@settings(max_examples=200)
@given(coord, coord, coord, coord, st.sampled_from([1.0, 1.25, 1.5, 1.75, 2.0, 3.0]))
def test_squarify_centre_exact_on_pixel_grid(x, y, w, h, scale):
    b = BBox(x + 2000, y + 2000, x + 2000.25 + w, y + 2000.25 + h)
    s = scale_squarify_box(b, scale, 1e5, 1e5)
    assert s.width == s.height
    assert s.center == b.center


def test_suppression_examples():
    crop = BBox(30, 70, 210, 250)
    assert suppression_region(BBox(100, 100, 140, 220), crop).as_tuple() == (70, 30, 110, 150)
    assert suppression_region(crop, crop).as_tuple() == (0, 0, 180, 180)
    assert suppression_region(BBox(0, 100, 60, 300), crop).as_tuple() == (0, 30, 30, 180)
    with pytest.raises(GeometryError):
        suppression_region(BBox(0, 0, 10, 10), crop)


def test_normalize_pose_examples():
    pose = np.zeros(36)
    pose[0:2] = (960, 540)
    pose[2:4] = (1920, 1080)
    out = normalize_pose(pose, W, H)
    assert out.shape == (36,)
    assert tuple(out[0:2]) == (0.5, 0.5) and tuple(out[2:4]) == (1.0, 1.0)
    assert not out[4:].any()  # missing joints stay (0, 0)


@given(st.lists(st.tuples(st.floats(0, W), st.floats(0, H)), min_size=18, max_size=18))
def test_normalized_pose_in_unit_box(joints):
    out = normalize_pose(np.array(joints).reshape(-1), W, H)
    assert np.all((out >= 0) & (out <= 1))


def test_displacement_examples():
    boxes = [BBox(10, 20, 30, 60), BBox(12, 20, 32, 60)]
    np.testing.assert_array_equal(bbox_displacement(boxes), [[0, 0, 0, 0], [2, 0, 2, 0]])
    np.testing.assert_array_equal(center_displacement(boxes), [[0, 0], [2, 0]])
    same = [BBox(1, 2, 3, 4)] * 3
    assert not bbox_displacement(same).any() and not center_displacement(same).any()
    np.testing.assert_array_equal(bbox_displacement(same[:1]), [[0, 0, 0, 0]])
    shrink = [BBox(10, 10, 50, 90), BBox(15, 20, 45, 80)]
    assert not center_displacement(shrink).any()


@given(st.lists(st.tuples(coord, coord), min_size=1, max_size=10), coord, coord)
def test_displacement_translation_invariant(corners, dx, dy):
    boxes = [BBox(x, y, x + 10, y + 30) for x, y in corners]
    moved = [BBox(b.x1 + dx, b.y1 + dy, b.x2 + dx, b.y2 + dy) for b in boxes]
    np.testing.assert_array_equal(bbox_displacement(boxes), bbox_displacement(moved))
    np.testing.assert_array_equal(center_displacement(boxes), center_displacement(moved))


def _frame(rng, with_flip=True):
    pose = np.round(rng.uniform(0, W, 36) * 4) / 4
    pose[10:12] = 0.0  # one missing joint
    kw = {}
    if with_flip:
        kw = dict(c_p_flip=rng.normal(size=512), c_s_flip=rng.normal(size=512))
    return FrameFeatures(c_p=rng.normal(size=512), c_s=rng.normal(size=512), pose=pose,
                         bbox=BBox(100.25, 200, 180.5, 400), speed_kmh=12.5,
                         frame_w=W, frame_h=H, **kw)


def test_flip_box_examples():
    assert flip_box(BBox(10, 20, 30, 60), 100).as_tuple() == (70, 20, 90, 60)
    centred = BBox(40, 0, 60, 10)
    assert flip_box(centred, 100) == centred


def test_flip_pose_swaps_left_right():
    pose = np.zeros(36)
    r_sho, l_sho = JOINT_NAMES.index("r_shoulder"), JOINT_NAMES.index("l_shoulder")
    pose[2 * r_sho:2 * r_sho + 2] = (100, 50)
    pose[2 * l_sho:2 * l_sho + 2] = (140, 50)
    out = flip_pose(pose, 200).reshape(N_JOINTS, 2)
    assert tuple(out[r_sho]) == (60, 50) and tuple(out[l_sho]) == (100, 50)
    assert not out[0].any()  # missing stays missing
    assert sorted(FLIP_PERM) == list(range(N_JOINTS))
    assert all(FLIP_PERM[FLIP_PERM[i]] == i for i in range(N_JOINTS))


@pytest.mark.parametrize("with_flip", [True, False])
def test_horizontal_flip_involution(with_flip):
    f = _frame(np.random.default_rng(0), with_flip)
    g = horizontal_flip(f)
    assert g.context_flipped is with_flip and g.flipped
    assert g.speed_kmh == f.speed_kmh
    ff = horizontal_flip(g)
    assert ff.bbox == f.bbox
    assert ff.pose.tobytes() == f.pose.tobytes()
    assert ff.pose_norm.tobytes() == f.pose_norm.tobytes()
    assert ff.c_p.tobytes() == f.c_p.tobytes() and not ff.flipped
    if with_flip:
        assert g.c_p is f.c_p_flip and g.c_s is f.c_s_flip
    else:
        assert g.c_p is f.c_p


def test_flip_normalized_pose_mirror():
    f = _frame(np.random.default_rng(1))
    g = horizontal_flip(f)
    a = f.pose_norm.reshape(N_JOINTS, 2)
    b = g.pose_norm.reshape(N_JOINTS, 2)[FLIP_PERM]
    present = ~((a[:, 0] == 0) & (a[:, 1] == 0))
    np.testing.assert_allclose(b[present, 0], 1 - a[present, 0], atol=1e-15)
    np.testing.assert_array_equal(b[present, 1], a[present, 1])


def test_assemble_window_indexing(small_tracks):
    t = small_tracks[0]
    w = assemble_window(t, 26, 15)
    assert len(w) == 15 and w.start == 26
    np.testing.assert_array_equal(w.features["Cp"], t.c_p[26:41])
    np.testing.assert_array_equal(w.features["B"], t.bbox[26:41] - t.bbox[26])
    for key, arr in w.features.items():
        assert arr.shape == (15, FEATURE_DIMS[key])
    one = assemble_window(t, 40, 1)
    assert len(one) == 1 and not one.features["B"].any()


def test_assemble_window_errors(small_tracks):
    t = small_tracks[0]
    with pytest.raises(InsufficientHistory):
        assemble_window(t, t.n_frames - 5, 15)
    bare = small_tracks[0]
    assert "Cps" in assemble_window(bare, 0, 3).features
    bare_no_cps = type(bare)(**{**bare.__dict__, "c_ps": None, "c_ps_flip": None})
    with pytest.raises(MissingModalityError):
        assemble_window(bare_no_cps, 0, 3, require=("Cps",))


def test_displacement_independent_of_absolute_position(small_tracks):
    t = small_tracks[1]
    shifted = type(t)(**{**t.__dict__, "bbox": np.roll(t.bbox, 7, axis=0)})
    a = assemble_window(t, 20, 15).features["B"]
    b = assemble_window(shifted, 27, 15).features["B"]
    np.testing.assert_array_equal(a, b)
