"""Per-frame feature construction: box geometry, pose normalisation,
displacement traces, horizontal flips and observation-window assembly.

Pose joints follow the 18-point COCO layout produced by OpenPose. A joint at
pixel (0, 0) is treated as missing and stays (0, 0) under every transform.
"""

from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .errors import GeometryError, InsufficientHistory, MissingModalityError, ShapeError

N_JOINTS = 18
CONTEXT_DIM = 512

JOINT_NAMES = (
    "nose", "neck",
    "r_shoulder", "r_elbow", "r_wrist",
    "l_shoulder", "l_elbow", "l_wrist",
    "r_hip", "r_knee", "r_ankle",
    "l_hip", "l_knee", "l_ankle",
    "r_eye", "l_eye", "r_ear", "l_ear",
)
FLIP_PAIRS = ((2, 5), (3, 6), (4, 7), (8, 11), (9, 12), (10, 13), (14, 15), (16, 17))


def _flip_permutation():
    perm = list(range(N_JOINTS))
    for a, b in FLIP_PAIRS:
        perm[a], perm[b] = b, a
    return np.array(perm)


FLIP_PERM = _flip_permutation()


@dataclass(frozen=True)
class BBox:
    x1: float
    y1: float
    x2: float
    y2: float

    def __post_init__(self):
        if not (self.x1 < self.x2 and self.y1 < self.y2):
            raise GeometryError(f"degenerate box {self.as_tuple()}")

    @classmethod
    def from_seq(cls, seq):
        return cls(*(float(v) for v in seq))

    def as_tuple(self):
        return (self.x1, self.y1, self.x2, self.y2)

    @property
    def width(self):
        return self.x2 - self.x1

    @property
    def height(self):
        return self.y2 - self.y1

    @property
    def center(self):
        return ((self.x1 + self.x2) / 2.0, (self.y1 + self.y2) / 2.0)


def scale_squarify_box(b, scale, frame_w, frame_h):
    """Scale the box height about its centre, make it square, clamp to the frame.

    Clamping can break squareness for boxes near the frame border.
    """
    if scale < 1:
        raise GeometryError(f"scale must be >= 1, got {scale}")
    cx, cy = b.center
    half = b.height * scale / 2.0
    x1 = max(cx - half, 0.0)
    y1 = max(cy - half, 0.0)
    x2 = min(cx + half, float(frame_w))
    y2 = min(cy + half, float(frame_h))
    return BBox(x1, y1, x2, y2)


def suppression_region(original, crop):
    """Part of ``original`` inside ``crop``, in crop-local pixel coordinates.

    This is the region painted RGB (128, 128, 128) in the surround crop.
    """
    x1 = max(original.x1, crop.x1)
    y1 = max(original.y1, crop.y1)
    x2 = min(original.x2, crop.x2)
    y2 = min(original.y2, crop.y2)
    if not (x1 < x2 and y1 < y2):
        raise GeometryError(f"box {original.as_tuple()} does not overlap crop {crop.as_tuple()}")
    return BBox(x1 - crop.x1, y1 - crop.y1, x2 - crop.x1, y2 - crop.y1)


SUPPRESSION_RGB = (128, 128, 128)
SURROUND_SCALE = 1.5


def _joints(pose):
    j = np.asarray(pose, dtype=np.float64)
    if j.size != 2 * N_JOINTS:
        raise ShapeError("pose", (N_JOINTS, 2), j.shape)
    return j.reshape(N_JOINTS, 2)


def missing_joints(pose):
    j = _joints(pose)
    return (j[:, 0] == 0.0) & (j[:, 1] == 0.0)


def normalize_pose(pose, frame_w, frame_h):
    """Pixel joints -> 36-d vector (x/w, y/h interleaved). Missing joints stay (0, 0)."""
    j = _joints(pose) / np.array([float(frame_w), float(frame_h)])
    return j.reshape(-1)


def flip_pose(pose, frame_w):
    """Mirror pixel joints horizontally and swap left/right joint labels."""
    j = _joints(pose).copy()
    missing = missing_joints(j)
    j[~missing, 0] = frame_w - j[~missing, 0]
    return j[FLIP_PERM].reshape(-1)


def flip_box(b, frame_w):
    return BBox(frame_w - b.x2, b.y1, frame_w - b.x1, b.y2)


def bbox_displacement(boxes):
    """Box coordinates relative to the first box in the sequence, shape (T, 4)."""
    arr = np.asarray([b.as_tuple() if isinstance(b, BBox) else b for b in boxes], dtype=np.float64)
    if arr.ndim != 2 or arr.shape[1] != 4 or len(arr) == 0:
        raise ShapeError("boxes", "(T>=1, 4)", arr.shape)
    return arr - arr[0]


def center_displacement(boxes):
    arr = np.asarray([b.as_tuple() if isinstance(b, BBox) else b for b in boxes], dtype=np.float64)
    if arr.ndim != 2 or arr.shape[1] != 4 or len(arr) == 0:
        raise ShapeError("boxes", "(T>=1, 4)", arr.shape)
    centers = np.stack([(arr[:, 0] + arr[:, 2]) / 2.0, (arr[:, 1] + arr[:, 3]) / 2.0], axis=1)
    return centers - centers[0]


@dataclass(frozen=True)
class FrameFeatures:
    """One frame of raw features.

    ``pose`` is kept in pixels so flips are exact; ``pose_norm`` derives the
    36-d model input. ``context_flipped`` is False when a flip had no
    precomputed mirrored context vectors to swap in.
    """

    c_p: np.ndarray
    c_s: np.ndarray
    pose: np.ndarray
    bbox: BBox
    speed_kmh: float
    frame_w: float
    frame_h: float
    c_p_flip: Optional[np.ndarray] = None
    c_s_flip: Optional[np.ndarray] = None
    c_ps: Optional[np.ndarray] = None
    c_ps_flip: Optional[np.ndarray] = None
    flipped: bool = False
    context_flipped: bool = True

    @property
    def pose_norm(self):
        return normalize_pose(self.pose, self.frame_w, self.frame_h)


def horizontal_flip(f, frame_w=None):
    frame_w = f.frame_w if frame_w is None else frame_w
    has_ctx = f.c_p_flip is not None and f.c_s_flip is not None
    kw = {}
    if has_ctx:
        kw = dict(c_p=f.c_p_flip, c_s=f.c_s_flip, c_p_flip=f.c_p, c_s_flip=f.c_s)
        if f.c_ps is not None and f.c_ps_flip is not None:
            kw.update(c_ps=f.c_ps_flip, c_ps_flip=f.c_ps)
    return replace(
        f,
        bbox=flip_box(f.bbox, frame_w),
        pose=flip_pose(f.pose, frame_w),
        flipped=not f.flipped,
        context_flipped=has_ctx,
        **kw,
    )


@dataclass
class ObservationWindow:
    frames: list
    features: dict = field(default_factory=dict)
    track_id: str = ""
    start: int = 0

    def __len__(self):
        return len(self.frames)

    @property
    def flipped(self):
        return bool(self.frames) and self.frames[0].flipped

    @property
    def context_flipped(self):
        return all(f.context_flipped for f in self.frames)


def window_from_frames(frames, track_id="", start=0):
    """Derive the per-modality (m, dim) arrays for a list of FrameFeatures."""
    if not frames:
        raise ShapeError("window", "m >= 1 frames", 0)
    boxes = [f.bbox for f in frames]
    feats = {
        "Cp": np.stack([np.asarray(f.c_p, dtype=np.float64) for f in frames]),
        "Cs": np.stack([np.asarray(f.c_s, dtype=np.float64) for f in frames]),
        "P": np.stack([f.pose_norm for f in frames]),
        "B": bbox_displacement(boxes),
        "S": np.array([[float(f.speed_kmh)] for f in frames]),
        "D": center_displacement(boxes),
    }
    if all(f.c_ps is not None for f in frames):
        feats["Cps"] = np.stack([np.asarray(f.c_ps, dtype=np.float64) for f in frames])
    for key in ("Cp", "Cs"):
        if feats[key].shape[1] != CONTEXT_DIM:
            raise ShapeError(key, CONTEXT_DIM, feats[key].shape[1])
    return ObservationWindow(list(frames), feats, track_id, start)


def assemble_window(track, start_frame, m, flip=False, require=()):
    """Window of frames ``start_frame .. start_frame + m - 1`` from ``track``.

    Displacements are relative to the window's own first frame. ``require``
    lists feature keys that must be present.
    """
    if m < 1:
        raise ShapeError("window length", ">= 1", m)
    if start_frame < 0 or start_frame + m > track.n_frames:
        raise InsufficientHistory(track.id, start_frame + m, track.n_frames)
    frames = [track.frame(i) for i in range(start_frame, start_frame + m)]
    if flip:
        frames = [horizontal_flip(f) for f in frames]
    win = window_from_frames(frames, track.id, start_frame)
    for key in require:
        if key not in win.features:
            raise MissingModalityError(key)
    return win


def stack_windows(windows, keys):
    """Batch windows into ``{key: (N, m, dim)}``."""
    out = {}
    for key in keys:
        try:
            out[key] = np.stack([w.features[key] for w in windows])
        except KeyError:
            raise MissingModalityError(key) from None
    return out
