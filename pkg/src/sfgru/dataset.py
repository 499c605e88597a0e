"""Tracks: JSON-lines I/O, splitting, TTE-anchored sampling, balancing and a
synthetic generator with a tunable signal-to-noise ratio."""

import json
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import InsufficientHistory, SchemaError, SfGruError
from .features import CONTEXT_DIM, N_JOINTS, BBox, FrameFeatures, assemble_window
from .numerics import make_rng

LABELS = {"crossing": 1, "non_crossing": 0}
LABEL_NAMES = {v: k for k, v in LABELS.items()}

TRACK_FIELDS = ("id", "fps", "frame_w", "frame_h", "label", "event_frame", "frames")
FRAME_FIELDS = ("bbox", "pose", "speed", "c_p", "c_s")
OPTIONAL_FRAME_FIELDS = ("c_p_flip", "c_s_flip", "c_ps", "c_ps_flip")
FIELD_DIMS = {"bbox": 4, "pose": 2 * N_JOINTS, "c_p": CONTEXT_DIM, "c_s": CONTEXT_DIM,
              "c_p_flip": CONTEXT_DIM, "c_s_flip": CONTEXT_DIM,
              "c_ps": CONTEXT_DIM, "c_ps_flip": CONTEXT_DIM}


@dataclass
class Track:
    """One pedestrian track with per-frame arrays (frame index on axis 0)."""

    id: str
    frame_w: float
    frame_h: float
    label: int
    event_frame: int
    bbox: np.ndarray
    pose: np.ndarray
    speed: np.ndarray
    c_p: np.ndarray
    c_s: np.ndarray
    fps: float = 30.0
    c_p_flip: Optional[np.ndarray] = None
    c_s_flip: Optional[np.ndarray] = None
    c_ps: Optional[np.ndarray] = None
    c_ps_flip: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.label not in (0, 1):
            raise SfGruError(f"track {self.id}: label must be 0 or 1")
        if not 0 <= self.event_frame < self.n_frames:
            raise SfGruError(f"track {self.id}: event_frame {self.event_frame} outside [0, {self.n_frames})")

    @property
    def n_frames(self):
        return len(self.bbox)

    def frame(self, i):
        opt = lambda a: None if a is None else a[i]  # noqa: E731
        return FrameFeatures(
            c_p=self.c_p[i], c_s=self.c_s[i], pose=self.pose[i],
            bbox=BBox.from_seq(self.bbox[i]), speed_kmh=float(self.speed[i]),
            frame_w=self.frame_w, frame_h=self.frame_h,
            c_p_flip=opt(self.c_p_flip), c_s_flip=opt(self.c_s_flip),
            c_ps=opt(self.c_ps), c_ps_flip=opt(self.c_ps_flip),
        )

    @property
    def has_flip_context(self):
        return self.c_p_flip is not None and self.c_s_flip is not None

    def to_json(self):
        frames = []
        for i in range(self.n_frames):
            fr = {
                "bbox": self.bbox[i].tolist(),
                "pose": self.pose[i].tolist(),
                "speed": float(self.speed[i]),
                "c_p": self.c_p[i].tolist(),
                "c_s": self.c_s[i].tolist(),
            }
            for name in OPTIONAL_FRAME_FIELDS:
                arr = getattr(self, name)
                if arr is not None:
                    fr[name] = arr[i].tolist()
            frames.append(fr)
        return {
            "id": self.id, "fps": self.fps, "frame_w": self.frame_w, "frame_h": self.frame_h,
            "label": LABEL_NAMES[self.label], "event_frame": self.event_frame, "frames": frames,
        }

    def __eq__(self, other):
        if not isinstance(other, Track):
            return NotImplemented
        return self.to_json() == other.to_json()


def _number(v, line, name):
    if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
        raise SchemaError(f"expected a finite number, got {v!r}", line, name)
    return float(v)


_NUMBER_TYPES = frozenset((float, int))


def _vector(v, line, name):
    dim = FIELD_DIMS[name]
    if not isinstance(v, list):
        raise SchemaError("expected a list of numbers", line, name)
    if len(v) != dim:
        raise SchemaError(f"expected {dim} values, got {len(v)}", line, name)
    if not _NUMBER_TYPES.issuperset(map(type, v)):
        for x in v:
            _number(x, line, name)
    arr = np.array(v, dtype=np.float64)
    if not np.all(np.isfinite(arr)):
        raise SchemaError("expected finite numbers", line, name)
    return arr


def track_from_json(obj, line=None):
    if not isinstance(obj, dict):
        raise SchemaError("track must be a JSON object", line)
    unknown = set(obj) - set(TRACK_FIELDS)
    if unknown:
        raise SchemaError("unknown field", line, sorted(unknown)[0])
    for name in TRACK_FIELDS:
        if name not in obj:
            raise SchemaError("missing field", line, name)
    if not isinstance(obj["id"], str):
        raise SchemaError("id must be a string", line, "id")
    if obj["label"] not in LABELS:
        raise SchemaError(f"label must be one of {sorted(LABELS)}", line, "label")
    ev = obj["event_frame"]
    if isinstance(ev, bool) or not isinstance(ev, int):
        raise SchemaError("event_frame must be an integer", line, "event_frame")
    frames = obj["frames"]
    if not isinstance(frames, list) or not frames:
        raise SchemaError("frames must be a non-empty list", line, "frames")
    if not 0 <= ev < len(frames):
        raise SchemaError(f"event_frame {ev} outside [0, {len(frames)})", line, "event_frame")

    cols = {name: [] for name in FRAME_FIELDS + OPTIONAL_FRAME_FIELDS}
    cols["speed"] = []
    present_opt = None
    for k, fr in enumerate(frames):
        where = f"frames[{k}]"
        if not isinstance(fr, dict):
            raise SchemaError("frame must be an object", line, where)
        unknown = set(fr) - set(FRAME_FIELDS) - set(OPTIONAL_FRAME_FIELDS)
        if unknown:
            raise SchemaError("unknown field", line, f"{where}.{sorted(unknown)[0]}")
        for name in FRAME_FIELDS:
            if name not in fr:
                raise SchemaError("missing field", line, f"{where}.{name}")
        opt = tuple(n for n in OPTIONAL_FRAME_FIELDS if n in fr)
        if present_opt is None:
            present_opt = opt
        elif opt != present_opt:
            raise SchemaError("optional vectors must be present on every frame or none", line, where)
        for name in ("bbox", "pose", "c_p", "c_s") + opt:
            try:
                cols[name].append(_vector(fr[name], line, name))
            except SchemaError as e:
                raise SchemaError(str(e).split("] ", 1)[-1], line, f"{where}.{name}") from None
        speed = _number(fr["speed"], line, f"{where}.speed")
        if speed < 0:
            raise SchemaError("speed must be >= 0", line, f"{where}.speed")
        cols["speed"].append(speed)
        b = cols["bbox"][-1]
        if not (b[0] < b[2] and b[1] < b[3]):
            raise SchemaError(f"degenerate box {b}", line, f"{where}.bbox")

    fps = _number(obj["fps"], line, "fps")
    fw = _number(obj["frame_w"], line, "frame_w")
    fh = _number(obj["frame_h"], line, "frame_h")
    if fps <= 0 or fw <= 0 or fh <= 0:
        raise SchemaError("fps and frame size must be positive", line)
    arrays = {name: np.array(cols[name], dtype=np.float64) for name in ("bbox", "pose", "speed", "c_p", "c_s")}
    for name in present_opt:
        arrays[name] = np.array(cols[name], dtype=np.float64)
    # keep integer-valued header numbers as they were written
    return Track(id=obj["id"], fps=obj["fps"], frame_w=obj["frame_w"], frame_h=obj["frame_h"],
                 label=LABELS[obj["label"]], event_frame=ev, **arrays)


def load_tracks(path):
    tracks = []
    seen = set()
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            if not raw.strip():
                continue
            try:
                obj = json.loads(raw)
            except json.JSONDecodeError as e:
                raise SchemaError(f"malformed JSON: {e.msg}", lineno) from None
            t = track_from_json(obj, lineno)
            if t.id in seen:
                raise SchemaError(f"duplicate track id {t.id!r}", lineno, "id")
            seen.add(t.id)
            tracks.append(t)
    return tracks


def dumps_track(track):
    return json.dumps(track.to_json(), separators=(",", ":"), allow_nan=False)


def save_tracks(tracks, path):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for t in tracks:
            fh.write(dumps_track(t))
            fh.write("\n")


# splitting and sampling

@dataclass(frozen=True)
class DatasetSplit:
    train: tuple
    test: tuple
    seed: int


def split_train_test(tracks, ratio=0.6, seed=0):
    ids = [t.id if isinstance(t, Track) else t for t in tracks]
    if len(ids) < 2:
        raise SfGruError("need at least two tracks to split")
    if len(set(ids)) != len(ids):
        raise SfGruError("track ids must be unique")
    order = make_rng(seed).permutation(len(ids))
    n_train = int(math.floor(ratio * len(ids)))
    train = tuple(ids[i] for i in order[:n_train])
    test = tuple(ids[i] for i in order[n_train:])
    return DatasetSplit(train, test, seed)


@dataclass(frozen=True)
class SamplingSpec:
    obs_len_frames: int = 15
    tte_frames: int = 60
    min_track_frames: Optional[int] = None

    def __post_init__(self):
        if self.obs_len_frames < 1 or self.tte_frames < 0:
            raise SfGruError("obs_len_frames must be >= 1 and tte_frames >= 0")
        need = self.obs_len_frames + self.tte_frames
        if self.min_track_frames is None:
            object.__setattr__(self, "min_track_frames", need)
        elif self.min_track_frames < need:
            raise SfGruError(f"min_track_frames {self.min_track_frames} < m + tte = {need}")


@dataclass
class Sample:
    window: object
    label: int
    track_id: str


def window_bounds(track, spec):
    """(start, end) frame indices of the window ending ``tte_frames`` before the event."""
    end = track.event_frame - spec.tte_frames
    start = end - spec.obs_len_frames + 1
    if start < 0:
        raise InsufficientHistory(track.id, spec.obs_len_frames + spec.tte_frames,
                                  track.event_frame + 1)
    return start, end


def sample_window(track, spec, flip=False, require=()):
    """The m-frame window whose last frame is ``event_frame - tte_frames``.

    Raises InsufficientHistory (a skip, not a failure) when the track is too short.
    """
    start, _ = window_bounds(track, spec)
    win = assemble_window(track, start, spec.obs_len_frames, flip=flip, require=require)
    return Sample(win, track.label, track.id)


def tte_grid(fps=30, max_s=3.0, n_points=19):
    """TTE sampling points in frames: 0 .. max_s in equal steps (0, 5, ..., 90 at 30 fps)."""
    span = max_s * fps
    return [int(round(i * span / (n_points - 1))) for i in range(n_points)]


def seconds_to_frames(seconds, fps=30):
    return int(round(seconds * fps))


def filter_min_length(tracks, seconds):
    """Tracks with at least ``seconds`` of history up to and including the event frame."""
    return [t for t in tracks if t.event_frame + 1 >= seconds_to_frames(seconds, t.fps)]


def balance_subsample(samples, seed, label=lambda s: s.label):
    """Randomly drop majority-class samples until both classes have equal counts.

    Kept samples retain their input order.
    """
    labels = np.array([label(s) for s in samples])
    pos = np.flatnonzero(labels == 1)
    neg = np.flatnonzero(labels == 0)
    if len(pos) == 0 or len(neg) == 0:
        raise SfGruError("balance_subsample needs both classes present")
    rng = make_rng(seed)
    if len(pos) > len(neg):
        pos = np.sort(rng.choice(pos, size=len(neg), replace=False))
    elif len(neg) > len(pos):
        neg = np.sort(rng.choice(neg, size=len(pos), replace=False))
    keep = np.sort(np.concatenate([pos, neg]))
    return [samples[i] for i in keep]


# synthetic data

@dataclass(frozen=True)
class SynthConfig:
    """Synthetic-track generator settings.

    ``snr`` scales everything label-independent by ``1/snr``; at ``snr=0`` the
    class signal is switched off entirely and the label carries no
    information.
    """

    n_tracks: int = 140
    track_len_frames: int = 150
    class_ratio: float = 2.5
    snr: float = 8.0
    seed: int = 0
    fps: float = 30.0
    frame_w: float = 1920.0
    frame_h: float = 1080.0
    flip_context: bool = False
    full_context: bool = True

    def __post_init__(self):
        if self.n_tracks < 1 or self.track_len_frames < 1:
            raise SfGruError("n_tracks and track_len_frames must be positive")
        if not (self.class_ratio > 0 and math.isfinite(self.class_ratio)):
            raise SfGruError(f"class_ratio must be positive, got {self.class_ratio}")
        if not (self.snr >= 0):
            raise SfGruError(f"snr must be >= 0, got {self.snr}")

    def class_counts(self):
        n_cross = int(round(self.n_tracks / (1.0 + self.class_ratio)))
        return self.n_tracks - n_cross, n_cross


# box-relative joint template (x, y in units of box width/height)
_POSE_TEMPLATE = np.array([
    [0.50, 0.08], [0.50, 0.18], [0.30, 0.20], [0.22, 0.36], [0.20, 0.50],
    [0.70, 0.20], [0.78, 0.36], [0.80, 0.50], [0.40, 0.52], [0.40, 0.74],
    [0.40, 0.95], [0.60, 0.52], [0.60, 0.74], [0.60, 0.95], [0.46, 0.06],
    [0.54, 0.06], [0.42, 0.08], [0.58, 0.08],
])
_HEAD_JOINTS = [0, 14, 15, 16, 17]
_PROJECTION_SEED = 0x5F6E_5253  # fixed: same class directions for every cfg.seed
_LATENT = 8


def _fixed_projections():
    rng = make_rng(_PROJECTION_SEED)
    out = {}
    for key in ("p", "s"):
        d = rng.normal(size=CONTEXT_DIM)
        out["dir_" + key] = d / np.linalg.norm(d)
        out["base_" + key] = rng.normal(scale=0.5, size=CONTEXT_DIM)
        out["mix_" + key] = rng.normal(size=(CONTEXT_DIM, _LATENT)) / np.sqrt(_LATENT)
    # involutive permutation standing in for "features of the mirrored crop"
    perm = rng.permutation(CONTEXT_DIM)
    inv = np.empty_like(perm)
    pairs = perm.reshape(-1, 2)
    inv[pairs[:, 0]] = pairs[:, 1]
    inv[pairs[:, 1]] = pairs[:, 0]
    out["flip_perm"] = inv
    return out


def _quantize(x):
    # quarter-pixel grid keeps mirror arithmetic exact
    return np.round(np.asarray(x) * 4.0) / 4.0


def synth_generate(cfg):
    """Generate tracks whose label is expressed causally in every modality.

    Crossing pedestrians drift laterally toward the image centre, turn their
    head toward the road, and the ego-vehicle decelerates; their context
    vectors carry a class-dependent mean offset along fixed random directions.
    The event is the last frame of each track.
    """
    n_non, n_cross = cfg.class_counts()
    rng = make_rng(cfg.seed)
    labels = np.array([1] * n_cross + [0] * n_non)
    labels = labels[rng.permutation(cfg.n_tracks)]
    proj = _fixed_projections()
    gain = 1.0 if cfg.snr > 0 else 0.0
    noise = 1.0 / cfg.snr if cfg.snr > 0 else 1.0
    T = cfg.track_len_frames
    t = np.arange(T, dtype=np.float64)
    W, H = cfg.frame_w, cfg.frame_h
    width = len(str(cfg.n_tracks - 1))

    tracks = []
    for i, y in enumerate(labels):
        sgn = 2.0 * y - 1.0
        # box dynamics
        h0 = rng.uniform(90.0, 180.0)
        cx0 = rng.uniform(0.2 * W, 0.8 * W)
        side = 1.0 if cx0 < W / 2 else -1.0
        bottom0 = rng.uniform(0.55 * H, 0.75 * H)
        vx = side * (gain * y * 1.2) + noise * rng.normal(0.0, 0.4)
        hgt = h0 * (1.0 + 0.002 * t) + noise * rng.normal(0.0, 1.0, T)
        hgt = np.maximum(hgt, 20.0)
        wid = 0.4 * hgt
        cx = cx0 + vx * t + noise * rng.normal(0.0, 1.5, T)
        bottom = bottom0 + 0.1 * t + noise * rng.normal(0.0, 1.0, T)
        x1 = np.clip(cx - wid / 2, 0.0, W - 8.0)
        x2 = np.clip(cx + wid / 2, x1 + 4.0, W)
        y2 = np.clip(bottom, 24.0, H)
        y1 = np.clip(bottom - hgt, 0.0, y2 - 16.0)
        bbox = _quantize(np.stack([x1, y1, x2, y2], axis=1))
        bbox[:, 2] = np.maximum(bbox[:, 2], bbox[:, 0] + 1.0)
        bbox[:, 3] = np.maximum(bbox[:, 3], bbox[:, 1] + 1.0)

        # ego speed in km/h
        s0 = rng.uniform(15.0, 40.0)
        slope = -gain * y * 0.08 + noise * rng.normal(0.0, 0.03)
        speed = np.maximum(s0 + slope * t + noise * rng.normal(0.0, 0.5, T), 0.0)

        # pose in pixels
        bw = (bbox[:, 2] - bbox[:, 0])[:, None]
        bh = (bbox[:, 3] - bbox[:, 1])[:, None]
        tmpl = np.broadcast_to(_POSE_TEMPLATE, (T, N_JOINTS, 2)).copy()
        tmpl[:, _HEAD_JOINTS, 0] += gain * y * side * 0.12
        jx = bbox[:, 0:1] + tmpl[:, :, 0] * bw + noise * rng.normal(0.0, 0.02, (T, N_JOINTS)) * bh
        jy = bbox[:, 1:2] + tmpl[:, :, 1] * bh + noise * rng.normal(0.0, 0.02, (T, N_JOINTS)) * bh
        jx = np.clip(_quantize(jx), 0.25, W)
        jy = np.clip(_quantize(jy), 0.25, H)
        pose = np.stack([jx, jy], axis=2).reshape(T, 2 * N_JOINTS)

        ctx = {}
        for key in ("p", "s"):
            z = rng.normal(size=_LATENT)
            nuisance = proj["mix_" + key] @ z
            ctx[key] = (proj["base_" + key] + gain * sgn * 0.5 * proj["dir_" + key]
                        + noise * (nuisance[None, :] + rng.normal(size=(T, CONTEXT_DIM))))
        extra = {}
        if cfg.full_context:
            extra["c_ps"] = 0.5 * (ctx["p"] + ctx["s"])
        if cfg.flip_context:
            perm = proj["flip_perm"]
            extra["c_p_flip"] = ctx["p"][:, perm]
            extra["c_s_flip"] = ctx["s"][:, perm]
            if cfg.full_context:
                extra["c_ps_flip"] = extra["c_ps"][:, perm]

        tracks.append(Track(
            id=f"synth_{i:0{width}d}", fps=cfg.fps, frame_w=cfg.frame_w, frame_h=cfg.frame_h,
            label=int(y), event_frame=T - 1, bbox=bbox, pose=pose, speed=speed,
            c_p=ctx["p"], c_s=ctx["s"], **extra,
        ))
    return tracks
