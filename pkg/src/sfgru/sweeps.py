"""Experiment grids: TTE sweep, observation-length sweep, feature ablation and
fusion-order permutations, all written to one CSV row format."""

import csv
import itertools
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from typing import Optional

from .architectures import DEFAULT_FUSION_ORDER, Kind, ModelSpec
from .dataset import SamplingSpec, filter_min_length, seconds_to_frames, split_train_test, tte_grid
from .errors import MissingModalityError, SfGruError
from .metrics import MetricsReport
from .numerics import derive_seed
from .training import evaluate, prepare, train_prepared

CSV_HEADER = ("model", "fusion_order", "features", "tte_s", "obs_len_s", "acc", "auc",
              "f1", "precision", "recall", "n_train", "n_test", "seed")

TTE_MIN_TRACK_S = 3.5
OBS_MIN_TRACK_S = 4.5
OBS_LENGTHS_S = (0.3, 0.5, 1.0, 1.5)
OBS_TTES_S = (0.0, 1.0, 2.0, 3.0)

ABLATION_FEATURE_SETS = (
    ("Cp",),
    ("Cps",),
    ("Cp", "Cs"),
    ("Cp", "Cs", "P"),
    ("Cp", "Cs", "P", "D"),
    ("Cp", "Cs", "P", "B"),
    ("Cp", "Cs", "P", "B", "S"),
)

FUSION_ORDERS = (
    ("P", "S", "B", "Cp", "Cs"),
    ("S", "B", "Cp", "Cs", "P"),
    ("B", "Cp", "Cs", "P", "S"),
    ("S", "Cp", "Cs", "P", "B"),
    ("Cp", "B", "Cs", "S", "P"),
    ("Cp", "Cs", "P", "B", "S"),
)

# accuracy on the original benchmark, kept for reports; not reproducible here
REFERENCE_ACC = {
    "table2": dict(zip(ABLATION_FEATURE_SETS, (0.660, 0.666, 0.692, 0.745, 0.796, 0.816, 0.844))),
    "table3": dict(zip(FUSION_ORDERS, (0.753, 0.784, 0.798, 0.810, 0.813, 0.844))),
}


@dataclass
class SweepRow:
    model: str
    fusion_order: str
    features: str
    tte_s: float
    obs_len_s: float
    metrics: Optional[MetricsReport]
    n_train: int
    n_test: int
    seed: int
    skipped: Optional[str] = None

    def csv_fields(self):
        def fmt(v):
            return "NA" if v is None else f"{v:.4f}"
        m = self.metrics
        vals = [None] * 5 if m is None else [m.accuracy, m.auc, m.f1, m.precision, m.recall]
        return [self.model, self.fusion_order, self.features, fmt(self.tte_s), fmt(self.obs_len_s),
                *map(fmt, vals), str(self.n_train), str(self.n_test), str(self.seed)]


@dataclass
class SweepResult:
    rows: list

    def __len__(self):
        return len(self.rows)

    def write_csv(self, path):
        with open(path, "w", encoding="utf-8", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(CSV_HEADER)
            for row in self.rows:
                w.writerow(row.csv_fields())


@dataclass(frozen=True)
class Condition:
    spec: ModelSpec
    tte_frames: int
    seed: int
    fps: float = 30.0


def _describe(spec):
    feats = ",".join(spec.fusion_order)
    order = feats if spec.kind is Kind.STACKED_FUSION_GRU else ""
    return order, feats


def run_condition(cond, train_tracks, test_tracks, cfg):
    """Fresh model trained on ``train_tracks`` and scored on ``test_tracks`` at one TTE."""
    spec = cond.spec
    order, feats = _describe(spec)
    row = SweepRow(spec.kind.label, order, feats, cond.tte_frames / cond.fps,
                   spec.obs_len / cond.fps, None, 0, 0, cond.seed)
    sampling = SamplingSpec(spec.obs_len, cond.tte_frames)
    try:
        train_set = prepare(spec, train_tracks, sampling, with_flips=cfg.flip_augment)
        test_set = prepare(spec, test_tracks, sampling)
    except MissingModalityError as e:
        row.skipped = f"missing modality {e.key}"
        return row
    row.n_train, row.n_test = len(train_set), len(test_set)
    if len(train_set) == 0 or len(test_set) == 0:
        row.skipped = "no usable windows"
        return row
    if cfg.balance and len(set(train_set.labels.tolist())) < 2:
        row.skipped = "training windows contain a single class"
        return row
    result = train_prepared(spec, train_set, replace(cfg, seed=cond.seed))
    row.metrics = evaluate(spec, result.params, test_set.inputs, test_set.labels)
    return row


def _run_all(conditions, train_tracks, test_tracks, cfg, jobs=1):
    if jobs <= 1:
        rows = [run_condition(c, train_tracks, test_tracks, cfg) for c in conditions]
    else:
        n = len(conditions)
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            rows = list(ex.map(run_condition, conditions, [train_tracks] * n,
                               [test_tracks] * n, [cfg] * n))
    return SweepResult(rows)


def _split(tracks, split_seed):
    split = split_train_test(tracks, 0.6, split_seed)
    by_id = {t.id: t for t in tracks}
    return [by_id[i] for i in split.train], [by_id[i] for i in split.test]


def _fps(tracks):
    return tracks[0].fps if tracks else 30.0


def sweep_tte(specs, tracks, cfg, m=15, split_seed=0, jobs=1, fps=None):
    """Every spec at every TTE point of the 19-point 0-3 s grid."""
    tracks = filter_min_length(tracks, TTE_MIN_TRACK_S)
    fps = fps or _fps(tracks)
    if len(tracks) < 2:
        raise SfGruError("fewer than two tracks survive the 3.5 s length filter")
    train_tracks, test_tracks = _split(tracks, split_seed)
    conditions = []
    for k, (spec, tte) in enumerate(itertools.product(specs, tte_grid(fps))):
        conditions.append(Condition(replace(spec, obs_len=m), tte, derive_seed(cfg.seed, k), fps))
    return _run_all(conditions, train_tracks, test_tracks, cfg, jobs)


def sweep_obs_length(spec, tracks, cfg, obs_lengths=OBS_LENGTHS_S, ttes=OBS_TTES_S,
                     split_seed=0, jobs=1, fps=None):
    """(observation length, TTE) grid for one architecture."""
    tracks = filter_min_length(tracks, max(obs_lengths) + max(ttes))
    fps = fps or _fps(tracks)
    if len(tracks) < 2:
        raise SfGruError("fewer than two tracks survive the observation-length filter")
    train_tracks, test_tracks = _split(tracks, split_seed)
    conditions = []
    for k, (obs, tte) in enumerate(itertools.product(obs_lengths, ttes)):
        s = replace(spec, obs_len=seconds_to_frames(obs, fps))
        conditions.append(Condition(s, seconds_to_frames(tte, fps), derive_seed(cfg.seed, k), fps))
    return _run_all(conditions, train_tracks, test_tracks, cfg, jobs)


def ablate_features(base_spec, tracks, cfg, tte_frames=60, feature_sets=ABLATION_FEATURE_SETS,
                    split_seed=0, jobs=1):
    """One SF-GRU per feature configuration; rows with unavailable modalities are skipped."""
    if len(tracks) < 2:
        raise SfGruError("need at least two tracks")
    train_tracks, test_tracks = _split(tracks, split_seed)
    fps = _fps(tracks)
    conditions = [
        Condition(replace(base_spec, fusion_order=tuple(fs)), tte_frames, derive_seed(cfg.seed, k), fps)
        for k, fs in enumerate(feature_sets)
    ]
    return _run_all(conditions, train_tracks, test_tracks, cfg, jobs)


def sweep_fusion_order(tracks, cfg, orders=FUSION_ORDERS, base_spec=None, tte_frames=60,
                       split_seed=0, jobs=1):
    base_spec = base_spec or ModelSpec(Kind.STACKED_FUSION_GRU)
    for order in orders:
        if sorted(order) != sorted(DEFAULT_FUSION_ORDER):
            raise SfGruError(f"fusion order {order} is not a permutation of {DEFAULT_FUSION_ORDER}")
    if len(tracks) < 2:
        raise SfGruError("need at least two tracks")
    train_tracks, test_tracks = _split(tracks, split_seed)
    fps = _fps(tracks)
    conditions = [
        Condition(replace(base_spec, kind=Kind.STACKED_FUSION_GRU, fusion_order=tuple(o)),
                  tte_frames, derive_seed(cfg.seed, k), fps)
        for k, o in enumerate(orders)
    ]
    return _run_all(conditions, train_tracks, test_tracks, cfg, jobs)
