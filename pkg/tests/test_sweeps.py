import csv

import numpy as np
import pytest

from sfgru.architectures import Kind, ModelSpec
from sfgru.dataset import SynthConfig, synth_generate
from sfgru.errors import SfGruError
from sfgru.metrics import MetricsReport
from sfgru.sweeps import (ABLATION_FEATURE_SETS, CSV_HEADER, FUSION_ORDERS, REFERENCE_ACC, Condition,
                          SweepResult, SweepRow, ablate_features, run_condition, sweep_fusion_order,
                          sweep_obs_length, sweep_tte)
from sfgru.training import TrainConfig

FAST = TrainConfig(lr=1e-3, epochs=1, batch_size=16, seed=0)


def tiny(kind=Kind.STACKED_FUSION_GRU, **kw):
    return ModelSpec(kind, hidden_dim=2, **kw)


def test_tte_sweep_grid(small_tracks):
    res = sweep_tte([tiny(), tiny(Kind.STATIC, fusion_order=("Cp", "Cs"))], small_tracks, FAST)
    assert len(res) == 2 * 19
    ttes = sorted({r.tte_s for r in res.rows})
    assert len(ttes) == 19 and ttes[0] == 0.0 and ttes[-1] == 3.0
    assert all(r.obs_len_s == 0.5 and r.skipped is None for r in res.rows)
    assert len({r.seed for r in res.rows}) == len(res)


def test_obs_sweep_grid(small_tracks):
    res = sweep_obs_length(tiny(), small_tracks, FAST)
    assert len(res) == 16
    combos = {(r.obs_len_s, r.tte_s) for r in res.rows}
    assert combos == {(o, t) for o in (0.3, 0.5, 1.0, 1.5) for t in (0.0, 1.0, 2.0, 3.0)}
    assert all(r.skipped is None for r in res.rows)


def test_ablation_rows(small_tracks):
    res = ablate_features(tiny(), small_tracks, FAST)
    assert len(res) == 7
    assert [r.features for r in res.rows] == [",".join(fs) for fs in ABLATION_FEATURE_SETS]


def test_ablation_skips_missing_modality():
    tracks = synth_generate(SynthConfig(n_tracks=30, track_len_frames=80, seed=1, full_context=False))
    res = ablate_features(tiny(), tracks, FAST)
    skipped = [r for r in res.rows if r.skipped]
    assert [r.features for r in skipped] == ["Cps"]
    assert "Cps" in skipped[0].skipped
    assert skipped[0].csv_fields()[5:10] == ["NA"] * 5


def test_fusion_order_rows(small_tracks):
    res = sweep_fusion_order(small_tracks, FAST, base_spec=tiny())
    assert len(res) == 6
    assert [r.fusion_order for r in res.rows] == [",".join(o) for o in FUSION_ORDERS]
    with pytest.raises(SfGruError):
        sweep_fusion_order(small_tracks, FAST, orders=[("Cp", "Cs", "P", "B")], base_spec=tiny())


def test_reference_tables_cover_every_row():
    assert set(REFERENCE_ACC["table2"]) == set(ABLATION_FEATURE_SETS)
    assert set(REFERENCE_ACC["table3"]) == set(FUSION_ORDERS)
    assert REFERENCE_ACC["table3"][("Cp", "Cs", "P", "B", "S")] == 0.844
    assert REFERENCE_ACC["table3"][("P", "S", "B", "Cp", "Cs")] == 0.753
    assert len({tuple(sorted(o)) for o in FUSION_ORDERS}) == 1


def test_condition_single_class_is_skipped(small_tracks):
    pos = [t for t in small_tracks if t.label == 1]
    row = run_condition(Condition(tiny(), 60, 0), pos, small_tracks, FAST)
    assert row.skipped and row.metrics is None


def test_csv_format(tmp_path):
    m = MetricsReport(0.84412, None, 0.5, 0.25, 1.0, 1, 3, 0, 0, 4)
    rows = [SweepRow("SF-GRU", "Cp,Cs", "Cp,Cs", 2.0, 0.5, m, 10, 4, 7),
            SweepRow("GRU", "", "P", 0.0, 0.3, None, 0, 0, 8, skipped="x")]
    path = tmp_path / "r.csv"
    SweepResult(rows).write_csv(path)
    with open(path, newline="") as fh:
        table = list(csv.reader(fh))
    assert tuple(table[0]) == CSV_HEADER
    assert ",".join(CSV_HEADER) == ("model,fusion_order,features,tte_s,obs_len_s,acc,auc,f1,"
                                    "precision,recall,n_train,n_test,seed")
    assert table[1] == ["SF-GRU", "Cp,Cs", "Cp,Cs", "2.0000", "0.5000", "0.8441", "NA", "0.5000",
                        "0.2500", "1.0000", "10", "4", "7"]
    assert table[2][5:10] == ["NA"] * 5


def test_sweep_is_deterministic(small_tracks, tmp_path):
    a = ablate_features(tiny(), small_tracks, FAST)
    b = ablate_features(tiny(), small_tracks, FAST)
    a.write_csv(tmp_path / "a.csv")
    b.write_csv(tmp_path / "b.csv")
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()


def test_parallel_matches_serial(small_tracks):
    serial = sweep_fusion_order(small_tracks, FAST, base_spec=tiny(), jobs=1)
    par = sweep_fusion_order(small_tracks, FAST, base_spec=tiny(), jobs=2)
    assert [r.csv_fields() for r in serial.rows] == [r.csv_fields() for r in par.rows]


def test_filter_leaves_too_few_tracks():
    short = synth_generate(SynthConfig(n_tracks=4, track_len_frames=60, seed=0))
    with pytest.raises(SfGruError):
        sweep_tte([tiny()], short, FAST)
    assert np.isfinite(len(short))
