from __future__ import annotations

import dataclasses

import numpy as np
import pytest

from conftest import SMALL_ARCH
from equigait.data import Gait, Label, Split, Stride, compute_class_weights, split_sessions
from equigait.nn import checkpoint
from equigait.nn.model import ArchConfig, compute_norm_stats, predict_proba
from equigait.segmentation import segment_sessions
from equigait.synth import SynthConfig, generate_corpus
from equigait import train as train_mod
from equigait.train import Datasets, TrainConfig, TrainingError, build_datasets, train_model


@pytest.fixture(scope="module")
def small_corpus():
    plan = ((Gait.WALK, 8.0), (Gait.TROT, 30.0), (Gait.CANTER, 4.0))
    corpus = generate_corpus(5, 5, SynthConfig(gait_plan=plan), seed=3)
    segmented = segment_sessions(corpus.sessions)
    split = split_sessions([s.session for s in segmented], seed=3)
    return segmented, split


def _shifted_strides(n: int, label: Label, shift: float, rng, prefix: str = "") -> list[Stride]:
    out = []
    for i in range(n):
        data = np.zeros((7, 100))
        data[:, :80] = rng.normal(size=(7, 80))
        if label is Label.LAME:
            data[2, :80] += shift
        out.append(Stride(f"{prefix}{label.value}{i}", Gait.TROT, data, 80, label, 0))
    return out


def _datasets(train, val, test=None) -> Datasets:
    mean, std = compute_norm_stats(train)
    return Datasets(train, val, test or val, compute_class_weights(train), mean, std)


# -- dataset assembly ------------------------------------------------------------------


def test_build_datasets_filters_and_inherits_labels(small_corpus):
    segmented, split = small_corpus
    ds = build_datasets(segmented, split, Gait.TROT)
    assert all(s.gait is Gait.TROT for s in ds.train + ds.val + ds.test)
    for item in segmented:
        sid = item.session.session_id
        n_trot = sum(s.gait is Gait.TROT for s in item.strides)
        mine = [s for s in ds.split(split.assignment[sid]) if s.session_id == sid]
        assert len(mine) == n_trot
        assert all(s.label is item.session.label for s in mine)


def test_no_session_crosses_splits(small_corpus):
    segmented, split = small_corpus
    ds = build_datasets(segmented, split)
    train_ids = {s.session_id for s in ds.train}
    assert train_ids == set(split.sessions_in(Split.TRAIN))
    assert train_ids.isdisjoint({s.session_id for s in ds.val + ds.test})


def test_weights_and_norm_from_train_only(small_corpus):
    segmented, split = small_corpus
    ds = build_datasets(segmented, split)
    w = compute_class_weights(ds.train)
    assert (ds.class_weights.w_sound, ds.class_weights.w_lame) == (w.w_sound, w.w_lame)
    mean, std = compute_norm_stats(ds.train)
    assert np.array_equal(ds.norm_mean, mean) and np.array_equal(ds.norm_std, std)
    pooled_mean, _ = compute_norm_stats(ds.train + ds.val)
    assert not np.array_equal(pooled_mean, ds.norm_mean)


def test_walk_strides_excluded_for_trot(small_corpus):
    segmented, split = small_corpus
    walk = build_datasets(segmented, split, Gait.WALK)
    assert walk.train and all(s.gait is Gait.WALK for s in walk.train)
    trot = build_datasets(segmented, split, Gait.TROT)
    assert sum(s.gait is Gait.WALK for s in trot.train) == 0


def test_build_datasets_errors(small_corpus):
    segmented, split = small_corpus
    unlabeled = dataclasses.replace(segmented[0].session, label=Label.UNKNOWN)
    with pytest.raises(ValueError, match="unlabeled"):
        build_datasets([dataclasses.replace(segmented[0], session=unlabeled)], split)
    sound_only = [item for item in segmented if item.session.label is Label.SOUND]
    with pytest.raises(ValueError, match="lacks a label"):
        build_datasets(sound_only, split)


def test_train_config_validation():
    with pytest.raises(ValueError):
        TrainConfig(batch_size=1)
    with pytest.raises(ValueError):
        TrainConfig(epochs=0)


# -- training loop ---------------------------------------------------------------------


def test_overfits_eight_strides():
    rng = np.random.default_rng(0)
    strides = _shifted_strides(4, Label.SOUND, 0.0, rng) + _shifted_strides(4, Label.LAME, 0.0, rng)
    arch = ArchConfig(dropout=0.0)
    _, log = train_model(_datasets(strides, strides), TrainConfig(epochs=500, batch_size=8, seed=0, arch=arch))
    assert min(r.train_loss for r in log.records) < 0.01


def test_lr_trace_and_best_epoch():
    rng = np.random.default_rng(1)
    tr = _shifted_strides(30, Label.SOUND, 0.5, rng) + _shifted_strides(30, Label.LAME, 0.5, rng)
    va = _shifted_strides(10, Label.SOUND, 0.5, rng, "v") + _shifted_strides(10, Label.LAME, 0.5, rng, "v")
    seen = []
    _, log = train_model(_datasets(tr, va), TrainConfig(epochs=25, batch_size=16, seed=2, arch=SMALL_ARCH), on_epoch=seen.append)
    lrs = log.learning_rates
    assert len(log.records) == len(seen) == 25
    assert all(a >= b for a, b in zip(lrs, lrs[1:])) and min(lrs) >= 1e-6
    best = log.records[log.best_epoch - 1]
    assert best.val_loss == min(r.val_loss for r in log.records)
    assert log.to_csv().count("\n") == 26


def test_training_is_deterministic():
    rng = np.random.default_rng(4)
    tr = _shifted_strides(20, Label.SOUND, 0.5, rng) + _shifted_strides(21, Label.LAME, 0.5, rng)
    va = _shifted_strides(5, Label.SOUND, 0.5, rng, "v") + _shifted_strides(5, Label.LAME, 0.5, rng, "v")
    cfg = TrainConfig(epochs=4, batch_size=8, seed=9, arch=SMALL_ARCH)
    a, _ = train_model(_datasets(tr, va), cfg)
    b, _ = train_model(_datasets(tr, va), cfg)
    assert checkpoint.dumps(a) == checkpoint.dumps(b)
    c, _ = train_model(_datasets(tr, va), dataclasses.replace(cfg, seed=10))
    assert checkpoint.dumps(a) != checkpoint.dumps(c)


def test_checkpoint_round_trip_is_lossless():
    rng = np.random.default_rng(5)
    tr = _shifted_strides(10, Label.SOUND, 0.5, rng) + _shifted_strides(10, Label.LAME, 0.5, rng)
    params, _ = train_model(_datasets(tr, tr), TrainConfig(epochs=2, batch_size=8, arch=SMALL_ARCH))
    back, _ = checkpoint.loads(checkpoint.dumps(params))
    assert np.array_equal(predict_proba(params, tr), predict_proba(back, tr))


def test_class_weighting_rescues_minority_recall():
    """10:1 imbalance: weighted BCE keeps lame recall high, unit weights collapse it."""
    rng = np.random.default_rng(0)
    tr = _shifted_strides(500, Label.SOUND, 0.5, rng) + _shifted_strides(50, Label.LAME, 0.5, rng)
    va = _shifted_strides(200, Label.SOUND, 0.5, rng, "v") + _shifted_strides(20, Label.LAME, 0.5, rng, "v")
    te = _shifted_strides(300, Label.LAME, 0.5, rng, "t")
    ds = _datasets(tr, va)
    recall = {}
    for weighted in (True, False):
        cfg = TrainConfig(epochs=30, seed=0, arch=SMALL_ARCH, class_weighting=weighted)
        params, _ = train_model(ds, cfg)
        recall[weighted] = float(np.mean(predict_proba(params, te) >= 0.5))
    assert recall[True] >= 0.7
    assert recall[False] < recall[True]


def test_non_finite_loss_aborts(monkeypatch):
    rng = np.random.default_rng(6)
    tr = _shifted_strides(4, Label.SOUND, 0.5, rng) + _shifted_strides(4, Label.LAME, 0.5, rng)
    monkeypatch.setattr(train_mod, "weighted_bce", lambda p, y, w=None: (float("nan"), np.zeros_like(p)))
    with pytest.raises(TrainingError, match="non-finite"):
        train_model(_datasets(tr, tr), TrainConfig(epochs=1, batch_size=4, arch=SMALL_ARCH))
