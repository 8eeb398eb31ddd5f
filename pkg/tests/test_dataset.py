import json

import numpy as np
import pytest

from aoanet.covariance import FeatureScaler
from aoanet.augment import phase_shift
from aoanet.covariance import scatter_matrices, serialize_features, stack_covariances
from aoanet.dataset import (DatasetConfig, DatasetManifest, _noisy_stack, _shift_scatter, assign_splits,
                            build_dataset, load_dataset, raw_frame, read_records)
from aoanet.errors import ConfigurationError, DataError
from aoanet.nn.labels import label_angles

SMALL = dict(frame_length=512, window_length=64, captures_per_angle=2)


def _cfg(**kw):
    return DatasetConfig(**{**SMALL, **kw})


def test_raw_count_without_augmentation(tmp_path):
    cfg = _cfg(captures_per_angle=1, phase_shifts=(), snr_levels=(), two_source_ratio=0.0)
    m = build_dataset(cfg, tmp_path)
    assert m.class_counts == {"single": 75, "two": 0}
    recs = list(read_records(m.records_path))
    assert all(r["meta"]["aug"] == "raw;awgn:none" for r in recs)


def test_phase_shift_multiplies_by_five(tmp_path):
    cfg = _cfg(captures_per_angle=1, snr_levels=(), two_source_ratio=0.0)
    m = build_dataset(cfg, tmp_path)
    assert m.class_counts["single"] == 5 * 75


@pytest.fixture(scope="module")
def built(tmp_path_factory):
    out = tmp_path_factory.mktemp("ds")
    cfg = _cfg(snr_levels=(0.0, 10.0))
    manifest = build_dataset(cfg, out)
    return out, manifest, list(read_records(manifest.records_path))


def test_record_contract(built):
    _, manifest, recs = built
    assert manifest.class_counts["single"] == 75 * 2 * 5 * 2
    assert manifest.class_counts["two"] == manifest.class_counts["single"]
    for r in recs:
        feats = np.asarray(r["features"])
        assert feats.shape == (128,)
        np.testing.assert_allclose(np.linalg.norm(feats.reshape(8, 16), axis=1), 1.0, atol=1e-9)
        angles = label_angles(r["label"])
        assert all(-74 <= a <= 74 for a in angles)
        np.testing.assert_allclose(angles, r["meta"]["angles"], atol=1e-9)
        if len(angles) == 2:
            assert angles[0] < angles[1]
            assert len(set(r["meta"]["scenarios"])) == 2
            assert "superpose:dphi=" in r["meta"]["aug"]


def test_split_disjointness(built):
    _, _, recs = built
    ids = [r["meta"]["id"] for r in recs]
    assert len(ids) == len(set(ids))
    parent_split = {}
    for r in recs:
        for p in r["meta"]["parents"]:
            assert parent_split.setdefault(p, r["meta"]["split"]) == r["meta"]["split"]


def test_split_fractions():
    raws = assign_splits(_cfg(captures_per_angle=4))
    counts = {s: sum(r.split == s for r in raws) for s in ("train", "val", "test")}
    assert counts == {"train": 180, "val": 90, "test": 30}


def test_scaler_fit_on_train_only(built):
    out, _, _ = built
    d = load_dataset(out / "manifest.json")
    X, _ = d.select("train")
    assert np.max(np.abs(X.mean(axis=0))) < 1e-6
    std = X.std(axis=0)
    live = d.scaler.std != 1.0
    np.testing.assert_allclose(std[live], 1.0, atol=1e-6)
    Xv, _ = d.select("val")
    assert np.max(np.abs(Xv.mean(axis=0))) > 1e-6


def test_reproducible_bytes(built, tmp_path):
    out, manifest, _ = built
    build_dataset(manifest.config, tmp_path)
    for name in ("records.jsonl", "manifest.json"):
        assert (tmp_path / name).read_bytes() == (out / name).read_bytes()


def test_manifest_roundtrip(built):
    out, manifest, _ = built
    loaded = DatasetManifest.load(out / "manifest.json")
    assert loaded.config == manifest.config
    assert loaded.split_counts == manifest.split_counts
    assert isinstance(loaded.scaler, FeatureScaler)
    d = json.loads((out / "manifest.json").read_text())
    assert d["splits"]["fractions"] == [0.6, 0.3, 0.1] and d["feature_dim"] == 128


def test_config_validation():
    with pytest.raises(ConfigurationError):
        DatasetConfig(split_fractions=(0.5, 0.3, 0.1))
    with pytest.raises(ConfigurationError):
        DatasetConfig.from_dict({"sed": 1})
    with pytest.raises(ConfigurationError):
        DatasetConfig(frame_length=1024)


def test_bad_files(tmp_path):
    with pytest.raises(DataError):
        DatasetManifest.load(tmp_path / "missing.json")
    (tmp_path / "r.jsonl").write_text("{not json}\n")
    with pytest.raises(DataError):
        list(read_records(tmp_path / "r.jsonl"))


def test_shifted_scatter_equals_scatter_of_shifted_frame():
    cfg = _cfg()
    raw = assign_splits(cfg)[7]
    frame = raw_frame(cfg, raw)
    P = scatter_matrices(frame, cfg.window_length, cfg.window_count)
    for phi in cfg.phase_shifts:
        shifted = phase_shift(frame, raw.angle, phi, cfg.array)
        np.testing.assert_allclose(_shift_scatter(cfg, P, raw.angle, phi),
                                   scatter_matrices(shifted, cfg.window_length, cfg.window_count), atol=1e-9)


def test_noiseless_records_use_the_plain_covariance():
    cfg = _cfg()
    frame = raw_frame(cfg, assign_splits(cfg)[0])
    P = scatter_matrices(frame, cfg.window_length, cfg.window_count)
    got = serialize_features(_noisy_stack(cfg, P, 1.0, None, 0))
    want = serialize_features(stack_covariances(frame, cfg.window_length, cfg.window_count))
    np.testing.assert_allclose(got, want, atol=1e-12)
