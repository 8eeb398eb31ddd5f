import json

import numpy as np
import pytest
from filelock import FileLock

from aoanet.cli import main
from aoanet.covariance import FeatureScaler
from aoanet.dataset import DatasetConfig, build_dataset, load_dataset
from aoanet.errors import DataError
from aoanet.nn.checkpoint import load_checkpoint, save_checkpoint
from aoanet.nn.model import build_model, prepare_inputs
from aoanet.pipeline import infer_frame, model_records
from aoanet.signals import SourceSpec, synthesize_frame


def _run(capsys, *argv):
    code = main([str(a) for a in argv])
    out = capsys.readouterr().out.strip().splitlines()
    return code, (json.loads(out[-1]) if out and out[-1].startswith("{") else None)


class TestCheckpoint:
    @pytest.mark.parametrize("kind", ["fc", "cnn"])
    def test_round_trip(self, tmp_path, kind):
        m = build_model(kind, seed=4)
        if kind == "cnn":
            m.forward(np.random.default_rng(0).standard_normal((8, 4, 4, 8)), training=True, seed=1)
        scaler = FeatureScaler(np.linspace(-1, 1, 128), np.linspace(1, 2, 128))
        save_checkpoint(tmp_path / "m.bin", m, scaler, {"note": "x"})
        m2, s2, extra = load_checkpoint(tmp_path / "m.bin")
        assert extra == {"note": "x"}
        for (n1, a), (n2, b) in zip(m.parameters(), m2.parameters()):
            assert n1 == n2
            np.testing.assert_array_equal(a, b)
        for (_, a), (_, b) in zip(m.buffers(), m2.buffers()):
            np.testing.assert_array_equal(a, b)
        np.testing.assert_allclose(s2.mean, scaler.mean, rtol=1e-6)
        x = np.random.default_rng(1).standard_normal((3, 128))
        np.testing.assert_array_equal(m.forward(prepare_inputs(m, x)), m2.forward(prepare_inputs(m2, x)))

    def test_rejects_garbage(self, tmp_path):
        p = tmp_path / "bad.bin"
        p.write_bytes(b"XXXX" + bytes(20))
        with pytest.raises(DataError):
            load_checkpoint(p)
        save_checkpoint(p, build_model("fc"))
        p.write_bytes(p.read_bytes()[:-8])
        with pytest.raises(DataError):
            load_checkpoint(p)


@pytest.fixture(scope="module")
def tiny(tmp_path_factory):
    out = tmp_path_factory.mktemp("cli")
    cfg = DatasetConfig(frame_length=512, window_length=64, captures_per_angle=1, snr_levels=(10.0,),
                        phase_shifts=())
    build_dataset(cfg, out / "data")
    return out


def test_infer_gate_on_noise_only(tmp_path):
    m = build_model("fc")
    frame = synthesize_frame([], noise_power=1e-3, seed=3)
    assert infer_frame(m, FeatureScaler.identity(128), frame)["L"] == 0
    frame = synthesize_frame([SourceSpec(12.0, "random_qpsk")], snr_db=5, noise_power=1e-3, seed=3)
    out = infer_frame(m, FeatureScaler.identity(128), frame)
    assert out["L"] in (1, 2) and 0 < out["p"] < 1


def test_untrained_model_is_near_chance(tiny):
    d = load_dataset(tiny / "data" / "manifest.json")
    m = build_model("fc", seed=0)
    m.head.params["W"][:, 0] = 0.0  # classifier at exactly p=0.5 -> all called L=2
    recs = model_records(m, d.scaler, d.features, d.labels)
    acc = np.mean([r.pred_L == r.true_L for r in recs])
    assert acc == pytest.approx(0.5, abs=0.05)


def test_cli_end_to_end(tiny, capsys, tmp_path):
    data = tiny / "data" / "manifest.json"
    run = tmp_path / "run"
    code, res = _run(capsys, "train", "--data", data, "--epochs", 1, 1, "--out", run)
    assert code == 0 and (run / "model.bin").exists()
    assert (run / "history.csv").read_text().count("\n") == 3
    code, res = _run(capsys, "eval", "--checkpoint", run / "model.bin", "--data", data, "--out", run)
    assert code == 0 and res["n"] > 0
    assert (run / "metrics.csv").exists() and (run / "confusion.txt").exists()

    code, _ = _run(capsys, "simulate", "--angle", -20, "--snr", 5, "--out", tmp_path / "frames")
    assert code == 0
    code, res = _run(capsys, "infer", "--checkpoint", run / "model.bin", "--frame",
                     tmp_path / "frames" / "frame_0000.iq")
    assert code == 0 and set(res) == {"L", "angles_deg", "p"} and res["L"] in (1, 2)

    code, _ = _run(capsys, "simulate", "--noise-power", 1e-3, "--out", tmp_path / "noise")
    code, res = _run(capsys, "infer", "--checkpoint", run / "model.bin", "--frame",
                     tmp_path / "noise" / "frame_0000.iq")
    assert code == 0 and res["L"] == 0

    code, res = _run(capsys, "music", "--frame", tmp_path / "frames" / "frame_0000.iq", "--out", tmp_path)
    assert code == 0 and res["angles_deg"][0] == pytest.approx(-20, abs=1)
    assert (tmp_path / "spectrum.csv").read_text().startswith("angle_deg,power")

    code, res = _run(capsys, "plot", "snr-sweep", "--checkpoint", run / "model.bin", "--data", data,
                     "--snr", 0, 10, "--limit", 10, "--out", tmp_path / "plots")
    assert code == 0
    rows = (tmp_path / "plots" / "snr_sweep.csv").read_text().splitlines()
    assert rows[0] == "snr_db,estimator,n,rmse,log10_rmse,mae" and len(rows) == 5
    code, res = _run(capsys, "plot", "cdf", "--checkpoint", run / "model.bin", "--data", data,
                     "--snr", 0, "--limit", 10, "--out", tmp_path / "plots")
    assert code == 0 and 0 < res["n"] <= 10


def test_cli_build_dataset_with_config(capsys, tmp_path):
    cfg = tmp_path / "c.yaml"
    cfg.write_text("frame_length: 512\nwindow_length: 64\ncaptures_per_angle: 1\nsnr_levels: []\n"
                   "phase_shifts: []\ntwo_source_ratio: 0.0\n")
    code, res = _run(capsys, "build-dataset", "--config", cfg, "--out", tmp_path / "d")
    assert code == 0 and res["class_counts"] == {"single": 75, "two": 0}
    cfg.write_text("bogus_key: 1\n")
    assert _run(capsys, "build-dataset", "--config", cfg, "--out", tmp_path / "d")[0] == 2


def test_cli_bench(capsys):
    code, res = _run(capsys, "bench", "--model", "cnn", "--runs", 50)
    assert code == 0 and res["parameters"] == 2_139_651 and res["runs"] == 50
    assert abs(res["parameters"] - 2.14e6) <= 0.05 * 2.14e6


def test_cli_exit_codes(capsys, tmp_path):
    assert main(["nonsense"]) == 2
    assert main(["music", "--frame", str(tmp_path / "missing.iq")]) == 3
    assert main(["simulate", "--angle", "95", "--out", str(tmp_path)]) == 4
    bad = tmp_path / "bad.bin"
    bad.write_bytes(b"nope")
    assert main(["bench", "--checkpoint", str(bad)]) == 3
    capsys.readouterr()


def test_train_lock(tiny, tmp_path, capsys):
    run = tmp_path / "locked"
    run.mkdir()
    with FileLock(str(run / "model.bin") + ".lock"):
        code = main(["train", "--data", str(tiny / "data" / "manifest.json"), "--epochs", "1", "0",
                     "--out", str(run)])
    assert code == 3
    capsys.readouterr()


def test_train_keep_best(tiny, tmp_path, capsys):
    code, res = _run(capsys, "train", "--data", tiny / "data" / "manifest.json", "--epochs", 3, 0,
                     "--keep-best", "--out", tmp_path)
    assert code == 0
    _, _, extra = load_checkpoint(tmp_path / "model.bin")
    assert 1 <= extra["best_epoch"] <= 3
    assert res["epoch"] == extra["best_epoch"]
