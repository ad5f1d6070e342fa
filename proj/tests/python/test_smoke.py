import math

import numpy as np
import pytest

import gazepred


def test_default_config_round_trips_through_pipeline_validation(tmp_path):
    cfg = gazepred.default_config()
    assert cfg["pi_ms"] == [25, 40, 60]
    cfg["data"]["synthetic"]["n_subjects"] = 0
    cfg["out_dir"] = str(tmp_path)
    with pytest.raises(gazepred.ConfigError):
        gazepred.run_pipeline(cfg, ["synth"])


def test_missing_upstream_is_a_data_error(tmp_path):
    cfg = gazepred.default_config()
    cfg["out_dir"] = str(tmp_path)
    with pytest.raises(gazepred.DataError):
        gazepred.run_pipeline(cfg, ["classify"])


def test_synth_and_classify_stages(tmp_path):
    cfg = gazepred.default_config()
    cfg["out_dir"] = str(tmp_path)
    cfg["data"]["synthetic"]["n_subjects"] = 2
    cfg["data"]["synthetic"]["duration_s"] = 3.0
    first = gazepred.run_pipeline(cfg, ["synth", "classify"])
    assert [r[0] for r in first] == ["synth", "classify"]
    assert not first[0][1]
    again = gazepred.run_pipeline(cfg, ["synth"])
    assert again[0][1]


def test_generated_subject_is_deterministic():
    a = gazepred.generate_subject({"duration_s": 3.0, "seed": 4}, 1)
    b = gazepred.generate_subject({"duration_s": 3.0, "seed": 4}, 1)
    assert len(a["x"]) == 3000
    np.testing.assert_array_equal(a["x"], b["x"])
    kinds = {s["kind"] for s in a["truth"]}
    assert "fixation" in kinds and "saccade" in kinds
    assert a["noise_sigma"] > 0


def test_saccade_lands_on_target():
    traj = gazepred.simulate_saccade(0.0, 10.0)
    assert traj.shape[1] == 4
    assert abs(traj[-1, 0] - 10.0) < 0.1
    assert traj[:, 1].max() > 200.0


def test_velocity_of_a_ramp():
    x = 0.02 * np.arange(200.0)
    vx, vy = gazepred.velocity(x, np.zeros_like(x))
    assert math.isnan(vx[0])
    assert vx[100] == pytest.approx(20.0, abs=1e-9)
    assert vy[100] == pytest.approx(0.0, abs=1e-9)


def test_classify_and_predict_a_synthetic_trace():
    s = gazepred.generate_subject({"duration_s": 4.0}, 0)
    segs = gazepred.classify(s["x"], s["y"], s["valid"])
    assert segs[0]["start_idx"] == 0 and segs[-1]["end_idx"] == len(s["x"]) - 1
    for name in ("constant_position", "constant_velocity", "opkf"):
        run = gazepred.predict(name, s["x"], s["y"], s["valid"], pi_ms=40, segments=s["truth"])
        assert len(run["x"]) == len(s["x"])
        assert not run["valid"][-1]
        ok = run["valid"]
        err = np.hypot(run["x"][:-40][ok[:-40]] - s["x"][40:][ok[:-40]], run["y"][:-40][ok[:-40]] - s["y"][40:][ok[:-40]])
        assert np.median(err) < 1.0
    with pytest.raises(gazepred.ConfigError):
        gazepred.predict("oracle", s["x"], s["y"])


def test_statistics():
    assert gazepred.quantile(np.array([4.0, 1.0, 3.0, 2.0]), 0.25) == 1.75
    r, p = gazepred.spearman(np.arange(10.0), np.arange(10.0) ** 3)
    assert r == pytest.approx(1.0)
    assert p < 1e-6
    assert gazepred.kendall_w([[1, 2, 3, 4], [2, 1, 4, 3], [1, 3, 2, 4]]) == pytest.approx(12 * 29 / 540)
    with pytest.raises(gazepred.InsufficientDataError):
        gazepred.quantile(np.array([]), 0.5)
    assert gazepred.gaze_error(3.0, 4.0, 0.0, 0.0) == pytest.approx(5.0)
