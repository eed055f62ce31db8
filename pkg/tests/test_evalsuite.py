"""Experiment configs, dataset builders, and micro-scale study runs."""

import os

import numpy as np
import pytest

from beamforge import evalsuite, neural
from beamforge.evalsuite import (build_compare_dataset, build_subsample_dataset,
                                 compare_beamformers, experiment_config,
                                 method_summary, phantom_from_config, pipeline,
                                 resolve_config, subsample_conditions,
                                 subsample_study, weight_line_export)
from beamforge.io_cli.config import RunConfig
from beamforge.validation import ConfigurationError

# a micro footprint for the plane-wave study: every stage exercised, nothing
# at production scale
MICRO_COMPARE = {
    "geometry.preset": "",
    "geometry.elements": "16",
    "geometry.pitch_m": "0.0003",
    "phantom.extent_m": "-0.003,0.003,0.012,0.022",
    "phantom.density_mm2": "8.0",
    "phantom.noise_std": "200.0",
    "grid.extent_m": "-0.0025,0.0025,0.014,0.020",
    "grid.grid_x": "21",
    "grid.grid_z": "23",
    "eval_grid.extent_m": "-0.0025,0.0025,0.015,0.019",
    "eval_grid.grid_x": "51",
    "eval_grid.grid_z": "41",
    "train.frames": "6",
    "train.epochs": "2",
    "eval.frames": "4",
    "mv.subaperture": "8",
}

MICRO_SUBSAMPLE = {
    "geometry.preset": "",
    "geometry.kind": "circular",
    "geometry.elements": "16",
    "geometry.pitch_m": "0.0003",
    "geometry.transmit_scheme": "synthetic_aperture:4:8",
    "phantom.density_mm2": "8.0",
    "phantom.noise_std": "0.0005",
    "grid.grid_x": "24",
    "grid.grid_z": "14",
    "train.frames": "6",
    "train.epochs": "2",
    "eval.frames": "4",
    "mv.subaperture": "4",
    "subsample.rates": "0.5",
}


def test_experiment_config_known_kinds():
    for kind in ("compare_pw", "subsample_sa", "pipeline"):
        config = experiment_config(kind)
        assert config.get_str("experiment.kind") == kind
    with pytest.raises(ConfigurationError, match="unknown experiment kind"):
        experiment_config("banana")


def test_experiment_config_overrides_and_stringifies():
    config = experiment_config("pipeline", {"seed": 7, "grid.grid_x": "9"})
    assert config.get_int("seed") == 7
    assert config.values["seed"] == "7"
    assert config.get_int("grid.grid_x") == 9


def test_resolve_config_fills_missing_defaults_only():
    partial = RunConfig({"experiment.kind": "pipeline", "seed": "3"})
    resolved = resolve_config(partial)
    assert resolved.get_int("seed") == 3
    assert resolved.get_str("geometry.preset") == "pw_64"


def test_phantom_from_config_kinds():
    base = {"phantom.extent_m": "-0.004,0.004,0.010,0.020",
            "phantom.density_mm2": "5.0", "seed": "0"}
    cyst = phantom_from_config(RunConfig({**base, "phantom.kind": "cyst",
                                          "phantom.cyst_m": "0.0,0.015,0.001"}))
    assert cyst.region("low") is not None
    speckle = phantom_from_config(RunConfig({**base, "phantom.kind": "speckle"}))
    assert speckle.positions.shape[1] == 2
    points = phantom_from_config(RunConfig({**base, "phantom.kind": "points",
                                            "phantom.points_m": "0.0,0.015",
                                            "phantom.amplitudes": "3.0"}))
    assert points.positions.shape == (1, 2)
    assert points.amplitudes[0] == 3.0
    with pytest.raises(ConfigurationError, match="unknown phantom kind"):
        phantom_from_config(RunConfig({**base, "phantom.kind": "wires"}))
    with pytest.raises(ConfigurationError, match="cx,cz,r"):
        phantom_from_config(RunConfig({**base, "phantom.kind": "cyst",
                                       "phantom.cyst_m": "0.0,0.015"}))


def test_method_summary_averages_and_skips_none():
    rows = [
        {"method": "das", "fwhm_lat_mm": 0.3, "fwhm_ax_mm": None, "cnr_db": None},
        {"method": "das", "fwhm_lat_mm": 0.5, "fwhm_ax_mm": None, "cnr_db": 4.0},
        {"method": "mv", "fwhm_lat_mm": None, "fwhm_ax_mm": None, "cnr_db": 6.0},
    ]
    summary = method_summary(rows)
    assert summary["das"]["fwhm_lat_mm"] == pytest.approx(0.4)
    assert summary["das"]["cnr_db"] == pytest.approx(4.0)
    assert "fwhm_ax_mm" not in summary["das"]
    assert summary["mv"] == {"cnr_db": 6.0}


def test_subsample_conditions_naming():
    config = experiment_config("subsample_sa", {"subsample.rates": "0.25,0.5"})
    names = list(subsample_conditions(config))
    assert names == ["full", "random_25", "deterministic_25",
                     "random_50", "deterministic_50"]
    assert subsample_conditions(config)["full"] is None


@pytest.fixture(scope="module")
def micro_compare_results(tmp_path_factory):
    out = tmp_path_factory.mktemp("compare")
    config = experiment_config("compare_pw", MICRO_COMPARE)
    return compare_beamformers(config, out_dir=str(out)), out


def test_compare_study_outputs(micro_compare_results):
    results, out = micro_compare_results
    rows = results["rows"]
    methods = {row["method"] for row in rows}
    assert methods == {"das_boxcar", "das_hanning", "imap_2", "mv", "ebmv", "able"}
    assert len(rows) == 4 * 6  # every held-out frame x every method
    # cyst frames carry CNR, point frames carry widths
    for row in rows:
        if row["kind"] == "cyst":
            assert row["cnr_db"] is not None and row["fwhm_lat_mm"] is None
    assert len(results["loss_history"]) == 2
    assert results["held_smsle_final"] > 0.0


def test_compare_study_files(micro_compare_results):
    _, out = micro_compare_results
    names = sorted(os.listdir(out))
    assert "metrics.csv" in names
    assert "training.csv" in names
    assert "smsle.csv" in names
    assert "able_model.bft" in names
    assert "resolved.cfg" in names
    assert any(name.endswith(".pgm") for name in names)
    header = (out / "metrics.csv").read_text().splitlines()[0]
    assert header == "frame,kind,method,fwhm_lat_mm,fwhm_ax_mm,cnr_db"
    smsle = (out / "smsle.csv").read_text().splitlines()
    assert smsle[0] == "held_smsle_initial,held_smsle_final,ratio"


def test_compare_reuses_pretrained_model(micro_compare_results):
    results, out = micro_compare_results
    config = experiment_config("compare_pw", MICRO_COMPARE)
    params = neural.load_params(str(out / "able_model.bft"))
    again = compare_beamformers(config, params=params,
                                dataset=results["dataset"])
    assert again["held_smsle_final"] == pytest.approx(
        results["held_smsle_final"], rel=1e-12)
    assert again["loss_history"] == []


def test_weight_line_export_shape(micro_compare_results):
    results, _ = micro_compare_results
    frame = results["dataset"].eval_records[-1].frame
    n = frame.data.shape[-1]
    text = weight_line_export(results["params"], frame, frame.grid.shape[1] // 2)
    lines = text.strip().split("\n")
    assert len(lines) == 1 + frame.grid.shape[0]  # header + one row per x
    assert lines[0].split(",")[0] == "lateral_m"
    for line in lines:
        assert len(line.split(",")) == n + 1
    parsed = [float(cell) for cell in lines[1].split(",")]
    assert parsed[0] == pytest.approx(frame.grid.ax0[0])
    with pytest.raises(ConfigurationError, match="line index"):
        weight_line_export(results["params"], frame, frame.grid.shape[1])


@pytest.fixture(scope="module")
def micro_subsample_results(tmp_path_factory):
    out = tmp_path_factory.mktemp("subsample")
    config = experiment_config("subsample_sa", MICRO_SUBSAMPLE)
    return subsample_study(config, out_dir=str(out)), out


def test_subsample_study_conditions(micro_subsample_results):
    results, _ = micro_subsample_results
    conditions = results["conditions"]
    assert set(conditions) == {"full", "random_50", "deterministic_50"}
    for name, values in conditions.items():
        assert values["held_smsle"] > 0.0
        assert np.isfinite(values["cnr_db"])
        assert values["point_db"] <= 0.0
        assert len(values["frames"]) == 4
        # per-frame rows carry exactly one metric each
        for frame_row in values["frames"]:
            if frame_row["kind"] == "cyst":
                assert frame_row["cnr_db"] is not None
                assert frame_row["point_db"] is None
            else:
                assert frame_row["point_db"] is not None


def test_subsample_study_files(micro_subsample_results):
    _, out = micro_subsample_results
    names = sorted(os.listdir(out))
    assert "subsample.csv" in names
    assert "model_full.bft" in names
    assert "model_random_50.bft" in names
    assert "model_deterministic_50.bft" in names
    lines = (out / "subsample.csv").read_text().splitlines()
    assert lines[0] == "condition,frame,kind,held_smsle,cnr_db,point_db"
    assert len(lines) == 1 + 3 * 4  # three conditions x four frames


def test_subsample_masked_conditions_use_two_stage_models(micro_subsample_results):
    results, out = micro_subsample_results
    params = neural.load_params(str(out / "model_random_50.bft"))
    assert isinstance(params, neural.TwoStageParams)
    # 50% of the 8-element receive aperture stays active
    assert params.stage1.input_width == 4


def test_pipeline_micro(tmp_path):
    overrides = {
        "geometry.preset": "",
        "geometry.elements": "16",
        "geometry.pitch_m": "0.0003",
        "phantom.extent_m": "-0.003,0.003,0.012,0.022",
        "phantom.density_mm2": "8.0",
        "phantom.cyst_m": "0.0,0.017,0.0012",
        "grid.extent_m": "-0.0025,0.0025,0.0155,0.0185",
        "grid.grid_x": "31",
        "grid.grid_z": "27",
        "mv.subaperture": "8",
    }
    config = experiment_config("pipeline", overrides)
    results = pipeline(config, out_dir=str(tmp_path))
    assert [row["method"] for row in results["rows"]] == [
        "das_boxcar", "das_hanning", "imap", "mv", "ebmv"]
    for row in results["rows"]:
        assert np.isfinite(row["cnr_db"])
    names = sorted(os.listdir(tmp_path))
    for method in ("das_boxcar", "das_hanning", "imap", "mv", "ebmv"):
        assert f"frame_{method}.pgm" in names
    assert "metrics.csv" in names
    assert "resolved.cfg" in names


def test_compare_dataset_batches_align(micro_compare_results):
    results, _ = micro_compare_results
    dataset = results["dataset"]
    assert len(dataset.train_batches) == 6
    assert len(dataset.eval_batches) == 4
    for record, (inputs, target) in zip(dataset.train_records,
                                        dataset.train_batches):
        assert inputs.shape[0] == target.size
        assert inputs.shape == (record.frame.grid.shape[0]
                                * record.frame.grid.shape[1], 16)
