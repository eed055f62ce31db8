"""Scripted end-to-end studies tying the whole toolkit together.

Three reproducible experiments, each driven by a flat key=value config and
writing its resolved settings next to its outputs:

- :func:`compare_beamformers` — simulate plane-wave speckle/cyst and point
  frames, train the learned apodization network against eigenspace-MV
  targets, then tabulate CNR and lateral/axial FWHM for delay-and-sum
  (boxcar and Hanning), iMAP, MV, eigenspace MV, and the trained network
  on shared held-out frames, with a log-compressed image per method.
- :func:`subsample_study` — train the two-stage network on ring-array
  synthetic-aperture frames under full, random, and deterministic channel
  subsampling at several rates, and report held-out error, cyst CNR, and
  point-target visibility per condition.
- :func:`pipeline` — the classic beamformers on one configured frame, for
  quick smoke runs.

Every stage (phantoms, noise, masks, initialization, training) is seeded
from the config, so rerunning a config byte-reproduces its artifacts.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, replace

import numpy as np

from . import beamform, neural
from . import train as training
from .geometry import cartesian_grid, focus, geometry_from_config, grid_from_config
from .io_cli.config import RunConfig
from .io_cli.render import render
from .metrics import MetricError, RegionSpec, cnr_regions, envelope, point_resolution
from .simulate import (SubsampleScheme, frame_mask, make_speckle_phantom,
                       point_phantom, simulate_channels)
from .validation import ConfigurationError

# Defaults for the plane-wave comparison study. The training grid is coarse
# (training cost scales with pixel count); held-out frames use a finer grid
# so the width of a point response is resolved by several samples.
COMPARE_DEFAULTS = {
    "experiment.kind": "compare_pw",
    "seed": "0",
    "geometry.preset": "pw_64",
    "phantom.extent_m": "-0.005,0.005,0.010,0.024",
    "phantom.density_mm2": "30.0",
    "phantom.noise_std": "1500.0",
    "grid.kind": "cartesian",
    "grid.extent_m": "-0.0045,0.0045,0.012,0.022",
    "grid.grid_x": "61",
    "grid.grid_z": "67",
    "eval_grid.kind": "cartesian",
    "eval_grid.extent_m": "-0.0038,0.0038,0.015,0.019",
    "eval_grid.grid_x": "153",
    "eval_grid.grid_z": "101",
    "point_grid.margin_m": "0.0008",
    "point_grid.spacing_lat_m": "5e-05",
    "point_grid.spacing_ax_m": "4e-05",
    "point_grid.cluster_half_m": "0.0012",
    "train.frames": "64",
    "train.epochs": "50",
    "train.mix": "0.9",
    "train.log_floor": "0.0001",
    "train.learning_rate": "0.001",
    "train.dropout": "0.1",
    "eval.frames": "16",
    "eval.log_floor": "1e-08",
    "eval.dynamic_range_db": "60.0",
    "mv.subaperture": "32",
    "mv.loading": "0.02",
    "mv.eigen_fraction": "0.5",
}

# Defaults for the synthetic-aperture subsampling study on the ring array.
SUBSAMPLE_DEFAULTS = {
    "experiment.kind": "subsample_sa",
    "seed": "0",
    "geometry.preset": "sa_32",
    "phantom.extent_m": "-0.0048,0.0048,-0.0048,0.0048",
    "phantom.density_mm2": "15.0",
    "phantom.noise_std": "0.0005",
    "phantom.clear_radius_m": "0.0012",
    "grid.kind": "polar",
    "grid.extent_m": "-3.141592653589793,3.141592653589793,0.0016,0.0044",
    "grid.grid_x": "96",
    "grid.grid_z": "56",
    "train.frames": "64",
    "train.epochs": "30",
    "train.mix": "0.9",
    "train.log_floor": "0.001",
    "train.learning_rate": "0.001",
    "train.dropout": "0.1",
    "eval.frames": "16",
    "eval.log_floor": "1e-08",
    "eval.dynamic_range_db": "60.0",
    "mv.subaperture": "32",
    "mv.loading": "0.01",
    "mv.eigen_fraction": "0.5",
    "subsample.rates": "0.25,0.5",
    "subsample.seed": "0",
}

# Defaults for the single-frame classic-beamformer pipeline.
PIPELINE_DEFAULTS = {
    "experiment.kind": "pipeline",
    "seed": "0",
    "geometry.preset": "pw_64",
    "phantom.kind": "cyst",
    "phantom.extent_m": "-0.005,0.005,0.010,0.024",
    "phantom.density_mm2": "30.0",
    "phantom.noise_std": "0.001",
    "phantom.cyst_m": "0.0,0.017,0.0012",
    "grid.kind": "cartesian",
    "grid.extent_m": "-0.0038,0.0038,0.015,0.019",
    "grid.grid_x": "77",
    "grid.grid_z": "51",
    "imap.iterations": "2",
    "mv.subaperture": "32",
    "mv.loading": "0.01",
    "mv.eigen_fraction": "0.5",
    "eval.dynamic_range_db": "60.0",
}

_DEFAULTS = {
    "compare_pw": COMPARE_DEFAULTS,
    "subsample_sa": SUBSAMPLE_DEFAULTS,
    "pipeline": PIPELINE_DEFAULTS,
}


def experiment_config(kind, overrides=None):
    """Config for one experiment kind with defaults filled in."""
    if kind not in _DEFAULTS:
        raise ConfigurationError(
            f"unknown experiment kind {kind!r}; expected one of {sorted(_DEFAULTS)}")
    values = dict(_DEFAULTS[kind])
    for key, value in (overrides or {}).items():
        values[key] = str(value)
    return RunConfig(values)


def resolve_config(config):
    """Fill defaults for the config's ``experiment.kind`` into a copy."""
    kind = config.get_str("experiment.kind")
    return experiment_config(kind, config.values)


def _mv_config(config):
    return beamform.MVConfig(
        subaperture_length=config.get_int("mv.subaperture"),
        diagonal_loading=config.get_float("mv.loading"),
        eigen_fraction=config.get_float("mv.eigen_fraction"))


def _loss_config(config, floor_key):
    return training.LossConfig(mix=config.get_float("train.mix"),
                               log_floor=config.get_float(floor_key))


# ---------------------------------------------------------------------------
# frame synthesis


@dataclass(eq=False)
class FrameRecord:
    """One simulated frame plus the ground truth needed to score it."""

    frame: object       # FocusedFrame
    phantom: object
    kind: str           # "cyst" or "points"
    points: np.ndarray  # scatterer positions for point frames, else empty


def _simulate_record(phantom, geom, grid, kind, noise_std, noise_seed):
    raw = simulate_channels(phantom, geom, noise_std=noise_std, rng_seed=noise_seed)
    frame = focus(raw, geom, grid)
    points = phantom.positions if kind == "points" else np.empty((0, 2))
    return FrameRecord(frame, phantom, kind, points)


def phantom_from_config(config, seed_tag=401):
    """Phantom described by the ``phantom.`` config keys.

    ``phantom.kind`` selects ``cyst`` (speckle around one anechoic disk,
    ``phantom.cyst_m`` = cx,cz,r), plain ``speckle``, or ``points``
    (``phantom.points_m`` = flattened x,z pairs with ``phantom.amplitudes``).
    """
    kind = config.get_str("phantom.kind", "cyst")
    extent = config.get_floats("phantom.extent_m")
    if kind == "points":
        points = np.asarray(config.get_floats("phantom.points_m")).reshape(-1, 2)
        return point_phantom(points, config.get_floats("phantom.amplitudes"), extent)
    cysts = []
    if kind == "cyst":
        cyst = config.get_floats("phantom.cyst_m")
        if len(cyst) != 3:
            raise ConfigurationError("phantom.cyst_m needs cx,cz,r")
        cysts = [tuple(cyst)]
    elif kind != "speckle":
        raise ConfigurationError(f"unknown phantom kind {kind!r}")
    clear_radius = config.get_float("phantom.clear_radius_m", 0.0)
    return make_speckle_phantom(
        extent, config.get_float("phantom.density_mm2"), cyst_regions=cysts,
        rng_seed=[config.get_int("seed"), seed_tag],
        clear_disks=[(0.0, 0.0, clear_radius)] if clear_radius > 0 else [])


def _point_patch_grid(config, points):
    """Dense local grid hugging a point cluster.

    A full-extent grid would spend >99% of its pixels on empty background,
    drowning the mainlobe pixels (the ones that teach resolution) out of the
    per-frame loss average; a tight patch keeps them a sizable fraction.
    """
    margin = config.get_float("point_grid.margin_m")
    d_lat = config.get_float("point_grid.spacing_lat_m")
    d_ax = config.get_float("point_grid.spacing_ax_m")
    lat_lo, lat_hi = points[:, 0].min() - margin, points[:, 0].max() + margin
    ax_lo, ax_hi = points[:, 1].min() - margin, points[:, 1].max() + margin
    n_lat = min(99, int(round((lat_hi - lat_lo) / d_lat)) + 1)
    n_ax = min(99, int(round((ax_hi - ax_lo) / d_ax)) + 1)
    return cartesian_grid((lat_lo, lat_hi), (ax_lo, ax_hi), max(n_lat, 9), max(n_ax, 9))


def _pw_train_record(config, geom, grid, fine_grid, index):
    """Training frame ``index``: cyst speckle twice out of three, else points.

    Point frames are imaged on a dense patch around the point cluster so the
    mainlobe and near sidelobes are both finely sampled and a meaningful
    share of the frame's pixels.
    """
    seed = config.get_int("seed")
    extent = config.get_floats("phantom.extent_m")
    noise = config.get_float("phantom.noise_std")
    draw = np.random.default_rng([seed, 101, index])
    if index % 3 != 2:
        cyst = (draw.uniform(-0.0008, 0.0008), draw.uniform(0.016, 0.0185),
                draw.uniform(0.0010, 0.0014))
        phantom = make_speckle_phantom(extent, config.get_float("phantom.density_mm2"),
                                       cyst_regions=[cyst], rng_seed=[seed, 102, index])
        return _simulate_record(phantom, geom, grid, "cyst", noise, [seed, 103, index])
    count = int(draw.integers(4, 9))
    # cluster the points inside a small window so the dense patch that hugs
    # them keeps its nominal spacing (a spread-out cluster would force the
    # capped patch to coarsen and undersample the mainlobe transition band)
    half = config.get_float("point_grid.cluster_half_m")
    center_lat = draw.uniform(fine_grid.ax0[0] + half, fine_grid.ax0[-1] - half)
    center_ax = draw.uniform(fine_grid.ax1[0] + half, fine_grid.ax1[-1] - half)
    points = np.column_stack([center_lat + draw.uniform(-half, half, count),
                              center_ax + draw.uniform(-half, half, count)])
    amps = 40.0 * draw.uniform(0.5, 2.0, count)
    phantom = point_phantom(points, amps, extent)
    patch = _point_patch_grid(config, points)
    return _simulate_record(phantom, geom, patch, "points", noise, [seed, 103, index])


def _pw_eval_record(config, geom, grid, index, total):
    """Held-out frame ``index``: fixed cyst, single points, or a point row.

    The first half are speckle frames with one canonical cyst (contrast);
    the rest hold a lone strong point for width measurements, except the
    last, which holds a lateral row of points for weight-map inspection.
    """
    seed = config.get_int("seed")
    extent = config.get_floats("phantom.extent_m")
    noise = config.get_float("phantom.noise_std")
    if index < total // 2:
        phantom = make_speckle_phantom(extent, config.get_float("phantom.density_mm2"),
                                       cyst_regions=[(0.0, 0.017, 0.0012)],
                                       rng_seed=[seed, 202, index])
        kind = "cyst"
    elif index == total - 1:
        xs = np.array([-0.003, -0.0015, 0.0, 0.0015, 0.003])
        points = np.column_stack([xs, np.full(xs.size, 0.017)])
        phantom = point_phantom(points, np.full(xs.size, 40.0), extent)
        kind = "points"
    else:
        lateral = 0.001 * (((index * 37) % 16) - 8) / 8.0
        phantom = point_phantom([[lateral, 0.017]], [40.0], extent)
        kind = "points"
    return _simulate_record(phantom, geom, grid, kind, noise, [seed, 203, index])


@dataclass(eq=False)
class StudyDataset:
    """Training and held-out frames plus their target images and batches.

    The batch lists pair each frame with its flattened target image: for the
    plane-wave study as ready-to-train ``(inputs, target)`` arrays, for the
    subsampling study as ``(record, target)`` so inputs can be re-extracted
    under each mask.
    """

    geometry: object
    train_records: list
    eval_records: list
    train_batches: list
    eval_batches: list
    targets: list  # held-out target images, aligned with eval_records


def _ebmv_target(record, mv_cfg):
    image, _ = beamform.mv_beamform(record.frame, mv_cfg, eigen=True)
    return image.data


def build_compare_dataset(config):
    """Plane-wave frames and eigenspace-MV targets for the comparison study."""
    geom = geometry_from_config(config.section("geometry"))
    train_grid = grid_from_config(config.section("grid"))
    eval_grid = grid_from_config(config.section("eval_grid"))
    mv_cfg = _mv_config(config)
    n = geom.aperture_size

    train_records = [_pw_train_record(config, geom, train_grid, eval_grid, i)
                     for i in range(config.get_int("train.frames"))]
    n_eval = config.get_int("eval.frames")
    eval_records = [_pw_eval_record(config, geom, eval_grid, i, n_eval)
                    for i in range(n_eval)]

    train_batches = [(r.frame.data.reshape(-1, n), _ebmv_target(r, mv_cfg).reshape(-1))
                     for r in train_records]
    targets = [_ebmv_target(r, mv_cfg) for r in eval_records]
    eval_batches = [(r.frame.data.reshape(-1, n), t.reshape(-1))
                    for r, t in zip(eval_records, targets)]
    return StudyDataset(geom, train_records, eval_records,
                        train_batches, eval_batches, targets)


def train_compare_model(config, dataset):
    """Train the single-stage network on the comparison dataset.

    Returns ``(result, held_smsle_initial, held_smsle_final)``; the held-out
    errors always use the evaluation log floor, regardless of the (larger)
    floor used to condition training.
    """
    seed = config.get_int("seed")
    rng = np.random.default_rng([seed, 301])
    params = neural.MLPParams.init(dataset.geometry.aperture_size, rng,
                                   dropout=config.get_float("train.dropout"))
    eval_cfg = _loss_config(config, "eval.log_floor")
    initial = training.evaluate_smsle(params, dataset.eval_batches, eval_cfg)
    result = training.train(dataset.train_batches, params,
                            epochs=config.get_int("train.epochs"),
                            seed=[seed, 302],
                            cfg=_loss_config(config, "train.log_floor"),
                            learning_rate=config.get_float("train.learning_rate"))
    final = training.evaluate_smsle(result.params, dataset.eval_batches, eval_cfg)
    return result, initial, final


# ---------------------------------------------------------------------------
# scoring and reporting


def _csv_cell(value, fmt="{:.6g}"):
    return "" if value is None else fmt.format(value)


def _score_record(image, record, unit=1e-3):
    """(fwhm_lat, fwhm_ax, cnr) for one image; None where undefined.

    Widths are reported in units of ``unit`` (default mm) for Cartesian
    grids; on polar grids the lateral width is left in radians.
    """
    env = envelope(image.data)
    fwhm_lat = fwhm_ax = cnr_db = None
    if record.kind == "cyst":
        spec = RegionSpec(record.phantom.region("low"), record.phantom.region("high"))
        cnr_db = cnr_regions(env, image.grid, spec)
    elif record.kind == "points" and len(record.points) == 1:
        through = _grid_coordinates(image.grid, record.points[0])
        lat, ax = point_resolution(env, image.grid, through)
        scale_lat = unit if image.grid.kind == "cartesian" else 1.0
        fwhm_lat, fwhm_ax = lat / scale_lat, ax / unit
    return fwhm_lat, fwhm_ax, cnr_db


def _grid_coordinates(grid, point):
    """Map a Cartesian scatterer position into the grid's own axes."""
    if grid.kind == "cartesian":
        return float(point[0]), float(point[1])
    radius = math.hypot(point[0], point[1])
    return math.atan2(point[0], point[1]), radius


def _render_images(out_dir, label, images, dynamic_range):
    for method, image in images.items():
        render(envelope(image.data), dynamic_range,
               os.path.join(out_dir, f"{label}_{method}.pgm"))


def _write_text(path, text):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


def compare_beamformers(config=None, out_dir=None, dataset=None, params=None):
    """Run the full plane-wave comparison study.

    Simulates the dataset (unless one is passed in), trains the learned
    apodization network (or evaluates pretrained ``params``), then scores
    every method on every held-out frame. When ``out_dir`` is given, writes
    ``metrics.csv`` (one row per frame and method), ``training.csv``,
    ``smsle.csv``, one PGM image per held-out frame and method, the trained
    model, and the resolved config. Returns a results dict with the trained
    parameters, metric rows, and held-out errors.
    """
    config = resolve_config(config or experiment_config("compare_pw"))
    dataset = dataset or build_compare_dataset(config)
    if params is None:
        result, held_initial, held_final = train_compare_model(config, dataset)
        params = result.params
        history = result.loss_history
        history_csv = result.history_csv()
    else:
        held_initial, history, history_csv = None, [], "epoch,loss\n"
        held_final = training.evaluate_smsle(params, dataset.eval_batches,
                                             _loss_config(config, "eval.log_floor"))
    mv_cfg = _mv_config(config)
    dynamic_range = config.get_float("eval.dynamic_range_db")
    if out_dir:
        os.makedirs(out_dir, exist_ok=True)

    rows = []
    for index, record in enumerate(dataset.eval_records):
        images = {
            "das_boxcar": beamform.das(record.frame, "boxcar")[0],
            "das_hanning": beamform.das(record.frame, "hanning")[0],
            "imap_2": beamform.imap(record.frame, iterations=2),
            "mv": beamform.mv_beamform(record.frame, mv_cfg)[0],
            "ebmv": beamform.mv_beamform(record.frame, mv_cfg, eigen=True)[0],
            "able": neural.able_beamform(params, record.frame)[0],
        }
        for method, image in images.items():
            fwhm_lat, fwhm_ax, cnr_db = _score_record(image, record)
            rows.append({"frame": index, "kind": record.kind, "method": method,
                         "fwhm_lat_mm": fwhm_lat, "fwhm_ax_mm": fwhm_ax,
                         "cnr_db": cnr_db})
        if out_dir:
            _render_images(out_dir, f"frame{index:02d}", images, dynamic_range)

    if out_dir:
        lines = ["frame,kind,method,fwhm_lat_mm,fwhm_ax_mm,cnr_db"]
        lines += [f"{r['frame']},{r['kind']},{r['method']},"
                  f"{_csv_cell(r['fwhm_lat_mm'])},{_csv_cell(r['fwhm_ax_mm'])},"
                  f"{_csv_cell(r['cnr_db'])}" for r in rows]
        _write_text(os.path.join(out_dir, "metrics.csv"), "\n".join(lines) + "\n")
        _write_text(os.path.join(out_dir, "training.csv"), history_csv)
        ratio = None if held_initial is None else held_final / held_initial
        _write_text(os.path.join(out_dir, "smsle.csv"),
                    "held_smsle_initial,held_smsle_final,ratio\n"
                    f"{_csv_cell(held_initial, '{!r}')},{held_final!r},"
                    f"{_csv_cell(ratio, '{!r}')}\n")
        neural.save_params(os.path.join(out_dir, "able_model.bft"), params)
        config.save(os.path.join(out_dir, "resolved.cfg"))

    return {"config": config, "dataset": dataset, "params": params,
            "loss_history": history, "rows": rows,
            "held_smsle_initial": held_initial, "held_smsle_final": held_final}


def method_summary(rows):
    """Per-method means of every defined metric over the frame rows."""
    summary = {}
    for row in rows:
        entry = summary.setdefault(row["method"], {})
        for key in ("fwhm_lat_mm", "fwhm_ax_mm", "cnr_db"):
            if row[key] is not None:
                entry.setdefault(key, []).append(row[key])
    return {method: {key: float(np.mean(values)) for key, values in entry.items()}
            for method, entry in summary.items()}


def weight_line_export(params, frame, line_index):
    """CSV of the network's per-pixel weights along one lateral line.

    ``line_index`` indexes the axial (second) grid axis. The table has one
    row per lateral position and ``N + 1`` columns: the lateral coordinate
    followed by the N channel weights at that pixel.
    """
    n1 = frame.grid.shape[1]
    if not 0 <= line_index < n1:
        raise ConfigurationError(f"line index {line_index} outside 0..{n1 - 1}")
    weights = neural.forward(params, frame.data[:, line_index, :], training=False)
    header = "lateral_m," + ",".join(f"w{i:03d}" for i in range(weights.shape[1]))
    lines = [header]
    for x, row in zip(frame.grid.ax0, weights):
        lines.append(",".join([repr(float(x))] + [repr(float(v)) for v in row]))
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# synthetic-aperture subsampling study


def _sa_train_record(config, geom, grid, index):
    seed = config.get_int("seed")
    extent = config.get_floats("phantom.extent_m")
    noise = config.get_float("phantom.noise_std")
    clear = [(0.0, 0.0, config.get_float("phantom.clear_radius_m"))]
    draw = np.random.default_rng([seed, 111, index])
    if index % 3 != 2:
        angle = draw.uniform(-math.pi, math.pi)
        radius = draw.uniform(0.0023, 0.0037)
        cyst = (radius * math.sin(angle), radius * math.cos(angle),
                draw.uniform(0.0006, 0.00095))
        phantom = make_speckle_phantom(extent, config.get_float("phantom.density_mm2"),
                                       cyst_regions=[cyst], rng_seed=[seed, 112, index],
                                       clear_disks=clear)
        kind = "cyst"
    else:
        count = int(draw.integers(3, 7))
        angles = draw.uniform(-math.pi, math.pi, count)
        radii = draw.uniform(0.002, 0.004, count)
        points = np.column_stack([radii * np.sin(angles), radii * np.cos(angles)])
        amps = 40.0 * draw.uniform(0.5, 2.0, count)
        phantom = point_phantom(points, amps, extent)
        kind = "points"
    return _simulate_record(phantom, geom, grid, kind, noise, [seed, 113, index])


def _sa_eval_record(config, geom, grid, index, total):
    seed = config.get_int("seed")
    extent = config.get_floats("phantom.extent_m")
    noise = config.get_float("phantom.noise_std")
    clear = [(0.0, 0.0, config.get_float("phantom.clear_radius_m"))]
    if index < total // 2:
        phantom = make_speckle_phantom(extent, config.get_float("phantom.density_mm2"),
                                       cyst_regions=[(0.0, 0.003, 0.0008)],
                                       rng_seed=[seed, 212, index], clear_disks=clear)
        kind = "cyst"
    else:
        angle = 2.0 * math.pi * (index + 0.5) / total - math.pi
        phantom = point_phantom([[0.003 * math.sin(angle), 0.003 * math.cos(angle)]],
                                [40.0], extent)
        kind = "points"
    return _simulate_record(phantom, geom, grid, kind, noise, [seed, 213, index])


def build_subsample_dataset(config):
    """Ring-array synthetic-aperture frames with eigenspace-MV targets."""
    geom = geometry_from_config(config.section("geometry"))
    grid = grid_from_config(config.section("grid"))
    mv_cfg = _mv_config(config)

    train_records = [_sa_train_record(config, geom, grid, i)
                     for i in range(config.get_int("train.frames"))]
    n_eval = config.get_int("eval.frames")
    eval_records = [_sa_eval_record(config, geom, grid, i, n_eval)
                    for i in range(n_eval)]

    train_targets = [_ebmv_target(r, mv_cfg).reshape(-1) for r in train_records]
    targets = [_ebmv_target(r, mv_cfg) for r in eval_records]
    return StudyDataset(geom, train_records, eval_records,
                        list(zip(train_records, train_targets)),
                        list(zip(eval_records, [t.reshape(-1) for t in targets])),
                        targets)


def _masked_frame(record, scheme, geom):
    """The record's frame as acquired under a subsampling mask."""
    if scheme is None:
        return record.frame
    mask = frame_mask(scheme, geom)
    return replace(record.frame, data=record.frame.data * mask, mask=mask)


def _two_stage_batches(records_with_targets, scheme, geom):
    batches = []
    for record, target in records_with_targets:
        frame = _masked_frame(record, scheme, geom)
        inputs = neural.compact_active_channels(frame)
        batches.append((inputs.reshape(-1, *inputs.shape[-2:]), target))
    return batches


def subsample_conditions(config):
    """Named subsampling schemes for the study: full plus each kind/rate."""
    seed = config.get_int("subsample.seed")
    conditions = {"full": None}
    for rate in config.get_floats("subsample.rates"):
        label = f"{int(round(100 * rate))}"
        conditions[f"random_{label}"] = SubsampleScheme("random", rate, seed)
        conditions[f"deterministic_{label}"] = SubsampleScheme("deterministic", rate, seed)
    return conditions


def _point_visibility_db(image, record):
    """Envelope at the point target in dB relative to the frame peak."""
    env = envelope(image.data)
    through = _grid_coordinates(image.grid, record.points[0])
    i = int(np.argmin(np.abs(image.grid.ax0 - through[0])))
    j = int(np.argmin(np.abs(image.grid.ax1 - through[1])))
    window = env[max(0, i - 2):i + 3, max(0, j - 2):j + 3]
    peak = float(np.max(env))
    if peak <= 0.0:
        raise MetricError("empty image has no visible point")
    return 20.0 * math.log10(max(float(np.max(window)), 1e-300) / peak)


def subsample_study(config=None, out_dir=None, dataset=None):
    """Train and score the two-stage network under channel subsampling.

    One training run per condition (full aperture plus every scheme/rate
    pair) on a shared dataset; targets always come from the full aperture.
    Reports per-frame cyst CNR and point visibility plus each condition's
    held-out error (and their mean/worst-case summaries), and with
    ``out_dir`` writes ``subsample.csv`` (one row per condition and frame),
    per-condition images of the first held-out cyst and point frames, each
    trained model, and the resolved config.
    """
    config = resolve_config(config or experiment_config("subsample_sa"))
    dataset = dataset or build_subsample_dataset(config)
    geom = dataset.geometry
    eval_cfg = _loss_config(config, "eval.log_floor")
    dynamic_range = config.get_float("eval.dynamic_range_db")
    if out_dir:
        os.makedirs(out_dir, exist_ok=True)

    seed = config.get_int("seed")
    results = {}
    for name, scheme in subsample_conditions(config).items():
        train_batches = _two_stage_batches(dataset.train_batches, scheme, geom)
        eval_batches = _two_stage_batches(dataset.eval_batches, scheme, geom)
        active = train_batches[0][0].shape[-1]
        params = neural.TwoStageParams.init(
            active, geom.num_transmits, np.random.default_rng([seed, 311]),
            dropout=config.get_float("train.dropout"))
        result = training.train(train_batches, params,
                                epochs=config.get_int("train.epochs"),
                                seed=[seed, 312],
                                cfg=_loss_config(config, "train.log_floor"),
                                learning_rate=config.get_float("train.learning_rate"))
        held = training.evaluate_smsle(result.params, eval_batches, eval_cfg)

        frames, first_images = [], {}
        for index, record in enumerate(dataset.eval_records):
            frame = _masked_frame(record, scheme, geom)
            image = neural.two_stage_beamform(result.params, frame)
            cnr_db = point_db = None
            if record.kind == "cyst":
                spec = RegionSpec(record.phantom.region("low"),
                                  record.phantom.region("high"))
                cnr_db = cnr_regions(envelope(image.data), image.grid, spec)
                first_images.setdefault("cyst", image)
            else:
                point_db = _point_visibility_db(image, record)
                first_images.setdefault("point", image)
            frames.append({"frame": index, "kind": record.kind,
                           "cnr_db": cnr_db, "point_db": point_db})
        results[name] = {
            "held_smsle": held,
            "cnr_db": float(np.mean([f["cnr_db"] for f in frames
                                     if f["cnr_db"] is not None])),
            "point_db": float(np.min([f["point_db"] for f in frames
                                      if f["point_db"] is not None])),
            "frames": frames,
            "loss_history": result.loss_history,
            "params": result.params,
        }
        if out_dir:
            _render_images(out_dir, name, first_images, dynamic_range)
            neural.save_params(os.path.join(out_dir, f"model_{name}.bft"), result.params)

    if out_dir:
        lines = ["condition,frame,kind,held_smsle,cnr_db,point_db"]
        for name, r in results.items():
            lines += [f"{name},{f['frame']},{f['kind']},{r['held_smsle']!r},"
                      f"{_csv_cell(f['cnr_db'])},{_csv_cell(f['point_db'])}"
                      for f in r["frames"]]
        _write_text(os.path.join(out_dir, "subsample.csv"), "\n".join(lines) + "\n")
        config.save(os.path.join(out_dir, "resolved.cfg"))
    return {"config": config, "dataset": dataset, "conditions": results}


# ---------------------------------------------------------------------------
# single-frame pipeline


def pipeline(config=None, out_dir=None):
    """Simulate one cyst frame and run every classic beamformer on it.

    Writes (under ``out_dir``) a PGM per method, ``metrics.csv`` with the
    cyst CNR per method, and the resolved config. Returns the images and
    metric rows.
    """
    config = resolve_config(config or experiment_config("pipeline"))
    geom = geometry_from_config(config.section("geometry"))
    grid = grid_from_config(config.section("grid"))
    phantom = phantom_from_config(config)
    kind = "cyst" if config.get_str("phantom.kind", "cyst") == "cyst" else "points"
    record = _simulate_record(phantom, geom, grid, kind,
                              config.get_float("phantom.noise_std"),
                              [config.get_int("seed"), 402])
    mv_cfg = _mv_config(config)
    images = {
        "das_boxcar": beamform.das(record.frame, "boxcar")[0],
        "das_hanning": beamform.das(record.frame, "hanning")[0],
        "imap": beamform.imap(record.frame, config.get_int("imap.iterations")),
        "mv": beamform.mv_beamform(record.frame, mv_cfg)[0],
        "ebmv": beamform.mv_beamform(record.frame, mv_cfg, eigen=True)[0],
    }
    rows = []
    for method, image in images.items():
        _, _, cnr_db = _score_record(image, record)
        rows.append({"method": method, "cnr_db": cnr_db})
    if out_dir:
        os.makedirs(out_dir, exist_ok=True)
        _render_images(out_dir, "frame", images,
                       config.get_float("eval.dynamic_range_db"))
        lines = ["method,cnr_db"] + [f"{r['method']},{_csv_cell(r['cnr_db'])}" for r in rows]
        _write_text(os.path.join(out_dir, "metrics.csv"), "\n".join(lines) + "\n")
        config.save(os.path.join(out_dir, "resolved.cfg"))
    return {"config": config, "record": record, "images": images, "rows": rows}
