"""Desk-scale ultrasound beamforming toolkit.

Simulation of raw channel data, time-of-flight focusing, classic and
adaptive beamformers (delay-and-sum, iMAP, minimum variance, eigenspace
MV), a from-scratch learned-apodization network with its training loop,
image-quality metrics, per-pixel operation-count models, deterministic
file formats, and scripted end-to-end studies.

The submodules mirror the processing pipeline: :mod:`beamforge.geometry`
(arrays, grids, focusing), :mod:`beamforge.simulate` (phantoms, channel
data, subsampling masks), :mod:`beamforge.beamform`, :mod:`beamforge.neural`
and :mod:`beamforge.train` (the learned beamformer), :mod:`beamforge.metrics`,
:mod:`beamforge.complexity`, :mod:`beamforge.io_cli` (containers, configs,
rendering, command line), :mod:`beamforge.evalsuite` (studies), and
:mod:`beamforge.estimators` (scikit-learn style wrappers).
"""

from .beamform import (ApodizationMap, BeamformedImage, MVConfig, das, ebmv_weights,
                       imap, imap_estimate, mv_beamform, mv_weights,
                       smoothed_covariance, window_vector)
from .complexity import (FlopReport, able_widths, flops_able, flops_ebmv, flops_imap,
                         flops_lower_bound_inversion, flops_mv, report, sweep,
                         sweep_csv)
from .estimators import (DelayAndSum, IterativeMap, LearnedApodization,
                         MinimumVariance)
from .geometry import (ArrayGeometry, FocusedFrame, ImagingGrid, PlaneWave,
                       RawChannelData, SyntheticAperture, cartesian_grid,
                       circular_array, focus, geometry_from_config, grid_from_config,
                       linear_array, polar_grid, preset, time_of_flight)
from .metrics import (MetricError, RegionSpec, beam_profile, cnr, cnr_regions,
                      envelope, fwhm, point_resolution)
from .neural import (MLPParams, TwoStageParams, able_beamform, antirectifier,
                     compact_active_channels, forward, layer_shapes, load_params,
                     save_params, two_stage_beamform)
from .simulate import (Phantom, Region, SubsampleScheme, frame_mask, make_mask,
                       make_speckle_phantom, point_phantom, simulate_channels)
# The training entry point lives at ``beamforge.train.train``; re-exporting
# it here would shadow the ``beamforge.train`` submodule with the function.
from .train import (AdamState, LossConfig, TrainingResult, evaluate_smsle, smsle,
                    total_loss, unity_penalty)
from .validation import ConfigurationError, ContainerFormatError

__version__ = "0.1.0"

__all__ = [
    "ApodizationMap", "ArrayGeometry", "AdamState", "BeamformedImage",
    "ConfigurationError", "ContainerFormatError", "DelayAndSum", "FlopReport",
    "FocusedFrame", "ImagingGrid", "IterativeMap", "LearnedApodization",
    "LossConfig", "MLPParams", "MVConfig", "MetricError", "MinimumVariance",
    "Phantom", "PlaneWave", "RawChannelData", "Region", "RegionSpec",
    "SubsampleScheme", "SyntheticAperture", "TrainingResult", "TwoStageParams",
    "able_beamform", "able_widths", "antirectifier", "beam_profile",
    "cartesian_grid", "circular_array", "cnr", "cnr_regions",
    "compact_active_channels", "das", "ebmv_weights", "envelope",
    "evaluate_smsle", "flops_able", "flops_ebmv", "flops_imap",
    "flops_lower_bound_inversion", "flops_mv", "focus", "forward", "frame_mask",
    "fwhm", "geometry_from_config", "grid_from_config", "imap", "imap_estimate",
    "layer_shapes", "linear_array", "load_params", "make_mask",
    "make_speckle_phantom", "mv_beamform", "mv_weights", "point_phantom",
    "point_resolution", "polar_grid", "preset", "report", "save_params",
    "simulate_channels", "smoothed_covariance", "smsle", "sweep", "sweep_csv",
    "time_of_flight", "total_loss", "two_stage_beamform",
    "unity_penalty", "window_vector",
]
