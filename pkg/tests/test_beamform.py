"""DAS, iMAP, MV, and eigenspace-MV beamformers against closed-form oracles."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from beamforge.beamform import (ApodizationMap, BeamformedImage, MVConfig, das,
                                ebmv_weights, imap, imap_estimate, mv_beamform,
                                mv_weights, smoothed_covariance, window_vector)
from beamforge.geometry import FocusedFrame, cartesian_grid
from beamforge.validation import ConfigurationError


def _frame(data):
    data = np.asarray(data, dtype=np.float64)
    n0, n1, n = data.shape
    grid = cartesian_grid((-0.001, 0.001), (0.005, 0.007), n0, n1)
    return FocusedFrame(data, grid, np.zeros(n, dtype=int), np.arange(n))


def test_window_vectors():
    assert np.array_equal(window_vector("boxcar", 5), np.ones(5))
    hann = window_vector("hanning", 9)
    assert hann[0] == 0.0 and hann[-1] == 0.0
    assert hann[4] == pytest.approx(1.0)
    assert np.array_equal(hann, hann[::-1])
    tukey = window_vector("tukey", 9)
    assert tukey[4] == pytest.approx(1.0)
    with pytest.raises(ConfigurationError):
        window_vector("flattop", 8)


def test_das_boxcar_is_plain_sum():
    rng = np.random.default_rng(0)
    frame = _frame(rng.normal(size=(3, 4, 8)))
    image, apod = das(frame, "boxcar")
    assert np.allclose(image.data, frame.data.sum(axis=-1))
    assert image.source == "das_boxcar"
    assert apod.weights.shape == frame.data.shape
    assert np.all(apod.weights == 1.0)


def test_das_windowed_matches_manual_dot():
    rng = np.random.default_rng(1)
    frame = _frame(rng.normal(size=(2, 3, 16)))
    image, _ = das(frame, "hanning")
    w = window_vector("hanning", 16)
    assert np.allclose(image.data, frame.data @ w)


def test_imap_hand_case_one_iteration():
    # N=2, y=[1,1]: P0=2, sigma_x^2=4, sigma_n^2=1 -> P = 4/9 * 2 = 8/9
    assert imap_estimate(np.array([1.0, 1.0]), 1) == pytest.approx(8.0 / 9.0, abs=1e-12)


def test_imap_hand_case_two_iterations():
    # continuing: sigma_x^2=64/81, sigma_n^2=1/81 -> P = (64/129) * 2 = 128/129
    assert imap_estimate(np.array([1.0, 1.0]), 2) == pytest.approx(128.0 / 129.0, abs=1e-12)


def test_imap_zero_vector_stays_zero():
    assert imap_estimate(np.zeros(8), 3) == 0.0
    batch = imap_estimate(np.zeros((5, 8)), 2)
    assert np.array_equal(batch, np.zeros(5))


def test_imap_requires_iterations():
    with pytest.raises(ConfigurationError):
        imap_estimate(np.ones(4), 0)


def test_imap_shrinks_noisy_pixels_more():
    rng = np.random.default_rng(2)
    coherent = np.full(16, 2.0)
    noisy = rng.normal(0.0, 2.0, 16) + 0.25
    p_coh = imap_estimate(coherent, 2)
    p_noisy = imap_estimate(noisy, 2)
    assert abs(p_coh) / abs(coherent.sum()) > abs(p_noisy) / abs(noisy.sum())


def test_imap_frame_wrapper():
    rng = np.random.default_rng(3)
    frame = _frame(rng.normal(size=(3, 4, 8)))
    image = imap(frame, iterations=2)
    assert image.source == "imap_2"
    assert image.data.shape == (3, 4)
    assert np.allclose(image.data, imap_estimate(frame.data, 2))


def test_smoothed_covariance_oracle():
    r = smoothed_covariance(np.array([1.0, 2.0, 3.0]), 2)
    assert np.array_equal(r, np.array([[2.5, 4.0], [4.0, 6.5]]))


def test_smoothed_covariance_full_length_is_outer_product():
    y = np.array([1.0, -2.0, 0.5])
    r = smoothed_covariance(y, 3)
    assert np.allclose(r, np.outer(y, y))


def test_smoothed_covariance_is_positive_semidefinite():
    rng = np.random.default_rng(4)
    y = rng.normal(size=32)
    r = smoothed_covariance(y, 8)
    eigenvalues = np.linalg.eigvalsh(r)
    assert eigenvalues.min() >= -1e-12


def test_smoothed_covariance_length_validation():
    with pytest.raises(ConfigurationError):
        smoothed_covariance(np.ones(4), 5)
    with pytest.raises(ConfigurationError):
        smoothed_covariance(np.ones(4), 0)


def test_mv_weights_oracle():
    w = mv_weights(np.array([[2.0, 0.0], [0.0, 1.0]]), 0.0)
    assert np.allclose(w, [1.0 / 3.0, 2.0 / 3.0], atol=1e-12)


@settings(max_examples=50, deadline=None)
@given(st.integers(2, 12), st.integers(0, 10 ** 6), st.floats(0.0, 0.5))
def test_mv_weights_distortionless_property(length, seed, loading):
    rng = np.random.default_rng(seed)
    snaps = rng.normal(size=(length + 3, length))
    r = snaps.T @ snaps / snaps.shape[0]
    w = mv_weights(r, loading)
    assert abs(w.sum() - 1.0) < 1e-9


def test_mv_weights_uniform_fallback_on_zero_matrix():
    with pytest.warns(UserWarning, match="uniform"):
        w = mv_weights(np.zeros((4, 4)), 0.01)
    assert np.array_equal(w, np.full(4, 0.25))


def test_mv_weights_suppress_interference():
    # strong interferer along v: MV places a null there, boxcar does not
    rng = np.random.default_rng(5)
    v = rng.normal(size=8)
    v /= np.linalg.norm(v)
    snaps = np.outer(rng.normal(size=200) * 10.0, v) + rng.normal(size=(200, 8)) * 0.1
    r = snaps.T @ snaps / 200.0
    w = mv_weights(r, 0.0)
    assert abs(w @ v) < abs(np.full(8, 1 / 8) @ v) / 10


def test_ebmv_oracle_projects_onto_dominant_eigenvector():
    r = np.array([[2.0, 0.0], [0.0, 1.0]])
    w = ebmv_weights(r, 0.0, 0.5)  # keep ceil(0.5*2)=1 eigenvector -> e_x
    assert np.allclose(w, [1.0 / 3.0, 0.0], atol=1e-12)
    # projection is not renormalized: the weight sum drops below 1
    assert w.sum() == pytest.approx(1.0 / 3.0, abs=1e-12)


def test_ebmv_full_fraction_equals_mv():
    rng = np.random.default_rng(6)
    snaps = rng.normal(size=(20, 6))
    r = snaps.T @ snaps / 20.0
    assert np.allclose(ebmv_weights(r, 0.01, 1.0), mv_weights(r, 0.01), atol=1e-12)


def test_ebmv_fraction_validation():
    with pytest.raises(ConfigurationError):
        ebmv_weights(np.eye(4), 0.0, 0.0)
    with pytest.raises(ConfigurationError):
        ebmv_weights(np.eye(4), 0.0, 1.2)


def test_mv_config_validation():
    with pytest.raises(ConfigurationError):
        MVConfig(diagonal_loading=-0.1)
    with pytest.raises(ConfigurationError):
        MVConfig(eigen_fraction=0.0)
    assert MVConfig().resolve_length(64) == 32
    assert MVConfig(subaperture_length=16).resolve_length(64) == 16
    with pytest.raises(ConfigurationError):
        MVConfig(subaperture_length=65).resolve_length(64)


def _reference_mv_pixel(y, length, loading, fraction, eigen):
    """Scalar reference path: covariance -> weights -> subaperture mean."""
    r = smoothed_covariance(y, length)
    w = ebmv_weights(r, loading, fraction) if eigen else mv_weights(r, loading)
    snaps = np.lib.stride_tricks.sliding_window_view(y, length)
    return float(w @ snaps.mean(axis=0)), w


@pytest.mark.parametrize("eigen", [False, True])
def test_mv_beamform_matches_scalar_reference(eigen):
    rng = np.random.default_rng(7)
    frame = _frame(rng.normal(size=(4, 5, 16)))
    cfg = MVConfig(subaperture_length=8, diagonal_loading=0.05, eigen_fraction=0.5)
    image, apod = mv_beamform(frame, cfg, eigen=eigen)
    assert image.data.shape == (4, 5)
    assert apod.weights.shape == (4, 5, 8)
    assert image.source == ("ebmv" if eigen else "mv")
    for i, j in [(0, 0), (2, 3), (3, 4)]:
        p_ref, w_ref = _reference_mv_pixel(frame.data[i, j], 8, 0.05, 0.5, eigen)
        assert image.data[i, j] == pytest.approx(p_ref, rel=1e-10, abs=1e-12)
        assert np.allclose(apod.weights[i, j], w_ref, atol=1e-10)


def test_mv_beamform_constant_signal_maps_to_itself():
    frame = _frame(np.full((3, 3, 12), 2.5))
    cfg = MVConfig(subaperture_length=6, diagonal_loading=0.01)
    image, _ = mv_beamform(frame, cfg)
    assert np.allclose(image.data, 2.5, atol=1e-9)


def test_mv_beamform_zero_pixels_fall_back_with_warning():
    rng = np.random.default_rng(8)
    data = rng.normal(size=(2, 2, 12))
    data[0, 0] = 0.0
    frame = _frame(data)
    with pytest.warns(UserWarning, match="fallback"):
        image, apod = mv_beamform(frame, MVConfig(subaperture_length=6))
    assert image.data[0, 0] == 0.0
    assert np.allclose(apod.weights[0, 0], 1.0 / 6.0)


def test_beamformed_image_validation():
    grid = cartesian_grid((-0.001, 0.001), (0.005, 0.007), 3, 4)
    with pytest.raises(ConfigurationError):
        BeamformedImage(np.zeros((4, 3)), grid, "das")
    with pytest.raises(ValueError, match="non-finite"):
        BeamformedImage(np.full((3, 4), np.inf), grid, "das")
    ok = BeamformedImage(np.zeros((3, 4)), grid, "das", "abc")
    assert ok.geometry_hash == "abc"


def test_apodization_map_rejects_non_finite():
    with pytest.raises(ValueError, match="non-finite"):
        ApodizationMap(np.array([np.nan]), "das")
