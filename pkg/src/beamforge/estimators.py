"""Scikit-learn style estimators wrapping the beamformers.

Every estimator consumes a :class:`~beamforge.geometry.FocusedFrame` (or a
raw (n0, n1, N) array of focused vectors) in ``transform`` and returns the
beamformed RF image as an ndarray. The classic beamformers are stateless
transformers; the learned one is fitted on (frames, target images) pairs.
Parameters follow the ``get_params``/``set_params`` convention, so the
estimators compose with scikit-learn model selection utilities.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from . import beamform, neural, train
from .geometry import FocusedFrame
from .validation import ConfigurationError


def _frame_data(frame):
    if isinstance(frame, FocusedFrame):
        return frame.data
    data = np.asarray(frame, dtype=np.float64)
    if data.ndim != 3:
        raise ConfigurationError("expected a FocusedFrame or (n0, n1, N) array")
    return data


def _as_frame(frame):
    if isinstance(frame, FocusedFrame):
        return frame
    data = _frame_data(frame)
    from .geometry import ImagingGrid

    grid = ImagingGrid("cartesian", np.arange(data.shape[0], dtype=float),
                       np.arange(data.shape[1], dtype=float))
    n = data.shape[-1]
    return FocusedFrame(data, grid, np.zeros(n, dtype=int), np.arange(n))


class DelayAndSum(BaseEstimator, TransformerMixin):
    """Fixed-window delay-and-sum beamformer."""

    def __init__(self, window="boxcar"):
        self.window = window

    def fit(self, X=None, y=None):
        beamform.window_vector(self.window, 4)  # validate the window name
        return self

    def transform(self, X):
        image, _ = beamform.das(_as_frame(X), self.window)
        return image.data


class IterativeMap(BaseEstimator, TransformerMixin):
    """iMAP beamformer with a fixed iteration count."""

    def __init__(self, iterations=2):
        self.iterations = iterations

    def fit(self, X=None, y=None):
        if self.iterations < 1:
            raise ConfigurationError("iterations must be >= 1")
        return self

    def transform(self, X):
        return beamform.imap_estimate(_frame_data(X), self.iterations)


class MinimumVariance(BaseEstimator, TransformerMixin):
    """Minimum-variance beamformer, optionally eigenspace-projected.

    After ``transform``, ``weights_`` holds the per-pixel subaperture
    weights of the last frame processed.
    """

    def __init__(self, subaperture_length=None, diagonal_loading=0.01,
                 eigen=False, eigen_fraction=0.5):
        self.subaperture_length = subaperture_length
        self.diagonal_loading = diagonal_loading
        self.eigen = eigen
        self.eigen_fraction = eigen_fraction

    def _config(self):
        return beamform.MVConfig(self.subaperture_length, self.diagonal_loading,
                                 self.eigen_fraction)

    def fit(self, X=None, y=None):
        self._config()
        return self

    def transform(self, X):
        image, apod = beamform.mv_beamform(_as_frame(X), self._config(), self.eigen)
        self.weights_ = apod.weights
        return image.data


class LearnedApodization(BaseEstimator):
    """Per-pixel apodization network trained against target images.

    ``fit(frames, targets)`` trains on per-frame batches (``frames`` is a
    sequence of (n0, n1, N) arrays or FocusedFrames, ``targets`` matching
    (n0, n1) RF images, typically from the eigenspace MV beamformer);
    ``predict`` beamforms a frame with the trained network. Attributes
    after fitting: ``params_`` (network parameters) and ``loss_history_``.
    """

    def __init__(self, epochs=50, seed=0, mix=0.9, learning_rate=0.001,
                 dropout=0.2):
        self.epochs = epochs
        self.seed = seed
        self.mix = mix
        self.learning_rate = learning_rate
        self.dropout = dropout

    def _dataset(self, frames, targets):
        batches = []
        for frame, target in zip(frames, targets):
            data = _frame_data(frame)
            n = data.shape[-1]
            target = np.asarray(target, dtype=np.float64)
            if target.shape != data.shape[:2]:
                raise ConfigurationError("target image dims do not match the frame")
            batches.append((data.reshape(-1, n), target.reshape(-1)))
        return batches

    def fit(self, frames, targets):
        batches = self._dataset(frames, targets)
        width = batches[0][0].shape[-1]
        rng = np.random.default_rng(self.seed)
        params = neural.MLPParams.init(width, rng, self.dropout)
        result = train.train(batches, params, self.epochs, self.seed + 1,
                             train.LossConfig(mix=self.mix),
                             self.learning_rate)
        self.params_ = result.params
        self.loss_history_ = result.loss_history
        return self

    def predict(self, X):
        if not hasattr(self, "params_"):
            raise ConfigurationError("estimator is not fitted")
        image, _ = neural.able_beamform(self.params_, _as_frame(X))
        return image.data

    def transform(self, X):
        return self.predict(X)
