"""scikit-learn style wrappers around the functional core."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .burst_stats import RunningStats, DEFAULT_THRESHOLDS, fit_sensor_law, model_maps, report
from .errors import ShapeMismatchError
from .noise_model import SensorNoiseParams
from .stokes import PolarQuad, StokesVector, acquire, props, reconstruct

__all__ = ["StokesTransformer", "SensorNoiseRegressor", "BurstNoiseAnalyzer"]


def _check_groups(n_features: int, width: int):
    if n_features == 0 or n_features % width:
        raise ShapeMismatchError(f"expected a multiple of {width} features, got {n_features}")


class StokesTransformer(TransformerMixin, BaseEstimator):
    """Rows of angle intensities ``[I0, I45, I90, I135]*k`` to Stokes or DoLP/AoLP.

    Parameters
    ----------
    output : {"stokes", "props"}
        ``"stokes"`` gives ``[s0, s1, s2]`` per group, ``"props"`` gives
        ``[dolp, aolp, s_pol]`` with NaN where undefined.
    """

    def __init__(self, output="stokes"):
        self.output = output

    def fit(self, X, y=None):
        X = check_array(X, dtype=np.float64)
        _check_groups(X.shape[1], 4)
        if self.output not in ("stokes", "props"):
            raise ValueError(f"unknown output {self.output!r}")
        self.n_features_in_ = X.shape[1]
        return self

    def transform(self, X):
        check_is_fitted(self, "n_features_in_")
        X = check_array(X, dtype=np.float64)
        if X.shape[1] != self.n_features_in_:
            raise ShapeMismatchError(f"fitted with {self.n_features_in_} features, got {X.shape[1]}")
        g = X.reshape(X.shape[0], -1, 4)
        s = reconstruct(PolarQuad(g[..., 0], g[..., 1], g[..., 2], g[..., 3]))
        if self.output == "stokes":
            out = np.stack([s.s0, s.s1, s.s2], axis=-1)
        else:
            p = props(s, on_degenerate="nan")
            out = np.stack([p.dolp, p.aolp, p.s_pol], axis=-1)
        return out.reshape(X.shape[0], -1)

    def inverse_transform(self, X):
        if self.output != "stokes":
            raise ValueError("inverse_transform needs output='stokes'")
        X = check_array(X, dtype=np.float64)
        _check_groups(X.shape[1], 3)
        g = X.reshape(X.shape[0], -1, 3)
        return acquire(StokesVector(g[..., 0], g[..., 1], g[..., 2])).as_array().reshape(X.shape[0], -1)


class SensorNoiseRegressor(RegressorMixin, BaseEstimator):
    """Fits ``sigma_v^2 = s0 * sigma_s^2 + 2 * sigma_r^2``.

    ``X`` is one column of ``s0``; ``y`` the measured Stokes noise variance.
    """

    def __init__(self, iterations=3):
        self.iterations = iterations

    def fit(self, X, y):
        X = check_array(X, dtype=np.float64)
        if X.shape[1] != 1:
            raise ShapeMismatchError("X must have a single s0 column")
        y = check_array(np.asarray(y).reshape(-1, 1), dtype=np.float64).ravel()
        if y.shape[0] != X.shape[0]:
            raise ShapeMismatchError("X and y lengths differ")
        self.params_ = fit_sensor_law(X[:, 0], y, self.iterations)
        self.sigma_s_sq_ = self.params_.sigma_s_sq
        self.sigma_r_sq_ = self.params_.sigma_r_sq
        self.n_features_in_ = 1
        return self

    def predict(self, X):
        check_is_fitted(self, "params_")
        X = check_array(X, dtype=np.float64)
        return np.maximum(X[:, 0], 0.0) * self.sigma_s_sq_ + 2.0 * self.sigma_r_sq_


class BurstNoiseAnalyzer(BaseEstimator):
    """Streaming burst statistics with model-based quality maps.

    ``partial_fit`` takes ``N x H x W x C`` (or one ``H x W x C`` frame) and
    may be called repeatedly; ``transform`` returns ``H x W x G x 3`` maps of
    DoLP bias, DoLP std and AoLP std (radians).

    Parameters
    ----------
    noise_source, n_frames, saturation, threads
        Passed to :func:`polarnoise.burst_stats.model_maps`.
    sensor : tuple (sigma_s_sq, sigma_r_sq), optional
        Known sensor law, used when ``noise_source="sensor"``.
    """

    def __init__(self, noise_source=None, n_frames=None, sensor=None, saturation=None, threads=None):
        self.noise_source = noise_source
        self.n_frames = n_frames
        self.sensor = sensor
        self.saturation = saturation
        self.threads = threads

    def partial_fit(self, X, y=None):
        X = np.asarray(X, dtype=np.float64)
        if X.ndim == 3:
            X = X[None]
        if X.ndim != 4:
            raise ShapeMismatchError(f"expected N x H x W x C frames, got {X.shape}")
        _check_groups(X.shape[-1], 4)
        if not hasattr(self, "stats_"):
            self.stats_ = RunningStats()
        self.stats_.update_batch(X)
        self.maps_ = None
        return self

    def fit(self, X, y=None):
        for attr in ("stats_", "maps_"):
            if hasattr(self, attr):
                delattr(self, attr)
        return self.partial_fit(X)

    def pixel_stats(self):
        check_is_fitted(self, "stats_")
        # model_maps decides whether a single frame is enough
        return self.stats_.finalize(require_variance=False)

    def maps(self):
        check_is_fitted(self, "stats_")
        if getattr(self, "maps_", None) is None:
            p = SensorNoiseParams(*self.sensor) if self.sensor is not None else None
            self.maps_ = model_maps(
                self.pixel_stats(),
                p,
                noise_source=self.noise_source,
                n_frames=self.n_frames,
                saturation=self.saturation,
                threads=self.threads,
            )
        return self.maps_

    def transform(self, X=None):
        m = self.maps()
        return np.stack([m.dolp_bias, m.dolp_std, m.aolp_std], axis=-1)

    def report(self, thresholds=DEFAULT_THRESHOLDS, **kwargs):
        return report(self.maps(), thresholds, **kwargs)
