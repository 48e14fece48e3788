"""Scikit-learn style wrappers so the tracker composes with pipelines.

The transformers turn images/segmentations into lifted fields; the tracker
follows the fit/predict idiom: ``fit`` ingests an image (and an optional
segmentation for the curvature prior), ``predict`` maps endpoint pairs to
geodesic paths.  Hyperparameters go through ``get_params``/``set_params`` as
usual, so grid search and cloning work out of the box.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .cost import cost_from_score, orientation_score_oof
from .grid import ScalarField
from .pipeline import TrackingConfig, ValidationError, build_fields, track
from .prior import prior_from_segmentation


def validate_image(X) -> np.ndarray:
    """2-D finite float array, [ix, iy] indexed."""
    a = np.asarray(X, dtype=np.float64)
    if a.ndim != 2:
        raise ValidationError(f"expected a 2-D image, got shape {a.shape}")
    if not np.isfinite(a).all():
        raise ValidationError("image contains non-finite values")
    return a


def validate_binary(X) -> np.ndarray:
    a = np.asarray(X)
    if a.dtype != bool:
        if not np.all(np.isin(np.unique(a), (0, 1))):
            raise ValidationError("segmentation must be binary")
        a = a.astype(bool)
    if a.ndim != 2:
        raise ValidationError(f"expected a 2-D segmentation, got shape {a.shape}")
    return a


class OrientationScoreTransformer(TransformerMixin, BaseEstimator):
    """Image -> multi-scale oriented-flux orientation score."""

    def __init__(self, scales=(2.0, 3.0, 4.0), n_theta=72, h_x=1.0):
        self.scales = scales
        self.n_theta = n_theta
        self.h_x = h_x

    def fit(self, X, y=None):
        validate_image(X)
        self.fitted_ = True
        return self

    def transform(self, X):
        return orientation_score_oof(validate_image(X), scales=self.scales,
                                     n_theta=self.n_theta, h_x=self.h_x)


class CostTransformer(TransformerMixin, BaseEstimator):
    """Image -> strictly positive orientation-dependent cost field."""

    def __init__(self, alpha=3.0, scales=(2.0, 3.0, 4.0), n_theta=72, h_x=1.0):
        self.alpha = alpha
        self.scales = scales
        self.n_theta = n_theta
        self.h_x = h_x

    def fit(self, X, y=None):
        validate_image(X)
        self.fitted_ = True
        return self

    def transform(self, X) -> ScalarField:
        score = orientation_score_oof(validate_image(X), scales=self.scales,
                                      n_theta=self.n_theta, h_x=self.h_x)
        return cost_from_score(score, self.alpha)


class CurvaturePriorTransformer(TransformerMixin, BaseEstimator):
    """Binary segmentation -> curvature prior field on the lifted grid."""

    def __init__(self, n_theta=72, h_x=1.0, u_max=10.0, min_len=10, window=5):
        self.n_theta = n_theta
        self.h_x = h_x
        self.u_max = u_max
        self.min_len = min_len
        self.window = window

    def fit(self, X, y=None):
        validate_binary(X)
        self.fitted_ = True
        return self

    def transform(self, X) -> ScalarField:
        from .grid import make_grid
        seg = validate_binary(X)
        grid = make_grid(seg.shape[0], seg.shape[1], self.n_theta, self.h_x)
        maps = prior_from_segmentation(seg, grid, min_len=self.min_len,
                                       window=self.window, u_max=self.u_max)
        self.prior_maps_ = maps
        return maps.omega


class ElasticaTracker(BaseEstimator):
    """Curvature-prior geodesic tracker with a fit/predict interface.

    fit(image, segmentation=...) builds the cost field (and, when
    ``prior_enabled`` and a segmentation is given, the curvature prior);
    predict(endpoint pairs) returns one geodesic path per pair.
    """

    def __init__(self, beta=4.5, alpha=3.0, prior_enabled=True, L=5, eps=0.1,
                 n_theta=72, h_x=1.0, u_max=10.0, min_len=10, window=5,
                 scales=(2.0, 3.0, 4.0), step=None):
        self.beta = beta
        self.alpha = alpha
        self.prior_enabled = prior_enabled
        self.L = L
        self.eps = eps
        self.n_theta = n_theta
        self.h_x = h_x
        self.u_max = u_max
        self.min_len = min_len
        self.window = window
        self.scales = scales
        self.step = step

    def _config(self) -> TrackingConfig:
        return TrackingConfig(
            beta=self.beta, alpha=self.alpha, L=self.L, eps=self.eps,
            n_theta=self.n_theta, h_x=self.h_x, prior_enabled=self.prior_enabled,
            u_max=self.u_max, min_len=self.min_len, window=self.window,
            scales=tuple(self.scales), step=self.step,
        ).validate()

    def fit(self, X, y=None, segmentation=None):
        image = validate_image(X)
        seg = validate_binary(segmentation) if segmentation is not None else None
        psi, omega, maps = build_fields(self._config(), image=image,
                                        segmentation=seg)
        self.psi_ = psi
        self.omega_ = omega
        self.prior_maps_ = maps
        self.grid_ = psi.grid
        return self

    def predict(self, endpoints):
        """endpoints: iterable of (source_xy, target_xy) or dicts with angles."""
        check_is_fitted(self, "psi_")
        cfg = self._config()
        paths = []
        for ep in endpoints:
            if isinstance(ep, dict):
                res = track(cfg, psi=self.psi_, omega=self.omega_,
                            source=ep["source"], target=ep["target"],
                            theta_source=ep.get("theta_source"),
                            theta_target=ep.get("theta_target"))
            else:
                src, tgt = ep
                res = track(cfg, psi=self.psi_, omega=self.omega_,
                            source=src, target=tgt)
            paths.append(res.path)
            self.last_report_ = res.report
        return paths
