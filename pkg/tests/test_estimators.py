import numpy as np
import pytest
from sklearn.base import clone

from elastipath.estimators import (CostTransformer, CurvaturePriorTransformer,
                                   ElasticaTracker, OrientationScoreTransformer)
from elastipath.pipeline import ValidationError, synth_benchmark


def tube_image(n=64):
    img = np.zeros((n, n))
    img[:, n // 2 - 3: n // 2 + 3] = 1.0
    return img


class TestTransformers:
    def test_cost_transformer(self):
        t = CostTransformer(alpha=3.0, n_theta=36)
        psi = t.fit(tube_image()).transform(tube_image())
        assert psi.grid.shape == (64, 64, 36)
        assert psi.values.min() > 0

    def test_orientation_score_transformer(self):
        t = OrientationScoreTransformer(n_theta=24)
        sc = t.fit(tube_image()).transform(tube_image())
        assert sc.values.min() >= 0

    def test_prior_transformer(self):
        seg = tube_image() >= 0.5
        t = CurvaturePriorTransformer(n_theta=24)
        om = t.fit(seg).transform(seg)
        assert om.grid.n_theta == 24
        assert np.abs(om.values).max() <= 0.2  # straight tube: tiny curvature
        assert t.prior_maps_ is not None

    def test_get_set_params_clone(self):
        t = ElasticaTracker(beta=2.0, alpha=4.0)
        params = t.get_params()
        assert params["beta"] == 2.0
        t2 = clone(t)
        assert t2.alpha == 4.0
        t2.set_params(beta=6.0)
        assert t2.beta == 6.0

    def test_input_validation(self):
        with pytest.raises(ValidationError):
            CostTransformer().fit(np.zeros((3, 3, 3)))
        with pytest.raises(ValidationError):
            CurvaturePriorTransformer().fit(np.full((4, 4), 0.7))


class TestTracker:
    def test_fit_predict_round_trip(self):
        inst = synth_benchmark(2, [0.0], families=("u_turn",))[0]
        est = ElasticaTracker(beta=4.5, alpha=4.0, prior_enabled=False,
                              n_theta=72, step=0.5)
        est.fit(inst.image)
        paths = est.predict([
            {"source": inst.source, "target": inst.target,
             "theta_source": inst.theta_source, "theta_target": inst.theta_target},
        ])
        assert len(paths) == 1
        p = paths[0]
        assert np.hypot(*(p.physical[0] - np.array(inst.source))) <= 2.5
        assert np.hypot(*(p.physical[-1] - np.array(inst.target))) <= 2.5

    def test_predict_requires_fit(self):
        est = ElasticaTracker()
        with pytest.raises(Exception):
            est.predict([((1, 1), (2, 2))])

    def test_fit_with_segmentation_builds_prior(self):
        inst = synth_benchmark(2, [0.0], families=("u_turn",))[0]
        est = ElasticaTracker(beta=4.5, n_theta=36)
        est.fit(inst.image, segmentation=inst.clean > 0.5)
        assert est.omega_ is not None
        assert np.abs(est.omega_.values).max() > 0.01
