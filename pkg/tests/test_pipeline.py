import json
import math

import numpy as np
import pytest

from elastipath.grid import ScalarField, make_grid
from elastipath.pipeline import (FAMILIES, TrackingConfig, ValidationError,
                                 estimate_endpoint_angle, jaccard,
                                 render_overlay, synth_benchmark, track)
from elastipath.solver import UnreachableTargetError


class TestConfig:
    def test_yaml_round_trip(self):
        cfg = TrackingConfig(beta=6.0, alpha=4.0, prior_enabled=False,
                             scales=(2.0, 3.0))
        text = cfg.to_yaml()
        back = TrackingConfig.from_yaml(text)
        assert back == cfg

    def test_unknown_keys_rejected(self):
        with pytest.raises(ValidationError):
            TrackingConfig.from_yaml("beta: 1.0\nbogus: 3\n")

    @pytest.mark.parametrize("field,value", [("beta", -1.0), ("alpha", 0.0),
                                             ("L", 0), ("eps", 1.5),
                                             ("n_theta", 1), ("h_x", 0.0)])
    def test_invalid_values(self, field, value):
        cfg = TrackingConfig()
        setattr(cfg, field, value)
        with pytest.raises(ValidationError):
            cfg.validate()


class TestEndpointAngle:
    def grid_cost(self):
        g = make_grid(12, 12, 72, 1.0)
        return g, ScalarField.full(g, 1.0)

    def test_unique_minimum(self):
        g, psi = self.grid_cost()
        psi.values[5, 5, 10] = 0.2
        assert estimate_endpoint_angle(psi, (5.0, 5.0)) == pytest.approx(
            10 * 2 * math.pi / 72)

    def test_constant_ties_to_zero(self):
        g, psi = self.grid_cost()
        assert estimate_endpoint_angle(psi, (5.0, 5.0)) == 0.0

    def test_restricted_to_half_circle(self):
        g, psi = self.grid_cost()
        psi.values[5, 5, 40] = 0.1   # below-pi slices only are searched
        psi.values[5, 5, 20] = 0.5
        assert estimate_endpoint_angle(psi, (5.0, 5.0)) == pytest.approx(
            20 * 2 * math.pi / 72)


class TestJaccard:
    def test_identical(self):
        line = np.column_stack([np.linspace(10, 90, 120), np.full(120, 40.0)])
        assert jaccard(line, line, shape=(100, 80), radius=6) == 1.0

    def test_disjoint(self):
        a = np.column_stack([np.linspace(10, 90, 120), np.full(120, 15.0)])
        b = np.column_stack([np.linspace(10, 90, 120), np.full(120, 60.0)])
        assert jaccard(a, b, shape=(100, 80), radius=6) == 0.0

    def test_offset_by_radius_matches_strip_overlap(self):
        # long parallel tubes offset by exactly one radius; on the pixel grid
        # the strips span 13 rows each, overlap 7 and cover 19, so the
        # analytic rectangle-overlap ratio of the rasterized strips is 7/19
        n, L = 400, 380.0
        a = np.column_stack([np.linspace(10, 10 + L, n), np.full(n, 40.0)])
        b = a + [0.0, 6.0]
        js = jaccard(a, b, shape=(400, 90), radius=6)
        assert js == pytest.approx(7.0 / 19.0, rel=0.03)

    def test_validation(self):
        line = np.column_stack([np.linspace(0, 9, 10), np.zeros(10)])
        with pytest.raises(ValidationError):
            jaccard(line, line[:1], shape=(10, 10))
        with pytest.raises(ValidationError):
            jaccard(line, line, shape=(10, 10), radius=0.0)


class TestSynthBenchmark:
    def test_deterministic(self):
        a = synth_benchmark(7, [0.0, 0.15])
        b = synth_benchmark(7, [0.0, 0.15])
        assert len(a) == len(b)
        for x, y in zip(a, b):
            assert x.name == y.name
            assert np.array_equal(x.image, y.image)
            assert np.array_equal(x.truth, y.truth)

    def test_zero_noise_is_clean(self):
        inst = synth_benchmark(0, [0.0], families=("u_turn",))[0]
        vals = np.unique(inst.image)
        assert len(vals) <= 3  # background, structure, interloper shades

    def test_levels_linear(self):
        levels = np.linspace(0.0, 0.15, 16)
        assert levels[1] - levels[0] == pytest.approx(0.01)
        inst = synth_benchmark(0, levels, families=("wave",))
        assert [i.noise for i in inst] == pytest.approx(list(levels))

    def test_all_families_present(self):
        inst = synth_benchmark(0, [0.0])
        assert {i.family for i in inst} == set(FAMILIES)

    def test_endpoints_on_truth(self):
        for inst in synth_benchmark(3, [0.0]):
            assert inst.source == tuple(inst.truth[0])
            assert inst.target == tuple(inst.truth[-1])
            assert 0 <= min(inst.source) and max(inst.source) < inst.image.shape[0]


class TestTrack:
    def test_straight_trivial(self):
        g = make_grid(61, 31, 72, 1.0)
        psi = ScalarField.full(g, 1.0)
        cfg = TrackingConfig(beta=1.35, prior_enabled=False)
        res = track(cfg, psi=psi, source=(10.0, 15.0), target=(50.0, 15.0),
                    theta_source=0.0, theta_target=0.0)
        dev = np.abs(res.path.physical[:, 1] - 15.0).max()
        assert dev <= 2.0

    def test_endpoint_validation(self):
        g = make_grid(30, 30, 36, 1.0)
        psi = ScalarField.full(g, 1.0)
        cfg = TrackingConfig()
        with pytest.raises(ValidationError):
            track(cfg, psi=psi, source=(-4.0, 5.0), target=(10.0, 10.0))

    def test_requires_input(self):
        with pytest.raises(ValidationError):
            track(TrackingConfig(), source=(0, 0), target=(1, 1))

    def test_classical_baseline_identical_to_zero_prior(self):
        # prior_enabled=False must match an explicit all-zero prior bit-level
        from elastipath.solver import SeedSet, solve
        g = make_grid(41, 41, 36, 1.0)
        rng = np.random.default_rng(0)
        psi = ScalarField(g, 0.5 + rng.uniform(0, 1, g.shape))
        seeds = SeedSet.zeros([(20, 20, 3)])
        d1, _ = solve(g, psi, None, 2.0, seeds)
        d2, _ = solve(g, psi, ScalarField.full(g, 0.0), 2.0, seeds)
        assert np.array_equal(d1.values, d2.values)

    def test_reproducible(self):
        inst = synth_benchmark(1, [0.02], families=("u_turn",))[0]
        cfg = TrackingConfig(beta=4.5, alpha=3.0, prior_enabled=False)
        r1 = track(cfg, image=inst.image, source=inst.source, target=inst.target,
                   theta_source=inst.theta_source, theta_target=inst.theta_target)
        r2 = track(cfg, image=inst.image, source=inst.source, target=inst.target,
                   theta_source=inst.theta_source, theta_target=inst.theta_target)
        assert np.array_equal(r1.path.points, r2.path.points)

    def test_unreachable_reported_distinctly(self, monkeypatch):
        import elastipath.pipeline as pl

        def fake_solve(grid, *a, **k):
            from elastipath.solver import SolveReport
            dist = ScalarField.full(grid, np.inf, allow_inf=True)
            return dist, SolveReport(accepted_count=0, reached_target=None,
                                     target_value=None, wall_time=0.0)

        monkeypatch.setattr(pl, "solve", fake_solve)
        g = make_grid(30, 30, 36, 1.0)
        psi = ScalarField.full(g, 1.0)
        with pytest.raises(UnreachableTargetError):
            track(TrackingConfig(prior_enabled=False), psi=psi,
                  source=(5.0, 5.0), target=(25.0, 25.0),
                  theta_source=0.0, theta_target=0.0)


class TestOverlay:
    def test_renders_png(self):
        img = np.zeros((40, 30))
        poly = np.column_stack([np.linspace(5, 35, 50), np.full(50, 15.0)])
        im = render_overlay(img, [(poly, (255, 0, 0))],
                            endpoints=[(5, 15, 0.0), (35, 15, None, (0, 0, 255))])
        assert im.size == (40, 30)
        px = np.asarray(im)
        assert (px[:, :, 0] > 200).any()  # path drawn


class TestShortcutContrast:
    def test_prior_tracks_where_classical_shortcuts(self):
        # strongly bent tube under heavy noise: the plain bending penalty
        # abandons the turn while the matched-curvature prior holds it
        levels = np.linspace(0.0, 0.15, 8)
        inst = synth_benchmark(0, levels, size=112, families=("u_turn",))[-1]
        assert inst.noise == pytest.approx(0.15)
        seg = inst.clean > 0.5
        scores = {}
        for variant, prior in (("prior", True), ("classical", False)):
            cfg = TrackingConfig(beta=6.0, alpha=3.0, prior_enabled=prior,
                                 step=0.25)
            res = track(cfg, image=inst.image,
                        segmentation=seg if prior else None,
                        source=inst.source, target=inst.target,
                        theta_source=inst.theta_source,
                        theta_target=inst.theta_target)
            scores[variant] = jaccard(res.path, inst.truth, radius=6.0)
        assert scores["prior"] >= 0.85
        assert scores["classical"] <= 0.6
