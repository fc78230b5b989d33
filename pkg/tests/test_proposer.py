import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kneeloc.detector import synth_phantom
from kneeloc.detector.evaluation import iou
from kneeloc.detector.pipeline import annotation_in_leg, split_legs
from kneeloc.imagio import BoxPx, GrayImage
from kneeloc.proposer import (DegenerateProfileError, ProposerConfig, estimate_scales, generate,
                              margin_px, marginal_profile, peak_response, predict_count,
                              proposal_grid, select_y_candidates, x_grid, y_candidates)

from oracles import convolve_same_reference, profile_reference


def gray(arr):
    return GrayImage(np.asarray(arr, dtype=np.uint8), 8)


class TestProfile:
    def test_constant(self):
        prof = marginal_profile(gray(np.ones((10, 9))), 0.0)
        np.testing.assert_array_equal(prof, [3.0] * 10)

    def test_bright_row(self):
        arr = np.full((40, 12), 10)
        arr[23] = 200
        prof = marginal_profile(gray(arr), 0.1)
        assert np.argmax(prof) == 23 - 4
        assert np.sum(prof == prof.max()) == 1

    def test_matches_double_loop(self):
        arr = np.random.default_rng(5).integers(0, 256, (30, 40))
        prof = marginal_profile(gray(arr), 0.1)
        np.testing.assert_array_equal(prof, profile_reference(arr.tolist(), 3))

    def test_degenerate(self):
        with pytest.raises(DegenerateProfileError, match="degenerate profile"):
            marginal_profile(gray(np.zeros((12, 12))), 0.1, smooth_window=11)


class TestPeakResponse:
    def test_constant(self):
        assert not peak_response([7.0] * 20, 5).any()

    def test_ramp(self):
        out = peak_response(np.arange(30) * -2.5, 5)
        np.testing.assert_allclose(out[2:-3], 2.5)

    def test_step_matches_naive(self):
        step = [0.0] * 10 + [100.0] * 10
        out = peak_response(step, 3)
        deriv = [step[i + 1] - step[i] for i in range(19)] + [0.0]
        expect = [abs(v) for v in convolve_same_reference(deriv, 3)]
        np.testing.assert_allclose(out, expect)
        assert np.argmax(out) == 8
        np.testing.assert_allclose(out[8:11], [100 / 3] * 3)

    def test_length_preserved(self):
        assert len(peak_response(np.zeros(50), 11)) == 50

    @given(st.lists(st.floats(-1e4, 1e4), min_size=13, max_size=60), st.floats(-1e3, 1e3))
    def test_offset_invariant(self, prof, c):
        a = peak_response(prof, 11)
        b = peak_response(np.asarray(prof) + c, 11)
        np.testing.assert_allclose(a, b, atol=1e-8)


class TestSelect:
    def test_hand_ranked(self):
        resp = [5, 1, 9, 2, 8, 3, 7, 4, 6, 0]
        assert select_y_candidates(resp, 30, 1, 0) == [2, 4, 6]
        assert select_y_candidates(resp, 30, 1, 7) == [9, 11, 13]

    def test_exhaustive(self):
        resp = [5, 1, 9, 2, 8, 3, 7, 4, 6, 0]
        assert select_y_candidates(resp, 100, 1, 0) == [2, 4, 6, 8, 0, 7, 5, 3, 1, 9]

    def test_stride_exceeds_pool(self):
        assert select_y_candidates([5, 1, 9, 2, 8, 3], 50, 5, 0) == [2]

    def test_zero_pool_falls_back_to_argmax(self):
        assert select_y_candidates([1, 3, 2], 1, 1, 4) == [5]

    def test_ties_to_lower_index(self):
        assert select_y_candidates([1, 4, 4, 4], 50, 1, 0) == [1, 2]

    def test_position_ranking(self):
        resp = [5, 1, 9, 2, 8, 3, 7, 4, 6, 0]
        assert select_y_candidates(resp, 50, 2, 0, rank_by="position") == [0, 4, 8]

    @given(st.lists(st.floats(0, 100), min_size=1, max_size=80), st.floats(0.5, 100),
           st.integers(1, 12), st.integers(0, 50))
    def test_unique_and_in_range(self, resp, tau, k, alpha):
        out = select_y_candidates(resp, tau, k, alpha)
        assert len(set(out)) == len(out)
        assert all(alpha <= v < alpha + len(resp) for v in out)


class TestXGrid:
    def test_enumeration(self):
        assert x_grid(400, 100, 0.25) == [100, 200, 300]

    def test_single_step(self):
        assert x_grid(400, 500, 0.25) == [100]

    def test_clipped(self):
        assert x_grid(10, 1, 0.5) == [0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 9]


class TestScales:
    def test_two_annotations(self):
        anns = [(BoxPx(0, 0, 100, 100), 300), (BoxPx(0, 0, 100, 60), 500)]
        np.testing.assert_allclose(estimate_scales(anns), [4 - 2 ** 0.5, 4.0, 4 + 2 ** 0.5])

    def test_identical_gives_singleton(self):
        anns = [(BoxPx(0, 0, 50, 50), 200)] * 3
        assert estimate_scales(anns) == [4.0]

    def test_needs_two(self):
        with pytest.raises(ValueError):
            estimate_scales([(BoxPx(0, 0, 5, 5), 20)])


class TestGenerate:
    def test_product_and_order(self):
        arr = np.zeros((100, 40), np.uint8)
        arr[40:] = 200
        arr[70:] = 90
        cfg = ProposerConfig(alpha_frac=0.0, smooth_window=1, top_percent=2, peak_stride=1,
                             x_step=10, x_range_frac=0.25)
        props = generate(gray(arr), cfg)
        assert [p.center_y for p in props[::21]] == [39, 69]
        assert len(props) == 2 * 3 * 7 == predict_count(100, 40, cfg)
        assert [p.center_x for p in props[:21:7]] == [10, 20, 30]
        assert [p.scale for p in props[:7]] == sorted(cfg.scales)
        for p in props:
            assert p.box.w == p.box.h == p.side == int(np.floor(100 / p.scale + 0.5))

    def test_grid_matches_generate(self):
        img = gray(np.random.default_rng(0).integers(0, 256, (300, 200)))
        cfg = ProposerConfig(x_step=20)
        grid = proposal_grid(img, cfg)
        props = generate(img, cfg)
        assert grid.tolist() == [[p.box.x, p.box.y, p.side, p.center_x, p.center_y] for p in props]

    def test_deterministic(self):
        img = gray(np.random.default_rng(1).integers(0, 256, (200, 120)))
        assert generate(img) == generate(img)

    def test_offset_leaves_candidates(self):
        arr = np.random.default_rng(2).integers(0, 200, (400, 300))
        cfg = ProposerConfig()
        assert y_candidates(gray(arr), cfg) == y_candidates(gray(arr + 55), cfg)

    def test_phantom_has_good_proposal(self):
        img, ann = synth_phantom(3, 2400, 2000, joint_y_frac=0.47, joint_x_frac=0.52)
        left, _ = split_legs(img)
        truth = annotation_in_leg(ann, "left", img.width)
        best = max(iou(p.box, truth) for p in generate(left))
        assert best >= 0.8


class TestCount:
    def test_frozen_example(self):
        cfg = ProposerConfig(alpha_frac=0.0, top_percent=10, peak_stride=10, x_step=95)
        assert predict_count(2000, 2000, cfg) == 1540

    def test_exhaustive_limit(self):
        cfg = ProposerConfig(alpha_frac=0.1, top_percent=100, peak_stride=1, x_step=1,
                             x_range_frac=0.25, smooth_window=3)
        h, c = 50, 40
        alpha = margin_px(h, 0.1)
        assert predict_count(h, c, cfg) == 7 * (h - 2 * alpha) * (2 * 10 + 1)
        assert len(generate(gray(np.zeros((h, c))), cfg)) == predict_count(h, c, cfg)

    def test_single(self):
        cfg = ProposerConfig(scales=(4.0,), top_percent=1, peak_stride=50, x_step=1000,
                             smooth_window=3)
        assert predict_count(60, 30, cfg) == 1
        assert len(generate(gray(np.zeros((60, 30))), cfg)) == 1

    @settings(max_examples=40, deadline=None)
    @given(st.integers(40, 400), st.integers(8, 300), st.floats(0, 0.3), st.sampled_from([1, 3, 5]),
           st.integers(1, 15), st.floats(0.5, 100), st.integers(1, 120), st.floats(0.05, 0.5),
           st.integers(0, 2**31))
    def test_law(self, h, c, a, sw, k, tau, p, fr, seed):
        cfg = ProposerConfig(alpha_frac=a, smooth_window=sw, peak_stride=k, top_percent=tau,
                             x_step=p, x_range_frac=fr)
        arr = np.random.default_rng(seed).integers(0, 256, (h, c))
        assert len(generate(gray(arr), cfg)) == predict_count(h, c, cfg)


def test_config_json_round_trip():
    cfg = ProposerConfig(x_step=48, rank_by="position")
    assert ProposerConfig.from_dict(cfg.to_dict()) == cfg
    with pytest.raises(ValueError):
        ProposerConfig(smooth_window=4)
