import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from kneeloc import linsvm
from kneeloc.detector import (Annotation, Detection, annotation_in_leg, build_trainset, detect,
                              detect_batch, detect_leg, evaluate, iou, leg_box_to_image,
                              phantom_corpus, proposal_recall_sweep, split_legs, synth_phantom)
from kneeloc.detector.records import load_corpus, read_annotations, write_jsonl
from kneeloc.detector.training import leg_samples
from kneeloc.hog import HogConfig
from kneeloc.imagio import BoxPx, GrayImage, flip_horizontal, write_image
from kneeloc.proposer import (ProposerConfig, margin_px, marginal_profile, peak_response,
                              proposal_grid)

from oracles import iou_raster

boxes = st.builds(BoxPx, st.integers(-50, 50), st.integers(-50, 50), st.integers(1, 60),
                  st.integers(1, 60))


class TestIou:
    def test_examples(self):
        a = BoxPx(0, 0, 10, 10)
        assert iou(a, a) == 1.0
        assert iou(a, BoxPx(20, 20, 5, 5)) == 0.0
        assert iou(a, BoxPx(10, 0, 10, 10)) == 0.0
        assert iou(a, BoxPx(5, 0, 10, 10)) == pytest.approx(1 / 3)

    @given(boxes, boxes)
    def test_symmetric_bounded_and_exact(self, a, b):
        v = iou(a, b)
        assert v == iou(b, a)
        assert 0.0 <= v <= 1.0
        inter, union = iou_raster(a, b)
        assert v == inter / union


class TestSplit:
    def test_widths(self):
        left, right = split_legs(GrayImage(np.zeros((4, 10), np.uint8)))
        assert left.width == right.width == 5

    def test_symmetric_image(self):
        half = np.random.default_rng(0).integers(0, 256, (6, 7)).astype(np.uint8)
        left, right = split_legs(GrayImage(np.hstack([half, half[:, ::-1]])))
        assert left == right

    @pytest.mark.parametrize("width", [10, 11])
    def test_recompose(self, width):
        arr = np.random.default_rng(1).integers(0, 256, (5, width)).astype(np.uint8)
        left, right = split_legs(GrayImage(arr))
        back = np.hstack([left.pixels, flip_horizontal(right).pixels])
        np.testing.assert_array_equal(back, arr)

    @given(boxes, st.integers(4, 300))
    def test_box_mapping_is_involution(self, box, width):
        assert leg_box_to_image(leg_box_to_image(box, "right", width), "right", width) == box

    def test_box_mapping_mirrors(self):
        # a 3-px box at the very right edge of a width-11 image is the leg's first 3 columns
        assert leg_box_to_image(BoxPx(0, 2, 3, 3), "right", 11) == BoxPx(8, 2, 3, 3)


class TestPhantom:
    def test_deterministic(self):
        a = synth_phantom(4, 400, 320)
        b = synth_phantom(4, 400, 320)
        assert a == b

    def test_annotations_inside_halves(self):
        for img, ann in phantom_corpus(0, 5, 600, 500):
            half = img.width // 2
            assert ann.left_box.x >= 0 and ann.left_box.x2 <= half
            assert ann.right_box.x >= img.width - half and ann.right_box.x2 <= img.width
            assert 0 <= ann.left_box.y and ann.left_box.y2 <= img.height

    @pytest.mark.parametrize("jy", [0.35, 0.5, 0.62])
    @pytest.mark.parametrize("gap", [8, 16])
    def test_noise_free_peak_at_joint(self, jy, gap):
        img, _ = synth_phantom(0, 2400, 2000, joint_y_frac=jy, gap_px=gap, noise_sd=0)
        # the peak sits on the upper gap edge; a flat boxcar plateau resolves to its first row
        tol = max(11, gap / 2 + 11 / 2 + 2)
        for leg in split_legs(img):
            resp = peak_response(marginal_profile(leg, 0.1), 11)
            peak = int(np.argmax(resp)) + margin_px(leg.height, 0.1)
            assert abs(peak - jy * 2000) <= tol


class TestDetect:
    def test_zero_model_picks_first(self):
        img, _ = synth_phantom(1, 800, 640)
        leg = split_legs(img)[0]
        cfg = ProposerConfig(x_step=32)
        box, score = detect_leg(leg, linsvm.SvmModel(np.zeros(1764), 0.0, 0.01), cfg)
        x, y, side = proposal_grid(leg, cfg)[0, :3]
        assert box == BoxPx(x, y, side, side).clip(leg.width, leg.height)
        assert score == 0.0

    def test_dim_mismatch(self):
        img, _ = synth_phantom(1, 800, 640)
        with pytest.raises(ValueError):
            detect(img, linsvm.SvmModel(np.zeros(10), 0.0, 0.01))

    def test_phantom_localised(self, small_setup):
        s = small_setup
        for img, ann in phantom_corpus(7, 3, s.width, s.height):
            det = detect(img, s.model, s.pcfg)
            assert iou(det.left[0], ann.left_box) >= 0.5
            assert iou(det.right[0], ann.right_box) >= 0.5
            half = img.width // 2
            assert det.left[0].x2 <= half and det.right[0].x >= img.width - half
            assert det.elapsed > 0

    def test_deterministic(self, small_setup):
        img, _ = synth_phantom(2, small_setup.width, small_setup.height)
        a = detect(img, small_setup.model, small_setup.pcfg)
        b = detect(img, small_setup.model, small_setup.pcfg)
        assert (a.left, a.right) == (b.left, b.right)

    def test_symmetric_phantom_gives_mirror_boxes(self, small_setup):
        img, _ = synth_phantom(0, small_setup.width, small_setup.height, 0.47, 0.52, noise_sd=0)
        det = detect(img, small_setup.model, small_setup.pcfg)
        lb, rb = det.left[0], det.right[0]
        assert rb == BoxPx(img.width - lb.x2, lb.y, lb.w, lb.h)
        assert det.left[1] == det.right[1]

    def test_flip_swaps_and_mirrors(self, small_setup):
        img, _ = synth_phantom(5, small_setup.width, small_setup.height, 0.55, 0.48)
        det = detect(img, small_setup.model, small_setup.pcfg)
        flipped = detect(flip_horizontal(img), small_setup.model, small_setup.pcfg)
        w = img.width

        def mirror(b):
            return BoxPx(w - b.x2, b.y, b.w, b.h)

        assert flipped.left == (mirror(det.right[0]), det.right[1])
        assert flipped.right == (mirror(det.left[0]), det.left[1])

    def test_offset_keeps_grid_and_box(self, small_setup):
        s = small_setup
        img, _ = synth_phantom(6, s.width, s.height, 0.45, 0.5, noise_sd=4)
        offset = 25
        assert int(img.pixels.max()) + offset <= 255
        bright = GrayImage(img.pixels + np.uint8(offset))
        for a, b in zip(split_legs(img), split_legs(bright)):
            np.testing.assert_array_equal(proposal_grid(a, s.pcfg), proposal_grid(b, s.pcfg))
        d0, d1 = detect(img, s.model, s.pcfg), detect(bright, s.model, s.pcfg)
        assert d0.left[0] == d1.left[0] and d0.right[0] == d1.right[0]

    def test_16bit_input(self, small_setup):
        img, _ = synth_phantom(2, small_setup.width, small_setup.height)
        wide = GrayImage(img.pixels.astype(np.uint16) * 257, 16)
        det = detect(wide, small_setup.model, small_setup.pcfg)
        assert det.left[0].w > 0

    def test_parallel_equals_sequential(self, small_setup, tmp_path):
        s = small_setup
        items = []
        for img, ann in phantom_corpus(11, 6, s.width, s.height):
            path = tmp_path / ann.image_id
            write_image(path, img)
            items.append((ann.image_id, path))
        (tmp_path / "bad.png").write_bytes(b"not an image")
        items.insert(2, ("bad.png", tmp_path / "bad.png"))
        seq = detect_batch(items, s.model, s.pcfg, threads=1)
        par = detect_batch(items, s.model, s.pcfg, threads=4)
        assert seq[2] is None and par[2] is None

        def strip(d):
            return None if d is None else (d.image_id, d.left, d.right)

        assert [strip(d) for d in seq] == [strip(d) for d in par]


class TestTrainset:
    def test_positives_multiple_of_six(self):
        corpus = list(phantom_corpus(3, 2, 800, 640))
        data = build_trainset(corpus, ProposerConfig(x_step=32))
        assert data.n_pos > 0 and data.n_pos % 6 == 0
        assert data.n_augmented == data.n_pos // 6 * 5
        assert data.features.shape[1] == 1764

    def test_aligned_proposal_is_the_only_positive(self):
        img, _ = synth_phantom(8, 800, 640)
        pcfg = ProposerConfig(x_step=32)
        leg = split_legs(img)[0]
        grid = proposal_grid(leg, pcfg)
        k = len(grid) // 3
        x, y, side = grid[k, :3]
        target = BoxPx(x, y, side, side)
        _, labels, extra = leg_samples(leg, target, pcfg, HogConfig(), 1.0, ())
        assert np.flatnonzero(labels > 0).tolist() == [k]
        assert extra == []

    def test_no_augmentation(self):
        corpus = list(phantom_corpus(3, 1, 800, 640))
        data = build_trainset(corpus, ProposerConfig(x_step=32), augment=False)
        assert data.n_augmented == 0

    def test_missing_image_listed(self, tmp_path):
        anns = [Annotation("a.png", BoxPx(0, 0, 5, 5), BoxPx(10, 0, 5, 5)),
                Annotation("b.png", BoxPx(0, 0, 5, 5), BoxPx(10, 0, 5, 5))]
        with pytest.raises(FileNotFoundError, match="a.png, b.png"):
            load_corpus(tmp_path, anns)


class TestEvaluate:
    def test_perfect(self):
        anns = [ann for _, ann in phantom_corpus(0, 3, 400, 320)]
        dets = [Detection(a.image_id, (a.left_box, 1.0), (a.right_box, 1.0), 5.0) for a in anns]
        rep = evaluate(dets, anns)
        assert rep.mean_iou == 1.0
        assert set(rep.recall_at.values()) == {1.0}
        assert rep.mean_ms == 5.0

    def test_unmatched(self):
        det = Detection("x", (BoxPx(0, 0, 1, 1), 0), (BoxPx(0, 0, 1, 1), 0), 1.0)
        with pytest.raises(KeyError):
            evaluate([det], [])

    @given(st.lists(st.tuples(boxes, boxes), min_size=1, max_size=10),
           st.lists(st.floats(0, 1), min_size=1, max_size=6))
    def test_properties(self, pairs, thresholds):
        anns, dets = [], []
        for i, (a, b) in enumerate(pairs):
            anns.append(Annotation(str(i), a, a))
            dets.append(Detection(str(i), (b, 0.0), (a, 0.0), 1.0))
        rep = evaluate(dets, anns, thresholds)
        ious = [v for _, _, v in rep.per_image_iou]
        assert rep.mean_iou == pytest.approx(sum(ious) / len(ious))
        recalls = [rep.recall_at[t] for t in sorted(rep.recall_at)]
        assert all(r1 >= r2 for r1, r2 in zip(recalls, recalls[1:]))


class TestSweep:
    def test_zero_threshold_and_nested_grids(self):
        corpus = list(phantom_corpus(2, 4, 800, 640))
        rows = proposal_recall_sweep(corpus, ProposerConfig(), [4, 16, 64], [0.0, 0.5, 0.8, 0.9])
        table = {(p, t): r for p, t, r in rows}
        assert all(table[(p, 0.0)] == 1.0 for p in (4, 16, 64))
        for t in (0.5, 0.8, 0.9):
            assert table[(4, t)] >= table[(16, t)] >= table[(64, t)]

    def test_single_p_rows(self):
        corpus = list(phantom_corpus(2, 1, 800, 640))
        assert len(proposal_recall_sweep(corpus, ProposerConfig(), [32])) == 3


def test_records_round_trip(tmp_path):
    anns = [ann for _, ann in phantom_corpus(0, 3, 400, 320)]
    write_jsonl(tmp_path / "a.jsonl", anns)
    assert read_annotations(tmp_path / "a.jsonl") == anns
    det = Detection("q", (BoxPx(1, 2, 3, 3), 0.5), (BoxPx(4, 5, 6, 6), -1.25), 12.5)
    assert Detection.from_json(det.to_json()) == det
    assert annotation_in_leg(anns[0], "right", 400).x >= 0
