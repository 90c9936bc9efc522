"""Text candidate filtering, word grouping, and built-in OCR."""

import numpy as np
import pytest

from chartex import chartgen, font, imgproc, textscan
from chartex.imgproc import Rect

from conftest import render_clean


def render_words(text: str, scale: int = 2, pad: int = 6) -> np.ndarray:
    """Grayscale image of one text line in the shipped font."""
    cell = font.render_text(text)
    cell = np.kron(cell, np.ones((scale, scale), dtype=cell.dtype))
    h, w = cell.shape
    img = np.full((h + 2 * pad, w + 2 * pad), 255, dtype=np.uint8)
    img[pad : pad + h, pad : pad + w] = np.where(cell > 0, 0, 255)
    return img


class TestDetectTextCandidates:
    def test_no_bar_contour_survives_on_clean_chart(self, clean_chart):
        rgb, truth = clean_chart
        gray = imgproc.to_grayscale(rgb)
        binary, _ = imgproc.otsu_binarize(gray)
        cands = textscan.detect_text_candidates(binary)
        for bar in truth.bar_rects:
            for c in cands:
                b = c.bbox
                inside = (
                    b.x >= bar.x_left
                    and b.x1 <= bar.x_right + 1
                    and b.y >= bar.y_top
                    and b.y1 <= bar.baseline_y + 1
                )
                assert not (inside and b.w > 5 and b.h > 5), (
                    f"bar interior contour {b} kept as text"
                )

    def test_every_truth_glyph_region_is_covered(self, clean_chart):
        rgb, truth = clean_chart
        gray = imgproc.to_grayscale(rgb)
        binary, _ = imgproc.otsu_binarize(gray)
        cands = textscan.detect_text_candidates(binary)
        mask = textscan.build_text_mask(gray.shape, cands)
        for tb in truth.text_boxes:
            b = tb.bbox
            region_ink = binary[b.y : b.y1, b.x : b.x1].sum()
            covered = (binary & mask)[b.y : b.y1, b.x : b.x1].sum()
            assert covered >= 0.9 * region_ink, f"{tb.role} {tb.text!r} not masked"

    def test_axes_survive_masking(self, clean_chart):
        rgb, truth = clean_chart
        gray = imgproc.to_grayscale(rgb)
        binary, _ = imgproc.otsu_binarize(gray)
        cands = textscan.detect_text_candidates(binary)
        mask = textscan.build_text_mask(gray.shape, cands)
        kept = imgproc.subtract_mask(gray, mask)
        (x0, y0), (x1, y1) = truth.x_axis
        assert (kept[y0, x0 + 2 : x1 - 2] < 128).mean() > 0.95
        (x0, y0), (x1, y1) = truth.y_axis
        assert (kept[min(y0, y1) + 2 : max(y0, y1) - 2, x0] < 128).mean() > 0.95

    def test_empty_image_yields_nothing(self):
        assert textscan.detect_text_candidates(np.zeros((20, 20), np.uint8)) == []


class TestGroupGlyphs:
    def _cands(self, rects):
        from chartex.imgproc import Contour

        out = []
        for r in rects:
            c = Contour(
                boundary=np.array([[r.x, r.y]]),
                bbox=r,
                area=max(1, r.w * r.h // 2),
                fill_ratio=0.5,
            )
            out.append(textscan.TextCandidate(c))
        return out

    def test_adjacent_glyphs_form_one_word(self):
        rects = [Rect(10 + i * 12, 20, 10, 18) for i in range(4)]
        words = textscan.group_glyphs(self._cands(rects))
        assert len(words) == 1
        assert words[0] == Rect(10, 20, 46, 18)

    def test_distant_words_stay_separate(self):
        rects = [Rect(10, 20, 10, 18), Rect(200, 20, 10, 18)]
        words = textscan.group_glyphs(self._cands(rects))
        assert len(words) == 2

    def test_vertical_stack_merges(self):
        rects = [Rect(10, 20 + i * 22, 18, 18) for i in range(5)]
        words = textscan.group_glyphs(self._cands(rects))
        assert len(words) == 1

    def test_tall_stack_does_not_swallow_neighbor_text(self):
        # a rotated-label column beside a short tick label
        stack = [Rect(8, 100 + i * 22, 18, 18) for i in range(5)]
        tick = [Rect(32, 140, 10, 18)]
        words = textscan.group_glyphs(self._cands(stack + tick))
        assert Rect(32, 140, 10, 18) in words

    def test_output_sorted_top_to_bottom(self):
        rects = [Rect(50, 200, 10, 18), Rect(10, 20, 10, 18)]
        words = textscan.group_glyphs(self._cands(rects))
        assert words == sorted(words, key=lambda r: (r.y, r.x))


class TestBuiltinOcr:
    @pytest.mark.parametrize(
        "text",
        ["MONTH", "G10", "0", "1000", "2.5", "-40", "BASELINE WEEK", "A B C"],
    )
    def test_exact_on_clean_renders(self, text):
        img = render_words(text)
        up = imgproc.upscale(img, 2, method="nearest")
        got, conf = textscan.builtin_glyph_ocr(up)
        assert got == text
        assert conf == pytest.approx(1.0)

    def test_blank_region_reads_empty(self):
        img = np.full((30, 60), 255, dtype=np.uint8)
        text, conf = textscan.builtin_glyph_ocr(img)
        assert text == "" and conf == 0.0

    def test_single_pepper_flip_does_not_change_reading(self):
        rng = np.random.default_rng(42)
        for trial in range(20):
            img = render_words("COUNT")
            ys, xs = np.nonzero(img < 128)
            i = rng.integers(len(ys))
            img[ys[i], xs[i]] = 255  # knock one ink pixel out
            up = imgproc.upscale(img, 2, method="nearest")
            got, _ = textscan.builtin_glyph_ocr(up)
            assert got == "COUNT", f"trial {trial}: read {got!r}"


class TestRecognize:
    def test_full_chart_strings_recovered(self, clean_chart):
        rgb, truth = clean_chart
        gray = imgproc.to_grayscale(rgb)
        binary, _ = imgproc.otsu_binarize(gray)
        cands = textscan.detect_text_candidates(binary)
        words = textscan.group_glyphs(cands)
        mask = textscan.build_text_mask(gray.shape, [c for c in cands if c.glyph])
        blocks = textscan.recognize(gray, mask, words, y_axis_x=truth.axis_x)
        got = {b.text for b in blocks}
        for tb in truth.text_boxes:
            assert tb.text in got, f"{tb.role} {tb.text!r} missing from {got}"

    def test_coordinates_stay_in_image_bounds(self, clean_chart):
        rgb, truth = clean_chart
        gray = imgproc.to_grayscale(rgb)
        binary, _ = imgproc.otsu_binarize(gray)
        cands = textscan.detect_text_candidates(binary)
        words = textscan.group_glyphs(cands)
        mask = textscan.build_text_mask(gray.shape, cands)
        blocks = textscan.recognize(gray, mask, words)
        h, w = gray.shape
        for b in blocks:
            assert 0 <= b.bbox.x and b.bbox.x1 <= w
            assert 0 <= b.bbox.y and b.bbox.y1 <= h

    def test_deterministic(self, clean_chart):
        rgb, _ = clean_chart
        gray = imgproc.to_grayscale(rgb)
        binary, _ = imgproc.otsu_binarize(gray)
        cands = textscan.detect_text_candidates(binary)
        words = textscan.group_glyphs(cands)
        mask = textscan.build_text_mask(gray.shape, cands)
        a = textscan.recognize(gray, mask, words)
        b = textscan.recognize(gray, mask, words)
        assert [(x.bbox, x.text, x.confidence) for x in a] == [
            (x.bbox, x.text, x.confidence) for x in b
        ]

    def test_rotated_y_label_is_read(self):
        rgb, truth = render_clean(2)
        spec = truth.spec
        assert spec.y_label  # sampled specs always carry one
        gray = imgproc.to_grayscale(rgb)
        binary, _ = imgproc.otsu_binarize(gray)
        cands = textscan.detect_text_candidates(binary)
        words = textscan.group_glyphs(cands)
        mask = textscan.build_text_mask(gray.shape, [c for c in cands if c.glyph])
        blocks = textscan.recognize(gray, mask, words, y_axis_x=truth.axis_x)
        assert spec.y_label in {b.text for b in blocks}


class TestSubprocessEngine:
    def test_external_command_contract(self, tmp_path):
        script = tmp_path / "fake_ocr.py"
        script.write_text(
            "import sys\nprint('1\\t2\\t10\\t10\\t0.9\\tHELLO')\n"
        )
        engine = textscan.make_subprocess_engine(f"python3 {script}")
        text, conf = engine(np.full((20, 20), 255, dtype=np.uint8))
        assert text == "HELLO" and conf == pytest.approx(0.9)

    def test_failing_command_raises(self, tmp_path):
        script = tmp_path / "bad_ocr.py"
        script.write_text("import sys\nsys.exit(3)\n")
        engine = textscan.make_subprocess_engine(f"python3 {script}")
        with pytest.raises(textscan.OcrEngineError):
            engine(np.full((20, 20), 255, dtype=np.uint8))

    def test_malformed_output_raises(self, tmp_path):
        script = tmp_path / "odd_ocr.py"
        script.write_text("print('not tab separated')\n")
        engine = textscan.make_subprocess_engine(f"python3 {script}")
        with pytest.raises(textscan.OcrEngineError):
            engine(np.full((20, 20), 255, dtype=np.uint8))

    def test_env_var_selects_engine(self, monkeypatch):
        monkeypatch.delenv("CHARTEX_OCR_CMD", raising=False)
        assert textscan.engine_from_env() is textscan.builtin_glyph_ocr
        monkeypatch.setenv("CHARTEX_OCR_CMD", "some-cmd")
        assert textscan.engine_from_env() is not textscan.builtin_glyph_ocr
