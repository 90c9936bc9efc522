"""Text localization and recognition.

Candidate glyph contours are filtered by area and ink density, grouped
into word boxes, masked out of the image, and recognized through a
pluggable OCR engine. The built-in engine template-matches against the
shipped bitmap font and is exact on noise-free synthetic renderings.
"""

from __future__ import annotations

import math
import os
import subprocess
import tempfile
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Callable, Sequence

import numpy as np
from scipy import ndimage

from . import font, imgproc
from .imgproc import Contour, Rect


class Role(Enum):
    UNASSIGNED = "unassigned"
    TITLE = "title"
    X_TICK = "x_tick"
    Y_TICK = "y_tick"
    X_LABEL = "x_label"
    Y_LABEL = "y_label"
    BAR_VALUE = "bar_value"


@dataclass(frozen=True)
class TextCandidate:
    contour: Contour
    # glyph candidates feed word grouping and OCR; non-glyph candidates
    # (noise specks) only contribute to the text-removal mask
    glyph: bool = True

    @property
    def bbox(self) -> Rect:
        return self.contour.bbox


@dataclass
class TextBlock:
    bbox: Rect  # original-image coordinates
    text: str
    confidence: float
    role: Role = Role.UNASSIGNED


class OcrEngineError(RuntimeError):
    """An external OCR engine failed; carries its diagnostics."""


# an OCR engine maps a gray region to (text, confidence)
OcrEngine = Callable[[np.ndarray], tuple[str, float]]

MIN_FILL_RATIO = 0.25
SPECK_AREA = 9  # largest contour a 3x3-closed noise speck can produce


MAX_ASPECT = 10.0


def detect_text_candidates(binary: np.ndarray) -> list[TextCandidate]:
    """Keep contours whose area lies within one sigma of the population
    mean and whose ink density is at least 25%.

    Extremely elongated contours (aspect over 10) are ruled out up front:
    they are rules, gridline fragments, or axis pieces, never glyphs.
    With fewer than 2 contours sigma is undefined and only the density
    filter applies.

    Pepper noise cuts thin strokes into glyph-sized fragments that would
    otherwise pass these filters, get masked, and sever the very lines
    axis detection needs. A 3x3-closed copy re-joins such cuts; contours
    whose closed parent component is line-like are dropped entirely
    (neither read nor masked). Geometry still comes from the raw
    contours, so a speck closing onto a glyph cannot dilute its density.
    """
    contours = imgproc.find_contours(binary)
    if not contours:
        return []
    closed = ndimage.binary_closing(
        binary.astype(bool), structure=np.ones((3, 3), dtype=bool)
    )
    labels = imgproc.connected_components(closed.astype(np.uint8)).labels
    parents = ndimage.find_objects(labels)
    # axes, gridlines, and the bars welded onto them span a sizable part
    # of the page once re-joined; no single word comes close
    max_word_span = 0.25 * max(binary.shape)

    def line_like(c: Contour) -> bool:
        x, y = int(c.boundary[0][0]), int(c.boundary[0][1])
        lab = labels[y, x]
        if lab == 0:
            return False
        sl = parents[lab - 1]
        ph, pw = sl[0].stop - sl[0].start, sl[1].stop - sl[1].start
        return max(ph, pw) > max_word_span

    dense = [
        c
        for c in contours
        if c.fill_ratio >= MIN_FILL_RATIO
        and max(c.bbox.w, c.bbox.h) <= MAX_ASPECT * min(c.bbox.w, c.bbox.h)
        and not line_like(c)
    ]
    if len(contours) < 2:
        return [TextCandidate(c) for c in dense]
    areas = np.array([c.area for c in contours], dtype=np.float64)
    mean, sd = areas.mean(), areas.std()
    lo, hi = mean - sd, mean + sd
    # in-band speck-sized contours are noise: mask them out of the image
    # but read no text from them
    return [
        TextCandidate(c, glyph=bool(c.area > SPECK_AREA))
        for c in dense
        if lo <= c.area <= hi
    ]


def build_text_mask(dims: tuple[int, int], candidates: Sequence[TextCandidate]) -> np.ndarray:
    """Union of candidate bounding boxes as a binary mask. dims = (h, w)."""
    mask = np.zeros(dims, dtype=np.uint8)
    for c in candidates:
        b = c.bbox
        mask[b.y : b.y1, b.x : b.x1] = 1
    return mask


def _v_overlap(a: Rect, b: Rect) -> float:
    ov = min(a.y1, b.y1) - max(a.y, b.y)
    return ov / max(min(a.h, b.h), 1)


def _h_overlap(a: Rect, b: Rect) -> float:
    ov = min(a.x1, b.x1) - max(a.x, b.x)
    return ov / max(min(a.w, b.w), 1)


def _h_gap(a: Rect, b: Rect) -> int:
    return max(a.x, b.x) - min(a.x1, b.x1)


def _v_gap(a: Rect, b: Rect) -> int:
    return max(a.y, b.y) - min(a.y1, b.y1)


def _union(a: Rect, b: Rect) -> Rect:
    x0, y0 = min(a.x, b.x), min(a.y, b.y)
    x1, y1 = max(a.x1, b.x1), max(a.y1, b.y1)
    return Rect(x0, y0, x1 - x0, y1 - y0)


def _merge_boxes(boxes: list[Rect], joined, x_reach: float) -> list[Rect]:
    """Union-find closure of `joined(a, b)` over boxes.

    `joined` must imply b.x <= a.x1 + x_reach so that, with boxes sorted
    by x, the scan can stop early; this keeps noisy pages (thousands of
    speck candidates) from going quadratic.
    """
    boxes = sorted(boxes, key=lambda r: (r.x, r.y))
    parent = list(range(len(boxes)))

    def find(i: int) -> int:
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for i in range(len(boxes)):
        limit = boxes[i].x1 + x_reach
        for j in range(i + 1, len(boxes)):
            if boxes[j].x > limit:
                break
            if joined(boxes[i], boxes[j]):
                parent[find(i)] = find(j)
    merged: dict[int, Rect] = {}
    for i, b in enumerate(boxes):
        r = find(i)
        merged[r] = _union(merged[r], b) if r in merged else b
    return sorted(merged.values(), key=lambda r: (r.y, r.x))


def group_glyphs(
    candidates: Sequence[TextCandidate], line_gap_factor: float = 2.5
) -> list[Rect]:
    """Merge glyph boxes into word boxes, then words into text lines.

    Glyphs merge into words when the horizontal gap is at most the median
    glyph width and they overlap vertically by at least half (vertical
    text: nearly-touching stacked parts merge). Words on one baseline
    merge into a line when the gap is at most line_gap_factor times the
    median glyph width. Output is sorted top-to-bottom, left-to-right.
    """
    # speck candidates (noise) still matter for masking but carry no text
    boxes = [c.bbox for c in candidates if c.glyph and c.bbox.w * c.bbox.h >= 3]
    if not boxes:
        return []
    med_w = float(np.median([b.w for b in boxes]))

    # stacked (vertical-text) glyphs sit closer than distinct text lines,
    # which the page layout separates by more than a glyph width
    v_gap_max = max(3, 0.6 * med_w)

    def vert_join(a: Rect, b: Rect) -> bool:
        return (
            _v_gap(a, b) <= v_gap_max
            and _h_overlap(a, b) >= 0.5
            and min(a.w, b.w) >= 0.5 * max(a.w, b.w)
        )

    def horiz_join(a: Rect, b: Rect) -> bool:
        # the height guard keeps a tall vertical-text stack from
        # swallowing a short neighbor (and vice versa)
        return (
            _h_gap(a, b) <= med_w
            and _v_overlap(a, b) >= 0.5
            and min(a.h, b.h) >= 0.35 * max(a.h, b.h)
        )

    def line_join(a: Rect, b: Rect) -> bool:
        similar = min(a.h, b.h) >= 0.5 * max(a.h, b.h)
        return (
            similar
            and _h_gap(a, b) <= line_gap_factor * med_w
            and _v_overlap(a, b) >= 0.6
        )

    # vertical stacks (rotated text, dotted glyph parts) form first and
    # then behave as single blocks for the horizontal passes
    stacked = _merge_boxes(boxes, vert_join, x_reach=med_w)
    words = _merge_boxes(stacked, horiz_join, x_reach=med_w)
    return _merge_boxes(words, line_join, x_reach=line_gap_factor * med_w)


def denoise_binary(binary: np.ndarray) -> np.ndarray:
    """Remove ink pixels with no 8-connected ink neighbor (pepper noise).

    Every glyph in the shipped font keeps all its pixels, so noise-free
    renderings pass through unchanged.
    """
    b = binary.astype(bool)
    pad = np.pad(b, 1)
    neigh = np.zeros(b.shape, dtype=np.int32)
    h, w = b.shape
    for dy in (-1, 0, 1):
        for dx in (-1, 0, 1):
            if dy == 0 and dx == 0:
                continue
            neigh += pad[1 + dy : 1 + dy + h, 1 + dx : 1 + dx + w]
    return (b & (neigh > 0)).astype(np.uint8)


def builtin_glyph_ocr(region: np.ndarray) -> tuple[str, float]:
    """Template OCR against the shipped bitmap font.

    Segments ink into glyph groups, matches each group against every
    template by pixel agreement after nearest resize, and drops glyphs
    scoring below 0.6. Confidence is the mean per-glyph agreement.
    """
    if region.size == 0:
        return "", 0.0
    binary, _ = imgproc.otsu_binarize(region)
    if binary.sum() == 0:
        return "", 0.0
    # label on a closed copy: pepper noise severs diagonal stair-steps at
    # their corner link, and a 3x3 close re-bridges those cuts without
    # reaching across real inter-glyph gaps; matching still uses the
    # original ink so clean crops are read bit-identically
    closed = ndimage.binary_closing(
        binary.astype(bool), structure=np.ones((3, 3), dtype=bool)
    )
    lm = imgproc.connected_components(closed.astype(np.uint8))
    if lm.count == 0:
        return "", 0.0
    # group components that overlap horizontally (multi-part glyphs: i j % ...)
    objs = [
        Rect(sl[1].start, sl[0].start, sl[1].stop - sl[1].start, sl[0].stop - sl[0].start)
        for sl in ndimage.find_objects(lm.labels)
    ]
    parent = list(range(len(objs)))

    def find(i: int) -> int:
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    # multi-part glyphs (i, j, %) sit almost on top of each other; anything
    # further away is either another glyph or noise
    max_h = max(o.h for o in objs)
    gap_limit = max(3, 0.45 * max_h)
    for i in range(len(objs)):
        for j in range(i + 1, len(objs)):
            if _h_overlap(objs[i], objs[j]) >= 0.5 and _v_gap(objs[i], objs[j]) <= gap_limit:
                parent[find(i)] = find(j)
    groups: dict[int, list[int]] = {}
    for i in range(len(objs)):
        groups.setdefault(find(i), []).append(i)

    glyphs = []
    for idxs in groups.values():
        box = objs[idxs[0]]
        for i in idxs[1:]:
            box = _union(box, objs[i])
        mask = np.isin(
            lm.labels[box.y : box.y1, box.x : box.x1], [i + 1 for i in idxs]
        ) & binary[box.y : box.y1, box.x : box.x1].astype(bool)
        glyphs.append((box, mask))
    if not glyphs:
        return "", 0.0
    # noise specks are much smaller than real glyph ink
    med_area = float(np.median([m.sum() for _, m in glyphs]))
    glyphs = [(b, m) for b, m in glyphs if m.sum() >= max(3, 0.15 * med_area)]
    if not glyphs:
        return "", 0.0
    glyphs.sort(key=lambda g: g[0].x)

    med_w = float(np.median([g[0].w for g in glyphs]))
    chars: list[str] = []
    scores: list[float] = []
    prev_end: int | None = None
    for box, mask in glyphs:
        ch, score = _match_glyph(mask)
        if ch is None or score < 0.6:
            continue
        if prev_end is not None and box.x - prev_end > 1.6 * med_w:
            chars.append(" ")
        chars.append(ch)
        scores.append(score)
        prev_end = box.x1
    text = "".join(chars).strip()
    if not text:
        return "", 0.0
    return text, float(np.mean(scores))


def _trim_specks(mask: np.ndarray) -> np.ndarray:
    """Strip border rows/cols with at most 2 ink pixels (fused noise)."""
    m = mask
    changed = True
    while changed and m.shape[0] > 3 and m.shape[1] > 3:
        changed = False
        if m[0].sum() <= 2:
            m, changed = m[1:], True
        if m.shape[0] > 3 and m[-1].sum() <= 2:
            m, changed = m[:-1], True
        if m.shape[1] > 3 and m[:, 0].sum() <= 2:
            m, changed = m[:, 1:], True
        if m.shape[1] > 3 and m[:, -1].sum() <= 2:
            m, changed = m[:, :-1], True
    if not m.any():
        return mask
    ys, xs = np.nonzero(m)
    return m[ys.min() : ys.max() + 1, xs.min() : xs.max() + 1]


def _tight_mask(m: np.ndarray) -> np.ndarray | None:
    if not m.any():
        return None
    ys, xs = np.nonzero(m)
    return m[ys.min() : ys.max() + 1, xs.min() : xs.max() + 1]


def _match_glyph(mask: np.ndarray) -> tuple[str | None, float]:
    """Best template over the candidate and a few noise-cleanup variants."""
    best_ch, best_score = _match_glyph_one(mask)
    if best_score >= 0.98:
        return best_ch, best_score
    variants = [_trim_specks(mask)]
    if min(mask.shape) >= 6:
        # attached pepper lumps / salt dents at super-sampled stroke widths
        el = np.ones((2, 2), bool)
        variants.append(_tight_mask(ndimage.binary_opening(mask, structure=el)))
        variants.append(_tight_mask(ndimage.binary_closing(mask, structure=el)))
    for var in variants:
        if var is None or var.shape == mask.shape and (var == mask).all():
            continue
        ch, sc = _match_glyph_one(var)
        if sc > best_score:
            best_ch, best_score = ch, sc
    if best_score < 0.98:
        # resize-normalized matching distorts badly when noise stretches
        # the bounding box; sliding-alignment ink IoU is immune to that
        ch, sc = _match_glyph_aligned(mask)
        if sc >= 0.72:
            return ch, sc
    return best_ch, best_score


def _match_glyph_aligned(mask: np.ndarray) -> tuple[str | None, float]:
    """Best template by ink IoU over small translations at integer scale."""
    h, w = mask.shape
    best_ch, best_score = None, -1.0
    for ch, tpl in font.TEMPLATES.items():
        th, tw = tpl.shape
        k = max(1, round(h / th))
        uh, uw = th * k, tw * k
        if abs(uh - h) > 4 or abs(uw - w) > 4:
            continue
        up = np.repeat(np.repeat(tpl.astype(bool), k, axis=0), k, axis=1)
        ch_h, ch_w = max(uh, h) + 4, max(uw, w) + 4
        canvas_t = np.zeros((ch_h, ch_w), dtype=bool)
        canvas_t[2 : 2 + uh, 2 : 2 + uw] = up
        for dy in range(min(5, ch_h - h + 1)):
            for dx in range(min(5, ch_w - w + 1)):
                canvas_c = np.zeros((ch_h, ch_w), dtype=bool)
                canvas_c[dy : dy + h, dx : dx + w] = mask
                union = (canvas_c | canvas_t).sum()
                if union == 0:
                    continue
                score = float((canvas_c & canvas_t).sum() / union)
                if score > best_score:
                    best_ch, best_score = ch, score
    return best_ch, best_score


def _match_glyph_one(mask: np.ndarray) -> tuple[str | None, float]:
    """Best template by symmetric pixel agreement."""
    h, w = mask.shape
    aspect = h / w
    best_ch, best_score = None, -1.0
    for ch, tpl in font.TEMPLATES.items():
        th, tw = tpl.shape
        t_aspect = th / tw
        if not (1 / 1.6 <= aspect / t_aspect <= 1.6):
            continue
        up_t = tpl[np.ix_((np.arange(h) * th) // h, (np.arange(w) * tw) // w)]
        down_c = mask[np.ix_((np.arange(th) * h) // th, (np.arange(tw) * w) // tw)]
        # symmetric agreement: candidate-grid term tolerates speck noise,
        # template-grid term keeps small glyphs discriminative
        score = (float((up_t == mask).mean()) + float((down_c == tpl).mean())) / 2.0
        if score > best_score:
            best_ch, best_score = ch, score
    return best_ch, best_score


def make_subprocess_engine(cmd: str) -> OcrEngine:
    """Wrap an external OCR command into the engine contract.

    The command is invoked with one argument, a PNG crop path; it must
    print one TAB-separated line per block: x y w h confidence text.
    """

    def engine(region: np.ndarray) -> tuple[str, float]:
        from PIL import Image

        with tempfile.NamedTemporaryFile(suffix=".png", delete=False) as f:
            path = f.name
        try:
            Image.fromarray(region).save(path)
            proc = subprocess.run(
                cmd.split() + [path], capture_output=True, text=True, timeout=60
            )
            if proc.returncode != 0:
                raise OcrEngineError(
                    f"OCR command {cmd!r} exited {proc.returncode}: {proc.stderr.strip()}"
                )
            items = []
            for line in proc.stdout.splitlines():
                if not line.strip():
                    continue
                parts = line.split("\t")
                if len(parts) != 6:
                    raise OcrEngineError(f"malformed OCR output line: {line!r}")
                x, y, w, h = (int(v) for v in parts[:4])
                conf = float(parts[4])
                items.append((x, y, conf, parts[5]))
            if not items:
                return "", 0.0
            items.sort(key=lambda t: (t[1], t[0]))
            text = " ".join(t[3] for t in items)
            conf = float(np.mean([t[2] for t in items]))
            return text, conf
        finally:
            os.unlink(path)

    return engine


def engine_from_env(ocr_cmd: str | None = None) -> OcrEngine:
    """Resolve the OCR engine: explicit command, CHARTEX_OCR_CMD, or built-in."""
    cmd = ocr_cmd or os.environ.get("CHARTEX_OCR_CMD")
    if cmd:
        return make_subprocess_engine(cmd)
    return builtin_glyph_ocr


def recognize(
    img: np.ndarray,
    mask: np.ndarray,
    blocks: Sequence[Rect],
    engine: OcrEngine = builtin_glyph_ocr,
    y_axis_x: int | None = None,
) -> list[TextBlock]:
    """Crop each word box from the masked image, upscale 2x, run OCR.

    Tall blocks left of the y-axis are treated as rotated y-axis labels
    and are rotated 90 degrees clockwise before recognition. Blocks with
    empty recognition are dropped; coordinates stay in image space.
    """
    keep_text = np.where(mask.astype(bool), img, 255).astype(np.uint8)
    out: list[TextBlock] = []
    for box in blocks:
        crop = keep_text[box.y : box.y1, box.x : box.x1]
        if crop.size == 0 or (crop == 255).all():
            continue
        vertical = box.h > 2 * box.w and (y_axis_x is None or box.x1 <= y_axis_x)
        if vertical:
            crop = np.rot90(crop, k=-1)
        binary, _ = imgproc.otsu_binarize(crop)
        if binary.sum() == 0:
            continue
        clean = np.where(denoise_binary(binary), 0, 255).astype(np.uint8)
        up = imgproc.upscale(clean, 2, method="nearest")
        text, conf = engine(up)
        if not text:
            continue
        out.append(TextBlock(bbox=box, text=text, confidence=conf))
    return out
