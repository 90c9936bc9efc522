"""Figure disassembly: panel segmentation, bar-chart gating, axis
detection, plot cropping, bar extraction and grouping."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from . import imgproc
from .imgproc import LineSegment, Rect


class NoAxesError(RuntimeError):
    """No horizontal/vertical line pair forming a 90-degree corner."""


@dataclass(frozen=True)
class PanelBox:
    bbox: Rect


@dataclass(frozen=True)
class Axes:
    x_axis: LineSegment
    y_axis: LineSegment
    origin: tuple[int, int]
    plot_rect: Rect


@dataclass(frozen=True)
class VerticalEdge:
    x: int
    y_top: int
    y_bottom: int


@dataclass
class Bar:
    x_left: int
    x_right: int
    y_top: int
    baseline_y: int
    group_id: int = -1
    signature: tuple | None = None

    @property
    def height(self) -> int:
        return self.baseline_y - self.y_top

    @property
    def center_x(self) -> float:
        return (self.x_left + self.x_right) / 2.0


def segment_panels(
    page: np.ndarray,
    dilate_radius: int = 10,
    min_area_frac: float = 0.05,
    merge_overlap: float = 0.2,
) -> list[PanelBox]:
    """Split a page into constituent panels.

    Binarize, bridge intra-panel gaps by dilation, then take bounding
    boxes of large components; boxes overlapping more than the merge
    fraction collapse into one.
    """
    binary, _ = imgproc.otsu_binarize(page)
    if binary.sum() == 0:
        return []
    fat = imgproc.dilate(binary, 2 * dilate_radius + 1)
    lm = imgproc.connected_components(fat)
    page_area = page.shape[0] * page.shape[1]
    boxes = []
    small = []
    for sl in ndimage.find_objects(lm.labels):
        b = Rect(sl[1].start, sl[0].start, sl[1].stop - sl[1].start, sl[0].stop - sl[0].start)
        (boxes if b.area >= min_area_frac * page_area else small).append(b)
    # titles and rotated axis labels sit across a whitespace gap from the
    # plot body; absorb each such satellite into the nearest panel when it
    # is close enough to belong to it
    reach = 2 * dilate_radius
    for s in small:
        if not boxes:
            break
        gaps = [
            max(
                max(b.x - s.x1, s.x - b.x1, 0),
                max(b.y - s.y1, s.y - b.y1, 0),
            )
            for b in boxes
        ]
        i = int(np.argmin(gaps))
        if gaps[i] <= reach:
            b = boxes[i]
            x0, y0 = min(b.x, s.x), min(b.y, s.y)
            x1, y1 = max(b.x1, s.x1), max(b.y1, s.y1)
            boxes[i] = Rect(x0, y0, x1 - x0, y1 - y0)
    # merge boxes that overlap by more than the threshold (relative to the
    # smaller box), repeating until stable
    changed = True
    while changed:
        changed = False
        for i in range(len(boxes)):
            for j in range(i + 1, len(boxes)):
                a, b = boxes[i], boxes[j]
                ow = max(0, min(a.x1, b.x1) - max(a.x, b.x))
                oh = max(0, min(a.y1, b.y1) - max(a.y, b.y))
                if ow * oh > merge_overlap * min(a.area, b.area):
                    x0, y0 = min(a.x, b.x), min(a.y, b.y)
                    x1, y1 = max(a.x1, b.x1), max(a.y1, b.y1)
                    boxes[i] = Rect(x0, y0, x1 - x0, y1 - y0)
                    del boxes[j]
                    changed = True
                    break
            if changed:
                break
    boxes.sort(key=lambda r: (r.y, r.x))
    return [PanelBox(b) for b in boxes]


def detect_axes(
    edges: np.ndarray,
    angle_tol_deg: float = 2.0,
    corner_dist: float = 10.0,
    hough_votes: int = 50,
    hough_max_gap: int = 5,
) -> Axes:
    """Pick the longest near-horizontal / near-vertical segment pair whose
    nearest endpoints form a corner.

    `edges` is the Canny output of the text-removed, thresholded panel.
    Raises NoAxesError when no qualifying pair exists.
    """
    segs = imgproc.hough_lines(edges, votes=hough_votes, max_gap=hough_max_gap)
    horiz = [s for s in segs if s.angle_deg <= angle_tol_deg or s.angle_deg >= 180 - angle_tol_deg]
    vert = [s for s in segs if abs(s.angle_deg - 90.0) <= angle_tol_deg]
    best: tuple[float, LineSegment, LineSegment, tuple[int, int]] | None = None
    for hs in horiz:
        for vs in vert:
            pairs = [
                (hp, vp)
                for hp in (hs.p0, hs.p1)
                for vp in (vs.p0, vs.p1)
            ]
            d, hp, vp = min(
                (math.hypot(hp[0] - vp[0], hp[1] - vp[1]), hp, vp) for hp, vp in pairs
            )
            if d > corner_dist:
                continue
            total = hs.length + vs.length
            if best is None or total > best[0]:
                origin = (round((hp[0] + vp[0]) / 2), round((hp[1] + vp[1]) / 2))
                best = (total, hs, vs, origin)
    if best is None:
        raise NoAxesError("no horizontal/vertical segment pair forms a corner")
    _, x_axis, y_axis, origin = best
    x_axis = _refine_axis(edges, x_axis, horizontal=True, max_gap=hough_max_gap)
    y_axis = _refine_axis(edges, y_axis, horizontal=False, max_gap=hough_max_gap)
    origin = (
        round((y_axis.p0[0] + y_axis.p1[0]) / 2),
        round((x_axis.p0[1] + x_axis.p1[1]) / 2),
    )
    x_right = max(x_axis.p0[0], x_axis.p1[0])
    y_top = min(y_axis.p0[1], y_axis.p1[1])
    px0, py0 = origin[0], y_top
    plot = Rect(px0, py0, max(1, x_right - px0), max(1, origin[1] - y_top))
    return Axes(x_axis=x_axis, y_axis=y_axis, origin=origin, plot_rect=plot)


def _refine_axis(
    edges: np.ndarray, seg: LineSegment, horizontal: bool, max_gap: int, band: int = 2
) -> LineSegment:
    """Snap a Hough segment's endpoints to the actual edge-pixel extent.

    The probabilistic walk can over- or under-shoot by a few pixels; the
    contiguous edge run (gaps up to max_gap) inside a narrow band around
    the segment gives tighter endpoints.
    """
    work = edges if horizontal else edges.T
    p0 = seg.p0 if horizontal else seg.p0[::-1]
    p1 = seg.p1 if horizontal else seg.p1[::-1]
    row = int(round((p0[1] + p1[1]) / 2))
    lo = max(0, row - band)
    cols = np.flatnonzero(work[lo : row + band + 1].any(axis=0))
    if cols.size == 0:
        return seg
    mid = (p0[0] + p1[0]) / 2
    # expand from the column nearest the segment midpoint
    k = int(np.argmin(np.abs(cols - mid)))
    left = right = k
    while left > 0 and cols[left] - cols[left - 1] <= max_gap + 1:
        left -= 1
    while right < cols.size - 1 and cols[right + 1] - cols[right] <= max_gap + 1:
        right += 1
    a, b = int(cols[left]), int(cols[right])
    if horizontal:
        return LineSegment(p0=(a, row), p1=(b, row))
    return LineSegment(p0=(row, a), p1=(row, b))


def crop_plot(
    panel: np.ndarray, axes: Axes, inset: int = 2
) -> tuple[np.ndarray, tuple[int, int]]:
    """Crop the axes-bounded plot interior; returns (crop, (dx, dy)) where
    crop coords + offset = panel coords. The inset keeps the axis strokes
    out of the crop."""
    r = axes.plot_rect
    x0 = max(0, r.x + inset)
    y0 = max(0, r.y)
    x1 = min(panel.shape[1], r.x1 + 1)
    y1 = min(panel.shape[0], r.y1 - inset + 1)
    return panel[y0:y1, x0:x1], (x0, y0)


def _corners_to_vertical_edges(corners: np.ndarray, dx_tol: int = 2) -> list[VerticalEdge]:
    """Cluster polygon corners with (nearly) equal x into vertical edges.

    A cluster spans from its topmost to its bottommost corner, so a small
    wiggle in a bar's side (a notch from hatching or noise) adds an interior
    corner without splitting the edge or shortening its extent.
    """
    edges: list[VerticalEdge] = []
    pts = sorted(map(tuple, corners))
    i = 0
    while i < len(pts):
        j = i + 1
        while j < len(pts) and pts[j][0] - pts[j - 1][0] <= dx_tol:
            j += 1
        cluster = pts[i:j]
        ys = [p[1] for p in cluster]
        y0, y1 = min(ys), max(ys)
        if y1 > y0:
            x = cluster[0][0] if cluster[0][1] in (y0, y1) else cluster[-1][0]
            edges.append(VerticalEdge(x=x, y_top=y0, y_bottom=y1))
        i = j
    edges.sort(key=lambda e: e.x)
    return edges


def detect_bars(
    plot: np.ndarray,
    baseline_y: int,
    top_tol: int = 2,
    base_tol: int = 3,
    corner_epsilon: float = 2.0,
    min_width: int = 3,
    min_height: int = 3,
) -> list[Bar]:
    """Extract bars from the binarized, gridline-free plot crop.

    `plot` is a BinaryImage in crop coordinates, `baseline_y` the x-axis
    row in the same coordinates. Corners become vertical edges; two edges
    with matching tops and bottoms near the baseline form a bar. Pairing
    is greedy left-to-right, each edge used at most once.
    """
    contours = imgproc.find_contours(plot)
    edges: list[VerticalEdge] = []
    for c in contours:
        if c.bbox.w < min_width or c.bbox.h < min_height:
            continue
        corners = imgproc.approx_corners(c, corner_epsilon)
        edges.extend(_corners_to_vertical_edges(corners))
    edges.sort(key=lambda e: e.x)
    bars: list[Bar] = []
    used = [False] * len(edges)
    for i, e in enumerate(edges):
        if used[i]:
            continue
        if abs(e.y_bottom - baseline_y) > base_tol:
            continue
        for j in range(i + 1, len(edges)):
            if used[j]:
                continue
            f = edges[j]
            if f.x - e.x < min_width:
                continue
            if abs(f.y_bottom - baseline_y) > base_tol:
                continue
            if abs(f.y_top - e.y_top) <= top_tol:
                used[i] = used[j] = True
                bars.append(
                    Bar(
                        x_left=e.x,
                        x_right=f.x,
                        y_top=min(e.y_top, f.y_top),
                        baseline_y=baseline_y,
                    )
                )
                break
    bars.sort(key=lambda b: b.x_left)
    return bars


def preprocess_plot(crop: np.ndarray, open_kernel: int = 5) -> np.ndarray:
    """Binarize a plot crop for bar detection.

    Adaptive threshold unioned with a crop-local global threshold (the
    adaptive window hollows solid regions wider than itself), opening to
    remove gridlines and specks, then hole filling.
    """
    binary = imgproc.adaptive_threshold(crop)
    global_binary, _ = imgproc.otsu_binarize(crop)
    binary = (binary | global_binary).astype(np.uint8)
    opened = imgproc.morphological_open(binary, open_kernel)
    return ndimage.binary_fill_holes(opened).astype(np.uint8)


def group_bars(
    panel_rgb: np.ndarray,
    bars: list[Bar],
    color_dist_max: float = 20.0,
    density_tol: float = 0.2,
    slice_size: int = 16,
) -> list[Bar]:
    """Assign group ids by color + center-slice texture similarity.

    The signature slice is the central 50% width x 20% height region of
    each bar; texture compares by slice ink density, which is invariant
    to hatch-stripe phase. Ids are dense, assigned by left-to-right first
    occurrence.
    """
    if not bars:
        return bars
    if panel_rgb.ndim == 2:
        panel_rgb = np.stack([panel_rgb] * 3, axis=-1)
    sigs = []
    for b in bars:
        w, h = b.x_right - b.x_left, b.height
        cx0 = b.x_left + w // 4
        cx1 = max(cx0 + 1, b.x_right - w // 4)
        cy = (b.y_top + b.baseline_y) // 2
        ch = max(1, h // 10)
        cy0, cy1 = max(0, cy - ch), min(panel_rgb.shape[0], cy + ch)
        region = panel_rgb[cy0:cy1, cx0:cx1]
        mean_rgb = region.reshape(-1, 3).mean(axis=0)
        gray = imgproc.to_grayscale(region)
        # ink = pixels darker than the white/color midpoint; density is a
        # hatch-stripe-phase-invariant texture measure
        lo = int(gray.min())
        ink = gray < (lo + 255) / 2 if lo < 250 else gray < 128
        density = float(ink.mean())
        tmpl = _resize_binary(ink.astype(np.uint8), slice_size)
        sigs.append((mean_rgb, density, tmpl))
    n = len(bars)
    parent = list(range(n))

    def find(i: int) -> int:
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for i in range(n):
        for j in range(i + 1, n):
            dc = float(np.linalg.norm(sigs[i][0] - sigs[j][0]))
            if dc > color_dist_max:
                continue
            if abs(sigs[i][1] - sigs[j][1]) <= density_tol:
                parent[find(i)] = find(j)
    order = sorted(range(n), key=lambda i: bars[i].x_left)
    next_id = 0
    root_to_id: dict[int, int] = {}
    for i in order:
        r = find(i)
        if r not in root_to_id:
            root_to_id[r] = next_id
            next_id += 1
    for i, b in enumerate(bars):
        b.group_id = root_to_id[find(i)]
        b.signature = (tuple(np.round(sigs[i][0], 2)), round(sigs[i][1], 4), sigs[i][2].tobytes())
    return bars


def _resize_binary(binary: np.ndarray, size: int) -> np.ndarray:
    h, w = binary.shape
    ys = (np.arange(size) * h) // size
    xs = (np.arange(size) * w) // size
    return binary[np.ix_(ys, xs)].astype(np.uint8)


def _binary_corr(a: np.ndarray, b: np.ndarray) -> float:
    """Pearson correlation of two equally sized binary templates; constant
    templates compare by equality (1.0 if identical, else 0.0)."""
    fa, fb = a.astype(np.float64).ravel(), b.astype(np.float64).ravel()
    sa, sb = fa.std(), fb.std()
    if sa == 0 or sb == 0:
        if sa == 0 and sb == 0:
            return 1.0 if fa[0] == fb[0] else 0.0
        return 0.0
    return float(np.corrcoef(fa, fb)[0, 1])


def gate_bar_chart(panel: np.ndarray) -> tuple[bool, float]:
    """Structural stand-in for the bar-chart classifier: a panel passes
    when axes are found and at least two bars stand on the x-axis."""
    try:
        blurred = imgproc.gaussian_blur(panel, 5)
        binary = imgproc.adaptive_threshold(blurred)
        edge_map = imgproc.canny(blurred)
        axes = detect_axes(edge_map)
    except NoAxesError:
        return False, 0.0
    crop, (dx, dy) = crop_plot(blurred, axes)
    if crop.size == 0:
        return False, 0.0
    plot_bin = preprocess_plot(crop)
    baseline = axes.origin[1] - dy - 1
    bars = detect_bars(plot_bin, min(baseline, plot_bin.shape[0] - 1))
    if len(bars) < 2:
        return False, min(1.0, len(bars) / 4.0)
    return True, min(1.0, len(bars) / 4.0)
