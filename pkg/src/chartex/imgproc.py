"""From-scratch raster primitives: thresholding, morphology, contours,
edges, lines, resampling.

Images are numpy arrays: grayscale (H, W) uint8 with 0=black/255=white,
binary (H, W) uint8 with 1=foreground (dark ink), RGB (H, W, 3) uint8.
Every function is pure and deterministic; border handling is clamp-to-edge
throughout.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy import ndimage


class Rect(NamedTuple):
    x: int
    y: int
    w: int
    h: int

    @property
    def x1(self) -> int:
        return self.x + self.w

    @property
    def y1(self) -> int:
        return self.y + self.h

    @property
    def area(self) -> int:
        return self.w * self.h

    @property
    def center(self) -> tuple[float, float]:
        return (self.x + self.w / 2.0, self.y + self.h / 2.0)


@dataclass(frozen=True)
class Contour:
    """Outer boundary of one connected foreground component."""

    boundary: np.ndarray  # (N, 2) int array of (x, y) boundary points
    bbox: Rect
    area: int  # filled pixel count of the component
    fill_ratio: float  # area / bbox area

    def __len__(self) -> int:
        return len(self.boundary)


@dataclass(frozen=True)
class LineSegment:
    p0: tuple[int, int]
    p1: tuple[int, int]

    @property
    def length(self) -> float:
        return math.hypot(self.p1[0] - self.p0[0], self.p1[1] - self.p0[1])

    @property
    def angle_deg(self) -> float:
        """Orientation in [0, 180): 0 = horizontal, 90 = vertical."""
        a = math.degrees(math.atan2(self.p1[1] - self.p0[1], self.p1[0] - self.p0[0]))
        return a % 180.0


@dataclass(frozen=True)
class LabelMap:
    labels: np.ndarray  # (H, W) int32, 0 = background
    count: int

    @property
    def shape(self) -> tuple[int, int]:
        return self.labels.shape


def to_grayscale(rgb: np.ndarray) -> np.ndarray:
    """Luma conversion: round(0.299 R + 0.587 G + 0.114 B)."""
    if rgb.ndim == 2:
        return rgb.astype(np.uint8)
    r, g, b = rgb[..., 0], rgb[..., 1], rgb[..., 2]
    luma = 0.299 * r.astype(np.float64) + 0.587 * g + 0.114 * b
    return np.clip(np.rint(luma), 0, 255).astype(np.uint8)


def otsu_binarize(img: np.ndarray) -> tuple[np.ndarray, int]:
    """Global threshold maximizing between-class variance.

    Pixels strictly below the returned threshold become foreground (dark
    ink on a light background). Ties pick the smallest threshold; a
    uniform image yields its own intensity and an all-background output.
    """
    hist = np.bincount(img.ravel(), minlength=256).astype(np.float64)
    total = hist.sum()
    # class 0 = pixels < t, for t in 0..255
    cum_n = np.concatenate(([0.0], np.cumsum(hist)))[:256]
    cum_s = np.concatenate(([0.0], np.cumsum(hist * np.arange(256))))[:256]
    n0, n1 = cum_n, total - cum_n
    s_total = (hist * np.arange(256)).sum()
    mu0 = np.where(n0 > 0, cum_s / np.maximum(n0, 1), 0.0)
    mu1 = np.where(n1 > 0, (s_total - cum_s) / np.maximum(n1, 1), 0.0)
    var_between = n0 * n1 * (mu0 - mu1) ** 2
    t = int(np.argmax(var_between))
    if var_between[t] <= 0:  # uniform image
        t = int(img.flat[0])
        return np.zeros_like(img, dtype=np.uint8), t
    return (img < t).astype(np.uint8), t


def gaussian_sigma(kernel: int) -> float:
    """Sigma for a given odd kernel size: 0.3*((k-1)/2 - 1) + 0.8."""
    return 0.3 * ((kernel - 1) / 2.0 - 1.0) + 0.8


def gaussian_blur(img: np.ndarray, kernel: int = 5) -> np.ndarray:
    """Separable Gaussian convolution with clamp-to-edge borders."""
    if kernel < 1 or kernel % 2 == 0:
        raise ValueError("kernel must be odd and >= 1")
    if kernel == 1:
        return img.copy()
    sigma = gaussian_sigma(kernel)
    half = kernel // 2
    x = np.arange(-half, half + 1, dtype=np.float64)
    k1d = np.exp(-(x**2) / (2.0 * sigma**2))
    k1d /= k1d.sum()
    out = img.astype(np.float64)
    out = ndimage.correlate1d(out, k1d, axis=0, mode="nearest")
    out = ndimage.correlate1d(out, k1d, axis=1, mode="nearest")
    return np.clip(np.rint(out), 0, 255).astype(np.uint8)


def integral_image(img: np.ndarray) -> np.ndarray:
    """Summed-area table: I[y, x] = sum of img[0..y, 0..x], int64."""
    return np.cumsum(np.cumsum(img.astype(np.int64), axis=0), axis=1)


def rect_sum(integral: np.ndarray, x0: int, y0: int, x1: int, y1: int) -> int:
    """Inclusive rectangle sum [x0..x1] x [y0..y1] in 4 lookups."""
    s = integral[y1, x1]
    if x0 > 0:
        s -= integral[y1, x0 - 1]
    if y0 > 0:
        s -= integral[y0 - 1, x1]
    if x0 > 0 and y0 > 0:
        s += integral[y0 - 1, x0 - 1]
    return int(s)


def adaptive_threshold(
    img: np.ndarray, window: int | None = None, t_pct: float = 15.0
) -> np.ndarray:
    """Per-pixel threshold against the border-clipped local window mean.

    Foreground iff intensity < mean * (100 - t_pct) / 100. Default window
    is width/8 (at least 3).
    """
    h, w = img.shape
    if window is None:
        window = max(3, w // 8)
    if window < 3:
        raise ValueError("window must be >= 3")
    half = window // 2
    ii = integral_image(img)
    ys = np.arange(h)
    xs = np.arange(w)
    y0 = np.clip(ys - half, 0, h - 1)
    y1 = np.clip(ys + half, 0, h - 1)
    x0 = np.clip(xs - half, 0, w - 1)
    x1 = np.clip(xs + half, 0, w - 1)
    pad = np.zeros((h + 1, w + 1), dtype=np.int64)
    pad[1:, 1:] = ii
    sums = (
        pad[np.ix_(y1 + 1, x1 + 1)]
        - pad[np.ix_(y0, x1 + 1)]
        - pad[np.ix_(y1 + 1, x0)]
        + pad[np.ix_(y0, x0)]
    )
    counts = np.outer(y1 - y0 + 1, x1 - x0 + 1)
    means = sums / counts
    return (img < means * (100.0 - t_pct) / 100.0).astype(np.uint8)


def erode(img: np.ndarray, kernel: int) -> np.ndarray:
    return ndimage.minimum_filter(img, size=kernel, mode="nearest")


def dilate(img: np.ndarray, kernel: int) -> np.ndarray:
    return ndimage.maximum_filter(img, size=kernel, mode="nearest")


def morphological_open(img: np.ndarray, kernel: int = 5) -> np.ndarray:
    """Erosion then dilation with a square kernel x kernel element."""
    if kernel < 1:
        raise ValueError("kernel must be >= 1")
    if kernel == 1:
        return img.copy()
    return dilate(erode(img, kernel), kernel)


_CONN8 = np.ones((3, 3), dtype=np.uint8)


def connected_components(img: np.ndarray) -> LabelMap:
    """8-connected labeling; label ids follow raster first-encounter order."""
    raw, n = ndimage.label(img, structure=_CONN8)
    if n == 0:
        return LabelMap(raw.astype(np.int32), 0)
    flat = raw.ravel()
    nz = np.flatnonzero(flat)
    first = np.full(n + 1, flat.size, dtype=np.int64)
    # reversed so the earliest index wins
    first[flat[nz[::-1]]] = nz[::-1]
    order = np.argsort(first[1:], kind="stable")
    remap = np.zeros(n + 1, dtype=np.int32)
    remap[order + 1] = np.arange(1, n + 1)
    return LabelMap(remap[raw], n)


# Moore-neighborhood offsets, clockwise starting east (x, y)
_MOORE = [(1, 0), (1, 1), (0, 1), (-1, 1), (-1, 0), (-1, -1), (0, -1), (1, -1)]


def _trace_boundary(mask: np.ndarray, start: tuple[int, int]) -> np.ndarray:
    """Moore boundary tracing (clockwise) from the topmost-leftmost pixel."""
    h, w = mask.shape
    sx, sy = start

    def fg(x: int, y: int) -> bool:
        return 0 <= x < w and 0 <= y < h and bool(mask[y, x])

    boundary = [(sx, sy)]
    cur = (sx, sy)
    # start is the topmost-leftmost pixel, so its backtrack neighbor is west
    backtrack = 4
    first_move = None
    while True:
        found = False
        for i in range(8):
            d = (backtrack + 1 + i) % 8
            nx, ny = cur[0] + _MOORE[d][0], cur[1] + _MOORE[d][1]
            if fg(nx, ny):
                if (nx, ny) == (sx, sy) and first_move is not None:
                    return np.array(boundary, dtype=np.int64)
                if first_move is None:
                    first_move = d
                elif cur == (sx, sy) and d == first_move and len(boundary) > 1:
                    return np.array(boundary, dtype=np.int64)
                boundary.append((nx, ny))
                backtrack = (d + 4) % 8
                cur = (nx, ny)
                found = True
                break
        if not found:  # isolated pixel
            return np.array(boundary, dtype=np.int64)
        if len(boundary) > 4 * (h * w):  # safety net, unreachable in practice
            return np.array(boundary, dtype=np.int64)


def find_contours(img: np.ndarray) -> list[Contour]:
    """One outer contour per 8-connected foreground component.

    Holes are ignored; area is the filled pixel count. Ordered by the
    raster position of each component's topmost-leftmost pixel.
    """
    lm = connected_components(img)
    if lm.count == 0:
        return []
    labels = lm.labels
    contours = []
    objects = ndimage.find_objects(labels)
    areas = np.bincount(labels.ravel(), minlength=lm.count + 1)
    for lab in range(1, lm.count + 1):
        sl = objects[lab - 1]
        mask = labels[sl] == lab
        ys, xs = np.nonzero(mask)
        i = np.lexsort((xs, ys))[0]  # topmost, then leftmost
        b = _trace_boundary(mask, (int(xs[i]), int(ys[i])))
        oy, ox = sl[0].start, sl[1].start
        b = b + np.array([ox, oy])
        x0, y0 = int(b[:, 0].min()), int(b[:, 1].min())
        bw = int(b[:, 0].max()) - x0 + 1
        bh = int(b[:, 1].max()) - y0 + 1
        area = int(areas[lab])
        contours.append(
            Contour(
                boundary=b,
                bbox=Rect(x0, y0, bw, bh),
                area=area,
                fill_ratio=area / float(bw * bh),
            )
        )
    return contours


def _dp_simplify(pts: np.ndarray, eps: float) -> list[int]:
    """Douglas-Peucker on an open chain; returns kept indices."""
    keep = [0, len(pts) - 1]
    stack = [(0, len(pts) - 1)]
    while stack:
        i0, i1 = stack.pop()
        if i1 - i0 < 2:
            continue
        seg = pts[i1] - pts[i0]
        norm = math.hypot(float(seg[0]), float(seg[1]))
        rel = pts[i0 + 1 : i1] - pts[i0]
        if norm == 0:
            d = np.hypot(rel[:, 0], rel[:, 1])
        else:
            d = np.abs(rel[:, 0] * seg[1] - rel[:, 1] * seg[0]) / norm
        j = int(np.argmax(d))
        if d[j] > eps:
            idx = i0 + 1 + j
            keep.append(idx)
            stack.append((i0, idx))
            stack.append((idx, i1))
    return sorted(set(keep))


def approx_corners(contour: Contour, epsilon: float = 2.0) -> np.ndarray:
    """Polygonal approximation of a closed boundary (iterative endpoint fit)."""
    pts = contour.boundary
    if len(pts) < 3:
        return pts.copy()
    # split the closed loop at the two mutually farthest-ish anchor points
    d0 = np.hypot(pts[:, 0] - pts[0, 0], pts[:, 1] - pts[0, 1])
    k = int(np.argmax(d0))
    if k == 0:
        return pts[:1].copy()
    idx_a = _dp_simplify(pts[: k + 1], epsilon)
    chain_b = np.vstack([pts[k:], pts[:1]])
    idx_b = _dp_simplify(chain_b, epsilon)
    out = [tuple(pts[i]) for i in idx_a[:-1]]
    out += [tuple(chain_b[i]) for i in idx_b[:-1]]
    # drop collinear survivors between the two chains
    res = []
    n = len(out)
    for i in range(n):
        a, b, c = np.array(out[i - 1]), np.array(out[i]), np.array(out[(i + 1) % n])
        cross = (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
        v1 = b - a
        v2 = c - b
        if cross == 0 and np.dot(v1, v2) > 0:
            continue
        res.append(out[i])
    return np.array(res if res else out, dtype=np.int64)


def canny(
    img: np.ndarray, low: float | None = None, high: float | None = None
) -> np.ndarray:
    """Sobel gradients, non-maximum suppression, hysteresis linking.

    When thresholds are omitted they derive from the intensity median m:
    low = 0.66 m, high = 1.33 m (clamped to [0, 255]).
    """
    if low is None or high is None:
        m = float(np.median(img))
        low = max(0.0, min(255.0, 0.66 * m)) if low is None else low
        high = max(0.0, min(255.0, 1.33 * m)) if high is None else high
    if not (0 <= low <= high <= 255):
        raise ValueError("need 0 <= low <= high <= 255")
    f = img.astype(np.float64)
    kx = np.array([[-1, 0, 1], [-2, 0, 2], [-1, 0, 1]], dtype=np.float64)
    gx = ndimage.correlate(f, kx, mode="nearest")
    gy = ndimage.correlate(f, kx.T, mode="nearest")
    mag = np.hypot(gx, gy)
    ang = np.degrees(np.arctan2(gy, gx)) % 180.0

    # non-maximum suppression, 4 quantized directions
    h, w = img.shape
    padded = np.pad(mag, 1, mode="constant")

    def sh(dy: int, dx: int) -> np.ndarray:
        return padded[1 + dy : 1 + dy + h, 1 + dx : 1 + dx + w]

    d0 = (ang < 22.5) | (ang >= 157.5)
    d45 = (ang >= 22.5) & (ang < 67.5)
    d90 = (ang >= 67.5) & (ang < 112.5)
    d135 = (ang >= 112.5) & (ang < 157.5)
    # ties between equal neighbors break toward the earlier raster pixel,
    # keeping symmetric step edges single-pixel wide
    keep = np.zeros_like(mag, dtype=bool)
    keep |= d0 & (mag >= sh(0, 1)) & (mag > sh(0, -1))
    keep |= d45 & (mag >= sh(1, -1)) & (mag > sh(-1, 1))
    keep |= d90 & (mag >= sh(1, 0)) & (mag > sh(-1, 0))
    keep |= d135 & (mag >= sh(1, 1)) & (mag > sh(-1, -1))
    nms = np.where(keep, mag, 0.0)

    strong = nms >= high if high > 0 else nms > 0
    weak = nms >= low if low > 0 else nms > 0
    if not strong.any():
        return np.zeros_like(img, dtype=np.uint8)
    lab, n = ndimage.label(weak, structure=_CONN8)
    keep_ids = np.unique(lab[strong])
    keep_ids = keep_ids[keep_ids > 0]
    mask = np.isin(lab, keep_ids)
    return mask.astype(np.uint8)


def hough_lines(
    edges: np.ndarray,
    min_len: float | None = None,
    max_gap: int = 5,
    votes: int = 50,
    rho_step: float = 1.0,
    theta_step_deg: float = 1.0,
    seed: int = 0x5EED,
) -> list[LineSegment]:
    """Progressive probabilistic Hough transform for line segments.

    Point sampling uses a fixed internal seed, so identical inputs give
    identical output. Segments come back sorted by length descending.
    """
    h, w = edges.shape
    if min_len is None:
        min_len = 0.3 * min(w, h)
    ys, xs = np.nonzero(edges)
    if len(xs) == 0:
        return []
    rng = np.random.default_rng(seed)
    n_theta = int(round(180.0 / theta_step_deg))
    thetas = np.deg2rad(np.arange(n_theta) * theta_step_deg)
    cos_t, sin_t = np.cos(thetas), np.sin(thetas)
    max_rho = math.hypot(w, h)
    n_rho = int(2 * max_rho / rho_step) + 1
    acc = np.zeros((n_theta, n_rho), dtype=np.int32)
    alive = edges.astype(bool).copy()
    voted = np.zeros_like(alive)
    pts = np.column_stack([xs, ys])
    order = rng.permutation(len(pts))
    segments: list[LineSegment] = []

    for idx in order:
        x, y = int(pts[idx, 0]), int(pts[idx, 1])
        if not alive[y, x]:
            continue
        rhos = ((x * cos_t + y * sin_t + max_rho) / rho_step).astype(np.int32)
        acc[np.arange(n_theta), rhos] += 1
        voted[y, x] = True
        ti = int(np.argmax(acc[np.arange(n_theta), rhos]))
        if acc[ti, rhos[ti]] < votes:
            continue
        # walk along the line direction in both ways, tolerating gaps
        dx, dy = -sin_t[ti], cos_t[ti]  # unit vector along the line
        if abs(dx) >= abs(dy):
            step = (1.0 if dx > 0 else -1.0, dy / abs(dx) * (1 if dx > 0 else -1))
        else:
            step = (dx / abs(dy) * (1 if dy > 0 else -1), 1.0 if dy > 0 else -1.0)

        def walk(sgn: int) -> tuple[int, int]:
            cx, cy = float(x), float(y)
            last = (x, y)
            gap = 0
            while True:
                cx += sgn * step[0]
                cy += sgn * step[1]
                ix, iy = int(round(cx)), int(round(cy))
                if not (0 <= ix < w and 0 <= iy < h):
                    break
                hit = False
                for ddy in (0, -1, 1):
                    for ddx in (0, -1, 1):
                        jx, jy = ix + ddx, iy + ddy
                        if 0 <= jx < w and 0 <= jy < h and alive[jy, jx]:
                            hit = True
                            break
                    if hit:
                        break
                if alive[iy, ix] or hit:
                    last = (ix, iy)
                    gap = 0
                else:
                    gap += 1
                    if gap > max_gap:
                        break
            return last

        e0 = walk(-1)
        e1 = walk(+1)
        length = math.hypot(e1[0] - e0[0], e1[1] - e0[1])
        # erase the supporting pixels regardless, and unvote them
        cx, cy = float(e0[0]), float(e0[1])
        n_steps = int(round(length / math.hypot(*step))) + 1
        erased = []
        for _ in range(n_steps + 1):
            ix, iy = int(round(cx)), int(round(cy))
            for ddy in (-1, 0, 1):
                for ddx in (-1, 0, 1):
                    jx, jy = ix + ddx, iy + ddy
                    if 0 <= jx < w and 0 <= jy < h and alive[jy, jx]:
                        alive[jy, jx] = False
                        if voted[jy, jx]:
                            voted[jy, jx] = False
                            erased.append((jx, jy))
            cx += step[0]
            cy += step[1]
        for ex, ey in erased:
            r = ((ex * cos_t + ey * sin_t + max_rho) / rho_step).astype(np.int32)
            acc[np.arange(n_theta), r] -= 1
        if length >= min_len:
            segments.append(LineSegment(e0, e1))
    segments.sort(key=lambda s: (-s.length, s.p0, s.p1))
    return segments


def _resample_1d_coords(n_out: int, factor: int) -> np.ndarray:
    return np.arange(n_out, dtype=np.float64) / factor


def _cubic_kernel(t: np.ndarray) -> np.ndarray:
    """Keys bicubic kernel, a = -0.5."""
    a = -0.5
    t = np.abs(t)
    out = np.zeros_like(t)
    m1 = t <= 1
    m2 = (t > 1) & (t < 2)
    out[m1] = (a + 2) * t[m1] ** 3 - (a + 3) * t[m1] ** 2 + 1
    out[m2] = a * t[m2] ** 3 - 5 * a * t[m2] ** 2 + 8 * a * t[m2] - 4 * a
    return out


def upscale(img: np.ndarray, factor: int = 2, method: str = "bicubic") -> np.ndarray:
    """Integer upscaling; source coord = dest coord / factor, edges clamped."""
    if factor < 1:
        raise ValueError("factor must be >= 1")
    if factor == 1:
        return img.copy()
    h, w = img.shape[:2]
    if method == "nearest":
        return np.repeat(np.repeat(img, factor, axis=0), factor, axis=1)

    def interp_axis(arr: np.ndarray, n_in: int) -> np.ndarray:
        # arr shape (n_in, ...); interpolate along axis 0
        src = _resample_1d_coords(n_in * factor, factor)
        if method == "bilinear":
            i0 = np.floor(src).astype(int)
            frac = src - i0
            i1 = np.clip(i0 + 1, 0, n_in - 1)
            i0 = np.clip(i0, 0, n_in - 1)
            f = frac.reshape(-1, *([1] * (arr.ndim - 1)))
            return arr[i0] * (1 - f) + arr[i1] * f
        if method == "bicubic":
            i = np.floor(src).astype(int)
            frac = src - i
            acc = np.zeros((len(src),) + arr.shape[1:], dtype=np.float64)
            for k in range(-1, 3):
                idx = np.clip(i + k, 0, n_in - 1)
                wgt = _cubic_kernel(frac - k).reshape(-1, *([1] * (arr.ndim - 1)))
                acc += arr[idx] * wgt
            return acc
        raise ValueError(f"unknown method {method!r}")

    out = img.astype(np.float64)
    out = interp_axis(out, h)
    out = np.swapaxes(interp_axis(np.swapaxes(out, 0, 1), w), 0, 1)
    return np.clip(np.rint(out), 0, 255).astype(np.uint8)


def subtract_mask(img: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """White out pixels under mask=1; everything else passes through."""
    if img.shape[:2] != mask.shape[:2]:
        raise ValueError(
            f"dimension mismatch: image {img.shape[:2]} vs mask {mask.shape[:2]}"
        )
    out = img.copy()
    out[mask.astype(bool)] = 255
    return out
