"""Curvature prior construction from a binary segmentation.

The reference-curvature map is assembled in stages: morphological thinning of
the segmentation, junction removal into disjoint pixel chains, smoothing and
arc-length resampling with per-sample curvature/tangent estimates, a labeled
nearest-centerline partition of the image, and finally the signed sampling of
the curvature onto every orientation slice of the lifted grid (positive when
the slice orientation runs with the centerline tangent, negated against it).

All 2-D maps here are indexed [ix, iy] like the lifted fields; image-order
arrays (rows = y) must be transposed at the boundary.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage
from skimage.morphology import thin as _guo_hall_thin

from .grid import TWO_PI, LiftedGrid, ScalarField


class PriorError(ValueError):
    """Invalid input to the prior construction."""


@dataclass
class Centerline:
    """Smoothed candidate centerline at unit arc-length spacing.

    ``tangent_angle`` is the traversal direction in [0, 2*pi); the axis
    representation in [0, pi) plus a direction flag is derived from it.
    Curvature follows the traversal direction (positive turns left).
    """

    samples: np.ndarray        # (M, 2) positions (x, y)
    curvature: np.ndarray      # (M,)
    normal: np.ndarray         # (M, 2) unit normals (tangent rotated +90 deg)
    tangent_angle: np.ndarray  # (M,) in [0, 2*pi)
    closed: bool = False

    def __post_init__(self):
        if self.samples.shape[0] < 2:
            raise PriorError("centerline needs at least 2 samples")

    @property
    def theta_axis(self) -> np.ndarray:
        """Tangent angle folded to [0, pi)."""
        return np.mod(self.tangent_angle, math.pi)

    @property
    def direction_flag(self) -> np.ndarray:
        """True where the traversal direction equals the axis representative."""
        return self.tangent_angle < math.pi

    @property
    def max_abs_curvature(self) -> float:
        return float(np.max(np.abs(self.curvature)))

    def __len__(self) -> int:
        return self.samples.shape[0]


@dataclass
class PriorMaps:
    """Extended curvature, tangent angle and region labels plus the lifted map."""

    phi: np.ndarray            # (nx, ny) curvature, NaN off support
    vartheta: np.ndarray       # (nx, ny) tangent angle, NaN off support
    region_label: np.ndarray   # (nx, ny) centerline index, -1 off support
    omega: ScalarField
    width: float               # tube half-width actually used
    degenerate: bool = False


def skeletonize(seg: np.ndarray) -> np.ndarray:
    """One-pixel-wide topology-preserving skeleton of a binary map.

    Uses two-subiteration morphological thinning iterated to stability.
    """
    seg = np.asarray(seg)
    if seg.dtype != bool:
        vals = np.unique(seg)
        if not np.all(np.isin(vals, (0, 1))):
            raise PriorError("segmentation must be binary")
        seg = seg.astype(bool)
    if not seg.any():
        raise PriorError("segmentation has empty foreground")
    return _guo_hall_thin(seg)


_N8 = np.array([[1, 1, 1], [1, 0, 1], [1, 1, 1]], dtype=np.uint8)


def _neighbor_counts(mask: np.ndarray) -> np.ndarray:
    return ndimage.convolve(mask.astype(np.uint8), _N8, mode="constant")


def split_at_junctions(skeleton: np.ndarray, min_len: int = 10) -> list[np.ndarray]:
    """Junction-free pixel chains of a skeleton, each traced end to end.

    Pixels with three or more 8-neighbors are junctions; the junction mask
    is dilated by one pixel before removal since raw junction clusters often
    span several pixels.  Removal is iterated until every remaining pixel
    has at most two neighbors, then connected components are walked from an
    endpoint (or around, for closed rings).  Chains shorter than ``min_len``
    pixels are dropped.  Returned chains are float (n, 2) arrays of (ix, iy).
    """
    mask = np.asarray(skeleton).astype(bool).copy()
    for _ in range(16):
        counts = _neighbor_counts(mask)
        junctions = mask & (counts >= 3)
        if not junctions.any():
            break
        junctions = ndimage.binary_dilation(junctions, structure=_N8.astype(bool))
        mask &= ~junctions

    labels, n = ndimage.label(mask, structure=_N8.astype(bool))
    chains = []
    for j in range(1, n + 1):
        pix = np.argwhere(labels == j)
        if pix.shape[0] < max(2, min_len):
            continue
        chain = _trace_chain(pix)
        if chain is not None and chain.shape[0] >= min_len:
            chains.append(chain.astype(np.float64))
    return chains


def _trace_chain(pixels: np.ndarray):
    """Order the pixels of a degree-<=2 component into a path or a cycle."""
    pset = {tuple(p) for p in map(tuple, pixels)}
    nbrs = {}
    for p in pset:
        adj = []
        for dx in (-1, 0, 1):
            for dy in (-1, 0, 1):
                if dx == 0 and dy == 0:
                    continue
                q = (p[0] + dx, p[1] + dy)
                if q in pset:
                    adj.append(q)
        nbrs[p] = adj
    ends = [p for p, adj in nbrs.items() if len(adj) <= 1]
    start = min(ends) if ends else min(pset)
    order = [start]
    seen = {start}
    cur = start
    while True:
        nxt = None
        for q in nbrs[cur]:
            if q not in seen:
                nxt = q
                break
        if nxt is None:
            break
        order.append(nxt)
        seen.add(nxt)
        cur = nxt
    if len(order) != len(pset):
        # leftover branch pixels despite pruning; keep the longest walk
        pass
    return np.array(order, dtype=np.float64)


def _is_closed_chain(chain: np.ndarray) -> bool:
    return bool(np.max(np.abs(chain[0] - chain[-1])) <= 1.5)


def smooth_and_measure(chain: np.ndarray, window: int = 5) -> Centerline:
    """Smooth a pixel chain, resample at unit arc length, measure geometry.

    Coordinates get a moving average of half-width ``window`` (shrunk near
    open endpoints); the result is resampled to unit spacing and the
    curvature is the arc-length derivative of the unwrapped tangent angle.
    """
    chain = np.asarray(chain, dtype=np.float64)
    n = chain.shape[0]
    if n < max(window, 5):
        raise PriorError(f"chain of {n} pixels is too short to smooth (window {window})")
    closed = _is_closed_chain(chain)

    sm = np.empty_like(chain)
    if closed:
        for i in range(n):
            idx = (np.arange(i - window, i + window + 1)) % n
            sm[i] = chain[idx].mean(axis=0)
    else:
        for i in range(n):
            w = min(window, i, n - 1 - i)
            sm[i] = chain[i - w: i + w + 1].mean(axis=0)

    pts = np.vstack([sm, sm[:1]]) if closed else sm
    seg = np.diff(pts, axis=0)
    ds = np.hypot(seg[:, 0], seg[:, 1])
    s = np.concatenate([[0.0], np.cumsum(ds)])
    total = s[-1]
    if total < 2.0:
        raise PriorError("chain degenerates after smoothing")
    m = int(math.floor(total)) + 1
    si = np.linspace(0.0, total, m)
    x = np.interp(si, s, pts[:, 0])
    y = np.interp(si, s, pts[:, 1])
    samples = np.column_stack([x, y])
    if closed:
        samples = samples[:-1]
        m -= 1

    if closed:
        dx = (np.roll(samples[:, 0], -1) - np.roll(samples[:, 0], 1)) * 0.5
        dy = (np.roll(samples[:, 1], -1) - np.roll(samples[:, 1], 1)) * 0.5
    else:
        dx = np.gradient(samples[:, 0])
        dy = np.gradient(samples[:, 1])
    tang = np.arctan2(dy, dx)
    tang_unwrapped = np.unwrap(tang)

    # the pixel-chain tangents stay noisy after coordinate smoothing; average
    # the unwrapped angles over the same window before differencing
    k = samples.shape[0]
    tang_s = np.empty(k)
    if closed:
        for i in range(k):
            idx = np.arange(i - window, i + window + 1) % k
            ref = tang_unwrapped[i]
            d = np.mod(tang_unwrapped[idx] - ref + math.pi, TWO_PI) - math.pi
            tang_s[i] = ref + d.mean()
    else:
        for i in range(k):
            w = min(window, i, k - 1 - i)
            tang_s[i] = tang_unwrapped[i - w: i + w + 1].mean()

    if closed:
        kap = np.roll(tang_s, -1) - np.roll(tang_s, 1)
        kap = np.mod(kap + math.pi, TWO_PI) - math.pi
        kap *= 0.5
        step = si[1] - si[0] if m > 1 else 1.0
        kap = kap / step
    else:
        kap = np.gradient(tang_s, si[: samples.shape[0]])
        # one-sided end estimates on shrunk windows spike; hold the nearest
        # interior value instead
        t = min(window, max(1, k // 2 - 1))
        kap[:t] = kap[t]
        kap[k - t:] = kap[k - t - 1]
    speed = np.hypot(dx, dy)
    speed[speed == 0.0] = 1.0
    tx, ty = dx / speed, dy / speed
    normal = np.column_stack([-ty, tx])
    return Centerline(
        samples=samples,
        curvature=kap,
        normal=normal,
        tangent_angle=np.mod(tang_unwrapped, TWO_PI),
        closed=closed,
    )


def _segment_arrays(cl: Centerline):
    a = cl.samples
    if cl.closed:
        b = np.vstack([a[1:], a[:1]])
    else:
        b = a[1:]
        a = a[:-1]
    d = b - a
    len2 = np.maximum(np.sum(d * d, axis=1), 1e-12)
    return a, d, len2


def _project_to_centerline(cl: Centerline, pts: np.ndarray):
    """Exact nearest point on the sample polyline for each query point.

    Returns (distance, segment index, segment parameter in [0, 1]).
    """
    a, d, len2 = _segment_arrays(cl)
    best_d2 = np.full(pts.shape[0], np.inf)
    best_seg = np.zeros(pts.shape[0], dtype=np.int64)
    best_t = np.zeros(pts.shape[0])
    for s0 in range(0, a.shape[0], 256):
        s1 = min(s0 + 256, a.shape[0])
        diff = pts[:, None, :] - a[None, s0:s1, :]
        t = np.clip(np.einsum("psc,sc->ps", diff, d[s0:s1]) / len2[s0:s1], 0.0, 1.0)
        proj = diff - t[:, :, None] * d[None, s0:s1, :]
        d2 = np.sum(proj * proj, axis=2)
        kmin = np.argmin(d2, axis=1)
        dmin = d2[np.arange(pts.shape[0]), kmin]
        upd = dmin < best_d2
        best_d2[upd] = dmin[upd]
        best_seg[upd] = kmin[upd] + s0
        best_t[upd] = t[upd, kmin[upd]]
    return np.sqrt(best_d2), best_seg, best_t


def voronoi_labels(centerlines: list[Centerline], shape) -> tuple[np.ndarray, np.ndarray]:
    """Nearest-centerline index and distance per pixel, ties to smallest index."""
    if not centerlines:
        raise PriorError("need at least one centerline")
    nx, ny = shape
    xs, ys = np.meshgrid(np.arange(nx, dtype=np.float64),
                         np.arange(ny, dtype=np.float64), indexing="ij")
    pts = np.column_stack([xs.ravel(), ys.ravel()])
    best = np.full(pts.shape[0], np.inf)
    label = np.zeros(pts.shape[0], dtype=np.int32)
    for j, cl in enumerate(centerlines):
        dist, _, _ = _project_to_centerline(cl, pts)
        upd = dist < best
        best[upd] = dist[upd]
        label[upd] = j
    return label.reshape(nx, ny), best.reshape(nx, ny)


def _interp_angle(a0: float, a1: float, t: float) -> float:
    d = (a1 - a0 + math.pi) % TWO_PI - math.pi
    return (a0 + t * d) % TWO_PI


def build_prior(centerlines: list[Centerline], labels: np.ndarray,
                distances: np.ndarray, u_max: float,
                grid: LiftedGrid) -> PriorMaps:
    """Assemble the signed curvature prior on the lifted grid.

    The tube half-width is ``min(u_max, 0.9 / max_j ||kappa_j||_inf)`` so the
    normal-offset parametrization stays injective.  A pixel is supported when
    its nearest centerline point is within that width, realizes a normal
    offset (the displacement is not dominated by a tangential component, as
    happens past open endpoints), and lies in the pixel's own label region.
    On support, omega(x, theta) carries the nearest-sample curvature with a
    sign following the orientation match; elsewhere it is zero.
    """
    nx, ny, nt = grid.shape
    phi = np.full((nx, ny), np.nan)
    vartheta = np.full((nx, ny), np.nan)
    region = np.full((nx, ny), -1, dtype=np.int32)
    omega = np.zeros(grid.shape)

    if not centerlines:
        warnings.warn("no centerlines: curvature prior is identically zero")
        return PriorMaps(phi, vartheta, region, ScalarField(grid, omega), 0.0, True)

    kmax = max(cl.max_abs_curvature for cl in centerlines)
    width = min(float(u_max), 0.9 / kmax) if kmax > 0 else float(u_max)
    if not (width > 0.0):
        warnings.warn("no admissible tube width: curvature prior is identically zero")
        return PriorMaps(phi, vartheta, region, ScalarField(grid, omega), 0.0, True)

    xs, ys = np.meshgrid(np.arange(nx, dtype=np.float64),
                         np.arange(ny, dtype=np.float64), indexing="ij")
    labels = np.asarray(labels)
    distances = np.asarray(distances)
    cand = distances <= width

    for j, cl in enumerate(centerlines):
        sel = cand & (labels == j)
        if not sel.any():
            continue
        pts = np.column_stack([xs[sel], ys[sel]])
        dist, seg, t = _project_to_centerline(cl, pts)
        a, d, _ = _segment_arrays(cl)
        foot = a[seg] + t[:, None] * d[seg]
        disp = pts - foot
        # tangential leakage beyond open endpoints disqualifies the pixel
        seg_dir = d[seg] / np.maximum(np.hypot(d[seg, 0], d[seg, 1]), 1e-12)[:, None]
        tangential = np.abs(np.einsum("pc,pc->p", disp, seg_dir))
        good = (dist <= width) & (tangential <= 0.75)

        i0 = seg
        i1 = (seg + 1) % len(cl)
        kap = (1.0 - t) * cl.curvature[i0] + t * cl.curvature[i1]
        ang = np.array([
            _interp_angle(cl.tangent_angle[p], cl.tangent_angle[q], tt)
            for p, q, tt in zip(i0, i1, t)
        ])

        sx = xs[sel].astype(np.int64)
        sy = ys[sel].astype(np.int64)
        sx, sy = sx[good], sy[good]
        phi[sx, sy] = kap[good]
        vartheta[sx, sy] = ang[good]
        region[sx, sy] = j

    thetas = np.arange(nt) * grid.h_theta
    sup = region >= 0
    if sup.any():
        match = np.cos(thetas[None, :] - vartheta[sup][:, None])
        sign = np.where(match >= 0.0, 1.0, -1.0)  # sign(0) := +1
        omega[sup] = phi[sup][:, None] * sign
    return PriorMaps(phi, vartheta, region, ScalarField(grid, omega), width, False)


def prior_from_segmentation(seg: np.ndarray, grid: LiftedGrid,
                            min_len: int = 10, window: int = 5,
                            u_max: float = 10.0) -> PriorMaps:
    """Full pipeline: segmentation (indexed [ix, iy]) to prior maps."""
    skel = skeletonize(seg)
    chains = split_at_junctions(skel, min_len=min_len)
    centerlines = []
    for ch in chains:
        try:
            centerlines.append(smooth_and_measure(ch, window=window))
        except PriorError:
            continue
    if not centerlines:
        return build_prior([], np.full(seg.shape, -1, np.int32),
                           np.full(seg.shape, np.inf), u_max, grid)
    labels, dist = voronoi_labels(centerlines, seg.shape)
    return build_prior(centerlines, labels, dist, u_max, grid)
