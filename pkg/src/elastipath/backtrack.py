"""Geodesic extraction by gradient descent on the computed distance field.

The minimal path is recovered by integrating the backtracking ODE: the
velocity is the Hamiltonian's covector derivative evaluated at the upwind
distance gradient, followed backwards from the query point until a seed is
reached, then reversed so the result runs source to target.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .grid import TWO_PI, LiftedGrid, LiftedPoint, ScalarField
from .hamiltonian import ModelParams, hamiltonian_gradient
from .stencil import build_stencil

DESCENT_TOL = 1e-6


class BacktrackError(RuntimeError):
    """Stagnation or iteration-cap failure while descending the field."""


@dataclass
class GeodesicPath:
    """Lifted polyline samples with physical projection and curvature.

    ``points`` runs source to target after reparametrization, with ``u`` the
    uniform curve parameter in [0, 1] and ``distance`` the arrival value of
    the distance map at the query point.
    """

    points: np.ndarray               # (M, 3) lifted samples (x, y, theta)
    u: np.ndarray                    # (M,) parameter values
    curvature: np.ndarray            # (M,) per-sample curvature (1/px)
    distance: float
    grid: LiftedGrid
    beta: float
    seed: tuple | None = None
    target: tuple | None = None

    @property
    def physical(self) -> np.ndarray:
        return self.points[:, :2]

    def __len__(self) -> int:
        return self.points.shape[0]

    def to_json_dict(self) -> dict:
        g = self.grid
        return {
            "grid": {"nx": g.nx, "ny": g.ny, "n_theta": g.n_theta,
                     "h_x": g.h_x, "h_theta": g.h_theta},
            "beta": self.beta,
            "distance": self.distance,
            "samples": [
                {"u": float(ui), "x": float(p[0]), "y": float(p[1]),
                 "theta": float(p[2]), "kappa": float(k)}
                for ui, p, k in zip(self.u, self.points, self.curvature)
            ],
        }

    def to_json(self, indent=None) -> str:
        return json.dumps(self.to_json_dict(), indent=indent)


def path_from_json(text: str) -> GeodesicPath:
    d = json.loads(text)
    g = d["grid"]
    grid = LiftedGrid(g["nx"], g["ny"], g["n_theta"], g["h_x"], g["h_theta"])
    pts = np.array([[s["x"], s["y"], s["theta"]] for s in d["samples"]])
    u = np.array([s["u"] for s in d["samples"]])
    kap = np.array([s["kappa"] for s in d["samples"]])
    return GeodesicPath(pts, u, kap, float(d["distance"]), grid, float(d["beta"]))


def _wrap_angle(t: float) -> float:
    return t % TWO_PI


def _angle_dist(a: float, b: float) -> float:
    d = (a - b) % TWO_PI
    return min(d, TWO_PI - d)


class _FieldSampler:
    """Trilinear interpolation and upwind gradients on a lifted field.

    Nodes carrying the +inf sentinel are dropped from interpolation with the
    remaining weights renormalized; the gradient at each corner node picks,
    per axis, the one-sided difference toward the smaller neighbor (the
    upwind side of the front).
    """

    def __init__(self, dist: ScalarField):
        self.grid = dist.grid
        self.v = dist.values

    def _corners(self, p):
        g = self.grid
        fx = min(max(p[0] / g.h_x, 0.0), g.nx - 1.0)
        fy = min(max(p[1] / g.h_x, 0.0), g.ny - 1.0)
        ft = (p[2] % TWO_PI) / g.h_theta
        ix0, iy0, it0 = int(fx), int(fy), int(ft) % g.n_theta
        ix0 = min(ix0, g.nx - 2)
        iy0 = min(iy0, g.ny - 2)
        rx, ry, rt = fx - ix0, fy - iy0, ft - int(ft)
        out = []
        for dx in (0, 1):
            for dy in (0, 1):
                for dt in (0, 1):
                    w = ((1 - rx) if dx == 0 else rx) \
                        * ((1 - ry) if dy == 0 else ry) \
                        * ((1 - rt) if dt == 0 else rt)
                    out.append(((ix0 + dx, iy0 + dy, (it0 + dt) % g.n_theta), w))
        return out

    def value(self, p) -> float:
        total, acc = 0.0, 0.0
        for (ix, iy, it), w in self._corners(p):
            v = self.v[ix, iy, it]
            if np.isfinite(v) and w > 0.0:
                total += w
                acc += w * v
        # demand real support: a sliver of finite corners deep inside the
        # unvisited region must read as unvisited, not as a finite value
        if total < 0.25:
            return math.inf
        return acc / total

    def _node_gradient(self, ix, iy, it):
        g = self.grid
        v = self.v
        c = v[ix, iy, it]
        if not np.isfinite(c):
            return None
        grad = np.zeros(3)
        for axis, h in ((0, g.h_x), (1, g.h_x), (2, g.h_theta)):
            if axis == 0:
                lo = v[ix - 1, iy, it] if ix > 0 else math.inf
                hi = v[ix + 1, iy, it] if ix < g.nx - 1 else math.inf
            elif axis == 1:
                lo = v[ix, iy - 1, it] if iy > 0 else math.inf
                hi = v[ix, iy + 1, it] if iy < g.ny - 1 else math.inf
            else:
                lo = v[ix, iy, (it - 1) % g.n_theta]
                hi = v[ix, iy, (it + 1) % g.n_theta]
            if lo < hi:
                grad[axis] = (c - lo) / h if np.isfinite(lo) else 0.0
            elif np.isfinite(hi):
                grad[axis] = (hi - c) / h
        return grad

    def gradient(self, p) -> np.ndarray:
        total = 0.0
        acc = np.zeros(3)
        for (ix, iy, it), w in self._corners(p):
            if w <= 0.0:
                continue
            gr = self._node_gradient(ix, iy, it)
            if gr is not None:
                total += w
                acc += w * gr
        if total <= 0.0:
            raise BacktrackError("gradient undefined: all corner nodes unvisited")
        return acc / total


class _OmegaSampler:
    def __init__(self, omega: ScalarField | None):
        self.field = omega

    def __call__(self, p) -> float:
        if self.field is None:
            return 0.0
        g = self.field.grid
        fx = min(max(p[0] / g.h_x, 0.0), g.nx - 1.0)
        fy = min(max(p[1] / g.h_x, 0.0), g.ny - 1.0)
        it = round((p[2] % TWO_PI) / g.h_theta) % g.n_theta
        return float(self.field.values[round(fx), round(fy), it])


def backtrack(distance: ScalarField, beta: float, start: LiftedPoint,
              seeds, omega: ScalarField | None = None,
              step: float | None = None) -> GeodesicPath:
    """Integrate the descent ODE from ``start`` back to the seed set.

    ``seeds`` is an iterable of lifted points or grid indices.  The step is
    h_x/2 by default; the walk stops within 2*h_x (physical) of any seed and
    raises on stagnation or when the iteration cap is hit.  The returned
    path is reparametrized source -> target.
    """
    grid = distance.grid
    if step is None:
        step = 0.5 * grid.h_x
    if step <= 0.0:
        raise ValueError(f"step must be positive, got {step}")

    seed_pts = []
    for s in seeds:
        if isinstance(s, LiftedPoint):
            seed_pts.append(s.as_array())
        else:
            seed_pts.append(grid.point_at(tuple(s)).as_array())
    seed_pts = np.array(seed_pts).reshape(-1, 3)

    sampler = _FieldSampler(distance)
    om = _OmegaSampler(omega)
    stop_radius = 2.0 * grid.h_x
    cap = 50 * (grid.nx + grid.ny + grid.n_theta)

    p = start.as_array()
    d0 = sampler.value(p)
    if not np.isfinite(d0):
        raise BacktrackError("distance not finite at the start point")

    pts = [p.copy()]
    d_prev = d0
    theta_scale = grid.h_x / grid.h_theta

    def near_seed(q) -> bool:
        return bool(np.min(np.hypot(seed_pts[:, 0] - q[0], seed_pts[:, 1] - q[1]))
                    <= stop_radius)

    def discrete_fallback(q):
        """One step to the lowest-valued node among stencil tails and the
        3x3x3 box; the discrete field has no minima away from seeds, so
        repeated hops always make progress toward the seed set."""
        idx = grid.index_of(LiftedPoint(q[0], q[1], q[2]))
        params = ModelParams(beta, om(grid.point_at(idx).as_array()))
        st = build_stencil(params, grid, grid.theta_at(idx[2]))
        offsets = [e.offset for e in st.entries]
        offsets += [(dx, dy, dt) for dx in (-1, 0, 1) for dy in (-1, 0, 1)
                    for dt in (-1, 0, 1) if (dx, dy, dt) != (0, 0, 0)]
        best, best_v = None, sampler.v[idx]
        for off in offsets:
            tail = grid.shift(idx, off)
            if tail is None:
                continue
            tv = sampler.v[tail]
            if tv < best_v:
                best, best_v = tail, tv
        if best is None:
            raise BacktrackError("stagnation: no descending stencil neighbor")
        return grid.point_at(best).as_array()

    for _ in range(cap):
        if near_seed(p):
            break
        params = ModelParams(beta, om(p))
        ghat = sampler.gradient(p)
        vel = hamiltonian_gradient(params, p[2], ghat)
        speed = math.sqrt(vel[0] ** 2 + vel[1] ** 2 + (vel[2] * theta_scale) ** 2)
        if speed < 1e-12:
            q = discrete_fallback(p)
        else:
            q = p - step * vel / speed
            q[0] = min(max(q[0], 0.0), (grid.nx - 1) * grid.h_x)
            q[1] = min(max(q[1], 0.0), (grid.ny - 1) * grid.h_x)
            q[2] = _wrap_angle(q[2])
        d_new = sampler.value(q)
        if not (d_new <= d_prev + DESCENT_TOL * max(1.0, abs(d_prev))):
            # the continuous step failed to descend; hop to the best grid
            # neighbor instead (its node value strictly decreases, so the
            # walk cannot cycle even if the interpolated reading wobbles)
            q = discrete_fallback(p)
            d_new = sampler.value(q)
        p = q
        d_prev = d_new
        pts.append(p.copy())
    else:
        raise BacktrackError(f"iteration cap {cap} exceeded")

    pts = np.array(pts[::-1])  # source first
    m = pts.shape[0]
    u = np.linspace(0.0, 1.0, m) if m > 1 else np.array([0.0])
    kap = estimate_curvature_samples(pts) if m >= 3 else np.zeros(m)
    return GeodesicPath(points=pts, u=u, curvature=kap, distance=float(d0),
                        grid=grid, beta=beta,
                        seed=tuple(seed_pts[0]), target=(start.x, start.y, start.theta))


def estimate_curvature_samples(points: np.ndarray) -> np.ndarray:
    """Curvature from lifted samples: d(theta)/du divided by physical speed.

    The angular track is unwrapped before differencing; interior samples use
    central differences, endpoints one-sided ones.  Samples with degenerate
    speed are filled by linear interpolation from their neighbors.
    """
    pts = np.asarray(points, dtype=np.float64)
    m = pts.shape[0]
    if m < 3:
        raise ValueError("need at least 3 samples to estimate curvature")
    theta = np.unwrap(pts[:, 2])
    x, y = pts[:, 0], pts[:, 1]
    dtheta = np.gradient(theta)
    dx = np.gradient(x)
    dy = np.gradient(y)
    speed = np.hypot(dx, dy)
    kap = np.zeros(m)
    ok = speed > 1e-9
    kap[ok] = dtheta[ok] / speed[ok]
    if not ok.all():
        idx = np.arange(m)
        if ok.any():
            kap[~ok] = np.interp(idx[~ok], idx[ok], kap[ok])
    return kap


def estimate_curvature(path: GeodesicPath) -> np.ndarray:
    """Curvature profile of a backtracked path (see estimate_curvature_samples)."""
    return estimate_curvature_samples(path.points)
