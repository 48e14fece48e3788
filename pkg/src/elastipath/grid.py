"""Discrete lifted domain: positions x orientations, with periodic angular axis.

The computational domain is a Cartesian grid over Omega x S^1.  Spatial axes
carry a physical spacing ``h_x`` (pixels); the angular axis is sampled at
``n_theta`` equispaced angles with spacing ``h_theta = 2*pi/n_theta`` so that
the axis closes exactly.  Offsets between nodes are always integer triples in
index space; the angular component wraps, the spatial components do not
(leaving the spatial domain means flowing out of the boundary).
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field

import numpy as np

TWO_PI = 2.0 * math.pi

FIELD_MAGIC = b"CPGF1"


class GridError(ValueError):
    """Invalid grid dimensions or out-of-range coordinates."""


@dataclass(frozen=True)
class LiftedGrid:
    """Discretization of Omega x S^1 with decoupled spatial/angular scales."""

    nx: int
    ny: int
    n_theta: int
    h_x: float
    h_theta: float
    origin: tuple[float, float] = (0.0, 0.0)

    def __post_init__(self):
        if self.nx < 2 or self.ny < 2 or self.n_theta < 2:
            raise GridError(
                f"grid extents must be >= 2, got ({self.nx}, {self.ny}, {self.n_theta})"
            )
        if not (self.h_x > 0.0) or not math.isfinite(self.h_x):
            raise GridError(f"h_x must be positive, got {self.h_x}")
        if abs(self.n_theta * self.h_theta - TWO_PI) > 1e-12 * TWO_PI:
            raise GridError(
                f"angular axis does not close: n_theta*h_theta = {self.n_theta * self.h_theta!r}"
            )

    @property
    def shape(self) -> tuple[int, int, int]:
        return (self.nx, self.ny, self.n_theta)

    @property
    def n_nodes(self) -> int:
        return self.nx * self.ny * self.n_theta

    def theta_at(self, i_theta: int) -> float:
        return (i_theta % self.n_theta) * self.h_theta

    def point_at(self, idx) -> "LiftedPoint":
        ix, iy, it = idx
        return LiftedPoint(
            self.origin[0] + ix * self.h_x,
            self.origin[1] + iy * self.h_x,
            self.theta_at(it),
        )

    def index_of(self, p: "LiftedPoint") -> tuple[int, int, int]:
        return index_of(self, p)

    def shift(self, idx, offset):
        return shift(self, idx, offset)

    def ravel(self, idx) -> int:
        """Flat index with theta innermost (row-major over (ix, iy, it))."""
        ix, iy, it = idx
        return (ix * self.ny + iy) * self.n_theta + it

    def unravel(self, flat: int) -> tuple[int, int, int]:
        it = flat % self.n_theta
        rest = flat // self.n_theta
        return (rest // self.ny, rest % self.ny, it)


@dataclass(frozen=True)
class LiftedPoint:
    """A point (x, y, theta) of the lifted domain; theta reduced mod 2*pi."""

    x: float
    y: float
    theta: float

    def __post_init__(self):
        object.__setattr__(self, "theta", self.theta % TWO_PI)

    @property
    def heading(self) -> np.ndarray:
        """Unit tangent vector (cos theta, sin theta)."""
        return np.array([math.cos(self.theta), math.sin(self.theta)])

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.theta])


def make_grid(nx: int, ny: int, n_theta: int, h_x: float) -> LiftedGrid:
    """Build a lifted grid; ``h_theta`` is derived as ``2*pi/n_theta``."""
    if nx < 2 or ny < 2 or n_theta < 2:
        raise GridError(f"grid extents must be >= 2, got ({nx}, {ny}, {n_theta})")
    if not (h_x > 0.0):
        raise GridError(f"h_x must be positive, got {h_x}")
    return LiftedGrid(int(nx), int(ny), int(n_theta), float(h_x), TWO_PI / int(n_theta))


def index_of(grid: LiftedGrid, p: LiftedPoint) -> tuple[int, int, int]:
    """Nearest-node indices of a lifted point.

    The angular index wraps and never fails; the physical axes raise if the
    nearest node falls outside the grid.
    """
    ix = round((p.x - grid.origin[0]) / grid.h_x)
    iy = round((p.y - grid.origin[1]) / grid.h_x)
    if not (0 <= ix < grid.nx and 0 <= iy < grid.ny):
        raise GridError(
            f"point ({p.x}, {p.y}) outside physical domain "
            f"[{grid.origin[0]}, {grid.origin[0] + (grid.nx - 1) * grid.h_x}] x "
            f"[{grid.origin[1]}, {grid.origin[1] + (grid.ny - 1) * grid.h_x}]"
        )
    it = round((p.theta % TWO_PI) / grid.h_theta) % grid.n_theta
    return (int(ix), int(iy), int(it))


def shift(grid: LiftedGrid, idx, offset):
    """Tail node ``idx - offset`` with angular wrap, or None on outflow.

    Spatial components that leave the domain encode the outflow boundary:
    the result is absent rather than clamped.
    """
    ix = idx[0] - offset[0]
    iy = idx[1] - offset[1]
    if not (0 <= ix < grid.nx and 0 <= iy < grid.ny):
        return None
    it = (idx[2] - offset[2]) % grid.n_theta
    return (int(ix), int(iy), int(it))


@dataclass
class ScalarField:
    """Real values sampled on a lifted grid, indexed (ix, iy, i_theta).

    Used for the orientation-dependent cost, the curvature prior and the
    geodesic distance map.  Only distance maps may carry the +inf sentinel
    (``allow_inf=True``); NaNs are never allowed.
    """

    grid: LiftedGrid
    values: np.ndarray
    allow_inf: bool = field(default=False, repr=False)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.shape != self.grid.shape:
            raise GridError(
                f"field shape {self.values.shape} does not match grid {self.grid.shape}"
            )
        if np.isnan(self.values).any():
            raise GridError("field contains NaN")
        if not self.allow_inf and not np.isfinite(self.values).all():
            raise GridError("field contains non-finite values")

    @classmethod
    def full(cls, grid: LiftedGrid, value: float, allow_inf: bool = False) -> "ScalarField":
        return cls(grid, np.full(grid.shape, value, dtype=np.float64), allow_inf=allow_inf)

    def copy(self) -> "ScalarField":
        return ScalarField(self.grid, self.values.copy(), allow_inf=self.allow_inf)

    def __getitem__(self, idx):
        return self.values[idx]

    def __setitem__(self, idx, value):
        self.values[idx] = value


def write_field(f, path_or_file) -> None:
    """Serialize a field to the flat binary container.

    Layout: magic ``CPGF1``; nx, ny, n_theta as little-endian uint32; h_x,
    h_theta as little-endian float64; values as float64 in (ix, iy, i_theta)
    C order.  The grid origin is not stored.
    """
    header = FIELD_MAGIC + struct.pack(
        "<IIIdd", f.grid.nx, f.grid.ny, f.grid.n_theta, f.grid.h_x, f.grid.h_theta
    )
    payload = np.ascontiguousarray(f.values, dtype="<f8").tobytes()
    if hasattr(path_or_file, "write"):
        path_or_file.write(header + payload)
    else:
        with open(path_or_file, "wb") as fh:
            fh.write(header + payload)


def read_field(path_or_file, allow_inf: bool = True) -> ScalarField:
    """Read a field written by :func:`write_field`."""
    if hasattr(path_or_file, "read"):
        raw = path_or_file.read()
    else:
        with open(path_or_file, "rb") as fh:
            raw = fh.read()
    if raw[:5] != FIELD_MAGIC:
        raise GridError(f"bad magic {raw[:5]!r}")
    nx, ny, nt, h_x, h_theta = struct.unpack("<IIIdd", raw[5 : 5 + 28])
    values = np.frombuffer(raw[5 + 28 :], dtype="<f8").reshape(nx, ny, nt).copy()
    grid = LiftedGrid(nx, ny, nt, h_x, h_theta)
    return ScalarField(grid, values, allow_inf=allow_inf)


PLANE_MAGIC = b"CPGP1"


def write_plane(values: np.ndarray, h_x: float, path_or_file) -> None:
    """Serialize a 2-D (nx, ny) map with the same header scheme as fields."""
    values = np.asarray(values, dtype=np.float64)
    if values.ndim != 2:
        raise GridError(f"expected 2-D map, got shape {values.shape}")
    header = PLANE_MAGIC + struct.pack("<IId", values.shape[0], values.shape[1], h_x)
    payload = np.ascontiguousarray(values, dtype="<f8").tobytes()
    if hasattr(path_or_file, "write"):
        path_or_file.write(header + payload)
    else:
        with open(path_or_file, "wb") as fh:
            fh.write(header + payload)


def read_plane(path_or_file) -> tuple[np.ndarray, float]:
    if hasattr(path_or_file, "read"):
        raw = path_or_file.read()
    else:
        with open(path_or_file, "rb") as fh:
            raw = fh.read()
    if raw[:5] != PLANE_MAGIC:
        raise GridError(f"bad magic {raw[:5]!r}")
    nx, ny, h_x = struct.unpack("<IId", raw[5 : 5 + 16])
    values = np.frombuffer(raw[5 + 16 :], dtype="<f8").reshape(nx, ny).copy()
    return values, h_x
