"""Single-pass fast-marching solver for the lifted discrete HJB system.

At every node the discrete equation

    sum_k w_k ((U(x) - U(x - e_k))_+)^2 = (1/2) psi(x)^2

holds with the per-node stencil weights/offsets; the causal label-setting
sweep accepts nodes in nondecreasing value order, optionally stopping as soon
as a target node is accepted.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .grid import LiftedGrid, LiftedPoint, ScalarField, index_of
from .hamiltonian import fejer_nodes_weights
from .stencil import Stencil

RESIDUAL_TOL = 1e-8


class SolverError(RuntimeError):
    """Solver precondition or internal invariant failure."""


class UnreachableTargetError(SolverError):
    """Propagation exhausted the grid without accepting any target."""


@dataclass
class SeedSet:
    """Nonempty list of (grid index, initial value) boundary conditions."""

    entries: list[tuple[tuple[int, int, int], float]]

    def __post_init__(self):
        if not self.entries:
            raise SolverError("seed set must not be empty")
        for idx, val in self.entries:
            if not (math.isfinite(val) and val >= 0.0):
                raise SolverError(f"seed value must be finite and >= 0, got {val}")

    @classmethod
    def zeros(cls, indices) -> "SeedSet":
        return cls([(tuple(i), 0.0) for i in indices])

    def validate(self, grid: LiftedGrid) -> None:
        for (ix, iy, it), _ in self.entries:
            if not (0 <= ix < grid.nx and 0 <= iy < grid.ny and 0 <= it < grid.n_theta):
                raise SolverError(f"seed index ({ix}, {iy}, {it}) out of range")


@dataclass
class SolveReport:
    """Counters and outcome of one solve."""

    accepted_count: int
    reached_target: tuple[int, int, int] | None
    target_value: float | None
    wall_time: float
    heap_pops: int = 0
    heap_pushes: int = 0
    n_nodes: int = 0
    residual_max: float | None = None

    def to_text(self) -> str:
        lines = [
            f"accepted_count: {self.accepted_count}",
            f"reached_target: {self.reached_target}",
            f"target_value: {self.target_value}",
            f"wall_time: {self.wall_time:.6f}",
            f"heap_pops: {self.heap_pops}",
            f"heap_pushes: {self.heap_pushes}",
            f"n_nodes: {self.n_nodes}",
            f"residual_max: {self.residual_max}",
        ]
        return "\n".join(lines) + "\n"


def local_update(current: dict, stencil: Stencil, rhs: float) -> float:
    """Reference one-node update from neighbor values keyed by offset.

    ``current`` maps stencil offsets to the neighbor value U(x - e); offsets
    absent from the map (outflow or unvisited) are skipped.  Solves the
    piecewise quadratic for the unique consistent root.
    """
    if rhs < 0.0:
        raise SolverError(f"rhs must be >= 0, got {rhs}")
    pairs = []
    for entry in stencil.entries:
        v = current.get(entry.offset)
        if v is not None and math.isfinite(v):
            pairs.append((float(v), entry.weight))
    if not pairs:
        raise SolverError("no finite neighbor value available")
    pairs.sort()
    vals = np.array([p[0] for p in pairs])
    ws = np.array([p[1] for p in pairs])
    return float(_kernels.local_update_core(vals, ws, len(pairs), float(rhs)))


def _prepare(grid: LiftedGrid, psi: ScalarField, omega: ScalarField | None):
    if psi.grid.shape != grid.shape:
        raise SolverError("cost field does not share the solve grid")
    if np.any(psi.values <= 0.0) or not np.isfinite(psi.values).all():
        raise SolverError("cost psi must be strictly positive and finite")
    if omega is None:
        om = np.zeros(grid.n_nodes)
    else:
        if omega.grid.shape != grid.shape:
            raise SolverError("prior field does not share the solve grid")
        om = np.ascontiguousarray(omega.values, dtype=np.float64).reshape(-1)
    rhs = 0.5 * np.ascontiguousarray(psi.values, dtype=np.float64).reshape(-1) ** 2
    return om, rhs


def solve(grid: LiftedGrid, psi: ScalarField, omega: ScalarField | None,
          beta: float, seeds: SeedSet, targets=None,
          L: int = 5, eps: float = 0.1,
          verify_residual: bool = True) -> tuple[ScalarField, SolveReport]:
    """Solve the discrete HJB system from the seed set.

    When ``targets`` (an iterable of grid indices) is given, the sweep stops
    at the first accepted target and every non-accepted node keeps the +inf
    sentinel.  The accepted-value sequence is checked to be nondecreasing and
    the discrete residual of the final field is verified.
    """
    if not (beta > 0.0):
        raise SolverError(f"beta must be positive, got {beta}")
    seeds.validate(grid)
    om, rhs = _prepare(grid, psi, omega)
    phis, mus = fejer_nodes_weights(L)

    t0 = time.perf_counter()
    node_sid, st_w, st_e, st_ptr, st_slice, n_st, status = _kernels.build_stencil_tables(
        grid.nx, grid.ny, grid.n_theta, om, float(beta), grid.h_x, grid.h_theta,
        phis, mus, float(eps))
    if status != _kernels.STATUS_OK:
        raise SolverError("stencil construction failed (superbase iteration)")
    st_ptr = st_ptr[: n_st + 1]
    cand_ptr, cand_e = _kernels.build_reverse_candidates(
        grid.n_theta, st_w, st_e, st_ptr, st_slice[:n_st], n_st)

    seed_idx = np.array([grid.ravel(i) for i, _ in seeds.entries], dtype=np.int64)
    seed_val = np.array([v for _, v in seeds.entries], dtype=np.float64)
    if targets is not None:
        target_idx = np.array([grid.ravel(tuple(t)) for t in targets], dtype=np.int64)
    else:
        target_idx = np.empty(0, dtype=np.int64)

    value, accepted, acc_count, reached, pops, pushes, mono = _kernels.fmm_run(
        grid.nx, grid.ny, grid.n_theta, rhs, node_sid, st_w, st_e, st_ptr,
        cand_ptr, cand_e, seed_idx, seed_val, target_idx)
    wall = time.perf_counter() - t0

    if mono > 0:
        raise SolverError(f"monotone acceptance violated at {mono} nodes")

    report = SolveReport(
        accepted_count=int(acc_count),
        reached_target=grid.unravel(int(reached)) if reached >= 0 else None,
        target_value=float(value[reached]) if reached >= 0 else None,
        wall_time=wall,
        heap_pops=int(pops),
        heap_pushes=int(pushes),
        n_nodes=grid.n_nodes,
    )

    if verify_residual:
        is_seed = np.zeros(grid.n_nodes, np.uint8)
        is_seed[seed_idx] = 1
        worst = _kernels.residual_max_scaled(
            grid.nx, grid.ny, grid.n_theta, value, accepted, is_seed, rhs,
            node_sid, st_w, st_e, st_ptr)
        report.residual_max = float(worst)
        if worst > RESIDUAL_TOL:
            raise SolverError(f"discrete residual {worst:.3e} exceeds {RESIDUAL_TOL:.0e}")

    dist = ScalarField(grid, value.reshape(grid.shape), allow_inf=True)
    return dist, report


def bidirectional_endpoints(grid: LiftedGrid, source_xy, theta_s: float,
                            target_xy, theta_y: float):
    """Seed/target index pairs for orientation-agnostic tracking.

    Both endpoints are duplicated at theta and theta + pi so the solve does
    not depend on a traversal direction chosen by the user.
    """
    s0 = index_of(grid, LiftedPoint(source_xy[0], source_xy[1], theta_s))
    s1 = index_of(grid, LiftedPoint(source_xy[0], source_xy[1], theta_s + math.pi))
    y0 = index_of(grid, LiftedPoint(target_xy[0], target_xy[1], theta_y))
    y1 = index_of(grid, LiftedPoint(target_xy[0], target_xy[1], theta_y + math.pi))
    return [s0, s1], [y0, y1]


def solve_bidirectional(grid: LiftedGrid, psi: ScalarField, omega: ScalarField | None,
                        beta: float, source_xy, theta_s: float,
                        target_xy, theta_y: float,
                        L: int = 5, eps: float = 0.1,
                        verify_residual: bool = True):
    """Solve with paired seeds/targets, stopping at the first target accepted.

    Returns (distance field, chosen target index, report).  Raises
    UnreachableTargetError when the sweep exhausts the grid without accepting
    either target orientation.
    """
    seed_indices, target_indices = bidirectional_endpoints(
        grid, source_xy, theta_s, target_xy, theta_y)
    seeds = SeedSet.zeros(seed_indices)
    dist, report = solve(grid, psi, omega, beta, seeds, targets=target_indices,
                         L=L, eps=eps, verify_residual=verify_residual)
    if report.reached_target is None:
        raise UnreachableTargetError(
            "no target orientation was reached by the propagation")
    return dist, report.reached_target, report
