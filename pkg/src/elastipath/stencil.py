"""Adaptive finite-difference stencils for the lifted Hamiltonian.

Each quadrature control direction is rescaled into index space and expressed
as nonnegative weights on integer offsets through Selling's decomposition of
a slightly relaxed rank-one tensor.  The union over quadrature samples (with
duplicate offsets merged) is the neighborhood system of the solver.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .grid import LiftedGrid
from .hamiltonian import ModelParams, fejer_nodes_weights


class StencilError(RuntimeError):
    """Decomposition failure (non-SPD input or non-converging superbase)."""


@dataclass(frozen=True)
class WeightedOffset:
    """Nonnegative weight on an integer index-space offset."""

    weight: float
    offset: tuple[int, int, int]


@dataclass
class Stencil:
    """Merged weighted offsets approximating the Hamiltonian at one point."""

    entries: list[WeightedOffset]
    theta: float
    params: ModelParams
    point_index: tuple[int, int, int] | None = None

    def weights_offsets(self) -> tuple[np.ndarray, np.ndarray]:
        w = np.array([e.weight for e in self.entries])
        o = np.array([e.offset for e in self.entries], dtype=np.int64).reshape(-1, 3)
        return w, o


@dataclass
class SellingDecomposition:
    """Six (weight, integer offset) pairs reconstructing an SPD matrix."""

    weights: np.ndarray
    offsets: np.ndarray

    @property
    def pairs(self) -> list[WeightedOffset]:
        return [
            WeightedOffset(float(w), tuple(int(c) for c in o))
            for w, o in zip(self.weights, self.offsets)
        ]

    def reconstruct(self) -> np.ndarray:
        D = np.zeros((3, 3))
        for w, o in zip(self.weights, self.offsets):
            D += w * np.outer(o, o)
        return D


def selling_3d(D) -> SellingDecomposition:
    """Decompose an SPD 3x3 matrix over an obtuse superbase of Z^3.

    Raises StencilError for non-symmetric/non-positive-definite input or if
    the superbase flipping iteration does not settle within its cap (a sign
    of extreme ill-conditioning).
    """
    D = np.asarray(D, dtype=np.float64)
    if D.shape != (3, 3):
        raise StencilError(f"expected 3x3 matrix, got {D.shape}")
    if not np.isfinite(D).all() or not np.allclose(D, D.T, rtol=1e-10, atol=1e-12):
        raise StencilError("matrix must be finite and symmetric")
    eigs = np.linalg.eigvalsh(D)
    if eigs[0] <= 0.0:
        raise StencilError(f"matrix is not positive definite (eigenvalues {eigs})")
    w, e, ok = _kernels.selling_3d_core(D, _kernels.SELLING_TOL, _kernels.SELLING_MAX_ITER)
    if not ok:
        raise StencilError("superbase iteration did not converge (ill-conditioned input)")
    return SellingDecomposition(w, e)


def relaxed_tensor(v, eps: float) -> np.ndarray:
    """Rank-one tensor of v blended with eps^2 of the isotropic part."""
    v = np.asarray(v, dtype=np.float64).reshape(3)
    if not (0.0 < eps < 1.0):
        raise ValueError(f"eps must lie in (0, 1), got {eps}")
    if np.all(v == 0.0):
        raise ValueError("direction must be nonzero")
    return _kernels.relaxed_tensor_core(v, eps)


def directional_decomposition(v, eps: float) -> list[WeightedOffset]:
    """Weights/offsets with sum_k w_k <xhat,e_k>^2 = xhat^T D_eps(v) xhat.

    Offsets are oriented so that <e_k, v> >= 0, which makes the positive-part
    sum an O(eps^2) approximation of <xhat, v>_+^2 for upwind covectors.
    """
    v = np.asarray(v, dtype=np.float64).reshape(3)
    if np.all(v == 0.0):
        raise ValueError("direction must be nonzero")
    if not (0.0 < eps < 1.0):
        raise ValueError(f"eps must lie in (0, 1), got {eps}")
    w, e, ok = _kernels.directional_decomposition_core(v, eps)
    if not ok:
        raise StencilError("superbase iteration did not converge")
    return [
        WeightedOffset(float(wk), tuple(int(c) for c in ek))
        for wk, ek in zip(w, e)
        if wk > 0.0
    ]


def build_stencil(params: ModelParams, grid: LiftedGrid, theta: float,
                  L: int = 5, eps: float = 0.1) -> Stencil:
    """Stencil for a point with heading ``theta`` and prior value in params.

    Per quadrature sample the control direction is divided componentwise by
    (h_x, h_x, h_theta) before decomposition, so offsets are integer grid
    steps; sample weights are folded into the entry weights and duplicate
    offsets are merged by summation.  Deterministic for identical inputs.
    """
    if L < 1:
        raise ValueError(f"L must be >= 1, got {L}")
    if not (0.0 < eps < 1.0):
        raise ValueError(f"eps must lie in (0, 1), got {eps}")
    phis, mus = fejer_nodes_weights(L)
    out_w = np.empty(6 * L, np.float64)
    out_e = np.empty((6 * L, 3), np.int64)
    count = _kernels.build_stencil_core(
        float(theta), params.omega, params.beta, grid.h_x, grid.h_theta,
        phis, mus, float(eps), out_w, out_e)
    if count < 0:
        raise StencilError("superbase iteration did not converge")
    entries = [
        WeightedOffset(float(out_w[k]), tuple(int(c) for c in out_e[k]))
        for k in range(count)
    ]
    return Stencil(entries=entries, theta=float(theta), params=params)


def stencil_form(stencil: Stencil, grid: LiftedGrid, xhat) -> float:
    """Evaluate sum_k w_k <xhat_index, e_k>_+^2 for a physical covector.

    The covector is rescaled into index space consistently with the builder,
    so the result approximates the closed-form Hamiltonian at xhat.
    """
    h = np.asarray(xhat, dtype=np.float64).reshape(3)
    h_idx = np.array([h[0] * grid.h_x, h[1] * grid.h_x, h[2] * grid.h_theta])
    w, o = stencil.weights_offsets()
    if w.size == 0:
        return 0.0
    dots = o @ h_idx
    return float(np.sum(w * np.maximum(dots, 0.0) ** 2))


def dump_stencil(stencil: Stencil) -> str:
    """Plain-text dump, one entry per line: weight e_x e_y e_theta."""
    lines = [
        f"{e.weight:.17g} {e.offset[0]} {e.offset[1]} {e.offset[2]}"
        for e in stencil.entries
    ]
    return "\n".join(lines) + "\n"


@dataclass
class StencilCache:
    """Shared stencils keyed by (theta index, omega bucket).

    omega is quantized to buckets of width 1e-4, far below the sensitivity
    of the model, so nearby prior values reuse one stencil.  Intended to be
    either fully populated before a solve or used single-writer.
    """

    params_beta: float
    grid: LiftedGrid
    L: int = 5
    eps: float = 0.1
    _table: dict = field(default_factory=dict, repr=False)

    def get(self, i_theta: int, omega: float) -> Stencil:
        bucket = int(round(omega / _kernels.OMEGA_BUCKET))
        key = (i_theta % self.grid.n_theta, bucket)
        st = self._table.get(key)
        if st is None:
            params = ModelParams(self.params_beta, bucket * _kernels.OMEGA_BUCKET)
            st = build_stencil(
                params, self.grid, self.grid.theta_at(i_theta), self.L, self.eps)
            self._table[key] = st
        return st
