"""Brute-force ground truth: tensor quadrature posteriors and dense solves.

These paths trade scaling for independence from the sampling code: posterior
expectations come from full tensor Gauss-Legendre grids (feasible only for a
handful of prior dimensions) and reference solves use dense LU factorization.
Hard caps refuse anything beyond desk scale instead of silently grinding.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InfeasibleError
from .fem import FemLevel, WorkTally, assemble
from .field import CoefficientField

__all__ = [
    "QuadratureGrid",
    "posterior_expectation_quadrature",
    "dense_reference_solve",
    "MAX_GRID_DIM",
    "MAX_GRID_ORDER",
    "MAX_DENSE_DOF",
]

MAX_GRID_DIM = 4
MAX_GRID_ORDER = 24
MAX_DENSE_DOF = 5000


@dataclass(frozen=True)
class QuadratureGrid:
    """Tensor Gauss-Legendre grid on [-1,1]^dim with prior-normalized weights."""

    dim: int
    order: int
    nodes: np.ndarray    # (n, dim)
    weights: np.ndarray  # (n,), sums to 1

    @classmethod
    def build(cls, dim: int, order: int) -> "QuadratureGrid":
        if dim < 1 or dim > MAX_GRID_DIM or order < 1 or order > MAX_GRID_ORDER:
            raise InfeasibleError(
                f"tensor grid refused: dim={dim} (cap {MAX_GRID_DIM}), "
                f"order={order} (cap {MAX_GRID_ORDER}); a full grid would hold "
                f"{order ** dim if dim >= 1 else 0} nodes"
            )
        x, w = np.polynomial.legendre.leggauss(order)
        w = w / 2.0  # prior weight du/2 per coordinate
        grids = np.meshgrid(*([x] * dim), indexing="ij")
        nodes = np.column_stack([g.ravel() for g in grids])
        weights = np.ones(len(nodes))
        mesh_w = np.meshgrid(*([w] * dim), indexing="ij")
        for gw in mesh_w:
            weights = weights * gw.ravel()
        return cls(dim=dim, order=order,
                   nodes=np.ascontiguousarray(nodes),
                   weights=np.ascontiguousarray(weights))


def posterior_expectation_quadrature(spec, g=None, grid: QuadratureGrid | None = None,
                                     order: int = 16,
                                     tally: WorkTally | None = None):
    """Posterior expectation and normalizing constant by tensor quadrature.

    g is None for the built-in QoI of the forward map, or a callable taking the
    (n, dim) node array and returning n observable values. Returns (E, Z).
    """
    if grid is None:
        grid = QuadratureGrid.build(spec.n_active, order)
    if grid.dim != spec.n_active:
        raise InfeasibleError("grid dimension does not match the posterior")
    phi, qoi, _ = spec.potential_batch(grid.nodes, tally=tally)
    like = np.exp(-phi)
    z = float(grid.weights @ like)
    vals = qoi if g is None else np.asarray(g(grid.nodes), dtype=float)
    e = float(grid.weights @ (like * vals)) / z
    return e, z


def dense_reference_solve(lvl: FemLevel, fld: CoefficientField, u, f=None):
    """Direct dense factorization solve of the same assembled system."""
    if lvl.ndof > MAX_DENSE_DOF:
        raise InfeasibleError(
            f"dense reference solve refused: {lvl.ndof} dof exceeds the "
            f"{MAX_DENSE_DOF} cap"
        )
    a, b = assemble(lvl, fld, u, f)
    return np.linalg.solve(a.toarray(), b)
