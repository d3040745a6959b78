"""Orthonormal Legendre chaos surrogates of the parameter-to-observable map.

Coefficients are computed by quadrature projection of the finite element
forward map at a fixed build level, over an anisotropic weighted-total-degree
candidate set; the kept set is the best-N rows by Euclidean coefficient norm
(observations and QoI jointly). Basis polynomials are normalized against the
uniform prior on [-1,1]: L_n = sqrt(2n+1) P_n, so tensor products are an
orthonormal family and discarded energy adds up by Parseval.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InfeasibleError
from .fem import ForwardEval, ForwardOperator, ObservationSet
from .field import CoefficientField

__all__ = [
    "legendre_eval",
    "tensor_legendre",
    "candidate_indices",
    "GpcSurrogate",
    "build_surrogate",
    "select_top",
    "ClampedQoi",
    "surrogate_l2_error",
    "save_surrogate",
    "load_surrogate",
]

MAX_BUILD_DIM = 16
MAX_BUILD_NODES = 200_000


def legendre_eval(max_degree: int, t) -> np.ndarray:
    """Orthonormal Legendre values L_0..L_max_degree at t, shape (deg+1, n).

    Orthonormal for the weight du/2 on [-1,1]: (1/2) * integral L_m L_n = d_mn.
    """
    t = np.atleast_1d(np.asarray(t, dtype=float))
    if np.any(np.abs(t) > 1.0 + 1e-12):
        raise ValueError("Legendre basis is defined on [-1, 1]")
    out = np.empty((max_degree + 1, t.size))
    out[0] = 1.0
    if max_degree >= 1:
        out[1] = t
    for n in range(1, max_degree):
        out[n + 1] = ((2 * n + 1) * t * out[n] - n * out[n - 1]) / (n + 1)
    scale = np.sqrt(2.0 * np.arange(max_degree + 1) + 1.0)
    return out * scale[:, None]


def tensor_legendre(degrees, u) -> float:
    """Product Legendre value L_nu(u) for one multi-index and one point."""
    degrees = np.asarray(degrees, dtype=int)
    u = np.asarray(u, dtype=float)
    if degrees.shape != u.shape:
        raise ValueError("degrees and point must share a shape")
    val = 1.0
    for d, t in zip(degrees, u):
        val *= legendre_eval(int(d), np.array([t]))[int(d), 0]
    return float(val)


def index_weights(n_dims: int) -> np.ndarray:
    """Anisotropic degree weights w_j = 1 + log2(j+1) for 1-based coordinate j."""
    j = np.arange(1, n_dims + 1, dtype=float)
    return 1.0 + np.log2(j + 1.0)


def candidate_indices(n_dims: int, cap: float) -> np.ndarray:
    """All multi-indices with sum_j nu_j * w_j <= cap, sorted lexicographically."""
    if n_dims < 1 or n_dims > MAX_BUILD_DIM:
        raise InfeasibleError(f"candidate sets support 1..{MAX_BUILD_DIM} dims")
    w = index_weights(n_dims)
    out: list[tuple[int, ...]] = []

    def rec(prefix, budget, j):
        if j == n_dims:
            out.append(tuple(prefix))
            return
        d = 0
        while d * w[j] <= budget + 1e-12:
            prefix.append(d)
            rec(prefix, budget - d * w[j], j + 1)
            prefix.pop()
            d += 1

    rec([], float(cap), 0)
    out.sort()
    return np.array(out, dtype=np.int64)


def _basis_matrix(degrees: np.ndarray, nodes: np.ndarray) -> np.ndarray:
    """Evaluate all tensor basis polynomials at all nodes, shape (N, n_nodes)."""
    n_idx, n_dims = degrees.shape
    vander = []
    for j in range(n_dims):
        maxdeg = int(degrees[:, j].max()) if n_idx else 0
        vander.append(legendre_eval(maxdeg, nodes[:, j]))
    out = np.ones((n_idx, nodes.shape[0]))
    for j in range(n_dims):
        out *= vander[j][degrees[:, j], :]
    return out


@dataclass
class GpcSurrogate:
    """Truncated chaos expansion of (observations, QoI) at one build level.

    Exposes the same forward-evaluator protocol as ForwardOperator so a
    posterior spec can run chains against it; evaluations cost no dofs and a
    small fixed flop estimate per call.
    """

    n_active: int
    level: int
    k: int
    degrees: np.ndarray        # (N, n_active), rows sorted by coefficient norm
    coeffs: np.ndarray         # (N, k+1)
    total_energy: float
    tail_energy: float
    build_ndof: float
    build_flops: float
    cap: float
    quad_orders: tuple

    @property
    def n_terms(self) -> int:
        return self.degrees.shape[0]

    @property
    def ndof(self) -> int:
        return 0

    @property
    def eval_flops(self) -> float:
        return float(self.n_terms * (self.n_active + self.k + 2))

    def batch_flops(self, iters: np.ndarray) -> np.ndarray:
        return np.full(iters.shape[0], self.eval_flops)

    def eval_batch(self, coords: np.ndarray) -> np.ndarray:
        coords = np.atleast_2d(np.asarray(coords, dtype=float))
        if coords.shape[1] != self.n_active:
            raise ValueError(
                f"expected {self.n_active} coords per row, got {coords.shape[1]}"
            )
        basis = _basis_matrix(self.degrees, coords)   # (N, M)
        return basis.T @ self.coeffs                  # (M, k+1)

    def forward_batch(self, coords: np.ndarray):
        vals = self.eval_batch(coords)
        iters = np.zeros(vals.shape[0], dtype=np.int64)
        return vals, iters

    def forward(self, u) -> ForwardEval:
        vals = self.eval_batch(np.asarray(u, dtype=float)[None, :])[0]
        return ForwardEval(obs=vals[: self.k].copy(), qoi=float(vals[self.k]),
                           iters=0, ndof=0, flops=self.eval_flops)

    def row_norms(self) -> np.ndarray:
        return np.linalg.norm(self.coeffs, axis=1)


def _lex_key(row: np.ndarray) -> tuple:
    return tuple(int(x) for x in row)


def _order_rows(degrees: np.ndarray, coeffs: np.ndarray):
    """Sort rows by descending norm, lexicographic degree tie-break."""
    norms = np.linalg.norm(coeffs, axis=1)
    order = sorted(range(len(norms)),
                   key=lambda i: (-norms[i], _lex_key(degrees[i])))
    order = np.array(order, dtype=np.int64)
    return degrees[order], coeffs[order]


def _force_zero_row(degrees: np.ndarray, coeffs: np.ndarray, all_degrees,
                    all_coeffs):
    """Ensure the constant index is kept (replacing the weakest row if needed)."""
    if np.any(~degrees.any(axis=1)):
        return degrees, coeffs
    zero_pos = int(np.flatnonzero(~all_degrees.any(axis=1))[0])
    degrees = degrees.copy()
    coeffs = coeffs.copy()
    degrees[-1] = all_degrees[zero_pos]
    coeffs[-1] = all_coeffs[zero_pos]
    return degrees, coeffs


def build_surrogate(fld: CoefficientField, dim: int, obs: ObservationSet,
                    n_active: int, level: int, cap: float,
                    n_keep: int | None = None, quad_order: int = 12,
                    f=None, tol_factor: float = 1e-2) -> GpcSurrogate:
    """Project the forward map onto the candidate set by tensor quadrature.

    For n_active <= 4 every coordinate gets quad_order Gauss points; beyond
    that the per-coordinate order shrinks to what the candidate degrees need
    (the anisotropic weights make high coordinates low-degree). Refuses builds
    whose node count exceeds the desk-scale cap, reporting the estimate.
    """
    cand = candidate_indices(n_active, cap)
    if n_keep is not None and not 1 <= n_keep <= len(cand):
        raise ValueError(f"n_keep must lie in 1..{len(cand)}")
    maxdeg = cand.max(axis=0)
    if n_active <= 4:
        orders = [int(quad_order)] * n_active
    else:
        orders = [min(int(quad_order), int(d) + 2) for d in maxdeg]
    n_nodes = int(np.prod([float(o) for o in orders]))
    if n_nodes > MAX_BUILD_NODES:
        raise InfeasibleError(
            f"surrogate build refused: tensor grid would hold {n_nodes} nodes "
            f"(cap {MAX_BUILD_NODES}); lower cap or quad_order"
        )
    axes = [np.polynomial.legendre.leggauss(o) for o in orders]
    grids = np.meshgrid(*[a[0] for a in axes], indexing="ij")
    nodes = np.column_stack([g.ravel() for g in grids])
    weights = np.ones(len(nodes))
    for gw in np.meshgrid(*[a[1] / 2.0 for a in axes], indexing="ij"):
        weights = weights * gw.ravel()

    op = ForwardOperator(fld, dim, level, n_active, obs, f=f,
                         tol_factor=tol_factor)
    vals, iters = op.forward_batch(nodes)
    build_ndof = float(op.ndof) * len(nodes)
    build_flops = float(op.batch_flops(iters).sum())

    basis = _basis_matrix(cand, nodes)
    coeffs = basis @ (weights[:, None] * vals)
    degrees, coeffs = _order_rows(cand, coeffs)
    total_energy = float(np.sum(coeffs * coeffs))
    if n_keep is not None and n_keep < len(degrees):
        kept_d, kept_c = _force_zero_row(degrees[:n_keep], coeffs[:n_keep],
                                         degrees, coeffs)
    else:
        kept_d, kept_c = degrees, coeffs
    kept_energy = float(np.sum(kept_c * kept_c))
    return GpcSurrogate(
        n_active=n_active, level=level, k=obs.k,
        degrees=np.ascontiguousarray(kept_d),
        coeffs=np.ascontiguousarray(kept_c),
        total_energy=total_energy,
        tail_energy=total_energy - kept_energy,
        build_ndof=build_ndof, build_flops=build_flops,
        cap=float(cap), quad_orders=tuple(orders),
    )


def select_top(sur: GpcSurrogate, n_keep: int) -> GpcSurrogate:
    """Restrict a surrogate to its n_keep strongest rows (constant always kept)."""
    if not 1 <= n_keep <= sur.n_terms:
        raise ValueError(f"n_keep must lie in 1..{sur.n_terms}")
    kept_d, kept_c = _force_zero_row(sur.degrees[:n_keep], sur.coeffs[:n_keep],
                                     sur.degrees, sur.coeffs)
    kept_energy = float(np.sum(kept_c * kept_c))
    return GpcSurrogate(
        n_active=sur.n_active, level=sur.level, k=sur.k,
        degrees=np.ascontiguousarray(kept_d),
        coeffs=np.ascontiguousarray(kept_c),
        total_energy=sur.total_energy,
        tail_energy=sur.total_energy - kept_energy,
        build_ndof=sur.build_ndof, build_flops=sur.build_flops,
        cap=sur.cap, quad_orders=sur.quad_orders,
    )


class ClampedQoi:
    """QoI of a surrogate clipped to [-bound, bound], counting clamp events."""

    def __init__(self, sur: GpcSurrogate, bound: float):
        if bound <= 0:
            raise ValueError("cutoff bound must be positive")
        self.sur = sur
        self.bound = float(bound)
        self.n_clamped = 0

    def __call__(self, rows: np.ndarray) -> np.ndarray:
        q = self.sur.eval_batch(rows)[:, self.sur.k]
        clipped = np.clip(q, -self.bound, self.bound)
        self.n_clamped += int(np.sum(clipped != q))
        return clipped


def surrogate_l2_error(sur: GpcSurrogate, fld: CoefficientField, dim: int,
                       obs: ObservationSet, level_ref: int | None = None,
                       order: int = 16, f=None,
                       tol_factor: float = 1e-2) -> float:
    """Prior-weighted L2 distance between surrogate and FEM observation maps."""
    from .oracle import QuadratureGrid

    level_ref = sur.level if level_ref is None else level_ref
    grid = QuadratureGrid.build(sur.n_active, order)
    op = ForwardOperator(fld, dim, level_ref, sur.n_active, obs, f=f,
                         tol_factor=tol_factor)
    ref, _ = op.forward_batch(grid.nodes)
    approx = sur.eval_batch(grid.nodes)
    diff = ref[:, : sur.k] - approx[:, : sur.k]
    err2 = float(grid.weights @ np.sum(diff * diff, axis=1))
    return float(np.sqrt(max(err2, 0.0)))


# ---------------------------------------------------------------------------
# Serialization: a line-oriented text table with hex floats (bit-exact).

_HEADER = "gpc-surrogate v1"


def _fmt(x: float) -> str:
    return float(x).hex()


def save_surrogate(sur: GpcSurrogate, path) -> None:
    lines = [_HEADER]
    lines.append(
        f"n_active={sur.n_active} level={sur.level} k={sur.k} "
        f"n_terms={sur.n_terms}"
    )
    lines.append(
        f"cap={_fmt(sur.cap)} total_energy={_fmt(sur.total_energy)} "
        f"tail_energy={_fmt(sur.tail_energy)} build_ndof={_fmt(sur.build_ndof)} "
        f"build_flops={_fmt(sur.build_flops)}"
    )
    lines.append("quad_orders=" + ",".join(str(o) for o in sur.quad_orders))
    for row_d, row_c in zip(sur.degrees, sur.coeffs):
        pairs = " ".join(f"{j}:{int(d)}" for j, d in enumerate(row_d) if d > 0)
        coeffs = " ".join(_fmt(c) for c in row_c)
        lines.append(f"{pairs or '-'} | {coeffs}")
    with open(path, "w", encoding="ascii") as fh:
        fh.write("\n".join(lines) + "\n")


def load_surrogate(path) -> GpcSurrogate:
    with open(path, "r", encoding="ascii") as fh:
        lines = [ln.rstrip("\n") for ln in fh]
    if not lines or lines[0] != _HEADER:
        raise ValueError("not a surrogate file")
    meta1 = dict(item.split("=") for item in lines[1].split())
    meta2 = dict(item.split("=") for item in lines[2].split())
    quad_orders = tuple(int(x) for x in lines[3].split("=")[1].split(","))
    n_active = int(meta1["n_active"])
    n_terms = int(meta1["n_terms"])
    k = int(meta1["k"])
    degrees = np.zeros((n_terms, n_active), dtype=np.int64)
    coeffs = np.empty((n_terms, k + 1))
    for r, line in enumerate(lines[4:4 + n_terms]):
        left, right = line.split(" | ")
        if left != "-":
            for pair in left.split():
                j, d = pair.split(":")
                degrees[r, int(j)] = int(d)
        coeffs[r] = [float.fromhex(tok) for tok in right.split()]
    return GpcSurrogate(
        n_active=n_active, level=int(meta1["level"]), k=k,
        degrees=degrees, coeffs=coeffs,
        total_energy=float.fromhex(meta2["total_energy"]),
        tail_energy=float.fromhex(meta2["tail_energy"]),
        build_ndof=float.fromhex(meta2["build_ndof"]),
        build_flops=float.fromhex(meta2["build_flops"]),
        cap=float.fromhex(meta2["cap"]), quad_orders=quad_orders,
    )
