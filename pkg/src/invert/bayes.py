"""Posterior model for the inverse diffusion problem.

The prior is uniform on [-1,1]^J (product of du_j/2), the likelihood Gaussian:
data = observations + noise, and the potential is
phi(u) = 0.5 * | inv_sqrt_cov (data - G(u)) |^2, so the posterior density
w.r.t. the prior is exp(-phi)/Z. Different discretization fidelities share the
same data and noise; only the forward operator changes.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field

import numpy as np

from .errors import InfeasibleError
from .fem import ForwardEval, ForwardOperator, ObservationSet, WorkTally
from .field import CoefficientField
from .rng import rng_stream

__all__ = [
    "NoiseModel",
    "PosteriorSpec",
    "PosteriorFamily",
    "synthesize_data",
    "hellinger_quadrature",
]


@dataclass(frozen=True)
class NoiseModel:
    """Gaussian observation noise with SPD covariance (or exactly zero)."""

    cov: np.ndarray
    sqrt: np.ndarray | None
    inv_sqrt: np.ndarray | None

    @classmethod
    def iso(cls, sigma: float, k: int) -> "NoiseModel":
        """Isotropic noise sigma^2 * I; sigma = 0 gives noiseless data synthesis."""
        if sigma < 0:
            raise ValueError("sigma must be nonnegative")
        eye = np.eye(k)
        if sigma == 0.0:
            return cls(cov=0.0 * eye, sqrt=None, inv_sqrt=None)
        return cls(cov=sigma * sigma * eye, sqrt=sigma * eye,
                   inv_sqrt=eye / sigma)

    @classmethod
    def full(cls, cov: np.ndarray) -> "NoiseModel":
        cov = np.asarray(cov, dtype=float)
        chol = np.linalg.cholesky(cov)
        return cls(cov=cov, sqrt=chol, inv_sqrt=np.linalg.inv(chol))

    @property
    def k(self) -> int:
        return self.cov.shape[0]

    def whiten(self, v: np.ndarray) -> np.ndarray:
        if self.inv_sqrt is None:
            raise ValueError("degenerate (zero) noise model cannot whiten")
        return v @ self.inv_sqrt.T

    def weighted_norm(self, v: np.ndarray) -> float:
        return float(np.linalg.norm(self.whiten(v)))

    def sample(self, rng: np.random.Generator) -> np.ndarray:
        xi = rng.standard_normal(self.k)
        if self.sqrt is None:
            return np.zeros(self.k)
        return self.sqrt @ xi


@dataclass
class PosteriorSpec:
    """One posterior fidelity: shared data/noise plus a forward evaluator.

    The forward handle can be a finite element operator or a surrogate; it only
    needs forward(u) -> ForwardEval and forward_batch(coords) -> (vals, iters).
    """

    field: CoefficientField
    obs: ObservationSet
    noise: NoiseModel
    data: np.ndarray
    op: ForwardOperator

    @property
    def n_active(self) -> int:
        return self.op.n_active

    @property
    def level(self) -> int:
        return self.op.level

    def potential_from_obs(self, obs_vals: np.ndarray) -> np.ndarray:
        """Potential for rows of observation vectors (vectorized)."""
        resid = self.noise.whiten(self.data[None, :] - np.atleast_2d(obs_vals))
        return 0.5 * np.sum(resid * resid, axis=1)

    def potential_eval(self, u) -> tuple[float, ForwardEval]:
        ev = self.op.forward(u)
        phi = float(self.potential_from_obs(ev.obs[None, :])[0])
        return phi, ev

    def potential(self, u) -> float:
        return self.potential_eval(u)[0]

    def potential_batch(self, coords, tally: WorkTally | None = None):
        """(phi, qoi, iters) arrays for a batch of parameter rows."""
        vals, iters = self.op.forward_batch(coords)
        phi = self.potential_from_obs(vals[:, : self.obs.k])
        if tally is not None:
            tally.add_batch(self.op, iters)
        return phi, vals[:, self.obs.k], iters


class PosteriorFamily:
    """Factory of posterior fidelities sharing field, observations, and data."""

    def __init__(self, fld: CoefficientField, dim: int, obs: ObservationSet,
                 noise: NoiseModel, data: np.ndarray, f=None,
                 tol_factor: float = 1e-2, cache: bool = False):
        self.field = fld
        self.dim = dim
        self.obs = obs
        self.noise = noise
        self.data = np.asarray(data, dtype=float)
        self.f = f
        self.tol_factor = tol_factor
        self.cache = cache
        self._ops: dict[tuple[int, int], ForwardOperator] = {}

    def clamp_dim(self, n_active: int) -> int:
        """Clamp a schedule dimension to the field's mode count."""
        return min(n_active, self.field.n_modes)

    def operator(self, n_active: int, level: int) -> ForwardOperator:
        key = (n_active, level)
        if key not in self._ops:
            self._ops[key] = ForwardOperator(
                self.field, self.dim, level, n_active, self.obs, f=self.f,
                tol_factor=self.tol_factor, cache=self.cache,
            )
        return self._ops[key]

    def spec(self, n_active: int, level: int) -> PosteriorSpec:
        return PosteriorSpec(field=self.field, obs=self.obs, noise=self.noise,
                             data=self.data, op=self.operator(n_active, level))


def synthesize_data(fld: CoefficientField, dim: int, obs: ObservationSet,
                    u_true, noise: NoiseModel, seed: int, ref_level: int,
                    f=None, tol_factor: float = 1e-2) -> np.ndarray:
    """Observed data at a reference discretization plus one noise draw.

    The reference forward solve uses every mode of the field and a tight solver
    tolerance so the data does not inherit the coarse-run bias.
    """
    u_true = np.asarray(u_true, dtype=float)
    op = ForwardOperator(fld, dim, ref_level, fld.n_modes, obs, f=f,
                         tol_factor=tol_factor)
    ev = op.forward(u_true)
    rng = rng_stream(seed, 0)
    return ev.obs + noise.sample(rng)


def hellinger_quadrature(spec_a: PosteriorSpec, spec_b: PosteriorSpec,
                         order: int = 16) -> float:
    """Hellinger distance between two posterior fidelities by tensor quadrature.

    Both specs must share the prior dimension (small enough for a tensor grid).
    """
    from .oracle import QuadratureGrid

    if spec_a.n_active != spec_b.n_active:
        raise InfeasibleError("posteriors live on different prior dimensions")
    grid = QuadratureGrid.build(spec_a.n_active, order)
    phi_a, _, _ = spec_a.potential_batch(grid.nodes)
    phi_b, _, _ = spec_b.potential_batch(grid.nodes)
    ea = np.exp(-phi_a)
    eb = np.exp(-phi_b)
    za = float(grid.weights @ ea)
    zb = float(grid.weights @ eb)
    diff = np.sqrt(ea / za) - np.sqrt(eb / zb)
    d2 = 0.5 * float(grid.weights @ (diff * diff))
    return float(np.sqrt(min(max(d2, 0.0), 1.0)))
