"""Multilevel MCMC estimator for posterior expectations of the solution QoI.

The target expectation at truncation dimension J_L and mesh level L is split
into a double telescope over posterior levels l (measure refinement) and
solution levels l' (integrand refinement). Each (l, l') term couples the
integrand difference dl_{l'} = qoi(J_{l'}, l') - qoi(J_{l'-1}, l'-1) with the
potential difference dphi_l = phi(J_l, l) - phi(J_{l-1}, l-1) through a
normalizer-ratio correction, and is estimated from two independent chains:

    term = A + B * C
    A = mean over the (J_l, l) chain of (1 - exp(dphi_l)) * dl_{l'}
    B = mean over the (J_l, l) chain of exp(dphi_l) - 1
    C = mean over the (J_{l-1}, l-1) chain of dl_{l'}

At l = 0 the coarser measure carries zero mass and the term degenerates to the
plain average of dl_{l'}; at l' = 0 the integrand difference degenerates to
qoi(J_0, 0) itself. Summing terms over the full rectangle of indices
reproduces the single-level expectation exactly; the production schedule cuts
the rectangle to the triangle l + l' <= L, whose sample counts shrink
geometrically away from the corner.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .bayes import PosteriorFamily, PosteriorSpec
from .errors import SolverFailure
from .fem import WorkTally
from .rng import rng_stream
from .sampler import PHI_CLAMP, batch_means_se

__all__ = [
    "MlmcmcSchedule",
    "make_schedule",
    "LevelDifferenceTerm",
    "level_difference_term",
    "MlmcmcEstimate",
    "estimate",
    "telescoped_rectangle_check",
]


@dataclass(frozen=True)
class MlmcmcSchedule:
    """Level hierarchy and per-term chain lengths for one multilevel run.

    j_dims[i] = 2^ceil(i/q) is the nominal truncation dimension of level i
    (clamped to the field's mode count at the point of use); terms (l, l')
    run for l' <= lp_max(l) = max_level - l with 4^(max_level - l - l') steps.
    """

    max_level: int
    q: float
    master_seed: int
    j_dims: tuple

    def __post_init__(self):
        if self.max_level < 0:
            raise ValueError("max_level must be >= 0")
        if not self.q > 0:
            raise ValueError("truncation rate q must be positive")

    def lp_max(self, l: int) -> int:
        return self.max_level - l

    def steps(self, l: int, lp: int) -> int:
        if l < 0 or lp < 0 or l + lp > self.max_level:
            raise ValueError(f"term ({l}, {lp}) is outside the schedule")
        return 1 << (2 * (self.max_level - l - lp))

    @property
    def pairs(self) -> list:
        return [(l, lp) for l in range(self.max_level + 1)
                for lp in range(self.lp_max(l) + 1)]

    def total_steps(self) -> int:
        return sum(self.steps(l, lp) for l, lp in self.pairs)


def make_schedule(max_level: int, q: float,
                  master_seed: int = 0) -> MlmcmcSchedule:
    """Schedule with J_l = 2^ceil(l/q) and M_{ll'} = 4^(L-l-l')."""
    if max_level < 0:
        raise ValueError("max_level must be >= 0")
    if not q > 0:
        raise ValueError("truncation rate q must be positive")
    dims = tuple(2 ** math.ceil(l / q) for l in range(max_level + 1))
    return MlmcmcSchedule(max_level=max_level, q=float(q),
                          master_seed=int(master_seed), j_dims=dims)


@dataclass
class LevelDifferenceTerm:
    """One (l, l') cell of the telescoped estimator, with its diagnostics."""

    l: int
    lp: int
    n_steps: int
    a_term: float
    b_term: float
    c_term: float
    contribution: float
    var_integrand: float
    se: float
    max_abs_dphi: float
    max_abs_dell: float
    n_clamped: int
    accept_rate_fine: float
    accept_rate_coarse: float | None
    work: WorkTally = field(default_factory=WorkTally)


def _guarded_exp(dphi: np.ndarray) -> tuple[np.ndarray, int]:
    clipped = np.clip(dphi, -PHI_CLAMP, PHI_CLAMP)
    n_clamped = int(np.sum(clipped != dphi))
    return np.exp(clipped), n_clamped


class _Chain:
    """One independence-sampler chain plus lazy evaluations at other levels.

    The chain state lives on [-1, 1]^n_dim with n_dim at least the potential's
    active dimension; trailing coordinates do not enter the acceptance ratio
    and simply ride along with accepted proposals, which leaves the product
    target (posterior times uniform prior on the tail) invariant. Values of
    other (dimension, level) pairs are computed once per distinct occupied
    state and gathered back onto the step axis.
    """

    def __init__(self, spec_pot: PosteriorSpec, n_dim: int, n_steps: int,
                 rng: np.random.Generator, work: WorkTally, label: str):
        self.spec_pot = spec_pot
        self.work = work
        self.label = label
        j = spec_pot.n_active
        init = 2.0 * rng.uniform(size=n_dim) - 1.0
        draws = rng.uniform(size=(n_steps, n_dim + 1))
        proposals = 2.0 * draws[:, :n_dim] - 1.0
        accept_u = np.ascontiguousarray(draws[:, n_dim])
        self.rows = np.vstack([init[None, :], proposals])
        phi_all, qoi_all, _ = self._batch(spec_pot, self.rows[:, :j], "target")
        idx = np.empty(n_steps, dtype=np.int64)
        n_acc = _kernels.acceptance_scan(
            phi_all[0], np.ascontiguousarray(phi_all[1:]), accept_u,
            PHI_CLAMP, idx)
        self.occ = idx + 1
        self.accept_rate = float(n_acc) / n_steps
        self._phi_all = phi_all
        self._qoi_all = qoi_all
        self._uniq, self._pos = np.unique(self.occ, return_inverse=True)

    def _batch(self, spec: PosteriorSpec, coords: np.ndarray, phase: str):
        try:
            return spec.potential_batch(coords, tally=self.work)
        except SolverFailure as exc:
            raise SolverFailure(
                f"{self.label}, {phase} solves at (J={spec.n_active}, "
                f"level={spec.level}): {exc}") from exc

    def values(self, spec: PosteriorSpec):
        """(phi, qoi) of the given spec along the chain's step axis."""
        if spec is self.spec_pot:
            return self._phi_all[self.occ], self._qoi_all[self.occ]
        sub = self.rows[self._uniq][:, :spec.n_active]
        phi_u, qoi_u, _ = self._batch(spec, sub, "difference")
        return phi_u[self._pos], qoi_u[self._pos]


def _integrand_diff(chain: _Chain, spec_lp, spec_lpm1, qoi) -> np.ndarray:
    _, ell_f = chain.values(spec_lp)
    if qoi is not None:
        ell_f = np.asarray(qoi(ell_f), dtype=float)
    if spec_lpm1 is None:
        return ell_f
    _, ell_c = chain.values(spec_lpm1)
    if qoi is not None:
        ell_c = np.asarray(qoi(ell_c), dtype=float)
    return ell_f - ell_c


def level_difference_term(family: PosteriorFamily, sched: MlmcmcSchedule,
                          l: int, lp: int, seed_prefix=(), qoi=None,
                          coarse_pair=None) -> LevelDifferenceTerm:
    """Estimate the (l, l') cell from two fresh chains of the scheduled length.

    coarse_pair optionally overrides the (dimension, level) of the coarser
    posterior (the l-1 slot); pointing it at the fine pair forces the
    potential difference to vanish identically, which is useful for checking
    that the correction terms then contribute exactly zero.
    """
    if not 0 <= l <= sched.max_level or not 0 <= lp <= sched.lp_max(l):
        raise ValueError(f"term ({l}, {lp}) is outside the schedule")
    j_f = family.clamp_dim(sched.j_dims[l])
    spec_f = family.spec(j_f, l)
    spec_cpot = None
    if l > 0:
        if coarse_pair is None:
            spec_cpot = family.spec(family.clamp_dim(sched.j_dims[l - 1]),
                                    l - 1)
        else:
            spec_cpot = family.spec(family.clamp_dim(coarse_pair[0]),
                                    coarse_pair[1])
    j_lp = family.clamp_dim(sched.j_dims[lp])
    spec_lp = family.spec(j_lp, lp)
    spec_lpm1 = None
    if lp > 0:
        spec_lpm1 = family.spec(family.clamp_dim(sched.j_dims[lp - 1]), lp - 1)

    dims = [j_f, j_lp]
    if spec_cpot is not None:
        dims.append(spec_cpot.n_active)
    if spec_lpm1 is not None:
        dims.append(spec_lpm1.n_active)
    n_dim = max(dims)
    n_steps = sched.steps(l, lp)
    work = WorkTally()
    label = f"term (l={l}, l'={lp})"

    rng_f = rng_stream(sched.master_seed, *seed_prefix, l, lp, 0)
    chain_f = _Chain(spec_f, n_dim, n_steps, rng_f, work, label + " fine")
    dell_f = _integrand_diff(chain_f, spec_lp, spec_lpm1, qoi)

    if l == 0:
        a_samples = dell_f
        b_samples = np.zeros_like(dell_f)
        c_term = 0.0
        se_c = 0.0
        n_clamped = 0
        max_abs_dphi = 0.0
        accept_rate_coarse = None
    else:
        phi_f, _ = chain_f.values(spec_f)
        phi_c, _ = chain_f.values(spec_cpot)
        dphi = phi_f - phi_c
        max_abs_dphi = float(np.max(np.abs(dphi)))
        w, n_clamped = _guarded_exp(dphi)
        a_samples = (1.0 - w) * dell_f
        b_samples = w - 1.0

        rng_c = rng_stream(sched.master_seed, *seed_prefix, l, lp, 1)
        chain_c = _Chain(spec_cpot, n_dim, n_steps, rng_c, work,
                         label + " coarse")
        dell_c = _integrand_diff(chain_c, spec_lp, spec_lpm1, qoi)
        c_term = float(dell_c.mean())
        se_c = batch_means_se(dell_c)
        accept_rate_coarse = chain_c.accept_rate

    a_term = float(a_samples.mean())
    b_term = float(b_samples.mean())
    contribution = a_term + b_term * c_term
    se_f = batch_means_se(a_samples + c_term * b_samples)
    se = float(np.hypot(se_f, b_term * se_c))
    var_integrand = float(np.var(a_samples, ddof=1)) if n_steps > 1 else 0.0
    return LevelDifferenceTerm(
        l=l, lp=lp, n_steps=n_steps,
        a_term=a_term, b_term=b_term, c_term=c_term,
        contribution=contribution,
        var_integrand=var_integrand, se=se,
        max_abs_dphi=max_abs_dphi,
        max_abs_dell=float(np.max(np.abs(dell_f))),
        n_clamped=n_clamped,
        accept_rate_fine=chain_f.accept_rate,
        accept_rate_coarse=accept_rate_coarse,
        work=work,
    )


@dataclass
class MlmcmcEstimate:
    value: float
    se: float
    terms: list
    work: WorkTally
    n_clamped: int


def estimate(family: PosteriorFamily, sched: MlmcmcSchedule, seed_prefix=(),
             qoi=None) -> MlmcmcEstimate:
    """Sum all scheduled (l, l') terms in sorted order with a merged work tally."""
    terms = []
    work = WorkTally()
    value = 0.0
    se2 = 0.0
    n_clamped = 0
    for l, lp in sched.pairs:
        term = level_difference_term(family, sched, l, lp,
                                     seed_prefix=seed_prefix, qoi=qoi)
        terms.append(term)
        value += term.contribution
        se2 += term.se * term.se
        n_clamped += term.n_clamped
        work.merge(term.work)
    return MlmcmcEstimate(value=value, se=float(np.sqrt(se2)), terms=terms,
                          work=work, n_clamped=n_clamped)


def telescoped_rectangle_check(family: PosteriorFamily, max_level: int,
                               q: float, order: int = 12):
    """Exact-expectation telescoping identity over the full index rectangle.

    Replaces every chain average with tensor quadrature on a shared node set
    and sums terms over all (l, l') in {0..L}^2. Returns (rectangle_sum,
    direct_value) where direct_value is the single-level posterior expectation
    at (J_L, L) on the same grid; the two agree to roundoff, which validates
    the normalizer-ratio algebra independently of any sampling.
    """
    from .oracle import QuadratureGrid

    sched = make_schedule(max_level, q)
    j_top = family.clamp_dim(sched.j_dims[max_level])
    grid = QuadratureGrid.build(j_top, order)
    phi = []
    ell = []
    for i in range(max_level + 1):
        j_i = family.clamp_dim(sched.j_dims[i])
        p, qv, _ = family.spec(j_i, i).potential_batch(grid.nodes[:, :j_i])
        phi.append(p)
        ell.append(qv)

    def post_mean(lv: int, g_vals: np.ndarray) -> float:
        dens = np.exp(-phi[lv]) * grid.weights
        return float((dens @ g_vals) / dens.sum())

    total = 0.0
    for l in range(max_level + 1):
        for lp in range(max_level + 1):
            dell = ell[lp] - (ell[lp - 1] if lp > 0 else 0.0)
            if l == 0:
                total += post_mean(0, dell)
                continue
            w = np.exp(phi[l] - phi[l - 1])
            a = post_mean(l, (1.0 - w) * dell)
            b = post_mean(l, w - 1.0)
            c = post_mean(l - 1, dell)
            total += a + b * c
    direct = post_mean(max_level, ell[max_level])
    return total, direct
