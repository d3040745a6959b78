"""Independence sampler for posteriors on [-1,1]^J.

Proposals are iid prior draws, so a whole chain can be evaluated as one batch
of forward solves followed by a sequential accept/reject scan; run_estimate
uses that fast path. ChainRun exposes the equivalent one-step-at-a-time API
(same stream consumption: J uniforms for the proposal then one acceptance
uniform per step), and a test pins the two paths to bit-identical trajectories.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field

import numpy as np

from . import _kernels
from .bayes import PosteriorSpec
from .fem import WorkTally
from .rng import rng_stream

__all__ = [
    "ChainRun",
    "EstimateResult",
    "acceptance_prob",
    "run_estimate",
    "batch_means_se",
]

PHI_CLAMP = 50.0


def _alpha(phi_u: float, phi_v: float) -> float:
    d = np.clip(phi_u - phi_v, -PHI_CLAMP, PHI_CLAMP)
    return float(min(1.0, np.exp(d)))


def acceptance_prob(spec: PosteriorSpec, u, v) -> float:
    """Independence-sampler acceptance probability min(1, exp(phi(u)-phi(v)))."""
    return _alpha(spec.potential(u), spec.potential(v))


@dataclass
class ChainRun:
    """Mutable chain state for the one-step API."""

    spec: PosteriorSpec
    rng: np.random.Generator
    state: np.ndarray = dc_field(init=False)
    phi: float = dc_field(init=False)
    qoi: float = dc_field(init=False)
    n_steps: int = 0
    n_accept: int = 0
    work: WorkTally = dc_field(default_factory=WorkTally)

    def __post_init__(self):
        j = self.spec.n_active
        self.state = 2.0 * self.rng.uniform(size=j) - 1.0
        phi, ev = self.spec.potential_eval(self.state)
        self.phi = phi
        self.qoi = ev.qoi
        self.work.add(ev.ndof, ev.flops)

    def step(self) -> "ChainRun":
        """Advance one step: one proposal solve, one acceptance uniform."""
        j = self.spec.n_active
        draws = self.rng.uniform(size=j + 1)
        v = 2.0 * draws[:j] - 1.0
        w = draws[j]
        phi_v, ev = self.spec.potential_eval(v)
        self.work.add(ev.ndof, ev.flops)
        if w <= _alpha(self.phi, phi_v):
            self.state = v
            self.phi = phi_v
            self.qoi = ev.qoi
            self.n_accept += 1
        self.n_steps += 1
        return self


@dataclass
class EstimateResult:
    """Ergodic-average estimate with batch-means standard error."""

    estimate: float
    se: float
    n_steps: int
    burn_in: int
    accept_rate: float
    work: WorkTally
    trace: dict | None = None


def batch_means_se(values: np.ndarray) -> float:
    """Batch-means standard error with about sqrt(n) batches."""
    values = np.asarray(values, dtype=float)
    n = values.size
    if n < 2:
        return 0.0
    if n < 16:
        return float(np.std(values, ddof=1) / np.sqrt(n))
    n_batches = int(np.floor(np.sqrt(n)))
    m = n // n_batches
    means = values[: n_batches * m].reshape(n_batches, m).mean(axis=1)
    return float(np.std(means, ddof=1) / np.sqrt(n_batches))


def run_estimate(spec: PosteriorSpec, n_steps: int, seed_key, burn_in: int = 0,
                 g=None, return_trace: bool = False) -> EstimateResult:
    """Estimate a posterior expectation with the batched independence sampler.

    seed_key is an int or tuple of ints identifying the stream. g is None for
    the forward map's QoI, or a callable mapping the (n, J) array of visited
    parameter rows to n observable values.
    """
    if n_steps <= burn_in:
        raise ValueError("need n_steps > burn_in")
    key = (seed_key,) if isinstance(seed_key, int) else tuple(seed_key)
    rng = rng_stream(*key)
    j = spec.n_active
    init = 2.0 * rng.uniform(size=j) - 1.0
    draws = rng.uniform(size=(n_steps, j + 1))
    proposals = 2.0 * draws[:, :j] - 1.0
    accept_u = np.ascontiguousarray(draws[:, j])

    rows = np.vstack([init[None, :], proposals])
    tally = WorkTally()
    phi_all, qoi_all, _ = spec.potential_batch(rows, tally=tally)

    idx = np.empty(n_steps, dtype=np.int64)
    n_acc = _kernels.acceptance_scan(phi_all[0], np.ascontiguousarray(phi_all[1:]),
                                     accept_u, PHI_CLAMP, idx)
    vals_all = qoi_all if g is None else np.asarray(g(rows), dtype=float)
    chain_vals = vals_all[idx + 1]
    kept = chain_vals[burn_in:]
    trace = None
    if return_trace:
        trace = {
            "rows": rows,
            "phi": phi_all,
            "values": vals_all,
            "idx": idx,
            "accept_u": accept_u,
        }
    return EstimateResult(
        estimate=float(kept.mean()),
        se=batch_means_se(kept),
        n_steps=n_steps,
        burn_in=burn_in,
        accept_rate=float(n_acc) / n_steps,
        work=tally,
        trace=trace,
    )
