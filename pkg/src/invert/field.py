"""Parametrized diffusion coefficients K(x, u) = kbar(x) + sum_j u_j psi_j(x).

The built-in family uses kbar = 1 and sine modes whose sup norms decay like
j^(-s), normalized so the total mode mass equals kappa/(1+kappa) times the
minimum of kbar. That keeps K uniformly positive for every u in [-1,1]^J.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field

import numpy as np

__all__ = [
    "CoefficientField",
    "builtin_field",
    "eval_K",
    "truncation_tail",
    "validate_params",
]


def validate_params(u, n_modes, tol=1e-12):
    """Return u as a float array after checking it is a valid parameter vector."""
    u = np.asarray(u, dtype=float)
    if u.ndim != 1:
        raise ValueError(f"parameter vector must be 1-d, got shape {u.shape}")
    if u.size > n_modes:
        raise ValueError(
            f"parameter vector has {u.size} coords but the field has {n_modes} modes"
        )
    if u.size and np.max(np.abs(u)) > 1.0 + tol:
        raise ValueError("parameter coords must lie in [-1, 1]")
    return u


@dataclass(frozen=True)
class CoefficientField:
    """Sine-mode diffusion coefficient on the unit interval or square.

    Attributes
    ----------
    dim : spatial dimension, 1 or 2.
    s : sup-norm decay exponent of the modes (must exceed 1).
    kappa : positivity margin; mode mass is kappa/(1+kappa) of min kbar.
    freqs : integer mode frequencies, shape (n_modes,) in 1D, (n_modes, 2) in 2D,
        sorted so sup norms are nonincreasing (ties broken lexicographically).
    amplitudes : per-mode amplitude; equals the sup norm of the mode.
    grad_sup : upper bounds for the sup norm of each mode gradient.
    """

    dim: int
    s: float
    kappa: float
    freqs: np.ndarray
    amplitudes: np.ndarray
    grad_sup: np.ndarray
    kbar_min: float = 1.0
    kbar_max: float = 1.0
    _mode_cache: dict = dc_field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        if self.dim not in (1, 2):
            raise ValueError("dim must be 1 or 2")
        if self.s <= 1.0:
            raise ValueError("decay exponent s must exceed 1")
        if self.n_modes < 1:
            raise ValueError("need at least one mode")
        amps = self.amplitudes
        if np.any(np.diff(amps) > 1e-12):
            raise ValueError("mode sup norms must be nonincreasing")
        budget = self.kappa / (1.0 + self.kappa) * self.kbar_min
        if amps.sum() > budget * (1.0 + 1e-10):
            raise ValueError("mode mass exceeds the positivity budget")

    @property
    def n_modes(self) -> int:
        return len(self.amplitudes)

    @property
    def k_min(self) -> float:
        """Uniform lower bound of K over all admissible parameters."""
        return self.kbar_min - float(self.amplitudes.sum())

    @property
    def k_max(self) -> float:
        """Uniform upper bound of K over all admissible parameters."""
        return self.kbar_max + float(self.amplitudes.sum())

    def kbar_values(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        n = x.shape[0] if x.ndim else 1
        return np.full(n, self.kbar_min)

    def mode_values(self, x, n_active=None) -> np.ndarray:
        """Evaluate the first n_active modes at points x, shape (n_active, n_pts).

        1D points have shape (n,); 2D points have shape (n, 2).
        """
        if n_active is None:
            n_active = self.n_modes
        x = np.atleast_1d(np.asarray(x, dtype=float))
        if self.dim == 1:
            if x.ndim != 1:
                raise ValueError("1D fields take points of shape (n,)")
            f = self.freqs[:n_active, None].astype(float)
            return self.amplitudes[:n_active, None] * np.sin(f * np.pi * x[None, :])
        if x.ndim != 2 or x.shape[1] != 2:
            raise ValueError("2D fields take points of shape (n, 2)")
        fi = self.freqs[:n_active, 0:1].astype(float)
        fk = self.freqs[:n_active, 1:2].astype(float)
        vals = np.sin(fi * np.pi * x[None, :, 0]) * np.sin(fk * np.pi * x[None, :, 1])
        return self.amplitudes[:n_active, None] * vals


def builtin_field(dim: int, s: float, kappa: float, n_modes: int) -> CoefficientField:
    """Construct the built-in sine field with n_modes modes.

    1D modes are c * j^(-s) * sin(j pi x); 2D modes are tensorized sines
    c * (ik)^(-s) * sin(i pi x) sin(k pi y) ordered by decreasing sup norm with
    lexicographic tie-break. c is chosen so the sup norms sum exactly to
    kappa/(1+kappa) (uniform ellipticity with margin kappa).
    """
    if dim not in (1, 2):
        raise ValueError("dim must be 1 or 2")
    if n_modes < 1:
        raise ValueError("need at least one mode")
    if s <= 1.0:
        raise ValueError("decay exponent s must exceed 1")
    if kappa <= 0.0:
        raise ValueError("kappa must be positive")
    if dim == 1:
        freqs = np.arange(1, n_modes + 1, dtype=np.int64)
        base = freqs.astype(float) ** (-s)
        grad_base = np.pi * freqs.astype(float) ** (1.0 - s)
    else:
        # The n_modes largest values of (ik)^(-s) all have i,k <= n_modes.
        pairs = [(i, k) for i in range(1, n_modes + 1) for k in range(1, n_modes + 1)]
        pairs.sort(key=lambda p: (p[0] * p[1], p[0], p[1]))
        pairs = pairs[:n_modes]
        freqs = np.array(pairs, dtype=np.int64)
        prod = (freqs[:, 0] * freqs[:, 1]).astype(float)
        base = prod ** (-s)
        grad_base = np.pi * np.hypot(freqs[:, 0], freqs[:, 1]) * base
    budget = kappa / (1.0 + kappa)
    c = budget / base.sum()
    return CoefficientField(
        dim=dim,
        s=float(s),
        kappa=float(kappa),
        freqs=freqs,
        amplitudes=c * base,
        grad_sup=c * grad_base,
    )


def eval_K(field: CoefficientField, u, x) -> np.ndarray:
    """Evaluate K(x, u) = kbar(x) + sum_{j<=len(u)} u_j psi_j(x) at points x."""
    u = validate_params(u, field.n_modes)
    x = np.atleast_1d(np.asarray(x, dtype=float))
    vals = field.kbar_values(x)
    if u.size:
        vals = vals + u @ field.mode_values(x, n_active=u.size)
    return vals


def truncation_tail(field: CoefficientField, n_active: int) -> float:
    """Sum of mode sup norms beyond the first n_active modes."""
    if n_active < 0:
        raise ValueError("n_active must be nonnegative")
    return float(field.amplitudes[n_active:].sum())
