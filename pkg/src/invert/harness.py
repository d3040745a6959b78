"""Experiment harness: configs, estimator drivers, rate fits, output writers.

Configs are flat `section.key = value` text files with `#` comments; CLI
overrides arrive as `section.key=value` strings. Every run derives all
randomness from (master seed, method tag, resolution, replica) so serial and
parallel execution, and repeated runs, produce identical numbers. CSV outputs
carry no timestamps and are byte-identical across reruns; wall-clock times
live only in the JSON summaries.
"""

from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass, field as dc_field
from pathlib import Path

import numpy as np

from . import mlmcmc as ml
from . import oracle as oracle_mod
from . import sampler
from .bayes import NoiseModel, PosteriorFamily, PosteriorSpec, synthesize_data
from .errors import ConfigError
from .fem import ObservationSet
from .field import builtin_field
from .gpc import ClampedQoi, build_surrogate, select_top, surrogate_l2_error

__all__ = [
    "Config",
    "load_config",
    "ProblemSetup",
    "build_problem",
    "WorkErrorRecord",
    "RunResult",
    "oracle_reference",
    "run_plain",
    "run_gpc",
    "run_mlmcmc",
    "run_oracle",
    "execute",
    "fit_rate",
    "fit_xy",
    "fit_level_rate",
    "write_records_csv",
    "write_terms_csv",
    "write_summary_json",
    "selftest",
]

_REQUIRED = object()

# Seed-path tags keeping the methods' RNG streams disjoint.
_TAG_PLAIN = 1
_TAG_GPC = 2
_TAG_ML = 3


class Config:
    """Flat dotted-key configuration with typed, validated accessors."""

    def __init__(self, entries: dict | None = None, source: str = "<config>"):
        self.entries = dict(entries or {})
        self.source = source

    @classmethod
    def from_text(cls, text: str, source: str = "<config>") -> "Config":
        entries = {}
        for lineno, raw in enumerate(text.splitlines(), start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{source}:{lineno}: expected 'key = value'")
            key, value = (part.strip() for part in line.split("=", 1))
            if "." not in key or not key:
                raise ConfigError(
                    f"{source}:{lineno}: keys are dotted section.name, got {key!r}")
            entries[key] = value
        return cls(entries, source)

    def with_overrides(self, assignments) -> "Config":
        out = Config(self.entries, self.source)
        for item in assignments:
            if "=" not in item:
                raise ConfigError(f"override {item!r} is not key=value")
            key, value = (part.strip() for part in item.split("=", 1))
            if "." not in key:
                raise ConfigError(f"override key {key!r} is not dotted")
            out.entries[key] = value
        return out

    def has(self, key: str) -> bool:
        return key in self.entries

    def _raw(self, key: str, default):
        if key in self.entries:
            return self.entries[key]
        if default is _REQUIRED:
            raise ConfigError(f"missing required config key {key!r}")
        return default

    def get_str(self, key: str, default=_REQUIRED) -> str:
        val = self._raw(key, default)
        return val if isinstance(val, str) else val

    def _cast(self, key: str, conv, default):
        val = self._raw(key, default)
        if not isinstance(val, str):
            return val
        try:
            return conv(val)
        except ValueError as exc:
            raise ConfigError(f"config key {key!r}: {exc}") from exc

    def get_int(self, key: str, default=_REQUIRED) -> int:
        return self._cast(key, int, default)

    def get_float(self, key: str, default=_REQUIRED) -> float:
        return self._cast(key, float, default)

    def get_bool(self, key: str, default=_REQUIRED) -> bool:
        def conv(s: str) -> bool:
            low = s.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(f"not a boolean: {s!r}")
        return self._cast(key, conv, default)

    def get_ints(self, key: str, default=_REQUIRED) -> list:
        val = self._raw(key, default)
        if not isinstance(val, str):
            return val
        try:
            return [int(tok) for tok in val.replace(",", " ").split()]
        except ValueError as exc:
            raise ConfigError(f"config key {key!r}: {exc}") from exc

    def get_floats(self, key: str, default=_REQUIRED) -> list:
        val = self._raw(key, default)
        if not isinstance(val, str):
            return val
        try:
            return [float(tok) for tok in val.replace(",", " ").split()]
        except ValueError as exc:
            raise ConfigError(f"config key {key!r}: {exc}") from exc


def load_config(path) -> Config:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return Config.from_text(text, source=str(path))


def default_true_params(n_modes: int) -> np.ndarray:
    """Fixed interior parameter vector used when data.u_true is 'auto'."""
    j = np.arange(n_modes, dtype=float)
    return 0.7 * (-1.0) ** j / (j + 1.0)


@dataclass
class ProblemSetup:
    dim: int
    field: object
    obs: ObservationSet
    noise: NoiseModel
    data: np.ndarray
    family: PosteriorFamily
    level: int
    u_true: np.ndarray
    tol_factor: float


def build_problem(cfg: Config) -> ProblemSetup:
    dim = cfg.get_int("field.dim", 1)
    if dim not in (1, 2):
        raise ConfigError("field.dim must be 1 or 2")
    s = cfg.get_float("field.s", 2.0)
    kappa = cfg.get_float("field.kappa", 1.0)
    n_modes = cfg.get_int("field.n_modes", 2)
    if s <= 1.0:
        raise ConfigError("field.s must exceed 1")
    if n_modes < 1:
        raise ConfigError("field.n_modes must be positive")
    fld = builtin_field(dim, s, kappa, n_modes)

    k = cfg.get_int("obs.k", 4)
    obs = ObservationSet(dim, k)
    sigma = cfg.get_float("noise.sigma", 0.1)
    if sigma < 0:
        raise ConfigError("noise.sigma must be nonnegative")
    noise = NoiseModel.iso(sigma, k)

    level = cfg.get_int("fem.level", 4)
    if level < 0:
        raise ConfigError("fem.level must be nonnegative")
    tol_factor = cfg.get_float("fem.tol_factor", 1e-2)

    raw_u = cfg.get_str("data.u_true", "auto")
    if isinstance(raw_u, str) and raw_u.strip() == "auto":
        u_true = default_true_params(n_modes)
    else:
        u_true = np.asarray(cfg.get_floats("data.u_true"), dtype=float)
        if u_true.shape != (n_modes,):
            raise ConfigError(
                f"data.u_true needs {n_modes} entries, got {u_true.size}")
        if np.any(np.abs(u_true) > 1.0):
            raise ConfigError("data.u_true entries must lie in [-1, 1]")
    data_seed = cfg.get_int("data.seed", 101)
    ref_level = cfg.get_int("data.ref_level", level + 2)
    data = synthesize_data(fld, dim, obs, u_true, noise, data_seed, ref_level,
                           tol_factor=tol_factor)
    family = PosteriorFamily(fld, dim, obs, noise, data, tol_factor=tol_factor)
    return ProblemSetup(dim=dim, field=fld, obs=obs, noise=noise, data=data,
                        family=family, level=level, u_true=u_true,
                        tol_factor=tol_factor)


@dataclass
class WorkErrorRecord:
    """One row of an error-versus-work series; wall time stays out of the CSV."""

    method: str
    resolution: int
    estimate: float
    se: float
    error: float
    ndof: float
    flops: float
    wall_time: float = 0.0


@dataclass
class RunResult:
    method: str
    records: list
    summary: dict
    terms: list = dc_field(default_factory=list)


def oracle_reference(ps: ProblemSetup, n_active: int | None = None,
                     level: int | None = None, order: int = 16):
    """Quadrature posterior expectation of the QoI for the given pair."""
    if n_active is None:
        n_active = min(ps.field.n_modes, oracle_mod.MAX_GRID_DIM)
    if level is None:
        level = ps.level
    spec = ps.family.spec(ps.family.clamp_dim(n_active), level)
    return oracle_mod.posterior_expectation_quadrature(spec, order=order)


def _replica_se(ses: np.ndarray) -> float:
    return float(np.sqrt(np.sum(ses * ses)) / len(ses))


def run_plain(cfg: Config) -> RunResult:
    """Level series of plain-MCMC runs with the coupled J, M schedule."""
    ps = build_problem(cfg)
    q = cfg.get_float("mcmc.q", ps.field.s - 1.0)
    if q <= 0:
        raise ConfigError("mcmc.q must be positive")
    l_min = cfg.get_int("mcmc.l_min", 1)
    l_max = cfg.get_int("mcmc.l_max", 5)
    if l_min < 0 or l_max < l_min:
        raise ConfigError("need 0 <= mcmc.l_min <= mcmc.l_max")
    m_factor = cfg.get_float("mcmc.m_factor", 16.0)
    if m_factor <= 0:
        raise ConfigError("mcmc.m_factor must be positive")
    burn_in = cfg.get_int("mcmc.burn_in", 0)
    replicas = cfg.get_int("run.replicas", 8)
    master = cfg.get_int("run.master_seed", 0)
    order = cfg.get_int("oracle.order", 16)
    ref_level = cfg.get_int("oracle.ref_level", l_max + 2)

    t_start = time.perf_counter()
    e_ref, _ = oracle_reference(ps, level=ref_level, order=order)
    records = []
    for lev in range(l_min, l_max + 1):
        j_dim = ps.family.clamp_dim(2 ** math.ceil(lev / q))
        n_steps = max(1, int(round(m_factor * 4 ** lev)))
        spec = ps.family.spec(j_dim, lev)
        t_lev = time.perf_counter()
        ests = np.empty(replicas)
        ses = np.empty(replicas)
        ndofs = np.empty(replicas)
        flops = np.empty(replicas)
        for r in range(replicas):
            res = sampler.run_estimate(spec, n_steps, (master, _TAG_PLAIN, lev, r),
                                       burn_in=burn_in)
            ests[r] = res.estimate
            ses[r] = res.se
            ndofs[r] = res.work.ndof
            flops[r] = res.work.flops
        rmse = float(np.sqrt(np.mean((ests - e_ref) ** 2)))
        records.append(WorkErrorRecord(
            method="plain", resolution=lev, estimate=float(ests.mean()),
            se=_replica_se(ses), error=rmse, ndof=float(ndofs.mean()),
            flops=float(flops.mean()),
            wall_time=time.perf_counter() - t_lev))
    summary = {
        "method": "plain",
        "reference": e_ref,
        "reference_level": ref_level,
        "q": q,
        "m_factor": m_factor,
        "replicas": replicas,
        "master_seed": master,
        "wall_time": time.perf_counter() - t_start,
    }
    return RunResult(method="plain", records=records, summary=summary)


def _default_n_series(n_terms: int) -> list:
    series = []
    n = 1
    while n < n_terms:
        series.append(n)
        n *= 2
    series.append(n_terms)
    return series


def run_gpc(cfg: Config) -> RunResult:
    """Surrogate-chain series over the kept expansion size N.

    The surrogate is built once at the configured level; each N restricts it
    to its strongest N rows, measures the prior-weighted L2 error against the
    same-level FEM map, and runs chains whose length grows as error^-2 within
    configured bounds. Build work and per-step chain work are reported
    separately in the summary.
    """
    ps = build_problem(cfg)
    l_build = cfg.get_int("gpc.level", ps.level)
    n_active = cfg.get_int("gpc.n_active", ps.field.n_modes)
    if not 1 <= n_active <= ps.field.n_modes:
        raise ConfigError("gpc.n_active must lie in 1..field.n_modes")
    cap = cfg.get_float("gpc.cap", 8.0)
    quad_order = cfg.get_int("gpc.quad_order", 12)
    m_factor = cfg.get_float("gpc.m_factor", 4.0)
    m_min = cfg.get_int("gpc.m_min", 200)
    m_max = cfg.get_int("gpc.m_max", 200_000)
    cutoff = cfg.get_float("gpc.cutoff", 0.0)
    err_order = cfg.get_int("gpc.err_order", 12)
    replicas = cfg.get_int("run.replicas", 8)
    master = cfg.get_int("run.master_seed", 0)
    order = cfg.get_int("oracle.order", 16)

    t_start = time.perf_counter()
    full = build_surrogate(ps.field, ps.dim, ps.obs, n_active, l_build, cap,
                           quad_order=quad_order, tol_factor=ps.tol_factor)
    n_series = cfg.get_ints("gpc.n_series", None) or _default_n_series(full.n_terms)
    for n in n_series:
        if not 1 <= n <= full.n_terms:
            raise ConfigError(
                f"gpc.n_series entry {n} outside 1..{full.n_terms}")
    e_ref, _ = oracle_reference(ps, n_active=n_active, level=l_build,
                                order=order)

    records = []
    l2_errors = []
    chain_lengths = []
    clamp_counts = []
    per_step_flops = []
    for n_keep in n_series:
        sur = select_top(full, n_keep)
        l2 = surrogate_l2_error(sur, ps.field, ps.dim, ps.obs,
                                level_ref=l_build, order=err_order,
                                tol_factor=ps.tol_factor)
        l2_errors.append(l2)
        if l2 > 0:
            n_steps = int(np.clip(m_factor / (l2 * l2), m_min, m_max))
        else:
            n_steps = m_max
        chain_lengths.append(n_steps)
        spec = PosteriorSpec(field=ps.field, obs=ps.obs, noise=ps.noise,
                             data=ps.data, op=sur)
        g = ClampedQoi(sur, cutoff) if cutoff > 0 else None
        t_n = time.perf_counter()
        ests = np.empty(replicas)
        ses = np.empty(replicas)
        flops = np.empty(replicas)
        for r in range(replicas):
            res = sampler.run_estimate(spec, n_steps,
                                       (master, _TAG_GPC, n_keep, r), g=g)
            ests[r] = res.estimate
            ses[r] = res.se
            flops[r] = res.work.flops
        clamp_counts.append(g.n_clamped if g is not None else 0)
        per_step_flops.append(float(flops.mean()) / n_steps)
        rmse = float(np.sqrt(np.mean((ests - e_ref) ** 2)))
        records.append(WorkErrorRecord(
            method="gpc", resolution=n_keep, estimate=float(ests.mean()),
            se=_replica_se(ses), error=rmse, ndof=0.0,
            flops=float(flops.mean()), wall_time=time.perf_counter() - t_n))
    summary = {
        "method": "gpc",
        "reference": e_ref,
        "build_level": l_build,
        "n_active": n_active,
        "cap": cap,
        "quad_order": quad_order,
        "candidate_terms": full.n_terms,
        "build_ndof": full.build_ndof,
        "build_flops": full.build_flops,
        "n_series": list(n_series),
        "l2_errors": l2_errors,
        "chain_lengths": chain_lengths,
        "per_step_flops": per_step_flops,
        "clamp_counts": clamp_counts,
        "replicas": replicas,
        "master_seed": master,
        "wall_time": time.perf_counter() - t_start,
    }
    return RunResult(method="gpc", records=records, summary=summary)


def run_mlmcmc(cfg: Config) -> RunResult:
    """Multilevel estimator series over the top level L, with per-term rows."""
    ps = build_problem(cfg)
    l_top = cfg.get_int("ml.L", 3)
    if l_top < 0:
        raise ConfigError("ml.L must be nonnegative")
    q = cfg.get_float("ml.q", ps.field.s - 1.0)
    if q <= 0:
        raise ConfigError("ml.q must be positive")
    replicas = cfg.get_int("ml.replicas", cfg.get_int("run.replicas", 8))
    master = cfg.get_int("ml.master_seed", cfg.get_int("run.master_seed", 0))
    order = cfg.get_int("oracle.order", 16)
    ref_level = cfg.get_int("oracle.ref_level", l_top + 2)

    t_start = time.perf_counter()
    e_ref, _ = oracle_reference(ps, level=ref_level, order=order)
    records = []
    term_rows = []
    total_clamped = 0
    for top in range(l_top + 1):
        sched = ml.make_schedule(top, q, master)
        t_lev = time.perf_counter()
        ests = np.empty(replicas)
        ses = np.empty(replicas)
        ndofs = np.empty(replicas)
        flops = np.empty(replicas)
        for r in range(replicas):
            est = ml.estimate(ps.family, sched, seed_prefix=(_TAG_ML, top, r))
            ests[r] = est.value
            ses[r] = est.se
            ndofs[r] = est.work.ndof
            flops[r] = est.work.flops
            total_clamped += est.n_clamped
            for t in est.terms:
                term_rows.append((top, r, t.l, t.lp, t.n_steps, t.a_term,
                                  t.b_term, t.c_term, t.contribution,
                                  t.var_integrand, t.work.ndof, t.work.flops))
        rmse = float(np.sqrt(np.mean((ests - e_ref) ** 2)))
        records.append(WorkErrorRecord(
            method="mlmcmc", resolution=top, estimate=float(ests.mean()),
            se=_replica_se(ses), error=rmse, ndof=float(ndofs.mean()),
            flops=float(flops.mean()), wall_time=time.perf_counter() - t_lev))
    summary = {
        "method": "mlmcmc",
        "reference": e_ref,
        "reference_level": ref_level,
        "q": q,
        "L_max": l_top,
        "replicas": replicas,
        "master_seed": master,
        "clamp_count": total_clamped,
        "wall_time": time.perf_counter() - t_start,
    }
    return RunResult(method="mlmcmc", records=records, summary=summary,
                     terms=term_rows)


def run_oracle(cfg: Config) -> RunResult:
    """Single quadrature reference value for the configured problem."""
    ps = build_problem(cfg)
    n_active = cfg.get_int("oracle.n_active",
                           min(ps.field.n_modes, oracle_mod.MAX_GRID_DIM))
    level = cfg.get_int("oracle.level", ps.level)
    order = cfg.get_int("oracle.order", 16)
    t_start = time.perf_counter()
    from .fem import WorkTally

    tally = WorkTally()
    spec = ps.family.spec(ps.family.clamp_dim(n_active), level)
    value, z_norm = oracle_mod.posterior_expectation_quadrature(
        spec, order=order, tally=tally)
    record = WorkErrorRecord(method="oracle", resolution=level, estimate=value,
                             se=0.0, error=0.0, ndof=tally.ndof,
                             flops=tally.flops,
                             wall_time=time.perf_counter() - t_start)
    summary = {
        "method": "oracle",
        "value": value,
        "normalizer": z_norm,
        "n_active": n_active,
        "level": level,
        "order": order,
        "wall_time": record.wall_time,
    }
    return RunResult(method="oracle", records=[record], summary=summary)


_RUNNERS = {
    "plain": run_plain,
    "gpc": run_gpc,
    "mlmcmc": run_mlmcmc,
    "oracle": run_oracle,
}


def execute(cfg: Config, out_dir=None, method: str | None = None):
    """Run the configured method and write its CSV/JSON outputs.

    Returns (RunResult, list of written paths).
    """
    method = method or cfg.get_str("run.method", "plain")
    if method not in _RUNNERS:
        raise ConfigError(
            f"run.method must be one of {sorted(_RUNNERS)}, got {method!r}")
    result = _RUNNERS[method](cfg)
    out = Path(out_dir) if out_dir is not None else Path(
        cfg.get_str("run.out_dir", "out"))
    out.mkdir(parents=True, exist_ok=True)
    written = []
    rec_path = out / f"{method}_records.csv"
    write_records_csv(rec_path, result.records)
    written.append(rec_path)
    if result.terms:
        terms_path = out / f"{method}_terms.csv"
        write_terms_csv(terms_path, result.terms)
        written.append(terms_path)
    summary_path = out / f"{method}_summary.json"
    write_summary_json(summary_path, result.summary)
    written.append(summary_path)
    return result, written


# ---------------------------------------------------------------------------
# Rate fits.

def fit_xy(x_vals, y_vals):
    """Least squares on log2-log2 axes: returns (slope, intercept, r2)."""
    x = np.asarray(x_vals, dtype=float)
    y = np.asarray(y_vals, dtype=float)
    if x.size < 3:
        raise ValueError("need at least 3 points for a rate fit")
    if np.any(x <= 0) or np.any(y <= 0):
        raise ValueError("rate fits need positive values on both axes")
    lx = np.log2(x)
    ly = np.log2(y)
    if np.ptp(lx) <= 0:
        raise ValueError("degenerate x-range in rate fit")
    slope, intercept = np.polyfit(lx, ly, 1)
    resid = ly - (slope * lx + intercept)
    ss_res = float(np.sum(resid * resid))
    ss_tot = float(np.sum((ly - ly.mean()) ** 2))
    r2 = 1.0 if ss_tot == 0.0 else 1.0 - ss_res / ss_tot
    return float(slope), float(intercept), r2


def fit_rate(records, x_field: str, y_field: str):
    """Log2-log2 slope between two fields of a WorkErrorRecord series."""
    xs = [getattr(r, x_field) for r in records]
    ys = [getattr(r, y_field) for r in records]
    return fit_xy(xs, ys)


def fit_level_rate(levels, values):
    """Least squares of log2(values) against the (linear) level axis."""
    lev = np.asarray(levels, dtype=float)
    val = np.asarray(values, dtype=float)
    if lev.size < 3:
        raise ValueError("need at least 3 points for a level-rate fit")
    if np.any(val <= 0):
        raise ValueError("level-rate fits need positive values")
    if np.ptp(lev) <= 0:
        raise ValueError("degenerate level range")
    ly = np.log2(val)
    slope, intercept = np.polyfit(lev, ly, 1)
    resid = ly - (slope * lev + intercept)
    ss_res = float(np.sum(resid * resid))
    ss_tot = float(np.sum((ly - ly.mean()) ** 2))
    r2 = 1.0 if ss_tot == 0.0 else 1.0 - ss_res / ss_tot
    return float(slope), float(intercept), r2


# ---------------------------------------------------------------------------
# Writers. Floats are serialized with repr for stable shortest round-trips.

def _cell(value) -> str:
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_records_csv(path, records) -> None:
    lines = ["method,resolution,estimate,se,error,ndof,flops"]
    for r in records:
        lines.append(",".join([
            r.method, _cell(r.resolution), _cell(r.estimate), _cell(r.se),
            _cell(r.error), _cell(r.ndof), _cell(r.flops)]))
    Path(path).write_text("\n".join(lines) + "\n", encoding="ascii")


def write_terms_csv(path, rows) -> None:
    lines = ["L,replica,l,lp,M,A,B,C,contribution,var,ndof,flops"]
    for row in rows:
        lines.append(",".join(_cell(v) for v in row))
    Path(path).write_text("\n".join(lines) + "\n", encoding="ascii")


def write_summary_json(path, summary: dict) -> None:
    with open(path, "w", encoding="ascii") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")


RECORD_HEADER = "method,resolution,estimate,se,error,ndof,flops"
TERMS_HEADER = "L,replica,l,lp,M,A,B,C,contribution,var,ndof,flops"


def read_records_csv(path) -> list:
    lines = Path(path).read_text(encoding="ascii").splitlines()
    if not lines or lines[0] != RECORD_HEADER:
        raise ConfigError(f"{path}: not a records CSV (header mismatch)")
    records = []
    for line in lines[1:]:
        if not line:
            continue
        parts = line.split(",")
        if len(parts) != 7:
            raise ConfigError(f"{path}: malformed row {line!r}")
        records.append(WorkErrorRecord(
            method=parts[0], resolution=int(parts[1]),
            estimate=float(parts[2]), se=float(parts[3]),
            error=float(parts[4]), ndof=float(parts[5]),
            flops=float(parts[6])))
    return records


def read_terms_csv(path) -> list:
    lines = Path(path).read_text(encoding="ascii").splitlines()
    if not lines or lines[0] != TERMS_HEADER:
        raise ConfigError(f"{path}: not a terms CSV (header mismatch)")
    rows = []
    for line in lines[1:]:
        if not line:
            continue
        parts = line.split(",")
        if len(parts) != 12:
            raise ConfigError(f"{path}: malformed row {line!r}")
        rows.append((int(parts[0]), int(parts[1]), int(parts[2]),
                     int(parts[3]), int(parts[4]), float(parts[5]),
                     float(parts[6]), float(parts[7]), float(parts[8]),
                     float(parts[9]), float(parts[10]), float(parts[11])))
    return rows


# ---------------------------------------------------------------------------
# Selftest: fast deterministic checks of the documented exact cases.

def _check_field_budget():
    fld = builtin_field(1, 2.0, 1.0, 8)
    budget = float(np.sum(fld.amplitudes))
    ok = abs(budget - 0.5) < 1e-12
    ok = ok and abs(fld.k_min - 0.5) < 1e-12 and abs(fld.k_max - 1.5) < 1e-12
    return ok, f"sum_amp={budget:.15f}"


def _check_field_order():
    fld = builtin_field(2, 2.0, 1.0, 6)
    amps = fld.amplitudes
    ok = bool(np.all(np.diff(amps) <= 1e-15))
    return ok, "amplitudes nonincreasing"


def _check_fem_1d_exact():
    from .fem import fem_level, load_vector
    from .oracle import dense_reference_solve

    lvl = fem_level(1, 3)
    fld = builtin_field(1, 2.0, 1.0, 2)
    x = dense_reference_solve(lvl, fld, np.zeros(2), None)
    exact = lvl.nodes * (1.0 - lvl.nodes) / 2.0
    err = float(np.max(np.abs(x - exact)))
    return err < 1e-12, f"max_err={err:.3e}"


def _check_fem_2d_dense():
    from .fem import fem_level, solve
    from .oracle import dense_reference_solve

    lvl = fem_level(2, 2)
    fld = builtin_field(2, 2.0, 1.0, 2)
    u = np.array([0.3, -0.4])
    sol = solve(lvl, fld, u, tol=1e-12)
    ref = dense_reference_solve(lvl, fld, u, None)
    err = float(np.max(np.abs(sol.coeffs - ref)))
    return err < 1e-8, f"max_err={err:.3e}"


def _check_prolong_interp():
    from .fem import fem_level, prolong_vec

    coarse = fem_level(1, 2)
    fine = fem_level(1, 3)
    vals = coarse.nodes * (1.0 - coarse.nodes)
    lifted = prolong_vec(1, vals, 2, 3)
    xs = np.concatenate([[0.0], coarse.nodes, [1.0]])
    ys = np.concatenate([[0.0], vals, [0.0]])
    target = np.interp(fine.nodes, xs, ys)
    err = float(np.max(np.abs(lifted - target)))
    return err < 1e-14, f"max_err={err:.3e}"


def _check_noise_whiten():
    noise = NoiseModel.iso(0.1, 4)
    v = np.array([0.3, -0.1, 0.2, 0.05])
    err = float(np.max(np.abs(noise.whiten(v) * 0.1 - v)))
    return err < 1e-14, f"max_err={err:.3e}"


def _check_potential_zero():
    cfg = Config.from_text(CANONICAL_CONFIG)
    ps = build_problem(cfg)
    spec = ps.family.spec(2, 2)
    u = np.array([0.25, -0.5])
    ev = spec.op.forward(u)
    spec_hit = PosteriorSpec(field=ps.field, obs=ps.obs, noise=ps.noise,
                             data=ev.obs.copy(), op=spec.op)
    phi0 = spec_hit.potential(u)
    shifted = ev.obs.copy()
    shifted[0] += 0.1
    spec_off = PosteriorSpec(field=ps.field, obs=ps.obs, noise=ps.noise,
                             data=shifted, op=spec.op)
    phi1 = spec_off.potential(u)
    ok = phi0 == 0.0 and abs(phi1 - 0.5) < 1e-12
    return ok, f"phi0={phi0:.3e} phi_shift={phi1:.15f}"


def _check_oracle_constant():
    cfg = Config.from_text(CANONICAL_CONFIG)
    ps = build_problem(cfg)
    spec = ps.family.spec(2, 2)
    val, z_norm = oracle_mod.posterior_expectation_quadrature(
        spec, g=lambda nodes: np.full(nodes.shape[0], 3.25), order=8)
    ok = abs(val - 3.25) < 1e-12 and 0.0 < z_norm <= 1.0 + 1e-12
    return ok, f"E[c]={val:.15f} Z={z_norm:.6f}"


def _check_oracle_symmetry():
    cfg = Config.from_text(CANONICAL_CONFIG)
    ps = build_problem(cfg.with_overrides(["noise.sigma=1e8"]))
    spec = ps.family.spec(2, 2)
    val, _ = oracle_mod.posterior_expectation_quadrature(
        spec, g=lambda nodes: nodes[:, 0], order=12)
    return abs(val) < 1e-10, f"E[u1]={val:.3e}"


def _check_alpha_formula():
    ok = sampler._alpha(1.0, 1.0) == 1.0
    ok = ok and abs(sampler._alpha(0.5, 1.0) - math.exp(-0.5)) < 1e-15
    ok = ok and sampler._alpha(2.0, 0.5) == 1.0
    return ok, "acceptance ratio matches 1 ^ exp(phi_u - phi_v)"


def _check_legendre_orthonormal():
    from .gpc import legendre_eval

    nodes, weights = np.polynomial.legendre.leggauss(12)
    vals = legendre_eval(5, nodes)
    gram = (vals * weights) @ vals.T / 2.0
    err = float(np.max(np.abs(gram - np.eye(6))))
    return err < 1e-12, f"max_gram_err={err:.3e}"


def _check_gpc_roundtrip(tmp_dir):
    from .gpc import load_surrogate, save_surrogate

    cfg = Config.from_text(CANONICAL_CONFIG)
    ps = build_problem(cfg)
    sur = build_surrogate(ps.field, 1, ps.obs, 2, 2, 4.0, quad_order=6)
    path = Path(tmp_dir) / "surrogate_roundtrip.txt"
    save_surrogate(sur, path)
    back = load_surrogate(path)
    ok = (np.array_equal(sur.degrees, back.degrees)
          and np.array_equal(sur.coeffs, back.coeffs)
          and sur.total_energy == back.total_energy)
    return ok, f"terms={sur.n_terms}"


def _check_schedule_examples():
    sched = ml.make_schedule(4, 2.0)
    ok = sched.steps(1, 1) == 16 and sched.lp_max(3) == 1
    sched_q1 = ml.make_schedule(3, 1.0)
    ok = ok and sched_q1.j_dims == (1, 2, 4, 8)
    return ok, f"M11={sched.steps(1, 1)} J={sched_q1.j_dims}"


def _check_ml_degenerate():
    cfg = Config.from_text(CANONICAL_CONFIG)
    ps = build_problem(cfg)
    sched = ml.make_schedule(0, 1.0, master_seed=7)
    term = ml.level_difference_term(ps.family, sched, 0, 0)
    j0 = ps.family.clamp_dim(1)
    res = sampler.run_estimate(ps.family.spec(j0, 0), 1, (7, 0, 0, 0))
    ok = term.contribution == res.estimate
    return ok, f"ml={term.contribution!r} plain={res.estimate!r}"


def _check_ml_zero_dphi():
    cfg = Config.from_text(CANONICAL_CONFIG)
    ps = build_problem(cfg)
    sched = ml.make_schedule(1, 1.0, master_seed=11)
    term = ml.level_difference_term(ps.family, sched, 1, 0,
                                    coarse_pair=(sched.j_dims[1], 1))
    ok = term.a_term == 0.0 and term.b_term == 0.0 and term.contribution == 0.0
    return ok, f"A={term.a_term!r} B={term.b_term!r}"


def _check_fit_trivial():
    x = np.array([1.0, 2.0, 4.0, 8.0])
    slope, _, r2 = fit_xy(x, 1.0 / x)
    ok = abs(slope + 1.0) < 1e-12 and abs(r2 - 1.0) < 1e-12
    slope_c, _, _ = fit_xy(x, np.full(4, 2.5))
    ok = ok and abs(slope_c) < 1e-12
    return ok, f"slope={slope:.2e}+1, const_slope={slope_c:.2e}"


def _check_config_parse():
    cfg = Config.from_text("a.b = 3\n# comment\nc.d = hi there\n")
    ok = cfg.get_int("a.b") == 3 and cfg.get_str("c.d") == "hi there"
    cfg2 = cfg.with_overrides(["a.b=5"])
    ok = ok and cfg2.get_int("a.b") == 5 and cfg.get_int("a.b") == 3
    try:
        Config.from_text("nodot = 1\n")
        ok = False
    except ConfigError:
        pass
    return ok, "parse, override, and rejection behave"


CANONICAL_CONFIG = """\
field.dim = 1
field.s = 2.0
field.kappa = 1.0
field.n_modes = 2
fem.level = 4
obs.k = 4
noise.sigma = 0.1
data.u_true = auto
data.seed = 101
data.ref_level = 6
run.master_seed = 0
run.replicas = 8
mcmc.l_min = 1
mcmc.l_max = 5
mcmc.m_factor = 16
ml.L = 3
ml.q = 1.0
gpc.cap = 8.0
gpc.quad_order = 12
oracle.order = 16
"""


def selftest(out_dir=None):
    """Run the deterministic exact-case checks; returns (rows, all_passed).

    rows are (name, passed, detail) triples; when out_dir is given a
    byte-stable selftest.csv is written there.
    """
    import tempfile

    with tempfile.TemporaryDirectory() as tmp:
        checks = [
            ("field-budget", _check_field_budget),
            ("field-order", _check_field_order),
            ("fem-1d-exact", _check_fem_1d_exact),
            ("fem-2d-dense", _check_fem_2d_dense),
            ("prolong-interp", _check_prolong_interp),
            ("noise-whiten", _check_noise_whiten),
            ("potential-zero", _check_potential_zero),
            ("oracle-constant", _check_oracle_constant),
            ("oracle-symmetry", _check_oracle_symmetry),
            ("alpha-formula", _check_alpha_formula),
            ("legendre-orthonormal", _check_legendre_orthonormal),
            ("gpc-roundtrip", lambda: _check_gpc_roundtrip(tmp)),
            ("schedule-examples", _check_schedule_examples),
            ("ml-degenerate-plain", _check_ml_degenerate),
            ("ml-zero-dphi", _check_ml_zero_dphi),
            ("fit-trivial", _check_fit_trivial),
            ("config-parse", _check_config_parse),
        ]
        rows = []
        for name, fn in checks:
            try:
                passed, detail = fn()
            except Exception as exc:  # a failing check must not stop the rest
                passed, detail = False, f"raised {type(exc).__name__}: {exc}"
            rows.append((name, bool(passed), detail))
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        lines = ["check,passed"]
        lines += [f"{name},{int(passed)}" for name, passed, _ in rows]
        (out / "selftest.csv").write_text("\n".join(lines) + "\n",
                                          encoding="ascii")
    return rows, all(passed for _, passed, _ in rows)
