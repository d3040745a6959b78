"""Figure rendering for run outputs.

The core library and the estimator drivers stay plotting-free; this module is
imported only by the report path and pulls matplotlib lazily with the Agg
backend, so figures render to files on headless machines.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .errors import ConfigError
from .harness import RECORD_HEADER, TERMS_HEADER, read_records_csv, read_terms_csv

__all__ = ["sniff_csv_kind", "render_report"]


def _pyplot():
    import matplotlib

    matplotlib.use("Agg", force=True)
    import matplotlib.pyplot as plt

    return plt


def sniff_csv_kind(path) -> str:
    """'records' or 'terms', decided by the header line."""
    with open(path, "r", encoding="ascii") as fh:
        header = fh.readline().strip()
    if header == RECORD_HEADER:
        return "records"
    if header == TERMS_HEADER:
        return "terms"
    raise ConfigError(f"{path}: unrecognized CSV header {header!r}")


def _render_records(path, out_dir: Path) -> Path:
    plt = _pyplot()
    records = read_records_csv(path)
    by_method = {}
    for rec in records:
        by_method.setdefault(rec.method, []).append(rec)

    fig, (ax_work, ax_res) = plt.subplots(1, 2, figsize=(11, 4.5))
    for method, recs in sorted(by_method.items()):
        recs = sorted(recs, key=lambda r: r.resolution)
        err = np.array([r.error for r in recs])
        flops = np.array([r.flops for r in recs])
        res = np.array([r.resolution for r in recs])
        good = (err > 0) & (flops > 0)
        if good.any():
            ax_work.loglog(flops[good], err[good], "o-", label=method)
        if (err > 0).any():
            ax_res.semilogy(res[err > 0], err[err > 0], "s-", label=method)
    ax_work.set_xlabel("flops")
    ax_work.set_ylabel("error vs reference")
    ax_work.set_title("error versus work")
    ax_work.grid(True, which="both", alpha=0.3)
    ax_work.legend()
    ax_res.set_xlabel("resolution (level or N)")
    ax_res.set_ylabel("error vs reference")
    ax_res.set_title("error versus resolution")
    ax_res.grid(True, which="both", alpha=0.3)
    ax_res.legend()
    fig.tight_layout()
    out = out_dir / (Path(path).stem + ".png")
    fig.savefig(out, dpi=130)
    plt.close(fig)
    return out


def _render_terms(path, out_dir: Path) -> Path:
    plt = _pyplot()
    rows = read_terms_csv(path)
    top = max(row[0] for row in rows)
    sums = {}
    counts = {}
    for l_top, _rep, l, lp, _m, _a, _b, _c, _contrib, var, _nd, _fl in rows:
        if l_top != top or var <= 0:
            continue
        key = l + lp
        sums[key] = sums.get(key, 0.0) + var
        counts[key] = counts.get(key, 0) + 1
    depths = sorted(sums)
    mean_var = [sums[d] / counts[d] for d in depths]

    fig, ax = plt.subplots(figsize=(6.5, 4.5))
    if depths:
        ax.semilogy(depths, mean_var, "o-", base=2)
    ax.set_xlabel("combined level depth l + l'")
    ax.set_ylabel("mean integrand variance")
    ax.set_title(f"difference-term variance decay (top level {top})")
    ax.grid(True, which="both", alpha=0.3)
    fig.tight_layout()
    out = out_dir / (Path(path).stem + ".png")
    fig.savefig(out, dpi=130)
    plt.close(fig)
    return out


def render_report(csv_paths, out_dir) -> list:
    """Render a figure per CSV, dispatched on header; returns written paths."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    for path in csv_paths:
        kind = sniff_csv_kind(path)
        if kind == "records":
            written.append(_render_records(path, out))
        else:
            written.append(_render_terms(path, out))
    return written
