"""Seeded Monte Carlo risk estimation and sweep orchestration.

The replication layout is deterministic by construction: replication i of
stream kind k (null / a given alternative) for cell c draws from the
generator seeded by SeedSequence(master_seed, spawn_key=(c, k, alt, i)).
Estimates therefore depend only on (plan, master_seed), never on worker
count or scheduling, and alternative estimates do not move when the
alternatives list is permuted (the alternative key is a stable hash of its
descriptor).

Separation convention: a multiplier m places alternatives at squared norm
||theta||^2 = m * rate_sq, where rate_sq is the branch value reported by the
rates module.  Risk estimates carry Wilson-interval half-widths (z = 1) as
standard errors; rates near 0 or 1 keep honest uncertainty that way.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
import os
import tempfile
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from . import __version__
from .divergences import (
    GroupSupported,
    SingleGroupSparse,
    UniformSparse,
    draw as draw_prior,
)
from .errors import ContractError
from .geometry import SignalSpec, make_sparse_signal
from .models import Equicorrelated, Grouped, RankOne, sample
from .procedures import TestProcedure, build_test, evaluate
from .rates import rate_equicorrelated, rate_grouped, rate_rank_one
from .streams import stable_token, substream

__all__ = [
    "RiskEstimate",
    "SweepPlan",
    "estimate_risk",
    "default_alternatives",
    "run_sweep",
    "write_rows_csv",
    "write_manifest",
    "CSV_COLUMNS",
]

CSV_COLUMNS = ["family", "p", "s", "gamma", "R", "regime", "rate_sq",
               "multiplier", "type_i", "worst_type_ii", "total", "se",
               "n_reps", "seed"]

_NULL_STREAM = 1
_ALT_STREAM = 2
_CAL_STREAM = 0


def wilson_halfwidth(k: int, n: int, z: float = 1.0) -> float:
    """Half-width of the Wilson score interval for k successes out of n."""
    denom = n + z * z
    return z * math.sqrt(k * (n - k) / n + z * z / 4.0) / denom


@dataclass(frozen=True)
class RiskEstimate:
    type_i: float
    worst_type_ii: float
    per_alternative: dict
    total: float
    se_type_i: float
    se_worst_type_ii: float
    se_total: float
    n_reps: int
    master_seed: int
    wall_time: float

    def descriptor(self) -> dict:
        return {
            "type_i": self.type_i, "worst_type_ii": self.worst_type_ii,
            "per_alternative": self.per_alternative, "total": self.total,
            "se_type_i": self.se_type_i, "se_worst_type_ii": self.se_worst_type_ii,
            "se_total": self.se_total, "n_reps": self.n_reps,
            "master_seed": self.master_seed, "wall_time": self.wall_time,
        }


def _alt_key(alt) -> str:
    if isinstance(alt, SignalSpec):
        return "signal:" + json.dumps(alt.descriptor(), sort_keys=True)
    return "prior:" + json.dumps(alt.descriptor(), sort_keys=True)


def _reject_count_chunk(test, model, alt, master_seed, cell_id, kind, alt_code,
                        start, stop, v) -> int:
    count = 0
    for i in range(start, stop):
        rng = substream(master_seed, cell_id, kind, alt_code, i)
        if alt is None:
            theta = None
        elif isinstance(alt, SignalSpec):
            theta = alt.theta
        else:
            theta = draw_prior(alt, rng, v=v)
        obs = sample(model, theta, rng)
        if evaluate(test, obs, rng).reject:
            count += 1
    return count


def _chunk_worker(args):
    return _reject_count_chunk(*args)


def estimate_risk(test: TestProcedure, model, alternatives: Sequence,
                  n_reps: int, master_seed: int, *, cell_id: int = 0,
                  workers: int = 1, executor: Optional[ProcessPoolExecutor] = None
                  ) -> RiskEstimate:
    """Type I, per-alternative type II, and total risk for one test.

    ``alternatives`` mixes fixed SignalSpec vectors (evaluated as-is every
    replication) and PriorSpec distributions (redrawn per replication).
    Null and alternative replications use disjoint derived streams.
    """
    if not alternatives:
        raise ContractError("alternatives must be nonempty")
    if n_reps < 100:
        raise ContractError("n_reps must be at least 100")
    start_time = time.perf_counter()
    v = model.v if isinstance(model, RankOne) else None
    units = [(None, _NULL_STREAM, 0)]
    keys = []
    for alt in alternatives:
        key = _alt_key(alt)
        keys.append(key)
        units.append((alt, _ALT_STREAM, stable_token(key)))
    counts = {}
    own_executor = None
    try:
        if workers > 1 and executor is None:
            own_executor = ProcessPoolExecutor(max_workers=workers)
            executor = own_executor
        for alt, kind, alt_code in units:
            if executor is not None:
                chunk = max(200, n_reps // (8 * max(workers, 1)))
                tasks = [(test, model, alt, master_seed, cell_id, kind, alt_code,
                          a, min(a + chunk, n_reps), v)
                         for a in range(0, n_reps, chunk)]
                counts[(kind, alt_code)] = sum(executor.map(_chunk_worker, tasks))
            else:
                counts[(kind, alt_code)] = _reject_count_chunk(
                    test, model, alt, master_seed, cell_id, kind, alt_code,
                    0, n_reps, v)
    finally:
        if own_executor is not None:
            own_executor.shutdown()
    k_null = counts[(_NULL_STREAM, 0)]
    type_i = k_null / n_reps
    se_i = wilson_halfwidth(k_null, n_reps)
    per_alt = {}
    se_alt = {}
    for (alt, kind, alt_code), key in zip(units[1:], keys):
        k = counts[(kind, alt_code)]
        per_alt[key] = (n_reps - k) / n_reps  # acceptance rate = type II
        se_alt[key] = wilson_halfwidth(n_reps - k, n_reps)
    worst_key = max(per_alt, key=lambda k: per_alt[k])
    worst = per_alt[worst_key]
    se_ii = se_alt[worst_key]
    return RiskEstimate(
        type_i=type_i, worst_type_ii=worst, per_alternative=per_alt,
        total=type_i + worst, se_type_i=se_i, se_worst_type_ii=se_ii,
        se_total=math.hypot(se_i, se_ii), n_reps=n_reps,
        master_seed=master_seed, wall_time=time.perf_counter() - start_time)


def default_alternatives(family: str, p: int, s: int, gamma: float,
                         R: Optional[int], v, target_sq: float) -> list:
    """Least-favorable-style panel at squared separation ``target_sq``.

    One regime-matched prior (the hardest-instance construction: uniform
    sparse supports, within-one-group supports, or whole-group blocks) plus
    the deterministic first-coordinates signal.  Draws satisfy
    ||theta||^2 = target_sq exactly.
    """
    if target_sq <= 0:
        raise ContractError("separation must be positive")
    alts = []
    if family == "grouped" and R is not None and R > 1:
        bs = p // R
        if s >= bs:
            m = max(1, s // bs)
            alts.append(GroupSupported(p, R, m, math.sqrt(target_sq / (m * bs))))
        elif s > p // (4 * R):
            alts.append(SingleGroupSparse(p, R, s, math.sqrt(target_sq / s)))
        else:
            alts.append(UniformSparse(p, s, math.sqrt(target_sq / s)))
    elif family == "rank_one":
        v = np.asarray(v, dtype=float)
        if np.all(np.abs(np.abs(v) - 1.0) < 1e-12):
            alts.append(UniformSparse(p, s, math.sqrt(target_sq / s),
                                      signs="match_pattern"))
        else:
            zeros = np.flatnonzero(v == 0.0)
            if zeros.size >= s:
                alts.append(UniformSparse(p, s, math.sqrt(target_sq / s),
                                          universe=zeros))
            else:
                alts.append(UniformSparse(p, s, math.sqrt(target_sq / s)))
    else:
        # equicorrelated: effective support min(s, floor(sqrt(p))) in the
        # dense regime mirrors the hardest construction
        s_eff = s if s < math.sqrt(p) else max(min(s, int(math.sqrt(p))), 1)
        alts.append(UniformSparse(p, s_eff, math.sqrt(target_sq / s_eff)))
    alts.append(make_sparse_signal(p, s, math.sqrt(target_sq / s), support_rule="first"))
    return alts


@dataclass(frozen=True)
class SweepPlan:
    """Grid of cells x separation multipliers for phase experiments.

    ``separation_reference``: "cell" anchors multipliers at each cell's own
    rate; "gamma0" anchors at the gamma = 0 rate of the same (p, s[, R]),
    which is how blessing/curse comparisons fix the signal across gamma.
    """

    family: str
    p_grid: tuple
    s_grid: tuple
    gamma_grid: tuple
    multipliers: tuple
    n_reps: int
    master_seed: int
    R_grid: tuple = (None,)
    v: Optional[np.ndarray] = None
    mode: str = "calibrated"
    eta: float = 0.1
    C: Optional[float] = None
    n_cal: int = 4000
    separation_reference: str = "cell"
    workers: int = 1
    adaptive: bool = False

    def __post_init__(self):
        if not (self.p_grid and self.s_grid and self.gamma_grid and self.multipliers):
            raise ContractError("sweep grids must be nonempty")
        if any(m <= 0 for m in self.multipliers):
            raise ContractError("multipliers must be positive")
        if self.separation_reference not in ("cell", "gamma0"):
            raise ContractError("separation_reference must be 'cell' or 'gamma0'")

    def descriptor(self) -> dict:
        return {
            "family": self.family, "p_grid": list(self.p_grid),
            "s_grid": list(self.s_grid), "gamma_grid": list(self.gamma_grid),
            "R_grid": [r for r in self.R_grid],
            "v": None if self.v is None else list(self.v),
            "multipliers": list(self.multipliers), "n_reps": self.n_reps,
            "master_seed": self.master_seed, "mode": self.mode, "eta": self.eta,
            "C": self.C, "n_cal": self.n_cal,
            "separation_reference": self.separation_reference,
            "workers": self.workers, "adaptive": self.adaptive,
        }


def _cell_rate(family, p, s, gamma, R, v):
    if family == "equicorrelated":
        return rate_equicorrelated(p, s, gamma)
    if family == "grouped":
        return rate_grouped(p, s, gamma, R)
    return rate_rank_one(p, s, gamma, v)


def _cell_model(family, p, gamma, R, v):
    if family == "equicorrelated":
        return Equicorrelated(p, gamma)
    if family == "grouped":
        return Grouped(p, R, gamma)
    return RankOne(p, gamma, v)


def run_sweep(plan: SweepPlan) -> tuple:
    """One RiskEstimate row per cell x multiplier.

    Returns (rows, cell_reports).  Per-cell failures are recorded in the
    report and leave NaN rows; the sweep continues.
    """
    rows = []
    reports = []
    cell_id = 0
    executor = None
    try:
        if plan.workers > 1:
            executor = ProcessPoolExecutor(max_workers=plan.workers)
        for p in plan.p_grid:
            for R in plan.R_grid:
                for s in plan.s_grid:
                    for gamma in plan.gamma_grid:
                        cell_id += 1
                        rows_c, report = _run_cell(plan, p, s, gamma, R, cell_id,
                                                   executor)
                        rows.extend(rows_c)
                        reports.append(report)
    finally:
        if executor is not None:
            executor.shutdown()
    return rows, reports


def _run_cell(plan, p, s, gamma, R, cell_id, executor):
    base = {"family": plan.family, "p": p, "s": s, "gamma": gamma,
            "R": "" if R is None else R}
    try:
        rate = _cell_rate(plan.family, p, s, gamma, R, plan.v)
        if rate.uncharacterized:
            raise ContractError("rate uncharacterized for this configuration")
        ref = rate
        if plan.separation_reference == "gamma0":
            ref = _cell_rate(plan.family, p, s, 0.0, R, plan.v)
        model = _cell_model(plan.family, p, gamma, R, plan.v)
        test = build_test(plan.family, p, "adaptive" if plan.adaptive else s,
                          gamma, R=R, v=plan.v, mode=plan.mode, eta=plan.eta,
                          C=plan.C, n_cal=plan.n_cal,
                          rng=substream(plan.master_seed, cell_id, _CAL_STREAM),
                          seed_label=f"seed={plan.master_seed}/cell={cell_id}")
        out = []
        for mult in plan.multipliers:
            target = mult * ref.value
            alts = default_alternatives(plan.family, p, s, gamma, R, plan.v, target)
            est = estimate_risk(test, model, alts, plan.n_reps, plan.master_seed,
                                cell_id=cell_id * 1000 + len(out),
                                workers=plan.workers, executor=executor)
            out.append(dict(base, regime=rate.regime, rate_sq=rate.value,
                            multiplier=mult, type_i=est.type_i,
                            worst_type_ii=est.worst_type_ii, total=est.total,
                            se=est.se_total, n_reps=plan.n_reps,
                            seed=plan.master_seed))
        return out, dict(base, cell_id=cell_id, status="ok", regime=rate.regime)
    except Exception as exc:  # recorded, sweep continues
        nan_rows = [dict(base, regime="", rate_sq=float("nan"), multiplier=m,
                         type_i=float("nan"), worst_type_ii=float("nan"),
                         total=float("nan"), se=float("nan"),
                         n_reps=plan.n_reps, seed=plan.master_seed)
                    for m in plan.multipliers]
        return nan_rows, dict(base, cell_id=cell_id, status="error",
                              error=f"{type(exc).__name__}: {exc}")


def _fmt(value) -> str:
    if isinstance(value, float):
        return repr(value)  # shortest round-trip decimal
    return str(value)


def _atomic_write(path, text: str) -> None:
    directory = os.path.dirname(os.path.abspath(path)) or "."
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-corrdetect-")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_rows_csv(rows, path) -> None:
    import io

    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for row in rows:
        writer.writerow([_fmt(row[c]) for c in CSV_COLUMNS])
    _atomic_write(path, buf.getvalue())


def write_manifest(plan: SweepPlan, reports, csv_path, manifest_path,
                   config: Optional[dict] = None) -> dict:
    with open(csv_path, "rb") as fh:
        digest = hashlib.sha256(fh.read()).hexdigest()
    manifest = {
        "version": __version__,
        "master_seed": plan.master_seed,
        "plan": plan.descriptor(),
        "config": config,
        "cells": reports,
        "csv": os.path.basename(str(csv_path)),
        "csv_sha256": digest,
    }
    _atomic_write(manifest_path, json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return manifest
