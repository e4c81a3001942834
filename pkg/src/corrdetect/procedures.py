"""Test procedures: composite assembly, thresholds, and null calibration.

A test procedure is an OR over constituents.  Each constituent pairs a
statistic plan with a threshold.  Two operating modes share identical
statistic plans:

* ``paper_constants``: thresholds follow the closed forms driven by a single
  constant C (sound but very conservative);
* ``calibrated`` (default): each constituent's threshold is the empirical
  (1 - eta/(2 m)) null quantile from seeded null replications, where m counts
  the constituents with a nondegenerate null.  The union bound then budgets
  eta/2 for type I, mirroring the eta/2 + eta/2 accounting behind the
  closed-form constants.

Constituents and which regimes use them (base size b = p/R, log(eR) = 1+log R):

    thresholded        Y_t on decorrelated data; sparse regimes
    chisq              ||X~||^2; dense regimes (grouped: summed over blocks)
    linear             squared global mean projection; mean-dominated regimes
    chisq_scan         max_k ||X~_Bk||^2; group-scan regimes
    thresholded_scan   max_k Y_t^(k); dense group-scan regimes
    linear_scan        max_k squared group projection
    thresholded_avg    Y_t of standardized group means
    chisq_avg          group-mean energy; dense averaged regime
    noiseless          residual after removing correlation directions (g=1)
    chisq_raw          ||X||^2 on raw data (g=1, fully dense)
    adaptive scans     max over sparsity levels of Y_{t(s)} / shape(s)

The adaptive composite scans every sparsity level below sqrt(p) and every
level above p - sqrt(p), normalizing each member by its threshold shape so a
single cutoff calibrates the whole maximum jointly.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Optional, Union

import numpy as np

from .errors import CalibrationError, ContractError, UnsupportedRegimeError
from .geometry import omega as pattern_omega
from .models import (
    CorrelationModel,
    Equicorrelated,
    Grouped,
    Observation,
    RankOne,
    decorrelate,
)
from . import statistics as stats

__all__ = [
    "Constituent",
    "TestProcedure",
    "Verdict",
    "ThresholdRecord",
    "build_test",
    "evaluate",
    "calibrate_null_quantile",
    "model_for",
]

_RANK_ONE_RESIDUAL_RTOL = 1e-10  # verdict tolerance for non-sign-pattern v


def _sparse_shape(p: int, s: int) -> float:
    return s * math.log1p(p / s ** 2)


def _dense_shape(p: int, s: int) -> float:
    return (p - s) * math.log1p(p / (p - s) ** 2)


def _sparse_t(p: int, s: int) -> float:
    return math.sqrt(2.0 * math.log1p(p / s ** 2))


def _dense_t(p: int, s: int) -> float:
    return math.sqrt(2.0 * math.log1p(p / (p - s) ** 2))


@dataclass(frozen=True, eq=False)
class Constituent:
    """One statistic plus its threshold rule (reject iff value > threshold)."""

    name: str
    kind: str
    params: dict
    threshold: float
    threshold_note: str
    deterministic_null: bool = False

    def descriptor(self) -> dict:
        params = {k: (v.tolist() if isinstance(v, np.ndarray) else v)
                  for k, v in self.params.items()}
        return {"name": self.name, "kind": self.kind, "params": params,
                "threshold": self.threshold, "rule": self.threshold_note}


@dataclass(frozen=True, eq=False)
class TestProcedure:
    name: str
    family: str
    p: int
    s: Union[int, str]
    gamma: float
    R: Optional[int]
    v: Optional[np.ndarray]
    mode: str
    constituents: tuple
    eta: Optional[float] = None
    C: Optional[float] = None
    calibration: Optional[dict] = None

    def descriptor(self) -> dict:
        return {
            "name": self.name, "family": self.family, "p": self.p, "s": self.s,
            "gamma": self.gamma, "R": self.R,
            "v": None if self.v is None else list(self.v),
            "mode": self.mode, "eta": self.eta, "C": self.C,
            "calibration": self.calibration,
            "constituents": [c.descriptor() for c in self.constituents],
        }

    def to_json(self, **kw) -> str:
        return json.dumps(self.descriptor(), **kw)


@dataclass(frozen=True)
class Verdict:
    reject: bool
    fired: tuple
    values: dict
    thresholds: dict


@dataclass(frozen=True)
class ThresholdRecord:
    """Calibrated threshold with order-statistic uncertainty.

    ``wilson_low``/``wilson_high`` bracket the threshold by the order
    statistics at the Wilson interval for the target coverage q.
    """

    value: float
    q: float
    n_cal: int
    wilson_low: float
    wilson_high: float


def model_for(test: "TestProcedure") -> CorrelationModel:
    if test.family == "equicorrelated":
        return Equicorrelated(test.p, test.gamma)
    if test.family == "grouped":
        return Grouped(test.p, test.R, test.gamma)
    return RankOne(test.p, test.gamma, test.v)


# ---------------------------------------------------------------------------
# statistic plans


def _plan(family: str, p: int, s, gamma: float, R: Optional[int],
          v: Optional[np.ndarray]) -> list:
    """(name, kind, params, paper_rule) quadruples; paper_rule maps C -> threshold."""
    if family == "equicorrelated":
        return _plan_equicorrelated(p, s, gamma)
    if family == "grouped":
        if R is None:
            raise ContractError("grouped tests need R")
        return _plan_grouped(p, s, gamma, R)
    if family == "rank_one":
        if v is None:
            raise ContractError("rank-one tests need the pattern v")
        return _plan_rank_one(p, s, gamma, v)
    raise ContractError(f"unknown family {family!r}")


def _chisq_item(p, scale=2.0, name="chisq"):
    return (name, "chisq", {},
            lambda C: p + (C ** 2 / scale) * math.sqrt(p))


def _linear_item(p, gamma, bs):
    sigma_sq = 1.0 - gamma + gamma * bs
    return ("linear", "linear", {"sigma_sq": sigma_sq},
            lambda C: sigma_sq * (1.0 + C ** 2 / 2.0))


def _plan_equicorrelated(p: int, s, gamma: float) -> list:
    if s == "adaptive":
        return _plan_adaptive(p, gamma)
    root = math.sqrt(p)
    if gamma == 1.0:
        if s < p:
            return [("noiseless", "noiseless", {}, lambda C: 0.0)]
        return [("chisq_raw", "chisq_raw", {}, lambda C: p + (C ** 2 / 2.0) * p)]
    items = []
    if s < root:
        t = _sparse_t(p, s)
        shape = _sparse_shape(p, s)
        items.append(("thresholded", "thresholded", {"t": t},
                      lambda C, sh=shape: (C ** 2 / 32.0) * sh))
    else:
        items.append(_chisq_item(p))
    if s > p / 2:
        if s <= p - root:
            if not any(it[0] == "chisq" for it in items):
                items.append(_chisq_item(p))
        elif s < p:
            t = _dense_t(p, s)
            shape = _dense_shape(p, s)
            items.append(("thresholded_dense", "thresholded", {"t": t},
                          lambda C, sh=shape: (C ** 2 / 8.0) * sh))
        else:  # s == p: the mean direction alone carries the separation
            items = []
        items.append(_linear_item(p, gamma, p))
    return items


def _plan_grouped(p: int, s, gamma: float, R: int) -> list:
    if s == "adaptive":
        raise ContractError("the adaptive composite is defined for the single random effect")
    bs = p // R
    log_er = 1.0 + math.log(R)
    if gamma == 1.0:
        items = [("noiseless", "noiseless", {}, lambda C: 0.0)]
        if s >= bs:
            items.append(_grouped_avg_item(p, s, 1.0, R))
        return items
    root = math.sqrt(p)
    if s < root:
        t = _sparse_t(p, s)
        shape = _sparse_shape(p, s)
        items = [("thresholded", "thresholded", {"t": t},
                  lambda C, sh=shape: (C ** 2 / 64.0) * sh)]
    else:
        items = [_chisq_item(p, scale=16.0)]
    if s <= p / (4 * R):
        return items
    if s < bs:
        # scan regime: constituent choice follows which term attains the
        # rate minimum (first branch wins ties; tie rule is plumbing, not
        # dictated by the closed forms).
        from .rates import _grouped_scan_sq
        _, first, cap, sub = _grouped_scan_sq(p, s, gamma, R)
        if first <= cap:
            if sub == "scan-moderate":
                items.append(("chisq_scan", "chisq_scan", {},
                              lambda C, b=bs, le=log_er:
                              b + 2.0 * math.sqrt(b * (C ** 2 / 128.0) * le)
                              + 2.0 * (C ** 2 / 128.0) * le))
            else:
                t = math.sqrt(2.0 * math.log1p(R * p * log_er / (p - R * s) ** 2))
                shape = (bs - s) * math.log1p(R * p * log_er / (p - R * s) ** 2) + math.log(R)
                items.append(("thresholded_scan", "thresholded_scan", {"t": t},
                              lambda C, sh=shape: (C ** 2 / 64.0) * sh))
        else:
            sigma_sq = 1.0 - gamma + gamma * bs
            items.append(("linear_scan", "linear_scan", {"sigma_sq": sigma_sq},
                          lambda C, ss=sigma_sq, le=log_er:
                          ss * (1.0 + (C ** 2 / 64.0) * le)))
        return items
    items.append(_grouped_avg_item(p, s, gamma, R))
    return items


def _grouped_avg_item(p: int, s: int, gamma: float, R: int):
    bs = p // R
    sigma_sq = 1.0 - gamma + gamma * bs
    if s < p / math.sqrt(R):
        t = math.sqrt(2.0 * math.log1p(p ** 2 / (R * s ** 2)))
        shape = (4.0 * R * s / p) * math.log1p(p ** 2 / (16.0 * R * s ** 2))
        return ("thresholded_avg", "thresholded_avg", {"t": t},
                lambda C, sh=shape: (C ** 2 / 64.0) * sh)
    return ("chisq_avg", "chisq_avg", {"sigma_sq": sigma_sq},
            lambda C, ss=sigma_sq: ss * (R + (C ** 2 / 16.0) * math.sqrt(R)))


def _plan_rank_one(p: int, s, gamma: float, v: np.ndarray) -> list:
    if s == "adaptive":
        raise ContractError("the adaptive composite is defined for the single random effect")
    if gamma == 1.0:
        v0 = int(np.count_nonzero(v))
        if s < v0:
            return [("noiseless", "noiseless", {}, lambda C: 0.0)]
        return [("chisq_raw", "chisq_raw", {}, lambda C: p + (C ** 2 / 2.0) * p)]
    w = pattern_omega(v)
    if s > w:
        raise UnsupportedRegimeError(
            f"rank-one tests are characterized only for s <= omega(v) = {w}")
    if s <= math.sqrt(p):
        t = _sparse_t(p, s)
        shape = _sparse_shape(p, s)
        return [("thresholded", "thresholded", {"t": t},
                 lambda C, sh=shape: (C ** 2 / 16.0) * sh)]
    return [_chisq_item(p)]


def _plan_adaptive(p: int, gamma: float) -> list:
    if gamma == 1.0:
        raise ContractError("the adaptive composite assumes gamma < 1")
    root = math.sqrt(p)
    items = []
    sparse_members = np.arange(1, math.ceil(root))
    sparse_members = sparse_members[sparse_members < root]
    if sparse_members.size:
        ts = np.array([_sparse_t(p, int(s)) for s in sparse_members])
        shapes = np.array([_sparse_shape(p, int(s)) for s in sparse_members])
        items.append(("adaptive_sparse", "adaptive_scan",
                      {"ts": ts, "shapes": shapes, "members": sparse_members},
                      lambda C: C ** 2 / 32.0))
    items.append(_chisq_item(p))
    lo = int(math.floor(p - root)) + 1
    dense_members = np.arange(max(lo, 1), p)
    dense_members = dense_members[dense_members > p - root]
    if dense_members.size:
        ts = np.array([_dense_t(p, int(s)) for s in dense_members])
        shapes = np.array([_dense_shape(p, int(s)) for s in dense_members])
        items.append(("adaptive_dense", "adaptive_scan",
                      {"ts": ts, "shapes": shapes, "members": dense_members},
                      lambda C: C ** 2 / 8.0))
    items.append(_linear_item(p, gamma, p))
    return items


# ---------------------------------------------------------------------------
# statistic evaluation


def _constituent_value(kind: str, params: dict, x: np.ndarray,
                       model: CorrelationModel, cache: dict,
                       rng: np.random.Generator) -> float:
    def xt():
        if "xt" not in cache:
            cache["xt"] = decorrelate(model, x, rng)
        return cache["xt"]

    if kind == "thresholded":
        return stats.thresholded_sum(xt(), params["t"]).value
    if kind == "chisq":
        return stats.squared_norm(xt()).value
    if kind == "linear":
        if isinstance(model, RankOne):
            return stats.linear_projection(x, model, "pattern").value
        m = model if isinstance(model, Equicorrelated) else Equicorrelated(model.p, model.gamma)
        return stats.linear_projection(x, m, "global").value
    if kind == "chisq_scan":
        return stats.scan(model.block_view(xt()), "chisq").value
    if kind == "thresholded_scan":
        return stats.scan(model.block_view(xt()), "thresholded", t=params["t"]).value
    if kind == "linear_scan":
        return stats.linear_scan(x, model).value
    if kind == "thresholded_avg":
        return stats.averaged_group(x, model, "thresholded", t=params["t"]).value
    if kind == "chisq_avg":
        return stats.averaged_group(x, model, "chisq").value
    if kind == "noiseless":
        value = stats.noiseless_residual(x, model).value
        if isinstance(model, RankOne):
            is_sign_pattern = np.all(np.abs(np.abs(model.v) - 1.0) < 1e-15)
            if not is_sign_pattern:
                energy = float(x @ x)
                value = 0.0 if value <= _RANK_ONE_RESIDUAL_RTOL * (1.0 + energy) else value
        return value
    if kind == "chisq_raw":
        return stats.squared_norm(x).value
    if kind == "adaptive_scan":
        profile = stats.thresholded_profile(xt(), params["ts"])
        return float(np.max(profile / params["shapes"]))
    raise ContractError(f"unknown constituent kind {kind!r}")


def _all_values(items, x, model, rng) -> dict:
    cache: dict = {}
    return {name: _constituent_value(kind, params, x, model, cache, rng)
            for name, kind, params, _ in items}


# ---------------------------------------------------------------------------
# calibration


def _wilson_bounds(q: float, n: int, z: float = 2.0) -> tuple:
    denom = n + z * z
    center = (q * n + z * z / 2.0) / denom
    half = z * math.sqrt(q * (1.0 - q) * n + z * z / 4.0) / denom
    return max(0.0, center - half), min(1.0, center + half)


def calibrate_null_quantile(items, model: CorrelationModel, q: float, n_cal: int,
                            rng: np.random.Generator) -> dict:
    """Empirical null q-quantiles for one or several statistic plans.

    Simulates ``n_cal`` null observations once and evaluates every plan on
    each, so a composite's constituents are calibrated on a common stream.
    Refuses when fewer than 20 replications are expected beyond the quantile.
    Returns {name: ThresholdRecord}.
    """
    if not (0.0 < q < 1.0):
        raise ContractError("quantile level must lie in (0, 1)")
    if n_cal < 1000:
        raise ContractError("n_cal must be at least 1000")
    expected_tail = n_cal * (1.0 - q)
    if expected_tail < 20:
        raise CalibrationError(
            f"n_cal={n_cal} leaves only {expected_tail:.1f} expected replications "
            f"beyond the {q} quantile; need >= 20 (raise n_cal or lower q)")
    from .models import sample as draw
    values = {name: np.empty(n_cal) for name, _, _, _ in items}
    for i in range(n_cal):
        obs = draw(model, None, rng)
        vals = _all_values(items, obs.x, model, rng)
        for name, v in vals.items():
            values[name][i] = v
    out = {}
    lo_q, hi_q = _wilson_bounds(q, n_cal)
    for name, arr in values.items():
        arr.sort()
        k = max(1, math.ceil(q * n_cal))
        k_lo = max(1, math.ceil(lo_q * n_cal))
        k_hi = min(n_cal, max(1, math.ceil(hi_q * n_cal)))
        out[name] = ThresholdRecord(
            value=float(arr[k - 1]), q=q, n_cal=n_cal,
            wilson_low=float(arr[k_lo - 1]), wilson_high=float(arr[k_hi - 1]))
    return out


# ---------------------------------------------------------------------------
# public construction / evaluation


def build_test(family: str, p: int, s, gamma: float, *, R: Optional[int] = None,
               v=None, mode: str = "calibrated", eta: float = 0.1,
               n_cal: int = 4000, C: Optional[float] = None,
               rng: Optional[np.random.Generator] = None,
               seed_label: Optional[str] = None) -> TestProcedure:
    """Assemble the regime-correct composite for a parameter configuration.

    ``s`` is an integer sparsity or "adaptive" (single random effect only).
    In ``paper_constants`` mode thresholds follow the closed forms at the
    given C.  In ``calibrated`` mode each constituent with a nondegenerate
    null gets the empirical (1 - eta/(2 m)) null quantile from ``n_cal``
    replications drawn from ``rng``.
    """
    if s != "adaptive":
        s = int(s)
        if not (1 <= s <= p):
            raise ContractError("need 1 <= s <= p")
    if v is not None:
        v = np.asarray(v, dtype=float)
    items = _plan(family, p, s, gamma, R, v)
    model = None
    calibration = None
    if mode == "paper_constants":
        if C is None:
            raise ContractError("paper_constants mode needs the constant C")
        constituents = tuple(
            Constituent(name, kind, params, float(rule(C)),
                        f"paper form at C={C}", deterministic_null=(kind == "noiseless"))
            for name, kind, params, rule in items)
    elif mode == "calibrated":
        if rng is None:
            raise ContractError("calibrated mode needs a calibration stream")
        if family == "equicorrelated":
            model = Equicorrelated(p, gamma)
        elif family == "grouped":
            model = Grouped(p, R, gamma)
        else:
            model = RankOne(p, gamma, v)
        random_items = [it for it in items if it[1] != "noiseless"]
        m = len(random_items)
        records = {}
        if m:
            q = 1.0 - eta / (2.0 * m)
            records = calibrate_null_quantile(random_items, model, q, n_cal, rng)
        constituents = tuple(
            Constituent(name, kind, params,
                        0.0 if kind == "noiseless" else records[name].value,
                        "exact null residual" if kind == "noiseless"
                        else f"calibrated q={records[name].q}",
                        deterministic_null=(kind == "noiseless"))
            for name, kind, params, _ in items)
        calibration = {
            "eta": eta, "n_cal": n_cal, "seed": seed_label,
            "budget_per_constituent": None if not m else eta / (2.0 * m),
            "thresholds": {name: rec.__dict__ for name, rec in records.items()},
        }
    else:
        raise ContractError(f"unknown mode {mode!r}")
    label = s if isinstance(s, str) else f"s={s}"
    name = f"{family}:{label}:gamma={gamma}"
    return TestProcedure(name=name, family=family, p=p, s=s, gamma=gamma, R=R,
                         v=v, mode=mode, constituents=constituents, eta=eta,
                         C=C, calibration=calibration)


def evaluate(test: TestProcedure, obs: Observation,
             rng: np.random.Generator) -> Verdict:
    """Composite verdict on one observation (OR of constituents).

    The decorrelation noise is drawn fresh from ``rng`` on every call; both
    operating modes produce bit-identical statistic values for a fixed draw.
    """
    model = obs.model
    _check_compatibility(test, model)
    items = [(c.name, c.kind, c.params, None) for c in test.constituents]
    values = _all_values(items, obs.x, model, rng)
    fired = tuple(c.name for c in test.constituents if values[c.name] > c.threshold)
    thresholds = {c.name: c.threshold for c in test.constituents}
    return Verdict(reject=bool(fired), fired=fired, values=values,
                   thresholds=thresholds)


def _check_compatibility(test: TestProcedure, model: CorrelationModel) -> None:
    family = ("equicorrelated" if isinstance(model, Equicorrelated)
              else "grouped" if isinstance(model, Grouped) else "rank_one")
    if family != test.family or model.p != test.p:
        raise ContractError("observation model does not match the test's family/dimension")
    if model.gamma != test.gamma:
        raise ContractError(
            f"observation gamma={model.gamma} routed to a test built for "
            f"gamma={test.gamma}")
    if isinstance(model, Grouped) and model.R != test.R:
        raise ContractError("group count mismatch")
    if isinstance(model, RankOne) and not np.allclose(model.v, test.v, rtol=0, atol=1e-12):
        raise ContractError("pattern mismatch")
