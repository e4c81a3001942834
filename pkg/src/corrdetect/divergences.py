"""Least-favorable priors and the divergence calculus behind lower bounds.

For a prior pi over alternatives, the chi-square divergence of the induced
Gaussian mixture from the null satisfies (with equality for these Gaussian
location mixtures)

    chi2(P_pi || P_0) <= E exp(<theta, Sigma^-1 theta~>) - 1,

the expectation over an iid pair from the prior.  We compute the right-hand
side and call it the IS-value, after the Ingster-Suslina method.  Together
with d_TV <= sqrt(chi2)/2, any test's total risk is at least 1 - sqrt(chi2)/2.

Exact computation routes:

* point masses: a single quadratic form (gamma = 1 is allowed when the mass
  lies in the span of the correlation directions, where the projected
  one- or R-dimensional sufficient statistic gives the continuous limit of
  the closed form);
* uniform sparse supports: the inner product depends on the support overlap
  only, so the expectation is a hypergeometric sum (log-gamma binomials);
* supports inside one uniformly chosen group: a two-level overlap sum,
  1 - 1/R + (1/R) E[...|same group];
* whole-group supports: a hypergeometric sum over group overlaps;
* otherwise: full support-pair enumeration (with an exchangeability
  reduction fixing one support when the pair count exceeds the budget) or
  plain Monte Carlo over prior pairs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import combinations
from typing import Optional, Union

import numpy as np
from scipy.special import gammaln, logsumexp

from .errors import ContractError, DomainError, SingularCovarianceError
from .models import (
    CorrelationModel,
    Equicorrelated,
    Grouped,
    RankOne,
    precision_apply,
)

__all__ = [
    "PointMass",
    "UniformSparse",
    "SingleGroupSparse",
    "GroupSupported",
    "ShiftedSparse",
    "PriorSpec",
    "draw",
    "DivergenceResult",
    "ingster_suslina_chisq",
    "hypergeometric_mgf_bound",
    "hypergeometric_logpmf",
    "mean_shift_tv",
    "risk_lower_bound",
]

ENUMERATION_PAIR_BUDGET = 1_000_000


@dataclass(frozen=True, eq=False)
class PointMass:
    theta: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "theta", np.asarray(self.theta, dtype=float))

    def descriptor(self) -> dict:
        return {"prior": "point_mass", "norm_sq": float(self.theta @ self.theta)}


@dataclass(frozen=True, eq=False)
class UniformSparse:
    """Uniform size-s support, common magnitude; optional sign rule and
    support universe restriction.

    signs "plus": all entries +magnitude; "match_pattern": the sign of a
    pattern v per coordinate; "rademacher": independent random signs (the
    sign-symmetric variant, wiping out the mean component of every draw).
    """

    p: int
    s: int
    magnitude: float
    signs: str = "plus"  # "plus" | "match_pattern" | "rademacher"
    universe: Optional[np.ndarray] = None

    def __post_init__(self):
        if not (1 <= self.s <= self.p):
            raise ContractError("need 1 <= s <= p")
        if self.universe is not None:
            uni = np.unique(np.asarray(self.universe, dtype=np.intp))
            if uni.size < self.s or uni.min() < 0 or uni.max() >= self.p:
                raise ContractError("universe must hold at least s valid coordinates")
            object.__setattr__(self, "universe", uni)

    @property
    def population(self) -> int:
        return self.p if self.universe is None else int(self.universe.size)

    def descriptor(self) -> dict:
        d = {"prior": "uniform_sparse", "p": self.p, "s": self.s,
             "magnitude": self.magnitude, "signs": self.signs}
        if self.universe is not None:
            d["universe_size"] = int(self.universe.size)
        return d


@dataclass(frozen=True, eq=False)
class SingleGroupSparse:
    """Uniformly chosen group, then a uniform size-s support inside it."""

    p: int
    R: int
    s: int
    magnitude: float

    def __post_init__(self):
        if self.p % self.R:
            raise ContractError("R must divide p")
        if not (1 <= self.s <= self.p // self.R):
            raise ContractError("need 1 <= s <= p/R")

    def descriptor(self) -> dict:
        return {"prior": "single_group_sparse", "p": self.p, "R": self.R,
                "s": self.s, "magnitude": self.magnitude}


@dataclass(frozen=True, eq=False)
class GroupSupported:
    """m whole groups chosen uniformly, constant magnitude on each."""

    p: int
    R: int
    m: int
    magnitude: float

    def __post_init__(self):
        if self.p % self.R:
            raise ContractError("R must divide p")
        if not (1 <= self.m <= self.R):
            raise ContractError("need 1 <= m <= R")

    def descriptor(self) -> dict:
        return {"prior": "group_supported", "p": self.p, "R": self.R,
                "m": self.m, "magnitude": self.magnitude}


@dataclass(frozen=True, eq=False)
class ShiftedSparse:
    """Mean-shifted route: uniform s-sparse prior at magnitude b together
    with the constant shift b*1_p.

    Testing the shifted pair reduces to detecting the complementary
    (p-s)-sparse support, so the risk bound combines the total-variation
    cost of the shift with the complement prior's divergence.
    """

    p: int
    s: int
    magnitude: float

    def __post_init__(self):
        if not (1 <= self.s < self.p):
            raise ContractError("need 1 <= s < p for the shifted route")

    @property
    def base(self) -> UniformSparse:
        return UniformSparse(self.p, self.s, self.magnitude)

    @property
    def complement(self) -> UniformSparse:
        return UniformSparse(self.p, self.p - self.s, self.magnitude)

    def descriptor(self) -> dict:
        return {"prior": "shifted_sparse", "p": self.p, "s": self.s,
                "magnitude": self.magnitude}


PriorSpec = Union[PointMass, UniformSparse, SingleGroupSparse, GroupSupported,
                  ShiftedSparse]


def draw(prior: PriorSpec, rng: np.random.Generator, v=None) -> np.ndarray:
    """One signal vector distributed according to the prior."""
    if isinstance(prior, PointMass):
        return prior.theta.copy()
    if isinstance(prior, UniformSparse):
        pool = prior.universe if prior.universe is not None else np.arange(prior.p)
        idx = rng.choice(pool, size=prior.s, replace=False)
        theta = np.zeros(prior.p)
        if prior.signs == "match_pattern":
            if v is None:
                raise ContractError("sign matching needs the pattern v")
            v = np.asarray(v, dtype=float)
            theta[idx] = prior.magnitude * np.where(v[idx] < 0, -1.0, 1.0)
        elif prior.signs == "rademacher":
            theta[idx] = prior.magnitude * rng.choice([-1.0, 1.0], size=prior.s)
        else:
            theta[idx] = prior.magnitude
        return theta
    if isinstance(prior, SingleGroupSparse):
        bs = prior.p // prior.R
        k = int(rng.integers(prior.R))
        inside = rng.choice(bs, size=prior.s, replace=False)
        theta = np.zeros(prior.p)
        theta[k * bs + inside] = prior.magnitude
        return theta
    if isinstance(prior, GroupSupported):
        bs = prior.p // prior.R
        groups = rng.choice(prior.R, size=prior.m, replace=False)
        theta = np.zeros(prior.p)
        for k in groups:
            theta[k * bs:(k + 1) * bs] = prior.magnitude
        return theta
    if isinstance(prior, ShiftedSparse):
        return draw(prior.base, rng)
    raise ContractError(f"unknown prior {type(prior)!r}")


@dataclass(frozen=True)
class DivergenceResult:
    """IS-value of the chi-square divergence with its induced bounds.

    tv_bound = sqrt(chi_sq)/2 and risk_bound = max(0, 1 - tv_bound); any
    test's type I + worst type II is at least risk_bound.
    """

    chi_sq: float
    method: str
    tv_bound: float
    risk_bound: float
    stderr: Optional[float] = None
    warnings: tuple = ()

    @staticmethod
    def from_chi_sq(chi_sq: float, method: str, stderr=None, warnings=()) -> "DivergenceResult":
        tv = 0.5 * math.sqrt(max(chi_sq, 0.0))
        return DivergenceResult(chi_sq=chi_sq, method=method, tv_bound=tv,
                                risk_bound=min(1.0, max(0.0, 1.0 - tv)),
                                stderr=stderr, warnings=tuple(warnings))

    def descriptor(self) -> dict:
        return {"chi_sq": self.chi_sq, "method": self.method,
                "tv_bound": self.tv_bound, "risk_bound": self.risk_bound,
                "stderr": self.stderr, "warnings": list(self.warnings)}


# ---------------------------------------------------------------------------
# hypergeometric machinery


def hypergeometric_logpmf(population: int, draw1: int, draw2: int) -> tuple:
    """Support and log-pmf of the overlap of two uniform subsets.

    |S| = draw1 and |S~| = draw2 drawn uniformly from a population; the
    overlap count k ranges over [max(0, d1+d2-population), min(d1, d2)].
    """
    lo = max(0, draw1 + draw2 - population)
    hi = min(draw1, draw2)
    ks = np.arange(lo, hi + 1)

    def logc(n, r):
        return gammaln(n + 1) - gammaln(r + 1) - gammaln(n - r + 1)

    logpmf = (logc(draw2, ks) + logc(population - draw2, draw1 - ks)
              - logc(population, draw1))
    return ks, logpmf


def hypergeometric_mgf_bound(p: int, s: int, lam_sq: float) -> dict:
    """Exact MGF of the support overlap and its closed-form majorant.

    For Y the overlap of two uniform size-s subsets of [p]:
    E[Y] = s^2/p and E[exp(lam_sq Y)] <= (1 - s/p + (s/p) e^{lam_sq})^s.
    """
    if not (0 <= s <= p) or p < 1:
        raise ContractError("need 0 <= s <= p")
    if lam_sq < 0:
        raise DomainError("lam_sq must be nonnegative")
    if s == 0:
        return {"exact": 1.0, "bound": 1.0, "mean": 0.0}
    ks, logpmf = hypergeometric_logpmf(p, s, s)
    exact = float(np.exp(logsumexp(logpmf + lam_sq * ks)))
    bound = float((1.0 - s / p + (s / p) * math.exp(lam_sq)) ** s)
    mean = s * s / p
    return {"exact": exact, "bound": bound, "mean": mean}


def _overlap_expectation(population: int, size1: int, size2: int,
                         lam: float, const: float) -> float:
    """E[exp(lam * overlap + const)] over the overlap distribution."""
    ks, logpmf = hypergeometric_logpmf(population, size1, size2)
    return float(np.exp(logsumexp(logpmf + lam * ks + const)))


# ---------------------------------------------------------------------------
# quadratic forms


def _span_quadratic(model: CorrelationModel, theta: np.ndarray,
                    theta2: np.ndarray) -> float:
    """<theta, Sigma^-1 theta2>, extended continuously to gamma = 1 for
    vectors in the span of the correlation direction(s)."""
    g = model.gamma
    if g < 1.0:
        return float(theta @ precision_apply(model, theta2))
    # gamma = 1: only the projected component survives; both vectors must lie
    # in the span for the divergence to be finite.
    if isinstance(model, Equicorrelated):
        pattern = np.ones(model.p)
        spans = [pattern]
        scale = [model.p]
    elif isinstance(model, RankOne):
        spans = [model.v]
        scale = [model.p]
    else:
        bs = model.block_size
        spans, scale = [], []
        for k in range(model.R):
            ind = np.zeros(model.p)
            ind[model._order[k * bs:(k + 1) * bs]] = 1.0
            spans.append(ind)
            scale.append(bs)
    total = 0.0
    proj1 = np.zeros_like(theta)
    proj2 = np.zeros_like(theta2)
    for u, sc in zip(spans, scale):
        c1 = float(theta @ u) / sc
        c2 = float(theta2 @ u) / sc
        proj1 += c1 * u
        proj2 += c2 * u
        # reduced statistic along u has mean c * ||u|| and variance ||u||^2,
        # so the pair quadratic contributes c1 * c2
        total += c1 * c2
    tol = 1e-9 * (1.0 + float(theta @ theta) + float(theta2 @ theta2))
    if (np.abs(theta - proj1).max(initial=0.0) ** 2 > tol
            or np.abs(theta2 - proj2).max(initial=0.0) ** 2 > tol):
        raise SingularCovarianceError(
            "gamma = 1 divergence is finite only for priors supported in the "
            "span of the correlation direction(s)")
    return total


def _uniform_sparse_overlap_terms(prior: UniformSparse, model: CorrelationModel):
    """(population, lam, const) when the quadratic form is overlap-only."""
    a = prior.magnitude
    g = model.gamma
    if g >= 1.0:
        raise SingularCovarianceError("overlap sums need gamma < 1")
    if prior.signs == "rademacher":
        return None  # the signed inner product is not a function of overlap
    one_minus = 1.0 - g
    if isinstance(model, Equicorrelated):
        coef = g / (one_minus * (one_minus + g * model.p))
        lam = a * a / one_minus
        const = -coef * (a * prior.s) ** 2
        return prior.population, lam, const
    if isinstance(model, RankOne):
        v = model.v
        if prior.universe is not None and np.all(v[prior.universe] == 0.0):
            # support never meets the pattern: the cross term vanishes exactly
            return prior.population, a * a / one_minus, 0.0
        pattern_vals = np.abs(v) if prior.signs == "match_pattern" else v
        uni = prior.universe if prior.universe is not None else np.arange(prior.p)
        vals = np.unique(np.round(pattern_vals[uni], 12))
        if vals.size == 1:
            # |v| constant on the universe: <theta, v> = a * s * vals[0] for
            # sign-matched draws (or a * s * v0 for plus signs): overlap-only
            coef = g / (one_minus * (one_minus + g * model.p))
            lam = a * a / one_minus
            const = -coef * (a * prior.s * vals[0]) ** 2
            return prior.population, lam, const
        return None
    return None  # grouped spread priors are not overlap-only


def ingster_suslina_chisq(prior: PriorSpec, model: CorrelationModel,
                          method: str = "auto", n_mc: int = 200_000,
                          rng: Optional[np.random.Generator] = None,
                          v=None) -> DivergenceResult:
    """IS-value of chi2(P_prior || P_0) by the requested route.

    method: "auto", "closed_form" (point masses), "hypergeometric_sum",
    "exact_enumeration", or "monte_carlo".
    """
    if isinstance(prior, ShiftedSparse):
        raise ContractError("shifted priors are consumed by risk_lower_bound")
    if isinstance(prior, PointMass):
        q = _span_quadratic(model, prior.theta, prior.theta)
        return DivergenceResult.from_chi_sq(math.expm1(q), "closed_form")
    if method == "closed_form":
        raise ContractError("closed_form applies to point masses only")
    if model.gamma >= 1.0 and method != "monte_carlo":
        # group-supported priors live in the span: reduce exactly
        if isinstance(prior, GroupSupported) and isinstance(model, Grouped):
            bs = model.block_size
            lam = prior.magnitude ** 2 * bs  # reduced pair inner product per shared group
            chi = _overlap_expectation(model.R, prior.m, prior.m, lam, 0.0) - 1.0
            return DivergenceResult.from_chi_sq(chi, "hypergeometric_sum")
        raise SingularCovarianceError(
            "gamma = 1 divergences need span-supported priors or monte_carlo")

    if method in ("auto", "hypergeometric_sum"):
        result = _try_overlap_sum(prior, model)
        if result is not None:
            return result
        if method == "hypergeometric_sum":
            raise ContractError(
                "the pair inner product is not a function of the support "
                "overlap here; use exact_enumeration or monte_carlo")
    if method in ("auto", "exact_enumeration"):
        result = _enumerate_pairs(prior, model, v)
        if result is not None:
            return result
        if method == "exact_enumeration":
            raise ContractError(
                f"enumeration exceeds the {ENUMERATION_PAIR_BUDGET} pair budget")
    if rng is None:
        raise ContractError("monte_carlo needs an rng")
    return _monte_carlo_chisq(prior, model, n_mc, rng, v)


def _try_overlap_sum(prior, model) -> Optional[DivergenceResult]:
    if isinstance(prior, UniformSparse):
        terms = _uniform_sparse_overlap_terms(prior, model)
        if terms is None:
            return None
        population, lam, const = terms
        chi = _overlap_expectation(population, prior.s, prior.s, lam, const) - 1.0
        return DivergenceResult.from_chi_sq(chi, "hypergeometric_sum")
    if isinstance(prior, SingleGroupSparse) and isinstance(model, Grouped):
        if model.R != prior.R:
            raise ContractError("prior and model group counts differ")
        a, g, bs = prior.magnitude, model.gamma, model.block_size
        one_minus = 1.0 - g
        coef = g / (one_minus * (one_minus + g * bs))
        lam = a * a / one_minus
        const = -coef * (a * prior.s) ** 2
        same = _overlap_expectation(bs, prior.s, prior.s, lam, const)
        chi = (1.0 - 1.0 / prior.R) + same / prior.R - 1.0
        return DivergenceResult.from_chi_sq(chi, "hypergeometric_sum")
    if isinstance(prior, GroupSupported) and isinstance(model, Grouped):
        if model.R != prior.R:
            raise ContractError("prior and model group counts differ")
        a, g, bs = prior.magnitude, model.gamma, model.block_size
        # whole-group blocks: the centered part vanishes, only group means
        # contribute: <1_B, Sigma^-1 1_B'> = bs / (1-g+g bs) per shared group
        lam = a * a * bs / (1.0 - g + g * bs)
        chi = _overlap_expectation(model.R, prior.m, prior.m, lam, 0.0) - 1.0
        return DivergenceResult.from_chi_sq(chi, "hypergeometric_sum")
    return None


def _support_iter(prior, model):
    """Iterate (support, signed values) configurations with probabilities."""
    if isinstance(prior, UniformSparse):
        pool = prior.universe if prior.universe is not None else np.arange(prior.p)
        supports = list(combinations(pool.tolist(), prior.s))
        return supports
    if isinstance(prior, SingleGroupSparse):
        bs = prior.p // prior.R
        out = []
        for k in range(prior.R):
            for S in combinations(range(bs), prior.s):
                out.append(tuple(k * bs + np.asarray(S)))
        return out
    if isinstance(prior, GroupSupported):
        bs = prior.p // prior.R
        out = []
        for groups in combinations(range(prior.R), prior.m):
            idx = np.concatenate([np.arange(k * bs, (k + 1) * bs) for k in groups])
            out.append(tuple(idx))
        return out
    raise ContractError(f"enumeration does not support {type(prior)!r}")


def _enumerate_pairs(prior, model, v) -> Optional[DivergenceResult]:
    if isinstance(prior, UniformSparse) and prior.signs == "rademacher":
        return None  # sign configurations are not enumerated; use monte_carlo
    supports = _support_iter(prior, model)
    n = len(supports)
    exchangeable = (isinstance(prior, UniformSparse) and prior.signs == "plus"
                    and isinstance(model, Equicorrelated))
    full = n * n <= ENUMERATION_PAIR_BUDGET
    if not full and not (exchangeable and n <= ENUMERATION_PAIR_BUDGET):
        return None
    idx = np.asarray(supports, dtype=np.intp)
    thetas = np.zeros((n, prior.p))
    rows = np.arange(n)[:, None]
    if isinstance(prior, UniformSparse) and prior.signs == "match_pattern":
        if v is None:
            raise ContractError("sign matching needs the pattern v")
        vv = np.asarray(v, dtype=float)
        thetas[rows, idx] = prior.magnitude * np.where(vv[idx] < 0, -1.0, 1.0)
    else:
        thetas[rows, idx] = prior.magnitude
    if full:
        gram = thetas @ precision_apply(model, thetas).T
        chi = float(np.exp(logsumexp(gram) - 2.0 * math.log(n))) - 1.0
        return DivergenceResult.from_chi_sq(chi, "exact_enumeration")
    # exchangeability: fix the first support, average over the other
    logs = thetas @ precision_apply(model, thetas[0])
    chi = float(np.exp(logsumexp(logs) - math.log(n))) - 1.0
    return DivergenceResult.from_chi_sq(chi, "exact_enumeration")


def _monte_carlo_chisq(prior, model, n_mc, rng, v) -> DivergenceResult:
    if model.gamma >= 1.0:
        raise SingularCovarianceError("monte_carlo divergence needs gamma < 1")
    logs = np.empty(n_mc)
    for i in range(n_mc):
        th1 = draw(prior, rng, v=v)
        th2 = draw(prior, rng, v=v)
        logs[i] = float(th1 @ precision_apply(model, th2))
    terms = np.exp(logs - logs.max())
    total = float(terms.sum())
    mean = float(np.exp(logs.max()) * total / n_mc)
    sd = float(np.exp(logs.max()) * terms.std(ddof=1))
    stderr = sd / math.sqrt(n_mc)
    warnings = []
    top = max(1, int(0.001 * n_mc))
    share = float(np.sort(terms)[-top:].sum()) / total
    if share > 0.5:
        warnings.append(
            f"heavy tails: top 0.1% of exp terms carry {share:.0%} of the sum; "
            "the estimate may be unstable")
    return DivergenceResult.from_chi_sq(mean - 1.0, "monte_carlo",
                                        stderr=stderr, warnings=warnings)


def mean_shift_tv(model: Equicorrelated, m: float) -> float:
    """Total-variation bound for the constant shift m*1_p:
    sqrt(exp(p m^2 / (1-g+gp)) - 1) / 2."""
    if not isinstance(model, Equicorrelated):
        raise ContractError("mean_shift_tv is defined for the equicorrelated model")
    if model.gamma >= 1.0:
        raise SingularCovarianceError("needs gamma < 1")
    g, p = model.gamma, model.p
    return 0.5 * math.sqrt(math.expm1(p * m * m / (1.0 - g + g * p)))


def risk_lower_bound(prior: PriorSpec, model: CorrelationModel,
                     method: str = "auto", n_mc: int = 200_000,
                     rng: Optional[np.random.Generator] = None,
                     v=None) -> float:
    """Best available lower bound on minimax testing risk from this prior.

    Plain priors: 1 - sqrt(chi2)/2.  Shifted sparse priors follow the
    triangle route: 1 - TV(shift) - sqrt(chi2(complement prior))/2.
    All bounds are clamped to [0, 1].
    """
    if isinstance(prior, ShiftedSparse):
        if not isinstance(model, Equicorrelated):
            raise ContractError("the shifted route is defined for the equicorrelated model")
        shift_tv = mean_shift_tv(model, prior.magnitude)
        comp = ingster_suslina_chisq(prior.complement, model, method=method,
                                     n_mc=n_mc, rng=rng, v=v)
        return min(1.0, max(0.0, 1.0 - shift_tv - comp.tv_bound))
    res = ingster_suslina_chisq(prior, model, method=method, n_mc=n_mc, rng=rng, v=v)
    return res.risk_bound
