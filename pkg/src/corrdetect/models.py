"""Observation models: equicorrelated, grouped random effects, rank-one.

All three noise laws share the additive structure

    X = theta + sqrt(gamma) * (shared factor) + sqrt(1 - gamma) * Z,

where the shared factor is a single Gaussian times the all-ones vector, one
Gaussian per group on its block indicator, or a single Gaussian times a fixed
pattern ``v`` with ||v||^2 = p.  Samplers always use this representation (cost
O(p) per draw, exact at gamma = 1), never a covariance factorization.

Covariance and precision act in closed form through Sherman-Morrison:

    ((1-g) I + g v v')^-1 = (1-g)^-1 (I - v v'/p) + (1-g+gp)^-1 v v'/p,

and blockwise analogues for the grouped model, so no p x p matrix is ever
materialized.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np

from .errors import ContractError, SingularCovarianceError, UnsupportedRegimeError

__all__ = [
    "Equicorrelated",
    "Grouped",
    "RankOne",
    "CorrelationModel",
    "Observation",
    "sample",
    "decorrelate",
    "precision_apply",
    "covariance_apply",
]


def _check_gamma(gamma: float) -> None:
    if not (np.isfinite(gamma) and 0.0 <= gamma <= 1.0):
        raise ContractError(f"gamma must lie in [0, 1], got {gamma}")


@dataclass(frozen=True, eq=False)
class Equicorrelated:
    """Covariance (1-gamma) I_p + gamma 1 1'."""

    p: int
    gamma: float

    def __post_init__(self):
        if self.p < 1:
            raise ContractError("p must be >= 1")
        _check_gamma(self.gamma)

    @property
    def R(self) -> int:
        return 1

    def descriptor(self) -> dict:
        return {"family": "equicorrelated", "p": self.p, "gamma": self.gamma}


@dataclass(frozen=True, eq=False)
class Grouped:
    """R equally sized groups, equicorrelated within, independent across.

    ``labels`` maps coordinate -> group label in [0, R).  Blocks are
    canonicalized to contiguous runs internally (group choice is immaterial
    up to a coordinate permutation); all outputs stay in the original layout.
    """

    p: int
    R: int
    gamma: float
    labels: Optional[np.ndarray] = None
    _order: np.ndarray = field(init=False, repr=False)
    _contiguous: bool = field(init=False, repr=False)

    def __post_init__(self):
        if self.p < 1:
            raise ContractError("p must be >= 1")
        if self.R < 1 or self.p % self.R != 0:
            raise ContractError(f"R must divide p, got R={self.R}, p={self.p}")
        _check_gamma(self.gamma)
        if self.labels is None:
            labels = np.repeat(np.arange(self.R), self.p // self.R)
        else:
            labels = np.asarray(self.labels, dtype=np.intp)
            if labels.shape != (self.p,):
                raise ContractError("labels must have length p")
            counts = np.bincount(labels, minlength=self.R)
            if labels.min() < 0 or labels.max() >= self.R or counts.size != self.R:
                raise ContractError("labels must cover exactly the range [0, R)")
            if not np.all(counts == self.p // self.R):
                raise ContractError("every group must have exactly p/R members")
        object.__setattr__(self, "labels", labels)
        order = np.argsort(labels, kind="stable")
        object.__setattr__(self, "_order", order)
        object.__setattr__(self, "_contiguous", bool(np.all(order == np.arange(self.p))))

    @property
    def block_size(self) -> int:
        return self.p // self.R

    def block_view(self, x: np.ndarray) -> np.ndarray:
        """Reshape ``x`` (last axis p) into (..., R, p/R) canonical blocks."""
        x = np.asarray(x, dtype=float)
        if self._contiguous:
            return x.reshape(x.shape[:-1] + (self.R, self.block_size))
        return x[..., self._order].reshape(x.shape[:-1] + (self.R, self.block_size))

    def scatter_blocks(self, blocks: np.ndarray) -> np.ndarray:
        """Inverse of :meth:`block_view`, restoring the original layout."""
        flat = blocks.reshape(blocks.shape[:-2] + (self.p,))
        if self._contiguous:
            return flat
        out = np.empty_like(flat)
        out[..., self._order] = flat
        return out

    def descriptor(self) -> dict:
        d = {"family": "grouped", "p": self.p, "R": self.R, "gamma": self.gamma}
        if not self._contiguous:
            d["labels"] = self.labels.tolist()
        return d


@dataclass(frozen=True, eq=False)
class RankOne:
    """Covariance (1-gamma) I_p + gamma v v' with ||v||^2 = p."""

    p: int
    gamma: float
    v: np.ndarray

    def __post_init__(self):
        if self.p < 1:
            raise ContractError("p must be >= 1")
        _check_gamma(self.gamma)
        v = np.ascontiguousarray(np.asarray(self.v, dtype=float))
        if v.shape != (self.p,):
            raise ContractError("v must have length p")
        nsq = float(v @ v)
        if abs(nsq - self.p) > 1e-9 * self.p:
            raise ContractError(
                f"||v||^2 must equal p (got {nsq} vs {self.p}); "
                "use RankOne.renormalized to rescale"
            )
        v.setflags(write=False)
        object.__setattr__(self, "v", v)

    @classmethod
    def renormalized(cls, p: int, gamma: float, v) -> "RankOne":
        """Construct after rescaling ``v`` so that ||v||^2 = p exactly."""
        v = np.asarray(v, dtype=float)
        nsq = float(v @ v)
        if nsq <= 0:
            raise ContractError("v must be nonzero")
        return cls(p, gamma, v * math.sqrt(p / nsq))

    def descriptor(self) -> dict:
        return {"family": "rank_one", "p": self.p, "gamma": self.gamma, "v": self.v.tolist()}


CorrelationModel = Union[Equicorrelated, Grouped, RankOne]


@dataclass(frozen=True, eq=False)
class Observation:
    """A data vector (or batch of vectors) with its generating model."""

    x: np.ndarray
    model: CorrelationModel
    provenance: Optional[str] = None

    def __post_init__(self):
        x = np.asarray(self.x, dtype=float)
        if x.shape[-1] != self.model.p:
            raise ContractError("observation length does not match model dimension")
        object.__setattr__(self, "x", x)


def sample(model: CorrelationModel, theta, rng: np.random.Generator,
           size: Optional[int] = None, provenance: Optional[str] = None) -> Observation:
    """Draw from the model via its additive random-effect representation.

    ``theta`` may be None (the null).  With ``size`` given, returns a batch of
    shape (size, p).  The shared factor(s) are drawn before the idiosyncratic
    noise, so a fixed stream reproduces bit-identical observations.
    """
    p = model.p
    if theta is None:
        theta = 0.0
    else:
        theta = np.asarray(theta, dtype=float)
        if theta.shape != (p,):
            raise ContractError("theta length must equal model dimension p")
    shape = (p,) if size is None else (size, p)
    sg = math.sqrt(model.gamma)
    sn = math.sqrt(1.0 - model.gamma)
    if isinstance(model, Equicorrelated):
        w = rng.standard_normal(shape[:-1] + (1,))
        z = rng.standard_normal(shape)
        x = theta + sg * w + sn * z
    elif isinstance(model, Grouped):
        w = rng.standard_normal(shape[:-1] + (model.R,))
        z = rng.standard_normal(shape)
        x = theta + sg * w[..., model.labels] + sn * z
    elif isinstance(model, RankOne):
        w = rng.standard_normal(shape[:-1] + (1,))
        z = rng.standard_normal(shape)
        x = theta + sg * w * model.v + sn * z
    else:
        raise ContractError(f"unknown model type {type(model)!r}")
    return Observation(x=x, model=model, provenance=provenance)


def _as_array(x) -> np.ndarray:
    if isinstance(x, Observation):
        return x.x
    return np.asarray(x, dtype=float)


def decorrelate(model: CorrelationModel, x, rng: np.random.Generator) -> np.ndarray:
    """Transform data to an identity-covariance Gaussian vector.

    The correlated direction(s) are projected out, the remainder rescaled by
    1/sqrt(1-gamma), and a fresh independent Gaussian is injected along each
    removed direction.  The output mean is the centered signal
    (theta minus its projection on the correlation direction(s)) over
    sqrt(1-gamma); the output covariance is the identity.

    Requires gamma < 1; the perfectly correlated case has its own noiseless
    test path.
    """
    if model.gamma >= 1.0:
        raise UnsupportedRegimeError("decorrelate requires gamma < 1 (use the noiseless path)")
    x = _as_array(x)
    if x.shape[-1] != model.p:
        raise ContractError("data length does not match model dimension")
    inv = 1.0 / math.sqrt(1.0 - model.gamma)
    if isinstance(model, RankOne):
        v = model.v
        coef = (x @ v) / model.p
        xi = rng.standard_normal(x.shape[:-1] + (1,)) if x.ndim > 1 else rng.standard_normal()
        resid = (x - np.multiply.outer(coef, v).reshape(x.shape)) * inv
        return resid + (xi / math.sqrt(model.p)) * v
    if isinstance(model, Equicorrelated):
        model_blocks = Grouped(model.p, 1, model.gamma)
    else:
        model_blocks = model
    blocks = model_blocks.block_view(x)
    bs = model_blocks.block_size
    if x.ndim == 1:
        # exactly rounded block means: invariant under within-block ordering
        means = np.array([math.fsum(b.tolist()) / bs for b in blocks])
    else:
        b0 = blocks[..., :1]
        means = (b0 + (blocks - b0).mean(axis=-1, keepdims=True))[..., 0]
    xi = rng.standard_normal(means.shape)
    out_blocks = (blocks - means[..., None]) * inv + (xi[..., None] / math.sqrt(bs))
    return model_blocks.scatter_blocks(out_blocks)


def precision_apply(model: CorrelationModel, u) -> np.ndarray:
    """Apply the inverse covariance to ``u`` in O(p) via closed-form inverses."""
    if model.gamma >= 1.0:
        raise SingularCovarianceError("covariance is singular at gamma = 1")
    u = np.asarray(u, dtype=float)
    if u.shape[-1] != model.p:
        raise ContractError("vector length does not match model dimension")
    g = model.gamma
    one_minus = 1.0 - g
    if isinstance(model, Equicorrelated):
        coef = g / (one_minus * (one_minus + g * model.p))
        return u / one_minus - coef * u.sum(axis=-1, keepdims=True)
    if isinstance(model, RankOne):
        coef = g / (one_minus * (one_minus + g * model.p))
        proj = (u @ model.v)
        return u / one_minus - coef * np.multiply.outer(proj, model.v).reshape(u.shape)
    blocks = model.block_view(u)
    coef = g / (one_minus * (one_minus + g * model.block_size))
    out = blocks / one_minus - coef * blocks.sum(axis=-1, keepdims=True)
    return model.scatter_blocks(out)


def covariance_apply(model: CorrelationModel, u) -> np.ndarray:
    """Apply the covariance to ``u`` in O(p) (valid for every gamma)."""
    u = np.asarray(u, dtype=float)
    if u.shape[-1] != model.p:
        raise ContractError("vector length does not match model dimension")
    g = model.gamma
    if isinstance(model, Equicorrelated):
        return (1.0 - g) * u + g * u.sum(axis=-1, keepdims=True)
    if isinstance(model, RankOne):
        proj = u @ model.v
        return (1.0 - g) * u + g * np.multiply.outer(proj, model.v).reshape(u.shape)
    blocks = model.block_view(u)
    out = (1.0 - g) * blocks + g * blocks.sum(axis=-1, keepdims=True)
    return model.scatter_blocks(out)
