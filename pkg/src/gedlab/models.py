"""Conditional density classes and the statistical functionals evaluated on them."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.integrate import trapezoid
from scipy.special import expit, gammaln

from gedlab.divergence import (
    DiscreteDist,
    DivergenceKind,
    DivergenceSpec,
    DomainError,
    GaussianDist,
    GridDensity,
    divergence,
    hellinger_sq_table,
    tv_table,
)


class UnsupportedClassError(ValueError):
    """A functional was requested on a family it is not defined for."""


# ---------------------------------------------------------------------------
# features
# ---------------------------------------------------------------------------


class FeatureMap:
    """phi(x, a) in R^d, projected into the unit ball.

    Either wrap a callable or a dense table indexed ``table[x, a]``.  Rows with
    norm above one are rescaled onto the sphere.
    """

    def __init__(self, dim: int, fn: Callable | None = None, table: np.ndarray | None = None):
        if dim < 1:
            raise DomainError("feature dimension must be positive")
        if (fn is None) == (table is None):
            raise ValueError("give exactly one of fn or table")
        self.dim = int(dim)
        self._fn = fn
        self.table = None
        if table is not None:
            t = np.asarray(table, float)
            if t.shape[-1] != dim:
                raise DomainError("table's last axis must equal dim")
            norms = np.linalg.norm(t, axis=-1, keepdims=True)
            self.table = t / np.maximum(norms, 1.0)

    def __call__(self, x, a) -> np.ndarray:
        if self.table is not None:
            return self.table[x, a]
        v = np.asarray(self._fn(x, a), float)
        n = np.linalg.norm(v)
        return v / n if n > 1.0 else v

    def all_actions(self, x, n_actions: int) -> np.ndarray:
        if self.table is not None:
            return self.table[x]
        return np.stack([self(x, a) for a in range(n_actions)])


# ---------------------------------------------------------------------------
# functionals
# ---------------------------------------------------------------------------


class FunctionalKind(str, enum.Enum):
    MEAN = "mean"
    NEG_MEAN = "neg_mean"
    VARIANCE = "variance"
    DIRAC_VALUE = "dirac_value"


@dataclass(frozen=True)
class Functional:
    kind: FunctionalKind
    lipschitz: float
    divergence: DivergenceSpec
    value_range: tuple = (0.0, 1.0)

    def __post_init__(self):
        object.__setattr__(self, "kind", FunctionalKind(self.kind))
        if not self.lipschitz > 0:
            raise DomainError("Lipschitz constant must be positive")

    @classmethod
    def mean(cls, divergence: DivergenceSpec | None = None) -> "Functional":
        divergence = divergence or DivergenceSpec.hellinger()
        return cls(FunctionalKind.MEAN, _mean_lipschitz(divergence), divergence)

    @classmethod
    def neg_mean(cls, divergence: DivergenceSpec | None = None) -> "Functional":
        divergence = divergence or DivergenceSpec.hellinger()
        return cls(FunctionalKind.NEG_MEAN, _mean_lipschitz(divergence), divergence)

    @classmethod
    def variance(cls, support_width: float = 1.0) -> "Functional":
        return cls(FunctionalKind.VARIANCE, 3.0 * support_width**2, DivergenceSpec.tv())

    @classmethod
    def dirac_value(cls) -> "Functional":
        return cls(FunctionalKind.DIRAC_VALUE, 1.0, DivergenceSpec.tv())

    def to_dict(self) -> dict:
        return {"kind": self.kind.value, "lipschitz": self.lipschitz, "divergence": self.divergence.to_dict()}

    @classmethod
    def from_dict(cls, d: dict) -> "Functional":
        return cls(FunctionalKind(d["kind"]), float(d["lipschitz"]), DivergenceSpec.from_dict(d["divergence"]))


def _mean_lipschitz(spec: DivergenceSpec) -> float:
    # outcomes in [0, 1]: |dMean| <= TV <= sqrt(2) * Hellinger; L2 on unit grid via Cauchy-Schwarz
    return {
        DivergenceKind.TV: 1.0,
        DivergenceKind.HELLINGER: math.sqrt(2.0),
        DivergenceKind.L2: 1.0 / math.sqrt(3.0),
    }.get(spec.kind, 2.0)


def _moments(dist) -> tuple[float, float]:
    if isinstance(dist, DiscreteDist):
        m = float(np.dot(dist.probs, dist.support))
        return m, float(np.dot(dist.probs, dist.support**2))
    if isinstance(dist, GridDensity):
        m = float(trapezoid(dist.grid * dist.values, dist.grid))
        return m, float(trapezoid(dist.grid**2 * dist.values, dist.grid))
    if isinstance(dist, GaussianDist):
        return dist.mean, dist.mean**2 + dist.sigma**2
    if isinstance(dist, ExpFamilyDist):
        return dist.family.mean(dist.eta), dist.family.second_moment(dist.eta)
    raise UnsupportedClassError(f"no moments for {type(dist).__name__}")


def functional_eval(T: Functional, dist) -> float:
    kind = T.kind
    if kind is FunctionalKind.DIRAC_VALUE:
        if isinstance(dist, DiscreteDist):
            atoms = dist.support[dist.probs > 0]
            if atoms.size == 1:
                return float(atoms[0])
        raise UnsupportedClassError("DiracValue needs a point-mass distribution")
    if kind is FunctionalKind.VARIANCE and isinstance(dist, (GaussianDist, ExpFamilyDist)):
        if not (isinstance(dist, ExpFamilyDist) and dist.family.bounded):
            raise UnsupportedClassError("Variance needs a bounded support")
    m1, m2 = _moments(dist)
    if kind is FunctionalKind.MEAN:
        return m1
    if kind is FunctionalKind.NEG_MEAN:
        return 1.0 - m1
    return max(m2 - m1 * m1, 0.0)


def functional_lipschitz(T: Functional, pairs: Sequence[tuple]) -> float:
    """Largest observed ``|T(f) - T(g)| / D(f, g)`` over ``pairs``.

    A pair with zero divergence but different functional values yields ``inf``.
    """
    worst = 0.0
    for f, g in pairs:
        dT = abs(functional_eval(T, f) - functional_eval(T, g))
        d = divergence(T.divergence, f, g)
        if d > 0:
            worst = max(worst, dT / d)
        elif dT > 1e-12:
            return math.inf
    return worst


# ---------------------------------------------------------------------------
# exponential families (scalar natural parameter)
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ExpFamily:
    """``h(y) exp(eta * T(y) - A(eta))`` with T(y) = y."""

    name: str
    A: Callable
    grad_A: Callable
    hess_A: Callable
    log_h: Callable
    sampler: Callable
    bounded: bool = False
    discrete: bool = False

    def mean(self, eta):
        return self.grad_A(eta)

    def second_moment(self, eta):
        return self.hess_A(eta) + self.grad_A(eta) ** 2

    def curvature_bounds(self, eta_max: float) -> tuple[float, float]:
        etas = np.linspace(-eta_max, eta_max, 401)
        h = self.hess_A(etas)
        return float(np.min(h)), float(np.max(h))

    def hellinger_sq(self, eta1, eta2):
        """Exact: ``1 - exp(A((eta1 + eta2) / 2) - (A(eta1) + A(eta2)) / 2)``."""
        eta1, eta2 = np.asarray(eta1, float), np.asarray(eta2, float)
        e = self.A(0.5 * (eta1 + eta2)) - 0.5 * (self.A(eta1) + self.A(eta2))
        return np.clip(-np.expm1(e), 0.0, 1.0)


def _log1pexp(eta):
    return np.logaddexp(0.0, eta)


EXP_FAMILIES: dict[str, ExpFamily] = {
    "gaussian": ExpFamily(
        "gaussian",
        A=lambda e: 0.5 * np.asarray(e, float) ** 2,
        grad_A=lambda e: np.asarray(e, float),
        hess_A=lambda e: np.ones_like(np.asarray(e, float)),
        log_h=lambda y: -0.5 * np.asarray(y, float) ** 2 - 0.5 * math.log(2 * math.pi),
        sampler=lambda e, rng: float(e + rng.standard_normal()),
    ),
    "bernoulli": ExpFamily(
        "bernoulli",
        A=_log1pexp,
        grad_A=lambda e: expit(e),
        hess_A=lambda e: expit(e) * (1.0 - expit(e)),
        log_h=lambda y: np.zeros_like(np.asarray(y, float)),
        sampler=lambda e, rng: float(rng.random() < expit(e)),
        bounded=True,
        discrete=True,
    ),
    "poisson": ExpFamily(
        "poisson",
        A=lambda e: np.exp(e),
        grad_A=lambda e: np.exp(e),
        hess_A=lambda e: np.exp(e),
        log_h=lambda y: -gammaln(np.asarray(y, float) + 1.0),
        sampler=lambda e, rng: float(rng.poisson(math.exp(e))),
        discrete=True,
    ),
}


@dataclass(frozen=True)
class ExpFamilyDist:
    family: ExpFamily
    eta: float

    def logpdf(self, y):
        y = np.asarray(y, float)
        return self.family.log_h(y) + self.eta * y - self.family.A(self.eta)

    def pdf(self, y):
        return np.exp(self.logpdf(y))

    def sample(self, rng):
        return self.family.sampler(self.eta, rng)


# ---------------------------------------------------------------------------
# conditional models (one member of a class)
# ---------------------------------------------------------------------------


class TableModel:
    """Discrete conditional law tabulated as ``probs[x, a, k]`` over a shared support."""

    def __init__(self, probs: np.ndarray, support: np.ndarray | None = None):
        p = np.asarray(probs, float)
        if p.ndim != 3:
            raise DomainError("probs must be indexed [context, action, outcome]")
        if np.any(p < 0) or np.any(np.abs(p.sum(-1) - 1.0) > 1e-12):
            raise DomainError("each probs[x, a] must be a probability vector")
        self.probs = p
        self.support = np.arange(p.shape[-1], dtype=float) if support is None else np.asarray(support, float)
        if self.support.shape != (p.shape[-1],):
            raise DomainError("support length must match the outcome axis")

    @classmethod
    def bernoulli(cls, means) -> "TableModel":
        m = np.asarray(means, float)
        if np.any((m < 0) | (m > 1)):
            raise DomainError("Bernoulli means must lie in [0, 1]")
        return cls(np.stack([1.0 - m, m], axis=-1), np.array([0.0, 1.0]))

    @classmethod
    def dirac(cls, values) -> "TableModel":
        v = np.asarray(values, float)
        support = np.unique(v)
        probs = (v[..., None] == support).astype(float)
        return cls(probs, support)

    @property
    def n_contexts(self) -> int:
        return self.probs.shape[0]

    @property
    def n_actions(self) -> int:
        return self.probs.shape[1]

    def dist(self, x, a) -> DiscreteDist:
        return DiscreteDist(self.probs[x, a], self.support)

    def density(self, x, a, y) -> float:
        return self.dist(x, a).pmf(y)

    def sample(self, x, a, rng) -> float:
        return self.dist(x, a).sample(rng)

    def to_dict(self) -> dict:
        return {"type": "table", "probs": self.probs.tolist(), "support": self.support.tolist()}


def _feature_actions(features: FeatureMap) -> int:
    if features.table is None:
        raise UnsupportedClassError("action count is only known for table-backed feature maps")
    return features.table.shape[1]


class GaussianLinearModel:
    def __init__(self, theta, features: FeatureMap, sigma: float):
        self.theta = np.asarray(theta, float)
        self.features = features
        self.sigma = float(sigma)

    @property
    def n_actions(self) -> int:
        return _feature_actions(self.features)

    def dist(self, x, a) -> GaussianDist:
        return GaussianDist(float(self.features(x, a) @ self.theta), self.sigma)

    def density(self, x, a, y) -> float:
        return float(self.dist(x, a).pdf(y))

    def sample(self, x, a, rng) -> float:
        return self.dist(x, a).sample(rng)


class GridMixtureModel:
    """``f_{x,a} = theta^T phi_{x,a}`` with basis densities on a shared grid."""

    def __init__(self, theta, cls: "LinearMixtureClass"):
        self.theta = np.asarray(theta, float)
        self.cls = cls

    def dist(self, x, a) -> GridDensity:
        return GridDensity(self.cls.grid, self.theta @ self.cls.basis(x, a))

    def density(self, x, a, y) -> float:
        return float(self.dist(x, a).pdf(y))

    def sample(self, x, a, rng) -> float:
        return self.dist(x, a).sample(rng)


class ExpFamilyModel:
    def __init__(self, w, features: FeatureMap, family: ExpFamily):
        self.w = np.asarray(w, float)
        self.features = features
        self.family = family

    @property
    def n_actions(self) -> int:
        return _feature_actions(self.features)

    def eta(self, x, a) -> float:
        return float(self.features(x, a) @ self.w)

    def dist(self, x, a) -> ExpFamilyDist:
        return ExpFamilyDist(self.family, self.eta(x, a))

    def density(self, x, a, y) -> float:
        return float(self.dist(x, a).pdf(y))

    def sample(self, x, a, rng) -> float:
        return self.dist(x, a).sample(rng)


def density_eval(member, x, a, y) -> float:
    return member.density(x, a, y)


def sample(member, x, a, rng: np.random.Generator):
    return member.sample(x, a, rng)


# ---------------------------------------------------------------------------
# classes
# ---------------------------------------------------------------------------


class FiniteDensityClass:
    """A finite list of conditional models.

    When every member is a :class:`TableModel` over the same support the class
    keeps a stacked ``probs[m, x, a, k]`` array and all bulk queries are
    vectorized; otherwise they fall back to per-member loops.
    """

    def __init__(self, members: Sequence):
        if len(members) < 1:
            raise DomainError("a finite class needs at least one member")
        self.members = list(members)
        self.probs = None
        self.support = None
        if all(isinstance(m, TableModel) for m in self.members):
            shapes = {m.probs.shape for m in self.members}
            supports = {tuple(m.support) for m in self.members}
            if len(shapes) == 1 and len(supports) == 1:
                self.probs = np.stack([m.probs for m in self.members])
                self.support = self.members[0].support

    @classmethod
    def bernoulli(cls, means) -> "FiniteDensityClass":
        """``means[m, x, a]`` -> one Bernoulli table member per ``m``."""
        return cls([TableModel.bernoulli(m) for m in np.asarray(means, float)])

    def __len__(self) -> int:
        return len(self.members)

    def __getitem__(self, i):
        return self.members[i]

    @property
    def is_table(self) -> bool:
        return self.probs is not None

    @property
    def n_actions(self) -> int:
        return self.members[0].n_actions

    def functional_table(self, T: Functional) -> np.ndarray:
        """``[m, x, a]`` table of functional values (table classes only)."""
        if not self.is_table:
            raise UnsupportedClassError("functional_table needs a table class")
        s = self.support
        m1 = self.probs @ s
        if T.kind is FunctionalKind.MEAN:
            out = m1
        elif T.kind is FunctionalKind.NEG_MEAN:
            out = 1.0 - m1
        elif T.kind is FunctionalKind.VARIANCE:
            out = np.maximum(self.probs @ (s * s) - m1 * m1, 0.0)
        else:
            if np.any(np.count_nonzero(self.probs, axis=-1) != 1):
                raise UnsupportedClassError("DiracValue needs point-mass members")
            out = m1
        lo, hi = T.value_range
        if np.any(out < lo - 1e-12) or np.any(out > hi + 1e-12):
            raise DomainError("functional leaves its declared range on this class")
        return out

    def functional_matrix(self, T: Functional, x, members=None) -> np.ndarray:
        idx = range(len(self)) if members is None else members
        if self.is_table:
            return self.functional_table(T)[np.asarray(list(idx), int), x]
        K = self.n_actions
        return np.array([[functional_eval(T, self.members[m].dist(x, a)) for a in range(K)] for m in idx])

    def log_density(self, x, a, y) -> np.ndarray:
        """Log-density of ``y`` at ``(x, a)`` under every member (``-inf`` where zero)."""
        if self.is_table:
            hit = np.flatnonzero(self.support == y)
            if hit.size == 0:
                raise DomainError(f"outcome {y!r} outside the support")
            with np.errstate(divide="ignore"):
                return np.log(self.probs[:, x, a, hit[0]])
        out = np.empty(len(self))
        for i, m in enumerate(self.members):
            try:
                d = m.density(x, a, y)
            except DomainError:
                d = 0.0
            out[i] = math.log(d) if d > 0 else -math.inf
        return out

    def pairwise_sq(self, x, a, spec: DivergenceSpec | None = None) -> np.ndarray:
        """``[m, m']`` matrix of squared divergences at ``(x, a)``."""
        spec = spec or DivergenceSpec.hellinger()
        if self.is_table and spec.kind in (DivergenceKind.HELLINGER, DivergenceKind.HELLINGER_SQ, DivergenceKind.TV):
            p = self.probs[:, x, a]
            if spec.kind is DivergenceKind.TV:
                return tv_table(p[:, None], p[None, :]) ** 2
            d = hellinger_sq_table(p[:, None], p[None, :])
            return d if spec.kind is DivergenceKind.HELLINGER else d * d
        dists = [m.dist(x, a) for m in self.members]
        n = len(dists)
        out = np.zeros((n, n))
        for i in range(n):
            for j in range(i + 1, n):
                out[i, j] = out[j, i] = divergence(spec, dists[i], dists[j]) ** 2
        return out

    def to_dict(self) -> dict:
        return {"type": "finite", "members": [m.to_dict() for m in self.members]}


class LinearMixtureClass:
    """Mixtures ``theta^T phi_{x,a}`` of basis densities on a unit-measure grid.

    ``basis(x, a)`` returns a ``(d, n_grid)`` array; every row must be a
    density on ``grid``.
    """

    def __init__(self, basis: Callable, grid: np.ndarray, theta_bound: float = 1.0, basis_bound: float | None = None):
        self.basis = basis
        self.grid = np.asarray(grid, float)
        self.theta_bound = float(theta_bound)
        self.basis_bound = basis_bound

    def gram(self, x, a) -> np.ndarray:
        """Second-moment matrix ``int phi phi^T dy`` at ``(x, a)``."""
        phi = self.basis(x, a)
        return trapezoid(phi[:, None, :] * phi[None, :, :], self.grid, axis=-1)

    def check_basis(self, x, a) -> None:
        phi = self.basis(x, a)
        if np.any(phi < 0):
            raise DomainError("basis densities must be nonnegative")
        mass = trapezoid(phi, self.grid, axis=-1)
        if np.any(np.abs(mass - 1.0) > 1e-8):
            raise DomainError("each basis element must integrate to 1")

    def member(self, theta) -> GridMixtureModel:
        theta = np.asarray(theta, float)
        if np.linalg.norm(theta) > self.theta_bound + 1e-12:
            raise DomainError("theta exceeds the class radius")
        return GridMixtureModel(theta, self)

    def l2_sq(self, theta1, theta2, x, a) -> float:
        d = np.asarray(theta1, float) - np.asarray(theta2, float)
        return float(d @ self.gram(x, a) @ d)


@dataclass
class ThetaBox:
    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        self.lo = np.asarray(self.lo, float)
        self.hi = np.asarray(self.hi, float)
        if self.lo.shape != self.hi.shape or np.any(self.hi < self.lo):
            raise DomainError("box bounds must be ordered and equal-length")

    @property
    def dim(self) -> int:
        return self.lo.size

    @property
    def diameter(self) -> float:
        return float(np.linalg.norm(self.hi - self.lo))


class GaussianLinearClass:
    """``N(theta^T phi_{x,a}, sigma^2)`` with ``||theta|| <= 1``."""

    def __init__(
        self,
        features: FeatureMap,
        sigma: float,
        sigma_lo: float | None = None,
        sigma_hi: float | None = None,
        theta_set: Sequence | ThetaBox | None = None,
    ):
        self.features = features
        self.sigma = float(sigma)
        self.sigma_lo = self.sigma if sigma_lo is None else float(sigma_lo)
        self.sigma_hi = self.sigma if sigma_hi is None else float(sigma_hi)
        if not 0 < self.sigma_lo <= self.sigma <= self.sigma_hi:
            raise DomainError("need 0 < sigma_lo <= sigma <= sigma_hi")
        if theta_set is None:
            theta_set = ThetaBox(-np.ones(features.dim) / math.sqrt(features.dim), np.ones(features.dim) / math.sqrt(features.dim))
        if not isinstance(theta_set, ThetaBox):
            theta_set = np.atleast_2d(np.asarray(theta_set, float))
            if np.any(np.linalg.norm(theta_set, axis=1) > 1 + 1e-12):
                raise DomainError("every admitted theta needs ||theta|| <= 1")
        self.theta_set = theta_set

    @property
    def dim(self) -> int:
        return self.features.dim

    @property
    def divergence_lipschitz(self) -> float:
        """Hellinger is at most ``||dtheta|| / (2 sqrt(2) sigma)`` for unit features."""
        return 1.0 / (2.0 * math.sqrt(2.0) * self.sigma_lo)

    def member(self, theta) -> GaussianLinearModel:
        return GaussianLinearModel(theta, self.features, self.sigma)

    def means(self, thetas: np.ndarray, x, n_actions: int) -> np.ndarray:
        """``[n_theta, a]`` matrix of means at context ``x``."""
        return np.atleast_2d(thetas) @ self.features.all_actions(x, n_actions).T

    def hellinger_sq(self, theta1, theta2, x, a) -> float:
        z = float(self.features(x, a) @ (np.asarray(theta1) - np.asarray(theta2)))
        return -math.expm1(-z * z / (8 * self.sigma**2))


class ExpFamilyClass:
    """``h(y) exp(eta y - A(eta))`` with ``eta = w^T phi_{x,a}`` and ``||w|| <= beta``.

    The curvature bounds of ``A`` over the reachable range ``|eta| <= beta``
    are checked numerically at construction.
    """

    def __init__(
        self,
        features: FeatureMap,
        family: str | ExpFamily,
        coeff_bound: float,
        lambda_lo: float | None = None,
        lambda_hi: float | None = None,
    ):
        self.features = features
        self.family = EXP_FAMILIES[family] if isinstance(family, str) else family
        self.coeff_bound = float(coeff_bound)
        lo, hi = self.family.curvature_bounds(self.coeff_bound)
        self.lambda_lo = lo if lambda_lo is None else float(lambda_lo)
        self.lambda_hi = hi if lambda_hi is None else float(lambda_hi)
        if not self.lambda_lo > 0:
            raise DomainError("curvature lower bound must be positive")
        if lo < self.lambda_lo * (1 - 1e-9) or hi > self.lambda_hi * (1 + 1e-9):
            raise DomainError(f"Hessian of A ranges over [{lo:.4g}, {hi:.4g}], outside the declared bounds")

    @property
    def dim(self) -> int:
        return self.features.dim

    @property
    def curvature_constant(self) -> float:
        """Tightest ``c`` with ``c x <= 1 - exp(-x)`` on the reachable exponent range."""
        m = self.lambda_lo * (2 * self.coeff_bound) ** 2 / 8.0
        return -math.expm1(-m) / m

    def member(self, w) -> ExpFamilyModel:
        w = np.asarray(w, float)
        if np.linalg.norm(w) > self.coeff_bound + 1e-12:
            raise DomainError("coefficient vector exceeds the class radius")
        return ExpFamilyModel(w, self.features, self.family)

    def hellinger_sq(self, w1, w2, x, a) -> float:
        phi = self.features(x, a)
        return float(self.family.hellinger_sq(phi @ np.asarray(w1, float), phi @ np.asarray(w2, float)))


# ---------------------------------------------------------------------------
# declarative config
# ---------------------------------------------------------------------------


def class_to_config(cls) -> dict:
    if isinstance(cls, FiniteDensityClass):
        return cls.to_dict()
    if isinstance(cls, GaussianLinearClass):
        if cls.features.table is None:
            raise UnsupportedClassError("only table-backed feature maps serialize")
        ts = cls.theta_set
        theta = {"box": [ts.lo.tolist(), ts.hi.tolist()]} if isinstance(ts, ThetaBox) else {"finite": ts.tolist()}
        return {
            "type": "gaussian_linear",
            "features": cls.features.table.tolist(),
            "sigma": cls.sigma,
            "sigma_lo": cls.sigma_lo,
            "sigma_hi": cls.sigma_hi,
            "theta_set": theta,
        }
    raise UnsupportedClassError(f"cannot serialize {type(cls).__name__}")


def class_from_config(cfg: dict):
    kind = cfg["type"]
    if kind == "bernoulli":
        return FiniteDensityClass.bernoulli(cfg["means"])
    if kind == "finite":
        members = []
        for m in cfg["members"]:
            if m["type"] != "table":
                raise UnsupportedClassError(f"unknown member type {m['type']!r}")
            members.append(TableModel(np.asarray(m["probs"], float), m.get("support")))
        return FiniteDensityClass(members)
    if kind == "gaussian_linear":
        table = np.asarray(cfg["features"], float)
        fm = FeatureMap(table.shape[-1], table=table)
        ts = cfg.get("theta_set")
        theta_set = None
        if ts is not None:
            theta_set = ThetaBox(*ts["box"]) if "box" in ts else ts["finite"]
        return GaussianLinearClass(fm, cfg["sigma"], cfg.get("sigma_lo"), cfg.get("sigma_hi"), theta_set)
    raise UnsupportedClassError(f"unknown class type {kind!r}")
