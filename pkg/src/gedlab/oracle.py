"""Offline density-estimation oracles, their error budgets, and confidence sets."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from gedlab.divergence import DivergenceSpec, DomainError
from gedlab.models import (
    ExpFamilyClass,
    FiniteDensityClass,
    Functional,
    GaussianLinearClass,
    ThetaBox,
)

PIN_TOL = 1e-9
MAX_GRID_POINTS = 1_000_000


class OracleError(RuntimeError):
    pass


class EmptyConfidenceSetError(OracleError):
    """No candidate survived; the grid is too coarse or the pin excludes everything."""


class CoveringGridTooLarge(OracleError):
    pass


class ScoreEquationError(OracleError):
    def __init__(self, msg: str, theta: np.ndarray, residual: float):
        super().__init__(f"{msg} (residual {residual:.3e})")
        self.theta = theta
        self.residual = residual


@dataclass
class Dataset:
    rows: list = field(default_factory=list)

    @property
    def n(self) -> int:
        return len(self.rows)

    def append(self, x, a, y) -> None:
        self.rows.append((x, a, y))

    def __iter__(self):
        return iter(self.rows)

    def __len__(self) -> int:
        return len(self.rows)


@dataclass(frozen=True)
class OracleGuarantee:
    est: float
    i: int
    delta: float
    divergence: DivergenceSpec = field(default_factory=DivergenceSpec.hellinger)

    def __post_init__(self):
        if self.est < 0:
            raise DomainError("Est budget must be nonnegative")
        if not 0 < self.delta < 1:
            raise DomainError("delta must lie in (0, 1)")


@dataclass(frozen=True)
class SafePin:
    """Known constraint value ``c0`` of the safe action ``a0`` at ``contexts``."""

    action: int
    value: float
    contexts: tuple


# ---------------------------------------------------------------------------
# Est budgets
# ---------------------------------------------------------------------------


def mle_est(card: int, delta: float) -> float:
    return math.log(card / delta)


def ls_prediction_budget(sigma: float, d: int, delta: float) -> float:
    """High-probability bound on ``||U^T eps||^2``, in squared-prediction units."""
    L = math.log(1.0 / delta)
    return sigma**2 * (d + 2.0 * math.sqrt(d * L) + 2.0 * L)


def ls_hellinger_budget(d: int, delta: float) -> float:
    # sum D_H^2 <= ||Phi dtheta||^2 / (8 sigma^2) <= 4 ||U^T eps||^2 / (8 sigma^2)
    return ls_prediction_budget(1.0, d, delta) / 2.0


def est_schedule(kind: str, t: int, delta: float, *, card: int | None = None, dim: int | None = None,
                 sigma: float = 1.0, units: str = "hellinger") -> float:
    """Est of the chosen oracle at round ``t`` with confidence ``delta / (2 t^3)``."""
    if t < 1:
        raise DomainError("t must be >= 1")
    if not 0 < delta < 1:
        raise DomainError("delta must lie in (0, 1)")
    dprime = delta / (2.0 * t**3)
    if kind == "mle":
        if card is None:
            raise DomainError("mle schedule needs the class cardinality")
        return mle_est(card, dprime)
    if kind == "ls":
        if dim is None:
            raise DomainError("ls schedule needs the feature dimension")
        if units == "prediction":
            return ls_prediction_budget(sigma, dim, dprime)
        return ls_hellinger_budget(dim, dprime)
    raise OracleError(f"unknown oracle kind {kind!r}")


# ---------------------------------------------------------------------------
# fitters
# ---------------------------------------------------------------------------


def mle_log_likelihoods(cls: FiniteDensityClass, data: Dataset) -> np.ndarray:
    ll = np.zeros(len(cls))
    for x, a, y in data:
        ll += cls.log_density(x, a, y)
    return ll


def mle_fit(cls: FiniteDensityClass, data: Dataset, delta: float = 0.1) -> tuple[int, OracleGuarantee]:
    """Maximum likelihood over a finite class; ties go to the lowest index."""
    if data.n == 0:
        raise OracleError("MLE needs at least one observation")
    ll = mle_log_likelihoods(cls, data)
    if not np.any(np.isfinite(ll)):
        raise OracleError("every member assigns zero density to some observation")
    idx = int(np.argmax(ll))
    return idx, OracleGuarantee(mle_est(len(cls), delta), data.n, delta)


def _design(cls: GaussianLinearClass, data: Dataset) -> tuple[np.ndarray, np.ndarray]:
    X = np.array([cls.features(x, a) for x, a, _ in data], float).reshape(data.n, cls.dim)
    y = np.array([yy for _, _, yy in data], float)
    return X, y


def _normal_solve(xtx: np.ndarray, xty: np.ndarray) -> np.ndarray:
    d = xtx.shape[0]
    if np.linalg.matrix_rank(xtx) < d:
        xtx = xtx + 1e-10 * np.eye(d)
    return np.linalg.solve(xtx, xty)


def least_squares_fit(cls: GaussianLinearClass, data: Dataset, delta: float = 0.1) -> tuple[np.ndarray, OracleGuarantee]:
    """OLS through the normal equations; budget in squared-Hellinger units."""
    if cls.dim == 0:
        raise DomainError("feature dimension must be positive")
    if data.n == 0:
        raise OracleError("least squares needs at least one observation")
    X, y = _design(cls, data)
    theta = _normal_solve(X.T @ X, X.T @ y)
    return theta, OracleGuarantee(ls_hellinger_budget(cls.dim, delta), data.n, delta)


@dataclass
class ScoreSolution:
    theta: np.ndarray
    residual: float
    iterations: int
    at_boundary: bool
    residual_history: list


def score_equation_solve(cls: ExpFamilyClass, data: Dataset, theta0=None, tol: float = 1e-8,
                         max_iter: int = 100) -> ScoreSolution:
    """Damped Newton on the exponential-family score ``sum (y - A'(eta)) phi``.

    Steps are halved (up to 30 times) until the squared residual satisfies an
    Armijo decrease.  An accepted iterate leaving ``||w|| <= beta`` is scaled
    back onto the sphere and returned with ``at_boundary=True``.
    """
    if data.n == 0:
        raise OracleError("score equation needs at least one observation")
    fam = cls.family
    Phi = np.array([cls.features(x, a) for x, a, _ in data], float).reshape(data.n, cls.dim)
    y = np.array([yy for _, _, yy in data], float)
    w = np.zeros(cls.dim) if theta0 is None else np.asarray(theta0, float).copy()

    def score(v):
        return Phi.T @ (y - fam.grad_A(Phi @ v))

    F = score(w)
    res = float(np.linalg.norm(F))
    history = [res]
    for it in range(1, max_iter + 1):
        if res <= tol:
            return ScoreSolution(w, res, it - 1, False, history)
        H = Phi.T @ (fam.hess_A(Phi @ w)[:, None] * Phi)
        step = _normal_solve(H, F)
        s = 1.0
        for _ in range(31):
            w_new = w + s * step
            F_new = score(w_new)
            if F_new @ F_new <= (1.0 - 2e-4 * s) * (F @ F):
                break
            s *= 0.5
        else:
            raise ScoreEquationError("line search stalled", w, res)
        w, F = w_new, F_new
        res = float(np.linalg.norm(F))
        history.append(res)
        nrm = np.linalg.norm(w)
        if nrm > cls.coeff_bound:
            w = w * (cls.coeff_bound / nrm)
            return ScoreSolution(w, float(np.linalg.norm(score(w))), it, True, history)
    if res <= tol:
        return ScoreSolution(w, res, max_iter, False, history)
    raise ScoreEquationError(f"no convergence in {max_iter} iterations", w, res)


# ---------------------------------------------------------------------------
# confidence sets
# ---------------------------------------------------------------------------


@dataclass
class ConfidenceSet:
    """Candidates within ``radius`` of the fitted model that respect the safe pin.

    ``members`` indexes ``candidates`` (a finite class) or, for parametric
    classes, holds the surviving parameter rows directly.
    """

    candidates: object
    members: np.ndarray
    radius: float
    sums: np.ndarray
    safe_pin: SafePin | None = None

    def __len__(self) -> int:
        return len(self.members)


def covering_grid(box: ThetaBox, mesh: float, cap: int = MAX_GRID_POINTS) -> np.ndarray:
    """Axis-aligned grid whose points are within ``mesh`` (Euclidean) of every point of ``box``."""
    if not mesh > 0:
        raise DomainError("mesh must be positive")
    spacing = 2.0 * mesh / math.sqrt(box.dim)
    counts = [max(1, int(math.ceil(w / spacing - 1e-12)) + 1) if w > 0 else 1 for w in box.hi - box.lo]
    total = math.prod(counts)
    if total > cap:
        raise CoveringGridTooLarge(f"covering grid needs {total} points (cap {cap})")
    axes = [np.linspace(lo, hi, n) if n > 1 else np.array([0.5 * (lo + hi)]) for lo, hi, n in zip(box.lo, box.hi, counts)]
    return np.array(list(itertools.product(*axes)), float).reshape(total, box.dim)


def _pin_mask_finite(cls: FiniteDensityClass, T2: Functional, pin: SafePin) -> np.ndarray:
    vals = np.array([[v for v in cls.functional_matrix(T2, x)[:, pin.action]] for x in pin.contexts]).T
    return np.all(np.abs(vals - pin.value) <= PIN_TOL, axis=1)


def build_confidence_set(cls, fitted, data: Dataset, est_threshold: float, divergence: DivergenceSpec | None = None,
                         safe_pin: SafePin | None = None, T2: Functional | None = None, *, t: int | None = None,
                         grid: np.ndarray | None = None) -> ConfidenceSet:
    """All candidates ``g`` with ``sum_i D^2(g || fitted) <= est_threshold`` and ``T2(g_{x,a0}) = c0``.

    For a :class:`FiniteDensityClass`, ``fitted`` is a member index.  For a
    :class:`GaussianLinearClass`, ``fitted`` is ``theta_hat`` and candidates
    come from ``grid`` or from the covering grid of mesh ``1 / (L2 t)``.
    """
    if est_threshold < 0:
        raise DomainError("threshold must be nonnegative")
    divergence = divergence or DivergenceSpec.hellinger()
    if safe_pin is not None and T2 is None:
        raise DomainError("a safe pin needs the constraint functional")
    if isinstance(cls, FiniteDensityClass):
        sums = np.zeros(len(cls))
        for x, a, _ in data:
            sums += cls.pairwise_sq(x, a, divergence)[:, fitted]
        keep = sums <= est_threshold
        if safe_pin is not None:
            keep &= _pin_mask_finite(cls, T2, safe_pin)
        members = np.flatnonzero(keep)
        out = ConfidenceSet(cls, members, est_threshold, sums[members], safe_pin)
    elif isinstance(cls, GaussianLinearClass):
        if grid is None:
            if t is None or not isinstance(cls.theta_set, ThetaBox):
                raise DomainError("parametric confidence sets need a grid or (t, box theta_set)")
            grid = covering_grid(cls.theta_set, 1.0 / (cls.divergence_lipschitz * t))
        theta_hat = np.asarray(fitted, float)
        X, _ = _design(cls, data) if data.n else (np.zeros((0, cls.dim)), None)
        z = (grid - theta_hat) @ X.T
        sums = -np.expm1(-z * z / (8 * cls.sigma**2))
        if divergence.kind.value == "hellinger_sq":
            sums = sums * sums
        sums = sums.sum(axis=1)
        keep = sums <= est_threshold
        if safe_pin is not None:
            for x in safe_pin.contexts:
                mu = grid @ cls.features(x, safe_pin.action)
                keep &= np.abs(mu - safe_pin.value) <= PIN_TOL
        out = ConfidenceSet(cls, grid[keep], est_threshold, sums[keep], safe_pin)
    else:
        raise DomainError(f"no confidence-set builder for {type(cls).__name__}")
    if len(out) == 0:
        raise EmptyConfidenceSetError("no candidate satisfies the radius and the safe pin")
    return out


# ---------------------------------------------------------------------------
# incremental learners used by the decision engine
# ---------------------------------------------------------------------------


@dataclass
class Snapshot:
    """Oracle state at the start of one round: fitted centre and confidence members."""

    t: int
    center: object
    members: object
    radius: float


class FiniteClassLearner:
    """Incremental MLE + confidence sets over a finite class with integer contexts.

    Keeps running log-likelihoods and the running matrix
    ``S[m, m'] = sum_i D^2(m_{x_i,a_i} || m'_{x_i,a_i})`` so each round costs
    ``O(|F|^2)``.
    """

    kind = "mle"

    def __init__(self, cls: FiniteDensityClass, T: Functional, divergence: DivergenceSpec | None = None,
                 safe_pin: SafePin | None = None):
        self.cls = cls
        self.T = T
        self.divergence = divergence or DivergenceSpec.hellinger()
        n = len(cls)
        self.loglik = np.zeros(n)
        self.S = np.zeros((n, n))
        self.n_obs = 0
        self._pair_cache: dict = {}
        self.table = cls.functional_table(T) if cls.is_table else None
        self.pin_mask = np.ones(n, bool)
        if safe_pin is not None:
            self.pin_mask = _pin_mask_finite(cls, T, safe_pin)

    def __len__(self) -> int:
        return len(self.cls)

    def _pair(self, x, a) -> np.ndarray:
        key = (x, a)
        if key not in self._pair_cache:
            self._pair_cache[key] = self.cls.pairwise_sq(x, a, self.divergence)
        return self._pair_cache[key]

    def observe(self, x, a, y) -> None:
        self.loglik += self.cls.log_density(x, a, y)
        self.S += self._pair(x, a)
        self.n_obs += 1

    def est(self, t: int, delta: float) -> float:
        return est_schedule("mle", t, delta, card=len(self.cls))

    def snapshot(self, t: int, delta: float, radius: float | None = None) -> Snapshot:
        radius = self.est(t, delta) if radius is None else radius
        if self.n_obs == 0:
            center = None
            members = np.flatnonzero(self.pin_mask)
        else:
            if not np.any(np.isfinite(self.loglik)):
                raise OracleError("every member assigns zero density to some observation")
            center = int(np.argmax(self.loglik))
            members = np.flatnonzero((self.S[:, center] <= radius) & self.pin_mask)
        return Snapshot(t, center, members, radius)

    def values(self, center, x) -> np.ndarray:
        if self.table is not None:
            return self.table[center, x]
        return self.cls.functional_matrix(self.T, x, [center])[0]

    def member_values(self, members, x) -> np.ndarray:
        if self.table is not None:
            return self.table[members, x]
        return self.cls.functional_matrix(self.T, x, members)

    def amplitude_sq(self, members, x, a) -> float:
        if len(members) < 2:
            return 0.0
        P = self._pair(x, a)[np.ix_(members, members)]
        return float(P.max())


class GaussianLSLearner:
    """Incremental least squares over a :class:`GaussianLinearClass`.

    Confidence members are drawn from the covering grid of mesh ``1/(L2 t)``
    unless a fixed ``grid`` is supplied.
    """

    kind = "ls"

    def __init__(self, cls: GaussianLinearClass, T: Functional, n_actions: int, safe_pin: SafePin | None = None,
                 grid: np.ndarray | None = None, grid_cap: int = MAX_GRID_POINTS):
        self.cls = cls
        self.T = T
        self.K = n_actions
        self.safe_pin = safe_pin
        self.fixed_grid = grid
        self.grid_cap = grid_cap
        d = cls.dim
        self.xtx = np.zeros((d, d))
        self.xty = np.zeros(d)
        self.X: list = []
        self.n_obs = 0

    def observe(self, x, a, y) -> None:
        phi = self.cls.features(x, a)
        self.xtx += np.outer(phi, phi)
        self.xty += phi * y
        self.X.append(phi)
        self.n_obs += 1

    def est(self, t: int, delta: float) -> float:
        return est_schedule("ls", t, delta, dim=self.cls.dim)

    def _grid(self, t: int) -> np.ndarray:
        if self.fixed_grid is not None:
            return self.fixed_grid
        return covering_grid(self.cls.theta_set, 1.0 / (self.cls.divergence_lipschitz * t), self.grid_cap)

    def snapshot(self, t: int, delta: float, radius: float | None = None) -> Snapshot:
        radius = self.est(t, delta) if radius is None else radius
        center = _normal_solve(self.xtx, self.xty) if self.n_obs else np.zeros(self.cls.dim)
        grid = self._grid(t)
        if self.n_obs:
            z = (grid - center) @ np.asarray(self.X).T
            sums = (-np.expm1(-z * z / (8 * self.cls.sigma**2))).sum(axis=1)
            keep = sums <= radius
        else:
            keep = np.ones(len(grid), bool)
        if self.safe_pin is not None:
            for x in self.safe_pin.contexts:
                mu = self.cls.means(grid, x, self.K)[:, self.safe_pin.action]
                keep &= np.abs(mu - self.safe_pin.value) <= PIN_TOL
        return Snapshot(t, center, grid[keep], radius)

    def values(self, center, x) -> np.ndarray:
        return self._functional(self.cls.means(center, x, self.K))[0]

    def member_values(self, members, x) -> np.ndarray:
        return self._functional(self.cls.means(members, x, self.K))

    def _functional(self, mu: np.ndarray) -> np.ndarray:
        if self.T.kind.value == "neg_mean":
            return 1.0 - mu
        return mu

    def amplitude_sq(self, members, x, a) -> float:
        if len(members) < 2:
            return 0.0
        z = np.asarray(members) @ self.cls.features(x, a)
        spread = float(z.max() - z.min())
        return -math.expm1(-spread * spread / (8 * self.cls.sigma**2))
