"""Ground-truth environments for the four constrained decision problems, and the regret benchmark."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.optimize import linprog

from gedlab.divergence import DivergenceSpec, DomainError
from gedlab.models import FeatureMap, Functional, GaussianLinearModel, TableModel
from gedlab.policy import FEAS_TOL, SimplexGrid, feasible_interval_vertices, select_action

SAFE_TOL = 1e-12


class EnvironmentConstructionError(ValueError):
    """The environment violates a structural premise (e.g. the safe action is unsafe)."""


@dataclass
class EnvironmentSpec:
    """A finite-context environment with tabulated true functional values.

    ``utility[x, a] = T1(f*_{x,a})`` and ``constraint[x, a] = T2(g*_{x,a})``.
    When ``shared_outcome`` is set the constraint observation is the utility
    observation itself (``g* = f*``).
    """

    name: str
    f_star: object
    g_star: object
    T1: Functional
    T2: Functional
    utility: np.ndarray
    constraint: np.ndarray
    tau: float
    safe_action: int
    context_probs: np.ndarray | None = None
    shared_outcome: bool = False
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.utility = np.asarray(self.utility, float)
        self.constraint = np.asarray(self.constraint, float)
        if self.utility.shape != self.constraint.shape or self.utility.ndim != 2:
            raise DomainError("utility and constraint tables must both be [context, action]")
        for name, tab in (("utility", self.utility), ("constraint", self.constraint)):
            if np.any(tab < -SAFE_TOL) or np.any(tab > 1 + SAFE_TOL):
                raise DomainError(f"{name} functional leaves [0, 1]")
        if self.context_probs is None:
            self.context_probs = np.full(self.n_contexts, 1.0 / self.n_contexts)
        self.context_probs = np.asarray(self.context_probs, float)
        if abs(self.context_probs.sum() - 1) > 1e-12 or np.any(self.context_probs < 0):
            raise DomainError("context probabilities must form a distribution")
        if not 0 <= self.safe_action < self.K:
            raise EnvironmentConstructionError("safe action out of range")
        c = self.constraint[:, self.safe_action]
        if np.ptp(c) > SAFE_TOL:
            raise EnvironmentConstructionError("the safe action's constraint value differs across contexts")
        if c[0] > self.tau + SAFE_TOL:
            raise EnvironmentConstructionError("the safe action violates the threshold")

    @property
    def n_contexts(self) -> int:
        return self.utility.shape[0]

    @property
    def K(self) -> int:
        return self.utility.shape[1]

    @property
    def c0(self) -> float:
        return float(self.constraint[0, self.safe_action])

    @property
    def safe_utility(self) -> np.ndarray:
        return self.utility[:, self.safe_action]

    @property
    def r0(self) -> float:
        """Safe-action utility; the smallest over contexts when it varies."""
        return float(self.safe_utility.min())

    def sample_context(self, rng: np.random.Generator) -> int:
        return select_action(self.context_probs, rng)

    def sample_outcomes(self, x, a, rng: np.random.Generator) -> tuple[float, float]:
        y = self.f_star.sample(x, a, rng)
        z = y if self.shared_outcome else self.g_star.sample(x, a, rng)
        return y, z


# ---------------------------------------------------------------------------
# constructors
# ---------------------------------------------------------------------------


def _table_model(means: np.ndarray, noise: str) -> TableModel:
    if noise == "bernoulli":
        return TableModel.bernoulli(means)
    if noise == "none":
        return TableModel.dirac(means)
    raise DomainError(f"unknown noise model {noise!r}")


def make_constrained_bandit(reward_means, cost_means, tau: float, safe_action: int = 0, noise: str = "bernoulli",
                            context_probs=None, divergence: DivergenceSpec | None = None) -> EnvironmentSpec:
    """Reward/cost pairs with means ``reward_means[x, a]`` and ``cost_means[x, a]``.

    ``noise="bernoulli"`` draws 0/1 outcomes with those means; ``"none"``
    returns the means themselves.
    """
    R = np.asarray(reward_means, float)
    C = np.asarray(cost_means, float)
    if np.any((R < 0) | (R > 1)) or np.any((C < 0) | (C > 1)):
        raise DomainError("means must lie in [0, 1]")
    T = Functional.mean(divergence)
    return EnvironmentSpec("constrained_bandit", _table_model(R, noise), _table_model(C, noise), T, T, R, C, tau,
                           safe_action, context_probs)


def make_risk_aware(probs, support, variance_threshold: float, safe_action: int = 0,
                    context_probs=None) -> EnvironmentSpec:
    """Reward laws ``probs[x, a, k]`` on ``support``; the constraint is the arm's variance.

    The policy-level constraint value is the policy-average of per-arm variances.
    """
    f = TableModel(probs, support)
    s = f.support
    if np.any(s < 0) or np.any(s > 1):
        raise DomainError("risk-aware rewards need a support inside [0, 1]")
    mean = f.probs @ s
    var = np.maximum(f.probs @ (s * s) - mean * mean, 0.0)
    T1 = Functional.mean(DivergenceSpec.tv())
    T2 = Functional.variance(float(np.ptp(s)) if s.size > 1 else 1.0)
    return EnvironmentSpec("risk_aware", f, f, T1, T2, mean, var, variance_threshold, safe_action, context_probs,
                           shared_outcome=True)


def make_hypothesis_test(prior_null, alpha: float, context_probs=None) -> EnvironmentSpec:
    """Action 0 declares the null, action 1 the alternative.

    ``f*_{x,a} = Ber(P(y=0|x) 1{a=0})`` and ``g*_{x,a} = Ber(P(y=0|x) 1{a=1})``
    with threshold ``alpha``.  Action 0 is the safe action (constraint 0).
    """
    p = np.asarray(prior_null, float)
    if np.any((p < 0) | (p > 1)):
        raise DomainError("priors must lie in [0, 1]")
    u = np.stack([p, np.zeros_like(p)], axis=1)
    c = np.stack([np.zeros_like(p), p], axis=1)
    T = Functional.mean()
    return EnvironmentSpec("hypothesis_test", TableModel.bernoulli(u), TableModel.bernoulli(c), T, T, u, c, alpha, 0,
                           context_probs)


def augmented_action(a: int, query: int) -> int:
    """Index of the augmented action ``(a, query)``."""
    return 2 * a + query


def make_active_learning(label_probs, query_costs, budget: float, loss, safe_base_action: int = 0,
                         context_probs=None) -> EnvironmentSpec:
    """Prediction ``a`` with optional label query ``i``; augmented index ``2a + i``.

    The utility law is the law of ``loss[a, y]`` with ``y ~ label_probs[x]``
    (independent of the query bit) scored by one minus its mean; the
    constraint law is a point mass at ``query_costs[x, a] * i``.
    """
    P = np.asarray(label_probs, float)
    c = np.asarray(query_costs, float)
    L = np.asarray(loss, float)
    if np.any(c < 0):
        raise DomainError("query costs must be nonnegative")
    if np.any((L < 0) | (L > 1)):
        raise DomainError("loss values must lie in [0, 1]")
    n_ctx, n_base = c.shape
    support = np.unique(L)
    probs = np.zeros((n_ctx, 2 * n_base, support.size))
    costs = np.zeros((n_ctx, 2 * n_base))
    for x in range(n_ctx):
        for a in range(n_base):
            law = np.array([P[x, L[a] == s].sum() for s in support])
            for i in (0, 1):
                probs[x, augmented_action(a, i)] = law
                costs[x, augmented_action(a, i)] = c[x, a] * i
    f = TableModel(probs, support)
    g = TableModel.dirac(costs)
    T1 = Functional.neg_mean(DivergenceSpec.tv())
    T2 = Functional.mean(DivergenceSpec.tv())
    util = 1.0 - probs @ support
    return EnvironmentSpec("active_learning", f, g, T1, T2, util, costs, budget,
                           augmented_action(safe_base_action, 0), context_probs)


def make_gaussian_bandit(features, theta_reward, theta_cost, sigma: float, tau: float, safe_action: int = 0,
                         context_probs=None) -> EnvironmentSpec:
    """Linear-Gaussian rewards and costs over a feature table ``features[x, a, :]``."""
    table = np.asarray(features, float)
    fm = FeatureMap(table.shape[-1], table=table)
    f = GaussianLinearModel(theta_reward, fm, sigma)
    g = GaussianLinearModel(theta_cost, fm, sigma)
    T = Functional.mean()
    return EnvironmentSpec("gaussian_bandit", f, g, T, T, fm.table @ f.theta, fm.table @ g.theta, tau, safe_action,
                           context_probs)


def env_from_config(cfg: dict) -> EnvironmentSpec:
    kind = cfg["type"]
    probs = cfg.get("context_probs")
    if kind == "constrained_bandit":
        return make_constrained_bandit(cfg["reward_means"], cfg["cost_means"], cfg["tau"], cfg.get("safe_action", 0),
                                       cfg.get("noise", "bernoulli"), probs)
    if kind == "risk_aware":
        return make_risk_aware(cfg["probs"], cfg["support"], cfg["tau"], cfg.get("safe_action", 0), probs)
    if kind == "hypothesis_test":
        return make_hypothesis_test(cfg["prior_null"], cfg["alpha"], probs)
    if kind == "active_learning":
        return make_active_learning(cfg["label_probs"], cfg["query_costs"], cfg["tau"], cfg["loss"],
                                    cfg.get("safe_base_action", 0), probs)
    if kind == "gaussian_bandit":
        return make_gaussian_bandit(cfg["features"], cfg["theta_reward"], cfg["theta_cost"], cfg["sigma"], cfg["tau"],
                                    cfg.get("safe_action", 0), probs)
    raise DomainError(f"unknown environment type {kind!r}")


# ---------------------------------------------------------------------------
# benchmark
# ---------------------------------------------------------------------------


def optimal_feasible_policy(env: EnvironmentSpec, x: int, grid: SimplexGrid) -> tuple[np.ndarray, float]:
    """Best grid policy (plus exact vertices for two actions) under the true constraint.

    Ties go to the lowest candidate index.
    """
    u, c = env.utility[x], env.constraint[x]
    pols = grid.points
    if env.K == 2:
        pols = np.vstack([pols, feasible_interval_vertices(c[None], env.tau)])
    feas = (pols @ c <= env.tau + FEAS_TOL) | (pols[:, env.safe_action] == 1.0)
    vals = np.where(feas, pols @ u, -np.inf)
    i = int(np.argmax(vals))
    return pols[i].copy(), float(vals[i])


def optimal_value_lp(utility, constraint, tau: float) -> float:
    """Exact optimum over the whole simplex by linear programming."""
    u, c = np.asarray(utility, float), np.asarray(constraint, float)
    K = u.size
    res = linprog(-u, A_ub=c[None], b_ub=[tau], A_eq=np.ones((1, K)), b_eq=[1.0], bounds=[(0, 1)] * K,
                  method="highs")
    if res.status != 0:
        raise EnvironmentConstructionError(f"benchmark LP failed: {res.message}")
    return float(-res.fun)


@dataclass
class RegretLedger:
    tau: float
    optimal: list = field(default_factory=list)
    realized: list = field(default_factory=list)
    increments: list = field(default_factory=list)
    cumulative: list = field(default_factory=list)
    violation_rounds: list = field(default_factory=list)

    def record(self, t: int, optimal: float, realized: float, constraint_value: float) -> tuple[float, bool]:
        inc = optimal - realized
        prev = self.cumulative[-1] if self.cumulative else 0.0
        self.optimal.append(optimal)
        self.realized.append(realized)
        self.increments.append(inc)
        self.cumulative.append(prev + inc)
        violated = constraint_value > self.tau + FEAS_TOL
        if violated:
            self.violation_rounds.append(t)
        return inc, violated

    @property
    def violation_count(self) -> int:
        return len(self.violation_rounds)

    def violations_after(self, t0: int) -> int:
        return sum(1 for t in self.violation_rounds if t > t0)


@dataclass(frozen=True)
class StepResult:
    action: int
    y: float
    z: float
    regret_inc: float
    violated: bool
    constraint_value: float


def step(env: EnvironmentSpec, x: int, pi, rng_policy: np.random.Generator, rng_env: np.random.Generator,
         ledger: RegretLedger, t: int, optimal_value: float) -> StepResult:
    pi = np.asarray(pi, float)
    a = select_action(pi, rng_policy)
    y, z = env.sample_outcomes(x, a, rng_env)
    cval = float(pi @ env.constraint[x])
    inc, violated = ledger.record(t, optimal_value, float(pi @ env.utility[x]), cval)
    return StepResult(a, y, z, inc, violated, cval)
