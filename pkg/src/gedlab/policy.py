"""The decision engine: warm-up, counterfactual simulation, feasible sets and UCB scoring.

Actions are indexed ``0..K-1`` and rounds ``1..T``.  Policies live on the
uniform simplex grid ``{pi : m * pi(a) integer}`` in lexicographic order of the
integer count vectors; for two actions the exact endpoints of the estimated
feasible interval are appended after the grid.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numba
import numpy as np

from gedlab.divergence import DomainError

FEAS_TOL = 1e-12


class PolicyError(ValueError):
    pass


# ---------------------------------------------------------------------------
# simplex
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PolicySimplex:
    probs: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.probs, float)
        if p.ndim != 1 or np.any(p < 0) or abs(p.sum() - 1.0) > 1e-12:
            raise DomainError("a policy must be a probability vector")
        object.__setattr__(self, "probs", p)

    @classmethod
    def point_mass(cls, a: int, K: int) -> "PolicySimplex":
        p = np.zeros(K)
        p[a] = 1.0
        return cls(p)

    @property
    def K(self) -> int:
        return self.probs.size


class SimplexGrid:
    """All ``pi`` with ``m * pi(a)`` integer, lexicographic in the count vectors."""

    def __init__(self, K: int, m: int = 50):
        if K < 1 or m < 1:
            raise DomainError("need K >= 1 and m >= 1")
        self.K, self.m = int(K), int(m)
        counts = [c for c in itertools.product(range(m + 1), repeat=K - 1) if sum(c) <= m]
        full = np.array([(*c, m - sum(c)) for c in counts], dtype=np.int64).reshape(-1, K)
        order = np.lexsort(full.T[::-1])
        self.counts = full[order]
        self.points = self.counts / float(m)

    def __len__(self) -> int:
        return len(self.points)

    def point_mass_index(self, a: int) -> int:
        target = np.zeros(self.K, np.int64)
        target[a] = self.m
        return int(np.flatnonzero((self.counts == target).all(axis=1))[0])

    def gap_bound(self, lipschitz: float) -> float:
        """Worst-case objective loss from restricting to the grid, for an objective Lipschitz in l1."""
        return lipschitz * (self.K - 1) / self.m


def simplex_grid(K: int, m: int = 50) -> SimplexGrid:
    return SimplexGrid(K, m)


def feasible_interval_vertices(C: np.ndarray, tau: float) -> np.ndarray:
    """Endpoints of ``{gamma in [0,1] : max_g (1-gamma) C[g,0] + gamma C[g,1] <= tau}`` as policies.

    Returns a ``(0..2, 2)`` array; empty when no mixture is feasible.
    """
    C = np.atleast_2d(np.asarray(C, float))
    lo, hi = 0.0, 1.0
    for c0, c1 in C:
        slope, slack = c1 - c0, tau - c0
        if slope > 0:
            hi = min(hi, slack / slope)
        elif slope < 0:
            lo = max(lo, slack / slope)
        elif slack < 0:
            return np.zeros((0, 2))
    if lo > hi or hi < 0 or lo > 1:
        return np.zeros((0, 2))
    lo, hi = max(lo, 0.0), min(hi, 1.0)
    return np.array([[1 - lo, lo], [1 - hi, hi]])


# ---------------------------------------------------------------------------
# parameters and schedules
# ---------------------------------------------------------------------------


def warmup_action(t: int, K: int) -> int:
    if not 1 <= t <= K:
        raise PolicyError(f"warm-up covers rounds 1..{K}, got {t}")
    return t - 1


def alpha_r_default(r0: float, tau: float, c0: float) -> float:
    if not tau > c0:
        raise PolicyError("the constraint threshold must exceed the safe action's cost")
    return (1.0 - r0) / (tau - c0)


def _check_common(t, delta, K):
    if t < 1 or K < 1:
        raise DomainError("t and K must be positive")
    if not 0 < delta < 1:
        raise DomainError("delta must lie in (0, 1)")


def beta_finite(card_F: int, t: int, delta: float, L1: float, est: float, K: int) -> float:
    _check_common(t, delta, K)
    if card_F < 1 or L1 <= 0 or est < 0:
        raise DomainError("need |F| >= 1, L1 > 0, est >= 0")
    return math.sqrt((34 * math.log(2 * card_F * t**3 / delta) + 2 * L1**2 * est) * t / K)


def beta_covering(d: int, diam: float, L2: float, L_D: float, t: int, delta: float, L1: float, est: float,
                  K: int) -> float:
    _check_common(t, delta, K)
    if d < 1 or diam < 0 or L2 <= 0 or L1 <= 0 or est < 0:
        raise DomainError("invalid covering parameters")
    inner = 72 * (d * math.log(2 + diam * L2 * t) + math.log(2 * t**3 / delta)) + L_D**2 + 2 * L1**2 * est
    return math.sqrt(inner * t / K)


@dataclass
class PolicyParams:
    K: int
    safe_action: int
    r0: float
    c0: float
    tau: float
    delta: float = 0.1
    beta_schedule: Callable[[int], float] | None = None
    alpha_r: float | None = None
    simplex_resolution: int = 50

    def __post_init__(self):
        if not 0 < self.delta < 1:
            raise DomainError("delta must lie in (0, 1)")
        if not 0 <= self.safe_action < self.K:
            raise DomainError("safe action out of range")
        if self.alpha_r is None:
            self.alpha_r = alpha_r_default(self.r0, self.tau, self.c0)
        if self.alpha_r < 0:
            raise DomainError("alpha_r must be nonnegative")

    def beta(self, t: int) -> float:
        b = 0.0 if self.beta_schedule is None else float(self.beta_schedule(t))
        if b < 0:
            raise DomainError("beta must be nonnegative")
        return b


# ---------------------------------------------------------------------------
# scoring (reference path)
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class UcbScore:
    utility: float
    exploration: float
    width: float
    total: float


def ucb_score(pi, utility_values, counts, beta: float, alpha_r: float, constraint_values) -> UcbScore:
    """Three-term objective of one policy at one context.

    ``utility_values[a]`` is ``T1`` of the fitted utility model and
    ``constraint_values[j, a]`` is ``T2`` of the ``j``-th confidence member.
    """
    p = np.asarray(pi.probs if isinstance(pi, PolicySimplex) else pi, float)
    C = np.atleast_2d(np.asarray(constraint_values, float))
    if C.shape[0] == 0:
        raise PolicyError("constraint confidence set is empty")
    counts = np.asarray(counts, float)
    if counts.shape != p.shape or np.any(counts < 0):
        raise DomainError("counts need one nonnegative entry per action")
    util = float(p @ np.asarray(utility_values, float))
    expl = 0.0
    for a in range(p.size):
        expl += p[a] * (1.0 / (counts[a] + 1.0))
    expl *= beta
    v = C @ p
    width = float(v.max() - v.min())
    return UcbScore(util, expl, width, util + expl + alpha_r * width)


def worst_case_value(pi, constraint_values) -> float:
    return float(np.max(np.atleast_2d(constraint_values) @ np.asarray(pi, float)))


def feasible_policy_set(constraint_values, tau: float, safe_action: int, grid: SimplexGrid,
                        with_vertices: bool = True) -> np.ndarray:
    """Grid policies whose worst-case constraint value is at most ``tau``, plus the safe point mass.

    For ``K = 2`` the exact interval endpoints are appended.  Rows keep the
    candidate order used for tie-breaking.
    """
    pols = _candidate_policies(grid, constraint_values, tau, with_vertices)
    mask = _feasible_mask(pols, constraint_values, tau, safe_action)
    return pols[mask]


def _candidate_policies(grid: SimplexGrid, constraint_values, tau: float, with_vertices: bool = True) -> np.ndarray:
    if grid.K == 2 and with_vertices and len(np.atleast_2d(constraint_values)):
        return np.vstack([grid.points, feasible_interval_vertices(constraint_values, tau)])
    return grid.points


def _feasible_mask(pols, constraint_values, tau, safe_action) -> np.ndarray:
    C = np.atleast_2d(np.asarray(constraint_values, float))
    safe = (pols[:, safe_action] == 1.0)
    if C.shape[0] == 0:
        return safe
    return ((pols @ C.T).max(axis=1) <= tau + FEAS_TOL) | safe


def select_action(pi, rng: np.random.Generator) -> int:
    return _inverse_cdf(np.asarray(pi.probs if isinstance(pi, PolicySimplex) else pi, float), rng.random())


def _inverse_cdf(p: np.ndarray, u: float) -> int:
    c = 0.0
    for a in range(p.size):
        c += p[a]
        if u < c:
            return a
    return int(np.flatnonzero(p > 0)[-1])


# ---------------------------------------------------------------------------
# counterfactual loop
# ---------------------------------------------------------------------------


@numba.njit(cache=True)
def _counterfactual_kernel(pols, table_of_step, base, feas, betas, uniforms):
    S, G = base.shape
    K = pols.shape[2]
    counts = np.zeros(K)
    choice = np.empty(S, np.int64)
    acts = np.empty(S, np.int64)
    for s in range(S):
        P = pols[table_of_step[s]]
        best = -1
        bestv = -np.inf
        for g in range(G):
            if not feas[s, g]:
                continue
            e = 0.0
            for a in range(K):
                e += P[g, a] * (1.0 / (counts[a] + 1.0))
            v = base[s, g] + betas[s] * e
            if v > bestv:
                bestv = v
                best = g
        choice[s] = best
        u = uniforms[s]
        c = 0.0
        act = -1
        for a in range(K):
            c += P[best, a]
            if u < c:
                act = a
                break
        if act < 0:
            for a in range(K):
                if P[best, a] > 0:
                    act = a
        acts[s] = act
        counts[act] += 1.0
    return choice, acts


@dataclass
class StepTables:
    """Per-step data for one counterfactual pass at a fixed context.

    ``pols[k]`` is a candidate table, ``table_of_step[s]`` picks the table for
    step ``s``; ``base[s, g]`` is utility plus weighted width of candidate ``g``
    and ``feas[s, g]`` its membership in the estimated feasible set.
    """

    pols: np.ndarray
    table_of_step: np.ndarray
    base: np.ndarray
    feas: np.ndarray
    betas: np.ndarray


def step_table(pols: np.ndarray, utility_values, constraint_values, tau: float, safe_action: int,
               alpha_r: float) -> tuple[np.ndarray, np.ndarray]:
    """``(base, feas)`` for one step: ``pi.u + alpha_r * width`` and the feasibility mask."""
    C = np.atleast_2d(np.asarray(constraint_values, float))
    base = pols @ np.asarray(utility_values, float)
    safe = pols[:, safe_action] == 1.0
    if C.shape[0] == 0:
        return base, safe
    PC = pols @ C.T
    hi = PC.max(axis=1)
    base = base + alpha_r * (hi - PC.min(axis=1))
    return base, (hi <= tau + FEAS_TOL) | safe


def counterfactual_trajectory(tables: StepTables, rng: np.random.Generator) -> tuple[np.ndarray, dict]:
    """Run the inner loop over steps ``i = K+1..t`` and return ``pi_t`` with the log.

    The log holds the chosen candidate index, the chosen policy and the
    sampled counterfactual action for each step.
    """
    S = tables.base.shape[0]
    if S < 1:
        raise PolicyError("the counterfactual loop needs at least one step")
    uniforms = rng.random(S)
    choice, acts = _counterfactual_kernel(tables.pols, tables.table_of_step, tables.base, tables.feas,
                                          tables.betas, uniforms)
    policies = tables.pols[tables.table_of_step, choice]
    return policies[-1].copy(), {"choice": choice, "policies": policies, "actions": acts}


def counterfactual_reference(tables: StepTables, rng: np.random.Generator) -> tuple[np.ndarray, dict]:
    """Straight-line numpy version of :func:`counterfactual_trajectory` used to cross-check it."""
    S = tables.base.shape[0]
    uniforms = rng.random(S)
    K = tables.pols.shape[2]
    counts = np.zeros(K)
    choice, acts, policies = [], [], []
    for s in range(S):
        P = tables.pols[tables.table_of_step[s]]
        best, bestv = -1, -np.inf
        for g in np.flatnonzero(tables.feas[s]):
            e = 0.0
            for a in range(K):
                e += P[g, a] * (1.0 / (counts[a] + 1.0))
            v = tables.base[s, g] + tables.betas[s] * e
            if v > bestv:
                best, bestv = int(g), v
        a = _inverse_cdf(P[best], uniforms[s])
        counts[a] += 1
        choice.append(best)
        acts.append(a)
        policies.append(P[best])
    policies = np.array(policies)
    return policies[-1].copy(), {"choice": np.array(choice), "policies": policies, "actions": np.array(acts)}


# ---------------------------------------------------------------------------
# the engine
# ---------------------------------------------------------------------------


@dataclass
class TrajectoryRecord:
    seed: int
    K: int
    contexts: list = field(default_factory=list)
    policies: list = field(default_factory=list)
    actions: list = field(default_factory=list)
    ys: list = field(default_factory=list)
    zs: list = field(default_factory=list)
    counterfactual: list = field(default_factory=list)

    @property
    def T(self) -> int:
        return len(self.actions)

    def append(self, x, pi, a, y, z, log=None) -> None:
        if pi[a] <= 0:
            raise PolicyError("played action outside the policy's support")
        self.contexts.append(x)
        self.policies.append(np.asarray(pi, float))
        self.actions.append(int(a))
        self.ys.append(y)
        self.zs.append(z)
        self.counterfactual.append(log)


def check_potential_lemma(actions: Sequence[int], K: int) -> tuple[float, float]:
    """``(sum_{t>K} 1 / #{j < t : a_j = a_t}, K + K log(T/K))`` over real history counts."""
    T = len(actions)
    if T < K:
        raise PolicyError("trajectory shorter than the warm-up")
    counts = np.zeros(K)
    lhs = 0.0
    for t, a in enumerate(actions, start=1):
        if t > K:
            if counts[a] == 0:
                raise PolicyError(f"action {a} never played before round {t}")
            lhs += 1.0 / counts[a]
        counts[a] += 1
    return lhs, K + K * math.log(T / K)


class GEDUCB:
    """Drives one run.  Learners expose ``snapshot``, ``values``, ``member_values`` and ``observe``.

    With ``n_contexts`` set, step tables are computed once per (round, context)
    into growing per-context buffers and reused by every later counterfactual
    pass; otherwise they are rebuilt at the incoming context each round.
    Tables are memoized on (context, fitted utility model, confidence members)
    since those change only occasionally.
    """

    def __init__(self, params: PolicyParams, utility_learner, constraint_learner, n_contexts: int | None = None,
                 keep_log: bool = False, horizon: int = 64):
        self.p = params
        self.U = utility_learner
        self.G = constraint_learner
        self.n_contexts = n_contexts
        self.keep_log = keep_log
        self.grid = SimplexGrid(params.K, params.simplex_resolution)
        self.safe_index = self.grid.point_mass_index(params.safe_action)
        self.width = len(self.grid) + (2 if params.K == 2 else 0)
        self.snaps_u: dict = {}
        self.snaps_g: dict = {}
        self.betas: dict = {}
        self._memo: dict = {}
        self._bufs: dict = {}
        self._filled = 0
        self._cap = max(1, horizon)
        self.t = 0

    @property
    def K(self) -> int:
        return self.p.K

    def prepare_round(self, t: int) -> None:
        """Fit both oracles on rounds ``1..t-1`` and store the round-``t`` confidence state."""
        self.t = t
        self.snaps_u[t] = self.U.snapshot(t, self.p.delta)
        self.snaps_g[t] = self.G.snapshot(t, self.p.delta)
        self.betas[t] = self.p.beta(t)
        if self.n_contexts is not None and t > self.K:
            s = t - self.K - 1
            for x in range(self.n_contexts):
                self._store(x, s, self._table(t, x))
            self._filled = s + 1

    def _store(self, x, s: int, row) -> None:
        if x not in self._bufs or s >= len(self._bufs[x][1]):
            cap = self._cap
            while cap <= s:
                cap *= 2
            self._cap = cap
            new = (np.zeros((cap, self.width, self.K)) if self.K == 2 else None,
                   np.full((cap, self.width), -np.inf), np.zeros((cap, self.width), bool))
            if x in self._bufs:
                for old, nb in zip(self._bufs[x], new):
                    if old is not None:
                        nb[: len(old)] = old
            self._bufs[x] = new
        pols_b, base_b, feas_b = self._bufs[x]
        pols, base, feas = row
        n = len(base)
        base_b[s, :n], feas_b[s, :n] = base, feas
        if pols_b is not None:
            pols_b[s, :n] = pols
            pols_b[s, n:] = pols[self.safe_index]

    def _table(self, i: int, x):
        center, members = self.snaps_u[i].center, self.snaps_g[i].members
        key = (x, _key(center), _key(members))
        hit = self._memo.get(key)
        if hit is not None:
            return hit
        C = self.G.member_values(members, x) if len(members) else np.zeros((0, self.K))
        pols = _candidate_policies(self.grid, C, self.p.tau)
        u = self.U.values(center, x)
        base, feas = step_table(pols, u, C, self.p.tau, self.p.safe_action, self.p.alpha_r)
        self._memo[key] = (pols, base, feas)
        return pols, base, feas

    def step_tables(self, t: int, x) -> StepTables:
        S = t - self.K
        betas = np.array([self.betas[i] for i in range(self.K + 1, t + 1)])
        if self.n_contexts is not None:
            pols_b, base_b, feas_b = self._bufs[x]
            base, feas = base_b[:S], feas_b[:S]
            if pols_b is not None:
                return StepTables(pols_b[:S], np.arange(S), base, feas, betas)
            return StepTables(self.grid.points[None], np.zeros(S, np.int64), base, feas, betas)
        rows = [self._table(i, x) for i in range(self.K + 1, t + 1)]
        if self.K == 2:
            pols = np.zeros((S, self.width, 2))
            base = np.full((S, self.width), -np.inf)
            feas = np.zeros((S, self.width), bool)
            for s, (P, b, f) in enumerate(rows):
                n = len(P)
                pols[s, :n], base[s, :n], feas[s, :n] = P, b, f
                pols[s, n:] = P[self.safe_index]
            return StepTables(pols, np.arange(S), base, feas, betas)
        base = np.stack([r[1] for r in rows])
        feas = np.stack([r[2] for r in rows])
        return StepTables(self.grid.points[None], np.zeros(S, np.int64), base, feas, betas)

    def choose(self, t: int, x, rng_cf: np.random.Generator) -> tuple[np.ndarray, dict | None]:
        if t <= self.K:
            return PolicySimplex.point_mass(warmup_action(t, self.K), self.K).probs, None
        tables = self.step_tables(t, x)
        pi, log = counterfactual_trajectory(tables, rng_cf)
        return pi, (log if self.keep_log else None)

    def observe(self, x, a, y, z) -> None:
        self.U.observe(x, a, y)
        self.G.observe(x, a, z)


def _key(v):
    if v is None:
        return None
    if isinstance(v, np.ndarray):
        return (v.shape, v.tobytes())
    return v
