"""Seeded experiment runner: config handling, single runs, sweeps, CSV output and lemma reports."""

from __future__ import annotations

import concurrent.futures
import dataclasses
import hashlib
import json
import math
import os
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from gedlab.divergence import DivergenceSpec, hellinger_sq_table
from gedlab.eluder import check_lemma_pded1, check_lemma_pded2, finite_space_bound
from gedlab.envs import EnvironmentSpec, RegretLedger, env_from_config, optimal_feasible_policy, step
from gedlab.models import (
    FeatureMap,
    FiniteDensityClass,
    FunctionalKind,
    GaussianLinearClass,
    ThetaBox,
    _mean_lipschitz,
    class_from_config,
)
from gedlab.oracle import (
    Dataset,
    FiniteClassLearner,
    GaussianLSLearner,
    SafePin,
    least_squares_fit,
    ls_hellinger_budget,
    mle_est,
    mle_fit,
)
from gedlab.policy import (
    GEDUCB,
    PolicyParams,
    SimplexGrid,
    beta_covering,
    beta_finite,
    check_potential_lemma,
    ucb_score,
)

SCHEMA = "gedlab-trajectory v1"
CSV_COLUMNS = ("t", "x", "action", "y", "z", "regret_inc", "cum_regret", "feasible_flag", "beta_t",
               "conf_set_size", "omega_t")
WILSON_Z = 1.959963984540054


class ConfigError(ValueError):
    def __init__(self, field_name: str, msg: str):
        super().__init__(f"config field '{field_name}': {msg}")
        self.field = field_name


# ---------------------------------------------------------------------------
# config
# ---------------------------------------------------------------------------


@dataclass
class RunConfig:
    """Everything that determines a run apart from the seed.

    ``env`` is an environment config (see :func:`gedlab.envs.env_from_config`);
    ``utility_class`` and ``constraint_class`` are model-class configs for the
    two oracles.  ``beta_params`` feeds the covering schedule (``d``, ``diam``,
    ``L2``, ``L_D``) and may override ``L1``.
    """

    env: dict = field(default_factory=dict)
    utility_class: dict = field(default_factory=dict)
    constraint_class: dict = field(default_factory=dict)
    oracle: str = "mle"
    divergence: str = "hellinger"
    delta: float = 0.1
    T: int = 500
    m: int = 50
    seed: int = 0
    replications: int = 1
    beta_mode: str = "finite"
    beta_params: dict = field(default_factory=dict)
    lemma_eps: float = 0.1
    dim_upper: float | None = None
    out_dir: str = "runs"

    def validate(self) -> None:
        if not self.env:
            raise ConfigError("env", "missing environment")
        if self.oracle not in ("mle", "ls"):
            raise ConfigError("oracle", f"expected 'mle' or 'ls', got {self.oracle!r}")
        if self.divergence not in ("hellinger", "tv"):
            raise ConfigError("divergence", f"expected 'hellinger' or 'tv', got {self.divergence!r}")
        if not 0 < self.delta < 1:
            raise ConfigError("delta", "must lie in (0, 1)")
        if self.replications < 1:
            raise ConfigError("replications", "must be >= 1")
        if self.m < 1:
            raise ConfigError("m", "must be >= 1")
        if self.beta_mode not in ("finite", "covering"):
            raise ConfigError("beta_mode", f"expected 'finite' or 'covering', got {self.beta_mode!r}")
        if self.oracle == "ls" and self.beta_mode != "covering":
            raise ConfigError("beta_mode", "the least-squares oracle needs the covering schedule")
        if not self.lemma_eps > 0:
            raise ConfigError("lemma_eps", "must be positive")

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        for k in d:
            if k not in known:
                raise ConfigError(k, "unknown field")
        cfg = cls(**d)
        cfg.validate()
        return cfg

    @classmethod
    def from_json(cls, text: str) -> "RunConfig":
        try:
            d = json.loads(text)
        except json.JSONDecodeError as e:
            raise ConfigError("<file>", f"invalid JSON at line {e.lineno}, column {e.colno}: {e.msg}") from None
        if not isinstance(d, dict):
            raise ConfigError("<file>", "top level must be an object")
        return cls.from_dict(d)

    @classmethod
    def load(cls, path) -> "RunConfig":
        return cls.from_json(Path(path).read_text())

    def hash(self) -> str:
        d = self.to_dict()
        for k in ("seed", "replications", "out_dir"):
            d.pop(k)
        return hashlib.sha256(json.dumps(d, sort_keys=True).encode()).hexdigest()[:16]


def default_config_dict() -> dict:
    return RunConfig().to_dict()


# ---------------------------------------------------------------------------
# setup
# ---------------------------------------------------------------------------


@dataclass
class RunSetup:
    env: EnvironmentSpec
    params: PolicyParams
    utility_learner: object
    constraint_learner: object
    dim_upper: float
    cap: float


def _divergence(name: str) -> DivergenceSpec:
    return DivergenceSpec.hellinger() if name == "hellinger" else DivergenceSpec.tv()


def build_setup(cfg: RunConfig) -> RunSetup:
    try:
        env = env_from_config(cfg.env)
    except (KeyError, ValueError) as e:
        raise ConfigError("env", str(e)) from None
    if cfg.T < env.K:
        raise ConfigError("T", f"must be at least the number of actions ({env.K})")
    spec = _divergence(cfg.divergence)
    pin = SafePin(env.safe_action, env.c0, tuple(range(env.n_contexts)))
    try:
        F = class_from_config(cfg.utility_class)
        G = class_from_config(cfg.constraint_class)
    except (KeyError, ValueError) as e:
        raise ConfigError("utility_class/constraint_class", str(e)) from None
    T1 = dataclasses.replace(env.T1, divergence=spec, lipschitz=_lipschitz(env.T1, spec))
    T2 = dataclasses.replace(env.T2, divergence=spec, lipschitz=_lipschitz(env.T2, spec))
    if cfg.oracle == "mle":
        if not (isinstance(F, FiniteDensityClass) and isinstance(G, FiniteDensityClass)):
            raise ConfigError("oracle", "the MLE oracle needs finite classes")
        U = FiniteClassLearner(F, T1, spec)
        Gl = FiniteClassLearner(G, T2, spec, safe_pin=pin)
    else:
        if not (isinstance(F, GaussianLinearClass) and isinstance(G, GaussianLinearClass)):
            raise ConfigError("oracle", "the least-squares oracle needs Gaussian-linear classes")
        U = GaussianLSLearner(F, T1, env.K)
        Gl = GaussianLSLearner(G, T2, env.K, safe_pin=pin)
    bp = dict(cfg.beta_params)
    L1 = float(bp.get("L1", T1.lipschitz))
    K, delta = env.K, cfg.delta
    if cfg.beta_mode == "finite":
        card = len(F)

        def schedule(t):
            return beta_finite(card, t, delta, L1, U.est(t, delta), K)
    else:
        box = F.theta_set if isinstance(F, GaussianLinearClass) and isinstance(F.theta_set, ThetaBox) else None
        d = int(bp.get("d", F.dim if hasattr(F, "dim") else 1))
        diam = float(bp.get("diam", box.diameter if box is not None else 2.0))
        L2 = float(bp.get("L2", F.divergence_lipschitz if hasattr(F, "divergence_lipschitz") else 1.0))
        L_D = float(bp.get("L_D", 1.0))

        def schedule(t):
            return beta_covering(d, diam, L2, L_D, t, delta, L1, U.est(t, delta), K)

    params = PolicyParams(K, env.safe_action, env.r0, env.c0, env.tau, delta, schedule,
                          simplex_resolution=cfg.m)
    dim = cfg.dim_upper if cfg.dim_upper is not None else finite_space_bound(env.n_contexts, env.K)
    return RunSetup(env, params, U, Gl, float(dim), 1.0)


def _lipschitz(T, spec):
    if T.kind in (FunctionalKind.MEAN, FunctionalKind.NEG_MEAN):
        return _mean_lipschitz(spec)
    return T.lipschitz


def rng_streams(seed: int) -> dict:
    """Independent PCG64 streams for environment noise, policy sampling and counterfactual sampling."""
    env_ss, pol_ss, cf_ss = np.random.SeedSequence(seed).spawn(3)
    return {
        "env": np.random.Generator(np.random.PCG64(env_ss)),
        "policy": np.random.Generator(np.random.PCG64(pol_ss)),
        "counterfactual": np.random.Generator(np.random.PCG64(cf_ss)),
    }


# ---------------------------------------------------------------------------
# single run
# ---------------------------------------------------------------------------


@dataclass
class RunSummary:
    seed: int
    config_hash: str
    T: int
    K: int
    cum_regret: np.ndarray
    violations_post_warmup: int
    violations_total: int
    margins: dict
    wall_time: float
    csv_text: str = ""
    optimism_failures: int = 0

    @property
    def lemmas_ok(self) -> bool:
        return all(m["lhs"] <= m["rhs"] for m in self.margins.values())

    def to_json(self) -> str:
        """Deterministic record (wall time is left out so replays compare equal)."""
        d = {
            "schema": SCHEMA,
            "seed": self.seed,
            "config_hash": self.config_hash,
            "T": self.T,
            "K": self.K,
            "violations_post_warmup": self.violations_post_warmup,
            "violations_total": self.violations_total,
            "margins": self.margins,
            "cum_regret": [float(v) for v in self.cum_regret],
        }
        return json.dumps(d, indent=1, sort_keys=True) + "\n"


def _fmt(v) -> str:
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return format(float(v), ".17g")


def run_one(cfg: RunConfig, seed: int | None = None, out_dir=None, check_optimism: bool = False) -> RunSummary:
    """Warm-up then the full algorithm for ``cfg.T`` rounds.

    Returns the summary (with the trajectory CSV in ``csv_text``) and, when
    ``out_dir`` is given, writes ``run_<seed>.csv`` and ``run_<seed>.json``.
    """
    seed = cfg.seed if seed is None else int(seed)
    t0 = time.perf_counter()
    s = build_setup(cfg)
    env, params = s.env, s.params
    rngs = rng_streams(seed)
    engine = GEDUCB(params, s.utility_learner, s.constraint_learner, n_contexts=env.n_contexts,
                    keep_log=check_optimism, horizon=cfg.T)
    grid = SimplexGrid(env.K, cfg.m)
    opt = [optimal_feasible_policy(env, x, grid) for x in range(env.n_contexts)]
    ledger = RegretLedger(env.tau)
    rows, omegas, radii, actions = [], [], [], []
    optimism_failures = 0
    Gl = s.constraint_learner
    for t in range(1, cfg.T + 1):
        engine.prepare_round(t)
        x = env.sample_context(rngs["env"])
        pi, log = engine.choose(t, x, rngs["counterfactual"])
        res = step(env, x, pi, rngs["policy"], rngs["env"], ledger, t, opt[x][1])
        snap = engine.snaps_g[t]
        omega = math.sqrt(Gl.amplitude_sq(snap.members, x, res.action))
        if check_optimism and t > env.K:
            optimism_failures += _optimism_failure(engine, t, x, pi, opt[x][0], log)
        omegas.append(omega)
        radii.append(snap.radius)
        actions.append(res.action)
        rows.append((t, x, res.action, res.y, res.z, res.regret_inc, ledger.cumulative[-1],
                     0 if res.violated else 1, params.beta(t), len(snap.members), omega))
        engine.observe(x, res.action, res.y, res.z)
    margins = _margins(actions, omegas, radii, env.K, cfg.T, cfg.lemma_eps, s.dim_upper, s.cap)
    header = {
        "schema": SCHEMA, "config_hash": cfg.hash(), "seed": seed, "K": env.K, "n_contexts": env.n_contexts,
        "radius_T": _fmt(radii[-1]), "dim_upper": _fmt(s.dim_upper), "cap": _fmt(s.cap), "lemma_eps": _fmt(cfg.lemma_eps),
    }
    csv_text = "".join(f"# {k}={v}\n" if k != "schema" else f"# {v}\n" for k, v in header.items())
    csv_text += ",".join(CSV_COLUMNS) + "\n"
    csv_text += "".join(",".join(_fmt(v) for v in r) + "\n" for r in rows)
    summary = RunSummary(seed, cfg.hash(), cfg.T, env.K, np.array(ledger.cumulative),
                         ledger.violations_after(env.K), ledger.violation_count, margins,
                         time.perf_counter() - t0, csv_text, optimism_failures)
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / f"run_{seed}.csv").write_text(csv_text)
        (out / f"run_{seed}.json").write_text(summary.to_json())
    return summary


def _optimism_failure(engine: GEDUCB, t: int, x, pi, pi_star, log) -> int:
    """1 if ``pi*`` lies in the estimated feasible set yet the selected policy's total falls below its fitted utility."""
    u = engine.U.values(engine.snaps_u[t].center, x)
    members = engine.snaps_g[t].members
    C = engine.G.member_values(members, x) if len(members) else np.zeros((0, engine.K))
    if len(C) == 0 or (C @ pi_star).max() > engine.p.tau + 1e-12:
        return 0
    counts = np.bincount(log["actions"][:-1], minlength=engine.K).astype(float)
    total = ucb_score(pi, u, counts, engine.betas[t], engine.p.alpha_r, C).total
    return int(total < float(pi_star @ u) - 1e-9)


def _margins(actions, omegas, radii, K, T, eps, dim, cap) -> dict:
    pot = check_potential_lemma(actions, K) if T >= K else (0.0, 0.0)
    l1 = check_lemma_pded1(omegas, radii, eps, dim)
    l2 = check_lemma_pded2(omegas, radii[-1], T, dim, cap, radii)
    return {
        "potential": {"lhs": pot[0], "rhs": pot[1]},
        "pded1": {"lhs": l1[0], "rhs": l1[1]},
        "pded2": {"lhs": l2[0], "rhs": l2[1]},
    }


def lemma_report_from_csv(text: str) -> dict:
    """Re-check the three trajectory lemmas from a written CSV."""
    meta, lines = {}, []
    for line in text.splitlines():
        if line.startswith("#"):
            body = line[1:].strip()
            if "=" in body:
                k, v = body.split("=", 1)
                meta[k] = v
            else:
                meta["schema"] = body
        elif line.strip():
            lines.append(line)
    if meta.get("schema") != SCHEMA:
        raise ValueError(f"unsupported trajectory schema {meta.get('schema')!r}")
    cols = lines[0].split(",")
    if tuple(cols) != CSV_COLUMNS:
        raise ValueError("unexpected trajectory columns")
    data = [dict(zip(cols, ln.split(","))) for ln in lines[1:]]
    actions = [int(r["action"]) for r in data]
    omegas = [float(r["omega_t"]) for r in data]
    K = int(meta["K"])
    T = len(data)
    r_T = float(meta["radius_T"])
    return _margins(actions, omegas, [r_T], K, T, float(meta["lemma_eps"]), float(meta["dim_upper"]),
                    float(meta["cap"]))


# ---------------------------------------------------------------------------
# sweeps
# ---------------------------------------------------------------------------


def wilson_interval(successes: int, n: int, z: float = WILSON_Z) -> tuple[float, float]:
    if n < 1:
        raise ValueError("need at least one trial")
    p = successes / n
    denom = 1 + z * z / n
    centre = (p + z * z / (2 * n)) / denom
    half = z * math.sqrt(p * (1 - p) / n + z * z / (4 * n * n)) / denom
    return max(0.0, centre - half), min(1.0, centre + half)


def regret_bound_rhs(beta_T: float, K: int, T: int, alpha_r: float, dim: float, cap: float = 1.0) -> float:
    """Order-level regret bound with every hidden constant set to one."""
    return (2 * beta_T * (K + math.log(T / K)) + 2 * K * beta_T * math.log(T)
            + alpha_r * (1 / T + cap * min(T, dim) + 4 * math.sqrt(dim * T)))


@dataclass
class SweepReport:
    summaries: list
    violation_fraction: float
    violation_wilson: tuple
    checkpoints: dict
    bound_ratio: float
    lemmas_ok: bool
    delta: float

    @property
    def feasibility_ok(self) -> bool:
        return self.violation_wilson[0] <= self.delta

    @property
    def gates_ok(self) -> bool:
        return self.feasibility_ok and self.lemmas_ok

    def to_json(self) -> str:
        d = {
            "schema": SCHEMA,
            "n_runs": len(self.summaries),
            "seeds": [s.seed for s in self.summaries],
            "violation_fraction": self.violation_fraction,
            "violation_wilson95": list(self.violation_wilson),
            "checkpoints": self.checkpoints,
            "bound_ratio": self.bound_ratio,
            "lemmas_ok": self.lemmas_ok,
            "feasibility_ok": self.feasibility_ok,
        }
        return json.dumps(d, indent=1, sort_keys=True) + "\n"


def _run_seed(args):
    cfg_dict, seed = args
    s = run_one(RunConfig.from_dict(cfg_dict), seed)
    s.csv_text = ""
    return s


def thread_count() -> int:
    try:
        return max(1, int(os.environ.get("GEDLAB_THREADS", "1")))
    except ValueError:
        return 1


def run_sweep(cfg: RunConfig, seeds, out_dir=None, threads: int | None = None) -> SweepReport:
    seeds = [int(s) for s in seeds]
    if not seeds:
        raise ValueError("a sweep needs at least one seed")
    threads = thread_count() if threads is None else threads
    jobs = [(cfg.to_dict(), s) for s in seeds]
    if threads > 1:
        with concurrent.futures.ProcessPoolExecutor(max_workers=threads) as ex:
            summaries = list(ex.map(_run_seed, jobs))
    else:
        summaries = [_run_seed(j) for j in jobs]
    setup = build_setup(cfg)
    K, T = setup.env.K, cfg.T
    bad = sum(1 for s in summaries if s.violations_post_warmup > 0)
    n = len(summaries)
    curves = np.stack([s.cum_regret for s in summaries])
    checkpoints = {}
    for t in sorted({max(1, T // 4), max(1, T // 2), T}):
        col = curves[:, t - 1]
        se = float(col.std(ddof=1) / math.sqrt(n)) if n > 1 else 0.0
        checkpoints[str(t)] = {"mean": float(col.mean()), "stderr": se, "per_round": float(col.mean() / t)}
    rhs = regret_bound_rhs(setup.params.beta(T), K, T, setup.params.alpha_r, setup.dim_upper, setup.cap)
    report = SweepReport(summaries, bad / n, wilson_interval(bad, n), checkpoints, float(curves[:, -1].mean() / rhs),
                         all(s.lemmas_ok for s in summaries), cfg.delta)
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        for s in summaries:
            (out / f"run_{s.seed}.json").write_text(s.to_json())
        (out / "sweep.json").write_text(report.to_json())
    return report


# ---------------------------------------------------------------------------
# plots
# ---------------------------------------------------------------------------

PLOT_SCRIPT = '''"""Plot cumulative regret curves from regret_curves.csv (written by gedlab)."""
import csv
import sys
from collections import defaultdict

import matplotlib.pyplot as plt

curves = defaultdict(list)
with open(sys.argv[1] if len(sys.argv) > 1 else "regret_curves.csv") as fh:
    for row in csv.DictReader(fh):
        curves[row["run"]].append((int(row["t"]), float(row["cum_regret"])))
fig, ax = plt.subplots(figsize=(6, 4))
for run, pts in sorted(curves.items()):
    ax.plot([p[0] for p in pts], [p[1] for p in pts], label=run)
ax.set_xlabel("round t")
ax.set_ylabel("cumulative regret")
ax.legend(fontsize="small")
fig.tight_layout()
fig.savefig("regret_curves.png", dpi=150)
'''


def emit_plots(summary_files, out_dir) -> dict:
    """Write a tidy ``regret_curves.csv``, a plotting script and a manifest; nothing is rendered."""
    paths = [Path(p) for p in summary_files]
    missing = [str(p) for p in paths if not p.exists()]
    if missing:
        raise FileNotFoundError("missing summary files: " + ", ".join(missing))
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    manifest = {"schema": SCHEMA, "runs": [], "figures": []}
    lines = ["run,t,cum_regret\n"]
    for p in paths:
        d = json.loads(p.read_text())
        name = f"{d['config_hash']}:{d['seed']}"
        manifest["runs"].append({"name": name, "file": p.name})
        lines += [f"{name},{t},{_fmt(v)}\n" for t, v in enumerate(d["cum_regret"], start=1)]
    if paths:
        (out / "regret_curves.csv").write_text("".join(lines))
        (out / "plot_regret.py").write_text(PLOT_SCRIPT)
        manifest["figures"].append({"script": "plot_regret.py", "data": "regret_curves.csv",
                                    "series": [r["name"] for r in manifest["runs"]]})
    (out / "manifest.json").write_text(json.dumps(manifest, indent=1, sort_keys=True) + "\n")
    return manifest


# ---------------------------------------------------------------------------
# oracle coverage experiments
# ---------------------------------------------------------------------------


@dataclass
class CoverageReport:
    kind: str
    covered: int
    trials: int
    budget: float
    worst: float

    @property
    def coverage(self) -> float:
        return self.covered / self.trials

    @property
    def wilson(self) -> tuple[float, float]:
        return wilson_interval(self.covered, self.trials)


def mle_coverage(trials: int = 500, card: int = 8, n: int = 50, delta: float = 0.1, n_contexts: int = 4,
                 n_actions: int = 3, seed: int = 0) -> CoverageReport:
    """How often the fitted member's summed squared Hellinger error stays within ``log(|F|/delta)``.

    Each trial draws a fresh Bernoulli class (means uniform on [0.05, 0.95]),
    a true member, ``n`` uniform context-action pairs and outcomes.
    """
    rng = np.random.Generator(np.random.PCG64(seed))
    budget = mle_est(card, delta)
    covered, worst = 0, 0.0
    for _ in range(trials):
        means = rng.uniform(0.05, 0.95, size=(card, n_contexts, n_actions))
        cls = FiniteDensityClass.bernoulli(means)
        star = int(rng.integers(card))
        xs = rng.integers(n_contexts, size=n)
        as_ = rng.integers(n_actions, size=n)
        ys = (rng.random(n) < means[star, xs, as_]).astype(float)
        data = Dataset(list(zip(xs.tolist(), as_.tolist(), ys.tolist())))
        hat, _ = mle_fit(cls, data, delta)
        err = float(hellinger_sq_table(cls.probs[hat, xs, as_], cls.probs[star, xs, as_]).sum())
        covered += err <= budget
        worst = max(worst, err)
    return CoverageReport("mle", covered, trials, budget, worst)


def ls_coverage(trials: int = 500, d: int = 3, n: int = 100, sigma: float = 1.0, delta: float = 0.1,
                seed: int = 0) -> CoverageReport:
    """How often least squares keeps ``sum_i D_H^2(f*, f_hat)`` within the pinned Hellinger budget.

    Features are uniform in the unit ball and ``theta*`` uniform in the unit ball.
    """
    rng = np.random.Generator(np.random.PCG64(seed))
    budget = ls_hellinger_budget(d, delta)
    covered, worst = 0, 0.0

    def ball(k):
        v = rng.standard_normal((k, d))
        v /= np.linalg.norm(v, axis=1, keepdims=True)
        return v * rng.random((k, 1)) ** (1.0 / d)

    for _ in range(trials):
        X = ball(n)
        theta = ball(1)[0]
        y = X @ theta + sigma * rng.standard_normal(n)
        cls = GaussianLinearClass(FeatureMap(d, table=X[:, None, :]), sigma)
        hat, _ = least_squares_fit(cls, Dataset([(i, 0, float(v)) for i, v in enumerate(y)]), delta)
        z = X @ (hat - theta)
        err = float((-np.expm1(-z * z / (8 * sigma**2))).sum())
        covered += err <= budget
        worst = max(worst, err)
    return CoverageReport("ls", covered, trials, budget, worst)
