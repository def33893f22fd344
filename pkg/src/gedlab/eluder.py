"""Generalized eluder dimension: dependence tests, greedy certificates, closed-form bounds.

Dependence is tested exhaustively over a finite grid of candidate models, so a
greedy certificate is a lower bound on the dimension of the discretized class.
"""

from __future__ import annotations

import enum
import hashlib
import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from gedlab.divergence import DivergenceSpec, DomainError
from gedlab.models import ExpFamilyClass, FiniteDensityClass, GaussianLinearClass, LinearMixtureClass
from gedlab.oracle import ConfidenceSet

E_FACTOR = math.e / (math.e - 1.0)


class EluderError(ValueError):
    pass


class LemmaPreconditionError(ValueError):
    pass


# ---------------------------------------------------------------------------
# model-pair grids
# ---------------------------------------------------------------------------


class ModelPairGrid:
    """A finite set of candidate models seen only through their pairwise squared divergences.

    ``pair_sq(point)`` returns the symmetric ``[n, n]`` matrix of
    ``D^2(g_i, g_j)`` at a context-action point.  ``label`` should describe the
    candidates well enough that two grids with the same label are the same
    grid; it is hashed into certificates.
    """

    def __init__(self, n_candidates: int, pair_sq: Callable, label: str):
        if n_candidates < 1:
            raise EluderError("the grid needs at least one candidate")
        self.n = int(n_candidates)
        self._pair_sq = pair_sq
        self.label = label
        self._cache: dict = {}
        iu = np.triu_indices(self.n, k=1)
        self._iu = iu

    def pair_sq(self, point) -> np.ndarray:
        key = _point_key(point)
        if key not in self._cache:
            self._cache[key] = np.asarray(self._pair_sq(point), float)
        return self._cache[key]

    def pair_vector(self, point) -> np.ndarray:
        """Upper-triangle entries of :meth:`pair_sq`, one per unordered pair."""
        return self.pair_sq(point)[self._iu]

    @property
    def hash(self) -> str:
        return hashlib.sha256(self.label.encode()).hexdigest()[:16]

    @classmethod
    def from_finite_class(cls, fc: FiniteDensityClass, spec: DivergenceSpec | None = None) -> "ModelPairGrid":
        spec = spec or DivergenceSpec.hellinger()
        label = f"finite:{spec.kind.value}:{np.round(fc.probs, 15).tobytes().hex() if fc.is_table else id(fc)}"
        return cls(len(fc), lambda p: fc.pairwise_sq(p[0], p[1], spec), label)

    @classmethod
    def from_gaussian(cls, gc: GaussianLinearClass, thetas: np.ndarray) -> "ModelPairGrid":
        """Hellinger (unsquared) geometry: ``D^2 = 1 - exp(-(phi^T dtheta)^2 / (8 sigma^2))``."""
        thetas = np.atleast_2d(np.asarray(thetas, float))

        def pair(p):
            z = thetas @ gc.features(p[0], p[1])
            dz = z[:, None] - z[None, :]
            return -np.expm1(-dz * dz / (8 * gc.sigma**2))

        return cls(len(thetas), pair, f"gaussian:{gc.sigma}:{thetas.tobytes().hex()}")

    @classmethod
    def from_linear_mixture(cls, lc: LinearMixtureClass, thetas: np.ndarray) -> "ModelPairGrid":
        """L2 geometry: ``D^2 = dtheta^T M dtheta`` with the basis Gram matrix ``M``."""
        thetas = np.atleast_2d(np.asarray(thetas, float))

        def pair(p):
            M = lc.gram(p[0], p[1])
            q = np.einsum("id,de,ie->i", thetas, M, thetas)
            cross = thetas @ M @ thetas.T
            return np.maximum(q[:, None] + q[None, :] - 2 * cross, 0.0)

        return cls(len(thetas), pair, f"linear:{thetas.tobytes().hex()}")

    @classmethod
    def from_expfam(cls, ec: ExpFamilyClass, ws: np.ndarray) -> "ModelPairGrid":
        ws = np.atleast_2d(np.asarray(ws, float))

        def pair(p):
            eta = ws @ ec.features(p[0], p[1])
            return ec.family.hellinger_sq(eta[:, None], eta[None, :])

        return cls(len(ws), pair, f"expfam:{ec.family.name}:{ws.tobytes().hex()}")


def _point_key(point):
    if isinstance(point, np.ndarray):
        return ("arr", point.tobytes())
    return tuple(point) if isinstance(point, (list, tuple)) else point


# ---------------------------------------------------------------------------
# dependence and greedy certificates
# ---------------------------------------------------------------------------


class CertificateKind(str, enum.Enum):
    LOWER_BOUND_GREEDY = "LowerBoundGreedy"
    UPPER_BOUND_CLOSED_FORM = "UpperBoundClosedForm"


@dataclass(frozen=True)
class EluderCertificate:
    epsilon: float
    sequence: tuple
    kind: CertificateKind
    grid_hash: str = ""
    value: float | None = None

    def __len__(self) -> int:
        return len(self.sequence)

    def to_text(self) -> str:
        seq = ";".join(",".join(str(v) for v in p) for p in self.sequence)
        lines = [
            "gedlab-eluder-certificate v1",
            f"kind={self.kind.value}",
            f"grid={self.grid_hash}",
            f"eps={self.epsilon!r}",
            f"length={len(self.sequence)}",
            f"sequence={seq}",
        ]
        if self.value is not None:
            lines.append(f"value={self.value!r}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "EluderCertificate":
        fields = dict(line.split("=", 1) for line in text.strip().splitlines()[1:])
        seq = tuple(tuple(int(v) for v in p.split(",")) for p in fields["sequence"].split(";") if p)
        if int(fields["length"]) != len(seq):
            raise EluderError("certificate length does not match its sequence")
        value = float(fields["value"]) if "value" in fields else None
        return cls(float(fields["eps"]), seq, CertificateKind(fields["kind"]), fields["grid"], value)


def is_eps_dependent(grid: ModelPairGrid, history: Sequence, candidate, eps: float) -> bool:
    """True iff no pair has ``sum_history D^2 <= eps^2`` while ``D^2(candidate) > eps^2``."""
    if not eps > 0:
        raise DomainError("eps must be positive")
    e2 = eps * eps
    S = np.zeros((grid.n, grid.n))
    for h in history:
        S = S + grid.pair_sq(h)
    C = grid.pair_sq(candidate)
    return not bool(np.any((S <= e2) & (C > e2)))


def eluder_dim_greedy(grid: ModelPairGrid, point_pool: Sequence, eps: float) -> EluderCertificate:
    """Repeatedly append the first pool point that is eps-independent of the sequence so far.

    Only pairs whose accumulated squared divergence is still within ``eps^2``
    can witness independence, so the scan tracks that shrinking set.
    """
    if not eps > 0:
        raise DomainError("eps must be positive")
    e2 = eps * eps
    pool = list(point_pool)
    seq: list = []
    if grid.n < 2 or not pool:
        return EluderCertificate(eps, (), CertificateKind.LOWER_BOUND_GREEDY, grid.hash)
    V = np.stack([grid.pair_vector(p) for p in pool])  # [pool, pairs]
    S = np.zeros(V.shape[1])
    while True:
        alive = S <= e2
        if not alive.any():
            break
        hits = (V[:, alive] > e2).any(axis=1)
        idx = np.flatnonzero(hits)
        if idx.size == 0:
            break
        j = int(idx[0])
        seq.append(pool[j])
        S = S + V[j]
    return EluderCertificate(eps, tuple(_plain(p) for p in seq), CertificateKind.LOWER_BOUND_GREEDY, grid.hash)


def _intersect(a: list, b: list) -> list:
    """Intersection of two sorted unions of disjoint half-open intervals ``[l, r)``."""
    out, i, j = [], 0, 0
    while i < len(a) and j < len(b):
        lo, hi = max(a[i][0], b[j][0]), min(a[i][1], b[j][1])
        if lo < hi:
            out.append((lo, hi))
        if a[i][1] < b[j][1]:
            i += 1
        else:
            j += 1
    return out


def _union(intervals) -> list:
    out: list = []
    for lo, hi in sorted(iv for iv in intervals if iv[0] < iv[1]):
        if out and lo <= out[-1][1]:
            out[-1] = (out[-1][0], max(out[-1][1], hi))
        else:
            out.append((lo, hi))
    return out


def eluder_dim_exact(grid: ModelPairGrid, point_pool: Sequence, eps: float,
                     max_pool: int = 12) -> tuple[tuple, float | None]:
    """Longest sequence of pool points, each eps'-independent of its prefix for one common ``eps' >= eps``.

    Element ``k`` is independent at level ``e = eps'^2`` iff some pair has
    ``S_k <= e < V_k`` (prefix sum ``S_k``, value ``V_k``), so the admissible
    levels form a union of half-open intervals that shrinks along the
    sequence.  Repeats never help.  Exhaustive search; small pools only.
    Returns ``(sequence, eps')`` with ``eps'`` the smallest admissible level.
    """
    if not eps > 0:
        raise DomainError("eps must be positive")
    pool = list(point_pool)
    if len(pool) > max_pool:
        raise EluderError(f"exact search is limited to {max_pool} pool points")
    if grid.n < 2 or not pool:
        return (), None
    V = np.stack([grid.pair_vector(p) for p in pool])
    best: tuple = ([], None)

    def extend(seq, used, S, levels):
        nonlocal best
        if len(seq) > len(best[0]):
            best = (list(seq), levels[0])
        if len(pool) <= len(best[0]):
            return
        for j in range(len(pool)):
            if used[j]:
                continue
            nxt = _intersect(levels, _union(zip(S, V[j])))
            if not nxt:
                continue
            used[j] = True
            seq.append(j)
            extend(seq, used, S + V[j], nxt)
            seq.pop()
            used[j] = False

    extend([], [False] * len(pool), np.zeros(V.shape[1]), [(eps * eps, math.inf)])
    seq, interval = best
    if not seq:
        return (), None
    # smallest float whose square re-enters [lo, hi) after rounding
    lo = interval[0]
    level = max(math.sqrt(lo), eps)
    while level * level < lo:
        level = math.nextafter(level, math.inf)
    return tuple(_plain(pool[j]) for j in seq), level


def _plain(p):
    return tuple(int(v) if isinstance(v, (np.integer,)) else v for v in p) if isinstance(p, (tuple, list)) else p


def verify_certificate(grid: ModelPairGrid, cert: EluderCertificate) -> bool:
    """Replay: every element must be eps-independent of its prefix."""
    if cert.grid_hash and cert.grid_hash != grid.hash:
        return False
    seq = list(cert.sequence)
    return all(not is_eps_dependent(grid, seq[:k], seq[k], cert.epsilon) for k in range(len(seq)))


# ---------------------------------------------------------------------------
# amplitude
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Amplitude:
    omega: float
    witnesses: tuple


def amplitude(conf: ConfidenceSet, x, a, divergence: DivergenceSpec | None = None) -> Amplitude:
    """Largest divergence between two members of ``conf`` at ``(x, a)`` (exact over all pairs)."""
    divergence = divergence or DivergenceSpec.hellinger()
    if len(conf) == 0:
        raise EluderError("amplitude of an empty set")
    if len(conf) == 1:
        return Amplitude(0.0, (0, 0))
    cls = conf.candidates
    if isinstance(cls, FiniteDensityClass):
        P = cls.pairwise_sq(x, a, divergence)[np.ix_(conf.members, conf.members)]
    elif isinstance(cls, GaussianLinearClass):
        P = ModelPairGrid.from_gaussian(cls, conf.members).pair_sq((x, a))
        if divergence.kind.value == "hellinger_sq":
            P = P * P
    else:
        raise EluderError(f"no amplitude for {type(cls).__name__}")
    i, j = np.unravel_index(int(np.argmax(P)), P.shape)
    return Amplitude(math.sqrt(max(float(P[i, j]), 0.0)), (int(i), int(j)))


# ---------------------------------------------------------------------------
# closed-form bounds
# ---------------------------------------------------------------------------


def _positive(**kw) -> None:
    for k, v in kw.items():
        if not v > 0:
            raise DomainError(f"{k} must be positive")


def linear_bound_terms(R: float, S: float, alpha: float, eps: float) -> tuple[float, float, float]:
    """``(prefactor, scale_term, ratio_term)``; the bound is ``prefactor * e/(e-1) * (scale_term + ratio_term)``."""
    _positive(R=R, S=S, eps=eps)
    if not 0.5 < alpha <= 1.0:
        raise DomainError("alpha must lie in (1/2, 1]")
    x = 3 * alpha - 2 * alpha**2
    if not x > 1:
        raise DomainError("need 3 alpha - 2 alpha^2 > 1")
    pre = x / (x - 1)
    scale = math.log1p(8 * R**2 * S**2 * (1 / alpha - 1) / ((2 - 1 / alpha) * eps**2))
    return pre, scale, math.log(pre)


def bound_linear(R: float, S: float, alpha: float, eps: float) -> float:
    pre, scale, ratio = linear_bound_terms(R, S, alpha, eps)
    return pre * E_FACTOR * (scale + ratio)


def bound_gaussian(delta_bar: float, d: int, eps: float) -> float:
    _positive(delta_bar=delta_bar, eps=eps)
    if d < 1:
        raise DomainError("d must be >= 1")
    k = 1 + 2 * delta_bar
    return d * k * E_FACTOR * (math.log1p(4 / eps**2) + math.log(k)) + 1


def gaussian_delta_bar(sigma_lo: float) -> float:
    """Hellinger-squared to squared-mean-gap ratio for equal-sigma Gaussians."""
    _positive(sigma_lo=sigma_lo)
    return 1.0 / (8 * sigma_lo**2)


def bound_expfam(beta: float, lambda_lo: float, c: float, d: int, eps: float) -> float:
    _positive(beta=beta, lambda_lo=lambda_lo, c=c, eps=eps)
    if d < 1:
        raise DomainError("d must be >= 1")
    k = 1 + math.sqrt(0.5 + 8 / (c * lambda_lo))
    return d * (k * E_FACTOR * math.log1p(2 * beta / (0.5 * eps**2)) + math.log(k)) + 1


def finite_space_bound(n_contexts: int, n_actions: int) -> int:
    return int(n_contexts) * int(n_actions)


def closed_form_certificate(value: float, eps: float, grid_hash: str = "") -> EluderCertificate:
    return EluderCertificate(eps, (), CertificateKind.UPPER_BOUND_CLOSED_FORM, grid_hash, float(value))


# ---------------------------------------------------------------------------
# structural lemmas
# ---------------------------------------------------------------------------


def check_lemma_pded1(omegas: Sequence[float], radii: Sequence[float], eps: float, dim_upper: float) -> tuple[float, float]:
    """``(sum 1{omega_t > eps}, (4 sqrt(r_T) / eps + 1) * dim)``."""
    if not eps > 0:
        raise DomainError("eps must be positive")
    r = np.asarray(radii, float)
    if r.size and np.any(np.diff(r) < 0):
        raise LemmaPreconditionError("confidence radii must be nondecreasing")
    r_T = float(r[-1]) if r.size else 0.0
    lhs = float(np.count_nonzero(np.asarray(omegas, float) > eps))
    return lhs, (4 * math.sqrt(r_T) / eps + 1) * dim_upper


def check_lemma_pded2(omegas: Sequence[float], r_T: float, T: int, dim_upper: float, cap: float = 1.0,
                      radii: Sequence[float] | None = None) -> tuple[float, float]:
    """``(sum omega_t, 1/T + C min(dim, T) + 4 sqrt(dim r_T T))``."""
    if radii is not None and np.any(np.diff(np.asarray(radii, float)) < 0):
        raise LemmaPreconditionError("confidence radii must be nondecreasing")
    if T < 1 or r_T < 0:
        raise DomainError("need T >= 1 and r_T >= 0")
    lhs = float(np.sum(np.asarray(omegas, float)))
    return lhs, 1.0 / T + cap * min(dim_upper, T) + 4 * math.sqrt(dim_upper * r_T * T)
