"""Detection tests for a planted clique, one per temperature regime.

Every test reduces a batch of observations to one statistic and compares
it with a threshold placed inside an admissible interval,
``tau = low + delta * (high - low)``.  Rejection is ``statistic >= tau``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.special import gamma
from scipy.stats import norm

from . import _kernels
from .meanfield import DEFAULT_RULE, RegimeError, solve_mean_field
from .model import ModelParams
from .variance import var_critical, var_small_high

SCAN_BUDGET = 2_000_000
LARGE_CLIQUE_FRACTION = 0.25
REGIMES = ("high", "low", "critical", "large")


@dataclass(frozen=True)
class TestDecision:
    test_name: str
    statistic: float
    threshold: float
    threshold_interval: tuple[float, float]
    reject: bool
    branch: str
    exact_scan: bool | None = None
    subset: tuple[int, ...] | None = None

    def to_dict(self) -> dict:
        return {
            "test_name": self.test_name,
            "statistic": self.statistic,
            "threshold": self.threshold,
            "threshold_interval": list(self.threshold_interval),
            "reject": self.reject,
            "branch": self.branch,
            "exact_scan": self.exact_scan,
            "subset": None if self.subset is None else list(self.subset),
        }


@dataclass(frozen=True)
class ScanResult:
    subset: np.ndarray
    value: float
    exact: bool


def _configs(batch) -> np.ndarray:
    X = getattr(batch, "configs", batch)
    X = np.asarray(X)
    if X.ndim != 2:
        raise ValueError("expected an (m, n) array of spins")
    return X.astype(np.float64)


def empirical_correlation(batch) -> np.ndarray:
    X = _configs(batch)
    return X.T @ X / X.shape[0]


# ---------------------------------------------------------------------------
# subset scans


def _initial_subset(E, k):
    rs = E.sum(axis=1)
    order = np.lexsort((np.arange(E.shape[0]), -rs))
    return np.sort(order[:k])


def _seed_subsets(E, k, score, n_keep=3):
    """Candidate starts: top-k by row sum, and each row i with its k-1 strongest partners."""
    n = E.shape[0]
    cands = [_initial_subset(E, k)]
    F = E.copy()
    np.fill_diagonal(F, np.inf)
    idx = np.arange(n)
    for i in range(n):
        order = np.lexsort((idx, -F[i]))
        cands.append(np.sort(order[:k]))
    vals = np.array([score(S) for S in cands])
    keep = np.lexsort((np.arange(len(cands)), -vals))[:n_keep]
    return [cands[j] for j in keep]


def _swap_ascent_quadratic(E, S, max_rounds):
    n = E.shape[0]
    inS = np.zeros(n, dtype=bool)
    inS[S] = True
    d = np.diag(E)
    for _ in range(max_rounds):
        ins = np.nonzero(inS)[0]
        outs = np.nonzero(~inS)[0]
        if outs.size == 0:
            break
        r = E[:, ins].sum(axis=1)
        gain = (-2 * r[ins] + d[ins])[:, None] + (2 * r[outs] + d[outs])[None, :] - 2 * E[np.ix_(ins, outs)]
        a, b = np.unravel_index(int(np.argmax(gain)), gain.shape)
        if gain[a, b] <= 1e-12 * max(1.0, abs(E).max()):
            break
        inS[ins[a]] = False
        inS[outs[b]] = True
    return np.nonzero(inS)[0]


def _swap_ascent_abs(X, S, max_rounds):
    m, n = X.shape
    inS = np.zeros(n, dtype=bool)
    inS[S] = True
    for _ in range(max_rounds):
        ins = np.nonzero(inS)[0]
        outs = np.nonzero(~inS)[0]
        if outs.size == 0:
            break
        u = X[:, ins].sum(axis=1)
        cur = np.abs(u).sum()
        # (k, n-k, m) candidate sums after swapping ins[a] for outs[b]
        cand = u[None, None, :] - X[:, ins].T[:, None, :] + X[:, outs].T[None, :, :]
        val = np.abs(cand).sum(axis=2)
        a, b = np.unravel_index(int(np.argmax(val)), val.shape)
        if val[a, b] <= cur + 1e-9:
            break
        inS[ins[a]] = False
        inS[outs[b]] = True
    return np.nonzero(inS)[0]


def _quadratic_value(E, S):
    return float(E[np.ix_(S, S)].sum())


def scan_statistic(batch, k: int, budget: int = SCAN_BUDGET, objective: str = "quadratic") -> ScanResult:
    """Best k-subset for ``objective``.

    quadratic: maximize (1/k) 1_S^T E 1_S with E the empirical correlation.
    abs: maximize (1/m) sum_l |(1/k) sum_{i in S} sigma_li|.
    Exhaustive (lexicographic ties) when C(n, k) <= budget, else greedy
    top-k by row sums followed by single-swap ascent.
    """
    X = _configs(batch)
    m, n = X.shape
    if not 1 <= k <= n:
        raise ValueError("need 1 <= k <= n")
    if objective not in ("quadratic", "abs"):
        raise ValueError("objective must be 'quadratic' or 'abs'")
    G = (X.T @ X).astype(np.float64)  # integer-valued, so kernel sums and ties are exact
    E = G / m
    exact = math.comb(n, k) <= budget
    if objective == "quadratic":
        score = lambda S: _quadratic_value(E, S)
        ascent = lambda S: _swap_ascent_quadratic(E, S, 10 * n)
        kernel = lambda: _kernels.scan_quadratic(G, k)
        norm_ = k
    else:
        score = lambda S: float(np.abs(X[:, S].sum(axis=1)).sum())
        ascent = lambda S: _swap_ascent_abs(X, S, 10 * n)
        kernel = lambda: _kernels.scan_abs(X, k)
        norm_ = m * k
    if exact:
        S, v = kernel()
        if objective == "quadratic":
            v = _quadratic_value(E, S)
        return ScanResult(np.sort(S), v / norm_, True)
    best_S, best_v = None, -np.inf
    for S0 in _seed_subsets(E, k, score):
        S = np.sort(ascent(S0))
        v = score(S)
        if v > best_v + 1e-12 or (abs(v - best_v) <= 1e-12 and tuple(S) < tuple(best_S)):
            best_S, best_v = S, v
    return ScanResult(best_S, best_v / norm_, False)


# ---------------------------------------------------------------------------
# population quantities the thresholds need (cached per parameter point)


@lru_cache(maxsize=256)
def small_clique_solution(theta, theta1, field, rule=DEFAULT_RULE):
    return solve_mean_field(0.0, theta, theta1, field, rule, check_at=False)


@lru_cache(maxsize=256)
def large_clique_solution(c, theta, theta1, field, rule=DEFAULT_RULE):
    return solve_mean_field(c, theta, theta1, field, rule, check_at=True)


def interpolate(low, high, delta) -> float:
    if not 0.0 < delta < 1.0:
        raise ValueError("delta must lie strictly inside (0, 1)")
    if not high > low:
        raise ValueError(f"empty threshold interval ({low:.6g}, {high:.6g}): test is vacuous here")
    return low + delta * (high - low)


def _decide(name, stat, low, high, delta, branch, scan=None):
    tau = interpolate(low, high, delta)
    return TestDecision(
        name,
        float(stat),
        float(tau),
        (float(low), float(high)),
        bool(stat >= tau),
        branch,
        None if scan is None else scan.exact,
        None if scan is None else tuple(int(i) for i in scan.subset),
    )


def _branch(branch, default):
    if branch is None or branch == "auto":
        return default
    if branch not in ("scan", "global"):
        raise ValueError("branch must be 'auto', 'scan' or 'global'")
    return branch


def high_temp_interval(params: ModelParams, branch: str | None = None) -> tuple[str, float, float]:
    sol = small_clique_solution(params.theta, params.theta1, params.field_dist)
    if sol.regime.name != "high":
        raise RegimeError(f"high-temperature test called in the {sol.regime} regime")
    n, k = params.n, params.k
    br = _branch(branch, "scan" if k**3 <= n**2 else "global")
    V = var_small_high(params.theta, params.theta1, sol.q_null, params.field_dist)
    return (br, 0.0, V) if br == "scan" else (br, 0.0, V - 1.0)


def high_temp_test(batch, params: ModelParams, delta: float = 0.5, branch: str | None = None, budget: int = SCAN_BUDGET) -> TestDecision:
    br, low, high = high_temp_interval(params, branch)
    X = _configs(batch)
    m, n = X.shape
    k = params.k
    if br == "scan":
        sc = scan_statistic(X, k, budget)
        return _decide("high_temp", sc.value - 1.0, low, high, delta, "scan", sc)
    tot = X.sum(axis=1)
    stat = float(((tot * tot) - n).sum()) / (m * k)
    return _decide("high_temp", stat, low, high, delta, "global")


def low_temp_interval(params: ModelParams, branch: str | None = None) -> tuple[str, float, float]:
    sol = small_clique_solution(params.theta, params.theta1, params.field_dist)
    if sol.regime.name != "low":
        raise RegimeError(f"low-temperature test called in the {sol.regime} regime")
    n, k = params.n, params.k
    x = sol.mu
    if x <= 0:
        raise RegimeError("magnetization root solver returned no positive root")
    br = _branch(branch, "scan" if k * k < n else "global")
    if br == "global" and k / n >= LARGE_CLIQUE_FRACTION:
        r = math.sqrt(n) / k
        low = r * math.sqrt(2.0 / math.pi)
        high = low * math.exp(-0.5 * (x / r) ** 2) + x * (1.0 - 2.0 * norm.cdf(-x / r))
        return "global_folded", low, high
    return br, 0.0, x


def low_temp_test(batch, params: ModelParams, delta: float = 0.5, branch: str | None = None, budget: int = SCAN_BUDGET) -> TestDecision:
    br, low, high = low_temp_interval(params, branch)
    X = _configs(batch)
    k = params.k
    if br == "scan":
        sc = scan_statistic(X, k, budget, objective="abs")
        return _decide("low_temp", sc.value, low, high, delta, "scan", sc)
    stat = float(np.abs(X.sum(axis=1)).mean()) / k
    return _decide("low_temp", stat, low, high, delta, br)


def critical_exponent(tau: int) -> float:
    """Power of k dividing the quadratic statistics at criticality."""
    return (4 * tau - 3) / (2 * tau - 1)


def critical_threshold_upper(v: float, tau: int) -> float:
    return math.pi**-0.5 * (2.0 * v) ** (1.0 / (2 * tau - 1)) * gamma((2 * tau + 1) / (4 * tau - 2))


def critical_interval(params: ModelParams, tau: int | None = None, branch: str | None = None) -> tuple[str, int, float, float]:
    sol = small_clique_solution(params.theta, params.theta1, params.field_dist)
    if sol.regime.name != "critical":
        raise RegimeError(f"critical test called in the {sol.regime} regime")
    tau = sol.regime.tau if tau is None else tau
    v = var_critical(tau, params.theta, params.theta1, sol.q_null, params.field_dist)
    n, k = params.n, params.k
    br = _branch(branch, "scan" if k < n ** ((4 * tau - 2) / (8 * tau - 5)) else "global")
    return br, tau, 0.0, critical_threshold_upper(v, tau)


def critical_test(batch, params: ModelParams, tau: int | None = None, delta: float = 0.5, branch: str | None = None, budget: int = SCAN_BUDGET) -> TestDecision:
    br, tau, low, high = critical_interval(params, tau, branch)
    X = _configs(batch)
    m, n = X.shape
    k = params.k
    scale = k ** -critical_exponent(tau)
    if br == "scan":
        sc = scan_statistic(X, k, budget)
        return _decide("critical", scale * k * sc.value, low, high, delta, "scan", sc)
    tot = X.sum(axis=1)
    stat = scale * float(((tot * tot) - n).sum()) / m
    return _decide("critical", stat, low, high, delta, "global")


def large_clique_interval(params: ModelParams, require_checks: bool = True) -> tuple[str, float, float]:
    c = params.c
    sol = large_clique_solution(c, params.theta, params.theta1, params.field_dist)
    if require_checks and not (sol.rs_ok and sol.at_ok):
        raise RegimeError("large-clique test requires the replica-symmetry and AT conditions")
    if sol.regime.name == "critical":
        raise RegimeError("large-clique test is not defined on the critical line")
    if sol.mu == 0:
        Vp = var_small_high(params.theta, params.theta1, sol.q, params.field_dist)
        return "high", 1.0, c * Vp + (1.0 - c)
    return "low", 0.0, c * sol.mu


def large_clique_test(batch, params: ModelParams, delta: float = 0.5, require_checks: bool = True) -> TestDecision:
    br, low, high = large_clique_interval(params, require_checks)
    X = _configs(batch)
    m, n = X.shape
    tot = X.sum(axis=1)
    if br == "high":
        stat = float((tot * tot).sum()) / (m * n)
    else:
        stat = float(np.abs(tot).sum()) / (m * n)
    return _decide("large_clique", stat, low, high, delta, br)


def regime_of(params: ModelParams) -> str:
    """Which test applies: 'large' for k/n >= 1/4, else the small-clique regime."""
    if params.k / params.n >= LARGE_CLIQUE_FRACTION:
        return "large"
    return small_clique_solution(params.theta, params.theta1, params.field_dist).regime.name


def run_test(batch, params: ModelParams, regime: str = "auto", delta: float = 0.5, **kw) -> TestDecision:
    reg = regime_of(params) if regime == "auto" else regime
    if reg == "high":
        return high_temp_test(batch, params, delta, **kw)
    if reg == "low":
        return low_temp_test(batch, params, delta, **kw)
    if reg == "critical":
        return critical_test(batch, params, delta=delta, **kw)
    if reg == "large":
        return large_clique_test(batch, params, delta, **kw)
    raise ValueError(f"regime must be 'auto' or one of {REGIMES}")
