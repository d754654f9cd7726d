"""Clique recovery: scan maximizer, then per-spin screening against it."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .detection import SCAN_BUDGET, _configs, large_clique_solution, regime_of, scan_statistic, small_clique_solution
from .model import ModelParams


@dataclass(frozen=True)
class RecoveryResult:
    s_hat: tuple[int, ...]
    s_intermediate: tuple[int, ...]
    overlap_with_truth: int | None = None
    exact: bool | None = None
    exact_scan: bool | None = None

    def to_dict(self) -> dict:
        return {
            "s_hat": list(self.s_hat),
            "s_intermediate": list(self.s_intermediate),
            "overlap_with_truth": self.overlap_with_truth,
            "exact": self.exact,
            "exact_scan": self.exact_scan,
        }


def _resolve(params: ModelParams, regime: str | None) -> str:
    reg = regime_of(params) if regime in (None, "auto") else regime
    if reg == "large":
        sol = large_clique_solution(params.c, params.theta, params.theta1, params.field_dist)
        reg = "low" if sol.mu > 0 else "high"
    if reg not in ("high", "low", "critical"):
        raise ValueError(f"unknown regime {reg!r}")
    return reg


def almost_exact_recover(batch, params: ModelParams, regime: str | None = None, budget: int = SCAN_BUDGET):
    """Scan maximizer for the regime's objective (absolute clique means at low temperature)."""
    reg = _resolve(params, regime)
    return scan_statistic(batch, params.k, budget, objective="abs" if reg == "low" else "quadratic")


def screening_scores(batch, params: ModelParams, s_prime, regime: str | None = None, tau: int | None = None) -> np.ndarray:
    """phi_i = (1/m) sum_l sigma_li sum_{j in S', j != i} sigma_lj, with the regime's scale factor."""
    X = np.asarray(_configs(batch), dtype=np.int64)
    m, n = X.shape
    k = params.k
    Sp = np.asarray(sorted(int(i) for i in s_prime), dtype=np.int64)
    if Sp.size != k or len(set(Sp.tolist())) != k:
        raise ValueError("s_prime must contain k distinct indices")
    U = X[:, Sp].sum(axis=1)
    num = X.T @ U  # integer sums
    num[Sp] -= m  # drop the j = i term (sigma_i^2 = 1)
    reg = _resolve(params, regime)
    if reg == "critical":
        tau = tau or small_clique_solution(params.theta, params.theta1, params.field_dist).regime.tau
        return num * k ** (-(2 * tau - 2) / (2 * tau - 1)) / m
    if reg == "low":
        return num / (k * m)
    return num / m


def screen(batch, params: ModelParams, s_prime, regime: str | None = None, tau: int | None = None) -> tuple[int, ...]:
    """Top-k spins by screening score; ties go to the smaller index."""
    X = np.asarray(_configs(batch), dtype=np.int64)
    n = X.shape[1]
    k = params.k
    Sp = np.asarray(sorted(int(i) for i in s_prime), dtype=np.int64)
    if Sp.size != k:
        raise ValueError("s_prime must have size k")
    U = X[:, Sp].sum(axis=1)
    num = X.T @ U
    num[Sp] -= X.shape[0]
    # every regime's score is a positive multiple of num, so rank on the exact integers
    _resolve(params, regime)
    order = np.lexsort((np.arange(n), -num))
    return tuple(int(i) for i in np.sort(order[:k]))


def recover_pipeline(batch, params: ModelParams, truth=None, regime: str | None = None, budget: int = SCAN_BUDGET) -> RecoveryResult:
    n, k = params.n, params.k
    if k == n:
        full = tuple(range(n))
        return _result(full, full, truth, True)
    sc = almost_exact_recover(batch, params, regime, budget)
    inter = tuple(int(i) for i in sc.subset)
    s_hat = screen(batch, params, inter, regime)
    return _result(s_hat, inter, truth, sc.exact)


def _result(s_hat, inter, truth, exact_scan):
    if truth is None:
        return RecoveryResult(s_hat, inter, None, None, exact_scan)
    t = set(int(i) for i in truth)
    ov = len(t & set(s_hat))
    return RecoveryResult(s_hat, inter, ov, ov == len(t) == len(s_hat), exact_scan)
