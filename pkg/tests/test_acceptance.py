"""One test per acceptance criterion, each printing a PASS/FAIL line.

The lines are also collected into the terminal summary (see conftest.py).
"""
import json
import math
import time
from pathlib import Path

import numpy as np
import pytest

from cavity_tables import A1_TABLE, A1T_TABLE, A2_TABLE, _table
from conftest import ACCEPTANCE_LINES
from glasslab.detection import critical_interval, high_temp_test, interpolate, low_temp_test
from glasslab.exact import exact_moments
from glasslab.harness import ExperimentConfig, run_clt_check, run_prfcw_comparison, run_universality_check
from glasslab.meanfield import (
    DEFAULT_RULE,
    at_line_check,
    critical_theta1,
    null_overlap,
    solve_mean_field,
)
from glasslab.model import FieldDist, ModelParams, sample_disorder
from glasslab.recovery import recover_pipeline
from glasslab.sampler import ChainConfig, draw_batch, run_chain, substream
from glasslab.variance import (
    cavity_matrices,
    cavity_scalars,
    large_clique_variance,
    moment_vector,
    replica_operator,
    spectral_radius,
    stirling2,
    var_critical,
    var_small_high,
)

FIXTURE = Path(__file__).parent / "fixtures" / "critical_threshold_tau2.json"
ZERO = FieldDist.zero()


def report(num, ok, detail, runtime, budget):
    ok = bool(ok) and runtime < budget
    line = f"{'PASS' if ok else 'FAIL'} criterion {num}: {detail} [{runtime:.1f}s / {budget:.0f}s]"
    print(line)
    ACCEPTANCE_LINES.append(line)
    assert ok, line


def batch_means(x, n_batches=50):
    x = np.asarray(x, float)
    b = x[: len(x) // n_batches * n_batches].reshape(n_batches, -1).mean(axis=1)
    return b.mean(), b.std(ddof=1) / math.sqrt(n_batches)


# --- 1 ----------------------------------------------------------------------------


def _oracle_fixtures():
    """20 small instances, four of each kind: high, low, critical, large clique, glassy."""
    rng = np.random.default_rng(2024)
    fields = [ZERO, FieldDist.two_point(0.3), FieldDist.gaussian(0.4), FieldDist(0.2, 0.3)]
    out = []
    for i in range(20):
        kind = ("high", "low", "critical", "large", "glassy")[i % 5]
        n = int(rng.integers(6, 13))
        k = int(rng.integers(2, n // 2 + 1))
        f = fields[int(rng.integers(len(fields)))]
        if kind == "high":
            th, t1 = rng.uniform(0, 0.6), rng.uniform(0.2, 0.8)
        elif kind == "low":
            th, t1 = rng.uniform(0, 0.5), rng.uniform(1.6, 2.5)
        elif kind == "critical":
            a = rng.uniform(0.2, 0.6)
            th, t1, f = 0.0, math.cosh(a) ** 2, FieldDist.two_point(a)
        elif kind == "large":
            k = int(rng.integers(n // 2 + 1, n + 1))
            th, t1 = rng.uniform(0, 0.6), rng.uniform(0.3, 2.0)
        else:
            th, t1 = rng.uniform(1.2, 2.0), rng.uniform(0.2, 1.0)
        out.append((kind, ModelParams(n=n, k=k, theta=float(th), theta1=float(t1), field_dist=f)))
    return out


def test_criterion_1_oracle_equivalence():
    t0 = time.perf_counter()
    T = 60_000
    chain = ChainConfig(100, 1)
    passed, kinds = 0, set()
    for i, (kind, p) in enumerate(_oracle_fixtures()):
        if kind in ("high", "low", "critical"):
            assert solve_mean_field(0.0, p.theta, p.theta1, p.field_dist, check_at=False).regime.name == kind
        kinds.add(kind)
        d = sample_disorder(p, 500 + i)
        e = exact_moments(p, d)
        s1 = run_chain(p, d, T, chain, substream(77, i, 1)).astype(float)
        s2 = run_chain(p, d, T, chain, substream(77, i, 2)).astype(float)
        m = s1[:, : p.k].mean(axis=1)
        n = p.n
        checks = [
            (m, e.mean_clique_mag),
            (m * m, e.mean_sq_clique_mag),
            (s1[:, 0] * s1[:, 1], e.pair_means[0, 1]),
            (s1[:, 0] * s1[:, n - 1], e.pair_means[0, n - 1]),
            (s1[:, n - 2] * s1[:, n - 1], e.pair_means[n - 2, n - 1]),
            ((s1 * s2).mean(axis=1), e.mean_replica_overlap),
        ]
        ok = True
        for series, target in checks:
            est, se = batch_means(series)
            ok &= abs(est - target) < 3 * se + 1e-12
        passed += ok
    report(1, passed >= 19 and len(kinds) == 5, f"{passed}/20 fixtures within 3 MC SE", time.perf_counter() - t0, 120)


# --- 2 ----------------------------------------------------------------------------


def test_criterion_2_mean_field_residuals():
    t0 = time.perf_counter()
    fields = [ZERO, FieldDist.two_point(0.5), FieldDist.gaussian(0.3), FieldDist.gaussian(1.0), FieldDist(0.4, 0.3)]
    worst = 0.0
    count = 0
    for th in (0.0, 0.4, 0.8, 1.2):
        for t1 in np.linspace(0.1, 3.0, 10):
            for j, f in enumerate(fields):
                c = (0.0, 0.5)[(count + j) % 2]
                s = solve_mean_field(c, th, float(t1), f, check_at=False)
                worst = max(worst, s.residual_q, s.residual_mu)
                count += 1
    qs = [null_overlap(th, ZERO) for th in np.linspace(0.0, 1.0, 21)]
    mu = solve_mean_field(0.0, 0.0, 2.0, ZERO).mu
    ok = count == 200 and worst < 1e-10 and max(qs) == 0.0 and abs(mu - 0.9575040240) <= 1e-9
    report(2, ok, f"{count} points, worst residual {worst:.1e}, max null q {max(qs)}, mu={mu:.10f}", time.perf_counter() - t0, 30)


# --- 3 ----------------------------------------------------------------------------


def _mats(c, theta, theta1, f):
    s = solve_mean_field(c, theta, theta1, f, check_at=False)
    mv = moment_vector(theta, theta1, s.q, s.mu, f)
    return s, mv, cavity_matrices(c, mv, s.mu, theta, theta1)


def test_criterion_3_variance_formulas():
    t0 = time.perf_counter()
    v = var_small_high(0.0, 0.5, 0.0, ZERO)
    _, _, m1 = _mats(1.0, 0.0, 0.5, ZERO)
    vm = large_clique_variance(m1, 1.0)[1]
    _, _, m0 = _mats(0.5, 0.0, 0.0, ZERO)
    free = large_clique_variance(m0, 0.5)
    ok = v == 2.0 and abs(vm - 2.0) < 1e-8 and all(abs(x - 1.0) < 1e-12 for x in free)
    report(3, ok, f"var_small_high={v!r}, V_m(c=1)={vm:.12f}, free=({free[0]:.3g}, {free[1]:.3g}, {free[2]:.3g})", time.perf_counter() - t0, 5)


# --- 4 ----------------------------------------------------------------------------


def test_criterion_4_empirical_clt():
    t0 = time.perf_counter()
    cfg = ExperimentConfig("acceptance_clt", n=(400,), k=(60,), theta=(0.3,), theta1=(0.5,), draws=2000, seed=4)
    r = run_clt_check(cfg).rows[0]
    ok = r["regime"] == "high" and 0.85 <= r["var_ratio"] <= 1.15 and 0.8 <= r["var_r_ratio"] <= 1.2
    report(
        4, ok,
        f"Var(sqrt(k) m)/V = {r['var_ratio']:.3f} +- {r['var_ratio_se']:.3f}, Var(sqrt(n) R)/V_r = {r['var_r_ratio']:.3f} +- {r['var_r_ratio_se']:.3f}",
        time.perf_counter() - t0, 600,
    )


# --- 5 ----------------------------------------------------------------------------


def test_criterion_5_cavity_audit():
    t0 = time.perf_counter()
    fields = [ZERO, FieldDist.gaussian(0.4), FieldDist.two_point(0.5)]
    audited = rs_points = 0
    ok = True
    worst = 0.0
    for c in (0.1, 0.3, 0.6, 1.0):
        for th in (0.0, 0.2, 0.5, 0.8, 1.2):
            for t1 in (0.3, 0.9, 2.0):
                for f in fields:
                    s, mv, m = _mats(c, th, t1, f)
                    sc = cavity_scalars(mv, s.mu, th, t1)
                    ok &= np.array_equal(m.A1, _table(A1_TABLE, sc))
                    ok &= np.array_equal(m.A1_tilde, _table(A1T_TABLE, sc))
                    ok &= np.array_equal(m.A2, _table(A2_TABLE, sc))
                    audited += 1
                    if s.rs_ok:
                        rho = spectral_radius(replica_operator(m, c))
                        worst = max(worst, rho)
                        ok &= rho < 1
                        rs_points += 1
    report(5, ok and rs_points > 0, f"{audited} points audited, max spectral radius {worst:.4f} over {rs_points} replica-symmetric points", time.perf_counter() - t0, 10)


# --- 6 ----------------------------------------------------------------------------


def _calibration(P, m, test, delta, R=100):
    rej0 = rej1 = 0
    for r in range(R):
        b0 = draw_batch(P.null(), m, seed=1000 + r)
        cl = tuple(sorted(int(i) for i in np.random.default_rng(r).choice(P.n, P.k, replace=False)))
        b1 = draw_batch(P.with_clique(cl), m, seed=2000 + r)
        rej0 += test(b0, P, delta).reject
        rej1 += test(b1, P.with_clique(cl), delta).reject
    return rej0 / R, rej1 / R


def test_criterion_6_calibration_and_power():
    t0 = time.perf_counter()
    n, k, th = 100, 10, 0.2
    Ph = ModelParams(n=n, k=k, theta=th, theta1=0.8 * critical_theta1(th, ZERO))
    a_h, p_h = _calibration(Ph, math.ceil(4 * k * math.log(n)), high_temp_test, 0.22)
    Pl = ModelParams(n=n, k=8, theta=th, theta1=2.0)
    a_l, p_l = _calibration(Pl, math.ceil(4 * math.log(n)) + 1, low_temp_test, 0.75)
    ok = a_h <= 0.05 and p_h >= 0.9 and a_l <= 0.05 and p_l >= 0.9
    report(6, ok, f"high: type-I {a_h:.2f}, power {p_h:.2f}; low: type-I {a_l:.2f}, power {p_l:.2f}", time.perf_counter() - t0, 1200)


# --- 7 ----------------------------------------------------------------------------


def test_criterion_7_exact_recovery():
    t0 = time.perf_counter()
    n, k = 60, 8
    P = ModelParams(n=n, k=k, theta=0.2, theta1=0.8)
    m = math.ceil(6 * k * math.log(n))
    rates = []
    for mm in (m, m // 10):
        ok = 0
        for r in range(100):
            cl = tuple(sorted(int(i) for i in np.random.default_rng(r).choice(n, k, replace=False)))
            ok += recover_pipeline(draw_batch(P.with_clique(cl), mm, seed=3000 + r), P, truth=cl).exact
        rates.append(ok / 100)
    report(7, rates[0] >= 0.9 and rates[1] < rates[0], f"rate {rates[0]:.2f} at m={m}, {rates[1]:.2f} at m={m // 10}", time.perf_counter() - t0, 1200)


# --- 8 ----------------------------------------------------------------------------


def test_criterion_8_universality():
    t0 = time.perf_counter()
    cfg = ExperimentConfig("acceptance_universality", n=(200,), k=(30,), theta=(0.3,), theta1=(0.6,), draws=2000, seed=8, replications=100)
    r = run_universality_check(cfg).rows[0]
    ok = r["var_sqrtk_m_within_3se"] and r["risk_within_3se"]
    report(
        8, ok,
        f"var diff {r['var_sqrtk_m_diff']:.4f} (joint SE {r['var_sqrtk_m_joint_se']:.4f}), risk diff {r['risk_diff']:.3f} (joint SE {r['risk_joint_se']:.3f})",
        time.perf_counter() - t0, 900,
    )


# --- 9 ----------------------------------------------------------------------------


def test_criterion_9_smart_path_comparator():
    t0 = time.perf_counter()
    cfg = ExperimentConfig("acceptance_prfcw", n=(400,), k=(12,), theta=(0.4,), theta1=(0.6,), draws=4000, seed=9)
    r = run_prfcw_comparison(cfg).rows[0]
    ok = abs(r["var_ratio"] - 1.0) < 0.1
    report(9, ok, f"Var ratio {r['var_ratio']:.4f} +- {r['var_ratio_se']:.4f}", time.perf_counter() - t0, 600)


# --- 10 ---------------------------------------------------------------------------


def test_criterion_10_stirling_and_critical_plumbing():
    t0 = time.perf_counter()
    ok = all(stirling2(n, 0) == (n == 0) and stirling2(n, n) == 1 for n in range(13))
    S = lambda n, k: stirling2(n, k) if k <= n else 0
    ok &= all(S(n, k) == k * S(n - 1, k) + S(n - 1, k - 1) for n in range(1, 13) for k in range(1, n + 1))
    worst = 0.0
    # the fixture point (no Gaussian integral) and two points that integrate over z
    for th, f in ((0.0, FieldDist.two_point(1.0)), (0.4, FieldDist.two_point(1.0)), (0.2, FieldDist.gaussian(0.8))):
        t1 = critical_theta1(th, f) if th > 0 else math.cosh(1.0) ** 2
        q = null_overlap(th, f)
        a = var_critical(2, th, t1, q, f)
        b = var_critical(2, th, t1, q, f, DEFAULT_RULE.doubled(), check_regime=False)
        worst = max(worst, abs(a - b) / max(1.0, abs(a)))
    fx = json.loads(FIXTURE.read_text())
    br, tau, lo, hi = critical_interval(ModelParams.from_dict(fx["params"]))
    bit = (br, tau, [lo, hi], interpolate(lo, hi, 0.5)) == (fx["branch"], fx["tau"], fx["interval"], fx["threshold_delta_0.5"])
    ok = ok and worst < 1e-8 and bit
    report(10, ok, f"stirling recurrence exact, var_critical doubling change {worst:.1e}, golden fixture bit-equal={bit}", time.perf_counter() - t0, 5)
