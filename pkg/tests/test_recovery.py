import math

import numpy as np
import pytest

from glasslab.model import FieldDist, ModelParams
from glasslab.recovery import almost_exact_recover, recover_pipeline, screen, screening_scores
from glasslab.sampler import ChainConfig, draw_batch

CHAIN = ChainConfig(30)


def aligned_batch(rng, m, n, S):
    X = np.where(rng.random((m, n)) < 0.5, 1, -1).astype(np.int8)
    s = np.where(rng.random(m) < 0.5, 1, -1).astype(np.int8)
    X[:, list(S)] = s[:, None]
    return X


def test_strong_low_temperature_scan_recovers():
    hits = 0
    for r in range(100):
        rng = np.random.default_rng(r)
        S = tuple(sorted(rng.choice(24, 4, replace=False).tolist()))
        p = ModelParams(n=24, k=4, theta=0.2, theta1=3.0, clique=S)
        res = almost_exact_recover(draw_batch(p, 30, CHAIN, True, seed=100 + r), p)
        assert res.exact
        hits += tuple(res.subset) == S
    assert hits >= 95


def test_unplanted_scan_overlap_is_hypergeometric():
    n, k, R = 20, 4, 200
    p = ModelParams(n=n, k=k, theta=0.3, theta1=0.0)
    ov = [len(set(almost_exact_recover(draw_batch(p, 20, CHAIN, True, seed=r), p, "high").subset) & set(range(k))) for r in range(R)]
    var = k * (k / n) * (1 - k / n) * (n - k) / (n - 1)
    assert abs(np.mean(ov) - k * k / n) < 3 * math.sqrt(var / R)


def test_all_plus_ties_are_lexicographic():
    p = ModelParams(n=10, k=3, theta=0.0, theta1=2.0)
    X = np.ones((1, 10), dtype=np.int8)
    assert list(almost_exact_recover(X, p).subset) == [0, 1, 2]
    assert screen(X, p, (4, 7, 9)) == (0, 1, 2)


@pytest.mark.parametrize("regime", ["high", "low", "critical"])
def test_screen_recovers_aligned_clique(regime):
    rng = np.random.default_rng(7)
    n, k = 30, 6
    S = (2, 5, 11, 17, 23, 29)
    X = aligned_batch(rng, 200, n, S)
    p = ModelParams(n=n, k=k, theta=0.0, theta1=math.cosh(1) ** 2, field_dist=FieldDist.two_point(1.0), clique=S)
    others = [i for i in range(n) if i not in S]
    for trial in range(20):
        keep = rng.choice(S, 3 + trial % 4, replace=False).tolist()
        sp = keep + rng.choice(others, k - len(keep), replace=False).tolist()
        assert screen(X, p, sp, regime, tau=2) == S


def test_screen_order_and_flip_invariance():
    p = ModelParams(n=40, k=5, theta=0.3, theta1=1.8, clique=(1, 9, 17, 25, 33))
    X = draw_batch(p, 25, CHAIN, True, seed=3).configs
    sp = (1, 9, 17, 30, 4)
    base = screen(X, p, sp)
    assert screen(X, p, sp[::-1]) == base
    flip = X * np.where(np.arange(25) % 2 == 0, -1, 1)[:, None].astype(np.int8)
    assert screen(flip, p, sp) == base
    assert np.allclose(screening_scores(flip, p, sp), screening_scores(X, p, sp))


def test_screen_idempotent_when_no_ties():
    p = ModelParams(n=40, k=5, theta=0.2, theta1=0.9, clique=(0, 8, 16, 24, 32))
    b = draw_batch(p, 300, CHAIN, True, seed=4)
    s1 = screen(b, p, (0, 8, 16, 1, 2))
    sc = np.sort(screening_scores(b, p, s1))[::-1]
    assert sc[4] > sc[5]
    assert screen(b, p, s1) == screen(b, p, screen(b, p, s1))


def test_screening_scales():
    p = ModelParams(n=12, k=3, theta=0.0, theta1=2.0)
    X = np.where(np.random.default_rng(0).random((8, 12)) < 0.5, 1, -1)
    hi = screening_scores(X, p, (0, 1, 2), "high")
    lo = screening_scores(X, p, (0, 1, 2), "low")
    cr = screening_scores(X, p, (0, 1, 2), "critical", tau=2)
    assert np.allclose(lo, hi / 3) and np.allclose(cr, hi * 3 ** (-2 / 3))
    i = 5
    assert hi[i] == pytest.approx(np.mean(X[:, i] * X[:, :3].sum(axis=1)))
    assert hi[0] == pytest.approx(np.mean(X[:, 0] * X[:, 1:3].sum(axis=1)))


def test_screen_validates():
    p = ModelParams(n=12, k=3)
    X = np.ones((2, 12))
    with pytest.raises(ValueError):
        screen(X, p, (0, 1))
    with pytest.raises(ValueError):
        screening_scores(X, p, (0, 0, 1))


def test_pipeline_permutation_equivariant():
    S = (3, 7, 12, 20)
    p = ModelParams(n=24, k=4, theta=0.2, theta1=0.9, clique=S)
    X = draw_batch(p, 150, CHAIN, True, seed=8).configs
    perm = np.random.default_rng(2).permutation(24)
    a = recover_pipeline(X, p, truth=S)
    b = recover_pipeline(X[:, perm], p)
    assert tuple(sorted(int(perm[i]) for i in b.s_hat)) == a.s_hat


def test_pipeline_full_clique():
    p = ModelParams(n=9, k=9, theta1=0.5)
    r = recover_pipeline(np.ones((2, 9)), p, truth=range(9))
    assert r.s_hat == tuple(range(9)) and r.exact


def test_pipeline_result_fields():
    S = (0, 5, 10, 15, 20, 25, 30, 35)
    p = ModelParams(n=60, k=8, theta=0.2, theta1=0.8, clique=S)
    m = math.ceil(6 * 8 * math.log(60))
    r = recover_pipeline(draw_batch(p, m, CHAIN, True, seed=9), p, truth=S)
    assert len(r.s_hat) == 8 and len(r.s_intermediate) == 8
    assert r.overlap_with_truth == len(set(S) & set(r.s_hat))
    assert r.exact == (r.s_hat == S)
    assert r.exact_scan is False
    assert set(r.to_dict()) == {"s_hat", "s_intermediate", "overlap_with_truth", "exact", "exact_scan"}
