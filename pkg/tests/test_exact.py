import json
import math
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from glasslab import _kernels
from glasslab.exact import (
    MAX_N,
    exact_moments,
    gibbs_probabilities,
    golden_fixture,
    quenched_average,
    two_replica_overlap,
)
from glasslab.model import Disorder, FieldDist, ModelParams, coupling_matrix, sample_disorder

FIXTURE = Path(__file__).parent / "fixtures" / "exact_n10_seed7.json"


def _table_moments(p, d):
    """Moments from the explicit probability table (energy-function path)."""
    S, P = gibbs_probabilities(p, d)
    m = S[:, list(p.clique)].mean(axis=1)
    site = P @ S
    return {
        "mean_clique_mag": float(P @ m),
        "mean_sq_clique_mag": float(P @ (m * m)),
        "mean_abs_mag": float(P @ np.abs(m)),
        "site_means": site,
        "pair_means": np.triu((S * P[:, None]).T @ S, 1),
    }


def test_free_spins():
    p = ModelParams(n=8, k=3)
    e = exact_moments(p, sample_disorder(p, 0))
    assert np.all(e.site_means == 0)
    assert e.mean_sq_clique_mag == pytest.approx(1 / 3, abs=1e-14)
    assert e.mean_replica_overlap == 0
    assert e.log_partition == pytest.approx(8 * math.log(2), abs=1e-12)


def test_two_spin_closed_form():
    g = -1.3
    p = ModelParams(n=2, k=1, theta=0.8)
    d = Disorder(np.array([[0.0, g], [0.0, 0.0]]), np.zeros(2))
    e = exact_moments(p, d)
    assert e.pair_means[0, 1] == pytest.approx(math.tanh(0.8 * g / math.sqrt(2)), abs=1e-14)


def test_golden_fixture_frozen():
    fx = json.loads(FIXTURE.read_text())
    p = ModelParams.from_dict(fx["params"])
    got = golden_fixture(p, fx["seed"])["moments"]
    for key, val in fx["moments"].items():
        assert np.allclose(got[key], val, atol=1e-10, rtol=0), key


def test_golden_fixture_matches_probability_table():
    fx = json.loads(FIXTURE.read_text())
    p = ModelParams.from_dict(fx["params"])
    ref = _table_moments(p, sample_disorder(p, fx["seed"]))
    for key in ("mean_clique_mag", "mean_sq_clique_mag", "mean_abs_mag"):
        assert fx["moments"][key] == pytest.approx(ref[key], abs=1e-12)
    assert np.allclose(fx["moments"]["site_means"], ref["site_means"], atol=1e-12)
    assert np.allclose(np.array(fx["moments"]["pair_means"]).reshape(10, 10), ref["pair_means"], atol=1e-12)


@settings(max_examples=15, deadline=None)
@given(st.integers(2, 10), st.integers(0, 1000), st.floats(0, 1.5), st.floats(0, 3), st.sampled_from(["zero", "twopoint:0.4", "gauss:0.5"]))
def test_replica_overlap_two_paths(n, seed, theta, theta1, field):
    p = ModelParams(n=n, k=max(1, n // 3), theta=theta, theta1=theta1, field_dist=FieldDist.parse(field))
    d = sample_disorder(p, seed)
    e = exact_moments(p, d)
    r1, r2 = two_replica_overlap(p, d)
    assert e.mean_replica_overlap == pytest.approx(r1, abs=1e-12)
    assert e.mean_sq_replica_overlap == pytest.approx(r2, abs=1e-12)


def test_log_partition_relabel_invariant():
    p = ModelParams(n=11, k=4, theta=0.7, theta1=1.1, field_dist=FieldDist.gaussian(0.3))
    d = sample_disorder(p, 3)
    perm = np.random.default_rng(0).permutation(p.n)
    G = d.symmetric()[np.ix_(perm, perm)]
    inv = np.argsort(perm)
    d2 = Disorder(np.triu(G, 1), d.fields[perm])
    p2 = p.with_clique(sorted(int(inv[i]) for i in p.clique))
    a, b = exact_moments(p, d), exact_moments(p2, d2)
    assert a.log_partition == pytest.approx(b.log_partition, abs=1e-11)
    assert np.allclose(a.site_means[perm], b.site_means, atol=1e-12)


def test_zero_field_site_means_vanish():
    p = ModelParams(n=12, k=4, theta=0.9, theta1=1.5)
    e = exact_moments(p, sample_disorder(p, 8))
    assert np.max(np.abs(e.site_means)) < 1e-13


def test_bounds():
    p = ModelParams(n=9, k=3, theta=1.2, theta1=2.0, field_dist=FieldDist.two_point(0.5))
    e = exact_moments(p, sample_disorder(p, 1))
    assert np.all(np.abs(e.site_means) <= 1) and np.all(np.abs(e.pair_means) <= 1)
    assert np.all(np.tril(e.pair_means) == 0)


def test_cap_enforced():
    p = ModelParams(n=MAX_N + 1, k=2)
    with pytest.raises(ValueError):
        exact_moments(p, sample_disorder(p, 0))


def test_blocks_merge_independent_of_chunking(monkeypatch):
    p = ModelParams(n=15, k=5, theta=0.6, theta1=1.0, field_dist=FieldDist.two_point(0.2))
    d = sample_disorder(p, 2)
    a = exact_moments(p, d)
    monkeypatch.setattr(_kernels, "ENUM_CHUNK", 1 << 9)
    b = exact_moments(p, d)
    assert a.log_partition == pytest.approx(b.log_partition, abs=1e-12)
    assert np.allclose(a.site_means, b.site_means, atol=1e-13)


def test_numba_and_numpy_enumeration_agree():
    if not _kernels.HAVE_NUMBA:
        pytest.skip("numba missing")
    p = ModelParams(n=13, k=4, theta=0.8, theta1=1.2, field_dist=FieldDist.gaussian(0.4))
    d = sample_disorder(p, 5)
    Jup = np.triu(coupling_matrix(p, d), 1)
    args = (Jup, np.asarray(d.fields), p.clique_mask(), p.clique_coupling, 0, 1 << 13)
    a = _kernels.enum_block_numba(*args)
    b = _kernels.enum_block_numpy(*args)
    for x, y in zip(a, b):
        assert np.allclose(x, y, rtol=1e-12, atol=1e-12)


def test_quenched_free_spins_exact():
    p = ModelParams(n=6, k=2)
    qa = quenched_average(p, 5, 0)
    assert np.all(qa.mean["site_means"] == 0)


def test_quenched_overlap_self_consistent():
    p = ModelParams(n=12, k=1, theta=0.3, field_dist=FieldDist.gaussian(0.5))
    a = quenched_average(p, 200, 1)
    b = quenched_average(p, 200, 2)
    se = math.hypot(a.stderr["mean_replica_overlap"], b.stderr["mean_replica_overlap"])
    assert abs(a.mean["mean_replica_overlap"] - b.mean["mean_replica_overlap"]) < 3 * se


def test_quenched_magnetization_symmetric():
    # sigma -> -sigma, h -> -h leaves the disorder law invariant
    p = ModelParams(n=12, k=4, theta=0.3, theta1=0.6, field_dist=FieldDist.two_point(0.2))
    qa = quenched_average(p, 500, 3)
    assert abs(qa.mean["mean_clique_mag"]) < 3 * qa.stderr["mean_clique_mag"]


def test_quenched_requires_positive_count():
    with pytest.raises(ValueError):
        quenched_average(ModelParams(n=4, k=1), 0, 0)
