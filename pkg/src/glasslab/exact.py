"""Exhaustive Gibbs expectations for small instances (n <= 22)."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, fields

import numpy as np

from . import _kernels
from .model import Disorder, ModelParams, coupling_matrix, sample_disorder

MAX_N = 22


@dataclass(frozen=True, eq=False)
class ExactMoments:
    log_partition: float
    site_means: np.ndarray
    pair_means: np.ndarray
    mean_clique_mag: float
    mean_sq_clique_mag: float
    mean_replica_overlap: float
    mean_abs_mag: float
    mean_sq_replica_overlap: float

    def to_dict(self) -> dict:
        out = {}
        for f in fields(self):
            v = getattr(self, f.name)
            if isinstance(v, np.ndarray):
                out[f.name] = [float(f"{x:.17g}") for x in v.ravel()]
            else:
                out[f.name] = float(f"{v:.17g}")
        return out


def exact_moments(params: ModelParams, disorder: Disorder) -> ExactMoments:
    n = params.n
    if n > MAX_N:
        raise ValueError(f"exhaustive enumeration is capped at n={MAX_N}")
    Jup = np.triu(coupling_matrix(params, disorder), 1)
    h = np.asarray(disorder.fields, dtype=np.float64)
    mask = params.clique_mask()
    coef = params.clique_coupling
    total = 1 << n
    blocks = [
        _kernels.enum_block(Jup, h, mask, coef, a, min(a + _kernels.ENUM_CHUNK, total))
        for a in range(0, total, _kernels.ENUM_CHUNK)
    ]
    # merge in index order against the global maximum
    lmax = max(b[0] for b in blocks)
    sw = 0.0
    s1 = np.zeros(n)
    s2 = np.zeros((n, n))
    sm = sm2 = sam = 0.0
    for b in blocks:
        r = math.exp(b[0] - lmax)
        sw += r * b[1]
        s1 += r * b[2]
        s2 += r * b[3]
        sm += r * b[4]
        sm2 += r * b[5]
        sam += r * b[6]
    site = s1 / sw
    pair = s2 / sw
    np.fill_diagonal(pair, 1.0)
    return ExactMoments(
        log_partition=float(lmax + math.log(sw)),
        site_means=site,
        pair_means=np.triu(pair, 1),
        mean_clique_mag=sm / sw,
        mean_sq_clique_mag=sm2 / sw,
        mean_replica_overlap=float(site @ site) / n,
        mean_abs_mag=sam / sw,
        mean_sq_replica_overlap=float((pair * pair).sum()) / n**2,
    )


def gibbs_probabilities(params: ModelParams, disorder: Disorder) -> tuple[np.ndarray, np.ndarray]:
    """Full table ``(configs, probs)``; only for tiny n (cross-checks)."""
    if params.n > 14:
        raise ValueError("probability table only for n <= 14")
    from .model import hamiltonian

    n = params.n
    idx = np.arange(1 << n)
    S = 2 * ((idx[:, None] >> np.arange(n)[None, :]) & 1) - 1
    e = np.array([hamiltonian(params, disorder, s) for s in S])
    lw = -e - (-e).max()
    p = np.exp(lw)
    return S, p / p.sum()


def two_replica_overlap(params: ModelParams, disorder: Disorder):
    """<R12> and <R12^2> by direct enumeration over replica pairs."""
    S, p = gibbs_probabilities(params, disorder)
    R = (S @ S.T) / params.n
    P = np.outer(p, p)
    return float((P * R).sum()), float((P * R * R).sum())


@dataclass(frozen=True, eq=False)
class QuenchedMoments:
    n_disorder: int
    mean: dict
    stderr: dict


def quenched_average(params: ModelParams, n_disorder: int, rng) -> QuenchedMoments:
    if n_disorder < 1:
        raise ValueError("n_disorder must be positive")
    if not isinstance(rng, np.random.Generator):
        rng = np.random.default_rng(rng)
    rows = [exact_moments(params, sample_disorder(params, rng)) for _ in range(n_disorder)]
    mean, se = {}, {}
    for f in fields(ExactMoments):
        vals = np.array([getattr(r, f.name) for r in rows], dtype=np.float64)
        mean[f.name] = vals.mean(axis=0)
        if n_disorder > 1:
            se[f.name] = vals.std(axis=0, ddof=1) / math.sqrt(n_disorder)
        else:
            se[f.name] = np.zeros_like(mean[f.name])
    return QuenchedMoments(n_disorder, mean, se)


def golden_fixture(params: ModelParams, seed: int) -> dict:
    dis = sample_disorder(params, seed)
    return {
        "params": params.to_dict(),
        "seed": seed,
        "moments": exact_moments(params, dis).to_dict(),
    }


def dump_fixture(fixture: dict, path) -> None:
    with open(path, "w") as fh:
        json.dump(fixture, fh, indent=1)
