"""Hot loops: heat-bath sweeps, exhaustive enumeration, exact subset scan.

Every kernel exists twice, a numba ``@njit`` version and a pure-numpy one.
Set ``GLASSLAB_NO_NUMBA=1`` to route all callers through the numpy path
(both are importable directly for benchmarking).  The two paths consume the
same pre-drawn uniforms, so they produce the same chains up to float
rounding in the local-field sums.
"""
from __future__ import annotations

import os

import numpy as np

try:
    import numba
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    HAVE_NUMBA = False

USE_NUMBA = HAVE_NUMBA and os.environ.get("GLASSLAB_NO_NUMBA", "").strip() not in ("1", "true", "yes")

ENUM_CHUNK = 1 << 14


# ---------------------------------------------------------------------------
# heat-bath Gibbs sweeps


def heat_bath_numpy(J, h, mask, coef, spins, uniforms, out, burn_in, thin, use_couplings=True):
    """Run ``uniforms.shape[0]`` fixed-scan sweeps in place on ``spins``.

    Records a copy of ``spins`` into ``out[r]`` after sweep
    ``burn_in + (r+1)*thin``.  ``uniforms[t, i]`` decides site ``i`` at sweep ``t``.
    """
    n = spins.shape[0]
    s = spins.astype(np.float64)
    msum = s[mask].sum()
    rec = 0
    for t in range(uniforms.shape[0]):
        u = uniforms[t]
        for i in range(n):
            loc = h[i]
            if use_couplings:
                loc += J[i] @ s
            if mask[i]:
                loc += coef * (msum - s[i])
            p = 1.0 / (1.0 + np.exp(-2.0 * loc))
            new = 1.0 if u[i] < p else -1.0
            if mask[i]:
                msum += new - s[i]
            s[i] = new
        done = t + 1 - burn_in
        if done > 0 and done % thin == 0 and rec < out.shape[0]:
            out[rec] = s
            rec += 1
    spins[:] = s.astype(spins.dtype)
    return rec


if HAVE_NUMBA:

    @njit(cache=True)
    def _refresh_fields(J, s, L):
        n = s.shape[0]
        for i in range(n):
            acc = 0.0
            for j in range(n):
                acc += J[i, j] * s[j]
            L[i] = acc

    @njit(cache=True)
    def heat_bath_numba(J, h, mask, coef, spins, uniforms, out, burn_in, thin, use_couplings=True):
        # coupling fields L = J s are updated incrementally on each flip and
        # rebuilt from scratch every 32 sweeps to bound roundoff drift
        n = spins.shape[0]
        s = np.empty(n)
        msum = 0.0
        for i in range(n):
            s[i] = spins[i]
            if mask[i]:
                msum += s[i]
        L = np.zeros(n)
        rec = 0
        for t in range(uniforms.shape[0]):
            if use_couplings and t % 32 == 0:
                _refresh_fields(J, s, L)
            for i in range(n):
                loc = h[i] + L[i]
                if mask[i]:
                    loc += coef * (msum - s[i])
                p = 1.0 / (1.0 + np.exp(-2.0 * loc))
                new = 1.0 if uniforms[t, i] < p else -1.0
                if new != s[i]:
                    d = new - s[i]
                    if mask[i]:
                        msum += d
                    if use_couplings:
                        for j in range(n):
                            L[j] += J[i, j] * d
                    s[i] = new
            done = t + 1 - burn_in
            if done > 0 and done % thin == 0 and rec < out.shape[0]:
                for i in range(n):
                    out[rec, i] = s[i]
                rec += 1
        for i in range(n):
            spins[i] = s[i]
        return rec

else:  # pragma: no cover
    heat_bath_numba = None


def heat_bath(J, h, mask, coef, spins, uniforms, out, burn_in, thin, use_couplings=True):
    fn = heat_bath_numba if USE_NUMBA else heat_bath_numpy
    return fn(J, h, mask, coef, spins, uniforms, out, burn_in, thin, use_couplings)


# ---------------------------------------------------------------------------
# exhaustive enumeration over a block of configuration indices
#
# Configuration index x maps to spins s_i = +1 if bit i of x is set, else -1.
# Each block returns its own log-weight maximum and weighted sums relative to
# it; blocks are merged in index order by the caller.


def enum_block_numpy(Jup, h, mask, coef, start, stop):
    n = h.shape[0]
    idx = np.arange(start, stop, dtype=np.int64)
    bits = (idx[:, None] >> np.arange(n, dtype=np.int64)[None, :]) & 1
    S = 2.0 * bits - 1.0
    k = mask.sum()
    msum = S[:, mask].sum(axis=1)
    logw = np.einsum("ci,ij,cj->c", S, Jup, S) + coef * 0.5 * (msum * msum - k) + S @ h
    lmax = logw.max()
    w = np.exp(logw - lmax)
    m = msum / k
    sw = w.sum()
    s1 = S.T @ w
    s2 = S.T @ (w[:, None] * S)
    return lmax, sw, s1, s2, w @ m, w @ (m * m), w @ np.abs(m)


if HAVE_NUMBA:

    @njit(cache=True)
    def _kahan_add(acc, comp, x):
        # Neumaier update
        t = acc + x
        if abs(acc) >= abs(x):
            comp += (acc - t) + x
        else:
            comp += (x - t) + acc
        return t, comp

    @njit(cache=True)
    def enum_block_numba(Jup, h, mask, coef, start, stop):
        n = h.shape[0]
        k = 0
        for i in range(n):
            if mask[i]:
                k += 1
        cnt = stop - start
        logw = np.empty(cnt)
        s = np.empty(n)
        for c in range(cnt):
            x = start + c
            msum = 0.0
            lin = 0.0
            for i in range(n):
                s[i] = 1.0 if (x >> i) & 1 else -1.0
                lin += h[i] * s[i]
                if mask[i]:
                    msum += s[i]
            quad = 0.0
            for i in range(n):
                acc = 0.0
                for j in range(i + 1, n):
                    acc += Jup[i, j] * s[j]
                quad += s[i] * acc
            logw[c] = quad + coef * 0.5 * (msum * msum - k) + lin
        lmax = logw.max()
        sw = 0.0
        swc = 0.0
        s1 = np.zeros(n)
        s1c = np.zeros(n)
        s2 = np.zeros((n, n))
        s2c = np.zeros((n, n))
        sm = 0.0
        smc = 0.0
        sm2 = 0.0
        sm2c = 0.0
        sam = 0.0
        samc = 0.0
        for c in range(cnt):
            x = start + c
            w = np.exp(logw[c] - lmax)
            msum = 0.0
            for i in range(n):
                s[i] = 1.0 if (x >> i) & 1 else -1.0
                if mask[i]:
                    msum += s[i]
            m = msum / k
            sw, swc = _kahan_add(sw, swc, w)
            sm, smc = _kahan_add(sm, smc, w * m)
            sm2, sm2c = _kahan_add(sm2, sm2c, w * m * m)
            sam, samc = _kahan_add(sam, samc, w * abs(m))
            for i in range(n):
                wi = w * s[i]
                s1[i], s1c[i] = _kahan_add(s1[i], s1c[i], wi)
                for j in range(i, n):
                    s2[i, j], s2c[i, j] = _kahan_add(s2[i, j], s2c[i, j], wi * s[j])
        for i in range(n):
            s1[i] += s1c[i]
            for j in range(i, n):
                s2[i, j] += s2c[i, j]
                s2[j, i] = s2[i, j]
        return lmax, sw + swc, s1, s2, sm + smc, sm2 + sm2c, sam + samc

else:  # pragma: no cover
    enum_block_numba = None


def enum_block(Jup, h, mask, coef, start, stop):
    fn = enum_block_numba if USE_NUMBA else enum_block_numpy
    return fn(Jup, h, mask, coef, start, stop)


# ---------------------------------------------------------------------------
# exact maximization of a quadratic subset score over all k-subsets
#
# score(S) = sum_{a,b in S} E[a,b]; subsets visited in lexicographic order and
# the first maximizer is kept, so ties resolve to the lexicographically
# smallest subset.


def scan_quadratic_numpy(E, k):
    from itertools import combinations, islice

    n = E.shape[0]
    best = -np.inf
    best_sub = None
    it = combinations(range(n), k)
    while True:
        block = np.array(list(islice(it, 65536)), dtype=np.int64)
        if block.size == 0:
            break
        vals = E[block[:, :, None], block[:, None, :]].sum(axis=(1, 2))
        j = int(np.argmax(vals))
        if vals[j] > best:
            best = vals[j]
            best_sub = block[j].copy()
    return best_sub, best


def scan_abs_numpy(spins, k):
    """Maximize ``sum_l |sum_{i in S} spins[l, i]|`` over k-subsets."""
    from itertools import combinations, islice

    n = spins.shape[1]
    best = -np.inf
    best_sub = None
    it = combinations(range(n), k)
    X = spins.T.astype(np.float64)
    while True:
        block = np.array(list(islice(it, 32768)), dtype=np.int64)
        if block.size == 0:
            break
        vals = np.abs(X[block].sum(axis=1)).sum(axis=1)
        j = int(np.argmax(vals))
        if vals[j] > best:
            best = vals[j]
            best_sub = block[j].copy()
    return best_sub, best


if HAVE_NUMBA:

    @njit(cache=True)
    def _next_comb(c, n):
        k = c.shape[0]
        i = k - 1
        while i >= 0 and c[i] == n - k + i:
            i -= 1
        if i < 0:
            return False
        c[i] += 1
        for j in range(i + 1, k):
            c[j] = c[j - 1] + 1
        return True

    @njit(cache=True)
    def scan_quadratic_numba(E, k):
        n = E.shape[0]
        c = np.arange(k)
        best = -np.inf
        best_sub = c.copy()
        while True:
            v = 0.0
            for a in range(k):
                for b in range(k):
                    v += E[c[a], c[b]]
            if v > best:
                best = v
                best_sub[:] = c
            if not _next_comb(c, n):
                break
        return best_sub, best

    @njit(cache=True)
    def scan_abs_numba(spins, k):
        n = spins.shape[1]
        m = spins.shape[0]
        c = np.arange(k)
        best = -np.inf
        best_sub = c.copy()
        while True:
            v = 0.0
            for l in range(m):
                acc = 0.0
                for a in range(k):
                    acc += spins[l, c[a]]
                v += abs(acc)
            if v > best:
                best = v
                best_sub[:] = c
            if not _next_comb(c, n):
                break
        return best_sub, best

else:  # pragma: no cover
    scan_quadratic_numba = None
    scan_abs_numba = None


def scan_quadratic(E, k):
    if USE_NUMBA:
        sub, val = scan_quadratic_numba(np.ascontiguousarray(E, dtype=np.float64), k)
    else:
        sub, val = scan_quadratic_numpy(np.asarray(E, dtype=np.float64), k)
    return np.asarray(sub, dtype=np.int64), float(val)


def scan_abs(spins, k):
    if USE_NUMBA:
        sub, val = scan_abs_numba(np.ascontiguousarray(spins, dtype=np.float64), k)
    else:
        sub, val = scan_abs_numpy(np.asarray(spins), k)
    return np.asarray(sub, dtype=np.int64), float(val)
