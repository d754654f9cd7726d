"""Quadrature expectations, mean-field fixed points, regimes and AT checks.

Every population quantity here is an expectation of a function of
``X = theta*sqrt(q)*z + h`` (possibly shifted by ``theta1*mu``) with
``z ~ N(0,1)`` independent of ``h ~ field``.  The Gaussian part of ``h``
merges with ``theta*sqrt(q)*z`` into one normal variable, so each is a
one-dimensional Gauss-Hermite sum per field atom.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from numpy.polynomial import polynomial as P
from scipy.optimize import brentq

from .model import FieldDist

LOG2 = math.log(2.0)

CRITICAL_TOL = 1e-8
DERIV_TOL = 1e-8
MAX_TAU = 4
RESIDUAL_TOL = 1e-10


class ConvergenceError(RuntimeError):
    pass


class RegimeError(ValueError):
    """Raised when an operation is called outside the regime it is defined for."""


@lru_cache(maxsize=None)
def gauss_hermite_normal(n: int) -> tuple[np.ndarray, np.ndarray]:
    """Nodes and weights for E f(z), z ~ N(0,1); weights sum to one."""
    x, w = np.polynomial.hermite.hermgauss(n)
    z = math.sqrt(2.0) * x
    w = w / math.sqrt(math.pi)
    # symmetrize so odd moments vanish to rounding
    z = 0.5 * (z - z[::-1])
    w = 0.5 * (w + w[::-1])
    return z, w / w.sum()


@dataclass(frozen=True)
class QuadratureRule:
    n_nodes: int = 101
    n_inner: int = 41

    def normal(self):
        return gauss_hermite_normal(self.n_nodes)

    def inner(self):
        return gauss_hermite_normal(self.n_inner)

    @staticmethod
    def atoms(field: FieldDist) -> tuple[np.ndarray, np.ndarray]:
        if field.atom > 0:
            return np.array([-field.atom, field.atom]), np.array([0.5, 0.5])
        return np.zeros(1), np.ones(1)

    def field_points(self, field: FieldDist) -> tuple[np.ndarray, np.ndarray]:
        return self.points(0.0, 0.0, field)

    def doubled(self) -> "QuadratureRule":
        return QuadratureRule(2 * self.n_nodes, 2 * self.n_inner)

    def points(self, q: float, theta: float, field: FieldDist):
        """Flattened nodes/weights for X = theta*sqrt(q)*z + h."""
        h, wh = self.atoms(field)
        # the Gaussian part of h and theta*sqrt(q)*z add to one Gaussian
        sd = math.sqrt(theta * theta * max(q, 0.0) + field.noise**2)
        if sd == 0:
            return h, wh
        z, wz = self.normal()
        x = sd * z[:, None] + h[None, :]
        return x.ravel(), (wz[:, None] * wh[None, :]).ravel()


DEFAULT_RULE = QuadratureRule()


def logcosh(x):
    ax = np.abs(x)
    return ax + np.log1p(np.exp(-2.0 * ax)) - LOG2


def _sech2(x):
    t = np.tanh(x)
    return 1.0 - t * t


FUNCTIONS = {
    "tanh": np.tanh,
    "tanh2": lambda x: np.tanh(x) ** 2,
    "tanh3": lambda x: np.tanh(x) ** 3,
    "tanh4": lambda x: np.tanh(x) ** 4,
    "sech2": _sech2,
    "sech4": lambda x: _sech2(x) ** 2,
    "logcosh": logcosh,
}


def _fn(f):
    if callable(f):
        return f
    try:
        return FUNCTIONS[f]
    except KeyError:
        raise ValueError(f"unsupported function {f!r}; choose from {sorted(FUNCTIONS)}") from None


def expect(f, q: float, theta: float, shift, field: FieldDist, rule: QuadratureRule = DEFAULT_RULE):
    """E[f(theta*sqrt(q)*z + shift + h)]; ``shift`` may be an array."""
    if q < 0:
        raise ValueError("q must be nonnegative")
    fn = _fn(f)
    x, w = rule.points(q, theta, field)
    shift = np.asarray(shift, dtype=np.float64)
    val = fn(x[None, :] + shift.reshape(-1, 1)) @ w
    return float(val[0]) if shift.ndim == 0 else val.reshape(shift.shape)


# ---------------------------------------------------------------------------
# fixed points


def _largest_fixed_point(F, lo_value=None) -> float:
    """Largest x in [0, 1] with F(x) = x for an increasing map F: [0,1] -> [0,1).

    ``F`` must accept arrays.  ``lo_value`` short-circuits F(0).
    """
    grid = np.concatenate([np.linspace(1.0, 0.02, 50), np.geomspace(0.0199, 1e-12, 40), [0.0]])
    G = F(grid) - grid
    if lo_value is not None:
        G[-1] = lo_value
    # roundoff in F(x) - x near a tangency must not register as a root
    G[:-1] = np.where(G[:-1] > 1e-14, G[:-1], -1.0)
    pos = np.nonzero(G >= 0)[0]
    if pos.size == 0:
        raise ConvergenceError("no fixed point bracketed in [0, 1]")
    j = pos[0]
    if j == 0:
        return 1.0
    if G[j] == 0:
        return float(grid[j])
    a, b = grid[j], grid[j - 1]
    g = lambda x: float(F(np.array([x]))[0]) - x
    if g(b) >= 0:
        return float(b)
    return float(brentq(g, a, b, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=500))


def _mu_map(q, theta, theta1, field, rule):
    x, w = rule.points(q, theta, field)

    def F(mu):
        mu = np.asarray(mu, dtype=np.float64)
        return np.tanh(x[None, :] + theta1 * mu[:, None]) @ w

    return F


def _q_map(c, mu, theta, theta1, field, rule):
    z, wz = rule.normal()
    h, wh = rule.atoms(field)
    W = wz[:, None] * wh[None, :]

    def F(q):
        q = np.asarray(q, dtype=np.float64)
        sd = np.sqrt(theta * theta * np.clip(q, 0, None) + field.noise**2)
        base = sd[:, None, None] * z[None, :, None] + h[None, None, :]
        out = (1.0 - c) * np.einsum("qab,ab->q", np.tanh(base) ** 2, W)
        if c > 0:
            out = out + c * np.einsum("qab,ab->q", np.tanh(base + theta1 * mu) ** 2, W)
        return out

    return F


def null_overlap(theta: float, field: FieldDist, rule: QuadratureRule = DEFAULT_RULE) -> float:
    """Replica overlap of the null SK model: q = E tanh^2(theta sqrt(q) z + h)."""
    if theta == 0:
        return expect("tanh2", 0.0, 0.0, 0.0, field, rule)
    return _largest_fixed_point(_q_map(0.0, 0.0, theta, 0.0, field, rule))


def _mf_objective(mu, q, theta, theta1, field, rule):
    return expect("logcosh", q, theta, theta1 * mu, field, rule) - 0.5 * theta1 * mu * mu


def solve_magnetization(q, theta, theta1, field, rule: QuadratureRule = DEFAULT_RULE) -> float:
    """Nonnegative argmax of E log cosh(theta sqrt(q) z + theta1 mu + h) - theta1 mu^2 / 2."""
    if theta1 == 0:
        return 0.0
    mu = _largest_fixed_point(_mu_map(q, theta, theta1, field, rule), lo_value=0.0)
    if mu > 0 and _mf_objective(0.0, q, theta, theta1, field, rule) > _mf_objective(mu, q, theta, theta1, field, rule):
        return 0.0
    return mu


@dataclass(frozen=True)
class Regime:
    name: str  # "high" | "critical" | "low"
    tau: int | None = None
    sign: int | None = None

    def __str__(self):
        return f"critical(tau={self.tau})" if self.name == "critical" else self.name


@dataclass(frozen=True)
class MeanFieldSolution:
    c: float
    theta: float
    theta1: float
    field: FieldDist
    q: float
    mu: float
    q_null: float
    psi: float
    regime: Regime
    rs_value: float
    rs_ok: bool
    at_ok: bool | None
    residual_q: float
    residual_mu: float
    iterations: int

    def to_dict(self) -> dict:
        return {
            "c": self.c,
            "theta": self.theta,
            "theta1": self.theta1,
            "field": self.field.label(),
            "q": self.q,
            "mu": self.mu,
            "q_null": self.q_null,
            "psi": self.psi,
            "regime": self.regime.name,
            "tau": self.regime.tau,
            "flatness_sign": self.regime.sign,
            "rs_value": self.rs_value,
            "rs_ok": self.rs_ok,
            "at_ok": self.at_ok,
            "residual_q": self.residual_q,
            "residual_mu": self.residual_mu,
            "iterations": self.iterations,
        }


def psi_value(theta, theta1, q, field, rule: QuadratureRule = DEFAULT_RULE) -> float:
    return theta1 * expect("sech2", q, theta, 0.0, field, rule)


def solve_mean_field(
    c: float,
    theta: float,
    theta1: float,
    field: FieldDist,
    rule: QuadratureRule = DEFAULT_RULE,
    max_iter: int = 10_000,
    check_at: bool = True,
) -> MeanFieldSolution:
    """Joint solution (q, mu) of the mean-field equations at clique fraction ``c``.

    Alternates exact one-dimensional solves: mu is the largest root of its
    equation given q (kept only if it beats mu = 0 in the objective), and q
    the largest root of its equation given mu.
    """
    if not 0.0 <= c <= 1.0:
        raise ValueError("c must lie in [0, 1]")
    if theta < 0 or theta1 < 0:
        raise ValueError("theta and theta1 must be nonnegative")
    q_null = null_overlap(theta, field, rule)
    q, mu = q_null, 0.0
    it = 0
    for it in range(1, max_iter + 1):
        mu_new = solve_magnetization(q, theta, theta1, field, rule)
        if theta == 0:
            q_new = float(_q_map(c, mu_new, 0.0, theta1, field, rule)(np.array([0.0]))[0])
        else:
            q_new = _largest_fixed_point(_q_map(c, mu_new, theta, theta1, field, rule))
        done = abs(q_new - q) < 1e-14 and abs(mu_new - mu) < 1e-14
        q, mu = q_new, mu_new
        if done:
            break
    res_q = abs(q - float(_q_map(c, mu, theta, theta1, field, rule)(np.array([q]))[0]))
    res_mu = abs(mu - expect("tanh", q, theta, theta1 * mu, field, rule))
    if res_q > RESIDUAL_TOL or res_mu > RESIDUAL_TOL:
        raise ConvergenceError(
            f"mean-field residuals {res_q:.2e}, {res_mu:.2e} after {it} iterations "
            f"(c={c}, theta={theta}, theta1={theta1}, field={field.label()})"
        )
    psi = psi_value(theta, theta1, q, field, rule)
    regime = classify_regime(psi, mu, theta=theta, theta1=theta1, q=q, field=field, rule=rule)
    rs = rs_value(c, theta, theta1, q, mu, field, rule)
    sol = MeanFieldSolution(
        c=c, theta=theta, theta1=theta1, field=field, q=q, mu=mu, q_null=q_null, psi=psi,
        regime=regime, rs_value=rs, rs_ok=rs < 1.0, at_ok=None,
        residual_q=res_q, residual_mu=res_mu, iterations=it,
    )
    if check_at:
        object.__setattr__(sol, "at_ok", at_line_check(c, theta, theta1, field, rule, solution=sol))
    return sol


# ---------------------------------------------------------------------------
# regimes and flatness


def classify_regime(psi, mu=0.0, tol=CRITICAL_TOL, *, theta=None, theta1=None, q=None, field=None, rule=DEFAULT_RULE) -> Regime:
    """Critical when |psi - 1| < tol; otherwise high (mu = 0) or low.

    A positive argmax mu with psi < 1 (first-order jump from a strong
    two-point field) is reported as low.  Flatness is attached for critical
    points when the model inputs are supplied.
    """
    if abs(psi - 1.0) < tol:
        if theta is None:
            return Regime("critical")
        tau, sign = flatness(theta, theta1, q, field, rule, tol=tol)
        return Regime("critical", tau, sign)
    if psi < 1.0 and mu == 0.0:
        return Regime("high")
    return Regime("low")


@lru_cache(maxsize=None)
def logcosh_derivative_poly(order: int) -> np.ndarray:
    """Coefficients (in t = tanh x) of d^order/dx^order log cosh x."""
    if order < 1:
        raise ValueError("order must be >= 1")
    p = np.array([0.0, 1.0])
    one_minus_t2 = np.array([1.0, 0.0, -1.0])
    for _ in range(order - 1):
        p = P.polymul(P.polyder(p), one_minus_t2)
    return p


def H_derivative(order: int, theta, theta1, q, field, rule: QuadratureRule = DEFAULT_RULE, x: float = 0.0) -> float:
    """d^order/dx^order of H(x) = x^2/2 - E log cosh(sqrt(theta1) x + theta sqrt(q) z + h)."""
    poly = logcosh_derivative_poly(order)
    s = math.sqrt(theta1)
    val = -(s**order) * expect(lambda y: P.polyval(np.tanh(y), poly), q, theta, s * x, field, rule)
    if order == 2:
        val += 1.0
    return val


def H_function(x, theta, theta1, q, field, rule: QuadratureRule = DEFAULT_RULE):
    x = np.asarray(x, dtype=np.float64)
    return 0.5 * x * x - expect("logcosh", q, theta, math.sqrt(theta1) * x, field, rule)


def flatness(theta, theta1, q, field, rule: QuadratureRule = DEFAULT_RULE, tol=DERIV_TOL) -> tuple[int, int]:
    """Flatness tau of H at 0 and the sign of H^(2 tau)(0)."""
    if abs(H_derivative(2, theta, theta1, q, field, rule)) > max(tol, CRITICAL_TOL):
        raise RegimeError("flatness is defined only at the critical line (H''(0) = 0)")
    for j in range(2, MAX_TAU + 1):
        d = H_derivative(2 * j, theta, theta1, q, field, rule)
        if abs(d) > tol:
            return j, int(np.sign(d))
    raise RegimeError(f"flatness > {MAX_TAU}, unsupported")


def critical_theta1(theta, field, rule: QuadratureRule = DEFAULT_RULE) -> float:
    """theta1 at which psi = 1 for the small-clique (c = 0) overlap."""
    q = null_overlap(theta, field, rule)
    return 1.0 / expect("sech2", q, theta, 0.0, field, rule)


# ---------------------------------------------------------------------------
# replica symmetry


def rs_value(c, theta, theta1, q, mu, field, rule: QuadratureRule = DEFAULT_RULE) -> float:
    out = (1.0 - c) * expect("sech4", q, theta, 0.0, field, rule)
    if c > 0:
        out += c * expect("sech4", q, theta, theta1 * mu, field, rule)
    return theta * theta * out


def replica_symmetry_check(c, theta, theta1, q, mu, field, rule: QuadratureRule = DEFAULT_RULE) -> bool:
    return rs_value(c, theta, theta1, q, mu, field, rule) < 1.0


def rs_crossing(c, theta1, field, rule: QuadratureRule = DEFAULT_RULE, lo=0.0, hi=5.0) -> float:
    """Smallest theta in [lo, hi] where the replica-symmetry value reaches 1."""

    def g(theta):
        s = solve_mean_field(c, theta, theta1, field, rule, check_at=False)
        return s.rs_value - 1.0

    grid = np.linspace(lo, hi, 51)
    prev = grid[0]
    gp = g(prev)
    for t in grid[1:]:
        gt = g(t)
        if gp < 0 <= gt:
            return float(brentq(g, prev, t, xtol=1e-10))
        prev, gp = t, gt
    raise ValueError("no replica-symmetry crossing in the scanned range")


# ---------------------------------------------------------------------------
# 1RSB functional


@dataclass(frozen=True)
class PhiPoint:
    m: float
    q_prime: float
    value: float
    dvalue_dm: float
    mu: float


def _log_inner(m, base, spread, rule):
    """log E' cosh^m(base + spread z') for each entry of ``base``."""
    zi, wi = rule.inner()
    lc = logcosh(base[:, None] + spread * zi[None, :])
    a = m * lc
    amax = a.max(axis=1, keepdims=True)
    e = np.exp(a - amax)
    num = e @ wi
    L = np.log(num) + amax[:, 0]
    Lp = (e * lc) @ wi / num
    return L, Lp  # value and d/dm of log E' cosh^m


def _phi_terms(m, q_prime, theta, q, shift, field, rule):
    x, w = rule.points(q, theta, field)
    spread = theta * math.sqrt(max(q_prime - q, 0.0))
    L, Lp = _log_inner(m, x + shift, spread, rule)
    return (L @ w) / m, (-(L @ w) / m**2 + (Lp @ w) / m)


def golden_section_max(f, a, b, tol=1e-8):
    g = (math.sqrt(5.0) - 1.0) / 2.0
    x1, x2 = b - g * (b - a), a + g * (b - a)
    f1, f2 = f(x1), f(x2)
    while b - a > tol:
        if f1 < f2:
            a, x1, f1 = x1, x2, f2
            x2 = a + g * (b - a)
            f2 = f(x2)
        else:
            b, x2, f2 = x2, x1, f1
            x1 = b - g * (b - a)
            f1 = f(x1)
    x = 0.5 * (a + b)
    return x, f(x)


def _phi_value(m, q_prime, c, theta, theta1, q, field, rule):
    base = LOG2 + 0.25 * theta**2 * (1 - q_prime) ** 2 - 0.25 * theta**2 * m * (q_prime**2 - q**2)
    out_term = _phi_terms(m, q_prime, theta, q, 0.0, field, rule)[0]
    if c > 0:
        mu, sup = golden_section_max(
            lambda u: _phi_terms(m, q_prime, theta, q, theta1 * u, field, rule)[0] - 0.5 * theta1 * u * u, 0.0, 1.0
        )
        if theta1 == 0:
            mu = 0.0
    else:
        mu, sup = 0.0, 0.0
    return base + c * sup + (1 - c) * out_term, mu


def phi(m, q_prime, c, theta, theta1, q, field, rule: QuadratureRule = DEFAULT_RULE, step=1e-4) -> PhiPoint:
    """Phi(m, q') with its m-derivative by central differences."""
    if not 0 < m <= 1:
        raise ValueError("m must lie in (0, 1]")
    if m < 0.05:
        raise ValueError("quadrature unstable for m < 0.05")
    if not q - 1e-15 <= q_prime <= 1.0:
        raise ValueError("q' must lie in [q, 1]")
    value, mu = _phi_value(m, q_prime, c, theta, theta1, q, field, rule)
    hi = _phi_value(m + step, q_prime, c, theta, theta1, q, field, rule)[0]
    lo = _phi_value(m - step, q_prime, c, theta, theta1, q, field, rule)[0]
    return PhiPoint(m, q_prime, value, (hi - lo) / (2 * step), mu)


def rs_free_energy(c, theta, theta1, q, field, rule: QuadratureRule = DEFAULT_RULE) -> float:
    sup = 0.0
    if c > 0:
        _, sup = golden_section_max(
            lambda u: expect("logcosh", q, theta, theta1 * u, field, rule) - 0.5 * theta1 * u * u, 0.0, 1.0
        )
    return LOG2 + 0.25 * theta**2 * (1 - q) ** 2 + c * sup + (1 - c) * expect("logcosh", q, theta, 0.0, field, rule)


def dphi_dm_at_one(q_prime, c, theta, theta1, q, mu, field, rule: QuadratureRule = DEFAULT_RULE) -> float:
    """Analytic dPhi/dm at m = 1, where the sup over mu sits at the mean-field mu."""
    d = -0.25 * theta**2 * (q_prime**2 - q**2)
    d += (1 - c) * _phi_terms(1.0, q_prime, theta, q, 0.0, field, rule)[1]
    if c > 0:
        d += c * _phi_terms(1.0, q_prime, theta, q, theta1 * mu, field, rule)[1]
    return d


def at_line_check(c, theta, theta1, field, rule: QuadratureRule = DEFAULT_RULE, solution=None, n_grid=16, tol=1e-12) -> bool:
    """dPhi/dm(1, q') < 0 on a geometric grid of q' in (q, 1]."""
    if solution is None:
        solution = solve_mean_field(c, theta, theta1, field, rule, check_at=False)
    q, mu = solution.q, solution.mu
    gaps = np.geomspace(1e-3, 1.0, n_grid)
    for g in gaps:
        qp = q + (1 - q) * g
        if dphi_dm_at_one(qp, c, theta, theta1, q, mu, field, rule) >= tol:
            return False
    return True
