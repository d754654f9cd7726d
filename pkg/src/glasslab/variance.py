"""Limiting variances: small-clique, critical, null SK and the cavity system."""
from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field

import numpy as np

from .meanfield import (
    DEFAULT_RULE,
    CRITICAL_TOL,
    QuadratureRule,
    RegimeError,
    expect,
    null_overlap,
    solve_magnetization,
    solve_mean_field,
)
from .model import FieldDist

INT64_MAX = (1 << 63) - 1
DENOM_TOL = 1e-10


@dataclass(frozen=True, eq=False)
class MomentVector:
    q_hat: np.ndarray  # E tanh^j(theta sqrt(q) z + theta1 mu + h), j = 1..4
    q_tilde: np.ndarray  # E tanh^j(theta sqrt(q) z + h), j = 1..4

    def hat(self, j: int) -> float:
        return float(self.q_hat[j - 1])

    def tilde(self, j: int) -> float:
        return float(self.q_tilde[j - 1])


def moment_vector(theta, theta1, q, mu, field: FieldDist, rule: QuadratureRule = DEFAULT_RULE) -> MomentVector:
    tags = ("tanh", "tanh2", "tanh3", "tanh4")
    hat = np.array([expect(t, q, theta, theta1 * mu, field, rule) for t in tags])
    tilde = np.array([expect(t, q, theta, 0.0, field, rule) for t in tags])
    return MomentVector(hat, tilde)


# ---------------------------------------------------------------------------
# small clique


def var_small_high(theta, theta1, q, field: FieldDist, rule: QuadratureRule = DEFAULT_RULE) -> float:
    """Limiting Var(sqrt(k) m) when psi < 1."""
    s = expect("sech2", q, theta, 0.0, field, rule)
    if theta1 * s >= 1.0 - CRITICAL_TOL:
        raise RegimeError(f"high-temperature variance needs psi < 1 (psi = {theta1 * s:.6g})")
    return (1.0 - theta1 * s * s) / (1.0 - theta1 * s) ** 2


def x_star(theta, theta1, q, field: FieldDist, rule: QuadratureRule = DEFAULT_RULE) -> float:
    """Positive minimizer of H(x) = x^2/2 - E log cosh(sqrt(theta1) x + theta sqrt(q) z + h).

    Stationarity reads x = sqrt(theta1) E tanh(sqrt(theta1) x + ...), so
    x* = sqrt(theta1) mu with mu the mean-field magnetization.
    """
    mu = solve_magnetization(q, theta, theta1, field, rule)
    if mu <= 0:
        raise RegimeError("no positive minimizer: not in the low-temperature regime")
    return math.sqrt(theta1) * mu


def var_small_low(theta, theta1, q, x_star_value, field: FieldDist, rule: QuadratureRule = DEFAULT_RULE) -> float:
    """Limiting conditional Var(sqrt(k)(m - mu)) given m > 0, at H's minimizer x*."""
    if x_star_value <= 0:
        raise RegimeError("low-temperature variance needs x* > 0")
    shift = math.sqrt(theta1) * x_star_value
    s = expect("sech2", q, theta, shift, field, rule)
    t = expect("tanh", q, theta, shift, field, rule)
    den = (1.0 - theta1 * s) ** 2
    if den < DENOM_TOL or theta1 * s >= 1.0:
        raise RegimeError(f"denominator 1 - theta1 E sech^2 = {1 - theta1 * s:.3g} is not safely positive")
    return (1.0 - theta1 * s * s - t * t) / den


def stirling2(n: int, k: int) -> int:
    """Stirling number of the second kind S(n, k)."""
    if not (0 <= k <= n <= 64):
        raise ValueError("need 0 <= k <= n <= 64")
    row = [1] + [0] * k  # S(0, j)
    for i in range(1, n + 1):
        new = [0] * (k + 1)
        for j in range(1, min(i, k) + 1):
            new[j] = j * row[j] + row[j - 1]
        row = new
    val = row[k]
    if val > INT64_MAX:
        raise OverflowError(f"S({n},{k}) exceeds the 64-bit range")
    return val


def _critical_poly(tau: int) -> np.ndarray:
    """Coefficients in t of (1+t) sum_j (j!/2^j) S(2tau-1, j) (t-1)^j."""
    P = np.polynomial.polynomial
    r = 2 * tau - 1
    acc = np.zeros(1)
    for j in range(r + 1):
        term = P.polypow([-1.0, 1.0], j) * (math.factorial(j) / 2.0**j) * stirling2(r, j)
        acc = P.polyadd(acc, term)
    return P.polymul(acc, [1.0, 1.0])


def var_critical(tau: int, theta, theta1, q, field: FieldDist, rule: QuadratureRule = DEFAULT_RULE, check_regime=True) -> float:
    """Limiting variance parameter of the critical-temperature statistic."""
    if tau < 2:
        raise ValueError("tau must be >= 2")
    m1 = expect("tanh", q, theta, 0.0, field, rule)
    var_t = expect("tanh2", q, theta, 0.0, field, rule) - m1 * m1
    if var_t < 1e-14:
        raise RegimeError("critical variance requires random field")
    s = expect("sech2", q, theta, 0.0, field, rule)
    if check_regime and abs(theta1 * s - 1.0) >= CRITICAL_TOL:
        raise RegimeError(f"not critical: psi = {theta1 * s:.10g}")
    poly = _critical_poly(tau)
    D = expect(lambda x: np.polynomial.polynomial.polyval(np.tanh(x), poly), q, theta, 0.0, field, rule)
    return math.factorial(2 * tau) ** 2 * var_t * s ** (4 * tau - 2) / D**2


def var_null_sk(theta, field: FieldDist, rule: QuadratureRule = DEFAULT_RULE) -> float:
    """Limiting Var(sum sigma / sqrt(n)) of the unplanted model."""
    q = null_overlap(theta, field, rule)
    return 1.0 - expect("tanh", q, theta, 0.0, field, rule) ** 2


# ---------------------------------------------------------------------------
# cavity moment system


@dataclass(frozen=True, eq=False)
class CavityMatrices:
    A1: np.ndarray
    A1_tilde: np.ndarray
    A2: np.ndarray
    b1: np.ndarray
    b1_tilde: np.ndarray
    b2: np.ndarray
    scalars: dict


def cavity_scalars(moments: MomentVector, mu, theta, theta1) -> dict:
    qh, qh3, qh4 = moments.hat(2), moments.hat(3), moments.hat(4)
    qt, qt3, qt4 = moments.tilde(2), moments.tilde(3), moments.tilde(4)
    t2 = theta * theta
    return {
        "a2": t2 * (1 - qh * qh),
        "a1": t2 * (qh - qh * qh),
        "a0": t2 * (qh4 - qh * qh),
        "at2": t2 * (1 - qt * qt),
        "at1": t2 * (qt - qt * qt),
        "at0": t2 * (qt4 - qt * qt),
        "b1": t2 * mu * (1 - qh),
        "b0": t2 * (qh3 - qh * mu),
        "d1": theta1 * (1 - mu * mu),
        "d0": theta1 * (qh - mu * mu),
        "e1": theta1 * mu * (1 - qh),
        "e0": theta1 * (qh3 - qh * mu),
    }


def _a11(a2, a1, a0):
    return np.array(
        [
            [a2, -4 * a1, 3 * a0],
            [a1, a2 - 2 * a1 - 3 * a0, 6 * a0 - 3 * a1],
            [a0, 4 * a1 - 8 * a0, a2 - 8 * a1 + 10 * a0],
        ]
    )


def cavity_matrices(c, moments: MomentVector, mu, theta, theta1) -> CavityMatrices:
    sc = cavity_scalars(moments, mu, theta, theta1)
    a2, a1, a0 = sc["a2"], sc["a1"], sc["a0"]
    b1, b0, d1, d0, e1, e0 = sc["b1"], sc["b0"], sc["d1"], sc["d0"], sc["e1"], sc["e0"]
    A1 = np.zeros((5, 5))
    A1[:3, :3] = _a11(a2, a1, a0)
    A1[:3, 3:] = [[2 * e1, -2 * e0], [e1 + e0, e1 - 3 * e0], [2 * e0, 2 * e1 - 4 * e0]]
    A1[3:, :3] = [[b1, -2 * b1 - 2 * b0, 3 * b0], [b0, 2 * b1 - 6 * b0, 6 * b0 - 3 * b1]]
    A1[3:, 3:] = [[d1 + d0, -2 * d0], [2 * d0, d1 - 3 * d0]]
    A1t = np.zeros((5, 5))
    A1t[:3, :3] = _a11(sc["at2"], sc["at1"], sc["at0"])
    A2 = np.array(
        [
            [a2 - 2 * a1, 3 * a0 - 2 * a1, e1, e1 - 2 * e0],
            [2 * a1 - 2 * a0, a2 - 6 * a1 + 6 * a0, e0, 2 * e1 - 3 * e0],
            [-b1, b0, d1, -d0],
            [b1 - 2 * b0, b0, d0, d1 - 2 * d0],
        ]
    )
    qh, qh3, qh4 = moments.hat(2), moments.hat(3), moments.hat(4)
    qt, qt3, qt4 = moments.tilde(2), moments.tilde(3), moments.tilde(4)
    v1 = np.array([1 - qh * qh, qh - qh * qh, qh4 - qh * qh, mu - mu * qh, qh3 - mu * qh])
    v1t = np.array([1 - qt * qt, qt - qt * qt, qt4 - qt * qt, 0.0, qt3])
    v2 = np.array([mu - qh * mu, qh3 - qh * mu, 1 - mu * mu, qh - mu * mu])
    return CavityMatrices(A1, A1t, A2, v1, v1t, v2, sc)


def spectral_radius(M) -> float:
    return float(np.max(np.abs(np.linalg.eigvals(M))))


def replica_operator(mats: CavityMatrices, c) -> np.ndarray:
    return c * mats.A1 + (1 - c) * mats.A1_tilde


class SingularSystemError(np.linalg.LinAlgError):
    pass


def _solve(M, rhs, name):
    cond = np.linalg.cond(M)
    if not np.isfinite(cond) or cond > 1e12:
        raise SingularSystemError(f"invertibility condition failed: {name} is singular (cond={cond:.3g})")
    return np.linalg.solve(M, rhs)


def large_clique_variance(mats: CavityMatrices, c, moments: MomentVector | None = None, mu=None):
    """(V_r, V_m, V_tilde) from the two cavity linear systems."""
    x = _solve(np.eye(5) - replica_operator(mats, c), c * mats.b1 + (1 - c) * mats.b1_tilde, "I - c A1 - (1-c) A1~")
    y = _solve(np.eye(4) - mats.A2, mats.b2, "I - A2")
    return float(x[0]), float(y[2]), 1.0


def low_temperature_conditions(mats: CavityMatrices, c) -> dict:
    """Determinants whose non-vanishing the low-temperature system requires."""
    A1, A1t, A2 = mats.A1, mats.A1_tilde, mats.A2
    B = np.eye(3) - c * A1[:3, :3] - (1 - c) * A1t[:3, :3]
    out = {"det_B": float(np.linalg.det(B))}
    if abs(out["det_B"]) > 1e-14:
        S1 = np.eye(2) - c * A1[3:, 3:] - c * c * A1[3:, :3] @ np.linalg.solve(B, A1[:3, 3:])
        out["det_replica_schur"] = float(np.linalg.det(S1))
    else:
        out["det_replica_schur"] = float("nan")
    C = np.eye(2) - A2[:2, :2]
    out["det_I_minus_A21"] = float(np.linalg.det(C))
    if abs(out["det_I_minus_A21"]) > 1e-14:
        S2 = np.eye(2) - A2[2:, 2:] - A2[2:, :2] @ np.linalg.solve(C, A2[:2, 2:])
        out["det_magnetization_schur"] = float(np.linalg.det(S2))
    else:
        out["det_magnetization_schur"] = float("nan")
    return out


@dataclass(frozen=True)
class LimitingVariance:
    regime: str
    values: dict = dc_field(default_factory=dict)
    notes: dict = dc_field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"regime": self.regime, "values": dict(self.values), "notes": dict(self.notes)}


def compute_variances(c, theta, theta1, field: FieldDist, rule: QuadratureRule = DEFAULT_RULE) -> LimitingVariance:
    """Every variance that applies at the given point."""
    small = solve_mean_field(0.0, theta, theta1, field, rule, check_at=False)
    vals: dict = {"V_null_sk": var_null_sk(theta, field, rule)}
    notes: dict = {}
    reg = small.regime
    q0 = small.q_null
    if reg.name == "high":
        vals["V_small_high"] = var_small_high(theta, theta1, q0, field, rule)
    elif reg.name == "low":
        xs = x_star(theta, theta1, q0, field, rule)
        vals["V_small_low"] = var_small_low(theta, theta1, q0, xs, field, rule)
        notes["x_star"] = xs
    else:
        notes["tau"] = reg.tau
        try:
            vals["v_critical"] = var_critical(reg.tau, theta, theta1, q0, field, rule)
        except RegimeError as exc:
            notes["v_critical"] = str(exc)
    if c > 0:
        sol = solve_mean_field(c, theta, theta1, field, rule, check_at=False)
        mats = cavity_matrices(c, moment_vector(theta, theta1, sol.q, sol.mu, field, rule), sol.mu, theta, theta1)
        try:
            vr, vm, vt = large_clique_variance(mats, c)
            vals["V_r"], vals["V_m"], vals["V_tilde"] = vr, vm, vt
        except SingularSystemError as exc:
            notes["large_clique"] = str(exc)
        if sol.mu > 0:
            notes["low_temperature_conditions"] = low_temperature_conditions(mats, c)
    bad = {k: v for k, v in vals.items() if not v > 0}
    if bad:
        notes["nonpositive"] = sorted(bad)
        vals = {k: v for k, v in vals.items() if v > 0}
    return LimitingVariance(reg.name, vals, notes)
