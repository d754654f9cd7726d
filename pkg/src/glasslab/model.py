"""Planted SK model family: parameters, disorder generation and energies.

The Gibbs measure is ``P(sigma | g, h) ∝ exp(-H(sigma))`` with

    H(sigma) = -(theta/sqrt(n)) sum_{i<j} g_ij s_i s_j
               - J_S sum_{i<j in S} s_i s_j
               - sum_i h_i s_i

where the per-pair clique coupling ``J_S`` is ``theta1/k`` under the default
``"mean_field"`` convention, i.e. the clique term is ``(theta1/2k) sum_{i != j}``.
This is the normalization under which the mean-field equations
``mu = E tanh(theta sqrt(q) z + theta1 mu + h)`` hold.  The ``"literal"``
convention uses ``theta1/(2k)`` per unordered pair.
"""
from __future__ import annotations

import json
import math
import struct
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

CLIQUE_CONVENTIONS = ("mean_field", "literal")


@dataclass(frozen=True)
class FieldDist:
    """Symmetric field law ``h = a * eps + s * z`` (eps = ±1 fair, z ~ N(0,1)).

    ``a == 0`` drops the two-point part, ``s == 0`` drops the Gaussian part.
    Zero, TwoPoint(a) and CenteredGaussian(s) are the special cases; the
    mixed case only arises from :func:`effective_field_params`.
    """

    atom: float = 0.0
    noise: float = 0.0

    def __post_init__(self):
        if self.atom < 0 or self.noise < 0:
            raise ValueError("field parameters must be nonnegative")

    @classmethod
    def zero(cls) -> "FieldDist":
        return cls()

    @classmethod
    def two_point(cls, a: float) -> "FieldDist":
        if a <= 0:
            raise ValueError("two-point field needs a > 0")
        return cls(atom=float(a))

    @classmethod
    def gaussian(cls, s: float) -> "FieldDist":
        if s <= 0:
            raise ValueError("gaussian field needs s > 0")
        return cls(noise=float(s))

    @classmethod
    def parse(cls, spec: str) -> "FieldDist":
        """Parse ``zero``, ``twopoint:a``, ``gauss:s`` or ``mixed:a:s``."""
        parts = spec.strip().lower().split(":")
        kind = parts[0]
        if kind == "zero":
            return cls.zero()
        if kind in ("twopoint", "two_point"):
            return cls.two_point(float(parts[1]))
        if kind in ("gauss", "gaussian"):
            return cls.gaussian(float(parts[1]))
        if kind == "mixed":
            return cls(float(parts[1]), float(parts[2]))
        raise ValueError(f"unknown field spec {spec!r}")

    @property
    def is_zero(self) -> bool:
        return self.atom == 0 and self.noise == 0

    @property
    def variance(self) -> float:
        return self.atom**2 + self.noise**2

    def label(self) -> str:
        if self.is_zero:
            return "zero"
        if self.noise == 0:
            return f"twopoint:{self.atom:g}"
        if self.atom == 0:
            return f"gauss:{self.noise:g}"
        return f"mixed:{self.atom:g}:{self.noise:g}"

    def sample(self, rng: np.random.Generator, size) -> np.ndarray:
        out = np.zeros(size)
        if self.atom > 0:
            out += self.atom * (2.0 * (rng.random(size) < 0.5) - 1.0)
        if self.noise > 0:
            out += self.noise * rng.standard_normal(size)
        return out


COUPLING_LAWS = ("gaussian", "rademacher", "uniform")


@dataclass(frozen=True)
class CouplingDist:
    """Coupling law with mean 0, variance 1, third moment 0."""

    law: str = "gaussian"

    def __post_init__(self):
        if self.law not in COUPLING_LAWS:
            raise ValueError(f"unknown coupling law {self.law!r}")

    def moments(self) -> tuple[float, float, float, float]:
        """First four raw moments."""
        fourth = {"gaussian": 3.0, "rademacher": 1.0, "uniform": 9.0 / 5.0}[self.law]
        return 0.0, 1.0, 0.0, fourth

    def sample(self, rng: np.random.Generator, size) -> np.ndarray:
        if self.law == "gaussian":
            return rng.standard_normal(size)
        if self.law == "rademacher":
            return 2.0 * (rng.random(size) < 0.5) - 1.0
        return math.sqrt(3.0) * (2.0 * rng.random(size) - 1.0)


@dataclass(frozen=True)
class ModelParams:
    n: int
    k: int
    theta: float = 0.0
    theta1: float = 0.0
    clique: tuple[int, ...] | None = None
    field_dist: FieldDist = field(default_factory=FieldDist)
    coupling_dist: CouplingDist = field(default_factory=CouplingDist)
    clique_convention: str = "mean_field"

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("n must be positive")
        if not 1 <= self.k <= self.n:
            raise ValueError("need 1 <= k <= n")
        if self.theta < 0 or self.theta1 < 0:
            raise ValueError("theta and theta1 must be nonnegative")
        if self.clique_convention not in CLIQUE_CONVENTIONS:
            raise ValueError(f"unknown clique convention {self.clique_convention!r}")
        if self.clique is None:
            object.__setattr__(self, "clique", tuple(range(self.k)))
        else:
            cl = tuple(int(i) for i in self.clique)
            if len(cl) != self.k or len(set(cl)) != self.k:
                raise ValueError("clique must hold exactly k distinct indices")
            if min(cl) < 0 or max(cl) >= self.n:
                raise ValueError("clique index out of range")
            object.__setattr__(self, "clique", cl)

    @property
    def c(self) -> float:
        return self.k / self.n

    @property
    def clique_coupling(self) -> float:
        """Coupling carried by each unordered pair inside the clique."""
        if self.clique_convention == "mean_field":
            return self.theta1 / self.k
        return self.theta1 / (2.0 * self.k)

    def clique_mask(self) -> np.ndarray:
        mask = np.zeros(self.n, dtype=np.bool_)
        mask[list(self.clique)] = True
        return mask

    def with_clique(self, clique: Sequence[int]) -> "ModelParams":
        return replace(self, clique=tuple(int(i) for i in clique))

    def null(self) -> "ModelParams":
        """Same instance without the planted term."""
        return replace(self, theta1=0.0)

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "k": self.k,
            "theta": self.theta,
            "theta1": self.theta1,
            "clique": list(self.clique),
            "field": {"atom": self.field_dist.atom, "noise": self.field_dist.noise},
            "coupling": self.coupling_dist.law,
            "clique_convention": self.clique_convention,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ModelParams":
        f = d.get("field", {})
        if isinstance(f, str):
            fd = FieldDist.parse(f)
        else:
            fd = FieldDist(float(f.get("atom", 0.0)), float(f.get("noise", 0.0)))
        return cls(
            n=int(d["n"]),
            k=int(d["k"]),
            theta=float(d.get("theta", 0.0)),
            theta1=float(d.get("theta1", 0.0)),
            clique=tuple(d["clique"]) if d.get("clique") is not None else None,
            field_dist=fd,
            coupling_dist=CouplingDist(d.get("coupling", "gaussian")),
            clique_convention=d.get("clique_convention", "mean_field"),
        )


@dataclass(frozen=True, eq=False)
class Disorder:
    """Couplings ``g_ij`` (strict upper triangle) and fields ``h_i``."""

    couplings: np.ndarray
    fields: np.ndarray
    seed: int | None = None

    def __post_init__(self):
        g = np.asarray(self.couplings, dtype=np.float64)
        h = np.asarray(self.fields, dtype=np.float64)
        n = h.shape[0]
        if g.shape != (n, n):
            raise ValueError("couplings must be n x n")
        g = np.triu(g, 1)
        g.setflags(write=False)
        h = h.copy()
        h.setflags(write=False)
        object.__setattr__(self, "couplings", g)
        object.__setattr__(self, "fields", h)

    @property
    def n(self) -> int:
        return self.fields.shape[0]

    def symmetric(self) -> np.ndarray:
        g = self.couplings
        return g + g.T

    def upper_flat(self) -> np.ndarray:
        iu = np.triu_indices(self.n, 1)
        return self.couplings[iu]

    @classmethod
    def from_upper_flat(cls, n: int, flat, fields, seed=None) -> "Disorder":
        g = np.zeros((n, n))
        g[np.triu_indices(n, 1)] = np.asarray(flat, dtype=np.float64)
        return cls(g, np.asarray(fields, dtype=np.float64), seed)

    def __eq__(self, other):
        if not isinstance(other, Disorder):
            return NotImplemented
        return np.array_equal(self.couplings, other.couplings) and np.array_equal(
            self.fields, other.fields
        )


def sample_disorder(params: ModelParams, rng: np.random.Generator | int) -> Disorder:
    seed = None
    if not isinstance(rng, np.random.Generator):
        seed = int(rng)
        rng = np.random.default_rng(seed)
    n = params.n
    # fields first: their draws then do not depend on the coupling law
    h = params.field_dist.sample(rng, n)
    flat = params.coupling_dist.sample(rng, n * (n - 1) // 2)
    return Disorder.from_upper_flat(n, flat, h, seed)


def coupling_matrix(params: ModelParams, disorder: Disorder) -> np.ndarray:
    """Symmetric, zero-diagonal ``(theta/sqrt n) g`` used by the kernels."""
    if disorder.n != params.n:
        raise ValueError("disorder size does not match params.n")
    return (params.theta / math.sqrt(params.n)) * disorder.symmetric()


def hamiltonian(params: ModelParams, disorder: Disorder, config) -> float:
    s = np.asarray(config, dtype=np.float64)
    if s.shape != (params.n,) or disorder.n != params.n:
        raise ValueError("configuration length must equal n")
    sk = s @ disorder.couplings @ s
    sc = s[list(params.clique)].sum()
    clique_pairs = 0.5 * (sc * sc - params.k)
    return float(
        -(params.theta / math.sqrt(params.n)) * sk
        - params.clique_coupling * clique_pairs
        - disorder.fields @ s
    )


def effective_field_params(params: ModelParams, q: float) -> ModelParams:
    """pRFCW comparator: drop the couplings, add N(0, theta^2 q) to the field."""
    if not 0.0 <= q < 1.0:
        raise ValueError("q must lie in [0, 1)")
    if params.theta == 0:
        return params
    extra = params.theta * math.sqrt(q)
    f = params.field_dist
    noise = math.hypot(f.noise, extra)
    return replace(params, theta=0.0, field_dist=FieldDist(f.atom, noise))


# ---------------------------------------------------------------------------
# fixture formats

_DISORDER_MAGIC = b"GLDS"


def disorder_to_json(params: ModelParams, disorder: Disorder) -> str:
    return json.dumps(
        {
            "format": "glasslab.disorder/1",
            "params": params.to_dict(),
            "seed": disorder.seed,
            "n": disorder.n,
            "couplings_upper": [float(f"{x:.17g}") for x in disorder.upper_flat()],
            "fields": [float(f"{x:.17g}") for x in disorder.fields],
        }
    )


def disorder_from_json(text: str) -> tuple[ModelParams, Disorder]:
    d = json.loads(text)
    params = ModelParams.from_dict(d["params"])
    dis = Disorder.from_upper_flat(d["n"], d["couplings_upper"], d["fields"], d.get("seed"))
    return params, dis


def disorder_to_bytes(params: ModelParams, disorder: Disorder) -> bytes:
    """``GLDS`` + u32 header length + JSON header + float64 LE payload."""
    header = json.dumps({"params": params.to_dict(), "seed": disorder.seed, "n": disorder.n})
    hb = header.encode()
    payload = np.concatenate([disorder.upper_flat(), disorder.fields]).astype("<f8")
    return _DISORDER_MAGIC + struct.pack("<I", len(hb)) + hb + payload.tobytes()


def disorder_from_bytes(blob: bytes) -> tuple[ModelParams, Disorder]:
    if blob[:4] != _DISORDER_MAGIC:
        raise ValueError("not a glasslab disorder file")
    (hl,) = struct.unpack("<I", blob[4:8])
    header = json.loads(blob[8 : 8 + hl].decode())
    n = header["n"]
    data = np.frombuffer(blob[8 + hl :], dtype="<f8")
    m = n * (n - 1) // 2
    if data.size != m + n:
        raise ValueError("truncated disorder payload")
    params = ModelParams.from_dict(header["params"])
    return params, Disorder.from_upper_flat(n, data[:m], data[m:], header.get("seed"))
