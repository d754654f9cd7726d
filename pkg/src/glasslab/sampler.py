"""Heat-bath Gibbs sampling and observation batches.

Randomness is organized as counter-based (Philox) substreams keyed by
``(seed, purpose, observation, chain)`` so a batch does not depend on the
order in which its observations are produced.
"""
from __future__ import annotations

import csv
import io
import json
import struct
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .model import Disorder, ModelParams, coupling_matrix, sample_disorder

INITS = ("uniform", "plus", "minus")

_DISORDER_STREAM = 1
_CHAIN_STREAM = 2
_BATCH_MAGIC = b"GLSB"


def substream(seed: int, *key: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), *map(int, key)])))


@dataclass(frozen=True)
class ChainConfig:
    """Chain schedule, in full sweeps (one sweep = n site updates)."""

    burn_in_sweeps: int = 50
    thin_sweeps: int = 1
    init: str = "uniform"

    def __post_init__(self):
        if self.burn_in_sweeps < 0:
            raise ValueError("burn_in_sweeps must be nonnegative")
        if self.thin_sweeps < 1:
            raise ValueError("thin_sweeps must be >= 1")
        if self.init not in INITS:
            raise ValueError(f"init must be one of {INITS}")


def initial_config(n: int, init: str, rng: np.random.Generator) -> np.ndarray:
    if init == "plus":
        return np.ones(n, dtype=np.int8)
    if init == "minus":
        return -np.ones(n, dtype=np.int8)
    return (2 * (rng.random(n) < 0.5) - 1).astype(np.int8)


class _Instance:
    """Kernel-ready arrays for one (params, disorder) pair."""

    __slots__ = ("J", "h", "mask", "coef", "use_couplings")

    def __init__(self, params: ModelParams, disorder: Disorder):
        self.use_couplings = params.theta > 0
        self.J = coupling_matrix(params, disorder) if self.use_couplings else np.zeros((1, 1))
        self.h = np.asarray(disorder.fields, dtype=np.float64)
        self.mask = params.clique_mask()
        self.coef = float(params.clique_coupling)


def _run(inst: _Instance, spins, rng, n_sweeps, burn_in, thin, n_out):
    n = spins.shape[0]
    out = np.empty((n_out, n))
    u = rng.random((n_sweeps, n))
    spins = spins.astype(np.float64)
    _kernels.heat_bath(inst.J, inst.h, inst.mask, inst.coef, spins, u, out, burn_in, thin, inst.use_couplings)
    return spins, out


def gibbs_sweep(config, params: ModelParams, disorder: Disorder, rng: np.random.Generator) -> np.ndarray:
    """One fixed-order heat-bath sweep; returns the new configuration."""
    s = np.asarray(config, dtype=np.float64)
    if s.shape != (params.n,):
        raise ValueError("configuration length must equal n")
    spins, _ = _run(_Instance(params, disorder), s, rng, 1, 1, 1, 0)
    return spins.astype(np.int8)


def run_chain(
    params: ModelParams,
    disorder: Disorder,
    n_samples: int,
    chain: ChainConfig,
    rng: np.random.Generator,
    init_config=None,
) -> np.ndarray:
    """Samples after burn-in, one every ``thin`` sweeps, as an int8 array."""
    n = params.n
    s = initial_config(n, chain.init, rng) if init_config is None else np.asarray(init_config)
    sweeps = chain.burn_in_sweeps + n_samples * chain.thin_sweeps
    _, out = _run(_Instance(params, disorder), s, rng, sweeps, chain.burn_in_sweeps, chain.thin_sweeps, n_samples)
    return out.astype(np.int8)


@dataclass(frozen=True, eq=False)
class SampleBatch:
    configs: np.ndarray  # (m, n) int8 in {-1, +1}
    params: ModelParams
    fresh_disorder: bool
    seed: int
    chain: ChainConfig = ChainConfig()

    def __post_init__(self):
        c = np.asarray(self.configs, dtype=np.int8)
        if c.ndim != 2 or c.shape[0] < 1 or c.shape[1] != self.params.n:
            raise ValueError("configs must be (m, n) with m >= 1")
        if not np.all(np.abs(c) == 1):
            raise ValueError("spins must be +-1")
        object.__setattr__(self, "configs", c)

    @property
    def m(self) -> int:
        return self.configs.shape[0]

    def header(self) -> dict:
        return {
            "format": "glasslab.batch/1",
            "m": self.m,
            "n": self.params.n,
            "params": self.params.to_dict(),
            "fresh_disorder": self.fresh_disorder,
            "seed": self.seed,
            "chain": {
                "burn_in_sweeps": self.chain.burn_in_sweeps,
                "thin_sweeps": self.chain.thin_sweeps,
                "init": self.chain.init,
            },
        }

    def to_bytes(self) -> bytes:
        """``GLSB`` + u32 header length + JSON header + row-major packed bits (+1 -> 1)."""
        hb = json.dumps(self.header()).encode()
        bits = np.packbits((self.configs > 0).astype(np.uint8), axis=None)
        return _BATCH_MAGIC + struct.pack("<I", len(hb)) + hb + bits.tobytes()

    @classmethod
    def from_bytes(cls, blob: bytes) -> "SampleBatch":
        if blob[:4] != _BATCH_MAGIC:
            raise ValueError("not a glasslab batch file")
        (hl,) = struct.unpack("<I", blob[4:8])
        head = json.loads(blob[8 : 8 + hl].decode())
        m, n = head["m"], head["n"]
        bits = np.unpackbits(np.frombuffer(blob[8 + hl :], dtype=np.uint8), count=m * n)
        configs = (2 * bits.astype(np.int8) - 1).reshape(m, n)
        return cls(
            configs,
            ModelParams.from_dict(head["params"]),
            bool(head["fresh_disorder"]),
            int(head["seed"]),
            ChainConfig(**head["chain"]),
        )

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf)
        w.writerow([f"s{i}" for i in range(self.params.n)])
        w.writerows(self.configs.tolist())
        return buf.getvalue()

    def save(self, path) -> None:
        with open(path, "wb") as fh:
            fh.write(self.to_bytes())

    @classmethod
    def load(cls, path) -> "SampleBatch":
        with open(path, "rb") as fh:
            return cls.from_bytes(fh.read())


def observation_disorder(params: ModelParams, seed: int, index: int) -> Disorder:
    d = sample_disorder(params, substream(seed, _DISORDER_STREAM, index))
    return Disorder(d.couplings, d.fields, seed)


def draw_batch(
    params: ModelParams,
    m: int,
    chain: ChainConfig = ChainConfig(),
    fresh_disorder: bool = True,
    seed: int = 0,
    disorder: Disorder | None = None,
) -> SampleBatch:
    """``m`` observations, each the end state of an independent chain.

    With ``fresh_disorder`` every observation gets its own disorder draw;
    otherwise all share ``disorder`` (sampled from the seed when omitted).
    """
    if m < 1:
        raise ValueError("m must be positive")
    n = params.n
    configs = np.empty((m, n), dtype=np.int8)
    shared = None
    if not fresh_disorder:
        shared = _Instance(params, disorder if disorder is not None else observation_disorder(params, seed, 0))
    for j in range(m):
        inst = shared if shared is not None else _Instance(params, observation_disorder(params, seed, j))
        rng = substream(seed, _CHAIN_STREAM, j, 0)
        s = initial_config(n, chain.init, rng)
        s, _ = _run(inst, s, rng, chain.burn_in_sweeps, chain.burn_in_sweeps, 1, 0)
        configs[j] = s.astype(np.int8)
    return SampleBatch(configs, params, fresh_disorder, seed, chain)


def draw_replica_pair(
    params: ModelParams,
    disorder: Disorder,
    chain: ChainConfig = ChainConfig(),
    seed: int = 0,
    index: int = 0,
) -> tuple[np.ndarray, np.ndarray]:
    """Two independent chains on the same disorder."""
    inst = _Instance(params, disorder)
    out = []
    for r in (0, 1):
        rng = substream(seed, _CHAIN_STREAM, index, r + 1)
        s = initial_config(params.n, chain.init, rng)
        s, _ = _run(inst, s, rng, chain.burn_in_sweeps, chain.burn_in_sweeps, 1, 0)
        out.append(s.astype(np.int8))
    return out[0], out[1]


def replica_overlap(s1, s2) -> float:
    s1 = np.asarray(s1, dtype=np.float64)
    return float(s1 @ np.asarray(s2, dtype=np.float64)) / s1.shape[0]


def draw_replica_overlaps(
    params: ModelParams,
    count: int,
    chain: ChainConfig = ChainConfig(),
    seed: int = 0,
) -> np.ndarray:
    """Overlaps of ``count`` replica pairs, each pair on fresh disorder."""
    r = np.empty(count)
    for j in range(count):
        d = observation_disorder(params, seed, j)
        a, b = draw_replica_pair(params, d, chain, seed, j)
        r[j] = replica_overlap(a, b)
    return r
