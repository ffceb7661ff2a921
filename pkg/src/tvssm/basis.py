"""Dictionaries of fixed scalar basis functions over discrete time.

Every time-varying matrix element in this package is a linear combination
of a small dictionary of fixed functions of the integer time index: one
constant function plus zero or more Gaussian bumps. Dictionaries are
sampled once and never trained; only the combination coefficients are
learnable. All functions are bounded by 1 in magnitude, which the
stability projection in :mod:`tvssm.ssm` relies on.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

__all__ = [
    "BasisKind",
    "BasisFunction",
    "BasisDictionary",
    "sample_dictionary",
    "evaluate_at",
    "evaluate_grid",
]


class BasisKind(str, Enum):
    CONSTANT = "constant"
    GAUSSIAN = "gaussian"


@dataclass(frozen=True)
class BasisFunction:
    """One fixed scalar function of the discrete time index.

    ``mu`` and ``sigma`` are in time-step units and only meaningful for
    Gaussians. The amplitude is fixed to 1 so that ``|value(t)| <= 1``
    for every t.
    """

    kind: BasisKind
    mu: float = 0.0
    sigma: float = 1.0
    amplitude: float = 1.0

    def __post_init__(self):
        if self.amplitude != 1.0:
            raise ValueError("basis amplitude is fixed to 1")
        if self.kind is BasisKind.GAUSSIAN and not self.sigma > 0:
            raise ValueError(f"gaussian sigma must be positive, got {self.sigma}")

    def value(self, t: float) -> float:
        if self.kind is BasisKind.CONSTANT:
            return 1.0
        z = (t - self.mu) / self.sigma
        # np.exp keeps scalar and vectorized evaluation bit-identical
        return float(np.exp(-0.5 * z * z))

    def values(self, ts: np.ndarray) -> np.ndarray:
        """Vectorized :meth:`value` over an array of time indices."""
        ts = np.asarray(ts, dtype=np.float64)
        if self.kind is BasisKind.CONSTANT:
            return np.ones_like(ts)
        z = (ts - self.mu) / self.sigma
        return np.exp(-0.5 * z * z)

    def to_record(self) -> dict:
        if self.kind is BasisKind.CONSTANT:
            return {"kind": "constant"}
        return {"kind": "gaussian", "mu": self.mu, "sigma": self.sigma}

    @classmethod
    def from_record(cls, rec: dict) -> "BasisFunction":
        kind = BasisKind(rec["kind"])
        if kind is BasisKind.CONSTANT:
            return cls(kind)
        return cls(kind, mu=float(rec["mu"]), sigma=float(rec["sigma"]))


@dataclass(frozen=True)
class BasisDictionary:
    """Ordered dictionary of basis functions shared by matrix expansions.

    ``functions[0]`` is always the constant function; the remaining K-1
    entries are Gaussians. ``horizon_t`` records the sequence length the
    sampling ranges were drawn for; evaluating beyond it is permitted.
    """

    functions: tuple[BasisFunction, ...]
    horizon_t: int

    def __post_init__(self):
        object.__setattr__(self, "functions", tuple(self.functions))
        if len(self.functions) < 1:
            raise ValueError("dictionary needs at least one function")
        if self.horizon_t < 1:
            raise ValueError(f"horizon_t must be positive, got {self.horizon_t}")
        if self.functions[0].kind is not BasisKind.CONSTANT:
            raise ValueError("functions[0] must be the constant function")
        for f in self.functions[1:]:
            if f.kind is not BasisKind.GAUSSIAN:
                raise ValueError("functions[1:] must all be Gaussian")

    @property
    def size(self) -> int:
        return len(self.functions)

    def to_record(self) -> dict:
        return {
            "horizon_t": self.horizon_t,
            "functions": [f.to_record() for f in self.functions],
        }

    @classmethod
    def from_record(cls, rec: dict) -> "BasisDictionary":
        funcs = tuple(BasisFunction.from_record(r) for r in rec["functions"])
        return cls(funcs, horizon_t=int(rec["horizon_t"]))


def sample_dictionary(k: int, t: int, rng: np.random.Generator) -> BasisDictionary:
    """Sample a dictionary of 1 constant plus (k - 1) Gaussian functions.

    Gaussian means are uniform on (0, t) and standard deviations uniform
    on (t / (5(k-1) + 1), t / ((k-1)/3 + 1)). The result is a pure
    function of (k, t) and the generator state. For k = 1 the dictionary
    is just the constant function, so any expansion built on it is
    exactly time-invariant.
    """
    if k < 1:
        raise ValueError(f"need k >= 1, got {k}")
    if t < 1:
        raise ValueError(f"need t >= 1, got {t}")
    funcs = [BasisFunction(BasisKind.CONSTANT)]
    if k > 1:
        sig_lo = t / (5.0 * (k - 1) + 1.0)
        sig_hi = t / ((k - 1) / 3.0 + 1.0)
        for _ in range(k - 1):
            mu = rng.uniform(0.0, t)
            sigma = rng.uniform(sig_lo, sig_hi)
            funcs.append(BasisFunction(BasisKind.GAUSSIAN, mu=mu, sigma=sigma))
    return BasisDictionary(tuple(funcs), horizon_t=t)


def evaluate_at(dictionary: BasisDictionary, t: float) -> np.ndarray:
    """Evaluate all K functions at one time index, returning shape (K,)."""
    return np.array([f.value(t) for f in dictionary.functions], dtype=np.float64)


def evaluate_grid(dictionary: BasisDictionary, t: int) -> np.ndarray:
    """Evaluate all functions on the grid 0..t-1, returning shape (K, t).

    Column j equals ``evaluate_at(dictionary, j)``.
    """
    if t < 1:
        raise ValueError(f"need t >= 1, got {t}")
    ts = np.arange(t, dtype=np.float64)
    return np.stack([f.values(ts) for f in dictionary.functions])
