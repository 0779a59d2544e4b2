"""Privacy noise: Laplace mechanism, table perturbation, noise plug-ins.

The default sensitivity for releasing a whole contingency table is 2: under
record modification one record leaves one cell and enters another.  That
gives Laplace(2/epsilon) per cell.  Gaussian and custom zero-mean noise are
accepted because the null approximations only need zero mean and finite
variance, but they are never reported as pure epsilon-DP.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import NonPositiveEpsilon, NonPositiveSensitivity
from .streams import resolve_seed, rng_for
from .tables import CountTable, NoisyTable

TABLE_SENSITIVITY = 2.0

_TWO_53 = 2.0**53


def laplace_scale(epsilon: float, sensitivity: float = TABLE_SENSITIVITY) -> float:
    """Laplace scale ``b = sensitivity / epsilon``; 0 when ``epsilon`` is inf."""
    if not epsilon > 0:
        raise NonPositiveEpsilon(f"epsilon must be > 0, got {epsilon}")
    if not sensitivity > 0:
        raise NonPositiveSensitivity(f"sensitivity must be > 0, got {sensitivity}")
    if math.isinf(epsilon):
        return 0.0
    return sensitivity / epsilon


def _open_uniform(rng: np.random.Generator, shape) -> np.ndarray:
    # 53-bit grid shifted by half a step: strictly inside (0, 1)
    k = rng.integers(0, 2**53, size=shape, dtype=np.int64)
    return (k + 0.5) / _TWO_53


def laplace_draws(rng: np.random.Generator, scale: float, shape) -> np.ndarray:
    """Laplace(0, scale) by inversion of the CDF."""
    u = _open_uniform(rng, shape) - 0.5
    return -scale * np.sign(u) * np.log1p(-2.0 * np.abs(u))


@dataclass(frozen=True)
class NoiseSpec:
    """Noise family and scale, with the privacy parameters that produced it.

    ``scale`` is the Laplace ``b`` for Laplace noise and the standard
    deviation for Gaussian and custom noise.  Use the constructors
    :meth:`laplace`, :meth:`gaussian`, :meth:`custom` and :meth:`none`.
    """

    family: str
    scale: float
    epsilon: float | None
    sensitivity: float | None
    sampler: Callable[[np.random.Generator, tuple], np.ndarray] | None = field(
        default=None, compare=False, repr=False
    )

    @classmethod
    def laplace(cls, epsilon: float, sensitivity: float = TABLE_SENSITIVITY) -> NoiseSpec:
        return cls("laplace", laplace_scale(epsilon, sensitivity), float(epsilon), float(sensitivity))

    @classmethod
    def gaussian(cls, epsilon: float, sensitivity: float = TABLE_SENSITIVITY) -> NoiseSpec:
        """Gaussian noise with the same variance as Laplace(sensitivity/epsilon).

        Not epsilon-DP; provided to study the tests under other noise.
        """
        b = laplace_scale(epsilon, sensitivity)
        return cls("gaussian", math.sqrt(2.0) * b, float(epsilon), float(sensitivity))

    @classmethod
    def custom(cls, sampler: Callable[[np.random.Generator, tuple], np.ndarray], std: float) -> NoiseSpec:
        """Arbitrary zero-mean noise; ``sampler(rng, shape)`` returns draws."""
        if not (std >= 0 and math.isfinite(std)):
            raise ValueError("custom noise needs a finite standard deviation")
        return cls("custom", float(std), None, None, sampler)

    @classmethod
    def none(cls) -> NoiseSpec:
        return cls.laplace(math.inf)

    @property
    def pure_dp(self) -> bool:
        return self.family == "laplace"

    @property
    def is_identity(self) -> bool:
        return self.family != "custom" and self.epsilon is not None and math.isinf(self.epsilon)

    @property
    def std(self) -> float:
        """Standard deviation of one noise draw."""
        if self.family == "laplace":
            return math.sqrt(2.0) * self.scale
        return self.scale

    def draw(self, rng: np.random.Generator, shape) -> np.ndarray:
        if self.is_identity:
            return np.zeros(shape)
        if self.family == "laplace":
            return laplace_draws(rng, self.scale, shape)
        if self.family == "gaussian":
            return self.scale * rng.standard_normal(shape)
        if self.family == "custom":
            return np.asarray(self.sampler(rng, shape), dtype=np.float64).reshape(shape)
        raise ValueError(f"unknown noise family {self.family!r}")

    def to_dict(self) -> dict:
        eps = self.epsilon
        return {
            "family": self.family,
            "scale": self.scale,
            "epsilon": "inf" if eps is not None and math.isinf(eps) else eps,
            "sensitivity": self.sensitivity,
            "std": self.std,
            "pure_dp": self.pure_dp,
        }

    @classmethod
    def from_dict(cls, d: dict) -> NoiseSpec:
        family = d["family"]
        eps = float(d["epsilon"]) if d.get("epsilon") is not None else None
        if family == "laplace":
            return cls.laplace(eps, d.get("sensitivity", TABLE_SENSITIVITY))
        if family == "gaussian":
            return cls.gaussian(eps, d.get("sensitivity", TABLE_SENSITIVITY))
        raise ValueError(f"noise family {family!r} cannot be restored from JSON")


def _rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return rng_for(resolve_seed(seed), "privatize")


def sample_noise_vector(spec: NoiseSpec, count: int, seed=None) -> np.ndarray:
    """``count`` i.i.d. draws from ``spec``.  ``seed`` may be an int or a Generator."""
    if count < 1:
        raise ValueError(f"count must be >= 1, got {count}")
    return spec.draw(_rng(seed), (int(count),))


def perturb_table(t: CountTable, spec: NoiseSpec, seed: int | None = None) -> NoisyTable:
    """Add independent noise from ``spec`` to every cell of ``t``.

    The declared size of the result is the exact ``t.n`` (public under DP).
    The seed actually used is stored in the result.
    """
    seed = resolve_seed(seed)
    noise = spec.draw(rng_for(seed, "privatize"), t.shape)
    return NoisyTable(t.counts + noise, t.n, spec, seed)


def release_exact(t: CountTable) -> NoisyTable:
    """Wrap an exact table as a noise-free release (epsilon = inf)."""
    return NoisyTable(t.counts.astype(np.float64), t.n, NoiseSpec.none(), None)
