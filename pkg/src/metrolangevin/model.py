"""One-dimensional potentials and diffusion coefficients.

All models are scalar: the position q is a float on either the unit torus
(period 1) or the real line. Potentials carry hand-written derivatives so the
modified proposal (which needs V''') and the generator checks (which need up
to V^(5)) never depend on automatic differentiation.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from . import _kernels as K

__all__ = [
    "PotentialKind",
    "Space",
    "DiffusionKind",
    "Model1D",
    "DiffusionCoeff1D",
    "ModifiedCoeffs",
    "UNIT_DIFFUSION",
    "eval_potential",
    "modified_coefficients",
    "total_drift_mult",
    "wrap_position",
    "potential_derivatives",
    "diffusion_derivatives",
]

TWO_PI = 2.0 * math.pi


class PotentialKind(enum.Enum):
    QUARTIC = "quartic"
    COSINE = "cosine"
    ZERO = "zero"
    HARMONIC = "harmonic"

    @property
    def code(self) -> int:
        return _POT_CODES[self]


class Space(enum.Enum):
    TORUS = "torus"
    LINE = "line"

    @property
    def code(self) -> int:
        return K.SPACE_TORUS if self is Space.TORUS else K.SPACE_LINE


class DiffusionKind(enum.Enum):
    UNIT = "unit"
    COSINE_SQUARED = "cosine-squared"

    @property
    def code(self) -> int:
        return K.DIFF_UNIT if self is DiffusionKind.UNIT else K.DIFF_COSSQ


_POT_CODES = {
    PotentialKind.QUARTIC: K.POT_QUARTIC,
    PotentialKind.COSINE: K.POT_COSINE,
    PotentialKind.ZERO: K.POT_ZERO,
    PotentialKind.HARMONIC: K.POT_HARMONIC,
}

_DEFAULT_SPACE = {
    PotentialKind.QUARTIC: Space.LINE,
    PotentialKind.COSINE: Space.TORUS,
    PotentialKind.ZERO: Space.TORUS,
    PotentialKind.HARMONIC: Space.LINE,
}


@dataclass(frozen=True)
class Model1D:
    """Potential, configuration space and inverse temperature."""

    potential: PotentialKind
    space: Space
    beta: float = 1.0

    def __post_init__(self):
        if not self.beta > 0:
            raise ValueError(f"beta must be positive, got {self.beta}")
        if self.space is Space.TORUS and self.potential in (PotentialKind.QUARTIC, PotentialKind.HARMONIC):
            raise ValueError(f"{self.potential.value} potential is not periodic")

    @classmethod
    def named(cls, name: str, beta: float = 1.0, space: str | None = None) -> "Model1D":
        kind = PotentialKind(name)
        sp = Space(space) if space is not None else _DEFAULT_SPACE[kind]
        return cls(kind, sp, float(beta))

    @property
    def periodic(self) -> bool:
        return self.space is Space.TORUS


@dataclass(frozen=True)
class DiffusionCoeff1D:
    """Scalar diffusion coefficient M(q) > 0."""

    kind: DiffusionKind = DiffusionKind.UNIT

    @classmethod
    def named(cls, name: str) -> "DiffusionCoeff1D":
        return cls(DiffusionKind(name))

    def value(self, q):
        return diffusion_derivatives(self, q, 0)[0]

    def derivative(self, q):
        return diffusion_derivatives(self, q, 1)[1]

    def sqrt(self, q):
        if self.kind is DiffusionKind.UNIT:
            return np.ones_like(np.asarray(q, dtype=float))[()]
        return np.abs(0.5 * (1.5 + np.cos(TWO_PI * np.asarray(q, dtype=float))))[()]


UNIT_DIFFUSION = DiffusionCoeff1D(DiffusionKind.UNIT)


@dataclass(frozen=True)
class ModifiedCoeffs:
    sigma: float
    f_corr: float


def eval_potential(model: Model1D, q: float, max_order: int = 3) -> list[float]:
    """[V, V', V'', V'''] at q, truncated after ``max_order``."""
    if not 0 <= max_order <= 3:
        raise ValueError(f"max_order must be in 0..3, got {max_order}")
    vals = K.potential(model.potential.code, float(q))
    return list(vals[: max_order + 1])


def modified_coefficients(model: Model1D, q: float) -> ModifiedCoeffs:
    """Scale and drift corrections of the modified proposal.

    sigma = beta V''/3 and f_corr = (beta/6)(V''' - beta V'' V').
    """
    sigma, f_corr = K.modified_coeffs(model.potential.code, model.beta, float(q))
    return ModifiedCoeffs(sigma, f_corr)


def total_drift_mult(model: Model1D, M: DiffusionCoeff1D, q: float) -> float:
    """F(q) = -beta M(q) V'(q) + M'(q)."""
    return K.total_drift(model.potential.code, M.kind.code, model.beta, float(q))


def wrap_position(space: Space, q: float) -> float:
    return K.wrap(space.code, float(q))


def potential_derivatives(model: Model1D, q, n: int = 5) -> list[np.ndarray]:
    """Vectorized derivatives V, V', ..., V^(n) for n <= 5."""
    q = np.asarray(q, dtype=float)
    kind = model.potential
    if kind is PotentialKind.COSINE:
        c, s = np.cos(TWO_PI * q), np.sin(TWO_PI * q)
        w = TWO_PI
        out = [c, -w * s, -w**2 * c, w**3 * s, w**4 * c, -w**5 * s]
    elif kind is PotentialKind.QUARTIC:
        z = np.zeros_like(q)
        out = [q**4, 4 * q**3, 12 * q**2, 24 * q, 24 + z, z]
    elif kind is PotentialKind.HARMONIC:
        z = np.zeros_like(q)
        out = [0.5 * q**2, q, 1 + z, z, z, z]
    else:
        z = np.zeros_like(q)
        out = [z] * 6
    return out[: n + 1]


def diffusion_derivatives(M: DiffusionCoeff1D, q, n: int = 3) -> list[np.ndarray]:
    """Vectorized M, M', ..., M^(n) for n <= 3."""
    q = np.asarray(q, dtype=float)
    if M.kind is DiffusionKind.UNIT:
        z = np.zeros_like(q)
        out = [1 + z, z, z, z]
    else:
        c, s = np.cos(TWO_PI * q), np.sin(TWO_PI * q)
        # M = h^2 with h = (1.5 + cos 2 pi q)/2
        h = 0.5 * (1.5 + c)
        h1 = -math.pi * s
        h2 = -2 * math.pi**2 * c
        h3 = 4 * math.pi**3 * s
        out = [h * h, 2 * h * h1, 2 * h1 * h1 + 2 * h * h2, 6 * h1 * h2 + 2 * h * h3]
    return [x[()] for x in out[: n + 1]]
