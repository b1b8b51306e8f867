"""Proposal maps q' = Phi_dt(q, G) and their log acceptance ratios.

``alpha`` is always the exponent in the acceptance rules, i.e. the
Metropolis-Hastings ratio equals ``exp(-alpha)``. Positions are returned
unwrapped; periodization happens in the chain.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels as K
from .model import UNIT_DIFFUSION, DiffusionCoeff1D, DiffusionKind, Model1D

__all__ = [
    "ProposalKind",
    "Proposal",
    "ProposalOutcome",
    "SchemeError",
    "MidpointNoConvergence",
    "ModifiedDegenerateScale",
    "propose",
    "propose_array",
    "verlet_step",
    "reverse_draw",
    "DEFAULT_TOL",
    "DEFAULT_MAX_ITER",
]

DEFAULT_TOL = 1e-8
DEFAULT_MAX_ITER = 100


class SchemeError(ArithmeticError):
    """A proposal could not be evaluated at the requested timestep."""


class MidpointNoConvergence(SchemeError):
    pass


class ModifiedDegenerateScale(SchemeError):
    pass


class ProposalKind(enum.Enum):
    MALA = "mala"
    MODIFIED = "modified"
    MIDPOINT = "midpoint"
    HMC = "hmc"
    MALA_MULT = "mala-mult"

    @property
    def code(self) -> int:
        return _KIND_CODES[self]


_KIND_CODES = {
    ProposalKind.MALA: K.PROP_MALA,
    ProposalKind.MODIFIED: K.PROP_MODIFIED,
    ProposalKind.MIDPOINT: K.PROP_MIDPOINT,
    ProposalKind.HMC: K.PROP_HMC,
    ProposalKind.MALA_MULT: K.PROP_MALA_MULT,
}


@dataclass(frozen=True)
class Proposal:
    """A proposal family.

    ``diffusion`` is only used by ``MALA_MULT``; every other kind has additive
    noise. ``tol`` and ``max_iter`` control the midpoint fixed-point solve.
    """

    kind: ProposalKind
    diffusion: DiffusionCoeff1D = field(default=UNIT_DIFFUSION)
    tol: float = DEFAULT_TOL
    max_iter: int = DEFAULT_MAX_ITER

    def __post_init__(self):
        if self.kind is not ProposalKind.MALA_MULT and self.diffusion.kind is not DiffusionKind.UNIT:
            raise ValueError(f"{self.kind.value} proposal has additive noise; use mala-mult for M(q)")

    @classmethod
    def named(cls, name: str, diffusion: str = "unit", **kw) -> "Proposal":
        return cls(ProposalKind(name), DiffusionCoeff1D.named(diffusion), **kw)

    @property
    def multiplicative(self) -> bool:
        return self.kind is ProposalKind.MALA_MULT

    def codes(self) -> tuple[int, int]:
        return self.kind.code, self.diffusion.kind.code


@dataclass(frozen=True)
class ProposalOutcome:
    q_proposed: float
    alpha: float
    fixed_point_iters: int = 0


def _raise_for_status(status: int, dt: float):
    if status == K.STATUS_MIDPOINT_NO_CONVERGENCE:
        raise MidpointNoConvergence(f"midpoint fixed point did not converge at dt={dt}")
    if status == K.STATUS_MODIFIED_DEGENERATE:
        raise ModifiedDegenerateScale(f"1 + dt*sigma <= 0 at dt={dt}; dt must be below 1/max|sigma|")


def propose(proposal: Proposal, model: Model1D, q: float, G: float, dt: float) -> ProposalOutcome:
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt}")
    kind, dk = proposal.codes()
    qp, alpha, iters, status = K.propose(
        kind, model.potential.code, dk, model.beta, float(q), float(G), float(dt),
        proposal.tol, proposal.max_iter)
    _raise_for_status(status, dt)
    return ProposalOutcome(qp, alpha, iters)


def propose_array(proposal: Proposal, model: Model1D, q, G, dt: float):
    """Vectorized ``propose``; returns (q_proposed, alpha, iters) arrays."""
    q, G = np.broadcast_arrays(np.asarray(q, dtype=float), np.asarray(G, dtype=float))
    shape = q.shape
    kind, dk = proposal.codes()
    qp, alpha, iters, status = K.propose_many(
        kind, model.potential.code, dk, model.beta, np.ascontiguousarray(q).ravel(),
        np.ascontiguousarray(G).ravel(), float(dt), proposal.tol, proposal.max_iter)
    bad = status != K.STATUS_OK
    if bad.any():
        _raise_for_status(int(status[bad][0]), dt)
    return qp.reshape(shape), alpha.reshape(shape), iters.reshape(shape)


def verlet_step(model: Model1D, q: float, p: float, h: float) -> tuple[float, float]:
    """Position Verlet: half drift, full kick, half drift."""
    return K.verlet(model.potential.code, float(q), float(p), float(h))


def reverse_draw(proposal: Proposal, model: Model1D, q: float, G: float, dt: float) -> float:
    """The Gaussian draw that maps Phi_dt(q, G) back to q.

    With it, ``propose(q', G_rev)`` lands on q again and its alpha is minus
    the forward one (the detailed-balance identity of the ratio).
    """
    out = propose(proposal, model, q, G, dt)
    qp = out.q_proposed
    beta = model.beta
    pk = model.potential.code
    sq = math.sqrt(2.0 * dt)
    kind = proposal.kind
    if kind is ProposalKind.MALA:
        return (q - qp + beta * dt * K.potential(pk, qp)[1]) / sq
    if kind is ProposalKind.MODIFIED:
        sig, fc = K.modified_coeffs(pk, beta, qp)
        drift = dt * (-beta * K.potential(pk, qp)[1] + dt * fc)
        return (q - qp - drift) * math.sqrt(1.0 + dt * sig) / sq
    if kind is ProposalKind.MALA_MULT:
        dk = proposal.diffusion.kind.code
        drift = dt * K.total_drift(pk, dk, beta, qp)
        return (q - qp - drift) / (sq * math.sqrt(K.diffusion(dk, qp)[0]))
    if kind is ProposalKind.HMC:
        h = math.sqrt(2.0 * beta * dt)
        _, p_new = K.verlet(pk, q, G / math.sqrt(beta), h)
        return -p_new * math.sqrt(beta)
    # midpoint: the reverse move shares the midpoint (q + q')/2
    return (q - qp + beta * dt * K.potential(pk, 0.5 * (q + qp))[1]) / sq
