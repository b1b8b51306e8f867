"""Metropolis-Hastings and Barker acceptance rules."""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from . import _kernels as K
from .proposal import Proposal, ProposalKind

__all__ = [
    "AcceptanceRule",
    "SchemeBiasProfile",
    "Scheme",
    "bias_profile",
    "acceptance_probability",
    "decide",
]


class AcceptanceRule(enum.Enum):
    METROPOLIS = "metropolis"
    BARKER = "barker"

    @property
    def code(self) -> int:
        return K.RULE_MH if self is AcceptanceRule.METROPOLIS else K.RULE_BARKER


@dataclass(frozen=True)
class SchemeBiasProfile:
    """Quadrature prefactor ``a`` and timestep-bias exponent ``alpha_bias``.

    The discrete chain behaves like the continuous dynamics slowed down by
    ``a``; transport estimates converge with error O(dt**alpha_bias).
    """

    a: float
    alpha_bias: float


def bias_profile(kind: ProposalKind, rule: AcceptanceRule) -> SchemeBiasProfile:
    barker = rule is AcceptanceRule.BARKER
    a = 0.5 if barker else 1.0
    if kind in (ProposalKind.MIDPOINT, ProposalKind.HMC):
        return SchemeBiasProfile(a, 2.0 if barker else 1.5)
    if kind is ProposalKind.MALA_MULT:
        return SchemeBiasProfile(a, 1.0 if barker else 0.5)
    # first order proposals: the Barker rule keeps the O(dt) bias
    return SchemeBiasProfile(a, 1.0)


@dataclass(frozen=True)
class Scheme:
    proposal: Proposal
    rule: AcceptanceRule

    @classmethod
    def named(cls, proposal: str, rule: str, diffusion: str = "unit", **kw) -> "Scheme":
        return cls(Proposal.named(proposal, diffusion, **kw), AcceptanceRule(rule))

    @property
    def profile(self) -> SchemeBiasProfile:
        return bias_profile(self.proposal.kind, self.rule)

    @property
    def label(self) -> str:
        return f"{self.proposal.kind.value}+{self.rule.value}"


def acceptance_probability(rule: AcceptanceRule, alpha):
    """min(1, e^-alpha) or e^-alpha / (1 + e^-alpha); accepts scalars or arrays."""
    alpha = np.asarray(alpha, dtype=float)
    if rule is AcceptanceRule.METROPOLIS:
        out = np.exp(-np.maximum(alpha, 0.0))
    else:
        out = expit(-alpha)
    return out[()]


def decide(A, U):
    """Accept iff U <= A."""
    return np.asarray(U) <= np.asarray(A)
