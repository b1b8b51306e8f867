"""Deterministic ground truths for the diffusion constant and the generator.

* ``analytic_diffusion_1d``: the diffusion constant as the linear response of
  a constant external force eta, using the closed-form stationary density of
  the tilted dynamics on the circle.
* ``lifson_jackson_oracle``: the classical 1/(<e^{bV}><e^{-bV}>) formula, an
  independent check for additive noise.
* ``apply_generator`` and ``weak_expansion_residual``: the continuous
  generator L and L^2 applied to closed-form observables, and the mismatch
  between the one-step Markov operator (by Gauss-Hermite quadrature over G)
  and a (L + dt/2 L^2).
* ``exact_chain_diffusion``: the diffusion constant of the discrete chain
  itself, computed from a Nystrom discretization of its transition operator.
  Used to tell timestep bias from Monte Carlo noise.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import cumulative_trapezoid, simpson
from scipy.special import roots_hermitenorm

from .accept import AcceptanceRule, acceptance_probability, bias_profile
from .model import (
    UNIT_DIFFUSION,
    DiffusionCoeff1D,
    Model1D,
    diffusion_derivatives,
    potential_derivatives,
)
from .proposal import Proposal, ProposalKind, propose_array

__all__ = [
    "QuadratureRule",
    "QuadratureGrid",
    "QuadratureNotConverged",
    "ObservableKind",
    "GeneratorObservable",
    "gibbs_density",
    "gibbs_mean",
    "gibbs_cdf",
    "analytic_diffusion_1d",
    "lifson_jackson_oracle",
    "apply_generator",
    "weak_expansion_residual",
    "gauss_hermite_normal",
    "exact_chain_diffusion",
    "exact_chain_einstein",
    "DEFAULT_ETA",
]

DEFAULT_ETA = 1e-3
CONVERGENCE_RTOL = 1e-6
TWO_PI = 2.0 * math.pi


class QuadratureNotConverged(ArithmeticError):
    pass


class QuadratureRule(enum.Enum):
    TRAPEZOID = "trapezoid"
    SIMPSON = "simpson"


@dataclass(frozen=True)
class QuadratureGrid:
    """Composite rule on [0, 1] with ``n_points`` intervals (both endpoints kept)."""

    n_points: int = 4096
    rule: QuadratureRule = QuadratureRule.SIMPSON

    def __post_init__(self):
        n = self.n_points
        if n < 16 or n & (n - 1):
            raise ValueError(f"n_points must be a power of two >= 16, got {n}")

    @property
    def nodes(self) -> np.ndarray:
        return np.linspace(0.0, 1.0, self.n_points + 1)

    @property
    def weights(self) -> np.ndarray:
        n = self.n_points
        h = 1.0 / n
        w = np.ones(n + 1)
        if self.rule is QuadratureRule.SIMPSON:
            w[1:-1:2] = 4.0
            w[2:-1:2] = 2.0
            return w * h / 3.0
        w[0] = w[-1] = 0.5
        return w * h

    def integrate(self, values) -> float:
        values = np.asarray(values, dtype=float)
        if self.rule is QuadratureRule.SIMPSON:
            return float(simpson(values, x=self.nodes))
        return float(np.trapezoid(values, self.nodes))

    def doubled(self) -> "QuadratureGrid":
        return QuadratureGrid(2 * self.n_points, self.rule)


def _require_periodic(model: Model1D):
    if not model.periodic:
        raise ValueError(f"{model.potential.value} on the line has no periodic reference value")


def gibbs_density(model: Model1D, q) -> np.ndarray:
    """Normalized e^{-beta V} on the unit torus (normalization by a fine rule)."""
    _require_periodic(model)
    g = QuadratureGrid(8192)
    z = g.integrate(np.exp(-model.beta * potential_derivatives(model, g.nodes, 0)[0]))
    return np.exp(-model.beta * potential_derivatives(model, q, 0)[0]) / z


def gibbs_mean(model: Model1D, f, grid: QuadratureGrid | None = None) -> float:
    """Integral of the callable ``f`` against the Gibbs measure on the torus."""
    grid = grid or QuadratureGrid()
    x = grid.nodes
    w = np.exp(-model.beta * potential_derivatives(model, x, 0)[0])
    return grid.integrate(w * f(x)) / grid.integrate(w)


def gibbs_cdf(model: Model1D, n: int = 1 << 14):
    """Vectorized Gibbs CDF on [0, 1) for goodness-of-fit tests."""
    _require_periodic(model)
    x = np.linspace(0.0, 1.0, n + 1)
    c = cumulative_trapezoid(np.exp(-model.beta * potential_derivatives(model, x, 0)[0]), x, initial=0.0)
    c /= c[-1]
    return lambda q: np.interp(q, x, c)


def _tilted_response(model: Model1D, M: DiffusionCoeff1D, grid: QuadratureGrid, eta: float):
    """(psi_eta on the grid nodes, int F psi_eta, int psi_eta before normalization)."""
    n = grid.n_points
    x = grid.nodes
    beta = model.beta
    V = potential_derivatives(model, x[:-1], 1)
    Mv, dM = diffusion_derivatives(M, x[:-1], 1)
    g = np.exp(beta * V[0]) / Mv
    c = grid.weights * np.exp(-eta * x)
    # inner[i] = sum_j c_j g[(i + j) mod n]; node y = 1 coincides with y = 0
    c_per = c[:-1].copy()
    c_per[0] += c[-1]
    inner = np.real(np.fft.ifft(np.fft.fft(g) * np.conj(np.fft.fft(c_per))))
    psi = np.exp(-beta * V[0]) * inner
    psi = np.append(psi, psi[0])
    F = np.append(-beta * Mv * V[1] + dM, 0.0)
    F[-1] = F[0]
    z = grid.integrate(psi)
    psi /= z
    return psi, grid.integrate(F * psi), z


def _diffusion_lr(model, M, grid, eta):
    x = grid.nodes
    rho = np.exp(-model.beta * potential_derivatives(model, x, 0)[0])
    m_avg = grid.integrate(rho * diffusion_derivatives(M, x, 0)[0]) / grid.integrate(rho)
    _, fp, _ = _tilted_response(model, M, grid, eta)
    _, fm, _ = _tilted_response(model, M, grid, -eta)
    return m_avg + (fp - fm) / (2.0 * eta)


def _converged(fn, grid: QuadratureGrid, what: str) -> float:
    a = fn(grid)
    b = fn(grid.doubled())
    if abs(a - b) > CONVERGENCE_RTOL * abs(b):
        raise QuadratureNotConverged(
            f"{what}: {grid.n_points} -> {2 * grid.n_points} points changed the result from {a!r} to {b!r}")
    return b


def analytic_diffusion_1d(model: Model1D, M: DiffusionCoeff1D = UNIT_DIFFUSION,
                          grid: QuadratureGrid | None = None, eta: float = DEFAULT_ETA) -> float:
    """Self-diffusion constant of the continuous dynamics on the unit torus.

    The response int F psi_eta to a constant force eta is differentiated by a
    central difference in eta; the result is returned at the doubled grid
    after checking it moved by less than 1e-6 relative.
    """
    _require_periodic(model)
    if not eta > 0:
        raise ValueError(f"eta must be positive, got {eta}")
    return _converged(lambda g: _diffusion_lr(model, M, g, eta), grid or QuadratureGrid(),
                      "linear response diffusion")


def lifson_jackson_oracle(model: Model1D, grid: QuadratureGrid | None = None) -> float:
    """1 / (<e^{beta V}> <e^{-beta V}>) with uniform period averages (additive noise)."""
    _require_periodic(model)

    def lj(g):
        v = model.beta * potential_derivatives(model, g.nodes, 0)[0]
        return 1.0 / (g.integrate(np.exp(v)) * g.integrate(np.exp(-v)))

    return _converged(lj, grid or QuadratureGrid(), "Lifson-Jackson average")


# ---------------------------------------------------------------------------
# generator


class ObservableKind(enum.Enum):
    CONSTANT = "constant"
    POTENTIAL = "potential"
    FORCE = "force"
    SIN = "sin"
    COS = "cos"


@dataclass(frozen=True)
class GeneratorObservable:
    """Closed-form observable psi with derivatives up to order 4.

    ``POTENTIAL`` is V itself and ``FORCE`` is V' of the model it is
    evaluated with; ``SIN``/``COS`` are sin(2 pi m q) and cos(2 pi m q).
    """

    kind: ObservableKind
    harmonic: int = 1

    @classmethod
    def named(cls, name: str, harmonic: int = 1) -> "GeneratorObservable":
        return cls(ObservableKind(name), harmonic)

    def derivatives(self, model: Model1D, q, n: int = 4) -> list[np.ndarray]:
        q = np.asarray(q, dtype=float)
        if not 0 <= n <= 4:
            raise ValueError(f"derivative order must be in 0..4, got {n}")
        if self.kind is ObservableKind.CONSTANT:
            return [np.ones_like(q)] + [np.zeros_like(q)] * n
        if self.kind is ObservableKind.POTENTIAL:
            return potential_derivatives(model, q, n)
        if self.kind is ObservableKind.FORCE:
            return potential_derivatives(model, q, n + 1)[1:]
        w = TWO_PI * self.harmonic
        s, c = np.sin(w * q), np.cos(w * q)
        if self.kind is ObservableKind.SIN:
            cyc = [s, w * c, -w**2 * s, -w**3 * c, w**4 * s]
        else:
            cyc = [c, -w * s, -w**2 * c, w**3 * s, w**4 * c]
        return cyc[: n + 1]

    def __call__(self, model: Model1D, q):
        return self.derivatives(model, q, 0)[0]


def apply_generator(model: Model1D, psi: GeneratorObservable, q, order: int = 1,
                    M: DiffusionCoeff1D = UNIT_DIFFUSION):
    """L psi (order 1) or L^2 psi (order 2) with L = b d/dq + M d2/dq2, b = -beta M V' + M'."""
    if order not in (1, 2):
        raise ValueError(f"order must be 1 or 2, got {order}")
    q = np.asarray(q, dtype=float)
    beta = model.beta
    p = psi.derivatives(model, q, 2 * order)
    V = potential_derivatives(model, q, 3)
    m = diffusion_derivatives(M, q, 3)
    b = -beta * m[0] * V[1] + m[1]
    if order == 1:
        return (b * p[1] + m[0] * p[2])[()]
    b1 = -beta * (m[1] * V[1] + m[0] * V[2]) + m[2]
    b2 = -beta * (m[2] * V[1] + 2 * m[1] * V[2] + m[0] * V[3]) + m[3]
    g1 = b1 * p[1] + b * p[2] + m[1] * p[2] + m[0] * p[3]
    g2 = b2 * p[1] + 2 * b1 * p[2] + b * p[3] + m[2] * p[2] + 2 * m[1] * p[3] + m[0] * p[4]
    return (b * g1 + m[0] * g2)[()]


def gauss_hermite_normal(n: int) -> tuple[np.ndarray, np.ndarray]:
    """Nodes and weights integrating against the standard normal density."""
    x, w = roots_hermitenorm(n)
    return x, w / math.sqrt(TWO_PI)


WEAK_PROPOSAL_TOL = 1e-14
WEAK_PROPOSAL_MAX_ITER = 500


def _as_proposal(kind) -> Proposal:
    if isinstance(kind, Proposal):
        return kind
    kind = ProposalKind(kind) if isinstance(kind, str) else kind
    return Proposal(kind, tol=WEAK_PROPOSAL_TOL, max_iter=WEAK_PROPOSAL_MAX_ITER)


def weak_expansion_residual(kind, rule: AcceptanceRule, model: Model1D, psi: GeneratorObservable,
                            dt: float, gh_points: int = 64, n_q: int = 64) -> float:
    """max_q |(P_dt psi - psi)(q)/dt - a (L psi + dt/2 L^2 psi)(q)|.

    P_dt psi(q) = E_G[A(q, Phi(q, G)) psi(Phi) + (1 - A) psi(q)] is evaluated
    with ``gh_points`` Gauss-Hermite nodes; q runs over ``n_q`` points of one
    period (torus) or of [-1, 1) (line). ``kind`` may be a Proposal to
    control the midpoint solver; by default the solver runs to 1e-14 so that
    its residual does not pollute the O(dt^2) terms.
    """
    if gh_points < 32:
        raise ValueError(f"gh_points must be >= 32, got {gh_points}")
    prop = _as_proposal(kind)
    if prop.multiplicative:
        raise ValueError("weak expansion residual is defined for additive-noise proposals")
    a = bias_profile(prop.kind, rule).a
    q = np.arange(n_q) / n_q if model.periodic else -1.0 + 2.0 * np.arange(n_q) / n_q
    x, w = gauss_hermite_normal(gh_points)
    Q, G = np.meshgrid(q, x, indexing="ij")
    qp, alpha, _ = propose_array(prop, model, Q, G, dt)
    A = acceptance_probability(rule, alpha)
    psi_q = psi(model, q)
    jump = (A * (psi(model, qp) - psi_q[:, None])) @ w
    lhs = jump / dt
    rhs = a * (apply_generator(model, psi, q, 1) + 0.5 * dt * apply_generator(model, psi, q, 2))
    return float(np.max(np.abs(lhs - rhs)))


# ---------------------------------------------------------------------------
# exact diffusion constant of the discrete chain


def _transition_operators(prop: Proposal, rule: AcceptanceRule, model: Model1D, dt: float,
                          n: int, gh: int):
    """Nystrom matrices of the chain's Markov operator on n periodic nodes.

    Proposed points off the grid are handled by trigonometric interpolation,
    so the matrices are exact for band-limited functions up to the
    Gauss-Hermite error in G. Returns the nodes, P (the Markov operator),
    B (f -> E[delta f(q_next)]), and the conditional moments E[delta | q],
    E[delta^2 | q] of the accepted increment delta.
    """
    x, w = gauss_hermite_normal(gh)
    q = np.arange(n) / n
    Q, G = np.meshgrid(q, x, indexing="ij")
    qp, alpha, _ = propose_array(prop, model, Q, G, dt)
    A = acceptance_probability(rule, alpha)
    jump = qp - q[:, None]
    m = np.fft.fftfreq(n, 1.0 / n)
    P = np.zeros((n, n))
    B = np.zeros((n, n))
    for i in range(n):
        E = np.exp(2j * np.pi * np.multiply.outer(qp[i], m))
        E[:, n // 2] = np.cos(np.pi * n * qp[i])
        lag = np.real(np.fft.fft(E, axis=1)) / n
        wa = w * A[i]
        P[i] = wa @ lag
        P[i, i] += 1.0 - wa.sum()
        B[i] = (wa * jump[i]) @ lag
    h = (w * A * jump).sum(axis=1)
    s = (w * A * jump**2).sum(axis=1)
    return q, P, B, h, s


def _poisson(P, pi, f):
    n = len(pi)
    lhs = np.vstack([np.eye(n) - P, pi])
    return np.linalg.lstsq(lhs, np.append(f - pi @ f, 0.0), rcond=None)[0]


def exact_chain_einstein(kind, rule: AcceptanceRule, model: Model1D, dt: float,
                         M: DiffusionCoeff1D = UNIT_DIFFUSION, n: int = 256, gh: int = 96) -> float:
    """lim Var(Q^N - Q^0) / (2 a N dt) for the chain at step ``dt``.

    The asymptotic variance of the displacement is E[delta^2] + 2 sum_{k>=1}
    E[delta_0 delta_k], with the correlation sum obtained from the discrete
    Poisson equation for the conditional mean increment.
    """
    _require_periodic(model)
    prop = _as_proposal(kind)
    if prop.multiplicative:
        prop = Proposal(prop.kind, M, prop.tol, prop.max_iter)
    q, P, B, h, s = _transition_operators(prop, rule, model, dt, n, gh)
    pi = np.exp(-model.beta * potential_derivatives(model, q, 0)[0])
    pi /= pi.sum()
    u = _poisson(P, pi, h)
    var = pi @ s + 2.0 * pi @ (B @ u)
    a = bias_profile(prop.kind, rule).a
    return float(var / (2.0 * a * dt))


def exact_chain_diffusion(kind, rule: AcceptanceRule, model: Model1D, dt: float,
                          M: DiffusionCoeff1D = UNIT_DIFFUSION, n: int = 256, gh: int = 96) -> float:
    """The expectation of the Green-Kubo estimator for the chain at step ``dt``.

    Solves the discrete Poisson equation (I - P) u = f with f the
    mean-zero force observable (V' for additive noise, F for multiplicative),
    then assembles the same estimator as the Monte Carlo code with infinite
    truncation time and infinitely many realizations.
    """
    _require_periodic(model)
    prop = _as_proposal(kind)
    if prop.multiplicative:
        prop = Proposal(prop.kind, M, prop.tol, prop.max_iter)
    q, P, _, _, _ = _transition_operators(prop, rule, model, dt, n, gh)
    beta = model.beta
    V = potential_derivatives(model, q, 1)
    pi = np.exp(-beta * V[0])
    pi /= pi.sum()
    if prop.multiplicative:
        Mv, dM = diffusion_derivatives(M, q, 1)
        f = -beta * Mv * V[1] + dM
    else:
        f = beta * V[1]
    f = f - pi @ f
    u = _poisson(P, pi, f)
    s = pi @ (f * u)
    f2 = pi @ (f * f)
    a = bias_profile(prop.kind, rule).a
    if prop.multiplicative:
        return float(pi @ Mv - a * dt * s)
    if rule is AcceptanceRule.BARKER:
        return float(1.0 - 0.5 * dt * (s - f2))
    if prop.kind in (ProposalKind.MIDPOINT, ProposalKind.HMC):
        return float(1.0 - dt * (s - 0.5 * f2))
    return float(1.0 - dt * s)
