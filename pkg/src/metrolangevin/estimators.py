"""Monte Carlo studies: strong error, rejection rates, self-diffusion.

Every study draws its initial conditions from one long MALA chain
(``thermalized_positions``) and runs its realizations on counter-based
streams indexed by realization number, in fixed blocks. Results therefore
depend on the seed only, not on ``workers``.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels as K
from .accept import AcceptanceRule, bias_profile
from .chain import _kernel_args, run_ensemble
from .model import DiffusionCoeff1D, Model1D, diffusion_derivatives, potential_derivatives
from .parallel import block_ranges, map_blocks
from .proposal import Proposal, ProposalKind, _raise_for_status
from .reference import gibbs_mean
from .stats import RunningMoments, loglog_fit

__all__ = [
    "StrongErrorConfig",
    "StudyResult",
    "DiffusionMethod",
    "DiffusionEstimate",
    "InsufficientSignal",
    "thermalized_positions",
    "strong_error_samples",
    "strong_error_study",
    "rejection_scaling_study",
    "green_kubo_diffusion",
    "einstein_diffusion",
    "bias_order_fit",
    "asymptotic_variance_ratio",
    "asymptotic_variance_error",
    "DT_THERMALIZATION",
    "BURN_IN",
    "GK_STRIDE",
    "EINSTEIN_STRIDE",
]

DT_THERMALIZATION = 0.005
BURN_IN = 10_000
GK_STRIDE = 20
EINSTEIN_STRIDE = 1000
BLOCK = 256

# substreams reserved for the thermalization chain and for the second rule
# of a variance-ratio comparison
SUBSTREAM_THERMALIZE = 0xFFFF0000
SUBSTREAM_RATIO = 0xFFFF0001


class InsufficientSignal(ValueError):
    """Fewer than three timesteps have a bias above their statistical noise."""


@dataclass(frozen=True)
class StrongErrorConfig:
    """Coupled reference and coarse chains for the strong error.

    The horizon is ``T``; the reference chain makes round(T/dt_ref) steps. A
    coarse chain with factor k is compared at the floor(T/(k dt_ref)) times
    it shares with the reference. With ``strict`` the horizon must be an
    exact multiple of every k dt_ref.
    """

    dt_ref: float
    k_values: tuple[int, ...]
    T: float
    I: int
    model: Model1D
    proposal: Proposal
    rule: AcceptanceRule
    strict: bool = False

    def __post_init__(self):
        if not self.dt_ref > 0 or not self.T > 0:
            raise ValueError("dt_ref and T must be positive")
        if self.I < 1:
            raise ValueError(f"I must be >= 1, got {self.I}")
        if not self.k_values or min(self.k_values) < 1:
            raise ValueError("k_values must be non-empty positive integers")
        n = self.T / self.dt_ref
        if abs(n - round(n)) > 1e-9 * n:
            raise ValueError(f"T/dt_ref = {n} is not an integer")
        for k in self.k_values:
            if round(n) < k:
                raise ValueError(f"coarse step k={k} exceeds the horizon")
            if self.strict and round(n) % k:
                raise ValueError(f"T is not a multiple of k*dt_ref for k={k}")

    @property
    def n_ref(self) -> int:
        return int(round(self.T / self.dt_ref))


@dataclass
class StudyResult:
    dt_values: list
    estimates: list
    std_errors: list
    fit_slope: float = float("nan")
    fit_intercept: float = float("nan")
    series: str = ""
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        if not len(self.dt_values) == len(self.estimates) == len(self.std_errors):
            raise ValueError("dt_values, estimates and std_errors must have equal lengths")
        if any(s < 0 for s in self.std_errors):
            raise ValueError("std_errors must be non-negative")

    def fit(self) -> "StudyResult":
        self.fit_slope, self.fit_intercept = loglog_fit(self.dt_values, self.estimates)
        return self


class DiffusionMethod(enum.Enum):
    GREEN_KUBO = "green-kubo"
    EINSTEIN = "einstein"


@dataclass(frozen=True)
class DiffusionEstimate:
    dt: float
    method: DiffusionMethod
    value: float
    std_error: float

    def __post_init__(self):
        if not self.std_error >= 0:
            raise ValueError("std_error must be non-negative")


def _seed(seed) -> np.uint64:
    return np.uint64(int(seed) & ((1 << 64) - 1))


def thermalized_positions(model: Model1D, n: int, stride: int, seed: int,
                          dt_thm: float = DT_THERMALIZATION, burn_in: int = BURN_IN) -> np.ndarray:
    """``n`` positions from one MALA chain, every ``stride`` steps after ``burn_in``.

    MALA with the Metropolis rule samples the Gibbs measure exactly for any
    dt, so the same chain serves additive and multiplicative studies.
    """
    prop = Proposal(ProposalKind.MALA)
    args = _kernel_args(prop, AcceptanceRule.METROPOLIS, model, dt_thm)
    # record index j holds the state after j*stride steps; the burn-in part is discarded
    first = burn_in // stride + 1
    total = (first + n - 1) * stride
    rec_q = np.empty((1, total // stride + 1))
    rec_qq = np.empty_like(rec_q)
    out = K.run_chains(*args, _seed(seed), SUBSTREAM_THERMALIZE, np.zeros(1, dtype=np.uint64),
                       np.zeros(1), total, 0, stride, rec_q, rec_qq)
    _raise_for_status(out[6], dt_thm)
    return np.ascontiguousarray(rec_q[0, first:first + n])


# ---------------------------------------------------------------------------
# strong error


def _strong_block(args, seed, stream_ids, q0, n_ref, ks, share):
    kind, rule, pk, dk, beta, space, _, tol, maxiter = args
    return K.strong_error_paths(kind, rule, pk, dk, beta, space, args[6], tol, maxiter,
                                seed, stream_ids, q0, n_ref, ks, share)


def strong_error_samples(cfg: StrongErrorConfig, seed: int, workers: int | None = None,
                         share_uniforms: bool = False) -> np.ndarray:
    """Per-realization maximal deviations, shape (I, len(k_values))."""
    q0 = thermalized_positions(cfg.model, cfg.I, GK_STRIDE, seed)
    ids = np.arange(cfg.I, dtype=np.uint64)
    ks = np.asarray(cfg.k_values, dtype=np.int64)
    args = _kernel_args(cfg.proposal, cfg.rule, cfg.model, cfg.dt_ref)
    tasks = [(args, _seed(seed), ids[a:b], q0[a:b], cfg.n_ref, ks, share_uniforms)
             for a, b in block_ranges(cfg.I, BLOCK)]
    parts = map_blocks(_strong_block, tasks, workers)
    for _, st in parts:
        _raise_for_status(st, cfg.dt_ref)
    return np.concatenate([d for d, _ in parts])


def strong_error_study(cfg: StrongErrorConfig, seed: int, workers: int | None = None,
                       share_uniforms: bool = False) -> StudyResult:
    """E_k = sqrt(mean_i d_k^2) against k*dt_ref, with its CLT standard error.

    The standard error is E_k sigma_k / (2 mean(d_k^2) sqrt(I)), sigma_k the
    sample standard deviation of d_k^2.
    """
    d = strong_error_samples(cfg, seed, workers, share_uniforms)
    d2 = d**2
    m = d2.mean(axis=0)
    est = np.sqrt(m)
    sig = d2.std(axis=0, ddof=1) if cfg.I > 1 else np.zeros_like(m)
    with np.errstate(invalid="ignore", divide="ignore"):
        se = np.where(m > 0, est * sig / (2.0 * m * math.sqrt(cfg.I)), 0.0)
    dts = [k * cfg.dt_ref for k in cfg.k_values]
    res = StudyResult(dts, est.tolist(), se.tolist(), series="strong_error",
                      extra={"compared_steps": [cfg.n_ref // k for k in cfg.k_values]})
    if np.all(est > 0) and len(dts) > 1:
        res.fit()
    return res


# ---------------------------------------------------------------------------
# rejection rates

SERIES_MH = "one_minus_A"
SERIES_BARKER_MEAN = "two_A_minus_one"
SERIES_BARKER_ABS = "abs_two_A_minus_one"


def rejection_scaling_study(proposal: Proposal, rule: AcceptanceRule, model: Model1D, dt_values,
                            n_steps: int, seed: int, n_chains: int = 100,
                            workers: int | None = None) -> list[StudyResult]:
    """Average rejection statistics per dt, split over ``n_chains`` equilibrium chains.

    Metropolis: mean(1 - A). Barker: |mean(2A - 1)| and mean|2A - 1|.
    Standard errors come from the spread of the per-chain averages.
    """
    if n_steps < n_chains:
        raise ValueError("n_steps must be at least n_chains")
    per_chain = n_steps // n_chains
    q0 = thermalized_positions(model, n_chains, EINSTEIN_STRIDE, seed)
    names = [SERIES_MH] if rule is AcceptanceRule.METROPOLIS else [SERIES_BARKER_MEAN, SERIES_BARKER_ABS]
    cols = {SERIES_MH: 3, SERIES_BARKER_MEAN: 4, SERIES_BARKER_ABS: 5}
    acc = {s: ([], []) for s in names}
    for dt in dt_values:
        ens = run_ensemble(proposal, rule, model, dt, per_chain, seed, q0, workers=workers, block=1)
        arrays = [None, None, None, ens.sum_one_minus_A, ens.sum_two_A_minus_one, ens.sum_abs_two_A_minus_one]
        for s in names:
            x = arrays[cols[s]] / per_chain
            mom = RunningMoments.from_samples(x)
            acc[s][0].append(float(abs(mom.mean)))
            acc[s][1].append(float(mom.std_error))
    out = []
    for s in names:
        r = StudyResult(list(map(float, dt_values)), acc[s][0], acc[s][1], series=s,
                        extra={"n_steps": per_chain * n_chains, "n_chains": n_chains})
        out.append(r.fit() if len(dt_values) > 1 else r)
    return out


# ---------------------------------------------------------------------------
# self-diffusion


def _integer_ratio(tau: float, dt: float, what: str) -> int:
    r = tau / dt
    n = int(round(r))
    if n < 1 or abs(r - n) > 1e-9 * max(r, 1.0):
        raise ValueError(f"{what}/dt = {r} must be a positive integer")
    return n


def _with_diffusion(proposal: Proposal, M: DiffusionCoeff1D | None) -> Proposal:
    if M is not None and proposal.multiplicative and proposal.diffusion != M:
        return Proposal(proposal.kind, M, proposal.tol, proposal.max_iter)
    return proposal


def _gk_block(args, seed, stream_ids, q0, n_lag, obs):
    out, st = K.run_observed(*args, seed, 0, stream_ids, q0, n_lag, obs)
    return out[:, :1] * out, st


def green_kubo_diffusion(proposal: Proposal, rule: AcceptanceRule, model: Model1D, dt: float,
                         tau: float, K_real: int, seed: int, M: DiffusionCoeff1D | None = None,
                         subsample_stride: int = GK_STRIDE, dt_thermalization: float = DT_THERMALIZATION,
                         workers: int | None = None) -> DiffusionEstimate:
    """Green-Kubo estimate from K_real chains of tau/dt steps.

    Additive noise, observable f = V':
      first order proposals + Metropolis   D = 1 - b^2 dt sum_{n>=0} E[f(q^n) f(q^0)]
      midpoint/HMC + Metropolis           D = 1 - b^2 dt (1/2 E_mu[f^2] + sum_{n>=1} ...)
      any proposal + Barker               D = 1 - b^2 dt/2 sum_{n>=1} ...
    Multiplicative noise, observable F:   D = E_mu[M] - a dt sum_{n>=0} E[F(q^n) F(q^0)].
    The lag-0 term is replaced by its Gibbs average computed by quadrature;
    it has the same expectation and no sampling noise.
    """
    n_lag = _integer_ratio(tau, dt, "tau")
    proposal = _with_diffusion(proposal, M)
    q0 = thermalized_positions(model, K_real, subsample_stride, seed, dt_thermalization)
    ids = np.arange(K_real, dtype=np.uint64)
    args = _kernel_args(proposal, rule, model, dt)
    obs = 1 if proposal.multiplicative else 0
    tasks = [(args, _seed(seed), ids[a:b], q0[a:b], n_lag, obs) for a, b in block_ranges(K_real, BLOCK)]
    parts = map_blocks(_gk_block, tasks, workers)
    for _, st in parts:
        _raise_for_status(st, dt)
    prod = np.concatenate([p for p, _ in parts])
    tail = prod[:, 1:].sum(axis=1)

    beta = model.beta
    a = bias_profile(proposal.kind, rule).a
    if obs == 1:
        Md = proposal.diffusion

        def F(x):
            Mv, dM = diffusion_derivatives(Md, x, 1)
            return -beta * Mv * potential_derivatives(model, x, 1)[1] + dM

        f2 = gibbs_mean(model, lambda x: F(x) ** 2) if model.periodic else float(np.mean(prod[:, 0]))
        m_avg = gibbs_mean(model, lambda x: diffusion_derivatives(Md, x, 0)[0]) if model.periodic else 1.0
        samples = m_avg - a * dt * (f2 + tail)
    else:
        if model.periodic:
            f2 = gibbs_mean(model, lambda x: potential_derivatives(model, x, 1)[1] ** 2)
        else:
            f2 = float(np.mean(prod[:, 0]))
        b2 = beta * beta
        if rule is AcceptanceRule.BARKER:
            samples = 1.0 - 0.5 * b2 * dt * tail
        elif proposal.kind in (ProposalKind.MIDPOINT, ProposalKind.HMC):
            samples = 1.0 - b2 * dt * (0.5 * f2 + tail)
        else:
            samples = 1.0 - b2 * dt * (f2 + tail)
    mom = RunningMoments.from_samples(samples)
    return DiffusionEstimate(float(dt), DiffusionMethod.GREEN_KUBO, float(mom.mean), float(mom.std_error))


def einstein_diffusion(proposal: Proposal, rule: AcceptanceRule, model: Model1D, dt: float,
                       n_steps: int, K_real: int, seed: int, M: DiffusionCoeff1D | None = None,
                       fit_window: tuple[float, float] = (0.1, 1.0), n_records: int = 100,
                       subsample_stride: int = EINSTEIN_STRIDE,
                       dt_thermalization: float = DT_THERMALIZATION,
                       workers: int | None = None) -> DiffusionEstimate:
    """D = s / (2a) with s the least-squares slope of E[(Q^n - Q^0)^2] against n dt.

    The mean squared displacement is recorded at ``n_records`` equally spaced
    times; the slope is fitted on the fraction ``fit_window`` of the run. The
    fit is linear in the data, so the mean of per-realization slopes equals
    the slope of the mean curve and its spread gives the standard error.
    """
    lo, hi = fit_window
    if not 0.0 <= lo < hi <= 1.0:
        raise ValueError(f"fit_window must satisfy 0 <= lo < hi <= 1, got {fit_window}")
    if n_steps < n_records:
        raise ValueError("n_steps must be at least n_records")
    stride = n_steps // n_records
    n_steps = stride * n_records
    proposal = _with_diffusion(proposal, M)
    q0 = thermalized_positions(model, K_real, subsample_stride, seed, dt_thermalization)
    ens = run_ensemble(proposal, rule, model, dt, n_steps, seed, q0, record_stride=stride, workers=workers)
    disp2 = (ens.rec_Q - ens.rec_Q[:, :1]) ** 2
    t = dt * stride * np.arange(n_records + 1)
    sel = (t >= lo * t[-1] - 1e-12) & (t <= hi * t[-1] + 1e-12)
    if sel.sum() < 2:
        raise ValueError("fit window contains fewer than two recorded times")
    ts = t[sel]
    w = (ts - ts.mean()) / ((ts - ts.mean()) ** 2).sum()
    slopes = disp2[:, sel] @ w
    a = bias_profile(proposal.kind, rule).a
    mom = RunningMoments.from_samples(slopes / (2.0 * a))
    return DiffusionEstimate(float(dt), DiffusionMethod.EINSTEIN, float(mom.mean), float(mom.std_error))


def bias_order_fit(estimates, D_ref: float, n_sigma: float = 2.0) -> tuple[float, float]:
    """Slope and intercept of log|D_dt - D_ref| against log dt.

    Points whose bias is within ``n_sigma`` standard errors of zero are
    dropped; fewer than three survivors raise InsufficientSignal.
    """
    keep = [e for e in estimates if abs(e.value - D_ref) > n_sigma * e.std_error and e.value != D_ref]
    if len(keep) < 3:
        raise InsufficientSignal(
            f"only {len(keep)} of {len(estimates)} timesteps have a bias above {n_sigma} standard errors")
    return loglog_fit([e.dt for e in keep], [e.value - D_ref for e in keep])


def _batch_block(args, seed, substream, stream_ids, q0, n_steps, obs, batch):
    out, st = K.run_observed(*args, seed, substream, stream_ids, q0, n_steps, obs)
    x = out[:, 1:]
    nb = n_steps // batch
    return x[:, : nb * batch].reshape(len(q0), nb, batch).mean(axis=2), st


def _batch_means_variance(proposal, rule, model, dt, K_real, n_steps, batch, seed, substream,
                          f_kind, center, workers):
    """Batch-means asymptotic variance and its standard error."""
    q0 = thermalized_positions(model, K_real, GK_STRIDE, seed)
    args = _kernel_args(proposal, rule, model, dt)
    ids = np.arange(K_real, dtype=np.uint64)
    obs = 1 if f_kind == "drift" else 0
    tasks = [(args, _seed(seed), substream, ids[a:b], q0[a:b], n_steps, obs, batch)
             for a, b in block_ranges(K_real, BLOCK)]
    parts = map_blocks(_batch_block, tasks, workers)
    for _, st in parts:
        _raise_for_status(st, dt)
    bm = np.concatenate([p for p, _ in parts]) - center
    # variance of the time average over a batch, times its physical length;
    # chains are independent, so the error bar uses per-chain values
    per_chain = np.mean(bm**2, axis=1) * batch * dt
    mom = RunningMoments.from_samples(per_chain)
    return float(mom.mean), float(mom.std_error)


def asymptotic_variance_error(model: Model1D, dt: float, f: str = "force", K_real: int = 200,
                              seed: int = 0, proposal: Proposal | None = None,
                              rules: tuple[AcceptanceRule, AcceptanceRule] = (AcceptanceRule.BARKER,
                                                                              AcceptanceRule.METROPOLIS),
                              n_steps: int = 20_000, batch: int = 400,
                              workers: int | None = None) -> tuple[float, float]:
    """``asymptotic_variance_ratio`` together with a delta-method standard error."""
    if f == "zero":
        return 1.0, 0.0
    if f not in ("force", "drift"):
        raise ValueError(f"unknown observable {f!r}")
    if n_steps < 2 * batch:
        raise ValueError("n_steps must cover at least two batches")
    proposal = proposal or Proposal(ProposalKind.HMC)
    if f == "force":
        center = gibbs_mean(model, lambda x: potential_derivatives(model, x, 1)[1]) if model.periodic else 0.0
    else:
        Md = proposal.diffusion
        center = gibbs_mean(model, lambda x: -model.beta * diffusion_derivatives(Md, x, 0)[0]
                            * potential_derivatives(model, x, 1)[1] + diffusion_derivatives(Md, x, 1)[1])
    (v0, e0), (v1, e1) = [
        _batch_means_variance(proposal, r, model, dt, K_real, n_steps, batch, seed, sub, f, center, workers)
        for r, sub in zip(rules, (0, SUBSTREAM_RATIO))]
    if v0 == 0.0 and v1 == 0.0:
        return 1.0, 0.0
    ratio = v0 / v1
    return ratio, ratio * math.hypot(e0 / v0, e1 / v1)


def asymptotic_variance_ratio(model: Model1D, dt: float, f: str = "force", K_real: int = 200,
                              seed: int = 0, proposal: Proposal | None = None,
                              rules: tuple[AcceptanceRule, AcceptanceRule] = (AcceptanceRule.BARKER,
                                                                              AcceptanceRule.METROPOLIS),
                              n_steps: int = 20_000, batch: int = 400,
                              workers: int | None = None) -> float:
    """Ratio of batch-means asymptotic variances of time averages of f, rules[0] over rules[1].

    ``f`` is "force" (V'), "drift" (F for the proposal's diffusion) or "zero".
    The Gibbs mean of f is subtracted exactly. Both rules use the same
    proposal (HMC by default) and independent streams. When both variances
    vanish the ratio is 1 by convention.
    """
    return asymptotic_variance_error(model, dt, f, K_real, seed, proposal, rules, n_steps, batch, workers)[0]
