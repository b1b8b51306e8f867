"""Acceptance criteria 1-9, each at its stated tolerance, seed fixed up front."""

import functools
import math
import time

import numpy as np
import pytest
from scipy import stats

from metrolangevin.accept import AcceptanceRule
from metrolangevin.chain import RecordPolicy, run_trajectory
from metrolangevin.cli import main as cli_main
from metrolangevin.estimators import (
    InsufficientSignal,
    StrongErrorConfig,
    asymptotic_variance_error,
    bias_order_fit,
    einstein_diffusion,
    green_kubo_diffusion,
    rejection_scaling_study,
    strong_error_study,
)
from metrolangevin.model import DiffusionCoeff1D, Model1D, eval_potential
from metrolangevin.proposal import Proposal, propose, reverse_draw, verlet_step
from metrolangevin.reference import (
    GeneratorObservable,
    analytic_diffusion_1d,
    gibbs_cdf,
    lifson_jackson_oracle,
    weak_expansion_residual,
)
from metrolangevin.rng import RngStream
from metrolangevin.stats import loglog_fit

pytestmark = pytest.mark.acceptance

SEED = 12345
MH = AcceptanceRule.METROPOLIS
BK = AcceptanceRule.BARKER
COS = Model1D.named("cosine")
QUARTIC = Model1D.named("quartic")
ZERO = Model1D.named("zero")
COSSQ = DiffusionCoeff1D.named("cosine-squared")
D_ADD = 0.62386
D_MULT = 0.30478
REJECTION_GRID = [0.02, 0.01, 0.005, 0.0025]


def _within(x, target, tol):
    return x == x and abs(x - target) <= tol


def _proposal(kind):
    return Proposal.named(kind, "cosine-squared" if kind == "mala-mult" else "unit")


@functools.lru_cache(maxsize=None)
def _gk(kind, rule, dt, K=1_000_000):
    tau = 2.0 if kind == "mala-mult" else 0.6
    return green_kubo_diffusion(_proposal(kind), rule, COS, dt, tau, K, SEED)


def test_criterion_1_reference_constants(report):
    t0 = time.perf_counter()
    d_add = analytic_diffusion_1d(COS)
    d_mult = analytic_diffusion_1d(COS, COSSQ)
    lj = lifson_jackson_oracle(COS)
    wall = time.perf_counter() - t0
    ok = abs(d_add - D_ADD) <= 5e-5 and abs(d_mult - D_MULT) <= 5e-5 and abs(d_add - lj) <= 1e-4 and wall < 1.0
    report(1, ok, f"D_add={d_add:.7f} D_mult={d_mult:.7f} LJ={lj:.7f} time={wall:.2f}s")
    assert ok


def test_criterion_2_strong_order(report):
    ks = tuple(50 * 2**l for l in range(7))
    t0 = time.perf_counter()
    slopes = {}
    for kind in ("mala", "modified"):
        cfg = StrongErrorConfig(1e-5, ks, 0.1, 10_000, QUARTIC, Proposal.named(kind), MH)
        slopes[kind] = strong_error_study(cfg, SEED).fit_slope
    wall = time.perf_counter() - t0
    ok = _within(slopes["mala"], 0.75, 0.10) and _within(slopes["modified"], 1.0, 0.10) and wall <= 900
    report(2, ok, f"MALA slope={slopes['mala']:.3f} (0.75+-0.10) modified slope={slopes['modified']:.3f} "
                  f"(1.00+-0.10) time={wall:.0f}s")
    assert ok


def _rejection(kind, rule, model):
    res = rejection_scaling_study(_proposal(kind), rule, model, REJECTION_GRID, 10_000_000, SEED)
    return {r.series: r.fit_slope for r in res}


def test_criterion_3_additive_rejection(report):
    t0 = time.perf_counter()
    checks = []
    for kind in ("midpoint", "hmc"):
        s = _rejection(kind, MH, COS)["one_minus_A"]
        checks.append((f"{kind}-MH", s, 1.5, 0.15))
        b = _rejection(kind, BK, COS)
        checks.append((f"{kind}-B mean", b["two_A_minus_one"], 3.0, 0.3))
        checks.append((f"{kind}-B abs", b["abs_two_A_minus_one"], 1.5, 0.15))
    s = _rejection("modified", MH, QUARTIC)["one_minus_A"]
    checks.append(("modified-MH quartic", s, 2.5, 0.2))
    wall = time.perf_counter() - t0
    ok = all(_within(s, t, e) for _, s, t, e in checks) and wall <= 600
    report(3, ok, " ".join(f"{n}={s:.3f}" for n, s, _, _ in checks) + f" time={wall:.0f}s")
    assert ok


def test_criterion_4_multiplicative_rejection(report):
    mh = _rejection("mala-mult", MH, COS)["one_minus_A"]
    b = _rejection("mala-mult", BK, COS)
    checks = [("MH", mh, 0.5, 0.1), ("B mean", b["two_A_minus_one"], 1.0, 0.15),
              ("B abs", b["abs_two_A_minus_one"], 0.5, 0.1)]
    ok = all(_within(s, t, e) for _, s, t, e in checks)
    report(4, ok, " ".join(f"{n}={s:.3f} ({t}+-{e})" for n, s, t, e in checks))
    assert ok


def test_criterion_5_bias_ordering(report):
    t0 = time.perf_counter()
    names = [("hmc", BK), ("hmc", MH), ("mala", MH)]
    est = [_gk(k, r, 0.01) for k, r in names]
    bias = [abs(e.value - D_ADD) for e in est]
    se = [e.std_error for e in est]
    gaps = [bias[i + 1] - bias[i] - 2 * math.hypot(se[i], se[i + 1]) for i in range(2)]
    zero_ok = bias[0] <= 2 * se[0]
    wall = time.perf_counter() - t0
    ok = all(g > 0 for g in gaps) and zero_ok and wall <= 1800
    report(5, ok, " ".join(f"{k}-{r.value}: |bias|={b:.4f}+-{s:.4f}" for (k, r), b, s in zip(names, bias, se))
           + f" time={wall:.0f}s")
    assert ok


def test_criterion_6_bias_exponents(report):
    grid = [0.04, 0.02, 0.01]
    targets = [("midpoint", BK, 2.0, 0.5), ("hmc", BK, 2.0, 0.5), ("midpoint", MH, 1.5, 0.5),
               ("hmc", MH, 1.5, 0.5), ("mala", MH, 1.0, 0.4), ("mala-mult", BK, 1.0, 0.4),
               ("mala-mult", MH, 0.5, 0.3)]
    parts, ok = [], True
    for kind, rule, target, tol in targets:
        d_ref = D_MULT if kind == "mala-mult" else D_ADD
        try:
            slope, _ = bias_order_fit([_gk(kind, rule, dt) for dt in grid], d_ref)
            good = _within(slope, target, tol)
            parts.append(f"{kind}-{rule.value}={slope:.2f}({target}+-{tol})")
        except InsufficientSignal:
            good = False
            parts.append(f"{kind}-{rule.value}=insufficient-signal")
        ok &= good
    report(6, ok, " ".join(parts))
    assert ok


def test_criterion_7_weak_expansion(report):
    grid = [1e-4, 5e-5, 2.5e-5, 1.25e-5]
    psi = GeneratorObservable.named("sin")
    t0 = time.perf_counter()
    parts, ok = [], True
    for kind, rule, target in [("midpoint", BK, 2.0), ("hmc", BK, 2.0), ("midpoint", MH, 1.5), ("hmc", MH, 1.5)]:
        slope, _ = loglog_fit(grid, [weak_expansion_residual(kind, rule, COS, psi, dt) for dt in grid])
        ok &= _within(slope, target, 0.1)
        parts.append(f"{kind}-{rule.value}={slope:.3f}")
    wall = time.perf_counter() - t0
    ok &= wall < 10
    report(7, ok, " ".join(parts) + f" time={wall:.1f}s")
    assert ok


def _detailed_balance_worst():
    worst = 0.0
    dt = 0.01
    cases = [(k, m, "unit") for k in ("mala", "modified", "midpoint", "hmc", "mala-mult")
             for m in ("cosine", "quartic")] + [("mala-mult", "cosine", "cosine-squared")]
    for kind, name, diff in cases:
        m = Model1D.named(name)
        prop = Proposal.named(kind, diff, tol=1e-15, max_iter=1000)
        qs = np.linspace(0, 1, 50, endpoint=False) if m.periodic else np.linspace(-1.2, 1.2, 50)
        for q in qs:
            for G in np.linspace(-3, 3, 50):
                fwd = propose(prop, m, q, G, dt)
                back = propose(prop, m, fwd.q_proposed, reverse_draw(prop, m, q, G, dt), dt)
                worst = max(worst, abs(fwd.alpha + back.alpha) / max(1.0, abs(fwd.alpha)))
    return worst


def _verlet_worst():
    worst = 0.0
    for name in ("cosine", "quartic"):
        m = Model1D.named(name, 1.7)
        for q in np.linspace(-0.8, 0.8, 9):
            for G in np.linspace(-2, 2, 9):
                dt = 0.003
                p = G / math.sqrt(m.beta)
                qn, pn = verlet_step(m, q, p, math.sqrt(2 * m.beta * dt))
                out = propose(Proposal.named("hmc"), m, q, G, dt)
                energy = m.beta * (eval_potential(m, qn, 0)[0] + pn**2 / 2 - eval_potential(m, q, 0)[0] - p**2 / 2)
                q2, p2 = verlet_step(m, qn, -pn, math.sqrt(2 * m.beta * dt))
                worst = max(worst, abs(out.q_proposed - qn), abs(out.alpha - energy), abs(q2 - q), abs(p2 + p))
    return worst


def _workers_csv_identical(tmp_path):
    args = ["run", "--study", "strong-error", "--proposal", "mala", "--model", "quartic",
            "--dt-list", "4e-4,2e-4,1e-4", "--horizon", "0.004", "-K", "1000", "--seed", str(SEED)]
    out = []
    for w in (1, 4):
        d = tmp_path / f"w{w}"
        assert cli_main([*args, "--workers", str(w), "--output-dir", str(d)]) == 0
        out.append((d / "strong-error.csv").read_bytes())
    return out[0] == out[1]


def test_criterion_8_exact_invariants(report, tmp_path, capsys):
    db = _detailed_balance_worst()
    vt = _verlet_worst()
    free = {r.value: einstein_diffusion(Proposal.named("mala"), r, ZERO, 0.01, 200, 20_000, SEED) for r in (MH, BK)}
    free_ok = all(abs(e.value - 1.0) <= 3 * e.std_error for e in free.values())
    ks = {}
    for kind, rule in (("mala", MH), ("midpoint", BK)):
        _, tr = run_trajectory(Proposal.named(kind), rule, COS, 0.005, 10_000_000,
                               RngStream(SEED), RecordPolicy.every(10), 0.0)
        ks[f"{kind}-{rule.value}"] = stats.kstest(tr.states[1:], gibbs_cdf(COS)).pvalue
    st, tr = run_trajectory(Proposal.named("hmc"), BK, COS, 0.01, 100_000, RngStream(SEED), RecordPolicy.increments(), 0.3)
    qadd = abs((st.Q - 0.3) - tr.increments.sum())
    det = _workers_csv_identical(tmp_path)
    capsys.readouterr()
    ok = db <= 1e-10 and vt <= 1e-12 and free_ok and min(ks.values()) > 1e-3 and qadd <= 1e-12 and det
    report(8, ok, f"detailed-balance={db:.1e} verlet={vt:.1e} "
                  + " ".join(f"free-{k}={e.value:.4f}+-{e.std_error:.4f}" for k, e in free.items())
                  + " " + " ".join(f"KS-p[{k}]={p:.3f}" for k, p in ks.items())
                  + f" Q-additivity={qadd:.1e} workers-bitwise={det}")
    assert ok


def test_criterion_9_variance_ratio(report):
    ratio, se = asymptotic_variance_error(COS, 0.005, "force", 200, SEED)
    ok = _within(ratio, 2.0, 0.3)
    report(9, ok, f"ratio={ratio:.3f}+-{se:.3f} (2.0+-0.3)")
    assert ok
