import numpy as np
import pytest

from metrolangevin.accept import AcceptanceRule
from metrolangevin.estimators import (
    DiffusionEstimate,
    DiffusionMethod,
    InsufficientSignal,
    StrongErrorConfig,
    StudyResult,
    asymptotic_variance_error,
    asymptotic_variance_ratio,
    bias_order_fit,
    einstein_diffusion,
    green_kubo_diffusion,
    rejection_scaling_study,
    strong_error_samples,
    strong_error_study,
    thermalized_positions,
)
from metrolangevin.model import DiffusionCoeff1D, Model1D
from metrolangevin.proposal import Proposal
from metrolangevin.reference import exact_chain_diffusion, gibbs_cdf

COS = Model1D.named("cosine")
ZERO = Model1D.named("zero")
MH = AcceptanceRule.METROPOLIS
BK = AcceptanceRule.BARKER
SEED = 12345


def _est(dt, v, se=0.0):
    return DiffusionEstimate(dt, DiffusionMethod.GREEN_KUBO, v, se)


def test_bias_order_fit_exact_power_law():
    dts = [0.04, 0.02, 0.01, 0.005]
    for p in (1.0, 1.5, 2.0):
        slope, icpt = bias_order_fit([_est(d, 0.6 + 3.0 * d**p) for d in dts], 0.6)
        assert abs(slope - p) <= 1e-10
        assert abs(icpt - np.log(3.0)) <= 1e-8
    slope, _ = bias_order_fit([_est(d, 0.6 - 0.5 * d**2) for d in dts], 0.6)
    assert abs(slope - 2.0) <= 1e-10


def test_bias_order_fit_insufficient_signal():
    with pytest.raises(InsufficientSignal):
        bias_order_fit([_est(d, 0.6) for d in (0.04, 0.02, 0.01)], 0.6)
    # points inside two standard errors are dropped
    ests = [_est(0.04, 0.7, 0.01), _est(0.02, 0.625, 0.01), _est(0.01, 0.61, 0.01)]
    with pytest.raises(InsufficientSignal):
        bias_order_fit(ests, 0.6)


def test_result_types_validate():
    with pytest.raises(ValueError):
        StudyResult([0.1, 0.2], [1.0], [0.0, 0.0])
    with pytest.raises(ValueError):
        StudyResult([0.1], [1.0], [-1.0])
    with pytest.raises(ValueError):
        DiffusionEstimate(0.1, DiffusionMethod.EINSTEIN, 1.0, -0.1)
    r = StudyResult([0.1, 0.05], [1.0, 0.25], [0.0, 0.0]).fit()
    assert r.fit_slope == pytest.approx(2.0, abs=1e-12)


def test_strong_error_config_validation():
    mala = Proposal.named("mala")
    with pytest.raises(ValueError):
        StrongErrorConfig(1e-4, (1, 2), 0.00015, 10, COS, mala, MH)
    with pytest.raises(ValueError):
        StrongErrorConfig(1e-4, (0,), 0.1, 10, COS, mala, MH)
    with pytest.raises(ValueError):
        StrongErrorConfig(1e-4, (3,), 0.1, 10, COS, mala, MH, strict=True)
    cfg = StrongErrorConfig(1e-4, (3,), 0.1, 10, COS, mala, MH)
    assert cfg.n_ref == 1000


def test_thermalized_positions_follow_gibbs():
    from scipy.stats import kstest

    q = thermalized_positions(COS, 4000, 200, SEED)
    assert kstest(q, gibbs_cdf(COS)).pvalue > 1e-3
    np.testing.assert_array_equal(q, thermalized_positions(COS, 4000, 200, SEED))


def test_strong_error_self_coupling_is_zero():
    cfg = StrongErrorConfig(1e-4, (1,), 0.01, 300, COS, Proposal.named("mala"), MH)
    d = strong_error_samples(cfg, SEED, share_uniforms=True)
    assert np.all(d == 0.0)
    res = strong_error_study(cfg, SEED, share_uniforms=True)
    assert res.estimates == [0.0] and res.std_errors == [0.0]


def test_strong_error_worker_determinism():
    cfg = StrongErrorConfig(1e-4, (2, 4, 8), 0.02, 600, COS, Proposal.named("mala"), MH)
    a = strong_error_samples(cfg, SEED, workers=1)
    b = strong_error_samples(cfg, SEED, workers=3)
    np.testing.assert_array_equal(a, b)
    assert np.all(np.diff(np.sqrt((a**2).mean(axis=0))) > 0)


def test_strong_error_clt_coverage():
    cfg = StrongErrorConfig(1e-4, (8,), 0.02, 20000, COS, Proposal.named("mala"), MH)
    d2 = strong_error_samples(cfg, SEED)[:, 0] ** 2
    target = np.sqrt(d2.mean())
    rng = np.random.default_rng(SEED)
    n, hits, trials = 1000, 0, 400
    for _ in range(trials):
        x = d2[rng.integers(0, d2.size, n)]
        m = x.mean()
        e = np.sqrt(m)
        se = e * x.std(ddof=1) / (2 * m * np.sqrt(n))
        hits += abs(e - target) <= 1.96 * se
    assert hits / trials >= 0.90


def test_rejection_study_shapes_and_determinism():
    prop = Proposal.named("hmc")
    mh = rejection_scaling_study(prop, MH, COS, [0.02, 0.01], 20000, SEED, n_chains=20)
    assert [r.series for r in mh] == ["one_minus_A"]
    bk = rejection_scaling_study(prop, BK, COS, [0.02, 0.01], 20000, SEED, n_chains=20, workers=2)
    assert [r.series for r in bk] == ["two_A_minus_one", "abs_two_A_minus_one"]
    again = rejection_scaling_study(prop, BK, COS, [0.02, 0.01], 20000, SEED, n_chains=20)
    assert [r.estimates for r in bk] == [r.estimates for r in again]
    assert all(0 < v < 1 for v in mh[0].estimates)
    assert mh[0].estimates[0] > mh[0].estimates[1]


@pytest.mark.parametrize("kind", ["mala", "midpoint", "hmc"])
@pytest.mark.parametrize("rule", [MH, BK], ids=["mh", "barker"])
def test_green_kubo_free_diffusion_is_exact(kind, rule):
    est = green_kubo_diffusion(Proposal.named(kind), rule, ZERO, 0.01, 0.1, 300, SEED)
    assert est.value == 1.0 and est.std_error == 0.0


def test_green_kubo_multiplicative_constant_diffusion():
    est = green_kubo_diffusion(Proposal.named("mala-mult"), BK, ZERO, 0.01, 0.1, 300, SEED)
    assert est.value == pytest.approx(1.0, abs=1e-14)


def test_green_kubo_rejects_non_integer_tau():
    with pytest.raises(ValueError):
        green_kubo_diffusion(Proposal.named("mala"), MH, COS, 0.007, 0.6, 10, SEED)


@pytest.mark.parametrize("rule", [MH, BK], ids=["mh", "barker"])
def test_einstein_free_diffusion(rule):
    est = einstein_diffusion(Proposal.named("mala"), rule, ZERO, 0.01, 200, 20000, SEED)
    assert abs(est.value - 1.0) <= 3 * est.std_error


def test_einstein_fit_window_validation():
    with pytest.raises(ValueError):
        einstein_diffusion(Proposal.named("mala"), MH, ZERO, 0.01, 200, 10, SEED, fit_window=(0.5, 0.2))


def test_green_kubo_matches_exact_chain_value():
    est = green_kubo_diffusion(Proposal.named("hmc"), BK, COS, 0.01, 0.6, 20000, SEED)
    exact = exact_chain_diffusion("hmc", BK, COS, 0.01)
    assert abs(est.value - exact) <= 3 * est.std_error


def test_estimators_worker_determinism():
    p = Proposal.named("midpoint")
    a = green_kubo_diffusion(p, BK, COS, 0.01, 0.2, 700, SEED, workers=1)
    b = green_kubo_diffusion(p, BK, COS, 0.01, 0.2, 700, SEED, workers=3)
    assert a == b
    a = einstein_diffusion(p, MH, COS, 0.01, 200, 700, SEED, workers=1)
    b = einstein_diffusion(p, MH, COS, 0.01, 200, 700, SEED, workers=3)
    assert a == b


def test_green_kubo_and_einstein_agree():
    # at dt = 0.0025 the finite-dt gap between the two definitions is ~1e-3
    p = Proposal.named("midpoint")
    gk = green_kubo_diffusion(p, BK, COS, 0.0025, 0.6, 40000, SEED)
    ei = einstein_diffusion(p, BK, COS, 0.0025, 800, 40000, SEED)
    assert abs(gk.value - ei.value) <= 3 * np.hypot(gk.std_error, ei.std_error)


@pytest.mark.slow
def test_bias_ordering_at_moderate_dt():
    # schemes share seeds, so their fluctuations are correlated; K is set so the
    # expected separations are several standard errors wide
    K = 1_000_000
    D = 0.6238603666
    bias = {}
    for name, kind, rule in [("hmc-b", "hmc", BK), ("mid-b", "midpoint", BK),
                             ("hmc-mh", "hmc", MH), ("mid-mh", "midpoint", MH), ("mala-mh", "mala", MH)]:
        e = green_kubo_diffusion(Proposal.named(kind), rule, COS, 0.01, 0.6, K, SEED)
        bias[name] = (abs(e.value - D), e.std_error)

    def below(x, y):
        (bx, sx), (by, sy) = bias[x], bias[y]
        return by - bx > np.hypot(sx, sy)

    for b in ("hmc-b", "mid-b"):
        for m in ("hmc-mh", "mid-mh"):
            assert below(b, m)
    for m in ("hmc-mh", "mid-mh"):
        assert below(m, "mala-mh")


def test_variance_ratio_conventions():
    assert asymptotic_variance_ratio(COS, 0.005, f="zero") == 1.0
    r, se = asymptotic_variance_error(COS, 0.005, K_real=100, seed=SEED, rules=(MH, MH), n_steps=8000)
    assert abs(r - 1.0) <= 3 * se
    with pytest.raises(ValueError):
        asymptotic_variance_ratio(COS, 0.005, f="nonsense")


def test_variance_ratio_multiplicative_drift_runs():
    prop = Proposal.named("mala-mult", diffusion="cosine-squared")
    r, se = asymptotic_variance_error(COS, 0.005, f="drift", K_real=50, seed=SEED, proposal=prop, n_steps=4000)
    assert np.isfinite(r) and r > 0 and se > 0
