"""Dual process: rates, Gillespie trajectories, duality, renewal tails."""

import math

import numpy as np
import pytest
from scipy import stats
from scipy.linalg import expm

from hierfw import dual as D
from hierfw import forward as F
from hierfw import params as P
from hierfw.diffusion import fisher_wright, grid_from_callable
from hierfw.rng import stream


def two_colony(d=1.0):
    return P.ModelParams(N=2, levels=0, c=(1.0,), e=(1.0,), K=(1.0,),
                         g=fisher_wright(d), d=d,
                         init=P.InitSpec.constant(0.5))


def z_state():
    return F.SystemState(np.array([0.9, 0.1]), np.array([[0.5, 0.5]]))


# ----------------------------------------------------------------------
# rates
# ----------------------------------------------------------------------


def test_two_actives_coalesce_at_rate_d():
    cfg = D.DualConfig.actives(two_colony(), {0: 2})
    entries = D.dual_event_rates(cfg, two_colony())
    coal = [e for e in entries if e.kind == "coalesce"]
    assert len(coal) == 1
    assert coal[0].rate == pytest.approx(1.0)


def test_single_dormant_only_wakes():
    mp = two_colony()
    counts = np.zeros((2, 2), dtype=int)
    counts[1, 0] = 1  # one 0-dormant lineage at colony 0
    entries = D.dual_event_rates(D.DualConfig(counts), mp)
    assert len(entries) == 1
    assert entries[0].kind == "wake"
    assert entries[0].rate == pytest.approx(mp.exchange_rates()[0])


def test_empty_config_empty_table():
    mp = two_colony()
    cfg = D.DualConfig(np.zeros((2, 2), dtype=int))
    assert D.dual_event_rates(cfg, mp) == []


def test_rate_table_matches_gillespie_clock():
    # the sum of the enumerated rates equals the aggregated clock exactly
    mp = P.ModelParams(N=2, levels=1, c=(1.0, 0.5), e=(1.0, 0.5), K=(1.0, 2.0),
                       g=fisher_wright(2.0), d=2.0)
    counts = np.zeros((3, 4), dtype=int)
    counts[0] = [3, 1, 0, 2]
    counts[1] = [1, 0, 0, 1]
    counts[2] = [0, 2, 1, 0]
    cfg = D.DualConfig(counts)
    table_total = sum(e.rate for e in D.dual_event_rates(cfg, mp))
    ctx = D._DualContext(mp, 2.0)
    m_act = counts[0]
    pairs = m_act * (m_act - 1) // 2
    clock = (m_act.sum() * (ctx.mig_rate + ctx.sleep_rate)
             + 2.0 * pairs.sum()
             + float(np.sum(counts[1:].sum(axis=1) * ctx.exch)))
    assert table_total == pytest.approx(clock, rel=1e-12)


# ----------------------------------------------------------------------
# Gillespie
# ----------------------------------------------------------------------


def test_total_count_never_increases():
    mp = two_colony()
    cfg = D.DualConfig.actives(mp, {0: 3, 1: 2})
    rng = stream(1, "count-monotone")
    log, term = D.simulate_dual(cfg, mp, 5.0, rng)
    running = cfg.counts.sum()
    for _, kind, _, _ in log:
        if kind == "coalesce":
            running -= 1
    assert term.total == running
    assert term.total <= cfg.total


def test_no_coalescence_at_d_zero():
    mp = two_colony(d=0.0)
    cfg = D.DualConfig.actives(mp, {0: 2})
    rng = stream(2, "no-coal")
    for _ in range(20):
        _, term = D.simulate_dual(cfg, mp, 3.0, rng)
        assert term.total == 2


def test_single_dormant_first_event_exponential():
    # KS test of first-event times against exponential(e_0 / N^0), 1% level
    mp = two_colony()
    counts = np.zeros((2, 2), dtype=int)
    counts[1, 0] = 1
    cfg = D.DualConfig(counts)
    rng = stream(3, "ks")
    waits = []
    for _ in range(3000):
        log, _ = D.simulate_dual(cfg, mp, 50.0, rng)
        waits.append(log[0][0])
    assert stats.kstest(waits, "expon", args=(0, 1.0)).pvalue > 0.01


def test_event_log_fields():
    mp = two_colony()
    cfg = D.DualConfig.actives(mp, {0: 2})
    log, _ = D.simulate_dual(cfg, mp, 2.0, stream(4, "log"))
    for t, kind, site, detail in log:
        assert kind in ("migrate", "coalesce", "sleep", "wake")
        assert 0 <= site < 2
        assert 0.0 < t <= 2.0


@pytest.mark.slow
def test_single_lineage_marginal_matches_semigroup():
    # empirical law of one lineage vs expm of the lineage generator, TV < 0.02
    mp = two_colony()
    cfg = D.DualConfig.actives(mp, {0: 1})
    p_exact = expm(F.lineage_generator(mp) * 1.5)[0]
    rng = stream(5, "marginal")
    n = 100_000
    counts = np.zeros(4)
    for _ in range(n):
        _, term = D.simulate_dual(cfg, mp, 1.5, rng, log_events=False)
        flat = np.concatenate([term.counts[0], term.counts[1]])
        counts[int(np.argmax(flat))] += 1
    tv = 0.5 * np.abs(counts / n - p_exact).sum()
    assert tv < 0.02


# ----------------------------------------------------------------------
# duality
# ----------------------------------------------------------------------


def test_duality_function_zero_power_convention():
    z = F.SystemState(np.array([0.0, 0.5]), np.array([[0.0, 1.0]]))
    counts = np.zeros((2, 2), dtype=int)
    assert D.duality_function(z, counts) == 1.0
    counts[0, 1] = 2
    assert D.duality_function(z, counts) == pytest.approx(0.25)


def test_duality_t0_identity():
    mp = two_colony()
    z = z_state()
    cfg = D.DualConfig.actives(mp, {0: 2})
    h0 = D.duality_function(z, cfg.counts)
    assert D.exact_dual_moment(mp, z, cfg, 0.0) == pytest.approx(h0, rel=1e-12)
    rep = D.duality_estimate(mp, z, cfg, 1e-9, 2000, seed=6, dt=1e-10,
                             with_exact=False)
    assert rep.lhs == pytest.approx(h0, abs=1e-6)
    assert rep.rhs == pytest.approx(h0, abs=1e-6)


def test_duality_constant_state_single_lineage():
    # z identically theta: E[x_xi(t)] = theta because the dual kernel is
    # stochastic, so both sides equal theta at every t
    mp = two_colony()
    theta = 0.37
    z = F.SystemState(np.full(2, theta), np.full((1, 2), theta))
    cfg = D.DualConfig.actives(mp, {1: 1})
    assert D.exact_dual_moment(mp, z, cfg, 2.3) == pytest.approx(theta, rel=1e-12)


def test_duality_non_fw_refused():
    g = grid_from_callable(lambda x: (x * (1 - x)) ** 2)
    mp = P.ModelParams(N=2, levels=0, c=(1.0,), e=(1.0,), K=(1.0,), g=g)
    with pytest.raises(D.DualityError):
        D.duality_estimate(mp, z_state(), D.DualConfig.actives(mp, {0: 2}),
                           1.0, 100, seed=0)


@pytest.mark.slow
def test_duality_two_colony_full():
    mp = two_colony()
    z = z_state()
    cfg = D.DualConfig.actives(mp, {0: 2})
    rep = D.duality_estimate(mp, z, cfg, 1.0, 50_000, seed=9, dt=0.002)
    assert rep.passes(3.0)
    # the dual Monte Carlo is an exact-law sampler: it must straddle the
    # generator-exponential value within its own noise
    assert abs(rep.rhs - rep.exact_rhs) < 4 * rep.rhs_se


def test_dual_generator_rows_sum_zero():
    mp = two_colony()
    states = D.enumerate_count_states(mp, 2)
    Q = D.dual_generator(mp, states)
    assert np.allclose(Q.sum(axis=1), 0.0, atol=1e-12)
    off = Q - np.diag(np.diag(Q))
    assert np.all(off >= 0)


def test_count_state_enumeration_size():
    # 2 colonies x (A, D_0): 4 sites; totals 1 and 2 -> 4 + 10 states
    states = D.enumerate_count_states(two_colony(), 2)
    assert len(states) == 14


# ----------------------------------------------------------------------
# renewal and tail fit
# ----------------------------------------------------------------------


def test_renewal_sigma_exponential_chi():
    mp = two_colony()
    der = P.derive(mp)
    rs = D.renewal_sample(mp, 50_000, stream(11, "renewal"))
    assert stats.kstest(rs.sigma, "expon", args=(0, 1.0 / der.chi)).pvalue > 0.01


def test_tail_fit_rejects_single_exponential():
    mp = P.ModelParams(N=4, levels=0, c=(1.0,), e=(1.0,), K=(1.0,),
                       g=fisher_wright(1.0))
    rs = D.renewal_sample(mp, 200_000, stream(12, "tail-exp"))
    assert not D.tail_fit(rs).power_law_plausible


def test_tail_fit_needs_enough_samples():
    mp = two_colony()
    rs = D.renewal_sample(mp, 1000, stream(13, "tail-small"))
    with pytest.raises(ValueError):
        D.tail_fit(rs)


@pytest.mark.slow
def test_tail_exponent_exponential_family():
    fam = P.ExponentialFamily(K=2.0, e=1.0, c=0.25)
    mp = P.ModelParams.from_family(N=8, levels=15, family=fam, g=fisher_wright(1.0))
    rep = P.classify_regime(mp)
    rs = D.renewal_sample(mp, 1_000_000, stream(14, "tail-pow"))
    fit = D.tail_fit(rs)
    assert fit.power_law_plausible
    assert abs(fit.gamma - rep.gamma) < 0.05


@pytest.mark.slow
def test_tau_mean_matches_rho_over_chi():
    fam = P.ExponentialFamily(K=0.5, e=2.0, c=0.5)
    mp = P.ModelParams.from_family(N=4, levels=12, family=fam, g=fisher_wright(1.0))
    der = P.derive(mp)
    rs = D.renewal_sample(mp, 1_000_000, stream(15, "tau-mean"))
    se = rs.tau.std(ddof=1) / math.sqrt(len(rs.tau))
    assert abs(rs.tau.mean() - der.mean_wakeup) < 3 * se
