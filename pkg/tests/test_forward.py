"""Forward simulator: fixed points, oracles, conservation, determinism."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hierfw import forward as F
from hierfw import params as P
from hierfw.diffusion import fisher_wright, grid_from_callable
from hierfw.rng import stream

FW = fisher_wright(1.0)


def small_params(N=2, levels=0, c=(1.0,), e=(1.0,), K=(1.0,), g=FW, d=1.0):
    return P.ModelParams(N=N, levels=levels, c=c, e=e, K=K, g=g, d=d,
                         init=P.InitSpec.constant(0.5))


def two_colony():
    return small_params()


# ----------------------------------------------------------------------
# step
# ----------------------------------------------------------------------


def test_constant_state_is_fixed_point_of_noiseless_drift():
    mp = small_params(g=fisher_wright(0.0))
    theta = 0.37
    state = F.SystemState(np.full(2, theta), np.full((1, 2), theta))
    out = F.step(state, 0.05, mp, stream(0, "fp"))
    assert np.array_equal(out.x, state.x)
    assert np.array_equal(out.y, state.y)


def test_zero_state_absorbing():
    mp = two_colony()
    state = F.SystemState(np.zeros(2), np.zeros((1, 2)))
    rng = stream(0, "absorb")
    for _ in range(50):
        state = F.step(state, 0.02, mp, rng)
    assert np.all(state.x == 0.0)
    assert np.all(state.y == 0.0)


def test_step_stability_rejection():
    mp = two_colony()
    state = F.SystemState(np.full(2, 0.5), np.full((1, 2), 0.5))
    with pytest.raises(F.StabilityError):
        F.step(state, 0.5, mp, stream(0, "unstable"))  # dt * rates > 1


def test_default_dt_respects_budget():
    mp = small_params(N=4, levels=1, c=(2.0, 1.0), e=(1.0, 0.5), K=(1.0, 2.0))
    dt = F.default_dt(mp)
    F._StepContext(mp, dt, "exp")  # must not raise


def test_exchange_conserves_weighted_mean_exactly():
    # with noise off, the matched exchange increments conserve
    # (x + sum K_m y_m) summed over colonies to machine precision
    mp = small_params(N=2, levels=1, c=(1.0, 0.5), e=(1.0, 2.0), K=(0.5, 1.5),
                      g=fisher_wright(0.0))
    rng = stream(1, "conserve")
    x = rng.random((1, 4))
    y = rng.random((1, 2, 4))
    K = np.asarray(mp.K)
    before = (x.sum() + np.sum(K[None, :, None] * y)) / (1 + K.sum())
    ctx = F._StepContext(mp, 0.05, "exp")
    F._advance(x, y, 200, ctx, rng)
    after = (x.sum() + np.sum(K[None, :, None] * y)) / (1 + K.sum())
    assert after == pytest.approx(before, abs=1e-12)


# ----------------------------------------------------------------------
# block averages and estimators
# ----------------------------------------------------------------------


def test_block_average_level0_is_colony():
    state = F.SystemState(np.array([0.2, 0.6]), np.array([[0.1, 0.9]]))
    bx, by = F.block_average(state, 0, N=2)
    assert bx == 0.2
    assert by[0] == 0.1


def test_block_average_level1_mean():
    state = F.SystemState(np.array([0.2, 0.6]), np.array([[0.1, 0.9]]))
    bx, by = F.block_average(state, 1, N=2)
    assert bx == pytest.approx(0.4)
    assert by[0] == pytest.approx(0.5)


def test_block_average_uniform_state():
    state = F.SystemState(np.full(8, 0.33), np.full((2, 8), 0.7))
    for level in (0, 1, 2, 3):
        bx, by = F.block_average(state, level, N=2)
        assert bx == pytest.approx(0.33)
        assert np.allclose(by, 0.7)


@given(st.integers(0, 2 ** 31 - 1))
@settings(max_examples=25, deadline=None)
def test_estimator_identity(seed_val):
    rng = stream(seed_val, "est-id")
    x = rng.random(8)
    y = rng.random((3, 8))
    K = rng.random(3) * 4 + 0.01
    for level in (0, 1, 2, 3):
        th_bar, th_x, th_y = F.estimator_arrays(x, y, K, level, N=2)
        Kl = K[:level]
        expect = (th_x + np.sum(Kl * th_y[:level])) / (1.0 + Kl.sum())
        assert th_bar == pytest.approx(expect, rel=1e-14)


# ----------------------------------------------------------------------
# simulate
# ----------------------------------------------------------------------


def test_simulate_replay_bit_identical():
    mp = small_params(N=2, levels=1, c=(1.0, 0.5), e=(1.0, 1.0), K=(1.0, 2.0))
    init = P.InitSpec(theta_x=0.5, theta_y=(0.3, 0.6), law="beta")
    plan = F.RecordPlan(times=(0.0, 0.5, 1.0), snapshots=True)
    rec1 = F.simulate(mp, init, 1.0, plan, seed=42, replica=3)
    rec2 = F.simulate(mp, init, 1.0, plan, seed=42, replica=3)
    assert np.array_equal(rec1.snapshots_x, rec2.snapshots_x)
    assert np.array_equal(rec1.snapshots_y, rec2.snapshots_y)
    assert np.array_equal(rec1.theta_bar, rec2.theta_bar)
    rec3 = F.simulate(mp, init, 1.0, plan, seed=42, replica=4)
    assert not np.array_equal(rec1.snapshots_x, rec3.snapshots_x)


def test_simulate_estimator_identity_at_records():
    mp = small_params(N=2, levels=1, c=(1.0, 0.5), e=(1.0, 1.0), K=(1.0, 2.0))
    init = P.InitSpec(theta_x=0.9, theta_y=(0.2, 0.4), law="two-point")
    rec = F.simulate(mp, init, 1.0, F.RecordPlan(times=(0.5, 1.0)), seed=7)
    K = np.asarray(mp.K)
    for i in range(len(rec.times)):
        for j, l in enumerate(rec.levels):
            Kl = K[:int(l)]
            expect = (rec.theta_x[i, j] + np.sum(Kl * rec.theta_y[i, j, :int(l)])) \
                / (1.0 + Kl.sum())
            assert rec.theta_bar[i, j] == pytest.approx(expect, rel=1e-13)


def test_trajectory_csv_rows():
    mp = two_colony()
    rec = F.simulate(mp, P.InitSpec.constant(0.5), 0.2,
                     F.RecordPlan(times=(0.0, 0.2)), seed=1)
    rows = rec.csv_rows()
    assert rows[0][2] == "x"
    comps = {r[2] for r in rows}
    assert {"x", "y0", "theta_bar", "theta_x", "theta_y0"} <= comps


def test_snapshot_rows_addresses():
    mp = small_params(N=3, levels=0, c=(1.0,))
    rec = F.simulate(mp, P.InitSpec.constant(0.5), 0.1,
                     F.RecordPlan(times=(0.1,), snapshots=True), seed=1)
    rows = rec.snapshot_rows(3)
    assert [r[1] for r in rows] == ["0", "1", "2"]


def test_grand_mean_zero_drift_in_ensemble():
    # closed full system: the weighted population mean is a martingale
    mp = small_params(N=2, levels=1, c=(1.0, 0.5), e=(1.0, 1.0), K=(1.0, 2.0))
    init = P.InitSpec(theta_x=0.8, theta_y=(0.2, 0.5), law="beta")
    K = np.asarray(mp.K)

    def grand(x, y):
        th_bar, _, _ = F.estimator_arrays(x, y, K, mp.levels + 1, mp.N)
        return th_bar[:, None]

    mean, se, _ = F.ensemble_reduce(mp, init, (0.0, 1.0, 2.0), 4096, 11, grand,
                                    dt=0.02)
    assert abs(mean[1, 0] - mean[0, 0]) < 3 * math.hypot(se[1, 0], se[0, 0])
    assert abs(mean[2, 0] - mean[0, 0]) < 3 * math.hypot(se[2, 0], se[0, 0])


# ----------------------------------------------------------------------
# first-moment oracle
# ----------------------------------------------------------------------


def test_oracle_constant_state_invariant():
    mp = small_params(N=2, levels=1, c=(1.0, 0.5), e=(1.0, 1.0), K=(1.0, 2.0))
    state = F.SystemState(np.full(4, 0.42), np.full((2, 4), 0.42))
    out = F.first_moment_oracle(mp, state, 1.7)
    assert np.allclose(out.x, 0.42, atol=1e-12)
    assert np.allclose(out.y, 0.42, atol=1e-12)


def test_oracle_time_zero_identity():
    mp = two_colony()
    rng = stream(5, "oracle0")
    state = F.SystemState(rng.random(2), rng.random((1, 2)))
    out = F.first_moment_oracle(mp, state, 0.0)
    assert np.allclose(out.x, state.x, atol=1e-13)
    assert np.allclose(out.y, state.y, atol=1e-13)


def test_oracle_rows_stochastic():
    from hierfw.forward import lineage_generator
    mp = small_params(N=2, levels=1, c=(1.0, 0.5), e=(1.0, 1.0), K=(1.0, 2.0))
    Q = lineage_generator(mp)
    assert np.allclose(Q.sum(axis=1), 0.0, atol=1e-13)
    off_diag = Q - np.diag(np.diag(Q))
    assert np.all(off_diag >= 0)


def test_oracle_size_guard():
    mp = small_params(N=10, levels=3, c=(1.0,) * 4, e=(1.0,) * 4, K=(1.0,) * 4)
    state = F.SystemState(np.zeros(10 ** 4), np.zeros((4, 10 ** 4)))
    with pytest.raises(F.SizeError):
        F.first_moment_oracle(mp, state, 1.0)


@pytest.mark.slow
def test_forward_means_match_oracle_two_colony():
    # x = (1, 0), y = (0, 0): ensemble means vs exact semigroup at t = 1
    mp = two_colony()
    state = F.SystemState(np.array([1.0, 0.0]), np.array([[0.0, 0.0]]))
    exact = F.first_moment_oracle(mp, state, 1.0)

    def obs(x, y):
        return np.concatenate([x, y[:, 0, :]], axis=1)

    mean, se, _ = F.ensemble_reduce(mp, state, (1.0,), 40_000, 23, obs, dt=0.002)
    target = np.concatenate([exact.x, exact.y[0]])
    for q in range(4):
        assert abs(mean[0, q] - target[q]) < 3 * se[0, q] + 2e-3


# ----------------------------------------------------------------------
# McKean-Vlasov
# ----------------------------------------------------------------------


def test_mckean_vlasov_mean_formula():
    # t = 0 gives the initial means; t -> infinity gives theta
    ex0, ey0 = F.mckean_vlasov_mean(2.0, 1.0, 0.9, 0.3, 0.0)
    assert ex0 == pytest.approx(0.9)
    assert ey0 == pytest.approx(0.3)
    exi, eyi = F.mckean_vlasov_mean(2.0, 1.0, 0.9, 0.3, 1e9)
    theta = (0.9 + 2.0 * 0.3) / 3.0
    assert exi == pytest.approx(theta)
    assert eyi == pytest.approx(theta)


@pytest.mark.slow
@pytest.mark.parametrize("g", [fisher_wright(1.0),
                               grid_from_callable(lambda x: (x * (1 - x)) ** 2)])
def test_mckean_vlasov_ensemble_matches_closed_form(g):
    # means are g-independent and follow the closed form at t in {0.5, 1, 2}
    times = (0.5, 1.0, 2.0)
    mean, se = F.simulate_mckean_vlasov(
        c=1.0, K=1.0, e=1.0, g=g, theta_x=0.9, theta_y=0.2,
        times=times, n_replicas=30_000, seed=5, dt=0.005)
    ex, ey = F.mckean_vlasov_mean(1.0, 1.0, 0.9, 0.2, np.asarray(times))
    for i in range(len(times)):
        assert abs(mean[i, 0] - ex[i]) < 3 * se[i, 0] + 1e-3
        assert abs(mean[i, 1] - ey[i]) < 3 * se[i, 1] + 1e-3


def test_heavy_clipping_flags_run():
    # noise-dominated step near the stability bound clips far above 1%
    mp = small_params(N=2, levels=0, c=(0.01,), e=(0.01,), K=(1.0,),
                      g=fisher_wright(8.0), d=8.0)
    init = P.InitSpec.constant(0.5)
    rec = F.simulate(mp, init, 2.0, F.RecordPlan(times=(2.0,)), seed=3,
                     dt=0.12)
    assert rec.clip_fraction > 0.01
    assert rec.flagged
