import dataclasses

import numpy as np
import pytest

from conftest import build_pipeline
from eigencoupler.coupling import sample_initial
from eigencoupler.errors import BlowUpError
from eigencoupler.potential import make_potential
from eigencoupler.simulate import (
    EnsembleConfig,
    first_exit_time,
    max_stable_dt,
    path_stream,
    simulate_ensemble,
    simulate_x,
    simulate_y_given_x,
)
from eigencoupler.stats import tv_distance

DW = make_potential("double_well")


def test_zero_noise_fixed_point():
    rng = path_stream(0, 0)
    x = simulate_x(DW, 0.0, 1.0, 1e-3, 1.0, rng)
    np.testing.assert_allclose(x, 1.0, atol=1e-13)


def test_zero_noise_gradient_flow_monotone():
    rng = path_stream(0, 0)
    x = simulate_x(DW, 0.0, 0.5, 1e-3, 20.0, rng)
    assert np.all(np.diff(x) >= -1e-15)
    assert abs(x[-1] - 1.0) < 1e-6


def test_dt_precondition():
    rng = path_stream(0, 0)
    with pytest.raises(ValueError):
        simulate_x(DW, 0.1, 0.0, 0.5, 1.0, rng)    # above 1e-2 / F''(min)
    assert max_stable_dt(DW) == pytest.approx(5e-3)
    with pytest.warns(UserWarning):
        simulate_x(DW, 0.0, 1.0, 6e-3, 0.1, rng, allow_large_dt=True)


def test_blowup_guard():
    rng = path_stream(0, 0)
    with np.errstate(over="ignore", invalid="ignore"):
        with pytest.warns(UserWarning), pytest.raises(BlowUpError):
            # gross overstepping makes the quartic drift oscillate and explode
            simulate_x(DW, 0.1, 2.5, 0.5, 2.0, rng, bound=20.0,
                       allow_large_dt=True)


def test_ou_variance_matches_closed_form():
    # stationary variance eps, relaxation rate 1: Var X(T) = eps (1 - e^{-2T})
    quad = make_potential("quadratic")
    eps, T, dt, n = 0.5, 5.0, 1e-3, 10000
    import eigencoupler.simulate as sim
    noise = np.empty((int(T / dt), n))
    for i in range(n):
        noise[:, i] = path_stream(3, i).standard_normal(int(T / dt))
    xfull, *_ = sim._x_kernel(quad, eps, np.zeros(n), noise, dt, 100.0)
    var = xfull[-1].var()
    target = eps * (1 - np.exp(-2 * T))
    se = target * np.sqrt(2.0 / (n - 1))
    assert abs(var - target) <= 3 * se


def test_holding_time_exponential(fast_chain_decoupled):
    # constant rates: the first holding time in state 0 is exactly
    # budget / q01, an exponential; compare against the known-rate critical
    # value 1.36/sqrt(n)
    pipe = fast_chain_decoupled
    q01 = pipe["spec"].Q[0, 1]
    cfg = EnsembleConfig(n_paths=5000, dt=4e-3, horizon=round(12.0 / q01, 2),
                         eps=0.5, seed=7, initial_kind="fixed", x0=0.0, y0=0,
                         store_stride=500)
    recs = simulate_ensemble(cfg, pipe["model"], pipe["potential"], pipe["spec"])
    taus = np.array([r.jumps[0][0] for r in recs if r.jumps])
    assert len(taus) >= 4995
    s = np.sort(taus)
    n = len(s)
    cdf = 1.0 - np.exp(-q01 * s)
    d = max(np.max(np.arange(1, n + 1) / n - cdf), np.max(cdf - np.arange(n) / n))
    assert d < 1.36 / np.sqrt(n)


def test_absorbing_state_never_leaves(fast_chain_decoupled):
    # zeroing the outgoing generator row makes the state absorbing
    pipe = fast_chain_decoupled
    Q = pipe["model"].Q.copy()
    Q[0] = 0.0
    model = dataclasses.replace(pipe["model"], Q=Q,
                                jump_rates=np.zeros_like(pipe["model"].jump_rates))
    cfg = EnsembleConfig(n_paths=50, dt=2e-3, horizon=3.0, eps=0.5, seed=1,
                         initial_kind="fixed", x0=0.0, y0=0, store_stride=10)
    recs = simulate_ensemble(cfg, model, pipe["potential"], pipe["spec"])
    assert all(len(r.jumps) == 0 for r in recs)
    assert all((r.y == 0).all() for r in recs)


def test_jump_count_matches_closed_form(fast_chain_decoupled):
    # two-state constant rates: E[N(T)] = T (pi . r) + (1 - e^{-lam T})/lam
    # * ((p0 - pi) . r)
    pipe = fast_chain_decoupled
    Q = pipe["spec"].Q
    lam = Q[0, 1] + Q[1, 0]
    r = np.array([Q[0, 1], Q[1, 0]])
    piv = np.array([Q[1, 0], Q[0, 1]]) / lam
    p0 = np.array([1.0, 0.0])
    T = 4.0
    expected = T * (piv @ r) + (1 - np.exp(-lam * T)) / lam * ((p0 - piv) @ r)
    cfg = EnsembleConfig(n_paths=4000, dt=2e-3, horizon=T, eps=0.5, seed=21,
                         initial_kind="fixed", x0=0.0, y0=0, store_stride=200)
    recs = simulate_ensemble(cfg, pipe["model"], pipe["potential"], pipe["spec"])
    counts = np.array([len(r.jumps) for r in recs])
    se = counts.std(ddof=1) / np.sqrt(len(counts))
    assert abs(counts.mean() - expected) <= 3 * se


def test_ensemble_deterministic(fast_chain):
    pipe = fast_chain
    cfg = EnsembleConfig(n_paths=4, dt=2e-3, horizon=2.0, eps=0.5, seed=5,
                         store_stride=1)
    a = simulate_ensemble(cfg, pipe["model"], pipe["potential"], pipe["spec"])
    b = simulate_ensemble(cfg, pipe["model"], pipe["potential"], pipe["spec"])
    for ra, rb in zip(a, b):
        np.testing.assert_array_equal(ra.x, rb.x)
        np.testing.assert_array_equal(ra.times, rb.times)
        assert ra.jumps == rb.jumps


def test_ensemble_matches_sequential_composition(fast_chain):
    # the ensemble is bit-identical to drawing each path's stream and running
    # the single-path operations in order
    pipe = fast_chain
    model, spec, pot = pipe["model"], pipe["spec"], pipe["potential"]
    cfg = EnsembleConfig(n_paths=5, dt=2e-3, horizon=6.0, eps=0.5, seed=11,
                         store_stride=1)
    recs = simulate_ensemble(cfg, model, pot, spec)
    assert sum(len(r.jumps) for r in recs) > 0
    for i, rec in enumerate(recs):
        g = path_stream(11, i)
        x0, y0 = sample_initial(model, spec.p, g)
        x = simulate_x(pot, 0.5, x0, 2e-3, 6.0, g)
        ref = simulate_y_given_x(x, model, y0, g, 2e-3)
        np.testing.assert_array_equal(rec.times, ref.times)
        np.testing.assert_array_equal(rec.x, ref.x)
        np.testing.assert_array_equal(rec.y, ref.y)
        assert rec.jumps == ref.jumps
        np.testing.assert_array_equal(rec.clocks, ref.clocks)


def test_ensemble_chunking_and_workers_invariant(fast_chain, monkeypatch):
    import eigencoupler.simulate as sim
    pipe = fast_chain
    cfg = EnsembleConfig(n_paths=6, dt=2e-3, horizon=2.0, eps=0.5, seed=5,
                         store_stride=1)
    ref = simulate_ensemble(cfg, pipe["model"], pipe["potential"], pipe["spec"])
    monkeypatch.setattr(sim, "_CHUNK_BYTES", 16.0 * 1000 * 2)
    cfg2 = dataclasses.replace(cfg, workers=3)
    out = simulate_ensemble(cfg2, pipe["model"], pipe["potential"], pipe["spec"])
    for ra, rb in zip(ref, out):
        np.testing.assert_array_equal(ra.x, rb.x)
        assert ra.jumps == rb.jumps


def test_ensemble_mean_chain_state(fast_chain_decoupled):
    # E[Y(T)] for the two-state chain follows the scalar relaxation formula
    pipe = fast_chain_decoupled
    Q = pipe["spec"].Q
    lam = Q[0, 1] + Q[1, 0]
    pi1 = Q[0, 1] / lam
    T = 1.5
    expected = pi1 + (0.0 - pi1) * np.exp(-lam * T)
    cfg = EnsembleConfig(n_paths=4000, dt=2e-3, horizon=T, eps=0.5, seed=33,
                         initial_kind="fixed", x0=0.0, y0=0, store_stride=150)
    recs = simulate_ensemble(cfg, pipe["model"], pipe["potential"], pipe["spec"])
    yT = np.array([r.y[-1] for r in recs], dtype=float)
    se = yT.std(ddof=1) / np.sqrt(len(yT))
    assert abs(yT.mean() - expected) <= 3 * se


def test_first_exit_time_semantics(fast_chain_decoupled):
    pipe = fast_chain_decoupled
    q01 = pipe["spec"].Q[0, 1]
    cfg = EnsembleConfig(n_paths=400, dt=2e-3, horizon=8.0, eps=0.5, seed=2,
                         initial_kind="fixed", x0=0.0, y0=0, store_stride=100)
    recs = simulate_ensemble(cfg, pipe["model"], pipe["potential"], pipe["spec"])
    # never-hit region -> None
    assert first_exit_time(recs[0], (50.0, 60.0), target="x") is None
    # chain hitting {1} is the first jump time
    taus = []
    for r in recs:
        t = first_exit_time(r, {1}, target="y")
        if r.jumps:
            assert t == r.jumps[0][0]
            taus.append(t)
        else:
            assert t is None
    taus = np.array(taus)
    se = taus.std(ddof=1) / np.sqrt(len(taus))
    assert abs(taus.mean() - 1.0 / q01) <= 3 * se


def test_first_exit_interpolates_crossing(fast_chain):
    pipe = fast_chain
    cfg = EnsembleConfig(n_paths=1, dt=2e-3, horizon=4.0, eps=0.5, seed=9,
                         store_stride=1)
    rec = simulate_ensemble(cfg, pipe["model"], pipe["potential"], pipe["spec"])[0]
    # threshold strictly above the start so the hit happens mid-path
    lo = max(float(np.quantile(rec.x, 0.8)), float(rec.x[0]) + 0.05)
    assert float(np.max(rec.x)) > lo
    tau = first_exit_time(rec, (lo, np.inf), target="x")
    assert tau is not None and tau > 0
    k = int(np.searchsorted(rec.times, tau))
    assert rec.times[k - 1] <= tau <= rec.times[k]


def test_dt_refinement_tv_stable():
    pipe = build_pipeline("double_well", 0.1, 1000)
    model, spec, pot = pipe["model"], pipe["spec"], pipe["potential"]
    tvs = {}
    for dt in (2e-4, 1e-4):
        cfg = EnsembleConfig(n_paths=4000, dt=dt, horizon=1.0, eps=0.1, seed=9,
                             store_stride=int(round(0.5 / dt)))
        recs = simulate_ensemble(cfg, model, pot, spec)
        xT = np.array([r.x[-1] for r in recs])
        yT = np.array([r.y[-1] for r in recs])
        tvs[dt] = max(tv_distance(xT[yT == j], model.cond[j], model.grid_nodes, 50)
                      for j in (0, 1))
    assert tvs[2e-4] <= 0.12 and tvs[1e-4] <= 0.12
    assert abs(tvs[2e-4] - tvs[1e-4]) <= 0.03


def test_absorb_mode_stops_paths():
    pipe = build_pipeline("double_well", 0.2, 500)
    ball = (0.5, 1.5)
    cfg = EnsembleConfig(n_paths=100, dt=1e-3, horizon=80.0, eps=0.2, seed=4,
                         initial_kind="fixed", x0=-1.0, y0=0, store_stride=50,
                         absorb=ball)
    recs = simulate_ensemble(cfg, pipe["model"], pipe["potential"], pipe["spec"])
    absorbed = [r for r in recs if r.exit_time is not None]
    assert len(absorbed) >= 95
    for r in absorbed:
        assert r.times[-1] == r.exit_time
        assert ball[0] <= r.x[-1] <= ball[1]
        tau = first_exit_time(r, ball, target="x")
        assert tau == pytest.approx(r.exit_time, abs=1e-12)


def test_config_validation():
    with pytest.raises(ValueError):
        EnsembleConfig(n_paths=0, dt=1e-3, horizon=1.0, eps=0.1, seed=0)
    with pytest.raises(ValueError):
        EnsembleConfig(n_paths=1, dt=-1e-3, horizon=1.0, eps=0.1, seed=0)
    with pytest.raises(ValueError):
        EnsembleConfig(n_paths=1, dt=1e-3, horizon=1.0, eps=0.1, seed=0,
                       initial_kind="fixed")
    with pytest.raises(ValueError):
        pipe = build_pipeline("double_well", 0.1, 50)
        cfg = EnsembleConfig(n_paths=1, dt=1e-3, horizon=1.0, eps=0.2, seed=0)
        simulate_ensemble(cfg, pipe["model"], pipe["potential"], pipe["spec"])
