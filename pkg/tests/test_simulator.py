from dataclasses import replace

import numpy as np
import pytest

from rdstab import simulator
from rdstab.bounds import bound_report
from rdstab.distributions import NotSamplableError, ServiceSpec
from rdstab.model import WorkloadState
from rdstab.seeding import cell_seed, splitmix64
from rdstab.simulator import (
    RunConfig, arrival_statistics, drift_estimate, run, sample_ordered_states, stability_verdict, sweep,
    trend_slope, validate_equivalence, validate_kernel,
)

TWO_POINT = ServiceSpec.two_point(10, 100, 0.9)
IDENT = ServiceSpec.two_point(10, 100, 0.9, identical=True)


def test_seed_mixing_is_stable():
    # frozen: changing these breaks reproducibility of published sweeps
    assert splitmix64(0) == 0xE220A8397B1DCDAF
    assert cell_seed(1, 0, 0) != cell_seed(1, 0, 1) != cell_seed(1, 1, 0)
    assert cell_seed(7, 2, 3) == cell_seed(7, 2, 3)


def test_run_config_validation():
    with pytest.raises(ValueError):
        RunConfig(3, 4, 0.1, 100, TWO_POINT)
    with pytest.raises(ValueError):
        RunConfig(3, 2, 1.0, 100, TWO_POINT)
    with pytest.raises(ValueError):
        RunConfig(3, 2, 0.1, 100, TWO_POINT, burn_in=100)
    assert RunConfig(3, 2, 0.1, 1000, TWO_POINT).burn_in == 100


def test_profile_not_simulable():
    with pytest.raises(NotSamplableError):
        run(RunConfig(3, 2, 0.1, 100, ServiceSpec.moment_profile([3.0, 2.0, 1.0])))


def test_tiny_load_gives_tiny_workload():
    tr = run(RunConfig(5, 2, 1e-6, 100_000, TWO_POINT, seed=1))
    assert tr.mean_workload < 0.05


def test_reproducible():
    cfg = RunConfig(6, 3, 0.3, 50_000, TWO_POINT, seed=11)
    a, b = run(cfg), run(cfg)
    assert a.summary() == b.summary()
    assert np.array_equal(a.series, b.series)
    c = run(replace(cfg, seed=12))
    assert not np.array_equal(a.series, c.series)


def test_full_redundancy_stable_below_known_region():
    tr = run(RunConfig(10, 10, 0.05, 400_000, TWO_POINT, seed=3))
    assert stability_verdict(tr) == "stable"
    assert tr.mean_workload < 100
    assert tr.balance_violations == 0


def test_d1_edge_bounded_vs_growing():
    lo = run(RunConfig(10, 1, 0.51, 1_000_000, TWO_POINT, seed=4))
    hi = run(RunConfig(10, 1, 0.55, 1_000_000, TWO_POINT, seed=4))
    assert stability_verdict(lo) == "stable"
    assert stability_verdict(hi) == "unstable"
    assert hi.mean_workload > 10 * lo.mean_workload


def test_verdict_half_lower_bound_stable_and_overload_unstable():
    lb = bound_report(TWO_POINT, 10, 3).lambda_lb
    assert stability_verdict(run(RunConfig(10, 3, 0.5 * lb, 300_000, TWO_POINT, seed=5))) == "stable"
    # 1.5 x the observed d=3 edge of about 0.54
    assert stability_verdict(run(RunConfig(10, 3, 0.81, 300_000, TWO_POINT, seed=5))) == "unstable"


def test_constant_zero_series_is_stable():
    tr = run(RunConfig(3, 1, 1e-9, 10_000, TWO_POINT, seed=0))
    assert not tr.series.any()
    assert trend_slope(tr) == 0.0
    assert stability_verdict(tr) == "stable"


def test_short_window_rejected():
    tr = run(RunConfig(3, 1, 0.1, 500, TWO_POINT, stride=100))
    with pytest.raises(ValueError):
        stability_verdict(tr)


def test_sweep_single_cell_equals_run():
    base = RunConfig(5, 2, 0.1, 20_000, TWO_POINT, seed=9)
    res = sweep(base, [2], [0.1])
    tr = run(replace(base, seed=cell_seed(9, 0, 0)))
    (row,) = res.rows
    assert row.mean_workload == tr.mean_workload and row.seed == cell_seed(9, 0, 0)
    assert res.meta["rng"] == "PCG64"


def test_sweep_parallel_matches_serial():
    base = RunConfig(5, 1, 0.1, 20_000, TWO_POINT, seed=9)
    a = sweep(base, [1, 2, 5], [0.05, 0.1, 0.3])
    b = sweep(base, [1, 2, 5], [0.05, 0.1, 0.3], workers=4)
    assert a.rows == b.rows
    assert [(r.d, r.lam) for r in a.rows] == [(d, l) for d in (1, 2, 5) for l in (0.05, 0.1, 0.3)]


def test_sweep_refusals():
    base = RunConfig(5, 1, 0.1, 20_000, TWO_POINT)
    with pytest.raises(ValueError):
        sweep(base, [], [0.1])
    with pytest.raises(ResourceWarning):
        sweep(base, [1, 2], [0.1, 0.2], max_total_slots=50_000)


@pytest.mark.parametrize("spec", [TWO_POINT, IDENT])
def test_equivalence_small(spec):
    rep = validate_equivalence(RunConfig(4, 2, 0.08, 20_000, spec, seed=2))
    assert rep.ok, rep.message
    assert rep.jobs > 1000


def test_equivalence_d1_is_single_queue_lindley():
    cfg = RunConfig(3, 1, 0.1, 20_000, TWO_POINT, seed=6)
    assert validate_equivalence(cfg).ok
    # each server alone follows w <- max(w + b*1{routed} - 1, 0)
    rng = np.random.Generator(np.random.PCG64(cfg.seed))
    stream = simulator.input_stream(3, 1, cfg.lam, TWO_POINT, rng)
    w = [0, 0, 0]
    state = WorkloadState.empty(3)
    for _ in range(5000):
        inp = next(stream)
        for i in range(3):
            add = inp.services[i] if inp.arrival and i in inp.routing.servers else 0
            w[i] = max(w[i] + add - 1, 0)
        state = simulator.model.step(state, inp)
        assert list(state.w) == w


def test_equivalence_adversarial_ties():
    spec = ServiceSpec.iid([(3, 1.0)])
    for d in (1, 2, 3):
        rep = validate_equivalence(RunConfig(3, d, 0.3, 20_000, spec, seed=d), drain_every_slot=True)
        assert rep.ok, rep.message


def test_equivalence_caps():
    with pytest.raises(ValueError):
        validate_equivalence(RunConfig(7, 2, 0.1, 100, TWO_POINT))


def test_equivalence_reports_mutated_step(monkeypatch):
    real = simulator.model.step

    def broken(state, inp):
        nxt = real(state, inp)
        if inp.arrival and nxt.slot > 500:
            return WorkloadState(tuple(x + 1 for x in nxt.w), nxt.slot)
        return nxt

    monkeypatch.setattr(simulator.model, "step", broken)
    rep = validate_equivalence(RunConfig(3, 2, 0.1, 5_000, TWO_POINT, seed=1))
    assert not rep.ok
    assert rep.slot > 500 and f"slot {rep.slot}" in rep.message


def test_kernel_replay():
    for spec in (TWO_POINT, IDENT, ServiceSpec.joint([((1, 4, 4, 9), 0.5), ((2, 2, 3, 3), 0.5)])):
        rep = validate_kernel(RunConfig(4, 2, 0.2, 50_000, spec, seed=3), arrivals=1500)
        assert rep.ok, rep.message


def test_arrival_statistics():
    st = arrival_statistics(6, 2, 0.1, TWO_POINT, 20_000, seed=4)
    assert st.omega_ok and st.rank_ok
    assert sum(st.omega_freq) == pytest.approx(1.0)


def test_drift_no_arrivals_exact():
    w = (3, 5, 5)
    mean, se = drift_estimate(WorkloadState(w), 0.0, TWO_POINT, 3, 2, samples=100)
    assert mean == sum(-2 * x + 1 for x in w) and se == 0.0


def test_drift_empty_state_nonnegative():
    mean, _ = drift_estimate(WorkloadState.empty(4), 0.3, TWO_POINT, 4, 2, samples=2000)
    assert mean >= 0


def test_drift_negative_far_out():
    lb = bound_report(TWO_POINT, 10, 2).lambda_lb
    for k, s in enumerate(sample_ordered_states(5, 10, 2, 1000, 3000, seed=1)):
        mean, se = drift_estimate(s, 0.95 * lb, TWO_POINT, 10, 2, samples=10_000, seed=k)
        assert mean + 3 * se < 0


def test_sample_ordered_states_shape():
    for s in sample_ordered_states(10, 6, 3, 50, 60, seed=2, floor=5):
        assert list(s) == sorted(s)
        assert s[-1] == s[-2] == s[-3] and 50 <= s[-1] <= 60 and s[0] >= 5
