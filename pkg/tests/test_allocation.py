import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.optimize import brentq

from mecar.allocation import (
    SolverStatus,
    best_response_distributed,
    cloud_split,
    finish_times,
    min_energy,
    min_max_latency,
)
from mecar.models import RequestContext, SchemeKind, request_context
from mecar.scenario import Device, Scenario, build_scenario, default_config

from oracles import Instance, grid_min_energy, grid_min_max_latency, unilateral_gain

S = SchemeKind
ALL = list(S)


def scenario(n, seed=7, **changes):
    return build_scenario(default_config().replace(num_devices=n, seed=seed, **changes))


def twins(n=2):
    cfg = default_config().replace(num_devices=n)
    dev = Device(0, 90.0, 1e9, 1.0)
    return Scenario(cfg, tuple(Device(i, dev.distance_m, dev.local_cpu_cps, dev.fading_power_gain) for i in range(n)))


def check_invariants(alloc):
    tol = 1 + 1e-9
    assert alloc.tdma_share.sum() <= tol
    assert alloc.edge_cpu_share.sum() <= tol
    assert alloc.cloud_cpu_share.sum() <= tol
    assert np.all(alloc.tx_power_w >= 0)
    assert np.all(alloc.tx_power_w <= default_config().max_tx_power_w * tol)


# -- min-max latency ----------------------------------------------------------


@pytest.mark.parametrize("scheme", ALL)
def test_single_device_takes_everything(scheme):
    a = min_max_latency(scenario(1), scheme, RequestContext.all_hits(1))
    assert a.tdma_share[0] == pytest.approx(1.0)
    server = a.edge_cpu_share if scheme is S.EDGE else a.cloud_cpu_share
    assert server[0] == pytest.approx(1.0)
    check_invariants(a)


@pytest.mark.parametrize("scheme", ALL)
def test_identical_devices_get_equal_shares(scheme):
    sc = twins()
    ctx = RequestContext.all_hits(2)
    a = min_max_latency(sc, scheme, ctx)
    assert a.tdma_share[0] == pytest.approx(a.tdma_share[1], rel=1e-9)
    e = min_energy(sc, scheme, 2 * a.objective_value, ctx)
    assert e.tdma_share[0] == pytest.approx(e.tdma_share[1], rel=1e-9)
    assert e.tx_power_w[0] == pytest.approx(e.tx_power_w[1], rel=1e-9)
    b = best_response_distributed(sc, scheme, 2 * a.objective_value, ctx)
    assert b.converged
    assert b.tdma_share[0] == pytest.approx(b.tdma_share[1], rel=1e-6)
    assert b.tx_power_w[0] == pytest.approx(b.tx_power_w[1], rel=1e-5)


@pytest.mark.parametrize("scheme", ALL)
def test_min_max_latency_matches_grid_oracle_three_devices(scheme):
    sc = scenario(3, seed=21)
    a = min_max_latency(sc, scheme)
    best = grid_min_max_latency(Instance(sc, scheme, a))
    assert a.objective_value <= best + 1e-3
    assert a.objective_value == pytest.approx(best, rel=1e-2)


def test_min_max_latency_objective_is_realised_latency():
    sc = scenario(8)
    for scheme in ALL:
        a = min_max_latency(sc, scheme)
        inst = Instance(sc, scheme, a)
        lat = [inst.evaluate(i, a.device(i))[0].total_s for i in range(8)]
        assert max(lat) == pytest.approx(a.objective_value, rel=1e-9)
        assert a.solver_status is SolverStatus.OPTIMAL
        check_invariants(a)


@settings(max_examples=25, deadline=None)
@given(st.sampled_from(ALL), st.integers(1, 12), st.integers(0, 10_000), st.floats(1.1, 4.0))
def test_min_max_latency_improves_with_capacity(scheme, n, seed, factor):
    sc = scenario(n, seed)
    base = min_max_latency(sc, scheme).objective_value
    for field in ("bandwidth_hz", "edge_capacity_cps", "cloud_capacity_cps"):
        cfg = sc.config.replace(**{field: getattr(sc.config, field) * factor})
        bigger = min_max_latency(build_scenario(cfg), scheme).objective_value
        assert bigger <= base + 1e-8


def test_min_max_latency_infeasible_below_ceiling():
    sc = scenario(3)
    a = min_max_latency(sc, S.LOCAL, ceiling_s=1e-3)
    assert a.solver_status is SolverStatus.INFEASIBLE
    assert a.infeasible_devices == [0, 1, 2]


def test_solvers_need_devices():
    with pytest.raises(ValueError):
        min_max_latency(scenario(0), S.EDGE)
    with pytest.raises(ValueError):
        min_energy(scenario(0), S.EDGE, 1.0)
    with pytest.raises(ValueError):
        min_energy(scenario(2), S.EDGE, 0.0)


# -- min energy -----------------------------------------------------------------


@pytest.mark.parametrize("scheme", ALL)
def test_min_energy_matches_grid_oracle_two_devices(scheme):
    sc = scenario(2, seed=3)
    t_max = 1.6 * min_max_latency(sc, scheme).objective_value
    e = min_energy(sc, scheme, t_max)
    assert e.solver_status is SolverStatus.OPTIMAL
    best = grid_min_energy(Instance(sc, scheme, e), t_max)
    assert e.objective_value == pytest.approx(best, rel=1e-2)
    assert e.objective_value <= best * (1 + 1e-9)


def test_min_energy_meets_deadline_and_reports_energy():
    sc = scenario(10)
    for scheme in ALL:
        t_max = 1.3 * min_max_latency(sc, scheme).objective_value
        e = min_energy(sc, scheme, t_max)
        inst = Instance(sc, scheme, e)
        total = 0.0
        for i in range(10):
            lat, en = inst.evaluate(i, e.device(i))
            assert lat.total_s <= t_max * (1 + 1e-9)
            total += en.total_j
        assert total == pytest.approx(e.objective_value, rel=1e-9)
        check_invariants(e)


def test_min_energy_nonincreasing_in_deadline():
    sc = scenario(12)
    for scheme in ALL:
        t0 = min_max_latency(sc, scheme).objective_value
        energies = [min_energy(sc, scheme, t0 * f).objective_value for f in (1.01, 1.2, 1.5, 2, 4, 10)]
        assert all(b <= a * (1 + 1e-12) for a, b in zip(energies, energies[1:]))


def test_relaxed_deadline_limit():
    """Powers vanish; energy falls to local compute plus the Shannon-limit
    transmit cost noise/gain * bits * ln2 / B."""
    sc = scenario(4)
    cfg = sc.config
    for scheme in ALL:
        e = min_energy(sc, scheme, 1e6)
        inst = Instance(sc, scheme, e)
        floor = inst.local_j.sum() + np.sum(inst.nog * inst.bits * math.log(2) / cfg.bandwidth_hz)
        assert np.all(e.tx_power_w < 1e-5 * cfg.max_tx_power_w)
        assert e.objective_value == pytest.approx(floor, rel=1e-4)
        assert e.objective_value >= floor


def test_min_energy_infeasible_deadline():
    sc = scenario(5)
    e = min_energy(sc, S.CLOUD, 1e-3)
    assert e.solver_status is SolverStatus.INFEASIBLE
    assert e.infeasible_devices == list(range(5))
    check_invariants(e)


def test_min_energy_lists_only_devices_that_fail_alone():
    sc = scenario(5)
    worst = min_max_latency(sc, S.EDGE, RequestContext.all_hits(5))
    # deadline between the best single-device latency and the joint optimum
    e = min_energy(sc, S.EDGE, 0.5 * worst.objective_value, RequestContext.all_hits(5))
    assert e.solver_status is SolverStatus.INFEASIBLE
    assert e.infeasible_devices


# -- best response -------------------------------------------------------------


@pytest.mark.parametrize("scheme", ALL)
def test_single_player_game_equals_min_energy(scheme):
    sc = scenario(1)
    t_max = 2 * min_max_latency(sc, scheme).objective_value
    b = best_response_distributed(sc, scheme, t_max)
    e = min_energy(sc, scheme, t_max)
    assert b.converged
    assert b.objective_value == pytest.approx(e.objective_value, rel=1e-9)
    assert b.tdma_share[0] == pytest.approx(1.0)


@pytest.mark.parametrize("seed", [1, 2, 3])
def test_four_device_equilibrium_has_no_profitable_deviation(seed):
    sc = scenario(4, seed=seed)
    t_max = 1.5 * min_max_latency(sc, S.EDGE).objective_value
    b = best_response_distributed(sc, S.EDGE, t_max)
    assert b.converged and b.solver_status is SolverStatus.OPTIMAL
    assert unilateral_gain(Instance(sc, S.EDGE, b), t_max) <= 1e-6
    check_invariants(b)


def test_equilibrium_no_better_than_social_optimum():
    for seed in range(5):
        sc = scenario(6, seed=seed)
        for scheme in ALL:
            t_max = 1.4 * min_max_latency(sc, scheme).objective_value
            b = best_response_distributed(sc, scheme, t_max)
            e = min_energy(sc, scheme, t_max)
            assert b.objective_value >= e.objective_value * (1 - 1e-9)


def test_non_convergence_is_reported():
    sc = scenario(6)
    t_max = 1.4 * min_max_latency(sc, S.CLOUD).objective_value
    b = best_response_distributed(sc, S.CLOUD, t_max, max_rounds=2)
    assert not b.converged
    assert b.solver_status is SolverStatus.FEASIBLE
    assert b.rounds == 2


# -- cloud split ---------------------------------------------------------------


def test_cloud_split_symmetry():
    assert cloud_split([(1e10, 5e10)] * 4, 3e11) == pytest.approx([0.25] * 4)


def test_cloud_split_idle_server_gets_nothing():
    shares = cloud_split([(1e8, 5e10), (5e11, 5e10), (4e11, 5e10)], 3e11)
    assert shares[0] == 0.0
    assert sum(shares) == pytest.approx(1.0)


def test_cloud_split_three_servers_against_root_finder():
    loads = [(3e11, 5e10), (1e11, 2e10), (6e11, 8e10)]
    cloud = 3e11
    shares = cloud_split(loads, cloud)
    work = np.array([w for w, _ in loads])
    cap = np.array([c for _, c in loads])
    t_star = brentq(lambda t: np.sum(np.maximum(0, work / t - cap)) - cloud, 1e-6, 1e3, xtol=1e-15, rtol=1e-15)
    done = finish_times(loads, cloud, shares)
    for t, s in zip(done, shares):
        if s > 0:
            assert t == pytest.approx(t_star, rel=1e-6)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.tuples(st.floats(1e8, 1e12), st.floats(1e9, 1e11)), min_size=1, max_size=6), st.floats(1e10, 1e12))
def test_cloud_split_beats_equal_split(loads, cloud):
    shares = cloud_split(loads, cloud)
    assert sum(shares) == pytest.approx(1.0)
    assert min(shares) >= 0
    equal = [1.0 / len(loads)] * len(loads)
    assert max(finish_times(loads, cloud, shares)) <= max(finish_times(loads, cloud, equal)) * (1 + 1e-9)


def test_cloud_split_rejects_bad_input():
    with pytest.raises(ValueError):
        cloud_split([], 1.0)
    with pytest.raises(ValueError):
        cloud_split([(1.0, 0.0)], 1.0)


def test_allocation_as_dict_round_numbers():
    a = min_max_latency(scenario(3), S.EDGE)
    d = a.as_dict()
    assert d["scheme"] == "edge" and len(d["devices"]) == 3
    assert d["solver_status"] == "optimal"
