import math

import numpy as np
import pytest

from mecar.harness import (
    CSV_HEADER,
    AllocationPolicy,
    ResultRow,
    SweepSpec,
    SweepVariable,
    evaluate_row,
    live_cache_hits,
    rows_to_csv,
    run_sweep,
    scheme_means,
    summarize,
    summary_to_csv,
    LiveCache,
)
from mecar.models import SchemeKind
from mecar.scenario import ConfigError, build_scenario, default_config

S = SchemeKind
DEVICES = SweepVariable.DEVICE_COUNT
TOLERANCE = SweepVariable.DELAY_TOLERANCE


def spec(**kw):
    base = dict(variable=DEVICES, values=(4, 8), replications=2, base_config=default_config())
    base.update(kw)
    return SweepSpec(**base)


def test_one_row():
    rows = run_sweep(spec(values=(5,), replications=1, schemes=(S.EDGE,)))
    assert len(rows) == 1
    assert rows[0].scheme is S.EDGE and rows[0].value == 5 and rows[0].seed == default_config().seed


def test_csv_header_exact():
    text = rows_to_csv(run_sweep(spec(values=(3,), replications=1)))
    assert text.splitlines()[0] == (
        "scheme,variable,value,seed,mean_latency_s,total_energy_j,local_preproc_s,uplink_s,"
        "edge_compute_s,backhaul_s,cloud_compute_s,downlink_s,render_s,infeasible_count"
    )
    assert len(CSV_HEADER) == 14


@pytest.mark.parametrize("policy", list(AllocationPolicy))
def test_repeat_is_byte_identical(policy):
    sp = spec(allocation_policy=policy)
    assert rows_to_csv(run_sweep(sp)) == rows_to_csv(run_sweep(sp))


def test_canonical_order_and_seeds():
    rows = run_sweep(spec(schemes=(S.EDGE, S.LOCAL), replications=3))
    keys = [(r.scheme.value, r.value, r.seed) for r in rows]
    order = {"local": 0, "cloud": 1, "edge": 2}
    assert keys == sorted(keys, key=lambda k: (order[k[0]], k[1], k[2]))
    assert sorted({r.seed for r in rows}) == [2024, 2025, 2026]


def test_row_reproducible_from_seed_and_value():
    sp = spec(replications=3)
    rows = run_sweep(sp)
    again = evaluate_row(sp, rows[4].scheme, rows[4].value, rows[4].seed - sp.base_config.seed)
    assert again == rows[4]


def test_rows_are_sensible():
    for r in run_sweep(spec(allocation_policy=AllocationPolicy.MIN_ENERGY)):
        assert r.infeasible_count == 0
        assert r.mean_latency_s == pytest.approx(default_config().delay_tolerance_s, rel=1e-9)
        assert r.total_energy_j > 0
        assert all(v >= 0 for v in r.stage_means.values())
        assert math.fsum(r.stage_means.values()) == pytest.approx(r.mean_latency_s, rel=1e-9)
        if r.scheme is S.LOCAL:
            assert r.stage_means["edge_compute_s"] == 0


def test_infeasible_rows_do_not_abort():
    rows = run_sweep(spec(variable=TOLERANCE, values=(1e-4, 10.0), replications=1,
                          allocation_policy=AllocationPolicy.MIN_ENERGY))
    tight = [r for r in rows if r.value == 1e-4]
    loose = [r for r in rows if r.value == 10.0]
    assert all(r.all_infeasible and r.total_energy_j == 0 and r.mean_latency_s == 0 for r in tight)
    assert all(r.infeasible_count == 0 for r in loose)


def test_spec_validation():
    for bad in (dict(values=()), dict(values=(8, 4)), dict(values=(0,)), dict(replications=0),
                dict(schemes=()), dict(schemes=(S.EDGE, S.EDGE)), dict(variable=TOLERANCE, values=(-1.0,))):
        with pytest.raises(ConfigError):
            run_sweep(spec(**bad))


def test_live_cache_drives_edge_hits():
    cfg = default_config().replace(num_devices=40, cache_hit_prob="from-cache-module")
    hits = live_cache_hits(build_scenario(cfg), LiveCache())
    assert len(hits) == 40 and 0 < sum(hits) < 40
    rows = run_sweep(spec(base_config=cfg, schemes=(S.EDGE,)))
    assert all(r.infeasible_count == 0 for r in rows)


def test_all_hits_remove_cloud_stages():
    cfg = default_config().replace(cache_hit_prob=1.0)
    for r in run_sweep(spec(base_config=cfg, schemes=(S.EDGE,))):
        assert r.stage_means["cloud_compute_s"] == 0 and r.stage_means["backhaul_s"] == 0


def test_shared_interest_lightens_edge_work():
    plain = run_sweep(spec(schemes=(S.EDGE,), values=(12,)))
    shared = run_sweep(spec(schemes=(S.EDGE,), values=(12,),
                            base_config=default_config().replace(shared_interest_prob=0.5)))
    for a, b in zip(plain, shared):
        assert b.mean_latency_s < a.mean_latency_s


def _row(scheme, lat, en, value=36, seed=1):
    stages = dict.fromkeys(CSV_HEADER[6:13], 0.0)
    return ResultRow(scheme, DEVICES, value, seed, lat, en, stages, 0, 36)


def test_summary_reductions():
    rows = [_row(S.LOCAL, 2.0, 4.0), _row(S.CLOUD, 1.0, 1.0), _row(S.EDGE, 1.0, 1.0)]
    out = {(s.metric, s.baseline): s for s in summarize(rows)}
    assert out[("latency", S.LOCAL)].reduction_pct == pytest.approx(50.0)
    assert out[("energy", S.LOCAL)].reduction_pct == pytest.approx(75.0)
    assert out[("latency", S.CLOUD)].reduction_pct == 0.0
    assert out[("latency", S.LOCAL)].reference_pct == 41.44
    assert out[("latency", S.CLOUD)].reference_pct == 12.85


def test_summary_standard_error_over_replications():
    rows = [_row(S.LOCAL, 1.0, 1.0, seed=1), _row(S.EDGE, 0.5, 1.0, seed=1),
            _row(S.LOCAL, 1.0, 1.0, seed=2), _row(S.EDGE, 0.7, 1.0, seed=2)]
    lat = [s for s in summarize(rows) if s.metric == "latency" and s.baseline is S.LOCAL][0]
    assert lat.reduction_pct == pytest.approx(40.0)
    assert lat.stderr_pct == pytest.approx(np.std([50, 30], ddof=1) / math.sqrt(2))
    assert lat.replications == 2


def test_summary_warns_on_missing_scheme():
    rows = [_row(S.LOCAL, 1.0, 1.0), _row(S.EDGE, 0.5, 0.5)]
    out = summarize(rows)
    cloud = [s for s in out if s.baseline is S.CLOUD]
    assert cloud and all(s.warning and math.isnan(s.reduction_pct) for s in cloud)
    text = summary_to_csv(out)
    assert "no cloud rows" in text


def test_scheme_means():
    rows = [_row(S.EDGE, 1.0, 2.0, seed=1), _row(S.EDGE, 3.0, 2.0, seed=2)]
    assert scheme_means(rows, "mean_latency_s") == {(S.EDGE, 36): 2.0}


@pytest.fixture(scope="module")
def device_sweep_latency():
    sp = SweepSpec(DEVICES, (6, 12, 18, 24, 30, 36), 50, base_config=default_config())
    return scheme_means(run_sweep(sp), "mean_latency_s")


def test_latency_grows_with_device_count(device_sweep_latency):
    for s in S:
        curve = [device_sweep_latency[(s, n)] for n in (6, 12, 18, 24, 30, 36)]
        assert all(b >= a for a, b in zip(curve, curve[1:])), (s, curve)


def test_energy_increments_grow_with_device_count():
    sp = SweepSpec(DEVICES, (6, 12, 18, 24, 30, 36), 50, allocation_policy=AllocationPolicy.MIN_ENERGY,
                   base_config=default_config())
    means = scheme_means(run_sweep(sp), "total_energy_j")
    for s in S:
        inc = np.diff([means[(s, n)] for n in (6, 12, 18, 24, 30, 36)])
        assert np.all(np.diff(inc) >= 0), (s, inc)
