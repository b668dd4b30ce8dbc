"""Sweeps over device count and delay tolerance, CSV output and summaries."""

from __future__ import annotations

import csv
import enum
import io
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from . import edgecache
from .allocation import (
    Allocation,
    SolverStatus,
    best_response_distributed,
    min_energy,
    min_max_latency,
)
from .models import RequestContext, SchemeKind, evaluate_device, request_context
from .scenario import ConfigError, Scenario, SimConfig, build_scenario, device_rng

CSV_HEADER = (
    "scheme",
    "variable",
    "value",
    "seed",
    "mean_latency_s",
    "total_energy_j",
    "local_preproc_s",
    "uplink_s",
    "edge_compute_s",
    "backhaul_s",
    "cloud_compute_s",
    "downlink_s",
    "render_s",
    "infeasible_count",
)
STAGES = CSV_HEADER[6:13]

SCHEME_ORDER = (SchemeKind.LOCAL, SchemeKind.CLOUD, SchemeKind.EDGE)

# reference reductions of EDGE at N = 36 (percent)
REFERENCE_REDUCTIONS = {
    ("latency", SchemeKind.LOCAL): 41.44,
    ("latency", SchemeKind.CLOUD): 12.85,
    ("energy", SchemeKind.LOCAL): 73.71,
    ("energy", SchemeKind.CLOUD): 65.34,
}
REFERENCE_DEVICE_COUNT = 36

LIVE_CACHE_STREAM = 3


class SweepVariable(enum.Enum):
    DEVICE_COUNT = "device_count"
    DELAY_TOLERANCE = "delay_tolerance"


class AllocationPolicy(enum.Enum):
    MIN_MAX_LATENCY = "minmax"
    MIN_ENERGY = "minenergy"
    BEST_RESPONSE = "bestresponse"


@dataclass(frozen=True)
class LiveCache:
    """Zipf request process feeding the edge database in live-cache runs.

    The cache is warmed with ``warmup`` requests, then each device's request
    is the next draw from the same stream.
    """

    n_objects: int = 100
    exponent: float = 0.8
    capacity_objects: int = 10
    threshold: int = 3
    warmup: int = 2000


@dataclass(frozen=True)
class SweepSpec:
    variable: SweepVariable
    values: tuple
    replications: int
    schemes: tuple = SCHEME_ORDER
    allocation_policy: AllocationPolicy = AllocationPolicy.MIN_MAX_LATENCY
    base_config: SimConfig = field(default_factory=SimConfig)
    live_cache: LiveCache = field(default_factory=LiveCache)

    def __post_init__(self):
        object.__setattr__(self, "values", tuple(self.values))
        object.__setattr__(self, "schemes", tuple(self.schemes))

    def validate(self) -> None:
        if not self.values:
            raise ConfigError("values", "a sweep needs at least one value")
        if any(b <= a for a, b in zip(self.values, self.values[1:])):
            raise ConfigError("values", "sweep values must be strictly increasing")
        if self.variable is SweepVariable.DEVICE_COUNT:
            if any(not isinstance(v, int) or isinstance(v, bool) or v < 1 for v in self.values):
                raise ConfigError("values", "device counts must be positive integers")
        elif any(not v > 0 for v in self.values):
            raise ConfigError("values", "delay tolerances must be positive")
        if not isinstance(self.replications, int) or self.replications < 1:
            raise ConfigError("replications", "must be at least 1")
        if not self.schemes or len(set(self.schemes)) != len(self.schemes):
            raise ConfigError("schemes", "need at least one scheme, each listed once")
        self.base_config.validate()


@dataclass(frozen=True)
class ResultRow:
    scheme: SchemeKind
    variable: SweepVariable
    value: float
    seed: int
    mean_latency_s: float
    total_energy_j: float
    stage_means: dict
    infeasible_count: int
    num_devices: int

    @property
    def all_infeasible(self) -> bool:
        return self.infeasible_count >= self.num_devices

    def csv_fields(self) -> list[str]:
        return [
            self.scheme.value,
            self.variable.value,
            _fmt(self.value),
            str(self.seed),
            _fmt(self.mean_latency_s),
            _fmt(self.total_energy_j),
            *(_fmt(self.stage_means[s]) for s in STAGES),
            str(self.infeasible_count),
        ]


def _fmt(x) -> str:
    if isinstance(x, (int, np.integer)) and not isinstance(x, bool):
        return str(int(x))
    return repr(float(x))


# -- one row -----------------------------------------------------------------


def row_config(spec: SweepSpec, value, replication: int) -> SimConfig:
    cfg = spec.base_config.replace(seed=spec.base_config.seed + replication)
    if spec.variable is SweepVariable.DEVICE_COUNT:
        return cfg.replace(num_devices=int(value))
    return cfg.replace(delay_tolerance_s=float(value))


def live_cache_hits(scenario: Scenario, setup: LiveCache) -> list[bool]:
    """Edge hits of one round of requests against a warmed popularity cache."""
    cfg = scenario.config
    seed = int(device_rng(cfg.seed, 0, LIVE_CACHE_STREAM).integers(2**63))
    stream = edgecache.zipf_stream(setup.n_objects, setup.exponent, setup.warmup + len(scenario), seed)
    state = edgecache.CacheState(setup.capacity_objects, setup.threshold)
    edgecache.simulate(state, stream[: setup.warmup])
    return [o.hit for o in edgecache.simulate(state, stream[setup.warmup :])]


def scenario_context(scenario: Scenario, setup: LiveCache) -> RequestContext:
    if scenario.config.cache_hit_prob == "from-cache-module":
        return request_context(scenario, live_cache_hits(scenario, setup))
    return request_context(scenario)


def solve(scenario: Scenario, scheme: SchemeKind, policy: AllocationPolicy, context: RequestContext) -> Allocation:
    t_max = scenario.config.delay_tolerance_s
    if policy is AllocationPolicy.MIN_MAX_LATENCY:
        return min_max_latency(scenario, scheme, context)
    if policy is AllocationPolicy.MIN_ENERGY:
        return min_energy(scenario, scheme, t_max, context)
    return best_response_distributed(scenario, scheme, t_max, context)


def evaluate_row(spec: SweepSpec, scheme: SchemeKind, value, replication: int) -> ResultRow:
    cfg = row_config(spec, value, replication)
    scenario = build_scenario(cfg)
    context = scenario_context(scenario, spec.live_cache)
    alloc = solve(scenario, scheme, spec.allocation_policy, context)
    bad = set(alloc.infeasible_devices)
    if alloc.solver_status is SolverStatus.INFEASIBLE and not bad:
        bad = set(range(len(scenario)))
    latencies, energies = [], []
    stages = {s: [] for s in STAGES}
    for i, dev in enumerate(scenario.devices):
        if i in bad:
            continue
        lat, en = evaluate_device(
            scheme, dev, alloc.device(i), cfg, context.edge_hits[i], recognizer_merged=context.merged[i]
        )
        latencies.append(lat.total_s)
        energies.append(en.total_j)
        for s in STAGES:
            stages[s].append(lat.backhaul_s if s == "backhaul_s" else getattr(lat, s))
    mean = lambda xs: math.fsum(xs) / len(xs) if xs else 0.0
    return ResultRow(
        scheme=scheme,
        variable=spec.variable,
        value=value,
        seed=cfg.seed,
        mean_latency_s=mean(latencies),
        total_energy_j=math.fsum(energies),
        stage_means={s: mean(v) for s, v in stages.items()},
        infeasible_count=len(bad),
        num_devices=len(scenario),
    )


def run_sweep(spec: SweepSpec) -> list[ResultRow]:
    """Every (scheme, value, replication) row in canonical order.

    Replication ``r`` uses seed ``base_config.seed + r``; rows never depend on
    each other, so the order of evaluation does not affect the results.
    """
    spec.validate()
    schemes = sorted(spec.schemes, key=SCHEME_ORDER.index)
    return [
        evaluate_row(spec, scheme, value, rep)
        for scheme in schemes
        for value in spec.values
        for rep in range(spec.replications)
    ]


def rows_to_csv(rows: Iterable[ResultRow]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_HEADER)
    for row in rows:
        writer.writerow(row.csv_fields())
    return buf.getvalue()


# -- summaries ---------------------------------------------------------------


@dataclass(frozen=True)
class SummaryRow:
    variable: SweepVariable
    value: float
    metric: str  # "latency" or "energy"
    baseline: SchemeKind
    reduction_pct: float
    stderr_pct: float
    replications: int
    reference_pct: float | None = None
    warning: str = ""


SUMMARY_HEADER = (
    "variable",
    "value",
    "metric",
    "baseline",
    "reduction_pct",
    "stderr_pct",
    "replications",
    "reference_pct",
    "warning",
)


def percent_reduction(edge: float, baseline: float) -> float:
    if baseline == 0:
        return 0.0 if edge == 0 else -math.inf
    return 100.0 * (1.0 - edge / baseline)


def _mean_stderr(xs: Sequence[float]) -> tuple[float, float]:
    arr = np.asarray(xs, dtype=float)
    if arr.size < 2:
        return float(arr.mean()), 0.0
    return float(arr.mean()), float(arr.std(ddof=1) / math.sqrt(arr.size))


def summarize(rows: Sequence[ResultRow]) -> list[SummaryRow]:
    """Reduction of EDGE against LOCAL and CLOUD at every swept value.

    Reductions are computed per replication seed and then averaged; the
    standard error is over replications.  A comparison whose schemes are not
    both present at a value becomes a row carrying only a warning.
    """
    by_key: dict = {}
    for r in rows:
        by_key.setdefault((r.variable, r.value), {}).setdefault(r.scheme, {})[r.seed] = r
    out = []
    for (variable, value) in sorted(by_key, key=lambda k: (k[0].value, k[1])):
        per_scheme = by_key[(variable, value)]
        for metric, attr in (("latency", "mean_latency_s"), ("energy", "total_energy_j")):
            for baseline in (SchemeKind.LOCAL, SchemeKind.CLOUD):
                ref = None
                if variable is SweepVariable.DEVICE_COUNT and value == REFERENCE_DEVICE_COUNT:
                    ref = REFERENCE_REDUCTIONS[(metric, baseline)]
                edge, base = per_scheme.get(SchemeKind.EDGE), per_scheme.get(baseline)
                seeds = sorted(set(edge or ()) & set(base or ()))
                if not seeds:
                    missing = "edge" if not edge else baseline.value
                    out.append(
                        SummaryRow(variable, value, metric, baseline, math.nan, math.nan, 0, ref,
                                   f"no {missing} rows at this value")
                    )
                    continue
                red = [percent_reduction(getattr(edge[s], attr), getattr(base[s], attr)) for s in seeds]
                mean, se = _mean_stderr(red)
                out.append(SummaryRow(variable, value, metric, baseline, mean, se, len(seeds), ref))
    return out


def summary_to_csv(summary: Iterable[SummaryRow]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(SUMMARY_HEADER)
    for s in summary:
        writer.writerow(
            [
                s.variable.value,
                _fmt(s.value),
                s.metric,
                s.baseline.value,
                "" if math.isnan(s.reduction_pct) else f"{s.reduction_pct:.4f}",
                "" if math.isnan(s.stderr_pct) else f"{s.stderr_pct:.4f}",
                s.replications,
                "" if s.reference_pct is None else f"{s.reference_pct:.2f}",
                s.warning,
            ]
        )
    return buf.getvalue()


def scheme_means(rows: Iterable[ResultRow], attr: str) -> dict:
    """Mean of ``attr`` over replications, keyed by (scheme, value)."""
    acc: dict = {}
    for r in rows:
        acc.setdefault((r.scheme, r.value), []).append(getattr(r, attr))
    return {k: math.fsum(v) / len(v) for k, v in acc.items()}
