"""Joint radio and compute allocation for one cell.

Every device's end-to-end latency has the form

    latency_i = fixed_i + airtime_i / tdma_i + server_i / compute_i

where ``tdma_i`` is its TDMA share, ``compute_i`` its share of the scheme's
shared server (the edge for EDGE, the cloud for LOCAL and CLOUD), and the
other stages use equal shares of the backhaul and downlink (see
``models.device_terms``).  The solvers below work on that decomposition.

For a target latency ``T`` with uplink slack ``s_i = T - fixed_i`` the
compute split that minimises the total TDMA demand is, by the KKT
conditions, ``compute_i = (server_i + mu * sqrt(airtime_i * server_i)) / s_i``
with ``mu`` fixed by ``sum(compute) = 1``.  ``mu`` enters linearly, so the
split is explicit and ``min_max_latency`` is a one-dimensional bisection on
``T``.  ``min_energy`` and the distributed game keep that split at the
deadline and trade airtime against transmit power.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import lambertw

from .models import (
    DeviceAllocation,
    RequestContext,
    SchemeKind,
    device_terms,
    request_context,
)
from .scenario import Scenario

LN2 = math.log(2.0)


class SolverStatus(enum.Enum):
    OPTIMAL = "optimal"
    FEASIBLE = "feasible"
    INFEASIBLE = "infeasible"


@dataclass
class Allocation:
    scheme: SchemeKind
    tdma_share: np.ndarray
    tx_power_w: np.ndarray
    edge_cpu_share: np.ndarray
    cloud_cpu_share: np.ndarray
    backhaul_share: np.ndarray
    downlink_share: np.ndarray
    objective_value: float
    solver_status: SolverStatus
    infeasible_devices: list[int] = field(default_factory=list)
    converged: bool | None = None
    rounds: int = 0

    def __len__(self) -> int:
        return len(self.tdma_share)

    def device(self, i: int) -> DeviceAllocation:
        return DeviceAllocation(
            tdma_share=float(self.tdma_share[i]),
            tx_power_w=float(self.tx_power_w[i]),
            edge_cpu_share=float(self.edge_cpu_share[i]),
            cloud_cpu_share=float(self.cloud_cpu_share[i]),
            backhaul_share=float(self.backhaul_share[i]),
            downlink_share=float(self.downlink_share[i]),
        )

    def as_dict(self) -> dict:
        return {
            "scheme": self.scheme.value,
            "objective_value": self.objective_value,
            "solver_status": self.solver_status.value,
            "infeasible_devices": list(self.infeasible_devices),
            "converged": self.converged,
            "rounds": self.rounds,
            "devices": [
                {
                    "id": i,
                    "tdma_share": float(self.tdma_share[i]),
                    "tx_power_w": float(self.tx_power_w[i]),
                    "edge_cpu_share": float(self.edge_cpu_share[i]),
                    "cloud_cpu_share": float(self.cloud_cpu_share[i]),
                }
                for i in range(len(self))
            ],
        }


@dataclass(frozen=True)
class Problem:
    """Vectorised latency/energy terms for every device of a scenario."""

    scheme: SchemeKind
    fixed: np.ndarray
    airtime: np.ndarray
    server: np.ndarray
    bits: np.ndarray
    noise_over_gain: np.ndarray
    local_energy: np.ndarray
    backhaul_share: np.ndarray
    downlink_share: np.ndarray
    fallback_cloud_share: np.ndarray  # EDGE misses only, else 0
    bandwidth_hz: float
    max_power_w: float

    @property
    def n(self) -> int:
        return len(self.fixed)

    def allocation(self, tdma, power, compute, objective, status, **extra) -> Allocation:
        if self.scheme is SchemeKind.EDGE:
            edge, cloud = compute, self.fallback_cloud_share
        else:
            edge, cloud = np.zeros(self.n), compute
        return Allocation(
            scheme=self.scheme,
            tdma_share=np.asarray(tdma, dtype=float),
            tx_power_w=np.asarray(power, dtype=float),
            edge_cpu_share=np.asarray(edge, dtype=float),
            cloud_cpu_share=np.asarray(cloud, dtype=float),
            backhaul_share=self.backhaul_share,
            downlink_share=self.downlink_share,
            objective_value=float(objective),
            solver_status=status,
            **extra,
        )


def build_problem(scenario: Scenario, scheme: SchemeKind, context: RequestContext | None = None) -> Problem:
    cfg = scenario.config
    n = len(scenario.devices)
    if context is None:
        context = request_context(scenario)
    hits = np.array(context.edge_hits, dtype=bool)
    if scheme is SchemeKind.EDGE:
        n_backhaul = int(np.count_nonzero(~hits))
    else:
        n_backhaul = n
    backhaul = 1.0 / max(n_backhaul, 1)
    downlink = 1.0 / max(n, 1)
    rows = []
    for d, hit, merged in zip(scenario.devices, context.edge_hits, context.merged):
        rows.append(
            device_terms(
                scheme,
                d,
                cfg,
                edge_hit=hit,
                recognizer_merged=merged,
                backhaul_share=backhaul,
                downlink_share=downlink,
                fallback_cloud_share=backhaul,
            )
        )
    col = lambda name: np.array([getattr(r, name) for r in rows], dtype=float)
    fallback = np.where(~hits, backhaul, 0.0) if scheme is SchemeKind.EDGE else np.zeros(n)
    return Problem(
        scheme=scheme,
        fixed=col("fixed_s"),
        airtime=col("airtime_s"),
        server=col("server_s"),
        bits=col("uplink_bits"),
        noise_over_gain=col("noise_over_gain_w"),
        local_energy=col("local_energy_j"),
        backhaul_share=np.full(n, backhaul),
        downlink_share=np.full(n, downlink),
        fallback_cloud_share=fallback,
        bandwidth_hz=cfg.bandwidth_hz,
        max_power_w=cfg.max_tx_power_w,
    )


# -- shared building blocks ---------------------------------------------------


def compute_split(problem: Problem, target_s: float) -> np.ndarray | None:
    """Server shares that minimise total TDMA demand at latency ``target_s``.

    Returns None when the target leaves no room for the server stage.
    """
    slack = target_s - problem.fixed
    if np.any(slack <= 0):
        return None
    a, b = problem.airtime, problem.server
    base = b / slack
    rest = 1.0 - base.sum()
    if rest <= 0:
        return None
    weight = np.sqrt(a * b) / slack
    if weight.sum() == 0:
        return base / base.sum() if base.sum() > 0 else np.zeros_like(base)
    return base + rest * weight / weight.sum()


def uplink_window(problem: Problem, target_s: float, compute: np.ndarray) -> np.ndarray:
    """Wall-clock time left for the uplink once every other stage is paid."""
    with np.errstate(divide="ignore", invalid="ignore"):
        server_time = np.where(problem.server > 0, problem.server / compute, 0.0)
    return target_s - problem.fixed - server_time


def tdma_demand(problem: Problem, target_s: float) -> tuple[float, np.ndarray | None, np.ndarray | None]:
    """Least total TDMA share (at full power) meeting ``target_s``."""
    compute = compute_split(problem, target_s)
    if compute is None:
        return math.inf, None, None
    window = uplink_window(problem, target_s, compute)
    if np.any(window <= 0):
        return math.inf, None, compute
    tdma = problem.airtime / window
    return float(tdma.sum()), tdma, compute


def latencies(problem: Problem, tdma: np.ndarray, compute: np.ndarray, power: np.ndarray | None = None) -> np.ndarray:
    """Per-device latency under an allocation, from the decomposition."""
    if power is None:
        airtime = problem.airtime
    else:
        rate = problem.bandwidth_hz * np.log2(1.0 + power / problem.noise_over_gain)
        airtime = problem.bits / rate
    with np.errstate(divide="ignore"):
        server_time = np.where(problem.server > 0, problem.server / compute, 0.0)
    return problem.fixed + airtime / tdma + server_time


def alone_infeasible(problem: Problem, target_s: float) -> list[int]:
    """Devices missing ``target_s`` even with the whole channel and server."""
    best = problem.fixed + problem.airtime + problem.server
    return [int(i) for i in np.flatnonzero(best > target_s)]


# -- centralised minimum of the worst latency --------------------------------


def min_max_latency(
    scenario: Scenario,
    scheme: SchemeKind,
    context: RequestContext | None = None,
    *,
    tol_s: float = 1e-9,
    ceiling_s: float = 60.0,
) -> Allocation:
    """Smallest common latency bound every device can meet at full power.

    Bisection on the bound ``T``; ``T`` is feasible when the explicit compute
    split leaves a total TDMA demand of at most one.  Any leftover airtime is
    handed out pro rata so the returned shares sum to one.
    """
    problem = build_problem(scenario, scheme, context)
    n = problem.n
    if n == 0:
        raise ValueError("min_max_latency needs at least one device")
    power = np.full(n, problem.max_power_w)

    if tdma_demand(problem, ceiling_s)[0] > 1.0:
        tdma = problem.airtime / problem.airtime.sum()
        compute = problem.server / problem.server.sum() if problem.server.sum() > 0 else np.zeros(n)
        lat = latencies(problem, tdma, compute)
        bad = sorted(set(alone_infeasible(problem, ceiling_s)) | {int(i) for i in np.flatnonzero(lat > ceiling_s)})
        return problem.allocation(tdma, power, compute, math.inf, SolverStatus.INFEASIBLE, infeasible_devices=bad)

    lo, hi = float(problem.fixed.max()), ceiling_s
    while hi - lo > tol_s:
        mid = 0.5 * (lo + hi)
        if tdma_demand(problem, mid)[0] <= 1.0:
            hi = mid
        else:
            lo = mid
    total, tdma, compute = tdma_demand(problem, hi)
    tdma = tdma / total
    objective = float(latencies(problem, tdma, compute).max())
    return problem.allocation(tdma, power, compute, objective, SolverStatus.OPTIMAL)


# -- centralised minimum energy under a deadline ------------------------------


def _transmit_energy(tdma, window, bits, nog, bandwidth):
    """Energy of sending ``bits`` at exactly the rate that fits the airtime."""
    airtime = tdma * window
    return airtime * nog * np.expm1(LN2 * bits / (bandwidth * airtime))


def _power_for_share(tdma, window, bits, nog, bandwidth):
    return nog * np.expm1(LN2 * bits / (bandwidth * tdma * window))


def _marginal_value(y, window, nog):
    """-dE/dtdma at spectral load ``y = ln2 * bits / (B * airtime)``."""
    return window * nog * ((y - 1.0) * np.exp(y) + 1.0)


def _shares_at_price(price, window, bits, nog, bandwidth, tdma_min):
    """Per-device share whose marginal energy saving equals ``price``."""
    z = price / (window * nog) - 1.0
    y = 1.0 + np.real(lambertw(z / math.e))
    with np.errstate(divide="ignore"):
        tdma = LN2 * bits / (bandwidth * y * window)
    return np.maximum(tdma, tdma_min)


@dataclass(frozen=True)
class DeadlineSetup:
    compute: np.ndarray
    window: np.ndarray
    tdma_min: np.ndarray


def deadline_setup(problem: Problem, t_max: float) -> DeadlineSetup | None:
    compute = compute_split(problem, t_max)
    if compute is None:
        return None
    window = uplink_window(problem, t_max, compute)
    if np.any(window <= 0):
        return None
    return DeadlineSetup(compute, window, problem.airtime / window)


def _infeasible_deadline(problem: Problem, t_max: float) -> Allocation:
    n = problem.n
    tdma = problem.airtime / problem.airtime.sum()
    compute = compute_split(problem, t_max)
    if compute is None:
        compute = problem.server / problem.server.sum() if problem.server.sum() > 0 else np.zeros(n)
    power = np.full(n, problem.max_power_w)
    lat = latencies(problem, tdma, compute)
    bad = sorted(set(alone_infeasible(problem, t_max)) | {int(i) for i in np.flatnonzero(lat > t_max)})
    rate_airtime = problem.airtime  # airtime at max power
    energy = float((problem.local_energy + power * rate_airtime).sum())
    return problem.allocation(tdma, power, compute, energy, SolverStatus.INFEASIBLE, infeasible_devices=bad)


def min_energy(
    scenario: Scenario,
    scheme: SchemeKind,
    t_max: float,
    context: RequestContext | None = None,
    *,
    tol_j: float = 1e-9,
    max_iter: int = 400,
) -> Allocation:
    """Least total device energy with every latency at most ``t_max``.

    Compute shares follow ``compute_split`` at ``t_max``.  Each device then
    sends at the slowest rate that still meets the deadline in its share, and
    the shares are water-filled: all active devices get the same marginal
    energy saving per unit of airtime (a Lambert-W closed form per device,
    bisection on the common price).
    """
    if t_max <= 0:
        raise ValueError("t_max must be positive")
    problem = build_problem(scenario, scheme, context)
    if problem.n == 0:
        raise ValueError("min_energy needs at least one device")
    setup = deadline_setup(problem, t_max)
    if setup is None or setup.tdma_min.sum() > 1.0:
        return _infeasible_deadline(problem, t_max)

    args = (setup.window, problem.bits, problem.noise_over_gain, problem.bandwidth_hz)

    def energy_of(tdma):
        return float(np.sum(problem.local_energy + _transmit_energy(tdma, *args)))

    y_cap = LN2 * problem.bits / (problem.bandwidth_hz * setup.tdma_min * setup.window)
    hi = float(np.max(_marginal_value(y_cap, setup.window, problem.noise_over_gain)))
    lo = hi
    while np.sum(_shares_at_price(lo, *args, setup.tdma_min)) < 1.0:
        lo *= 1e-3
        if lo < 1e-300:
            break
    # bisection in log-price; total share falls as the price rises
    for _ in range(max_iter):
        mid = math.sqrt(lo * hi)
        if np.sum(_shares_at_price(mid, *args, setup.tdma_min)) > 1.0:
            lo = mid
        else:
            hi = mid
        if hi / lo - 1.0 < 1e-15:
            break
    tdma = _shares_at_price(hi, *args, setup.tdma_min)
    tdma = tdma / max(tdma.sum(), 1.0)
    power = np.minimum(_power_for_share(tdma, *args), problem.max_power_w)
    return problem.allocation(tdma, power, setup.compute, energy_of(tdma), SolverStatus.OPTIMAL)


# -- distributed best response -------------------------------------------------


def best_response_distributed(
    scenario: Scenario,
    scheme: SchemeKind,
    t_max: float,
    context: RequestContext | None = None,
    *,
    max_rounds: int = 1000,
    tol: float = 1e-6,
    relaxation: float | None = None,
) -> Allocation:
    """Energy game in which each device only chooses its own transmit power.

    A device sending at power ``p`` asks for the airtime fraction that just
    meets its deadline at that power.  Requests are granted as asked when
    they fit and scaled down proportionally when they do not, in which case
    everyone misses.  Holding the others' requests fixed, a device's best
    reply is the lowest power whose request still fits the remaining
    airtime.  All devices reply simultaneously and move a fraction
    ``relaxation`` (default ``1/N``) of the way towards their reply, which
    keeps simultaneous moves from over-claiming the same leftover.  Play
    stops once no granted share moves by more than ``tol``.
    """
    if t_max <= 0:
        raise ValueError("t_max must be positive")
    problem = build_problem(scenario, scheme, context)
    n = problem.n
    if n == 0:
        raise ValueError("best_response_distributed needs at least one device")
    setup = deadline_setup(problem, t_max)
    if setup is None or setup.tdma_min.sum() > 1.0:
        alloc = _infeasible_deadline(problem, t_max)
        alloc.converged = False
        return alloc
    omega = 1.0 / n if relaxation is None else relaxation
    pmax = problem.max_power_w
    bits, nog, bw, window = problem.bits, problem.noise_over_gain, problem.bandwidth_hz, setup.window

    def request(p):
        rate = bw * np.log2(1.0 + p / nog)
        return bits / (rate * window)

    def granted(req):
        return req / max(1.0, float(req.sum()))

    power = np.full(n, pmax)
    req = request(power)
    converged = False
    rounds = 0
    for rounds in range(1, max_rounds + 1):
        others = req.sum() - req
        target = np.maximum(1.0 - others, setup.tdma_min)
        reply = np.minimum(_power_for_share(target, window, bits, nog, bw), pmax)
        new_power = power + omega * (reply - power)
        new_req = request(new_power)
        change = float(np.max(np.abs(granted(new_req) - granted(req))))
        power, req = new_power, new_req
        if change < tol:
            converged = True
            break
    tdma = granted(req)
    power = np.minimum(_power_for_share(tdma, window, bits, nog, bw), pmax)
    energy = float(np.sum(problem.local_energy + _transmit_energy(tdma, window, bits, nog, bw)))
    status = SolverStatus.OPTIMAL if converged else SolverStatus.FEASIBLE
    return problem.allocation(tdma, power, setup.compute, energy, status, converged=converged, rounds=rounds)


# -- cloud capacity across edge servers ----------------------------------------


def cloud_split(edge_workloads, cloud_capacity_cps: float, *, max_iter: int = 200) -> list[float]:
    """Cloud shares that equalise the finish times of several edge servers.

    ``edge_workloads`` holds ``(cycles, edge_capacity_cps)`` per server.  The
    common finish time ``T`` solves ``sum(max(0, cycles/T - capacity)) =
    cloud_capacity``; servers already done by ``T`` on their own get nothing.
    """
    work = np.array([w for w, _ in edge_workloads], dtype=float)
    cap = np.array([c for _, c in edge_workloads], dtype=float)
    if work.size == 0:
        raise ValueError("cloud_split needs at least one edge server")
    if np.any(work <= 0) or np.any(cap <= 0) or cloud_capacity_cps <= 0:
        raise ValueError("workloads and capacities must be positive")
    t = common_finish_time(work, cap, cloud_capacity_cps, max_iter=max_iter)
    deficit = np.maximum(0.0, work / t - cap)
    return (deficit / deficit.sum()).tolist()


def common_finish_time(work, cap, cloud_capacity_cps, *, max_iter: int = 200) -> float:
    hi = float(np.max(work / cap))
    lo = float(np.sum(work) / (np.sum(cap) + cloud_capacity_cps))
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        if np.sum(np.maximum(0.0, work / mid - cap)) > cloud_capacity_cps:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 1e-15 * hi:
            break
    return hi


def finish_times(edge_workloads, cloud_capacity_cps: float, shares) -> list[float]:
    return [w / (c + s * cloud_capacity_cps) for (w, c), s in zip(edge_workloads, shares)]
