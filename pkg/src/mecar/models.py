"""Per-device latency and energy of one AR request under each scheme.

Stages run strictly in sequence.  All three schemes capture the frame and
render the result on the device; they differ in where tracking, mapping and
recognition happen:

* LOCAL   tracker and mapper on the device, recognizer in the cloud;
* CLOUD   tracker, mapper and recognizer in the cloud;
* EDGE    all three at the edge server, recognition falling back to the
          cloud when the object is not found in the edge database.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, fields

from . import channel
from .retrieval import RetrievalKind, RetrievalOutcome
from .scenario import Device, SimConfig


class EvaluationError(ValueError):
    """Raised when an allocation cannot carry the requested scheme."""


class SchemeKind(enum.Enum):
    LOCAL = "local"
    CLOUD = "cloud"
    EDGE = "edge"


@dataclass(frozen=True)
class DeviceAllocation:
    """Resources granted to one device.

    ``backhaul_share`` and ``downlink_share`` are the device's fractions of
    the BS-cloud link and of the BS downlink; both default to the whole link.
    """

    tdma_share: float
    tx_power_w: float
    edge_cpu_share: float = 0.0
    cloud_cpu_share: float = 0.0
    backhaul_share: float = 1.0
    downlink_share: float = 1.0


@dataclass(frozen=True)
class LatencyBreakdown:
    local_preproc_s: float = 0.0
    uplink_s: float = 0.0
    edge_compute_s: float = 0.0
    backhaul_up_s: float = 0.0
    cloud_compute_s: float = 0.0
    backhaul_down_s: float = 0.0
    downlink_s: float = 0.0
    render_s: float = 0.0

    @property
    def total_s(self) -> float:
        return math.fsum(getattr(self, f.name) for f in fields(self))

    @property
    def backhaul_s(self) -> float:
        return self.backhaul_up_s + self.backhaul_down_s


@dataclass(frozen=True)
class EnergyBreakdown:
    local_compute_j: float = 0.0
    transmit_j: float = 0.0

    @property
    def total_j(self) -> float:
        return self.local_compute_j + self.transmit_j


def computation_delay(cycles: float, freq_cps: float) -> float:
    if freq_cps <= 0:
        raise channel.DomainError(f"CPU frequency must be positive, got {freq_cps!r}")
    if cycles < 0:
        raise channel.DomainError(f"cycle count must be non-negative, got {cycles!r}")
    return cycles / freq_cps


def transmission_delay(bits: float, throughput_bps: float) -> float:
    if throughput_bps <= 0:
        raise channel.DomainError(f"throughput must be positive, got {throughput_bps!r}")
    if bits < 0:
        raise channel.DomainError(f"payload must be non-negative, got {bits!r}")
    return bits / throughput_bps


def local_compute_energy(cycles: float, freq_cps: float, kappa: float) -> float:
    """Dynamic CPU energy kappa * f^2 * C."""
    if freq_cps <= 0:
        raise channel.DomainError(f"CPU frequency must be positive, got {freq_cps!r}")
    if cycles < 0 or kappa < 0:
        raise channel.DomainError("cycles and kappa must be non-negative")
    return kappa * freq_cps**2 * cycles


def transmit_energy(tx_power_w: float, bits: float, rate_bps: float) -> float:
    """Power times own airtime; other devices' slots cost nothing."""
    if rate_bps <= 0:
        raise channel.DomainError(f"rate must be positive, got {rate_bps!r}")
    if tx_power_w < 0 or bits < 0:
        raise channel.DomainError("power and payload must be non-negative")
    return tx_power_w * bits / rate_bps


def noise_over_gain(device: Device, config: SimConfig) -> float:
    """Noise power over composite channel gain (W); SNR = p / this."""
    g = channel.path_gain(device.distance_m) * device.fading_power_gain
    return config.noise_psd_w_hz * config.bandwidth_hz / g


def device_rate(device: Device, config: SimConfig, tx_power_w: float) -> float:
    if tx_power_w <= 0:
        return 0.0
    link = channel.LinkBudget(
        tx_power_w=tx_power_w,
        path_gain_linear=channel.path_gain(device.distance_m),
        fading_power_gain=device.fading_power_gain,
        bandwidth_hz=config.bandwidth_hz,
        noise_psd_w_hz=config.noise_psd_w_hz,
    )
    return channel.uplink_rate(link)


def _edge_hit(outcome: RetrievalOutcome | RetrievalKind | bool | None) -> bool:
    if outcome is None:
        return False
    if isinstance(outcome, bool):
        return outcome
    kind = outcome.kind if isinstance(outcome, RetrievalOutcome) else outcome
    return kind is RetrievalKind.EDGE_HIT


def evaluate_device(
    scheme: SchemeKind,
    device: Device,
    alloc: DeviceAllocation,
    config: SimConfig,
    retrieval_outcome: RetrievalOutcome | RetrievalKind | bool | None = None,
    *,
    recognizer_merged: bool = False,
) -> tuple[LatencyBreakdown, EnergyBreakdown]:
    """Latency and device energy of one request.

    ``retrieval_outcome`` only matters for EDGE, where anything but an edge
    hit sends the recognizer frame on to the cloud.  ``recognizer_merged``
    marks an EDGE request whose recognition is shared with another user's
    identical request, so it adds no recognizer cycles at the edge.
    """
    wl = config.workload
    f_loc = device.local_cpu_cps
    if not 0.0 < alloc.tdma_share <= 1.0:
        raise EvaluationError(f"device {device.id}: tdma_share must lie in (0, 1]")
    if not 0.0 < alloc.tx_power_w <= config.max_tx_power_w * (1 + 1e-9):
        raise EvaluationError(f"device {device.id}: tx power outside (0, cap]")
    if not (0.0 < alloc.backhaul_share <= 1.0 and 0.0 < alloc.downlink_share <= 1.0):
        raise EvaluationError(f"device {device.id}: link shares must lie in (0, 1]")
    rate = device_rate(device, config, alloc.tx_power_w)
    throughput = channel.effective_throughput(rate, alloc.tdma_share)
    backhaul_up = config.backhaul_up_bps * alloc.backhaul_share
    backhaul_down = config.backhaul_down_bps * alloc.backhaul_share

    def cloud_speed() -> float:
        if alloc.cloud_cpu_share <= 0:
            raise EvaluationError(f"device {device.id}: {scheme.name} needs a cloud CPU share")
        return config.cloud_capacity_cps * alloc.cloud_cpu_share

    stages = dict(
        local_preproc_s=computation_delay(wl.video_source_cycles, f_loc),
        downlink_s=transmission_delay(wl.result_bits, config.downlink_bps * alloc.downlink_share),
        render_s=computation_delay(wl.renderer_cycles, f_loc),
    )
    local_cycles = wl.video_source_cycles + wl.renderer_cycles

    if scheme is SchemeKind.LOCAL:
        stages["local_preproc_s"] += computation_delay(wl.tracker_cycles + wl.mapper_cycles, f_loc)
        local_cycles += wl.tracker_cycles + wl.mapper_cycles
        sent_bits = wl.recognizer_bits
        stages["uplink_s"] = transmission_delay(sent_bits, throughput)
        stages["backhaul_up_s"] = channel.backhaul_delay(wl.recognizer_bits, backhaul_up)
        stages["cloud_compute_s"] = computation_delay(wl.recognizer_cycles, cloud_speed())
        stages["backhaul_down_s"] = channel.backhaul_delay(wl.result_bits, backhaul_down)
    elif scheme is SchemeKind.CLOUD:
        sent_bits = wl.uplink_bits
        stages["uplink_s"] = transmission_delay(sent_bits, throughput)
        stages["backhaul_up_s"] = channel.backhaul_delay(wl.uplink_bits, backhaul_up)
        stages["cloud_compute_s"] = computation_delay(wl.offloaded_cycles, cloud_speed())
        stages["backhaul_down_s"] = channel.backhaul_delay(wl.result_bits, backhaul_down)
    elif scheme is SchemeKind.EDGE:
        if alloc.edge_cpu_share <= 0:
            raise EvaluationError(f"device {device.id}: EDGE needs an edge CPU share")
        sent_bits = wl.uplink_bits
        edge_cycles = wl.tracker_cycles + wl.mapper_cycles
        if not recognizer_merged:
            edge_cycles += wl.recognizer_cycles
        stages["uplink_s"] = transmission_delay(sent_bits, throughput)
        stages["edge_compute_s"] = computation_delay(
            edge_cycles, config.edge_capacity_cps * alloc.edge_cpu_share
        )
        if not _edge_hit(retrieval_outcome):
            stages["backhaul_up_s"] = channel.backhaul_delay(wl.recognizer_bits, backhaul_up)
            stages["cloud_compute_s"] = computation_delay(wl.recognizer_cycles, cloud_speed())
            stages["backhaul_down_s"] = channel.backhaul_delay(wl.result_bits, backhaul_down)
    else:  # pragma: no cover
        raise EvaluationError(f"unknown scheme {scheme!r}")

    latency = LatencyBreakdown(**stages)
    energy = EnergyBreakdown(
        local_compute_j=local_compute_energy(local_cycles, f_loc, config.kappa),
        transmit_j=transmit_energy(alloc.tx_power_w, sent_bits, rate),
    )
    return latency, energy


# -- decomposition used by the allocators ------------------------------------


@dataclass(frozen=True)
class DeviceTerms:
    """Latency of one device written as ``fixed_s + a/tdma + b/compute``.

    ``airtime_s`` (a) is the uplink airtime at full power with the whole
    channel; ``server_s`` (b) is the time on the scheme's shared server with
    the whole server.  The shared server is the edge for EDGE and the cloud
    for LOCAL and CLOUD.  ``fixed_s`` collects every other stage.
    """

    fixed_s: float
    airtime_s: float
    server_s: float
    uplink_bits: float
    noise_over_gain_w: float
    local_energy_j: float


def device_terms(
    scheme: SchemeKind,
    device: Device,
    config: SimConfig,
    *,
    edge_hit: bool = True,
    recognizer_merged: bool = False,
    backhaul_share: float = 1.0,
    downlink_share: float = 1.0,
    fallback_cloud_share: float = 1.0,
) -> DeviceTerms:
    wl = config.workload
    f = device.local_cpu_cps
    fixed = (wl.video_source_cycles + wl.renderer_cycles) / f
    fixed += wl.result_bits / (config.downlink_bps * downlink_share)
    local_cycles = wl.video_source_cycles + wl.renderer_cycles
    up = config.backhaul_up_bps * backhaul_share
    down = config.backhaul_down_bps * backhaul_share
    if scheme is SchemeKind.LOCAL:
        fixed += (wl.tracker_cycles + wl.mapper_cycles) / f
        local_cycles += wl.tracker_cycles + wl.mapper_cycles
        fixed += wl.recognizer_bits / up + wl.result_bits / down
        bits = wl.recognizer_bits
        server = wl.recognizer_cycles / config.cloud_capacity_cps
    elif scheme is SchemeKind.CLOUD:
        fixed += wl.uplink_bits / up + wl.result_bits / down
        bits = wl.uplink_bits
        server = wl.offloaded_cycles / config.cloud_capacity_cps
    else:
        bits = wl.uplink_bits
        cycles = wl.tracker_cycles + wl.mapper_cycles + (0.0 if recognizer_merged else wl.recognizer_cycles)
        server = cycles / config.edge_capacity_cps
        if not edge_hit:
            fixed += wl.recognizer_bits / up + wl.result_bits / down
            fixed += wl.recognizer_cycles / (config.cloud_capacity_cps * fallback_cloud_share)
    nog = noise_over_gain(device, config)
    r_max = float(channel.shannon_rate(config.bandwidth_hz, config.max_tx_power_w / nog))
    return DeviceTerms(
        fixed_s=fixed,
        airtime_s=bits / r_max,
        server_s=server,
        uplink_bits=bits,
        noise_over_gain_w=nog,
        local_energy_j=config.kappa * f * f * local_cycles,
    )


# -- per-request context -----------------------------------------------------

CACHE_STREAM = 1
SHARING_STREAM = 2


@dataclass(frozen=True)
class RequestContext:
    """Which EDGE requests hit the edge database and which recognitions merge
    with another user's identical request."""

    edge_hits: tuple[bool, ...]
    merged: tuple[bool, ...]

    @classmethod
    def all_hits(cls, n: int) -> "RequestContext":
        return cls((True,) * n, (False,) * n)


def request_context(scenario, edge_hits=None) -> RequestContext:
    """Draw cache and shared-interest outcomes for every device.

    With a numeric ``cache_hit_prob`` each device hits with that probability
    from its own seeded stream; otherwise ``edge_hits`` must be supplied
    (typically from a live cache simulation).
    """
    from .scenario import device_rng

    cfg = scenario.config
    n = len(scenario.devices)
    if edge_hits is None:
        if isinstance(cfg.cache_hit_prob, str):
            raise ValueError("cache_hit_prob is 'from-cache-module'; pass edge_hits explicitly")
        edge_hits = [device_rng(cfg.seed, d.id, CACHE_STREAM).random() < cfg.cache_hit_prob for d in scenario.devices]
    if len(edge_hits) != n:
        raise ValueError("edge_hits must have one entry per device")
    merged = [
        cfg.shared_interest_prob > 0 and device_rng(cfg.seed, d.id, SHARING_STREAM).random() < cfg.shared_interest_prob
        for d in scenario.devices
    ]
    return RequestContext(tuple(bool(h) for h in edge_hits), tuple(merged))
