"""Configuration and deterministic scenario generation.

A scenario is one snapshot of a single cell: ``num_devices`` AR devices
dropped uniformly over a disk around the base station, each with its own
local CPU speed and a block-fading power gain.  Every device draws from its
own child stream of ``numpy.random.SeedSequence(seed)``, so the first ``k``
devices of a scenario are identical for every ``num_devices >= k``.  Sweeps
over the device count therefore reuse the same users (common random numbers).
"""

from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

MIN_DISTANCE_M = 1.0


class ConfigError(ValueError):
    """Raised when a configuration value violates its constraints."""

    def __init__(self, field_name: str, message: str):
        super().__init__(f"{field_name}: {message}")
        self.field_name = field_name


@dataclass(frozen=True)
class ARWorkload:
    """Per-frame task of one AR application.

    Cycle counts are CPU cycles per frame for each of the five AR components.
    ``uplink_bits`` is the payload when tracker, mapper and recognizer inputs
    are all offloaded; ``recognizer_bits`` is the single frame sent when only
    recognition is offloaded (and what the edge forwards to the cloud on a
    cache miss); ``result_bits`` is the augmented result returned to the user.

    The defaults are a fitted calibration (see ``scripts/calibrate.py``); the
    README lists the values together with the gaps they produce.
    """

    video_source_cycles: float = 5.2e5
    tracker_cycles: float = 2.3e7
    mapper_cycles: float = 2.3e7
    recognizer_cycles: float = 1.08e7
    renderer_cycles: float = 5.2e5
    uplink_bits: float = 4.0e5
    recognizer_bits: float = 3.92e5
    result_bits: float = 4.0e4

    def validate(self) -> None:
        for f in dataclasses.fields(self):
            value = getattr(self, f.name)
            if not value > 0 or not math.isfinite(value):
                raise ConfigError(f"workload.{f.name}", f"must be a positive number, got {value!r}")
        if self.recognizer_bits > self.uplink_bits:
            raise ConfigError("workload.recognizer_bits", "must not exceed uplink_bits")

    @property
    def offloaded_cycles(self) -> float:
        """Tracker + mapper + recognizer, the part shipped off the device."""
        return self.tracker_cycles + self.mapper_cycles + self.recognizer_cycles


@dataclass(frozen=True)
class SimConfig:
    cell_radius_m: float = 200.0
    bandwidth_hz: float = 15e6
    noise_psd_dbm_hz: float = -174.0
    max_tx_power_dbm: float = 24.0
    backhaul_up_bps: float = 200e6
    backhaul_down_bps: float = 200e6
    downlink_bps: float = 200e6
    edge_capacity_cps: float = 5e10
    cloud_capacity_cps: float = 3e11
    local_capacity_min_cps: float = 5e8
    local_capacity_max_cps: float = 2e9
    kappa: float = 3.7e-30  # fitted with the workload
    delay_tolerance_s: float = 0.45
    num_devices: int = 36
    workload: ARWorkload = field(default_factory=ARWorkload)
    # a probability or the string "from-cache-module"
    cache_hit_prob: float | str = 0.8
    shared_interest_prob: float = 0.0
    seed: int = 2024

    def validate(self) -> None:
        positive = (
            "cell_radius_m",
            "bandwidth_hz",
            "backhaul_up_bps",
            "backhaul_down_bps",
            "downlink_bps",
            "edge_capacity_cps",
            "cloud_capacity_cps",
            "local_capacity_min_cps",
            "local_capacity_max_cps",
            "kappa",
            "delay_tolerance_s",
        )
        for name in positive:
            value = getattr(self, name)
            if not isinstance(value, (int, float)) or not value > 0 or not math.isfinite(value):
                raise ConfigError(name, f"must be a positive number, got {value!r}")
        for name in ("noise_psd_dbm_hz", "max_tx_power_dbm"):
            value = getattr(self, name)
            if not isinstance(value, (int, float)) or not math.isfinite(value):
                raise ConfigError(name, f"must be a finite number, got {value!r}")
        if self.local_capacity_min_cps > self.local_capacity_max_cps:
            raise ConfigError("local_capacity_min_cps", "must not exceed local_capacity_max_cps")
        if not isinstance(self.num_devices, int) or isinstance(self.num_devices, bool) or self.num_devices < 0:
            raise ConfigError("num_devices", f"must be a non-negative integer, got {self.num_devices!r}")
        if isinstance(self.cache_hit_prob, str):
            if self.cache_hit_prob != "from-cache-module":
                raise ConfigError("cache_hit_prob", "must be a probability or 'from-cache-module'")
        elif not 0.0 <= self.cache_hit_prob <= 1.0:
            raise ConfigError("cache_hit_prob", f"must lie in [0, 1], got {self.cache_hit_prob!r}")
        if not 0.0 <= self.shared_interest_prob <= 1.0:
            raise ConfigError("shared_interest_prob", f"must lie in [0, 1], got {self.shared_interest_prob!r}")
        if not isinstance(self.seed, int) or isinstance(self.seed, bool) or not 0 <= self.seed < 2**64:
            raise ConfigError("seed", f"must be an integer in [0, 2**64), got {self.seed!r}")
        if not isinstance(self.workload, ARWorkload):
            raise ConfigError("workload", "must be an ARWorkload")
        self.workload.validate()

    @property
    def max_tx_power_w(self) -> float:
        return dbm_to_watts(self.max_tx_power_dbm)

    @property
    def noise_psd_w_hz(self) -> float:
        return dbm_to_watts(self.noise_psd_dbm_hz)

    def replace(self, **changes: Any) -> "SimConfig":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


@dataclass(frozen=True)
class Device:
    id: int
    distance_m: float
    local_cpu_cps: float
    fading_power_gain: float


@dataclass(frozen=True)
class Scenario:
    config: SimConfig
    devices: tuple[Device, ...]

    def __len__(self) -> int:
        return len(self.devices)


def dbm_to_watts(dbm: float) -> float:
    return 10.0 ** ((dbm - 30.0) / 10.0)


def default_config() -> SimConfig:
    """Return the reference cell: 200 m radius, 15 MHz TDMA, 24 dBm cap,
    200 Mbps backhaul each way, 5e10 / 3e11 cycles/s at edge / cloud, local
    CPUs on [5e8, 2e9] cycles/s and a 450 ms deadline, together with the
    shipped workload calibration."""
    return SimConfig()


def device_rng(seed: int, device_id: int, stream: int = 0) -> np.random.Generator:
    """Generator private to one device and one purpose.

    ``stream`` separates independent uses (0 is scenario geometry; the
    harness uses others for cache and shared-interest draws).
    """
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(device_id, stream)))


def build_scenario(config: SimConfig) -> Scenario:
    config.validate()
    devices = []
    for i in range(config.num_devices):
        u_radius, u_cpu, u_fade = device_rng(config.seed, i).random(3)
        distance = max(config.cell_radius_m * math.sqrt(u_radius), MIN_DISTANCE_M)
        cpu = config.local_capacity_min_cps + u_cpu * (
            config.local_capacity_max_cps - config.local_capacity_min_cps
        )
        # unit-mean exponential power gain; 1 - u keeps the log argument in (0, 1]
        fading = -math.log1p(-u_fade) if u_fade > 0 else 1e-300
        fading = max(fading, 1e-300)
        devices.append(Device(id=i, distance_m=distance, local_cpu_cps=cpu, fading_power_gain=fading))
    return Scenario(config=config, devices=tuple(devices))


# -- config files -----------------------------------------------------------

_WORKLOAD_FIELDS = {f.name for f in dataclasses.fields(ARWorkload)}
_CONFIG_FIELDS = {f.name: f for f in dataclasses.fields(SimConfig)}


def config_from_dict(data: dict) -> SimConfig:
    """Build a config from a JSON-style mapping; missing keys keep defaults."""
    unknown = set(data) - set(_CONFIG_FIELDS)
    if unknown:
        name = sorted(unknown)[0]
        raise ConfigError(name, "unknown configuration key")
    values = dict(data)
    if "workload" in values:
        wl = values["workload"]
        if isinstance(wl, dict):
            bad = set(wl) - _WORKLOAD_FIELDS
            if bad:
                raise ConfigError(f"workload.{sorted(bad)[0]}", "unknown workload key")
            values["workload"] = ARWorkload(**{k: float(v) for k, v in wl.items()})
    cfg = SimConfig(**values)
    cfg.validate()
    return cfg


def load_config(path: str | Path) -> SimConfig:
    try:
        data = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError("config", f"{path} is not valid JSON ({exc})") from None
    if not isinstance(data, dict):
        raise ConfigError("config", f"{path} must hold a JSON object")
    return config_from_dict(data)


def dump_config(config: SimConfig) -> str:
    return json.dumps(config.to_dict(), indent=2, sort_keys=False) + "\n"


def _coerce(name: str, raw: str, current: Any) -> Any:
    if name == "cache_hit_prob" and raw == "from-cache-module":
        return raw
    try:
        if isinstance(current, bool):
            raise ValueError
        if isinstance(current, int):
            return int(raw)
        return float(raw)
    except ValueError:
        raise ConfigError(name, f"cannot parse {raw!r}") from None


def apply_overrides(config: SimConfig, pairs: list[str]) -> SimConfig:
    """Apply ``key=value`` overrides; ``workload.<field>`` reaches the workload."""
    for pair in pairs:
        key, sep, raw = pair.partition("=")
        key = key.strip()
        if not sep:
            raise ConfigError(key or pair, "override must look like key=value")
        if key.startswith("workload."):
            sub = key.split(".", 1)[1]
            if sub not in _WORKLOAD_FIELDS:
                raise ConfigError(key, "unknown workload key")
            wl = dataclasses.replace(config.workload, **{sub: _coerce(key, raw, 0.0)})
            config = config.replace(workload=wl)
        elif key in _CONFIG_FIELDS and key != "workload":
            config = config.replace(**{key: _coerce(key, raw.strip(), getattr(config, key))})
        else:
            raise ConfigError(key, "unknown configuration key")
    config.validate()
    return config
