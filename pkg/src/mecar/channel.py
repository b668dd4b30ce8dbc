"""Radio and backhaul link models for a single TDMA cell."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


class DomainError(ValueError):
    """Raised when a link quantity is outside its physical domain."""


@dataclass(frozen=True)
class LinkBudget:
    tx_power_w: float
    path_gain_linear: float
    fading_power_gain: float
    bandwidth_hz: float
    noise_psd_w_hz: float

    def __post_init__(self):
        for name in ("tx_power_w", "path_gain_linear", "fading_power_gain", "bandwidth_hz", "noise_psd_w_hz"):
            if not getattr(self, name) > 0:
                raise DomainError(f"{name} must be strictly positive")

    @property
    def noise_power_w(self) -> float:
        return self.noise_psd_w_hz * self.bandwidth_hz


def path_loss_db(distance_m):
    """Macro-cell law PL = 128.1 + 37.6 log10(d / 1 km)."""
    return 128.1 + 37.6 * np.log10(np.asarray(distance_m, dtype=float) / 1000.0)


def path_gain(distance_m):
    d = np.asarray(distance_m, dtype=float)
    if np.any(d < 1.0):
        raise DomainError(f"distance must be at least 1 m, got {distance_m!r}")
    g = 10.0 ** (-path_loss_db(d) / 10.0)
    return float(g) if g.ndim == 0 else g


def snr(link: LinkBudget) -> float:
    return link.tx_power_w * link.path_gain_linear * link.fading_power_gain / link.noise_power_w


def shannon_rate(bandwidth_hz, snr_linear):
    """B log2(1 + snr); vectorised, accepts snr = 0."""
    return bandwidth_hz * np.log2(1.0 + np.asarray(snr_linear, dtype=float))


def uplink_rate(link: LinkBudget) -> float:
    """Rate while the device holds the channel (inside its own TDMA slots)."""
    return float(shannon_rate(link.bandwidth_hz, snr(link)))


def power_for_rate(rate_bps, bandwidth_hz, noise_over_gain_w):
    """Inverse of the rate law: transmit power needed to reach ``rate_bps``.

    ``noise_over_gain_w`` is noise power divided by composite gain.
    """
    return noise_over_gain_w * np.expm1(np.asarray(rate_bps, dtype=float) / bandwidth_hz * math.log(2.0))


def effective_throughput(rate: float, share: float) -> float:
    if not 0.0 <= share <= 1.0:
        raise DomainError(f"TDMA share must lie in [0, 1], got {share!r}")
    return rate * share


def backhaul_delay(bits: float, capacity_bps: float) -> float:
    if capacity_bps <= 0:
        raise DomainError(f"backhaul capacity must be positive, got {capacity_bps!r}")
    if bits < 0:
        raise DomainError(f"payload must be non-negative, got {bits!r}")
    return bits / capacity_bps
