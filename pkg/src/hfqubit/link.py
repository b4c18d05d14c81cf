"""Doppler limit, fiber loss and distance-limited entanglement attempt rates."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .constants import C_LIGHT, FIBER_INDEX, HBAR, K_B, LIFETIMES_PER_ATTEMPT
from .errors import ValidationError

__all__ = [
    "LinkConfig",
    "RateResult",
    "doppler_limit",
    "fiber_transmission",
    "attempt_rate",
    "crossover_distance",
    "sweep",
]


@dataclass(frozen=True)
class LinkConfig:
    """Fiber link settings.

    Args:
        attenuation: dB/km.
        fiber_index: group index of the fiber.
        distance: node separation in km.
        p_success_per_attempt: heralding probability before fiber loss.
        local_overhead: fixed local time per attempt (s), on top of
            ``lifetimes_per_attempt`` excited-state lifetimes.
    """

    attenuation: float = 0.32
    fiber_index: float = FIBER_INDEX
    distance: float = 0.0
    p_success_per_attempt: float = 1.0
    local_overhead: float = 0.0
    lifetimes_per_attempt: float = LIFETIMES_PER_ATTEMPT

    def __post_init__(self):
        if self.attenuation < 0:
            raise ValidationError("attenuation must be non-negative")
        if self.distance < 0:
            raise ValidationError("distance must be non-negative")
        if not 0 <= self.p_success_per_attempt <= 1:
            raise ValidationError("p_success_per_attempt must lie in [0, 1]")
        if self.local_overhead < 0 or self.lifetimes_per_attempt < 0:
            raise ValidationError("local attempt time must be non-negative")
        if not self.fiber_index >= 1:
            raise ValidationError("fiber_index must be at least 1")


@dataclass(frozen=True)
class RateResult:
    distance: float
    transmission: float
    period: float
    attempt_rate: float
    success_rate: float
    crossover_km: float
    distance_limited: bool


def doppler_limit(gamma: float) -> float:
    """Doppler temperature hbar*gamma/(2 k_B) in kelvin; gamma in rad/s."""
    if not gamma > 0:
        raise ValidationError("gamma must be positive")
    return HBAR * gamma / (2 * K_B)


def fiber_transmission(distance, attenuation: float = 0.32):
    """Power transmission 10^(-attenuation*distance/10)."""
    d = np.asarray(distance, dtype=float)
    if np.any(d < 0):
        raise ValidationError("distance must be non-negative")
    if attenuation < 0:
        raise ValidationError("attenuation must be non-negative")
    out = 10.0 ** (-attenuation * d / 10.0)
    return float(out) if out.ndim == 0 else out


def _local_time(cfg: LinkConfig, lifetime: float) -> float:
    return cfg.local_overhead + cfg.lifetimes_per_attempt * lifetime


def crossover_distance(cfg: LinkConfig, excited_lifetime: float) -> float:
    """Distance (km) at which the round trip equals the local attempt time."""
    if not excited_lifetime > 0:
        raise ValidationError("lifetime must be positive")
    v = C_LIGHT / cfg.fiber_index
    return _local_time(cfg, excited_lifetime) * v / 2 / 1e3


def attempt_rate(cfg: LinkConfig, excited_lifetime: float, distance: float | None = None) -> RateResult:
    """Attempt and heralded-success rates at one distance (km).

    The attempt period is the longer of the local cycle and the photon plus
    classical-signal round trip ``2 L n / c``. Success probability per attempt
    is ``p_success * fiber_transmission(L)``.
    """
    if not excited_lifetime > 0:
        raise ValidationError("lifetime must be positive")
    L = cfg.distance if distance is None else float(distance)
    if L < 0:
        raise ValidationError("distance must be non-negative")
    local = _local_time(cfg, excited_lifetime)
    travel = 2 * L * 1e3 * cfg.fiber_index / C_LIGHT
    period = max(local, travel)
    if period == 0:
        raise ValidationError("attempt period is zero; give a lifetime budget or overhead")
    T = fiber_transmission(L, cfg.attenuation)
    rate = 1.0 / period
    return RateResult(distance=L, transmission=T, period=period, attempt_rate=rate,
                      success_rate=rate * cfg.p_success_per_attempt * T,
                      crossover_km=crossover_distance(cfg, excited_lifetime),
                      distance_limited=travel > local)


def sweep(cfg: LinkConfig, excited_lifetime: float, distances) -> list[RateResult]:
    return [attempt_rate(cfg, excited_lifetime, d) for d in distances]
