"""Physical-layer costs of moving program state over the air.

All logarithms are natural; ``log 2`` is folded into the effective bit
count ``n_eff = N * T_b * ln 2 / (1 - P_e)``, so a rate of ``t`` nats per
symbol moves ``n_eff / t`` seconds worth of state.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "FadingModel",
    "RadioConfig",
    "bits_per_symbol",
    "delay_multi",
    "delay_single",
    "effective_bits",
    "energy_multi",
    "energy_single",
    "normalized_gain",
    "sample_fading",
    "snr_gap",
]


def snr_gap(ber: float) -> float:
    """QAM SNR gap ``-2 ln(5 BER) / 3`` for a target bit error rate.

    Only defined for ``0 < ber < 1/5``, where the gap is positive.
    """
    if not (0.0 < ber < 0.2):
        raise ValueError(f"ber must lie in (0, 0.2), got {ber!r}")
    return -2.0 * math.log(5.0 * ber) / 3.0


@dataclass(frozen=True)
class RadioConfig:
    ber: float = 1e-3
    distance_m: float = 5.0
    pathloss_exp: float = 2.0
    noise_power: float = 5e-5
    bit_duration_s: float = 1e-6
    packet_error_rate: float = 0.0
    power_budget_w: float = 0.01

    def __post_init__(self):
        snr_gap(self.ber)
        for name in ("distance_m", "pathloss_exp", "noise_power",
                     "bit_duration_s", "power_budget_w"):
            value = getattr(self, name)
            if not (value > 0 and math.isfinite(value)):
                raise ValueError(f"{name} must be a positive finite number, got {value!r}")
        if not (0.0 <= self.packet_error_rate < 1.0):
            raise ValueError(f"packet_error_rate must lie in [0, 1), got {self.packet_error_rate!r}")

    @property
    def gap(self) -> float:
        return snr_gap(self.ber)


@dataclass(frozen=True)
class FadingModel:
    """Gamma fading of the channel power over ``branches`` independent paths.

    The power gain has density ``x**(M-1) exp(-x/s) / ((M-1)! s**M)`` with
    ``M = branches`` and ``s = mean_gain``: the sum of ``M`` exponentials of
    mean ``s``. M = 1, 2, 4 model SISO, 1x2 SIMO and 2x2 MIMO links.
    """

    branches: int = 1
    mean_gain: float = 1.0

    def __post_init__(self):
        if isinstance(self.branches, bool) or int(self.branches) != self.branches or self.branches < 1:
            raise ValueError(f"branches must be an integer >= 1, got {self.branches!r}")
        if not (self.mean_gain > 0 and math.isfinite(self.mean_gain)):
            raise ValueError(f"mean_gain must be positive, got {self.mean_gain!r}")


def normalized_gain(alpha, rc: RadioConfig):
    """Received SNR per watt, ``alpha / (gap * d**beta * N0)``.

    Accepts a scalar or an array of fading powers.
    """
    if np.any(np.asarray(alpha) <= 0):
        raise ValueError("fading power must be positive")
    return alpha / (rc.gap * rc.distance_m ** rc.pathloss_exp * rc.noise_power)


def sample_fading(fm: FadingModel, rng: np.random.Generator, size=None):
    """Draw fading powers from ``fm``.

    Each draw sums ``branches`` exponential variates taken consecutively
    from ``rng``, so two models sharing a stream and ``mean_gain`` give
    nested draws: the M=4 draw is never below the M=1 draw.
    """
    if size is None:
        return float(rng.exponential(fm.mean_gain, size=fm.branches).sum())
    shape = (size,) if np.isscalar(size) else tuple(size)
    return rng.exponential(fm.mean_gain, size=shape + (fm.branches,)).sum(axis=-1)


def effective_bits(state_bits, rc: RadioConfig):
    """``N * T_b * ln 2 / (1 - P_e)``, in second-nats.

    The ``1 / (1 - P_e)`` factor is the mean number of transmissions of a
    packet under independent losses.
    """
    return state_bits * rc.bit_duration_s * math.log(2.0) / (1.0 - rc.packet_error_rate)


def delay_single(p, a, n_eff):
    return n_eff / np.log1p(a * p)


def energy_single(p, a, n_eff):
    """Transfer energy ``p * n_eff / ln(1 + a p)``; ``n_eff / a`` at p = 0."""
    p = np.asarray(p, dtype=float)
    x = a * p
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.where(x > 0, p * n_eff / np.log1p(np.where(x > 0, x, 1.0)), n_eff / a)
    return float(out) if out.ndim == 0 else out


def _sum_rate(p_vec, a_vec) -> float:
    p_vec = np.asarray(p_vec, dtype=float)
    a_vec = np.asarray(a_vec, dtype=float)
    if p_vec.shape != a_vec.shape:
        raise ValueError("power and gain vectors must have the same length")
    if np.any(p_vec < 0):
        raise ValueError("powers must be nonnegative")
    if not np.any(p_vec > 0):
        raise ValueError("at least one subchannel needs positive power")
    return float(np.sum(np.log1p(a_vec * p_vec)))


def delay_multi(p_vec, a_vec, n_eff) -> float:
    return n_eff / _sum_rate(p_vec, a_vec)


def energy_multi(p_vec, a_vec, n_eff) -> float:
    return n_eff * float(np.sum(p_vec)) / _sum_rate(p_vec, a_vec)


def bits_per_symbol(rate_nats):
    return np.asarray(rate_nats) / math.log(2.0)
