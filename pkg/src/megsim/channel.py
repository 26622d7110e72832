"""AWGN corruption of analog payloads, lossless digital delivery, and
Shannon-capacity transmission timing."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .content import PayloadSpec

ENERGY_MODES = ("per_symbol", "per_message")


class ChannelConfigError(ValueError):
    """Raised for channel configurations the model cannot represent."""


@dataclass(frozen=True)
class ChannelSpec:
    """One link's noise and timing parameters.

    ``per_symbol`` gives every transmitted real symbol the configured SNR
    regardless of message length. ``per_message`` spreads a fixed energy
    budget over the message, so the effective per-symbol SNR scales by
    ``reference_symbol_count / symbol_count``.
    """

    snr_db: float = -20.0
    bandwidth_hz: float = 1e6
    energy_mode: str = "per_symbol"
    noise_seed: int = 0
    reference_symbol_count: int | None = None

    def __post_init__(self):
        if self.bandwidth_hz <= 0:
            raise ChannelConfigError("bandwidth_hz must be positive")
        if self.energy_mode not in ENERGY_MODES:
            raise ChannelConfigError(f"unknown energy_mode {self.energy_mode!r}")
        if self.energy_mode == "per_message":
            if not self.reference_symbol_count or self.reference_symbol_count < 1:
                raise ChannelConfigError(
                    "per_message mode requires a positive reference_symbol_count"
                )


def noise_variance(snr_db: float, signal_power: float) -> float:
    """Noise variance sigma^2 = P * 10^(-snr_db / 10)."""
    if signal_power < 0:
        raise ValueError("signal_power must be non-negative")
    return signal_power * 10.0 ** (-snr_db / 10.0)


def effective_snr_db(spec: ChannelSpec, symbol_count: int) -> float:
    """Per-symbol SNR after applying the energy mode to a message of this length."""
    if symbol_count < 1:
        raise ValueError("symbol_count must be positive")
    if spec.energy_mode == "per_symbol":
        return spec.snr_db
    return spec.snr_db + 10.0 * math.log10(spec.reference_symbol_count / symbol_count)


def transmit_analog(
    symbols: np.ndarray, spec: ChannelSpec, stream: np.random.Generator
) -> np.ndarray:
    """Add white Gaussian noise scaled to the empirical power of the vector.

    Deterministic given the stream state; output length equals input length.
    """
    x = np.asarray(symbols, dtype=np.float64)
    if x.size < 1:
        raise ValueError("cannot transmit an empty symbol vector")
    power = float(np.mean(x * x))
    variance = noise_variance(effective_snr_db(spec, x.size), power)
    if variance == 0.0:
        return x.copy()
    return x + math.sqrt(variance) * stream.standard_normal(x.shape)


def transmit_digital(payload: PayloadSpec, content: bytes) -> bytes:
    """Deliver a digital payload bit-exactly; only accounting and timing apply."""
    if payload.transport != "digital_lossless":
        raise ValueError("transmit_digital only accepts digital_lossless payloads")
    return bytes(content)


def transmission_time(bits: float, spec: ChannelSpec) -> float:
    """Seconds to move ``bits`` at Shannon capacity: bits / (B * log2(1 + snr))."""
    if bits < 0:
        raise ValueError("bits must be non-negative")
    if bits == 0:
        return 0.0
    snr_linear = 10.0 ** (spec.snr_db / 10.0)
    capacity = spec.bandwidth_hz * math.log1p(snr_linear) / math.log(2.0)
    if capacity <= 0.0 or not math.isfinite(capacity):
        if math.isinf(capacity):
            return 0.0
        raise ChannelConfigError(
            f"snr_db={spec.snr_db} yields zero link capacity; cannot time transmissions"
        )
    return bits / capacity
