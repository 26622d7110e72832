import math

import numpy as np
import pytest

from megsim import (
    ChannelConfigError,
    ChannelSpec,
    PayloadSpec,
    effective_snr_db,
    noise_variance,
    transmission_time,
    transmit_analog,
    transmit_digital,
)
from megsim.streams import substream


def test_noise_variance_definition():
    assert noise_variance(0.0, 1.0) == 1.0
    assert noise_variance(-20.0, 1.0) == pytest.approx(100.0)
    assert noise_variance(10.0, 2.0) == pytest.approx(0.2)
    assert noise_variance(math.inf, 1.0) == 0.0


def test_transmit_analog_high_snr_is_identity():
    spec = ChannelSpec(snr_db=300.0)
    x = np.linspace(-1, 1, 64)
    y = transmit_analog(x, spec, substream(0, "t"))
    assert y.shape == x.shape
    assert np.max(np.abs(y - x)) < 1e-12


def test_transmit_analog_empirical_variance():
    # Monte-Carlo against the analytic sigma^2 at 0 dB, unit power
    spec = ChannelSpec(snr_db=0.0)
    x = np.ones(10**6)
    y = transmit_analog(x, spec, substream(1, "mc"))
    emp = float(np.mean((y - x) ** 2))
    assert abs(emp - 1.0) < 0.03


def test_variance_law_across_snr_range():
    # within 3 standard errors for 1e5 samples at each SNR
    n = 10**5
    x = np.full(n, 2.0)  # power 4
    for snr in (-30.0, -10.0, 0.0, 10.0, 30.0):
        spec = ChannelSpec(snr_db=snr)
        y = transmit_analog(x, spec, substream(2, "law", snr))
        sigma2 = noise_variance(snr, 4.0)
        emp = float(np.mean((y - x) ** 2))
        se = sigma2 * math.sqrt(2.0 / n)
        assert abs(emp - sigma2) <= 3 * se


def test_transmit_analog_is_deterministic_per_stream():
    spec = ChannelSpec(snr_db=0.0)
    x = np.ones(128)
    a = transmit_analog(x, spec, substream(7, "x"))
    b = transmit_analog(x, spec, substream(7, "x"))
    assert np.array_equal(a, b)
    c = transmit_analog(x, spec, substream(8, "x"))
    assert not np.array_equal(a, c)


def test_transmit_analog_rejects_empty():
    with pytest.raises(ValueError):
        transmit_analog(np.array([]), ChannelSpec(snr_db=0.0), substream(0, "e"))


def test_zero_power_vector_passes_clean():
    spec = ChannelSpec(snr_db=0.0)
    x = np.zeros(16)
    y = transmit_analog(x, spec, substream(0, "z"))
    assert np.array_equal(y, x)


def test_per_message_energy_scaling():
    spec = ChannelSpec(snr_db=0.0, energy_mode="per_message",
                       reference_symbol_count=1000)
    # halving the symbol count doubles the effective linear SNR...
    full = 10 ** (effective_snr_db(spec, 1000) / 10)
    half = 10 ** (effective_snr_db(spec, 500) / 10)
    assert half == pytest.approx(2 * full)
    assert effective_snr_db(spec, 1000) == pytest.approx(0.0)
    # ...and therefore halves the noise variance at fixed signal power
    var_full = noise_variance(effective_snr_db(spec, 1000), 1.0)
    var_half = noise_variance(effective_snr_db(spec, 500), 1.0)
    assert var_half == pytest.approx(var_full / 2)
    per_symbol = ChannelSpec(snr_db=0.0)
    assert effective_snr_db(per_symbol, 10) == 0.0


def test_per_message_requires_reference_count():
    with pytest.raises(ChannelConfigError):
        ChannelSpec(snr_db=0.0, energy_mode="per_message")


def test_transmit_digital_is_bit_exact():
    payload = PayloadSpec(payload_kind="text", bits=1000, transport="digital_lossless")
    blob = bytes(range(256))
    assert transmit_digital(payload, blob) == blob
    assert transmit_digital(payload, b"") == b""


def test_transmit_digital_rejects_analog():
    payload = PayloadSpec(payload_kind="seed", bits=100, symbol_count=4)
    with pytest.raises(ValueError):
        transmit_digital(payload, b"abc")


def test_transmission_time_examples():
    assert transmission_time(1000, ChannelSpec(snr_db=0.0, bandwidth_hz=1000.0)) == pytest.approx(1.0)
    snr_db_lin3 = 10 * math.log10(3.0)
    assert transmission_time(1000, ChannelSpec(snr_db=snr_db_lin3, bandwidth_hz=1000.0)) == pytest.approx(0.5)
    assert transmission_time(0, ChannelSpec(snr_db=-20.0)) == 0.0


def test_transmission_time_monotonicity():
    spec_lo = ChannelSpec(snr_db=-10.0, bandwidth_hz=1e6)
    spec_hi = ChannelSpec(snr_db=5.0, bandwidth_hz=1e6)
    assert transmission_time(1000, spec_hi) < transmission_time(1000, spec_lo)
    assert transmission_time(2000, spec_lo) > transmission_time(1000, spec_lo)


def test_transmission_time_capacity_underflow():
    with pytest.raises(ChannelConfigError):
        transmission_time(1000, ChannelSpec(snr_db=-4000.0))
