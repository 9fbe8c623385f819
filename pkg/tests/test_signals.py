import math

import numpy as np
import pytest
from pydantic import ValidationError

from rff_distill.core.errors import ArchiveFormatError, FleetSeparationError
from rff_distill.signals import (
    ChannelConfig,
    DeviceFingerprint,
    FleetRanges,
    IqFrame,
    WaveformConfig,
    apply_impairments,
    baseband_ideal,
    load_fleet,
    read_archive,
    rician_combine,
    rician_gain,
    sample_fleet,
    save_fleet,
    synthesize_frame,
    write_archive,
)
from rff_distill.signals.archive import decode_frames, encode_frames, record_offset
from rff_distill.signals.channel import circular_normal
from rff_distill.signals.fingerprint import is_separated, min_pairwise_gaps
from rff_distill.signals.synthesis import impair, iter_fleet_frames


def _fp(device_id=0, alpha=1.0, phi=2 * math.pi, f0=0.0):
    return DeviceFingerprint(device_id=device_id, alpha=alpha, phi=phi, f0=f0)


def test_zero_modulation_is_zero_waveform(rng):
    b_i, b_q = baseband_ideal(rng, WaveformConfig(modulation="zero"), 256)
    assert not b_i.any()
    assert not b_q.any()


def test_qpsk_rails_have_constant_envelope_and_unit_power(rng):
    b_i, b_q = baseband_ideal(rng, WaveformConfig(oversampling=4), 100_000)
    assert np.allclose(np.abs(b_i), 1.0 / math.sqrt(2.0))
    assert np.allclose(np.abs(b_q), 1.0 / math.sqrt(2.0))
    assert np.mean(b_i**2 + b_q**2) == pytest.approx(1.0, abs=0.01)


def test_impairment_identity_reduces_to_in_phase_rail(rng):
    b_i, b_q = baseband_ideal(rng, WaveformConfig(), 64)
    t = np.arange(64) * 1e-6
    out = apply_impairments(b_i, b_q, _fp(), t)
    assert np.allclose(out.real, b_i, atol=1e-12)
    assert np.all(out.imag == 0.0)


def test_impairment_at_cosine_zero_crossing_keeps_quadrature_rail():
    b_i, b_q = np.array([0.7]), np.array([-0.3])
    out = impair(b_i, b_q, alpha=1.0, phi=0.0, f0=0.25, t=np.array([1.0]))
    assert out[0].real == pytest.approx(0.0, abs=1e-12)
    assert out[0].imag == pytest.approx(0.3, abs=1e-12)


def test_impairment_direct_evaluation():
    # 2*pi*f0*t = pi/4
    out = impair(np.array([1.0]), np.array([1.0]), alpha=0.9, phi=0.1, f0=0.125, t=np.array([1.0]))
    assert out[0].real == pytest.approx(0.569683, abs=1e-6)
    assert out[0].imag == pytest.approx(-0.707107, abs=1e-6)


@pytest.mark.parametrize(
    "fields",
    [
        {"alpha": 0.0},
        {"alpha": 1.2},
        {"phi": 0.0},
        {"phi": 7.0},
        {"f0": float("inf")},
    ],
)
def test_fingerprint_outside_invariants_is_rejected(fields):
    with pytest.raises(ValidationError):
        DeviceFingerprint(**{"device_id": 0, "alpha": 0.9, "phi": 0.5, "f0": 10.0, **fields})


def test_rician_limits_and_direct_evaluation(rng):
    scatter = complex(0.6, 0.8)
    assert rician_combine(0.0, 1 + 0j, scatter) == scatter
    combined = rician_combine(1.0, 1 + 0j, scatter)
    assert combined.real == pytest.approx(1.13137, abs=1e-5)
    assert combined.imag == pytest.approx(0.56569, abs=1e-5)
    assert abs(rician_gain(rng, 1e12, los_phase=0.0) - 1.0) < 1e-5
    assert rician_combine(math.inf, 1 + 0j, scatter) == 1 + 0j


@pytest.mark.parametrize("ricean_k", [0.0, 1.0, 10.0])
def test_rician_power_is_unit_on_average(rng, ricean_k):
    draws = 100_000
    los = np.exp(1j * rng.uniform(0.0, 2 * math.pi, draws))
    gains = rician_combine(ricean_k, los, circular_normal(rng, draws))
    assert np.mean(np.abs(gains) ** 2) == pytest.approx(1.0, rel=0.02)


def test_noiseless_line_of_sight_frame_equals_impaired_baseband():
    fp = _fp(alpha=0.8, phi=0.4, f0=120.0)
    channel = ChannelConfig(ricean_k=math.inf, noise_var=0.0, los_phase=0.0, n_samples=256)
    frame = synthesize_frame(fp, channel, seed=99)
    b_i, b_q = baseband_ideal(np.random.default_rng(99), WaveformConfig(), 256)
    expected = apply_impairments(b_i, b_q, fp, np.arange(256) * channel.sample_interval)
    assert np.array_equal(frame.complex_samples(), expected)
    assert frame.label == 0
    assert frame.meta["seed"] == 99


def test_zero_baseband_frame_is_pure_noise_with_configured_variance():
    channel = ChannelConfig(noise_var=0.25, n_samples=100_000)
    frame = synthesize_frame(_fp(), channel, seed=7, waveform=WaveformConfig(modulation="zero"))
    assert np.mean(frame.i**2 + frame.q**2) == pytest.approx(0.25, rel=0.05)


def test_frame_synthesis_is_deterministic_per_seed():
    fp, channel = _fp(alpha=0.7, phi=1.0, f0=50.0), ChannelConfig()
    first, second = synthesize_frame(fp, channel, 5), synthesize_frame(fp, channel, 5)
    assert np.array_equal(first.i, second.i)
    assert np.array_equal(first.q, second.q)
    assert not np.array_equal(first.i, synthesize_frame(fp, channel, 6).i)


def test_distinct_fingerprints_give_distinct_noiseless_frames():
    channel = ChannelConfig(noise_var=0.0, los_phase=0.0)
    a = synthesize_frame(_fp(0, alpha=0.9, phi=0.3, f0=40.0), channel, 3)
    b = synthesize_frame(_fp(1, alpha=0.8, phi=0.3, f0=40.0), channel, 3)
    assert np.any(a.complex_samples() != b.complex_samples())


def test_snr_helper_sets_noise_variance():
    channel = ChannelConfig.from_snr_db(10.0)
    assert channel.noise_var == pytest.approx(0.1)
    assert channel.nominal_snr_db() == 10.0
    assert ChannelConfig(noise_var=0.0).nominal_snr_db() == math.inf


def test_fleet_frames_cycle_through_channel_profiles():
    fleet = [_fp(0, 0.9, 0.5, 10.0), _fp(1, 0.7, 1.0, 200.0)]
    profiles = [
        ChannelConfig.from_snr_db(20.0, n_samples=64),
        ChannelConfig.from_snr_db(0.0, n_samples=64),
    ]
    frames = list(iter_fleet_frames(fleet, profiles, per_device=4, base_seed=11))
    assert [frame.label for frame in frames] == [0, 0, 0, 0, 1, 1, 1, 1]
    assert [frame.meta["condition"] for frame in frames[:4]] == [0, 1, 0, 1]
    assert frames[1].meta["snr_db"] == 0.0


def test_fleet_frames_reject_mixed_frame_lengths():
    with pytest.raises(ValueError):
        mixed = [ChannelConfig(n_samples=64), ChannelConfig(n_samples=128)]
        list(iter_fleet_frames([_fp()], mixed, 2, 0))


def test_iq_frame_rejects_ragged_or_non_finite_rails():
    with pytest.raises(ValueError):
        IqFrame(i=np.zeros(4), q=np.zeros(5), label=0)
    with pytest.raises(ValueError):
        IqFrame(i=np.array([0.0, np.nan]), q=np.zeros(2), label=0)


def test_sample_fleet_of_twenty_is_distinct(rng):
    fleet = sample_fleet(rng, 20)
    assert [fp.device_id for fp in fleet] == list(range(20))
    assert len({(fp.alpha, fp.phi, fp.f0) for fp in fleet}) == 20


def test_default_fleet_respects_separation_floors(rng):
    ranges = FleetRanges()
    fleet = sample_fleet(rng, 8, ranges)
    for idx, a in enumerate(fleet):
        for b in fleet[idx + 1 :]:
            assert is_separated(a, b, ranges.floors)
    assert min(min_pairwise_gaps(fleet).values()) >= 0.0


def test_degenerate_ranges_cannot_separate_two_devices(rng):
    ranges = FleetRanges(alpha=(0.8, 0.8), phi=(1.0, 1.0), f0=(100.0, 100.0))
    with pytest.raises(FleetSeparationError):
        sample_fleet(rng, 2, ranges)


def test_single_device_fleet_is_rejected(rng):
    with pytest.raises(ValueError):
        sample_fleet(rng, 1)


def test_fleet_file_round_trip(tmp_path, rng):
    fleet = sample_fleet(rng, 4)
    path = tmp_path / "fleet.json"
    save_fleet(path, fleet)
    assert load_fleet(path) == fleet


def test_archive_layout_and_float32_precision(tmp_path, rng):
    frames = [
        IqFrame.from_complex(circular_normal(rng, 32), label=label, meta={"seed": 2**63 + label})
        for label in (0, 1, 2)
    ]
    path = tmp_path / "frames.drfx"
    size = write_archive(path, frames)
    assert size == 16 + 3 * (4 + 8 + 2 * 32 * 4)
    assert path.read_bytes()[:4] == b"DRFX"
    assert record_offset(2, 32) == 16 + 2 * 268
    decoded = read_archive(path)
    assert [frame.label for frame in decoded] == [0, 1, 2]
    assert decoded[1].meta["seed"] == 2**63 + 1
    assert np.array_equal(decoded[2].i, frames[2].i.astype(np.float32).astype(np.float64))


def test_archive_rejects_bad_magic_and_truncation(rng):
    payload = encode_frames([IqFrame.from_complex(circular_normal(rng, 8), label=0)])
    with pytest.raises(ArchiveFormatError):
        decode_frames(b"XXXX" + payload[4:])
    with pytest.raises(ArchiveFormatError) as excinfo:
        decode_frames(payload[:-3])
    assert excinfo.value.byte_offset == len(payload) - 3
