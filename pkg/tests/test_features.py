import json
import time
import zipfile
from collections import Counter

import numpy as np
import pytest

from rff_distill.core.errors import (
    ConfigError,
    IngestError,
    MissingArtifactError,
    exit_code_for,
)
from rff_distill.features import (
    AugmentPolicy,
    IngestLayout,
    augment,
    build_dataset,
    dataset_from_frames,
    ingest_iq,
    load_dataset,
    save_dataset,
    stft,
    stft_magnitude,
    stratified_split,
)
from rff_distill.features.augment import scale_frame, shift_frame
from rff_distill.features.dataset import manifest_entries
from rff_distill.signals import ChannelConfig, DeviceFingerprint, IqFrame
from rff_distill.signals.archive import record_offset
from rff_distill.signals.channel import circular_normal


def _noise_frame(rng, n=512, label=0):
    return IqFrame.from_complex(circular_normal(rng, n), label=label, meta={"seed": 1})


def _fleet(size):
    return [
        DeviceFingerprint(
            device_id=idx, alpha=0.6 + 0.02 * idx, phi=0.2 + 0.05 * idx, f0=10.0 + 20.0 * idx
        )
        for idx in range(size)
    ]


def test_zero_frame_has_zero_magnitudes():
    spec = stft(IqFrame(i=np.zeros(512), q=np.zeros(512), label=3), standardize=False)
    assert spec.mags.shape == (64, 15)
    assert not spec.mags.any()
    assert spec.label == 3


def test_constant_frame_puts_everything_in_bin_zero():
    mags = stft_magnitude(np.ones(256, dtype=complex), 64, 32, "rectangular")
    assert np.allclose(mags[0], 64.0)
    assert np.allclose(mags[1:], 0.0, atol=1e-9)


def test_complex_exponential_lands_in_its_bin():
    k, window = 5, 64
    samples = np.exp(2j * np.pi * k * np.arange(256) / window)
    mags = stft_magnitude(samples, window, 32, "rectangular")
    assert np.allclose(mags[k], window)
    assert np.allclose(np.delete(mags, k, axis=0), 0.0, atol=1e-9)


def test_column_count_follows_window_and_hop(rng):
    mags = stft_magnitude(circular_normal(rng, 500), 64, 20, "hann")
    assert mags.shape == (64, (500 - 64) // 20 + 1)


def test_window_longer_than_frame_is_rejected(rng):
    with pytest.raises(ValueError):
        stft_magnitude(circular_normal(rng, 32), 64, 32)
    with pytest.raises(ValueError):
        stft_magnitude(circular_normal(rng, 128), 64, 32, "triangular")


def test_parseval_with_rectangular_window(rng):
    samples = circular_normal(rng, 256)
    mags = stft_magnitude(samples, 64, 64, "rectangular")
    for column in range(mags.shape[1]):
        segment = samples[column * 64 : (column + 1) * 64]
        energy = np.sum(np.abs(segment) ** 2)
        assert np.sum(mags[:, column] ** 2) == pytest.approx(64 * energy, rel=1e-9)


def test_standardized_spectrogram_is_zero_mean_unit_variance(rng):
    spec = stft(_noise_frame(rng))
    assert abs(spec.mags.mean()) < 1e-9
    assert abs(spec.mags.var() - 1.0) < 1e-9
    assert np.all(np.isfinite(spec.mags))


def test_constant_spectrogram_standardizes_to_zeros():
    spec = stft(IqFrame(i=np.zeros(128), q=np.zeros(128), label=0))
    assert not spec.mags.any()


def test_empty_policy_is_identity(rng):
    frame = _noise_frame(rng)
    out = augment(frame, rng, AugmentPolicy())
    assert out is not frame
    assert np.array_equal(out.i, frame.i)
    assert np.array_equal(out.q, frame.q)


def test_full_rotation_shift_is_identity(rng):
    frame = _noise_frame(rng, n=64)
    out = shift_frame(frame, 64)
    assert np.array_equal(out.i, frame.i)
    assert out.meta["aug_shift"] == 64


def test_gain_scale_doubles_every_sample(rng):
    frame = _noise_frame(rng, n=64)
    out = scale_frame(frame, 2.0)
    assert np.array_equal(out.i, 2.0 * frame.i)
    assert np.array_equal(out.q, 2.0 * frame.q)


def test_augmentation_keeps_label_and_length_and_logs_parameters(rng):
    frame = _noise_frame(rng, label=4)
    policy = AugmentPolicy(noise_snr_db=(5.0, 15.0), max_shift=16, gain_range=(0.5, 2.0))
    out = augment(frame, rng, policy)
    assert out.label == 4
    assert out.n_samples == frame.n_samples
    assert {"aug_shift", "aug_gain", "aug_snr_db"} <= set(out.meta)
    assert 5.0 <= out.meta["aug_snr_db"] <= 15.0
    assert 0.5 <= out.meta["aug_gain"] <= 2.0


def test_build_dataset_split_sizes_and_stratification():
    split = build_dataset(_fleet(20), ChannelConfig(), per_device=100, seed=3)
    assert split.sizes() == {"train": 1200, "val": 400, "test": 400}
    for name in ("train", "val", "test"):
        counts = Counter(spec.label for spec in getattr(split, name))
        assert sorted(counts) == list(range(20))
        assert len(set(counts.values())) == 1
    everything = np.concatenate([split.indices[name] for name in ("train", "val", "test")])
    assert np.array_equal(np.sort(everything), np.arange(2000))


def test_split_membership_is_deterministic_per_seed():
    labels = np.repeat(np.arange(4), 25)
    first, second = stratified_split(labels, 9), stratified_split(labels, 9)
    for name in ("train", "val", "test"):
        assert np.array_equal(first[name], second[name])
    assert not np.array_equal(first["train"], stratified_split(labels, 10)["train"])


def test_too_few_frames_per_device_are_rejected():
    with pytest.raises(ConfigError) as excinfo:
        build_dataset(_fleet(2), ChannelConfig(), per_device=9, seed=0)
    assert excinfo.value.field_path == "dataset.per_device"
    with pytest.raises(ConfigError):
        stratified_split(np.repeat(np.arange(2), 12), 0)


def test_augmentation_touches_training_split_only(rng):
    frames = [_noise_frame(rng, n=128, label=idx % 2) for idx in range(50)]
    policy = AugmentPolicy(gain_range=(0.5, 2.0))
    split = dataset_from_frames(frames, 1, policy=policy)
    assert all("aug_gain" in spec.meta for spec in split.train)
    assert not any("aug_gain" in spec.meta for spec in split.val + split.test)


def test_parallel_featurization_matches_serial(rng):
    frames = [_noise_frame(rng, n=128, label=idx % 2) for idx in range(50)]
    policy = AugmentPolicy(noise_snr_db=(0.0, 10.0))
    serial = dataset_from_frames(frames, 5, policy=policy, workers=1).as_arrays()
    threaded = dataset_from_frames(frames, 5, policy=policy, workers=4).as_arrays()
    assert np.array_equal(serial.x_train, threaded.x_train)
    assert np.array_equal(serial.y_test, threaded.y_test)


def test_dataset_file_round_trip_and_missing_file(tmp_path, rng):
    frames = [_noise_frame(rng, n=128, label=idx % 2) for idx in range(50)]
    arrays = dataset_from_frames(frames, 2).as_arrays()
    path = tmp_path / "dataset.npz"
    save_dataset(path, arrays)
    loaded = load_dataset(path)
    assert np.array_equal(loaded.x_val, arrays.x_val)
    assert loaded.num_classes == 2
    assert loaded.feature_shape == (64, 3)
    with pytest.raises(MissingArtifactError):
        load_dataset(tmp_path / "absent.npz")


def test_dataset_file_bytes_do_not_depend_on_save_time(tmp_path, rng, monkeypatch):
    frames = [_noise_frame(rng, n=128, label=idx % 2) for idx in range(50)]
    arrays = dataset_from_frames(frames, 2).as_arrays()
    save_dataset(tmp_path / "first.npz", arrays)
    monkeypatch.setattr(time, "time", lambda: 2_000_000_000.0)
    save_dataset(tmp_path / "second.npz", arrays)
    first = (tmp_path / "first.npz").read_bytes()
    assert first == (tmp_path / "second.npz").read_bytes()
    with zipfile.ZipFile(tmp_path / "first.npz") as archive:
        assert {info.date_time for info in archive.infolist()} == {(1980, 1, 1, 0, 0, 0)}


def test_manifest_entries_point_at_archive_records():
    indices = {"train": np.array([0, 3]), "val": np.array([1]), "test": np.array([2])}
    entries = manifest_entries(indices, [0, 1, 1, 0], "frames.drfx", 512)
    offset = record_offset(3, 512)
    assert entries[1] == {"split": "train", "file": "frames.drfx", "offset": offset, "label": 0}
    assert [entry["split"] for entry in entries] == ["train", "train", "val", "test"]


def test_ingest_float_zeros_give_one_zero_frame(tmp_path):
    path = tmp_path / "capture.cf32"
    np.zeros(2 * 256, dtype="<f4").tofile(path)
    frames = ingest_iq(path, IngestLayout(frame_length=256, label=7))
    assert len(frames) == 1
    assert frames[0].label == 7
    assert not frames[0].complex_samples().any()


def test_ingest_int16_is_scaled(tmp_path):
    path = tmp_path / "capture.ci16"
    np.array([32767, -32768] * 4, dtype="<i2").tofile(path)
    frames = ingest_iq(path, IngestLayout(encoding="ci16", frame_length=4, label=0))
    assert frames[0].i[0] == pytest.approx(0.99997, abs=1e-5)
    assert frames[0].q[0] == -1.0


def test_ingest_rejects_truncated_capture_with_offset(tmp_path):
    path = tmp_path / "capture.cf32"
    np.zeros(2 * 8 * 2 + 3, dtype="<f4").tofile(path)
    with pytest.raises(IngestError) as excinfo:
        ingest_iq(path, IngestLayout(frame_length=8, label=0))
    assert excinfo.value.byte_offset == 2 * 2 * 8 * 4


def test_ingest_manifest_labels_and_missing_label(tmp_path):
    path = tmp_path / "capture.cf32"
    np.zeros(2 * 4 * 3, dtype="<f4").tofile(path)
    manifest = tmp_path / "labels.json"
    manifest.write_text(json.dumps({"0": 1, "1": 0, "2": 1}), encoding="utf-8")
    frames = ingest_iq(path, IngestLayout(frame_length=4, manifest=str(manifest)))
    assert [frame.label for frame in frames] == [1, 0, 1]
    manifest.write_text(json.dumps({"0": 1, "2": 1}), encoding="utf-8")
    with pytest.raises(IngestError) as excinfo:
        ingest_iq(path, IngestLayout(frame_length=4, manifest=str(manifest)))
    assert excinfo.value.byte_offset == 1 * 2 * 4 * 4


@pytest.mark.parametrize("labels", [{"first": 1}, {"0": "device-a"}, {"0": None}])
def test_ingest_manifest_with_unparseable_entry_is_an_ingest_error(tmp_path, labels):
    path = tmp_path / "capture.cf32"
    np.zeros(2 * 4, dtype="<f4").tofile(path)
    manifest = tmp_path / "labels.json"
    manifest.write_text(json.dumps(labels), encoding="utf-8")
    with pytest.raises(IngestError) as excinfo:
        ingest_iq(path, IngestLayout(frame_length=4, manifest=str(manifest)))
    assert next(iter(labels)) in str(excinfo.value)
    assert exit_code_for(excinfo.value) == 2


def test_ingest_needs_a_label_rule(tmp_path):
    path = tmp_path / "capture.cf32"
    np.zeros(8, dtype="<f4").tofile(path)
    with pytest.raises(IngestError):
        ingest_iq(path, IngestLayout(frame_length=4))
