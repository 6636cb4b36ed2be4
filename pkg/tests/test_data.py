import numpy as np
import pytest

from cmask.data import (
    STEM_NAMES, AugmentSpec, Biquad, StemSet, augment, load_dataset, load_track, make_patches,
    read_wav, reassemble, synth_stems, write_stemset, write_wav,
)
from cmask.errors import FormatError, ParameterError
from cmask.stft import Spectrogram, StftParams, Waveform, stft


@pytest.fixture(scope="module")
def stems():
    return synth_stems(3, duration_s=1.0)


def test_synth_deterministic(stems):
    again = synth_stems(3, duration_s=1.0)
    for name in STEM_NAMES:
        assert again.stems[name].tobytes() == stems.stems[name].tobytes()
    assert not np.array_equal(synth_stems(4, 1.0).stems["vocals"], stems.stems["vocals"])


def test_mixture_is_sum(stems):
    total = sum(stems.stems[n] for n in STEM_NAMES)
    np.testing.assert_allclose(stems.mixture.samples, total, atol=1e-12, rtol=0)
    assert len(stems) == 22050


@pytest.mark.parametrize("seed", range(5))
def test_bass_is_low_frequency(seed):
    bass = synth_stems(seed, 2.0).stems["bass"]
    power = np.abs(np.fft.rfft(bass)) ** 2
    freqs = np.fft.rfftfreq(len(bass), 1 / 22050)
    assert power[freqs > 1000].sum() < 0.01 * power.sum()


def test_stems_overlap_in_time(stems):
    active = {n: np.abs(stems.stems[n]) > 1e-3 for n in STEM_NAMES}
    assert np.mean(active["vocals"] & active["bass"] & active["other"]) > 0.2


def test_synth_rejects_bad_duration():
    with pytest.raises(ParameterError):
        synth_stems(0, 0.0)


def test_identity_augmentation_is_bitwise(stems):
    out = augment(stems, AugmentSpec())
    for n in STEM_NAMES:
        assert out.stems[n].tobytes() == stems.stems[n].tobytes()


def test_gain_augmentation(stems):
    out = augment(stems, AugmentSpec(gains_db={"bass": 20 * np.log10(2)}))
    np.testing.assert_allclose(out.stems["bass"], 2 * stems.stems["bass"], atol=1e-6)
    assert np.array_equal(out.stems["vocals"], stems.stems["vocals"])
    np.testing.assert_allclose(out.mixture.samples, sum(out.stems.values()), atol=1e-12)


@pytest.mark.parametrize("ratio", [0.9, 0.97, 1.05, 1.1])
def test_resample_lengths(stems, ratio):
    out = augment(stems, AugmentSpec(resample_ratio=ratio))
    lengths = {len(v) for v in out.stems.values()}
    assert len(lengths) == 1
    assert abs(lengths.pop() - round(len(stems) / ratio)) <= 1


def test_augmentation_validation(stems):
    with pytest.raises(ParameterError):
        augment(stems, AugmentSpec(resample_ratio=1.5))
    with pytest.raises(ParameterError):
        augment(stems, AugmentSpec(gains_db={"vocals": 13}))
    with pytest.raises(ParameterError):
        Biquad((1, 0, 0), (1, -2.5, 1.5))
    Biquad.peaking(1000, 1.0, 6.0)
    Biquad.lowpass(500)
    Biquad.highpass(500)


def test_random_augmentation_deterministic(stems):
    a = augment(stems, None, seed=5)
    b = augment(stems, None, seed=5)
    for n in STEM_NAMES:
        assert a.stems[n].tobytes() == b.stems[n].tobytes()


def test_filter_changes_only_its_stem(stems):
    out = augment(stems, AugmentSpec(filters={"guitar": [Biquad.lowpass(300)]}))
    assert not np.array_equal(out.stems["guitar"], stems.stems["guitar"])
    assert np.array_equal(out.stems["bass"], stems.stems["bass"])


def _spec(frames, rng):
    return Spectrogram(rng.normal(size=(frames, 513)) + 1j * rng.normal(size=(frames, 513)), StftParams())


def test_patch_counts(rng):
    batches = make_patches(_spec(512, rng), "magnitude")
    assert len(batches) == 1 and batches[0].patches.shape == (2, 1, 256, 1024)
    assert batches[0].valid[:, :, :, :513].all() and not batches[0].valid[:, :, :, 513:].any()
    b = make_patches(_spec(300, rng), "complex")[0]
    assert b.patches.shape == (2, 2, 256, 1024)
    assert (~b.valid[1, 0, :, 0]).sum() == 212
    assert b.offsets == [0, 256]


def test_patch_batches_of_16(rng):
    batches = make_patches(_spec(256 * 17 + 3, rng), "complex")
    assert [len(b.patches) for b in batches] == [16, 2]


@pytest.mark.parametrize("mode", ["magnitude", "complex"])
def test_patch_reassembly(rng, mode):
    spec = _spec(300, rng)
    back = reassemble(make_patches(spec, mode, batch_size=1), 300, 513, mode)
    expected = spec.bins if mode == "complex" else np.abs(spec.bins)
    assert np.array_equal(back, expected)


def test_wav_round_trip(tmp_path, rng):
    x = rng.uniform(-0.9, 0.9, 1000)
    write_wav(tmp_path / "a.wav", Waveform(x))
    np.testing.assert_allclose(read_wav(tmp_path / "a.wav").samples, x, atol=1e-7)
    write_wav(tmp_path / "b.wav", Waveform(x), "pcm16")
    np.testing.assert_allclose(read_wav(tmp_path / "b.wav").samples, x, atol=1 / 32768)


def test_wav_resampled_on_load(tmp_path):
    t = np.arange(44100) / 44100
    write_wav(tmp_path / "a.wav", Waveform(0.5 * np.sin(2 * np.pi * 440 * t), 44100))
    w = read_wav(tmp_path / "a.wav")
    assert w.sample_rate == 22050 and len(w) == 22050
    ref = 0.5 * np.sin(2 * np.pi * 440 * np.arange(22050) / 22050)
    assert np.max(np.abs(w.samples[200:-200] - ref[200:-200])) < 1e-3


def test_bad_wav(tmp_path):
    (tmp_path / "x.wav").write_bytes(b"not a wav file")
    with pytest.raises(FormatError):
        read_wav(tmp_path / "x.wav")


def test_dataset_layout(tmp_path, stems):
    write_stemset(tmp_path / "t1", stems)
    back = load_track(tmp_path / "t1")
    np.testing.assert_allclose(back.mixture.samples, stems.mixture.samples, atol=1e-6)
    (tmp_path / "t2").mkdir()
    (tmp_path / "t2" / "vocals.wav").write_bytes(b"")
    with pytest.raises(ParameterError, match="guitar, bass, percussion, other"):
        load_dataset(tmp_path)


def test_stemset_requires_all_stems():
    with pytest.raises(ParameterError):
        StemSet({"vocals": np.zeros(3)})
