import numpy as np
import pytest
from scipy.io import wavfile

from prosodic_hlm.prosody import (F0_CHANNEL, PAUSE_CHANNEL, AudioBuffer, ProsodyConfig,
                                  assemble_features, deltas, detect_pauses, extract_f0,
                                  mel_filterbank, mfcc, read_wav, second_difference)

RATE = 16000


def tone(freq, seconds, amp=0.5, rate=RATE):
    t = np.arange(int(seconds * rate)) / rate
    return amp * np.sin(2 * np.pi * freq * t)


def voiced_accuracy(f0, target, tol=2.0):
    voiced = f0[f0 > 0]
    return voiced.size, np.mean(np.abs(voiced - target) <= tol) if voiced.size else 0.0


def test_pure_tone_tracked():
    f0 = extract_f0(AudioBuffer(tone(100.0, 1.0), RATE))
    n, acc = voiced_accuracy(f0, 100.0)
    assert n >= 0.9 * f0.size and acc >= 0.95


@pytest.mark.parametrize("freq", [45.0, 80.0, 155.0, 220.0, 290.0])
def test_tones_across_range(freq):
    n, acc = voiced_accuracy(extract_f0(AudioBuffer(tone(freq, 0.6), RATE)), freq)
    assert n > 0 and acc >= 0.95


def test_harmonic_tone_reports_fundamental():
    t = np.arange(RATE) / RATE
    x = 0.3 * np.sin(2 * np.pi * 130 * t) + 0.2 * np.sin(2 * np.pi * 260 * t) + 0.1 * np.sin(2 * np.pi * 390 * t)
    n, acc = voiced_accuracy(extract_f0(AudioBuffer(x, RATE)), 130.0)
    assert n > 0 and acc >= 0.95


def test_silence_and_out_of_range_tones_unvoiced():
    assert (extract_f0(AudioBuffer(np.zeros(RATE // 2), RATE)) == 0).all()
    assert (extract_f0(AudioBuffer(tone(440.0, 0.5), RATE)) == 0).all()
    noise = np.random.default_rng(0).normal(scale=0.3, size=RATE // 2)
    assert (extract_f0(AudioBuffer(noise, RATE)) > 0).mean() < 0.05


def test_f0_frame_count_and_short_audio():
    f0 = extract_f0(AudioBuffer(tone(100.0, 0.5), RATE))
    assert f0.size == 50
    with pytest.raises(ValueError):
        extract_f0(AudioBuffer(np.zeros(50), RATE))


def test_second_difference_examples():
    assert second_difference([1, 2, 3, 4]).tolist() == [0, 0, 0, 0]
    assert second_difference([1, 2, 5, 10]).tolist() == [0, 2, 2, 0]
    assert second_difference([5, 5, 5, 5, 5]).tolist() == [0] * 5
    assert second_difference([100, 0, 110, 120, 130]).tolist() == [0, 0, 0, 0, 0]
    assert second_difference([3, 4]).tolist() == [0, 0]


def test_pause_between_tones():
    x = np.concatenate([tone(120.0, 0.7), np.zeros(RATE // 2), tone(120.0, 0.7)])
    pauses = detect_pauses(AudioBuffer(x, RATE))
    assert len(pauses) == 1
    a, b = pauses[0]
    assert abs(a - 0.7) <= 0.02 and abs(b - 1.2) <= 0.02


def test_no_pause_in_loud_signal_or_short_dip():
    assert detect_pauses(AudioBuffer(tone(150.0, 1.0), RATE)) == []
    x = tone(150.0, 1.0)
    x[8000:8080] = 0.0       # 5 ms
    cfg = ProsodyConfig(silence_min_s=0.01, pause_window_s=0.005)
    assert detect_pauses(AudioBuffer(x, RATE), cfg) == []


def test_assembled_pause_channel():
    x = np.concatenate([tone(120.0, 0.7), np.zeros(RATE // 2), tone(120.0, 0.7)])
    audio = AudioBuffer(x, RATE)
    seq = assemble_features(audio, id="utt")
    full = mfcc(audio)
    (a, b), = detect_pauses(audio)
    removed = int(round((b - a) / 0.01))
    assert seq.T == full.shape[0] - removed
    pause = seq.prosody[:, PAUSE_CHANNEL]
    nz = np.flatnonzero(pause)
    assert nz.size == 1 and abs(pause[nz[0]] - 0.5) <= 0.03
    assert nz[0] == int(round(a / 0.01)) - 1
    assert seq.id == "utt" and seq.spectral.shape == (seq.T, 12)


def test_assembled_features_without_pauses():
    audio = AudioBuffer(tone(150.0, 0.8), RATE)
    seq = assemble_features(audio)
    assert (seq.prosody[:, PAUSE_CHANNEL] == 0).all()
    # a steady tone has flat F0, so its second difference is near zero
    assert np.abs(seq.prosody[:, F0_CHANNEL]).max() < 1.0
    assert np.array_equal(seq.spectral, assemble_features(audio).spectral)


def test_kept_frames_preserve_order():
    x = np.concatenate([tone(120.0, 0.4), np.zeros(RATE // 4), tone(200.0, 0.4)])
    audio = AudioBuffer(x, RATE)
    full = mfcc(audio)
    seq = assemble_features(audio)
    (a, b), = detect_pauses(audio)
    ia, ib = int(round(a / 0.01)), int(round(b / 0.01))
    assert np.array_equal(seq.spectral, np.vstack([full[:ia], full[ib:]]))


def test_all_silent_audio_rejected():
    with pytest.raises(ValueError):
        assemble_features(AudioBuffer(np.zeros(RATE), RATE))


def test_mfcc_shapes_and_deltas():
    audio = AudioBuffer(tone(200.0, 0.5), RATE)
    assert mfcc(audio).shape == (50, 12)
    assert mfcc(audio, ProsodyConfig(use_deltas=True)).shape == (50, 36)
    ramp = np.arange(10.0)[:, None]
    assert np.allclose(deltas(ramp)[2:-2], 1.0)


def test_mel_filterbank_triangles():
    fb = mel_filterbank(26, 512, RATE)
    assert fb.shape == (26, 257)
    # peaks fall between FFT bins, so the sampled maximum is at most 1
    assert (fb >= 0).all() and (fb.max(axis=1) <= 1.0).all() and (fb.max(axis=1) > 0.5).all()
    assert (np.diff(fb.argmax(axis=1)) > 0).all()


def test_config_validation():
    with pytest.raises(ValueError):
        ProsodyConfig(f0_min_hz=300.0, f0_max_hz=40.0)
    with pytest.raises(ValueError):
        ProsodyConfig(silence_threshold_db=3.0)
    with pytest.raises(ValueError):
        ProsodyConfig(silence_min_s=0.0)
    with pytest.raises(ValueError):
        AudioBuffer(np.zeros(0), RATE)


def test_read_wav_formats(tmp_path):
    x = tone(100.0, 0.2)
    wavfile.write(tmp_path / "i16.wav", RATE, (x * 32767).astype(np.int16))
    wavfile.write(tmp_path / "f32.wav", RATE, x.astype(np.float32))
    wavfile.write(tmp_path / "st.wav", RATE, np.stack([x, x], axis=1).astype(np.float32))
    for name in ("i16.wav", "f32.wav", "st.wav"):
        audio = read_wav(tmp_path / name)
        assert audio.sample_rate == RATE
        assert np.allclose(audio.samples, x, atol=1e-4)
