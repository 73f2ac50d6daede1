import hashlib
import logging
from dataclasses import asdict, dataclass
from typing import Optional

import librosa
import numpy as np
import scipy.signal
import soundfile as sf

logger = logging.getLogger(__name__)

LOG_FLOOR_EPS = 1e-10


@dataclass(frozen=True)
class FeatureConfig:
    sample_rate: int = 44100
    n_mels: int = 64
    frame_length_ms: float = 40.0
    hop_ms: float = 20.0
    fft_size: int = 2048
    target_frames: int = 500
    fmin: float = 0.0
    fmax: Optional[float] = None

    def __post_init__(self):
        assert self.hop_ms * 2 == self.frame_length_ms, "frames overlap by 50%"
        assert self.win_length <= self.fft_size, "window longer than the FFT"

    @property
    def win_length(self) -> int:
        return int(round(self.sample_rate * self.frame_length_ms / 1000.0))

    @property
    def hop_length(self) -> int:
        return int(round(self.sample_rate * self.hop_ms / 1000.0))

    @property
    def fingerprint(self) -> str:
        return hashlib.sha1(repr(sorted(asdict(self).items())).encode("utf-8")).hexdigest()


def floor_value() -> float:
    return float(np.log(LOG_FLOOR_EPS))


def pad_or_trim(frames: np.ndarray, target: int) -> np.ndarray:
    """
    Force the time axis to target rows: the tail is cut, or padded with log(eps).
    :param frames: (np.ndarray) T x F grid, T >= 1.
    :param target: (int) number of output rows.
    """
    assert frames.ndim == 2 and frames.shape[0] >= 1, "expected a non-empty T x F grid"
    if frames.shape[0] >= target:
        return frames[:target]
    pad = np.full((target - frames.shape[0], frames.shape[1]), floor_value(), dtype=frames.dtype)
    return np.concatenate([frames, pad], axis=0)


def resample(waveform: np.ndarray, from_rate: int, to_rate: int) -> np.ndarray:
    """Band-limited (FFT) resampling; the output length is round(len * to_rate / from_rate)."""
    assert from_rate > 0 and to_rate > 0, "sample rates must be positive"
    waveform = np.asarray(waveform, dtype=np.float64)
    if from_rate == to_rate:
        return waveform.copy()
    num = int(round(len(waveform) * to_rate / from_rate))
    return scipy.signal.resample(waveform, num)


def mel_basis(config: FeatureConfig) -> np.ndarray:
    return librosa.filters.mel(sr=config.sample_rate, n_fft=config.fft_size, n_mels=config.n_mels,
                               fmin=config.fmin, fmax=config.fmax)


def extract_logmel(waveform: np.ndarray, sample_rate: int, config: FeatureConfig) -> np.ndarray:
    """
    Log mel-band magnitudes of a mono clip.
    :param waveform: (np.ndarray) mono samples at config.sample_rate.
    :param sample_rate: (int) rate of waveform; must equal config.sample_rate (use resample first).
    :param config: (FeatureConfig) frontend settings.

    :return features: (np.ndarray) target_frames x n_mels float32 grid.
    """
    waveform = np.asarray(waveform, dtype=np.float64)
    if waveform.ndim != 1:
        raise ValueError(f"expected a mono waveform, got shape {waveform.shape}")
    if waveform.size == 0:
        raise ValueError("empty waveform")
    if not np.all(np.isfinite(waveform)):
        raise ValueError("waveform contains non-finite samples")
    if sample_rate != config.sample_rate:
        raise ValueError(f"waveform rate {sample_rate} != feature rate {config.sample_rate}; resample first")

    # the 40 ms hann window is zero-padded to the FFT size
    spectrum = np.abs(librosa.stft(waveform, n_fft=config.fft_size, hop_length=config.hop_length,
                                   win_length=config.win_length, window="hann", center=True))
    mel = mel_basis(config) @ spectrum
    logmel = np.log(np.maximum(mel, LOG_FLOOR_EPS)).T
    return pad_or_trim(logmel, config.target_frames).astype(np.float32)


def load_audio(path: str, config: FeatureConfig) -> np.ndarray:
    """Read a clip as mono float samples at config.sample_rate."""
    waveform, rate = sf.read(path, dtype="float64", always_2d=True)
    waveform = waveform.mean(axis=1)
    if rate != config.sample_rate:
        logger.debug("resampling %s from %d Hz", path, rate)
        waveform = resample(waveform, rate, config.sample_rate)
    return waveform
