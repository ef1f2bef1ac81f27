"""Mel-spectrogram front-end and clip segmentation.

Pipeline per frame: Hamming window -> DFT power spectrum -> triangular Mel
filterbank (HTK scale) -> log compression with an additive floor. Frames are
spaced by a hop derived from a millisecond shift; tail samples shorter than
one frame are dropped, which keeps the output shape a closed-form function of
the input length.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .audio_io import AudioClip


class FeatureError(Exception):
    pass


class InvalidLength(FeatureError):
    pass


class BadFrameLength(FeatureError):
    pass


class TooManyMels(FeatureError):
    """Filter centers collide at the available DFT resolution."""


class ClipTooShort(FeatureError):
    pass


class SegmentLongerThanClip(FeatureError):
    pass


class EmptyTrainingSet(FeatureError):
    pass


@dataclass(frozen=True)
class FeatureConfig:
    frame_length: int = 1024
    hop_ms: float = 10.0
    n_mels: int = 128
    log_floor: float = 1e-6

    def __post_init__(self):
        if self.frame_length < 2:
            raise ValueError("frame_length must be >= 2")
        if self.hop_ms <= 0:
            raise ValueError("hop_ms must be > 0")
        if self.n_mels < 1:
            raise ValueError("n_mels must be >= 1")
        if self.log_floor <= 0:
            raise ValueError("log_floor must be > 0")

    def hop_samples(self, sample_rate: int) -> int:
        return max(1, int(round(self.hop_ms * sample_rate / 1000.0)))


def hamming_window(n: int) -> np.ndarray:
    """w[k] = 0.54 - 0.46*cos(2*pi*k/(n-1)), k in [0, n)."""
    if n < 2:
        raise InvalidLength(f"window length {n} < 2")
    k = np.arange(n, dtype=np.float64)
    return 0.54 - 0.46 * np.cos(2.0 * np.pi * k / (n - 1))


def power_spectrum(frame: np.ndarray) -> np.ndarray:
    """Squared-magnitude DFT of a real frame, bins 0..N/2."""
    frame = np.asarray(frame, dtype=np.float64)
    if frame.ndim != 1 or len(frame) < 2:
        raise BadFrameLength("frame must be a 1-D vector of length >= 2")
    spectrum = np.fft.rfft(frame)
    return (spectrum.real**2 + spectrum.imag**2)


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def mel_filterbank(n_mels: int, n_fft: int, sample_rate: int) -> np.ndarray:
    """Triangular filters, n_mels x (n_fft/2 + 1), centers equally spaced in mel.

    Plain (non-area-normalized) triangles evaluated at the DFT bin
    frequencies. A filter whose support captures no bin means the requested
    resolution is unachievable: that is reported as TooManyMels rather than
    silently merged.
    """
    if n_mels < 1:
        raise ValueError("n_mels must be >= 1")
    if sample_rate <= 0:
        raise ValueError("sample_rate must be > 0")
    n_bins = n_fft // 2 + 1
    mel_points = np.linspace(0.0, hz_to_mel(sample_rate / 2.0), n_mels + 2)
    hz_points = mel_to_hz(mel_points)
    bin_freqs = np.arange(n_bins) * sample_rate / n_fft

    fb = np.zeros((n_mels, n_bins))
    for i in range(n_mels):
        left, center, right = hz_points[i], hz_points[i + 1], hz_points[i + 2]
        rising = (bin_freqs - left) / (center - left)
        falling = (right - bin_freqs) / (right - center)
        fb[i] = np.maximum(0.0, np.minimum(rising, falling))

    empty = np.where(~(fb > 0).any(axis=1))[0]
    if len(empty) > 0:
        raise TooManyMels(
            f"{len(empty)} of {n_mels} filters capture no DFT bin "
            f"(first empty: {empty[0]}); reduce n_mels or increase n_fft"
        )
    return fb


def extract_mel(clip: AudioClip, cfg: FeatureConfig) -> np.ndarray:
    """Log-Mel feature matrix, frames x n_mels.

    n_frames = floor((len - frame_length)/hop) + 1 with
    hop = round(hop_ms * sample_rate / 1000).
    """
    n = len(clip.samples)
    if n < cfg.frame_length:
        raise ClipTooShort(f"clip has {n} samples, frame needs {cfg.frame_length}")
    hop = cfg.hop_samples(clip.sample_rate)
    n_frames = (n - cfg.frame_length) // hop + 1

    window = hamming_window(cfg.frame_length)
    fb = mel_filterbank(cfg.n_mels, cfg.frame_length, clip.sample_rate)

    starts = np.arange(n_frames) * hop
    frames = np.lib.stride_tricks.as_strided(
        clip.samples,
        shape=(n_frames, cfg.frame_length),
        strides=(clip.samples.strides[0] * hop, clip.samples.strides[0]),
    )
    spec = np.fft.rfft(frames * window, axis=1)
    power = spec.real**2 + spec.imag**2
    assert starts[-1] + cfg.frame_length <= n
    return np.log(power @ fb.T + cfg.log_floor)


def segment_clip(clip: AudioClip, seg_seconds: float, overlap_seconds: float) -> list[AudioClip]:
    """Cut a clip into fixed-length segments starting every seg - overlap seconds.

    Only fully contained segments are emitted:
    count = floor((duration - seg)/(seg - overlap)) + 1.
    """
    if not (0 <= overlap_seconds < seg_seconds):
        raise ValueError("need 0 <= overlap_seconds < seg_seconds")
    seg_len = int(round(seg_seconds * clip.sample_rate))
    if seg_len > len(clip.samples):
        raise SegmentLongerThanClip(
            f"segment of {seg_len} samples exceeds clip of {len(clip.samples)}"
        )
    step_seconds = seg_seconds - overlap_seconds
    out = []
    i = 0
    while True:
        start = int(round(i * step_seconds * clip.sample_rate))
        if start + seg_len > len(clip.samples):
            break
        out.append(AudioClip(samples=clip.samples[start : start + seg_len], sample_rate=clip.sample_rate))
        i += 1
    return out


def znormalize(
    train: list[np.ndarray], others: list[np.ndarray]
) -> tuple[list[np.ndarray], list[np.ndarray], np.ndarray, np.ndarray]:
    """Standardize every matrix with per-dimension stats of the training frames.

    Returns (normalized train, normalized others, mean, std). The std used in
    the transform is floored at 1e-8, so constant dimensions map to zero.
    Matrices in ``others`` (validation/test) are transformed with the training
    stats, never their own.
    """
    if not train:
        raise EmptyTrainingSet("need at least one training matrix")
    stacked = np.concatenate([np.asarray(m, dtype=np.float64) for m in train], axis=0)
    mean = stacked.mean(axis=0)
    std = stacked.std(axis=0)
    denom = np.maximum(std, 1e-8)
    norm = lambda m: (np.asarray(m, dtype=np.float64) - mean) / denom
    return [norm(m) for m in train], [norm(m) for m in others], mean, std
