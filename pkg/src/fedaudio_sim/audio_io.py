"""Raw-audio loading, synthetic corpus generation and feature-file ingestion.

Only 16-bit PCM mono WAV is accepted; anything else is rejected explicitly
rather than silently converted. The synthetic corpus is a deterministic,
desk-scale stand-in for real keyword/event corpora: each class hides a weak
tonal cue in its own frequency band underneath a loud class-independent
carrier, so classification is easy on clean audio but degrades once broadband
noise is injected.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .seeding import derived_rng


class AudioIOError(Exception):
    """Base class for all loader/writer failures in this module."""


class NotWav(AudioIOError):
    """File is not a RIFF/WAVE container."""


class UnsupportedEncoding(AudioIOError):
    """WAV is valid but not 16-bit PCM mono."""


class TruncatedFile(AudioIOError):
    """File ends before the declared chunks are complete."""


class MalformedHeader(AudioIOError):
    """Feature file header or payload cannot be parsed."""


class DimensionMismatch(AudioIOError):
    """Feature payload size disagrees with the declared shape."""


class UnknownLabel(AudioIOError):
    """Label is outside the declared vocabulary."""


@dataclass(frozen=True)
class AudioClip:
    """Mono PCM samples (float64) plus the sample rate in Hz.

    Samples loaded from disk are in [-1, 1]; corrupted clips may exceed that
    range (noise injection does not re-clip). Treat instances as immutable.
    """

    samples: np.ndarray
    sample_rate: int

    def __post_init__(self):
        if self.sample_rate <= 0:
            raise ValueError("sample_rate must be positive")

    @property
    def duration_seconds(self) -> float:
        return len(self.samples) / self.sample_rate


@dataclass(frozen=True)
class SynthCorpusSpec:
    """Shape of a synthetic corpus: classes x speakers x clips per pair."""

    n_classes: int
    n_speakers: int
    clips_per_speaker_per_class: int
    clip_seconds: float = 1.0
    sample_rate: int = 16000
    seed: int = 0

    def validate(self) -> None:
        if self.n_classes < 1 or self.n_speakers < 1 or self.clips_per_speaker_per_class < 1:
            raise ValueError("all counts must be >= 1")
        if self.clip_seconds <= 0:
            raise ValueError("clip_seconds must be > 0")
        if self.sample_rate <= 0:
            raise ValueError("sample_rate must be > 0")
        top = _class_band(self.n_classes - 1)[1] + _SPEAKER_OFFSET_HZ
        if top >= self.sample_rate / 2:
            raise ValueError(
                f"class {self.n_classes - 1} band reaches {top:.0f} Hz, "
                f"above Nyquist for rate {self.sample_rate}"
            )


@dataclass(frozen=True)
class LabeledClip:
    clip: AudioClip
    label: int
    speaker_id: str


# --- WAV reading / writing -------------------------------------------------

def load_wav(path) -> AudioClip:
    """Load a 16-bit PCM mono WAV file.

    Raises NotWav for a bad container magic, UnsupportedEncoding for
    non-PCM / non-16-bit / multichannel content, TruncatedFile when the file
    ends before the declared chunk data. Never raises anything else for
    arbitrary byte streams.
    """
    with open(path, "rb") as f:
        raw = f.read()

    if raw[:4] != b"RIFF"[: min(4, len(raw))]:
        raise NotWav("missing RIFF magic")
    if len(raw) < 12:
        raise TruncatedFile("file shorter than RIFF preamble")
    if raw[8:12] != b"WAVE":
        raise NotWav("RIFF container is not WAVE")

    fmt = None
    data = None
    pos = 12
    while pos + 8 <= len(raw):
        cid = raw[pos : pos + 4]
        (size,) = struct.unpack_from("<I", raw, pos + 4)
        body = raw[pos + 8 : pos + 8 + size]
        if cid == b"fmt ":
            if len(body) < 16:
                raise TruncatedFile("fmt chunk shorter than 16 bytes")
            fmt = struct.unpack_from("<HHIIHH", body, 0)
        elif cid == b"data":
            if len(body) < size:
                raise TruncatedFile(
                    f"data chunk declares {size} bytes, {len(body)} present"
                )
            data = body
        if fmt is not None and data is not None:
            break
        pos += 8 + size + (size & 1)  # chunks are word-aligned

    if fmt is None:
        raise TruncatedFile("no fmt chunk found")
    if data is None:
        raise TruncatedFile("no data chunk found")

    audio_format, channels, sample_rate, _byte_rate, _block_align, bits = fmt
    if audio_format != 1:
        raise UnsupportedEncoding(f"audio format {audio_format}, want PCM (1)")
    if channels != 1:
        raise UnsupportedEncoding(f"{channels} channels, want mono")
    if bits != 16:
        raise UnsupportedEncoding(f"{bits}-bit samples, want 16")
    if sample_rate == 0:
        raise UnsupportedEncoding("sample rate 0 in fmt chunk")
    if len(data) % 2:
        raise TruncatedFile("data chunk holds a half sample")

    samples = np.frombuffer(data, dtype="<i2").astype(np.float64) / 32768.0
    return AudioClip(samples=samples, sample_rate=int(sample_rate))


def save_wav(path, clip: AudioClip) -> None:
    """Write a clip as 16-bit PCM mono WAV, clamping to the int16 range."""
    quantized = np.clip(np.rint(clip.samples * 32768.0), -32768, 32767).astype("<i2")
    payload = quantized.tobytes()
    byte_rate = clip.sample_rate * 2
    header = b"RIFF" + struct.pack("<I", 36 + len(payload)) + b"WAVE"
    header += b"fmt " + struct.pack(
        "<IHHIIHH", 16, 1, 1, clip.sample_rate, byte_rate, 2, 16
    )
    header += b"data" + struct.pack("<I", len(payload))
    with open(path, "wb") as f:
        f.write(header + payload)


# --- synthetic corpus ------------------------------------------------------

# Synthesis constants. The carrier is loud, identical across classes and
# therefore dominates the signal power that noise injection is scaled
# against; the class cue is weak, so broadband noise at low SNR buries it
# while clean audio stays trivially separable.
_CARRIER_HZ = 150.0
_CARRIER_AMP = 0.55
_TONE_AMP = 0.012
_TONE_FRACS = (0.2, 0.5, 0.8)
_DITHER_STD = 0.004
_SPEAKER_OFFSET_HZ = 50.0


def _class_band(c: int) -> tuple[float, float]:
    return 300.0 + 400.0 * c, 500.0 + 400.0 * c


def synth_corpus(spec: SynthCorpusSpec) -> list[LabeledClip]:
    """Generate a deterministic labeled corpus.

    Class c is a sum of three weak sinusoids inside its band
    [300 + 400c, 500 + 400c] Hz plus a loud shared carrier and small Gaussian
    dither. Each speaker shifts every tone by a fixed per-speaker offset, so
    partitioning by speaker id is naturally non-IID. Output order and content
    are fully determined by the seed.
    """
    spec.validate()
    n = int(round(spec.clip_seconds * spec.sample_rate))
    t = np.arange(n, dtype=np.float64) / spec.sample_rate

    offsets = {
        s: derived_rng(spec.seed, "speaker", s).uniform(
            -_SPEAKER_OFFSET_HZ, _SPEAKER_OFFSET_HZ
        )
        for s in range(spec.n_speakers)
    }

    out: list[LabeledClip] = []
    for c in range(spec.n_classes):
        lo, hi = _class_band(c)
        base_freqs = [lo + frac * (hi - lo) for frac in _TONE_FRACS]
        for s in range(spec.n_speakers):
            off = offsets[s]
            for k in range(spec.clips_per_speaker_per_class):
                rng = derived_rng(spec.seed, "clip", c, s, k)
                sig = (
                    _CARRIER_AMP
                    * rng.uniform(0.9, 1.1)
                    * np.sin(2 * np.pi * (_CARRIER_HZ + off) * t + rng.uniform(0, 2 * np.pi))
                )
                for f0 in base_freqs:
                    amp = _TONE_AMP * rng.uniform(0.8, 1.25)
                    sig += amp * np.sin(2 * np.pi * (f0 + off) * t + rng.uniform(0, 2 * np.pi))
                sig += rng.normal(0.0, _DITHER_STD, n)
                np.clip(sig, -1.0, 1.0, out=sig)
                out.append(
                    LabeledClip(
                        clip=AudioClip(samples=sig, sample_rate=spec.sample_rate),
                        label=c,
                        speaker_id=f"spk{s:03d}",
                    )
                )
    return out


# --- feature files (precomputed-representation ingestion) -------------------

def write_feature_file(path, matrix: np.ndarray, label: int, client: str) -> None:
    """Write one example in the self-describing text format.

    Header line ``frames=<n> dims=<d> label=<int> client=<string>`` followed
    by n*d whitespace-separated values in row-major order.
    """
    m = np.asarray(matrix, dtype=np.float64)
    if m.ndim != 2:
        raise ValueError("feature matrix must be 2-D")
    if not np.all(np.isfinite(m)):
        raise ValueError("feature matrix must be finite")
    if any(ch.isspace() for ch in client) or not client:
        raise ValueError("client key must be non-empty and whitespace-free")
    with open(path, "w") as f:
        f.write(f"frames={m.shape[0]} dims={m.shape[1]} label={int(label)} client={client}\n")
        for row in m:
            f.write(" ".join(repr(float(v)) for v in row) + "\n")


def load_feature_file(path, n_classes: int | None = None) -> tuple[np.ndarray, int, str]:
    """Read one feature-file example, returning (matrix, label, client key).

    When ``n_classes`` is given, labels outside [0, n_classes) raise
    UnknownLabel; negative labels are always rejected.
    """
    with open(path, "r") as f:
        header = f.readline()
        rest = f.read()

    fields = header.split()
    if len(fields) != 4:
        raise MalformedHeader(f"expected 4 header fields, got {len(fields)}")
    parsed = {}
    for field, key in zip(fields, ("frames", "dims", "label", "client")):
        prefix = key + "="
        if not field.startswith(prefix):
            raise MalformedHeader(f"expected '{prefix}...', got {field!r}")
        parsed[key] = field[len(prefix):]
    try:
        frames = int(parsed["frames"])
        dims = int(parsed["dims"])
        label = int(parsed["label"])
    except ValueError as e:
        raise MalformedHeader(str(e)) from None
    if frames < 0 or dims < 0:
        raise MalformedHeader("negative shape")
    client = parsed["client"]
    if not client:
        raise MalformedHeader("empty client key")

    tokens = rest.split()
    if len(tokens) != frames * dims:
        raise DimensionMismatch(
            f"header declares {frames}x{dims}={frames * dims} values, {len(tokens)} present"
        )
    try:
        values = np.array([float(tok) for tok in tokens], dtype=np.float64)
    except ValueError as e:
        raise MalformedHeader(f"non-numeric value: {e}") from None
    if not np.all(np.isfinite(values)):
        raise MalformedHeader("non-finite value in payload")

    if label < 0 or (n_classes is not None and label >= n_classes):
        raise UnknownLabel(f"label {label} outside vocabulary")
    return values.reshape(frames, dims), label, client


# --- corpus manifests -------------------------------------------------------

def write_manifest(path, entries: list[tuple[str, int, str]]) -> None:
    """Write one ``path<TAB>label<TAB>client_key`` line per example."""
    with open(path, "w") as f:
        for p, label, client in entries:
            f.write(f"{p}\t{int(label)}\t{client}\n")


def read_manifest(path) -> list[tuple[str, int, str]]:
    entries = []
    with open(path, "r") as f:
        for lineno, line in enumerate(f, 1):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 3:
                raise MalformedHeader(f"manifest line {lineno}: expected 3 tab-separated fields")
            p, label_s, client = parts
            try:
                label = int(label_s)
            except ValueError:
                raise MalformedHeader(f"manifest line {lineno}: bad label {label_s!r}") from None
            entries.append((p, label, client))
    return entries
