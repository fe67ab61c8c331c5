"""Audio I/O and spectral primitives: WAV parsing, resampling, trimming,
STFT/ISTFT, harmonic-percussive separation, log compression.

All sample buffers are float64 in [-1, 1]; spectrogram rows are frames,
columns are frequency bins (0..n_fft/2).
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import (ClipTooShort, EmptyAudio, MalformedHeader,
                     NonFiniteInput, UnsupportedEncoding)

DEFAULT_N_FFT = 512
DEFAULT_HOP = 256
DEFAULT_RATE = 12000


# ---------------------------------------------------------------------------
# Domain types
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class AudioClip:
    """Mono audio: float64 samples at an integer sample rate."""

    samples: np.ndarray
    rate: int

    def __post_init__(self):
        s = np.asarray(self.samples, dtype=np.float64)
        if s.ndim != 1:
            raise ValueError(f"samples must be 1-D, got shape {s.shape}")
        if not np.all(np.isfinite(s)):
            raise NonFiniteInput("audio samples contain NaN or Inf")
        if self.rate <= 0:
            raise ValueError(f"rate must be positive, got {self.rate}")
        object.__setattr__(self, "samples", s)

    @property
    def duration(self) -> float:
        return self.samples.shape[0] / self.rate


@dataclass(frozen=True)
class ComplexSpectrogram:
    """STFT frames: complex matrix of shape (frames, n_fft // 2 + 1)."""

    values: np.ndarray
    n_fft: int
    hop: int
    rate: int

    @property
    def frames(self) -> int:
        return self.values.shape[0]

    @property
    def bins(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True)
class MagnitudeSpectrogram:
    """Non-negative magnitudes with the same shape conventions."""

    mags: np.ndarray
    n_fft: int
    hop: int
    rate: int

    @property
    def frames(self) -> int:
        return self.mags.shape[0]

    @property
    def bins(self) -> int:
        return self.mags.shape[1]

    def bin_frequencies(self) -> np.ndarray:
        return np.arange(self.bins) * (self.rate / self.n_fft)


# ---------------------------------------------------------------------------
# WAV reading
# ---------------------------------------------------------------------------

def read_wav(path: str) -> AudioClip:
    """Parse a RIFF/WAVE file: integer PCM (8/16/24-bit) or float32.

    Unknown chunks are skipped; multi-channel audio is averaged to mono.
    """
    with open(path, "rb") as f:
        data = f.read()
    if len(data) < 12 or data[:4] != b"RIFF" or data[8:12] != b"WAVE":
        raise MalformedHeader(f"{path}: not a RIFF/WAVE file")

    fmt = None
    payload = None
    pos = 12
    while pos + 8 <= len(data):
        cid = data[pos:pos + 4]
        size = struct.unpack_from("<I", data, pos + 4)[0]
        body = data[pos + 8:pos + 8 + size]
        if len(body) != size:
            raise MalformedHeader(f"{path}: truncated chunk {cid!r}")
        if cid == b"fmt ":
            if size < 16:
                raise MalformedHeader(f"{path}: fmt chunk too small")
            fmt = struct.unpack_from("<HHIIHH", body, 0)
        elif cid == b"data":
            payload = body
        pos += 8 + size + (size & 1)  # chunks are word-aligned

    if fmt is None or payload is None:
        raise MalformedHeader(f"{path}: missing fmt or data chunk")
    audio_format, channels, rate, _byte_rate, _block_align, bits = fmt
    if channels < 1:
        raise MalformedHeader(f"{path}: channel count {channels}")

    if audio_format == 1 and bits == 8:
        x = (np.frombuffer(payload, dtype=np.uint8)
             .astype(np.float64) - 128.0) / 128.0
    elif audio_format == 1 and bits == 16:
        x = np.frombuffer(payload, dtype="<i2").astype(np.float64) / 32768.0
    elif audio_format == 1 and bits == 24:
        raw = np.frombuffer(payload, dtype=np.uint8)
        raw = raw[:(raw.shape[0] // 3) * 3].reshape(-1, 3).astype(np.int64)
        vals = raw[:, 0] | (raw[:, 1] << 8) | (raw[:, 2] << 16)
        vals = np.where(vals >= 1 << 23, vals - (1 << 24), vals)
        x = vals.astype(np.float64) / float(1 << 23)
    elif audio_format == 3 and bits == 32:
        x = np.frombuffer(payload, dtype="<f4").astype(np.float64)
    else:
        raise UnsupportedEncoding(
            f"{path}: format tag {audio_format} with {bits} bits")

    if x.shape[0] == 0:
        raise EmptyAudio(f"{path}: zero samples")
    if channels > 1:
        x = x[:(x.shape[0] // channels) * channels]
        if x.shape[0] == 0:
            raise EmptyAudio(f"{path}: zero frames after channel split")
        x = x.reshape(-1, channels).mean(axis=1)
    return AudioClip(x, int(rate))


# ---------------------------------------------------------------------------
# Resampling
# ---------------------------------------------------------------------------

def _design_lowpass(up: int, down: int) -> np.ndarray:
    """Kaiser-windowed sinc for the polyphase resampler, 64 taps/phase."""
    taps_per_phase = 64
    length = taps_per_phase * up + 1
    center = (length - 1) // 2
    cutoff = min(1.0 / (2 * up), 1.0 / (2 * down))  # cycles/sample, upsampled rate
    k = np.arange(length) - center
    h = 2 * cutoff * np.sinc(2 * cutoff * k)
    h *= np.kaiser(length, 8.6)
    h *= up  # compensate zero-stuffing loss
    return h


def resample(clip: AudioClip, target_rate: int) -> AudioClip:
    """Band-limited rate conversion via polyphase FIR filtering."""
    if target_rate <= 0:
        raise ValueError(f"target_rate must be positive, got {target_rate}")
    if target_rate == clip.rate:
        return AudioClip(clip.samples.copy(), clip.rate)
    g = math.gcd(clip.rate, target_rate)
    up = target_rate // g
    down = clip.rate // g
    h = _design_lowpass(up, down)
    n = clip.samples.shape[0]
    n_out = -(-n * up // down)  # ceil
    center = (h.shape[0] - 1) // 2
    y = kernels.polyphase_resample(clip.samples, h, up, down, n_out, center)
    return AudioClip(y, target_rate)


def trim_center(clip: AudioClip, seconds: float) -> AudioClip:
    """Cut or zero-pad to round(seconds * rate) samples, centered."""
    target = int(round(seconds * clip.rate))
    n = clip.samples.shape[0]
    if target == n:
        return AudioClip(clip.samples.copy(), clip.rate)
    if target < n:
        start = (n - target) // 2
        return AudioClip(clip.samples[start:start + target].copy(), clip.rate)
    pad = target - n
    left = pad // 2
    out = np.zeros(target)
    out[left:left + n] = clip.samples
    return AudioClip(out, clip.rate)


# ---------------------------------------------------------------------------
# STFT / ISTFT
# ---------------------------------------------------------------------------

def _window(n_fft: int, kind: str) -> np.ndarray:
    if kind == "hann":
        # periodic Hann
        return 0.5 - 0.5 * np.cos(2 * np.pi * np.arange(n_fft) / n_fft)
    if kind == "rect":
        return np.ones(n_fft)
    raise ValueError(f"unknown window {kind!r}")


def frame_count(n_samples: int, n_fft: int, hop: int) -> int:
    return (n_samples - n_fft) // hop + 1


def stft(clip: AudioClip, n_fft: int = DEFAULT_N_FFT, hop: int = DEFAULT_HOP,
         window: str = "hann") -> ComplexSpectrogram:
    """Short-time Fourier transform; frames cover [t*hop, t*hop + n_fft)."""
    if n_fft <= 0 or n_fft % 2:
        raise ValueError(f"n_fft must be even and positive, got {n_fft}")
    if hop <= 0:
        raise ValueError(f"hop must be positive, got {hop}")
    n = clip.samples.shape[0]
    if n < n_fft:
        raise ClipTooShort(f"{n} samples < n_fft {n_fft}")
    w = _window(n_fft, window)
    n_frames = frame_count(n, n_fft, hop)
    idx = np.arange(n_fft)[None, :] + hop * np.arange(n_frames)[:, None]
    frames = clip.samples[idx] * w[None, :]
    return ComplexSpectrogram(np.fft.rfft(frames, axis=1),
                              n_fft, hop, clip.rate)


def istft(spec: ComplexSpectrogram, window: str = "hann") -> np.ndarray:
    """Overlap-add inverse with synthesis windowing.

    Reconstruction is least-squares: y = sum(w * frame) / sum(w^2), so
    unmodified frames invert exactly wherever the window-energy envelope
    is nonzero.
    """
    w = _window(spec.n_fft, window)
    frames = np.fft.irfft(spec.values, n=spec.n_fft, axis=1)
    n_out = spec.n_fft + (spec.frames - 1) * spec.hop
    y = np.zeros(n_out)
    den = np.zeros(n_out)
    for t in range(spec.frames):
        lo = t * spec.hop
        y[lo:lo + spec.n_fft] += w * frames[t]
        den[lo:lo + spec.n_fft] += w * w
    good = den > 1e-12
    y[good] /= den[good]
    y[~good] = 0.0
    return y


def magnitude(spec: ComplexSpectrogram) -> MagnitudeSpectrogram:
    return MagnitudeSpectrogram(np.abs(spec.values),
                                spec.n_fft, spec.hop, spec.rate)


# ---------------------------------------------------------------------------
# HPSS and log compression
# ---------------------------------------------------------------------------

def hpss_masks(spec: MagnitudeSpectrogram, kernel: int = 31,
               power: float = 2.0) -> tuple[np.ndarray, np.ndarray]:
    """Soft masks for harmonic/percussive separation.

    Harmonic enhancement median-filters along time (sustained partials
    persist across frames); percussive filters along frequency
    (transients are broadband within a frame).  Masks sum to one
    elementwise; cells where both filtered estimates vanish get 0.5.
    """
    if kernel < 1 or kernel % 2 == 0:
        raise ValueError(f"kernel must be odd and positive, got {kernel}")
    if power <= 0:
        raise ValueError(f"power must be positive, got {power}")
    m = spec.mags
    if np.any(m < 0):
        raise ValueError("magnitudes must be non-negative")
    hp = kernels.sliding_median(m, kernel, axis=0) ** power
    pp = kernels.sliding_median(m, kernel, axis=1) ** power
    denom = hp + pp
    mask_h = np.full_like(m, 0.5)
    nz = denom > 0
    mask_h[nz] = hp[nz] / denom[nz]
    return mask_h, 1.0 - mask_h


def hpss(spec: MagnitudeSpectrogram, kernel: int = 31, power: float = 2.0
         ) -> tuple[MagnitudeSpectrogram, MagnitudeSpectrogram]:
    """Median-filtering soft-mask separation; outputs sum to the input."""
    mask_h, mask_p = hpss_masks(spec, kernel, power)
    m = spec.mags
    make = lambda mags: MagnitudeSpectrogram(mags, spec.n_fft, spec.hop, spec.rate)
    return make(m * mask_h), make(m * mask_p)


def log_compress(spec: MagnitudeSpectrogram,
                 eps: float = 1e-6) -> MagnitudeSpectrogram:
    """log(eps + m) - log(eps): monotone and exactly zero-preserving."""
    if eps <= 0:
        raise ValueError(f"eps must be positive, got {eps}")
    out = np.log(eps + spec.mags) - math.log(eps)
    return MagnitudeSpectrogram(out, spec.n_fft, spec.hop, spec.rate)
