"""Frame-level audio descriptors and music-level aggregation.

The extraction pipeline separates the clip into harmonic and percussive
components (soft-mask HPSS), log-compresses each component spectrogram,
and computes spectral/mel/chroma features on the compressed magnitudes.
ZCR and RMS come from component time-domain signals reconstructed by
masked inverse STFT.  Column order is documented by the layout record
attached to every FrameFeatureMatrix.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass

import numpy as np

from . import dsp
from .datatypes import FrameFeatureMatrix, LayoutSegment, TrackVector, single_segment
from .dsp import AudioClip, MagnitudeSpectrogram
from .errors import ClipTooShort, TooFewFrames, TooManyBands

COMPONENTS = ("harmonic", "percussive")
_BOTH = COMPONENTS
_HARMONIC = ("harmonic",)


@dataclass(frozen=True)
class AudioFeatureConfig:
    """Which descriptors to compute, on which HPSS components."""

    n_fft: int = dsp.DEFAULT_N_FFT
    hop: int = dsp.DEFAULT_HOP
    n_mel: int = 128
    n_mfcc: int = 20
    n_chroma: int = 12
    rolloff_percent: float = 0.85
    poly_orders: tuple[int, ...] = (1, 2)
    ordinal_k: int = 1
    delta_halfwidth: int = 4
    cens_smooth_len: int = 41
    hpss_kernel: int = 31
    hpss_power: float = 2.0
    log_eps: float = 1e-6
    mel_components: tuple[str, ...] = _HARMONIC
    chroma_components: tuple[str, ...] = _HARMONIC
    spectral_components: tuple[str, ...] = _BOTH

    def __post_init__(self):
        if self.ordinal_k < 1:
            raise ValueError(f"ordinal_k must be >= 1, got {self.ordinal_k}")
        if self.n_mel < self.n_mfcc:
            raise ValueError(
                f"n_mel ({self.n_mel}) must be >= n_mfcc ({self.n_mfcc})")
        if self.n_chroma != 12:
            raise ValueError("chroma is defined on the 12 pitch classes")
        for comps in (self.mel_components, self.chroma_components,
                      self.spectral_components):
            for c in comps:
                if c not in COMPONENTS:
                    raise ValueError(f"unknown component {c!r}")
        if not 0 < self.rolloff_percent < 1:
            raise ValueError("rolloff_percent must lie in (0, 1)")

    def layout(self) -> tuple[LayoutSegment, ...]:
        """Column layout of extract_music_features under this config."""
        segs: list[LayoutSegment] = []
        poly_dims = sum(o + 1 for o in self.poly_orders)
        for comp in COMPONENTS:
            if comp in self.mel_components:
                segs.append(LayoutSegment("mel", comp, self.n_mel))
                segs.append(LayoutSegment("mfcc", comp, self.n_mfcc))
                segs.append(LayoutSegment("mfcc_delta", comp, self.n_mfcc))
                segs.append(LayoutSegment("mfcc_delta2", comp, self.n_mfcc))
            if comp in self.chroma_components:
                segs.append(LayoutSegment("chroma_stft", comp, self.n_chroma))
                segs.append(LayoutSegment("chroma_cens", comp, self.n_chroma))
            if comp in self.spectral_components:
                segs.append(LayoutSegment("centroid", comp, 1))
                segs.append(LayoutSegment("bandwidth", comp, 1))
                segs.append(LayoutSegment("rolloff", comp, 1))
                segs.append(LayoutSegment("poly", comp, poly_dims))
                segs.append(LayoutSegment("zcr", comp, 1))
                segs.append(LayoutSegment("rms", comp, 1))
        return tuple(segs)

    def frame_dim(self) -> int:
        return sum(seg.dim for seg in self.layout())


def full_scale() -> AudioFeatureConfig:
    """Every descriptor on both components; per-frame total 380."""
    return AudioFeatureConfig(n_mel=96, mel_components=_BOTH,
                              chroma_components=_BOTH,
                              spectral_components=_BOTH)


# ---------------------------------------------------------------------------
# Mel / MFCC
# ---------------------------------------------------------------------------

def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def mel_filterbank(n_fft: int, rate: int, n_mel: int) -> np.ndarray:
    """Triangular filters, n_mel × bins, centers equally spaced in mel."""
    bins = n_fft // 2 + 1
    if n_mel > bins:
        raise TooManyBands(f"n_mel {n_mel} exceeds {bins} spectrogram bins")
    freqs = np.arange(bins) * (rate / n_fft)
    edges = mel_to_hz(np.linspace(0.0, hz_to_mel(rate / 2), n_mel + 2))
    fb = np.zeros((n_mel, bins))
    for b in range(n_mel):
        left, center, right = edges[b], edges[b + 1], edges[b + 2]
        rising = (freqs - left) / max(center - left, 1e-12)
        falling = (right - freqs) / max(right - center, 1e-12)
        fb[b] = np.maximum(0.0, np.minimum(rising, falling))
    return fb


def mel_spectrogram(spec: MagnitudeSpectrogram,
                    n_mel: int = 128) -> FrameFeatureMatrix:
    """Filterbank applied to squared magnitudes."""
    fb = mel_filterbank(spec.n_fft, spec.rate, n_mel)
    return single_segment(spec.mags ** 2 @ fb.T, "mel")


def _dct_ii_orthonormal(n: int) -> np.ndarray:
    k = np.arange(n)[:, None]
    m = np.arange(n)[None, :]
    table = np.cos(np.pi * k * (2 * m + 1) / (2 * n))
    table[0] *= math.sqrt(1.0 / n)
    table[1:] *= math.sqrt(2.0 / n)
    return table


def mfcc(melspec: FrameFeatureMatrix, n_mfcc: int = 20,
         eps: float = 1e-6) -> FrameFeatureMatrix:
    """Orthonormal DCT-II of the compressed log mel spectrum.

    Uses log(mel + eps) - log(eps): the shift keeps silence at exactly
    zero instead of the large negative floor a plain log would give.
    """
    mel = melspec.rows
    n_mel = mel.shape[1]
    if n_mfcc > n_mel:
        raise ValueError(f"n_mfcc {n_mfcc} exceeds n_mel {n_mel}")
    logmel = np.log(mel + eps) - math.log(eps)
    coefs = logmel @ _dct_ii_orthonormal(n_mel).T
    return single_segment(coefs[:, :n_mfcc], "mfcc")


def delta(feat: FrameFeatureMatrix, order: int = 1,
          halfwidth: int = 4) -> FrameFeatureMatrix:
    """Local least-squares slope over time, edges replicated.

    order=2 applies the operator twice (acceleration).
    """
    if order not in (1, 2):
        raise ValueError(f"order must be 1 or 2, got {order}")
    rows = feat.rows
    need = 2 * halfwidth + 1
    if rows.shape[0] < need:
        raise TooFewFrames(
            f"{rows.shape[0]} frames < window {need} for delta")
    offsets = np.arange(-halfwidth, halfwidth + 1, dtype=np.float64)
    weights = offsets / np.sum(offsets ** 2)
    out = rows
    for _ in range(order):
        padded = np.pad(out, [(halfwidth, halfwidth), (0, 0)], mode="edge")
        slid = np.lib.stride_tricks.sliding_window_view(padded, need, axis=0)
        out = slid @ weights
    name = "mfcc_delta" if order == 1 else "mfcc_delta2"
    return single_segment(out, name)


# ---------------------------------------------------------------------------
# Chroma
# ---------------------------------------------------------------------------

def _pitch_classes(spec: MagnitudeSpectrogram) -> np.ndarray:
    """Nearest pitch class per bin (C=0, A440 reference); DC excluded."""
    freqs = spec.bin_frequencies()[1:]
    midi = 69.0 + 12.0 * np.log2(freqs / 440.0)
    return np.mod(np.round(midi).astype(np.int64), 12)


def chroma_stft(spec: MagnitudeSpectrogram) -> FrameFeatureMatrix:
    """Bin energies folded onto 12 pitch classes, frame max-normalized."""
    energy = spec.mags[:, 1:] ** 2
    classes = _pitch_classes(spec)
    fold = np.zeros((12, classes.shape[0]))
    fold[classes, np.arange(classes.shape[0])] = 1.0
    chroma = energy @ fold.T
    peak = chroma.max(axis=1, keepdims=True)
    nz = peak[:, 0] > 0
    chroma[nz] /= peak[nz]
    return single_segment(chroma, "chroma_stft")


_CENS_THRESHOLDS = (0.05, 0.1, 0.2, 0.4)


def chroma_cens(chroma: FrameFeatureMatrix,
                smooth_len: int = 41) -> FrameFeatureMatrix:
    """Quantized, time-smoothed, L2-normalized chroma."""
    if smooth_len < 1 or smooth_len % 2 == 0:
        raise ValueError(f"smooth_len must be odd, got {smooth_len}")
    c = chroma.rows
    if c.shape[1] != 12 or np.any(c < 0):
        raise ValueError("chroma must be frames × 12, non-negative")
    l1 = c.sum(axis=1, keepdims=True)
    unit = np.divide(c, l1, out=np.zeros_like(c), where=l1 > 0)
    quant = np.zeros_like(unit)
    for thr in _CENS_THRESHOLDS:
        quant += 0.25 * (unit > thr)
    if smooth_len == 1:
        win = np.ones(1)
    else:
        win = 0.5 - 0.5 * np.cos(2 * np.pi * np.arange(smooth_len)
                                 / (smooth_len - 1))
    smooth = np.empty_like(quant)
    for cls in range(12):
        smooth[:, cls] = np.convolve(quant[:, cls], win, mode="same")
    norms = np.linalg.norm(smooth, axis=1, keepdims=True)
    out = np.divide(smooth, norms, out=np.zeros_like(smooth),
                    where=norms > 0)
    return single_segment(out, "chroma_cens")


# ---------------------------------------------------------------------------
# Spectral summaries
# ---------------------------------------------------------------------------

def spectral_summaries(spec: MagnitudeSpectrogram,
                       rolloff_percent: float = 0.85,
                       poly_orders: tuple[int, ...] = (1, 2)
                       ) -> FrameFeatureMatrix:
    """Centroid, bandwidth, rolloff (Hz) and polynomial fits per frame."""
    m = spec.mags
    freqs = spec.bin_frequencies()
    total = m.sum(axis=1)
    nz = total > 0
    safe = np.where(nz, total, 1.0)

    centroid = np.where(nz, m @ freqs / safe, 0.0)
    spread = (freqs[None, :] - centroid[:, None]) ** 2
    bandwidth = np.sqrt(np.where(nz, np.sum(m * spread, axis=1) / safe, 0.0))

    cum = np.cumsum(m, axis=1)
    target = rolloff_percent * total
    hit = cum >= target[:, None]
    first = np.argmax(hit, axis=1)  # first True; 0 when no True (zero frames)
    rolloff = np.where(nz, freqs[first], 0.0)

    cols = [centroid[:, None], bandwidth[:, None], rolloff[:, None]]
    for order in poly_orders:
        coefs = np.polyfit(freqs, m.T, order)  # highest degree first
        cols.append(coefs.T)
    out = np.concatenate(cols, axis=1)
    segs = (LayoutSegment("centroid", "none", 1),
            LayoutSegment("bandwidth", "none", 1),
            LayoutSegment("rolloff", "none", 1),
            LayoutSegment("poly", "none",
                          sum(o + 1 for o in poly_orders)))
    return FrameFeatureMatrix(out, segs)


# ---------------------------------------------------------------------------
# Time-domain frame statistics
# ---------------------------------------------------------------------------

def _frames_of(clip: AudioClip, n_fft: int, hop: int) -> np.ndarray:
    n = clip.samples.shape[0]
    if n < n_fft:
        raise ClipTooShort(f"{n} samples < n_fft {n_fft}")
    count = dsp.frame_count(n, n_fft, hop)
    idx = np.arange(n_fft)[None, :] + hop * np.arange(count)[:, None]
    return clip.samples[idx]


def zero_crossing_rate(clip: AudioClip, n_fft: int = dsp.DEFAULT_N_FFT,
                       hop: int = dsp.DEFAULT_HOP) -> FrameFeatureMatrix:
    """Sign changes between adjacent samples per frame, over n_fft."""
    frames = _frames_of(clip, n_fft, hop)
    pos = frames >= 0  # sign(0) counts as positive
    changes = np.sum(pos[:, 1:] != pos[:, :-1], axis=1)
    return single_segment((changes / n_fft)[:, None], "zcr")


def rms_energy(clip: AudioClip, n_fft: int = dsp.DEFAULT_N_FFT,
               hop: int = dsp.DEFAULT_HOP) -> FrameFeatureMatrix:
    frames = _frames_of(clip, n_fft, hop)
    return single_segment(
        np.sqrt(np.mean(frames ** 2, axis=1))[:, None], "rms")


# ---------------------------------------------------------------------------
# Full extraction and aggregation
# ---------------------------------------------------------------------------

def extract_music_features(clip: AudioClip,
                           config: AudioFeatureConfig | None = None
                           ) -> FrameFeatureMatrix:
    """HPSS the clip, then compute the configured descriptor blocks."""
    cfg = config or AudioFeatureConfig()
    cspec = dsp.stft(clip, cfg.n_fft, cfg.hop)
    mags = dsp.magnitude(cspec)
    mask_h, mask_p = dsp.hpss_masks(mags, cfg.hpss_kernel, cfg.hpss_power)
    masks = {"harmonic": mask_h, "percussive": mask_p}

    def comp_spec(comp: str) -> MagnitudeSpectrogram:
        return MagnitudeSpectrogram(mags.mags * masks[comp],
                                    cfg.n_fft, cfg.hop, clip.rate)

    logspec = {c: dsp.log_compress(comp_spec(c), cfg.log_eps)
               for c in COMPONENTS
               if c in cfg.mel_components + cfg.chroma_components
               + cfg.spectral_components}

    time_comp = {}
    if cfg.spectral_components:
        for c in cfg.spectral_components:
            masked = dsp.ComplexSpectrogram(cspec.values * masks[c],
                                            cfg.n_fft, cfg.hop, clip.rate)
            time_comp[c] = AudioClip(dsp.istft(masked), clip.rate)

    blocks: list[np.ndarray] = []
    for comp in COMPONENTS:
        if comp in cfg.mel_components:
            mel = mel_spectrogram(logspec[comp], cfg.n_mel)
            mf = mfcc(mel, cfg.n_mfcc, cfg.log_eps)
            d1 = delta(mf, 1, cfg.delta_halfwidth)
            d2 = delta(mf, 2, cfg.delta_halfwidth)
            blocks += [mel.rows, mf.rows, d1.rows, d2.rows]
        if comp in cfg.chroma_components:
            ch = chroma_stft(logspec[comp])
            ce = chroma_cens(ch, cfg.cens_smooth_len)
            blocks += [ch.rows, ce.rows]
        if comp in cfg.spectral_components:
            summaries = spectral_summaries(logspec[comp],
                                           cfg.rolloff_percent,
                                           cfg.poly_orders)
            zc = zero_crossing_rate(time_comp[comp], cfg.n_fft, cfg.hop)
            rm = rms_energy(time_comp[comp], cfg.n_fft, cfg.hop)
            blocks += [summaries.rows, zc.rows, rm.rows]
    return FrameFeatureMatrix(np.concatenate(blocks, axis=1), cfg.layout())


def aggregate_music_level(feat: FrameFeatureMatrix,
                          ordinal_k: int = 1) -> TrackVector:
    """Mean, population variance, and top-k per dimension."""
    if ordinal_k < 1:
        raise ValueError(f"ordinal_k must be >= 1, got {ordinal_k}")
    rows = feat.rows
    if rows.shape[0] < ordinal_k:
        raise TooFewFrames(
            f"{rows.shape[0]} frames < ordinal_k {ordinal_k}")
    mean = rows.mean(axis=0)
    var = rows.var(axis=0)  # population
    ranked = np.sort(rows, axis=0)[::-1][:ordinal_k]
    values = np.concatenate([mean, var, ranked.reshape(-1)])
    layout = tuple((stat, seg)
                   for stat in ["mean", "var",
                                *[f"top{j + 1}" for j in range(ordinal_k)]]
                   for seg in feat.layout)
    return TrackVector(values, "music", layout)
