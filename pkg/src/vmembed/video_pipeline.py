"""Video-side feature pipeline.

Per-frame vectors (from an external CNN, or synth_frame_features in
tests) go through: WPCA whitening at frame level, ordinal aggregation,
global mean subtraction, PCA, and L2 normalization.
"""

from __future__ import annotations

import warnings
import zlib
from dataclasses import dataclass

import numpy as np

from .datatypes import FrameFeatureMatrix, LayoutSegment, TrackVector, single_segment
from .errors import (DegenerateInputWarning, DimMismatch, EmptyCorpus,
                     NonFiniteInput, RankDeficient, TooFewFrames)


@dataclass(frozen=True)
class WpcaModel:
    """Whitening projection: x -> (x - mean) @ projection."""

    mean: np.ndarray
    projection: np.ndarray  # input_dim × out_dim, 1/sqrt(eigenvalue) scaled
    eps: float

    @property
    def in_dim(self) -> int:
        return self.projection.shape[0]

    @property
    def out_dim(self) -> int:
        return self.projection.shape[1]


@dataclass(frozen=True)
class PcaModel:
    """Orthonormal projection: x -> (x - mean) @ projection."""

    mean: np.ndarray
    projection: np.ndarray

    @property
    def in_dim(self) -> int:
        return self.projection.shape[0]

    @property
    def out_dim(self) -> int:
        return self.projection.shape[1]


@dataclass(frozen=True)
class GlobalNormalizer:
    mean: np.ndarray


def _top_eigvecs(data: np.ndarray, out_dim: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Mean, leading eigenvalues (descending), sign-fixed eigenvectors."""
    if not np.all(np.isfinite(data)):
        raise NonFiniteInput("fit data contains NaN or Inf")
    n, d = data.shape
    if out_dim > d:
        raise ValueError(f"out_dim {out_dim} exceeds input dim {d}")
    if n <= out_dim:
        raise RankDeficient(f"{n} samples insufficient for out_dim {out_dim}")
    mean = data.mean(axis=0)
    cov = np.cov(data, rowvar=False, ddof=1).reshape(d, d)
    evals, evecs = np.linalg.eigh(cov)
    order = np.argsort(evals)[::-1][:out_dim]
    evals = evals[order]
    evecs = evecs[:, order]
    # deterministic orientation: largest-|component| entry made positive
    for j in range(evecs.shape[1]):
        k = np.argmax(np.abs(evecs[:, j]))
        if evecs[k, j] < 0:
            evecs[:, j] = -evecs[:, j]
    return mean, evals, evecs


def fit_wpca(data: np.ndarray, out_dim: int, eps: float = 1e-8) -> WpcaModel:
    """Whitened PCA: projected training data is ~zero-mean, ~identity-cov."""
    data = np.asarray(data, dtype=np.float64)
    mean, evals, evecs = _top_eigvecs(data, out_dim)
    scale = 1.0 / np.sqrt(np.maximum(evals, 0.0) + eps)
    return WpcaModel(mean, evecs * scale[None, :], eps)


def apply_wpca(model: WpcaModel, feat: FrameFeatureMatrix | np.ndarray
               ) -> FrameFeatureMatrix:
    rows = feat.rows if isinstance(feat, FrameFeatureMatrix) else np.asarray(feat, dtype=np.float64)
    rows = np.atleast_2d(rows)
    if rows.shape[1] != model.in_dim:
        raise DimMismatch(
            f"rows have dim {rows.shape[1]}, model expects {model.in_dim}")
    return single_segment((rows - model.mean) @ model.projection, "wpca")


def fit_pca(corpus: np.ndarray, out_dim: int) -> PcaModel:
    corpus = np.asarray(corpus, dtype=np.float64)
    mean, _, evecs = _top_eigvecs(corpus, out_dim)
    return PcaModel(mean, evecs)


def apply_pca(model: PcaModel, vec: np.ndarray) -> np.ndarray:
    vec = np.asarray(vec, dtype=np.float64)
    if vec.shape[-1] != model.in_dim:
        raise DimMismatch(
            f"input dim {vec.shape[-1]}, model expects {model.in_dim}")
    return (vec - model.mean) @ model.projection


def aggregate_video_level(feat: FrameFeatureMatrix,
                          ordinal_k: int = 5) -> TrackVector:
    """Mean, population standard deviation, and top-k per dimension."""
    if ordinal_k < 1:
        raise ValueError(f"ordinal_k must be >= 1, got {ordinal_k}")
    rows = feat.rows
    if rows.shape[0] < ordinal_k:
        raise TooFewFrames(f"{rows.shape[0]} frames < ordinal_k {ordinal_k}")
    mean = rows.mean(axis=0)
    std = rows.std(axis=0)  # population
    ranked = np.sort(rows, axis=0)[::-1][:ordinal_k]
    values = np.concatenate([mean, std, ranked.reshape(-1)])
    layout = tuple((stat, seg)
                   for stat in ["mean", "std",
                                *[f"top{j + 1}" for j in range(ordinal_k)]]
                   for seg in feat.layout)
    return TrackVector(values, "video", layout)


def fit_global_normalizer(corpus: np.ndarray) -> GlobalNormalizer:
    corpus = np.atleast_2d(np.asarray(corpus, dtype=np.float64))
    if corpus.shape[0] == 0:
        raise EmptyCorpus("cannot fit a normalizer on zero vectors")
    return GlobalNormalizer(corpus.mean(axis=0))


def apply_global_normalizer(norm: GlobalNormalizer,
                            vec: np.ndarray) -> np.ndarray:
    vec = np.asarray(vec, dtype=np.float64)
    if vec.shape[-1] != norm.mean.shape[0]:
        raise DimMismatch(
            f"input dim {vec.shape[-1]}, normalizer has {norm.mean.shape[0]}")
    return vec - norm.mean


def l2_normalize(vec: np.ndarray) -> np.ndarray:
    """Unit norm; the zero vector stays zero (with a warning)."""
    vec = np.asarray(vec, dtype=np.float64)
    norm = np.linalg.norm(vec, axis=-1, keepdims=vec.ndim > 1)
    if np.any(norm == 0):
        warnings.warn("zero vector passed to l2_normalize",
                      DegenerateInputWarning, stacklevel=2)
    if vec.ndim == 1:
        return vec / norm if norm > 0 else vec.copy()
    safe = np.where(norm > 0, norm, 1.0)
    return vec / safe


def synth_frame_features(track_id, latent: np.ndarray, frames: int,
                         dim: int, noise_scale: float,
                         seed: int) -> FrameFeatureMatrix:
    """Deterministic stand-in for CNN frame features.

    All tracks under one seed share a fixed linear map A; per-frame
    noise is keyed by (seed, track_id), so regenerating any track is
    reproducible in isolation.
    """
    latent = np.asarray(latent, dtype=np.float64).reshape(-1)
    if frames < 1 or dim < 1:
        raise ValueError("frames and dim must be positive")
    map_rng = np.random.default_rng(np.random.SeedSequence([seed, 0x5A]))
    a = map_rng.standard_normal((dim, latent.shape[0])) / np.sqrt(latent.shape[0])
    track_key = zlib.crc32(str(track_id).encode("utf-8"))
    noise_rng = np.random.default_rng(np.random.SeedSequence([seed, 0xF0, track_key]))
    rows = (latent @ a.T)[None, :] + noise_scale * noise_rng.standard_normal((frames, dim))
    return single_segment(rows, "synth", "none")


# ---------------------------------------------------------------------------
# Fitted bundle + persistence
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class VideoModels:
    wpca: WpcaModel
    normalizer: GlobalNormalizer
    pca: PcaModel
    ordinal_k: int = 5


def fit_video_models(frame_mats: list[FrameFeatureMatrix], wpca_dim: int,
                     pca_dim: int, ordinal_k: int = 5,
                     eps: float = 1e-8) -> VideoModels:
    """Fit the full pipeline on a corpus of per-track frame matrices."""
    if not frame_mats:
        raise EmptyCorpus("no frame matrices to fit on")
    stacked = np.concatenate([m.rows for m in frame_mats], axis=0)
    wpca = fit_wpca(stacked, wpca_dim, eps)
    aggregated = np.stack([
        aggregate_video_level(apply_wpca(wpca, m), ordinal_k).values
        for m in frame_mats])
    normalizer = fit_global_normalizer(aggregated)
    pca = fit_pca(aggregated - normalizer.mean, pca_dim)
    return VideoModels(wpca, normalizer, pca, ordinal_k)


def video_track_vector(feat: FrameFeatureMatrix,
                       models: VideoModels) -> TrackVector:
    """Frame matrix -> final L2-normalized video TrackVector."""
    agg = aggregate_video_level(apply_wpca(models.wpca, feat),
                                models.ordinal_k)
    centered = apply_global_normalizer(models.normalizer, agg.values)
    projected = apply_pca(models.pca, centered)
    return TrackVector(l2_normalize(projected), "video")


def save_video_models(path: str, models: VideoModels) -> None:
    from . import formats
    formats.write_vmpm(path, {
        "wpca.mean": models.wpca.mean[None, :],
        "wpca.projection": models.wpca.projection,
        "wpca.eps": np.array([[models.wpca.eps]]),
        "gnorm.mean": models.normalizer.mean[None, :],
        "pca.mean": models.pca.mean[None, :],
        "pca.projection": models.pca.projection,
        "ordinal_k": np.array([[models.ordinal_k]]),
    })


def load_video_models(path: str) -> VideoModels:
    from . import formats
    m = formats.read_vmpm(path)
    try:
        wpca = WpcaModel(m["wpca.mean"][0], m["wpca.projection"],
                         float(m["wpca.eps"][0, 0]))
        normalizer = GlobalNormalizer(m["gnorm.mean"][0])
        pca = PcaModel(m["pca.mean"][0], m["pca.projection"])
        k = int(round(float(m["ordinal_k"][0, 0])))
    except KeyError as exc:
        from .errors import CorruptFile
        raise CorruptFile(f"{path}: missing model matrix {exc}") from exc
    return VideoModels(wpca, normalizer, pca, k)
