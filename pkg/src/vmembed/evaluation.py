"""Retrieval evaluation: Recall@K, exact cosine ranking, the paired
machine-preference probe, and linear CCA/PCA baselines.

Ranking convention everywhere: descending similarity, ties broken by
ascending candidate index.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import video_pipeline
from .errors import DimMismatch, EmptyCorpus, NonFiniteInput, RankDeficient

DIRECTIONS = ("video_to_music", "music_to_video")


def recall_at_k(s: np.ndarray, k: int) -> float:
    """Percentage of rows whose diagonal entry ranks in the top k."""
    s = np.asarray(s, dtype=np.float64)
    n = s.shape[0]
    if s.shape[0] != s.shape[1]:
        raise DimMismatch(f"similarity matrix must be square, got {s.shape}")
    if not 1 <= k <= n:
        raise ValueError(f"k must lie in [1, {n}], got {k}")
    diag = np.diag(s)
    better = np.sum(s > diag[:, None], axis=1)
    idx = np.arange(n)
    earlier_tie = np.sum((s == diag[:, None]) & (idx[None, :] < idx[:, None]),
                         axis=1)
    ranks = 1 + better + earlier_tie
    return 100.0 * float(np.mean(ranks <= k))


@dataclass(frozen=True)
class RetrievalResult:
    query_id: str
    direction: str
    ranked: tuple[tuple[int, float], ...]  # (candidate index, similarity)
    rank_of_ground_truth: Optional[int] = None


def retrieve(query: np.ndarray, corpus: np.ndarray, top_k: int,
             query_id: str = "", direction: str = "video_to_music",
             ground_truth: Optional[int] = None) -> RetrievalResult:
    """Exact top-k by dot product (cosine for unit vectors)."""
    query = np.asarray(query, dtype=np.float64).reshape(-1)
    corpus = np.atleast_2d(np.asarray(corpus, dtype=np.float64))
    if corpus.shape[0] == 0:
        raise EmptyCorpus("retrieve needs a non-empty corpus")
    if corpus.shape[1] != query.shape[0]:
        raise DimMismatch(
            f"query dim {query.shape[0]}, corpus dim {corpus.shape[1]}")
    sims = corpus @ query
    n = sims.shape[0]
    order = np.lexsort((np.arange(n), -sims))
    top = order[:top_k]
    rank = None
    if ground_truth is not None:
        g = sims[ground_truth]
        rank = int(1 + np.sum(sims > g)
                   + np.sum((sims == g) & (np.arange(n) < ground_truth)))
    return RetrievalResult(query_id, direction,
                           tuple((int(i), float(sims[i])) for i in top), rank)


def machine_preference_gr(s: np.ndarray, trials: int, seed: int = 0) -> float:
    """Ground-truth-vs-random two-alternative preference, both directions.

    Each trial presents the true counterpart and a random distractor;
    the machine picks the higher similarity (ties split 0.5).
    """
    s = np.asarray(s, dtype=np.float64)
    if trials < 1:
        raise ValueError("trials must be >= 1")
    n = s.shape[0]
    if n < 2:
        raise ValueError("need at least 2 items for a distractor")
    rng = np.random.default_rng((seed, 9))
    wins = 0.0
    for x in (s, s.T):
        diag = np.diag(x)
        i = rng.integers(0, n, size=trials)
        j = (i + 1 + rng.integers(0, n - 1, size=trials)) % n
        gt = diag[i]
        distract = x[i, j]
        wins += np.sum(gt > distract) + 0.5 * np.sum(gt == distract)
    return 100.0 * wins / (2 * trials)


# ---------------------------------------------------------------------------
# CCA baseline
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CcaModel:
    mean_a: np.ndarray
    mean_b: np.ndarray
    proj_a: np.ndarray  # dim_a × c
    proj_b: np.ndarray  # dim_b × c
    correlations: np.ndarray  # length c, descending
    reg: float


def _inv_sqrt_psd(m: np.ndarray) -> np.ndarray:
    evals, evecs = np.linalg.eigh(m)
    evals = np.maximum(evals, 1e-14)
    return (evecs / np.sqrt(evals)[None, :]) @ evecs.T


def fit_cca(x: np.ndarray, y: np.ndarray, components: int,
            reg: float = 1e-4) -> CcaModel:
    """Regularized CCA via whitening + SVD of the cross-covariance.

    `reg` scales with mean variance (trace/dim), so the same value works
    across feature scales.
    """
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    y = np.atleast_2d(np.asarray(y, dtype=np.float64))
    if x.shape[0] != y.shape[0]:
        raise DimMismatch(f"row counts differ: {x.shape[0]} vs {y.shape[0]}")
    n = x.shape[0]
    if components < 1 or components > min(x.shape[1], y.shape[1]):
        raise ValueError("components must lie in [1, min(dims)]")
    if n <= components or n < 2:
        raise RankDeficient(f"{n} rows insufficient for {components} components")
    if reg <= 0:
        raise ValueError("reg must be positive")
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
        raise NonFiniteInput("CCA inputs contain NaN or Inf")

    mean_a = x.mean(axis=0)
    mean_b = y.mean(axis=0)
    xc = x - mean_a
    yc = y - mean_b
    sxx = xc.T @ xc / (n - 1)
    syy = yc.T @ yc / (n - 1)
    sxy = xc.T @ yc / (n - 1)
    sxx += reg * (np.trace(sxx) / sxx.shape[0]) * np.eye(sxx.shape[0])
    syy += reg * (np.trace(syy) / syy.shape[0]) * np.eye(syy.shape[0])
    wx = _inv_sqrt_psd(sxx)
    wy = _inv_sqrt_psd(syy)
    u, d, vt = np.linalg.svd(wx @ sxy @ wy)
    proj_a = wx @ u[:, :components]
    proj_b = wy @ vt.T[:, :components]
    # deterministic orientation, keeping paired columns consistent
    for c in range(components):
        k = np.argmax(np.abs(proj_a[:, c]))
        if proj_a[k, c] < 0:
            proj_a[:, c] = -proj_a[:, c]
            proj_b[:, c] = -proj_b[:, c]
    return CcaModel(mean_a, mean_b, proj_a, proj_b,
                    np.clip(d[:components], 0.0, 1.0), reg)


def apply_cca(model: CcaModel, x: np.ndarray, y: np.ndarray
              ) -> tuple[np.ndarray, np.ndarray]:
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    y = np.atleast_2d(np.asarray(y, dtype=np.float64))
    if x.shape[1] != model.proj_a.shape[0] or y.shape[1] != model.proj_b.shape[0]:
        raise DimMismatch("CCA apply: input dims do not match the model")
    return (x - model.mean_a) @ model.proj_a, (y - model.mean_b) @ model.proj_b


def cca_similarity(model: CcaModel, x: np.ndarray,
                   y: np.ndarray) -> np.ndarray:
    """Cosine similarity matrix in the shared canonical space."""
    xp, yp = apply_cca(model, x, y)
    return video_pipeline.l2_normalize(xp) @ video_pipeline.l2_normalize(yp).T


def pca_baseline(x: np.ndarray, y: np.ndarray, dim: int) -> np.ndarray:
    """Independent per-modality PCA + L2; no cross-modal alignment."""
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    y = np.atleast_2d(np.asarray(y, dtype=np.float64))
    px = video_pipeline.fit_pca(x, dim)
    py = video_pipeline.fit_pca(y, dim)
    xe = video_pipeline.l2_normalize(video_pipeline.apply_pca(px, x))
    ye = video_pipeline.l2_normalize(video_pipeline.apply_pca(py, y))
    return xe @ ye.T


def metrics_report(s: np.ndarray, seed: int = 0,
                   trials: int = 10000) -> dict:
    """The standard metrics JSON: R@{1,10,25} both ways + machine GR."""
    n = s.shape[0]
    report: dict = {"n": int(n), "seed": int(seed)}
    for name, mat in (("video_to_music", s), ("music_to_video", s.T)):
        report[name] = {f"R@{k}": recall_at_k(mat, k)
                        for k in (1, 10, 25) if k <= n}
    report["machine_gr"] = machine_preference_gr(s, trials, seed)
    return report
