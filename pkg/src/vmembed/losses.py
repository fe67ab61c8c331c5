"""Bidirectional ranking loss with top-Q violation mining, plus the
soft intra-modal structure terms.

The intra coefficient compares the ordering of a triplet before and
after embedding.  In `corrected` mode (default) the summand is

    (sign(pre gap) - sign(embedded gap)) * (s_ij - s_ik),

with gap = similarity(i,k) - similarity(i,j): non-negative, and zero
exactly when the embedded ordering agrees with the pre-embedding one,
so descending the gradient preserves neighborhood structure.  `literal`
mode is its exact negation (sign terms evaluated embedded-first).  No
gradient flows through the sign terms.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import DimMismatch

_INTRA_MODES = ("corrected", "literal")


@dataclass(frozen=True)
class LossWeights:
    lambda1: float = 3.0
    lambda2: float = 1.0
    lambda3: float = 1.0
    lambda4: float = 1.0
    margin_e: float = 0.2
    top_q: int = 128
    intra_samples_t: Optional[int] = None  # None -> 10 * batch size
    intra_mode: str = "corrected"

    def __post_init__(self):
        for name in ("lambda1", "lambda2", "lambda3", "lambda4"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")
        if self.margin_e < 0:
            raise ValueError("margin_e must be non-negative")
        if self.top_q < 1:
            raise ValueError("top_q must be positive")
        if self.intra_samples_t is not None and self.intra_samples_t < 0:
            raise ValueError("intra_samples_t must be non-negative")
        if self.intra_mode not in _INTRA_MODES:
            raise ValueError(f"intra_mode must be one of {_INTRA_MODES}")


@dataclass(frozen=True)
class TripletSet:
    """Mined inter-modal pairs and sampled intra-modal triples."""

    inter_vm: tuple[tuple[int, int], ...] = ()
    inter_mv: tuple[tuple[int, int], ...] = ()
    intra_v: np.ndarray = None  # (T, 3) int arrays, rows (i, j, k)
    intra_m: np.ndarray = None

    def __post_init__(self):
        for field in ("intra_v", "intra_m"):
            arr = getattr(self, field)
            if arr is None:
                arr = np.zeros((0, 3), dtype=np.int64)
            else:
                arr = np.asarray(arr, dtype=np.int64).reshape(-1, 3)
            object.__setattr__(self, field, arr)


@dataclass(frozen=True)
class PrePostBatch:
    """Aligned pre- and post-embedding batches; row i of each matrix
    comes from the same video--music pair."""

    v: np.ndarray       # N × embed, unit rows
    m: np.ndarray       # N × embed, unit rows
    v_pre: np.ndarray   # N × d_v track vectors
    m_pre: np.ndarray   # N × d_m track vectors

    def __post_init__(self):
        arrays = {k: np.atleast_2d(np.asarray(getattr(self, k), dtype=np.float64))
                  for k in ("v", "m", "v_pre", "m_pre")}
        n = arrays["v"].shape[0]
        for k, a in arrays.items():
            if a.shape[0] != n:
                raise DimMismatch(f"{k} has {a.shape[0]} rows, expected {n}")
            object.__setattr__(self, k, a)
        if arrays["v"].shape[1] != arrays["m"].shape[1]:
            raise DimMismatch("v and m embedding dims differ")

    @property
    def size(self) -> int:
        return self.v.shape[0]


def similarity_matrix(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Cosine similarities of pre-normalized rows: S[i, j] = a_i . b_j."""
    a = np.atleast_2d(np.asarray(a, dtype=np.float64))
    b = np.atleast_2d(np.asarray(b, dtype=np.float64))
    if a.shape[1] != b.shape[1]:
        raise DimMismatch(f"dims differ: {a.shape[1]} vs {b.shape[1]}")
    for name, x in (("a", a), ("b", b)):
        norms = np.linalg.norm(x, axis=1)
        if np.any(np.abs(norms - 1.0) > 1e-5):
            raise ValueError(f"{name} rows must be unit-norm within 1e-5")
    return a @ b.T


def mine_top_q_violations(s: np.ndarray, margin_e: float, top_q: int,
                          direction: str) -> list[tuple[int, int]]:
    """Strictly positive hinge violations, largest first, at most top_q.

    `video_anchor` scores S[i, j] - S[i, i] + e; `music_anchor` scores
    the transpose.  Ties order by (i, j).
    """
    if direction == "video_anchor":
        x = s
    elif direction == "music_anchor":
        x = s.T
    else:
        raise ValueError(f"unknown direction {direction!r}")
    n = x.shape[0]
    scores = x - np.diag(x)[:, None] + margin_e
    np.fill_diagonal(scores, -np.inf)
    ii, jj = np.nonzero(scores > 0)
    if ii.size == 0:
        return []
    vals = scores[ii, jj]
    order = np.lexsort((jj, ii, -vals))[:top_q]
    return [(int(ii[k]), int(jj[k])) for k in order]


def inter_modal_loss(s: np.ndarray, pairs_vm, pairs_mv,
                     weights: LossWeights) -> tuple[float, np.ndarray]:
    """Hinge ranking terms over mined pairs; returns (loss, dLoss/dS)."""
    e = weights.margin_e
    ds = np.zeros_like(s)
    loss = 0.0
    for i, j in pairs_vm:
        term = s[i, j] - s[i, i] + e
        if term > 0:
            loss += weights.lambda1 * term
            ds[i, j] += weights.lambda1
            ds[i, i] -= weights.lambda1
    for i, j in pairs_mv:
        term = s[j, i] - s[i, i] + e
        if term > 0:
            loss += weights.lambda2 * term
            ds[j, i] += weights.lambda2
            ds[i, i] -= weights.lambda2
    return loss, ds


def inter_components(s: np.ndarray, pairs_vm, pairs_mv,
                     weights: LossWeights) -> tuple[float, float]:
    """Per-direction hinge sums (diagnostics)."""
    e = weights.margin_e
    vm = sum(max(0.0, s[i, j] - s[i, i] + e) for i, j in pairs_vm)
    mv = sum(max(0.0, s[j, i] - s[i, i] + e) for i, j in pairs_mv)
    return weights.lambda1 * vm, weights.lambda2 * mv


def structure_coefficient(x_i, x_j, x_k, pre_i, pre_j, pre_k,
                          mode: str = "corrected") -> int:
    """Order-disagreement coefficient in {-2, -1, 0, 1, 2}.

    Gaps are similarity(i,k) - similarity(i,j); pre-embedding vectors
    are compared by cosine (normalized here), embedded ones by dot
    product (already unit).
    """
    if mode not in _INTRA_MODES:
        raise ValueError(f"mode must be one of {_INTRA_MODES}")
    x_i, x_j, x_k = (np.asarray(v, dtype=np.float64) for v in (x_i, x_j, x_k))

    def unit(v):
        v = np.asarray(v, dtype=np.float64)
        n = np.linalg.norm(v)
        return v / n if n > 0 else v

    emb_gap = float(x_i @ x_k - x_i @ x_j)
    p_i, p_j, p_k = unit(pre_i), unit(pre_j), unit(pre_k)
    pre_gap = float(p_i @ p_k - p_i @ p_j)
    if mode == "literal":
        return int(np.sign(emb_gap) - np.sign(pre_gap))
    return int(np.sign(pre_gap) - np.sign(emb_gap))


def _intra_terms(x: np.ndarray, pre: np.ndarray, triples: np.ndarray,
                 lam: float, mode: str) -> tuple[float, np.ndarray]:
    """Vectorized intra loss for one modality; coefficient is constant
    under differentiation."""
    dx = np.zeros_like(x)
    if triples.shape[0] == 0 or lam == 0:
        return 0.0, dx
    i, j, k = triples[:, 0], triples[:, 1], triples[:, 2]
    s_ij = np.sum(x[i] * x[j], axis=1)
    s_ik = np.sum(x[i] * x[k], axis=1)
    norms = np.linalg.norm(pre, axis=1, keepdims=True)
    pn = np.divide(pre, norms, out=np.zeros_like(pre), where=norms > 0)
    c_ij = np.sum(pn[i] * pn[j], axis=1)
    c_ik = np.sum(pn[i] * pn[k], axis=1)
    sign_emb = np.sign(s_ik - s_ij)
    sign_pre = np.sign(c_ik - c_ij)
    coef = (sign_pre - sign_emb if mode == "corrected"
            else sign_emb - sign_pre)
    loss = lam * float(np.sum(coef * (s_ij - s_ik)))
    w = (lam * coef)[:, None]
    np.add.at(dx, i, w * (x[j] - x[k]))
    np.add.at(dx, j, w * x[i])
    np.add.at(dx, k, -w * x[i])
    return loss, dx


def soft_intra_loss(batch: PrePostBatch, triplets: TripletSet,
                    weights: LossWeights
                    ) -> tuple[float, np.ndarray, np.ndarray]:
    """Structure terms for both modalities; returns (loss, dV, dM)."""
    lv, dv = _intra_terms(batch.v, batch.v_pre, triplets.intra_v,
                          weights.lambda3, weights.intra_mode)
    lm, dm = _intra_terms(batch.m, batch.m_pre, triplets.intra_m,
                          weights.lambda4, weights.intra_mode)
    return lv + lm, dv, dm


def sample_triplets(n: int, count: int, seed, tag: int) -> np.ndarray:
    """`count` uniformly sampled (i, j, k) with pairwise-distinct
    entries; deterministic given (seed, tag)."""
    if n < 3 or count <= 0:
        return np.zeros((0, 3), dtype=np.int64)
    rng = np.random.default_rng((seed, 101, tag))
    rows = []
    have = 0
    while have < count:
        draw = rng.integers(0, n, size=(2 * (count - have) + 8, 3))
        ok = ((draw[:, 0] != draw[:, 1]) & (draw[:, 0] != draw[:, 2])
              & (draw[:, 1] != draw[:, 2]))
        good = draw[ok]
        rows.append(good)
        have += good.shape[0]
    return np.concatenate(rows, axis=0)[:count].astype(np.int64)


def total_loss(batch: PrePostBatch, weights: LossWeights, seed=0
               ) -> tuple[float, np.ndarray, np.ndarray, dict]:
    """Inter (mined) + intra (sampled) loss and embedding gradients."""
    n = batch.size
    s = similarity_matrix(batch.v, batch.m)
    pairs_vm = mine_top_q_violations(s, weights.margin_e, weights.top_q,
                                     "video_anchor")
    pairs_mv = mine_top_q_violations(s, weights.margin_e, weights.top_q,
                                     "music_anchor")
    inter, ds = inter_modal_loss(s, pairs_vm, pairs_mv, weights)
    dv = ds @ batch.m
    dm = ds.T @ batch.v

    t = weights.intra_samples_t
    count = 10 * n if t is None else t
    triplets = TripletSet(
        inter_vm=tuple(pairs_vm), inter_mv=tuple(pairs_mv),
        intra_v=sample_triplets(n, count, seed, 0),
        intra_m=sample_triplets(n, count, seed, 1))
    lv, dv_i = _intra_terms(batch.v, batch.v_pre, triplets.intra_v,
                            weights.lambda3, weights.intra_mode)
    lm, dm_i = _intra_terms(batch.m, batch.m_pre, triplets.intra_m,
                            weights.lambda4, weights.intra_mode)
    inter_vm, inter_mv = inter_components(s, pairs_vm, pairs_mv, weights)
    total = inter + lv + lm
    diagnostics = {"inter_vm": inter_vm, "inter_mv": inter_mv,
                   "intra_v": lv, "intra_m": lm,
                   "violations_vm": len(pairs_vm),
                   "violations_mv": len(pairs_mv),
                   "total": total}
    return total, dv + dv_i, dm + dm_i, diagnostics
