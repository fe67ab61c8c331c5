"""Shared feature containers: frame matrices, track vectors, layouts."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .errors import NonFiniteInput, ShapeMismatch


class LayoutSegment(NamedTuple):
    """One contiguous block of feature columns."""

    feature: str
    component: str  # harmonic | percussive | none
    dim: int


@dataclass(frozen=True)
class FrameFeatureMatrix:
    """frames × feature_dim matrix with a column layout record."""

    rows: np.ndarray
    layout: tuple[LayoutSegment, ...]

    def __post_init__(self):
        r = np.asarray(self.rows, dtype=np.float64)
        if r.ndim != 2:
            raise ShapeMismatch(f"rows must be 2-D, got shape {r.shape}")
        if not np.all(np.isfinite(r)):
            raise NonFiniteInput("frame features contain NaN or Inf")
        total = sum(seg.dim for seg in self.layout)
        if total != r.shape[1]:
            raise ShapeMismatch(
                f"layout dims sum to {total} but matrix has {r.shape[1]} columns")
        object.__setattr__(self, "rows", r)
        object.__setattr__(self, "layout", tuple(self.layout))

    @property
    def frames(self) -> int:
        return self.rows.shape[0]

    @property
    def feature_dim(self) -> int:
        return self.rows.shape[1]

    def segment(self, feature: str, component: str | None = None) -> np.ndarray:
        """Columns of one named segment (first match)."""
        start = 0
        for seg in self.layout:
            if seg.feature == feature and (component is None
                                           or seg.component == component):
                return self.rows[:, start:start + seg.dim]
            start += seg.dim
        raise KeyError(f"no segment {feature!r}/{component!r} in layout")


def single_segment(rows: np.ndarray, feature: str,
                   component: str = "none") -> FrameFeatureMatrix:
    rows = np.atleast_2d(np.asarray(rows, dtype=np.float64))
    return FrameFeatureMatrix(rows, (LayoutSegment(feature, component,
                                                   rows.shape[1]),))


@dataclass(frozen=True)
class TrackVector:
    """One aggregated track: flat vector plus (statistic, segment) layout."""

    values: np.ndarray
    source: str  # music | video
    layout: tuple[tuple[str, LayoutSegment], ...] = field(default=())

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64).reshape(-1)
        if not np.all(np.isfinite(v)):
            raise NonFiniteInput("track vector contains NaN or Inf")
        if self.source not in ("music", "video"):
            raise ValueError(f"source must be music or video, got {self.source!r}")
        if self.layout:
            total = sum(seg.dim for _, seg in self.layout)
            if total != v.shape[0]:
                raise ShapeMismatch(
                    f"aggregation layout sums to {total}, vector has {v.shape[0]}")
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "layout", tuple(self.layout))

    @property
    def dim(self) -> int:
        return self.values.shape[0]
