"""Two-branch fully connected embedding network.

Each branch maps a TrackVector to a shared embedding space: hidden
layers are affine + ReLU (with inverted dropout in train mode), the
final layer is affine -> batch norm -> L2 row normalization, with no
ReLU so embeddings cover the whole sphere.  Gradients are computed by
hand in reverse mode; the optimizer is bias-corrected ADAM.

Everything is float64 and functional: adam_step returns a fresh
NetworkParams, which also invalidates any ForwardCache taken against
the old one (backward checks identity).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import formats
from .errors import (CorruptCheckpoint, DimMismatch, NonFiniteActivation,
                     ShapeMismatch, StaleCache)

BN_EPS = 1e-8
BN_MOMENTUM = 0.99
_NORM_FLOOR = 1e-12

BRANCHES = ("video", "music")


@dataclass(frozen=True)
class BranchConfig:
    """layer_dims runs input -> hidden... -> embedding."""

    layer_dims: tuple[int, ...]
    dropout_keep: float = 0.9
    use_batch_norm_final: bool = True

    def __post_init__(self):
        dims = tuple(int(d) for d in self.layer_dims)
        if len(dims) < 2:
            raise ValueError("need at least one layer (two dims)")
        if any(d <= 0 for d in dims):
            raise ValueError(f"layer dims must be positive: {dims}")
        if not 0 < self.dropout_keep <= 1:
            raise ValueError(
                f"dropout_keep must lie in (0, 1], got {self.dropout_keep}")
        object.__setattr__(self, "layer_dims", dims)

    @property
    def n_layers(self) -> int:
        return len(self.layer_dims) - 1

    @property
    def embed_dim(self) -> int:
        return self.layer_dims[-1]


@dataclass(frozen=True)
class NetworkParams:
    """Named tensors for both branches, including BN running stats.

    Tensor names: `<branch>.w<i>`, `<branch>.b<i>` per layer, and
    `<branch>.bn_gamma|bn_beta|bn_mean|bn_var` for the final batch
    norm.  Running statistics are state, not trainable parameters;
    train-mode forward updates them in place.
    """

    video_cfg: BranchConfig
    music_cfg: BranchConfig
    tensors: dict[str, np.ndarray]

    def config(self, branch: str) -> BranchConfig:
        if branch == "video":
            return self.video_cfg
        if branch == "music":
            return self.music_cfg
        raise ValueError(f"unknown branch {branch!r}")

    def trainable_names(self) -> list[str]:
        return [n for n in self.tensors
                if not (n.endswith("bn_mean") or n.endswith("bn_var"))]


def init_params(video_cfg: BranchConfig, music_cfg: BranchConfig,
                seed: int = 0) -> NetworkParams:
    """Glorot-uniform weights, zero biases, identity batch norm."""
    if video_cfg.embed_dim != music_cfg.embed_dim:
        raise DimMismatch(
            f"embedding dims differ: video {video_cfg.embed_dim}, "
            f"music {music_cfg.embed_dim}")
    rng = np.random.default_rng(seed)
    tensors: dict[str, np.ndarray] = {}
    for branch, cfg in (("video", video_cfg), ("music", music_cfg)):
        dims = cfg.layer_dims
        for i in range(cfg.n_layers):
            fan_in, fan_out = dims[i], dims[i + 1]
            a = np.sqrt(6.0 / (fan_in + fan_out))
            tensors[f"{branch}.w{i}"] = rng.uniform(-a, a, (fan_in, fan_out))
            tensors[f"{branch}.b{i}"] = np.zeros(fan_out)
        d = cfg.embed_dim
        tensors[f"{branch}.bn_gamma"] = np.ones(d)
        tensors[f"{branch}.bn_beta"] = np.zeros(d)
        tensors[f"{branch}.bn_mean"] = np.zeros(d)
        tensors[f"{branch}.bn_var"] = np.ones(d)
    return NetworkParams(video_cfg, music_cfg, tensors)


@dataclass
class ForwardCache:
    """Intermediates of one train-mode pass, consumed by backward."""

    params: NetworkParams
    branch: str
    mode: str
    x: np.ndarray
    zs: list[np.ndarray] = field(default_factory=list)
    acts: list[np.ndarray] = field(default_factory=list)
    masks: list[Optional[np.ndarray]] = field(default_factory=list)
    bn: dict = field(default_factory=dict)
    norm: Optional[np.ndarray] = None
    out: Optional[np.ndarray] = None


def forward(params: NetworkParams, branch: str, batch: np.ndarray,
            mode: str = "eval", seed: int | None = None
            ) -> tuple[np.ndarray, ForwardCache]:
    """Embed a batch; returns unit-norm rows and the backward cache."""
    if mode not in ("train", "eval"):
        raise ValueError(f"mode must be train or eval, got {mode!r}")
    cfg = params.config(branch)
    x = np.atleast_2d(np.asarray(batch, dtype=np.float64))
    if x.shape[1] != cfg.layer_dims[0]:
        raise DimMismatch(
            f"{branch} input dim {x.shape[1]}, expected {cfg.layer_dims[0]}")
    t = params.tensors
    cache = ForwardCache(params, branch, mode, x)
    rng = (np.random.default_rng((0 if seed is None else seed, 7))
           if mode == "train" and cfg.dropout_keep < 1 else None)

    h = x
    for i in range(cfg.n_layers - 1):
        z = h @ t[f"{branch}.w{i}"] + t[f"{branch}.b{i}"]
        a = np.maximum(z, 0.0)
        mask = None
        if rng is not None:
            keep = cfg.dropout_keep
            mask = (rng.random(a.shape) < keep) / keep  # inverted dropout
            a = a * mask
        cache.zs.append(z)
        cache.acts.append(a)
        cache.masks.append(mask)
        h = a

    i = cfg.n_layers - 1
    z = h @ t[f"{branch}.w{i}"] + t[f"{branch}.b{i}"]
    cache.zs.append(z)

    if cfg.use_batch_norm_final:
        gamma = t[f"{branch}.bn_gamma"]
        beta = t[f"{branch}.bn_beta"]
        if mode == "train":
            mu = z.mean(axis=0)
            var = z.var(axis=0)
            if not (np.all(np.isfinite(mu)) and np.all(np.isfinite(var))):
                # refuse to poison the running stats with a diverged batch
                raise NonFiniteActivation(
                    f"{branch} batch statistics are not finite")
            # momentum update of running statistics (in place)
            t[f"{branch}.bn_mean"][...] = (BN_MOMENTUM * t[f"{branch}.bn_mean"]
                                           + (1 - BN_MOMENTUM) * mu)
            t[f"{branch}.bn_var"][...] = (BN_MOMENTUM * t[f"{branch}.bn_var"]
                                          + (1 - BN_MOMENTUM) * var)
        else:
            mu = t[f"{branch}.bn_mean"]
            var = t[f"{branch}.bn_var"]
        ivstd = 1.0 / np.sqrt(var + BN_EPS)
        xhat = (z - mu) * ivstd
        y = gamma * xhat + beta
        cache.bn = {"mu": mu, "var": var, "ivstd": ivstd, "xhat": xhat}
    else:
        y = z

    norm = np.linalg.norm(y, axis=1)
    if not np.all(np.isfinite(norm)):
        # finite y can still overflow the norm; treat it as divergence
        raise NonFiniteActivation(f"{branch} forward norm overflowed")
    safe = np.maximum(norm, _NORM_FLOOR)
    out = np.where((norm > _NORM_FLOOR)[:, None], y / safe[:, None], 0.0)
    if not np.all(np.isfinite(out)):
        raise NonFiniteActivation(f"{branch} forward produced NaN/Inf")
    cache.norm = norm
    cache.out = out
    return out, cache


def backward(cache: ForwardCache, params: NetworkParams,
             grad_out: np.ndarray) -> dict[str, np.ndarray]:
    """Gradients of all trainable tensors for one branch.

    `grad_out` is dLoss/dEmbeddings for the batch that produced `cache`.
    """
    if cache.params is not params:
        raise StaleCache("cache was built against different parameters")
    if cache.mode != "train":
        raise StaleCache("backward needs a train-mode cache")
    branch = cache.branch
    cfg = params.config(branch)
    t = params.tensors
    grads: dict[str, np.ndarray] = {}
    g = np.asarray(grad_out, dtype=np.float64)

    # L2 row normalization: out = y / n
    y_norm = cache.norm
    live = y_norm > _NORM_FLOOR
    out = cache.out
    dot = np.sum(g * out, axis=1, keepdims=True)
    dy = np.where(live[:, None],
                  (g - out * dot) / np.maximum(y_norm, _NORM_FLOOR)[:, None],
                  0.0)

    if cfg.use_batch_norm_final:
        bn = cache.bn
        gamma = t[f"{branch}.bn_gamma"]
        xhat, ivstd = bn["xhat"], bn["ivstd"]
        n = xhat.shape[0]
        grads[f"{branch}.bn_gamma"] = np.sum(dy * xhat, axis=0)
        grads[f"{branch}.bn_beta"] = np.sum(dy, axis=0)
        dxhat = dy * gamma
        # batch-statistics BN backward
        dz = (ivstd / n) * (n * dxhat
                            - np.sum(dxhat, axis=0)
                            - xhat * np.sum(dxhat * xhat, axis=0))
    else:
        dz = dy

    last = cfg.n_layers - 1
    h_in = cache.acts[last - 1] if last > 0 else cache.x
    grads[f"{branch}.w{last}"] = h_in.T @ dz
    grads[f"{branch}.b{last}"] = dz.sum(axis=0)
    da = dz @ t[f"{branch}.w{last}"].T

    for i in range(last - 1, -1, -1):
        mask = cache.masks[i]
        if mask is not None:
            da = da * mask
        dz = da * (cache.zs[i] > 0)
        h_in = cache.acts[i - 1] if i > 0 else cache.x
        grads[f"{branch}.w{i}"] = h_in.T @ dz
        grads[f"{branch}.b{i}"] = dz.sum(axis=0)
        if i > 0:
            da = dz @ t[f"{branch}.w{i}"].T
    return grads


# ---------------------------------------------------------------------------
# ADAM
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class AdamState:
    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]
    t: int
    lr: float = 3e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


def init_adam(params: NetworkParams, lr: float = 3e-4, beta1: float = 0.9,
              beta2: float = 0.999, eps: float = 1e-8) -> AdamState:
    names = params.trainable_names()
    zeros = {n: np.zeros_like(params.tensors[n]) for n in names}
    return AdamState({n: z.copy() for n, z in zeros.items()},
                     zeros, 0, lr, beta1, beta2, eps)


def adam_step(params: NetworkParams, grads: dict[str, np.ndarray],
              state: AdamState) -> tuple[NetworkParams, AdamState]:
    """One bias-corrected update; unknown gradient names are rejected."""
    for name, g in grads.items():
        if name not in state.m:
            raise ShapeMismatch(f"gradient for unknown tensor {name!r}")
        if g.shape != params.tensors[name].shape:
            raise ShapeMismatch(
                f"{name}: grad shape {g.shape} != param {params.tensors[name].shape}")
    t = state.t + 1
    new_tensors = {}
    new_m = dict(state.m)
    new_v = dict(state.v)
    for name, value in params.tensors.items():
        if name in grads:
            g = grads[name]
            m = state.beta1 * state.m[name] + (1 - state.beta1) * g
            v = state.beta2 * state.v[name] + (1 - state.beta2) * g * g
            mhat = m / (1 - state.beta1 ** t)
            vhat = v / (1 - state.beta2 ** t)
            new_tensors[name] = value - state.lr * mhat / (np.sqrt(vhat) + state.eps)
            new_m[name] = m
            new_v[name] = v
        else:
            new_tensors[name] = value.copy()
    new_params = NetworkParams(params.video_cfg, params.music_cfg, new_tensors)
    new_state = AdamState(new_m, new_v, t, state.lr, state.beta1,
                          state.beta2, state.eps)
    return new_params, new_state


# ---------------------------------------------------------------------------
# Checkpointing
# ---------------------------------------------------------------------------

def _cfg_meta(cfg: BranchConfig) -> dict:
    return {"layer_dims": list(cfg.layer_dims),
            "dropout_keep": cfg.dropout_keep,
            "use_batch_norm_final": cfg.use_batch_norm_final}


def save_checkpoint(params: NetworkParams, state: AdamState,
                    path: str) -> None:
    meta = {"video_cfg": _cfg_meta(params.video_cfg),
            "music_cfg": _cfg_meta(params.music_cfg),
            "adam": {"t": state.t, "lr": state.lr, "beta1": state.beta1,
                     "beta2": state.beta2, "eps": state.eps}}
    tensors = dict(params.tensors)
    for name, m in state.m.items():
        tensors[f"adam.m.{name}"] = m
    for name, v in state.v.items():
        tensors[f"adam.v.{name}"] = v
    formats.write_vmck(path, meta, tensors)


def load_checkpoint(path: str) -> tuple[NetworkParams, AdamState]:
    meta, tensors = formats.read_vmck(path)
    try:
        video_cfg = BranchConfig(tuple(meta["video_cfg"]["layer_dims"]),
                                 meta["video_cfg"]["dropout_keep"],
                                 meta["video_cfg"]["use_batch_norm_final"])
        music_cfg = BranchConfig(tuple(meta["music_cfg"]["layer_dims"]),
                                 meta["music_cfg"]["dropout_keep"],
                                 meta["music_cfg"]["use_batch_norm_final"])
        adam = meta["adam"]
    except (KeyError, TypeError) as exc:
        raise CorruptCheckpoint(f"{path}: bad meta block ({exc})") from exc
    param_tensors = {}
    m: dict[str, np.ndarray] = {}
    v: dict[str, np.ndarray] = {}
    for name, value in tensors.items():
        if name.startswith("adam.m."):
            m[name[len("adam.m."):]] = value
        elif name.startswith("adam.v."):
            v[name[len("adam.v."):]] = value
        else:
            param_tensors[name] = value
    params = NetworkParams(video_cfg, music_cfg, param_tensors)
    state = AdamState(m, v, int(adam["t"]), float(adam["lr"]),
                      float(adam["beta1"]), float(adam["beta2"]),
                      float(adam["eps"]))
    return params, state
