"""Training loop over paired TrackVectors, plus manifest handling and
the synthetic corpus generator used for desk-scale experiments.

Determinism contract: (config, manifest, seed) fully determine the loss
trace and checkpoint bytes.  Every stochastic element (shuffles,
dropout masks, intra-triplet sampling) draws from a seed derived as
seed * 1_000_003 + step, so runs are reproducible and resumable.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field, replace

import numpy as np

from . import formats, losses, network
from .errors import (BatchTooLarge, DimMismatch, DuplicatePairId,
                     MissingFile, NonFiniteActivation, NonFiniteLoss,
                     SchemaError)
from .evaluation import recall_at_k
from .losses import LossWeights, PrePostBatch, total_loss
from .network import AdamState, BranchConfig, NetworkParams

SPLITS = ("train", "val", "test")


# ---------------------------------------------------------------------------
# Manifest
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ManifestEntry:
    pair_id: str
    video: str
    music: str
    split: str


@dataclass(frozen=True)
class PairManifest:
    entries: tuple[ManifestEntry, ...]

    def split(self, name: str) -> list[ManifestEntry]:
        return [e for e in self.entries if e.split == name]

    def split_sizes(self) -> dict[str, int]:
        return {s: len(self.split(s)) for s in SPLITS}


def load_manifest(path: str) -> PairManifest:
    """Parse and validate a JSON-lines manifest.

    Feature dimensions are checked later, when batches are first built;
    here we validate schema, uniqueness, and file existence.
    """
    entries: list[ManifestEntry] = []
    seen: set[str] = set()
    base = os.path.dirname(os.path.abspath(path))
    with open(path, "r", encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise SchemaError(f"{path}:{lineno}: not JSON ({exc})") from exc
            if not isinstance(obj, dict):
                raise SchemaError(f"{path}:{lineno}: expected an object")
            missing = {"pair_id", "video", "music", "split"} - obj.keys()
            if missing:
                raise SchemaError(
                    f"{path}:{lineno}: missing keys {sorted(missing)}")
            if obj["split"] not in SPLITS:
                raise SchemaError(
                    f"{path}:{lineno}: bad split {obj['split']!r}")
            pid = str(obj["pair_id"])
            if pid in seen:
                raise DuplicatePairId(f"{path}:{lineno}: pair_id {pid!r}")
            seen.add(pid)
            video = obj["video"]
            music = obj["music"]
            # relative paths resolve against the manifest's directory
            if not os.path.isabs(video):
                video = os.path.join(base, video)
            if not os.path.isabs(music):
                music = os.path.join(base, music)
            for p in (video, music):
                if not os.path.exists(p):
                    raise MissingFile(f"{path}:{lineno}: {p} does not exist")
            entries.append(ManifestEntry(pid, video, music, obj["split"]))
    if not entries:
        raise SchemaError(f"{path}: zero entries")
    return PairManifest(tuple(entries))


def save_manifest(path: str, manifest: PairManifest) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for e in manifest.entries:
            f.write(json.dumps({"pair_id": e.pair_id, "video": e.video,
                                "music": e.music, "split": e.split}) + "\n")


def build_batches(manifest: PairManifest, split: str, n: int, seed: int,
                  epoch: int) -> list[np.ndarray]:
    """Seeded shuffle of split indices, chopped into full batches."""
    size = len(manifest.split(split))
    if n > size:
        raise BatchTooLarge(f"batch {n} exceeds split {split!r} size {size}")
    rng = np.random.default_rng((seed, 3, epoch))
    order = rng.permutation(size)
    count = size // n
    return [order[b * n:(b + 1) * n] for b in range(count)]


def load_split_features(manifest: PairManifest, split: str
                        ) -> tuple[np.ndarray, np.ndarray, list[str]]:
    """Stack all TrackVectors of one split; checks dim consistency."""
    entries = manifest.split(split)
    videos, musics, ids = [], [], []
    for e in entries:
        v = formats.read_vmnf(e.video)
        m = formats.read_vmnf(e.music)
        if v.shape[0] != 1 or m.shape[0] != 1:
            raise DimMismatch(
                f"{e.pair_id}: track vectors must be 1×D, got "
                f"{v.shape} / {m.shape}")
        videos.append(v[0])
        musics.append(m[0])
        ids.append(e.pair_id)
    v_arr = np.stack(videos) if videos else np.zeros((0, 0))
    m_arr = np.stack(musics) if musics else np.zeros((0, 0))
    return v_arr, m_arr, ids


# ---------------------------------------------------------------------------
# Config / result
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 256
    epochs: int = 30
    seed: int = 0
    learning_rate: float = 3e-4
    weights: LossWeights = field(default_factory=LossWeights)
    video_layers: tuple[int, ...] = (256, 64)   # hidden..embed, input prepended
    music_layers: tuple[int, ...] = (256, 128, 64)
    dropout_keep: float = 0.9
    eval_every: int = 1  # epochs between validation R@10 checks

    def __post_init__(self):
        if self.batch_size < 4:
            raise ValueError("batch_size must be >= 4 (triplets need 3 "
                             "distinct indices)")
        if self.epochs < 0 or self.eval_every < 1:
            raise ValueError("epochs must be >= 0 and eval_every >= 1")
        if self.video_layers[-1] != self.music_layers[-1]:
            raise ValueError("branch embedding dims must match")


@dataclass
class TrainResult:
    params: NetworkParams          # best-validation checkpoint
    state: AdamState
    trace: list[dict]              # one record per step
    val_history: list[tuple[int, float]]  # (epoch, mean R@10)
    best_epoch: int
    aborted: bool = False
    final_params: NetworkParams | None = None
    final_state: AdamState | None = None


def _step_seed(seed: int, step: int) -> int:
    return seed * 1_000_003 + step


def write_trace(path: str, trace: list[dict]) -> None:
    with open(path, "w", encoding="utf-8", newline="") as f:
        f.write("step,inter_vm,inter_mv,intra_v,intra_m,total\n")
        for rec in trace:
            f.write("{step},{inter_vm:.10g},{inter_mv:.10g},"
                    "{intra_v:.10g},{intra_m:.10g},{total:.10g}\n"
                    .format(**rec))


def _validation_r10(params: NetworkParams, videos: np.ndarray,
                    musics: np.ndarray) -> float:
    emb_v, _ = network.forward(params, "video", videos, "eval")
    emb_m, _ = network.forward(params, "music", musics, "eval")
    s = emb_v @ emb_m.T
    k = min(10, s.shape[0])
    return 0.5 * (recall_at_k(s, k) + recall_at_k(s.T, k))


def train(config: TrainConfig, manifest: PairManifest,
          init: tuple[NetworkParams, AdamState] | None = None) -> TrainResult:
    """Full training run with best-validation checkpoint selection.

    A NonFiniteLoss mid-run aborts and returns the last good
    checkpoint with `aborted=True`.
    """
    videos, musics, _ = load_split_features(manifest, "train")
    val_v, val_m, _ = load_split_features(manifest, "val")
    if videos.shape[0] == 0:
        raise SchemaError("manifest has no train split")

    if init is not None:
        params, state = init
    else:
        video_cfg = BranchConfig((videos.shape[1], *config.video_layers),
                                 config.dropout_keep)
        music_cfg = BranchConfig((musics.shape[1], *config.music_layers),
                                 config.dropout_keep)
        params = network.init_params(video_cfg, music_cfg, config.seed)
        state = network.init_adam(params, lr=config.learning_rate)

    trace: list[dict] = []
    val_history: list[tuple[int, float]] = []
    best = (params, state)
    best_r10 = -1.0
    best_epoch = -1
    step = 0
    aborted = False

    for epoch in range(config.epochs):
        for idx in build_batches(manifest, "train", config.batch_size,
                                 config.seed, epoch):
            sseed = _step_seed(config.seed, step)
            vb, mb = videos[idx], musics[idx]
            try:
                emb_v, cache_v = network.forward(params, "video", vb,
                                                 "train", sseed)
                emb_m, cache_m = network.forward(params, "music", mb,
                                                 "train", sseed + 1)
                batch = PrePostBatch(emb_v, emb_m, vb, mb)
                loss, dv, dm, diag = total_loss(batch, config.weights,
                                                seed=sseed)
                if not np.isfinite(loss):
                    raise NonFiniteLoss(f"step {step}: loss {loss}")
            except (NonFiniteLoss, NonFiniteActivation):
                aborted = True
                break
            trace.append({"step": step, **{k: diag[k] for k in
                                           ("inter_vm", "inter_mv",
                                            "intra_v", "intra_m", "total")}})
            grads = network.backward(cache_v, params, dv)
            grads.update(network.backward(cache_m, params, dm))
            params, state = network.adam_step(params, grads, state)
            step += 1
        if aborted:
            break
        if (epoch + 1) % config.eval_every == 0 and val_v.shape[0] > 0:
            r10 = _validation_r10(params, val_v, val_m)
            val_history.append((epoch, r10))
            if r10 > best_r10:
                best_r10 = r10
                best = (params, state)
                best_epoch = epoch

    if best_epoch < 0:  # no validation pass happened; keep final weights
        best = (params, state)
        best_epoch = config.epochs - 1
    return TrainResult(best[0], best[1], trace, val_history, best_epoch,
                       aborted, final_params=params, final_state=state)


# ---------------------------------------------------------------------------
# Synthetic corpus
# ---------------------------------------------------------------------------

def generate_synthetic_corpus(n_pairs: int, latent_dim: int, video_dim: int,
                              music_dim: int, noise: float, seed: int,
                              out_dir: str,
                              split_sizes: tuple[int, int, int] | None = None
                              ) -> PairManifest:
    """Paired corpus: both modalities are seeded nonlinear images of a
    shared latent, plus per-modality noise.  Default split 80/10/10.
    """
    if min(n_pairs, latent_dim, video_dim, music_dim) < 1:
        raise ValueError("n_pairs and dims must be positive")
    if split_sizes is not None and sum(split_sizes) != n_pairs:
        raise ValueError(f"split_sizes {split_sizes} must sum to {n_pairs}")
    os.makedirs(out_dir, exist_ok=True)
    map_rng = np.random.default_rng((seed, 5))
    a_v = map_rng.standard_normal((video_dim, latent_dim)) / np.sqrt(latent_dim)
    a_m = map_rng.standard_normal((music_dim, latent_dim)) / np.sqrt(latent_dim)
    data_rng = np.random.default_rng((seed, 6))
    z = data_rng.standard_normal((n_pairs, latent_dim))
    v = np.tanh(z @ a_v.T) + noise * data_rng.standard_normal((n_pairs, video_dim))
    m = np.tanh(z @ a_m.T) + noise * data_rng.standard_normal((n_pairs, music_dim))

    if split_sizes is None:
        n_train = int(0.8 * n_pairs)
        n_val = int(0.1 * n_pairs)
        split_sizes = (n_train, n_val, n_pairs - n_train - n_val)
    bounds = np.cumsum(split_sizes)

    entries = []
    for i in range(n_pairs):
        split = SPLITS[int(np.searchsorted(bounds, i, side="right"))]
        vpath = os.path.join(out_dir, f"video_{i:05d}.vmnf")
        mpath = os.path.join(out_dir, f"music_{i:05d}.vmnf")
        formats.write_vmnf(vpath, v[i:i + 1])
        formats.write_vmnf(mpath, m[i:i + 1])
        entries.append(ManifestEntry(f"pair{i:05d}", vpath, mpath, split))
    manifest = PairManifest(tuple(entries))
    save_manifest(os.path.join(out_dir, "manifest.jsonl"), manifest)
    return manifest
