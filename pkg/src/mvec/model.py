"""Toy-scale embedding extractor and its deterministic training loop.

The encoder is deliberately small: per-frame affine transform + tanh,
mean pooling over time, affine projection to the embedding.  The point of
this package is the nested-prefix training objective and what it buys at
retrieval time, not backbone capacity, so the encoder stays just large
enough to give the loss something to shape.

Training is plain minibatch SGD with momentum, single-threaded, and a pure
function of (corpus, config): reruns match bit for bit.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .core import rng_for
from .errors import (
    ConfigError,
    DimensionError,
    EmptyInputError,
    FormatError,
    LabelError,
    TrainingDivergedError,
)
from .losses import MarginConfig, PrefixSchedule, mrl_combined_loss

MODE_BASELINE = "baseline"  # single head at the full dimension
MODE_MRL = "mrl"            # one head per scheduled prefix

CHECKPOINT_MAGIC = b"MVEC"
CHECKPOINT_VERSION = 1


@dataclass
class EncoderParams:
    frame_weights: np.ndarray  # (feat_dim, hidden_dim)
    frame_bias: np.ndarray     # (hidden_dim,)
    proj_weights: np.ndarray   # (hidden_dim, embed_dim)
    proj_bias: np.ndarray      # (embed_dim,)

    @property
    def feat_dim(self) -> int:
        return self.frame_weights.shape[0]

    @property
    def hidden_dim(self) -> int:
        return self.frame_weights.shape[1]

    @property
    def embed_dim(self) -> int:
        return self.proj_weights.shape[1]


@dataclass
class ClassifierHeads:
    """One linear head per scheduled prefix length, keyed by that length."""

    weights: dict[int, np.ndarray]  # m -> (num_speakers, m)

    def __post_init__(self):
        rows = {w.shape[0] for w in self.weights.values()}
        if len(rows) > 1:
            raise ConfigError(f"heads disagree on speaker count: {sorted(rows)}")
        for m, w in self.weights.items():
            if w.shape[1] != m:
                raise ConfigError(f"head keyed {m} has {w.shape[1]} columns")

    @property
    def num_speakers(self) -> int:
        return next(iter(self.weights.values())).shape[0]

    @property
    def dims(self) -> tuple[int, ...]:
        return tuple(sorted(self.weights))


@dataclass
class TrainConfig:
    epochs: int = 25
    batch_size: int = 64
    learn_rate: float = 0.2
    momentum: float = 0.9
    seed: int = 0
    hidden_dim: int = 64
    embed_dim: int = 64
    schedule: PrefixSchedule = None
    margin: MarginConfig = None

    def __post_init__(self):
        if self.schedule is None:
            self.schedule = PrefixSchedule((self.embed_dim,))
        if self.margin is None:
            self.margin = MarginConfig()
        if self.learn_rate < 0:
            # 0 is allowed: a no-op run is the cheapest way to check that
            # the update step, not the data path, is what moves parameters.
            raise ConfigError(f"learn_rate must be >= 0, got {self.learn_rate}")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        if not 0 <= self.momentum < 1:
            raise ConfigError(f"momentum must lie in [0, 1), got {self.momentum}")
        if self.schedule.full_dim != self.embed_dim:
            raise ConfigError(
                f"schedule ends at {self.schedule.full_dim}, embed_dim is {self.embed_dim}"
            )


def _xavier(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=(fan_in, fan_out))


def init_params(seed: int, feat_dim: int, hidden_dim: int, embed_dim: int,
                num_speakers: int, dims: tuple[int, ...]) -> tuple[EncoderParams, ClassifierHeads]:
    """Deterministic uniform Xavier init; biases zero.

    Draw order is fixed (encoder first, then heads in ascending prefix
    length) so the encoder init is identical across schedules sharing a
    seed — the baseline and nested-prefix systems start from the same
    extractor.
    """
    rng = rng_for(seed, "init")
    params = EncoderParams(
        frame_weights=_xavier(rng, feat_dim, hidden_dim),
        frame_bias=np.zeros(hidden_dim),
        proj_weights=_xavier(rng, hidden_dim, embed_dim),
        proj_bias=np.zeros(embed_dim),
    )
    heads = ClassifierHeads(
        {m: _xavier(rng, m, num_speakers).T.copy() for m in sorted(dims)}
    )
    return params, heads


def encode(params: EncoderParams, frames) -> np.ndarray:
    """Embed one utterance: frame transform -> tanh -> mean pool -> project."""
    x = np.asarray(frames, dtype=np.float64)
    if x.ndim != 2:
        raise DimensionError(f"frames must be (T, F), got shape {x.shape}")
    if x.shape[0] == 0:
        raise EmptyInputError("utterance has no frames")
    if x.shape[1] != params.feat_dim:
        raise DimensionError(f"frame width {x.shape[1]} != feat_dim {params.feat_dim}")
    hidden = np.tanh(x @ params.frame_weights + params.frame_bias)
    pooled = hidden.mean(axis=0)
    return pooled @ params.proj_weights + params.proj_bias


def encode_batch(params: EncoderParams, utterances: list[np.ndarray]) -> np.ndarray:
    """Embed a list of utterances as one stacked computation.

    Equivalent to ``np.stack([encode(params, u) for u in utterances])``
    but with the frame-level matmul batched across utterances.
    """
    if not utterances:
        raise EmptyInputError("no utterances to encode")
    lengths = np.array([u.shape[0] for u in utterances])
    if lengths.min() == 0:
        raise EmptyInputError("utterance has no frames")
    stacked = np.concatenate([np.asarray(u, dtype=np.float64) for u in utterances], axis=0)
    if stacked.shape[1] != params.feat_dim:
        raise DimensionError(f"frame width {stacked.shape[1]} != feat_dim {params.feat_dim}")
    hidden = np.tanh(stacked @ params.frame_weights + params.frame_bias)
    offsets = np.concatenate([[0], np.cumsum(lengths)[:-1]])
    pooled = np.add.reduceat(hidden, offsets, axis=0) / lengths[:, None]
    return pooled @ params.proj_weights + params.proj_bias


def _training_schedule(cfg: TrainConfig, mode: str) -> PrefixSchedule:
    if mode == MODE_BASELINE:
        return PrefixSchedule((cfg.embed_dim,))
    if mode == MODE_MRL:
        return cfg.schedule
    raise ConfigError(f"unknown training mode {mode!r}")


def train(corpus, cfg: TrainConfig, mode: str = MODE_MRL):
    """Minibatch SGD with momentum over the corpus train split.

    Returns ``(params, heads, history)`` where history holds one mean loss
    per epoch.  Raises :class:`TrainingDivergedError` naming the epoch if
    the loss goes non-finite.
    """
    schedule = _training_schedule(cfg, mode)
    train_ids = corpus.utt_ids(split="train")
    if train_ids.size == 0:
        raise EmptyInputError("corpus has no training utterances")
    labels = corpus.speaker_ids[train_ids].astype(np.int64)
    if labels.max() >= corpus.num_speakers:
        raise LabelError(
            f"corpus labels reach {labels.max()} but num_speakers is {corpus.num_speakers}"
        )
    features = [corpus.features[i] for i in train_ids]

    params, heads = init_params(cfg.seed, corpus.feat_dim, cfg.hidden_dim,
                                cfg.embed_dim, corpus.num_speakers, schedule.dims)
    velocity = {
        "frame_weights": np.zeros_like(params.frame_weights),
        "frame_bias": np.zeros_like(params.frame_bias),
        "proj_weights": np.zeros_like(params.proj_weights),
        "proj_bias": np.zeros_like(params.proj_bias),
    }
    head_velocity = {m: np.zeros_like(w) for m, w in heads.weights.items()}
    shuffle_rng = rng_for(cfg.seed, "shuffle")

    n = len(features)
    history = []
    for epoch in range(cfg.epochs):
        order = shuffle_rng.permutation(n)
        epoch_loss = 0.0
        for start in range(0, n, cfg.batch_size):
            batch_idx = order[start:start + cfg.batch_size]
            batch_feats = [features[i] for i in batch_idx]
            batch_labels = labels[batch_idx]

            grads, loss = _batch_gradients(params, heads, batch_feats, batch_labels,
                                           schedule, cfg.margin)
            if not np.isfinite(loss):
                raise TrainingDivergedError(epoch)
            epoch_loss += loss * len(batch_idx)

            for name, g in grads["encoder"].items():
                v = velocity[name]
                v *= cfg.momentum
                v -= cfg.learn_rate * g
                param = getattr(params, name)
                param += v  # ndarray iadd: updates the dataclass field in place
            for m, g in grads["heads"].items():
                v = head_velocity[m]
                v *= cfg.momentum
                v -= cfg.learn_rate * g
                heads.weights[m] += v
        history.append(epoch_loss / n)
    return params, heads, history


def _batch_gradients(params, heads, batch_feats, batch_labels, schedule, margin):
    """Forward + backward through encoder and loss for one minibatch."""
    lengths = np.array([f.shape[0] for f in batch_feats])
    stacked = np.concatenate([np.asarray(f, dtype=np.float64) for f in batch_feats], axis=0)
    pre = stacked @ params.frame_weights + params.frame_bias
    hidden = np.tanh(pre)
    offsets = np.concatenate([[0], np.cumsum(lengths)[:-1]])
    pooled = np.add.reduceat(hidden, offsets, axis=0) / lengths[:, None]
    embeddings = pooled @ params.proj_weights + params.proj_bias

    out = mrl_combined_loss(heads, embeddings, batch_labels, schedule, margin)

    g_pooled = out.grad_embeddings @ params.proj_weights.T
    g_proj_w = pooled.T @ out.grad_embeddings
    g_proj_b = out.grad_embeddings.sum(axis=0)
    # mean pooling spreads each utterance's gradient evenly over its frames
    g_hidden = np.repeat(g_pooled / lengths[:, None], lengths, axis=0)
    g_pre = g_hidden * (1.0 - hidden * hidden)
    g_frame_w = stacked.T @ g_pre
    g_frame_b = g_pre.sum(axis=0)

    grads = {
        "encoder": {
            "frame_weights": g_frame_w,
            "frame_bias": g_frame_b,
            "proj_weights": g_proj_w,
            "proj_bias": g_proj_b,
        },
        "heads": out.grad_heads,
    }
    return grads, out.value


# --- checkpoint format -----------------------------------------------------
#
# Little-endian throughout:
#   magic "MVEC", version u32, then matrices as (rows u32, cols u32,
#   float64 row-major payload) in this fixed order:
#     frame_weights (F, H), frame_bias (1, H),
#     proj_weights (H, d), proj_bias (1, d),
#     one head (num_speakers, m) per prefix length, ascending m.
# The reader consumes matrix records until EOF; the head count is implied.


def _write_matrix(fh, mat: np.ndarray):
    mat = np.atleast_2d(np.asarray(mat, dtype=np.float64))
    fh.write(struct.pack("<II", mat.shape[0], mat.shape[1]))
    fh.write(np.ascontiguousarray(mat, dtype="<f8").tobytes())


def _read_matrix(fh):
    header = fh.read(8)
    if not header:
        return None
    if len(header) != 8:
        raise FormatError("truncated matrix header in checkpoint")
    rows, cols = struct.unpack("<II", header)
    payload = fh.read(rows * cols * 8)
    if len(payload) != rows * cols * 8:
        raise FormatError("truncated matrix payload in checkpoint")
    return np.frombuffer(payload, dtype="<f8").reshape(rows, cols).astype(np.float64)


def save_checkpoint(path, params: EncoderParams, heads: ClassifierHeads):
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<I", CHECKPOINT_VERSION))
        _write_matrix(fh, params.frame_weights)
        _write_matrix(fh, params.frame_bias)
        _write_matrix(fh, params.proj_weights)
        _write_matrix(fh, params.proj_bias)
        for m in sorted(heads.weights):
            _write_matrix(fh, heads.weights[m])


def load_checkpoint(path) -> tuple[EncoderParams, ClassifierHeads]:
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != CHECKPOINT_MAGIC:
            raise FormatError(f"bad checkpoint magic {magic!r}")
        (version,) = struct.unpack("<I", fh.read(4))
        if version != CHECKPOINT_VERSION:
            raise FormatError(f"unsupported checkpoint version {version}")
        matrices = []
        while True:
            mat = _read_matrix(fh)
            if mat is None:
                break
            matrices.append(mat)
    if len(matrices) < 5:
        raise FormatError(f"checkpoint holds {len(matrices)} matrices, expected >= 5")
    frame_w, frame_b, proj_w, proj_b, *head_mats = matrices
    params = EncoderParams(frame_w, frame_b.ravel(), proj_w, proj_b.ravel())
    if frame_b.shape[1] != params.hidden_dim or proj_b.shape[1] != params.embed_dim:
        raise FormatError("checkpoint bias shapes inconsistent with weights")
    heads = ClassifierHeads({w.shape[1]: w for w in head_mats})
    if len(heads.weights) != len(head_mats):
        raise FormatError("checkpoint holds duplicate head dimensions")
    return params, heads
