"""Margin-softmax classification losses over nested embedding prefixes.

Two losses live here, both with exact analytic gradients:

* :func:`aam_softmax_loss` — softmax cross-entropy over scaled cosine
  logits with an additive margin on the target class.  For weight row
  ``w_j`` and embedding ``e``, the non-target logit is
  ``scale * cos(w_j, e)`` and the target logit is
  ``scale * (cos(w_y, e) -/+ margin)``.  The margin is subtracted by
  default (a penalty, the standard convention); ``add_to_target``
  flips the sign for the reward variant.

* :func:`mrl_combined_loss` — a weighted sum of independent margin-softmax
  losses, one per prefix length m in a :class:`PrefixSchedule`, each with
  its own classifier head of shape (num_classes, m) applied to the first
  m coordinates of every embedding.  This is what makes every prefix of a
  trained embedding independently discriminative.

Gradients are derived through the cosine normalization, so callers feed
raw (unnormalized) embeddings.  Everything is float64 and pure:
identical inputs give bit-identical outputs.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import NORM_EPS, as_matrix, as_vector, normalize_rows
from .errors import (
    ConfigError,
    DegenerateInputError,
    DimensionError,
    EmptyInputError,
    LabelError,
)

SUBTRACT_FROM_TARGET = "subtract_from_target"
ADD_TO_TARGET = "add_to_target"


@dataclass(frozen=True)
class MarginConfig:
    """Scale and additive margin for the cosine logits.

    ``margin_sign`` selects whether the margin penalizes the target class
    (``subtract_from_target``, default) or rewards it (``add_to_target``).
    """

    scale: float = 8.0
    margin: float = 0.1
    margin_sign: str = SUBTRACT_FROM_TARGET

    def __post_init__(self):
        if not self.scale > 0:
            raise ConfigError(f"scale must be positive, got {self.scale}")
        if not abs(self.margin) < 1:
            raise ConfigError(f"|margin| must be < 1, got {self.margin}")
        if self.margin_sign not in (SUBTRACT_FROM_TARGET, ADD_TO_TARGET):
            raise ConfigError(f"unknown margin_sign {self.margin_sign!r}")

    @property
    def signed_margin(self) -> float:
        """Margin as added to the target cosine (negative in penalty mode)."""
        return -self.margin if self.margin_sign == SUBTRACT_FROM_TARGET else self.margin


@dataclass(frozen=True)
class PrefixSchedule:
    """Nested prefix lengths and their loss weights.

    ``dims`` must be strictly increasing and its last entry must equal the
    full embedding dimension of the model using the schedule.
    """

    dims: tuple[int, ...]
    weights: tuple[float, ...] = field(default=())

    def __post_init__(self):
        dims = tuple(int(m) for m in self.dims)
        weights = tuple(float(w) for w in self.weights) if self.weights else (1.0,) * len(dims)
        if not dims:
            raise ConfigError("schedule needs at least one prefix length")
        if any(m <= 0 for m in dims):
            raise ConfigError(f"prefix lengths must be positive: {dims}")
        if any(b <= a for a, b in zip(dims, dims[1:])):
            raise ConfigError(f"prefix lengths must be strictly increasing: {dims}")
        if len(weights) != len(dims):
            raise ConfigError(f"{len(weights)} weights for {len(dims)} prefix lengths")
        if any(w < 0 for w in weights):
            # Zero is allowed: it drops a term, which is how the tail-masking
            # property is probed; negatives would flip a loss into a reward.
            raise ConfigError(f"prefix weights must be >= 0: {weights}")
        object.__setattr__(self, "dims", dims)
        object.__setattr__(self, "weights", weights)

    @property
    def full_dim(self) -> int:
        return self.dims[-1]


@dataclass
class LossOutput:
    """Loss value plus gradients mirroring the parameter shapes.

    ``grad_heads`` maps each prefix length to the gradient of that head.
    """

    value: float
    grad_embeddings: np.ndarray
    grad_heads: dict[int, np.ndarray]


def _check_batch(weights: np.ndarray, embeddings: np.ndarray, labels: np.ndarray):
    if embeddings.shape[0] == 0:
        raise EmptyInputError("empty batch")
    if embeddings.shape[1] != weights.shape[1]:
        raise DimensionError(
            f"embedding dim {embeddings.shape[1]} != head dim {weights.shape[1]}"
        )
    num_classes = weights.shape[0]
    if labels.shape != (embeddings.shape[0],):
        raise DimensionError(f"labels shape {labels.shape} for batch of {embeddings.shape[0]}")
    if labels.min() < 0 or labels.max() >= num_classes:
        raise LabelError(
            f"labels must lie in [0, {num_classes}); got range "
            f"[{labels.min()}, {labels.max()}]"
        )


def _forward_backward(weights, embeddings, labels, cfg: MarginConfig):
    """Shared core: mean cross-entropy over margin-adjusted cosine logits.

    Returns (value, grad_embeddings, grad_weights).  Both gradients include
    the derivative of the cosine normalization, i.e. they are taken with
    respect to the *raw* rows of ``embeddings`` and ``weights``.
    """
    n = embeddings.shape[0]
    w_unit, w_norms = normalize_rows(weights)
    e_unit, e_norms = normalize_rows(embeddings)
    if w_norms.min() < NORM_EPS:
        raise DegenerateInputError("classifier head contains a zero row")
    if e_norms.min() < NORM_EPS:
        raise DegenerateInputError("batch contains a zero embedding")

    cos = e_unit @ w_unit.T  # (n, num_classes)
    rows = np.arange(n)
    logits = cfg.scale * cos
    logits[rows, labels] += cfg.scale * cfg.signed_margin

    shift = logits.max(axis=1, keepdims=True)
    log_z = np.log(np.exp(logits - shift).sum(axis=1, keepdims=True)) + shift
    log_prob = logits - log_z
    value = float(-log_prob[rows, labels].mean())

    # d(value)/d(logit_ij) = (softmax_ij - onehot_ij) / n; the additive
    # margin is constant in the parameters, so the chain continues through
    # the cosine alone with factor `scale`.
    g_logit = np.exp(log_prob)
    g_logit[rows, labels] -= 1.0
    g_logit *= cfg.scale / n

    # d cos(w, e)/d e = (w_unit - cos * e_unit) / ||e||, and symmetrically
    # for w; the sums below are those contractions batched.
    g_dot_cos_rows = (g_logit * cos).sum(axis=1)  # (n,)
    grad_e = (g_logit @ w_unit - g_dot_cos_rows[:, None] * e_unit) / e_norms[:, None]
    g_dot_cos_cols = (g_logit * cos).sum(axis=0)  # (num_classes,)
    grad_w = (g_logit.T @ e_unit - g_dot_cos_cols[:, None] * w_unit) / w_norms[:, None]
    return value, grad_e, grad_w


def aam_logits(weights, embedding, target: int, cfg: MarginConfig) -> np.ndarray:
    """Margin-adjusted cosine logits for a single embedding.

    Non-target class j gets ``scale * cos(w_j, e)``; the target class gets
    the margin applied according to ``cfg.margin_sign``.
    """
    w = as_matrix(weights, "weights")
    e = as_vector(embedding, "embedding")
    if e.size != w.shape[1]:
        raise DimensionError(f"embedding dim {e.size} != head dim {w.shape[1]}")
    if not 0 <= target < w.shape[0]:
        raise LabelError(f"target {target} out of range [0, {w.shape[0]})")
    w_unit, w_norms = normalize_rows(w)
    if w_norms.min() < NORM_EPS:
        raise DegenerateInputError("classifier head contains a zero row")
    e_norm = float(np.linalg.norm(e))
    if e_norm < NORM_EPS:
        raise DegenerateInputError("zero embedding")
    logits = cfg.scale * (w_unit @ (e / e_norm))
    logits[target] += cfg.scale * cfg.signed_margin
    return logits


def aam_softmax_loss(weights, embeddings, labels, cfg: MarginConfig) -> LossOutput:
    """Mean margin-softmax cross-entropy over a batch, with exact gradients.

    Args:
        weights: (num_classes, m) classifier head.
        embeddings: (n, m) batch of raw embeddings.
        labels: (n,) integer class ids.
        cfg: scale/margin configuration.

    Returns:
        LossOutput whose ``grad_heads`` holds the single head gradient
        keyed by its prefix length m.
    """
    w = as_matrix(weights, "weights")
    e = as_matrix(embeddings, "embeddings")
    y = np.asarray(labels, dtype=np.int64)
    _check_batch(w, e, y)
    value, grad_e, grad_w = _forward_backward(w, e, y, cfg)
    return LossOutput(value, grad_e, {w.shape[1]: grad_w})


def mrl_combined_loss(heads, embeddings, labels, schedule: PrefixSchedule,
                      cfg: MarginConfig) -> LossOutput:
    """Weighted sum of margin-softmax losses over every scheduled prefix.

    ``heads`` maps each prefix length m in the schedule to its
    (num_classes, m) head; embeddings must have the schedule's full
    dimension.  The embedding gradient for coordinate t accumulates
    contributions from every prefix with m > t, so leading coordinates
    are shaped by all prefixes and trailing ones only by the longer.
    """
    e = as_matrix(embeddings, "embeddings")
    y = np.asarray(labels, dtype=np.int64)
    head_arrays = _validated_heads(heads, schedule, e.shape[1])

    value = 0.0
    grad_e = np.zeros_like(e)
    grad_heads: dict[int, np.ndarray] = {}
    for m, weight in zip(schedule.dims, schedule.weights):
        w = head_arrays[m]
        _check_batch(w, e[:, :m], y)
        part_value, part_grad_e, part_grad_w = _forward_backward(w, e[:, :m], y, cfg)
        value += weight * part_value
        grad_e[:, :m] += weight * part_grad_e
        grad_heads[m] = weight * part_grad_w
    return LossOutput(value, grad_e, grad_heads)


def _validated_heads(heads, schedule: PrefixSchedule, embed_dim: int) -> dict[int, np.ndarray]:
    # Accepts either a plain {m: array} mapping or an object exposing one
    # via a `weights` attribute (the model's ClassifierHeads).
    mapping = getattr(heads, "weights", heads)
    if schedule.full_dim != embed_dim:
        raise ConfigError(
            f"schedule full dim {schedule.full_dim} != embedding dim {embed_dim}"
        )
    if set(mapping.keys()) != set(schedule.dims):
        raise ConfigError(
            f"heads for dims {sorted(mapping.keys())} do not match schedule {schedule.dims}"
        )
    out = {}
    num_classes = None
    for m in schedule.dims:
        w = as_matrix(mapping[m], f"head[{m}]")
        if w.shape[1] != m:
            raise ConfigError(f"head for prefix {m} has {w.shape[1]} columns")
        if num_classes is None:
            num_classes = w.shape[0]
        elif w.shape[0] != num_classes:
            raise ConfigError("heads disagree on the number of classes")
        out[m] = w
    return out
