"""Synthetic speaker corpus generation, trial lists, and their file formats.

The generative model is the smallest one that shows the structure speaker
verification needs: each speaker is a Gaussian cluster mean in feature
space, each utterance adds a per-utterance channel offset, and each frame
adds within-utterance noise.  Shrinking the spreads makes the task easier;
the defaults are tuned so a trained full-dimension system lands at a
nontrivial error rate.

Utterance ids are the utterance's position in corpus order (speaker-major,
generation order), and are what trial lists and embedding files refer to.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from .core import rng_for
from .errors import FormatError, GenerationError

SPLIT_TRAIN = 0
SPLIT_EVAL = 1
_SPLIT_CODES = {"train": SPLIT_TRAIN, "eval": SPLIT_EVAL}

CORPUS_MAGIC = b"MVFT"
CORPUS_VERSION = 1

TARGET = 1
NONTARGET = 0


@dataclass
class SyntheticCorpus:
    num_speakers: int
    feat_dim: int
    speaker_ids: np.ndarray        # (n,) uint32
    splits: np.ndarray             # (n,) uint8
    features: list[np.ndarray] = field(repr=False)  # (T, F) float32 each

    def __len__(self) -> int:
        return len(self.features)

    def utt_ids(self, split: str | None = None) -> np.ndarray:
        """Ids (corpus positions) of all utterances, optionally one split."""
        if split is None:
            return np.arange(len(self.features))
        return np.flatnonzero(self.splits == _SPLIT_CODES[split])


@dataclass
class TrialList:
    """Verification trials: (enroll_id, test_id, label) with label 1=target."""

    trials: list[tuple[int, int, int]]

    def __len__(self) -> int:
        return len(self.trials)

    def labels(self) -> np.ndarray:
        return np.array([t[2] for t in self.trials], dtype=np.int64)


def generate(num_speakers: int, utts_per_speaker: int, frames_per_utt: int,
             feat_dim: int, intra_spread: float, channel_spread: float,
             seed: int, eval_per_speaker: int = 2) -> SyntheticCorpus:
    """Deterministic Gaussian-cluster corpus.

    Speaker s draws mean mu_s ~ N(0, I); utterance u of s draws a channel
    offset c_u ~ N(0, channel_spread^2 I); frame t is
    mu_s + c_u + N(0, intra_spread^2 I).  The last ``eval_per_speaker``
    utterances of every speaker form the eval split, so every speaker
    appears in both splits.
    """
    if min(num_speakers, utts_per_speaker, frames_per_utt, feat_dim) < 1:
        raise GenerationError("all corpus counts must be >= 1")
    if intra_spread < 0 or channel_spread < 0:
        raise GenerationError("spreads must be >= 0")
    if not 1 <= eval_per_speaker < utts_per_speaker:
        raise GenerationError(
            f"eval_per_speaker must lie in [1, utts_per_speaker); got "
            f"{eval_per_speaker} of {utts_per_speaker}"
        )
    rng = rng_for(seed, "data")
    speaker_ids = []
    splits = []
    features = []
    n_train = utts_per_speaker - eval_per_speaker
    for s in range(num_speakers):
        mean = rng.standard_normal(feat_dim)
        for u in range(utts_per_speaker):
            offset = channel_spread * rng.standard_normal(feat_dim)
            noise = intra_spread * rng.standard_normal((frames_per_utt, feat_dim))
            frames = (mean + offset + noise).astype(np.float32)
            speaker_ids.append(s)
            splits.append(SPLIT_TRAIN if u < n_train else SPLIT_EVAL)
            features.append(frames)
    return SyntheticCorpus(
        num_speakers=num_speakers,
        feat_dim=feat_dim,
        speaker_ids=np.array(speaker_ids, dtype=np.uint32),
        splits=np.array(splits, dtype=np.uint8),
        features=features,
    )


def build_trials(corpus: SyntheticCorpus, targets_per_speaker: int,
                 nontargets_per_speaker: int, seed: int) -> TrialList:
    """Sample verification trials from the eval split.

    Per speaker: same-speaker pairs without replacement (target trials,
    never pairing an utterance with itself) and cross-speaker pairs
    without replacement (nontarget trials), each capped at what the eval
    split makes available.  Deterministic per seed.
    """
    rng = rng_for(seed, "trials")
    eval_ids = corpus.utt_ids("eval")
    per_speaker = {}
    for utt in eval_ids:
        per_speaker.setdefault(int(corpus.speaker_ids[utt]), []).append(int(utt))

    trials: list[tuple[int, int, int]] = []
    for s in sorted(per_speaker):
        own = per_speaker[s]
        if len(own) < 2:
            raise GenerationError(
                f"speaker {s} has {len(own)} eval utterance(s); need >= 2 for target trials"
            )
        pairs = [(a, b) for i, a in enumerate(own) for b in own[i + 1:]]
        take = min(targets_per_speaker, len(pairs))
        for idx in rng.choice(len(pairs), size=take, replace=False):
            a, b = pairs[idx]
            trials.append((a, b, TARGET))

        others = np.array([u for u in eval_ids if corpus.speaker_ids[u] != s])
        n_cross = len(own) * others.size
        take = min(nontargets_per_speaker, n_cross)
        for flat in rng.choice(n_cross, size=take, replace=False):
            a = own[flat // others.size]
            b = int(others[flat % others.size])
            trials.append((a, b, NONTARGET))

    labels = [t[2] for t in trials]
    if TARGET not in labels or NONTARGET not in labels:
        raise GenerationError("trial list must contain both target and nontarget trials")
    return TrialList(trials)


# --- feature file ------------------------------------------------------------
# magic "MVFT", version u32, num_utts u32, then per utterance:
#   speaker_id u32, split u8, T u32, F u32, float32 row-major frames.
# Little-endian throughout.


def save_corpus(path, corpus: SyntheticCorpus):
    with open(path, "wb") as fh:
        fh.write(CORPUS_MAGIC)
        fh.write(struct.pack("<II", CORPUS_VERSION, len(corpus.features)))
        for speaker, split, frames in zip(corpus.speaker_ids, corpus.splits,
                                          corpus.features):
            t, f = frames.shape
            fh.write(struct.pack("<IBII", int(speaker), int(split), t, f))
            fh.write(np.ascontiguousarray(frames, dtype="<f4").tobytes())


def load_corpus(path) -> SyntheticCorpus:
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != CORPUS_MAGIC:
            raise FormatError(f"bad feature-file magic {magic!r}")
        version, num_utts = struct.unpack("<II", _read_exact(fh, 8))
        if version != CORPUS_VERSION:
            raise FormatError(f"unsupported feature-file version {version}")
        speaker_ids = np.empty(num_utts, dtype=np.uint32)
        splits = np.empty(num_utts, dtype=np.uint8)
        features = []
        feat_dim = None
        for i in range(num_utts):
            speaker, split, t, f = struct.unpack("<IBII", _read_exact(fh, 13))
            if split not in (SPLIT_TRAIN, SPLIT_EVAL):
                raise FormatError(f"utterance {i} has unknown split code {split}")
            if feat_dim is None:
                feat_dim = f
            elif f != feat_dim:
                raise FormatError(f"utterance {i} width {f} != corpus width {feat_dim}")
            payload = _read_exact(fh, t * f * 4)
            speaker_ids[i] = speaker
            splits[i] = split
            features.append(np.frombuffer(payload, dtype="<f4").reshape(t, f).copy())
        if fh.read(1):
            raise FormatError("trailing bytes after last utterance")
    if num_utts == 0:
        raise FormatError("feature file holds no utterances")
    return SyntheticCorpus(
        num_speakers=int(speaker_ids.max()) + 1,
        feat_dim=int(feat_dim),
        speaker_ids=speaker_ids,
        splits=splits,
        features=features,
    )


def _read_exact(fh, n: int) -> bytes:
    data = fh.read(n)
    if len(data) != n:
        raise FormatError(f"truncated file: wanted {n} bytes, got {len(data)}")
    return data


# --- trial list file ---------------------------------------------------------
# One trial per line: enroll_id <TAB> test_id <TAB> {1|0}


def save_trials(path, trials: TrialList):
    with open(path, "w", encoding="ascii") as fh:
        for enroll, test, label in trials.trials:
            fh.write(f"{enroll}\t{test}\t{label}\n")


def load_trials(path) -> TrialList:
    out = []
    with open(path, "r", encoding="ascii") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 3 or parts[2] not in ("0", "1"):
                raise FormatError(f"trial file line {lineno} malformed: {line!r}")
            try:
                enroll, test = int(parts[0]), int(parts[1])
            except ValueError:
                raise FormatError(f"trial file line {lineno} malformed: {line!r}") from None
            if enroll == test:
                raise FormatError(f"trial file line {lineno} pairs an utterance with itself")
            out.append((enroll, test, int(parts[2])))
    if not out:
        raise FormatError("trial file holds no trials")
    return TrialList(out)
