"""Verification scoring, equal error rate, and the per-dimension sweep.

Scoring convention: a trial's score is the cosine between the two
embeddings truncated to the requested prefix length.  Truncation happens
before normalization (a truncated unit vector is no longer unit norm), and
the cosine handles the normalization itself.

EER convention: sweep all distinct scores as candidate thresholds with
FRR(t) = fraction of target scores < t and FAR(t) = fraction of nontarget
scores >= t (ties at the threshold count as accepts).  FAR - FRR is
non-increasing along the sweep; the EER is read off by linear
interpolation between the two adjacent sweep points where its sign flips.
A virtual endpoint (FAR 0, FRR 1) past the maximum score closes the sweep
when every score ties.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import NORM_EPS
from .errors import DegenerateInputError, DimensionError, EmptyInputError, IdLookupError
from . import data as _data

REPORT_HEADER = "system,dim,eer_percent,threshold"


@dataclass
class ScoreSet:
    target_scores: np.ndarray
    nontarget_scores: np.ndarray

    def __post_init__(self):
        self.target_scores = np.asarray(self.target_scores, dtype=np.float64)
        self.nontarget_scores = np.asarray(self.nontarget_scores, dtype=np.float64)


@dataclass
class DimensionSweepReport:
    """Rows of (system, prefix dim, EER percent, decision threshold)."""

    rows: list[tuple[str, int, float, float]]

    def to_csv(self) -> str:
        lines = [REPORT_HEADER]
        for system, dim, eer_pct, threshold in self.rows:
            lines.append(f"{system},{dim},{eer_pct:.6f},{threshold:.6f}")
        return "\n".join(lines) + "\n"


def score_trials(embeddings, trials: _data.TrialList, m: int) -> ScoreSet:
    """Cosine scores over prefix-truncated embeddings, split by trial label.

    ``embeddings`` maps utterance id -> full embedding vector.
    """
    if len(trials) == 0:
        raise EmptyInputError("empty trial list")
    for enroll, test, _ in trials.trials:
        if enroll not in embeddings:
            raise IdLookupError(f"no embedding for enroll utterance {enroll}")
        if test not in embeddings:
            raise IdLookupError(f"no embedding for test utterance {test}")
    dim = np.asarray(embeddings[trials.trials[0][0]]).shape[-1]
    if not 1 <= m <= dim:
        raise DimensionError(f"prefix {m} out of range [1, {dim}]")

    enroll_mat = np.stack([np.asarray(embeddings[a], dtype=np.float64)[:m]
                           for a, _, _ in trials.trials])
    test_mat = np.stack([np.asarray(embeddings[b], dtype=np.float64)[:m]
                         for _, b, _ in trials.trials])
    norms_a = np.linalg.norm(enroll_mat, axis=1)
    norms_b = np.linalg.norm(test_mat, axis=1)
    if min(norms_a.min(), norms_b.min()) < NORM_EPS:
        raise DegenerateInputError("trial embedding has a zero prefix at this dimension")
    scores = np.clip(np.einsum("ij,ij->i", enroll_mat, test_mat) / (norms_a * norms_b),
                     -1.0, 1.0)

    labels = trials.labels()
    return ScoreSet(target_scores=scores[labels == _data.TARGET],
                    nontarget_scores=scores[labels == _data.NONTARGET])


def compute_eer(scores: ScoreSet) -> tuple[float, float]:
    """Equal error rate and its threshold under the documented convention.

    Returns ``(eer, threshold)`` with eer as a fraction in [0, 1].
    """
    targets = scores.target_scores
    nontargets = scores.nontarget_scores
    if targets.size == 0 or nontargets.size == 0:
        raise EmptyInputError("EER needs at least one target and one nontarget score")
    if not (np.isfinite(targets).all() and np.isfinite(nontargets).all()):
        raise EmptyInputError("scores must be finite")

    thresholds = np.unique(np.concatenate([targets, nontargets]))
    sorted_t = np.sort(targets)
    sorted_n = np.sort(nontargets)
    frr = np.searchsorted(sorted_t, thresholds, side="left") / targets.size
    far = 1.0 - np.searchsorted(sorted_n, thresholds, side="left") / nontargets.size

    # Close the sweep past the max score: everything rejected.
    thresholds = np.append(thresholds, thresholds[-1] + 1.0)
    far = np.append(far, 0.0)
    frr = np.append(frr, 1.0)

    diff = far - frr  # non-increasing; starts at +1 (everything accepted)
    flip = int(np.argmax(diff <= 0.0))
    prev = flip - 1
    alpha = diff[prev] / (diff[prev] - diff[flip])
    eer = float(frr[prev] + alpha * (frr[flip] - frr[prev]))
    threshold = float(thresholds[prev] + alpha * (thresholds[flip] - thresholds[prev]))
    return eer, threshold


def dimension_sweep(systems, trials: _data.TrialList, dims) -> DimensionSweepReport:
    """One EER per (system, prefix dim).

    ``systems`` maps system name -> (utterance id -> embedding).  Rows are
    ordered by system name, then ascending dim, matching the CSV contract.
    """
    rows = []
    for name in sorted(systems):
        embeddings = systems[name]
        for m in sorted(dims):
            eer, threshold = compute_eer(score_trials(embeddings, trials, m))
            rows.append((name, int(m), 100.0 * eer, threshold))
    return DimensionSweepReport(rows)


def write_report(path, report: DimensionSweepReport):
    with open(path, "w", encoding="ascii", newline="") as fh:
        fh.write(report.to_csv())
