"""Classifier-agnostic per-speaker fusion.

Hard majority voting over predicted labels, soft averaging of class
probability distributions, and arithmetic pooling of per-utterance losses.
Tie handling is a policy argument: a severity screen should fail toward
the more severe (numerically lower) class by default.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

N_CLASSES = 5

TIE_SEVERE = "severe"
TIE_LEAST_SEVERE = "least-severe"


@dataclass(frozen=True)
class ClassDistribution:
    """Probabilities over the 5 severity classes, summing to 1."""

    probabilities: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.probabilities, dtype=np.float64)
        object.__setattr__(self, "probabilities", p)
        if p.shape != (N_CLASSES,):
            raise ValueError("need exactly 5 probabilities")
        if not np.all(np.isfinite(p)) or np.any(p < 0):
            raise ValueError("probabilities must be finite and non-negative")
        if abs(p.sum() - 1.0) > 1e-9:
            raise ValueError(f"probabilities sum to {p.sum()}, not 1")


@dataclass(frozen=True)
class VoteOutcome:
    winner: int
    counts: np.ndarray  # votes per class, index 0 = class 1
    was_tie: bool


def _pick(scores: np.ndarray, tie_policy: str) -> tuple[int, bool]:
    top = np.flatnonzero(scores == scores.max())
    if tie_policy == TIE_SEVERE:
        choice = top[0]
    elif tie_policy == TIE_LEAST_SEVERE:
        choice = top[-1]
    else:
        raise ValueError(f"unknown tie policy {tie_policy!r}")
    return int(choice) + 1, len(top) > 1


def majority_vote(labels, tie_policy: str = TIE_SEVERE) -> VoteOutcome:
    """Plurality winner over labels in 1..5."""
    labels = list(labels)
    if not labels:
        raise ValueError("no votes to count")
    counts = np.zeros(N_CLASSES, dtype=np.int64)
    for lab in labels:
        if not 1 <= lab <= N_CLASSES:
            raise ValueError(f"label {lab} outside 1..{N_CLASSES}")
        counts[lab - 1] += 1
    winner, was_tie = _pick(counts, tie_policy)
    return VoteOutcome(winner, counts, was_tie)


def average_probabilities(dists, tie_policy: str = TIE_SEVERE):
    """Elementwise mean of distributions, renormalized; returns the fused
    :class:`ClassDistribution` and its argmax label."""
    dists = list(dists)
    if not dists:
        raise ValueError("no distributions to average")
    stacked = np.vstack([d.probabilities for d in dists])
    mean = stacked.mean(axis=0)
    mean = mean / mean.sum()  # kill rounding drift
    label, _ = _pick(mean, tie_policy)
    return ClassDistribution(mean), label


def aggregate_speaker_loss(per_utterance_losses) -> float:
    """Arithmetic mean of a speaker's per-utterance losses."""
    losses = np.asarray(list(per_utterance_losses), dtype=np.float64)
    if losses.size == 0:
        raise ValueError("no losses to aggregate")
    if np.any(losses < 0) or not np.all(np.isfinite(losses)):
        raise ValueError("losses must be finite and non-negative")
    return float(losses.mean())
