"""Ensemble similarity combination and ranking metrics."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .alignment import AlignmentSet
from .selection import SimilarityView

log = logging.getLogger(__name__)


@dataclass
class EnsembleWeights:
    weights: list[float]

    def __post_init__(self):
        if abs(sum(self.weights) - 1.0) > 1e-9:
            raise ValueError("ensemble weights must sum to 1")


@dataclass
class RankingResult:
    ranks: dict[int, int]           # source id -> 1-based rank of its gold target
    metrics: dict[str, float]       # hits@k and mrr


def ensemble_weights(valid_scores: list[float]) -> EnsembleWeights:
    """Normalize per-aligner validation Hits@1 scores into ensemble weights.

    All-zero scores fall back to uniform weights.
    """
    if not valid_scores:
        raise ValueError("need at least one aligner score")
    if any(s < 0 for s in valid_scores):
        raise ValueError("validation scores must be nonnegative")
    total = float(sum(valid_scores))
    if total == 0.0:
        log.warning("all validation scores are zero; using uniform ensemble weights")
        return EnsembleWeights([1.0 / len(valid_scores)] * len(valid_scores))
    return EnsembleWeights([float(s) / total for s in valid_scores])


def ensemble_similarity(views: list[SimilarityView], weights: EnsembleWeights) -> SimilarityView:
    """Element-wise weighted sum of per-aligner similarity views."""
    if len(views) != len(weights.weights):
        raise ValueError("one weight per view required")
    base = views[0]
    for v in views[1:]:
        if v.sources != base.sources or v.targets != base.targets:
            raise ValueError("similarity views must share source/target orders")
        if v.values.shape != base.values.shape:
            raise ValueError("similarity views must share shapes")
    combined = np.zeros_like(base.values)
    for w, v in zip(weights.weights, views):
        combined += w * v.values
    return SimilarityView(list(base.sources), list(base.targets), combined)


def rank_and_score(view: SimilarityView, gold: AlignmentSet,
                   ks: tuple[int, ...] = (1, 5)) -> RankingResult:
    """Rank each gold source's target among all view targets.

    Ties are scored pessimistically: the gold target is placed after every
    competitor with an equal score.
    """
    ranks: dict[int, int] = {}
    for x, y in gold:
        row = view.values[view.source_index(x)]
        gold_score = row[view.target_index(y)]
        ranks[x] = int(np.sum(row >= gold_score))
    n = len(ranks)
    metrics: dict[str, float] = {}
    for k in sorted(ks):
        metrics[f"hits@{k}"] = sum(1 for r in ranks.values() if r <= k) / n if n else 0.0
    metrics["mrr"] = sum(1.0 / r for r in ranks.values()) / n if n else 0.0
    return RankingResult(ranks, metrics)


def hits_at_1(view: SimilarityView, gold: AlignmentSet) -> float:
    """Validation Hits@1: nearest-neighbor accuracy restricted to the view."""
    if len(gold) == 0:
        raise ValueError("empty gold alignment")
    return rank_and_score(view, gold, ks=(1,)).metrics["hits@1"]


def alignment_quality(proposed: AlignmentSet, gold: AlignmentSet,
                      eligible_gold: AlignmentSet | None = None,
                      ) -> tuple[float, float, float]:
    """Precision/recall/F1 of a proposed alignment against the gold one.

    Recall is measured against ``eligible_gold`` (gold pairs whose endpoints
    were available for proposal) when given, else against the full gold set.
    """
    if len(proposed) == 0:
        return (0.0, 0.0, 0.0)
    denom = eligible_gold if eligible_gold is not None else gold
    correct = sum(1 for p in proposed if p in gold)
    precision = correct / len(proposed)
    recall = correct / len(denom) if len(denom) else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return (precision, recall, f1)
